/* tslint:disable */
/* eslint-disable */

export class Coverage {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly actions: Uint32Array;
    readonly edges: Float64Array;
    readonly routines: Uint32Array;
}

export class Rollout {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly goal: Float64Array;
    /**
     * Executed length of each routine.
     */
    readonly lengths: Uint32Array;
    /**
     * Positions `x0, y0, x1, y1, ...` including the start.
     */
    readonly path: Float64Array;
    readonly return: number;
}

/**
 * Speed histograms of uniform actions versus uniform routines decoded by an
 * untrained decoder.
 */
export function coverage(env: string, max_len: number, episodes: number, bins: number, seed: bigint): Coverage;

/**
 * `p(l)` for `l = 1..=e.len()+1`.
 */
export function length_distribution(e: Float64Array): Float64Array;

/**
 * One point_reach episode where every query draws a uniform routine and
 * an untrained decoder turns it into actions and a sampled length.
 */
export function rollout(max_len: number, seed: bigint): Rollout;

/**
 * Empirical length frequencies from `draws` samples.
 */
export function sampled_lengths(e: Float64Array, draws: number, seed: bigint): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_coverage_free: (a: number, b: number) => void;
    readonly __wbg_rollout_free: (a: number, b: number) => void;
    readonly coverage: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number];
    readonly coverage_actions: (a: number) => [number, number];
    readonly coverage_edges: (a: number) => [number, number];
    readonly coverage_routines: (a: number) => [number, number];
    readonly length_distribution: (a: number, b: number) => [number, number, number, number];
    readonly rollout: (a: number, b: bigint) => [number, number, number];
    readonly rollout_goal: (a: number) => [number, number];
    readonly rollout_lengths: (a: number) => [number, number];
    readonly rollout_path: (a: number) => [number, number];
    readonly rollout_return: (a: number) => number;
    readonly sampled_lengths: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
