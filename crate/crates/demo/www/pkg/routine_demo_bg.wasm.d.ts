/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_coverage_free: (a: number, b: number) => void;
export const __wbg_rollout_free: (a: number, b: number) => void;
export const coverage: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number];
export const coverage_actions: (a: number) => [number, number];
export const coverage_edges: (a: number) => [number, number];
export const coverage_routines: (a: number) => [number, number];
export const length_distribution: (a: number, b: number) => [number, number, number, number];
export const rollout: (a: number, b: bigint) => [number, number, number];
export const rollout_goal: (a: number) => [number, number];
export const rollout_lengths: (a: number) => [number, number];
export const rollout_path: (a: number) => [number, number];
export const rollout_return: (a: number) => number;
export const sampled_lengths: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
