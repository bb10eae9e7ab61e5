//! Policy, critic, routine decoder and routine encoder networks.
//!
//! Batched tensors keep one row per sample. Action blocks are laid out as
//! `[B, L·|a|]`, position-major inside each row (`a_1, a_2, …, a_L`).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::diff::{BoundParams, Graph, ParameterSet, Tensor, Var};
use crate::error::{Error, Result};

/// Lower bound added to every decoder standard deviation.
pub const STD_FLOOR: f64 = 1e-4;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Sizes of the routine space and of the decoder/encoder layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoutineSpaceSpec {
    /// Maximum routine length `L`.
    pub max_len: usize,
    pub action_dim: usize,
    /// `|n| = L·|a|`.
    pub routine_dim: usize,
    /// `|h| = 2^⌈log₂|a|⌉`.
    pub hidden_dim: usize,
    /// `|g| = L·|h|`.
    pub aggregate_dim: usize,
}

impl RoutineSpaceSpec {
    pub fn new(max_len: usize, action_dim: usize) -> Result<Self> {
        if max_len == 0 || action_dim == 0 {
            return Err(Error::config(format!(
                "routine space needs L >= 1 and |a| >= 1 (got L={max_len}, |a|={action_dim})"
            )));
        }
        let hidden_dim = action_dim.next_power_of_two();
        Ok(RoutineSpaceSpec {
            max_len,
            action_dim,
            routine_dim: max_len * action_dim,
            hidden_dim,
            aggregate_dim: max_len * hidden_dim,
        })
    }

    /// Width of a flattened full-length action block.
    pub fn block_dim(&self) -> usize {
        self.max_len * self.action_dim
    }
}

/// A variable-length sequence of primitive actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSequence {
    pub actions: Vec<Vec<f64>>,
}

impl ActionSequence {
    pub fn new(actions: Vec<Vec<f64>>) -> Self {
        ActionSequence { actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Zero-padded `[1, L·|a|]` block.
    pub fn to_block(&self, spec: &RoutineSpaceSpec) -> Result<Tensor> {
        let l = self.len();
        if l == 0 || l > spec.max_len {
            return Err(Error::usage(format!(
                "sequence length {l} outside 1..={}",
                spec.max_len
            )));
        }
        let mut d = vec![0.0; spec.block_dim()];
        for (j, a) in self.actions.iter().enumerate() {
            if a.len() != spec.action_dim {
                return Err(Error::config(format!(
                    "action {j} has {} components, expected {}",
                    a.len(),
                    spec.action_dim
                )));
            }
            d[j * spec.action_dim..(j + 1) * spec.action_dim].copy_from_slice(a);
        }
        Ok(Tensor::row(d))
    }
}

/// Output activation of an [`Mlp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Tanh,
}

/// Fully connected network with ReLU hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    output: OutputActivation,
    pub params: ParameterSet,
}

impl Mlp {
    pub fn new(sizes: &[usize], output: OutputActivation, rng: &mut impl Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::config(format!("invalid layer sizes {sizes:?}")));
        }
        let mut params = ParameterSet::new();
        for (i, w) in sizes.windows(2).enumerate() {
            params.insert_linear(&format!("l{i}"), w[0], w[1], rng)?;
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            output,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn forward<'g>(&self, p: &BoundParams<'g>, x: Var<'g>) -> Result<Var<'g>> {
        if x.cols() != self.input_dim() {
            return Err(Error::config(format!(
                "network expects {} inputs, got shape {:?}",
                self.input_dim(),
                x.shape()
            )));
        }
        let layers = self.sizes.len() - 1;
        let mut h = x;
        for i in 0..layers {
            h = h.affine(p.get(&format!("l{i}.w")), p.get(&format!("l{i}.b")))?;
            if i + 1 < layers {
                h = h.relu();
            }
        }
        Ok(match self.output {
            OutputActivation::Identity => h,
            OutputActivation::Tanh => h.tanh(),
        })
    }

    /// Convenience forward pass on plain rows, without gradients.
    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        let g = Graph::new();
        let p = self.params.bind(&g, false);
        Ok((*self.forward(&p, g.constant(x.clone()))?.value()).clone())
    }
}

/// Critic input `[s, n]`.
pub fn q_forward<'g>(q: &Mlp, p: &BoundParams<'g>, s: Var<'g>, n: Var<'g>) -> Result<Var<'g>> {
    q.forward(p, Var::concat_cols(&[s, n])?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderKind {
    /// One point action per slot.
    Deterministic,
    /// Independent Gaussian per slot.
    Gaussian,
}

/// Decoder output for a batch of routines.
#[derive(Clone)]
pub struct DecoderOutput<'g> {
    /// `[B, L·|a|]`, tanh-bounded actions or Gaussian means.
    pub actions: Var<'g>,
    /// `[B, L·|a|]`, Gaussian variant only.
    pub std: Option<Var<'g>>,
    /// `[B, L−1]` termination logits.
    pub term_logits: Var<'g>,
}

impl<'g> DecoderOutput<'g> {
    /// `[B, L−1]` termination probabilities `e_j`.
    pub fn term_probs(&self) -> Var<'g> {
        self.term_logits.sigmoid()
    }
}

/// Routine decoder: a shared first layer split into `L` slots of width
/// `|h|`, followed by one per-slot layer emitting an action (or Gaussian
/// parameters) and a termination logit.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    spec: RoutineSpaceSpec,
    kind: DecoderKind,
    pub params: ParameterSet,
}

impl Decoder {
    pub fn new(spec: RoutineSpaceSpec, kind: DecoderKind, rng: &mut impl Rng) -> Result<Self> {
        let mut params = ParameterSet::new();
        params.insert_linear("l1", spec.routine_dim, spec.max_len * spec.hidden_dim, rng)?;
        params.insert_linear("l2", spec.hidden_dim, Self::slot_width(&spec, kind), rng)?;
        Ok(Decoder { spec, kind, params })
    }

    fn slot_width(spec: &RoutineSpaceSpec, kind: DecoderKind) -> usize {
        match kind {
            DecoderKind::Deterministic => spec.action_dim + 1,
            DecoderKind::Gaussian => 2 * spec.action_dim + 1,
        }
    }

    pub fn spec(&self) -> &RoutineSpaceSpec {
        &self.spec
    }

    pub fn kind(&self) -> DecoderKind {
        self.kind
    }

    pub fn forward<'g>(&self, p: &BoundParams<'g>, n: Var<'g>) -> Result<DecoderOutput<'g>> {
        let s = &self.spec;
        if n.cols() != s.routine_dim {
            return Err(Error::config(format!(
                "decoder expects routines of width {}, got shape {:?}",
                s.routine_dim,
                n.shape()
            )));
        }
        let b = n.rows();
        let (l, a) = (s.max_len, s.action_dim);
        let h = n.affine(p.get("l1.w"), p.get("l1.b"))?.tanh();
        let slots = h.reshape(&[b * l, s.hidden_dim])?;
        let out = slots.affine(p.get("l2.w"), p.get("l2.b"))?;
        let width = Self::slot_width(s, self.kind);
        let actions = out.slice_cols(0, a)?.tanh().reshape(&[b, l * a])?;
        let std = match self.kind {
            DecoderKind::Deterministic => None,
            DecoderKind::Gaussian => Some(
                out.slice_cols(a, 2 * a)?
                    .softplus()
                    .add_scalar(STD_FLOOR)
                    .reshape(&[b, l * a])?,
            ),
        };
        let term_logits = out
            .slice_cols(width - 1, width)?
            .reshape(&[b, l])?
            .slice_cols(0, l - 1)?;
        Ok(DecoderOutput {
            actions,
            std,
            term_logits,
        })
    }
}

/// Routine encoder: per-action embedding, index-specific aggregation by
/// summation, and a final projection to the routine space.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    spec: RoutineSpaceSpec,
    pub params: ParameterSet,
}

impl Encoder {
    pub fn new(spec: RoutineSpaceSpec, rng: &mut impl Rng) -> Result<Self> {
        let mut params = ParameterSet::new();
        params.insert_linear("l1", spec.action_dim, spec.hidden_dim, rng)?;
        // Rows j·|h|..(j+1)·|h| hold the weights for position j.
        let bound = 1.0 / (spec.hidden_dim as f64).sqrt();
        let w2: Vec<f64> = (0..spec.max_len * spec.hidden_dim * spec.aggregate_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        params.insert(
            "l2.w",
            Tensor::matrix(spec.max_len * spec.hidden_dim, spec.aggregate_dim, w2),
        )?;
        let b2: Vec<f64> = (0..spec.aggregate_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        params.insert("l2.b", Tensor::row(b2))?;
        params.insert_linear("l3", spec.aggregate_dim, spec.routine_dim, rng)?;
        Ok(Encoder { spec, params })
    }

    pub fn spec(&self) -> &RoutineSpaceSpec {
        &self.spec
    }

    fn embed<'g>(&self, p: &BoundParams<'g>, actions: Var<'g>) -> Result<Var<'g>> {
        let s = &self.spec;
        if actions.cols() != s.block_dim() {
            return Err(Error::config(format!(
                "encoder expects action blocks of width {}, got shape {:?}",
                s.block_dim(),
                actions.shape()
            )));
        }
        let b = actions.rows();
        actions
            .reshape(&[b * s.max_len, s.action_dim])?
            .affine(p.get("l1.w"), p.get("l1.b"))?
            .tanh()
            .reshape(&[b, s.max_len * s.hidden_dim])
    }

    fn contribution<'g>(&self, p: &BoundParams<'g>, emb: Var<'g>, j: usize) -> Result<Var<'g>> {
        let h = self.spec.hidden_dim;
        let w = p.get("l2.w").slice_rows(j * h, (j + 1) * h)?;
        emb.slice_cols(j * h, (j + 1) * h)?.matmul(w)
    }

    fn project<'g>(&self, p: &BoundParams<'g>, aggregate: Var<'g>) -> Result<Var<'g>> {
        aggregate
            .add_bias(p.get("l2.b"))?
            .tanh()
            .affine(p.get("l3.w"), p.get("l3.b"))
            .map(|v| v.tanh())
    }

    /// Encodes each row's first `lengths[b]` actions; later positions are
    /// ignored.
    pub fn forward<'g>(
        &self,
        p: &BoundParams<'g>,
        actions: Var<'g>,
        lengths: &[usize],
    ) -> Result<Var<'g>> {
        let b = actions.rows();
        if lengths.len() != b {
            return Err(Error::config(format!(
                "{} lengths for {b} action rows",
                lengths.len()
            )));
        }
        if let Some(&bad) = lengths.iter().find(|&&l| l == 0 || l > self.spec.max_len) {
            return Err(Error::usage(format!(
                "sequence length {bad} outside 1..={}",
                self.spec.max_len
            )));
        }
        let g = actions.graph();
        let emb = self.embed(p, actions)?;
        let longest = *lengths.iter().max().unwrap_or(&1);
        let mut total: Option<Var<'g>> = None;
        for j in 0..longest {
            let mut c = self.contribution(p, emb, j)?;
            if lengths.iter().any(|&l| l <= j) {
                let mask: Vec<f64> = lengths.iter().map(|&l| if j < l { 1.0 } else { 0.0 }).collect();
                c = c.mul_col(g.constant(Tensor::matrix(b, 1, mask)))?;
            }
            total = Some(match total {
                None => c,
                Some(t) => t.add(c)?,
            });
        }
        self.project(p, total.expect("at least one position"))
    }

    /// Routines of every prefix `a_{1:1}, …, a_{1:L}` from one running sum.
    pub fn forward_all_prefixes<'g>(
        &self,
        p: &BoundParams<'g>,
        actions: Var<'g>,
    ) -> Result<Vec<Var<'g>>> {
        let emb = self.embed(p, actions)?;
        let mut out = Vec::with_capacity(self.spec.max_len);
        let mut running: Option<Var<'g>> = None;
        for j in 0..self.spec.max_len {
            let c = self.contribution(p, emb, j)?;
            let r = match running {
                None => c,
                Some(prev) => prev.add(c)?,
            };
            running = Some(r);
            out.push(self.project(p, r)?);
        }
        Ok(out)
    }

    /// Encodes a single sequence without gradients.
    pub fn encode_sequence(&self, seq: &ActionSequence) -> Result<Vec<f64>> {
        let block = seq.to_block(&self.spec)?;
        let g = Graph::new();
        let p = self.params.bind(&g, false);
        let n = self.forward(&p, g.constant(block), &[seq.len()])?;
        let out = n.value().data().to_vec();
        Ok(out)
    }
}

/// Length probabilities `p(l)` for `l = 1..=L` given `e_1..e_{L−1}`.
pub fn length_distribution(term_probs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(term_probs.len() + 1);
    let mut survive = 1.0;
    for &e in term_probs {
        out.push(survive * e);
        survive *= 1.0 - e;
    }
    out.push(survive);
    out
}

/// Length from uniforms: the first `j` with `u_j < e_j`, otherwise `L`.
pub fn length_from_uniforms(term_probs: &[f64], uniforms: &[f64]) -> usize {
    term_probs
        .iter()
        .zip(uniforms)
        .position(|(e, u)| u < e)
        .map(|j| j + 1)
        .unwrap_or(term_probs.len() + 1)
}

/// Samples a routine length by sequential coin flips.
pub fn sample_length(term_probs: &[f64], rng: &mut impl Rng) -> usize {
    for (j, &e) in term_probs.iter().enumerate() {
        if rng.gen::<f64>() < e {
            return j + 1;
        }
    }
    term_probs.len() + 1
}

/// Evaluation-time length: the first `j` with `e_j > 0.5`, otherwise `L`.
pub fn deterministic_length(term_probs: &[f64]) -> usize {
    term_probs
        .iter()
        .position(|&e| e > 0.5)
        .map(|j| j + 1)
        .unwrap_or(term_probs.len() + 1)
}

/// Frozen randomness for decoding a batch of routines.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeNoise {
    /// `[B, L−1]` uniforms for the termination coin flips.
    pub length_uniforms: Tensor,
    /// `[B, L·|a|]` standard normals (Gaussian decoder only).
    pub eps: Option<Tensor>,
}

impl DecodeNoise {
    pub fn sample(rows: usize, spec: &RoutineSpaceSpec, gaussian: bool, rng: &mut impl Rng) -> Self {
        let l = spec.max_len;
        let u: Vec<f64> = (0..rows * (l - 1)).map(|_| rng.gen::<f64>()).collect();
        let eps = gaussian.then(|| {
            let d: Vec<f64> = (0..rows * spec.block_dim())
                .map(|_| rng.sample(StandardNormal))
                .collect();
            Tensor::matrix(rows, spec.block_dim(), d)
        });
        DecodeNoise {
            length_uniforms: Tensor::matrix(rows, l - 1, u),
            eps,
        }
    }

    /// Noise that always yields full-length, mean actions.
    pub fn none(rows: usize, spec: &RoutineSpaceSpec) -> Self {
        DecodeNoise {
            length_uniforms: Tensor::full(&[rows, spec.max_len - 1], 1.0),
            eps: None,
        }
    }

    pub fn rows(&self) -> usize {
        self.length_uniforms.rows()
    }

    pub fn row(&self, r: usize) -> DecodeNoise {
        DecodeNoise {
            length_uniforms: Tensor::row(self.length_uniforms.row_slice(r).to_vec()),
            eps: self.eps.as_ref().map(|e| Tensor::row(e.row_slice(r).to_vec())),
        }
    }
}

/// A sampled decode of a routine batch.
pub struct Decoded<'g> {
    pub output: DecoderOutput<'g>,
    pub lengths: Vec<usize>,
    /// `[B, L·|a|]` sample before clamping (means for the deterministic
    /// decoder or when no Gaussian noise was supplied).
    pub pre_clamp: Var<'g>,
    /// `[B, L·|a|]` executable actions in `[−1, 1]`.
    pub actions: Var<'g>,
}

/// Decodes routines and samples lengths and actions from frozen noise.
pub fn decode_with_noise<'g>(
    decoder: &Decoder,
    p: &BoundParams<'g>,
    n: Var<'g>,
    noise: &DecodeNoise,
) -> Result<Decoded<'g>> {
    let output = decoder.forward(p, n)?;
    let b = n.rows();
    if noise.rows() != b {
        return Err(Error::config(format!(
            "decode noise has {} rows for {b} routines",
            noise.rows()
        )));
    }
    let probs = output.term_probs().value();
    let lengths: Vec<usize> = (0..b)
        .map(|r| length_from_uniforms(probs.row_slice(r), noise.length_uniforms.row_slice(r)))
        .collect();
    let pre_clamp = match (&output.std, &noise.eps) {
        (Some(std), Some(eps)) => {
            let e = n.graph().constant(eps.clone());
            output.actions.add(std.mul(e)?)?
        }
        _ => output.actions,
    };
    let actions = match output.std {
        Some(_) => pre_clamp.clamp(-1.0, 1.0),
        None => pre_clamp,
    };
    Ok(Decoded {
        output,
        lengths,
        pre_clamp,
        actions,
    })
}

/// `[B, 1]` log-probability of each row's length under the termination
/// logits: `Σ_{j<l} log(1−e_j) + [l<L]·log e_l`.
pub fn length_log_prob<'g>(term_logits: Var<'g>, lengths: &[usize]) -> Result<Var<'g>> {
    let (b, lm1) = (term_logits.rows(), term_logits.cols());
    if lengths.len() != b {
        return Err(Error::config("length_log_prob: one length per row required"));
    }
    let g = term_logits.graph();
    let mut survive = vec![0.0; b * lm1];
    let mut stop = vec![0.0; b * lm1];
    for (r, &l) in lengths.iter().enumerate() {
        if l == 0 || l > lm1 + 1 {
            return Err(Error::usage(format!("length {l} outside 1..={}", lm1 + 1)));
        }
        for j in 0..l - 1 {
            survive[r * lm1 + j] = 1.0;
        }
        if l <= lm1 {
            stop[r * lm1 + l - 1] = 1.0;
        }
    }
    // log(1 − σ(x)) = −softplus(x), log σ(x) = −softplus(−x)
    let log_continue = term_logits.softplus().neg();
    let log_stop = term_logits.neg().softplus().neg();
    let a = log_continue.mul(g.constant(Tensor::matrix(b, lm1, survive)))?;
    let s = log_stop.mul(g.constant(Tensor::matrix(b, lm1, stop)))?;
    Ok(a.add(s)?.sum_cols())
}

/// `[B, 1]` log-density of decoded sequences: length term plus independent
/// Gaussian terms for the first `l` actions, on the pre-clamp sample.
pub fn sequence_log_prob<'g>(decoded: &Decoded<'g>) -> Result<Var<'g>> {
    let out = &decoded.output;
    let std = out
        .std
        .ok_or_else(|| Error::usage("sequence_log_prob needs a Gaussian decoder"))?;
    let g = std.graph();
    let (b, width) = (std.rows(), std.cols());
    let a = width / (out.term_logits.cols() + 1);
    let mut mask = vec![0.0; b * width];
    for (r, &l) in decoded.lengths.iter().enumerate() {
        mask[r * width..r * width + l * a].iter_mut().for_each(|m| *m = 1.0);
    }
    let log_std = std.log();
    let z = decoded
        .pre_clamp
        .sub(out.actions)?
        .mul(log_std.neg().exp())?;
    let log_n = z
        .square()
        .scale(-0.5)
        .sub(log_std)?
        .add_scalar(-HALF_LN_2PI)
        .mul(g.constant(Tensor::matrix(b, width, mask)))?
        .sum_cols();
    length_log_prob(out.term_logits, &decoded.lengths)?.add(log_n)
}

/// Single-sample entropy estimate normalised by executed length.
pub fn per_action_entropy(log_prob: f64, len: usize) -> Result<f64> {
    if len == 0 {
        return Err(Error::usage("per-action entropy of an empty sequence"));
    }
    Ok(-log_prob / len as f64)
}

/// All networks of a routine agent.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutineNets {
    pub spec: RoutineSpaceSpec,
    pub state_dim: usize,
    pub policy: Mlp,
    pub decoder: Decoder,
    pub encoder: Encoder,
    pub critics: [Mlp; 2],
    pub target_critics: [Mlp; 2],
}

impl RoutineNets {
    /// Builds every network; targets start as exact copies of the critics.
    pub fn new(
        state_dim: usize,
        spec: RoutineSpaceSpec,
        hidden: usize,
        kind: DecoderKind,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let n = spec.routine_dim;
        let policy = Mlp::new(&[state_dim, hidden, hidden, n], OutputActivation::Tanh, rng)?;
        let decoder = Decoder::new(spec, kind, rng)?;
        let encoder = Encoder::new(spec, rng)?;
        let mut critic =
            || Mlp::new(&[state_dim + n, hidden, hidden, 1], OutputActivation::Identity, rng);
        let critics = [critic()?, critic()?];
        let target_critics = [critics[0].clone(), critics[1].clone()];
        Ok(RoutineNets {
            spec,
            state_dim,
            policy,
            decoder,
            encoder,
            critics,
            target_critics,
        })
    }

    /// `π(s)` for plain rows.
    pub fn policy_routines(&self, states: &Tensor) -> Result<Tensor> {
        self.policy.eval(states)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn dimensionality_rules() {
        let s = RoutineSpaceSpec::new(4, 2).unwrap();
        assert_eq!((s.routine_dim, s.hidden_dim, s.aggregate_dim), (8, 2, 8));
        let s = RoutineSpaceSpec::new(2, 3).unwrap();
        assert_eq!((s.routine_dim, s.hidden_dim, s.aggregate_dim), (6, 4, 8));
        assert!(RoutineSpaceSpec::new(0, 2).is_err());
    }

    #[test]
    fn decoder_shapes_and_ranges() {
        let spec = RoutineSpaceSpec::new(4, 2).unwrap();
        let dec = Decoder::new(spec, DecoderKind::Deterministic, &mut rng()).unwrap();
        let g = Graph::new();
        let p = dec.params.bind(&g, false);
        let n = g.constant(Tensor::matrix(3, 8, (0..24).map(|i| (i as f64 * 0.37).sin()).collect()));
        let out = dec.forward(&p, n).unwrap();
        assert_eq!(out.actions.shape(), vec![3, 8]);
        assert_eq!(out.term_logits.shape(), vec![3, 3]);
        assert!(out.term_probs().value().data().iter().all(|&e| e > 0.0 && e < 1.0));
        assert!(out.actions.value().data().iter().all(|&a| a.abs() <= 1.0));
        let again = dec.forward(&p, n).unwrap();
        assert_eq!(out.actions.value(), again.actions.value());
        assert!(dec.forward(&p, g.constant(Tensor::zeros(&[1, 7]))).is_err());
    }

    #[test]
    fn gaussian_std_is_floored() {
        let spec = RoutineSpaceSpec::new(3, 1).unwrap();
        let mut dec = Decoder::new(spec, DecoderKind::Gaussian, &mut rng()).unwrap();
        // Push the std pre-activations very negative.
        let mut b = dec.params.get("l2.b").unwrap().clone();
        b.set(0, 1, -800.0);
        dec.params.set("l2.b", b).unwrap();
        let g = Graph::new();
        let p = dec.params.bind(&g, false);
        let out = dec.forward(&p, g.constant(Tensor::zeros(&[2, 3]))).unwrap();
        assert!(out.std.unwrap().value().data().iter().all(|&s| s >= STD_FLOOR));
    }

    #[test]
    fn length_rules() {
        assert_eq!(deterministic_length(&[0.9, 0.1, 0.1]), 1);
        assert_eq!(deterministic_length(&[0.2, 0.4, 0.1]), 4);
        assert_eq!(length_from_uniforms(&[1.0 - 1e-12, 0.5], &[0.3, 0.0]), 1);
        assert_eq!(length_from_uniforms(&[1e-12; 3], &[0.1, 0.2, 0.3]), 4);
        assert_eq!(deterministic_length(&[]), 1);
        let p = length_distribution(&[0.5, 0.5]);
        assert_eq!(p, vec![0.5, 0.25, 0.25]);
    }

    #[test]
    fn encoder_shapes_and_errors() {
        let spec = RoutineSpaceSpec::new(4, 2).unwrap();
        let enc = Encoder::new(spec, &mut rng()).unwrap();
        for l in 1..=4 {
            let seq = ActionSequence::new(vec![vec![0.3, -0.5]; l]);
            assert_eq!(enc.encode_sequence(&seq).unwrap().len(), 8);
        }
        let too_long = ActionSequence::new(vec![vec![0.0, 0.0]; 5]);
        assert!(matches!(enc.encode_sequence(&too_long), Err(Error::Usage(_))));
        let empty = ActionSequence::new(vec![]);
        assert!(matches!(enc.encode_sequence(&empty), Err(Error::Usage(_))));
    }

    #[test]
    fn encoder_is_order_sensitive() {
        let spec = RoutineSpaceSpec::new(4, 2).unwrap();
        let enc = Encoder::new(spec, &mut rng()).unwrap();
        let a = ActionSequence::new(vec![vec![0.5, -0.2], vec![-0.7, 0.9]]);
        let b = ActionSequence::new(vec![vec![-0.7, 0.9], vec![0.5, -0.2]]);
        assert_ne!(enc.encode_sequence(&a).unwrap(), enc.encode_sequence(&b).unwrap());
        assert_eq!(enc.encode_sequence(&a).unwrap(), enc.encode_sequence(&a).unwrap());
    }

    #[test]
    fn log_prob_at_mean_unit_std() {
        // |a| = 1, L = 2, e_1 → 0 so l = 2 is certain; one Gaussian term
        // per action at its mean with σ ≈ 1.
        let g = Graph::new();
        let logits = g.constant(Tensor::matrix(1, 1, vec![-60.0]));
        let lp = length_log_prob(logits, &[2]).unwrap().value().item();
        assert!(lp.abs() < 1e-20);
        let logits = g.constant(Tensor::matrix(1, 2, vec![0.0, 0.0]));
        let lp = length_log_prob(logits, &[2]).unwrap().value().item();
        assert!((lp - 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn per_action_entropy_cases() {
        assert_eq!(per_action_entropy(-2.0, 2).unwrap(), 1.0);
        assert_eq!(per_action_entropy(-0.7, 1).unwrap(), 0.7);
        assert_eq!(per_action_entropy(-6.0, 3).unwrap(), per_action_entropy(-2.0, 1).unwrap());
        assert!(per_action_entropy(-1.0, 0).is_err());
    }
}
