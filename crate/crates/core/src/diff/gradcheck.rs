use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::params::{BoundParams, ParameterSet};
use crate::error::Result;

/// Gradients smaller than this are compared in absolute rather than
/// relative terms.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Relative error between an analytic and a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// Compares reverse-mode gradients of `loss_fn` against central differences.
///
/// `loss_fn` receives every set in `sets` bound as trainable parameters and
/// must be deterministic in them. At most `max_coords` coordinates per set
/// are probed, chosen by a generator seeded with `seed`. Returns the largest
/// relative error seen.
pub fn finite_diff_check<F>(
    sets: &mut [&mut ParameterSet],
    step: f64,
    max_coords: usize,
    seed: u64,
    loss_fn: F,
) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph, &[BoundParams<'g>]) -> Result<Var<'g>>,
{
    let analytic: Vec<Vec<f64>> = {
        let g = Graph::new();
        let bound: Vec<_> = sets.iter().map(|s| s.bind(&g, true)).collect();
        let loss = loss_fn(&g, &bound)?;
        let grads = g.backward(loss)?;
        bound
            .iter()
            .map(|b| {
                b.vars()
                    .iter()
                    .flat_map(|v| match grads.get(*v) {
                        Some(t) => t.data().to_vec(),
                        None => vec![0.0; v.value().len()],
                    })
                    .collect()
            })
            .collect()
    };

    let eval = |sets: &[&mut ParameterSet]| -> Result<f64> {
        let g = Graph::new();
        let bound: Vec<_> = sets.iter().map(|s| s.bind(&g, true)).collect();
        Ok(loss_fn(&g, &bound)?.value().item())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for si in 0..sets.len() {
        let n = sets[si].num_values();
        let coords: Vec<usize> = if n <= max_coords {
            (0..n).collect()
        } else {
            sample(&mut rng, n, max_coords).into_vec()
        };
        for c in coords {
            let orig = sets[si].flat_get(c);
            sets[si].flat_set(c, orig + step);
            let plus = eval(sets)?;
            sets[si].flat_set(c, orig - step);
            let minus = eval(sets)?;
            sets[si].flat_set(c, orig);
            let numeric = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(analytic[si][c], numeric));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Tensor;
    use rand::Rng;

    #[test]
    fn quadratic_is_essentially_exact() {
        let mut p = ParameterSet::new();
        p.insert("x", Tensor::row(vec![0.3, -1.2, 2.0])).unwrap();
        let err = finite_diff_check(&mut [&mut p], 1e-5, 10, 0, |g, b| {
            let x = b[0].get("x");
            let c = g.constant(Tensor::row(vec![1.0, 2.0, -3.0]));
            Ok(x.sub(c)?.square().sum())
        })
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn tanh_layer_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut p = ParameterSet::new();
        p.insert_linear("l", 4, 3, &mut rng).unwrap();
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let err = finite_diff_check(&mut [&mut p], 1e-5, 100, 1, |g, b| {
            let xs = g.constant(Tensor::matrix(2, 4, x.clone()));
            Ok(xs.matmul(b[0].get("l.w"))?.tanh().sum())
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
