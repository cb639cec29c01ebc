use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ParamBlock;

/// One probed coordinate of a finite-difference check.
#[derive(Clone, Debug)]
pub struct ProbeResult {
    pub block: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

/// Compares the gradients stored in `blocks[..].grads` to central differences
/// of `loss` at `n_probes` random coordinates and returns the worst relative
/// error, using `max(|analytic|, |numeric|, 1e-8)` as denominator.
pub fn finite_diff_check<F>(loss: F, blocks: &[ParamBlock], h: f64, n_probes: usize, seed: u64) -> f64
where
    F: FnMut(&[ParamBlock]) -> f64,
{
    finite_diff_report(loss, blocks, h, n_probes, seed)
        .iter()
        .map(|p| p.relative_error)
        .fold(0.0, f64::max)
}

pub fn finite_diff_report<F>(
    mut loss: F,
    blocks: &[ParamBlock],
    h: f64,
    n_probes: usize,
    seed: u64,
) -> Vec<ProbeResult>
where
    F: FnMut(&[ParamBlock]) -> f64,
{
    let total: usize = blocks.iter().map(ParamBlock::len).sum();
    if total == 0 {
        return Vec::new();
    }
    let mut work = blocks.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_probes);
    for _ in 0..n_probes {
        let mut flat = rng.random_range(0..total);
        let mut b = 0;
        while flat >= work[b].len() {
            flat -= work[b].len();
            b += 1;
        }
        let original = work[b].values.as_slice()[flat];
        let plus = (original as f64 + h) as f32;
        let minus = (original as f64 - h) as f32;

        work[b].values.as_mut_slice()[flat] = plus;
        let lp = loss(&work);
        work[b].values.as_mut_slice()[flat] = minus;
        let lm = loss(&work);
        work[b].values.as_mut_slice()[flat] = original;

        // The perturbed values are rounded to f32; divide by the step actually taken.
        let numeric = (lp - lm) / (plus as f64 - minus as f64);
        let analytic = blocks[b].grads.as_slice()[flat] as f64;
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        out.push(ProbeResult {
            block: work[b].name.clone(),
            index: flat,
            analytic,
            numeric,
            relative_error: (analytic - numeric).abs() / denom,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{init_params, InitScheme};

    #[test]
    fn sum_of_squares_matches_closed_form() {
        let mut b = init_params("w", 11, 2, 2, InitScheme::UniformFanIn).unwrap();
        let grads: Vec<f32> = b.values.as_slice().iter().map(|v| 2.0 * v).collect();
        b.grads.as_mut_slice().copy_from_slice(&grads);
        let loss = |bs: &[ParamBlock]| {
            bs[0]
                .values
                .as_slice()
                .iter()
                .map(|&v| (v as f64) * (v as f64))
                .sum::<f64>()
        };
        let err = finite_diff_check(loss, std::slice::from_ref(&b), 1e-4, 50, 3);
        assert!(err < 1e-6, "max relative error {err}");
    }

    #[test]
    fn constant_loss_reports_zero() {
        let b = init_params("w", 1, 3, 3, InitScheme::UniformFanIn).unwrap();
        let err = finite_diff_check(|_| 4.25, std::slice::from_ref(&b), 1e-3, 20, 0);
        assert!(err <= 1e-8);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let mut b = init_params("w", 5, 1, 4, InitScheme::UniformFanIn).unwrap();
        b.grads.fill(10.0);
        let loss = |bs: &[ParamBlock]| bs[0].values.as_slice().iter().map(|&v| v as f64).sum();
        let err = finite_diff_check(loss, std::slice::from_ref(&b), 1e-3, 10, 0);
        assert!(err > 0.5);
    }
}
