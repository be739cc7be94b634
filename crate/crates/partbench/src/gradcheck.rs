//! Central finite-difference verification of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::losses::{
    bce_loss, dice_loss, focal_tversky_loss, gaussian_kl_penalty, span_ce_loss, LossWeights,
    DICE_SCALE,
};
use crate::mask::BinaryMask;
use crate::spans::{Tag, TagSequence};

/// Compares an analytic gradient against central differences of `f` at `x`.
///
/// Returns `max_i |fd_i - analytic_i| / (|analytic_i| + 1e-12)` where
/// `fd_i = (f(x + eps e_i) - f(x - eps e_i)) / (2 eps)`.
pub fn finite_diff_grad_check(
    f: impl Fn(&[f64]) -> f64,
    analytic: &[f64],
    x: &[f64],
    eps: f64,
) -> f64 {
    assert_eq!(analytic.len(), x.len(), "gradient and point must match");
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let plus = f(&probe);
        probe[i] = x[i] - eps;
        let minus = f(&probe);
        probe[i] = x[i];
        let fd = (plus - minus) / (2.0 * eps);
        let rel = (fd - analytic[i]).abs() / (analytic[i].abs() + 1e-12);
        worst = worst.max(rel);
    }
    worst
}

/// Result of one checked gradient family.
#[derive(Debug, Clone)]
pub struct GradCheckCase {
    pub name: &'static str,
    pub seeds: u64,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheckCase {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

fn random_tags(rng: &mut ChaCha8Rng, n: usize) -> TagSequence {
    TagSequence::new(
        (0..n)
            .map(|_| [Tag::B, Tag::I, Tag::O][rng.gen_range(0..3)])
            .collect(),
    )
}

fn random_probs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.05..0.95)).collect()
}

fn random_mask(rng: &mut ChaCha8Rng, h: u32, w: u32) -> BinaryMask {
    BinaryMask::from_fn(h, w, |_, _| rng.gen_bool(0.5)).unwrap()
}

/// Runs the full gradient-verification suite: each loss is checked on
/// `seeds` random instances and the worst relative error is reported.
pub fn run_suite(weights: &LossWeights, seeds: u64, tolerance: f64) -> Vec<GradCheckCase> {
    let mut results = Vec::new();

    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(3..9);
        let gold = random_tags(&mut rng, n);
        let flat: Vec<f64> = (0..3 * n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let pack = |x: &[f64]| -> Vec<[f64; 3]> {
            x.chunks(3).map(|c| [c[0], c[1], c[2]]).collect()
        };
        let (_, grad) = span_ce_loss(&pack(&flat), &gold).expect("valid shapes");
        let grad_flat: Vec<f64> = grad.iter().flatten().cloned().collect();
        let err = finite_diff_grad_check(
            |x| span_ce_loss(&pack(x), &gold).unwrap().0,
            &grad_flat,
            &flat,
            1e-5,
        );
        worst = worst.max(err);
    }
    results.push(GradCheckCase {
        name: "span_ce_loss",
        seeds,
        max_rel_err: worst,
        tolerance,
    });

    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let spans = rng.gen_range(1..5usize);
        let dim = rng.gen_range(2..6usize);
        let flat: Vec<f64> = (0..spans * dim).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let teachers: Vec<Vec<f64>> = (0..spans)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.5..1.5)).collect())
            .collect();
        let unpack = |x: &[f64]| -> Vec<Vec<f64>> { x.chunks(dim).map(|c| c.to_vec()).collect() };
        let (_, grads) =
            gaussian_kl_penalty(&unpack(&flat), &teachers, weights.sigma).expect("valid shapes");
        let grad_flat: Vec<f64> = grads.iter().flatten().cloned().collect();
        let err = finite_diff_grad_check(
            |x| {
                gaussian_kl_penalty(&unpack(x), &teachers, weights.sigma)
                    .unwrap()
                    .0
            },
            &grad_flat,
            &flat,
            1e-5,
        );
        worst = worst.max(err);
    }
    results.push(GradCheckCase {
        name: "gaussian_kl_penalty",
        seeds,
        max_rel_err: worst,
        tolerance,
    });

    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let gt = random_mask(&mut rng, 4, 4);
        let pred = random_probs(&mut rng, 16);
        let (_, grad) = focal_tversky_loss(
            &pred,
            &gt,
            weights.alpha,
            weights.beta,
            weights.gamma,
            1.0,
        )
        .expect("valid inputs");
        let err = finite_diff_grad_check(
            |x| {
                focal_tversky_loss(x, &gt, weights.alpha, weights.beta, weights.gamma, 1.0)
                    .unwrap()
                    .0
            },
            &grad,
            &pred,
            1e-5,
        );
        worst = worst.max(err);
    }
    results.push(GradCheckCase {
        name: "focal_tversky_loss",
        seeds,
        max_rel_err: worst,
        tolerance,
    });

    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let gt = random_mask(&mut rng, 4, 4);
        let pred = random_probs(&mut rng, 16);
        let (_, grad) = bce_loss(&pred, &gt).expect("valid inputs");
        let err = finite_diff_grad_check(|x| bce_loss(x, &gt).unwrap().0, &grad, &pred, 1e-6);
        worst = worst.max(err);
    }
    results.push(GradCheckCase {
        name: "bce_loss",
        seeds,
        max_rel_err: worst,
        tolerance,
    });

    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
        let gt = random_mask(&mut rng, 4, 4);
        let pred = random_probs(&mut rng, 16);
        let (_, grad) = dice_loss(&pred, &gt, 1.0, DICE_SCALE).expect("valid inputs");
        let err = finite_diff_grad_check(
            |x| dice_loss(x, &gt, 1.0, DICE_SCALE).unwrap().0,
            &grad,
            &pred,
            1e-5,
        );
        worst = worst.max(err);
    }
    results.push(GradCheckCase {
        name: "dice_loss",
        seeds,
        max_rel_err: worst,
        tolerance,
    });

    results
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact_to_truncation_error() {
        let x = vec![0.3, -1.2, 2.5, 0.0];
        let f = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>() / 2.0;
        let grad = x.clone(); // d/dx of ||x||^2 / 2
        let err = finite_diff_grad_check(f, &grad, &x, 1e-5);
        assert!(err < 1e-8, "rel err = {err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let x = vec![1.0, 2.0];
        let err = finite_diff_grad_check(|_| 7.0, &[0.0, 0.0], &x, 1e-5);
        assert_eq!(err, 0.0);
    }

    #[test]
    fn suite_passes_on_default_weights() {
        let cases = run_suite(&LossWeights::default(), 10, 1e-4);
        assert_eq!(cases.len(), 5);
        for case in &cases {
            assert!(
                case.passed(),
                "{} failed: {} >= {}",
                case.name,
                case.max_rel_err,
                case.tolerance
            );
        }
    }
}
