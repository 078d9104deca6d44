//! Compound segmentation loss: `L = L_Dice + λ·L_BCE` over two-class logits.
//!
//! `L_Dice` is the soft Dice loss on the foreground-class softmax
//! probability with ε = 1e-6; `L_BCE` is the mean two-class cross-entropy.
//! Both terms are computed over the whole batch.

use tch::Tensor;

use crate::error::{Error, Result};

const DICE_EPS: f64 = 1e-6;

/// `logits`: `(N, 2, D, H, W)` float tensor; `target`: `(N, D, H, W)` float
/// tensor with values in {0, 1}. Returns a scalar tensor on the autograd
/// graph of `logits`.
pub fn compound_loss(logits: &Tensor, target: &Tensor, lambda_bce: f64) -> Result<Tensor> {
    let lsize = logits.size();
    let tsize = target.size();
    if lsize.len() != 5 || lsize[1] != 2 {
        return Err(Error::InvalidParameter(format!(
            "logits must have shape (N, 2, D, H, W), got {lsize:?}"
        )));
    }
    let expected: Vec<i64> = [&lsize[..1], &lsize[2..]].concat();
    if tsize != expected {
        return Err(Error::InvalidParameter(format!(
            "target shape {tsize:?} does not match logits {lsize:?}"
        )));
    }
    if !bool::try_from(logits.isfinite().all())? {
        return Err(Error::InvalidParameter(
            "non-finite values in logits".into(),
        ));
    }
    if !(lambda_bce >= 0.0) || !lambda_bce.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be finite and >= 0, got {lambda_bce}"
        )));
    }

    let kind = logits.kind();
    let g = target.to_kind(kind);
    let log_p = logits.log_softmax(1, kind);
    let log_fg = log_p.select(1, 1);
    let log_bg = log_p.select(1, 0);

    // Mean two-class cross-entropy.
    let ones = Tensor::ones_like(&g);
    let bce = -((&g * &log_fg) + ((&ones - &g) * &log_bg)).mean(kind);

    // Soft Dice on the foreground probability.
    let p_fg = log_fg.exp();
    let inter = (&p_fg * &g).sum(kind);
    let denom = p_fg.sum(kind) + g.sum(kind);
    let dice = 1.0 - (2.0 * inter + DICE_EPS) / (denom + DICE_EPS);

    Ok(dice + lambda_bce * bce)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tch::{Device, Kind};

    fn scalar(t: &Tensor) -> f64 {
        f64::try_from(t).unwrap()
    }

    #[test]
    fn strong_correct_logits_drive_the_loss_to_zero() {
        // ±20 logits favoring the correct class everywhere.
        let target = Tensor::rand([2, 4, 4, 4], (Kind::Float, Device::Cpu)).ge(0.5).to_kind(Kind::Float);
        let fg: Tensor = &target * 20.0 - (target.ones_like() - &target) * 20.0;
        let logits = Tensor::stack(&[fg.neg(), fg.shallow_clone()], 1);
        let loss = compound_loss(&logits, &target, 1.0).unwrap();
        assert!(scalar(&loss) < 1e-4, "loss {}", scalar(&loss));
    }

    #[test]
    fn lambda_zero_gives_the_dice_term_alone() {
        let target = Tensor::rand([1, 4, 4, 4], (Kind::Float, Device::Cpu)).ge(0.4).to_kind(Kind::Float);
        let logits = Tensor::rand([1, 2, 4, 4, 4], (Kind::Float, Device::Cpu));
        let full = scalar(&compound_loss(&logits, &target, 1.0).unwrap());
        let dice_only = scalar(&compound_loss(&logits, &target, 0.0).unwrap());
        // Additivity of the compound form: L(1) = L(0) + BCE.
        let bce = full - dice_only;
        assert!(bce > 0.0);
        let relaxed = scalar(&compound_loss(&logits, &target, 2.0).unwrap());
        assert!((relaxed - (dice_only + 2.0 * bce)).abs() < 1e-6);
    }

    #[test]
    fn uniform_logits_on_half_foreground_match_the_closed_form() {
        // Uniform logits (0,0): p_fg = 0.5 everywhere, so
        // L_BCE = ln 2 and L_Dice = 1 - (2·0.5·N/2)/(0.5·N + N/2) = 0.5.
        let n = 4i64;
        let target_half = Tensor::arange(n * n * n, (Kind::Float, Device::Cpu))
            .remainder(2.0)
            .reshape([1, n, n, n]);
        let logits = Tensor::zeros([1, 2, n, n, n], (Kind::Float, Device::Cpu));
        let loss = scalar(&compound_loss(&logits, &target_half, 1.0).unwrap());
        let expected = 0.5 + (2f64).ln();
        assert!(
            (loss - expected).abs() < 1e-4,
            "loss {loss} vs closed form {expected}"
        );
    }

    #[test]
    fn dice_term_stays_in_unit_range_and_bce_nonnegative() {
        for seed in 0..5 {
            tch::manual_seed(seed);
            let target = Tensor::rand([1, 4, 4, 4], (Kind::Float, Device::Cpu)).ge(0.5).to_kind(Kind::Float);
            let logits = Tensor::randn([1, 2, 4, 4, 4], (Kind::Float, Device::Cpu)) * 3.0;
            let dice_only = scalar(&compound_loss(&logits, &target, 0.0).unwrap());
            assert!((0.0..=1.0).contains(&dice_only), "dice {dice_only}");
            let full = scalar(&compound_loss(&logits, &target, 1.0).unwrap());
            assert!(full >= dice_only - 1e-9, "bce must be >= 0");
        }
    }

    #[test]
    fn loss_is_permutation_equivariant() {
        tch::manual_seed(1);
        let target = Tensor::rand([1, 4, 4, 4], (Kind::Float, Device::Cpu)).ge(0.5).to_kind(Kind::Float);
        let logits = Tensor::randn([1, 2, 4, 4, 4], (Kind::Float, Device::Cpu));
        let base = scalar(&compound_loss(&logits, &target, 1.0).unwrap());
        // Simultaneous spatial permutation (flip all three axes).
        let logits_p = logits.flip([2, 3, 4]);
        let target_p = target.flip([1, 2, 3]);
        let permuted = scalar(&compound_loss(&logits_p, &target_p, 1.0).unwrap());
        assert!((base - permuted).abs() < 1e-6);
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        // f64 tensors keep the finite-difference noise floor far below the
        // 1e-3 relative tolerance.
        tch::manual_seed(3);
        let target = Tensor::rand([1, 4, 4, 4], (Kind::Double, Device::Cpu))
            .ge(0.5)
            .to_kind(Kind::Double);
        let logits = (Tensor::randn([1, 2, 4, 4, 4], (Kind::Double, Device::Cpu)) * 0.8)
            .set_requires_grad(true);
        let loss = compound_loss(&logits, &target, 1.0).unwrap();
        let grad = Tensor::run_backward(&[loss], &[&logits], false, false)
            .pop()
            .unwrap();

        let h = 1e-4;
        let flat_grad: Vec<f64> = Vec::<f64>::try_from(grad.flatten(0, -1)).unwrap();
        let base: Vec<f64> = Vec::<f64>::try_from(logits.flatten(0, -1)).unwrap();
        let mut max_rel = 0f64;
        // Probe a deterministic subset of coordinates (every 7th).
        for i in (0..base.len()).step_by(7) {
            let mut plus = base.clone();
            plus[i] += h;
            let mut minus = base.clone();
            minus[i] -= h;
            let lp = f64::try_from(
                compound_loss(
                    &Tensor::from_slice(&plus).reshape([1, 2, 4, 4, 4]),
                    &target,
                    1.0,
                )
                .unwrap(),
            )
            .unwrap();
            let lm = f64::try_from(
                compound_loss(
                    &Tensor::from_slice(&minus).reshape([1, 2, 4, 4, 4]),
                    &target,
                    1.0,
                )
                .unwrap(),
            )
            .unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let denom = fd.abs().max(flat_grad[i].abs()).max(1e-8);
            max_rel = max_rel.max((fd - flat_grad[i]).abs() / denom);
        }
        assert!(max_rel < 1e-3, "max relative gradient error {max_rel}");
    }

    #[test]
    fn shape_mismatch_and_non_finite_are_rejected() {
        let logits = Tensor::zeros([1, 2, 4, 4, 4], (Kind::Float, Device::Cpu));
        let bad_target = Tensor::zeros([1, 4, 4, 2], (Kind::Float, Device::Cpu));
        assert!(compound_loss(&logits, &bad_target, 1.0).is_err());

        let bad = Tensor::zeros([1, 2, 4, 4, 4], (Kind::Float, Device::Cpu));
        let _ = bad.get(0).get(0).get(0).get(0).get(0).fill_(f64::NAN);
        let target = Tensor::zeros([1, 4, 4, 4], (Kind::Float, Device::Cpu));
        assert!(compound_loss(&bad, &target, 1.0).is_err());
    }
}
