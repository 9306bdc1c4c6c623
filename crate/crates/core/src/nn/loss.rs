use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{Error, Result};

/// Which cross-entropy terms the loss includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `−Σ [y ln p + (1−y) ln(1−p)]`
    #[default]
    Full,
    /// `−Σ y ln p` only. Degenerate on its own; kept for ablation.
    PositiveOnly,
}

fn check_len(p: usize, y: usize) -> Result<()> {
    if p != y {
        return Err(Error::Shape(format!(
            "{p} predictions vs {y} targets"
        )));
    }
    Ok(())
}

/// Binary cross-entropy summed over classes, with `p` clamped to `[clamp, 1-clamp]`.
pub fn bce_loss<T: Real>(p: &[T], y: &[T], clamp: f64, kind: LossKind) -> Result<f64> {
    check_len(p.len(), y.len())?;
    let mut total = 0.0;
    for (&pk, &yk) in p.iter().zip(y) {
        let pc = pk.as_f64().clamp(clamp, 1.0 - clamp);
        let yk = yk.as_f64();
        total -= yk * pc.ln();
        if kind == LossKind::Full {
            total -= (1.0 - yk) * (1.0 - pc).ln();
        }
    }
    Ok(total)
}

/// Gradient of [`bce_loss`] with respect to the predictions, evaluated at the clamped `p`.
pub fn bce_grad<T: Real>(p: &[T], y: &[T], clamp: f64, kind: LossKind) -> Result<Vec<T>> {
    check_len(p.len(), y.len())?;
    Ok(p.iter()
        .zip(y)
        .map(|(&pk, &yk)| {
            let pc = pk.as_f64().clamp(clamp, 1.0 - clamp);
            let yk = yk.as_f64();
            let g = match kind {
                LossKind::Full => (pc - yk) / (pc * (1.0 - pc)),
                LossKind::PositiveOnly => -yk / pc,
            };
            T::lit(g)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use rand::{Rng, SeedableRng};

    #[test]
    fn perfect_prediction_is_near_zero() {
        let y = [1.0f64, 0.0, 1.0];
        assert!(bce_loss(&y, &y, 1e-7, LossKind::Full).unwrap() < 1e-5);
    }

    #[test]
    fn half_probabilities() {
        let l = bce_loss(&[0.5f64, 0.5], &[1.0, 0.0], 1e-7, LossKind::Full).unwrap();
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((l - 1.3863).abs() < 1e-4);
        let l1 = bce_loss(&[0.5f64, 0.5], &[1.0, 0.0], 1e-7, LossKind::PositiveOnly).unwrap();
        assert!((l1 - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_errors() {
        assert!(bce_loss(&[0.5f64], &[1.0, 0.0], 1e-7, LossKind::Full).is_err());
        assert!(bce_grad(&[0.5f64], &[1.0, 0.0], 1e-7, LossKind::Full).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for kind in [LossKind::Full, LossKind::PositiveOnly] {
            let p: Vec<f64> = (0..6).map(|_| rng.gen_range(0.05..0.95)).collect();
            let y: Vec<f64> = (0..6).map(|i| (i % 2) as f64).collect();
            let g = bce_grad(&p, &y, 1e-7, kind).unwrap();
            let rep = grad_check(|v| bce_loss(v, &y, 1e-7, kind).unwrap(), &p, &g, 1e-6);
            assert!(rep.max_rel_error < 1e-6, "{kind:?} {rep:?}");
        }
    }
}
