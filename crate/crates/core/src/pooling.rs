//! Global pooling of one segmentation mask into a clip-level probability.
//!
//! Masks are flattened row-major (`time × freq`). Ties are always broken by
//! the row-major index so gradients are deterministic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pooling {
    /// Global max pooling.
    Gmp,
    /// Global average pooling.
    Gap,
    /// Global weighted rank pooling with decay `r ∈ [0, 1]`.
    Gwrp { r: f64 },
}

/// Default rank decay for paper-scale masks (311 × 64 units).
pub const DEFAULT_GWRP_R: f64 = 0.9998;

impl Pooling {
    pub fn gwrp(r: f64) -> Result<Self> {
        check_r(r)?;
        Ok(Pooling::Gwrp { r })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Pooling::Gwrp { r } => check_r(r),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Pooling::Gmp => "gmp",
            Pooling::Gap => "gap",
            Pooling::Gwrp { .. } => "gwrp",
        }
    }

    pub fn forward<T: Real>(&self, mask: &[T]) -> Result<T> {
        match *self {
            Pooling::Gmp => gmp(mask),
            Pooling::Gap => gap(mask),
            Pooling::Gwrp { r } => gwrp(mask, r),
        }
    }

    /// Gradient of the pooled value with respect to every mask element.
    pub fn backward<T: Real>(&self, mask: &[T]) -> Result<Vec<T>> {
        match *self {
            Pooling::Gmp => gmp_backward(mask),
            Pooling::Gap => gap_backward(mask),
            Pooling::Gwrp { r } => gwrp_backward(mask, r),
        }
    }
}

fn check_r(r: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::InvalidArgument(format!(
            "gwrp decay r = {r} outside [0, 1]"
        )));
    }
    Ok(())
}

fn non_empty<T>(mask: &[T]) -> Result<()> {
    if mask.is_empty() {
        return Err(Error::InvalidArgument("empty mask".into()));
    }
    Ok(())
}

/// Index of the first maximum in row-major order.
fn argmax<T: Real>(mask: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in mask.iter().enumerate().skip(1) {
        if v > mask[best] {
            best = i;
        }
    }
    best
}

pub fn gmp<T: Real>(mask: &[T]) -> Result<T> {
    non_empty(mask)?;
    Ok(mask[argmax(mask)])
}

pub fn gmp_backward<T: Real>(mask: &[T]) -> Result<Vec<T>> {
    non_empty(mask)?;
    let mut g = vec![T::zero(); mask.len()];
    g[argmax(mask)] = T::one();
    Ok(g)
}

pub fn gap<T: Real>(mask: &[T]) -> Result<T> {
    non_empty(mask)?;
    let sum: T = mask.iter().copied().sum();
    Ok(sum / T::lit(mask.len() as f64))
}

pub fn gap_backward<T: Real>(mask: &[T]) -> Result<Vec<T>> {
    non_empty(mask)?;
    Ok(vec![T::one() / T::lit(mask.len() as f64); mask.len()])
}

/// Weight `r^(rank)` for every element, indexed by position, plus `Z(r)`.
/// Ranks come from a stable descending sort, so equal values keep row-major order.
fn rank_weights<T: Real>(mask: &[T], r: f64) -> (Vec<T>, T) {
    let mut order: Vec<usize> = (0..mask.len()).collect();
    order.sort_by(|&a, &b| {
        mask[b]
            .partial_cmp(&mask[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let r = T::lit(r);
    let mut weights = vec![T::zero(); mask.len()];
    let mut w = T::one();
    for &i in &order {
        weights[i] = w;
        w *= r;
    }
    // Summed in row-major order so that r = 1 reproduces gap bit for bit.
    let z: T = weights.iter().copied().sum();
    (weights, z)
}

/// `Σ_j r^(j−1) a_j / Z(r)` over the mask sorted in descending order, with `0⁰ = 1`.
pub fn gwrp<T: Real>(mask: &[T], r: f64) -> Result<T> {
    check_r(r)?;
    non_empty(mask)?;
    let (weights, z) = rank_weights(mask, r);
    let s: T = mask.iter().zip(&weights).map(|(&v, &w)| v * w).sum();
    Ok(s / z)
}

pub fn gwrp_backward<T: Real>(mask: &[T], r: f64) -> Result<Vec<T>> {
    check_r(r)?;
    non_empty(mask)?;
    let (weights, z) = rank_weights(mask, r);
    Ok(weights.into_iter().map(|w| w / z).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use proptest::prelude::*;

    #[test]
    fn gmp_examples() {
        assert_eq!(gmp(&[0.2f64, 0.9, 0.1, 0.3]).unwrap(), 0.9);
        let zeros = [0.0f64; 6];
        assert_eq!(gmp(&zeros).unwrap(), 0.0);
        let g = gmp_backward(&zeros).unwrap();
        assert_eq!(g[0], 1.0);
        assert!(g[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gmp_gradient_at_unique_max() {
        let x = [0.1, 0.7, 0.3, 0.2];
        let g = gmp_backward(&x).unwrap();
        let rep = grad_check(|v| gmp(v).unwrap(), &x, &g, 1e-6);
        assert!(rep.max_rel_error < 1e-8, "{rep:?}");
    }

    #[test]
    fn gap_examples() {
        assert_eq!(gap(&[1.0f64, 0.0, 0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(gap(&[0.375f64; 9]).unwrap(), 0.375);
        assert!((gap(&[0.37f64; 9]).unwrap() - 0.37).abs() < 1e-15);
        let g = gap_backward(&[0.0f64; 8]).unwrap();
        assert!(g.iter().all(|&v| v == 1.0 / 8.0));
    }

    #[test]
    fn gwrp_direct_evaluation() {
        let v = gwrp(&[0.0f64, 1.0, 0.5], 0.5).unwrap();
        assert!((v - 5.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn gwrp_limits() {
        let m = [0.3f64, 0.8, 0.8, 0.1, 0.55, 0.2];
        assert_eq!(gwrp(&m, 0.0).unwrap(), gmp(&m).unwrap());
        assert_eq!(gwrp(&m, 1.0).unwrap(), gap(&m).unwrap());
        assert_eq!(gwrp_backward(&m, 1.0).unwrap(), gap_backward(&m).unwrap());
        assert_eq!(gwrp_backward(&m, 0.0).unwrap(), gmp_backward(&m).unwrap());
    }

    #[test]
    fn gwrp_gradient_matches_finite_differences() {
        let x = [0.12, 0.91, 0.45, 0.33, 0.78, 0.05];
        for r in [0.0, 0.3, 0.9, 1.0] {
            let g = gwrp_backward(&x, r).unwrap();
            let rep = grad_check(|v| gwrp(v, r).unwrap(), &x, &g, 1e-7);
            assert!(rep.max_rel_error < 1e-6, "r {r}: {rep:?}");
        }
    }

    #[test]
    fn errors() {
        assert!(gmp::<f64>(&[]).is_err());
        assert!(gap::<f64>(&[]).is_err());
        assert!(gwrp(&[0.5f64], 1.5).is_err());
        assert!(gwrp(&[0.5f64], -0.1).is_err());
        assert!(Pooling::gwrp(2.0).is_err());
    }

    fn mask() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..=1.0, 1..200)
    }

    proptest! {
        #[test]
        fn sandwich_and_range(m in mask(), r in 0.0f64..=1.0) {
            let lo = gap(&m).unwrap();
            let hi = gmp(&m).unwrap();
            let v = gwrp(&m, r).unwrap();
            prop_assert!(lo <= v + 1e-12 && v <= hi + 1e-12);
            let min = m.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(min - 1e-12 <= lo && v <= hi);
        }

        #[test]
        fn non_increasing_in_r(m in mask(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (r1, r2) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(gwrp(&m, r2).unwrap() <= gwrp(&m, r1).unwrap() + 1e-12);
        }

        #[test]
        fn gradients_sum_to_one(m in mask(), r in 0.0f64..=1.0) {
            for p in [Pooling::Gmp, Pooling::Gap, Pooling::Gwrp { r }] {
                let s: f64 = p.backward(&m).unwrap().iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn permutation_invariant(m in mask(), r in 0.0f64..=1.0, seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut p = m.clone();
            p.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(gmp(&m).unwrap(), gmp(&p).unwrap());
            prop_assert!((gap(&m).unwrap() - gap(&p).unwrap()).abs() < 1e-12);
            prop_assert!((gwrp(&m, r).unwrap() - gwrp(&p, r).unwrap()).abs() < 1e-12);
        }
    }
}
