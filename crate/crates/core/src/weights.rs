//! Class- and instance-level weights for partial-set transfer, and the
//! auxiliary classifier/discriminator losses that drive source weighting.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::Float;

/// Clamp applied to probabilities inside logarithms.
pub const PROB_EPS: f64 = 1e-7;

pub(crate) fn clamp_prob<T: Float>(p: T) -> T {
    let eps = T::lit(PROB_EPS);
    p.max(eps).min(T::one() - eps)
}

/// Snapshot of all weights in play for one batch.
#[derive(Debug, Clone)]
pub struct WeightState<T> {
    pub omega_c: Array1<T>,
    pub omega_si: Array1<T>,
    pub omega_ti: Array1<T>,
}

/// Mean target prediction, normalized so its largest entry is 1.
pub fn class_level_weights<T: Float>(target_probs: ArrayView2<T>) -> Result<Array1<T>> {
    if target_probs.nrows() == 0 {
        return Err(Error::InvalidInput("class weights need at least one target row".into()));
    }
    let mean = target_probs
        .mean_axis(Axis(0))
        .ok_or_else(|| Error::InvalidInput("empty prediction matrix".into()))?;
    let max = mean.iter().copied().fold(T::zero(), T::max);
    if !(max > T::zero()) {
        return Err(Error::DegenerateWeights("mean prediction is all zero".into()));
    }
    Ok(mean / max)
}

/// `1 - score`, normalized to unit mean over the batch.
///
/// Scores are clamped to `[0, 1]` first; a class sum can round to just above
/// one in single precision.
pub fn source_instance_weights<T: Float>(domain_scores: ArrayView1<T>) -> Result<Array1<T>> {
    if domain_scores.is_empty() {
        return Err(Error::InvalidInput("no source scores".into()));
    }
    if domain_scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("domain scores must be finite".into()));
    }
    let raw = domain_scores.mapv(|s| (T::one() - s).max(T::zero()).min(T::one()));
    let mean = raw.sum() / T::lit(raw.len() as f64);
    if !(mean > T::zero()) {
        return Err(Error::DegenerateWeights("every source instance scored as fully source".into()));
    }
    Ok(raw / mean)
}

/// Confidence of each target prediction.
pub fn target_instance_weights<T: Float>(target_probs: ArrayView2<T>) -> Array1<T> {
    target_probs
        .axis_iter(Axis(0))
        .map(|row| row.iter().copied().fold(T::neg_infinity(), T::max))
        .collect()
}

/// Auxiliary classifier and discriminator losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxLosses<T> {
    pub classifier: T,
    pub discriminator: T,
}

impl<T: Float> AuxLosses<T> {
    pub fn total(&self) -> T {
        self.classifier + self.discriminator
    }
}

/// Gradients of the auxiliary losses with respect to their probability inputs.
#[derive(Debug, Clone)]
pub struct AuxGrads<T> {
    pub src_leaky: Array2<T>,
    pub src_scores: Array1<T>,
    pub tgt_scores: Array1<T>,
}

fn check_aux<T: Float>(src_leaky: ArrayView2<T>, src_labels: &[usize], src_scores: ArrayView1<T>, tgt_scores: ArrayView1<T>) -> Result<()> {
    let n = src_leaky.nrows();
    if n == 0 || tgt_scores.is_empty() {
        return Err(Error::InvalidInput("auxiliary losses need source and target rows".into()));
    }
    if src_labels.len() != n || src_scores.len() != n {
        return Err(Error::Shape("source labels/scores must match leaky rows".into()));
    }
    if let Some(l) = src_labels.iter().find(|&&l| l >= src_leaky.ncols()) {
        return Err(Error::InvalidInput(format!("label {l} outside {} classes", src_leaky.ncols())));
    }
    Ok(())
}

/// One-vs-rest cross-entropy of the leaky outputs plus domain cross-entropy of the scores.
pub fn auxiliary_losses<T: Float>(
    src_leaky: ArrayView2<T>,
    src_labels: &[usize],
    src_scores: ArrayView1<T>,
    tgt_scores: ArrayView1<T>,
) -> Result<AuxLosses<T>> {
    Ok(auxiliary_losses_grad(src_leaky, src_labels, src_scores, tgt_scores)?.0)
}

pub fn auxiliary_losses_grad<T: Float>(
    src_leaky: ArrayView2<T>,
    src_labels: &[usize],
    src_scores: ArrayView1<T>,
    tgt_scores: ArrayView1<T>,
) -> Result<(AuxLosses<T>, AuxGrads<T>)> {
    check_aux(src_leaky, src_labels, src_scores, tgt_scores)?;
    let ns = T::lit(src_leaky.nrows() as f64);
    let nt = T::lit(tgt_scores.len() as f64);
    let eps = T::lit(PROB_EPS);
    let inside = |p: T| p > eps && p < T::one() - eps;

    let mut cls = T::zero();
    let mut g_leaky = Array2::zeros(src_leaky.raw_dim());
    for (i, row) in src_leaky.axis_iter(Axis(0)).enumerate() {
        for (c, &p) in row.iter().enumerate() {
            let q = clamp_prob(p);
            let active = inside(p);
            if c == src_labels[i] {
                cls -= q.ln();
                if active {
                    g_leaky[[i, c]] = -T::one() / (q * ns);
                }
            } else {
                cls -= (T::one() - q).ln();
                if active {
                    g_leaky[[i, c]] = T::one() / ((T::one() - q) * ns);
                }
            }
        }
    }

    let mut disc = T::zero();
    let g_src = src_scores.mapv(|s| {
        let q = clamp_prob(s);
        disc -= q.ln() / ns;
        if inside(s) {
            -T::one() / (q * ns)
        } else {
            T::zero()
        }
    });
    let g_tgt = tgt_scores.mapv(|s| {
        let q = clamp_prob(s);
        disc -= (T::one() - q).ln() / nt;
        if inside(s) {
            T::one() / ((T::one() - q) * nt)
        } else {
            T::zero()
        }
    });
    Ok((
        AuxLosses { classifier: cls / ns, discriminator: disc },
        AuxGrads { src_leaky: g_leaky, src_scores: g_src, tgt_scores: g_tgt },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn class_weights() {
        let one_hot = array![[1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]];
        assert_eq!(class_level_weights(one_hot.view()).unwrap(), array![1.0, 0.0, 0.0, 0.0]);
        let uniform = Array2::from_elem((3, 4), 0.25);
        assert_eq!(class_level_weights(uniform.view()).unwrap(), Array1::from_elem(4, 1.0));
        let w = class_level_weights(array![[0.7, 0.3], [0.5, 0.5]].view()).unwrap();
        assert_relative_eq!(w[0], 1.0);
        assert_relative_eq!(w[1], 0.4 / 0.6, epsilon = 1e-12);
        assert!(class_level_weights(Array2::<f64>::zeros((0, 2)).view()).is_err());
    }

    #[test]
    fn source_weights() {
        assert_eq!(source_instance_weights(array![0.5, 0.5].view()).unwrap(), array![1.0, 1.0]);
        let w = source_instance_weights(array![0.9, 0.1].view()).unwrap();
        assert_relative_eq!(w[0], 0.2, epsilon = 1e-12);
        assert_relative_eq!(w[1], 1.8, epsilon = 1e-12);
        assert!(matches!(
            source_instance_weights(array![1.0, 1.0].view()),
            Err(Error::DegenerateWeights(_))
        ));
        let w = source_instance_weights(array![1.0 + 1e-7, 0.5].view()).unwrap();
        assert_eq!(w, array![0.0, 2.0]);
        assert!(source_instance_weights(array![f64::NAN, 0.5].view()).is_err());
    }

    #[test]
    fn target_weights() {
        let p = array![[0.0, 1.0, 0.0, 0.0], [0.25, 0.25, 0.25, 0.25], [0.5, 0.3, 0.15, 0.05]];
        assert_eq!(target_instance_weights(p.view()), array![1.0, 0.25, 0.5]);
    }

    #[test]
    fn auxiliary_closed_forms() {
        let leaky = array![[0.5, 0.25]];
        let half = array![0.5];
        let l = auxiliary_losses(leaky.view(), &[0], half.view(), array![0.5, 0.5].view()).unwrap();
        assert_relative_eq!(l.discriminator, 2.0 * 2.0f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(l.classifier, -(0.5f64.ln() + 0.75f64.ln()), epsilon = 1e-12);
        assert_relative_eq!(l.classifier, 0.980829, epsilon = 1e-6);

        let perfect = array![[1.0 - 1e-12, 1e-12]];
        let l = auxiliary_losses(perfect.view(), &[0], half.view(), half.view()).unwrap();
        assert!(l.classifier < 1e-6);
    }

    #[test]
    fn saturated_scores_are_clamped() {
        let leaky = array![[0.5, 0.25]];
        let l = auxiliary_losses(leaky.view(), &[0], array![0.0].view(), array![1.0].view()).unwrap();
        let expected = -2.0 * PROB_EPS.ln();
        assert_relative_eq!(l.discriminator, expected, max_relative = 1e-6);
    }

    proptest::proptest! {
        #[test]
        fn source_weights_are_scale_free(raw in proptest::collection::vec(0.01f64..0.09, 1..16), k in 0.5f64..10.0) {
            let a = source_instance_weights(raw.iter().map(|r| 1.0 - r).collect::<Array1<f64>>().view()).unwrap();
            let b = source_instance_weights(raw.iter().map(|r| 1.0 - k * r).collect::<Array1<f64>>().view()).unwrap();
            proptest::prop_assert!((a.mean().unwrap() - 1.0).abs() < 1e-9);
            for (x, y) in a.iter().zip(b.iter()) {
                proptest::prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn class_weights_ignore_row_order(rows in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 3), 2..10)) {
            let norm = |r: &Vec<f64>| { let s: f64 = r.iter().sum(); r.iter().map(|v| v / s).collect::<Vec<_>>() };
            let flat: Vec<f64> = rows.iter().flat_map(norm).collect();
            let m = Array2::from_shape_vec((rows.len(), 3), flat).unwrap();
            let mut rev = m.clone();
            rev.invert_axis(Axis(0));
            let (a, b) = (class_level_weights(m.view()).unwrap(), class_level_weights(rev.view()).unwrap());
            proptest::prop_assert!((a.iter().copied().fold(0.0, f64::max) - 1.0).abs() < 1e-12);
            for (x, y) in a.iter().zip(b.iter()) {
                proptest::prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
