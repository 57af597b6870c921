//! RF-Mixup: feature interpolation with a label mixing factor re-assigned
//! toward the minority class.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::multilinear_map;
use crate::Float;

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixConfig {
    #[serde(default = "half")]
    pub alpha1: f64,
    #[serde(default = "half")]
    pub alpha2: f64,
    /// Decision boundary on the class-size ratio.
    #[serde(default = "half")]
    pub m: f64,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self { alpha1: 0.5, alpha2: 0.5, m: 0.5 }
    }
}

impl MixConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 > 0.0 && self.alpha2 > 0.0) {
            return Err(Error::Config("Beta shape parameters must be positive".into()));
        }
        if !(self.m > 0.0 && self.m < 1.0) {
            return Err(Error::Config(format!("decision boundary m = {} outside (0, 1)", self.m)));
        }
        Ok(())
    }
}

/// How the label factor relates to the feature factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelRule {
    /// Minority-favoring reassignment.
    Rebalanced,
    /// Ordinary Mixup: the label factor equals the feature factor.
    Plain,
}

/// Draws `lambda_e ~ Beta(alpha1, alpha2)`.
pub fn sample_mix_factor<R: Rng + ?Sized>(cfg: &MixConfig, rng: &mut R) -> Result<f64> {
    let beta = Beta::new(cfg.alpha1, cfg.alpha2).map_err(|e| Error::Config(format!("mix distribution: {e}")))?;
    Ok(beta.sample(rng))
}

/// Label mixing factor for a pair drawn from classes of size `n_i` and `n_j`.
pub fn label_mix_factor(lambda_e: f64, n_i: usize, n_j: usize, m: f64) -> f64 {
    let ratio = n_i.max(1) as f64 / n_j.max(1) as f64;
    if ratio <= m {
        lambda_e.max(1.0 - lambda_e)
    } else if ratio >= 1.0 / m {
        lambda_e.min(1.0 - lambda_e)
    } else {
        lambda_e
    }
}

/// Mixed rows plus what is needed to route gradients back to the originals.
#[derive(Debug, Clone)]
pub struct MixedBatch<T> {
    pub e_rfm: Array2<T>,
    pub y_rfm: Array2<T>,
    pub z_rfm: Array2<T>,
    /// `partner[i]` is the row mixed into row `i`.
    pub partner: Vec<usize>,
    pub lambda_e: Array1<T>,
    pub lambda_y: Array1<T>,
}

pub(crate) fn argmax<T: Float>(row: ndarray::ArrayView1<T>) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Pairs every row with a random partner and mixes features and pseudo-labels.
///
/// `class_counts` maps a class to its (pseudo) size in the target domain; the
/// size of a row's class is looked up from the argmax of its pseudo-label.
pub fn rf_mixup_batch<T: Float, R: Rng + ?Sized>(
    features: ArrayView2<T>,
    pseudo: ArrayView2<T>,
    class_counts: &BTreeMap<usize, usize>,
    cfg: &MixConfig,
    rule: LabelRule,
    rng: &mut R,
) -> Result<MixedBatch<T>> {
    cfg.validate()?;
    let b = features.nrows();
    if b < 2 {
        return Err(Error::InvalidBatch(format!("mixing needs at least 2 rows, got {b}")));
    }
    if pseudo.nrows() != b {
        return Err(Error::Shape(format!("{b} feature rows but {} pseudo-label rows", pseudo.nrows())));
    }
    let mut partner: Vec<usize> = (0..b).collect();
    partner.shuffle(rng);

    let class_of: Vec<usize> = pseudo.axis_iter(Axis(0)).map(argmax).collect();
    let count = |c: usize| {
        class_counts
            .get(&c)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("no class count for pseudo-class {c}")))
    };

    let mut e_rfm = Array2::zeros(features.raw_dim());
    let mut y_rfm = Array2::zeros(pseudo.raw_dim());
    let mut lambda_e = Array1::zeros(b);
    let mut lambda_y = Array1::zeros(b);
    for i in 0..b {
        let j = partner[i];
        let le = sample_mix_factor(cfg, rng)?;
        let ly = match rule {
            LabelRule::Rebalanced => label_mix_factor(le, count(class_of[i])?, count(class_of[j])?, cfg.m),
            LabelRule::Plain => le,
        };
        let (le_t, ly_t) = (T::lit(le), T::lit(ly));
        e_rfm
            .row_mut(i)
            .assign(&(&features.row(i) * le_t + &features.row(j) * (T::one() - le_t)));
        y_rfm
            .row_mut(i)
            .assign(&(&pseudo.row(i) * ly_t + &pseudo.row(j) * (T::one() - ly_t)));
        lambda_e[i] = le_t;
        lambda_y[i] = ly_t;
    }
    let z_rfm = multilinear_map(e_rfm.view(), y_rfm.view())?;
    Ok(MixedBatch { e_rfm, y_rfm, z_rfm, partner, lambda_e, lambda_y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worked_example_favors_the_minority() {
        assert_eq!(label_mix_factor(0.8, 1200, 24, 0.5), 0.19999999999999996);
        assert!((label_mix_factor(0.8, 1200, 24, 0.5) - 0.2).abs() < 1e-15);
        assert_eq!(label_mix_factor(0.3, 10, 1000, 0.5), 0.7);
        for (ni, nj) in [(1, 1000), (1000, 1), (10, 10)] {
            assert_eq!(label_mix_factor(0.5, ni, nj, 0.5), 0.5);
        }
        // balanced region keeps the feature factor
        assert_eq!(label_mix_factor(0.8, 10, 12, 0.5), 0.8);
    }

    #[test]
    fn beta_draws_have_the_right_mean_and_concentration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = MixConfig::default();
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_mix_factor(&cfg, &mut rng).unwrap()).collect();
        assert!(draws.iter().all(|v| (0.0..=1.0).contains(v)));
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");

        let tight = MixConfig { alpha1: 500.0, alpha2: 500.0, m: 0.5 };
        let inside = (0..n)
            .filter(|_| (0.45..=0.55).contains(&sample_mix_factor(&tight, &mut rng).unwrap()))
            .count();
        assert!(inside as f64 / n as f64 >= 0.99);
    }

    #[test]
    fn rows_stay_probability_vectors_and_on_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f: Array2<f64> = array![[1.0, 2.0], [3.0, -1.0], [0.0, 0.5], [2.0, 2.0]];
        let p = array![[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.3, 0.7]];
        let counts = BTreeMap::from([(0, 1200), (1, 24)]);
        let mixed = rf_mixup_batch(f.view(), p.view(), &counts, &MixConfig::default(), LabelRule::Rebalanced, &mut rng).unwrap();
        for i in 0..4 {
            assert!((mixed.y_rfm.row(i).sum() - 1.0).abs() < 1e-12);
            let j = mixed.partner[i];
            for k in 0..2 {
                let (lo, hi) = (f[[i, k]].min(f[[j, k]]), f[[i, k]].max(f[[j, k]]));
                assert!(mixed.e_rfm[[i, k]] >= lo - 1e-12 && mixed.e_rfm[[i, k]] <= hi + 1e-12);
            }
            let ci = argmax(p.row(i));
            let cj = argmax(p.row(j));
            let le = mixed.lambda_e[i];
            if ci == 0 && cj == 1 {
                // majority row i, minority row j: j gets the larger share
                assert!((1.0 - mixed.lambda_y[i] - le.max(1.0 - le)).abs() < 1e-12);
            }
        }
        assert_eq!(mixed.z_rfm.dim(), (4, 4));
    }

    #[test]
    fn single_row_batch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = array![[1.0, 2.0]];
        let p = array![[1.0, 0.0]];
        let counts = BTreeMap::from([(0, 1)]);
        assert!(matches!(
            rf_mixup_batch(f.view(), p.view(), &counts, &MixConfig::default(), LabelRule::Plain, &mut rng),
            Err(Error::InvalidBatch(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn label_factor_is_lambda_or_its_complement(le in 0.0f64..=1.0, ni in 1usize..5000, nj in 1usize..5000, m in 0.05f64..0.95) {
            let ly = label_mix_factor(le, ni, nj, m);
            proptest::prop_assert!(ly == le || ly == 1.0 - le);
            let r = ni as f64 / nj as f64;
            if r > m && r < 1.0 / m {
                proptest::prop_assert_eq!(ly, le);
            }
            if r >= 1.0 / m {
                proptest::prop_assert!(1.0 - ly >= 0.5);
            }
        }
    }
}
