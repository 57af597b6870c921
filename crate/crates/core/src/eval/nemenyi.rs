use crate::error::{Error, Result};

pub const SUPPORTED_ALPHAS: [f64; 2] = [0.05, 0.10];

/// Two-tailed Nemenyi critical values `q_alpha / sqrt(2)` for 2..=20 methods.
const Q_05: [f64; 19] = [
    1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164, 3.219, 3.268, 3.313, 3.354, 3.391, 3.426, 3.458,
    3.489, 3.517, 3.544,
];
const Q_10: [f64; 19] = [
    1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920, 2.978, 3.030, 3.077, 3.120, 3.159, 3.196, 3.230,
    3.261, 3.291, 3.319,
];

/// Critical value for comparing `methods` classifiers; supports 3..=20 methods.
pub fn critical_value(methods: usize, alpha: f64) -> Result<f64> {
    let table = if (alpha - 0.05).abs() < 1e-12 {
        &Q_05
    } else if (alpha - 0.10).abs() < 1e-12 {
        &Q_10
    } else {
        return Err(Error::UnsupportedMethods { methods, alpha });
    };
    if !(3..=20).contains(&methods) {
        return Err(Error::UnsupportedMethods { methods, alpha });
    }
    Ok(table[methods - 2])
}
