//! Multi-kernel maximum mean (square) discrepancy between weighted samples.
//!
//! With `K = sum_u xi_u exp(-|x - y|^2 / (2 sigma_u^2))`, the biased weighted
//! statistic is
//!
//! ```text
//! 1/ns^2 sum ws_i ws_j K^p(s_i, s_j) + 1/nt^2 sum wt_i wt_j K^p(t_i, t_j)
//!   - 2/(ns nt) sum ws_i wt_j K^p(s_i, t_j)
//! ```
//!
//! with `p = 2` for the square discrepancy (MMSD) and `p = 1` for plain MMD.
//! Diagonal terms are kept.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Float;

fn default_bandwidths() -> Vec<f64> {
    vec![0.001, 0.01, 1.0, 10.0, 100.0]
}

/// Gaussian mixture kernel: squared bandwidths `sigma_u^2` and coefficients `xi_u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(default = "default_bandwidths")]
    pub bandwidths: Vec<f64>,
    /// Empty means uniform `1/U`.
    #[serde(default)]
    pub coeffs: Vec<f64>,
    /// Multiply every bandwidth by the median pairwise squared distance of the batch.
    #[serde(default)]
    pub median_scaled: bool,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::uniform(default_bandwidths())
    }
}

impl KernelSpec {
    pub fn uniform(bandwidths: Vec<f64>) -> Self {
        let u = bandwidths.len().max(1) as f64;
        let coeffs = vec![1.0 / u; bandwidths.len()];
        Self { bandwidths, coeffs, median_scaled: false }
    }

    pub fn coefficients(&self) -> Vec<f64> {
        if self.coeffs.is_empty() {
            vec![1.0 / self.bandwidths.len().max(1) as f64; self.bandwidths.len()]
        } else {
            self.coeffs.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let coeffs = self.coefficients();
        if self.bandwidths.is_empty() || coeffs.len() != self.bandwidths.len() {
            return Err(Error::Config(format!(
                "{} bandwidths with {} coefficients",
                self.bandwidths.len(),
                coeffs.len()
            )));
        }
        if self.bandwidths.iter().any(|&b| !(b > 0.0)) {
            return Err(Error::Config("bandwidths must be positive".into()));
        }
        if coeffs.iter().any(|&c| !(c >= 0.0)) || !(coeffs.iter().sum::<f64>() > 0.0) {
            return Err(Error::Config("kernel coefficients must be nonnegative with positive sum".into()));
        }
        Ok(())
    }
}

/// Power applied to the mixture kernel inside the discrepancy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelPower {
    /// `K`: maximum mean discrepancy.
    Mmd,
    /// `K^2`: maximum mean square discrepancy.
    Mmsd,
}

/// Resolved per-call kernel parameters in the working precision.
struct Mixture<T> {
    inv_two_var: Vec<T>,
    inv_var: Vec<T>,
    coeffs: Vec<T>,
}

impl<T: Float> Mixture<T> {
    fn new(spec: &KernelSpec, scale: f64) -> Self {
        Self {
            inv_two_var: spec.bandwidths.iter().map(|&b| T::lit(1.0 / (2.0 * b * scale))).collect(),
            inv_var: spec.bandwidths.iter().map(|&b| T::lit(1.0 / (b * scale))).collect(),
            coeffs: spec.coefficients().into_iter().map(T::lit).collect(),
        }
    }

    /// `(K, sum_u xi_u k_u / sigma_u^2)` at squared distance `d2`.
    fn eval(&self, d2: T) -> (T, T) {
        let mut k = T::zero();
        let mut slope = T::zero();
        for u in 0..self.coeffs.len() {
            let ku = self.coeffs[u] * (-d2 * self.inv_two_var[u]).exp();
            k += ku;
            slope += ku * self.inv_var[u];
        }
        (k, slope)
    }
}

fn sq_dist<T: Float>(a: ArrayView1<T>, b: ArrayView1<T>) -> T {
    a.iter().zip(b.iter()).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

pub fn multi_gaussian_kernel<T: Float>(x: ArrayView1<T>, y: ArrayView1<T>, spec: &KernelSpec) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("kernel arguments of length {} and {}", x.len(), y.len())));
    }
    spec.validate()?;
    Ok(Mixture::new(spec, 1.0).eval(sq_dist(x, y)).0)
}

/// Median of all pairwise squared distances among the rows of `zs` and `zt`.
pub fn median_sq_distance<T: Float>(zs: ArrayView2<T>, zt: ArrayView2<T>) -> f64 {
    let rows: Vec<_> = zs.rows().into_iter().chain(zt.rows()).collect();
    let mut d: Vec<f64> = Vec::with_capacity(rows.len() * rows.len() / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(sq_dist(rows[i], rows[j]).as_f64());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d[d.len() / 2];
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Discrepancy value with gradients with respect to every source and target row.
#[derive(Debug, Clone)]
pub struct Discrepancy<T> {
    pub value: T,
    pub grad_source: Array2<T>,
    pub grad_target: Array2<T>,
}

fn check_inputs<T: Float>(zs: ArrayView2<T>, zt: ArrayView2<T>, ws: ArrayView1<T>, wt: ArrayView1<T>) -> Result<()> {
    if zs.nrows() == 0 || zt.nrows() == 0 {
        return Err(Error::InvalidInput("both domains need at least one row".into()));
    }
    if zs.ncols() != zt.ncols() {
        return Err(Error::Shape(format!("source width {} vs target width {}", zs.ncols(), zt.ncols())));
    }
    if ws.len() != zs.nrows() || wt.len() != zt.nrows() {
        return Err(Error::Shape("one weight per row required".into()));
    }
    if ws.iter().chain(wt.iter()).any(|w| !(w.is_finite() && *w >= T::zero())) {
        return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
    }
    Ok(())
}

/// Accumulates one block `coef * sum_ij wa_i wb_j K^p(a_i, b_j)` and its gradient.
#[allow(clippy::too_many_arguments)]
fn block<T: Float>(
    a: ArrayView2<T>,
    b: ArrayView2<T>,
    wa: ArrayView1<T>,
    wb: ArrayView1<T>,
    coef: T,
    mix: &Mixture<T>,
    power: KernelPower,
    mut grads: Option<(&mut Array2<T>, &mut Array2<T>)>,
) -> T {
    let two = T::lit(2.0);
    let mut total = T::zero();
    let p = a.ncols();
    let mut diff = vec![T::zero(); p];
    for (i, ai) in a.rows().into_iter().enumerate() {
        let mut row_sum = T::zero();
        for (j, bj) in b.rows().into_iter().enumerate() {
            let mut d2 = T::zero();
            for k in 0..p {
                diff[k] = ai[k] - bj[k];
                d2 += diff[k] * diff[k];
            }
            let (kv, slope) = mix.eval(d2);
            let w = wa[i] * wb[j];
            let (val, dval_dk) = match power {
                KernelPower::Mmd => (kv, T::one()),
                KernelPower::Mmsd => (kv * kv, two * kv),
            };
            row_sum += w * val;
            if let Some((ga, gb)) = grads.as_mut() {
                // d K / d a_i = -slope * (a_i - b_j)
                let g = -coef * w * dval_dk * slope;
                if g != T::zero() {
                    for k in 0..p {
                        ga[[i, k]] += g * diff[k];
                        gb[[j, k]] -= g * diff[k];
                    }
                }
            }
        }
        total += row_sum;
    }
    coef * total
}

fn discrepancy<T: Float>(
    zs: ArrayView2<T>,
    zt: ArrayView2<T>,
    ws: ArrayView1<T>,
    wt: ArrayView1<T>,
    spec: &KernelSpec,
    power: KernelPower,
    with_grad: bool,
) -> Result<Discrepancy<T>> {
    check_inputs(zs, zt, ws, wt)?;
    spec.validate()?;
    let scale = if spec.median_scaled { median_sq_distance(zs, zt) } else { 1.0 };
    let mix = Mixture::new(spec, scale);
    let (ns, nt) = (T::lit(zs.nrows() as f64), T::lit(zt.nrows() as f64));
    let mut gs = Array2::zeros(zs.raw_dim());
    let mut gt = Array2::zeros(zt.raw_dim());

    let value = if with_grad {
        // within-domain blocks: both arguments belong to the same rows
        let mut tmp = Array2::zeros(zs.raw_dim());
        let vss = block(zs, zs, ws, ws, T::one() / (ns * ns), &mix, power, Some((&mut gs, &mut tmp)));
        gs += &tmp;
        let mut tmp = Array2::zeros(zt.raw_dim());
        let vtt = block(zt, zt, wt, wt, T::one() / (nt * nt), &mix, power, Some((&mut gt, &mut tmp)));
        gt += &tmp;
        let vst = block(zs, zt, ws, wt, T::lit(-2.0) / (ns * nt), &mix, power, Some((&mut gs, &mut gt)));
        vss + vtt + vst
    } else {
        block(zs, zs, ws, ws, T::one() / (ns * ns), &mix, power, None)
            + block(zt, zt, wt, wt, T::one() / (nt * nt), &mix, power, None)
            + block(zs, zt, ws, wt, T::lit(-2.0) / (ns * nt), &mix, power, None)
    };
    Ok(Discrepancy { value, grad_source: gs, grad_target: gt })
}

/// Biased weighted MK-MMSD estimate.
pub fn weighted_mmsd<T: Float>(
    zs: ArrayView2<T>,
    zt: ArrayView2<T>,
    ws: ArrayView1<T>,
    wt: ArrayView1<T>,
    spec: &KernelSpec,
) -> Result<T> {
    Ok(discrepancy(zs, zt, ws, wt, spec, KernelPower::Mmsd, false)?.value)
}

/// Weighted discrepancy of the requested power, with row gradients.
pub fn weighted_discrepancy_grad<T: Float>(
    zs: ArrayView2<T>,
    zt: ArrayView2<T>,
    ws: ArrayView1<T>,
    wt: ArrayView1<T>,
    spec: &KernelSpec,
    power: KernelPower,
) -> Result<Discrepancy<T>> {
    discrepancy(zs, zt, ws, wt, spec, power, true)
}

/// Inputs of the two-layer loss: bottleneck activations of both domains.
#[derive(Debug, Clone, Copy)]
pub struct LayerPair<'a, T> {
    pub source: ArrayView2<'a, T>,
    pub target: ArrayView2<'a, T>,
}

/// Sum of the discrepancies measured at the first and second bottleneck layers.
#[derive(Debug, Clone)]
pub struct MultiLayerDiscrepancy<T> {
    pub value: T,
    pub layers: [Discrepancy<T>; 2],
}

pub fn mkmmsd_loss<T: Float>(
    z1: LayerPair<'_, T>,
    z2: LayerPair<'_, T>,
    ws: ArrayView1<T>,
    wt: ArrayView1<T>,
    spec: &KernelSpec,
) -> Result<T> {
    Ok(multi_layer_discrepancy(z1, z2, ws, wt, spec, KernelPower::Mmsd)?.value)
}

pub fn multi_layer_discrepancy<T: Float>(
    z1: LayerPair<'_, T>,
    z2: LayerPair<'_, T>,
    ws: ArrayView1<T>,
    wt: ArrayView1<T>,
    spec: &KernelSpec,
    power: KernelPower,
) -> Result<MultiLayerDiscrepancy<T>> {
    let d1 = weighted_discrepancy_grad(z1.source, z1.target, ws, wt, spec, power)?;
    let d2 = weighted_discrepancy_grad(z2.source, z2.target, ws, wt, spec, power)?;
    Ok(MultiLayerDiscrepancy { value: d1.value + d2.value, layers: [d1, d2] })
}
