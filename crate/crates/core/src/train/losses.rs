use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::{clamp_prob, PROB_EPS};
use crate::Float;

fn inside<T: Float>(p: T) -> bool {
    let eps = T::lit(PROB_EPS);
    p > eps && p < T::one() - eps
}

/// Class-weighted negative log-likelihood of the source labels.
pub fn classification_loss<T: Float>(probs: ArrayView2<T>, labels: &[usize], omega_c: ArrayView1<T>) -> Result<T> {
    Ok(classification_loss_grad(probs, labels, omega_c)?.0)
}

/// Loss and its gradient with respect to the logits that produced `probs`.
pub fn classification_loss_grad<T: Float>(
    probs: ArrayView2<T>,
    labels: &[usize],
    omega_c: ArrayView1<T>,
) -> Result<(T, Array2<T>)> {
    let (n, c) = probs.dim();
    if n == 0 || labels.len() != n {
        return Err(Error::Shape(format!("{n} probability rows vs {} labels", labels.len())));
    }
    if omega_c.len() != c {
        return Err(Error::Shape(format!("{} class weights for {c} classes", omega_c.len())));
    }
    if let Some(l) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidInput(format!("label {l} outside {c} classes")));
    }
    let nf = T::lit(n as f64);
    let mut loss = T::zero();
    let mut grad = Array2::zeros((n, c));
    for (i, &y) in labels.iter().enumerate() {
        let p = probs[[i, y]];
        let w = omega_c[y];
        loss -= w * clamp_prob(p).ln();
        if inside(p) {
            let mut row = grad.row_mut(i);
            row.assign(&(&probs.row(i) * (w / nf)));
            row[y] -= w / nf;
        }
    }
    Ok((loss / nf, grad))
}

/// Discriminator outputs for the three CDAN terms.
#[derive(Debug, Clone, Copy)]
pub struct CdanInputs<'a, T> {
    pub d_src: ArrayView1<'a, T>,
    pub d_tgt: ArrayView1<'a, T>,
    /// Empty when mixing is disabled.
    pub d_mix: ArrayView1<'a, T>,
    pub omega_si: ArrayView1<'a, T>,
    pub omega_ti: ArrayView1<'a, T>,
}

/// Gradients of the CDAN loss with respect to each discriminator output.
#[derive(Debug, Clone)]
pub struct CdanGrads<T> {
    pub d_src: Array1<T>,
    pub d_tgt: Array1<T>,
    pub d_mix: Array1<T>,
}

/// Binary cross-entropy of the conditional discriminator.
pub fn cdan_loss<T: Float>(
    d_src: ArrayView1<T>,
    d_tgt: ArrayView1<T>,
    d_mix: ArrayView1<T>,
    omega_si: ArrayView1<T>,
    omega_ti: ArrayView1<T>,
) -> Result<T> {
    Ok(cdan_loss_grad(CdanInputs { d_src, d_tgt, d_mix, omega_si, omega_ti })?.0)
}

pub fn cdan_loss_grad<T: Float>(x: CdanInputs<'_, T>) -> Result<(T, CdanGrads<T>)> {
    if x.d_src.is_empty() || x.d_tgt.is_empty() {
        return Err(Error::InvalidInput("CDAN loss needs source and target outputs".into()));
    }
    if x.omega_si.len() != x.d_src.len() || x.omega_ti.len() != x.d_tgt.len() {
        return Err(Error::Shape("one instance weight per discriminator output".into()));
    }
    let one = T::one();
    let ns = T::lit(x.d_src.len() as f64);
    let nt = T::lit(x.d_tgt.len() as f64);
    let nb = T::lit(x.d_mix.len().max(1) as f64);
    let mut loss = T::zero();

    let mut g_src = Array1::zeros(x.d_src.len());
    for (i, (&p, &w)) in x.d_src.iter().zip(x.omega_si).enumerate() {
        let q = clamp_prob(p);
        loss -= w * q.ln() / ns;
        if inside(p) {
            g_src[i] = -w / (ns * q);
        }
    }
    let mut g_tgt = Array1::zeros(x.d_tgt.len());
    for (i, (&p, &w)) in x.d_tgt.iter().zip(x.omega_ti).enumerate() {
        let q = clamp_prob(p);
        loss -= w * (one - q).ln() / nt;
        if inside(p) {
            g_tgt[i] = w / (nt * (one - q));
        }
    }
    let mut g_mix = Array1::zeros(x.d_mix.len());
    for (i, &p) in x.d_mix.iter().enumerate() {
        let q = clamp_prob(p);
        loss -= (one - q).ln() / nb;
        if inside(p) {
            g_mix[i] = one / (nb * (one - q));
        }
    }
    Ok((loss, CdanGrads { d_src: g_src, d_tgt: g_tgt, d_mix: g_mix }))
}

/// Per-term losses of one batch or the mean over an epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TermLosses {
    pub classification: f64,
    pub cdan: f64,
    pub mmsd: f64,
    pub aux: f64,
}

impl TermLosses {
    pub fn is_finite(&self) -> bool {
        [self.classification, self.cdan, self.mmsd, self.aux].iter().all(|v| v.is_finite())
    }
}

/// `L_C - mu * L_CDAN + gamma * L_MMSD + L_Aux`.
pub fn total_objective(l: &TermLosses, mu: f64, gamma: f64) -> f64 {
    l.classification - mu * l.cdan + gamma * l.mmsd + l.aux
}

/// Annealed learning rate `lr0 / (1 + 10 p)^0.75`.
pub fn lr_schedule(lr0: f64, progress: f64) -> f64 {
    lr0 / (1.0 + 10.0 * progress.clamp(0.0, 1.0)).powf(0.75)
}

/// Adversarial weight ramp `2 / (1 + exp(-10 p)) - 1`, rising from 0 to about 1.
pub fn warmup_factor(progress: f64) -> f64 {
    2.0 / (1.0 + (-10.0 * progress).exp()) - 1.0
}
