#![allow(dead_code)]

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use ptpai::gap::{KernelPower, KernelSpec};
use ptpai::mix::{LabelRule, MixConfig};
use ptpai::net::{Architecture, ConvSpec, NetLayout, NetParams, ParamGroup};
use ptpai::train::{compute_step, Detached, StepBatch, StepOutput, StepSettings, Terms, TermLosses};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn small_layout() -> NetLayout {
    NetLayout {
        conv: vec![
            ConvSpec { kernel: 8, stride: 2, filters: 3 },
            ConvSpec { kernel: 4, stride: 2, filters: 4 },
            ConvSpec { kernel: 3, stride: 2, filters: 5 },
        ],
        bottleneck: vec![6, 5],
        head_hidden: vec![6, 4],
        dropout: 0.5,
    }
}

pub struct Fixture {
    pub net: NetParams<f64>,
    pub xs: Array2<f64>,
    pub ys: Vec<usize>,
    pub xt: Array2<f64>,
    pub omega_c: Array1<f64>,
    pub counts: BTreeMap<usize, usize>,
    pub kernel: KernelSpec,
    pub mix: MixConfig,
}

/// Four source and four target rows through a small network in double precision.
pub fn fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = 64;
    let xs = Array2::from_shape_simple_fn((4, len), || rng.random_range(-1.0..1.0));
    let xt = Array2::from_shape_simple_fn((4, len), || rng.random_range(-1.0..1.0) * 1.5);
    let mut net = NetParams::new(Architecture::with_layout(len, 4, small_layout()), &mut rng).unwrap();
    // move every parameter off zero so no ReLU sits exactly on its kink
    for g in ParamGroup::ALL {
        for t in net.group_tensors_mut(g) {
            t.iter_mut().for_each(|v| *v += rng.random_range(-0.05..0.15));
        }
    }
    Fixture {
        net,
        xs,
        ys: vec![0, 1, 2, 3],
        xt,
        omega_c: ndarray::array![1.0, 0.8, 0.6, 0.3],
        counts: BTreeMap::from([(0, 40), (1, 4), (2, 10), (3, 1)]),
        kernel: KernelSpec::uniform(vec![0.5, 2.0, 8.0]),
        mix: MixConfig::default(),
    }
}

pub const STEP_SEED: u64 = 77;

pub fn step(f: &mut Fixture, terms: Terms, mu: f64, gamma: f64, frozen: Option<&Detached<f64>>) -> StepOutput<f64> {
    let st = StepSettings {
        terms,
        mu,
        gamma,
        kernel: &f.kernel,
        power: KernelPower::Mmsd,
        mix: Some((&f.mix, LabelRule::Rebalanced)),
        weighting: true,
        omega_c: f.omega_c.view(),
        class_counts: &f.counts,
    };
    let batch = StepBatch { source: f.xs.view(), labels: &f.ys, target: f.xt.view() };
    compute_step(&mut f.net, &batch, &st, frozen, &mut ChaCha8Rng::seed_from_u64(STEP_SEED)).unwrap()
}

/// One row of a gradient audit.
#[derive(Debug)]
pub struct AuditRow {
    pub group: ParamGroup,
    pub tensor: usize,
    pub rel_err: f64,
    pub norm: f64,
}

/// Compares analytic and central-difference gradients of `loss` for up to
/// `per_tensor` coordinates of every tensor in `groups`. `sign` maps the loss
/// gradient to the analytic gradient stored for each group.
pub fn audit(
    f: &mut Fixture,
    terms: Terms,
    mu: f64,
    gamma: f64,
    loss: fn(&TermLosses) -> f64,
    groups: &[(ParamGroup, f64)],
    per_tensor: usize,
) -> Vec<AuditRow> {
    let base = step(f, terms, mu, gamma, None);
    let frozen = base.detached.clone();
    let h = 1e-5;
    let mut rows = Vec::new();
    for &(group, sign) in groups {
        let analytic: Vec<Vec<f64>> = base.grads.group_tensors(group).iter().map(|t| t.to_vec()).collect();
        for (ti, grad) in analytic.iter().enumerate() {
            let stride = (grad.len() / per_tensor).max(1);
            let mut num = Vec::new();
            let mut ana = Vec::new();
            for k in (0..grad.len()).step_by(stride).take(per_tensor) {
                let orig = f.net.group_tensors(group)[ti][k];
                f.net.group_tensors_mut(group)[ti][k] = orig + h;
                let lp = loss(&step(f, terms, mu, gamma, Some(&frozen)).losses);
                f.net.group_tensors_mut(group)[ti][k] = orig - h;
                let lm = loss(&step(f, terms, mu, gamma, Some(&frozen)).losses);
                f.net.group_tensors_mut(group)[ti][k] = orig;
                num.push(sign * (lp - lm) / (2.0 * h));
                ana.push(grad[k]);
            }
            let diff = num.iter().zip(&ana).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let na = ana.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nn = num.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = na.max(nn);
            let rel_err = diff / scale.max(1e-6);
            rows.push(AuditRow { group, tensor: ti, rel_err, norm: scale });
        }
    }
    rows
}
