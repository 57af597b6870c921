//! One optimization step: forward through every head, the four losses and
//! their parameter gradients routed by the update rules.

use std::collections::BTreeMap;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;

use super::losses::{cdan_loss_grad, classification_loss_grad, CdanInputs, TermLosses};
use crate::error::{Error, Result};
use crate::gap::{multi_layer_discrepancy, KernelPower, KernelSpec, LayerPair};
use crate::mix::{rf_mixup_batch, LabelRule, MixConfig};
use crate::net::{multilinear_backward, multilinear_map, Mode, NetParams};
use crate::weights::{auxiliary_losses_grad, source_instance_weights, target_instance_weights};
use crate::Float;

/// Labeled source rows and unlabeled target rows of one batch.
#[derive(Debug, Clone, Copy)]
pub struct StepBatch<'a, T> {
    pub source: ArrayView2<'a, T>,
    pub labels: &'a [usize],
    pub target: ArrayView2<'a, T>,
}

/// Which losses contribute gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Terms {
    pub classification: bool,
    pub cdan: bool,
    pub mmsd: bool,
    pub aux: bool,
}

impl Terms {
    pub const ALL: Terms = Terms { classification: true, cdan: true, mmsd: true, aux: true };
    pub const NONE: Terms = Terms { classification: false, cdan: false, mmsd: false, aux: false };
}

/// Everything besides the batch that shapes a step.
#[derive(Debug, Clone, Copy)]
pub struct StepSettings<'a, T> {
    pub terms: Terms,
    /// Gradient-reversal scale applied to the CDAN gradient entering the features.
    pub mu: f64,
    pub gamma: f64,
    pub kernel: &'a KernelSpec,
    pub power: KernelPower,
    /// Mixing settings; `None` drops the mixed term.
    pub mix: Option<(&'a MixConfig, LabelRule)>,
    pub weighting: bool,
    pub omega_c: ArrayView1<'a, T>,
    /// Pseudo-class sizes of the target domain used by the mixing rule.
    pub class_counts: &'a BTreeMap<usize, usize>,
}

/// Quantities that enter the losses without carrying gradient.
#[derive(Debug, Clone)]
pub struct Detached<T> {
    pub pseudo_source: Array2<T>,
    pub pseudo_target: Array2<T>,
    pub omega_si: Array1<T>,
    pub omega_ti: Array1<T>,
}

pub struct StepOutput<T> {
    pub losses: TermLosses,
    pub grads: NetParams<T>,
    pub detached: Detached<T>,
}

fn cat<T: Float>(parts: &[ArrayView2<T>]) -> Result<Array2<T>> {
    concatenate(Axis(0), parts).map_err(|e| Error::Shape(e.to_string()))
}

/// Computes the enabled losses and accumulates their gradients.
///
/// With `frozen` set, pseudo-labels and instance weights are taken from it
/// instead of the current forward pass, which makes the returned losses a
/// smooth function of the parameters for finite-difference checks.
pub fn compute_step<T: Float, R: Rng + ?Sized>(
    net: &mut NetParams<T>,
    batch: &StepBatch<'_, T>,
    st: &StepSettings<'_, T>,
    frozen: Option<&Detached<T>>,
    rng: &mut R,
) -> Result<StepOutput<T>> {
    let bs = batch.source.nrows();
    let bt = batch.target.nrows();
    if bs == 0 || bt == 0 {
        return Err(Error::InvalidBatch("both domains need at least one row".into()));
    }
    if batch.labels.len() != bs {
        return Err(Error::Shape(format!("{bs} source rows vs {} labels", batch.labels.len())));
    }
    let x = cat(&[batch.source, batch.target])?;
    let fb = net.feature_extract(x.view(), Mode::Train, rng)?;
    let cls = net.classify(fb.z2.view())?;
    let probs_s = cls.probs.slice(s![..bs, ..]);
    let probs_t = cls.probs.slice(s![bs.., ..]);

    let d = match frozen {
        Some(f) => f.clone(),
        None => {
            let (omega_si, omega_ti) = if st.weighting {
                let aux = net.aux_forward(fb.rows.slice(s![..bs, ..]), Mode::Eval, rng)?;
                // a batch the auxiliary head calls fully source carries no ranking; weigh it evenly
                let omega_si = match source_instance_weights(aux.domain_score.view()) {
                    Err(Error::DegenerateWeights(_)) => Array1::ones(bs),
                    other => other?,
                };
                (omega_si, target_instance_weights(probs_t))
            } else {
                (Array1::ones(bs), Array1::ones(bt))
            };
            Detached { pseudo_source: probs_s.to_owned(), pseudo_target: probs_t.to_owned(), omega_si, omega_ti }
        }
    };

    let mut grads = net.zeros_like();
    let mut dz1 = Array2::zeros(fb.z1.raw_dim());
    let mut dz2 = Array2::zeros(fb.z2.raw_dim());
    let mut losses = TermLosses::default();

    if st.terms.classification {
        let (l, g) = classification_loss_grad(probs_s, batch.labels, st.omega_c)?;
        losses.classification = l.as_f64();
        let mut d_logits = Array2::zeros(cls.logits.raw_dim());
        d_logits.slice_mut(s![..bs, ..]).assign(&g);
        dz2 += &net.classifier_backward(fb.z2.view(), d_logits.view(), &mut grads);
    }

    if st.terms.cdan {
        let z2s = fb.z2.slice(s![..bs, ..]);
        let z2t = fb.z2.slice(s![bs.., ..]);
        let hs = multilinear_map(z2s, d.pseudo_source.view())?;
        let ht = multilinear_map(z2t, d.pseudo_target.view())?;
        let mixed = match st.mix {
            Some((cfg, rule)) if bt >= 2 => {
                Some(rf_mixup_batch(z2t, d.pseudo_target.view(), st.class_counts, cfg, rule, rng)?)
            }
            _ => None,
        };
        let h = match &mixed {
            Some(m) => cat(&[hs.view(), ht.view(), m.z_rfm.view()])?,
            None => cat(&[hs.view(), ht.view()])?,
        };
        let disc = net.cdan_discriminate(h.view(), Mode::Train, rng)?;
        let p = &disc.p_source;
        let (l, g) = cdan_loss_grad(CdanInputs {
            d_src: p.slice(s![..bs]),
            d_tgt: p.slice(s![bs..bs + bt]),
            d_mix: p.slice(s![bs + bt..]),
            omega_si: d.omega_si.view(),
            omega_ti: d.omega_ti.view(),
        })?;
        losses.cdan = l.as_f64();
        let dp = concatenate(Axis(0), &[g.d_src.view(), g.d_tgt.view(), g.d_mix.view()])
            .map_err(|e| Error::Shape(e.to_string()))?;
        let d_margin = Zip::from(&dp).and(p).map_collect(|&g, &p| g * p * (T::one() - p));
        let dh = net.cdan_backward(&disc, d_margin.view(), &mut grads);

        // gradient reversal: the features ascend the discriminator loss
        let rev = T::lit(-st.mu);
        let dfs = multilinear_backward(dh.slice(s![..bs, ..]), d.pseudo_source.view());
        dz2.slice_mut(s![..bs, ..]).scaled_add(rev, &dfs);
        let dft = multilinear_backward(dh.slice(s![bs..bs + bt, ..]), d.pseudo_target.view());
        dz2.slice_mut(s![bs.., ..]).scaled_add(rev, &dft);
        if let Some(m) = &mixed {
            let de = multilinear_backward(dh.slice(s![bs + bt.., ..]), m.y_rfm.view());
            for (i, &j) in m.partner.iter().enumerate() {
                let le = m.lambda_e[i];
                dz2.row_mut(bs + i).scaled_add(rev * le, &de.row(i));
                dz2.row_mut(bs + j).scaled_add(rev * (T::one() - le), &de.row(i));
            }
        }
    }

    if st.terms.mmsd {
        let r = multi_layer_discrepancy(
            LayerPair { source: fb.z1.slice(s![..bs, ..]), target: fb.z1.slice(s![bs.., ..]) },
            LayerPair { source: fb.z2.slice(s![..bs, ..]), target: fb.z2.slice(s![bs.., ..]) },
            d.omega_si.view(),
            d.omega_ti.view(),
            st.kernel,
            st.power,
        )?;
        losses.mmsd = r.value.as_f64();
        let g = T::lit(st.gamma);
        for (dz, layer) in [(&mut dz1, &r.layers[0]), (&mut dz2, &r.layers[1])] {
            dz.slice_mut(s![..bs, ..]).scaled_add(g, &layer.grad_source);
            dz.slice_mut(s![bs.., ..]).scaled_add(g, &layer.grad_target);
        }
    }

    if st.terms.aux {
        let aux = net.aux_forward(fb.rows.view(), Mode::Train, rng)?;
        let (l, g) = auxiliary_losses_grad(
            aux.leaky.slice(s![..bs, ..]),
            batch.labels,
            aux.domain_score.slice(s![..bs]),
            aux.domain_score.slice(s![bs..]),
        )?;
        losses.aux = l.total().as_f64();
        let mut d_leaky = Array2::zeros(aux.leaky.raw_dim());
        d_leaky.slice_mut(s![..bs, ..]).assign(&g.src_leaky);
        let d_score = concatenate(Axis(0), &[g.src_scores.view(), g.tgt_scores.view()])
            .map_err(|e| Error::Shape(e.to_string()))?;
        net.aux_backward(&aux, d_leaky.view(), d_score.view(), &mut grads);
    }

    if st.terms.classification || st.terms.cdan || st.terms.mmsd {
        net.feature_backward(&fb, None, Some(dz1.view()), Some(dz2.view()), &mut grads, false);
    }
    Ok(StepOutput { losses, grads, detached: d })
}
