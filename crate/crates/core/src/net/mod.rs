//! The diagnosis network: a four-block 1-D CNN feature extractor, a two-layer
//! bottleneck, the label classifier, the conditional domain discriminator and
//! the auxiliary leaky-softmax classifier whose class sum scores domains.

mod checkpoint;
pub mod layers;

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use layers::Mode;
use layers::{
    dropout_mask, global_avg_pool, global_avg_pool_backward, leaky_softmax_rows, max_pool2, max_pool2_backward, relu3,
    same_padding, softmax_rows, BatchNorm1d, Conv1d, ConvCache, Linear, NormCache,
};

use crate::error::{Error, Result};
use crate::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub filters: usize,
}

fn table_conv() -> Vec<ConvSpec> {
    [(128, 2, 16), (64, 2, 32), (3, 2, 64), (3, 2, 128)]
        .into_iter()
        .map(|(kernel, stride, filters)| ConvSpec { kernel, stride, filters })
        .collect()
}

fn table_hidden() -> Vec<usize> {
    vec![256, 128]
}

fn table_dropout() -> f64 {
    0.5
}

/// Layer sizes independent of the data. Defaults reproduce the reference architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetLayout {
    #[serde(default = "table_conv")]
    pub conv: Vec<ConvSpec>,
    /// FC1/FC2 widths; the last one feeds the classifier.
    #[serde(default = "table_hidden")]
    pub bottleneck: Vec<usize>,
    /// Hidden widths of the discriminator and auxiliary heads.
    #[serde(default = "table_hidden")]
    pub head_hidden: Vec<usize>,
    #[serde(default = "table_dropout")]
    pub dropout: f64,
}

impl Default for NetLayout {
    fn default() -> Self {
        Self { conv: table_conv(), bottleneck: table_hidden(), head_hidden: table_hidden(), dropout: table_dropout() }
    }
}

/// Full network shape: a layout bound to an input length and class count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_len: usize,
    pub n_classes: usize,
    #[serde(flatten)]
    pub layout: NetLayout,
}

impl Architecture {
    pub fn new(input_len: usize, n_classes: usize) -> Self {
        Self::with_layout(input_len, n_classes, NetLayout::default())
    }

    pub fn with_layout(input_len: usize, n_classes: usize, layout: NetLayout) -> Self {
        Self { input_len, n_classes, layout }
    }

    pub fn feature_width(&self) -> usize {
        self.layout.conv.last().map_or(0, |c| c.filters)
    }

    pub fn embedding_width(&self) -> usize {
        *self.layout.bottleneck.last().unwrap_or(&self.feature_width())
    }

    /// Sequence length entering each conv block, plus the length averaged by the final pooling.
    pub fn stage_lengths(&self) -> Result<Vec<usize>> {
        let conv = &self.layout.conv;
        let mut len = self.input_len;
        let mut out = Vec::with_capacity(conv.len() + 1);
        for (i, c) in conv.iter().enumerate() {
            out.push(len);
            let (conv_len, _) = same_padding(len, c.kernel, c.stride);
            len = if i + 1 < conv.len() { conv_len / 2 } else { conv_len };
            if len == 0 {
                return Err(Error::Shape(format!(
                    "input length {} collapses to zero after conv block {}",
                    self.input_len,
                    i + 1
                )));
            }
        }
        out.push(len);
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let l = &self.layout;
        if l.conv.is_empty() || l.bottleneck.is_empty() || l.head_hidden.is_empty() {
            return Err(Error::Config("architecture needs conv blocks, bottleneck and head layers".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if !(0.0..1.0).contains(&l.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", l.dropout)));
        }
        if l.conv.iter().any(|c| c.kernel == 0 || c.stride == 0 || c.filters == 0) {
            return Err(Error::Config("conv kernel, stride and filters must be positive".into()));
        }
        self.stage_lengths().map(|_| ())
    }
}

/// Conv -> batch-norm -> ReLU -> pool, repeated; the last block ends in global average pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor<T> {
    pub convs: Vec<Conv1d<T>>,
    pub norms: Vec<BatchNorm1d<T>>,
}

struct BlockCache<T> {
    conv: ConvCache<T>,
    norm: NormCache<T>,
    relu: Array3<T>,
    pool: Option<Array3<usize>>,
    pooled_len: usize,
}

pub struct ExtractorCache<T> {
    blocks: Vec<BlockCache<T>>,
}

impl<T: Float> FeatureExtractor<T> {
    fn new<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Self {
        let mut in_ch = 1;
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        for c in &arch.layout.conv {
            convs.push(Conv1d::xavier(in_ch, c.filters, c.kernel, c.stride, rng));
            norms.push(BatchNorm1d::new(c.filters));
            in_ch = c.filters;
        }
        Self { convs, norms }
    }

    fn zeros_like(&self) -> Self {
        Self {
            convs: self.convs.iter().map(Conv1d::zeros_like).collect(),
            norms: self.norms.iter().map(BatchNorm1d::zeros_like).collect(),
        }
    }

    fn forward(&mut self, x: ArrayView2<T>, mode: Mode) -> (Array2<T>, ExtractorCache<T>) {
        let (b, d) = x.dim();
        let mut h: Array3<T> = x.to_owned().into_shape_with_order((b, 1, d)).expect("contiguous input");
        let last = self.convs.len() - 1;
        let mut blocks = Vec::with_capacity(self.convs.len());
        let mut features = None;
        for (i, (conv, norm)) in self.convs.iter().zip(self.norms.iter_mut()).enumerate() {
            let (y, conv_cache) = conv.forward(h.view());
            let (mut y, norm_cache) = norm.forward(y.view(), mode);
            let relu = relu3(&mut y);
            let pooled_len = y.dim().2;
            if i < last {
                let (p, idx) = max_pool2(y.view());
                h = p;
                blocks.push(BlockCache { conv: conv_cache, norm: norm_cache, relu, pool: Some(idx), pooled_len });
            } else {
                features = Some(global_avg_pool(y.view()));
                blocks.push(BlockCache { conv: conv_cache, norm: norm_cache, relu, pool: None, pooled_len });
            }
        }
        (features.expect("at least one block"), ExtractorCache { blocks })
    }

    fn backward(&self, cache: &ExtractorCache<T>, d_features: ArrayView2<T>, grads: &mut FeatureExtractor<T>, want_input: bool) -> Option<Array2<T>> {
        let mut d: Option<Array3<T>> = None;
        for i in (0..self.convs.len()).rev() {
            let bc = &cache.blocks[i];
            let mut dy = match &bc.pool {
                None => global_avg_pool_backward(d_features, bc.pooled_len),
                Some(idx) => max_pool2_backward(d.take().expect("gradient from next block").view(), idx, bc.pooled_len),
            };
            dy *= &bc.relu;
            let dn = self.norms[i].backward(&bc.norm, dy.view(), &mut grads.norms[i]);
            d = self.convs[i].backward(&bc.conv, dn.view(), &mut grads.convs[i], i > 0 || want_input);
        }
        d.map(|dx| {
            let (b, _, len) = dx.dim();
            dx.into_shape_with_order((b, len)).expect("single input channel")
        })
    }
}

/// Dense layer optionally followed by ReLU and dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBlock<T> {
    pub linear: Linear<T>,
    pub activate: bool,
}

/// Stack of dense blocks sharing one dropout rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub blocks: Vec<DenseBlock<T>>,
    pub dropout: f64,
}

pub struct MlpCache<T> {
    inputs: Vec<Array2<T>>,
    /// ReLU mask times dropout multiplier, per activated block.
    multipliers: Vec<Option<Array2<T>>>,
}

impl<T: Float> Mlp<T> {
    /// `widths[0]` is the input width; the final layer is linear when `activate_last` is false.
    fn new<R: Rng + ?Sized>(widths: &[usize], activate_last: bool, dropout: f64, rng: &mut R) -> Self {
        let n = widths.len() - 1;
        let blocks = (0..n)
            .map(|i| DenseBlock {
                linear: Linear::xavier(widths[i], widths[i + 1], rng),
                activate: i + 1 < n || activate_last,
            })
            .collect();
        Self { blocks, dropout }
    }

    fn zeros_like(&self) -> Self {
        Self {
            blocks: self
                .blocks
                .iter()
                .map(|b| DenseBlock { linear: b.linear.zeros_like(), activate: b.activate })
                .collect(),
            dropout: self.dropout,
        }
    }

    /// Output of every block, in order.
    fn forward<R: Rng + ?Sized>(&self, x: ArrayView2<T>, mode: Mode, rng: &mut R) -> (Vec<Array2<T>>, MlpCache<T>) {
        let mut outputs: Vec<Array2<T>> = Vec::with_capacity(self.blocks.len());
        let mut inputs = Vec::with_capacity(self.blocks.len());
        let mut multipliers = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let input = outputs.last().map_or_else(|| x.to_owned(), Clone::clone);
            let mut a = block.linear.forward(input.view());
            let mult = block.activate.then(|| {
                let mut m = a.mapv(|v| if v > T::zero() { T::one() } else { T::zero() });
                if mode == Mode::Train && self.dropout > 0.0 {
                    m *= &dropout_mask::<T, R>(a.dim(), self.dropout, rng);
                }
                a *= &m;
                m
            });
            inputs.push(input);
            multipliers.push(mult);
            outputs.push(a);
        }
        (outputs, MlpCache { inputs, multipliers })
    }

    /// `grad_outputs[i]` is the loss gradient arriving at block `i`'s output.
    fn backward(&self, cache: &MlpCache<T>, mut grad_outputs: Vec<Option<Array2<T>>>, grads: &mut Mlp<T>) -> Array2<T> {
        let mut carry: Option<Array2<T>> = None;
        for i in (0..self.blocks.len()).rev() {
            let mut g = match (grad_outputs[i].take(), carry.take()) {
                (Some(a), Some(b)) => a + &b,
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => Array2::zeros((cache.inputs[i].nrows(), self.blocks[i].linear.outputs())),
            };
            if let Some(m) = &cache.multipliers[i] {
                g *= m;
            }
            carry = Some(self.blocks[i].linear.backward(cache.inputs[i].view(), g.view(), &mut grads.blocks[i].linear));
        }
        carry.expect("at least one block")
    }
}

/// Optimizer parameter groups, each with its own update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamGroup {
    /// Feature extractor and bottleneck.
    Features,
    Classifier,
    Discriminator,
    Auxiliary,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 4] = [ParamGroup::Features, ParamGroup::Classifier, ParamGroup::Discriminator, ParamGroup::Auxiliary];
}

/// All trainable parameters plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams<T> {
    pub arch: Architecture,
    pub extractor: FeatureExtractor<T>,
    pub bottleneck: Mlp<T>,
    pub classifier: Linear<T>,
    pub discriminator: Mlp<T>,
    pub auxiliary: Mlp<T>,
}

/// Extractor output and bottleneck activations for one batch.
pub struct FeatureBatch<T> {
    /// Pooled extractor features `[batch, feature_width]`.
    pub rows: Array2<T>,
    pub z1: Array2<T>,
    pub z2: Array2<T>,
    input: Option<Array2<T>>,
    extractor: ExtractorCache<T>,
    bottleneck: MlpCache<T>,
}

pub struct Classified<T> {
    pub logits: Array2<T>,
    pub probs: Array2<T>,
}

pub struct AuxOutput<T> {
    pub leaky: Array2<T>,
    pub domain_score: Array1<T>,
    cache: MlpCache<T>,
}

pub struct DiscOutput<T> {
    /// Probability that each row comes from the source domain.
    pub p_source: Array1<T>,
    /// Logit margin `l_source - l_target`.
    pub margin: Array1<T>,
    cache: MlpCache<T>,
}

fn check_width<T>(x: ArrayView2<T>, width: usize, what: &str) -> Result<()> {
    if x.ncols() != width {
        return Err(Error::Shape(format!("{what}: expected width {width}, got {}", x.ncols())));
    }
    Ok(())
}

impl<T: Float> NetParams<T> {
    /// Xavier-initialized weights and zero biases.
    pub fn new<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let f = arch.feature_width();
        let c = arch.n_classes;
        let layout = &arch.layout;
        let mut bw = vec![f];
        bw.extend(&layout.bottleneck);
        let emb = arch.embedding_width();
        let head = |input: usize| {
            let mut w = vec![input];
            w.extend(&layout.head_hidden);
            w
        };
        let extractor = FeatureExtractor::new(&arch, rng);
        let bottleneck = Mlp::new(&bw, true, layout.dropout, rng);
        let classifier = Linear::xavier(emb, c, rng);
        let mut dw = head(emb * c);
        dw.push(2);
        let discriminator = Mlp::new(&dw, false, layout.dropout, rng);
        let mut aw = head(f);
        aw.push(c);
        let auxiliary = Mlp::new(&aw, false, layout.dropout, rng);
        Ok(Self { arch, extractor, bottleneck, classifier, discriminator, auxiliary })
    }

    /// Same structure with every tensor zeroed; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            arch: self.arch.clone(),
            extractor: self.extractor.zeros_like(),
            bottleneck: self.bottleneck.zeros_like(),
            classifier: self.classifier.zeros_like(),
            discriminator: self.discriminator.zeros_like(),
            auxiliary: self.auxiliary.zeros_like(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.arch.n_classes
    }

    /// Runs the extractor and bottleneck. Train mode uses batch statistics,
    /// updates running statistics and applies dropout drawn from `rng`.
    pub fn feature_extract<R: Rng + ?Sized>(&mut self, batch: ArrayView2<T>, mode: Mode, rng: &mut R) -> Result<FeatureBatch<T>> {
        check_width(batch, self.arch.input_len, "network input")?;
        if mode == Mode::Train && batch.nrows() < 2 {
            return Err(Error::InvalidBatch("batch-norm training needs at least 2 rows".into()));
        }
        if batch.nrows() == 0 {
            return Err(Error::InvalidBatch("empty batch".into()));
        }
        let (rows, extractor) = self.extractor.forward(batch, mode);
        let (mut outs, bottleneck) = self.bottleneck.forward(rows.view(), mode, rng);
        let z2 = outs.pop().expect("bottleneck has layers");
        let z1 = outs.pop().unwrap_or_else(|| z2.clone());
        Ok(FeatureBatch { rows, z1, z2, input: None, extractor, bottleneck })
    }

    /// Backpropagates gradients arriving at the pooled features, `z1` and `z2`
    /// into the extractor and bottleneck; returns `dL/dinput` if requested.
    pub fn feature_backward(
        &self,
        batch: &FeatureBatch<T>,
        d_rows: Option<ArrayView2<T>>,
        d_z1: Option<ArrayView2<T>>,
        d_z2: Option<ArrayView2<T>>,
        grads: &mut NetParams<T>,
        want_input: bool,
    ) -> Option<Array2<T>> {
        let _ = &batch.input;
        let n = self.bottleneck.blocks.len();
        let mut outs: Vec<Option<Array2<T>>> = vec![None; n];
        if let Some(d) = d_z2 {
            outs[n - 1] = Some(d.to_owned());
        }
        if let Some(d) = d_z1 {
            let i = n.saturating_sub(2);
            outs[i] = Some(match outs[i].take() {
                Some(prev) => prev + &d,
                None => d.to_owned(),
            });
        }
        let mut d_feat = self.bottleneck.backward(&batch.bottleneck, outs, &mut grads.bottleneck);
        if let Some(d) = d_rows {
            d_feat += &d;
        }
        self.extractor.backward(&batch.extractor, d_feat.view(), &mut grads.extractor, want_input)
    }

    pub fn classify(&self, z2: ArrayView2<T>) -> Result<Classified<T>> {
        check_width(z2, self.classifier.inputs(), "classifier input")?;
        let logits = self.classifier.forward(z2);
        let probs = softmax_rows(logits.view());
        Ok(Classified { logits, probs })
    }

    pub fn classifier_backward(&self, z2: ArrayView2<T>, d_logits: ArrayView2<T>, grads: &mut NetParams<T>) -> Array2<T> {
        self.classifier.backward(z2, d_logits, &mut grads.classifier)
    }

    /// Auxiliary leaky-softmax outputs and their class sums.
    ///
    /// Callers pass detached extractor features; no gradient flows back out.
    pub fn aux_forward<R: Rng + ?Sized>(&self, features: ArrayView2<T>, mode: Mode, rng: &mut R) -> Result<AuxOutput<T>> {
        check_width(features, self.arch.feature_width(), "auxiliary input")?;
        let (mut outs, cache) = self.auxiliary.forward(features, mode, rng);
        let logits = outs.pop().expect("auxiliary head has layers");
        let leaky = leaky_softmax_rows(logits.view());
        let domain_score = leaky.sum_axis(Axis(1));
        Ok(AuxOutput { leaky, domain_score, cache })
    }

    /// Accumulates auxiliary-head gradients from `dL/dleaky` and `dL/dscore`.
    pub fn aux_backward(&self, out: &AuxOutput<T>, d_leaky: ArrayView2<T>, d_score: ArrayView1<T>, grads: &mut NetParams<T>) {
        // score = sum_c leaky_c, so its gradient adds to every class
        let g = &d_leaky + &d_score.insert_axis(Axis(1));
        let mut d_logits = Array2::zeros(out.leaky.raw_dim());
        Zip::from(d_logits.rows_mut())
            .and(out.leaky.rows())
            .and(g.rows())
            .for_each(|mut dz, l, gr| {
                let dot = l.dot(&gr);
                Zip::from(&mut dz).and(&l).and(&gr).for_each(|o, &lv, &gv| *o = lv * (gv - dot));
            });
        let n = self.auxiliary.blocks.len();
        let mut outs = vec![None; n];
        outs[n - 1] = Some(d_logits);
        self.auxiliary.backward(&out.cache, outs, &mut grads.auxiliary);
    }

    pub fn cdan_discriminate<R: Rng + ?Sized>(&self, multilinear: ArrayView2<T>, mode: Mode, rng: &mut R) -> Result<DiscOutput<T>> {
        check_width(multilinear, self.arch.embedding_width() * self.arch.n_classes, "discriminator input")?;
        let (mut outs, cache) = self.discriminator.forward(multilinear, mode, rng);
        let logits = outs.pop().expect("discriminator has layers");
        let margin: Array1<T> = logits.column(0).to_owned() - &logits.column(1);
        let p_source = margin.mapv(|m| T::one() / (T::one() + (-m).exp()));
        Ok(DiscOutput { p_source, margin, cache })
    }

    /// Backpropagates `dL/dmargin`; returns `dL/dmultilinear`.
    pub fn cdan_backward(&self, out: &DiscOutput<T>, d_margin: ArrayView1<T>, grads: &mut NetParams<T>) -> Array2<T> {
        let mut d_logits = Array2::zeros((d_margin.len(), 2));
        d_logits.column_mut(0).assign(&d_margin);
        d_logits.column_mut(1).assign(&d_margin.mapv(|v| -v));
        let n = self.discriminator.blocks.len();
        let mut outs = vec![None; n];
        outs[n - 1] = Some(d_logits);
        self.discriminator.backward(&out.cache, outs, &mut grads.discriminator)
    }

    fn visit<'a>(&'a self, group: Option<ParamGroup>, buffers: bool, out: &mut Vec<(String, Vec<usize>, &'a [T])>) {
        let want = |g: ParamGroup| group.is_none_or(|x| x == g);
        fn push<'a, T, D: ndarray::Dimension>(out: &mut Vec<(String, Vec<usize>, &'a [T])>, name: String, a: &'a ndarray::Array<T, D>) {
            out.push((name, a.shape().to_vec(), a.as_slice().expect("standard layout")));
        }
        let mlp = |out: &mut Vec<(String, Vec<usize>, &'a [T])>, prefix: &str, m: &'a Mlp<T>| {
            for (i, b) in m.blocks.iter().enumerate() {
                push(out, format!("{prefix}.{i}.weight"), &b.linear.weight);
                push(out, format!("{prefix}.{i}.bias"), &b.linear.bias);
            }
        };
        if want(ParamGroup::Features) {
            for (i, (c, n)) in self.extractor.convs.iter().zip(&self.extractor.norms).enumerate() {
                push(out, format!("extractor.conv{i}.weight"), &c.weight);
                push(out, format!("extractor.conv{i}.bias"), &c.bias);
                push(out, format!("extractor.norm{i}.gamma"), &n.gamma);
                push(out, format!("extractor.norm{i}.beta"), &n.beta);
                if buffers {
                    push(out, format!("extractor.norm{i}.running_mean"), &n.running_mean);
                    push(out, format!("extractor.norm{i}.running_var"), &n.running_var);
                }
            }
            mlp(out, "bottleneck", &self.bottleneck);
        }
        if want(ParamGroup::Classifier) {
            push(out, "classifier.weight".into(), &self.classifier.weight);
            push(out, "classifier.bias".into(), &self.classifier.bias);
        }
        if want(ParamGroup::Discriminator) {
            mlp(out, "discriminator", &self.discriminator);
        }
        if want(ParamGroup::Auxiliary) {
            mlp(out, "auxiliary", &self.auxiliary);
        }
    }

    fn visit_mut<'a>(&'a mut self, group: Option<ParamGroup>, buffers: bool, out: &mut Vec<&'a mut [T]>) {
        let want = |g: ParamGroup| group.is_none_or(|x| x == g);
        fn push<'a, T, D: ndarray::Dimension>(out: &mut Vec<&'a mut [T]>, a: &'a mut ndarray::Array<T, D>) {
            out.push(a.as_slice_mut().expect("standard layout"));
        }
        fn mlp<'a, T>(out: &mut Vec<&'a mut [T]>, m: &'a mut Mlp<T>) {
            for b in &mut m.blocks {
                push(out, &mut b.linear.weight);
                push(out, &mut b.linear.bias);
            }
        }
        if want(ParamGroup::Features) {
            for (c, n) in self.extractor.convs.iter_mut().zip(self.extractor.norms.iter_mut()) {
                push(out, &mut c.weight);
                push(out, &mut c.bias);
                push(out, &mut n.gamma);
                push(out, &mut n.beta);
                if buffers {
                    push(out, &mut n.running_mean);
                    push(out, &mut n.running_var);
                }
            }
            mlp(out, &mut self.bottleneck);
        }
        if want(ParamGroup::Classifier) {
            push(out, &mut self.classifier.weight);
            push(out, &mut self.classifier.bias);
        }
        if want(ParamGroup::Discriminator) {
            mlp(out, &mut self.discriminator);
        }
        if want(ParamGroup::Auxiliary) {
            mlp(out, &mut self.auxiliary);
        }
    }

    /// Trainable tensors of one group, in a fixed order.
    pub fn group_tensors(&self, group: ParamGroup) -> Vec<&[T]> {
        let mut out = Vec::new();
        self.visit(Some(group), false, &mut out);
        out.into_iter().map(|(_, _, t)| t).collect()
    }

    pub fn group_tensors_mut(&mut self, group: ParamGroup) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        self.visit_mut(Some(group), false, &mut out);
        out
    }

    /// Every tensor including batch-norm running statistics, with names and shapes.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out = Vec::new();
        self.visit(None, true, &mut out);
        out
    }

    pub fn all_tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        self.visit_mut(None, true, &mut out);
        out
    }

    /// Predicted class probabilities in eval mode.
    pub fn predict_proba(&mut self, x: ArrayView2<T>) -> Result<Array2<T>> {
        let mut rng = crate::rng::stream(0, 0);
        let fb = self.feature_extract(x, Mode::Eval, &mut rng)?;
        Ok(self.classify(fb.z2.view())?.probs)
    }

    /// Eval-mode probabilities computed in chunks to bound memory.
    pub fn predict_proba_chunked(&mut self, x: ArrayView2<T>, chunk: usize) -> Result<Array2<T>> {
        let mut out = Array2::zeros((x.nrows(), self.arch.n_classes));
        let chunk = chunk.max(1);
        let mut start = 0;
        while start < x.nrows() {
            let end = (start + chunk).min(x.nrows());
            let p = self.predict_proba(x.slice(ndarray::s![start..end, ..]))?;
            out.slice_mut(ndarray::s![start..end, ..]).assign(&p);
            start = end;
        }
        Ok(out)
    }
}

/// Row-wise flattened outer product: `out[i, c * p + k] = probs[i, c] * features[i, k]`.
pub fn multilinear_map<T: Float>(features: ArrayView2<T>, probs: ArrayView2<T>) -> Result<Array2<T>> {
    let (b, p) = features.dim();
    let (pb, c) = probs.dim();
    if b != pb {
        return Err(Error::Shape(format!("{b} feature rows vs {pb} probability rows")));
    }
    let mut out = Array2::zeros((b, p * c));
    for i in 0..b {
        let f = features.row(i);
        let mut row = out.row_mut(i);
        for ci in 0..c {
            let w = probs[[i, ci]];
            row.slice_mut(ndarray::s![ci * p..(ci + 1) * p]).assign(&(&f * w));
        }
    }
    Ok(out)
}

/// Gradient of the multilinear map with respect to the features, holding `probs` fixed.
pub fn multilinear_backward<T: Float>(d_out: ArrayView2<T>, probs: ArrayView2<T>) -> Array2<T> {
    let (b, c) = probs.dim();
    let p = d_out.ncols() / c;
    let mut d = Array2::zeros((b, p));
    for i in 0..b {
        let mut row = d.row_mut(i);
        for ci in 0..c {
            row.scaled_add(probs[[i, ci]], &d_out.slice(ndarray::s![i, ci * p..(ci + 1) * p]));
        }
    }
    d
}

#[cfg(test)]
mod tests;
