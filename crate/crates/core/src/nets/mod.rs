//! Configurable encoder-decoder segmentation networks.
//!
//! A model is a plain layer graph: `levels` encoder blocks (the last one is
//! the bottleneck) joined by 2×2 max-pools, a mirrored decoder whose
//! upsampling scheme and block widths come from the [`ModelConfig`], skip
//! connections concatenated channel-first, and a final 1×1 projection to two
//! channels followed by a per-pixel log-softmax. Every block is two 3×3
//! same-padded convolutions with ReLU, optionally batch-normalized after each
//! convolution.
//!
//! Models are generic over the element type: `f32` for training, `f64` for
//! finite-difference verification.

mod layers;

use ndarray::{concatenate, s, Array4, ArrayViewD, ArrayViewMutD, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::config::{ModelConfig, Normalization, Upsampling};
use crate::error::{Error, Result};

pub use layers::TensorKind;
use layers::{
    nearest_up2, nearest_up2_backward, BatchNorm2d, Conv2d, ConvTranspose2x2, LogSoftmax,
    MaxPool2, Relu, Tensors,
};

/// Element types the network can compute in.
pub trait Element: ndarray::NdFloat + std::iter::Sum<Self> {
    const DTYPE: &'static str;
    const BYTE_WIDTH: usize;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
    fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Element for f32 {
    const DTYPE: &'static str = "f32";
    const BYTE_WIDTH: usize = 4;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }

    fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Element for f64 {
    const DTYPE: &'static str = "f64";
    const BYTE_WIDTH: usize = 8;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }

    fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

/// Two 3×3 convolutions with ReLU, optional batch norm after each.
#[derive(Debug, Clone)]
struct ConvBlock<F: Element> {
    conv1: Conv2d<F>,
    bn1: Option<BatchNorm2d<F>>,
    relu1: Relu<F>,
    conv2: Conv2d<F>,
    bn2: Option<BatchNorm2d<F>>,
    relu2: Relu<F>,
}

impl<F: Element> ConvBlock<F> {
    fn new(cin: usize, cout: usize, norm: Normalization, rng: &mut ChaCha12Rng) -> Self {
        let bn = |c: usize| match norm {
            Normalization::BatchNorm => Some(BatchNorm2d::new(c)),
            Normalization::None => None,
        };
        Self {
            conv1: Conv2d::new(cin, cout, 3, rng),
            bn1: bn(cout),
            relu1: Relu::default(),
            conv2: Conv2d::new(cout, cout, 3, rng),
            bn2: bn(cout),
            relu2: Relu::default(),
        }
    }

    fn out_channels(&self) -> usize {
        self.conv2.out_channels()
    }

    fn normalized(&self) -> bool {
        self.bn1.is_some() && self.bn2.is_some()
    }

    fn infer(&self, x: &Array4<F>) -> Array4<F> {
        let mut y = self.conv1.infer(x);
        if let Some(bn) = &self.bn1 {
            y = bn.infer(&y);
        }
        y = self.relu1.infer(&y);
        y = self.conv2.infer(&y);
        if let Some(bn) = &self.bn2 {
            y = bn.infer(&y);
        }
        self.relu2.infer(&y)
    }

    fn train_fwd(&mut self, x: Array4<F>) -> Array4<F> {
        let mut y = self.conv1.train_fwd(x);
        if let Some(bn) = &mut self.bn1 {
            y = bn.train_fwd(&y);
        }
        y = self.relu1.train_fwd(&y);
        y = self.conv2.train_fwd(y);
        if let Some(bn) = &mut self.bn2 {
            y = bn.train_fwd(&y);
        }
        self.relu2.train_fwd(&y)
    }

    fn backward(&mut self, gy: &Array4<F>) -> Array4<F> {
        let mut g = self.relu2.backward(gy);
        if let Some(bn) = &mut self.bn2 {
            g = bn.backward(&g);
        }
        g = self.conv2.backward(&g);
        g = self.relu1.backward(&g);
        if let Some(bn) = &mut self.bn1 {
            g = bn.backward(&g);
        }
        self.conv1.backward(&g)
    }
}

impl<F: Element> Tensors<F> for ConvBlock<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, TensorKind, ArrayViewD<'_, F>)) {
        self.conv1.visit(&format!("{prefix}.conv1"), f);
        if let Some(bn) = &self.bn1 {
            bn.visit(&format!("{prefix}.bn1"), f);
        }
        self.conv2.visit(&format!("{prefix}.conv2"), f);
        if let Some(bn) = &self.bn2 {
            bn.visit(&format!("{prefix}.bn2"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, TensorKind, ArrayViewMutD<'_, F>)) {
        self.conv1.visit_mut(&format!("{prefix}.conv1"), f);
        if let Some(bn) = &mut self.bn1 {
            bn.visit_mut(&format!("{prefix}.bn1"), f);
        }
        self.conv2.visit_mut(&format!("{prefix}.conv2"), f);
        if let Some(bn) = &mut self.bn2 {
            bn.visit_mut(&format!("{prefix}.bn2"), f);
        }
    }

    fn visit_param_grads(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, F>, ArrayViewD<'_, F>),
    ) {
        self.conv1.visit_param_grads(&format!("{prefix}.conv1"), f);
        if let Some(bn) = &mut self.bn1 {
            bn.visit_param_grads(&format!("{prefix}.bn1"), f);
        }
        self.conv2.visit_param_grads(&format!("{prefix}.conv2"), f);
        if let Some(bn) = &mut self.bn2 {
            bn.visit_param_grads(&format!("{prefix}.bn2"), f);
        }
    }

    fn zero_grads(&mut self) {
        self.conv1.zero_grads();
        self.conv2.zero_grads();
        if let Some(bn) = &mut self.bn1 {
            bn.zero_grads();
        }
        if let Some(bn) = &mut self.bn2 {
            bn.zero_grads();
        }
    }
}

/// Decoder upsampling step, per the configured scheme.
#[derive(Debug, Clone)]
enum Upsampler<F: Element> {
    /// Learned 2×2 stride-2 transposed convolution.
    Deconv(ConvTranspose2x2<F>),
    /// 2×2 nearest-neighbor repeat, then a 3×3 convolution that sets the
    /// width expected by the skip concatenation.
    NearestConv(Conv2d<F>),
}

impl<F: Element> Upsampler<F> {
    fn new(cin: usize, cout: usize, scheme: Upsampling, rng: &mut ChaCha12Rng) -> Self {
        match scheme {
            Upsampling::Deconvolution => Upsampler::Deconv(ConvTranspose2x2::new(cin, cout, rng)),
            Upsampling::NearestRepeat => Upsampler::NearestConv(Conv2d::new(cin, cout, 3, rng)),
        }
    }

    fn scheme(&self) -> Upsampling {
        match self {
            Upsampler::Deconv(_) => Upsampling::Deconvolution,
            Upsampler::NearestConv(_) => Upsampling::NearestRepeat,
        }
    }

    fn infer(&self, x: &Array4<F>) -> Array4<F> {
        match self {
            Upsampler::Deconv(t) => t.infer(x),
            Upsampler::NearestConv(c) => c.infer(&nearest_up2(x)),
        }
    }

    fn train_fwd(&mut self, x: Array4<F>) -> Array4<F> {
        match self {
            Upsampler::Deconv(t) => t.train_fwd(x),
            Upsampler::NearestConv(c) => c.train_fwd(nearest_up2(&x)),
        }
    }

    fn backward(&mut self, gy: &Array4<F>) -> Array4<F> {
        match self {
            Upsampler::Deconv(t) => t.backward(gy),
            Upsampler::NearestConv(c) => nearest_up2_backward(&c.backward(gy)),
        }
    }
}

impl<F: Element> Tensors<F> for Upsampler<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, TensorKind, ArrayViewD<'_, F>)) {
        match self {
            Upsampler::Deconv(t) => t.visit(prefix, f),
            Upsampler::NearestConv(c) => c.visit(&format!("{prefix}.conv"), f),
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, TensorKind, ArrayViewMutD<'_, F>)) {
        match self {
            Upsampler::Deconv(t) => t.visit_mut(prefix, f),
            Upsampler::NearestConv(c) => c.visit_mut(&format!("{prefix}.conv"), f),
        }
    }

    fn visit_param_grads(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, F>, ArrayViewD<'_, F>),
    ) {
        match self {
            Upsampler::Deconv(t) => t.visit_param_grads(prefix, f),
            Upsampler::NearestConv(c) => c.visit_param_grads(&format!("{prefix}.conv"), f),
        }
    }

    fn zero_grads(&mut self) {
        match self {
            Upsampler::Deconv(t) => t.zero_grads(),
            Upsampler::NearestConv(c) => c.zero_grads(),
        }
    }
}

/// Structural summary obtained by walking the built layer graph (not the
/// config), used to verify conformance of the construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelStructure {
    pub levels: usize,
    pub encoder_widths: Vec<usize>,
    pub decoder_widths: Vec<usize>,
    pub decoder_end_width: usize,
    pub upsampling: Upsampling,
    pub normalization: Normalization,
    pub output_channels: usize,
}

/// An encoder-decoder segmentation network.
#[derive(Debug, Clone)]
pub struct SegmentationModel<F: Element> {
    config: ModelConfig,
    encoders: Vec<ConvBlock<F>>,
    pools: Vec<MaxPool2>,
    ups: Vec<Upsampler<F>>,
    decoders: Vec<ConvBlock<F>>,
    head: Conv2d<F>,
    softmax: LogSoftmax<F>,
    skip_widths: Vec<usize>,
}

/// Builds a model with seed-controlled He initialization; the final
/// projection starts at zero so the initial prediction is uniform.
pub fn build_model<F: Element>(config: &ModelConfig, init_seed: u64) -> Result<SegmentationModel<F>> {
    SegmentationModel::build(config, init_seed)
}

impl<F: Element> SegmentationModel<F> {
    pub fn build(config: &ModelConfig, init_seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(init_seed);
        let widths = &config.encoder_widths;
        let levels = widths.len();
        let dec_widths = config.decoder_widths();

        let mut encoders = Vec::with_capacity(levels);
        let mut cin = 1;
        for &width in widths {
            encoders.push(ConvBlock::new(cin, width, config.normalization, &mut rng));
            cin = width;
        }
        let pools = (0..levels - 1).map(|_| MaxPool2::default()).collect();

        // ups[lvl] produces the level-`lvl` resolution; its input comes from
        // the block one level deeper (the bottleneck for the deepest).
        let mut ups = Vec::with_capacity(levels - 1);
        let mut decoders = Vec::with_capacity(levels - 1);
        for lvl in 0..levels.saturating_sub(1) {
            let source_width = if lvl + 1 == levels - 1 {
                widths[levels - 1]
            } else {
                dec_widths[lvl + 1]
            };
            ups.push(Upsampler::new(
                source_width,
                widths[lvl],
                config.upsampling,
                &mut rng,
            ));
            decoders.push(ConvBlock::new(
                2 * widths[lvl],
                dec_widths[lvl],
                config.normalization,
                &mut rng,
            ));
        }

        let head_in = if levels == 1 {
            widths[0]
        } else {
            dec_widths[0]
        };
        let head = Conv2d::new_zeroed(head_in, 2, 1);

        Ok(Self {
            config: config.clone(),
            encoders,
            pools,
            ups,
            decoders,
            head,
            softmax: LogSoftmax::default(),
            skip_widths: widths[..levels - 1].to_vec(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn check_input(&self, x: &Array4<F>) -> Result<()> {
        let (_, c, h, w) = x.dim();
        if c != 1 {
            return Err(Error::InvalidConfig(format!(
                "expected single-channel input, got {c} channels"
            )));
        }
        let divisor = self.config.spatial_divisor();
        if h % divisor != 0 || w % divisor != 0 {
            return Err(Error::IndivisibleInput {
                height: h,
                width: w,
                divisor,
                levels: self.config.levels(),
            });
        }
        Ok(())
    }

    /// Inference forward pass: per-pixel log-probabilities, shape
    /// `(batch, 2, h, w)`. Batch norm uses running statistics. Thread-safe on
    /// a shared reference.
    pub fn forward(&self, x: &Array4<F>) -> Result<Array4<F>> {
        self.check_input(x)?;
        let levels = self.encoders.len();
        let mut skips = Vec::with_capacity(levels - 1);
        let mut cur = x.clone();
        for lvl in 0..levels - 1 {
            let enc = self.encoders[lvl].infer(&cur);
            cur = self.pools[lvl].infer(&enc);
            skips.push(enc);
        }
        cur = self.encoders[levels - 1].infer(&cur);
        for lvl in (0..levels - 1).rev() {
            let up = self.ups[lvl].infer(&cur);
            let joined = concatenate(Axis(1), &[skips[lvl].view(), up.view()])
                .expect("skip and upsample shapes agree");
            cur = self.decoders[lvl].infer(&joined);
        }
        let logits = self.head.infer(&cur);
        Ok(LogSoftmax::run(&logits))
    }

    /// Training forward pass: caches every intermediate needed by
    /// [`SegmentationModel::backward`]. Batch norm uses batch statistics and
    /// updates its running estimates.
    pub fn forward_train(&mut self, x: &Array4<F>) -> Result<Array4<F>> {
        self.check_input(x)?;
        let levels = self.encoders.len();
        let mut skips = Vec::with_capacity(levels - 1);
        let mut cur = x.clone();
        for lvl in 0..levels - 1 {
            let enc = self.encoders[lvl].train_fwd(cur);
            cur = self.pools[lvl].train_fwd(&enc);
            skips.push(enc);
        }
        cur = self.encoders[levels - 1].train_fwd(cur);
        for lvl in (0..levels - 1).rev() {
            let up = self.ups[lvl].train_fwd(cur);
            let joined = concatenate(Axis(1), &[skips[lvl].view(), up.view()])
                .expect("skip and upsample shapes agree");
            cur = self.decoders[lvl].train_fwd(joined);
        }
        let logits = self.head.train_fwd(cur);
        Ok(self.softmax.train_fwd(&logits))
    }

    /// Backpropagates the loss gradient w.r.t. the log-probability output,
    /// accumulating parameter gradients; returns the gradient w.r.t. the
    /// input. Must follow a `forward_train` call.
    pub fn backward(&mut self, grad_output: &Array4<F>) -> Array4<F> {
        let levels = self.encoders.len();
        let mut g = self.softmax.backward(grad_output);
        g = self.head.backward(&g);

        let mut skip_grads: Vec<Option<Array4<F>>> = (0..levels - 1).map(|_| None).collect();
        for lvl in 0..levels - 1 {
            g = self.decoders[lvl].backward(&g);
            let skip_width = self.skip_widths[lvl];
            let g_skip = g.slice(s![.., ..skip_width, .., ..]).to_owned();
            let g_up = g.slice(s![.., skip_width.., .., ..]).to_owned();
            skip_grads[lvl] = Some(g_skip);
            g = self.ups[lvl].backward(&g_up);
        }
        g = self.encoders[levels - 1].backward(&g);
        for lvl in (0..levels - 1).rev() {
            g = self.pools[lvl].backward(&g);
            g += skip_grads[lvl].as_ref().expect("skip grad recorded");
            g = self.encoders[lvl].backward(&g);
        }
        g
    }

    /// Walks the built layers and reports the realized topology.
    pub fn structure(&self) -> ModelStructure {
        let encoder_widths: Vec<usize> = self.encoders.iter().map(|b| b.out_channels()).collect();
        let decoder_widths: Vec<usize> = self.decoders.iter().map(|b| b.out_channels()).collect();
        let normalized: Vec<bool> = self
            .encoders
            .iter()
            .chain(self.decoders.iter())
            .map(|b| b.normalized())
            .collect();
        let all_normalized = normalized.iter().all(|&b| b);
        let none_normalized = normalized.iter().all(|&b| !b);
        assert!(
            all_normalized || none_normalized,
            "construction applies one normalization scheme uniformly"
        );
        let schemes: Vec<Upsampling> = self.ups.iter().map(|u| u.scheme()).collect();
        assert!(
            schemes.windows(2).all(|w| w[0] == w[1]),
            "construction applies one upsampling scheme uniformly"
        );
        ModelStructure {
            levels: encoder_widths.len(),
            decoder_end_width: decoder_widths.first().copied().unwrap_or(encoder_widths[0]),
            encoder_widths,
            decoder_widths,
            upsampling: schemes.first().copied().unwrap_or(self.config.upsampling),
            normalization: if all_normalized && !normalized.is_empty() {
                Normalization::BatchNorm
            } else {
                Normalization::None
            },
            output_channels: self.head.out_channels(),
        }
    }

    /// Number of trainable parameters.
    pub fn count_parameters(&self) -> usize {
        let mut total = 0;
        self.visit_tensors(&mut |_, kind, view| {
            if kind == TensorKind::Param {
                total += view.len();
            }
        });
        total
    }

    pub fn visit_tensors(&self, f: &mut dyn FnMut(&str, TensorKind, ArrayViewD<'_, F>)) {
        for (i, enc) in self.encoders.iter().enumerate() {
            enc.visit(&format!("enc{}", i + 1), f);
        }
        for (i, up) in self.ups.iter().enumerate() {
            up.visit(&format!("up{}", i + 1), f);
        }
        for (i, dec) in self.decoders.iter().enumerate() {
            dec.visit(&format!("dec{}", i + 1), f);
        }
        self.head.visit("head", f);
    }

    pub fn visit_tensors_mut(&mut self, f: &mut dyn FnMut(&str, TensorKind, ArrayViewMutD<'_, F>)) {
        for (i, enc) in self.encoders.iter_mut().enumerate() {
            enc.visit_mut(&format!("enc{}", i + 1), f);
        }
        for (i, up) in self.ups.iter_mut().enumerate() {
            up.visit_mut(&format!("up{}", i + 1), f);
        }
        for (i, dec) in self.decoders.iter_mut().enumerate() {
            dec.visit_mut(&format!("dec{}", i + 1), f);
        }
        self.head.visit_mut("head", f);
    }

    /// Visits `(path, parameter, gradient)` triples in a fixed order; the
    /// optimizer keys its state by visitation index.
    pub fn visit_param_grads(
        &mut self,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, F>, ArrayViewD<'_, F>),
    ) {
        for (i, enc) in self.encoders.iter_mut().enumerate() {
            enc.visit_param_grads(&format!("enc{}", i + 1), f);
        }
        for (i, up) in self.ups.iter_mut().enumerate() {
            up.visit_param_grads(&format!("up{}", i + 1), f);
        }
        for (i, dec) in self.decoders.iter_mut().enumerate() {
            dec.visit_param_grads(&format!("dec{}", i + 1), f);
        }
        self.head.visit_param_grads("head", f);
    }

    pub fn zero_grads(&mut self) {
        for enc in &mut self.encoders {
            enc.zero_grads();
        }
        for up in &mut self.ups {
            up.zero_grads();
        }
        for dec in &mut self.decoders {
            dec.zero_grads();
        }
        self.head.zero_grads();
    }

    /// Flattens all parameters into one vector (visitation order).
    pub fn parameters_flat(&self) -> Vec<F> {
        let mut out = Vec::new();
        self.visit_tensors(&mut |_, kind, view| {
            if kind == TensorKind::Param {
                out.extend(view.iter().copied());
            }
        });
        out
    }

    /// Writes a flat parameter vector back (inverse of `parameters_flat`).
    pub fn set_parameters_flat(&mut self, values: &[F]) {
        let mut offset = 0;
        self.visit_tensors_mut(&mut |_, kind, mut view| {
            if kind == TensorKind::Param {
                for v in view.iter_mut() {
                    *v = values[offset];
                    offset += 1;
                }
            }
        });
        assert_eq!(offset, values.len(), "parameter count mismatch");
    }

    /// Flattens all accumulated gradients (same order as `parameters_flat`).
    pub fn gradients_flat(&mut self) -> Vec<F> {
        let mut out = Vec::new();
        self.visit_param_grads(&mut |_, _, grad| {
            out.extend(grad.iter().copied());
        });
        out
    }
}
