//! CRNN and dilated-TCN frame taggers with hand-written backward passes.
//!
//! Both architectures map a `frames x mels` log-mel matrix to `frames x 8`
//! sigmoid posteriors and preserve the number of frames. Everything is generic
//! over [`Scalar`] so gradient checks can run in f64 while training runs in f32.

mod crnn;
mod gru;
mod io;
mod layers;
mod tcn;

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array2, ArrayD, ArrayView1, ArrayView2, IxDyn, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{FramePosteriors, N_CLASSES};
use crate::par;
use crate::signal::LogMelSpectrogram;

pub use io::{load_weights, save_weights, WEIGHTS_FORMAT_VERSION};

/// Floating-point element type of model tensors.
pub trait Scalar:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + Send
    + Sync
    + Debug
    + Default
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Posteriors are kept this far from 0 and 1.
pub const POSTERIOR_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrnnConfig {
    pub n_mels: usize,
    pub n_classes: usize,
    pub conv_blocks: usize,
    pub convs_per_block: usize,
    /// Side of the square convolution kernel.
    pub kernel: usize,
    /// Output channels of each block.
    pub channels: Vec<usize>,
    /// Frequency pooling factor after each block (time is never pooled).
    pub freq_pool: usize,
    /// Hidden size of each GRU direction.
    pub gru_hidden: usize,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
}

impl Default for CrnnConfig {
    fn default() -> Self {
        Self {
            n_mels: 64,
            n_classes: N_CLASSES,
            conv_blocks: 3,
            convs_per_block: 2,
            kernel: 3,
            channels: vec![64, 128, 256],
            freq_pool: 2,
            gru_hidden: 256,
            bn_epsilon: 1e-5,
            bn_momentum: 0.9,
        }
    }
}

impl CrnnConfig {
    /// Narrow variant for single-core CPU training.
    pub fn desk() -> Self {
        Self {
            channels: vec![8, 16, 32],
            gru_hidden: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.conv_blocks == 0 || self.convs_per_block == 0 {
            return bad("need at least one block and one conv per block".into());
        }
        if self.channels.len() != self.conv_blocks {
            return bad(format!(
                "{} channel widths for {} blocks",
                self.channels.len(),
                self.conv_blocks
            ));
        }
        if self.channels.contains(&0) || self.gru_hidden == 0 || self.n_mels == 0 {
            return bad("widths must be positive".into());
        }
        if self.kernel.is_multiple_of(2) {
            return bad("kernel side must be odd".into());
        }
        if self.freq_pool == 0 || !self.n_mels.is_multiple_of(self.freq_pool.pow(self.conv_blocks as u32)) {
            return bad(format!(
                "n_mels {} not divisible by {}^{}",
                self.n_mels, self.freq_pool, self.conv_blocks
            ));
        }
        check_common(self.n_classes, self.bn_epsilon, self.bn_momentum)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TcnConfig {
    pub n_mels: usize,
    pub n_classes: usize,
    pub n_filters: usize,
    pub dilations: Vec<usize>,
    /// Temporal kernel length (odd).
    pub kernel: usize,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
}

impl Default for TcnConfig {
    fn default() -> Self {
        Self {
            n_mels: 64,
            n_classes: N_CLASSES,
            n_filters: 256,
            dilations: vec![1, 2, 4, 8, 16],
            kernel: 3,
            bn_epsilon: 1e-5,
            bn_momentum: 0.9,
        }
    }
}

impl TcnConfig {
    pub fn desk() -> Self {
        Self {
            n_filters: 32,
            ..Self::default()
        }
    }

    /// Frames visible to one output frame.
    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel - 1) * self.dilations.iter().sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dilations.is_empty() || self.dilations[0] == 0 {
            return Err(Error::InvalidConfig("dilations must be positive and non-empty".into()));
        }
        if self.dilations.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("dilations must be strictly increasing".into()));
        }
        if self.kernel.is_multiple_of(2) || self.n_filters == 0 || self.n_mels == 0 {
            return Err(Error::InvalidConfig("kernel must be odd and widths positive".into()));
        }
        check_common(self.n_classes, self.bn_epsilon, self.bn_momentum)
    }
}

fn check_common(n_classes: usize, eps: f64, momentum: f64) -> Result<()> {
    if n_classes != N_CLASSES {
        return Err(Error::InvalidConfig(format!(
            "n_classes must be {N_CLASSES}, got {n_classes}"
        )));
    }
    if !(eps > 0.0) || !(0.0..1.0).contains(&momentum) {
        return Err(Error::InvalidConfig("need bn_epsilon > 0 and 0 <= bn_momentum < 1".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "lowercase")]
pub enum ModelConfig {
    Crnn(CrnnConfig),
    Tcn(TcnConfig),
}

impl ModelConfig {
    pub fn architecture(&self) -> &'static str {
        match self {
            ModelConfig::Crnn(_) => "crnn",
            ModelConfig::Tcn(_) => "tcn",
        }
    }

    pub fn n_mels(&self) -> usize {
        match self {
            ModelConfig::Crnn(c) => c.n_mels,
            ModelConfig::Tcn(c) => c.n_mels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Crnn(c) => c.validate(),
            ModelConfig::Tcn(c) => c.validate(),
        }
    }

    /// Every tensor the architecture owns, in initialization order.
    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        match self {
            ModelConfig::Crnn(c) => crnn::tensor_specs(c),
            ModelConfig::Tcn(c) => tcn::tensor_specs(c),
        }
    }
}

impl From<CrnnConfig> for ModelConfig {
    fn from(c: CrnnConfig) -> Self {
        ModelConfig::Crnn(c)
    }
}

impl From<TcnConfig> for ModelConfig {
    fn from(c: TcnConfig) -> Self {
        ModelConfig::Tcn(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorKind {
    /// Learnable.
    Param,
    /// Batch-norm running statistics.
    Buffer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Glorot { fan_in: usize, fan_out: usize },
    /// Independent orthogonal `H x H` block per gate.
    Orthogonal { gates: usize },
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: TensorKind,
    pub init: Init,
}

impl TensorSpec {
    pub(crate) fn param(name: impl Into<String>, shape: &[usize], init: Init) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            kind: TensorKind::Param,
            init,
        }
    }

    pub(crate) fn buffer(name: impl Into<String>, shape: &[usize], init: Init) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            kind: TensorKind::Buffer,
            init,
        }
    }

    /// gamma, beta, running mean, running variance
    pub(crate) fn batch_norm(prefix: &str, c: usize) -> Vec<Self> {
        vec![
            Self::param(format!("{prefix}.gamma"), &[c], Init::Ones),
            Self::param(format!("{prefix}.beta"), &[c], Init::Zeros),
            Self::buffer(format!("{prefix}.running_mean"), &[c], Init::Zeros),
            Self::buffer(format!("{prefix}.running_var"), &[c], Init::Ones),
        ]
    }
}

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// All tensors of one model plus its configuration.
#[derive(Debug, Clone)]
pub struct ModelWeights<F> {
    pub config: ModelConfig,
    /// Seed used by [`init_weights`].
    pub seed: u64,
    pub params: BTreeMap<String, ArrayD<F>>,
    pub buffers: BTreeMap<String, ArrayD<F>>,
    generation: u64,
}

impl<F: Scalar> PartialEq for ModelWeights<F> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.seed == other.seed
            && self.params == other.params
            && self.buffers == other.buffers
    }
}

impl<F: Scalar> ModelWeights<F> {
    pub(crate) fn from_parts(
        config: ModelConfig,
        seed: u64,
        params: BTreeMap<String, ArrayD<F>>,
        buffers: BTreeMap<String, ArrayD<F>>,
    ) -> Result<Self> {
        let w = Self {
            config,
            seed,
            params,
            buffers,
            generation: next_generation(),
        };
        w.check_shapes()?;
        Ok(w)
    }

    /// Verifies that the tensor set matches the configuration exactly.
    pub fn check_shapes(&self) -> Result<()> {
        self.config.validate()?;
        let specs = self.config.tensor_specs();
        let n_params = specs.iter().filter(|s| s.kind == TensorKind::Param).count();
        if n_params != self.params.len() || specs.len() - n_params != self.buffers.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} params and {} buffers, found {} and {}",
                n_params,
                specs.len() - n_params,
                self.params.len(),
                self.buffers.len()
            )));
        }
        for s in &specs {
            let map = match s.kind {
                TensorKind::Param => &self.params,
                TensorKind::Buffer => &self.buffers,
            };
            let t = map
                .get(&s.name)
                .ok_or_else(|| Error::ShapeMismatch(format!("missing tensor {}", s.name)))?;
            if t.shape() != s.shape.as_slice() {
                return Err(Error::ShapeMismatch(format!(
                    "{}: shape {:?}, config implies {:?}",
                    s.name,
                    t.shape(),
                    s.shape
                )));
            }
        }
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> Result<&ArrayD<F>> {
        self.params
            .get(name)
            .or_else(|| self.buffers.get(name))
            .ok_or_else(|| Error::ShapeMismatch(format!("missing tensor {name}")))
    }

    pub(crate) fn mat(&self, name: &str) -> Result<ArrayView2<'_, F>> {
        let t = self.tensor(name)?;
        let rows = t.shape()[..t.ndim() - 1].iter().product();
        let cols = *t.shape().last().unwrap_or(&1);
        t.view()
            .into_shape_with_order((rows, cols))
            .map_err(|e| Error::ShapeMismatch(format!("{name}: {e}")))
    }

    pub(crate) fn vec(&self, name: &str) -> Result<ArrayView1<'_, F>> {
        let t = self.tensor(name)?;
        t.view()
            .into_shape_with_order(t.len())
            .map_err(|e| Error::ShapeMismatch(format!("{name}: {e}")))
    }

    /// Total learnable scalars.
    pub fn n_params(&self) -> usize {
        self.params.values().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params
            .values()
            .chain(self.buffers.values())
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Converts every tensor to another element type.
    pub fn cast<G: Scalar>(&self) -> ModelWeights<G> {
        let conv = |m: &BTreeMap<String, ArrayD<F>>| {
            m.iter()
                .map(|(k, v)| (k.clone(), v.mapv(|x| G::from_f64(x.to_f64().unwrap()).unwrap())))
                .collect()
        };
        ModelWeights {
            config: self.config.clone(),
            seed: self.seed,
            params: conv(&self.params),
            buffers: conv(&self.buffers),
            generation: next_generation(),
        }
    }

    /// Marks the parameters as changed; forward caches from before become stale.
    pub(crate) fn touch(&mut self) {
        self.generation = next_generation();
    }

    pub(crate) fn generation(&self) -> u64 {
        self.generation
    }

    /// Mutable access to a learnable tensor (invalidates forward caches).
    pub fn param_mut(&mut self, name: &str) -> Option<&mut ArrayD<F>> {
        self.touch();
        self.params.get_mut(name)
    }

    fn apply_bn_updates(&mut self, updates: Vec<layers::BnUpdate>) {
        for u in updates {
            for (suffix, vals) in [("running_mean", u.mean), ("running_var", u.var)] {
                if let Some(t) = self.buffers.get_mut(&format!("{}.{suffix}", u.prefix)) {
                    for (dst, v) in t.iter_mut().zip(vals) {
                        *dst = F::from_f64(v).unwrap();
                    }
                }
            }
        }
    }
}

fn orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let a = Array2::<f64>::from_shape_fn((n, n), |_| rng.sample(StandardNormal));
    let mut q = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut v = a.column(j).to_owned();
        for i in 0..j {
            let qi = q.column(i);
            let proj = qi.dot(&v);
            v.scaled_add(-proj, &qi);
        }
        let norm = v.dot(&v).sqrt();
        q.column_mut(j).assign(&(v / norm));
    }
    q
}

/// Glorot-uniform kernels, orthogonal recurrent blocks, zero biases, unit BN
/// scale. Identical `(config, seed)` gives bit-identical weights.
pub fn init_weights<F: Scalar>(config: impl Into<ModelConfig>, seed: u64) -> Result<ModelWeights<F>> {
    let config = config.into();
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = BTreeMap::new();
    let mut buffers = BTreeMap::new();
    for spec in config.tensor_specs() {
        let data: ArrayD<f64> = match spec.init {
            Init::Zeros => ArrayD::zeros(IxDyn(&spec.shape)),
            Init::Ones => ArrayD::ones(IxDyn(&spec.shape)),
            Init::Glorot { fan_in, fan_out } => {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                ArrayD::from_shape_simple_fn(IxDyn(&spec.shape), || rng.gen_range(-limit..limit))
            }
            Init::Orthogonal { gates } => {
                let h = spec.shape[0];
                let mut m = Array2::<f64>::zeros((h, gates * h));
                for g in 0..gates {
                    m.slice_mut(ndarray::s![.., g * h..(g + 1) * h])
                        .assign(&orthogonal(h, &mut rng));
                }
                m.into_dyn()
            }
        };
        let data = data.mapv(|v| F::from_f64(v).unwrap());
        match spec.kind {
            TensorKind::Param => params.insert(spec.name, data),
            TensorKind::Buffer => buffers.insert(spec.name, data),
        };
    }
    ModelWeights::from_parts(config, seed, params, buffers)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in BN; caches intermediates; updates running stats.
    Train,
    /// Running statistics; read-only.
    Eval,
}

#[derive(Debug, Clone)]
enum ArchCache<F> {
    Crnn(crnn::CrnnCache<F>),
    Tcn(tcn::TcnCache<F>),
}

/// Intermediates from a training forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    generation: u64,
    posteriors: Vec<Array2<f64>>,
    arch: ArchCache<F>,
}

impl<F> ForwardCache<F> {
    pub fn batch_size(&self) -> usize {
        self.posteriors.len()
    }
}

/// Gradients keyed by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub tensors: BTreeMap<String, ArrayD<F>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, name: &str) -> Option<&ArrayD<F>> {
        self.tensors.get(name)
    }

    pub fn check_finite(&self) -> Result<()> {
        for (k, v) in &self.tensors {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient(k.clone()));
            }
        }
        Ok(())
    }
}

pub(crate) struct ForwardOut<F> {
    logits: Vec<Array2<F>>,
    cache: Option<ArchCache<F>>,
    updates: Vec<layers::BnUpdate>,
}

fn to_input<F: Scalar>(x: &LogMelSpectrogram, n_mels: usize) -> Result<Array2<F>> {
    if x.n_mels() != n_mels {
        return Err(Error::ShapeMismatch(format!(
            "input has {} mel bins, model expects {n_mels}",
            x.n_mels()
        )));
    }
    if x.n_frames() == 0 {
        return Err(Error::ShapeMismatch("input has no frames".into()));
    }
    Ok(x.values.mapv(|v| F::from_f32(v).unwrap()))
}

fn run<F: Scalar>(w: &ModelWeights<F>, xs: &[Array2<F>], mode: Mode) -> Result<ForwardOut<F>> {
    if xs.is_empty() {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    let out = match &w.config {
        ModelConfig::Crnn(c) => crnn::forward(w, c, xs, mode)?,
        ModelConfig::Tcn(c) => tcn::forward(w, c, xs, mode)?,
    };
    for l in &out.logits {
        if l.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteActivation("output logits".into()));
        }
    }
    Ok(out)
}

fn sigmoid_posteriors<F: Scalar>(logits: &Array2<F>) -> Array2<f64> {
    logits.mapv(|z| {
        let p = 1.0 / (1.0 + (-z.to_f64().unwrap()).exp());
        p.clamp(POSTERIOR_EPS, 1.0 - POSTERIOR_EPS)
    })
}

/// Eval-mode inference on one spectrogram.
pub fn predict<F: Scalar>(w: &ModelWeights<F>, x: &LogMelSpectrogram) -> Result<FramePosteriors> {
    let input = to_input(x, w.config.n_mels())?;
    let out = run(w, std::slice::from_ref(&input), Mode::Eval)?;
    Ok(FramePosteriors {
        values: sigmoid_posteriors(&out.logits[0]),
        frame_duration: x.frame_duration,
    })
}

/// Eval-mode inference over many spectrograms, in parallel when enabled.
pub fn predict_batch<F: Scalar>(w: &ModelWeights<F>, xs: &[LogMelSpectrogram]) -> Result<Vec<FramePosteriors>> {
    par::map(xs, |x| predict(w, x)).into_iter().collect()
}

/// Forward pass over a batch. In [`Mode::Train`] the BN running statistics
/// are updated and a cache for [`backward`] is returned.
pub fn forward<F: Scalar>(
    w: &mut ModelWeights<F>,
    xs: &[LogMelSpectrogram],
    mode: Mode,
) -> Result<(Vec<FramePosteriors>, Option<ForwardCache<F>>)> {
    let n_mels = w.config.n_mels();
    let inputs: Vec<Array2<F>> = xs.iter().map(|x| to_input(x, n_mels)).collect::<Result<_>>()?;
    let out = run(w, &inputs, mode)?;
    let posteriors: Vec<Array2<f64>> = out.logits.iter().map(sigmoid_posteriors).collect();
    let framed = posteriors
        .iter()
        .zip(xs)
        .map(|(p, x)| FramePosteriors {
            values: p.clone(),
            frame_duration: x.frame_duration,
        })
        .collect();
    let cache = match (mode, out.cache) {
        (Mode::Train, Some(arch)) => {
            w.apply_bn_updates(out.updates);
            Some(ForwardCache {
                generation: w.generation(),
                posteriors,
                arch,
            })
        }
        _ => None,
    };
    Ok((framed, cache))
}

/// [`forward`] restricted to CRNN weights.
pub fn crnn_forward<F: Scalar>(
    w: &mut ModelWeights<F>,
    xs: &[LogMelSpectrogram],
    mode: Mode,
) -> Result<(Vec<FramePosteriors>, Option<ForwardCache<F>>)> {
    if !matches!(w.config, ModelConfig::Crnn(_)) {
        return Err(Error::IncompatibleModel("weights are not a CRNN".into()));
    }
    forward(w, xs, mode)
}

/// [`forward`] restricted to TCN weights.
pub fn tcn_forward<F: Scalar>(
    w: &mut ModelWeights<F>,
    xs: &[LogMelSpectrogram],
    mode: Mode,
) -> Result<(Vec<FramePosteriors>, Option<ForwardCache<F>>)> {
    if !matches!(w.config, ModelConfig::Tcn(_)) {
        return Err(Error::IncompatibleModel("weights are not a TCN".into()));
    }
    forward(w, xs, mode)
}

/// Gradients of every learnable tensor given `dL/dp` for each batch sample.
pub fn backward<F: Scalar>(
    w: &ModelWeights<F>,
    cache: &ForwardCache<F>,
    dl_dp: &[Array2<f64>],
) -> Result<Gradients<F>> {
    if cache.generation != w.generation() {
        return Err(Error::StaleCache);
    }
    if dl_dp.len() != cache.posteriors.len()
        || dl_dp.iter().zip(&cache.posteriors).any(|(g, p)| g.dim() != p.dim())
    {
        return Err(Error::ShapeMismatch("dL/dp does not match the cached batch".into()));
    }
    // through the sigmoid: dz = dp * p * (1 - p)
    let dlogits: Vec<Array2<F>> = dl_dp
        .iter()
        .zip(&cache.posteriors)
        .map(|(g, p)| {
            let mut out = Array2::<F>::zeros(g.dim());
            ndarray::Zip::from(&mut out).and(g).and(p).for_each(|o, &g, &p| {
                *o = F::from_f64(g * p * (1.0 - p)).unwrap();
            });
            out
        })
        .collect();
    let grads = match (&w.config, &cache.arch) {
        (ModelConfig::Crnn(c), ArchCache::Crnn(cc)) => crnn::backward(w, c, cc, &dlogits)?,
        (ModelConfig::Tcn(c), ArchCache::Tcn(tc)) => tcn::backward(w, c, tc, &dlogits)?,
        _ => return Err(Error::StaleCache),
    };
    let grads = Gradients { tensors: grads };
    grads.check_finite()?;
    Ok(grads)
}
