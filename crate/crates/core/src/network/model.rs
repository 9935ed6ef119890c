//! Attention U-Net: parameter layout, initialization, forward pass and
//! reverse-mode gradients.

use std::cell::Cell;
use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data_model::{GrayImage, ScoreMap};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

use super::layers::{self, BnCache, GateCache, GateParams, Mode};
use super::tensor::{FeatureMap, Tensor};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub base_channels: usize,
    /// Number of resolution levels; `depth - 1` down/up samplings.
    pub depth: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Gate inner width is `channels / attention_reduction` (at least 1).
    pub attention_reduction: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { base_channels: 16, depth: 5, in_channels: 1, out_channels: 1, attention_reduction: 2, seed: 0 }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.depth < 2 {
            return bad("network depth must be at least 2");
        }
        if self.base_channels == 0 {
            return bad("base_channels must be at least 1");
        }
        if self.in_channels != 1 || self.out_channels != 1 {
            return bad("only single-channel input and a single output logit are supported");
        }
        if self.attention_reduction == 0 {
            return bad("attention_reduction must be at least 1");
        }
        if self.depth > 12 || self.base_channels.checked_shl(self.depth as u32 - 1).is_none() {
            return bad("network too deep");
        }
        Ok(())
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn gate_width(&self, level: usize) -> usize {
        (self.channels(level) / self.attention_reduction).max(1)
    }

    /// Spatial dims must survive `depth - 1` halvings exactly.
    pub fn input_multiple(&self) -> usize {
        1 << (self.depth - 1)
    }

    pub fn check_input(&self, height: usize, width: usize) -> Result<()> {
        let m = self.input_multiple();
        if height == 0 || width == 0 || height % m != 0 || width % m != 0 {
            return Err(Error::ShapeMismatch(format!(
                "input {width}x{height} is not a positive multiple of {m} in both dimensions"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight { fan_in: usize },
    Bias { fan_in: usize },
    Scale,
    Shift,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BufferSpec {
    pub name: String,
    pub len: usize,
    pub init: f64,
}

/// Every parameter and buffer of the network, in initialization order.
#[derive(Clone, Debug, Default)]
pub struct Layout {
    pub params: Vec<ParamSpec>,
    pub buffers: Vec<BufferSpec>,
}

impl Layout {
    fn weight(&mut self, name: String, shape: &[usize], fan_in: usize) {
        self.params.push(ParamSpec { name, shape: shape.to_vec(), kind: ParamKind::Weight { fan_in } });
    }

    fn bias(&mut self, name: String, len: usize, fan_in: usize) {
        self.params.push(ParamSpec { name, shape: vec![len], kind: ParamKind::Bias { fan_in } });
    }

    fn conv3(&mut self, prefix: &str, cin: usize, cout: usize) {
        self.weight(format!("{prefix}.weight"), &[cout, cin, 3, 3], cin * 9);
        self.bias(format!("{prefix}.bias"), cout, cin * 9);
    }

    fn bn(&mut self, prefix: &str, c: usize) {
        self.params.push(ParamSpec { name: format!("{prefix}.gamma"), shape: vec![c], kind: ParamKind::Scale });
        self.params.push(ParamSpec { name: format!("{prefix}.beta"), shape: vec![c], kind: ParamKind::Shift });
        self.buffers.push(BufferSpec { name: format!("{prefix}.running_mean"), len: c, init: 0.0 });
        self.buffers.push(BufferSpec { name: format!("{prefix}.running_var"), len: c, init: 1.0 });
    }

    fn block(&mut self, prefix: &str, cin: usize, cout: usize) {
        self.conv3(&format!("{prefix}.conv1"), cin, cout);
        self.bn(&format!("{prefix}.bn1"), cout);
        self.conv3(&format!("{prefix}.conv2"), cout, cout);
        self.bn(&format!("{prefix}.bn2"), cout);
    }

    pub fn for_config(cfg: &NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let mut l = Layout::default();
        for level in 0..cfg.depth {
            let cin = if level == 0 { cfg.in_channels } else { cfg.channels(level - 1) };
            l.block(&format!("enc{level}"), cin, cfg.channels(level));
        }
        for level in (0..cfg.depth - 1).rev() {
            let c = cfg.channels(level);
            let f = cfg.gate_width(level);
            let p = format!("dec{level}");
            l.weight(format!("{p}.up.weight"), &[2 * c, c, 2, 2], 2 * c);
            l.bias(format!("{p}.up.bias"), c, 2 * c);
            l.weight(format!("{p}.gate.wx"), &[f, c], c);
            l.weight(format!("{p}.gate.wg"), &[f, c], c);
            l.bias(format!("{p}.gate.bias"), f, c);
            l.weight(format!("{p}.gate.psi"), &[1, f], f);
            l.bias(format!("{p}.gate.psi_bias"), 1, f);
            l.block(&p, 2 * c, c);
        }
        l.weight("head.weight".into(), &[cfg.out_channels, cfg.base_channels], cfg.base_channels);
        l.bias("head.bias".into(), cfg.out_channels, cfg.base_channels);
        Ok(l)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.shape.iter().product::<usize>()).sum()
    }
}

/// Learned parameters plus normalization running statistics, keyed by
/// layer path (e.g. `enc0.conv1.weight`, `dec2.gate.psi`).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub config: NetworkConfig,
    pub params: BTreeMap<String, Tensor<T>>,
    pub buffers: BTreeMap<String, Tensor<T>>,
}

/// Builds a freshly initialized network. Weights are drawn uniformly from
/// `±sqrt(6 / fan_in)`, biases from `±1 / sqrt(fan_in)`; normalization
/// scales start at 1 and shifts at 0.
pub fn build_model<T: Scalar>(cfg: &NetworkConfig) -> Result<ModelParams<T>> {
    let layout = Layout::for_config(cfg)?;
    let mut r = rng::seeded(cfg.seed);
    let mut params = BTreeMap::new();
    for spec in &layout.params {
        let n: usize = spec.shape.iter().product();
        let data: Vec<T> = match spec.kind {
            ParamKind::Weight { fan_in } | ParamKind::Bias { fan_in } => {
                let bound = match spec.kind {
                    ParamKind::Weight { .. } => (6.0 / fan_in as f64).sqrt(),
                    _ => 1.0 / (fan_in as f64).sqrt(),
                };
                (0..n).map(|_| T::from_f64_lossy(r.gen_range(-bound..bound))).collect()
            }
            ParamKind::Scale => vec![T::one(); n],
            ParamKind::Shift => vec![T::zero(); n],
        };
        params.insert(spec.name.clone(), Tensor { shape: spec.shape.clone(), data });
    }
    let buffers = layout
        .buffers
        .iter()
        .map(|b| (b.name.clone(), Tensor::filled(&[b.len], T::from_f64_lossy(b.init))))
        .collect();
    Ok(ModelParams { config: cfg.clone(), params, buffers })
}

impl<T: Scalar> ModelParams<T> {
    pub fn param(&self, name: &str) -> &[T] {
        &self.params.get(name).unwrap_or_else(|| panic!("missing parameter {name}")).data
    }

    fn buffer(&self, name: &str) -> &[T] {
        &self.buffers.get(name).unwrap_or_else(|| panic!("missing buffer {name}")).data
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().chain(self.buffers.values()).all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Converts every value to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let conv = |m: &BTreeMap<String, Tensor<T>>| {
            m.iter()
                .map(|(k, t)| {
                    let data = t.data.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect();
                    (k.clone(), Tensor { shape: t.shape.clone(), data })
                })
                .collect()
        };
        ModelParams { config: self.config.clone(), params: conv(&self.params), buffers: conv(&self.buffers) }
    }

    /// Folds the batch statistics recorded by a training-mode forward pass
    /// into the running estimates (unbiased variance, exponential average).
    pub fn update_running_stats(&mut self, tape: &Tape<T>, momentum: T) {
        for s in &tape.bn_stats {
            let n = T::from_usize(s.count).expect("count fits");
            let unbias = if s.count > 1 { n / (n - T::one()) } else { T::one() };
            let rm = self.buffers.get_mut(&format!("{}.running_mean", s.prefix)).expect("layout buffer");
            for (r, &m) in rm.data.iter_mut().zip(&s.mean) {
                *r = (T::one() - momentum) * *r + momentum * m;
            }
            let rv = self.buffers.get_mut(&format!("{}.running_var", s.prefix)).expect("layout buffer");
            for (r, &v) in rv.data.iter_mut().zip(&s.var) {
                *r = (T::one() - momentum) * *r + momentum * v * unbias;
            }
        }
    }
}

/// Gradient of a scalar objective with respect to every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub grads: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, name: &str) -> &[T] {
        &self.grads[name]
    }

    pub fn all_finite(&self) -> bool {
        self.grads.values().all(|g| g.iter().all(|v| v.is_finite()))
    }

    fn put(&mut self, name: String, g: Vec<T>) {
        self.grads.insert(name, g);
    }
}

struct BlockCache<T> {
    input: FeatureMap<T>,
    a1: FeatureMap<T>,
    c1: BnCache<T>,
    a2: FeatureMap<T>,
    c2: BnCache<T>,
}

struct DecoderCache<T> {
    up: FeatureMap<T>,
    gate: GateCache<T>,
    block: BlockCache<T>,
}

#[derive(Clone, Debug)]
pub struct BnBatchStats<T> {
    pub prefix: String,
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub count: usize,
}

/// Intermediate values of one forward pass, consumed by [`backward`].
pub struct Tape<T> {
    mode: Mode,
    enc: Vec<BlockCache<T>>,
    pool_args: Vec<Vec<u8>>,
    /// Decoder levels in execution order (deepest first).
    dec: Vec<DecoderCache<T>>,
    /// Batch statistics per normalization layer (training mode only).
    pub bn_stats: Vec<BnBatchStats<T>>,
}

pub struct ForwardPass<T> {
    pub logits: FeatureMap<T>,
    pub tape: Tape<T>,
}

thread_local! {
    static FORWARD_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of network forward passes run on this thread so far.
pub fn forward_calls() -> u64 {
    FORWARD_CALLS.with(Cell::get)
}

struct Ctx<'a, T> {
    params: &'a ModelParams<T>,
    mode: Mode,
    scratch: Vec<T>,
    bn_stats: Vec<BnBatchStats<T>>,
}

impl<T: Scalar> Ctx<'_, T> {
    fn bn(&mut self, prefix: &str, x: &FeatureMap<T>) -> (FeatureMap<T>, BnCache<T>) {
        let p = self.params;
        let (out, cache) = layers::bn_relu_forward(
            x,
            p.param(&format!("{prefix}.gamma")),
            p.param(&format!("{prefix}.beta")),
            p.buffer(&format!("{prefix}.running_mean")),
            p.buffer(&format!("{prefix}.running_var")),
            self.mode,
        );
        if self.mode == Mode::Train {
            self.bn_stats.push(BnBatchStats {
                prefix: prefix.to_string(),
                mean: cache.batch_mean.clone(),
                var: cache.batch_var.clone(),
                count: x.channel_len(),
            });
        }
        (out, cache)
    }

    fn block(&mut self, prefix: &str, input: FeatureMap<T>, cout: usize) -> BlockCache<T> {
        let p = self.params;
        let z1 = layers::conv3x3_forward(
            &input,
            p.param(&format!("{prefix}.conv1.weight")),
            p.param(&format!("{prefix}.conv1.bias")),
            cout,
            &mut self.scratch,
        );
        let (a1, c1) = self.bn(&format!("{prefix}.bn1"), &z1);
        drop(z1);
        let z2 = layers::conv3x3_forward(
            &a1,
            p.param(&format!("{prefix}.conv2.weight")),
            p.param(&format!("{prefix}.conv2.bias")),
            cout,
            &mut self.scratch,
        );
        let (a2, c2) = self.bn(&format!("{prefix}.bn2"), &z2);
        BlockCache { input, a1, c1, a2, c2 }
    }
}

fn gate_params<'a, T: Scalar>(p: &'a ModelParams<T>, level: usize) -> GateParams<'a, T> {
    let g = |s: &str| p.param(&format!("dec{level}.gate.{s}"));
    GateParams { wx: g("wx"), wg: g("wg"), bias: g("bias"), psi: g("psi"), psi_bias: g("psi_bias")[0] }
}

/// Runs the network on a single-channel batch and returns one logit per
/// pixel together with the tape needed for [`backward`].
pub fn forward<T: Scalar>(params: &ModelParams<T>, input: &FeatureMap<T>, mode: Mode) -> Result<ForwardPass<T>> {
    let cfg = &params.config;
    if input.channels != cfg.in_channels || input.batch == 0 {
        return Err(Error::ShapeMismatch(format!(
            "network expects a non-empty batch with {} channel(s), got {:?}",
            cfg.in_channels,
            input.shape()
        )));
    }
    cfg.check_input(input.height, input.width)?;
    FORWARD_CALLS.with(|c| c.set(c.get() + 1));

    let mut ctx = Ctx { params, mode, scratch: Vec::new(), bn_stats: Vec::new() };
    let mut enc: Vec<BlockCache<T>> = Vec::with_capacity(cfg.depth);
    let mut pool_args = Vec::with_capacity(cfg.depth - 1);
    for level in 0..cfg.depth {
        let x = if level == 0 {
            input.clone()
        } else {
            let (pooled, arg) = layers::maxpool2_forward(&enc[level - 1].a2);
            pool_args.push(arg);
            pooled
        };
        enc.push(ctx.block(&format!("enc{level}"), x, cfg.channels(level)));
    }

    let mut dec: Vec<DecoderCache<T>> = Vec::with_capacity(cfg.depth - 1);
    for level in (0..cfg.depth - 1).rev() {
        let c = cfg.channels(level);
        let below = dec.last().map(|d| &d.block.a2).unwrap_or(&enc[cfg.depth - 1].a2);
        let up = layers::conv_transpose2x2_forward(
            below,
            params.param(&format!("dec{level}.up.weight")),
            params.param(&format!("dec{level}.up.bias")),
            c,
        );
        let (gated, gate) = layers::attention_gate_forward(&enc[level].a2, &up, &gate_params(params, level));
        let cat = gated.concat_channels(&up)?;
        let block = ctx.block(&format!("dec{level}"), cat, c);
        dec.push(DecoderCache { up, gate, block });
    }

    let top = &dec.last().expect("depth >= 2").block.a2;
    let logits = layers::conv1x1_forward(
        top,
        params.param("head.weight"),
        Some(params.param("head.bias")),
        cfg.out_channels,
    );
    if !logits.all_finite() {
        return Err(Error::NonFiniteActivation("network produced non-finite logits".into()));
    }
    Ok(ForwardPass { logits, tape: Tape { mode, enc, pool_args, dec, bn_stats: ctx.bn_stats } })
}

fn block_backward<T: Scalar>(
    params: &ModelParams<T>,
    prefix: &str,
    cache: &BlockCache<T>,
    dy: &FeatureMap<T>,
    mode: Mode,
    need_dx: bool,
    grads: &mut Gradients<T>,
    scratch: &mut Vec<T>,
) -> Option<FeatureMap<T>> {
    let (dz2, dg2, db2) =
        layers::bn_relu_backward(&cache.a2, &cache.c2, params.param(&format!("{prefix}.bn2.gamma")), dy, mode);
    grads.put(format!("{prefix}.bn2.gamma"), dg2);
    grads.put(format!("{prefix}.bn2.beta"), db2);
    let c2 = layers::conv3x3_backward(&cache.a1, params.param(&format!("{prefix}.conv2.weight")), &dz2, true, scratch);
    grads.put(format!("{prefix}.conv2.weight"), c2.dweight);
    grads.put(format!("{prefix}.conv2.bias"), c2.dbias);
    let da1 = c2.dx.expect("requested");
    let (dz1, dg1, db1) =
        layers::bn_relu_backward(&cache.a1, &cache.c1, params.param(&format!("{prefix}.bn1.gamma")), &da1, mode);
    grads.put(format!("{prefix}.bn1.gamma"), dg1);
    grads.put(format!("{prefix}.bn1.beta"), db1);
    let c1 = layers::conv3x3_backward(&cache.input, params.param(&format!("{prefix}.conv1.weight")), &dz1, need_dx, scratch);
    grads.put(format!("{prefix}.conv1.weight"), c1.dweight);
    grads.put(format!("{prefix}.conv1.bias"), c1.dbias);
    c1.dx
}

/// Gradients of `sum(dlogits * logits)` with respect to every parameter.
pub fn backward<T: Scalar>(params: &ModelParams<T>, tape: &Tape<T>, dlogits: &FeatureMap<T>) -> Result<Gradients<T>> {
    let cfg = &params.config;
    let depth = cfg.depth;
    let mode = tape.mode;
    let top = &tape.dec.last().expect("depth >= 2").block.a2;
    if dlogits.channels != cfg.out_channels || (dlogits.batch, dlogits.height, dlogits.width) != (top.batch, top.height, top.width) {
        return Err(Error::ShapeMismatch(format!("logit gradient {:?} vs logits", dlogits.shape())));
    }
    let mut grads = Gradients { grads: BTreeMap::new() };
    let mut scratch = Vec::new();

    let head = layers::conv1x1_backward(top, params.param("head.weight"), dlogits, true);
    grads.put("head.weight".into(), head.dweight);
    grads.put("head.bias".into(), head.dbias);
    let mut d = head.dx.expect("requested");

    // Gradients arriving at encoder outputs through the gates.
    let mut dskip: Vec<Option<FeatureMap<T>>> = (0..depth).map(|_| None).collect();
    for i in (0..depth - 1).rev() {
        let level = depth - 2 - i;
        let dc = &tape.dec[i];
        let c = cfg.channels(level);
        let p = format!("dec{level}");
        let dcat = block_backward(params, &p, &dc.block, &d, mode, true, &mut grads, &mut scratch).expect("requested");
        let (dgated, mut dup) = dcat.split_channels(c);
        let gp = gate_params(params, level);
        let gg = layers::attention_gate_backward(&tape.enc[level].a2, &dc.up, &gp, &dc.gate, &dgated);
        dup.add_assign(&gg.dg);
        grads.put(format!("{p}.gate.wx"), gg.dwx);
        grads.put(format!("{p}.gate.wg"), gg.dwg);
        grads.put(format!("{p}.gate.bias"), gg.dbias);
        grads.put(format!("{p}.gate.psi"), gg.dpsi);
        grads.put(format!("{p}.gate.psi_bias"), vec![gg.dpsi_bias]);
        dskip[level] = Some(gg.dx);
        let below = if i == 0 { &tape.enc[depth - 1].a2 } else { &tape.dec[i - 1].block.a2 };
        let ct = layers::conv_transpose2x2_backward(below, params.param(&format!("{p}.up.weight")), &dup);
        grads.put(format!("{p}.up.weight"), ct.dweight);
        grads.put(format!("{p}.up.bias"), ct.dbias);
        d = ct.dx.expect("always computed");
    }

    for level in (0..depth).rev() {
        if let Some(s) = dskip[level].take() {
            d.add_assign(&s);
        }
        let cache = &tape.enc[level];
        let dx = block_backward(params, &format!("enc{level}"), cache, &d, mode, level > 0, &mut grads, &mut scratch);
        if level > 0 {
            let prev = &tape.enc[level - 1].a2;
            d = layers::maxpool2_backward(&dx.expect("requested"), &tape.pool_args[level - 1], prev.height, prev.width);
        }
    }
    if !grads.all_finite() {
        return Err(Error::NonFiniteGradient("backward pass produced non-finite values".into()));
    }
    Ok(grads)
}

/// Inference-mode logits for a batch of images of identical size.
pub fn predict<T: Scalar>(params: &ModelParams<T>, images: &[&GrayImage]) -> Result<Vec<ScoreMap<T>>> {
    let input = FeatureMap::from_images(images)?;
    forward(params, &input, Mode::Eval)?.logits.to_score_maps()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_count(ci: usize, co: usize) -> usize {
        9 * co * (ci + co) + 6 * co
    }

    #[test]
    fn default_parameter_count_is_frozen() {
        let cfg = NetworkConfig::default();
        let layout = Layout::for_config(&cfg).unwrap();
        // closed form: encoder blocks + decoder levels (36C^2 + 8C + 1) + head
        let enc: usize = (0..5).map(|l| block_count(if l == 0 { 1 } else { 16 << (l - 1) }, 16 << l)).sum();
        let dec: usize = (0..4).map(|l| 16usize << l).map(|c| 36 * c * c + 8 * c + 1).sum();
        assert_eq!(enc, 1_180_464);
        assert_eq!(dec, 785_284);
        assert_eq!(layout.param_count(), enc + dec + 17);
        assert_eq!(layout.param_count(), 1_965_765);
        assert_eq!(build_model::<f32>(&cfg).unwrap().param_count(), 1_965_765);
    }

    #[test]
    fn config_validation() {
        for depth in [0, 1] {
            let cfg = NetworkConfig { depth, ..Default::default() };
            assert!(matches!(build_model::<f32>(&cfg), Err(Error::InvalidConfig(_))));
        }
        let cfg = NetworkConfig { base_channels: 0, ..Default::default() };
        assert!(matches!(build_model::<f32>(&cfg), Err(Error::InvalidConfig(_))));
        assert!(NetworkConfig::default().check_input(224, 224).is_ok());
        assert!(NetworkConfig::default().check_input(224, 200).is_err());
    }

    #[test]
    fn initialization_is_deterministic_and_bounded() {
        let cfg = NetworkConfig { base_channels: 4, depth: 3, seed: 9, ..Default::default() };
        let a = build_model::<f32>(&cfg).unwrap();
        assert_eq!(a, build_model::<f32>(&cfg).unwrap());
        let b = build_model::<f32>(&NetworkConfig { seed: 10, ..cfg.clone() }).unwrap();
        assert_ne!(a.params, b.params);
        let bound = (6.0f32 / 36.0).sqrt();
        assert!(a.param("enc1.conv1.weight").iter().all(|v| v.abs() <= bound));
        assert!(a.param("enc0.bn1.gamma").iter().all(|&v| v == 1.0));
        assert!(a.buffers["dec0.bn2.running_var"].data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn output_matches_input_size_and_is_deterministic() {
        let cfg = NetworkConfig { base_channels: 4, depth: 3, ..Default::default() };
        let params = build_model::<f32>(&cfg).unwrap();
        let imgs: Vec<GrayImage> =
            (0..4).map(|k| GrayImage::from_fn(24, 16, |x, y| ((x * 7 + y * 3 + k * 11) % 256) as u8)).collect();
        let refs: Vec<&GrayImage> = imgs.iter().collect();
        let out = predict(&params, &refs).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|m| m.dims() == (24, 16)));
        assert_eq!(out, predict(&params, &refs).unwrap());
        let bad = GrayImage::filled(22, 16, 0);
        assert!(matches!(predict(&params, &[&bad]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn batch_of_four_at_full_resolution() {
        let params = build_model::<f32>(&NetworkConfig { base_channels: 2, ..Default::default() }).unwrap();
        let img = GrayImage::from_fn(224, 224, |x, y| ((x ^ y) & 0xff) as u8);
        let out = predict(&params, &[&img, &img, &img, &img]).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|m| m.dims() == (224, 224) && m.data().iter().all(|v| v.is_finite())));
    }

    #[test]
    fn forward_counter_counts_this_thread() {
        let params = build_model::<f32>(&NetworkConfig { base_channels: 2, depth: 2, ..Default::default() }).unwrap();
        let before = forward_calls();
        predict(&params, &[&GrayImage::filled(4, 4, 9)]).unwrap();
        assert_eq!(forward_calls(), before + 1);
    }

    #[test]
    fn running_stats_follow_batch_statistics() {
        let cfg = NetworkConfig { base_channels: 2, depth: 2, ..Default::default() };
        let mut params = build_model::<f64>(&cfg).unwrap();
        let input = FeatureMap::from_images(&[&GrayImage::from_fn(4, 4, |x, y| (x * 40 + y * 3) as u8)]).unwrap();
        let pass = forward(&params, &input, Mode::Train).unwrap();
        let stats = pass.tape.bn_stats.iter().find(|s| s.prefix == "enc0.bn1").unwrap().clone();
        params.update_running_stats(&pass.tape, 1.0);
        assert_eq!(params.buffers["enc0.bn1.running_mean"].data, stats.mean);
        let expect: Vec<f64> = stats.var.iter().map(|v| v * 16.0 / 15.0).collect();
        for (a, e) in params.buffers["enc0.bn1.running_var"].data.iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}
