//! Scene representation: off-axis positional encoding, the coordinate MLP
//! producing `(density, latent feature, semantic logits)` and the affine
//! upsampler that lifts rendered latents to the target feature dimension.

mod checkpoint;
mod encoding;

use crate::diffcore::ops::{affine_backward, affine_forward, relu_backward, relu_inplace, softplus};
use crate::diffcore::{init_params, InitScheme, Matrix, ParamBlock, Real};
use crate::error::{Error, Result};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use encoding::{encode_position, make_basis, BasisKind, EncodingBasis};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FieldConfig {
    pub hidden_dim: usize,
    pub n_hidden_layers: usize,
    pub latent_dim: usize,
    /// Target feature dimension `k` produced by the upsampler.
    pub feature_dim: usize,
    pub max_classes: usize,
    /// Hidden layer whose input is re-concatenated with the encoding; 0 disables the skip.
    pub skip_layer: usize,
    pub n_frequencies: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 256,
            n_hidden_layers: 4,
            latent_dim: 256,
            feature_dim: 1536,
            max_classes: 16,
            skip_layer: 2,
            n_frequencies: 6,
        }
    }
}

impl FieldConfig {
    pub fn with_hidden(mut self, h: usize) -> Self {
        self.hidden_dim = h;
        self.latent_dim = h;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("{m}: {self:?}")));
        if self.hidden_dim == 0 || self.n_hidden_layers == 0 {
            return fail("hidden width and depth must be positive");
        }
        if self.latent_dim != self.hidden_dim {
            return fail("latent_dim must equal hidden_dim");
        }
        if self.feature_dim == 0 {
            return fail("feature_dim must be positive");
        }
        if self.max_classes < 2 {
            return fail("max_classes must be at least 2");
        }
        if self.skip_layer >= self.n_hidden_layers {
            return fail("skip_layer must index a hidden layer");
        }
        if self.n_frequencies == 0 {
            return fail("n_frequencies must be positive");
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<EncodingBasis> {
        make_basis(BasisKind::AxesPlusIcosahedron, self.n_frequencies)
    }

    fn layer_input_dim(&self, layer: usize, enc_dim: usize) -> usize {
        match layer {
            0 => enc_dim,
            l if self.skip_layer > 0 && l == self.skip_layer => self.hidden_dim + enc_dim,
            _ => self.hidden_dim,
        }
    }

    /// `(name, rows, cols)` of every block in canonical order.
    pub fn block_layout(&self, enc_dim: usize) -> Vec<(String, usize, usize)> {
        let h = self.hidden_dim;
        let mut out = Vec::with_capacity(2 * self.n_hidden_layers + 8);
        for l in 0..self.n_hidden_layers {
            out.push((format!("trunk.{l}.weight"), h, self.layer_input_dim(l, enc_dim)));
            out.push((format!("trunk.{l}.bias"), 1, h));
        }
        out.push(("head.density.weight".into(), 1, h));
        out.push(("head.density.bias".into(), 1, 1));
        out.push(("head.latent.weight".into(), self.latent_dim, h));
        out.push(("head.latent.bias".into(), 1, self.latent_dim));
        out.push(("head.semantic.weight".into(), self.max_classes, h));
        out.push(("head.semantic.bias".into(), 1, self.max_classes));
        out.push(("upsampler.weight".into(), self.feature_dim, self.latent_dim));
        out.push(("upsampler.bias".into(), 1, self.feature_dim));
        out
    }
}

/// Exact trainable scalar count and its 32-bit byte size.
pub fn param_footprint(cfg: &FieldConfig, basis: &EncodingBasis) -> (usize, usize) {
    let count: usize = cfg
        .block_layout(basis.output_dim())
        .iter()
        .map(|(_, r, c)| r * c)
        .sum();
    (count, count * std::mem::size_of::<f32>())
}

/// Axis-aligned box used to normalize world points into `[-1, 1]^3`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        if (0..3).any(|i| !(max[i] > min[i])) {
            return Err(Error::Config(format!("degenerate box {min:?}..{max:?}")));
        }
        Ok(Self { min, max })
    }

    pub fn cube(half: f64) -> Self {
        Self {
            min: [-half; 3],
            max: [half; 3],
        }
    }

    pub fn diameter(&self) -> f64 {
        (0..3).map(|i| (self.max[i] - self.min[i]).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Maps `p` into `[-1, 1]^3`, clamping; the flag reports whether clamping happened.
    pub fn normalize(&self, p: [f64; 3]) -> ([f64; 3], bool) {
        let mut out = [0.0; 3];
        let mut clamped = false;
        for i in 0..3 {
            let t = 2.0 * (p[i] - self.min[i]) / (self.max[i] - self.min[i]) - 1.0;
            if !(-1.0..=1.0).contains(&t) {
                clamped = true;
            }
            out[i] = t.clamp(-1.0, 1.0);
        }
        (out, clamped)
    }
}

/// All trainable weights of the scene MLP and the upsampler.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneParams {
    cfg: FieldConfig,
    blocks: Vec<ParamBlock>,
}

impl SceneParams {
    /// Weights are drawn fan-in uniform, biases start at zero.
    pub fn new(cfg: FieldConfig, basis: &EncodingBasis, seed: u64) -> Result<Self> {
        cfg.validate()?;
        check_basis(&cfg, basis)?;
        let blocks = cfg
            .block_layout(basis.output_dim())
            .into_iter()
            .enumerate()
            .map(|(i, (name, r, c))| {
                let scheme = if name.ends_with(".bias") {
                    InitScheme::Zeros
                } else {
                    InitScheme::UniformFanIn
                };
                init_params(name, seed.wrapping_mul(1_000_003).wrapping_add(i as u64), r, c, scheme)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cfg, blocks })
    }

    /// Rebuilds parameters from named blocks, checking names and shapes against `cfg`.
    pub fn from_blocks(cfg: FieldConfig, basis: &EncodingBasis, blocks: Vec<ParamBlock>) -> Result<Self> {
        cfg.validate()?;
        check_basis(&cfg, basis)?;
        let layout = cfg.block_layout(basis.output_dim());
        if layout.len() != blocks.len() {
            return Err(Error::Config(format!(
                "expected {} parameter blocks, found {}",
                layout.len(),
                blocks.len()
            )));
        }
        for ((name, r, c), b) in layout.iter().zip(&blocks) {
            if &b.name != name || b.shape() != (*r, *c) {
                return Err(Error::Config(format!(
                    "block {} {:?} does not match expected {name} ({r}, {c})",
                    b.name,
                    b.shape()
                )));
            }
        }
        Ok(Self { cfg, blocks })
    }

    pub fn config(&self) -> &FieldConfig {
        &self.cfg
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ParamBlock] {
        &mut self.blocks
    }

    pub fn n_params(&self) -> usize {
        self.blocks.iter().map(ParamBlock::len).sum()
    }

    pub fn view(&self) -> FieldView<'_, f32> {
        FieldView {
            cfg: self.cfg,
            mats: self.blocks.iter().map(|b| &b.values).collect(),
        }
    }

    /// Deep copy of the weight values without optimizer state.
    pub fn snapshot(&self) -> ParamSnapshot {
        ParamSnapshot {
            cfg: self.cfg,
            names: self.blocks.iter().map(|b| b.name.clone()).collect(),
            mats: self.blocks.iter().map(|b| b.values.clone()).collect(),
        }
    }

    pub fn zero_grads(&mut self) {
        self.blocks.iter_mut().for_each(ParamBlock::zero_grad);
    }

    pub fn accumulate_grads<T: Real>(&mut self, grads: &FieldGrads<T>) -> Result<()> {
        for (b, g) in self.blocks.iter_mut().zip(&grads.mats) {
            b.accumulate_grad(g)?;
        }
        Ok(())
    }
}

fn check_basis(cfg: &FieldConfig, basis: &EncodingBasis) -> Result<()> {
    if basis.n_frequencies() != cfg.n_frequencies {
        return Err(Error::Config(format!(
            "basis has {} frequencies but the field expects {}",
            basis.n_frequencies(),
            cfg.n_frequencies
        )));
    }
    Ok(())
}

/// Immutable copy of the weights, safe to share across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSnapshot {
    cfg: FieldConfig,
    names: Vec<String>,
    mats: Vec<Matrix<f32>>,
}

impl ParamSnapshot {
    pub fn config(&self) -> &FieldConfig {
        &self.cfg
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn view(&self) -> FieldView<'_, f32> {
        FieldView {
            cfg: self.cfg,
            mats: self.mats.iter().collect(),
        }
    }

    /// Promotes the weights to another precision (used by gradient checks).
    pub fn cast<T: Real>(&self) -> CastWeights<T> {
        CastWeights {
            cfg: self.cfg,
            mats: self.mats.iter().map(Matrix::cast).collect(),
        }
    }
}

/// Owned weights in precision `T`.
#[derive(Clone, Debug)]
pub struct CastWeights<T> {
    cfg: FieldConfig,
    mats: Vec<Matrix<T>>,
}

impl<T: Real> CastWeights<T> {
    pub fn from_params(params: &SceneParams) -> Self {
        Self {
            cfg: params.cfg,
            mats: params.blocks.iter().map(|b| b.values.cast()).collect(),
        }
    }

    pub fn view(&self) -> FieldView<'_, T> {
        FieldView {
            cfg: self.cfg,
            mats: self.mats.iter().collect(),
        }
    }
}

/// Gradients for every block in canonical order.
#[derive(Clone, Debug)]
pub struct FieldGrads<T> {
    pub mats: Vec<Matrix<T>>,
}

impl<T: Real> FieldGrads<T> {
    pub fn zeros_like(view: &FieldView<'_, T>) -> Self {
        Self {
            mats: view.mats.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect(),
        }
    }
}

/// Per-point outputs of the scene MLP.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample<T> {
    pub rho: T,
    pub latent: Vec<T>,
    pub logits: Vec<T>,
}

/// Cached activations of one batched trunk pass.
#[derive(Clone, Debug)]
pub struct TrunkTape<T> {
    pub n: usize,
    pub enc: Vec<T>,
    skip_input: Vec<T>,
    acts: Vec<Vec<T>>,
}

impl<T: Real> TrunkTape<T> {
    /// Output of the last hidden layer, `n x h`.
    pub fn last(&self) -> &[T] {
        self.acts.last().expect("trunk has at least one layer")
    }
}

/// Borrowed weights plus the architecture they belong to.
#[derive(Clone, Debug)]
pub struct FieldView<'a, T> {
    cfg: FieldConfig,
    mats: Vec<&'a Matrix<T>>,
}

impl<'a, T: Real> FieldView<'a, T> {
    pub fn config(&self) -> &FieldConfig {
        &self.cfg
    }

    fn trunk(&self, l: usize) -> (&Matrix<T>, &Matrix<T>) {
        (self.mats[2 * l], self.mats[2 * l + 1])
    }

    fn head_index(&self, head: usize) -> usize {
        2 * self.cfg.n_hidden_layers + 2 * head
    }

    fn head(&self, head: usize) -> (&Matrix<T>, &Matrix<T>) {
        let i = self.head_index(head);
        (self.mats[i], self.mats[i + 1])
    }

    pub fn density_head(&self) -> (&Matrix<T>, &Matrix<T>) {
        self.head(0)
    }

    pub fn latent_head(&self) -> (&Matrix<T>, &Matrix<T>) {
        self.head(1)
    }

    pub fn semantic_head(&self) -> (&Matrix<T>, &Matrix<T>) {
        self.head(2)
    }

    pub fn upsampler(&self) -> (&Matrix<T>, &Matrix<T>) {
        self.head(3)
    }

    pub fn enc_dim(&self) -> usize {
        self.mats[0].cols()
    }

    fn check_enc(&self, basis: &EncodingBasis) -> Result<()> {
        if basis.output_dim() != self.enc_dim() {
            return Err(Error::Config(format!(
                "encoding dimension {} does not match first layer input {}",
                basis.output_dim(),
                self.enc_dim()
            )));
        }
        Ok(())
    }

    /// Runs the hidden layers on `n` encoded points (`enc` is `n x enc_dim`).
    pub fn trunk_forward(&self, enc: Vec<T>, n: usize) -> TrunkTape<T> {
        let h = self.cfg.hidden_dim;
        let e = self.enc_dim();
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(self.cfg.n_hidden_layers);
        let mut skip_input = Vec::new();
        for l in 0..self.cfg.n_hidden_layers {
            let (w, b) = self.trunk(l);
            let mut out = vec![T::zero(); n * h];
            if l == 0 {
                affine_forward(&enc, n, w, b, &mut out);
            } else if self.cfg.skip_layer > 0 && l == self.cfg.skip_layer {
                skip_input = concat_rows(&acts[l - 1], h, &enc, e, n);
                affine_forward(&skip_input, n, w, b, &mut out);
            } else {
                affine_forward(&acts[l - 1], n, w, b, &mut out);
            }
            relu_inplace(&mut out);
            acts.push(out);
        }
        TrunkTape {
            n,
            enc,
            skip_input,
            acts,
        }
    }

    /// Backpropagates `d_last` (gradient w.r.t. the last hidden layer output).
    pub fn trunk_backward(&self, tape: &TrunkTape<T>, mut d_out: Vec<T>, grads: &mut FieldGrads<T>) {
        let h = self.cfg.hidden_dim;
        let e = self.enc_dim();
        let n = tape.n;
        for l in (0..self.cfg.n_hidden_layers).rev() {
            relu_backward(&tape.acts[l], &mut d_out);
            let (w, _) = self.trunk(l);
            let (gw, gb) = pair_mut(&mut grads.mats, 2 * l);
            if l == 0 {
                affine_backward(&tape.enc, n, w, &d_out, gw, gb, None);
                break;
            }
            let is_skip = self.cfg.skip_layer > 0 && l == self.cfg.skip_layer;
            let input: &[T] = if is_skip { &tape.skip_input } else { &tape.acts[l - 1] };
            let in_dim = w.cols();
            let mut d_in = vec![T::zero(); n * in_dim];
            affine_backward(input, n, w, &d_out, gw, gb, Some(&mut d_in));
            d_out = if is_skip {
                // Drop the encoding part; the encoding has no parameters.
                let mut d = vec![T::zero(); n * h];
                for r in 0..n {
                    d[r * h..(r + 1) * h].copy_from_slice(&d_in[r * (h + e)..r * (h + e) + h]);
                }
                d
            } else {
                d_in
            };
        }
    }

    /// Raw (pre-softplus) density head output for rows of `hidden`.
    pub fn density_raw(&self, hidden: &[T], n: usize) -> Vec<T> {
        let (w, b) = self.density_head();
        let mut out = vec![T::zero(); n];
        affine_forward(hidden, n, w, b, &mut out);
        out
    }

    pub fn latent_forward(&self, hidden: &[T], n: usize) -> Vec<T> {
        let (w, b) = self.latent_head();
        let mut out = vec![T::zero(); n * w.rows()];
        affine_forward(hidden, n, w, b, &mut out);
        out
    }

    /// Class logits from per-sample latents.
    pub fn semantic_forward(&self, latents: &[T], n: usize) -> Vec<T> {
        let (w, b) = self.semantic_head();
        let mut out = vec![T::zero(); n * w.rows()];
        affine_forward(latents, n, w, b, &mut out);
        out
    }

    /// Applies the upsampler to `n` rendered latents.
    pub fn upsample(&self, latents: &[T], n: usize) -> Vec<T> {
        let (w, b) = self.upsampler();
        let mut out = vec![T::zero(); n * w.rows()];
        affine_forward(latents, n, w, b, &mut out);
        out
    }

    /// Backward of a head (0 density, 1 latent, 2 semantic, 3 upsampler);
    /// accumulates into `d_input` when given.
    pub fn head_backward(
        &self,
        head: usize,
        input: &[T],
        n: usize,
        d_out: &[T],
        grads: &mut FieldGrads<T>,
        d_input: Option<&mut [T]>,
    ) {
        let (w, _) = self.head(head);
        let (gw, gb) = pair_mut(&mut grads.mats, self.head_index(head));
        match d_input {
            None => affine_backward(input, n, w, d_out, gw, gb, None),
            Some(acc) => {
                let mut d = vec![T::zero(); n * w.cols()];
                affine_backward(input, n, w, d_out, gw, gb, Some(&mut d));
                for (a, v) in acc.iter_mut().zip(&d) {
                    *a += *v;
                }
            }
        }
    }

    /// Encodes `n` normalized points.
    pub fn encode_points(&self, basis: &EncodingBasis, points: &[[f64; 3]]) -> Result<Vec<T>> {
        self.check_enc(basis)?;
        let e = self.enc_dim();
        let mut enc = vec![T::zero(); points.len() * e];
        for (p, row) in points.iter().zip(enc.chunks_exact_mut(e)) {
            basis.encode_into(*p, row);
        }
        Ok(enc)
    }

    /// Full field evaluation at normalized points.
    pub fn forward_points(&self, basis: &EncodingBasis, points: &[[f64; 3]]) -> Result<Vec<FieldSample<T>>> {
        let n = points.len();
        let enc = self.encode_points(basis, points)?;
        let tape = self.trunk_forward(enc, n);
        let raw = self.density_raw(tape.last(), n);
        let lat = self.latent_forward(tape.last(), n);
        let sem = self.semantic_forward(&lat, n);
        let (hl, c) = (self.cfg.latent_dim, self.cfg.max_classes);
        Ok((0..n)
            .map(|i| FieldSample {
                rho: softplus(raw[i]),
                latent: lat[i * hl..(i + 1) * hl].to_vec(),
                logits: sem[i * c..(i + 1) * c].to_vec(),
            })
            .collect())
    }
}

/// Field evaluation at one normalized point.
pub fn field_forward(params: &SceneParams, basis: &EncodingBasis, p: [f64; 3]) -> Result<FieldSample<f32>> {
    Ok(params.view().forward_points(basis, &[p])?.remove(0))
}

/// `W * latent + b` through the upsampler.
pub fn upsample_feature(params: &SceneParams, latent: &[f32]) -> Result<Vec<f32>> {
    let cfg = params.config();
    if latent.len() != cfg.latent_dim {
        return Err(Error::Dimension(format!(
            "latent has {} entries, expected {}",
            latent.len(),
            cfg.latent_dim
        )));
    }
    Ok(params.view().upsample(latent, 1))
}

fn concat_rows<T: Real>(a: &[T], da: usize, b: &[T], db: usize, n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n * (da + db));
    for r in 0..n {
        out.extend_from_slice(&a[r * da..(r + 1) * da]);
        out.extend_from_slice(&b[r * db..(r + 1) * db]);
    }
    out
}

fn pair_mut<T>(mats: &mut [Matrix<T>], i: usize) -> (&mut Matrix<T>, &mut Matrix<T>) {
    let (left, right) = mats.split_at_mut(i + 1);
    (&mut left[i], &mut right[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{adam_step, finite_diff_check, AdamConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> FieldConfig {
        FieldConfig {
            hidden_dim: 16,
            n_hidden_layers: 3,
            latent_dim: 16,
            feature_dim: 24,
            max_classes: 4,
            skip_layer: 1,
            n_frequencies: 2,
        }
    }

    fn zero_heads(params: &mut SceneParams) {
        let n = params.config().n_hidden_layers;
        for b in &mut params.blocks_mut()[2 * n..] {
            b.values.fill(0.0);
        }
    }

    #[test]
    fn default_footprint_under_four_megabytes() {
        let cfg = FieldConfig::default();
        let basis = cfg.basis().unwrap();
        let (count, bytes) = param_footprint(&cfg, &basis);
        // 156->256, 256->256, (256+156)->256, 256->256, heads 1/256/16, upsampler 256->1536.
        let expect = (156 * 256 + 256)
            + (256 * 256 + 256)
            + (412 * 256 + 256)
            + (256 * 256 + 256)
            + (256 + 1)
            + (256 * 256 + 256)
            + (16 * 256 + 16)
            + (1536 * 256 + 1536);
        assert_eq!(count, expect);
        assert_eq!(count, 742_417);
        assert!(bytes <= 4 << 20);
    }

    #[test]
    fn doubling_k_doubles_only_upsampler() {
        let cfg = FieldConfig::default();
        let basis = cfg.basis().unwrap();
        let (base, _) = param_footprint(&cfg, &basis);
        let big = FieldConfig {
            feature_dim: 2 * cfg.feature_dim,
            ..cfg
        };
        let (doubled, _) = param_footprint(&big, &basis);
        let upsampler = cfg.feature_dim * cfg.latent_dim + cfg.feature_dim;
        assert_eq!(doubled - base, upsampler);
    }

    #[test]
    fn class_capacity_costs_h_plus_one_each() {
        let basis = FieldConfig::default().basis().unwrap();
        let c16 = param_footprint(&FieldConfig::default(), &basis).0;
        let c2 = param_footprint(
            &FieldConfig {
                max_classes: 2,
                ..FieldConfig::default()
            },
            &basis,
        )
        .0;
        assert_eq!(c16 - c2, 14 * 257);
    }

    #[test]
    fn footprint_matches_adam_updated_scalars() {
        let cfg = small_cfg();
        let basis = cfg.basis().unwrap();
        let mut params = SceneParams::new(cfg, &basis, 3).unwrap();
        let before = params.snapshot();
        for b in params.blocks_mut() {
            b.grads.fill(1.0);
        }
        for b in params.blocks_mut() {
            adam_step(b, &AdamConfig::default()).unwrap();
        }
        let changed: usize = params
            .blocks()
            .iter()
            .zip(before.view().mats.iter())
            .map(|(b, m)| {
                b.values
                    .as_slice()
                    .iter()
                    .zip(m.as_slice())
                    .filter(|(x, y)| x != y)
                    .count()
            })
            .sum();
        assert_eq!(changed, param_footprint(&cfg, &basis).0);
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = FieldConfig {
            latent_dim: 8,
            ..small_cfg()
        };
        assert!(bad.validate().is_err());
        let bad = FieldConfig {
            max_classes: 1,
            ..small_cfg()
        };
        assert!(bad.validate().is_err());
        let bad = FieldConfig {
            skip_layer: 3,
            ..small_cfg()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_heads_give_log_two_density() {
        let cfg = small_cfg();
        let basis = cfg.basis().unwrap();
        let mut params = SceneParams::new(cfg, &basis, 1).unwrap();
        zero_heads(&mut params);
        let s = field_forward(&params, &basis, [0.1, -0.3, 0.7]).unwrap();
        assert!((s.rho - std::f32::consts::LN_2).abs() < 1e-6);
        assert!(s.latent.iter().all(|&v| v == 0.0));
        assert!(s.logits.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batched_forward_equals_individual() {
        let cfg = small_cfg();
        let basis = cfg.basis().unwrap();
        let params = SceneParams::new(cfg, &basis, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<[f64; 3]> = (0..8)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let batch = params.view().forward_points(&basis, &pts).unwrap();
        for (p, b) in pts.iter().zip(&batch) {
            let single = field_forward(&params, &basis, *p).unwrap();
            assert_eq!(single.rho.to_bits(), b.rho.to_bits());
            assert_eq!(single.latent, b.latent);
            assert_eq!(single.logits, b.logits);
        }
    }

    #[test]
    fn density_never_negative() {
        let cfg = small_cfg();
        let basis = cfg.basis().unwrap();
        let mut params = SceneParams::new(cfg, &basis, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for b in params.blocks_mut() {
            for v in b.values.as_mut_slice() {
                *v = rng.random_range(-2.0..2.0);
            }
        }
        let pts: Vec<[f64; 3]> = (0..1000)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        for s in params.view().forward_points(&basis, &pts).unwrap() {
            assert!(s.rho >= 0.0);
        }
    }

    #[test]
    fn upsample_zero_identity_and_linearity() {
        let cfg = small_cfg();
        let basis = cfg.basis().unwrap();
        let mut params = SceneParams::new(cfg, &basis, 5).unwrap();
        let ui = 2 * cfg.n_hidden_layers + 6;
        params.blocks_mut()[ui].values.fill(0.0);
        params.blocks_mut()[ui + 1].values.fill(0.0);
        let lat: Vec<f32> = (0..16).map(|i| i as f32 * 0.1).collect();
        assert!(upsample_feature(&params, &lat).unwrap().iter().all(|&v| v == 0.0));

        for i in 0..cfg.latent_dim {
            params.blocks_mut()[ui].values.set(i, i, 1.0);
        }
        let mut e1 = vec![0.0; 16];
        e1[0] = 1.0;
        let out = upsample_feature(&params, &e1).unwrap();
        let mut expect = vec![0.0; 24];
        expect[0] = 1.0;
        assert_eq!(out, expect);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for v in params.blocks_mut()[ui].values.as_mut_slice() {
            *v = rng.random_range(-1.0..1.0);
        }
        for _ in 0..20 {
            let x: Vec<f32> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f32> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (a, b) = (rng.random_range(-2.0f32..2.0), rng.random_range(-2.0f32..2.0));
            let mix: Vec<f32> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = upsample_feature(&params, &mix).unwrap();
            let ux = upsample_feature(&params, &x).unwrap();
            let uy = upsample_feature(&params, &y).unwrap();
            for i in 0..24 {
                assert!((lhs[i] - (a * ux[i] + b * uy[i])).abs() < 1e-5);
            }
        }
        assert!(upsample_feature(&params, &[0.0; 3]).is_err());
    }

    /// Sum of all heads (with softplus on density) as a smooth scalar probe of
    /// the trunk and head backward kernels.
    fn probe_loss(view: &FieldView<'_, f64>, basis: &EncodingBasis, pts: &[[f64; 3]], grads: Option<&mut FieldGrads<f64>>) -> f64 {
        let n = pts.len();
        let enc = view.encode_points(basis, pts).unwrap();
        let tape = view.trunk_forward(enc, n);
        let raw = view.density_raw(tape.last(), n);
        let lat = view.latent_forward(tape.last(), n);
        let sem = view.semantic_forward(&lat, n);
        let up = view.upsample(&lat, n);
        let coeff = |i: usize| ((i * 7919) % 13) as f64 / 13.0 - 0.4;
        let mut loss: f64 = raw.iter().map(|&r| softplus(r)).sum();
        loss += lat.iter().enumerate().map(|(i, v)| coeff(i) * v).sum::<f64>();
        loss += sem.iter().enumerate().map(|(i, v)| 0.5 * v * v * coeff(i + 3)).sum::<f64>();
        loss += up.iter().enumerate().map(|(i, v)| coeff(i + 5) * v).sum::<f64>();
        if let Some(g) = grads {
            let h = view.config().hidden_dim;
            let mut d_hidden = vec![0.0; n * h];
            let d_raw: Vec<f64> = raw.iter().map(|&r| crate::diffcore::ops::sigmoid(r)).collect();
            view.head_backward(0, tape.last(), n, &d_raw, g, Some(&mut d_hidden));
            let d_up: Vec<f64> = (0..up.len()).map(|i| coeff(i + 5)).collect();
            let mut d_lat: Vec<f64> = (0..lat.len()).map(coeff).collect();
            let mut extra = vec![0.0; lat.len()];
            view.head_backward(3, &lat, n, &d_up, g, Some(&mut extra));
            let d_sem: Vec<f64> = sem.iter().enumerate().map(|(i, v)| v * coeff(i + 3)).collect();
            view.head_backward(2, &lat, n, &d_sem, g, Some(&mut extra));
            for (a, b) in d_lat.iter_mut().zip(&extra) {
                *a += b;
            }
            view.head_backward(1, tape.last(), n, &d_lat, g, Some(&mut d_hidden));
            view.trunk_backward(&tape, d_hidden, g);
        }
        loss
    }

    #[test]
    fn field_gradients_pass_finite_differences() {
        let cfg = small_cfg();
        let basis = cfg.basis().unwrap();
        let mut params = SceneParams::new(cfg, &basis, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for b in params.blocks_mut() {
            for v in b.values.as_mut_slice() {
                *v += rng.random_range(-0.1..0.1);
            }
        }
        let pts: Vec<[f64; 3]> = (0..6)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let weights = CastWeights::<f64>::from_params(&params);
        let mut grads = FieldGrads::zeros_like(&weights.view());
        probe_loss(&weights.view(), &basis, &pts, Some(&mut grads));
        params.accumulate_grads(&grads).unwrap();
        let err = finite_diff_check(
            |bs| {
                let p = SceneParams::from_blocks(cfg, &basis, bs.to_vec()).unwrap();
                probe_loss(&CastWeights::<f64>::from_params(&p).view(), &basis, &pts, None)
            },
            params.blocks(),
            1e-3,
            150,
            1,
        );
        assert!(err < 1e-3, "max relative error {err}");
    }

    #[test]
    fn aabb_normalizes_and_flags_clamping() {
        let b = Aabb::new([0.0, 0.0, 0.0], [2.0, 4.0, 6.0]).unwrap();
        let (p, c) = b.normalize([1.0, 2.0, 3.0]);
        assert_eq!(p, [0.0, 0.0, 0.0]);
        assert!(!c);
        let (p, c) = b.normalize([3.0, 0.0, 6.0]);
        assert_eq!(p, [1.0, -1.0, 1.0]);
        assert!(c);
        assert!(Aabb::new([0.0; 3], [1.0, 0.0, 1.0]).is_err());
    }
}
