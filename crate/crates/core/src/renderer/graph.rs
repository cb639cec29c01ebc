//! Batched volumetric rendering with a hand-written backward pass.
//!
//! Rays are laid out as `[feature rays | ... ]`: the first `latent_rays` rays
//! render latent features (and optionally the upsampled features), rays in
//! `semantic_rays` render logits, and every ray renders depth and opacity.

use std::ops::Range;

use rand::Rng;

use super::{Field, Ray};
use crate::diffcore::ops::{sigmoid, softplus};
use crate::diffcore::Real;
use crate::scene_field::FieldGrads;

/// Rays plus their quadrature; depths are camera z-depths, deltas are metric.
#[derive(Clone, Debug)]
pub struct RayBatch {
    pub rays: Vec<Ray>,
    pub n_bins: usize,
    pub depths: Vec<f64>,
    pub deltas: Vec<f64>,
    pub latent_rays: usize,
    pub semantic_rays: Range<usize>,
    pub upsample: bool,
}

impl RayBatch {
    /// Midpoint quadrature when `rng` is `None`, stratified otherwise.
    pub fn new<R: Rng>(rays: Vec<Ray>, near: f64, far: f64, n_bins: usize, mut rng: Option<&mut R>) -> Self {
        let mut depths = Vec::with_capacity(rays.len() * n_bins);
        let mut deltas = Vec::with_capacity(rays.len() * n_bins);
        for ray in &rays {
            let bins = match rng.as_deref_mut() {
                Some(r) => super::bins_with(near, far, n_bins, |_| r.random::<f64>()),
                None => super::bins_with(near, far, n_bins, |_| 0.5),
            };
            depths.extend_from_slice(&bins.depths);
            deltas.extend(bins.deltas.iter().map(|d| d * ray.dist_per_depth));
        }
        Self {
            rays,
            n_bins,
            depths,
            deltas,
            latent_rays: 0,
            semantic_rays: 0..0,
            upsample: false,
        }
    }

    pub fn n_rays(&self) -> usize {
        self.rays.len()
    }

    pub fn n_samples(&self) -> usize {
        self.rays.len() * self.n_bins
    }
}

/// Rendered quantities per ray.
#[derive(Clone, Debug)]
pub struct BatchOutput<T> {
    pub depth: Vec<T>,
    pub acc: Vec<T>,
    /// `latent_rays x h`
    pub latent: Vec<T>,
    /// `latent_rays x k`, empty unless the batch upsamples
    pub features: Vec<T>,
    /// `semantic_rays.len() x C_max`
    pub logits: Vec<T>,
    /// Whether any sample of the ray was clamped into the scene box.
    pub clamped: Vec<bool>,
    /// Elements allocated for per-sample feature storage.
    pub per_sample_feature_elems: usize,
}

/// Activations kept for the backward pass.
pub struct BatchTape<T> {
    pub(crate) trunk: crate::scene_field::TrunkTape<T>,
    pub(crate) raw: Vec<T>,
    pub(crate) opacity: Vec<T>,
    pub(crate) trans: Vec<T>,
    pub(crate) weights: Vec<T>,
    pub(crate) latent_samples: Vec<T>,
    pub(crate) semantic_samples: Vec<T>,
}

impl<T: Real> BatchTape<T> {
    pub fn weights(&self) -> &[T] {
        &self.weights
    }
}

/// Upstream gradients with respect to the rendered outputs.
#[derive(Clone, Debug)]
pub struct OutputGrads<T> {
    pub depth: Vec<T>,
    /// Gradient w.r.t. upsampled features if the batch upsamples, else w.r.t. latents.
    pub features: Vec<T>,
    pub logits: Vec<T>,
}

/// Transmittance-weighted compositing of one ray.
///
/// Returns `(opacity, transmittance before each sample, weights)`.
pub(crate) fn composite<T: Real>(rho: &[T], delta: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = rho.len();
    let mut o = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut trans = T::one();
    for i in 0..n {
        let oi = -(-(rho[i] * delta[i])).exp_m1();
        o.push(oi);
        t.push(trans);
        w.push(oi * trans);
        trans *= T::one() - oi;
    }
    (o, t, w)
}

pub fn forward<T: Real>(field: &Field<'_, T>, batch: &RayBatch, keep_tape: bool) -> (BatchOutput<T>, Option<BatchTape<T>>) {
    let view = &field.weights;
    let cfg = *view.config();
    let (nb, nr) = (batch.n_bins, batch.n_rays());
    let n = batch.n_samples();
    let h = cfg.hidden_dim;

    let mut points = Vec::with_capacity(n);
    let mut clamped = vec![false; nr];
    for (r, ray) in batch.rays.iter().enumerate() {
        for i in 0..nb {
            let (p, c) = field.bounds.normalize(ray.at_depth(batch.depths[r * nb + i]));
            clamped[r] |= c;
            points.push(p);
        }
    }
    let enc = view
        .encode_points(field.basis, &points)
        .expect("field basis checked at construction");
    let trunk = view.trunk_forward(enc, n);
    let raw = view.density_raw(trunk.last(), n);

    let mut opacity = Vec::with_capacity(n);
    let mut trans = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut depth = Vec::with_capacity(nr);
    let mut acc = Vec::with_capacity(nr);
    for r in 0..nr {
        let s = r * nb..(r + 1) * nb;
        let rho: Vec<T> = raw[s.clone()].iter().map(|&x| softplus(x)).collect();
        let delta: Vec<T> = batch.deltas[s.clone()].iter().map(|&d| T::of(d)).collect();
        let (o, t, w) = composite(&rho, &delta);
        depth.push(w.iter().zip(&batch.depths[s]).map(|(&wi, &d)| wi * T::of(d)).sum());
        acc.push(w.iter().copied().sum());
        opacity.extend(o);
        trans.extend(t);
        weights.extend(w);
    }

    let nl = batch.latent_rays;
    let sr = batch.semantic_rays.clone();
    let hidden = trunk.last();
    // The semantic head reads per-sample latents, so they are needed up to
    // the last semantic ray as well.
    let n_lat = if sr.is_empty() { nl } else { nl.max(sr.end) };
    let latent_samples = if n_lat > 0 {
        view.latent_forward(&hidden[..n_lat * nb * h], n_lat * nb)
    } else {
        Vec::new()
    };
    let mut latent = vec![T::zero(); nl * h];
    for r in 0..nl {
        let out = &mut latent[r * h..(r + 1) * h];
        for i in 0..nb {
            let wi = weights[r * nb + i];
            let f = &latent_samples[(r * nb + i) * h..(r * nb + i + 1) * h];
            for (o, v) in out.iter_mut().zip(f) {
                *o += wi * *v;
            }
        }
    }
    let features = if batch.upsample && nl > 0 {
        view.upsample(&latent, nl)
    } else {
        Vec::new()
    };

    let c = cfg.max_classes;
    let semantic_samples = if !sr.is_empty() {
        view.semantic_forward(&latent_samples[sr.start * nb * h..sr.end * nb * h], sr.len() * nb)
    } else {
        Vec::new()
    };
    let mut logits = vec![T::zero(); sr.len() * c];
    for (k, r) in sr.clone().enumerate() {
        let out = &mut logits[k * c..(k + 1) * c];
        for i in 0..nb {
            let wi = weights[r * nb + i];
            let s = &semantic_samples[(k * nb + i) * c..(k * nb + i + 1) * c];
            for (o, v) in out.iter_mut().zip(s) {
                *o += wi * *v;
            }
        }
    }

    let output = BatchOutput {
        depth,
        acc,
        latent,
        features,
        logits,
        clamped,
        per_sample_feature_elems: latent_samples.len(),
    };
    let tape = keep_tape.then(|| BatchTape {
        trunk,
        raw,
        opacity,
        trans,
        weights,
        latent_samples,
        semantic_samples,
    });
    (output, tape)
}

pub fn backward<T: Real>(
    field: &Field<'_, T>,
    batch: &RayBatch,
    out: &BatchOutput<T>,
    tape: &BatchTape<T>,
    grads_in: &OutputGrads<T>,
) -> FieldGrads<T> {
    let view = &field.weights;
    let cfg = *view.config();
    let (nb, nr) = (batch.n_bins, batch.n_rays());
    let n = batch.n_samples();
    let (h, c) = (cfg.hidden_dim, cfg.max_classes);
    let nl = batch.latent_rays;
    let sr = batch.semantic_rays.clone();
    let n_lat = if sr.is_empty() { nl } else { nl.max(sr.end) };
    let mut grads = FieldGrads::zeros_like(view);
    let hidden = tape.trunk.last();
    let mut d_hidden = vec![T::zero(); n * h];
    let mut d_lat_samples = vec![T::zero(); n_lat * nb * h];

    // Gradient w.r.t. each rendering weight, built up from every output.
    let mut d_w: Vec<T> = (0..n)
        .map(|s| grads_in.depth[s / nb] * T::of(batch.depths[s]))
        .collect();

    if nl > 0 {
        let d_latent = if batch.upsample {
            let mut d = vec![T::zero(); nl * h];
            view.head_backward(3, &out.latent, nl, &grads_in.features, &mut grads, Some(&mut d));
            d
        } else {
            grads_in.features.clone()
        };
        for r in 0..nl {
            let g = &d_latent[r * h..(r + 1) * h];
            for i in 0..nb {
                let s = r * nb + i;
                let f = &tape.latent_samples[s * h..(s + 1) * h];
                d_w[s] += f.iter().zip(g).map(|(a, b)| *a * *b).sum::<T>();
                let wi = tape.weights[s];
                for (d, gv) in d_lat_samples[s * h..(s + 1) * h].iter_mut().zip(g) {
                    *d = wi * *gv;
                }
            }
        }
    }

    if !sr.is_empty() {
        let mut d_sem_samples = vec![T::zero(); sr.len() * nb * c];
        for (k, r) in sr.clone().enumerate() {
            let g = &grads_in.logits[k * c..(k + 1) * c];
            for i in 0..nb {
                let s = r * nb + i;
                let local = k * nb + i;
                let sv = &tape.semantic_samples[local * c..(local + 1) * c];
                d_w[s] += sv.iter().zip(g).map(|(a, b)| *a * *b).sum::<T>();
                let wi = tape.weights[s];
                for (d, gv) in d_sem_samples[local * c..(local + 1) * c].iter_mut().zip(g) {
                    *d = wi * *gv;
                }
            }
        }
        let rows = sr.start * nb * h..sr.end * nb * h;
        view.head_backward(
            2,
            &tape.latent_samples[rows.clone()],
            sr.len() * nb,
            &d_sem_samples,
            &mut grads,
            Some(&mut d_lat_samples[rows]),
        );
    }
    if n_lat > 0 {
        view.head_backward(
            1,
            &hidden[..n_lat * nb * h],
            n_lat * nb,
            &d_lat_samples,
            &mut grads,
            Some(&mut d_hidden[..n_lat * nb * h]),
        );
    }

    // d rho_k = delta_k * (T_{k+1} g_k - sum_{i>k} w_i g_i)
    let mut d_raw = vec![T::zero(); n];
    for r in 0..nr {
        let mut suffix = T::zero();
        for i in (0..nb).rev() {
            let s = r * nb + i;
            let t_next = tape.trans[s] * (T::one() - tape.opacity[s]);
            let d_rho = T::of(batch.deltas[s]) * (t_next * d_w[s] - suffix);
            suffix += tape.weights[s] * d_w[s];
            d_raw[s] = d_rho * sigmoid(tape.raw[s]);
        }
    }
    view.head_backward(0, hidden, n, &d_raw, &mut grads, Some(&mut d_hidden));
    view.trunk_backward(&tape.trunk, d_hidden, &mut grads);
    grads
}
