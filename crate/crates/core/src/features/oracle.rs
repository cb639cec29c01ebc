use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{cell_center, FeatureMap};
use crate::error::{Error, Result};
use crate::renderer::{generate_ray, Camera, Pose};
use crate::simio::Scene;

/// Synthetic front-end: one unit embedding per class plus a background
/// embedding, observed with i.i.d. Gaussian noise on a coarse grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureOracleSpec {
    pub class_embeddings: Vec<Vec<f32>>,
    pub background: Vec<f32>,
    pub noise_sigma: f64,
    pub coarse_h: usize,
    pub coarse_w: usize,
}

/// Largest cosine allowed between unrelated embeddings.
pub const MAX_COSINE: f64 = 0.3;

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        ab += *x as f64 * *y as f64;
        aa += (*x as f64).powi(2);
        bb += (*y as f64).powi(2);
    }
    ab / (aa.sqrt() * bb.sqrt())
}

fn random_unit(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..k).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

impl FeatureOracleSpec {
    /// `n_classes` class embeddings plus background, pairwise cosine below [`MAX_COSINE`].
    pub fn generate(n_classes: usize, k: usize, noise_sigma: f64, coarse: (usize, usize), seed: u64) -> Result<Self> {
        Self::generate_related(n_classes, &[], k, noise_sigma, coarse, seed)
    }

    /// Like [`generate`](Self::generate), but each `(a, b)` pair gets
    /// embeddings with exactly the given cosine (parts of one object).
    pub fn generate_related(
        n_classes: usize,
        pairs: &[(usize, usize, f64)],
        k: usize,
        noise_sigma: f64,
        coarse: (usize, usize),
        seed: u64,
    ) -> Result<Self> {
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma {noise_sigma} must be non-negative")));
        }
        if k < 2 || coarse.0 == 0 || coarse.1 == 0 {
            return Err(Error::Config("oracle needs k >= 2 and a non-empty grid".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut related = vec![None; n_classes];
        for &(a, b, c) in pairs {
            if a >= n_classes || b >= n_classes || a == b || !(c.abs() < 1.0) || related[b].is_some() {
                return Err(Error::Config(format!("bad related pair ({a}, {b}, {c})")));
            }
            related[b] = Some((a, c));
        }
        let mut embs: Vec<Vec<f64>> = Vec::with_capacity(n_classes + 1);
        // Index n_classes is the background.
        for c in 0..=n_classes {
            let mut tries = 0;
            let e = loop {
                tries += 1;
                if tries > 10_000 {
                    return Err(Error::Config(format!("cannot place {} embeddings in {k} dims", n_classes + 1)));
                }
                let u = random_unit(&mut rng, k);
                let cand = match related.get(c).copied().flatten() {
                    Some((a, cos)) if a < c => {
                        let base = &embs[a];
                        let proj: f64 = u.iter().zip(base).map(|(x, y)| x * y).sum();
                        let orth: Vec<f64> = u.iter().zip(base).map(|(x, y)| x - proj * y).collect();
                        let n = orth.iter().map(|x| x * x).sum::<f64>().sqrt();
                        let s = (1.0 - cos * cos).sqrt();
                        base.iter().zip(&orth).map(|(b, o)| cos * b + s * o / n).collect()
                    }
                    _ => u,
                };
                let ok = embs.iter().enumerate().all(|(o, e)| {
                    let d: f64 = e.iter().zip(&cand).map(|(x, y)| x * y).sum();
                    let paired = pairs.iter().any(|&(a, b, _)| (a, b) == (o, c) || (a, b) == (c, o));
                    paired || d < MAX_COSINE
                });
                if ok {
                    break cand;
                }
            };
            embs.push(e);
        }
        let mut out: Vec<Vec<f32>> = embs.into_iter().map(|e| e.into_iter().map(|v| v as f32).collect()).collect();
        let background = out.pop().expect("background embedding");
        Ok(Self {
            class_embeddings: out,
            background,
            noise_sigma,
            coarse_h: coarse.0,
            coarse_w: coarse.1,
        })
    }

    pub fn dim(&self) -> usize {
        self.background.len()
    }

    pub fn embedding(&self, class: Option<u16>) -> &[f32] {
        match class {
            Some(c) => &self.class_embeddings[c as usize],
            None => &self.background,
        }
    }

    pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
        cosine(a, b)
    }
}

/// Raycasts each coarse cell center, emits its class embedding plus noise.
pub fn oracle_features(
    scene: &Scene,
    pose: &Pose,
    cam: &Camera,
    spec: &FeatureOracleSpec,
    seed: u64,
    frame_id: u32,
) -> Result<FeatureMap> {
    let (h, w, k) = (spec.coarse_h, spec.coarse_w, spec.dim());
    if scene.n_classes() > spec.class_embeddings.len() {
        return Err(Error::Config(format!(
            "scene has {} classes but the oracle embeds {}",
            scene.n_classes(),
            spec.class_embeddings.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut data = Vec::with_capacity(h * w * k);
    for i in 0..h {
        for j in 0..w {
            let (u, v) = cell_center(i, j, h, w, cam);
            let ray = generate_ray(cam, pose, u - 0.5, v - 0.5);
            let class = scene.raycast(ray.origin, ray.direction).map(|hit| hit.class_id);
            let e = spec.embedding(class);
            if spec.noise_sigma > 0.0 {
                data.extend(e.iter().map(|&x| (x as f64 + noise.sample(&mut rng)) as f32));
            } else {
                data.extend_from_slice(e);
            }
        }
    }
    FeatureMap::new(h, w, k, data, frame_id)
}
