use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::renderer::{dot, generate_ray, sub, Camera, Pose};
use crate::scene_field::Aabb;

/// Label of pixels whose ray hits nothing.
pub const BACKGROUND_LABEL: u16 = u16::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere { center: [f64; 3], radius: f64 },
    Box { min: [f64; 3], max: [f64; 3] },
    /// Points with `normal . p = offset`; `normal` is unit length.
    Plane { normal: [f64; 3], offset: f64 },
}

impl Shape {
    /// Smallest `t > 0` with `origin + t * dir` on the surface.
    pub fn intersect(&self, origin: [f64; 3], dir: [f64; 3]) -> Option<f64> {
        const EPS: f64 = 1e-9;
        match *self {
            Shape::Sphere { center, radius } => {
                let oc = sub(origin, center);
                let b = dot(oc, dir);
                let c = dot(oc, oc) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                [-b - s, -b + s].into_iter().find(|&t| t > EPS)
            }
            Shape::Box { min, max } => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for a in 0..3 {
                    if dir[a].abs() < 1e-15 {
                        if origin[a] < min[a] || origin[a] > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let inv = 1.0 / dir[a];
                    let (mut near, mut far) = ((min[a] - origin[a]) * inv, (max[a] - origin[a]) * inv);
                    if near > far {
                        std::mem::swap(&mut near, &mut far);
                    }
                    t0 = t0.max(near);
                    t1 = t1.min(far);
                }
                if t0 > t1 {
                    return None;
                }
                [t0, t1].into_iter().find(|&t| t > EPS)
            }
            Shape::Plane { normal, offset } => {
                let denom = dot(normal, dir);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = (offset - dot(normal, origin)) / denom;
                (t > EPS).then_some(t)
            }
        }
    }

    /// Signed inside test, used by oracles: negative inside, positive outside.
    pub fn signed_distance(&self, p: [f64; 3]) -> f64 {
        match *self {
            Shape::Sphere { center, radius } => {
                let d = sub(p, center);
                dot(d, d).sqrt() - radius
            }
            Shape::Box { min, max } => {
                let mut outside = 0.0f64;
                let mut inside = f64::NEG_INFINITY;
                for a in 0..3 {
                    let q = (min[a] - p[a]).max(p[a] - max[a]);
                    outside += q.max(0.0).powi(2);
                    inside = inside.max(q);
                }
                if outside > 0.0 {
                    outside.sqrt()
                } else {
                    inside
                }
            }
            Shape::Plane { normal, offset } => dot(normal, p) - offset,
        }
    }

    fn inside_box(&self, b: &Aabb) -> bool {
        match *self {
            Shape::Sphere { center, radius } => {
                (0..3).all(|a| center[a] - radius >= b.min[a] && center[a] + radius <= b.max[a])
            }
            Shape::Box { min, max } => b.contains(min) && b.contains(max),
            Shape::Plane { .. } => true,
        }
    }

    pub fn center(&self) -> Option<[f64; 3]> {
        match *self {
            Shape::Sphere { center, .. } => Some(center),
            Shape::Box { min, max } => Some([
                0.5 * (min[0] + max[0]),
                0.5 * (min[1] + max[1]),
                0.5 * (min[2] + max[2]),
            ]),
            Shape::Plane { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub class_id: u16,
    /// Object instance; parts of one compound object share it.
    pub instance: u16,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
    pub bounds: Aabb,
}

/// Nearest hit along a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    /// Distance along the (unit) direction.
    pub t: f64,
    pub class_id: u16,
    pub instance: u16,
}

impl Scene {
    pub fn new(primitives: Vec<Primitive>, bounds: Aabb) -> Result<Self> {
        let s = Self { primitives, bounds };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.primitives.iter().enumerate() {
            if !p.shape.inside_box(&self.bounds) {
                return Err(Error::Config(format!("primitive {i} leaves the scene bounds")));
            }
            if p.class_id == BACKGROUND_LABEL {
                return Err(Error::Config(format!("primitive {i} uses the background label")));
            }
        }
        let n = self.n_classes();
        for c in 0..n {
            if !self.primitives.iter().any(|p| p.class_id as usize == c) {
                return Err(Error::Config(format!("class ids are not contiguous: {c} unused")));
            }
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.primitives.iter().map(|p| p.class_id as usize + 1).max().unwrap_or(0)
    }

    pub fn n_instances(&self) -> usize {
        self.primitives.iter().map(|p| p.instance as usize + 1).max().unwrap_or(0)
    }

    /// Closest intersection; `dir` must be unit length.
    pub fn raycast(&self, origin: [f64; 3], dir: [f64; 3]) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for p in &self.primitives {
            if let Some(t) = p.shape.intersect(origin, dir) {
                if best.is_none_or(|b| t < b.t) {
                    best = Some(Hit {
                        t,
                        class_id: p.class_id,
                        instance: p.instance,
                    });
                }
            }
        }
        best
    }
}

/// Per-pixel ground truth: z-depth (0 on a miss), class and instance labels.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f32>,
    pub labels: Vec<u16>,
    pub instances: Vec<u16>,
}

pub fn render_ground_truth(scene: &Scene, pose: &Pose, cam: &Camera) -> GroundTruth {
    let n = cam.width * cam.height;
    let mut gt = GroundTruth {
        width: cam.width,
        height: cam.height,
        depth: vec![0.0; n],
        labels: vec![BACKGROUND_LABEL; n],
        instances: vec![BACKGROUND_LABEL; n],
    };
    for y in 0..cam.height {
        for x in 0..cam.width {
            let ray = generate_ray(cam, pose, x as f64, y as f64);
            if let Some(hit) = scene.raycast(ray.origin, ray.direction) {
                let i = y * cam.width + x;
                gt.depth[i] = (hit.t / ray.dist_per_depth) as f32;
                gt.labels[i] = hit.class_id;
                gt.instances[i] = hit.instance;
            }
        }
    }
    gt
}
