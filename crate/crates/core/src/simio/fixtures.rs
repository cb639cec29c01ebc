//! Named desk-scale fixtures. The world is z-up with objects resting on z = 0.

use std::f64::consts::PI;

use super::dataset::SequenceSpec;
use super::scene::{Primitive, Scene, Shape};
use crate::error::{Error, Result};
use crate::features::FeatureOracleSpec;
use crate::renderer::{Camera, Pose};
use crate::scene_field::Aabb;

pub const FIXTURES: [&str; 4] = ["single_frame", "tabletop5", "exploration", "specialization"];

/// Coarse grid of the synthetic front-end (EfficientNet-like geometry).
pub const ORACLE_GRID: (usize, usize) = (22, 38);
pub const ORACLE_DIM: usize = 1536;
pub const ORACLE_SIGMA: f64 = 0.1;

const UP: [f64; 3] = [0.0, 0.0, 1.0];

/// Shape templates, placed with their base centered at `(x, y, 0)`.
#[derive(Clone, Copy)]
enum Kind {
    Ball,
    Cube,
    Can,
    Book,
    Block,
}

fn place(kind: Kind, x: f64, y: f64) -> Shape {
    let cuboid = |sx: f64, sy: f64, sz: f64| Shape::Box {
        min: [x - sx / 2.0, y - sy / 2.0, 0.0],
        max: [x + sx / 2.0, y + sy / 2.0, sz],
    };
    match kind {
        Kind::Ball => Shape::Sphere {
            center: [x, y, 0.18],
            radius: 0.18,
        },
        Kind::Cube => cuboid(0.3, 0.3, 0.3),
        Kind::Can => cuboid(0.18, 0.18, 0.45),
        Kind::Book => cuboid(0.4, 0.28, 0.1),
        Kind::Block => cuboid(0.22, 0.5, 0.2),
    }
}

fn desk_camera() -> Camera {
    Camera::desk(0.8, 4.0)
}

fn orbit(n: usize, center: [f64; 3], radius: f64, elevation: f64, az0: f64, sweep: f64) -> Result<Vec<Pose>> {
    (0..n)
        .map(|i| {
            let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            let az = az0 + sweep * t;
            let eye = [
                center[0] + radius * elevation.cos() * az.cos(),
                center[1] + radius * elevation.cos() * az.sin(),
                center[2] + radius * elevation.sin(),
            ];
            Pose::look_at(eye, center, UP)
        })
        .collect()
}

struct Builder {
    prims: Vec<Primitive>,
}

impl Builder {
    fn add(&mut self, shape: Shape, class_id: u16) -> &mut Self {
        let instance = self.prims.len() as u16;
        self.prims.push(Primitive { shape, class_id, instance });
        self
    }

    /// Parts of one object share an instance id.
    fn add_compound(&mut self, parts: &[(Shape, u16)]) -> &mut Self {
        let instance = self.prims.iter().map(|p| p.instance + 1).max().unwrap_or(0);
        for &(shape, class_id) in parts {
            self.prims.push(Primitive { shape, class_id, instance });
        }
        self
    }
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Builds the named fixture. Geometry and trajectory are fixed; `seed`
/// drives the oracle embeddings and noise.
pub fn standard_fixture(name: &str, seed: u64) -> Result<(Scene, SequenceSpec)> {
    let cam = desk_camera();
    let tabletop_kinds = [Kind::Ball, Kind::Cube, Kind::Can, Kind::Book, Kind::Block];
    let (scene, trajectory, class_names, pairs): (Scene, Vec<Pose>, Vec<String>, Vec<(usize, usize, f64)>) = match name {
        "single_frame" => {
            let mut b = Builder { prims: Vec::new() };
            b.add(
                Shape::Box {
                    min: [-1.2, -1.2, -0.1],
                    max: [1.2, 1.2, 0.0],
                },
                0,
            );
            b.add(place(Kind::Ball, -0.5, 0.1), 1)
                .add(place(Kind::Can, 0.1, 0.4), 2)
                .add(place(Kind::Cube, 0.55, -0.2), 3);
            let scene = Scene::new(b.prims, Aabb::cube(1.25))?;
            let poses = orbit(1, [0.0, 0.0, 0.1], 2.3, 40f64.to_radians(), -PI / 2.0, 0.0)?;
            (scene, poses, names(&["table", "ball", "can", "cube"]), vec![])
        }
        "tabletop5" => {
            let mut b = Builder { prims: Vec::new() };
            let xs = [-1.0, -0.5, 0.0, 0.5, 1.0];
            let back = [0usize, 1, 2, 3, 4];
            let front = [2usize, 4, 0, 1, 3];
            for (i, &x) in xs.iter().enumerate() {
                b.add(place(tabletop_kinds[back[i]], x, 0.5), back[i] as u16);
            }
            for (i, &x) in xs.iter().enumerate() {
                b.add(place(tabletop_kinds[front[i]], x, -0.5), front[i] as u16);
            }
            let scene = Scene::new(b.prims, Aabb::cube(1.25))?;
            let poses = orbit(30, [0.0, 0.0, 0.15], 2.4, 40f64.to_radians(), -PI / 2.0 - 0.7, 1.4)?;
            (scene, poses, names(&["ball", "cube", "can", "book", "block"]), vec![])
        }
        "exploration" => {
            let mut b = Builder { prims: Vec::new() };
            let kinds = [Kind::Ball, Kind::Cube, Kind::Can, Kind::Book];
            // One of each class in view of the first frame.
            for (c, x, y) in [(0u16, -1.9, -0.3), (1, -1.1, -0.3), (2, -1.9, 0.35), (3, -1.1, 0.35)] {
                b.add(place(kinds[c as usize], x, y), c);
            }
            // Duplicates far to the right.
            let row1 = [1u16, 3, 0, 2];
            let row2 = [2u16, 0, 3, 1];
            for (i, x) in [0.8, 1.3, 1.8, 2.3].into_iter().enumerate() {
                b.add(place(kinds[row1[i] as usize], x, -0.3), row1[i]);
                b.add(place(kinds[row2[i] as usize], x, 0.35), row2[i]);
            }
            let scene = Scene::new(b.prims, Aabb::new([-2.6, -1.0, -0.25], [2.6, 1.0, 1.0])?)?;
            let poses = (0..30)
                .map(|t| {
                    let x = if t <= 15 {
                        -1.5 + 0.01 * t as f64
                    } else {
                        -1.35 + 2.9 * (t - 15) as f64 / 14.0
                    };
                    Pose::look_at([x, -2.3, 1.3], [x, 0.0, 0.1], UP)
                })
                .collect::<Result<Vec<_>>>()?;
            (scene, poses, names(&["ball", "cube", "can", "book"]), vec![])
        }
        "specialization" => {
            let mut b = Builder { prims: Vec::new() };
            for (x, y) in [(-0.8, 0.4), (0.5, -0.4)] {
                // lamp: base + shade
                b.add_compound(&[
                    (
                        Shape::Box {
                            min: [x - 0.12, y - 0.12, 0.0],
                            max: [x + 0.12, y + 0.12, 0.3],
                        },
                        0,
                    ),
                    (
                        Shape::Sphere {
                            center: [x, y, 0.45],
                            radius: 0.17,
                        },
                        1,
                    ),
                ]);
            }
            for (x, y) in [(0.0, 0.5), (-0.7, -0.5)] {
                // bottle: body + cap
                b.add_compound(&[
                    (
                        Shape::Box {
                            min: [x - 0.1, y - 0.1, 0.0],
                            max: [x + 0.1, y + 0.1, 0.4],
                        },
                        2,
                    ),
                    (
                        Shape::Box {
                            min: [x - 0.06, y - 0.06, 0.4],
                            max: [x + 0.06, y + 0.06, 0.52],
                        },
                        3,
                    ),
                ]);
            }
            b.add(place(Kind::Cube, 0.85, 0.45), 4).add(place(Kind::Cube, -0.1, -0.55), 4);
            let scene = Scene::new(b.prims, Aabb::cube(1.25))?;
            let poses = orbit(30, [0.0, 0.0, 0.2], 2.4, 40f64.to_radians(), -PI / 2.0 - 0.7, 1.4)?;
            let pairs = vec![(0, 1, 0.7), (2, 3, 0.7)];
            (scene, poses, names(&["lamp_base", "lamp_shade", "bottle_body", "bottle_cap", "cube"]), pairs)
        }
        other => {
            return Err(Error::Config(format!(
                "unknown fixture {other:?}; expected one of {FIXTURES:?}"
            )))
        }
    };
    let oracle = FeatureOracleSpec::generate_related(
        scene.n_classes(),
        &pairs,
        ORACLE_DIM,
        ORACLE_SIGMA,
        ORACLE_GRID,
        seed ^ 0x0F0F_1357,
    )?;
    let spec = SequenceSpec {
        name: name.to_string(),
        n_frames: trajectory.len(),
        trajectory,
        cam,
        oracle,
        seed,
        class_names,
    };
    Ok((scene, spec))
}
