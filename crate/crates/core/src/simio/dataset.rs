use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::formats::{self, DepthImage, Image, LabelImage};
use super::scene::{render_ground_truth, Scene, BACKGROUND_LABEL};
use crate::binio;
use crate::error::{Error, Result};
use crate::features::{self, oracle_features, FeatureMap, FeatureOracleSpec};
use crate::renderer::{Camera, Pose};
use crate::scene_field::Aabb;
use crate::semantics::{save_click_script, ClickSpec};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CLICKS_FILE: &str = "clicks.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Everything needed to synthesize one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSpec {
    pub name: String,
    pub trajectory: Vec<Pose>,
    pub cam: Camera,
    pub n_frames: usize,
    pub oracle: FeatureOracleSpec,
    pub seed: u64,
    pub class_names: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub frame_id: u32,
    pub depth: String,
    pub pose: String,
    pub features: String,
    pub labels: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub fixture: String,
    pub seed: u64,
    pub camera: Camera,
    pub bounds: Aabb,
    pub n_classes: usize,
    #[serde(default)]
    pub class_names: Vec<String>,
    pub feature_dim: usize,
    pub frames: Vec<FrameEntry>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Input(format!("unsupported manifest version {}", self.version)));
        }
        self.camera.validate()?;
        Aabb::new(self.bounds.min, self.bounds.max)?;
        for (i, f) in self.frames.iter().enumerate() {
            let mut paths = vec![&f.depth, &f.pose, &f.features, &f.labels];
            paths.extend(f.instances.as_ref());
            for p in paths {
                let ok = Path::new(p).components().all(|c| matches!(c, Component::Normal(_)));
                if !ok || p.is_empty() {
                    return Err(Error::Input(format!("frame {i}: path {p:?} must be relative and inside the dataset")));
                }
            }
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s.into_bytes())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let m: Manifest = serde_json::from_slice(bytes)?;
        m.validate()?;
        Ok(m)
    }
}

/// One posed frame with its supervision and ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub frame_id: u32,
    pub pose: Pose,
    pub depth: DepthImage,
    pub features: FeatureMap,
    pub labels: LabelImage,
    pub instances: Option<LabelImage>,
}

/// A dataset directory opened through its manifest. Frames load lazily.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let bytes = binio::read_file(&root.join(MANIFEST_FILE))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest: Manifest::decode(&bytes)?,
        })
    }

    pub fn len(&self) -> usize {
        self.manifest.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.frames.is_empty()
    }

    pub fn camera(&self) -> Camera {
        self.manifest.camera
    }

    pub fn bounds(&self) -> Aabb {
        self.manifest.bounds
    }

    pub fn pose(&self, index: usize) -> Result<Pose> {
        let e = self.entry(index)?;
        formats::load_pose(&self.root.join(&e.pose))
    }

    fn entry(&self, index: usize) -> Result<&FrameEntry> {
        self.manifest
            .frames
            .get(index)
            .ok_or_else(|| Error::Lookup(format!("frame index {index} out of {}", self.len())))
    }

    pub fn load_frame(&self, index: usize) -> Result<Frame> {
        let e = self.entry(index)?;
        let cam = &self.manifest.camera;
        let check = |what: &str, w: usize, h: usize| {
            if (w, h) != (cam.width, cam.height) {
                return Err(Error::Dimension(format!(
                    "frame {}: {what} is {w}x{h}, camera is {}x{}",
                    e.frame_id, cam.width, cam.height
                )));
            }
            Ok(())
        };
        let depth = formats::load_depth(&self.root.join(&e.depth))?;
        check("depth", depth.width, depth.height)?;
        let labels = formats::load_labels(&self.root.join(&e.labels))?;
        check("labels", labels.width, labels.height)?;
        let instances = match &e.instances {
            Some(p) => {
                let img = formats::load_labels(&self.root.join(p))?;
                check("instances", img.width, img.height)?;
                Some(img)
            }
            None => None,
        };
        let features = features::load_feature_map(&self.root.join(&e.features))?;
        if features.frame_id != e.frame_id {
            return Err(Error::Input(format!(
                "feature map carries frame id {}, manifest says {}",
                features.frame_id, e.frame_id
            )));
        }
        Ok(Frame {
            frame_id: e.frame_id,
            pose: formats::load_pose(&self.root.join(&e.pose))?,
            depth,
            features,
            labels,
            instances,
        })
    }
}

fn frame_seed(seed: u64, frame: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (frame as u64).wrapping_mul(0xD1B5_4A32_D192_ED03) ^ 0xF5A1
}

/// Writes frames, ground truth, a manifest and a default click script
/// (one click per class visible in frame 0).
pub fn generate_sequence(spec: &SequenceSpec, scene: &Scene, out_dir: &Path) -> Result<Manifest> {
    if spec.n_frames != spec.trajectory.len() || spec.n_frames == 0 {
        return Err(Error::Config(format!(
            "n_frames {} does not match a trajectory of {} poses",
            spec.n_frames,
            spec.trajectory.len()
        )));
    }
    spec.cam.validate()?;
    let mut frames = Vec::with_capacity(spec.n_frames);
    let mut clicks = Vec::new();
    for (i, pose) in spec.trajectory.iter().enumerate() {
        let id = binio::to_u32(i, "frame id")?;
        let stem = format!("frames/{i:06}");
        let entry = FrameEntry {
            frame_id: id,
            depth: format!("{stem}.depth"),
            pose: format!("{stem}.pose"),
            features: format!("{stem}.fmap"),
            labels: format!("{stem}.labels"),
            instances: Some(format!("{stem}.inst")),
        };
        let gt = render_ground_truth(scene, pose, &spec.cam);
        let (w, h) = (gt.width, gt.height);
        formats::save_depth(&out_dir.join(&entry.depth), &Image::new(w, h, gt.depth)?)?;
        formats::save_pose(&out_dir.join(&entry.pose), pose)?;
        let labels = Image::new(w, h, gt.labels)?;
        formats::save_labels(&out_dir.join(&entry.labels), &labels)?;
        formats::save_labels(&out_dir.join(entry.instances.as_ref().unwrap()), &Image::new(w, h, gt.instances)?)?;
        let fmap = oracle_features(scene, pose, &spec.cam, &spec.oracle, frame_seed(spec.seed, i), id)?;
        features::save_feature_map(&out_dir.join(&entry.features), &fmap)?;
        if i == 0 {
            for c in 0..scene.n_classes() as u16 {
                if let Some((u, v)) = interior_pixel(&labels, c) {
                    clicks.push(ClickSpec {
                        at_frame: 0,
                        keyframe_id: 0,
                        u: u as u32,
                        v: v as u32,
                        name: spec.class_names.get(c as usize).cloned().unwrap_or_else(|| format!("class{c}")),
                    });
                }
            }
        }
        frames.push(entry);
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        fixture: spec.name.clone(),
        seed: spec.seed,
        camera: spec.cam,
        bounds: scene.bounds,
        n_classes: scene.n_classes(),
        class_names: spec.class_names.clone(),
        feature_dim: spec.oracle.dim(),
        frames,
    };
    binio::write_file(&out_dir.join(MANIFEST_FILE), &manifest.encode()?)?;
    save_click_script(&out_dir.join(CLICKS_FILE), &clicks)?;
    Ok(manifest)
}

/// A pixel deep inside the largest-erosion-depth region of `class`: the
/// survivor of the last non-empty erosion closest to that set's centroid.
pub fn interior_pixel(labels: &LabelImage, class: u16) -> Option<(usize, usize)> {
    let (w, h) = (labels.width, labels.height);
    let mut mask: Vec<bool> = labels.data.iter().map(|&l| l == class && l != BACKGROUND_LABEL).collect();
    let mut last = None;
    loop {
        let alive: Vec<usize> = (0..mask.len()).filter(|&k| mask[k]).collect();
        if alive.is_empty() {
            return last;
        }
        let n = alive.len() as f64;
        let cx = alive.iter().map(|k| (k % w) as f64).sum::<f64>() / n;
        let cy = alive.iter().map(|k| (k / w) as f64).sum::<f64>() / n;
        let d = |k: usize| ((k % w) as f64 - cx).powi(2) + ((k / w) as f64 - cy).powi(2);
        let best = alive.iter().copied().min_by(|&a, &b| d(a).total_cmp(&d(b))).expect("non-empty");
        last = Some((best % w, best / w));

        let prev = mask.clone();
        for &k in &alive {
            let (x, y) = (k % w, k / w);
            let edge = x == 0 || y == 0 || x + 1 == w || y + 1 == h;
            mask[k] = !edge && prev[k - 1] && prev[k + 1] && prev[k - w] && prev[k + w];
        }
    }
}
