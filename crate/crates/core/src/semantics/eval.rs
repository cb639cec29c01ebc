use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::knn::{pixel_to_zeta, upsample_labels, AnchorSet};
use super::segment::segment_view;
use super::ClickSpec;
use crate::error::{Error, Result};
use crate::features::bilinear_query;
use crate::renderer::{Field, VOID_LABEL};
use crate::simio::{Dataset, LabelImage};

/// Intersection and union counts accumulated over any number of rasters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IouAccumulator {
    inter: BTreeMap<u16, u64>,
    pred: BTreeMap<u16, u64>,
    gt: BTreeMap<u16, u64>,
    n_pixels: u64,
}

impl IouAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pixels whose ground truth is in `ignore` are skipped.
    pub fn add(&mut self, pred: &[u16], gt: &[u16], ignore: &[u16]) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(Error::Dimension(format!("{} predictions vs {} labels", pred.len(), gt.len())));
        }
        for (&p, &g) in pred.iter().zip(gt) {
            if ignore.contains(&g) {
                continue;
            }
            self.n_pixels += 1;
            *self.gt.entry(g).or_default() += 1;
            *self.pred.entry(p).or_default() += 1;
            if p == g {
                *self.inter.entry(g).or_default() += 1;
            }
        }
        Ok(())
    }

    /// Per-class IoU for every class present in the ground truth, and their mean.
    pub fn result(&self) -> Result<(Vec<(u16, f64)>, f64)> {
        if self.n_pixels == 0 {
            return Err(Error::Evaluation("no pixels left after ignoring".into()));
        }
        let per: Vec<(u16, f64)> = self
            .gt
            .iter()
            .map(|(&c, &g)| {
                let i = self.inter.get(&c).copied().unwrap_or(0);
                let p = self.pred.get(&c).copied().unwrap_or(0);
                (c, i as f64 / (g + p - i) as f64)
            })
            .collect();
        let mean = per.iter().map(|x| x.1).sum::<f64>() / per.len() as f64;
        Ok((per, mean))
    }
}

/// Mean IoU of one raster pair; void predictions are wrong for every class.
pub fn miou(pred: &[u16], gt: &[u16], ignore: &[u16]) -> Result<(Vec<(u16, f64)>, f64)> {
    let mut acc = IouAccumulator::new();
    acc.add(pred, gt, ignore)?;
    acc.result()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassIou {
    pub class_id: u16,
    pub name: String,
    pub iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class_iou: Vec<ClassIou>,
    pub mean_iou: f64,
    pub n_eval_frames: usize,
}

impl EvalReport {
    fn from_acc(acc: &IouAccumulator, names: &[String], n_eval_frames: usize) -> Result<Self> {
        let (per, mean_iou) = acc.result()?;
        Ok(Self {
            per_class_iou: per
                .into_iter()
                .map(|(class_id, iou)| ClassIou {
                    class_id,
                    name: names.get(class_id as usize).cloned().unwrap_or_else(|| format!("class{class_id}")),
                    iou,
                })
                .collect(),
            mean_iou,
            n_eval_frames,
        })
    }
}

fn frame_index(dataset: &Dataset, frame_id: u32) -> Result<usize> {
    dataset
        .manifest
        .frames
        .iter()
        .position(|f| f.frame_id == frame_id)
        .ok_or_else(|| Error::Lookup(format!("dataset has no frame {frame_id}")))
}

/// Ground-truth class under each click, so predicted class `i` can be
/// compared with dataset labels.
pub fn click_gt_classes(dataset: &Dataset, clicks: &[ClickSpec]) -> Result<Vec<u16>> {
    clicks
        .iter()
        .map(|c| {
            let f = dataset.load_frame(frame_index(dataset, c.keyframe_id)?)?;
            if c.u as usize >= f.labels.width || c.v as usize >= f.labels.height {
                return Err(Error::Input(format!("click ({}, {}) outside the image", c.u, c.v)));
            }
            Ok(f.labels.at(c.u as usize, c.v as usize))
        })
        .collect()
}

fn strided(labels: &LabelImage, stride: usize) -> Vec<u16> {
    let mut out = Vec::new();
    for y in (0..labels.height).step_by(stride) {
        for x in (0..labels.width).step_by(stride) {
            out.push(labels.at(x, y));
        }
    }
    out
}

fn to_gt(pred: &[u16], map: &[u16]) -> Vec<u16> {
    pred.iter()
        .map(|&p| map.get(p as usize).copied().unwrap_or(VOID_LABEL))
        .collect()
}

/// mIoU of the fused field over every dataset frame, rendered at `stride`.
pub fn evaluate_field(
    field: &Field<'_, f32>,
    dataset: &Dataset,
    clicks: &[ClickSpec],
    stride: usize,
    n_bins: usize,
) -> Result<EvalReport> {
    let map = click_gt_classes(dataset, clicks)?;
    let cam = dataset.camera();
    let mut acc = IouAccumulator::new();
    for i in 0..dataset.len() {
        let f = dataset.load_frame(i)?;
        let seg = segment_view(field, &cam, &f.pose, clicks.len(), stride, n_bins)?;
        acc.add(&to_gt(&seg.labels, &map), &strided(&f.labels, stride), &[crate::simio::BACKGROUND_LABEL])?;
    }
    EvalReport::from_acc(&acc, &dataset.manifest.class_names, dataset.len())
}

/// mIoU of the 2D 1-NN cosine baseline. Each click's anchor is read from the
/// feature map of its own frame; labels are upsampled by nearest neighbour.
pub fn evaluate_baseline(dataset: &Dataset, clicks: &[ClickSpec], stride: usize) -> Result<EvalReport> {
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    let map = click_gt_classes(dataset, clicks)?;
    let cam = dataset.camera();
    let anchors = AnchorSet::new(
        clicks
            .iter()
            .map(|c| {
                let f = dataset.load_frame(frame_index(dataset, c.keyframe_id)?)?;
                bilinear_query(&f.features, pixel_to_zeta(c.u, c.v, &cam))
            })
            .collect::<Result<_>>()?,
    )?;
    let mut acc = IouAccumulator::new();
    for i in 0..dataset.len() {
        let f = dataset.load_frame(i)?;
        let fm = &f.features;
        let mut cells = Vec::with_capacity(fm.height() * fm.width());
        for ci in 0..fm.height() {
            for cj in 0..fm.width() {
                cells.push(if fm.is_valid(ci, cj) {
                    anchors.classify(fm.cell(ci, cj))?
                } else {
                    VOID_LABEL
                });
            }
        }
        let full = upsample_labels(&cells, fm.height(), fm.width(), &cam)?;
        acc.add(
            &to_gt(&strided(&full, stride), &map),
            &strided(&f.labels, stride),
            &[crate::simio::BACKGROUND_LABEL],
        )?;
    }
    EvalReport::from_acc(&acc, &dataset.manifest.class_names, dataset.len())
}

/// Majority label of one instance that first appeared late in the sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub instance: u16,
    pub class_id: u16,
    pub first_frame: usize,
    /// Frame the majority vote was taken in.
    pub judged_frame: usize,
    /// Most frequent predicted ground-truth class; `None` if void won.
    pub majority: Option<u16>,
    pub correct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmergenceReport {
    pub outcomes: Vec<InstanceOutcome>,
    /// Fraction of held-out instances labelled correctly; 0 with none held out.
    pub fraction_correct: f64,
}

/// Instances first seen (with at least `min_pixels` pixels) after frame
/// `after` are judged by a majority vote over their pixels, rendered with the
/// final field in the last frame that shows them.
pub fn evaluate_emergence(
    field: &Field<'_, f32>,
    dataset: &Dataset,
    clicks: &[ClickSpec],
    after: usize,
    min_pixels: usize,
    n_bins: usize,
) -> Result<EmergenceReport> {
    let map = click_gt_classes(dataset, clicks)?;
    let cam = dataset.camera();
    // instance -> (class, first frame, last frame)
    let mut seen: BTreeMap<u16, (u16, usize, usize)> = BTreeMap::new();
    for i in 0..dataset.len() {
        let f = dataset.load_frame(i)?;
        let inst = f
            .instances
            .as_ref()
            .ok_or_else(|| Error::Input(format!("frame {} has no instance labels", f.frame_id)))?;
        let mut counts: BTreeMap<u16, (usize, u16)> = BTreeMap::new();
        for (&id, &c) in inst.data.iter().zip(&f.labels.data) {
            if id != crate::simio::BACKGROUND_LABEL {
                let e = counts.entry(id).or_insert((0, c));
                e.0 += 1;
            }
        }
        for (id, (n, c)) in counts {
            if n >= min_pixels {
                seen.entry(id).and_modify(|e| e.2 = i).or_insert((c, i, i));
            }
        }
    }
    let mut outcomes = Vec::new();
    let mut rendered: BTreeMap<usize, (Vec<u16>, Vec<u16>)> = BTreeMap::new();
    for (&instance, &(class_id, first_frame, judged_frame)) in &seen {
        if first_frame <= after {
            continue;
        }
        if !rendered.contains_key(&judged_frame) {
            let f = dataset.load_frame(judged_frame)?;
            let seg = segment_view(field, &cam, &f.pose, clicks.len(), 1, n_bins)?;
            let inst = f.instances.expect("checked above").data;
            rendered.insert(judged_frame, (inst, seg.labels));
        }
        let (inst, labels) = &rendered[&judged_frame];
        let mut votes: BTreeMap<Option<u16>, usize> = BTreeMap::new();
        for (&id, &p) in inst.iter().zip(labels) {
            if id == instance {
                let g = map.get(p as usize).copied();
                *votes.entry(g.filter(|_| p != VOID_LABEL)).or_default() += 1;
            }
        }
        let majority = votes
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .and_then(|(k, _)| *k);
        outcomes.push(InstanceOutcome {
            instance,
            class_id,
            first_frame,
            judged_frame,
            majority,
            correct: majority == Some(class_id),
        });
    }
    let fraction_correct = if outcomes.is_empty() {
        0.0
    } else {
        outcomes.iter().filter(|o| o.correct).count() as f64 / outcomes.len() as f64
    };
    Ok(EmergenceReport {
        outcomes,
        fraction_correct,
    })
}
