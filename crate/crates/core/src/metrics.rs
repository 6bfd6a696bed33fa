//! Event-level precision and recall at connected-component level, and MOTA.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::geometry::Point2;
use crate::hypothesis::mask::{connected_components, LabelMask};
use crate::lineage::LineageForest;

pub const DEFAULT_MATCH_RADIUS: f64 = 15.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EventScores {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

impl EventScores {
    /// Rates from counts; an empty denominator counts as perfect.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            1.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f_measure = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f_measure,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MotaScore {
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp: usize,
    pub ids: usize,
    pub gt: usize,
    pub mota: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub migration: EventScores,
    pub division: EventScores,
    pub detection: EventScores,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub migration: EventScores,
    pub division: EventScores,
    pub detection: EventScores,
    pub mota: MotaScore,
}

impl EvalReport {
    pub fn new(events: EventReport, mota: MotaScore) -> Self {
        Self {
            migration: events.migration,
            division: events.division,
            detection: events.detection,
            mota,
        }
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:>9} {:>9} {:>9} {:>6} {:>6} {:>6}",
            "event", "precision", "recall", "f", "tp", "fp", "fn"
        );
        for (name, e) in [
            ("migration", &self.migration),
            ("division", &self.division),
            ("detection", &self.detection),
        ] {
            let _ = writeln!(
                s,
                "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>6} {:>6} {:>6}",
                name, e.precision, e.recall, e.f_measure, e.tp, e.fp, e.fn_
            );
        }
        let m = &self.mota;
        let _ = writeln!(
            s,
            "mota {:.4} (fn {}, fp {}, ids {}, gt {})",
            m.mota, m.fn_, m.fp, m.ids, m.gt
        );
        s
    }
}

/// Connected components of one frame with a pixel lookup.
pub struct ComponentMap {
    width: usize,
    height: usize,
    owner: Vec<Option<usize>>,
    pixels: Vec<Vec<(u32, u32)>>,
}

impl ComponentMap {
    /// Components of the foreground of `mask`, ignoring instance labels.
    pub fn new(mask: &LabelMask) -> Self {
        let mut bin = mask.clone();
        for v in &mut bin.labels {
            *v = (*v != 0) as u16;
        }
        let comps = connected_components(&bin, 1);
        let mut owner = vec![None; mask.width * mask.height];
        for c in &comps {
            for &(x, y) in &c.pixels {
                owner[y as usize * mask.width + x as usize] = Some(c.id);
            }
        }
        Self {
            width: mask.width,
            height: mask.height,
            owner,
            pixels: comps.into_iter().map(|c| c.pixels).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Component under the rounded point, else the one with the nearest
    /// pixel (ties to the lower id); `None` for an empty frame.
    pub fn locate(&self, p: &Point2) -> Option<usize> {
        let (x, y) = (p.x.round(), p.y.round());
        if x >= 0.0 && y >= 0.0 && (x as usize) < self.width && (y as usize) < self.height {
            if let Some(c) = self.owner[y as usize * self.width + x as usize] {
                return Some(c);
            }
        }
        let mut best: Option<(f64, usize)> = None;
        for (id, px) in self.pixels.iter().enumerate() {
            for &(qx, qy) in px {
                let d = (qx as f64 - p.x).powi(2) + (qy as f64 - p.y).powi(2);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, id));
                }
            }
        }
        best.map(|(_, id)| id)
    }
}

type MigrationKey = (u32, Option<usize>, Option<usize>);
type DivisionKey = (u32, Option<usize>, Option<usize>, Option<usize>);

#[derive(Debug, Default)]
struct ComponentEvents {
    migration: BTreeMap<MigrationKey, usize>,
    division: BTreeMap<DivisionKey, usize>,
    detection: BTreeMap<(u32, usize), usize>,
}

fn lift(
    forest: &LineageForest,
    maps: &BTreeMap<u32, ComponentMap>,
) -> Result<ComponentEvents, MetricsError> {
    let comp = |frame: u32, p: Point2| -> Result<Option<usize>, MetricsError> {
        maps.get(&frame)
            .map(|m| m.locate(&p))
            .ok_or(MetricsError::FrameMismatch(frame))
    };
    let mut ev = ComponentEvents::default();
    for t in &forest.tracks {
        let mut prev = None;
        for (k, e) in t.ellipses.iter().enumerate() {
            let f = t.start + k as u32;
            let c = comp(f, e.center())?;
            if let Some(c) = c {
                *ev.detection.entry((f, c)).or_default() += 1;
            }
            if k > 0 {
                *ev.migration.entry((f - 1, prev, c)).or_default() += 1;
            }
            prev = c;
        }
        if t.divided {
            let mother = comp(t.end, t.ellipses.last().expect("non-empty track").center())?;
            let mut kids: Vec<Option<usize>> = Vec::new();
            for ch in forest.tracks.iter().filter(|c| c.parent == Some(t.id)) {
                kids.push(comp(ch.start, ch.ellipses[0].center())?);
            }
            kids.resize(2, None);
            kids.sort_unstable();
            *ev.division
                .entry((t.end, mother, kids[0], kids[1]))
                .or_default() += 1;
        }
    }
    Ok(ev)
}

fn match_multisets<K: Ord>(pred: &BTreeMap<K, usize>, gt: &BTreeMap<K, usize>) -> EventScores {
    let np: usize = pred.values().sum();
    let ng: usize = gt.values().sum();
    let tp: usize = pred
        .iter()
        .map(|(k, &c)| c.min(gt.get(k).copied().unwrap_or(0)))
        .sum();
    EventScores::from_counts(tp, np - tp, ng - tp)
}

/// Migration, division and detection scores. Every cell is assigned to the
/// connected component of `masks` under its center; events are then
/// compared as multisets of component-level tuples. Detection is counted per
/// `(frame, component)`: a hit when both forests place the same non-zero
/// number of cells there, otherwise a false positive if the prediction has
/// any cell and a miss if the ground truth has any.
pub fn score_events(
    pred: &LineageForest,
    gt: &LineageForest,
    masks: &BTreeMap<u32, LabelMask>,
) -> Result<EventReport, MetricsError> {
    let maps: BTreeMap<u32, ComponentMap> = masks
        .iter()
        .map(|(&f, m)| (f, ComponentMap::new(m)))
        .collect();
    let p = lift(pred, &maps)?;
    let g = lift(gt, &maps)?;
    let keys: BTreeSet<&(u32, usize)> = p.detection.keys().chain(g.detection.keys()).collect();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for k in keys {
        let pc = p.detection.get(k).copied().unwrap_or(0);
        let gc = g.detection.get(k).copied().unwrap_or(0);
        if pc == gc {
            tp += 1;
        } else {
            fp += (pc > 0) as usize;
            fn_ += (gc > 0) as usize;
        }
    }
    Ok(EventReport {
        migration: match_multisets(&p.migration, &g.migration),
        division: match_multisets(&p.division, &g.division),
        detection: EventScores::from_counts(tp, fp, fn_),
    })
}

/// Frame-wise greedy nearest-center matching within `radius` (ties to the
/// lower ground-truth id, then the lower predicted id). A matched
/// ground-truth cell whose predicted partner differs from its previous one
/// counts as an identity switch.
pub fn score_mota(pred: &LineageForest, gt: &LineageForest, radius: f64) -> MotaScore {
    let mut frames: BTreeSet<u32> = BTreeSet::new();
    for t in pred.tracks.iter().chain(&gt.tracks) {
        frames.extend(t.start..=t.end);
    }
    let mut last: BTreeMap<u32, u32> = BTreeMap::new();
    let mut s = MotaScore::default();
    for f in frames {
        let gc = gt.cells_at(f);
        let pc = pred.cells_at(f);
        let mut pairs: Vec<(f64, u32, u32)> = Vec::new();
        for (gid, ge) in &gc {
            for (pid, pe) in &pc {
                let d = ge.center().distance(&pe.center());
                if d <= radius {
                    pairs.push((d, *gid, *pid));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut used_g = BTreeSet::new();
        let mut used_p = BTreeSet::new();
        for (_, g, p) in pairs {
            if used_g.contains(&g) || used_p.contains(&p) {
                continue;
            }
            used_g.insert(g);
            used_p.insert(p);
            if last.insert(g, p).is_some_and(|old| old != p) {
                s.ids += 1;
            }
        }
        s.gt += gc.len();
        s.fn_ += gc.len() - used_g.len();
        s.fp += pc.len() - used_p.len();
    }
    s.mota = 1.0 - (s.fn_ + s.fp + s.ids) as f64 / s.gt.max(1) as f64;
    s
}
