//! Synthetic sequences of moving, dividing and clumping elliptical cells.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, SynthError};
use crate::geometry::Ellipse;
use crate::hypothesis::mask::{mask_file_name, LabelMask};
use crate::lineage::{write_forest, LineageForest, Track, GT_ELLIPSE_PREFIX, GT_TRACK_FILE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub frames: u32,
    pub width: usize,
    pub height: usize,
    pub initial_cells: usize,
    /// Standard deviation of the per-frame random walk, in pixels.
    pub motion_sigma: f64,
    pub division_prob: f64,
    pub disappearance_prob: f64,
    /// Frames a cell must have lived before it may divide.
    pub min_division_age: u32,
    pub a_range: (f64, f64),
    pub b_range: (f64, f64),
    /// Pull toward the nearest neighbor, in pixels per frame.
    pub clumping: f64,
    /// Preferred center spacing as a fraction of the summed radii along the
    /// line between the centers.
    pub contact: f64,
    /// Neighbors farther than this multiple of the summed radii exert no
    /// pull.
    pub clump_range: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            frames: 30,
            width: 320,
            height: 320,
            initial_cells: 8,
            motion_sigma: 1.0,
            division_prob: 0.03,
            disappearance_prob: 0.0,
            min_division_age: 4,
            a_range: (18.0, 22.0),
            b_range: (15.0, 18.0),
            clumping: 0.5,
            contact: 0.95,
            clump_range: 1.6,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::ConfigInvalid(m.into()));
        if self.frames < 2 {
            return bad("frames must be at least 2");
        }
        for (name, p) in [
            ("division_prob", self.division_prob),
            ("disappearance_prob", self.disappearance_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::ConfigInvalid(format!(
                    "{name} must be in [0, 1]"
                )));
            }
        }
        let (a0, a1) = self.a_range;
        let (b0, b1) = self.b_range;
        if !(a0 > 0.0 && a0 <= a1 && b0 > 0.0 && b0 <= b1 && b1 <= a1) {
            return bad("axis ranges must be positive, ordered and b within a");
        }
        if self.initial_cells == 0 {
            return bad("initial_cells must be positive");
        }
        let margin = 2.0 * a1 + 4.0;
        if (self.width as f64) < 2.0 * margin || (self.height as f64) < 2.0 * margin {
            return bad("image too small for the cell size");
        }
        if !(self.motion_sigma >= 0.0
            && self.clumping >= 0.0
            && self.contact > 0.0
            && self.clump_range >= 0.0)
        {
            return bad(
                "motion_sigma, clumping and clump_range must be non-negative, contact positive",
            );
        }
        if self.width > u16::MAX as usize || self.height > u16::MAX as usize {
            return bad("image too large");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Cell {
    track: usize,
    e: Ellipse,
    target_a: f64,
    target_b: f64,
    age: u32,
}

impl Cell {
    fn radius(&self) -> f64 {
        0.5 * (self.e.a + self.e.b)
    }

    /// Center-to-boundary distance in direction `(dx, dy)`.
    fn radius_towards(&self, dx: f64, dy: f64) -> f64 {
        let phi = dy.atan2(dx) - self.e.theta;
        let (a, b) = (self.e.a, self.e.b);
        a * b / ((b * phi.cos()).powi(2) + (a * phi.sin()).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct SynthSequence {
    /// Binary masks (union of cells).
    pub masks: BTreeMap<u32, LabelMask>,
    /// Masks labeled by ground-truth track id; later tracks overwrite
    /// earlier ones where cells overlap.
    pub labeled: BTreeMap<u32, LabelMask>,
    pub gt: LineageForest,
    /// Cell-frames at which a division was drawn.
    pub division_trials: usize,
    pub divisions: usize,
}

impl SynthSequence {
    pub fn frames(&self) -> Vec<u32> {
        self.masks.keys().copied().collect()
    }
}

struct Draft {
    parent: Option<usize>,
    start: u32,
    ellipses: Vec<Ellipse>,
    divided: bool,
}

fn render(cells: &[(u16, Ellipse)], w: usize, h: usize) -> LabelMask {
    let mut m = LabelMask::new(w, h);
    for &(label, e) in cells {
        let (x0, y0, x1, y1) = e.bounding_box();
        let xs = x0.floor().max(0.0) as usize..=(x1.ceil().min(w as f64 - 1.0)) as usize;
        for y in y0.floor().max(0.0) as usize..=(y1.ceil().min(h as f64 - 1.0)) as usize {
            for x in xs.clone() {
                if e.contains(&crate::geometry::Point2::new(x as f64, y as f64)) {
                    m.set(x, y, label);
                }
            }
        }
    }
    m
}

/// Simulates a sequence with frames `1..=frames`. Cells follow a Gaussian
/// random walk plus a pull toward their nearest neighbor, are pushed apart
/// below the contact spacing and reflected at the image margins. A dividing
/// cell is replaced next frame by two half-area circular daughters at `±a/2`
/// along its major axis.
pub fn generate(cfg: &SynthConfig) -> Result<SynthSequence, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let step = Normal::new(0.0, cfg.motion_sigma.max(1e-12)).expect("valid sigma");
    let turn = Normal::new(0.0, 0.03).expect("valid sigma");
    let margin = cfg.a_range.1 + 3.0;
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let draw_axes = |rng: &mut ChaCha8Rng| {
        let a = rng.random_range(cfg.a_range.0..=cfg.a_range.1);
        let b = rng.random_range(cfg.b_range.0..=cfg.b_range.1.min(a));
        (a, b)
    };

    let spacing = 1.2f64.max(cfg.clump_range + 0.2);
    let mut drafts: Vec<Draft> = Vec::new();
    let mut cells: Vec<Cell> = Vec::new();
    for _ in 0..cfg.initial_cells {
        let (a, b) = draw_axes(&mut rng);
        let mut pos = (0.0, 0.0);
        for attempt in 0..1000 {
            pos = (
                rng.random_range(margin..w - margin),
                rng.random_range(margin..h - margin),
            );
            let clear = cells.iter().all(|c| {
                (c.e.cx - pos.0).hypot(c.e.cy - pos.1) >= spacing * (c.radius() + 0.5 * (a + b))
            });
            if clear || attempt == 999 {
                break;
            }
        }
        let e = Ellipse::new(pos.0, pos.1, a, b, rng.random_range(0.0..PI));
        drafts.push(Draft {
            parent: None,
            start: 1,
            ellipses: vec![e],
            divided: false,
        });
        cells.push(Cell {
            track: drafts.len() - 1,
            e,
            target_a: a,
            target_b: b,
            age: 0,
        });
    }

    let mut division_trials = 0;
    let mut divisions = 0;
    for frame in 2..=cfg.frames {
        let mut next: Vec<Cell> = Vec::new();
        for c in &cells {
            if cfg.disappearance_prob > 0.0 && rng.random_bool(cfg.disappearance_prob) {
                continue;
            }
            let may_divide = c.age + 1 >= cfg.min_division_age;
            if may_divide {
                division_trials += 1;
            }
            if may_divide && cfg.division_prob > 0.0 && rng.random_bool(cfg.division_prob) {
                divisions += 1;
                drafts[c.track].divided = true;
                let (ct, st) = (c.e.theta.cos(), c.e.theta.sin());
                let half = 0.5 * c.e.a;
                let r = (0.5 * c.e.a * c.e.b).sqrt();
                for sign in [-1.0, 1.0] {
                    let e = Ellipse::new(
                        c.e.cx + sign * half * ct,
                        c.e.cy + sign * half * st,
                        r,
                        r,
                        c.e.theta,
                    );
                    let (ta, tb) = draw_axes(&mut rng);
                    drafts.push(Draft {
                        parent: Some(c.track),
                        start: frame,
                        ellipses: Vec::new(),
                        divided: false,
                    });
                    next.push(Cell {
                        track: drafts.len() - 1,
                        e,
                        target_a: ta,
                        target_b: tb,
                        age: 0,
                    });
                }
                continue;
            }
            let mut c = c.clone();
            c.age += 1;
            // Pull toward the nearest neighbor, push apart below contact.
            let (mut fx, mut fy) = (0.0, 0.0);
            let mut nearest: Option<(f64, f64, f64, f64, f64)> = None;
            for o in &cells {
                if o.track == c.track {
                    continue;
                }
                let (dx, dy) = (o.e.cx - c.e.cx, o.e.cy - c.e.cy);
                let d = dx.hypot(dy).max(1e-9);
                let reach = c.radius_towards(dx, dy) + o.radius_towards(-dx, -dy);
                let contact = cfg.contact * reach;
                if d < contact {
                    let push = 0.5 * (contact - d);
                    fx -= push * dx / d;
                    fy -= push * dy / d;
                }
                if nearest.is_none_or(|n| d < n.0) {
                    nearest = Some((d, dx, dy, contact, cfg.clump_range * reach));
                }
            }
            if let Some((d, dx, dy, contact, range)) = nearest {
                if d > contact && d < range {
                    let pull = cfg.clumping.min(d - contact);
                    fx += pull * dx / d;
                    fy += pull * dy / d;
                }
            }
            let mut x = c.e.cx + fx + step.sample(&mut rng);
            let mut y = c.e.cy + fy + step.sample(&mut rng);
            for (v, hi) in [(&mut x, w - margin), (&mut y, h - margin)] {
                if *v < margin {
                    *v = 2.0 * margin - *v;
                }
                if *v > hi {
                    *v = 2.0 * hi - *v;
                }
                *v = v.clamp(margin, hi);
            }
            let a = c.e.a + 0.1 * (c.target_a - c.e.a);
            let b = (c.e.b + 0.1 * (c.target_b - c.e.b)).min(a);
            c.e = Ellipse::new(x, y, a, b, c.e.theta + turn.sample(&mut rng));
            next.push(c);
        }
        cells = next;
        for c in &cells {
            drafts[c.track].ellipses.push(c.e);
        }
    }

    let mut tracks: Vec<Track> = Vec::new();
    let mut id_of = vec![0u32; drafts.len()];
    let mut order: Vec<usize> = (0..drafts.len())
        .filter(|&k| !drafts[k].ellipses.is_empty())
        .collect();
    order.sort_by_key(|&k| (drafts[k].start, k));
    for (rank, &k) in order.iter().enumerate() {
        id_of[k] = rank as u32 + 1;
    }
    for &k in &order {
        let d = &drafts[k];
        tracks.push(Track {
            id: id_of[k],
            parent: d.parent.map(|p| id_of[p]),
            start: d.start,
            end: d.start + d.ellipses.len() as u32 - 1,
            divided: d.divided,
            vertices: Vec::new(),
            ellipses: d.ellipses.clone(),
        });
    }
    let gt = LineageForest { tracks };

    let mut masks = BTreeMap::new();
    let mut labeled = BTreeMap::new();
    for f in 1..=cfg.frames {
        let cells: Vec<(u16, Ellipse)> = gt
            .cells_at(f)
            .into_iter()
            .map(|(id, e)| (id as u16, e))
            .collect();
        let lab = render(&cells, cfg.width, cfg.height);
        let mut bin = lab.clone();
        for v in &mut bin.labels {
            *v = (*v != 0) as u16;
        }
        masks.insert(f, bin);
        labeled.insert(f, lab);
    }
    Ok(SynthSequence {
        masks,
        labeled,
        gt,
        division_trials,
        divisions,
    })
}

/// Writes binary masks and ground truth into `dir`, plus labeled masks in
/// `dir/labels` when `with_labels` is set.
pub fn write_sequence(seq: &SynthSequence, dir: &Path, with_labels: bool) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (&f, m) in &seq.masks {
        m.write_pgm(&dir.join(mask_file_name(f)))?;
    }
    let frames = seq.frames();
    write_forest(&seq.gt, &frames, dir, GT_TRACK_FILE, GT_ELLIPSE_PREFIX)?;
    if with_labels {
        let ld = dir.join("labels");
        std::fs::create_dir_all(&ld).map_err(|e| Error::io(&ld, e))?;
        for (&f, m) in &seq.labeled {
            m.write_pgm(&ld.join(mask_file_name(f)))?;
        }
    }
    Ok(())
}
