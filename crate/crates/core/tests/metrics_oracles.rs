mod common;

use std::collections::BTreeMap;

use celltrack::geometry::Point2;
use celltrack::hypothesis::mask::LabelMask;
use celltrack::lineage::{LineageForest, Track};
use celltrack::metrics::{score_events, score_mota, EventReport, DEFAULT_MATCH_RADIUS};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{simulate_forest, SLOT_COLUMNS, SLOT_SPACING};

fn paint_masks(forest: &LineageForest) -> BTreeMap<u32, LabelMask> {
    let rows = forest.tracks.len().div_ceil(SLOT_COLUMNS);
    let (w, h) = (
        SLOT_COLUMNS * SLOT_SPACING as usize,
        rows * SLOT_SPACING as usize,
    );
    let last = forest.tracks.iter().map(|t| t.end).max().unwrap_or(0);
    (0..=last)
        .map(|f| {
            let mut m = LabelMask::new(w, h);
            for (id, e) in forest.cells_at(f) {
                for y in 0..h {
                    for x in 0..w {
                        if e.contains(&Point2::new(x as f64, y as f64)) {
                            m.set(x, y, id as u16);
                        }
                    }
                }
            }
            (f, m)
        })
        .collect()
}

fn counts(r: &EventReport) -> [(usize, usize, usize); 3] {
    [r.migration, r.division, r.detection].map(|e| (e.tp, e.fp, e.fn_))
}

fn migrations(f: &LineageForest) -> usize {
    f.tracks.iter().map(|t| (t.end - t.start) as usize).sum()
}

fn detections(f: &LineageForest) -> usize {
    f.tracks.iter().map(|t| t.len()).sum()
}

fn divisions(f: &LineageForest) -> usize {
    f.tracks.iter().filter(|t| t.divided).count()
}

fn sorted(mut tracks: Vec<Track>) -> LineageForest {
    tracks.sort_by_key(|t| t.id);
    LineageForest { tracks }
}

/// Splits track `k` before its `at`-th frame; the tail becomes a new root
/// that inherits the division and the children.
fn cut(tracks: &mut Vec<Track>, k: usize, at: usize) {
    let new_id = tracks.iter().map(|t| t.id).max().unwrap() + 1;
    let t = &mut tracks[k];
    let old_id = t.id;
    let tail = Track {
        id: new_id,
        parent: None,
        start: t.start + at as u32,
        end: t.end,
        divided: t.divided,
        vertices: Vec::new(),
        ellipses: t.ellipses.split_off(at),
    };
    t.end = t.start + at as u32 - 1;
    t.divided = false;
    for c in tracks.iter_mut().filter(|c| c.parent == Some(old_id)) {
        c.parent = Some(new_id);
    }
    tracks.push(tail);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn perturbations_have_predictable_scores(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = simulate_forest(&mut rng, 6, 8, 0.08, 0.05, 0.05);
        let masks = paint_masks(&gt);

        let perfect = score_events(&gt, &gt, &masks).unwrap();
        let (m, d, v) = (migrations(&gt), divisions(&gt), detections(&gt));
        prop_assert_eq!(counts(&perfect), [(m, 0, 0), (d, 0, 0), (v, 0, 0)]);
        let mota = score_mota(&gt, &gt, DEFAULT_MATCH_RADIUS);
        prop_assert_eq!((mota.fn_, mota.fp, mota.ids, mota.gt, mota.mota), (0, 0, 0, v, 1.0));

        // Each chosen track gets one cut or, if it does not divide, loses its
        // last frame.
        let mut tracks = gt.tracks.clone();
        let (mut cuts, mut drops) = (0, 0);
        for k in 0..gt.tracks.len() {
            if tracks[k].len() < 2 || !rng.random_bool(0.4) {
                continue;
            }
            if !tracks[k].divided && rng.random_bool(0.5) {
                tracks[k].end -= 1;
                tracks[k].ellipses.pop();
                drops += 1;
            } else {
                let at = rng.random_range(1..tracks[k].len());
                cut(&mut tracks, k, at);
                cuts += 1;
            }
        }
        let pred = sorted(tracks);
        let r = score_events(&pred, &gt, &masks).unwrap();
        prop_assert_eq!(
            counts(&r),
            [(m - cuts - drops, 0, cuts + drops), (d, 0, 0), (v - drops, 0, drops)]
        );
        let mota = score_mota(&pred, &gt, DEFAULT_MATCH_RADIUS);
        prop_assert_eq!((mota.fn_, mota.fp, mota.ids), (drops, 0, cuts));

        // Swapping the roles swaps misses and false positives.
        let back = score_events(&gt, &pred, &masks).unwrap();
        for (a, b) in counts(&r).iter().zip(counts(&back)) {
            prop_assert_eq!((a.0, a.1, a.2), (b.0, b.2, b.1));
        }

        // Track ids carry no meaning.
        let mut ids: Vec<u32> = (1..=pred.tracks.len() as u32).collect();
        ids.shuffle(&mut rng);
        let map: BTreeMap<u32, u32> = pred.tracks.iter().map(|t| t.id).zip(ids).collect();
        let relabeled = sorted(
            pred.tracks
                .iter()
                .map(|t| Track {
                    id: map[&t.id],
                    parent: t.parent.map(|p| map[&p]),
                    ..t.clone()
                })
                .collect(),
        );
        prop_assert_eq!(score_events(&relabeled, &gt, &masks).unwrap(), r);
        prop_assert_eq!(score_mota(&relabeled, &gt, DEFAULT_MATCH_RADIUS), mota);
    }
}
