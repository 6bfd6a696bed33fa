use serde::{Deserialize, Serialize};

use crate::ilp::PROB_EPSILON;
use crate::lineage::LineageForest;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventPriors {
    pub rho_a: f64,
    pub rho_d: f64,
    /// Division frequency, the constant used by the fixed-division ablation.
    pub p_div: f64,
}

impl Default for EventPriors {
    fn default() -> Self {
        Self {
            rho_a: PROB_EPSILON,
            rho_d: PROB_EPSILON,
            p_div: PROB_EPSILON,
        }
    }
}

/// Raw event counts behind [`estimate_priors`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub appearances: usize,
    pub disappearances: usize,
    pub divisions: usize,
    /// Frame-to-frame steps of cells, including mother-to-daughter steps.
    pub transitions: usize,
}

pub fn count_events(gt: &LineageForest, first_frame: u32, last_frame: u32) -> EventCounts {
    let mut c = EventCounts::default();
    for t in &gt.tracks {
        c.transitions += (t.end - t.start) as usize;
        if t.parent.is_some() {
            c.transitions += 1;
        } else if t.start > first_frame {
            c.appearances += 1;
        }
        if t.divided {
            c.divisions += 1;
        } else if t.end < last_frame {
            c.disappearances += 1;
        }
    }
    c
}

/// Relative event frequencies of a ground-truth forest spanning
/// `first_frame..=last_frame`. Births in the first frame, deaths in the last
/// one and division-related births and ends are not counted as events.
pub fn estimate_priors(gt: &LineageForest, first_frame: u32, last_frame: u32) -> EventPriors {
    priors_from_counts(&count_events(gt, first_frame, last_frame))
}

pub fn priors_from_counts(c: &EventCounts) -> EventPriors {
    let rate = |k: usize| {
        if c.transitions == 0 {
            PROB_EPSILON
        } else {
            (k as f64 / c.transitions as f64).clamp(PROB_EPSILON, 1.0 - PROB_EPSILON)
        }
    };
    EventPriors {
        rho_a: rate(c.appearances),
        rho_d: rate(c.disappearances),
        p_div: rate(c.divisions),
    }
}
