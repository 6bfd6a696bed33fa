//! Exhaustive search over binary assignments, used as a test oracle.

use super::{FlowSolution, IlpError, IpModel, Sense, SolveStatus};

pub const BRUTE_FORCE_MAX_VARS: usize = 25;

struct Search<'m> {
    model: &'m IpModel,
    cols: Vec<Vec<(usize, f64)>>,
    act: Vec<f64>,
    /// Smallest and largest activity the unassigned variables can still add.
    rest_min: Vec<f64>,
    rest_max: Vec<f64>,
    x: Vec<f64>,
    best: Option<(f64, Vec<f64>)>,
}

impl Search<'_> {
    fn row_possible(&self, r: usize) -> bool {
        let row = &self.model.rows[r];
        let lo = self.act[r] + self.rest_min[r];
        let hi = self.act[r] + self.rest_max[r];
        match row.sense {
            Sense::Eq => lo <= row.rhs + 1e-9 && hi >= row.rhs - 1e-9,
            Sense::Le => lo <= row.rhs + 1e-9,
            Sense::Ge => hi >= row.rhs - 1e-9,
        }
    }

    fn assign(&mut self, j: usize, v: f64) -> bool {
        self.x[j] = v;
        let mut ok = true;
        for k in 0..self.cols[j].len() {
            let (r, a) = self.cols[j][k];
            if a < 0.0 {
                self.rest_min[r] -= a;
            } else {
                self.rest_max[r] -= a;
            }
            self.act[r] += a * v;
            ok &= self.row_possible(r);
        }
        ok
    }

    fn unassign(&mut self, j: usize) {
        let v = self.x[j];
        for &(r, a) in &self.cols[j] {
            if a < 0.0 {
                self.rest_min[r] += a;
            } else {
                self.rest_max[r] += a;
            }
            self.act[r] -= a * v;
        }
        self.x[j] = 0.0;
    }

    // Zero before one at every depth, so among equal objectives the first
    // complete assignment found is the lexicographically smallest.
    fn run(&mut self, j: usize) {
        if j == self.x.len() {
            let obj = self.model.objective(&self.x);
            if self.best.as_ref().is_none_or(|(b, _)| obj > b + 1e-12) {
                self.best = Some((obj, self.x.clone()));
            }
            return;
        }
        for v in [0.0, 1.0] {
            if self.assign(j, v) {
                self.run(j + 1);
            }
            self.unassign(j);
        }
    }
}

/// Maximum over all feasible binary assignments; ties go to the
/// lexicographically smallest assignment.
pub fn brute_force(model: &IpModel) -> Result<FlowSolution, IlpError> {
    let n = model.num_vars();
    if n > BRUTE_FORCE_MAX_VARS {
        return Err(IlpError::TooLarge(n));
    }
    let m = model.num_rows();
    let cols = model.columns();
    let mut rest_min = vec![0.0; m];
    let mut rest_max = vec![0.0; m];
    for (r, row) in model.rows.iter().enumerate() {
        for &(_, a) in &row.terms {
            if a < 0.0 {
                rest_min[r] += a;
            } else {
                rest_max[r] += a;
            }
        }
    }
    let mut s = Search {
        model,
        cols,
        act: vec![0.0; m],
        rest_min,
        rest_max,
        x: vec![0.0; n],
        best: None,
    };
    s.run(0);
    let (objective, values) = s.best.ok_or(IlpError::Infeasible)?;
    Ok(FlowSolution {
        values,
        objective,
        status: SolveStatus::Optimal,
        bound: objective,
        gap: 0.0,
        nodes: 0,
        lp_iterations: 0,
    })
}
