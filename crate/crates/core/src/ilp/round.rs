//! Rounding of the LP relaxation with a greedy feasibility repair.

use super::{solve_lp, FlowSolution, IlpError, IpModel, SolveStatus, VarKind};

struct Repair<'a> {
    model: &'a IpModel,
    r: Vec<f64>,
    ins: Vec<Vec<usize>>,
    outs: Vec<Vec<usize>>,
    no_app: Vec<bool>,
}

impl Repair<'_> {
    /// Sets the appearance, division and disappearance variables of `v` to a
    /// combination balancing its migration flow, changing as few of them as
    /// possible and then preferring weight, and drops its weakest edge while
    /// none fits. Returns the far ends of dropped edges.
    fn balance(&mut self, v: usize, touched: &mut Vec<usize>) {
        let m = self.model;
        let (a, d, t) = (m.app_var(v), m.div_var(v), m.dis_var(v));
        loop {
            let active =
                |es: &[usize], r: &[f64]| es.iter().filter(|&&e| r[e] == 1.0).count() as i64;
            let (i, o) = (
                active(&self.ins[v], &self.r),
                active(&self.outs[v], &self.r),
            );
            let mut best: Option<(usize, f64, [f64; 3])> = None;
            for bits in 0..8u8 {
                let (app, div, dis) = (
                    (bits & 1) as i64,
                    (bits >> 1 & 1) as i64,
                    (bits >> 2 & 1) as i64,
                );
                if i + app + div != o + dis || div > i + app || (app == 1 && self.no_app[v]) {
                    continue;
                }
                let vals = [app as f64, div as f64, dis as f64];
                let changes = [a, d, t]
                    .iter()
                    .zip(vals)
                    .filter(|&(&j, val)| self.r[j] != val)
                    .count();
                let w = app as f64 * m.weights[a]
                    + div as f64 * m.weights[d]
                    + dis as f64 * m.weights[t];
                if best.is_none_or(|(bc, bw, _)| changes < bc || (changes == bc && w > bw)) {
                    best = Some((changes, w, vals));
                }
            }
            if let Some((_, _, [app, div, dis])) = best {
                (self.r[a], self.r[d], self.r[t]) = (app, div, dis);
                return;
            }
            // Too much inflow or outflow for the slack variables.
            let side = if i > o { &self.ins[v] } else { &self.outs[v] };
            let victim = side
                .iter()
                .copied()
                .filter(|&e| self.r[e] == 1.0)
                .min_by(|&x, &y| m.weights[x].total_cmp(&m.weights[y]).then(x.cmp(&y)))
                .expect("an active edge on the heavier side");
            self.r[victim] = 0.0;
            if let VarKind::Migration { from, to, .. } = m.vars[victim] {
                touched.push(if from == v { to } else { from });
            }
        }
    }

    fn settle(&mut self, mut queue: Vec<usize>) {
        while let Some(v) = queue.pop() {
            let mut touched = Vec::new();
            self.balance(v, &mut touched);
            queue.extend(touched);
        }
    }
}

/// Rounds half up and restores feasibility. Every vertex gets appearance,
/// division and disappearance values that balance its rounded migration
/// flow; a vertex whose flow cannot be balanced loses
/// its weakest edge. While an exclusion row is violated, its active variable
/// of least weight (ties to the lowest index) is zeroed and kept at zero, and
/// the affected vertices are rebalanced. Every step removes an edge or an
/// appearance option, so this terminates.
pub fn round_and_repair(model: &IpModel, x: &[f64]) -> Vec<f64> {
    let n = model.num_vertices;
    let mut ins = vec![Vec::new(); n];
    let mut outs = vec![Vec::new(); n];
    for (j, kind) in model.vars.iter().enumerate() {
        if let VarKind::Migration { from, to, .. } = *kind {
            outs[from].push(j);
            ins[to].push(j);
        }
    }
    let mut rep = Repair {
        model,
        r: x.iter()
            .map(|&v| if v >= 0.5 { 1.0 } else { 0.0 })
            .collect(),
        ins,
        outs,
        no_app: vec![false; n],
    };
    rep.settle((0..n).rev().collect());
    loop {
        let Some(row) = model.violated_rows(&rep.r, 1e-9).into_iter().next() else {
            return rep.r;
        };
        let victim = model.rows[row]
            .terms
            .iter()
            .map(|t| t.0)
            .filter(|&j| rep.r[j] == 1.0)
            .min_by(|&a, &b| {
                model.weights[a]
                    .total_cmp(&model.weights[b])
                    .then(a.cmp(&b))
            });
        let Some(j) = victim else {
            // Only rows requiring positive activity could get here, and the
            // model has none.
            return vec![0.0; rep.r.len()];
        };
        rep.r[j] = 0.0;
        let queue = match model.vars[j] {
            VarKind::Migration { from, to, .. } => vec![to, from],
            VarKind::Appearance(v) => {
                rep.no_app[v] = true;
                vec![v]
            }
            VarKind::Division(v) | VarKind::Disappearance(v) => vec![v],
        };
        rep.settle(queue);
    }
}

/// LP relaxation, rounded and repaired.
pub fn round_lp(model: &IpModel) -> Result<FlowSolution, IlpError> {
    let lp = solve_lp(model)?;
    let values = round_and_repair(model, &lp.values);
    let objective = model.objective(&values);
    Ok(FlowSolution {
        values,
        objective,
        status: SolveStatus::Optimal,
        bound: lp.objective,
        gap: super::relative_gap(lp.objective, objective),
        nodes: 0,
        lp_iterations: lp.lp_iterations,
    })
}
