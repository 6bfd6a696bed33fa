//! Bounded-variable revised simplex with an explicit basis inverse.
//!
//! Every row gets a slack (`a·x + s = rhs`) whose bounds encode the row
//! sense, so the all-slack basis is always available as a start. The primal
//! method is used from feasible starts; the dual method re-optimizes after
//! bound changes, which keeps branch-and-bound nodes cheap.

use super::Sense;

const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const PIV_TOL: f64 = 1e-9;
const REFRESH_EVERY: usize = 100;
const DEGENERATE_BEFORE_BLAND: usize = 50;

/// Linear program `max c·x` subject to row senses and column bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub num_rows: usize,
    /// Sparse columns as `(row, coefficient)`.
    pub cols: Vec<Vec<(usize, f64)>>,
    pub obj: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub sense: Vec<Sense>,
    pub rhs: Vec<f64>,
}

impl LpProblem {
    pub fn num_cols(&self) -> usize {
        self.cols.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    /// The basis became numerically singular.
    Numerical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    AtLower,
    AtUpper,
}

/// Solver state; keeps its basis between calls so bound changes can be
/// re-optimized from the previous optimum.
#[derive(Debug, Clone)]
pub struct Simplex<'a> {
    p: &'a LpProblem,
    m: usize,
    n: usize,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    /// Row-major `m × m` inverse of the basis matrix.
    binv: Vec<f64>,
    y: Vec<f64>,
    pivots_since_refresh: usize,
    /// Pivots over the lifetime of the solver.
    pub iterations: usize,
    /// Pivot limit of a single [`Simplex::solve`] call.
    pub max_iterations: usize,
    solve_start: usize,
}

impl<'a> Simplex<'a> {
    pub fn new(p: &'a LpProblem) -> Self {
        let m = p.num_rows;
        let n = p.num_cols();
        let mut lb = p.lower.clone();
        let mut ub = p.upper.clone();
        for s in &p.sense {
            let (l, u) = match s {
                Sense::Eq => (0.0, 0.0),
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
            };
            lb.push(l);
            ub.push(u);
        }
        let mut cost = p.obj.clone();
        cost.resize(n + m, 0.0);
        let mut s = Self {
            p,
            m,
            n,
            lb,
            ub,
            cost,
            x: vec![0.0; n + m],
            state: vec![State::AtLower; n + m],
            basis: Vec::new(),
            binv: Vec::new(),
            y: vec![0.0; m],
            pivots_since_refresh: 0,
            iterations: 0,
            max_iterations: 50_000 + 50 * (n + m),
            solve_start: 0,
        };
        s.reset_basis(false);
        s
    }

    /// Slack basis. Nonbasic columns sit at their lower bound, or at the
    /// bound favored by their cost when `dual_start` is set (which makes the
    /// slack basis dual feasible).
    fn reset_basis(&mut self, dual_start: bool) {
        let (m, n) = (self.m, self.n);
        self.basis = (n..n + m).collect();
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            self.binv[i * m + i] = 1.0;
            self.state[n + i] = State::Basic;
        }
        for j in 0..n {
            let up = if dual_start {
                self.cost[j] > 0.0 && self.ub[j].is_finite()
            } else {
                !self.lb[j].is_finite()
            };
            self.set_nonbasic(j, if up { State::AtUpper } else { State::AtLower });
        }
        self.y.iter_mut().for_each(|v| *v = 0.0);
        self.compute_xb();
        self.compute_duals();
        self.pivots_since_refresh = 0;
    }

    fn set_nonbasic(&mut self, j: usize, st: State) {
        let st = match st {
            State::AtLower if !self.lb[j].is_finite() => State::AtUpper,
            State::AtUpper if !self.ub[j].is_finite() => State::AtLower,
            s => s,
        };
        self.state[j] = st;
        self.x[j] = match st {
            State::AtLower => self.lb[j],
            State::AtUpper => self.ub[j],
            State::Basic => unreachable!(),
        };
        if !self.x[j].is_finite() {
            self.x[j] = 0.0;
        }
    }

    fn col(&self, j: usize) -> ColIter<'_> {
        if j < self.n {
            ColIter::Sparse(self.p.cols[j].iter())
        } else {
            ColIter::Unit(Some(j - self.n))
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.x[..self.n]
    }

    pub fn objective(&self) -> f64 {
        (0..self.n).map(|j| self.cost[j] * self.x[j]).sum()
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lb[j], self.ub[j])
    }

    /// Changes the bounds of a structural column. Call [`Self::solve`]
    /// afterwards.
    pub fn set_bounds(&mut self, j: usize, lb: f64, ub: f64) {
        assert!(j < self.n);
        self.lb[j] = lb;
        self.ub[j] = ub;
    }

    fn compute_xb(&mut self) {
        let m = self.m;
        let mut r = self.p.rhs.clone();
        for j in 0..self.n + m {
            if self.state[j] != State::Basic && self.x[j] != 0.0 {
                let xj = self.x[j];
                for (i, v) in self.col(j) {
                    r[i] -= v * xj;
                }
            }
        }
        let nz: Vec<usize> = (0..m).filter(|&k| r[k] != 0.0).collect();
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            let v = nz.iter().map(|&k| row[k] * r[k]).sum();
            self.x[self.basis[i]] = v;
        }
    }

    fn compute_duals(&mut self) {
        let m = self.m;
        self.y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            let c = self.cost[self.basis[i]];
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, &b) in self.y.iter_mut().zip(row) {
                    *yk += c * b;
                }
            }
        }
    }

    fn reduced_cost(&self, j: usize) -> f64 {
        self.cost[j] - self.col(j).map(|(i, v)| self.y[i] * v).sum::<f64>()
    }

    fn alpha(&self, q: usize) -> Vec<f64> {
        let m = self.m;
        let entries: Vec<(usize, f64)> = self.col(q).collect();
        (0..m)
            .map(|i| {
                let row = &self.binv[i * m..(i + 1) * m];
                entries.iter().map(|&(k, v)| row[k] * v).sum()
            })
            .collect()
    }

    /// Replaces `basis[r]` by `q`; `d_q` is the reduced cost of `q` before
    /// the pivot and keeps the duals current.
    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64], d_q: f64) {
        let m = self.m;
        let inv = 1.0 / alpha[r];
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (row_r, after) = rest.split_at_mut(m);
        row_r.iter_mut().for_each(|v| *v *= inv);
        let nz: Vec<usize> = (0..m).filter(|&k| row_r[k] != 0.0).collect();
        for (i, &a) in alpha.iter().enumerate() {
            if i == r || a == 0.0 {
                continue;
            }
            let row = if i < r {
                &mut before[i * m..(i + 1) * m]
            } else {
                &mut after[(i - r - 1) * m..(i - r) * m]
            };
            for &k in &nz {
                row[k] -= a * row_r[k];
            }
        }
        for &k in &nz {
            self.y[k] += d_q * row_r[k];
        }
        let leaving = self.basis[r];
        self.basis[r] = q;
        self.state[q] = State::Basic;
        debug_assert!(self.state[leaving] != State::Basic);
        self.pivots_since_refresh += 1;
        if self.pivots_since_refresh >= REFRESH_EVERY {
            self.refresh();
        }
    }

    /// Recomputes primal values and duals from the current inverse; rebuilds
    /// the inverse when they have drifted.
    fn refresh(&mut self) -> bool {
        let old: Vec<f64> = self.basis.iter().map(|&b| self.x[b]).collect();
        self.compute_xb();
        self.compute_duals();
        self.pivots_since_refresh = 0;
        let drift = self
            .basis
            .iter()
            .zip(&old)
            .map(|(&b, &o)| (self.x[b] - o).abs())
            .fold(0.0, f64::max);
        if drift > 1e-6 {
            log::debug!("simplex: drift {drift:.2e}, refactoring");
            return self.refactor();
        }
        true
    }

    /// Rebuilds the basis inverse by Gauss-Jordan elimination.
    fn refactor(&mut self) -> bool {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (c, &j) in self.basis.iter().enumerate() {
            for (i, v) in self.col(j) {
                a[i * m + c] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let piv = (c..m)
                .max_by(|&i, &k| a[i * m + c].abs().total_cmp(&a[k * m + c].abs()))
                .unwrap_or(c);
            if a[piv * m + c].abs() < 1e-12 {
                return false;
            }
            if piv != c {
                for k in 0..m {
                    a.swap(piv * m + k, c * m + k);
                    inv.swap(piv * m + k, c * m + k);
                }
            }
            let d = 1.0 / a[c * m + c];
            for k in 0..m {
                a[c * m + k] *= d;
                inv[c * m + k] *= d;
            }
            let nz_a: Vec<usize> = (0..m).filter(|&k| a[c * m + k] != 0.0).collect();
            let nz_i: Vec<usize> = (0..m).filter(|&k| inv[c * m + k] != 0.0).collect();
            for i in 0..m {
                let f = a[i * m + c];
                if i == c || f == 0.0 {
                    continue;
                }
                for &k in &nz_a {
                    a[i * m + k] -= f * a[c * m + k];
                }
                for &k in &nz_i {
                    inv[i * m + k] -= f * inv[c * m + k];
                }
            }
        }
        // Row c of the reduced system now belongs to basis column c.
        self.binv = inv;
        self.compute_xb();
        self.compute_duals();
        true
    }

    /// Primal simplex from a primal feasible basis.
    pub fn primal(&mut self) -> LpStatus {
        let total = self.n + self.m;
        let mut degenerate = 0usize;
        let mut bland = false;
        loop {
            if self.iterations - self.solve_start >= self.max_iterations {
                return LpStatus::IterationLimit;
            }
            let mut entering: Option<(usize, f64, f64)> = None;
            for j in 0..total {
                let st = self.state[j];
                if st == State::Basic || self.lb[j] == self.ub[j] {
                    continue;
                }
                let d = self.reduced_cost(j);
                let dir = match st {
                    State::AtLower if d > OPT_TOL => 1.0,
                    State::AtUpper if d < -OPT_TOL => -1.0,
                    _ => continue,
                };
                if bland {
                    entering = Some((j, dir, d));
                    break;
                }
                if entering.is_none_or(|(_, _, best)| d.abs() > best.abs()) {
                    entering = Some((j, dir, d));
                }
            }
            let Some((q, dir, d_q)) = entering else {
                return LpStatus::Optimal;
            };
            self.iterations += 1;
            let alpha = self.alpha(q);
            let mut theta = self.ub[q] - self.lb[q];
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_alpha = 0.0f64;
            for (i, &ai) in alpha.iter().enumerate() {
                if ai.abs() < PIV_TOL {
                    continue;
                }
                let b = self.basis[i];
                let a = dir * ai;
                let (t, to_lower) = if a > 0.0 {
                    if !self.lb[b].is_finite() {
                        continue;
                    }
                    ((self.x[b] - self.lb[b]) / a, true)
                } else {
                    if !self.ub[b].is_finite() {
                        continue;
                    }
                    ((self.ub[b] - self.x[b]) / -a, false)
                };
                let t = t.max(0.0);
                let better = match leave {
                    None => t < theta,
                    Some((r, _)) => {
                        t < theta - 1e-12
                            || (t <= theta + 1e-12
                                && if bland {
                                    b < self.basis[r]
                                } else {
                                    ai.abs() > leave_alpha.abs()
                                })
                    }
                };
                if better {
                    theta = t.min(theta);
                    leave = Some((i, to_lower));
                    leave_alpha = ai;
                }
            }
            if !theta.is_finite() {
                return LpStatus::Unbounded;
            }
            self.x[q] += dir * theta;
            for (i, &ai) in alpha.iter().enumerate() {
                if ai != 0.0 {
                    self.x[self.basis[i]] -= dir * theta * ai;
                }
            }
            if theta < 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_BEFORE_BLAND {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
            match leave {
                None => {
                    let st = if dir > 0.0 {
                        State::AtUpper
                    } else {
                        State::AtLower
                    };
                    self.set_nonbasic(q, st);
                }
                Some((r, to_lower)) => {
                    let b = self.basis[r];
                    self.state[b] = if to_lower {
                        State::AtLower
                    } else {
                        State::AtUpper
                    };
                    self.x[b] = if to_lower { self.lb[b] } else { self.ub[b] };
                    self.pivot(r, q, &alpha, d_q);
                }
            }
        }
    }

    /// Dual simplex from a dual feasible basis.
    pub fn dual(&mut self) -> LpStatus {
        let m = self.m;
        let total = self.n + m;
        loop {
            if self.iterations - self.solve_start >= self.max_iterations {
                return LpStatus::IterationLimit;
            }
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let b = self.basis[i];
                let v = if self.x[b] < self.lb[b] - FEAS_TOL {
                    self.lb[b] - self.x[b]
                } else if self.x[b] > self.ub[b] + FEAS_TOL {
                    self.x[b] - self.ub[b]
                } else {
                    continue;
                };
                if leave.is_none_or(|(_, best)| v > best) {
                    leave = Some((i, v));
                }
            }
            let Some((r, _)) = leave else {
                return LpStatus::Optimal;
            };
            self.iterations += 1;
            let b = self.basis[r];
            let increase = self.x[b] < self.lb[b];
            let target = if increase { self.lb[b] } else { self.ub[b] };
            let rho: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, f64, f64, f64)> = None;
            for j in 0..total {
                let st = self.state[j];
                if st == State::Basic || self.lb[j] == self.ub[j] {
                    continue;
                }
                let arj: f64 = self.col(j).map(|(i, v)| rho[i] * v).sum();
                if arj.abs() < PIV_TOL {
                    continue;
                }
                let eligible = match (st, increase) {
                    (State::AtLower, true) => arj < 0.0,
                    (State::AtUpper, true) => arj > 0.0,
                    (State::AtLower, false) => arj > 0.0,
                    (State::AtUpper, false) => arj < 0.0,
                    _ => false,
                };
                if !eligible {
                    continue;
                }
                let d = self.reduced_cost(j);
                let ratio = d.abs() / arj.abs();
                let better = match best {
                    None => true,
                    Some((_, br, ba, _)) => {
                        ratio < br - 1e-12 || (ratio <= br + 1e-12 && arj.abs() > ba.abs())
                    }
                };
                if better {
                    best = Some((j, ratio, arj, d));
                }
            }
            let Some((q, _, _, d_q)) = best else {
                return LpStatus::Infeasible;
            };
            let alpha = self.alpha(q);
            if alpha[r].abs() < PIV_TOL {
                return LpStatus::Numerical;
            }
            let delta = (self.x[b] - target) / alpha[r];
            self.x[q] += delta;
            for (i, &ai) in alpha.iter().enumerate() {
                if ai != 0.0 {
                    self.x[self.basis[i]] -= ai * delta;
                }
            }
            self.state[b] = if increase {
                State::AtLower
            } else {
                State::AtUpper
            };
            self.x[b] = target;
            self.pivot(r, q, &alpha, d_q);
        }
    }

    /// Solves from the current state: primal simplex if the basis is primal
    /// feasible, otherwise dual simplex after moving nonbasic columns to the
    /// bound their reduced cost favors. Falls back to a cold start when the
    /// warm start fails.
    pub fn solve(&mut self) -> LpStatus {
        self.solve_start = self.iterations;
        let status = self.solve_warm();
        match status {
            LpStatus::Optimal | LpStatus::Infeasible => status,
            _ => {
                log::debug!("simplex: warm start ended with {status:?}, restarting cold");
                self.reset_basis(true);
                self.solve_start = self.iterations;
                let st = self.dual();
                if st == LpStatus::Optimal {
                    self.primal()
                } else {
                    st
                }
            }
        }
    }

    fn primal_feasible(&self) -> bool {
        self.basis
            .iter()
            .all(|&b| self.x[b] >= self.lb[b] - FEAS_TOL && self.x[b] <= self.ub[b] + FEAS_TOL)
    }

    fn solve_warm(&mut self) -> LpStatus {
        for j in 0..self.n + self.m {
            if self.state[j] == State::Basic {
                continue;
            }
            let d = self.reduced_cost(j);
            let st = if d > OPT_TOL {
                State::AtUpper
            } else if d < -OPT_TOL {
                State::AtLower
            } else {
                self.state[j]
            };
            let st = match st {
                State::AtUpper if !self.ub[j].is_finite() => State::AtLower,
                State::AtLower if !self.lb[j].is_finite() => State::AtUpper,
                s => s,
            };
            self.set_nonbasic(j, st);
        }
        self.compute_xb();
        if !self.primal_feasible() {
            let st = self.dual();
            if st != LpStatus::Optimal {
                return st;
            }
        }
        let st = self.primal();
        if st == LpStatus::Optimal && !self.refresh() {
            return LpStatus::Numerical;
        }
        if st == LpStatus::Optimal && !self.primal_feasible() {
            return LpStatus::Numerical;
        }
        st
    }
}

enum ColIter<'c> {
    Sparse(std::slice::Iter<'c, (usize, f64)>),
    Unit(Option<usize>),
}

impl Iterator for ColIter<'_> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            ColIter::Sparse(it) => it.next().copied(),
            ColIter::Unit(i) => i.take().map(|i| (i, 1.0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Row<'a> = (&'a [(usize, f64)], Sense, f64);

    fn lp(rows: &[Row<'_>], obj: &[f64], upper: f64) -> LpProblem {
        let n = obj.len();
        let mut cols = vec![Vec::new(); n];
        for (i, (terms, _, _)) in rows.iter().enumerate() {
            for &(j, v) in *terms {
                cols[j].push((i, v));
            }
        }
        LpProblem {
            num_rows: rows.len(),
            cols,
            obj: obj.to_vec(),
            lower: vec![0.0; n],
            upper: vec![upper; n],
            sense: rows.iter().map(|r| r.1).collect(),
            rhs: rows.iter().map(|r| r.2).collect(),
        }
    }

    #[test]
    fn textbook_lp() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36.
        let p = lp(
            &[
                (&[(0, 1.0)], Sense::Le, 4.0),
                (&[(1, 2.0)], Sense::Le, 12.0),
                (&[(0, 3.0), (1, 2.0)], Sense::Le, 18.0),
            ],
            &[3.0, 5.0],
            f64::INFINITY,
        );
        let mut s = Simplex::new(&p);
        assert_eq!(s.solve(), LpStatus::Optimal);
        assert!((s.objective() - 36.0).abs() < 1e-9);
        assert!((s.values()[0] - 2.0).abs() < 1e-9 && (s.values()[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // max x + y, x + y = 1, x - y ≥ 0.5, bounds [0,1] → x=0.75,y=0.25 or any with sum 1.
        let p = lp(
            &[
                (&[(0, 1.0), (1, 1.0)], Sense::Eq, 1.0),
                (&[(0, 1.0), (1, -1.0)], Sense::Ge, 0.5),
            ],
            &[1.0, 1.0],
            1.0,
        );
        let mut s = Simplex::new(&p);
        assert_eq!(s.solve(), LpStatus::Optimal);
        assert!((s.objective() - 1.0).abs() < 1e-9);
        let x = s.values();
        assert!(x[0] - x[1] >= 0.5 - 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        let p = lp(&[(&[(0, 1.0)], Sense::Ge, 2.0)], &[1.0], 1.0);
        let mut s = Simplex::new(&p);
        assert_eq!(s.solve(), LpStatus::Infeasible);
    }

    #[test]
    fn bound_change_reoptimizes() {
        // max x + y + z, x + y ≤ 1, y + z ≤ 1, [0,1].
        let p = lp(
            &[
                (&[(0, 1.0), (1, 1.0)], Sense::Le, 1.0),
                (&[(1, 1.0), (2, 1.0)], Sense::Le, 1.0),
            ],
            &[1.0, 1.0, 1.0],
            1.0,
        );
        let mut s = Simplex::new(&p);
        assert_eq!(s.solve(), LpStatus::Optimal);
        assert!((s.objective() - 2.0).abs() < 1e-9);
        s.set_bounds(1, 1.0, 1.0);
        assert_eq!(s.solve(), LpStatus::Optimal);
        assert!((s.objective() - 1.0).abs() < 1e-9);
        s.set_bounds(1, 0.0, 1.0);
        s.set_bounds(0, 0.0, 0.0);
        assert_eq!(s.solve(), LpStatus::Optimal);
        assert!((s.objective() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn refactor_matches_updates() {
        let p = lp(
            &[
                (&[(0, 1.0), (1, 2.0), (2, 1.0)], Sense::Le, 4.0),
                (&[(0, 3.0), (2, 1.0)], Sense::Le, 5.0),
                (&[(1, 1.0), (2, -1.0)], Sense::Ge, -1.0),
            ],
            &[2.0, 3.0, 1.0],
            3.0,
        );
        let mut s = Simplex::new(&p);
        assert_eq!(s.solve(), LpStatus::Optimal);
        let before = s.binv.clone();
        assert!(s.refactor());
        for (a, b) in before.iter().zip(&s.binv) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
