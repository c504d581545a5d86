//! Dense two-phase primal simplex.
//!
//! Problems here are small (a few hundred columns at most), so the solver
//! keeps a full tableau. Entering columns follow the largest reduced cost;
//! after a streak of degenerate pivots the solver switches to Bland's rule
//! (lowest improving column, ratio ties leave on the lowest basic index)
//! for the rest of the solve, which rules out cycling.

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct LpResult<T> {
    pub status: LpStatus,
    pub x: Vec<T>,
    pub objective: T,
    pub pivots: usize,
}

#[derive(Clone, Debug)]
struct Row<T> {
    coeffs: Vec<(usize, T)>,
    relation: Relation,
    rhs: T,
}

/// `maximize cᵀx` subject to linear rows; variables are `≥ 0` unless marked free.
#[derive(Clone, Debug)]
pub struct LinearProgram<T> {
    n_vars: usize,
    objective: Vec<T>,
    free: Vec<bool>,
    rows: Vec<Row<T>>,
    max_pivots: usize,
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: vec![T::zero(); n_vars],
            free: vec![false; n_vars],
            rows: Vec::new(),
            max_pivots: 100_000,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn set_objective(&mut self, j: usize, c: T) {
        self.objective[j] = c;
    }

    pub fn set_free(&mut self, j: usize) {
        self.free[j] = true;
    }

    /// Adds `Σ coeff·x_j  (rel)  rhs` from sparse `(j, coeff)` pairs.
    pub fn add_row(&mut self, coeffs: Vec<(usize, T)>, relation: Relation, rhs: T) {
        debug_assert!(coeffs.iter().all(|&(j, _)| j < self.n_vars));
        self.rows.push(Row { coeffs, relation, rhs });
    }

    pub fn solve(&self) -> LpResult<T> {
        Tableau::build(self).run(self)
    }
}

struct Tableau<T> {
    m: usize,
    width: usize,
    /// `m` constraint rows followed by the objective row; last column is the rhs.
    cells: Vec<T>,
    basis: Vec<usize>,
    n_struct: usize,
    first_artificial: usize,
    neg_col: Vec<Option<usize>>,
    tol: T,
    pivots: usize,
    bland: bool,
}

const DEGENERATE_STREAK: usize = 50;

impl<T: Scalar> Tableau<T> {
    fn build(lp: &LinearProgram<T>) -> Self {
        let mut neg_col = vec![None; lp.n_vars];
        let mut n_struct = lp.n_vars;
        for (j, &f) in lp.free.iter().enumerate() {
            if f {
                neg_col[j] = Some(n_struct);
                n_struct += 1;
            }
        }
        let m = lp.rows.len();
        let n_slack = lp.rows.iter().filter(|r| r.relation != Relation::Eq).count();
        let first_artificial = n_struct + n_slack;
        // orient rows so that rhs >= 0; `≥ 0` rows become `≤ 0` and start on a slack
        let oriented: Vec<(Relation, T, T)> = lp
            .rows
            .iter()
            .map(|r| {
                if r.rhs < T::zero() || (r.rhs == T::zero() && r.relation == Relation::Ge) {
                    let rel = match r.relation {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (rel, -T::one(), -r.rhs)
                } else {
                    (r.relation, T::one(), r.rhs)
                }
            })
            .collect();
        let n_art = oriented.iter().filter(|(rel, _, _)| *rel != Relation::Le).count();
        let width = first_artificial + n_art + 1;
        let mut cells = vec![T::zero(); (m + 1) * width];
        let mut basis = vec![0; m];
        let mut slack = n_struct;
        let mut art = first_artificial;
        for (i, (row, &(rel, sign, rhs))) in lp.rows.iter().zip(&oriented).enumerate() {
            let base = i * width;
            for &(j, c) in &row.coeffs {
                cells[base + j] += sign * c;
                if let Some(nj) = neg_col[j] {
                    cells[base + nj] -= sign * c;
                }
            }
            cells[base + width - 1] = rhs;
            // slack columns follow the original relation order so the column
            // count is independent of orientation
            let slack_col = if row.relation != Relation::Eq {
                let c = slack;
                slack += 1;
                Some(c)
            } else {
                None
            };
            match rel {
                Relation::Le => {
                    let c = slack_col.expect("inequality row has a slack");
                    cells[base + c] = T::one();
                    basis[i] = c;
                }
                Relation::Ge => {
                    let c = slack_col.expect("inequality row has a slack");
                    cells[base + c] = -T::one();
                    cells[base + art] = T::one();
                    basis[i] = art;
                    art += 1;
                }
                Relation::Eq => {
                    cells[base + art] = T::one();
                    basis[i] = art;
                    art += 1;
                }
            }
        }
        Self {
            m,
            width,
            cells,
            basis,
            n_struct,
            first_artificial,
            neg_col,
            tol: T::lp_tol(),
            pivots: 0,
            bland: false,
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.cells[i * self.width + j]
    }

    fn rhs_col(&self) -> usize {
        self.width - 1
    }

    /// Loads `cost` into the objective row as reduced costs against the current basis.
    fn load_objective(&mut self, cost: &[T]) {
        let obj = self.m * self.width;
        for j in 0..self.width {
            self.cells[obj + j] = if j < cost.len() { cost[j] } else { T::zero() };
        }
        for i in 0..self.m {
            let cb = cost.get(self.basis[i]).copied().unwrap_or(T::zero());
            if cb != T::zero() {
                for j in 0..self.width {
                    let v = self.cells[i * self.width + j];
                    self.cells[obj + j] -= cb * v;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.cells[r * w + c];
        for j in 0..w {
            self.cells[r * w + j] /= p;
        }
        self.cells[r * w + c] = T::one();
        for i in 0..=self.m {
            if i == r {
                continue;
            }
            let f = self.cells[i * w + c];
            if f == T::zero() {
                continue;
            }
            for j in 0..w {
                let v = self.cells[r * w + j];
                if v != T::zero() {
                    self.cells[i * w + j] -= f * v;
                }
            }
            self.cells[i * w + c] = T::zero();
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Simplex iterations over columns `< col_limit`.
    fn optimize(&mut self, col_limit: usize, max_pivots: usize) -> LpStatus {
        let mut streak = 0;
        loop {
            if self.pivots >= max_pivots {
                return LpStatus::IterationLimit;
            }
            let obj = self.m * self.width;
            let entering = if self.bland {
                (0..col_limit).find(|&j| self.cells[obj + j] > self.tol)
            } else {
                let mut best: Option<(usize, T)> = None;
                for j in 0..col_limit {
                    let d = self.cells[obj + j];
                    if d > self.tol && best.is_none_or(|(_, b)| d > b) {
                        best = Some((j, d));
                    }
                }
                best.map(|(j, _)| j)
            };
            let Some(c) = entering else {
                return LpStatus::Optimal;
            };
            let mut leave: Option<(usize, T)> = None;
            for i in 0..self.m {
                let a = self.at(i, c);
                if a > self.tol {
                    let ratio = self.at(i, self.rhs_col()) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - self.tol
                                || ((ratio - br).abs() <= self.tol && self.basis[i] < self.basis[bi])
                            {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return LpStatus::Unbounded,
                Some((r, ratio)) => {
                    if ratio <= self.tol {
                        streak += 1;
                        if streak >= DEGENERATE_STREAK {
                            self.bland = true;
                        }
                    } else {
                        streak = 0;
                    }
                    self.pivot(r, c)
                }
            }
        }
    }

    fn remove_row(&mut self, r: usize) {
        let w = self.width;
        self.cells.drain(r * w..(r + 1) * w);
        self.basis.remove(r);
        self.m -= 1;
    }

    fn run(mut self, lp: &LinearProgram<T>) -> LpResult<T> {
        let n_total = self.width - 1;
        let infeasible = |pivots| LpResult {
            status: LpStatus::Infeasible,
            x: Vec::new(),
            objective: T::nan(),
            pivots,
        };
        if self.first_artificial < n_total {
            let mut cost = vec![T::zero(); n_total];
            for c in cost.iter_mut().skip(self.first_artificial) {
                *c = -T::one();
            }
            self.load_objective(&cost);
            let st = self.optimize(n_total, lp.max_pivots);
            if st == LpStatus::IterationLimit {
                return LpResult {
                    status: st,
                    x: Vec::new(),
                    objective: T::nan(),
                    pivots: self.pivots,
                };
            }
            let phase1 = -self.at(self.m, self.rhs_col());
            let scale = T::one().max(
                lp.rows
                    .iter()
                    .map(|r| r.rhs.abs())
                    .fold(T::zero(), T::max),
            );
            if phase1 < -self.tol * scale {
                return infeasible(self.pivots);
            }
            // drive remaining artificials out of the basis
            let mut i = 0;
            while i < self.m {
                if self.basis[i] >= self.first_artificial {
                    let col = (0..self.first_artificial).find(|&j| self.at(i, j).abs() > self.tol);
                    match col {
                        Some(c) => {
                            self.pivot(i, c);
                            i += 1;
                        }
                        None => self.remove_row(i),
                    }
                } else {
                    i += 1;
                }
            }
        }
        let mut cost = vec![T::zero(); self.first_artificial];
        for j in 0..lp.n_vars {
            cost[j] = lp.objective[j];
            if let Some(nj) = self.neg_col[j] {
                cost[nj] = -lp.objective[j];
            }
        }
        self.load_objective(&cost);
        let st = self.optimize(self.first_artificial, lp.max_pivots);
        let mut values = vec![T::zero(); n_total];
        for i in 0..self.m {
            let v = self.at(i, self.rhs_col());
            values[self.basis[i]] = if v < T::zero() && v > -self.tol { T::zero() } else { v };
        }
        let x: Vec<T> = (0..lp.n_vars)
            .map(|j| values[j] - self.neg_col[j].map_or(T::zero(), |nj| values[nj]))
            .collect();
        debug_assert!(self.n_struct <= self.first_artificial);
        let objective = x.iter().zip(&lp.objective).map(|(&a, &b)| a * b).sum();
        LpResult {
            status: st,
            x,
            objective,
            pivots: self.pivots,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y st x <= 4, 2y <= 12, 3x + 2y <= 18  -> (2, 6), 36
        let mut lp = LinearProgram::<f64>::new(2);
        lp.set_objective(0, 3.0);
        lp.set_objective(1, 5.0);
        lp.add_row(vec![(0, 1.0)], Relation::Le, 4.0);
        lp.add_row(vec![(1, 2.0)], Relation::Le, 12.0);
        lp.add_row(vec![(0, 3.0), (1, 2.0)], Relation::Le, 18.0);
        let r = lp.solve();
        assert_eq!(r.status, LpStatus::Optimal);
        assert_abs_diff_eq!(r.objective, 36.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.x[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.x[1], 6.0, epsilon = 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // max -x - y st x + y = 1, x >= 0.3
        let mut lp = LinearProgram::<f64>::new(2);
        lp.set_objective(0, -1.0);
        lp.set_objective(1, -2.0);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 1.0);
        lp.add_row(vec![(0, 1.0)], Relation::Ge, 0.3);
        let r = lp.solve();
        assert_eq!(r.status, LpStatus::Optimal);
        assert_abs_diff_eq!(r.x[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.objective, -1.0, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        let mut lp = LinearProgram::<f64>::new(1);
        lp.add_row(vec![(0, 1.0)], Relation::Le, 1.0);
        lp.add_row(vec![(0, 1.0)], Relation::Ge, 2.0);
        assert_eq!(lp.solve().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::<f64>::new(1);
        lp.set_objective(0, 1.0);
        lp.add_row(vec![(0, 1.0)], Relation::Ge, 0.0);
        assert_eq!(lp.solve().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_variable_goes_negative() {
        // max -t st t >= -3 (free t) -> t = -3
        let mut lp = LinearProgram::<f64>::new(1);
        lp.set_free(0);
        lp.set_objective(0, -1.0);
        lp.add_row(vec![(0, 1.0)], Relation::Ge, -3.0);
        let r = lp.solve();
        assert_eq!(r.status, LpStatus::Optimal);
        assert_abs_diff_eq!(r.x[0], -3.0, epsilon = 1e-9);
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        let mut lp = LinearProgram::<f64>::new(2);
        lp.set_objective(0, 1.0);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 1.0);
        lp.add_row(vec![(0, 2.0), (1, 2.0)], Relation::Eq, 2.0);
        let r = lp.solve();
        assert_eq!(r.status, LpStatus::Optimal);
        assert_abs_diff_eq!(r.objective, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's cycling example; must terminate at the optimum 0.05
        let mut lp = LinearProgram::<f64>::new(4);
        for (j, c) in [0.75, -150.0, 0.02, -6.0].into_iter().enumerate() {
            lp.set_objective(j, c);
        }
        lp.add_row(vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], Relation::Le, 0.0);
        lp.add_row(vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], Relation::Le, 0.0);
        lp.add_row(vec![(2, 1.0)], Relation::Le, 1.0);
        let r = lp.solve();
        assert_eq!(r.status, LpStatus::Optimal);
        assert_abs_diff_eq!(r.objective, 0.05, epsilon = 1e-9);
    }

    #[test]
    fn single_precision_solves() {
        let mut lp = LinearProgram::<f32>::new(2);
        lp.set_objective(0, 1.0);
        lp.set_objective(1, 1.0);
        lp.add_row(vec![(0, 1.0), (1, 2.0)], Relation::Le, 4.0);
        lp.add_row(vec![(0, 3.0), (1, 1.0)], Relation::Le, 6.0);
        let r = lp.solve();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective - 2.8).abs() < 1e-4);
    }
}
