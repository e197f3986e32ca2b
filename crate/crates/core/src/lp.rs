//! Minimal dense linear-program solver.
//!
//! Solves `min c.z  s.t.  A z >= b, z >= 0` with a two-phase tableau
//! simplex. Entering columns use Dantzig's rule (most negative reduced
//! cost) until progress stalls, then switch permanently to Bland's rule,
//! which cannot cycle. All pivot choices are deterministic, so re-solving
//! the same instance reproduces the same basis and point.

use crate::error::{Error, Result};

/// Reduced costs below `-EPS_COST` are considered improving.
const EPS_COST: f64 = 1e-9;
/// Smallest admissible pivot magnitude.
const EPS_PIVOT: f64 = 1e-9;
/// Phase-1 objective above this is reported as infeasible.
const FEAS_TOL: f64 = 1e-7;
/// Iterations without objective improvement before Bland's rule takes over.
const STALL_WINDOW: u64 = 1_000;
/// Default iteration cap across both phases.
pub const DEFAULT_MAX_ITERATIONS: u64 = 1_000_000;
/// Refuse tableaus above this many f64 entries (about 1 GiB) instead of
/// letting the allocation take the process down.
pub const MAX_TABLEAU_ENTRIES: usize = 1 << 27;

/// Worst-case tableau size for `m` rows over `num_vars` structural
/// variables: every row gets a surplus and an artificial column.
fn projected_tableau_entries(num_vars: usize, m: usize) -> Option<usize> {
    let cols = num_vars.checked_add(2 * m)?.checked_add(1)?;
    (m + 1).checked_mul(cols)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

impl LpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
        }
    }
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective value; meaningful only when `status` is `Optimal`.
    pub optimum: f64,
    /// Value of each structural variable; empty unless `Optimal`.
    pub point: Vec<f64>,
}

impl LpSolution {
    /// Optimum and point, or an error naming the terminal status.
    pub fn optimal(&self) -> Result<(f64, &[f64])> {
        match self.status {
            LpStatus::Optimal => Ok((self.optimum, &self.point)),
            other => Err(Error::LpNotOptimal(other.as_str())),
        }
    }
}

/// `min objective . z` subject to `coeffs . z >= lower` rows and `z >= 0`.
#[derive(Clone, Debug)]
pub struct LpProblem {
    num_vars: usize,
    objective: Vec<f64>,
    constraints: Vec<(Vec<f64>, f64)>,
}

impl LpProblem {
    pub fn new(num_vars: usize, objective: Vec<f64>) -> Result<Self> {
        if objective.len() != num_vars {
            return Err(Error::DimensionMismatch {
                expected: num_vars,
                got: objective.len(),
            });
        }
        if num_vars == 0 {
            return Err(Error::invalid("LP needs at least one variable"));
        }
        Ok(LpProblem {
            num_vars,
            objective,
            constraints: Vec::new(),
        })
    }

    /// Adds `coeffs . z >= lower`.
    pub fn add_constraint(&mut self, coeffs: Vec<f64>, lower: f64) -> Result<()> {
        if coeffs.len() != self.num_vars {
            return Err(Error::DimensionMismatch {
                expected: self.num_vars,
                got: coeffs.len(),
            });
        }
        self.constraints.push((coeffs, lower));
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraint(&self, r: usize) -> (&[f64], f64) {
        let (c, b) = &self.constraints[r];
        (c, *b)
    }

    /// Max violation of `A z >= b, z >= 0` at `point`.
    pub fn violation(&self, point: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for &v in point {
            worst = worst.max(-v);
        }
        for (coeffs, lower) in &self.constraints {
            let lhs: f64 = coeffs.iter().zip(point).map(|(a, z)| a * z).sum();
            worst = worst.max(lower - lhs);
        }
        worst
    }

    pub fn solve(&self) -> Result<LpSolution> {
        self.solve_with_limit(DEFAULT_MAX_ITERATIONS)
    }

    pub fn solve_with_limit(&self, max_iterations: u64) -> Result<LpSolution> {
        let entries = projected_tableau_entries(self.num_vars, self.constraints.len());
        match entries {
            Some(e) if e <= MAX_TABLEAU_ENTRIES => {}
            _ => {
                return Err(Error::Capacity {
                    what: "dense simplex tableau (entries)",
                    limit: MAX_TABLEAU_ENTRIES,
                    requested: entries.unwrap_or(usize::MAX),
                })
            }
        }
        Tableau::build(self).solve(max_iterations)
    }
}

/// Row-major simplex tableau. Column layout: structural variables, then one
/// slack/surplus column per constraint, then artificial columns, then the
/// right-hand side.
struct Tableau {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    /// Basic variable (column index) of each constraint row.
    basis: Vec<usize>,
    /// First artificial column; columns at or past this are barred in
    /// phase 2.
    art_offset: usize,
    num_vars: usize,
    structural_costs: Vec<f64>,
    /// Rows made redundant after phase 1 (kept in place, never repivoted).
    dead_rows: Vec<bool>,
}

impl Tableau {
    fn build(lp: &LpProblem) -> Tableau {
        let n = lp.num_vars;
        let m = lp.constraints.len();
        // A >= row with nonnegative rhs needs an artificial; a row negated
        // into <= form gets a plain slack basis instead.
        let needs_art: Vec<bool> = lp.constraints.iter().map(|(_, b)| *b >= 0.0).collect();
        let num_art = needs_art.iter().filter(|&&a| a).count();
        let art_offset = n + m;
        let cols = n + m + num_art + 1;
        let rhs = cols - 1;

        let mut data = vec![0.0; (m + 1) * cols];
        let mut basis = vec![0usize; m];
        let mut art_idx = 0usize;
        for (r, (coeffs, lower)) in lp.constraints.iter().enumerate() {
            let row = &mut data[r * cols..(r + 1) * cols];
            let flip = if needs_art[r] { 1.0 } else { -1.0 };
            for (j, &a) in coeffs.iter().enumerate() {
                row[j] = flip * a;
            }
            row[rhs] = flip * lower;
            if needs_art[r] {
                row[n + r] = -1.0; // surplus
                let art_col = art_offset + art_idx;
                row[art_col] = 1.0;
                basis[r] = art_col;
                art_idx += 1;
            } else {
                row[n + r] = 1.0; // slack
                basis[r] = n + r;
            }
        }

        Tableau {
            rows: m,
            cols,
            data,
            basis,
            art_offset,
            num_vars: n,
            structural_costs: lp.objective.clone(),
            dead_rows: vec![false; m],
        }
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Objective row lives after the constraint rows; its rhs cell holds
    /// the negated objective value.
    fn obj_index(&self, c: usize) -> usize {
        self.rows * self.cols + c
    }

    fn objective_value(&self) -> f64 {
        -self.data[self.obj_index(self.cols - 1)]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let cols = self.cols;
        let inv = 1.0 / self.at(pr, pc);
        for c in 0..cols {
            self.data[pr * cols + c] *= inv;
        }
        self.data[pr * cols + pc] = 1.0;
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let factor = self.data[r * cols + pc];
            if factor == 0.0 {
                continue;
            }
            for c in 0..cols {
                let v = self.data[pr * cols + c];
                self.data[r * cols + c] -= factor * v;
            }
            self.data[r * cols + pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Entering column with reduced cost below `-EPS_COST`, or None at
    /// optimality. Dantzig picks the most negative (ties to the lower
    /// index); Bland picks the first.
    fn entering(&self, allow_artificial: bool, bland: bool) -> Option<usize> {
        let limit = if allow_artificial {
            self.cols - 1
        } else {
            self.art_offset
        };
        let mut best: Option<(usize, f64)> = None;
        for c in 0..limit {
            let rc = self.data[self.obj_index(c)];
            if rc < -EPS_COST {
                if bland {
                    return Some(c);
                }
                match best {
                    Some((_, b)) if rc >= b => {}
                    _ => best = Some((c, rc)),
                }
            }
        }
        best.map(|(c, _)| c)
    }

    /// Min-ratio leaving row; ties break on the smallest basic variable
    /// index (part of the anti-cycling rule). None means unbounded.
    fn leaving(&self, pc: usize) -> Option<usize> {
        let rhs = self.cols - 1;
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.rows {
            if self.dead_rows[r] {
                continue;
            }
            let a = self.at(r, pc);
            if a <= EPS_PIVOT {
                continue;
            }
            let ratio = self.at(r, rhs) / a;
            let better = match best {
                None => true,
                Some((br, bratio)) => {
                    ratio < bratio - 1e-12
                        || (ratio <= bratio + 1e-12 && self.basis[r] < self.basis[br])
                }
            };
            if better {
                best = Some((r, ratio));
            }
        }
        best.map(|(r, _)| r)
    }

    /// Runs simplex iterations until optimality, unboundedness, or the
    /// iteration budget runs out. Returns remaining budget or None when the
    /// problem is unbounded in this phase.
    fn iterate(
        &mut self,
        allow_artificial: bool,
        mut budget: u64,
        cap: u64,
    ) -> Result<Option<u64>> {
        let mut bland = false;
        let mut since_progress: u64 = 0;
        let mut last_value = self.objective_value();
        loop {
            let Some(pc) = self.entering(allow_artificial, bland) else {
                return Ok(Some(budget));
            };
            let Some(pr) = self.leaving(pc) else {
                return Ok(None);
            };
            if budget == 0 {
                return Err(Error::LpStalled { iterations: cap });
            }
            self.pivot(pr, pc);
            budget -= 1;
            let value = self.objective_value();
            if value < last_value - 1e-12 {
                since_progress = 0;
                last_value = value;
            } else {
                since_progress += 1;
                if since_progress >= STALL_WINDOW {
                    bland = true;
                }
            }
        }
    }

    /// Replaces the objective row with reduced costs for `costs` (length
    /// `cols - 1` padded with zeros), canonical w.r.t. the current basis.
    fn load_objective(&mut self, costs: &[f64]) {
        let cols = self.cols;
        for c in 0..cols {
            self.data[self.rows * cols + c] = costs.get(c).copied().unwrap_or(0.0);
        }
        for r in 0..self.rows {
            let cb = costs.get(self.basis[r]).copied().unwrap_or(0.0);
            if cb == 0.0 {
                continue;
            }
            for c in 0..cols {
                let v = self.data[r * cols + c];
                self.data[self.rows * cols + c] -= cb * v;
            }
        }
    }

    /// Pivots basic artificials out after phase 1; rows with no usable
    /// pivot are redundant and retired.
    fn evict_artificials(&mut self) {
        for r in 0..self.rows {
            if self.basis[r] < self.art_offset {
                continue;
            }
            let pc = (0..self.art_offset)
                .find(|&c| self.at(r, c).abs() > EPS_PIVOT);
            match pc {
                Some(pc) => self.pivot(r, pc),
                None => self.dead_rows[r] = true,
            }
        }
    }

    fn solve(mut self, max_iterations: u64) -> Result<LpSolution> {
        let n = self.num_vars;
        let mut budget = max_iterations;

        // Phase 1: minimize the artificial total.
        let has_artificials = self.basis.iter().any(|&b| b >= self.art_offset);
        if has_artificials {
            let mut costs = vec![0.0; self.cols - 1];
            for c in self.art_offset..self.cols - 1 {
                costs[c] = 1.0;
            }
            self.load_objective(&costs);
            match self.iterate(true, budget, max_iterations)? {
                // Artificial totals are bounded below by zero; an unbounded
                // phase 1 means the tableau lost its numeric footing.
                None => {
                    return Err(Error::invalid(
                        "phase 1 reported unbounded; numeric breakdown",
                    ))
                }
                Some(rest) => budget = rest,
            }
            if self.objective_value() > FEAS_TOL {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    optimum: f64::NAN,
                    point: Vec::new(),
                });
            }
            self.evict_artificials();
        }

        // Phase 2: the real objective, artificial columns barred.
        let mut costs = vec![0.0; self.cols - 1];
        // The structural objective was captured at build time by the caller.
        costs[..n].copy_from_slice(&self.structural_costs);
        self.load_objective(&costs);
        match self.iterate(false, budget, max_iterations)? {
            None => {
                return Ok(LpSolution {
                    status: LpStatus::Unbounded,
                    optimum: f64::NAN,
                    point: Vec::new(),
                })
            }
            Some(_) => {}
        }

        let rhs = self.cols - 1;
        let mut point = vec![0.0; n];
        for r in 0..self.rows {
            if self.basis[r] < n {
                point[self.basis[r]] = self.at(r, rhs);
            }
        }
        let optimum = self
            .structural_costs
            .iter()
            .zip(&point)
            .map(|(c, z)| c * z)
            .sum();
        Ok(LpSolution {
            status: LpStatus::Optimal,
            optimum,
            point,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(num_vars: usize, objective: &[f64], rows: &[(&[f64], f64)]) -> LpProblem {
        let mut p = LpProblem::new(num_vars, objective.to_vec()).unwrap();
        for (coeffs, lower) in rows {
            p.add_constraint(coeffs.to_vec(), *lower).unwrap();
        }
        p
    }

    #[test]
    fn one_dimensional_bound() {
        let p = lp(1, &[1.0], &[(&[1.0], 3.0)]);
        let sol = p.solve().unwrap();
        let (opt, x) = sol.optimal().unwrap();
        assert!((opt - 3.0).abs() < 1e-9);
        assert!((x[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn mixed_relations_via_negated_rows() {
        // min x + 2y  s.t.  x + y >= 2,  -x >= -1.5 (x <= 1.5).
        let p = lp(2, &[1.0, 2.0], &[(&[1.0, 1.0], 2.0), (&[-1.0, 0.0], -1.5)]);
        let sol = p.solve().unwrap();
        let (opt, x) = sol.optimal().unwrap();
        assert!((opt - 2.5).abs() < 1e-9, "opt={opt}");
        assert!((x[0] - 1.5).abs() < 1e-9);
        assert!((x[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        // x >= 2 and x <= 1.
        let p = lp(1, &[1.0], &[(&[1.0], 2.0), (&[-1.0], -1.0)]);
        let sol = p.solve().unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
        assert!(sol.optimal().is_err());
    }

    #[test]
    fn unbounded_detected() {
        // min -x, x >= 1.
        let p = lp(1, &[-1.0], &[(&[1.0], 1.0)]);
        assert_eq!(p.solve().unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn no_constraints_mean_zero() {
        let p = lp(3, &[2.0, 0.0, 1.0], &[]);
        let sol = p.solve().unwrap();
        let (opt, x) = sol.optimal().unwrap();
        assert_eq!(opt, 0.0);
        assert_eq!(x, &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn equality_via_paired_inequalities() {
        // x + y = 1 fixed from both sides, minimize 3x + y -> x=0, y=1.
        let p = lp(
            2,
            &[3.0, 1.0],
            &[(&[1.0, 1.0], 1.0), (&[-1.0, -1.0], -1.0)],
        );
        let sol = p.solve().unwrap();
        let (opt, x) = sol.optimal().unwrap();
        assert!((opt - 1.0).abs() < 1e-9);
        assert!(x[0].abs() < 1e-9 && (x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn covering_lp_and_weak_duality() {
        // min 1.x  s.t.  P x >= 1 for a 3-user uniform matrix at p = 0.4.
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| if i == j { 1.0 } else { 0.4 }).collect())
            .collect();
        let mut p = LpProblem::new(3, vec![1.0; 3]).unwrap();
        for row in &rows {
            p.add_constraint(row.clone(), 1.0).unwrap();
        }
        let sol = p.solve().unwrap();
        let (opt, x) = sol.optimal().unwrap();
        let expected = 3.0 / 1.8;
        assert!((opt - expected).abs() < 1e-9, "opt={opt}");
        for &xi in x {
            assert!((xi - expected / 3.0).abs() < 1e-9);
        }
        // Dual feasible y = (1/1.8) * 1 gives the same bound from below.
        let dual_bound = 3.0 / 1.8;
        assert!(opt >= dual_bound - 1e-9);
    }

    #[test]
    fn degenerate_ties_resolve() {
        // Multiple constraints active at the same vertex.
        let p = lp(
            2,
            &[1.0, 1.0],
            &[
                (&[1.0, 0.0], 1.0),
                (&[0.0, 1.0], 1.0),
                (&[1.0, 1.0], 2.0),
                (&[2.0, 1.0], 3.0),
            ],
        );
        let sol = p.solve().unwrap();
        let (opt, x) = sol.optimal().unwrap();
        assert!((opt - 2.0).abs() < 1e-9);
        assert!((x[0] - 1.0).abs() < 1e-9 && (x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn permuted_constraints_same_optimum() {
        let base: Vec<(Vec<f64>, f64)> = vec![
            (vec![1.0, 2.0, 0.5], 2.0),
            (vec![0.3, 1.0, 1.0], 1.5),
            (vec![1.0, 0.0, 2.0], 1.0),
            (vec![-1.0, -1.0, -1.0], -4.0),
        ];
        let solve_order = |order: &[usize]| {
            let mut p = LpProblem::new(3, vec![1.0, 1.3, 0.7]).unwrap();
            for &i in order {
                p.add_constraint(base[i].0.clone(), base[i].1).unwrap();
            }
            p.solve().unwrap().optimal().unwrap().0
        };
        let reference = solve_order(&[0, 1, 2, 3]);
        for order in [[3, 2, 1, 0], [1, 3, 0, 2], [2, 0, 3, 1]] {
            assert!((solve_order(&order) - reference).abs() < 1e-8);
        }
    }

    #[test]
    fn solution_satisfies_constraints() {
        let p = lp(
            3,
            &[1.0, 1.0, 1.0],
            &[
                (&[1.0, 0.6, 0.2], 1.0),
                (&[0.6, 1.0, 0.8], 1.0),
                (&[0.2, 0.8, 1.0], 1.0),
            ],
        );
        let sol = p.solve().unwrap();
        let (_, x) = sol.optimal().unwrap();
        assert!(p.violation(x) < 1e-8);
        for &xi in x {
            assert!(xi >= -1e-10);
        }
    }

    #[test]
    fn tableau_budget_boundaries() {
        // Shapes of the subset formulation at 12 and 13 users, and the
        // full formulation at 5: the 13-user tableau is the first one
        // past the budget.
        let n12 = projected_tableau_entries(12 + 4095, 4095).unwrap();
        let n13 = projected_tableau_entries(13 + 8191, 8191).unwrap();
        let full5 = projected_tableau_entries(5 + 5 * 1024, 5 * 1024).unwrap();
        assert!(n12 <= MAX_TABLEAU_ENTRIES);
        assert!(full5 <= MAX_TABLEAU_ENTRIES);
        assert!(n13 > MAX_TABLEAU_ENTRIES);
        // Overflowing shapes refuse instead of wrapping.
        assert_eq!(projected_tableau_entries(usize::MAX - 1, usize::MAX / 2), None);
    }
}
