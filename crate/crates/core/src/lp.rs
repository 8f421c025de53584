//! Dense two-phase tableau simplex.
//!
//! Maximizes `c·z` subject to linear rows and per-variable lower bounds.
//! Pivoting follows Bland's rule in both phases (lowest-index entering
//! column with positive reduced cost, ratio ties broken by the lowest basic
//! variable index), so the pivot sequence is deterministic and cannot cycle.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Phase-one objective above which the program is declared infeasible.
pub const INFEASIBILITY_TOL: f64 = 1e-8;
/// Pivot, reduced-cost and feasibility tolerance inside the tableau.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Constraint satisfaction guaranteed for reported optimal solutions.
pub const SOLUTION_TOL: f64 = 1e-7;
pub const MAX_PIVOTS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub num_vars: usize,
    /// Maximized.
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower_bounds: Vec<f64>,
}

impl LinearProgram {
    /// Zero objective, no rows, all lower bounds zero.
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            num_vars,
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
            lower_bounds: vec![0.0; num_vars],
        }
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    /// Adds a row given as sparse `(variable, coefficient)` terms; repeated
    /// variables accumulate.
    pub fn add_sparse(&mut self, terms: &[(usize, f64)], relation: Relation, rhs: f64) {
        let mut coeffs = vec![0.0; self.num_vars];
        for &(j, v) in terms {
            coeffs[j] += v;
        }
        self.add_constraint(coeffs, relation, rhs);
    }

    fn check_shape(&self) -> Result<()> {
        if self.objective.len() != self.num_vars || self.lower_bounds.len() != self.num_vars {
            return Err(Error::Shape("objective and bounds must have num_vars entries".into()));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != self.num_vars {
                return Err(Error::Shape(format!("row {i} has {} coefficients", c.coeffs.len())));
            }
            if !c.rhs.is_finite() {
                return Err(Error::Shape(format!("row {i} has a non-finite right-hand side")));
            }
        }
        if self.lower_bounds.iter().any(|b| !b.is_finite()) {
            return Err(Error::Shape("lower bounds must be finite".into()));
        }
        Ok(())
    }

    /// Largest violation of any row or bound by `z`.
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().zip(z).map(|(a, v)| a * v).sum();
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (v, lb) in z.iter().zip(&self.lower_bounds) {
            worst = worst.max(lb - v);
        }
        worst
    }

    pub fn objective_at(&self, z: &[f64]) -> f64 {
        self.objective.iter().zip(z).map(|(c, v)| c * v).sum()
    }

    /// Plain-text normalized form: objective line, one row per line, bounds.
    pub fn to_text(&self) -> String {
        fn terms(out: &mut String, coeffs: &[f64]) {
            let mut any = false;
            for (j, &a) in coeffs.iter().enumerate() {
                if a != 0.0 {
                    let _ = write!(out, " {}{} x{j}", if a < 0.0 { "-" } else { "+" }, a.abs());
                    any = true;
                }
            }
            if !any {
                out.push_str(" 0");
            }
        }
        let mut out = String::from("maximize\n obj:");
        terms(&mut out, &self.objective);
        out.push_str("\nsubject to\n");
        for (i, c) in self.constraints.iter().enumerate() {
            let _ = write!(out, " c{i}:");
            terms(&mut out, &c.coeffs);
            let _ = writeln!(out, " {} {}", c.relation.symbol(), c.rhs);
        }
        out.push_str("bounds\n");
        for (j, lb) in self.lower_bounds.iter().enumerate() {
            let _ = writeln!(out, " x{j} >= {lb}");
        }
        out.push_str("end\n");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Empty unless optimal.
    pub values: Vec<f64>,
    /// NaN unless optimal.
    pub objective_value: f64,
    pub pivots: usize,
}

impl LpSolution {
    fn without_point(status: LpStatus, pivots: usize) -> Self {
        LpSolution {
            status,
            values: Vec::new(),
            objective_value: f64::NAN,
            pivots,
        }
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.check_shape()?;
    let mut tableau = Tableau::build(lp);
    if tableau.num_artificial > 0 {
        tableau.run(true)?;
        if tableau.objective_value() < -INFEASIBILITY_TOL {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, tableau.pivots));
        }
        tableau.expel_artificials();
    }
    tableau.load_objective(&lp.objective);
    if !tableau.run(false)? {
        return Ok(LpSolution::without_point(LpStatus::Unbounded, tableau.pivots));
    }
    let mut values = lp.lower_bounds.clone();
    for (i, &b) in tableau.basis.iter().enumerate() {
        if b < lp.num_vars {
            values[b] += tableau.rhs(i).max(0.0);
        }
    }
    let objective_value = lp.objective_at(&values);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        values,
        objective_value,
        pivots: tableau.pivots,
    })
}

/// Row-major tableau; the last column of every row is the right-hand side.
struct Tableau {
    width: usize,
    rows: Vec<f64>,
    /// Reduced costs `d_j` (entering when positive) and, in the last slot,
    /// minus the current objective value.
    cost: Vec<f64>,
    basis: Vec<usize>,
    num_structural: usize,
    first_artificial: usize,
    num_artificial: usize,
    pivots: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars;
        // Shift to y = z - lb >= 0 and orient every row to a nonnegative rhs.
        let mut oriented = Vec::with_capacity(lp.constraints.len());
        for c in &lp.constraints {
            let shift: f64 = c.coeffs.iter().zip(&lp.lower_bounds).map(|(a, l)| a * l).sum();
            let mut rhs = c.rhs - shift;
            let mut relation = c.relation;
            let mut sign = 1.0;
            if rhs < 0.0 || (rhs == 0.0 && relation == Relation::Ge) {
                sign = -1.0;
                rhs = -rhs;
                relation = match relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
            oriented.push((sign, relation, rhs));
        }
        let num_slack = oriented.iter().filter(|(_, r, _)| *r != Relation::Eq).count();
        let num_artificial = oriented.iter().filter(|(_, r, _)| *r != Relation::Le).count();
        let first_artificial = n + num_slack;
        let width = first_artificial + num_artificial + 1;
        let m = oriented.len();
        let mut rows = vec![0.0; m * width];
        let mut basis = Vec::with_capacity(m);
        let (mut next_slack, mut next_art) = (n, first_artificial);
        for (i, (c, &(sign, relation, rhs))) in lp.constraints.iter().zip(&oriented).enumerate() {
            let row = &mut rows[i * width..(i + 1) * width];
            for (dst, &a) in row.iter_mut().zip(&c.coeffs) {
                *dst = sign * a;
            }
            row[width - 1] = rhs;
            match relation {
                Relation::Le => {
                    row[next_slack] = 1.0;
                    basis.push(next_slack);
                    next_slack += 1;
                }
                Relation::Ge => {
                    row[next_slack] = -1.0;
                    next_slack += 1;
                    row[next_art] = 1.0;
                    basis.push(next_art);
                    next_art += 1;
                }
                Relation::Eq => {
                    row[next_art] = 1.0;
                    basis.push(next_art);
                    next_art += 1;
                }
            }
        }
        // Phase-one costs: maximize -Σ artificials.
        let mut cost = vec![0.0; width];
        for (i, &b) in basis.iter().enumerate() {
            if b >= first_artificial {
                let row = &rows[i * width..(i + 1) * width];
                for j in 0..first_artificial {
                    cost[j] += row[j];
                }
                cost[width - 1] += row[width - 1];
            }
        }
        Tableau {
            width,
            rows,
            cost,
            basis,
            num_structural: n,
            first_artificial,
            num_artificial,
            pivots: 0,
        }
    }

    fn num_rows(&self) -> usize {
        self.basis.len()
    }

    fn rhs(&self, i: usize) -> f64 {
        self.rows[i * self.width + self.width - 1]
    }

    fn objective_value(&self) -> f64 {
        -self.cost[self.width - 1]
    }

    /// Runs simplex iterations until optimal (`Ok(true)`) or unbounded
    /// (`Ok(false)`). Artificial columns may only enter during phase one.
    fn run(&mut self, phase_one: bool) -> Result<bool> {
        let enterable = if phase_one {
            self.width - 1
        } else {
            self.first_artificial
        };
        loop {
            if self.pivots >= MAX_PIVOTS {
                return Err(Error::SolverStall(self.pivots));
            }
            let Some(e) = (0..enterable).find(|&j| self.cost[j] > FEASIBILITY_TOL) else {
                return Ok(true);
            };
            let Some(r) = self.ratio_test(e) else {
                return Ok(false);
            };
            self.pivot(r, e);
        }
    }

    fn ratio_test(&self, e: usize) -> Option<usize> {
        let w = self.width;
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.num_rows() {
            let a = self.rows[i * w + e];
            if a <= FEASIBILITY_TOL {
                continue;
            }
            let ratio = self.rows[i * w + w - 1].max(0.0) / a;
            best = match best {
                None => Some((i, ratio)),
                Some((r, br)) => {
                    if ratio < br - 1e-12 || (ratio <= br + 1e-12 && self.basis[i] < self.basis[r]) {
                        Some((i, ratio))
                    } else {
                        Some((r, br))
                    }
                }
            };
        }
        best.map(|(i, _)| i)
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width;
        self.pivots += 1;
        let (before, rest) = self.rows.split_at_mut(r * w);
        let (pivot_row, after) = rest.split_at_mut(w);
        let inv = 1.0 / pivot_row[e];
        pivot_row.iter_mut().for_each(|v| *v *= inv);
        pivot_row[e] = 1.0;
        let eliminate = |row: &mut [f64]| {
            let f = row[e];
            if f != 0.0 {
                for (dst, &src) in row.iter_mut().zip(pivot_row.iter()) {
                    *dst -= f * src;
                }
                row[e] = 0.0;
            }
        };
        before.chunks_exact_mut(w).for_each(eliminate);
        after.chunks_exact_mut(w).for_each(eliminate);
        eliminate(&mut self.cost);
        self.basis[r] = e;
    }

    /// After a successful phase one, pivots remaining (zero-level)
    /// artificials out of the basis, dropping rows that turn out redundant.
    fn expel_artificials(&mut self) {
        let w = self.width;
        let mut i = 0;
        while i < self.num_rows() {
            if self.basis[i] < self.first_artificial {
                i += 1;
                continue;
            }
            let row = &self.rows[i * w..(i + 1) * w];
            let col = (0..self.first_artificial)
                .filter(|&j| row[j].abs() > FEASIBILITY_TOL)
                .max_by(|&a, &b| row[a].abs().total_cmp(&row[b].abs()));
            match col {
                Some(j) => {
                    self.pivot(i, j);
                    i += 1;
                }
                None => {
                    self.rows.drain(i * w..(i + 1) * w);
                    self.basis.remove(i);
                }
            }
        }
    }

    fn load_objective(&mut self, objective: &[f64]) {
        let w = self.width;
        self.cost.iter_mut().for_each(|v| *v = 0.0);
        self.cost[..self.num_structural].copy_from_slice(objective);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = if b < self.num_structural { objective[b] } else { 0.0 };
            if cb != 0.0 {
                let row = &self.rows[i * w..(i + 1) * w];
                for (dst, &src) in self.cost.iter_mut().zip(row) {
                    *dst -= cb * src;
                }
            }
        }
        // Artificial columns never re-enter.
        for v in &mut self.cost[self.first_artificial..w - 1] {
            *v = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(n: usize, obj: &[f64], rows: &[(&[f64], Relation, f64)]) -> LinearProgram {
        let mut lp = LinearProgram::new(n);
        lp.objective = obj.to_vec();
        for (c, r, b) in rows {
            lp.add_constraint(c.to_vec(), *r, *b);
        }
        lp
    }

    #[test]
    fn single_upper_bound() {
        let sol = solve(&lp(1, &[1.0], &[(&[1.0], Relation::Le, 1.0)])).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.values[0] - 1.0).abs() < 1e-12);
        assert!((sol.objective_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_bound_is_infeasible() {
        let sol = solve(&lp(1, &[1.0], &[(&[1.0], Relation::Le, -1.0)])).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn two_variable_polytope() {
        // Vertices: (0,0), (2,0), (0,2), (1.6,1.2) -> max x+y = 2.8.
        let sol = solve(&lp(
            2,
            &[1.0, 1.0],
            &[(&[1.0, 2.0], Relation::Le, 4.0), (&[3.0, 1.0], Relation::Le, 6.0)],
        ))
        .unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value - 2.8).abs() < 1e-9);
        assert!((sol.values[0] - 1.6).abs() < 1e-9);
        assert!((sol.values[1] - 1.2).abs() < 1e-9);
    }

    #[test]
    fn unbounded_direction_is_detected() {
        let sol = solve(&lp(2, &[1.0, 0.0], &[(&[1.0, -1.0], Relation::Le, 1.0)])).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn equalities_and_lower_bounds() {
        // max -x - y  s.t. x + y = 3, x >= 1, y >= 0.5
        let mut p = lp(2, &[-1.0, -1.0], &[(&[1.0, 1.0], Relation::Eq, 3.0)]);
        p.lower_bounds = vec![1.0, 0.5];
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value + 3.0).abs() < 1e-9);
        assert!(p.max_violation(&sol.values) < SOLUTION_TOL);
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        let sol = solve(&lp(
            2,
            &[1.0, 2.0],
            &[
                (&[1.0, 1.0], Relation::Eq, 1.0),
                (&[2.0, 2.0], Relation::Eq, 2.0),
                (&[1.0, 0.0], Relation::Ge, 0.25),
            ],
        ))
        .unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value - 1.75).abs() < 1e-9);
    }

    #[test]
    fn degenerate_ge_zero_rows() {
        // max y s.t. x - y >= 0, x <= 2
        let sol = solve(&lp(
            2,
            &[0.0, 1.0],
            &[(&[1.0, -1.0], Relation::Ge, 0.0), (&[1.0, 0.0], Relation::Le, 2.0)],
        ))
        .unwrap();
        assert!((sol.objective_value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut p = LinearProgram::new(2);
        p.add_constraint(vec![1.0], Relation::Le, 1.0);
        assert!(matches!(solve(&p), Err(Error::Shape(_))));
    }

    #[test]
    fn text_dump_is_normalized() {
        let p = lp(2, &[1.0, -2.5], &[(&[1.0, 0.0], Relation::Ge, 0.5)]);
        let text = p.to_text();
        assert!(text.contains("obj: +1 x0 -2.5 x1"));
        assert!(text.contains("c0: +1 x0 >= 0.5"));
        assert!(text.contains("x1 >= 0"));
    }
}
