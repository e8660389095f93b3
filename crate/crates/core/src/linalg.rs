//! Dense exact linear algebra: elimination, the Perron left null vector and
//! a two-phase simplex.

use std::ops::{Index, IndexMut};

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinalgError {
    #[error("linear system has no unique solution")]
    NoSolution,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Rational>,
}

impl RationalMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Rational::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Rational::one();
        }
        m
    }

    /// Panics if the rows have different lengths.
    pub fn from_rows(rows: Vec<Vec<Rational>>) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix");
        let n = rows.len();
        Self { rows: n, cols, data: rows.into_iter().flatten().collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[Rational] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn mul_vec(&self, x: &[Rational]) -> Vec<Rational> {
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .filter(|(a, b)| !a.is_zero() && !b.is_zero())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Row vector times matrix, `x M`.
    pub fn left_mul_vec(&self, x: &[Rational]) -> Vec<Rational> {
        self.transpose().mul_vec(x)
    }
}

impl Index<(usize, usize)> for RationalMatrix {
    type Output = Rational;

    fn index(&self, (i, j): (usize, usize)) -> &Rational {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for RationalMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Rational {
        &mut self.data[i * self.cols + j]
    }
}

/// Solves `A x = b` for square `A` by Gaussian elimination.
pub fn solve_linear_system(a: &RationalMatrix, b: &[Rational]) -> Result<Vec<Rational>, LinalgError> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(LinalgError::Dimension(format!(
            "{}x{} matrix with right-hand side of length {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    let mut m: Vec<Vec<Rational>> = (0..n)
        .map(|i| {
            let mut row = a.row(i).to_vec();
            row.push(b[i].clone());
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero()).ok_or(LinalgError::NoSolution)?;
        m.swap(col, pivot);
        let inv = m[col][col].recip();
        for x in m[col][col..].iter_mut() {
            if !x.is_zero() {
                *x *= &inv;
            }
        }
        let (head, tail) = m.split_at_mut(col + 1);
        let prow = &head[col];
        for row in tail.iter_mut() {
            let f = row[col].clone();
            if f.is_zero() {
                continue;
            }
            for j in col..=n {
                if !prow[j].is_zero() {
                    row[j] -= &f * &prow[j];
                }
            }
        }
    }
    let mut x = vec![Rational::zero(); n];
    for i in (0..n).rev() {
        let mut v = m[i][n].clone();
        for j in i + 1..n {
            if !m[i][j].is_zero() && !x[j].is_zero() {
                v -= &m[i][j] * &x[j];
            }
        }
        x[i] = v;
    }
    debug_assert_eq!(a.mul_vec(&x), b, "re-substitution failed");
    Ok(x)
}

/// Reduced row echelon form in place; returns the pivot columns.
fn rref(m: &mut [Vec<Rational>], cols: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == m.len() {
            break;
        }
        let Some(p) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else { continue };
        m.swap(r, p);
        let inv = m[r][c].recip();
        for x in m[r].iter_mut() {
            if !x.is_zero() {
                *x *= &inv;
            }
        }
        let prow = m[r].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for j in 0..cols {
                if !prow[j].is_zero() {
                    row[j] -= &f * &prow[j];
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

/// The non-negative `d` with `d = d M`, scaled so that its largest entry
/// is one. `M` must be square with a one-dimensional solution space, as for the
/// slope matrix of an irreducible stochastic component.
pub fn unit_left_nullspace(m: &RationalMatrix) -> Result<Vec<Rational>, LinalgError> {
    let n = m.rows();
    if m.cols() != n || n == 0 {
        return Err(LinalgError::Dimension(format!("{}x{} matrix", m.rows(), m.cols())));
    }
    // d (M - I) = 0  <=>  (M^T - I) d^T = 0
    let mut sys: Vec<Vec<Rational>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let x = m[(j, i)].clone();
                    if i == j {
                        x - Rational::one()
                    } else {
                        x
                    }
                })
                .collect()
        })
        .collect();
    let pivots = rref(&mut sys, n);
    if pivots.len() + 1 != n {
        return Err(LinalgError::DegenerateInput(format!(
            "null space has dimension {}",
            n - pivots.len()
        )));
    }
    let free = (0..n).find(|c| !pivots.contains(c)).unwrap();
    let mut d = vec![Rational::zero(); n];
    d[free] = Rational::one();
    for (r, &c) in pivots.iter().enumerate() {
        d[c] = -sys[r][free].clone();
    }
    if d.iter().all(|x| !x.is_positive()) {
        for x in &mut d {
            *x = -x.clone();
        }
    }
    if d.iter().any(|x| x.is_negative()) {
        return Err(LinalgError::DegenerateInput("null vector changes sign".into()));
    }
    let max = d.iter().max().unwrap().clone();
    for x in &mut d {
        *x /= &max;
    }
    debug_assert_eq!(m.left_mul_vec(&d), d);
    Ok(d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub coeffs: Vec<Rational>,
    pub relation: Relation,
    pub rhs: Rational,
}

/// `optimize c.x` subject to the constraints; variables are `>= 0` unless
/// marked free.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<Rational>,
    pub constraints: Vec<Constraint>,
    pub free: Vec<bool>,
}

impl LinearProgram {
    pub fn new(sense: Sense, objective: Vec<Rational>) -> Self {
        let n = objective.len();
        Self { sense, objective, constraints: Vec::new(), free: vec![false; n] }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn constrain(&mut self, coeffs: Vec<Rational>, relation: Relation, rhs: Rational) {
        assert_eq!(coeffs.len(), self.num_vars(), "constraint width");
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    /// Checks every constraint and sign restriction exactly.
    pub fn is_feasible(&self, x: &[Rational]) -> bool {
        x.len() == self.num_vars()
            && x.iter().zip(&self.free).all(|(v, &f)| f || !v.is_negative())
            && self.constraints.iter().all(|c| {
                let lhs: Rational = c.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
                match c.relation {
                    Relation::Le => lhs <= c.rhs,
                    Relation::Eq => lhs == c.rhs,
                    Relation::Ge => lhs >= c.rhs,
                }
            })
    }

    pub fn objective_value(&self, x: &[Rational]) -> Rational {
        self.objective.iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LpSolution {
    pub value: Rational,
    pub x: Vec<Rational>,
}

struct Tableau {
    /// Constraint rows, each `width + 1` long (last entry is the rhs).
    rows: Vec<Vec<Rational>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize, costs: &mut [Vec<Rational>]) {
        let inv = self.rows[r][c].recip();
        for x in self.rows[r].iter_mut() {
            if !x.is_zero() {
                *x *= &inv;
            }
        }
        let prow = std::mem::take(&mut self.rows[r]);
        let nz: Vec<usize> = (0..=self.width).filter(|&j| !prow[j].is_zero()).collect();
        let eliminate = |row: &mut Vec<Rational>| {
            let f = row[c].clone();
            if f.is_zero() {
                return;
            }
            for &j in &nz {
                row[j] -= &f * &prow[j];
            }
        };
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                eliminate(row);
            }
        }
        for row in costs.iter_mut() {
            eliminate(row);
        }
        self.rows[r] = prow;
        self.basis[r] = c;
    }

    /// Minimizes the objective whose reduced-cost row is `costs[0]`.
    /// Prices by the most negative reduced cost and falls back to Bland's
    /// rule after a run of degenerate pivots. Only `allowed` columns enter.
    fn optimize(&mut self, costs: &mut [Vec<Rational>], allowed: &[bool]) -> Result<(), LpError> {
        const DEGENERATE_RUN: usize = 50;
        let mut degenerate = 0;
        loop {
            let entering = if degenerate < DEGENERATE_RUN {
                (0..allowed.len())
                    .filter(|&j| allowed[j] && costs[0][j].is_negative())
                    .min_by(|&a, &b| costs[0][a].cmp(&costs[0][b]).then(a.cmp(&b)))
            } else {
                (0..allowed.len()).find(|&j| allowed[j] && costs[0][j].is_negative())
            };
            let Some(c) = entering else { return Ok(()) };
            let mut best: Option<(usize, Rational)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if !row[c].is_positive() {
                    continue;
                }
                let ratio = &row[self.width] / &row[c];
                let better = match &best {
                    None => true,
                    Some((b, q)) => ratio < *q || (ratio == *q && self.basis[i] < self.basis[*b]),
                };
                if better {
                    best = Some((i, ratio));
                }
            }
            let Some((r, ratio)) = best else { return Err(LpError::Unbounded) };
            if ratio.is_zero() {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, c, costs);
        }
    }

    /// Reduced-cost row of `cost` (length `width + 1`) for the current basis.
    fn canonical(&self, mut cost: Vec<Rational>) -> Vec<Rational> {
        for (i, &b) in self.basis.iter().enumerate() {
            let f = cost[b].clone();
            if f.is_zero() {
                continue;
            }
            for (x, y) in cost.iter_mut().zip(&self.rows[i]) {
                if !y.is_zero() {
                    *x -= &f * y;
                }
            }
        }
        cost
    }
}

/// Two-phase simplex on a dense tableau.
pub fn simplex_solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    simplex_solve_lexicographic(lp, &[])
}

/// Optimizes `lp`, then each objective in `secondary` (same sense) over the
/// optimal face of the previous ones.
pub fn simplex_solve_lexicographic(lp: &LinearProgram, secondary: &[Vec<Rational>]) -> Result<LpSolution, LpError> {
    let nv = lp.num_vars();
    // Column layout: original vars, negative parts of free vars, slacks, artificials.
    let free_cols: Vec<usize> = (0..nv).filter(|&j| lp.free[j]).collect();
    let n_struct = nv + free_cols.len();
    let m = lp.constraints.len();
    let n_slack = lp.constraints.iter().filter(|c| c.relation != Relation::Eq).count();
    let width = n_struct + n_slack + m;
    let art0 = n_struct + n_slack;

    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut slack = n_struct;
    for (i, con) in lp.constraints.iter().enumerate() {
        let mut row = vec![Rational::zero(); width + 1];
        for j in 0..nv {
            row[j] = con.coeffs[j].clone();
        }
        for (k, &j) in free_cols.iter().enumerate() {
            row[nv + k] = -con.coeffs[j].clone();
        }
        match con.relation {
            Relation::Le => {
                row[slack] = Rational::one();
                slack += 1;
            }
            Relation::Ge => {
                row[slack] = -Rational::one();
                slack += 1;
            }
            Relation::Eq => {}
        }
        row[width] = con.rhs.clone();
        if row[width].is_negative() {
            for x in row.iter_mut() {
                *x = -x.clone();
            }
        }
        // A slack with coefficient +1 can start in the basis.
        let own_slack = (con.relation != Relation::Eq).then_some(slack - 1);
        match own_slack {
            Some(sc) if row[sc].is_one() => basis.push(sc),
            _ => {
                row[art0 + i] = Rational::one();
                basis.push(art0 + i);
            }
        }
        rows.push(row);
    }
    let mut t = Tableau { rows, basis, width };

    // Phase 1: minimize the sum of artificials.
    let mut phase1 = vec![Rational::zero(); width + 1];
    for (row, &b) in t.rows.iter().zip(&t.basis) {
        if b < art0 {
            continue;
        }
        for j in 0..art0 {
            phase1[j] -= &row[j];
        }
        phase1[width] -= &row[width];
    }
    // Phase-2 costs are carried along so they stay in canonical form.
    let sign = match lp.sense {
        Sense::Minimize => Rational::one(),
        Sense::Maximize => -Rational::one(),
    };
    let mut phase2 = vec![Rational::zero(); width + 1];
    for j in 0..nv {
        phase2[j] = &sign * &lp.objective[j];
    }
    for (k, &j) in free_cols.iter().enumerate() {
        phase2[nv + k] = -(&sign * &lp.objective[j]);
    }
    let mut costs = vec![phase1, phase2];
    let mut allowed: Vec<bool> = (0..width).map(|j| j < art0).collect();
    t.optimize(&mut costs, &allowed).map_err(|_| LpError::Infeasible)?;
    if !costs[0][width].is_zero() {
        return Err(LpError::Infeasible);
    }
    // Drive remaining artificials out of the basis, dropping redundant rows.
    let mut r = 0;
    while r < t.rows.len() {
        if t.basis[r] >= art0 {
            if let Some(c) = (0..art0).find(|&j| !t.rows[r][j].is_zero()) {
                t.pivot(r, c, &mut costs);
            } else {
                t.rows.remove(r);
                t.basis.remove(r);
                continue;
            }
        }
        r += 1;
    }
    let mut costs = vec![costs.pop().unwrap()];
    t.optimize(&mut costs, &allowed)?;
    for objective in secondary {
        // Columns with positive reduced cost are zero on the optimal face.
        for (j, ok) in allowed.iter_mut().enumerate() {
            if costs[0][j].is_positive() {
                *ok = false;
            }
        }
        let mut row = vec![Rational::zero(); width + 1];
        for j in 0..nv {
            row[j] = &sign * &objective[j];
        }
        for (k, &j) in free_cols.iter().enumerate() {
            row[nv + k] = -(&sign * &objective[j]);
        }
        costs = vec![t.canonical(row)];
        t.optimize(&mut costs, &allowed)?;
    }

    let mut values = vec![Rational::zero(); width];
    for (i, &b) in t.basis.iter().enumerate() {
        values[b] = t.rows[i][width].clone();
    }
    let mut x: Vec<Rational> = values[..nv].to_vec();
    for (k, &j) in free_cols.iter().enumerate() {
        x[j] -= &values[nv + k];
    }
    let value = lp.objective_value(&x);
    debug_assert!(lp.is_feasible(&x), "simplex returned an infeasible point");
    Ok(LpSolution { value, x })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn ints(v: &[i64]) -> Vec<Rational> {
        v.iter().map(|&x| int(x)).collect()
    }

    fn matrix(rows: &[&[i64]]) -> RationalMatrix {
        RationalMatrix::from_rows(rows.iter().map(|r| ints(r)).collect())
    }

    #[test]
    fn identity_system() {
        let b = vec![ratio(1, 3), int(-2), int(5)];
        assert_eq!(solve_linear_system(&RationalMatrix::identity(3), &b).unwrap(), b);
    }

    #[test]
    fn path_increase_system() {
        // (I - M) s = e_u on the path u -> v -> w with slopes 1
        let a = matrix(&[&[1, 0, 0], &[-1, 1, 0], &[0, -1, 1]]);
        let s = solve_linear_system(&a, &ints(&[1, 0, 0])).unwrap();
        assert_eq!(s, ints(&[1, 1, 1]));
    }

    #[test]
    fn singular_system() {
        let a = matrix(&[&[1, 1], &[1, 1]]);
        assert_eq!(solve_linear_system(&a, &ints(&[1, 0])), Err(LinalgError::NoSolution));
    }

    #[test]
    fn needs_row_swaps() {
        let a = matrix(&[&[0, 2], &[3, 1]]);
        let x = solve_linear_system(&a, &ints(&[4, 5])).unwrap();
        assert_eq!(x, ints(&[1, 2]));
    }

    #[test]
    fn perron_vectors() {
        assert_eq!(unit_left_nullspace(&matrix(&[&[0, 1], &[1, 0]])).unwrap(), ints(&[1, 1]));
        let cycle = matrix(&[&[0, 1, 0], &[0, 0, 1], &[1, 0, 0]]);
        assert_eq!(unit_left_nullspace(&cycle).unwrap(), ints(&[1, 1, 1]));
        // a splits 1/2, 1/2 to b and c; b and c send everything back to a.
        let m = RationalMatrix::from_rows(vec![
            vec![int(0), ratio(1, 2), ratio(1, 2)],
            vec![int(1), int(0), int(0)],
            vec![int(1), int(0), int(0)],
        ]);
        let d = unit_left_nullspace(&m).unwrap();
        assert_eq!(d, vec![int(1), ratio(1, 2), ratio(1, 2)]);
    }

    #[test]
    fn reducible_matrix_is_degenerate() {
        let m = matrix(&[&[1, 0], &[0, 1]]);
        assert!(matches!(unit_left_nullspace(&m), Err(LinalgError::DegenerateInput(_))));
    }

    #[test]
    fn trivial_programs() {
        let mut lp = LinearProgram::new(Sense::Minimize, ints(&[1]));
        lp.constrain(ints(&[1]), Relation::Ge, int(0));
        assert_eq!(simplex_solve(&lp).unwrap().value, int(0));

        let mut lp = LinearProgram::new(Sense::Maximize, ints(&[1]));
        lp.constrain(ints(&[1]), Relation::Le, int(5));
        let sol = simplex_solve(&lp).unwrap();
        assert_eq!((sol.value, sol.x), (int(5), ints(&[5])));
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(Sense::Minimize, ints(&[1]));
        lp.constrain(ints(&[1]), Relation::Le, int(-1));
        assert_eq!(simplex_solve(&lp), Err(LpError::Infeasible));
        let mut lp = LinearProgram::new(Sense::Maximize, ints(&[1, 1]));
        lp.constrain(ints(&[1, -1]), Relation::Le, int(1));
        assert_eq!(simplex_solve(&lp), Err(LpError::Unbounded));
    }

    #[test]
    fn free_variables_and_equalities() {
        // minimize x subject to x + y = 1, y <= 3, x free
        let mut lp = LinearProgram::new(Sense::Minimize, ints(&[1, 0]));
        lp.free[0] = true;
        lp.constrain(ints(&[1, 1]), Relation::Eq, int(1));
        lp.constrain(ints(&[0, 1]), Relation::Le, int(3));
        let sol = simplex_solve(&lp).unwrap();
        assert_eq!(sol.x, ints(&[-2, 3]));
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(Sense::Maximize, ints(&[1, 2]));
        lp.constrain(ints(&[1, 1]), Relation::Eq, int(4));
        lp.constrain(ints(&[2, 2]), Relation::Eq, int(8));
        lp.constrain(ints(&[0, 1]), Relation::Le, int(3));
        let sol = simplex_solve(&lp).unwrap();
        assert_eq!(sol.value, int(7));
    }

    #[test]
    fn lexicographic_tie_break() {
        // maximize x + y over x + y <= 2, x <= 3/2; ties broken by maximizing x,
        // then by maximizing y on the remaining face
        let mut lp = LinearProgram::new(Sense::Maximize, ints(&[1, 1]));
        lp.constrain(ints(&[1, 1]), Relation::Le, int(2));
        lp.constrain(vec![int(1), int(0)], Relation::Le, ratio(3, 2));
        let sol = simplex_solve_lexicographic(&lp, &[ints(&[1, 0])]).unwrap();
        assert_eq!(sol.x, vec![ratio(3, 2), ratio(1, 2)]);
        assert_eq!(sol.value, int(2));
        let sol = simplex_solve_lexicographic(&lp, &[ints(&[0, 1])]).unwrap();
        assert_eq!(sol.x, ints(&[0, 2]));

        // the secondary objective never trades away primary value
        let mut lp = LinearProgram::new(Sense::Minimize, ints(&[1, 0]));
        lp.constrain(ints(&[1, 1]), Relation::Ge, int(1));
        lp.constrain(ints(&[0, 1]), Relation::Le, int(4));
        let sol = simplex_solve_lexicographic(&lp, &[ints(&[0, 1])]).unwrap();
        assert_eq!(sol.x, ints(&[0, 1]));
    }
}
