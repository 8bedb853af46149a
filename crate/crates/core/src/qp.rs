//! Strictly convex quadratic programs `min 1/2 x^T H x + g^T x` subject to
//! `B x + c >= 0`.
//!
//! `H` is factored once. Every iterate is kept in the form
//! `x = x0 + H^{-1} B^T nu` with `x0 = -H^{-1} g`, so the primal active-set
//! iteration runs on the dense constraint-space matrix `S = B H^{-1} B^T`
//! and the objective equals `f(x0) + 1/2 nu^T S nu`.
//!
//! Multipliers follow the Lagrangian `f(x) - mu^T (B x + c)`, hence `mu >= 0`.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::sparse::{FactorError, SymSparseMatrix};

/// Problem data; `b[i]` holds the sparse row `(column, coefficient)` of constraint `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: SymSparseMatrix,
    pub g: Vec<f64>,
    pub b: Vec<Vec<(usize, f64)>>,
    pub c: Vec<f64>,
}

/// Scaled KKT residuals; all four are dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Sorted working-set indices at termination.
    pub active_set: Vec<usize>,
    /// One entry per constraint, zero outside the active set.
    pub multipliers: Vec<f64>,
    pub kkt: KktResiduals,
    pub iterations: usize,
    pub objective: f64,
    /// Objective after each iteration, starting with the initial point.
    pub objective_history: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum QpError {
    #[error("Hessian is not positive definite: {0}")]
    NotPositiveDefinite(#[from] FactorError),
    #[error("active-set iteration did not converge (max KKT residual {:e})", residuals.max())]
    NonConvergence {
        best: Box<QpSolution>,
        residuals: KktResiduals,
    },
    #[error("constraints may be infeasible: {0}")]
    Infeasible(String),
    #[error("{0} constraints exceed the enumeration limit of {1}")]
    TooManyConstraints(usize, usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1000;
pub const BRUTE_FORCE_LIMIT: usize = 20;

impl QpProblem {
    pub fn n(&self) -> usize {
        self.g.len()
    }

    pub fn m(&self) -> usize {
        self.c.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        0.5 * self.h.quad_form(x) + dot(&self.g, x)
    }

    pub fn gaps(&self, x: &[f64]) -> Vec<f64> {
        self.b
            .iter()
            .zip(&self.c)
            .map(|(row, &c)| row_dot(row, x) + c)
            .collect()
    }

    /// `B^T mu`.
    pub fn bt_mul(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (row, &m) in self.b.iter().zip(mu) {
            for &(j, v) in row {
                out[j] += v * m;
            }
        }
        out
    }

    fn check(&self) -> Result<(), QpError> {
        let n = self.n();
        if self.h.dim() != n {
            return Err(QpError::Dimension(format!("H is {0}x{0}, g has {n} entries", self.h.dim())));
        }
        if self.b.len() != self.c.len() {
            return Err(QpError::Dimension(format!("{} rows but {} offsets", self.b.len(), self.c.len())));
        }
        if let Some(i) = self.b.iter().position(|row| row.iter().any(|&(j, _)| j >= n)) {
            return Err(QpError::Dimension(format!("constraint {i} references a column >= {n}")));
        }
        Ok(())
    }

    /// Plain-text dump: `H` in coordinate form, then `g`, the rows of `B` and `c`.
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# H")?;
        self.h.write_coordinates(&mut w)?;
        writeln!(w, "# g")?;
        for v in &self.g {
            writeln!(w, "{v:e}")?;
        }
        writeln!(w, "# B")?;
        for (i, row) in self.b.iter().enumerate() {
            for &(j, v) in row {
                writeln!(w, "{i} {j} {v:e}")?;
            }
        }
        writeln!(w, "# c")?;
        for v in &self.c {
            writeln!(w, "{v:e}")?;
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn row_dot(row: &[(usize, f64)], x: &[f64]) -> f64 {
    row.iter().map(|&(j, v)| v * x[j]).sum()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn positive_or_one(v: f64) -> f64 {
    if v > 0.0 && v.is_finite() {
        v
    } else {
        1.0
    }
}

/// Residuals of a candidate `(x, mu)` in the scaled max norm.
pub fn kkt_check(p: &QpProblem, s: &QpSolution) -> KktResiduals {
    kkt_residuals(p, &s.x, &s.multipliers)
}

pub fn kkt_residuals(p: &QpProblem, x: &[f64], mu: &[f64]) -> KktResiduals {
    let hx = p.h.mul_vec(x);
    let btmu = p.bt_mul(mu);
    let stat: Vec<f64> = (0..p.n()).map(|i| hx[i] + p.g[i] - btmu[i]).collect();
    let stat_scale = positive_or_one(norm_inf(&p.g) + norm_inf(&hx) + norm_inf(&btmu));

    let gaps = p.gaps(x);
    // x scale from the data, so that a solution at the origin is not judged
    // against roundoff
    let x_scale = norm_inf(x).max(norm_inf(&p.g) / positive_or_one(p.h.norm_max()));
    let b_norm = p
        .b
        .iter()
        .map(|row| row.iter().map(|&(_, v)| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let gap_scale = positive_or_one(norm_inf(&p.c).max(b_norm * x_scale));
    let mu_scale = positive_or_one(norm_inf(mu));

    let primal = gaps.iter().fold(0.0_f64, |m, &g| m.max(-g)) / gap_scale;
    let dual = mu.iter().fold(0.0_f64, |m, &v| m.max(-v)) / mu_scale;
    let complementarity = gaps
        .iter()
        .zip(mu)
        .fold(0.0_f64, |m, (g, v)| m.max((g * v).abs()))
        / (gap_scale * mu_scale);
    KktResiduals {
        stationarity: norm_inf(&stat) / stat_scale,
        primal,
        dual,
        complementarity,
    }
}

pub fn solve_qp(p: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution, QpError> {
    solve_qp_warm(p, tol, max_iter, &[])
}

/// Constraint-space data shared by all iterations.
struct Reduced {
    x0: Vec<f64>,
    /// Columns `H^{-1} b_i`.
    y: Vec<Vec<f64>>,
    s: DMatrix<f64>,
    r0: DVector<f64>,
    f0: f64,
}

impl Reduced {
    fn new(p: &QpProblem) -> Result<Self, QpError> {
        let factor = p.h.factor()?;
        let neg_g: Vec<f64> = p.g.iter().map(|v| -v).collect();
        let x0 = factor.solve(&neg_g);
        let m = p.m();
        let y: Vec<Vec<f64>> = p
            .b
            .iter()
            .map(|row| {
                let mut dense = vec![0.0; p.n()];
                for &(j, v) in row {
                    dense[j] += v;
                }
                factor.solve(&dense)
            })
            .collect();
        let mut s = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = row_dot(&p.b[i], &y[j]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        let r0 = DVector::from_vec(p.gaps(&x0));
        let f0 = 0.5 * dot(&p.g, &x0);
        Ok(Self { x0, y, s, r0, f0 })
    }

    fn x(&self, nu: &DVector<f64>) -> Vec<f64> {
        let mut x = self.x0.clone();
        for (yi, &v) in self.y.iter().zip(nu.iter()) {
            if v != 0.0 {
                for (xk, yk) in x.iter_mut().zip(yi) {
                    *xk += v * yk;
                }
            }
        }
        x
    }

    fn gaps(&self, nu: &DVector<f64>) -> DVector<f64> {
        &self.r0 + &self.s * nu
    }

    fn objective(&self, nu: &DVector<f64>) -> f64 {
        self.f0 + 0.5 * nu.dot(&(&self.s * nu))
    }

    /// Minimizer on the face `B_W x + c_W = 0`, as a full-length `nu`.
    fn face_minimizer(&self, working: &[usize]) -> Result<DVector<f64>, QpError> {
        let m = self.r0.len();
        let k = working.len();
        let mut nu = DVector::zeros(m);
        if k == 0 {
            return Ok(nu);
        }
        let sww = DMatrix::from_fn(k, k, |a, b| self.s[(working[a], working[b])]);
        let rhs = DVector::from_fn(k, |a, _| -self.r0[working[a]]);
        let chol = sww.cholesky().ok_or_else(|| {
            QpError::Infeasible(format!("constraint rows {working:?} are linearly dependent"))
        })?;
        let mu = chol.solve(&rhs);
        for (a, &i) in working.iter().enumerate() {
            nu[i] = mu[a];
        }
        Ok(nu)
    }
}

/// Active-set solve starting from a guessed working set (typically the
/// previous step's active set). A guess whose face minimizer is infeasible is
/// discarded.
pub fn solve_qp_warm(p: &QpProblem, tol: f64, max_iter: usize, initial_ws: &[usize]) -> Result<QpSolution, QpError> {
    p.check()?;
    let m = p.m();
    let red = Reduced::new(p)?;
    let gap_scale = positive_or_one(norm_inf(&p.c).max(norm_inf(red.r0.as_slice())));
    let feas_eps = 1e-3 * tol * gap_scale;

    let mut working: Vec<usize> = initial_ws.iter().copied().filter(|&i| i < m).collect();
    working.sort_unstable();
    working.dedup();

    let mut nu = DVector::zeros(m);
    let mut warm_ok = false;
    if !working.is_empty() {
        if let Ok(cand) = red.face_minimizer(&working) {
            if red.gaps(&cand).iter().all(|&g| g >= -feas_eps) {
                nu = cand;
                warm_ok = true;
            }
        }
    }
    if !warm_ok {
        working.clear();
        if red.r0.iter().any(|&g| g < 0.0) {
            // x0 + Y S^{-1} max(-r0, 0) has gaps max(r0, 0).
            let lift = red.r0.map(|g| (-g).max(0.0));
            let chol = red
                .s
                .clone()
                .cholesky()
                .ok_or_else(|| QpError::Infeasible("constraint rows are linearly dependent".into()))?;
            nu = chol.solve(&lift);
        }
    }

    let mut gaps = red.gaps(&nu);
    let mut history = vec![red.objective(&nu)];
    let mut in_ws = vec![false; m];
    for &i in &working {
        in_ws[i] = true;
    }

    let finish = |nu: &DVector<f64>, working: &[usize], iterations: usize, history: Vec<f64>| {
        let x = red.x(nu);
        let mut multipliers = vec![0.0; m];
        for &i in working {
            multipliers[i] = nu[i];
        }
        let kkt = kkt_residuals(p, &x, &multipliers);
        let objective = p.objective(&x);
        QpSolution {
            x,
            active_set: working.to_vec(),
            multipliers,
            kkt,
            iterations,
            objective,
            objective_history: history,
        }
    };

    for iter in 0..max_iter {
        let target = red.face_minimizer(&working)?;
        let target_gaps = red.gaps(&target);

        let mut alpha = 1.0;
        let mut blocking = None;
        for i in (0..m).filter(|&i| !in_ws[i]) {
            if target_gaps[i] < -feas_eps {
                let current = gaps[i].max(0.0);
                let a = current / (current - target_gaps[i]);
                if a < alpha {
                    alpha = a;
                    blocking = Some(i);
                }
            }
        }

        if let Some(i) = blocking {
            nu = &nu + (&target - &nu) * alpha;
            gaps = red.gaps(&nu);
            in_ws[i] = true;
            working.push(i);
            working.sort_unstable();
            history.push(red.objective(&nu));
            continue;
        }

        nu = target;
        gaps = target_gaps;
        history.push(red.objective(&nu));

        let mu_scale = positive_or_one(working.iter().fold(0.0_f64, |a, &i| a.max(nu[i].abs())));
        let drop_eps = 1e-3 * tol * mu_scale;
        let mut drop: Option<usize> = None;
        for &i in &working {
            if nu[i] < -drop_eps && drop.is_none_or(|d| nu[i] < nu[d]) {
                drop = Some(i);
            }
        }
        match drop {
            Some(i) => {
                in_ws[i] = false;
                working.retain(|&w| w != i);
            }
            None => {
                let sol = finish(&nu, &working, iter + 1, history);
                if sol.kkt.within(tol) {
                    return Ok(sol);
                }
                let residuals = sol.kkt;
                return Err(QpError::NonConvergence {
                    best: Box::new(sol),
                    residuals,
                });
            }
        }
    }
    let sol = finish(&nu, &working, max_iter, history);
    let residuals = sol.kkt;
    Err(QpError::NonConvergence {
        best: Box::new(sol),
        residuals,
    })
}

/// Exhaustive oracle over all `2^m` working sets, with dense LU solves.
pub fn brute_force_qp(p: &QpProblem) -> Result<QpSolution, QpError> {
    p.check()?;
    let (n, m) = (p.n(), p.m());
    if m > BRUTE_FORCE_LIMIT {
        return Err(QpError::TooManyConstraints(m, BRUTE_FORCE_LIMIT));
    }
    p.h.factor()?;
    let h = p.h.to_dense();
    let mut bdense: DMatrix<f64> = DMatrix::zeros(m, n);
    for (i, row) in p.b.iter().enumerate() {
        for &(j, v) in row {
            bdense[(i, j)] += v;
        }
    }
    let gap_scale = positive_or_one(norm_inf(&p.c));
    let mut best: Option<(f64, Vec<usize>, Vec<f64>, Vec<f64>)> = None;
    for mask in 0u32..(1u32 << m) {
        let working: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        let k = working.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&h);
        let mut rhs = DVector::zeros(n + k);
        for i in 0..n {
            rhs[i] = -p.g[i];
        }
        for (a, &i) in working.iter().enumerate() {
            for j in 0..n {
                kkt[(j, n + a)] = -bdense[(i, j)];
                kkt[(n + a, j)] = bdense[(i, j)];
            }
            rhs[n + a] = -p.c[i];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        let x: Vec<f64> = sol.rows(0, n).iter().copied().collect();
        let mut mu = vec![0.0; m];
        for (a, &i) in working.iter().enumerate() {
            mu[i] = sol[n + a];
        }
        let mu_scale = positive_or_one(norm_inf(&mu));
        if mu.iter().any(|&v| v < -1e-9 * mu_scale) {
            continue;
        }
        if p.gaps(&x).iter().any(|&g| g < -1e-9 * gap_scale) {
            continue;
        }
        let obj = p.objective(&x);
        let better = match &best {
            None => true,
            Some((b, ..)) => obj < *b - 1e-12 * b.abs().max(1e-300),
        };
        if better {
            best = Some((obj, working, mu, x));
        }
    }
    let (objective, active_set, multipliers, x) =
        best.ok_or_else(|| QpError::Infeasible("no feasible stationary working set".into()))?;
    let mut s = QpSolution {
        x,
        active_set,
        multipliers,
        kkt: KktResiduals::default(),
        iterations: 1 << m,
        objective,
        objective_history: vec![objective],
    };
    s.kkt = kkt_check(p, &s);
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::TripletBuilder;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_h(rows: &[&[f64]]) -> SymSparseMatrix {
        let n = rows.len();
        let mut b = TripletBuilder::new(n);
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                b.add(i, j, v);
            }
        }
        b.build()
    }

    /// `H = M^T M + I`, constraints feasible at a random point.
    fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize) -> QpProblem {
        let mm = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = mm.transpose() * &mm + DMatrix::identity(n, n);
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let xf: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut b = Vec::new();
        let mut c = Vec::new();
        for _ in 0..m {
            let row: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.random_range(-1.0..1.0))).collect();
            let slack: f64 = rng.random_range(0.0..1.0);
            c.push(-row_dot(&row, &xf) + slack);
            b.push(row);
        }
        QpProblem {
            h: SymSparseMatrix::from_dense(&h),
            g,
            b,
            c,
        }
    }

    #[test]
    fn unconstrained_identity() {
        let p = QpProblem {
            h: SymSparseMatrix::identity(3),
            g: vec![-1.0, 2.0, -0.5],
            b: vec![],
            c: vec![],
        };
        let s = solve_qp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(s.x, vec![1.0, -2.0, 0.5]);
        assert!(s.active_set.is_empty());
        assert_eq!(brute_force_qp(&p).unwrap().x, s.x);
    }

    #[test]
    fn one_dimensional_active_bound() {
        let p = QpProblem {
            h: SymSparseMatrix::identity(1),
            g: vec![1.0],
            b: vec![vec![(0, 1.0)]],
            c: vec![0.0],
        };
        let s = solve_qp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(s.x, vec![0.0]);
        assert_eq!(s.active_set, vec![0]);
        assert_eq!(s.multipliers, vec![1.0]);
        assert_eq!(s.kkt, KktResiduals::default());
    }

    #[test]
    fn corner_solution() {
        let p = QpProblem {
            h: dense_h(&[&[2.0, 0.5], &[0.5, 1.0]]),
            g: vec![-3.0, -2.0],
            b: vec![vec![(0, -1.0)], vec![(1, -1.0)]],
            c: vec![0.0, 0.0],
        };
        for s in [solve_qp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap(), brute_force_qp(&p).unwrap()] {
            assert_eq!(s.active_set, vec![0, 1]);
            assert!(s.x.iter().all(|v| v.abs() < 1e-15));
            assert!((s.multipliers[0] - 3.0).abs() < 1e-14 && (s.multipliers[1] - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn infeasible_start_recovered() {
        // x0 = (2, 2) violates x1 + x2 <= 1 and x1 <= 0.25.
        let p = QpProblem {
            h: SymSparseMatrix::identity(2),
            g: vec![-2.0, -2.0],
            b: vec![vec![(0, -1.0), (1, -1.0)], vec![(0, -1.0)]],
            c: vec![1.0, 0.25],
        };
        let s = solve_qp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let o = brute_force_qp(&p).unwrap();
        assert_eq!(s.active_set, o.active_set);
        for (a, b) in s.x.iter().zip(&o.x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_solution_has_zero_residuals_and_perturbation_scales() {
        let p = QpProblem {
            h: SymSparseMatrix::identity(1),
            g: vec![1.0],
            b: vec![vec![(0, 1.0)]],
            c: vec![0.0],
        };
        let exact = kkt_residuals(&p, &[0.0], &[1.0]);
        assert_eq!(exact.max(), 0.0);
        let r1 = kkt_residuals(&p, &[1e-3], &[1.0]).stationarity;
        let r2 = kkt_residuals(&p, &[2e-3], &[1.0]).stationarity;
        assert!(r1 > 0.0);
        assert!((r2 / r1 - 2.0).abs() < 1e-2);
    }

    #[test]
    fn oracle_agreement_on_seeded_corpus() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut active_total = 0;
        for case in 0..1000 {
            let (n, m) = if case % 2 == 0 {
                (8, 3)
            } else {
                let n = rng.random_range(1..=12usize);
                (n, rng.random_range(0..=n.min(6)))
            };
            let p = random_instance(&mut rng, n, m);
            let s = solve_qp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            let o = brute_force_qp(&p).unwrap();
            assert_eq!(s.active_set, o.active_set, "case {case}");
            let scale = norm_inf(&o.x).max(1.0);
            for (a, b) in s.x.iter().zip(&o.x) {
                assert!((a - b).abs() <= 1e-10 * scale, "case {case}");
            }
            assert!(s.kkt.within(DEFAULT_TOL));
            active_total += s.active_set.len();
        }
        assert!(active_total > 300, "corpus exercises active constraints");
    }

    #[test]
    fn warm_start_reaches_same_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = random_instance(&mut rng, 10, 5);
            let cold = solve_qp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            let warm = solve_qp_warm(&p, DEFAULT_TOL, DEFAULT_MAX_ITER, &cold.active_set).unwrap();
            assert_eq!(warm.active_set, cold.active_set);
            assert!(warm.iterations <= cold.iterations);
            for (a, b) in warm.x.iter().zip(&cold.x) {
                assert!((a - b).abs() < 1e-10 * norm_inf(&cold.x).max(1.0));
            }
            // a wrong guess is harmless
            let wrong = solve_qp_warm(&p, DEFAULT_TOL, DEFAULT_MAX_ITER, &[0, 1, 2, 3, 4, 99]).unwrap();
            assert_eq!(wrong.active_set, cold.active_set);
        }
    }

    #[test]
    fn iteration_limit_carries_best_iterate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        loop {
            let p = random_instance(&mut rng, 6, 4);
            let full = solve_qp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            if full.iterations < 2 {
                continue;
            }
            match solve_qp(&p, DEFAULT_TOL, 1) {
                Err(QpError::NonConvergence { best, residuals }) => {
                    assert_eq!(best.kkt, residuals);
                    assert_eq!(best.x.len(), 6);
                }
                other => panic!("expected nonconvergence, got {other:?}"),
            }
            break;
        }
    }

    #[test]
    fn indefinite_and_oversized_rejected() {
        let p = QpProblem {
            h: dense_h(&[&[1.0, 0.0], &[0.0, -1.0]]),
            g: vec![0.0, 0.0],
            b: vec![],
            c: vec![],
        };
        assert!(matches!(solve_qp(&p, DEFAULT_TOL, 10), Err(QpError::NotPositiveDefinite(_))));
        let big = QpProblem {
            h: SymSparseMatrix::identity(1),
            g: vec![0.0],
            b: vec![vec![(0, 1.0)]; 21],
            c: vec![1.0; 21],
        };
        assert_eq!(brute_force_qp(&big).unwrap_err(), QpError::TooManyConstraints(21, 20));
    }

    #[test]
    fn dependent_rows_reported_when_infeasible() {
        // x >= 1 and x <= 0 cannot hold together.
        let p = QpProblem {
            h: SymSparseMatrix::identity(1),
            g: vec![0.0],
            b: vec![vec![(0, 1.0)], vec![(0, -1.0)]],
            c: vec![-1.0, 0.0],
        };
        assert!(matches!(solve_qp(&p, DEFAULT_TOL, 10), Err(QpError::Infeasible(_))));
        assert!(matches!(brute_force_qp(&p), Err(QpError::Infeasible(_))));
    }

    #[test]
    fn dump_lists_all_blocks() {
        let p = QpProblem {
            h: SymSparseMatrix::identity(1),
            g: vec![1.0],
            b: vec![vec![(0, 1.0)]],
            c: vec![0.0],
        };
        let mut out = Vec::new();
        p.write_dump(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "# H\n% 1 1 1\n0 0 1e0\n# g\n1e0\n# B\n0 0 1e0\n# c\n0e0\n");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn no_feasible_point_beats_solution(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_instance(&mut rng, 6, 4);
            let s = solve_qp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            for _ in 0..100 {
                let y: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
                // Euclidean projection onto the feasible set via the oracle.
                let proj = QpProblem {
                    h: SymSparseMatrix::identity(6),
                    g: y.iter().map(|v| -v).collect(),
                    b: p.b.clone(),
                    c: p.c.clone(),
                };
                let z = brute_force_qp(&proj).unwrap().x;
                prop_assert!(s.objective <= p.objective(&z) + 1e-10 * s.objective.abs().max(1.0));
            }
        }

        #[test]
        fn objective_decreases_across_iterations(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_instance(&mut rng, 9, 6);
            let s = solve_qp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            for w in s.objective_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
            }
        }

        #[test]
        fn solve_is_deterministic(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_instance(&mut rng, 7, 3);
            let a = solve_qp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            let b = solve_qp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
