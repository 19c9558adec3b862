//! Sparse convex QP assembly on top of the Clarabel interior-point solver.
//!
//! Problems are `min 1/2 x'Px + q'x` subject to linear equalities and
//! `<=` inequalities. Callers add entries by index; duplicates are summed.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus,
    SupportedConeT, ZeroConeT,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QpStatus {
    Solved,
    /// Solved to reduced accuracy.
    Inaccurate,
    Infeasible,
    Failed,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub status: QpStatus,
    pub objective: f64,
    pub iterations: u32,
}

#[derive(Debug, Clone, Default)]
struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    rhs: Vec<f64>,
}

impl Rows {
    fn push(&mut self, coeffs: &[(usize, f64)], rhs: f64) -> usize {
        let row = self.rhs.len();
        for &(j, v) in coeffs {
            if v != 0.0 {
                self.i.push(row);
                self.j.push(j);
                self.v.push(v);
            }
        }
        self.rhs.push(rhs);
        row
    }
}

#[derive(Debug, Clone)]
pub struct QpBuilder {
    n: usize,
    p_i: Vec<usize>,
    p_j: Vec<usize>,
    p_v: Vec<f64>,
    q: Vec<f64>,
    eq: Rows,
    le: Rows,
}

#[derive(Debug, Clone, Copy)]
pub struct QpSettings {
    pub max_iter: u32,
    pub tol: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

impl QpBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            p_i: Vec::new(),
            p_j: Vec::new(),
            p_v: Vec::new(),
            q: vec![0.0; n],
            eq: Rows::default(),
            le: Rows::default(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    /// Adds `v` to `P[i][j]` and `P[j][i]` (once on the diagonal).
    pub fn add_hessian(&mut self, i: usize, j: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.p_i.push(a);
        self.p_j.push(b);
        self.p_v.push(v);
    }

    pub fn add_linear(&mut self, i: usize, v: f64) {
        self.q[i] += v;
    }

    /// Adds `w/2 * (a'x - c)^2` to the objective.
    pub fn add_square(&mut self, coeffs: &[(usize, f64)], c: f64, w: f64) {
        for (k, &(i, ai)) in coeffs.iter().enumerate() {
            self.add_linear(i, -w * c * ai);
            self.add_hessian(i, i, w * ai * ai);
            for &(j, aj) in &coeffs[k + 1..] {
                self.add_hessian(i, j, w * ai * aj);
            }
        }
    }

    pub fn add_eq(&mut self, coeffs: &[(usize, f64)], rhs: f64) -> usize {
        self.eq.push(coeffs, rhs)
    }

    pub fn add_le(&mut self, coeffs: &[(usize, f64)], rhs: f64) -> usize {
        self.le.push(coeffs, rhs)
    }

    pub fn add_bounds(&mut self, i: usize, lo: f64, hi: f64) {
        if hi.is_finite() {
            self.add_le(&[(i, 1.0)], hi);
        }
        if lo.is_finite() {
            self.add_le(&[(i, -1.0)], -lo);
        }
    }

    pub fn solve(&self, settings: &QpSettings) -> Result<QpSolution> {
        let n = self.n;
        let p = CscMatrix::new_from_triplets(
            n,
            n,
            self.p_i.clone(),
            self.p_j.clone(),
            self.p_v.clone(),
        );
        let m_eq = self.eq.rhs.len();
        let m_le = self.le.rhs.len();
        let mut ai = self.eq.i.clone();
        let mut aj = self.eq.j.clone();
        let mut av = self.eq.v.clone();
        ai.extend(self.le.i.iter().map(|r| r + m_eq));
        aj.extend(self.le.j.iter().copied());
        av.extend(self.le.v.iter().copied());
        let a = CscMatrix::new_from_triplets(m_eq + m_le, n, ai, aj, av);
        let mut b = self.eq.rhs.clone();
        b.extend(self.le.rhs.iter().copied());
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        if m_eq > 0 {
            cones.push(ZeroConeT(m_eq));
        }
        if m_le > 0 {
            cones.push(NonnegativeConeT(m_le));
        }
        let st = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(settings.max_iter)
            .tol_gap_abs(settings.tol)
            .tol_gap_rel(settings.tol)
            .tol_feas(settings.tol)
            .presolve_enable(false)
            .max_threads(1)
            .build()
            .map_err(|e| Error::Qp(format!("{e:?}")))?;
        let mut solver = DefaultSolver::new(&p, &self.q, &a, &b, &cones, st)
            .map_err(|e| Error::Qp(format!("{e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved => QpStatus::Solved,
            SolverStatus::AlmostSolved => QpStatus::Inaccurate,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                QpStatus::Infeasible
            }
            _ => QpStatus::Failed,
        };
        Ok(QpSolution {
            x: sol.x.clone(),
            status,
            objective: sol.obj_val,
            iterations: sol.iterations,
        })
    }
}
