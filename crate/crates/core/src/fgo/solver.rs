//! Levenberg–Marquardt on the dense normal equations of a small graph.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::factors::{cost, linearize, Factor, Linearized};
use super::values::{Key, Ordering, Values};
use crate::{parallel, Error, Result};

/// Factors, their variables, and the keys held constant.
#[derive(Debug)]
pub struct Graph {
    pub values: Values,
    pub factors: Vec<Box<dyn Factor>>,
    pub fixed: BTreeSet<Key>,
}

impl Graph {
    pub fn new(values: Values) -> Self {
        Self { values, factors: Vec::new(), fixed: BTreeSet::new() }
    }

    pub fn add(&mut self, f: impl Factor + 'static) {
        self.factors.push(Box::new(f));
    }

    /// Keys referenced by at least one factor and not held fixed.
    pub fn active_keys(&self) -> BTreeSet<Key> {
        self.factors.iter().flat_map(|f| f.keys()).filter(|k| !self.fixed.contains(k)).collect()
    }

    pub fn ordering(&self) -> Ordering {
        Ordering::new(&self.active_keys())
    }

    pub fn linearize_all(&self, values: &Values) -> Vec<Linearized> {
        parallel::map(&self.factors, |f| linearize(f.as_ref(), values))
    }

    pub fn cost(&self, values: &Values) -> f64 {
        parallel::map(&self.factors, |f| cost(f.as_ref(), values)).iter().sum()
    }
}

/// Accumulates `H = JᵀJ`, `g = Jᵀr` and the cost in factor order.
pub fn normal_equations(lins: &[Linearized], ord: &Ordering) -> (DMatrix<f64>, DVector<f64>, f64) {
    let n = ord.dim;
    let mut h = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    let mut c = 0.0;
    for l in lins {
        c += l.cost;
        let blocks: Vec<(usize, &DMatrix<f64>)> =
            l.jac.iter().filter_map(|(k, j)| ord.get(k).map(|o| (o, j))).collect();
        for (a, (oa, ja)) in blocks.iter().enumerate() {
            let jt = ja.transpose();
            let mut gv = g.rows_mut(*oa, ja.ncols());
            gv += &jt * &l.r;
            for (ob, jb) in &blocks[a..] {
                let blk = &jt * *jb;
                let mut hv = h.view_mut((*oa, *ob), (ja.ncols(), jb.ncols()));
                hv += &blk;
                if oa != ob {
                    let mut hv = h.view_mut((*ob, *oa), (jb.ncols(), ja.ncols()));
                    hv += blk.transpose();
                }
            }
        }
    }
    (h, g, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop when `‖g‖∞` falls below this.
    pub gradient_tol: f64,
    /// Stop when `‖δ‖₂` falls below this.
    pub step_tol: f64,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub cost_tol: f64,
    pub initial_lambda: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iterations: 50, gradient_tol: 1e-8, step_tol: 1e-10, cost_tol: 1e-10, initial_lambda: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Gradient,
    Step,
    Cost,
    MaxIterations,
    /// The damping grew without finding a cost decrease.
    NoProgress,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Accepted steps.
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub termination: Termination,
}

/// Solves `A x = b` for symmetric positive definite `A`.
fn chol_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.cholesky().map(|c| c.solve(b))
}

/// Minimizes the graph cost in place. Values are only replaced by points of
/// lower cost, so a failed solve leaves the best point found.
pub fn optimize(graph: &mut Graph, cfg: &SolverConfig) -> Result<SolveReport> {
    let ord = graph.ordering();
    let (mut h, mut g, mut cur) = normal_equations(&graph.linearize_all(&graph.values), &ord);
    if !cur.is_finite() {
        return Err(Error::Numerical("non-finite cost at the initial point".into()));
    }
    let initial_cost = cur;
    let mut lambda = cfg.initial_lambda;
    let mut nu = 2.0;
    let mut iterations = 0;
    let mut attempts = 0;
    let termination = loop {
        if ord.dim == 0 || g.amax() < cfg.gradient_tol {
            break Termination::Gradient;
        }
        if iterations >= cfg.max_iterations || attempts >= 4 * cfg.max_iterations {
            break Termination::MaxIterations;
        }
        attempts += 1;
        let mut a = h.clone();
        for i in 0..ord.dim {
            a[(i, i)] += lambda * h[(i, i)].max(1e-9);
        }
        let Some(delta) = chol_solve(a, &(-&g)) else {
            lambda *= 10.0;
            if lambda > 1e16 {
                break Termination::NoProgress;
            }
            continue;
        };
        if delta.norm() < cfg.step_tol {
            break Termination::Step;
        }
        let mut cand = graph.values.clone();
        ord.retract(&mut cand, &delta);
        let new_cost = graph.cost(&cand);
        let predicted = -(delta.dot(&g) + 0.5 * delta.dot(&(&h * &delta)));
        if new_cost.is_finite() && new_cost < cur {
            let rho = (cur - new_cost) / predicted.max(1e-300);
            graph.values = cand;
            iterations += 1;
            let decrease = cur - new_cost;
            (h, g, cur) = normal_equations(&graph.linearize_all(&graph.values), &ord);
            lambda *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
            if decrease <= cfg.cost_tol * cur.max(1e-300) {
                break Termination::Cost;
            }
        } else {
            lambda *= nu;
            nu *= 2.0;
            if lambda > 1e16 {
                break Termination::NoProgress;
            }
        }
    };
    Ok(SolveReport { iterations, initial_cost, final_cost: cur, termination })
}

/// Marginal covariances of the requested keys at the current values, in
/// request order. Returns `None` if the information matrix is singular.
pub fn marginal_covariance(graph: &Graph, keys: &[Key]) -> Option<DMatrix<f64>> {
    let ord = graph.ordering();
    let (h, _, _) = normal_equations(&graph.linearize_all(&graph.values), &ord);
    let chol = h.cholesky()?;
    let idx: Vec<usize> = keys
        .iter()
        .flat_map(|k| {
            let o = ord.get(k);
            (0..k.dim()).map(move |i| o.map(|o| o + i))
        })
        .collect::<Option<Vec<_>>>()?;
    let m = idx.len();
    let mut rhs = DMatrix::zeros(ord.dim, m);
    for (c, &i) in idx.iter().enumerate() {
        rhs[(i, c)] = 1.0;
    }
    let x = chol.solve(&rhs);
    Some(DMatrix::from_fn(m, m, |r, c| x[(idx[r], c)]))
}
