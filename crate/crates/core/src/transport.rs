//! Discrete optimal transport between batches of mode sets.
//!
//! Two solvers share one plan type. [`sinkhorn`] solves the entropically
//! regularized problem in the log domain with ε-scaling; [`exact_ot`] solves
//! the linear program by successive shortest paths and serves both as an
//! oracle and as the small-instance default.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

use crate::dmd::TemporalModes;
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::grassmann::{self, DistanceKind, OrthonormalBasis};

/// Largest side accepted by [`exact_ot`].
pub const EXACT_CAP: usize = 64;

/// Marginals must sum to one within this.
const MASS_TOL: f64 = 1e-10;

/// Residual capacities below this are treated as saturated.
const FLOW_EPS: f64 = 1e-15;

/// Pairwise dissimilarities. `+∞` marks a forbidden pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub c: DMatrix<f64>,
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
}

impl CostMatrix {
    pub fn new(c: DMatrix<f64>) -> Result<Self> {
        let row_ids = (0..c.nrows()).map(|i| i.to_string()).collect();
        let col_ids = (0..c.ncols()).map(|j| j.to_string()).collect();
        Self::with_ids(c, row_ids, col_ids)
    }

    pub fn with_ids(c: DMatrix<f64>, row_ids: Vec<String>, col_ids: Vec<String>) -> Result<Self> {
        if c.nrows() == 0 || c.ncols() == 0 {
            return Err(invalid("cost matrix must be nonempty"));
        }
        if row_ids.len() != c.nrows() || col_ids.len() != c.ncols() {
            return Err(invalid("cost matrix labels do not match its shape"));
        }
        if c.iter().any(|x| x.is_nan() || *x < 0.0 || *x == f64::NEG_INFINITY) {
            return Err(invalid("cost entries must be nonnegative (or +inf)"));
        }
        Ok(Self { c, row_ids, col_ids })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let cols = rows.first().map_or(0, |x| x.len());
        if rows.iter().any(|x| x.len() != cols) {
            return Err(invalid("ragged cost rows"));
        }
        Self::new(DMatrix::from_fn(r, cols, |i, j| rows[i][j]))
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.c.nrows(), self.c.ncols())
    }

    /// Mean over finite entries.
    pub fn mean(&self) -> f64 {
        let (sum, n) = self
            .c
            .iter()
            .filter(|x| x.is_finite())
            .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Entrywise `C^p`.
    pub fn powf(&self, p: f64) -> Self {
        Self {
            c: self.c.map(|x| x.powf(p)),
            row_ids: self.row_ids.clone(),
            col_ids: self.col_ids.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Sinkhorn,
    Exact,
}

#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub gamma: DMatrix<f64>,
    /// `⟨γ, C⟩` over the matrix the solver was given.
    pub cost: f64,
    /// `‖γ1 − μ‖₁ + ‖γᵀ1 − ν‖₁`.
    pub marginal_error: f64,
    pub solver: SolverKind,
    pub converged: bool,
    pub iterations: usize,
}

pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Builds `C_ij = d(real_i, gen_j)`.
pub fn cost_matrix(
    real: &[TemporalModes],
    generated: &[TemporalModes],
    kind: DistanceKind,
    exec: Execution,
) -> Result<CostMatrix> {
    if real.is_empty() || generated.is_empty() {
        return Err(invalid("cost matrix needs nonempty mode lists"));
    }
    let prep = |side: &[TemporalModes]| -> Result<Vec<OrthonormalBasis>> {
        exec.try_map_range(side.len(), |i| {
            OrthonormalBasis::from_modes(&side[i]).map_err(|e| Error::Pair {
                row: side[i].source_id.clone(),
                col: String::new(),
                source: Box::new(e),
            })
        })
    };
    let rb = prep(real)?;
    let gb = prep(generated)?;
    let row_ids: Vec<String> = real.iter().map(|m| m.source_id.clone()).collect();
    let col_ids: Vec<String> = generated.iter().map(|m| m.source_id.clone()).collect();
    let rrefs: Vec<&OrthonormalBasis> = rb.iter().collect();
    let grefs: Vec<&OrthonormalBasis> = gb.iter().collect();
    let c = pairwise_costs(&rrefs, &grefs, kind, exec).map_err(|(i, j, e)| Error::Pair {
        row: row_ids[i].clone(),
        col: col_ids[j].clone(),
        source: Box::new(e),
    })?;
    CostMatrix::with_ids(c, row_ids, col_ids)
}

/// Distances between already orthonormalized bases. A failure reports the
/// `(row, col)` index of the first failing pair in row-major order.
pub fn pairwise_costs(
    real: &[&OrthonormalBasis],
    generated: &[&OrthonormalBasis],
    kind: DistanceKind,
    exec: Execution,
) -> std::result::Result<DMatrix<f64>, (usize, usize, Error)> {
    let (r, g) = (real.len(), generated.len());
    let flat = exec.try_map_range(r * g, |idx| {
        let (i, j) = (idx / g, idx % g);
        grassmann::principal_angles_between(real[i], generated[j])
            .map(|a| kind.eval(&a))
            .map_err(|e| (i, j, e))
    })?;
    Ok(DMatrix::from_row_slice(r, g, &flat))
}

fn check_marginals(c: &CostMatrix, mu: &[f64], nu: &[f64]) -> Result<()> {
    let (r, k) = c.shape();
    if mu.len() != r || nu.len() != k {
        return Err(invalid(format!(
            "marginal lengths ({}, {}) do not match cost shape {r}x{k}",
            mu.len(),
            nu.len()
        )));
    }
    for (name, m) in [("source", mu), ("target", nu)] {
        if m.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(invalid(format!("{name} marginal has negative or non-finite mass")));
        }
        let s: f64 = m.iter().sum();
        if (s - 1.0).abs() > MASS_TOL {
            return Err(invalid(format!("{name} marginal sums to {s}, expected 1")));
        }
    }
    for (i, &m) in mu.iter().enumerate() {
        if m > 0.0 && c.c.row(i).iter().all(|x| x.is_infinite()) {
            return Err(Error::Infeasible(format!("row {} has no finite cost", c.row_ids[i])));
        }
    }
    for (j, &m) in nu.iter().enumerate() {
        if m > 0.0 && c.c.column(j).iter().all(|x| x.is_infinite()) {
            return Err(Error::Infeasible(format!("column {} has no finite cost", c.col_ids[j])));
        }
    }
    Ok(())
}

fn marginal_error(gamma: &DMatrix<f64>, mu: &[f64], nu: &[f64]) -> f64 {
    let rows: f64 = (0..gamma.nrows()).map(|i| (gamma.row(i).sum() - mu[i]).abs()).sum();
    let cols: f64 = (0..gamma.ncols()).map(|j| (gamma.column(j).sum() - nu[j]).abs()).sum();
    rows + cols
}

fn plan_cost(gamma: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    gamma
        .iter()
        .zip(c.iter())
        .filter(|(g, _)| **g > 0.0)
        .map(|(g, x)| g * x)
        .sum()
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Entropic transport with regularization `epsilon`.
///
/// Potentials `f, g` define `γ_ij = exp((f_i + g_j − C_ij)/ε)`. The solve
/// anneals ε geometrically from the cost scale down to `epsilon`, warm
/// starting each stage; `max_iter` bounds the total number of sweeps.
pub fn sinkhorn(
    c: &CostMatrix,
    mu: &[f64],
    nu: &[f64],
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<TransportPlan> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(tol > 0.0) {
        return Err(invalid(format!("tol must be positive, got {tol}")));
    }
    check_marginals(c, mu, nu)?;
    let (r, k) = c.shape();
    let cm = &c.c;
    let log_mu: Vec<f64> = mu.iter().map(|x| x.ln()).collect();
    let log_nu: Vec<f64> = nu.iter().map(|x| x.ln()).collect();
    let mut f = vec![0.0; r];
    let mut g = vec![0.0; k];

    let scale = cm.iter().filter(|x| x.is_finite()).fold(0.0f64, |a, x| a.max(*x));
    let mut eps_schedule = Vec::new();
    let mut e = scale.max(epsilon);
    while e > epsilon {
        eps_schedule.push(e);
        e /= 4.0;
    }
    eps_schedule.push(epsilon);

    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    let mut eps_used = eps_schedule[0];
    for (stage, &eps) in eps_schedule.iter().enumerate() {
        let last = stage + 1 == eps_schedule.len();
        let stage_tol = if last { tol } else { tol.max(1e-3) };
        eps_used = eps;
        let mut relax = Relaxation::default();
        while iterations < max_iter {
            iterations += 1;
            let omega = relax.omega;
            for i in 0..r {
                f[i] = if mu[i] == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    let fresh = eps * (log_mu[i] - log_sum_exp((0..k).map(|j| (g[j] - cm[(i, j)]) / eps)));
                    if omega == 1.0 {
                        fresh
                    } else {
                        f[i] + omega * (fresh - f[i])
                    }
                };
            }
            for j in 0..k {
                g[j] = if nu[j] == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    let fresh = eps * (log_nu[j] - log_sum_exp((0..r).map(|i| (f[i] - cm[(i, j)]) / eps)));
                    if omega == 1.0 {
                        fresh
                    } else {
                        g[j] + omega * (fresh - g[j])
                    }
                };
            }
            violation = potential_violation(cm, &f, &g, mu, nu, eps, true);
            if violation < stage_tol {
                break;
            }
            relax.observe(violation);
        }
        if iterations >= max_iter {
            break;
        }
    }

    let gamma = DMatrix::from_fn(r, k, |i, j| {
        let v = ((f[i] + g[j] - cm[(i, j)]) / eps_used).exp();
        if v.is_finite() {
            v
        } else {
            0.0
        }
    });
    let merr = marginal_error(&gamma, mu, nu);
    let converged = violation < tol;
    if merr > 10.0 * tol {
        log::warn!("sinkhorn stopped after {iterations} iterations with marginal error {merr:.3e} (tol {tol:.1e})");
    }
    Ok(TransportPlan {
        cost: plan_cost(&gamma, cm),
        gamma,
        marginal_error: merr,
        solver: SolverKind::Sinkhorn,
        converged,
        iterations,
    })
}

/// L1 marginal violation of the plan defined by `f, g`. Columns are exact
/// after a plain g-update, so they are only summed when `both` is set.
fn potential_violation(cm: &DMatrix<f64>, f: &[f64], g: &[f64], mu: &[f64], nu: &[f64], eps: f64, both: bool) -> f64 {
    let rows: f64 = (0..f.len())
        .map(|i| (log_sum_exp((0..g.len()).map(|j| (f[i] + g[j] - cm[(i, j)]) / eps)).exp() - mu[i]).abs())
        .sum();
    if !both {
        return rows;
    }
    let cols: f64 = (0..g.len())
        .map(|j| (log_sum_exp((0..f.len()).map(|i| (f[i] + g[j] - cm[(i, j)]) / eps)).exp() - nu[j]).abs())
        .sum();
    rows + cols
}

/// Over-relaxation of both potential updates, `f ← f + ω (f_new − f)`
/// and likewise for `g`.
///
/// Every `WINDOW` sweeps the observed linear rate `ρ` of the violation
/// yields an estimate of the plain-sweep rate `η = (ρ + ω − 1)² / (ρ ω²)`,
/// and ω climbs by at most `STEP` toward `2 / (1 + √(1 − η))`. A tenfold
/// rise of the violation over its best value halves `ω − 1` and lowers
/// the ceiling below the value that failed.
struct Relaxation {
    omega: f64,
    best: f64,
    anchor: f64,
    since_anchor: usize,
    ceiling: f64,
}

impl Default for Relaxation {
    fn default() -> Self {
        Self {
            omega: 1.0,
            best: f64::INFINITY,
            anchor: f64::NAN,
            since_anchor: 0,
            ceiling: Self::MAX_OMEGA,
        }
    }
}

impl Relaxation {
    const WINDOW: usize = 50;
    const MAX_OMEGA: f64 = 1.995;
    const STEP: f64 = 0.1;

    fn observe(&mut self, violation: f64) {
        if !violation.is_finite() || violation > 10.0 * self.best {
            self.ceiling = 1.0 + 0.9 * (self.omega - 1.0);
            self.omega = 1.0 + 0.5 * (self.omega - 1.0);
            self.best = if violation.is_finite() {
                violation
            } else {
                f64::INFINITY
            };
            self.anchor = f64::NAN;
            return;
        }
        self.best = self.best.min(violation);
        if !(self.anchor > 0.0) {
            self.anchor = violation;
            self.since_anchor = 0;
            return;
        }
        self.since_anchor += 1;
        if self.since_anchor < Self::WINDOW {
            return;
        }
        let rho = (violation / self.anchor).powf(1.0 / self.since_anchor as f64);
        self.anchor = violation;
        self.since_anchor = 0;
        let w = self.omega;
        if rho <= 0.0 || rho >= 1.0 || rho <= (w - 1.0) * 1.05 {
            return;
        }
        let eta = ((rho + w - 1.0).powi(2) / (rho * w * w)).min(1.0 - 1e-12);
        let target = (2.0 / (1.0 + (1.0 - eta).sqrt())).min(self.ceiling);
        self.omega = self.omega.max(target.min(w + Self::STEP));
    }
}

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

/// Min-cost flow network in adjacency-list form; edge `e ^ 1` is the
/// reverse of edge `e`.
struct Network {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl Network {
    fn new(nodes: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: f64, cost: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.edges.push(Edge {
            to: from,
            cap: 0.0,
            cost: -cost,
        });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }
}

/// Exact discrete transport by successive shortest augmenting paths with
/// Johnson potentials. Capped at [`EXACT_CAP`] per side.
pub fn exact_ot(c: &CostMatrix, mu: &[f64], nu: &[f64]) -> Result<TransportPlan> {
    let (r, k) = c.shape();
    if r > EXACT_CAP || k > EXACT_CAP {
        return Err(Error::ProblemTooLarge {
            rows: r,
            cols: k,
            cap: EXACT_CAP,
        });
    }
    check_marginals(c, mu, nu)?;
    let source = r + k;
    let sink = source + 1;
    let n = sink + 1;
    let mut net = Network::new(n);
    for (i, m) in mu.iter().enumerate() {
        net.add(source, i, *m, 0.0);
    }
    for (j, m) in nu.iter().enumerate() {
        net.add(r + j, sink, *m, 0.0);
    }
    let mut arc = DMatrix::from_element(r, k, usize::MAX);
    for i in 0..r {
        for j in 0..k {
            let cost = c.c[(i, j)];
            if cost.is_finite() {
                arc[(i, j)] = net.add(i, r + j, f64::INFINITY, cost);
            }
        }
    }

    let total = mu.iter().sum::<f64>().min(nu.iter().sum::<f64>());
    let mut shipped = 0.0;
    let mut potential = vec![0.0; n];
    let mut iterations = 0;
    while total - shipped > FLOW_EPS {
        iterations += 1;
        let (dist, prev) = dijkstra(&net, &potential, source);
        if !dist[sink].is_finite() {
            return Err(Error::Infeasible(format!(
                "no augmenting path after shipping {shipped:.3e} of {total:.3e}"
            )));
        }
        for v in 0..n {
            if dist[v].is_finite() {
                potential[v] += dist[v];
            }
        }
        let mut push = total - shipped;
        let mut v = sink;
        while v != source {
            let e = prev[v];
            push = push.min(net.edges[e].cap);
            v = net.edges[e ^ 1].to;
        }
        let mut v = sink;
        while v != source {
            let e = prev[v];
            net.edges[e].cap -= push;
            net.edges[e ^ 1].cap += push;
            v = net.edges[e ^ 1].to;
        }
        shipped += push;
    }

    let gamma = DMatrix::from_fn(r, k, |i, j| {
        let e = arc[(i, j)];
        if e == usize::MAX {
            0.0
        } else {
            net.edges[e ^ 1].cap
        }
    });
    Ok(TransportPlan {
        cost: plan_cost(&gamma, &c.c),
        marginal_error: marginal_error(&gamma, mu, nu),
        gamma,
        solver: SolverKind::Exact,
        converged: true,
        iterations,
    })
}

/// Dense Dijkstra on reduced costs; returns distances and the edge used to
/// reach each node.
fn dijkstra(net: &Network, potential: &[f64], source: usize) -> (Vec<f64>, Vec<usize>) {
    let n = net.adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut done = vec![false; n];
    dist[source] = 0.0;
    loop {
        let u = (0..n)
            .filter(|&v| !done[v] && dist[v].is_finite())
            .min_by(|&a, &b| dist[a].partial_cmp(&dist[b]).unwrap_or(Ordering::Equal));
        let Some(u) = u else { break };
        done[u] = true;
        for &e in &net.adj[u] {
            let edge = &net.edges[e];
            if edge.cap <= FLOW_EPS || done[edge.to] {
                continue;
            }
            // Reduced costs are nonnegative up to rounding.
            let reduced = (edge.cost + potential[u] - potential[edge.to]).max(0.0);
            let cand = dist[u] + reduced;
            if cand < dist[edge.to] {
                dist[edge.to] = cand;
                prev[edge.to] = e;
            }
        }
    }
    (dist, prev)
}

/// `(Σ γ_ij C_ij^p)^{1/p}`.
pub fn wasserstein(plan: &TransportPlan, c: &CostMatrix, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(invalid(format!("wasserstein order must be >= 1, got {p}")));
    }
    if plan.gamma.shape() != c.c.shape() {
        return Err(invalid("plan and cost shapes differ"));
    }
    let s: f64 = plan
        .gamma
        .iter()
        .zip(c.c.iter())
        .filter(|(g, _)| **g > 0.0)
        .map(|(g, x)| g * x.powf(p))
        .sum();
    Ok(s.max(0.0).powf(1.0 / p))
}
