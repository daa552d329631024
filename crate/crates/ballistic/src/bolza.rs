//! Discretized Bolza problem `(P)` and its dual `(P~)`.
//!
//! The primal arc has nodes `x_0..x_N` with forward-difference velocities; the
//! kinetic part is charged on every interval and the state part on the interior
//! nodes `x_1..x_{N-1}`. Dualizing the difference constraints gives one costate
//! `v_k` per interval, i.e. an arc at the midpoints `(k + ½) h`. On that arc the
//! dual Lagrangian `L~(v, q) = K*(v) + A*(q)` is charged with `K*` on every node
//! and `A*` on the `N - 1` differences, plus `ℓ*(v_0, -v_{N-1})`. The two
//! discrete problems are exact Lagrangian duals, so their values cancel up to
//! solver error.

use crate::convex_core::{dual_lagrangian, ConvexProfile, HamiltonianSpec, LagrangianSpec};
use crate::error::{Error, Result};
use crate::lattice::{dist, dot};
use crate::ExtReal;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Registry of convex boundary costs `ℓ(a, b)` with closed-form conjugates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundaryCost {
    /// `w_a |a - c_a|²/2 + w_b |b - c_b|²/2`
    Quadratic { start_weight: f64, end_weight: f64, start_center: Vec<f64>, end_center: Vec<f64> },
    /// `1{a = start} + w_b |b - c_b|²/2`
    PinnedStart { start: Vec<f64>, end_weight: f64, end_center: Vec<f64> },
    /// `1{a = start} + 1{b = end}`, whose primal value is `c_T(start, end)`.
    PinnedBoth { start: Vec<f64>, end: Vec<f64> },
    /// `<costate, a> + 1{b = end}`, whose primal value is `b_T(costate, end)`.
    #[serde(alias = "ballistic")]
    LinearInB { costate: Vec<f64>, end: Vec<f64> },
}

/// Which finiteness clause of the duality theorem the boundary cost satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinitenessClause {
    /// `ℓ(·, ξ)` and `ℓ(ξ', ·)` are both finite for some `ξ, ξ'`.
    Both,
    /// Only `ℓ(·, ξ)` is finite for some `ξ`.
    StartSlice,
    /// Only `ℓ(ξ', ·)` is finite for some `ξ'`.
    EndSlice,
    Neither,
}

/// One endpoint term of a coordinate problem: `q z²/2 + l z` up to a constant, or `z` fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
enum EndTerm {
    Free { q: f64, l: f64 },
    Fixed(f64),
}

impl EndTerm {
    fn quadratic(weight: f64, center: f64) -> Self {
        EndTerm::Free { q: weight, l: -weight * center }
    }

    fn linear(slope: f64) -> Self {
        EndTerm::Free { q: 0.0, l: slope }
    }
}

impl BoundaryCost {
    pub fn name(&self) -> &'static str {
        match self {
            BoundaryCost::Quadratic { .. } => "quadratic",
            BoundaryCost::PinnedStart { .. } => "pinned-start",
            BoundaryCost::PinnedBoth { .. } => "pinned-both",
            BoundaryCost::LinearInB { .. } => "linear-in-b",
        }
    }

    fn vectors(&self) -> Vec<&Vec<f64>> {
        match self {
            BoundaryCost::Quadratic { start_center, end_center, .. } => vec![start_center, end_center],
            BoundaryCost::PinnedStart { start, end_center, .. } => vec![start, end_center],
            BoundaryCost::PinnedBoth { start, end } => vec![start, end],
            BoundaryCost::LinearInB { costate, end } => vec![costate, end],
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.vectors().iter().any(|v| v.len() != dim || v.iter().any(|c| !c.is_finite())) {
            return Err(Error::invalid(format!("boundary cost {} needs finite vectors of dimension {dim}", self.name())));
        }
        let weights: Vec<f64> = match self {
            BoundaryCost::Quadratic { start_weight, end_weight, .. } => vec![*start_weight, *end_weight],
            BoundaryCost::PinnedStart { end_weight, .. } => vec![*end_weight],
            _ => vec![],
        };
        // Positive weights keep ℓ convex and ℓ* finite.
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::invalid(format!("boundary cost {} needs positive finite weights", self.name())));
        }
        Ok(())
    }

    pub fn clause(&self) -> FinitenessClause {
        match self {
            BoundaryCost::Quadratic { .. } => FinitenessClause::Both,
            BoundaryCost::PinnedStart { .. } => FinitenessClause::EndSlice,
            BoundaryCost::PinnedBoth { .. } => FinitenessClause::Neither,
            BoundaryCost::LinearInB { .. } => FinitenessClause::StartSlice,
        }
    }

    /// `ℓ(a, b)`
    pub fn eval(&self, a: &[f64], b: &[f64]) -> ExtReal {
        let quad = |w: f64, z: &[f64], c: &[f64]| 0.5 * w * dist(z, c).powi(2);
        let pin = |z: &[f64], p: &[f64]| if z == p { 0.0 } else { f64::INFINITY };
        let v = match self {
            BoundaryCost::Quadratic { start_weight, end_weight, start_center, end_center } => {
                quad(*start_weight, a, start_center) + quad(*end_weight, b, end_center)
            }
            BoundaryCost::PinnedStart { start, end_weight, end_center } => pin(a, start) + quad(*end_weight, b, end_center),
            BoundaryCost::PinnedBoth { start, end } => pin(a, start) + pin(b, end),
            BoundaryCost::LinearInB { costate, end } => dot(costate, a) + pin(b, end),
        };
        ExtReal::from_f64(v).unwrap_or(ExtReal::PosInf)
    }

    /// `ℓ*(p, q) = sup_{a,b} <p, a> + <q, b> - ℓ(a, b)`
    pub fn conjugate_eval(&self, p: &[f64], q: &[f64]) -> ExtReal {
        let quad = |w: f64, z: &[f64], c: &[f64]| dot(z, z) / (2.0 * w) + dot(z, c);
        let v = match self {
            BoundaryCost::Quadratic { start_weight, end_weight, start_center, end_center } => {
                quad(*start_weight, p, start_center) + quad(*end_weight, q, end_center)
            }
            BoundaryCost::PinnedStart { start, end_weight, end_center } => dot(p, start) + quad(*end_weight, q, end_center),
            BoundaryCost::PinnedBoth { start, end } => dot(p, start) + dot(q, end),
            BoundaryCost::LinearInB { costate, end } => {
                if p == costate.as_slice() {
                    dot(q, end)
                } else {
                    f64::INFINITY
                }
            }
        };
        ExtReal::from_f64(v).unwrap_or(ExtReal::PosInf)
    }

    /// Distance from `(p, q)` to `∂ℓ(a, b)`; pinned coordinates accept any subgradient.
    pub fn subgradient_residual(&self, a: &[f64], b: &[f64], p: &[f64], q: &[f64]) -> f64 {
        let grad = |w: f64, z: &[f64], c: &[f64]| -> Vec<f64> { z.iter().zip(c).map(|(z, c)| w * (z - c)).collect() };
        let (dp, dq) = match self {
            BoundaryCost::Quadratic { start_weight, end_weight, start_center, end_center } => {
                (dist(p, &grad(*start_weight, a, start_center)), dist(q, &grad(*end_weight, b, end_center)))
            }
            BoundaryCost::PinnedStart { end_weight, end_center, .. } => (0.0, dist(q, &grad(*end_weight, b, end_center))),
            BoundaryCost::PinnedBoth { .. } => (0.0, 0.0),
            BoundaryCost::LinearInB { costate, .. } => (dist(p, costate), 0.0),
        };
        dp.max(dq)
    }

    /// Endpoint terms of `ℓ(a, b)` in coordinate `k`.
    fn primal_ends(&self, k: usize) -> (EndTerm, EndTerm) {
        match self {
            BoundaryCost::Quadratic { start_weight, end_weight, start_center, end_center } => {
                (EndTerm::quadratic(*start_weight, start_center[k]), EndTerm::quadratic(*end_weight, end_center[k]))
            }
            BoundaryCost::PinnedStart { start, end_weight, end_center } => {
                (EndTerm::Fixed(start[k]), EndTerm::quadratic(*end_weight, end_center[k]))
            }
            BoundaryCost::PinnedBoth { start, end } => (EndTerm::Fixed(start[k]), EndTerm::Fixed(end[k])),
            BoundaryCost::LinearInB { costate, end } => (EndTerm::linear(costate[k]), EndTerm::Fixed(end[k])),
        }
    }

    /// Endpoint terms of `ℓ*(v_0, -v_end)` in coordinate `k`.
    fn dual_ends(&self, k: usize) -> (EndTerm, EndTerm) {
        // (-z)²/(2w) + <-z, c> = z²/(2w) - c z
        let conj = |w: f64, c: f64, sign: f64| EndTerm::Free { q: 1.0 / w, l: sign * c };
        match self {
            BoundaryCost::Quadratic { start_weight, end_weight, start_center, end_center } => {
                (conj(*start_weight, start_center[k], 1.0), conj(*end_weight, end_center[k], -1.0))
            }
            BoundaryCost::PinnedStart { start, end_weight, end_center } => {
                (EndTerm::linear(start[k]), conj(*end_weight, end_center[k], -1.0))
            }
            BoundaryCost::PinnedBoth { start, end } => (EndTerm::linear(start[k]), EndTerm::linear(-end[k])),
            BoundaryCost::LinearInB { costate, end } => (EndTerm::Fixed(costate[k]), EndTerm::linear(-end[k])),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BolzaInstance {
    pub lagrangian: LagrangianSpec,
    pub boundary: BoundaryCost,
    pub horizon: f64,
    pub steps: usize,
}

impl BolzaInstance {
    pub fn new(lagrangian: LagrangianSpec, boundary: BoundaryCost, horizon: f64, steps: usize) -> Result<Self> {
        if !lagrangian.jointly_convex {
            return Err(Error::invalid("the Bolza problem needs a jointly convex Lagrangian"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid("the horizon must be positive"));
        }
        if steps < 2 {
            return Err(Error::invalid("the Bolza discretization needs N >= 2"));
        }
        boundary.validate(lagrangian.dim)?;
        Ok(BolzaInstance { lagrangian, boundary, horizon, steps })
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn primal_times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| k as f64 * self.step()).collect()
    }

    pub fn dual_times(&self) -> Vec<f64> {
        (0..self.steps).map(|k| (k as f64 + 0.5) * self.step()).collect()
    }
}

fn chain_action(state: &ConvexProfile, kinetic: &ConvexProfile, path: &[Vec<f64>], state_nodes: std::ops::Range<usize>, h: f64) -> ExtReal {
    let mut total = ExtReal::ZERO;
    for w in path.windows(2) {
        let vel: Vec<f64> = w[1].iter().zip(&w[0]).map(|(b, a)| (b - a) / h).collect();
        total = total.add(kinetic.eval(&vel).scale(h)).unwrap_or(ExtReal::PosInf);
    }
    for x in &path[state_nodes] {
        total = total.add(state.eval(x).scale(h)).unwrap_or(ExtReal::PosInf);
    }
    total
}

/// Discrete primal objective of an arc `x_0..x_N`.
pub fn primal_objective(inst: &BolzaInstance, path: &[Vec<f64>]) -> Result<ExtReal> {
    if path.len() != inst.steps + 1 || path.iter().any(|x| x.len() != inst.lagrangian.dim) {
        return Err(Error::invalid(format!("primal arcs have {} points of dimension {}", inst.steps + 1, inst.lagrangian.dim)));
    }
    let l = &inst.lagrangian;
    let action = chain_action(l.state_part(), l.kinetic_part(), path, 1..inst.steps, inst.step());
    Ok(action.add(inst.boundary.eval(&path[0], &path[inst.steps])).unwrap_or(ExtReal::PosInf))
}

/// Discrete dual objective of a costate arc `v_0..v_{N-1}` at the midpoints.
pub fn dual_objective(inst: &BolzaInstance, path: &[Vec<f64>]) -> Result<ExtReal> {
    if path.len() != inst.steps || path.iter().any(|v| v.len() != inst.lagrangian.dim) {
        return Err(Error::invalid(format!("dual arcs have {} points of dimension {}", inst.steps, inst.lagrangian.dim)));
    }
    let dual = dual_lagrangian(&inst.lagrangian)?;
    let action = chain_action(dual.state_part(), dual.kinetic_part(), path, 0..inst.steps, inst.step());
    let end: Vec<f64> = path[inst.steps - 1].iter().map(|c| -c).collect();
    Ok(action.add(inst.boundary.conjugate_eval(&path[0], &end)).unwrap_or(ExtReal::PosInf))
}

/// A profile as a quadratic coefficient, or `None` for the zero-indicator.
fn quadratic_coef(p: &ConvexProfile) -> Result<Option<f64>> {
    match p {
        ConvexProfile::Zero => Ok(Some(0.0)),
        ConvexProfile::Quadratic { c } if c.value() >= 0.0 && c.value().is_finite() => Ok(Some(c.value())),
        ConvexProfile::IndicatorZero => Ok(None),
        _ => Err(Error::Unsupported("solve_bolza covers quadratic registry Lagrangians".into())),
    }
}

/// One coordinate of a chain QP: `Σ h K(Δz/h) + Σ_{S} h A(z_k) + start(z_0) + end(z_last)`.
struct Chain {
    nodes: usize,
    h: f64,
    kinetic: Option<f64>,
    state: Option<f64>,
    state_nodes: std::ops::Range<usize>,
    start: EndTerm,
    end: EndTerm,
}

fn solve_chain(ch: &Chain) -> Result<Vec<f64>> {
    let m = ch.nodes;
    let mut q = DMatrix::<f64>::zeros(m, m);
    let mut c = DVector::<f64>::zeros(m);
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for i in 0..m - 1 {
        match ch.kinetic {
            Some(kappa) => {
                let w = kappa / ch.h;
                q[(i, i)] += w;
                q[(i + 1, i + 1)] += w;
                q[(i, i + 1)] -= w;
                q[(i + 1, i)] -= w;
            }
            None => rows.push((vec![(i, 1.0), (i + 1, -1.0)], 0.0)),
        }
    }
    for k in ch.state_nodes.clone() {
        match ch.state {
            Some(sigma) => q[(k, k)] += ch.h * sigma,
            None => rows.push((vec![(k, 1.0)], 0.0)),
        }
    }
    for (idx, term) in [(0, ch.start), (m - 1, ch.end)] {
        match term {
            EndTerm::Free { q: qq, l } => {
                q[(idx, idx)] += qq;
                c[idx] += l;
            }
            EndTerm::Fixed(val) => rows.push((vec![(idx, 1.0)], val)),
        }
    }
    let r = rows.len();
    let mut kkt = DMatrix::<f64>::zeros(m + r, m + r);
    let mut rhs = DVector::<f64>::zeros(m + r);
    kkt.view_mut((0, 0), (m, m)).copy_from(&q);
    for i in 0..m {
        rhs[i] = -c[i];
    }
    for (k, (row, val)) in rows.iter().enumerate() {
        for &(j, a) in row {
            kkt[(m + k, j)] = a;
            kkt[(j, m + k)] = a;
        }
        rhs[m + k] = *val;
    }
    // Redundant pins make the KKT matrix singular but consistent; the SVD handles both.
    let sol = kkt.clone().svd(true, true).solve(&rhs, 1e-12).map_err(|e| Error::SolverFailure(e.to_string()))?;
    let resid = (&kkt * &sol - &rhs).amax();
    if !(resid <= 1e-8 * (1.0 + rhs.amax())) {
        return Err(Error::UnboundedBelow(format!("discrete Bolza QP has no stationary point (residual {resid:e})")));
    }
    let mut z: Vec<f64> = sol.rows(0, m).iter().copied().collect();
    // Put pinned coordinates exactly on their constraint sets so indicators evaluate to zero.
    if ch.kinetic.is_none() {
        let level = match (ch.start, ch.end) {
            (EndTerm::Fixed(a), _) | (_, EndTerm::Fixed(a)) => a,
            _ => z.iter().sum::<f64>() / m as f64,
        };
        z.iter_mut().for_each(|v| *v = level);
    }
    if ch.state.is_none() {
        z[ch.state_nodes.clone()].iter_mut().for_each(|v| *v = 0.0);
    }
    for (idx, term) in [(0, ch.start), (m - 1, ch.end)] {
        if let EndTerm::Fixed(val) = term {
            z[idx] = val;
        }
    }
    Ok(z)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BolzaSolution {
    pub primal_times: Vec<f64>,
    pub primal_path: Vec<Vec<f64>>,
    /// Midpoint times `(k + ½) h` of the costate arc.
    pub dual_times: Vec<f64>,
    pub dual_path: Vec<Vec<f64>>,
    pub primal_value: f64,
    pub dual_value: f64,
    /// `primal_value + dual_value`
    pub gap: f64,
    pub tolerance: f64,
    /// Distance of `(v_0, -v_{N-1})` to `∂ℓ(x_0, x_N)`.
    pub transversality_residual: f64,
    pub clause: FinitenessClause,
    /// Set when `ℓ*` is finite only on a subspace and the dual was solved on it.
    pub dual_note: Option<String>,
}

impl BolzaSolution {
    /// CSV rows `arc,t,coords...` for the primal and the costate arc.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("arc,t,coords\n");
        for (name, times, path) in [("x", &self.primal_times, &self.primal_path), ("v", &self.dual_times, &self.dual_path)] {
            for (t, p) in times.iter().zip(path) {
                let _ = write!(s, "{name},{t}");
                for c in p {
                    let _ = write!(s, ",{c}");
                }
                s.push('\n');
            }
        }
        s
    }
}

/// Solves the discrete primal and dual problems as two independent QPs.
pub fn solve_bolza(inst: &BolzaInstance) -> Result<BolzaSolution> {
    let l = &inst.lagrangian;
    let dual = dual_lagrangian(l)?;
    let (n, d, h) = (inst.steps, l.dim, inst.step());
    let kinetic = quadratic_coef(l.kinetic_part())?;
    let state = quadratic_coef(l.state_part())?;
    let dual_kinetic = quadratic_coef(dual.kinetic_part())?;
    let dual_state = quadratic_coef(dual.state_part())?;
    let mut primal_path = vec![vec![0.0; d]; n + 1];
    let mut dual_path = vec![vec![0.0; d]; n];
    for k in 0..d {
        let (start, end) = inst.boundary.primal_ends(k);
        let xs = solve_chain(&Chain { nodes: n + 1, h, kinetic, state, state_nodes: 1..n, start, end })?;
        let (start, end) = inst.boundary.dual_ends(k);
        let vs = solve_chain(&Chain { nodes: n, h, kinetic: dual_kinetic, state: dual_state, state_nodes: 0..n, start, end })?;
        for (p, x) in primal_path.iter_mut().zip(xs) {
            p[k] = x;
        }
        for (p, v) in dual_path.iter_mut().zip(vs) {
            p[k] = v;
        }
    }
    let primal_value = primal_objective(inst, &primal_path)?
        .finite()
        .ok_or_else(|| Error::SolverFailure("primal QP returned an infeasible arc".into()))?;
    let dual_value =
        dual_objective(inst, &dual_path)?.finite().ok_or_else(|| Error::SolverFailure("dual QP returned an infeasible arc".into()))?;
    let end: Vec<f64> = dual_path[n - 1].iter().map(|c| -c).collect();
    let transversality_residual = inst.boundary.subgradient_residual(&primal_path[0], &primal_path[n], &dual_path[0], &end);
    let restricted = matches!(inst.boundary, BoundaryCost::LinearInB { .. }) || dual_kinetic.is_none() || dual_state.is_none();
    let dual_note = restricted
        .then(|| "ℓ* or L~ is an indicator on a subspace; the dual QP was solved with those equalities as constraints".to_string());
    Ok(BolzaSolution {
        primal_times: inst.primal_times(),
        primal_path,
        dual_times: inst.dual_times(),
        dual_path,
        primal_value,
        dual_value,
        gap: primal_value + dual_value,
        tolerance: 1e-8 * (1.0 + primal_value.abs()),
        transversality_residual,
        clause: inst.boundary.clause(),
        dual_note,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HamiltonianSystemReport {
    /// `max_k |(x_{k+1} - x_k)/h - ∂H/∂v(x_k, v(t_k))|`
    pub velocity_residual: f64,
    /// `max_k |(v(t_{k+1}) - v(t_k))/h + ∂H/∂x(x_k, v(t_k))|`
    pub costate_residual: f64,
    /// Larger of the two forward-difference residuals; first order in `h`.
    pub max_residual: f64,
    /// The same equations on the staggered grid of the scheme, where they hold
    /// up to solver error.
    pub staggered_residual: f64,
    pub transversality_residual: f64,
}

/// Forward-difference residuals of `ẋ = ∂_v H`, `-v̇ = ∂_x H` at the primal
/// nodes, with `v(t_k)` interpolated from the two adjacent midpoint costates.
pub fn hamiltonian_system_check(sol: &BolzaSolution, h: &HamiltonianSpec) -> Result<HamiltonianSystemReport> {
    let n = sol.dual_path.len();
    if sol.primal_path.len() != n + 1 || n < 3 {
        return Err(Error::invalid("solution arcs need N >= 3 and consistent lengths"));
    }
    let step = sol.primal_times[1] - sol.primal_times[0];
    let xs = &sol.primal_path;
    let vs = &sol.dual_path;
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(a, b)| (a - b) / step).collect() };
    let plus = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(a, b)| (a + b) * (a + b)).sum::<f64>().sqrt() };
    let at_node = |k: usize| -> Vec<f64> { vs[k - 1].iter().zip(&vs[k]).map(|(a, b)| 0.5 * (a + b)).collect() };
    let (mut vel, mut cost, mut stag) = (0.0f64, 0.0f64, 0.0f64);
    for k in 1..n {
        let v = at_node(k);
        vel = vel.max(dist(&diff(&xs[k + 1], &xs[k]), &h.grad_q(&xs[k], &v)));
        if k + 1 < n {
            cost = cost.max(plus(&diff(&at_node(k + 1), &v), &h.grad_x(&xs[k], &v)));
        }
        stag = stag.max(plus(&diff(&vs[k], &vs[k - 1]), &h.grad_x(&xs[k], &v)));
    }
    for k in 0..n {
        stag = stag.max(dist(&diff(&xs[k + 1], &xs[k]), &h.grad_q(&xs[k], &vs[k])));
    }
    Ok(HamiltonianSystemReport {
        velocity_residual: vel,
        costate_residual: cost,
        max_residual: vel.max(cost),
        staggered_residual: stag,
        transversality_residual: sol.transversality_residual,
    })
}
