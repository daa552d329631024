//! Stochastic transport cost and stochastic ballistic costs on a walk lattice.
//!
//! Over randomized feedback drifts each cost is a finite linear program whose
//! dual is the DP formula. The min-type duals are concave in the terminal
//! potential and are maximized by a smoothed ascent (soft max over drifts,
//! L-BFGS, decreasing temperature) with the value always reported at the exact
//! DP; tiny lattices are finished by a cutting-plane method. The max-type dual
//! has one variable per target atom and is minimized by cutting planes.

use super::{ControlPolicy, ControlSet, Dp, PolicyOutcome, WalkLattice};
use crate::convex_core::{dual_lagrangian, LagrangianSpec};
use crate::discrete_ot::{brenier_W, solve_transport, CostMatrix, Sense};
use crate::error::{Error, Result};
use crate::lp::maximize_concave;
use crate::measures::{DiscreteMeasure, Space, MASS_TOL};
use argmin::core::{CostFunction, Executor, Gradient};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use serde::Serialize;
use std::cell::RefCell;

/// Default certification tolerance of [`mt_cost`] (absolute, scaled by `1 + |value|`).
pub const MT_TOL: f64 = 1e-6;
/// Lattices with at most this many nodes are finished by cutting planes.
pub const CUTTING_PLANE_NODES: usize = 12;
/// A policy is feasible when its terminal law is this close to `ν_T` in `ℓ¹`.
pub const MARGINAL_TOL: f64 = 1e-6;
/// Cap on cutting-plane iterations.
pub const MAX_CUTS: usize = 400;
/// Soft-max temperatures, in units of `Δt` per step and `T` per pairing.
const COLD_START: [f64; 3] = [0.1, 0.01, 0.001];
const WARM_START: [f64; 2] = [0.003, 0.001];
const LBFGS_ITERS: u64 = 100;
const LBFGS_MEMORY: usize = 12;

/// How the source law of the controlled walk is chosen.
#[derive(Clone, Copy)]
enum Source<'a> {
    Fixed(&'a [f64]),
    /// Costate atoms paired with nodes by `min_i v x_i - Ψ⁰(i)`.
    Paired {
        costates: &'a [f64],
        weights: &'a [f64],
    },
}

struct Objective<'a> {
    dp: &'a Dp,
    source: Source<'a>,
    target: &'a [f64],
}

struct Eval {
    value: f64,
    /// `ν_T - law_T`, a supergradient in the potential.
    grad: Vec<f64>,
    start: Vec<f64>,
    outcome: PolicyOutcome,
}

impl Objective<'_> {
    /// Dual value at potential `f`; exact for `eta = None`, soft otherwise.
    fn eval(&self, f: &[f64], eta: Option<f64>) -> Eval {
        let lat = &self.dp.lattice;
        let eps = eta.map(|e| e * lat.dt());
        let sweep = self.dp.backward(f, eps);
        let psi0 = &sweep.values[0];
        let (start, source_term) = match self.source {
            Source::Fixed(nu0) => (nu0.to_vec(), -dot(nu0, psi0)),
            Source::Paired { costates, weights } => {
                let tau = eta.map(|e| e * lat.horizon);
                let mut start = vec![0.0; lat.nodes];
                let mut term = 0.0;
                for (&v, &w) in costates.iter().zip(weights) {
                    let h: Vec<f64> = (0..lat.nodes).map(|i| v * lat.node(i) - psi0[i]).collect();
                    let low = h.iter().copied().fold(f64::INFINITY, f64::min);
                    match tau {
                        None => {
                            let i = h.iter().position(|&x| x == low).unwrap_or(0);
                            start[i] += w;
                            term += w * low;
                        }
                        Some(tau) => {
                            let e: Vec<f64> = h.iter().map(|x| (-(x - low) / tau).exp()).collect();
                            let z: f64 = e.iter().sum();
                            for (s, ei) in start.iter_mut().zip(&e) {
                                *s += w * ei / z;
                            }
                            term += w * (low - tau * z.ln());
                        }
                    }
                }
                (start, term)
            }
        };
        let outcome = self.dp.forward(&sweep, &start);
        let value = dot(f, self.target) + source_term;
        let grad = self.target.iter().zip(&outcome.law).map(|(t, l)| t - l).collect();
        Eval { value, grad, start, outcome }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l1(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

/// Negated soft objective for the minimizer, caching the last evaluation.
struct Smoothed<'a> {
    obj: &'a Objective<'a>,
    eta: f64,
    last: RefCell<Option<(Vec<f64>, f64, Vec<f64>)>>,
}

impl Smoothed<'_> {
    fn eval(&self, p: &[f64]) -> (f64, Vec<f64>) {
        if let Some((q, v, g)) = self.last.borrow().as_ref() {
            if q.as_slice() == p {
                return (*v, g.clone());
            }
        }
        let e = self.obj.eval(p, Some(self.eta));
        let g: Vec<f64> = e.grad.iter().map(|x| -x).collect();
        *self.last.borrow_mut() = Some((p.to_vec(), -e.value, g.clone()));
        (-e.value, g)
    }
}

impl CostFunction for Smoothed<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.eval(p).0)
    }
}

impl Gradient for Smoothed<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, p: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        Ok(self.eval(p).1)
    }
}

struct Ascent {
    best: Vec<f64>,
    best_value: f64,
    /// Potential reached at the coldest temperature, and that temperature.
    last: Vec<f64>,
    last_eta: f64,
    stages: usize,
}

/// Smoothed continuation; the best point is chosen by the exact value.
fn ascend(obj: &Objective, start: Vec<f64>, etas: &[f64]) -> Result<Ascent> {
    let mut best_value = obj.eval(&start, None).value;
    let mut best = start.clone();
    let mut x = start;
    for &eta in etas {
        let problem = Smoothed { obj, eta, last: RefCell::new(None) };
        let solver = LBFGS::new(MoreThuenteLineSearch::new(), LBFGS_MEMORY)
            .with_tolerance_grad(1e-10)
            .map_err(|e| Error::SolverFailure(e.to_string()))?
            .with_tolerance_cost(1e-13)
            .map_err(|e| Error::SolverFailure(e.to_string()))?;
        let run = Executor::new(problem, solver).configure(|s| s.param(x.clone()).max_iters(LBFGS_ITERS)).run();
        // A failed line search still leaves a usable iterate.
        if let Ok(res) = run {
            if let Some(p) = res.state.best_param {
                x = p;
            }
        }
        let v = obj.eval(&x, None).value;
        if v > best_value {
            best_value = v;
            best = x.clone();
        }
    }
    Ok(Ascent { best, best_value, last: x, last_eta: *etas.last().unwrap_or(&0.0), stages: etas.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MtMethod {
    /// The zero-drift walk already reaches `ν_T` at the least possible cost.
    IdlePolicy,
    CuttingPlane,
    SmoothedAscent,
}

/// Value of `sup_f Σ f ν_T - Σ Ψ⁰_f ν₀` with its potential.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MtCost {
    /// Exact dual value at `potential`: a lower bound on the lattice cost.
    pub value: f64,
    pub potential: Vec<f64>,
    /// Cost of an explicit policy whose terminal law matches `ν_T` within
    /// [`MARGINAL_TOL`], or the cutting-plane upper bound.
    pub upper: Option<f64>,
    /// `‖ν_T - law_T‖₁` for the argmax policy of `potential`.
    pub supergradient_norm: f64,
    pub method: MtMethod,
    pub certified: bool,
}

fn check_law(w: &[f64], n: usize, name: &str) -> Result<()> {
    if w.len() != n {
        return Err(Error::invalid(format!("{name} has {} weights for {n} nodes", w.len())));
    }
    if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::invalid(format!("{name} has negative or non-finite weights")));
    }
    if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("{name} is not a probability vector")));
    }
    Ok(())
}

/// Stochastic transport cost between two measures on lattice nodes.
pub fn mt_cost(
    l: &LagrangianSpec,
    nu0: &DiscreteMeasure,
    nu_t: &DiscreteMeasure,
    lattice: &WalkLattice,
    controls: &ControlSet,
) -> Result<MtCost> {
    let a = lattice.node_weights(nu0)?;
    let b = lattice.node_weights(nu_t)?;
    mt_cost_nodes(l, &a, &b, lattice, controls, None)
}

/// [`mt_cost`] on node weights, optionally warm-started from a potential.
pub fn mt_cost_nodes(
    l: &LagrangianSpec,
    nu0: &[f64],
    nu_t: &[f64],
    lattice: &WalkLattice,
    controls: &ControlSet,
    warm: Option<&[f64]>,
) -> Result<MtCost> {
    check_law(nu0, lattice.nodes, "initial law")?;
    check_law(nu_t, lattice.nodes, "terminal law")?;
    let dp = Dp::new(l, lattice, controls)?;
    if let Some(c) = idle_certificate(l, &dp, controls, nu0, nu_t) {
        return Ok(c);
    }
    let obj = Objective { dp: &dp, source: Source::Fixed(nu0), target: nu_t };
    let (start, etas): (Vec<f64>, &[f64]) = match warm {
        Some(w) if w.len() == lattice.nodes => (w.to_vec(), &WARM_START),
        _ => (vec![0.0; lattice.nodes], &COLD_START),
    };
    let ascent = ascend(&obj, start, etas)?;
    if lattice.nodes <= CUTTING_PLANE_NODES {
        return polish(&obj, &ascent.best);
    }
    let exact = obj.eval(&ascent.best, None);
    let supergradient_norm = l1(&exact.grad);
    let gibbs = obj.eval(&ascent.last, Some(ascent.last_eta));
    let mut upper = (l1(&gibbs.grad) <= MARGINAL_TOL).then_some(gibbs.outcome.cost);
    if supergradient_norm <= MARGINAL_TOL {
        upper = Some(upper.map_or(exact.outcome.cost, |u: f64| u.min(exact.outcome.cost)));
    }
    let value = exact.value;
    let certified = upper.is_some_and(|u| u - value <= MT_TOL * (1.0 + value.abs()));
    Ok(MtCost { value, potential: ascent.best, upper, supergradient_norm, method: MtMethod::SmoothedAscent, certified })
}

/// Exact answer when the zero-drift walk reaches `ν_T` and its cost equals
/// `T · inf L`, which bounds every policy from below.
fn idle_certificate(l: &LagrangianSpec, dp: &Dp, controls: &ControlSet, nu0: &[f64], nu_t: &[f64]) -> Option<MtCost> {
    let zero = controls.values.iter().position(|&b| b == 0.0)?;
    let floor = l.lower_bound.finite()? * dp.lattice.horizon;
    let lat = &dp.lattice;
    let policy = ControlPolicy::from_choice(lat, controls, vec![vec![zero; lat.nodes]; lat.steps]);
    let out = dp.simulate(&policy, nu0);
    let matches = out.law.iter().zip(nu_t).all(|(a, b)| (a - b).abs() <= 1e-13);
    (matches && (out.cost - floor).abs() <= 1e-14 * (1.0 + floor.abs())).then(|| MtCost {
        value: out.cost,
        potential: vec![0.0; lat.nodes],
        upper: Some(out.cost),
        supergradient_norm: l1(&out.law.iter().zip(nu_t).map(|(a, b)| b - a).collect::<Vec<_>>()),
        method: MtMethod::IdlePolicy,
        certified: true,
    })
}

/// Cutting-plane finish from `f0`; the master problem gives the upper bound.
fn polish(obj: &Objective, f0: &[f64]) -> Result<MtCost> {
    let n = f0.len();
    let shift = f0[0];
    let start: Vec<f64> = f0.iter().map(|v| v - shift).collect();
    let radius = 0.01 * start.iter().fold(1.0, |m: f64, v| m.max(v.abs()));
    let res = maximize_concave(n, Some(0), radius, 1e-3 * MT_TOL, MAX_CUTS, start, |f| {
        let e = obj.eval(f, None);
        Ok((e.value, e.grad))
    })?;
    let exact = obj.eval(&res.x, None);
    let certified = res.upper - res.value <= MT_TOL * (1.0 + res.value.abs());
    Ok(MtCost {
        value: res.value,
        potential: res.x,
        upper: res.upper.is_finite().then_some(res.upper),
        supergradient_norm: l1(&exact.grad),
        method: MtMethod::CuttingPlane,
        certified,
    })
}

/// Minimal stochastic ballistic cost with its dual certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StochMin {
    /// `W̲(μ₀, ν*) + C(ν*, ν_T)` at the recovered interpolant.
    pub value: f64,
    /// `Σ f ν_T + Σ (Ψ⁰_f)_* μ₀` at the best potential found.
    pub dual: f64,
    pub gap: f64,
    /// `gap / max(|value|, |dual|)`.
    pub relative_gap: f64,
    /// Interpolant `ν*` as node weights.
    pub interpolant: Vec<f64>,
    pub potential: Vec<f64>,
    pub brenier_part: f64,
    pub transport: MtCost,
    pub stages: usize,
    pub certified: bool,
}

/// `inf_ν W̲(μ₀, ν) + C(ν, ν_T)` for costate atoms `μ₀` and `ν_T` on lattice nodes.
pub fn ballistic_min_stoch(
    l: &LagrangianSpec,
    mu0: &DiscreteMeasure,
    nu_t: &DiscreteMeasure,
    lattice: &WalkLattice,
    controls: &ControlSet,
    rel_tol: f64,
) -> Result<StochMin> {
    let costates = mu0.coords_1d()?;
    let target = lattice.node_weights(nu_t)?;
    check_law(&target, lattice.nodes, "terminal law")?;
    let dp = Dp::new(l, lattice, controls)?;
    let obj = Objective { dp: &dp, source: Source::Paired { costates: &costates, weights: mu0.weights() }, target: &target };
    let ascent = ascend(&obj, vec![0.0; lattice.nodes], &COLD_START)?;
    let soft = obj.eval(&ascent.last, Some(ascent.last_eta));
    let interpolant = soft.start;
    let nu = lattice.measure(&interpolant, Space::State)?;
    let brenier_part = brenier_W(mu0, &nu, Sense::Min)?.value;
    // Same node weights as `nu` after renormalization.
    let nu_nodes = lattice.node_weights(&nu)?;
    let transport = mt_cost_nodes(l, &nu_nodes, &target, lattice, controls, Some(&ascent.best))?;
    let value = brenier_part + transport.value;
    let dual = ascent.best_value.max(obj.eval(&transport.potential, None).value);
    let potential = if dual > ascent.best_value { transport.potential.clone() } else { ascent.best };
    let gap = value - dual;
    let relative_gap = gap / value.abs().max(dual.abs()).max(f64::MIN_POSITIVE);
    let certified = relative_gap <= rel_tol && gap >= -1e-9 * (1.0 + value.abs());
    Ok(StochMin {
        value,
        dual,
        gap,
        relative_gap,
        interpolant: nu_nodes,
        potential,
        brenier_part,
        transport,
        stages: ascent.stages,
        certified,
    })
}

/// `g*(v) = max_j v x_j - g_j` at each `v`, with the maximizing atom.
fn conjugate_on(vs: &[f64], xs: &[f64], g: &[f64]) -> (Vec<f64>, Vec<usize>) {
    vs.iter()
        .map(|&v| {
            let mut best = (f64::NEG_INFINITY, 0);
            for (j, (&x, &gj)) in xs.iter().zip(g).enumerate() {
                let s = v * x - gj;
                if s > best.0 {
                    best = (s, j);
                }
            }
            best
        })
        .unzip()
}

/// Upper bound `Σ g ν_T + Σ Ψ~⁰_{g*} μ₀` on the maximal stochastic cost for
/// one choice of `g` (its values at the atoms of `ν_T`).
pub fn max_dual_bound(
    l: &LagrangianSpec,
    mu0: &DiscreteMeasure,
    nu_t: &DiscreteMeasure,
    lattice: &WalkLattice,
    controls: &ControlSet,
    g: &[f64],
) -> Result<f64> {
    let dual = dual_lagrangian(l)?;
    let start = lattice.node_weights(mu0)?;
    let xs = nu_t.coords_1d()?;
    if g.len() != xs.len() {
        return Err(Error::invalid("g needs one value per atom of the terminal measure"));
    }
    let dp = Dp::new(&dual, lattice, controls)?;
    let (k, _) = conjugate_on(&lattice.points(), &xs, g);
    let sweep = dp.backward(&k, None);
    Ok(dot(g, nu_t.weights()) + dot(&start, &sweep.values[0]))
}

/// Bracket for the maximal stochastic ballistic cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StochMax {
    /// `min_g Σ g ν_T + Σ Ψ~⁰_{g*} μ₀` over the convex `g` tried.
    pub upper: f64,
    /// Best `W̄(law of V_T, ν_T) - E ∫ L~` over the argmax policies of the cuts
    /// and their mixture by the final master weights.
    pub lower: f64,
    pub width: f64,
    /// `width / max(|upper|, |lower|)`.
    pub relative_width: f64,
    /// Values of the best `g` at the atoms of `ν_T`.
    pub g: Vec<f64>,
    /// Terminal costate law of the best explicit policy.
    pub policy_law: Vec<f64>,
    pub cuts: usize,
    pub certified: bool,
}

/// Bracket `[lower, upper]` for `sup E[⟨X, V_T⟩ - ∫ L~(V, β)]` with `V₀ ~ μ₀`
/// on the costate lattice and `X ~ ν_T`.
pub fn ballistic_max_stoch(
    l: &LagrangianSpec,
    mu0: &DiscreteMeasure,
    nu_t: &DiscreteMeasure,
    lattice: &WalkLattice,
    controls: &ControlSet,
    rel_tol: f64,
) -> Result<StochMax> {
    let dual = dual_lagrangian(l)?;
    let start = lattice.node_weights(mu0)?;
    let xs = nu_t.coords_1d()?;
    let wx = nu_t.weights();
    if (wx.iter().sum::<f64>() - 1.0).abs() > MASS_TOL {
        return Err(Error::invalid("terminal measure is not a probability"));
    }
    let dp = Dp::new(&dual, lattice, controls)?;
    let vs = lattice.points();
    let mut outcomes: Vec<PolicyOutcome> = Vec::new();
    let oracle = |g: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (k, arg) = conjugate_on(&vs, &xs, g);
        let sweep = dp.backward(&k, None);
        let upper = dot(g, wx) + dot(&start, &sweep.values[0]);
        let out = dp.forward(&sweep, &start);
        let mut grad: Vec<f64> = wx.iter().map(|w| -w).collect();
        for (i, &m) in out.law.iter().enumerate() {
            grad[arg[i]] += m;
        }
        outcomes.push(out);
        Ok((-upper, grad))
    };
    let scale = vs.iter().fold(0.0, |m: f64, v| m.max(v.abs())) * xs.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
    let res = maximize_concave(xs.len(), Some(0), 2.0 * scale + 1.0, 1e-12, MAX_CUTS, vec![0.0; xs.len()], oracle)?;
    let upper = -res.value;
    let mut lower = f64::NEG_INFINITY;
    let mut policy_law = Vec::new();
    for out in &outcomes {
        let mu = lattice.measure(&out.law, Space::Costate)?;
        let w = solve_transport(&CostMatrix::inner_product(&mu, nu_t)?, mu.weights(), wx, Sense::Max)?.value;
        if w - out.cost > lower {
            lower = w - out.cost;
            policy_law = out.law.clone();
        }
    }
    // The master weights mix the cut policies at time 0 into one randomized policy.
    let total: f64 = res.cut_weights.iter().map(|w| w.max(0.0)).sum();
    if total > 0.0 && res.cut_weights.len() == outcomes.len() {
        let mut law = vec![0.0; lattice.nodes];
        let mut cost = 0.0;
        for (out, w) in outcomes.iter().zip(&res.cut_weights) {
            let w = w.max(0.0) / total;
            if w > 0.0 {
                law.iter_mut().zip(&out.law).for_each(|(a, b)| *a += w * b);
                cost += w * out.cost;
            }
        }
        let mu = lattice.measure(&law, Space::Costate)?;
        let w = solve_transport(&CostMatrix::inner_product(&mu, nu_t)?, mu.weights(), wx, Sense::Max)?.value;
        if w - cost > lower {
            lower = w - cost;
            policy_law = law;
        }
    }
    let width = upper - lower;
    let relative_width = width / upper.abs().max(lower.abs()).max(f64::MIN_POSITIVE);
    Ok(StochMax { upper, lower, width, relative_width, g: res.x, policy_law, cuts: res.iterations, certified: relative_width <= rel_tol })
}
