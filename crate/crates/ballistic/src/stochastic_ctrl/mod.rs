//! Controlled random walks on a 1-d lattice: HJB value functions by backward
//! dynamic programming, the stochastic transport cost, the stochastic
//! ballistic costs and optimal-drift extraction.
//!
//! A step with drift `β` moves the walk by `-Δx, 0, +Δx` with mean `βΔt` and
//! variance `Δt`. Boundaries reflect. With the noise switched off the walk
//! moves deterministically by `βΔt` and values are read by linear interpolation.

mod costs;

pub use costs::*;

use crate::convex_core::{hamiltonian, LagrangianSpec};
use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, Space};
use crate::par::par_map;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Lattices with more node-control pairs than this sweep nodes in parallel.
const PARALLEL_WORK: usize = 1 << 15;
/// Controls per side of zero in the default control set.
pub const DEFAULT_CONTROLS_PER_SIDE: usize = 20;
/// Walk standard deviations of padding added by [`WalkLattice::covering`].
pub const PADDING_SIGMAS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Noise {
    /// Unit diffusion.
    Brownian,
    /// Deterministic transport by the drift.
    Off,
}

/// Uniform 1-d lattice `lo + iΔx`, `i < nodes`, with `steps` time steps on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkLattice {
    pub lo: f64,
    pub dx: f64,
    pub nodes: usize,
    pub horizon: f64,
    pub steps: usize,
    pub noise: Noise,
}

impl WalkLattice {
    pub fn new(lo: f64, hi: f64, nodes: usize, horizon: f64, steps: usize) -> Result<Self> {
        Self::build(lo, hi, nodes, horizon, steps, Noise::Brownian)
    }

    /// Lattice for the deterministic walk; no CFL restriction applies.
    pub fn noiseless(lo: f64, hi: f64, nodes: usize, horizon: f64, steps: usize) -> Result<Self> {
        Self::build(lo, hi, nodes, horizon, steps, Noise::Off)
    }

    fn build(lo: f64, hi: f64, nodes: usize, horizon: f64, steps: usize, noise: Noise) -> Result<Self> {
        if nodes < 3 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("walk lattice needs lo < hi and at least 3 nodes, got [{lo}, {hi}] x {nodes}")));
        }
        if steps == 0 || !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("walk lattice needs T > 0 and K >= 1, got T={horizon}, K={steps}")));
        }
        let lat = WalkLattice { lo, dx: (hi - lo) / (nodes - 1) as f64, nodes, horizon, steps, noise };
        if noise == Noise::Brownian && lat.cfl_ratio() > 1.0 + 1e-12 {
            return Err(Error::invalid(format!("CFL violated: dt/dx^2 = {} > 1 (dt = {}, dx = {})", lat.cfl_ratio(), lat.dt(), lat.dx)));
        }
        Ok(lat)
    }

    /// Lattice with `dt/dx² = ratio` whose nodes include `lo` and cover
    /// `[lo - pad, hi + pad]`, `pad` = [`PADDING_SIGMAS`] walk deviations.
    pub fn covering(lo: f64, hi: f64, horizon: f64, steps: usize, ratio: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::invalid(format!("CFL ratio must lie in (0, 1], got {ratio}")));
        }
        if steps == 0 || !(horizon > 0.0) || !(hi >= lo) {
            return Err(Error::invalid("covering lattice needs T > 0, K >= 1 and lo <= hi"));
        }
        let dx = (horizon / steps as f64 / ratio).sqrt();
        let pad = (PADDING_SIGMAS * horizon.sqrt() / dx).ceil() as usize;
        let span = ((hi - lo) / dx - 1e-9).ceil().max(0.0) as usize;
        let start = lo - pad as f64 * dx;
        let nodes = span + 2 * pad + 1;
        Self::new(start, start + (nodes - 1) as f64 * dx, nodes, horizon, steps)
    }

    /// Same lattice with the noise switched off.
    pub fn without_noise(mut self) -> Self {
        self.noise = Noise::Off;
        self
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn cfl_ratio(&self) -> f64 {
        self.dt() / (self.dx * self.dx)
    }

    pub fn node(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.dx
    }

    pub fn hi(&self) -> f64 {
        self.node(self.nodes - 1)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.nodes).map(|i| self.node(i)).collect()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Index of the node within `1e-9 Δx` of `x`.
    pub fn node_index(&self, x: f64) -> Option<usize> {
        let s = (x - self.lo) / self.dx;
        let i = s.round();
        ((s - i).abs() <= 1e-9 && i >= 0.0 && (i as usize) < self.nodes).then_some(i as usize)
    }

    /// Node weights of a 1-d measure whose atoms sit on nodes.
    pub fn node_weights(&self, m: &DiscreteMeasure) -> Result<Vec<f64>> {
        let mut w = vec![0.0; self.nodes];
        for (a, &p) in m.coords_1d()?.iter().zip(m.weights()) {
            let i = self.node_index(*a).ok_or_else(|| Error::invalid(format!("atom {a} is not a lattice node")))?;
            w[i] += p;
        }
        Ok(w)
    }

    /// Measure with the given node weights; zero weights are dropped.
    pub fn measure(&self, weights: &[f64], space: Space) -> Result<DiscreteMeasure> {
        let (xs, ws): (Vec<f64>, Vec<f64>) = weights.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(i, &w)| (self.node(i), w)).unzip();
        let total: f64 = ws.iter().sum();
        let ws: Vec<f64> = ws.iter().map(|w| w / total).collect();
        DiscreteMeasure::on_line(&xs, &ws, space)
    }

    fn reflect(&self, j: isize) -> usize {
        let last = self.nodes as isize - 1;
        let period = 2 * last;
        let mut j = j.rem_euclid(period);
        if j > last {
            j = period - j;
        }
        j as usize
    }

    /// Moves of one step as `(offset, probability)`.
    fn moves(&self, beta: f64) -> Result<Vec<(isize, f64)>> {
        let dt = self.dt();
        match self.noise {
            Noise::Brownian => {
                let r = self.cfl_ratio();
                let spread = r * (1.0 + beta * beta * dt);
                let tilt = beta * r * self.dx;
                let (down, up) = (0.5 * (spread - tilt), 0.5 * (spread + tilt));
                let stay = 1.0 - spread;
                if down < -1e-15 || stay < -1e-12 {
                    return Err(Error::invalid(format!(
                        "drift {beta} gives invalid walk probabilities (dt = {dt}, dx = {}); largest valid |drift| is {}",
                        self.dx,
                        self.drift_limit()
                    )));
                }
                Ok(vec![(-1, down.max(0.0)), (0, stay.max(0.0)), (1, up)])
            }
            Noise::Off => {
                let s = beta * dt / self.dx;
                let o = s.floor();
                let frac = s - o;
                Ok(vec![(o as isize, 1.0 - frac), (o as isize + 1, frac)])
            }
        }
    }

    /// Largest `b` such that every drift in `[-b, b]` gives valid probabilities.
    pub fn drift_limit(&self) -> f64 {
        if self.noise == Noise::Off {
            return f64::INFINITY;
        }
        let (r, dt) = (self.cfl_ratio(), self.dt());
        let mut limit = ((1.0 / r - 1.0).max(0.0) / dt).sqrt();
        if r < 0.25 {
            // Below 1/4 the down-probability vanishes between the roots of dt b² - dx b + 1.
            let disc = (self.dx * self.dx - 4.0 * dt).sqrt();
            limit = limit.min((self.dx - disc) / (2.0 * dt));
        }
        limit
    }
}

/// Finite drift set `{-b_max, ..., b_max}` with uniform step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSet {
    pub values: Vec<f64>,
    /// Set when the requested bound was reduced to the lattice's drift limit.
    pub clipped: bool,
}

impl ControlSet {
    /// `2 per_side + 1` drifts spaced `b_max / per_side`.
    pub fn uniform(b_max: f64, per_side: usize) -> Result<Self> {
        if !(b_max >= 0.0 && b_max.is_finite()) {
            return Err(Error::invalid(format!("b_max must be finite and nonnegative, got {b_max}")));
        }
        if per_side == 0 || b_max == 0.0 {
            return Ok(ControlSet { values: vec![0.0], clipped: false });
        }
        let db = b_max / per_side as f64;
        let values = (-(per_side as isize)..=per_side as isize).map(|k| k as f64 * db).collect();
        Ok(ControlSet { values, clipped: false })
    }

    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("control set is empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("control values must be finite"));
        }
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(ControlSet { values, clipped: false })
    }

    /// `b_max = 4 (max |v| + diameter / T)`, reduced to the lattice's drift
    /// limit when larger; the reduction is recorded in `clipped`.
    pub fn default_for(lattice: &WalkLattice, max_costate: f64) -> Result<Self> {
        let wanted = 4.0 * (max_costate.abs() + (lattice.hi() - lattice.lo) / lattice.horizon);
        let limit = lattice.drift_limit() * (1.0 - 1e-9);
        let mut set = Self::uniform(wanted.min(limit), DEFAULT_CONTROLS_PER_SIDE)?;
        set.clipped = wanted > limit;
        Ok(set)
    }

    pub fn b_max(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest gap between consecutive drifts; 0 for a single drift.
    pub fn step(&self) -> f64 {
        self.values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueEquation {
    /// `∂ψ + Δψ/2 + H(x, ∇ψ) = 0`, value of the controlled walk in state space.
    Hjb,
    /// `∂ψ + Δψ/2 - H(∇ψ, v) = 0`, the same recursion for the dual Lagrangian in costate space.
    Hjb2,
}

/// Value function per time slice `k = 0..=K` and node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeValueField {
    pub lattice: WalkLattice,
    pub controls: ControlSet,
    pub tag: ValueEquation,
    pub values: Vec<Vec<f64>>,
}

impl LatticeValueField {
    pub fn initial(&self) -> &[f64] {
        &self.values[0]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x,value\n");
        for (k, slice) in self.values.iter().enumerate() {
            let t = self.lattice.time(k);
            for (i, v) in slice.iter().enumerate() {
                let _ = writeln!(s, "{t},{},{v}", self.lattice.node(i));
            }
        }
        s
    }
}

/// Feedback drift per step `k < K` and node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPolicy {
    pub lattice: WalkLattice,
    pub controls: ControlSet,
    /// Index into `controls.values`.
    pub choice: Vec<Vec<usize>>,
    /// The chosen drift is `±b_max` while `b_max > 0`.
    pub at_bound: Vec<Vec<bool>>,
    pub bound_hits: usize,
    /// Largest `|β* - ∂H/∂q(x, D ψ)|` over interior nodes off the bound,
    /// with `D ψ` the central difference of the next slice.
    pub consistency_residual: f64,
}

impl ControlPolicy {
    pub fn constant(lattice: &WalkLattice, controls: &ControlSet, beta: f64) -> Result<Self> {
        let m = controls
            .values
            .iter()
            .position(|&b| (b - beta).abs() <= 1e-9 * (1.0 + beta.abs()))
            .ok_or_else(|| Error::invalid(format!("drift {beta} is not in the control set")))?;
        Ok(Self::from_choice(lattice, controls, vec![vec![m; lattice.nodes]; lattice.steps]))
    }

    pub fn from_choice(lattice: &WalkLattice, controls: &ControlSet, choice: Vec<Vec<usize>>) -> Self {
        let last = controls.len() - 1;
        let bounded = controls.b_max() > 0.0;
        let at_bound: Vec<Vec<bool>> = choice.iter().map(|row| row.iter().map(|&m| bounded && (m == 0 || m == last)).collect()).collect();
        let bound_hits = at_bound.iter().flatten().filter(|&&b| b).count();
        ControlPolicy { lattice: lattice.clone(), controls: controls.clone(), choice, at_bound, bound_hits, consistency_residual: 0.0 }
    }

    pub fn drift(&self, k: usize, i: usize) -> f64 {
        self.controls.values[self.choice[k][i]]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x,drift,at_bound\n");
        for k in 0..self.choice.len() {
            for i in 0..self.lattice.nodes {
                let _ = writeln!(s, "{},{},{},{}", self.lattice.time(k), self.lattice.node(i), self.drift(k, i), self.at_bound[k][i]);
            }
        }
        s
    }
}

/// Terminal law and expected running cost of a walk under a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutcome {
    pub law: Vec<f64>,
    pub cost: f64,
}

pub(crate) enum Choice {
    /// Maximizing control per node.
    Hard(Vec<usize>),
    /// Gibbs weights, row-major by node.
    Soft(Vec<f64>),
}

/// Value slices of a backward sweep with the choice made at each step.
pub(crate) struct Sweep {
    pub(crate) values: Vec<Vec<f64>>,
    pub(crate) choice: Vec<Choice>,
}

/// Transition kernel and running-cost table shared by the sweeps.
pub(crate) struct Dp {
    pub(crate) lattice: WalkLattice,
    nodes: usize,
    controls: usize,
    moves: Vec<Vec<(isize, f64)>>,
    /// `L(x_i, β_m) Δt`, row-major by node; `+inf` marks inadmissible drifts.
    cost: Vec<f64>,
}

impl Dp {
    pub(crate) fn new(l: &LagrangianSpec, lattice: &WalkLattice, controls: &ControlSet) -> Result<Self> {
        if l.dim != 1 {
            return Err(Error::Unsupported("walk lattices are one-dimensional".into()));
        }
        if controls.is_empty() {
            return Err(Error::invalid("control set is empty"));
        }
        if lattice.noise == Noise::Brownian && lattice.cfl_ratio() > 1.0 + 1e-12 {
            return Err(Error::invalid(format!("CFL violated: dt/dx^2 = {}", lattice.cfl_ratio())));
        }
        let moves = controls.values.iter().map(|&b| lattice.moves(b)).collect::<Result<Vec<_>>>()?;
        let dt = lattice.dt();
        let mut cost = Vec::with_capacity(lattice.nodes * controls.len());
        for i in 0..lattice.nodes {
            let x = lattice.node(i);
            let mut any = false;
            for &b in &controls.values {
                let c = l.eval(&[x], &[b]).to_f64();
                if c == f64::NEG_INFINITY || c.is_nan() {
                    return Err(Error::invalid(format!("running cost undefined at x={x}, drift={b}")));
                }
                any |= c.is_finite();
                cost.push(c * dt);
            }
            if !any {
                return Err(Error::invalid(format!("no drift in the control set has finite cost at x={x}")));
            }
        }
        Ok(Dp { lattice: lattice.clone(), nodes: lattice.nodes, controls: controls.len(), moves, cost })
    }

    #[inline]
    fn q(&self, next: &[f64], i: usize, m: usize) -> f64 {
        let c = self.cost[i * self.controls + m];
        if c == f64::INFINITY {
            return f64::NEG_INFINITY;
        }
        let mut e = 0.0;
        for &(o, p) in &self.moves[m] {
            if p != 0.0 {
                e += p * next[self.lattice.reflect(i as isize + o)];
            }
        }
        e - c
    }

    /// Best value and lowest maximizing control at node `i`.
    fn hard(&self, next: &[f64], i: usize) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for m in 0..self.controls {
            let q = self.q(next, i, m);
            if q > best.0 {
                best = (q, m);
            }
        }
        best
    }

    /// `ε log Σ exp(q/ε)`, with the Gibbs weights written to `w`.
    fn soft(&self, next: &[f64], i: usize, eps: f64, w: &mut [f64]) -> f64 {
        let mut top = f64::NEG_INFINITY;
        for m in 0..self.controls {
            w[m] = self.q(next, i, m);
            top = top.max(w[m]);
        }
        let mut z = 0.0;
        for wm in w.iter_mut() {
            *wm = ((*wm - top) / eps).exp();
            z += *wm;
        }
        for wm in w.iter_mut() {
            *wm /= z;
        }
        top + eps * z.ln()
    }

    /// Slices `0..=K` and the per-step choice; `temp = Some(ε)` replaces the
    /// max by a soft max whose Gibbs weights are kept.
    pub(crate) fn backward(&self, terminal: &[f64], temp: Option<f64>) -> Sweep {
        let k_steps = self.lattice.steps;
        let mut values = vec![Vec::new(); k_steps + 1];
        values[k_steps] = terminal.to_vec();
        let mut choice = Vec::with_capacity(k_steps);
        let parallel = self.nodes * self.controls >= PARALLEL_WORK;
        for k in (0..k_steps).rev() {
            let next = &values[k + 1];
            match temp {
                None => {
                    let node = |i: usize| self.hard(next, i);
                    let best: Vec<(f64, usize)> = if parallel { par_map(self.nodes, node) } else { (0..self.nodes).map(node).collect() };
                    let (v, m): (Vec<f64>, Vec<usize>) = best.into_iter().unzip();
                    values[k] = v;
                    choice.push(Choice::Hard(m));
                }
                Some(eps) => {
                    let node = |i: usize| {
                        let mut w = vec![0.0; self.controls];
                        let v = self.soft(next, i, eps, &mut w);
                        (v, w)
                    };
                    let rows: Vec<(f64, Vec<f64>)> = if parallel { par_map(self.nodes, node) } else { (0..self.nodes).map(node).collect() };
                    let mut v = Vec::with_capacity(self.nodes);
                    let mut w = Vec::with_capacity(self.nodes * self.controls);
                    for (vi, wi) in rows {
                        v.push(vi);
                        w.extend(wi);
                    }
                    values[k] = v;
                    choice.push(Choice::Soft(w));
                }
            }
        }
        choice.reverse();
        Sweep { values, choice }
    }

    /// Pushes `start` forward under the choices of a sweep.
    pub(crate) fn forward(&self, sweep: &Sweep, start: &[f64]) -> PolicyOutcome {
        let mut law = start.to_vec();
        let mut cost = 0.0;
        for step in &sweep.choice {
            let mut new = vec![0.0; self.nodes];
            for i in 0..self.nodes {
                let mass = law[i];
                if mass == 0.0 {
                    continue;
                }
                match step {
                    Choice::Hard(m) => self.push(i, m[i], mass, &mut new, &mut cost),
                    Choice::Soft(w) => {
                        for (m, &wm) in w[i * self.controls..(i + 1) * self.controls].iter().enumerate() {
                            if wm > 0.0 {
                                self.push(i, m, mass * wm, &mut new, &mut cost);
                            }
                        }
                    }
                }
            }
            law = new;
        }
        PolicyOutcome { law, cost }
    }

    fn push(&self, i: usize, m: usize, mass: f64, new: &mut [f64], cost: &mut f64) {
        *cost += mass * self.cost[i * self.controls + m];
        for &(o, p) in &self.moves[m] {
            new[self.lattice.reflect(i as isize + o)] += mass * p;
        }
    }

    pub(crate) fn simulate(&self, policy: &ControlPolicy, start: &[f64]) -> PolicyOutcome {
        let mut law = start.to_vec();
        let mut cost = 0.0;
        for row in &policy.choice {
            let mut new = vec![0.0; self.nodes];
            for i in 0..self.nodes {
                if law[i] != 0.0 {
                    self.push(i, row[i], law[i], &mut new, &mut cost);
                }
            }
            law = new;
        }
        PolicyOutcome { law, cost }
    }
}

fn check_terminal(terminal: &[f64], lattice: &WalkLattice) -> Result<()> {
    if terminal.len() != lattice.nodes {
        return Err(Error::invalid(format!("terminal data has {} values for {} nodes", terminal.len(), lattice.nodes)));
    }
    if terminal.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("terminal data must be finite"));
    }
    Ok(())
}

fn sweep(
    l: &LagrangianSpec,
    terminal: &[f64],
    lattice: &WalkLattice,
    controls: &ControlSet,
    tag: ValueEquation,
) -> Result<LatticeValueField> {
    check_terminal(terminal, lattice)?;
    let dp = Dp::new(l, lattice, controls)?;
    Ok(LatticeValueField { lattice: lattice.clone(), controls: controls.clone(), tag, values: dp.backward(terminal, None).values })
}

/// `Ψ(t - Δt, x_i) = max_β E[Ψ(t, X')] - L(x_i, β) Δt` with `Ψ(T) = f`.
pub fn hjb_backward(l: &LagrangianSpec, terminal: &[f64], lattice: &WalkLattice, controls: &ControlSet) -> Result<LatticeValueField> {
    sweep(l, terminal, lattice, controls, ValueEquation::Hjb)
}

/// The same recursion in costate space for the dual Lagrangian, `Ψ~(T) = k`.
pub fn hjb2_backward(dual: &LagrangianSpec, terminal: &[f64], lattice: &WalkLattice, controls: &ControlSet) -> Result<LatticeValueField> {
    sweep(dual, terminal, lattice, controls, ValueEquation::Hjb2)
}

/// Terminal law and expected running cost of `policy` started from `start` (node weights).
pub fn simulate_policy(l: &LagrangianSpec, policy: &ControlPolicy, start: &[f64]) -> Result<PolicyOutcome> {
    if start.len() != policy.lattice.nodes {
        return Err(Error::invalid("start law does not match the lattice"));
    }
    let dp = Dp::new(l, &policy.lattice, &policy.controls)?;
    Ok(dp.simulate(policy, start))
}

/// Argmax drift of each DP step of `field`, with the bound flag and the
/// consistency residual against `∂H/∂q`.
pub fn extract_drift(field: &LatticeValueField, l: &LagrangianSpec) -> Result<ControlPolicy> {
    let lat = &field.lattice;
    let dp = Dp::new(l, lat, &field.controls)?;
    let h = hamiltonian(l)?;
    let choice: Vec<Vec<usize>> = (0..lat.steps).map(|k| (0..lat.nodes).map(|i| dp.hard(&field.values[k + 1], i).1).collect()).collect();
    let mut policy = ControlPolicy::from_choice(lat, &field.controls, choice);
    let mut residual: f64 = 0.0;
    for k in 0..lat.steps {
        let next = &field.values[k + 1];
        for i in 2..lat.nodes.saturating_sub(2) {
            if policy.at_bound[k][i] {
                continue;
            }
            let grad = (next[i + 1] - next[i - 1]) / (2.0 * lat.dx);
            let want = h.grad_q(&[lat.node(i)], &[grad])[0];
            residual = residual.max((policy.drift(k, i) - want).abs());
        }
    }
    policy.consistency_residual = residual;
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice() -> WalkLattice {
        WalkLattice::covering(-1.0, 1.0, 1.0, 50, 0.5).unwrap()
    }

    #[test]
    fn cfl_and_empty_controls_are_rejected() {
        assert!(WalkLattice::new(0.0, 1.0, 11, 1.0, 10).is_err());
        assert!(WalkLattice::new(0.0, 1.0, 11, 1.0, 100).is_ok());
        assert!(ControlSet::from_values(vec![]).is_err());
        let l = LagrangianSpec::quadratic_free(1);
        let lat = lattice();
        let bad = ControlSet::from_values(vec![0.0, 1e3]).unwrap();
        assert!(hjb_backward(&l, &vec![0.0; lat.nodes], &lat, &bad).is_err());
    }

    #[test]
    fn walk_step_matches_mean_and_variance() {
        let lat = lattice();
        for b in [-2.0, 0.0, 0.7, 3.0] {
            let mv = lat.moves(b).unwrap();
            let mean: f64 = mv.iter().map(|&(o, p)| p * o as f64 * lat.dx).sum();
            let second: f64 = mv.iter().map(|&(o, p)| p * (o as f64 * lat.dx).powi(2)).sum();
            let total: f64 = mv.iter().map(|m| m.1).sum();
            assert!((total - 1.0).abs() < 1e-15);
            assert!((mean - b * lat.dt()).abs() < 1e-15);
            assert!((second - mean * mean - lat.dt()).abs() < 1e-15);
        }
    }

    #[test]
    fn default_controls_respect_the_drift_limit() {
        let lat = lattice();
        let c = ControlSet::default_for(&lat, 1.0).unwrap();
        assert!(c.clipped);
        assert!(c.values.iter().all(|&b| lat.moves(b).is_ok()));
        assert_eq!(c.len(), 2 * DEFAULT_CONTROLS_PER_SIDE + 1);
    }

    #[test]
    fn constant_terminal_stays_constant() {
        let l = LagrangianSpec::quadratic_free(1);
        let lat = lattice();
        let c = ControlSet::uniform(2.0, 8).unwrap();
        let field = hjb_backward(&l, &vec![1.25; lat.nodes], &lat, &c).unwrap();
        assert!(field.values.iter().flatten().all(|&v| v == 1.25));
        let policy = extract_drift(&field, &l).unwrap();
        assert!(policy.choice.iter().flatten().all(|&m| c.values[m] == 0.0));
        assert_eq!(policy.bound_hits, 0);
    }

    #[test]
    fn reflection_keeps_mass() {
        let l = LagrangianSpec::quadratic_free(1);
        let lat = WalkLattice::new(0.0, 1.0, 5, 0.5, 16).unwrap();
        let c = ControlSet::uniform(1.0, 1).unwrap();
        let policy = ControlPolicy::constant(&lat, &c, 1.0).unwrap();
        let out = simulate_policy(&l, &policy, &[0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((out.law.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((out.cost - 0.5 * 0.5).abs() < 1e-14);
        assert_eq!(lat.reflect(-1), 1);
        assert_eq!(lat.reflect(5), 3);
        assert_eq!(lat.reflect(-9), 1);
    }

    #[test]
    fn noiseless_walk_translates() {
        let l = LagrangianSpec::quadratic_free(1);
        let lat = WalkLattice::noiseless(-2.0, 2.0, 41, 1.0, 10).unwrap();
        let c = ControlSet::uniform(1.0, 2).unwrap();
        let policy = ControlPolicy::constant(&lat, &c, 1.0).unwrap();
        let mut start = vec![0.0; 41];
        start[20] = 1.0;
        let out = simulate_policy(&l, &policy, &start).unwrap();
        // One node per step.
        assert!((out.law[30] - 1.0).abs() < 1e-9, "{:?}", out.law);
    }
}
