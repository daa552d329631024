//! Dynamic costs (fixed-end, ballistic, dual fixed-end), Hamiltonian flows and
//! Hopf-Lax value functions by direct grid extremization.

use crate::convex_core::{golden_min, ConvexFunctionSamples, ConvexProfile, HamiltonianSpec, LagrangianSpec};
use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::lattice::{dot, linspace, norm, Lattice};
use crate::linalg::BandMatrix;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Path refinement stops once the value moves less than this between doublings.
pub const PATH_TOL: f64 = 1e-5;
pub const PATH_MIN_SEGMENTS: usize = 32;
pub const PATH_MAX_SEGMENTS: usize = 1024;
/// Search boxes double at most this many times before a minimizer is declared pinned.
pub const MAX_EXPANSIONS: usize = 4;

// Three-point Gauss-Legendre on [0, 1]; exact for the quadratic and quartic potentials.
const GL_NODES: [f64; 3] = [0.112_701_665_379_258_3, 0.5, 0.887_298_334_620_741_7];
const GL_WEIGHTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PathKind {
    /// No state dependence: straight lines are optimal.
    Jensen,
    /// Only zero velocity has finite cost.
    Pinned,
    Newton,
}

fn path_kind(l: &LagrangianSpec) -> Result<PathKind> {
    if l.velocity_pinned() {
        return Ok(PathKind::Pinned);
    }
    if matches!(l.state_part(), ConvexProfile::Zero) {
        return Ok(PathKind::Jensen);
    }
    let smooth = |p: &ConvexProfile| matches!(p, ConvexProfile::Zero | ConvexProfile::Quadratic { .. } | ConvexProfile::Power { .. });
    if smooth(l.state_part()) && smooth(l.kinetic_part()) && !matches!(l.kinetic_part(), ConvexProfile::Zero) {
        Ok(PathKind::Newton)
    } else {
        Err(Error::Unsupported(format!("path optimization for {:?}", l.family)))
    }
}

/// Whether `fixed_end_cost` is evaluated in closed form rather than by path refinement.
pub fn costs_are_exact(l: &LagrangianSpec) -> bool {
    matches!(path_kind(l), Ok(PathKind::Jensen | PathKind::Pinned))
}

/// Optimal discrete path between two points.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSolution {
    pub value: ExtReal,
    pub path: Vec<Vec<f64>>,
    /// `∂_p L` at the start and end; `None` where the cost is not differentiable.
    pub start_momentum: Option<Vec<f64>>,
    pub end_momentum: Option<Vec<f64>>,
    pub segments: usize,
    pub converged: bool,
}

fn check_points(l: &LagrangianSpec, pts: &[&[f64]]) -> Result<()> {
    for p in pts {
        if p.len() != l.dim {
            return Err(Error::invalid(format!("point has dimension {}, Lagrangian has {}", p.len(), l.dim)));
        }
        if p.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite coordinates"));
        }
    }
    Ok(())
}

fn straight(y: &[f64], x: &[f64], n: usize) -> Vec<Vec<f64>> {
    (0..=n)
        .map(|k| {
            let s = k as f64 / n as f64;
            y.iter().zip(x).map(|(a, b)| a + s * (b - a)).collect()
        })
        .collect()
}

/// `c_T(y, x)` with its minimizing path.
pub fn fixed_end_path(l: &LagrangianSpec, y: &[f64], x: &[f64], t: f64) -> Result<PathSolution> {
    check_points(l, &[y, x])?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("horizon must be positive, got {t}")));
    }
    match path_kind(l)? {
        PathKind::Jensen => {
            let kin = l.kinetic_part();
            if !kin.is_convex() {
                return Err(Error::SolverFailure("tabulated kinetic term is not convex".into()));
            }
            let p: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - b) / t).collect();
            let value = kin.eval(&p).scale(t);
            let m = value.is_finite().then(|| kin.grad(&p));
            Ok(PathSolution { value, path: straight(y, x, 1), start_momentum: m.clone(), end_momentum: m, segments: 1, converged: true })
        }
        PathKind::Pinned => {
            let value = if y == x { l.state_part().eval(y).scale(t) } else { ExtReal::PosInf };
            Ok(PathSolution {
                value,
                path: vec![y.to_vec(), x.to_vec()],
                start_momentum: None,
                end_momentum: None,
                segments: 1,
                converged: true,
            })
        }
        PathKind::Newton => {
            let (value, path, n, converged) = refine(l, End::Fixed(y.to_vec()), x, t, straight(y, x, PATH_MIN_SEGMENTS))?;
            let h = t / n as f64;
            let (ga, _) = end_gradients(l, &path[0], &path[1], h);
            let (_, gb) = end_gradients(l, &path[n - 1], &path[n], h);
            Ok(PathSolution {
                value: ExtReal::Finite(value),
                path,
                start_momentum: Some(ga.iter().map(|g| -g).collect()),
                end_momentum: Some(gb),
                segments: n,
                converged,
            })
        }
    }
}

pub fn fixed_end_cost(l: &LagrangianSpec, y: &[f64], x: &[f64], t: f64) -> Result<ExtReal> {
    if t > 0.0 && l.dim == y.len() && matches!(l.family, crate::convex_core::Family::QuadraticFree) {
        check_points(l, &[y, x])?;
        let d2: f64 = y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        return Ok(ExtReal::Finite(d2 / (2.0 * t)));
    }
    Ok(fixed_end_path(l, y, x, t)?.value)
}

/// `c~_T(u, v)`: the fixed-end cost of the dual Lagrangian on costate space.
pub fn dual_fixed_end_cost(dual: &LagrangianSpec, u: &[f64], v: &[f64], t: f64) -> Result<ExtReal> {
    fixed_end_cost(dual, u, v, t)
}

#[derive(Debug, Clone)]
enum End {
    Fixed(Vec<f64>),
    /// Free endpoint with the linear term `⟨c, x_0⟩` added to the objective.
    Linear(Vec<f64>),
}

fn segment_value(l: &LagrangianSpec, a: &[f64], b: &[f64], h: f64, z: &mut [f64]) -> f64 {
    let d = a.len();
    let mut pot = 0.0;
    for g in 0..3 {
        for c in 0..d {
            z[c] = a[c] + GL_NODES[g] * (b[c] - a[c]);
        }
        pot += GL_WEIGHTS[g] * l.state_part().eval(z).to_f64();
    }
    for c in 0..d {
        z[c] = (b[c] - a[c]) / h;
    }
    h * pot + h * l.kinetic_part().eval(z).to_f64()
}

/// Adds the segment gradient with respect to `a` and `b` into `ga`, `gb`.
fn segment_grad(l: &LagrangianSpec, a: &[f64], b: &[f64], h: f64, ga: &mut [f64], gb: &mut [f64], z: &mut [f64]) {
    let d = a.len();
    for g in 0..3 {
        let s = GL_NODES[g];
        for c in 0..d {
            z[c] = a[c] + s * (b[c] - a[c]);
        }
        l.state_part().add_grad_scaled(z, h * GL_WEIGHTS[g] * (1.0 - s), ga);
        l.state_part().add_grad_scaled(z, h * GL_WEIGHTS[g] * s, gb);
    }
    for c in 0..d {
        z[c] = (b[c] - a[c]) / h;
    }
    l.kinetic_part().add_grad_scaled(z, -1.0, ga);
    l.kinetic_part().add_grad_scaled(z, 1.0, gb);
}

fn end_gradients(l: &LagrangianSpec, a: &[f64], b: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let d = a.len();
    let (mut ga, mut gb, mut z) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    segment_grad(l, a, b, h, &mut ga, &mut gb, &mut z);
    (ga, gb)
}

/// Hessian blocks `(aa, ab, bb)` of one segment, each `d x d` row-major, written into `out`.
fn segment_hess(l: &LagrangianSpec, a: &[f64], b: &[f64], h: f64, out: &mut [Vec<f64>; 3], z: &mut [f64]) {
    let d = a.len();
    for o in out.iter_mut() {
        o.iter_mut().for_each(|v| *v = 0.0);
    }
    for g in 0..3 {
        let s = GL_NODES[g];
        for c in 0..d {
            z[c] = a[c] + s * (b[c] - a[c]);
        }
        let w = h * GL_WEIGHTS[g];
        l.state_part().add_hess_scaled(z, w * (1.0 - s) * (1.0 - s), &mut out[0]);
        l.state_part().add_hess_scaled(z, w * s * (1.0 - s), &mut out[1]);
        l.state_part().add_hess_scaled(z, w * s * s, &mut out[2]);
    }
    for c in 0..d {
        z[c] = (b[c] - a[c]) / h;
    }
    l.kinetic_part().add_hess_scaled(z, 1.0 / h, &mut out[0]);
    l.kinetic_part().add_hess_scaled(z, -1.0 / h, &mut out[1]);
    l.kinetic_part().add_hess_scaled(z, 1.0 / h, &mut out[2]);
}

fn objective(l: &LagrangianSpec, start: &End, path: &[Vec<f64>], h: f64) -> f64 {
    let mut z = vec![0.0; l.dim];
    let mut v: f64 = path.windows(2).map(|w| segment_value(l, &w[0], &w[1], h, &mut z)).sum();
    if let End::Linear(c) = start {
        v += dot(c, &path[0]);
    }
    v
}

/// Damped Newton on the discrete action with `path[N]` fixed at `x`.
fn newton_path(l: &LagrangianSpec, start: &End, t: f64, mut path: Vec<Vec<f64>>) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = path.len() - 1;
    let d = l.dim;
    let h = t / n as f64;
    let first = match start {
        End::Fixed(_) => 1,
        End::Linear(_) => 0,
    };
    let free = n - first;
    if free == 0 {
        return Ok((objective(l, start, &path, h), path));
    }
    let mut f = objective(l, start, &path, h);
    for _ in 0..100 {
        let mut grad = vec![0.0; free * d];
        let mut hess = BandMatrix::zeros(free * d, 2 * d - 1);
        let (mut ga, mut gb, mut z) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let mut blocks = [vec![0.0; d * d], vec![0.0; d * d], vec![0.0; d * d]];
        for k in 0..n {
            ga.iter_mut().for_each(|v| *v = 0.0);
            gb.iter_mut().for_each(|v| *v = 0.0);
            segment_grad(l, &path[k], &path[k + 1], h, &mut ga, &mut gb, &mut z);
            segment_hess(l, &path[k], &path[k + 1], h, &mut blocks, &mut z);
            let [haa, hab, hbb] = &blocks;
            let ia = (k >= first).then(|| (k - first) * d);
            let ib = (k + 1 < n).then(|| (k + 1 - first) * d);
            for r in 0..d {
                if let Some(ia) = ia {
                    grad[ia + r] += ga[r];
                    for c in 0..=r {
                        hess.add(ia + r, ia + c, haa[r * d + c]);
                    }
                }
                if let Some(ib) = ib {
                    grad[ib + r] += gb[r];
                    for c in 0..=r {
                        hess.add(ib + r, ib + c, hbb[r * d + c]);
                    }
                }
                if let (Some(ia), Some(ib)) = (ia, ib) {
                    for c in 0..d {
                        hess.add(ib + c, ia + r, hab[r * d + c]);
                    }
                }
            }
        }
        if let End::Linear(c) = start {
            for r in 0..d {
                grad[r] += c[r];
            }
        }
        let diag_max = (0..free * d).map(|i| hess.get(i, i).abs()).fold(0.0, f64::max);
        for i in 0..free * d {
            hess.add(i, i, 1e-14 * (1.0 + diag_max));
        }
        let step: Vec<f64> =
            hess.cholesky().map_err(|e| e.context("path action is not convex"))?.solve(&grad).into_iter().map(|s| -s).collect();
        let decrement = -dot(&grad, &step);
        if !(decrement > 1e-26 * (1.0 + f.abs())) {
            return Ok((f, path));
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = path.clone();
            for k in first..n {
                for r in 0..d {
                    trial[k][r] += alpha * step[(k - first) * d + r];
                }
            }
            let ft = objective(l, start, &trial, h);
            if ft.is_finite() && ft <= f - 1e-4 * alpha * decrement {
                accepted = Some((ft, trial));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((ft, trial)) => {
                let converged = (f - ft).abs() <= 1e-15 * (1.0 + f.abs()) && alpha == 1.0;
                f = ft;
                path = trial;
                if converged {
                    return Ok((f, path));
                }
            }
            None => return Ok((f, path)),
        }
    }
    Ok((f, path))
}

fn midpoint_refine(path: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * path.len() - 1);
    for w in path.windows(2) {
        out.push(w[0].clone());
        out.push(w[0].iter().zip(&w[1]).map(|(a, b)| 0.5 * (a + b)).collect());
    }
    out.push(path[path.len() - 1].clone());
    out
}

/// Doubles the segment count until the value settles.
fn refine(l: &LagrangianSpec, start: End, x: &[f64], t: f64, init: Vec<Vec<f64>>) -> Result<(f64, Vec<Vec<f64>>, usize, bool)> {
    let mut path = init;
    let last = path.len() - 1;
    path[last] = x.to_vec();
    if let End::Fixed(y) = &start {
        path[0] = y.clone();
    }
    let mut prev: Option<f64> = None;
    loop {
        let n = path.len() - 1;
        let (v, p) = newton_path(l, &start, t, path)?;
        if !v.is_finite() {
            return Err(Error::NonFiniteState { step: n });
        }
        if let Some(pv) = prev {
            if (v - pv).abs() < PATH_TOL {
                return Ok((v, p, n, true));
            }
        }
        if n >= PATH_MAX_SEGMENTS {
            return Ok((v, p, n, false));
        }
        prev = Some(v);
        path = midpoint_refine(&p);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallisticSolution {
    pub value: ExtReal,
    /// Optimal starting point `y`.
    pub start: Vec<f64>,
    /// `∂_x b_T(v, x)`, the terminal costate, when defined.
    pub end_momentum: Option<Vec<f64>>,
    pub expansions: usize,
}

/// `b_T(v, x) = inf_y ⟨v, y⟩ + c_T(y, x)`.
pub fn ballistic_cost(l: &LagrangianSpec, v: &[f64], x: &[f64], t: f64) -> Result<f64> {
    let s = ballistic_solve(l, v, x, t)?;
    s.value.finite().ok_or_else(|| Error::UnboundedBelow(format!("ballistic cost is {} at v={v:?}, x={x:?}", s.value)))
}

pub fn ballistic_solve(l: &LagrangianSpec, v: &[f64], x: &[f64], t: f64) -> Result<BallisticSolution> {
    check_points(l, &[v, x])?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("horizon must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(BallisticSolution { value: ExtReal::Finite(dot(v, x)), start: x.to_vec(), end_momentum: None, expansions: 0 });
    }
    let kind = path_kind(l)?;
    if kind == PathKind::Pinned {
        let value = l.state_part().eval(x).scale(t).add_f64(dot(v, x));
        return Ok(BallisticSolution { value, start: x.to_vec(), end_momentum: None, expansions: 0 });
    }
    let d = l.dim;
    // Center the search box on the free-flight guess.
    let guess: Vec<f64> = match l.kinetic_part().conjugate() {
        Ok(kc) if kc.eval(v).is_finite() => {
            let g = kc.grad(v);
            x.iter().zip(&g).map(|(a, b)| a - t * b).collect()
        }
        _ => x.to_vec(),
    };
    let coarse = |y: &[f64]| -> Result<ExtReal> {
        let c = match kind {
            PathKind::Jensen => fixed_end_cost(l, y, x, t)?,
            _ => {
                // Coarse paths only bracket the minimizer; the polish below refines.
                let (val, _) = newton_path(l, &End::Fixed(y.to_vec()), t, straight(y, x, 8))?;
                ExtReal::Finite(val)
            }
        };
        Ok(c.add_f64(dot(v, y)))
    };
    let per_axis = if d == 1 { 21 } else { 9 };
    let mut radius = 1.0 + crate::lattice::dist(x, &guess) + t * norm(v);
    let mut expansions = 0;
    let (best_y, cell) = loop {
        let axes: Vec<Vec<f64>> = guess.iter().map(|&c| linspace(c - radius, c + radius, per_axis)).collect();
        let grid = Lattice::new(axes)?;
        let mut best = (ExtReal::PosInf, 0usize);
        for i in 0..grid.len() {
            let val = coarse(&grid.point(i))?;
            if val < best.0 {
                best = (val, i);
            }
        }
        if !best.0.is_finite() {
            return Err(Error::UnboundedBelow("no finite value on the ballistic search grid".into()));
        }
        if !grid.is_boundary(best.1) {
            break (grid.point(best.1), 2.0 * radius / (per_axis - 1) as f64);
        }
        if expansions == MAX_EXPANSIONS {
            return Err(Error::UnboundedBelow(format!(
                "ballistic minimizer pinned to the search box of radius {radius} at v={v:?}, x={x:?}"
            )));
        }
        radius *= 2.0;
        expansions += 1;
    };
    match kind {
        PathKind::Jensen => {
            let phi = |y: &[f64]| -> f64 { coarse(y).map(|e| e.to_f64()).unwrap_or(f64::INFINITY) };
            let mut y = best_y;
            for _ in 0..if d == 1 { 1 } else { 60 } {
                let before = phi(&y);
                for c in 0..d {
                    let f1 = |s: f64| {
                        let mut trial = y.clone();
                        trial[c] = s;
                        phi(&trial)
                    };
                    let (s, _) = golden_min(&f1, y[c] - cell, y[c] + cell, 1e-15);
                    y[c] = s;
                }
                if (before - phi(&y)).abs() < 1e-15 * (1.0 + before.abs()) {
                    break;
                }
            }
            // The free-flight guess is the exact minimizer whenever K* is smooth.
            if phi(&guess) <= phi(&y) {
                y = guess;
            }
            let value = coarse(&y)?;
            let p: Vec<f64> = x.iter().zip(&y).map(|(a, b)| (a - b) / t).collect();
            Ok(BallisticSolution { value, start: y, end_momentum: Some(l.kinetic_part().grad(&p)), expansions })
        }
        _ => {
            let (value, path, n, _) = refine(l, End::Linear(v.to_vec()), x, t, straight(&best_y, x, PATH_MIN_SEGMENTS))?;
            let h = t / n as f64;
            let (_, gb) = end_gradients(l, &path[n - 1], &path[n], h);
            Ok(BallisticSolution { value: ExtReal::Finite(value), start: path[0].clone(), end_momentum: Some(gb), expansions })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowStats {
    pub steps: usize,
    /// `max_k |H(x_k, v_k) - H(x_0, v_0)|`
    pub energy_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub points: Vec<PhasePoint>,
    pub energy: Vec<f64>,
    pub stats: FlowStats,
}

impl FlowTrajectory {
    pub fn end(&self) -> &PhasePoint {
        self.points.last().expect("trajectories are non-empty")
    }

    pub fn to_csv(&self) -> String {
        let d = self.points[0].x.len();
        let mut s = String::from("t");
        for k in 0..d {
            let _ = write!(s, ",x{k}");
        }
        for k in 0..d {
            let _ = write!(s, ",v{k}");
        }
        s.push_str(",H\n");
        for (p, e) in self.points.iter().zip(&self.energy) {
            let _ = write!(s, "{}", p.t);
            for c in p.x.iter().chain(&p.v) {
                let _ = write!(s, ",{c}");
            }
            let _ = writeln!(s, ",{e}");
        }
        s
    }
}

/// Leapfrog for separable `H(x, q) = K*(q) - A(x)`: half kick, drift, half
/// kick. A negative `t` integrates backward in time.
pub fn hamiltonian_flow(h: &HamiltonianSpec, start: &PhasePoint, t: f64, steps: usize) -> Result<FlowTrajectory> {
    if steps == 0 {
        return Err(Error::invalid("step count must be positive"));
    }
    if !t.is_finite() {
        return Err(Error::invalid("non-finite horizon"));
    }
    let kc = h.closed_form.as_ref().ok_or_else(|| Error::Unsupported("flow needs a closed-form Hamiltonian".into()))?;
    let dt = t / steps as f64;
    let (mut x, mut q) = (start.x.clone(), start.v.clone());
    let e0 = h.value(&x, &q);
    let mut points = vec![start.clone()];
    let mut energy = vec![e0];
    let mut drift: f64 = 0.0;
    let kick = |x: &[f64], q: &mut [f64], s: f64| {
        // dq/dt = -∂H/∂x = ∇A(x)
        let g = h.grad_x(x, q);
        for (qc, gc) in q.iter_mut().zip(g) {
            *qc -= s * gc;
        }
    };
    for k in 1..=steps {
        kick(&x, &mut q, 0.5 * dt);
        let g = kc.grad(&q);
        for (xc, gc) in x.iter_mut().zip(g) {
            *xc += dt * gc;
        }
        kick(&x, &mut q, 0.5 * dt);
        if x.iter().chain(&q).any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteState { step: k });
        }
        let e = h.value(&x, &q);
        drift = drift.max((e - e0).abs());
        points.push(PhasePoint { x: x.clone(), v: q.clone(), t: start.t + dt * k as f64 });
        energy.push(e);
    }
    Ok(FlowTrajectory { points, energy, stats: FlowStats { steps, energy_drift: drift } })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquationTag {
    HjForward,
    HjBackward,
    DualHjBackward,
}

/// Value function samples on a lattice at a few time slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub lattice: Lattice,
    pub times: Vec<f64>,
    pub values: Vec<Vec<ExtReal>>,
    /// Per slice and node: the extremizer sat on the boundary of the data lattice.
    pub pinned: Vec<Vec<bool>>,
    pub tag: EquationTag,
}

impl GridField {
    pub fn slice(&self, k: usize) -> &[ExtReal] {
        &self.values[k]
    }

    /// Slice as samples, for chaining.
    pub fn samples(&self, k: usize) -> Result<ConvexFunctionSamples> {
        let vals: Vec<f64> =
            self.values[k].iter().map(|v| v.finite().ok_or_else(|| Error::invalid("slice has infinite values"))).collect::<Result<_>>()?;
        ConvexFunctionSamples::new(self.lattice.clone(), vals, crate::convex_core::SampleKind::General)
    }

    pub fn to_csv(&self) -> String {
        let d = self.lattice.dim();
        let mut s = String::from("t");
        for k in 0..d {
            let _ = write!(s, ",x{k}");
        }
        s.push_str(",value\n");
        for (t, vals) in self.times.iter().zip(&self.values) {
            for (i, v) in vals.iter().enumerate() {
                let _ = write!(s, "{t}");
                for c in self.lattice.point(i) {
                    let _ = write!(s, ",{c}");
                }
                let _ = writeln!(s, ",{v}");
            }
        }
        s
    }
}

/// Multilinear interpolation of samples; `+inf` outside their box.
pub fn interpolate(f: &ConvexFunctionSamples, x: &[f64]) -> ExtReal {
    let lat = &f.lattice;
    let mut lo_idx = Vec::with_capacity(x.len());
    let mut frac = Vec::with_capacity(x.len());
    for (k, a) in lat.axes().iter().enumerate() {
        let c = x[k];
        if c < a[0] - 1e-12 || c > a[a.len() - 1] + 1e-12 {
            return ExtReal::PosInf;
        }
        if a.len() == 1 {
            lo_idx.push(0);
            frac.push(0.0);
            continue;
        }
        let j = a.partition_point(|&t| t <= c).clamp(1, a.len() - 1) - 1;
        lo_idx.push(j);
        frac.push(((c - a[j]) / (a[j + 1] - a[j])).clamp(0.0, 1.0));
    }
    let d = x.len();
    let mut acc = ExtReal::ZERO;
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut idx = lo_idx.clone();
        for k in 0..d {
            if corner >> k & 1 == 1 {
                w *= frac[k];
                idx[k] += 1;
            } else {
                w *= 1.0 - frac[k];
            }
        }
        if w == 0.0 {
            continue;
        }
        let v = f.values[lat.flat_index(&idx)];
        acc = acc.add(v.scale(w)).unwrap_or(ExtReal::PosInf);
    }
    acc
}

/// Extremum of `data(z) + sign * cost(z, x)` over the data lattice, with the
/// boundary-pinning flag.
fn extremize(
    data: &ConvexFunctionSamples,
    x: &[f64],
    maximize: bool,
    cost: &dyn Fn(&[f64], &[f64]) -> Result<ExtReal>,
) -> Result<(ExtReal, bool)> {
    let lat = &data.lattice;
    let mut best = if maximize { ExtReal::NegInf } else { ExtReal::PosInf };
    let mut best_inner = best;
    for i in 0..lat.len() {
        let z = lat.point(i);
        let c = cost(&z, x)?;
        let val = if maximize {
            data.values[i].add(c.neg()).unwrap_or(ExtReal::NegInf)
        } else {
            data.values[i].add(c).unwrap_or(ExtReal::PosInf)
        };
        let better = |a: ExtReal, b: ExtReal| if maximize { a > b } else { a < b };
        if better(val, best) {
            best = val;
        }
        if !lat.is_boundary(i) && better(val, best_inner) {
            best_inner = val;
        }
    }
    let pinned = match (best, best_inner) {
        (ExtReal::Finite(b), ExtReal::Finite(bi)) => (b - bi).abs() > 1e-12 * (1.0 + b.abs()),
        (ExtReal::Finite(_), _) => lat.len() > 1,
        _ => false,
    };
    Ok((best, pinned))
}

/// `Φ_{f,+}(t, x) = min_y f(y) + c_t(y, x)`; slices at times `0` and `t`.
pub fn hopf_lax_forward(l: &LagrangianSpec, f: &ConvexFunctionSamples, t: f64, grid: &Lattice) -> Result<GridField> {
    if !(t >= 0.0) {
        return Err(Error::invalid("time must be nonnegative"));
    }
    let first: Vec<ExtReal> = grid.points().iter().map(|x| interpolate(f, x)).collect();
    let mut last = Vec::with_capacity(grid.len());
    let mut pinned = Vec::with_capacity(grid.len());
    for x in grid.points() {
        if t == 0.0 {
            last.push(interpolate(f, &x));
            pinned.push(false);
            continue;
        }
        let (v, p) = extremize(f, &x, false, &|y, x| fixed_end_cost(l, y, x, t))?;
        last.push(v);
        pinned.push(p);
    }
    Ok(GridField {
        lattice: grid.clone(),
        times: vec![0.0, t],
        values: vec![first, last],
        pinned: vec![vec![false; grid.len()], pinned],
        tag: EquationTag::HjForward,
    })
}

fn backward(l: &LagrangianSpec, f: &ConvexFunctionSamples, t: f64, horizon: f64, grid: &Lattice, tag: EquationTag) -> Result<GridField> {
    if !(t >= 0.0 && t <= horizon) {
        return Err(Error::invalid(format!("need 0 <= t <= T, got t={t}, T={horizon}")));
    }
    let tau = horizon - t;
    let terminal: Vec<ExtReal> = grid.points().iter().map(|x| interpolate(f, x)).collect();
    let mut first = Vec::with_capacity(grid.len());
    let mut pinned = Vec::with_capacity(grid.len());
    for x in grid.points() {
        if tau == 0.0 {
            first.push(interpolate(f, &x));
            pinned.push(false);
            continue;
        }
        let (v, p) = extremize(f, &x, true, &|z, x| fixed_end_cost(l, x, z, tau))?;
        first.push(v);
        pinned.push(p);
    }
    Ok(GridField {
        lattice: grid.clone(),
        times: vec![t, horizon],
        values: vec![first, terminal],
        pinned: vec![pinned, vec![false; grid.len()]],
        tag,
    })
}

/// `Φ_{f,-}(t, x) = max_z f(z) - c_{T-t}(x, z)`; slices at `t` and `T`.
pub fn hopf_lax_backward(l: &LagrangianSpec, f: &ConvexFunctionSamples, t: f64, horizon: f64, grid: &Lattice) -> Result<GridField> {
    backward(l, f, t, horizon, grid, EquationTag::HjBackward)
}

/// `Φ~_{k,-}(t, v) = max_w k(w) - c~_{T-t}(v, w)` for the dual Lagrangian.
pub fn dual_hopf_lax_backward(dual: &LagrangianSpec, k: &ConvexFunctionSamples, t: f64, horizon: f64, grid: &Lattice) -> Result<GridField> {
    backward(dual, k, t, horizon, grid, EquationTag::DualHjBackward)
}
