//! Continuity-equation discretization of `B̲_T` for the free quadratic Lagrangian in d = 1.
//!
//! The unknowns are a coupling `γ(a, i)` between the costate atoms of `μ₀`
//! and the cells of the initial density, and cell masses `P_k(i)` on a
//! staggered space-time grid. Fluxes come from cumulative masses
//! `F_k(i) = Σ_{i' ≤ i} P_k(i')`: the mass crossing interface `i + ½` during
//! step `k` is `F_k(i) - F_{k+1}(i)`, so the discrete continuity equation holds
//! by construction. The kinetic energy of a step is
//! `Δx² J² / (2 Δt M̄)` per interface, with `M̄` the mean of the four adjacent
//! cell masses. The program
//!
//! `min Σ_{a,i} v_a y_i γ(a, i) + Σ_{k,i} Δx² J² / (2 Δt M̄)`
//!
//! is convex and is solved by a log-barrier Newton method on banded systems.

use super::ballistic_min;
use crate::convex_core::{Family, LagrangianSpec};
use crate::error::{Error, Result};
use crate::linalg::BandMatrix;
use crate::measures::{DiscreteMeasure, Space};
use serde::Serialize;

const GAP_TOL: f64 = 1e-7;
const T_GROWTH: f64 = 20.0;
const MAX_NEWTON: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EulerianGrid {
    pub cells: usize,
    pub steps: usize,
}

impl EulerianGrid {
    pub fn square(n: usize) -> Self {
        EulerianGrid { cells: n, steps: n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EulerianReport {
    pub grid: EulerianGrid,
    /// Spatial window `[lo, hi]` covered by the cells.
    pub domain: (f64, f64),
    /// Optimal value of the discretized program, `None` when the solver failed.
    pub value: Option<f64>,
    /// `B̲_T(μ₀, ν_T)` from the transport LP.
    pub lp_value: f64,
    pub abs_error: Option<f64>,
    /// `|value - lp_value| / max(|lp_value|, 1e-12)`
    pub relative_error: Option<f64>,
    /// Initial cell masses `ρ₀` of the discrete optimum.
    pub initial_masses: Vec<f64>,
    pub newton_steps: usize,
    pub hint: Option<String>,
}

impl EulerianReport {
    pub fn within(&self, rel_tol: f64) -> bool {
        self.relative_error.is_some_and(|e| e <= rel_tol)
    }
}

/// Kinetic action `Σ Δx² J² / (2 Δt M̄)` of a path of cell masses (one vector
/// per time level). Fluxes are recovered from cumulative masses.
pub fn discrete_action(dx: f64, dt: f64, layers: &[Vec<f64>]) -> Result<f64> {
    if layers.len() < 2 || !(dx > 0.0 && dt > 0.0) {
        return Err(Error::invalid("discrete_action needs two time levels and positive steps"));
    }
    let n = layers[0].len();
    if n == 0 || layers.iter().any(|p| p.len() != n || p.iter().any(|m| !(*m >= 0.0))) {
        return Err(Error::invalid("time levels must be non-negative mass vectors of equal length"));
    }
    let total = layers[0].iter().sum::<f64>();
    if layers.iter().any(|p| (p.iter().sum::<f64>() - total).abs() > 1e-9 * (1.0 + total)) {
        return Err(Error::invalid("time levels carry different total masses"));
    }
    let cum: Vec<Vec<f64>> = layers
        .iter()
        .map(|p| {
            p.iter()
                .scan(0.0, |s, m| {
                    *s += m;
                    Some(*s)
                })
                .collect()
        })
        .collect();
    let c = dx * dx / (2.0 * dt);
    let mut action = 0.0;
    for k in 0..layers.len() - 1 {
        for i in 0..n - 1 {
            let j = cum[k][i] - cum[k + 1][i];
            let m = 0.25 * (layers[k][i] + layers[k][i + 1] + layers[k + 1][i] + layers[k + 1][i + 1]);
            if j != 0.0 {
                action += if m > 0.0 { c * j * j / m } else { f64::INFINITY };
            }
        }
    }
    Ok(action)
}

/// Affine form `Σ coef·x[idx] + constant` in the solver variables.
#[derive(Debug, Clone, Default)]
struct Form {
    terms: Vec<(usize, f64)>,
    constant: f64,
}

impl Form {
    fn constant(c: f64) -> Self {
        Form { terms: Vec::new(), constant: c }
    }

    fn var(idx: usize) -> Self {
        Form { terms: vec![(idx, 1.0)], constant: 0.0 }
    }

    fn axpy(mut self, a: f64, other: &Form) -> Self {
        self.terms.extend(other.terms.iter().map(|&(i, c)| (i, a * c)));
        self.constant += a * other.constant;
        self
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }

    fn slope(&self, d: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * d[i]).sum()
    }

    fn span(&self) -> Option<(usize, usize)> {
        let lo = self.terms.iter().map(|t| t.0).min()?;
        let hi = self.terms.iter().map(|t| t.0).max()?;
        Some((lo, hi))
    }
}

struct Program {
    nvar: usize,
    bw: usize,
    linear: Form,
    energy_coef: f64,
    /// `(J, M̄)` per interface and step.
    energy: Vec<(Form, Form)>,
    slacks: Vec<Form>,
}

impl Program {
    fn objective(&self, x: &[f64]) -> f64 {
        let e: f64 = self
            .energy
            .iter()
            .map(|(j, m)| {
                let (j, m) = (j.eval(x), m.eval(x));
                j * j / m
            })
            .sum();
        self.linear.eval(x) + self.energy_coef * e
    }

    fn barrier(&self, x: &[f64], t: f64) -> Option<f64> {
        let mut log_sum = 0.0;
        for s in &self.slacks {
            let v = s.eval(x);
            if !(v > 0.0) {
                return None;
            }
            log_sum += v.ln();
        }
        Some(t * self.objective(x) - log_sum)
    }

    fn newton_system(&self, x: &[f64], t: f64) -> (Vec<f64>, BandMatrix) {
        let mut g = vec![0.0; self.nvar];
        let mut h = BandMatrix::zeros(self.nvar, self.bw);
        for &(i, c) in &self.linear.terms {
            g[i] += t * c;
        }
        // J²/M has gradient 2(J/M)∇J - (J/M)²∇M and Hessian (2/M) u uᵀ with u = ∇J - (J/M)∇M.
        for (jf, mf) in &self.energy {
            let (j, m) = (jf.eval(x), mf.eval(x));
            let r = j / m;
            let w = t * self.energy_coef;
            let u: Vec<(usize, f64)> = jf.terms.iter().copied().chain(mf.terms.iter().map(|&(i, c)| (i, -r * c))).collect();
            for &(i, c) in &jf.terms {
                g[i] += w * 2.0 * r * c;
            }
            for &(i, c) in &mf.terms {
                g[i] -= w * r * r * c;
            }
            add_outer(&mut h, &u, 2.0 * w / m);
        }
        for s in &self.slacks {
            let v = s.eval(x);
            for &(i, c) in &s.terms {
                g[i] -= c / v;
            }
            add_outer(&mut h, &s.terms, 1.0 / (v * v));
        }
        (g, h)
    }

    /// Largest step in `(0, 1]` keeping every slack strictly positive.
    fn max_step(&self, x: &[f64], d: &[f64]) -> f64 {
        let mut alpha: f64 = 1.0;
        for s in &self.slacks {
            let ds = s.slope(d);
            if ds < 0.0 {
                alpha = alpha.min(-0.99 * s.eval(x) / ds);
            }
        }
        alpha
    }
}

fn add_outer(h: &mut BandMatrix, u: &[(usize, f64)], scale: f64) {
    for &(i, a) in u {
        for &(j, b) in u {
            if j <= i {
                h.add(i, j, scale * a * b);
            }
        }
    }
}

/// Spatial window and cell-center projection of `ν_T`.
fn layout(mu0: &DiscreteMeasure, nu_t: &DiscreteMeasure, t: f64, cells: usize) -> Result<(f64, f64, Vec<f64>)> {
    let xs = nu_t.coords_1d()?;
    let vs = mu0.coords_1d()?;
    // Free-flight starts y = x - T v bound the support of the optimal initial density.
    let pts: Vec<f64> = xs.iter().flat_map(|&x| vs.iter().map(move |&v| x - t * v)).chain(xs.iter().copied()).collect();
    let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
    let width = if hi - lo > 1e-9 { hi - lo } else { 1.0 };
    let pad = 0.1 * width;
    let (lo, hi) = (lo - pad, hi + pad);
    let dx = (hi - lo) / cells as f64;
    let mut masses = vec![0.0; cells];
    for (x, w) in xs.iter().zip(nu_t.weights()) {
        // Linear split between the two nearest centers keeps the first moment.
        let s = ((x - lo) / dx - 0.5).clamp(0.0, (cells - 1) as f64);
        let i0 = (s.floor() as usize).min(cells - 2);
        let f = s - i0 as f64;
        masses[i0] += w * (1.0 - f);
        masses[i0 + 1] += w * f;
    }
    Ok((lo, hi, masses))
}

fn build_program(mu0: &DiscreteMeasure, nu_masses: &[f64], lo: f64, dx: f64, dt: f64, steps: usize) -> Program {
    let n = nu_masses.len();
    let atoms = mu0.len();
    let block = atoms + steps - 1;
    let var = |i: usize, local: usize| i * block + local;
    let nu_cum: Vec<f64> = nu_masses
        .iter()
        .scan(0.0, |s, m| {
            *s += m;
            Some(*s)
        })
        .collect();
    // Cumulative coupling G(a, i) = Σ_{i' ≤ i} γ(a, i').
    let g = |a: usize, i: isize| -> Form {
        if i < 0 {
            Form::constant(0.0)
        } else if i as usize >= n - 1 {
            Form::constant(mu0.weights()[a])
        } else {
            Form::var(var(i as usize, a))
        }
    };
    let f = |k: usize, i: isize| -> Form {
        if i < 0 {
            Form::constant(0.0)
        } else if i as usize >= n - 1 {
            Form::constant(1.0)
        } else if k == 0 {
            (0..atoms).fold(Form::default(), |acc, a| acc.axpy(1.0, &g(a, i)))
        } else if k == steps {
            Form::constant(nu_cum[i as usize])
        } else {
            Form::var(var(i as usize, atoms + k - 1))
        }
    };
    let mut linear = Form::default();
    let mut slacks = Vec::new();
    for a in 0..atoms {
        let v = mu0.atoms()[a][0];
        for i in 0..n as isize {
            let gamma = g(a, i).axpy(-1.0, &g(a, i - 1));
            let y = lo + (i as f64 + 0.5) * dx;
            linear = linear.axpy(v * y, &gamma);
            slacks.push(gamma);
        }
    }
    for k in 1..steps {
        for i in 0..n as isize {
            slacks.push(f(k, i).axpy(-1.0, &f(k, i - 1)));
        }
    }
    let mut energy = Vec::new();
    for k in 0..steps {
        for i in 0..n as isize - 1 {
            let j = f(k, i).axpy(-1.0, &f(k + 1, i));
            let m = f(k, i + 1).axpy(-1.0, &f(k, i - 1)).axpy(1.0, &f(k + 1, i + 1)).axpy(-1.0, &f(k + 1, i - 1));
            let m = Form { terms: m.terms.iter().map(|&(i, c)| (i, 0.25 * c)).collect(), constant: 0.25 * m.constant };
            energy.push((j, m));
        }
    }
    let mut bw = 0;
    for (j, m) in &energy {
        let spans = [j.span(), m.span()];
        let lo = spans.iter().flatten().map(|s| s.0).min();
        let hi = spans.iter().flatten().map(|s| s.1).max();
        if let (Some(lo), Some(hi)) = (lo, hi) {
            bw = bw.max(hi - lo);
        }
    }
    for s in &slacks {
        if let Some((lo, hi)) = s.span() {
            bw = bw.max(hi - lo);
        }
    }
    Program { nvar: (n - 1) * block, bw, linear, energy_coef: dx * dx / (2.0 * dt), energy, slacks }
}

/// Strictly feasible start: uniform initial coupling, masses blended linearly toward `ν_T`.
fn initial_point(mu0: &DiscreteMeasure, nu_masses: &[f64], steps: usize) -> Vec<f64> {
    let n = nu_masses.len();
    let atoms = mu0.len();
    let block = atoms + steps - 1;
    let mut x = vec![0.0; (n - 1) * block];
    let mut nu_cum = 0.0;
    for i in 0..n - 1 {
        nu_cum += nu_masses[i];
        let uni = (i + 1) as f64 / n as f64;
        for a in 0..atoms {
            x[i * block + a] = mu0.weights()[a] * uni;
        }
        for k in 1..steps {
            let s = k as f64 / steps as f64;
            x[i * block + atoms + k - 1] = (1.0 - s) * uni + s * nu_cum;
        }
    }
    x
}

fn solve(p: &Program, mut x: Vec<f64>) -> Result<(Vec<f64>, usize)> {
    let m = p.slacks.len() as f64;
    let mut t = 1.0;
    let mut total = 0;
    loop {
        for _ in 0..MAX_NEWTON {
            let (g, h) = p.newton_system(&x, t);
            let d: Vec<f64> = h.cholesky()?.solve(&g).iter().map(|v| -v).collect();
            let decrement: f64 = -g.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>();
            total += 1;
            if decrement < 1e-10 {
                break;
            }
            let f0 = p.barrier(&x, t).ok_or_else(|| Error::SolverFailure("barrier left the domain".into()))?;
            let mut alpha = p.max_step(&x, &d);
            loop {
                let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
                if let Some(f1) = p.barrier(&trial, t) {
                    if f1 <= f0 - 0.25 * alpha * decrement {
                        x = trial;
                        break;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-14 {
                    return Err(Error::SolverFailure("barrier line search stalled".into()));
                }
            }
        }
        if m / t < GAP_TOL {
            return Ok((x, total));
        }
        t *= T_GROWTH;
    }
}

/// Solves the discretized continuity-equation program on `grid` and compares
/// its value with `B̲_T(μ₀, ν_T)` from the transport LP.
pub fn eulerian_check(
    l: &LagrangianSpec,
    mu0: &DiscreteMeasure,
    nu_t: &DiscreteMeasure,
    t: f64,
    grid: EulerianGrid,
) -> Result<EulerianReport> {
    if l.family != Family::QuadraticFree || l.dim != 1 {
        return Err(Error::Unsupported("eulerian_check covers the free quadratic Lagrangian in d = 1".into()));
    }
    if mu0.space() != Space::Costate || nu_t.space() != Space::State {
        return Err(Error::invalid("eulerian_check takes a costate μ₀ and a state ν_T"));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid("the horizon must be positive"));
    }
    let lp_value = ballistic_min(l, mu0, nu_t, t)?.value;
    let (lo, hi, nu_masses) = layout(mu0, nu_t, t, grid.cells.max(3))?;
    if grid.cells < 3 || grid.steps < 1 {
        return Ok(EulerianReport {
            grid,
            domain: (lo, hi),
            value: None,
            lp_value,
            abs_error: None,
            relative_error: None,
            initial_masses: Vec::new(),
            newton_steps: 0,
            hint: Some("the discretization needs at least 3 cells and 1 time step; refine the grid".into()),
        });
    }
    let (n, steps) = (grid.cells, grid.steps);
    let dx = (hi - lo) / n as f64;
    let dt = t / steps as f64;
    let program = build_program(mu0, &nu_masses, lo, dx, dt, steps);
    let (x, newton_steps) = match solve(&program, initial_point(mu0, &nu_masses, steps)) {
        Ok(r) => r,
        Err(e) => {
            return Ok(EulerianReport {
                grid,
                domain: (lo, hi),
                value: None,
                lp_value,
                abs_error: None,
                relative_error: None,
                initial_masses: Vec::new(),
                newton_steps: 0,
                hint: Some(format!("barrier solver failed ({e}); try a finer grid or more time steps")),
            })
        }
    };
    // Rebuild the mass path and evaluate the action independently of the solver forms.
    let block = mu0.len() + steps - 1;
    let cum_at = |k: usize, i: usize| -> f64 {
        if i >= n - 1 {
            1.0
        } else if k == 0 {
            (0..mu0.len()).map(|a| x[i * block + a]).sum()
        } else {
            x[i * block + mu0.len() + k - 1]
        }
    };
    let mut layers: Vec<Vec<f64>> = (0..steps)
        .map(|k| (0..n).map(|i| cum_at(k, i) - if i == 0 { 0.0 } else { cum_at(k, i - 1) }).map(|m| m.max(0.0)).collect())
        .collect();
    layers.push(nu_masses.clone());
    let linear = program.linear.eval(&x);
    let value = linear + discrete_action(dx, dt, &layers)?;
    let abs_error = (value - lp_value).abs();
    let relative_error = abs_error / lp_value.abs().max(1e-12);
    Ok(EulerianReport {
        grid,
        domain: (lo, hi),
        value: Some(value),
        lp_value,
        abs_error: Some(abs_error),
        relative_error: Some(relative_error),
        initial_masses: layers.swap_remove(0),
        newton_steps,
        hint: None,
    })
}

/// `eulerian_check` on square grids of the given sizes, coarse to fine.
pub fn refinement_study(
    l: &LagrangianSpec,
    mu0: &DiscreteMeasure,
    nu_t: &DiscreteMeasure,
    t: f64,
    sizes: &[usize],
) -> Result<Vec<EulerianReport>> {
    sizes.iter().map(|&n| eulerian_check(l, mu0, nu_t, t, EulerianGrid::square(n))).collect()
}
