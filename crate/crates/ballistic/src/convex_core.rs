//! Convex-analysis kernel: Lagrangian families, Hamiltonians, dual Lagrangians,
//! sampled Legendre transforms and assumption checks.
//!
//! Every registry Lagrangian is separable, `L(x, p) = A(x) + K(p)`, with `A` and
//! `K` drawn from [`ConvexProfile`]. That keeps conjugates in closed form:
//! `H(x, q) = K*(q) - A(x)` and `L~(v, q) = L*(q, v) = K*(v) + A*(q)`.

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::lattice::{dot, norm, Lattice};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A positive coefficient stored together with an inversion flag, so that
/// `c -> 1/c -> c` round-trips bit for bit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Coef {
    raw: f64,
    inverted: bool,
}

impl Coef {
    pub fn new(c: f64) -> Self {
        Coef { raw: c, inverted: false }
    }

    pub fn value(self) -> f64 {
        if self.inverted {
            1.0 / self.raw
        } else {
            self.raw
        }
    }

    pub fn inverse(self) -> Self {
        Coef { raw: self.raw, inverted: !self.inverted }
    }
}

impl PartialEq for Coef {
    fn eq(&self, other: &Self) -> bool {
        self.value() == other.value()
    }
}

/// Convex building blocks on ℝᵈ. Radial variants depend on `|z|` only; the two
/// table variants are one-dimensional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConvexProfile {
    Zero,
    /// 0 at the origin, +inf elsewhere.
    IndicatorZero,
    /// `c |z|² / 2`. A negative `c` is allowed so non-convex inputs can be represented and rejected.
    Quadratic {
        c: Coef,
    },
    /// `coef |z|^exp / exp` with `coef > 0`, `exp >= 1`, `exp != 2`.
    Power {
        coef: f64,
        exp: f64,
    },
    /// Piecewise-linear interpolation of samples, +inf outside the knot range.
    Table {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
    /// `max_k slopes[k] z - offsets[k]`.
    MaxAffine {
        slopes: Vec<f64>,
        offsets: Vec<f64>,
    },
}

impl ConvexProfile {
    pub fn quadratic(c: f64) -> Self {
        if c == 0.0 {
            ConvexProfile::Zero
        } else {
            ConvexProfile::Quadratic { c: Coef::new(c) }
        }
    }

    pub fn power(coef: f64, exp: f64) -> Result<Self> {
        if !(coef > 0.0 && coef.is_finite()) || !(exp >= 1.0 && exp.is_finite()) {
            return Err(Error::invalid(format!("power profile needs coef > 0 and exp >= 1, got ({coef}, {exp})")));
        }
        if exp == 2.0 {
            return Ok(ConvexProfile::quadratic(coef));
        }
        Ok(ConvexProfile::Power { coef, exp })
    }

    pub fn table(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(Error::invalid("table needs at least two knots and matching values"));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("table knots must be strictly increasing"));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::invalid("table entries must be finite"));
        }
        Ok(ConvexProfile::Table { knots, values })
    }

    pub fn is_one_dimensional_only(&self) -> bool {
        matches!(self, ConvexProfile::Table { .. } | ConvexProfile::MaxAffine { .. })
    }

    pub fn is_convex(&self) -> bool {
        match self {
            ConvexProfile::Quadratic { c } => c.value() >= 0.0,
            ConvexProfile::Table { knots, values } => slopes_nondecreasing(knots, values),
            _ => true,
        }
    }

    /// True when the profile is +inf away from the origin.
    pub fn is_pinned(&self) -> bool {
        matches!(self, ConvexProfile::IndicatorZero)
    }

    pub fn eval(&self, z: &[f64]) -> ExtReal {
        match self {
            ConvexProfile::Zero => ExtReal::ZERO,
            ConvexProfile::IndicatorZero => {
                if z.iter().all(|&c| c == 0.0) {
                    ExtReal::ZERO
                } else {
                    ExtReal::PosInf
                }
            }
            ConvexProfile::Quadratic { c } => ExtReal::Finite(0.5 * c.value() * dot(z, z)),
            ConvexProfile::Power { coef, exp } => ExtReal::Finite(coef * norm(z).powf(*exp) / exp),
            ConvexProfile::Table { knots, values } => table_eval(knots, values, z[0]),
            ConvexProfile::MaxAffine { slopes, offsets } => {
                ExtReal::Finite(slopes.iter().zip(offsets).map(|(s, o)| s * z[0] - o).fold(f64::NEG_INFINITY, f64::max))
            }
        }
    }

    /// Finite value or `None` when the point is outside the effective domain.
    pub fn value(&self, z: &[f64]) -> Option<f64> {
        self.eval(z).finite()
    }

    /// Gradient (a subgradient for the piecewise-linear variants).
    pub fn grad(&self, z: &[f64]) -> Vec<f64> {
        let d = z.len();
        match self {
            ConvexProfile::Zero | ConvexProfile::IndicatorZero => vec![0.0; d],
            ConvexProfile::Quadratic { c } => z.iter().map(|&x| c.value() * x).collect(),
            ConvexProfile::Power { coef, exp } => {
                let r = norm(z);
                if r == 0.0 {
                    return vec![0.0; d];
                }
                let s = coef * r.powf(exp - 2.0);
                z.iter().map(|&x| s * x).collect()
            }
            ConvexProfile::Table { knots, values } => {
                let x = z[0];
                let n = knots.len();
                let k = match knots.iter().position(|&t| t > x) {
                    Some(0) => 0,
                    Some(k) => k - 1,
                    None => n - 2,
                }
                .min(n - 2);
                vec![(values[k + 1] - values[k]) / (knots[k + 1] - knots[k])]
            }
            ConvexProfile::MaxAffine { slopes, offsets } => {
                let mut best = 0;
                for k in 1..slopes.len() {
                    if slopes[k] * z[0] - offsets[k] > slopes[best] * z[0] - offsets[best] {
                        best = k;
                    }
                }
                vec![slopes[best]]
            }
        }
    }

    /// `out += scale * grad(z)` without allocating for the smooth variants.
    pub fn add_grad_scaled(&self, z: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            ConvexProfile::Zero | ConvexProfile::IndicatorZero => {}
            ConvexProfile::Quadratic { c } => {
                let k = scale * c.value();
                for (o, x) in out.iter_mut().zip(z) {
                    *o += k * x;
                }
            }
            ConvexProfile::Power { coef, exp } => {
                let r = norm(z);
                if r > 0.0 {
                    let k = scale * coef * r.powf(exp - 2.0);
                    for (o, x) in out.iter_mut().zip(z) {
                        *o += k * x;
                    }
                }
            }
            _ => {
                for (o, g) in out.iter_mut().zip(self.grad(z)) {
                    *o += scale * g;
                }
            }
        }
    }

    /// `out += scale * hess(z)`, row-major.
    pub fn add_hess_scaled(&self, z: &[f64], scale: f64, out: &mut [f64]) {
        let d = z.len();
        match self {
            ConvexProfile::Quadratic { c } => {
                for i in 0..d {
                    out[i * d + i] += scale * c.value();
                }
            }
            ConvexProfile::Power { .. } => {
                for (o, v) in out.iter_mut().zip(self.hess(z)) {
                    *o += scale * v;
                }
            }
            _ => {}
        }
    }

    /// Hessian, row-major `d x d`. Zero for the piecewise-linear variants.
    pub fn hess(&self, z: &[f64]) -> Vec<f64> {
        let d = z.len();
        let mut h = vec![0.0; d * d];
        match self {
            ConvexProfile::Quadratic { c } => {
                for i in 0..d {
                    h[i * d + i] = c.value();
                }
            }
            ConvexProfile::Power { coef, exp } => {
                let r = norm(z);
                // Regularize at the origin, where the Hessian is singular or unbounded.
                let r = r.max(1e-8);
                let s = coef * r.powf(exp - 2.0);
                for i in 0..d {
                    h[i * d + i] = s;
                    for j in 0..d {
                        h[i * d + j] += s * (exp - 2.0) * z[i] * z[j] / (r * r);
                    }
                }
            }
            _ => {}
        }
        h
    }

    /// Growth exponent as `|z| -> inf`; infinite for profiles with bounded domain.
    pub fn growth_exponent(&self) -> f64 {
        match self {
            ConvexProfile::Zero => 0.0,
            ConvexProfile::IndicatorZero | ConvexProfile::Table { .. } => f64::INFINITY,
            ConvexProfile::Quadratic { c } => {
                if c.value() > 0.0 {
                    2.0
                } else {
                    0.0
                }
            }
            ConvexProfile::Power { exp, .. } => *exp,
            ConvexProfile::MaxAffine { .. } => 1.0,
        }
    }

    pub fn lower_bound(&self) -> ExtReal {
        match self {
            ConvexProfile::Quadratic { c } if c.value() < 0.0 => ExtReal::NegInf,
            ConvexProfile::Table { values, .. } => ExtReal::Finite(values.iter().copied().fold(f64::INFINITY, f64::min)),
            ConvexProfile::MaxAffine { .. } => match self.conjugate() {
                // min f = -f*(0)
                Ok(conj) => conj.eval(&[0.0]).neg(),
                Err(_) => ExtReal::NegInf,
            },
            _ => ExtReal::ZERO,
        }
    }

    /// Closed-form convex conjugate.
    pub fn conjugate(&self) -> Result<ConvexProfile> {
        match self {
            ConvexProfile::Zero => Ok(ConvexProfile::IndicatorZero),
            ConvexProfile::IndicatorZero => Ok(ConvexProfile::Zero),
            ConvexProfile::Quadratic { c } => {
                if c.value() > 0.0 {
                    Ok(ConvexProfile::Quadratic { c: c.inverse() })
                } else {
                    Err(Error::Unsupported("conjugate of a concave quadratic".into()))
                }
            }
            ConvexProfile::Power { coef, exp } => {
                if *exp <= 1.0 {
                    return Err(Error::UnboundedHamiltonian(
                        "the conjugate of a profile with growth exponent <= 1 is +inf outside a ball".into(),
                    ));
                }
                let conj_exp = exp / (exp - 1.0);
                ConvexProfile::power(coef.powf(-1.0 / (exp - 1.0)), conj_exp)
            }
            ConvexProfile::Table { knots, values } => {
                if !slopes_nondecreasing(knots, values) {
                    return Err(Error::Unsupported("conjugate of a non-convex table".into()));
                }
                Ok(ConvexProfile::MaxAffine { slopes: knots.clone(), offsets: values.clone() })
            }
            ConvexProfile::MaxAffine { slopes, offsets } => {
                let (k, v) = lower_hull(slopes, offsets);
                if k.len() < 2 {
                    return Err(Error::Unsupported("conjugate of an affine function is an indicator".into()));
                }
                ConvexProfile::table(k, v)
            }
        }
    }
}

fn slopes_nondecreasing(knots: &[f64], values: &[f64]) -> bool {
    let slopes: Vec<f64> = knots.windows(2).zip(values.windows(2)).map(|(k, v)| (v[1] - v[0]) / (k[1] - k[0])).collect();
    slopes.windows(2).all(|s| s[1] >= s[0] - 1e-12 * (1.0 + s[0].abs()))
}

fn table_eval(knots: &[f64], values: &[f64], x: f64) -> ExtReal {
    let n = knots.len();
    if x < knots[0] || x > knots[n - 1] {
        return ExtReal::PosInf;
    }
    let k = knots.partition_point(|&t| t <= x).clamp(1, n - 1);
    let (a, b) = (knots[k - 1], knots[k]);
    let t = (x - a) / (b - a);
    ExtReal::Finite(values[k - 1] * (1.0 - t) + values[k] * t)
}

/// Lower convex hull of the points `(xs[i], ys[i])`, sorted by x.
fn lower_hull(xs: &[f64], ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut pts: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup_by(|b, a| a.0 == b.0);
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull.into_iter().unzip()
}

/// State-potential registry for `|p|²/2 + U(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Potential {
    /// `kappa |x|² / 2`
    Quadratic { kappa: f64 },
    /// `kappa |x|⁴ / 4`
    Quartic { kappa: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Family {
    QuadraticFree,
    Harmonic {
        alpha: Coef,
        beta: Coef,
    },
    PowerKinetic {
        delta: f64,
    },
    StatePotential {
        potential: Potential,
    },
    Tabulated {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
    /// Separable Lagrangian outside the named families, typically a dual.
    Separable {
        state: ConvexProfile,
        kinetic: ConvexProfile,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangianSpec {
    pub family: Family,
    pub dim: usize,
    /// Always false for the registry; the time argument is carried but constant.
    pub time_dependent: bool,
    pub jointly_convex: bool,
    pub coercivity_exponent: f64,
    pub lower_bound: ExtReal,
    state: ConvexProfile,
    kinetic: ConvexProfile,
}

impl LagrangianSpec {
    pub fn quadratic_free(dim: usize) -> Self {
        Self::build(Family::QuadraticFree, dim, ConvexProfile::Zero, ConvexProfile::quadratic(1.0))
    }

    /// `alpha |x|²/2 + beta |p|²/2`; `beta > 0`, any finite `alpha`.
    pub fn harmonic(dim: usize, alpha: f64, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) || !alpha.is_finite() {
            return Err(Error::invalid(format!("harmonic needs beta > 0, got alpha={alpha}, beta={beta}")));
        }
        let (a, b) = (Coef::new(alpha), Coef::new(beta));
        Ok(Self::harmonic_coefs(dim, a, b))
    }

    fn harmonic_coefs(dim: usize, alpha: Coef, beta: Coef) -> Self {
        let state = if alpha.value() == 0.0 { ConvexProfile::Zero } else { ConvexProfile::Quadratic { c: alpha } };
        Self::build(Family::Harmonic { alpha, beta }, dim, state, ConvexProfile::Quadratic { c: beta })
    }

    /// `|p|^delta / delta`.
    pub fn power_kinetic(dim: usize, delta: f64) -> Result<Self> {
        let kinetic = ConvexProfile::power(1.0, delta)?;
        Ok(Self::build(Family::PowerKinetic { delta }, dim, ConvexProfile::Zero, kinetic))
    }

    pub fn state_potential(dim: usize, potential: Potential) -> Result<Self> {
        let state = match potential {
            Potential::Quadratic { kappa } if kappa >= 0.0 => ConvexProfile::quadratic(kappa),
            Potential::Quartic { kappa } if kappa > 0.0 => ConvexProfile::power(kappa, 4.0)?,
            Potential::Quartic { kappa } if kappa == 0.0 => ConvexProfile::Zero,
            _ => return Err(Error::invalid("state potentials need kappa >= 0")),
        };
        Ok(Self::build(Family::StatePotential { potential }, dim, state, ConvexProfile::quadratic(1.0)))
    }

    /// x-independent kinetic term given by samples on a 1-d velocity grid.
    pub fn tabulated(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let kinetic = ConvexProfile::table(knots.clone(), values.clone())?;
        Ok(Self::build(Family::Tabulated { knots, values }, 1, ConvexProfile::Zero, kinetic))
    }

    pub fn separable(dim: usize, state: ConvexProfile, kinetic: ConvexProfile) -> Result<Self> {
        if dim != 1 && (state.is_one_dimensional_only() || kinetic.is_one_dimensional_only()) {
            return Err(Error::invalid("tabulated profiles are one-dimensional"));
        }
        Ok(Self::from_parts(dim, state, kinetic))
    }

    /// Recognizes named families so that dualizing twice returns the original spec.
    fn from_parts(dim: usize, state: ConvexProfile, kinetic: ConvexProfile) -> Self {
        match (&state, &kinetic) {
            (ConvexProfile::Zero, ConvexProfile::Quadratic { c }) if *c == Coef::new(1.0) => Self::quadratic_free(dim),
            (ConvexProfile::Quadratic { c: a }, ConvexProfile::Quadratic { c: b }) => Self::harmonic_coefs(dim, *a, *b),
            _ => Self::build(Family::Separable { state: state.clone(), kinetic: kinetic.clone() }, dim, state, kinetic),
        }
    }

    fn build(family: Family, dim: usize, state: ConvexProfile, kinetic: ConvexProfile) -> Self {
        let lower_bound = state.lower_bound().add(kinetic.lower_bound()).unwrap_or(ExtReal::NegInf);
        LagrangianSpec {
            family,
            dim,
            time_dependent: false,
            jointly_convex: state.is_convex() && kinetic.is_convex(),
            coercivity_exponent: kinetic.growth_exponent(),
            lower_bound,
            state,
            kinetic,
        }
    }

    pub fn state_part(&self) -> &ConvexProfile {
        &self.state
    }

    pub fn kinetic_part(&self) -> &ConvexProfile {
        &self.kinetic
    }

    pub fn eval(&self, x: &[f64], p: &[f64]) -> ExtReal {
        self.state.eval(x).add(self.kinetic.eval(p)).unwrap_or(ExtReal::PosInf)
    }

    /// True when only zero velocity has finite cost (paths are constant).
    pub fn velocity_pinned(&self) -> bool {
        self.kinetic.is_pinned()
    }

    /// True when finite cost forces the position to the origin.
    pub fn position_pinned(&self) -> bool {
        self.state.is_pinned()
    }

    /// `∂L/∂p`, the costate of a velocity.
    pub fn momentum(&self, _x: &[f64], p: &[f64]) -> Vec<f64> {
        self.kinetic.grad(p)
    }

    pub fn is_smooth(&self) -> bool {
        !matches!(self.kinetic, ConvexProfile::Table { .. } | ConvexProfile::MaxAffine { .. })
            && !matches!(self.state, ConvexProfile::Table { .. } | ConvexProfile::MaxAffine { .. })
    }
}

/// Sampled Hamiltonian `H(x, q) = sup_p <p, q> - L(x, p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub source: LagrangianSpec,
    /// Conjugate of the kinetic part, when available in closed form.
    pub closed_form: Option<ConvexProfile>,
}

/// Result of the numeric sup, with the radius the search was truncated to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericSup {
    pub value: f64,
    pub argmax_norm: f64,
    pub truncation_radius: f64,
}

impl HamiltonianSpec {
    pub fn eval(&self, x: &[f64], q: &[f64]) -> ExtReal {
        match &self.closed_form {
            Some(kc) => kc.eval(q).add(self.source.state.eval(x).neg()).unwrap_or(ExtReal::NegInf),
            None => match self.eval_numeric(x, q) {
                Ok(s) => ExtReal::Finite(s.value),
                Err(_) => ExtReal::PosInf,
            },
        }
    }

    pub fn value(&self, x: &[f64], q: &[f64]) -> f64 {
        self.eval(x, q).to_f64()
    }

    /// `∂H/∂q`
    pub fn grad_q(&self, _x: &[f64], q: &[f64]) -> Vec<f64> {
        match &self.closed_form {
            Some(kc) => kc.grad(q),
            None => vec![0.0; q.len()],
        }
    }

    /// `∂H/∂x = -∇A(x)`
    pub fn grad_x(&self, x: &[f64], _q: &[f64]) -> Vec<f64> {
        self.source.state.grad(x).into_iter().map(|g| -g).collect()
    }

    /// Sup over `p = s q/|q|`, `s ∈ [0, R]`, by a grid scan refined with golden
    /// section. `R` doubles until the maximizer is interior. Valid for radial
    /// and one-dimensional kinetic parts.
    pub fn eval_numeric(&self, x: &[f64], q: &[f64]) -> Result<NumericSup> {
        let kin = &self.source.kinetic;
        let a = self.source.state.value(x).ok_or_else(|| Error::invalid("state outside the domain of L"))?;
        if let ConvexProfile::Table { knots, values } = kin {
            // Piecewise linear: the sup sits on a knot.
            let best = knots.iter().zip(values).map(|(p, v)| p * q[0] - v).fold(f64::NEG_INFINITY, f64::max);
            let r = knots.iter().fold(0.0f64, |m, k| m.max(k.abs()));
            return Ok(NumericSup { value: best - a, argmax_norm: f64::NAN, truncation_radius: r });
        }
        let qn = norm(q);
        let dir: Vec<f64> = if qn > 0.0 {
            q.iter().map(|c| c / qn).collect()
        } else {
            let mut e = vec![0.0; q.len()];
            e[0] = 1.0;
            e
        };
        let phi = |s: f64| -> f64 {
            let p: Vec<f64> = dir.iter().map(|c| c * s).collect();
            match kin.eval(&p) {
                ExtReal::Finite(k) => s * qn - k,
                _ => f64::NEG_INFINITY,
            }
        };
        let mut radius = 1.0 + qn;
        for _ in 0..60 {
            let n = 400;
            let h = radius / n as f64;
            let (mut best_i, mut best) = (0usize, phi(0.0));
            for i in 1..=n {
                let v = phi(h * i as f64);
                if v > best {
                    best = v;
                    best_i = i;
                }
            }
            if best_i < n {
                let lo = h * best_i.saturating_sub(1) as f64;
                let hi = h * (best_i + 1) as f64;
                let (s, v) = golden_max(&phi, lo, hi, 1e-13);
                let v = v.max(best);
                return Ok(NumericSup { value: v - a, argmax_norm: s, truncation_radius: radius });
            }
            radius *= 2.0;
        }
        Err(Error::UnboundedHamiltonian(format!("sup over p did not localize at q={q:?}")))
    }
}

/// Golden-section search for the max of a unimodal function on `[lo, hi]`.
pub fn golden_max(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol * (1.0 + lo.abs() + hi.abs()) {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    let s = 0.5 * (lo + hi);
    let fs = f(s);
    [(s, fs), (c, fc), (d, fd)].into_iter().fold((s, fs), |b, p| if p.1 > b.1 { p } else { b })
}

pub fn golden_min(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (s, v) = golden_max(&|t| -f(t), lo, hi, tol);
    (s, -v)
}

pub fn hamiltonian(l: &LagrangianSpec) -> Result<HamiltonianSpec> {
    if l.coercivity_exponent <= 1.0 {
        return Err(Error::UnboundedHamiltonian(format!(
            "kinetic growth exponent {} <= 1, the sup over p can be +inf",
            l.coercivity_exponent
        )));
    }
    let closed_form = match l.kinetic.conjugate() {
        Ok(c) => Some(c),
        Err(Error::UnboundedHamiltonian(m)) => return Err(Error::UnboundedHamiltonian(m)),
        Err(_) => None,
    };
    Ok(HamiltonianSpec { source: l.clone(), closed_form })
}

/// `L~(v, q) = L*(q, v)`: the state part becomes `K*` and the kinetic part `A*`.
pub fn dual_lagrangian(l: &LagrangianSpec) -> Result<LagrangianSpec> {
    if !l.jointly_convex {
        return Err(Error::Unsupported("dual Lagrangian needs a jointly convex L".into()));
    }
    let state = l.kinetic.conjugate()?;
    let kinetic = l.state.conjugate()?;
    Ok(LagrangianSpec::from_parts(l.dim, state, kinetic))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleKind {
    Convex,
    Concave,
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexFunctionSamples {
    pub lattice: Lattice,
    pub values: Vec<ExtReal>,
    pub kind: SampleKind,
}

impl ConvexFunctionSamples {
    /// Samples must be finite on the declared lattice; a declared convex or
    /// concave kind is checked by discrete midpoints along each axis.
    pub fn new(lattice: Lattice, values: Vec<f64>, kind: SampleKind) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::invalid("sample count does not match the lattice"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("samples must be finite"));
        }
        let s = ConvexFunctionSamples { lattice, values: values.into_iter().map(ExtReal::Finite).collect(), kind };
        if let Some(i) = s.midpoint_violation(1e-9) {
            return Err(Error::invalid(format!("samples violate declared {:?} shape at index {i}", s.kind)));
        }
        Ok(s)
    }

    pub fn from_fn(lattice: Lattice, kind: SampleKind, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = lattice.points().iter().map(|p| f(p)).collect();
        Self::new(lattice, values, kind)
    }

    /// First lattice index where a 3-point stencil breaks the declared shape.
    pub fn midpoint_violation(&self, tol: f64) -> Option<usize> {
        let sign = match self.kind {
            SampleKind::Convex => 1.0,
            SampleKind::Concave => -1.0,
            SampleKind::General => return None,
        };
        let l = &self.lattice;
        for i in 0..l.len() {
            let idx = l.multi_index(i);
            for (k, axis) in l.axes().iter().enumerate() {
                let j = idx[k];
                if j == 0 || j + 1 >= axis.len() {
                    continue;
                }
                let (a, b, c) = (axis[j - 1], axis[j], axis[j + 1]);
                let mut lo = idx.clone();
                lo[k] = j - 1;
                let mut hi = idx.clone();
                hi[k] = j + 1;
                let (fa, fb, fc) = (self.values[l.flat_index(&lo)], self.values[i], self.values[l.flat_index(&hi)]);
                if let (Some(fa), Some(fb), Some(fc)) = (fa.finite(), fb.finite(), fc.finite()) {
                    let t = (b - a) / (c - a);
                    let chord = fa * (1.0 - t) + fc * t;
                    if sign * (chord - fb) < -tol * (1.0 + fb.abs()) {
                        return Some(i);
                    }
                }
            }
        }
        None
    }

    pub fn value_at(&self, i: usize) -> ExtReal {
        self.values[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LegendreDirection {
    /// `g*(v) = max_x <v, x> - g(x)`
    ConvexStar,
    /// `h_*(v) = min_x <v, x> - h(x)`
    ConcaveStar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendreResult {
    pub samples: ConvexFunctionSamples,
    /// Per dual point: the extremum sits only on the primal lattice boundary.
    pub unbounded: Vec<bool>,
    /// Primal lattice spacing; the transform error scales with it.
    pub spacing: f64,
}

pub fn legendre_transform(f: &ConvexFunctionSamples, direction: LegendreDirection, dual: &Lattice) -> Result<LegendreResult> {
    if f.lattice.is_empty() || dual.is_empty() {
        return Err(Error::invalid("empty grid"));
    }
    if f.lattice.dim() != dual.dim() {
        return Err(Error::invalid("primal and dual lattices differ in dimension"));
    }
    let sign = match direction {
        LegendreDirection::ConvexStar => 1.0,
        LegendreDirection::ConcaveStar => -1.0,
    };
    let primal = f.lattice.points();
    let boundary: Vec<bool> = (0..primal.len()).map(|i| f.lattice.is_boundary(i)).collect();
    let mut values = Vec::with_capacity(dual.len());
    let mut unbounded = Vec::with_capacity(dual.len());
    for v in dual.points() {
        // Maximize sign * (<v,x> - f(x)); for concave_star this is a min.
        let mut best = ExtReal::NegInf;
        let mut best_interior = ExtReal::NegInf;
        for (i, x) in primal.iter().enumerate() {
            let term = match f.values[i] {
                ExtReal::Finite(fx) => ExtReal::Finite(sign * (dot(&v, x) - fx)),
                ExtReal::PosInf if sign > 0.0 => continue,
                ExtReal::NegInf if sign < 0.0 => continue,
                _ => ExtReal::PosInf,
            };
            best = best.max(term);
            if !boundary[i] {
                best_interior = best_interior.max(term);
            }
        }
        let tol = 1e-12 * (1.0 + best.finite().map_or(0.0, f64::abs));
        let pinned = match (best, best_interior) {
            (ExtReal::Finite(b), ExtReal::Finite(bi)) => b > bi + tol,
            _ => false,
        };
        unbounded.push(pinned);
        let out = if pinned { ExtReal::PosInf } else { best };
        values.push(if sign > 0.0 { out } else { out.neg() });
    }
    let kind = match direction {
        LegendreDirection::ConvexStar => SampleKind::Convex,
        LegendreDirection::ConcaveStar => SampleKind::Concave,
    };
    Ok(LegendreResult { samples: ConvexFunctionSamples { lattice: dual.clone(), values, kind }, unbounded, spacing: f.lattice.spacing() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    A0,
    A123,
    B123,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClauseStatus {
    Pass,
    Fail,
    /// The clause cannot be instantiated for this family.
    NotChecked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub name: String,
    pub status: ClauseStatus,
    pub witness: Option<Vec<Vec<f64>>>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub profile: Profile,
    pub clauses: Vec<Clause>,
    pub box_radius: f64,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.status == ClauseStatus::Pass)
    }

    pub fn clause(&self, name: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.name == name)
    }
}

const CHECK_RADIUS: f64 = 3.0;
const CHECK_PAIRS: usize = 4000;

fn clause(name: &str, ok: bool, witness: Option<Vec<Vec<f64>>>, detail: String) -> Clause {
    Clause {
        name: name.into(),
        status: if ok { ClauseStatus::Pass } else { ClauseStatus::Fail },
        witness: if ok { None } else { witness },
        detail,
    }
}

fn random_point(rng: &mut ChaCha8Rng, d: usize, r: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-r..r)).collect()
}

/// Midpoint convexity of `(x, p) -> L` (joint) or `p -> L` (velocity only) on random pairs.
fn midpoint_check(l: &LagrangianSpec, joint: bool, seed: u64) -> (bool, Option<Vec<Vec<f64>>>) {
    let d = l.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..CHECK_PAIRS {
        let x0 = random_point(&mut rng, d, CHECK_RADIUS);
        let x1 = if joint { random_point(&mut rng, d, CHECK_RADIUS) } else { x0.clone() };
        let p0 = random_point(&mut rng, d, CHECK_RADIUS);
        let p1 = random_point(&mut rng, d, CHECK_RADIUS);
        let xm: Vec<f64> = x0.iter().zip(&x1).map(|(a, b)| 0.5 * (a + b)).collect();
        let pm: Vec<f64> = p0.iter().zip(&p1).map(|(a, b)| 0.5 * (a + b)).collect();
        let (a, b, m) = (l.eval(&x0, &p0), l.eval(&x1, &p1), l.eval(&xm, &pm));
        if let (Some(a), Some(b), Some(m)) = (a.finite(), b.finite(), m.finite()) {
            if m > 0.5 * (a + b) + 1e-10 * (1.0 + a.abs() + b.abs()) {
                return (false, Some(vec![x0, p0, x1, p1]));
            }
        }
    }
    (true, None)
}

/// Minimum of `L` over sampled states, as a function of velocity.
fn sampled_min_over_x(l: &LagrangianSpec, p: &[f64]) -> f64 {
    let d = l.dim;
    let axis = crate::lattice::linspace(-CHECK_RADIUS, CHECK_RADIUS, 13);
    let mut best = f64::INFINITY;
    let lat = Lattice::new(vec![axis; d]).expect("valid axis");
    for x in lat.points() {
        best = best.min(l.eval(&x, p).to_f64());
    }
    best
}

fn direction(d: usize, r: f64) -> Vec<f64> {
    let mut p = vec![0.0; d];
    p[0] = r;
    p
}

pub fn check_assumptions(l: &LagrangianSpec, profile: Profile) -> AssumptionReport {
    let d = l.dim;
    let mut clauses = Vec::new();
    match profile {
        Profile::A0 => {
            let lb = l.lower_bound;
            clauses.push(clause(
                "A0-bounded-below",
                lb.is_finite(),
                Some(vec![direction(d, CHECK_RADIUS), vec![0.0; d]]),
                format!("recorded lower bound {lb}"),
            ));
            let (ok, w) = midpoint_check(l, false, 11);
            clauses.push(clause("A0-convex-in-velocity", ok, w, "midpoint sampling in p".into()));
            clauses.push(coercivity_clause(l, "A0-coercive", 1.0, f64::INFINITY));
        }
        Profile::A123 => {
            let (ok, w) = midpoint_check(l, false, 12);
            clauses.push(clause("A1-convex-in-velocity", ok, w, "midpoint sampling in p".into()));
            // A1: inf_x L(x, p) >= a convex minorant with quadratic growth.
            let radii = [4.0, 8.0, 16.0, 32.0];
            let ratios: Vec<f64> = radii.iter().map(|&r| sampled_min_over_x(l, &direction(d, r)) / (r * r)).collect();
            let ok = ratios.iter().all(|&q| q > 1e-3) && ratios.iter().all(|q| q.is_finite() || *q == f64::INFINITY);
            clauses.push(clause(
                "A1-quadratic-minorant",
                ok,
                Some(vec![direction(d, 32.0)]),
                format!("inf_x L(x,p)/|p|^2 at |p|=4..32: {ratios:?}"),
            ));
            // A2: relative modulus of continuity in x at eps = 1e-3.
            let mut worst: f64 = 0.0;
            let mut rng = ChaCha8Rng::seed_from_u64(13);
            let mut wit = None;
            for _ in 0..CHECK_PAIRS {
                let x = random_point(&mut rng, d, CHECK_RADIUS);
                let y: Vec<f64> = x.iter().map(|c| c + rng.random_range(-1e-3..1e-3)).collect();
                let u = random_point(&mut rng, d, 4.0 * CHECK_RADIUS);
                let (a, b) = (l.eval(&x, &u).to_f64(), l.eval(&y, &u).to_f64());
                if a.is_finite() && b.is_finite() {
                    let r = (1.0 + a) / (1.0 + b) - 1.0;
                    if r.abs() > worst {
                        worst = r.abs();
                        wit = Some(vec![x.clone(), y.clone(), u.clone()]);
                    }
                }
            }
            clauses.push(clause("A2-uniform-continuity", worst < 1e-2, wit, format!("max relative change for |x-y| < 1e-3: {worst:.3e}")));
            // A3(i): sup_x L(x, 0) stays bounded as the box grows.
            let at = |r: f64| l.eval(&direction(d, r), &vec![0.0; d]).to_f64();
            let growth = (at(4.0 * CHECK_RADIUS) - at(CHECK_RADIUS)).abs();
            clauses.push(clause(
                "A3i-bounded-at-rest",
                growth < 1e-9 && at(CHECK_RADIUS).is_finite(),
                Some(vec![direction(d, 4.0 * CHECK_RADIUS), vec![0.0; d]]),
                format!("L(x,0) change from |x|=3 to |x|=12: {growth:.3e}"),
            ));
            // A3(ii): |grad_x L| / (1 + L) bounded.
            let mut worst: f64 = 0.0;
            for &r in &[1.0, 4.0, 16.0, 64.0] {
                let x = direction(d, r);
                let g = norm(&l.state.grad(&x));
                let v = l.eval(&x, &vec![0.0; d]).to_f64();
                worst = worst.max(g / (1.0 + v));
            }
            clauses.push(clause(
                "A3ii-state-gradient-ratio",
                worst.is_finite() && worst < 10.0,
                Some(vec![direction(d, 64.0)]),
                format!("max |grad_x L|/(1+L) on |x| <= 64: {worst:.3e}"),
            ));
            let g = norm(&l.kinetic.grad(&direction(d, CHECK_RADIUS)));
            clauses.push(clause(
                "A3iii-velocity-gradient-local",
                g.is_finite() && !l.kinetic.is_pinned(),
                Some(vec![direction(d, CHECK_RADIUS)]),
                format!("|grad_p L| at |p|=3: {g:.3e}"),
            ));
        }
        Profile::B123 => {
            let (ok, w) = midpoint_check(l, true, 14);
            clauses.push(clause("B1-joint-convexity", ok, w, "midpoint sampling in (x,p)".into()));
            // F(x) = {p : L(x,p) < inf}; every registry kinetic part contains p = 0.
            let mut ok = true;
            let mut wit = None;
            for &r in &[0.0, 1.0, 10.0] {
                let x = direction(d, r);
                if !l.eval(&x, &vec![0.0; d]).is_finite() {
                    ok = false;
                    wit = Some(vec![x]);
                }
            }
            clauses.push(clause("B2-effective-domain", ok, wit, "dist(0, F(x)) = 0 on samples".into()));
            clauses.push(b3_clause(l));
        }
    }
    AssumptionReport { profile, clauses, box_radius: CHECK_RADIUS }
}

fn coercivity_clause(l: &LagrangianSpec, name: &str, min_exp: f64, _max: f64) -> Clause {
    let d = l.dim;
    let exp = l.coercivity_exponent;
    // Check superlinear growth with exponent midway between 1 and the recorded one.
    let test_exp = if exp.is_infinite() { 2.0 } else { 0.5 * (min_exp + exp) };
    let ratio = |r: f64| sampled_min_over_x(l, &direction(d, r)) / r.powf(test_exp);
    let rs = [8.0, 64.0, 512.0];
    let vals: Vec<f64> = rs.iter().map(|&r| ratio(r)).collect();
    let ok = exp > min_exp && vals.windows(2).all(|w| w[1] > w[0] || w[1] == f64::INFINITY);
    clause(name, ok, Some(vec![direction(d, 512.0)]), format!("inf_x L/|p|^{test_exp:.3} at |p|=8,64,512: {vals:?}"))
}

fn b3_clause(l: &LagrangianSpec) -> Clause {
    let d = l.dim;
    // theta is only instantiated for registry families.
    let theta: Option<ConvexProfile> = match &l.family {
        Family::QuadraticFree => Some(ConvexProfile::quadratic(1.0)),
        Family::Harmonic { alpha, beta } if alpha.value() >= 0.0 => Some(ConvexProfile::quadratic(beta.value())),
        Family::PowerKinetic { delta } if *delta > 1.0 => ConvexProfile::power(1.0, *delta).ok(),
        Family::StatePotential { .. } => Some(ConvexProfile::quadratic(1.0)),
        _ => None,
    };
    let Some(theta) = theta else {
        return Clause {
            name: "B3-growth".into(),
            status: ClauseStatus::NotChecked,
            witness: None,
            detail: "no explicit theta for this family".into(),
        };
    };
    let (alpha, beta) = (0.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..CHECK_PAIRS {
        let x = random_point(&mut rng, d, CHECK_RADIUS);
        let p = random_point(&mut rng, d, 4.0 * CHECK_RADIUS);
        let r = (norm(&p) - alpha * norm(&x)).max(0.0);
        let bound = theta.eval(&[r]).to_f64() - beta * norm(&x);
        let v = l.eval(&x, &p).to_f64();
        if v < bound - 1e-12 * (1.0 + bound.abs()) {
            return clause("B3-growth", false, Some(vec![x, p]), "L below theta bound".into());
        }
    }
    clause("B3-growth", true, None, format!("theta = {theta:?}, alpha = 0, beta = 0"))
}
