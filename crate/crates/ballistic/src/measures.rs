//! Finitely supported probability measures on ℝᵈ.

use crate::error::{Error, Result};
use crate::lattice::norm;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Coordinates closer than this (max-norm) are treated as one atom.
pub const MERGE_TOL: f64 = 1e-12;
/// Allowed deviation of the total mass from 1.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    State,
    Costate,
}

impl Space {
    pub fn as_str(self) -> &'static str {
        match self {
            Space::State => "state",
            Space::Costate => "costate",
        }
    }
}

impl std::str::FromStr for Space {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "state" => Ok(Space::State),
            "costate" => Ok(Space::Costate),
            _ => Err(Error::invalid(format!("unknown space tag `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
    space: Space,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>, space: Space) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("a measure needs at least one atom"));
        }
        if atoms.len() != weights.len() {
            return Err(Error::invalid(format!("{} atoms but {} weights", atoms.len(), weights.len())));
        }
        let d = atoms[0].len();
        if d == 0 {
            return Err(Error::invalid("atoms must have at least one coordinate"));
        }
        for (i, a) in atoms.iter().enumerate() {
            if a.len() != d {
                return Err(Error::invalid(format!("atom {i} has dimension {} instead of {d}", a.len())));
            }
            if a.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid(format!("atom {i} has non-finite coordinates")));
            }
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(format!("weight {i} is negative or non-finite")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(DiscreteMeasure { atoms, weights, space })
    }

    /// Equal weights on the given points, with coincident points merged.
    pub fn uniform(points: Vec<Vec<f64>>, space: Space) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::invalid("a measure needs at least one atom"));
        }
        Self::new(points, vec![1.0 / n as f64; n], space)?.merged()
    }

    pub fn dirac(point: Vec<f64>, space: Space) -> Result<Self> {
        Self::new(vec![point], vec![1.0], space)
    }

    /// Empirical measure of a sample.
    pub fn from_samples(samples: &[Vec<f64>], space: Space) -> Result<Self> {
        Self::uniform(samples.to_vec(), space)
    }

    /// One-dimensional convenience constructor.
    pub fn on_line(xs: &[f64], weights: &[f64], space: Space) -> Result<Self> {
        Self::new(xs.iter().map(|&x| vec![x]).collect(), weights.to_vec(), space)
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn with_space(mut self, space: Space) -> Self {
        self.space = space;
        self
    }

    /// Merges atoms within [`MERGE_TOL`] of an earlier atom, keeping first-seen order.
    pub fn merged(&self) -> Result<Self> {
        let mut atoms: Vec<Vec<f64>> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (a, &w) in self.atoms.iter().zip(&self.weights) {
            match atoms.iter().position(|b| close(a, b)) {
                Some(k) => weights[k] += w,
                None => {
                    atoms.push(a.clone());
                    weights.push(w);
                }
            }
        }
        Ok(DiscreteMeasure { atoms, weights, space: self.space })
    }

    /// Atoms with positive weight only.
    pub fn support(&self) -> Self {
        let (atoms, weights) = self.atoms.iter().zip(&self.weights).filter(|(_, &w)| w > 0.0).map(|(a, &w)| (a.clone(), w)).unzip();
        DiscreteMeasure { atoms, weights, space: self.space }
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            for (mk, ak) in m.iter_mut().zip(a) {
                *mk += w * ak;
            }
        }
        m
    }

    /// Atom coordinates of a one-dimensional measure.
    pub fn coords_1d(&self) -> Result<Vec<f64>> {
        if self.dim() != 1 {
            return Err(Error::invalid(format!("expected a 1-d measure, got d={}", self.dim())));
        }
        Ok(self.atoms.iter().map(|a| a[0]).collect())
    }

    /// Same atoms and weights, equal as sets up to merge tolerance.
    pub fn approx_eq(&self, other: &DiscreteMeasure, weight_tol: f64, coord_tol: f64) -> bool {
        let (a, b) = (self.support(), other.support());
        if a.dim() != b.dim() || a.space != b.space {
            return false;
        }
        let covers = |x: &DiscreteMeasure, y: &DiscreteMeasure| {
            x.atoms.iter().all(|p| {
                let mass: f64 = y.atoms.iter().zip(&y.weights).filter(|(q, _)| max_dist(p, q) <= coord_tol).map(|(_, w)| w).sum();
                let own: f64 = x.atoms.iter().zip(&x.weights).filter(|(q, _)| max_dist(p, q) <= coord_tol).map(|(_, w)| w).sum();
                (mass - own).abs() <= weight_tol
            })
        };
        covers(&a, &b) && covers(&b, &a)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# d={} space={}\n", self.dim(), self.space.as_str());
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            // `{}` on f64 prints the shortest string that parses back to the same bits.
            let _ = write!(s, "{w}");
            for c in a {
                let _ = write!(s, " {c}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut header: Option<(usize, Space)> = None;
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = lineno + 1;
            let bad = |msg: String| Error::MalformedFile { line: lineno, msg };
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if header.is_some() {
                    continue;
                }
                let mut d = None;
                let mut space = None;
                for tok in rest.split_whitespace() {
                    if let Some(v) = tok.strip_prefix("d=") {
                        d = Some(v.parse::<usize>().map_err(|e| bad(format!("bad dimension: {e}")))?);
                    } else if let Some(v) = tok.strip_prefix("space=") {
                        space = Some(v.parse::<Space>().map_err(|e| bad(e.to_string()))?);
                    }
                }
                match (d, space) {
                    (Some(d), Some(s)) if d > 0 => header = Some((d, s)),
                    _ => return Err(bad("header must read `# d=<dim> space=<state|costate>`".into())),
                }
                continue;
            }
            let (d, _) = header.ok_or_else(|| bad("data before header".into()))?;
            let nums: Vec<f64> =
                line.split_whitespace().map(|t| t.parse::<f64>().map_err(|e| bad(format!("`{t}`: {e}")))).collect::<Result<_>>()?;
            if nums.len() != d + 1 {
                return Err(bad(format!("expected {} numbers, found {}", d + 1, nums.len())));
            }
            weights.push(nums[0]);
            atoms.push(nums[1..].to_vec());
        }
        let (_, space) = header.ok_or(Error::MalformedFile { line: 0, msg: "missing header".into() })?;
        Self::new(atoms, weights, space).map_err(|e| Error::MalformedFile { line: 0, msg: e.to_string() })
    }

    pub fn to_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p)?;
        Self::from_text(&text).map_err(|e| e.context(format!("reading {}", p.display())))
    }
}

fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn close(a: &[f64], b: &[f64]) -> bool {
    max_dist(a, b) <= MERGE_TOL
}

/// `Σ w_i |x_i|`
pub fn first_moment(m: &DiscreteMeasure) -> f64 {
    m.atoms.iter().zip(&m.weights).map(|(a, w)| w * norm(a)).sum()
}

/// Image measure; coincident images are merged. A map returning `None` is
/// undefined at that atom.
pub fn push_forward<F>(m: &DiscreteMeasure, map: F) -> Result<DiscreteMeasure>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let mut images = Vec::with_capacity(m.len());
    for (i, a) in m.atoms.iter().enumerate() {
        match map(a) {
            Some(y) if y.iter().all(|c| c.is_finite()) && !y.is_empty() => images.push(y),
            _ => return Err(Error::MapUndefined { index: i, point: a.clone() }),
        }
    }
    let d = images[0].len();
    if images.iter().any(|y| y.len() != d) {
        return Err(Error::invalid("map images have inconsistent dimensions"));
    }
    DiscreteMeasure { atoms: images, weights: m.weights.clone(), space: m.space }.merged()
}

/// Step quantile function of a 1-d measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFunction {
    positions: Vec<f64>,
    cumulative: Vec<f64>,
}

impl QuantileFunction {
    /// `G(t) = inf{z : ν(x <= z) >= t}` for `t ∈ (0, 1]`; `t <= 0` gives the
    /// lowest atom.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.cumulative.partition_point(|&c| c < t - 1e-15);
        self.positions[k.min(self.positions.len() - 1)]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }
}

pub fn quantile(m: &DiscreteMeasure) -> Result<QuantileFunction> {
    let xs = m.coords_1d()?;
    let mut order: Vec<usize> = (0..xs.len()).filter(|&i| m.weights[i] > 0.0).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut positions: Vec<f64> = Vec::new();
    let mut cumulative: Vec<f64> = Vec::new();
    let mut acc = 0.0;
    for i in order {
        acc += m.weights[i];
        if positions.last().is_some_and(|&p| xs[i] - p <= MERGE_TOL) {
            *cumulative.last_mut().expect("non-empty") = acc;
        } else {
            positions.push(xs[i]);
            cumulative.push(acc);
        }
    }
    Ok(QuantileFunction { positions, cumulative })
}
