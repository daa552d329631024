//! Tensor-product point lattices used for sampled functions and y/w search grids.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    axes: Vec<Vec<f64>>,
}

impl Lattice {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::invalid("lattice needs at least one axis"));
        }
        for (k, a) in axes.iter().enumerate() {
            if a.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("axis {k} has non-finite coordinates")));
            }
            if a.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::invalid(format!("axis {k} is not strictly increasing")));
            }
        }
        Ok(Lattice { axes })
    }

    /// `n` equispaced points per axis on `[lo, hi]^dim`.
    pub fn uniform(dim: usize, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || hi <= lo {
            return Err(Error::invalid("uniform lattice needs n >= 2 and hi > lo"));
        }
        Lattice::new(vec![linspace(lo, hi, n); dim])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest gap between consecutive coordinates on any axis.
    pub fn spacing(&self) -> f64 {
        self.axes.iter().flat_map(|a| a.windows(2).map(|w| w[1] - w[0])).fold(0.0, f64::max)
    }

    /// Multi-index of flat index `i` (last axis fastest).
    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            let n = self.axes[k].len();
            idx[k] = i % n;
            i /= n;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (&i, a)| acc * a.len() + i)
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.multi_index(i).iter().zip(&self.axes).map(|(&j, a)| a[j]).collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.multi_index(i).iter().zip(&self.axes).any(|(&j, a)| j == 0 || j + 1 == a.len())
    }

    pub fn lower(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a[0]).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a[a.len() - 1]).collect()
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { hi } else { lo + h * i as f64 }).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
