//! Finite Kantorovich problems solved exactly by the transportation simplex.

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::lattice::dot;
use crate::measures::DiscreteMeasure;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Min,
    Max,
}

/// Costs between source atoms (rows) and target atoms (columns). `+inf` marks
/// a forbidden pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<ExtReal>,
    /// Name of the cost that produced the entries.
    pub provenance: String,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<ExtReal>, provenance: impl Into<String>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::invalid(format!("{} entries for a {rows}x{cols} cost matrix", entries.len())));
        }
        if entries.contains(&ExtReal::NegInf) {
            return Err(Error::invalid("cost entries may not be -inf"));
        }
        Ok(CostMatrix { rows, cols, entries, provenance: provenance.into() })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        provenance: impl Into<String>,
        mut f: impl FnMut(usize, usize) -> Result<ExtReal>,
    ) -> Result<Self> {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j)?);
            }
        }
        Self::new(rows, cols, entries, provenance)
    }

    pub fn from_finite(rows: usize, cols: usize, values: &[f64], provenance: impl Into<String>) -> Result<Self> {
        let entries =
            values.iter().map(|&v| ExtReal::from_f64(v).ok_or_else(|| Error::invalid("NaN cost entry"))).collect::<Result<Vec<_>>>()?;
        Self::new(rows, cols, entries, provenance)
    }

    /// `⟨v, x⟩` between costate atoms and state atoms.
    pub fn inner_product(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Self> {
        if mu.dim() != nu.dim() {
            return Err(Error::invalid("inner-product cost needs equal dimensions"));
        }
        Self::from_fn(mu.len(), nu.len(), "inner-product", |i, j| Ok(ExtReal::Finite(dot(&mu.atoms()[i], &nu.atoms()[j]))))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> ExtReal {
        self.entries[i * self.cols + j]
    }

    pub fn transpose(&self) -> Self {
        let mut entries = Vec::with_capacity(self.entries.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                entries.push(self.get(i, j));
            }
        }
        CostMatrix { rows: self.cols, cols: self.rows, entries, provenance: self.provenance.clone() }
    }
}

/// Optimal coupling with Kantorovich potentials. For `Min`,
/// `dual_target[j] - dual_source[i] <= cost(i, j)` with equality on the
/// support; for `Max` the inequality is reversed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    /// Row-major `rows x cols` masses.
    pub coupling: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub value: f64,
    pub dual_source: Vec<f64>,
    pub dual_target: Vec<f64>,
    pub sense: Sense,
    /// Pivots performed; 0 for constructions without a simplex.
    pub pivots: usize,
}

impl TransportPlan {
    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.coupling[i * self.cols + j]
    }

    pub fn support(&self, threshold: f64) -> Vec<(usize, usize, f64)> {
        let mut s = Vec::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                let m = self.mass(i, j);
                if m > threshold {
                    s.push((i, j, m));
                }
            }
        }
        s
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| (0..self.cols).map(|j| self.mass(i, j)).sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols).map(|j| (0..self.rows).map(|i| self.mass(i, j)).sum()).collect()
    }

    /// Dual objective `Σ φ₁ ν - Σ φ₀ μ`.
    pub fn dual_value(&self, supply: &[f64], demand: &[f64]) -> f64 {
        dot(&self.dual_target, demand) - dot(&self.dual_source, supply)
    }

    /// Largest violation of complementary slackness on cells carrying more than `threshold`.
    pub fn slackness_residual(&self, cost: &CostMatrix, threshold: f64) -> f64 {
        self.support(threshold)
            .into_iter()
            .map(|(i, j, _)| (self.dual_target[j] - self.dual_source[i] - cost.get(i, j).to_f64()).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let triplets: Vec<(usize, usize, f64)> = self.support(0.0);
        serde_json::json!({
            "value": self.value,
            "sense": self.sense,
            "coupling": triplets,
            "dual_source": self.dual_source,
            "dual_target": self.dual_target,
        })
    }
}

/// Spanning-tree basis of the transportation polytope. Nodes `0..n` are rows,
/// `n..n+m` columns.
struct Basis {
    n: usize,
    m: usize,
    arcs: Vec<(usize, usize)>,
    flow: Vec<f64>,
}

impl Basis {
    /// North-west corner rule; degenerate steps keep the tree spanning.
    fn north_west(supply: &[f64], demand: &[f64]) -> Self {
        let (n, m) = (supply.len(), demand.len());
        let mut s = supply.to_vec();
        let mut d = demand.to_vec();
        let (mut i, mut j) = (0, 0);
        let mut arcs = Vec::with_capacity(n + m - 1);
        let mut flow = Vec::with_capacity(n + m - 1);
        loop {
            let q = s[i].min(d[j]);
            arcs.push((i, j));
            flow.push(q);
            s[i] -= q;
            d[j] -= q;
            if i == n - 1 && j == m - 1 {
                break;
            }
            if i == n - 1 {
                j += 1;
            } else if j == m - 1 {
                i += 1;
            } else if s[i] <= d[j] {
                // Move down on ties so each step adds exactly one node.
                i += 1;
            } else {
                j += 1;
            }
        }
        Basis { n, m, arcs, flow }
    }

    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.n + self.m];
        for (k, &(i, j)) in self.arcs.iter().enumerate() {
            adj[i].push((self.n + j, k));
            adj[self.n + j].push((i, k));
        }
        adj
    }

    /// Potentials with `u_i + v_j = c_ij` on basic arcs and `u_0 = 0`.
    fn potentials(&self, adj: &[Vec<(usize, usize)>], arc_cost: &dyn Fn(usize, usize) -> f64) -> (Vec<f64>, Vec<f64>) {
        let mut pot = vec![f64::NAN; self.n + self.m];
        let mut queue = VecDeque::new();
        pot[0] = 0.0;
        queue.push_back(0);
        while let Some(a) = queue.pop_front() {
            for &(b, k) in &adj[a] {
                if pot[b].is_nan() {
                    let (i, j) = self.arcs[k];
                    pot[b] = arc_cost(i, j) - pot[a];
                    queue.push_back(b);
                }
            }
        }
        (pot[..self.n].to_vec(), pot[self.n..].to_vec())
    }

    /// Basic arcs on the tree path from row `i` to column `j`, in order.
    fn path(&self, adj: &[Vec<(usize, usize)>], i: usize, j: usize) -> Vec<usize> {
        let target = self.n + j;
        let mut prev = vec![usize::MAX; self.n + self.m];
        let mut prev_arc = vec![usize::MAX; self.n + self.m];
        let mut queue = VecDeque::new();
        prev[i] = i;
        queue.push_back(i);
        while let Some(a) = queue.pop_front() {
            if a == target {
                break;
            }
            for &(b, k) in &adj[a] {
                if prev[b] == usize::MAX {
                    prev[b] = a;
                    prev_arc[b] = k;
                    queue.push_back(b);
                }
            }
        }
        let mut arcs = Vec::new();
        let mut node = target;
        while node != i {
            arcs.push(prev_arc[node]);
            node = prev[node];
        }
        arcs.reverse();
        arcs
    }
}

const REDUCED_TOL: f64 = 1e-12;

/// Runs the simplex on `basis` for the given arc costs. Arcs with `None` cost
/// may stay basic at zero flow but never enter.
fn optimize(basis: &mut Basis, cost: &dyn Fn(usize, usize) -> Option<f64>, scale: f64) -> Result<usize> {
    let (n, m) = (basis.n, basis.m);
    let mut pivots = 0;
    let mut degenerate_run = 0usize;
    let arc_cost = |i: usize, j: usize| cost(i, j).unwrap_or(0.0);
    let max_pivots = 50 * (n + m) * (n + m) + 1000;
    loop {
        let adj = basis.adjacency();
        let (u, v) = basis.potentials(&adj, &arc_cost);
        let bland = degenerate_run > 2 * (n + m);
        let mut enter = None;
        let mut best = -REDUCED_TOL * scale;
        'scan: for i in 0..n {
            for j in 0..m {
                if let Some(c) = cost(i, j) {
                    let r = c - u[i] - v[j];
                    if r < best {
                        enter = Some((i, j));
                        if bland {
                            break 'scan;
                        }
                        best = r;
                    }
                }
            }
        }
        let Some((ei, ej)) = enter else {
            return Ok(pivots);
        };
        if basis.arcs.contains(&(ei, ej)) {
            // Round-off left a basic arc with a nonzero reduced cost.
            return Ok(pivots);
        }
        let path = basis.path(&adj, ei, ej);
        // Odd positions along the path (0-based even) lose flow.
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for (pos, &k) in path.iter().enumerate() {
            let (i, j) = basis.arcs[k];
            let room = if pos % 2 == 0 {
                basis.flow[k]
            } else if cost(i, j).is_none() {
                0.0
            } else {
                continue;
            };
            let key = i * m + j;
            if room < theta || (room == theta && key < basis.arcs[leave].0 * m + basis.arcs[leave].1) {
                theta = room;
                leave = k;
            }
        }
        if leave == usize::MAX {
            return Err(Error::SolverFailure("transportation pivot found no leaving arc".into()));
        }
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                basis.flow[k] -= theta;
            } else {
                basis.flow[k] += theta;
            }
        }
        basis.arcs[leave] = (ei, ej);
        basis.flow[leave] = theta;
        degenerate_run = if theta == 0.0 { degenerate_run + 1 } else { 0 };
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::SolverFailure("transportation simplex pivot limit".into()));
        }
    }
}

/// Balanced transportation problem on raw marginals.
pub fn solve_transport(cost: &CostMatrix, supply: &[f64], demand: &[f64], sense: Sense) -> Result<TransportPlan> {
    let (n, m) = (cost.rows(), cost.cols());
    if supply.len() != n || demand.len() != m {
        return Err(Error::invalid(format!("cost is {n}x{m} but marginals have {} and {} entries", supply.len(), demand.len())));
    }
    if n == 0 || m == 0 {
        return Err(Error::invalid("empty marginals"));
    }
    if supply.iter().chain(demand).any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("marginals must be finite and nonnegative"));
    }
    let (ts, td): (f64, f64) = (supply.iter().sum(), demand.iter().sum());
    if (ts - td).abs() > 1e-9 * (1.0 + ts.abs()) {
        return Err(Error::invalid(format!("unbalanced marginals: {ts} vs {td}")));
    }
    // Absorb the rounding difference in the last demand.
    let mut demand = demand.to_vec();
    demand[m - 1] = (demand[m - 1] + ts - td).max(0.0);

    let sign = match sense {
        Sense::Min => 1.0,
        Sense::Max => -1.0,
    };
    let signed = |i: usize, j: usize| cost.get(i, j).finite().map(|c| sign * c);
    let scale = 1.0 + cost.entries.iter().filter_map(|c| c.finite()).fold(0.0f64, |a, c| a.max(c.abs()));

    let mut basis = Basis::north_west(supply, &demand);
    let mut pivots = 0;
    let needs_phase_one = basis.arcs.iter().zip(&basis.flow).any(|(&(i, j), &f)| f > 0.0 && signed(i, j).is_none());
    if needs_phase_one {
        let phase_one = |i: usize, j: usize| Some(if signed(i, j).is_some() { 0.0 } else { 1.0 });
        pivots += optimize(&mut basis, &phase_one, 1.0)?;
        let blocked: f64 = basis.arcs.iter().zip(&basis.flow).filter(|(&(i, j), _)| signed(i, j).is_none()).map(|(_, f)| f).sum();
        if blocked > 1e-12 * (1.0 + ts) {
            return Err(Error::Infeasible(format!("every plan uses a forbidden pairing (mass {blocked:e})")));
        }
        for (k, &(i, j)) in basis.arcs.iter().enumerate() {
            if signed(i, j).is_none() {
                basis.flow[k] = 0.0;
            }
        }
    }
    pivots += optimize(&mut basis, &signed, scale)?;

    let adj = basis.adjacency();
    let (u, v) = basis.potentials(&adj, &|i, j| signed(i, j).unwrap_or(0.0));
    let mut coupling = vec![0.0; n * m];
    for (&(i, j), &f) in basis.arcs.iter().zip(&basis.flow) {
        coupling[i * m + j] += f;
    }
    let mut value = 0.0;
    for (&(i, j), &f) in basis.arcs.iter().zip(&basis.flow) {
        if f > 0.0 {
            value += f * cost.get(i, j).to_f64();
        }
    }
    // Min-sense potentials for the signed cost: φ₀ = -u, φ₁ = v.
    let dual_source: Vec<f64> = u.iter().map(|x| -sign * x).collect();
    let dual_target: Vec<f64> = v.iter().map(|x| sign * x).collect();
    let shift = dual_source[0];
    Ok(TransportPlan {
        coupling,
        rows: n,
        cols: m,
        value,
        dual_source: dual_source.iter().map(|x| x - shift).collect(),
        dual_target: dual_target.iter().map(|x| x - shift).collect(),
        sense,
        pivots,
    })
}

pub fn solve_kantorovich(cost: &CostMatrix, src: &DiscreteMeasure, tgt: &DiscreteMeasure, sense: Sense) -> Result<TransportPlan> {
    solve_transport(cost, src.weights(), tgt.weights(), sense)
}

/// Optimal transport for the inner-product cost `⟨v, x⟩`.
#[allow(non_snake_case)]
pub fn brenier_W(mu: &DiscreteMeasure, nu: &DiscreteMeasure, sense: Sense) -> Result<TransportPlan> {
    let cost = CostMatrix::inner_product(mu, nu)?;
    solve_kantorovich(&cost, mu, nu, sense)
}

/// Comonotone (quantile-matching) coupling of two 1-d measures, optimal for
/// `max ⟨v, x⟩`.
pub fn monotone_coupling_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<TransportPlan> {
    let xs = mu.coords_1d()?;
    let ys = nu.coords_1d()?;
    let mut oi: Vec<usize> = (0..xs.len()).collect();
    let mut oj: Vec<usize> = (0..ys.len()).collect();
    oi.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    oj.sort_by(|&a, &b| ys[a].total_cmp(&ys[b]));
    let s: Vec<f64> = oi.iter().map(|&i| mu.weights()[i]).collect();
    let mut d: Vec<f64> = oj.iter().map(|&j| nu.weights()[j]).collect();
    let diff: f64 = s.iter().sum::<f64>() - d.iter().sum::<f64>();
    let last = d.len() - 1;
    d[last] = (d[last] + diff).max(0.0);
    let basis = Basis::north_west(&s, &d);
    let (n, m) = (xs.len(), ys.len());
    let mut coupling = vec![0.0; n * m];
    let mut value = 0.0;
    for (&(a, b), &f) in basis.arcs.iter().zip(&basis.flow) {
        let (i, j) = (oi[a], oj[b]);
        coupling[i * m + j] += f;
        value += f * xs[i] * ys[j];
    }
    // Staircase potentials for the negated cost, mapped back to input order.
    let adj = basis.adjacency();
    let (u, v) = basis.potentials(&adj, &|a, b| -xs[oi[a]] * ys[oj[b]]);
    let mut dual_source = vec![0.0; n];
    let mut dual_target = vec![0.0; m];
    for (a, &i) in oi.iter().enumerate() {
        dual_source[i] = u[a];
    }
    for (b, &j) in oj.iter().enumerate() {
        dual_target[j] = -v[b];
    }
    let shift = dual_source[0];
    Ok(TransportPlan {
        coupling,
        rows: n,
        cols: m,
        value,
        dual_source: dual_source.iter().map(|x| x - shift).collect(),
        dual_target: dual_target.iter().map(|x| x - shift).collect(),
        sense: Sense::Max,
        pivots: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformDirection {
    /// Source potential to target potential: `φ₁(j) = min_i c(i,j) + φ₀(i)` (max for `Sense::Max`).
    SourceToTarget,
    /// Target potential to source potential: `φ₀(i) = max_j φ₁(j) - c(i,j)` (min for `Sense::Max`).
    TargetToSource,
}

pub fn c_transform(potential: &[f64], cost: &CostMatrix, direction: TransformDirection, sense: Sense) -> Vec<ExtReal> {
    let (n, m) = (cost.rows(), cost.cols());
    match direction {
        TransformDirection::SourceToTarget => (0..m)
            .map(|j| {
                let terms = (0..n).map(|i| cost.get(i, j).add_f64(potential[i]));
                match sense {
                    Sense::Min => terms.fold(ExtReal::PosInf, ExtReal::min),
                    Sense::Max => terms.filter(|t| t.is_finite()).fold(ExtReal::NegInf, ExtReal::max),
                }
            })
            .collect(),
        TransformDirection::TargetToSource => (0..n)
            .map(|i| {
                let terms = (0..m).map(|j| cost.get(i, j).neg().add_f64(potential[j]));
                match sense {
                    Sense::Min => terms.fold(ExtReal::NegInf, ExtReal::max),
                    Sense::Max => terms.filter(|t| t.is_finite()).fold(ExtReal::PosInf, ExtReal::min),
                }
            })
            .collect(),
    }
}
