//! Dense two-phase simplex for small linear programs, and a Kelley cutting-plane
//! maximizer for polyhedral concave functions built on it.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
struct Row {
    coefs: Vec<(usize, f64)>,
    kind: RowKind,
    rhs: f64,
}

/// `min cᵀx` subject to sparse rows and per-variable bounds.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Sensitivity of the optimal value to each row's right-hand side.
    pub duals: Vec<f64>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with bounds `lo <= x <= hi` (infinite bounds allowed).
    pub fn add_var(&mut self, cost: f64, lo: f64, hi: f64) -> usize {
        self.cost.push(cost);
        self.lower.push(lo);
        self.upper.push(hi);
        self.cost.len() - 1
    }

    pub fn add_row(&mut self, coefs: Vec<(usize, f64)>, kind: RowKind, rhs: f64) -> usize {
        self.rows.push(Row { coefs, kind, rhs });
        self.rows.len() - 1
    }

    pub fn n_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn solve(&self) -> Result<LpSolution> {
        // Standard form: original x_j = offset_j + Σ sign * standard columns.
        let mut map: Vec<Vec<(usize, f64)>> = Vec::with_capacity(self.n_vars());
        let mut offset = vec![0.0; self.n_vars()];
        let mut ncols = 0;
        let mut bound_rows: Vec<(usize, f64)> = Vec::new();
        for j in 0..self.n_vars() {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo > hi {
                return Err(Error::Infeasible(format!("variable {j} has empty bounds")));
            }
            if lo.is_finite() {
                offset[j] = lo;
                map.push(vec![(ncols, 1.0)]);
                if hi.is_finite() {
                    bound_rows.push((ncols, hi - lo));
                }
                ncols += 1;
            } else if hi.is_finite() {
                offset[j] = hi;
                map.push(vec![(ncols, -1.0)]);
                ncols += 1;
            } else {
                map.push(vec![(ncols, 1.0), (ncols + 1, -1.0)]);
                ncols += 2;
            }
        }
        let n_struct = ncols;
        let m = self.rows.len() + bound_rows.len();
        // Each inequality row gets a slack column.
        let n_slack = self.rows.iter().filter(|r| r.kind != RowKind::Eq).count() + bound_rows.len();
        let n = n_struct + n_slack;
        let mut a = DMatrix::<f64>::zeros(m, n);
        let mut b = vec![0.0; m];
        let mut c = vec![0.0; n];
        let mut obj_offset = 0.0;
        for j in 0..self.n_vars() {
            obj_offset += self.cost[j] * offset[j];
            for &(k, s) in &map[j] {
                c[k] += self.cost[j] * s;
            }
        }
        let mut slack = n_struct;
        for (i, row) in self.rows.iter().enumerate() {
            let mut rhs = row.rhs;
            for &(j, v) in &row.coefs {
                rhs -= v * offset[j];
                for &(k, s) in &map[j] {
                    a[(i, k)] += v * s;
                }
            }
            match row.kind {
                RowKind::Le => {
                    a[(i, slack)] = 1.0;
                    slack += 1;
                }
                RowKind::Ge => {
                    a[(i, slack)] = -1.0;
                    slack += 1;
                }
                RowKind::Eq => {}
            }
            b[i] = rhs;
        }
        for (r, &(k, cap)) in bound_rows.iter().enumerate() {
            let i = self.rows.len() + r;
            a[(i, k)] = 1.0;
            a[(i, slack)] = 1.0;
            slack += 1;
            b[i] = cap;
        }
        let (xs, y) = simplex_standard(&a, &b, &c)?;
        let x: Vec<f64> = (0..self.n_vars()).map(|j| offset[j] + map[j].iter().map(|&(k, s)| s * xs[k]).sum::<f64>()).collect();
        let objective = obj_offset + c.iter().zip(&xs).map(|(ci, xi)| ci * xi).sum::<f64>();
        Ok(LpSolution { x, objective, duals: y[..self.rows.len()].to_vec() })
    }
}

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;

/// `min cᵀx, Ax = b, x >= 0`. Returns the primal solution and the row duals `y`
/// with `Aᵀy <= c`.
fn simplex_standard(a: &DMatrix<f64>, b: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (m, n) = a.shape();
    if m == 0 {
        if c.iter().any(|&ci| ci < 0.0) {
            return Err(Error::UnboundedBelow("linear program is unbounded".into()));
        }
        return Ok((vec![0.0; n], vec![]));
    }
    // Tableau with artificials; rows flipped so b >= 0.
    let width = n + m + 1;
    let mut t = DMatrix::<f64>::zeros(m + 1, width);
    for i in 0..m {
        let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[(i, j)] = s * a[(i, j)];
        }
        t[(i, n + i)] = 1.0;
        t[(i, width - 1)] = s * b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    // Phase 1 objective: sum of artificials, written in reduced form.
    for j in 0..width {
        if (n..n + m).contains(&j) {
            continue;
        }
        let s: f64 = (0..m).map(|i| t[(i, j)]).sum();
        t[(m, j)] = -s;
    }
    run_simplex(&mut t, &mut basis, n + m)?;
    let infeas = -t[(m, width - 1)];
    let scale = 1.0 + b.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if infeas > 1e-8 * scale {
        return Err(Error::Infeasible(format!("phase-one residual {infeas:e}")));
    }
    // Drive artificials out of the basis where possible.
    let mut redundant = vec![false; m];
    for i in 0..m {
        if basis[i] >= n {
            let col = (0..n).filter(|&j| t[(i, j)].abs() > 1e-9).max_by(|&p, &q| t[(i, p)].abs().total_cmp(&t[(i, q)].abs()));
            match col {
                Some(j) => pivot(&mut t, &mut basis, i, j),
                None => redundant[i] = true,
            }
        }
    }
    // Phase 2: artificial columns are frozen out.
    for j in 0..width {
        t[(m, j)] = 0.0;
    }
    for j in 0..n {
        t[(m, j)] = c[j];
    }
    for i in 0..m {
        let j = basis[i];
        if j < n && c[j] != 0.0 {
            let f = c[j];
            for k in 0..width {
                let v = t[(i, k)];
                t[(m, k)] -= f * v;
            }
        }
    }
    run_simplex(&mut t, &mut basis, n)?;
    let mut x = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = t[(i, width - 1)].max(0.0);
        }
    }
    // Duals from Bᵀy = c_B on non-redundant rows.
    let rows: Vec<usize> = (0..m).filter(|&i| !redundant[i]).collect();
    let k = rows.len();
    let mut bt = DMatrix::<f64>::zeros(k, k);
    let mut cb = DVector::<f64>::zeros(k);
    for (col, &i) in rows.iter().enumerate() {
        let j = basis[i];
        cb[col] = if j < n { c[j] } else { 0.0 };
        for (r, &ri) in rows.iter().enumerate() {
            bt[(col, r)] = if j < n {
                a[(ri, j)]
            } else if j - n == ri {
                1.0
            } else {
                0.0
            };
        }
    }
    let yk = bt.lu().solve(&cb).ok_or_else(|| Error::SolverFailure("singular final basis".into()))?;
    let mut y = vec![0.0; m];
    for (r, &i) in rows.iter().enumerate() {
        y[i] = yk[r];
    }
    Ok((x, y))
}

fn pivot(t: &mut DMatrix<f64>, basis: &mut [usize], r: usize, c: usize) {
    let (rows, width) = t.shape();
    let p = t[(r, c)];
    for k in 0..width {
        t[(r, k)] /= p;
    }
    for i in 0..rows {
        if i == r {
            continue;
        }
        let f = t[(i, c)];
        if f != 0.0 {
            for k in 0..width {
                let v = t[(r, k)];
                if v != 0.0 {
                    t[(i, k)] -= f * v;
                }
            }
        }
    }
    basis[r] = c;
}

/// Minimizes the objective row over columns `0..active`. Dantzig pricing,
/// switching to Bland's rule after a run of degenerate pivots.
fn run_simplex(t: &mut DMatrix<f64>, basis: &mut [usize], active: usize) -> Result<()> {
    let (rows, width) = t.shape();
    let m = rows - 1;
    let rhs = width - 1;
    let mut degenerate = 0usize;
    for _ in 0..200_000 {
        let bland = degenerate > 30;
        let mut enter = None;
        let mut best = -COST_TOL;
        for j in 0..active {
            let d = t[(m, j)];
            if d < best {
                enter = Some(j);
                if bland {
                    break;
                }
                best = d;
            }
        }
        let Some(e) = enter else {
            return Ok(());
        };
        let mut leave: Option<usize> = None;
        let mut ratio = f64::INFINITY;
        for i in 0..m {
            let a = t[(i, e)];
            if a > PIVOT_TOL {
                let r = t[(i, rhs)].max(0.0) / a;
                let better = match leave {
                    None => true,
                    Some(l) => r < ratio - 1e-12 || (r <= ratio + 1e-12 && basis[i] < basis[l]),
                };
                if better {
                    ratio = r.min(ratio);
                    leave = Some(i);
                }
            }
        }
        let Some(l) = leave else {
            return Err(Error::UnboundedBelow("linear program is unbounded".into()));
        };
        degenerate = if ratio <= 1e-12 { degenerate + 1 } else { 0 };
        pivot(t, basis, l, e);
    }
    Err(Error::SolverFailure("simplex iteration limit".into()))
}

/// Outcome of a cutting-plane maximization.
#[derive(Debug, Clone)]
pub struct CuttingPlaneResult {
    /// Best point evaluated.
    pub x: Vec<f64>,
    /// Objective at `x`.
    pub value: f64,
    /// Upper bound on the supremum from the final master problem.
    pub upper: f64,
    pub certified: bool,
    pub iterations: usize,
    /// Cut points and master weights (`Σ weights = 1`) at termination.
    pub cut_points: Vec<Vec<f64>>,
    pub cut_weights: Vec<f64>,
}

/// Kelley's method for `sup F` where `F` is concave and polyhedral and
/// `oracle(x) = (F(x), supergradient)`. Coordinate `pinned` is fixed at 0 when
/// `F` is invariant under constant shifts. The master works in a box of the
/// given radius around `start`, doubled whenever its solution touches the box.
pub fn maximize_concave(
    dim: usize,
    pinned: Option<usize>,
    mut radius: f64,
    tol: f64,
    max_iter: usize,
    start: Vec<f64>,
    mut oracle: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
) -> Result<CuttingPlaneResult> {
    let mut cuts: Vec<(Vec<f64>, f64, Vec<f64>)> = Vec::new();
    let center = start.clone();
    let mut x = start;
    let (mut best_x, mut best) = (x.clone(), f64::NEG_INFINITY);
    let mut upper = f64::INFINITY;
    let mut weights = Vec::new();
    let mut stall = 0usize;
    for it in 0..max_iter {
        let (fx, g) = oracle(&x)?;
        if !fx.is_finite() {
            return Err(Error::SolverFailure("cutting-plane oracle returned a non-finite value".into()));
        }
        if fx > best {
            best = fx;
            best_x = x.clone();
        }
        cuts.push((x.clone(), fx, g));
        // Master: max t s.t. t <= f_k + g_k (y - x_k), y in box.
        let mut lp = LinearProgram::new();
        let vars: Vec<usize> = (0..dim)
            .map(|k| if Some(k) == pinned { lp.add_var(0.0, 0.0, 0.0) } else { lp.add_var(0.0, center[k] - radius, center[k] + radius) })
            .collect();
        // The cut model is >= best everywhere it was evaluated, so this floor never
        // binds; it keeps t from being split into a free pair.
        let tv = lp.add_var(-1.0, best - 1.0 - best.abs(), f64::INFINITY);
        for (xk, fk, gk) in &cuts {
            let mut coefs: Vec<(usize, f64)> = vec![(tv, 1.0)];
            let mut rhs = *fk;
            for k in 0..dim {
                if gk[k] != 0.0 {
                    coefs.push((vars[k], -gk[k]));
                    rhs -= gk[k] * xk[k];
                }
            }
            lp.add_row(coefs, RowKind::Le, rhs);
        }
        // A degenerate master near convergence can trip the simplex; the best
        // evaluated point is still valid, so stop there uncertified.
        let sol = match lp.solve() {
            Ok(sol) => sol,
            Err(_) if it > 0 => break,
            Err(e) => return Err(e),
        };
        let y: Vec<f64> = vars.iter().map(|&v| sol.x[v]).collect();
        let t = sol.x[tv];
        weights = sol.duals.iter().map(|d| -d).collect();
        let on_box = y.iter().zip(&center).any(|(v, c)| (v - c).abs() >= radius * (1.0 - 1e-9));
        if on_box {
            radius *= 2.0;
        } else {
            upper = upper.min(t);
        }
        let gap = upper - best;
        if gap <= tol * (1.0 + best.abs()) && !on_box {
            return Ok(CuttingPlaneResult {
                x: best_x,
                value: best,
                upper,
                certified: true,
                iterations: it + 1,
                cut_points: cuts.into_iter().map(|c| c.0).collect(),
                cut_weights: weights,
            });
        }
        let moved = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        stall = if moved < 1e-13 { stall + 1 } else { 0 };
        if stall > 3 {
            break;
        }
        x = y;
    }
    weights.resize(cuts.len(), 0.0);
    Ok(CuttingPlaneResult {
        x: best_x,
        value: best,
        upper,
        certified: false,
        iterations: cuts.len(),
        cut_points: cuts.into_iter().map(|c| c.0).collect(),
        cut_weights: weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn small_lp_with_duals() {
        // max 3x + 2y s.t. x + y <= 4, x + 3y <= 6, x <= 3
        let mut lp = LinearProgram::new();
        let x = lp.add_var(-3.0, 0.0, 3.0);
        let y = lp.add_var(-2.0, 0.0, f64::INFINITY);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], RowKind::Le, 4.0);
        lp.add_row(vec![(x, 1.0), (y, 3.0)], RowKind::Le, 6.0);
        let s = lp.solve().unwrap();
        assert_abs_diff_eq!(s.objective, -11.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.x[x], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.x[y], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.duals[0], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.duals[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn free_variables_and_equalities() {
        // min |a| style: min t s.t. t >= x - 1, t >= 1 - x, x + z = 5, z free, x <= 10
        let mut lp = LinearProgram::new();
        let t = lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
        let x = lp.add_var(0.0, f64::NEG_INFINITY, 10.0);
        let z = lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY);
        lp.add_row(vec![(t, 1.0), (x, -1.0)], RowKind::Ge, -1.0);
        lp.add_row(vec![(t, 1.0), (x, 1.0)], RowKind::Ge, 1.0);
        lp.add_row(vec![(x, 1.0), (z, 1.0)], RowKind::Eq, 5.0);
        let s = lp.solve().unwrap();
        assert_abs_diff_eq!(s.objective, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.x[x] + s.x[z], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, 0.0, 1.0);
        lp.add_row(vec![(x, 1.0)], RowKind::Ge, 2.0);
        assert!(matches!(lp.solve(), Err(Error::Infeasible(_))));
        let mut lp = LinearProgram::new();
        let x = lp.add_var(-1.0, 0.0, f64::INFINITY);
        lp.add_row(vec![(x, 1.0)], RowKind::Ge, 2.0);
        assert!(matches!(lp.solve(), Err(Error::UnboundedBelow(_))));
    }

    #[test]
    fn cutting_plane_finds_max_of_piecewise_linear() {
        // F(x) = min(x0 + 1, 3 - x0, 2 - |x1 - 0.5|)
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let pieces = [
                (x[0] + 1.0, vec![1.0, 0.0]),
                (3.0 - x[0], vec![-1.0, 0.0]),
                (2.0 - (x[1] - 0.5), vec![0.0, -1.0]),
                (2.0 + (x[1] - 0.5), vec![0.0, 1.0]),
            ];
            let (v, g) = pieces.into_iter().min_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
            Ok((v, g))
        };
        let r = maximize_concave(2, None, 1.0, 1e-12, 100, vec![0.0, 0.0], f).unwrap();
        assert!(r.certified);
        assert_abs_diff_eq!(r.value, 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.cut_weights.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }
}
