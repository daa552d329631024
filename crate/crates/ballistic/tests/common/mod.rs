#![allow(dead_code)]
//! Oracles shared by the integration tests.

use ballistic::bolza::BoundaryCost;
use ballistic::convex_core::LagrangianSpec;
use ballistic::lp::{LinearProgram, RowKind};
use ballistic::stochastic_ctrl::WalkLattice;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `c_T` for `α x²/2 + β p²/2` from the Euler–Lagrange solution `x'' = (α/β) x`.
pub fn harmonic_c(alpha: f64, beta: f64, y: f64, x: f64, t: f64) -> f64 {
    let w = (alpha / beta).sqrt();
    beta * w * ((y * y + x * x) * (w * t).cosh() - 2.0 * x * y) / (2.0 * (w * t).sinh())
}

/// `b_T = inf_y v y + c_T(y, x)` for the harmonic family; `c_T` is
/// `A (y² + x²) - B x y`, minimized at `y = (B x - v) / (2A)`.
pub fn harmonic_b(alpha: f64, beta: f64, v: f64, x: f64, t: f64) -> f64 {
    let w = (alpha / beta).sqrt();
    let a = beta * w / (2.0 * (w * t).tanh());
    let b = beta * w / (w * t).sinh();
    a * x * x - (b * x - v).powi(2) / (4.0 * a)
}

/// Dense LP over an explicit `n × m` coupling; `sign = -1` maximizes.
pub fn coupling_lp(cost: &[f64], a: &[f64], b: &[f64], sign: f64) -> f64 {
    let (n, m) = (a.len(), b.len());
    let mut lp = LinearProgram::new();
    let vars: Vec<usize> = cost.iter().map(|&c| lp.add_var(sign * c, 0.0, f64::INFINITY)).collect();
    for i in 0..n {
        lp.add_row((0..m).map(|j| (vars[i * m + j], 1.0)).collect(), RowKind::Eq, a[i]);
    }
    for j in 0..m {
        lp.add_row((0..n).map(|i| (vars[i * m + j], 1.0)).collect(), RowKind::Eq, b[j]);
    }
    sign * lp.solve().unwrap().objective
}

/// One walk step from node `i` with drift `b`, built from the moment conditions
/// (mean `bΔt`, variance `Δt`) and mirrored at the end nodes.
pub fn step_law(n: usize, dx: f64, dt: f64, i: usize, b: f64) -> Vec<(usize, f64)> {
    let both = (dt + (b * dt).powi(2)) / (dx * dx);
    let diff = b * dt / dx;
    let (up, down) = (0.5 * (both + diff), 0.5 * (both - diff));
    let mirror = |j: isize| -> usize {
        let last = n as isize - 1;
        if j < 0 {
            (-j) as usize
        } else if j > last {
            (2 * last - j) as usize
        } else {
            j as usize
        }
    };
    vec![(mirror(i as isize - 1), down), (i, 1.0 - both), (mirror(i as isize + 1), up)]
}

/// Occupation-measure LP over all randomized Markov drift policies: minimal
/// `E Σ L(X_k, β_k) Δt` moving `start` to `target` in `lat.steps` steps.
pub fn occupation_lp(l: &LagrangianSpec, lat: &WalkLattice, controls: &[f64], start: &[f64], target: &[f64]) -> f64 {
    let (n, k_steps, dt) = (lat.nodes, lat.steps, lat.dt());
    let mut lp = LinearProgram::new();
    // vars[k][i] = list of (control index, var id)
    let mut vars = vec![vec![Vec::new(); n]; k_steps];
    for (k, layer) in vars.iter_mut().enumerate() {
        let _ = k;
        for (i, slot) in layer.iter_mut().enumerate() {
            for &b in controls {
                if let Some(c) = l.eval(&[lat.node(i)], &[b]).finite() {
                    slot.push((b, lp.add_var(c * dt, 0.0, f64::INFINITY)));
                }
            }
        }
    }
    for i in 0..n {
        let row = vars[0][i].iter().map(|&(_, v)| (v, 1.0)).collect();
        lp.add_row(row, RowKind::Eq, start[i]);
    }
    for k in 1..=k_steps {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for i in 0..n {
            for &(b, v) in &vars[k - 1][i] {
                for (j, p) in step_law(n, lat.dx, dt, i, b) {
                    rows[j].push((v, -p));
                }
            }
        }
        for (j, mut row) in rows.into_iter().enumerate() {
            if k < k_steps {
                row.extend(vars[k][j].iter().map(|&(_, v)| (v, 1.0)));
                lp.add_row(row, RowKind::Eq, 0.0);
            } else {
                lp.add_row(row, RowKind::Eq, -target[j]);
            }
        }
    }
    lp.solve().unwrap().objective
}

/// LP over costate occupation measures and a coupling of the terminal costate
/// law with `nu_t`: the maximal stochastic cost on the lattice.
pub fn max_cost_lp(dual: &LagrangianSpec, lat: &WalkLattice, controls: &[f64], start: &[f64], xs: &[f64], wx: &[f64]) -> f64 {
    let (n, k_steps, dt) = (lat.nodes, lat.steps, lat.dt());
    let mut lp = LinearProgram::new();
    let mut vars = vec![vec![Vec::new(); n]; k_steps];
    for layer in vars.iter_mut() {
        for (i, slot) in layer.iter_mut().enumerate() {
            for &b in controls {
                if let Some(c) = dual.eval(&[lat.node(i)], &[b]).finite() {
                    slot.push((b, lp.add_var(c * dt, 0.0, f64::INFINITY)));
                }
            }
        }
    }
    let pair: Vec<Vec<usize>> = (0..n).map(|i| xs.iter().map(|&x| lp.add_var(-lat.node(i) * x, 0.0, f64::INFINITY)).collect()).collect();
    for i in 0..n {
        let row = vars[0][i].iter().map(|&(_, v)| (v, 1.0)).collect();
        lp.add_row(row, RowKind::Eq, start[i]);
    }
    for k in 1..=k_steps {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for i in 0..n {
            for &(b, v) in &vars[k - 1][i] {
                for (j, p) in step_law(n, lat.dx, dt, i, b) {
                    rows[j].push((v, -p));
                }
            }
        }
        for (j, mut row) in rows.into_iter().enumerate() {
            if k < k_steps {
                row.extend(vars[k][j].iter().map(|&(_, v)| (v, 1.0)));
            } else {
                row.extend(pair[j].iter().map(|&v| (v, 1.0)));
            }
            lp.add_row(row, RowKind::Eq, 0.0);
        }
    }
    for (c, &w) in wx.iter().enumerate() {
        lp.add_row((0..n).map(|i| (pair[i][c], 1.0)).collect(), RowKind::Eq, w);
    }
    -lp.solve().unwrap().objective
}

pub fn random_law(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

pub fn quadratic(wa: f64, wb: f64, ca: f64, cb: f64) -> BoundaryCost {
    BoundaryCost::Quadratic { start_weight: wa, end_weight: wb, start_center: vec![ca], end_center: vec![cb] }
}

/// Five Bolza instances covering every boundary-cost family.
pub fn registry_instances() -> Vec<(LagrangianSpec, BoundaryCost)> {
    let h = LagrangianSpec::harmonic(1, 1.0, 1.0).unwrap();
    vec![
        (h.clone(), quadratic(1.0, 2.0, 0.5, -1.0)),
        (LagrangianSpec::harmonic(1, 0.5, 2.0).unwrap(), quadratic(0.7, 1.3, -0.2, 0.8)),
        (h.clone(), BoundaryCost::PinnedStart { start: vec![0.3], end_weight: 1.5, end_center: vec![1.0] }),
        (LagrangianSpec::harmonic(1, 0.5, 2.0).unwrap(), BoundaryCost::PinnedBoth { start: vec![-0.4], end: vec![0.9] }),
        (h, BoundaryCost::LinearInB { costate: vec![0.7], end: vec![-0.5] }),
    ]
}
