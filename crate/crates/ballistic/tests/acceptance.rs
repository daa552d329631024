//! Acceptance criteria 1–11. Runs as a plain binary so each criterion prints
//! one PASS/FAIL line in the `cargo test` log; exits nonzero if any fails.

mod common;

use ballistic::ballistic_det::eulerian::refinement_study;
use ballistic::ballistic_det::*;
use ballistic::bolza::{hamiltonian_system_check, solve_bolza, BolzaInstance};
use ballistic::cli::demo_suite;
use ballistic::convex_core::{dual_lagrangian, golden_max, golden_min, hamiltonian, ConvexFunctionSamples, LagrangianSpec, SampleKind};
use ballistic::dynamic_cost::{ballistic_cost, dual_fixed_end_cost, fixed_end_cost, hopf_lax_backward, hopf_lax_forward};
use ballistic::lattice::Lattice;
use ballistic::measures::{DiscreteMeasure, Space};
use ballistic::stochastic_ctrl::*;
use common::{coupling_lp, harmonic_b, harmonic_c, occupation_lp, random_law, registry_instances};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::time::{Duration, Instant};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn measure(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64, space: Space) -> DiscreteMeasure {
    let xs: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    DiscreteMeasure::on_line(&xs, &random_law(rng, n), space).unwrap()
}

fn sci(xs: &[f64]) -> String {
    format!("[{}]", xs.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", "))
}

fn coords(m: &DiscreteMeasure) -> Vec<f64> {
    m.atoms().iter().map(|a| a[0]).collect()
}

/// Closed-form cost table over all atom pairs.
fn table(mu: &DiscreteMeasure, nu: &DiscreteMeasure, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    coords(mu).iter().flat_map(|&v| coords(nu).into_iter().map(move |x| (v, x))).map(|(v, x)| f(v, x)).collect()
}

fn free_b(v: f64, x: f64, t: f64) -> f64 {
    // inf_y v y + (x - y)²/(2t) at y = x - t v
    let y = x - t * v;
    if t == 0.0 {
        v * x
    } else {
        v * y + (x - y) * (x - y) / (2.0 * t)
    }
}

fn c1_ballistic_cost() -> Verdict {
    let l = LagrangianSpec::quadratic_free(1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (v, x, t) = (rng.random_range(-2.0..2.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..2.0));
        worst = worst.max((ballistic_cost(&l, &[v], &[x], t).unwrap() - free_b(v, x, t)).abs());
    }
    // Forward Hopf–Lax of linear data f(y) = v y is b_T(v, ·).
    let (v, t) = (0.7, 1.0);
    let eval = Lattice::uniform(1, -1.013, 1.021, 23).unwrap();
    let mut errors = Vec::new();
    for n in [41, 81, 161] {
        let data = Lattice::uniform(1, -4.0, 4.0, n).unwrap();
        let f = ConvexFunctionSamples::from_fn(data, SampleKind::Concave, |y| v * y[0]).unwrap();
        let field = hopf_lax_forward(&l, &f, t, &eval).unwrap();
        let err = eval.points().iter().zip(field.slice(1)).map(|(x, phi)| (phi.to_f64() - free_b(v, x[0], t)).abs()).fold(0.0, f64::max);
        errors.push(err);
    }
    let halves = errors.windows(2).all(|w| w[1] <= 0.5 * w[0]);
    verdict(worst <= 1e-6 && errors[2] <= 1e-3 && halves, format!("max |b - closed form| {worst:.2e}; grid errors {}", sci(&errors)))
}

fn c2_min_interpolation() -> Verdict {
    let l = LagrangianSpec::quadratic_free(1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_eq, mut worst_lp, mut worst_ineq) = (0.0f64, 0.0f64, f64::INFINITY);
    for _ in 0..25 {
        let (n, m) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let mu = measure(&mut rng, n, -1.0, 1.0, Space::Costate);
        let nu = measure(&mut rng, m, -2.0, 2.0, Space::State);
        let t = rng.random_range(0.5..1.5);
        let mut grid: Vec<Vec<f64>> = coords(&mu).iter().flat_map(|&v| coords(&nu).into_iter().map(move |x| vec![x - t * v])).collect();
        grid.extend((0..5).map(|_| vec![rng.random_range(-3.0..3.0)]));
        let cert = interpolate_min(&l, &mu, &nu, t, &grid).unwrap();
        let oracle = coupling_lp(&table(&mu, &nu, |v, x| free_b(v, x, t)), mu.weights(), nu.weights(), 1.0);
        worst_eq = worst_eq.max((cert.w_part + cert.c_part - cert.direct_value).abs());
        worst_lp = worst_lp.max((cert.direct_value - oracle).abs());
        for _ in 0..10 {
            let n_cand = rng.random_range(1..=5);
            let cand = measure(&mut rng, n_cand, -3.0, 3.0, Space::State);
            let w = coupling_lp(&table(&mu, &cand, |v, y| v * y), mu.weights(), cand.weights(), 1.0);
            let c = coupling_lp(&table(&cand, &nu, |y, x| (x - y) * (x - y) / (2.0 * t)), cand.weights(), nu.weights(), 1.0);
            let (lw, lc) = interpolation_bound(&l, &mu, &cand, &nu, t).unwrap();
            worst_ineq = worst_ineq.min(w + c - oracle).min(lw + lc - cert.direct_value);
        }
    }
    verdict(
        worst_eq <= 1e-7 && worst_lp <= 1e-7 && worst_ineq >= -1e-9,
        format!("|three-marginal - LP| {worst_eq:.2e}; |LP - oracle| {worst_lp:.2e}; min candidate excess {worst_ineq:.3e}"),
    )
}

fn c3_max_interpolation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_gap, mut worst_lp, mut worst_ineq) = (0.0f64, 0.0f64, f64::INFINITY);
    for _ in 0..10 {
        let (alpha, beta) = (rng.random_range(0.5..1.5), rng.random_range(0.5..1.5));
        let l = LagrangianSpec::harmonic(1, alpha, beta).unwrap();
        let t = rng.random_range(0.5..1.5);
        let n_mu = rng.random_range(1..=4);
        let mu = measure(&mut rng, n_mu, -1.0, 1.0, Space::Costate);
        let n_nu = rng.random_range(1..=4);
        let nu = measure(&mut rng, n_nu, -1.0, 1.0, Space::State);
        let cert = interpolate_max(&l, &mu, &nu, t).unwrap();
        let oracle = coupling_lp(&table(&mu, &nu, |v, x| harmonic_b(alpha, beta, v, x, t)), mu.weights(), nu.weights(), -1.0);
        worst_gap = worst_gap.max(cert.gap.abs());
        worst_lp = worst_lp.max((cert.direct_value - oracle).abs());
        for _ in 0..20 {
            let n_cand = rng.random_range(1..=4);
            let cand = measure(&mut rng, n_cand, -2.0, 2.0, Space::Costate);
            let (w, ct) = max_interpolation_bound(&l, &mu, &cand, &nu, t).unwrap();
            worst_ineq = worst_ineq.min(cert.direct_value - (w - ct));
        }
    }
    verdict(
        worst_gap <= 1e-4 && worst_lp <= 1e-4 && worst_ineq >= -1e-7,
        format!("max certificate gap {worst_gap:.2e}; |LP - oracle| {worst_lp:.2e}; min excess over 200 candidates {worst_ineq:.3e}"),
    )
}

fn c4_optimal_maps() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let qf = LagrangianSpec::quadratic_free(1);
    let harm = LagrangianSpec::harmonic(1, 1.0, 1.0).unwrap();
    let (mut hits, mut worst_cost, mut failures) = (0, 0.0f64, Vec::new());
    for k in 0..10 {
        let n = rng.random_range(2..=4);
        let mu = measure(&mut rng, n, -1.0, 1.0, Space::Costate);
        let n_nu = rng.random_range(2..=4);
        let nu = measure(&mut rng, n_nu, -1.5, 1.5, Space::State);
        for (name, l, sign, b) in [
            ("min", &qf, 1.0, Box::new(|v, x| free_b(v, x, 1.0)) as Box<dyn Fn(f64, f64) -> f64>),
            ("max", &harm, -1.0, Box::new(|v, x| harmonic_b(1.0, 1.0, v, x, 1.0))),
        ] {
            let report = if sign > 0.0 { optimal_map_min(l, &mu, &nu, 1.0) } else { optimal_map_max(l, &mu, &nu, 1.0) };
            let r = match report {
                Ok(r) => r,
                Err(e) => {
                    failures.push(format!("{name} #{k}: {e}"));
                    continue;
                }
            };
            let oracle = coupling_lp(&table(&mu, &nu, b), mu.weights(), nu.weights(), sign);
            let hit = r.pushforward.merged().unwrap().approx_eq(&nu, 1e-9, 1e-3);
            let err = (r.transported_cost - oracle).abs();
            worst_cost = worst_cost.max(err);
            if hit {
                hits += 1;
            } else {
                failures.push(format!("{name} #{k}: push-forward misses target"));
            }
        }
    }
    verdict(
        hits == 20 && worst_cost <= 1e-3 && failures.is_empty(),
        format!(
            "{hits}/20 push-forwards hit the target; max |cost - LP| {worst_cost:.2e}{}",
            if failures.is_empty() { String::new() } else { format!("; {failures:?}") }
        ),
    )
}

fn c5_bolza() -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for (l, ell) in registry_instances() {
        let h = hamiltonian(&l).unwrap();
        let (mut gaps, mut residuals) = (Vec::new(), Vec::new());
        for n in [32, 64, 128, 256] {
            let sol = solve_bolza(&BolzaInstance::new(l.clone(), ell.clone(), 1.0, n).unwrap()).unwrap();
            let r = hamiltonian_system_check(&sol, &h).unwrap();
            gaps.push((sol.gap.abs(), 1e-12 * (1.0 + sol.primal_value.abs())));
            residuals.push(r.max_residual);
        }
        let gap_ok = gaps[3].0 <= 1e-5 && gaps.windows(2).all(|w| w[1].0 <= w[0].0 + w[1].1);
        let ratios: Vec<f64> = residuals.windows(2).map(|w| w[1] / w[0]).collect();
        let res_ok = ratios.iter().all(|&r| r <= 0.55);
        ok &= gap_ok && res_ok;
        notes.push(format!("{} gap {:.1e} ratios {:.3?}", ell.name(), gaps[3].0, ratios));
    }
    verdict(ok, notes.join("; "))
}

fn c6_triple_duality() -> Verdict {
    let l = LagrangianSpec::harmonic(1, 0.8, 1.2).unwrap();
    let dual = dual_lagrangian(&l).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let b = |v: f64, x: f64, t: f64| ballistic_cost(&l, &[v], &[x], t).unwrap();
    let mut worst = [0.0f64; 3];
    for _ in 0..50 {
        let (v, x, y) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let t = rng.random_range(0.5..1.5);
        let bvx = b(v, x, t);
        let c = |y: f64, x: f64| fixed_end_cost(&l, &[y], &[x], t).unwrap().to_f64();
        let (_, inf_y) = golden_min(&|y| v * y + c(y, x), -8.0, 8.0, 1e-7);
        let (_, sup_v) = golden_max(&|v| b(v, x, t) - v * y, -8.0, 8.0, 1e-7);
        let ct = |w: f64| dual_fixed_end_cost(&dual, &[v], &[w], t).unwrap().to_f64();
        let (_, sup_w) = golden_max(&|w| w * x - ct(w), -8.0, 8.0, 1e-7);
        worst[0] = worst[0].max((bvx - inf_y).abs());
        worst[1] = worst[1].max((c(y, x) - sup_v).abs());
        worst[2] = worst[2].max((bvx - sup_w).abs());
        // anchor against the closed form as well
        worst[0] = worst[0].max((bvx - harmonic_b(0.8, 1.2, v, x, t)).abs());
        worst[1] = worst[1].max((c(y, x) - harmonic_c(0.8, 1.2, y, x, t)).abs());
    }
    verdict(
        worst.iter().all(|&w| w <= 1e-3),
        format!("max errors b=inf_y {:.2e}, c=sup_v {:.2e}, b=sup_w {:.2e}", worst[0], worst[1], worst[2]),
    )
}

fn c7_hjb() -> Verdict {
    let l = LagrangianSpec::quadratic_free(1);
    let mut notes = Vec::new();
    let mut ok = true;

    let lat = WalkLattice::covering(-1.0, 1.0, 1.0, 200, 0.5).unwrap();
    let c = ControlSet::uniform(3.0, 20).unwrap();
    let mut worst_rel: f64 = 0.0;
    for v in [0.6, -0.9, 1.5] {
        let f: Vec<f64> = lat.points().iter().map(|x| v * x).collect();
        let field = hjb_backward(&l, &f, &lat, &c).unwrap();
        let (mut err, mut scale): (f64, f64) = (0.0, 0.0);
        for (i, x) in lat.points().into_iter().enumerate() {
            if (-1.0..=1.0).contains(&x) {
                // constant drift v: E[v X_T] - T v²/2 from X_0 = x
                let exact = v * x + 0.5 * v * v;
                err = err.max((field.values[0][i] - exact).abs());
                scale = scale.max(exact.abs());
            }
        }
        worst_rel = worst_rel.max(err / scale);
    }
    ok &= worst_rel <= 0.02;
    notes.push(format!("linear terminal rel. error {worst_rel:.2e}"));

    let lat = WalkLattice::covering(-1.0, 1.0, 1.0, 40, 0.5).unwrap();
    let c = ControlSet::uniform(3.0, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut shift_err, mut monotone) = (0.0f64, true);
    for _ in 0..10 {
        let f1: Vec<f64> = (0..lat.nodes).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f2: Vec<f64> = f1.iter().map(|v| v + rng.random_range(0.0..0.5)).collect();
        let shift = rng.random_range(-3.0..3.0);
        let p1 = hjb_backward(&l, &f1, &lat, &c).unwrap();
        let p2 = hjb_backward(&l, &f2, &lat, &c).unwrap();
        let ps = hjb_backward(&l, &f1.iter().map(|v| v + shift).collect::<Vec<_>>(), &lat, &c).unwrap();
        for k in 0..=lat.steps {
            for i in 0..lat.nodes {
                monotone &= p1.values[k][i] <= p2.values[k][i];
                shift_err = shift_err.max((ps.values[k][i] - p1.values[k][i] - shift).abs() / (1.0 + shift.abs()));
            }
        }
    }
    ok &= monotone && shift_err <= 1e-12;
    notes.push(format!("monotone {monotone}; shift residual {shift_err:.1e}"));

    let mut errors = Vec::new();
    for dx in [0.1f64, 0.05, 0.025] {
        let n = (6.0 / dx).round() as usize + 1;
        let lat = WalkLattice::noiseless(-3.0, 3.0, n, 1.0, (1.0 / dx).round() as usize).unwrap();
        let c = ControlSet::uniform(3.0, (3.0 / dx).round() as usize).unwrap();
        let f: Vec<f64> = lat.points().iter().map(|x| (2.0 * x).sin()).collect();
        let field = hjb_backward(&l, &f, &lat, &c).unwrap();
        let data = ConvexFunctionSamples::new(Lattice::uniform(1, -3.0, 3.0, n).unwrap(), f, SampleKind::General).unwrap();
        let eval = Lattice::uniform(1, -1.0, 1.0, (2.0 / dx).round() as usize + 1).unwrap();
        let hl = hopf_lax_backward(&l, &data, 0.0, 1.0, &eval).unwrap();
        let err = eval
            .points()
            .iter()
            .zip(hl.slice(0))
            .map(|(x, v)| (field.values[0][lat.node_index(x[0]).unwrap()] - v.to_f64()).abs())
            .fold(0.0, f64::max);
        errors.push((dx, err));
    }
    let constant = errors.iter().map(|(dx, e)| e / dx).fold(0.0, f64::max);
    ok &= errors.windows(2).all(|w| w[1].1 <= 0.6 * w[0].1) && constant <= 0.5;
    notes.push(format!("zero-noise errors {}, constant {constant:.3}", sci(&errors.iter().map(|e| e.1).collect::<Vec<_>>())));
    verdict(ok, notes.join("; "))
}

fn c8_mt_cost() -> Verdict {
    let lat = WalkLattice::new(0.0, 4.0, 5, 2.0, 4).unwrap();
    let c = ControlSet::from_values(vec![-1.0, 0.0, 1.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for l in [LagrangianSpec::quadratic_free(1), LagrangianSpec::harmonic(1, 1.0, 1.0).unwrap()] {
        for _ in 0..6 {
            let nu0 = random_law(&mut rng, lat.nodes);
            let policy = |rng: &mut ChaCha8Rng| {
                let choice = (0..lat.steps).map(|_| (0..lat.nodes).map(|_| rng.random_range(0..c.len())).collect()).collect();
                ControlPolicy::from_choice(&lat, &c, choice)
            };
            let a = simulate_policy(&l, &policy(&mut rng), &nu0).unwrap().law;
            let b = simulate_policy(&l, &policy(&mut rng), &nu0).unwrap().law;
            let s: f64 = rng.random_range(0.0..1.0);
            let nu_t: Vec<f64> = a.iter().zip(&b).map(|(x, y)| s * x + (1.0 - s) * y).collect();
            let r = mt_cost_nodes(&l, &nu0, &nu_t, &lat, &c, None).unwrap();
            worst = worst.max((r.value - occupation_lp(&l, &lat, &c.values, &nu0, &nu_t)).abs());
        }
    }
    let l = LagrangianSpec::quadratic_free(1);
    let nu0 = [0.1, 0.2, 0.4, 0.2, 0.1];
    let idle = ControlPolicy::constant(&lat, &c, 0.0).unwrap();
    let nu_t = simulate_policy(&l, &idle, &nu0).unwrap().law;
    let zero = mt_cost_nodes(&l, &nu0, &nu_t, &lat, &c, None).unwrap().value;
    verdict(worst <= 1e-6 && zero == 0.0, format!("max |mt_cost - policy LP| {worst:.2e}; zero-drift value {zero}"))
}

fn c9_stochastic_ballistic() -> Verdict {
    let l = LagrangianSpec::quadratic_free(1);
    let mut gaps = Vec::new();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lat = WalkLattice::covering(-1.0, 1.0, 1.0, 100, 0.5).unwrap();
        let c = ControlSet::uniform(3.0, 12).unwrap();
        let atoms: Vec<f64> = (0..rng.random_range(2..4)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mu0 = DiscreteMeasure::on_line(&atoms, &random_law(&mut rng, atoms.len()), Space::Costate).unwrap();
        let mid = lat.node_index(0.0).unwrap_or(lat.nodes / 2);
        let mut src = vec![0.0; lat.nodes];
        let w: f64 = rng.random_range(0.2..0.8);
        src[mid - rng.random_range(1..5)] = w;
        src[mid + rng.random_range(1..5)] = 1.0 - w;
        let drift = 0.25 * rng.random_range(-2..=2) as f64;
        let law = simulate_policy(&l, &ControlPolicy::constant(&lat, &c, drift).unwrap(), &src).unwrap().law;
        let nu_t = lat.measure(&law, Space::State).unwrap();
        let r = ballistic_min_stoch(&l, &mu0, &nu_t, &lat, &c, 0.02).unwrap();
        gaps.push(r.relative_gap);
    }
    let min_ok = gaps.iter().all(|&g| g <= 0.02);

    let harm = LagrangianSpec::harmonic(1, 1.0, 1.0).unwrap();
    let mu0 = DiscreteMeasure::on_line(&[-1.0, 1.0], &[0.5, 0.5], Space::Costate).unwrap();
    let nu_t = DiscreteMeasure::on_line(&[-0.8, 0.3, 0.9], &[0.3, 0.3, 0.4], Space::State).unwrap();
    let c = ControlSet::uniform(3.0, 12).unwrap();
    let mut widths = Vec::new();
    let mut at_100 = f64::INFINITY;
    for k in [25, 100, 400] {
        let lat = WalkLattice::covering(-1.0, 1.0, 1.0, k, 0.25).unwrap();
        let r = ballistic_max_stoch(&harm, &mu0, &nu_t, &lat, &c, 0.05).unwrap();
        if k == 100 {
            at_100 = r.relative_width;
        }
        widths.push((r.width, r.upper.abs()));
    }
    // non-increasing up to the rounding of the two bound values
    let shrinking = widths.windows(2).all(|w| w[1].0 <= w[0].0.max(0.0) + 64.0 * f64::EPSILON * w[1].1);
    verdict(
        min_ok && at_100 <= 0.05 && shrinking,
        format!(
            "min relative gaps {}; max width at K=100 {at_100:.2e}; widths K=25/100/400 {}",
            sci(&gaps),
            sci(&widths.iter().map(|w| w.0).collect::<Vec<_>>())
        ),
    )
}

fn c10_eulerian() -> Verdict {
    let l = LagrangianSpec::quadratic_free(1);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut ok = true;
    let mut notes = Vec::new();
    for _ in 0..3 {
        let mu = measure(&mut rng, 2, -1.0, 1.0, Space::Costate);
        let nu = measure(&mut rng, 2, -1.5, 1.5, Space::State);
        let oracle = coupling_lp(&table(&mu, &nu, |v, x| free_b(v, x, 1.0)), mu.weights(), nu.weights(), 1.0);
        let study = refinement_study(&l, &mu, &nu, 1.0, &[16, 32, 64]).unwrap();
        let errors: Vec<f64> =
            study.iter().map(|r| r.value.map_or(f64::INFINITY, |v| ((v - oracle) / oracle.abs().max(1e-12)).abs())).collect();
        let lp_ok = study.iter().all(|r| (r.lp_value - oracle).abs() <= 1e-9);
        let improving = errors.windows(2).all(|w| w[1] < w[0]);
        ok &= lp_ok && improving && errors[2] <= 0.05;
        notes.push(sci(&errors));
    }
    verdict(ok, format!("relative errors at 16/32/64: {}", notes.join(", ")))
}

fn c11_determinism() -> Verdict {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ra, rb) = (demo_suite(a.path(), 42).unwrap(), demo_suite(b.path(), 42).unwrap());
    let mut files = Vec::new();
    collect(a.path(), a.path(), &mut files);
    let differing: Vec<&String> =
        files.iter().filter(|f| std::fs::read(a.path().join(f)).ok() != std::fs::read(b.path().join(f)).ok()).collect();
    verdict(
        differing.is_empty() && ra == rb && ra.all_certified && !files.is_empty(),
        format!("{} files compared, {} differ; all demos certified: {}", files.len(), differing.len(), ra.all_certified),
    )
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<String>) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            collect(root, &p, out);
        } else {
            out.push(p.strip_prefix(root).unwrap().to_string_lossy().into_owned());
        }
    }
    out.sort();
}

type Criterion = (u32, &'static str, Option<Duration>, fn() -> Verdict);

fn main() {
    let s = Duration::from_secs;
    let criteria: [Criterion; 11] = [
        (1, "ballistic cost closed forms", Some(s(10)), c1_ballistic_cost),
        (2, "min interpolation", Some(s(30)), c2_min_interpolation),
        (3, "max interpolation", Some(s(60)), c3_max_interpolation),
        (4, "optimal maps", None, c4_optimal_maps),
        (5, "Bolza duality", Some(s(30)), c5_bolza),
        (6, "b/c/c~ triple duality", None, c6_triple_duality),
        (7, "HJB lattice", Some(s(60)), c7_hjb),
        (8, "stochastic transport cost", None, c8_mt_cost),
        (9, "stochastic ballistic costs", None, c9_stochastic_ballistic),
        (10, "Eulerian cross-check", None, c10_eulerian),
        (11, "determinism", None, c11_determinism),
    ];
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        let start = Instant::now();
        let v = run();
        let elapsed = start.elapsed();
        let in_time = budget.is_none_or(|b| elapsed < b);
        let pass = v.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget = budget.map_or(String::new(), |b| format!(" (budget {}s)", b.as_secs()));
        let late = if in_time { "" } else { " OVER BUDGET" };
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.2}s{budget}{late}]",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
