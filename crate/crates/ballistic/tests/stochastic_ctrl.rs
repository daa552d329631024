mod common;

use ballistic::convex_core::{dual_lagrangian, ConvexFunctionSamples, LagrangianSpec, SampleKind};
use ballistic::discrete_ot::{solve_transport, CostMatrix, Sense};
use ballistic::dynamic_cost::{ballistic_cost, hopf_lax_backward};
use ballistic::lattice::Lattice;
use ballistic::measures::{DiscreteMeasure, Space};
use ballistic::stochastic_ctrl::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{max_cost_lp, occupation_lp, random_law};

fn random_policy(rng: &mut ChaCha8Rng, lat: &WalkLattice, c: &ControlSet) -> ControlPolicy {
    let choice = (0..lat.steps).map(|_| (0..lat.nodes).map(|_| rng.random_range(0..c.len())).collect()).collect();
    ControlPolicy::from_choice(lat, c, choice)
}

fn tiny() -> (WalkLattice, ControlSet) {
    (WalkLattice::new(0.0, 4.0, 5, 2.0, 4).unwrap(), ControlSet::from_values(vec![-1.0, 0.0, 1.0]).unwrap())
}

#[test]
fn linear_terminal_matches_constant_drift_solution() {
    let l = LagrangianSpec::quadratic_free(1);
    let lat = WalkLattice::covering(-1.0, 1.0, 1.0, 200, 0.5).unwrap();
    let c = ControlSet::uniform(3.0, 20).unwrap();
    for v in [0.6, -0.9, 1.5] {
        let f: Vec<f64> = lat.points().iter().map(|x| v * x).collect();
        let field = hjb_backward(&l, &f, &lat, &c).unwrap();
        let (mut err, mut scale): (f64, f64) = (0.0, 0.0);
        for (i, x) in lat.points().into_iter().enumerate() {
            if (-1.0..=1.0).contains(&x) {
                let exact = v * x + 0.5 * v * v;
                err = err.max((field.values[0][i] - exact).abs());
                scale = scale.max(exact.abs());
            }
        }
        assert!(err <= 0.02 * scale, "v={v}: err {err} scale {scale}");

        let policy = extract_drift(&field, &l).unwrap();
        for k in 0..lat.steps {
            for (i, x) in lat.points().into_iter().enumerate() {
                if (-1.0..=1.0).contains(&x) {
                    assert!((policy.drift(k, i) - v).abs() <= c.step(), "v={v} k={k} x={x}: {}", policy.drift(k, i));
                    assert!(!policy.at_bound[k][i]);
                }
            }
        }
        assert!(policy.consistency_residual <= lat.dx + c.step(), "v={v}: residual {}", policy.consistency_residual);
    }
}

#[test]
fn drift_bound_is_flagged() {
    let l = LagrangianSpec::quadratic_free(1);
    let lat = WalkLattice::covering(-1.0, 1.0, 1.0, 50, 0.5).unwrap();
    let c = ControlSet::uniform(0.5, 5).unwrap();
    let f: Vec<f64> = lat.points().iter().map(|x| 2.0 * x).collect();
    let policy = extract_drift(&hjb_backward(&l, &f, &lat, &c).unwrap(), &l).unwrap();
    assert!(policy.bound_hits > 0);
}

#[test]
fn zero_noise_mode_tracks_hopf_lax() {
    let l = LagrangianSpec::quadratic_free(1);
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
        let mut err: f64 = 0.0;
        for (x, v) in eval.points().iter().zip(hl.slice(0)) {
            let i = lat.node_index(x[0]).unwrap();
            err = err.max((field.values[0][i] - v.to_f64()).abs());
        }
        println!("zero-noise dx={dx}: error {err:.3e}, constant {:.3}", err / dx);
        errors.push((dx, err));
    }
    for w in errors.windows(2) {
        assert!(w[1].1 <= 0.6 * w[0].1, "{errors:?}");
    }
    assert!(errors.iter().all(|&(dx, e)| e <= 0.5 * dx), "{errors:?}");
}

#[test]
fn occupation_lp_oracle_matches_on_tiny_lattice() {
    let (lat, c) = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for l in [LagrangianSpec::quadratic_free(1), LagrangianSpec::harmonic(1, 1.0, 1.0).unwrap()] {
        for _ in 0..6 {
            let nu0 = random_law(&mut rng, lat.nodes);
            // Mixing two policies keeps the target reachable without making it a vertex.
            let a = simulate_policy(&l, &random_policy(&mut rng, &lat, &c), &nu0).unwrap().law;
            let b = simulate_policy(&l, &random_policy(&mut rng, &lat, &c), &nu0).unwrap().law;
            let t: f64 = rng.random_range(0.0..1.0);
            let nu_t: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
            let r = mt_cost_nodes(&l, &nu0, &nu_t, &lat, &c, None).unwrap();
            let oracle = occupation_lp(&l, &lat, &c.values, &nu0, &nu_t);
            assert!((r.value - oracle).abs() <= 1e-6, "{} vs {oracle}", r.value);
            assert!(r.certified);
        }
    }
}

#[test]
fn zero_drift_target_costs_exactly_zero() {
    let (lat, c) = tiny();
    let l = LagrangianSpec::quadratic_free(1);
    let nu0 = [0.1, 0.2, 0.4, 0.2, 0.1];
    let idle = ControlPolicy::constant(&lat, &c, 0.0).unwrap();
    let nu_t = simulate_policy(&l, &idle, &nu0).unwrap().law;
    let r = mt_cost_nodes(&l, &nu0, &nu_t, &lat, &c, None).unwrap();
    assert_eq!(r.value, 0.0);
    assert!(r.certified);
}

#[test]
fn every_policy_costs_at_least_the_transport_value() {
    let (lat, c) = tiny();
    let l = LagrangianSpec::quadratic_free(1);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let nu0 = random_law(&mut rng, lat.nodes);
        let out = simulate_policy(&l, &random_policy(&mut rng, &lat, &c), &nu0).unwrap();
        let r = mt_cost_nodes(&l, &nu0, &out.law, &lat, &c, None).unwrap();
        assert!(out.cost >= r.value - 1e-6, "policy {} < value {}", out.cost, r.value);
    }
}

#[test]
fn constant_drift_cost_approaches_kinetic_energy() {
    let l = LagrangianSpec::quadratic_free(1);
    let b = 0.8;
    for k in [25, 50, 100] {
        let lat = WalkLattice::covering(0.0, b, 1.0, k, 0.5).unwrap();
        let c = ControlSet::uniform(3.0 * b, 12).unwrap();
        let mut nu0 = vec![0.0; lat.nodes];
        nu0[lat.node_index(0.0).unwrap()] = 1.0;
        let policy = ControlPolicy::constant(&lat, &c, b).unwrap();
        let nu_t = simulate_policy(&l, &policy, &nu0).unwrap().law;
        let r = mt_cost_nodes(&l, &nu0, &nu_t, &lat, &c, None).unwrap();
        assert!((r.value - 0.5 * b * b).abs() <= 0.03 * 0.5 * b * b, "K={k}: {}", r.value);
    }
}

/// Seeded instance for the minimal stochastic cost: costate atoms in `[-1, 1]`
/// and `ν_T` the law of a constant-drift walk from two nodes.
fn min_instance(seed: u64, k: usize) -> (LagrangianSpec, DiscreteMeasure, DiscreteMeasure, WalkLattice, ControlSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = LagrangianSpec::quadratic_free(1);
    let lat = WalkLattice::covering(-1.0, 1.0, 1.0, k, 0.5).unwrap();
    let c = ControlSet::uniform(3.0, 12).unwrap();
    let atoms: Vec<f64> = (0..rng.random_range(2..4)).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mu0 = DiscreteMeasure::on_line(&atoms, &random_law(&mut rng, atoms.len()), Space::Costate).unwrap();
    let mid = lat.node_index(0.0).unwrap_or(lat.nodes / 2);
    let mut src = vec![0.0; lat.nodes];
    let w: f64 = rng.random_range(0.2..0.8);
    src[mid - rng.random_range(1..5)] = w;
    src[mid + rng.random_range(1..5)] = 1.0 - w;
    let drift = 0.25 * rng.random_range(-2..=2) as f64;
    let policy = ControlPolicy::constant(&lat, &c, drift).unwrap();
    let law = simulate_policy(&l, &policy, &src).unwrap().law;
    (l, mu0, lat.measure(&law, Space::State).unwrap(), lat, c)
}

#[test]
fn min_stochastic_gap_on_seeded_instances() {
    for seed in 0..5 {
        let (l, mu0, nu_t, lat, c) = min_instance(seed, 100);
        let r = ballistic_min_stoch(&l, &mu0, &nu_t, &lat, &c, 0.02).unwrap();
        assert!(r.relative_gap <= 0.02, "seed {seed}: {r:?}");
        assert!(r.gap >= -1e-9 * (1.0 + r.value.abs()), "seed {seed}: {r:?}");
        assert!(r.certified);
    }
}

#[test]
fn min_stochastic_sandwich_over_candidates() {
    let l = LagrangianSpec::quadratic_free(1);
    // Few nodes, so every transport cost below is finished by cutting planes
    // and carries a certified upper bound.
    let lat = WalkLattice::new(-1.0, 1.0, 11, 1.0, 50).unwrap();
    let c = ControlSet::uniform(3.0, 12).unwrap();
    let mid = 5;
    let mut base = vec![0.0; lat.nodes];
    for w in &mut base[mid - 3..=mid + 3] {
        *w = 1.0 / 7.0;
    }
    let idle = ControlPolicy::constant(&lat, &c, 0.0).unwrap();
    let nu_t = lat.measure(&simulate_policy(&l, &idle, &base).unwrap().law, Space::State).unwrap();
    let mu0 = DiscreteMeasure::on_line(&[-0.6, 0.5], &[0.4, 0.6], Space::Costate).unwrap();
    let r = ballistic_min_stoch(&l, &mu0, &nu_t, &lat, &c, 0.02).unwrap();
    let target = lat.node_weights(&nu_t).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..10 {
        let bump = random_law(&mut rng, 7);
        let mut cand = base.clone();
        for (w, b) in cand[mid - 3..=mid + 3].iter_mut().zip(&bump) {
            *w = 0.8 * *w + 0.2 * b;
        }
        let nu = lat.measure(&cand, Space::State).unwrap();
        let pairing =
            solve_transport(&CostMatrix::inner_product(&mu0, &nu).unwrap(), mu0.weights(), nu.weights(), Sense::Min).unwrap().value;
        let mt = mt_cost_nodes(&l, &cand, &target, &lat, &c, None).unwrap();
        let candidate = pairing + mt.upper.expect("candidate transport has a feasible policy");
        assert!(r.dual <= candidate + 1e-6, "dual {} > candidate {candidate}", r.dual);
        assert!(r.value <= candidate + r.gap.max(0.0) + 1e-6, "value {} > candidate {candidate}", r.value);
    }
}

#[test]
fn min_stochastic_point_masses() {
    // μ₀ = δ_v, ν_T = zero-drift law from δ_y: the best interpolant sits at
    // y - Tv, giving v·y - T v²/2 up to lattice error.
    let l = LagrangianSpec::quadratic_free(1);
    let (v, y) = (0.5, 0.2f64);
    let lat = WalkLattice::covering(-1.0, 1.0, 1.0, 100, 0.5).unwrap();
    let c = ControlSet::uniform(3.0, 12).unwrap();
    let iy = (0..lat.nodes).min_by(|&a, &b| (lat.node(a) - y).abs().total_cmp(&(lat.node(b) - y).abs())).unwrap();
    let y = lat.node(iy);
    let mut src = vec![0.0; lat.nodes];
    src[iy] = 1.0;
    let idle = ControlPolicy::constant(&lat, &c, 0.0).unwrap();
    let nu_t = lat.measure(&simulate_policy(&l, &idle, &src).unwrap().law, Space::State).unwrap();
    let mu0 = DiscreteMeasure::dirac(vec![v], Space::Costate).unwrap();
    let r = ballistic_min_stoch(&l, &mu0, &nu_t, &lat, &c, 0.02).unwrap();
    let exact = v * y - 0.5 * v * v;
    println!("point masses: value {} dual {} exact {exact}", r.value, r.dual);
    assert!((r.value - exact).abs() <= lat.dx, "{r:?}");
    assert!(r.value < v * y);
}

#[test]
fn max_stochastic_matches_lp_on_tiny_lattice() {
    let (lat, c) = tiny();
    let l = LagrangianSpec::harmonic(1, 1.0, 1.0).unwrap();
    let dual = dual_lagrangian(&l).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let w0 = random_law(&mut rng, 2);
        let mu0 = DiscreteMeasure::on_line(&[1.0, 3.0], &w0, Space::Costate).unwrap();
        let xs: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let wx = random_law(&mut rng, 3);
        let nu_t = DiscreteMeasure::on_line(&xs, &wx, Space::State).unwrap();
        let r = ballistic_max_stoch(&l, &mu0, &nu_t, &lat, &c, 1e-6).unwrap();
        let oracle = max_cost_lp(&dual, &lat, &c.values, &lat.node_weights(&mu0).unwrap(), &xs, &wx);
        assert!((r.upper - oracle).abs() <= 1e-6, "upper {} vs {oracle}", r.upper);
        assert!((r.lower - oracle).abs() <= 1e-6, "lower {} vs {oracle}", r.lower);
    }
}

#[test]
fn max_stochastic_bracket_under_refinement() {
    let l = LagrangianSpec::harmonic(1, 1.0, 1.0).unwrap();
    let mu0 = DiscreteMeasure::on_line(&[-1.0, 1.0], &[0.5, 0.5], Space::Costate).unwrap();
    let nu_t = DiscreteMeasure::on_line(&[-0.8, 0.3, 0.9], &[0.3, 0.3, 0.4], Space::State).unwrap();
    let c = ControlSet::uniform(3.0, 12).unwrap();
    let mut widths = Vec::new();
    for k in [25, 100, 400] {
        let lat = WalkLattice::covering(-1.0, 1.0, 1.0, k, 0.25).unwrap();
        let r = ballistic_max_stoch(&l, &mu0, &nu_t, &lat, &c, 0.05).unwrap();
        println!("K={k}: [{:.8}, {:.8}] relative width {:.3e}", r.lower, r.upper, r.relative_width);
        assert!(r.upper >= r.lower - 1e-12 * r.upper.abs());
        if k == 100 {
            assert!(r.relative_width <= 0.05 && r.certified);
        }
        widths.push((r.width, r.upper.abs()));
    }
    // Non-increasing up to the rounding of the two bound values.
    for w in widths.windows(2) {
        assert!(w[1].0 <= w[0].0.max(0.0) + 64.0 * f64::EPSILON * w[1].1, "{widths:?}");
    }
}

#[test]
fn max_stochastic_quadratic_family_respects_weak_duality() {
    let l = LagrangianSpec::harmonic(1, 1.0, 1.0).unwrap();
    let lat = WalkLattice::covering(-1.0, 1.0, 1.0, 50, 0.5).unwrap();
    let c = ControlSet::uniform(3.0, 12).unwrap();
    let mu0 = DiscreteMeasure::on_line(&[-0.6, 0.8], &[0.5, 0.5], Space::Costate).unwrap();
    let xs = [-0.5, 0.7];
    let nu_t = DiscreteMeasure::on_line(&xs, &[0.6, 0.4], Space::State).unwrap();
    let r = ballistic_max_stoch(&l, &mu0, &nu_t, &lat, &c, 0.05).unwrap();
    for a in [-2.0, -1.0, 0.0, 0.5, 1.0, 2.0, 4.0] {
        let g: Vec<f64> = xs.iter().map(|x| 0.5 * a * x * x).collect();
        let u = max_dual_bound(&l, &mu0, &nu_t, &lat, &c, &g).unwrap();
        assert!(u >= r.lower - 1e-12 * (1.0 + u.abs()), "a={a}: {u} < {}", r.lower);
        assert!(u >= r.upper - 1e-9 * (1.0 + u.abs()), "a={a}: {u} < {}", r.upper);
    }
}

#[test]
fn max_stochastic_single_step_contains_deterministic_cost() {
    let l = LagrangianSpec::harmonic(1, 1.0, 1.0).unwrap();
    let (v, x) = (1.0, 0.8);
    for t in [0.1, 0.05, 0.02] {
        let lat = WalkLattice::covering(v, v, t, 1, 0.5).unwrap();
        let c = ControlSet::uniform(2.0, 40).unwrap();
        let mu0 = DiscreteMeasure::dirac(vec![v], Space::Costate).unwrap();
        let nu_t = DiscreteMeasure::dirac(vec![x], Space::State).unwrap();
        let r = ballistic_max_stoch(&l, &mu0, &nu_t, &lat, &c, 1e-6).unwrap();
        let b = ballistic_cost(&l, &[v], &[x], t).unwrap();
        let slack = 0.1 * b.abs();
        assert!(r.lower - slack <= b && b <= r.upper + slack, "T={t}: b={b} bracket [{}, {}]", r.lower, r.upper);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn value_is_monotone_shift_equivariant_and_convex(
        seed in 0u64..1000,
        shift in -3.0f64..3.0,
        t in 0.0f64..1.0,
        harmonic in any::<bool>(),
    ) {
        let l = if harmonic { LagrangianSpec::harmonic(1, 1.0, 1.0).unwrap() } else { LagrangianSpec::quadratic_free(1) };
        let lat = WalkLattice::covering(-1.0, 1.0, 1.0, 40, 0.5).unwrap();
        let c = ControlSet::uniform(3.0, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f1: Vec<f64> = (0..lat.nodes).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f2: Vec<f64> = f1.iter().map(|v| v + rng.random_range(0.0..0.5)).collect();
        let p1 = hjb_backward(&l, &f1, &lat, &c).unwrap();
        let p2 = hjb_backward(&l, &f2, &lat, &c).unwrap();
        for k in 0..=lat.steps {
            for i in 0..lat.nodes {
                prop_assert!(p1.values[k][i] <= p2.values[k][i]);
            }
        }
        let shifted: Vec<f64> = f1.iter().map(|v| v + shift).collect();
        let ps = hjb_backward(&l, &shifted, &lat, &c).unwrap();
        let mix: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let pm = hjb_backward(&l, &mix, &lat, &c).unwrap();
        for i in 0..lat.nodes {
            let (a, b) = (p1.initial()[i], p2.initial()[i]);
            let tol = 1e-12 * (1.0 + a.abs() + shift.abs());
            prop_assert!((ps.initial()[i] - a - shift).abs() <= tol);
            prop_assert!(pm.initial()[i] <= t * a + (1.0 - t) * b + tol);
        }
    }
}
