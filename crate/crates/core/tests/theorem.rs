use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use ridekit_core::disc::{verify_population, verify_theorem, BoundFactor, PopulationConfig, DEFAULT_EPS_R};
use ridekit_core::{BinaryMask, Domain, ImageGrid};

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Independent evaluation of both sides of the bound from the closed-form
/// parameters.
fn oracle(cfg: &PopulationConfig, eps: f64) -> (f64, f64) {
    let di: Vec<f64> = cfg.delta_l.iter().zip(&cfg.delta_r).map(|(a, b)| a + b).collect();
    let (wl, wr) = (cfg.trace_l[0] + cfg.trace_l[1], cfg.trace_r[0] + cfg.trace_r[1]);
    let d_l = norm2(&cfg.delta_l) / (wl + eps);
    let d_r = norm2(&cfg.delta_r) / (wr + eps);
    let d_i = norm2(&di) / (wl + wr + eps);
    let (nl, nr) = (norm2(&cfg.delta_l).sqrt(), norm2(&cfg.delta_r).sqrt());
    let dot: f64 = cfg.delta_l.iter().zip(&cfg.delta_r).map(|(a, b)| a * b).sum();
    let rho = dot / (nl * nr);
    let xi = nl * nr / (nl * nl + nr * nr);
    (d_l + d_r, d_i * (1.0 + 2.0 * xi) / (1.0 + 2.0 * rho * xi))
}

#[test]
fn population_sweep_never_violates_the_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for k in 0..10_000 {
        let cfg = PopulationConfig::random(&mut rng);
        let report = verify_population(&cfg, DEFAULT_EPS_R).unwrap();
        assert!(report.holds, "config {k}: {report:?}");
        let (lhs, rhs) = oracle(&cfg, DEFAULT_EPS_R);
        assert!((report.lhs - lhs).abs() <= 1e-12 * lhs.max(1.0), "config {k}");
        match (report.rhs, report.bound_factor) {
            (Some(r), BoundFactor::Finite(_)) => {
                assert!((r - rhs).abs() <= 1e-9 * rhs.abs().max(1.0), "config {k}: {r} vs {rhs}");
                assert!(report.slack.unwrap() >= -1e-9 * r.abs().max(1.0));
            }
            (None, BoundFactor::Infinite) => {}
            other => panic!("config {k}: inconsistent factor {other:?}"),
        }
        // Population slack is never negative: the bound is an inequality
        // between exact quantities.
        assert!(lhs - rhs >= -1e-9 * rhs.abs().max(1.0), "config {k}: oracle slack {}", lhs - rhs);
    }
}

/// Draws a two-region image pair with per-channel Gaussian pixels matching a
/// population configuration; the illumination is three-channel here.
fn sampled_pair(cfg: &PopulationConfig, n_side: usize, rng: &mut ChaCha8Rng) -> (ImageGrid, ImageGrid, BinaryMask) {
    let mask = BinaryMask::from_fn(n_side, n_side, |y, _| y < n_side / 2);
    let mut draw = |delta: &[f64], trace: [f64; 2]| -> Vec<f64> {
        let mut out = Vec::with_capacity(n_side * n_side * 3);
        for p in 0..n_side * n_side {
            let fg = mask.values()[p];
            let sd = (trace[if fg { 0 } else { 1 }] / 3.0).sqrt();
            for d in delta {
                let mean = if fg { *d } else { 0.0 };
                out.push(Normal::new(mean, sd).unwrap().sample(rng));
            }
        }
        out
    };
    let l = draw(&cfg.delta_l, cfg.trace_l);
    let r = draw(&cfg.delta_r, cfg.trace_r);
    (
        ImageGrid::new(n_side, n_side, 3, l, Domain::Log).unwrap(),
        ImageGrid::new(n_side, n_side, 3, r, Domain::Log).unwrap(),
        mask,
    )
}

#[test]
fn sampled_statistics_track_population_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for k in 0..20 {
        let cfg = PopulationConfig::random(&mut rng);
        let pop = verify_population(&cfg, DEFAULT_EPS_R).unwrap();
        // 2 * 100^2 / 2 = 10^4 pixels per region.
        let (l, r, mask) = sampled_pair(&cfg, 142, &mut rng);
        let emp = verify_theorem(&l, &r, &mask, DEFAULT_EPS_R).unwrap();
        for (name, a, b) in [("D_L", emp.d_l, pop.d_l), ("D_R", emp.d_r, pop.d_r), ("D_I", emp.d_i, pop.d_i)] {
            let tol = 0.1 * b + 0.01;
            assert!((a - b).abs() <= tol, "config {k} {name}: sampled {a} population {b}");
        }
        assert!(emp.max_cross_cov < 0.2, "config {k}: cross covariance {}", emp.max_cross_cov);
        if let Some(rhs) = emp.rhs {
            assert!(emp.lhs >= rhs - 0.05 * rhs.max(1.0), "config {k}: {emp:?}");
        }
    }
}

#[test]
fn random_anti_parallel_configs_have_vanishing_composite_contrast() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let d: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let cfg = PopulationConfig {
            delta_l: d.clone(),
            delta_r: d.iter().map(|v| -v).collect(),
            trace_l: [1.0, 1.0],
            trace_r: [1.0, 1.0],
        };
        let report = verify_population(&cfg, DEFAULT_EPS_R).unwrap();
        assert!(report.d_i < 1e-20);
        assert!(report.d_l + report.d_r > 0.0);
        assert!(report.holds);
    }
}
