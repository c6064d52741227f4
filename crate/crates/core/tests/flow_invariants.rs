use std::f64::consts::PI;

use perbranch::config::{BlockConfig, ProblemConfig};
use perbranch::expr::Harmonic;
use perbranch::fields::{normalize_lag, PeriodicCoefficient, ProblemSpec};
use perbranch::integrate::{integrate_ode, IntegrateOptions};
use perbranch::problems::{builtin_config, REGISTRY};
use proptest::prelude::*;

/// The registry problem with its blocks merged into one coefficient `1 + sin t`.
fn with_unit_average(name: &str) -> ProblemSpec {
    let mut c: ProblemConfig = builtin_config(name).unwrap();
    let dim = c.blocks.iter().map(|b| b.dim).sum();
    c.blocks = vec![BlockConfig {
        dim,
        coefficient: vec![
            Harmonic::Const { value: 1.0 },
            Harmonic::Sin { mode: 1, amp: 1.0 },
        ],
    }];
    c.build().unwrap()
}

fn start(p: &ProblemSpec) -> Vec<f64> {
    match p.manifold() {
        Some(_) => p.default_start().unwrap(),
        None => [0.1, -0.05, 0.03][..p.dim()].to_vec(),
    }
}

#[test]
fn rescaled_flow_is_reparametrized_flow() {
    let opts = IntegrateOptions::default();
    let mut compared = 0;
    for e in REGISTRY {
        let p = with_unit_average(e.name);
        let a = &p.blocks()[0].coefficient;
        let x0 = start(&p);
        let t1 = p.period();
        let xi = integrate_ode(&p, &x0, (0.0, t1), &opts).unwrap();
        let plain = IntegrateOptions {
            use_coefficient: false,
            ..opts
        };
        // Both operators are defined or neither is.
        let endpoint_plain = integrate_ode(&p, &x0, (0.0, t1), &plain).unwrap();
        assert_eq!(
            xi.is_truncated(),
            endpoint_plain.is_truncated(),
            "{}",
            e.name
        );
        if xi.is_truncated() {
            continue;
        }
        compared += 1;
        // φ_a ranges over [0, T] only approximately monotonically; integrate u far enough.
        let s_max = (0..=200)
            .map(|i| a.time_rescale(t1 * i as f64 / 200.0).unwrap())
            .fold(0.0, f64::max);
        let u = integrate_ode(&p, &x0, (0.0, s_max + 1e-9), &plain).unwrap();
        assert!(!u.is_truncated(), "{}", e.name);
        for i in 0..=32 {
            let t = t1 * i as f64 / 32.0;
            // Independent quadrature of a(s) = 1 + sin(s·2π/T): φ_a(t) = t + (1 − cos(2πt/T))·T/(2π).
            let s = t + (1.0 - (2.0 * PI * t / t1).cos()) * t1 / (2.0 * PI);
            assert!((a.time_rescale(t).unwrap() - s).abs() < 1e-10);
            let lhs = xi.eval(t).unwrap();
            let rhs = u.eval(s.min(u.t1())).unwrap();
            let err = lhs
                .iter()
                .zip(&rhs)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(err <= 1e-7, "{} at t = {t}: {err:e}", e.name);
        }
        let err = xi
            .end_state()
            .iter()
            .zip(endpoint_plain.end_state())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-7, "{} endpoint: {err:e}", e.name);
    }
    assert!(compared >= 4);
}

#[test]
fn manifold_problems_stay_on_manifold_and_solve_the_dae() {
    let opts = IntegrateOptions::default();
    for e in REGISTRY {
        let p = perbranch::problems::builtin(e.name).unwrap();
        let Some(m) = p.manifold() else { continue };
        let x0 = p.default_start().unwrap();
        let seg = integrate_ode(&p, &x0, (0.0, 10.0 * p.period()), &opts).unwrap();
        assert!(!seg.is_truncated());
        let mut worst: f64 = 0.0;
        for i in 0..seg.len() {
            worst = worst.max(
                m.g(seg.state(i))
                    .iter()
                    .map(|v| v.abs())
                    .fold(0.0, f64::max),
            );
        }
        assert!(worst <= 1e-6, "{}: {worst:e}", e.name);
        assert!(seg.max_constraint_residual() <= 1e-6);

        // The free coordinates follow x' = a(t) f(x, y).
        let k = m.k();
        let a = &p.blocks()[0].coefficient;
        let h = 1e-4;
        for i in 1..40 {
            let t = 10.0 * p.period() * i as f64 / 40.0;
            let (xp, xm) = (seg.eval(t + h).unwrap(), seg.eval(t - h).unwrap());
            let x = seg.eval(t).unwrap();
            let f = p.field().eval(&x);
            for c in 0..k {
                let deriv = (xp[c] - xm[c]) / (2.0 * h);
                assert!(
                    (deriv - a.value(t) * f[c]).abs() < 1e-6,
                    "{} at t = {t}",
                    e.name
                );
            }
        }
    }
}

#[test]
fn tolerance_controls_error_on_exponential_growth() {
    let c = ProblemConfig::from_toml_str(
        r#"
        name = "growth"
        period = 1.0
        lag = 1.0
        perturbation = []
        [space]
        kind = "flat"
        dim = 1
        [[field]]
        terms = [{ coeff = 1.0, powers = [1] }]
        [[blocks]]
        dim = 1
        coefficient = [{ kind = "const", value = 1.0 }]
        "#,
    )
    .unwrap();
    let p = c.build().unwrap();
    let mut previous = f64::INFINITY;
    for tol in [1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10] {
        let opts = IntegrateOptions {
            tol,
            ..IntegrateOptions::default()
        };
        let seg = integrate_ode(&p, &[1.0], (0.0, 1.0), &opts).unwrap();
        let err = (seg.end_state()[0] - 1f64.exp()).abs();
        if previous > 1e-12 {
            assert!(
                err * 4.0 <= previous,
                "tol {tol:e}: {err:e} after {previous:e}"
            );
        }
        previous = err;
    }
}

fn coefficient(terms: &[(u8, u32, f64)], offset: f64, period: f64) -> PeriodicCoefficient {
    let mut h = vec![Harmonic::Const { value: offset }];
    for &(kind, mode, amp) in terms {
        h.push(match kind % 4 {
            0 => Harmonic::Sin { mode, amp },
            1 => Harmonic::Cos { mode, amp },
            2 => Harmonic::AbsSin { mode, amp },
            _ => Harmonic::AbsCos { mode, amp },
        });
    }
    PeriodicCoefficient::from_harmonics(period, h).unwrap()
}

fn harmonic_terms() -> impl Strategy<Value = Vec<(u8, u32, f64)>> {
    prop::collection::vec((0u8..4, 1u32..4, -2.0f64..2.0), 0..4)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn rescale_increment_is_period_times_average(
        terms in harmonic_terms(),
        offset in -2.0f64..2.0,
        period in 0.5f64..8.0,
        t in 0.0f64..20.0,
    ) {
        let a = coefficient(&terms, offset, period);
        let inc = a.time_rescale(t + period).unwrap() - a.time_rescale(t).unwrap();
        prop_assert!((inc - period * a.average()).abs() <= 1e-10 * (1.0 + t.abs()));
    }

    #[test]
    fn average_is_phase_invariant(
        terms in harmonic_terms(),
        offset in -2.0f64..2.0,
        period in 0.5f64..8.0,
        shift in -10.0f64..10.0,
    ) {
        let a = coefficient(&terms, offset, period);
        prop_assert!((a.shifted(shift).unwrap().average() - a.average()).abs() <= 1e-10);
    }

    #[test]
    fn lag_normalization(r in 0.01f64..3.0, n in 0u32..6, period in 0.5f64..4.0) {
        let r = r.min(period);
        let shifted = r + n as f64 * period;
        let a = normalize_lag(shifted, period).unwrap();
        prop_assert!(a > 0.0 && a <= period);
        prop_assert!((a - r).abs() <= 1e-12 * (1.0 + shifted));
    }

    #[test]
    fn projection_is_idempotent(x in -1.2f64..1.2, y in -1.2f64..1.2, z in 0.2f64..1.2) {
        let p = perbranch::problems::builtin("sphere-gradient").unwrap();
        let m = p.manifold().unwrap();
        let once = m.project(&[x, y, z]);
        prop_assume!(once.is_ok());
        let once = once.unwrap();
        let twice = m.project(&once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn lifted_fields_are_tangent() {
    for e in REGISTRY {
        let p = perbranch::problems::builtin(e.name).unwrap();
        let Some(m) = p.manifold() else { continue };
        let points = m.sample_points(1000);
        assert_eq!(points.len(), 1000);
        for q in points {
            let phi = p.phi(&q).unwrap();
            let norm = phi.iter().map(|v| v.abs()).fold(0.0, f64::max);
            // Directional derivative of g along Φ by central differences.
            let h = 1e-6;
            let plus: Vec<f64> = q.iter().zip(&phi).map(|(a, b)| a + h * b).collect();
            let minus: Vec<f64> = q.iter().zip(&phi).map(|(a, b)| a - h * b).collect();
            let (gp, gm) = (m.g(&plus), m.g(&minus));
            for (a, b) in gp.iter().zip(&gm) {
                let d = (a - b) / (2.0 * h);
                assert!(d.abs() <= 1e-8 * (1.0 + norm), "{} at {q:?}: {d:e}", e.name);
            }
        }
    }
}
