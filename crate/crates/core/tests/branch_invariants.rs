use std::f64::consts::PI;
use std::sync::Arc;

use perbranch::config::ProblemConfig;
use perbranch::continuation::{
    branch_from_trivial, find_trivial_pairs, ContinuationOptions, Region, Termination,
};
use perbranch::degree::{newton, DegreeOptions};
use perbranch::integrate::IntegrateOptions;
use perbranch::map::VectorMap;
use perbranch::poincare::{
    q_operator, shooting_residual, translation_map, DiscretizedHistory, HistoryDiscretization,
};
use perbranch::problems::{build_two_species, builtin, default_region, TwoSpeciesParams};
use perbranch::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CIRCLE_GROWTH: &str = r#"
name = "circle-growth"
period = 6.283185307179586
lag = 0.5
[space]
kind = "manifold"
k = 1
box_lo = [-1.5, 0.05]
box_hi = [1.5, 1.5]
constraint = [{ terms = [{ coeff = 1.0, powers = [2, 0] }, { coeff = 1.0, powers = [0, 2] }, { coeff = -1.0, powers = [0, 0] }] }]
[[field]]
terms = [{ coeff = 1.0, powers = [1, 0] }]
[[blocks]]
dim = 1
coefficient = [{ kind = "const", value = 1.0 }]
[[perturbation]]
terms = [{ coeff = 0.3, time = { kind = "sin", mode = 1, amp = 1.0 } }]
[region]
lambda_max = 1.0
lo = [-1.5, 0.05]
hi = [1.5, 1.5]
"#;

#[test]
fn manifold_branch_stays_on_the_circle() {
    let p = ProblemConfig::from_toml_str(CIRCLE_GROWTH)
        .unwrap()
        .build()
        .unwrap();
    let region = default_region(&p).unwrap();
    let run = branch_from_trivial(
        &p,
        &region,
        &DegreeOptions::default(),
        &ContinuationOptions::default(),
    )
    .unwrap();
    let b = &run.branch;
    assert_eq!(b.termination, Termination::LambdaMaxReached);
    let m = p.manifold().unwrap();
    for q in &b.pairs {
        assert!(q.residual_norm <= 1e-8);
        for i in 0..q.orbit.len() {
            let g = m.g(q.orbit.state(i))[0].abs();
            assert!(g <= 1e-6, "λ = {}: g = {g:e}", q.lambda);
        }
        // The free coordinate solves x' = x + 0.3λ sin t, whose periodic
        // solution is −0.15λ(sin t + cos t).
        let x0 = q.history.at_zero()[0];
        assert!(
            (x0 + 0.15 * q.lambda).abs() < 1e-7,
            "λ = {}: x(0) = {x0}",
            q.lambda
        );
    }
}

#[test]
fn branches_need_nonzero_degree() {
    let p = builtin("circle-rotation").unwrap();
    let region = default_region(&p).unwrap();
    let err = branch_from_trivial(
        &p,
        &region,
        &DegreeOptions::default(),
        &ContinuationOptions::default(),
    );
    assert!(matches!(err, Err(Error::Admissibility(_))));
}

#[test]
fn branch_runs_are_bitwise_reproducible() {
    let p = builtin("paper-linear-3d").unwrap();
    let region = Region::new(1.5, default_region(&p).unwrap().state_box).unwrap();
    let opts = ContinuationOptions::default();
    let a = branch_from_trivial(&p, &region, &DegreeOptions::default(), &opts)
        .unwrap()
        .branch;
    let b = branch_from_trivial(&p, &region, &DegreeOptions::default(), &opts)
        .unwrap()
        .branch;
    assert_eq!(a.pairs.len(), b.pairs.len());
    for (x, y) in a.pairs.iter().zip(&b.pairs) {
        assert_eq!(x.lambda.to_bits(), y.lambda.to_bits());
        assert!(x
            .history
            .values()
            .iter()
            .zip(y.history.values())
            .all(|(u, v)| u.to_bits() == v.to_bits()));
    }
}

const RESONANT_CYCLE: &str = r#"
name = "resonant-cycle"
period = 6.283185307179586
lag = 1.0
[space]
kind = "flat"
dim = 2
[[field]]
terms = [{ coeff = 1.0, powers = [1, 0] }, { coeff = -1.0, powers = [0, 1] }, { coeff = -1.0, powers = [3, 0] }, { coeff = -1.0, powers = [1, 2] }]
[[field]]
terms = [{ coeff = 1.0, powers = [0, 1] }, { coeff = 1.0, powers = [1, 0] }, { coeff = -1.0, powers = [0, 3] }, { coeff = -1.0, powers = [2, 1] }]
[[blocks]]
dim = 2
coefficient = [{ kind = "const", value = 1.0 }]
[[perturbation]]
terms = [{ coeff = 1.0, time = { kind = "sin", mode = 1, amp = 1.0 } }]
[[perturbation]]
terms = []
[region]
lambda_max = 3.0
lo = [-3.0, -3.0]
hi = [3.0, 3.0]
"#;

#[test]
fn branch_returning_to_zero_reports_the_unperturbed_cycle() {
    // r' = r(1 − r²), θ' = 1: the unit circle is a 2π-periodic orbit at λ = 0.
    let p = ProblemConfig::from_toml_str(RESONANT_CYCLE)
        .unwrap()
        .build()
        .unwrap();
    let region = default_region(&p).unwrap();
    let b = branch_from_trivial(
        &p,
        &region,
        &DegreeOptions::default(),
        &ContinuationOptions::default(),
    )
    .unwrap()
    .branch;
    assert_eq!(b.nontrivial_at_zero.len(), 1);
    let q = &b.pairs[b.nontrivial_at_zero[0]];
    assert_eq!(q.lambda, 0.0);
    assert!(!q.is_trivial);
    for i in 0..q.orbit.len() {
        let x = q.orbit.state(i);
        assert!((x[0].hypot(x[1]) - 1.0).abs() < 1e-6);
    }
}

#[test]
fn q_operator_sees_only_the_endpoint() {
    let p = builtin("two-species").unwrap();
    let disc = Arc::new(HistoryDiscretization::new(16, p.lag()).unwrap());
    let opts = IntegrateOptions::default();
    let phi0 = [0.3, -0.2];
    let reference = q_operator(
        &p,
        &DiscretizedHistory::constant(disc.clone(), &phi0),
        &opts,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let coeffs: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let phi = DiscretizedHistory::from_fn(disc.clone(), 2, |t| {
            // Vanishes at t = 0, so φ(0) is shared.
            vec![
                phi0[0] + coeffs[0] * t + coeffs[1] * t * t + coeffs[2] * (3.0 * t).sin(),
                phi0[1] + coeffs[3] * t + coeffs[4] * t.powi(3) + coeffs[5] * (1.0 - t.cos()),
            ]
        })
        .unwrap();
        let image = q_operator(&p, &phi, &opts).unwrap();
        assert!(image.max_abs_diff(&reference) <= 1e-12);
    }
}

#[test]
fn fixed_points_agree_for_unit_average() {
    // x' = a(t)(x − x³) with a = 1 + sin(2πt): fixed points of both translation
    // operators are the equilibria, found from the same starts.
    let c = ProblemConfig::from_toml_str(
        r#"
        name = "bistable"
        period = 1.0
        lag = 1.0
        [space]
        kind = "flat"
        dim = 1
        [[field]]
        terms = [{ coeff = 1.0, powers = [1] }, { coeff = -1.0, powers = [3] }]
        [[blocks]]
        dim = 1
        coefficient = [{ kind = "const", value = 1.0 }, { kind = "sin", mode = 1, amp = 1.0 }]
        "#,
    )
    .unwrap();
    let p = c.build().unwrap();
    let opts = IntegrateOptions::default();
    let shifted = |use_coefficient: bool| {
        let map = translation_map(&p, use_coefficient, &opts);
        VectorMap::new(1, 1, move |x, o| o[0] = map.eval(x)[0] - x[0])
    };
    let dopts = DegreeOptions::default();
    for x0 in [-1.3, -0.7, 0.2, 0.8, 1.4] {
        let (a, _) = newton(&shifted(true), &[x0], &dopts).unwrap();
        let (b, _) = newton(&shifted(false), &[x0], &dopts).unwrap();
        assert!(
            (a[0] - b[0]).abs() <= 1e-8,
            "start {x0}: {} vs {}",
            a[0],
            b[0]
        );
    }
}

#[test]
fn normalized_lag_gives_identical_residuals() {
    let period = 2.0 * PI;
    let base = TwoSpeciesParams {
        lag: 0.5 * period,
        ..TwoSpeciesParams::default()
    };
    let long = TwoSpeciesParams {
        lag: 2.5 * period,
        ..TwoSpeciesParams::default()
    };
    let (p, q) = (
        build_two_species(&base).unwrap(),
        build_two_species(&long).unwrap(),
    );
    assert!((p.lag() - q.lag()).abs() <= 1e-12);
    let disc = Arc::new(HistoryDiscretization::new(16, p.lag()).unwrap());
    let phi = DiscretizedHistory::from_fn(disc, 2, |t| vec![0.2 + 0.1 * t.sin(), -0.1 * t.cos()])
        .unwrap();
    let opts = IntegrateOptions::default();
    for lambda in [0.0, 0.5, 1.0] {
        let a = shooting_residual(&p, lambda, &phi, &opts).unwrap();
        let b = shooting_residual(&q, lambda, &phi, &opts).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn two_species_trivial_pairs_in_a_wide_box() {
    // With Φ(x) = x the only zero is the origin, whatever the interaction.
    let p = builtin("two-species").unwrap();
    let b = "-1.5..1.5,-1.5..1.5".parse().unwrap();
    let t = find_trivial_pairs(
        &p,
        &b,
        &DegreeOptions::default(),
        &ContinuationOptions::default(),
    )
    .unwrap();
    assert_eq!(t.pairs.len(), 1);
    assert_eq!(t.degree.signed, 1);
    assert!(t.pairs[0].pair.is_trivial);
}

#[test]
fn equilibria_of_the_undelayed_competition_field() {
    // x₁(1 + x₂/2 − x₁), x₂(1 + x₂ − x₁/2): zeros (0,0), (1,0), (0,−1) and the
    // coexistence point solving x₁ = 1 + x₂/2, 1 + x₂ − x₁/2 = 0, i.e. (2/3, −2/3).
    // det J there: 1, −1/2, −1/2, 1/3.
    let c = ProblemConfig::from_toml_str(
        r#"
        name = "competition"
        period = 6.283185307179586
        lag = 1.0
        [space]
        kind = "flat"
        dim = 2
        [[field]]
        terms = [{ coeff = 1.0, powers = [1, 0] }, { coeff = 0.5, powers = [1, 1] }, { coeff = -1.0, powers = [2, 0] }]
        [[field]]
        terms = [{ coeff = 1.0, powers = [0, 1] }, { coeff = 1.0, powers = [0, 2] }, { coeff = -0.5, powers = [1, 1] }]
        [[blocks]]
        dim = 2
        coefficient = [{ kind = "const", value = 1.0 }]
        "#,
    )
    .unwrap();
    let p = c.build().unwrap();
    let b = "-1.5..1.5,-1.5..1.5".parse().unwrap();
    let t = find_trivial_pairs(
        &p,
        &b,
        &DegreeOptions::default(),
        &ContinuationOptions::default(),
    )
    .unwrap();
    let expected = [
        ([0.0, 0.0], 1),
        ([1.0, 0.0], -1),
        ([0.0, -1.0], -1),
        ([2.0 / 3.0, -2.0 / 3.0], 1),
    ];
    assert_eq!(t.pairs.len(), expected.len());
    for (point, index) in expected {
        let found = t
            .pairs
            .iter()
            .find(|q| {
                q.pair
                    .history
                    .at_zero()
                    .iter()
                    .zip(point)
                    .all(|(a, b)| (a - b).abs() < 1e-9)
            })
            .unwrap_or_else(|| panic!("no trivial pair at {point:?}"));
        assert_eq!(found.index, index);
        assert!(found.pair.is_trivial);
    }
    assert_eq!(t.degree.signed, 0);
}
