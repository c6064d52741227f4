//! Acceptance gate: one line per criterion, then a single assertion over all of them.

use std::time::{Duration, Instant};

use perbranch::verify::{self, Check, Suite, VerifyOptions, VerifyReport};

struct Criterion {
    id: usize,
    title: &'static str,
    budget: Option<Duration>,
    checks: Vec<Check>,
    elapsed: Duration,
}

impl Criterion {
    fn passed(&self) -> bool {
        !self.checks.is_empty()
            && self.checks.iter().all(|c| c.passed)
            && self.budget.is_none_or(|b| self.elapsed <= b)
    }

    fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let budget = self
            .budget
            .map(|b| format!(" (budget {} s)", b.as_secs()))
            .unwrap_or_default();
        let worst = self
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("; failed {}: {}", c.name, c.detail))
            .collect::<String>();
        format!(
            "{status} criterion {:>2}: {} [{} checks, {:.2} s{budget}]{worst}",
            self.id,
            self.title,
            self.checks.len(),
            self.elapsed.as_secs_f64()
        )
    }
}

fn timed(
    id: usize,
    title: &'static str,
    budget: Option<u64>,
    f: impl FnOnce() -> Vec<Check>,
) -> Criterion {
    let start = Instant::now();
    let checks = f();
    Criterion {
        id,
        title,
        budget: budget.map(Duration::from_secs),
        checks,
        elapsed: start.elapsed(),
    }
}

#[test]
fn acceptance() {
    let opts = VerifyOptions::default();
    let mut criteria = vec![
        timed(
            1,
            "rescale equivalence of translation operators",
            Some(10),
            || verify::rescale_equivalence(&opts),
        ),
        timed(
            2,
            "degree scaling, additivity and block laws",
            Some(30),
            || {
                let mut c = verify::degree_scaling();
                c.extend(verify::degree_additivity());
                c.extend(verify::degree_blocks());
                c
            },
        ),
        timed(
            4,
            "manifold degree magnitudes on circle and sphere",
            Some(30),
            verify::manifold_degrees,
        ),
        timed(
            3,
            "fixed point index equals signed field degree",
            Some(60),
            || verify::index_chain(&opts),
        ),
        timed(
            6,
            "lifted flow stays on the manifold over ten periods",
            Some(20),
            || verify::dae_equivalence(&opts),
        ),
        timed(
            7,
            "closed-form branch of the forced linear decay",
            Some(30),
            verify::closed_form_branch,
        ),
        timed(
            8,
            "branches of the two worked examples",
            Some(120),
            verify::example_branches,
        ),
        timed(
            5,
            "linear descriptor example quantities",
            Some(10),
            verify::linear_example,
        ),
        timed(9, "method of steps against the hand solution", None, || {
            verify::dde_oracle(&opts)
        }),
    ];

    // The checks above are the first `verify all` run, in the suite's order.
    let first = VerifyReport {
        suite: Suite::All,
        seed: opts.seed,
        passed: criteria.iter().flat_map(|c| &c.checks).all(|c| c.passed),
        checks: criteria.iter().flat_map(|c| c.checks.clone()).collect(),
    };
    criteria.push(timed(
        10,
        "verify all is byte-for-byte reproducible",
        None,
        || {
            let a = serde_json::to_string_pretty(&first).unwrap();
            let b = serde_json::to_string_pretty(&verify::run(Suite::All, &opts)).unwrap();
            vec![Check::holds(
                "determinism/verify-all",
                a == b,
                format!("{} bytes compared", a.len()),
            )]
        },
    ));

    criteria.sort_by_key(|c| c.id);
    for c in &criteria {
        println!("{}", c.line());
    }
    let failed: Vec<usize> = criteria
        .iter()
        .filter(|c| !c.passed())
        .map(|c| c.id)
        .collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
