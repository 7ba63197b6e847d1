//! Replays the two worked normal-form examples and a seeded batch of
//! auxiliary-MDP identities as a table of named assertions.

use serde::{Deserialize, Serialize};

use crate::aux_mdps::{build_mdp2, lift_reward, optimize_aux, Direction};
use crate::dynamics::{compute_occupancy, evaluate, feasibility, player_slacks};
use crate::equilibrium::{
    check_strong_slater_at, check_weak_slater_at, find_cce, slater_sampling_harness, verify_cce,
    FindOptions, SampleStatus, SlaterMode, StartPoint, Verdict, WeakSlaterBranch,
};
use crate::equivalence::{run_equivalence_suite, EquivalenceOptions};
use crate::error::Result;
use crate::examples::{example1, example2, normal_form_policy, toy_h2};
use crate::game::{ConstrainedMarkovGame, ConstraintMode, MarkovPolicy};
use crate::lp::{mix_occupancies, regularity_from_profile, solve_best_modification, ModificationProfile, Selection};
use crate::modifications::{apply_modification, enumerate_det_modifications, MarkovModification, DEFAULT_ENUMERATION_CAP};
use crate::random::{random_game, rng_from_seed, RandomGameSpec};

const TOL: f64 = 1e-9;

pub const GROUPS: [&str; 3] = ["example1", "example2", "auxiliary"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub id: String,
    pub group: String,
    pub description: String,
    pub expected: String,
    pub observed: String,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproductionReport {
    pub seed: u64,
    pub only: Option<String>,
    pub assertions: Vec<Assertion>,
    pub passed: usize,
    pub failed: usize,
}

impl ReproductionReport {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }

    pub fn get(&self, id: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.id == id)
    }
}

struct Table {
    group: &'static str,
    rows: Vec<Assertion>,
}

impl Table {
    fn push(&mut self, id: &str, description: &str, expected: impl Into<String>, observed: impl Into<String>, passed: bool) {
        self.rows.push(Assertion {
            id: format!("{}.{id}", self.group),
            group: self.group.to_string(),
            description: description.to_string(),
            expected: expected.into(),
            observed: observed.into(),
            passed,
        });
    }

    fn close(&mut self, id: &str, description: &str, expected: f64, observed: f64) {
        self.push(
            id,
            description,
            fmt(expected),
            fmt(observed),
            (expected - observed).abs() <= TOL,
        );
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.12}")
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

/// Points of the probability simplex over 4 entries with denominator `n`.
pub fn simplex_grid(n: usize) -> impl Iterator<Item = [f64; 4]> {
    (0..=n).flat_map(move |a| {
        (0..=n - a).flat_map(move |b| {
            (0..=n - a - b).map(move |c| {
                let d = n - a - b - c;
                [a, b, c, d].map(|k| k as f64 / n as f64)
            })
        })
    })
}

/// Runs every assertion, or one group (`example1`, `example2`, `auxiliary`).
pub fn reproduce(only: Option<&str>, seed: u64) -> Result<ReproductionReport> {
    let mut assertions = Vec::new();
    if only.is_none_or(|g| g == "example1") {
        assertions.extend(example1_rows(seed)?);
    }
    if only.is_none_or(|g| g == "example2") {
        assertions.extend(example2_rows(seed)?);
    }
    if only.is_none_or(|g| g == "auxiliary") {
        assertions.extend(auxiliary_rows(seed)?);
    }
    let passed = assertions.iter().filter(|a| a.passed).count();
    Ok(ReproductionReport {
        seed,
        only: only.map(str::to_string),
        failed: assertions.len() - passed,
        passed,
        assertions,
    })
}

fn example1_rows(seed: u64) -> Result<Vec<Assertion>> {
    let g = example1();
    let mut t = Table {
        group: "example1",
        rows: Vec::new(),
    };
    let shape = (g.mode(), g.num_players(), g.horizon(), g.num_states(), g.num_constraints());
    t.push(
        "game",
        "bundled game is valid: playerwise, N=2, H=1, one state, J=1",
        "valid playerwise 2 1 1 1",
        format!(
            "{} {} {} {} {} {}",
            if g.validate().valid { "valid" } else { "invalid" },
            shape.0,
            shape.1,
            shape.2,
            shape.3,
            shape.4
        ),
        g.validate().valid && shape == (ConstraintMode::Playerwise, 2, 1, 1, 1),
    );

    let pi = normal_form_policy(&g, [0.5, 1.0 / 3.0, 0.0, 1.0 / 6.0]);
    let d = compute_occupancy(&g, &pi)?;
    let values = evaluate(&g, &d)?;
    t.close("value", "V^{r^1} at (1/2, 1/3, 0, 1/6)", 1.0 / 3.0, values.rewards[0]);

    let const2 = MarkovModification::constant(&g, 1, 1)?;
    let moved = apply_modification(&g, &pi, &const2)?;
    let expected = [0.0, 5.0 / 6.0, 0.0, 1.0 / 6.0];
    t.push(
        "constant_modification",
        "player 2 always playing 2 maps (x, y, z, w) to (0, x+y, 0, z+w)",
        fmt_vec(&expected),
        fmt_vec(moved.row(0, 0)),
        moved.row(0, 0).iter().zip(&expected).all(|(a, b)| (a - b).abs() <= TOL),
    );

    let corner = normal_form_policy(&g, [0.0, 0.0, 0.0, 1.0]);
    let report = feasibility(&g, &corner, None)?;
    let slacks: Vec<f64> = report.players.iter().map(|p| p.slacks[0]).collect();
    t.push(
        "corner_infeasible",
        "(0, 0, 0, 1) violates both players' constraints",
        fmt_vec(&[-0.5, -1.0 / 3.0]),
        fmt_vec(&slacks),
        !report.feasible && (slacks[0] + 0.5).abs() <= TOL && (slacks[1] + 1.0 / 3.0).abs() <= TOL,
    );

    let mut wrong = 0;
    let mut points = 0;
    for p in simplex_grid(20) {
        let policy = normal_form_policy(&g, p);
        let feasible = feasibility(&g, &policy, None)?.feasible;
        let predicted = p[0] >= 0.5 - TOL && p[1] >= 1.0 / 3.0 - TOL;
        points += 1;
        if feasible != predicted {
            wrong += 1;
        }
    }
    t.push(
        "feasible_region",
        "on the 0.05 grid the feasible set is {x >= 1/2} x {y >= 1/3}",
        "0 misclassified",
        format!("{wrong} misclassified of {points}"),
        wrong == 0,
    );

    let profile = ModificationProfile::new(&g, 1, &pi, DEFAULT_ENUMERATION_CAP)?;
    let best = solve_best_modification(&profile, Selection::Bland)?;
    let psi = best.psi.unwrap_or(f64::NAN);
    let const2_index = profile.dets.index_of(&[1, 1]);
    let on_const2 = match (&best.alpha, const2_index) {
        (Some(a), Some(k)) => (a[k] - 1.0).abs() <= TOL,
        _ => false,
    };
    t.push(
        "best_modification",
        "player 2's best feasible modification is always playing 2, worth 5/6",
        format!("{} via constant 2", fmt(5.0 / 6.0)),
        format!("{}{}", fmt(psi), if on_const2 { " via constant 2" } else { "" }),
        (psi - 5.0 / 6.0).abs() <= TOL && on_const2,
    );

    let cert = verify_cce(&g, &pi, TOL)?;
    let gap = cert.gap(1).unwrap_or(f64::NAN);
    t.push(
        "verify",
        "(1/2, 1/3, 0, 1/6) is not an equilibrium; player 2 gains 1/2",
        format!("not_CE gap {}", fmt(0.5)),
        format!("{} gap {}", cert.verdict, fmt(gap)),
        cert.verdict == Verdict::NotCe && (gap - 0.5).abs() <= TOL,
    );

    let strong: Vec<bool> = (0..2)
        .map(|i| check_strong_slater_at(&g, i, &corner).map(|r| r.holds))
        .collect::<Result<_>>()?;
    t.push(
        "strong_slater_corner",
        "no modification is strictly feasible at (0, 0, 0, 1)",
        "false false",
        format!("{} {}", strong[0], strong[1]),
        strong == [false, false],
    );

    let harness = slater_sampling_harness(&g, SlaterMode::Strong, 100, seed)?;
    t.push(
        "strong_slater_sampling",
        "sampling 100 policies finds a strong Slater failure",
        ">= 1 failure",
        format!("{} failures", harness.failures.len()),
        !harness.failures.is_empty(),
    );
    Ok(t.rows)
}

fn example2_rows(seed: u64) -> Result<Vec<Assertion>> {
    let g = example2();
    let mut t = Table {
        group: "example2",
        rows: Vec::new(),
    };
    t.push(
        "game",
        "bundled game is valid: common mode, J=4",
        "valid common 4",
        format!(
            "{} {} {}",
            if g.validate().valid { "valid" } else { "invalid" },
            g.mode(),
            g.num_constraints()
        ),
        g.validate().valid && g.mode() == ConstraintMode::Common && g.num_constraints() == 4,
    );

    let uniform = MarkovPolicy::uniform(&g);
    let d = compute_occupancy(&g, &uniform)?;
    t.push(
        "uniform_occupancy",
        "the uniform policy has occupancy (1/4, 1/4, 1/4, 1/4)",
        fmt_vec(&[0.25; 4]),
        fmt_vec(d.table().row(0, 0)),
        d.table().row(0, 0).iter().all(|v| (v - 0.25).abs() <= TOL),
    );
    let slacks = player_slacks(&g, &d, 0);
    t.push(
        "uniform_slacks",
        "all four constraints are tight at the uniform policy",
        fmt_vec(&[0.0; 4]),
        fmt_vec(&slacks),
        slacks.iter().all(|s| s.abs() <= TOL),
    );

    let mut feasible_points = Vec::new();
    for p in simplex_grid(100) {
        if feasibility(&g, &normal_form_policy(&g, p), None)?.feasible {
            feasible_points.push(p);
        }
    }
    t.push(
        "unique_feasible",
        "on the 0.01 grid the uniform policy is the only feasible point",
        format!("1 point {}", fmt_vec(&[0.25; 4])),
        match feasible_points.as_slice() {
            [p] => format!("1 point {}", fmt_vec(p)),
            pts => format!("{} points", pts.len()),
        },
        feasible_points.len() == 1 && feasible_points[0] == [0.25; 4],
    );

    let dets = enumerate_det_modifications(&g, 0, DEFAULT_ENUMERATION_CAP)?;
    t.push(
        "modification_count",
        "player 1 has four deterministic modifications",
        "4",
        dets.len().to_string(),
        dets.len() == 4,
    );

    let profile = ModificationProfile::new(&g, 0, &uniform, DEFAULT_ENUMERATION_CAP)?;
    let best = solve_best_modification(&profile, Selection::Bland)?;
    t.close("best_value", "player 1's best feasible modified value is 1/4", 0.25, best.psi.unwrap_or(f64::NAN));

    let vertices = (0..profile.len())
        .map(|k| profile.occupancy(&g, &uniform, k))
        .collect::<Result<Vec<_>>>()?;
    let optimal_mix = mix_occupancies(best.alpha.as_deref().unwrap_or(&[]), &vertices);
    let gap = optimal_mix.as_ref().map(|m| m.max_abs_diff(&d)).unwrap_or(f64::INFINITY);
    t.push(
        "optimal_mixture",
        "an optimal mixture reproduces the uniform occupancy",
        "max deviation 0",
        format!("max deviation {gap:.3e}"),
        gap <= TOL,
    );
    let uniform_mix = mix_occupancies(&[0.25; 4], &vertices)?;
    let values: Vec<f64> = (0..4)
        .map(|j| crate::dynamics::signal_value(g.constraint(0, j), &uniform_mix))
        .collect();
    t.push(
        "uniform_mixture_values",
        "mixing the four modifications uniformly gives constraint values 1/4",
        fmt_vec(&[0.25; 4]),
        fmt_vec(&values),
        values.iter().all(|v| (v - 0.25).abs() <= TOL),
    );

    let reg = regularity_from_profile(&profile)?;
    let positive = reg.positive_mixture.as_ref();
    t.push(
        "regularity",
        "no strictly feasible mixture, no constant row, uniform weights at epsilon 1e-3",
        "false false 1e-3 uniform",
        format!(
            "{} {} {}",
            reg.strictly_feasible,
            reg.has_constant_row(),
            positive.map_or("none".to_string(), |p| format!(
                "{:e}{}",
                p.epsilon,
                if p.alpha == [0.25; 4] { " uniform" } else { "" }
            ))
        ),
        !reg.strictly_feasible
            && !reg.has_constant_row()
            && positive.is_some_and(|p| p.epsilon == 1e-3 && p.alpha == [0.25; 4]),
    );

    let cert = verify_cce(&g, &uniform, TOL)?;
    t.push(
        "verify",
        "the uniform policy is a constrained correlated equilibrium",
        "constrained_CE",
        format!("{} max gap {:.3e}", cert.verdict, cert.max_gap().unwrap_or(f64::NAN)),
        cert.verdict == Verdict::ConstrainedCe && cert.max_gap().is_some_and(|m| m.abs() <= TOL),
    );

    let strong: Vec<bool> = (0..2)
        .map(|i| check_strong_slater_at(&g, i, &uniform).map(|r| r.holds))
        .collect::<Result<_>>()?;
    t.push(
        "strong_slater",
        "the feasible set has empty interior, so strong Slater fails",
        "false false",
        format!("{} {}", strong[0], strong[1]),
        strong == [false, false],
    );

    let mdp = build_mdp2(&g, 0, &uniform)?;
    let lifted = lift_reward(&g, 0, &uniform, g.constraint(0, 0))?;
    let min = optimize_aux(&mdp, &lifted, Direction::Min)?;
    let targets = min.modification.targets().unwrap_or_default();
    t.push(
        "min_first_constraint",
        "the smallest reachable value of the first constraint is 0, by always playing 2",
        format!("{} targets [1, 1]", fmt(0.0)),
        format!("{} targets {:?}", fmt(min.value), targets),
        min.value.abs() <= TOL && targets == [1, 1],
    );

    for i in 0..2 {
        let weak = check_weak_slater_at(&g, i, &uniform)?;
        let minima: Vec<f64> = weak
            .condition2a
            .as_ref()
            .map(|m| m.iter().map(|c| c.min_value).collect())
            .unwrap_or_default();
        let uniform_alpha = weak.condition2b.as_ref().is_some_and(|p| p.alpha == [0.25; 4]);
        t.push(
            &format!("weak_slater_player{}", i + 1),
            "weak Slater: condition 1 fails, 2(a) holds with minima 0, 2(b) holds with uniform weights",
            format!("1 false, 2(a) true {}, 2(b) uniform", fmt_vec(&[0.0; 4])),
            format!(
                "1 {}, 2(a) {} {}, 2(b) {}",
                weak.condition1.as_ref().is_some_and(|c| c.holds),
                weak.condition2a_holds.unwrap_or(false),
                fmt_vec(&minima),
                if uniform_alpha { "uniform" } else { "other" }
            ),
            weak.branch == WeakSlaterBranch::Condition2
                && minima.len() == 4
                && minima.iter().all(|m| m.abs() <= TOL)
                && uniform_alpha,
        );
    }

    let harness = slater_sampling_harness(&g, SlaterMode::Weak, 20, seed)?;
    let all_pass = harness.outcomes.iter().all(|o| o.status == SampleStatus::Holds);
    t.push(
        "weak_slater_sampling",
        "every sampled boundary policy is the uniform policy and passes",
        "0 failures, all pass",
        format!(
            "{} failures, {} of {} pass",
            harness.failures.len(),
            harness.outcomes.iter().filter(|o| o.status == SampleStatus::Holds).count(),
            harness.outcomes.len()
        ),
        harness.failures.is_empty() && all_pass,
    );

    let found = find_cce(&g, StartPoint::Auto, &FindOptions {
        record_iterates: false,
        ..FindOptions::default()
    })?;
    let dist = found.policy.table().max_abs_diff(uniform.table());
    t.push(
        "find",
        "the search starts at the unique feasible point and stops immediately",
        "0 iterations, constrained_CE, uniform",
        format!(
            "{} iterations, {}, {}",
            found.trace.iterations,
            found.certificate.verdict,
            if dist <= TOL { "uniform" } else { "other" }
        ),
        found.trace.iterations == 0
            && found.certificate.verdict == Verdict::ConstrainedCe
            && dist <= TOL,
    );
    Ok(t.rows)
}

fn auxiliary_rows(seed: u64) -> Result<Vec<Assertion>> {
    let mut t = Table {
        group: "auxiliary",
        rows: Vec::new(),
    };
    let mut rng = rng_from_seed(seed);
    let mut games: Vec<ConstrainedMarkovGame> = vec![toy_h2()];
    let spec = RandomGameSpec {
        horizon: 2,
        num_states: 2,
        action_sizes: vec![2, 2],
        num_constraints: 1,
        mode: ConstraintMode::Common,
        looseness: 0.9,
    };
    for _ in 0..4 {
        games.push(random_game(&mut rng, &spec)?);
    }
    let mut worst = std::collections::BTreeMap::<String, f64>::new();
    let mut all = true;
    for (k, g) in games.iter().enumerate() {
        let options = EquivalenceOptions {
            samples: 5,
            seed: seed.wrapping_add(k as u64),
            ..EquivalenceOptions::default()
        };
        let report = run_equivalence_suite(g, None, &options)?;
        all &= report.passed;
        for c in &report.checks {
            let e = worst.entry(c.name.clone()).or_insert(0.0);
            *e = e.max(c.max_error);
        }
    }
    for (name, err) in &worst {
        let tol = if name == crate::equivalence::CHECK_HULL { crate::lp::HULL_TOL } else { TOL };
        t.push(
            name,
            "identity between modification views on the bundled two-step game and seeded random games",
            format!("max error <= {tol:e}"),
            format!("max error {err:.3e}"),
            *err <= tol,
        );
    }
    t.push(
        "suite",
        "every equivalence check passes",
        "true",
        all.to_string(),
        all,
    );
    Ok(t.rows)
}
