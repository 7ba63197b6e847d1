//! End-to-end acceptance run. Prints one line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Reference values come from oracles written here from first principles:
//! trajectory enumeration for occupancies, exhaustive enumeration of
//! deterministic modifications, and basic-feasible-solution enumeration for
//! linear programs.

use std::process::Command;
use std::time::{Duration, Instant};

use cmg_core::aux_mdps::{
    aux_occupancy, build_mdp1, build_mdp2, lift_reward, modification_from_mixture, optimize_aux,
    AuxPolicy, AuxiliaryMdp, Direction,
};
use cmg_core::dynamics::{compute_occupancy, feasibility};
use cmg_core::equilibrium::{
    check_strong_slater_at, check_weak_slater_at, feasible_start, find_cce, verify_cce,
    FindOptions, StartPoint, Verdict,
};
use cmg_core::examples::{example1, example2, normal_form_policy};
use cmg_core::game::{ConstrainedMarkovGame, ConstraintMode, MarkovPolicy};
use cmg_core::lp::{hull_membership, solve_lp, LinearProgram, LpStatus, Relation, Sense};
use cmg_core::modifications::{
    enumerate_det_modifications, markovianize, MarkovModification, NonMarkovModification,
    DEFAULT_ENUMERATION_CAP, DEFAULT_HISTORY_CAP,
};
use cmg_core::random::{
    dirichlet, random_game, random_markov_modification, random_nonmarkov_modification,
    random_policy, rng_from_seed, RandomGameSpec,
};
use cmg_core::OccupancyMeasure;
use rand::Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

// ---------------------------------------------------------------------------
// Joint-action arithmetic (last player varies fastest).

fn stride(game: &ConstrainedMarkovGame, player: usize) -> usize {
    (player + 1..game.num_players()).map(|j| game.num_actions(j)).product()
}

fn component(game: &ConstrainedMarkovGame, a: usize, player: usize) -> usize {
    a / stride(game, player) % game.num_actions(player)
}

fn replace(game: &ConstrainedMarkovGame, a: usize, player: usize, b: usize) -> usize {
    let k = stride(game, player);
    a - component(game, a, player) * k + b * k
}

// ---------------------------------------------------------------------------
// Occupancy oracle: enumerate every trajectory.

/// `dist(t, states, actions)` is the distribution of the executed joint
/// action given the history so far.
fn enumerate_trajectories(
    game: &ConstrainedMarkovGame,
    dist: &dyn Fn(usize, &[usize], &[usize]) -> Vec<f64>,
) -> Vec<f64> {
    let (h, ns, na) = (game.horizon(), game.num_states(), game.num_joint_actions());
    let mut d = vec![0.0; h * ns * na];
    fn walk(
        game: &ConstrainedMarkovGame,
        dist: &dyn Fn(usize, &[usize], &[usize]) -> Vec<f64>,
        d: &mut [f64],
        states: &mut Vec<usize>,
        actions: &mut Vec<usize>,
        prob: f64,
    ) {
        let (h, ns, na) = (game.horizon(), game.num_states(), game.num_joint_actions());
        let t = actions.len();
        let s = *states.last().unwrap();
        let q = dist(t, states, actions);
        for (a, &qa) in q.iter().enumerate() {
            let w = prob * qa;
            if w == 0.0 {
                continue;
            }
            d[(t * ns + s) * na + a] += w;
            if t + 1 < h {
                for (s2, &p) in game.transition(t, s, a).iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    states.push(s2);
                    actions.push(a);
                    walk(game, dist, d, states, actions, w * p);
                    states.pop();
                    actions.pop();
                }
            }
        }
    }
    for (s, &r) in game.rho().iter().enumerate() {
        if r > 0.0 {
            walk(game, dist, &mut d, &mut vec![s], &mut Vec::new(), r);
        }
    }
    d
}

fn oracle_policy(game: &ConstrainedMarkovGame, pi: &MarkovPolicy) -> Vec<f64> {
    enumerate_trajectories(game, &|t, states, _| pi.row(t, *states.last().unwrap()).to_vec())
}

/// Executed-action distribution when `player` replaces its recommendation
/// with a draw from `row(t, states, actions, own)`.
fn modified_dist(
    game: &ConstrainedMarkovGame,
    pi: &MarkovPolicy,
    player: usize,
    t: usize,
    states: &[usize],
    actions: &[usize],
    row: &dyn Fn(usize, &[usize], &[usize], usize) -> Vec<f64>,
) -> Vec<f64> {
    let s = *states.last().unwrap();
    let mut q = vec![0.0; game.num_joint_actions()];
    for (a, &pa) in pi.row(t, s).iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        for (b, &pb) in row(t, states, actions, component(game, a, player)).iter().enumerate() {
            q[replace(game, a, player, b)] += pa * pb;
        }
    }
    q
}

fn oracle_markov_mod(
    game: &ConstrainedMarkovGame,
    pi: &MarkovPolicy,
    phi: &MarkovModification,
) -> Vec<f64> {
    let i = phi.player();
    let row = |t: usize, states: &[usize], _: &[usize], own: usize| {
        phi.row(t, *states.last().unwrap(), own).to_vec()
    };
    enumerate_trajectories(game, &|t, states, actions| {
        modified_dist(game, pi, i, t, states, actions, &row)
    })
}

fn oracle_targets(game: &ConstrainedMarkovGame, pi: &MarkovPolicy, player: usize, targets: &[usize]) -> Vec<f64> {
    let (ns, ai) = (game.num_states(), game.num_actions(player));
    let row = |t: usize, states: &[usize], _: &[usize], own: usize| {
        let mut r = vec![0.0; ai];
        r[targets[(t * ns + states.last().unwrap()) * ai + own]] = 1.0;
        r
    };
    enumerate_trajectories(game, &|t, states, actions| {
        modified_dist(game, pi, player, t, states, actions, &row)
    })
}

fn prefix_index(game: &ConstrainedMarkovGame, states: &[usize], actions: &[usize]) -> usize {
    let (ns, na) = (game.num_states(), game.num_joint_actions());
    let mut p = states[0];
    for (a, s) in actions.iter().zip(&states[1..]) {
        p = (p * na + a) * ns + s;
    }
    p
}

fn oracle_nonmarkov(
    game: &ConstrainedMarkovGame,
    pi: &MarkovPolicy,
    phi: &NonMarkovModification,
) -> Vec<f64> {
    let i = phi.player();
    let row = |t: usize, states: &[usize], actions: &[usize], own: usize| {
        phi.row(t, prefix_index(game, states, actions), own).to_vec()
    };
    enumerate_trajectories(game, &|t, states, actions| {
        modified_dist(game, pi, i, t, states, actions, &row)
    })
}

/// Every deterministic target table of `player`, as `(t * S + s) * A^i + a^i`.
fn all_targets(game: &ConstrainedMarkovGame, player: usize) -> Vec<Vec<usize>> {
    let ai = game.num_actions(player);
    let cells = game.horizon() * game.num_states() * ai;
    let mut out = vec![vec![0; cells]];
    for c in 0..cells {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..ai).map(move |b| {
                    let mut t = t.clone();
                    t[c] = b;
                    t
                })
            })
            .collect();
    }
    out
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn max_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// LP oracle: enumerate basic feasible solutions.

const BIG: f64 = 1e6;

#[derive(Debug, PartialEq)]
enum Oracle {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for k in col..n {
                        a[r][k] -= f * a[col][k];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Optimum over the vertices of `{x >= 0, rows, sum x <= BIG}`; an optimum
/// that needs the artificial bound is reported as unbounded.
fn bfs_oracle(lp: &LinearProgram) -> Oracle {
    let n = lp.objective.len();
    // every row as (coeffs, relation, rhs) including x_j >= 0 and the bound
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = lp
        .constraints
        .iter()
        .map(|c| (c.coeffs.clone(), c.relation, c.rhs))
        .collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((e, Relation::Ge, 0.0));
    }
    rows.push((vec![1.0; n], Relation::Le, BIG));
    let forced: Vec<usize> = (0..rows.len())
        .filter(|&r| rows[r].1 == Relation::Eq)
        .collect();
    let optional: Vec<usize> = (0..rows.len())
        .filter(|&r| rows[r].1 != Relation::Eq)
        .collect();
    let sign = if lp.sense == Sense::Max { 1.0 } else { -1.0 };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let need = n.saturating_sub(forced.len().min(n));
    let mut visit = |active: &[usize]| {
        let a: Vec<Vec<f64>> = active.iter().map(|&r| rows[r].0.clone()).collect();
        let b: Vec<f64> = active.iter().map(|&r| rows[r].2).collect();
        let Some(x) = solve_square(a, b) else { return };
        let ok = rows.iter().all(|(c, rel, rhs)| {
            let v = dot(c, &x);
            let tol = 1e-9 * (1.0 + rhs.abs());
            match rel {
                Relation::Ge => v >= rhs - tol,
                Relation::Le => v <= rhs + tol,
                Relation::Eq => (v - rhs).abs() <= tol,
            }
        });
        if ok {
            let val = sign * dot(&lp.objective, &x);
            if best.as_ref().is_none_or(|(v, _)| val > *v) {
                best = Some((val, x));
            }
        }
    };
    let base: Vec<usize> = forced.iter().copied().take(n).collect();
    combinations(optional.len(), need, &mut |pick| {
        let mut active = base.clone();
        active.extend(pick.iter().map(|&k| optional[k]));
        visit(&active);
    });
    match best {
        None => Oracle::Infeasible,
        Some((_, x)) if x.iter().sum::<f64>() > BIG / 2.0 => Oracle::Unbounded,
        Some((v, _)) => Oracle::Optimal(sign * v),
    }
}

fn combinations(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            go(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    go(0, n, k, &mut Vec::new(), f);
}

/// Best feasible modified value for a one-step, one-state game, by vertex
/// enumeration over mixtures of deterministic modifications. Thresholds are
/// capped at the unmodified policy's own values so that the identity is
/// always admissible within rounding.
fn oracle_gap(game: &ConstrainedMarkovGame, pi: &MarkovPolicy, player: usize) -> f64 {
    let na = game.num_joint_actions();
    let flat = |s: &cmg_core::StageArray| -> Vec<f64> { (0..na).map(|a| s.get(0, 0, a)).collect() };
    let r = flat(game.reward(player));
    let own = oracle_policy(game, pi);
    let vertices: Vec<Vec<f64>> = all_targets(game, player)
        .iter()
        .map(|t| oracle_targets(game, pi, player, t))
        .collect();
    let objective: Vec<f64> = vertices.iter().map(|d| dot(d, &r)).collect();
    let mut lp = LinearProgram::new(Sense::Max, objective);
    for j in 0..game.num_constraints() {
        let g = flat(game.constraint(player, j));
        let c = game.threshold(player, j).min(dot(&own, &g));
        lp.add(vertices.iter().map(|d| dot(d, &g)).collect(), Relation::Ge, c);
    }
    lp.add(vec![1.0; vertices.len()], Relation::Eq, 1.0);
    match bfs_oracle(&lp) {
        Oracle::Optimal(v) => v - dot(&own, &r),
        other => panic!("gap program should be solvable, got {other:?}"),
    }
}

// ---------------------------------------------------------------------------

fn simplex_grid(n: usize) -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for a in 0..=n {
        for b in 0..=n - a {
            for c in 0..=n - a - b {
                out.push([a, b, c, n - a - b - c]);
            }
        }
    }
    out
}

fn criterion1() -> Check {
    let start = Instant::now();
    let g = example1();
    let grid = simplex_grid(20);
    let mut wrong = 0;
    for k in &grid {
        let x = k.map(|v| v as f64 / 20.0);
        let report = feasibility(&g, &normal_form_policy(&g, x), None).map_err(e)?;
        // x >= 1/2 and y >= 1/3 in exact integer arithmetic
        let expect = [2 * k[0] >= 20, 3 * k[1] >= 20];
        for (p, ok) in report.players.iter().zip(expect) {
            if p.feasible != ok {
                wrong += 1;
            }
        }
    }
    ensure(wrong == 0, || format!("{wrong} misclassified grid entries"))?;

    let corner = normal_form_policy(&g, [0.0, 0.0, 0.0, 1.0]);
    let report = feasibility(&g, &corner, None).map_err(e)?;
    ensure(report.players.iter().all(|p| !p.feasible), || {
        "corner should be infeasible for both players".into()
    })?;
    for i in 0..2 {
        let strong = check_strong_slater_at(&g, i, &corner).map_err(e)?;
        ensure(!strong.holds, || format!("strong Slater should fail for player {}", i + 1))?;
    }

    let pi = normal_form_policy(&g, [0.5, 1.0 / 3.0, 0.0, 1.0 / 6.0]);
    let cert = verify_cce(&g, &pi, 1e-9).map_err(e)?;
    ensure(cert.verdict == Verdict::NotCe, || format!("verdict {}", cert.verdict))?;
    let gap2 = cert.gaps.iter().find(|p| p.player == 1).map(|p| p.gap).unwrap_or(f64::NAN);
    let oracle2 = oracle_gap(&g, &pi, 1);
    ensure((gap2 - 0.5).abs() <= 1e-9 && (oracle2 - 0.5).abs() <= 1e-9, || {
        format!("player-2 gap {gap2}, oracle {oracle2}")
    })?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} grid policies, player-2 gap {gap2:.12}, {elapsed:.2?}",
        grid.len()
    ))
}

fn criterion2() -> Check {
    let start = Instant::now();
    let g = example2();
    let grid = simplex_grid(100);
    let mut feasible = Vec::new();
    for k in &grid {
        let x = k.map(|v| v as f64 / 100.0);
        if feasibility(&g, &normal_form_policy(&g, x), None).map_err(e)?.feasible {
            feasible.push(*k);
        }
    }
    ensure(feasible == vec![[25; 4]], || format!("feasible grid points {feasible:?}"))?;

    let uniform = normal_form_policy(&g, [0.25; 4]);
    let cert = verify_cce(&g, &uniform, 1e-9).map_err(e)?;
    ensure(cert.verdict == Verdict::ConstrainedCe, || format!("verdict {}", cert.verdict))?;
    ensure(cert.gaps.len() == 2 && cert.gaps.iter().all(|p| p.gap.abs() <= 1e-9), || {
        format!("gaps {:?}", cert.gaps.iter().map(|p| p.gap).collect::<Vec<_>>())
    })?;
    for i in 0..2 {
        let oracle = oracle_gap(&g, &uniform, i);
        ensure(oracle.abs() <= 1e-9, || format!("oracle gap {oracle} for player {}", i + 1))?;
        let strong = check_strong_slater_at(&g, i, &uniform).map_err(e)?;
        ensure(!strong.holds, || "strong Slater should fail".into())?;

        let weak = check_weak_slater_at(&g, i, &uniform).map_err(e)?;
        ensure(weak.condition1.as_ref().is_some_and(|c| !c.holds), || {
            "condition 1 should fail".into()
        })?;
        ensure(weak.condition2a_holds == Some(true), || "condition 2(a) should hold".into())?;
        let minima = weak.condition2a.clone().unwrap_or_default();
        ensure(
            minima.len() == 4 && minima.iter().all(|m| m.min_value.abs() <= 1e-9),
            || format!("minimum values {:?}", minima.iter().map(|m| m.min_value).collect::<Vec<_>>()),
        )?;
        let mix = weak.condition2b.clone().ok_or("condition 2(b) should hold")?;
        ensure(mix.alpha.iter().all(|a| (a - 0.25).abs() <= 1e-12), || {
            format!("mixture {:?} is not uniform", mix.alpha)
        })?;
        // the uniform mixture of all four deterministic modifications meets
        // every constraint
        let mut mixed = vec![0.0; 4];
        for t in all_targets(&g, i) {
            for (m, v) in mixed.iter_mut().zip(oracle_targets(&g, &uniform, i, &t)) {
                *m += 0.25 * v;
            }
        }
        ensure(mixed.iter().all(|v| *v >= 0.25 - 1e-9), || format!("mixture occupancy {mixed:?}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("{} grid policies, one feasible, {elapsed:.2?}", grid.len()))
}

fn criterion3() -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let mut rng = rng_from_seed(1000 + seed);
        let spec = RandomGameSpec {
            horizon: 1 + (seed % 3) as usize,
            num_states: 1 + (seed / 3 % 3) as usize,
            action_sizes: vec![2, 2],
            num_constraints: 1,
            mode: ConstraintMode::Common,
            looseness: 0.9,
        };
        let g = random_game(&mut rng, &spec).map_err(e)?;
        for _ in 0..10 {
            let pi = random_policy(&mut rng, &g);
            let d = compute_occupancy(&g, &pi).map_err(e)?;
            worst = worst.max(max_diff(d.as_slice(), &oracle_policy(&g, &pi)));
        }
    }
    ensure(worst <= 1e-12, || format!("max error {worst:.3e}"))?;
    Ok(format!("500 policies, max error {worst:.3e}"))
}

fn instance(seed: u64) -> Result<(ConstrainedMarkovGame, MarkovPolicy, rand_chacha::ChaCha8Rng), String> {
    let mut rng = rng_from_seed(2000 + seed);
    let spec = RandomGameSpec {
        horizon: 2,
        num_states: 2,
        action_sizes: vec![2, 2],
        num_constraints: 1 + (seed % 2) as usize,
        mode: ConstraintMode::Common,
        looseness: 0.9,
    };
    let g = random_game(&mut rng, &spec).map_err(e)?;
    let pi = random_policy(&mut rng, &g);
    Ok((g, pi, rng))
}

fn kernel_error(mdp: &AuxiliaryMdp) -> f64 {
    let mut worst: f64 = (1.0 - mdp.rho().iter().sum::<f64>()).abs();
    for t in 0..mdp.horizon() - 1 {
        for x in 0..=mdp.absorbing(t) {
            for b in 0..mdp.num_actions() {
                let total: f64 = mdp.transition(t, x, b).iter().map(|(_, p)| p).sum();
                worst = worst.max((1.0 - total).abs());
            }
        }
    }
    worst
}

fn criterion4() -> Check {
    let (mut kern, mut markov, mut factor, mut optimum): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for seed in 0..25u64 {
        let (g, pi, mut rng) = instance(seed)?;
        let (ns, na) = (g.num_states(), g.num_joint_actions());
        for i in 0..2 {
            let ai = g.num_actions(i);
            let mdp1 = build_mdp1(&g, i, &pi, DEFAULT_HISTORY_CAP).map_err(e)?;
            let mdp2 = build_mdp2(&g, i, &pi).map_err(e)?;
            kern = kern.max(kernel_error(&mdp1)).max(kernel_error(&mdp2));

            for _ in 0..10 {
                let phi = random_nonmarkov_modification(&mut rng, &g, i, DEFAULT_HISTORY_CAP).map_err(e)?;
                let direct = oracle_nonmarkov(&g, &pi, &phi);
                let flat = markovianize(&g, &pi, &phi, DEFAULT_HISTORY_CAP).map_err(e)?;
                markov = markov.max(max_diff(&direct, &oracle_markov_mod(&g, &pi, &flat)));

                // d_t(s, (b, a^-i)) = |A^i|^t sum over histories and a^i of
                // d~_t(history, a^i; b) pi_t((a^i, a^-i) | s)
                let occ = aux_occupancy(&mdp1, AuxPolicy::NonMarkov(&phi)).map_err(e)?;
                let mut rebuilt = vec![0.0; g.horizon() * ns * na];
                for t in 0..g.horizon() {
                    let scale = (ai as f64).powi(t as i32 + 1);
                    for key in 0..mdp1.num_states(t) {
                        let (p, own) = (key / ai, key % ai);
                        let s = p % ns;
                        for b in 0..ai {
                            let w = occ.get(t, key, b);
                            if w == 0.0 {
                                continue;
                            }
                            for a in (0..na).filter(|&a| component(&g, a, i) == own) {
                                rebuilt[(t * ns + s) * na + replace(&g, a, i, b)] +=
                                    scale * w * pi.prob(t, s, a);
                            }
                        }
                    }
                }
                factor = factor.max(max_diff(&direct, &rebuilt));
            }

            let vertices: Vec<Vec<f64>> =
                all_targets(&g, i).iter().map(|t| oracle_targets(&g, &pi, i, t)).collect();
            let mut signals = vec![g.reward(i).clone()];
            signals.extend((0..g.num_constraints()).map(|j| g.constraint(i, j).clone()));
            for signal in &signals {
                let lifted = lift_reward(&g, i, &pi, signal).map_err(e)?;
                let best = optimize_aux(&mdp2, &lifted, Direction::Max).map_err(e)?;
                let exhaustive = vertices
                    .iter()
                    .map(|d| dot(d, signal.as_slice()))
                    .fold(f64::NEG_INFINITY, f64::max);
                optimum = optimum.max((best.value - exhaustive).abs());
            }
        }
    }
    ensure(kern <= 1e-9, || format!("kernel row error {kern:.3e}"))?;
    ensure(markov <= 1e-9, || format!("markovianization error {markov:.3e}"))?;
    ensure(factor <= 1e-9, || format!("factor identity error {factor:.3e}"))?;
    ensure(optimum <= 1e-9, || format!("optimum error {optimum:.3e}"))?;
    Ok(format!(
        "25 instances: kernels {kern:.1e}, markovianize {markov:.1e}, factor {factor:.1e}, optimum {optimum:.1e}"
    ))
}

fn criterion5() -> Check {
    let (mut hull, mut rebuilt): (f64, f64) = (0.0, 0.0);
    for seed in 0..25u64 {
        let (g, pi, mut rng) = instance(seed)?;
        for i in 0..2 {
            let dets = enumerate_det_modifications(&g, i, DEFAULT_ENUMERATION_CAP).map_err(e)?;
            let vertices: Vec<Vec<f64>> = (0..dets.len())
                .map(|k| oracle_targets(&g, &pi, i, &dets.targets(k)))
                .collect();
            let as_occ: Vec<OccupancyMeasure> = vertices
                .iter()
                .map(|v| {
                    let h = g.horizon();
                    let t = cmg_core::StageArray::from_vec(h, g.num_states(), g.num_joint_actions(), v.clone())
                        .expect("sized");
                    OccupancyMeasure::from_table(t)
                })
                .collect();
            for _ in 0..20 {
                let phi = random_markov_modification(&mut rng, &g, i).map_err(e)?;
                let point = oracle_markov_mod(&g, &pi, &phi);
                let point_occ = OccupancyMeasure::from_table(
                    cmg_core::StageArray::from_vec(g.horizon(), g.num_states(), g.num_joint_actions(), point.clone())
                        .expect("sized"),
                );
                let member = hull_membership(&point_occ, &as_occ).map_err(e)?;
                ensure(member.member, || format!("seed {seed} player {i}: not a member"))?;
                ensure(
                    member.alpha.iter().all(|&a| a >= -1e-12)
                        && (member.alpha.iter().sum::<f64>() - 1.0).abs() <= 1e-9,
                    || "certificate weights are not a distribution".into(),
                )?;
                let mut mix = vec![0.0; point.len()];
                for (a, v) in member.alpha.iter().zip(&vertices) {
                    for (m, x) in mix.iter_mut().zip(v) {
                        *m += a * x;
                    }
                }
                hull = hull.max(max_diff(&mix, &point));

                let support = rand::seq::index::sample(&mut rng, dets.len(), 3).into_vec();
                let weights = dirichlet(&mut rng, support.len());
                let mut alpha = vec![0.0; dets.len()];
                for (k, w) in support.iter().zip(&weights) {
                    alpha[*k] = *w;
                }
                let mut target = vec![0.0; point.len()];
                for (a, v) in alpha.iter().zip(&vertices) {
                    for (m, x) in target.iter_mut().zip(v) {
                        *m += a * x;
                    }
                }
                let phi = modification_from_mixture(&g, &pi, &dets, &alpha).map_err(e)?;
                rebuilt = rebuilt.max(max_diff(&target, &oracle_markov_mod(&g, &pi, &phi)));
            }
        }
    }
    ensure(hull <= 1e-7, || format!("certificate residual {hull:.3e}"))?;
    ensure(rebuilt <= 1e-9, || format!("reconstruction error {rebuilt:.3e}"))?;
    Ok(format!("1000 memberships, residual {hull:.1e}; reconstruction {rebuilt:.1e}"))
}

fn random_lp(seed: u64) -> LinearProgram {
    let mut rng = rng_from_seed(3000 + seed);
    let n = rng.random_range(2..=8);
    let m = rng.random_range(1..=12);
    let x0: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let sense = if rng.random_bool(0.5) { Sense::Max } else { Sense::Min };
    let objective = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut lp = LinearProgram::new(sense, objective);
    let mut equalities = 0;
    for _ in 0..m {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v = dot(&a, &x0);
        let u: f64 = rng.random();
        if u < 0.15 && equalities < 2 {
            equalities += 1;
            lp.add(a, Relation::Eq, v);
        } else if u < 0.6 {
            lp.add(a, Relation::Le, v + rng.random_range(0.0..0.5));
        } else {
            lp.add(a, Relation::Ge, v - rng.random_range(0.0..0.5));
        }
    }
    if seed % 5 == 4 {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let beta = rng.random::<f64>();
        lp.add(a.clone(), Relation::Le, beta);
        lp.add(a, Relation::Ge, beta + 1.0);
    }
    lp
}

fn criterion6() -> Check {
    let mut counts = [0usize; 3];
    let mut worst: f64 = 0.0;
    for seed in 0..200u64 {
        let lp = random_lp(seed);
        let got = solve_lp(&lp).map_err(e)?;
        let expect = bfs_oracle(&lp);
        match (&expect, got.status) {
            (Oracle::Optimal(v), LpStatus::Optimal) => {
                counts[0] += 1;
                worst = worst.max((got.objective - v).abs());
                let viol = lp.max_violation(&got.x);
                ensure(viol <= 1e-9, || format!("lp {seed}: solution violates rows by {viol:.3e}"))?;
            }
            (Oracle::Infeasible, LpStatus::Infeasible) => counts[1] += 1,
            (Oracle::Unbounded, LpStatus::Unbounded) => counts[2] += 1,
            _ => return Err(format!("lp {seed}: oracle {expect:?}, solver {:?}", got.status)),
        }
    }
    ensure(worst <= 1e-9, || format!("objective error {worst:.3e}"))?;

    let mut constructed = Vec::new();
    let mut lp = LinearProgram::new(Sense::Max, vec![1.0, 1.0]);
    lp.add(vec![1.0, 1.0], Relation::Le, 1.0).add(vec![1.0, 1.0], Relation::Ge, 2.0);
    constructed.push((lp, LpStatus::Infeasible));
    let mut lp = LinearProgram::new(Sense::Min, vec![0.0, 0.0]);
    lp.add(vec![1.0, 0.0], Relation::Eq, -1.0);
    constructed.push((lp, LpStatus::Infeasible));
    let mut lp = LinearProgram::new(Sense::Max, vec![1.0, 0.0]);
    lp.add(vec![1.0, -1.0], Relation::Le, 1.0);
    constructed.push((lp, LpStatus::Unbounded));
    let mut lp = LinearProgram::new(Sense::Min, vec![-1.0, -1.0]);
    lp.add(vec![1.0, -1.0], Relation::Eq, 0.0);
    constructed.push((lp, LpStatus::Unbounded));
    for (k, (lp, status)) in constructed.iter().enumerate() {
        let got = solve_lp(lp).map_err(e)?;
        ensure(got.status == *status, || format!("constructed case {k}: {:?}", got.status))?;
        let oracle = bfs_oracle(lp);
        let agrees = matches!(
            (status, &oracle),
            (LpStatus::Infeasible, Oracle::Infeasible) | (LpStatus::Unbounded, Oracle::Unbounded)
        );
        ensure(agrees, || format!("constructed case {k}: oracle {oracle:?}"))?;
    }
    Ok(format!(
        "{} optimal (max error {worst:.1e}), {} infeasible, {} unbounded; 4 constructed cases",
        counts[0], counts[1], counts[2]
    ))
}

fn criterion7() -> Check {
    let start = Instant::now();
    let options = FindOptions::default();
    let (mut converged, mut false_certs) = (0, 0);
    let mut misses = Vec::new();
    for seed in 0..50u64 {
        let mut rng = rng_from_seed(seed);
        let spec = RandomGameSpec {
            horizon: 1,
            num_states: 1,
            action_sizes: vec![2, 2],
            num_constraints: 1 + (seed % 2) as usize,
            mode: ConstraintMode::Common,
            looseness: 0.8,
        };
        let g = random_game(&mut rng, &spec).map_err(e)?;
        feasible_start(&g).map_err(|err| format!("seed {seed}: {err}"))?;
        let out = find_cce(&g, StartPoint::Auto, &options).map_err(e)?;
        if !out.trace.converged {
            misses.push(seed);
            continue;
        }
        converged += 1;
        let cert = verify_cce(&g, &out.policy, options.tol).map_err(e)?;
        let d = oracle_policy(&g, &out.policy);
        let min_slack = (0..g.num_constraints())
            .map(|j| dot(&d, g.constraint(0, j).as_slice()) - g.threshold(0, j))
            .fold(f64::INFINITY, f64::min);
        let oracle = (0..2).map(|i| oracle_gap(&g, &out.policy, i)).fold(f64::NEG_INFINITY, f64::max);
        if cert.verdict != Verdict::ConstrainedCe || min_slack < -1e-9 || oracle > options.tol {
            false_certs += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(converged * 10 >= 50 * 9, || {
        format!("{converged}/50 converged (missed seeds {misses:?})")
    })?;
    ensure(false_certs == 0, || format!("{false_certs} false certificates"))?;
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{converged}/50 converged, 0 false certificates, unconverged seeds {misses:?}, {elapsed:.1?}"
    ))
}

fn criterion8() -> Check {
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_cmg"))
            .args(["--json", "reproduce-paper", "--seed", "0"])
            .output()
            .map_err(e)
    };
    let (a, b) = (run()?, run()?);
    ensure(a.status.success(), || {
        format!("exit {:?}: {}", a.status.code(), String::from_utf8_lossy(&a.stderr))
    })?;
    ensure(!a.stdout.is_empty() && a.stdout == b.stdout, || "reports differ".into())?;
    Ok(format!("{} identical bytes", a.stdout.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("example 1 reproduction", criterion1),
        ("example 2 reproduction", criterion2),
        ("occupancy oracle", criterion3),
        ("auxiliary MDP suite", criterion4),
        ("hull membership and reconstruction", criterion5),
        ("LP solver", criterion6),
        ("fixed-point search", criterion7),
        ("determinism", criterion8),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail}", k + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
