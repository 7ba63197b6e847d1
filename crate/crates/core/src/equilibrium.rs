//! Constrained correlated equilibria: certificates, Slater diagnostics and
//! the fixed-point search.

use serde::{Deserialize, Serialize};

use crate::aux_mdps::{build_mdp2, lift_reward, optimize_aux, Direction};
use crate::dynamics::{
    compute_occupancy, occupancy_to_policy, player_slacks, signal_value, OccupancyMeasure,
    PlayerSlacks, FEASIBILITY_TOL,
};
use crate::error::{Error, Result};
use crate::game::{ConstrainedMarkovGame, ConstraintMode, MarkovPolicy};
use crate::lp::{
    max_min_slack, positive_feasible_mixture, solve_best_modification, solve_lp, LinearProgram,
    LpStatus, ModificationProfile, PositiveMixture, Relation, Selection, Sense, STRICT_TOL,
};
use crate::modifications::{DetModifications, DEFAULT_ENUMERATION_CAP};
use crate::random::{random_policy, rng_from_seed};

/// Slack within this of zero puts a policy on the feasible-set boundary.
pub const BOUNDARY_TOL: f64 = 1e-9;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 10_000;
const BISECTION_STEPS: usize = 60;
const PARTNER_DRAWS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "constrained_CE")]
    ConstrainedCe,
    #[serde(rename = "not_CE")]
    NotCe,
    #[serde(rename = "infeasible_policy")]
    InfeasiblePolicy,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::ConstrainedCe => "constrained_CE",
            Verdict::NotCe => "not_CE",
            Verdict::InfeasiblePolicy => "infeasible_policy",
        })
    }
}

/// One deterministic modification with its mixture weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedModification {
    pub index: usize,
    pub weight: f64,
    /// Target action per `(t, s, a^i)` cell.
    pub targets: Vec<usize>,
}

fn support(dets: &DetModifications, alpha: &[f64]) -> Vec<WeightedModification> {
    alpha
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(index, &weight)| WeightedModification {
            index,
            weight,
            targets: dets.targets(index),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerGap {
    pub player: usize,
    /// `V^{r^i}(pi)`.
    pub value: f64,
    /// Best feasible modified value `Psi^i(pi)`.
    pub psi: f64,
    pub gap: f64,
    pub best_response: Vec<WeightedModification>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCertificate {
    /// `policy[t][s][a]`.
    pub policy: Vec<Vec<Vec<f64>>>,
    /// Empty for infeasible policies.
    pub gaps: Vec<PlayerGap>,
    pub slacks: Vec<PlayerSlacks>,
    pub verdict: Verdict,
    pub tol: f64,
}

impl EquilibriumCertificate {
    /// Largest gap; `None` when gaps were not computed.
    pub fn max_gap(&self) -> Option<f64> {
        self.gaps.iter().map(|g| g.gap).reduce(f64::max)
    }

    pub fn min_slack(&self) -> f64 {
        self.slacks
            .iter()
            .flat_map(|p| p.slacks.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn gap(&self, player: usize) -> Option<f64> {
        self.gaps.iter().find(|g| g.player == player).map(|g| g.gap)
    }
}

struct GapData {
    gap: PlayerGap,
    profile: ModificationProfile,
    alpha: Vec<f64>,
}

/// Best feasible modification of one player at `policy`. Thresholds are
/// capped at the policy's own constraint values, so the identity stays
/// feasible when `policy` meets a constraint only within tolerance.
fn player_gap(
    game: &ConstrainedMarkovGame,
    policy: &MarkovPolicy,
    d: &OccupancyMeasure,
    player: usize,
    cap: u128,
) -> Result<GapData> {
    let mut profile = ModificationProfile::new(game, player, policy, cap)?;
    let id = profile.dets.identity_index();
    for j in 0..profile.num_constraints() {
        profile.thresholds[j] = profile.thresholds[j].min(profile.constraint_values[id][j]);
    }
    let best = solve_best_modification(&profile, Selection::Bland)?;
    let (Some(psi), Some(alpha)) = (best.psi, best.alpha) else {
        return Err(Error::MalformedLp(format!(
            "best-modification program returned {:?} with the identity feasible",
            best.status
        )));
    };
    let value = signal_value(game.reward(player), d);
    Ok(GapData {
        gap: PlayerGap {
            player,
            value,
            psi,
            gap: psi - value,
            best_response: support(&profile.dets, &alpha),
        },
        profile,
        alpha,
    })
}

fn slacks_at(game: &ConstrainedMarkovGame, d: &OccupancyMeasure, tol: f64) -> Vec<PlayerSlacks> {
    (0..game.num_players())
        .map(|i| {
            let slacks = player_slacks(game, d, i);
            PlayerSlacks {
                player: i,
                feasible: slacks.iter().all(|&s| s >= -tol),
                slacks,
            }
        })
        .collect()
}

/// Checks the constrained correlated equilibrium conditions at `policy`:
/// feasibility, then a zero gap between each player's best feasible
/// modification and their current value.
pub fn verify_cce(
    game: &ConstrainedMarkovGame,
    policy: &MarkovPolicy,
    tol: f64,
) -> Result<EquilibriumCertificate> {
    verify_cce_capped(game, policy, tol, DEFAULT_ENUMERATION_CAP)
}

pub fn verify_cce_capped(
    game: &ConstrainedMarkovGame,
    policy: &MarkovPolicy,
    tol: f64,
    cap: u128,
) -> Result<EquilibriumCertificate> {
    let d = compute_occupancy(game, policy)?;
    let slacks = slacks_at(game, &d, tol);
    let mut cert = EquilibriumCertificate {
        policy: policy.table().to_nested(),
        gaps: Vec::new(),
        verdict: Verdict::InfeasiblePolicy,
        tol,
        slacks,
    };
    if cert.slacks.iter().any(|p| !p.feasible) {
        return Ok(cert);
    }
    for i in 0..game.num_players() {
        cert.gaps.push(player_gap(game, policy, &d, i, cap)?.gap);
    }
    cert.verdict = if cert.gaps.iter().all(|g| g.gap <= tol) {
        Verdict::ConstrainedCe
    } else {
        Verdict::NotCe
    };
    Ok(cert)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrongSlaterResult {
    pub player: usize,
    pub holds: bool,
    /// Largest achievable minimum slack; `None` without constraints.
    pub max_min_slack: Option<f64>,
    /// A strictly feasible mixture when `holds`.
    pub witness: Option<Vec<WeightedModification>>,
}

fn strong_from_profile(profile: &ModificationProfile) -> Result<StrongSlaterResult> {
    let id = profile.dets.identity_index();
    let mut one_hot = vec![0.0; profile.len()];
    one_hot[id] = 1.0;
    let id_slack = profile.slacks(&one_hot).into_iter().fold(f64::INFINITY, f64::min);
    if id_slack > STRICT_TOL {
        return Ok(StrongSlaterResult {
            player: profile.player,
            holds: true,
            max_min_slack: if id_slack.is_finite() {
                max_min_slack(profile)?.map(|(s, _)| s)
            } else {
                None
            },
            witness: Some(support(&profile.dets, &one_hot)),
        });
    }
    let (slack, alpha) = max_min_slack(profile)?.expect("constraints exist when identity slack is finite");
    let holds = slack > STRICT_TOL;
    Ok(StrongSlaterResult {
        player: profile.player,
        holds,
        max_min_slack: Some(slack),
        witness: holds.then(|| support(&profile.dets, &alpha)),
    })
}

/// Is there a Markov modification of `player` leaving every constraint
/// strictly slack at `policy`?
pub fn check_strong_slater_at(
    game: &ConstrainedMarkovGame,
    player: usize,
    policy: &MarkovPolicy,
) -> Result<StrongSlaterResult> {
    strong_from_profile(&ModificationProfile::new(game, player, policy, DEFAULT_ENUMERATION_CAP)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMinimum {
    pub constraint: usize,
    /// `min_phi V^{g^j}(phi o pi)` over Markov modifications.
    pub min_value: f64,
    pub threshold: f64,
    pub below_threshold: bool,
    /// Minimizing deterministic modification, target per `(t, s, a^i)`.
    pub argmin: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakSlaterBranch {
    NotApplicable,
    Condition1,
    Condition2,
    Violated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakSlaterResult {
    pub player: usize,
    pub min_slack: f64,
    pub boundary: bool,
    pub condition1: Option<StrongSlaterResult>,
    pub condition2a: Option<Vec<ConstraintMinimum>>,
    pub condition2a_holds: Option<bool>,
    pub condition2b: Option<PositiveMixture>,
    pub branch: WeakSlaterBranch,
}

impl WeakSlaterResult {
    pub fn holds(&self) -> Option<bool> {
        match self.branch {
            WeakSlaterBranch::NotApplicable => None,
            WeakSlaterBranch::Violated => Some(false),
            _ => Some(true),
        }
    }

    /// The sub-conditions that fail, for reports.
    pub fn failed_conditions(&self) -> String {
        let mut parts = Vec::new();
        if self.condition1.as_ref().is_some_and(|c| !c.holds) {
            parts.push("1");
        }
        if self.condition2a_holds == Some(false) {
            parts.push("2(a)");
        }
        if self.boundary && self.condition2b.is_none() {
            parts.push("2(b)");
        }
        format!("weak condition {}", parts.join(", "))
    }
}

/// Checks the boundary relaxation of Slater's condition at a feasible
/// policy of a common-constraint game.
pub fn check_weak_slater_at(
    game: &ConstrainedMarkovGame,
    player: usize,
    policy: &MarkovPolicy,
) -> Result<WeakSlaterResult> {
    if game.mode() != ConstraintMode::Common {
        return Err(Error::Mode {
            expected: "common",
        });
    }
    game.check_player(player)?;
    let d = compute_occupancy(game, policy)?;
    let slacks = player_slacks(game, &d, player);
    let min_slack = slacks.iter().copied().fold(f64::INFINITY, f64::min);
    if min_slack < -FEASIBILITY_TOL {
        return Err(Error::InfeasiblePolicy { min_slack });
    }
    let mut result = WeakSlaterResult {
        player,
        min_slack,
        boundary: min_slack <= BOUNDARY_TOL,
        condition1: None,
        condition2a: None,
        condition2a_holds: None,
        condition2b: None,
        branch: WeakSlaterBranch::NotApplicable,
    };
    if !result.boundary {
        return Ok(result);
    }
    let profile = ModificationProfile::new(game, player, policy, DEFAULT_ENUMERATION_CAP)?;
    let cond1 = strong_from_profile(&profile)?;

    let mdp = build_mdp2(game, player, policy)?;
    let mut minima = Vec::with_capacity(game.num_constraints());
    for j in 0..game.num_constraints() {
        let lifted = lift_reward(game, player, policy, game.constraint(player, j))?;
        let opt = optimize_aux(&mdp, &lifted, Direction::Min)?;
        let threshold = game.threshold(player, j);
        minima.push(ConstraintMinimum {
            constraint: j,
            min_value: opt.value,
            threshold,
            below_threshold: opt.value < threshold - FEASIBILITY_TOL,
            argmin: opt.modification.targets().unwrap_or_default(),
        });
    }
    let cond2a = minima.iter().all(|m| m.below_threshold);
    let cond2b = positive_feasible_mixture(&profile)?;

    result.branch = if cond1.holds {
        WeakSlaterBranch::Condition1
    } else if cond2a && cond2b.is_some() {
        WeakSlaterBranch::Condition2
    } else {
        WeakSlaterBranch::Violated
    };
    result.condition1 = Some(cond1);
    result.condition2a = Some(minima);
    result.condition2a_holds = Some(cond2a);
    result.condition2b = cond2b;
    Ok(result)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlaterMode {
    Strong,
    Weak,
}

impl std::str::FromStr for SlaterMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "strong" => Ok(SlaterMode::Strong),
            "weak" => Ok(SlaterMode::Weak),
            other => Err(format!("unknown Slater mode '{other}' (expected strong or weak)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Holds,
    Fails,
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub sample: usize,
    pub player: usize,
    pub status: SampleStatus,
    /// Smallest constraint slack at the tested policy.
    pub min_slack: f64,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlaterFailure {
    pub sample: usize,
    pub player: usize,
    /// The violated sub-condition.
    pub condition: String,
    /// `policy[t][s][a]` at which the condition fails.
    pub witness: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlaterReport {
    pub mode: SlaterMode,
    pub seed: u64,
    pub num_samples: usize,
    /// Pointwise checks that ran (not counting inapplicable ones).
    pub tested: usize,
    pub not_applicable: usize,
    pub outcomes: Vec<SampleOutcome>,
    pub failures: Vec<SlaterFailure>,
    pub note: Option<String>,
}

fn min_common_slack(game: &ConstrainedMarkovGame, d: &OccupancyMeasure) -> f64 {
    (0..game.num_players())
        .flat_map(|i| player_slacks(game, d, i))
        .fold(f64::INFINITY, f64::min)
}

/// Largest step from `feasible` toward `other` that stays feasible, by
/// bisection on the minimum slack.
fn bisect_to_boundary(
    game: &ConstrainedMarkovGame,
    feasible: &OccupancyMeasure,
    other: &OccupancyMeasure,
) -> OccupancyMeasure {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if min_common_slack(game, &other.blend(feasible, mid)) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    other.blend(feasible, lo)
}

/// Samples policies and runs the pointwise Slater check at each. In weak
/// mode every sample is first moved onto the feasible-set boundary. A clean
/// report is evidence, not proof.
pub fn slater_sampling_harness(
    game: &ConstrainedMarkovGame,
    mode: SlaterMode,
    num_samples: usize,
    seed: u64,
) -> Result<SlaterReport> {
    if mode == SlaterMode::Weak && game.mode() != ConstraintMode::Common {
        return Err(Error::Mode {
            expected: "common",
        });
    }
    let mut rng = rng_from_seed(seed);
    let mut report = SlaterReport {
        mode,
        seed,
        num_samples,
        tested: 0,
        not_applicable: 0,
        outcomes: Vec::new(),
        failures: Vec::new(),
        note: None,
    };
    let reference = match mode {
        SlaterMode::Strong => None,
        SlaterMode::Weak => match feasible_start(game) {
            Ok(d) => Some(d),
            Err(Error::NoFeasibleStart(_)) => {
                report.note = Some("the feasible set is empty; no boundary policies exist".into());
                report.not_applicable = num_samples * game.num_players();
                return Ok(report);
            }
            Err(e) => return Err(e),
        },
    };

    for sample in 0..num_samples {
        let drawn = random_policy(&mut rng, game);
        let (policy, note) = match &reference {
            None => (drawn, None),
            Some(d_ref) => {
                let d = compute_occupancy(game, &drawn)?;
                let boundary = if min_common_slack(game, &d) < 0.0 {
                    Some(bisect_to_boundary(game, d_ref, &d))
                } else {
                    let mut found = None;
                    for _ in 0..PARTNER_DRAWS {
                        let partner = compute_occupancy(game, &random_policy(&mut rng, game))?;
                        if min_common_slack(game, &partner) < 0.0 {
                            found = Some(bisect_to_boundary(game, &d, &partner));
                            break;
                        }
                    }
                    found
                };
                match boundary {
                    Some(b) => (occupancy_to_policy(game, &b), None),
                    None => (drawn, Some("no boundary reached".to_string())),
                }
            }
        };
        let d = compute_occupancy(game, &policy)?;
        for player in 0..game.num_players() {
            let min_slack = player_slacks(game, &d, player)
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            let (status, condition) = match mode {
                SlaterMode::Strong => {
                    let r = check_strong_slater_at(game, player, &policy)?;
                    if r.holds {
                        (SampleStatus::Holds, None)
                    } else {
                        (SampleStatus::Fails, Some("strong".to_string()))
                    }
                }
                SlaterMode::Weak if note.is_some() => (SampleStatus::NotApplicable, None),
                SlaterMode::Weak => {
                    let r = check_weak_slater_at(game, player, &policy)?;
                    match r.holds() {
                        None => (SampleStatus::NotApplicable, None),
                        Some(true) => (SampleStatus::Holds, None),
                        Some(false) => (SampleStatus::Fails, Some(r.failed_conditions())),
                    }
                }
            };
            match status {
                SampleStatus::NotApplicable => report.not_applicable += 1,
                _ => report.tested += 1,
            }
            if let Some(condition) = condition {
                report.failures.push(SlaterFailure {
                    sample,
                    player,
                    condition,
                    witness: policy.table().to_nested(),
                });
            }
            report.outcomes.push(SampleOutcome {
                sample,
                player,
                status,
                min_slack,
                note: note.clone(),
            });
        }
    }
    Ok(report)
}

/// A feasible occupancy from a phase-one program over the occupancy
/// polytope with every constraint row, returned as the occupancy of its
/// conditional policy (so it is exactly flow-consistent).
pub fn feasible_start(game: &ConstrainedMarkovGame) -> Result<OccupancyMeasure> {
    let (h, ns, na) = (game.horizon(), game.num_states(), game.num_joint_actions());
    let n = h * ns * na;
    let var = |t: usize, s: usize, a: usize| (t * ns + s) * na + a;
    let mut lp = LinearProgram::new(Sense::Max, vec![0.0; n]);
    for s in 0..ns {
        let mut row = vec![0.0; n];
        (0..na).for_each(|a| row[var(0, s, a)] = 1.0);
        lp.add(row, Relation::Eq, game.rho()[s]);
    }
    for t in 1..h {
        for next in 0..ns {
            let mut row = vec![0.0; n];
            (0..na).for_each(|a| row[var(t, next, a)] = 1.0);
            for s in 0..ns {
                for a in 0..na {
                    row[var(t - 1, s, a)] -= game.transition(t - 1, s, a)[next];
                }
            }
            lp.add(row, Relation::Eq, 0.0);
        }
    }
    let players = match game.mode() {
        ConstraintMode::Common => 1.min(game.num_players()),
        ConstraintMode::Playerwise => game.num_players(),
    };
    for i in 0..players {
        for j in 0..game.num_constraints() {
            lp.add(
                game.constraint(i, j).as_slice().to_vec(),
                Relation::Ge,
                game.threshold(i, j),
            );
        }
    }
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::NoFeasibleStart(format!(
            "phase-one occupancy program is {:?}",
            sol.status
        )
        .to_lowercase()));
    }
    let table = crate::table::StageArray::from_vec(h, ns, na, sol.x).expect("sized");
    let policy = occupancy_to_policy(game, &OccupancyMeasure::from_table(table));
    compute_occupancy(game, &policy)
}

/// A seeded random starting point: a Dirichlet policy, pulled toward the
/// phase-one point until it is feasible.
pub fn random_feasible_start(game: &ConstrainedMarkovGame, seed: u64) -> Result<OccupancyMeasure> {
    let anchor = feasible_start(game)?;
    let mut rng = rng_from_seed(seed);
    let sample = compute_occupancy(game, &random_policy(&mut rng, game))?;
    if min_common_slack(game, &sample) >= 0.0 {
        return Ok(sample);
    }
    let blended = bisect_to_boundary(game, &anchor, &sample);
    compute_occupancy(game, &occupancy_to_policy(game, &blended))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayerSelection {
    #[default]
    MaxGap,
    RoundRobin,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `lambda = gap / (2H)`.
    GapScaled,
    /// Tries `gap / (2H) * 2^k` up to `1/2` and keeps the step leaving the
    /// smallest total gap.
    #[default]
    LineSearch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FindOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub selection: PlayerSelection,
    pub step: StepRule,
    pub cap: u128,
    /// Keep every iterate occupancy in the trace.
    pub record_iterates: bool,
}

impl Default for FindOptions {
    fn default() -> Self {
        FindOptions {
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            selection: PlayerSelection::MaxGap,
            step: StepRule::LineSearch,
            cap: DEFAULT_ENUMERATION_CAP,
            record_iterates: true,
        }
    }
}

#[derive(Clone, Debug)]
pub enum StartPoint {
    /// Phase-one occupancy program.
    Auto,
    Policy(MarkovPolicy),
    Occupancy(OccupancyMeasure),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub max_gap: f64,
    pub player: usize,
    pub gap: f64,
    pub lambda: f64,
    pub min_slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointTrace {
    /// Flattened occupancies `[t][s][a]`, starting point first.
    pub iterates: Vec<Vec<f64>>,
    pub steps: Vec<IterationRecord>,
    /// Maximum gap at every evaluated iterate, starting point first.
    pub max_gaps: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct FindResult {
    pub policy: MarkovPolicy,
    pub trace: FixedPointTrace,
    pub certificate: EquilibriumCertificate,
}

struct Evaluation {
    d: OccupancyMeasure,
    policy: MarkovPolicy,
    gaps: Vec<GapData>,
}

impl Evaluation {
    fn max_gap(&self) -> f64 {
        self.gaps.iter().map(|g| g.gap.gap).fold(f64::NEG_INFINITY, f64::max)
    }

    fn total_gap(&self) -> f64 {
        self.gaps.iter().map(|g| g.gap.gap.max(0.0)).sum()
    }
}

fn evaluate_point(game: &ConstrainedMarkovGame, d: &OccupancyMeasure, cap: u128) -> Result<Evaluation> {
    let policy = occupancy_to_policy(game, d);
    let d = compute_occupancy(game, &policy)?;
    let gaps = (0..game.num_players())
        .map(|i| player_gap(game, &policy, &d, i, cap))
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation { d, policy, gaps })
}

/// One step toward `player`'s best feasible modification.
fn step_for(
    game: &ConstrainedMarkovGame,
    current: &Evaluation,
    player: usize,
    horizon: f64,
    options: &FindOptions,
) -> Result<(f64, Evaluation)> {
    let data = &current.gaps[player];
    let target = data.profile.mixture(game, &current.policy, &data.alpha)?;
    let base = (data.gap.gap / (2.0 * horizon)).clamp(0.0, 0.5);
    match options.step {
        StepRule::GapScaled => {
            let d = target.blend(&current.d, base);
            Ok((base, evaluate_point(game, &d, options.cap)?))
        }
        StepRule::LineSearch => {
            let mut best: Option<(f64, Evaluation)> = None;
            let mut lambda = base;
            loop {
                let eval = evaluate_point(game, &target.blend(&current.d, lambda), options.cap)?;
                if best.as_ref().is_none_or(|(_, b)| eval.total_gap() < b.total_gap()) {
                    best = Some((lambda, eval));
                }
                if lambda >= 0.5 || lambda == 0.0 {
                    break;
                }
                lambda = (2.0 * lambda).min(0.5);
            }
            Ok(best.expect("at least one step tried"))
        }
    }
}

/// Damped best-response iteration on occupancy measures: move toward the
/// selected player's best feasible modification by a step set by
/// [`StepRule`].
///
/// Convergence is not guaranteed; the returned certificate is authoritative.
pub fn find_cce(
    game: &ConstrainedMarkovGame,
    start: StartPoint,
    options: &FindOptions,
) -> Result<FindResult> {
    if game.mode() != ConstraintMode::Common {
        return Err(Error::Mode {
            expected: "common",
        });
    }
    let d0 = match start {
        StartPoint::Auto => feasible_start(game)?,
        StartPoint::Policy(p) => compute_occupancy(game, &p)?,
        StartPoint::Occupancy(d) => {
            d.check(game)?;
            d
        }
    };
    let start_slack = min_common_slack(game, &d0);
    if start_slack < -FEASIBILITY_TOL {
        return Err(Error::InfeasiblePolicy {
            min_slack: start_slack,
        });
    }
    let horizon = game.horizon() as f64;
    let mut trace = FixedPointTrace {
        iterates: Vec::new(),
        steps: Vec::new(),
        max_gaps: Vec::new(),
        converged: false,
        iterations: 0,
    };
    let mut current = evaluate_point(game, &d0, options.cap)?;
    loop {
        if options.record_iterates {
            trace.iterates.push(current.d.as_slice().to_vec());
        }
        let max_gap = current.max_gap();
        trace.max_gaps.push(max_gap);
        if max_gap <= options.tol {
            trace.converged = true;
            break;
        }
        if trace.iterations >= options.max_iters {
            break;
        }
        let player = match options.selection {
            PlayerSelection::MaxGap => {
                let mut best = 0;
                for (i, g) in current.gaps.iter().enumerate() {
                    if g.gap.gap > current.gaps[best].gap.gap {
                        best = i;
                    }
                }
                best
            }
            PlayerSelection::RoundRobin => {
                let n = game.num_players();
                (0..n)
                    .map(|k| (trace.iterations + k) % n)
                    .find(|&i| current.gaps[i].gap.gap > options.tol)
                    .unwrap_or(0)
            }
        };
        let (lambda, next) = step_for(game, &current, player, horizon, options)?;
        let gap = current.gaps[player].gap.gap;
        trace.iterations += 1;
        trace.steps.push(IterationRecord {
            iteration: trace.iterations,
            max_gap,
            player,
            gap,
            lambda,
            min_slack: min_common_slack(game, &next.d),
        });
        current = next;
    }
    let certificate = verify_cce_capped(game, &current.policy, options.tol, options.cap)?;
    Ok(FindResult {
        policy: current.policy,
        trace,
        certificate,
    })
}
