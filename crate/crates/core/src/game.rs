//! Constrained Markov game data model, validation, and file loading.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{GameDocument, NumTree, PolicyDocument};
use crate::table::{ActionSpace, StageArray};

/// Structural tolerance for stochasticity checks on game and policy tables.
pub const STRUCTURAL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    Playerwise,
    Common,
}

impl fmt::Display for ConstraintMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintMode::Playerwise => f.write_str("playerwise"),
            ConstraintMode::Common => f.write_str("common"),
        }
    }
}

/// Coupling constraints `g^{i,j}` with thresholds `c^{i,j}`.
///
/// In common mode a single set of tables is stored and shared by every player.
#[derive(Clone, Debug, PartialEq)]
pub enum Constraints {
    Playerwise {
        signals: Vec<Vec<StageArray>>,
        thresholds: Vec<Vec<f64>>,
    },
    Common {
        signals: Vec<StageArray>,
        thresholds: Vec<f64>,
    },
}

/// A finite-horizon Markov game with coupling constraints.
///
/// Immutable once constructed; every constructor validates.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstrainedMarkovGame {
    horizon: usize,
    states: Vec<String>,
    actions: Vec<Vec<String>>,
    space: ActionSpace,
    rewards: Vec<StageArray>,
    constraints: Constraints,
    num_constraints: usize,
    /// `P_t(s'|s,a)` at `((t * S + s) * A + a) * S + s'`.
    kernel: Vec<f64>,
    rho: Vec<f64>,
}

impl ConstrainedMarkovGame {
    pub fn num_players(&self) -> usize {
        self.space.num_players()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn action_names(&self, player: usize) -> &[String] {
        &self.actions[player]
    }

    pub fn action_space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn num_joint_actions(&self) -> usize {
        self.space.joint_len()
    }

    pub fn num_actions(&self, player: usize) -> usize {
        self.space.size(player)
    }

    /// Number of constraints `J` per player.
    pub fn num_constraints(&self) -> usize {
        self.num_constraints
    }

    pub fn mode(&self) -> ConstraintMode {
        match self.constraints {
            Constraints::Playerwise { .. } => ConstraintMode::Playerwise,
            Constraints::Common { .. } => ConstraintMode::Common,
        }
    }

    pub fn constraints(&self) -> &Constraints {
        &self.constraints
    }

    pub fn reward(&self, player: usize) -> &StageArray {
        &self.rewards[player]
    }

    /// `g^{i,j}`; in common mode the same table for every `player`.
    pub fn constraint(&self, player: usize, j: usize) -> &StageArray {
        match &self.constraints {
            Constraints::Playerwise { signals, .. } => &signals[player][j],
            Constraints::Common { signals, .. } => &signals[j],
        }
    }

    pub fn threshold(&self, player: usize, j: usize) -> f64 {
        match &self.constraints {
            Constraints::Playerwise { thresholds, .. } => thresholds[player][j],
            Constraints::Common { thresholds, .. } => thresholds[j],
        }
    }

    /// Distribution `P_t(.|s, a)` over next states, for `t < horizon - 1`.
    pub fn transition(&self, t: usize, s: usize, a: usize) -> &[f64] {
        let ns = self.num_states();
        let start = ((t * ns + s) * self.num_joint_actions() + a) * ns;
        &self.kernel[start..start + ns]
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn check_player(&self, player: usize) -> Result<()> {
        if player < self.num_players() {
            Ok(())
        } else {
            Err(Error::PlayerOutOfRange {
                player,
                num_players: self.num_players(),
            })
        }
    }

    /// Validates all value invariants; shapes are guaranteed by construction.
    pub fn validate(&self) -> GameReport {
        validate_game(self)
    }

    pub fn from_document(doc: GameDocument) -> Result<Self> {
        let (game, report) = build_from_document(doc);
        match game {
            Some(game) if report.valid => Ok(game),
            _ => Err(Error::InvalidGame(Box::new(report))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GameDocument =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn to_document(&self) -> GameDocument {
        let n = self.num_players();
        let h = self.horizon;
        let s = self.num_states();
        let a = self.num_joint_actions();
        let table = |arr: &StageArray| NumTree::from_flat(&[h, s, a], arr.as_slice());
        let (constraints, thresholds) = match &self.constraints {
            Constraints::Playerwise {
                signals,
                thresholds,
            } => (
                NumTree::Node(
                    signals
                        .iter()
                        .map(|per_player| NumTree::Node(per_player.iter().map(table).collect()))
                        .collect(),
                ),
                NumTree::from_vec2(thresholds),
            ),
            Constraints::Common {
                signals,
                thresholds,
            } => (
                NumTree::Node(signals.iter().map(table).collect()),
                NumTree::from_vec1(thresholds),
            ),
        };
        GameDocument {
            num_players: n,
            horizon: h,
            states: self.states.clone(),
            actions: self.actions.clone(),
            rewards: NumTree::Node(self.rewards.iter().map(table).collect()),
            constraints,
            thresholds,
            kernel: NumTree::from_flat(&[h.saturating_sub(1), s, a, s], &self.kernel),
            rho: NumTree::from_vec1(&self.rho),
            constraint_mode: self.mode(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("game document serializes")
    }
}

/// Reads and validates a game file.
pub fn load_game(path: impl AsRef<Path>) -> Result<ConstrainedMarkovGame> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    ConstrainedMarkovGame::from_json(&text)
}

/// Parses a game file and reports every violated invariant, including
/// shape mismatches, without failing on the first one.
pub fn validate_document(doc: GameDocument) -> GameReport {
    build_from_document(doc).1
}

/// Joint Markov policy `pi_t(a|s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovPolicy(StageArray);

impl MarkovPolicy {
    /// Wraps a table after checking the row-stochasticity invariant.
    pub fn new(table: StageArray) -> Result<Self> {
        let (h, s, _) = table.shape();
        for t in 0..h {
            for st in 0..s {
                let row = table.row(t, st);
                if let Some(bad) = row.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidDistribution {
                        what: "policy",
                        detail: format!("negative or non-finite entry {bad} at t={t}, s={st}"),
                    });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STRUCTURAL_TOL {
                    return Err(Error::InvalidDistribution {
                        what: "policy",
                        detail: format!("row t={t}, s={st} sums to {sum}"),
                    });
                }
            }
        }
        Ok(MarkovPolicy(table))
    }

    /// Skips validation; callers guarantee row-stochasticity up to rounding.
    pub(crate) fn new_unchecked(table: StageArray) -> Self {
        MarkovPolicy(table)
    }

    pub fn uniform(game: &ConstrainedMarkovGame) -> Self {
        let a = game.num_joint_actions();
        MarkovPolicy(StageArray::from_fn(
            game.horizon(),
            game.num_states(),
            a,
            |_, _, _| 1.0 / a as f64,
        ))
    }

    /// Policy that plays the same joint distribution in every `(t, s)`.
    pub fn stationary(game: &ConstrainedMarkovGame, dist: &[f64]) -> Result<Self> {
        if dist.len() != game.num_joint_actions() {
            return Err(Error::dim("policy row", game.num_joint_actions(), dist.len()));
        }
        MarkovPolicy::new(StageArray::from_fn(
            game.horizon(),
            game.num_states(),
            dist.len(),
            |_, _, a| dist[a],
        ))
    }

    pub fn from_fn(
        game: &ConstrainedMarkovGame,
        f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        MarkovPolicy::new(StageArray::from_fn(
            game.horizon(),
            game.num_states(),
            game.num_joint_actions(),
            f,
        ))
    }

    pub fn table(&self) -> &StageArray {
        &self.0
    }

    #[inline]
    pub fn prob(&self, t: usize, s: usize, a: usize) -> f64 {
        self.0.get(t, s, a)
    }

    pub fn row(&self, t: usize, s: usize) -> &[f64] {
        self.0.row(t, s)
    }

    pub fn check_dims(&self, game: &ConstrainedMarkovGame) -> Result<()> {
        let (h, s, a) = self.0.shape();
        if h != game.horizon() {
            return Err(Error::dim("policy horizon", game.horizon(), h));
        }
        if s != game.num_states() {
            return Err(Error::dim("policy states", game.num_states(), s));
        }
        if a != game.num_joint_actions() {
            return Err(Error::dim("policy joint actions", game.num_joint_actions(), a));
        }
        Ok(())
    }

    pub fn from_document(game: &ConstrainedMarkovGame, doc: &PolicyDocument) -> Result<Self> {
        let dims = [game.horizon(), game.num_states(), game.num_joint_actions()];
        let data = doc.policy.flatten(&dims, "policy").map_err(Error::Parse)?;
        MarkovPolicy::new(StageArray::from_vec(dims[0], dims[1], dims[2], data).expect("shape checked"))
    }

    pub fn from_json(game: &ConstrainedMarkovGame, text: &str) -> Result<Self> {
        let doc: PolicyDocument =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_document(game, &doc)
    }

    pub fn to_document(&self) -> PolicyDocument {
        PolicyDocument {
            policy: NumTree::from_vec3(&self.0.to_nested()),
        }
    }
}

/// Reads a policy file for `game`.
pub fn load_policy(game: &ConstrainedMarkovGame, path: impl AsRef<Path>) -> Result<MarkovPolicy> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    MarkovPolicy::from_json(game, &text)
}

/// Where a violation sits in the game tuple.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Location {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub player: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraint: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint_action: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub next_state: Option<usize>,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(v) = &self.field {
            parts.push(v.clone());
        }
        let named = [
            ("i", self.player),
            ("j", self.constraint),
            ("t", self.t),
            ("s", self.state),
            ("a", self.joint_action),
            ("s'", self.next_state),
        ];
        for (name, v) in named {
            if let Some(v) = v {
                parts.push(format!("{name}={v}"));
            }
        }
        f.write_str(&parts.join(" "))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub location: Location,
    pub message: String,
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub invariant: String,
    pub passed: bool,
    pub violations: Vec<Violation>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GameSummary {
    pub num_players: usize,
    pub horizon: usize,
    pub num_states: usize,
    pub actions_per_player: Vec<usize>,
    pub num_constraints: usize,
    pub mode: Option<ConstraintMode>,
}

/// Outcome of validating a game: one entry per invariant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameReport {
    pub valid: bool,
    pub summary: GameSummary,
    pub checks: Vec<CheckResult>,
}

impl GameReport {
    fn new(summary: GameSummary) -> Self {
        GameReport {
            valid: true,
            summary,
            checks: Vec::new(),
        }
    }

    fn push(&mut self, invariant: &str, violations: Vec<Violation>) {
        let passed = violations.is_empty();
        self.valid &= passed;
        self.checks.push(CheckResult {
            invariant: invariant.to_string(),
            passed,
            violations,
        });
    }

    pub fn check(&self, invariant: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.invariant == invariant)
    }

    pub fn first_failure(&self) -> Option<String> {
        self.checks.iter().find(|c| !c.passed).map(|c| {
            let v = &c.violations[0];
            format!("{}: {} ({})", c.invariant, v.message, v.location)
        })
    }
}

pub const CHECK_SHAPE: &str = "table_shapes";
pub const CHECK_KERNEL: &str = "kernel_rows_stochastic";
pub const CHECK_REWARD_RANGE: &str = "rewards_in_unit_interval";
pub const CHECK_CONSTRAINT_RANGE: &str = "constraints_in_unit_interval";
pub const CHECK_RHO: &str = "initial_distribution";
pub const CHECK_THRESHOLDS: &str = "thresholds_finite";
pub const CHECK_COMMON: &str = "common_constraints_shared";

fn shape_violation(message: String) -> Violation {
    let field = message.split([':', '[']).next().map(str::to_string);
    Violation {
        location: Location {
            field,
            ..Default::default()
        },
        message,
        magnitude: f64::NAN,
    }
}

/// Converts a document into tables. Shape problems are collected into the
/// report; the game is produced only when every table has the right shape.
fn build_from_document(doc: GameDocument) -> (Option<ConstrainedMarkovGame>, GameReport) {
    let n = doc.num_players;
    let h = doc.horizon;
    let s = doc.states.len();
    let sizes: Vec<usize> = doc.actions.iter().map(Vec::len).collect();
    let mut summary = GameSummary {
        num_players: n,
        horizon: h,
        num_states: s,
        actions_per_player: sizes.clone(),
        num_constraints: 0,
        mode: Some(doc.constraint_mode),
    };
    let mut shape = Vec::new();
    if n == 0 {
        shape.push(shape_violation("num_players: must be at least 1".into()));
    }
    if h == 0 {
        shape.push(shape_violation("horizon: must be at least 1".into()));
    }
    if s == 0 {
        shape.push(shape_violation("states: must be non-empty".into()));
    }
    if sizes.len() != n {
        shape.push(shape_violation(format!(
            "actions: expected {n} action lists, found {}",
            sizes.len()
        )));
    }
    if let Some(p) = sizes.iter().position(|&k| k == 0) {
        shape.push(shape_violation(format!("actions[{p}]: must be non-empty")));
    }
    if !shape.is_empty() {
        let mut report = GameReport::new(summary);
        report.push(CHECK_SHAPE, shape);
        return (None, report);
    }

    let space = ActionSpace::new(sizes);
    let a = space.joint_len();
    let mut take = |tree: &NumTree, dims: &[usize], path: &str| match tree.flatten(dims, path) {
        Ok(v) => Some(v),
        Err(msg) => {
            shape.push(shape_violation(msg));
            None
        }
    };

    let rewards = take(&doc.rewards, &[n, h, s, a], "rewards");
    let rho = take(&doc.rho, &[s], "rho");
    let kernel = take(&doc.kernel, &[h - 1, s, a, s], "kernel");

    let j_count = match (&doc.constraint_mode, &doc.constraints) {
        (ConstraintMode::Playerwise, NumTree::Node(players)) => match players.first() {
            Some(NumTree::Node(js)) => js.len(),
            _ => 0,
        },
        (ConstraintMode::Common, NumTree::Node(js)) => js.len(),
        _ => 0,
    };
    summary.num_constraints = j_count;
    let (constraint_data, threshold_data) = match doc.constraint_mode {
        ConstraintMode::Playerwise => (
            take(&doc.constraints, &[n, j_count, h, s, a], "constraints"),
            take(&doc.thresholds, &[n, j_count], "thresholds"),
        ),
        ConstraintMode::Common => (
            take(&doc.constraints, &[j_count, h, s, a], "constraints"),
            take(&doc.thresholds, &[j_count], "thresholds"),
        ),
    };

    let (Some(rewards), Some(rho), Some(kernel), Some(cdata), Some(tdata)) =
        (rewards, rho, kernel, constraint_data, threshold_data)
    else {
        let mut report = GameReport::new(summary);
        report.push(CHECK_SHAPE, shape);
        return (None, report);
    };

    let table_len = h * s * a;
    let table = |chunk: &[f64]| StageArray::from_vec(h, s, a, chunk.to_vec()).expect("sized");
    let rewards: Vec<StageArray> = rewards.chunks(table_len).map(table).collect();
    let constraints = match doc.constraint_mode {
        ConstraintMode::Playerwise => Constraints::Playerwise {
            signals: (0..n)
                .map(|i| {
                    (0..j_count)
                        .map(|j| {
                            let start = (i * j_count + j) * table_len;
                            table(&cdata[start..start + table_len])
                        })
                        .collect()
                })
                .collect(),
            thresholds: (0..n)
                .map(|i| tdata[i * j_count..(i + 1) * j_count].to_vec())
                .collect(),
        },
        ConstraintMode::Common => Constraints::Common {
            signals: cdata.chunks(table_len.max(1)).take(j_count).map(table).collect(),
            thresholds: tdata,
        },
    };
    let game = ConstrainedMarkovGame {
        horizon: h,
        states: doc.states,
        actions: doc.actions,
        space,
        rewards,
        constraints,
        num_constraints: j_count,
        kernel,
        rho,
    };
    let mut report = validate_game(&game);
    report.checks.insert(
        0,
        CheckResult {
            invariant: CHECK_SHAPE.to_string(),
            passed: true,
            violations: Vec::new(),
        },
    );
    (Some(game), report)
}

fn range_violations(
    arr: &StageArray,
    player: Option<usize>,
    constraint: Option<usize>,
    out: &mut Vec<Violation>,
) {
    let (h, s, a) = arr.shape();
    for t in 0..h {
        for st in 0..s {
            for ja in 0..a {
                let v = arr.get(t, st, ja);
                if !(0.0..=1.0).contains(&v) {
                    let magnitude = if v.is_nan() {
                        f64::NAN
                    } else if v < 0.0 {
                        -v
                    } else {
                        v - 1.0
                    };
                    out.push(Violation {
                        location: Location {
                            player,
                            constraint,
                            t: Some(t),
                            state: Some(st),
                            joint_action: Some(ja),
                            ..Default::default()
                        },
                        message: format!("value {v} outside [0, 1]"),
                        magnitude,
                    });
                }
            }
        }
    }
}

/// Checks every value invariant of a constructed game.
pub fn validate_game(game: &ConstrainedMarkovGame) -> GameReport {
    let mut report = GameReport::new(GameSummary {
        num_players: game.num_players(),
        horizon: game.horizon(),
        num_states: game.num_states(),
        actions_per_player: game.action_space().sizes().to_vec(),
        num_constraints: game.num_constraints(),
        mode: Some(game.mode()),
    });
    let s = game.num_states();
    let a = game.num_joint_actions();

    let mut kernel = Vec::new();
    for t in 0..game.horizon().saturating_sub(1) {
        for st in 0..s {
            for ja in 0..a {
                let row = game.transition(t, st, ja);
                for (next, &p) in row.iter().enumerate() {
                    if !(p >= 0.0 && p <= 1.0) {
                        kernel.push(Violation {
                            location: Location {
                                t: Some(t),
                                state: Some(st),
                                joint_action: Some(ja),
                                next_state: Some(next),
                                ..Default::default()
                            },
                            message: format!("transition probability {p} outside [0, 1]"),
                            magnitude: if p < 0.0 { -p } else { p - 1.0 },
                        });
                    }
                }
                let sum: f64 = row.iter().sum();
                if !((sum - 1.0).abs() <= STRUCTURAL_TOL) {
                    kernel.push(Violation {
                        location: Location {
                            t: Some(t),
                            state: Some(st),
                            joint_action: Some(ja),
                            ..Default::default()
                        },
                        message: format!("row sums to {sum}, deficit {}", 1.0 - sum),
                        magnitude: 1.0 - sum,
                    });
                }
            }
        }
    }
    report.push(CHECK_KERNEL, kernel);

    let mut rewards = Vec::new();
    for i in 0..game.num_players() {
        range_violations(game.reward(i), Some(i), None, &mut rewards);
    }
    report.push(CHECK_REWARD_RANGE, rewards);

    let mut constraints = Vec::new();
    let mut thresholds = Vec::new();
    let threshold_check = |i: Option<usize>, j: usize, c: f64, out: &mut Vec<Violation>| {
        if !c.is_finite() {
            out.push(Violation {
                location: Location {
                    player: i,
                    constraint: Some(j),
                    ..Default::default()
                },
                message: format!("threshold {c} is not finite"),
                magnitude: f64::NAN,
            });
        }
    };
    match game.constraints() {
        Constraints::Playerwise {
            signals,
            thresholds: cs,
        } => {
            for (i, per_player) in signals.iter().enumerate() {
                for (j, sig) in per_player.iter().enumerate() {
                    range_violations(sig, Some(i), Some(j), &mut constraints);
                    threshold_check(Some(i), j, cs[i][j], &mut thresholds);
                }
            }
        }
        Constraints::Common {
            signals,
            thresholds: cs,
        } => {
            for (j, sig) in signals.iter().enumerate() {
                range_violations(sig, None, Some(j), &mut constraints);
                threshold_check(None, j, cs[j], &mut thresholds);
            }
        }
    }
    report.push(CHECK_CONSTRAINT_RANGE, constraints);
    report.push(CHECK_THRESHOLDS, thresholds);

    let mut rho = Vec::new();
    for (st, &p) in game.rho().iter().enumerate() {
        if !(p >= 0.0) {
            rho.push(Violation {
                location: Location {
                    field: Some("rho".into()),
                    state: Some(st),
                    ..Default::default()
                },
                message: format!("negative initial probability {p}"),
                magnitude: -p,
            });
        }
    }
    let sum: f64 = game.rho().iter().sum();
    if !((sum - 1.0).abs() <= STRUCTURAL_TOL) {
        rho.push(Violation {
            location: Location {
                field: Some("rho".into()),
                ..Default::default()
            },
            message: format!("initial distribution sums to {sum}, deficit {}", 1.0 - sum),
            magnitude: 1.0 - sum,
        });
    }
    report.push(CHECK_RHO, rho);

    // Common mode stores one table per j, so sharing holds by construction;
    // the check is kept so reports always list it.
    report.push(CHECK_COMMON, Vec::new());
    report
}

/// Programmatic construction of games from closures.
pub struct GameBuilder {
    horizon: usize,
    num_states: usize,
    sizes: Vec<usize>,
    rewards: Vec<StageArray>,
    constraints: Constraints,
    kernel: Vec<f64>,
    rho: Vec<f64>,
}

impl GameBuilder {
    /// Starts an unconstrained (common mode, `J = 0`) game with zero rewards,
    /// a self-loop kernel, and `rho` concentrated on state 0.
    pub fn new(horizon: usize, num_states: usize, action_sizes: Vec<usize>) -> Self {
        let a: usize = action_sizes.iter().product();
        let n = action_sizes.len();
        let mut rho = vec![0.0; num_states];
        if num_states > 0 {
            rho[0] = 1.0;
        }
        let mut builder = GameBuilder {
            horizon,
            num_states,
            sizes: action_sizes,
            rewards: vec![StageArray::zeros(horizon, num_states, a); n],
            constraints: Constraints::Common {
                signals: Vec::new(),
                thresholds: Vec::new(),
            },
            kernel: Vec::new(),
            rho,
        };
        builder = builder.kernel(|_, s, _, next| if s == next { 1.0 } else { 0.0 });
        builder
    }

    fn joint(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn reward(mut self, player: usize, f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        self.rewards[player] = StageArray::from_fn(self.horizon, self.num_states, self.joint(), f);
        self
    }

    /// Adds a shared constraint `g^j >= c^j` (switches to common mode).
    pub fn common_constraint(
        mut self,
        threshold: f64,
        f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let table = StageArray::from_fn(self.horizon, self.num_states, self.joint(), f);
        match &mut self.constraints {
            Constraints::Common {
                signals,
                thresholds,
            } => {
                signals.push(table);
                thresholds.push(threshold);
            }
            Constraints::Playerwise { .. } => {
                self.constraints = Constraints::Common {
                    signals: vec![table],
                    thresholds: vec![threshold],
                }
            }
        }
        self
    }

    /// Sets playerwise constraints: `signals[i][j]` and `thresholds[i][j]`.
    pub fn playerwise_constraints(
        mut self,
        thresholds: Vec<Vec<f64>>,
        mut f: impl FnMut(usize, usize, usize, usize, usize) -> f64,
    ) -> Self {
        let (h, s, a) = (self.horizon, self.num_states, self.joint());
        let signals = thresholds
            .iter()
            .enumerate()
            .map(|(i, cs)| {
                (0..cs.len())
                    .map(|j| StageArray::from_fn(h, s, a, |t, st, ja| f(i, j, t, st, ja)))
                    .collect()
            })
            .collect();
        self.constraints = Constraints::Playerwise {
            signals,
            thresholds,
        };
        self
    }

    pub fn kernel(mut self, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let (h, s, a) = (self.horizon, self.num_states, self.joint());
        let mut kernel = Vec::with_capacity(h.saturating_sub(1) * s * a * s);
        for t in 0..h.saturating_sub(1) {
            for st in 0..s {
                for ja in 0..a {
                    for next in 0..s {
                        kernel.push(f(t, st, ja, next));
                    }
                }
            }
        }
        self.kernel = kernel;
        self
    }

    pub fn rho(mut self, rho: Vec<f64>) -> Self {
        self.rho = rho;
        self
    }

    pub fn build(self) -> Result<ConstrainedMarkovGame> {
        let n = self.sizes.len();
        if n == 0 || self.horizon == 0 || self.num_states == 0 || self.sizes.contains(&0) {
            return Err(Error::Parse("empty player, horizon, state or action set".into()));
        }
        if self.rho.len() != self.num_states {
            return Err(Error::dim("rho", self.num_states, self.rho.len()));
        }
        let num_constraints = match &self.constraints {
            Constraints::Common { signals, .. } => signals.len(),
            Constraints::Playerwise {
                signals,
                thresholds,
            } => {
                if signals.len() != n {
                    return Err(Error::dim("playerwise constraint players", n, signals.len()));
                }
                let j = thresholds.first().map_or(0, Vec::len);
                if let Some(bad) = thresholds.iter().find(|cs| cs.len() != j) {
                    return Err(Error::dim("constraints per player", j, bad.len()));
                }
                j
            }
        };
        let game = ConstrainedMarkovGame {
            horizon: self.horizon,
            states: (0..self.num_states).map(|s| format!("s{}", s + 1)).collect(),
            actions: self
                .sizes
                .iter()
                .map(|&k| (1..=k).map(|a| a.to_string()).collect())
                .collect(),
            space: ActionSpace::new(self.sizes),
            rewards: self.rewards,
            constraints: self.constraints,
            num_constraints,
            kernel: self.kernel,
            rho: self.rho,
        };
        let report = game.validate();
        if report.valid {
            Ok(game)
        } else {
            Err(Error::InvalidGame(Box::new(report)))
        }
    }
}
