//! Single-player MDPs that absorb the other players' recommended actions.
//!
//! Both constructions belong to a fixed player `i` and joint policy `pi`.
//! A state carries the current game state and the action `a^i` recommended
//! to player `i`; the MDP action is the replacement `b` that is executed.
//! The history MDP additionally records all past states and executed joint
//! actions, so history-dependent modifications are ordinary policies there;
//! the pair MDP keeps only `(s, a^i)`. Recommended actions are drawn
//! uniformly, and recommendations that `pi` never makes lead to an absorbing
//! state `b`; this is why game occupancies are recovered with a factor
//! `|A^i|^t`.

use serde::{Deserialize, Serialize};

use crate::dynamics::OccupancyMeasure;
use crate::error::{Error, Result};
use crate::game::{ConstrainedMarkovGame, MarkovPolicy};
use crate::modifications::{
    history_counts, DetModifications, MarkovModification, NonMarkovModification,
};
use crate::table::StageArray;

/// Row-sum tolerance for auxiliary kernels.
pub const KERNEL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxKind {
    /// States `(s_{1:t-1}, a_{1:t-1}, s_t, a^i_t)`.
    History,
    /// States `(s_t, a^i_t)`.
    Pair,
}

/// Finite-horizon auxiliary MDP with one absorbing state per step.
///
/// At step `t` the non-absorbing states are `0..num_states(t)`; index
/// `num_states(t)` is `b`. History states use the key `p * |A^i| + a^i`
/// (see [`crate::modifications::History`]); pair states use `s * |A^i| + a^i`.
#[derive(Clone, Debug)]
pub struct AuxiliaryMdp {
    kind: AuxKind,
    player: usize,
    num_actions: usize,
    num_game_states: usize,
    counts: Vec<usize>,
    /// `kernel[t][x * |A^i| + b]`: sparse distribution over step-`t+1` states.
    kernel: Vec<Vec<Vec<(usize, f64)>>>,
    rho: Vec<f64>,
}

impl AuxiliaryMdp {
    pub fn kind(&self) -> AuxKind {
        self.kind
    }

    pub fn player(&self) -> usize {
        self.player
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.counts.len()
    }

    /// Non-absorbing states at step `t`.
    pub fn num_states(&self, t: usize) -> usize {
        self.counts[t]
    }

    /// Index of `b` at step `t`.
    pub fn absorbing(&self, t: usize) -> usize {
        self.counts[t]
    }

    /// Game cell `s * |A^i| + a^i` of auxiliary state `x` at step `t`.
    #[inline]
    pub fn cell(&self, _t: usize, x: usize) -> usize {
        match self.kind {
            AuxKind::Pair => x,
            AuxKind::History => {
                let ai = self.num_actions;
                let p = x / ai;
                (p % self.num_game_states) * ai + x % ai
            }
        }
    }

    /// Initial distribution over step-0 states (`b` has mass 0).
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// Sparse next-state distribution of `(x, b)` at step `t < H - 1`;
    /// `x` may be the absorbing index.
    pub fn transition(&self, t: usize, x: usize, action: usize) -> &[(usize, f64)] {
        &self.kernel[t][x * self.num_actions + action]
    }

    /// Largest `|1 - row sum|` over all kernel rows, including `b`.
    pub fn max_row_error(&self) -> f64 {
        self.kernel
            .iter()
            .flatten()
            .map(|row| (1.0 - row.iter().map(|(_, p)| p).sum::<f64>()).abs())
            .fold(0.0, f64::max)
    }
}

fn check_policy(game: &ConstrainedMarkovGame, player: usize, policy: &MarkovPolicy) -> Result<()> {
    game.check_player(player)?;
    policy.check_dims(game)
}

/// Total recommendation mass `sum_{a^{-i}} pi_t((a^i, a^{-i}) | s)`.
fn own_mass(game: &ConstrainedMarkovGame, player: usize, policy: &MarkovPolicy, t: usize, s: usize, own: usize) -> f64 {
    let space = game.action_space();
    space
        .others(player)
        .map(|o| policy.prob(t, s, space.with_component(o, player, own)))
        .sum()
}

/// The history MDP of `player` under `policy`; fails when the number of
/// history states exceeds `cap`.
pub fn build_mdp1(
    game: &ConstrainedMarkovGame,
    player: usize,
    policy: &MarkovPolicy,
    cap: u128,
) -> Result<AuxiliaryMdp> {
    check_policy(game, player, policy)?;
    let space = game.action_space();
    let ai = game.num_actions(player);
    let (ns, na) = (game.num_states(), game.num_joint_actions());
    let histories = history_counts(game, player, cap)?;
    let counts: Vec<usize> = histories.iter().map(|c| c * ai).collect();
    let h = game.horizon();
    let mut kernel = Vec::with_capacity(h.saturating_sub(1));
    for t in 0..h.saturating_sub(1) {
        let b_next = counts[t + 1];
        let mut rows = Vec::with_capacity((counts[t] + 1) * ai);
        for x in 0..counts[t] {
            let (p, own) = (x / ai, x % ai);
            let s = p % ns;
            let absorb = 1.0 - own_mass(game, player, policy, t, s, own);
            for b in 0..ai {
                let mut row = Vec::new();
                for o in space.others(player) {
                    let pr = policy.prob(t, s, space.with_component(o, player, own));
                    if pr == 0.0 {
                        continue;
                    }
                    let executed = space.with_component(o, player, b);
                    for (s2, &pt) in game.transition(t, s, executed).iter().enumerate() {
                        if pt == 0.0 {
                            continue;
                        }
                        let base = ((p * na + executed) * ns + s2) * ai;
                        let q = pt * pr / ai as f64;
                        row.extend((0..ai).map(|own2| (base + own2, q)));
                    }
                }
                row.push((b_next, absorb));
                rows.push(row);
            }
        }
        rows.extend((0..ai).map(|_| vec![(b_next, 1.0)]));
        kernel.push(rows);
    }
    let rho = (0..counts[0])
        .map(|x| game.rho()[(x / ai) % ns] / ai as f64)
        .collect();
    Ok(AuxiliaryMdp {
        kind: AuxKind::History,
        player,
        num_actions: ai,
        num_game_states: ns,
        counts,
        kernel,
        rho,
    })
}

/// The pair MDP of `player` under `policy`.
pub fn build_mdp2(
    game: &ConstrainedMarkovGame,
    player: usize,
    policy: &MarkovPolicy,
) -> Result<AuxiliaryMdp> {
    check_policy(game, player, policy)?;
    let space = game.action_space();
    let ai = game.num_actions(player);
    let ns = game.num_states();
    let n = ns * ai;
    let h = game.horizon();
    let mut kernel = Vec::with_capacity(h.saturating_sub(1));
    for t in 0..h.saturating_sub(1) {
        let mut rows = Vec::with_capacity((n + 1) * ai);
        for x in 0..n {
            let (s, own) = (x / ai, x % ai);
            let absorb = 1.0 - own_mass(game, player, policy, t, s, own);
            for b in 0..ai {
                let mut next = vec![0.0; ns];
                for o in space.others(player) {
                    let pr = policy.prob(t, s, space.with_component(o, player, own));
                    if pr == 0.0 {
                        continue;
                    }
                    let executed = space.with_component(o, player, b);
                    for (s2, &pt) in game.transition(t, s, executed).iter().enumerate() {
                        next[s2] += pt * pr;
                    }
                }
                let mut row = Vec::with_capacity(n + 1);
                for (s2, &q) in next.iter().enumerate() {
                    if q != 0.0 {
                        row.extend((0..ai).map(|own2| (s2 * ai + own2, q / ai as f64)));
                    }
                }
                row.push((n, absorb));
                rows.push(row);
            }
        }
        rows.extend((0..ai).map(|_| vec![(n, 1.0)]));
        kernel.push(rows);
    }
    let rho = (0..n).map(|x| game.rho()[x / ai] / ai as f64).collect();
    Ok(AuxiliaryMdp {
        kind: AuxKind::Pair,
        player,
        num_actions: ai,
        num_game_states: ns,
        counts: vec![n; h],
        kernel,
        rho,
    })
}

/// A modification acting as a policy of an auxiliary MDP.
#[derive(Clone, Copy, Debug)]
pub enum AuxPolicy<'a> {
    Markov(&'a MarkovModification),
    /// Only valid on the history MDP.
    NonMarkov(&'a NonMarkovModification),
}

impl AuxPolicy<'_> {
    fn player(&self) -> usize {
        match self {
            AuxPolicy::Markov(m) => m.player(),
            AuxPolicy::NonMarkov(m) => m.player(),
        }
    }

    fn row<'b>(&'b self, mdp: &AuxiliaryMdp, t: usize, x: usize) -> &'b [f64] {
        match self {
            AuxPolicy::Markov(m) => m.table().row(t, mdp.cell(t, x)),
            AuxPolicy::NonMarkov(m) => m.key_row(t, x),
        }
    }
}

/// Occupancy of an auxiliary MDP: `values[t][x * |A^i| + b]` plus the mass
/// sitting in `b` at each step.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxOccupancy {
    num_actions: usize,
    values: Vec<Vec<f64>>,
    absorbed: Vec<f64>,
}

impl AuxOccupancy {
    #[inline]
    pub fn get(&self, t: usize, x: usize, action: usize) -> f64 {
        self.values[t][x * self.num_actions + action]
    }

    pub fn stage(&self, t: usize) -> &[f64] {
        &self.values[t]
    }

    pub fn absorbed(&self, t: usize) -> f64 {
        self.absorbed[t]
    }

    /// Mass over all states including `b`.
    pub fn total_mass(&self, t: usize) -> f64 {
        self.values[t].iter().sum::<f64>() + self.absorbed[t]
    }

    /// `sum_k w_k occ_k`.
    pub fn combine(parts: &[(f64, &AuxOccupancy)]) -> Option<AuxOccupancy> {
        let (_, first) = parts.first()?;
        let mut out = AuxOccupancy {
            num_actions: first.num_actions,
            values: first.values.iter().map(|v| vec![0.0; v.len()]).collect(),
            absorbed: vec![0.0; first.absorbed.len()],
        };
        for (w, occ) in parts {
            for (acc, v) in out.values.iter_mut().zip(&occ.values) {
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += w * x;
                }
            }
            for (a, x) in out.absorbed.iter_mut().zip(&occ.absorbed) {
                *a += w * x;
            }
        }
        Some(out)
    }
}

/// Forward propagation of a modification through an auxiliary MDP.
pub fn aux_occupancy(mdp: &AuxiliaryMdp, policy: AuxPolicy<'_>) -> Result<AuxOccupancy> {
    if policy.player() != mdp.player {
        return Err(Error::Unsupported(format!(
            "modification of player {} on the MDP of player {}",
            policy.player(),
            mdp.player
        )));
    }
    let ai = mdp.num_actions;
    let h = mdp.horizon();
    match policy {
        AuxPolicy::Markov(m) => {
            if m.table().horizon() != h || m.table().rows() != mdp.num_game_states * ai {
                return Err(Error::dim(
                    "modification rows",
                    mdp.num_game_states * ai,
                    m.table().rows(),
                ));
            }
        }
        AuxPolicy::NonMarkov(m) => {
            if mdp.kind != AuxKind::History {
                return Err(Error::Unsupported(
                    "history-dependent modification on the pair MDP".into(),
                ));
            }
            if (0..h).any(|t| m.num_keys(t) != mdp.counts[t]) {
                return Err(Error::dim("history keys", mdp.counts[0], m.num_keys(0)));
            }
        }
    }
    let mut values = Vec::with_capacity(h);
    let mut absorbed = vec![0.0; h];
    let mut mass = mdp.rho.clone();
    for t in 0..h {
        let mut stage = vec![0.0; mdp.counts[t] * ai];
        for (x, &m) in mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (b, &q) in policy.row(mdp, t, x).iter().enumerate() {
                stage[x * ai + b] = m * q;
            }
        }
        if t + 1 < h {
            let mut next = vec![0.0; mdp.counts[t + 1] + 1];
            for (idx, &w) in stage.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for &(y, p) in &mdp.kernel[t][idx] {
                    next[y] += w * p;
                }
            }
            let b_mass = next.pop().expect("absorbing slot");
            absorbed[t + 1] = absorbed[t] + b_mass;
            mass = next;
        }
        values.push(stage);
    }
    Ok(AuxOccupancy {
        num_actions: ai,
        values,
        absorbed,
    })
}

/// Game occupancy of the modified policy recovered from an auxiliary
/// occupancy: `d_t(s, (b, a^{-i})) = |A^i|^t sum_{a^i} sum_hist occ_t(x, b) pi_t((a^i, a^{-i}) | s)`
/// with `t` counted from 1.
pub fn game_occupancy(
    game: &ConstrainedMarkovGame,
    policy: &MarkovPolicy,
    mdp: &AuxiliaryMdp,
    occ: &AuxOccupancy,
) -> Result<OccupancyMeasure> {
    check_policy(game, mdp.player, policy)?;
    let space = game.action_space();
    let i = mdp.player;
    let ai = mdp.num_actions;
    let mut d = StageArray::zeros(game.horizon(), game.num_states(), game.num_joint_actions());
    let mut scale = 1.0;
    for t in 0..game.horizon() {
        scale *= ai as f64;
        let mut cells = vec![0.0; game.num_states() * ai * ai];
        for x in 0..mdp.counts[t] {
            let cell = mdp.cell(t, x);
            for b in 0..ai {
                cells[cell * ai + b] += occ.get(t, x, b);
            }
        }
        for (idx, &w) in cells.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let (cell, b) = (idx / ai, idx % ai);
            let (s, own) = (cell / ai, cell % ai);
            for o in space.others(i) {
                let pr = policy.prob(t, s, space.with_component(o, i, own));
                if pr != 0.0 {
                    d.add(t, s, space.with_component(o, i, b), scale * w * pr);
                }
            }
        }
    }
    Ok(OccupancyMeasure::from_table(d))
}

/// Per-step signal `r` lifted to the pair MDP:
/// `r_bar_t((s, a^i), b) = |A^i|^t sum_{a^{-i}} r_t(s, (b, a^{-i})) pi_t((a^i, a^{-i}) | s)`,
/// zero at `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedReward {
    player: usize,
    num_actions: usize,
    table: StageArray,
}

impl LiftedReward {
    pub fn table(&self) -> &StageArray {
        &self.table
    }

    #[inline]
    pub fn get(&self, t: usize, cell: usize, action: usize) -> f64 {
        self.table.get(t, cell, action)
    }
}

pub fn lift_reward(
    game: &ConstrainedMarkovGame,
    player: usize,
    policy: &MarkovPolicy,
    signal: &StageArray,
) -> Result<LiftedReward> {
    check_policy(game, player, policy)?;
    if signal.shape() != (game.horizon(), game.num_states(), game.num_joint_actions()) {
        return Err(Error::dim(
            "signal",
            game.horizon() * game.num_states() * game.num_joint_actions(),
            signal.as_slice().len(),
        ));
    }
    let space = game.action_space();
    let ai = game.num_actions(player);
    let mut scale = 1.0;
    let mut table = StageArray::zeros(game.horizon(), game.num_states() * ai, ai);
    for t in 0..game.horizon() {
        scale *= ai as f64;
        for s in 0..game.num_states() {
            for own in 0..ai {
                for b in 0..ai {
                    let v: f64 = space
                        .others(player)
                        .map(|o| {
                            signal.get(t, s, space.with_component(o, player, b))
                                * policy.prob(t, s, space.with_component(o, player, own))
                        })
                        .sum();
                    table.set(t, s * ai + own, b, scale * v);
                }
            }
        }
    }
    Ok(LiftedReward {
        player,
        num_actions: ai,
        table,
    })
}

/// Expected cumulative lifted reward of an auxiliary occupancy.
pub fn aux_value(mdp: &AuxiliaryMdp, occ: &AuxOccupancy, lifted: &LiftedReward) -> f64 {
    let ai = mdp.num_actions;
    let mut total = 0.0;
    for t in 0..mdp.horizon() {
        for x in 0..mdp.counts[t] {
            let cell = mdp.cell(t, x);
            for b in 0..ai {
                let w = occ.get(t, x, b);
                if w != 0.0 {
                    total += w * lifted.get(t, cell, b);
                }
            }
        }
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Max,
    Min,
}

#[derive(Clone, Debug)]
pub struct AuxOptimum {
    pub value: f64,
    pub modification: MarkovModification,
}

/// Backward induction on the pair MDP. Near-ties (relative `1e-12`) go to
/// the smallest action index.
pub fn optimize_aux(
    mdp: &AuxiliaryMdp,
    lifted: &LiftedReward,
    direction: Direction,
) -> Result<AuxOptimum> {
    if mdp.kind != AuxKind::Pair {
        return Err(Error::Unsupported(
            "backward induction runs on the pair MDP".into(),
        ));
    }
    if lifted.player != mdp.player || lifted.num_actions != mdp.num_actions {
        return Err(Error::Unsupported("lifted signal belongs to another player".into()));
    }
    let ai = mdp.num_actions;
    let h = mdp.horizon();
    let n = mdp.counts[0];
    let sign = match direction {
        Direction::Max => 1.0,
        Direction::Min => -1.0,
    };
    let mut targets = vec![0usize; h * n];
    // value of each step-(t+1) state, with b (value 0) at index n
    let mut next_value = vec![0.0; n + 1];
    for t in (0..h).rev() {
        let mut value = vec![0.0; n + 1];
        for x in 0..n {
            let q: Vec<f64> = (0..ai)
                .map(|b| {
                    let future: f64 = if t + 1 < h {
                        mdp.transition(t, x, b)
                            .iter()
                            .map(|&(y, p)| p * next_value[y])
                            .sum()
                    } else {
                        0.0
                    };
                    sign * (lifted.get(t, x, b) + future)
                })
                .collect();
            let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let slack = 1e-12 * (1.0 + best.abs());
            let pick = q.iter().position(|&v| v >= best - slack).unwrap_or(0);
            targets[t * n + x] = pick;
            value[x] = sign * q[pick];
        }
        next_value = value;
    }
    let value = mdp
        .rho
        .iter()
        .zip(&next_value)
        .map(|(r, v)| r * v)
        .sum();
    let mut table = StageArray::zeros(h, n, ai);
    for t in 0..h {
        for x in 0..n {
            table.set(t, x, targets[t * n + x], 1.0);
        }
    }
    Ok(AuxOptimum {
        value,
        modification: MarkovModification::from_table_unchecked(mdp.player, ai, table),
    })
}

/// A stochastic Markov modification whose modified occupancy equals
/// `sum_k alpha_k d^{phi(k) o pi}`: the pair-MDP occupancies are mixed and
/// normalized per cell (uniform where the mixture puts no mass).
pub fn modification_from_mixture(
    game: &ConstrainedMarkovGame,
    policy: &MarkovPolicy,
    dets: &DetModifications,
    alpha: &[f64],
) -> Result<MarkovModification> {
    if alpha.len() != dets.len() {
        return Err(Error::dim("mixture weights", dets.len(), alpha.len()));
    }
    let player = dets.player();
    let mdp = build_mdp2(game, player, policy)?;
    let ai = mdp.num_actions;
    let n = mdp.counts[0];
    let mut mix = StageArray::zeros(game.horizon(), n, ai);
    for (k, &w) in alpha.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let det = dets.get(game, k);
        let occ = aux_occupancy(&mdp, AuxPolicy::Markov(&det))?;
        for t in 0..game.horizon() {
            for (acc, v) in mix.stage_mut(t).iter_mut().zip(occ.stage(t)) {
                *acc += w * v;
            }
        }
    }
    for t in 0..game.horizon() {
        for x in 0..n {
            let row = mix.row_mut(t, x);
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter_mut().for_each(|v| *v /= total);
            } else {
                row.iter_mut().for_each(|v| *v = 1.0 / ai as f64);
            }
        }
    }
    Ok(MarkovModification::from_table_unchecked(player, ai, mix))
}
