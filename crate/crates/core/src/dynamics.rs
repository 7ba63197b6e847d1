//! Occupancy measures, value evaluation, feasibility, and the map back from
//! occupancies to Markov policies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{ConstrainedMarkovGame, ConstraintMode, MarkovPolicy};
use crate::table::StageArray;

/// Tolerance on constraint slacks.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// State marginals at or below this are treated as unreachable.
pub const ZERO_MARGINAL: f64 = 1e-12;
/// Tolerance on occupancy mass and flow consistency.
pub const FLOW_TOL: f64 = 1e-9;

/// State-action occupancy `d_t(s, a)`, indexed `(t, s, joint action)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMeasure(StageArray);

impl OccupancyMeasure {
    pub fn from_table(table: StageArray) -> Self {
        OccupancyMeasure(table)
    }

    pub fn table(&self) -> &StageArray {
        &self.0
    }

    pub fn into_table(self) -> StageArray {
        self.0
    }

    #[inline]
    pub fn get(&self, t: usize, s: usize, a: usize) -> f64 {
        self.0.get(t, s, a)
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn max_abs_diff(&self, other: &OccupancyMeasure) -> f64 {
        self.0.max_abs_diff(&other.0)
    }

    /// `sum_a d_t(s, a)`.
    pub fn state_marginal(&self, t: usize, s: usize) -> f64 {
        self.0.row(t, s).iter().sum()
    }

    /// Checks nonnegativity, unit mass per step, and flow consistency.
    pub fn check(&self, game: &ConstrainedMarkovGame) -> Result<()> {
        let (h, ns, na) = self.0.shape();
        if (h, ns, na) != (game.horizon(), game.num_states(), game.num_joint_actions()) {
            return Err(Error::dim("occupancy", game.horizon() * ns * na, h * ns * na));
        }
        let bad = |detail: String| Error::InvalidDistribution {
            what: "occupancy",
            detail,
        };
        if let Some(v) = self.as_slice().iter().find(|v| !(**v >= -FLOW_TOL)) {
            return Err(bad(format!("negative entry {v}")));
        }
        for t in 0..h {
            let mass: f64 = self.0.stage(t).iter().sum();
            if (mass - 1.0).abs() > FLOW_TOL {
                return Err(bad(format!("mass {mass} at t={t}")));
            }
        }
        let inflow = state_inflow(game, self);
        for t in 0..h {
            for s in 0..ns {
                let expected = inflow[t * ns + s];
                let found = self.state_marginal(t, s);
                if (expected - found).abs() > FLOW_TOL {
                    return Err(bad(format!(
                        "flow mismatch at t={t}, s={s}: {found} vs {expected}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `lambda * self + (1 - lambda) * other`.
    pub fn blend(&self, other: &OccupancyMeasure, lambda: f64) -> OccupancyMeasure {
        let mut out = self.0.clone();
        for (x, y) in out.as_mut_slice().iter_mut().zip(other.as_slice()) {
            *x = lambda * *x + (1.0 - lambda) * y;
        }
        OccupancyMeasure(out)
    }
}

/// Expected state distribution at each step implied by `d`: `rho` at the
/// first step, the pushed-forward previous step afterwards. Flat `[t * S + s]`.
fn state_inflow(game: &ConstrainedMarkovGame, d: &OccupancyMeasure) -> Vec<f64> {
    let (h, ns, na) = (game.horizon(), game.num_states(), game.num_joint_actions());
    let mut out = vec![0.0; h * ns];
    out[..ns].copy_from_slice(game.rho());
    for t in 1..h {
        for s in 0..ns {
            for a in 0..na {
                let mass = d.get(t - 1, s, a);
                if mass == 0.0 {
                    continue;
                }
                for (next, p) in game.transition(t - 1, s, a).iter().enumerate() {
                    out[t * ns + next] += mass * p;
                }
            }
        }
    }
    out
}

/// Forward recursion `d_1 = rho pi_1`, `d_t(s, a) = sum d_{t-1} P_{t-1} pi_t`.
pub fn compute_occupancy(
    game: &ConstrainedMarkovGame,
    policy: &MarkovPolicy,
) -> Result<OccupancyMeasure> {
    policy.check_dims(game)?;
    Ok(occupancy_unchecked(game, policy.table()))
}

/// Recursion on any `(H, S, A)` table of row distributions.
pub(crate) fn occupancy_unchecked(game: &ConstrainedMarkovGame, pi: &StageArray) -> OccupancyMeasure {
    let (h, ns, na) = (game.horizon(), game.num_states(), game.num_joint_actions());
    let mut d = StageArray::zeros(h, ns, na);
    let mut marginal = game.rho().to_vec();
    for t in 0..h {
        for s in 0..ns {
            let m = marginal[s];
            if m == 0.0 {
                continue;
            }
            for a in 0..na {
                d.set(t, s, a, m * pi.get(t, s, a));
            }
        }
        if t + 1 < h {
            marginal.iter_mut().for_each(|v| *v = 0.0);
            for s in 0..ns {
                for a in 0..na {
                    let mass = d.get(t, s, a);
                    if mass == 0.0 {
                        continue;
                    }
                    for (next, p) in game.transition(t, s, a).iter().enumerate() {
                        marginal[next] += mass * p;
                    }
                }
            }
        }
    }
    OccupancyMeasure(d)
}

/// `sum_t sum_{s,a} d_t(s, a) signal_t(s, a)`.
pub fn signal_value(signal: &StageArray, d: &OccupancyMeasure) -> f64 {
    signal
        .as_slice()
        .iter()
        .zip(d.as_slice())
        .map(|(g, x)| g * x)
        .sum()
}

/// Reward and constraint values of every player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueVector {
    /// `V^{r^i}`.
    pub rewards: Vec<f64>,
    /// `V^{g^{i,j}}`, indexed `[i][j]` (rows repeat in common mode).
    pub constraints: Vec<Vec<f64>>,
}

pub fn evaluate(game: &ConstrainedMarkovGame, d: &OccupancyMeasure) -> Result<ValueVector> {
    if d.table().shape() != (game.horizon(), game.num_states(), game.num_joint_actions()) {
        return Err(Error::dim(
            "occupancy",
            game.horizon() * game.num_states() * game.num_joint_actions(),
            d.as_slice().len(),
        ));
    }
    let n = game.num_players();
    let rewards = (0..n).map(|i| signal_value(game.reward(i), d)).collect();
    let constraints = match game.mode() {
        ConstraintMode::Playerwise => (0..n)
            .map(|i| {
                (0..game.num_constraints())
                    .map(|j| signal_value(game.constraint(i, j), d))
                    .collect()
            })
            .collect(),
        ConstraintMode::Common => {
            let shared: Vec<f64> = (0..game.num_constraints())
                .map(|j| signal_value(game.constraint(0, j), d))
                .collect();
            vec![shared; n]
        }
    };
    Ok(ValueVector {
        rewards,
        constraints,
    })
}

/// Slacks `V^{g^{i,j}} - c^{i,j}` for one player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerSlacks {
    pub player: usize,
    pub slacks: Vec<f64>,
    pub feasible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub players: Vec<PlayerSlacks>,
    pub feasible: bool,
    pub tol: f64,
}

impl FeasibilityReport {
    /// Smallest slack over all reported players; `+inf` when there are none.
    pub fn min_slack(&self) -> f64 {
        self.players
            .iter()
            .flat_map(|p| p.slacks.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Slacks of player `i`'s constraints at occupancy `d`.
pub fn player_slacks(game: &ConstrainedMarkovGame, d: &OccupancyMeasure, player: usize) -> Vec<f64> {
    (0..game.num_constraints())
        .map(|j| signal_value(game.constraint(player, j), d) - game.threshold(player, j))
        .collect()
}

pub fn feasibility_of_occupancy(
    game: &ConstrainedMarkovGame,
    d: &OccupancyMeasure,
    player: Option<usize>,
) -> Result<FeasibilityReport> {
    let players: Vec<usize> = match player {
        Some(i) => {
            game.check_player(i)?;
            vec![i]
        }
        None => (0..game.num_players()).collect(),
    };
    let players: Vec<PlayerSlacks> = players
        .into_iter()
        .map(|i| {
            let slacks = player_slacks(game, d, i);
            let feasible = slacks.iter().all(|&s| s >= -FEASIBILITY_TOL);
            PlayerSlacks {
                player: i,
                slacks,
                feasible,
            }
        })
        .collect();
    Ok(FeasibilityReport {
        feasible: players.iter().all(|p| p.feasible),
        players,
        tol: FEASIBILITY_TOL,
    })
}

/// Constraint slacks of `policy`; `player = None` reports every player.
pub fn feasibility(
    game: &ConstrainedMarkovGame,
    policy: &MarkovPolicy,
    player: Option<usize>,
) -> Result<FeasibilityReport> {
    let d = compute_occupancy(game, policy)?;
    feasibility_of_occupancy(game, &d, player)
}

/// Conditional `d_t(s, .) / sum_a d_t(s, a)`, uniform where the state is
/// unreachable.
pub fn occupancy_to_policy(game: &ConstrainedMarkovGame, d: &OccupancyMeasure) -> MarkovPolicy {
    let (h, ns, na) = (game.horizon(), game.num_states(), game.num_joint_actions());
    let mut pi = StageArray::zeros(h, ns, na);
    for t in 0..h {
        for s in 0..ns {
            let row = d.table().row(t, s);
            let mass: f64 = row.iter().sum();
            let out = pi.row_mut(t, s);
            if mass > ZERO_MARGINAL {
                for (o, v) in out.iter_mut().zip(row) {
                    *o = v.max(0.0) / mass;
                }
            } else {
                out.iter_mut().for_each(|o| *o = 1.0 / na as f64);
            }
        }
    }
    MarkovPolicy::new_unchecked(pi)
}
