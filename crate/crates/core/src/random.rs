//! Seeded generators for games, policies and modifications.
//!
//! All randomness flows through [`ChaCha8Rng`] seeded from a single `u64`,
//! so draws are reproducible across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{compute_occupancy, signal_value};
use crate::error::Result;
use crate::game::{ConstrainedMarkovGame, ConstraintMode, GameBuilder, MarkovPolicy};
use crate::modifications::{MarkovModification, NonMarkovModification};
use crate::table::StageArray;

pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dirichlet(1, ..., 1): normalized standard exponentials.
pub fn dirichlet(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            -(1.0 - u).ln()
        })
        .collect();
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    } else {
        v.iter_mut().for_each(|x| *x = 1.0 / n as f64);
    }
    v
}

/// Shape and constraint structure of a random game.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomGameSpec {
    pub horizon: usize,
    pub num_states: usize,
    pub action_sizes: Vec<usize>,
    pub num_constraints: usize,
    pub mode: ConstraintMode,
    /// Thresholds are `looseness * V^g(pi_0)` for a random reference policy
    /// `pi_0`, which is therefore feasible whenever `looseness <= 1`.
    pub looseness: f64,
}

impl RandomGameSpec {
    pub fn unconstrained(horizon: usize, num_states: usize, action_sizes: Vec<usize>) -> Self {
        RandomGameSpec {
            horizon,
            num_states,
            action_sizes,
            num_constraints: 0,
            mode: ConstraintMode::Common,
            looseness: 1.0,
        }
    }
}

/// Rewards and constraint signals uniform on `[0, 1]`, Dirichlet kernel rows
/// and initial distribution.
pub fn random_game(rng: &mut impl Rng, spec: &RandomGameSpec) -> Result<ConstrainedMarkovGame> {
    let (h, ns) = (spec.horizon, spec.num_states);
    let na: usize = spec.action_sizes.iter().product();
    let n = spec.action_sizes.len();
    let rewards: Vec<StageArray> = (0..n).map(|_| uniform_table(rng, h, ns, na)).collect();
    let kernel: Vec<Vec<f64>> = (0..h.saturating_sub(1) * ns * na)
        .map(|_| dirichlet(rng, ns))
        .collect();
    let rho = dirichlet(rng, ns);
    let copies = match spec.mode {
        ConstraintMode::Common => 1,
        ConstraintMode::Playerwise => n,
    };
    let j = spec.num_constraints;
    let signals: Vec<StageArray> = (0..copies * j).map(|_| uniform_table(rng, h, ns, na)).collect();

    let base = || {
        let mut b = GameBuilder::new(h, ns, spec.action_sizes.clone());
        for (i, r) in rewards.iter().enumerate() {
            b = b.reward(i, |t, s, a| r.get(t, s, a));
        }
        b.kernel(|t, s, a, next| kernel[(t * ns + s) * na + a][next])
            .rho(rho.clone())
    };
    let reference = random_policy(rng, &base().build()?);
    let d0 = compute_occupancy(&base().build()?, &reference)?;
    let thresholds: Vec<f64> = signals
        .iter()
        .map(|sig| spec.looseness * signal_value(sig, &d0))
        .collect();

    let mut builder = base();
    match spec.mode {
        ConstraintMode::Common => {
            for (sig, &c) in signals.iter().zip(&thresholds) {
                builder = builder.common_constraint(c, |t, s, a| sig.get(t, s, a));
            }
        }
        ConstraintMode::Playerwise => {
            let per_player = (0..n).map(|i| thresholds[i * j..(i + 1) * j].to_vec()).collect();
            builder = builder.playerwise_constraints(per_player, |i, k, t, s, a| {
                signals[i * j + k].get(t, s, a)
            });
        }
    }
    builder.build()
}

fn uniform_table(rng: &mut impl Rng, h: usize, ns: usize, na: usize) -> StageArray {
    let data = (0..h * ns * na).map(|_| rng.random::<f64>()).collect();
    StageArray::from_vec(h, ns, na, data).expect("sized")
}

/// A policy with independent Dirichlet(1) rows.
pub fn random_policy(rng: &mut impl Rng, game: &ConstrainedMarkovGame) -> MarkovPolicy {
    let (h, ns, na) = (game.horizon(), game.num_states(), game.num_joint_actions());
    let mut table = StageArray::zeros(h, ns, na);
    for t in 0..h {
        for s in 0..ns {
            table.row_mut(t, s).copy_from_slice(&dirichlet(rng, na));
        }
    }
    MarkovPolicy::new(table).expect("dirichlet rows are distributions")
}

/// A stochastic Markov modification with Dirichlet(1) rows.
pub fn random_markov_modification(
    rng: &mut impl Rng,
    game: &ConstrainedMarkovGame,
    player: usize,
) -> Result<MarkovModification> {
    game.check_player(player)?;
    let ai = game.num_actions(player);
    let rows: Vec<Vec<f64>> = (0..game.horizon() * game.num_states() * ai)
        .map(|_| dirichlet(rng, ai))
        .collect();
    let ns = game.num_states();
    MarkovModification::from_fn(game, player, |t, s, own, b| rows[(t * ns + s) * ai + own][b])
}

/// A history-dependent modification with Dirichlet(1) rows per history.
pub fn random_nonmarkov_modification(
    rng: &mut impl Rng,
    game: &ConstrainedMarkovGame,
    player: usize,
    cap: u128,
) -> Result<NonMarkovModification> {
    game.check_player(player)?;
    let ai = game.num_actions(player);
    NonMarkovModification::from_fn(game, player, cap, |_, _, _| dirichlet(rng, ai))
}
