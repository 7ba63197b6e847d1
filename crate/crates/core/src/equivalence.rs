//! Cross-checks between the policy-space, occupancy-space and
//! auxiliary-MDP views of modifications, run on one game.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::aux_mdps::{
    aux_occupancy, build_mdp1, build_mdp2, game_occupancy, lift_reward, modification_from_mixture,
    optimize_aux, AuxPolicy, Direction,
};
use crate::dynamics::{compute_occupancy, signal_value, OccupancyMeasure};
use crate::error::Result;
use crate::game::{ConstrainedMarkovGame, MarkovPolicy};
use crate::lp::{hull_membership, mix_occupancies, HULL_TOL};
use crate::modifications::{
    apply_modification, apply_nonmarkov, enumerate_det_modifications, markovianize,
    DEFAULT_ENUMERATION_CAP, DEFAULT_HISTORY_CAP,
};
use crate::random::{
    dirichlet, random_markov_modification, random_nonmarkov_modification, random_policy,
    rng_from_seed,
};

pub const EQUIVALENCE_TOL: f64 = 1e-9;

pub const CHECK_KERNELS: &str = "auxiliary_kernels_stochastic";
pub const CHECK_MARKOVIANIZE: &str = "markovianization_preserves_occupancy";
pub const CHECK_RECOVERY: &str = "auxiliary_occupancy_recovery";
pub const CHECK_DETERMINISTIC_OPTIMUM: &str = "deterministic_optimum";
pub const CHECK_HULL: &str = "hull_membership";
pub const CHECK_RECONSTRUCTION: &str = "mixture_reconstruction";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceOptions {
    /// `None` checks every player.
    pub player: Option<usize>,
    /// Random modifications drawn per sampled check.
    pub samples: usize,
    pub seed: u64,
    pub history_cap: u128,
    pub enumeration_cap: u128,
}

impl Default for EquivalenceOptions {
    fn default() -> Self {
        EquivalenceOptions {
            player: None,
            samples: 10,
            seed: 0,
            history_cap: DEFAULT_HISTORY_CAP,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceCheck {
    pub name: String,
    pub player: usize,
    pub passed: bool,
    /// Largest discrepancy seen.
    pub max_error: f64,
    pub tol: f64,
    pub cases: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub seed: u64,
    pub samples: usize,
    /// `policy[t][s][a]` the checks ran at.
    pub policy: Vec<Vec<Vec<f64>>>,
    pub checks: Vec<EquivalenceCheck>,
    pub passed: bool,
}

impl EquivalenceReport {
    pub fn check(&self, name: &str, player: usize) -> Option<&EquivalenceCheck> {
        self.checks.iter().find(|c| c.name == name && c.player == player)
    }
}

struct Tally {
    name: &'static str,
    player: usize,
    tol: f64,
    max_error: f64,
    cases: usize,
}

impl Tally {
    fn new(name: &'static str, player: usize, tol: f64) -> Self {
        Tally {
            name,
            player,
            tol,
            max_error: 0.0,
            cases: 0,
        }
    }

    fn record(&mut self, error: f64) {
        self.cases += 1;
        if error.is_nan() || error > self.max_error {
            self.max_error = error;
        }
    }

    fn finish(self) -> EquivalenceCheck {
        EquivalenceCheck {
            name: self.name.to_string(),
            player: self.player,
            passed: self.max_error <= self.tol,
            max_error: self.max_error,
            tol: self.tol,
            cases: self.cases,
        }
    }
}

/// Runs every check at `policy` (a seeded random policy when `None`).
pub fn run_equivalence_suite(
    game: &ConstrainedMarkovGame,
    policy: Option<&MarkovPolicy>,
    options: &EquivalenceOptions,
) -> Result<EquivalenceReport> {
    let mut rng = rng_from_seed(options.seed);
    let policy = match policy {
        Some(p) => {
            p.check_dims(game)?;
            p.clone()
        }
        None => random_policy(&mut rng, game),
    };
    let players: Vec<usize> = match options.player {
        Some(i) => {
            game.check_player(i)?;
            vec![i]
        }
        None => (0..game.num_players()).collect(),
    };
    let tol = EQUIVALENCE_TOL;
    let mut checks = Vec::new();
    for &i in &players {
        let mdp1 = build_mdp1(game, i, &policy, options.history_cap)?;
        let mdp2 = build_mdp2(game, i, &policy)?;
        let mut kernels = Tally::new(CHECK_KERNELS, i, tol);
        kernels.record(mdp1.max_row_error());
        kernels.record(mdp2.max_row_error());

        let mut markov = Tally::new(CHECK_MARKOVIANIZE, i, tol);
        let mut recovery = Tally::new(CHECK_RECOVERY, i, tol);
        for _ in 0..options.samples {
            let phi = random_nonmarkov_modification(&mut rng, game, i, options.history_cap)?;
            let direct = apply_nonmarkov(game, &policy, &phi)?;
            let flat = markovianize(game, &policy, &phi, options.history_cap)?;
            let via_markov = compute_occupancy(game, &apply_modification(game, &policy, &flat)?)?;
            markov.record(direct.max_abs_diff(&via_markov));

            let occ = aux_occupancy(&mdp1, AuxPolicy::NonMarkov(&phi))?;
            recovery.record(direct.max_abs_diff(&game_occupancy(game, &policy, &mdp1, &occ)?));
        }

        let dets = enumerate_det_modifications(game, i, options.enumeration_cap)?;
        let vertices: Vec<OccupancyMeasure> = dets
            .iter(game)
            .map(|phi| compute_occupancy(game, &apply_modification(game, &policy, &phi)?))
            .collect::<Result<_>>()?;

        let mut optimum = Tally::new(CHECK_DETERMINISTIC_OPTIMUM, i, tol);
        let mut signals = vec![game.reward(i)];
        signals.extend((0..game.num_constraints()).map(|j| game.constraint(i, j)));
        for signal in signals {
            let lifted = lift_reward(game, i, &policy, signal)?;
            let values: Vec<f64> = vertices.iter().map(|d| signal_value(signal, d)).collect();
            for direction in [Direction::Max, Direction::Min] {
                let best = optimize_aux(&mdp2, &lifted, direction)?;
                let exhaustive = match direction {
                    Direction::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    Direction::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
                };
                optimum.record((best.value - exhaustive).abs());
            }
        }

        let mut hull = Tally::new(CHECK_HULL, i, HULL_TOL);
        let mut rebuilt = Tally::new(CHECK_RECONSTRUCTION, i, tol);
        for _ in 0..options.samples {
            let phi = random_markov_modification(&mut rng, game, i)?;
            let point = compute_occupancy(game, &apply_modification(game, &policy, &phi)?)?;
            let member = hull_membership(&point, &vertices)?;
            hull.record(if member.member { member.residual } else { f64::INFINITY });

            // a random mixture on a few deterministic modifications
            let support = index::sample(&mut rng, dets.len(), dets.len().min(4)).into_vec();
            let weights = dirichlet(&mut rng, support.len());
            let mut alpha = vec![0.0; dets.len()];
            for (k, w) in support.iter().zip(&weights) {
                alpha[*k] = *w;
            }
            let target = mix_occupancies(&alpha, &vertices)?;
            let phi = modification_from_mixture(game, &policy, &dets, &alpha)?;
            let got = compute_occupancy(game, &apply_modification(game, &policy, &phi)?)?;
            rebuilt.record(target.max_abs_diff(&got));
        }

        checks.extend([
            kernels.finish(),
            markov.finish(),
            recovery.finish(),
            optimum.finish(),
            hull.finish(),
            rebuilt.finish(),
        ]);
    }
    Ok(EquivalenceReport {
        seed: options.seed,
        samples: options.samples,
        policy: policy.table().to_nested(),
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::{example2, toy_h2};

    #[test]
    fn bundled_games_pass() {
        for g in [example2(), toy_h2()] {
            let report = run_equivalence_suite(&g, None, &EquivalenceOptions::default()).unwrap();
            assert!(report.passed, "{report:#?}");
            assert_eq!(report.checks.len(), 12);
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let g = toy_h2();
        let opts = EquivalenceOptions {
            player: Some(1),
            samples: 3,
            seed: 11,
            ..EquivalenceOptions::default()
        };
        let a = run_equivalence_suite(&g, None, &opts).unwrap();
        let b = run_equivalence_suite(&g, None, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.check(CHECK_HULL, 1).unwrap().passed);
    }
}
