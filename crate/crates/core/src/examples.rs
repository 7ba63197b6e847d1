//! Bundled games: the two normal-form games with coupling constraints and a
//! small two-step, two-state game used by the equivalence suites.

use crate::game::{ConstrainedMarkovGame, MarkovPolicy};

pub const EXAMPLE1_JSON: &str = include_str!("../examples/example1.game");
pub const EXAMPLE2_JSON: &str = include_str!("../examples/example2.game");
pub const TOY_H2_JSON: &str = include_str!("../examples/toy_h2.game");

/// Two players, playerwise constraints `x >= 1/2` (player 1) and `y >= 1/3`
/// (player 2) over `pi = (x, y, z, w)`; no constrained CE exists.
pub fn example1() -> ConstrainedMarkovGame {
    ConstrainedMarkovGame::from_json(EXAMPLE1_JSON).expect("bundled game is valid")
}

/// Same rewards with four common constraints `pi(a) >= 1/4`; the uniform
/// policy is the only feasible point.
pub fn example2() -> ConstrainedMarkovGame {
    ConstrainedMarkovGame::from_json(EXAMPLE2_JSON).expect("bundled game is valid")
}

pub fn toy_h2() -> ConstrainedMarkovGame {
    ConstrainedMarkovGame::from_json(TOY_H2_JSON).expect("bundled game is valid")
}

/// Looks up a bundled game by name (`example1`, `example2`, `toy_h2`).
pub fn by_name(name: &str) -> Option<ConstrainedMarkovGame> {
    match name {
        "example1" => Some(example1()),
        "example2" => Some(example2()),
        "toy_h2" => Some(toy_h2()),
        _ => None,
    }
}

/// Normal-form policy `(x, y, z, w)` over joint actions `(1,1), (1,2), (2,1), (2,2)`.
pub fn normal_form_policy(game: &ConstrainedMarkovGame, xyzw: [f64; 4]) -> MarkovPolicy {
    MarkovPolicy::stationary(game, &xyzw).expect("caller passes a distribution")
}
