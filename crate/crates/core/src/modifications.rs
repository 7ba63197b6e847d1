//! Per-player modifications of a joint policy.
//!
//! A modification maps the action recommended to player `i` to a (possibly
//! random) replacement. Markov modifications see `(t, s, a^i)`; non-Markov
//! ones additionally see the full history of states and executed joint
//! actions.

use crate::aux_mdps::{self, AuxPolicy};
use crate::dynamics::{OccupancyMeasure, ZERO_MARGINAL};
use crate::error::{Error, Result};
use crate::game::{ConstrainedMarkovGame, MarkovPolicy, STRUCTURAL_TOL};
use crate::table::StageArray;

/// Default cap on the number of deterministic Markov modifications.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;
/// Default cap on the number of history-keyed cells, summed over steps.
pub const DEFAULT_HISTORY_CAP: u128 = 100_000;

/// Markov modification `phi_t(b | s, a^i)`.
///
/// Stored as a table with rows `s * |A^i| + a^i` and columns `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovModification {
    player: usize,
    num_actions: usize,
    table: StageArray,
}

fn check_row(row: &[f64], what: &'static str, at: impl FnOnce() -> String) -> Result<()> {
    let sum: f64 = row.iter().sum();
    if row.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > STRUCTURAL_TOL {
        return Err(Error::InvalidDistribution {
            what,
            detail: format!("row {} is {:?}", at(), row),
        });
    }
    Ok(())
}

impl MarkovModification {
    pub fn new(game: &ConstrainedMarkovGame, player: usize, table: StageArray) -> Result<Self> {
        game.check_player(player)?;
        let ai = game.num_actions(player);
        let expected = (game.horizon(), game.num_states() * ai, ai);
        if table.shape() != expected {
            return Err(Error::dim(
                "modification table",
                expected.0 * expected.1 * expected.2,
                table.as_slice().len(),
            ));
        }
        for t in 0..expected.0 {
            for r in 0..expected.1 {
                check_row(table.row(t, r), "modification", || {
                    format!("t={t}, s={}, a^i={}", r / ai, r % ai)
                })?;
            }
        }
        Ok(MarkovModification {
            player,
            num_actions: ai,
            table,
        })
    }

    /// Builds from `f(t, s, a^i, b)`.
    pub fn from_fn(
        game: &ConstrainedMarkovGame,
        player: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        game.check_player(player)?;
        let ai = game.num_actions(player);
        let table = StageArray::from_fn(game.horizon(), game.num_states() * ai, ai, |t, r, b| {
            f(t, r / ai, r % ai, b)
        });
        Self::new(game, player, table)
    }

    pub fn identity(game: &ConstrainedMarkovGame, player: usize) -> Result<Self> {
        Self::from_fn(game, player, |_, _, a, b| if a == b { 1.0 } else { 0.0 })
    }

    /// Always plays `action`.
    pub fn constant(game: &ConstrainedMarkovGame, player: usize, action: usize) -> Result<Self> {
        Self::from_fn(game, player, |_, _, _, b| if b == action { 1.0 } else { 0.0 })
    }

    /// Deterministic modification with `targets[(t * S + s) * |A^i| + a^i]`.
    pub fn from_targets(game: &ConstrainedMarkovGame, player: usize, targets: &[usize]) -> Result<Self> {
        game.check_player(player)?;
        let ai = game.num_actions(player);
        let cells = game.horizon() * game.num_states() * ai;
        if targets.len() != cells {
            return Err(Error::dim("modification targets", cells, targets.len()));
        }
        let mut table = StageArray::zeros(game.horizon(), game.num_states() * ai, ai);
        for (cell, &b) in targets.iter().enumerate() {
            if b >= ai {
                return Err(Error::InvalidDistribution {
                    what: "modification",
                    detail: format!("target {b} out of range at cell {cell}"),
                });
            }
            table.as_mut_slice()[cell * ai + b] = 1.0;
        }
        Ok(MarkovModification {
            player,
            num_actions: ai,
            table,
        })
    }

    pub(crate) fn from_table_unchecked(player: usize, num_actions: usize, table: StageArray) -> Self {
        MarkovModification {
            player,
            num_actions,
            table,
        }
    }

    pub fn player(&self) -> usize {
        self.player
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn table(&self) -> &StageArray {
        &self.table
    }

    #[inline]
    pub fn prob(&self, t: usize, s: usize, own: usize, b: usize) -> f64 {
        self.table.get(t, s * self.num_actions + own, b)
    }

    pub fn row(&self, t: usize, s: usize, own: usize) -> &[f64] {
        self.table.row(t, s * self.num_actions + own)
    }

    pub fn is_deterministic(&self) -> bool {
        self.table.as_slice().iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Cell targets when deterministic.
    pub fn targets(&self) -> Option<Vec<usize>> {
        let ai = self.num_actions;
        self.table
            .as_slice()
            .chunks(ai)
            .map(|row| {
                let hot = row.iter().position(|&v| v == 1.0)?;
                row.iter()
                    .enumerate()
                    .all(|(b, &v)| b == hot || v == 0.0)
                    .then_some(hot)
            })
            .collect()
    }

    /// `lambda * self + (1 - lambda) * other`.
    pub fn blend(&self, other: &MarkovModification, lambda: f64) -> MarkovModification {
        let mut table = self.table.clone();
        for (x, y) in table.as_mut_slice().iter_mut().zip(other.table.as_slice()) {
            *x = lambda * *x + (1.0 - lambda) * y;
        }
        MarkovModification {
            player: self.player,
            num_actions: self.num_actions,
            table,
        }
    }
}

/// `(phi o pi)_t(b, a^{-i} | s) = sum_{a^i} phi_t(b | s, a^i) pi_t((a^i, a^{-i}) | s)`.
pub fn apply_modification(
    game: &ConstrainedMarkovGame,
    policy: &MarkovPolicy,
    modification: &MarkovModification,
) -> Result<MarkovPolicy> {
    policy.check_dims(game)?;
    let expected = (
        game.horizon(),
        game.num_states() * game.num_actions(modification.player),
        game.num_actions(modification.player),
    );
    if modification.table.shape() != expected {
        return Err(Error::dim(
            "modification table",
            expected.0 * expected.1 * expected.2,
            modification.table.as_slice().len(),
        ));
    }
    Ok(MarkovPolicy::new_unchecked(compose(
        game,
        policy.table(),
        modification,
    )))
}

pub(crate) fn compose(
    game: &ConstrainedMarkovGame,
    pi: &StageArray,
    modification: &MarkovModification,
) -> StageArray {
    let space = game.action_space();
    let i = modification.player;
    let ai = modification.num_actions;
    let (h, ns, na) = pi.shape();
    let mut out = StageArray::zeros(h, ns, na);
    for t in 0..h {
        for s in 0..ns {
            for a in 0..na {
                let p = pi.get(t, s, a);
                if p == 0.0 {
                    continue;
                }
                let own = space.component(a, i);
                let row = modification.row(t, s, own);
                for (b, &q) in row.iter().enumerate().take(ai) {
                    if q != 0.0 {
                        out.add(t, s, space.with_component(a, i, b), q * p);
                    }
                }
            }
        }
    }
    out
}

/// All deterministic Markov modifications of one player, enumerated
/// lexicographically over cells `(t, s, a^i)` with the first cell most
/// significant. Entries are generated on demand.
#[derive(Clone, Debug)]
pub struct DetModifications {
    player: usize,
    num_actions: usize,
    cells: usize,
    count: usize,
    identity_index: usize,
}

impl DetModifications {
    pub fn player(&self) -> usize {
        self.player
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn identity_index(&self) -> usize {
        self.identity_index
    }

    /// Cell targets of the `k`-th modification.
    pub fn targets(&self, k: usize) -> Vec<usize> {
        let mut out = vec![0; self.cells];
        let mut rest = k;
        for cell in (0..self.cells).rev() {
            out[cell] = rest % self.num_actions;
            rest /= self.num_actions;
        }
        out
    }

    /// Position of a deterministic modification given by its targets.
    pub fn index_of(&self, targets: &[usize]) -> Option<usize> {
        if targets.len() != self.cells || targets.iter().any(|&b| b >= self.num_actions) {
            return None;
        }
        Some(targets.iter().fold(0, |k, &b| k * self.num_actions + b))
    }

    pub fn get(&self, game: &ConstrainedMarkovGame, k: usize) -> MarkovModification {
        MarkovModification::from_targets(game, self.player, &self.targets(k))
            .expect("targets are in range")
    }

    pub fn iter<'a>(
        &'a self,
        game: &'a ConstrainedMarkovGame,
    ) -> impl Iterator<Item = MarkovModification> + 'a {
        (0..self.count).map(move |k| self.get(game, k))
    }

    pub fn to_vec(&self, game: &ConstrainedMarkovGame) -> Vec<MarkovModification> {
        self.iter(game).collect()
    }
}

/// Enumerates `Phi^i_{M,det}`; fails when `|A^i|^{H |S| |A^i|}` exceeds `cap`.
pub fn enumerate_det_modifications(
    game: &ConstrainedMarkovGame,
    player: usize,
    cap: u128,
) -> Result<DetModifications> {
    game.check_player(player)?;
    let ai = game.num_actions(player);
    let cells = game.horizon() * game.num_states() * ai;
    let required = u32::try_from(cells)
        .ok()
        .and_then(|c| (ai as u128).checked_pow(c))
        .unwrap_or(u128::MAX);
    if required > cap {
        return Err(Error::CapExceeded {
            what: "deterministic modification enumeration",
            required,
            cap,
        });
    }
    let mut identity = vec![0; cells];
    for (cell, slot) in identity.iter_mut().enumerate() {
        *slot = cell % ai;
    }
    let mut set = DetModifications {
        player,
        num_actions: ai,
        cells,
        count: required as usize,
        identity_index: 0,
    };
    set.identity_index = set.index_of(&identity).expect("identity targets are in range");
    Ok(set)
}

/// Number of histories `(S x A)^t x S` at each step (0-based `t`), after
/// checking that `|A^i|` times their total fits under `cap`.
pub fn history_counts(game: &ConstrainedMarkovGame, player: usize, cap: u128) -> Result<Vec<usize>> {
    let sa = (game.num_states() * game.num_joint_actions()) as u128;
    let mut counts = Vec::with_capacity(game.horizon());
    let mut current = game.num_states() as u128;
    let mut total: u128 = 0;
    for t in 0..game.horizon() {
        if t > 0 {
            current = current.saturating_mul(sa);
        }
        total = total.saturating_add(current.saturating_mul(game.num_actions(player) as u128));
        if total > cap {
            return Err(Error::CapExceeded {
                what: "history-keyed state space",
                required: total,
                cap,
            });
        }
        counts.push(current as usize);
    }
    Ok(counts)
}

/// A history `(s_1, a_1, ..., s_t)` with executed joint actions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct History {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl History {
    /// Decodes a prefix index `p = ((s_1 A + a_1) S + s_2) ...` at step `t`.
    pub fn decode(game: &ConstrainedMarkovGame, t: usize, mut p: usize) -> History {
        let (ns, na) = (game.num_states(), game.num_joint_actions());
        let mut states = vec![0; t + 1];
        let mut actions = vec![0; t];
        states[t] = p % ns;
        p /= ns;
        for k in (0..t).rev() {
            actions[k] = p % na;
            p /= na;
            states[k] = p % ns;
            p /= ns;
        }
        History { states, actions }
    }

    pub fn encode(&self, game: &ConstrainedMarkovGame) -> usize {
        let (ns, na) = (game.num_states(), game.num_joint_actions());
        let mut p = self.states[0];
        for (a, s) in self.actions.iter().zip(&self.states[1..]) {
            p = (p * na + a) * ns + s;
        }
        p
    }

    pub fn current_state(&self) -> usize {
        *self.states.last().expect("histories are non-empty")
    }
}

/// History-dependent modification `phi_t(b | s_{1:t}, a_{1:t-1}, a^i_t)`.
///
/// `tables[t][(p * |A^i| + a^i) * |A^i| + b]` with `p` the prefix index of
/// [`History::decode`]. The key index `p * |A^i| + a^i` coincides with the
/// state index of the history MDP.
#[derive(Clone, Debug, PartialEq)]
pub struct NonMarkovModification {
    player: usize,
    num_actions: usize,
    tables: Vec<Vec<f64>>,
}

impl NonMarkovModification {
    /// Builds from `f(t, history, a^i) -> distribution over A^i`.
    pub fn from_fn(
        game: &ConstrainedMarkovGame,
        player: usize,
        cap: u128,
        mut f: impl FnMut(usize, &History, usize) -> Vec<f64>,
    ) -> Result<Self> {
        game.check_player(player)?;
        let ai = game.num_actions(player);
        let counts = history_counts(game, player, cap)?;
        let mut tables = Vec::with_capacity(counts.len());
        for (t, &count) in counts.iter().enumerate() {
            let mut table = Vec::with_capacity(count * ai * ai);
            for p in 0..count {
                let history = History::decode(game, t, p);
                for own in 0..ai {
                    let row = f(t, &history, own);
                    if row.len() != ai {
                        return Err(Error::dim("modification row", ai, row.len()));
                    }
                    check_row(&row, "non-Markov modification", || {
                        format!("t={t}, history={p}, a^i={own}")
                    })?;
                    table.extend(row);
                }
            }
            tables.push(table);
        }
        Ok(NonMarkovModification {
            player,
            num_actions: ai,
            tables,
        })
    }

    /// The Markov modification viewed as ignoring history.
    pub fn from_markov(
        game: &ConstrainedMarkovGame,
        modification: &MarkovModification,
        cap: u128,
    ) -> Result<Self> {
        Self::from_fn(game, modification.player, cap, |t, h, own| {
            modification.row(t, h.current_state(), own).to_vec()
        })
    }

    pub fn identity(game: &ConstrainedMarkovGame, player: usize, cap: u128) -> Result<Self> {
        Self::from_markov(game, &MarkovModification::identity(game, player)?, cap)
    }

    pub fn player(&self) -> usize {
        self.player
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Number of history keys `p * |A^i| + a^i` at step `t`.
    pub fn num_keys(&self, t: usize) -> usize {
        self.tables[t].len() / self.num_actions
    }

    /// Distribution for history key `key = p * |A^i| + a^i` at step `t`.
    pub fn key_row(&self, t: usize, key: usize) -> &[f64] {
        let ai = self.num_actions;
        &self.tables[t][key * ai..(key + 1) * ai]
    }

    pub fn row(&self, t: usize, prefix: usize, own: usize) -> &[f64] {
        self.key_row(t, prefix * self.num_actions + own)
    }
}

/// Occupancy of the history-dependent modified process, by forward
/// enumeration of all histories.
pub fn apply_nonmarkov(
    game: &ConstrainedMarkovGame,
    policy: &MarkovPolicy,
    modification: &NonMarkovModification,
) -> Result<OccupancyMeasure> {
    policy.check_dims(game)?;
    let i = modification.player;
    game.check_player(i)?;
    if modification.tables.len() != game.horizon()
        || modification.num_actions != game.num_actions(i)
    {
        return Err(Error::dim(
            "non-Markov modification horizon",
            game.horizon(),
            modification.tables.len(),
        ));
    }
    let space = game.action_space();
    let (h, ns, na) = (game.horizon(), game.num_states(), game.num_joint_actions());
    let mut d = StageArray::zeros(h, ns, na);
    let mut mass = game.rho().to_vec();
    for t in 0..h {
        let last = t + 1 == h;
        let mut next = if last {
            Vec::new()
        } else {
            vec![0.0; mass.len() * na * ns]
        };
        for (p, &m) in mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let s = p % ns;
            for a in 0..na {
                let pa = policy.prob(t, s, a);
                if pa == 0.0 {
                    continue;
                }
                let row = modification.row(t, p, space.component(a, i));
                for (b, &q) in row.iter().enumerate() {
                    if q == 0.0 {
                        continue;
                    }
                    let executed = space.with_component(a, i, b);
                    let w = m * pa * q;
                    d.add(t, s, executed, w);
                    if !last {
                        let base = (p * na + executed) * ns;
                        for (s2, &pt) in game.transition(t, s, executed).iter().enumerate() {
                            next[base + s2] += w * pt;
                        }
                    }
                }
            }
        }
        mass = next;
    }
    Ok(OccupancyMeasure::from_table(d))
}

/// Markov modification inducing the same occupancy as a non-Markov one:
/// history-MDP occupancies summed over histories sharing `(s_t, a^i_t)`,
/// normalized per cell; unreached cells get the uniform row.
pub fn markovianize(
    game: &ConstrainedMarkovGame,
    policy: &MarkovPolicy,
    modification: &NonMarkovModification,
    cap: u128,
) -> Result<MarkovModification> {
    let i = modification.player;
    let mdp = aux_mdps::build_mdp1(game, i, policy, cap)?;
    let occ = aux_mdps::aux_occupancy(&mdp, AuxPolicy::NonMarkov(modification))?;
    let ai = game.num_actions(i);
    let ns = game.num_states();
    let mut table = StageArray::zeros(game.horizon(), ns * ai, ai);
    for t in 0..game.horizon() {
        for key in 0..mdp.num_states(t) {
            let cell = mdp.cell(t, key);
            for b in 0..ai {
                table.add(t, cell, b, occ.get(t, key, b));
            }
        }
        for cell in 0..ns * ai {
            let row = table.row_mut(t, cell);
            let total: f64 = row.iter().sum();
            if total > ZERO_MARGINAL {
                row.iter_mut().for_each(|v| *v /= total);
            } else {
                row.iter_mut().for_each(|v| *v = 1.0 / ai as f64);
            }
        }
    }
    Ok(MarkovModification::from_table_unchecked(i, ai, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::compute_occupancy;
    use crate::examples::{example1, example2, normal_form_policy, toy_h2};
    use crate::game::GameBuilder;

    #[test]
    fn identity_is_exact() {
        let g = toy_h2();
        let pi = MarkovPolicy::from_fn(&g, |t, s, a| [0.1, 0.2, 0.3, 0.4][(a + s + 2 * t) % 4]).unwrap();
        for i in 0..2 {
            let id = MarkovModification::identity(&g, i).unwrap();
            assert_eq!(apply_modification(&g, &pi, &id).unwrap(), pi);
        }
    }

    #[test]
    fn constant_modification_of_player_two() {
        let g = example1();
        let (x, y, z, w) = (0.1, 0.2, 0.3, 0.4);
        let pi = normal_form_policy(&g, [x, y, z, w]);
        let c2 = MarkovModification::constant(&g, 1, 1).unwrap();
        let out = apply_modification(&g, &pi, &c2).unwrap();
        assert_eq!(out.row(0, 0), &[0.0, x + y, 0.0, z + w]);
    }

    #[test]
    fn enumeration_order_and_identity_index() {
        let g = example2();
        let dets = enumerate_det_modifications(&g, 0, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(dets.len(), 4);
        assert_eq!(dets.targets(0), vec![0, 0]);
        assert_eq!(dets.targets(1), vec![0, 1]);
        assert_eq!(dets.targets(2), vec![1, 0]);
        assert_eq!(dets.targets(3), vec![1, 1]);
        assert_eq!(dets.identity_index(), 1);
        assert_eq!(dets.get(&g, 1), MarkovModification::identity(&g, 0).unwrap());
        for k in 0..4 {
            assert_eq!(dets.index_of(&dets.get(&g, k).targets().unwrap()), Some(k));
        }
    }

    #[test]
    fn enumeration_counts_and_cap() {
        let single = GameBuilder::new(2, 2, vec![1, 3]).build().unwrap();
        let dets = enumerate_det_modifications(&single, 0, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!((dets.len(), dets.identity_index()), (1, 0));

        let g = GameBuilder::new(2, 2, vec![2, 2]).build().unwrap();
        let dets = enumerate_det_modifications(&g, 1, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(dets.len(), 256);
        let all: std::collections::BTreeSet<Vec<usize>> =
            (0..dets.len()).map(|k| dets.get(&g, k).targets().unwrap()).collect();
        assert_eq!(all.len(), 256);

        let err = enumerate_det_modifications(&g, 1, 255).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { required: 256, .. }));
    }

    #[test]
    fn history_roundtrip() {
        let g = toy_h2();
        for p in 0..history_counts(&g, 0, DEFAULT_HISTORY_CAP).unwrap()[1] {
            let h = History::decode(&g, 1, p);
            assert_eq!(h.encode(&g), p);
        }
    }

    #[test]
    fn history_free_nonmarkov_matches_markov() {
        let g = toy_h2();
        let pi = MarkovPolicy::from_fn(&g, |t, s, a| [0.4, 0.1, 0.3, 0.2][(a + s + t) % 4]).unwrap();
        let phi = MarkovModification::from_fn(&g, 1, |t, s, own, b| {
            let p = 0.2 + 0.1 * (t + s + own) as f64;
            if b == 0 { p } else { 1.0 - p }
        })
        .unwrap();
        let nm = NonMarkovModification::from_markov(&g, &phi, DEFAULT_HISTORY_CAP).unwrap();
        let direct = apply_nonmarkov(&g, &pi, &nm).unwrap();
        let via = compute_occupancy(&g, &apply_modification(&g, &pi, &phi).unwrap()).unwrap();
        assert!(direct.max_abs_diff(&via) < 1e-12);

        let id = NonMarkovModification::identity(&g, 0, DEFAULT_HISTORY_CAP).unwrap();
        let own = apply_nonmarkov(&g, &pi, &id).unwrap();
        assert!(own.max_abs_diff(&compute_occupancy(&g, &pi).unwrap()) < 1e-12);

        let back = markovianize(&g, &pi, &nm, DEFAULT_HISTORY_CAP).unwrap();
        assert!(back.table().max_abs_diff(phi.table()) < 1e-12);
    }

    #[test]
    fn markovianize_uses_uniform_rows_off_support() {
        let g = GameBuilder::new(2, 2, vec![2, 2])
            .kernel(|_, _, _, next| if next == 0 { 1.0 } else { 0.0 })
            .build()
            .unwrap();
        let pi = MarkovPolicy::uniform(&g);
        let id = NonMarkovModification::identity(&g, 0, DEFAULT_HISTORY_CAP).unwrap();
        let bar = markovianize(&g, &pi, &id, DEFAULT_HISTORY_CAP).unwrap();
        assert_eq!(bar.row(1, 1, 0), &[0.5, 0.5]);
        assert_eq!(bar.row(1, 0, 1), &[0.0, 1.0]);
    }

    #[test]
    fn bad_rows_are_rejected() {
        let g = example2();
        assert!(MarkovModification::from_fn(&g, 0, |_, _, _, _| 0.6).is_err());
        assert!(NonMarkovModification::from_fn(&g, 0, 100, |_, _, _| vec![0.5, 0.6]).is_err());
        assert!(matches!(
            MarkovModification::identity(&g, 2),
            Err(Error::PlayerOutOfRange { .. })
        ));
    }
}
