//! Dense two-phase simplex and the linear programs over mixtures of
//! deterministic modifications.

use serde::{Deserialize, Serialize};

use crate::dynamics::{compute_occupancy, signal_value, OccupancyMeasure, FEASIBILITY_TOL};
use crate::error::{Error, Result};
use crate::game::{ConstrainedMarkovGame, MarkovPolicy};
use crate::modifications::{apply_modification, enumerate_det_modifications, DetModifications};
use crate::table::StageArray;

/// Reduced costs above this are improving.
const COST_EPS: f64 = 1e-10;
/// Pivot elements at or below this are treated as zero.
const PIVOT_EPS: f64 = 1e-9;
/// Right-hand-side relaxation in the first ratio-test pass.
const RATIO_SLACK: f64 = 1e-9;
/// Pivots smaller than this fraction of the largest admissible one are skipped.
const PIVOT_SPREAD: f64 = 1e-2;
/// Phase-one objective above this means the program is infeasible.
const PHASE_ONE_TOL: f64 = 1e-9;
/// Per-coordinate tolerance for convex-hull membership.
pub const HULL_TOL: f64 = 1e-7;
/// Minimum-slack threshold for strict feasibility.
pub const STRICT_TOL: f64 = 1e-9;
/// Weight floors tried when looking for a feasible mixture with full support.
pub const EPSILON_SWEEP: [f64; 7] = [1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Max,
    Min,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Ge,
    Le,
    Eq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `opt c.x` subject to linear rows and `x >= 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        LinearProgram {
            sense,
            objective,
            constraints: Vec::new(),
        }
    }

    /// Program over the probability simplex with rows `a.x >= b`.
    pub fn over_simplex(sense: Sense, objective: Vec<f64>, rows: Vec<(Vec<f64>, f64)>) -> Self {
        let n = objective.len();
        let mut lp = LinearProgram::new(sense, objective);
        for (coeffs, rhs) in rows {
            lp.add(coeffs, Relation::Ge, rhs);
        }
        lp.add(vec![1.0; n], Relation::Eq, 1.0);
        lp
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn check(&self) -> Result<()> {
        let n = self.num_vars();
        if n == 0 {
            return Err(Error::MalformedLp("no variables".into()));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedLp("non-finite objective coefficient".into()));
        }
        for (r, row) in self.constraints.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(Error::MalformedLp(format!(
                    "row {r} has {} coefficients, expected {n}",
                    row.coeffs.len()
                )));
            }
            if !row.rhs.is_finite() || row.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(Error::MalformedLp(format!("row {r} has a non-finite entry")));
            }
        }
        Ok(())
    }

    /// Largest violation of any row at `x`, and of nonnegativity.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().map(|v| -v).fold(0.0, f64::max);
        for row in &self.constraints {
            let lhs: f64 = row.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
            let v = match row.relation {
                Relation::Ge => row.rhs - lhs,
                Relation::Le => lhs - row.rhs,
                Relation::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal basic solution; empty unless optimal.
    pub x: Vec<f64>,
    /// Objective at `x`; `NaN` unless optimal.
    pub objective: f64,
    pub pivots: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

struct Tableau {
    /// `rows` constraint rows followed by one objective row, each `cols + 1` wide.
    data: Vec<f64>,
    rows: usize,
    cols: usize,
    basis: Vec<usize>,
    pivots: usize,
    pivot_cap: usize,
}

enum Phase {
    Optimal,
    Unbounded,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) -> Result<()> {
        self.pivots += 1;
        if self.pivots > self.pivot_cap {
            return Err(Error::IterationLimit(self.pivot_cap));
        }
        let w = self.cols + 1;
        let inv = 1.0 / self.at(pr, pc);
        for c in 0..w {
            self.data[pr * w + c] *= inv;
        }
        self.data[pr * w + pc] = 1.0;
        let pivot_row: Vec<f64> = self.data[pr * w..(pr + 1) * w].to_vec();
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let f = self.data[r * w + pc];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.data[r * w..(r + 1) * w];
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            row[pc] = 0.0;
        }
        self.basis[pr] = pc;
        Ok(())
    }

    /// Loads `maximize cost.x` into the objective row as reduced costs
    /// `z_j - c_j` with respect to the current basis.
    fn set_objective(&mut self, cost: &[f64]) {
        let w = self.cols + 1;
        let obj = self.rows * w;
        for c in 0..w {
            self.data[obj + c] = if c < self.cols { -cost[c] } else { 0.0 };
        }
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            for c in 0..w {
                self.data[obj + c] += cb * self.data[r * w + c];
            }
        }
    }

    /// Bland's rule for the entering column; the leaving row comes from a
    /// two-pass ratio test that avoids tiny pivots.
    fn run(&mut self, allowed: &[bool]) -> Result<Phase> {
        loop {
            let entering = (0..self.cols).find(|&c| allowed[c] && self.at(self.rows, c) < -COST_EPS);
            let Some(pc) = entering else {
                return Ok(Phase::Optimal);
            };
            // Two passes: the smallest ratio with right-hand sides relaxed by
            // RATIO_SLACK, then among rows within it the smallest basic
            // variable whose pivot is not tiny next to the largest one.
            let col: Vec<(usize, f64)> = (0..self.rows)
                .map(|r| (r, self.at(r, pc)))
                .filter(|&(_, a)| a > PIVOT_EPS)
                .collect();
            if col.is_empty() {
                return Ok(Phase::Unbounded);
            }
            let theta = col
                .iter()
                .map(|&(r, a)| (self.rhs(r).max(0.0) + RATIO_SLACK) / a)
                .fold(f64::INFINITY, f64::min);
            let within: Vec<(usize, f64)> = col
                .into_iter()
                .filter(|&(r, a)| self.rhs(r).max(0.0) / a <= theta)
                .collect();
            let largest = within.iter().map(|&(_, a)| a).fold(0.0, f64::max);
            let pr = within
                .iter()
                .filter(|&&(_, a)| a >= PIVOT_SPREAD * largest)
                .min_by_key(|&&(r, _)| self.basis[r])
                .map(|&(r, _)| r)
                .expect("the largest pivot qualifies");
            self.pivot(pr, pc)?;
        }
    }

    fn remove_row(&mut self, r: usize) {
        let w = self.cols + 1;
        self.data.drain(r * w..(r + 1) * w);
        self.basis.remove(r);
        self.rows -= 1;
    }
}

/// Solves `lp` with a dense two-phase simplex under Bland's rule.
///
/// Infeasible and unbounded programs are reported through the status;
/// errors are reserved for malformed input and the pivot cap.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.check()?;
    let n = lp.num_vars();
    let m = lp.constraints.len();

    // Normalize to nonnegative right-hand sides.
    let rows: Vec<(Vec<f64>, Relation, f64)> = lp
        .constraints
        .iter()
        .map(|c| {
            if c.rhs < 0.0 {
                let rel = match c.relation {
                    Relation::Ge => Relation::Le,
                    Relation::Le => Relation::Ge,
                    Relation::Eq => Relation::Eq,
                };
                (c.coeffs.iter().map(|v| -v).collect(), rel, -c.rhs)
            } else {
                (c.coeffs.clone(), c.relation, c.rhs)
            }
        })
        .collect();

    let num_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let num_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let cols = n + num_slack + num_art;
    let w = cols + 1;
    let mut tab = Tableau {
        data: vec![0.0; (m + 1) * w],
        rows: m,
        cols,
        basis: vec![0; m],
        pivots: 0,
        pivot_cap: 50_000usize.max(50 * (m + cols)),
    };
    let (mut slack, mut art) = (n, n + num_slack);
    for (r, (coeffs, rel, rhs)) in rows.iter().enumerate() {
        tab.data[r * w..r * w + n].copy_from_slice(coeffs);
        tab.data[r * w + cols] = *rhs;
        match rel {
            Relation::Le => {
                tab.data[r * w + slack] = 1.0;
                tab.basis[r] = slack;
                slack += 1;
            }
            Relation::Ge => {
                tab.data[r * w + slack] = -1.0;
                slack += 1;
                tab.data[r * w + art] = 1.0;
                tab.basis[r] = art;
                art += 1;
            }
            Relation::Eq => {
                tab.data[r * w + art] = 1.0;
                tab.basis[r] = art;
                art += 1;
            }
        }
    }
    let first_art = n + num_slack;
    let is_art = |c: usize| c >= first_art;

    if num_art > 0 {
        let cost: Vec<f64> = (0..cols).map(|c| if is_art(c) { -1.0 } else { 0.0 }).collect();
        tab.set_objective(&cost);
        tab.run(&vec![true; cols])?;
        let infeasibility: f64 = (0..tab.rows)
            .filter(|&r| is_art(tab.basis[r]))
            .map(|r| tab.rhs(r))
            .sum();
        if infeasibility > PHASE_ONE_TOL {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                objective: f64::NAN,
                pivots: tab.pivots,
            });
        }
        // Drive remaining artificials out of the basis, dropping redundant rows.
        let mut r = 0;
        while r < tab.rows {
            if is_art(tab.basis[r]) {
                let col = (0..first_art)
                    .filter(|&c| tab.at(r, c).abs() > 1e-9)
                    .max_by(|&a, &b| tab.at(r, a).abs().total_cmp(&tab.at(r, b).abs()));
                match col {
                    Some(c) => tab.pivot(r, c)?,
                    None => {
                        tab.remove_row(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    let sign = match lp.sense {
        Sense::Max => 1.0,
        Sense::Min => -1.0,
    };
    let cost: Vec<f64> = (0..cols)
        .map(|c| if c < n { sign * lp.objective[c] } else { 0.0 })
        .collect();
    tab.set_objective(&cost);
    let allowed: Vec<bool> = (0..cols).map(|c| !is_art(c)).collect();
    match tab.run(&allowed)? {
        Phase::Unbounded => Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: Vec::new(),
            objective: f64::NAN,
            pivots: tab.pivots,
        }),
        Phase::Optimal => {
            let mut x = vec![0.0; n];
            for r in 0..tab.rows {
                if tab.basis[r] < n {
                    x[tab.basis[r]] = tab.rhs(r).max(0.0);
                }
            }
            let objective = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
            Ok(LpSolution {
                status: LpStatus::Optimal,
                x,
                objective,
                pivots: tab.pivots,
            })
        }
    }
}

/// Values of every deterministic modification of one player at a fixed
/// joint policy: the data of the best-modification program.
#[derive(Clone, Debug)]
pub struct ModificationProfile {
    pub player: usize,
    pub dets: DetModifications,
    /// `V^{r^i}(phi(k) o pi)`.
    pub rewards: Vec<f64>,
    /// `V^{g^{i,j}}(phi(k) o pi)`, indexed `[k][j]`.
    pub constraint_values: Vec<Vec<f64>>,
    /// `c^{i,j}`.
    pub thresholds: Vec<f64>,
}

impl ModificationProfile {
    pub fn new(
        game: &ConstrainedMarkovGame,
        player: usize,
        policy: &MarkovPolicy,
        cap: u128,
    ) -> Result<Self> {
        policy.check_dims(game)?;
        let dets = enumerate_det_modifications(game, player, cap)?;
        let j_count = game.num_constraints();
        let mut rewards = Vec::with_capacity(dets.len());
        let mut constraint_values = Vec::with_capacity(dets.len());
        for k in 0..dets.len() {
            let d = Self::occupancy_of(game, policy, &dets, k)?;
            rewards.push(signal_value(game.reward(player), &d));
            constraint_values.push(
                (0..j_count)
                    .map(|j| signal_value(game.constraint(player, j), &d))
                    .collect(),
            );
        }
        Ok(ModificationProfile {
            player,
            dets,
            rewards,
            constraint_values,
            thresholds: (0..j_count).map(|j| game.threshold(player, j)).collect(),
        })
    }

    fn occupancy_of(
        game: &ConstrainedMarkovGame,
        policy: &MarkovPolicy,
        dets: &DetModifications,
        k: usize,
    ) -> Result<OccupancyMeasure> {
        let modified = apply_modification(game, policy, &dets.get(game, k))?;
        compute_occupancy(game, &modified)
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn num_constraints(&self) -> usize {
        self.thresholds.len()
    }

    /// Occupancy `d^{phi(k) o pi}`.
    pub fn occupancy(
        &self,
        game: &ConstrainedMarkovGame,
        policy: &MarkovPolicy,
        k: usize,
    ) -> Result<OccupancyMeasure> {
        Self::occupancy_of(game, policy, &self.dets, k)
    }

    /// `sum_k alpha_k d^{phi(k) o pi}`, touching only the support of `alpha`.
    pub fn mixture(
        &self,
        game: &ConstrainedMarkovGame,
        policy: &MarkovPolicy,
        alpha: &[f64],
    ) -> Result<OccupancyMeasure> {
        check_distribution(alpha, self.len())?;
        let mut out = StageArray::zeros(game.horizon(), game.num_states(), game.num_joint_actions());
        for (k, &w) in alpha.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let d = self.occupancy(game, policy, k)?;
            for (acc, v) in out.as_mut_slice().iter_mut().zip(d.as_slice()) {
                *acc += w * v;
            }
        }
        Ok(OccupancyMeasure::from_table(out))
    }

    /// Constraint slacks of the mixture `alpha`.
    pub fn slacks(&self, alpha: &[f64]) -> Vec<f64> {
        (0..self.num_constraints())
            .map(|j| {
                alpha
                    .iter()
                    .zip(&self.constraint_values)
                    .map(|(a, row)| a * row[j])
                    .sum::<f64>()
                    - self.thresholds[j]
            })
            .collect()
    }

    pub fn reward_of(&self, alpha: &[f64]) -> f64 {
        alpha.iter().zip(&self.rewards).map(|(a, r)| a * r).sum()
    }

    /// The best-modification program: maximize the mixed reward subject to
    /// every mixed constraint value meeting its threshold.
    pub fn best_modification_lp(&self) -> LinearProgram {
        LinearProgram::over_simplex(Sense::Max, self.rewards.clone(), self.constraint_rows())
    }

    fn constraint_rows(&self) -> Vec<(Vec<f64>, f64)> {
        (0..self.num_constraints())
            .map(|j| {
                (
                    self.constraint_values.iter().map(|row| row[j]).collect(),
                    self.thresholds[j],
                )
            })
            .collect()
    }
}

pub fn build_best_modification_lp(
    game: &ConstrainedMarkovGame,
    player: usize,
    policy: &MarkovPolicy,
    cap: u128,
) -> Result<LinearProgram> {
    Ok(ModificationProfile::new(game, player, policy, cap)?.best_modification_lp())
}

/// Which optimal vertex to report when the optimum is not unique.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// The vertex where Bland's rule stops.
    #[default]
    Bland,
    /// Among optimal mixtures, maximize `alpha_0`, then `alpha_1`, and so on.
    LexMaxAlpha,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestModification {
    pub status: LpStatus,
    /// Optimal value `Psi^i(pi)`; `None` when no mixture is feasible.
    pub psi: Option<f64>,
    pub alpha: Option<Vec<f64>>,
}

pub fn solve_best_modification(profile: &ModificationProfile, selection: Selection) -> Result<BestModification> {
    let lp = profile.best_modification_lp();
    let sol = solve_lp(&lp)?;
    if !sol.is_optimal() {
        return Ok(BestModification {
            status: sol.status,
            psi: None,
            alpha: None,
        });
    }
    let alpha = match selection {
        Selection::Bland => sol.x,
        Selection::LexMaxAlpha => lex_max(&lp, sol.objective, sol.x)?,
    };
    Ok(BestModification {
        status: LpStatus::Optimal,
        psi: Some(profile.reward_of(&alpha)),
        alpha: Some(alpha),
    })
}

fn lex_max(lp: &LinearProgram, optimum: f64, fallback: Vec<f64>) -> Result<Vec<f64>> {
    let n = lp.num_vars();
    let mut fixed = lp.clone();
    fixed.sense = Sense::Max;
    fixed.add(lp.objective.clone(), Relation::Ge, optimum - 1e-10 * (1.0 + optimum.abs()));
    let mut x = fallback;
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        fixed.objective = e.clone();
        let sol = solve_lp(&fixed)?;
        if !sol.is_optimal() {
            break;
        }
        x = sol.x;
        fixed.add(e, Relation::Ge, (sol.objective - 1e-12).max(0.0));
    }
    Ok(x)
}

/// `Psi^i(pi)` and one optimal mixture (Bland vertex).
pub fn best_feasible_modification(
    game: &ConstrainedMarkovGame,
    player: usize,
    policy: &MarkovPolicy,
    cap: u128,
) -> Result<BestModification> {
    let profile = ModificationProfile::new(game, player, policy, cap)?;
    solve_best_modification(&profile, Selection::Bland)
}

fn check_distribution(alpha: &[f64], len: usize) -> Result<()> {
    if alpha.len() != len {
        return Err(Error::dim("mixture weights", len, alpha.len()));
    }
    let sum: f64 = alpha.iter().sum();
    if alpha.iter().any(|a| !(*a >= -1e-12)) || (sum - 1.0).abs() > FEASIBILITY_TOL {
        return Err(Error::InvalidDistribution {
            what: "mixture weights",
            detail: format!("weights sum to {sum} or contain negative entries"),
        });
    }
    Ok(())
}

/// Entrywise convex combination of occupancies.
pub fn mix_occupancies(alpha: &[f64], occupancies: &[OccupancyMeasure]) -> Result<OccupancyMeasure> {
    check_distribution(alpha, occupancies.len())?;
    let first = occupancies.first().expect("checked non-empty by weights");
    let (h, r, c) = first.table().shape();
    let mut out = StageArray::zeros(h, r, c);
    for (w, d) in alpha.iter().zip(occupancies) {
        if d.table().shape() != (h, r, c) {
            return Err(Error::dim("occupancy", h * r * c, d.as_slice().len()));
        }
        if *w == 0.0 {
            continue;
        }
        for (acc, v) in out.as_mut_slice().iter_mut().zip(d.as_slice()) {
            *acc += w * v;
        }
    }
    Ok(OccupancyMeasure::from_table(out))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HullMembership {
    pub member: bool,
    /// Weights minimizing the total absolute residual.
    pub alpha: Vec<f64>,
    /// Largest coordinate residual `|sum_k alpha_k v_k - point|`.
    pub residual: f64,
}

/// Is `point` in the convex hull of `vertices`? Minimizes the L1 residual
/// over the simplex; membership means every coordinate is within `1e-7`.
pub fn hull_membership(point: &OccupancyMeasure, vertices: &[OccupancyMeasure]) -> Result<HullMembership> {
    let k = vertices.len();
    if k == 0 {
        return Err(Error::MalformedLp("no vertices".into()));
    }
    let dim = point.as_slice().len();
    if let Some(v) = vertices.iter().find(|v| v.as_slice().len() != dim) {
        return Err(Error::dim("hull vertex", dim, v.as_slice().len()));
    }
    let coords: Vec<usize> = (0..dim)
        .filter(|&c| point.as_slice()[c] != 0.0 || vertices.iter().any(|v| v.as_slice()[c] != 0.0))
        .collect();
    let e = coords.len();
    let n = k + 2 * e;
    let mut objective = vec![0.0; n];
    objective[k..].iter_mut().for_each(|v| *v = 1.0);
    let mut lp = LinearProgram::new(Sense::Min, objective);
    for (row, &c) in coords.iter().enumerate() {
        let mut coeffs = vec![0.0; n];
        for (j, v) in vertices.iter().enumerate() {
            coeffs[j] = v.as_slice()[c];
        }
        coeffs[k + row] = 1.0;
        coeffs[k + e + row] = -1.0;
        lp.add(coeffs, Relation::Eq, point.as_slice()[c]);
    }
    let mut simplex = vec![0.0; n];
    simplex[..k].iter_mut().for_each(|v| *v = 1.0);
    lp.add(simplex, Relation::Eq, 1.0);
    let sol = solve_lp(&lp)?;
    let alpha: Vec<f64> = if sol.is_optimal() {
        sol.x[..k].to_vec()
    } else {
        return Err(Error::MalformedLp(format!("hull program returned {:?}", sol.status)));
    };
    let residual = (0..dim)
        .map(|c| {
            let mixed: f64 = alpha.iter().zip(vertices).map(|(a, v)| a * v.as_slice()[c]).sum();
            (mixed - point.as_slice()[c]).abs()
        })
        .fold(0.0, f64::max);
    Ok(HullMembership {
        member: residual <= HULL_TOL,
        alpha,
        residual,
    })
}

/// Largest achievable minimum slack over mixtures, with a maximizer.
/// `None` when there are no constraints.
pub fn max_min_slack(profile: &ModificationProfile) -> Result<Option<(f64, Vec<f64>)>> {
    let k = profile.len();
    let j_count = profile.num_constraints();
    if j_count == 0 {
        return Ok(None);
    }
    // variables: alpha (k), tau+ , tau-
    let mut objective = vec![0.0; k + 2];
    objective[k] = 1.0;
    objective[k + 1] = -1.0;
    let mut lp = LinearProgram::new(Sense::Max, objective);
    for j in 0..j_count {
        let mut coeffs: Vec<f64> = profile
            .constraint_values
            .iter()
            .map(|row| row[j] - profile.thresholds[j])
            .collect();
        coeffs.push(-1.0);
        coeffs.push(1.0);
        lp.add(coeffs, Relation::Ge, 0.0);
    }
    let mut simplex = vec![1.0; k];
    simplex.extend([0.0, 0.0]);
    lp.add(simplex, Relation::Eq, 1.0);
    let sol = solve_lp(&lp)?;
    if !sol.is_optimal() {
        return Err(Error::MalformedLp(format!("max-min slack program returned {:?}", sol.status)));
    }
    let alpha = sol.x[..k].to_vec();
    let slack = profile
        .slacks(&alpha)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok(Some((slack, alpha)))
}

/// A feasible mixture with every weight at least `epsilon`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositiveMixture {
    pub epsilon: f64,
    pub alpha: Vec<f64>,
}

/// Searches the weight floors of [`EPSILON_SWEEP`] from largest to smallest.
/// The uniform mixture is preferred whenever it is feasible and meets the floor.
pub fn positive_feasible_mixture(profile: &ModificationProfile) -> Result<Option<PositiveMixture>> {
    let k = profile.len();
    let uniform = vec![1.0 / k as f64; k];
    let uniform_ok = profile
        .slacks(&uniform)
        .iter()
        .all(|&s| s >= -FEASIBILITY_TOL);
    for &eps in &EPSILON_SWEEP {
        if eps * k as f64 > 1.0 + 1e-12 {
            continue;
        }
        if uniform_ok && eps <= 1.0 / k as f64 {
            return Ok(Some(PositiveMixture {
                epsilon: eps,
                alpha: uniform,
            }));
        }
        // alpha = eps + beta with beta >= 0 and sum beta = 1 - k eps.
        let rows: Vec<(Vec<f64>, f64)> = (0..profile.num_constraints())
            .map(|j| {
                let coeffs: Vec<f64> = profile.constraint_values.iter().map(|row| row[j]).collect();
                let base: f64 = coeffs.iter().sum::<f64>() * eps;
                (coeffs, profile.thresholds[j] - base)
            })
            .collect();
        let mut lp = LinearProgram::new(Sense::Max, vec![0.0; k]);
        for (coeffs, rhs) in rows {
            lp.add(coeffs, Relation::Ge, rhs);
        }
        lp.add(vec![1.0; k], Relation::Eq, (1.0 - k as f64 * eps).max(0.0));
        let sol = solve_lp(&lp)?;
        if sol.is_optimal() {
            let alpha: Vec<f64> = sol.x.iter().map(|b| b + eps).collect();
            if profile.slacks(&alpha).iter().all(|&s| s >= -FEASIBILITY_TOL) {
                return Ok(Some(PositiveMixture { epsilon: eps, alpha }));
            }
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub player: usize,
    pub num_modifications: usize,
    /// A mixture with every constraint strictly slack exists.
    pub strictly_feasible: bool,
    pub max_min_slack: Option<f64>,
    pub strict_witness: Option<Vec<f64>>,
    /// Constraints whose value is the same for every deterministic modification.
    pub constant_rows: Vec<usize>,
    pub positive_mixture: Option<PositiveMixture>,
}

impl RegularityReport {
    pub fn has_constant_row(&self) -> bool {
        !self.constant_rows.is_empty()
    }
}

pub fn regularity_from_profile(profile: &ModificationProfile) -> Result<RegularityReport> {
    let (strictly_feasible, max_min, witness) = match max_min_slack(profile)? {
        None => (true, None, None),
        Some((slack, alpha)) => (slack > STRICT_TOL, Some(slack), Some(alpha)),
    };
    let constant_rows = (0..profile.num_constraints())
        .filter(|&j| {
            let (lo, hi) = profile
                .constraint_values
                .iter()
                .map(|row| row[j])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            hi - lo <= 1e-12 * (1.0 + hi.abs())
        })
        .collect();
    Ok(RegularityReport {
        player: profile.player,
        num_modifications: profile.len(),
        strictly_feasible,
        max_min_slack: max_min,
        strict_witness: if strictly_feasible { witness } else { None },
        constant_rows,
        positive_mixture: positive_feasible_mixture(profile)?,
    })
}

/// Regularity diagnostics of the best-modification program at `policy`.
pub fn check_lp_regularity(
    game: &ConstrainedMarkovGame,
    player: usize,
    policy: &MarkovPolicy,
    cap: u128,
) -> Result<RegularityReport> {
    regularity_from_profile(&ModificationProfile::new(game, player, policy, cap)?)
}
