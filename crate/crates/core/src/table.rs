//! Dense per-timestep tables and joint-action indexing.

use serde::{Deserialize, Serialize};

/// Dense table indexed by `(t, row, col)`, stored row-major.
///
/// Used for policies (`row` = state, `col` = joint action), occupancy
/// measures, reward and constraint signals, and modification tables
/// (`row` = `(state, own action)` cell, `col` = replacement action).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageArray {
    horizon: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl StageArray {
    pub fn zeros(horizon: usize, rows: usize, cols: usize) -> Self {
        StageArray {
            horizon,
            rows,
            cols,
            data: vec![0.0; horizon * rows * cols],
        }
    }

    pub fn from_fn(
        horizon: usize,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(horizon * rows * cols);
        for t in 0..horizon {
            for r in 0..rows {
                for c in 0..cols {
                    data.push(f(t, r, c));
                }
            }
        }
        StageArray {
            horizon,
            rows,
            cols,
            data,
        }
    }

    /// Wraps a flat buffer; returns `None` when the length does not match.
    pub fn from_vec(horizon: usize, rows: usize, cols: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == horizon * rows * cols).then_some(StageArray {
            horizon,
            rows,
            cols,
            data,
        })
    }

    #[inline]
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.horizon, self.rows, self.cols)
    }

    #[inline]
    pub fn index(&self, t: usize, r: usize, c: usize) -> usize {
        debug_assert!(t < self.horizon && r < self.rows && c < self.cols);
        (t * self.rows + r) * self.cols + c
    }

    #[inline]
    pub fn get(&self, t: usize, r: usize, c: usize) -> f64 {
        self.data[self.index(t, r, c)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, r: usize, c: usize, v: f64) {
        let i = self.index(t, r, c);
        self.data[i] = v;
    }

    #[inline]
    pub fn add(&mut self, t: usize, r: usize, c: usize, v: f64) {
        let i = self.index(t, r, c);
        self.data[i] += v;
    }

    pub fn row(&self, t: usize, r: usize) -> &[f64] {
        let start = self.index(t, r, 0);
        &self.data[start..start + self.cols]
    }

    pub fn row_mut(&mut self, t: usize, r: usize) -> &mut [f64] {
        let start = self.index(t, r, 0);
        &mut self.data[start..start + self.cols]
    }

    /// All entries at timestep `t`, `rows * cols` long.
    pub fn stage(&self, t: usize) -> &[f64] {
        let len = self.rows * self.cols;
        &self.data[t * len..(t + 1) * len]
    }

    pub fn stage_mut(&mut self, t: usize) -> &mut [f64] {
        let len = self.rows * self.cols;
        &mut self.data[t * len..(t + 1) * len]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Largest absolute entrywise difference; infinite when shapes differ.
    pub fn max_abs_diff(&self, other: &StageArray) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Nested `[t][row][col]` view, the layout used by the file formats.
    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.horizon)
            .map(|t| (0..self.rows).map(|r| self.row(t, r).to_vec()).collect())
            .collect()
    }
}

/// Joint action space `A = A^1 x ... x A^N`, enumerated row-major over player
/// indices (the last player's action varies fastest).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionSpace {
    sizes: Vec<usize>,
    strides: Vec<usize>,
    joint: usize,
}

impl ActionSpace {
    pub fn new(sizes: Vec<usize>) -> Self {
        let mut strides = vec![1; sizes.len()];
        for i in (0..sizes.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * sizes[i + 1];
        }
        let joint = sizes.iter().product();
        ActionSpace {
            sizes,
            strides,
            joint,
        }
    }

    #[inline]
    pub fn num_players(&self) -> usize {
        self.sizes.len()
    }

    #[inline]
    pub fn joint_len(&self) -> usize {
        self.joint
    }

    #[inline]
    pub fn size(&self, player: usize) -> usize {
        self.sizes[player]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Player `player`'s component of joint action `a`.
    #[inline]
    pub fn component(&self, a: usize, player: usize) -> usize {
        (a / self.strides[player]) % self.sizes[player]
    }

    /// Joint action `a` with player `player`'s component replaced by `b`.
    #[inline]
    pub fn with_component(&self, a: usize, player: usize, b: usize) -> usize {
        let stride = self.strides[player];
        a - self.component(a, player) * stride + b * stride
    }

    pub fn encode(&self, profile: &[usize]) -> usize {
        profile
            .iter()
            .zip(&self.strides)
            .map(|(a, s)| a * s)
            .sum()
    }

    pub fn decode(&self, a: usize) -> Vec<usize> {
        (0..self.sizes.len()).map(|i| self.component(a, i)).collect()
    }

    /// Joint actions whose `player` component is zero; each represents one
    /// profile `a^{-i}` of the other players.
    pub fn others(&self, player: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.joint).filter(move |&a| self.component(a, player) == 0)
    }
}
