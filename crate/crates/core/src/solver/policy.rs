use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The last `n` actions, encoded as a base-`|U|` integer with the oldest
/// action in the most significant digit. At time `t` the window holds
/// `min(n, t)` actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistoryWindow {
    pub n_actions: usize,
    pub memory: usize,
}

impl HistoryWindow {
    pub fn new(n_actions: usize, memory: usize) -> Self {
        Self { n_actions, memory }
    }

    pub fn len_at(&self, t: usize) -> usize {
        self.memory.min(t)
    }

    /// Number of distinct windows at time `t`.
    pub fn count(&self, t: usize) -> usize {
        self.n_actions.pow(self.len_at(t) as u32)
    }

    /// Window at `t + 1` after taking `u` at `t` from window `w`.
    pub fn shift(&self, t: usize, w: usize, u: usize) -> usize {
        (w * self.n_actions + u) % self.count(t + 1)
    }

    /// Actions in window `w` at time `t`, oldest first.
    pub fn decode(&self, t: usize, mut w: usize) -> Vec<usize> {
        let len = self.len_at(t);
        let mut out = vec![0; len];
        for slot in out.iter_mut().rev() {
            *slot = w % self.n_actions;
            w /= self.n_actions;
        }
        out
    }
}

/// Time-indexed randomized policy `q_t(u | v, w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    n_states: usize,
    n_actions: usize,
    memory: usize,
    /// `tables[t][(v * W_t + w) * n_actions + u]`
    tables: Vec<Vec<f64>>,
}

impl PolicyTable {
    pub fn uniform(n_states: usize, n_actions: usize, memory: usize, horizon: usize) -> Self {
        let win = HistoryWindow::new(n_actions, memory);
        let tables = (0..horizon)
            .map(|t| vec![1.0 / n_actions as f64; n_states * win.count(t) * n_actions])
            .collect();
        Self { n_states, n_actions, memory, tables }
    }

    /// Builds from raw per-time tables, checking shapes and row sums.
    pub fn from_tables(
        n_states: usize,
        n_actions: usize,
        memory: usize,
        tables: Vec<Vec<f64>>,
        tol: f64,
    ) -> Result<Self, Error> {
        let p = Self { n_states, n_actions, memory, tables };
        p.check(tol)?;
        Ok(p)
    }

    pub fn check(&self, tol: f64) -> Result<(), Error> {
        let win = self.window();
        for (t, table) in self.tables.iter().enumerate() {
            let expected = self.n_states * win.count(t) * self.n_actions;
            if table.len() != expected {
                return Err(Error::Dimension(format!(
                    "policy table at t={t} has {} entries, expected {expected}",
                    table.len()
                )));
            }
            for (ctx, row) in table.chunks(self.n_actions).enumerate() {
                if row.iter().any(|p| !(*p >= 0.0)) {
                    return Err(Error::Model(format!("policy row t={t} context {ctx} has a negative entry")));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > tol {
                    return Err(Error::Model(format!("policy row t={t} context {ctx} sums to {s}")));
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn horizon(&self) -> usize {
        self.tables.len()
    }

    pub fn window(&self) -> HistoryWindow {
        HistoryWindow::new(self.n_actions, self.memory)
    }

    pub fn table(&self, t: usize) -> &[f64] {
        &self.tables[t]
    }

    pub fn tables(&self) -> &[Vec<f64>] {
        &self.tables
    }

    pub(crate) fn table_mut(&mut self, t: usize) -> &mut Vec<f64> {
        &mut self.tables[t]
    }

    pub fn row(&self, t: usize, v: usize, w: usize) -> &[f64] {
        let start = (v * self.window().count(t) + w) * self.n_actions;
        &self.tables[t][start..start + self.n_actions]
    }

    /// Largest absolute entry-wise difference; infinite on shape mismatch.
    pub fn sup_distance(&self, other: &PolicyTable) -> f64 {
        if self.tables.len() != other.tables.len() {
            return f64::INFINITY;
        }
        let mut d: f64 = 0.0;
        for (a, b) in self.tables.iter().zip(&other.tables) {
            if a.len() != b.len() {
                return f64::INFINITY;
            }
            for (x, y) in a.iter().zip(b) {
                d = d.max((x - y).abs());
            }
        }
        d
    }

    /// The same policy over windows one action longer; the oldest action of
    /// the longer window is ignored.
    pub fn extend_memory(&self) -> PolicyTable {
        let old = self.window();
        let new = HistoryWindow::new(self.n_actions, self.memory + 1);
        let tables = (0..self.horizon())
            .map(|t| {
                let wn = new.count(t);
                let wo = old.count(t);
                let mut table = Vec::with_capacity(self.n_states * wn * self.n_actions);
                for v in 0..self.n_states {
                    for w in 0..wn {
                        table.extend_from_slice(self.row(t, v, w % wo));
                    }
                }
                table
            })
            .collect();
        PolicyTable { n_states: self.n_states, n_actions: self.n_actions, memory: self.memory + 1, tables }
    }
}
