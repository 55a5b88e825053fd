//! Gridworld generators for the moving-obstacle and scouted static-obstacle
//! case studies.
//!
//! Cells are numbered row-major from the top-left: `cell = row * width + col`.
//! Actions are `N, S, E, W, stay`; `N` decreases the row.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::mdp::{LabeledMdp, Letter, Row, StateSpace};

pub const ACTIONS: [&str; 5] = ["N", "S", "E", "W", "stay"];
pub const LEVELS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
pub const CRASH: usize = 0;
pub const GOAL: usize = 1;

fn default_slip() -> f64 {
    0.1
}

fn default_scout_range() -> usize {
    2
}

fn default_max_uncertain() -> usize {
    4
}

fn default_halt() -> bool {
    true
}

fn default_stay() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovingObstacle {
    /// Cells the obstacle roams; moves go between 4-adjacent members.
    pub cells: Vec<usize>,
    pub start: usize,
    /// Probability of staying put; the rest splits evenly over neighbours.
    #[serde(default = "default_stay")]
    pub stay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertainCell {
    pub cell: usize,
    /// Prior obstacle probability, one of [`LEVELS`].
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub static_obstacles: Vec<usize>,
    pub goal_cells: Vec<usize>,
    pub agent_start: usize,
    /// Mass sent to each forward diagonal on a move.
    #[serde(default = "default_slip")]
    pub slip: f64,
    #[serde(default)]
    pub moving_obstacle: Option<MovingObstacle>,
    #[serde(default)]
    pub uncertain_cells: Vec<UncertainCell>,
    /// Chebyshev radius within which uncertain cells get resolved.
    #[serde(default = "default_scout_range")]
    pub scout_range: usize,
    #[serde(default = "default_max_uncertain")]
    pub max_uncertain: usize,
    /// The agent stops once it stands on a goal cell.
    #[serde(default = "default_halt")]
    pub halt_at_goal: bool,
}

/// A generated MDP with its start state.
#[derive(Debug, Clone)]
pub struct GridMdp {
    pub mdp: LabeledMdp,
    pub initial: usize,
}

impl GridSpec {
    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    /// `(col, row)` of a cell.
    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.width, cell / self.width)
    }

    fn cell_at(&self, col: isize, row: isize) -> Option<usize> {
        (col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height)
            .then(|| row as usize * self.width + col as usize)
    }

    fn check_cell(&self, cell: usize, what: &str) -> Result<(), Error> {
        if cell >= self.n_cells() {
            return Err(Error::Scenario(format!(
                "{what} cell {cell} is outside the {}x{} grid",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Scenario("grid must have at least one cell".into()));
        }
        if !(0.0..0.5).contains(&self.slip) {
            return Err(Error::Scenario(format!("slip must lie in [0, 0.5), got {}", self.slip)));
        }
        self.check_cell(self.agent_start, "agent start")?;
        for &c in &self.static_obstacles {
            self.check_cell(c, "static obstacle")?;
        }
        for &c in &self.goal_cells {
            self.check_cell(c, "goal")?;
        }
        if self.static_obstacles.contains(&self.agent_start) {
            return Err(Error::Scenario("agent starts on a static obstacle".into()));
        }
        if let Some(obs) = &self.moving_obstacle {
            if obs.cells.is_empty() {
                return Err(Error::Scenario("moving obstacle has no cells to roam".into()));
            }
            for &c in &obs.cells {
                self.check_cell(c, "moving obstacle")?;
            }
            if !obs.cells.contains(&obs.start) {
                return Err(Error::Scenario("moving obstacle starts outside its roaming set".into()));
            }
            if obs.start == self.agent_start {
                return Err(Error::Scenario("agent starts on the moving obstacle".into()));
            }
            if !(0.0..=1.0).contains(&obs.stay) {
                return Err(Error::Scenario(format!("obstacle stay probability {} is not in [0, 1]", obs.stay)));
            }
        }
        for u in &self.uncertain_cells {
            self.check_cell(u.cell, "uncertain")?;
            level_index(u.level)?;
            if u.cell == self.agent_start && level_index(u.level)? == LEVELS.len() - 1 {
                return Err(Error::Scenario("agent starts on a known obstacle".into()));
            }
        }
        Ok(())
    }

    /// Successor distribution of the agent alone. An intended move off the
    /// grid stays put; off-grid slip targets are dropped and the row
    /// renormalized.
    pub fn agent_row(&self, cell: usize, action: usize) -> Row {
        if self.halt_at_goal && self.goal_cells.contains(&cell) {
            return vec![(cell, 1.0)];
        }
        let (c, r) = self.coords(cell);
        let (c, r) = (c as isize, r as isize);
        let (dc, dr) = match ACTIONS[action] {
            "N" => (0, -1),
            "S" => (0, 1),
            "E" => (1, 0),
            "W" => (-1, 0),
            _ => return vec![(cell, 1.0)],
        };
        let Some(target) = self.cell_at(c + dc, r + dr) else {
            return vec![(cell, 1.0)];
        };
        // Forward diagonals: the perpendicular offsets added to the move.
        let (pc, pr) = (dr, dc);
        let mut out: Vec<(usize, f64)> = vec![(target, 1.0 - 2.0 * self.slip)];
        if self.slip > 0.0 {
            for s in [1, -1] {
                if let Some(d) = self.cell_at(c + dc + s * pc, r + dr + s * pr) {
                    out.push((d, self.slip));
                }
            }
        }
        let total: f64 = out.iter().map(|(_, p)| p).sum();
        out.iter_mut().for_each(|(_, p)| *p /= total);
        out
    }

    fn obstacle_row(&self, obs: &MovingObstacle, at: usize) -> Vec<(usize, f64)> {
        let (c, r) = self.coords(obs.cells[at]);
        let neighbours: Vec<usize> = obs
            .cells
            .iter()
            .enumerate()
            .filter(|(_, &cell)| {
                let (c2, r2) = self.coords(cell);
                c.abs_diff(c2) + r.abs_diff(r2) == 1
            })
            .map(|(i, _)| i)
            .collect();
        if neighbours.is_empty() {
            return vec![(at, 1.0)];
        }
        let mut out = vec![(at, obs.stay)];
        let share = (1.0 - obs.stay) / neighbours.len() as f64;
        out.extend(neighbours.into_iter().map(|i| (i, share)));
        out.retain(|(_, p)| *p > 0.0);
        out
    }

    fn within_range(&self, a: usize, b: usize) -> bool {
        let (c1, r1) = self.coords(a);
        let (c2, r2) = self.coords(b);
        c1.abs_diff(c2).max(r1.abs_diff(r2)) <= self.scout_range
    }
}

fn level_index(level: f64) -> Result<usize, Error> {
    LEVELS
        .iter()
        .position(|l| (l - level).abs() < 1e-9)
        .ok_or_else(|| Error::Scenario(format!("level {level} is not one of {LEVELS:?}")))
}

fn cell_names(spec: &GridSpec) -> Vec<String> {
    (0..spec.n_cells()).map(|c| c.to_string()).collect()
}

fn props() -> Vec<String> {
    vec!["crash".into(), "goal".into()]
}

/// Assembles `p((e', f') | (e, f), u) = p_agent(f' | f, u) · p_env(e' | e, f)`.
fn assemble(
    spec: &GridSpec,
    expensive: Vec<String>,
    env: impl Fn(usize, usize) -> Vec<(usize, f64)>,
    crash: impl Fn(usize, usize) -> bool,
    initial_env: usize,
) -> Result<GridMdp, Error> {
    let n_cells = spec.n_cells();
    let states = StateSpace::new(expensive, cell_names(spec))?;
    let agent: Vec<Row> = (0..n_cells)
        .flat_map(|f| (0..ACTIONS.len()).map(move |u| (f, u)))
        .map(|(f, u)| spec.agent_row(f, u))
        .collect();
    let mut rows = Vec::with_capacity(states.len() * ACTIONS.len());
    let mut labels = Vec::with_capacity(states.len());
    for x in 0..states.len() {
        let (e, f) = states.decompose(x);
        let env_row = env(e, f);
        for u in 0..ACTIONS.len() {
            let mut row = Vec::with_capacity(env_row.len() * 3);
            for &(e2, pe) in &env_row {
                for &(f2, pa) in &agent[f * ACTIONS.len() + u] {
                    row.push((states.compose(e2, f2), pe * pa));
                }
            }
            rows.push(row);
        }
        let mut label = Letter::EMPTY;
        if crash(e, f) {
            label = label.with(CRASH);
        }
        if spec.goal_cells.contains(&f) {
            label = label.with(GOAL);
        }
        labels.push(label);
    }
    let initial = states.compose(initial_env, spec.agent_start);
    let actions = ACTIONS.iter().map(|a| a.to_string()).collect();
    let mdp = LabeledMdp::checked(states, actions, props(), rows, labels)?;
    Ok(GridMdp { mdp, initial })
}

/// Agent cell is free, obstacle cell is expensive. `crash` holds on static
/// obstacles and where agent and obstacle share a cell.
pub fn build_moving_obstacle(spec: &GridSpec) -> Result<GridMdp, Error> {
    spec.validate()?;
    let obs = spec
        .moving_obstacle
        .as_ref()
        .ok_or_else(|| Error::Scenario("moving-obstacle scenario needs a `moving_obstacle` entry".into()))?;
    let start = obs.cells.iter().position(|&c| c == obs.start).expect("validated");
    let names = obs.cells.iter().map(|c| format!("obs{c}")).collect();
    let env_rows: Vec<Vec<(usize, f64)>> = (0..obs.cells.len()).map(|i| spec.obstacle_row(obs, i)).collect();
    assemble(
        spec,
        names,
        |e, _| env_rows[e].clone(),
        |e, f| spec.static_obstacles.contains(&f) || obs.cells[e] == f,
        start,
    )
}

/// Agent cell is free, the vector of obstacle levels is expensive. A level
/// strictly between 0 and 1 resolves to 1 with its own probability (else 0)
/// once the agent is within scouting range; resolved levels never change.
pub fn build_static_uncertain(spec: &GridSpec) -> Result<GridMdp, Error> {
    spec.validate()?;
    let k = spec.uncertain_cells.len();
    if k == 0 {
        return Err(Error::Scenario("static-uncertain scenario needs at least one uncertain cell".into()));
    }
    if k > spec.max_uncertain {
        return Err(Error::Scenario(format!(
            "{k} uncertain cells exceed the cap of {} ({} level vectors)",
            spec.max_uncertain,
            LEVELS.len().pow(k as u32)
        )));
    }
    let top = LEVELS.len() - 1;
    let n_env = LEVELS.len().pow(k as u32);
    let digits = |mut e: usize| {
        let mut d = vec![0; k];
        for slot in d.iter_mut().rev() {
            *slot = e % LEVELS.len();
            e /= LEVELS.len();
        }
        d
    };
    let encode = |d: &[usize]| d.iter().fold(0, |acc, &x| acc * LEVELS.len() + x);
    let names = (0..n_env)
        .map(|e| digits(e).iter().map(|&i| LEVELS[i].to_string()).collect::<Vec<_>>().join("/"))
        .collect();
    let initial_digits: Vec<usize> =
        spec.uncertain_cells.iter().map(|u| level_index(u.level)).collect::<Result<_, _>>()?;
    let env = |e: usize, f: usize| {
        let mut out = vec![(digits(e), 1.0)];
        for (j, u) in spec.uncertain_cells.iter().enumerate() {
            if !spec.within_range(f, u.cell) {
                continue;
            }
            let mut next = Vec::with_capacity(out.len() * 2);
            for (d, p) in out {
                let level = d[j];
                if level == 0 || level == top {
                    next.push((d, p));
                    continue;
                }
                let o = LEVELS[level];
                let mut hit = d.clone();
                hit[j] = top;
                let mut miss = d;
                miss[j] = 0;
                next.push((hit, p * o));
                next.push((miss, p * (1.0 - o)));
            }
            out = next;
        }
        out.into_iter().map(|(d, p)| (encode(&d), p)).collect()
    };
    let crash = |e: usize, f: usize| {
        spec.static_obstacles.contains(&f)
            || spec.uncertain_cells.iter().zip(digits(e)).any(|(u, l)| u.cell == f && l == top)
    };
    assemble(spec, names, env, crash, encode(&initial_digits))
}

/// The 5×7 moving-obstacle grid: a wall in the middle column with an
/// obstacle patrolling the gap below it.
pub fn fig3a() -> GridSpec {
    GridSpec {
        width: 5,
        height: 7,
        static_obstacles: vec![7, 12, 17],
        goal_cells: vec![30],
        agent_start: 34,
        slip: default_slip(),
        moving_obstacle: Some(MovingObstacle { cells: vec![22, 27, 32], start: 27, stay: default_stay() }),
        uncertain_cells: Vec::new(),
        scout_range: default_scout_range(),
        max_uncertain: default_max_uncertain(),
        halt_at_goal: true,
    }
}

/// Reduced Mars map, 7×5. A wall splits a one-row northern corridor with a
/// single low-risk cell from a two-row southern corridor with two
/// higher-risk cells.
pub fn mars_scaled() -> GridSpec {
    let w = 7;
    GridSpec {
        width: w,
        height: 5,
        static_obstacles: (1..=2).flat_map(|r| (1..=5).map(move |c| r * w + c)).collect(),
        goal_cells: vec![2 * w + 6],
        agent_start: 2 * w,
        slip: 0.0,
        moving_obstacle: None,
        uncertain_cells: vec![
            UncertainCell { cell: 3, level: 0.2 },
            UncertainCell { cell: 3 * w + 3, level: 0.4 },
            UncertainCell { cell: 4 * w + 3, level: 0.4 },
        ],
        scout_range: 2,
        max_uncertain: default_max_uncertain(),
        halt_at_goal: true,
    }
}

/// Cells of the northern (sparse) and southern (dense) corridors of
/// [`mars_scaled`].
pub fn mars_regions(spec: &GridSpec) -> (Vec<usize>, Vec<usize>) {
    let w = spec.width;
    let north = (1..w - 1).collect();
    let south = (3..5).flat_map(|r| (1..w - 1).map(move |c| r * w + c)).collect();
    (north, south)
}
