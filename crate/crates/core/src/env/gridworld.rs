use serde::{Deserialize, Serialize};

use super::TabularMdp;
use crate::{Error, Result};

/// Grid coordinates; row 0 is the top row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

impl Cell {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridAction {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [GridAction::Up, GridAction::Down, GridAction::Left, GridAction::Right];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    pub goal: Cell,
    pub start: Cell,
}

impl GridLayout {
    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.col < self.width && cell.row < self.height
    }

    pub fn manhattan_to_goal(&self, index: usize) -> usize {
        let c = self.cell(index);
        c.col.abs_diff(self.goal.col) + c.row.abs_diff(self.goal.row)
    }

    /// Cell reached by `action` from `cell`; moves off the grid stay put.
    pub fn moved(&self, cell: Cell, action: GridAction) -> Cell {
        match action {
            GridAction::Up if cell.row > 0 => Cell::new(cell.col, cell.row - 1),
            GridAction::Down if cell.row + 1 < self.height => Cell::new(cell.col, cell.row + 1),
            GridAction::Left if cell.col > 0 => Cell::new(cell.col - 1, cell.row),
            GridAction::Right if cell.col + 1 < self.width => Cell::new(cell.col + 1, cell.row),
            _ => cell,
        }
    }
}

/// Deterministic four-action gridworld with a per-step penalty and an
/// absorbing goal that pays `goal_reward` for every step spent in it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gridworld {
    pub width: usize,
    pub height: usize,
    pub goal: Cell,
    pub start: Cell,
    pub step_penalty: f64,
    pub goal_reward: f64,
    pub horizon: usize,
}

impl Gridworld {
    pub const DEFAULT_HORIZON: usize = 20;

    /// Goal in the given cell; episodes start in the top-right corner.
    pub fn new(width: usize, height: usize, goal: Cell, step_penalty: f64, goal_reward: f64) -> Self {
        Self {
            width,
            height,
            goal,
            start: Cell::new(width.saturating_sub(1), 0),
            step_penalty,
            goal_reward,
            horizon: Self::DEFAULT_HORIZON,
        }
    }

    /// The 5x5 layout with the goal in the bottom-left corner.
    pub fn five_by_five() -> Self {
        Self::new(5, 5, Cell::new(0, 4), -0.01, 1.0)
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_start(mut self, start: Cell) -> Self {
        self.start = start;
        self
    }

    pub fn layout(&self) -> GridLayout {
        GridLayout {
            width: self.width,
            height: self.height,
            goal: self.goal,
            start: self.start,
        }
    }

    pub fn build(&self) -> Result<TabularMdp> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::config("width/height", "grid must be at least 2x2"));
        }
        let layout = self.layout();
        if !layout.contains(self.goal) {
            return Err(Error::GoalOutsideGrid {
                col: self.goal.col,
                row: self.goal.row,
                width: self.width,
                height: self.height,
            });
        }
        if !layout.contains(self.start) {
            return Err(Error::config("start", "start cell outside grid"));
        }
        let n = self.width * self.height;
        let na = GridAction::ALL.len();
        let goal = layout.index(self.goal);
        let mut transition = vec![0.0; n * na * n];
        let mut reward = vec![0.0; n * na];
        for s in 0..n {
            for (a, action) in GridAction::ALL.iter().enumerate() {
                let next = if s == goal {
                    goal
                } else {
                    layout.index(layout.moved(layout.cell(s), *action))
                };
                transition[(s * na + a) * n + next] = 1.0;
                reward[s * na + a] = if s == goal { self.goal_reward } else { self.step_penalty };
            }
        }
        let mut init = vec![0.0; n];
        init[layout.index(self.start)] = 1.0;
        Ok(TabularMdp::new(n, na, transition, reward, self.horizon, init)?.with_layout(layout))
    }
}

/// Builds a deterministic gridworld with the default horizon and a top-right
/// start cell.
pub fn make_gridworld(
    width: usize,
    height: usize,
    goal: Cell,
    step_penalty: f64,
    goal_reward: f64,
) -> Result<TabularMdp> {
    Gridworld::new(width, height, goal, step_penalty, goal_reward).build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_by_five_shape() {
        let mdp = Gridworld::five_by_five().build().unwrap();
        assert_eq!(mdp.num_states(), 25);
        assert_eq!(mdp.num_actions(), 4);
        assert!(mdp.is_deterministic());
        let layout = mdp.layout().unwrap();
        assert_eq!(layout.index(layout.goal), 20);
        assert_eq!(mdp.initial_dist()[4], 1.0);
    }

    #[test]
    fn two_by_two_rows_sum_to_one() {
        let mdp = make_gridworld(2, 2, Cell::new(0, 0), 0.0, 1.0).unwrap();
        for s in 0..4 {
            for a in 0..4 {
                assert!((mdp.row(s, a).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn walls_self_loop_and_goal_absorbs() {
        let mdp = Gridworld::five_by_five().build().unwrap();
        // top-right corner: up and right bounce
        assert_eq!(mdp.deterministic_next(4, GridAction::Up as usize), Some(4));
        assert_eq!(mdp.deterministic_next(4, GridAction::Right as usize), Some(4));
        assert_eq!(mdp.deterministic_next(4, GridAction::Left as usize), Some(3));
        for a in 0..4 {
            assert_eq!(mdp.deterministic_next(20, a), Some(20));
            assert_eq!(mdp.r(20, a), 1.0);
            assert_eq!(mdp.r(4, a), -0.01);
        }
    }

    #[test]
    fn rejects_goal_outside() {
        let err = make_gridworld(3, 3, Cell::new(3, 0), -0.01, 1.0).unwrap_err();
        assert!(matches!(err, Error::GoalOutsideGrid { .. }));
        assert!(make_gridworld(1, 3, Cell::new(0, 0), -0.01, 1.0).is_err());
    }
}
