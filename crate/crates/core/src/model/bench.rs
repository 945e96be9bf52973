//! Parameterised grid-world benchmarks.
//!
//! Movement is deterministic: moving into a wall leaves the agent in place.
//! Every non-absorbing step costs 1 and the goal (and, for navigation, the
//! crash states) are absorbing.

use std::collections::BTreeSet;

use super::{Choice, Labels, Mdp, Pomdp};
use crate::error::{Error, Result};

const MOVES: [(&str, i64, i64); 4] = [("north", 0, -1), ("east", 1, 0), ("south", 0, 1), ("west", -1, 0)];

fn action_names() -> Vec<String> {
    MOVES.iter().map(|m| m.0.to_string()).collect()
}

/// Cell coordinates of each state of a maze or grid benchmark, for display.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<(usize, usize)>,
}

impl GridLayout {
    pub fn maze(c: usize) -> Self {
        let mut cells: Vec<(usize, usize)> = (0..5).map(|x| (x, 0)).collect();
        for y in 1..=c + 1 {
            cells.extend([0, 2, 4].map(|x| (x, y)));
        }
        GridLayout {
            width: 5,
            height: c + 2,
            cells,
        }
    }

    pub fn grid(c: usize) -> Self {
        GridLayout {
            width: c,
            height: c,
            cells: (0..c * c).map(|i| (i % c, i / c)).collect(),
        }
    }

    fn index_of(&self, x: i64, y: i64) -> Option<usize> {
        if x < 0 || y < 0 {
            return None;
        }
        self.cells.iter().position(|&(cx, cy)| cx as i64 == x && cy as i64 == y)
    }
}

fn uniform_over(states: impl Iterator<Item = usize>) -> Vec<(usize, f64)> {
    let states: Vec<usize> = states.collect();
    let p = 1.0 / states.len() as f64;
    states.into_iter().map(|s| (s, p)).collect()
}

fn walk_model(layout: &GridLayout, goal: usize, obs_names: &[&str], obs: Vec<usize>) -> Result<Pomdp> {
    let n = layout.cells.len();
    let choices = (0..n)
        .map(|s| {
            let (x, y) = layout.cells[s];
            MOVES
                .iter()
                .enumerate()
                .map(|(a, &(_, dx, dy))| {
                    let target = if s == goal {
                        s
                    } else {
                        layout.index_of(x as i64 + dx, y as i64 + dy).unwrap_or(s)
                    };
                    Choice {
                        action: a,
                        successors: vec![(target, 1.0)],
                        reward: if s == goal { 0.0 } else { 1.0 },
                    }
                })
                .collect()
        })
        .collect();
    let mut labels = Labels::new();
    labels.insert("goal".into(), BTreeSet::from([goal]));
    let mdp = Mdp::new(
        (0..n).map(|i| format!("s{i}")).collect(),
        action_names(),
        choices,
        uniform_over((0..n).filter(|&s| s != goal)),
        labels,
    )?;
    Pomdp::new(mdp, obs_names.iter().map(|s| s.to_string()).collect(), obs)
}

/// Maze(c): a five-cell corridor on top with three dead-end shafts of depth
/// `c + 1`; the goal sits at the bottom of the middle shaft. 3c + 8 states,
/// 7 observations given by the wall configuration.
pub fn gen_maze(c: usize) -> Result<Pomdp> {
    if c < 1 {
        return Err(Error::Invalid(format!("maze size must be at least 1, got {c}")));
    }
    let layout = GridLayout::maze(c);
    let goal = layout.index_of(2, c as i64 + 1).expect("goal cell exists");
    const NAMES: [&str; 7] = ["nw", "hall", "junction", "ne", "shaft", "deadend", "goal"];
    let obs = layout
        .cells
        .iter()
        .enumerate()
        .map(|(s, &(x, y))| match (x, y) {
            _ if s == goal => 6,
            (0, 0) => 0,
            (1, 0) | (3, 0) => 1,
            (2, 0) => 2,
            (4, 0) => 3,
            (_, y) if y <= c => 4,
            _ => 5,
        })
        .collect();
    walk_model(&layout, goal, &NAMES, obs)
}

/// Grid(c): a c×c room where the agent only learns whether it is at the goal
/// in the bottom-right corner.
pub fn gen_grid(c: usize) -> Result<Pomdp> {
    if c < 2 {
        return Err(Error::Invalid(format!("grid size must be at least 2, got {c}")));
    }
    let layout = GridLayout::grid(c);
    let goal = c * c - 1;
    let obs = (0..c * c).map(|s| usize::from(s == goal)).collect();
    walk_model(&layout, goal, &["plain", "goal"], obs)
}

/// Navigation(c): an agent crosses a c×c grid from the top-left to the
/// bottom-right corner while a single obstacle wanders uniformly at random
/// among its free neighbouring cells. Static obstacles occupy the cells with
/// both coordinates ≡ 1 (mod 3), except start and goal. The agent observes
/// the occupancy of its eight neighbours (walls count as occupied).
///
/// State `agent * c² + obstacle`; c⁴ states and 256 observations.
pub fn gen_navigation(c: usize) -> Result<Pomdp> {
    if c < 2 {
        return Err(Error::Invalid(format!("navigation size must be at least 2, got {c}")));
    }
    let cells = c * c;
    let goal = cells - 1;
    let coord = |i: usize| ((i % c) as i64, (i / c) as i64);
    let cell = |x: i64, y: i64| (x >= 0 && y >= 0 && x < c as i64 && y < c as i64).then(|| y as usize * c + x as usize);
    let is_static: Vec<bool> = (0..cells)
        .map(|i| {
            let (x, y) = coord(i);
            x % 3 == 1 && y % 3 == 1 && i != 0 && i != goal
        })
        .collect();
    let obstacle_moves: Vec<Vec<usize>> = (0..cells)
        .map(|o| {
            let (x, y) = coord(o);
            let next: Vec<usize> = MOVES
                .iter()
                .filter_map(|&(_, dx, dy)| cell(x + dx, y + dy))
                .filter(|&t| !is_static[t])
                .collect();
            if next.is_empty() {
                vec![o]
            } else {
                next
            }
        })
        .collect();

    let n = cells * cells;
    let state = |agent: usize, obstacle: usize| agent * cells + obstacle;
    let crashed = |agent: usize, obstacle: usize| is_static[agent] || agent == obstacle;
    let mut choices = Vec::with_capacity(n);
    let mut obs = Vec::with_capacity(n);
    let mut crash = BTreeSet::new();
    let mut at_goal = BTreeSet::new();
    for agent in 0..cells {
        for obstacle in 0..cells {
            let s = state(agent, obstacle);
            let absorbing = crashed(agent, obstacle) || agent == goal;
            if crashed(agent, obstacle) {
                crash.insert(s);
            } else if agent == goal {
                at_goal.insert(s);
            }
            let (ax, ay) = coord(agent);
            let cs: Vec<Choice> = MOVES
                .iter()
                .enumerate()
                .map(|(a, &(_, dx, dy))| {
                    if absorbing {
                        return Choice {
                            action: a,
                            successors: vec![(s, 1.0)],
                            reward: 0.0,
                        };
                    }
                    let next_agent = cell(ax + dx, ay + dy).unwrap_or(agent);
                    let moves = &obstacle_moves[obstacle];
                    let p = 1.0 / moves.len() as f64;
                    Choice {
                        action: a,
                        successors: moves.iter().map(|&o| (state(next_agent, o), p)).collect(),
                        reward: 1.0,
                    }
                })
                .collect();
            choices.push(cs);

            const NEIGHBOURS: [(i64, i64); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];
            let bits = NEIGHBOURS.iter().enumerate().fold(0usize, |acc, (k, &(dx, dy))| {
                let occupied = match cell(ax + dx, ay + dy) {
                    None => true,
                    Some(t) => is_static[t] || t == obstacle,
                };
                acc | (usize::from(occupied) << (7 - k))
            });
            obs.push(bits);
        }
    }
    let mut labels = Labels::new();
    labels.insert("crash".into(), crash);
    labels.insert("goal".into(), at_goal);
    let init = uniform_over((1..cells).filter(|&o| !is_static[o]).map(|o| state(0, o)));
    let mdp = Mdp::new((0..n).map(|i| format!("s{i}")).collect(), action_names(), choices, init, labels)?;
    Pomdp::new(mdp, (0..256).map(|b| format!("b{b:08b}")).collect(), obs)
}
