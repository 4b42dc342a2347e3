//! Pellet-collection gridworld and its scripted expert.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRID: usize = 9;
pub const CELLS: usize = GRID * GRID;
pub const PELLETS: usize = 5;
pub const STEP_LIMIT: usize = 40;
/// Agent plane followed by pellet plane.
pub const OBS_DIM: usize = 2 * CELLS;
pub const N_ACTIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }
}

/// Indices of the nonzero entries of the one-hot observation, agent first.
pub type SparseObs = Vec<u16>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridWorld {
    agent: (usize, usize),
    pellets: Vec<(usize, usize)>,
    steps: usize,
}

impl GridWorld {
    /// Agent and pellets on distinct cells drawn uniformly from `seed`.
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = sample(&mut rng, CELLS, PELLETS + 1);
        let pos = |i: usize| (i / GRID, i % GRID);
        let mut it = cells.iter();
        let agent = pos(it.next().expect("sampled agent cell"));
        let pellets = it.map(pos).collect();
        GridWorld { agent, pellets, steps: 0 }
    }

    pub fn agent(&self) -> (usize, usize) {
        self.agent
    }

    pub fn pellets(&self) -> &[(usize, usize)] {
        &self.pellets
    }

    pub fn done(&self) -> bool {
        self.steps >= STEP_LIMIT || self.pellets.is_empty()
    }

    pub fn observation(&self) -> SparseObs {
        let cell = |(r, c): (usize, usize)| (r * GRID + c) as u16;
        let mut obs = Vec::with_capacity(1 + self.pellets.len());
        obs.push(cell(self.agent));
        obs.extend(self.pellets.iter().map(|&p| CELLS as u16 + cell(p)));
        obs
    }

    /// Apply `action`; moves into the wall leave the agent in place.
    /// Returns 1.0 when a pellet is collected.
    pub fn step(&mut self, action: Action) -> f64 {
        debug_assert!(!self.done(), "step on a finished episode");
        self.agent = moved(self.agent, action);
        self.steps += 1;
        match self.pellets.iter().position(|&p| p == self.agent) {
            Some(i) => {
                self.pellets.swap_remove(i);
                1.0
            }
            None => 0.0,
        }
    }
}

fn moved((r, c): (usize, usize), action: Action) -> (usize, usize) {
    match action {
        Action::Up => (r.saturating_sub(1), c),
        Action::Down => ((r + 1).min(GRID - 1), c),
        Action::Left => (r, c.saturating_sub(1)),
        Action::Right => (r, (c + 1).min(GRID - 1)),
    }
}

fn nearest_distance(pos: (usize, usize), pellets: &[(usize, usize)]) -> usize {
    pellets
        .iter()
        .map(|&(r, c)| pos.0.abs_diff(r) + pos.1.abs_diff(c))
        .min()
        .unwrap_or(0)
}

/// First action, in up/down/left/right order, that brings the agent one
/// step closer to its nearest pellet.
pub fn expert_action(world: &GridWorld) -> Action {
    let here = nearest_distance(world.agent, &world.pellets);
    Action::ALL
        .into_iter()
        .find(|&a| nearest_distance(moved(world.agent, a), &world.pellets) < here)
        .unwrap_or(Action::Up)
}

/// Behavioral cloning data: observation/action pairs from expert rollouts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub observations: Vec<SparseObs>,
    pub actions: Vec<u8>,
    pub episodes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Episode `i` of a dataset seeded with `seed` starts from `GridWorld::new(seed + i)`.
pub fn generate_expert_dataset(episodes: usize, seed: u64) -> Dataset {
    let mut data = Dataset { episodes, ..Dataset::default() };
    for i in 0..episodes as u64 {
        let mut world = GridWorld::new(seed.wrapping_add(i));
        while !world.done() {
            let action = expert_action(&world);
            data.observations.push(world.observation());
            data.actions.push(action as u8);
            world.step(action);
        }
    }
    data
}

/// Run one episode with `policy` choosing actions; returns total reward.
pub fn run_episode(seed: u64, mut policy: impl FnMut(&GridWorld) -> Action) -> f64 {
    let mut world = GridWorld::new(seed);
    let mut total = 0.0;
    while !world.done() {
        let a = policy(&world);
        total += world.step(a);
    }
    total
}

/// Uniform random action from `rng`.
pub fn random_action(rng: &mut impl Rng) -> Action {
    Action::from_index(rng.random_range(0..N_ACTIONS))
}
