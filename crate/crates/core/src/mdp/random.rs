use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{Mdp, MdpBuilder};
use crate::Result;

/// Shape of randomly generated test instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomMdpConfig {
    pub max_states: usize,
    pub num_actions: usize,
    pub max_horizon: usize,
    /// Each transition cost is drawn uniformly from this list.
    pub costs: Vec<f64>,
    pub gamma: f64,
}

impl Default for RandomMdpConfig {
    fn default() -> Self {
        RandomMdpConfig { max_states: 3, num_actions: 2, max_horizon: 3, costs: vec![0.0, 1.0], gamma: 1.0 }
    }
}

/// Header drawn once and shared by every table drawn against it.
#[derive(Debug, Clone, Copy)]
struct Shape {
    states: usize,
    horizon: usize,
}

fn draw_shape(rng: &mut impl Rng, cfg: &RandomMdpConfig) -> Shape {
    Shape { states: rng.random_range(1..=cfg.max_states), horizon: rng.random_range(1..=cfg.max_horizon) }
}

fn draw_tables(rng: &mut impl Rng, cfg: &RandomMdpConfig, shape: Shape) -> Result<Mdp> {
    let mut b = MdpBuilder::new(shape.states, cfg.num_actions).gamma(cfg.gamma).horizon(Some(shape.horizon));
    let mut all: Vec<usize> = (0..shape.states).collect();
    for s in 0..shape.states {
        for a in 0..cfg.num_actions {
            all.shuffle(rng);
            let support = rng.random_range(1..=shape.states);
            let weights: Vec<f64> = (0..support).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = weights.iter().sum();
            for (j, w) in weights.iter().enumerate() {
                let cost = cfg.costs[rng.random_range(0..cfg.costs.len())];
                b.add(s, a, all[j], w / total, cost);
            }
        }
    }
    b.build()
}

/// A random finite-horizon MDP with dense random supports.
pub fn random_mdp(rng: &mut impl Rng, cfg: &RandomMdpConfig) -> Result<Mdp> {
    let shape = draw_shape(rng, cfg);
    draw_tables(rng, cfg, shape)
}

/// `samples` random MDPs over one shared random header.
pub fn random_samples(rng: &mut impl Rng, cfg: &RandomMdpConfig, samples: usize) -> Result<Vec<Mdp>> {
    let shape = draw_shape(rng, cfg);
    (0..samples).map(|_| draw_tables(rng, cfg, shape)).collect()
}
