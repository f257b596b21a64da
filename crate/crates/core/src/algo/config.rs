use crate::par::Execution;
use serde::{Deserialize, Serialize};

/// Hyperparameters for one learning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    /// Weight of the policy-entropy bonus in the PPO objective.
    pub entropy_weight: f64,
    /// PPO ratio clip.
    pub clip_epsilon: f64,
    /// State-action pairs drawn from each side per discriminator update.
    pub pair_batch: usize,
    pub disc_updates_per_episode: usize,
    /// PPO passes over the episode.
    pub gen_updates_per_episode: usize,
    pub minibatch_size: usize,
    pub pool_capacity_pairs: usize,
    pub gae_lambda: f64,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub disc_lr: f64,
    pub hidden_sizes: Vec<usize>,
    pub max_grad_norm: f64,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            entropy_weight: 0.01,
            clip_epsilon: 0.09,
            pair_batch: 256,
            disc_updates_per_episode: 3,
            gen_updates_per_episode: 9,
            minibatch_size: 256,
            pool_capacity_pairs: 2000,
            gae_lambda: 0.95,
            policy_lr: 3e-4,
            value_lr: 3e-4,
            disc_lr: 1e-3,
            hidden_sizes: vec![64, 64],
            max_grad_norm: 0.5,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("clip_epsilon", self.clip_epsilon),
            ("policy_lr", self.policy_lr),
            ("value_lr", self.value_lr),
            ("disc_lr", self.disc_lr),
            ("max_grad_norm", self.max_grad_norm),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(format!("gae_lambda must lie in [0, 1], got {}", self.gae_lambda));
        }
        if self.entropy_weight.is_nan() || self.entropy_weight < 0.0 {
            return Err("entropy_weight must be non-negative".into());
        }
        for (name, v) in [
            ("pair_batch", self.pair_batch),
            ("minibatch_size", self.minibatch_size),
            ("pool_capacity_pairs", self.pool_capacity_pairs),
        ] {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.hidden_sizes.contains(&0) {
            return Err("hidden layer sizes must be positive".into());
        }
        Ok(())
    }
}
