//! One agent's actor, critic and discriminator.

use super::config::TrainConfig;
use super::gae::{compute_gae, normalize};
use super::trajectory::{AgentKind, DemoSet, Trajectory, TrajectoryPool};
use super::AlgoError;
use crate::nn::{adam_step, log_softmax, sigmoid, AdamConfig, AdamState, Gradients, Head, Mlp};
use crate::world::ActionId;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Discriminator outputs are clamped to `[D_CLAMP, 1 - D_CLAMP]` before any log.
pub const D_CLAMP: f64 = 1e-6;

pub fn clamp_probability(d: f64) -> f64 {
    d.clamp(D_CLAMP, 1.0 - D_CLAMP)
}

/// Adversarial reward `-ln(1 - D)` for a discriminator output `D`.
pub fn gail_reward(d: f64) -> f64 {
    -(1.0 - clamp_probability(d)).ln()
}

/// Discriminator input: observation features followed by a one-hot action.
fn disc_input(agent: AgentKind, obs: &[f64], action: ActionId, buf: &mut Vec<f64>) {
    agent.scale_obs(obs, buf);
    buf.extend((0..ActionId::COUNT).map(|a| if a == action.index() { 1.0 } else { 0.0 }));
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSample {
    pub action: ActionId,
    pub log_prob: f64,
    pub value: f64,
}

/// Flattened inputs for a PPO update.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoBatch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<ActionId>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoBatch {
    /// Advantages from the trajectory's discriminator rewards. Failures and
    /// goal arrival bootstrap from zero; a step-limit cut-off bootstraps from
    /// the critic.
    pub fn from_trajectory(traj: &Trajectory, gamma: f64, gae_lambda: f64) -> Self {
        let rewards: Vec<f64> = traj.steps.iter().map(|s| s.disc_reward).collect();
        let values: Vec<f64> = traj.steps.iter().map(|s| s.value).collect();
        let bootstrap = if traj.term_reason.is_truncation() { traj.bootstrap_value } else { 0.0 };
        let (advantages, returns) = compute_gae(&rewards, &values, bootstrap, gamma, gae_lambda);
        Self {
            obs: traj.steps.iter().map(|s| s.obs.clone()).collect(),
            actions: traj.steps.iter().map(|s| s.action).collect(),
            old_log_probs: traj.steps.iter().map(|s| s.log_prob).collect(),
            advantages,
            returns,
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Averages over the last PPO pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub surrogate: f64,
    pub entropy: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentLearner {
    pub agent: AgentKind,
    pub policy: Mlp,
    pub value: Mlp,
    pub discriminator: Mlp,
    pub policy_opt: AdamState,
    pub value_opt: AdamState,
    pub disc_opt: AdamState,
    pub demos: DemoSet,
    pub pool: TrajectoryPool,
}

impl AgentLearner {
    pub fn new<R: Rng + ?Sized>(
        demos: DemoSet,
        config: &TrainConfig,
        rng: &mut R,
    ) -> Result<Self, AlgoError> {
        let agent = demos.agent();
        let sizes = |input: usize, output: usize| {
            let mut s = vec![input];
            s.extend(&config.hidden_sizes);
            s.push(output);
            s
        };
        let policy = Mlp::init(&sizes(agent.obs_dim(), ActionId::COUNT), Head::Softmax, 0.01, rng)?;
        let value = Mlp::init(&sizes(agent.obs_dim(), 1), Head::Scalar, 1.0, rng)?;
        let discriminator =
            Mlp::init(&sizes(agent.obs_dim() + ActionId::COUNT, 1), Head::Sigmoid, 1.0, rng)?;
        Ok(Self {
            agent,
            policy_opt: AdamState::new(&policy, AdamConfig::with_lr(config.policy_lr)),
            value_opt: AdamState::new(&value, AdamConfig::with_lr(config.value_lr)),
            disc_opt: AdamState::new(&discriminator, AdamConfig::with_lr(config.disc_lr)),
            policy,
            value,
            discriminator,
            pool: TrajectoryPool::new(agent, config.pool_capacity_pairs),
            demos,
        })
    }

    fn check_obs(&self, obs: &[f64]) -> Result<(), AlgoError> {
        if obs.len() != self.agent.obs_dim() {
            return Err(AlgoError::ObservationDim { agent: self.agent, expected: self.agent.obs_dim(), got: obs.len() });
        }
        Ok(())
    }

    fn policy_logits(&self, obs: &[f64]) -> Result<Vec<f64>, AlgoError> {
        self.check_obs(obs)?;
        let mut x = Vec::new();
        self.agent.scale_obs(obs, &mut x);
        let (_, cache) = self.policy.forward(&x)?;
        let logits = cache.raw().to_vec();
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(AlgoError::NonFinite("policy output"));
        }
        Ok(logits)
    }

    pub fn action_probs(&self, obs: &[f64]) -> Result<Vec<f64>, AlgoError> {
        Ok(log_softmax(&self.policy_logits(obs)?).into_iter().map(f64::exp).collect())
    }

    pub fn state_value(&self, obs: &[f64]) -> Result<f64, AlgoError> {
        self.check_obs(obs)?;
        let mut x = Vec::new();
        self.agent.scale_obs(obs, &mut x);
        let v = self.value.predict(&x)?[0];
        if !v.is_finite() {
            return Err(AlgoError::NonFinite("value output"));
        }
        Ok(v)
    }

    /// Samples from the categorical policy.
    pub fn select_action<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<ActionSample, AlgoError> {
        let logp = log_softmax(&self.policy_logits(obs)?);
        let action = sample_categorical(&logp, rng);
        Ok(ActionSample { action, log_prob: logp[action.index()], value: self.state_value(obs)? })
    }

    /// Most probable action; ties go to the lowest index.
    pub fn greedy_action(&self, obs: &[f64]) -> Result<ActionId, AlgoError> {
        let logits = self.policy_logits(obs)?;
        let best = logits
            .iter()
            .enumerate()
            .fold(0, |best, (i, &v)| if v > logits[best] { i } else { best });
        Ok(ActionId::new(best).expect("five logits"))
    }

    /// Clamped discriminator output for one pair.
    pub fn discriminator_output(&self, obs: &[f64], action: ActionId) -> Result<f64, AlgoError> {
        self.check_obs(obs)?;
        let mut x = Vec::new();
        disc_input(self.agent, obs, action, &mut x);
        Ok(clamp_probability(self.discriminator.predict(&x)?[0]))
    }

    pub fn discriminator_reward(&self, obs: &[f64], action: ActionId) -> Result<f64, AlgoError> {
        Ok(gail_reward(self.discriminator_output(obs, action)?))
    }

    /// One Adam step pushing D towards 0 on the agent's pairs and towards 1 on
    /// expert pairs. Returns `mean_agent ln D + mean_expert ln(1 - D)` before
    /// the step.
    ///
    /// The step follows the cross-entropy gradient (`-ln(1 - D)` on agent pairs,
    /// `-ln D` on expert pairs). It has the same minimiser as the returned loss,
    /// but its gradient stays large when D is confidently wrong, where the
    /// returned loss's own gradient vanishes.
    pub fn update_discriminator(
        &mut self,
        agent_pairs: &[(&[f64], ActionId)],
        expert_pairs: &[(&[f64], ActionId)],
        config: &TrainConfig,
    ) -> Result<f64, AlgoError> {
        if agent_pairs.is_empty() {
            return Err(AlgoError::EmptyAgentSample);
        }
        if expert_pairs.is_empty() {
            return Err(AlgoError::EmptyDemoSet);
        }
        for (o, _) in agent_pairs.iter().chain(expert_pairs) {
            self.check_obs(o)?;
        }
        let n_agent = agent_pairs.len() as f64;
        let n_expert = expert_pairs.len() as f64;
        let total = agent_pairs.len() + expert_pairs.len();
        let agent = self.agent;
        let disc = &self.discriminator;
        let (grads, loss) = Gradients::accumulate(disc, config.execution, total, |i, g| {
            let (is_agent, (obs, action)) = if i < agent_pairs.len() {
                (true, agent_pairs[i])
            } else {
                (false, expert_pairs[i - agent_pairs.len()])
            };
            let mut x = Vec::new();
            disc_input(agent, obs, action, &mut x);
            let (_, cache) = disc.forward(&x).expect("checked dims");
            let d = sigmoid(cache.raw()[0]);
            // d/dz -ln(1 - σ(z)) = σ ; d/dz -ln σ(z) = σ - 1
            let (loss, dz) = if is_agent {
                (clamp_probability(d).ln() / n_agent, d / n_agent)
            } else {
                ((1.0 - clamp_probability(d)).ln() / n_expert, (d - 1.0) / n_expert)
            };
            disc.accumulate_raw(&cache, &[dz], g).expect("fresh cache");
            loss
        });
        if !loss.is_finite() {
            return Err(AlgoError::NonFinite("discriminator loss"));
        }
        adam_step(&mut self.discriminator, &mut self.disc_opt, &grads)?;
        Ok(loss)
    }

    /// Draws `n` pairs from the trajectory and `n` from the demonstrations
    /// (with replacement only when a source is smaller than `n`), then updates.
    pub fn discriminator_round<R: Rng + ?Sized>(
        &mut self,
        traj: &Trajectory,
        config: &TrainConfig,
        rng: &mut R,
    ) -> Result<f64, AlgoError> {
        let n = config.pair_batch;
        let agent_idx = sample_indices(traj.len(), n, rng);
        let expert_idx = sample_indices(self.demos.total_pairs(), n, rng);
        let demos = self.demos.clone();
        let agent_pairs: Vec<(&[f64], ActionId)> =
            agent_idx.iter().map(|&i| (traj.steps[i].obs.as_slice(), traj.steps[i].action)).collect();
        let expert_pairs: Vec<(&[f64], ActionId)> = expert_idx.iter().map(|&i| demos.pair(i)).collect();
        self.update_discriminator(&agent_pairs, &expert_pairs, config)
    }

    /// Clipped-surrogate PPO: `gen_updates_per_episode` passes over the batch
    /// in shuffled minibatches. Advantages are normalised over the batch.
    pub fn ppo_update<R: Rng + ?Sized>(
        &mut self,
        batch: &PpoBatch,
        config: &TrainConfig,
        rng: &mut R,
    ) -> Result<PpoStats, AlgoError> {
        if batch.is_empty() {
            return Err(AlgoError::EmptyAgentSample);
        }
        for o in &batch.obs {
            self.check_obs(o)?;
        }
        let mut advantages = batch.advantages.clone();
        normalize(&mut advantages);
        let scaled: Vec<Vec<f64>> = batch
            .obs
            .iter()
            .map(|o| {
                let mut x = Vec::new();
                self.agent.scale_obs(o, &mut x);
                x
            })
            .collect();

        let mut order: Vec<usize> = (0..batch.len()).collect();
        let mut stats = PpoStats::default();
        for _ in 0..config.gen_updates_per_episode {
            order.shuffle(rng);
            let mut pass = PpoStats::default();
            for mb in order.chunks(config.minibatch_size) {
                let s = self.ppo_minibatch(mb, &scaled, batch, &advantages, config)?;
                let w = mb.len() as f64 / batch.len() as f64;
                pass.surrogate += w * s.surrogate;
                pass.entropy += w * s.entropy;
                pass.value_loss += w * s.value_loss;
                pass.approx_kl += w * s.approx_kl;
                pass.clip_fraction += w * s.clip_fraction;
            }
            stats = pass;
        }
        Ok(stats)
    }

    fn ppo_minibatch(
        &mut self,
        idx: &[usize],
        scaled: &[Vec<f64>],
        batch: &PpoBatch,
        advantages: &[f64],
        config: &TrainConfig,
    ) -> Result<PpoStats, AlgoError> {
        let n = idx.len() as f64;
        let eps = config.clip_epsilon;
        let lambda = config.entropy_weight;
        let policy = &self.policy;

        let per_sample = policy_terms(policy, idx, scaled, batch, advantages, eps, lambda);
        let (mut pgrads, _) = Gradients::accumulate(policy, config.execution, idx.len(), |k, g| {
            let t = &per_sample[k];
            let raw: Vec<f64> = t.logit_grad.iter().map(|v| v / n).collect();
            policy.accumulate_raw(&t.cache, &raw, g).expect("fresh cache");
            0.0
        });

        let value = &self.value;
        let (mut vgrads, value_loss) = Gradients::accumulate(value, config.execution, idx.len(), |k, g| {
            let i = idx[k];
            let (v, cache) = value.forward(&scaled[i]).expect("checked dims");
            let err = v[0] - batch.returns[i];
            value.accumulate_raw(&cache, &[err / n], g).expect("fresh cache");
            0.5 * err * err / n
        });

        let mut stats = PpoStats { value_loss, ..PpoStats::default() };
        for t in &per_sample {
            stats.surrogate += t.surrogate / n;
            stats.entropy += t.entropy / n;
            stats.approx_kl += t.approx_kl / n;
            stats.clip_fraction += if t.clipped { 1.0 / n } else { 0.0 };
        }
        if ![stats.surrogate, stats.entropy, stats.value_loss].iter().all(|v| v.is_finite()) {
            return Err(AlgoError::NonFinite("PPO loss"));
        }
        pgrads.clip_norm(config.max_grad_norm);
        vgrads.clip_norm(config.max_grad_norm);
        adam_step(&mut self.policy, &mut self.policy_opt, &pgrads)?;
        adam_step(&mut self.value, &mut self.value_opt, &vgrads)?;
        Ok(stats)
    }

    /// Runs both the discriminator rounds and the PPO passes for one finished
    /// episode, filling in the trajectory's discriminator rewards.
    pub fn learn_from<R: Rng + ?Sized>(
        &mut self,
        traj: &mut Trajectory,
        config: &TrainConfig,
        rng: &mut R,
    ) -> Result<(f64, PpoStats), AlgoError> {
        let mut disc_loss = 0.0;
        for _ in 0..config.disc_updates_per_episode {
            disc_loss = self.discriminator_round(traj, config, rng)?;
        }
        self.assign_disc_rewards(traj)?;
        let batch = PpoBatch::from_trajectory(traj, config.gamma, config.gae_lambda);
        let stats = self.ppo_update(&batch, config, rng)?;
        Ok((disc_loss, stats))
    }

    pub fn assign_disc_rewards(&self, traj: &mut Trajectory) -> Result<(), AlgoError> {
        for step in &mut traj.steps {
            step.disc_reward = self.discriminator_reward(&step.obs, step.action)?;
        }
        Ok(())
    }
}

struct PolicyTerms {
    cache: crate::nn::Cache,
    logit_grad: Vec<f64>,
    surrogate: f64,
    entropy: f64,
    approx_kl: f64,
    clipped: bool,
}

/// Forward pass plus the gradient of `-(min(ρÂ, clip(ρ)Â) + λH)` with respect
/// to the logits, for each sample of a minibatch.
fn policy_terms(
    policy: &Mlp,
    idx: &[usize],
    scaled: &[Vec<f64>],
    batch: &PpoBatch,
    advantages: &[f64],
    eps: f64,
    lambda: f64,
) -> Vec<PolicyTerms> {
    idx.iter()
        .map(|&i| {
            let (p, cache) = policy.forward(&scaled[i]).expect("checked dims");
            let logp = log_softmax(cache.raw());
            let a = batch.actions[i].index();
            let adv = advantages[i];
            let log_ratio = logp[a] - batch.old_log_probs[i];
            let ratio = log_ratio.exp();
            let clipped_ratio = ratio.clamp(1.0 - eps, 1.0 + eps);
            let unclipped_obj = ratio * adv;
            let clipped_obj = clipped_ratio * adv;
            let use_unclipped = unclipped_obj <= clipped_obj;
            let entropy: f64 = -p.iter().zip(&logp).map(|(pi, lpi)| pi * lpi).sum::<f64>();
            let mut logit_grad = vec![0.0; p.len()];
            if use_unclipped {
                // d(ρ)/dz_j = ρ (1[j = a] - p_j)
                for (j, g) in logit_grad.iter_mut().enumerate() {
                    let onehot = if j == a { 1.0 } else { 0.0 };
                    *g -= adv * ratio * (onehot - p[j]);
                }
            }
            // dH/dz_j = -p_j (ln p_j + H)
            for (j, g) in logit_grad.iter_mut().enumerate() {
                *g += lambda * p[j] * (logp[j] + entropy);
            }
            PolicyTerms {
                cache,
                logit_grad,
                surrogate: unclipped_obj.min(clipped_obj),
                entropy,
                approx_kl: (ratio - 1.0) - log_ratio,
                clipped: !use_unclipped,
            }
        })
        .collect()
}

fn sample_categorical<R: Rng + ?Sized>(logp: &[f64], rng: &mut R) -> ActionId {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, lp) in logp.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return ActionId::new(i).expect("five actions");
        }
    }
    ActionId::new(logp.len() - 1).expect("five actions")
}

/// `n` indices from `0..len`: distinct when `len >= n`, with replacement otherwise.
pub fn sample_indices<R: Rng + ?Sized>(len: usize, n: usize, rng: &mut R) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    if len >= n {
        rand::seq::index::sample(rng, len, n).into_vec()
    } else {
        (0..n).map(|_| rng.gen_range(0..len)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::trajectory::{DemoEpisode, Provenance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn leader_learner(seed: u64) -> AgentLearner {
        let demos = DemoSet::new(
            AgentKind::Leader,
            Provenance::ExpertOptimal,
            vec![DemoEpisode { obs: vec![vec![17.3; 6]; 4], actions: vec![ActionId::STRAIGHT; 4] }],
        )
        .unwrap();
        AgentLearner::new(demos, &TrainConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn gail_reward_values() {
        assert!((gail_reward(0.5) - 0.693147).abs() < 1e-6);
        assert!((gail_reward(0.0) - 1e-6).abs() < 1e-9);
        assert!((gail_reward(1.0 - 1e-6) - 13.815510557964274).abs() < 1e-9);
        assert!((gail_reward(1.0) - 13.815510557964274).abs() < 1e-9);
    }

    #[test]
    fn zero_policy_is_uniform() {
        let mut l = leader_learner(1);
        for layer in l.policy.layers_mut() {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
            layer.biases.iter_mut().for_each(|b| *b = 0.0);
        }
        let p = l.action_probs(&[10.0; 6]).unwrap();
        assert!(p.iter().all(|v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn peaked_logits_select_action_zero() {
        let mut l = leader_learner(2);
        let last = l.policy.layers().len() - 1;
        let layer = &mut l.policy.layers_mut()[last];
        layer.weights.iter_mut().for_each(|w| *w = 0.0);
        layer.biases = vec![10.0, 0.0, 0.0, 0.0, 0.0];
        let p = l.action_probs(&[10.0; 6]).unwrap();
        let expected = 10f64.exp() / (10f64.exp() + 4.0);
        assert!((p[0] - expected).abs() < 1e-12);
        assert!((p[0] - 0.999818).abs() < 1e-6);
        assert_eq!(l.greedy_action(&[10.0; 6]).unwrap(), ActionId::TURN_LEFT_2);
    }

    #[test]
    fn action_sampling_is_reproducible() {
        let l = leader_learner(3);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| l.select_action(&[12.0; 6], &mut rng).unwrap().action).collect::<Vec<_>>()
        };
        assert_eq!(run(7), run(7));
    }

    #[test]
    fn wrong_observation_size() {
        let l = leader_learner(4);
        assert!(matches!(l.select_action(&[1.0; 8], &mut ChaCha8Rng::seed_from_u64(0)), Err(AlgoError::ObservationDim { .. })));
    }

    #[test]
    fn discriminator_loss_at_half() {
        let mut l = leader_learner(5);
        for layer in l.discriminator.layers_mut() {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        let obs = [12.0; 6];
        let pairs: Vec<(&[f64], ActionId)> = vec![(&obs, ActionId::STRAIGHT); 8];
        let loss = l.update_discriminator(&pairs, &pairs, &TrainConfig::default()).unwrap();
        assert!((loss - 2.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_samples_are_errors() {
        let mut l = leader_learner(6);
        let obs = [12.0; 6];
        let pairs: Vec<(&[f64], ActionId)> = vec![(&obs, ActionId::STRAIGHT)];
        assert_eq!(l.update_discriminator(&[], &pairs, &TrainConfig::default()), Err(AlgoError::EmptyAgentSample));
        assert_eq!(l.update_discriminator(&pairs, &[], &TrainConfig::default()), Err(AlgoError::EmptyDemoSet));
    }

    #[test]
    fn sample_indices_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut distinct = sample_indices(300, 256, &mut rng);
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), 256);
        let with_repl = sample_indices(10, 256, &mut rng);
        assert_eq!(with_repl.len(), 256);
        assert!(with_repl.iter().all(|&i| i < 10));
    }
}
