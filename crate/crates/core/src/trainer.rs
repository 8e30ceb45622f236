//! The interaction and update loop, evaluation rollouts and ablation grids.
//!
//! Per environment step `t` (1-based):
//!
//! 1. act (uniform random during the general warmup, else `a ~ pi(.|s)`),
//! 2. store the transition and accumulate the episode cost,
//! 3. on episode end, push the episode total into the cost window,
//! 4. once past the warmup with a full batch: reward-ensemble update,
//!    cost-critic update and a critic CVaR estimate,
//! 5. on even `t`: policy and temperature update, then soft updates of all
//!    target networks,
//! 6. after the multiplier warmup: the multiplier update.

use ndarray::ArrayView2;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::TrainConfig;
use crate::constraint::{EpisodeCostWindow, Multiplier};
use crate::cost::{cost_critic_loss, empirical_cvar, IqnNet, QuantileCostCritic};
use crate::ensemble::RewardEnsemble;
use crate::env::{concat_cols, make_env, Env, EnvConfig, ReplayBuffer, Transition};
use crate::error::{Error, Result};
use crate::metrics::{MetricsRecord, MetricsSink, RecordKind};
use crate::nn::{soft_update, Mlp};
use crate::optim::{adamw_step, apply_update, OptimizerState};
use crate::policy::{policy_loss, GaussianPolicy, Temperature};

/// Purpose-specific generator streams derived from one run seed.
pub fn run_stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(purpose);
    r
}

const STREAM_INIT: u64 = 1;
const STREAM_ACT: u64 = 2;
const STREAM_BATCH: u64 = 3;
const STREAM_UPDATE: u64 = 4;
const STREAM_RESET: u64 = 5;
const STREAM_COST_NOISE: u64 = 6;

/// Learnable state of one run.
#[derive(Debug, Clone)]
pub struct Agent {
    pub policy: GaussianPolicy<f64>,
    pub policy_opt: OptimizerState<f64>,
    pub ensemble: RewardEnsemble<f64>,
    pub cost: QuantileCostCritic<f64>,
    pub cost_opt: OptimizerState<f64>,
    pub multiplier: Multiplier,
}

impl Agent {
    pub fn new(cfg: &TrainConfig, obs_dim: usize, act_dim: usize, seed: u64) -> Result<Self> {
        let mut rng = run_stream(seed, STREAM_INIT);
        let target_entropy = cfg.target_entropy.unwrap_or(-(act_dim as f64));
        let temp = Temperature::new(cfg.alpha, cfg.alpha_auto, target_entropy, cfg.alpha_lr)?;
        let policy = GaussianPolicy::new(obs_dim, act_dim, cfg.hidden, temp, &mut rng)?;
        let ensemble = RewardEnsemble::new(
            obs_dim,
            act_dim,
            cfg.hidden,
            cfg.m,
            cfg.aggregation,
            cfg.reward_rule,
            cfg.optimizer(),
            seed,
            &mut rng,
        )?;
        let cost = QuantileCostCritic::new(obs_dim, act_dim, cfg.hidden, &mut rng)?;
        let mut multiplier = Multiplier::new(
            cfg.effective_beta()?,
            cfg.eta_lambda,
            cfg.warmup_general,
            cfg.warmup_multiplier,
        )?;
        multiplier.mode = cfg.signal_mode;
        Ok(Self {
            policy_opt: OptimizerState::new(&policy.online, cfg.policy_optimizer())?,
            cost_opt: OptimizerState::new(&cost.online, cfg.cost_optimizer())?,
            policy,
            ensemble,
            cost,
            multiplier,
        })
    }

    /// Network weights and the multiplier.
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new();
        ck.put_mlp("policy.online", &self.policy.online)?;
        ck.put_mlp("policy.target", &self.policy.target)?;
        for (i, (c, t)) in self.ensemble.critics.iter().zip(&self.ensemble.targets).enumerate() {
            ck.put_mlp(&format!("reward.{i}.online"), c)?;
            ck.put_mlp(&format!("reward.{i}.target"), t)?;
        }
        for (name, net) in [("online", &self.cost.online), ("target", &self.cost.target)] {
            ck.put_mlp(&format!("cost.{name}.trunk"), &net.trunk)?;
            ck.put_mlp(&format!("cost.{name}.embed"), &net.embed)?;
            ck.put_mlp(&format!("cost.{name}.head"), &net.head)?;
        }
        ck.insert("lambda", vec![1], vec![self.multiplier.lambda])?;
        ck.insert("log_alpha", vec![1], vec![self.policy.temperature.log_alpha])?;
        Ok(ck)
    }

    /// Restores weights into an agent built from the same config.
    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        self.policy.online = ck.get_mlp("policy.online", &self.policy.online)?;
        self.policy.target = ck.get_mlp("policy.target", &self.policy.target)?;
        for i in 0..self.ensemble.critics.len() {
            self.ensemble.critics[i] = ck.get_mlp(&format!("reward.{i}.online"), &self.ensemble.critics[i])?;
            self.ensemble.targets[i] = ck.get_mlp(&format!("reward.{i}.target"), &self.ensemble.targets[i])?;
        }
        let load_iqn = |name: &str, like: &IqnNet<f64>| -> Result<IqnNet<f64>> {
            IqnNet::from_parts(
                ck.get_mlp(&format!("cost.{name}.trunk"), &like.trunk)?,
                ck.get_mlp(&format!("cost.{name}.embed"), &like.embed)?,
                ck.get_mlp(&format!("cost.{name}.head"), &like.head)?,
            )
        };
        self.cost.online = load_iqn("online", &self.cost.online)?;
        self.cost.target = load_iqn("target", &self.cost.target)?;
        let scalar = |name: &str| -> Result<f64> {
            ck.get(name)
                .and_then(|a| a.data.first().copied())
                .ok_or_else(|| Error::Checkpoint(format!("missing `{name}`")))
        };
        self.multiplier.lambda = scalar("lambda")?;
        self.policy.temperature.log_alpha = scalar("log_alpha")?;
        self.policy_opt = OptimizerState::new(&self.policy.online, self.policy_opt.config)?;
        self.cost_opt = OptimizerState::new(&self.cost.online, self.cost_opt.config)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    EnvStep,
    Store,
    EpisodeEnd,
    RewardUpdate,
    CostUpdate,
    CvarEstimate,
    PolicyUpdate,
    TargetUpdate,
    LambdaUpdate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEvent {
    pub step: u64,
    pub phase: Phase,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mean_return: f64,
    pub mean_cost: f64,
    pub returns: Vec<f64>,
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub steps: u64,
    pub episodes: u64,
    pub reward_updates: u64,
    pub policy_updates: u64,
    pub lambda_updates: u64,
    pub final_lambda: f64,
    pub final_alpha: f64,
    pub episode_costs: Vec<f64>,
    pub episode_returns: Vec<f64>,
}

impl TrainSummary {
    /// Empirical CVaR of the last `n` episode costs.
    pub fn tail_cvar(&self, n: usize, epsilon: f64) -> Result<f64> {
        let k = self.episode_costs.len();
        empirical_cvar(&self.episode_costs[k.saturating_sub(n)..], epsilon)
    }

    /// Mean of the last `n` episode costs.
    pub fn tail_mean_cost(&self, n: usize) -> Result<f64> {
        self.tail_cvar(n, 1.0)
    }
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub seed: u64,
    pub agent: Agent,
    pub env: Box<dyn Env>,
    pub buffer: ReplayBuffer,
    pub window: EpisodeCostWindow,
    act_rng: ChaCha8Rng,
    batch_rng: ChaCha8Rng,
    update_rng: ChaCha8Rng,
    reset_rng: ChaCha8Rng,
    cost_noise_rng: ChaCha8Rng,
    trace: Option<Vec<ScheduleEvent>>,
    warned_empty_window: bool,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let env = make_env(&cfg.env);
        let agent = Agent::new(&cfg, env.obs_dim(), env.act_dim(), seed)?;
        let buffer = ReplayBuffer::new(
            cfg.buffer_capacity.min(cfg.total_steps.max(1) as usize).max(cfg.batch_size),
            env.obs_dim(),
            env.act_dim(),
        )?;
        Ok(Self {
            window: EpisodeCostWindow::new(cfg.window)?,
            act_rng: run_stream(seed, STREAM_ACT),
            batch_rng: run_stream(seed, STREAM_BATCH),
            update_rng: run_stream(seed, STREAM_UPDATE),
            reset_rng: run_stream(seed, STREAM_RESET),
            cost_noise_rng: run_stream(seed, STREAM_COST_NOISE),
            cfg,
            seed,
            agent,
            env,
            buffer,
            trace: None,
            warned_empty_window: false,
        })
    }

    /// Records a [`ScheduleEvent`] for every phase executed.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn trace(&self) -> Option<&[ScheduleEvent]> {
        self.trace.as_deref()
    }

    fn mark(&mut self, step: u64, phase: Phase) {
        let lambda = self.agent.multiplier.lambda;
        if let Some(t) = self.trace.as_mut() {
            t.push(ScheduleEvent { step, phase, lambda });
        }
    }

    fn abort(step: u64, what: &str) -> Error {
        Error::NumericalAbort {
            step,
            what: what.to_string(),
        }
    }

    pub fn train(&mut self, sink: &mut dyn MetricsSink) -> Result<TrainSummary> {
        let cfg = self.cfg.clone();
        let act_dim = self.env.act_dim();
        let mut summary = TrainSummary {
            seed: self.seed,
            steps: 0,
            episodes: 0,
            reward_updates: 0,
            policy_updates: 0,
            lambda_updates: 0,
            final_lambda: self.agent.multiplier.lambda,
            final_alpha: self.agent.policy.alpha(),
            episode_costs: Vec::new(),
            episode_returns: Vec::new(),
        };
        if cfg.total_steps == 0 {
            return Ok(summary);
        }
        let mut obs = self.env.reset(&mut self.reset_rng);
        let (mut ep_ret, mut ep_cost) = (0.0, 0.0);
        let mut last_losses: Option<(f64, f64, Option<f64>, f64)> = None;

        for t in 1..=cfg.total_steps {
            let action: Vec<f64> = if t <= cfg.warmup_general {
                (0..act_dim).map(|_| self.act_rng.random_range(-1.0..=1.0)).collect()
            } else {
                self.agent.policy.sample_action(&obs, &mut self.act_rng, false)?.0
            };
            let out = self.env.step(&action);
            self.mark(t, Phase::EnvStep);
            self.buffer.push(&Transition {
                s: obs,
                a: action,
                r: out.reward,
                c: out.cost,
                s_next: out.obs.clone(),
                d: out.done,
            })?;
            self.mark(t, Phase::Store);
            ep_ret += out.reward;
            ep_cost += out.cost;
            obs = out.obs;
            if out.done {
                self.window.record_cost(ep_cost);
                summary.episodes += 1;
                summary.episode_costs.push(ep_cost);
                summary.episode_returns.push(ep_ret);
                self.mark(t, Phase::EpisodeEnd);
                sink.write(&MetricsRecord {
                    kind: RecordKind::Episode,
                    step: t,
                    episode: Some(summary.episodes),
                    episode_return: Some(ep_ret),
                    episode_cost: Some(ep_cost),
                    lambda: self.agent.multiplier.lambda,
                    empirical_cvar: Some(self.window.empirical_cvar(cfg.constraint_epsilon)?),
                    critic_cvar: last_losses.map(|l| l.3),
                    reward_loss: None,
                    cost_loss: None,
                    policy_loss: None,
                    alpha: self.agent.policy.alpha(),
                })?;
                obs = self.env.reset(&mut self.reset_rng);
                ep_ret = 0.0;
                ep_cost = 0.0;
            }

            if t > cfg.warmup_general && self.buffer.len() >= cfg.batch_size {
                let losses = self.update(t, &mut summary)?;
                last_losses = Some(losses);
            }

            if self.agent.multiplier.is_active(t) {
                if self.window.is_empty() {
                    if !self.warned_empty_window {
                        log::warn!("multiplier active at step {t} before any episode finished");
                        self.warned_empty_window = true;
                    }
                } else if self.agent.multiplier.update_lambda(&self.window, cfg.constraint_epsilon, t)? {
                    summary.lambda_updates += 1;
                    self.mark(t, Phase::LambdaUpdate);
                }
            }

            if cfg.log_interval > 0 && t % cfg.log_interval == 0 {
                if let Some((rl, cl, pl, cv)) = last_losses {
                    sink.write(&MetricsRecord {
                        kind: RecordKind::Losses,
                        step: t,
                        episode: None,
                        episode_return: None,
                        episode_cost: None,
                        lambda: self.agent.multiplier.lambda,
                        empirical_cvar: if self.window.is_empty() {
                            None
                        } else {
                            Some(self.window.empirical_cvar(cfg.constraint_epsilon)?)
                        },
                        critic_cvar: Some(cv),
                        reward_loss: Some(rl),
                        cost_loss: Some(cl),
                        policy_loss: pl,
                        alpha: self.agent.policy.alpha(),
                    })?;
                }
            }
            summary.steps = t;
        }
        summary.final_lambda = self.agent.multiplier.lambda;
        summary.final_alpha = self.agent.policy.alpha();
        Ok(summary)
    }

    /// Steps 4 and 5 of the loop; returns (reward loss, cost loss, policy
    /// loss if updated, mean critic CVaR).
    fn update(&mut self, t: u64, summary: &mut TrainSummary) -> Result<(f64, f64, Option<f64>, f64)> {
        let cfg = self.cfg.clone();
        let batch = self.buffer.sample::<f64, _>(cfg.batch_size, &mut self.batch_rng)?;
        let alpha = self.agent.policy.alpha();

        let losses = self
            .agent
            .ensemble
            .ensemble_update(&batch, &self.agent.policy, alpha, cfg.gamma, &mut self.update_rng)
            .map_err(|e| match e {
                Error::NonFinite(w) => Self::abort(t, w),
                other => other,
            })?;
        let reward_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        if !reward_loss.is_finite() {
            return Err(Self::abort(t, "reward critic loss"));
        }
        summary.reward_updates += 1;
        self.mark(t, Phase::RewardUpdate);

        let (cost_loss, grads) = cost_critic_loss(
            &self.agent.cost,
            &batch,
            &self.agent.policy,
            cfg.n_quantiles,
            cfg.n_quantiles,
            cfg.gamma_c,
            cfg.kappa,
            &mut self.update_rng,
        )?;
        if !cost_loss.is_finite() || !crate::nn::flatten(&grads).iter().all(|g| g.is_finite()) {
            return Err(Self::abort(t, "cost critic loss"));
        }
        apply_update(
            cfg.cost_rule,
            &mut self.agent.cost.online,
            &grads,
            &mut self.agent.cost_opt,
            &mut self.cost_noise_rng,
        )?;
        self.mark(t, Phase::CostUpdate);

        let sa = concat_cols(&batch.s, &batch.a);
        let cvar = self
            .agent
            .cost
            .cvar_batch(sa.view(), cfg.cost_epsilon, cfg.n_quantiles, cfg.cvar_mode, &mut self.update_rng)?;
        let mean_cvar = cvar.sum() / cvar.len() as f64;
        self.mark(t, Phase::CvarEstimate);

        let mut policy_loss_value = None;
        if t % 2 == 0 {
            let (pl, pg) = policy_loss(
                &self.agent.policy,
                &self.agent.ensemble,
                &self.agent.cost,
                &batch.s,
                alpha,
                self.agent.multiplier.lambda,
                cfg.cost_epsilon,
                cfg.n_quantiles,
                &mut self.update_rng,
            )?;
            if !pl.total.is_finite() || !pg.is_finite() {
                return Err(Self::abort(t, "policy loss"));
            }
            adamw_step(&mut self.agent.policy.online, &pg, &mut self.agent.policy_opt)?;
            self.agent.policy.temperature.update(pl.mean_log_prob);
            policy_loss_value = Some(pl.total);
            summary.policy_updates += 1;
            self.mark(t, Phase::PolicyUpdate);

            self.agent.ensemble.soft_update_targets(cfg.tau_soft)?;
            soft_update(&self.agent.cost.online, &mut self.agent.cost.target, cfg.tau_soft)?;
            self.agent.policy.soft_update_target(cfg.tau_soft)?;
            self.mark(t, Phase::TargetUpdate);
        }
        Ok((reward_loss, cost_loss, policy_loss_value, mean_cvar))
    }
}

/// Trains one seed end to end.
pub fn train(cfg: &TrainConfig, seed: u64, sink: &mut dyn MetricsSink) -> Result<(TrainSummary, Agent)> {
    let mut tr = Trainer::new(cfg.clone(), seed)?;
    let summary = tr.train(sink)?;
    Ok((summary, tr.agent))
}

/// Rolls out `episodes` episodes with `act` choosing actions.
pub fn evaluate_with<F>(env: &mut dyn Env, episodes: usize, seed: u64, mut act: F) -> Result<EvalResult>
where
    F: FnMut(&[f64], &mut dyn RngCore) -> Result<Vec<f64>>,
{
    let mut rng = run_stream(seed, 100);
    let mut act_rng = run_stream(seed, 101);
    let (mut returns, mut costs) = (Vec::with_capacity(episodes), Vec::with_capacity(episodes));
    for _ in 0..episodes {
        let mut obs = env.reset(&mut rng);
        let (mut r, mut c) = (0.0, 0.0);
        loop {
            let a = act(&obs, &mut act_rng)?;
            let out = env.step(&a);
            r += out.reward;
            c += out.cost;
            obs = out.obs;
            if out.done {
                break;
            }
        }
        returns.push(r);
        costs.push(c);
    }
    let n = episodes.max(1) as f64;
    Ok(EvalResult {
        mean_return: returns.iter().sum::<f64>() / n,
        mean_cost: costs.iter().sum::<f64>() / n,
        returns,
        costs,
    })
}

/// Deterministic-mode rollouts of `policy`.
pub fn evaluate(policy: &GaussianPolicy<f64>, env: &EnvConfig, episodes: usize, seed: u64) -> Result<EvalResult> {
    let mut e = make_env(env);
    evaluate_with(e.as_mut(), episodes, seed, |obs, _| {
        let x = ArrayView2::from_shape((1, obs.len()), obs).expect("row vector");
        Ok(policy.deterministic_actions(x)?.into_raw_vec_and_offset().0)
    })
}

/// Uniform random actions, the baseline for return comparisons.
pub fn evaluate_random(env: &EnvConfig, episodes: usize, seed: u64) -> Result<EvalResult> {
    let mut e = make_env(env);
    let ad = e.act_dim();
    evaluate_with(e.as_mut(), episodes, seed, |_, rng| {
        Ok((0..ad).map(|_| rng.random_range(-1.0..=1.0)).collect())
    })
}

/// A constant action every step.
pub fn evaluate_constant(env: &EnvConfig, episodes: usize, seed: u64, action: &[f64]) -> Result<EvalResult> {
    let mut e = make_env(env);
    evaluate_with(e.as_mut(), episodes, seed, |_, _| Ok(action.to_vec()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    Optimizer,
    Epsilon,
    Aggregation,
    M,
    CostOptimizer,
}

impl std::str::FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimizer" => Ok(AblationAxis::Optimizer),
            "epsilon" => Ok(AblationAxis::Epsilon),
            "aggregation" => Ok(AblationAxis::Aggregation),
            "m" => Ok(AblationAxis::M),
            "cost_optimizer" => Ok(AblationAxis::CostOptimizer),
            _ => Err(Error::Config(format!(
                "unknown ablation axis `{s}` (expected optimizer, epsilon, aggregation, m, cost_optimizer)"
            ))),
        }
    }
}

/// Grid cells for an axis as `(label, overrides)`.
pub fn ablation_grid(axis: AblationAxis) -> Vec<(String, Vec<String>)> {
    let one = |label: String, kv: Vec<String>| (label, kv);
    match axis {
        AblationAxis::Optimizer => crate::optim::LangevinVariant::ALL
            .iter()
            .map(|v| one(v.name().to_string(), vec![format!("ensemble.optimizer_variant={}", v.name())]))
            .collect(),
        AblationAxis::Epsilon => [0.2, 0.5, 0.75, 1.0]
            .iter()
            .map(|e| {
                one(
                    format!("epsilon_{e}"),
                    vec![format!("cost.epsilon={e}"), format!("constraint.epsilon={e}")],
                )
            })
            .collect(),
        AblationAxis::Aggregation => ["mean_min", "min_min"]
            .iter()
            .map(|a| one(a.to_string(), vec![format!("ensemble.aggregation={a}")]))
            .collect(),
        AblationAxis::M => [1, 3, 5, 10]
            .iter()
            .map(|m| one(format!("m_{m}"), vec![format!("ensemble.m={m}")]))
            .collect(),
        AblationAxis::CostOptimizer => ["adamw", "slsac_asgld"]
            .iter()
            .map(|o| one(o.to_string(), vec![format!("cost.optimizer={o}")]))
            .collect(),
    }
}

/// Convenience for tests: a policy network with all-zero weights.
pub fn zero_policy(obs_dim: usize, act_dim: usize, hidden: usize) -> Result<GaussianPolicy<f64>> {
    let net = Mlp::zeros(
        &[obs_dim, hidden, hidden, 2 * act_dim],
        crate::nn::Activation::Relu,
        crate::nn::Activation::Identity,
    )?;
    GaussianPolicy::from_net(net, Temperature::new(0.2, false, -(act_dim as f64), 3e-4)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MemorySink;

    fn tiny() -> TrainConfig {
        let mut c = TrainConfig::default();
        c.total_steps = 60;
        c.hidden = 8;
        c.batch_size = 8;
        c.m = 1;
        c.n_quantiles = 4;
        c.warmup_general = 10;
        c.warmup_multiplier = 20;
        c.env.horizon = 15;
        c.log_interval = 10;
        c
    }

    #[test]
    fn zero_steps_is_empty() {
        let mut c = tiny();
        c.total_steps = 0;
        let mut sink = MemorySink::default();
        let (s, _) = train(&c, 0, &mut sink).unwrap();
        assert!(sink.records.is_empty());
        assert_eq!(s.reward_updates, 0);
    }

    #[test]
    fn cadence_counts() {
        let c = tiny();
        let mut sink = MemorySink::default();
        let (s, _) = train(&c, 1, &mut sink).unwrap();
        assert_eq!(s.reward_updates, 50);
        assert_eq!(s.policy_updates, 25);
        assert_eq!(s.lambda_updates, 30);
        assert_eq!(s.episodes, 4);
        assert!(sink.records.windows(2).all(|w| w[0].step <= w[1].step));
    }

    #[test]
    fn zero_policy_evaluates_to_zero() {
        let p = zero_policy(2, 1, 4).unwrap();
        let env = EnvConfig {
            reset_noise: 0.0,
            ..EnvConfig::default()
        };
        let r = evaluate(&p, &env, 3, 0).unwrap();
        assert_eq!(r.mean_return, 0.0);
        assert_eq!(r.mean_cost, 0.0);
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(ablation_grid(AblationAxis::Optimizer).len(), 4);
        assert_eq!(ablation_grid(AblationAxis::Epsilon).len(), 4);
        assert_eq!(ablation_grid(AblationAxis::Aggregation).len(), 2);
        assert_eq!(ablation_grid(AblationAxis::M).len(), 4);
        assert_eq!(ablation_grid(AblationAxis::CostOptimizer).len(), 2);
    }

    #[test]
    fn checkpoint_round_trip_restores_policy() {
        let c = tiny();
        let (_, agent) = train(&c, 3, &mut crate::metrics::NullSink).unwrap();
        let ck = agent.to_checkpoint().unwrap();
        let mut fresh = Agent::new(&c, 2, 1, 99).unwrap();
        fresh.load_checkpoint(&ck).unwrap();
        assert_eq!(
            crate::nn::flatten(&fresh.policy.online),
            crate::nn::flatten(&agent.policy.online)
        );
        assert_eq!(fresh.multiplier.lambda, agent.multiplier.lambda);
    }
}
