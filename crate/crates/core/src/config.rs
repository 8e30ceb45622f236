//! Flat dotted-key configuration (`section.key = value`).
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default; a file only lists what it changes. [`TrainConfig::to_text`] emits
//! every key in a fixed order and parses back to an identical config.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constraint::SignalMode;
use crate::cost::CvarMode;
use crate::ensemble::Aggregation;
use crate::env::{EnvConfig, EnvKind, HazardCost};
use crate::error::{Error, Result};
use crate::optim::{LangevinVariant, OptimizerConfig, UpdateRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub total_steps: u64,
    pub steps_per_epoch: u64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub gamma: f64,
    pub tau_soft: f64,
    pub hidden: usize,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    /// Steps between loss records; 0 disables them.
    pub log_interval: u64,

    pub optim: OptimizerConfig<f64>,

    pub m: usize,
    pub aggregation: Aggregation,
    pub reward_rule: UpdateRule,

    pub n_quantiles: usize,
    pub kappa: f64,
    pub cost_epsilon: f64,
    pub gamma_c: f64,
    pub cost_rule: UpdateRule,
    pub cost_lr: f64,
    pub cvar_mode: CvarMode,

    pub alpha: f64,
    pub alpha_auto: bool,
    /// `None` means `-act_dim`.
    pub target_entropy: Option<f64>,
    pub policy_lr: f64,
    pub alpha_lr: f64,

    pub beta: f64,
    pub eta_lambda: f64,
    pub window: usize,
    pub constraint_epsilon: f64,
    pub warmup_general: u64,
    pub warmup_multiplier: u64,
    pub signal_mode: SignalMode,
    /// Quantile-error margin `delta`; the multiplier targets
    /// `beta - delta / sqrt(eps)` when positive.
    pub tighten_delta: f64,

    pub env: EnvConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 1_000_000,
            steps_per_epoch: 2000,
            batch_size: 256,
            buffer_capacity: 1_000_000,
            gamma: 0.99,
            tau_soft: 0.005,
            hidden: 256,
            eval_episodes: 30,
            seeds: vec![0, 1, 2, 3, 4],
            log_interval: 1000,
            optim: OptimizerConfig::default(),
            m: 3,
            aggregation: Aggregation::MeanMin,
            reward_rule: UpdateRule::Langevin(LangevinVariant::SlsacAsgld),
            n_quantiles: 32,
            kappa: 1.0,
            cost_epsilon: 0.5,
            gamma_c: 0.99,
            cost_rule: UpdateRule::AdamW,
            cost_lr: 3e-4,
            cvar_mode: CvarMode::Stratified,
            alpha: 0.2,
            alpha_auto: true,
            target_entropy: None,
            policy_lr: 3e-4,
            alpha_lr: 3e-4,
            beta: 25.0,
            eta_lambda: 0.01,
            window: 64,
            constraint_epsilon: 0.5,
            warmup_general: 5000,
            warmup_multiplier: 100_000,
            signal_mode: SignalMode::Cvar,
            tighten_delta: 0.0,
            env: EnvConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

/// Integers also accept integral scientific notation such as `1e6`.
fn parse_int<T: TryFrom<u64>>(key: &str, value: &str) -> Result<T> {
    let bad = || Error::Config(format!("{key}: expected a nonnegative integer, got `{value}`"));
    let n = match value.parse::<u64>() {
        Ok(n) => n,
        Err(_) => {
            let f: f64 = value.parse().map_err(|_| bad())?;
            if f < 0.0 || f.fract() != 0.0 || f > u64::MAX as f64 {
                return Err(bad());
            }
            f as u64
        }
    };
    T::try_from(n).map_err(|_| bad())
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true/false, got `{value}`"))),
    }
}

fn parse_enum<T: FromStr<Err = Error>>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|e: Error| Error::Config(format!("{key}: {e}")))
}

fn parse_seeds(key: &str, value: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = value.split_once("..") {
        let (a, b): (u64, u64) = (parse_int(key, a.trim())?, parse_int(key, b.trim())?);
        return Ok((a..b).collect());
    }
    value
        .split(',')
        .map(|s| parse_int(key, s.trim()))
        .collect()
}

impl TrainConfig {
    /// Every key, in canonical order.
    pub fn keys() -> Vec<&'static str> {
        Self::default().entries().into_iter().map(|(k, _)| k).collect()
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let o = &self.optim;
        let e = &self.env;
        vec![
            ("train.total_steps", self.total_steps.to_string()),
            ("train.steps_per_epoch", self.steps_per_epoch.to_string()),
            ("train.batch_size", self.batch_size.to_string()),
            ("train.buffer_capacity", self.buffer_capacity.to_string()),
            ("train.gamma", self.gamma.to_string()),
            ("train.tau_soft", self.tau_soft.to_string()),
            ("train.hidden", self.hidden.to_string()),
            ("train.eval_episodes", self.eval_episodes.to_string()),
            (
                "train.seeds",
                self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
            ),
            ("train.log_interval", self.log_interval.to_string()),
            ("optim.lr", o.eta.to_string()),
            ("optim.beta1", o.beta1.to_string()),
            ("optim.beta2", o.beta2.to_string()),
            ("optim.eps", o.eps.to_string()),
            ("optim.a", o.a.to_string()),
            ("optim.t_inv", o.t_inv.to_string()),
            ("optim.weight_decay", o.weight_decay.to_string()),
            ("optim.clip_c", o.clip_c.to_string()),
            ("optim.clip_mode", o.clip_mode.to_string()),
            ("ensemble.m", self.m.to_string()),
            ("ensemble.aggregation", self.aggregation.to_string()),
            ("ensemble.optimizer_variant", self.reward_rule.to_string()),
            ("cost.n_quantiles", self.n_quantiles.to_string()),
            ("cost.kappa", self.kappa.to_string()),
            ("cost.epsilon", self.cost_epsilon.to_string()),
            ("cost.gamma_c", self.gamma_c.to_string()),
            ("cost.optimizer", self.cost_rule.to_string()),
            ("cost.lr", self.cost_lr.to_string()),
            ("cost.cvar_mode", self.cvar_mode.to_string()),
            ("policy.alpha", self.alpha.to_string()),
            ("policy.alpha_auto", self.alpha_auto.to_string()),
            (
                "policy.target_entropy",
                self.target_entropy.map_or("auto".to_string(), |h| h.to_string()),
            ),
            ("policy.lr", self.policy_lr.to_string()),
            ("policy.alpha_lr", self.alpha_lr.to_string()),
            ("constraint.beta", self.beta.to_string()),
            ("constraint.eta_lambda", self.eta_lambda.to_string()),
            ("constraint.window", self.window.to_string()),
            ("constraint.epsilon", self.constraint_epsilon.to_string()),
            ("constraint.warmup_general", self.warmup_general.to_string()),
            ("constraint.warmup_multiplier", self.warmup_multiplier.to_string()),
            ("constraint.signal_mode", self.signal_mode.to_string()),
            ("constraint.tighten_delta", self.tighten_delta.to_string()),
            ("env.name", e.kind.to_string()),
            ("env.v_limit", e.v_limit.to_string()),
            ("env.hazards", e.hazards.to_string()),
            ("env.hazard_cost", e.hazard_cost.to_string()),
            ("env.horizon", e.horizon.to_string()),
            ("env.seed", e.seed.to_string()),
            ("env.reset_noise", e.reset_noise.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "train.total_steps" => self.total_steps = parse_int(key, v)?,
            "train.steps_per_epoch" => self.steps_per_epoch = parse_int(key, v)?,
            "train.batch_size" => self.batch_size = parse_int(key, v)?,
            "train.buffer_capacity" => self.buffer_capacity = parse_int(key, v)?,
            "train.gamma" => self.gamma = parse(key, v)?,
            "train.tau_soft" => self.tau_soft = parse(key, v)?,
            "train.hidden" => self.hidden = parse_int(key, v)?,
            "train.eval_episodes" => self.eval_episodes = parse_int(key, v)?,
            "train.seeds" => self.seeds = parse_seeds(key, v)?,
            "train.log_interval" => self.log_interval = parse_int(key, v)?,
            "optim.lr" => self.optim.eta = parse(key, v)?,
            "optim.beta1" => self.optim.beta1 = parse(key, v)?,
            "optim.beta2" => self.optim.beta2 = parse(key, v)?,
            "optim.eps" => self.optim.eps = parse(key, v)?,
            "optim.a" => self.optim.a = parse(key, v)?,
            "optim.t_inv" => self.optim.t_inv = parse(key, v)?,
            "optim.weight_decay" => self.optim.weight_decay = parse(key, v)?,
            "optim.clip_c" => self.optim.clip_c = parse(key, v)?,
            "optim.clip_mode" => self.optim.clip_mode = parse_enum(key, v)?,
            "ensemble.m" => self.m = parse_int(key, v)?,
            "ensemble.aggregation" => self.aggregation = parse_enum(key, v)?,
            "ensemble.optimizer_variant" => self.reward_rule = parse_enum(key, v)?,
            "cost.n_quantiles" => self.n_quantiles = parse_int(key, v)?,
            "cost.kappa" => self.kappa = parse(key, v)?,
            "cost.epsilon" => self.cost_epsilon = parse(key, v)?,
            "cost.gamma_c" => self.gamma_c = parse(key, v)?,
            "cost.optimizer" => self.cost_rule = parse_enum(key, v)?,
            "cost.lr" => self.cost_lr = parse(key, v)?,
            "cost.cvar_mode" => self.cvar_mode = parse_enum(key, v)?,
            "policy.alpha" => self.alpha = parse(key, v)?,
            "policy.alpha_auto" => self.alpha_auto = parse_bool(key, v)?,
            "policy.target_entropy" => {
                self.target_entropy = if v == "auto" { None } else { Some(parse(key, v)?) }
            }
            "policy.lr" => self.policy_lr = parse(key, v)?,
            "policy.alpha_lr" => self.alpha_lr = parse(key, v)?,
            "constraint.beta" => self.beta = parse(key, v)?,
            "constraint.eta_lambda" => self.eta_lambda = parse(key, v)?,
            "constraint.window" => self.window = parse_int(key, v)?,
            "constraint.epsilon" => self.constraint_epsilon = parse(key, v)?,
            "constraint.warmup_general" => self.warmup_general = parse_int(key, v)?,
            "constraint.warmup_multiplier" => self.warmup_multiplier = parse_int(key, v)?,
            "constraint.signal_mode" => self.signal_mode = parse_enum(key, v)?,
            "constraint.tighten_delta" => self.tighten_delta = parse(key, v)?,
            "env.name" => self.env.kind = parse_enum::<EnvKind>(key, v)?,
            "env.v_limit" => self.env.v_limit = parse(key, v)?,
            "env.hazards" => self.env.hazards = parse_int(key, v)?,
            "env.hazard_cost" => self.env.hazard_cost = parse_enum::<HazardCost>(key, v)?,
            "env.horizon" => self.env.horizon = parse_int(key, v)?,
            "env.seed" => self.env.seed = parse_int(key, v)?,
            "env.reset_noise" => self.env.reset_noise = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines and then `k=v` overrides, validating the
    /// result. All problems are reported together.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::default();
        let mut problems = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = cfg.set(k.trim(), v) {
                        problems.push(format!("line {}: {}", lineno + 1, strip(e)));
                    }
                }
                None => problems.push(format!("line {}: expected `key = value`, got `{line}`", lineno + 1)),
            }
        }
        for o in overrides {
            match o.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = cfg.set(k.trim(), v) {
                        problems.push(format!("override `{o}`: {}", strip(e)));
                    }
                }
                None => problems.push(format!("override `{o}`: expected k=v")),
            }
        }
        if problems.is_empty() {
            if let Err(e) = cfg.validate() {
                problems.push(strip(e));
            }
        }
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        Self::parse_with_overrides(text, &[])
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_with_overrides(&text, overrides)
    }

    /// Canonical text form: every key, one per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    pub fn optimizer(&self) -> OptimizerConfig<f64> {
        self.optim
    }

    pub fn cost_optimizer(&self) -> OptimizerConfig<f64> {
        OptimizerConfig {
            eta: self.cost_lr,
            ..self.optim
        }
    }

    pub fn policy_optimizer(&self) -> OptimizerConfig<f64> {
        OptimizerConfig {
            eta: self.policy_lr,
            ..self.optim
        }
    }

    /// Multiplier target, tightened by `delta / sqrt(eps)` when requested.
    pub fn effective_beta(&self) -> Result<f64> {
        if self.tighten_delta > 0.0 {
            crate::verify::tightened_threshold(self.beta, self.tighten_delta, self.constraint_epsilon)
        } else {
            Ok(self.beta)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                bad.push(msg.to_string());
            }
        };
        let unit_open = |x: f64| x > 0.0 && x < 1.0;
        let unit_half = |x: f64| x > 0.0 && x <= 1.0;
        need(self.batch_size >= 1, "train.batch_size must be >= 1");
        need(
            self.batch_size <= self.buffer_capacity,
            "train.batch_size must not exceed train.buffer_capacity",
        );
        need(self.gamma >= 0.0 && self.gamma < 1.0, "train.gamma must be in [0, 1)");
        need(self.gamma_c >= 0.0 && self.gamma_c < 1.0, "cost.gamma_c must be in [0, 1)");
        need(unit_half(self.tau_soft), "train.tau_soft must be in (0, 1]");
        need(self.hidden >= 1, "train.hidden must be >= 1");
        need(!self.seeds.is_empty(), "train.seeds must list at least one seed");
        need(self.steps_per_epoch >= 1, "train.steps_per_epoch must be >= 1");
        need(self.m >= 1, "ensemble.m must be >= 1");
        need(self.n_quantiles >= 1, "cost.n_quantiles must be >= 1");
        need(self.kappa > 0.0, "cost.kappa must be > 0");
        need(unit_half(self.cost_epsilon), "cost.epsilon must be in (0, 1]");
        need(unit_half(self.constraint_epsilon), "constraint.epsilon must be in (0, 1]");
        need(self.cost_lr > 0.0, "cost.lr must be > 0");
        need(self.policy_lr > 0.0, "policy.lr must be > 0");
        need(self.alpha_lr > 0.0, "policy.alpha_lr must be > 0");
        need(self.alpha > 0.0 && self.alpha.is_finite(), "policy.alpha must be > 0");
        need(self.eta_lambda > 0.0, "constraint.eta_lambda must be > 0");
        need(self.beta.is_finite(), "constraint.beta must be finite");
        need(self.window >= 1, "constraint.window must be >= 1");
        need(self.tighten_delta >= 0.0, "constraint.tighten_delta must be >= 0");
        need(self.env.v_limit.is_finite(), "env.v_limit must be finite");
        need(self.env.reset_noise >= 0.0, "env.reset_noise must be >= 0");
        need(unit_open(self.optim.beta1) || self.optim.beta1 == 0.0, "optim.beta1 must be in [0, 1)");
        if let Err(e) = self.optim.validate() {
            bad.push(format!("optim: {}", strip(e)));
        }
        if self.tighten_delta > 0.0 {
            if let Err(e) = self.effective_beta() {
                bad.push(format!("constraint.tighten_delta: {}", strip(e)));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(s) => s,
        other => other.to_string(),
    }
}
