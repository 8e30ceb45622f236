//! Episode-cost window and the empirical-CVaR Lagrange multiplier.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost::{empirical_cvar, tail_count};
use crate::error::{Error, Result};

/// FIFO of undiscounted episode cost totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeCostWindow {
    buf: VecDeque<f64>,
    capacity: usize,
}

impl EpisodeCostWindow {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("window capacity must be >= 1".into()));
        }
        Ok(Self {
            buf: VecDeque::with_capacity(capacity),
            capacity,
        })
    }

    pub fn from_values(capacity: usize, values: &[f64]) -> Result<Self> {
        let mut w = Self::new(capacity)?;
        for &v in values {
            w.record_cost(v);
        }
        Ok(w)
    }

    pub fn record_cost(&mut self, episode_total: f64) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(episode_total);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn values(&self) -> Vec<f64> {
        self.buf.iter().copied().collect()
    }

    pub fn empirical_cvar(&self, epsilon: f64) -> Result<f64> {
        empirical_cvar(&self.values(), epsilon)
    }

    pub fn mean(&self) -> Result<f64> {
        empirical_cvar(&self.values(), 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalMode {
    Cvar,
    Expected,
}

impl FromStr for SignalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cvar" => Ok(SignalMode::Cvar),
            "expected" => Ok(SignalMode::Expected),
            _ => Err(Error::InvalidArgument(format!("unknown signal mode `{s}`"))),
        }
    }
}

impl fmt::Display for SignalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignalMode::Cvar => "cvar",
            SignalMode::Expected => "expected",
        })
    }
}

/// `CVaR_eps(W) - beta` or `mean(W) - beta`.
pub fn violation_signal(
    window: &EpisodeCostWindow,
    epsilon: f64,
    beta: f64,
    mode: SignalMode,
) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(match mode {
        SignalMode::Cvar => window.empirical_cvar(epsilon)?,
        SignalMode::Expected => window.mean()?,
    } - beta)
}

/// Tail mean, body mean and `k` of a window, from one sort.
///
/// The body mean is 0 when `k = N`.
pub fn tail_body_split(values: &[f64], epsilon: f64) -> Result<(f64, f64, usize)> {
    if values.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let k = tail_count(epsilon, n);
    let tail = v[n - k..].iter().sum::<f64>() / k as f64;
    let body = if k < n {
        v[..n - k].iter().sum::<f64>() / (n - k) as f64
    } else {
        0.0
    };
    Ok((tail, body, k))
}

/// Projected ascent multiplier with warmup gating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multiplier {
    pub lambda: f64,
    pub eta_lambda: f64,
    pub beta: f64,
    pub warmup_general: u64,
    /// Counted from the end of the general warmup.
    pub warmup_multiplier: u64,
    pub mode: SignalMode,
}

impl Multiplier {
    pub fn new(beta: f64, eta_lambda: f64, warmup_general: u64, warmup_multiplier: u64) -> Result<Self> {
        if !(eta_lambda > 0.0) || !eta_lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("eta_lambda must be > 0, got {eta_lambda}")));
        }
        if !beta.is_finite() {
            return Err(Error::InvalidArgument("beta must be finite".into()));
        }
        Ok(Self {
            lambda: 0.0,
            eta_lambda,
            beta,
            warmup_general,
            warmup_multiplier,
            mode: SignalMode::Cvar,
        })
    }

    /// First (1-based) step at which the multiplier moves.
    pub fn first_active_step(&self) -> u64 {
        self.warmup_general + self.warmup_multiplier + 1
    }

    pub fn is_active(&self, step: u64) -> bool {
        step >= self.first_active_step()
    }

    /// Signed increment `eta (signal)` that an update at `step` would apply.
    pub fn increment(&self, window: &EpisodeCostWindow, epsilon: f64) -> Result<f64> {
        Ok(self.eta_lambda * violation_signal(window, epsilon, self.beta, self.mode)?)
    }

    /// Applies `lambda <- max(0, lambda + eta (signal))`; returns whether
    /// an update happened.
    pub fn update_lambda(&mut self, window: &EpisodeCostWindow, epsilon: f64, step: u64) -> Result<bool> {
        if !self.is_active(step) {
            return Ok(false);
        }
        if window.is_empty() {
            log::warn!("multiplier active at step {step} but no episode has finished yet");
            return Ok(false);
        }
        let inc = self.increment(window, epsilon)?;
        self.lambda = (self.lambda + inc).max(0.0);
        Ok(true)
    }
}
