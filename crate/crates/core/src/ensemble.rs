//! Ensemble of `M` twin reward-critic pairs with Langevin or AdamW updates.
//!
//! Critics `2m` and `2m + 1` form pair `m`. Targets and the policy objective
//! use either the mean over pairs of the pair minimum (`MeanMin`) or the
//! global minimum over all `2M` critics (`MinMin`).

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{concat_cols, TransitionBatch};
use crate::error::{Error, Result};
use crate::nn::{check_same_shape, soft_update, Activation, Mlp, MlpGrads};
use crate::optim::{apply_update, OptimizerConfig, OptimizerState, UpdateRule};
use crate::policy::GaussianPolicy;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    MeanMin,
    MinMin,
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_min" => Ok(Aggregation::MeanMin),
            "min_min" => Ok(Aggregation::MinMin),
            _ => Err(Error::InvalidArgument(format!("unknown aggregation `{s}`"))),
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::MeanMin => "mean_min",
            Aggregation::MinMin => "min_min",
        })
    }
}

/// Aggregates the `2M` critic values of one `(s, a)`.
///
/// Pair minima are sorted before summation, so the result does not depend on
/// the order of pairs or of critics within a pair.
pub fn aggregate<S: Scalar>(values: &[S], agg: Aggregation) -> S {
    debug_assert!(values.len() >= 2 && values.len() % 2 == 0);
    match agg {
        Aggregation::MinMin => values.iter().copied().fold(S::infinity(), S::min),
        Aggregation::MeanMin => {
            let mut mins: Vec<S> = values.chunks(2).map(|p| p[0].min(p[1])).collect();
            mins.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            let m = S::lit(mins.len() as f64);
            mins.into_iter().sum::<S>() / m
        }
    }
}

/// Per-critic weights of the aggregate's (sub)gradient.
fn aggregate_weights<S: Scalar>(values: &[S], agg: Aggregation) -> Vec<S> {
    let mut w = vec![S::zero(); values.len()];
    match agg {
        Aggregation::MinMin => {
            let mut best = 0;
            for (i, &v) in values.iter().enumerate() {
                if v < values[best] {
                    best = i;
                }
            }
            w[best] = S::one();
        }
        Aggregation::MeanMin => {
            let share = S::one() / S::lit((values.len() / 2) as f64);
            for p in 0..values.len() / 2 {
                let i = if values[2 * p + 1] < values[2 * p] { 2 * p + 1 } else { 2 * p };
                w[i] = share;
            }
        }
    }
    w
}

#[derive(Debug, Clone)]
pub struct RewardEnsemble<S> {
    pub critics: Vec<Mlp<S>>,
    pub targets: Vec<Mlp<S>>,
    pub opt: Vec<OptimizerState<S>>,
    rngs: Vec<ChaCha8Rng>,
    pub aggregation: Aggregation,
    pub rule: UpdateRule,
}

/// Noise stream of critic `index` for a run seeded with `seed`.
pub fn critic_stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(1000 + index as u64);
    r
}

impl<S: Scalar> RewardEnsemble<S> {
    /// `2M` freshly initialized critics `[obs + act, H, H, 1]`.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        act_dim: usize,
        hidden: usize,
        m: usize,
        aggregation: Aggregation,
        rule: UpdateRule,
        opt: OptimizerConfig<S>,
        seed: u64,
        rng: &mut R,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("ensemble needs M >= 1".into()));
        }
        let critics = (0..2 * m)
            .map(|_| {
                Mlp::new(
                    &[obs_dim + act_dim, hidden, hidden, 1],
                    Activation::Relu,
                    Activation::Identity,
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_critics(critics, aggregation, rule, opt, seed)
    }

    /// Wraps existing critics; targets start as copies.
    pub fn from_critics(
        critics: Vec<Mlp<S>>,
        aggregation: Aggregation,
        rule: UpdateRule,
        opt: OptimizerConfig<S>,
        seed: u64,
    ) -> Result<Self> {
        if critics.is_empty() || critics.len() % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "ensemble needs an even, nonzero number of critics, got {}",
                critics.len()
            )));
        }
        for c in &critics[1..] {
            check_same_shape(&critics[0], c)?;
        }
        if critics[0].output_dim() != 1 {
            return Err(Error::ShapeMismatch("reward critics must output a scalar".into()));
        }
        opt.validate()?;
        let opt_states = critics
            .iter()
            .map(|c| OptimizerState::new(c, opt))
            .collect::<Result<Vec<_>>>()?;
        let rngs = (0..critics.len()).map(|i| critic_stream(seed, i)).collect();
        Ok(Self {
            targets: critics.clone(),
            critics,
            opt: opt_states,
            rngs,
            aggregation,
            rule,
        })
    }

    pub fn m(&self) -> usize {
        self.critics.len() / 2
    }

    pub fn input_dim(&self) -> usize {
        self.critics[0].input_dim()
    }

    fn values(nets: &[Mlp<S>], sa: ArrayView2<S>) -> Result<Vec<Array1<S>>> {
        nets.iter()
            .map(|c| Ok(c.predict(sa)?.column(0).to_owned()))
            .collect()
    }

    fn aggregate_rows(&self, vals: &[Array1<S>]) -> Array1<S> {
        let n = vals[0].len();
        let mut buf = vec![S::zero(); vals.len()];
        Array1::from_shape_fn(n, |b| {
            for (k, v) in vals.iter().enumerate() {
                buf[k] = v[b];
            }
            aggregate(&buf, self.aggregation)
        })
    }

    /// Individual online critic values at one `(s, a)`.
    pub fn q_values(&self, s: &[S], a: &[S]) -> Result<Vec<S>> {
        let x: Vec<S> = s.iter().chain(a).copied().collect();
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "reward critic input",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let sa = ArrayView2::from_shape((1, x.len()), &x).expect("row vector");
        Ok(Self::values(&self.critics, sa)?.iter().map(|v| v[0]).collect())
    }

    /// Aggregated online value `Q-bar(s, a)`.
    pub fn q_bar(&self, s: &[S], a: &[S]) -> Result<S> {
        Ok(aggregate(&self.q_values(s, a)?, self.aggregation))
    }

    /// Batched `Q-bar` and its gradient with respect to the actions.
    pub fn q_bar_with_action_grad(
        &self,
        s: &Array2<S>,
        a: &Array2<S>,
    ) -> Result<(Array1<S>, Array2<S>)> {
        let sa = concat_cols(s, a);
        let bsz = sa.nrows();
        let mut vals = Vec::with_capacity(self.critics.len());
        let mut tapes = Vec::with_capacity(self.critics.len());
        for c in &self.critics {
            let (v, t) = c.forward_batch(sa.view())?;
            vals.push(v.column(0).to_owned());
            tapes.push(t);
        }
        let q = self.aggregate_rows(&vals);
        let mut weights = vec![Array2::<S>::zeros((bsz, 1)); self.critics.len()];
        let mut buf = vec![S::zero(); vals.len()];
        for b in 0..bsz {
            for (k, v) in vals.iter().enumerate() {
                buf[k] = v[b];
            }
            for (k, w) in aggregate_weights(&buf, self.aggregation).into_iter().enumerate() {
                weights[k][[b, 0]] = w;
            }
        }
        let od = s.ncols();
        let mut ga = Array2::<S>::zeros(a.raw_dim());
        for (k, c) in self.critics.iter().enumerate() {
            if weights[k].iter().all(|&w| w == S::zero()) {
                continue;
            }
            let gin = c.input_grad(&tapes[k], weights[k].view())?;
            ga += &gin.slice(ndarray::s![.., od..]);
        }
        Ok((q, ga))
    }

    /// Bellman targets for explicit next actions and their log-probabilities.
    pub fn target_from_actions(
        &self,
        batch: &TransitionBatch<S>,
        next_actions: &Array2<S>,
        next_log_probs: &Array1<S>,
        alpha: S,
        gamma: S,
    ) -> Result<Array1<S>> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if next_actions.nrows() != batch.len() || next_log_probs.len() != batch.len() {
            return Err(Error::DimensionMismatch {
                what: "next actions",
                expected: batch.len(),
                got: next_actions.nrows(),
            });
        }
        let sa = concat_cols(&batch.s_next, next_actions);
        let vals = Self::values(&self.targets, sa.view())?;
        let q = self.aggregate_rows(&vals);
        Ok(Array1::from_shape_fn(batch.len(), |b| {
            if batch.d[b] == S::one() {
                batch.r[b]
            } else {
                batch.r[b] + gamma * (S::one() - batch.d[b]) * (q[b] - alpha * next_log_probs[b])
            }
        }))
    }

    /// Bellman targets with `a' ~ pi_target(.|s')`.
    pub fn ensemble_target<R: Rng + ?Sized>(
        &self,
        batch: &TransitionBatch<S>,
        policy: &GaussianPolicy<S>,
        alpha: S,
        gamma: S,
        rng: &mut R,
    ) -> Result<Array1<S>> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let next = policy.target_sample(batch.s_next.view(), rng)?;
        self.target_from_actions(batch, &next.actions, &next.log_probs, alpha, gamma)
    }

    /// Per-critic mean squared Bellman error and gradients.
    pub fn ensemble_loss(
        &self,
        batch: &TransitionBatch<S>,
        targets: &Array1<S>,
    ) -> Result<Vec<(S, MlpGrads<S>)>> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if targets.len() != batch.len() {
            return Err(Error::DimensionMismatch {
                what: "Bellman targets",
                expected: batch.len(),
                got: targets.len(),
            });
        }
        let sa = concat_cols(&batch.s, &batch.a);
        let inv_b = S::one() / S::lit(batch.len() as f64);
        self.critics
            .iter()
            .map(|c| {
                let (q, tape) = c.forward_batch(sa.view())?;
                let diff = &q.column(0) - targets;
                let loss = diff.iter().map(|&e| e * e).sum::<S>() * inv_b;
                let g = diff.mapv(|e| S::lit(2.0) * e * inv_b).insert_axis(ndarray::Axis(1));
                Ok((loss, c.param_grads(&tape, g.view())?))
            })
            .collect()
    }

    /// Steps every critic once against a shared target vector.
    pub fn update_with_targets(
        &mut self,
        batch: &TransitionBatch<S>,
        targets: &Array1<S>,
    ) -> Result<Vec<S>> {
        let grads = self.ensemble_loss(batch, targets)?;
        let mut losses = Vec::with_capacity(grads.len());
        for (i, (loss, g)) in grads.into_iter().enumerate() {
            if !loss.is_finite() {
                return Err(Error::NonFinite("reward critic loss"));
            }
            apply_update(self.rule, &mut self.critics[i], &g, &mut self.opt[i], &mut self.rngs[i])?;
            losses.push(loss);
        }
        Ok(losses)
    }

    /// One ensemble update: shared targets, then one optimizer step per critic.
    pub fn ensemble_update<R: Rng + ?Sized>(
        &mut self,
        batch: &TransitionBatch<S>,
        policy: &GaussianPolicy<S>,
        alpha: S,
        gamma: S,
        rng: &mut R,
    ) -> Result<Vec<S>> {
        let y = self.ensemble_target(batch, policy, alpha, gamma, rng)?;
        self.update_with_targets(batch, &y)
    }

    pub fn soft_update_targets(&mut self, tau: S) -> Result<()> {
        for (c, t) in self.critics.iter().zip(self.targets.iter_mut()) {
            soft_update(c, t, tau)?;
        }
        Ok(())
    }
}
