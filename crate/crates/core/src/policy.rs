//! Tanh-squashed Gaussian policy, the Lagrangian actor objective and the
//! entropy temperature.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cost::{CvarMode, QuantileCostCritic};
use crate::ensemble::RewardEnsemble;
use crate::env::concat_cols;
use crate::error::{Error, Result};
use crate::nn::{soft_update, Activation, Mlp, MlpGrads, Tape};
use crate::scalar::Scalar;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Added inside the squashing Jacobian `log(1 - a^2 + SQUASH_EPS)`.
pub const SQUASH_EPS: f64 = 1e-6;

/// Entropy temperature, fixed or tuned by Adam on `log alpha`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Temperature<S> {
    pub log_alpha: S,
    pub auto: bool,
    pub target_entropy: S,
    pub lr: S,
    m: S,
    v: S,
    t: u64,
}

impl<S: Scalar> Temperature<S> {
    pub fn new(alpha: S, auto: bool, target_entropy: S, lr: S) -> Result<Self> {
        if !(alpha > S::zero()) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(Self {
            log_alpha: alpha.ln(),
            auto,
            target_entropy,
            lr,
            m: S::zero(),
            v: S::zero(),
            t: 0,
        })
    }

    pub fn alpha(&self) -> S {
        self.log_alpha.exp()
    }

    /// Gradient of `-alpha (mean_log_prob + target_entropy)` in `log alpha`.
    pub fn gradient(&self, mean_log_prob: S) -> S {
        -self.alpha() * (mean_log_prob + self.target_entropy)
    }

    /// One Adam step on `log alpha`; a no-op in fixed mode.
    pub fn update(&mut self, mean_log_prob: S) {
        if !self.auto {
            return;
        }
        let g = self.gradient(mean_log_prob);
        let (b1, b2, eps) = (S::lit(0.9), S::lit(0.999), S::lit(1e-8));
        self.t += 1;
        self.m = b1 * self.m + (S::one() - b1) * g;
        self.v = b2 * self.v + (S::one() - b2) * g * g;
        let t = self.t as i32;
        let mh = self.m / (S::one() - b1.powi(t));
        let vh = self.v / (S::one() - b2.powi(t));
        self.log_alpha = self.log_alpha - self.lr * mh / (vh.sqrt() + eps);
    }
}

/// Batched reparameterized sample.
#[derive(Debug, Clone)]
pub struct PolicySample<S> {
    pub actions: Array2<S>,
    pub log_probs: Array1<S>,
    pub noise: Array2<S>,
    pub mean: Array2<S>,
    pub log_std: Array2<S>,
}

#[derive(Debug, Clone)]
pub struct GaussianPolicy<S> {
    /// `obs -> [mean, raw log_std]`.
    pub online: Mlp<S>,
    pub target: Mlp<S>,
    pub temperature: Temperature<S>,
    act_dim: usize,
}

struct Forward<S> {
    sample: PolicySample<S>,
    /// 1 where the log-std clamp is inactive.
    unclamped: Array2<S>,
    tape: Tape<S>,
}

fn split_heads<S: Scalar>(out: &Array2<S>, act_dim: usize) -> (Array2<S>, Array2<S>, Array2<S>) {
    let mean = out.slice(s![.., ..act_dim]).to_owned();
    let raw = out.slice(s![.., act_dim..]);
    let (lo, hi) = (S::lit(LOG_STD_MIN), S::lit(LOG_STD_MAX));
    let log_std = raw.mapv(|x| x.max(lo).min(hi));
    let unclamped = raw.mapv(|x| if x > lo && x < hi { S::one() } else { S::zero() });
    (mean, log_std, unclamped)
}

/// Log-density of `a = tanh(mean + std * noise)` including the squashing term.
pub fn squashed_log_prob<S: Scalar>(noise: S, log_std: S, action: S) -> S {
    let half_ln_2pi = S::lit(0.5 * (2.0 * std::f64::consts::PI).ln());
    -S::lit(0.5) * noise * noise - log_std - half_ln_2pi
        - (S::one() - action * action + S::lit(SQUASH_EPS)).ln()
}

fn draw_noise<S: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<S> {
    Array2::from_shape_fn((rows, cols), |_| S::lit(rng.sample::<f64, _>(StandardNormal)))
}

impl<S: Scalar> GaussianPolicy<S> {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        act_dim: usize,
        hidden: usize,
        temperature: Temperature<S>,
        rng: &mut R,
    ) -> Result<Self> {
        let online = Mlp::new(
            &[obs_dim, hidden, hidden, 2 * act_dim],
            Activation::Relu,
            Activation::Identity,
            rng,
        )?;
        Self::from_net(online, temperature)
    }

    pub fn from_net(online: Mlp<S>, temperature: Temperature<S>) -> Result<Self> {
        let out = online.output_dim();
        if out == 0 || out % 2 != 0 {
            return Err(Error::ShapeMismatch(format!(
                "policy head must output [mean, log_std], got width {out}"
            )));
        }
        Ok(Self {
            target: online.clone(),
            online,
            temperature,
            act_dim: out / 2,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.online.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn alpha(&self) -> S {
        self.temperature.alpha()
    }

    fn sample_net(net: &Mlp<S>, act_dim: usize, s: ArrayView2<S>, noise: Array2<S>) -> Result<PolicySample<S>> {
        let out = net.predict(s)?;
        let (mean, log_std, _) = split_heads(&out, act_dim);
        Ok(Self::assemble(mean, log_std, noise))
    }

    fn assemble(mean: Array2<S>, log_std: Array2<S>, noise: Array2<S>) -> PolicySample<S> {
        let mut actions = mean.clone();
        let mut log_probs = Array1::zeros(mean.nrows());
        for ((b, j), a) in actions.indexed_iter_mut() {
            let (ls, xi) = (log_std[[b, j]], noise[[b, j]]);
            *a = (*a + ls.exp() * xi).tanh();
            log_probs[b] = log_probs[b] + squashed_log_prob(xi, ls, *a);
        }
        PolicySample {
            actions,
            log_probs,
            noise,
            mean,
            log_std,
        }
    }

    fn check_noise(&self, rows: usize, noise: &Array2<S>) -> Result<()> {
        if noise.dim() != (rows, self.act_dim) {
            return Err(Error::ShapeMismatch(format!(
                "noise shape {:?}, expected ({rows}, {})",
                noise.dim(),
                self.act_dim
            )));
        }
        Ok(())
    }

    /// Sample from the online policy with explicit standard-normal noise.
    pub fn online_sample_with_noise(&self, s: ArrayView2<S>, noise: Array2<S>) -> Result<PolicySample<S>> {
        self.check_noise(s.nrows(), &noise)?;
        Self::sample_net(&self.online, self.act_dim, s, noise)
    }

    pub fn online_sample<R: Rng + ?Sized>(&self, s: ArrayView2<S>, rng: &mut R) -> Result<PolicySample<S>> {
        let noise = draw_noise(s.nrows(), self.act_dim, rng);
        Self::sample_net(&self.online, self.act_dim, s, noise)
    }

    pub fn target_sample<R: Rng + ?Sized>(&self, s: ArrayView2<S>, rng: &mut R) -> Result<PolicySample<S>> {
        let noise = draw_noise(s.nrows(), self.act_dim, rng);
        Self::sample_net(&self.target, self.act_dim, s, noise)
    }

    /// `tanh(mean)` for every row.
    pub fn deterministic_actions(&self, s: ArrayView2<S>) -> Result<Array2<S>> {
        let out = self.online.predict(s)?;
        Ok(out.slice(s![.., ..self.act_dim]).mapv(|x| x.tanh()))
    }

    /// Single-state action; the log-probability is `None` in deterministic mode.
    pub fn sample_action<R: Rng + ?Sized>(
        &self,
        s: &[S],
        rng: &mut R,
        deterministic: bool,
    ) -> Result<(Vec<S>, Option<S>)> {
        if s.len() != self.obs_dim() {
            return Err(Error::DimensionMismatch {
                what: "policy input",
                expected: self.obs_dim(),
                got: s.len(),
            });
        }
        let x = ArrayView2::from_shape((1, s.len()), s).expect("row vector");
        if deterministic {
            return Ok((self.deterministic_actions(x)?.into_raw_vec_and_offset().0, None));
        }
        let smp = self.online_sample(x, rng)?;
        Ok((smp.actions.into_raw_vec_and_offset().0, Some(smp.log_probs[0])))
    }

    fn forward_with_noise(&self, s: ArrayView2<S>, noise: Array2<S>) -> Result<Forward<S>> {
        self.check_noise(s.nrows(), &noise)?;
        let (out, tape) = self.online.forward_batch(s)?;
        let (mean, log_std, unclamped) = split_heads(&out, self.act_dim);
        Ok(Forward {
            sample: Self::assemble(mean, log_std, noise),
            unclamped,
            tape,
        })
    }

    pub fn soft_update_target(&mut self, tau: S) -> Result<()> {
        soft_update(&self.online, &mut self.target, tau)
    }
}

/// Actor objective split into its terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyLoss<S> {
    /// `-mean(Q-bar) + alpha mean(log pi) + lambda mean(CVaR)`.
    pub total: S,
    pub mean_q: S,
    pub mean_log_prob: S,
    pub mean_cvar: S,
}

/// Loss and exact reparameterized gradient with frozen sampling noise.
#[allow(clippy::too_many_arguments)]
pub fn policy_loss_with_noise<S: Scalar>(
    policy: &GaussianPolicy<S>,
    ens: &RewardEnsemble<S>,
    cost: &QuantileCostCritic<S>,
    states: &Array2<S>,
    noise: Array2<S>,
    alpha: S,
    lambda: S,
    epsilon: S,
    n_quantiles: usize,
) -> Result<(PolicyLoss<S>, MlpGrads<S>)> {
    let bsz = states.nrows();
    if bsz == 0 {
        return Err(Error::EmptyBatch);
    }
    let fw = policy.forward_with_noise(states.view(), noise)?;
    let smp = &fw.sample;
    let (q, dq_da) = ens.q_bar_with_action_grad(states, &smp.actions)?;
    let sa = concat_cols(states, &smp.actions);
    // The stratified grid is deterministic, so the generator is never read.
    let mut unused = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let (cvar, dc_dsa) =
        cost.cvar_with_input_grad(sa.view(), epsilon, n_quantiles, CvarMode::Stratified, &mut unused)?;
    let od = states.ncols();
    let dc_da = dc_dsa.slice(s![.., od..]);

    let inv_b = S::one() / S::lit(bsz as f64);
    let mean_q = q.sum() * inv_b;
    let mean_log_prob = smp.log_probs.sum() * inv_b;
    let mean_cvar = cvar.sum() * inv_b;
    let total = -mean_q + alpha * mean_log_prob + lambda * mean_cvar;

    let ad = policy.act_dim();
    let mut g_out = Array2::<S>::zeros((bsz, 2 * ad));
    let eps_sq = S::lit(SQUASH_EPS);
    for b in 0..bsz {
        for j in 0..ad {
            let a = smp.actions[[b, j]];
            let one_m = S::one() - a * a;
            let dl_da = -(dq_da[[b, j]] - lambda * dc_da[[b, j]]) * inv_b;
            let dlogp_du = S::lit(2.0) * a * one_m / (one_m + eps_sq);
            let dl_du = dl_da * one_m + alpha * inv_b * dlogp_du;
            let std = smp.log_std[[b, j]].exp();
            g_out[[b, j]] = dl_du;
            g_out[[b, ad + j]] =
                fw.unclamped[[b, j]] * (dl_du * std * smp.noise[[b, j]] - alpha * inv_b);
        }
    }
    let grads = policy.online.param_grads(&fw.tape, g_out.view())?;
    Ok((
        PolicyLoss {
            total,
            mean_q,
            mean_log_prob,
            mean_cvar,
        },
        grads,
    ))
}

/// Actor loss with fresh reparameterization noise.
#[allow(clippy::too_many_arguments)]
pub fn policy_loss<S: Scalar, R: Rng + ?Sized>(
    policy: &GaussianPolicy<S>,
    ens: &RewardEnsemble<S>,
    cost: &QuantileCostCritic<S>,
    states: &Array2<S>,
    alpha: S,
    lambda: S,
    epsilon: S,
    n_quantiles: usize,
    rng: &mut R,
) -> Result<(PolicyLoss<S>, MlpGrads<S>)> {
    let noise = draw_noise(states.nrows(), policy.act_dim(), rng);
    policy_loss_with_noise(policy, ens, cost, states, noise, alpha, lambda, epsilon, n_quantiles)
}

/// Mean of a batch of log-probabilities, for the temperature update.
pub fn mean_log_prob<S: Scalar>(log_probs: &Array1<S>) -> S {
    log_probs.mean_axis(Axis(0)).map(|m| m.into_scalar()).unwrap_or(S::zero())
}
