//! Distributional cost critic (implicit quantile network) and CVaR estimators.
//!
//! The critic maps `(s, a, tau)` to the `tau`-quantile of the discounted cost
//! return:
//!
//! ```text
//! phi(s, a)  = trunk(s ++ a)                       (2 ReLU layers, width H)
//! e(tau)     = ReLU(W [cos(pi i tau)]_{i<64} + b)   (width H)
//! Z(s,a;tau) = head(phi(s, a) * e(tau))             (H -> H ReLU -> 1)
//! ```
//!
//! It is trained by quantile-Huber regression against a frozen target copy
//! and queried for CVaR by averaging quantiles drawn from the upper tail
//! `[1 - eps, 1]`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{concat_cols, TransitionBatch};
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, MlpGrads, ParamSet, Tape};
use crate::policy::GaussianPolicy;
use crate::scalar::Scalar;

/// Number of cosine features fed to the quantile embedding.
pub const EMBED_DIM: usize = 64;

/// Cosine features `cos(pi * i * tau)` for `i = 0..64`.
pub fn cosine_features<S: Scalar>(tau: S) -> Result<Vec<S>> {
    check_tau(tau)?;
    Ok((0..EMBED_DIM)
        .map(|i| (S::PI() * S::lit(i as f64) * tau).cos())
        .collect())
}

fn check_tau<S: Scalar>(tau: S) -> Result<()> {
    if tau >= S::zero() && tau <= S::one() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("quantile fraction {tau} outside [0, 1]")))
    }
}

/// Huber loss with threshold `kappa`.
#[inline]
pub fn huber<S: Scalar>(delta: S, kappa: S) -> S {
    let ad = delta.abs();
    if ad <= kappa {
        S::lit(0.5) * delta * delta
    } else {
        kappa * (ad - S::lit(0.5) * kappa)
    }
}

#[inline]
fn huber_grad<S: Scalar>(delta: S, kappa: S) -> S {
    if delta.abs() <= kappa {
        delta
    } else {
        kappa * delta.signum()
    }
}

#[inline]
fn tau_weight<S: Scalar>(delta: S, tau: S) -> S {
    let ind = if delta < S::zero() { S::one() } else { S::zero() };
    (tau - ind).abs()
}

/// Quantile Huber loss `|tau - 1{delta < 0}| * huber(delta, kappa)`.
#[inline]
pub fn quantile_huber<S: Scalar>(delta: S, tau: S, kappa: S) -> S {
    tau_weight(delta, tau) * huber(delta, kappa)
}

/// Derivative of [`quantile_huber`] with respect to `delta`.
#[inline]
pub fn quantile_huber_grad<S: Scalar>(delta: S, tau: S, kappa: S) -> S {
    tau_weight(delta, tau) * huber_grad(delta, kappa)
}

/// Number of tail samples `k = ceil(eps * n)`, clamped to `[1, n]`.
///
/// Products that land within `1e-9` of an integer are treated as that integer
/// so that, e.g., `0.07 * 100 = 7.000000000000001` yields 7 rather than 8.
pub fn tail_count(eps: f64, n: usize) -> usize {
    let x = eps * n as f64;
    let r = x.round();
    let k = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    (k as usize).clamp(1, n.max(1))
}

fn sorted_finite<S: Scalar>(samples: &[S]) -> Result<Vec<S>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("samples"));
    }
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Ok(v)
}

fn check_epsilon(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("risk level {eps} outside (0, 1]")))
    }
}

/// Empirical CVaR: mean of the largest `ceil(eps * N)` samples.
pub fn empirical_cvar<S: Scalar>(samples: &[S], eps: S) -> Result<S> {
    check_epsilon(eps.as_f64())?;
    let v = sorted_finite(samples)?;
    let n = v.len();
    let k = tail_count(eps.as_f64(), n);
    let tail: S = v[n - k..].iter().copied().sum();
    Ok(tail / S::lit(k as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvarMode {
    /// `tau_k ~ U[1 - eps, 1]`, drawn afresh for every call.
    Sampled,
    /// Midpoint grid `tau_k = 1 - eps + eps (k - 1/2) / N`.
    Stratified,
}

impl FromStr for CvarMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sampled" => Ok(CvarMode::Sampled),
            "stratified" => Ok(CvarMode::Stratified),
            _ => Err(Error::InvalidArgument(format!("unknown CVaR mode `{s}`"))),
        }
    }
}

impl fmt::Display for CvarMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CvarMode::Sampled => "sampled",
            CvarMode::Stratified => "stratified",
        })
    }
}

/// Tail quantile fractions for `rows` CVaR estimates, shape `[rows, n]`.
pub fn tail_taus<S: Scalar, R: Rng + ?Sized>(
    rows: usize,
    eps: S,
    n: usize,
    mode: CvarMode,
    rng: &mut R,
) -> Result<Array2<S>> {
    check_epsilon(eps.as_f64())?;
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one quantile".into()));
    }
    let lo = S::one() - eps;
    Ok(match mode {
        CvarMode::Stratified => Array2::from_shape_fn((rows, n), |(_, k)| {
            lo + eps * (S::lit(k as f64) + S::lit(0.5)) / S::lit(n as f64)
        }),
        CvarMode::Sampled => Array2::from_shape_fn((rows, n), |_| {
            let u: f64 = rng.random();
            (lo + eps * S::lit(u)).min(S::one())
        }),
    })
}

/// Trunk, quantile embedding and head of one implicit quantile network.
#[derive(Debug, Clone)]
pub struct IqnNet<S> {
    pub trunk: Mlp<S>,
    pub embed: Mlp<S>,
    pub head: Mlp<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IqnGrads<S> {
    pub trunk: MlpGrads<S>,
    pub embed: MlpGrads<S>,
    pub head: MlpGrads<S>,
}

impl<S: Scalar> IqnGrads<S> {
    pub fn zeros_like(net: &IqnNet<S>) -> Self {
        Self {
            trunk: MlpGrads::zeros_like(&net.trunk),
            embed: MlpGrads::zeros_like(&net.embed),
            head: MlpGrads::zeros_like(&net.head),
        }
    }
}

pub struct IqnTape<S> {
    trunk: Tape<S>,
    embed: Tape<S>,
    head: Tape<S>,
    features: Array2<S>,
    embedding: Array2<S>,
    n: usize,
}

impl<S: Scalar> IqnNet<S> {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            trunk: Mlp::new(&[input_dim, hidden, hidden], Activation::Relu, Activation::Relu, rng)?,
            embed: Mlp::new(&[EMBED_DIM, hidden], Activation::Relu, Activation::Relu, rng)?,
            head: Mlp::new(&[hidden, hidden, 1], Activation::Relu, Activation::Identity, rng)?,
        })
    }

    /// Assembles a network from parts after checking the widths agree.
    pub fn from_parts(trunk: Mlp<S>, embed: Mlp<S>, head: Mlp<S>) -> Result<Self> {
        let h = trunk.output_dim();
        if embed.input_dim() != EMBED_DIM || embed.output_dim() != h || head.input_dim() != h {
            return Err(Error::ShapeMismatch(format!(
                "IQN parts incompatible: trunk out {h}, embed {}->{}, head in {}",
                embed.input_dim(),
                embed.output_dim(),
                head.input_dim()
            )));
        }
        if head.output_dim() != 1 {
            return Err(Error::ShapeMismatch("IQN head must output a scalar".into()));
        }
        Ok(Self { trunk, embed, head })
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    fn cosines(taus: &ArrayView2<S>) -> Result<Array2<S>> {
        let (b, n) = taus.dim();
        let mut out = Array2::zeros((b * n, EMBED_DIM));
        for ((bi, k), &tau) in taus.indexed_iter() {
            check_tau(tau)?;
            let mut row = out.row_mut(bi * n + k);
            for (i, x) in row.iter_mut().enumerate() {
                *x = (S::PI() * S::lit(i as f64) * tau).cos();
            }
        }
        Ok(out)
    }

    fn mix(features: &Array2<S>, embedding: &Array2<S>, n: usize) -> Array2<S> {
        let mut x = embedding.clone();
        for (r, mut row) in x.axis_iter_mut(Axis(0)).enumerate() {
            row *= &features.row(r / n);
        }
        x
    }

    fn check_rows(&self, sa: &ArrayView2<S>, taus: &ArrayView2<S>) -> Result<()> {
        if sa.nrows() != taus.nrows() {
            return Err(Error::DimensionMismatch {
                what: "quantile fraction rows",
                expected: sa.nrows(),
                got: taus.nrows(),
            });
        }
        Ok(())
    }

    /// Quantile values for every `(row, tau)` pair, shape `[B, N]`.
    pub fn predict_pairs(&self, sa: ArrayView2<S>, taus: ArrayView2<S>) -> Result<Array2<S>> {
        self.check_rows(&sa, &taus)?;
        let (b, n) = taus.dim();
        let f = self.trunk.predict(sa)?;
        let e = self.embed.predict(Self::cosines(&taus)?.view())?;
        let out = self.head.predict(Self::mix(&f, &e, n).view())?;
        Ok(out.into_shape_with_order((b, n)).expect("B*N x 1 output"))
    }

    pub fn forward_pairs(
        &self,
        sa: ArrayView2<S>,
        taus: ArrayView2<S>,
    ) -> Result<(Array2<S>, IqnTape<S>)> {
        self.check_rows(&sa, &taus)?;
        let (b, n) = taus.dim();
        let (features, trunk) = self.trunk.forward_batch(sa)?;
        let (embedding, embed) = self.embed.forward_batch(Self::cosines(&taus)?.view())?;
        let (out, head) = self.head.forward_batch(Self::mix(&features, &embedding, n).view())?;
        let tape = IqnTape {
            trunk,
            embed,
            head,
            features,
            embedding,
            n,
        };
        Ok((out.into_shape_with_order((b, n)).expect("B*N x 1 output"), tape))
    }

    fn replay(
        &self,
        tape: &IqnTape<S>,
        grad: ArrayView2<S>,
        want_params: bool,
    ) -> Result<(Option<IqnGrads<S>>, Array2<S>)> {
        let (b, n) = grad.dim();
        if n != tape.n || b * n != tape.embedding.nrows() {
            return Err(Error::DimensionMismatch {
                what: "quantile gradient",
                expected: tape.embedding.nrows(),
                got: b * n,
            });
        }
        let g = grad
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((b * n, 1))
            .expect("contiguous");
        let (head_g, gx) = if want_params {
            let (hg, gx) = self.head.backward_batch(&tape.head, g.view())?;
            (Some(hg), gx)
        } else {
            (None, self.head.input_grad(&tape.head, g.view())?)
        };
        let h = tape.features.ncols();
        let mut g_feat = Array2::<S>::zeros((b, h));
        let mut g_emb = gx.clone();
        for r in 0..b * n {
            let f = tape.features.row(r / n);
            let e = tape.embedding.row(r);
            let gxr = gx.row(r);
            let mut gf = g_feat.row_mut(r / n);
            Zip::from(&mut gf).and(&gxr).and(&e).for_each(|acc, &gxv, &ev| {
                *acc = *acc + gxv * ev;
            });
            let mut ge = g_emb.row_mut(r);
            ge *= &f;
        }
        let (trunk_g, g_in) = if want_params {
            let (tg, gi) = self.trunk.backward_batch(&tape.trunk, g_feat.view())?;
            (Some(tg), gi)
        } else {
            (None, self.trunk.input_grad(&tape.trunk, g_feat.view())?)
        };
        let grads = if want_params {
            Some(IqnGrads {
                trunk: trunk_g.expect("requested"),
                embed: self.embed.param_grads(&tape.embed, g_emb.view())?,
                head: head_g.expect("requested"),
            })
        } else {
            None
        };
        Ok((grads, g_in))
    }

    /// Parameter and input gradients of `sum(values * grad)`.
    pub fn backward_pairs(
        &self,
        tape: &IqnTape<S>,
        grad: ArrayView2<S>,
    ) -> Result<(IqnGrads<S>, Array2<S>)> {
        let (g, gi) = self.replay(tape, grad, true)?;
        Ok((g.expect("requested"), gi))
    }

    /// Input gradient only; the critic is treated as frozen.
    pub fn input_grad_pairs(&self, tape: &IqnTape<S>, grad: ArrayView2<S>) -> Result<Array2<S>> {
        Ok(self.replay(tape, grad, false)?.1)
    }
}

impl<S: Scalar> ParamSet<S> for IqnNet<S> {
    fn tensors(&self) -> Vec<&[S]> {
        let mut v = self.trunk.tensors();
        v.extend(self.embed.tensors());
        v.extend(self.head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [S]> {
        let mut v = self.trunk.tensors_mut();
        v.extend(self.embed.tensors_mut());
        v.extend(self.head.tensors_mut());
        v
    }
}

impl<S: Scalar> ParamSet<S> for IqnGrads<S> {
    fn tensors(&self) -> Vec<&[S]> {
        let mut v = self.trunk.tensors();
        v.extend(self.embed.tensors());
        v.extend(self.head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [S]> {
        let mut v = self.trunk.tensors_mut();
        v.extend(self.embed.tensors_mut());
        v.extend(self.head.tensors_mut());
        v
    }
}

/// Online cost critic and its frozen target copy.
#[derive(Debug, Clone)]
pub struct QuantileCostCritic<S> {
    pub online: IqnNet<S>,
    pub target: IqnNet<S>,
}

impl<S: Scalar> QuantileCostCritic<S> {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        act_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let online = IqnNet::new(obs_dim + act_dim, hidden, rng)?;
        Ok(Self {
            target: online.clone(),
            online,
        })
    }

    pub fn from_nets(online: IqnNet<S>, target: IqnNet<S>) -> Result<Self> {
        crate::nn::check_same_shape(&online, &target)?;
        Ok(Self { online, target })
    }

    /// Quantile estimates of the online critic at one `(s, a)`.
    pub fn quantiles(&self, s: &[S], a: &[S], taus: &[S]) -> Result<Vec<S>> {
        let mut x = Vec::with_capacity(s.len() + a.len());
        x.extend_from_slice(s);
        x.extend_from_slice(a);
        if x.len() != self.online.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "cost critic input",
                expected: self.online.input_dim(),
                got: x.len(),
            });
        }
        let sa = ArrayView2::from_shape((1, x.len()), &x).expect("row vector");
        let t = ArrayView2::from_shape((1, taus.len()), taus).expect("row vector");
        Ok(self.online.predict_pairs(sa, t)?.into_raw_vec_and_offset().0)
    }

    /// CVaR estimate at one `(s, a)`: mean of `n` upper-tail quantiles.
    pub fn cvar<R: Rng + ?Sized>(
        &self,
        s: &[S],
        a: &[S],
        eps: S,
        n: usize,
        mode: CvarMode,
        rng: &mut R,
    ) -> Result<S> {
        let taus = tail_taus(1, eps, n, mode, rng)?;
        let q = self.quantiles(s, a, taus.as_slice().expect("contiguous"))?;
        Ok(q.iter().copied().sum::<S>() / S::lit(n as f64))
    }

    /// Row-wise CVaR estimates for a batch of critic inputs.
    pub fn cvar_batch<R: Rng + ?Sized>(
        &self,
        sa: ArrayView2<S>,
        eps: S,
        n: usize,
        mode: CvarMode,
        rng: &mut R,
    ) -> Result<Array1<S>> {
        let taus = tail_taus(sa.nrows(), eps, n, mode, rng)?;
        let q = self.online.predict_pairs(sa, taus.view())?;
        Ok(q.mean_axis(Axis(1)).expect("n >= 1"))
    }

    /// Row-wise CVaR and its gradient with respect to the critic input.
    pub fn cvar_with_input_grad<R: Rng + ?Sized>(
        &self,
        sa: ArrayView2<S>,
        eps: S,
        n: usize,
        mode: CvarMode,
        rng: &mut R,
    ) -> Result<(Array1<S>, Array2<S>)> {
        let taus = tail_taus(sa.nrows(), eps, n, mode, rng)?;
        let (q, tape) = self.online.forward_pairs(sa, taus.view())?;
        let cvar = q.mean_axis(Axis(1)).expect("n >= 1");
        let g = Array2::from_elem(q.raw_dim(), S::one() / S::lit(n as f64));
        let gin = self.online.input_grad_pairs(&tape, g.view())?;
        Ok((cvar, gin))
    }
}

/// One-sample CVaR query (`cvar_from_critic`).
pub fn cvar_from_critic<S: Scalar, R: Rng + ?Sized>(
    critic: &QuantileCostCritic<S>,
    s: &[S],
    a: &[S],
    eps: S,
    n: usize,
    rng: &mut R,
    mode: CvarMode,
) -> Result<S> {
    critic.cvar(s, a, eps, n, mode, rng)
}

/// Quantile-regression loss with explicit next actions and quantile fractions.
///
/// `taus` is `[B, N]` (online fractions), `taus_next` is `[B, N']` (target
/// fractions). The loss averages `rho^tau_kappa(delta)` over all `B * N * N'`
/// triples; gradients flow only into the online network.
pub fn cost_critic_loss_with<S: Scalar>(
    critic: &QuantileCostCritic<S>,
    batch: &TransitionBatch<S>,
    next_actions: &Array2<S>,
    taus: &Array2<S>,
    taus_next: &Array2<S>,
    gamma_c: S,
    kappa: S,
) -> Result<(S, IqnGrads<S>)> {
    let bsz = batch.len();
    if bsz == 0 {
        return Err(Error::EmptyBatch);
    }
    if !(kappa > S::zero()) {
        return Err(Error::InvalidArgument("kappa must be > 0".into()));
    }
    let (n, n2) = (taus.ncols(), taus_next.ncols());
    if n == 0 || n2 == 0 {
        return Err(Error::InvalidArgument("need at least one quantile fraction".into()));
    }

    // Bootstrapped targets c + gamma_c (1 - d) Z'(s', a'; tau').
    let live: Array1<S> = batch.d.mapv(|d| gamma_c * (S::one() - d));
    let mut target = Array2::from_shape_fn((bsz, n2), |(b, _)| batch.c[b]);
    if live.iter().any(|&w| w != S::zero()) {
        let sa_next = concat_cols(&batch.s_next, next_actions);
        let zn = critic.target.predict_pairs(sa_next.view(), taus_next.view())?;
        Zip::from(target.rows_mut())
            .and(zn.rows())
            .and(&live)
            .for_each(|mut t, z, &w| {
                Zip::from(&mut t).and(&z).for_each(|t, &z| *t = *t + w * z);
            });
    }

    let sa = concat_cols(&batch.s, &batch.a);
    let (z, tape) = critic.online.forward_pairs(sa.view(), taus.view())?;
    let norm = S::one() / S::lit((bsz * n * n2) as f64);
    let mut loss = S::zero();
    let mut gz = Array2::<S>::zeros((bsz, n));
    for b in 0..bsz {
        for i in 0..n {
            let (zi, tau) = (z[[b, i]], taus[[b, i]]);
            let mut acc = S::zero();
            for j in 0..n2 {
                let delta = target[[b, j]] - zi;
                loss = loss + quantile_huber(delta, tau, kappa);
                acc = acc + quantile_huber_grad(delta, tau, kappa);
            }
            gz[[b, i]] = -acc * norm;
        }
    }
    let (grads, _) = critic.online.backward_pairs(&tape, gz.view())?;
    Ok((loss * norm, grads))
}

/// Quantile-regression loss with `a' ~ pi(.|s')` and `tau, tau' ~ U[0, 1]`.
#[allow(clippy::too_many_arguments)]
pub fn cost_critic_loss<S: Scalar, R: Rng + ?Sized>(
    critic: &QuantileCostCritic<S>,
    batch: &TransitionBatch<S>,
    policy: &GaussianPolicy<S>,
    n: usize,
    n_prime: usize,
    gamma_c: S,
    kappa: S,
    rng: &mut R,
) -> Result<(S, IqnGrads<S>)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let bsz = batch.len();
    let next = policy.online_sample(batch.s_next.view(), rng)?;
    let mut uniform = |rows, cols| Array2::from_shape_fn((rows, cols), |_| S::lit(rng.random::<f64>()));
    let taus = uniform(bsz, n);
    let taus_next = uniform(bsz, n_prime);
    cost_critic_loss_with(critic, batch, &next.actions, &taus, &taus_next, gamma_c, kappa)
}
