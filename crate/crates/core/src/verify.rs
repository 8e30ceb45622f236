//! Numerical certification of the risk bounds, independent of training.
//!
//! Every check is deterministic given its seed and returns a [`VerifyReport`]
//! carrying the number of cases, the number of violations and the worst slack
//! (`bound - observed`, negative on violation).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraint::tail_body_split;
use crate::cost::empirical_cvar;
use crate::error::{Error, Result};

/// Monotone piecewise-linear quantile function on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseQuantileFn {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseQuantileFn {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(Error::InvalidArgument(
                "need at least two knots with one value each".into(),
            ));
        }
        if knots[0] != 0.0 || *knots.last().expect("nonempty") != 1.0 {
            return Err(Error::InvalidArgument("knots must span [0, 1]".into()));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("knots must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("values must be finite and nondecreasing".into()));
        }
        Ok(Self { knots, values })
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![0.0, 1.0], vec![c, c]).expect("valid")
    }

    /// `q(tau) = lo + (hi - lo) tau`.
    pub fn linear(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![0.0, 1.0], vec![lo, hi])
    }

    /// Random function with `pieces` segments and exponential increments.
    pub fn random<R: Rng + ?Sized>(pieces: usize, rng: &mut R) -> Self {
        let pieces = pieces.max(1);
        let mut inner: Vec<f64> = (1..pieces).map(|_| rng.random_range(1e-6..1.0 - 1e-6)).collect();
        inner.sort_by(f64::total_cmp);
        inner.dedup();
        let mut knots = vec![0.0];
        knots.extend(inner);
        knots.push(1.0);
        let mut v = rng.random_range(-2.0..2.0);
        let mut values = Vec::with_capacity(knots.len());
        for _ in 0..knots.len() {
            values.push(v);
            v += -rng.random::<f64>().max(1e-300).ln() * rng.random_range(0.0..3.0);
        }
        Self::new(knots, values).expect("valid by construction")
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn segment(&self, tau: f64) -> usize {
        match self.knots.binary_search_by(|k| k.total_cmp(&tau)) {
            Ok(i) => i.min(self.knots.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.knots.len() - 2),
        }
    }

    pub fn eval(&self, tau: f64) -> f64 {
        let tau = tau.clamp(0.0, 1.0);
        let i = self.segment(tau);
        let (t0, t1) = (self.knots[i], self.knots[i + 1]);
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        v0 + (v1 - v0) * (tau - t0) / (t1 - t0)
    }

    /// Exact `int_a^b q(tau) d tau` for `0 <= a <= b <= 1`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let (a, b) = (a.clamp(0.0, 1.0), b.clamp(0.0, 1.0));
        if b <= a {
            return 0.0;
        }
        let mut pts = vec![a];
        pts.extend(self.knots.iter().copied().filter(|&k| k > a && k < b));
        pts.push(b);
        pts.windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (self.eval(w[0]) + self.eval(w[1])))
            .sum()
    }

    /// Exact `sqrt(int_0^1 (q - other)^2 d tau)`.
    pub fn l2_distance(&self, other: &Self) -> f64 {
        let mut pts: Vec<f64> = self.knots.iter().chain(&other.knots).copied().collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let sq: f64 = pts
            .windows(2)
            .map(|w| {
                let d0 = self.eval(w[0]) - other.eval(w[0]);
                let d1 = self.eval(w[1]) - other.eval(w[1]);
                (w[1] - w[0]) * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0
            })
            .sum();
        sq.max(0.0).sqrt()
    }
}

/// `(1 / eps) int_{1 - eps}^1 q(tau) d tau`.
pub fn analytic_cvar(q: &PiecewiseQuantileFn, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidArgument(format!("risk level {epsilon} outside (0, 1]")));
    }
    Ok(q.integral(1.0 - epsilon, 1.0) / epsilon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub name: String,
    pub claim: String,
    pub passed: bool,
    pub cases: u64,
    pub violations: u64,
    pub worst_slack: f64,
    pub details: BTreeMap<String, f64>,
}

impl VerifyReport {
    fn new(name: &str, claim: &str) -> Self {
        Self {
            name: name.into(),
            claim: claim.into(),
            passed: true,
            cases: 0,
            violations: 0,
            worst_slack: f64::INFINITY,
            details: BTreeMap::new(),
        }
    }

    fn observe(&mut self, slack: f64) {
        self.cases += 1;
        if slack.is_nan() || slack < 0.0 {
            self.violations += 1;
            self.passed = false;
        }
        if slack.is_nan() || slack < self.worst_slack {
            self.worst_slack = slack;
        }
    }
}

/// Knobs shared by all checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub seed: u64,
    pub bound_trials: usize,
    pub comparison_trials: usize,
    pub signal_trials: usize,
    pub gpd_samples: usize,
    pub contraction_instances: usize,
    /// Negative control: flips the sign of the quantile-error bound.
    pub inject_fault: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            bound_trials: 1000,
            comparison_trials: 10_000,
            signal_trials: 10_000,
            gpd_samples: 1_000_000,
            contraction_instances: 100,
            inject_fault: false,
        }
    }
}

pub const BOUND_EPSILONS: [f64; 4] = [0.1, 0.25, 0.5, 1.0];

/// `|CVaR(q1) - CVaR(q2)| <= delta / sqrt(eps)` with `delta = ||q1 - q2||_2`.
pub fn verify_cvar_error_bound<R: Rng + ?Sized>(trials: usize, rng: &mut R, inject_fault: bool) -> VerifyReport {
    let mut rep = VerifyReport::new(
        "cvar_error_bound",
        "|CVaR_eps(q1) - CVaR_eps(q2)| <= ||q1 - q2||_2 / sqrt(eps) + 1e-9",
    );
    let sign = if inject_fault { -1.0 } else { 1.0 };
    let mut max_ratio: f64 = 0.0;
    for _ in 0..trials {
        let p1 = rng.random_range(1..8);
        let p2 = rng.random_range(1..8);
        let q1 = PiecewiseQuantileFn::random(p1, rng);
        let q2 = PiecewiseQuantileFn::random(p2, rng);
        let delta = q1.l2_distance(&q2);
        for eps in BOUND_EPSILONS {
            let lhs = (analytic_cvar(&q1, eps).expect("eps valid") - analytic_cvar(&q2, eps).expect("eps valid")).abs();
            let bound = sign * delta / eps.sqrt();
            rep.observe(bound + 1e-9 - lhs);
            if delta > 0.0 {
                max_ratio = max_ratio.max(lhs / (delta / eps.sqrt()));
            }
        }
    }
    rep.details.insert("max_lhs_over_bound".into(), max_ratio);
    rep
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundComparison {
    pub cvar_bound: f64,
    pub expected_bound: f64,
    pub tighter: bool,
}

/// Compares `beta + delta / sqrt(eps)` with `(beta + delta) / eps`.
pub fn verify_bound_comparison(beta: f64, delta: f64, epsilon: f64) -> Result<BoundComparison> {
    if !(beta > 0.0) || !(delta > 0.0) || !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need beta > 0, delta > 0, 0 < eps < 1; got ({beta}, {delta}, {epsilon})"
        )));
    }
    let cvar_bound = beta + delta / epsilon.sqrt();
    let expected_bound = (beta + delta) / epsilon;
    Ok(BoundComparison {
        cvar_bound,
        expected_bound,
        tighter: cvar_bound < expected_bound,
    })
}

/// Random sweep of [`verify_bound_comparison`].
pub fn verify_bound_comparison_sweep<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> VerifyReport {
    let mut rep = VerifyReport::new(
        "bound_comparison",
        "beta + delta / sqrt(eps) < (beta + delta) / eps for beta, delta > 0, 0 < eps < 1",
    );
    let mut min_rel: f64 = f64::INFINITY;
    for _ in 0..trials {
        let beta = rng.random_range(1e-3..100.0);
        let delta = rng.random_range(1e-3..10.0);
        let eps = rng.random_range(1e-3..1.0 - 1e-3);
        let c = verify_bound_comparison(beta, delta, eps).expect("sampled in range");
        let margin = c.expected_bound - c.cvar_bound;
        // Strictness is what is certified: a zero margin counts as a violation.
        rep.observe(if margin > 0.0 { margin } else { -1.0 });
        min_rel = min_rel.min(margin / c.expected_bound);
    }
    rep.details.insert("min_relative_margin".into(), min_rel);
    rep
}

/// Two-point law with mass `eps` at `mu / eps` and `1 - eps` at 0.
///
/// Returns the exact CVaR and an empirical estimate from `samples` draws.
pub fn worst_case_two_point<R: Rng + ?Sized>(mu: f64, epsilon: f64, samples: usize, rng: &mut R) -> Result<(f64, f64)> {
    if !(epsilon > 0.0 && epsilon <= 1.0) || samples == 0 {
        return Err(Error::InvalidArgument("need 0 < eps <= 1 and samples >= 1".into()));
    }
    let hi = mu / epsilon;
    // The quantile function is 0 on [0, 1 - eps) and hi on [1 - eps, 1].
    let exact = (epsilon * hi) / epsilon;
    let draws: Vec<f64> = (0..samples)
        .map(|_| if rng.random::<f64>() < epsilon { hi } else { 0.0 })
        .collect();
    Ok((exact, empirical_cvar(&draws, epsilon)?))
}

/// `beta' = beta - delta / sqrt(eps)`; errors when the margin exhausts beta.
pub fn tightened_threshold(beta: f64, delta: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1.0) || delta < 0.0 {
        return Err(Error::InvalidArgument(format!("need 0 < eps <= 1 and delta >= 0; got ({delta}, {epsilon})")));
    }
    let margin = delta / epsilon.sqrt();
    if beta <= margin {
        return Err(Error::InfeasibleMargin { beta, margin });
    }
    Ok(beta - margin)
}

/// Tightened-threshold certification: the true CVaR stays below `beta` when
/// the estimated CVaR meets `beta'` and the quantile error is at most `delta`.
pub fn verify_tightened_threshold<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> VerifyReport {
    let mut rep = VerifyReport::new(
        "tightened_threshold",
        "CVaR_eps(q_hat) <= beta - delta / sqrt(eps) and ||q - q_hat||_2 <= delta imply CVaR_eps(q) <= beta",
    );
    let mut infeasible = 0u64;
    for _ in 0..trials {
        let q = PiecewiseQuantileFn::random(rng.random_range(1..6), rng);
        let q_hat = PiecewiseQuantileFn::random(rng.random_range(1..6), rng);
        let delta = q.l2_distance(&q_hat);
        for eps in BOUND_EPSILONS {
            let est = analytic_cvar(&q_hat, eps).expect("eps valid");
            // Smallest beta for which the estimate satisfies the tightened constraint.
            let beta = est + delta / eps.sqrt() + rng.random_range(0.0..1.0);
            match tightened_threshold(beta, delta, eps) {
                Ok(bp) if est <= bp + 1e-12 => {
                    let truth = analytic_cvar(&q, eps).expect("eps valid");
                    rep.observe(beta + 1e-9 - truth);
                }
                Ok(_) => {}
                Err(_) => infeasible += 1,
            }
        }
    }
    rep.details.insert("infeasible_cases".into(), infeasible as f64);
    rep
}

/// Order-statistics decomposition of the CVaR-minus-mean signal gap.
pub fn verify_signal_identity<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> VerifyReport {
    let mut rep = VerifyReport::new(
        "signal_identity",
        "(CVaR_hat - beta) - (mean_hat - beta) = (1 - k/N)(CVaR_hat - body_hat), and CVaR_hat >= mean_hat",
    );
    let mut max_disc: f64 = 0.0;
    let mut dominance_violations = 0u64;
    for _ in 0..trials {
        let n = rng.random_range(1..=200);
        let eps = rng.random_range(1e-6..1.0);
        let beta = rng.random_range(0.0..50.0);
        let scale = rng.random_range(0.0..60.0);
        let w: Vec<f64> = (0..n).map(|_| (scale * rng.random::<f64>()).floor()).collect();
        let cvar = empirical_cvar(&w, eps).expect("nonempty");
        let mean = empirical_cvar(&w, 1.0).expect("nonempty");
        let lhs = (cvar - beta) - (mean - beta);
        let (tail, body, k) = tail_body_split(&w, eps).expect("nonempty");
        let rhs = (1.0 - k as f64 / n as f64) * (tail - body);
        let disc = (lhs - rhs).abs();
        max_disc = max_disc.max(disc);
        rep.observe(1e-12 - disc);
        if cvar < mean {
            dominance_violations += 1;
            rep.passed = false;
        }
    }
    rep.details.insert("max_discrepancy".into(), max_disc);
    rep.details.insert("dominance_violations".into(), dominance_violations as f64);
    rep
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    pub nu: f64,
    pub sigma: f64,
    pub u: f64,
}

impl GpdParams {
    pub fn new(nu: f64, sigma: f64, u: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&nu) || !(sigma > 0.0) || !u.is_finite() || u < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= nu < 1, sigma > 0, u >= 0; got ({nu}, {sigma}, {u})"
            )));
        }
        Ok(Self { nu, sigma, u })
    }

    /// Threshold at which the tail mean equals the constraint,
    /// `u + sigma / (1 - nu)`.
    pub fn boundary_beta(&self) -> f64 {
        self.u + self.sigma / (1.0 - self.nu)
    }
}

/// `gamma(0) = 1/e`, `gamma(nu) = (1 - nu)^(1/nu)`.
pub fn gamma_factor(nu: f64) -> f64 {
    if nu == 0.0 {
        (-1.0f64).exp()
    } else {
        (1.0 - nu).powf(1.0 / nu)
    }
}

/// Exceedance over the threshold at probability level `p`.
pub fn gpd_inverse_cdf(p: f64, nu: f64, sigma: f64) -> f64 {
    if nu == 0.0 {
        -sigma * (-p).ln_1p()
    } else {
        sigma * ((1.0 - p).powf(-nu) - 1.0) / nu
    }
}

/// Monte Carlo check of `Pr(Z > beta) <= (1 - eps) gamma(nu)` at the
/// constraint boundary.
///
/// The law puts mass `eps` uniformly on `[0, u]` and mass `1 - eps` on
/// `u + GPD(nu, sigma)`. The bound is attained with equality, so the check
/// allows three standard errors.
pub fn gpd_violation_check<R: Rng + ?Sized>(
    params: GpdParams,
    epsilon: f64,
    samples: usize,
    rng: &mut R,
) -> Result<VerifyReport> {
    if !(epsilon > 0.0 && epsilon < 1.0) || samples == 0 {
        return Err(Error::InvalidArgument("need 0 < eps < 1 and samples >= 1".into()));
    }
    let beta = params.boundary_beta();
    let mut over = 0u64;
    for _ in 0..samples {
        let z = if rng.random::<f64>() < epsilon {
            params.u * rng.random::<f64>()
        } else {
            params.u + gpd_inverse_cdf(rng.random::<f64>(), params.nu, params.sigma)
        };
        if z > beta {
            over += 1;
        }
    }
    let n = samples as f64;
    let p = over as f64 / n;
    let se = (p * (1.0 - p) / n).sqrt();
    let bound = (1.0 - epsilon) * gamma_factor(params.nu);
    let mut rep = VerifyReport::new("gpd_tail_bound", "Pr(Z > beta) <= (1 - eps) gamma(nu) + 3 SE");
    rep.observe(bound + 3.0 * se - p);
    rep.details.insert("nu".into(), params.nu);
    rep.details.insert("epsilon".into(), epsilon);
    rep.details.insert("empirical".into(), p);
    rep.details.insert("bound".into(), bound);
    rep.details.insert("standard_error".into(), se);
    Ok(rep)
}

pub const GPD_SHAPES: [f64; 3] = [0.0, 0.25, 0.5];
pub const GPD_EPSILONS: [f64; 2] = [0.25, 0.5];

/// All GPD configurations folded into one report.
pub fn verify_gpd_bound(samples: usize, seed: u64) -> VerifyReport {
    let mut rep = VerifyReport::new("gpd_tail_bound", "Pr(Z > beta) <= (1 - eps) gamma(nu) + 3 SE");
    for (i, nu) in GPD_SHAPES.into_iter().enumerate() {
        for (j, eps) in GPD_EPSILONS.into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(10 + (i * GPD_EPSILONS.len() + j) as u64);
            let params = GpdParams::new(nu, 1.0, 1.0).expect("valid");
            let r = gpd_violation_check(params, eps, samples, &mut rng).expect("valid");
            rep.observe(r.worst_slack);
            rep.details.insert(format!("empirical_nu{nu}_eps{eps}"), r.details["empirical"]);
            rep.details.insert(format!("bound_nu{nu}_eps{eps}"), r.details["bound"]);
        }
    }
    rep
}

/// Finite discrete distribution on the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    pub atoms: Vec<(f64, f64)>,
}

impl DiscreteDist {
    pub fn point(x: f64) -> Self {
        Self { atoms: vec![(x, 1.0)] }
    }

    fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let n = rng.random_range(1..5);
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = w.iter().sum();
        Self {
            atoms: w.into_iter().map(|p| (rng.random_range(0.0..10.0), p / total)).collect(),
        }
    }
}

/// Exact `W_1` between two discrete laws, `int |F1 - F2| dx`.
pub fn wasserstein1(p: &DiscreteDist, q: &DiscreteDist) -> f64 {
    let mut ev: Vec<(f64, f64)> = p
        .atoms
        .iter()
        .map(|&(x, w)| (x, w))
        .chain(q.atoms.iter().map(|&(x, w)| (x, -w)))
        .collect();
    ev.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut diff = 0.0;
    let mut total = 0.0;
    for i in 0..ev.len() {
        diff += ev[i].1;
        if i + 1 < ev.len() {
            total += diff.abs() * (ev[i + 1].0 - ev[i].0);
        }
    }
    total
}

/// Tabular MDP with deterministic costs and a fixed stochastic policy.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    pub states: usize,
    pub actions: usize,
    /// `p[s][a][s']`.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `pi[s'][a']`.
    pub policy: Vec<Vec<f64>>,
    pub cost: Vec<Vec<f64>>,
}

fn simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let t: f64 = w.iter().sum();
    w.into_iter().map(|x| x / t).collect()
}

impl TabularMdp {
    pub fn random<R: Rng + ?Sized>(states: usize, actions: usize, rng: &mut R) -> Self {
        Self {
            states,
            actions,
            transition: (0..states)
                .map(|_| (0..actions).map(|_| simplex(states, rng)).collect())
                .collect(),
            policy: (0..states).map(|_| simplex(actions, rng)).collect(),
            cost: (0..states)
                .map(|_| (0..actions).map(|_| rng.random_range(0..3) as f64).collect())
                .collect(),
        }
    }

    /// Distributional Bellman operator `TZ(s,a) = c(s,a) + gamma Z(S', A')`.
    pub fn bellman(&self, z: &[Vec<DiscreteDist>], gamma: f64) -> Vec<Vec<DiscreteDist>> {
        (0..self.states)
            .map(|s| {
                (0..self.actions)
                    .map(|a| {
                        let c = self.cost[s][a];
                        let mut atoms = Vec::new();
                        for s2 in 0..self.states {
                            for a2 in 0..self.actions {
                                let w = self.transition[s][a][s2] * self.policy[s2][a2];
                                if w == 0.0 {
                                    continue;
                                }
                                for &(x, p) in &z[s2][a2].atoms {
                                    atoms.push((c + gamma * x, w * p));
                                }
                            }
                        }
                        DiscreteDist { atoms }
                    })
                    .collect()
            })
            .collect()
    }
}

/// `sup_{s,a} W_1(Z1(s,a), Z2(s,a))`.
pub fn sup_w1(z1: &[Vec<DiscreteDist>], z2: &[Vec<DiscreteDist>]) -> f64 {
    z1.iter()
        .zip(z2)
        .flat_map(|(r1, r2)| r1.iter().zip(r2).map(|(a, b)| wasserstein1(a, b)))
        .fold(0.0, f64::max)
}

/// `sup W_1(TZ1, TZ2) <= gamma sup W_1(Z1, Z2)` on random tabular instances.
pub fn contraction_check<R: Rng + ?Sized>(instances: usize, gamma: f64, rng: &mut R) -> VerifyReport {
    let mut rep = VerifyReport::new(
        "bellman_contraction",
        "sup W1(TZ1, TZ2) <= gamma sup W1(Z1, Z2) + 1e-9",
    );
    let mut max_ratio: f64 = 0.0;
    for _ in 0..instances {
        let ns = rng.random_range(1..=10);
        let na = rng.random_range(1..=3);
        let mdp = TabularMdp::random(ns, na, rng);
        let draw = |rng: &mut R| -> Vec<Vec<DiscreteDist>> {
            (0..ns).map(|_| (0..na).map(|_| DiscreteDist::random(rng)).collect()).collect()
        };
        let z1 = draw(rng);
        let z2 = draw(rng);
        let before = sup_w1(&z1, &z2);
        let after = sup_w1(&mdp.bellman(&z1, gamma), &mdp.bellman(&z2, gamma));
        rep.observe(gamma * before + 1e-9 - after);
        if before > 0.0 {
            max_ratio = max_ratio.max(after / before);
        }
    }
    rep.details.insert("gamma".into(), gamma);
    rep.details.insert("max_ratio".into(), max_ratio);
    rep
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Runs every check; one report per certified statement.
pub fn run_all(opts: &VerifyOptions) -> Vec<VerifyReport> {
    let mut out = vec![verify_cvar_error_bound(
        opts.bound_trials,
        &mut stream(opts.seed, 1),
        opts.inject_fault,
    )];

    let mut cmp = verify_bound_comparison_sweep(opts.comparison_trials, &mut stream(opts.seed, 2));
    let mut r = stream(opts.seed, 3);
    let mut worst_gap: f64 = 0.0;
    for &eps in &[0.1, 0.25, 0.5, 0.9] {
        let (exact, mc) = worst_case_two_point(2.0, eps, 100_000, &mut r).expect("valid");
        worst_gap = worst_gap.max(((mc - exact) / exact).abs());
    }
    cmp.details.insert("two_point_max_relative_gap".into(), worst_gap);
    if worst_gap > 0.02 {
        cmp.passed = false;
    }
    out.push(cmp);

    out.push(verify_tightened_threshold(opts.bound_trials, &mut stream(opts.seed, 4)));
    out.push(verify_signal_identity(opts.signal_trials, &mut stream(opts.seed, 5)));
    out.push(verify_gpd_bound(opts.gpd_samples, opts.seed));
    out.push(contraction_check(opts.contraction_instances, 0.9, &mut stream(opts.seed, 6)));
    out
}
