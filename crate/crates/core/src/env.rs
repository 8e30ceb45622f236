//! Built-in constrained control tasks and the replay buffer.
//!
//! Two deterministic, seedable CMDPs stand in for the velocity-limit and
//! hazard-navigation task families:
//!
//! * [`PointVelocityEnv`]: a 1-D point mass rewarded for speed, with a unit
//!   cost on every step whose post-step velocity exceeds `v_limit`.
//! * [`HazardNavEnv`]: a 2-D point navigating to goals in a square arena
//!   with fixed circular hazards.
//!
//! Episodes end only at the horizon; the terminal flag is raised on the last
//! step.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub c: f64,
    pub s_next: Vec<f64>,
    pub d: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub cost: f64,
    pub done: bool,
}

pub trait Env: Send {
    fn name(&self) -> &'static str;
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64>;
    /// Advances one step; actions are clamped to `[-1, 1]`.
    fn step(&mut self, action: &[f64]) -> StepOutcome;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    PointVelocity,
    HazardNav,
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point_velocity" => Ok(EnvKind::PointVelocity),
            "hazard_nav" => Ok(EnvKind::HazardNav),
            _ => Err(Error::InvalidArgument(format!(
                "unknown environment `{s}` (expected point_velocity or hazard_nav)"
            ))),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvKind::PointVelocity => "point_velocity",
            EnvKind::HazardNav => "hazard_nav",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HazardCost {
    /// Unit cost while inside any hazard.
    Indicator,
    /// Cost equal to the summed penetration depth into hazards.
    Depth,
}

impl FromStr for HazardCost {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "indicator" => Ok(HazardCost::Indicator),
            "depth" => Ok(HazardCost::Depth),
            _ => Err(Error::InvalidArgument(format!("unknown hazard cost model `{s}`"))),
        }
    }
}

impl fmt::Display for HazardCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HazardCost::Indicator => "indicator",
            HazardCost::Depth => "depth",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub v_limit: f64,
    pub hazards: usize,
    pub hazard_cost: HazardCost,
    /// 0 selects the task default (400 for point velocity, 500 for navigation).
    pub horizon: usize,
    pub seed: u64,
    pub reset_noise: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            kind: EnvKind::PointVelocity,
            v_limit: 1.0,
            hazards: 4,
            hazard_cost: HazardCost::Indicator,
            horizon: 0,
            seed: 0,
            reset_noise: 0.05,
        }
    }
}

pub fn make_env(cfg: &EnvConfig) -> Box<dyn Env> {
    match cfg.kind {
        EnvKind::PointVelocity => {
            let mut env = PointVelocityEnv::new(cfg.v_limit, horizon_or(cfg.horizon, 400));
            env.reset_noise = cfg.reset_noise;
            Box::new(env)
        }
        EnvKind::HazardNav => Box::new(HazardNavEnv::new(
            cfg.seed,
            cfg.hazards,
            horizon_or(cfg.horizon, 500),
            cfg.hazard_cost,
        )),
    }
}

fn horizon_or(h: usize, default: usize) -> usize {
    if h == 0 {
        default
    } else {
        h
    }
}

fn clamp_action(a: f64) -> f64 {
    if a.is_nan() {
        0.0
    } else {
        a.clamp(-1.0, 1.0)
    }
}

/// 1-D velocity task.
///
/// `v' = clamp(v + 0.1 a, -3, 3)`, `x' = x + 0.05 v'`, reward `v'`, cost
/// `1{v' > v_limit}`. Reset puts the mass at `x = 0` with velocity drawn
/// from `U(-reset_noise, reset_noise)`.
#[derive(Debug, Clone)]
pub struct PointVelocityEnv {
    pub v_limit: f64,
    pub horizon: usize,
    pub reset_noise: f64,
    x: f64,
    v: f64,
    t: usize,
}

impl PointVelocityEnv {
    pub const V_MAX: f64 = 3.0;
    pub const ACCEL: f64 = 0.1;
    pub const DT: f64 = 0.05;

    pub fn new(v_limit: f64, horizon: usize) -> Self {
        Self {
            v_limit,
            horizon,
            reset_noise: 0.05,
            x: 0.0,
            v: 0.0,
            t: 0,
        }
    }

    pub fn state(&self) -> (f64, f64) {
        (self.x, self.v)
    }

    pub fn set_state(&mut self, x: f64, v: f64) {
        self.x = x;
        self.v = v.clamp(-Self::V_MAX, Self::V_MAX);
    }
}

impl Env for PointVelocityEnv {
    fn name(&self) -> &'static str {
        "point_velocity"
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn act_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let u: f64 = rng.random_range(-1.0..=1.0);
        self.x = 0.0;
        self.v = u * self.reset_noise;
        self.t = 0;
        vec![self.x, self.v]
    }

    fn step(&mut self, action: &[f64]) -> StepOutcome {
        let a = clamp_action(action.first().copied().unwrap_or(0.0));
        let v = (self.v + Self::ACCEL * a).clamp(-Self::V_MAX, Self::V_MAX);
        self.x += Self::DT * v;
        self.v = v;
        self.t += 1;
        StepOutcome {
            obs: vec![self.x, self.v],
            reward: v,
            cost: if v > self.v_limit { 1.0 } else { 0.0 },
            done: self.t >= self.horizon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hazard {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Hazard {
    pub fn depth(&self, p: [f64; 2]) -> f64 {
        (self.radius - dist(p, self.center)).max(0.0)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        dist(p, self.center) < self.radius
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// 2-D goal navigation with static hazards.
///
/// Observation: `[p.x, p.y, g.x, g.y, (c.x, c.y, r) per hazard]`. Position
/// update `p' = clamp(p + 0.1 a, -2, 2)`; reward is progress towards the goal
/// plus a bonus of 5 when the goal is reached, after which a new goal is
/// drawn. Hazard placement depends only on the construction seed.
#[derive(Debug, Clone)]
pub struct HazardNavEnv {
    pub horizon: usize,
    pub cost_model: HazardCost,
    hazards: Vec<Hazard>,
    p: [f64; 2],
    goal: [f64; 2],
    t: usize,
    goal_rng: ChaCha8Rng,
}

impl HazardNavEnv {
    pub const ARENA: f64 = 2.0;
    pub const STEP: f64 = 0.1;
    pub const GOAL_RADIUS: f64 = 0.3;
    pub const GOAL_BONUS: f64 = 5.0;

    pub fn new(seed: u64, k: usize, horizon: usize, cost_model: HazardCost) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x4841_5a41_5244);
        let hazards = (0..k)
            .map(|_| Hazard {
                center: [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)],
                radius: rng.random_range(0.25..0.45),
            })
            .collect();
        Self {
            horizon,
            cost_model,
            hazards,
            p: [0.0, 0.0],
            goal: [1.0, 1.0],
            t: 0,
            goal_rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn hazards(&self) -> &[Hazard] {
        &self.hazards
    }

    pub fn position(&self) -> [f64; 2] {
        self.p
    }

    pub fn goal(&self) -> [f64; 2] {
        self.goal
    }

    fn in_hazard(&self, p: [f64; 2]) -> bool {
        self.hazards.iter().any(|h| h.contains(p))
    }

    fn free_point<R: Rng + ?Sized>(&self, rng: &mut R, avoid: Option<[f64; 2]>) -> [f64; 2] {
        // Rejection sampling; hazards cover a small fraction of the arena.
        for _ in 0..10_000 {
            let q = [
                rng.random_range(-Self::ARENA..Self::ARENA),
                rng.random_range(-Self::ARENA..Self::ARENA),
            ];
            let clear_of = avoid.is_none_or(|a| dist(q, a) > 2.0 * Self::GOAL_RADIUS);
            if !self.in_hazard(q) && clear_of {
                return q;
            }
        }
        [Self::ARENA, Self::ARENA]
    }

    fn obs(&self) -> Vec<f64> {
        let mut o = vec![self.p[0], self.p[1], self.goal[0], self.goal[1]];
        for h in &self.hazards {
            o.extend_from_slice(&[h.center[0], h.center[1], h.radius]);
        }
        o
    }

    fn cost_at(&self, p: [f64; 2]) -> f64 {
        match self.cost_model {
            HazardCost::Indicator => {
                if self.in_hazard(p) {
                    1.0
                } else {
                    0.0
                }
            }
            HazardCost::Depth => self.hazards.iter().map(|h| h.depth(p)).sum(),
        }
    }
}

impl Env for HazardNavEnv {
    fn name(&self) -> &'static str {
        "hazard_nav"
    }

    fn obs_dim(&self) -> usize {
        4 + 3 * self.hazards.len()
    }

    fn act_dim(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.p = self.free_point(rng, None);
        self.goal = self.free_point(rng, Some(self.p));
        self.goal_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
        self.t = 0;
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> StepOutcome {
        let a = [
            clamp_action(action.first().copied().unwrap_or(0.0)),
            clamp_action(action.get(1).copied().unwrap_or(0.0)),
        ];
        let before = dist(self.p, self.goal);
        let p = [
            (self.p[0] + Self::STEP * a[0]).clamp(-Self::ARENA, Self::ARENA),
            (self.p[1] + Self::STEP * a[1]).clamp(-Self::ARENA, Self::ARENA),
        ];
        let after = dist(p, self.goal);
        let mut reward = before - after;
        let cost = self.cost_at(p);
        self.p = p;
        if after < Self::GOAL_RADIUS {
            reward += Self::GOAL_BONUS;
            let mut rng = self.goal_rng.clone();
            self.goal = self.free_point(&mut rng, Some(self.p));
            self.goal_rng = rng;
        }
        self.t += 1;
        StepOutcome {
            obs: self.obs(),
            reward,
            cost,
            done: self.t >= self.horizon,
        }
    }
}

/// Minibatch in matrix form, one transition per row.
#[derive(Debug, Clone)]
pub struct TransitionBatch<S> {
    pub s: Array2<S>,
    pub a: Array2<S>,
    pub r: Array1<S>,
    pub c: Array1<S>,
    pub s_next: Array2<S>,
    /// 1 for terminal transitions, 0 otherwise.
    pub d: Array1<S>,
}

impl<S: Scalar> TransitionBatch<S> {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn from_transitions(ts: &[Transition]) -> Result<Self> {
        let first = ts.first().ok_or(Error::EmptyBatch)?;
        let (od, ad) = (first.s.len(), first.a.len());
        let n = ts.len();
        let mut b = Self {
            s: Array2::zeros((n, od)),
            a: Array2::zeros((n, ad)),
            r: Array1::zeros(n),
            c: Array1::zeros(n),
            s_next: Array2::zeros((n, od)),
            d: Array1::zeros(n),
        };
        for (i, t) in ts.iter().enumerate() {
            if t.s.len() != od || t.a.len() != ad || t.s_next.len() != od {
                return Err(Error::ShapeMismatch("ragged transitions".into()));
            }
            for j in 0..od {
                b.s[[i, j]] = S::lit(t.s[j]);
                b.s_next[[i, j]] = S::lit(t.s_next[j]);
            }
            for j in 0..ad {
                b.a[[i, j]] = S::lit(t.a[j]);
            }
            b.r[i] = S::lit(t.r);
            b.c[i] = S::lit(t.c);
            b.d[i] = if t.d { S::one() } else { S::zero() };
        }
        Ok(b)
    }
}

/// Concatenates states and actions column-wise into critic inputs.
pub fn concat_cols<S: Scalar>(left: &Array2<S>, right: &Array2<S>) -> Array2<S> {
    let (n, l, r) = (left.nrows(), left.ncols(), right.ncols());
    let mut out = Array2::zeros((n, l + r));
    out.slice_mut(ndarray::s![.., ..l]).assign(left);
    out.slice_mut(ndarray::s![.., l..]).assign(right);
    out
}

/// Fixed-capacity ring buffer of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    s: Vec<f64>,
    a: Vec<f64>,
    r: Vec<f64>,
    c: Vec<f64>,
    s_next: Vec<f64>,
    d: Vec<bool>,
    len: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub const DEFAULT_CAPACITY: usize = 1_000_000;

    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("buffer capacity must be > 0".into()));
        }
        Ok(Self {
            capacity,
            obs_dim,
            act_dim,
            s: Vec::new(),
            a: Vec::new(),
            r: Vec::new(),
            c: Vec::new(),
            s_next: Vec::new(),
            d: Vec::new(),
            len: 0,
            cursor: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        if t.s.len() != self.obs_dim || t.s_next.len() != self.obs_dim {
            return Err(Error::DimensionMismatch {
                what: "transition state",
                expected: self.obs_dim,
                got: t.s.len(),
            });
        }
        if t.a.len() != self.act_dim {
            return Err(Error::DimensionMismatch {
                what: "transition action",
                expected: self.act_dim,
                got: t.a.len(),
            });
        }
        let i = self.cursor;
        if self.len < self.capacity {
            self.s.extend_from_slice(&t.s);
            self.a.extend_from_slice(&t.a);
            self.r.push(t.r);
            self.c.push(t.c);
            self.s_next.extend_from_slice(&t.s_next);
            self.d.push(t.d);
            self.len += 1;
        } else {
            let (od, ad) = (self.obs_dim, self.act_dim);
            self.s[i * od..(i + 1) * od].copy_from_slice(&t.s);
            self.a[i * ad..(i + 1) * ad].copy_from_slice(&t.a);
            self.r[i] = t.r;
            self.c[i] = t.c;
            self.s_next[i * od..(i + 1) * od].copy_from_slice(&t.s_next);
            self.d[i] = t.d;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    pub fn get(&self, i: usize) -> Option<Transition> {
        if i >= self.len {
            return None;
        }
        let (od, ad) = (self.obs_dim, self.act_dim);
        Some(Transition {
            s: self.s[i * od..(i + 1) * od].to_vec(),
            a: self.a[i * ad..(i + 1) * ad].to_vec(),
            r: self.r[i],
            c: self.c[i],
            s_next: self.s_next[i * od..(i + 1) * od].to_vec(),
            d: self.d[i],
        })
    }

    /// Slot indices of a minibatch: uniform, without replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if batch == 0 || self.len < batch {
            return Err(Error::UnderfilledBuffer {
                have: self.len,
                need: batch,
            });
        }
        Ok(rand::seq::index::sample(rng, self.len, batch).into_vec())
    }

    pub fn sample<S: Scalar, R: Rng + ?Sized>(
        &self,
        batch: usize,
        rng: &mut R,
    ) -> Result<TransitionBatch<S>> {
        let idx = self.sample_indices(batch, rng)?;
        let (od, ad) = (self.obs_dim, self.act_dim);
        let mut b = TransitionBatch {
            s: Array2::zeros((batch, od)),
            a: Array2::zeros((batch, ad)),
            r: Array1::zeros(batch),
            c: Array1::zeros(batch),
            s_next: Array2::zeros((batch, od)),
            d: Array1::zeros(batch),
        };
        for (row, &i) in idx.iter().enumerate() {
            for j in 0..od {
                b.s[[row, j]] = S::lit(self.s[i * od + j]);
                b.s_next[[row, j]] = S::lit(self.s_next[i * od + j]);
            }
            for j in 0..ad {
                b.a[[row, j]] = S::lit(self.a[i * ad + j]);
            }
            b.r[row] = S::lit(self.r[i]);
            b.c[row] = S::lit(self.c[i]);
            b.d[row] = if self.d[i] { S::one() } else { S::zero() };
        }
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn point_velocity_reset_without_noise_is_origin() {
        let mut env = PointVelocityEnv::new(1.0, 400);
        env.reset_noise = 0.0;
        assert_eq!(env.reset(&mut seeded(0)), vec![0.0, 0.0]);
    }

    #[test]
    fn reset_is_seed_deterministic() {
        let mut env = PointVelocityEnv::new(1.0, 400);
        let a = env.reset(&mut seeded(9));
        let b = env.reset(&mut seeded(9));
        assert_eq!(a, b);
        assert!(a[1].abs() <= 0.05);

        let mut nav = HazardNavEnv::new(3, 4, 500, HazardCost::Indicator);
        let a = nav.reset(&mut seeded(9));
        let b = nav.reset(&mut seeded(9));
        assert_eq!(a, b);
    }

    #[test]
    fn point_velocity_dynamics() {
        let mut env = PointVelocityEnv::new(1.0, 400);
        env.set_state(0.0, 0.0);
        let out = env.step(&[1.0]);
        assert!((out.obs[1] - 0.1).abs() < 1e-15);
        assert!((out.reward - 0.1).abs() < 1e-15);
        assert_eq!(out.cost, 0.0);

        env.set_state(0.0, 1.0);
        let out = env.step(&[1.0]);
        assert!((out.obs[1] - 1.1).abs() < 1e-15);
        assert_eq!(out.cost, 1.0);

        env.set_state(2.0, 0.0);
        let out = env.step(&[0.0]);
        assert_eq!(out.obs, vec![2.0, 0.0]);
        assert_eq!((out.reward, out.cost), (0.0, 0.0));
    }

    #[test]
    fn point_velocity_clamps_speed_and_actions() {
        let mut env = PointVelocityEnv::new(1.0, 400);
        env.set_state(0.0, 2.95);
        let out = env.step(&[5.0]);
        assert_eq!(out.obs[1], 3.0);
        for _ in 0..50 {
            assert!(env.step(&[1.0]).obs[1] <= 3.0);
        }
    }

    #[test]
    fn horizon_sets_terminal_flag() {
        let mut env = PointVelocityEnv::new(1.0, 3);
        env.reset(&mut seeded(0));
        assert!(!env.step(&[0.0]).done);
        assert!(!env.step(&[0.0]).done);
        assert!(env.step(&[0.0]).done);
    }

    #[test]
    fn hazard_nav_starts_outside_hazards() {
        for seed in 0..50 {
            let mut env = HazardNavEnv::new(seed, 6, 500, HazardCost::Indicator);
            env.reset(&mut seeded(seed + 100));
            let p = env.position();
            assert!(env.hazards().iter().all(|h| !h.contains(p)), "seed {seed}");
            let out = env.step(&[0.0, 0.0]);
            assert_eq!(out.cost, 0.0);
        }
    }

    #[test]
    fn hazard_nav_stays_in_arena_and_costs_are_binary() {
        let mut env = HazardNavEnv::new(1, 4, 500, HazardCost::Indicator);
        env.reset(&mut seeded(2));
        let mut rng = seeded(3);
        for _ in 0..500 {
            let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let out = env.step(&a);
            assert!(out.obs[0].abs() <= 2.0 && out.obs[1].abs() <= 2.0);
            assert!(out.cost == 0.0 || out.cost == 1.0);
        }
    }

    #[test]
    fn hazard_depth_cost() {
        let h = Hazard { center: [0.0, 0.0], radius: 0.5 };
        assert!((h.depth([0.2, 0.0]) - 0.3).abs() < 1e-15);
        assert_eq!(h.depth([1.0, 0.0]), 0.0);
    }

    fn tr(i: usize) -> Transition {
        Transition {
            s: vec![i as f64, 0.0],
            a: vec![0.5],
            r: i as f64,
            c: 0.0,
            s_next: vec![i as f64 + 1.0, 0.0],
            d: false,
        }
    }

    #[test]
    fn buffer_single_item_round_trip() {
        let mut buf = ReplayBuffer::new(4, 2, 1).unwrap();
        buf.push(&tr(7)).unwrap();
        let b = buf.sample::<f64, _>(1, &mut seeded(0)).unwrap();
        assert_eq!(b.r[0], 7.0);
        assert_eq!(b.s_next[[0, 0]], 8.0);
    }

    #[test]
    fn buffer_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(2, 2, 1).unwrap();
        for i in 0..3 {
            buf.push(&tr(i)).unwrap();
        }
        assert_eq!(buf.len(), 2);
        let rs: Vec<f64> = (0..2).map(|i| buf.get(i).unwrap().r).collect();
        assert_eq!(rs, vec![2.0, 1.0]);
    }

    #[test]
    fn buffer_rejects_underfilled_sample() {
        let mut buf = ReplayBuffer::new(8, 2, 1).unwrap();
        buf.push(&tr(0)).unwrap();
        assert!(matches!(
            buf.sample::<f64, _>(2, &mut seeded(0)),
            Err(Error::UnderfilledBuffer { have: 1, need: 2 })
        ));
    }

    #[test]
    fn minibatch_has_no_repeats() {
        let mut buf = ReplayBuffer::new(100, 2, 1).unwrap();
        for i in 0..100 {
            buf.push(&tr(i)).unwrap();
        }
        let mut idx = buf.sample_indices(64, &mut seeded(1)).unwrap();
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 64);
    }

    #[test]
    fn sampling_frequency_is_uniform() {
        let mut buf = ReplayBuffer::new(10, 2, 1).unwrap();
        for i in 0..10 {
            buf.push(&tr(i)).unwrap();
        }
        let mut rng = seeded(5);
        let n = 100_000;
        let mut counts = [0usize; 10];
        for _ in 0..n {
            counts[buf.sample_indices(1, &mut rng).unwrap()[0]] += 1;
        }
        let p = 0.1;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }
}
