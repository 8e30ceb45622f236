//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line.
//!
//! The two training checks (desk run and epsilon sweep) dominate the
//! runtime: roughly 5 minutes of CPU per 50k-step seed.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use slsac::config::TrainConfig;
use slsac::constraint::tail_body_split;
use slsac::cost::{empirical_cvar, tail_taus, cost_critic_loss_with, CvarMode, QuantileCostCritic};
use slsac::ensemble::{Aggregation, RewardEnsemble};
use slsac::env::TransitionBatch;
use slsac::metrics::{JsonlSink, NullSink};
use slsac::nn::{flatten, Activation, Mlp, ParamSet};
use slsac::optim::{
    adamw_step, langevin_step, ClipMode, LangevinVariant, OptimizerConfig, OptimizerState, UpdateRule,
};
use slsac::trainer::{evaluate, evaluate_random, train, Phase, Trainer};
use slsac::verify::{
    analytic_cvar, contraction_check, gamma_factor, verify_bound_comparison, verify_cvar_error_bound,
    verify_gpd_bound, PiecewiseQuantileFn, GPD_EPSILONS, GPD_SHAPES,
};

const TAIL_EPISODES: usize = 50;

// Straight to the stderr handle: test capture only hooks the print macros,
// so the line shows up in a plain `cargo test` too.
fn report(id: u32, what: &str, pass: bool, detail: String) {
    let line = format!("criterion {id:>2} {:<4} {what}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn desk_config(overrides: &[&str]) -> TrainConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/point_velocity_desk.cfg");
    let ov: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    TrainConfig::load(&path, &ov).expect("desk config")
}

#[test]
fn criterion_01_mlp_gradients() {
    let started = Instant::now();
    let mut r = rng(101);
    let mut worst: f64 = 0.0;
    let h = 1e-6;
    for _ in 0..50 {
        let depth = r.random_range(1..=3);
        let mut sizes = vec![r.random_range(1..=6)];
        for _ in 0..depth {
            sizes.push(r.random_range(1..=8));
        }
        let out_act = if r.random_bool(0.5) { Activation::Identity } else { Activation::Relu };
        let mut net = Mlp::<f64>::new(&sizes, Activation::Relu, out_act, &mut r).unwrap();
        let rows = r.random_range(1..=4);
        let x = Array2::from_shape_fn((rows, sizes[0]), |_| r.random_range(-2.0..2.0));
        let w = Array2::from_shape_fn((rows, *sizes.last().unwrap()), |_| r.random_range(-1.0..1.0));
        let objective = |n: &Mlp<f64>| (n.predict(x.view()).unwrap() * &w).sum();

        let (_, tape) = net.forward_batch(x.view()).unwrap();
        let (grads, gin) = net.backward_batch(&tape, w.view()).unwrap();
        let analytic = flatten(&grads);

        let mut idx = 0;
        let count = net.num_params();
        for k in 0..count {
            let orig = flatten(&net)[k];
            let set = |n: &mut Mlp<f64>, v: f64| {
                let mut seen = 0;
                for t in n.tensors_mut() {
                    if k < seen + t.len() {
                        t[k - seen] = v;
                        return;
                    }
                    seen += t.len();
                }
            };
            set(&mut net, orig + h);
            let up = objective(&net);
            set(&mut net, orig - h);
            let down = objective(&net);
            set(&mut net, orig);
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[k];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4));
            idx += 1;
        }
        assert_eq!(idx, count);

        // Input gradient too.
        for i in 0..rows {
            for j in 0..sizes[0] {
                let mut xp = x.clone();
                xp[[i, j]] += h;
                let mut xm = x.clone();
                xm[[i, j]] -= h;
                let up = (net.predict(xp.view()).unwrap() * &w).sum();
                let down = (net.predict(xm.view()).unwrap() * &w).sum();
                let numeric = (up - down) / (2.0 * h);
                let a = gin[[i, j]];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4));
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = worst < 1e-5 && secs < 30.0;
    report(1, "mlp gradient exactness", pass, format!("max rel err {worst:.3e}, {secs:.1}s"));
    assert!(pass);
}

#[test]
fn criterion_02_cvar_error_bound() {
    let started = Instant::now();
    let rep = verify_cvar_error_bound(1000, &mut rng(202), false);

    // Cross-check the closed-form CVaR against midpoint integration.
    let mut r = rng(203);
    let mut worst_quad: f64 = 0.0;
    for _ in 0..20 {
        let q = PiecewiseQuantileFn::random(5, &mut r);
        for eps in [0.1, 0.25, 0.5, 1.0] {
            let n = 200_000;
            let lo = 1.0 - eps;
            let quad = (0..n).map(|i| q.eval(lo + eps * (i as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64;
            worst_quad = worst_quad.max((quad - analytic_cvar(&q, eps).unwrap()).abs());
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = rep.violations == 0 && rep.cases == 4000 && worst_quad < 1e-6 && secs < 10.0;
    report(
        2,
        "cvar error bound",
        pass,
        format!(
            "{} cases, {} violations, worst slack {:.3e}, quadrature gap {worst_quad:.1e}, {secs:.1}s",
            rep.cases, rep.violations, rep.worst_slack
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_bound_comparison() {
    let mut r = rng(303);
    let mut worst = f64::INFINITY;
    let mut failures = 0;
    for _ in 0..10_000 {
        let beta = r.random_range(1e-3..100.0);
        let delta = r.random_range(1e-3..100.0);
        let eps = loop {
            let e: f64 = r.random();
            if e > 0.0 && e < 1.0 {
                break e;
            }
        };
        let tight = beta + delta / eps.sqrt();
        let loose = (beta + delta) / eps;
        let margin = loose - tight;
        let lib = verify_bound_comparison(beta, delta, eps).unwrap();
        if !(margin > 0.0) || !lib.tighter || lib.cvar_bound != tight || lib.expected_bound != loose {
            failures += 1;
        }
        worst = worst.min(margin);
    }
    let pass = failures == 0 && worst > 0.0;
    report(3, "strictly tighter bound", pass, format!("10000 draws, {failures} failures, min margin {worst:.3e}"));
    assert!(pass);
}

#[test]
fn criterion_04_signal_identity() {
    let mut r = rng(404);
    let mut max_disc: f64 = 0.0;
    let mut dominance = 0;
    for _ in 0..10_000 {
        let n = r.random_range(1..=200);
        let eps: f64 = r.random_range(1e-3..=1.0);
        let beta = r.random_range(0.0..50.0);
        let w: Vec<f64> = (0..n).map(|_| r.random_range(0..60) as f64).collect();

        // Oracle: sort descending, average the top k.
        let mut sorted = w.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let k = ((eps * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
        let tail = sorted[..k].iter().sum::<f64>() / k as f64;
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let body = if k < n { sorted[k..].iter().sum::<f64>() / (n - k) as f64 } else { 0.0 };

        let cvar = empirical_cvar(&w, eps).unwrap();
        let (lt, lb, lk) = tail_body_split(&w, eps).unwrap();
        assert_eq!(lk, k);
        assert!((lt - tail).abs() <= 1e-12 && (lb - body).abs() <= 1e-12);
        let lhs = (cvar - beta) - (mean - beta);
        let rhs = (1.0 - k as f64 / n as f64) * (tail - body);
        max_disc = max_disc.max((lhs - rhs).abs());
        if cvar < mean {
            dominance += 1;
        }
    }
    let pass = max_disc <= 1e-12 && dominance == 0;
    report(
        4,
        "signal decomposition",
        pass,
        format!("max discrepancy {max_disc:.2e}, {dominance} dominance violations"),
    );
    assert!(pass);
}

#[test]
fn criterion_05_gpd_tail_bound() {
    let started = Instant::now();
    let rep = verify_gpd_bound(1_000_000, 505);
    let g0 = gamma_factor(0.0);
    let g5 = gamma_factor(0.5);
    let secs = started.elapsed().as_secs_f64();
    let pass = rep.violations == 0
        && rep.cases == (GPD_SHAPES.len() * GPD_EPSILONS.len()) as u64
        && (g0 - (-1.0f64).exp()).abs() < 1e-15
        && (g5 - 0.25).abs() < 1e-15
        && secs < 60.0;
    let cells: Vec<String> = GPD_SHAPES
        .iter()
        .flat_map(|nu| GPD_EPSILONS.iter().map(move |e| (nu, e)))
        .map(|(nu, e)| {
            format!(
                "nu={nu} eps={e}: freq {:.4} vs bound {:.4}",
                rep.details[&format!("empirical_nu{nu}_eps{e}")],
                rep.details[&format!("bound_nu{nu}_eps{e}")]
            )
        })
        .collect();
    report(5, "gpd tail bound", pass, format!("{} (3 s.e. slack, bound tight here); {secs:.1}s", cells.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_06_bellman_contraction() {
    let gamma = 0.9;
    let rep = contraction_check(100, gamma, &mut rng(606));
    let pass = rep.violations == 0 && rep.cases == 100 && rep.details["max_ratio"] <= gamma + 1e-9;
    report(
        6,
        "distributional contraction",
        pass,
        format!("100 instances, max ratio {:.4} (gamma {gamma})", rep.details["max_ratio"]),
    );
    assert!(pass);
}

#[test]
fn criterion_07_cvar_estimator_consistency() {
    let started = Instant::now();
    let mut r = rng(707);
    let (obs, act, hidden) = (2, 1, 64);
    let mut critic = QuantileCostCritic::<f64>::new(obs, act, hidden, &mut r).unwrap();
    let mut opt = OptimizerState::new(&critic.online, OptimizerConfig::default().with_eta(1e-3)).unwrap();
    let (b, n) = (16, 32);
    let (s, a) = ([0.3, -0.2], [0.5]);
    let kappa = 0.01;
    let mut batch = TransitionBatch {
        s: Array2::from_shape_fn((b, obs), |(_, j)| s[j]),
        a: Array2::from_shape_fn((b, act), |(_, j)| a[j]),
        r: Array1::zeros(b),
        c: Array1::zeros(b),
        s_next: Array2::zeros((b, obs)),
        d: Array1::ones(b),
    };
    let next = Array2::zeros((b, act));
    let taus_next = Array2::from_elem((b, 1), 0.5);
    for _ in 0..20_000 {
        batch.c = Array1::from_shape_fn(b, |_| r.random::<f64>());
        let taus = Array2::from_shape_fn((b, n), |_| r.random::<f64>());
        let (_, g) = cost_critic_loss_with(&critic, &batch, &next, &taus, &taus_next, 0.99, kappa).unwrap();
        adamw_step(&mut critic.online, &g, &mut opt).unwrap();
    }
    let estimate = critic.cvar(&s, &a, 0.5, 32, CvarMode::Stratified, &mut r).unwrap();
    let grid = tail_taus::<f64, _>(1, 0.5, 32, CvarMode::Stratified, &mut r).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let rel = (estimate - 0.75).abs() / 0.75;
    let pass = rel < 0.05 && secs < 300.0;
    report(
        7,
        "cvar estimator consistency",
        pass,
        format!(
            "CVaR_0.5 {estimate:.4} vs 0.75 (rel {rel:.3}), grid mean {:.4}, {secs:.1}s",
            grid.mean().unwrap()
        ),
    );
    assert!(pass);
}

/// Flat parameter vector for optimizer checks.
#[derive(Debug, Clone, PartialEq)]
struct Flat(Vec<f64>);

impl ParamSet<f64> for Flat {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.0]
    }
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.0]
    }
}

#[test]
fn criterion_08_optimizer_reductions() {
    let mut r = rng(808);
    // (a) a = 0, T^-1 = 0 is plain gradient descent, bit for bit.
    let cfg = OptimizerConfig {
        a: 0.0,
        t_inv: 0.0,
        clip_c: f64::MAX,
        clip_mode: ClipMode::Elementwise,
        ..OptimizerConfig::default().with_eta(0.01)
    };
    let mut p = Flat((0..257).map(|_| r.random_range(-3.0..3.0)).collect());
    let mut gd = p.clone();
    let mut st = OptimizerState::new(&p, cfg).unwrap();
    let mut noise = rng(1);
    let mut bit_equal = true;
    for _ in 0..50 {
        let g = Flat((0..257).map(|_| r.random_range(-5.0..5.0)).collect());
        langevin_step(&mut p, &g, &mut st, LangevinVariant::SlsacAsgld, &mut noise).unwrap();
        for (x, gi) in gd.0.iter_mut().zip(&g.0) {
            *x -= 0.01 * gi;
        }
        bit_equal &= p.0.iter().zip(&gd.0).all(|(a, b)| a.to_bits() == b.to_bits());
    }

    // (b) injected noise variance 2 eta T^-1 from 1e6 coordinates.
    let (eta, t_inv) = (1e-3, 0.5);
    let cfg = OptimizerConfig {
        a: 0.0,
        t_inv,
        ..OptimizerConfig::default().with_eta(eta)
    };
    let n = 1_000_000;
    let mut p = Flat(vec![0.0; n]);
    let zero = Flat(vec![0.0; n]);
    let mut st = OptimizerState::new(&p, cfg).unwrap();
    langevin_step(&mut p, &zero, &mut st, LangevinVariant::SlsacAsgld, &mut rng(2)).unwrap();
    let mean = p.0.iter().sum::<f64>() / n as f64;
    let var = p.0.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let want = 2.0 * eta * t_inv;
    let var_rel = (var - want).abs() / want;

    // (c) identical critics: AdamW keeps them equal, aSGLD splits them.
    let net = Mlp::<f64>::new(&[3, 16, 16, 1], Activation::Relu, Activation::Identity, &mut r).unwrap();
    let batch = TransitionBatch {
        s: Array2::from_shape_fn((32, 2), |_| r.random_range(-1.0..1.0)),
        a: Array2::from_shape_fn((32, 1), |_| r.random_range(-1.0..1.0)),
        r: Array1::zeros(32),
        c: Array1::zeros(32),
        s_next: Array2::zeros((32, 2)),
        d: Array1::ones(32),
    };
    let y = Array1::from_shape_fn(32, |_| r.sample::<f64, _>(StandardNormal));
    let cfg = OptimizerConfig::default().with_eta(1e-3);
    let run = |rule: UpdateRule| -> (bool, Option<usize>) {
        let mut ens =
            RewardEnsemble::from_critics(vec![net.clone(), net.clone()], Aggregation::MeanMin, rule, cfg, 9).unwrap();
        let mut split_at = None;
        let mut identical = true;
        for step in 1..=10 {
            ens.update_with_targets(&batch, &y).unwrap();
            let same = flatten(&ens.critics[0])
                .iter()
                .zip(flatten(&ens.critics[1]))
                .all(|(a, b)| a.to_bits() == b.to_bits());
            identical &= same;
            if !same && split_at.is_none() {
                split_at = Some(step);
            }
        }
        (identical, split_at)
    };
    let (adam_same, _) = run(UpdateRule::AdamW);
    let (_, sgld_split) = run(UpdateRule::Langevin(LangevinVariant::SlsacAsgld));

    let pass = bit_equal && var_rel < 0.01 && adam_same && sgld_split.is_some();
    report(
        8,
        "optimizer reductions",
        pass,
        format!(
            "gd bit-equal {bit_equal}, noise var {var:.5e} vs {want:.5e} (rel {var_rel:.4}), \
             adamw identical {adam_same}, asgld split at step {sgld_split:?}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_desk_end_to_end() {
    let cfg = desk_config(&[]);
    let beta = cfg.beta;
    let mut lines = Vec::new();
    let mut all_safe = true;
    let mut slow = false;
    let (mut ret_sum, mut rand_sum) = (0.0, 0.0);
    for &seed in &cfg.seeds {
        let started = Instant::now();
        let (summary, agent) = train(&cfg, seed, &mut NullSink).unwrap();
        let secs = started.elapsed().as_secs_f64();
        let tail = summary.tail_cvar(TAIL_EPISODES, 0.5).unwrap();
        let eval = evaluate(&agent.policy, &cfg.env, cfg.eval_episodes, seed).unwrap();
        let random = evaluate_random(&cfg.env, cfg.eval_episodes, seed).unwrap();
        all_safe &= tail <= beta;
        slow |= secs >= 900.0;
        ret_sum += eval.mean_return;
        rand_sum += random.mean_return;
        lines.push(format!(
            "seed {seed}: tail CVaR {tail:.2}, eval return {:.1}, random {:.1}, {secs:.0}s",
            eval.mean_return, random.mean_return
        ));
    }
    let k = cfg.seeds.len() as f64;
    let (ret, rand) = (ret_sum / k, rand_sum / k);
    let pass = all_safe && ret >= 3.0 * rand && !slow;
    report(
        9,
        "desk end-to-end",
        pass,
        format!("{}; mean return {ret:.1} vs 3x random {:.1}", lines.join("; "), 3.0 * rand),
    );
    assert!(pass);
}

/// Desk settings for the epsilon sweep.
const SWEEP: &[&str] = &[];

#[test]
fn criterion_10_epsilon_sweep() {
    let mean_cost = |eps: &str| -> (f64, Vec<f64>) {
        let e = format!("cost.epsilon={eps}");
        let c = format!("constraint.epsilon={eps}");
        let mut ov: Vec<&str> = SWEEP.to_vec();
        ov.push(&e);
        ov.push(&c);
        let cfg = desk_config(&ov);
        let per_seed: Vec<f64> = cfg
            .seeds
            .iter()
            .map(|&seed| {
                let (summary, _) = train(&cfg, seed, &mut NullSink).unwrap();
                summary.tail_mean_cost(TAIL_EPISODES).unwrap()
            })
            .collect();
        (per_seed.iter().sum::<f64>() / per_seed.len() as f64, per_seed)
    };
    let (risky, risky_seeds) = mean_cost("0.25");
    let (neutral, neutral_seeds) = mean_cost("1.0");
    let pass = risky <= neutral;
    report(
        10,
        "epsilon sweep safety",
        pass,
        format!("eps 0.25 mean cost {risky:.2} {risky_seeds:?} vs eps 1.0 {neutral:.2} {neutral_seeds:?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_11_determinism() {
    let cfg = desk_config(&["train.total_steps=3000", "train.hidden=16", "train.log_interval=100",
        "constraint.warmup_general=500", "constraint.warmup_multiplier=500", "env.horizon=100"]);
    let dir = std::env::temp_dir().join(format!("slsac-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut files = Vec::new();
    for run in 0..2 {
        let path = dir.join(format!("run{run}.jsonl"));
        let mut sink = JsonlSink::create(&path).unwrap();
        train(&cfg, 11, &mut sink).unwrap();
        sink.flush().unwrap();
        drop(sink);
        files.push(std::fs::read(&path).unwrap());
    }
    std::fs::remove_dir_all(&dir).ok();
    let pass = !files[0].is_empty() && files[0] == files[1];
    report(11, "determinism", pass, format!("{} bytes, identical {}", files[0].len(), files[0] == files[1]));
    assert!(pass);
}

#[test]
fn criterion_12_schedule_trace() {
    let (wg, wm, eta) = (2u64, 3u64, 0.01);
    let mut cfg = desk_config(&[]);
    for (k, v) in [
        ("train.total_steps", "10"),
        ("train.batch_size", "2"),
        ("train.hidden", "8"),
        ("train.seeds", "0"),
        ("cost.n_quantiles", "4"),
        ("constraint.warmup_general", "2"),
        ("constraint.warmup_multiplier", "3"),
        ("constraint.eta_lambda", "0.01"),
        ("constraint.beta", "-1"),
        ("env.horizon", "3"),
        ("env.v_limit", "-10"),
    ] {
        cfg.set(k, v).unwrap();
    }
    let mut tr = Trainer::new(cfg, 0).unwrap();
    tr.enable_trace();
    tr.train(&mut NullSink).unwrap();
    let trace = tr.trace().unwrap().to_vec();

    let steps_of = |p: Phase| -> Vec<u64> { trace.iter().filter(|e| e.phase == p).map(|e| e.step).collect() };
    let even_after_warmup: Vec<u64> = (1..=10).filter(|t| t % 2 == 0 && *t > wg).collect();
    let policy_ok = steps_of(Phase::PolicyUpdate) == even_after_warmup;
    let target_ok = steps_of(Phase::TargetUpdate) == even_after_warmup;
    let first_active = wg + wm + 1;
    let frozen = trace.iter().filter(|e| e.step < first_active).all(|e| e.lambda == 0.0);
    let lambda_steps = steps_of(Phase::LambdaUpdate);
    let lambda_every = lambda_steps == (first_active..=10).collect::<Vec<_>>();
    // Every episode costs 3 and the threshold is -1, so each update adds 4 eta.
    let lambda_values = trace
        .iter()
        .filter(|e| e.phase == Phase::LambdaUpdate)
        .all(|e| (e.lambda - 4.0 * eta * (e.step - first_active + 1) as f64).abs() < 1e-12);

    for t in 1..=10 {
        let phases: Vec<String> = trace
            .iter()
            .filter(|e| e.step == t)
            .map(|e| format!("{:?}", e.phase))
            .collect();
        let lambda = trace.iter().filter(|e| e.step == t).last().map(|e| e.lambda).unwrap_or(0.0);
        println!("  t={t:>2} lambda={lambda:.3} {}", phases.join(","));
    }
    let pass = policy_ok && target_ok && frozen && lambda_every && lambda_values;
    report(
        12,
        "update schedule",
        pass,
        format!(
            "policy/target on {:?}, lambda frozen before {first_active}: {frozen}, lambda updates at {lambda_steps:?}",
            steps_of(Phase::PolicyUpdate)
        ),
    );
    assert!(pass);
}
