mod common;

use std::sync::Arc;

use common::{rng, scalar_toy_step, uniform_vec};
use nalgebra::DMatrix;
use proptest::prelude::*;
use saddle_core::problems::{make_synthetic, DroLogisticProblem, LqrGailProblem, SyntheticPLProblem, SyntheticParams};
use saddle_core::schedule::GammaRule;
use saddle_core::solvers::{agda_step, gda_step, pdm_step, spdm_step, BaselineSteps, BatchSampler, SamplingMode};
use saddle_core::{
    make_schedule, run, Error, IterateState, ProblemConstants, ProblemInstance, ProxSpec, RunConfig,
    ScheduleRules, SolverKind, Vector,
};

fn toy(mu: f64, declared: Option<ProblemConstants>) -> ProblemInstance {
    let p = SyntheticPLProblem::toy(mu).unwrap();
    let c = declared.unwrap_or_else(|| p.constants().unwrap());
    ProblemInstance::new(Arc::new(p), ProxSpec::Zero, c).unwrap()
}

fn scalar(v: f64) -> Vector {
    Vector::from_element(1, v)
}

fn synthetic(seed: u64, n_samples: usize, noise: f64) -> ProblemInstance {
    let mut params = SyntheticParams::new(6, 3, 0.5);
    params.rank_deficiency = 2;
    params.seed = seed;
    params.n_samples = n_samples;
    params.noise_x = noise;
    params.noise_y = noise;
    let p = make_synthetic(&params).unwrap();
    let c = p.constants().unwrap();
    ProblemInstance::new(Arc::new(p), ProxSpec::Zero, c).unwrap()
}

fn small_dro() -> ProblemInstance {
    let data = DMatrix::from_row_slice(5, 3, &[
        1.0, 0.2, -0.4, -0.5, 1.1, 0.3, 0.7, -0.9, 0.8, 0.0, 0.6, -1.2, -0.3, -0.2, 0.9,
    ]);
    let p = DroLogisticProblem::new(data, vec![1.0, -1.0, 1.0, 1.0, -1.0]).unwrap();
    let c = p.estimated_constants(2.0, 0.1).unwrap();
    ProblemInstance::new(Arc::new(p), ProxSpec::box_ball(5, 0.01, 2.0).unwrap(), c).unwrap()
}

fn state_at(x: f64, x_tilde: f64, x_prev: f64, y: f64) -> IterateState {
    let mut s = IterateState::new(scalar(x), scalar(y));
    s.x_tilde = scalar(x_tilde);
    s.x_prev = scalar(x_prev);
    s.clear_cache();
    s
}

#[test]
fn stationary_toy_state_is_fixed() {
    let inst = toy(0.5, None);
    let sched = make_schedule(&inst.constants, 5, ScheduleRules::default()).unwrap();
    let out = pdm_step(&inst, &sched, &IterateState::new(scalar(0.0), scalar(0.0))).unwrap();
    assert_eq!(out.state.x[0], 0.0);
    assert_eq!(out.state.x_tilde[0], 0.0);
    assert_eq!(out.state.y[0], 0.0);
    assert_eq!(out.state.k, 1);
}

#[test]
fn first_step_matches_scalar_oracle() {
    let declared = ProblemConstants::new(0.5, 1.0, 0.1).unwrap();
    let inst = toy(0.1, Some(declared));
    let sched = make_schedule(&declared, 10, ScheduleRules::default()).unwrap();
    let out = pdm_step(&inst, &sched, &state_at(1.0, 1.0, 1.0, 0.0)).unwrap();

    let sigma = 0.1 / 36.0;
    let expect = scalar_toy_step(0.1, 0.5, 1.0, 1.0, 1.25, sigma, (1.0, 1.0, 1.0, 0.0));
    // Hand values of the same step.
    assert!((expect.y - sigma).abs() < 1e-15);
    assert!((expect.r - (0.1 + sigma)).abs() < 1e-15);
    assert!((expect.x - (1.0 - 1.25 * (0.1 + sigma))).abs() < 1e-15);
    assert!((expect.x_tilde - (1.0 - (0.1 + sigma))).abs() < 1e-15);

    let tol = 1e-12;
    assert!((out.state.z_last[0] - expect.z).abs() < tol);
    assert!((out.p[0] - expect.p).abs() < tol);
    assert_eq!(out.q[0], 0.0);
    assert!((out.state.y[0] - expect.y).abs() < tol);
    assert!((out.r[0] - expect.r).abs() < tol);
    assert!((out.state.x[0] - expect.x).abs() < tol);
    assert!((out.state.x_tilde[0] - expect.x_tilde).abs() < tol);
    assert_eq!(out.state.x_prev[0], 1.0);
    assert!((out.y_move - expect.y.abs()).abs() < tol);
}

#[test]
fn later_steps_match_scalar_oracle() {
    let declared = ProblemConstants::new(0.5, 1.0, 0.1).unwrap();
    let inst = toy(0.1, Some(declared));
    let sched = make_schedule(&declared, 20, ScheduleRules::default()).unwrap();
    let mut state = state_at(1.0, 1.0, 1.0, 0.0);
    let mut hand = (1.0, 1.0, 1.0, 0.0);
    for k in 0..20 {
        let p = sched.params(k).unwrap();
        let e = scalar_toy_step(0.1, 0.5, p.alpha, p.lambda, p.gamma, p.sigma, hand);
        let out = pdm_step(&inst, &sched, &state).unwrap();
        let scale = 1.0 + e.q.abs();
        assert!((out.q[0] - e.q).abs() < 1e-12 * scale, "k = {k}");
        assert!((out.state.x[0] - e.x).abs() < 1e-12, "k = {k}");
        assert!((out.state.x_tilde[0] - e.x_tilde).abs() < 1e-12, "k = {k}");
        assert!((out.state.y[0] - e.y).abs() < 1e-12, "k = {k}");
        hand = (e.x, e.x_tilde, hand.0, e.y);
        state = out.state;
    }
}

#[test]
fn equal_steps_collapse_extrapolation() {
    let inst = synthetic(3, 1, 0.0);
    let rules = ScheduleRules {
        gamma: GammaRule::EqualLambda,
        ..Default::default()
    };
    let sched = make_schedule(&inst.constants, 30, rules).unwrap();
    let mut r = rng(9);
    let mut state = IterateState::new(uniform_vec(&mut r, 6, -1.0, 1.0), uniform_vec(&mut r, 3, -1.0, 1.0));
    for _ in 0..30 {
        let x_before = state.x.clone();
        let out = pdm_step(&inst, &sched, &state).unwrap();
        let s = &out.state;
        assert!((&s.z_last - &x_before).norm() <= 1e-14 * x_before.norm().max(1.0));
        assert!((&s.x_tilde - &s.x).norm() <= 1e-14 * s.x.norm().max(1.0));
        state = out.state;
    }
}

#[test]
fn momentum_vanishes_without_displacement() {
    let inst = small_dro();
    let sched = make_schedule(&inst.constants, 10, ScheduleRules::default()).unwrap();
    let x = Vector::from_vec(vec![0.3, -0.1, 0.5]);
    let mut state = IterateState::new(x.clone(), Vector::from_element(5, 0.2));
    state.x_tilde = Vector::from_vec(vec![1.0, 1.0, 1.0]);
    let out = pdm_step(&inst, &sched, &state).unwrap();
    assert!(out.q.iter().all(|&v| v == 0.0));
}

#[test]
fn momentum_ignores_dual_point() {
    for inst in [small_dro(), synthetic(4, 1, 0.0)] {
        let sched = make_schedule(&inst.constants, 10, ScheduleRules::default()).unwrap();
        let (dx, dy) = (inst.dim_x(), inst.dim_y());
        let mut r = rng(11);
        let mut a = IterateState::new(uniform_vec(&mut r, dx, -1.0, 1.0), Vector::from_element(dy, 1.0 / dy as f64));
        a.x_prev = uniform_vec(&mut r, dx, -1.0, 1.0);
        a.k = 3;
        a.clear_cache();
        let mut b = a.clone();
        b.y = &b.y + uniform_vec(&mut r, dy, 0.0, 0.1);
        let qa = pdm_step(&inst, &sched, &a).unwrap().q;
        let qb = pdm_step(&inst, &sched, &b).unwrap().q;
        assert!(qa.iter().any(|&v| v != 0.0));
        assert_eq!(qa, qb);
    }
}

#[test]
fn cached_and_fresh_momentum_agree() {
    let inst = small_dro();
    let sched = make_schedule(&inst.constants, 10, ScheduleRules::default()).unwrap();
    let start = IterateState::new(Vector::from_vec(vec![0.3, -0.1, 0.5]), Vector::from_element(5, 0.2));
    let first = pdm_step(&inst, &sched, &start).unwrap();
    let cached = pdm_step(&inst, &sched, &first.state).unwrap();
    let mut fresh_state = first.state.clone();
    fresh_state.clear_cache();
    let fresh = pdm_step(&inst, &sched, &fresh_state).unwrap();
    assert_eq!(cached.state, fresh.state);
    assert_eq!(cached.oracle_calls, 3);
    assert_eq!(fresh.oracle_calls, 4);
}

#[test]
fn exhaustive_spdm_step_is_pdm_step() {
    let inst = synthetic(5, 8, 0.3);
    let sched = make_schedule(&inst.constants, 10, ScheduleRules::default()).unwrap();
    let sampler = BatchSampler::new(1, SamplingMode::Exhaustive);
    let mut state = IterateState::new(Vector::from_element(6, 1.0), Vector::zeros(3));
    for _ in 0..5 {
        let a = pdm_step(&inst, &sched, &state).unwrap();
        let b = spdm_step(&inst, &sched, &state, &sampler, 8).unwrap();
        assert_eq!(a, b);
        state = a.state;
    }
}

#[test]
fn spdm_step_is_deterministic() {
    let inst = synthetic(5, 8, 0.3);
    let sched = make_schedule(&inst.constants, 10, ScheduleRules::default()).unwrap();
    let sampler = BatchSampler::new(42, SamplingMode::Uniform);
    let state = IterateState::new(Vector::from_element(6, 1.0), Vector::zeros(3));
    let a = spdm_step(&inst, &sched, &state, &sampler, 3).unwrap();
    let b = spdm_step(&inst, &sched, &state, &sampler, 3).unwrap();
    assert_eq!(a, b);
}

#[test]
fn batch_gradient_is_mean_of_drawn_samples() {
    let inst = synthetic(6, 4, 0.5);
    let oracle = &inst.oracle;
    let sched = make_schedule(&inst.constants, 10, ScheduleRules::default()).unwrap();
    let sampler = BatchSampler::new(7, SamplingMode::Uniform);
    let batch = sampler.draw(0, 2, 4).unwrap();
    assert_eq!(batch.u_indices.len(), 2);
    assert!(batch.u_indices.iter().chain(&batch.v_indices).all(|&i| i < 4));

    let mut r = rng(2);
    let x = uniform_vec(&mut r, 6, -1.0, 1.0);
    let y = uniform_vec(&mut r, 3, -1.0, 1.0);
    let manual_x = (oracle.grad_x_sample(&x, &y, batch.u_indices[0]).unwrap()
        + oracle.grad_x_sample(&x, &y, batch.u_indices[1]).unwrap())
        / 2.0;
    let got = oracle.grad_x_batch(&x, &y, &batch.u_indices).unwrap();
    assert!((got - &manual_x).amax() < 1e-14);

    // The step's r uses exactly U_0 at (z, y+).
    let state = IterateState::new(x.clone(), y.clone());
    let out = spdm_step(&inst, &sched, &state, &sampler, 2).unwrap();
    let manual_r = (oracle.grad_x_sample(&out.state.z_last, &out.state.y, batch.u_indices[0]).unwrap()
        + oracle.grad_x_sample(&out.state.z_last, &out.state.y, batch.u_indices[1]).unwrap())
        / 2.0;
    assert!((&out.r - manual_r).amax() < 1e-14);
    let manual_p = (oracle.grad_y_sample(&x, &y, batch.v_indices[0]).unwrap()
        + oracle.grad_y_sample(&x, &y, batch.v_indices[1]).unwrap())
        / 2.0;
    assert!((&out.p - manual_p).amax() < 1e-14);
}

#[test]
fn full_batch_equals_full_gradient() {
    for inst in [small_dro(), synthetic(8, 16, 0.7)] {
        let n = inst.oracle.num_samples().unwrap();
        let all: Vec<usize> = (0..n).collect();
        let mut r = rng(12);
        let x = uniform_vec(&mut r, inst.dim_x(), -1.0, 1.0);
        let y = uniform_vec(&mut r, inst.dim_y(), 0.0, 0.5);
        let gx = inst.oracle.grad_x(&x, &y).unwrap();
        let gy = inst.oracle.grad_y(&x, &y).unwrap();
        assert!((inst.oracle.grad_x_batch(&x, &y, &all).unwrap() - &gx).amax() < 1e-12 * (1.0 + gx.amax()));
        assert!((inst.oracle.grad_y_batch(&x, &y, &all).unwrap() - &gy).amax() < 1e-12 * (1.0 + gy.amax()));
    }
}

#[test]
fn single_sample_estimators_are_unbiased() {
    let inst = small_dro();
    let oracle = &inst.oracle;
    let n = oracle.num_samples().unwrap();
    let x = Vector::from_vec(vec![0.4, -0.7, 0.2]);
    let y = Vector::from_vec(vec![0.1, 0.3, 0.05, 0.25, 0.3]);
    let full_x = oracle.grad_x(&x, &y).unwrap();
    let full_y = oracle.grad_y(&x, &y).unwrap();
    let sampler = BatchSampler::new(2024, SamplingMode::Uniform);
    let draws = 100_000;
    let (mut sx, mut sxx) = (Vector::zeros(3), Vector::zeros(3));
    let (mut sy, mut syy) = (Vector::zeros(n), Vector::zeros(n));
    for k in 0..draws {
        let b = sampler.draw(k, 1, n).unwrap();
        let gx = oracle.grad_x_sample(&x, &y, b.u_indices[0]).unwrap();
        let gy = oracle.grad_y_sample(&x, &y, b.v_indices[0]).unwrap();
        sxx += gx.component_mul(&gx);
        sx += gx;
        syy += gy.component_mul(&gy);
        sy += gy;
    }
    let m = draws as f64;
    for (sum, sq, full) in [(sx, sxx, full_x), (sy, syy, full_y)] {
        for i in 0..full.len() {
            let mean = sum[i] / m;
            let var = sq[i] / m - mean * mean;
            let se = (var / m).sqrt();
            assert!((mean - full[i]).abs() <= 4.0 * se, "component {i}: {mean} vs {}", full[i]);
        }
    }
}

#[test]
fn agda_hand_step() {
    let inst = toy(0.1, None);
    let steps = BaselineSteps { x: 0.1, y: 0.1 };
    let out = agda_step(&inst, steps, &IterateState::new(scalar(1.0), scalar(0.0))).unwrap();
    assert!((out.state.x[0] - 0.99).abs() < 1e-15);
    assert!((out.state.y[0] - 0.099).abs() < 1e-15);
    let gda = gda_step(&inst, steps, &IterateState::new(scalar(1.0), scalar(0.0))).unwrap();
    assert_eq!(gda.state.x, out.state.x);
    assert!((gda.state.y[0] - 0.1).abs() < 1e-15);
    assert_eq!(out.oracle_calls, 2);

    let fixed = agda_step(&inst, steps, &IterateState::new(scalar(0.0), scalar(0.0))).unwrap();
    assert_eq!((fixed.state.x[0], fixed.state.y[0]), (0.0, 0.0));
}

#[test]
fn zero_horizon_keeps_initial_record() {
    let inst = toy(0.5, None);
    let init = IterateState::new(scalar(1.0), scalar(0.0));
    let out = run(&inst, &RunConfig::new(SolverKind::Pdm, 0), init.clone()).unwrap();
    assert_eq!(out.trace.len(), 1);
    assert_eq!(out.trace[0].k, 0);
    assert_eq!(out.trace[0].oracle_calls, 0);
    assert_eq!(out.state, init);
    assert_eq!(out.oracle_calls, 0);
}

#[test]
fn toy_best_stationarity_at_least_halves() {
    let inst = toy(0.5, None);
    let best = |t| {
        run(&inst, &RunConfig::new(SolverKind::Pdm, t), IterateState::new(scalar(1.0), scalar(0.0)))
            .unwrap()
            .best
            .stationarity
    };
    let (b200, b400) = (best(200), best(400));
    assert!(b400 > 0.0);
    assert!(b400 / b200 <= 0.5, "{b200:e} -> {b400:e}");
}

#[test]
fn gda_reduces_stationarity_on_toy() {
    let inst = toy(0.5, None);
    let out = run(&inst, &RunConfig::new(SolverKind::Gda, 300), IterateState::new(scalar(1.0), scalar(0.0))).unwrap();
    assert!(out.failure.is_none());
    assert!(out.trace.last().unwrap().stationarity < out.trace[0].stationarity);
}

#[test]
fn oracle_call_accounting() {
    let inst = synthetic(2, 8, 0.2);
    let init = IterateState::new(Vector::from_element(6, 1.0), Vector::zeros(3));
    let calls = |solver, batch: Option<usize>| {
        let mut cfg = RunConfig::new(solver, 25);
        cfg.batch_size = batch;
        run(&inst, &cfg, init.clone()).unwrap().oracle_calls
    };
    assert_eq!(calls(SolverKind::Pdm, None), 75);
    assert_eq!(calls(SolverKind::Gda, None), 50);
    assert_eq!(calls(SolverKind::Agda, None), 50);
    // First step has x_prev = x, so only three batch evaluations.
    assert_eq!(calls(SolverKind::Spdm, Some(4)), 12 + 24 * 16);
}

#[test]
fn exhaustive_spdm_run_is_pdm_run() {
    let inst = synthetic(2, 8, 0.2);
    let init = IterateState::new(Vector::from_element(6, 1.0), Vector::zeros(3));
    let mut cfg = RunConfig::new(SolverKind::Spdm, 60);
    cfg.sampling = SamplingMode::Exhaustive;
    let a = run(&inst, &cfg, init.clone()).unwrap();
    let b = run(&inst, &RunConfig::new(SolverKind::Pdm, 60), init).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.state, b.state);
    assert_eq!(a.best, b.best);
}

#[test]
fn divergence_is_reported_with_partial_trace() {
    let inst = toy(0.1, None);
    let mut cfg = RunConfig::new(SolverKind::Gda, 500);
    cfg.step_x = Some(50.0);
    cfg.step_y = Some(50.0);
    let out = run(&inst, &cfg, IterateState::new(scalar(1.0), scalar(0.0))).unwrap();
    match &out.failure {
        Some(Error::Divergence { k, .. }) => assert!(*k < 500),
        other => panic!("expected divergence, got {other:?}"),
    }
    assert!(!out.trace.is_empty());
    assert!(out.trace.iter().all(|r| r.stationarity.is_finite()));
    assert!(out.into_result().is_err());
}

#[test]
fn config_errors_are_rejected() {
    let (lqr, _) = LqrGailProblem::random(2, 1, 0).unwrap();
    let c = ProblemConstants::new(1.0, 1.0, 0.1).unwrap();
    let inst = ProblemInstance::new(Arc::new(lqr), ProxSpec::Zero, c).unwrap();
    let init = IterateState::new(Vector::zeros(2), Vector::zeros(5));
    assert!(matches!(run(&inst, &RunConfig::new(SolverKind::Spdm, 5), init.clone()), Err(Error::Config(_))));
    let mut cfg = RunConfig::new(SolverKind::Pdm, 5);
    cfg.trace_every = 0;
    assert!(run(&inst, &cfg, init.clone()).is_err());
    let bad = IterateState::new(Vector::zeros(3), Vector::zeros(5));
    assert!(matches!(run(&inst, &RunConfig::new(SolverKind::Pdm, 5), bad), Err(Error::Dimension(_))));
}

#[test]
fn trace_every_thins_records() {
    let inst = toy(0.5, None);
    let mut cfg = RunConfig::new(SolverKind::Pdm, 23);
    cfg.trace_every = 5;
    let out = run(&inst, &cfg, IterateState::new(scalar(1.0), scalar(0.0))).unwrap();
    let ks: Vec<usize> = out.trace.iter().map(|r| r.k).collect();
    assert_eq!(ks, vec![0, 5, 10, 15, 20, 23]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trace_invariants(seed in 0u64..1000, t in 1usize..120, which in 0usize..4) {
        let inst = synthetic(seed, 8, 0.3);
        let solver = [SolverKind::Pdm, SolverKind::Spdm, SolverKind::Gda, SolverKind::Agda][which];
        let mut cfg = RunConfig::new(solver, t);
        cfg.seed = seed;
        cfg.batch_size = Some(3);
        let out = run(&inst, &cfg, IterateState::new(Vector::from_element(6, 1.0), Vector::zeros(3))).unwrap();
        prop_assert!(out.failure.is_none());
        let mut prev = f64::INFINITY;
        for r in &out.trace {
            prop_assert!(r.stationarity >= 0.0);
            prop_assert!(r.stationarity >= r.grad_x_norm * r.grad_x_norm * (1.0 - 1e-12));
            prop_assert!(r.best_so_far <= prev);
            prop_assert!(r.best_so_far <= r.stationarity);
            prev = r.best_so_far;
        }
        prop_assert_eq!(out.best.stationarity, prev);
    }

    #[test]
    fn grad_y_is_constant_in_y(seed in 0u64..1000) {
        let inst = small_dro();
        let mut r = rng(seed);
        let x = uniform_vec(&mut r, 3, -2.0, 2.0);
        prop_assert_eq!(inst.check_linear_in_y(&x, 3, seed).unwrap(), 0.0);
        let syn = synthetic(seed, 1, 0.0);
        let x = uniform_vec(&mut r, 6, -2.0, 2.0);
        prop_assert_eq!(syn.check_linear_in_y(&x, 3, seed).unwrap(), 0.0);
    }
}
