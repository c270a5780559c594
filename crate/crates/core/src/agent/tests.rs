use super::*;
use crate::frap::forward;
use crate::scenarios;

fn obs_single() -> Observation {
    let mut o = Observation {
        current_phase: vec![0.0; 8],
        incoming_counts: vec![0.0; 12],
        outgoing_counts: vec![0.0; 4],
    };
    o.current_phase[0] = 1.0;
    o
}

fn random_obs(rng: &mut ChaCha8Rng) -> Observation {
    let mut o = obs_single();
    o.current_phase = vec![0.0; 8];
    o.current_phase[rng.random_range(0..8)] = 1.0;
    o.incoming_counts.iter_mut().for_each(|x| *x = rng.random());
    o.outgoing_counts.iter_mut().for_each(|x| *x = rng.random());
    o
}

fn single_geoms() -> Vec<AgentGeometry> {
    let (net, _) = scenarios::single().unwrap();
    AgentGeometry::for_network(&net, 4).unwrap()
}

fn transition(rng: &mut ChaCha8Rng, reward: f64, terminal: bool) -> Transition {
    Transition {
        intersection: 0,
        obs: Arc::from(vec![random_obs(rng)]),
        action: rng.random_range(0..8),
        reward,
        next_obs: Arc::from(vec![random_obs(rng)]),
        terminal,
    }
}

#[test]
fn epsilon_examples() {
    let e = EpsilonSchedule::default();
    assert_eq!(e.value(0), 0.8);
    assert!((e.value(1) - 0.7996).abs() < 1e-12);
    assert_eq!(e.value(100_000), 0.01);
    assert_eq!(e.value(u64::MAX), 0.01);
}

proptest::proptest! {
    #[test]
    fn epsilon_non_increasing(i in 0u64..200_000) {
        let e = EpsilonSchedule::default();
        proptest::prop_assert!(e.value(i + 1) <= e.value(i));
        proptest::prop_assert!(e.value(i) >= 0.01);
    }
}

#[test]
fn greedy_selection() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(select_action(&[1.0, 3.0, 2.0], 0.0, &mut rng).unwrap(), 1);
    assert_eq!(select_action(&[2.0, 2.0], 0.0, &mut rng).unwrap(), 0);
    assert!(matches!(select_action(&[], 0.5, &mut rng), Err(Error::EmptyQ)));
}

#[test]
fn full_exploration_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 100_000;
    let mut counts = [0usize; 8];
    for _ in 0..n {
        counts[select_action(&[0.0; 8], 1.0, &mut rng).unwrap()] += 1;
    }
    let p = 1.0 / 8.0;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - n as f64 * p).abs() < 3.0 * sd, "{counts:?}");
    }
}

#[test]
fn terminal_and_zero_gamma_targets() {
    let geoms = single_geoms();
    let cfg = FrapConfig::default();
    let params = ParamStore::init(&cfg, &mut ChaCha8Rng::seed_from_u64(2));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = transition(&mut rng, -0.3, true);
    assert_eq!(td_targets(&[&t], &params, 0.95, &cfg, &geoms).unwrap(), vec![-0.3]);
    let batch: Vec<_> = (0..5).map(|k| transition(&mut rng, -(k as f64), false)).collect();
    let refs: Vec<_> = batch.iter().collect();
    let y = td_targets(&refs, &params, 0.0, &cfg, &geoms).unwrap();
    for (t, y) in batch.iter().zip(y) {
        assert_eq!(y, t.reward);
    }
}

#[test]
fn targets_use_exhaustive_max_over_actions() {
    let geoms = single_geoms();
    let cfg = FrapConfig::default();
    let params = ParamStore::init(&cfg, &mut ChaCha8Rng::seed_from_u64(4));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t = transition(&mut rng, -0.7, false);
    let feats = geoms[0].features(&t.next_obs[0]);
    let q = forward(&params, &cfg, &geoms[0].layout, &feats, &[]).unwrap();
    let mut best = q[0];
    for a in 1..q.len() {
        if q[a] > best {
            best = q[a];
        }
    }
    let y = td_targets(&[&t], &params, 0.95, &cfg, &geoms).unwrap();
    assert_eq!(y[0], -0.7 + 0.95 * best);
}

#[test]
fn target_shape_mismatch() {
    let geoms = single_geoms();
    let cfg = FrapConfig::default();
    let other = ParamStore::zeros(&FrapConfig { hidden_dim: 8, ..cfg.clone() });
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let t = transition(&mut rng, 0.0, false);
    assert!(matches!(td_targets(&[&t], &other, 0.95, &cfg, &geoms), Err(Error::Shape(_))));
}

#[test]
fn loss_matches_hand_computation() {
    let geoms = single_geoms();
    let cfg = AgentConfig::default();
    let learner = Learner::new(cfg.clone(), 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let batch = [transition(&mut rng, -0.2, false), transition(&mut rng, -0.9, true)];
    let refs: Vec<_> = batch.iter().collect();
    let y = td_targets(&refs, &learner.target, cfg.gamma, &cfg.network, &geoms).unwrap();
    let (loss, _) = learner.loss_and_gradients(&refs, &y, &geoms).unwrap();
    let q0 = q_values(&learner.params, &cfg.network, &geoms, &batch[0].obs, 0).unwrap()[batch[0].action];
    let q1 = q_values(&learner.params, &cfg.network, &geoms, &batch[1].obs, 0).unwrap()[batch[1].action];
    let expect = ((y[0] - q0).powi(2) + (y[1] - q1).powi(2)) / 2.0;
    assert!((loss - expect).abs() < 1e-12);
}

#[test]
fn satisfied_batch_leaves_params_alone() {
    let geoms = single_geoms();
    let cfg = AgentConfig { gamma: 1.0, ..AgentConfig::default() };
    let mut learner = Learner::new(cfg.clone(), 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    // Reward chosen so that y equals Q(o, a) exactly: terminal with r = Q.
    let mut t = transition(&mut rng, 0.0, true);
    t.reward = q_values(&learner.params, &cfg.network, &geoms, &t.obs, 0).unwrap()[t.action];
    let before = learner.params.clone();
    let loss = learner.train_step(&[&t], &geoms).unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!(learner.params, before);
}

#[test]
fn frozen_batch_loss_does_not_increase() {
    let geoms = single_geoms();
    let cfg = AgentConfig {
        optimizer: OptimizerKind::Sgd,
        target_sync_every: 1_000_000,
        ..AgentConfig::default()
    };
    let mut learner = Learner::new(cfg, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let batch: Vec<_> = (0..64)
        .map(|_| {
            let (r, term) = (-rng.random::<f64>(), rng.random_bool(0.1));
            transition(&mut rng, r, term)
        })
        .collect();
    let refs: Vec<_> = batch.iter().collect();
    let mut last = f64::INFINITY;
    for _ in 0..100 {
        let loss = learner.train_step(&refs, &geoms).unwrap();
        assert!(loss <= last, "{loss} > {last}");
        last = loss;
    }
}

#[test]
fn adam_reduces_frozen_batch_loss() {
    let geoms = single_geoms();
    let cfg = AgentConfig { target_sync_every: 1_000_000, ..AgentConfig::default() };
    let mut learner = Learner::new(cfg, 13).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let batch: Vec<_> = (0..64)
        .map(|_| {
            let r = -rng.random::<f64>();
            transition(&mut rng, r, false)
        })
        .collect();
    let refs: Vec<_> = batch.iter().collect();
    let first = learner.train_step(&refs, &geoms).unwrap();
    let mut last = first;
    for _ in 0..50 {
        last = learner.train_step(&refs, &geoms).unwrap();
    }
    assert!(last < first);
}

#[test]
fn sync_target_is_a_deep_copy() {
    let cfg = FrapConfig::default();
    let mut main = ParamStore::init(&cfg, &mut ChaCha8Rng::seed_from_u64(15));
    let target = sync_target(&main);
    assert_eq!(target, sync_target(&main));
    let q = forward(&main, &cfg, &single_geoms()[0].layout, &[[0.5, 0.1, 1.0]; 12], &[]).unwrap();
    let qt = forward(&target, &cfg, &single_geoms()[0].layout, &[[0.5, 0.1, 1.0]; 12], &[]).unwrap();
    assert_eq!(q, qt);
    main.demand_bias.data[0] += 1.0;
    assert_ne!(target, main);
}

#[test]
fn target_syncs_on_schedule() {
    let geoms = single_geoms();
    let cfg = AgentConfig { target_sync_every: 3, ..AgentConfig::default() };
    let mut learner = Learner::new(cfg, 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let batch: Vec<_> = (0..8).map(|_| transition(&mut rng, -1.0, false)).collect();
    let refs: Vec<_> = batch.iter().collect();
    let initial = learner.target.clone();
    learner.train_step(&refs, &geoms).unwrap();
    learner.train_step(&refs, &geoms).unwrap();
    assert_eq!(learner.target, initial);
    learner.train_step(&refs, &geoms).unwrap();
    assert_eq!(learner.target, learner.params);
}

#[test]
fn non_finite_loss_aborts() {
    let geoms = single_geoms();
    let mut learner = Learner::new(AgentConfig::default(), 18).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let t = transition(&mut rng, f64::NAN, true);
    assert!(matches!(learner.train_step(&[&t], &geoms), Err(Error::NonFiniteLoss { step: 0, .. })));
}

#[test]
fn config_validation() {
    assert!(AgentConfig::default().check().is_ok());
    for bad in [
        AgentConfig { gamma: 0.0, ..AgentConfig::default() },
        AgentConfig { gamma: 1.5, ..AgentConfig::default() },
        AgentConfig { batch_size: 60_000, ..AgentConfig::default() },
    ] {
        assert!(matches!(bad.check(), Err(Error::Config(_))));
    }
}

fn short_run(demand: f64, episodes: usize, seed: u64) -> TrainingOutcome {
    let agent = AgentConfig { episodes, batch_size: 16, ..AgentConfig::default() };
    short_run_with(agent, demand, seed)
}

fn short_run_with(agent: AgentConfig, demand: f64, seed: u64) -> TrainingOutcome {
    let (net, flows) = scenarios::single().unwrap();
    let flows = flows.scaled(demand);
    let sim = SimConfig { horizon_steps: 300, ..SimConfig::default() };
    run_training(&net, &flows, &agent, &sim, seed).unwrap()
}

#[test]
fn zero_demand_training_is_inert() {
    let agent = AgentConfig {
        episodes: 30,
        batch_size: 16,
        optimizer: OptimizerKind::Sgd,
        learning_rate: 0.01,
        target_sync_every: 20,
        ..AgentConfig::default()
    };
    let out = short_run_with(agent, 0.0, 20);
    for e in &out.episodes {
        assert_eq!(e.total_reward, 0.0);
        assert_eq!(e.metrics.throughput, 0);
    }
    let losses: Vec<f64> = out.episodes.iter().filter_map(|e| e.mean_loss).collect();
    assert!(losses.last().unwrap() < &(losses[0] * 1e-3), "{losses:?}");
}

#[test]
fn training_is_reproducible() {
    let a = short_run(1.0, 2, 21);
    let b = short_run(1.0, 2, 21);
    assert_eq!(a.episodes, b.episodes);
    assert_eq!(a.params, b.params);
    assert!(a.train_steps > 0);
}

#[test]
fn checkpoint_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    let cfg = FrapConfig { heads: 3, ..FrapConfig::default() };
    let params = ParamStore::init(&cfg, &mut ChaCha8Rng::seed_from_u64(22));
    save_checkpoint(&path, &params, &cfg, 1234).unwrap();
    let (p, c, step) = load_checkpoint(&path).unwrap();
    assert_eq!(p, params);
    assert_eq!(c, cfg);
    assert_eq!(step, 1234);
}

#[test]
fn checkpoint_rejects_wrong_shapes_and_versions() {
    let cfg = FrapConfig::default();
    let params = ParamStore::init(&cfg, &mut ChaCha8Rng::seed_from_u64(23));
    let mut ck = Checkpoint::new(&params, &cfg, 0);
    ck.version = 99;
    assert!(matches!(ck.clone().into_params(), Err(Error::Checkpoint(_))));
    let mut ck = Checkpoint::new(&params, &cfg, 0);
    ck.network.hidden_dim = 7;
    assert!(matches!(ck.into_params(), Err(Error::Checkpoint(_))));
}

#[test]
fn greedy_controller_uses_argmax() {
    let (net, flows) = scenarios::single().unwrap();
    let cfg = FrapConfig::default();
    let params = ParamStore::init(&cfg, &mut ChaCha8Rng::seed_from_u64(24));
    let sim = SimConfig::default();
    let state = SimState::new(&net, &flows, &sim, 0).unwrap();
    let mut ml = MoveLight::new(&net, params.clone(), cfg.clone()).unwrap();
    let obs = observe_all(&state, &net, &sim).unwrap();
    let q = q_values(&params, &cfg, &AgentGeometry::for_network(&net, 4).unwrap(), &obs, 0).unwrap();
    assert_eq!(ml.decide(&state, &net, &sim).unwrap(), vec![argmax(&q)]);
}
