use nalgebra::DMatrix;
use uwac::env::{generate_dataset, Behavior, Dataset, EnvConfig, Lander, LanderState, Transition, LanderAction};
use uwac::ndcore::{Graph, Matrix};
use uwac::nets::{soft_update, soft_update_policy, Layer, MlpParams, PolicyParams};
use uwac::rng::{rng_from_seed, sub_rng};
use uwac::trainer::{
    critic_loss, evaluate_policy, metrics_to_csv, normalized_return, reference_scores, train, Agent, Batch, Mode,
    TrainConfig, Trainer,
};

fn tiny() -> TrainConfig {
    TrainConfig {
        critic_hidden: vec![16, 16],
        actor_hidden: vec![16, 16],
        batch_size: 32,
        passes: 5,
        p: 3,
        n: 3,
        m: 3,
        epochs: 2,
        steps_per_epoch: 20,
        eval_episodes: 2,
        ..TrainConfig::desk()
    }
}

fn data(episodes: usize) -> Dataset {
    generate_dataset(&EnvConfig::default(), &Behavior::expert(), episodes, 9).unwrap()
}

/// Critic whose output is `c` for every input.
fn constant_critic(cfg: &TrainConfig, c: f64) -> MlpParams {
    let spec = Agent::critic_spec(cfg).unwrap();
    let layers = spec
        .widths
        .windows(2)
        .enumerate()
        .map(|(l, w)| {
            let bias = if l == spec.widths.len() - 2 { c } else { 0.0 };
            Layer::from_parts(Matrix::zeros(w[1], w[0]), Matrix::filled(1, w[1], bias)).unwrap()
        })
        .collect();
    MlpParams::from_layers(&spec, layers).unwrap()
}

fn one_transition(done: bool) -> Batch {
    Batch::from_transitions(&[Transition {
        s: LanderState::new(0.3, 0.9, 0.0, -0.1),
        a: LanderAction::new(0.1, 0.4),
        r: 1.0,
        next: LanderState::new(0.29, 0.89, -0.01, -0.1),
        done,
    }])
    .unwrap()
}

fn constant_agent(mode: Mode) -> Agent {
    let cfg = TrainConfig { mode, ..tiny() };
    let policy = PolicyParams::init(&Agent::policy_spec(&cfg), &mut rng_from_seed(1)).unwrap();
    Agent::from_parts(&cfg, vec![constant_critic(&cfg, 2.0), constant_critic(&cfg, 4.0)], policy).unwrap()
}

#[test]
fn hand_built_critic_loss() {
    // y = 0.75·2 + 0.25·4 = 2.5 with zero variance, so w = clip_hi = 1.5
    let z = 1.0 + 0.99 * 2.5;
    let mut a = constant_agent(Mode::Uwac);
    let s = a.critic_update(&one_transition(false), &mut rng_from_seed(0)).unwrap();
    assert_eq!(s.var_mean, 0.0);
    assert_eq!(s.weight_mean, 1.5);
    assert!((s.q_target_mean - z).abs() < 1e-12);
    let want = 0.5 * 1.5 * ((2.0 - z).powi(2) + (4.0 - z).powi(2));
    assert!((s.loss - want).abs() < 1e-12, "{} vs {want}", s.loss);

    let mut b = constant_agent(Mode::BearBaseline);
    let s = b.critic_update(&one_transition(false), &mut rng_from_seed(0)).unwrap();
    assert_eq!(s.weight_mean, 1.0);
    assert!((s.loss - want / 1.5).abs() < 1e-12);
}

#[test]
fn terminal_target_is_the_reward() {
    let mut a = constant_agent(Mode::Uwac);
    let s = a.critic_update(&one_transition(true), &mut rng_from_seed(0)).unwrap();
    assert_eq!(s.q_target_mean, 1.0);
}

#[test]
fn weight_is_a_constant_multiplier() {
    let cfg = tiny();
    let critic = MlpParams::init(&Agent::critic_spec(&cfg).unwrap(), &mut rng_from_seed(3)).unwrap();
    let d = data(2);
    let batch = Batch::sample(&d, 5, &mut rng_from_seed(4)).unwrap();
    let x = batch.states.hconcat(&batch.actions).unwrap();
    let z = Matrix::column(&[1.0, -2.0, 0.5, 3.0, 0.0]);
    let grads = |w: &Matrix| {
        let mut g = Graph::new();
        let inputs = g.constant(x.clone());
        let b = critic.bind(&mut g, true);
        let l = critic_loss(&mut g, std::slice::from_ref(&b), inputs, &z, w, None).unwrap();
        g.backward(l).unwrap();
        b.grads(&g)
    };
    let w = [0.3, 1.5, 0.0, 0.9, 0.25];
    let full = grads(&Matrix::column(&w));
    let mut sum: Vec<Matrix> = full.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect();
    for (i, &wi) in w.iter().enumerate() {
        let mut e = vec![0.0; 5];
        e[i] = 1.0;
        for (acc, gi) in sum.iter_mut().zip(grads(&Matrix::column(&e))) {
            for (a, v) in acc.data_mut().iter_mut().zip(gi.data()) {
                *a += wi * v;
            }
        }
    }
    for (a, b) in full.iter().zip(&sum) {
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-12 * (1.0 + u.abs()));
        }
    }
}

#[test]
fn large_alpha_pulls_policy_toward_data() {
    let cfg = TrainConfig { alpha: 1000.0, actor_lr: 1e-3, ..tiny() };
    let d = data(4);
    let batch = Batch::sample(&d, 32, &mut rng_from_seed(5)).unwrap();
    let mut agent = Agent::new(&cfg, &mut rng_from_seed(6)).unwrap();
    let critics = agent.critics.clone();
    let mut rng = rng_from_seed(7);
    let first = agent.actor_update(&batch, &mut rng).unwrap().mmd_mean;
    let mut last = first;
    for _ in 0..100 {
        last = agent.actor_update(&batch, &mut rng).unwrap().mmd_mean;
    }
    assert_eq!(agent.critics, critics);
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn baseline_and_uwac_identical_when_weights_are_forced_to_one() {
    let d = data(4);
    let base = TrainConfig { dropout: 0.0, clip_hi: 1.0, ..tiny() };
    let u = train(&d, &TrainConfig { mode: Mode::Uwac, ..base.clone() }).unwrap();
    let b = train(&d, &TrainConfig { mode: Mode::BearBaseline, ..base }).unwrap();
    assert_eq!(metrics_to_csv(&u.metrics).unwrap(), metrics_to_csv(&b.metrics).unwrap());
    assert_eq!(u.agent.critics, b.agent.critics);
    assert_eq!(u.agent.policy, b.agent.policy);
}

#[test]
fn spectral_norm_holds_throughout_training() {
    let d = data(4);
    let cfg = TrainConfig { spectral_norm: true, ..tiny() };
    let mut t = Trainer::new(&d, &cfg).unwrap();
    for step in 0..200 {
        t.step().unwrap();
        for c in &t.agent().critics {
            for layer in c.layers() {
                let w = &layer.weight;
                let s = DMatrix::from_row_slice(w.rows(), w.cols(), w.data()).singular_values().max();
                assert!(s <= 1.0 + 1e-2, "step {step}: sigma {s}");
            }
        }
    }
}

#[test]
fn targets_move_only_by_polyak_averaging() {
    let d = data(4);
    let mut t = Trainer::new(&d, &tiny()).unwrap();
    for _ in 0..5 {
        let mut critics = t.agent().target_critics.clone();
        let mut policy = t.agent().target_policy.clone();
        t.step().unwrap();
        let a = t.agent();
        for (tc, oc) in critics.iter_mut().zip(&a.critics) {
            soft_update(tc, oc, a.config.tau).unwrap();
        }
        soft_update_policy(&mut policy, &a.policy, a.config.tau).unwrap();
        assert_eq!(critics, a.target_critics);
        assert_eq!(policy, a.target_policy);
    }
}

#[test]
fn zero_epochs_returns_initial_networks() {
    let cfg = TrainConfig { epochs: 0, seed: 12, ..tiny() };
    let out = train(&data(2), &cfg).unwrap();
    let fresh = Agent::new(&cfg, &mut sub_rng(12, 0)).unwrap();
    assert!(out.metrics.is_empty());
    assert_eq!(out.agent.critics, fresh.critics);
    assert_eq!(out.agent.policy, fresh.policy);
}

#[test]
fn same_seed_same_metrics_bytes() {
    let d = data(4);
    for mode in [Mode::Uwac, Mode::UwacEnsemble] {
        let cfg = TrainConfig { mode, ensemble_size: 3, ..tiny() };
        let a = metrics_to_csv(&train(&d, &cfg).unwrap().metrics).unwrap();
        let b = metrics_to_csv(&train(&d, &cfg).unwrap().metrics).unwrap();
        assert_eq!(a, b);
        let c = metrics_to_csv(&train(&d, &TrainConfig { seed: 1, ..cfg }).unwrap().metrics).unwrap();
        assert_ne!(a, c);
    }
}

#[test]
fn smoke_run_improves_over_epoch_zero() {
    let d = data(80);
    assert!(d.len() >= 5000, "{}", d.len());
    let cfg = TrainConfig { epochs: 5, steps_per_epoch: 200, ..TrainConfig::desk() };
    let start = std::time::Instant::now();
    let mut t = Trainer::new(&d, &cfg).unwrap();
    let returns: Vec<f64> = (0..cfg.epochs).map(|_| t.run_epoch().unwrap().eval_return).collect();
    assert!(start.elapsed().as_secs() < 120);
    assert!(returns[4] > returns[0], "{returns:?}");
}

/// Hover thrust cancels gravity, so positions advance at the reset velocity.
#[test]
fn hover_policy_return_matches_hand_simulation() {
    let env = EnvConfig::default();
    let spec = Agent::policy_spec(&tiny());
    let mut layers: Vec<Layer> = PolicyParams::init(&spec, &mut rng_from_seed(0)).unwrap().layers().into_iter().cloned().collect();
    let h = *spec.hidden.last().unwrap();
    let n = layers.len();
    layers[n - 2] = Layer::from_parts(Matrix::zeros(2, h), Matrix::row_vector(&[0.0, env.hover_thrust().atanh()])).unwrap();
    let policy = PolicyParams::from_layers(&spec, layers).unwrap();

    let episodes = 3;
    let got = evaluate_policy(&env, &policy, episodes, 77).unwrap();
    let lander = Lander::new(env.clone()).unwrap();
    let mut want = 0.0;
    for ep in 0..episodes {
        let s = lander.reset(&mut sub_rng(77, ep as u64));
        let (mut x, mut y) = (s.x, s.y);
        for _ in 0..env.max_steps {
            x += s.vx * env.dt;
            y += s.vy * env.dt;
            let dist = (x * x + y * y).sqrt();
            let speed = (s.vx * s.vx + s.vy * s.vy).sqrt();
            let mut r = -dist - env.fuel_cost * env.hover_thrust().powi(2);
            let landed = dist < env.landing_radius && speed < env.landing_speed;
            let out = !landed && (x.abs() > 2.0 || !(0.0..=2.0).contains(&y));
            if landed {
                r += 100.0;
            }
            if out {
                r -= 10.0;
            }
            want += r;
            if landed || out {
                break;
            }
        }
    }
    want /= episodes as f64;
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
}

#[test]
fn expert_reference_beats_random_and_normalization_is_affine() {
    let (random, expert) = reference_scores(&EnvConfig::default(), 10, 3).unwrap();
    assert!(expert > random);
    assert_eq!(normalized_return(expert, random, expert).unwrap(), 100.0);
    assert_eq!(normalized_return(random, random, expert).unwrap(), 0.0);
    assert!((normalized_return(0.5 * (random + expert), random, expert).unwrap() - 50.0).abs() < 1e-12);
    assert!(normalized_return(1.0, 2.0, 2.0).is_err());
}
