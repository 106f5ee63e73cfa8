use mdp_env::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rows_ok(model: &MdpModel) -> bool {
    model
        .kernel
        .iter()
        .flatten()
        .all(|row| (row.iter().sum::<f64>() - 1.0).abs() <= 1e-12)
}

#[test]
fn two_state_chain_is_smallest_nondegenerate_model() {
    let model = build_env(&EnvSpec::Chain { len: 2, step_cost: 1.0, goal_cost: 0.0 }, 0).unwrap();
    assert_eq!((model.n_states, model.n_actions), (2, 2));
    assert_eq!(model.terminals, vec![1]);
    assert_eq!(model.kernel[1][0], vec![0.0, 1.0]);
    assert_eq!(model.kernel[1][1], vec![0.0, 1.0]);
    assert_eq!(model.cost[1], vec![0.0, 0.0]);
}

#[test]
fn gridworld_8x8_has_64_states_and_stochastic_rows() {
    let model = build_env(&EnvSpec::gridworld(8, 8, 0.1), 7).unwrap();
    assert_eq!((model.n_states, model.n_actions), (64, 4));
    assert!(rows_ok(&model));
}

#[test]
fn random_mdp_is_deterministic_per_seed() {
    let spec = EnvSpec::random_mdp(6, 4, 0.5);
    let a = build_env(&spec, 42).unwrap();
    let b = build_env(&spec, 42).unwrap();
    assert_eq!(a, b);
    let c = build_env(&spec, 43).unwrap();
    assert_ne!(a, c);
}

#[test]
fn chain_forward_step_is_deterministic() {
    let model = build_env(&EnvSpec::chain(3), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let out = step(&model, 0, 0, &mut rng).unwrap();
    assert_eq!(out, Step { next_state: 1, cost: 1.0, terminal: false });
}

#[test]
fn terminal_state_absorbs_at_zero_cost() {
    let model = build_env(&EnvSpec::chain(3), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for a in 0..2 {
        let out = step(&model, 2, a, &mut rng).unwrap();
        assert_eq!(out, Step { next_state: 2, cost: 0.0, terminal: true });
    }
}

#[test]
fn step_frequencies_match_kernel() {
    let model = MdpModel::new(
        vec![vec![0.5], vec![0.0]],
        vec![vec![vec![0.3, 0.7]], vec![vec![0.0, 1.0]]],
        vec![1.0, 0.0],
        vec![],
        0.9,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 100_000;
    let hits = (0..draws).filter(|_| step(&model, 0, 0, &mut rng).unwrap().next_state == 0).count();
    assert!((hits as f64 / draws as f64 - 0.3).abs() < 0.01);
}

#[test]
fn step_rejects_out_of_range_indices() {
    let model = build_env(&EnvSpec::chain(3), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(step(&model, 3, 0, &mut rng), Err(MdpError::Usage(_))));
    assert!(matches!(step(&model, 0, 2, &mut rng), Err(MdpError::Usage(_))));
}

#[test]
fn cost_noise_stays_within_half_width() {
    let model = build_env(&EnvSpec::chain(3), 0).unwrap().with_cost_noise(0.25).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let c = step(&model, 0, 0, &mut rng).unwrap().cost;
        assert!((0.75..=1.25).contains(&c));
    }
}

#[test]
fn enumerate_exposes_exact_tables() {
    let chain = build_env(&EnvSpec::chain(2), 0).unwrap();
    let t = enumerate_model(&chain);
    assert_eq!(t.cost.len(), 2);
    assert!(t.cost.iter().all(|r| r.len() == 2));

    let rnd = build_env(&EnvSpec::random_mdp(6, 4, 0.0), 1).unwrap();
    let t = rnd.tables();
    let rows: Vec<&Vec<f64>> = t.kernel.iter().flatten().collect();
    assert_eq!(rows.len(), 24);
    assert!(rows.iter().all(|r| (r.iter().sum::<f64>() - 1.0).abs() <= 1e-12));
}

#[test]
fn gridworld_is_row_major() {
    let model = build_env(&EnvSpec::gridworld(8, 8, 0.0), 0).unwrap();
    assert_eq!(model.tables().states().count(), 64);
    // moving right from (0,0) reaches (0,1) = index 1, moving down reaches (1,0) = index 8
    assert_eq!(model.kernel[0][1][1], 1.0);
    assert_eq!(model.kernel[0][2][8], 1.0);
    // the top wall keeps the agent in place
    assert_eq!(model.kernel[0][0][0], 1.0);
    assert_eq!(model.terminals, vec![63]);
}

#[test]
fn obstacles_never_disconnect_the_goal() {
    for seed in 0..20 {
        let model = build_env(&EnvSpec::gridworld(5, 5, 0.3), seed).unwrap();
        // forward search over deterministic moves
        let mut seen = vec![false; 25];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(s) = stack.pop() {
            for a in 0..4 {
                let t = model.kernel[s][a].iter().position(|&p| p == 1.0).unwrap();
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        assert!(seen[24], "seed {seed}");
    }
}

#[test]
fn invalid_dimensions_are_configuration_errors() {
    assert!(matches!(build_env(&EnvSpec::chain(1), 0), Err(MdpError::Config(_))));
    assert!(matches!(build_env(&EnvSpec::gridworld(0, 4, 0.0), 0), Err(MdpError::Config(_))));
    assert!(matches!(build_env(&EnvSpec::random_mdp(0, 2, 0.0), 0), Err(MdpError::Config(_))));
    assert!(matches!(build_env(&EnvSpec::random_mdp(3, 2, 1.0), 0), Err(MdpError::Config(_))));
}

#[test]
fn json_round_trip_uses_documented_field_names() {
    let model = build_env(&EnvSpec::random_mdp(3, 2, 0.3), 4).unwrap();
    let text = model.to_json().unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let mut keys: Vec<&str> = value.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["cost", "discount", "kernel", "n_actions", "n_states", "start", "terminals"]);
    assert_eq!(MdpModel::from_json(&text).unwrap(), model);
}

#[test]
fn json_with_bad_rows_is_rejected() {
    let text = r#"{"n_states":1,"n_actions":1,"cost":[[0.0]],"kernel":[[[0.5]]],"start":[1.0],"terminals":[],"discount":0.9}"#;
    assert!(MdpModel::from_json(text).is_err());
}

#[test]
fn prior_examples() {
    let p = estimate_state_prior(&[10, 10], 0.0).unwrap();
    assert_eq!(p.probs(), &[0.5, 0.5]);
    let p = estimate_state_prior(&[0, 0, 0], 1.0).unwrap();
    for &x in p.probs() {
        assert!((x - 1.0 / 3.0).abs() < 1e-15);
    }
    let p = estimate_state_prior(&[3, 1], 1.0).unwrap();
    assert!((p[0] - 4.0 / 6.0).abs() < 1e-15 && (p[1] - 2.0 / 6.0).abs() < 1e-15);
}

#[test]
fn prior_rejects_degenerate_counts() {
    assert!(matches!(estimate_state_prior(&[0, 0], 0.0), Err(MdpError::Degenerate(_))));
    assert!(estimate_state_prior(&[], 1.0).is_err());
}

fn any_spec() -> impl Strategy<Value = EnvSpec> {
    prop_oneof![
        (2usize..10).prop_map(EnvSpec::chain),
        (1usize..7, 2usize..7, 0.0f64..0.4, 0.0f64..0.5).prop_map(|(w, h, f, slip)| EnvSpec::Gridworld {
            width: w,
            height: h,
            obstacle_frac: f,
            step_cost: 1.0,
            slip
        }),
        (1usize..9, 1usize..6, 0.0f64..0.95).prop_map(|(n, m, s)| EnvSpec::random_mdp(n, m, s)),
    ]
}

proptest! {
    #[test]
    fn every_kernel_row_is_stochastic(spec in any_spec(), seed in any::<u64>()) {
        let model = build_env(&spec, seed).unwrap();
        prop_assert!(rows_ok(&model));
        prop_assert!((model.start.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(model.cost.iter().flatten().all(|c| c.is_finite() && *c >= 0.0));
    }

    #[test]
    fn build_env_is_pure(spec in any_spec(), seed in any::<u64>()) {
        prop_assert_eq!(build_env(&spec, seed).unwrap(), build_env(&spec, seed).unwrap());
    }

    #[test]
    fn prior_is_a_distribution(counts in prop::collection::vec(0u64..1000, 1..20), smoothing in 0.0f64..5.0) {
        prop_assume!(smoothing > 0.0 || counts.iter().any(|&c| c > 0));
        let p = estimate_state_prior(&counts, smoothing).unwrap();
        prop_assert!((p.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        prop_assert!(p.probs().iter().all(|&x| x >= 0.0));
    }
}
