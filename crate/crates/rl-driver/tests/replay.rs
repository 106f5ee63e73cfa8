use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rl_driver::*;

fn tr(i: usize) -> Transition {
    Transition { state: i, action: 0, cost: i as f64, next_state: 0, terminal: false }
}

fn buffer(capacity: usize) -> ReplayBuffer {
    ReplayBuffer::new(ReplayConfig { capacity, ..Default::default() }).unwrap()
}

#[test]
fn equal_priorities_sample_uniformly() {
    let mut buf = buffer(8);
    for i in 0..4 {
        buf.push_with_priority(tr(i), 1.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut counts = [0usize; 4];
    let draws = 100_000;
    for s in buf.sample(4, &mut rng).unwrap().into_iter().chain((1..draws / 4).flat_map(|_| buf.sample(4, &mut rng).unwrap())) {
        counts[s.slot] += 1;
        assert!((s.weight - 1.0).abs() < 1e-12);
    }
    for c in counts {
        assert!((c as f64 / draws as f64 - 0.25).abs() < 0.01, "{counts:?}");
    }
}

#[test]
fn tenfold_priority_follows_the_power_law() {
    let mut buf = buffer(4);
    buf.push_with_priority(tr(0), 10.0);
    buf.push_with_priority(tr(1), 1.0);
    let expected = ((10.0f64 + 0.01) / (1.0 + 0.01)).powf(0.6);
    assert!((buf.probability(0) / buf.probability(1) - expected).abs() < 1e-9);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut counts = [0usize; 2];
    for _ in 0..50_000 {
        for s in buf.sample(2, &mut rng).unwrap() {
            counts[s.slot] += 1;
        }
    }
    let ratio = counts[0] as f64 / counts[1] as f64;
    assert!((ratio / expected - 1.0).abs() < 0.05, "ratio {ratio} vs {expected}");
}

#[test]
fn full_buffer_evicts_the_oldest() {
    let mut buf = buffer(3);
    for i in 0..4 {
        buf.push(tr(i));
    }
    assert_eq!(buf.len(), 3);
    let held: Vec<usize> = (0..3).map(|k| buf.get(k).unwrap().0.state).collect();
    assert_eq!(held, vec![3, 1, 2]);
}

#[test]
fn new_entries_take_the_largest_priority_seen() {
    let mut buf = buffer(4);
    buf.push(tr(0));
    buf.update_priority(0, 7.0);
    let slot = buf.push(tr(1));
    assert_eq!(buf.get(slot).unwrap().1, 7.0);
}

#[test]
fn bad_requests_are_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut buf = buffer(3);
    assert!(buf.sample(1, &mut rng).is_err());
    buf.push(tr(0));
    assert!(buf.sample(2, &mut rng).is_err());
    assert!(ReplayBuffer::new(ReplayConfig { capacity: 0, ..Default::default() }).is_err());
}

proptest! {
    #[test]
    fn probabilities_and_weights_are_normalized(
        prios in prop::collection::vec(0.0..20.0f64, 1..30), seed: u64, n in 1usize..8,
    ) {
        let mut buf = buffer(16);
        for (i, p) in prios.iter().enumerate() {
            buf.push_with_priority(tr(i), *p);
        }
        let total: f64 = (0..buf.len()).map(|k| buf.probability(k)).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = buf.sample(n.min(buf.len()), &mut rng).unwrap();
        prop_assert!(batch.iter().all(|s| s.weight > 0.0 && s.weight <= 1.0 && s.slot < buf.len()));
        prop_assert!(batch.iter().any(|s| (s.weight - 1.0).abs() < 1e-12));
    }
}
