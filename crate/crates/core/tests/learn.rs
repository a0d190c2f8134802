use dqc_core::harness::preset;
use dqc_core::learn::*;
use dqc_core::rng::{stream, Rng, Stream};
use dqc_core::Status;
use rand::Rng as _;

fn random_mask(k: usize, rng: &mut Rng) -> Vec<f64> {
    let mut m: Vec<f64> = (0..k).map(|_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 }).collect();
    m[0] = 1.0;
    m
}

/// A realistic state vector of the given preset after a few random steps.
fn preset_state(name: &str, seed: u64) -> (QNetwork, Vec<f64>) {
    let c = preset(name).unwrap();
    let env = c.build_env().unwrap();
    let net = QNetwork::new(&c.arch(&env), &mut stream(seed, Stream::Init)).unwrap();
    let circuit = dqc_core::random_circuit(18, 30, &mut stream(seed, Stream::Circuit)).unwrap();
    let (mut s, _) = env.reset(&circuit, None, seed).unwrap();
    let mut rng = stream(seed, Stream::Exploration);
    for _ in 0..25 {
        if s.status() != Status::Running {
            break;
        }
        let acts = env.feasible_actions(&s);
        env.step(&mut s, acts[rng.gen_range(0..acts.len())]).unwrap();
    }
    (net, env.encode(&s).unwrap())
}

#[test]
fn gradient_check_on_both_full_size_architectures() {
    for (name, hidden) in [("guadalupe2_p095", [140, 150]), ("guadalupe2_p050", [240, 200])] {
        let (net, state) = preset_state(name, 5);
        assert_eq!(&net.sizes()[1..3], &hidden);
        let mut rng = stream(6, Stream::Init);
        let target: Vec<f64> = (0..net.num_actions()).map(|_| rng.gen_range(0.0..2.0)).collect();
        let err = gradient_check(&net, &state, &target).unwrap();
        assert!(err < 1e-4, "{name}: {err}");
    }
}

#[test]
fn outputs_are_non_negative_and_masked() {
    let mut rng = stream(1, Stream::Init);
    let net = QNetwork::new(&[12, 20, 16, 9], &mut rng).unwrap();
    for _ in 0..500 {
        let mut s: Vec<f64> = (0..12).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let m = random_mask(9, &mut rng);
        s.extend(&m);
        let q = net.forward(&s).unwrap();
        for (a, &v) in q.iter().enumerate() {
            assert!(v >= 0.0);
            if m[a] == 0.0 {
                assert_eq!(v, 0.0);
            }
        }
    }
}

#[test]
fn infeasible_actions_are_never_selected() {
    let mut rng = stream(2, Stream::Init);
    let net = QNetwork::new(&[6, 10, 10, 7], &mut rng).unwrap();
    let mut picks = 0;
    for i in 0..100_000 {
        let mut s: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let m = random_mask(7, &mut rng);
        s.extend(&m);
        let eps = [0.0, 0.3, 1.0][i % 3];
        let a = select_action(&net, &s, eps, &mut rng).unwrap();
        assert_eq!(m[a], 1.0);
        picks += 1;
    }
    assert_eq!(picks, 100_000);
}

#[test]
fn positive_output_scaling_keeps_greedy_choice() {
    let mut rng = stream(3, Stream::Init);
    let net = QNetwork::new(&[5, 8, 8, 6], &mut rng).unwrap();
    for c in [0.01, 0.5, 3.0, 250.0] {
        let mut scaled = net.clone();
        let last = scaled.weights().len() - 1;
        scaled.weights_mut()[last].mapv_inplace(|w| w * c);
        scaled.biases_mut()[last].mapv_inplace(|b| b * c);
        for _ in 0..200 {
            let mut s: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
            s.extend(random_mask(6, &mut rng));
            let argmax = |q: &[f64]| {
                let best = (0..6).filter(|&a| s[5 + a] == 1.0).map(|a| q[a]).fold(f64::MIN, f64::max);
                (0..6).filter(|&a| s[5 + a] == 1.0 && q[a] == best).collect::<Vec<_>>()
            };
            let (q, qs) = (net.forward(&s).unwrap(), scaled.forward(&s).unwrap());
            // the scaled outputs agree up to rounding, so compare tie sets
            // only when the unscaled maximum is unique
            let a = argmax(&q);
            if a.len() == 1 && q[a[0]] > 0.0 {
                assert_eq!(argmax(&qs), a);
            }
        }
    }
}

#[test]
fn random_policy_is_uniform_over_feasible_actions() {
    let mut rng = stream(4, Stream::Exploration);
    let net = QNetwork::zeros(&[2, 3, 3, 5]).unwrap();
    let state = [0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0];
    let feasible = [0usize, 2, 3, 4];
    let n = 40_000;
    let mut counts = [0usize; 5];
    for _ in 0..n {
        counts[select_action(&net, &state, 1.0, &mut rng).unwrap()] += 1;
    }
    assert_eq!(counts[1], 0);
    let expected = n as f64 / feasible.len() as f64;
    let chi2: f64 = feasible.iter().map(|&a| (counts[a] as f64 - expected).powi(2) / expected).sum();
    // 3 degrees of freedom, 0.999 quantile
    assert!(chi2 < 16.27, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn target_tracks_frozen_online_geometrically() {
    let online = QNetwork::new(&[4, 6, 3], &mut stream(5, Stream::Init)).unwrap();
    let mut target = QNetwork::new(&[4, 6, 3], &mut stream(6, Stream::Init)).unwrap();
    let tau = 0.001;
    let mut d = online.param_distance(&target);
    for _ in 0..100 {
        online.soft_update_into(&mut target, tau);
        let next = online.param_distance(&target);
        assert!((next - (1.0 - tau) * d).abs() < 1e-12 * d.max(1.0));
        d = next;
    }
}

fn short_training(seed: u64) -> (QNetwork, Vec<f64>) {
    let mut rng = stream(seed, Stream::Replay);
    let mut online = QNetwork::new(&[4, 8, 8, 3], &mut stream(seed, Stream::Init)).unwrap();
    let mut target = online.clone();
    let mut adam = Adam::new(&online, 1e-3);
    let mut buf = ReplayBuffer::new(500, 7);
    let mut data = stream(seed, Stream::Circuit);
    for i in 0..600 {
        let mut s: Vec<f64> = (0..4).map(|_| data.gen_range(0..5) as f64).collect();
        s.extend([1.0, 1.0, (i % 2) as f64]);
        let r = data.gen_range(-20.0..500.0);
        buf.push(&s, data.gen_range(0..2), r, &s, i % 7 == 0).unwrap();
    }
    let config = AgentConfig { batch: 32, buffer: 500, lr: 1e-3, tau: 0.01, ..AgentConfig::default() };
    let mut losses = Vec::new();
    for _ in 0..50 {
        losses.push(train_step(&mut online, &mut target, &mut adam, &buf, &config, &mut rng).unwrap().unwrap());
    }
    (online, losses)
}

#[test]
fn replay_sampling_and_weights_are_reproducible() {
    let (a, la) = short_training(9);
    let (b, lb) = short_training(9);
    assert_eq!(a, b);
    assert_eq!(la.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), lb.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    let (c, _) = short_training(10);
    assert_ne!(a, c);
}
