mod common;

use common::*;
use dqc_core::env::{ActionKind, Occupant};
use dqc_core::rng::{stream, Stream};
use dqc_core::{Env, EnvConfig, Error, Status};
use proptest::prelude::*;
use rand::Rng as _;

fn env_for(inst: &Instance, p_gen: f64) -> Env {
    let config = EnvConfig { p_gen, deadline: 200, g_max: inst.circuit.num_gates(), ..EnvConfig::default() };
    Env::new(inst.graph.clone(), config).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn masked_steps_keep_invariants(seed in any::<u64>(), p_gen in 0.3f64..=1.0) {
        let mut rng = stream(seed, Stream::Exploration);
        let inst = random_instance(10, 6, &mut rng);
        let env = env_for(&inst, p_gen);
        let (mut s, _) = env.reset(&inst.circuit, Some(&inst.placement), seed).unwrap();
        check_invariants(&env, &s);
        let mut steps = 0;
        while s.status() == Status::Running && steps < 2000 {
            let mask = env.mask(&s);
            prop_assert!(mask[0]);
            // an infeasible action is rejected and leaves the state alone
            if let Some(bad) = (0..mask.len()).find(|&a| !mask[a]) {
                let before = s.canonical();
                prop_assert!(matches!(env.step(&mut s, bad), Err(Error::ContractViolation(_))));
                prop_assert_eq!(before, s.canonical());
            }
            let a = pick_feasible(&env, &s, &mut rng);
            env.step(&mut s, a).unwrap();
            check_invariants(&env, &s);
            steps += 1;
        }
        if s.status() != Status::Running {
            prop_assert!(matches!(env.step(&mut s, 0), Err(Error::State(_))));
        }
    }

    #[test]
    fn equal_digests_behave_identically(seed in any::<u64>()) {
        // two states reached along different action orders but with the
        // same digest expose the same mask and the same successors
        let mut rng = stream(seed, Stream::Exploration);
        let inst = random_instance(8, 4, &mut rng);
        let env = env_for(&inst, 1.0);
        let s0 = random_rollout(&env, &inst, seed, &mut rng, 3);
        prop_assume!(s0.status() == Status::Running);
        let acts: Vec<usize> = env.feasible_actions(&s0).into_iter().filter(|&a| a != 0).collect();
        prop_assume!(acts.len() >= 2);
        let (a, b) = (acts[0], acts[acts.len() - 1]);
        let mut ab = s0.clone();
        env.step(&mut ab, a).unwrap();
        prop_assume!(env.is_feasible(&ab, b) && ab.status() == Status::Running);
        env.step(&mut ab, b).unwrap();
        let mut ba = s0.clone();
        prop_assume!(env.is_feasible(&ba, b));
        env.step(&mut ba, b).unwrap();
        prop_assume!(env.is_feasible(&ba, a) && ba.status() == Status::Running);
        env.step(&mut ba, a).unwrap();
        prop_assume!(ab.canonical() == ba.canonical());
        prop_assert_eq!(env.mask(&ab), env.mask(&ba));
        for x in env.feasible_actions(&ab) {
            let (mut p, mut q) = (ab.clone(), ba.clone());
            let rp = env.step(&mut p, x).unwrap();
            let rq = env.step(&mut q, x).unwrap();
            prop_assert_eq!(p.canonical(), q.canonical());
            prop_assert_eq!(rp.reward, rq.reward);
        }
    }
}

#[test]
fn reset_mask_has_no_tele_qubits_and_open_links() {
    let mut rng = stream(7, Stream::Exploration);
    for _ in 0..30 {
        let inst = random_instance(10, 5, &mut rng);
        let env = env_for(&inst, 0.9);
        let (s, _) = env.reset(&inst.circuit, Some(&inst.placement), 1).unwrap();
        if s.status() != Status::Running {
            continue;
        }
        let mask = env.mask(&s);
        for (i, kind) in env.table().entries().iter().enumerate() {
            match *kind {
                ActionKind::TeleQubit(_) => assert!(!mask[i]),
                ActionKind::Generate(l) => {
                    let (a, b) = env.graph().edges_n()[l];
                    let open = s.occupant(a) == Occupant::Empty && s.occupant(b) == Occupant::Empty;
                    assert_eq!(mask[i], open);
                }
                _ => {}
            }
        }
    }
}

#[test]
fn encoded_mask_matches_feasibility() {
    let mut rng = stream(8, Stream::Exploration);
    for _ in 0..20 {
        let inst = random_instance(10, 6, &mut rng);
        let env = env_for(&inst, 0.8);
        let seed = rng.gen();
        let (mut s, _) = env.reset(&inst.circuit, Some(&inst.placement), seed).unwrap();
        for _ in 0..100 {
            if s.status() != Status::Running {
                break;
            }
            let v = env.encode(&s).unwrap();
            assert_eq!(v.len(), env.state_len());
            let mask: Vec<bool> = v[env.feature_len()..].iter().map(|&x| x == 1.0).collect();
            assert_eq!(mask, env.mask(&s));
            let a = pick_feasible(&env, &s, &mut rng);
            env.step(&mut s, a).unwrap();
        }
    }
}

#[test]
fn same_seed_same_trajectory() {
    let mut rng = stream(9, Stream::Exploration);
    let inst = random_instance(10, 6, &mut rng);
    let env = env_for(&inst, 0.5);
    let run = |seed: u64| {
        let mut pick = stream(seed, Stream::Exploration);
        let s = random_rollout(&env, &inst, seed, &mut pick, 150);
        (s.canonical(), s.slot(), s.counters())
    };
    assert_eq!(run(11), run(11));
}
