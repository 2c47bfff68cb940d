use proptest::prelude::*;
use sparsecomm::env::{
    reset, soccer_event, soccer_terminal, step, Action, TaskSpec, WorldState, BLUE, RED,
};

fn spec_for(task: u8, half: usize) -> TaskSpec {
    match task % 3 {
        0 => TaskSpec::coverage(2 * half, half + 1),
        1 => TaskSpec::formation(2 * half),
        _ => TaskSpec::soccer(2 * half),
    }
}

fn rollout(spec: &TaskSpec, seed: u64, actions: &[usize]) -> Vec<(WorldState, Vec<f64>)> {
    let mut s = reset(spec, seed).unwrap();
    let mut out = Vec::new();
    for chunk in actions.chunks(spec.n_agents) {
        if s.done || chunk.len() < spec.n_agents {
            break;
        }
        let a: Vec<Action> = chunk.iter().map(|&i| Action::from_index(i).unwrap()).collect();
        let t = step(spec, &s, &a).unwrap();
        out.push((t.state.clone(), t.rewards));
        s = t.state;
    }
    out
}

proptest! {
    #[test]
    fn replay_is_bit_identical(task in 0u8..3, half in 1usize..4, seed: u64,
                               actions in prop::collection::vec(0usize..5, 0..400)) {
        let spec = spec_for(task, half);
        let a = rollout(&spec, seed, &actions);
        let b = rollout(&spec, seed, &actions);
        prop_assert_eq!(a.len(), b.len());
        for ((sa, ra), (sb, rb)) in a.iter().zip(&b) {
            prop_assert_eq!(sa, sb);
            let bits = |r: &[f64]| r.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(ra), bits(rb));
        }
    }

    #[test]
    fn physics_bounds_hold(task in 0u8..3, half in 1usize..4, seed: u64,
                           actions in prop::collection::vec(0usize..5, 0..600)) {
        let spec = spec_for(task, half);
        let p = spec.physics;
        for (s, _) in rollout(&spec, seed, &actions) {
            prop_assert!(s.step_index <= spec.max_episode_steps);
            for b in &s.agents {
                prop_assert!(b.vel[0].hypot(b.vel[1]) <= p.agent_max_speed + 1e-12);
                prop_assert!(b.pos.iter().all(|x| x.abs() <= p.arena_half));
            }
            if let Some(b) = s.ball {
                prop_assert!(b.vel[0].hypot(b.vel[1]) <= p.ball_max_speed + 1e-12);
                prop_assert!(b.pos.iter().all(|x| x.abs() <= p.arena_half));
            }
        }
    }

    #[test]
    fn within_team_permutation_keeps_rewards(task in 0u8..3, half in 1usize..4, seed: u64,
                                             actions in prop::collection::vec(0usize..5, 1..8),
                                             rot in 0usize..8) {
        let spec = spec_for(task, half);
        let n = spec.n_agents;
        let s = reset(&spec, seed).unwrap();
        let a: Vec<Action> = (0..n).map(|i| Action::from_index(actions[i % actions.len()]).unwrap()).collect();
        // Rotate agents within each team.
        let teams = spec.teams();
        let mut perm: Vec<usize> = (0..n).collect();
        for team in [RED, BLUE] {
            let members: Vec<usize> = (0..n).filter(|&i| teams[i] == team).collect();
            for (k, &i) in members.iter().enumerate() {
                perm[i] = members[(k + rot) % members.len()];
            }
        }
        let base = step(&spec, &s, &a).unwrap();
        let pa: Vec<Action> = perm.iter().map(|&p| a[p]).collect();
        let moved = step(&spec, &s.permuted(&perm), &pa).unwrap();
        for k in 0..n {
            prop_assert!((moved.rewards[k] - base.rewards[perm[k]]).abs() <= 1e-12);
        }
    }

    #[test]
    fn soccer_terminal_is_zero_sum(seed: u64, x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let spec = TaskSpec::soccer(4);
        let mut s = reset(&spec, seed).unwrap();
        s.ball.as_mut().unwrap().pos = [x, y];
        let e = soccer_event(&spec, &s);
        prop_assert_eq!(soccer_terminal(&spec, e, RED) + soccer_terminal(&spec, e, BLUE), 0.0);
    }
}
