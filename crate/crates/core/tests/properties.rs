use dpmmdp_core::bounds::{order_bound_for_scale, Selection};
use dpmmdp_core::index::{decode_joint, encode_joint};
use dpmmdp_core::mechanism::NoiseScale;
use dpmmdp_core::model::{AgentModel, JointModel, RewardVector};
use dpmmdp_core::solver::{exact_policy_value, value_iteration};
use proptest::prelude::*;

fn agent_strategy(max_states: usize, max_actions: usize) -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1..=max_states, 1..=max_actions).prop_flat_map(|(n, m)| {
        (
            Just(n),
            Just(m),
            prop::collection::vec(0.01f64..1.0, n * m * n),
        )
    })
}

fn normalized(n: usize, raw: &[f64]) -> Vec<f64> {
    raw.chunks(n)
        .flat_map(|row| {
            let sum: f64 = row.iter().sum();
            row.iter().map(move |p| p / sum)
        })
        .collect()
}

fn compose(agents: &[(usize, usize, Vec<f64>)], rewards: &[f64], gamma: f64) -> JointModel {
    let joint_states: usize = agents.iter().map(|a| a.0).product();
    let mut offset = 0;
    let list = agents
        .iter()
        .map(|(n, m, raw)| {
            let len = joint_states * m;
            let r: Vec<f64> = (0..len).map(|i| rewards[(offset + i) % rewards.len()]).collect();
            offset += len;
            AgentModel::new(*n, *m, normalized(*n, raw), RewardVector::new(r).unwrap()).unwrap()
        })
        .collect();
    JointModel::compose(list, gamma).unwrap()
}

proptest! {
    #[test]
    fn joint_index_round_trips_in_lexicographic_order(
        radices in prop::collection::vec(1usize..6, 1..5),
        seed in 0usize..10_000,
    ) {
        let total: usize = radices.iter().product();
        let index = seed % total;
        let digits = decode_joint(index, &radices).unwrap();
        prop_assert_eq!(encode_joint(&digits, &radices).unwrap(), index);
        if index + 1 < total {
            let next = decode_joint(index + 1, &radices).unwrap();
            prop_assert!(digits < next);
        }
    }

    #[test]
    fn composed_rows_are_distributions_and_rewards_average(
        agents in prop::collection::vec(agent_strategy(3, 3), 1..4),
        rewards in prop::collection::vec(-5.0f64..5.0, 1..20),
    ) {
        let model = compose(&agents, &rewards, 0.9);
        let (n, m) = (model.state_count(), model.action_count());
        for s in 0..n {
            for a in 0..m {
                let sum: f64 = (0..n).map(|y| model.joint_transition(s, a, y).unwrap()).sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
                let mean = model
                    .agents()
                    .iter()
                    .enumerate()
                    .map(|(i, g)| g.reward().get(s, model.local_action(a, i), g.actions()))
                    .sum::<f64>()
                    / model.agent_count() as f64;
                prop_assert!((model.reward(s, a) - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn value_iteration_is_eta_optimal_against_its_own_linear_solve(
        agents in prop::collection::vec(agent_strategy(3, 2), 1..3),
        rewards in prop::collection::vec(-5.0f64..5.0, 1..20),
        gamma in 0.3f64..0.95,
    ) {
        let eta = 1e-6;
        let model = compose(&agents, &rewards, gamma);
        let report = value_iteration(&model, eta).unwrap();
        let exact = exact_policy_value(&model, &report.policy).unwrap();
        for s in 0..model.state_count() {
            prop_assert!((report.values.get(s) - exact.get(s)).abs() <= eta);
        }
    }

    #[test]
    fn order_bound_monotone(gap in 0.0f64..10.0, extra in 0.01f64..3.0, sigma in 0.1f64..5.0, factor in 1.01f64..4.0) {
        let sel = Selection { p: 1, q: 0 };
        let at = |g: f64, s: f64| {
            let r = RewardVector::new(vec![g, 0.0, 0.0]).unwrap();
            order_bound_for_scale(&r, sel, NoiseScale::new(s).unwrap()).unwrap()
        };
        prop_assert!(at(gap + extra, sigma) >= at(gap, sigma));
        prop_assert!(at(gap, sigma * factor) <= at(gap, sigma));
    }
}
