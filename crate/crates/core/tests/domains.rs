use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rewardlearn::env::{builtin, Domain, Environment};
use rewardlearn::mdp::{extract_observation_trace, extract_reward_trace, InteractionTrace};
use rewardlearn::product::build_product_with_reset;
use rewardlearn::Observation;

#[test]
fn environment_rewards_follow_the_hidden_machine() {
    for d in Domain::ALL {
        let b = builtin(d).unwrap();
        let mut env = b.environment(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = env.model().num_actions();
        let mut trace = InteractionTrace::new(env.state());
        for _ in 0..20_000 {
            let a = rng.gen_range(0..k);
            let (s, r) = env.step(a).unwrap();
            if env.labels().label(a, s) == Observation::Null {
                assert_eq!(r, b.truth.default_reward(), "{d}");
            }
            trace.push(a, r, s);
        }
        let word = extract_observation_trace(&trace, env.labels());
        assert!(!word.is_empty(), "{d} never observed anything");
        let rewards = extract_reward_trace(&trace, env.labels());
        assert_eq!(b.truth.run_observations(&word).unwrap(), rewards, "{d}");
    }
}

#[test]
fn treasure_sale_pays_full_price_in_the_product() {
    let b = builtin(Domain::Treasure).unwrap();
    let (m, l) = b.compile().unwrap();
    let j = l.alphabet().index_of("j").unwrap();
    let sell = m.action_index("sell").unwrap();
    let p = build_product_with_reset(&m, &l, &b.truth, b.spec.reset_cost).unwrap();
    let stalls: Vec<_> = (0..m.num_states())
        .filter(|&s| l.label(sell, s) == Observation::Symbol(j))
        .collect();
    assert!(!stalls.is_empty());
    for s in stalls {
        assert_eq!(p.mdp().reward(p.index(s, 4), sell), 180.0);
        assert_eq!(
            p.mdp().reward(p.index(s, 0), sell),
            b.truth.transition(0, Observation::Symbol(j)).1
        );
    }
}

#[test]
fn reset_returns_to_the_initial_state_and_costs_a_step() {
    let b = builtin(Domain::Office).unwrap();
    let mut env = b.environment(0).unwrap();
    env.step(0).unwrap();
    assert_eq!(env.reset(), b.spec.reset_cost);
    assert_eq!(env.state(), env.model().initial());
    assert_eq!(env.steps(), 2);
}
