use cutplan::baselines::{greedy_plan, oracle_min_sections, random_plan, OracleLimits};
use cutplan::env::{self, decode_action, EnvConfig};
use cutplan::explore::{to_amplitudes, EpsilonSchedule, OuNoise, OuParams};
use cutplan::plan::{fabric_used, layer_length, production, validate_plan, waste};
use cutplan::{CutPlan, Order, Section, SizeSpec};
use proptest::prelude::*;

const MARKERS: [f64; 6] = [0.5, 1.25, 2.0, 2.75, 3.0, 4.1];

fn sizes(n: usize) -> impl Strategy<Value = Vec<SizeSpec>> {
    prop::collection::vec(prop::sample::select(MARKERS.to_vec()), n).prop_map(|ms| {
        ms.into_iter()
            .enumerate()
            .map(|(i, m)| SizeSpec::new(format!("S{i}"), m, m))
            .collect()
    })
}

fn plan(n: usize) -> impl Strategy<Value = CutPlan> {
    let section = (1u64..300, prop::collection::vec(0u32..4, n)).prop_map(|(plies, mut counts)| {
        if counts.iter().all(|&c| c == 0) {
            counts[0] = 1;
        }
        Section::new(plies, counts)
    });
    prop::collection::vec(section, 1..6).prop_map(CutPlan::new)
}

/// An order together with a plan that meets it exactly.
fn exact_instance() -> impl Strategy<Value = (Order, CutPlan)> {
    (1usize..7).prop_flat_map(|n| (sizes(n), plan(n))).prop_map(|(sizes, plan)| {
        let n = sizes.len();
        let probe = Order::new(sizes.clone(), vec![0; n], 1e9).unwrap();
        let demands = production(&plan, &probe).unwrap();
        (Order::new(sizes, demands, 1e9).unwrap(), plan)
    })
}

fn small_order() -> impl Strategy<Value = Order> {
    (1usize..4)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(1u32..4, n),
                prop::collection::vec(0u64..10, n),
                3u32..10,
            )
        })
        .prop_map(|(markers, demands, board)| {
            let sizes = markers
                .iter()
                .enumerate()
                .map(|(i, &m)| SizeSpec::new(format!("S{i}"), m as f64, m as f64))
                .collect();
            Order::new(sizes, demands, board as f64).unwrap()
        })
}

fn reference_order_with(demands: Vec<u64>) -> Order {
    Order::reference().with_demands(demands).unwrap()
}

proptest! {
    #[test]
    fn exact_plans_waste_nothing((order, plan) in exact_instance()) {
        prop_assert!(validate_plan(&plan, &order).feasible_exact);
        prop_assert_eq!(waste(&plan, &order).unwrap(), 0.0);
    }

    #[test]
    fn production_is_additive(
        (a, b, sizes) in (1usize..6).prop_flat_map(|n| (plan(n), plan(n), sizes(n)))
    ) {
        let n = sizes.len();
        let order = Order::new(sizes, vec![0; n], 1e9).unwrap();
        let pa = production(&a, &order).unwrap();
        let pb = production(&b, &order).unwrap();
        let both = production(&a.concat(&b), &order).unwrap();
        let sum: Vec<u64> = pa.iter().zip(&pb).map(|(x, y)| x + y).collect();
        prop_assert_eq!(both, sum);
        let fa = fabric_used(&a, &order).unwrap();
        let fb = fabric_used(&b, &order).unwrap();
        let fab = fabric_used(&a.concat(&b), &order).unwrap();
        prop_assert!((fab - (fa + fb)).abs() <= 1e-9 * fab.max(1.0));
    }

    #[test]
    fn decoded_sections_are_legal(
        demands in prop::collection::vec(0u64..300, 6),
        scores in prop::collection::vec(0.0f64..1.0, 6),
    ) {
        prop_assume!(demands.iter().any(|&d| d > 0));
        let order = reference_order_with(demands);
        let state = env::reset(&order);
        let section = decode_action(&scores, &state, &order).unwrap();
        prop_assert_eq!(&section, &decode_action(&scores, &state, &order).unwrap());
        prop_assert!(order.fits(layer_length(&section, &order).unwrap()));
        for (i, &c) in section.counts.iter().enumerate() {
            if c > 0 {
                prop_assert!(state.remaining[i] >= section.plies);
            }
        }
        // the smallest chosen demand is met exactly
        let min_chosen = section
            .counts
            .iter()
            .zip(&state.remaining)
            .filter(|(&c, _)| c > 0)
            .map(|(_, &r)| r)
            .min()
            .unwrap();
        prop_assert_eq!(section.plies, min_chosen);
    }

    #[test]
    fn rollouts_never_overproduce(
        demands in prop::collection::vec(0u64..300, 6),
        scores in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 6), 6),
    ) {
        prop_assume!(demands.iter().any(|&d| d > 0));
        let order = reference_order_with(demands);
        let cfg = EnvConfig::default();
        let mut state = env::reset(&order);
        let mut steps = 0;
        while !env::is_done(&state, &cfg) {
            let section = decode_action(&scores[steps % scores.len()], &state, &order).unwrap();
            let out = env::step(&state, &section, &order, &cfg).unwrap();
            prop_assert!(out.reward >= 0.0);
            state = out.next_state;
            steps += 1;
        }
        prop_assert!(state.fulfilled());
        prop_assert!(steps <= order.n_sizes());
    }

    #[test]
    fn amplitudes_normalize_and_keep_argmax(raw in prop::collection::vec(0.0f64..100.0, 1..16)) {
        prop_assume!(raw.iter().any(|&x| x > 0.0));
        let p = to_amplitudes(&raw).unwrap().probabilities();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        let argmax = |v: &[f64]| (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
        prop_assert_eq!(argmax(&p), argmax(&raw));
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn epsilon_is_monotone_and_floored(k in 0u32..5000, decay in 0.5f64..1.0, floor in 0.0f64..0.5) {
        let e = EpsilonSchedule { start: 1.0, decay, floor };
        prop_assert!(e.epsilon_at(k + 1) <= e.epsilon_at(k));
        prop_assert!(e.epsilon_at(k) >= floor);
        prop_assert!(e.epsilon_at(k) <= 1.0);
    }

    #[test]
    fn ou_contracts_without_shocks(start in prop::collection::vec(-5.0f64..5.0, 1..8), steps in 1usize..50) {
        let params = OuParams::default();
        let mut ou = OuNoise::new(start.len(), params).unwrap();
        let zeros = vec![0.0; start.len()];
        ou.step_with(&zeros);
        // walk from the mean with a shock, then let it relax
        let shocks: Vec<f64> = start.iter().map(|x| x / (params.sigma * params.dt.sqrt())).collect();
        let x0: Vec<f64> = ou.step_with(&shocks).to_vec();
        let mut x = x0.clone();
        for _ in 0..steps {
            x = ou.step_with(&zeros).to_vec();
        }
        let factor = (1.0 - params.theta * params.dt).powi(steps as i32);
        for (a, b) in x0.iter().zip(&x) {
            let expected = params.mu + (a - params.mu) * factor;
            prop_assert!((b - expected).abs() <= 1e-12 * (1.0 + a.abs()));
            prop_assert!((b - params.mu).abs() <= (a - params.mu).abs());
        }
    }

    #[test]
    fn oracle_never_loses_to_greedy(order in small_order()) {
        let greedy = greedy_plan(&order);
        prop_assert!(validate_plan(&greedy, &order).feasible_exact);
        let oracle = oracle_min_sections(&order, &OracleLimits::default()).unwrap();
        prop_assert!(oracle.min_sections <= greedy.len());
        prop_assert_eq!(oracle.witness.len(), oracle.min_sections);
        prop_assert!(validate_plan(&oracle.witness, &order).feasible_exact);
    }

    #[test]
    fn random_plans_are_reproducible(demands in prop::collection::vec(0u64..200, 6), seed in any::<u64>()) {
        let order = reference_order_with(demands);
        let a = random_plan(&order, seed);
        prop_assert_eq!(&a, &random_plan(&order, seed));
        if a.fulfilled {
            prop_assert!(validate_plan(&a.plan, &order).feasible_exact);
        }
    }
}
