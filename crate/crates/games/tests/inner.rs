use fptrace_core::types::pmf_entropy;
use fptrace_games::{evaluate, inner_min_channel, solve_capacity, FeasibleClass, GameProblem, InputLaw, Objective};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `(1/2) I(X_1 X_2; Y)` for independent binary inputs with `P(X_k = 0) = p`
/// under the marking channel with `V(0|01) = b1`, `V(0|10) = b2`.
fn pair_score(p: f64, b1: f64, b2: f64) -> f64 {
    let px = [p * p, p * (1.0 - p), (1.0 - p) * p, (1.0 - p) * (1.0 - p)];
    let rows = [[1.0, 0.0], [b1, 1.0 - b1], [b2, 1.0 - b2], [0.0, 1.0]];
    let mut joint = Vec::with_capacity(8);
    for (x, r) in rows.iter().enumerate() {
        joint.extend(r.iter().map(|v| px[x] * v));
    }
    let py = [joint[0] + joint[2] + joint[4] + joint[6], joint[1] + joint[3] + joint[5] + joint[7]];
    0.5 * (pmf_entropy(&px) + pmf_entropy(&py) - pmf_entropy(&joint))
}

fn law_with(p: f64) -> InputLaw {
    InputLaw { p_w: vec![1.0], p_x_given_sw: vec![p, 1.0 - p] }
}

#[test]
fn unrestricted_marking_channels_match_a_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut problem = GameProblem::boneh_shaw_binary(2, 1, Objective::DetectOne);
    problem.class = FeasibleClass::boneh_shaw();
    for _ in 0..25 {
        let p = rng.gen_range(0.05..0.95);
        let mut grid = f64::INFINITY;
        for i in 0..=1000 {
            for j in 0..=1000 {
                grid = grid.min(pair_score(p, i as f64 * 1e-3, j as f64 * 1e-3));
            }
        }
        let got = inner_min_channel(&law_with(p), &problem).unwrap().value;
        assert!(got <= grid + 1e-9 && grid - got < 1e-4, "p={p}: {got} vs {grid}");
    }
}

#[test]
fn fair_marking_channels_match_a_grid() {
    let problem = GameProblem::boneh_shaw_binary(2, 1, Objective::DetectOne);
    for p in [0.1, 0.3, 0.5, 0.62, 0.9] {
        let grid = (0..=1000).map(|i| pair_score(p, i as f64 * 1e-3, i as f64 * 1e-3)).fold(f64::INFINITY, f64::min);
        let got = inner_min_channel(&law_with(p), &problem).unwrap().value;
        assert!(got <= grid + 1e-9 && grid - got < 1e-4, "p={p}: {got} vs {grid}");
    }
}

#[test]
fn detect_all_never_exceeds_detect_one() {
    for (k, fair) in [(2, true), (2, false), (3, true)] {
        let mut one = GameProblem::boneh_shaw_binary(k, 1, Objective::DetectOne);
        if !fair {
            one.class = FeasibleClass::boneh_shaw();
        }
        let all = one.with_objective(Objective::DetectAll);
        let v_one = solve_capacity(&one).unwrap().value;
        let v_all = solve_capacity(&all).unwrap().value;
        assert!(v_all <= v_one + 1e-6, "K={k} fair={fair}: {v_all} > {v_one}");
        if fair {
            assert!((v_all - v_one).abs() < 1e-4, "K={k}: {v_all} vs {v_one}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn reported_value_is_reproduced(
        k in 1usize..=3,
        l in 1usize..=2,
        objective in prop::sample::select(vec![Objective::DetectOne, Objective::DetectAll, Objective::Simple]),
        fair in any::<bool>(),
        w in 0.05f64..0.95,
        ps in prop::collection::vec(0.05f64..0.95, 2),
    ) {
        let mut problem = GameProblem::boneh_shaw_binary(k, l, objective);
        if !fair {
            problem.class = FeasibleClass::boneh_shaw();
        }
        let law = if l == 1 {
            law_with(ps[0])
        } else {
            InputLaw { p_w: vec![w, 1.0 - w], p_x_given_sw: vec![ps[0], 1.0 - ps[0], ps[1], 1.0 - ps[1]] }
        };
        let sol = inner_min_channel(&law, &problem).unwrap();
        prop_assert!(sol.channel.satisfies_marking());
        let again = evaluate(&problem, &law, &sol.channel.table).unwrap();
        prop_assert!((again - sol.value).abs() < 1e-9);
    }
}
