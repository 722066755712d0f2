use fptrace_games::{solve_capacity, solve_capacity_sequence, solve_capacity_simple, GameProblem, Objective};

#[test]
fn boneh_shaw_single_time_sharing_values() {
    for (k, expected) in [(1, 1.0), (2, 0.25), (3, 1.0 / 12.0)] {
        let s = solve_capacity(&GameProblem::boneh_shaw_binary(k, 1, Objective::DetectOne)).unwrap();
        assert!((s.value - expected).abs() < 1e-3, "K={k}: {}", s.value);
    }
}

#[test]
fn values_grow_with_time_sharing() {
    let seq = solve_capacity_sequence(&GameProblem::boneh_shaw_binary(2, 1, Objective::DetectOne), 3).unwrap();
    for pair in seq.windows(2) {
        assert!(pair[1].value >= pair[0].value - 1e-6);
    }
}

#[test]
fn simple_payoff_is_below_the_joint_one() {
    let p = GameProblem::boneh_shaw_binary(2, 1, Objective::DetectOne);
    let simple = solve_capacity_simple(&p).unwrap();
    assert!(simple.value <= 0.25 + 1e-6);
}
