use fptrace_core::types::pmf_entropy;
use fptrace_games::{check_fair_inequalities, symmetrize};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pmf(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>().powi(2)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn random_subset(rng: &mut ChaCha8Rng, from: &[usize]) -> Vec<usize> {
    loop {
        let s: Vec<usize> = from.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
        if !s.is_empty() {
            return s;
        }
    }
}

#[test]
fn symmetrized_laws_satisfy_the_inequalities() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..200 {
        let k = rng.gen_range(1..=4);
        let ny = rng.gen_range(1..=3);
        let nz = rng.gen_range(1..=3);
        let raw = random_pmf(&mut rng, (1 << k) * ny * nz);
        let joint = symmetrize(&raw, k, 2, ny, nz).unwrap();
        let all: Vec<usize> = (0..k).collect();
        let b = random_subset(&mut rng, &all);
        let a = random_subset(&mut rng, &b);
        let r = check_fair_inequalities(&joint, k, 2, ny, nz, &a, &b).unwrap();
        for (name, c) in [("huy", r.huy), ("hus", r.hus), ("i_fair", r.i_fair)] {
            assert!(c.holds, "case {case} {name}: {c:?}");
        }
        assert!(!r.conditionally_iid || r.i2_fair.holds);
    }
}

#[test]
fn conditionally_iid_laws_attain_equality() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..50 {
        let k = rng.gen_range(1..=4);
        let nz = rng.gen_range(1..=3);
        let pz = random_pmf(&mut rng, nz);
        let px: Vec<Vec<f64>> = (0..nz).map(|_| random_pmf(&mut rng, 2)).collect();
        let mut joint = vec![0.0; (1 << k) * nz];
        for x in 0..1usize << k {
            for z in 0..nz {
                let p: f64 = (0..k).map(|j| px[z][x >> j & 1]).product();
                joint[x * nz + z] = pz[z] * p;
            }
        }
        let all: Vec<usize> = (0..k).collect();
        let b = random_subset(&mut rng, &all);
        let a = random_subset(&mut rng, &b);
        let r = check_fair_inequalities(&joint, k, 2, 1, nz, &a, &b).unwrap();
        assert!(r.conditionally_iid);
        for c in [r.huy, r.hus, r.i_fair, r.i2_fair] {
            assert!(c.equality && c.slack.abs() < 1e-9, "case {case}: {c:?}");
        }
    }
}

#[test]
fn single_colluder_is_trivially_tight() {
    let joint = [0.1, 0.2, 0.3, 0.4];
    let r = check_fair_inequalities(&joint, 1, 2, 2, 1, &[0], &[0]).unwrap();
    for c in [r.huy, r.hus, r.i_fair, r.i2_fair] {
        assert!(c.equality, "{c:?}");
    }
}

/// `I(X_1; Y) ≤ (1/2) I(X_1 X_2; Y)` for uniform inputs and a fair channel, evaluated directly.
#[test]
fn single_score_is_at_most_half_the_joint_score() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let ny = rng.gen_range(2..=3);
        let same0 = random_pmf(&mut rng, ny);
        let mixed = random_pmf(&mut rng, ny);
        let same1 = random_pmf(&mut rng, ny);
        let rows = [&same0, &mixed, &mixed, &same1];
        let joint: Vec<f64> = rows.iter().flat_map(|r| r.iter().map(|v| v / 4.0)).collect();
        let py: Vec<f64> = (0..ny).map(|y| (0..4).map(|x| joint[x * ny + y]).sum()).collect();
        let i_joint = 2.0 + pmf_entropy(&py) - pmf_entropy(&joint);
        let x1y: Vec<f64> = (0..2)
            .flat_map(|x1| {
                let j = &joint;
                (0..ny).map(move |y| j[(2 * x1) * ny + y] + j[(2 * x1 + 1) * ny + y])
            })
            .collect();
        let i_single = 1.0 + pmf_entropy(&py) - pmf_entropy(&x1y);
        assert!(i_single <= 0.5 * i_joint + 1e-12, "{i_single} vs {i_joint}");

        let r = check_fair_inequalities(&joint, 2, 2, ny, 1, &[0], &[0, 1]).unwrap();
        assert!(r.conditionally_iid && r.i2_fair.holds);
        assert!((r.i2_fair.lhs - i_single).abs() < 1e-12 && (2.0 * r.i2_fair.rhs - i_joint).abs() < 1e-12);
    }
}
