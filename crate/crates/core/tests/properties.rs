use std::collections::HashMap;

use fptrace_core::codec::{sample_type_class, Composition};
use fptrace_core::collusion::{
    check_marking, is_permutation_invariant, permutation_average, BlockInterleave, ChannelClass, ChannelSpec,
    CollusionAttack, Exchangeable, Interleave, Memoryless,
};
use fptrace_core::types::{
    entropy, joint_type, kl_divergence, log_type_class_size, multi_info, mutual_info, InfoQuery, JointType,
};
use fptrace_core::Sequence;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tuple_strategy() -> impl Strategy<Value = (Vec<Sequence>, Sequence)> {
    (2usize..=4, 1usize..=50, 2usize..=4, 2usize..=4).prop_flat_map(|(k, n, qx, qy)| {
        let xs = proptest::collection::vec(proptest::collection::vec(0..qx as u8, n), k);
        let y = proptest::collection::vec(0..qy as u8, n);
        (xs, y).prop_map(move |(xs, y)| {
            (
                xs.into_iter().map(|s| Sequence::from_slice(qx, &s).unwrap()).collect(),
                Sequence::from_slice(qy, &y).unwrap(),
            )
        })
    })
}

fn jt_of(xs: &[Sequence], extra: &[&Sequence]) -> JointType {
    let mut refs: Vec<&Sequence> = xs.iter().collect();
    refs.extend_from_slice(extra);
    joint_type(&refs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn information_identities((xs, y) in tuple_strategy()) {
        let k = xs.len();
        let jt = jt_of(&xs, &[&y]);
        let singles: Vec<Vec<usize>> = (0..k).map(|i| vec![i]).collect();

        // two parts reduce to mutual information
        let two = multi_info(&jt, &singles[..2], &[]).unwrap();
        let mi = mutual_info(&jt, &InfoQuery::mutual(&[0], &[1])).unwrap();
        prop_assert!((two - mi).abs() < 1e-12);

        // chain rule over parts
        let full = multi_info(&jt, &singles, &[]).unwrap();
        let mut chain = 0.0;
        for i in 0..k - 1 {
            let rest: Vec<usize> = (i + 1..k).collect();
            chain += mutual_info(&jt, &InfoQuery::mutual(&[i], &rest)).unwrap();
        }
        prop_assert!((full - chain).abs() < 1e-12);

        // merging a tail of parts
        for i in 1..k - 1 {
            let mut merged: Vec<Vec<usize>> = singles[..i].to_vec();
            merged.push((i..k).collect());
            let head = multi_info(&jt, &merged, &[]).unwrap();
            let tail = if k - i >= 2 { multi_info(&jt, &singles[i..], &[]).unwrap() } else { 0.0 };
            prop_assert!((full - head - tail).abs() < 1e-12);
        }

        // output as the last part: Σ H(x_i) − H(x_1..x_K | y)
        let mut with_y = singles.clone();
        with_y.push(vec![k]);
        let lhs = multi_info(&jt, &with_y, &[]).unwrap();
        let sum_h: f64 = (0..k).map(|i| entropy(&jt, &InfoQuery::entropy(&[i])).unwrap()).sum();
        let all: Vec<usize> = (0..k).collect();
        let rhs = sum_h - entropy(&jt, &InfoQuery::entropy(&all).given(&[k])).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
        prop_assert!(lhs >= 0.0 && full >= 0.0);

        // symmetry
        let ab = mutual_info(&jt, &InfoQuery::mutual(&[0], &[k]).given(&[1])).unwrap();
        let ba = mutual_info(&jt, &InfoQuery::mutual(&[k], &[0]).given(&[1])).unwrap();
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn conditional_decomposition((xs, y) in tuple_strategy(), side in proptest::collection::vec(0u8..3, 50)) {
        let n = y.len();
        let c = Sequence::from_slice(3, &side[..n]).unwrap();
        let k = xs.len();
        let jt = jt_of(&xs, &[&y, &c]);
        let mut parts: Vec<Vec<usize>> = (0..k).map(|i| vec![i]).collect();
        parts.push(vec![k]);
        let direct = multi_info(&jt, &parts, &[k + 1]).unwrap();
        let sum_h: f64 = (0..k).map(|i| entropy(&jt, &InfoQuery::entropy(&[i]).given(&[k + 1])).unwrap()).sum();
        let all: Vec<usize> = (0..k).collect();
        let decomposed = sum_h - entropy(&jt, &InfoQuery::entropy(&all).given(&[k, k + 1])).unwrap();
        prop_assert!((direct - decomposed).abs() < 1e-12);
    }

    #[test]
    fn kl_nonnegative(p in proptest::collection::vec(0.0f64..1.0, 4), q in proptest::collection::vec(0.01f64..1.0, 4)) {
        let sp: f64 = p.iter().sum();
        prop_assume!(sp > 0.0);
        let p: Vec<f64> = p.iter().map(|v| v / sp).collect();
        let sq: f64 = q.iter().sum();
        let q: Vec<f64> = q.iter().map(|v| v / sq).collect();
        let d = kl_divergence(&p, &q).unwrap();
        prop_assert!(d.bits() >= 0.0);
        prop_assert!(kl_divergence(&p, &p).unwrap().bits().abs() < 1e-12);
    }

    #[test]
    fn interleave_and_boneh_shaw_keep_marking(seed in any::<u64>(), k in 1usize..=4, n in 1usize..=200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Sequence> = (0..k)
            .map(|_| Sequence::from_slice(2, &(0..n).map(|_| rng.gen_range(0..2)).collect::<Vec<u8>>()).unwrap())
            .collect();
        let refs: Vec<&Sequence> = xs.iter().collect();
        let y = Interleave.forge(&refs, &mut rng).unwrap();
        prop_assert!(check_marking(&refs, &y).unwrap());
        let maj = Memoryless::new(ChannelSpec::majority(k, 2).unwrap());
        prop_assert!(check_marking(&refs, &maj.forge(&refs, &mut rng).unwrap()).unwrap());
        let ex = Exchangeable::new(Box::new(BlockInterleave));
        prop_assert!(check_marking(&refs, &ex.forge(&refs, &mut rng).unwrap()).unwrap());
    }

    #[test]
    fn permutation_average_is_idempotent(seed in any::<u64>(), k in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = 2usize.pow(k as u32);
        let mut table = Vec::new();
        for _ in 0..rows {
            let a: f64 = rng.gen();
            table.extend([a, 1.0 - a]);
        }
        let ch = ChannelSpec::new(k, 2, 2, table, ChannelClass::Explicit).unwrap();
        let once = permutation_average(&ch).unwrap();
        prop_assert!(is_permutation_invariant(&once));
        let twice = permutation_average(&once).unwrap();
        for (a, b) in once.table.iter().zip(&twice.table) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn type_class_sandwich_exhaustive() {
    for q in 1..=3usize {
        for n in 1..=12u64 {
            for_each_composition(n, q, &mut |counts| {
                let t = JointType::from_counts(vec![q], counts.to_vec()).unwrap();
                let s = log_type_class_size(&t, None).unwrap();
                assert!(s.lower <= s.exact + 1e-9 && s.exact <= s.upper + 1e-9, "{counts:?}: {s:?}");
            });
        }
    }
}

fn for_each_composition(n: u64, q: usize, f: &mut dyn FnMut(&[u64])) {
    fn rec(left: u64, slot: usize, cur: &mut Vec<u64>, q: usize, f: &mut dyn FnMut(&[u64])) {
        if slot == q - 1 {
            cur.push(left);
            f(cur);
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(left - c, slot + 1, cur, q, f);
            cur.pop();
        }
    }
    rec(n, 0, &mut Vec::new(), q, f);
}

#[test]
fn type_class_size_matches_enumeration() {
    for (q, max_n) in [(2usize, 10u32), (3, 7)] {
        for n in 1..=max_n {
            let mut classes: HashMap<Vec<u64>, u64> = HashMap::new();
            for code in 0..(q as u64).pow(n) {
                let mut counts = vec![0u64; q];
                let mut v = code;
                for _ in 0..n {
                    counts[(v % q as u64) as usize] += 1;
                    v /= q as u64;
                }
                *classes.entry(counts).or_default() += 1;
            }
            for (counts, size) in classes {
                let t = JointType::from_counts(vec![q], counts).unwrap();
                let s = log_type_class_size(&t, None).unwrap();
                assert!((s.exact - (size as f64).log2()).abs() < 1e-9);
            }
        }
    }
}

/// Pearson statistic for uniformity over the class, compared against the
/// 1e-3 upper quantile of chi-square with `cells − 1` degrees of freedom
/// (Wilson–Hilferty approximation).
fn chi_square_uniform(freq: &HashMap<Vec<u8>, usize>, cells: usize, draws: usize) -> (f64, f64) {
    let e = draws as f64 / cells as f64;
    let mut stat: f64 = freq.values().map(|&o| (o as f64 - e).powi(2) / e).sum();
    stat += (cells - freq.len()) as f64 * e;
    let df = (cells - 1) as f64;
    let z = 3.090_232_306;
    let crit = df * (1.0 - 2.0 / (9.0 * df) + z * (2.0 / (9.0 * df)).sqrt()).powi(3);
    (stat, crit)
}

#[test]
fn type_class_sampling_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    // |T| = 6, 12, 24 and a conditional class of size 3·4 = 12
    for counts in [vec![2u64, 2], vec![2, 1, 1], vec![1, 1, 1, 1]] {
        let c = Composition::unconditional(counts.clone());
        let n: u64 = counts.iter().sum();
        let cells = (1..=n).product::<u64>() / counts.iter().map(|&k| (1..=k).product::<u64>()).product::<u64>();
        let draws = 200 * cells as usize;
        let mut freq = HashMap::new();
        for _ in 0..draws {
            *freq.entry(sample_type_class(&c, None, &mut rng).unwrap().into_symbols()).or_insert(0) += 1;
        }
        let (stat, crit) = chi_square_uniform(&freq, cells as usize, draws);
        assert!(stat < crit, "{counts:?}: {stat} >= {crit}");
    }
    let cond = Sequence::from_slice(2, &[0, 1, 0, 1, 0, 1, 1]).unwrap();
    let c = Composition { alphabet: 2, per_cell: vec![vec![2, 1], vec![1, 3]] };
    let draws = 200 * 12;
    let mut freq = HashMap::new();
    for _ in 0..draws {
        let x = sample_type_class(&c, Some(&cond), &mut rng).unwrap();
        assert_eq!(joint_type(&[&cond, &x]).unwrap().counts(), &[2, 1, 1, 3]);
        *freq.entry(x.into_symbols()).or_insert(0) += 1;
    }
    let (stat, crit) = chi_square_uniform(&freq, 12, draws);
    assert!(stat < crit);
}

#[test]
fn memoryless_output_concentrates_on_table() {
    let table = vec![0.9, 0.1, 0.3, 0.7, 0.6, 0.4, 0.05, 0.95];
    let ch = ChannelSpec::new(2, 2, 2, table.clone(), ChannelClass::Explicit).unwrap();
    let attack = Memoryless::new(ch);
    let mut ok = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Sequence> = (0..2)
            .map(|_| Sequence::from_slice(2, &(0..10_000).map(|_| rng.gen_range(0..2)).collect::<Vec<u8>>()).unwrap())
            .collect();
        let refs: Vec<&Sequence> = xs.iter().collect();
        let y = attack.forge(&refs, &mut rng).unwrap();
        let jt = joint_type(&[&xs[0], &xs[1], &y]).unwrap();
        let c = jt.counts();
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            let total = c[2 * i] + c[2 * i + 1];
            if total >= 200 {
                worst = worst.max((c[2 * i] as f64 / total as f64 - table[2 * i]).abs());
            }
        }
        if worst <= 0.03 {
            ok += 1;
        }
    }
    assert!(ok >= 99);
}

/// Exhaustive check at N = 6, K = 2: wrapping a non-exchangeable attack
/// makes the output uniform inside each conditional type class.
#[test]
fn exchangeable_wrapper_uniform_within_conditional_class() {
    let x1 = Sequence::from_slice(2, &[0, 0, 1, 1, 0, 1]).unwrap();
    let x2 = Sequence::from_slice(2, &[0, 1, 0, 1, 1, 0]).unwrap();
    let refs = [&x1, &x2];
    let wrapped = Exchangeable::new(Box::new(BlockInterleave));
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let draws = 60_000;
    let mut freq: HashMap<Vec<u8>, usize> = HashMap::new();
    for _ in 0..draws {
        let y = wrapped.forge(&refs, &mut rng).unwrap();
        *freq.entry(y.symbols().to_vec()).or_default() += 1;
    }
    let type_of = |y: &[u8]| {
        let ys = Sequence::from_slice(2, y).unwrap();
        joint_type(&[&x1, &x2, &ys]).unwrap().counts().to_vec()
    };
    let mut classes: HashMap<Vec<u64>, Vec<Vec<u8>>> = HashMap::new();
    for v in 0..64u32 {
        let y: Vec<u8> = (0..6).map(|t| ((v >> t) & 1) as u8).collect();
        classes.entry(type_of(&y)).or_default().push(y);
    }
    let mut checked = 0;
    for members in classes.values() {
        let hits: usize = members.iter().map(|y| freq.get(y).copied().unwrap_or(0)).sum();
        if hits == 0 || members.len() == 1 {
            continue;
        }
        let sub: HashMap<Vec<u8>, usize> =
            members.iter().filter_map(|y| freq.get(y).map(|&f| (y.clone(), f))).collect();
        let (stat, crit) = chi_square_uniform(&sub, members.len(), hits);
        assert!(stat < crit, "{stat} >= {crit} over {} outputs", members.len());
        checked += 1;
    }
    assert!(checked >= 1);
}

#[test]
fn exchangeable_wrapper_keeps_memoryless_law() {
    let ch = ChannelSpec::new(1, 2, 2, vec![0.8, 0.2, 0.3, 0.7], ChannelClass::Explicit).unwrap();
    let x = Sequence::from_slice(2, &[0, 0, 1, 1, 0]).unwrap();
    let plain = Memoryless::new(ch.clone());
    let wrapped = Exchangeable::new(Box::new(Memoryless::new(ch)));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 40_000;
    let mut a: HashMap<Vec<u64>, f64> = HashMap::new();
    let mut b: HashMap<Vec<u64>, f64> = HashMap::new();
    for _ in 0..draws {
        let ya = plain.forge(&[&x], &mut rng).unwrap();
        let yb = wrapped.forge(&[&x], &mut rng).unwrap();
        *a.entry(joint_type(&[&x, &ya]).unwrap().counts().to_vec()).or_default() += 1.0 / draws as f64;
        *b.entry(joint_type(&[&x, &yb]).unwrap().counts().to_vec()).or_default() += 1.0 / draws as f64;
    }
    for (t, pa) in &a {
        let pb = b.get(t).copied().unwrap_or(0.0);
        let sigma = (pa * (1.0 - pa) * 2.0 / draws as f64).sqrt();
        assert!((pa - pb).abs() < 4.5 * sigma + 1e-4, "{t:?}: {pa} vs {pb}");
    }
}
