//! Colluders' side of the game: minimize a convex payoff over the channel polytope.

use fptrace_core::collusion::ChannelSpec;
use fptrace_core::Result;
use serde::{Deserialize, Serialize};

use crate::functional::{objective_for, MiFunctional, Part};
use crate::polytope::{build_polytope, ChannelPolytope};
use crate::problem::{GameProblem, InputLaw};

const GOLDEN: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone)]
pub struct FwResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub gap: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizer of a convex `phi` on `[0, hi]` by golden-section search.
fn line_search(phi: &dyn Fn(f64) -> f64, hi: f64) -> f64 {
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (phi(c), phi(d));
    for _ in 0..80 {
        if b - a <= 1e-13 * hi {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = phi(d);
        }
    }
    let mid = 0.5 * (a + b);
    let candidates = [(0.0, phi(0.0)), (hi, phi(hi)), (mid, phi(mid))];
    candidates.iter().fold(candidates[0], |best, &c| if c.1 < best.1 { c } else { best }).0
}

/// Pairwise Frank–Wolfe with exact line search.
///
/// Stops when the linearization gap `⟨∇f(x), x − s⟩` falls below `tol` or
/// after `max_iters` iterations. `start`, if feasible, seeds the active set.
pub fn frank_wolfe(
    poly: &dyn ChannelPolytope,
    f: &MiFunctional,
    start: Option<&[f64]>,
    tol: f64,
    max_iters: usize,
) -> FwResult {
    let first = match start {
        Some(s) if poly.contains(s) => s.to_vec(),
        _ => poly.initial(),
    };
    let mut atoms: Vec<(Vec<f64>, f64)> = vec![(first.clone(), 1.0)];
    let mut x = first;
    let mut value = f.value(&x);
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iters {
        let g = f.gradient(&x);
        let s = poly.lmo(&g);
        gap = dot(&g, &x) - dot(&g, &s);
        if gap <= tol {
            break;
        }
        iterations += 1;
        let away = (0..atoms.len()).max_by(|&a, &b| dot(&g, &atoms[a].0).total_cmp(&dot(&g, &atoms[b].0))).unwrap();
        let dir: Vec<f64> = s.iter().zip(&atoms[away].0).map(|(a, b)| a - b).collect();
        let hi = atoms[away].1;
        let trial = |t: f64| {
            let y: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| (a + t * d).max(0.0)).collect();
            f.value(&y)
        };
        let step = line_search(&trial, hi);
        if step <= 0.0 {
            // No progress along the pairwise direction; fall back to a plain FW step.
            let fw: Vec<f64> = s.iter().zip(&x).map(|(a, b)| a - b).collect();
            let t = line_search(
                &|t: f64| {
                    let y: Vec<f64> = x.iter().zip(&fw).map(|(a, d)| (a + t * d).max(0.0)).collect();
                    f.value(&y)
                },
                1.0,
            );
            if t <= 0.0 {
                break;
            }
            for (xi, di) in x.iter_mut().zip(&fw) {
                *xi = (*xi + t * di).max(0.0);
            }
            for a in atoms.iter_mut() {
                a.1 *= 1.0 - t;
            }
            push_atom(&mut atoms, s, t);
        } else {
            for (xi, di) in x.iter_mut().zip(&dir) {
                *xi = (*xi + step * di).max(0.0);
            }
            atoms[away].1 -= step;
            push_atom(&mut atoms, s, step);
        }
        atoms.retain(|a| a.1 > 1e-15);
        let next = f.value(&x);
        if next > value + 1e-15 {
            break;
        }
        value = next;
    }
    FwResult { value: f.value(&x), point: x, gap, iterations }
}

fn push_atom(atoms: &mut Vec<(Vec<f64>, f64)>, s: Vec<f64>, weight: f64) {
    match atoms.iter_mut().find(|a| a.0 == s) {
        Some(a) => a.1 += weight,
        None => atoms.push((s, weight)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerSolution {
    pub channel: ChannelSpec,
    pub value: f64,
    pub gap: f64,
    pub iterations: usize,
    /// Colluder subset attaining the minimum (bitmask), for subset payoffs.
    pub subset: Option<u32>,
}

/// Worst-case channel for the encoder law `law` and its payoff.
pub fn inner_min_channel(law: &InputLaw, problem: &GameProblem) -> Result<InnerSolution> {
    inner_min_from(law, problem, None)
}

/// [`inner_min_channel`] warm-started from a channel table.
pub fn inner_min_from(law: &InputLaw, problem: &GameProblem, start: Option<&[f64]>) -> Result<InnerSolution> {
    problem.validate()?;
    law.validate(problem)?;
    let coalition = law.coalition_law(problem);
    let poly = build_polytope(problem, &coalition)?;
    let functionals = objective_for(problem.objective)?.functionals(problem, law);
    let opts = &problem.options;
    let mut best: Option<(FwResult, Option<u32>)> = None;
    let mut iterations = 0;
    for f in &functionals {
        let r = frank_wolfe(poly.as_ref(), f, start, opts.inner_tol, opts.inner_max_iters);
        iterations += r.iterations;
        let subset = match f.part {
            Part::Subset(m) => Some(m),
            Part::User(_) => None,
        };
        if best.as_ref().is_none_or(|(b, _)| r.value < b.value) {
            best = Some((r, subset));
        }
    }
    let (r, subset) = best.expect("at least one payoff functional");
    let channel = to_channel(problem, r.point)?;
    // Report the payoff of the returned table exactly.
    let value = functionals.iter().map(|f| f.value(&channel.table)).fold(f64::INFINITY, f64::min);
    Ok(InnerSolution { channel, value, gap: r.gap, iterations, subset })
}

/// Cleans round-off and tags a channel table with the problem's class.
pub(crate) fn to_channel(problem: &GameProblem, mut table: Vec<f64>) -> Result<ChannelSpec> {
    let ny = problem.y_alphabet;
    for row in table.chunks_mut(ny) {
        for p in row.iter_mut() {
            if *p < 1e-15 {
                *p = 0.0;
            }
        }
        let sum: f64 = row.iter().sum();
        for p in row.iter_mut() {
            *p /= sum;
        }
    }
    ChannelSpec::new(problem.k, problem.x_alphabet, ny, table, problem.class.channel_class())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{FeasibleClass, Objective};
    use fptrace_core::collusion::ChannelSpec;

    #[test]
    fn singleton_class_returns_the_channel() {
        let ch = ChannelSpec::interleaving(2, 2).unwrap();
        let mut p = GameProblem::boneh_shaw_binary(2, 1, Objective::DetectOne);
        p.class = FeasibleClass::explicit(vec![ch.clone()], false);
        let r = inner_min_channel(&InputLaw::uniform(&p), &p).unwrap();
        assert!((r.value - 0.25).abs() < 1e-12);
        assert_eq!(r.channel.table, ch.table);
    }

    #[test]
    fn single_user_is_forced_to_identity() {
        let p = GameProblem::boneh_shaw_binary(1, 1, Objective::DetectOne);
        let law = InputLaw { p_w: vec![1.0], p_x_given_sw: vec![0.3, 0.7] };
        let r = inner_min_channel(&law, &p).unwrap();
        let h = fptrace_core::types::pmf_entropy(&[0.3, 0.7]);
        assert!((r.value - h).abs() < 1e-12);
    }

    #[test]
    fn fair_pair_at_uniform_input() {
        let p = GameProblem::boneh_shaw_binary(2, 1, Objective::DetectOne);
        let r = inner_min_channel(&InputLaw::uniform(&p), &p).unwrap();
        assert!((r.value - 0.25).abs() < 1e-9, "{}", r.value);
        assert!(r.gap <= 1e-8);
    }
}
