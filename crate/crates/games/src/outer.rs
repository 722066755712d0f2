//! Encoder's side of the game: multistart projected ascent over product-form laws.
//!
//! The payoff `φ(θ) = min_V f(θ, V)` is generally not concave in the
//! encoder law, so the ascent is seeded from the best points of a lattice
//! over the simplices and every restart is reported.

use fptrace_core::{Error, Result};
use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::functional::{MiFunctional, Part};
use crate::inner::{inner_min_from, InnerSolution};
use crate::problem::{Diagnostics, GameProblem, GameSolution, InputLaw, Objective};

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Projects `(p_W, p_{X|SW})` onto the product of simplices, then enforces
/// the embedding constraint on `p_{X|SW}` for the projected `p_W`.
pub fn project_law(problem: &GameProblem, theta: &[f64]) -> Vec<f64> {
    let (l, q) = (problem.l, problem.x_alphabet);
    let p_w = project_simplex(&theta[..l]);
    let raw = &theta[l..];
    let rows = |shift: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let mut out = Vec::with_capacity(raw.len());
        for (r, row) in raw.chunks(q).enumerate() {
            let shifted: Vec<f64> = row.iter().enumerate().map(|(x, &v)| v - shift(r * q + x)).collect();
            out.extend(project_simplex(&shifted));
        }
        out
    };
    let mut p_x = rows(&|_| 0.0);
    if let (Some(d1), Some(d1_max)) = (&problem.d1, problem.d1_max) {
        let p_s = problem.host_law();
        let cost: Vec<f64> = (0..raw.len())
            .map(|i| {
                let (cell, x) = (i / q, i % q);
                let (s, w) = (cell / l, cell % l);
                p_s[s] * p_w[w] * d1[s * q + x]
            })
            .collect();
        let excess = |p: &[f64]| p.iter().zip(&cost).map(|(a, b)| a * b).sum::<f64>() - d1_max;
        if excess(&p_x) > 0.0 {
            let mut hi = 1.0;
            while excess(&rows(&|i| hi * cost[i])) > 0.0 && hi < 1e12 {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if excess(&rows(&|i| mid * cost[i])) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            p_x = rows(&|i| hi * cost[i]);
        }
    }
    let mut out = p_w;
    out.extend(p_x);
    out
}

/// Compositions of `total` into `parts` nonnegative integers, lexicographic.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in (0..=total).rev() {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn lattice(total: usize, parts: usize) -> Vec<Vec<f64>> {
    compositions(total, parts).into_iter().map(|c| c.into_iter().map(|v| v as f64 / total as f64).collect()).collect()
}

fn count_or_cap(base: usize, exp: usize, cap: usize) -> usize {
    let mut n: usize = 1;
    for _ in 0..exp {
        n = n.saturating_mul(base);
        if n > cap {
            return cap + 1;
        }
    }
    n
}

/// Seeding lattice over `(p_W, p_{X|SW})`. Falls back to laws shared
/// across time-sharing symbols, and then to an even subsample, when the
/// full lattice exceeds the budget.
pub fn seed_grid(problem: &GameProblem) -> Vec<Vec<f64>> {
    let opts = &problem.options;
    let (l, q, ns) = (problem.l, problem.x_alphabet, problem.s_alphabet);
    let g = opts.grid.max(1);
    let pw = lattice(g, l);
    let px = lattice(g, q);
    let budget = opts.grid_budget.max(1);
    let full = count_or_cap(px.len(), ns * l, budget).saturating_mul(pw.len());
    let mut points = Vec::new();
    if full <= budget {
        let cells = ns * l;
        let mut idx = vec![0usize; cells];
        loop {
            for w in &pw {
                let mut v = w.clone();
                for &i in &idx {
                    v.extend_from_slice(&px[i]);
                }
                points.push(v);
            }
            let Some(pos) = (0..cells).rev().find(|&c| idx[c] + 1 < px.len()) else {
                break;
            };
            idx[pos] += 1;
            for i in idx.iter_mut().skip(pos + 1) {
                *i = 0;
            }
        }
        return points;
    }
    let mut idx = vec![0usize; ns];
    loop {
        for w in &pw {
            let mut v = w.clone();
            for &i in &idx {
                for _ in 0..l {
                    v.extend_from_slice(&px[i]);
                }
            }
            points.push(v);
        }
        let Some(pos) = (0..ns).rev().find(|&c| idx[c] + 1 < px.len()) else {
            break;
        };
        idx[pos] += 1;
        for i in idx.iter_mut().skip(pos + 1) {
            *i = 0;
        }
        if points.len() > 50 * budget {
            break;
        }
    }
    if points.len() > budget {
        let stride = points.len().div_ceil(budget);
        points = points.into_iter().step_by(stride).collect();
    }
    points
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct Evaluator<'a> {
    problem: &'a GameProblem,
}

impl Evaluator<'_> {
    fn law(&self, theta: &[f64]) -> InputLaw {
        InputLaw::from_params(self.problem, theta)
    }

    fn solve(&self, theta: &[f64], warm: Option<&[f64]>) -> Result<InnerSolution> {
        inner_min_from(&self.law(theta), self.problem, warm)
    }

    /// Payoff at `theta` with the channel held fixed.
    fn payoff_fixed(&self, theta: &[f64], channel: &[f64], subset: Option<u32>) -> f64 {
        let law = self.law(theta);
        let part = match (self.problem.objective, subset) {
            (Objective::Simple, _) => Part::User(0),
            (_, Some(mask)) => Part::Subset(mask),
            (_, None) => Part::Subset(crate::functional::full_mask(self.problem.k)),
        };
        MiFunctional::new(self.problem, &law, part).value(channel)
    }

    /// Finite-difference gradient of the payoff at the current worst channel.
    fn gradient(&self, theta: &[f64], inner: &InnerSolution) -> Vec<f64> {
        let h = self.problem.options.fd_step;
        let table = &inner.channel.table;
        (0..theta.len())
            .map(|i| {
                let mut up = theta.to_vec();
                let mut down = theta.to_vec();
                up[i] += h;
                if theta[i] - h >= 0.0 {
                    down[i] -= h;
                    let span = 2.0 * h;
                    (self.payoff_fixed(&up, table, inner.subset) - self.payoff_fixed(&down, table, inner.subset)) / span
                } else {
                    (self.payoff_fixed(&up, table, inner.subset) - self.payoff_fixed(theta, table, inner.subset)) / h
                }
            })
            .collect()
    }
}

/// Final state of one ascent.
struct Ascent {
    theta: Vec<f64>,
    inner: InnerSolution,
    iterations: usize,
    stationarity: f64,
}

fn ascend(problem: &GameProblem, start: &[f64]) -> Result<Ascent> {
    let ev = Evaluator { problem };
    let mut theta = project_law(problem, start);
    let mut inner = ev.solve(&theta, None)?;
    let mut inner_iters = inner.iterations;
    let mut eta = 0.1;
    let mut stationarity = 0.0;
    for _ in 0..problem.options.max_ascent_iters {
        let g = ev.gradient(&theta, &inner);
        let unit: Vec<f64> = theta.iter().zip(&g).map(|(t, d)| t + d).collect();
        let moved: Vec<f64> = project_law(problem, &unit).iter().zip(&theta).map(|(a, b)| a - b).collect();
        stationarity = norm(&moved);
        if stationarity < 1e-10 {
            break;
        }
        let mut accepted = false;
        while eta > 1e-10 {
            let trial: Vec<f64> = theta.iter().zip(&g).map(|(t, d)| t + eta * d).collect();
            let next = project_law(problem, &trial);
            if norm(&next.iter().zip(&theta).map(|(a, b)| a - b).collect::<Vec<_>>()) < 1e-14 {
                break;
            }
            let cand = ev.solve(&next, Some(&inner.channel.table))?;
            inner_iters += cand.iterations;
            if cand.value > inner.value + 1e-13 {
                theta = next;
                inner = cand;
                eta = (eta * 2.0).min(10.0);
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    inner.iterations = inner_iters;
    Ok(Ascent { theta, inner, iterations: inner_iters, stationarity })
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Max-min value of the game with the payoff selected by `problem.objective`.
pub fn solve_capacity(problem: &GameProblem) -> Result<GameSolution> {
    solve_seeded(problem, &[])
}

/// The same game with payoff `I(X_1; Y | W)`.
pub fn solve_capacity_simple(problem: &GameProblem) -> Result<GameSolution> {
    solve_capacity(&problem.with_objective(Objective::Simple))
}

/// Solves for `L = 1..=l_max`, seeding each size with the previous optimum.
pub fn solve_capacity_sequence(problem: &GameProblem, l_max: usize) -> Result<Vec<GameSolution>> {
    let mut out: Vec<GameSolution> = Vec::with_capacity(l_max);
    for l in 1..=l_max {
        let p = problem.with_l(l);
        let seeds: Vec<InputLaw> =
            out.last().map(|prev| prev.input_law.extended(&problem.with_l(l - 1))).into_iter().collect();
        out.push(solve_seeded(&p, &seeds)?);
    }
    Ok(out)
}

/// [`solve_capacity`] with extra starting laws tried before the grid seeds.
pub fn solve_seeded(problem: &GameProblem, seeds: &[InputLaw]) -> Result<GameSolution> {
    problem.validate()?;
    for s in seeds {
        s.validate(problem)?;
    }
    let grid = seed_grid(problem);
    let scored: Vec<(usize, f64)> = grid
        .par_iter()
        .enumerate()
        .map(|(i, theta)| {
            let theta = project_law(problem, theta);
            let law = InputLaw::from_params(problem, &theta);
            inner_min_from(&law, problem, None).map(|r| (i, r.value))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ranked = scored;
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let restarts = problem.options.restarts.max(1);
    let mut starts: Vec<Vec<f64>> = seeds.iter().map(InputLaw::to_params).collect();
    for (i, _) in ranked {
        if starts.len() >= restarts + seeds.len() {
            break;
        }
        let p = project_law(problem, &grid[i]);
        if !starts.contains(&p) {
            starts.push(p);
        }
    }
    debug!("solving L={} from {} starts over {} grid points", problem.l, starts.len(), grid.len());
    let runs: Vec<Ascent> = starts.par_iter().map(|s| ascend(problem, s)).collect::<Result<Vec<_>>>()?;
    let best = runs
        .iter()
        .max_by(|a, b| a.inner.value.total_cmp(&b.inner.value).then_with(|| lexicographic(&b.theta, &a.theta)))
        .ok_or(Error::Empty("restarts"))?;
    let values: Vec<f64> = runs.iter().map(|r| r.inner.value).collect();
    let spread =
        values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(GameSolution {
        value: best.inner.value,
        input_law: InputLaw::from_params(problem, &best.theta),
        worst_channel: best.inner.channel.clone(),
        objective: problem.objective,
        l: problem.l,
        diagnostics: Diagnostics {
            restarts: runs.len(),
            restart_values: values,
            inner_iterations: runs.iter().map(|r| r.iterations).sum(),
            gap: best.inner.gap,
            stationarity: best.stationarity,
            nonconcave: spread > problem.options.concavity_tol,
        },
    })
}

/// One row of a capacity or exponent sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub l: usize,
    pub r: Option<f64>,
    pub value: f64,
    pub restarts: usize,
    pub gap: f64,
}

impl SweepRow {
    pub fn from_solution(k: usize, s: &GameSolution) -> Self {
        Self { k, l: s.l, r: None, value: s.value, restarts: s.diagnostics.restarts, gap: s.diagnostics.gap }
    }
}

/// CSV with columns `K,L,R,value,restarts,gap`; an absent rate is left empty.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("K,L,R,value,restarts,gap\n");
    for r in rows {
        let rate = r.r.map(|v| format!("{v:.8e}")).unwrap_or_default();
        out.push_str(&format!("{},{},{},{:.8e},{},{:.8e}\n", r.k, r.l, rate, r.value, r.restarts, r.gap));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_projection() {
        assert_eq!(project_simplex(&[0.5, 0.5]), vec![0.5, 0.5]);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.9, 0.4, -0.3]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn lattice_sizes() {
        assert_eq!(lattice(16, 2).len(), 17);
        assert_eq!(lattice(16, 3).len(), 153);
        let p = GameProblem::boneh_shaw_binary(2, 1, Objective::DetectOne);
        assert_eq!(seed_grid(&p).len(), 17);
        let p = GameProblem::boneh_shaw_binary(2, 2, Objective::DetectOne);
        assert_eq!(seed_grid(&p).len(), 17 * 17);
    }

    #[test]
    fn embedding_constraint_is_enforced() {
        let mut p = GameProblem::boneh_shaw_binary(2, 1, Objective::DetectOne);
        p.s_alphabet = 2;
        p.p_s = Some(vec![0.5, 0.5]);
        p.d1 = Some(vec![0.0, 1.0, 1.0, 0.0]);
        p.d1_max = Some(0.2);
        let theta = project_law(&p, &[1.0, 0.5, 0.5, 0.5, 0.5]);
        let law = InputLaw::from_params(&p, &theta);
        assert!(law.distortion_excess(&p).unwrap() <= 1e-9);
        law.validate(&p).unwrap();
    }

    #[test]
    fn csv_layout() {
        let rows = vec![SweepRow { k: 2, l: 1, r: None, value: 0.25, restarts: 3, gap: 0.0 }];
        assert_eq!(sweep_csv(&rows), "K,L,R,value,restarts,gap\n2,1,,2.50000000e-1,3,0.00000000e0\n");
    }
}
