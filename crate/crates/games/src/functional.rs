//! Mutual-information payoffs as functions of the collusion channel.
//!
//! For a fixed encoder law every payoff is a conditional mutual information
//! `I(U; Y | Z)` whose joint law `P(u, z, y) = Σ_x A[(u,z), x] V(y|x)` is
//! linear in the channel table, hence convex in `V`.

use std::collections::BTreeMap;

use fptrace_core::collusion::digits;
use fptrace_core::{Registry, Result};

use crate::problem::{cell_laws, product_prob, GameProblem, InputLaw, Objective};

/// Floor on log-ratios where the channel puts no mass, keeping the gradient finite.
const LOG_FLOOR: f64 = -1e3;

/// Which colluder variables play the role of `U`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Part {
    /// `(1/|A|) I(X_A; Y | S, W, X_{K∖A})`, `A` as a bitmask over colluders.
    Subset(u32),
    /// `I(X_m; Y | W)`.
    User(usize),
}

#[derive(Debug, Clone)]
pub struct MiFunctional {
    pub part: Part,
    scale: f64,
    ny: usize,
    row_z: Vec<usize>,
    row_p: Vec<f64>,
    z_p: Vec<f64>,
    /// `(row, x, A[row, x])`, sorted by row.
    entries: Vec<(usize, usize, f64)>,
}

impl MiFunctional {
    pub fn new(problem: &GameProblem, law: &InputLaw, part: Part) -> Self {
        let (k, q, l) = (problem.k, problem.x_alphabet, problem.l);
        let (nu, scale) = match part {
            Part::Subset(mask) => (q.pow(mask.count_ones()), 1.0 / mask.count_ones() as f64),
            Part::User(_) => (q, 1.0),
        };
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (c, weight, px) in cell_laws(problem, law) {
            if weight == 0.0 {
                continue;
            }
            for x in 0..problem.inputs() {
                let p = weight * product_prob(x, k, &px);
                if p == 0.0 {
                    continue;
                }
                let d = digits(x, k, q);
                let (u, z) = match part {
                    Part::Subset(mask) => {
                        let (mut u, mut rest) = (0, 0);
                        for (j, &xj) in d.iter().enumerate() {
                            if mask >> j & 1 == 1 {
                                u = u * q + xj;
                            } else {
                                rest = rest * q + xj;
                            }
                        }
                        (u, c * q.pow(k as u32 - mask.count_ones()) + rest)
                    }
                    Part::User(m) => (d[m], c % l),
                };
                *acc.entry((z * nu + u, x)).or_insert(0.0) += p;
            }
        }
        let rows = acc.keys().map(|&(r, _)| r).max().map_or(0, |r| r + 1);
        let mut row_p = vec![0.0; rows];
        let row_z: Vec<usize> = (0..rows).map(|r| r / nu).collect();
        let mut z_p = vec![0.0; rows / nu + 1];
        let entries: Vec<(usize, usize, f64)> = acc.into_iter().map(|((r, x), p)| (r, x, p)).collect();
        for &(r, _, p) in &entries {
            row_p[r] += p;
            z_p[row_z[r]] += p;
        }
        Self { part, scale, ny: problem.y_alphabet, row_z, row_p, z_p, entries }
    }

    fn joints(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let ny = self.ny;
        let mut j = vec![0.0; self.row_p.len() * ny];
        for &(r, x, p) in &self.entries {
            let row = &v[x * ny..(x + 1) * ny];
            for (o, &vy) in j[r * ny..(r + 1) * ny].iter_mut().zip(row) {
                *o += p * vy;
            }
        }
        let mut jz = vec![0.0; self.z_p.len() * ny];
        for (r, &z) in self.row_z.iter().enumerate() {
            for y in 0..ny {
                jz[z * ny + y] += j[r * ny + y];
            }
        }
        (j, jz)
    }

    /// Payoff in bits.
    pub fn value(&self, v: &[f64]) -> f64 {
        let ny = self.ny;
        let (j, jz) = self.joints(v);
        let mut total = 0.0;
        for (r, &z) in self.row_z.iter().enumerate() {
            if self.row_p[r] == 0.0 {
                continue;
            }
            for y in 0..ny {
                let a = j[r * ny + y];
                if a > 0.0 {
                    total += a * (a * self.z_p[z] / (self.row_p[r] * jz[z * ny + y])).log2();
                }
            }
        }
        self.scale * total
    }

    /// Gradient of [`value`](Self::value) with respect to the channel table.
    pub fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let ny = self.ny;
        let (j, jz) = self.joints(v);
        let mut ratio = vec![0.0; j.len()];
        for (r, &z) in self.row_z.iter().enumerate() {
            if self.row_p[r] == 0.0 {
                continue;
            }
            for y in 0..ny {
                let (a, b) = (j[r * ny + y], jz[z * ny + y]);
                ratio[r * ny + y] = if a > 0.0 {
                    (a * self.z_p[z] / (self.row_p[r] * b)).log2()
                } else if b > 0.0 {
                    LOG_FLOOR
                } else {
                    (self.z_p[z] / self.row_p[r]).log2()
                };
            }
        }
        let mut g = vec![0.0; v.len()];
        for &(r, x, p) in &self.entries {
            for y in 0..ny {
                g[x * ny + y] += self.scale * p * ratio[r * ny + y];
            }
        }
        g
    }
}

/// A payoff family: the payoff is the minimum of its functionals.
pub trait GameObjective: Send + Sync {
    fn name(&self) -> &'static str;

    fn functionals(&self, problem: &GameProblem, law: &InputLaw) -> Vec<MiFunctional>;
}

struct DetectOne;
struct DetectAll;
struct Simple;

impl GameObjective for DetectOne {
    fn name(&self) -> &'static str {
        "detect_one"
    }

    fn functionals(&self, problem: &GameProblem, law: &InputLaw) -> Vec<MiFunctional> {
        vec![MiFunctional::new(problem, law, Part::Subset(full_mask(problem.k)))]
    }
}

impl GameObjective for DetectAll {
    fn name(&self) -> &'static str {
        "detect_all"
    }

    fn functionals(&self, problem: &GameProblem, law: &InputLaw) -> Vec<MiFunctional> {
        (1..=full_mask(problem.k)).map(|mask| MiFunctional::new(problem, law, Part::Subset(mask))).collect()
    }
}

impl GameObjective for Simple {
    fn name(&self) -> &'static str {
        "simple"
    }

    fn functionals(&self, problem: &GameProblem, law: &InputLaw) -> Vec<MiFunctional> {
        vec![MiFunctional::new(problem, law, Part::User(0))]
    }
}

pub fn full_mask(k: usize) -> u32 {
    ((1u64 << k) - 1) as u32
}

pub fn objective_registry() -> Registry<dyn GameObjective, ()> {
    let mut r: Registry<dyn GameObjective, ()> = Registry::new("game objective");
    r.register("detect_one", |_| Ok(Box::new(DetectOne)));
    r.register("detect_all", |_| Ok(Box::new(DetectAll)));
    r.register("simple", |_| Ok(Box::new(Simple)));
    r
}

pub fn objective_for(o: Objective) -> Result<Box<dyn GameObjective>> {
    objective_registry().build(o.name(), &())
}

/// Payoff of `problem` at `(law, channel)`: the minimum over its functionals.
pub fn evaluate(problem: &GameProblem, law: &InputLaw, channel: &[f64]) -> Result<f64> {
    let obj = objective_for(problem.objective)?;
    Ok(obj.functionals(problem, law).iter().map(|f| f.value(channel)).fold(f64::INFINITY, f64::min))
}
