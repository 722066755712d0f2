//! Feasible channel sets as polytopes with a linear minimization oracle.
//!
//! Channels are flat tables `V[x_K][y]`. A fair class ties together every
//! row in the same orbit of the coalition permutation group, so a channel
//! only depends on the multiset of colluder inputs. Under the marking
//! assumption the orbits of constant inputs are pinned to the common symbol.

use fptrace_core::collusion::digits;
use fptrace_core::{Error, Result};

use crate::problem::{ClassKind, GameProblem};

const FEAS_TOL: f64 = 1e-9;

pub trait ChannelPolytope: Send + Sync {
    fn name(&self) -> &'static str;

    /// Number of table entries, `|X|^K · |Y|`.
    fn dim(&self) -> usize;

    /// `argmin_{V ∈ P} ⟨grad, V⟩`.
    fn lmo(&self, grad: &[f64]) -> Vec<f64>;

    /// Some feasible channel.
    fn initial(&self) -> Vec<f64>;

    fn contains(&self, v: &[f64]) -> bool;

    /// Dimension of the affine hull of the feasible set.
    fn free_parameters(&self) -> usize;
}

/// Rows grouped into orbits; inputs with identical colluder multisets share
/// a group when the class is fair.
#[derive(Debug, Clone)]
pub(crate) struct RowGroups {
    pub ny: usize,
    pub groups: Vec<Vec<usize>>,
    /// Output forced by the marking assumption, per group.
    pub pinned: Vec<Option<usize>>,
}

impl RowGroups {
    pub fn new(k: usize, q: usize, ny: usize, fair: bool, marking: bool) -> Self {
        let inputs = q.pow(k as u32);
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut key_of: std::collections::BTreeMap<Vec<usize>, usize> = Default::default();
        for i in 0..inputs {
            let mut d = digits(i, k, q);
            if fair {
                d.sort_unstable();
            } else {
                d = vec![i];
            }
            let g = *key_of.entry(d).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(i);
        }
        let pinned = groups
            .iter()
            .map(|g| {
                let d = digits(g[0], k, q);
                (marking && d.iter().all(|&x| x == d[0])).then_some(d[0])
            })
            .collect();
        Self { ny, groups, pinned }
    }

    pub fn inputs(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn free_groups(&self) -> usize {
        self.pinned.iter().filter(|p| p.is_none()).count()
    }

    /// Summed score of each group for each output.
    pub fn group_scores(&self, v: &[f64]) -> Vec<Vec<f64>> {
        self.groups
            .iter()
            .map(|g| {
                let mut out = vec![0.0; self.ny];
                for &i in g {
                    for (o, s) in out.iter_mut().zip(&v[i * self.ny..(i + 1) * self.ny]) {
                        *o += s;
                    }
                }
                out
            })
            .collect()
    }

    /// Vertex putting each free group on its lowest-scoring output.
    pub fn vertex(&self, scores: &[Vec<f64>]) -> Vec<f64> {
        let mut v = vec![0.0; self.inputs() * self.ny];
        for (g, rows) in self.groups.iter().enumerate() {
            let y = match self.pinned[g] {
                Some(y) => y,
                None => argmin(&scores[g]),
            };
            for &i in rows {
                v[i * self.ny + y] = 1.0;
            }
        }
        v
    }

    /// Rows sharing a group agree and pinned rows put all mass on their symbol.
    pub fn respects(&self, v: &[f64]) -> bool {
        let ny = self.ny;
        let rows_ok = (0..self.inputs()).all(|i| {
            let row = &v[i * ny..(i + 1) * ny];
            row.iter().all(|&p| p >= -FEAS_TOL) && (row.iter().sum::<f64>() - 1.0).abs() <= FEAS_TOL
        });
        rows_ok
            && self.groups.iter().zip(&self.pinned).all(|(g, pin)| {
                let first = &v[g[0] * ny..(g[0] + 1) * ny];
                let tied = g
                    .iter()
                    .all(|&i| v[i * ny..(i + 1) * ny].iter().zip(first).all(|(a, b)| (a - b).abs() <= FEAS_TOL));
                tied && pin.is_none_or(|y| (first[y] - 1.0).abs() <= FEAS_TOL)
            })
    }

    /// Uniform over outputs on free groups.
    pub fn centre(&self) -> Vec<f64> {
        let scores = vec![vec![0.0; self.ny]; self.groups.len()];
        let mut v = self.vertex(&scores);
        for (g, rows) in self.groups.iter().enumerate() {
            if self.pinned[g].is_none() {
                for &i in rows {
                    v[i * self.ny..(i + 1) * self.ny].fill(1.0 / self.ny as f64);
                }
            }
        }
        v
    }
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// Marking-assumption channels, optionally fair.
pub struct MarkedPolytope {
    groups: RowGroups,
}

impl MarkedPolytope {
    pub fn new(k: usize, q: usize, ny: usize, fair: bool) -> Self {
        Self { groups: RowGroups::new(k, q, ny, fair, true) }
    }
}

impl ChannelPolytope for MarkedPolytope {
    fn name(&self) -> &'static str {
        "boneh_shaw"
    }

    fn dim(&self) -> usize {
        self.groups.inputs() * self.groups.ny
    }

    fn lmo(&self, grad: &[f64]) -> Vec<f64> {
        self.groups.vertex(&self.groups.group_scores(grad))
    }

    fn initial(&self) -> Vec<f64> {
        self.groups.centre()
    }

    fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.dim() && self.groups.respects(v)
    }

    fn free_parameters(&self) -> usize {
        self.groups.free_groups() * (self.groups.ny - 1)
    }
}

/// Convex hull of finitely many channels.
pub struct HullPolytope {
    vertices: Vec<Vec<f64>>,
}

impl HullPolytope {
    pub fn new(vertices: Vec<Vec<f64>>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::Infeasible("empty channel list".into()));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }
}

impl ChannelPolytope for HullPolytope {
    fn name(&self) -> &'static str {
        "explicit"
    }

    fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    fn lmo(&self, grad: &[f64]) -> Vec<f64> {
        let score = |v: &Vec<f64>| v.iter().zip(grad).map(|(a, b)| a * b).sum::<f64>();
        let mut best = 0;
        let mut best_score = score(&self.vertices[0]);
        for (j, v) in self.vertices.iter().enumerate().skip(1) {
            let s = score(v);
            if s < best_score {
                best = j;
                best_score = s;
            }
        }
        self.vertices[best].clone()
    }

    fn initial(&self) -> Vec<f64> {
        let w = 1.0 / self.vertices.len() as f64;
        let mut v = vec![0.0; self.dim()];
        for vert in &self.vertices {
            for (o, x) in v.iter_mut().zip(vert) {
                *o += w * x;
            }
        }
        v
    }

    fn contains(&self, v: &[f64]) -> bool {
        if v.len() != self.dim() {
            return false;
        }
        if self.vertices.len() == 1 {
            return v.iter().zip(&self.vertices[0]).all(|(a, b)| (a - b).abs() <= FEAS_TOL);
        }
        // Distance to the hull by Frank–Wolfe on the squared Euclidean distance.
        let mut x = self.initial();
        for _ in 0..2000 {
            let grad: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - b).collect();
            let s = self.lmo(&grad);
            let d: Vec<f64> = s.iter().zip(&x).map(|(a, b)| a - b).collect();
            let gap: f64 = -grad.iter().zip(&d).map(|(g, e)| g * e).sum::<f64>();
            if gap <= 1e-20 {
                break;
            }
            let dd: f64 = d.iter().map(|e| e * e).sum();
            let step = (gap / dd).min(1.0);
            for (xi, di) in x.iter_mut().zip(&d) {
                *xi += step * di;
            }
        }
        x.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() <= 1e-6
    }

    fn free_parameters(&self) -> usize {
        affine_rank(&self.vertices)
    }
}

fn affine_rank(points: &[Vec<f64>]) -> usize {
    let mut rows: Vec<Vec<f64>> =
        points[1..].iter().map(|p| p.iter().zip(&points[0]).map(|(a, b)| a - b).collect()).collect();
    let mut rank = 0;
    let cols = points[0].len();
    for c in 0..cols {
        let Some(pivot) = (rank..rows.len()).max_by(|&a, &b| rows[a][c].abs().total_cmp(&rows[b][c].abs())) else {
            break;
        };
        if rows[pivot][c].abs() < 1e-12 {
            continue;
        }
        rows.swap(rank, pivot);
        let head = rows[rank].clone();
        for r in rows.iter_mut().skip(rank + 1) {
            let f = r[c] / head[c];
            for (x, h) in r.iter_mut().zip(&head) {
                *x -= f * h;
            }
        }
        rank += 1;
    }
    rank
}

/// Channels whose expected distortion `Σ_x P(x) Σ_y V(y|x) d2(f(x), y)`
/// stays within budget.
pub struct DistortionPolytope {
    groups: RowGroups,
    /// Per-entry cost `P(x) d2(f(x), y)`.
    cost: Vec<f64>,
    budget: f64,
}

impl DistortionPolytope {
    pub(crate) fn new(groups: RowGroups, cost: Vec<f64>, budget: f64) -> Result<Self> {
        let p = Self { groups, cost, budget };
        let least = p.cost_of(&p.groups.vertex(&p.groups.group_scores(&p.cost)));
        if least > budget + FEAS_TOL {
            return Err(Error::Infeasible(format!("least achievable distortion {least} exceeds the budget {budget}")));
        }
        Ok(p)
    }

    fn cost_of(&self, v: &[f64]) -> f64 {
        v.iter().zip(&self.cost).map(|(a, b)| a * b).sum()
    }

    fn lagrangian_vertex(&self, grad: &[f64], lambda: f64) -> Vec<f64> {
        let shifted: Vec<f64> = grad.iter().zip(&self.cost).map(|(g, c)| g + lambda * c).collect();
        self.groups.vertex(&self.groups.group_scores(&shifted))
    }
}

impl ChannelPolytope for DistortionPolytope {
    fn name(&self) -> &'static str {
        "distortion"
    }

    fn dim(&self) -> usize {
        self.cost.len()
    }

    fn lmo(&self, grad: &[f64]) -> Vec<f64> {
        let free = self.lagrangian_vertex(grad, 0.0);
        if self.cost_of(&free) <= self.budget {
            return free;
        }
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-300);
        let cmin = self.cost.iter().filter(|&&c| c > 0.0).fold(f64::INFINITY, |m, &c| m.min(c));
        let mut hi = if cmin.is_finite() { 4.0 * scale / cmin } else { 1.0 };
        while self.cost_of(&self.lagrangian_vertex(grad, hi)) > self.budget {
            hi *= 2.0;
            if hi > 1e300 {
                break;
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cost_of(&self.lagrangian_vertex(grad, mid)) > self.budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let a = self.lagrangian_vertex(grad, lo);
        let b = self.lagrangian_vertex(grad, hi);
        let (ca, cb) = (self.cost_of(&a), self.cost_of(&b));
        if ca <= self.budget || (ca - cb).abs() < 1e-300 {
            return b;
        }
        // Mix the two optimal vertices so the budget binds exactly.
        let t = ((self.budget - cb) / (ca - cb)).clamp(0.0, 1.0);
        a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect()
    }

    fn initial(&self) -> Vec<f64> {
        let centre = self.groups.centre();
        if self.cost_of(&centre) <= self.budget {
            return centre;
        }
        let cheap = self.groups.vertex(&self.groups.group_scores(&self.cost));
        let (cc, ch) = (self.cost_of(&centre), self.cost_of(&cheap));
        let t = ((self.budget - ch) / (cc - ch)).clamp(0.0, 1.0);
        centre.iter().zip(&cheap).map(|(a, b)| t * a + (1.0 - t) * b).collect()
    }

    fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.dim() && self.groups.respects(v) && self.cost_of(v) <= self.budget + FEAS_TOL
    }

    fn free_parameters(&self) -> usize {
        self.groups.free_groups() * (self.groups.ny - 1)
    }
}

/// Feasible channel set of `problem` when the colluders' inputs follow `coalition_law`.
pub fn build_polytope(problem: &GameProblem, coalition_law: &[f64]) -> Result<Box<dyn ChannelPolytope>> {
    build(problem, coalition_law)
}

fn build(problem: &GameProblem, coalition_law: &[f64]) -> Result<Box<dyn ChannelPolytope>> {
    let (k, q, ny) = (problem.k, problem.x_alphabet, problem.y_alphabet);
    match &problem.class.kind {
        ClassKind::BonehShaw => Ok(Box::new(MarkedPolytope::new(k, q, ny, problem.class.fair))),
        ClassKind::Explicit { .. } => Ok(Box::new(HullPolytope::new(problem.hull_vertices()?)?)),
        ClassKind::Distortion { estimator, d2, d2_max } => {
            if coalition_law.len() != problem.inputs() {
                return Err(Error::ShapeMismatch("coalition law has the wrong size".into()));
            }
            let mut cost = vec![0.0; problem.inputs() * ny];
            for (i, &p) in coalition_law.iter().enumerate() {
                let s = estimator.map[i] as usize;
                for y in 0..ny {
                    cost[i * ny + y] = p * d2[s * ny + y];
                }
            }
            let groups = RowGroups::new(k, q, ny, problem.class.fair, false);
            Ok(Box::new(DistortionPolytope::new(groups, cost, *d2_max)?))
        }
    }
}
