//! Game descriptions, input laws and solutions.

use fptrace_core::collusion::{permutation_average, ChannelClass, ChannelSpec, Estimator, MAX_PERM_K};
use fptrace_core::types::validate_pmf;
use fptrace_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Cap on `|S|·L·|X|^K·|Y|`, the size of the joint tensor the solvers touch.
pub const GAME_CAP: usize = 1 << 18;

/// Channel sets the colluders choose from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassKind {
    /// Every channel satisfying the marking assumption.
    BonehShaw,
    /// Convex hull of the listed channels.
    Explicit { channels: Vec<ChannelSpec> },
    /// Channels with `E d2(f(X_K), Y) ≤ d2_max` under the coalition input law.
    Distortion {
        estimator: Estimator,
        /// `d2[s][y]`, row-major.
        d2: Vec<f64>,
        d2_max: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleClass {
    #[serde(flatten)]
    pub kind: ClassKind,
    /// Restrict to channels invariant under permutations of the colluders.
    #[serde(default)]
    pub fair: bool,
}

impl FeasibleClass {
    pub fn boneh_shaw_fair() -> Self {
        Self { kind: ClassKind::BonehShaw, fair: true }
    }

    pub fn boneh_shaw() -> Self {
        Self { kind: ClassKind::BonehShaw, fair: false }
    }

    pub fn explicit(channels: Vec<ChannelSpec>, fair: bool) -> Self {
        Self { kind: ClassKind::Explicit { channels }, fair }
    }

    /// Tag attached to channels returned from this class.
    pub fn channel_class(&self) -> ChannelClass {
        match &self.kind {
            ClassKind::BonehShaw => ChannelClass::BonehShaw,
            ClassKind::Explicit { .. } => ChannelClass::Explicit,
            ClassKind::Distortion { estimator, d2, d2_max } => {
                ChannelClass::Distortion { estimator: estimator.clone(), d2: d2.clone(), d2_max: *d2_max }
            }
        }
    }
}

/// Payoff of the game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `(1/K) I(X_K; Y | S, W)`.
    DetectOne,
    /// `min_A (1/|A|) I(X_A; Y | S, X_{K∖A}, W)`.
    DetectAll,
    /// `I(X_1; Y | W)`.
    Simple,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::DetectOne => "detect_one",
            Objective::DetectAll => "detect_all",
            Objective::Simple => "simple",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub restarts: usize,
    /// Lattice resolution of the seeding grid (points are multiples of `1/grid`).
    pub grid: usize,
    /// Largest number of grid points evaluated before falling back to a tied subspace.
    pub grid_budget: usize,
    pub fd_step: f64,
    pub max_ascent_iters: usize,
    pub inner_tol: f64,
    pub inner_max_iters: usize,
    /// Restart values further apart than this flag a nonconcave payoff.
    pub concavity_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            grid: 16,
            grid_budget: 2000,
            fd_step: 1e-4,
            max_ascent_iters: 200,
            inner_tol: 1e-8,
            inner_max_iters: 10_000,
            concavity_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameProblem {
    pub k: usize,
    #[serde(default = "one")]
    pub s_alphabet: usize,
    pub x_alphabet: usize,
    pub y_alphabet: usize,
    #[serde(default = "one")]
    pub l: usize,
    /// Host law; absent means a degenerate host with `|S| = 1`.
    #[serde(default)]
    pub p_s: Option<Vec<f64>>,
    /// Embedding distortion `d1[s][x]`.
    #[serde(default)]
    pub d1: Option<Vec<f64>>,
    #[serde(default)]
    pub d1_max: Option<f64>,
    pub class: FeasibleClass,
    pub objective: Objective,
    #[serde(default)]
    pub options: SolverOptions,
}

fn one() -> usize {
    1
}

impl GameProblem {
    /// Binary Boneh–Shaw game without host, fair class.
    pub fn boneh_shaw_binary(k: usize, l: usize, objective: Objective) -> Self {
        Self {
            k,
            s_alphabet: 1,
            x_alphabet: 2,
            y_alphabet: 2,
            l,
            p_s: None,
            d1: None,
            d1_max: None,
            class: FeasibleClass::boneh_shaw_fair(),
            objective,
            options: SolverOptions::default(),
        }
    }

    pub fn with_objective(&self, objective: Objective) -> Self {
        Self { objective, ..self.clone() }
    }

    pub fn with_l(&self, l: usize) -> Self {
        Self { l, ..self.clone() }
    }

    pub fn inputs(&self) -> usize {
        self.x_alphabet.pow(self.k as u32)
    }

    pub fn cells(&self) -> usize {
        self.s_alphabet * self.l
    }

    pub fn host_law(&self) -> Vec<f64> {
        match &self.p_s {
            Some(p) => p.clone(),
            None => vec![1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Empty("coalition"));
        }
        if self.l == 0 {
            return Err(Error::Config("L must be at least 1".into()));
        }
        for (name, v) in [("S", self.s_alphabet), ("X", self.x_alphabet), ("Y", self.y_alphabet)] {
            if v == 0 || v > 256 {
                return Err(Error::Config(format!("alphabet {name} has size {v}")));
            }
        }
        let size = self
            .x_alphabet
            .checked_pow(self.k as u32)
            .and_then(|v| v.checked_mul(self.y_alphabet))
            .and_then(|v| v.checked_mul(self.cells()))
            .unwrap_or(usize::MAX);
        if size > GAME_CAP {
            return Err(Error::BudgetExceeded { needed: size as u128, cap: GAME_CAP as u128 });
        }
        if self.class.fair && self.k > MAX_PERM_K {
            return Err(Error::Config(format!("fair classes need K <= {MAX_PERM_K}")));
        }
        match &self.p_s {
            Some(p) => {
                if p.len() != self.s_alphabet {
                    return Err(Error::ShapeMismatch(format!("host law has {} entries", p.len())));
                }
                validate_pmf(p)?;
            }
            None if self.s_alphabet != 1 => {
                return Err(Error::Config("a host alphabet larger than 1 needs p_s".into()));
            }
            None => {}
        }
        match (&self.d1, self.d1_max) {
            (Some(d), Some(m)) => {
                if d.len() != self.s_alphabet * self.x_alphabet {
                    return Err(Error::ShapeMismatch(format!("d1 table has {} entries", d.len())));
                }
                if !(m >= 0.0) || d.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::Config("distortion values must be finite and nonnegative".into()));
                }
                let p_s = self.host_law();
                let least: f64 = (0..self.s_alphabet)
                    .map(|s| {
                        p_s[s] * (0..self.x_alphabet).map(|x| d[s * self.x_alphabet + x]).fold(f64::INFINITY, f64::min)
                    })
                    .sum();
                if least > m + 1e-12 {
                    return Err(Error::Infeasible(format!("no encoder meets D1 = {m}")));
                }
            }
            (None, None) => {}
            _ => return Err(Error::Config("d1 and d1_max must be given together".into())),
        }
        match &self.class.kind {
            ClassKind::BonehShaw => {
                if self.y_alphabet < self.x_alphabet {
                    return Err(Error::Config("the marking assumption needs |Y| >= |X|".into()));
                }
            }
            ClassKind::Explicit { channels } => {
                if channels.is_empty() {
                    return Err(Error::Infeasible("explicit channel list is empty".into()));
                }
                for ch in channels {
                    if ch.k != self.k || ch.x_alphabet != self.x_alphabet || ch.y_alphabet != self.y_alphabet {
                        return Err(Error::ShapeMismatch("explicit channel shape disagrees with the game".into()));
                    }
                }
            }
            ClassKind::Distortion { estimator, d2, d2_max } => {
                estimator.validate()?;
                if estimator.k != self.k || estimator.x_alphabet != self.x_alphabet {
                    return Err(Error::ShapeMismatch("estimator shape disagrees with the game".into()));
                }
                if d2.len() != estimator.s_alphabet * self.y_alphabet {
                    return Err(Error::ShapeMismatch(format!("d2 table has {} entries", d2.len())));
                }
                if !(d2_max.is_finite() && *d2_max >= 0.0) {
                    return Err(Error::Config("d2_max must be finite and nonnegative".into()));
                }
            }
        }
        Ok(())
    }

    /// Explicit channels, symmetrized when the class is fair.
    pub(crate) fn hull_vertices(&self) -> Result<Vec<Vec<f64>>> {
        let ClassKind::Explicit { channels } = &self.class.kind else {
            return Ok(Vec::new());
        };
        let mut out: Vec<Vec<f64>> = Vec::new();
        for ch in channels {
            let table = if self.class.fair { permutation_average(ch)?.table } else { ch.table.clone() };
            if !out.contains(&table) {
                out.push(table);
            }
        }
        Ok(out)
    }
}

/// Encoder law `p_W · Π_k p_{X_k|SW}` with identical factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputLaw {
    pub p_w: Vec<f64>,
    /// Flat `[s][w][x]`.
    pub p_x_given_sw: Vec<f64>,
}

impl InputLaw {
    pub fn uniform(problem: &GameProblem) -> Self {
        let q = problem.x_alphabet;
        Self { p_w: vec![1.0 / problem.l as f64; problem.l], p_x_given_sw: vec![1.0 / q as f64; problem.cells() * q] }
    }

    /// Same law for every `(s, w)` cell, uniform time sharing.
    pub fn tied(problem: &GameProblem, p_x: &[f64]) -> Self {
        Self { p_w: vec![1.0 / problem.l as f64; problem.l], p_x_given_sw: p_x.repeat(problem.cells()) }
    }

    pub fn x_law(&self, l: usize, x_alphabet: usize, s: usize, w: usize) -> &[f64] {
        let at = (s * l + w) * x_alphabet;
        &self.p_x_given_sw[at..at + x_alphabet]
    }

    pub fn validate(&self, problem: &GameProblem) -> Result<()> {
        let q = problem.x_alphabet;
        if self.p_w.len() != problem.l {
            return Err(Error::ShapeMismatch(format!("p_w has {} entries, expected {}", self.p_w.len(), problem.l)));
        }
        if self.p_x_given_sw.len() != problem.cells() * q {
            return Err(Error::ShapeMismatch(format!(
                "p_x_given_sw has {} entries, expected {}",
                self.p_x_given_sw.len(),
                problem.cells() * q
            )));
        }
        validate_pmf(&self.p_w)?;
        for row in self.p_x_given_sw.chunks(q) {
            validate_pmf(row)?;
        }
        if let Some(excess) = self.distortion_excess(problem) {
            if excess > 1e-9 {
                return Err(Error::Infeasible(format!("embedding distortion exceeds D1 by {excess}")));
            }
        }
        Ok(())
    }

    /// `E d1(S, X) − D1`, if an embedding constraint is present.
    pub fn distortion_excess(&self, problem: &GameProblem) -> Option<f64> {
        let (d1, d1_max) = (problem.d1.as_ref()?, problem.d1_max?);
        let q = problem.x_alphabet;
        let p_s = problem.host_law();
        let mut total = 0.0;
        for s in 0..problem.s_alphabet {
            for w in 0..problem.l {
                let law = self.x_law(problem.l, q, s, w);
                let e: f64 = (0..q).map(|x| law[x] * d1[s * q + x]).sum();
                total += p_s[s] * self.p_w[w] * e;
            }
        }
        Some(total - d1_max)
    }

    /// `P(x_K) = Σ_{s,w} p_S p_W Π_k p(x_k|s,w)`.
    pub fn coalition_law(&self, problem: &GameProblem) -> Vec<f64> {
        let mut out = vec![0.0; problem.inputs()];
        for (_, weight, q) in cell_laws(problem, self) {
            for (i, o) in out.iter_mut().enumerate() {
                *o += weight * product_prob(i, problem.k, &q);
            }
        }
        out
    }

    /// Flattened parameter vector `(p_W, p_{X|SW})`.
    pub fn to_params(&self) -> Vec<f64> {
        let mut v = self.p_w.clone();
        v.extend_from_slice(&self.p_x_given_sw);
        v
    }

    pub fn from_params(problem: &GameProblem, v: &[f64]) -> Self {
        Self { p_w: v[..problem.l].to_vec(), p_x_given_sw: v[problem.l..].to_vec() }
    }

    /// Same law with one more time-sharing symbol of zero weight.
    pub fn extended(&self, problem: &GameProblem) -> Self {
        let q = problem.x_alphabet;
        let l = problem.l;
        let mut p_w = self.p_w.clone();
        p_w.push(0.0);
        let mut p_x = Vec::with_capacity(problem.s_alphabet * (l + 1) * q);
        for s in 0..problem.s_alphabet {
            for w in 0..l {
                p_x.extend_from_slice(self.x_law(l, q, s, w));
            }
            p_x.extend_from_slice(self.x_law(l, q, s, l - 1));
        }
        Self { p_w, p_x_given_sw: p_x }
    }
}

/// `(cell index s·L + w, p_S(s) p_W(w), p_{X|SW}(·|s,w))` for every cell.
pub(crate) fn cell_laws(problem: &GameProblem, law: &InputLaw) -> Vec<(usize, f64, Vec<f64>)> {
    let p_s = problem.host_law();
    let q = problem.x_alphabet;
    let mut out = Vec::with_capacity(problem.cells());
    for s in 0..problem.s_alphabet {
        for w in 0..problem.l {
            out.push((s * problem.l + w, p_s[s] * law.p_w[w], law.x_law(problem.l, q, s, w).to_vec()));
        }
    }
    out
}

/// `Π_k q(x_k)` for the input tuple with flat index `i`.
pub(crate) fn product_prob(mut i: usize, k: usize, q: &[f64]) -> f64 {
    let n = q.len();
    let mut p = 1.0;
    for _ in 0..k {
        p *= q[i % n];
        i /= n;
    }
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub restarts: usize,
    /// Final payoff reached by each restart, in start order.
    pub restart_values: Vec<f64>,
    pub inner_iterations: usize,
    /// Frank–Wolfe linearization gap at the reported channel.
    pub gap: f64,
    /// Norm of the projected finite-difference gradient at the reported law.
    pub stationarity: f64,
    /// Restarts ended at distinct local maxima.
    pub nonconcave: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSolution {
    pub value: f64,
    pub input_law: InputLaw,
    pub worst_channel: ChannelSpec,
    pub objective: Objective,
    pub l: usize,
    pub diagnostics: Diagnostics,
}

impl GameSolution {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn problem_round_trips_through_json() {
        let p = GameProblem::boneh_shaw_binary(2, 1, Objective::DetectOne);
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.contains("\"kind\":\"boneh_shaw\""));
        let back: GameProblem = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn validation_rejects_bad_shapes() {
        let mut p = GameProblem::boneh_shaw_binary(2, 1, Objective::DetectOne);
        p.y_alphabet = 1;
        assert!(p.validate().is_err());
        let mut p = GameProblem::boneh_shaw_binary(2, 0, Objective::DetectOne);
        assert!(p.validate().is_err());
        p.l = 1;
        p.s_alphabet = 2;
        assert!(p.validate().is_err());
        let p = GameProblem::boneh_shaw_binary(40, 1, Objective::DetectOne);
        assert!(matches!(p.validate(), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn extension_keeps_the_coalition_law() {
        let p = GameProblem::boneh_shaw_binary(2, 2, Objective::DetectOne);
        let law = InputLaw { p_w: vec![0.3, 0.7], p_x_given_sw: vec![0.2, 0.8, 0.6, 0.4] };
        let ext = law.extended(&p);
        let before = law.coalition_law(&p);
        let after = ext.coalition_law(&p.with_l(3));
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
