//! Empirical mutual-information decoders.
//!
//! The threshold decoder tests each user on its own; the MPMI decoder
//! searches coalitions for the largest penalized multivariate mutual
//! information `İ(x_K; y | s, w) − |K|(R + Δ)`, the empty set scoring 0.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{combine, prototype_frame, Codebook};
use crate::error::{Error, Result};
use crate::registry::Registry;
use crate::rng::hash_symbols;
use crate::types::{joint_type, multi_info, Sequence};

/// Scores closer than this are ties.
pub const TIE_TOL: f64 = 1e-12;
/// Slack allowed when re-deriving the significance inequalities.
pub const VERIFY_TOL: f64 = 1e-10;
pub const DEFAULT_BUDGET: u128 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Exhaustive when within budget, greedy otherwise.
    #[default]
    Auto,
    Exhaustive,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub rate: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default)]
    pub search_mode: SearchMode,
    #[serde(default = "default_budget")]
    pub budget: u128,
}

fn default_k_max() -> usize {
    4
}
fn default_budget() -> u128 {
    DEFAULT_BUDGET
}

impl DecodeConfig {
    pub fn new(rate: f64, delta: f64, k_nom: usize) -> Self {
        Self { rate, delta, k_max: 2 * k_nom, search_mode: SearchMode::Auto, budget: DEFAULT_BUDGET }
    }

    pub fn threshold(&self) -> f64 {
        self.rate + self.delta
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) || !self.rate.is_finite() {
            return Err(Error::Config("decoder needs finite R and Δ >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub users: Vec<usize>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserGuilt {
    pub user: usize,
    pub accused: bool,
    pub index: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuiltReport {
    pub coalition: f64,
    pub users: Vec<UserGuilt>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeOutcome {
    pub decoder: String,
    /// Accused users, ascending.
    pub accused: Vec<usize>,
    pub best_k: usize,
    pub best_score: f64,
    /// Threshold decoder: every user. MPMI: every singleton and the best set of each size.
    pub scores: Vec<CandidateScore>,
    #[serde(default)]
    pub guilt: Option<GuiltReport>,
    /// Exhaustive search completed.
    pub exact: bool,
    pub candidates: u128,
    pub k_max: usize,
    /// Hash of the pirate copy the outcome was computed from.
    pub input_hash: u64,
}

/// A tracing decoder.
pub trait Decoder: Send + Sync {
    fn name(&self) -> &str;
    fn decode(&self, cb: &Codebook, y: &Sequence) -> Result<DecodeOutcome>;
}

/// Sufficient statistics for scoring: conditioning cell and output per letter.
struct Scorer<'a> {
    rows: &'a [Sequence],
    cond: Vec<u8>,
    cells: usize,
    y: &'a [u8],
    qy: usize,
    qx: usize,
    n: f64,
    /// H(x_m | cond) for every user.
    h_single: Vec<f64>,
    /// Σ_c n_c log2 n_c over (cond, y) cells.
    cy_clogc: f64,
}

fn clogc(c: u64) -> f64 {
    if c == 0 {
        0.0
    } else {
        let c = c as f64;
        c * c.log2()
    }
}

fn hist_entropy_term(h: &[u64]) -> f64 {
    h.iter().map(|&c| clogc(c)).sum()
}

impl<'a> Scorer<'a> {
    fn new(rows: &'a [Sequence], cond: &Sequence, y: &'a Sequence) -> Result<Self> {
        let n = y.len();
        if cond.len() != n {
            return Err(Error::LengthMismatch { expected: cond.len(), found: n });
        }
        for r in rows {
            if r.len() != n {
                return Err(Error::LengthMismatch { expected: r.len(), found: n });
            }
        }
        let qx = rows.first().map(|r| r.alphabet().size()).unwrap_or(1);
        let cells = cond.alphabet().size();
        let qy = y.alphabet().size();
        let cond_sym = cond.symbols().to_vec();
        let mut hc = vec![0u64; cells];
        let mut hcy = vec![0u64; cells * qy];
        for (&c, &yy) in cond_sym.iter().zip(y.symbols()) {
            hc[c as usize] += 1;
            hcy[c as usize * qy + yy as usize] += 1;
        }
        let c_term = hist_entropy_term(&hc);
        let h_single = rows
            .iter()
            .map(|r| {
                let mut h = vec![0u64; cells * qx];
                for (&c, &x) in cond_sym.iter().zip(r.symbols()) {
                    h[c as usize * qx + x as usize] += 1;
                }
                ((c_term - hist_entropy_term(&h)) / n as f64).max(0.0)
            })
            .collect();
        Ok(Self {
            rows,
            cond: cond_sym,
            cells,
            y: y.symbols(),
            qy,
            qx,
            n: n as f64,
            h_single,
            cy_clogc: hist_entropy_term(&hcy),
        })
    }

    /// İ(x_set; y | cond) = Σ H(x_m|cond) − H(x_set | y, cond).
    fn multi(&self, set: &[usize]) -> f64 {
        if set.is_empty() {
            return 0.0;
        }
        let width = self.qx.pow(set.len() as u32);
        let mut h = vec![0u64; self.cells * self.qy * width];
        for t in 0..self.y.len() {
            let mut key = self.cond[t] as usize * self.qy + self.y[t] as usize;
            for &m in set {
                key = key * self.qx + self.rows[m].symbols()[t] as usize;
            }
            h[key] += 1;
        }
        let h_cond = (self.cy_clogc - hist_entropy_term(&h)) / self.n;
        let sum: f64 = set.iter().map(|&m| self.h_single[m]).sum();
        (sum - h_cond.max(0.0)).max(0.0)
    }

    fn single(&self, m: usize) -> f64 {
        self.multi(&[m])
    }
}

fn check_inputs(cb: &Codebook, y: &Sequence) -> Result<()> {
    if y.len() != cb.n() {
        return Err(Error::LengthMismatch { expected: cb.n(), found: y.len() });
    }
    Ok(())
}

/// Accuses every `m` with `I(x_m; y | w) > R + Δ`.
pub fn threshold_decode(cb: &Codebook, y: &Sequence, cfg: &DecodeConfig) -> Result<DecodeOutcome> {
    cfg.validate()?;
    check_inputs(cb, y)?;
    let (cb, y) = prototype_frame(cb, y)?;
    let scorer = Scorer::new(&cb.rows, cb.timeshare(), &y)?;
    let thr = cfg.threshold();
    let mut scores = Vec::with_capacity(cb.users());
    let mut accused = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for m in 0..cb.users() {
        let s = scorer.single(m);
        best = best.max(s);
        if s > thr {
            accused.push(m);
        }
        scores.push(CandidateScore { users: vec![m], score: s });
    }
    Ok(DecodeOutcome {
        decoder: "threshold".into(),
        best_k: accused.len(),
        accused,
        best_score: best,
        scores,
        guilt: None,
        exact: true,
        candidates: cb.users() as u128,
        k_max: 1,
        input_hash: hash_symbols(y.symbols()),
    })
}

/// Per-user scores `I(x_m; y | w)` without building a full outcome, so one
/// trial can be judged against several thresholds.
pub fn threshold_scores(cb: &Codebook, y: &Sequence) -> Result<Vec<f64>> {
    check_inputs(cb, y)?;
    let (cb, y) = prototype_frame(cb, y)?;
    let scorer = Scorer::new(&cb.rows, cb.timeshare(), &y)?;
    Ok((0..cb.users()).map(|m| scorer.single(m)).collect())
}

/// `İ(x_K; y | s, w) − |K|(R + Δ)`, zero for the empty coalition.
pub fn mpmi_score(cb: &Codebook, coalition: &[usize], y: &Sequence, cfg: &DecodeConfig) -> Result<f64> {
    check_inputs(cb, y)?;
    if coalition.len() > cfg.k_max {
        return Err(Error::Config(format!("coalition of size {} exceeds k_max = {}", coalition.len(), cfg.k_max)));
    }
    if let Some(&m) = coalition.iter().find(|&&m| m >= cb.users()) {
        return Err(Error::Config(format!("user {m} out of range")));
    }
    if coalition.is_empty() {
        return Ok(0.0);
    }
    let (cb, y) = prototype_frame(cb, y)?;
    let side = cb.side_info()?;
    let scorer = Scorer::new(&cb.rows, &side, &y)?;
    Ok(scorer.multi(coalition) - coalition.len() as f64 * cfg.threshold())
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Number of coalitions of size `0..=k_max` among `m` users.
pub fn search_size(m: usize, k_max: usize) -> u128 {
    (0..=k_max.min(m)).map(|k| binomial(m, k)).sum()
}

/// Advances `c` to the next `k`-subset of `0..m` in lexicographic order.
fn next_combination(c: &mut [usize], m: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < m - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Scores of all `k`-subsets whose smallest element is `first`, in lexicographic order.
fn scores_with_first(scorer: &Scorer, first: usize, k: usize, m: usize, thr: f64) -> Vec<f64> {
    let pool = m - first - 1;
    if pool < k - 1 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut c: Vec<usize> = (0..k - 1).collect();
    let mut set = vec![first; k];
    loop {
        for (slot, &i) in set[1..].iter_mut().zip(&c) {
            *slot = first + 1 + i;
        }
        out.push(scorer.multi(&set) - k as f64 * thr);
        if !next_combination(&mut c, pool) {
            break;
        }
    }
    out
}

/// Joint MPMI decoder.
pub fn mpmi_decode(cb: &Codebook, y: &Sequence, cfg: &DecodeConfig) -> Result<DecodeOutcome> {
    cfg.validate()?;
    check_inputs(cb, y)?;
    let m = cb.users();
    let k_max = cfg.k_max.min(m);
    let needed = search_size(m, k_max);
    let exhaustive = match cfg.search_mode {
        SearchMode::Exhaustive => {
            if needed > cfg.budget {
                return Err(Error::BudgetExceeded { needed, cap: cfg.budget });
            }
            true
        }
        SearchMode::Greedy => false,
        SearchMode::Auto => {
            if needed > cfg.budget {
                warn!("MPMI search over {needed} coalitions exceeds budget {}; using greedy search", cfg.budget);
                false
            } else {
                true
            }
        }
    };
    let (cb, y) = prototype_frame(cb, y)?;
    let side = cb.side_info()?;
    let scorer = Scorer::new(&cb.rows, &side, &y)?;
    let thr = cfg.threshold();
    let mut outcome =
        if exhaustive { exhaustive_search(&scorer, m, k_max, thr) } else { greedy_search(&scorer, m, k_max, thr) };
    outcome.k_max = cfg.k_max;
    outcome.input_hash = hash_symbols(y.symbols());
    outcome.accused.sort_unstable();
    Ok(outcome)
}

fn exhaustive_search(scorer: &Scorer, m: usize, k_max: usize, thr: f64) -> DecodeOutcome {
    // Pass 1: every score, in lexicographic order per size.
    let per_k: Vec<Vec<f64>> = (1..=k_max)
        .map(|k| {
            let chunks: Vec<Vec<f64>> = if binomial(m, k) > 2_000 {
                (0..m).into_par_iter().map(|f| scores_with_first(scorer, f, k, m, thr)).collect()
            } else {
                (0..m).map(|f| scores_with_first(scorer, f, k, m, thr)).collect()
            };
            chunks.concat()
        })
        .collect();
    let best = per_k.iter().flatten().copied().fold(0.0f64, f64::max);

    // Pass 2: among near-ties choose the largest k, then the first set in lexicographic order.
    let mut scores = Vec::new();
    let mut chosen: (usize, Vec<usize>, f64) = (0, Vec::new(), 0.0);
    for (ki, scores_k) in per_k.iter().enumerate() {
        let k = ki + 1;
        let mut set: Vec<usize> = (0..k).collect();
        let mut best_k: Option<(Vec<usize>, f64)> = None;
        for &s in scores_k {
            if k == 1 {
                scores.push(CandidateScore { users: set.clone(), score: s });
            }
            if best_k.as_ref().is_none_or(|(_, b)| s > *b) {
                best_k = Some((set.clone(), s));
            }
            if s >= best - TIE_TOL && k > chosen.0 {
                chosen = (k, set.clone(), s);
            }
            next_combination(&mut set, m);
        }
        if let (Some((users, score)), true) = (best_k, k > 1) {
            scores.push(CandidateScore { users, score });
        }
    }
    let candidates = search_size(m, k_max);
    let (best_k, accused, best_score) = if chosen.0 == 0 { (0, Vec::new(), 0.0) } else { chosen };
    DecodeOutcome {
        decoder: "mpmi".into(),
        accused,
        best_k,
        best_score,
        scores,
        guilt: None,
        exact: true,
        candidates,
        k_max,
        input_hash: 0,
    }
}

fn greedy_search(scorer: &Scorer, m: usize, k_max: usize, thr: f64) -> DecodeOutcome {
    let mut current: Vec<usize> = Vec::new();
    let mut chosen: (Vec<usize>, f64) = (Vec::new(), 0.0);
    let mut scores = Vec::new();
    let mut candidates: u128 = 1;
    for k in 1..=k_max {
        let mut step_best: Option<(Vec<usize>, f64)> = None;
        for u in 0..m {
            if current.contains(&u) {
                continue;
            }
            let mut set = current.clone();
            set.push(u);
            set.sort_unstable();
            let s = scorer.multi(&set) - k as f64 * thr;
            candidates += 1;
            if k == 1 {
                scores.push(CandidateScore { users: set.clone(), score: s });
            }
            if step_best.as_ref().is_none_or(|(_, b)| s > *b) {
                step_best = Some((set, s));
            }
        }
        let Some((set, s)) = step_best else { break };
        if k > 1 {
            scores.push(CandidateScore { users: set.clone(), score: s });
        }
        if s >= chosen.1 - TIE_TOL {
            chosen = (set.clone(), s);
        }
        current = set;
    }
    DecodeOutcome {
        decoder: "mpmi".into(),
        best_k: chosen.0.len(),
        accused: chosen.0,
        best_score: chosen.1,
        scores,
        guilt: None,
        exact: false,
        candidates,
        k_max,
        input_hash: 0,
    }
}

/// Joint type over `(s·L + w, y, x_users...)` in the prototype frame.
fn side_joint(cb: &Codebook, y: &Sequence, users: &[usize]) -> Result<crate::types::JointType> {
    let side = cb.side_info()?;
    let mut seqs: Vec<&Sequence> = vec![&side, y];
    for &m in users {
        seqs.push(&cb.rows[m]);
    }
    joint_type(&seqs)
}

/// İ(x_A; y x_B | s, w) with `A`, `B` disjoint user sets.
fn mi_given_partner(cb: &Codebook, y: &Sequence, a: &[usize], b: &[usize]) -> Result<f64> {
    let users: Vec<usize> = a.iter().chain(b).copied().collect();
    let jt = side_joint(cb, y, &users)?;
    let mut parts: Vec<Vec<usize>> = (0..a.len()).map(|i| vec![2 + i]).collect();
    let mut merged = vec![1];
    merged.extend((0..b.len()).map(|i| 2 + a.len() + i));
    parts.push(merged);
    multi_info(&jt, &parts, &[0])
}

fn check_fresh(cb: &Codebook, y: &Sequence, outcome: &DecodeOutcome) -> Result<(Codebook, Sequence)> {
    check_inputs(cb, y)?;
    let (proto, py) = prototype_frame(cb, y)?;
    if hash_symbols(py.symbols()) != outcome.input_hash {
        return Err(Error::StaleOutcome("pirate copy differs from the decoded one".into()));
    }
    if let Some(&m) = outcome.accused.iter().find(|&&m| m >= cb.users()) {
        return Err(Error::StaleOutcome(format!("accused user {m} not in codebook")));
    }
    Ok((proto, py))
}

/// Guilt indices of the coalition, each accused user and each other user.
pub fn guilt_indices(cb: &Codebook, y: &Sequence, outcome: &DecodeOutcome, cfg: &DecodeConfig) -> Result<GuiltReport> {
    let (cb, y) = check_fresh(cb, y, outcome)?;
    let rate = cfg.rate;
    let khat = &outcome.accused;
    let coalition = if khat.is_empty() {
        0.0
    } else {
        let jt = side_joint(&cb, &y, khat)?;
        let mut parts: Vec<Vec<usize>> = (0..khat.len()).map(|i| vec![2 + i]).collect();
        parts.push(vec![1]);
        multi_info(&jt, &parts, &[0])? - khat.len() as f64 * rate
    };
    if outcome.decoder == "mpmi" {
        let recomputed = coalition - khat.len() as f64 * cfg.delta;
        if (recomputed - outcome.best_score).abs() > 1e-9 {
            return Err(Error::StaleOutcome(format!(
                "recorded score {} but the accused set scores {recomputed}",
                outcome.best_score
            )));
        }
    }
    let mut users = Vec::with_capacity(cb.users());
    for m in 0..cb.users() {
        let accused = khat.binary_search(&m).is_ok();
        let index = if accused {
            let rest: Vec<usize> = khat.iter().copied().filter(|&u| u != m).collect();
            mi_given_partner(&cb, &y, &[m], &rest)? - rate
        } else {
            mi_given_partner(&cb, &y, &[m], khat)? - rate
        };
        users.push(UserGuilt { user: m, accused, index });
    }
    Ok(GuiltReport { coalition, users })
}

/// Re-derives both significance properties of an exhaustive MPMI outcome.
///
/// Property 1: every nonempty `A ⊆ K̂` has `İ(x_A; y x_{K̂∖A}|s,w) > |A|(R+Δ)`.
/// Property 2: every nonempty `A` disjoint from `K̂` with `|A| ≤ k_max − |K̂|`
/// has `İ(x_A; y x_K̂|s,w) ≤ |A|(R+Δ)`. Larger `A` are not searched by the
/// decoder and are not checked.
pub fn verify_significance(cb: &Codebook, y: &Sequence, outcome: &DecodeOutcome, cfg: &DecodeConfig) -> Result<bool> {
    if !outcome.exact || outcome.decoder != "mpmi" {
        return Err(Error::Inapplicable("significance holds only for exhaustive MPMI outcomes".into()));
    }
    let (cb, y) = check_fresh(cb, y, outcome)?;
    let thr = cfg.threshold();
    let khat = &outcome.accused;
    let k = khat.len();
    for mask in 1u64..(1u64 << k) {
        let a: Vec<usize> = (0..k).filter(|&i| mask >> i & 1 == 1).map(|i| khat[i]).collect();
        let b: Vec<usize> = (0..k).filter(|&i| mask >> i & 1 == 0).map(|i| khat[i]).collect();
        // Ties resolve toward the larger coalition, so equality is admissible here.
        if mi_given_partner(&cb, &y, &a, &b)? <= a.len() as f64 * thr - VERIFY_TOL {
            return Ok(false);
        }
    }
    let others: Vec<usize> = (0..cb.users()).filter(|m| khat.binary_search(m).is_err()).collect();
    let room = outcome.k_max.min(cb.users()).saturating_sub(k);
    for size in 1..=room.min(others.len()) {
        let mut c: Vec<usize> = (0..size).collect();
        loop {
            let a: Vec<usize> = c.iter().map(|&i| others[i]).collect();
            if mi_given_partner(&cb, &y, &a, khat)? > size as f64 * thr + VERIFY_TOL {
                return Ok(false);
            }
            if !next_combination(&mut c, others.len()) {
                break;
            }
        }
    }
    Ok(true)
}

pub struct ThresholdDecoder(pub DecodeConfig);

impl Decoder for ThresholdDecoder {
    fn name(&self) -> &str {
        "threshold"
    }
    fn decode(&self, cb: &Codebook, y: &Sequence) -> Result<DecodeOutcome> {
        threshold_decode(cb, y, &self.0)
    }
}

pub struct MpmiDecoder(pub DecodeConfig);

impl Decoder for MpmiDecoder {
    fn name(&self) -> &str {
        "mpmi"
    }
    fn decode(&self, cb: &Codebook, y: &Sequence) -> Result<DecodeOutcome> {
        let mut out = mpmi_decode(cb, y, &self.0)?;
        out.guilt = Some(guilt_indices(cb, y, &out, &self.0)?);
        Ok(out)
    }
}

pub fn decoder_registry() -> Registry<dyn Decoder, DecodeConfig> {
    let mut reg: Registry<dyn Decoder, DecodeConfig> = Registry::new("decoder");
    reg.register("threshold", |c: &DecodeConfig| Ok(Box::new(ThresholdDecoder(c.clone())) as Box<dyn Decoder>))
        .register("mpmi", |c: &DecodeConfig| Ok(Box::new(MpmiDecoder(c.clone())) as Box<dyn Decoder>));
    reg
}

/// `s·L + w` for a codebook, exposed for external oracles.
pub fn side_information(cb: &Codebook) -> Result<Sequence> {
    combine(&cb.host, cb.timeshare())
}
