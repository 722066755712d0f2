//! Collusion channels, attack generators and feasibility validators.
//!
//! Channel tables are dense conditional p.m.f.s `p(y | x_1..x_K)` stored
//! row-major with `x_1` most significant and `y` last.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::Registry;
use crate::types::{joint_type, Alphabet, JointType, Sequence};

/// Largest dense table `|Y|·|X|^K` accepted.
pub const MAX_TABLE: usize = 10_000_000;
/// Largest coalition for which permutations are enumerated.
pub const MAX_PERM_K: usize = 8;

const ROW_TOL: f64 = 1e-12;

/// Coalition estimate `f: X^K → S` used by the distortion class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimator {
    pub k: usize,
    pub x_alphabet: usize,
    pub s_alphabet: usize,
    /// `map[x_1..x_K]`, row-major.
    pub map: Vec<u8>,
}

impl Estimator {
    /// Majority vote with ties broken toward the smallest symbol.
    pub fn majority(k: usize, q: usize) -> Result<Self> {
        let size = table_len(k, q, 1)?;
        let map = (0..size)
            .map(|i| {
                let mut hist = vec![0usize; q];
                for x in digits(i, k, q) {
                    hist[x] += 1;
                }
                let best = *hist.iter().max().unwrap();
                hist.iter().position(|&h| h == best).unwrap() as u8
            })
            .collect();
        Ok(Self { k, x_alphabet: q, s_alphabet: q, map })
    }

    pub fn validate(&self) -> Result<()> {
        let size = table_len(self.k, self.x_alphabet, 1)?;
        if self.map.len() != size {
            return Err(Error::ShapeMismatch(format!("estimator has {} entries, expected {size}", self.map.len())));
        }
        if self.map.iter().any(|&s| s as usize >= self.s_alphabet) {
            return Err(Error::InvalidChannel("estimator output outside S".into()));
        }
        for i in 0..size {
            for j in adjacent_swaps(i, self.k, self.x_alphabet) {
                if self.map[i] != self.map[j] {
                    return Err(Error::InvalidChannel("estimator is not permutation-invariant".into()));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, inputs: &[u8]) -> u8 {
        self.map[encode(inputs, self.x_alphabet)]
    }
}

/// Feasible-class descriptor carried by a channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelClass {
    Explicit,
    BonehShaw,
    Distortion {
        estimator: Estimator,
        /// `d2[s][y]`, row-major.
        d2: Vec<f64>,
        d2_max: f64,
    },
    Interleaving,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChannel")]
pub struct ChannelSpec {
    pub k: usize,
    pub x_alphabet: usize,
    pub y_alphabet: usize,
    pub table: Vec<f64>,
    pub class: ChannelClass,
}

#[derive(Deserialize)]
struct RawChannel {
    k: usize,
    x_alphabet: usize,
    y_alphabet: usize,
    table: Vec<f64>,
    class: ChannelClass,
}

impl TryFrom<RawChannel> for ChannelSpec {
    type Error = Error;

    fn try_from(r: RawChannel) -> Result<Self> {
        ChannelSpec::new(r.k, r.x_alphabet, r.y_alphabet, r.table, r.class)
    }
}

fn table_len(k: usize, q: usize, y: usize) -> Result<usize> {
    let mut n = y;
    for _ in 0..k {
        n = n
            .checked_mul(q)
            .filter(|&v| v <= MAX_TABLE)
            .ok_or_else(|| Error::ShapeMismatch(format!("channel table {y}·{q}^{k} exceeds {MAX_TABLE} entries")))?;
    }
    if n > MAX_TABLE {
        return Err(Error::ShapeMismatch(format!("channel table exceeds {MAX_TABLE} entries")));
    }
    Ok(n)
}

/// Base-`q` digits of an input index, most significant first.
pub fn digits(mut index: usize, k: usize, q: usize) -> Vec<usize> {
    let mut out = vec![0; k];
    for slot in out.iter_mut().rev() {
        *slot = index % q;
        index /= q;
    }
    out
}

/// Input index of a symbol tuple.
pub fn encode(inputs: &[u8], q: usize) -> usize {
    inputs.iter().fold(0, |acc, &x| acc * q + x as usize)
}

fn encode_usize(inputs: &[usize], q: usize) -> usize {
    inputs.iter().fold(0, |acc, &x| acc * q + x)
}

/// Indices reachable from `index` by swapping two neighbouring colluders.
fn adjacent_swaps(index: usize, k: usize, q: usize) -> impl Iterator<Item = usize> {
    let d = digits(index, k, q);
    (0..k.saturating_sub(1)).map(move |i| {
        let mut e = d.clone();
        e.swap(i, i + 1);
        encode_usize(&e, q)
    })
}

/// All permutations of `0..k` in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..k).collect();
    loop {
        out.push(p.clone());
        let Some(i) = (1..k).rev().find(|&i| p[i - 1] < p[i]) else {
            break;
        };
        let j = (i..k).rev().find(|&j| p[j] > p[i - 1]).unwrap();
        p.swap(i - 1, j);
        p[i..].reverse();
    }
    out
}

impl ChannelSpec {
    pub fn new(k: usize, x_alphabet: usize, y_alphabet: usize, table: Vec<f64>, class: ChannelClass) -> Result<Self> {
        if k == 0 {
            return Err(Error::Empty("coalition"));
        }
        Alphabet::new(x_alphabet)?;
        Alphabet::new(y_alphabet)?;
        let len = table_len(k, x_alphabet, y_alphabet)?;
        if table.len() != len {
            return Err(Error::ShapeMismatch(format!("channel table has {} entries, expected {len}", table.len())));
        }
        let ch = Self { k, x_alphabet, y_alphabet, table, class };
        ch.validate()?;
        Ok(ch)
    }

    pub fn inputs(&self) -> usize {
        self.table.len() / self.y_alphabet
    }

    pub fn row(&self, input: usize) -> &[f64] {
        &self.table[input * self.y_alphabet..(input + 1) * self.y_alphabet]
    }

    pub fn prob(&self, inputs: &[u8], y: u8) -> f64 {
        self.table[encode(inputs, self.x_alphabet) * self.y_alphabet + y as usize]
    }

    fn validate(&self) -> Result<()> {
        for i in 0..self.inputs() {
            let row = self.row(i);
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidChannel(format!("row {i} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL * self.y_alphabet as f64 {
                return Err(Error::InvalidChannel(format!("row {i} sums to {sum}")));
            }
        }
        match &self.class {
            ChannelClass::Explicit => {}
            ChannelClass::BonehShaw => {
                if !self.satisfies_marking() {
                    return Err(Error::InvalidChannel("Boneh–Shaw channel violates the marking assumption".into()));
                }
            }
            ChannelClass::Interleaving => {
                let reference = interleaving_table(self.k, self.x_alphabet)?;
                if self.y_alphabet != self.x_alphabet
                    || self.table.iter().zip(&reference).any(|(a, b)| (a - b).abs() > ROW_TOL)
                {
                    return Err(Error::InvalidChannel("table is not the interleaving channel".into()));
                }
            }
            ChannelClass::Distortion { estimator, d2, .. } => {
                estimator.validate()?;
                if estimator.k != self.k || estimator.x_alphabet != self.x_alphabet {
                    return Err(Error::ShapeMismatch("estimator shape disagrees with channel".into()));
                }
                if d2.len() != estimator.s_alphabet * self.y_alphabet {
                    return Err(Error::ShapeMismatch(format!("d2 table has {} entries", d2.len())));
                }
            }
        }
        Ok(())
    }

    /// `p(y = x | x, …, x) = 1` for every `x`.
    pub fn satisfies_marking(&self) -> bool {
        if self.y_alphabet < self.x_alphabet {
            return false;
        }
        (0..self.x_alphabet).all(|x| {
            let input = encode_usize(&vec![x; self.k], self.x_alphabet);
            (self.row(input)[x] - 1.0).abs() <= ROW_TOL
        })
    }

    /// `p(y|x_K) = (1/K) Σ_k 1{y = x_k}`.
    pub fn interleaving(k: usize, q: usize) -> Result<Self> {
        let table = interleaving_table(k, q)?;
        Self::new(k, q, q, table, ChannelClass::Interleaving)
    }

    pub fn identity(q: usize) -> Result<Self> {
        Self::interleaving(1, q)
    }

    /// The pirate copy equals the first colluder's copy.
    pub fn first_colluder(k: usize, q: usize) -> Result<Self> {
        let len = table_len(k, q, q)?;
        let mut table = vec![0.0; len];
        for i in 0..len / q {
            table[i * q + digits(i, k, q)[0]] = 1.0;
        }
        Self::new(k, q, q, table, ChannelClass::BonehShaw)
    }

    /// Most frequent colluder symbol, ties split uniformly.
    pub fn majority(k: usize, q: usize) -> Result<Self> {
        let len = table_len(k, q, q)?;
        let mut table = vec![0.0; len];
        for i in 0..len / q {
            let mut hist = vec![0usize; q];
            for x in digits(i, k, q) {
                hist[x] += 1;
            }
            let best = *hist.iter().max().unwrap();
            let ties = hist.iter().filter(|&&h| h == best).count() as f64;
            for (y, &h) in hist.iter().enumerate() {
                if h == best {
                    table[i * q + y] = 1.0 / ties;
                }
            }
        }
        Self::new(k, q, q, table, ChannelClass::BonehShaw)
    }

    /// Expected distortion `E d2(f(X_K), Y)` under the product input law `p_x^K`
    /// (distortion-tagged channels only).
    pub fn expected_distortion(&self, p_x: &[f64]) -> Result<(f64, bool)> {
        let ChannelClass::Distortion { estimator, d2, d2_max } = &self.class else {
            return Err(Error::Inapplicable("channel is not distortion-tagged".into()));
        };
        if p_x.len() != self.x_alphabet {
            return Err(Error::ShapeMismatch("input law has the wrong size".into()));
        }
        let mut total = 0.0;
        for i in 0..self.inputs() {
            let d = digits(i, self.k, self.x_alphabet);
            let w: f64 = d.iter().map(|&x| p_x[x]).product();
            if w == 0.0 {
                continue;
            }
            let s = estimator.map[i] as usize;
            for (y, &p) in self.row(i).iter().enumerate() {
                total += w * p * d2[s * self.y_alphabet + y];
            }
        }
        Ok((total, total <= d2_max + 1e-12))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn interleaving_table(k: usize, q: usize) -> Result<Vec<f64>> {
    let len = table_len(k, q, q)?;
    let mut table = vec![0.0; len];
    for i in 0..len / q {
        for x in digits(i, k, q) {
            table[i * q + x] += 1.0 / k as f64;
        }
    }
    Ok(table)
}

/// `(1/K!) Σ_π p(y | x_π(1) … x_π(K))`.
pub fn permutation_average(ch: &ChannelSpec) -> Result<ChannelSpec> {
    if ch.k > MAX_PERM_K {
        return Err(Error::Config(format!("permutation averaging needs K <= {MAX_PERM_K}")));
    }
    let perms = permutations(ch.k);
    let q = ch.x_alphabet;
    let ny = ch.y_alphabet;
    let mut table = vec![0.0; ch.table.len()];
    let weight = 1.0 / perms.len() as f64;
    for i in 0..ch.inputs() {
        let d = digits(i, ch.k, q);
        let out = &mut table[i * ny..(i + 1) * ny];
        for p in &perms {
            let permuted: Vec<usize> = p.iter().map(|&j| d[j]).collect();
            let src = ch.row(encode_usize(&permuted, q));
            for (o, &v) in out.iter_mut().zip(src) {
                *o += weight * v;
            }
        }
    }
    ChannelSpec::new(ch.k, q, ny, table, ch.class.clone())
}

/// Table invariance under every reordering of the colluders.
pub fn is_permutation_invariant(ch: &ChannelSpec) -> bool {
    let ny = ch.y_alphabet;
    (0..ch.inputs()).all(|i| {
        adjacent_swaps(i, ch.k, ch.x_alphabet)
            .all(|j| ch.row(i).iter().zip(ch.row(j)).all(|(a, b)| (a - b).abs() <= 1e-12))
    }) && ny > 0
}

fn check_coalition(x: &[&Sequence]) -> Result<usize> {
    let first = x.first().ok_or(Error::Empty("coalition"))?;
    for s in x {
        if s.len() != first.len() {
            return Err(Error::LengthMismatch { expected: first.len(), found: s.len() });
        }
        if s.alphabet() != first.alphabet() {
            return Err(Error::ShapeMismatch("colluder alphabets differ".into()));
        }
    }
    Ok(first.len())
}

/// Conditional type of `y` given the coalition: the joint type over `(x_1, …, x_K, y)`.
pub fn conditional_type(x: &[&Sequence], y: &Sequence) -> Result<JointType> {
    let mut all: Vec<&Sequence> = x.to_vec();
    all.push(y);
    joint_type(&all)
}

/// The realized conditional type is invariant under colluder permutations
/// on every pair of observed input tuples that are permutations of each other.
pub fn is_first_order_fair(x: &[&Sequence], y: &Sequence) -> Result<bool> {
    let jt = conditional_type(x, y)?;
    let k = x.len();
    let q = x[0].alphabet().size();
    let ny = y.alphabet().size();
    let counts = jt.counts();
    let inputs = counts.len() / ny;
    let totals: Vec<u64> = (0..inputs).map(|i| counts[i * ny..(i + 1) * ny].iter().sum()).collect();
    let mut groups: std::collections::BTreeMap<Vec<usize>, Vec<usize>> = Default::default();
    for (i, &n) in totals.iter().enumerate() {
        if n > 0 {
            let mut d = digits(i, k, q);
            d.sort_unstable();
            groups.entry(d).or_default().push(i);
        }
    }
    for members in groups.values() {
        let a = members[0];
        for &b in &members[1..] {
            for y in 0..ny {
                let lhs = counts[a * ny + y] as u128 * totals[b] as u128;
                let rhs = counts[b * ny + y] as u128 * totals[a] as u128;
                if lhs != rhs {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// True iff `y_t = x_{1,t}` wherever all colluders agree.
pub fn check_marking(x: &[&Sequence], y: &Sequence) -> Result<bool> {
    let n = check_coalition(x)?;
    if y.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: y.len() });
    }
    Ok(marking_violations(x, y) == 0)
}

/// Number of positions where all colluders agree but `y` differs.
pub fn marking_violations(x: &[&Sequence], y: &Sequence) -> usize {
    let ys = y.symbols();
    (0..y.len())
        .filter(|&t| {
            let a = x[0].symbols()[t];
            x.iter().all(|s| s.symbols()[t] == a) && ys[t] != a
        })
        .count()
}

/// Almost-sure distortion `(1/N) Σ d2(f(x_{K,t}), y_t)` against `d2_max`.
pub fn check_distortion_attack(
    x: &[&Sequence],
    y: &Sequence,
    f: &Estimator,
    d2: &[f64],
    d2_max: f64,
) -> Result<(f64, bool)> {
    f.validate()?;
    let n = check_coalition(x)?;
    if y.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: y.len() });
    }
    if x.len() != f.k {
        return Err(Error::ShapeMismatch(format!("estimator expects K = {}", f.k)));
    }
    let ny = y.alphabet().size();
    if d2.len() != f.s_alphabet * ny {
        return Err(Error::ShapeMismatch(format!("d2 table has {} entries", d2.len())));
    }
    let mut buf = vec![0u8; x.len()];
    let mut total = 0.0;
    for t in 0..n {
        for (b, s) in buf.iter_mut().zip(x) {
            *b = s.symbols()[t];
        }
        total += d2[f.eval(&buf) as usize * ny + y.symbols()[t] as usize];
    }
    let value = total / n as f64;
    Ok((value, value <= d2_max + 1e-12))
}

/// Feasibility of a realized pirate copy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub marking_ok: bool,
    pub marking_violations: usize,
    #[serde(default)]
    pub distortion: Option<f64>,
    #[serde(default)]
    pub distortion_ok: Option<bool>,
    /// Joint type over `(x_1, …, x_K, y)`.
    pub conditional_type: JointType,
}

impl FeasibilityReport {
    /// Recomputes the report from the coalition and the pirate copy.
    pub fn compute(x: &[&Sequence], y: &Sequence, class: Option<&ChannelClass>) -> Result<Self> {
        let violations = marking_violations(x, y);
        let (distortion, distortion_ok) = match class {
            Some(ChannelClass::Distortion { estimator, d2, d2_max }) => {
                let (v, ok) = check_distortion_attack(x, y, estimator, d2, *d2_max)?;
                (Some(v), Some(ok))
            }
            _ => (None, None),
        };
        Ok(Self {
            marking_ok: violations == 0,
            marking_violations: violations,
            distortion,
            distortion_ok,
            conditional_type: conditional_type(x, y)?,
        })
    }

    /// Whether the copy lies in the given class.
    pub fn feasible_for(&self, class: &ChannelClass) -> bool {
        match class {
            ChannelClass::BonehShaw | ChannelClass::Interleaving => self.marking_ok,
            ChannelClass::Distortion { .. } => self.distortion_ok.unwrap_or(false),
            ChannelClass::Explicit => true,
        }
    }

    /// Realized conditional type as CSV: `x1,..,xK,y,count,p_y_given_x`.
    pub fn to_csv(&self) -> String {
        let jt = &self.conditional_type;
        let k = jt.rank() - 1;
        let ny = jt.axes()[k];
        let mut out = String::new();
        let header: Vec<String> = (1..=k).map(|i| format!("x{i}")).collect();
        let _ = writeln!(out, "{},y,count,p_y_given_x", header.join(","));
        let counts = jt.counts();
        for i in 0..counts.len() / ny {
            let row = &counts[i * ny..(i + 1) * ny];
            let total: u64 = row.iter().sum();
            if total == 0 {
                continue;
            }
            let idx = jt.unflatten(i * ny);
            let xs: Vec<String> = idx[..k].iter().map(|v| v.to_string()).collect();
            for (y, &c) in row.iter().enumerate() {
                let _ = writeln!(out, "{},{y},{c},{:.8e}", xs.join(","), c as f64 / total as f64);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackResult {
    pub y: Sequence,
    pub feasibility: FeasibilityReport,
}

/// A collusion strategy mapping the coalition's copies to a pirate copy.
pub trait CollusionAttack: Send + Sync {
    fn name(&self) -> &str;

    /// Output alphabet for input alphabet `q`.
    fn y_alphabet(&self, q: usize) -> usize {
        q
    }

    fn forge(&self, x: &[&Sequence], rng: &mut dyn RngCore) -> Result<Sequence>;

    /// Class the attack claims to belong to, used for the feasibility report.
    fn class(&self) -> Option<&ChannelClass> {
        None
    }
}

/// Runs `attack` and attaches the feasibility report.
pub fn run_attack(attack: &dyn CollusionAttack, x: &[&Sequence], rng: &mut dyn RngCore) -> Result<AttackResult> {
    check_coalition(x)?;
    let y = attack.forge(x, rng)?;
    let feasibility = FeasibilityReport::compute(x, &y, attack.class())?;
    Ok(AttackResult { y, feasibility })
}

/// Per position, copy a uniformly chosen colluder.
pub struct Interleave;

impl CollusionAttack for Interleave {
    fn name(&self) -> &str {
        "interleave"
    }

    fn forge(&self, x: &[&Sequence], rng: &mut dyn RngCore) -> Result<Sequence> {
        let n = check_coalition(x)?;
        let k = x.len();
        let symbols = (0..n).map(|t| x[rng.gen_range(0..k)].symbols()[t]).collect();
        Sequence::new(x[0].alphabet(), symbols)
    }

    fn class(&self) -> Option<&ChannelClass> {
        Some(&ChannelClass::Interleaving)
    }
}

/// Interleaving in `K` contiguous blocks: colluder `k` supplies block `k`.
pub struct BlockInterleave;

impl CollusionAttack for BlockInterleave {
    fn name(&self) -> &str {
        "block_interleave"
    }

    fn forge(&self, x: &[&Sequence], _rng: &mut dyn RngCore) -> Result<Sequence> {
        let n = check_coalition(x)?;
        let k = x.len();
        let symbols = (0..n).map(|t| x[t * k / n].symbols()[t]).collect();
        Sequence::new(x[0].alphabet(), symbols)
    }

    fn class(&self) -> Option<&ChannelClass> {
        Some(&ChannelClass::BonehShaw)
    }
}

/// i.i.d. draws from a channel table.
pub struct Memoryless {
    channel: ChannelSpec,
    cdf: Vec<f64>,
}

impl Memoryless {
    pub fn new(channel: ChannelSpec) -> Self {
        let mut cdf = Vec::with_capacity(channel.table.len());
        for i in 0..channel.inputs() {
            let mut acc = 0.0;
            for &p in channel.row(i) {
                acc += p;
                cdf.push(acc);
            }
        }
        Self { channel, cdf }
    }

    pub fn channel(&self) -> &ChannelSpec {
        &self.channel
    }
}

impl CollusionAttack for Memoryless {
    fn name(&self) -> &str {
        "memoryless"
    }

    fn y_alphabet(&self, _q: usize) -> usize {
        self.channel.y_alphabet
    }

    fn forge(&self, x: &[&Sequence], rng: &mut dyn RngCore) -> Result<Sequence> {
        let n = check_coalition(x)?;
        let ch = &self.channel;
        if x.len() != ch.k || x[0].alphabet().size() != ch.x_alphabet {
            return Err(Error::ShapeMismatch(format!(
                "channel expects K = {} over |X| = {}, got K = {} over |X| = {}",
                ch.k,
                ch.x_alphabet,
                x.len(),
                x[0].alphabet().size()
            )));
        }
        let ny = ch.y_alphabet;
        let symbols = (0..n)
            .map(|t| {
                let input = x.iter().fold(0, |acc, s| acc * ch.x_alphabet + s.symbols()[t] as usize);
                let cdf = &self.cdf[input * ny..(input + 1) * ny];
                let row = ch.row(input);
                let u: f64 = rng.gen::<f64>() * cdf[ny - 1];
                (0..ny)
                    .find(|&y| u < cdf[y] && row[y] > 0.0)
                    .unwrap_or_else(|| row.iter().rposition(|&p| p > 0.0).unwrap_or(0)) as u8
            })
            .collect();
        Sequence::new(Alphabet::new(ny)?, symbols)
    }

    fn class(&self) -> Option<&ChannelClass> {
        Some(&self.channel.class)
    }
}

/// Runs a base attack on letter-permuted inputs and undoes the permutation,
/// making the induced channel strongly exchangeable.
pub struct Exchangeable {
    base: Box<dyn CollusionAttack>,
    name: String,
}

impl Exchangeable {
    pub fn new(base: Box<dyn CollusionAttack>) -> Self {
        let name = format!("exchangeable({})", base.name());
        Self { base, name }
    }

    pub fn forge_with(&self, x: &[&Sequence], perm: &[usize], rng: &mut dyn RngCore) -> Result<Sequence> {
        let px: Vec<Sequence> = x.iter().map(|s| s.permuted(perm)).collect::<Result<_>>()?;
        let refs: Vec<&Sequence> = px.iter().collect();
        self.base.forge(&refs, rng)?.unpermuted(perm)
    }
}

impl CollusionAttack for Exchangeable {
    fn name(&self) -> &str {
        &self.name
    }

    fn y_alphabet(&self, q: usize) -> usize {
        self.base.y_alphabet(q)
    }

    fn forge(&self, x: &[&Sequence], rng: &mut dyn RngCore) -> Result<Sequence> {
        let n = check_coalition(x)?;
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        self.forge_with(x, &perm, rng)
    }

    fn class(&self) -> Option<&ChannelClass> {
        self.base.class()
    }
}

pub fn wrap_exchangeable(base: Box<dyn CollusionAttack>) -> Box<dyn CollusionAttack> {
    Box::new(Exchangeable::new(base))
}

/// Attack selection as it appears in experiment configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    pub name: String,
    #[serde(default)]
    pub k: usize,
    #[serde(default = "two")]
    pub x_alphabet: usize,
    #[serde(default)]
    pub channel: Option<ChannelSpec>,
    #[serde(default)]
    pub exchangeable: bool,
}

fn two() -> usize {
    2
}

impl AttackConfig {
    pub fn named(name: &str, k: usize, x_alphabet: usize) -> Self {
        Self { name: name.into(), k, x_alphabet, channel: None, exchangeable: false }
    }
}

/// Built-in attacks: `interleave`, `block_interleave`, `memoryless` (needs a
/// channel), `majority`, `first_colluder`.
pub fn attack_registry() -> Registry<dyn CollusionAttack, AttackConfig> {
    let mut reg: Registry<dyn CollusionAttack, AttackConfig> = Registry::new("attack");
    reg.register("interleave", |_| Ok(Box::new(Interleave) as Box<dyn CollusionAttack>))
        .register("block_interleave", |_| Ok(Box::new(BlockInterleave) as Box<dyn CollusionAttack>))
        .register("memoryless", |c: &AttackConfig| {
            let ch =
                c.channel.clone().ok_or_else(|| Error::Config("memoryless attack needs a channel table".into()))?;
            Ok(Box::new(Memoryless::new(ch)) as Box<dyn CollusionAttack>)
        })
        .register("majority", |c: &AttackConfig| {
            Ok(Box::new(Memoryless::new(ChannelSpec::majority(c.k, c.x_alphabet)?)) as Box<dyn CollusionAttack>)
        })
        .register("first_colluder", |c: &AttackConfig| {
            Ok(Box::new(Memoryless::new(ChannelSpec::first_colluder(c.k, c.x_alphabet)?)) as Box<dyn CollusionAttack>)
        });
    reg
}

pub fn build_attack(cfg: &AttackConfig) -> Result<Box<dyn CollusionAttack>> {
    let base = attack_registry().build(&cfg.name, cfg)?;
    Ok(if cfg.exchangeable { wrap_exchangeable(base) } else { base })
}
