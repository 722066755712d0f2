//! Exact method-of-types arithmetic.
//!
//! A [`JointType`] is the exact count tensor of one or more equal-length
//! sequences. Every information functional here (entropy, mutual
//! information, multivariate mutual information, type-class sizes) is a
//! function of those counts. All logarithms are base 2.
//!
//! Axis layout is row-major: the first axis is the most significant, so the
//! flat index of `(a_0, .., a_{k-1})` is `((a_0 * n_1 + a_1) * n_2 + ..)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest alphabet a [`Sequence`] may use (symbols are stored as `u8`).
pub const MAX_ALPHABET: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Alphabet(usize);

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 || size > MAX_ALPHABET {
            return Err(Error::InvalidAlphabet(size));
        }
        Ok(Self(size))
    }

    pub fn size(self) -> usize {
        self.0
    }
}

/// A finite sequence of symbols drawn from an [`Alphabet`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSequence", into = "RawSequence")]
pub struct Sequence {
    alphabet: Alphabet,
    symbols: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct RawSequence {
    alphabet: usize,
    symbols: Vec<u8>,
}

impl TryFrom<RawSequence> for Sequence {
    type Error = Error;

    fn try_from(raw: RawSequence) -> Result<Self> {
        Sequence::new(Alphabet::new(raw.alphabet)?, raw.symbols)
    }
}

impl From<Sequence> for RawSequence {
    fn from(s: Sequence) -> Self {
        RawSequence { alphabet: s.alphabet.size(), symbols: s.symbols }
    }
}

impl Sequence {
    pub fn new(alphabet: Alphabet, symbols: Vec<u8>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::Empty("sequence"));
        }
        if let Some(&bad) = symbols.iter().find(|&&s| s as usize >= alphabet.size()) {
            return Err(Error::SymbolOutOfRange { symbol: bad as usize, size: alphabet.size() });
        }
        Ok(Self { alphabet, symbols })
    }

    /// Convenience constructor used mostly by tests and examples.
    pub fn from_slice(alphabet_size: usize, symbols: &[u8]) -> Result<Self> {
        Self::new(Alphabet::new(alphabet_size)?, symbols.to_vec())
    }

    /// The all-`symbol` sequence of length `n`.
    pub fn constant(alphabet: Alphabet, symbol: u8, n: usize) -> Result<Self> {
        Self::new(alphabet, vec![symbol; n])
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn into_symbols(self) -> Vec<u8> {
        self.symbols
    }

    /// Returns `out[t] = self[perm[t]]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), found: perm.len() });
        }
        let symbols = perm.iter().map(|&i| self.symbols[i]).collect();
        Ok(Self { alphabet: self.alphabet, symbols })
    }

    /// Inverse of [`Sequence::permuted`]: `out[perm[t]] = self[t]`.
    pub fn unpermuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), found: perm.len() });
        }
        let mut symbols = vec![0u8; self.len()];
        for (t, &i) in perm.iter().enumerate() {
            symbols[i] = self.symbols[t];
        }
        Ok(Self { alphabet: self.alphabet, symbols })
    }
}

/// Exact joint type (count tensor) over a product of finite alphabets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointType {
    axes: Vec<usize>,
    counts: Vec<u64>,
    n: u64,
}

/// Which axes of a [`JointType`] an information functional looks at.
///
/// `entropy` reads `target | cond`; `mutual_info` reads
/// `target ; partner | cond`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InfoQuery {
    pub target: Vec<usize>,
    pub partner: Vec<usize>,
    pub cond: Vec<usize>,
}

impl InfoQuery {
    pub fn entropy(target: &[usize]) -> Self {
        Self { target: target.to_vec(), ..Self::default() }
    }

    pub fn mutual(target: &[usize], partner: &[usize]) -> Self {
        Self { target: target.to_vec(), partner: partner.to_vec(), cond: Vec::new() }
    }

    pub fn given(mut self, cond: &[usize]) -> Self {
        self.cond = cond.to_vec();
        self
    }

    fn validate(&self, rank: usize) -> Result<()> {
        if self.target.is_empty() {
            return Err(Error::InvalidAxes("empty target axis set".into()));
        }
        let mut seen = vec![false; rank];
        for &a in self.target.iter().chain(&self.partner).chain(&self.cond) {
            if a >= rank {
                return Err(Error::InvalidAxes(format!("axis {a} >= rank {rank}")));
            }
            if seen[a] {
                return Err(Error::InvalidAxes(format!("axis {a} used twice")));
            }
            seen[a] = true;
        }
        Ok(())
    }
}

fn strides(axes: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; axes.len()];
    for i in (0..axes.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * axes[i + 1];
    }
    s
}

/// Σ c·log2 c over nonzero counts.
fn sum_c_log_c(counts: impl Iterator<Item = u64>) -> f64 {
    counts
        .filter(|&c| c > 1)
        .map(|c| {
            let c = c as f64;
            c * c.log2()
        })
        .sum()
}

impl JointType {
    /// Joint type of equal-length sequences; axis `i` is `seqs[i]`.
    pub fn from_sequences(seqs: &[&Sequence]) -> Result<Self> {
        let first = seqs.first().ok_or(Error::Empty("sequence list"))?;
        let n = first.len();
        for s in seqs {
            if s.len() != n {
                return Err(Error::LengthMismatch { expected: n, found: s.len() });
            }
        }
        let axes: Vec<usize> = seqs.iter().map(|s| s.alphabet().size()).collect();
        let size = checked_volume(&axes)?;
        let st = strides(&axes);
        let mut counts = vec![0u64; size];
        for t in 0..n {
            let mut idx = 0usize;
            for (s, &w) in seqs.iter().zip(&st) {
                idx += s.symbols[t] as usize * w;
            }
            counts[idx] += 1;
        }
        Ok(Self { axes, counts, n: n as u64 })
    }

    /// Builds a type from an explicit count tensor.
    pub fn from_counts(axes: Vec<usize>, counts: Vec<u64>) -> Result<Self> {
        if axes.is_empty() || axes.contains(&0) {
            return Err(Error::InvalidAxes(format!("bad axis sizes {axes:?}")));
        }
        let size = checked_volume(&axes)?;
        if counts.len() != size {
            return Err(Error::ShapeMismatch(format!("expected {size} counts, found {}", counts.len())));
        }
        let n = counts.iter().sum::<u64>();
        if n == 0 {
            return Err(Error::Empty("joint type with zero total count"));
        }
        Ok(Self { axes, counts, n })
    }

    pub fn axes(&self) -> &[usize] {
        &self.axes
    }

    pub fn rank(&self) -> usize {
        self.axes.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.n
    }

    pub fn count(&self, index: &[usize]) -> u64 {
        self.counts[self.flat_index(index)]
    }

    pub fn prob(&self, index: &[usize]) -> f64 {
        self.count(index) as f64 / self.n as f64
    }

    pub fn flat_index(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.axes.len());
        index.iter().zip(strides(&self.axes)).map(|(&i, s)| i * s).sum()
    }

    /// Decomposes a flat index into per-axis coordinates.
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.axes.len()];
        for i in (0..self.axes.len()).rev() {
            out[i] = flat % self.axes[i];
            flat /= self.axes[i];
        }
        out
    }

    /// Probabilities `count / N` in flat order.
    pub fn pmf(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Marginal type over `keep`, with axes in the order given.
    pub fn marginal(&self, keep: &[usize]) -> Result<JointType> {
        for &a in keep {
            if a >= self.rank() {
                return Err(Error::InvalidAxes(format!("axis {a} >= rank {}", self.rank())));
            }
        }
        if keep.is_empty() {
            return Ok(JointType { axes: vec![1], counts: vec![self.n], n: self.n });
        }
        let out_axes: Vec<usize> = keep.iter().map(|&a| self.axes[a]).collect();
        let out_strides = strides(&out_axes);
        let mut counts = vec![0u64; out_axes.iter().product()];
        let rank = self.rank();
        let mut coord = vec![0usize; rank];
        for &c in &self.counts {
            if c > 0 {
                let idx: usize = keep.iter().zip(&out_strides).map(|(&a, &s)| coord[a] * s).sum();
                counts[idx] += c;
            }
            // odometer increment, last axis fastest
            for i in (0..rank).rev() {
                coord[i] += 1;
                if coord[i] < self.axes[i] {
                    break;
                }
                coord[i] = 0;
            }
        }
        Ok(JointType { axes: out_axes, counts, n: self.n })
    }

    /// Joint entropy H(axes) in bits; the empty set has entropy 0.
    pub fn joint_entropy(&self, axes: &[usize]) -> Result<f64> {
        if axes.is_empty() {
            return Ok(0.0);
        }
        // Canonical axis order keeps the value independent of how the set is listed.
        let mut sorted = axes.to_vec();
        sorted.sort_unstable();
        let m = self.marginal(&sorted)?;
        let n = self.n as f64;
        let h = n.log2() - sum_c_log_c(m.counts.iter().copied()) / n;
        Ok(h.max(0.0))
    }

    /// Per-cell compositions of `target` given `cond`: map cond cell -> counts
    /// over the target product alphabet. Cells absent from the data have zero rows.
    pub fn conditional_counts(&self, target: &[usize], cond: &[usize]) -> Result<(usize, usize, Vec<u64>)> {
        let mut keep = cond.to_vec();
        keep.extend_from_slice(target);
        let m = self.marginal(&keep)?;
        let cells: usize = cond.iter().map(|&a| self.axes[a]).product();
        let width: usize = target.iter().map(|&a| self.axes[a]).product();
        Ok((cells, width, m.counts))
    }
}

fn checked_volume(axes: &[usize]) -> Result<usize> {
    axes.iter()
        .try_fold(1usize, |acc, &a| acc.checked_mul(a))
        .ok_or_else(|| Error::InvalidAxes(format!("product alphabet {axes:?} overflows")))
}

/// Joint type of a list of sequences.
pub fn joint_type(seqs: &[&Sequence]) -> Result<JointType> {
    JointType::from_sequences(seqs)
}

/// H(target | cond) in bits. `q.partner` must be empty.
pub fn entropy(jt: &JointType, q: &InfoQuery) -> Result<f64> {
    q.validate(jt.rank())?;
    if !q.partner.is_empty() {
        return Err(Error::InvalidAxes("entropy query with a partner set".into()));
    }
    let mut all = q.target.clone();
    all.extend_from_slice(&q.cond);
    let h = jt.joint_entropy(&all)? - jt.joint_entropy(&q.cond)?;
    Ok(h.max(0.0))
}

/// I(target ; partner | cond) in bits.
pub fn mutual_info(jt: &JointType, q: &InfoQuery) -> Result<f64> {
    q.validate(jt.rank())?;
    if q.partner.is_empty() {
        return Err(Error::InvalidAxes("mutual information needs a partner set".into()));
    }
    let cat = |a: &[usize], b: &[usize]| -> Vec<usize> { a.iter().chain(b).copied().collect() };
    // I = H(AC) + H(BC) - H(ABC) - H(C), symmetric in A and B by construction.
    let h_ac = jt.joint_entropy(&cat(&q.target, &q.cond))?;
    let h_bc = jt.joint_entropy(&cat(&q.partner, &q.cond))?;
    let abc = cat(&cat(&q.target, &q.partner), &q.cond);
    let h_abc = jt.joint_entropy(&abc)?;
    let h_c = jt.joint_entropy(&q.cond)?;
    Ok((h_ac + h_bc - h_abc - h_c).max(0.0))
}

/// Multivariate mutual information İ(part_1; ..; part_k | cond)
/// = Σ H(part_i | cond) − H(all parts | cond).
pub fn multi_info(jt: &JointType, parts: &[Vec<usize>], cond: &[usize]) -> Result<f64> {
    if parts.len() < 2 {
        return Err(Error::InvalidAxes("multivariate information needs >= 2 parts".into()));
    }
    let mut seen = vec![false; jt.rank()];
    for &a in parts.iter().flatten().chain(cond) {
        if a >= jt.rank() {
            return Err(Error::InvalidAxes(format!("axis {a} >= rank {}", jt.rank())));
        }
        if seen[a] {
            return Err(Error::InvalidAxes(format!("axis {a} appears in more than one group")));
        }
        seen[a] = true;
    }
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::InvalidAxes("empty part".into()));
    }
    let h_c = jt.joint_entropy(cond)?;
    let mut sum = 0.0;
    let mut all: Vec<usize> = Vec::new();
    for p in parts {
        let mut pc = p.clone();
        pc.extend_from_slice(cond);
        sum += jt.joint_entropy(&pc)? - h_c;
        all.extend_from_slice(p);
    }
    all.extend_from_slice(cond);
    let joint = jt.joint_entropy(&all)? - h_c;
    Ok((sum - joint).max(0.0))
}

/// Result of a Kullback–Leibler divergence evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Divergence {
    Finite(f64),
    /// `p` puts mass where `q` has none.
    Infinite,
}

impl Divergence {
    pub fn bits(self) -> f64 {
        match self {
            Divergence::Finite(v) => v,
            Divergence::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Divergence::Infinite)
    }
}

/// D(p ‖ q) in bits for two p.m.f.s on the same flat support.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<Divergence> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {}", p.len(), q.len())));
    }
    let mut d = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Ok(Divergence::Infinite);
        }
        d += pi * (pi / qi).log2();
    }
    Ok(Divergence::Finite(d.max(0.0)))
}

/// D(p ‖ q) where `p` is an empirical type.
pub fn kl_divergence_type(p: &JointType, q: &[f64]) -> Result<Divergence> {
    kl_divergence(&p.pmf(), q)
}

/// Conditional divergence D(p_{Y|X} ‖ q_{Y|X} | p_X) with row-major
/// conditional tables (`rows = weights.len()`, each row of width `p.len()/rows`).
pub fn kl_divergence_conditional(p: &[f64], q: &[f64], weights: &[f64]) -> Result<Divergence> {
    if p.len() != q.len() || weights.is_empty() || !p.len().is_multiple_of(weights.len()) {
        return Err(Error::ShapeMismatch(format!(
            "tables {} / {} with {} conditioning cells",
            p.len(),
            q.len(),
            weights.len()
        )));
    }
    let width = p.len() / weights.len();
    let mut total = 0.0;
    for (r, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let range = r * width..(r + 1) * width;
        match kl_divergence(&p[range.clone()], &q[range])? {
            Divergence::Infinite => return Ok(Divergence::Infinite),
            Divergence::Finite(v) => total += w * v,
        }
    }
    Ok(Divergence::Finite(total))
}

/// log2 of a type-class size with the method-of-types sandwich bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TypeClassSize {
    pub exact: f64,
    pub lower: f64,
    pub upper: f64,
}

fn log2_factorial(n: u64) -> f64 {
    (2..=n).map(|i| (i as f64).log2()).sum()
}

/// Size of the type class of `t` (or the conditional type class of the
/// non-conditioning axes given `cond`).
///
/// Bounds: `N·H − |alphabet|·log2(N+1) ≤ log2|T| ≤ N·H`, where
/// `|alphabet|` is the full product alphabet size of `t`.
pub fn log_type_class_size(t: &JointType, cond: Option<&[usize]>) -> Result<TypeClassSize> {
    let cond = cond.unwrap_or(&[]);
    for &a in cond {
        if a >= t.rank() {
            return Err(Error::InvalidAxes(format!("axis {a} >= rank {}", t.rank())));
        }
    }
    let target: Vec<usize> = (0..t.rank()).filter(|a| !cond.contains(a)).collect();
    let n = t.total();
    let (cells, width, counts) = t.conditional_counts(&target, cond)?;
    let mut exact = 0.0;
    for c in 0..cells {
        let row = &counts[c * width..(c + 1) * width];
        let nc: u64 = row.iter().sum();
        exact += log2_factorial(nc) - row.iter().map(|&k| log2_factorial(k)).sum::<f64>();
    }
    let h = if target.is_empty() { 0.0 } else { entropy(t, &InfoQuery::entropy(&target).given(cond))? };
    let upper = n as f64 * h;
    let alphabet: usize = t.axes().iter().product();
    let lower = upper - alphabet as f64 * ((n + 1) as f64).log2();
    Ok(TypeClassSize { exact, lower, upper })
}

/// Largest-remainder rounding of `p` to a composition of `n`.
///
/// Minimizes the L1 distance `Σ |counts/n − p|` over integer compositions;
/// remainder ties go to the lower index.
pub fn quantize_counts(p: &[f64], n: u64) -> Result<Vec<u64>> {
    if n == 0 {
        return Err(Error::InvalidPmf("cannot quantize to N = 0".into()));
    }
    validate_pmf(p)?;
    let total: f64 = p.iter().sum();
    let scaled: Vec<f64> = p.iter().map(|&x| x / total * n as f64).collect();
    let mut counts: Vec<u64> = scaled.iter().map(|&x| x.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = scaled[a] - scaled[a].floor();
        let fb = scaled[b] - scaled[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take((n - assigned.min(n)) as usize) {
        counts[i] += 1;
    }
    Ok(counts)
}

/// Quantizes a real p.m.f. to the nearest type with denominator `n`.
pub fn quantize_pmf(p: &[f64], n: u64) -> Result<JointType> {
    let counts = quantize_counts(p, n)?;
    JointType::from_counts(vec![p.len()], counts)
}

/// Checks entries are finite, nonnegative and sum to 1 within 1e-9.
pub fn validate_pmf(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidPmf("empty".into()));
    }
    if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::InvalidPmf(format!("negative or non-finite entry in {p:?}")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidPmf(format!("sums to {s}")));
    }
    Ok(())
}

/// Entropy in bits of a real p.m.f. (0·log 0 = 0).
pub fn pmf_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.log2()).sum::<f64>()
}
