//! Randomized constant-composition fingerprint codes.
//!
//! A codebook is built for a realized host `s` and time-sharing sequence
//! `w`: every codeword is drawn independently and uniformly from the
//! conditional type class prescribed by the target law of `x` given
//! `(s, w)`. Row `m` comes from a stream keyed by `(seed, s, w, m)`, so any
//! row can be regenerated on demand and parallel builds are bit-identical.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, hash_symbols};
use crate::types::{joint_type, quantize_counts, validate_pmf, Alphabet, JointType, Sequence};

/// Design parameters of a constant-composition fingerprint code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeParams {
    pub n: usize,
    pub users: usize,
    /// Rate in bits/symbol, `log2(users) / n` unless supplied.
    pub rate: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "default_k_nom")]
    pub k_nom: usize,
    #[serde(default = "one")]
    pub s_alphabet: usize,
    pub x_alphabet: usize,
    #[serde(default = "one")]
    pub w_alphabet: usize,
    /// Host law over S.
    #[serde(default = "point_mass")]
    pub p_s: Vec<f64>,
    /// Target type of `w` over W.
    #[serde(default = "point_mass")]
    pub target_w: Vec<f64>,
    /// Target conditional law of `x` given `(s, w)`, flat `[s][w][x]`.
    pub target_x_given_sw: Vec<f64>,
    /// Embedding distortion table over S×X, flat `[s][x]`.
    #[serde(default)]
    pub d1: Option<Vec<f64>>,
    #[serde(default)]
    pub d1_max: Option<f64>,
}

fn one() -> usize {
    1
}
fn default_k_nom() -> usize {
    2
}
fn point_mass() -> Vec<f64> {
    vec![1.0]
}

impl CodeParams {
    /// Binary code without host or time sharing and uniform codeword type.
    pub fn binary_uniform(n: usize, users: usize) -> Self {
        Self {
            n,
            users,
            rate: (users as f64).log2() / n as f64,
            delta: 0.0,
            k_nom: 2,
            s_alphabet: 1,
            x_alphabet: 2,
            w_alphabet: 1,
            p_s: vec![1.0],
            target_w: vec![1.0],
            target_x_given_sw: vec![0.5, 0.5],
            d1: None,
            d1_max: None,
        }
    }

    /// Number of users `⌈2^{NR}⌉`, capped at `max_users`.
    pub fn users_for_rate(n: usize, rate: f64, max_users: usize) -> usize {
        let exact = (n as f64 * rate).exp2().ceil();
        if !exact.is_finite() || exact > max_users as f64 {
            max_users
        } else {
            (exact as usize).max(1)
        }
    }

    pub fn cond_alphabet(&self) -> usize {
        self.s_alphabet * self.w_alphabet
    }

    /// Target law of x given the combined cell `s * L + w`.
    pub fn x_law(&self, s: usize, w: usize) -> &[f64] {
        let x = self.x_alphabet;
        let cell = s * self.w_alphabet + w;
        &self.target_x_given_sw[cell * x..(cell + 1) * x]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("blocklength must be >= 1".into()));
        }
        if self.users == 0 {
            return Err(Error::Config("need at least one user".into()));
        }
        for a in [self.s_alphabet, self.x_alphabet, self.w_alphabet] {
            Alphabet::new(a)?;
        }
        Alphabet::new(self.cond_alphabet())?;
        if self.p_s.len() != self.s_alphabet {
            return Err(Error::ShapeMismatch(format!("p_s has {} entries", self.p_s.len())));
        }
        validate_pmf(&self.p_s)?;
        if self.target_w.len() != self.w_alphabet {
            return Err(Error::ShapeMismatch(format!("target_w has {} entries", self.target_w.len())));
        }
        validate_pmf(&self.target_w)?;
        let want = self.cond_alphabet() * self.x_alphabet;
        if self.target_x_given_sw.len() != want {
            return Err(Error::ShapeMismatch(format!(
                "target_x_given_sw has {} entries, expected {want}",
                self.target_x_given_sw.len()
            )));
        }
        for s in 0..self.s_alphabet {
            for w in 0..self.w_alphabet {
                validate_pmf(self.x_law(s, w))?;
            }
        }
        if let Some(d1) = &self.d1 {
            if d1.len() != self.s_alphabet * self.x_alphabet {
                return Err(Error::ShapeMismatch(format!("d1 table has {} entries", d1.len())));
            }
        }
        if self.delta < 0.0 {
            return Err(Error::Config("delta must be >= 0".into()));
        }
        Ok(())
    }
}

/// Secret side information shared by encoder and decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeSecret {
    pub seed: u64,
    pub timeshare: Sequence,
    /// RP user permutation: deployed row `m` is prototype row `user_perm_inv[m]`.
    #[serde(default)]
    pub user_perm: Option<Vec<usize>>,
    /// RM letter permutation: prototype frame = `permuted(letter_perm)` of the deployed frame.
    #[serde(default)]
    pub letter_perm: Option<Vec<usize>>,
}

/// A realized codebook: host, time-sharing sequence and one codeword per user.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub params: CodeParams,
    pub host: Sequence,
    pub rows: Vec<Sequence>,
    pub secret: CodeSecret,
}

impl Codebook {
    pub fn n(&self) -> usize {
        self.host.len()
    }

    pub fn users(&self) -> usize {
        self.rows.len()
    }

    pub fn timeshare(&self) -> &Sequence {
        &self.secret.timeshare
    }

    /// Combined side-information sequence `s * L + w`.
    pub fn side_info(&self) -> Result<Sequence> {
        combine(&self.host, self.timeshare())
    }

    /// True when the host alphabet is trivial.
    pub fn host_is_degenerate(&self) -> bool {
        self.host.alphabet().size() == 1
    }

    pub fn timeshare_is_degenerate(&self) -> bool {
        self.timeshare().alphabet().size() == 1
    }
}

/// Combines two sequences into one over the product alphabet (first is major).
pub fn combine(a: &Sequence, b: &Sequence) -> Result<Sequence> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), found: b.len() });
    }
    let nb = b.alphabet().size();
    let alphabet = Alphabet::new(a.alphabet().size() * nb)?;
    let symbols = a.symbols().iter().zip(b.symbols()).map(|(&x, &y)| (x as usize * nb + y as usize) as u8).collect();
    Sequence::new(alphabet, symbols)
}

/// Per-cell symbol multisets of a (conditional) type class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composition {
    pub alphabet: usize,
    /// `per_cell[c][a]`: how many times symbol `a` occurs where the
    /// conditioning sequence equals `c`. A single cell means no conditioning.
    pub per_cell: Vec<Vec<u64>>,
}

impl Composition {
    pub fn unconditional(counts: Vec<u64>) -> Self {
        Self { alphabet: counts.len(), per_cell: vec![counts] }
    }

    /// Quantizes the conditional laws `laws[c]` to the occupancy of `cond`.
    pub fn from_conditional_laws(laws: &[&[f64]], cond: &Sequence) -> Result<Self> {
        let cells = cond.alphabet().size();
        if laws.len() != cells {
            return Err(Error::ShapeMismatch(format!("{} laws for {cells} cells", laws.len())));
        }
        let alphabet = laws[0].len();
        let mut occupancy = vec![0u64; cells];
        for &c in cond.symbols() {
            occupancy[c as usize] += 1;
        }
        let per_cell = laws
            .iter()
            .zip(&occupancy)
            .map(|(law, &n)| if n == 0 { Ok(vec![0; alphabet]) } else { quantize_counts(law, n) })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { alphabet, per_cell })
    }

    pub fn total(&self) -> u64 {
        self.per_cell.iter().flatten().sum()
    }
}

/// i.i.d. host draw from `p_s`.
pub fn draw_host<R: Rng + ?Sized>(p_s: &[f64], n: usize, rng: &mut R) -> Result<Sequence> {
    validate_pmf(p_s)?;
    let alphabet = Alphabet::new(p_s.len())?;
    let mut cdf = Vec::with_capacity(p_s.len());
    let mut acc = 0.0;
    for &p in p_s {
        acc += p;
        cdf.push(acc);
    }
    let last_positive = p_s.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    let symbols = (0..n)
        .map(|_| {
            let u: f64 = rng.gen::<f64>() * acc;
            let i = cdf.iter().position(|&c| u < c).unwrap_or(last_positive);
            i as u8
        })
        .collect();
    Sequence::new(alphabet, symbols)
}

/// Uniform draw from a (conditional) type class.
///
/// Within each conditioning cell the prescribed multiset is laid out in a
/// uniformly random order over the positions of that cell.
pub fn sample_type_class<R: Rng + ?Sized>(
    composition: &Composition,
    cond: Option<&Sequence>,
    rng: &mut R,
) -> Result<Sequence> {
    let alphabet = Alphabet::new(composition.alphabet)?;
    match cond {
        None => {
            if composition.per_cell.len() != 1 {
                return Err(Error::CompositionMismatch(format!(
                    "{} cells but no conditioning sequence",
                    composition.per_cell.len()
                )));
            }
            let mut symbols = expand(&composition.per_cell[0]);
            if symbols.is_empty() {
                return Err(Error::Empty("composition"));
            }
            symbols.shuffle(rng);
            Sequence::new(alphabet, symbols)
        }
        Some(cond) => {
            let cells = cond.alphabet().size();
            if composition.per_cell.len() != cells {
                return Err(Error::CompositionMismatch(format!(
                    "{} cells in composition, conditioning alphabet has {cells}",
                    composition.per_cell.len()
                )));
            }
            let mut positions: Vec<Vec<usize>> = vec![Vec::new(); cells];
            for (t, &c) in cond.symbols().iter().enumerate() {
                positions[c as usize].push(t);
            }
            let mut out = vec![0u8; cond.len()];
            for (c, pos) in positions.iter().enumerate() {
                let mut symbols = expand(&composition.per_cell[c]);
                if symbols.len() != pos.len() {
                    return Err(Error::CompositionMismatch(format!(
                        "cell {c}: composition totals {} but {} positions",
                        symbols.len(),
                        pos.len()
                    )));
                }
                symbols.shuffle(rng);
                for (&t, s) in pos.iter().zip(symbols) {
                    out[t] = s;
                }
            }
            Sequence::new(alphabet, out)
        }
    }
}

fn expand(counts: &[u64]) -> Vec<u8> {
    counts.iter().enumerate().flat_map(|(a, &c)| std::iter::repeat_n(a as u8, c as usize)).collect()
}

/// Uniform draw of the time-sharing sequence from the target type class.
pub fn draw_timeshare<R: Rng + ?Sized>(params: &CodeParams, rng: &mut R) -> Result<Sequence> {
    let counts = quantize_counts(&params.target_w, params.n as u64)?;
    sample_type_class(&Composition::unconditional(counts), None, rng)
}

/// Normalized embedding distortion `(1/N) Σ d1(s_t, x_t)` and whether it is within `d1_max`.
pub fn check_embedding_distortion(s: &Sequence, x: &Sequence, d1: &[f64], d1_max: f64) -> Result<(f64, bool)> {
    if s.len() != x.len() {
        return Err(Error::LengthMismatch { expected: s.len(), found: x.len() });
    }
    let xs = x.alphabet().size();
    if d1.len() != s.alphabet().size() * xs {
        return Err(Error::ShapeMismatch(format!(
            "distortion table has {} entries, expected {}",
            d1.len(),
            s.alphabet().size() * xs
        )));
    }
    let total: f64 = s.symbols().iter().zip(x.symbols()).map(|(&a, &b)| d1[a as usize * xs + b as usize]).sum();
    let value = total / s.len() as f64;
    Ok((value, value <= d1_max + 1e-12))
}

/// Builds the codebook for realized `(s, w)`.
///
/// Each row is uniform on the conditional type class given `(s, w)`; the
/// class itself must satisfy the embedding distortion budget.
pub fn build_codebook(params: &CodeParams, s: &Sequence, w: &Sequence, seed: u64) -> Result<Codebook> {
    params.validate()?;
    if s.len() != params.n || w.len() != params.n {
        return Err(Error::LengthMismatch {
            expected: params.n,
            found: if s.len() != params.n { s.len() } else { w.len() },
        });
    }
    if s.alphabet().size() != params.s_alphabet || w.alphabet().size() != params.w_alphabet {
        return Err(Error::ShapeMismatch("host/time-sharing alphabets disagree with params".into()));
    }
    let w_counts = quantize_counts(&params.target_w, params.n as u64)?;
    if joint_type(&[w])?.counts() != w_counts.as_slice() {
        return Err(Error::Infeasible("time-sharing sequence is not in the target type class".into()));
    }
    let cond = combine(s, w)?;
    let laws: Vec<&[f64]> = (0..params.s_alphabet)
        .flat_map(|si| (0..params.w_alphabet).map(move |wi| (si, wi)))
        .map(|(si, wi)| params.x_law(si, wi))
        .collect();
    let composition = Composition::from_conditional_laws(&laws, &cond)?;

    if let (Some(d1), Some(d1_max)) = (&params.d1, params.d1_max) {
        let xs = params.x_alphabet;
        let mut total = 0.0;
        for (c, row) in composition.per_cell.iter().enumerate() {
            let si = c / params.w_alphabet;
            for (x, &k) in row.iter().enumerate() {
                total += k as f64 * d1[si * xs + x];
            }
        }
        let value = total / params.n as f64;
        if value > d1_max + 1e-12 {
            return Err(Error::Infeasible(format!(
                "target conditional type has embedding distortion {value} > {d1_max}"
            )));
        }
    }

    let key_s = hash_symbols(s.symbols());
    let key_w = hash_symbols(w.symbols());
    let draw = |m: usize| {
        let mut r = rng::stream(seed, "codeword", &[key_s, key_w, m as u64]);
        sample_type_class(&composition, Some(&cond), &mut r)
    };
    let rows: Vec<Sequence> = if params.users * params.n >= 1 << 16 {
        (0..params.users).into_par_iter().map(draw).collect::<Result<_>>()?
    } else {
        (0..params.users).map(draw).collect::<Result<_>>()?
    };
    Ok(Codebook {
        params: params.clone(),
        host: s.clone(),
        rows,
        secret: CodeSecret { seed, timeshare: w.clone(), user_perm: None, letter_perm: None },
    })
}

/// Regenerates row `m` of a codebook from its key, without the stored rows.
pub fn regenerate_row(cb: &Codebook, m: usize) -> Result<Sequence> {
    let params = &cb.params;
    let cond = cb.side_info()?;
    let laws: Vec<&[f64]> = (0..params.s_alphabet)
        .flat_map(|si| (0..params.w_alphabet).map(move |wi| (si, wi)))
        .map(|(si, wi)| params.x_law(si, wi))
        .collect();
    let composition = Composition::from_conditional_laws(&laws, &cond)?;
    let mut r = rng::stream(
        cb.secret.seed,
        "codeword",
        &[hash_symbols(cb.host.symbols()), hash_symbols(cb.timeshare().symbols()), m as u64],
    );
    sample_type_class(&composition, Some(&cond), &mut r)
}

fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Randomly permuted code: deployed row `π(m)` is prototype row `m`.
pub fn apply_rp<R: Rng + ?Sized>(cb: &Codebook, rng: &mut R) -> Codebook {
    let perm = random_permutation(cb.users(), rng);
    apply_user_permutation(cb, &perm)
}

/// Reindexes users by `perm` (prototype `m` → deployed `perm[m]`), composing with any earlier RP.
pub fn apply_user_permutation(cb: &Codebook, perm: &[usize]) -> Codebook {
    let inv = invert(perm);
    let rows = inv.iter().map(|&m| cb.rows[m].clone()).collect();
    let composed = match &cb.secret.user_perm {
        Some(prev) => prev.iter().map(|&d| perm[d]).collect(),
        None => perm.to_vec(),
    };
    let mut out = cb.clone();
    out.rows = rows;
    out.secret.user_perm = Some(composed);
    out
}

/// Undoes every RP reindexing recorded in the secret.
pub fn invert_rp(cb: &Codebook) -> Codebook {
    match &cb.secret.user_perm {
        None => cb.clone(),
        Some(perm) => {
            let rows = perm.iter().map(|&d| cb.rows[d].clone()).collect();
            let mut out = cb.clone();
            out.rows = rows;
            out.secret.user_perm = None;
            out
        }
    }
}

/// Maps deployed user ids back to prototype ids.
pub fn prototype_user(cb: &Codebook, deployed: usize) -> usize {
    match &cb.secret.user_perm {
        Some(perm) => perm.iter().position(|&d| d == deployed).unwrap_or(deployed),
        None => deployed,
    }
}

/// Randomly modulated code: the given codebook is the prototype, deployed
/// sequences are `π⁻¹` of the prototype's host, time-sharing and codewords.
pub fn apply_rm<R: Rng + ?Sized>(cb: &Codebook, rng: &mut R) -> Result<Codebook> {
    let perm = random_permutation(cb.n(), rng);
    apply_letter_permutation(cb, &perm)
}

pub fn apply_letter_permutation(cb: &Codebook, perm: &[usize]) -> Result<Codebook> {
    if cb.secret.letter_perm.is_some() {
        return Err(Error::Config("codebook is already letter-permuted".into()));
    }
    let mut out = cb.clone();
    out.host = cb.host.unpermuted(perm)?;
    out.secret.timeshare = cb.timeshare().unpermuted(perm)?;
    out.rows = cb.rows.iter().map(|r| r.unpermuted(perm)).collect::<Result<_>>()?;
    out.secret.letter_perm = Some(perm.to_vec());
    Ok(out)
}

/// Decoder-side view of an RM code: `(π y, π s, π w, π x_m)`.
pub fn prototype_frame(cb: &Codebook, y: &Sequence) -> Result<(Codebook, Sequence)> {
    match &cb.secret.letter_perm {
        None => Ok((cb.clone(), y.clone())),
        Some(perm) => {
            let mut proto = cb.clone();
            proto.host = cb.host.permuted(perm)?;
            proto.secret.timeshare = cb.timeshare().permuted(perm)?;
            proto.rows = cb.rows.iter().map(|r| r.permuted(perm)).collect::<Result<_>>()?;
            proto.secret.letter_perm = None;
            Ok((proto, y.permuted(perm)?))
        }
    }
}

/// Bias density of the Tardos construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TardosDensity {
    Uniform,
    /// `W = sin²(r)` with `r` uniform on `[t', π/2 − t']`, `sin²(t') = cutoff`.
    Arcsine {
        #[serde(default)]
        cutoff: f64,
    },
    /// Every bias equal to `value` (test hook).
    Fixed {
        value: f64,
    },
}

impl Default for TardosDensity {
    fn default() -> Self {
        TardosDensity::Arcsine { cutoff: 0.0 }
    }
}

/// Tardos codebook: per-letter biases and Bernoulli codewords.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TardosCode {
    pub biases: Vec<f64>,
    pub rows: Vec<Sequence>,
}

pub fn tardos_codebook<R: Rng + ?Sized>(
    users: usize,
    n: usize,
    density: TardosDensity,
    rng: &mut R,
) -> Result<TardosCode> {
    if users == 0 || n == 0 {
        return Err(Error::Config("Tardos code needs M, N >= 1".into()));
    }
    let biases: Vec<f64> = (0..n)
        .map(|_| match density {
            TardosDensity::Uniform => loop {
                let u: f64 = rng.gen();
                if u > 0.0 {
                    break u;
                }
            },
            TardosDensity::Arcsine { cutoff } => {
                let lo = cutoff.clamp(0.0, 0.5).sqrt().asin();
                let hi = std::f64::consts::FRAC_PI_2 - lo;
                let r = lo + (hi - lo) * rng.gen::<f64>();
                r.sin().powi(2)
            }
            TardosDensity::Fixed { value } => value,
        })
        .collect();
    let binary = Alphabet::new(2)?;
    let rows = (0..users)
        .map(|_| {
            let symbols = biases.iter().map(|&p| u8::from(rng.gen::<f64>() < p)).collect();
            Sequence::new(binary, symbols)
        })
        .collect::<Result<_>>()?;
    Ok(TardosCode { biases, rows })
}

impl TardosCode {
    /// Wraps the code as a [`Codebook`] whose time-sharing sequence is the
    /// bias quantized into `bins` equal-width bins, so the MI decoders can
    /// condition on it.
    pub fn into_codebook(self, bins: usize, seed: u64) -> Result<Codebook> {
        let n = self.biases.len();
        let users = self.rows.len();
        let w_symbols: Vec<u8> =
            self.biases.iter().map(|&b| ((b * bins as f64) as usize).min(bins - 1) as u8).collect();
        let w = Sequence::new(Alphabet::new(bins)?, w_symbols)?;
        let w_type = joint_type(&[&w])?;
        let target_w: Vec<f64> = w_type.pmf();
        let mut params = CodeParams::binary_uniform(n, users);
        params.w_alphabet = bins;
        params.target_w = target_w;
        params.target_x_given_sw = (0..bins)
            .flat_map(|b| {
                let p = (b as f64 + 0.5) / bins as f64;
                [1.0 - p, p]
            })
            .collect();
        Ok(Codebook {
            params,
            host: Sequence::constant(Alphabet::new(1)?, 0, n)?,
            rows: self.rows,
            secret: CodeSecret { seed, timeshare: w, user_perm: None, letter_perm: None },
        })
    }
}

// ---- file formats ---------------------------------------------------------

pub const CODEBOOK_FORMAT: &str = "fptrace-codebook/1";

/// Public header written next to the JSONL rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodebookHeader {
    pub format: String,
    pub params: CodeParams,
    pub seed: u64,
    pub host: Sequence,
    /// Type of `w` (counts over W).
    pub w_type: Vec<u64>,
    /// Composition of each codeword per `(s, w)` cell, flat `[s*L + w][x]`.
    pub x_given_sw_counts: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RowRecord {
    user: usize,
    symbols: Vec<u8>,
}

/// Writes `<stem>.header.json`, `<stem>.jsonl` and `<stem>.key.json` into `dir`.
pub fn write_codebook(cb: &Codebook, dir: &Path, stem: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let cond = cb.side_info()?;
    let composition = match cb.rows.first() {
        Some(row) => {
            let jt = joint_type(&[&cond, row])?;
            let (cells, width, counts) = jt.conditional_counts(&[1], &[0])?;
            (0..cells).map(|c| counts[c * width..(c + 1) * width].to_vec()).collect()
        }
        None => Vec::new(),
    };
    let header = CodebookHeader {
        format: CODEBOOK_FORMAT.into(),
        params: cb.params.clone(),
        seed: cb.secret.seed,
        host: cb.host.clone(),
        w_type: joint_type(&[cb.timeshare()])?.counts().to_vec(),
        x_given_sw_counts: composition,
    };
    serde_json::to_writer_pretty(File::create(dir.join(format!("{stem}.header.json")))?, &header)?;

    let mut rows = BufWriter::new(File::create(dir.join(format!("{stem}.jsonl")))?);
    for (user, row) in cb.rows.iter().enumerate() {
        serde_json::to_writer(&mut rows, &RowRecord { user, symbols: row.symbols().to_vec() })?;
        rows.write_all(b"\n")?;
    }
    rows.flush()?;

    serde_json::to_writer_pretty(File::create(dir.join(format!("{stem}.key.json")))?, &cb.secret)?;
    Ok(())
}

/// Reads a codebook from its header, JSONL rows and keyfile.
pub fn read_codebook(header: &Path, rows: &Path, key: &Path) -> Result<Codebook> {
    let header: CodebookHeader = serde_json::from_reader(BufReader::new(File::open(header)?))?;
    if header.format != CODEBOOK_FORMAT {
        return Err(Error::Config(format!("unsupported codebook format `{}`", header.format)));
    }
    let secret: CodeSecret = serde_json::from_reader(BufReader::new(File::open(key)?))?;
    let x_alphabet = Alphabet::new(header.params.x_alphabet)?;
    let mut records: Vec<RowRecord> = Vec::new();
    for line in BufReader::new(File::open(rows)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    records.sort_by_key(|r| r.user);
    for (i, r) in records.iter().enumerate() {
        if r.user != i {
            return Err(Error::Config(format!("row ids are not 0..M (missing {i})")));
        }
    }
    let rows = records
        .into_iter()
        .map(|r| {
            let s = Sequence::new(x_alphabet, r.symbols)?;
            if s.len() != header.host.len() {
                return Err(Error::LengthMismatch { expected: header.host.len(), found: s.len() });
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    if secret.timeshare.len() != header.host.len() {
        return Err(Error::LengthMismatch { expected: header.host.len(), found: secret.timeshare.len() });
    }
    Ok(Codebook { params: header.params, host: header.host, rows, secret })
}

/// Conditional type of a row given `(s, w)` as per-cell counts.
pub fn row_composition(cb: &Codebook, m: usize) -> Result<Vec<Vec<u64>>> {
    let cond = cb.side_info()?;
    let jt: JointType = joint_type(&[&cond, &cb.rows[m]])?;
    let (cells, width, counts) = jt.conditional_counts(&[1], &[0])?;
    Ok((0..cells).map(|c| counts[c * width..(c + 1) * width].to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{mutual_info, InfoQuery};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn host_point_mass_and_determinism() {
        let s = draw_host(&[1.0, 0.0], 50, &mut rng(1)).unwrap();
        assert!(s.symbols().iter().all(|&x| x == 0));
        let a = draw_host(&[0.3, 0.7], 100, &mut rng(5)).unwrap();
        let b = draw_host(&[0.3, 0.7], 100, &mut rng(5)).unwrap();
        assert_eq!(a, b);
        assert!(draw_host(&[0.3, 0.3], 10, &mut rng(5)).is_err());
    }

    #[test]
    fn host_uniform_concentrates() {
        // P(|p̂ − 1/2| > 0.02) at N = 10^4 is about 6e-5 (z = 4).
        let mut bad = 0;
        for seed in 0..100 {
            let s = draw_host(&[0.5, 0.5], 10_000, &mut rng(seed)).unwrap();
            let ones = s.symbols().iter().filter(|&&x| x == 1).count() as f64 / 10_000.0;
            if (ones - 0.5).abs() > 0.02 {
                bad += 1;
            }
        }
        assert!(bad <= 1);
    }

    #[test]
    fn type_class_constant_and_conditional() {
        let c = Composition::unconditional(vec![0, 5, 0]);
        let s = sample_type_class(&c, None, &mut rng(2)).unwrap();
        assert_eq!(s.symbols(), &[1, 1, 1, 1, 1]);

        let cond = Sequence::from_slice(2, &[0, 1, 1, 0, 1, 1]).unwrap();
        let c = Composition { alphabet: 3, per_cell: vec![vec![1, 0, 1], vec![0, 3, 1]] };
        let x = sample_type_class(&c, Some(&cond), &mut rng(3)).unwrap();
        let jt = joint_type(&[&cond, &x]).unwrap();
        assert_eq!(jt.counts(), &[1, 0, 1, 0, 3, 1]);

        let wrong = Composition { alphabet: 3, per_cell: vec![vec![2, 0, 1], vec![0, 3, 1]] };
        assert!(matches!(sample_type_class(&wrong, Some(&cond), &mut rng(3)), Err(Error::CompositionMismatch(_))));
    }

    #[test]
    fn type_class_uniform_over_arrangements() {
        // (2,2) at N = 4: the 6 arrangements each have probability 1/6.
        let c = Composition::unconditional(vec![2, 2]);
        let mut r = rng(11);
        let mut freq = std::collections::HashMap::new();
        let draws = 60_000;
        for _ in 0..draws {
            let s = sample_type_class(&c, None, &mut r).unwrap();
            *freq.entry(s.into_symbols()).or_insert(0usize) += 1;
        }
        assert_eq!(freq.len(), 6);
        let p = 1.0 / 6.0;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for &f in freq.values() {
            assert!((f as f64 - draws as f64 * p).abs() < 3.0 * sigma, "{f}");
        }
    }

    fn params_with_host() -> CodeParams {
        CodeParams {
            n: 60,
            users: 5,
            rate: 5f64.log2() / 60.0,
            delta: 0.0,
            k_nom: 2,
            s_alphabet: 2,
            x_alphabet: 2,
            w_alphabet: 2,
            p_s: vec![0.5, 0.5],
            target_w: vec![0.5, 0.5],
            target_x_given_sw: vec![0.8, 0.2, 0.6, 0.4, 0.3, 0.7, 0.1, 0.9],
            d1: Some(vec![0.0, 1.0, 1.0, 0.0]),
            d1_max: Some(0.5),
        }
    }

    #[test]
    fn codebook_rows_have_exact_conditional_type() {
        let p = params_with_host();
        let s = draw_host(&p.p_s, p.n, &mut rng(1)).unwrap();
        let w = draw_timeshare(&p, &mut rng(2)).unwrap();
        let cb = build_codebook(&p, &s, &w, 99).unwrap();
        assert_eq!(cb.users(), 5);
        let target = row_composition(&cb, 0).unwrap();
        for m in 0..cb.users() {
            assert_eq!(row_composition(&cb, m).unwrap(), target);
            let (_, ok) = check_embedding_distortion(&s, &cb.rows[m], p.d1.as_ref().unwrap(), 0.5).unwrap();
            assert!(ok);
            assert_eq!(regenerate_row(&cb, m).unwrap(), cb.rows[m]);
        }
        // a second build with the same key is identical
        assert_eq!(build_codebook(&p, &s, &w, 99).unwrap(), cb);
    }

    #[test]
    fn codebook_single_user_and_errors() {
        let mut p = CodeParams::binary_uniform(8, 1);
        let s = Sequence::constant(Alphabet::new(1).unwrap(), 0, 8).unwrap();
        let w = s.clone();
        let cb = build_codebook(&p, &s, &w, 1).unwrap();
        assert_eq!(cb.users(), 1);
        assert_eq!(joint_type(&[&cb.rows[0]]).unwrap().counts(), &[4, 4]);

        // distortion budget violated by the type itself
        p.d1 = Some(vec![0.0, 1.0]);
        p.d1_max = Some(0.25);
        assert!(matches!(build_codebook(&p, &s, &w, 1), Err(Error::Infeasible(_))));
    }

    #[test]
    fn distinct_rows_nearly_independent() {
        let p = CodeParams::binary_uniform(2000, 2);
        let s = Sequence::constant(Alphabet::new(1).unwrap(), 0, 2000).unwrap();
        let mut ok = 0;
        for seed in 0..100 {
            let cb = build_codebook(&p, &s, &s, seed).unwrap();
            let jt = joint_type(&[&cb.rows[0], &cb.rows[1]]).unwrap();
            if mutual_info(&jt, &InfoQuery::mutual(&[0], &[1])).unwrap() < 0.01 {
                ok += 1;
            }
        }
        assert!(ok >= 99);
    }

    #[test]
    fn rp_roundtrip_and_identity() {
        let p = CodeParams::binary_uniform(16, 6);
        let s = Sequence::constant(Alphabet::new(1).unwrap(), 0, 16).unwrap();
        let cb = build_codebook(&p, &s, &s, 4).unwrap();
        let id: Vec<usize> = (0..6).collect();
        assert_eq!(apply_user_permutation(&cb, &id).rows, cb.rows);
        let rp = apply_rp(&cb, &mut rng(8));
        let rp2 = apply_rp(&rp, &mut rng(9));
        assert_eq!(invert_rp(&rp2).rows, cb.rows);
        let perm = rp.secret.user_perm.clone().unwrap();
        for m in 0..6 {
            assert_eq!(rp.rows[perm[m]], cb.rows[m]);
            assert_eq!(prototype_user(&rp, perm[m]), m);
        }
    }

    #[test]
    fn rm_identity_and_frame() {
        let p = params_with_host();
        let s = draw_host(&p.p_s, p.n, &mut rng(1)).unwrap();
        let w = draw_timeshare(&p, &mut rng(2)).unwrap();
        let cb = build_codebook(&p, &s, &w, 3).unwrap();
        let id: Vec<usize> = (0..p.n).collect();
        let same = apply_letter_permutation(&cb, &id).unwrap();
        assert_eq!(same.rows, cb.rows);
        let rm = apply_rm(&cb, &mut rng(4)).unwrap();
        let y = rm.rows[2].clone();
        let (proto, py) = prototype_frame(&rm, &y).unwrap();
        assert_eq!(proto.rows, cb.rows);
        assert_eq!(proto.host, cb.host);
        assert_eq!(py, cb.rows[2]);
    }

    #[test]
    fn tardos_fixed_and_column_means() {
        let code = tardos_codebook(3, 10, TardosDensity::Fixed { value: 1.0 }, &mut rng(1)).unwrap();
        assert!(code.rows.iter().all(|r| r.symbols().iter().all(|&b| b == 1)));

        let m = 10_000;
        let code = tardos_codebook(m, 20, TardosDensity::default(), &mut rng(2)).unwrap();
        for (i, &p) in code.biases.iter().enumerate() {
            assert!(p > 0.0 && p < 1.0);
            let mean = code.rows.iter().filter(|r| r.symbols()[i] == 1).count() as f64 / m as f64;
            let sigma = (p * (1.0 - p) / m as f64).sqrt();
            assert!((mean - p).abs() <= 4.0 * sigma + 1e-12, "col {i}: {mean} vs {p}");
        }
        let a = tardos_codebook(4, 8, TardosDensity::Uniform, &mut rng(3)).unwrap();
        let b = tardos_codebook(4, 8, TardosDensity::Uniform, &mut rng(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn embedding_distortion_examples() {
        let s = Sequence::from_slice(2, &[0, 1, 0, 1]).unwrap();
        let ham = [0.0, 1.0, 1.0, 0.0];
        assert_eq!(check_embedding_distortion(&s, &s, &ham, 0.0).unwrap(), (0.0, true));
        let s = Sequence::constant(Alphabet::new(2).unwrap(), 0, 100).unwrap();
        let mut x = vec![0u8; 100];
        x[..10].iter_mut().for_each(|v| *v = 1);
        let x = Sequence::from_slice(2, &x).unwrap();
        let (v, ok) = check_embedding_distortion(&s, &x, &ham, 0.05).unwrap();
        assert!((v - 0.10).abs() < 1e-15);
        assert!(!ok);
        assert!(check_embedding_distortion(&s, &x, &[0.0, 1.0], 0.05).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let p = params_with_host();
        let s = draw_host(&p.p_s, p.n, &mut rng(1)).unwrap();
        let w = draw_timeshare(&p, &mut rng(2)).unwrap();
        let cb = apply_rp(&build_codebook(&p, &s, &w, 3).unwrap(), &mut rng(5));
        let dir = std::env::temp_dir().join(format!("fptrace-codec-{}", std::process::id()));
        write_codebook(&cb, &dir, "cb").unwrap();
        let back = read_codebook(&dir.join("cb.header.json"), &dir.join("cb.jsonl"), &dir.join("cb.key.json")).unwrap();
        assert_eq!(back, cb);
        std::fs::remove_dir_all(&dir).ok();
    }
}
