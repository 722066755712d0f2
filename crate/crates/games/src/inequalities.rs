//! Entropy inequalities of permutation-invariant colluder laws.
//!
//! For `(X_1..X_K, Y, Z)` whose law is invariant to permutations of the
//! colluders and nested sets `A ⊆ B`:
//!
//! * `(1/|A|) H(X_A | Y Z X_{K∖A}) ≤ (1/|B|) H(X_B | Y Z X_{K∖B})`
//! * `(1/|A|) H(X_A | Y Z) ≥ (1/|B|) H(X_B | Y Z)`
//! * `(1/|A|) [H(X_A|Z) − H(X_A|Y Z X_{K∖A})] ≥ (1/|B|) [H(X_B|Z) − H(X_B|Y Z X_{K∖B})]`
//! * `I(X_1; Y | Z) ≤ (1/K) I(X_K; Y | Z)` when the `X_k` are i.i.d. given `Z`
//!
//! `Y` may be trivial (`ny = 1`), which leaves a law of `(X_K, Z)`.

use fptrace_core::collusion::permutations;
use fptrace_core::types::{pmf_entropy, validate_pmf};
use fptrace_core::{Error, Result};
use serde::{Deserialize, Serialize};

const SYMMETRY_TOL: f64 = 1e-10;
const EQUALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Distance to violation: nonnegative when the inequality holds.
    pub slack: f64,
    pub holds: bool,
    pub equality: bool,
}

impl InequalityCheck {
    fn at_most(lhs: f64, rhs: f64) -> Self {
        let slack = rhs - lhs;
        Self { lhs, rhs, slack, holds: slack >= -EQUALITY_TOL, equality: slack.abs() < EQUALITY_TOL }
    }

    fn at_least(lhs: f64, rhs: f64) -> Self {
        let mut c = Self::at_most(rhs, lhs);
        (c.lhs, c.rhs) = (lhs, rhs);
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairReport {
    pub huy: InequalityCheck,
    pub hus: InequalityCheck,
    pub i_fair: InequalityCheck,
    pub i2_fair: InequalityCheck,
    /// Whether the `X_k` are i.i.d. given `Z`, the premise of `i2_fair`.
    pub conditionally_iid: bool,
}

/// Axis layout of a flat law over `(X_1..X_K, Y, Z)`, first axis most significant.
struct Layout {
    dims: Vec<usize>,
}

impl Layout {
    fn marginal(&self, joint: &[f64], keep: &[usize]) -> Vec<f64> {
        let sizes: Vec<usize> = keep.iter().map(|&a| self.dims[a]).collect();
        let mut out = vec![0.0; sizes.iter().product()];
        let mut idx = vec![0usize; self.dims.len()];
        for &p in joint {
            let mut flat = 0;
            for (&a, &s) in keep.iter().zip(&sizes) {
                flat = flat * s + idx[a];
            }
            out[flat] += p;
            for a in (0..idx.len()).rev() {
                idx[a] += 1;
                if idx[a] < self.dims[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        out
    }

    fn entropy(&self, joint: &[f64], axes: &[usize]) -> f64 {
        let mut sorted = axes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        pmf_entropy(&self.marginal(joint, &sorted))
    }

    /// `H(target | cond)`.
    fn conditional(&self, joint: &[f64], target: &[usize], cond: &[usize]) -> f64 {
        let all: Vec<usize> = target.iter().chain(cond).copied().collect();
        self.entropy(joint, &all) - self.entropy(joint, cond)
    }

    fn permuted(&self, joint: &[f64], k: usize, perm: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; joint.len()];
        let mut idx = vec![0usize; self.dims.len()];
        for &p in joint {
            let mut moved = idx.clone();
            for j in 0..k {
                moved[perm[j]] = idx[j];
            }
            let flat = moved.iter().zip(&self.dims).fold(0, |f, (&i, &d)| f * d + i);
            out[flat] += p;
            for a in (0..idx.len()).rev() {
                idx[a] += 1;
                if idx[a] < self.dims[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        out
    }
}

fn layout(joint: &[f64], k: usize, q: usize, ny: usize, nz: usize) -> Result<Layout> {
    let mut dims = vec![q; k];
    dims.extend([ny, nz]);
    let size: usize = dims.iter().product();
    if k == 0 || joint.len() != size {
        return Err(Error::ShapeMismatch(format!("law over {k} colluders needs {size} entries, got {}", joint.len())));
    }
    validate_pmf(joint)?;
    Ok(Layout { dims })
}

/// Average of a law over all permutations of its `K` colluder coordinates.
pub fn symmetrize(joint: &[f64], k: usize, q: usize, ny: usize, nz: usize) -> Result<Vec<f64>> {
    let lay = layout(joint, k, q, ny, nz)?;
    let perms = permutations(k);
    let mut out = vec![0.0; joint.len()];
    for perm in &perms {
        for (o, p) in out.iter_mut().zip(lay.permuted(joint, k, perm)) {
            *o += p / perms.len() as f64;
        }
    }
    Ok(out)
}

/// Evaluates the four inequalities for the nested colluder sets `a ⊆ b`.
pub fn check_fair_inequalities(
    joint: &[f64],
    k: usize,
    q: usize,
    ny: usize,
    nz: usize,
    a: &[usize],
    b: &[usize],
) -> Result<FairReport> {
    let lay = layout(joint, k, q, ny, nz)?;
    for j in 0..k.saturating_sub(1) {
        let mut swap: Vec<usize> = (0..k).collect();
        swap.swap(j, j + 1);
        let moved = lay.permuted(joint, k, &swap);
        if moved.iter().zip(joint).any(|(x, y)| (x - y).abs() > SYMMETRY_TOL) {
            return Err(Error::Config(format!("law is not invariant to swapping colluders {j} and {}", j + 1)));
        }
    }
    let set = |s: &[usize]| -> Result<Vec<usize>> {
        let mut v = s.to_vec();
        v.sort_unstable();
        v.dedup();
        if v.is_empty() || v.len() != s.len() || v.iter().any(|&j| j >= k) {
            return Err(Error::Config(format!("bad colluder set {s:?}")));
        }
        Ok(v)
    };
    let (a, b) = (set(a)?, set(b)?);
    if !a.iter().all(|j| b.contains(j)) {
        return Err(Error::Config(format!("{a:?} is not contained in {b:?}")));
    }
    let (y, z) = (k, k + 1);
    let rest = |s: &[usize]| -> Vec<usize> { (0..k).filter(|j| !s.contains(j)).collect() };
    let with = |extra: &[usize], base: &[usize]| -> Vec<usize> { base.iter().chain(extra).copied().collect() };
    let (na, nb) = (a.len() as f64, b.len() as f64);

    let h_inner = |s: &[usize]| lay.conditional(joint, s, &with(&rest(s), &[y, z]));
    let h_outer = |s: &[usize], cond: &[usize]| lay.conditional(joint, s, cond);

    let huy = InequalityCheck::at_most(h_inner(&a) / na, h_inner(&b) / nb);
    let hus = InequalityCheck::at_least(h_outer(&a, &[y, z]) / na, h_outer(&b, &[y, z]) / nb);
    let score = |s: &[usize], n: f64| (h_outer(s, &[z]) - h_inner(s)) / n;
    let i_fair = InequalityCheck::at_least(score(&a, na), score(&b, nb));
    let all: Vec<usize> = (0..k).collect();
    let i1 = h_outer(&[0], &[z]) - h_outer(&[0], &[y, z]);
    let ik = h_outer(&all, &[z]) - h_outer(&all, &[y, z]);
    let i2_fair = InequalityCheck::at_most(i1, ik / k as f64);

    // I.i.d. given Z: the X-marginal per z is the product of its first coordinate.
    let xz = lay.marginal(joint, &with(&[z], &all));
    let x1z = lay.marginal(joint, &[0, z]);
    let pz = lay.marginal(joint, &[z]);
    let inputs = q.pow(k as u32);
    let conditionally_iid = (0..inputs).all(|x| {
        let d = fptrace_core::collusion::digits(x, k, q);
        (0..nz).all(|zz| {
            if pz[zz] == 0.0 {
                return true;
            }
            let prod: f64 = d.iter().map(|&s| x1z[s * nz + zz] / pz[zz]).product();
            (xz[x * nz + zz] / pz[zz] - prod).abs() < 1e-9
        })
    });

    Ok(FairReport { huy, hus, i_fair, i2_fair, conditionally_iid })
}
