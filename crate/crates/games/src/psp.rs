//! Pseudo sphere-packing exponents.
//!
//! The exponent is the smallest conditional divergence between a joint law
//! `p̃(x_K, y | s, w)` and the reference built from its own channel and the
//! product encoder law, over joint laws whose colluder marginals match the
//! encoder, whose channel is feasible, and whose decoder score stays below
//! the rate. The host is drawn from its nominal law inside the divergence.
//!
//! Joint laws are parameterized by per-cell softmax logits and the program
//! is solved by an augmented Lagrangian with L-BFGS inner steps and several
//! starts. When the class is fair and the score is symmetric in the
//! colluders, averaging any feasible law over colluder permutations keeps it
//! feasible without raising the divergence, so the search is restricted to
//! exchangeable laws.

use fptrace_core::collusion::digits;
use fptrace_core::rng::mix64;
use fptrace_core::{Error, Result};
use log::debug;
use serde::{Deserialize, Serialize};

use crate::functional::{MiFunctional, Part};
use crate::inner::frank_wolfe;
use crate::lbfgs;
use crate::polytope::{build_polytope, RowGroups};
use crate::problem::{cell_laws, product_prob, ClassKind, GameProblem, InputLaw};

const LN2: f64 = std::f64::consts::LN_2;
const TINY: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Single-colluder score `I(X_m; Y | W)`.
    User(usize),
    /// Subset score `(1/|A|) İ(X_A; Y X_{K∖A} | S, W)`.
    Subset(Vec<usize>),
}

impl Target {
    pub fn all(k: usize) -> Self {
        Target::Subset((0..k).collect())
    }

    pub fn part(&self, k: usize) -> Result<Part> {
        match self {
            Target::User(m) if *m < k => Ok(Part::User(*m)),
            Target::User(m) => Err(Error::Config(format!("colluder {m} outside a coalition of {k}"))),
            Target::Subset(a) => {
                if a.is_empty() {
                    return Err(Error::Empty("colluder subset"));
                }
                let mut mask = 0u32;
                for &j in a {
                    if j >= k || mask >> j & 1 == 1 {
                        return Err(Error::Config(format!("bad colluder subset {a:?}")));
                    }
                    mask |= 1 << j;
                }
                Ok(Part::Subset(mask))
            }
        }
    }

    fn symmetric(&self, k: usize) -> bool {
        match self {
            Target::User(_) => k == 1,
            Target::Subset(a) => a.len() == k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PspOptions {
    pub starts: usize,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Largest constraint violation accepted as feasible.
    pub feas_tol: f64,
    pub seed: u64,
}

impl Default for PspOptions {
    fn default() -> Self {
        Self { starts: 4, max_outer: 60, max_inner: 500, feas_tol: 1e-6, seed: 0x5eed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PspSolution {
    /// Exponent in bits; `+∞` when no joint law meets the constraints.
    pub value: f64,
    /// Smallest score over feasible channels at the encoder law itself.
    pub inner_min: f64,
    pub violation: f64,
    pub feasible_starts: usize,
    /// Minimizing joint law, flat `[cell][x_K][y]` over cells of positive weight.
    pub p_tilde: Vec<f64>,
    /// Its channel (constrained variant) or the reference channel (memoryless variant).
    pub channel: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Variant {
    Constrained,
    Memoryless,
}

enum VParam {
    Absent,
    Groups { free: Vec<Vec<usize>>, pinned: Vec<(usize, usize)> },
    Hull { vertices: Vec<Vec<f64>> },
}

impl VParam {
    fn vars(&self, ny: usize) -> usize {
        match self {
            VParam::Absent => 0,
            VParam::Groups { free, .. } => free.len() * ny,
            VParam::Hull { vertices } => vertices.len(),
        }
    }
}

struct Cap {
    u_of: Vec<usize>,
    z_of: Vec<usize>,
    nu: usize,
    nz: usize,
    scale: f64,
    constant: f64,
    rate: f64,
}

struct Program {
    variant: Variant,
    ny: usize,
    inputs: usize,
    cw: Vec<f64>,
    /// `Π_k p(x_k | cell)` per active cell.
    qk: Vec<Vec<f64>>,
    /// Softmax slots per active cell; each slot spreads evenly over its positions.
    slots: Vec<Vec<Vec<usize>>>,
    offsets: Vec<usize>,
    v: VParam,
    v_offset: usize,
    nvars: usize,
    marg: Vec<(usize, Vec<usize>, f64)>,
    channel_eq: Vec<usize>,
    omega_cost: Option<(Vec<f64>, f64)>,
    v_cost: Option<(Vec<f64>, f64)>,
    cap: Cap,
}

struct State {
    omega: Vec<Vec<f64>>,
    v: Vec<f64>,
    pxy: Vec<f64>,
    px: Vec<f64>,
    puz: Vec<f64>,
    pz: Vec<f64>,
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn softmax_back(p: &[f64], g: &[f64], out: &mut [f64]) {
    let mean: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    for ((o, &pi), &gi) in out.iter_mut().zip(p).zip(g) {
        *o = pi * (gi - mean);
    }
}

impl Program {
    fn build(
        problem: &GameProblem,
        law: &InputLaw,
        target: &Target,
        rate: f64,
        variant: Variant,
        coalition: &[f64],
    ) -> Result<Self> {
        let (k, q, ny, l) = (problem.k, problem.x_alphabet, problem.y_alphabet, problem.l);
        let inputs = problem.inputs();
        let part = target.part(k)?;
        let fair = problem.class.fair;
        let exchangeable = fair && target.symmetric(k);

        let mut cells = Vec::new();
        let mut cw = Vec::new();
        let mut qx = Vec::new();
        for (c, weight, px) in cell_laws(problem, law) {
            if weight > 0.0 {
                cells.push(c);
                cw.push(weight);
                qx.push(px);
            }
        }
        let qk: Vec<Vec<f64>> = qx.iter().map(|px| (0..inputs).map(|x| product_prob(x, k, px)).collect()).collect();

        // Output symbols a feasible channel can put on each input.
        let hull = problem.hull_vertices()?;
        let mut allowed = vec![true; inputs * ny];
        match &problem.class.kind {
            ClassKind::BonehShaw => {
                for x in 0..inputs {
                    let d = digits(x, k, q);
                    if d.iter().all(|&s| s == d[0]) {
                        for y in 0..ny {
                            allowed[x * ny + y] = y == d[0];
                        }
                    }
                }
            }
            ClassKind::Explicit { .. } => {
                for (pos, a) in allowed.iter_mut().enumerate() {
                    *a = hull.iter().any(|v| v[pos] > 0.0);
                }
            }
            ClassKind::Distortion { .. } => {}
        }

        let orbit_groups = RowGroups::new(k, q, ny, true, false).groups;
        let row_sets: Vec<Vec<usize>> =
            if exchangeable { orbit_groups } else { (0..inputs).map(|x| vec![x]).collect() };
        let mut slots = Vec::with_capacity(cells.len());
        for qc in &qk {
            let mut cell_slots = Vec::new();
            for rows in &row_sets {
                if qc[rows[0]] == 0.0 {
                    continue;
                }
                for y in 0..ny {
                    if allowed[rows[0] * ny + y] {
                        cell_slots.push(rows.iter().map(|&x| x * ny + y).collect::<Vec<_>>());
                    }
                }
            }
            slots.push(cell_slots);
        }

        let marking = matches!(problem.class.kind, ClassKind::BonehShaw);
        let v = if matches!(problem.class.kind, ClassKind::Explicit { .. }) {
            VParam::Hull { vertices: hull }
        } else if variant == Variant::Memoryless || (fair && !exchangeable) {
            let g = RowGroups::new(k, q, ny, fair, marking);
            let mut free = Vec::new();
            let mut pinned = Vec::new();
            for (rows, pin) in g.groups.iter().zip(&g.pinned) {
                match pin {
                    Some(y) => pinned.extend(rows.iter().map(|&r| (r, *y))),
                    None => free.push(rows.clone()),
                }
            }
            VParam::Groups { free, pinned }
        } else {
            VParam::Absent
        };

        let mut offsets = Vec::with_capacity(slots.len());
        let mut nvars = 0;
        for s in &slots {
            offsets.push(nvars);
            nvars += s.len();
        }
        let v_offset = nvars;
        nvars += v.vars(ny);

        let mut marg = Vec::new();
        let users: Vec<usize> = if exchangeable { vec![0] } else { (0..k).collect() };
        for (i, px) in qx.iter().enumerate() {
            for &m in &users {
                for sym in 0..q.saturating_sub(1) {
                    let set: Vec<usize> = (0..inputs)
                        .filter(|&x| digits(x, k, q)[m] == sym)
                        .flat_map(|x| (0..ny).map(move |y| x * ny + y))
                        .collect();
                    marg.push((i, set, px[sym]));
                }
            }
        }

        let channel_eq = if variant == Variant::Constrained && !matches!(v, VParam::Absent) {
            (0..inputs * ny).filter(|&p| allowed[p]).collect()
        } else {
            Vec::new()
        };

        let (mut omega_cost, mut v_cost) = (None, None);
        if let ClassKind::Distortion { estimator, d2, d2_max } = &problem.class.kind {
            let d: Vec<f64> = (0..inputs * ny).map(|p| d2[estimator.map[p / ny] as usize * ny + p % ny]).collect();
            match variant {
                Variant::Constrained => omega_cost = Some((d, *d2_max)),
                Variant::Memoryless => {
                    let c: Vec<f64> = d.iter().enumerate().map(|(p, v)| coalition[p / ny] * v).collect();
                    v_cost = Some((c, *d2_max));
                }
            }
        }

        let h = |p: &[f64]| fptrace_core::types::pmf_entropy(p);
        let total: f64 = cw.iter().sum();
        let (nu, nz, scale, constant, u_of, z_of) = match part {
            Part::Subset(mask) => {
                let a = mask.count_ones() as usize;
                let nrest = q.pow((k - a) as u32);
                let mut u_of = Vec::new();
                let mut z_of = Vec::new();
                for i in 0..cells.len() {
                    for pos in 0..inputs * ny {
                        let (x, y) = (pos / ny, pos % ny);
                        let (mut u, mut rest) = (0, 0);
                        for (j, &xj) in digits(x, k, q).iter().enumerate() {
                            if mask >> j & 1 == 1 {
                                u = u * q + xj;
                            } else {
                                rest = rest * q + xj;
                            }
                        }
                        u_of.push(u);
                        z_of.push((i * nrest + rest) * ny + y);
                    }
                }
                let hq: f64 = cw.iter().zip(&qx).map(|(w, p)| w * h(p)).sum::<f64>() / total;
                (q.pow(a as u32), cells.len() * nrest * ny, 1.0 / a as f64, a as f64 * hq, u_of, z_of)
            }
            Part::User(m) => {
                let mut u_of = Vec::new();
                let mut z_of = Vec::new();
                let mut pxw = vec![0.0; l * q];
                for (i, &c) in cells.iter().enumerate() {
                    let w = c % l;
                    for (x, p) in qx[i].iter().enumerate() {
                        pxw[w * q + x] += cw[i] * p / total;
                    }
                    for pos in 0..inputs * ny {
                        let (x, y) = (pos / ny, pos % ny);
                        u_of.push(digits(x, k, q)[m]);
                        z_of.push(w * ny + y);
                    }
                }
                let mut hq = 0.0;
                for w in 0..l {
                    let row = &pxw[w * q..(w + 1) * q];
                    let pw: f64 = row.iter().sum();
                    if pw > 0.0 {
                        let cond: Vec<f64> = row.iter().map(|v| v / pw).collect();
                        hq += pw * h(&cond);
                    }
                }
                (q, l * ny, 1.0, hq, u_of, z_of)
            }
        };
        let cw = cw.iter().map(|w| w / total).collect();
        Ok(Self {
            variant,
            ny,
            inputs,
            cw,
            qk,
            slots,
            offsets,
            v,
            v_offset,
            nvars,
            marg,
            channel_eq,
            omega_cost,
            v_cost,
            cap: Cap { u_of, z_of, nu, nz, scale, constant, rate },
        })
    }

    fn forward(&self, z: &[f64]) -> State {
        let (ny, inputs) = (self.ny, self.inputs);
        let mut omega = Vec::with_capacity(self.slots.len());
        let mut pxy = vec![0.0; inputs * ny];
        for (i, slots) in self.slots.iter().enumerate() {
            let p = softmax(&z[self.offsets[i]..self.offsets[i] + slots.len()]);
            let mut om = vec![0.0; inputs * ny];
            for (slot, &ps) in slots.iter().zip(&p) {
                let share = ps / slot.len() as f64;
                for &pos in slot {
                    om[pos] = share;
                }
            }
            for (a, &b) in pxy.iter_mut().zip(&om) {
                *a += self.cw[i] * b;
            }
            omega.push(om);
        }
        let px: Vec<f64> = pxy.chunks(ny).map(|r| r.iter().sum()).collect();
        let v = self.channel_of(z);
        let mut puz = vec![0.0; self.cap.nu * self.cap.nz];
        let per_cell = inputs * ny;
        for (i, om) in omega.iter().enumerate() {
            for (pos, &o) in om.iter().enumerate() {
                if o > 0.0 {
                    let idx = i * per_cell + pos;
                    puz[self.cap.z_of[idx] * self.cap.nu + self.cap.u_of[idx]] += self.cw[i] * o;
                }
            }
        }
        let pz: Vec<f64> = puz.chunks(self.cap.nu).map(|r| r.iter().sum()).collect();
        State { omega, v, pxy, px, puz, pz }
    }

    fn channel_of(&self, z: &[f64]) -> Vec<f64> {
        let ny = self.ny;
        let zv = &z[self.v_offset..];
        match &self.v {
            VParam::Absent => Vec::new(),
            VParam::Groups { free, pinned } => {
                let mut v = vec![0.0; self.inputs * ny];
                for (g, rows) in free.iter().enumerate() {
                    let p = softmax(&zv[g * ny..(g + 1) * ny]);
                    for &r in rows {
                        v[r * ny..(r + 1) * ny].copy_from_slice(&p);
                    }
                }
                for &(r, y) in pinned {
                    v[r * ny + y] = 1.0;
                }
                v
            }
            VParam::Hull { vertices } => {
                let mu = softmax(&zv[..vertices.len()]);
                let mut v = vec![0.0; self.inputs * ny];
                for (m, vert) in mu.iter().zip(vertices) {
                    for (a, b) in v.iter_mut().zip(vert) {
                        *a += m * b;
                    }
                }
                v
            }
        }
    }

    fn objective(&self, st: &State) -> f64 {
        let ny = self.ny;
        let mut total = 0.0;
        for (i, om) in st.omega.iter().enumerate() {
            let mut cell = 0.0;
            for (pos, &o) in om.iter().enumerate() {
                if o > 0.0 {
                    let x = pos / ny;
                    let reference = match self.variant {
                        Variant::Constrained => st.pxy[pos] / st.px[x],
                        Variant::Memoryless => st.v[pos],
                    } * self.qk[i][x];
                    cell += o * (o / reference).log2();
                }
            }
            total += self.cw[i] * cell;
        }
        total
    }

    fn cap_value(&self, st: &State) -> f64 {
        let mut h = 0.0;
        for (idx, &p) in st.puz.iter().enumerate() {
            if p > 0.0 {
                h -= p * (p / st.pz[idx / self.cap.nu]).log2();
            }
        }
        self.cap.scale * (self.cap.constant - h) - self.cap.rate
    }

    /// Equality residuals, then inequality residuals.
    fn residuals(&self, st: &State) -> (Vec<f64>, Vec<f64>) {
        let ny = self.ny;
        let mut h: Vec<f64> =
            self.marg.iter().map(|(i, set, t)| set.iter().map(|&p| st.omega[*i][p]).sum::<f64>() - t).collect();
        h.extend(self.channel_eq.iter().map(|&p| st.pxy[p] - st.v[p] * st.px[p / ny]));
        let mut g = Vec::new();
        if let Some((d, b)) = &self.omega_cost {
            g.push(st.pxy.iter().zip(d).map(|(a, c)| a * c).sum::<f64>() - b);
        }
        if let Some((c, b)) = &self.v_cost {
            g.push(st.v.iter().zip(c).map(|(a, c)| a * c).sum::<f64>() - b);
        }
        g.push(self.cap_value(st));
        (h, g)
    }

    /// Gradient of `F + Σ ch·h + Σ cg·g` with respect to the logits.
    fn gradient(&self, z: &[f64], st: &State, ch: &[f64], cg: &[f64]) -> Vec<f64> {
        let (ny, inputs) = (self.ny, self.inputs);
        let per_cell = inputs * ny;
        let mut d_om: Vec<Vec<f64>> = vec![vec![0.0; per_cell]; st.omega.len()];
        let mut d_v = vec![0.0; if st.v.is_empty() { 0 } else { per_cell }];

        for (i, om) in st.omega.iter().enumerate() {
            for (pos, &o) in om.iter().enumerate() {
                if o <= 0.0 {
                    continue;
                }
                let x = pos / ny;
                let reference = match self.variant {
                    Variant::Constrained => st.pxy[pos] / st.px[x],
                    Variant::Memoryless => st.v[pos],
                } * self.qk[i][x];
                d_om[i][pos] += self.cw[i] * (o.max(TINY) / reference.max(TINY)).log2();
            }
        }
        if self.variant == Variant::Memoryless {
            for (pos, d) in d_v.iter_mut().enumerate() {
                if st.pxy[pos] > 0.0 {
                    *d -= st.pxy[pos] / (st.v[pos].max(TINY) * LN2);
                }
            }
        }

        let mut at = 0;
        for (i, set, _) in &self.marg {
            for &p in set {
                d_om[*i][p] += ch[at];
            }
            at += 1;
        }
        for &p in &self.channel_eq {
            let c = ch[at];
            at += 1;
            if c == 0.0 {
                continue;
            }
            let (x, vy) = (p / ny, st.v[p]);
            for (i, d) in d_om.iter_mut().enumerate() {
                let w = c * self.cw[i];
                d[p] += w;
                for y in 0..ny {
                    d[x * ny + y] -= w * vy;
                }
            }
            d_v[p] -= c * st.px[x];
        }

        let mut at = 0;
        if let Some((d, _)) = &self.omega_cost {
            let c = cg[at];
            at += 1;
            for (i, dm) in d_om.iter_mut().enumerate() {
                for (a, b) in dm.iter_mut().zip(d) {
                    *a += c * self.cw[i] * b;
                }
            }
        }
        if let Some((cost, _)) = &self.v_cost {
            let c = cg[at];
            at += 1;
            for (a, b) in d_v.iter_mut().zip(cost) {
                *a += c * b;
            }
        }
        let c = cg[at];
        if c != 0.0 {
            for (i, dm) in d_om.iter_mut().enumerate() {
                for (pos, a) in dm.iter_mut().enumerate() {
                    let idx = i * per_cell + pos;
                    let zi = self.cap.z_of[idx];
                    let puz = st.puz[zi * self.cap.nu + self.cap.u_of[idx]];
                    *a += c * self.cap.scale * self.cw[i] * (puz.max(TINY) / st.pz[zi].max(TINY)).log2();
                }
            }
        }

        let mut grad = vec![0.0; self.nvars];
        for (i, slots) in self.slots.iter().enumerate() {
            let off = self.offsets[i];
            let p = softmax(&z[off..off + slots.len()]);
            let gs: Vec<f64> = slots
                .iter()
                .map(|slot| slot.iter().map(|&pos| d_om[i][pos]).sum::<f64>() / slot.len() as f64)
                .collect();
            softmax_back(&p, &gs, &mut grad[off..off + slots.len()]);
        }
        let zv = &z[self.v_offset..];
        let gv = &mut grad[self.v_offset..];
        match &self.v {
            VParam::Absent => {}
            VParam::Groups { free, .. } => {
                for (g, rows) in free.iter().enumerate() {
                    let p = softmax(&zv[g * ny..(g + 1) * ny]);
                    let mut gs = vec![0.0; ny];
                    for &r in rows {
                        for (a, b) in gs.iter_mut().zip(&d_v[r * ny..(r + 1) * ny]) {
                            *a += b;
                        }
                    }
                    softmax_back(&p, &gs, &mut gv[g * ny..(g + 1) * ny]);
                }
            }
            VParam::Hull { vertices } => {
                let mu = softmax(&zv[..vertices.len()]);
                let gs: Vec<f64> = vertices.iter().map(|v| v.iter().zip(&d_v).map(|(a, b)| a * b).sum()).collect();
                softmax_back(&mu, &gs, &mut gv[..vertices.len()]);
            }
        }
        grad
    }

    /// Logits reproducing a dense joint law and channel as closely as the
    /// parameterization allows.
    fn encode(&self, omega: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
        let ny = self.ny;
        let mut z = vec![0.0; self.nvars];
        for (i, slots) in self.slots.iter().enumerate() {
            for (j, slot) in slots.iter().enumerate() {
                let mass: f64 = slot.iter().map(|&p| omega[i][p]).sum();
                z[self.offsets[i] + j] = mass.max(1e-12).ln();
            }
        }
        if let VParam::Groups { free, .. } = &self.v {
            for (g, rows) in free.iter().enumerate() {
                for y in 0..ny {
                    z[self.v_offset + g * ny + y] = v[rows[0] * ny + y].max(1e-12).ln();
                }
            }
        }
        z
    }

    fn product_law(&self, channel: &[f64]) -> Vec<Vec<f64>> {
        let ny = self.ny;
        self.qk.iter().map(|qc| (0..self.inputs * ny).map(|p| qc[p / ny] * channel[p]).collect()).collect()
    }
}

struct Run {
    value: f64,
    violation: f64,
    z: Vec<f64>,
}

fn augmented_lagrangian(prog: &Program, z0: Vec<f64>, opts: &PspOptions) -> Run {
    let st = prog.forward(&z0);
    let (h0, g0) = prog.residuals(&st);
    let mut lambda = vec![0.0; h0.len()];
    let mut mu = vec![0.0; g0.len()];
    let mut rho = 10.0;
    let mut z = z0;
    let mut prev_violation = f64::INFINITY;
    let mut prev_value = f64::INFINITY;
    let mut violation = f64::INFINITY;
    let mut value = f64::INFINITY;
    for _ in 0..opts.max_outer {
        let (lam, m, r) = (lambda.clone(), mu.clone(), rho);
        let mut f = |zz: &[f64], grad: &mut [f64]| -> f64 {
            let st = prog.forward(zz);
            let (h, g) = prog.residuals(&st);
            let ch: Vec<f64> = h.iter().zip(&lam).map(|(hi, li)| li + r * hi).collect();
            let cg: Vec<f64> = g.iter().zip(&m).map(|(gi, mi)| (mi + r * gi).max(0.0)).collect();
            let mut total = prog.objective(&st);
            total += h.iter().zip(&lam).map(|(hi, li)| li * hi + 0.5 * r * hi * hi).sum::<f64>();
            total +=
                g.iter().zip(&m).map(|(gi, mi)| ((mi + r * gi).max(0.0).powi(2) - mi * mi) / (2.0 * r)).sum::<f64>();
            grad.copy_from_slice(&prog.gradient(zz, &st, &ch, &cg));
            total
        };
        let min = lbfgs::minimize(&mut f, &z, opts.max_inner, 1e-11);
        z = min.x;
        let st = prog.forward(&z);
        let (h, g) = prog.residuals(&st);
        value = prog.objective(&st);
        violation = h.iter().map(|v| v.abs()).chain(g.iter().map(|v| v.max(0.0))).fold(0.0, f64::max);
        for (l, hi) in lambda.iter_mut().zip(&h) {
            *l += rho * hi;
        }
        for (m, gi) in mu.iter_mut().zip(&g) {
            *m = (*m + rho * gi).max(0.0);
        }
        if violation < 1e-10 && (value - prev_value).abs() < 1e-11 {
            break;
        }
        if violation > 0.25 * prev_violation {
            rho = (rho * 10.0).min(1e10);
        }
        prev_violation = violation;
        prev_value = value;
    }
    Run { value, violation, z }
}

fn noise(seed: u64, start: usize, i: usize) -> f64 {
    let bits = mix64(seed ^ mix64(start as u64) ^ mix64(i as u64 ^ 0x9e37_79b9));
    (bits >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn solve(
    problem: &GameProblem,
    law: &InputLaw,
    target: &Target,
    rate: f64,
    variant: Variant,
    opts: &PspOptions,
    warm: &[PspSolution],
) -> Result<PspSolution> {
    problem.validate()?;
    law.validate(problem)?;
    if !(rate >= 0.0) {
        return Err(Error::Config(format!("rate must be nonnegative, got {rate}")));
    }
    let part = target.part(problem.k)?;
    let coalition = law.coalition_law(problem);
    let poly = build_polytope(problem, &coalition)?;
    let score = MiFunctional::new(problem, law, part);
    let opt = &problem.options;
    let mut fw = frank_wolfe(poly.as_ref(), &score, None, opt.inner_tol, opt.inner_max_iters);
    fw.value = fw.value.max(0.0);
    let prog = Program::build(problem, law, target, rate, variant, &coalition)?;
    if fw.value <= rate {
        let omega = prog.product_law(&fw.point);
        return Ok(PspSolution {
            value: 0.0,
            inner_min: fw.value,
            violation: 0.0,
            feasible_starts: 1,
            p_tilde: omega.concat(),
            channel: fw.point,
        });
    }

    let ny = problem.y_alphabet;
    let base = prog.encode(&prog.product_law(&fw.point), &fw.point);
    let mut starts = vec![base.clone()];
    let uniform: Vec<f64> = vec![1.0 / ny as f64; problem.inputs() * ny];
    let spread: Vec<Vec<f64>> = prog
        .product_law(&uniform)
        .iter()
        .zip(prog.product_law(&fw.point))
        .map(|(a, b)| a.iter().zip(&b).map(|(u, v)| 0.5 * (u + v)).collect())
        .collect();
    starts.push(prog.encode(&spread, &fw.point));
    for s in 2..opts.starts.max(2) {
        starts.push(base.iter().enumerate().map(|(i, v)| v + noise(opts.seed, s, i)).collect());
    }
    for w in warm {
        let omega: Vec<Vec<f64>> = w.p_tilde.chunks(problem.inputs() * ny).map(<[f64]>::to_vec).collect();
        if omega.len() == prog.slots.len() {
            starts.push(prog.encode(&omega, &w.channel));
        }
    }

    let mut best: Option<Run> = None;
    let mut feasible = 0;
    let mut least_violation = f64::INFINITY;
    for z0 in starts {
        let run = augmented_lagrangian(&prog, z0, opts);
        least_violation = least_violation.min(run.violation);
        if run.violation <= opts.feas_tol {
            feasible += 1;
            if best.as_ref().is_none_or(|b| run.value < b.value) {
                best = Some(run);
            }
        }
    }
    debug!("exponent at R={rate}: {feasible} feasible starts, least violation {least_violation:.3e}");
    let Some(best) = best else {
        return Ok(PspSolution {
            value: f64::INFINITY,
            inner_min: fw.value,
            violation: least_violation,
            feasible_starts: 0,
            p_tilde: Vec::new(),
            channel: Vec::new(),
        });
    };
    let st = prog.forward(&best.z);
    let channel = match variant {
        Variant::Memoryless => st.v.clone(),
        Variant::Constrained => {
            st.pxy.iter().enumerate().map(|(p, &v)| if st.px[p / ny] > 0.0 { v / st.px[p / ny] } else { 0.0 }).collect()
        }
    };
    Ok(PspSolution {
        value: best.value.max(0.0),
        inner_min: fw.value,
        violation: best.violation,
        feasible_starts: feasible,
        p_tilde: st.omega.concat(),
        channel,
    })
}

/// Pseudo sphere-packing exponent at rate `rate` for the encoder law `law`.
pub fn pseudo_sphere_packing(rate: f64, law: &InputLaw, problem: &GameProblem, target: &Target) -> Result<f64> {
    Ok(pseudo_sphere_packing_detailed(rate, law, problem, target, &PspOptions::default())?.value)
}

pub fn pseudo_sphere_packing_detailed(
    rate: f64,
    law: &InputLaw,
    problem: &GameProblem,
    target: &Target,
    opts: &PspOptions,
) -> Result<PspSolution> {
    solve(problem, law, target, rate, Variant::Constrained, opts, &[])
}

/// Exponent for memoryless collusion: the channel constraint on the joint
/// law is dropped and the reference channel is optimized over the class.
pub fn memoryless_exponent_variant(rate: f64, law: &InputLaw, problem: &GameProblem, target: &Target) -> Result<f64> {
    Ok(memoryless_exponent_detailed(rate, law, problem, target, &PspOptions::default())?.value)
}

pub fn memoryless_exponent_detailed(
    rate: f64,
    law: &InputLaw,
    problem: &GameProblem,
    target: &Target,
    opts: &PspOptions,
) -> Result<PspSolution> {
    solve(problem, law, target, rate, Variant::Memoryless, opts, &[])
}

/// Exponents over increasing rates. Each solve also starts from the
/// previous minimizer, which stays feasible as the rate grows, so the
/// reported values never increase.
pub fn psp_sweep(rates: &[f64], law: &InputLaw, problem: &GameProblem, target: &Target) -> Result<Vec<f64>> {
    let mut order: Vec<usize> = (0..rates.len()).collect();
    order.sort_by(|&a, &b| rates[a].total_cmp(&rates[b]));
    let opts = PspOptions::default();
    let mut out = vec![0.0; rates.len()];
    let mut prev: Option<PspSolution> = None;
    for i in order {
        let warm: Vec<PspSolution> = prev.iter().cloned().collect();
        let mut sol = solve(problem, law, target, rates[i], Variant::Constrained, &opts, &warm)?;
        if let Some(p) = &prev {
            if p.value < sol.value {
                sol = PspSolution { inner_min: sol.inner_min, ..p.clone() };
            }
        }
        out[i] = sol.value;
        prev = Some(sol);
    }
    Ok(out)
}
