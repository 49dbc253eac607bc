//! Primal-dual path-following iteration for the block moment SDP
//!
//!   min c·y  s.t.  M_b(y) ⪰ 0 for every block b,  A y = d,
//!
//! where each M_b is linear in y. The dual carries a PSD matrix Z_b per
//! block and a multiplier per equality row; its objective d·λ is the
//! reported bound. Directions are Nesterov–Todd scaled with a Mehrotra
//! predictor-corrector; the Newton system reduces to a quasidefinite
//! solve over (Δy, Δλ) handled by [`super::kkt::KktSystem`]. All linear
//! algebra inside blocks is dense; block sizes stay small by construction.

use std::collections::{BTreeMap, HashMap, HashSet};

use faer::{MatRef, Side};

use crate::poly::Monomial;
use crate::relax::{BlockSdp, PsdBlock, RowSource};

use super::kkt::KktSystem;
use super::{IterRow, SdpSolution, SolveOptions, Status};

/// Step-length damping: fraction of the exact distance to the cone boundary.
/// Conservative on purpose — PSD iterates lose centrality much faster than
/// LP ones, and the corrector blows up on de-centered points.
const GAMMA: f64 = 0.9;
/// Combined steps below this trigger a pure centering retry.
const FALLBACK_STEP: f64 = 0.05;
/// Steps below this for [`STALL_LIMIT`] consecutive iterations while
/// unconverged are declared slow progress.
const STALL_STEP: f64 = 1e-4;
const STALL_LIMIT: u32 = 10;

/// Iterations without a ≥1% improvement of the best accuracy score before an
/// already-accurate run (score below [`PLATEAU_SCORE`]) settles for what it
/// has. Degenerate relaxations routinely flatline near the achievable
/// precision; grinding further only degrades the iterate.
const PLATEAU_LIMIT: u32 = 15;
const PLATEAU_SCORE: f64 = 1e-2;

/// A PSD block flattened to full (both-triangle) entry lists per supported
/// moment, the layout every hot loop runs on.
///
/// When the equality rows force a common kernel on the block (see
/// [`face_reductions`]), `face` holds an orthonormal basis U of the
/// complement and the cone algebra runs on the reduced matrices Uᵀ·M·U of
/// dimension `size`; the sparse entries always index the original `orig`
/// rows and columns. The reduced operators never need the reduced
/// coefficient matrices explicitly: Uᵀ·A·U against V equals A against
/// U·V·Uᵀ, so every loop below works on original coordinates with sandwiched
/// arguments.
struct BlockData {
    /// Dimension the interior-point algebra runs on.
    size: usize,
    /// Original block dimension (row/column space of the sparse entries).
    orig: usize,
    /// Column-major `orig × size` orthonormal face basis; `None` = identity.
    face: Option<Vec<f64>>,
    support: Vec<u32>,
    ptr: Vec<u32>,
    row: Vec<u32>,
    col: Vec<u32>,
    val: Vec<f64>,
}

impl BlockData {
    fn from_block(b: &PsdBlock, face: Option<Vec<f64>>) -> BlockData {
        let mut ptr = Vec::with_capacity(b.support.len() + 1);
        let mut row = Vec::new();
        let mut col = Vec::new();
        let mut val = Vec::new();
        ptr.push(0u32);
        for list in &b.coeffs {
            for &(r, c, v) in list {
                row.push(r);
                col.push(c);
                val.push(v);
                if r != c {
                    row.push(c);
                    col.push(r);
                    val.push(v);
                }
            }
            ptr.push(row.len() as u32);
        }
        let size = match &face {
            Some(u) => u.len() / b.size,
            None => b.size,
        };
        BlockData {
            size,
            orig: b.size,
            face,
            support: b.support.clone(),
            ptr,
            row,
            col,
            val,
        }
    }

    /// M_b(y) in original coordinates, into a dense column-major matrix.
    fn eval_raw(&self, y: &[f64], out: &mut [f64]) {
        let n = self.orig;
        out.fill(0.0);
        for (s, &g) in self.support.iter().enumerate() {
            let w = y[g as usize];
            if w == 0.0 {
                continue;
            }
            for e in self.ptr[s] as usize..self.ptr[s + 1] as usize {
                out[self.row[e] as usize + self.col[e] as usize * n] += self.val[e] * w;
            }
        }
    }

    /// The block map at y on the reduced face: Uᵀ M_b(y) U (`size`²).
    fn eval(&self, y: &[f64], out: &mut [f64]) {
        match &self.face {
            None => self.eval_raw(y, out),
            Some(u) => {
                let mut full = vec![0.0; self.orig * self.orig];
                self.eval_raw(y, &mut full);
                sandwich_down(self.orig, self.size, u, &full, out);
            }
        }
    }

    /// out[g] += ⟨Uᵀ A_g U, V⟩ for each supported moment (V is `size`²).
    fn adjoint(&self, v: &[f64], out: &mut [f64]) {
        match &self.face {
            None => self.adjoint_raw(v, out),
            Some(u) => {
                let full = expand_up(self.orig, self.size, u, v);
                self.adjoint_raw(&full, out);
            }
        }
    }

    fn adjoint_raw(&self, v: &[f64], out: &mut [f64]) {
        let n = self.orig;
        for (s, &g) in self.support.iter().enumerate() {
            let mut acc = 0.0;
            for e in self.ptr[s] as usize..self.ptr[s + 1] as usize {
                acc += self.val[e] * v[self.row[e] as usize + self.col[e] as usize * n];
            }
            out[g as usize] += acc;
        }
    }

    /// Local Schur matrix ⟨Uᵀ A_g U, V (Uᵀ A_h U) V⟩ over support pairs
    /// s ≤ t, in the scatter order of [`KktSystem`]; V is `size`².
    fn schur(&self, v: &[f64], out: &mut Vec<f64>) {
        match &self.face {
            None => self.schur_raw(v, out),
            Some(u) => {
                let full = expand_up(self.orig, self.size, u, v);
                self.schur_raw(&full, out);
            }
        }
    }

    fn schur_raw(&self, v: &[f64], out: &mut Vec<f64>) {
        let n = self.orig;
        let q = self.support.len();
        out.clear();
        out.reserve(q * (q + 1) / 2);
        for s in 0..q {
            let (slo, shi) = (self.ptr[s] as usize, self.ptr[s + 1] as usize);
            for t in s..q {
                let (tlo, thi) = (self.ptr[t] as usize, self.ptr[t + 1] as usize);
                let mut acc = 0.0;
                for e in slo..shi {
                    let (a, b, ve) = (self.row[e] as usize, self.col[e] as usize, self.val[e]);
                    let mut inner = 0.0;
                    for f in tlo..thi {
                        let (cc, dd) = (self.row[f] as usize, self.col[f] as usize);
                        inner += self.val[f] * v[a + cc * n] * v[b + dd * n];
                    }
                    acc += ve * inner;
                }
                out.push(acc);
            }
        }
    }

    /// Lifts a reduced-face matrix back to original coordinates: U V Uᵀ.
    fn unreduce(&self, v: &[f64]) -> Vec<f64> {
        match &self.face {
            None => v.to_vec(),
            Some(u) => expand_up(self.orig, self.size, u, v),
        }
    }
}

/// C = Uᵀ M U for column-major U (k×kt) and symmetric M (k×k).
fn sandwich_down(k: usize, kt: usize, u: &[f64], m: &[f64], out: &mut [f64]) {
    let mut tmp = vec![0.0; k * kt]; // M·U
    for j in 0..kt {
        for l in 0..k {
            let w = u[l + j * k];
            if w != 0.0 {
                for i in 0..k {
                    tmp[i + j * k] += m[i + l * k] * w;
                }
            }
        }
    }
    for j in 0..kt {
        for i in 0..kt {
            let mut acc = 0.0;
            for l in 0..k {
                acc += u[l + i * k] * tmp[l + j * k];
            }
            out[i + j * kt] = acc;
        }
    }
}

/// U V Uᵀ (k×k) for column-major U (k×kt) and symmetric V (kt×kt).
fn expand_up(k: usize, kt: usize, u: &[f64], v: &[f64]) -> Vec<f64> {
    let mut tmp = vec![0.0; k * kt]; // U·V
    for j in 0..kt {
        for l in 0..kt {
            let w = v[l + j * kt];
            if w != 0.0 {
                for i in 0..k {
                    tmp[i + j * k] += u[i + l * k] * w;
                }
            }
        }
    }
    let mut out = vec![0.0; k * k];
    for j in 0..k {
        for i in 0..k {
            let mut acc = 0.0;
            for l in 0..kt {
                acc += tmp[i + l * k] * u[j + l * k];
            }
            out[i + j * k] = acc;
        }
    }
    out
}

/// Detects the face each PSD block is confined to by the equality rows.
///
/// An equality row for constraint q with shift s stores the coefficients of
/// q·s. Take a block with basis B and multiplier polynomial g (g = 1 for a
/// moment matrix) and suppose q·s fits inside B. With v the coefficient
/// vector of q·s over B, entry m of M_g(y)·v equals L(g·m·q·s) =
/// Σ_β g_β L(q·(s·β·m)) — and whenever every product s·β·m is itself a
/// covered shift of q, each summand is an equality row pinned to zero. Then
/// M_g(y)·v = 0 at every feasible y: the block lives on the orthogonal
/// complement of all such v, the relaxation has no strictly feasible point,
/// the dual optimum escapes to infinity, and the interior-point iteration
/// breaks down near convergence. Restricting each affected block to its face
/// (Uᵀ M U with U spanning the complement) leaves the feasible set untouched
/// — M ⪰ 0 ⟺ Uᵀ M U ⪰ 0 once M·v = 0 is forced — and restores an interior.
///
/// Returns, per block, the column-major orthonormal complement basis, or
/// `None` when the block has no forced kernel.
fn face_reductions(sdp: &BlockSdp) -> Vec<Option<Vec<f64>>> {
    // Rows grouped per equality constraint: the shift monomials the rows
    // cover, and every row as a kernel candidate.
    let mut shifts: HashMap<usize, HashSet<&Monomial>> = HashMap::new();
    let mut rows: BTreeMap<usize, Vec<(&Monomial, &crate::relax::LinRow)>> = BTreeMap::new();
    for row in &sdp.eq_rows {
        if let RowSource::Equality { constraint, shift } = &row.source {
            shifts.entry(*constraint).or_default().insert(shift);
            rows.entry(*constraint).or_default().push((shift, row));
        }
    }

    sdp.blocks
        .iter()
        .map(|b| {
            let k = b.size;
            if !b.basis.first().is_some_and(Monomial::is_one) {
                return None;
            }
            let index: HashMap<&Monomial, usize> =
                b.basis.iter().enumerate().map(|(i, m)| (m, i)).collect();
            // The block's multiplier monomials, read off its (0,0) cell:
            // that cell holds L(g·1·1), one entry per monomial of g.
            let mult: Vec<&Monomial> = b
                .coeffs
                .iter()
                .enumerate()
                .filter(|(_, cells)| cells.iter().any(|&(r, c, _)| r == 0 && c == 0))
                .map(|(gi, _)| &sdp.y_monomials[b.support[gi] as usize])
                .collect();

            let mut kernel: Vec<Vec<f64>> = Vec::new();
            for (c, list) in &rows {
                let Some(sh) = shifts.get(c) else { continue };
                'cand: for (s, row) in list {
                    let mut v = vec![0.0; k];
                    for &(g, a) in &row.terms {
                        match index.get(&sdp.y_monomials[g as usize]) {
                            Some(&i) => v[i] = a,
                            None => continue 'cand, // row reaches outside this basis
                        }
                    }
                    for m in &b.basis {
                        for g in &mult {
                            if !sh.contains(&s.mul(g).mul(m)) {
                                continue 'cand; // some product row is missing
                            }
                        }
                    }
                    // orthogonalize against the kernel vectors found so far
                    for _ in 0..2 {
                        for q in &kernel {
                            let p = dot(q, &v);
                            for (vi, qi) in v.iter_mut().zip(q) {
                                *vi -= p * qi;
                            }
                        }
                    }
                    let nrm = dot(&v, &v).sqrt();
                    if nrm > 1e-8 {
                        for vi in &mut v {
                            *vi /= nrm;
                        }
                        kernel.push(v);
                    }
                }
            }

            let t = kernel.len();
            if t == 0 || t >= k {
                return None;
            }
            // orthonormal complement: project the identity columns off the
            // kernel and off the complement vectors already kept
            let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k - t);
            for i in 0..k {
                if cols.len() == k - t {
                    break;
                }
                let mut w = vec![0.0; k];
                w[i] = 1.0;
                for _ in 0..2 {
                    for q in kernel.iter().chain(cols.iter()) {
                        let p = dot(q, &w);
                        for (wi, qi) in w.iter_mut().zip(q) {
                            *wi -= p * qi;
                        }
                    }
                }
                let nrm = dot(&w, &w).sqrt();
                if nrm > 1e-8 {
                    for wi in &mut w {
                        *wi /= nrm;
                    }
                    cols.push(w);
                }
            }
            debug_assert_eq!(cols.len(), k - t, "complement dimension mismatch");
            let mut u = Vec::with_capacity(k * (k - t));
            for col in &cols {
                u.extend_from_slice(col);
            }
            Some(u)
        })
        .collect()
}

// ---- small dense helpers (column-major square matrices) ----

fn mm(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for j in 0..n {
        for k in 0..n {
            let bkj = b[k + j * n];
            if bkj == 0.0 {
                continue;
            }
            let acol = &a[k * n..k * n + n];
            let ocol = &mut out[j * n..j * n + n];
            for i in 0..n {
                ocol[i] += acol[i] * bkj;
            }
        }
    }
    out
}

/// Symmetric eigendecomposition of a column-major `n`×`n` matrix: values
/// ascending, eigenvectors as columns.
pub(crate) fn eig_sym(n: usize, a: &[f64]) -> Result<(Vec<f64>, Vec<f64>), String> {
    let m = MatRef::from_column_major_slice(a, n, n);
    let e = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|err| format!("eigendecomposition failed: {err:?}"))?;
    let vals: Vec<f64> = (0..n).map(|i| e.S().column_vector()[i]).collect();
    let mut vecs = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            vecs[i + j * n] = e.U()[(i, j)];
        }
    }
    Ok((vals, vecs))
}

fn eigvals_sym(n: usize, a: &[f64]) -> Result<Vec<f64>, String> {
    let m = MatRef::from_column_major_slice(a, n, n);
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|err| format!("eigenvalue computation failed: {err:?}"))
}

/// U diag(f) Uᵀ.
fn from_eigen(n: usize, u: &[f64], f: &[f64]) -> Vec<f64> {
    let mut uf = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            uf[i + j * n] = u[i + j * n] * f[j];
        }
    }
    // uf · uᵀ
    let mut out = vec![0.0; n * n];
    for j in 0..n {
        for k in 0..n {
            let ujk = u[j + k * n];
            if ujk == 0.0 {
                continue;
            }
            let c = &uf[k * n..k * n + n];
            let o = &mut out[j * n..j * n + n];
            for i in 0..n {
                o[i] += c[i] * ujk;
            }
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}

fn fro(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn sym_part(n: usize, a: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            out[i + j * n] = 0.5 * (a[i + j * n] + a[j + i * n]);
        }
    }
    out
}

/// Largest t with M + t·ΔM ⪰ 0, via the spectrum of M^{-1/2} ΔM M^{-1/2}.
fn boundary_step(n: usize, minvhalf: &[f64], dm: &[f64]) -> Result<f64, String> {
    let g = mm(n, &mm(n, minvhalf, dm), minvhalf);
    let vals = eigvals_sym(n, &sym_part(n, &g))?;
    let lo = vals.first().copied().unwrap_or(0.0);
    let hi = vals.last().copied().unwrap_or(0.0);
    if lo >= -1e-13 * hi.abs().max(1.0) {
        Ok(f64::INFINITY)
    } else {
        Ok(-1.0 / lo)
    }
}

#[derive(Clone)]
struct Residuals {
    rp_mat: Vec<Vec<f64>>,
    rp_eq: Vec<f64>,
    rd: Vec<f64>,
    pinf: f64,
    dinf: f64,
    mu: f64,
    pobj: f64,
    dobj: f64,
    rel_gap: f64,
    /// ‖Σ 𝒜*(Z) + Aᵀλ‖∞ — the homogeneous dual residual used for the
    /// infeasibility certificate.
    ray_res: f64,
}

/// Snapshot of the most accurate iterate seen so far, kept because the last
/// iterations can degrade once the barrier parameter reaches the numerical
/// floor: a failed endgame should still report the best point it passed
/// through.
struct Best {
    score: f64,
    y: Vec<f64>,
    lam: Vec<f64>,
    z: Vec<Vec<f64>>,
    res: Residuals,
    iter: u32,
}

/// Wraps [`finish`], substituting the snapshot when it is strictly more
/// accurate than the current iterate.
#[allow(clippy::too_many_arguments)]
fn settle(
    sdp: &BlockSdp,
    blocks: &[BlockData],
    status: Status,
    y: Vec<f64>,
    lam: Vec<f64>,
    z: Vec<Vec<f64>>,
    iter: u32,
    res: &Residuals,
    best: Option<Best>,
    log: Vec<IterRow>,
    note: Option<String>,
) -> SdpSolution {
    let cur = res.pinf.max(res.dinf).max(res.rel_gap);
    if let Some(b) = best {
        if b.score < cur {
            let tag = format!(
                "reporting the more accurate iterate from iteration {}",
                b.iter
            );
            let note = Some(match note {
                Some(msg) => format!("{msg}; {tag}"),
                None => tag,
            });
            return finish(
                sdp, blocks, status, b.y, b.lam, b.z, iter, &b.res, log, note,
            );
        }
    }
    finish(sdp, blocks, status, y, lam, z, iter, res, log, note)
}

pub(super) fn run(sdp: &BlockSdp, opts: &SolveOptions) -> SdpSolution {
    let n = sdp.n_moments();
    let faces = face_reductions(sdp);
    let blocks: Vec<BlockData> = sdp
        .blocks
        .iter()
        .zip(faces)
        .map(|(b, f)| BlockData::from_block(b, f))
        .collect();
    #[cfg(feature = "ipm-trace")]
    {
        let reduced: Vec<String> = blocks
            .iter()
            .filter(|b| b.size < b.orig)
            .map(|b| format!("{}->{}", b.orig, b.size))
            .collect();
        eprintln!(
            "faces: {} of {} blocks reduced [{}]",
            reduced.len(),
            blocks.len(),
            reduced.join(" ")
        );
    }
    let eq_terms: Vec<Vec<(u32, f64)>> = sdp.eq_rows.iter().map(|r| r.terms.clone()).collect();
    let d: Vec<f64> = sdp.eq_rows.iter().map(|r| r.rhs).collect();
    let m_eq = d.len();
    let mut c = vec![0.0; n];
    for &(g, v) in &sdp.objective {
        c[g as usize] = v;
    }
    let nu: f64 = blocks.iter().map(|b| b.size as f64).sum::<f64>().max(1.0);
    let c_norm = norm_inf(&c);
    let d_norm = norm_inf(&d);

    let supports: Vec<Vec<u32>> = blocks.iter().map(|b| b.support.clone()).collect();
    let mut kkt = match KktSystem::new(n, &supports, &eq_terms) {
        Ok(k) => k,
        Err(msg) => return failed(sdp, n, m_eq, &format!("KKT setup: {msg}")),
    };

    // identity start, scaled to the data magnitude
    let tau = 1.0f64.max(c_norm).max(d_norm);
    let mut y = vec![0.0; n];
    let mut lam = vec![0.0; m_eq];
    let mut s: Vec<Vec<f64>> = blocks
        .iter()
        .map(|b| scaled_identity(b.size, tau))
        .collect();
    let mut z: Vec<Vec<f64>> = blocks
        .iter()
        .map(|b| scaled_identity(b.size, tau))
        .collect();

    let mut log: Vec<IterRow> = Vec::new();
    let mut stall = 0u32;
    let mut plateau = 0u32;
    let mut iter = 0u32;
    let mut best: Option<Best> = None;

    loop {
        let res = residuals(
            sdp, &blocks, &eq_terms, &d, &c, &y, &lam, &s, &z, nu, c_norm, d_norm,
        );

        if !res.mu.is_finite() || res.mu > 1e30 || norm_inf(&y) > 1e14 {
            return settle(
                sdp,
                &blocks,
                Status::Unknown,
                y,
                lam,
                z,
                iter,
                &res,
                best,
                log,
                Some("iterates diverged".into()),
            );
        }
        if res.pinf <= opts.tol && res.dinf <= opts.tol && res.rel_gap <= opts.tol {
            return finish(
                sdp,
                &blocks,
                Status::Optimal,
                y,
                lam,
                z,
                iter,
                &res,
                log,
                None,
            );
        }
        let score = res.pinf.max(res.dinf).max(res.rel_gap);
        if score < best.as_ref().map_or(f64::INFINITY, |b| 0.99 * b.score) {
            plateau = 0;
        } else {
            plateau += 1;
        }
        if best.as_ref().is_none_or(|b| score < b.score) {
            best = Some(Best {
                score,
                y: y.clone(),
                lam: lam.clone(),
                z: z.clone(),
                res: res.clone(),
                iter,
            });
        }
        if plateau >= PLATEAU_LIMIT && best.as_ref().is_some_and(|b| b.score < PLATEAU_SCORE) {
            return settle(
                sdp,
                &blocks,
                Status::SlowProgress,
                y,
                lam,
                z,
                iter,
                &res,
                best,
                log,
                Some("accuracy plateaued before reaching tolerance".into()),
            );
        }
        // Farkas-style certificate: a dual ray with positive objective and a
        // vanishing homogeneous residual proves primal infeasibility. The
        // ratio test is the certificate; the size threshold only keeps the
        // ray from being read off a still-converging iterate.
        let dlam = dot(&d, &lam);
        if dlam > 1e3 * (1.0 + c_norm) && res.ray_res <= 1e-8 * dlam {
            return finish(
                sdp,
                &blocks,
                Status::Infeasible,
                y,
                lam,
                z,
                iter,
                &res,
                log,
                Some("dual ray certifies primal infeasibility".into()),
            );
        }
        if stall >= STALL_LIMIT {
            return settle(
                sdp,
                &blocks,
                Status::SlowProgress,
                y,
                lam,
                z,
                iter,
                &res,
                best,
                log,
                Some("step sizes stalled before reaching tolerance".into()),
            );
        }
        if iter >= opts.max_iter {
            return settle(
                sdp,
                &blocks,
                Status::Unknown,
                y,
                lam,
                z,
                iter,
                &res,
                best,
                log,
                Some("iteration limit reached".into()),
            );
        }

        // Nesterov–Todd scaling per block: W Z W = S, computed spectrally.
        let nb = blocks.len();
        let mut winv: Vec<Vec<f64>> = Vec::with_capacity(nb);
        let mut zinv: Vec<Vec<f64>> = Vec::with_capacity(nb);
        let mut sinvhalf: Vec<Vec<f64>> = Vec::with_capacity(nb);
        let mut zinvhalf: Vec<Vec<f64>> = Vec::with_capacity(nb);
        for (b, bd) in blocks.iter().enumerate() {
            let p = bd.size;
            let (ls, us) = match eig_sym(p, &s[b]) {
                Ok(t) => t,
                Err(msg) => {
                    return settle(
                        sdp,
                        &blocks,
                        Status::Unknown,
                        y,
                        lam,
                        z,
                        iter,
                        &res,
                        best,
                        log,
                        Some(msg),
                    )
                }
            };
            let (lz, uz) = match eig_sym(p, &z[b]) {
                Ok(t) => t,
                Err(msg) => {
                    return settle(
                        sdp,
                        &blocks,
                        Status::Unknown,
                        y,
                        lam,
                        z,
                        iter,
                        &res,
                        best,
                        log,
                        Some(msg),
                    )
                }
            };
            if ls[0] <= 0.0 || lz[0] <= 0.0 {
                return settle(
                    sdp,
                    &blocks,
                    Status::Unknown,
                    y,
                    lam,
                    z,
                    iter,
                    &res,
                    best,
                    log,
                    Some("iterate left the cone".into()),
                );
            }
            let shalf = from_eigen(p, &us, &ls.iter().map(|v| v.sqrt()).collect::<Vec<_>>());
            let sih = from_eigen(
                p,
                &us,
                &ls.iter().map(|v| 1.0 / v.sqrt()).collect::<Vec<_>>(),
            );
            let t = mm(p, &mm(p, &shalf, &z[b]), &shalf);
            let (lt, ut) = match eig_sym(p, &sym_part(p, &t)) {
                Ok(t) => t,
                Err(msg) => {
                    return settle(
                        sdp,
                        &blocks,
                        Status::Unknown,
                        y,
                        lam,
                        z,
                        iter,
                        &res,
                        best,
                        log,
                        Some(msg),
                    )
                }
            };
            if lt[0] <= 0.0 {
                return settle(
                    sdp,
                    &blocks,
                    Status::Unknown,
                    y,
                    lam,
                    z,
                    iter,
                    &res,
                    best,
                    log,
                    Some("scaling matrix lost definiteness".into()),
                );
            }
            let thalf = from_eigen(p, &ut, &lt.iter().map(|v| v.sqrt()).collect::<Vec<_>>());
            winv.push(sym_part(p, &mm(p, &mm(p, &sih, &thalf), &sih)));
            zinv.push(from_eigen(
                p,
                &uz,
                &lz.iter().map(|v| 1.0 / v).collect::<Vec<_>>(),
            ));
            sinvhalf.push(sih);
            zinvhalf.push(from_eigen(
                p,
                &uz,
                &lz.iter().map(|v| 1.0 / v.sqrt()).collect::<Vec<_>>(),
            ));
        }

        // Schur complement and factorization (shared by both solves)
        kkt.reset();
        let mut local = Vec::new();
        for (b, bd) in blocks.iter().enumerate() {
            bd.schur(&winv[b], &mut local);
            kkt.scatter_block(b, &local);
        }
        if let Err(msg) = kkt.factor() {
            return settle(
                sdp,
                &blocks,
                Status::Unknown,
                y,
                lam,
                z,
                iter,
                &res,
                best,
                log,
                Some(msg),
            );
        }

        // predictor: drive SZ toward zero
        let rc_aff: Vec<Vec<f64>> = s.iter().map(|sb| sb.iter().map(|v| -v).collect()).collect();
        let (_dy_a, _dlam_a, ds_a, dz_a) = newton(&blocks, &winv, &res, &rc_aff, &mut kkt, n, m_eq);

        let mut ap = 1.0f64;
        let mut ad = 1.0f64;
        for (b, bd) in blocks.iter().enumerate() {
            let p = bd.size;
            match boundary_step(p, &sinvhalf[b], &ds_a[b]) {
                Ok(t) => ap = ap.min(t),
                Err(msg) => {
                    return settle(
                        sdp,
                        &blocks,
                        Status::Unknown,
                        y,
                        lam,
                        z,
                        iter,
                        &res,
                        best,
                        log,
                        Some(msg),
                    )
                }
            }
            match boundary_step(p, &zinvhalf[b], &dz_a[b]) {
                Ok(t) => ad = ad.min(t),
                Err(msg) => {
                    return settle(
                        sdp,
                        &blocks,
                        Status::Unknown,
                        y,
                        lam,
                        z,
                        iter,
                        &res,
                        best,
                        log,
                        Some(msg),
                    )
                }
            }
        }
        let ap_aff = ap.min(1.0);
        let ad_aff = ad.min(1.0);
        let mut mu_aff = 0.0;
        for (b, bd) in blocks.iter().enumerate() {
            let p = bd.size;
            for j in 0..p {
                for i in 0..p {
                    mu_aff += (s[b][i + j * p] + ap_aff * ds_a[b][i + j * p])
                        * (z[b][i + j * p] + ad_aff * dz_a[b][i + j * p]);
                }
            }
        }
        mu_aff = (mu_aff / nu).max(0.0);
        let mut sigma = ((mu_aff / res.mu).powi(3)).clamp(0.0, 1.0);
        // Don't let complementarity outrun feasibility: once μ is far below
        // the residual level the KKT system is too ill-conditioned to reduce
        // the residuals any further, and no exit test can be met. Extra
        // centering keeps the two descending together.
        let compl_rel = res.mu / (1.0 + res.pobj.abs() + res.dobj.abs());
        let feas = res.pinf.max(res.dinf);
        if compl_rel < 0.1 * feas {
            sigma = sigma.max(0.9); // near-freeze μ until the residuals catch up
        } else if compl_rel < feas {
            sigma = sigma.max(0.3);
        }

        // corrector: recenter toward σμ and compensate the second-order term
        // from (S + ΔS)(Z + ΔZ) = σμI divided by Z on the right
        let mut rc: Vec<Vec<f64>> = Vec::with_capacity(blocks.len());
        for (b, bd) in blocks.iter().enumerate() {
            let p = bd.size;
            let second = sym_part(p, &mm(p, &mm(p, &ds_a[b], &dz_a[b]), &zinv[b]));
            let mut r = vec![0.0; p * p];
            for j in 0..p {
                for i in 0..p {
                    r[i + j * p] =
                        sigma * res.mu * zinv[b][i + j * p] - s[b][i + j * p] - second[i + j * p];
                }
            }
            rc.push(r);
        }
        let (mut dy, mut dlam, mut ds, mut dz) =
            newton(&blocks, &winv, &res, &rc, &mut kkt, n, m_eq);

        let step_pair = |ds: &[Vec<f64>], dz: &[Vec<f64>]| -> Result<(f64, f64), String> {
            let mut ap = 1.0f64 / GAMMA; // so γ·ap caps at exactly 1
            let mut ad = 1.0f64 / GAMMA;
            for (b, bd) in blocks.iter().enumerate() {
                let p = bd.size;
                ap = ap.min(boundary_step(p, &sinvhalf[b], &ds[b])?);
                ad = ad.min(boundary_step(p, &zinvhalf[b], &dz[b])?);
            }
            Ok(((GAMMA * ap).min(1.0), (GAMMA * ad).min(1.0)))
        };
        let (mut ap, mut ad) = match step_pair(&ds, &dz) {
            Ok(t) => t,
            Err(msg) => {
                return settle(
                    sdp,
                    &blocks,
                    Status::Unknown,
                    y,
                    lam,
                    z,
                    iter,
                    &res,
                    best,
                    log,
                    Some(msg),
                )
            }
        };

        // A collapsing combined step means the corrector overshot (typical
        // once the iterate drifts off center); retry with a plain centering
        // direction, which stays long from any interior point.
        if ap.min(ad) < FALLBACK_STEP {
            let mut rcc: Vec<Vec<f64>> = Vec::with_capacity(blocks.len());
            for (b, bd) in blocks.iter().enumerate() {
                let p = bd.size;
                let mut r = vec![0.0; p * p];
                for t in 0..p * p {
                    r[t] = 0.8 * res.mu * zinv[b][t] - s[b][t];
                }
                rcc.push(r);
            }
            let retry = newton(&blocks, &winv, &res, &rcc, &mut kkt, n, m_eq);
            match step_pair(&retry.2, &retry.3) {
                Ok((rap, rad)) => {
                    if rap.min(rad) > ap.min(ad) {
                        (dy, dlam, ds, dz) = retry;
                        (ap, ad) = (rap, rad);
                    }
                }
                Err(msg) => {
                    return settle(
                        sdp,
                        &blocks,
                        Status::Unknown,
                        y,
                        lam,
                        z,
                        iter,
                        &res,
                        best,
                        log,
                        Some(msg),
                    )
                }
            }
        }

        #[cfg(feature = "ipm-trace")]
        {
            let mut smin = f64::INFINITY;
            let mut zmin = f64::INFINITY;
            for (b, bd) in blocks.iter().enumerate() {
                let p = bd.size;
                let mut snew = s[b].clone();
                let mut znew = z[b].clone();
                for t in 0..p * p {
                    snew[t] += ap * ds[b][t];
                    znew[t] += ad * dz[b][t];
                }
                smin = smin.min(eigvals_sym(p, &snew).unwrap()[0]);
                zmin = zmin.min(eigvals_sym(p, &znew).unwrap()[0]);
            }
            let lam_inf = lam.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            let sfro = s.iter().map(|m| fro(m)).fold(0.0f64, f64::max);
            let zfro = z.iter().map(|m| fro(m)).fold(0.0f64, f64::max);
            eprintln!(
                "it {iter}: mu {:.3e} gap {:.3e} pinf {:.3e} dinf {:.3e} ray {:.3e} sigma {sigma:.3e} ap {ap:.3e} ad {ad:.3e} smin+ {smin:.3e} zmin+ {zmin:.3e} |lam| {lam_inf:.3e} |S| {sfro:.3e} |Z| {zfro:.3e}",
                res.mu, res.rel_gap, res.pinf, res.dinf, res.ray_res
            );
        }

        for i in 0..n {
            y[i] += ap * dy[i];
        }
        for r in 0..m_eq {
            lam[r] += ad * dlam[r];
        }
        for (b, bd) in blocks.iter().enumerate() {
            let p = bd.size;
            for t in 0..p * p {
                s[b][t] += ap * ds[b][t];
                z[b][t] += ad * dz[b][t];
            }
        }

        iter += 1;
        let step = ap.min(ad);
        log.push(IterRow {
            iter,
            mu: res.mu,
            gap: res.rel_gap,
            pinf: res.pinf,
            dinf: res.dinf,
            step,
        });
        if step < STALL_STEP {
            stall += 1;
        } else {
            stall = 0;
        }
    }
}

fn scaled_identity(n: usize, tau: f64) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i + i * n] = tau;
    }
    m
}

#[allow(clippy::too_many_arguments)]
fn residuals(
    sdp: &BlockSdp,
    blocks: &[BlockData],
    eq_terms: &[Vec<(u32, f64)>],
    d: &[f64],
    c: &[f64],
    y: &[f64],
    lam: &[f64],
    s: &[Vec<f64>],
    z: &[Vec<f64>],
    nu: f64,
    c_norm: f64,
    d_norm: f64,
) -> Residuals {
    let n = sdp.n_moments();
    let mut rp_mat = Vec::with_capacity(blocks.len());
    let mut pinf = 0.0f64;
    let mut comp = 0.0;
    for (b, bd) in blocks.iter().enumerate() {
        let p = bd.size;
        let mut m = vec![0.0; p * p];
        bd.eval(y, &mut m);
        let mut r = vec![0.0; p * p];
        for t in 0..p * p {
            r[t] = s[b][t] - m[t];
        }
        pinf = pinf.max(fro(&r) / (1.0 + fro(&s[b])));
        comp += dot(&s[b], &z[b]);
        rp_mat.push(r);
    }
    let mut rp_eq = vec![0.0; d.len()];
    for (r, row) in eq_terms.iter().enumerate() {
        let mut ay = 0.0;
        for &(g, a) in row {
            ay += a * y[g as usize];
        }
        rp_eq[r] = d[r] - ay;
    }
    pinf = pinf.max(norm_inf(&rp_eq) / (1.0 + d_norm));

    // rd = c − Σ𝒜*(Z) − Aᵀλ; the ray residual is ‖c − rd‖
    let mut atz = vec![0.0; n];
    for (b, bd) in blocks.iter().enumerate() {
        bd.adjoint(&z[b], &mut atz);
    }
    for (r, row) in eq_terms.iter().enumerate() {
        for &(g, a) in row {
            atz[g as usize] += a * lam[r];
        }
    }
    let mut rd = vec![0.0; n];
    for g in 0..n {
        rd[g] = c[g] - atz[g];
    }
    let dinf = norm_inf(&rd) / (1.0 + c_norm);
    let ray_res = norm_inf(&atz);

    let pobj = dot(c, y);
    let dobj = dot(d, lam);
    Residuals {
        rp_mat,
        rp_eq,
        rd,
        pinf,
        dinf,
        mu: comp / nu,
        pobj,
        dobj,
        rel_gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
        ray_res,
    }
}

/// A search direction: (dy, dλ, dS per block, dZ per block).
type Direction = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>);

/// One Newton solve for a given centering right-hand side; the KKT
/// factorization is reused across the predictor and corrector.
fn newton(
    blocks: &[BlockData],
    winv: &[Vec<f64>],
    res: &Residuals,
    rc: &[Vec<f64>],
    kkt: &mut KktSystem,
    n: usize,
    m_eq: usize,
) -> Direction {
    // r1 = Σ 𝒜*(W⁻¹ (Rc + Rp) W⁻¹) − rd
    let mut rhs = vec![0.0; n + m_eq];
    for (b, bd) in blocks.iter().enumerate() {
        let p = bd.size;
        let mut t = vec![0.0; p * p];
        for i in 0..p * p {
            t[i] = rc[b][i] + res.rp_mat[b][i];
        }
        let v = mm(p, &mm(p, &winv[b], &t), &winv[b]);
        bd.adjoint(&v, &mut rhs[..n]);
    }
    for (r, v) in rhs[..n].iter_mut().zip(&res.rd) {
        *r -= v;
    }
    rhs[n..].copy_from_slice(&res.rp_eq);

    kkt.solve(&mut rhs);
    let dy = rhs[..n].to_vec();
    let dlam: Vec<f64> = rhs[n..].iter().map(|&v| -v).collect();

    let mut ds = Vec::with_capacity(blocks.len());
    let mut dz = Vec::with_capacity(blocks.len());
    for (b, bd) in blocks.iter().enumerate() {
        let p = bd.size;
        let mut mdy = vec![0.0; p * p];
        bd.eval(&dy, &mut mdy);
        let mut dsb = vec![0.0; p * p];
        let mut inner = vec![0.0; p * p];
        for t in 0..p * p {
            dsb[t] = mdy[t] - res.rp_mat[b][t];
            inner[t] = rc[b][t] + res.rp_mat[b][t] - mdy[t];
        }
        let dzb = sym_part(p, &mm(p, &mm(p, &winv[b], &inner), &winv[b]));
        ds.push(sym_part(p, &dsb));
        dz.push(dzb);
    }
    (dy, dlam, ds, dz)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    sdp: &BlockSdp,
    blocks: &[BlockData],
    status: Status,
    y: Vec<f64>,
    lam: Vec<f64>,
    z: Vec<Vec<f64>>,
    iterations: u32,
    res: &Residuals,
    log: Vec<IterRow>,
    note: Option<String>,
) -> SdpSolution {
    let _ = sdp;
    // dual blocks are reported in original coordinates: U Z̃ Uᵀ is feasible
    // for the unreduced problem whenever Z̃ is for the reduced one
    let block_duals = if blocks.len() == z.len() {
        blocks
            .iter()
            .zip(&z)
            .map(|(bd, v)| bd.unreduce(v))
            .collect()
    } else {
        z
    };
    SdpSolution {
        status,
        y,
        eq_duals: lam,
        block_duals,
        objective: res.pobj,
        dual_objective: res.dobj,
        iterations,
        rel_gap: res.rel_gap,
        primal_infeas: res.pinf,
        dual_infeas: res.dinf,
        log,
        note,
    }
}

fn failed(sdp: &BlockSdp, n: usize, m_eq: usize, msg: &str) -> SdpSolution {
    let zeros = Residuals {
        rp_mat: Vec::new(),
        rp_eq: Vec::new(),
        rd: Vec::new(),
        pinf: f64::NAN,
        dinf: f64::NAN,
        mu: f64::NAN,
        pobj: f64::NAN,
        dobj: f64::NAN,
        rel_gap: f64::NAN,
        ray_res: f64::NAN,
    };
    finish(
        sdp,
        &[],
        Status::Unknown,
        vec![0.0; n],
        vec![0.0; m_eq],
        Vec::new(),
        0,
        &zeros,
        Vec::new(),
        Some(msg.to_string()),
    )
}
