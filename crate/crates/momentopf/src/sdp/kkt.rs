//! Sparse symmetric quasidefinite solves for the interior-point iteration.
//!
//! The system is
//! ```text
//!   [ B   Aᵀ ] [ u ]   [ r1 ]
//!   [ A   0  ] [ w ] = [ r2 ]
//! ```
//! with `B` the positive-semidefinite Schur matrix over the moments and `A`
//! the equality rows. The upper triangle is stored once in CSC form; the
//! Schur part changes every iteration and is refilled through precomputed
//! scatter positions, while the `A` part and the explicit zero diagonal of
//! the bottom-right block are constant. Factorization is a signed sparse
//! LDLᵀ with dynamic regularization (+ on the first block, − on the second),
//! followed by iterative refinement against the unregularized matrix.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::{LdltParams, LdltRegularization};
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, LdltRef, SymbolicCholesky,
    SymmetricOrdering,
};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par, Side, Spec};

/// Assembled KKT pattern plus factorization workspace, reused across
/// iterations.
pub struct KktSystem {
    /// Number of moment variables (size of the B block).
    pub n: usize,
    /// Number of equality rows.
    pub m: usize,
    dim: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// Constant part of the matrix: A entries and explicit zero diagonal.
    base: Vec<f64>,
    values: Vec<f64>,
    /// For each PSD block, positions of its local Schur contributions: the
    /// pair (s, t), s ≤ t, over the block's sorted support maps to
    /// `scatter[b][s·q - s(s-1)/2 + (t - s)]`.
    scatter: Vec<Vec<u32>>,
    signs: Vec<i8>,
    symbolic: SymbolicCholesky<usize>,
    l_values: Vec<f64>,
    factor_buf: MemBuffer,
    solve_buf: MemBuffer,
    factored: bool,
}

impl KktSystem {
    /// Builds the pattern from the per-block moment supports and the
    /// equality rows, and runs the symbolic factorization once.
    pub fn new(
        n: usize,
        supports: &[Vec<u32>],
        eq_rows: &[Vec<(u32, f64)>],
    ) -> Result<KktSystem, String> {
        let m = eq_rows.len();
        let dim = n + m;

        // collect upper-triangle rows per column
        let mut cols: Vec<Vec<u32>> = vec![Vec::new(); dim];
        for sup in supports {
            for (si, &g) in sup.iter().enumerate() {
                for &h in &sup[si..] {
                    cols[h as usize].push(g);
                }
            }
        }
        for (r, row) in eq_rows.iter().enumerate() {
            let c = n + r;
            for &(g, _) in row {
                cols[c].push(g);
            }
            cols[c].push(c as u32); // explicit zero diagonal
        }
        for (g, col) in cols.iter_mut().enumerate().take(n) {
            col.push(g as u32); // B diagonal is always structurally present
        }
        let mut col_ptr = Vec::with_capacity(dim + 1);
        let mut row_idx: Vec<usize> = Vec::new();
        col_ptr.push(0usize);
        for list in cols.iter_mut() {
            list.sort_unstable();
            list.dedup();
            row_idx.extend(list.iter().map(|&r| r as usize));
            col_ptr.push(row_idx.len());
        }
        drop(cols);

        let pos_of = |g: usize, h: usize| -> u32 {
            let slice = &row_idx[col_ptr[h]..col_ptr[h + 1]];
            let k = slice.binary_search(&g).expect("entry in pattern");
            (col_ptr[h] + k) as u32
        };

        let scatter = supports
            .iter()
            .map(|sup| {
                let q = sup.len();
                let mut pos = Vec::with_capacity(q * (q + 1) / 2);
                for (si, &g) in sup.iter().enumerate() {
                    for &h in &sup[si..] {
                        pos.push(pos_of(g as usize, h as usize));
                    }
                }
                pos
            })
            .collect();

        let mut base = vec![0.0; row_idx.len()];
        for (r, row) in eq_rows.iter().enumerate() {
            let c = n + r;
            for &(g, a) in row {
                base[pos_of(g as usize, c) as usize] = a;
            }
        }

        let mut signs = vec![1i8; dim];
        signs[n..].fill(-1);

        let symbolic = {
            let sym = SymbolicSparseColMatRef::new_checked(dim, dim, &col_ptr, None, &row_idx);
            factorize_symbolic_cholesky(
                sym,
                Side::Upper,
                SymmetricOrdering::Amd,
                CholeskySymbolicParams::default(),
            )
            .map_err(|e| format!("symbolic factorization failed: {e:?}"))?
        };
        let l_values = vec![0.0; symbolic.len_val()];
        let par = Par::Seq;
        let params = Spec::<LdltParams, f64>::default();
        let factor_buf =
            MemBuffer::new(symbolic.factorize_numeric_ldlt_scratch::<f64>(par, params));
        let solve_buf = MemBuffer::new(symbolic.solve_in_place_scratch::<f64>(1, par));

        Ok(KktSystem {
            n,
            m,
            dim,
            values: vec![0.0; base.len()],
            base,
            col_ptr,
            row_idx,
            scatter,
            signs,
            symbolic,
            l_values,
            factor_buf,
            solve_buf,
            factored: false,
        })
    }

    /// Total system size (moment variables plus equality rows).
    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    /// Resets the numeric values to the constant part; Schur contributions
    /// are then accumulated via [`KktSystem::scatter_block`].
    pub fn reset(&mut self) {
        self.values.copy_from_slice(&self.base);
        self.factored = false;
    }

    /// Adds a block's local Schur matrix, given in the pair order of the
    /// block's support (s ≤ t).
    pub fn scatter_block(&mut self, block: usize, local: &[f64]) {
        let pos = &self.scatter[block];
        debug_assert_eq!(pos.len(), local.len());
        for (&p, &v) in pos.iter().zip(local) {
            self.values[p as usize] += v;
        }
    }

    /// Numeric LDLᵀ with signed dynamic regularization.
    ///
    /// The thresholds are absolute, not relative to the matrix magnitude: the
    /// Schur block grows like the inverse barrier parameter near convergence,
    /// and tying the perturbation to its entries would wipe out the (small
    /// but meaningful) pivots of the equality block exactly when accuracy
    /// matters most.
    pub fn factor(&mut self) -> Result<(), String> {
        let par = Par::Seq;
        let params = Spec::<LdltParams, f64>::default();
        let sym = SymbolicSparseColMatRef::new_checked(
            self.dim,
            self.dim,
            &self.col_ptr,
            None,
            &self.row_idx,
        );
        let a = SparseColMatRef::new(sym, &self.values);
        let reg = LdltRegularization {
            dynamic_regularization_signs: Some(&self.signs),
            dynamic_regularization_delta: 1e-11,
            dynamic_regularization_epsilon: 1e-13,
        };
        let stack = MemStack::new(&mut self.factor_buf);
        self.symbolic
            .factorize_numeric_ldlt(&mut self.l_values, a, Side::Upper, reg, par, stack, params)
            .map_err(|e| format!("numeric factorization failed: {e:?}"))?;
        self.factored = true;
        Ok(())
    }

    /// y = K x with the exact (unregularized) symmetric matrix.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for c in 0..self.dim {
            let xc = x[c];
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[k];
                let v = self.values[k];
                y[r] += v * xc;
                if r != c {
                    y[c] += v * x[r];
                }
            }
        }
    }

    /// Solves K u = rhs in place, with iterative refinement against the
    /// unregularized matrix until the residual stops improving.
    pub fn solve(&mut self, rhs: &mut [f64]) {
        assert!(self.factored, "factor() must succeed before solve()");
        assert_eq!(rhs.len(), self.dim(), "right-hand side size mismatch");
        let par = Par::Seq;
        let mut u = rhs.to_vec();
        self.raw_solve(&mut u, par);
        let rhs_norm = rhs.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let mut resid = vec![0.0; self.dim];
        let mut best = f64::INFINITY;
        for _ in 0..8 {
            self.matvec(&u, &mut resid);
            for i in 0..self.dim {
                resid[i] = rhs[i] - resid[i];
            }
            let rn = resid.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            if rn <= 1e-14 * rhs_norm || rn >= best {
                break;
            }
            best = rn;
            self.raw_solve(&mut resid, par);
            for i in 0..self.dim {
                u[i] += resid[i];
            }
        }
        rhs.copy_from_slice(&u);
    }

    fn raw_solve(&mut self, x: &mut [f64], par: Par) {
        let ldlt = LdltRef::new(&self.symbolic, &self.l_values);
        let stack = MemStack::new(&mut self.solve_buf);
        let view = MatMut::from_column_major_slice_mut(x, self.dim, 1);
        ldlt.solve_in_place_with_conj(Conj::No, view, par, stack);
    }
}
