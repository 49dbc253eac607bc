//! Assembly of the block moment relaxation.
//!
//! Given a polynomial problem, a variable-subset pattern and a relaxation
//! order, this module produces the semidefinite program whose variables are
//! the moments `y`: one moment matrix per subset, one localizing matrix per
//! assigned inequality, and linear rows for equalities (one row per distinct
//! matrix entry) plus the normalization `y_0 = 1`.
//!
//! All matrix data is affine in `y` with no constant part — the constant
//! monomial is itself a moment, pinned to one by the first linear row.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::acopf::{ConstraintKind, PopProblem};
use crate::poly::{Monomial, MonomialBasis};
use crate::sparsity::{self, SparsityError, SparsityPattern};

#[derive(Debug, Error)]
pub enum RelaxError {
    #[error("relaxation order {r} is below the minimum {r0} for this problem")]
    OrderTooLow { r: u32, r0: u32 },
    #[error("pattern does not fit the problem: {0}")]
    Pattern(#[from] SparsityError),
}

/// What a PSD block represents.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BlockSource {
    /// Moment matrix of a subset.
    Moment { subset: usize },
    /// Localizing matrix of inequality `constraint` in its assigned subset.
    Localizer { subset: usize, constraint: usize },
}

/// One PSD block, stored as per-moment coefficient lists over the upper
/// triangle: block(y) = Σ_g y_g · A_g with A_g symmetric.
#[derive(Clone, PartialEq, Debug)]
pub struct PsdBlock {
    pub size: usize,
    pub source: BlockSource,
    /// Product basis indexing the rows/columns (graded lexicographic, so the
    /// constant monomial is row 0 and single variables follow in order).
    pub basis: Vec<Monomial>,
    /// Global y indices with a nonzero coefficient somewhere in this block,
    /// ascending.
    pub support: Vec<u32>,
    /// For each support entry, its upper-triangle coefficients (row, col,
    /// value) with row ≤ col.
    pub coeffs: Vec<Vec<(u32, u32, f64)>>,
}

impl PsdBlock {
    /// Evaluates the block at a moment vector into a dense column-major
    /// symmetric matrix.
    pub fn eval(&self, y: &[f64]) -> Vec<f64> {
        let n = self.size;
        let mut m = vec![0.0; n * n];
        for (s, &g) in self.support.iter().enumerate() {
            let v = y[g as usize];
            if v == 0.0 {
                continue;
            }
            for &(r, c, a) in &self.coeffs[s] {
                m[r as usize + c as usize * n] += a * v;
                if r != c {
                    m[c as usize + r as usize * n] += a * v;
                }
            }
        }
        m
    }

    /// Inner products ⟨A_g, V⟩ for each supported moment, with `V` dense
    /// column-major symmetric of the block's size.
    pub fn adjoint_into(&self, v: &[f64], out: &mut [f64]) {
        let n = self.size;
        for (s, &g) in self.support.iter().enumerate() {
            let mut acc = 0.0;
            for &(r, c, a) in &self.coeffs[s] {
                let vrc = v[r as usize + c as usize * n];
                acc += if r == c { a * vrc } else { 2.0 * a * vrc };
            }
            out[g as usize] += acc;
        }
    }
}

/// Where a linear row came from.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum RowSource {
    /// The normalization `y_0 = 1`.
    Normalization,
    /// Equality `constraint` multiplied by the monomial `shift` (a distinct
    /// entry of its localizing matrix).
    Equality { constraint: usize, shift: Monomial },
}

/// A sparse linear row Σ aᵢ y_{gᵢ} = rhs.
#[derive(Clone, PartialEq, Debug)]
pub struct LinRow {
    pub terms: Vec<(u32, f64)>,
    pub rhs: f64,
    pub source: RowSource,
}

impl LinRow {
    pub fn eval(&self, y: &[f64]) -> f64 {
        self.terms.iter().map(|&(g, a)| a * y[g as usize]).sum()
    }
}

/// The assembled relaxation: moments, PSD blocks, equality rows and the
/// sparse objective, all indexed deterministically.
#[derive(Clone, PartialEq, Debug)]
pub struct BlockSdp {
    pub name: String,
    /// Relaxation order used.
    pub r: u32,
    /// Moment index table: `y_monomials[g]` is the monomial of moment g.
    /// Index 0 is always the constant monomial.
    pub y_monomials: Vec<Monomial>,
    pub blocks: Vec<PsdBlock>,
    /// Linear equality rows; the first is always the normalization row.
    pub eq_rows: Vec<LinRow>,
    /// Sparse objective coefficients over y, ascending index.
    pub objective: Vec<(u32, f64)>,
}

impl BlockSdp {
    pub fn n_moments(&self) -> usize {
        self.y_monomials.len()
    }

    /// Global y index of a monomial, if it is a moment of this relaxation.
    pub fn moment_index(&self, m: &Monomial) -> Option<u32> {
        // linear scan is fine for the lookups done outside assembly
        self.y_monomials
            .iter()
            .position(|ym| ym == m)
            .map(|i| i as u32)
    }

    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective.iter().map(|&(g, c)| c * y[g as usize]).sum()
    }

    /// The moment block of subset `p`, if any.
    pub fn moment_block(&self, p: usize) -> Option<&PsdBlock> {
        self.blocks
            .iter()
            .find(|b| b.source == BlockSource::Moment { subset: p })
    }
}

/// Builds the order-`r` relaxation of `pop` under `pattern`.
///
/// The moment table is filled by walking each subset's moment matrix in
/// row-major upper-triangle order and appending unseen products, which fixes
/// every index from the inputs alone. Localizing and equality data reuse
/// those indices: their products stay within degree 2r of the same subset,
/// so no new moments appear.
pub fn assemble(
    pop: &PopProblem,
    pattern: &SparsityPattern,
    r: u32,
) -> Result<BlockSdp, RelaxError> {
    let r0 = pop.r0();
    if r < r0 {
        return Err(RelaxError::OrderTooLow { r, r0 });
    }
    sparsity::validate(pattern, pop)?;

    let mut y_monomials: Vec<Monomial> = Vec::new();
    let mut index: HashMap<Monomial, u32> = HashMap::new();
    let intern =
        |m: Monomial, y_monomials: &mut Vec<Monomial>, index: &mut HashMap<Monomial, u32>| -> u32 {
            if let Some(&g) = index.get(&m) {
                g
            } else {
                let g = y_monomials.len() as u32;
                y_monomials.push(m.clone());
                index.insert(m, g);
                g
            }
        };

    let bases: Vec<MonomialBasis> = pattern
        .subsets
        .iter()
        .map(|s| MonomialBasis::new(s, r))
        .collect();

    let mut blocks: Vec<PsdBlock> = Vec::new();

    // moment matrices first: they define the moment table
    for (p, basis) in bases.iter().enumerate() {
        let n = basis.len();
        let mut per_y: HashMap<u32, Vec<(u32, u32, f64)>> = HashMap::new();
        for i in 0..n {
            for j in i..n {
                let m = basis.get(i).mul(basis.get(j));
                let g = intern(m, &mut y_monomials, &mut index);
                per_y.entry(g).or_default().push((i as u32, j as u32, 1.0));
            }
        }
        blocks.push(collect_block(
            n,
            BlockSource::Moment { subset: p },
            basis.iter().cloned().collect(),
            per_y,
        ));
    }

    // localizers and equality rows share the table
    let mut eq_rows: Vec<LinRow> = vec![LinRow {
        terms: vec![(0, 1.0)],
        rhs: 1.0,
        source: RowSource::Normalization,
    }];
    for (k, con) in pop.constraints.iter().enumerate() {
        let p = pattern.assignment[k];
        let d = con.poly.degree().div_ceil(2);
        let order = r - d; // r ≥ r0 ≥ d
        match con.kind {
            ConstraintKind::Inequality => {
                let basis = MonomialBasis::new(&pattern.subsets[p], order);
                let n = basis.len();
                let mut per_y: HashMap<u32, Vec<(u32, u32, f64)>> = HashMap::new();
                for i in 0..n {
                    for j in i..n {
                        let pair = basis.get(i).mul(basis.get(j));
                        for (gamma, c) in con.poly.terms() {
                            let g = *index
                                .get(&pair.mul(gamma))
                                .expect("localizer product exceeds the moment table");
                            per_y.entry(g).or_default().push((i as u32, j as u32, c));
                        }
                    }
                }
                blocks.push(collect_block(
                    n,
                    BlockSource::Localizer {
                        subset: p,
                        constraint: k,
                    },
                    basis.iter().cloned().collect(),
                    per_y,
                ));
            }
            ConstraintKind::Equality => {
                // entry (i, j) of the localizing matrix depends only on the
                // product bᵢbⱼ, so one row per distinct product — i.e. per
                // monomial of degree ≤ 2·order over the subset
                let shifts = MonomialBasis::new(&pattern.subsets[p], 2 * order);
                for s in shifts.iter() {
                    let mut terms: Vec<(u32, f64)> = con
                        .poly
                        .terms()
                        .map(|(gamma, c)| {
                            let g = *index
                                .get(&s.mul(gamma))
                                .expect("equality product exceeds the moment table");
                            (g, c)
                        })
                        .collect();
                    terms.sort_unstable_by_key(|&(g, _)| g);
                    eq_rows.push(LinRow {
                        terms,
                        rhs: 0.0,
                        source: RowSource::Equality {
                            constraint: k,
                            shift: s.clone(),
                        },
                    });
                }
            }
        }
    }

    let mut objective: Vec<(u32, f64)> = pop
        .objective
        .terms()
        .map(|(m, c)| {
            let g = *index
                .get(m)
                .expect("objective term exceeds the moment table");
            (g, c)
        })
        .collect();
    objective.sort_unstable_by_key(|&(g, _)| g);

    Ok(BlockSdp {
        name: pop.name.clone(),
        r,
        y_monomials,
        blocks,
        eq_rows,
        objective,
    })
}

fn collect_block(
    n: usize,
    source: BlockSource,
    basis: Vec<Monomial>,
    per_y: HashMap<u32, Vec<(u32, u32, f64)>>,
) -> PsdBlock {
    let mut support: Vec<u32> = per_y.keys().copied().collect();
    support.sort_unstable();
    let coeffs = support
        .iter()
        .map(|g| {
            let mut list = per_y[g].clone();
            list.sort_unstable_by_key(|&(r, c, _)| (r, c));
            list
        })
        .collect();
    PsdBlock {
        size: n,
        source,
        basis,
        support,
        coeffs,
    }
}

/// Size summary of an assembled relaxation.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SdpStats {
    pub n_moments: usize,
    pub n_blocks: usize,
    pub n_eq_rows: usize,
    pub largest_block: usize,
    /// (block size, count), ascending.
    pub block_histogram: Vec<(usize, usize)>,
}

pub fn sdp_stats(sdp: &BlockSdp) -> SdpStats {
    let mut sizes: Vec<usize> = sdp.blocks.iter().map(|b| b.size).collect();
    sizes.sort_unstable();
    let mut hist: Vec<(usize, usize)> = Vec::new();
    for s in &sizes {
        match hist.last_mut() {
            Some((v, n)) if v == s => *n += 1,
            _ => hist.push((*s, 1)),
        }
    }
    SdpStats {
        n_moments: sdp.n_moments(),
        n_blocks: sdp.blocks.len(),
        n_eq_rows: sdp.eq_rows.len(),
        largest_block: sizes.last().copied().unwrap_or(0),
        block_histogram: hist,
    }
}

impl fmt::Display for SdpStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "moments        {}", self.n_moments)?;
        writeln!(f, "psd blocks     {}", self.n_blocks)?;
        writeln!(f, "equality rows  {}", self.n_eq_rows)?;
        writeln!(f, "largest block  {}", self.largest_block)?;
        write!(f, "block sizes   ")?;
        for (size, count) in &self.block_histogram {
            write!(f, " {size}x{count}")?;
        }
        Ok(())
    }
}
