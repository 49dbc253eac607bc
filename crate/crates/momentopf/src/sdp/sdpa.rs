//! SDPA sparse-format export and import
//!
//! [`export_sdpa`] writes a [`BlockSdp`] as a `.dat-s` file any SDPA-format
//! solver accepts, plus a sidecar map (`<path>.map`) that records what the
//! solver-side indices mean: which moment each scalar variable is, what
//! every block and row came from, and the objective constant the format
//! cannot carry. [`import_sdpa_problem`] reverses the export exactly, and
//! [`import_sdpa_solution`] reads a solver's `.out` file back into an
//! [`SdpSolution`] expressed over the original moments.
//!
//! Mapping: the moment `y_0 ≈ 1` is folded into the constant matrix, so the
//! file has one scalar variable per remaining moment (`x_g = y_g`). PSD
//! blocks of size above one appear in order; everything scalar — 1×1 blocks
//! and each equality row as a `(+, −)` pair of one-sided rows — lands in a
//! single trailing diagonal block. The normalization row disappears into
//! the fold.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::poly::Monomial;
use crate::relax::{BlockSdp, BlockSource, LinRow, PsdBlock, RowSource};

use super::{SdpSolution, Status};

#[derive(Debug, Error)]
pub enum SdpaError {
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("dimension mismatch: file has {found} scalar variables, problem expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("malformed monomial text {text:?}")]
    Monomial { text: String },
}

fn io_err(path: &Path, source: std::io::Error) -> SdpaError {
    SdpaError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Placement of each scalar b in the trailing diagonal block.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum DiagSlot {
    /// A 1×1 PSD block (original block index).
    Block(usize),
    /// The `≥` side of equality row `row`.
    EqPlus(usize),
    /// The `≤` side of equality row `row`.
    EqMinus(usize),
}

/// Which original blocks become SDPA PSD blocks, and the layout of the
/// trailing diagonal block.
fn layout(sdp: &BlockSdp) -> (Vec<usize>, Vec<DiagSlot>) {
    let mut psd = Vec::new();
    let mut diag = Vec::new();
    for (i, b) in sdp.blocks.iter().enumerate() {
        if b.size > 1 {
            psd.push(i);
        } else {
            diag.push(DiagSlot::Block(i));
        }
    }
    for (r, row) in sdp.eq_rows.iter().enumerate() {
        if row.source == RowSource::Normalization {
            continue;
        }
        diag.push(DiagSlot::EqPlus(r));
        diag.push(DiagSlot::EqMinus(r));
    }
    (psd, diag)
}

fn y0_coeff(row: &LinRow) -> f64 {
    row.terms
        .iter()
        .find(|&&(g, _)| g == 0)
        .map_or(0.0, |&(_, a)| a)
}

/// Writes `sdp` to `path` in SDPA sparse format and the moment map to
/// `path` + ".map".
pub fn export_sdpa(sdp: &BlockSdp, path: &Path) -> Result<(), SdpaError> {
    let n = sdp.n_moments();
    let m = n - 1;
    let (psd, diag) = layout(sdp);
    let diag_blkno = psd.len() as u32 + 1;

    let mut offset = 0.0;
    let mut c = vec![0.0; m];
    for &(g, v) in &sdp.objective {
        if g == 0 {
            offset = v;
        } else {
            c[g as usize - 1] = v;
        }
    }

    // quintuples (matno, blkno, i, j, value), 1-based indices, i ≤ j
    let mut entries: Vec<(u32, u32, u32, u32, f64)> = Vec::new();
    let mut push = |matno: u32, blkno: u32, i: u32, j: u32, v: f64| {
        if v != 0.0 {
            entries.push((matno, blkno, i, j, v));
        }
    };
    for (q, &bi) in psd.iter().enumerate() {
        let block = &sdp.blocks[bi];
        let blkno = q as u32 + 1;
        for (s, &g) in block.support.iter().enumerate() {
            for &(r, ccol, v) in &block.coeffs[s] {
                // the constant matrix enters as F_0 = −A_0
                let (matno, v) = if g == 0 { (0, -v) } else { (g, v) };
                push(matno, blkno, r + 1, ccol + 1, v);
            }
        }
    }
    for (p, slot) in diag.iter().enumerate() {
        let pos = p as u32 + 1;
        match *slot {
            DiagSlot::Block(bi) => {
                let block = &sdp.blocks[bi];
                for (s, &g) in block.support.iter().enumerate() {
                    for &(_, _, v) in &block.coeffs[s] {
                        let (matno, v) = if g == 0 { (0, -v) } else { (g, v) };
                        push(matno, diag_blkno, pos, pos, v);
                    }
                }
            }
            DiagSlot::EqPlus(r) => {
                let row = &sdp.eq_rows[r];
                push(0, diag_blkno, pos, pos, row.rhs - y0_coeff(row));
                for &(g, a) in &row.terms {
                    if g != 0 {
                        push(g, diag_blkno, pos, pos, a);
                    }
                }
            }
            DiagSlot::EqMinus(r) => {
                let row = &sdp.eq_rows[r];
                push(0, diag_blkno, pos, pos, -(row.rhs - y0_coeff(row)));
                for &(g, a) in &row.terms {
                    if g != 0 {
                        push(g, diag_blkno, pos, pos, -a);
                    }
                }
            }
        }
    }
    entries.sort_by_key(|a| (a.0, a.1, a.2, a.3));

    let mut out = String::new();
    let _ = writeln!(out, "{m}");
    let nblocks = psd.len() + usize::from(!diag.is_empty());
    let _ = writeln!(out, "{nblocks}");
    let mut sizes: Vec<String> = psd
        .iter()
        .map(|&bi| sdp.blocks[bi].size.to_string())
        .collect();
    if !diag.is_empty() {
        sizes.push(format!("-{}", diag.len()));
    }
    let _ = writeln!(out, "{}", sizes.join(" "));
    let _ = writeln!(
        out,
        "{}",
        c.iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    for (matno, blkno, i, j, v) in &entries {
        let _ = writeln!(out, "{matno} {blkno} {i} {j} {v}");
    }
    fs::write(path, out).map_err(|e| io_err(path, e))?;

    let mut map = String::new();
    let _ = writeln!(map, "# name {}", sdp.name);
    let _ = writeln!(map, "# r {}", sdp.r);
    let _ = writeln!(map, "# m {m}");
    let _ = writeln!(map, "# offset {offset}");
    let _ = writeln!(map, "# psdblocks {}", psd.len());
    // entry count lets the importer detect truncated data files
    let _ = writeln!(map, "# entries {}", entries.len());
    for (bi, block) in sdp.blocks.iter().enumerate() {
        let basis = block
            .basis
            .iter()
            .map(|mono| mono.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        match block.source {
            BlockSource::Moment { subset } => {
                let _ = writeln!(map, "# block {bi} moment {subset} : {basis}");
            }
            BlockSource::Localizer { subset, constraint } => {
                let _ = writeln!(
                    map,
                    "# block {bi} localizer {subset} {constraint} : {basis}"
                );
            }
        }
    }
    for (r, row) in sdp.eq_rows.iter().enumerate() {
        if let RowSource::Equality { constraint, shift } = &row.source {
            let _ = writeln!(
                map,
                "# eqrow {r} {constraint} {} {} {shift}",
                y0_coeff(row),
                row.rhs
            );
        }
    }
    if !diag.is_empty() {
        let toks: Vec<String> = diag
            .iter()
            .map(|slot| match *slot {
                DiagSlot::Block(bi) => format!("b{bi}"),
                DiagSlot::EqPlus(r) => format!("e+{r}"),
                DiagSlot::EqMinus(r) => format!("e-{r}"),
            })
            .collect();
        let _ = writeln!(map, "# diag {}", toks.join(" "));
    }
    for (g, mono) in sdp.y_monomials.iter().enumerate() {
        let matno = g; // y_0 folds into the constant matrix, others map 1:1
        let _ = writeln!(map, "{g}\t{matno}\t{mono}");
    }
    let map_path = sidecar_path(path);
    fs::write(&map_path, map).map_err(|e| io_err(&map_path, e))?;
    Ok(())
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".map");
    std::path::PathBuf::from(s)
}

/// Parses monomial text as written by the sidecar (`1`, `x3`, `x1^2*x4`).
/// Variables are 1-based in text, 0-based in the result.
pub fn parse_monomial(text: &str) -> Result<Monomial, SdpaError> {
    let t = text.trim();
    if t == "1" {
        return Ok(Monomial::one());
    }
    let mut pairs = Vec::new();
    for factor in t.split('*') {
        let body = factor
            .strip_prefix('x')
            .ok_or_else(|| SdpaError::Monomial { text: text.into() })?;
        let (var, exp) = match body.split_once('^') {
            Some((v, e)) => (v, e),
            None => (body, "1"),
        };
        let v: u32 = var
            .parse()
            .ok()
            .filter(|&v| v >= 1)
            .ok_or_else(|| SdpaError::Monomial { text: text.into() })?;
        let e: u32 = exp
            .parse()
            .ok()
            .filter(|&e| e >= 1)
            .ok_or_else(|| SdpaError::Monomial { text: text.into() })?;
        pairs.push((v - 1, e));
    }
    if pairs.is_empty() {
        return Err(SdpaError::Monomial { text: text.into() });
    }
    Ok(Monomial::from_pairs(&pairs))
}

/// Whitespace token stream over a file, with comment lines removed and a
/// line counter for error reporting.
struct Tokens<'a> {
    path: &'a Path,
    toks: Vec<(usize, &'a str)>,
    at: usize,
}

impl<'a> Tokens<'a> {
    fn new(path: &'a Path, text: &'a str) -> Tokens<'a> {
        let mut toks = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let t = line.trim_start();
            if t.starts_with('*') || t.starts_with('"') {
                continue;
            }
            for tok in line.split_whitespace() {
                toks.push((ln + 1, tok));
            }
        }
        Tokens { path, toks, at: 0 }
    }

    fn err(&self, line: usize, message: String) -> SdpaError {
        SdpaError::Parse {
            path: self.path.display().to_string(),
            line,
            message,
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str), SdpaError> {
        if self.at < self.toks.len() {
            let t = self.toks[self.at];
            self.at += 1;
            Ok(t)
        } else {
            let last = self.toks.last().map_or(1, |&(ln, _)| ln);
            Err(self.err(last, format!("file ends before {what}")))
        }
    }

    fn next_usize(&mut self, what: &str) -> Result<usize, SdpaError> {
        let (ln, t) = self.next(what)?;
        // sizes may carry SDPA punctuation such as braces or commas
        let clean = t.trim_matches(|c| c == '{' || c == '}' || c == ',' || c == '(' || c == ')');
        clean
            .parse()
            .map_err(|_| self.err(ln, format!("expected {what}, found {t:?}")))
    }

    fn next_i64(&mut self, what: &str) -> Result<i64, SdpaError> {
        let (ln, t) = self.next(what)?;
        let clean = t.trim_matches(|c| c == '{' || c == '}' || c == ',' || c == '(' || c == ')');
        clean
            .parse()
            .map_err(|_| self.err(ln, format!("expected {what}, found {t:?}")))
    }

    fn next_f64(&mut self, what: &str) -> Result<f64, SdpaError> {
        let (ln, t) = self.next(what)?;
        let clean = t.trim_matches(|c| c == '{' || c == '}' || c == ',');
        clean
            .parse()
            .map_err(|_| self.err(ln, format!("expected {what}, found {t:?}")))
    }

    fn exhausted(&self) -> bool {
        self.at >= self.toks.len()
    }
}

struct BlockMeta {
    source: BlockSource,
    basis: Vec<Monomial>,
}

struct EqMeta {
    constraint: usize,
    a0: f64,
    rhs: f64,
    shift: Monomial,
}

struct Sidecar {
    name: String,
    r: u32,
    m: usize,
    offset: f64,
    psd_count: usize,
    /// Entry count of the data file, when the writer recorded one.
    entries: Option<usize>,
    blocks: Vec<BlockMeta>,
    eqrows: Vec<EqMeta>,
    diag: Vec<DiagSlot>,
    y_monomials: Vec<Monomial>,
}

fn parse_sidecar(path: &Path) -> Result<Sidecar, SdpaError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let perr = |line: usize, message: String| SdpaError::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut name = String::new();
    let mut r = 0u32;
    let mut m = None;
    let mut offset = 0.0;
    let mut psd_count = 0usize;
    let mut entries = None;
    let mut blocks: Vec<(usize, BlockMeta)> = Vec::new();
    let mut eqrows: Vec<(usize, EqMeta)> = Vec::new();
    let mut diag = Vec::new();
    let mut y: Vec<(usize, Monomial)> = Vec::new();

    for (ln0, line) in text.lines().enumerate() {
        let ln = ln0 + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# ") {
            let mut words = rest.split_whitespace();
            match words.next() {
                Some("name") => name = words.collect::<Vec<_>>().join(" "),
                Some("r") => {
                    r = words
                        .next()
                        .and_then(|w| w.parse().ok())
                        .ok_or_else(|| perr(ln, "bad r header".into()))?;
                }
                Some("m") => {
                    m = Some(
                        words
                            .next()
                            .and_then(|w| w.parse::<usize>().ok())
                            .ok_or_else(|| perr(ln, "bad m header".into()))?,
                    );
                }
                Some("offset") => {
                    offset = words
                        .next()
                        .and_then(|w| w.parse().ok())
                        .ok_or_else(|| perr(ln, "bad offset header".into()))?;
                }
                Some("psdblocks") => {
                    psd_count = words
                        .next()
                        .and_then(|w| w.parse().ok())
                        .ok_or_else(|| perr(ln, "bad psdblocks header".into()))?;
                }
                Some("entries") => {
                    entries = Some(
                        words
                            .next()
                            .and_then(|w| w.parse().ok())
                            .ok_or_else(|| perr(ln, "bad entries header".into()))?,
                    );
                }
                Some("block") => {
                    let (head, basis_text) = rest
                        .split_once(" : ")
                        .ok_or_else(|| perr(ln, "block header missing basis".into()))?;
                    let parts: Vec<&str> = head.split_whitespace().collect();
                    let bad = || perr(ln, format!("bad block header {head:?}"));
                    let idx: usize = parts.get(1).and_then(|w| w.parse().ok()).ok_or_else(bad)?;
                    let source = match parts.get(2) {
                        Some(&"moment") => BlockSource::Moment {
                            subset: parts.get(3).and_then(|w| w.parse().ok()).ok_or_else(bad)?,
                        },
                        Some(&"localizer") => BlockSource::Localizer {
                            subset: parts.get(3).and_then(|w| w.parse().ok()).ok_or_else(bad)?,
                            constraint: parts
                                .get(4)
                                .and_then(|w| w.parse().ok())
                                .ok_or_else(bad)?,
                        },
                        _ => return Err(bad()),
                    };
                    let basis = basis_text
                        .split_whitespace()
                        .map(parse_monomial)
                        .collect::<Result<Vec<_>, _>>()?;
                    blocks.push((idx, BlockMeta { source, basis }));
                }
                Some("eqrow") => {
                    let parts: Vec<&str> = words.collect();
                    let bad = || perr(ln, format!("bad eqrow header {rest:?}"));
                    if parts.len() != 5 {
                        return Err(bad());
                    }
                    let idx: usize = parts[0].parse().map_err(|_| bad())?;
                    eqrows.push((
                        idx,
                        EqMeta {
                            constraint: parts[1].parse().map_err(|_| bad())?,
                            a0: parts[2].parse().map_err(|_| bad())?,
                            rhs: parts[3].parse().map_err(|_| bad())?,
                            shift: parse_monomial(parts[4])?,
                        },
                    ));
                }
                Some("diag") => {
                    for tok in words {
                        let slot = if let Some(n) = tok.strip_prefix("b") {
                            DiagSlot::Block(
                                n.parse()
                                    .map_err(|_| perr(ln, format!("bad diag token {tok:?}")))?,
                            )
                        } else if let Some(n) = tok.strip_prefix("e+") {
                            DiagSlot::EqPlus(
                                n.parse()
                                    .map_err(|_| perr(ln, format!("bad diag token {tok:?}")))?,
                            )
                        } else if let Some(n) = tok.strip_prefix("e-") {
                            DiagSlot::EqMinus(
                                n.parse()
                                    .map_err(|_| perr(ln, format!("bad diag token {tok:?}")))?,
                            )
                        } else {
                            return Err(perr(ln, format!("bad diag token {tok:?}")));
                        };
                        diag.push(slot);
                    }
                }
                _ => {} // unknown headers are ignored for forward compatibility
            }
            continue;
        }
        // data line: y_index \t matno \t monomial
        let mut cols = line.split('\t');
        let bad = || perr(ln, format!("bad moment map line {line:?}"));
        let g: usize = cols
            .next()
            .and_then(|w| w.trim().parse().ok())
            .ok_or_else(bad)?;
        let _matno: usize = cols
            .next()
            .and_then(|w| w.trim().parse().ok())
            .ok_or_else(bad)?;
        let mono = parse_monomial(cols.next().ok_or_else(bad)?)?;
        y.push((g, mono));
    }

    y.sort_by_key(|&(g, _)| g);
    for (want, &(got, _)) in y.iter().enumerate() {
        if got != want {
            return Err(perr(
                0,
                format!("moment map indices are not contiguous at {got}"),
            ));
        }
    }
    blocks.sort_by_key(|&(i, _)| i);
    eqrows.sort_by_key(|&(i, _)| i);
    let m = m.ok_or_else(|| perr(0, "missing m header".into()))?;
    Ok(Sidecar {
        name,
        r,
        m,
        offset,
        psd_count,
        entries,
        blocks: blocks.into_iter().map(|(_, b)| b).collect(),
        eqrows: eqrows.into_iter().map(|(_, e)| e).collect(),
        diag,
        y_monomials: y.into_iter().map(|(_, mono)| mono).collect(),
    })
}

/// Reads a `.dat-s` file and its sidecar map back into the [`BlockSdp`]
/// that produced them.
pub fn import_sdpa_problem(path: &Path, sidecar: &Path) -> Result<BlockSdp, SdpaError> {
    let side = parse_sidecar(sidecar)?;
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut toks = Tokens::new(path, &text);

    let m = toks.next_usize("the variable count")?;
    if m != side.m || m + 1 != side.y_monomials.len() {
        return Err(SdpaError::Dimension {
            expected: side.y_monomials.len().saturating_sub(1),
            found: m,
        });
    }
    let nblocks = toks.next_usize("the block count")?;
    let mut sizes = Vec::with_capacity(nblocks);
    for _ in 0..nblocks {
        sizes.push(toks.next_i64("a block size")?);
    }
    let expect_diag = !side.diag.is_empty();
    if sizes.len() != side.psd_count + usize::from(expect_diag) {
        return Err(toks.err(
            1,
            format!("block count {nblocks} does not match the sidecar"),
        ));
    }
    for (q, &sz) in sizes.iter().take(side.psd_count).enumerate() {
        let meta_size = side
            .blocks
            .iter()
            .filter(|b| b.basis.len() > 1)
            .nth(q)
            .map_or(0, |b| b.basis.len());
        if sz <= 0 || sz as usize != meta_size {
            return Err(toks.err(
                1,
                format!("block {} size {sz} does not match the sidecar", q + 1),
            ));
        }
    }
    if expect_diag {
        let d = sizes[side.psd_count];
        if d.unsigned_abs() as usize != side.diag.len() {
            return Err(toks.err(
                1,
                format!("diagonal block size {d} does not match the sidecar"),
            ));
        }
    }

    let mut c = vec![0.0; m];
    for v in c.iter_mut() {
        *v = toks.next_f64("an objective coefficient")?;
    }

    // per original block: matno → (row, col, value) list
    let psd_orig: Vec<usize> = side
        .blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| b.basis.len() > 1)
        .map(|(i, _)| i)
        .collect();
    // matno → (row, col, value) list within one block
    type CellBucket = std::collections::BTreeMap<u32, Vec<(u32, u32, f64)>>;
    let nb = side.blocks.len();
    let mut buckets: Vec<CellBucket> = (0..nb).map(|_| CellBucket::new()).collect();
    let mut eq_terms: Vec<std::collections::BTreeMap<u32, f64>> = (0..side.eqrows.len())
        .map(|_| std::collections::BTreeMap::new())
        .collect();
    // which original eq row each sidecar eqrow entry describes
    let eq_index_of: std::collections::HashMap<usize, usize> = {
        // eqrows are stored by original row index via their position order
        let mut map = std::collections::HashMap::new();
        let mut rows: Vec<usize> = side
            .diag
            .iter()
            .filter_map(|s| match s {
                DiagSlot::EqPlus(r) => Some(*r),
                _ => None,
            })
            .collect();
        rows.sort_unstable();
        rows.dedup();
        for (pos, r) in rows.into_iter().enumerate() {
            map.insert(r, pos);
        }
        map
    };

    let mut n_entries = 0usize;
    while !toks.exhausted() {
        n_entries += 1;
        let (ln, _) = toks.toks[toks.at];
        let matno = toks.next_usize("a matrix number")?;
        let blkno = toks.next_usize("a block number")?;
        let i = toks.next_usize("a row index")?;
        let j = toks.next_usize("a column index")?;
        let v = toks.next_f64("an entry value")?;
        if matno > m {
            return Err(toks.err(ln, format!("matrix number {matno} out of range")));
        }
        if blkno == 0 || blkno > sizes.len() {
            return Err(toks.err(ln, format!("block number {blkno} out of range")));
        }
        if i == 0 || j == 0 || i > j {
            return Err(toks.err(ln, format!("bad entry position ({i}, {j})")));
        }
        let g = matno as u32;
        if blkno <= side.psd_count {
            let orig = psd_orig[blkno - 1];
            let val = if matno == 0 { -v } else { v };
            buckets[orig]
                .entry(g)
                .or_default()
                .push((i as u32 - 1, j as u32 - 1, val));
        } else {
            if i != j {
                return Err(toks.err(
                    ln,
                    format!("off-diagonal entry ({i}, {j}) in the diagonal block"),
                ));
            }
            match side.diag.get(i - 1) {
                Some(&DiagSlot::Block(orig)) => {
                    let val = if matno == 0 { -v } else { v };
                    buckets[orig].entry(g).or_default().push((0, 0, val));
                }
                Some(&DiagSlot::EqPlus(r)) => {
                    if matno != 0 {
                        let pos = eq_index_of[&r];
                        *eq_terms[pos].entry(g).or_insert(0.0) += v;
                    }
                    // the matno-0 entry is rhs − a0; the sidecar carries both
                }
                Some(&DiagSlot::EqMinus(_)) => {} // mirror of the + side
                None => {
                    return Err(toks.err(ln, format!("diagonal position {i} out of range")));
                }
            }
        }
    }

    if let Some(expected) = side.entries {
        if n_entries != expected {
            return Err(toks.err(
                0,
                format!("file holds {n_entries} entries, sidecar recorded {expected} (truncated or edited?)"),
            ));
        }
    }

    let mut blocks = Vec::with_capacity(nb);
    for (orig, meta) in side.blocks.iter().enumerate() {
        let mut support = Vec::new();
        let mut coeffs = Vec::new();
        for (&g, list) in &buckets[orig] {
            let mut list = list.clone();
            list.sort_by_key(|&(r, c, _)| (r, c));
            support.push(g);
            coeffs.push(list);
        }
        blocks.push(PsdBlock {
            size: meta.basis.len(),
            source: meta.source,
            basis: meta.basis.clone(),
            support,
            coeffs,
        });
    }

    let mut eq_rows = vec![LinRow {
        terms: vec![(0, 1.0)],
        rhs: 1.0,
        source: RowSource::Normalization,
    }];
    for (pos, meta) in side.eqrows.iter().enumerate() {
        let mut terms: Vec<(u32, f64)> = Vec::new();
        if meta.a0 != 0.0 {
            terms.push((0, meta.a0));
        }
        for (&g, &a) in &eq_terms[pos] {
            terms.push((g, a));
        }
        eq_rows.push(LinRow {
            terms,
            rhs: meta.rhs,
            source: RowSource::Equality {
                constraint: meta.constraint,
                shift: meta.shift.clone(),
            },
        });
    }

    let mut objective = Vec::new();
    if side.offset != 0.0 {
        objective.push((0u32, side.offset));
    }
    for (g, &v) in c.iter().enumerate() {
        if v != 0.0 {
            objective.push((g as u32 + 1, v));
        }
    }

    Ok(BlockSdp {
        name: side.name,
        r: side.r,
        y_monomials: side.y_monomials,
        blocks,
        eq_rows,
        objective,
    })
}

/// Reads an SDPA solver's `.out` result file, mapping its variable vector
/// back onto the moments of `sdp` (the problem that was exported).
pub fn import_sdpa_solution(path: &Path, sdp: &BlockSdp) -> Result<SdpSolution, SdpaError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let perr = |message: String| SdpaError::Parse {
        path: path.display().to_string(),
        line: 0,
        message,
    };

    let mut phase = None;
    let mut pobj = None;
    let mut dobj = None;
    let mut xvec: Option<Vec<f64>> = None;
    let mut want_xvec = false;
    for line in text.lines() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("phase.value") {
            phase = Some(rest.trim_start_matches([' ', '=']).trim().to_string());
        } else if let Some(rest) = t.strip_prefix("objValPrimal") {
            let v = rest.trim_start_matches([' ', '=']).trim();
            pobj = Some(
                v.parse::<f64>()
                    .map_err(|_| perr(format!("bad objValPrimal {v:?}")))?,
            );
        } else if let Some(rest) = t.strip_prefix("objValDual") {
            let v = rest.trim_start_matches([' ', '=']).trim();
            dobj = Some(
                v.parse::<f64>()
                    .map_err(|_| perr(format!("bad objValDual {v:?}")))?,
            );
        } else if t.starts_with("xVec") && xvec.is_none() {
            if let Some(idx) = t.find('{') {
                xvec = Some(parse_brace_list(&t[idx..], &perr)?);
            } else {
                want_xvec = true;
            }
        } else if want_xvec && t.starts_with('{') {
            xvec = Some(parse_brace_list(t, &perr)?);
            want_xvec = false;
        }
    }

    let phase = phase.ok_or_else(|| perr("no phase.value in solver output".into()))?;
    let pobj = pobj.ok_or_else(|| perr("no objValPrimal in solver output".into()))?;
    let dobj = dobj.ok_or_else(|| perr("no objValDual in solver output".into()))?;
    let xvec = xvec.ok_or_else(|| perr("no xVec in solver output".into()))?;

    let m = sdp.n_moments() - 1;
    if xvec.len() != m {
        return Err(SdpaError::Dimension {
            expected: m,
            found: xvec.len(),
        });
    }

    let status = match phase.as_str() {
        "pdOPT" => Status::Optimal,
        "pdFEAS" => Status::SlowProgress,
        "pINF_dFEAS" | "pFEAS_dINF" | "pdINF" => Status::Infeasible,
        _ => Status::Unknown,
    };
    let offset = sdp
        .objective
        .iter()
        .find(|&&(g, _)| g == 0)
        .map_or(0.0, |&(_, v)| v);

    let mut y = Vec::with_capacity(m + 1);
    y.push(1.0);
    y.extend_from_slice(&xvec);
    Ok(SdpSolution {
        status,
        y,
        block_duals: Vec::new(),
        eq_duals: Vec::new(),
        objective: pobj + offset,
        dual_objective: dobj + offset,
        iterations: 0,
        rel_gap: f64::NAN,
        primal_infeas: f64::NAN,
        dual_infeas: f64::NAN,
        log: Vec::new(),
        note: Some(format!("imported from SDPA output ({phase})")),
    })
}

fn parse_brace_list(text: &str, perr: &dyn Fn(String) -> SdpaError) -> Result<Vec<f64>, SdpaError> {
    let inner = text.trim().trim_start_matches('{').trim_end_matches('}');
    let mut vals = Vec::new();
    for piece in inner.split(',') {
        let p = piece.trim().trim_start_matches('+');
        if p.is_empty() {
            continue;
        }
        vals.push(
            p.parse::<f64>()
                .map_err(|_| perr(format!("bad vector entry {piece:?}")))?,
        );
    }
    Ok(vals)
}
