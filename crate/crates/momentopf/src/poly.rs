//! Sparse multivariate polynomials over `f64` coefficients.
//!
//! Variables are identified by `u32` indices starting at 0; the text form
//! writes them 1-based (`x1`, `x2`, ...). Monomials are kept in graded
//! lexicographic order: lower total degree first, and within a degree class
//! the monomial with the higher exponent on the earliest variable sorts
//! first, so a basis over `{x1, x2}` at degree 2 reads
//! `1, x1, x2, x1^2, x1*x2, x2^2`. The constant monomial is always index 0
//! of a basis and degree-1 monomials occupy the next `|I|` slots, which lets
//! callers slice first-order moment information positionally.
//!
//! Coefficient arithmetic is plain `f64` with exact-zero cancellation: a term
//! whose coefficient becomes `0.0` is removed, and no epsilon thresholding is
//! applied anywhere in this module.

use std::collections::BTreeMap;
use std::fmt;

/// A monomial: sorted `(variable, exponent)` pairs with all exponents >= 1.
/// The empty product is the constant monomial `1`.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Monomial {
    vars: Vec<(u32, u32)>,
}

impl Monomial {
    /// The constant monomial `1`.
    pub fn one() -> Self {
        Monomial { vars: Vec::new() }
    }

    /// A single variable `x_n`.
    pub fn var(n: u32) -> Self {
        Monomial { vars: vec![(n, 1)] }
    }

    /// Builds a monomial from `(variable, exponent)` pairs. Pairs may be
    /// unsorted or repeated; zero exponents are dropped.
    pub fn from_pairs(pairs: &[(u32, u32)]) -> Self {
        let mut map: BTreeMap<u32, u32> = BTreeMap::new();
        for &(v, e) in pairs {
            if e > 0 {
                *map.entry(v).or_insert(0) += e;
            }
        }
        Monomial {
            vars: map.into_iter().collect(),
        }
    }

    /// Total degree.
    pub fn degree(&self) -> u32 {
        self.vars.iter().map(|&(_, e)| e).sum()
    }

    /// True for the constant monomial.
    pub fn is_one(&self) -> bool {
        self.vars.is_empty()
    }

    /// Exponent of variable `n` (0 if absent).
    pub fn exponent(&self, n: u32) -> u32 {
        self.vars
            .iter()
            .find(|&&(v, _)| v == n)
            .map_or(0, |&(_, e)| e)
    }

    /// The `(variable, exponent)` pairs, sorted by variable.
    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.vars
    }

    /// Iterator over the distinct variables.
    pub fn variables(&self) -> impl Iterator<Item = u32> + '_ {
        self.vars.iter().map(|&(v, _)| v)
    }

    /// Product of two monomials.
    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.vars.len() + other.vars.len());
        let (mut i, mut j) = (0, 0);
        while i < self.vars.len() && j < other.vars.len() {
            let (va, ea) = self.vars[i];
            let (vb, eb) = other.vars[j];
            match va.cmp(&vb) {
                std::cmp::Ordering::Less => {
                    out.push((va, ea));
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push((vb, eb));
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push((va, ea + eb));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.vars[i..]);
        out.extend_from_slice(&other.vars[j..]);
        Monomial { vars: out }
    }

    /// Evaluates the monomial at a point (indexed by variable).
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.vars
            .iter()
            .map(|&(v, e)| x[v as usize].powi(e as i32))
            .product()
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Monomial {
    /// Graded lexicographic order; see the module docs.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        // Same degree: walk variables in ascending index; the first variable
        // where the exponents differ decides, with the higher exponent
        // sorting earlier.
        let (mut i, mut j) = (0, 0);
        loop {
            match (self.vars.get(i), other.vars.get(j)) {
                (None, None) => return Ordering::Equal,
                (Some(_), None) => return Ordering::Less,
                (None, Some(_)) => return Ordering::Greater,
                (Some(&(va, ea)), Some(&(vb, eb))) => {
                    if va < vb {
                        // self has a nonzero exponent on an earlier variable
                        return Ordering::Less;
                    }
                    if vb < va {
                        return Ordering::Greater;
                    }
                    if ea != eb {
                        return if ea > eb {
                            Ordering::Less
                        } else {
                            Ordering::Greater
                        };
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.vars.is_empty() {
            return write!(f, "1");
        }
        let mut first = true;
        for &(v, e) in &self.vars {
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "x{}", v + 1)?;
            } else {
                write!(f, "x{}^{}", v + 1, e)?;
            }
        }
        Ok(())
    }
}

/// A polynomial as a map from monomials to coefficients, over a declared
/// ambient variable count `nvars` (variables `0..nvars`).
#[derive(Clone, PartialEq, Debug)]
pub struct Polynomial {
    nvars: u32,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    /// The zero polynomial in `nvars` variables.
    pub fn zero(nvars: u32) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    /// A constant polynomial.
    pub fn constant(nvars: u32, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(Monomial::one(), c);
        p
    }

    /// The polynomial `x_n`.
    pub fn var(nvars: u32, n: u32) -> Self {
        assert!(
            n < nvars,
            "variable index {n} out of range (nvars = {nvars})"
        );
        let mut p = Self::zero(nvars);
        p.add_term(Monomial::var(n), 1.0);
        p
    }

    /// Ambient variable count.
    pub fn nvars(&self) -> u32 {
        self.nvars
    }

    /// Adds `c * m` to the polynomial, removing the term if the coefficient
    /// cancels to exactly zero.
    pub fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        debug_assert!(m.variables().all(|v| v < self.nvars));
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(slot) => {
                slot.insert(c);
            }
            Entry::Occupied(mut slot) => {
                let updated = *slot.get() + c;
                if updated == 0.0 {
                    slot.remove();
                } else {
                    *slot.get_mut() = updated;
                }
            }
        }
    }

    /// Coefficient of a monomial (0 if absent).
    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    /// Constant term.
    pub fn constant_term(&self) -> f64 {
        self.coeff(&Monomial::one())
    }

    /// Number of terms with nonzero coefficient.
    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// True if there are no terms.
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in ascending graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    /// Total degree (0 for the zero polynomial).
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    /// The set of variables with a nonzero appearance.
    pub fn support_vars(&self) -> Vec<u32> {
        let mut vars: Vec<u32> = self
            .terms
            .keys()
            .flat_map(|m| m.variables().collect::<Vec<_>>())
            .collect();
        vars.sort_unstable();
        vars.dedup();
        vars
    }

    /// Largest absolute coefficient (0 for the zero polynomial).
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |acc, &c| acc.max(c.abs()))
    }

    /// Sum of two polynomials.
    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m.clone(), c);
        }
        out
    }

    /// Difference of two polynomials.
    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m.clone(), -c);
        }
        out
    }

    /// Product of two polynomials.
    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, other.nvars);
        let mut out = Polynomial::zero(self.nvars);
        for (ma, ca) in self.terms() {
            for (mb, cb) in other.terms() {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    /// Scales every coefficient by `s`.
    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Polynomial::zero(self.nvars);
        for (m, c) in self.terms() {
            out.add_term(m.clone(), c * s);
        }
        out
    }

    /// The square of the polynomial.
    pub fn square(&self) -> Polynomial {
        self.mul(self)
    }

    /// Evaluates at a point indexed by variable (`x.len() >= nvars`).
    pub fn eval(&self, x: &[f64]) -> f64 {
        assert!(x.len() >= self.nvars as usize);
        self.terms().map(|(m, c)| c * m.eval(x)).sum()
    }

    /// Substitutes `x_n <- a_n * x_n + b_n` for every variable, returning the
    /// expanded polynomial (same ambient variable set).
    pub fn substitute_affine(&self, affine: &[(f64, f64)]) -> Polynomial {
        assert!(affine.len() >= self.nvars as usize);
        let mut out = Polynomial::zero(self.nvars);
        for (m, c) in self.terms() {
            let mut term = Polynomial::constant(self.nvars, c);
            for &(v, e) in m.pairs() {
                let (a, b) = affine[v as usize];
                let mut factor = Polynomial::zero(self.nvars);
                factor.add_term(Monomial::var(v), a);
                factor.add_term(Monomial::one(), b);
                for _ in 0..e {
                    term = term.mul(&factor);
                }
            }
            out = out.add(&term);
        }
        out
    }
}

impl fmt::Display for Polynomial {
    /// Writes terms in descending graded-lex order, e.g.
    /// `-1.5*x3^2*x7 + 2*x1 - 0.5`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.terms.iter().rev().enumerate() {
            let mag = c.abs();
            if i == 0 {
                if *c < 0.0 {
                    write!(f, "-")?;
                }
            } else if *c < 0.0 {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            if m.is_one() {
                write!(f, "{mag}")?;
            } else if mag == 1.0 {
                write!(f, "{m}")?;
            } else {
                write!(f, "{mag}*{m}")?;
            }
        }
        Ok(())
    }
}

/// Binomial coefficient as `u64` (panics on overflow; sizes used here are
/// far below the limit).
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    u64::try_from(acc).expect("binomial overflow")
}

/// All monomials of degree <= `r` over a sorted set of variables, in graded
/// lexicographic order, with a reverse index for membership queries.
#[derive(Clone, Debug)]
pub struct MonomialBasis {
    vars: Vec<u32>,
    r: u32,
    list: Vec<Monomial>,
    index: std::collections::HashMap<Monomial, u32>,
}

impl MonomialBasis {
    /// Builds the basis over `vars` (must be sorted and duplicate-free) up to
    /// degree `r`. The result has `binomial(|vars| + r, r)` elements, the
    /// constant monomial first and the degree-1 monomials at `1..=|vars|`.
    pub fn new(vars: &[u32], r: u32) -> Self {
        assert!(
            vars.windows(2).all(|w| w[0] < w[1]),
            "basis variables must be sorted and unique"
        );
        let mut list =
            Vec::with_capacity(binomial(vars.len() as u64 + r as u64, r as u64) as usize);
        let mut current: Vec<(u32, u32)> = Vec::new();
        for d in 0..=r {
            emit_degree(vars, d, 0, &mut current, &mut list);
        }
        let index = list
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i as u32))
            .collect();
        MonomialBasis {
            vars: vars.to_vec(),
            r,
            list,
            index,
        }
    }

    /// The variable set.
    pub fn vars(&self) -> &[u32] {
        &self.vars
    }

    /// The degree cap.
    pub fn order(&self) -> u32 {
        self.r
    }

    /// Number of monomials.
    pub fn len(&self) -> usize {
        self.list.len()
    }

    /// True when the variable set is empty and r = 0 leaves only `1`.
    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }

    /// Monomial at position `i`.
    pub fn get(&self, i: usize) -> &Monomial {
        &self.list[i]
    }

    /// Position of a monomial, if in the basis.
    pub fn position(&self, m: &Monomial) -> Option<u32> {
        self.index.get(m).copied()
    }

    /// Iterator over the monomials in order.
    pub fn iter(&self) -> impl Iterator<Item = &Monomial> {
        self.list.iter()
    }
}

/// Emits all monomials of exact degree `d` over `vars[pos..]` in graded-lex
/// order (higher exponent on the earlier variable first).
fn emit_degree(
    vars: &[u32],
    d: u32,
    pos: usize,
    current: &mut Vec<(u32, u32)>,
    out: &mut Vec<Monomial>,
) {
    if d == 0 {
        out.push(Monomial {
            vars: current.clone(),
        });
        return;
    }
    if pos == vars.len() {
        return;
    }
    if pos + 1 == vars.len() {
        current.push((vars[pos], d));
        out.push(Monomial {
            vars: current.clone(),
        });
        current.pop();
        return;
    }
    for e in (0..=d).rev() {
        if e > 0 {
            current.push((vars[pos], e));
        }
        emit_degree(vars, d - e, pos + 1, current, out);
        if e > 0 {
            current.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent binomial oracle: Pascal's triangle, no shared code with
    /// `binomial`.
    fn pascal(n: usize, k: usize) -> u64 {
        let mut row = vec![1u64];
        for _ in 0..n {
            let mut next = vec![1u64];
            for i in 1..row.len() {
                next.push(row[i - 1] + row[i]);
            }
            next.push(1);
            row = next;
        }
        row.get(k).copied().unwrap_or(0)
    }

    /// Independent evaluation oracle: evaluates term by term with explicit
    /// repeated multiplication instead of `powi`.
    fn eval_oracle(p: &Polynomial, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for (m, c) in p.terms() {
            let mut v = c;
            for &(var, e) in m.pairs() {
                for _ in 0..e {
                    v *= x[var as usize];
                }
            }
            total += v;
        }
        total
    }

    #[test]
    fn basis_sizes_match_binomial() {
        for (nvars, r) in [(14u32, 2u32), (22, 2), (5, 3), (1, 4), (3, 0)] {
            let vars: Vec<u32> = (0..nvars).collect();
            let basis = MonomialBasis::new(&vars, r);
            assert_eq!(
                basis.len() as u64,
                pascal((nvars + r) as usize, r as usize),
                "size for ({nvars}, {r})"
            );
        }
        // the two sizes quoted throughout the block statistics
        assert_eq!(binomial(14 + 2, 2), 120);
        assert_eq!(binomial(22 + 2, 2), 276);
    }

    #[test]
    fn basis_order_is_graded_lex() {
        let basis = MonomialBasis::new(&[0, 1], 2);
        let names: Vec<String> = basis.iter().map(|m| m.to_string()).collect();
        assert_eq!(names, ["1", "x1", "x2", "x1^2", "x1*x2", "x2^2"]);
        // constant first, degree-1 block positional
        assert_eq!(basis.position(&Monomial::one()), Some(0));
        assert_eq!(basis.position(&Monomial::var(0)), Some(1));
        assert_eq!(basis.position(&Monomial::var(1)), Some(2));
        // list agrees with the comparator
        let mut sorted = basis.list.clone();
        sorted.sort();
        assert_eq!(sorted, basis.list);
    }

    #[test]
    fn basis_over_sparse_variable_set() {
        let basis = MonomialBasis::new(&[3, 7], 2);
        assert_eq!(basis.len(), 6);
        assert_eq!(basis.get(1).to_string(), "x4");
        assert_eq!(basis.get(2).to_string(), "x8");
        assert_eq!(basis.get(4).to_string(), "x4*x8");
    }

    #[test]
    fn multiplication_expands_binomial_square() {
        let x1 = Polynomial::var(2, 0);
        let x2 = Polynomial::var(2, 1);
        let sum = x1.add(&x2);
        let sq = sum.square();
        assert_eq!(sq.coeff(&Monomial::from_pairs(&[(0, 2)])), 1.0);
        assert_eq!(sq.coeff(&Monomial::from_pairs(&[(0, 1), (1, 1)])), 2.0);
        assert_eq!(sq.coeff(&Monomial::from_pairs(&[(1, 2)])), 1.0);
        assert_eq!(sq.term_count(), 3);
    }

    #[test]
    fn exact_cancellation_removes_terms() {
        let x1 = Polynomial::var(1, 0);
        let diff = x1.sub(&x1);
        assert!(diff.is_zero());
        assert_eq!(diff.term_count(), 0);

        // (x1 + 1)(x1 - 1) = x1^2 - 1 with the cross terms cancelling exactly
        let a = x1.add(&Polynomial::constant(1, 1.0));
        let b = x1.sub(&Polynomial::constant(1, 1.0));
        let prod = a.mul(&b);
        assert_eq!(prod.term_count(), 2);
        assert_eq!(prod.coeff(&Monomial::var(0)), 0.0);
    }

    #[test]
    fn evaluation_matches_oracle() {
        // f = 0.5*x1^2*x3 - 2*x2 + 3
        let mut f = Polynomial::zero(3);
        f.add_term(Monomial::from_pairs(&[(0, 2), (2, 1)]), 0.5);
        f.add_term(Monomial::var(1), -2.0);
        f.add_term(Monomial::one(), 3.0);
        for x in [
            [0.0, 0.0, 0.0],
            [1.0, 2.0, 3.0],
            [-1.5, 0.25, 2.0],
            [0.1, -0.7, -0.3],
        ] {
            let got = f.eval(&x);
            let want = eval_oracle(&f, &x);
            assert!(
                (got - want).abs() <= 1e-12 * (1.0 + want.abs()),
                "{got} vs {want}"
            );
        }
    }

    #[test]
    fn product_evaluation_matches_pointwise_product() {
        let mut f = Polynomial::zero(2);
        f.add_term(Monomial::from_pairs(&[(0, 1), (1, 1)]), 2.0);
        f.add_term(Monomial::var(0), -1.0);
        let mut g = Polynomial::zero(2);
        g.add_term(Monomial::from_pairs(&[(1, 2)]), 1.5);
        g.add_term(Monomial::one(), 0.5);
        let prod = f.mul(&g);
        for x in [[0.3, -0.8], [1.0, 1.0], [-2.0, 0.5]] {
            let lhs = prod.eval(&x);
            let rhs = f.eval(&x) * g.eval(&x);
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn affine_substitution_matches_transformed_evaluation() {
        // f(x) = x1^2 - 3*x1*x2 + x2, substitute x_n = a_n t_n + b_n
        let mut f = Polynomial::zero(2);
        f.add_term(Monomial::from_pairs(&[(0, 2)]), 1.0);
        f.add_term(Monomial::from_pairs(&[(0, 1), (1, 1)]), -3.0);
        f.add_term(Monomial::var(1), 1.0);
        let affine = [(2.0, -1.0), (0.5, 0.25)];
        let g = f.substitute_affine(&affine);
        for t in [[0.0, 0.0], [1.0, -1.0], [0.4, 2.0]] {
            let x = [
                affine[0].0 * t[0] + affine[0].1,
                affine[1].0 * t[1] + affine[1].1,
            ];
            let lhs = g.eval(&t);
            let rhs = f.eval(&x);
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn display_format() {
        let mut p = Polynomial::zero(7);
        p.add_term(Monomial::from_pairs(&[(2, 2), (6, 1)]), -1.5);
        p.add_term(Monomial::var(0), 2.0);
        p.add_term(Monomial::one(), -0.5);
        assert_eq!(p.to_string(), "-1.5*x3^2*x7 + 2*x1 - 0.5");
        assert_eq!(Polynomial::zero(1).to_string(), "0");
        let one_coeff = Polynomial::var(1, 0);
        assert_eq!(one_coeff.to_string(), "x1");
    }

    #[test]
    fn graded_lex_total_order_properties() {
        let basis = MonomialBasis::new(&[0, 1, 2], 3);
        let list = &basis.list;
        for i in 0..list.len() {
            for j in 0..list.len() {
                let ord = list[i].cmp(&list[j]);
                assert_eq!(ord.reverse(), list[j].cmp(&list[i]));
                assert_eq!(ord == std::cmp::Ordering::Equal, i == j);
                if i < j {
                    assert_eq!(ord, std::cmp::Ordering::Less);
                }
            }
        }
    }
}
