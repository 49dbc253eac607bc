//! Variable-subset families for sparse moment relaxations.
//!
//! Two constructions are provided. The *clique-based* pattern follows the
//! classical correlative-sparsity routine: build the sparsity graph, make it
//! chordal with a greedy fill-in heuristic, and take the maximal cliques.
//! The *minimal* pattern instead takes, per bus, exactly the variables of
//! that bus's balance equation (with the corresponding group subsets when the
//! bus is split). Minimal subsets are smaller but in general give up the
//! running intersection property, which [`rip_check`] tests explicitly.
//!
//! The dense relaxation is the one-subset pattern over all variables, so a
//! single assembly path serves all three.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::acopf::{ConstraintKind, PopProblem, SplitPlan};
use crate::netio::Network;
use crate::poly::{binomial, Polynomial};

/// Errors from pattern construction or validation.
#[derive(Debug, Error)]
pub enum SparsityError {
    #[error("constraint {tag} fits in no subset")]
    ConstraintNotCovered { tag: String },
    #[error("objective term {term} fits in no subset")]
    ObjectiveTermNotCovered { term: String },
    #[error("elimination order is not a perfect elimination order of the graph")]
    NotChordal,
    #[error("variable x{} is in no subset", var + 1)]
    VarNotCovered { var: u32 },
    #[error("constraint {tag} is assigned to subset {subset}, which misses variable x{}", var + 1)]
    AssignmentOutsideSubset {
        tag: String,
        subset: usize,
        var: u32,
    },
    #[error("objective decomposition does not reproduce the objective")]
    ObjectiveMismatch,
}

/// Simple undirected graph on vertices `0..n`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Graph {
    adj: Vec<BTreeSet<u32>>,
}

impl Graph {
    pub fn new(n: u32) -> Self {
        Graph {
            adj: vec![BTreeSet::new(); n as usize],
        }
    }

    pub fn n_vertices(&self) -> u32 {
        self.adj.len() as u32
    }

    pub fn add_edge(&mut self, u: u32, v: u32) {
        if u != v {
            self.adj[u as usize].insert(v);
            self.adj[v as usize].insert(u);
        }
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.adj[u as usize].contains(&v)
    }

    pub fn neighbors(&self, v: u32) -> impl Iterator<Item = u32> + '_ {
        self.adj[v as usize].iter().copied()
    }

    pub fn degree(&self, v: u32) -> usize {
        self.adj[v as usize].len()
    }

    /// Edges as ordered pairs (u < v), ascending.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for (u, nb) in self.adj.iter().enumerate() {
            for &v in nb.iter() {
                if (u as u32) < v {
                    out.push((u as u32, v));
                }
            }
        }
        out
    }

    pub fn n_edges(&self) -> usize {
        self.adj.iter().map(|nb| nb.len()).sum::<usize>() / 2
    }
}

/// How variables are linked in the correlative sparsity graph.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum EdgeRule {
    /// Edge only between variables sharing a single monomial — the literal
    /// rule. Sums like `x1 + x2` create no edge.
    #[default]
    Monomial,
    /// Edge between every pair of variables of the same constraint. The
    /// objective still contributes monomial-level edges only, since it is a
    /// sum of independent per-generator terms.
    Constraint,
}

/// Correlative sparsity pattern graph of a POP.
pub fn csp_graph(pop: &PopProblem, rule: EdgeRule) -> Graph {
    let mut g = Graph::new(pop.nvars());
    let link_monomials = |g: &mut Graph, p: &Polynomial| {
        for (m, _) in p.terms() {
            let vars: Vec<u32> = m.variables().collect();
            for i in 0..vars.len() {
                for j in i + 1..vars.len() {
                    g.add_edge(vars[i], vars[j]);
                }
            }
        }
    };
    link_monomials(&mut g, &pop.objective);
    for c in &pop.constraints {
        match rule {
            EdgeRule::Monomial => link_monomials(&mut g, &c.poly),
            EdgeRule::Constraint => {
                let vars = c.poly.support_vars();
                for i in 0..vars.len() {
                    for j in i + 1..vars.len() {
                        g.add_edge(vars[i], vars[j]);
                    }
                }
            }
        }
    }
    g
}

/// Chordal extension by greedy fill-in: repeatedly eliminate the vertex whose
/// elimination adds fewest fill edges (ties to the smallest index), adding
/// those edges. Returns the extension and the elimination order.
pub fn chordal_extend_greedy_fillin(g: &Graph) -> (Graph, Vec<u32>) {
    let n = g.n_vertices();
    let mut work = g.clone(); // shrinks as vertices are eliminated
    let mut filled = g.clone(); // accumulates fill edges, keeps all vertices
    let mut alive: Vec<bool> = vec![true; n as usize];
    let mut order = Vec::with_capacity(n as usize);

    for _ in 0..n {
        // fill count of each remaining vertex
        let mut best: Option<(usize, u32)> = None;
        for v in 0..n {
            if !alive[v as usize] {
                continue;
            }
            let nb: Vec<u32> = work.neighbors(v).collect();
            let mut fill = 0usize;
            for i in 0..nb.len() {
                for j in i + 1..nb.len() {
                    if !work.has_edge(nb[i], nb[j]) {
                        fill += 1;
                    }
                }
            }
            if best.map(|(bf, _)| fill < bf).unwrap_or(true) {
                best = Some((fill, v));
            }
        }
        let (_, v) = best.expect("vertices remain");
        let nb: Vec<u32> = work.neighbors(v).collect();
        for i in 0..nb.len() {
            for j in i + 1..nb.len() {
                if !work.has_edge(nb[i], nb[j]) {
                    work.add_edge(nb[i], nb[j]);
                    filled.add_edge(nb[i], nb[j]);
                }
            }
        }
        for &u in &nb {
            work.adj[u as usize].remove(&v);
        }
        work.adj[v as usize].clear();
        alive[v as usize] = false;
        order.push(v);
    }
    (filled, order)
}

/// Tests whether `order` is a perfect elimination order of `g`: for each
/// vertex, its later neighbors minus the first-eliminated one must all be
/// adjacent to that one.
pub fn is_perfect_elimination_order(g: &Graph, order: &[u32]) -> bool {
    let n = g.n_vertices() as usize;
    if order.len() != n {
        return false;
    }
    let mut rank = vec![usize::MAX; n];
    for (r, &v) in order.iter().enumerate() {
        if rank[v as usize] != usize::MAX {
            return false; // duplicate
        }
        rank[v as usize] = r;
    }
    for (r, &v) in order.iter().enumerate() {
        let later: Vec<u32> = g.neighbors(v).filter(|&u| rank[u as usize] > r).collect();
        let Some(&first) = later.iter().min_by_key(|&&u| rank[u as usize]) else {
            continue;
        };
        for &u in &later {
            if u != first && !g.has_edge(first, u) {
                return false;
            }
        }
    }
    true
}

/// Maximal cliques of a chordal graph from a perfect elimination order:
/// each vertex yields its closed later neighborhood; sets contained in
/// another are pruned. Errors if the order is not perfect elimination.
pub fn maximal_cliques(g: &Graph, order: &[u32]) -> Result<Vec<Vec<u32>>, SparsityError> {
    if !is_perfect_elimination_order(g, order) {
        return Err(SparsityError::NotChordal);
    }
    let n = g.n_vertices() as usize;
    let mut rank = vec![0usize; n];
    for (r, &v) in order.iter().enumerate() {
        rank[v as usize] = r;
    }
    let mut candidates: Vec<Vec<u32>> = Vec::with_capacity(n);
    for (r, &v) in order.iter().enumerate() {
        let mut k: Vec<u32> = g.neighbors(v).filter(|&u| rank[u as usize] > r).collect();
        k.push(v);
        k.sort_unstable();
        candidates.push(k);
    }
    let is_subset = |small: &[u32], big: &[u32]| small.iter().all(|x| big.binary_search(x).is_ok());
    let mut keep = Vec::new();
    'outer: for (i, cand) in candidates.iter().enumerate() {
        for (j, other) in candidates.iter().enumerate() {
            if i != j
                && cand.len() <= other.len()
                && is_subset(cand, other)
                && (cand.len() < other.len() || j < i)
            {
                continue 'outer; // contained in (or duplicate of) another
            }
        }
        keep.push(cand.clone());
    }
    Ok(keep)
}

/// Who produced a pattern.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Provenance {
    Minimal,
    CliqueBased,
    Dense,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Minimal => write!(f, "minimal"),
            Provenance::CliqueBased => write!(f, "clique"),
            Provenance::Dense => write!(f, "dense"),
        }
    }
}

/// A variable-subset family with its constraint assignment and objective
/// decomposition.
#[derive(Clone, PartialEq, Debug)]
pub struct SparsityPattern {
    /// Sorted variable-index sets, union covering all variables.
    pub subsets: Vec<Vec<u32>>,
    /// For each constraint, the subset it is relaxed in.
    pub assignment: Vec<usize>,
    /// Per-subset share of the objective; the shares sum to the objective
    /// term-for-term.
    pub objective_split: Vec<Polynomial>,
    pub provenance: Provenance,
}

impl SparsityPattern {
    /// Number of subsets.
    pub fn pmax(&self) -> usize {
        self.subsets.len()
    }

    /// Largest subset cardinality.
    pub fn max_cardinality(&self) -> usize {
        self.subsets.iter().map(|s| s.len()).max().unwrap_or(0)
    }
}

/// Assigns each constraint to its smallest containing subset (ties to the
/// lowest index) and splits the objective term-by-term the same way, with
/// constants going to subset 0.
fn assign_and_split(
    pop: &PopProblem,
    subsets: Vec<Vec<u32>>,
    provenance: Provenance,
) -> Result<SparsityPattern, SparsityError> {
    let contains =
        |subset: &[u32], vars: &[u32]| vars.iter().all(|v| subset.binary_search(v).is_ok());
    // subset indices ordered by (cardinality, index) so the first hit wins
    let mut by_size: Vec<usize> = (0..subsets.len()).collect();
    by_size.sort_by_key(|&p| (subsets[p].len(), p));

    let mut assignment = Vec::with_capacity(pop.constraints.len());
    for c in &pop.constraints {
        let vars = c.poly.support_vars();
        let p = by_size
            .iter()
            .copied()
            .find(|&p| contains(&subsets[p], &vars))
            .ok_or_else(|| SparsityError::ConstraintNotCovered { tag: c.tag.clone() })?;
        assignment.push(p);
    }

    let mut objective_split = vec![Polynomial::zero(pop.nvars()); subsets.len()];
    for (m, coeff) in pop.objective.terms() {
        let p = if m.is_one() {
            0
        } else {
            let vars: Vec<u32> = m.variables().collect();
            by_size
                .iter()
                .copied()
                .find(|&p| contains(&subsets[p], &vars))
                .ok_or_else(|| SparsityError::ObjectiveTermNotCovered {
                    term: m.to_string(),
                })?
        };
        objective_split[p].add_term(m.clone(), coeff);
    }

    Ok(SparsityPattern {
        subsets,
        assignment,
        objective_split,
        provenance,
    })
}

/// The per-bus balance-equation pattern: one subset per bus holding the bus,
/// its neighbors and its generators; split buses contribute their aggregate
/// variables instead of neighbors, plus one subset per neighbor group.
pub fn minimal_pattern(
    pop: &PopProblem,
    net: &Network,
    plan: &SplitPlan,
) -> Result<SparsityPattern, SparsityError> {
    let vmap = &pop.varmap;
    let mut subsets: Vec<Vec<u32>> = Vec::new();
    for i in 0..net.buses.len() {
        let mut s = vec![vmap.re_bus(i), vmap.im_bus(i)];
        if let Some(split) = plan.split_for(i) {
            for a in 0..split.groups.len() as u32 {
                s.push(vmap.re_split(i, a));
                s.push(vmap.im_split(i, a));
            }
        } else {
            for j in net.neighbors(i) {
                s.push(vmap.re_bus(j));
                s.push(vmap.im_bus(j));
            }
        }
        if !pop.voltage_only {
            for g in net.gens_at(i) {
                s.push(vmap.re_gen(g).expect("full model maps generators"));
                s.push(vmap.im_gen(g).expect("full model maps generators"));
            }
        }
        s.sort_unstable();
        subsets.push(s);
    }
    for split in &plan.splits {
        let i = split.bus;
        for (a, group) in split.groups.iter().enumerate() {
            let mut s = vec![
                vmap.re_bus(i),
                vmap.im_bus(i),
                vmap.re_split(i, a as u32),
                vmap.im_split(i, a as u32),
            ];
            for &j in group {
                s.push(vmap.re_bus(j));
                s.push(vmap.im_bus(j));
            }
            s.sort_unstable();
            subsets.push(s);
        }
    }
    assign_and_split(pop, subsets, Provenance::Minimal)
}

/// The correlative-sparsity clique pattern: per-constraint edges, greedy
/// fill-in chordal extension, maximal cliques as subsets.
pub fn clique_pattern(pop: &PopProblem) -> Result<SparsityPattern, SparsityError> {
    // The constraint-level edge rule guarantees each constraint's variables
    // form a clique, hence land inside some maximal clique; the literal
    // monomial rule does not (a variable pair can co-occur in a constraint
    // without sharing a monomial).
    let g = csp_graph(pop, EdgeRule::Constraint);
    let (chordal, order) = chordal_extend_greedy_fillin(&g);
    let cliques = maximal_cliques(&chordal, &order)?;
    assign_and_split(pop, cliques, Provenance::CliqueBased)
}

/// The one-subset pattern over all variables (dense relaxation).
pub fn dense_pattern(pop: &PopProblem) -> SparsityPattern {
    let all: Vec<u32> = (0..pop.nvars()).collect();
    assign_and_split(pop, vec![all], Provenance::Dense)
        .expect("every constraint fits the full variable set")
}

/// Outcome of the running-intersection test.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum RipCheck {
    /// An ordering satisfying the property (indices into the subset list).
    Pass { order: Vec<usize> },
    /// No ordering exists; this subset (in the tested ordering derived from
    /// a maximum-weight intersection tree) witnesses the failure.
    Fail { witness: usize },
}

impl RipCheck {
    pub fn passed(&self) -> bool {
        matches!(self, RipCheck::Pass { .. })
    }
}

/// Tests the running intersection property: some ordering has each subset's
/// intersection with the union of its predecessors contained in a single
/// predecessor.
///
/// A maximum-weight spanning tree of the intersection-size graph is a
/// junction tree exactly when one exists, and a parent-first traversal of a
/// junction tree satisfies the property; so the tree is built (Prim, ties to
/// the lower index) and the derived order verified directly.
pub fn rip_check(subsets: &[Vec<u32>]) -> RipCheck {
    let p = subsets.len();
    if p <= 1 {
        return RipCheck::Pass {
            order: (0..p).collect(),
        };
    }
    let weight = |a: usize, b: usize| {
        let (sa, sb) = (&subsets[a], &subsets[b]);
        sa.iter().filter(|x| sb.binary_search(x).is_ok()).count()
    };

    // Prim over the complete weighted graph, seeded at subset 0; zero-weight
    // links join disconnected components deterministically.
    let mut in_tree = vec![false; p];
    let mut parent = vec![usize::MAX; p];
    let mut best_w = vec![usize::MAX; p];
    let mut order = Vec::with_capacity(p);
    in_tree[0] = true;
    order.push(0);
    for q in 1..p {
        best_w[q] = weight(0, q);
        parent[q] = 0;
    }
    for _ in 1..p {
        let mut pick = usize::MAX;
        for q in 0..p {
            if !in_tree[q] && (pick == usize::MAX || best_w[q] > best_w[pick]) {
                pick = q;
            }
        }
        in_tree[pick] = true;
        order.push(pick);
        for q in 0..p {
            if !in_tree[q] {
                let w = weight(pick, q);
                if w > best_w[q] {
                    best_w[q] = w;
                    parent[q] = pick;
                }
            }
        }
    }

    // verify: intersection with the union of predecessors ⊆ parent subset
    let mut seen: BTreeSet<u32> = subsets[order[0]].iter().copied().collect();
    for &q in order.iter().skip(1) {
        let par = &subsets[parent[q]];
        for x in &subsets[q] {
            if seen.contains(x) && par.binary_search(x).is_err() {
                return RipCheck::Fail { witness: q };
            }
        }
        seen.extend(subsets[q].iter().copied());
    }
    RipCheck::Pass { order }
}

/// Size summary of a pattern at relaxation order `r`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PatternStats {
    pub pmax: usize,
    /// Largest subset cardinality.
    pub m: usize,
    /// (cardinality, count) pairs, ascending.
    pub histogram: Vec<(usize, usize)>,
    /// binom(m + r, r) — the largest moment-matrix size this pattern yields.
    pub largest_block: u64,
}

impl PatternStats {
    /// `cardinality,count` CSV with header.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("cardinality,count\n");
        for (card, count) in &self.histogram {
            out.push_str(&format!("{card},{count}\n"));
        }
        out
    }
}

/// Exact subset counts and the induced largest block size.
pub fn pattern_stats(pattern: &SparsityPattern, r: u32) -> PatternStats {
    let mut hist: Vec<(usize, usize)> = Vec::new();
    let mut cards: Vec<usize> = pattern.subsets.iter().map(|s| s.len()).collect();
    cards.sort_unstable();
    for card in cards {
        match hist.last_mut() {
            Some((c, n)) if *c == card => *n += 1,
            _ => hist.push((card, 1)),
        }
    }
    let m = pattern.max_cardinality();
    PatternStats {
        pmax: pattern.pmax(),
        m,
        histogram: hist,
        largest_block: binomial((m + r as usize) as u64, r as u64),
    }
}

/// Checks the pattern's structural invariants against its POP: full variable
/// coverage, assigned constraints inside their subsets, and an objective
/// decomposition that reproduces the objective exactly.
pub fn validate(pattern: &SparsityPattern, pop: &PopProblem) -> Result<(), SparsityError> {
    let mut covered = vec![false; pop.nvars() as usize];
    for s in &pattern.subsets {
        for &v in s {
            covered[v as usize] = true;
        }
    }
    if let Some(v) = covered.iter().position(|c| !c) {
        return Err(SparsityError::VarNotCovered { var: v as u32 });
    }
    for (k, c) in pop.constraints.iter().enumerate() {
        let p = pattern.assignment[k];
        for v in c.poly.support_vars() {
            if pattern.subsets[p].binary_search(&v).is_err() {
                return Err(SparsityError::AssignmentOutsideSubset {
                    tag: c.tag.clone(),
                    subset: p,
                    var: v,
                });
            }
        }
    }
    let mut total = Polynomial::zero(pop.nvars());
    for (p, part) in pattern.objective_split.iter().enumerate() {
        for (m, coeff) in part.terms() {
            if !m.is_one() {
                for v in m.variables() {
                    if pattern.subsets[p].binary_search(&v).is_err() {
                        return Err(SparsityError::ObjectiveMismatch);
                    }
                }
            }
            total.add_term(m.clone(), coeff);
        }
    }
    // term-by-term partition ⇒ bit-exact reconstruction
    if total != pop.objective {
        return Err(SparsityError::ObjectiveMismatch);
    }
    Ok(())
}

/// Text listing of each subset's variables (1-based) and assigned constraint
/// tags, for diffing and inspection.
pub fn pattern_to_text(pattern: &SparsityPattern, pop: &PopProblem) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "pattern {} subsets {} maxcard {}",
        pattern.provenance,
        pattern.pmax(),
        pattern.max_cardinality()
    );
    for (p, s) in pattern.subsets.iter().enumerate() {
        let vars: Vec<String> = s.iter().map(|v| format!("x{}", v + 1)).collect();
        let _ = writeln!(out, "subset {} card {} vars {}", p, s.len(), vars.join(" "));
        for (k, c) in pop.constraints.iter().enumerate() {
            if pattern.assignment[k] == p {
                let kind = match c.kind {
                    ConstraintKind::Equality => "eq",
                    ConstraintKind::Inequality => "ge",
                };
                let _ = writeln!(out, "  {kind} {}", c.tag);
            }
        }
        if !pattern.objective_split[p].is_zero() {
            let _ = writeln!(
                out,
                "  objective nterms {}",
                pattern.objective_split[p].term_count()
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acopf::{build_pop, BuildOptions, Constraint, ConstraintKind, PopProblem};
    use crate::netio::parse_matpower_str;
    use crate::poly::Monomial;

    fn generic_pop(nvars: u32, polys: Vec<Polynomial>) -> PopProblem {
        let constraints = polys
            .into_iter()
            .enumerate()
            .map(|(k, poly)| Constraint {
                poly,
                kind: ConstraintKind::Inequality,
                tag: format!("c{k}"),
            })
            .collect();
        PopProblem::generic("toy", nvars, Polynomial::zero(nvars), constraints, vec![])
    }

    fn ring4() -> crate::netio::Network {
        parse_matpower_str(
            "function mpc = ring\nmpc.baseMVA = 100;\nmpc.bus = [\n\
             1 3 0 0 0 0 1 1 0 138 1 1.1 0.9;\n\
             2 1 10 2 0 0 1 1 0 138 1 1.1 0.9;\n\
             3 1 10 2 0 0 1 1 0 138 1 1.1 0.9;\n\
             4 1 10 2 0 0 1 1 0 138 1 1.1 0.9;\n\
             ];\nmpc.gen = [\n1 0 0 50 -50 1 100 1 100 0;\n];\nmpc.branch = [\n\
             1 2 0.01 0.1 0 0 0 0 0 0 1 0 0;\n\
             2 3 0.01 0.1 0 0 0 0 0 0 1 0 0;\n\
             3 4 0.01 0.1 0 0 0 0 0 0 1 0 0;\n\
             4 1 0.01 0.1 0 0 0 0 0 0 1 0 0;\n\
             ];\nmpc.gencost = [\n2 0 0 3 0.1 5 0;\n];\n",
            "ring",
        )
        .unwrap()
    }

    fn path3() -> crate::netio::Network {
        parse_matpower_str(
            "function mpc = path\nmpc.baseMVA = 100;\nmpc.bus = [\n\
             1 3 0 0 0 0 1 1 0 138 1 1.1 0.9;\n\
             2 1 10 2 0 0 1 1 0 138 1 1.1 0.9;\n\
             3 1 10 2 0 0 1 1 0 138 1 1.1 0.9;\n\
             ];\nmpc.gen = [\n1 0 0 50 -50 1 100 1 100 0;\n];\nmpc.branch = [\n\
             1 2 0.01 0.1 0 0 0 0 0 0 1 0 0;\n\
             2 3 0.01 0.1 0 0 0 0 0 0 1 0 0;\n\
             ];\nmpc.gencost = [\n2 0 0 3 0.1 5 0;\n];\n",
            "path",
        )
        .unwrap()
    }

    /// Brute-force RIP over all subset orderings.
    fn rip_brute_force(subsets: &[Vec<u32>]) -> bool {
        fn permute(k: usize, idx: &mut Vec<usize>, subsets: &[Vec<u32>], found: &mut bool) {
            if *found {
                return;
            }
            if k == idx.len() {
                let mut seen: BTreeSet<u32> = BTreeSet::new();
                let mut ok = true;
                for (pos, &p) in idx.iter().enumerate() {
                    if pos > 0 {
                        let inter: Vec<u32> = subsets[p]
                            .iter()
                            .copied()
                            .filter(|x| seen.contains(x))
                            .collect();
                        let nested = idx[..pos]
                            .iter()
                            .any(|&q| inter.iter().all(|x| subsets[q].binary_search(x).is_ok()));
                        if !nested {
                            ok = false;
                            break;
                        }
                    }
                    seen.extend(subsets[p].iter().copied());
                }
                if ok {
                    *found = true;
                }
                return;
            }
            for i in k..idx.len() {
                idx.swap(k, i);
                permute(k + 1, idx, subsets, found);
                idx.swap(k, i);
            }
        }
        let mut idx: Vec<usize> = (0..subsets.len()).collect();
        let mut found = false;
        permute(0, &mut idx, subsets, &mut found);
        found
    }

    #[test]
    fn edge_rule_examples() {
        // x1·x2 ≥ 0 → one edge under both rules
        let mut p = Polynomial::zero(2);
        p.add_term(Monomial::var(0).mul(&Monomial::var(1)), 1.0);
        let pop = generic_pop(2, vec![p]);
        let g = csp_graph(&pop, EdgeRule::Monomial);
        assert_eq!(g.edges(), vec![(0, 1)]);

        // x1 + x2 ≥ 0 → no edge under the literal rule, one edge per-constraint
        let mut p = Polynomial::zero(2);
        p.add_term(Monomial::var(0), 1.0);
        p.add_term(Monomial::var(1), 1.0);
        let pop = generic_pop(2, vec![p]);
        assert!(csp_graph(&pop, EdgeRule::Monomial).edges().is_empty());
        assert_eq!(csp_graph(&pop, EdgeRule::Constraint).edges(), vec![(0, 1)]);
    }

    #[test]
    fn two_bus_voltages_fully_linked() {
        let net = path3();
        let (pop, _) = build_pop(&net, &BuildOptions::default()).unwrap();
        let g = csp_graph(&pop, EdgeRule::Monomial);
        // balance monomials pairwise connect Re/Im of adjacent buses
        let vm = &pop.varmap;
        for (i, j) in [(0usize, 1usize), (1, 2)] {
            assert!(g.has_edge(vm.re_bus(i), vm.re_bus(j)));
            assert!(g.has_edge(vm.im_bus(i), vm.im_bus(j)));
            assert!(g.has_edge(vm.re_bus(i), vm.im_bus(j)));
            assert!(g.has_edge(vm.im_bus(i), vm.re_bus(j)));
        }
        // non-adjacent buses 1 and 3 share no monomial
        assert!(!g.has_edge(vm.re_bus(0), vm.re_bus(2)));
    }

    #[test]
    fn chordal_extension_examples() {
        // 4-cycle: eliminating vertex 0 first adds chord (1, 3)
        let mut g = Graph::new(4);
        for (u, v) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
            g.add_edge(u, v);
        }
        let (c, order) = chordal_extend_greedy_fillin(&g);
        assert_eq!(order[0], 0);
        assert!(c.has_edge(1, 3));
        assert!(!c.has_edge(0, 2));
        assert_eq!(c.n_edges(), 5);
        assert!(is_perfect_elimination_order(&c, &order));

        // triangle and trees unchanged
        let mut tri = Graph::new(3);
        for (u, v) in [(0, 1), (1, 2), (0, 2)] {
            tri.add_edge(u, v);
        }
        let (c, order) = chordal_extend_greedy_fillin(&tri);
        assert_eq!(c.n_edges(), 3);
        assert!(is_perfect_elimination_order(&c, &order));

        let mut tree = Graph::new(5);
        for (u, v) in [(0, 1), (0, 2), (2, 3), (2, 4)] {
            tree.add_edge(u, v);
        }
        let (c, order) = chordal_extend_greedy_fillin(&tree);
        assert_eq!(c.n_edges(), 4);
        assert!(is_perfect_elimination_order(&c, &order));
    }

    #[test]
    fn maximal_cliques_examples() {
        let mut path = Graph::new(3);
        path.add_edge(0, 1);
        path.add_edge(1, 2);
        let (c, order) = chordal_extend_greedy_fillin(&path);
        let cliques = maximal_cliques(&c, &order).unwrap();
        assert_eq!(cliques, vec![vec![0, 1], vec![1, 2]]);

        let mut tri = Graph::new(3);
        for (u, v) in [(0, 1), (1, 2), (0, 2)] {
            tri.add_edge(u, v);
        }
        let (c, order) = chordal_extend_greedy_fillin(&tri);
        assert_eq!(maximal_cliques(&c, &order).unwrap(), vec![vec![0, 1, 2]]);

        // non-chordal input with a fabricated order → contract violation
        let mut cycle = Graph::new(4);
        for (u, v) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
            cycle.add_edge(u, v);
        }
        assert!(matches!(
            maximal_cliques(&cycle, &[0, 1, 2, 3]),
            Err(SparsityError::NotChordal)
        ));
    }

    #[test]
    fn cliques_cover_all_input_edges() {
        for net in [path3(), ring4()] {
            let (pop, _) = build_pop(&net, &BuildOptions::default()).unwrap();
            let g = csp_graph(&pop, EdgeRule::Constraint);
            let (c, order) = chordal_extend_greedy_fillin(&g);
            let cliques = maximal_cliques(&c, &order).unwrap();
            for (u, v) in g.edges() {
                assert!(
                    cliques
                        .iter()
                        .any(|k| k.binary_search(&u).is_ok() && k.binary_search(&v).is_ok()),
                    "edge ({u},{v}) not inside any clique"
                );
            }
        }
    }

    #[test]
    fn minimal_pattern_single_bus() {
        let net = parse_matpower_str(
            "function mpc = one\nmpc.baseMVA = 100;\nmpc.bus = [\n\
             1 3 100 0 0 0 1 1 0 138 1 1.1 0.9;\n\
             ];\nmpc.gen = [\n1 0 0 100 -100 1 100 1 300 0;\n];\nmpc.branch = [\n];\n\
             mpc.gencost = [\n2 0 0 3 0 10 0;\n];\n",
            "one",
        )
        .unwrap();
        let (pop, plan) = build_pop(&net, &BuildOptions::default()).unwrap();
        let pat = minimal_pattern(&pop, &net, &plan).unwrap();
        assert_eq!(pat.subsets, vec![vec![0, 1, 2, 3]]);
        validate(&pat, &pop).unwrap();
    }

    #[test]
    fn minimal_pattern_counts_and_assignment() {
        let net = path3();
        let (pop, plan) = build_pop(&net, &BuildOptions::default()).unwrap();
        let pat = minimal_pattern(&pop, &net, &plan).unwrap();
        assert_eq!(pat.pmax(), 3);
        // bus 2 sees both others: 3 buses + 0 gens... plus none; bus 1 has the gen
        let vm = &pop.varmap;
        assert_eq!(pat.subsets[1].len(), 6); // {v1, v2, v3} Re+Im
        assert!(pat.subsets[0].contains(&vm.re_gen(0).unwrap()));
        validate(&pat, &pop).unwrap();
        // objective terms live on the generator's bus subset
        assert!(!pat.objective_split[0].is_zero());
        assert!(pat.objective_split[1].is_zero());
        // every voltage bound sits in a smallest containing subset
        for (k, c) in pop.constraints.iter().enumerate() {
            let p = pat.assignment[k];
            let card = pat.subsets[p].len();
            for (q, s) in pat.subsets.iter().enumerate() {
                if c.poly
                    .support_vars()
                    .iter()
                    .all(|v| s.binary_search(v).is_ok())
                {
                    assert!(
                        card < s.len() || (card == s.len() && p <= q),
                        "{} not in smallest subset",
                        c.tag
                    );
                }
            }
        }
    }

    #[test]
    fn minimal_pattern_with_split_bus() {
        let mut text = String::from("function mpc = star\nmpc.baseMVA = 100;\nmpc.bus = [\n");
        text.push_str("1 3 0 0 0 0 1 1 0 138 1 1.1 0.9;\n");
        for k in 0..7 {
            text.push_str(&format!("{} 1 10 3 0 0 1 1 0 138 1 1.1 0.9;\n", k + 2));
        }
        text.push_str("];\nmpc.gen = [\n1 0 0 500 -500 1 100 1 2000 0;\n];\nmpc.branch = [\n");
        for k in 0..7 {
            text.push_str(&format!("1 {} 0.01 0.1 0.02 90 0 0 0 0 1 0 0;\n", k + 2));
        }
        text.push_str("];\nmpc.gencost = [\n2 0 0 3 0.1 5 0;\n];\n");
        let net = parse_matpower_str(&text, "star").unwrap();
        let (pop, plan) = build_pop(
            &net,
            &BuildOptions {
                voltage_only: false,
                split_threshold: Some(12),
            },
        )
        .unwrap();
        let pat = minimal_pattern(&pop, &net, &plan).unwrap();
        // 8 bus subsets + 2 group subsets
        assert_eq!(pat.pmax(), 10);
        assert!(pat.max_cardinality() <= 12);
        // center subset: bus + gen + two aggregates = 2(1+1+2) = 8
        assert_eq!(pat.subsets[0].len(), 8);
        // group subsets: 2(1 + 4 + 1) and 2(1 + 3 + 1)
        assert_eq!(pat.subsets[8].len(), 12);
        assert_eq!(pat.subsets[9].len(), 10);
        validate(&pat, &pop).unwrap();
    }

    #[test]
    fn dense_pattern_is_single_subset() {
        let net = path3();
        let (pop, _) = build_pop(&net, &BuildOptions::default()).unwrap();
        let pat = dense_pattern(&pop);
        assert_eq!(pat.pmax(), 1);
        assert_eq!(pat.subsets[0].len(), pop.nvars() as usize);
        validate(&pat, &pop).unwrap();
        let stats = pattern_stats(&pat, 2);
        assert_eq!(stats.m, pop.nvars() as usize);
    }

    #[test]
    fn clique_pattern_validates_and_passes_rip() {
        for net in [path3(), ring4()] {
            let (pop, _) = build_pop(&net, &BuildOptions::default()).unwrap();
            let pat = clique_pattern(&pop).unwrap();
            validate(&pat, &pop).unwrap();
            assert!(rip_check(&pat.subsets).passed(), "{}", net.name);
            assert!(rip_brute_force(&pat.subsets));
        }
    }

    #[test]
    fn ring_minimal_pattern_fails_rip() {
        let net = ring4();
        let (pop, plan) = build_pop(&net, &BuildOptions::default()).unwrap();
        let pat = minimal_pattern(&pop, &net, &plan).unwrap();
        validate(&pat, &pop).unwrap();
        let check = rip_check(&pat.subsets);
        assert!(!check.passed());
        assert!(!rip_brute_force(&pat.subsets));
    }

    #[test]
    fn path_minimal_pattern_passes_rip() {
        let net = path3();
        let (pop, plan) = build_pop(&net, &BuildOptions::default()).unwrap();
        let pat = minimal_pattern(&pop, &net, &plan).unwrap();
        let check = rip_check(&pat.subsets);
        assert!(check.passed());
        assert!(rip_brute_force(&pat.subsets));
    }

    #[test]
    fn rip_matches_brute_force_on_hand_families() {
        let families: Vec<Vec<Vec<u32>>> = vec![
            vec![vec![1, 2], vec![2, 3], vec![3, 4]], // chain: pass
            vec![vec![1, 2], vec![2, 3], vec![1, 3]], // triangle of pairs: fail
            vec![vec![1, 2, 3]],                      // single: pass
            vec![vec![1, 2], vec![3, 4]],             // disjoint: pass
            vec![vec![1, 2, 3], vec![2, 3, 4], vec![3, 4, 5], vec![4, 5, 1]], // cyclic: fail
        ];
        for subsets in families {
            assert_eq!(
                rip_check(&subsets).passed(),
                rip_brute_force(&subsets),
                "{subsets:?}"
            );
        }
    }

    #[test]
    fn stats_and_histogram() {
        let net = path3();
        let (pop, plan) = build_pop(&net, &BuildOptions::default()).unwrap();
        let pat = minimal_pattern(&pop, &net, &plan).unwrap();
        let stats = pattern_stats(&pat, 2);
        assert_eq!(stats.pmax, 3);
        assert_eq!(stats.m, 6);
        assert_eq!(stats.largest_block, 28); // binom(8, 2)
        assert_eq!(stats.histogram_csv(), "cardinality,count\n4,1\n6,2\n");
        let text = pattern_to_text(&pat, &pop);
        assert!(text.starts_with("pattern minimal subsets 3 maxcard 6\n"));
        assert!(text.contains("balance_re@bus2"));
    }
}
