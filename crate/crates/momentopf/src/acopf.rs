//! AC optimal power flow as a real polynomial optimization problem.
//!
//! Voltage phasors are expanded in rectangular coordinates, generator
//! injections stay as box-bounded variables, and branch flows are substituted
//! away so they never become problem variables. The balance equation at a bus
//! therefore couples that bus, its neighbors and its generators — the variable
//! group that the minimal sparsity pattern later turns into one subset per
//! bus.
//!
//! Buses with many neighbors can be *split*: the incident flows are
//! partitioned into groups, each group summed into an auxiliary complex
//! variable ℓ with a defining equality, and the balance rewritten over the
//! ℓ's. Group count and size come from the closed-form solution of the
//! integer program minimizing the number of groups subject to a subset
//! cardinality cap `Imax` (see [`closed_form_split`]).
//!
//! The voltage-only simplification eliminates generator variables by solving
//! each generator bus's balance for the injection, turning generator boxes
//! into degree-2 voltage constraints; flow and angle limits are dropped in
//! this mode.

use std::collections::HashMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::netio::{BusType, Network};
use crate::poly::{Monomial, Polynomial};

/// Errors from POP construction, split planning, or scaling.
#[derive(Debug, Error)]
pub enum AcopfError {
    #[error("voltage-only model requires at most one generator per bus, bus {bus} has {count}")]
    VoltageOnlyMultiGen { bus: i64, count: usize },
    #[error("voltage-only model requires linear generator costs, generator {gen} has quadratic coefficient {c2}")]
    VoltageOnlyQuadraticCost { gen: usize, c2: f64 },
    #[error("subset cardinality cap Imax must be at least 6, got {imax}")]
    ImaxTooSmall { imax: u32 },
    #[error("cannot scale: variable {name} has no finite box")]
    UnboundedVariable { name: String },
    #[error("problem is already scaled")]
    AlreadyScaled,
}

/// What a POP variable position stands for.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Entity {
    /// Complex voltage of a bus (index into `Network::buses`).
    BusV(usize),
    /// Complex injection of a generator (index into `Network::generators`).
    GenS(usize),
    /// Aggregated flow of one neighbor group of a split bus.
    SplitVar { bus: usize, group: u32 },
}

/// Bijection between network entities and POP variable indices.
///
/// Each entity occupies one *position* `p`; its real part is variable `p` and
/// its imaginary part is variable `half + p`, so indices `0..nvars` split into
/// a real half followed by an imaginary half. Positions are assigned in file
/// order: buses, then generators (absent in the voltage-only model), then
/// split variables grouped by bus.
#[derive(Clone, PartialEq, Debug)]
pub struct VariableMap {
    entities: Vec<Entity>,
    half: u32,
    n_buses: usize,
    with_gens: bool,
    split_pos: HashMap<(usize, u32), u32>,
    /// Set for variable spaces without network meaning (hand-built POPs).
    generic_nvars: Option<u32>,
}

impl VariableMap {
    /// A bare variable space of `nvars` real variables with no network
    /// entities behind it, for problems built directly from polynomials.
    pub fn generic(nvars: u32) -> Self {
        VariableMap {
            entities: Vec::new(),
            half: 0,
            n_buses: 0,
            with_gens: false,
            split_pos: HashMap::new(),
            generic_nvars: Some(nvars),
        }
    }

    fn build(net: &Network, plan: &SplitPlan, with_gens: bool) -> Self {
        let mut entities: Vec<Entity> = (0..net.buses.len()).map(Entity::BusV).collect();
        if with_gens {
            entities.extend((0..net.generators.len()).map(Entity::GenS));
        }
        let mut split_pos = HashMap::new();
        for split in &plan.splits {
            for a in 0..split.groups.len() as u32 {
                split_pos.insert((split.bus, a), entities.len() as u32);
                entities.push(Entity::SplitVar {
                    bus: split.bus,
                    group: a,
                });
            }
        }
        let half = entities.len() as u32;
        VariableMap {
            entities,
            half,
            n_buses: net.buses.len(),
            with_gens,
            split_pos,
            generic_nvars: None,
        }
    }

    /// Total number of real variables (`2 × positions` for network-backed
    /// maps).
    pub fn nvars(&self) -> u32 {
        self.generic_nvars.unwrap_or(2 * self.half)
    }

    /// Number of positions; also the offset of the imaginary half.
    pub fn half(&self) -> u32 {
        self.half
    }

    /// Real-part variable of a bus voltage.
    pub fn re_bus(&self, bus: usize) -> u32 {
        bus as u32
    }

    /// Imaginary-part variable of a bus voltage.
    pub fn im_bus(&self, bus: usize) -> u32 {
        self.half + bus as u32
    }

    /// Real-part (active power) variable of a generator, if generators are
    /// mapped (they are not in the voltage-only model).
    pub fn re_gen(&self, gen: usize) -> Option<u32> {
        self.with_gens.then(|| (self.n_buses + gen) as u32)
    }

    /// Imaginary-part (reactive power) variable of a generator.
    pub fn im_gen(&self, gen: usize) -> Option<u32> {
        self.with_gens
            .then(|| self.half + (self.n_buses + gen) as u32)
    }

    /// Real-part variable of a split variable.
    pub fn re_split(&self, bus: usize, group: u32) -> u32 {
        self.split_pos[&(bus, group)]
    }

    /// Imaginary-part variable of a split variable.
    pub fn im_split(&self, bus: usize, group: u32) -> u32 {
        self.half + self.split_pos[&(bus, group)]
    }

    /// Entity behind a variable index, plus whether it is the real part.
    /// Panics for generic variable spaces, which have no entities.
    pub fn entity_of(&self, var: u32) -> (Entity, bool) {
        assert!(
            self.generic_nvars.is_none(),
            "generic variable space has no network entities"
        );
        let re = var < self.half;
        let pos = if re { var } else { var - self.half };
        (self.entities[pos as usize], re)
    }

    /// Entities in position order.
    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    /// Human-readable name of a variable, e.g. `Re v[bus 14]`.
    pub fn describe(&self, var: u32, net: &Network) -> String {
        if self.generic_nvars.is_some() {
            return format!("x{}", var + 1);
        }
        let (entity, re) = self.entity_of(var);
        let part = if re { "Re" } else { "Im" };
        match entity {
            Entity::BusV(i) => format!("{part} v[bus {}]", net.buses[i].id),
            Entity::GenS(g) => {
                format!(
                    "{part} s[gen {} at bus {}]",
                    g, net.buses[net.generators[g].bus].id
                )
            }
            Entity::SplitVar { bus, group } => {
                format!("{part} l[bus {} group {}]", net.buses[bus].id, group)
            }
        }
    }
}

/// Neighbor partition of one split bus.
#[derive(Clone, PartialEq, Debug)]
pub struct BusSplit {
    /// Bus index into `Network::buses`.
    pub bus: usize,
    /// Planned group-size cap n̄_a.
    pub group_cap: u32,
    /// Neighbor bus indices per group; round-robin in ascending bus id.
    pub groups: Vec<Vec<usize>>,
}

/// Where and how balance equations are split.
#[derive(Clone, PartialEq, Debug, Default)]
pub struct SplitPlan {
    /// Splits ordered by bus index.
    pub splits: Vec<BusSplit>,
    /// Buses over the cardinality cap that the reduction condition
    /// `Imax ≥ 4 + 2|N|/(|N|−1)` leaves unsplit.
    pub unreduced: Vec<usize>,
    /// Split (or over-cap) buses whose balance subset still exceeds the cap
    /// because of generator variables alone; generator-side partitioning is
    /// not performed.
    pub gen_heavy: Vec<usize>,
}

impl SplitPlan {
    /// Plan with no splits.
    pub fn none() -> Self {
        SplitPlan::default()
    }

    /// Number of real POP variables the plan adds (two per group).
    pub fn added_variables(&self) -> u32 {
        2 * self
            .splits
            .iter()
            .map(|s| s.groups.len() as u32)
            .sum::<u32>()
    }

    /// Split at a given bus, if any.
    pub fn split_for(&self, bus: usize) -> Option<&BusSplit> {
        self.splits.iter().find(|s| s.bus == bus)
    }
}

/// Closed-form solution of the group-count integer program
/// `min n_A  s.t.  2(n̄_a + 2) ≤ Imax,  n_A·n̄_a ≥ n`:
/// `n_A = ⌈n / (⌊Imax/2⌋ − 2)⌉`, `n̄_a = ⌈n / n_A⌉`. Requires `Imax ≥ 6`
/// and `n ≥ 1`.
pub fn closed_form_split(n_neighbors: u32, imax: u32) -> (u32, u32) {
    debug_assert!(imax >= 6 && n_neighbors >= 1);
    let cap = imax / 2 - 2;
    let n_a = n_neighbors.div_ceil(cap);
    let n_bar = n_neighbors.div_ceil(n_a);
    (n_a, n_bar)
}

/// Plans balance-equation splitting for the full model: a bus is split when
/// its minimal-subset cardinality `2(1 + |N(i)| + |G(i)|)` exceeds `imax` and
/// the reduction condition holds.
pub fn plan_split(net: &Network, imax: u32) -> Result<SplitPlan, AcopfError> {
    plan_split_model(net, imax, false)
}

fn plan_split_model(net: &Network, imax: u32, voltage_only: bool) -> Result<SplitPlan, AcopfError> {
    if imax < 6 {
        return Err(AcopfError::ImaxTooSmall { imax });
    }
    let mut plan = SplitPlan::none();
    for i in 0..net.buses.len() {
        let neighbors = net.neighbors(i);
        let n = neighbors.len() as u32;
        let g = if voltage_only {
            0
        } else {
            net.gens_at(i).len() as u32
        };
        let card = 2 * (1 + n + g);
        if card <= imax {
            continue;
        }
        // splitting only reduces the neighbor contribution
        let reducible = n >= 2 && (imax as f64) >= 4.0 + 2.0 * n as f64 / (n as f64 - 1.0);
        if !reducible {
            plan.unreduced.push(i);
            if 2 * (1 + g + n.min(1)) > imax {
                plan.gen_heavy.push(i);
            }
            continue;
        }
        let (n_a, n_bar) = closed_form_split(n, imax);
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_a as usize];
        for (pos, &j) in neighbors.iter().enumerate() {
            groups[pos % n_a as usize].push(j);
        }
        debug_assert!(groups.iter().all(|grp| grp.len() as u32 <= n_bar));
        if 2 * (1 + g + n_a) > imax {
            plan.gen_heavy.push(i);
        }
        plan.splits.push(BusSplit {
            bus: i,
            group_cap: n_bar,
            groups,
        });
    }
    Ok(plan)
}

/// Constraint sense: `f = 0` or `f ≥ 0`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ConstraintKind {
    Equality,
    Inequality,
}

/// One polynomial constraint with a stable provenance tag such as
/// `balance_re@bus9` or `flow@branch12:to`.
#[derive(Clone, PartialEq, Debug)]
pub struct Constraint {
    pub poly: Polynomial,
    pub kind: ConstraintKind,
    pub tag: String,
}

/// Per-variable affine maps and per-polynomial divisors applied by
/// [`scale`], kept so points and bounds can be mapped back exactly.
#[derive(Clone, PartialEq, Debug)]
pub struct ScalingRecord {
    /// `x_n = a_n·x̃_n + b_n` recovers the original variable from the scaled
    /// one.
    pub var_affine: Vec<(f64, f64)>,
    /// Each constraint was divided by this (positive) value.
    pub constraint_divisors: Vec<f64>,
    /// The objective was divided by this (positive) value.
    pub objective_divisor: f64,
}

impl ScalingRecord {
    fn identity(nvars: u32, kmax: usize) -> Self {
        ScalingRecord {
            var_affine: vec![(1.0, 0.0); nvars as usize],
            constraint_divisors: vec![1.0; kmax],
            objective_divisor: 1.0,
        }
    }

    /// True when no scaling has been applied.
    pub fn is_identity(&self) -> bool {
        self.objective_divisor == 1.0
            && self.var_affine.iter().all(|&(a, b)| a == 1.0 && b == 0.0)
            && self.constraint_divisors.iter().all(|&d| d == 1.0)
    }

    /// Maps a scaled point back to original units.
    pub fn unscale_point(&self, xt: &[f64]) -> Vec<f64> {
        xt.iter()
            .zip(&self.var_affine)
            .map(|(&v, &(a, b))| a * v + b)
            .collect()
    }

    /// Maps an original-units point into the scaled coordinates.
    pub fn scale_point(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.var_affine)
            .map(|(&v, &(a, b))| (v - b) / a)
            .collect()
    }

    /// Converts an objective value of the scaled problem back to original
    /// cost units.
    pub fn unscale_objective(&self, v: f64) -> f64 {
        v * self.objective_divisor
    }
}

/// A polynomial optimization problem `min f0(x) s.t. f_k(x) = 0 or ≥ 0`.
#[derive(Clone, PartialEq, Debug)]
pub struct PopProblem {
    pub name: String,
    pub objective: Polynomial,
    pub constraints: Vec<Constraint>,
    pub varmap: VariableMap,
    pub scaling: ScalingRecord,
    /// Per-variable box used for scaling (valid bounds on any feasible
    /// point, not additional constraints).
    pub var_bounds: Vec<(f64, f64)>,
    pub voltage_only: bool,
}

impl PopProblem {
    /// A problem over a bare variable space, for direct polynomial input
    /// (toy hierarchies, tests). `var_bounds` may be empty when scaling is
    /// never applied.
    pub fn generic(
        name: &str,
        nvars: u32,
        objective: Polynomial,
        constraints: Vec<Constraint>,
        var_bounds: Vec<(f64, f64)>,
    ) -> Self {
        let kmax = constraints.len();
        let bounds = if var_bounds.is_empty() {
            vec![(f64::NEG_INFINITY, f64::INFINITY); nvars as usize]
        } else {
            var_bounds
        };
        PopProblem {
            name: name.to_string(),
            objective,
            constraints,
            varmap: VariableMap::generic(nvars),
            scaling: ScalingRecord::identity(nvars, kmax),
            var_bounds: bounds,
            voltage_only: false,
        }
    }

    /// Number of constraints.
    pub fn kmax(&self) -> usize {
        self.constraints.len()
    }

    /// Number of real variables.
    pub fn nvars(&self) -> u32 {
        self.varmap.nvars()
    }

    /// Largest constraint/objective degree.
    pub fn max_degree(&self) -> u32 {
        self.constraints
            .iter()
            .map(|c| c.poly.degree())
            .chain(std::iter::once(self.objective.degree()))
            .max()
            .unwrap_or(0)
    }

    /// Minimal relaxation order `r0 = max_k ⌈deg f_k / 2⌉`.
    pub fn r0(&self) -> u32 {
        self.max_degree().div_ceil(2).max(1)
    }

    /// Versioned text dump (variables, objective, constraints as term
    /// lists) for golden tests and cross-implementation diffing.
    pub fn to_text(&self, net: &Network) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "popv1 {}", self.name);
        let _ = writeln!(
            out,
            "nvars {} voltage_only {}",
            self.nvars(),
            self.voltage_only
        );
        for n in 0..self.nvars() {
            let (lb, ub) = self.var_bounds[n as usize];
            let _ = writeln!(
                out,
                "var x{} box [{}, {}] {}",
                n + 1,
                lb,
                ub,
                self.varmap.describe(n, net)
            );
        }
        let mut dump = |head: String, poly: &Polynomial| {
            let _ = writeln!(out, "{head} nterms {}", poly.term_count());
            for (m, c) in poly.terms() {
                let _ = writeln!(out, "  {c} {m}");
            }
        };
        dump("objective".to_string(), &self.objective);
        for (k, c) in self.constraints.iter().enumerate() {
            let kind = match c.kind {
                ConstraintKind::Equality => "eq",
                ConstraintKind::Inequality => "ge",
            };
            dump(format!("constraint {k} {kind} {}", c.tag), &c.poly);
        }
        out.push_str("end popv1\n");
        out
    }
}

/// Model choices for [`build_pop`].
#[derive(Clone, Copy, Default, Debug)]
pub struct BuildOptions {
    /// Eliminate generator variables (requires ≤ 1 generator per bus and
    /// linear costs); drops flow and angle limits.
    pub voltage_only: bool,
    /// Subset cardinality cap triggering balance splitting; `None` disables
    /// splitting.
    pub split_threshold: Option<u32>,
}

/// Complex coefficients of one branch-flow polynomial
/// `s = c_self·|v_local|² − c_mut·(v_local v_other*)` where for the to side
/// the mutual term uses `v_from* v_to = conj(v_from v_to*)`.
struct FlowCoeffs {
    from_self: Complex64,
    from_mut: Complex64,
    to_self: Complex64,
    to_mut: Complex64,
}

fn flow_coeffs(net: &Network, b: usize) -> FlowCoeffs {
    let br = &net.branches[b];
    let y = br.series_admittance();
    let tau = br.tau();
    FlowCoeffs {
        from_self: (y + br.charging_from()).conj() / tau.norm_sqr(),
        from_mut: y.conj() / tau,
        to_self: (y + br.charging_to()).conj(),
        to_mut: y.conj() / tau.conj(),
    }
}

/// Helper bundling network, varmap and cached branch-flow polynomials during
/// construction.
struct Builder<'a> {
    net: &'a Network,
    vmap: &'a VariableMap,
    nvars: u32,
    /// Per branch: (re_from, im_from, re_to, im_to).
    flows: Vec<[Polynomial; 4]>,
}

impl<'a> Builder<'a> {
    fn new(net: &'a Network, vmap: &'a VariableMap) -> Self {
        let nvars = vmap.nvars();
        let flows = (0..net.branches.len())
            .map(|b| Self::branch_flows(net, vmap, nvars, b))
            .collect();
        Builder {
            net,
            vmap,
            nvars,
            flows,
        }
    }

    /// |v_i|² as a polynomial.
    fn sq_mag(&self, bus: usize) -> Polynomial {
        let (a, b) = (self.vmap.re_bus(bus), self.vmap.im_bus(bus));
        let mut p = Polynomial::zero(self.nvars);
        p.add_term(Monomial::from_pairs(&[(a, 2)]), 1.0);
        p.add_term(Monomial::from_pairs(&[(b, 2)]), 1.0);
        p
    }

    /// R = Re(v_i v_j*) = x_a x_c + x_b x_d.
    fn re_prod(&self, i: usize, j: usize) -> Polynomial {
        let (a, b) = (self.vmap.re_bus(i), self.vmap.im_bus(i));
        let (c, d) = (self.vmap.re_bus(j), self.vmap.im_bus(j));
        let mut p = Polynomial::zero(self.nvars);
        p.add_term(Monomial::var(a).mul(&Monomial::var(c)), 1.0);
        p.add_term(Monomial::var(b).mul(&Monomial::var(d)), 1.0);
        p
    }

    /// M = Im(v_i v_j*) = x_b x_c − x_a x_d.
    fn im_prod(&self, i: usize, j: usize) -> Polynomial {
        let (a, b) = (self.vmap.re_bus(i), self.vmap.im_bus(i));
        let (c, d) = (self.vmap.re_bus(j), self.vmap.im_bus(j));
        let mut p = Polynomial::zero(self.nvars);
        p.add_term(Monomial::var(b).mul(&Monomial::var(c)), 1.0);
        p.add_term(Monomial::var(a).mul(&Monomial::var(d)), -1.0);
        p
    }

    fn branch_flows(net: &Network, vmap: &VariableMap, nvars: u32, b: usize) -> [Polynomial; 4] {
        let br = &net.branches[b];
        let co = flow_coeffs(net, b);
        let (i, j) = (br.from, br.to);
        let mk_sq = |bus: usize| {
            let (a, bb) = (vmap.re_bus(bus), vmap.im_bus(bus));
            let mut p = Polynomial::zero(nvars);
            p.add_term(Monomial::from_pairs(&[(a, 2)]), 1.0);
            p.add_term(Monomial::from_pairs(&[(bb, 2)]), 1.0);
            p
        };
        let (a, bb) = (vmap.re_bus(i), vmap.im_bus(i));
        let (c, d) = (vmap.re_bus(j), vmap.im_bus(j));
        let mut r = Polynomial::zero(nvars);
        r.add_term(Monomial::var(a).mul(&Monomial::var(c)), 1.0);
        r.add_term(Monomial::var(bb).mul(&Monomial::var(d)), 1.0);
        let mut m = Polynomial::zero(nvars);
        m.add_term(Monomial::var(bb).mul(&Monomial::var(c)), 1.0);
        m.add_term(Monomial::var(a).mul(&Monomial::var(d)), -1.0);

        // from side: s = c_fs·|v_i|² − c_fm·(R + jM)
        let re_from = mk_sq(i)
            .scale(co.from_self.re)
            .sub(&r.scale(co.from_mut.re))
            .add(&m.scale(co.from_mut.im));
        let im_from = mk_sq(i)
            .scale(co.from_self.im)
            .sub(&m.scale(co.from_mut.re))
            .sub(&r.scale(co.from_mut.im));
        // to side: s = c_ts·|v_j|² − c_tm·(R − jM)
        let re_to = mk_sq(j)
            .scale(co.to_self.re)
            .sub(&r.scale(co.to_mut.re))
            .sub(&m.scale(co.to_mut.im));
        let im_to = mk_sq(j)
            .scale(co.to_self.im)
            .add(&m.scale(co.to_mut.re))
            .sub(&r.scale(co.to_mut.im));
        [re_from, im_from, re_to, im_to]
    }

    /// (re, im) flow polynomials of branch `b` leaving bus `i`, which must be
    /// one of its endpoints.
    fn flow_out_of(&self, b: usize, i: usize) -> (&Polynomial, &Polynomial) {
        let br = &self.net.branches[b];
        if br.from == i {
            (&self.flows[b][0], &self.flows[b][1])
        } else {
            debug_assert_eq!(br.to, i);
            (&self.flows[b][2], &self.flows[b][3])
        }
    }

    /// Sum of (re, im) flows out of bus `i` toward the given neighbors,
    /// including parallel branches, in branch file order.
    fn flow_sum(&self, i: usize, toward: &[usize]) -> (Polynomial, Polynomial) {
        let mut re = Polynomial::zero(self.nvars);
        let mut im = Polynomial::zero(self.nvars);
        for (b, br) in self.net.branches.iter().enumerate() {
            let other = if br.from == i {
                br.to
            } else if br.to == i {
                br.from
            } else {
                continue;
            };
            if !toward.contains(&other) {
                continue;
            }
            let (fr, fi) = self.flow_out_of(b, i);
            re = re.add(fr);
            im = im.add(fi);
        }
        (re, im)
    }

    /// Withdrawal side of bus `i`'s balance: `S^L + Y*·|v|²` expanded to
    /// (re, im) polynomials (`Y* = G − jB`).
    fn load_and_shunt(&self, i: usize) -> (Polynomial, Polynomial) {
        let bus = &self.net.buses[i];
        let sq = self.sq_mag(i);
        let mut re = sq.scale(bus.shunt.re);
        re.add_term(Monomial::one(), bus.load.re);
        let mut im = sq.scale(-bus.shunt.im);
        im.add_term(Monomial::one(), bus.load.im);
        (re, im)
    }
}

/// Builds the POP for a network. Returns the (unscaled) problem and the
/// split plan actually applied.
pub fn build_pop(
    net: &Network,
    opts: &BuildOptions,
) -> Result<(PopProblem, SplitPlan), AcopfError> {
    if opts.voltage_only {
        for i in 0..net.buses.len() {
            let gens = net.gens_at(i);
            if gens.len() > 1 {
                return Err(AcopfError::VoltageOnlyMultiGen {
                    bus: net.buses[i].id,
                    count: gens.len(),
                });
            }
        }
        for (g, gen) in net.generators.iter().enumerate() {
            if gen.c2 != 0.0 {
                return Err(AcopfError::VoltageOnlyQuadraticCost { gen: g, c2: gen.c2 });
            }
        }
    }
    let plan = match opts.split_threshold {
        Some(imax) => plan_split_model(net, imax, opts.voltage_only)?,
        None => SplitPlan::none(),
    };
    let vmap = VariableMap::build(net, &plan, !opts.voltage_only);
    let b = Builder::new(net, &vmap);
    let nvars = b.nvars;

    // Net injection expression at each bus: load + shunt + outgoing flows
    // (split buses use their aggregate variables). A generator at the bus
    // must supply exactly this, which is what the voltage-only model
    // substitutes for the generator variable.
    let mut injection: Vec<(Polynomial, Polynomial)> = Vec::with_capacity(net.buses.len());
    for i in 0..net.buses.len() {
        let (mut re, mut im) = b.load_and_shunt(i);
        if let Some(split) = plan.split_for(i) {
            for a in 0..split.groups.len() as u32 {
                re.add_term(Monomial::var(vmap.re_split(i, a)), 1.0);
                im.add_term(Monomial::var(vmap.im_split(i, a)), 1.0);
            }
        } else {
            let neighbors = net.neighbors(i);
            let (fr, fi) = b.flow_sum(i, &neighbors);
            re = re.add(&fr);
            im = im.add(&fi);
        }
        injection.push((re, im));
    }

    // objective: generation cost with per-unit arguments
    let mut objective = Polynomial::zero(nvars);
    for (g, gen) in net.generators.iter().enumerate() {
        let (c2, c1, c0) = gen.cost_per_unit(net.base_mva);
        if opts.voltage_only {
            objective = objective.add(&injection[gen.bus].0.scale(c1));
            objective.add_term(Monomial::one(), c0);
        } else {
            let p = vmap.re_gen(g).expect("full model maps generators");
            if c2 != 0.0 {
                objective.add_term(Monomial::from_pairs(&[(p, 2)]), c2);
            }
            objective.add_term(Monomial::var(p), c1);
            objective.add_term(Monomial::one(), c0);
        }
    }

    let mut constraints: Vec<Constraint> = Vec::new();
    let mut push = |poly: Polynomial, kind: ConstraintKind, tag: String| {
        constraints.push(Constraint { poly, kind, tag });
    };

    // reference buses: Im v = 0; the sign constraint Re v ≥ 0 removes the
    // global phase-flip symmetry so first-order moments of the relaxation
    // can be read as a point
    for (i, bus) in net.buses.iter().enumerate() {
        if bus.bus_type == BusType::Ref {
            push(
                Polynomial::var(nvars, vmap.im_bus(i)),
                ConstraintKind::Equality,
                format!("ref_im@bus{}", bus.id),
            );
            push(
                Polynomial::var(nvars, vmap.re_bus(i)),
                ConstraintKind::Inequality,
                format!("ref_sign@bus{}", bus.id),
            );
        }
    }

    // voltage magnitude bounds, squared
    for (i, bus) in net.buses.iter().enumerate() {
        let sq = b.sq_mag(i);
        let mut lo = sq.clone();
        lo.add_term(Monomial::one(), -bus.vmin * bus.vmin);
        push(
            lo,
            ConstraintKind::Inequality,
            format!("v_lo@bus{}", bus.id),
        );
        let mut hi = sq.scale(-1.0);
        hi.add_term(Monomial::one(), bus.vmax * bus.vmax);
        push(
            hi,
            ConstraintKind::Inequality,
            format!("v_hi@bus{}", bus.id),
        );
    }

    // generator boxes; in the voltage-only model the generator variable is
    // replaced by the bus injection expression
    for (g, gen) in net.generators.iter().enumerate() {
        let (p_expr, q_expr) = if opts.voltage_only {
            injection[gen.bus].clone()
        } else {
            (
                Polynomial::var(nvars, vmap.re_gen(g).unwrap()),
                Polynomial::var(nvars, vmap.im_gen(g).unwrap()),
            )
        };
        let boxes = [
            (&p_expr, -gen.pmin, 1.0, "p_lo"),
            (&p_expr, gen.pmax, -1.0, "p_hi"),
            (&q_expr, -gen.qmin, 1.0, "q_lo"),
            (&q_expr, gen.qmax, -1.0, "q_hi"),
        ];
        for (expr, shift, sign, which) in boxes {
            let mut f = expr.scale(sign);
            f.add_term(Monomial::one(), shift);
            push(f, ConstraintKind::Inequality, format!("gen_{which}@gen{g}"));
        }
    }

    // power balance: generation − injection = 0; at voltage-only generator
    // buses the balance defines the eliminated variable and is not emitted
    for (i, bus) in net.buses.iter().enumerate() {
        let gens = net.gens_at(i);
        if opts.voltage_only && !gens.is_empty() {
            continue;
        }
        let (inj_re, inj_im) = &injection[i];
        let mut f_re = inj_re.scale(-1.0);
        let mut f_im = inj_im.scale(-1.0);
        if !opts.voltage_only {
            for &g in &gens {
                f_re.add_term(Monomial::var(vmap.re_gen(g).unwrap()), 1.0);
                f_im.add_term(Monomial::var(vmap.im_gen(g).unwrap()), 1.0);
            }
        }
        push(
            f_re,
            ConstraintKind::Equality,
            format!("balance_re@bus{}", bus.id),
        );
        push(
            f_im,
            ConstraintKind::Equality,
            format!("balance_im@bus{}", bus.id),
        );
    }

    // split definitions: ℓ_a − Σ_{j∈group a} s_{i,j} = 0
    for split in &plan.splits {
        let i = split.bus;
        let id = net.buses[i].id;
        for (a, group) in split.groups.iter().enumerate() {
            let (fr, fi) = b.flow_sum(i, group);
            let mut f_re = fr.scale(-1.0);
            f_re.add_term(Monomial::var(vmap.re_split(i, a as u32)), 1.0);
            let mut f_im = fi.scale(-1.0);
            f_im.add_term(Monomial::var(vmap.im_split(i, a as u32)), 1.0);
            push(
                f_re,
                ConstraintKind::Equality,
                format!("split_re@bus{id}:g{a}"),
            );
            push(
                f_im,
                ConstraintKind::Equality,
                format!("split_im@bus{id}:g{a}"),
            );
        }
    }

    if !opts.voltage_only {
        // thermal limits per branch direction, squared: S̄² − Re² − Im² ≥ 0
        for (k, br) in net.branches.iter().enumerate() {
            if let Some(smax) = br.smax {
                for (side, re, im) in [
                    ("from", &b.flows[k][0], &b.flows[k][1]),
                    ("to", &b.flows[k][2], &b.flows[k][3]),
                ] {
                    let mut f = re.square().add(&im.square()).scale(-1.0);
                    f.add_term(Monomial::one(), smax * smax);
                    push(
                        f,
                        ConstraintKind::Inequality,
                        format!("flow@branch{k}:{side}"),
                    );
                }
            }
        }
        // angle-difference bounds via the tangent transform, valid on
        // (−π/2, π/2): R ≥ 0, M − tan(θ̲)R ≥ 0, tan(θ̄)R − M ≥ 0
        for (k, br) in net.branches.iter().enumerate() {
            if let Some((lo, hi)) = br.angle_bounds {
                let r = b.re_prod(br.from, br.to);
                let m = b.im_prod(br.from, br.to);
                push(
                    r.clone(),
                    ConstraintKind::Inequality,
                    format!("angle_r@branch{k}"),
                );
                push(
                    m.sub(&r.scale(lo.tan())),
                    ConstraintKind::Inequality,
                    format!("angle_lo@branch{k}"),
                );
                push(
                    r.scale(hi.tan()).sub(&m),
                    ConstraintKind::Inequality,
                    format!("angle_hi@branch{k}"),
                );
            }
        }
    }

    // per-variable boxes for scaling
    let mut var_bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); nvars as usize];
    for n in 0..nvars {
        let (entity, re) = vmap.entity_of(n);
        var_bounds[n as usize] = match entity {
            Entity::BusV(i) => {
                let bus = &net.buses[i];
                if re && bus.bus_type == BusType::Ref {
                    (0.0, bus.vmax)
                } else {
                    (-bus.vmax, bus.vmax)
                }
            }
            Entity::GenS(g) => {
                let gen = &net.generators[g];
                if re {
                    (gen.pmin, gen.pmax)
                } else {
                    (gen.qmin, gen.qmax)
                }
            }
            Entity::SplitVar { bus, group } => {
                let split = plan.split_for(bus).expect("split variable has a plan");
                let bound = split_var_bound(net, bus, &split.groups[group as usize]);
                (-bound, bound)
            }
        };
    }

    let kmax = constraints.len();
    let pop = PopProblem {
        name: net.name.clone(),
        objective,
        constraints,
        varmap: vmap,
        scaling: ScalingRecord::identity(nvars, kmax),
        var_bounds,
        voltage_only: opts.voltage_only,
    };
    Ok((pop, plan))
}

/// Valid bound on |Re ℓ| and |Im ℓ| for a group: per branch, the thermal
/// limit if present, else `|c_self|·V̄_i² + |c_mut|·V̄_i·V̄_j` from the flow
/// coefficients and voltage caps.
fn split_var_bound(net: &Network, i: usize, group: &[usize]) -> f64 {
    let mut total = 0.0;
    for (b, br) in net.branches.iter().enumerate() {
        let other = if br.from == i {
            br.to
        } else if br.to == i {
            br.from
        } else {
            continue;
        };
        if !group.contains(&other) {
            continue;
        }
        total += match br.smax {
            Some(s) => s,
            None => {
                let co = flow_coeffs(net, b);
                let (c_self, c_mut) = if br.from == i {
                    (co.from_self, co.from_mut)
                } else {
                    (co.to_self, co.to_mut)
                };
                let (vi, vj) = (net.buses[i].vmax, net.buses[other].vmax);
                c_self.norm() * vi * vi + c_mut.norm() * vi * vj
            }
        };
    }
    total
}

/// Maps every variable's box to [0, 1] and divides the objective and each
/// constraint by its largest absolute coefficient. Degenerate boxes
/// (width below `1e-9·max(1, |lb|, |ub|)`) are shifted but not stretched.
pub fn scale(pop: &PopProblem) -> Result<PopProblem, AcopfError> {
    scale_with_net(pop, None)
}

/// Like [`scale`], with a network for nicer variable names in errors.
pub fn scale_with_net(pop: &PopProblem, net: Option<&Network>) -> Result<PopProblem, AcopfError> {
    if !pop.scaling.is_identity() {
        return Err(AcopfError::AlreadyScaled);
    }
    let nvars = pop.nvars();
    let mut var_affine = Vec::with_capacity(nvars as usize);
    for n in 0..nvars {
        let (lb, ub) = pop.var_bounds[n as usize];
        if !lb.is_finite() || !ub.is_finite() {
            let name = match net {
                Some(net) => pop.varmap.describe(n, net),
                None => format!("x{}", n + 1),
            };
            return Err(AcopfError::UnboundedVariable { name });
        }
        let width = ub - lb;
        if width < 1e-9 * lb.abs().max(ub.abs()).max(1.0) {
            var_affine.push((1.0, lb));
        } else {
            var_affine.push((width, lb));
        }
    }

    let divisor_of = |p: &Polynomial| {
        let d = p.max_abs_coeff();
        if d > 0.0 {
            d
        } else {
            1.0
        }
    };
    let objective = pop.objective.substitute_affine(&var_affine);
    let objective_divisor = divisor_of(&objective);
    let objective = objective.scale(1.0 / objective_divisor);

    let mut constraints = Vec::with_capacity(pop.constraints.len());
    let mut constraint_divisors = Vec::with_capacity(pop.constraints.len());
    for c in &pop.constraints {
        let p = c.poly.substitute_affine(&var_affine);
        let d = divisor_of(&p);
        constraint_divisors.push(d);
        constraints.push(Constraint {
            poly: p.scale(1.0 / d),
            kind: c.kind,
            tag: c.tag.clone(),
        });
    }

    Ok(PopProblem {
        name: pop.name.clone(),
        objective,
        constraints,
        varmap: pop.varmap.clone(),
        scaling: ScalingRecord {
            var_affine,
            constraint_divisors,
            objective_divisor,
        },
        var_bounds: vec![(0.0, 1.0); nvars as usize],
        voltage_only: pop.voltage_only,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netio::parse_matpower_str;

    fn toy(text: &str) -> Network {
        parse_matpower_str(text, "toy").unwrap()
    }

    fn two_bus() -> Network {
        toy("function mpc = toy\n\
             mpc.baseMVA = 100;\n\
             mpc.bus = [\n\
             1 3 0 0 0 0 1 1 0 138 1 1.1 0.9;\n\
             2 1 80 30 2 5 1 1 0 138 1 1.1 0.9;\n\
             ];\n\
             mpc.gen = [\n\
             1 0 0 100 -100 1 100 1 300 0;\n\
             ];\n\
             mpc.branch = [\n\
             1 2 0.02 0.2 0.04 120 0 0 0.98 1.5 1 -25 25;\n\
             ];\n\
             mpc.gencost = [\n\
             2 0 0 3 0.02 7 11;\n\
             ];\n")
    }

    fn three_bus() -> Network {
        toy("function mpc = toy\n\
             mpc.baseMVA = 100;\n\
             mpc.bus = [\n\
             1 3 0 0 0 0 1 1 0 138 1 1.1 0.9;\n\
             2 1 50 20 0 3 1 1 0 138 1 1.1 0.9;\n\
             3 2 60 10 1 0 1 1 0 138 1 1.1 0.9;\n\
             ];\n\
             mpc.gen = [\n\
             1 0 0 80 -80 1 100 1 200 0;\n\
             3 0 0 60 -60 1 100 1 150 0;\n\
             ];\n\
             mpc.branch = [\n\
             1 2 0.01 0.12 0.02 200 0 0 0 0 1 -30 30;\n\
             2 3 0.03 0.25 0.03 0 0 0 1.02 -2 1 0 0;\n\
             1 3 0.02 0.18 0 150 0 0 0 0 1 -360 360;\n\
             ];\n\
             mpc.gencost = [\n\
             2 0 0 3 0.01 12 0;\n\
             2 0 0 2 9 0 0;\n\
             ];\n")
    }

    /// Star network: center bus 1 with `n` leaves, generator at the center.
    fn star(n: usize) -> Network {
        let mut t = String::from("function mpc = star\nmpc.baseMVA = 100;\nmpc.bus = [\n");
        t.push_str("1 3 0 0 0 0 1 1 0 138 1 1.1 0.9;\n");
        for k in 0..n {
            t.push_str(&format!("{} 1 10 3 0 0 1 1 0 138 1 1.1 0.9;\n", k + 2));
        }
        t.push_str("];\nmpc.gen = [\n1 0 0 500 -500 1 100 1 2000 0;\n];\nmpc.branch = [\n");
        for k in 0..n {
            t.push_str(&format!("1 {} 0.01 0.1 0.02 90 0 0 0 0 1 0 0;\n", k + 2));
        }
        t.push_str("];\nmpc.gencost = [\n2 0 0 3 0.1 5 0;\n];\n");
        toy(&t)
    }

    /// Deterministic pseudo-random stream for test points.
    struct Lcg(u64);
    impl Lcg {
        fn next_f64(&mut self) -> f64 {
            // numerical recipes LCG; top 32 bits scaled to [0,1)
            self.0 = self
                .0
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (self.0 >> 32) as f64 / 4294967296.0
        }
        fn in_range(&mut self, lo: f64, hi: f64) -> f64 {
            lo + (hi - lo) * self.next_f64()
        }
    }

    /// Independent complex-arithmetic flow: S_out = conj(Y_self)|V_self|² +
    /// conj(Y_mut)·V_self·conj(V_other) from the two-port admittance matrix.
    fn oracle_flow(net: &Network, b: usize, out_of_from: bool, v: &[Complex64]) -> Complex64 {
        let br = &net.branches[b];
        let ys = br.series_admittance();
        let tau = br.tau();
        let (yff, yft) = ((ys + br.charging_from()) / tau.norm_sqr(), -ys / tau.conj());
        let (ytf, ytt) = (-ys / tau, ys + br.charging_to());
        if out_of_from {
            let i_conj = (yff * v[br.from] + yft * v[br.to]).conj();
            v[br.from] * i_conj
        } else {
            let i_conj = (ytf * v[br.from] + ytt * v[br.to]).conj();
            v[br.to] * i_conj
        }
    }

    /// Complex balance residual Σ s_g − S^L − Y*|v|² − Σ flows at a bus.
    fn oracle_balance(net: &Network, i: usize, v: &[Complex64], sg: &[Complex64]) -> Complex64 {
        let bus = &net.buses[i];
        let mut acc = -bus.load - bus.shunt.conj() * v[i].norm_sqr();
        for (g, gen) in net.generators.iter().enumerate() {
            if gen.bus == i {
                acc += sg[g];
            }
        }
        for (b, br) in net.branches.iter().enumerate() {
            if br.from == i {
                acc -= oracle_flow(net, b, true, v);
            } else if br.to == i {
                acc -= oracle_flow(net, b, false, v);
            }
        }
        acc
    }

    fn random_point(
        net: &Network,
        pop: &PopProblem,
        rng: &mut Lcg,
    ) -> (Vec<f64>, Vec<Complex64>, Vec<Complex64>) {
        let vmap = &pop.varmap;
        let mut x = vec![0.0; pop.nvars() as usize];
        let v: Vec<Complex64> = (0..net.buses.len())
            .map(|_| Complex64::new(rng.in_range(-1.1, 1.1), rng.in_range(-1.1, 1.1)))
            .collect();
        let sg: Vec<Complex64> = (0..net.generators.len())
            .map(|_| Complex64::new(rng.in_range(-2.0, 2.0), rng.in_range(-2.0, 2.0)))
            .collect();
        for i in 0..net.buses.len() {
            x[vmap.re_bus(i) as usize] = v[i].re;
            x[vmap.im_bus(i) as usize] = v[i].im;
        }
        for (g, s) in sg.iter().enumerate() {
            if let (Some(p), Some(q)) = (vmap.re_gen(g), vmap.im_gen(g)) {
                x[p as usize] = s.re;
                x[q as usize] = s.im;
            }
        }
        (x, v, sg)
    }

    fn constraint<'a>(pop: &'a PopProblem, tag: &str) -> &'a Constraint {
        pop.constraints
            .iter()
            .find(|c| c.tag == tag)
            .unwrap_or_else(|| panic!("no constraint tagged {tag}"))
    }

    #[test]
    fn variable_layout_re_then_im() {
        let net = two_bus();
        let (pop, _) = build_pop(&net, &BuildOptions::default()).unwrap();
        let vm = &pop.varmap;
        assert_eq!(pop.nvars(), 6); // 2 buses + 1 generator
        assert_eq!(vm.re_bus(0), 0);
        assert_eq!(vm.re_bus(1), 1);
        assert_eq!(vm.re_gen(0), Some(2));
        assert_eq!(vm.im_bus(0), 3);
        assert_eq!(vm.im_gen(0), Some(5));
        assert_eq!(vm.describe(0, &net), "Re v[bus 1]");
        assert_eq!(vm.describe(5, &net), "Im s[gen 0 at bus 1]");
    }

    #[test]
    fn single_bus_balance_is_exact() {
        let net = toy("function mpc = one\n\
             mpc.baseMVA = 100;\n\
             mpc.bus = [\n\
             1 3 100 0 0 0 1 1 0 138 1 1.1 0.9;\n\
             ];\n\
             mpc.gen = [\n\
             1 0 0 100 -100 1 100 1 300 0;\n\
             ];\n\
             mpc.branch = [\n\
             ];\n\
             mpc.gencost = [\n\
             2 0 0 3 0 10 0;\n\
             ];\n");
        let (pop, _) = build_pop(&net, &BuildOptions::default()).unwrap();
        let re = constraint(&pop, "balance_re@bus1");
        // exactly x_p − 1 = 0
        assert_eq!(re.poly.term_count(), 2);
        assert_eq!(re.poly.constant_term(), -1.0);
        assert_eq!(
            re.poly.coeff(&Monomial::var(pop.varmap.re_gen(0).unwrap())),
            1.0
        );
        let im = constraint(&pop, "balance_im@bus1");
        assert_eq!(im.poly.term_count(), 1);
        assert_eq!(
            im.poly.coeff(&Monomial::var(pop.varmap.im_gen(0).unwrap())),
            1.0
        );
    }

    #[test]
    fn balance_polynomials_match_complex_oracle() {
        let mut rng = Lcg(0x5eed);
        for net in [two_bus(), three_bus()] {
            let (pop, _) = build_pop(&net, &BuildOptions::default()).unwrap();
            for _ in 0..25 {
                let (x, v, sg) = random_point(&net, &pop, &mut rng);
                for (i, bus) in net.buses.iter().enumerate() {
                    let want = oracle_balance(&net, i, &v, &sg);
                    let got_re = constraint(&pop, &format!("balance_re@bus{}", bus.id))
                        .poly
                        .eval(&x);
                    let got_im = constraint(&pop, &format!("balance_im@bus{}", bus.id))
                        .poly
                        .eval(&x);
                    assert!(
                        (got_re - want.re).abs() <= 1e-10,
                        "re residual differs: {got_re} vs {}",
                        want.re
                    );
                    assert!(
                        (got_im - want.im).abs() <= 1e-10,
                        "im residual differs: {got_im} vs {}",
                        want.im
                    );
                }
            }
        }
    }

    #[test]
    fn thermal_and_angle_polynomials_match_oracle() {
        let mut rng = Lcg(0xfeed);
        let net = two_bus();
        let (pop, _) = build_pop(&net, &BuildOptions::default()).unwrap();
        for _ in 0..25 {
            let (x, v, _) = random_point(&net, &pop, &mut rng);
            let sfrom = oracle_flow(&net, 0, true, &v);
            let sto = oracle_flow(&net, 0, false, &v);
            let smax = net.branches[0].smax.unwrap();
            let got_from = constraint(&pop, "flow@branch0:from").poly.eval(&x);
            let got_to = constraint(&pop, "flow@branch0:to").poly.eval(&x);
            assert!((got_from - (smax * smax - sfrom.norm_sqr())).abs() <= 1e-10);
            assert!((got_to - (smax * smax - sto.norm_sqr())).abs() <= 1e-10);
            let prod = v[0] * v[1].conj();
            let (lo, hi) = net.branches[0].angle_bounds.unwrap();
            assert!((constraint(&pop, "angle_r@branch0").poly.eval(&x) - prod.re).abs() <= 1e-12);
            assert!(
                (constraint(&pop, "angle_lo@branch0").poly.eval(&x)
                    - (prod.im - lo.tan() * prod.re))
                    .abs()
                    <= 1e-12
            );
            assert!(
                (constraint(&pop, "angle_hi@branch0").poly.eval(&x)
                    - (hi.tan() * prod.re - prod.im))
                    .abs()
                    <= 1e-12
            );
        }
    }

    #[test]
    fn degree_audit() {
        // thermal limits present → degree 4, r0 = 2
        let (pop, _) = build_pop(&two_bus(), &BuildOptions::default()).unwrap();
        assert_eq!(pop.max_degree(), 4);
        assert_eq!(pop.r0(), 2);
        // no limits anywhere → degree 2, r0 = 1
        let mut text = String::from(
            "function mpc = t\nmpc.baseMVA = 100;\nmpc.bus = [\n\
             1 3 0 0 0 0 1 1 0 138 1 1.1 0.9;\n\
             2 1 10 5 0 0 1 1 0 138 1 1.1 0.9;\n\
             ];\nmpc.gen = [\n1 0 0 50 -50 1 100 1 100 0;\n];\n",
        );
        text.push_str("mpc.branch = [\n1 2 0.01 0.1 0 0 0 0 0 0 1 0 0;\n];\n");
        text.push_str("mpc.gencost = [\n2 0 0 3 0.1 5 0;\n];\n");
        let (pop, _) = build_pop(&toy(&text), &BuildOptions::default()).unwrap();
        assert_eq!(pop.max_degree(), 2);
        assert_eq!(pop.r0(), 1);
    }

    #[test]
    fn closed_form_split_examples() {
        // spec'd worked example
        assert_eq!(closed_form_split(10, 12), (3, 4));
        // minimality and feasibility against brute force over n_A
        for imax in 6..=40u32 {
            for n in 1..=50u32 {
                let (n_a, n_bar) = closed_form_split(n, imax);
                assert!(
                    2 * (n_bar + 2) <= imax,
                    "group subset constraint n={n} imax={imax}"
                );
                assert!(n_a * n_bar >= n, "cover constraint n={n} imax={imax}");
                let best = (1..=n)
                    .find(|&k| 2 * (n.div_ceil(k) + 2) <= imax)
                    .expect("feasible for imax >= 6");
                assert_eq!(n_a, best, "minimal group count n={n} imax={imax}");
            }
        }
    }

    #[test]
    fn star_network_splits_at_center() {
        let net = star(7);
        // unsplit cardinality 2(1 + 7 + 1) = 18 > 12 at the center
        let plan = plan_split(&net, 12).unwrap();
        assert_eq!(plan.splits.len(), 1);
        let split = &plan.splits[0];
        assert_eq!(split.bus, 0);
        assert_eq!(split.groups.len(), 2); // ceil(7/4)
        assert_eq!(split.group_cap, 4); // ceil(7/2)
        assert_eq!(plan.added_variables(), 4);
        // round-robin by ascending id: leaves 2..8 alternate between groups
        assert_eq!(split.groups[0], vec![1, 3, 5, 7]);
        assert_eq!(split.groups[1], vec![2, 4, 6]);
        // leaves have 2(1+1) = 4 ≤ 12: untouched
        assert!(plan.unreduced.is_empty());
        assert!(plan.gen_heavy.is_empty());
    }

    #[test]
    fn no_split_below_threshold() {
        let net = star(4);
        // center: 2(1 + 4 + 1) = 12 ≤ 12
        let plan = plan_split(&net, 12).unwrap();
        assert!(plan.splits.is_empty());
        assert!(plan_split(&net, 5).is_err());
    }

    #[test]
    fn splitting_preserves_balance_residual() {
        let net = star(7);
        let unsplit = build_pop(&net, &BuildOptions::default()).unwrap().0;
        let (split_pop, plan) = build_pop(
            &net,
            &BuildOptions {
                voltage_only: false,
                split_threshold: Some(12),
            },
        )
        .unwrap();
        assert_eq!(split_pop.nvars(), unsplit.nvars() + 4);
        let mut rng = Lcg(0xabcd);
        for _ in 0..10 {
            let (x, v, sg) = random_point(&net, &split_pop, &mut rng);
            let mut x = x;
            // set each split variable to its defining flow sum, zeroing the
            // definition residuals
            let vm = &split_pop.varmap;
            let split = &plan.splits[0];
            for (a, group) in split.groups.iter().enumerate() {
                let mut s = Complex64::new(0.0, 0.0);
                for (b, br) in net.branches.iter().enumerate() {
                    let other = if br.from == 0 { br.to } else { br.from };
                    if group.contains(&other) {
                        s += oracle_flow(&net, b, br.from == 0, &v);
                    }
                }
                x[vm.re_split(0, a as u32) as usize] = s.re;
                x[vm.im_split(0, a as u32) as usize] = s.im;
                let def_re = constraint(&split_pop, &format!("split_re@bus1:g{a}"))
                    .poly
                    .eval(&x);
                let def_im = constraint(&split_pop, &format!("split_im@bus1:g{a}"))
                    .poly
                    .eval(&x);
                assert!(def_re.abs() <= 1e-10 && def_im.abs() <= 1e-10);
            }
            // the rewritten balance then equals the unsplit residual
            let want = oracle_balance(&net, 0, &v, &sg);
            let got_re = constraint(&split_pop, "balance_re@bus1").poly.eval(&x);
            let got_im = constraint(&split_pop, "balance_im@bus1").poly.eval(&x);
            assert!((got_re - want.re).abs() <= 1e-10);
            assert!((got_im - want.im).abs() <= 1e-10);
        }
    }

    #[test]
    fn voltage_only_eliminates_generators() {
        let net = three_bus();
        // three_bus has a quadratic cost on gen 0 → error
        let err = build_pop(
            &net,
            &BuildOptions {
                voltage_only: true,
                split_threshold: None,
            },
        )
        .unwrap_err();
        assert!(matches!(
            err,
            AcopfError::VoltageOnlyQuadraticCost { gen: 0, .. }
        ));

        // linearize costs: rebuild with c2 = 0
        let text = "function mpc = toy\n\
             mpc.baseMVA = 100;\n\
             mpc.bus = [\n\
             1 3 0 0 0 0 1 1 0 138 1 1.1 0.9;\n\
             2 1 50 20 0 3 1 1 0 138 1 1.1 0.9;\n\
             3 2 60 10 1 0 1 1 0 138 1 1.1 0.9;\n\
             ];\n\
             mpc.gen = [\n\
             1 0 0 80 -80 1 100 1 200 0;\n\
             3 0 0 60 -60 1 100 1 150 0;\n\
             ];\n\
             mpc.branch = [\n\
             1 2 0.01 0.12 0.02 200 0 0 0 0 1 -30 30;\n\
             2 3 0.03 0.25 0.03 0 0 0 1.02 -2 1 0 0;\n\
             1 3 0.02 0.18 0 150 0 0 0 0 1 -360 360;\n\
             ];\n\
             mpc.gencost = [\n\
             2 0 0 3 0 12 0;\n\
             2 0 0 2 9 0 0;\n\
             ];\n";
        let net = toy(text);
        let (pop, _) = build_pop(
            &net,
            &BuildOptions {
                voltage_only: true,
                split_threshold: None,
            },
        )
        .unwrap();
        assert_eq!(pop.nvars(), 6); // voltages only
        assert_eq!(pop.max_degree(), 2); // flow/angle limits dropped
                                         // balance equalities only at the load bus
        assert!(pop.constraints.iter().any(|c| c.tag == "balance_re@bus2"));
        assert!(!pop.constraints.iter().any(|c| c.tag == "balance_re@bus1"));
        // generator boxes became degree-2 voltage constraints
        assert_eq!(constraint(&pop, "gen_p_lo@gen0").poly.degree(), 2);

        // elimination is exact: box polynomial equals Pmax − Re(injection)
        let mut rng = Lcg(0x77);
        for _ in 0..10 {
            let (x, v, _) = random_point(&net, &pop, &mut rng);
            let inj = -oracle_balance(&net, 0, &v, &[Complex64::new(0.0, 0.0); 2]);
            let f = constraint(&pop, "gen_p_hi@gen0").poly.eval(&x);
            assert!((f - (net.generators[0].pmax - inj.re)).abs() <= 1e-10);
            // objective = Σ c1·p_g + const with p_g the injection expressions
            let inj3 = -oracle_balance(&net, 2, &v, &[Complex64::new(0.0, 0.0); 2]);
            let (_, c1a, c0a) = net.generators[0].cost_per_unit(net.base_mva);
            let (_, c1b, c0b) = net.generators[1].cost_per_unit(net.base_mva);
            let want = c1a * inj.re + c0a + c1b * inj3.re + c0b;
            assert!((pop.objective.eval(&x) - want).abs() <= 1e-8);
        }
    }

    #[test]
    fn voltage_only_rejects_two_generators_on_a_bus() {
        let text = "function mpc = t\nmpc.baseMVA = 100;\nmpc.bus = [\n\
             1 3 0 0 0 0 1 1 0 138 1 1.1 0.9;\n\
             2 1 10 5 0 0 1 1 0 138 1 1.1 0.9;\n\
             ];\nmpc.gen = [\n\
             1 0 0 50 -50 1 100 1 100 0;\n\
             1 0 0 50 -50 1 100 1 100 0;\n\
             ];\nmpc.branch = [\n1 2 0.01 0.1 0 0 0 0 0 0 1 0 0;\n];\n\
             mpc.gencost = [\n2 0 0 2 5 0;\n2 0 0 2 5 0;\n];\n";
        let err = build_pop(
            &toy(text),
            &BuildOptions {
                voltage_only: true,
                split_threshold: None,
            },
        )
        .unwrap_err();
        assert!(matches!(
            err,
            AcopfError::VoltageOnlyMultiGen { bus: 1, count: 2 }
        ));
    }

    #[test]
    fn scaling_round_trips_coefficients() {
        let net = two_bus();
        let (pop, _) = build_pop(&net, &BuildOptions::default()).unwrap();
        let scaled = scale(&pop).unwrap();
        assert!(!scaled.scaling.is_identity());
        assert!(scale(&scaled).is_err()); // double scaling refused

        // invert: substitute x̃ = (x − b)/a and multiply back the divisor
        let inverse: Vec<(f64, f64)> = scaled
            .scaling
            .var_affine
            .iter()
            .map(|&(a, b)| (1.0 / a, -b / a))
            .collect();
        let check = |orig: &Polynomial, s: &Polynomial, d: f64| {
            let back = s.substitute_affine(&inverse).scale(d);
            for (m, c) in orig.terms() {
                let rel = (back.coeff(m) - c).abs() / c.abs().max(1.0);
                assert!(
                    rel <= 1e-12,
                    "coefficient of {m} drifted: {} vs {c}",
                    back.coeff(m)
                );
            }
            for (m, c) in back.terms() {
                if orig.coeff(m) == 0.0 {
                    assert!(c.abs() <= 1e-12 * orig.max_abs_coeff());
                }
            }
        };
        check(
            &pop.objective,
            &scaled.objective,
            scaled.scaling.objective_divisor,
        );
        for (k, c) in pop.constraints.iter().enumerate() {
            check(
                &c.poly,
                &scaled.constraints[k].poly,
                scaled.scaling.constraint_divisors[k],
            );
        }
        // all scaled coefficients lie in [−1, 1]
        for c in &scaled.constraints {
            assert!(c.poly.max_abs_coeff() <= 1.0 + 1e-12);
        }
        assert!(scaled.objective.max_abs_coeff() <= 1.0 + 1e-12);
    }

    #[test]
    fn scaling_preserves_evaluations() {
        let net = three_bus();
        let (pop, _) = build_pop(&net, &BuildOptions::default()).unwrap();
        let scaled = scale(&pop).unwrap();
        let mut rng = Lcg(0x9f);
        for _ in 0..10 {
            let (x, _, _) = random_point(&net, &pop, &mut rng);
            let xt = scaled.scaling.scale_point(&x);
            let back = scaled.scaling.unscale_point(&xt);
            for (a, b) in x.iter().zip(&back) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
            let fo = pop.objective.eval(&x);
            let fs = scaled.scaling.unscale_objective(scaled.objective.eval(&xt));
            assert!((fo - fs).abs() <= 1e-8 * fo.abs().max(1.0));
            for (k, c) in pop.constraints.iter().enumerate() {
                let vo = c.poly.eval(&x);
                let vs =
                    scaled.constraints[k].poly.eval(&xt) * scaled.scaling.constraint_divisors[k];
                assert!(
                    (vo - vs).abs() <= 1e-8 * vo.abs().max(1.0),
                    "{}: {vo} vs {vs}",
                    c.tag
                );
            }
        }
    }

    #[test]
    fn scale_box_examples() {
        let net = two_bus();
        let (pop, _) = build_pop(&net, &BuildOptions::default()).unwrap();
        let scaled = scale(&pop).unwrap();
        // reference bus Re: box [0, 1.1] → a = 1.1, b = 0
        let (a, b) = scaled.scaling.var_affine[0];
        assert!((a - 1.1).abs() < 1e-15 && b == 0.0);
        // non-reference Re: box [−1.1, 1.1] → a = 2.2, b = −1.1
        let (a, b) = scaled.scaling.var_affine[1];
        assert!((a - 2.2).abs() < 1e-15 && (b + 1.1).abs() < 1e-15);
        // generator P: box [0, 3] p.u.
        let (a, b) = scaled.scaling.var_affine[2];
        assert!((a - 3.0).abs() < 1e-15 && b == 0.0);
    }

    #[test]
    fn pop_text_dump_is_stable() {
        let net = two_bus();
        let (pop, _) = build_pop(&net, &BuildOptions::default()).unwrap();
        let text = pop.to_text(&net);
        assert!(text.starts_with("popv1 toy\nnvars 6 voltage_only false\n"));
        assert!(text.contains("var x1 box [0, 1.1] Re v[bus 1]"));
        assert!(text.contains("constraint 0 eq ref_im@bus1 nterms 1"));
        assert!(text.ends_with("end popv1\n"));
        // byte-identical across rebuilds
        let (pop2, _) = build_pop(&net, &BuildOptions::default()).unwrap();
        assert_eq!(text, pop2.to_text(&net));
    }
}
