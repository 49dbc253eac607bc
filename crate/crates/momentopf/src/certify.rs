//! Certification of relaxation results.
//!
//! A solved relaxation yields a lower bound and a pseudo-moment vector.
//! This module turns those into verifiable claims: the optimality gap
//! against a reference dispatch cost, rank diagnostics of the first-order
//! moment matrices, extraction of a candidate minimizer when they are
//! numerically rank one, and an independent feasibility check of that
//! candidate against the original complex-arithmetic network constraints
//! (never the polynomial model it was computed from).

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::acopf::{Entity, PopProblem};
use crate::netio::{BusType, Network};
use crate::poly::Monomial;
use crate::relax::BlockSdp;
use crate::sdp::eig_sym;

/// Errors from gap computation and candidate assembly.
#[derive(Error, Debug)]
pub enum CertifyError {
    #[error("optimality gap is undefined for a zero upper bound")]
    ZeroUpperBound,
    #[error("candidate carries {got} {what}, the network has {want}")]
    DimensionMismatch {
        what: &'static str,
        got: usize,
        want: usize,
    },
    #[error("bus {bus} hosts {count} generators; voltage-only recovery needs at most one")]
    AmbiguousRecovery { bus: i64, count: usize },
    #[error("moment vector has no entry for variable {var}")]
    MissingMoment { var: u32 },
}

/// Relative optimality gap in percent, `(ub − lb)/ub × 100`.
///
/// Negative values are legitimate output (the bound exceeded the reference
/// cost, usually a stale reference or solver tolerance) and are flagged as a
/// warning by [`CertReport::set_upper_bound`] rather than rejected here.
pub fn gap_percent(lb: f64, ub: f64) -> Result<f64, CertifyError> {
    if ub == 0.0 {
        return Err(CertifyError::ZeroUpperBound);
    }
    Ok((ub - lb) / ub * 100.0)
}

/// Default threshold on λ2/λ1 below which a first-order moment matrix is
/// treated as rank one.
pub const DEFAULT_RANK_TOL: f64 = 1e-3;

/// Eigenvalue ratio λ2/λ1 of each subset's first-order moment matrix.
///
/// For subset `I_p` the matrix is the leading `(|I_p|+1)`-dimensional
/// principal block of the subset's moment matrix at `y` — the graded basis
/// ordering puts the constant and the degree-1 monomials first, so the
/// restriction is positional. Ratios come back in subset order. A ratio near
/// zero means the pseudo-moments look like the moments of a single point on
/// that subset; `+∞` is returned for a matrix whose top eigenvalue is not
/// positive (nothing point-like can be read off it).
pub fn rank_diagnose(y: &[f64], sdp: &BlockSdp) -> Vec<f64> {
    let mut ratios = Vec::new();
    let mut p = 0;
    while let Some(b) = sdp.moment_block(p) {
        let k1 = b.basis.iter().take_while(|m| m.degree() <= 1).count();
        let full = b.eval(y);
        let mut m1 = vec![0.0; k1 * k1];
        for j in 0..k1 {
            for i in 0..k1 {
                m1[i + j * k1] = full[i + j * b.size];
            }
        }
        let ratio = match eig_sym(k1, &m1) {
            Ok((vals, _)) if k1 >= 2 && vals[k1 - 1] > 0.0 => vals[k1 - 2] / vals[k1 - 1],
            _ => f64::INFINITY,
        };
        ratios.push(ratio);
        p += 1;
    }
    ratios
}

/// A candidate minimizer read from degree-1 pseudo-moments.
#[derive(Debug, Clone, Serialize)]
pub struct ExtractedPoint {
    /// Full variable vector in original (un-scaled) units, internal order.
    #[serde(skip)]
    pub x: Vec<f64>,
    /// Voltage phasor per bus, in file order.
    pub voltages: Vec<Complex64>,
    /// Complex output per generator; `None` when the model eliminated
    /// generator variables (voltage-only).
    pub generations: Option<Vec<Complex64>>,
    /// Largest residual of the flow-splitting equalities at the point, in
    /// original units, recorded before the splitting variables are dropped.
    pub split_residual: f64,
    /// The rank ratios that admitted the extraction.
    pub rank_ratios: Vec<f64>,
}

/// Reads a candidate minimizer off the degree-1 pseudo-moments, or `None`
/// when any subset's rank ratio exceeds `rank_tol`.
///
/// The degree-1 moments live in the model's scaled coordinates; they are
/// mapped back to original units through the problem's scaling record.
/// Splitting variables (aggregated neighbor flows) are checked against their
/// defining equalities and then dropped — the returned point speaks the
/// network's language: voltages and generator outputs.
pub fn extract_point(
    y: &[f64],
    sdp: &BlockSdp,
    pop: &PopProblem,
    rank_tol: f64,
) -> Option<ExtractedPoint> {
    let rank_ratios = rank_diagnose(y, sdp);
    if rank_ratios.is_empty() || rank_ratios.iter().any(|r| !(*r <= rank_tol)) {
        return None;
    }

    let n = pop.nvars() as usize;
    let mut xm = vec![0.0; n];
    for (v, slot) in xm.iter_mut().enumerate() {
        let g = sdp.moment_index(&Monomial::var(v as u32))?;
        *slot = y[g as usize];
    }
    let x = pop.scaling.unscale_point(&xm);

    let mut split_residual = 0.0f64;
    for (k, c) in pop.constraints.iter().enumerate() {
        if c.tag.starts_with("split_") {
            let r = c.poly.eval(&xm).abs() * pop.scaling.constraint_divisors[k];
            split_residual = split_residual.max(r);
        }
    }

    let vm = &pop.varmap;
    let half = vm.half() as usize;
    let mut voltages = Vec::new();
    let mut gens = Vec::new();
    for (p, e) in vm.entities().iter().enumerate() {
        let s = Complex64::new(x[p], x[p + half]);
        match e {
            Entity::BusV(_) => voltages.push(s),
            Entity::GenS(_) => gens.push(s),
            Entity::SplitVar { .. } => {}
        }
    }
    let generations = if pop.voltage_only { None } else { Some(gens) };

    Some(ExtractedPoint {
        x,
        voltages,
        generations,
        split_residual,
        rank_ratios,
    })
}

impl ExtractedPoint {
    /// Promotes the point to a full dispatch candidate, recovering generator
    /// outputs from the voltages when the model eliminated them.
    pub fn candidate(&self, net: &Network) -> Result<Candidate, CertifyError> {
        let generations = match &self.generations {
            Some(g) => g.clone(),
            None => recover_generation(&self.voltages, net)?,
        };
        Ok(Candidate {
            voltages: self.voltages.clone(),
            generations,
        })
    }
}

/// A dispatch to check: voltage phasor per bus, complex output per generator.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub voltages: Vec<Complex64>,
    pub generations: Vec<Complex64>,
}

/// Complex flow injected into a branch at its two ends, `(from, to)`.
fn branch_flow(net: &Network, k: usize, v: &[Complex64]) -> (Complex64, Complex64) {
    let br = &net.branches[k];
    let y = br.series_admittance();
    let tau = br.tau();
    let vf = v[br.from];
    let vt = v[br.to];
    let cross = vf * vt.conj();
    let sf = (y + br.charging_from()).conj() / tau.norm_sqr() * vf.norm_sqr()
        - y.conj() / tau * cross;
    let st = (y + br.charging_to()).conj() * vt.norm_sqr() - y.conj() / tau.conj() * cross.conj();
    (sf, st)
}

/// Power a bus withdraws on its own: load plus shunt draw at voltage `vi`.
fn bus_withdrawal(net: &Network, i: usize, vi: Complex64) -> Complex64 {
    let bus = &net.buses[i];
    bus.load + bus.shunt.conj() * vi.norm_sqr()
}

/// Per-generator outputs implied by a voltage profile: each generator covers
/// its bus's load, shunt draw, and outgoing branch flows — the same
/// substitution the voltage-only model applies. Buses hosting more than one
/// generator make the recovery ambiguous and error out; the voltage-only
/// builder refuses such networks up front.
pub fn recover_generation(
    v: &[Complex64],
    net: &Network,
) -> Result<Vec<Complex64>, CertifyError> {
    if v.len() != net.buses.len() {
        return Err(CertifyError::DimensionMismatch {
            what: "voltages",
            got: v.len(),
            want: net.buses.len(),
        });
    }
    let mut out = vec![Complex64::new(0.0, 0.0); net.generators.len()];
    for i in 0..net.buses.len() {
        let gens = net.gens_at(i);
        if gens.is_empty() {
            continue;
        }
        if gens.len() > 1 {
            return Err(CertifyError::AmbiguousRecovery {
                bus: net.buses[i].id,
                count: gens.len(),
            });
        }
        let mut inj = bus_withdrawal(net, i, v[i]);
        for (k, br) in net.branches.iter().enumerate() {
            if br.from == i {
                inj += branch_flow(net, k, v).0;
            } else if br.to == i {
                inj += branch_flow(net, k, v).1;
            }
        }
        out[gens[0]] = inj;
    }
    Ok(out)
}

/// Worst absolute violation per constraint family, in per-unit quantities
/// (radians for the angle family).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Violations {
    /// Complex power-balance residual magnitude, per bus.
    pub balance: f64,
    /// Voltage-magnitude bound overshoot.
    pub voltage: f64,
    /// Generator active/reactive box overshoot.
    pub generator: f64,
    /// Apparent-power branch-limit overshoot, either end.
    pub flow: f64,
    /// Angle-difference bound overshoot.
    pub angle: f64,
    /// Reference-bus residual: |Im v| and any negative real part.
    pub reference: f64,
}

impl Violations {
    /// Largest violation across all families.
    pub fn max(&self) -> f64 {
        self.rows().iter().fold(0.0, |acc, &(_, v)| acc.max(v))
    }

    /// `(family, violation)` pairs in a stable order.
    pub fn rows(&self) -> [(&'static str, f64); 6] {
        [
            ("balance", self.balance),
            ("voltage", self.voltage),
            ("generator", self.generator),
            ("flow", self.flow),
            ("angle", self.angle),
            ("reference", self.reference),
        ]
    }
}

/// Checks a candidate against the network's original constraints with plain
/// complex arithmetic — branch flows from the admittance model, magnitudes,
/// boxes, angles — and reports the worst violation per family.
///
/// The candidate must be dimensionally consistent with the network.
pub fn verify_feasibility(cand: &Candidate, net: &Network) -> Violations {
    assert_eq!(
        cand.voltages.len(),
        net.buses.len(),
        "candidate voltages must match the network's bus count"
    );
    assert_eq!(
        cand.generations.len(),
        net.generators.len(),
        "candidate generations must match the network's generator count"
    );
    let v = &cand.voltages;
    let flows: Vec<(Complex64, Complex64)> = (0..net.branches.len())
        .map(|k| branch_flow(net, k, v))
        .collect();
    let mut out = Violations::default();

    for (i, bus) in net.buses.iter().enumerate() {
        let mut residual = -bus_withdrawal(net, i, v[i]);
        for (k, br) in net.branches.iter().enumerate() {
            if br.from == i {
                residual -= flows[k].0;
            } else if br.to == i {
                residual -= flows[k].1;
            }
        }
        for g in net.gens_at(i) {
            residual += cand.generations[g];
        }
        out.balance = out.balance.max(residual.norm());

        let m = v[i].norm();
        out.voltage = out.voltage.max(bus.vmin - m).max(m - bus.vmax);

        if bus.bus_type == BusType::Ref {
            out.reference = out.reference.max(v[i].im.abs()).max(-v[i].re);
        }
    }

    for (g, gen) in net.generators.iter().enumerate() {
        let s = cand.generations[g];
        out.generator = out
            .generator
            .max(gen.pmin - s.re)
            .max(s.re - gen.pmax)
            .max(gen.qmin - s.im)
            .max(s.im - gen.qmax);
    }

    for (k, br) in net.branches.iter().enumerate() {
        if let Some(smax) = br.smax {
            out.flow = out
                .flow
                .max(flows[k].0.norm() - smax)
                .max(flows[k].1.norm() - smax);
        }
        if let Some((lo, hi)) = br.angle_bounds {
            let delta = (v[br.from] * v[br.to].conj()).arg();
            out.angle = out.angle.max(lo - delta).max(delta - hi);
        }
    }

    // families with no binding constraints report zero, not a sign flip
    out.voltage = out.voltage.max(0.0);
    out.generator = out.generator.max(0.0);
    out.flow = out.flow.max(0.0);
    out.angle = out.angle.max(0.0);
    out.reference = out.reference.max(0.0);
    out
}

/// Wall-clock stage durations in seconds.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Timings {
    pub parse: f64,
    pub build: f64,
    pub pattern: f64,
    pub assemble: f64,
    pub solve: f64,
    pub certify: f64,
}

impl Timings {
    pub fn total(&self) -> f64 {
        self.parse + self.build + self.pattern + self.assemble + self.solve + self.certify
    }
}

/// Everything the pipeline learned about one case, ready to print or
/// serialize. Timings vary run to run; every other field is deterministic
/// for a fixed input.
#[derive(Debug, Clone, Serialize)]
pub struct CertReport {
    pub case: String,
    /// Sparsity pattern provenance (`minimal`, `clique`, `dense`).
    pub pattern: String,
    /// Relaxation order.
    pub order: u32,
    /// Solver status, lowercase.
    pub status: String,
    /// Lower bound in original objective units.
    pub lower_bound: f64,
    /// Reference dispatch cost the bound is compared against, if provided.
    pub upper_bound: Option<f64>,
    /// Full-precision gap percent; render at two decimals for tables.
    pub gap_percent: Option<f64>,
    pub rank_tol: f64,
    /// Per-subset λ2/λ1 of the first-order moment matrices.
    pub rank_ratios: Vec<f64>,
    /// Candidate minimizer, present only when every rank ratio passed.
    pub point: Option<ExtractedPoint>,
    /// Independent feasibility check of the candidate.
    pub violations: Option<Violations>,
    pub max_violation: Option<f64>,
    /// Variables the splitting step added / total model variables.
    pub added_vars: u32,
    pub total_vars: u32,
    pub moments: usize,
    pub blocks: usize,
    pub eq_rows: usize,
    pub largest_block: usize,
    pub iterations: u32,
    /// Solver's relative duality gap at termination.
    pub solver_gap: f64,
    pub warnings: Vec<String>,
    pub timings: Timings,
}

impl CertReport {
    /// Starts an empty report; the pipeline fills the public fields in as
    /// stages complete.
    pub fn new(case: impl Into<String>, pattern: impl Into<String>, order: u32) -> Self {
        CertReport {
            case: case.into(),
            pattern: pattern.into(),
            order,
            status: String::new(),
            lower_bound: f64::NAN,
            upper_bound: None,
            gap_percent: None,
            rank_tol: DEFAULT_RANK_TOL,
            rank_ratios: Vec::new(),
            point: None,
            violations: None,
            max_violation: None,
            added_vars: 0,
            total_vars: 0,
            moments: 0,
            blocks: 0,
            eq_rows: 0,
            largest_block: 0,
            iterations: 0,
            solver_gap: f64::NAN,
            warnings: Vec::new(),
            timings: Timings::default(),
        }
    }

    /// Records the reference cost and the gap it implies; a negative gap
    /// (bound above the reference) is kept but flagged as a warning.
    pub fn set_upper_bound(&mut self, ub: f64) -> Result<(), CertifyError> {
        let gap = gap_percent(self.lower_bound, ub)?;
        self.upper_bound = Some(ub);
        self.gap_percent = Some(gap);
        if gap < 0.0 {
            self.warnings.push(format!(
                "negative gap {gap:.2}%: lower bound {:.6} exceeds the reference cost {ub:.6}",
                self.lower_bound
            ));
        }
        Ok(())
    }

    /// Attaches an extracted candidate and its feasibility check.
    pub fn set_point(&mut self, point: ExtractedPoint, violations: Violations) {
        self.max_violation = Some(violations.max());
        self.violations = Some(violations);
        self.point = Some(point);
    }

    /// True when the stored gap agrees with the stored bounds to 1e-9.
    pub fn gap_consistent(&self) -> bool {
        match (self.upper_bound, self.gap_percent) {
            (Some(ub), Some(g)) => {
                gap_percent(self.lower_bound, ub).is_ok_and(|r| (r - g).abs() <= 1e-9)
            }
            (None, None) => true,
            _ => false,
        }
    }

    /// Worst rank ratio, `+∞` when no diagnosis ran.
    pub fn worst_rank_ratio(&self) -> f64 {
        self.rank_ratios
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    }

    /// Multi-line human-readable report.
    pub fn human(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "certification report: {}", self.case);
        let _ = writeln!(s, "  pattern        {} (order {})", self.pattern, self.order);
        let _ = writeln!(s, "  status         {}", self.status);
        let _ = writeln!(s, "  lower bound    {:.6}", self.lower_bound);
        match (self.upper_bound, self.gap_percent) {
            (Some(ub), Some(g)) => {
                let _ = writeln!(s, "  upper bound    {ub:.6}");
                let _ = writeln!(s, "  gap            {g:.2} %");
            }
            _ => {
                let _ = writeln!(s, "  upper bound    (none given; gap not computed)");
            }
        }
        if self.rank_ratios.is_empty() {
            let _ = writeln!(s, "  rank           (no diagnosis)");
        } else {
            let _ = writeln!(
                s,
                "  rank           worst λ2/λ1 {:.2e} over {} subsets (tol {:.0e})",
                self.worst_rank_ratio(),
                self.rank_ratios.len(),
                self.rank_tol
            );
        }
        match (&self.point, &self.violations) {
            (Some(p), Some(v)) => {
                let _ = writeln!(
                    s,
                    "  point          extracted; max AC violation {:.2e}",
                    v.max()
                );
                let fam = v
                    .rows()
                    .iter()
                    .map(|(name, val)| format!("{name} {val:.1e}"))
                    .collect::<Vec<_>>()
                    .join(", ");
                let _ = writeln!(s, "                 {fam}");
                if p.split_residual > 0.0 {
                    let _ = writeln!(
                        s,
                        "                 split-equality residual {:.1e}",
                        p.split_residual
                    );
                }
            }
            _ => {
                let _ = writeln!(s, "  point          none (moment matrices not rank one)");
            }
        }
        let _ = writeln!(
            s,
            "  variables      {} added by splitting / {} total",
            self.added_vars, self.total_vars
        );
        let _ = writeln!(
            s,
            "  relaxation     {} moments, {} blocks (largest {}), {} equality rows",
            self.moments, self.blocks, self.largest_block, self.eq_rows
        );
        let _ = writeln!(
            s,
            "  solve          {} iterations, relative gap {:.1e}",
            self.iterations, self.solver_gap
        );
        let t = self.timings;
        let _ = writeln!(
            s,
            "  time           {:.2} s (parse {:.2}, build {:.2}, pattern {:.2}, assemble {:.2}, solve {:.2}, certify {:.2})",
            t.total(), t.parse, t.build, t.pattern, t.assemble, t.solve, t.certify
        );
        for w in &self.warnings {
            let _ = writeln!(s, "  warning        {w}");
        }
        s
    }

    /// Machine-readable JSON (pretty-printed).
    pub fn json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One table over several reports: case, status, bound, gap, added/total
    /// variables, wall time.
    pub fn table(reports: &[CertReport]) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<24} {:>13} {:>14} {:>8} {:>12} {:>9}",
            "case", "status", "bound", "gap %", "vars +/tot", "time s"
        );
        for r in reports {
            let gap = r
                .gap_percent
                .map_or_else(|| "-".to_string(), |g| format!("{g:.2}"));
            let _ = writeln!(
                s,
                "{:<24} {:>13} {:>14.4} {:>8} {:>12} {:>9.2}",
                r.case,
                r.status,
                r.lower_bound,
                gap,
                format!("{}/{}", r.added_vars, r.total_vars),
                r.timings.total()
            );
        }
        s
    }
}

/// Generation cost of a candidate dispatch in original objective units
/// (cost data is quoted per MW, so active outputs are rebased off per-unit).
pub fn dispatch_cost(cand: &Candidate, net: &Network) -> f64 {
    cand.generations
        .iter()
        .zip(&net.generators)
        .map(|(s, g)| {
            let p = s.re * net.base_mva;
            g.c2 * p * p + g.c1 * p + g.c0
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acopf::{build_pop, scale, BuildOptions};
    use crate::netio::parse_matpower_str;
    use crate::relax::assemble;
    use crate::sdp::{solve, SolveOptions, Status};
    use crate::sparsity::minimal_pattern;

    fn toy(text: &str) -> Network {
        parse_matpower_str(text, "toy").unwrap()
    }

    /// Single bus carrying a reference generator, load, and shunt.
    fn one_bus() -> Network {
        toy("function mpc = toy\n\
             mpc.baseMVA = 100;\n\
             mpc.bus = [\n\
             1 3 20 5 1 -2 1 1 0 138 1 1.1 0.9;\n\
             ];\n\
             mpc.gen = [\n\
             1 0 0 100 -100 1 100 1 100 0;\n\
             ];\n\
             mpc.branch = [];\n\
             mpc.gencost = [\n\
             2 0 0 3 0.02 7 11;\n\
             ];\n")
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

    /// Center bus 1 with four leaves and a center generator; `Imax = 8`
    /// makes the center's balance split into two neighbor groups.
    fn star4() -> Network {
        let mut t = String::from("function mpc = star\nmpc.baseMVA = 100;\nmpc.bus = [\n");
        t.push_str("1 3 0 0 0 0 1 1 0 138 1 1.1 0.9;\n");
        for k in 0..4 {
            t.push_str(&format!("{} 1 10 3 0 0 1 1 0 138 1 1.1 0.9;\n", k + 2));
        }
        t.push_str("];\nmpc.gen = [\n1 0 0 500 -500 1 100 1 2000 0;\n];\nmpc.branch = [\n");
        for k in 0..4 {
            t.push_str(&format!("1 {} 0.01 0.1 0.02 90 0 0 0 0 1 0 0;\n", k + 2));
        }
        t.push_str("];\nmpc.gencost = [\n2 0 0 3 0.1 5 0;\n];\n");
        toy(&t)
    }

    /// Deterministic pseudo-random stream for test points.
    struct Lcg(u64);
    impl Lcg {
        fn next_f64(&mut self) -> f64 {
            self.0 = self
                .0
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (self.0 >> 32) as f64 / 4294967296.0
        }
    }

    /// Scaled two-bus model with its assembled order-2 relaxation.
    fn two_bus_relaxation() -> (Network, crate::acopf::PopProblem, BlockSdp) {
        let net = two_bus();
        let (pop, plan) = build_pop(
            &net,
            &BuildOptions {
                voltage_only: false,
                split_threshold: Some(12),
            },
        )
        .unwrap();
        let pop = scale(&pop).unwrap();
        let pattern = minimal_pattern(&pop, &net, &plan).unwrap();
        let sdp = assemble(&pop, &pattern, 2).unwrap();
        (net, pop, sdp)
    }

    /// Pseudo-moments of a single point: y_α = x̂^α.
    fn point_moments(sdp: &BlockSdp, x: &[f64]) -> Vec<f64> {
        sdp.y_monomials.iter().map(|m| m.eval(x)).collect()
    }

    #[test]
    fn gap_matches_reference_values() {
        assert_eq!(gap_percent(100.0, 100.0).unwrap(), 0.0);
        assert!((gap_percent(96.7, 100.0).unwrap() - 3.30).abs() < 1e-12);
        let neg = gap_percent(100.01, 100.0).unwrap();
        assert!((neg - (-0.01)).abs() < 1e-9);
        assert_eq!(format!("{neg:.2}"), "-0.01");
        assert!(matches!(
            gap_percent(1.0, 0.0),
            Err(CertifyError::ZeroUpperBound)
        ));
    }

    #[test]
    fn negative_gap_is_flagged_not_rejected() {
        let mut report = CertReport::new("toy", "minimal", 2);
        report.lower_bound = 100.01;
        report.set_upper_bound(100.0).unwrap();
        assert!(report.gap_percent.unwrap() < 0.0);
        assert_eq!(report.warnings.len(), 1);
        assert!(report.warnings[0].contains("negative gap"));
        assert!(report.gap_consistent());
    }

    #[test]
    fn moments_of_one_point_are_rank_one() {
        let (_, pop, sdp) = two_bus_relaxation();
        let mut rng = Lcg(7);
        let x: Vec<f64> = (0..pop.nvars()).map(|_| rng.next_f64()).collect();
        let y = point_moments(&sdp, &x);
        let ratios = rank_diagnose(&y, &sdp);
        assert!(!ratios.is_empty());
        for r in &ratios {
            assert!(r.abs() <= 1e-12, "ratio {r} too large for a point mass");
        }
    }

    #[test]
    fn mixture_of_two_points_is_caught() {
        let (_, pop, sdp) = two_bus_relaxation();
        let n = pop.nvars() as usize;
        let a = vec![0.2; n];
        let b = vec![0.8; n];
        let ya = point_moments(&sdp, &a);
        let yb = point_moments(&sdp, &b);
        let y: Vec<f64> = ya.iter().zip(&yb).map(|(u, v)| 0.5 * (u + v)).collect();
        for r in rank_diagnose(&y, &sdp) {
            assert!(r >= 1e-2, "mixture ratio {r} should be far from rank one");
        }
        assert!(extract_point(&y, &sdp, &pop, DEFAULT_RANK_TOL).is_none());
    }

    #[test]
    fn point_moments_extract_back_to_the_point() {
        let (_, pop, sdp) = two_bus_relaxation();
        let mut rng = Lcg(11);
        let xm: Vec<f64> = (0..pop.nvars()).map(|_| rng.next_f64()).collect();
        let y = point_moments(&sdp, &xm);
        let pt = extract_point(&y, &sdp, &pop, DEFAULT_RANK_TOL).expect("rank-one by construction");
        let expect = pop.scaling.unscale_point(&xm);
        for (got, want) in pt.x.iter().zip(&expect) {
            assert!((got - want).abs() <= 1e-9);
        }
        assert_eq!(pt.voltages.len(), 2);
        assert_eq!(pt.generations.as_ref().map(Vec::len), Some(1));
        assert_eq!(pt.split_residual, 0.0);
        let vm = &pop.varmap;
        let v0 = pt.voltages[0];
        assert_eq!(v0.re, expect[vm.re_bus(0) as usize]);
        assert_eq!(v0.im, expect[vm.im_bus(0) as usize]);
    }

    #[test]
    fn split_equality_residual_is_reported_before_dropping() {
        let net = star4();
        let (pop, plan) = build_pop(
            &net,
            &BuildOptions {
                voltage_only: false,
                split_threshold: Some(8),
            },
        )
        .unwrap();
        assert_eq!(plan.splits.len(), 1);
        assert_eq!(plan.added_variables(), 4);
        let pattern = minimal_pattern(&pop, &net, &plan).unwrap();
        let sdp = assemble(&pop, &pattern, 2).unwrap();

        // voltages and generation chosen freely; splitting variables then
        // set to satisfy their defining equalities exactly
        let mut rng = Lcg(3);
        let mut x = vec![0.0; pop.nvars() as usize];
        let vm = &pop.varmap;
        for i in 0..net.buses.len() {
            x[vm.re_bus(i) as usize] = 0.95 + 0.1 * rng.next_f64();
            x[vm.im_bus(i) as usize] = 0.1 * rng.next_f64() - 0.05;
        }
        x[vm.re_gen(0).unwrap() as usize] = 0.5;
        x[vm.im_gen(0).unwrap() as usize] = 0.1;
        for c in &pop.constraints {
            if let Some(rest) = c.tag.strip_prefix("split_re@bus1:g") {
                let a: u32 = rest.parse().unwrap();
                x[vm.re_split(0, a) as usize] = -c.poly.eval(&x);
            } else if let Some(rest) = c.tag.strip_prefix("split_im@bus1:g") {
                let a: u32 = rest.parse().unwrap();
                x[vm.im_split(0, a) as usize] = -c.poly.eval(&x);
            }
        }
        for c in &pop.constraints {
            if c.tag.starts_with("split_") {
                assert!(c.poly.eval(&x).abs() < 1e-12);
            }
        }

        x[vm.re_split(0, 0) as usize] += 1e-3;
        let y = point_moments(&sdp, &x);
        let pt = extract_point(&y, &sdp, &pop, DEFAULT_RANK_TOL).expect("still rank one");
        assert!((pt.split_residual - 1e-3).abs() < 1e-9);
        // the exposed point speaks in buses and generators only
        assert_eq!(pt.voltages.len(), 5);
        assert_eq!(pt.generations.as_ref().map(Vec::len), Some(1));
    }

    #[test]
    fn exact_feasible_point_has_zero_violations() {
        let net = one_bus();
        let v = vec![Complex64::new(1.0, 0.0)];
        let generations = recover_generation(&v, &net).unwrap();
        let cand = Candidate {
            voltages: v,
            generations,
        };
        let viol = verify_feasibility(&cand, &net);
        assert_eq!(viol.max(), 0.0);
        for (_, f) in viol.rows() {
            assert_eq!(f, 0.0);
        }
        // the recovered output is the bus's own withdrawal
        let s = cand.generations[0];
        assert!((s.re - (0.2 + 0.01)).abs() < 1e-15);
        assert!((s.im - (0.05 - 0.02)).abs() < 1e-15);
    }

    #[test]
    fn voltage_overshoot_reported_in_magnitude_units() {
        let net = one_bus();
        let v = vec![Complex64::new(1.15, 0.0)];
        let generations = recover_generation(&v, &net).unwrap();
        let cand = Candidate {
            voltages: v,
            generations,
        };
        let viol = verify_feasibility(&cand, &net);
        assert!((viol.voltage - 0.05).abs() < 1e-12);
    }

    #[test]
    fn reference_family_sees_rotated_voltage() {
        let net = one_bus();
        let v = vec![Complex64::from_polar(1.0, 0.3)];
        let generations = recover_generation(&v, &net).unwrap();
        let cand = Candidate {
            voltages: v,
            generations,
        };
        let viol = verify_feasibility(&cand, &net);
        assert!((viol.reference - (0.3f64).sin()).abs() < 1e-12);
        assert_eq!(viol.voltage, 0.0);
    }

    #[test]
    fn solved_two_bus_extracts_a_verified_minimizer() {
        let (net, pop, sdp) = two_bus_relaxation();
        let sol = solve(&sdp, &SolveOptions::default()).unwrap();
        assert!(
            matches!(sol.status, Status::Optimal | Status::SlowProgress),
            "unexpected status {}",
            sol.status
        );
        let lb = pop.scaling.unscale_objective(sol.dual_objective);
        let pt = extract_point(&sol.y, &sdp, &pop, DEFAULT_RANK_TOL)
            .expect("two-bus relaxation should be tight");
        let cand = pt.candidate(&net).unwrap();
        let viol = verify_feasibility(&cand, &net);
        assert!(
            viol.max() <= 1e-5,
            "extracted point infeasible: {:?}",
            viol.rows()
        );
        // soundness: the bound never exceeds the cost of a verified point
        // beyond tolerance
        let cost = dispatch_cost(&cand, &net);
        assert!(gap_percent(lb, cost).unwrap() >= -1e-4);
    }

    #[test]
    fn report_renders_both_faces() {
        let mut report = CertReport::new("two_bus", "minimal", 2);
        report.status = "optimal".into();
        report.lower_bound = 812.5;
        report.set_upper_bound(812.5).unwrap();
        report.rank_ratios = vec![1e-6, 3e-5];
        report.total_vars = 6;
        report.moments = 120;
        report.blocks = 5;
        report.largest_block = 15;
        report.eq_rows = 40;
        report.iterations = 20;
        report.solver_gap = 3e-8;

        let human = report.human();
        assert!(human.contains("gap            0.00 %"));
        assert!(human.contains("0 added by splitting / 6 total"));

        let parsed: serde_json::Value = serde_json::from_str(&report.json()).unwrap();
        assert_eq!(parsed["case"], "two_bus");
        assert_eq!(parsed["gap_percent"], 0.0);
        assert_eq!(parsed["rank_ratios"][1], 3e-5);
        assert!(parsed["point"].is_null());
        assert!(report.gap_consistent());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Lowering the bound can only widen the gap; for positive
            /// bounds below the reference, raising the reference widens it
            /// too (gap = 1 − lb/ub grows with ub when lb > 0).
            #[test]
            fn gap_monotone_in_both_arguments(
                lb in 0.1f64..1000.0,
                dlb in 0.0f64..100.0,
                ub_scale in 1.001f64..10.0,
                ub_more in 1.0f64..10.0,
            ) {
                let ub = lb * ub_scale;
                let g = gap_percent(lb, ub).unwrap();
                prop_assert!(gap_percent(lb - dlb, ub).unwrap() >= g);
                prop_assert!(gap_percent(lb, ub * ub_more).unwrap() >= g - 1e-12);
            }

            /// Moments of any single point diagnose as rank one on every
            /// subset.
            #[test]
            fn any_point_mass_diagnoses_rank_one(seed in 0u64..1000) {
                let (_, pop, sdp) = two_bus_relaxation();
                let mut rng = Lcg(seed.wrapping_mul(2).wrapping_add(1));
                let x: Vec<f64> = (0..pop.nvars()).map(|_| rng.next_f64()).collect();
                let y = point_moments(&sdp, &x);
                for r in rank_diagnose(&y, &sdp) {
                    prop_assert!(r.abs() <= 1e-10);
                }
            }
        }
    }
}
