//! End-to-end solve of a small network: parse a MATPOWER case, build the
//! polynomial optimization model, pick the per-bus sparsity pattern,
//! assemble the order-2 moment relaxation, and solve it with the embedded
//! interior-point method.
//!
//! The case is a 3-bus feeder (slack generator at bus 1, two load buses)
//! kept inline so the example runs without any data files:
//!
//! ```text
//!   G ── 1 ───── 2 ───── 3
//!        (10+j2 MW at buses 2 and 3)
//! ```
//!
//! Run with `cargo run --example solve_network`.

use momentopf::acopf::{build_pop, scale, BuildOptions};
use momentopf::netio::parse_matpower_str;
use momentopf::relax::assemble;
use momentopf::sdp::{solve, SolveOptions, Status};
use momentopf::sparsity::{minimal_pattern, pattern_stats};

const CASE: &str = "\
function mpc = feeder3
mpc.baseMVA = 100;
mpc.bus = [
1 3 0  0 0 0 1 1 0 138 1 1.1 0.9;
2 1 10 2 0 0 1 1 0 138 1 1.1 0.9;
3 1 10 2 0 0 1 1 0 138 1 1.1 0.9;
];
mpc.gen = [
1 0 0 50 -50 1 100 1 100 0;
];
mpc.branch = [
1 2 0.01 0.1 0 0 0 0 0 0 1 0 0;
2 3 0.01 0.1 0 0 0 0 0 0 1 0 0;
];
mpc.gencost = [
2 0 0 3 0.1 5 0;
];
";

fn main() {
    let net = parse_matpower_str(CASE, "feeder3").expect("case parses");
    println!(
        "{}: {} buses, {} generators, {} branches",
        net.name,
        net.buses.len(),
        net.generators.len(),
        net.branches.len()
    );

    // Polynomial model over Re/Im voltages and generator injections,
    // rescaled so every variable lives in [0, 1].
    let (raw, plan) = build_pop(&net, &BuildOptions::default()).expect("model builds");
    let pop = scale(&raw).expect("model scales");
    println!(
        "model: {} variables, {} constraints",
        pop.nvars(),
        pop.constraints.len()
    );

    // One subset per bus — voltages of the bus and its neighbors plus any
    // local generator — instead of one chordal clique per bus neighborhood.
    let pattern = minimal_pattern(&pop, &net, &plan).expect("pattern applies");
    let stats = pattern_stats(&pattern, 2);
    println!(
        "pattern: {} subsets, largest cardinality {}, largest moment block {}",
        pattern.subsets.len(),
        stats.m,
        stats.largest_block
    );

    let sdp = assemble(&pop, &pattern, 2).expect("relaxation assembles");
    println!(
        "relaxation: {} moments, {} PSD blocks, {} equality rows",
        sdp.n_moments(),
        sdp.blocks.len(),
        sdp.eq_rows.len()
    );

    let sol = solve(&sdp, &SolveOptions::default()).expect("size fits the embedded solver");
    let bound = pop.scaling.unscale_objective(sol.dual_objective);
    println!(
        "solve: {} after {} iterations, lower bound {bound:.4} $/h",
        sol.status, sol.iterations
    );
    match sol.status {
        Status::Optimal | Status::SlowProgress => {}
        other => println!("unexpected terminal status {other}: {:?}", sol.note),
    }
}
