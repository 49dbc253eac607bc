//! Embedded semidefinite solver and SDPA interchange
//!
//! [`solve`] runs a primal-dual interior-point method on a [`BlockSdp`]
//! directly in process. It is sized for desk-scale relaxations — a hard
//! gate refuses problems whose largest block or moment count would make
//! the dense per-block algebra unreasonable, and those should go through
//! [`export_sdpa`] to an external solver instead, with
//! [`import_sdpa_solution`] reading the result back.

use thiserror::Error;

use crate::relax::BlockSdp;

mod ipm;

pub(crate) use ipm::eig_sym;
mod kkt;
mod sdpa;

pub use sdpa::{export_sdpa, import_sdpa_problem, import_sdpa_solution, parse_monomial, SdpaError};

/// Largest PSD block the embedded solver accepts.
pub const MAX_BLOCK_SIZE: usize = 400;
/// Largest number of moment variables the embedded solver accepts.
pub const MAX_MOMENTS: usize = 200_000;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error(
        "problem exceeds the embedded solver's size gate \
         (largest block {largest_block} vs {MAX_BLOCK_SIZE}, \
         {n_moments} moment variables vs {MAX_MOMENTS}); \
         export it in SDPA format and use an external solver"
    )]
    DeskScaleExceeded {
        largest_block: usize,
        n_moments: usize,
    },
}

/// Outcome classification of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// All residuals and the relative gap met the tolerance.
    Optimal,
    /// Step sizes collapsed before the tolerance was met; the iterate is
    /// usually still a usable approximation.
    SlowProgress,
    /// A dual improving ray certified that the constraints are infeasible.
    Infeasible,
    /// Breakdown, divergence, or the iteration limit; results are not
    /// trustworthy.
    Unknown,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Optimal => "optimal",
            Status::SlowProgress => "slow_progress",
            Status::Infeasible => "infeasible",
            Status::Unknown => "unknown",
        })
    }
}

/// One line of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRow {
    pub iter: u32,
    /// Complementarity measure ⟨S,Z⟩ normalized by total block dimension.
    pub mu: f64,
    /// Relative primal-dual objective gap.
    pub gap: f64,
    pub pinf: f64,
    pub dinf: f64,
    /// min of the primal and dual step lengths taken.
    pub step: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Tolerance applied to primal/dual residuals and the relative gap.
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-7,
            max_iter: 200,
        }
    }
}

/// Result of a solve, valid whatever the final status (fields hold the
/// last iterate).
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: Status,
    /// Moment vector, indexed like `BlockSdp::y_monomials` (y\[0\] ≈ 1).
    pub y: Vec<f64>,
    /// Dual PSD matrix per block, dense column-major.
    pub block_duals: Vec<Vec<f64>>,
    /// Multiplier per equality row.
    pub eq_duals: Vec<f64>,
    /// Primal objective c·y (the relaxation value at the moment iterate).
    pub objective: f64,
    /// Dual objective — a valid lower bound on the relaxation when the
    /// dual residual is small.
    pub dual_objective: f64,
    pub iterations: u32,
    pub rel_gap: f64,
    pub primal_infeas: f64,
    pub dual_infeas: f64,
    pub log: Vec<IterRow>,
    /// Human-readable diagnostic for non-optimal exits.
    pub note: Option<String>,
}

impl SdpSolution {
    /// Iteration log as CSV with columns iter,mu,gap,pinf,dinf,step.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("iter,mu,gap,pinf,dinf,step\n");
        for row in &self.log {
            out.push_str(&format!(
                "{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}\n",
                row.iter, row.mu, row.gap, row.pinf, row.dinf, row.step
            ));
        }
        out
    }
}

/// Solve a block SDP with the embedded interior-point method.
///
/// Numerical difficulties surface as [`Status::Unknown`] (with a note),
/// never as an `Err`; the error path is reserved for problems the
/// embedded solver refuses to attempt.
pub fn solve(sdp: &BlockSdp, opts: &SolveOptions) -> Result<SdpSolution, SdpError> {
    let largest_block = sdp.blocks.iter().map(|b| b.size).max().unwrap_or(0);
    let n_moments = sdp.n_moments();
    if largest_block > MAX_BLOCK_SIZE || n_moments > MAX_MOMENTS {
        return Err(SdpError::DeskScaleExceeded {
            largest_block,
            n_moments,
        });
    }
    Ok(ipm::run(sdp, opts))
}
