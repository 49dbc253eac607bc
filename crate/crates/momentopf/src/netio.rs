//! MATPOWER case-file I/O and the reference upper-bound table.
//!
//! Parses the standard `mpc.bus` / `mpc.gen` / `mpc.branch` / `mpc.gencost`
//! sections, filters out-of-service equipment, converts quantities to
//! per-unit on the system MVA base and validates structural sanity (bus
//! references, one reference bus, bound ordering, polynomial cost model of
//! degree at most two). Branch quantities are exposed through the Π-model:
//! series admittance `y = 1/(r + jx)`, half line-charging `j b/2` on each
//! side, complex tap ratio `τ = tap · e^{j·shift}` located at the from side.
//!
//! `angmin = angmax = 0` and bounds at or beyond ±360° follow the MATPOWER
//! convention for "no angle limit" and parse as absent; genuine bounds must
//! lie strictly inside (−90°, +90°).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

/// Errors produced while reading case files or upper-bound tables.
#[derive(Debug, Error)]
pub enum NetioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{name}:{line}: {msg}")]
    Syntax {
        name: String,
        line: usize,
        msg: String,
    },
    #[error("case {name}: missing section {section}")]
    MissingSection { name: String, section: String },
    #[error("case {name}: generator {index} references unknown bus {bus}")]
    UnknownGenBus {
        name: String,
        index: usize,
        bus: i64,
    },
    #[error("case {name}: branch {index} references unknown bus {bus}")]
    UnknownBranchBus {
        name: String,
        index: usize,
        bus: i64,
    },
    #[error("case {name}: no reference (type 3) bus")]
    NoReferenceBus { name: String },
    #[error("case {name}: bus {bus}: {msg}")]
    BadBus { name: String, bus: i64, msg: String },
    #[error("case {name}: generator {index} at bus {bus}: {msg}")]
    BadGenerator {
        name: String,
        index: usize,
        bus: i64,
        msg: String,
    },
    #[error("case {name}: branch {index} ({from},{to}): {msg}")]
    BadBranch {
        name: String,
        index: usize,
        from: i64,
        to: i64,
        msg: String,
    },
    #[error("case {name}: generator {index}: unsupported cost model {model} (only polynomial model 2 of degree <= 2 is supported)")]
    UnsupportedCost {
        name: String,
        index: usize,
        model: i64,
    },
    #[error("upper-bound table {path}:{line}: {msg}")]
    BadTable {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("case {case} not found in upper-bound table {path}")]
    MissingUpperBound { case: String, path: String },
}

/// MATPOWER bus type (isolated type-4 buses are rejected at parse time).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BusType {
    Pq,
    Pv,
    Ref,
}

#[derive(Clone, PartialEq, Debug)]
pub(crate) struct BusRaw {
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
    pub area: f64,
    pub vm: f64,
    pub va: f64,
    pub zone: f64,
}

/// A bus with load and shunt in per-unit on the system base.
#[derive(Clone, PartialEq, Debug)]
pub struct Bus {
    /// External MATPOWER bus number.
    pub id: i64,
    pub bus_type: BusType,
    /// Complex load S^L (p.u.).
    pub load: Complex64,
    /// Shunt admittance G + jB (p.u.).
    pub shunt: Complex64,
    /// Voltage magnitude bounds (p.u.).
    pub vmin: f64,
    pub vmax: f64,
    /// Nominal voltage (kV), informational.
    pub base_kv: f64,
    pub(crate) raw: BusRaw,
}

#[derive(Clone, PartialEq, Debug)]
pub(crate) struct GenRaw {
    pub pg: f64,
    pub qg: f64,
    pub vg: f64,
    pub mbase: f64,
    pub qmax: f64,
    pub qmin: f64,
    pub pmax: f64,
    pub pmin: f64,
    pub startup: f64,
    pub shutdown: f64,
}

/// An in-service generator with box bounds in per-unit and the original
/// dollars-per-MW cost polynomial.
#[derive(Clone, PartialEq, Debug)]
pub struct Generator {
    /// Index into `Network::buses`.
    pub bus: usize,
    /// Active power bounds (p.u.).
    pub pmin: f64,
    pub pmax: f64,
    /// Reactive power bounds (p.u.).
    pub qmin: f64,
    pub qmax: f64,
    /// Cost C2·P² + C1·P + C0 with P in MW ($/h).
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
    pub(crate) raw: GenRaw,
}

impl Generator {
    /// Cost coefficients rebased so the argument is active power in per-unit:
    /// `cost(p_pu) = c2·base²·p_pu² + c1·base·p_pu + c0`.
    pub fn cost_per_unit(&self, base_mva: f64) -> (f64, f64, f64) {
        (self.c2 * base_mva * base_mva, self.c1 * base_mva, self.c0)
    }
}

#[derive(Clone, PartialEq, Debug)]
pub(crate) struct BranchRaw {
    pub rate_a: f64,
    pub rate_b: f64,
    pub rate_c: f64,
    pub tap: f64,
    pub angmin: f64,
    pub angmax: f64,
}

/// An in-service branch (line or transformer) in the Π-model.
#[derive(Clone, PartialEq, Debug)]
pub struct Branch {
    /// Indices into `Network::buses`.
    pub from: usize,
    pub to: usize,
    /// Series impedance (p.u.).
    pub r: f64,
    pub x: f64,
    /// Total line-charging susceptance (p.u.); half is placed on each side.
    pub b: f64,
    /// Tap magnitude (1.0 when the file holds 0) and phase shift in degrees.
    pub tap: f64,
    pub shift_deg: f64,
    /// Apparent-power limit |s| <= smax in p.u., `None` when unconstrained.
    pub smax: Option<f64>,
    /// Angle-difference bounds on ∠(v_from · conj(v_to)), radians.
    pub angle_bounds: Option<(f64, f64)>,
    pub(crate) raw: BranchRaw,
}

impl Branch {
    /// Series admittance y = 1/(r + jx).
    pub fn series_admittance(&self) -> Complex64 {
        Complex64::new(1.0, 0.0) / Complex64::new(self.r, self.x)
    }

    /// Line-charging admittance on the from side (j·b/2).
    pub fn charging_from(&self) -> Complex64 {
        Complex64::new(0.0, self.b / 2.0)
    }

    /// Line-charging admittance on the to side (j·b/2).
    pub fn charging_to(&self) -> Complex64 {
        Complex64::new(0.0, self.b / 2.0)
    }

    /// Complex tap ratio τ = tap·e^{j·shift} on the from side.
    pub fn tau(&self) -> Complex64 {
        Complex64::from_polar(self.tap, self.shift_deg.to_radians())
    }
}

/// A parsed, validated power network in per-unit.
#[derive(Clone, PartialEq, Debug)]
pub struct Network {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
    index: HashMap<i64, usize>,
}

impl Network {
    /// Index of the bus with external id `id`.
    pub fn bus_index(&self, id: i64) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Indices of reference buses (nonempty by construction).
    pub fn reference_buses(&self) -> Vec<usize> {
        self.buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.bus_type == BusType::Ref)
            .map(|(i, _)| i)
            .collect()
    }

    /// Distinct neighboring bus indices of bus `i`, ascending by external id.
    /// Parallel branches contribute a single neighbor entry.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .branches
            .iter()
            .filter_map(|br| {
                if br.from == i {
                    Some(br.to)
                } else if br.to == i {
                    Some(br.from)
                } else {
                    None
                }
            })
            .collect();
        out.sort_by_key(|&j| self.buses[j].id);
        out.dedup();
        out
    }

    /// Generator indices attached to bus `i`.
    pub fn gens_at(&self, i: usize) -> Vec<usize> {
        self.generators
            .iter()
            .enumerate()
            .filter(|(_, g)| g.bus == i)
            .map(|(k, _)| k)
            .collect()
    }

    /// All branch indices incident to bus `i` whose other end is bus `j`.
    pub fn branches_between(&self, i: usize, j: usize) -> Vec<usize> {
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, br)| (br.from == i && br.to == j) || (br.from == j && br.to == i))
            .map(|(k, _)| k)
            .collect()
    }
}

/// Reads and parses a MATPOWER case file; the case name is the file stem.
pub fn parse_matpower(path: impl AsRef<Path>) -> Result<Network, NetioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| NetioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "case".to_string());
    parse_matpower_str(&text, &name)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Bus,
    Gen,
    Branch,
    GenCost,
    Skip,
}

/// Parses MATPOWER case text under the given case name.
pub fn parse_matpower_str(text: &str, name: &str) -> Result<Network, NetioError> {
    let syntax = |line: usize, msg: String| NetioError::Syntax {
        name: name.to_string(),
        line,
        msg,
    };

    let mut base_mva: Option<f64> = None;
    let mut bus_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut gen_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut branch_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut cost_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut section = Section::None;

    for (lineno, raw_line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = match raw_line.find('%') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }

        if section == Section::None {
            if line.starts_with("function") || line.starts_with("mpc.version") {
                continue;
            }
            if let Some(rest) = line.strip_prefix("mpc.baseMVA") {
                let rest = rest.trim_start().trim_start_matches('=').trim();
                let rest = rest.trim_end_matches(';').trim();
                base_mva = Some(
                    rest.parse::<f64>()
                        .map_err(|_| syntax(lineno, format!("bad baseMVA value `{rest}`")))?,
                );
                continue;
            }
            if let Some(eq) = line.find('=') {
                let lhs = line[..eq].trim();
                let rhs = line[eq + 1..].trim();
                if lhs.starts_with("mpc.") && rhs.starts_with('[') {
                    section = match lhs {
                        "mpc.bus" => Section::Bus,
                        "mpc.gen" => Section::Gen,
                        "mpc.branch" => Section::Branch,
                        "mpc.gencost" => Section::GenCost,
                        _ => Section::Skip,
                    };
                    // rows may start on the same line after `[`
                    let inline = rhs[1..].trim();
                    if !inline.is_empty() && inline != "];" {
                        let (rows, done) = parse_rows(inline, lineno, name, section)?;
                        push_rows(
                            section,
                            rows,
                            &mut bus_rows,
                            &mut gen_rows,
                            &mut branch_rows,
                            &mut cost_rows,
                        );
                        if done {
                            section = Section::None;
                        }
                    } else if inline == "];" {
                        section = Section::None;
                    }
                    continue;
                }
            }
            // other assignments (mpc.gentype etc.) ignored
            continue;
        }

        // inside a matrix section
        if line == "];" {
            section = Section::None;
            continue;
        }
        let (rows, done) = parse_rows(line, lineno, name, section)?;
        push_rows(
            section,
            rows,
            &mut bus_rows,
            &mut gen_rows,
            &mut branch_rows,
            &mut cost_rows,
        );
        if done {
            section = Section::None;
        }
    }

    let base_mva = base_mva.ok_or_else(|| NetioError::MissingSection {
        name: name.to_string(),
        section: "baseMVA".to_string(),
    })?;
    if bus_rows.is_empty() {
        return Err(NetioError::MissingSection {
            name: name.to_string(),
            section: "bus".to_string(),
        });
    }
    if base_mva <= 0.0 {
        return Err(NetioError::Syntax {
            name: name.to_string(),
            line: 0,
            msg: format!("baseMVA must be positive, got {base_mva}"),
        });
    }

    build_network(name, base_mva, bus_rows, gen_rows, branch_rows, cost_rows)
}

/// Rows of a matrix section: (line number, values) per row, plus whether a
/// `];` terminator was seen.
type SectionRows = (Vec<(usize, Vec<f64>)>, bool);

/// Splits a line into `;`-separated rows of floats.
fn parse_rows(
    line: &str,
    lineno: usize,
    name: &str,
    section: Section,
) -> Result<SectionRows, NetioError> {
    let mut done = false;
    let mut text = line;
    if let Some(stripped) = text.strip_suffix("];") {
        done = true;
        text = stripped;
    }
    let mut rows = Vec::new();
    for chunk in text.split(';') {
        let chunk = chunk.trim();
        if chunk.is_empty() {
            continue;
        }
        if section == Section::Skip {
            continue;
        }
        let mut vals = Vec::new();
        for tok in chunk.split_whitespace() {
            let v = tok.parse::<f64>().map_err(|_| NetioError::Syntax {
                name: name.to_string(),
                line: lineno,
                msg: format!("bad numeric token `{tok}`"),
            })?;
            vals.push(v);
        }
        rows.push((lineno, vals));
    }
    Ok((rows, done))
}

fn push_rows(
    section: Section,
    rows: Vec<(usize, Vec<f64>)>,
    bus: &mut Vec<(usize, Vec<f64>)>,
    gen: &mut Vec<(usize, Vec<f64>)>,
    branch: &mut Vec<(usize, Vec<f64>)>,
    cost: &mut Vec<(usize, Vec<f64>)>,
) {
    match section {
        Section::Bus => bus.extend(rows),
        Section::Gen => gen.extend(rows),
        Section::Branch => branch.extend(rows),
        Section::GenCost => cost.extend(rows),
        Section::None | Section::Skip => {}
    }
}

fn build_network(
    name: &str,
    base_mva: f64,
    bus_rows: Vec<(usize, Vec<f64>)>,
    gen_rows: Vec<(usize, Vec<f64>)>,
    branch_rows: Vec<(usize, Vec<f64>)>,
    cost_rows: Vec<(usize, Vec<f64>)>,
) -> Result<Network, NetioError> {
    let nm = || name.to_string();
    let syntax = |line: usize, msg: String| NetioError::Syntax {
        name: name.to_string(),
        line,
        msg,
    };

    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut index = HashMap::new();
    for (line, row) in &bus_rows {
        if row.len() < 13 {
            return Err(syntax(
                *line,
                format!("bus row has {} columns, need 13", row.len()),
            ));
        }
        let id = row[0] as i64;
        let bus_type = match row[1] as i64 {
            1 => BusType::Pq,
            2 => BusType::Pv,
            3 => BusType::Ref,
            t => {
                return Err(NetioError::BadBus {
                    name: nm(),
                    bus: id,
                    msg: format!("unsupported bus type {t}"),
                })
            }
        };
        let (vmax, vmin) = (row[11], row[12]);
        if !(vmin > 0.0 && vmin <= vmax) {
            return Err(NetioError::BadBus {
                name: nm(),
                bus: id,
                msg: format!("voltage bounds [{vmin}, {vmax}] invalid"),
            });
        }
        if index.insert(id, buses.len()).is_some() {
            return Err(NetioError::BadBus {
                name: nm(),
                bus: id,
                msg: "duplicate bus id".to_string(),
            });
        }
        buses.push(Bus {
            id,
            bus_type,
            load: Complex64::new(row[2], row[3]) / base_mva,
            shunt: Complex64::new(row[4], row[5]) / base_mva,
            vmin,
            vmax,
            base_kv: row[9],
            raw: BusRaw {
                pd: row[2],
                qd: row[3],
                gs: row[4],
                bs: row[5],
                area: row[6],
                vm: row[7],
                va: row[8],
                zone: row[10],
            },
        });
    }

    if !buses.iter().any(|b| b.bus_type == BusType::Ref) {
        return Err(NetioError::NoReferenceBus { name: nm() });
    }

    // gencost rows align with gen rows before status filtering; a table with
    // 2·ngen rows carries reactive-power costs in the second half, ignored.
    if !gen_rows.is_empty()
        && cost_rows.len() != gen_rows.len()
        && cost_rows.len() != 2 * gen_rows.len()
    {
        return Err(NetioError::MissingSection {
            name: nm(),
            section: format!(
                "gencost ({} rows for {} generators)",
                cost_rows.len(),
                gen_rows.len()
            ),
        });
    }

    let mut generators = Vec::new();
    for (gi, (line, row)) in gen_rows.iter().enumerate() {
        if row.len() < 10 {
            return Err(syntax(
                *line,
                format!("gen row has {} columns, need 10", row.len()),
            ));
        }
        let bus_id = row[0] as i64;
        let status = row[7] != 0.0;
        if !status {
            continue;
        }
        let bus = *index.get(&bus_id).ok_or(NetioError::UnknownGenBus {
            name: nm(),
            index: gi,
            bus: bus_id,
        })?;
        let (qmax, qmin, pmax, pmin) = (row[3], row[4], row[8], row[9]);
        if pmin > pmax || qmin > qmax {
            return Err(NetioError::BadGenerator {
                name: nm(),
                index: gi,
                bus: bus_id,
                msg: format!("bounds P [{pmin}, {pmax}], Q [{qmin}, {qmax}] out of order"),
            });
        }
        let (cline, cost) = &cost_rows[gi];
        if cost.len() < 4 {
            return Err(syntax(
                *cline,
                format!("gencost row has {} columns, need >= 4", cost.len()),
            ));
        }
        let model = cost[0] as i64;
        if model != 2 {
            return Err(NetioError::UnsupportedCost {
                name: nm(),
                index: gi,
                model,
            });
        }
        let ncost = cost[3] as usize;
        if cost.len() < 4 + ncost {
            return Err(syntax(
                *cline,
                format!(
                    "gencost row declares {ncost} coefficients but has {}",
                    cost.len() - 4
                ),
            ));
        }
        if ncost > 3 {
            return Err(NetioError::UnsupportedCost {
                name: nm(),
                index: gi,
                model: 2,
            });
        }
        // coefficients are listed highest order first
        let coeffs = &cost[4..4 + ncost];
        let (c2, c1, c0) = match ncost {
            0 => (0.0, 0.0, 0.0),
            1 => (0.0, 0.0, coeffs[0]),
            2 => (0.0, coeffs[0], coeffs[1]),
            _ => (coeffs[0], coeffs[1], coeffs[2]),
        };
        generators.push(Generator {
            bus,
            pmin: pmin / base_mva,
            pmax: pmax / base_mva,
            qmin: qmin / base_mva,
            qmax: qmax / base_mva,
            c2,
            c1,
            c0,
            raw: GenRaw {
                pg: row[1],
                qg: row[2],
                vg: row[5],
                mbase: row[6],
                qmax,
                qmin,
                pmax,
                pmin,
                startup: cost[1],
                shutdown: cost[2],
            },
        });
    }

    let mut branches = Vec::new();
    for (bi, (line, row)) in branch_rows.iter().enumerate() {
        if row.len() < 11 {
            return Err(syntax(
                *line,
                format!("branch row has {} columns, need >= 11", row.len()),
            ));
        }
        let (from_id, to_id) = (row[0] as i64, row[1] as i64);
        let status = row[10] != 0.0;
        if !status {
            continue;
        }
        let from = *index.get(&from_id).ok_or(NetioError::UnknownBranchBus {
            name: nm(),
            index: bi,
            bus: from_id,
        })?;
        let to = *index.get(&to_id).ok_or(NetioError::UnknownBranchBus {
            name: nm(),
            index: bi,
            bus: to_id,
        })?;
        if from == to {
            return Err(NetioError::BadBranch {
                name: nm(),
                index: bi,
                from: from_id,
                to: to_id,
                msg: "self-loop branch".to_string(),
            });
        }
        let (r, x, b) = (row[2], row[3], row[4]);
        if r == 0.0 && x == 0.0 {
            return Err(NetioError::BadBranch {
                name: nm(),
                index: bi,
                from: from_id,
                to: to_id,
                msg: "zero series impedance".to_string(),
            });
        }
        let rate_a = row[5];
        if rate_a < 0.0 {
            return Err(NetioError::BadBranch {
                name: nm(),
                index: bi,
                from: from_id,
                to: to_id,
                msg: format!("negative thermal rating {rate_a}"),
            });
        }
        let tap_raw = row[8];
        let tap = if tap_raw == 0.0 { 1.0 } else { tap_raw };
        if tap <= 0.0 {
            return Err(NetioError::BadBranch {
                name: nm(),
                index: bi,
                from: from_id,
                to: to_id,
                msg: format!("non-positive tap ratio {tap_raw}"),
            });
        }
        let shift_deg = row[9];
        let (angmin, angmax) = if row.len() >= 13 {
            (row[11], row[12])
        } else {
            (0.0, 0.0)
        };
        let angle_bounds = if (angmin == 0.0 && angmax == 0.0)
            || (angmin <= -360.0 && angmax >= 360.0)
        {
            None
        } else {
            if angmin > angmax {
                return Err(NetioError::BadBranch {
                    name: nm(),
                    index: bi,
                    from: from_id,
                    to: to_id,
                    msg: format!("angle bounds [{angmin}, {angmax}] out of order"),
                });
            }
            if angmin <= -90.0 || angmax >= 90.0 {
                return Err(NetioError::BadBranch {
                    name: nm(),
                    index: bi,
                    from: from_id,
                    to: to_id,
                    msg: format!(
                        "angle bounds [{angmin}, {angmax}] degrees must lie strictly inside (-90, 90)"
                    ),
                });
            }
            Some((angmin.to_radians(), angmax.to_radians()))
        };
        branches.push(Branch {
            from,
            to,
            r,
            x,
            b,
            tap,
            shift_deg,
            smax: if rate_a > 0.0 {
                Some(rate_a / base_mva)
            } else {
                None
            },
            angle_bounds,
            raw: BranchRaw {
                rate_a,
                rate_b: row[6],
                rate_c: row[7],
                tap: tap_raw,
                angmin,
                angmax,
            },
        });
    }

    Ok(Network {
        name: name.to_string(),
        base_mva,
        buses,
        generators,
        branches,
        index,
    })
}

/// Serializes a network back to MATPOWER text. Out-of-service equipment was
/// dropped at parse time, so everything is written with status 1; original
/// unit values are preserved exactly, making `parse ∘ write ∘ parse`
/// idempotent.
pub fn write_matpower(net: &Network) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "function mpc = {}", net.name);
    let _ = writeln!(out, "mpc.version = '2';");
    let _ = writeln!(out, "mpc.baseMVA = {};", net.base_mva);
    let _ = writeln!(out, "\n%% bus data");
    let _ = writeln!(
        out,
        "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin"
    );
    let _ = writeln!(out, "mpc.bus = [");
    for b in &net.buses {
        let t = match b.bus_type {
            BusType::Pq => 1,
            BusType::Pv => 2,
            BusType::Ref => 3,
        };
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            b.id,
            t,
            b.raw.pd,
            b.raw.qd,
            b.raw.gs,
            b.raw.bs,
            b.raw.area,
            b.raw.vm,
            b.raw.va,
            b.base_kv,
            b.raw.zone,
            b.vmax,
            b.vmin
        );
    }
    let _ = writeln!(out, "];");

    let _ = writeln!(out, "\n%% generator data");
    let _ = writeln!(
        out,
        "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin"
    );
    let _ = writeln!(out, "mpc.gen = [");
    for g in &net.generators {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t1\t{}\t{};",
            net.buses[g.bus].id,
            g.raw.pg,
            g.raw.qg,
            g.raw.qmax,
            g.raw.qmin,
            g.raw.vg,
            g.raw.mbase,
            g.raw.pmax,
            g.raw.pmin
        );
    }
    let _ = writeln!(out, "];");

    let _ = writeln!(out, "\n%% branch data");
    let _ = writeln!(
        out,
        "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax"
    );
    let _ = writeln!(out, "mpc.branch = [");
    for br in &net.branches {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t1\t{}\t{};",
            net.buses[br.from].id,
            net.buses[br.to].id,
            br.r,
            br.x,
            br.b,
            br.raw.rate_a,
            br.raw.rate_b,
            br.raw.rate_c,
            br.raw.tap,
            br.shift_deg,
            br.raw.angmin,
            br.raw.angmax
        );
    }
    let _ = writeln!(out, "];");

    let _ = writeln!(out, "\n%% generator cost data");
    let _ = writeln!(out, "%\tmodel\tstartup\tshutdown\tn\tc2\tc1\tc0");
    let _ = writeln!(out, "mpc.gencost = [");
    for g in &net.generators {
        let _ = writeln!(
            out,
            "\t2\t{}\t{}\t3\t{}\t{}\t{};",
            g.raw.startup, g.raw.shutdown, g.c2, g.c1, g.c0
        );
    }
    let _ = writeln!(out, "];");
    out
}

/// Parses an upper-bound table: UTF-8 lines of `case_name<TAB>objective`,
/// with `#` comments and blank lines ignored.
pub fn parse_upper_bound_table(text: &str, path: &str) -> Result<Vec<(String, f64)>, NetioError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (name, value) = match (parts.next(), parts.next(), parts.next()) {
            (Some(n), Some(v), None) => (n, v),
            _ => {
                return Err(NetioError::BadTable {
                    path: path.to_string(),
                    line: lineno + 1,
                    msg: format!("expected `case_name<TAB>objective`, got `{line}`"),
                })
            }
        };
        let value = value.parse::<f64>().map_err(|_| NetioError::BadTable {
            path: path.to_string(),
            line: lineno + 1,
            msg: format!("bad objective value `{value}`"),
        })?;
        out.push((name.to_string(), value));
    }
    Ok(out)
}

/// Strips the PGLib file-name prefix so `pglib_opf_case14_ieee` and
/// `case14_ieee` refer to the same case.
fn normalize_case_name(name: &str) -> &str {
    name.strip_prefix("pglib_opf_").unwrap_or(name)
}

/// Looks up the reference objective value for a case in an upper-bound table
/// file.
pub fn load_upper_bound(case_name: &str, table_path: impl AsRef<Path>) -> Result<f64, NetioError> {
    let path = table_path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| NetioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let table = parse_upper_bound_table(&text, &path.display().to_string())?;
    let want = normalize_case_name(case_name);
    for (name, value) in &table {
        if normalize_case_name(name) == want {
            return Ok(*value);
        }
    }
    Err(NetioError::MissingUpperBound {
        case: case_name.to_string(),
        path: path.display().to_string(),
    })
}
