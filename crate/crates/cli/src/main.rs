//! `qhc`: file-in/file-out front end for qhc-core.
//!
//! Exit codes: 0 success, 1 the gate does not realize the table, 2 usage or
//! input error, 3 solver non-convergence.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use qhc_core::dynamics::{
    assemble_full, classify_gate, evolve, Readout, DEFAULT_SAMPLES, DEFAULT_THRESHOLD,
};
use qhc_core::gates::{
    charpoly_table, merge, robustness_scan, verify_fixed_energy, verify_multi_energy, CompiledGate, Family,
    GateDescriptor, GateError, ReadingSpec, DEFAULT_TOL, DEFAULT_WEIGHT_MIN,
};
use qhc_core::linalg::SymMatrix;
use qhc_core::logic::TruthTable;
use qhc_core::multiband::{find_intervals, gap_metrics, optimize_me_half_adder, MultibandError};
use qhc_core::schur::{
    adder_readings, count_constraints, polish_full_adder, solve_full_adder, solve_half_adder, CFamily,
    SchurError,
};
use qhc_core::transport::{resonance_peaks, uniform_grid, LeadModel, TransportModel};
use qhc_core::{bits_string, format_num, parse_bits};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "qhc", version, about = "Hamiltonian logic gate construction, verification, synthesis and simulation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// List the built-in gate families, or print one descriptor.
    Catalog(CatalogArgs),
    /// Evaluate a gate Hamiltonian on one input.
    Build(BuildArgs),
    /// Check that a gate realizes a truth table.
    Verify(VerifyArgs),
    /// Characteristic polynomial at a fixed energy on every Boolean input.
    Charpoly(CharpolyArgs),
    /// Merge two families sharing their upper-left block.
    Merge(MergeArgs),
    /// Complete a half adder from a calculating block.
    SolveHa(SolveHaArgs),
    /// Multi-start synthesis of a full adder from a calculating block.
    SolveFa(SolveFaArgs),
    /// Count constraints and unknowns of the n-bit adder ansatz.
    Count(CountArgs),
    /// Spectral gap metrics of a two-input gate.
    Gaps(GapsArgs),
    /// Reading intervals of one output.
    Intervals(IntervalsArgs),
    /// Structural parameter search for the 3-state multi-energy half adder.
    OptimizeHa(OptimizeArgs),
    /// Population dynamics of the gate with its reading pairs.
    Evolve(EvolveArgs),
    /// Read every input through pointer-state oscillations.
    Classify(ClassifyArgs),
    /// Lead-to-lead transmission spectrum of one input.
    Transmission(TransmissionArgs),
    /// Reading-state weight over non-Boolean inputs (α, β) in [0, 1]².
    Scan(ScanArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Output {
    /// Output file; standard output when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// json or csv. Time series, spectra and scans default to csv, the rest to json.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl Output {
    fn format(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }
}

#[derive(Args)]
struct GateArg {
    /// Gate descriptor JSON file, or a built-in name (see `catalog`).
    #[arg(long)]
    gate: String,
}

#[derive(Args)]
struct ReadingArgs {
    /// Reading as OUTPUT:STATE:ENERGY[:EPSILON]; repeatable. Defaults to the descriptor's readings.
    #[arg(long = "reading", value_parser = parse_reading)]
    readings: Vec<ReadingSpec>,
    /// Overrides the coupling of every reading pair (eV).
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct CatalogArgs {
    /// Print only this entry's descriptor, readings included.
    #[arg(long)]
    name: Option<String>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    gate: GateArg,
    /// Input as bits (`011`) or comma-separated reals (`0.5,1`).
    #[arg(long)]
    input: String,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    gate: GateArg,
    /// Truth table JSON file or built-in name; defaults to the gate's own table.
    #[arg(long)]
    table: Option<String>,
    /// Reads every output at this energy. Without it each reading keeps its own energy.
    #[arg(long, allow_hyphen_values = true)]
    energy: Option<f64>,
    #[command(flatten)]
    readings: ReadingArgs,
    #[arg(long, default_value_t = DEFAULT_WEIGHT_MIN)]
    weight_min: f64,
    /// Eigenvalue tolerance around the reading energy.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct CharpolyArgs {
    #[command(flatten)]
    gate: GateArg,
    #[arg(long)]
    table: Option<String>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    energy: f64,
    #[arg(long, default_value_t = 1e-9)]
    rel_tol: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct MergeArgs {
    #[arg(long)]
    first: String,
    #[arg(long)]
    second: String,
    /// Size of the shared upper-left block.
    #[arg(long)]
    shared: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct CalcBlock {
    #[command(flatten)]
    gate: GateArg,
    /// Number of leading states forming the calculating block; all states when absent.
    #[arg(long)]
    calc_order: Option<usize>,
}

#[derive(Args)]
struct SolveHaArgs {
    #[command(flatten)]
    calc: CalcBlock,
    /// Free values v̂₁,v̂₃,û₁.
    #[arg(long, default_value = "1,1,1", value_parser = parse_list::<3>, allow_hyphen_values = true)]
    free: [f64; 3],
    /// Output scales r,s.
    #[arg(long, default_value = "1,1", value_parser = parse_list::<2>, allow_hyphen_values = true)]
    scale: [f64; 2],
    /// Also write the completed gate as a descriptor.
    #[arg(long)]
    emit_gate: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SolveFaArgs {
    #[command(flatten)]
    calc: CalcBlock,
    #[arg(long, default_value_t = 200)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Instead of multi-starting, refine from the gate's own last two columns.
    #[arg(long)]
    polish: bool,
    /// JSONL log, one record per seed.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Write the first solution as a gate descriptor.
    #[arg(long)]
    emit_gate: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct CountArgs {
    /// Adder width in bits.
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Include the per-class breakdown.
    #[arg(long)]
    detail: bool,
}

#[derive(Args)]
struct GapsArgs {
    #[arg(long, default_value = "me_half_adder3")]
    gate: String,
    /// Sweep this structural parameter over --range.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long, default_value = "-1,1", value_parser = parse_range, allow_hyphen_values = true)]
    range: (f64, f64),
    #[arg(long, default_value_t = 201)]
    n: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct IntervalsArgs {
    #[command(flatten)]
    gate: GateArg,
    #[arg(long)]
    table: Option<String>,
    #[arg(long, default_value_t = 0)]
    output_index: usize,
    /// Attach state; defaults to the state of the descriptor's reading for this output.
    #[arg(long)]
    attach_state: Option<usize>,
    #[arg(long, default_value = "-3,3", value_parser = parse_range, allow_hyphen_values = true)]
    range: (f64, f64),
    #[arg(long, default_value_t = 2001)]
    grid_n: usize,
    #[arg(long, default_value_t = DEFAULT_WEIGHT_MIN)]
    weight_min: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long, default_value = "-1,1", value_parser = parse_range, allow_hyphen_values = true)]
    range: (f64, f64),
    #[arg(long, default_value_t = 201)]
    n: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct EvolveArgs {
    #[command(flatten)]
    gate: GateArg,
    /// Input as bits or comma-separated reals.
    #[arg(long)]
    input: String,
    #[command(flatten)]
    readings: ReadingArgs,
    /// Initially occupied state; defaults to the first pointer state of the first pair.
    #[arg(long)]
    initial: Option<usize>,
    /// Time window (ps).
    #[arg(long, default_value_t = 20.0)]
    t_max: f64,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    gate: GateArg,
    #[arg(long)]
    table: Option<String>,
    #[command(flatten)]
    readings: ReadingArgs,
    /// joint: all pairs attached at once; isolated: one pair per simulation.
    #[arg(long, default_value = "joint")]
    readout: Readout,
    #[arg(long, default_value_t = 20.0)]
    t_max: f64,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct TransmissionArgs {
    #[command(flatten)]
    gate: GateArg,
    #[arg(long)]
    input: String,
    /// Lead attach state; defaults to the state of the descriptor's first reading.
    #[arg(long)]
    attach_state: Option<usize>,
    /// Lead hopping (eV).
    #[arg(long, default_value_t = qhc_core::transport::DEFAULT_HOPPING)]
    hopping: f64,
    /// Lead-to-gate coupling (eV).
    #[arg(long, default_value_t = qhc_core::transport::DEFAULT_LEAD_COUPLING)]
    coupling: f64,
    #[arg(long, default_value = "-3,3", value_parser = parse_range, allow_hyphen_values = true)]
    range: (f64, f64),
    #[arg(long, default_value_t = qhc_core::transport::DEFAULT_GRID.2)]
    n: usize,
    /// Peaks above this value are listed in JSON output.
    #[arg(long, default_value_t = 0.5)]
    peak_min: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    gate: GateArg,
    #[command(flatten)]
    readings: ReadingArgs,
    /// Which reading of the descriptor to scan.
    #[arg(long, default_value_t = 0)]
    reading_index: usize,
    #[arg(long, default_value_t = 101)]
    grid_n: usize,
    /// Eigenvalue tolerance around the reading energy.
    #[arg(long, default_value_t = 1e-2)]
    tol: f64,
    #[command(flatten)]
    output: Output,
}

/// Solver ran but found nothing; maps to exit code 3.
#[derive(Debug)]
struct NonConvergence(String);

impl fmt::Display for NonConvergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "no convergence: {}", self.0)
    }
}

impl std::error::Error for NonConvergence {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.is::<NonConvergence>() { 3 } else { 2 })
        }
    }
}

fn run(cmd: Cmd) -> Result<u8> {
    match cmd {
        Cmd::Catalog(a) => catalog(a),
        Cmd::Build(a) => build(a),
        Cmd::Verify(a) => verify(a),
        Cmd::Charpoly(a) => charpoly(a),
        Cmd::Merge(a) => merge_cmd(a),
        Cmd::SolveHa(a) => solve_ha(a),
        Cmd::SolveFa(a) => solve_fa(a),
        Cmd::Count(a) => count(a),
        Cmd::Gaps(a) => gaps(a),
        Cmd::Intervals(a) => intervals(a),
        Cmd::OptimizeHa(a) => optimize(a),
        Cmd::Evolve(a) => evolve_cmd(a),
        Cmd::Classify(a) => classify(a),
        Cmd::Transmission(a) => transmission(a),
        Cmd::Scan(a) => scan(a),
    }
}

// ---- input helpers

fn parse_reading(s: &str) -> Result<ReadingSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if !(3..=4).contains(&parts.len()) {
        return Err("expected OUTPUT:STATE:ENERGY[:EPSILON]".into());
    }
    let output = parts[0].parse().map_err(|e| format!("output: {e}"))?;
    let state = parts[1].parse().map_err(|e| format!("state: {e}"))?;
    let energy = parts[2].parse().map_err(|e| format!("energy: {e}"))?;
    let mut r = ReadingSpec::new(output, state, energy);
    if let Some(eps) = parts.get(3) {
        r = r.with_epsilon(eps.parse().map_err(|e| format!("epsilon: {e}"))?);
    }
    Ok(r)
}

fn parse_list<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| format!("expected {N} comma-separated numbers"))
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if !(lo < hi) {
        return Err("LO must be below HI".into());
    }
    Ok((lo, hi))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&s).with_context(|| format!("parsing {}", path.display()))
}

fn load_gate(spec: &str) -> Result<GateDescriptor> {
    let p = Path::new(spec);
    if p.is_file() {
        return read_json(p);
    }
    GateDescriptor::builtin(spec).map_err(|e| anyhow!("`{spec}` is neither a file nor a built-in gate: {e}"))
}

fn load_table(spec: Option<&str>, d: &GateDescriptor) -> Result<TruthTable> {
    match spec {
        None => d.default_table().ok_or_else(|| anyhow!("gate has no default table; pass --table")),
        Some(s) if Path::new(s).is_file() => read_json(Path::new(s)),
        Some(s) => Ok(TruthTable::builtin(s)?),
    }
}

fn resolve_readings(d: &GateDescriptor, r: &ReadingArgs) -> Result<Vec<ReadingSpec>> {
    let mut out = if r.readings.is_empty() { d.readings()? } else { r.readings.clone() };
    if let Some(eps) = r.epsilon {
        out = out.into_iter().map(|x| x.with_epsilon(eps)).collect();
    }
    Ok(out)
}

/// Bits (`01`) or comma-separated reals.
fn parse_input(s: &str, arity: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = if s.contains(',') {
        s.split(',').map(|x| x.trim().parse::<f64>()).collect::<Result<_, _>>()?
    } else {
        parse_bits(s).ok_or_else(|| anyhow!("bad input `{s}`"))?.into_iter().map(f64::from).collect()
    };
    if vals.len() != arity {
        bail!("input `{s}` has {} values, gate takes {arity}", vals.len());
    }
    Ok(vals)
}

fn build_input(g: &CompiledGate, s: &str) -> Result<SymMatrix> {
    Ok(g.build(&parse_input(s, g.arity)?)?)
}

fn calc_family(c: &CalcBlock) -> Result<(GateDescriptor, CompiledGate, CFamily)> {
    let d = load_gate(&c.gate.gate)?;
    let g = d.compile()?;
    let cf = match c.calc_order {
        None => CFamily::from_gate(&g),
        Some(m) => {
            if m == 0 || m > g.order() {
                bail!("--calc-order must be in 1..={}", g.order());
            }
            let idx: Vec<usize> = (0..m).collect();
            CFamily::new(g.arity, (0..1usize << g.arity).map(|r| g.build_row(r).principal(&idx)).collect())?
        }
    };
    Ok((d, g, cf))
}

// ---- output helpers

fn descriptor_hash(d: &GateDescriptor) -> String {
    let json = serde_json::to_string(d).expect("descriptor serializes");
    Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn emit(out: &Output, body: &[u8]) -> Result<()> {
    match &out.out {
        Some(p) => fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(body)?;
            Ok(())
        }
    }
}

fn json<T: Serialize + ?Sized>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

/// CSV with `# key=value` comment lines ahead of the header.
fn csv_table(meta: &[(&str, String)], header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for (k, v) in meta {
        buf.extend_from_slice(format!("# {k}={v}\n").as_bytes());
    }
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| anyhow!("{e}"))
}

fn strings<const N: usize>(h: [&str; N]) -> Vec<String> {
    h.iter().map(|s| s.to_string()).collect()
}

// ---- subcommands

#[derive(Serialize)]
struct CatalogEntry {
    name: String,
    hash: String,
    order: usize,
    arity: usize,
    descriptor: GateDescriptor,
    table: Option<TruthTable>,
}

fn catalog_names() -> Vec<String> {
    let mut v: Vec<String> =
        Family::ALL.iter().filter(|f| **f != Family::Custom).map(|f| f.name().to_string()).collect();
    v.extend(["and3", "or3", "nand3", "nor3", "nxor3"].map(String::from));
    v
}

fn with_readings(d: GateDescriptor) -> Result<GateDescriptor> {
    let r = d.readings()?;
    Ok(d.with_readings(r))
}

fn catalog(a: CatalogArgs) -> Result<u8> {
    if let Some(name) = &a.name {
        let d = with_readings(GateDescriptor::builtin(name)?)?;
        emit(&a.output, &json(&d)?)?;
        return Ok(0);
    }
    let entries = catalog_names()
        .into_iter()
        .map(|name| {
            let d = with_readings(GateDescriptor::builtin(&name)?)?;
            let g = d.compile()?;
            Ok(CatalogEntry {
                hash: descriptor_hash(&d),
                order: g.order(),
                arity: g.arity,
                table: d.default_table(),
                descriptor: d,
                name,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let body = match a.output.format(Format::Json) {
        Format::Json => json(&entries)?,
        Format::Csv => csv_table(
            &[],
            &strings(["name", "family", "order", "arity", "hash"]),
            &entries
                .iter()
                .map(|e| {
                    vec![e.name.clone(), e.descriptor.family.to_string(), e.order.to_string(), e.arity.to_string(), e.hash.clone()]
                })
                .collect::<Vec<_>>(),
        )?,
    };
    emit(&a.output, &body)?;
    Ok(0)
}

fn build(a: BuildArgs) -> Result<u8> {
    let d = load_gate(&a.gate.gate)?;
    let h = build_input(&d.compile()?, &a.input)?;
    let body = match a.output.format(Format::Json) {
        Format::Json => json(&serde_json::json!({ "input": a.input, "hash": descriptor_hash(&d), "matrix": h.rows() }))?,
        Format::Csv => csv_table(
            &[("input", a.input.clone()), ("descriptor_sha256", descriptor_hash(&d))],
            &(0..h.order()).map(|j| format!("c{j}")).collect::<Vec<_>>(),
            &h.rows().iter().map(|r| r.iter().map(|x| format_num(*x)).collect()).collect::<Vec<_>>(),
        )?,
    };
    emit(&a.output, &body)?;
    Ok(0)
}

fn verify(a: VerifyArgs) -> Result<u8> {
    let d = load_gate(&a.gate.gate)?;
    let t = load_table(a.table.as_deref(), &d)?;
    let mut readings = resolve_readings(&d, &a.readings)?;
    let rep = match a.energy {
        Some(e) => {
            readings.iter_mut().for_each(|r| r.energy = e);
            match verify_fixed_energy(&d, &t, &readings, a.weight_min, a.tol) {
                Ok(rep) => rep,
                // a degenerate eigenspace at the reading energy is a failed realization
                Err(GateError::AmbiguousKernel { .. }) => {
                    let mut rep = verify_multi_energy(&d, &t, &readings, a.weight_min, a.tol)?;
                    rep.records.iter_mut().for_each(|r| r.ok &= !r.ambiguous);
                    rep.pass = false;
                    rep
                }
                Err(e) => return Err(e.into()),
            }
        }
        None => verify_multi_energy(&d, &t, &readings, a.weight_min, a.tol)?,
    };
    let body = match a.output.format(Format::Json) {
        Format::Json => json(&rep)?,
        Format::Csv => csv_table(
            &[("descriptor_sha256", descriptor_hash(&d))],
            &strings(["input", "expected", "decided", "kernel_dim", "ambiguous", "ok"]),
            &rep.records
                .iter()
                .map(|r| {
                    vec![
                        r.input.clone(),
                        bits_string(&r.expected),
                        bits_string(&r.decided),
                        r.kernel_dim.to_string(),
                        r.ambiguous.to_string(),
                        r.ok.to_string(),
                    ]
                })
                .collect::<Vec<_>>(),
        )?,
    };
    emit(&a.output, &body)?;
    for f in rep.failures() {
        eprintln!(
            "input {}: expected {} decided {}{}",
            f.input,
            bits_string(&f.expected),
            bits_string(&f.decided),
            if f.ambiguous { " (ambiguous)" } else { "" }
        );
    }
    Ok(if rep.pass { 0 } else { 1 })
}

fn charpoly(a: CharpolyArgs) -> Result<u8> {
    let d = load_gate(&a.gate.gate)?;
    let t = load_table(a.table.as_deref(), &d)?;
    let ct = charpoly_table(&d, &t, a.energy, a.rel_tol)?;
    let body = match a.output.format(Format::Json) {
        Format::Json => json(&ct)?,
        Format::Csv => csv_table(
            &[
                ("energy", format_num(ct.energy)),
                ("constant", format_num(ct.constant)),
                ("proportional", ct.proportional.to_string()),
                ("descriptor_sha256", descriptor_hash(&d)),
            ],
            &strings(["input", "value"]),
            &ct.values.iter().map(|(i, v)| vec![i.clone(), format_num(*v)]).collect::<Vec<_>>(),
        )?,
    };
    emit(&a.output, &body)?;
    Ok(0)
}

fn merge_cmd(a: MergeArgs) -> Result<u8> {
    let m = merge(&load_gate(&a.first)?, &load_gate(&a.second)?, a.shared)?;
    emit(&a.output, &json(&m)?)?;
    Ok(0)
}

fn schur_fail(e: SchurError) -> anyhow::Error {
    match e {
        SchurError::NoConvergence
        | SchurError::NoRealRoot
        | SchurError::SingularT
        | SchurError::DegenerateKernel(_)
        | SchurError::ValidationFailed(_)
        | SchurError::QrsDegenerate => {
            NonConvergence(e.to_string()).into()
        }
        other => other.into(),
    }
}

fn solve_ha(a: SolveHaArgs) -> Result<u8> {
    let (_, _, cf) = calc_family(&a.calc)?;
    let sol = solve_half_adder(&cf, (a.free[0], a.free[1], a.free[2]), (a.scale[0], a.scale[1])).map_err(schur_fail)?;
    if let Some(p) = &a.emit_gate {
        let d = sol.partition.to_descriptor()?.with_readings(adder_readings(cf.order()));
        fs::write(p, json(&d)?)?;
    }
    emit(&a.output, &json(&sol)?)?;
    Ok(0)
}

fn solve_fa(a: SolveFaArgs) -> Result<u8> {
    let (_, g, cf) = calc_family(&a.calc)?;
    let m = cf.order();
    let solutions = if a.polish {
        if g.order() != m + 2 {
            bail!("--polish needs a gate with exactly two states beyond the calculating block");
        }
        let h = g.build_row(0);
        let u: Vec<f64> = (0..m).map(|i| h.get(i, m)).collect();
        let v: Vec<f64> = (0..m).map(|i| h.get(i, m + 1)).collect();
        vec![polish_full_adder(&cf, &u, &v).map_err(schur_fail)?]
    } else {
        let run = solve_full_adder(&cf, a.seeds, a.seed).map_err(schur_fail)?;
        if let Some(p) = &a.log {
            let mut buf = Vec::new();
            run.write_jsonl(&mut buf)?;
            fs::write(p, buf).with_context(|| format!("writing {}", p.display()))?;
        }
        run.solutions
    };
    let Some(first) = solutions.first() else {
        return Err(NonConvergence(format!("no validated full adder from {} seeds", a.seeds)).into());
    };
    if let Some(p) = &a.emit_gate {
        let d = first.partition.to_descriptor()?.with_readings(adder_readings(m));
        fs::write(p, json(&d)?)?;
    }
    emit(&a.output, &json(&solutions)?)?;
    Ok(0)
}

fn count(a: CountArgs) -> Result<u8> {
    if a.n == 0 {
        bail!("--n must be at least 1");
    }
    let c = count_constraints(a.n);
    let mut s = if a.detail {
        serde_json::to_string(&c)?
    } else {
        serde_json::to_string(&serde_json::json!({ "equations": c.equations, "variables": c.variables }))?
    };
    s.push('\n');
    print!("{s}");
    Ok(0)
}

fn gaps(a: GapsArgs) -> Result<u8> {
    let d = load_gate(&a.gate)?;
    let rows: Vec<(Option<f64>, f64, f64)> = match &a.sweep {
        None => {
            let (d1, d2) = gap_metrics(&d)?;
            vec![(None, d1, d2)]
        }
        Some(p) => {
            if !d.params.contains_key(p) {
                bail!("gate has no parameter `{p}`");
            }
            if a.n < 2 {
                bail!("--n must be at least 2");
            }
            uniform_grid(a.range.0, a.range.1, a.n)
                .into_iter()
                .map(|x| {
                    let mut dx = d.clone();
                    dx.params.insert(p.clone(), x);
                    let (d1, d2) = gap_metrics(&dx)?;
                    Ok((Some(x), d1, d2))
                })
                .collect::<Result<_>>()?
        }
    };
    let name = a.sweep.clone().unwrap_or_else(|| "param".into());
    let body = match a.output.format(Format::Json) {
        Format::Json => {
            let v: Vec<_> = rows
                .iter()
                .map(|(x, d1, d2)| match x {
                    Some(x) => serde_json::json!({ name.as_str(): x, "delta1": d1, "delta2": d2 }),
                    None => serde_json::json!({ "delta1": d1, "delta2": d2 }),
                })
                .collect();
            if a.sweep.is_none() { json(&v[0])? } else { json(&v)? }
        }
        Format::Csv => csv_table(
            &[("descriptor_sha256", descriptor_hash(&d))],
            &[name.clone(), "delta1".into(), "delta2".into()],
            &rows
                .iter()
                .map(|(x, d1, d2)| vec![x.map(format_num).unwrap_or_default(), format_num(*d1), format_num(*d2)])
                .collect::<Vec<_>>(),
        )?,
    };
    emit(&a.output, &body)?;
    Ok(0)
}

fn intervals(a: IntervalsArgs) -> Result<u8> {
    let d = load_gate(&a.gate.gate)?;
    let t = load_table(a.table.as_deref(), &d)?;
    let attach = match a.attach_state {
        Some(s) => s,
        None => d
            .readings()?
            .iter()
            .find(|r| r.output == a.output_index)
            .map(|r| r.state)
            .ok_or_else(|| anyhow!("no reading for output {}; pass --attach-state", a.output_index))?,
    };
    let ivs = match find_intervals(&d, &t, a.output_index, attach, a.range, a.grid_n, a.weight_min) {
        Ok(v) => v,
        Err(e @ MultibandError::NoInterval { .. }) => {
            eprintln!("{e}");
            emit(&a.output, b"[]\n")?;
            return Ok(1);
        }
        Err(e) => return Err(e.into()),
    };
    let body = match a.output.format(Format::Json) {
        Format::Json => json(&ivs)?,
        Format::Csv => csv_table(
            &[("attach_state", attach.to_string()), ("descriptor_sha256", descriptor_hash(&d))],
            &strings(["output_index", "lo", "hi", "midpoint", "min_weight"]),
            &ivs.iter()
                .map(|iv| {
                    vec![
                        iv.output_index.to_string(),
                        format_num(iv.lo),
                        format_num(iv.hi),
                        format_num(iv.midpoint()),
                        format_num(iv.min_weight),
                    ]
                })
                .collect::<Vec<_>>(),
        )?,
    };
    emit(&a.output, &body)?;
    Ok(0)
}

fn optimize(a: OptimizeArgs) -> Result<u8> {
    if a.n < 2 {
        bail!("--n must be at least 2");
    }
    let opt = optimize_me_half_adder(&uniform_grid(a.range.0, a.range.1, a.n))?;
    let body = match a.output.format(Format::Json) {
        Format::Json => json(&opt)?,
        Format::Csv => csv_table(
            &[("best_e", format_num(opt.best.e))],
            &strings(["e", "delta1", "delta2", "energy_and", "weight_and", "energy_xor", "weight_xor", "feasible"]),
            &opt.points
                .iter()
                .map(|p| {
                    [p.e, p.delta1, p.delta2, p.energy_and, p.weight_and, p.energy_xor, p.weight_xor]
                        .iter()
                        .map(|x| format_num(*x))
                        .chain([p.feasible.to_string()])
                        .collect()
                })
                .collect::<Vec<_>>(),
        )?,
    };
    emit(&a.output, &body)?;
    Ok(0)
}

fn evolve_cmd(a: EvolveArgs) -> Result<u8> {
    let d = load_gate(&a.gate.gate)?;
    let h0 = build_input(&d.compile()?, &a.input)?;
    let readings = resolve_readings(&d, &a.readings)?;
    let sys = assemble_full(&h0, &readings)?;
    let initial = a.initial.unwrap_or(sys.pairs[0].a);
    let series = evolve(&sys, initial, a.t_max, a.samples)?;
    let meta = serde_json::json!({
        "input": a.input,
        "initial_state": initial,
        "t_max_ps": a.t_max,
        "samples": a.samples,
        "pairs": sys.pairs,
        "descriptor_sha256": descriptor_hash(&d),
        "max_norm_error": series.max_norm_error(),
    });
    let body = match a.output.format(Format::Csv) {
        Format::Json => json(&serde_json::json!({ "meta": meta, "series": series }))?,
        Format::Csv => {
            let mut buf = Vec::new();
            series.write_csv(&mut buf)?;
            if let Some(p) = &a.output.out {
                let side = PathBuf::from(format!("{}.meta.json", p.display()));
                fs::write(&side, json(&meta)?).with_context(|| format!("writing {}", side.display()))?;
            }
            buf
        }
    };
    emit(&a.output, &body)?;
    Ok(0)
}

fn classify(a: ClassifyArgs) -> Result<u8> {
    let d = load_gate(&a.gate.gate)?;
    let g = d.compile()?;
    let t = match &a.table {
        Some(_) => Some(load_table(a.table.as_deref(), &d)?),
        None => d.default_table(),
    };
    let readings = resolve_readings(&d, &a.readings)?;
    if let Some(t) = &t {
        if t.k() != g.arity || readings.iter().any(|r| r.output >= t.l()) {
            bail!("table shape {}x{} does not match the gate's inputs and readings", t.k(), t.l());
        }
    }
    let res = classify_gate(&g, &readings, a.readout, a.t_max, a.threshold, a.samples)?;
    let expected = |i: usize| -> Option<Vec<u8>> {
        t.as_ref().map(|t| readings.iter().map(|r| t.output(i, r.output)).collect())
    };
    let ok = res.iter().enumerate().all(|(i, c)| expected(i).is_none_or(|e| e == c.bits));
    let body = match a.output.format(Format::Json) {
        Format::Json => json(&serde_json::json!({ "inputs": res, "pass": ok }))?,
        Format::Csv => {
            let mut header = vec!["input".to_string()];
            header.extend((0..readings.len()).map(|j| format!("transfer_{j}")));
            header.extend(strings(["bits", "expected"]));
            let rows: Vec<Vec<String>> = res
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let mut r = vec![c.input.clone()];
                    r.extend(c.transfers.iter().map(|x| format_num(*x)));
                    r.push(bits_string(&c.bits));
                    r.push(expected(i).map(|e| bits_string(&e)).unwrap_or_default());
                    r
                })
                .collect();
            csv_table(&[("descriptor_sha256", descriptor_hash(&d))], &header, &rows)?
        }
    };
    emit(&a.output, &body)?;
    if !ok {
        for (i, c) in res.iter().enumerate() {
            if let Some(e) = expected(i).filter(|e| *e != c.bits) {
                eprintln!("input {}: expected {} read {}", c.input, bits_string(&e), bits_string(&c.bits));
            }
        }
    }
    Ok(if ok { 0 } else { 1 })
}

fn transmission(a: TransmissionArgs) -> Result<u8> {
    let d = load_gate(&a.gate.gate)?;
    let g = d.compile()?;
    let h0 = build_input(&g, &a.input)?;
    let attach = match a.attach_state {
        Some(s) => s,
        None => d.readings()?.first().map(|r| r.state).ok_or_else(|| anyhow!("pass --attach-state"))?,
    };
    if a.n < 2 {
        bail!("--n must be at least 2");
    }
    let model = TransportModel::new(h0, attach, LeadModel::new(a.hopping, a.coupling)?)?;
    let label = a.input.clone();
    let ts = model.spectrum(&uniform_grid(a.range.0, a.range.1, a.n), &label)?;
    let body = match a.output.format(Format::Csv) {
        Format::Json => {
            let peaks = resonance_peaks(&ts, a.peak_min)?;
            json(&serde_json::json!({
                "hopping": a.hopping,
                "coupling": a.coupling,
                "attach_state": attach,
                "descriptor_sha256": descriptor_hash(&d),
                "peaks": peaks,
                "spectrum": ts,
            }))?
        }
        Format::Csv => {
            let mut buf = Vec::new();
            for (k, v) in [
                ("input", label.clone()),
                ("h", format_num(a.hopping)),
                ("epsilon", format_num(a.coupling)),
                ("attach_state", attach.to_string()),
                ("descriptor_sha256", descriptor_hash(&d)),
            ] {
                buf.extend_from_slice(format!("# {k}={v}\n").as_bytes());
            }
            ts.write_csv(&mut buf)?;
            buf
        }
    };
    emit(&a.output, &body)?;
    Ok(0)
}

fn scan(a: ScanArgs) -> Result<u8> {
    let d = load_gate(&a.gate.gate)?;
    let readings = resolve_readings(&d, &a.readings)?;
    let r = readings
        .get(a.reading_index)
        .ok_or_else(|| anyhow!("reading index {} out of range ({} readings)", a.reading_index, readings.len()))?;
    let field = robustness_scan(&d, r, a.grid_n, a.tol)?;
    let step = 1.0 / (a.grid_n - 1) as f64;
    let body = match a.output.format(Format::Csv) {
        Format::Json => json(&serde_json::json!({ "reading": r, "grid_n": a.grid_n, "field": field }))?,
        Format::Csv => {
            let rows: Vec<Vec<String>> = field
                .iter()
                .enumerate()
                .flat_map(|(i, row)| {
                    row.iter()
                        .enumerate()
                        .map(move |(j, w)| vec![format_num(i as f64 * step), format_num(j as f64 * step), format_num(*w)])
                })
                .collect();
            csv_table(
                &[
                    ("state", r.state.to_string()),
                    ("energy", format_num(r.energy)),
                    ("tol", format_num(a.tol)),
                    ("descriptor_sha256", descriptor_hash(&d)),
                ],
                &strings(["alpha", "beta", "weight"]),
                &rows,
            )?
        }
    };
    emit(&a.output, &body)?;
    Ok(0)
}
