//! `percolab`: batch experiments on planar Poisson Boolean models.
//!
//! Every subcommand produces one JSON document echoing all parameters that
//! affect results, plus a table. With `--out <stem>` the table goes to
//! `<stem>.csv` and the document to `<stem>.json` and stdout lists the two
//! paths; otherwise the document, table included, is printed to stdout.
//!
//! Exit codes: 0 success, 1 usage or other error, 2 window insufficient,
//! 3 divergent moment.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use percolab::connectivity::{DiscGraph, LatticeBox, Phase, MAX_DEPTH};
use percolab::estimators::{
    coverage, decay_profile, dependence_test, dual_threshold, e_event_profile, mc_estimate, paired_estimate,
    peierls_profile, poisson_gof, replicate, Event, ThresholdParams,
};
use percolab::sampler::fmt_f64;
use percolab::topology::{
    escape_grid_oracle, extract_necklace_with, second_radius, surrounding_component, validate_necklace, Pruning,
};
use percolab::{sample_configuration, Boundary, Error, Law, Point, Quantity, Rect};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "percolab", version, about = "Poisson Boolean percolation lab")]
struct Cli {
    /// worker threads (default: all cores); never changes results
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// human-readable progress on stderr
    #[arg(long, global = true)]
    progress: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one configuration. CSV: cx,cy,radius
    Sample(SampleArgs),
    /// Estimate a left-right crossing of [0,l]x[0,aspect*l].
    /// CSV: lambda,phase,ell,aspect,n,successes,p_hat,ci_low,ci_high[,grid_agree]
    Cross(CrossArgs),
    /// Occupied and vacant thresholds from one bank of replicates.
    /// CSV: event,step,lambda,n,successes,p_hat,ci_low,ci_high
    Threshold(ThresholdArgs),
    /// Arm-event decay profile with a log-linear fit.
    /// CSV: big_l,ratio,n,successes,p_hat,ci_low,ci_high,fitted
    Decay(DecayArgs),
    /// Grid event E_l(L) profile. CSV: big_l,outer,n,successes,p_hat,ci_low,ci_high
    Eevent(EEventArgs),
    /// Detect, extract and validate a necklace around B(0,L).
    /// CSV: index,cx,cy,radius
    Necklace(NecklaceArgs),
    /// Closed-form tables. CSV: quantity,r,s,big_l,lambda,value
    Formulas(FormulasArgs),
    /// Chi-square fit of large-disc counts to Poisson(nu).
    /// CSV: lo,hi,observed,expected
    Gof(GofArgs),
    /// Renormalized field X and its dependence on lattice distance.
    /// CSV: distance,r,z
    Renorm(RenormArgs),
    /// Vacant fraction against the void probability.
    /// CSV: pad,mean,sigma,configs,probes,void_probability
    Coverage(CoverageArgs),
}

#[derive(Args, Serialize)]
struct Common {
    /// radius law, e.g. dirac:z=1, pareto:alpha=3,zmin=1, sliced:dirac:z=1
    #[arg(long, value_parser = parse_law)]
    law: Law,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// output stem for <stem>.csv and <stem>.json
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

fn parse_law(s: &str) -> Result<Law, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum PhaseArg {
    Occupied,
    Vacant,
}

impl From<PhaseArg> for Phase {
    fn from(p: PhaseArg) -> Phase {
        match p {
            PhaseArg::Occupied => Phase::Occupied,
            PhaseArg::Vacant => Phase::Vacant,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum BoundaryArg {
    Padded,
    Explicit,
    Hitting,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum PruningArg {
    LargestFirst,
    SmallestFirst,
}

#[derive(Args, Serialize)]
struct SampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long)]
    lambda: f64,
    /// window [0,width]x[0,height]
    #[arg(long, default_value_t = 10.0)]
    width: f64,
    #[arg(long, default_value_t = 10.0)]
    height: f64,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Padded)]
    boundary: BoundaryArg,
    /// tolerance on the expected number of missed discs (padded mode)
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// pad width (explicit mode)
    #[arg(long, default_value_t = 0.0)]
    pad: f64,
}

#[derive(Args, Serialize)]
struct CrossArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// one or more intensities, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    lambda: Vec<f64>,
    #[arg(long = "l")]
    ell: f64,
    #[arg(long, default_value_t = 3.0)]
    aspect: f64,
    #[arg(long, value_enum, default_value_t = PhaseArg::Occupied)]
    phase: PhaseArg,
    #[arg(long, default_value_t = 400)]
    n: u64,
    /// also evaluate the raster oracle at this pitch and count agreements
    #[arg(long)]
    grid_h: Option<f64>,
}

#[derive(Args, Serialize)]
struct ThresholdArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long = "l")]
    ell: f64,
    #[arg(long, default_value_t = 3.0)]
    aspect: f64,
    #[arg(long, default_value_t = 0.5)]
    target: f64,
    #[arg(long, default_value_t = 400)]
    n: u64,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// upper end of the initial bracket
    #[arg(long)]
    lambda_hi: Option<f64>,
    /// double n until the Wilson width at the root is at most this
    #[arg(long)]
    ci_target: Option<f64>,
    #[arg(long, default_value_t = 6400)]
    max_n: u64,
}

#[derive(Args, Serialize)]
struct DecayArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long)]
    lambda: f64,
    #[arg(long = "l")]
    ell: f64,
    /// outer radii L, increasing, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    big_l: Vec<f64>,
    /// keep only discs of radius at most this
    #[arg(long)]
    cap: Option<f64>,
    #[arg(long, default_value_t = 400)]
    n: u64,
    /// also tabulate the pearl bound with this decay constant
    #[arg(long)]
    c_fit: Option<f64>,
}

#[derive(Args, Serialize)]
struct EEventArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long)]
    lambda: f64,
    #[arg(long = "l")]
    ell: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    big_l: Vec<f64>,
    /// sites are scanned up to outer_factor * L
    #[arg(long, default_value_t = 2.0)]
    outer_factor: f64,
    #[arg(long, default_value_t = 200)]
    n: u64,
}

#[derive(Args, Serialize)]
struct NecklaceArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    big_l: f64,
    /// window Λ(0, half)
    #[arg(long, default_value_t = 32.0)]
    half: f64,
    /// replicate index within the seed's stream
    #[arg(long, default_value_t = 0)]
    index: u64,
    #[arg(long, value_enum, default_value_t = PruningArg::LargestFirst)]
    pruning: PruningArg,
    /// raster pitch for the topological checks
    #[arg(long, default_value_t = 0.05)]
    grid_h: f64,
}

#[derive(Args, Serialize)]
struct FormulasArgs {
    #[arg(long, value_parser = parse_law)]
    law: Law,
    #[arg(long, value_delimiter = ',')]
    r: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    s: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, value_delimiter = ',')]
    big_l: Vec<f64>,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct GofArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    r: f64,
    #[arg(long)]
    s: f64,
    #[arg(long, default_value_t = 2000)]
    n: u64,
}

#[derive(Args, Serialize)]
struct RenormArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long)]
    lambda: f64,
    #[arg(long = "l")]
    ell: f64,
    #[arg(long, value_delimiter = ',', default_value = "11,12")]
    distances: Vec<i64>,
    #[arg(long, default_value_t = 400)]
    n: u64,
    /// also dump X over the lattice box [-k,k]^2 of replicate 0
    #[arg(long)]
    field_half: Option<i64>,
}

#[derive(Args, Serialize)]
struct CoverageArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long)]
    lambda: f64,
    /// window [0,width]^2
    #[arg(long, default_value_t = 10.0)]
    width: f64,
    /// explicit pads; a row for exact sampling is always added
    #[arg(long, value_delimiter = ',')]
    pads: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    configs: u64,
    #[arg(long, default_value_t = 1000)]
    probes: u64,
}

/// Tabular output with a fixed column contract.
struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Table { columns: columns.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

fn f(x: f64) -> String {
    fmt_f64(x)
}

fn q(x: Quantity) -> String {
    match x {
        Quantity::Finite(v) => fmt_f64(v),
        Quantity::Divergent => "divergent".into(),
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn emit(
    progress: bool,
    command: &str,
    params: &impl Serialize,
    result: Value,
    table: Table,
    out: Option<&Path>,
) -> Result<(), Error> {
    let mut doc = json!({ "command": command, "params": params, "result": result });
    match out {
        Some(stem) => {
            let csv_path = stem.with_extension("csv");
            let json_path = stem.with_extension("json");
            let mut w = csv::Writer::from_path(&csv_path)?;
            w.write_record(&table.columns)?;
            for row in &table.rows {
                w.write_record(row)?;
            }
            w.flush().map_err(|source| Error::Io { path: csv_path.clone(), source })?;
            let text = serde_json::to_string_pretty(&doc)? + "\n";
            std::fs::write(&json_path, text).map_err(|source| Error::Io { path: json_path.clone(), source })?;
            println!("{}", csv_path.display());
            println!("{}", json_path.display());
        }
        None => {
            doc["table"] = json!({ "columns": table.columns, "rows": table.rows });
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&doc)?);
        }
    }
    if progress {
        eprintln!("{command}: done");
    }
    Ok(())
}

fn estimate_cells(e: &percolab::Estimate) -> Vec<String> {
    vec![e.n.to_string(), e.successes.to_string(), f(e.p_hat), f(e.ci_low), f(e.ci_high)]
}

fn run(cli: Cli) -> Result<(), Error> {
    let progress = cli.progress;
    let note = |msg: String| {
        if progress {
            eprintln!("{msg}");
        }
    };
    match cli.command {
        Command::Sample(a) => {
            let window = Rect::new(0.0, 0.0, a.width, a.height)?;
            let boundary = match a.boundary {
                BoundaryArg::Padded => Boundary::Padded { eps: a.eps },
                BoundaryArg::Explicit => Boundary::ExplicitPad { pad: a.pad },
                BoundaryArg::Hitting => Boundary::Hitting,
            };
            let c = sample_configuration(&a.common.law, a.lambda, window, a.common.seed, boundary)?;
            let mut table = Table::new(&["cx", "cy", "radius"]);
            for d in &c.discs {
                table.push(vec![f(d.cx), f(d.cy), f(d.radius)]);
            }
            let result = json!({
                "n_discs": c.len(),
                "pad": c.pad,
                "missed_bound": c.missed_bound,
                "boundary": c.boundary,
            });
            emit(progress, "sample", &a, result, table, a.common.out.as_deref())
        }
        Command::Cross(a) => {
            let mut columns = vec!["lambda", "phase", "ell", "aspect", "n", "successes", "p_hat", "ci_low", "ci_high"];
            if a.grid_h.is_some() {
                columns.push("grid_agree");
            }
            let mut table = Table::new(&columns);
            let mut results = Vec::new();
            for (k, &lambda) in a.lambda.iter().enumerate() {
                note(format!("cross: lambda = {lambda}"));
                let (ell, aspect) = (a.ell, a.aspect);
                let exact = match a.phase {
                    PhaseArg::Occupied => Event::OccupiedCrossing { ell, aspect },
                    PhaseArg::Vacant => Event::VacantCrossing { ell, aspect },
                };
                let seed = if a.lambda.len() == 1 {
                    a.common.seed
                } else {
                    percolab::sampler::stream_seed(a.common.seed, k as u64)
                };
                let (e, agree) = match a.grid_h {
                    Some(h) => {
                        let grid = Event::GridCrossing { ell, aspect, phase: a.phase.into(), h };
                        let p = paired_estimate(&exact, &grid, &a.common.law, lambda, a.n, seed)?;
                        (p.first, Some(p.agree))
                    }
                    None => (mc_estimate(&exact, &a.common.law, lambda, a.n, seed)?, None),
                };
                let mut row = vec![f(lambda), phase_name(a.phase).to_string(), f(ell), f(aspect)];
                row.extend(estimate_cells(&e));
                if let Some(g) = agree {
                    row.push(g.to_string());
                }
                table.push(row);
                results.push(json!({ "lambda": lambda, "estimate": e, "grid_agree": agree }));
            }
            emit(progress, "cross", &a, json!(results), table, a.common.out.as_deref())
        }
        Command::Threshold(a) => {
            let params = ThresholdParams {
                ell: a.ell,
                aspect: a.aspect,
                target: a.target,
                n: a.n,
                tol: a.tol,
                seed: a.common.seed,
                lambda_hi: a.lambda_hi,
                ci_target: a.ci_target,
                max_n: a.max_n,
            };
            note("threshold: building bank".into());
            let d = dual_threshold(&a.common.law, &params)?;
            let mut table = Table::new(&["event", "step", "lambda", "n", "successes", "p_hat", "ci_low", "ci_high"]);
            for (name, r) in [("occupied", &d.occupied), ("vacant", &d.vacant), ("vacant_short", &d.vacant_short)] {
                for (k, p) in r.iterations.iter().enumerate() {
                    let mut row = vec![name.to_string(), k.to_string(), f(p.lambda)];
                    row.extend(estimate_cells(&p.estimate));
                    table.push(row);
                }
            }
            let result = json!({
                "lambda_c": d.occupied.lambda_hat,
                "lambda_c_star": d.vacant.lambda_hat,
                "gap": d.gap,
                "lambda_c_star_short": d.vacant_short.lambda_hat,
                "short_gap": d.short_gap,
                "occupied": d.occupied,
                "vacant": d.vacant,
                "vacant_short": d.vacant_short,
            });
            emit(progress, "threshold", &a, result, table, a.common.out.as_deref())
        }
        Command::Decay(a) => {
            let p = decay_profile(&a.common.law, a.lambda, a.ell, &a.big_l, a.cap, a.n, a.common.seed)?;
            let mut table = Table::new(&["big_l", "ratio", "n", "successes", "p_hat", "ci_low", "ci_high", "fitted"]);
            for pt in &p.points {
                let mut row = vec![f(pt.big_l), f(pt.ratio)];
                row.extend(estimate_cells(&pt.estimate));
                row.push(opt(pt.fitted));
                table.push(row);
            }
            let mut result = serde_json::to_value(&p)?;
            if let (Some(c), Law::Planar(mu)) = (a.c_fit, &a.common.law) {
                let (rows, decreasing) = peierls_profile(mu, a.lambda, &a.big_l, c)?;
                result["peierls"] = json!({ "rows": rows, "strictly_decreasing": decreasing });
            }
            emit(progress, "decay", &a, result, table, a.common.out.as_deref())
        }
        Command::Eevent(a) => {
            let rows = e_event_profile(&a.common.law, a.lambda, a.ell, &a.big_l, a.outer_factor, a.n, a.common.seed)?;
            let mut table = Table::new(&["big_l", "outer", "n", "successes", "p_hat", "ci_low", "ci_high"]);
            for (l, e) in &rows {
                let mut row = vec![f(*l), f(a.outer_factor * l)];
                row.extend(estimate_cells(e));
                table.push(row);
            }
            let result = json!(rows.iter().map(|(l, e)| json!({ "big_l": l, "estimate": e })).collect::<Vec<_>>());
            emit(progress, "eevent", &a, result, table, a.common.out.as_deref())
        }
        Command::Necklace(a) => {
            let window = Rect::square(Point::ORIGIN, a.half)?;
            let c = replicate(&a.common.law, a.lambda, window, a.common.seed, a.index)?;
            let pruning = match a.pruning {
                PruningArg::LargestFirst => Pruning::LargestFirst,
                PruningArg::SmallestFirst => Pruning::SmallestFirst,
            };
            let component = surrounding_component(&c, a.big_l)?;
            let oracle = escape_grid_oracle(&c, a.big_l, a.grid_h, MAX_DEPTH)?;
            let necklace = extract_necklace_with(&c, a.big_l, pruning)?;
            let mut table = Table::new(&["index", "cx", "cy", "radius"]);
            let mut result = json!({
                "n_discs": c.len(),
                "surrounded": component.is_some(),
                "component_size": component.as_ref().map(|v| v.len()),
                "grid_escape": oracle,
            });
            if let Some(nk) = &necklace {
                for (d, i) in nk.discs.iter().zip(&nk.indices) {
                    table.push(vec![i.to_string(), f(d.cx), f(d.cy), f(d.radius)]);
                }
                let report = validate_necklace(nk, a.grid_h)?;
                result["necklace"] = json!({
                    "size": nk.len(),
                    "radii": nk.radii(),
                    "second_radius": second_radius(nk).ok(),
                    "validation": report,
                    "all_conditions": report.all_pass(),
                });
            }
            emit(progress, "necklace", &a, result, table, a.common.out.as_deref())
        }
        Command::Formulas(a) => {
            let mut table = Table::new(&["quantity", "r", "s", "big_l", "lambda", "value"]);
            let Law::Planar(mu) = a.law else {
                return Err(Error::InvalidParameter(
                    "formulas need a planar law; sliced laws are sampling-only".into(),
                ));
            };
            let blank = String::new;
            for &r in &a.r {
                for (name, v) in [
                    ("tail_mass", Quantity::Finite(mu.tail_mass(r))),
                    ("m1", mu.partial_moment(r, 1)),
                    ("m2", mu.partial_moment(r, 2)),
                    ("p_of_r", mu.p_of_r(r)),
                ] {
                    table.push(vec![name.into(), f(r), blank(), blank(), blank(), q(v)]);
                }
                for &s in &a.s {
                    for (name, v) in [("nu", mu.near_rate(a.lambda, r, s)), ("f_bound", mu.f_bound(a.lambda, r, s))] {
                        table.push(vec![name.into(), f(r), f(s), blank(), f(a.lambda), q(v)]);
                    }
                }
            }
            for &l in &a.big_l {
                let t = mu.tail_sum_bound(l)?;
                for (name, v) in [("tail_sum", t.sum), ("tail_bound", t.bound)] {
                    table.push(vec![name.into(), blank(), blank(), f(l), blank(), q(v)]);
                }
            }
            let result = json!({ "rows": table.rows.len() });
            emit(progress, "formulas", &a, result, table, a.out.as_deref())
        }
        Command::Gof(a) => {
            let Law::Planar(mu) = a.common.law else {
                return Err(Error::InvalidParameter("gof needs a planar law".into()));
            };
            let g = poisson_gof(&mu, a.lambda, a.r, a.s, a.n, a.common.seed)?;
            let mut table = Table::new(&["lo", "hi", "observed", "expected"]);
            for b in &g.bins {
                table.push(vec![
                    b.lo.to_string(),
                    b.hi.map(|h| h.to_string()).unwrap_or_default(),
                    b.observed.to_string(),
                    f(b.expected),
                ]);
            }
            let result = serde_json::to_value(&g)?;
            emit(progress, "gof", &a, result, table, a.common.out.as_deref())
        }
        Command::Renorm(a) => {
            let t = dependence_test(&a.common.law, a.lambda, a.ell, &a.distances, a.n, a.common.seed)?;
            let mut table = Table::new(&["distance", "r", "z"]);
            for c in &t.correlations {
                table.push(vec![c.distance.to_string(), opt(c.r), opt(c.z)]);
            }
            let mut result = serde_json::to_value(&t)?;
            result["sigma_joint"] = json!(t.sigma_joint());
            if let Some(k) = a.field_half {
                let lattice = LatticeBox::new(-k, -k, k, k)?;
                let c = replicate(&a.common.law, a.lambda, lattice.window(a.ell)?, a.common.seed, u64::MAX)?;
                let field = DiscGraph::new(c.discs, c.window).renorm_field(a.ell, lattice)?;
                let rows: Vec<Vec<u8>> =
                    (-k..=k).map(|j| (-k..=k).map(|i| u8::from(field.get(i, j))).collect()).collect();
                result["field"] = json!(rows);
            }
            emit(progress, "renorm", &a, result, table, a.common.out.as_deref())
        }
        Command::Coverage(a) => {
            let window = Rect::sized(a.width, a.width)?;
            let mut table = Table::new(&["pad", "mean", "sigma", "configs", "probes", "void_probability"]);
            let mut rows = Vec::new();
            let pads = a.pads.iter().map(|&p| Some(p)).chain([None]);
            for (k, pad) in pads.enumerate() {
                note(format!("coverage: pad = {pad:?}"));
                let seed = percolab::sampler::stream_seed(a.common.seed, k as u64);
                let row = coverage(&a.common.law, a.lambda, window, pad, a.configs, a.probes, seed)?;
                table.push(vec![
                    pad.map(f).unwrap_or_else(|| "exact".into()),
                    f(row.mean),
                    f(row.sigma),
                    row.configs.to_string(),
                    row.probes_per_config.to_string(),
                    f(row.void_probability),
                ]);
                rows.push(row);
            }
            emit(progress, "coverage", &a, json!(rows), table, a.common.out.as_deref())
        }
    }
}

fn phase_name(p: PhaseArg) -> &'static str {
    match p {
        PhaseArg::Occupied => "occupied",
        PhaseArg::Vacant => "vacant",
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::WindowInsufficient(_) => 2,
        Error::Divergent(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
