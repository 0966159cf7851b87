//! `hemi`: command-line front end of hemi-core.
//!
//! Exit codes: 0 on success, 1 on domain errors or failed checks, 2 on
//! configuration errors.

mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{ArgGroup, Parser, Subcommand};
use hemi_core::census::{
    counting_a, counting_b, counting_summary, enumerate_census, existence_check, gap_above, level_bands, Theorem,
    TheoremChoice,
};
use hemi_core::flow::{DecreaseCertificate, Flow, Trajectory};
use hemi_core::geometry::ScalarField;
use hemi_core::landscape::Landscape;
use hemi_core::quadrature::{compute_constants, ConstantsTable, CONSTANTS_VERSION};
use hemi_core::reduced::{Configuration, ReducedModel};
use hemi_core::verify::{run_suite, Suite, VerifyOptions};
use serde::Serialize;

use crate::config::{ConfigError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "hemi")]
#[command(about = "Bubble analysis of prescribed scalar curvature on the half-sphere")]
struct Args {
    /// JSON run configuration; defaults apply when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override of the configuration's `rng_seed`
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override of the configuration's `output_dir`
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Universal constants as a key/value report with error estimates
    Constants {
        /// Dimension override
        #[arg(long)]
        dimension: Option<usize>,
        /// Quadrature tolerance override
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Critical points of the configured field
    CriticalPoints,
    /// Critical points at infinity with energy bands
    Census,
    /// Alternating index sums, from `--indices` or the configured field
    #[command(group(ArgGroup::new("mode").args(["a", "b"])))]
    Counting {
        /// Boundary sums `A_1..A_4` of `n - 1 - morse` values
        #[arg(long = "A")]
        a: bool,
        /// Interior sums `B_1, B_2` of `n - morse` values
        #[arg(long = "B")]
        b: bool,
        /// Comma-separated index list
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "mode")]
        indices: Option<Vec<i64>>,
    },
    /// Existence verdicts of the three theorems
    Existence {
        /// `auto`, `T1.1`, `T1.2` or `T1.3`
        #[arg(long, default_value = "auto")]
        theorem: String,
    },
    /// Pseudogradient trajectory from an initial configuration
    Flow {
        /// JSON configuration `{q, p, bubbles: [{alpha, point, lambda}], eps}`
        #[arg(long)]
        initial: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        t_max: f64,
        /// Replace the initial weights by their balanced values
        #[arg(long)]
        normalize: bool,
        /// Also write per-step decrease certificates
        #[arg(long)]
        certificates: bool,
    },
    /// Oracle suites
    Verify {
        /// Suite name or `all`
        #[arg(long, default_value = "all")]
        suite: String,
        /// Override of the configuration's `verify_flow_states`
        #[arg(long)]
        flow_states: Option<usize>,
    },
}

/// Common header of every JSON artifact.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    constants_version: &'a str,
    dimension: usize,
    result: T,
}

/// Routes artifacts to files or stdout and the summary to the other stream.
struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    fn artifact(&self, name: &str, body: &str) -> Result<()> {
        match &self.dir {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| ConfigError(format!("{}: {e}", dir.display())))?;
                let path = dir.join(name);
                fs::write(&path, body).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
            }
            None => print!("{body}"),
        }
        Ok(())
    }

    fn summary(&self, line: &str) {
        if self.dir.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    sink: Sink,
}

impl Ctx {
    fn json<T: Serialize>(&self, command: &str, name: &str, result: T) -> Result<()> {
        let report = Report {
            command,
            seed: self.seed,
            constants_version: CONSTANTS_VERSION,
            dimension: self.cfg.dimension(),
            result,
        };
        let mut body = serde_json::to_string_pretty(&report)?;
        body.push('\n');
        self.sink.artifact(name, &body)
    }

    fn field(&self) -> Result<ScalarField> {
        Ok(ScalarField::from_spec(self.cfg.field()?.clone())?)
    }

    fn landscape(&self, field: &ScalarField) -> Result<Landscape> {
        Ok(Landscape::analyze(field, self.cfg.seeds_per_dim)?)
    }

    fn constants(&self) -> Result<ConstantsTable> {
        Ok(compute_constants(self.cfg.dimension(), self.cfg.quadrature_tol)?)
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<hemi_core::error::Error>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

/// Runs one command; `Ok(false)` reports failed checks.
fn run(args: Args) -> Result<bool> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.rng_seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = Some(out.clone());
    }
    if let Command::Constants { dimension, tol } = &args.command {
        if dimension.is_some() {
            cfg.dimension = *dimension;
        }
        if let Some(t) = tol {
            cfg.quadrature_tol = *t;
        }
        cfg.validate()?;
    }
    let ctx = Ctx {
        seed: cfg.rng_seed,
        sink: Sink {
            dir: cfg.output_dir.clone(),
        },
        cfg,
    };
    match args.command {
        Command::Constants { .. } => constants(&ctx),
        Command::CriticalPoints => critical_points(&ctx),
        Command::Census => census(&ctx),
        Command::Counting { a, b, indices } => counting(&ctx, a, b, indices),
        Command::Existence { theorem } => existence(&ctx, &theorem),
        Command::Flow {
            initial,
            t_max,
            normalize,
            certificates,
        } => flow(&ctx, &initial, t_max, normalize, certificates),
        Command::Verify { suite, flow_states } => verify(&ctx, &suite, flow_states),
    }
}

fn constants(ctx: &Ctx) -> Result<bool> {
    let table = ctx.constants()?;
    let closed = ConstantsTable::closed_form(table.n);
    let mut body = String::new();
    body.push_str("# hemi constants report: name = value +- absolute error\n");
    body.push_str(&format!("version = {}\n", table.version));
    body.push_str(&format!("seed = {}\n", ctx.seed));
    body.push_str(&format!("n = {}\n", table.n));
    body.push_str(&format!("tol = {:e}\n", table.tol));
    for ((name, value), err) in table.entries().iter().zip(&table.errors) {
        body.push_str(&format!("{name} = {value:.17e} +- {err:.3e}\n"));
    }
    body.push_str("# c2 and c9 are defined by their radial integrals, as are the others.\n");
    ctx.sink.artifact("constants.txt", &body)?;
    let worst = table
        .entries()
        .iter()
        .zip(closed.entries())
        .map(|((_, a), (_, b))| ((a - b) / b).abs())
        .fold(0.0, f64::max);
    ctx.sink.summary(&format!(
        "constants n = {} tol = {:e}: {} entries, largest relative gap to closed forms {worst:.2e}",
        table.n,
        table.tol,
        table.entries().len()
    ));
    Ok(true)
}

fn critical_points(ctx: &Ctx) -> Result<bool> {
    let field = ctx.field()?;
    let landscape = ctx.landscape(&field)?;
    ctx.json("critical-points", "critical_points.json", &landscape.records)?;
    let boundary = landscape.records.iter().filter(|r| r.is_boundary()).count();
    ctx.sink.summary(&format!(
        "{} critical points ({boundary} boundary, {} interior); K in [{:.6}, {:.6}]",
        landscape.records.len(),
        landscape.records.len() - boundary,
        landscape.k_min,
        landscape.k_max
    ));
    Ok(true)
}

#[derive(Serialize)]
struct CensusReport {
    entries: Vec<hemi_core::census::CensusEntry>,
    bands: Vec<hemi_core::census::Band>,
    /// `gaps[l - 1]`: band `l` stays below band `l + 1` after a full pinch.
    gaps: Vec<bool>,
    k_min: f64,
    k_max: f64,
}

fn census(ctx: &Ctx) -> Result<bool> {
    let field = ctx.field()?;
    let landscape = ctx.landscape(&field)?;
    let n = landscape.n;
    let s_n = ctx.constants()?.s_n;
    let mass_max = ctx.cfg.mass_max;
    let entries = enumerate_census(&landscape.sets, n, s_n, mass_max);
    let bands = level_bands(n, s_n, landscape.k_min, landscape.k_max, mass_max);
    let gaps = (1..mass_max)
        .map(|l| gap_above(&bands, l, n, landscape.k_min, landscape.k_max))
        .collect();
    let count = entries.len();
    ctx.json(
        "census",
        "census.json",
        CensusReport {
            entries,
            bands,
            gaps,
            k_min: landscape.k_min,
            k_max: landscape.k_max,
        },
    )?;
    ctx.sink.summary(&format!(
        "{count} critical points at infinity with q + 2p <= {mass_max}"
    ));
    Ok(true)
}

#[derive(Serialize)]
#[serde(untagged)]
enum CountingReport {
    A {
        mode: &'static str,
        indices: Vec<i64>,
        a1: i64,
        a2: i64,
        a3: i64,
        a4: i64,
    },
    B {
        mode: &'static str,
        indices: Vec<i64>,
        b1: i64,
        b2: i64,
    },
    Field(hemi_core::census::CountingSummary),
}

fn counting(ctx: &Ctx, a: bool, b: bool, indices: Option<Vec<i64>>) -> Result<bool> {
    let from_field = || -> Result<hemi_core::census::CountingSummary> {
        let field = ctx.field()?;
        Ok(counting_summary(&ctx.landscape(&field)?))
    };
    let report = match (a, b, indices) {
        (true, _, idx) => {
            let indices = match idx {
                Some(v) => v,
                None => from_field()?.boundary_indices,
            };
            let (a1, a2, a3, a4) = counting_a(&indices);
            ctx.sink.summary(&format!("A1 = {a1}, A2 = {a2}, A3 = {a3}, A4 = {a4}"));
            CountingReport::A {
                mode: "A",
                indices,
                a1,
                a2,
                a3,
                a4,
            }
        }
        (_, true, idx) => {
            let indices = match idx {
                Some(v) => v,
                None => from_field()?.interior_indices,
            };
            let (b1, b2) = counting_b(&indices);
            ctx.sink.summary(&format!("B1 = {b1}, B2 = {b2}"));
            CountingReport::B {
                mode: "B",
                indices,
                b1,
                b2,
            }
        }
        _ => {
            let s = from_field()?;
            ctx.sink
                .summary(&format!("A1 = {}, B1 = {}, #K_inf = {}", s.a1, s.b1, s.k_infinity));
            CountingReport::Field(s)
        }
    };
    ctx.json("counting", "counting.json", report)?;
    Ok(true)
}

fn parse_theorem(s: &str) -> Result<TheoremChoice> {
    Ok(match s.to_ascii_uppercase().replace('_', ".").as_str() {
        "AUTO" => TheoremChoice::Auto,
        "T1.1" => TheoremChoice::Only(Theorem::T11),
        "T1.2" => TheoremChoice::Only(Theorem::T12),
        "T1.3" => TheoremChoice::Only(Theorem::T13),
        _ => return Err(ConfigError(format!("unknown theorem '{s}'")).into()),
    })
}

/// Serialized name of a unit enum variant.
fn label<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(String::from))
        .unwrap_or_default()
}

fn existence(ctx: &Ctx, theorem: &str) -> Result<bool> {
    let choice = parse_theorem(theorem)?;
    let field = ctx.field()?;
    let landscape = ctx.landscape(&field)?;
    let report = existence_check(&landscape, choice)?;
    for v in &report.verdicts {
        let failed: Vec<&str> = v
            .hypotheses
            .iter()
            .filter(|(_, c)| !c.holds)
            .map(|(k, _)| k.as_str())
            .collect();
        ctx.sink.summary(&format!(
            "{}: {} (failed: {})",
            label(&v.theorem),
            label(&v.conclusion),
            failed.join(", ")
        ));
    }
    ctx.sink.summary(&format!("conclusion: {}", label(&report.conclusion)));
    ctx.json("existence", "existence.json", &report)?;
    Ok(true)
}

fn trajectory_csv(ctx: &Ctx, traj: &Trajectory) -> Result<String> {
    let first = &traj.states[0].config;
    let (m, dim) = (first.len(), first.dim() + 1);
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    for i in 0..m {
        header.extend((1..=dim).map(|k| format!("a{i}_x{k}")));
        header.push(format!("lambda{i}"));
        header.push(format!("alpha{i}"));
    }
    header.extend(["J_center", "J_halfwidth", "region", "mu_max"].map(String::from));
    wtr.write_record(&header)?;
    for s in &traj.states {
        let mut row = vec![s.time.to_string()];
        for b in &s.config.bubbles {
            row.extend(b.point.coords().iter().map(|x| x.to_string()));
            row.push(b.lambda.to_string());
            row.push(b.alpha.to_string());
        }
        let mu_max = s.mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.extend([
            s.j.center.to_string(),
            s.j.halfwidth.to_string(),
            s.label.tag.to_string(),
            mu_max.to_string(),
        ]);
        wtr.write_record(&row)?;
    }
    let body = String::from_utf8(wtr.into_inner()?)?;
    Ok(format!(
        "# seed={} constants_version={}\n{body}",
        ctx.seed, CONSTANTS_VERSION
    ))
}

#[derive(Serialize)]
struct StepCertificate {
    t: f64,
    region: String,
    certificate: DecreaseCertificate,
}

fn flow(ctx: &Ctx, initial: &PathBuf, t_max: f64, normalize: bool, certificates: bool) -> Result<bool> {
    if t_max.is_nan() || t_max <= 0.0 {
        return Err(ConfigError("t_max must be positive".into()).into());
    }
    let text = fs::read_to_string(initial).map_err(|e| ConfigError(format!("{}: {e}", initial.display())))?;
    let cfg0: Configuration =
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", initial.display())))?;
    cfg0.check_structure()?;
    let field = ctx.field()?;
    let landscape = ctx.landscape(&field)?;
    let model = ReducedModel::new(field, ctx.constants()?, ctx.cfg.model.clone())?;
    let cfg0 = if normalize { model.normalize_alphas(&cfg0) } else { cfg0 };
    let flow = Flow::new(&model, &landscape, ctx.cfg.flow.clone())?;
    let traj = flow.integrate(&cfg0, t_max)?;
    ctx.sink.artifact("trajectory.csv", &trajectory_csv(ctx, &traj)?)?;
    let mut all_ok = true;
    if certificates {
        let certs = traj
            .states
            .iter()
            .map(|s| {
                Ok(StepCertificate {
                    t: s.time,
                    region: s.label.tag.to_string(),
                    certificate: flow.certificate_for(&s.config, &s.velocity)?,
                })
            })
            .collect::<hemi_core::error::Result<Vec<_>>>()?;
        let failed = certs.iter().filter(|c| !c.certificate.satisfied).count();
        all_ok = failed == 0;
        ctx.sink
            .summary(&format!("certificates: {failed}/{} unsatisfied", certs.len()));
        ctx.json("flow", "certificates.json", certs)?;
    }
    let (start, end) = (&traj.states[0], traj.states.last().expect("nonempty"));
    ctx.sink.summary(&format!(
        "{} states, t = {:.4}, termination {}; J {:.9} -> {:.9}; region {} -> {}",
        traj.states.len(),
        end.time,
        label(&traj.termination),
        start.j.center,
        end.j.center,
        start.label.tag,
        end.label.tag
    ));
    Ok(all_ok)
}

#[derive(Serialize)]
struct SuiteReport {
    suite: &'static str,
    passed: bool,
    checks: Vec<hemi_core::verify::Check>,
}

fn verify(ctx: &Ctx, suite: &str, flow_states: Option<usize>) -> Result<bool> {
    let suites: Vec<Suite> = if suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![Suite::parse(suite).ok_or_else(|| ConfigError(format!("unknown suite '{suite}'")))?]
    };
    let opts = VerifyOptions {
        seed: ctx.seed,
        flow_states: flow_states.unwrap_or(ctx.cfg.verify_flow_states),
        flow: ctx.cfg.flow.clone(),
        ..VerifyOptions::default()
    };
    let mut reports = Vec::new();
    for s in suites {
        let checks = run_suite(s, &opts).with_context(|| format!("suite {}", s.name()))?;
        for c in &checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            ctx.sink.summary(&format!("{status} {} ({})", c.name, c.detail));
        }
        reports.push(SuiteReport {
            suite: s.name(),
            passed: checks.iter().all(|c| c.passed),
            checks,
        });
    }
    let ok = reports.iter().all(|r| r.passed);
    ctx.json("verify", "verify.json", &reports)?;
    Ok(ok)
}
