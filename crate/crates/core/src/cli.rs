//! `mzx` command-line front end.
//!
//! Exit codes: 0 success, 1 parse/validation/usage error, 2 I/O error,
//! 3 conditioning on a zero-probability event, 4 fewer than two sweep steps.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dsl::{self, compile, parse_number, CompileError, ExperimentAst};
use crate::experiment::{
    conditional, marginal, run_analytic, run_sampled, sweep, ExperimentError, Predicate, Record, KEY_ABSORBED,
    KEY_DETECTOR, KEY_WHICH_WAY, PRUNE_THRESHOLD,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_ZERO_CONDITION: i32 = 3;
pub const EXIT_STEPS: i32 = 4;

/// Environment variable supplying the default seed.
pub const SEED_ENV: &str = "MZX_SEED";

#[derive(Debug, Parser)]
#[command(name = "mzx", version, about = "Mach-Zehnder which-way and quantum-eraser simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment analytically, or by sampling with --shots.
    Run {
        file: PathBuf,
        #[arg(long)]
        shots: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        /// Conditioning event, `key=value[,key=value]` over abs, ww, detector.
        #[arg(long)]
        given: Vec<String>,
        /// Bind a free parameter, `name=value`.
        #[arg(long = "set")]
        set: Vec<String>,
    },
    /// Sweep the free parameter over the half-open grid [from, to).
    Sweep {
        file: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, allow_hyphen_values = true)]
        from: String,
        #[arg(long, allow_hyphen_values = true)]
        to: String,
        #[arg(long)]
        steps: u64,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        #[arg(long)]
        given: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check an experiment file.
    Validate { file: PathBuf },
}

/// A failure with its exit code; the message goes to the error stream.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl fmt::Display) -> Self {
        Self { code, message: message.to_string() }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let code = match e {
            ExperimentError::ZeroProbabilityCondition(_) => EXIT_ZERO_CONDITION,
            _ => EXIT_INVALID,
        };
        Failure::new(code, e)
    }
}

impl From<CompileError> for Failure {
    fn from(e: CompileError) -> Self {
        match e {
            CompileError::Experiment(inner) => inner.into(),
            other => Failure::new(EXIT_INVALID, other),
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::new(EXIT_IO, e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(EXIT_IO, e)
    }
}

type Outcome = Result<(), Failure>;

struct Loaded {
    path: String,
    sha256: String,
    ast: ExperimentAst,
}

fn load(file: &PathBuf) -> Result<Loaded, Failure> {
    let path = file.display().to_string();
    let bytes = std::fs::read(file).map_err(|e| Failure::new(EXIT_IO, format!("{path}: {e}")))?;
    let src = String::from_utf8(bytes.clone()).map_err(|_| Failure::new(EXIT_IO, format!("{path}: not UTF-8 text")))?;
    let ast = dsl::parse_str(&src).map_err(|e| Failure::new(EXIT_INVALID, format!("{path}:{e}")))?;
    Ok(Loaded { path, sha256: hex::encode(Sha256::digest(&bytes)), ast })
}

fn resolve_seed(flag: Option<u64>, env: Option<&str>) -> Result<u64, Failure> {
    match (flag, env) {
        (Some(s), _) => Ok(s),
        (None, Some(v)) => v
            .trim()
            .parse()
            .map_err(|_| Failure::new(EXIT_INVALID, format!("{SEED_ENV}={v} is not an unsigned integer"))),
        (None, None) => Ok(0),
    }
}

fn parse_given(src: &str) -> Result<Predicate, Failure> {
    let p = Predicate::parse(src).map_err(|e| Failure::new(EXIT_INVALID, e))?;
    for (k, _) in p.clauses() {
        if ![KEY_ABSORBED, KEY_WHICH_WAY, KEY_DETECTOR].contains(&k.as_str()) {
            return Err(Failure::new(EXIT_INVALID, format!("unknown record key `{k}` in --given")));
        }
    }
    Ok(p)
}

/// Short label for a conditioning event: `abs=yes` → `abs`, `abs=no` → `no-abs`.
fn given_label(p: &Predicate) -> String {
    let parts: Vec<String> = p
        .clauses()
        .iter()
        .map(|(k, v)| match v.as_str() {
            "yes" => k.clone(),
            "no" => format!("no-{k}"),
            _ => format!("{k}={v}"),
        })
        .collect();
    parts.join(",")
}

fn parse_bindings(set: &[String]) -> Result<BTreeMap<String, f64>, Failure> {
    let mut out = BTreeMap::new();
    for s in set {
        let (name, value) = s
            .split_once('=')
            .and_then(|(n, v)| Some((n.trim(), parse_number(v)?)))
            .ok_or_else(|| Failure::new(EXIT_INVALID, format!("--set expects name=number, got `{s}`")))?;
        out.insert(name.to_string(), value);
    }
    Ok(out)
}

/// Compact rendering for tables: at most 12 decimals, trailing zeros trimmed, at least one decimal.
fn short(v: f64) -> String {
    let r = (v * 1e12).round() / 1e12;
    let r = if r == 0.0 { 0.0 } else { r };
    let s = format!("{r:.12}");
    let s = s.trim_end_matches('0');
    if s.ends_with('.') {
        format!("{s}0")
    } else {
        s.to_string()
    }
}

/// 17 significant digits.
fn sig17(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_writer(out: &mut dyn Write) -> csv::Writer<&mut dyn Write> {
    csv::WriterBuilder::new()
        .flexible(true)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

#[derive(Serialize)]
struct Meta {
    file: String,
    sha256: String,
    mode: &'static str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    shots: Option<u64>,
    prune_threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    parameter: Option<String>,
}

#[derive(Serialize)]
struct ConditionalRow {
    given: String,
    of: String,
    label: String,
    value: f64,
}

#[derive(Serialize)]
struct BranchRow {
    record: Record,
    #[serde(skip_serializing_if = "Option::is_none")]
    prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    count: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    frequency: Option<f64>,
}

impl BranchRow {
    fn value(&self) -> f64 {
        self.prob.or(self.frequency).unwrap_or(0.0)
    }
}

#[derive(Serialize)]
struct RunReport {
    meta: Meta,
    branches: Vec<BranchRow>,
    conditionals: Vec<ConditionalRow>,
}

struct RunArgs<'a> {
    shots: Option<u64>,
    seed: u64,
    format: Format,
    given: &'a [String],
    set: &'a [String],
}

fn cmd_run(file: &PathBuf, args: RunArgs<'_>, out: &mut dyn Write) -> Outcome {
    let loaded = load(file)?;
    let givens = args.given.iter().map(|g| parse_given(g)).collect::<Result<Vec<_>, _>>()?;
    let pipeline = compile(&loaded.ast, &parse_bindings(args.set)?)?;
    let detector = |label: &str| Predicate::eq(KEY_DETECTOR, label);

    let mut conditionals = Vec::new();
    let mut branches = Vec::new();
    let mode;
    match args.shots {
        None => {
            mode = "analytic";
            let d = run_analytic(&pipeline)?;
            for b in &d.branches {
                branches.push(BranchRow { record: b.record.clone(), prob: Some(b.prob), count: None, frequency: None });
            }
            for l in ["X", "Y"] {
                conditionals.push(ConditionalRow {
                    given: "true".into(),
                    of: format!("{KEY_DETECTOR}={l}"),
                    label: l.into(),
                    value: marginal(&d, &detector(l)),
                });
            }
            for g in &givens {
                for l in ["X", "Y"] {
                    conditionals.push(ConditionalRow {
                        given: g.to_string(),
                        of: format!("{KEY_DETECTOR}={l}"),
                        label: format!("{l}|{}", given_label(g)),
                        value: conditional(&d, g, &detector(l))?,
                    });
                }
            }
        }
        Some(shots) => {
            mode = "sampled";
            let h = run_sampled(&pipeline, shots, args.seed)?;
            for (record, count) in &h.counts {
                branches.push(BranchRow {
                    record: record.clone(),
                    prob: None,
                    count: Some(*count),
                    frequency: Some(*count as f64 / shots as f64),
                });
            }
            for l in ["X", "Y"] {
                conditionals.push(ConditionalRow {
                    given: "true".into(),
                    of: format!("{KEY_DETECTOR}={l}"),
                    label: l.into(),
                    value: h.frequency(&detector(l)),
                });
            }
            for g in &givens {
                for l in ["X", "Y"] {
                    conditionals.push(ConditionalRow {
                        given: g.to_string(),
                        of: format!("{KEY_DETECTOR}={l}"),
                        label: format!("{l}|{}", given_label(g)),
                        value: h.conditional_frequency(g, &detector(l))?,
                    });
                }
            }
        }
    }

    let report = RunReport {
        meta: Meta {
            file: loaded.path,
            sha256: loaded.sha256,
            mode,
            seed: args.seed,
            shots: args.shots,
            prune_threshold: PRUNE_THRESHOLD,
            parameter: None,
        },
        branches,
        conditionals,
    };
    emit_run(&report, args.format, out)
}

fn emit_run(r: &RunReport, format: Format, out: &mut dyn Write) -> Outcome {
    match format {
        Format::Json => {
            serde_json::to_writer(&mut *out, r).map_err(|e| Failure::new(EXIT_IO, e))?;
            writeln!(out)?;
        }
        Format::Table => {
            writeln!(out, "file {}", r.meta.file)?;
            writeln!(out, "sha256 {}", r.meta.sha256)?;
            writeln!(out, "mode {}", r.meta.mode)?;
            writeln!(out, "seed {}", r.meta.seed)?;
            if let Some(s) = r.meta.shots {
                writeln!(out, "shots {s}")?;
            }
            for b in &r.branches {
                match b.count {
                    Some(n) => writeln!(out, "branch {} {n} {}", b.record, short(b.value()))?,
                    None => writeln!(out, "branch {} {}", b.record, short(b.value()))?,
                }
            }
            for c in &r.conditionals {
                writeln!(out, "{} {}", c.label, short(c.value))?;
            }
        }
        Format::Csv => {
            let mut w = csv_writer(out);
            w.write_record(["section", "label", "value", "count"])?;
            let seed = r.meta.seed.to_string();
            w.write_record(["meta", "file", r.meta.file.as_str(), ""])?;
            w.write_record(["meta", "sha256", r.meta.sha256.as_str(), ""])?;
            w.write_record(["meta", "mode", r.meta.mode, ""])?;
            w.write_record(["meta", "seed", seed.as_str(), ""])?;
            if let Some(s) = r.meta.shots {
                w.write_record(["meta", "shots", s.to_string().as_str(), ""])?;
            }
            for b in &r.branches {
                let count = b.count.map(|n| n.to_string()).unwrap_or_default();
                w.write_record(["branch", b.record.to_string().as_str(), sig17(b.value()).as_str(), count.as_str()])?;
            }
            for c in &r.conditionals {
                w.write_record(["conditional", c.label.as_str(), sig17(c.value).as_str(), ""])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

struct SweepArgs<'a> {
    param: &'a str,
    from: &'a str,
    to: &'a str,
    steps: u64,
    format: Format,
    given: Option<&'a str>,
    seed: u64,
}

#[derive(Serialize)]
struct SweepRow {
    value: f64,
    prob_x: f64,
    prob_y: f64,
}

#[derive(Serialize)]
struct SweepConditionalRow {
    value: f64,
    given: String,
    cond_x: f64,
    cond_y: f64,
}

#[derive(Serialize)]
struct SweepReport {
    meta: Meta,
    branches: Vec<SweepRow>,
    conditionals: Vec<SweepConditionalRow>,
    visibility: f64,
}

fn cmd_sweep(file: &PathBuf, args: SweepArgs<'_>, out: &mut dyn Write) -> Outcome {
    let loaded = load(file)?;
    let declared = loaded.ast.parameters();
    match declared.iter().find(|p| p.name == args.param) {
        None => return Err(Failure::new(EXIT_INVALID, format!("{}: no parameter named `{}`", loaded.path, args.param))),
        Some(p) if p.value.is_some() => {
            return Err(Failure::new(EXIT_INVALID, format!("{}: parameter `{}` is bound in the file", loaded.path, args.param)))
        }
        Some(_) => {}
    }
    let number = |flag: &str, v: &str| {
        parse_number(v).ok_or_else(|| Failure::new(EXIT_INVALID, format!("--{flag}: `{v}` is not a number")))
    };
    let (from, to) = (number("from", args.from)?, number("to", args.to)?);
    if args.steps < 2 {
        return Err(Failure::new(EXIT_STEPS, format!("--steps must be at least 2, got {}", args.steps)));
    }
    let given = args.given.map(parse_given).transpose()?;

    let step = (to - from) / args.steps as f64;
    let grid: Vec<f64> = (0..args.steps).map(|i| from + i as f64 * step).collect();
    let ast = &loaded.ast;
    let template = |v: f64| {
        let mut b = BTreeMap::new();
        b.insert(args.param.to_string(), v);
        compile(ast, &b).map_err(|e| match e {
            CompileError::Experiment(inner) => inner,
            other => ExperimentError::InvalidPipeline(other.to_string()),
        })
    };
    let result = sweep(args.param, &grid, template, given.as_ref())?;

    let report = SweepReport {
        meta: Meta {
            file: loaded.path,
            sha256: loaded.sha256,
            mode: "sweep",
            seed: args.seed,
            shots: None,
            prune_threshold: PRUNE_THRESHOLD,
            parameter: Some(args.param.to_string()),
        },
        branches: result
            .points
            .iter()
            .map(|p| SweepRow { value: p.value, prob_x: p.prob_x, prob_y: p.prob_y })
            .collect(),
        conditionals: result
            .points
            .iter()
            .filter_map(|p| {
                Some(SweepConditionalRow {
                    value: p.value,
                    given: result.given.clone()?,
                    cond_x: p.cond_x?,
                    cond_y: p.cond_y?,
                })
            })
            .collect(),
        visibility: result.visibility,
    };

    match args.format {
        Format::Json => {
            serde_json::to_writer(&mut *out, &report).map_err(|e| Failure::new(EXIT_IO, e))?;
            writeln!(out)?;
        }
        Format::Csv => {
            let mut w = csv_writer(out);
            let mut header = vec![args.param.to_string(), "prob_x".into(), "prob_y".into()];
            if let Some(g) = &given {
                let l = given_label(g);
                header.push(format!("x|{l}"));
                header.push(format!("y|{l}"));
            }
            w.write_record(&header)?;
            for p in &result.points {
                let mut row = vec![sig17(p.value), sig17(p.prob_x), sig17(p.prob_y)];
                if let (Some(cx), Some(cy)) = (p.cond_x, p.cond_y) {
                    row.push(sig17(cx));
                    row.push(sig17(cy));
                }
                w.write_record(&row)?;
            }
            w.write_record(["visibility".to_string(), sig17(result.visibility)])?;
            w.flush()?;
        }
        Format::Table => {
            let cond = given.as_ref().map(given_label);
            match &cond {
                Some(l) => writeln!(out, "{} X Y X|{l} Y|{l}", args.param)?,
                None => writeln!(out, "{} X Y", args.param)?,
            }
            for p in &result.points {
                write!(out, "{} {} {}", short(p.value), short(p.prob_x), short(p.prob_y))?;
                if let (Some(cx), Some(cy)) = (p.cond_x, p.cond_y) {
                    write!(out, " {} {}", short(cx), short(cy))?;
                }
                writeln!(out)?;
            }
            writeln!(out, "visibility {}", short(result.visibility))?;
        }
    }
    Ok(())
}

fn cmd_validate(file: &PathBuf, out: &mut dyn Write) -> Outcome {
    load(file)?;
    writeln!(out, "OK")?;
    Ok(())
}

/// Runs one invocation. `args` includes the program name; `env_seed` is the
/// value of `MZX_SEED`, if set. Returns the process exit code.
pub fn run<I, T>(args: I, env_seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let informational = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = if informational { write!(out, "{e}") } else { write!(err, "{e}") };
            return if informational { EXIT_OK } else { EXIT_INVALID };
        }
    };
    let result = match &cli.command {
        Command::Run { file, shots, seed, format, given, set } => resolve_seed(*seed, env_seed).and_then(|seed| {
            cmd_run(file, RunArgs { shots: *shots, seed, format: *format, given, set }, out)
        }),
        Command::Sweep { file, param, from, to, steps, format, given, seed } => {
            resolve_seed(*seed, env_seed).and_then(|seed| {
                let args = SweepArgs { param, from, to, steps: *steps, format: *format, given: given.as_deref(), seed };
                cmd_sweep(file, args, out)
            })
        }
        Command::Validate { file } => cmd_validate(file, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "mzx: {}", f.message);
            f.code
        }
    }
}
