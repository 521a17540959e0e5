mod commands;
mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use commands::{CliError, Output};
use config::{Manifest, RunConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

#[derive(Parser)]
#[command(name = "disint", version, about = "Disintegrations of densities along observation maps")]
struct Cli {
    /// Flat key=value config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if absent).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace fibers h^{-1}(y) and write trace_NNN.csv.
    Trace(Knobs),
    /// Restricted and disintegration profiles on fibers: profile_NNN.csv.
    Density(Knobs),
    /// Constrained modes by multi-start optimization plus a fiber scan: modes.json.
    Modes(Knobs),
    /// Onsager-Machlup scans over a p-list: om_NNN.csv and om_minima_NNN.csv.
    Om(Knobs),
    /// Run numerical checks: validate.jsonl. Exit code 3 if any check fails.
    Validate(Knobs),
    /// Regenerate the data behind a figure (fig1 or fig2).
    Reproduce {
        figure: String,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Re-run the command recorded in a manifest.json.
    Replay { manifest: PathBuf },
}

#[derive(Args, Default)]
struct Knobs {
    /// Operator spec: ellipse[:a,b], coordK[:d], linear:a1,..., sphere[:offset[,d]].
    #[arg(long)]
    op: Option<String>,
    /// Density spec: gauss[:d], diag:v1,..[@m1,..], mixture:w;means;vars|...
    #[arg(long)]
    density: Option<String>,
    /// Observations: comma list or start:stop:count.
    #[arg(long, allow_hyphen_values = true)]
    y: Option<String>,
    /// Seed guesses, one per fiber component: x1,x2;x1,x2.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    #[arg(long)]
    step: Option<String>,
    #[arg(long)]
    corrector_tol: Option<String>,
    #[arg(long)]
    max_nodes: Option<String>,
    #[arg(long)]
    truncation_nats: Option<String>,
    /// restricted | disintegration | lp-om
    #[arg(long)]
    variant: Option<String>,
    /// Norm exponent for lp-om (number >= 1 or inf).
    #[arg(long)]
    p: Option<String>,
    /// Extra optimizer starts: x1,x2;x1,x2.
    #[arg(long, allow_hyphen_values = true)]
    starts: Option<String>,
    /// Use the default compass starts (true/false).
    #[arg(long)]
    default_starts: Option<String>,
    #[arg(long)]
    opt_tol: Option<String>,
    /// Comma list of p values for OM scans.
    #[arg(long)]
    p_list: Option<String>,
    /// OM base measure: disintegration | restricted.
    #[arg(long)]
    base: Option<String>,
    /// Shift each OM curve so its minimum is 0.
    #[arg(long)]
    recenter: bool,
    /// Checks to run (comma list): all, lemmas, product_slice, pushforward, ...
    #[arg(long)]
    check: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Extra key=value settings (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Knobs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), config::ConfigError> {
        let pairs = [
            ("op", &self.op),
            ("density", &self.density),
            ("y", &self.y),
            ("x0", &self.x0),
            ("step", &self.step),
            ("corrector_tol", &self.corrector_tol),
            ("max_nodes", &self.max_nodes),
            ("truncation_nats", &self.truncation_nats),
            ("variant", &self.variant),
            ("p", &self.p),
            ("starts", &self.starts),
            ("default_starts", &self.default_starts),
            ("opt_tol", &self.opt_tol),
            ("p_list", &self.p_list),
            ("base", &self.base),
            ("check", &self.check),
            ("samples", &self.samples),
            ("seed", &self.seed),
        ];
        for item in &self.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| config::ConfigError(format!("--set expects KEY=VALUE, got {item:?}")))?;
            cfg.set(k.trim(), v)?;
        }
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if self.recenter {
            cfg.recenter = true;
        }
        Ok(())
    }
}

fn fail(code: u8, kind: &str, message: &str) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

/// Writes `bytes` to `dir/name` via a temporary file and rename.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, dir.join(name))
}

fn write_manifest(dir: &Path, cfg: &RunConfig, outputs: Vec<String>) -> std::io::Result<()> {
    let manifest = Manifest {
        tool: "disint".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        outputs,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(std::io::Error::other)?;
    bytes.push(b'\n');
    write_atomic(dir, "manifest.json", &bytes)
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let usage = |e: config::ConfigError| CliError::Usage(e.0);
    if let Command::Replay { manifest } = &cli.command {
        let text = fs::read_to_string(manifest).map_err(|e| CliError::Usage(format!("{}: {e}", manifest.display())))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", manifest.display())))?;
        return Ok(m.config);
    }
    let (name, knobs) = match &cli.command {
        Command::Trace(k) => ("trace", k),
        Command::Density(k) => ("density", k),
        Command::Modes(k) => ("modes", k),
        Command::Om(k) => ("om", k),
        Command::Validate(k) => ("validate", k),
        Command::Reproduce { knobs, .. } => ("reproduce", knobs),
        Command::Replay { .. } => unreachable!("handled above"),
    };
    let mut cfg = RunConfig::new(name);
    if let Some(path) = &cli.config {
        cfg.apply_file(path).map_err(usage)?;
        cfg.command = name.to_string();
    }
    knobs.apply(&mut cfg).map_err(usage)?;
    if let Command::Reproduce { figure, .. } = &cli.command {
        cfg.figure = figure.clone();
        commands::resolve_reproduce(&mut cfg)?;
    }
    Ok(cfg)
}

fn dispatch(cfg: &RunConfig) -> Result<Output, CliError> {
    match cfg.command.as_str() {
        "trace" => commands::cmd_trace(cfg),
        "density" => commands::cmd_density(cfg),
        "modes" => commands::cmd_modes(cfg),
        "om" => commands::cmd_om(cfg),
        "validate" => commands::cmd_validate(cfg),
        "reproduce" => commands::cmd_reproduce(cfg),
        other => Err(CliError::Usage(format!("unknown command {other:?}"))),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return fail(EXIT_USAGE, "Usage", &e.kind().to_string());
        }
    };
    let cfg = match resolve(&cli) {
        Ok(cfg) => cfg,
        Err(CliError::Usage(msg)) => return fail(EXIT_USAGE, "Usage", &msg),
        Err(CliError::Numerical(e)) => return fail(EXIT_NUMERICAL, e.kind(), &e.to_string()),
    };
    if let Err(e) = fs::create_dir_all(&cli.out) {
        return fail(EXIT_USAGE, "Io", &format!("{}: {e}", cli.out.display()));
    }
    let started = Instant::now();
    let result = dispatch(&cfg);
    let elapsed = started.elapsed().as_secs_f64();
    let output = match result {
        Ok(output) => output,
        Err(err) => {
            let _ = write_manifest(&cli.out, &cfg, Vec::new());
            return match err {
                CliError::Usage(msg) => fail(EXIT_USAGE, "Usage", &msg),
                CliError::Numerical(e) => fail(EXIT_NUMERICAL, e.kind(), &e.to_string()),
            };
        }
    };
    for (name, bytes) in &output.files {
        if let Err(e) = write_atomic(&cli.out, name, bytes) {
            return fail(EXIT_USAGE, "Io", &format!("{name}: {e}"));
        }
    }
    let names = output.files.iter().map(|(n, _)| n.clone()).collect();
    if let Err(e) = write_manifest(&cli.out, &cfg, names) {
        return fail(EXIT_USAGE, "Io", &format!("manifest.json: {e}"));
    }
    print!("{}", output.summary);
    println!("{} file(s) written to {} in {elapsed:.2} s", output.files.len() + 1, cli.out.display());
    if output.validation_failed {
        return fail(EXIT_VALIDATION, "ValidationFailed", "one or more checks did not pass");
    }
    ExitCode::SUCCESS
}
