//! Command implementations. Each command computes its output files in
//! memory; `main` writes them atomically together with the manifest.

use std::fmt::Write as _;
use std::sync::Arc;

use disint::catalog::{parse_density, parse_operator};
use disint::density::normalize_components;
use disint::fiber::{find_seed, trace_fiber, FiberTrace, TraceOptions};
use disint::io::{fmt_g17, indexed_columns, write_header, write_row};
use disint::modes::{local_maxima, local_minima, parse_p, scan_fiber, solve, ModeResult, ScanMinimum, PLATEAU_TOL};
use disint::om::{om_scan, OmBase, OmFunctional, OmNorm};
use disint::validate::{
    check_total_probability_many, default_regions, lemma_suite, ValidationReport, Verdict,
};
use disint::{AmbientDensity, Error, ModeProblem, ModeVariant, ObservationOperator, ProfileVariant};
use nalgebra::DVector;
use serde::Serialize;

use crate::config::RunConfig;

pub enum CliError {
    Usage(String),
    Numerical(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(msg) => CliError::Usage(msg),
            Error::DimensionMismatch { .. } => CliError::Usage(e.to_string()),
            other => CliError::Numerical(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("io: {e}"))
    }
}

pub type CmdResult<T> = std::result::Result<T, CliError>;

/// Files and console summary produced by a command.
#[derive(Default)]
pub struct Output {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: String,
    /// Set when a validation check did not pass.
    pub validation_failed: bool,
}

impl Output {
    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }
}

struct Setup {
    op: ObservationOperator,
    density: AmbientDensity,
    opts: TraceOptions,
}

fn setup(cfg: &RunConfig) -> CmdResult<Setup> {
    let op = parse_operator(&cfg.op)?;
    let density = parse_density(&cfg.density, op.dim_ambient())?;
    if !(cfg.step > 0.0) {
        return Err(CliError::Usage("step must be positive".into()));
    }
    let opts = TraceOptions {
        step: cfg.step,
        corrector_tol: cfg.corrector_tol,
        max_nodes: cfg.max_nodes,
        truncation_nats: cfg.truncation_nats,
        ..TraceOptions::default()
    };
    Ok(Setup { op, density, opts })
}

fn seeds(cfg: &RunConfig, dim: usize) -> CmdResult<Vec<DVector<f64>>> {
    if cfg.x0.is_empty() {
        let mut e1 = DVector::zeros(dim);
        e1[0] = 1.0;
        return Ok(vec![e1]);
    }
    cfg.x0
        .iter()
        .map(|p| {
            if p.len() == dim {
                Ok(DVector::from_column_slice(p))
            } else {
                Err(CliError::Usage(format!("x0 point has {} coordinates, expected {dim}", p.len())))
            }
        })
        .collect()
}

/// Traces one component per seed, skipping seeds that land on an
/// already-traced component.
fn trace_components(s: &Setup, cfg: &RunConfig, y: f64) -> CmdResult<Vec<Arc<FiberTrace>>> {
    let yv = DVector::from_element(s.op.dim_obs(), y);
    let mut traces: Vec<Arc<FiberTrace>> = Vec::new();
    for x0 in seeds(cfg, s.op.dim_ambient())? {
        let seed = find_seed(&s.op, &yv, &x0, s.opts.corrector_tol)?;
        let known = traces.iter().any(|t| (&t.nodes[t.nearest_node(&seed)] - &seed).norm() <= 2.0 * s.opts.step);
        if !known {
            traces.push(Arc::new(trace_fiber(&s.op, &yv, &seed, &s.opts, Some(&s.density))?));
        }
    }
    Ok(traces)
}

fn component_name(prefix: &str, k: usize, c: usize) -> String {
    if c == 0 {
        format!("{prefix}_{k:03}.csv")
    } else {
        format!("{prefix}_{k:03}_c{c}.csv")
    }
}

pub fn trace_csv(trace: &FiberTrace) -> Vec<u8> {
    let d = trace.dim();
    let mut cols = vec!["s".to_string()];
    cols.extend(indexed_columns("x", d));
    cols.extend(indexed_columns("t", d));
    cols.push("residual".into());
    let mut buf = Vec::new();
    write_header(&mut buf, &cols).expect("write to memory");
    for i in 0..trace.len() {
        let mut row = vec![trace.arclen[i]];
        row.extend(trace.nodes[i].iter());
        row.extend(trace.tangents[i].iter());
        row.push(trace.residuals[i]);
        write_row(&mut buf, &row).expect("write to memory");
    }
    buf
}

pub fn cmd_trace(cfg: &RunConfig) -> CmdResult<Output> {
    let s = setup(cfg)?;
    let mut out = Output::default();
    let _ = writeln!(out.summary, "{:>4} {:>12} {:>9} {:>7} {:>9} {:>14} {:>10}", "#", "y", "component", "nodes", "closed", "length", "max_res");
    for (k, &y) in cfg.y.iter().enumerate() {
        for (c, trace) in trace_components(&s, cfg, y)?.iter().enumerate() {
            out.add(component_name("trace", k, c), trace_csv(trace));
            let _ = writeln!(
                out.summary,
                "{k:>4} {y:>12.6} {c:>9} {:>7} {:>9} {:>14.9} {:>10.2e}",
                trace.len(),
                trace.closed,
                trace.total_length(),
                trace.max_residual
            );
        }
    }
    Ok(out)
}

fn profile_csv(
    s: &Setup,
    trace: &FiberTrace,
    restricted: &disint::FiberDensityProfile,
    disint: &disint::FiberDensityProfile,
) -> Vec<u8> {
    let d = s.op.dim_ambient();
    let mut cols = vec!["s".to_string()];
    cols.extend(indexed_columns("x", d));
    cols.extend(["log_restricted_unnorm", "log_disint_unnorm", "restricted_norm", "disint_norm"].map(String::from));
    let mut buf = Vec::new();
    write_header(&mut buf, &cols).expect("write to memory");
    for i in 0..trace.len() {
        let mut row = vec![trace.arclen[i]];
        row.extend(trace.nodes[i].iter());
        row.extend([restricted.log_unnorm[i], disint.log_unnorm[i], restricted.normalized[i], disint.normalized[i]]);
        write_row(&mut buf, &row).expect("write to memory");
    }
    buf
}

/// Index of the component and node with the largest normalized density.
fn global_argmax(profiles: &[disint::FiberDensityProfile]) -> (usize, usize) {
    let mut best = (0, 0, f64::NEG_INFINITY);
    for (c, p) in profiles.iter().enumerate() {
        let i = p.argmax();
        if p.normalized[i] > best.2 {
            best = (c, i, p.normalized[i]);
        }
    }
    (best.0, best.1)
}

struct ProfileSet {
    traces: Vec<Arc<FiberTrace>>,
    restricted: Vec<disint::FiberDensityProfile>,
    disint: Vec<disint::FiberDensityProfile>,
}

fn profiles(s: &Setup, cfg: &RunConfig, y: f64) -> CmdResult<ProfileSet> {
    let traces = trace_components(s, cfg, y)?;
    let restricted = normalize_components(&s.density, &s.op, &traces, ProfileVariant::Restricted)?;
    let disint = normalize_components(&s.density, &s.op, &traces, ProfileVariant::Disintegration)?;
    Ok(ProfileSet { traces, restricted, disint })
}

fn fmt_point(x: &DVector<f64>) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v:.6}")).collect();
    format!("({})", parts.join(", "))
}

pub fn cmd_density(cfg: &RunConfig) -> CmdResult<Output> {
    let s = setup(cfg)?;
    let mut out = Output::default();
    let _ = writeln!(out.summary, "{:>4} {:>12} {:>28} {:>28}", "#", "y", "restricted argmax", "disintegration argmax");
    for (k, &y) in cfg.y.iter().enumerate() {
        let set = profiles(&s, cfg, y)?;
        for (c, trace) in set.traces.iter().enumerate() {
            out.add(component_name("profile", k, c), profile_csv(&s, trace, &set.restricted[c], &set.disint[c]));
        }
        let (rc, ri) = global_argmax(&set.restricted);
        let (dc, di) = global_argmax(&set.disint);
        let _ = writeln!(
            out.summary,
            "{k:>4} {y:>12.6} {:>28} {:>28}",
            fmt_point(&set.traces[rc].nodes[ri]),
            fmt_point(&set.traces[dc].nodes[di])
        );
    }
    Ok(out)
}

pub fn mode_variant(cfg: &RunConfig) -> CmdResult<ModeVariant> {
    match cfg.variant.as_str() {
        "lp-om" => Ok(ModeVariant::LpOm(parse_p(&cfg.p)?)),
        other => Ok(other.parse::<ModeVariant>()?),
    }
}

#[derive(Serialize)]
struct ScanEntry {
    component: usize,
    #[serde(flatten)]
    minimum: ScanMinimum,
}

#[derive(Serialize)]
struct ModesRecord {
    #[serde(flatten)]
    result: ModeResult,
    scan_minima: Vec<ScanEntry>,
}

pub fn cmd_modes(cfg: &RunConfig) -> CmdResult<Output> {
    let s = setup(cfg)?;
    let variant = mode_variant(cfg)?;
    let d = s.op.dim_ambient();
    let extra = cfg
        .starts
        .iter()
        .map(|p| {
            if p.len() == d {
                Ok(DVector::from_column_slice(p))
            } else {
                Err(CliError::Usage(format!("start has {} coordinates, expected {d}", p.len())))
            }
        })
        .collect::<CmdResult<Vec<_>>>()?;
    let mut out = Output::default();
    let mut records = Vec::new();
    for &y in &cfg.y {
        let mut problem = ModeProblem::new(s.density.clone(), s.op.clone(), DVector::from_element(1, y), variant)
            .with_opt_tol(cfg.opt_tol);
        if !cfg.default_starts {
            problem.starts.clear();
        }
        problem = problem.with_extra_starts(extra.iter().cloned());
        let result = solve(&problem)?;
        let mut scan_minima = Vec::new();
        if s.op.dim_ambient() - s.op.dim_obs() == 1 {
            for (c, trace) in trace_components(&s, cfg, y)?.iter().enumerate() {
                scan_minima.extend(scan_fiber(&problem, trace).into_iter().map(|minimum| ScanEntry { component: c, minimum }));
            }
        }
        let _ = writeln!(out.summary, "y = {y}  variant = {variant}  starts failed = {}", result.starts_failed);
        for m in &result.minimizers {
            let _ = writeln!(
                out.summary,
                "  mode {}  objective {:.10}  residual {:.1e}",
                fmt_point(&DVector::from_column_slice(&m.x)),
                m.objective,
                m.residual
            );
        }
        let _ = writeln!(out.summary, "  local minimizers: {}  fiber-scan minima: {}", result.local_minimizers.len(), scan_minima.len());
        records.push(ModesRecord { result, scan_minima });
    }
    let mut json = serde_json::to_vec_pretty(&records).map_err(|e| CliError::Usage(e.to_string()))?;
    json.push(b'\n');
    out.add("modes.json", json);
    Ok(out)
}

fn om_base(name: &str) -> CmdResult<OmBase> {
    match name {
        "disintegration" => Ok(OmBase::Disintegration),
        "restricted" => Ok(OmBase::Restricted),
        other => Err(CliError::Usage(format!("unknown OM base {other:?}"))),
    }
}

/// OM scans of one trace over a p-list: long-format CSV and per-p extrema counts.
struct OmScans {
    csv: Vec<u8>,
    extrema: Vec<(f64, Vec<usize>, Vec<usize>)>,
}

fn om_scans(s: &Setup, trace: &FiberTrace, base: OmBase, ps: &[f64], recenter: bool) -> CmdResult<OmScans> {
    let mut csv = Vec::new();
    write_header(&mut csv, &["s", "p", "om_value"]).expect("write to memory");
    let mut extrema = Vec::new();
    for &p in ps {
        let mut values = om_scan(OmFunctional::new(base, OmNorm::Lp(p)), &s.density, &s.op, trace)?;
        if recenter {
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            values.iter_mut().for_each(|v| *v -= min);
        }
        for (sv, v) in trace.arclen.iter().zip(&values) {
            write_row(&mut csv, &[*sv, p, *v]).expect("write to memory");
        }
        extrema.push((
            p,
            local_minima(&values, trace.closed, PLATEAU_TOL),
            local_maxima(&values, trace.closed, PLATEAU_TOL),
        ));
    }
    Ok(OmScans { csv, extrema })
}

fn p_values(cfg: &RunConfig) -> CmdResult<Vec<f64>> {
    cfg.p_list.iter().map(|p| Ok(parse_p(p)?)).collect()
}

/// One OM curve's extrema: base label, fiber, p, minima and maxima node indices.
type ExtremaRow<'a> = (String, &'a FiberTrace, f64, &'a [usize], &'a [usize]);

fn extrema_csv(rows: &[ExtremaRow]) -> Vec<u8> {
    let mut buf = String::from("base,p,n_minima,n_maxima,minima_s\n");
    for (base, trace, p, minima, maxima) in rows {
        let s: Vec<String> = minima.iter().map(|&i| fmt_g17(trace.arclen[i])).collect();
        let _ = writeln!(buf, "{base},{},{},{},{}", fmt_g17(*p), minima.len(), maxima.len(), s.join(";"));
    }
    buf.into_bytes()
}

pub fn cmd_om(cfg: &RunConfig) -> CmdResult<Output> {
    let s = setup(cfg)?;
    let base = om_base(&cfg.base)?;
    let ps = p_values(cfg)?;
    let mut out = Output::default();
    let _ = writeln!(out.summary, "{:>4} {:>12} {:>9} {:>6} {:>9} {:>9}", "#", "y", "component", "p", "minima", "maxima");
    for (k, &y) in cfg.y.iter().enumerate() {
        for (c, trace) in trace_components(&s, cfg, y)?.iter().enumerate() {
            let scans = om_scans(&s, trace, base, &ps, cfg.recenter)?;
            out.add(component_name("om", k, c), scans.csv);
            let rows: Vec<_> = scans
                .extrema
                .iter()
                .map(|(p, mi, ma)| (base.to_string(), trace.as_ref(), *p, mi.as_slice(), ma.as_slice()))
                .collect();
            out.add(component_name("om_minima", k, c), extrema_csv(&rows));
            for (p, mi, ma) in &scans.extrema {
                let _ = writeln!(out.summary, "{k:>4} {y:>12.6} {c:>9} {:>6} {:>9} {:>9}", fmt_g17(*p), mi.len(), ma.len());
            }
        }
    }
    Ok(out)
}

pub const CHECK_NAMES: [&str; 10] = [
    "all",
    "lemmas",
    "product_slice",
    "pushforward",
    "equivalent_observations",
    "bayes_gaussian",
    "dominated",
    "restriction",
    "total_probability",
    "total_probability_restricted",
];

pub fn cmd_validate(cfg: &RunConfig) -> CmdResult<Output> {
    let selected: Vec<&str> = cfg.check.split(',').map(str::trim).collect();
    for name in &selected {
        if !CHECK_NAMES.contains(name) {
            return Err(CliError::Usage(format!("unknown check {name:?}; known: {}", CHECK_NAMES.join(", "))));
        }
    }
    let wants = |name: &str| {
        selected.iter().any(|s| {
            *s == name
                || *s == "all" && name != "total_probability_restricted"
                || *s == "lemmas" && !name.starts_with("total_probability")
        })
    };
    let mut reports: Vec<ValidationReport> = Vec::new();
    if ["product_slice", "pushforward", "equivalent_observations", "bayes_gaussian", "dominated", "restriction"]
        .iter()
        .any(|n| wants(n))
    {
        for (name, report) in lemma_suite() {
            if wants(&name) {
                reports.push(report?);
            }
        }
    }
    for (name, variant) in [
        ("total_probability", ProfileVariant::Disintegration),
        ("total_probability_restricted", ProfileVariant::Restricted),
    ] {
        if wants(name) {
            let s = setup(cfg)?;
            if s.op.dim_ambient() != 2 {
                return Err(CliError::Usage("total-probability regions are planar; use a 2-D operator".into()));
            }
            reports.extend(check_total_probability_many(&s.density, &s.op, &default_regions(), variant, cfg.samples, cfg.seed)?);
        }
    }
    let mut out = Output::default();
    let mut jsonl = Vec::new();
    let _ = writeln!(out.summary, "{:<34} {:<30} {:>14} {:>14} {:>12} {:>8} {:>9}", "check", "case", "lhs", "rhs", "se/tol", "verdict", "time[s]");
    for r in &reports {
        serde_json::to_writer(&mut jsonl, r).map_err(|e| CliError::Usage(e.to_string()))?;
        jsonl.push(b'\n');
        let bound = r.std_error.map(|se| 3.0 * se).or(r.tolerance).unwrap_or(f64::NAN);
        let _ = writeln!(
            out.summary,
            "{:<34} {:<30} {:>14.6e} {:>14.6e} {:>12.3e} {:>8} {:>9.3}",
            r.check, r.case, r.lhs, r.rhs, bound, r.verdict, r.runtime_s
        );
        if r.verdict != Verdict::Pass {
            out.validation_failed = true;
        }
    }
    out.add("validate.jsonl", jsonl);
    Ok(out)
}

pub const FIG1_Y_GRID: &str = "0.25:3:12";
pub const FIG_Y: f64 = 1.01;

/// Fixes the figure-specific parts of the config before the manifest is written.
pub fn resolve_reproduce(cfg: &mut RunConfig) -> CmdResult<()> {
    match cfg.figure.as_str() {
        "fig1" => cfg.set("y", FIG1_Y_GRID).map_err(|e| CliError::Usage(e.0))?,
        "fig2" => cfg.y = vec![FIG_Y],
        other => return Err(CliError::Usage(format!("unknown figure {other:?}; expected fig1 or fig2"))),
    }
    Ok(())
}

pub fn cmd_reproduce(cfg: &RunConfig) -> CmdResult<Output> {
    let s = setup(cfg)?;
    let mut out = Output::default();
    match cfg.figure.as_str() {
        "fig1" => {
            let mut summary = String::from(
                "y,restricted_argmax_s,restricted_argmax_x1,restricted_argmax_x2,disint_argmax_s,disint_argmax_x1,disint_argmax_x2\n",
            );
            let mut ys = cfg.y.clone();
            ys.push(FIG_Y);
            for (k, &y) in ys.iter().enumerate() {
                let set = profiles(&s, cfg, y)?;
                let name = if k < cfg.y.len() { format!("fig1_fiber_{:02}.csv", k + 1) } else { "fig1_y1.01.csv".into() };
                out.add(name, profile_csv(&s, &set.traces[0], &set.restricted[0], &set.disint[0]));
                let (ri, di) = (set.restricted[0].argmax(), set.disint[0].argmax());
                let t = &set.traces[0];
                let cells: Vec<String> = [y, t.arclen[ri], t.nodes[ri][0], t.nodes[ri][1], t.arclen[di], t.nodes[di][0], t.nodes[di][1]]
                    .iter()
                    .map(|v| fmt_g17(*v))
                    .collect();
                let _ = writeln!(summary, "{}", cells.join(","));
                let _ = writeln!(
                    out.summary,
                    "y = {y:<6} restricted argmax {}  disintegration argmax {}",
                    fmt_point(&t.nodes[ri]),
                    fmt_point(&t.nodes[di])
                );
            }
            out.add("fig1_summary.csv", summary.into_bytes());
        }
        "fig2" => {
            let ps = p_values(cfg)?;
            let traces = trace_components(&s, cfg, FIG_Y)?;
            let trace = &traces[0];
            let mut rows = Vec::new();
            for base in [OmBase::Restricted, OmBase::Disintegration] {
                let scans = om_scans(&s, trace, base, &ps, cfg.recenter)?;
                out.add(format!("fig2_{base}_om.csv"), scans.csv);
                for (p, mi, ma) in scans.extrema {
                    let _ = writeln!(out.summary, "{base:<15} p = {:<5} minima {}  maxima {}", fmt_g17(p), mi.len(), ma.len());
                    rows.push((base.to_string(), p, mi, ma));
                }
            }
            let view: Vec<_> = rows.iter().map(|(b, p, mi, ma)| (b.clone(), trace.as_ref(), *p, mi.as_slice(), ma.as_slice())).collect();
            out.add("fig2_minima.csv", extrema_csv(&view));
        }
        other => return Err(CliError::Usage(format!("unknown figure {other:?}"))),
    }
    Ok(out)
}
