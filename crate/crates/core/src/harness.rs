//! Experiment runner behind the `wienerpath` binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, MethodChoice, OutputConfig, OutputFormat, OUT_DIR_ENV};
use crate::cylinder::{expectation_mc, expectation_quadrature, McBudget};
use crate::development::{antidevelop, develop, energy_curved, energy_flat, geometric_limit_estimate, SchemeChoice};
use crate::error::{Error, Result};
use crate::exec::{stream_rng, Exec, StreamId};
use crate::heat_kernel::KernelEvaluator;
use crate::limit::{
    co_cauchy_diagnostic, density_diagnostic, discretize, discretize_family, embed_family, limit_estimate, CoCauchyRow,
    DiagnosticOptions, LimitTable, WienerSpace,
};
use crate::manifold::{Manifold, Point};
use crate::partition::Partition;
use crate::pathfile::PathFile;
use crate::plot::{render_svg, PlotPoint, Reference, Series};
use crate::report::{csv_field, EstimateReport, CSV_HEADER};
use crate::stratonovich::{exact_form_residual, stratonovich_family, stratonovich_l2, ResidualReport};

/// Stream tag for the `sample` subcommand; one stream per path.
pub const SAMPLE_STREAM: u16 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Kernel,
    Sample,
    Estimate,
    Converge,
    Stratonovich,
    Develop,
    Geometric,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Kernel => "kernel",
            Command::Sample => "sample",
            Command::Estimate => "estimate",
            Command::Converge => "converge",
            Command::Stratonovich => "stratonovich",
            Command::Develop => "develop",
            Command::Geometric => "geometric",
        }
    }
}

/// Everything a run produces before it is written anywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub json: Value,
    pub csv: Option<String>,
    pub svg: Option<String>,
}

/// Resolved run settings: command-line flags override the config file.
#[derive(Clone, Debug)]
pub struct Context {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub exec: Exec,
}

impl Context {
    pub fn new(config: ExperimentConfig, seed: Option<u64>, workers: Option<usize>) -> Result<Self> {
        if workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        let seed = seed.unwrap_or(config.seed);
        let workers = workers.or(config.workers).unwrap_or_else(crate::exec::default_workers);
        Ok(Context { config, seed, exec: Exec::parallel(workers) })
    }

    fn manifold(&self) -> Result<Manifold> {
        self.config.manifold.clone().validated().map_err(|e| Error::Config(e.to_string()))
    }

    fn space(&self) -> Result<WienerSpace> {
        let m = self.manifold()?;
        let base = self.config.base(&m)?;
        WienerSpace::new(m, base)
    }

    fn budget(&self, samples: usize) -> McBudget {
        McBudget::new(samples, self.seed).with_exec(self.exec)
    }

    fn level_budgets(&self, levels: usize) -> Result<Vec<McBudget>> {
        Ok(self.config.level_samples(levels)?.into_iter().map(|n| self.budget(n)).collect())
    }

    /// Budget for diagnostics: `samples`, else the largest per-level budget.
    fn diagnostic_budget(&self) -> Result<McBudget> {
        let n = match (self.config.samples, &self.config.budgets) {
            (Some(n), _) => n,
            (None, Some(b)) => b.iter().copied().max().unwrap_or(0),
            (None, None) => return Err(Error::Config("missing samples".into())),
        };
        Ok(self.budget(n))
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn coords(p: &Point) -> Vec<f64> {
    p.coords().to_vec()
}

/// Run one configured subcommand. `develop` goes through [`develop_file`].
pub fn run(command: Command, ctx: &Context) -> Result<RunOutput> {
    match command {
        Command::Kernel => kernel(ctx),
        Command::Sample => sample(ctx),
        Command::Estimate => estimate(ctx),
        Command::Converge => converge(ctx),
        Command::Stratonovich => stratonovich(ctx),
        Command::Geometric => geometric(ctx),
        Command::Develop => {
            let d = ctx.config.develop.as_ref().ok_or_else(|| Error::Config("missing [develop]".into()))?;
            develop_file(&d.input, &d.output)
        }
    }
}

fn kernel(ctx: &Context) -> Result<RunOutput> {
    let m = ctx.manifold()?;
    let x = ctx.config.base(&m)?;
    let kc = ctx.config.kernel.as_ref().ok_or_else(|| Error::Config("missing [kernel]".into()))?;
    let y = match &kc.target {
        Some(c) => m.point(c).map_err(|e| Error::Config(format!("kernel.target: {e}")))?,
        None => x.clone(),
    };
    let ev = KernelEvaluator::new(m.clone());
    let mut records = Vec::new();
    let mut csv = String::from("manifold,t,value,normalization_residual\n");
    for &t in &kc.times {
        let value = ev.kernel(t, &x, &y)?;
        let normalization = ev.normalization_check(t, &x)?;
        let _ = writeln!(csv, "{},{t},{value},{normalization}", csv_field(&m.name()));
        records.push(json!({
            "manifold": m.name(),
            "t": t,
            "x": coords(&x),
            "y": coords(&y),
            "value": value,
            "residuals": { "normalization": normalization },
        }));
    }
    let semigroup = match (kc.s, kc.t) {
        (Some(s), Some(t)) => Some(json!({ "s": s, "t": t, "residual": ev.semigroup_check(s, t, &x, &y)? })),
        (None, None) => None,
        _ => return Err(Error::Config("kernel.s and kernel.t must be given together".into())),
    };
    let json = json!({
        "command": "kernel",
        "manifold": m.name(),
        "records": records,
        "semigroup": semigroup,
        "clip_events": ev.clip_events(),
    });
    Ok(RunOutput { json, csv: Some(csv), svg: None })
}

fn sample(ctx: &Context) -> Result<RunOutput> {
    let space = ctx.space()?;
    let partition = ctx.config.require_partition()?.single()?;
    let count = ctx.config.samples.ok_or_else(|| Error::Config("missing samples".into()))?;
    let measure = space.measure(partition.clone())?;
    let stream = StreamId::new(SAMPLE_STREAM, 0);
    let paths = ctx.exec.map(count, |i| {
        let mut rng = stream_rng(ctx.seed, stream, i);
        measure.sample_skeleton(&mut rng)
    });
    let paths = paths.into_iter().collect::<Result<Vec<_>>>()?;
    let dim = space.manifold().coord_len();
    let mut csv = String::from("path,index,t");
    for k in 0..dim {
        let _ = write!(csv, ",x{k}");
    }
    csv.push_str(",seed,partition\n");
    let desc = csv_field(&partition.descriptor());
    let mut out = Vec::with_capacity(paths.len());
    for (i, s) in paths.iter().enumerate() {
        let mut vertices = vec![coords(s.base())];
        vertices.extend(s.points().iter().map(coords));
        for (j, (v, t)) in vertices.iter().zip(partition.times()).enumerate() {
            let _ = write!(csv, "{i},{j},{t}");
            for c in v {
                let _ = write!(csv, ",{c}");
            }
            let _ = writeln!(csv, ",{},{desc}", ctx.seed);
        }
        out.push(vertices);
    }
    let json = json!({
        "command": "sample",
        "manifold": space.manifold().name(),
        "partition": partition.descriptor(),
        "times": partition.times(),
        "seed": ctx.seed,
        "paths": out,
    });
    Ok(RunOutput { json, csv: Some(csv), svg: None })
}

fn estimate(ctx: &Context) -> Result<RunOutput> {
    let space = ctx.space()?;
    let partition = ctx.config.require_partition()?.single()?;
    let f = discretize(space.manifold(), ctx.config.require_functional()?, partition.clone())?;
    let measure = space.measure(partition)?;
    let report = match ctx.config.method {
        MethodChoice::Mc => {
            let samples = ctx.config.samples.ok_or_else(|| Error::Config("missing samples".into()))?;
            expectation_mc(&measure, &f, &ctx.budget(samples))?
        }
        MethodChoice::Quadrature => expectation_quadrature(&measure, &f, ctx.config.grid)?,
    };
    let csv = format!("{CSV_HEADER}\n{}\n", report.csv_row());
    Ok(RunOutput { json: to_value(&report)?, csv: Some(csv), svg: None })
}

fn references(ctx: &Context) -> Vec<Reference> {
    ctx.config.reference.map(|value| Reference { name: "reference".into(), value }).into_iter().collect()
}

fn points(levels: &[EstimateReport]) -> Vec<PlotPoint> {
    levels.iter().map(|r| PlotPoint { mesh: r.mesh, estimate: r.estimate, ci95: r.ci95 }).collect()
}

const TABLE_HEADER: &str = "level,n,mesh,partition,estimate,stderr,ci95,samples,rejected,delta,delta_stderr,seed,workers";

/// One row per chain level; `delta` is the co-Cauchy distance to the previous level.
fn level_table(table: &LimitTable, rows: &[CoCauchyRow], seed: u64) -> String {
    let mut csv = format!("{TABLE_HEADER}\n");
    for (k, r) in table.levels.iter().enumerate() {
        let (delta, delta_se) = match k.checked_sub(1).and_then(|j| rows.get(j)) {
            Some(row) => (row.delta.to_string(), row.stderr.to_string()),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            csv,
            "{k},{},{},{},{},{},{},{},{},{delta},{delta_se},{seed},{}",
            r.n,
            r.mesh,
            csv_field(&r.partition),
            r.estimate,
            r.stderr,
            r.ci95,
            r.samples,
            r.rejected,
            r.workers
        );
    }
    csv
}

fn converge(ctx: &Context) -> Result<RunOutput> {
    let space = ctx.space()?;
    let m = space.manifold().clone();
    let chain = ctx.config.require_partition()?.chain()?;
    let f = ctx.config.require_functional()?;
    let family = match ctx.config.embed_root {
        Some(root) => embed_family(&discretize(&m, f, Partition::uniform(root)?.shared())?, &chain)?,
        None => discretize_family(&m, f, &chain)?,
    };
    let table = limit_estimate(&space, &family, &ctx.level_budgets(chain.len())?)?;
    let options = DiagnosticOptions { p: ctx.config.p.unwrap_or(2.0), budget: ctx.diagnostic_budget()?, quadrature: true };
    let (co_cauchy, density) = if chain.len() >= 2 {
        (co_cauchy_diagnostic(&space, &family, &options)?, density_diagnostic(&space, &family, &options)?)
    } else {
        (Vec::new(), Vec::new())
    };
    let csv = level_table(&table, &co_cauchy, ctx.seed);
    let svg = render_svg(
        &format!("{} on {}", family.label(), m.name()),
        "estimate",
        &[Series { name: family.label().to_string(), points: points(&table.levels) }],
        &references(ctx),
    );
    let json = json!({
        "command": "converge",
        "functional": family.label(),
        "provenance": to_value(&family.provenance)?,
        "p": options.p,
        "seed": ctx.seed,
        "table": to_value(&table)?,
        "co_cauchy": to_value(&co_cauchy)?,
        "density": to_value(&density)?,
    });
    Ok(RunOutput { json, csv: Some(csv), svg: Some(svg) })
}

fn stratonovich(ctx: &Context) -> Result<RunOutput> {
    let space = ctx.space()?;
    let m = space.manifold().clone();
    let field = ctx.config.field.as_ref().ok_or_else(|| Error::Config("missing [field]".into()))?;
    let chain = ctx.config.require_partition()?.chain()?;
    let budgets = ctx.level_budgets(chain.len())?;
    let mut l2 = Vec::with_capacity(chain.len());
    let mut residuals: Vec<ResidualReport> = Vec::new();
    for (p, b) in chain.levels().iter().zip(&budgets) {
        l2.push(stratonovich_l2(&space, field, p.clone(), b)?);
        if let Some(g) = &ctx.config.scalar {
            residuals.push(exact_form_residual(&space, g, p.clone(), b)?);
        }
    }
    let co_cauchy = if chain.len() >= 2 {
        let family = stratonovich_family(&m, field, &chain)?;
        let options = DiagnosticOptions { p: 2.0, budget: ctx.diagnostic_budget()?, quadrature: false };
        co_cauchy_diagnostic(&space, &family, &options)?
    } else {
        Vec::new()
    };
    let mut csv = String::from(
        "level,n,mesh,partition,l2,l2_stderr,delta,delta_stderr,residual_ms,residual_ms_stderr,residual_rms,residual_rms_stderr,seed,workers\n",
    );
    for (k, r) in l2.iter().enumerate() {
        let (delta, delta_se) = match k.checked_sub(1).and_then(|j| co_cauchy.get(j)) {
            Some(row) => (row.delta.to_string(), row.stderr.to_string()),
            None => (String::new(), String::new()),
        };
        let res = match residuals.get(k) {
            Some(rr) => format!("{},{},{},{}", rr.mean_square.estimate, rr.mean_square.stderr, rr.rms.estimate, rr.rms.stderr),
            None => ",,,".to_string(),
        };
        let _ = writeln!(
            csv,
            "{k},{},{},{},{},{},{delta},{delta_se},{res},{},{}",
            r.n,
            r.mesh,
            csv_field(&r.partition),
            r.estimate,
            r.stderr,
            ctx.seed,
            r.workers
        );
    }
    let mut series = vec![Series { name: "E|midpoint sum|^2".into(), points: points(&l2) }];
    if !residuals.is_empty() {
        let rms: Vec<EstimateReport> = residuals.iter().map(|r| r.rms.clone()).collect();
        series.push(Series { name: "exact-form residual (rms)".into(), points: points(&rms) });
    }
    let svg = render_svg(&format!("{} on {}", field.label(), m.name()), "value", &series, &[]);
    let json = json!({
        "command": "stratonovich",
        "field": field.label(),
        "seed": ctx.seed,
        "l2": to_value(&l2)?,
        "co_cauchy": to_value(&co_cauchy)?,
        "exact_form_residual": to_value(&residuals)?,
    });
    Ok(RunOutput { json, csv: Some(csv), svg: Some(svg) })
}

fn geometric(ctx: &Context) -> Result<RunOutput> {
    let space = ctx.space()?;
    let chain = ctx.config.require_partition()?.chain()?;
    let f = ctx.config.require_functional()?;
    let scheme = ctx.config.scheme.unwrap_or(SchemeChoice::Both);
    let table = geometric_limit_estimate(&space, f, &chain, &ctx.level_budgets(chain.len())?, scheme)?;
    let mut csv = format!("{CSV_HEADER}\n");
    let mut series = Vec::new();
    for t in [&table.geometric, &table.cylinder].into_iter().flatten() {
        for r in &t.levels {
            let _ = writeln!(csv, "{}", r.csv_row());
        }
        if let Some(first) = t.levels.first() {
            series.push(Series { name: first.scheme.as_str().to_string(), points: points(&t.levels) });
        }
    }
    let svg = render_svg(&format!("{} on {}", f.label(), space.manifold().name()), "estimate", &series, &references(ctx));
    let json = json!({
        "command": "geometric",
        "functional": f.label(),
        "scheme": to_value(&scheme)?,
        "seed": ctx.seed,
        "geometric": to_value(&table.geometric)?,
        "cylinder": to_value(&table.cylinder)?,
        "cross_check": to_value(&table.cross_check)?,
    });
    Ok(RunOutput { json, csv: Some(csv), svg: Some(svg) })
}

fn io_context(e: std::io::Error, what: &str, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("cannot {what} {}: {e}", path.display())))
}

/// Develop a flat path file into a curved one, or anti-develop a curved one.
pub fn develop_file(input: &Path, output: &Path) -> Result<RunOutput> {
    let text = std::fs::read_to_string(input).map_err(|e| io_context(e, "read", input))?;
    let (result, direction, energy_in, energy_out, reorth) = match PathFile::parse(&text)? {
        PathFile::Flat { manifold, base, path } => {
            let gamma = develop(&manifold, &path, &base, None)?;
            let (e_in, e_out, r) = (energy_flat(&path), energy_curved(&gamma), gamma.reorthonormalizations);
            (PathFile::Curved { manifold, path: gamma }, "develop", e_in, e_out, r)
        }
        PathFile::Curved { manifold, path } => {
            let alpha = antidevelop(&path);
            let (e_in, e_out) = (energy_curved(&path), energy_flat(&alpha));
            (PathFile::Flat { manifold, base: path.base.clone(), path: alpha }, "antidevelop", e_in, e_out, path.reorthonormalizations)
        }
    };
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_context(e, "create", dir))?;
    }
    std::fs::write(output, result.render()).map_err(|e| io_context(e, "write", output))?;
    let json = json!({
        "command": "develop",
        "direction": direction,
        "input": input.display().to_string(),
        "output": output.display().to_string(),
        "energy_in": energy_in,
        "energy_out": energy_out,
        "reorthonormalizations": reorth,
    });
    Ok(RunOutput { json, csv: None, svg: None })
}

/// `flag`, then the environment override, then the config file.
pub fn resolve_out_dir(flag: Option<PathBuf>, config: Option<&OutputConfig>) -> Option<PathBuf> {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| config.and_then(|c| c.dir.clone()))
}

/// Write `<stem>.json`, `<stem>.csv` and `<stem>.svg` as requested; returns the paths written.
pub fn persist(out: &RunOutput, dir: &Path, stem: &str, format: OutputFormat, plot: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| io_context(e, "create", dir))?;
    let mut written = Vec::new();
    let mut write = |ext: &str, body: &str| -> Result<()> {
        let path = dir.join(format!("{stem}.{ext}"));
        std::fs::write(&path, body).map_err(|e| io_context(e, "write", &path))?;
        written.push(path);
        Ok(())
    };
    if format.json() {
        write("json", &format!("{}\n", serde_json::to_string_pretty(&out.json)?))?;
    }
    if format.csv() {
        if let Some(csv) = &out.csv {
            write("csv", csv)?;
        }
    }
    if plot {
        if let Some(svg) = &out.svg {
            write("svg", svg)?;
        }
    }
    Ok(written)
}
