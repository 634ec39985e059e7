//! Command-line interface.

use std::io::Write;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use mmreach::system::VectorField;

use crate::config::{preset_source, Overrides, Pipeline, Problem, ProblemConfig, PRESETS};
use crate::output::{fmt17, RegionReport, Writer};
use crate::run::{audit, compute, document, Computed, DocContext};

#[derive(Debug, Parser)]
#[command(
    name = "mmreach",
    version,
    about = "Reachable-set over-approximation for mixed-monotone systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a configuration without running it.
    Check(Common),
    /// Compute the over-approximation and write result and plot files.
    Reach(Common),
    /// Sample trajectories and audit them against the computed sets.
    /// Exits with status 2 if any sample lies outside.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Override the configured sample count.
        #[arg(long, value_name = "N")]
        samples: Option<usize>,
        /// Scale every audited set about its center before the audit
        /// (debugging aid; values below 1 plant violations).
        #[arg(long, value_name = "FACTOR")]
        shrink: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Problem configuration file (TOML).
    #[arg(
        long,
        value_name = "PATH",
        required_unless_present = "preset",
        conflicts_with = "preset"
    )]
    pub config: Option<PathBuf>,
    /// Use a built-in configuration instead of a file.
    #[arg(long, value_name = "NAME", value_parser = preset_names())]
    pub preset: Option<String>,
    /// Sampling seed (overrides the configuration).
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Integration step (overrides the configuration).
    #[arg(long, value_name = "X")]
    pub dt: Option<f64>,
    /// Output directory (overrides the configuration; default `out`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Print nothing on success.
    #[arg(long)]
    pub quiet: bool,
}

fn preset_names() -> clap::builder::PossibleValuesParser {
    clap::builder::PossibleValuesParser::new(PRESETS.iter().map(|(n, _)| *n))
}

/// Outcome of a command that did not fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Clean,
    Violations,
}

struct Loaded {
    problem: Problem,
    source: String,
    stem: String,
}

fn load(c: &Common, overrides: Overrides) -> Result<Loaded> {
    let (mut cfg, source, fallback) = match (&c.config, &c.preset) {
        (Some(path), _) => {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "result".into());
            (ProblemConfig::load(path)?, path.display().to_string(), stem)
        }
        (None, Some(name)) => (
            ProblemConfig::from_toml(preset_source(name)?)?,
            format!("preset:{name}"),
            name.clone(),
        ),
        (None, None) => bail!("give --config or --preset"),
    };
    cfg.apply(&Overrides {
        seed: c.seed,
        dt: c.dt,
        ..overrides
    });
    let stem = cfg.output.name.clone().unwrap_or(fallback);
    let problem = cfg.validate()?;
    Ok(Loaded { problem, source, stem })
}

fn out_dir(c: &Common, p: &Problem) -> PathBuf {
    c.out
        .clone()
        .or_else(|| p.config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<Status> {
    match cli.command {
        Command::Check(c) => check(&c, stdout),
        Command::Reach(c) => reach(&c, stdout),
        Command::Verify {
            common,
            samples,
            shrink,
        } => verify(&common, samples, shrink, stdout),
    }
}

fn check(c: &Common, stdout: &mut dyn Write) -> Result<Status> {
    let l = load(c, Overrides::default())?;
    let p = &l.problem;
    if !c.quiet {
        writeln!(
            stdout,
            "ok: {} (n = {}, m = {}, initial set {}, pipeline {}, {} set(s), method {}, sampling {})",
            l.source,
            p.system.state_dim(),
            p.system.dist_dim(),
            p.config.initial_set.kind(),
            p.pipeline.name(),
            p.plan.as_ref().map_or(1, |pl| pl.len()),
            p.config.method.name(),
            p.sampling
                .as_ref()
                .map_or("none".to_string(), |s| format!("{} samples", s.config.count)),
        )?;
    }
    Ok(Status::Clean)
}

fn reach(c: &Common, stdout: &mut dyn Write) -> Result<Status> {
    let l = load(c, Overrides::default())?;
    let p = &l.problem;
    let computed = compute(p)?;
    let ctx = DocContext {
        command: "reach",
        source: &l.source,
        timestamp: now(),
        shrink: None,
    };
    let doc = document(p, &computed, &ctx, None)?;
    let mut w = Writer::new(&out_dir(c, p), &l.stem)?;
    w.json(".json", &doc)?;
    if let Some(curve) = &doc.area_curve {
        w.area_curve(curve)?;
    }
    write_polygons(&mut w, p, &computed)?;
    if !c.quiet {
        summarize(stdout, &computed)?;
        for f in w.written() {
            writeln!(stdout, "wrote {}", f.display())?;
        }
    }
    Ok(Status::Clean)
}

fn write_polygons(w: &mut Writer, p: &Problem, c: &Computed) -> Result<()> {
    if p.system.state_dim() != 2 {
        return Ok(());
    }
    let x0 = p.initial.polygons()?;
    for (k, poly) in x0.iter().enumerate() {
        let suffix = if x0.len() == 1 {
            "_X0.txt".to_string()
        } else {
            format!("_X0_{}.txt", k + 1)
        };
        w.polygon(&suffix, poly.vertices())?;
    }
    if p.pipeline == Pipeline::Box {
        let b = &c.boxes[0].1;
        let poly = mmreach::geometry::Parallelotope::from_box(b.clone()).to_polygon()?;
        w.polygon("_box.txt", poly.vertices())?;
    }
    for (label, q) in &c.parallelotopes {
        w.polygon(&format!("_{label}.txt"), q.to_polygon()?.vertices())?;
    }
    if let Some(poly) = &c.intersection {
        w.polygon("_intersection.txt", poly.vertices())?;
    }
    Ok(())
}

fn vec_str(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn summarize(out: &mut dyn Write, c: &Computed) -> Result<()> {
    for (label, q) in &c.parallelotopes {
        writeln!(
            out,
            "{label}: coords lo {} hi {}, volume {:.6}",
            vec_str(q.coords().lo()),
            vec_str(q.coords().hi()),
            q.volume()
        )?;
    }
    for (label, b) in &c.boxes {
        writeln!(out, "{label}: lo {} hi {}", vec_str(b.lo()), vec_str(b.hi()))?;
    }
    if !c.area_curve.is_empty() {
        let curve: Vec<String> = c.area_curve.iter().map(|(_, a)| format!("{a:.4}")).collect();
        writeln!(out, "area curve: {}", curve.join(", "))?;
    }
    if let Some(poly) = &c.intersection {
        writeln!(
            out,
            "intersection: {} vertices, area {}",
            poly.len(),
            fmt17(poly.area())
        )?;
    }
    if let Some(v) = &c.volume {
        writeln!(out, "intersection volume: {:.6} ± {:.6}", v.volume, v.ci95)?;
    }
    Ok(())
}

fn verify(c: &Common, samples: Option<usize>, shrink: Option<f64>, stdout: &mut dyn Write) -> Result<Status> {
    if let Some(f) = shrink {
        if !(f > 0.0 && f.is_finite()) {
            bail!("--shrink must be a positive factor, got {f}");
        }
    }
    let l = load(
        c,
        Overrides {
            samples,
            ..Overrides::default()
        },
    )?;
    let p = &l.problem;
    if p.sampling.is_none() {
        bail!("{}: verification needs a [sampling] section", l.source);
    }
    let computed = compute(p)?;
    let reports = audit(p, &computed, shrink.unwrap_or(1.0))?;
    let status = if reports.iter().all(|r| r.violations == 0) {
        Status::Clean
    } else {
        Status::Violations
    };
    let ctx = DocContext {
        command: "verify",
        source: &l.source,
        timestamp: now(),
        shrink,
    };
    let doc = document(p, &computed, &ctx, Some(reports.clone()))?;
    let mut w = Writer::new(&out_dir(c, p), &l.stem)?;
    w.json("_verify.json", &doc)?;
    if !c.quiet || status == Status::Violations {
        report(stdout, &reports)?;
    }
    if !c.quiet {
        for f in w.written() {
            writeln!(stdout, "wrote {}", f.display())?;
        }
    }
    Ok(status)
}

fn report(out: &mut dyn Write, reports: &[RegionReport]) -> Result<()> {
    for r in reports {
        let margin = r.worst_margin.map_or("n/a".to_string(), |m| format!("{m:.3e}"));
        let verdict = if r.violations == 0 { "ok" } else { "VIOLATED" };
        writeln!(
            out,
            "{verdict} {}: {} points, {} outside, worst margin {margin}{}",
            r.region,
            r.total,
            r.violations,
            if r.diverged > 0 {
                format!(", {} diverged", r.diverged)
            } else {
                String::new()
            }
        )?;
        for wit in &r.witnesses {
            writeln!(out, "  witness {} margin {:.3e}", vec_str(&wit.point), wit.margin)?;
        }
    }
    Ok(())
}
