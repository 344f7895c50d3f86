//! Error reports, rate fits and phase-space histograms.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use hamrom::diagnostics::{fit_rate, phase_space_histogram, relative_errors};
use hamrom::io;
use serde_json::json;

use super::offline::load_trajectories;
use super::{trajectory_file, RunContext, Source};
use crate::config::ParamSet;

pub fn evaluate(ctx: &mut RunContext, set: ParamSet) -> anyhow::Result<()> {
    let refs = load_trajectories(ctx, "fom", set, "simulate")?;
    let tests = load_trajectories(ctx, "rom", set, "predict")?;
    let period = 2.0 * std::f64::consts::PI / ctx.cfg.scenario.k;
    let report = relative_errors(&refs, &tests, Some(period))?;

    let path = ctx.path(format!("errors_{}.csv", set.name()));
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    io::write_atomic(&path, &buf)?;
    ctx.output(&path)?;

    let path = ctx.path(format!("errors_{}_mu.csv", set.name()));
    let mut buf = Vec::new();
    writeln!(buf, "alpha,sigma,err_x,err_v")?;
    for (mu, (ex, ev)) in ctx.cfg.params(set).iter().zip(report.err_x_mu.iter().zip(&report.err_v_mu)) {
        writeln!(buf, "{},{},{ex:e},{ev:e}", mu[0], mu[1])?;
    }
    io::write_atomic(&path, &buf)?;
    ctx.output(&path)?;

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    ctx.manifest.summary = json!({
        "set": set.name(),
        "err_x_mu": report.err_x_mu,
        "err_v_mu": report.err_v_mu,
        "err_x_mean": mean(&report.err_x_mu),
        "err_v_mean": mean(&report.err_v_mu),
    });
    Ok(())
}

/// `(t, field_amplitude)` columns of a diagnostic series.
pub fn read_amplitude_series(path: &Path) -> anyhow::Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| anyhow!("{}: empty series", path.display()))?.split(',').collect();
    let col = header
        .iter()
        .position(|h| *h == "field_amplitude")
        .ok_or_else(|| anyhow!("{}: no field_amplitude column", path.display()))?;
    let (mut t, mut e) = (Vec::new(), Vec::new());
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |i: usize| -> anyhow::Result<f64> {
            fields
                .get(i)
                .ok_or_else(|| anyhow!("{}: short row {}", path.display(), n + 2))?
                .parse::<f64>()
                .with_context(|| format!("{}: row {}", path.display(), n + 2))
        };
        t.push(parse(0)?);
        e.push(parse(col)?);
    }
    Ok((t, e))
}

pub fn rates(ctx: &mut RunContext, set: ParamSet, source: Source) -> anyhow::Result<()> {
    let (dir, producer, name) = match source {
        Source::Fom => ("fom", "simulate", "fom"),
        Source::Rom => ("rom", "predict", "rom"),
    };
    let windows = ctx.cfg.rate_windows();
    let mut buf = Vec::new();
    writeln!(buf, "index,alpha,sigma,t0,t1,slope,intercept,r2,peaks")?;
    let mut slopes = Vec::new();
    for (i, mu) in ctx.cfg.params(set).to_vec().iter().enumerate() {
        let path = ctx.input(trajectory_file(dir, set, i, "_diag.csv"), producer)?;
        let (t, e) = read_amplitude_series(&path)?;
        for w in &windows {
            let fit = fit_rate(&t, &e, *w).with_context(|| format!("{} trajectory {i}", set.name()))?;
            writeln!(buf, "{i},{},{},{},{},{:e},{:e},{:e},{}", mu[0], mu[1], w[0], w[1], fit.slope, fit.intercept, fit.r2, fit.peaks.len())?;
            slopes.push(json!({ "index": i, "window": w, "slope": fit.slope, "r2": fit.r2 }));
        }
    }
    let out = ctx.path(format!("rates_{name}_{}.csv", set.name()));
    io::write_atomic(&out, &buf)?;
    ctx.output(&out)?;
    ctx.manifest.summary = json!({ "source": name, "set": set.name(), "fits": slopes });
    Ok(())
}

pub fn hist(ctx: &mut RunContext, input: &Path, column: Option<usize>) -> anyhow::Result<()> {
    let path: PathBuf = if input.is_file() { input.to_path_buf() } else { ctx.path(input) };
    if !path.is_file() {
        return Err(super::MissingInput { path, producer: "simulate or predict" }.into());
    }
    ctx.manifest.input(&ctx.out_dir, &path)?;
    let (set, _) = io::read_snapshots(&path)?;
    if set.is_empty() {
        return Err(anyhow!("{}: no snapshots", path.display()));
    }
    let j = column.unwrap_or(set.len() - 1);
    if j >= set.len() {
        return Err(anyhow!("column {j} out of range: {} holds {} snapshots", path.display(), set.len()));
    }
    let h = ctx.cfg.histogram.clone();
    let length = 2.0 * std::f64::consts::PI / ctx.cfg.scenario.k;
    let grid = phase_space_histogram(&set.state(j), length, h.bins_x, h.bins_v, h.v_range)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("snapshots");
    let out = ctx.path(format!("hist_{stem}_{j}.csv"));
    let mut buf = Vec::new();
    grid.write_csv(&mut buf)?;
    io::write_atomic(&out, &buf)?;
    ctx.output(&out)?;
    ctx.manifest.summary = json!({ "input": path, "column": j, "step": set.meta()[j].step, "bins": [h.bins_x, h.bins_v] });
    Ok(())
}
