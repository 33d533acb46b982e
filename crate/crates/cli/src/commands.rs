use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use sojourn_core::asymptotics::{write_predictions_file, PredictionRow, Predictor};
use sojourn_core::berman::{default_step, estimate_berman, BermanTable};
use sojourn_core::experiments::{
    compound_poisson_convergence_check, intermediate_horizon_ratio_check, run_comparison, CheckSettings,
    ExperimentConfig,
};

use crate::manifest::Run;
use crate::{CheckArgs, CompareArgs, CpCheckArgs, EstimateArgs, PredictArgs, RatioCheckArgs};

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_writer(path: &Path) -> anyhow::Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

fn read_table(path: &Path) -> anyhow::Result<BermanTable> {
    BermanTable::read(path).with_context(|| format!("reading Berman table {}", path.display()))
}

fn table_warnings(run: &mut Run, table: &BermanTable) {
    if table.clipped_eigenvalues {
        run.warn("Berman table was built with clipped embedding eigenvalues");
    }
    if table.rejected > 0 {
        run.warn(format!("Berman table rejected {} zero sojourn samples", table.rejected));
    }
}

pub fn estimate_constant(a: EstimateArgs) -> anyhow::Result<()> {
    let mut run = Run::start("estimate-constant", &a.out, Some(a.seed))?;
    let step = a.step.unwrap_or_else(|| default_step(a.alpha, a.s_max));
    let table = estimate_berman(a.alpha, &a.x_grid, a.s_max, step, a.replications, a.seed)?;
    table_warnings(&mut run, &table);
    let path = run.output("berman_table.json");
    std::fs::write(&path, table.to_json()? + "\n")?;
    println!("B({}) = {} ± {}", a.x_grid[0], table.b_values[0], table.b_se[0]);
    run.finish()?;
    Ok(())
}

pub fn predict(a: PredictArgs) -> anyhow::Result<()> {
    let mut run = Run::start("predict", &a.out, None)?;
    let model = a.model.build()?;
    let table = read_table(&a.berman_table)?;
    table_warnings(&mut run, &table);
    let mut predictor = Predictor::new(&model, a.horizon, &table)?;
    let mut rows = Vec::new();
    for &u in &a.u_grid {
        for &x in &a.x_grid {
            let p = predictor.predict(u, x)?;
            rows.push(PredictionRow::new(&p, model.alpha(), &a.horizon));
        }
    }
    let path = run.output("predictions.csv");
    write_predictions_file(&path, &rows)?;
    run.finish()?;
    Ok(())
}

pub fn compare(a: CompareArgs) -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config).with_context(|| format!("config {}", a.config.display()))?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let mut run = Run::start("compare", &a.out, Some(cfg.seed))?;
    run.config(&a.config);
    let table = read_table(&cfg.berman_table)?;
    table_warnings(&mut run, &table);
    let report = run_comparison(&cfg, &table)?;
    if !report.grid_matched {
        run.warn(format!(
            "Berman table step {} differs from 1/points_per_unit = {}",
            report.berman_step,
            1.0 / cfg.points_per_unit
        ));
    }
    for r in report.rows.iter().filter(|r| !r.flags.is_empty()) {
        run.warn(format!("u={} x={}: {}", r.u, r.x, r.flags));
    }
    report.write_csv(run.output("report.csv"))?;
    report.write_sidecar(run.output("report.json"))?;
    run.finish()?;
    Ok(())
}

fn settings(c: &CheckArgs) -> CheckSettings {
    CheckSettings {
        u_grid: c.u_grid.clone(),
        x_grid: c.x_grid.clone(),
        replications: c.replications,
        seed: c.seed,
        points_per_unit: c.points_per_unit,
    }
}

pub fn cp_check(a: CpCheckArgs) -> anyhow::Result<()> {
    let c = &a.common;
    let mut run = Run::start("cp-check", &c.out, Some(c.seed))?;
    let model = c.model.build()?;
    let table = read_table(&c.berman_table)?;
    table_warnings(&mut run, &table);
    let bounds = match &a.l_bounds {
        Some(b) => (b[0], b[1]),
        None => (
            a.l_grid.iter().copied().fold(f64::INFINITY, f64::min),
            a.l_grid.iter().copied().fold(0.0, f64::max),
        ),
    };
    // a single-point grid gets a degenerate interval widened by one ulp
    let bounds = if bounds.0 == bounds.1 { (bounds.0, bounds.1.next_up()) } else { bounds };
    let report = compound_poisson_convergence_check(model.alpha(), &table, &model, &a.l_grid, bounds, &settings(c))?;
    write_rows(&run.output("cp_check.csv"), &report.rows)?;
    write_json(&run.output("cp_check.json"), &report)?;
    run.finish()?;
    Ok(())
}

pub fn ratio_check(a: RatioCheckArgs) -> anyhow::Result<()> {
    let c = &a.common;
    let mut run = Run::start("ratio-check", &c.out, Some(c.seed))?;
    let model = c.model.build()?;
    let table = read_table(&c.berman_table)?;
    table_warnings(&mut run, &table);
    let report = intermediate_horizon_ratio_check(model.alpha(), &table, &model, a.rule, &settings(c))?;
    for f in &report.flags {
        run.warn(format!("horizon rule: {f}"));
    }
    write_rows(&run.output("ratio_check.csv"), &report.rows)?;
    write_json(&run.output("ratio_check.json"), &report)?;
    run.finish()?;
    Ok(())
}
