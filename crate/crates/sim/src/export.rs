//! CSV and text outputs: per-step traces, plot series and batch tables.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::batch::BatchReport;
use crate::config::SimConfig;
use crate::runner::{RunResult, TraceRow};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub s: f64,
    pub e_y: f64,
    pub de_y: f64,
    pub e_psi: f64,
    pub de_psi: f64,
    pub u_op: f64,
    pub u_applied: f64,
    pub mode: String,
    pub decision: String,
    pub reason: String,
    pub objective: Option<f64>,
}

impl From<&TraceRow> for TraceRecord {
    fn from(r: &TraceRow) -> Self {
        Self {
            step: r.step,
            s: r.s,
            e_y: r.x.e_y,
            de_y: r.x.de_y,
            e_psi: r.x.e_psi,
            de_psi: r.x.de_psi,
            u_op: r.u_op,
            u_applied: r.u_applied,
            mode: r.mode.as_str().into(),
            decision: r.decision.map_or("", |d| d.as_str()).into(),
            reason: r.reason.as_str().into(),
            objective: r.objective,
        }
    }
}

const TRACE_HEADER: [&str; 12] = ["step", "s", "e_y", "de_y", "e_psi", "de_psi", "u_op", "u_applied", "mode", "decision", "reason", "objective"];

fn create(path: &Path) -> anyhow::Result<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new().has_headers(false).from_path(path).with_context(|| format!("creating {}", path.display()))
}

/// Writes the trace; an empty run still gets the header line.
pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> anyhow::Result<()> {
    let mut w = create(path)?;
    w.write_record(TRACE_HEADER)?;
    for r in trace {
        w.serialize(TraceRecord::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> anyhow::Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize().map(|x| x.map_err(Into::into)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub series: String,
    pub s: f64,
    pub e_y: f64,
}

fn pt(series: &str, s: f64, e_y: f64) -> PlotPoint {
    PlotPoint { series: series.into(), s, e_y }
}

/// Series for an `(s, e_y)` figure: driven paths, the last supervisor plan,
/// the obstacle outline, road edges and the safe-reference line.
pub fn plot_series(sc: &Scenario, cfg: &SimConfig, runs: &[&RunResult], safe_reference: f64) -> Vec<PlotPoint> {
    let mut out = Vec::new();
    for run in runs {
        let name = format!("path_{}", run.arch);
        out.extend(run.trace.iter().map(|r| pt(&name, r.s, r.x.e_y)));
        let plan = format!("plan_{}", run.arch);
        out.extend(run.final_plan.iter().enumerate().map(|(i, x)| pt(&plan, sc.position(run.final_plan_step + i, cfg), x[0])));
        if let Some(d) = run.detection_step {
            out.push(pt(&format!("detection_{}", run.arch), sc.position(d, cfg), run.trace[d].x.e_y));
        }
    }
    let o = &sc.obstacle;
    let (lo, hi) = (o.lateral_center - o.width / 2.0, o.lateral_center + o.width / 2.0);
    for (s, e) in [(o.s_start, lo), (o.s_end(), lo), (o.s_end(), hi), (o.s_start, hi), (o.s_start, lo)] {
        out.push(pt("obstacle", s, e));
    }
    let end = sc.end_position(cfg);
    for (name, e) in [("road_top", cfg.road_half_width), ("road_bottom", -cfg.road_half_width), ("safe_reference", safe_reference)] {
        out.push(pt(name, 0.0, e));
        out.push(pt(name, end, e));
    }
    out
}

pub fn write_plot_csv(path: &Path, points: &[PlotPoint]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run_summary(sc: &Scenario, run: &RunResult) -> String {
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
    format!(
        "arch: {}\ntier: {}\nv_x: {:.3}\nobstacle: s = {:.3}, length = {:.3}, width = {:.3}, center = {:.3}\nsuccess: {}\nfailure: {}\ndetection step: {}\ndetection distance: {}\nmin clearance: {:.4}\nqp solves: {}\n",
        run.arch,
        sc.tier,
        sc.v_x,
        sc.obstacle.s_start,
        sc.obstacle.length,
        sc.obstacle.width,
        sc.obstacle.lateral_center,
        run.success,
        run.failure_str(),
        run.detection_step.map_or("-".to_string(), |d| d.to_string()),
        opt(run.detection_distance),
        run.min_clearance,
        run.qp_solves,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub id: usize,
    pub tier: String,
    pub v_x: f64,
    pub obstacle_s: f64,
    pub obstacle_length: f64,
    pub obstacle_width: f64,
    pub side: String,
    pub seed: u64,
    pub rsca_success: bool,
    pub rsca_detection_step: Option<usize>,
    pub rsca_detection_distance: Option<f64>,
    pub rsca_min_clearance: f64,
    pub rsca_failure: String,
    pub rsca_controller_after_detection: Option<bool>,
    pub sca_success: bool,
    pub sca_detection_step: Option<usize>,
    pub sca_min_clearance: f64,
    pub sca_failure: String,
    pub sca_controller_failed: bool,
    pub earlier_by: Option<i64>,
}

pub fn batch_records(report: &BatchReport) -> Vec<BatchRecord> {
    report
        .rows
        .iter()
        .map(|r| BatchRecord {
            id: r.scenario.id,
            tier: r.scenario.tier.as_str().into(),
            v_x: r.scenario.v_x,
            obstacle_s: r.scenario.obstacle.s_start,
            obstacle_length: r.scenario.obstacle.length,
            obstacle_width: r.scenario.obstacle.width,
            side: r.side.into(),
            seed: r.scenario.seed,
            rsca_success: r.rsca.success,
            rsca_detection_step: r.rsca.detection_step,
            rsca_detection_distance: r.rsca.detection_distance,
            rsca_min_clearance: r.rsca.min_clearance,
            rsca_failure: r.rsca.failure.into(),
            rsca_controller_after_detection: r.rsca.controller_after_detection,
            sca_success: r.sca.success,
            sca_detection_step: r.sca.detection_step,
            sca_min_clearance: r.sca.min_clearance,
            sca_failure: r.sca.failure.into(),
            sca_controller_failed: r.sca_controller_failed,
            earlier_by: r.earlier_by,
        })
        .collect()
}

pub fn write_batch_csv(path: &Path, report: &BatchReport) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in batch_records(report) {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_batch_csv(path: &Path) -> anyhow::Result<Vec<BatchRecord>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize().map(|x| x.map_err(Into::into)).collect()
}

/// `batch.csv` and `report.txt` in `dir`.
pub fn write_batch(dir: &Path, report: &BatchReport) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let csv = dir.join("batch.csv");
    write_batch_csv(&csv, report)?;
    let txt = dir.join("report.txt");
    std::fs::write(&txt, report.summary()).with_context(|| format!("writing {}", txt.display()))?;
    Ok(vec![csv, txt])
}
