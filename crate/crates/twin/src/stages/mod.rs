//! Pipeline stages. Each stage reads its upstream artifacts from the output
//! directory, writes its own, and records both in the manifest.

use std::path::{Path, PathBuf};

use crate::artifacts::{self as art, fmt};
use crate::config::PipelineConfig;
use crate::error::{TwinError, TwinResult};
use crate::manifest;

pub mod estimate;
pub mod network;
pub mod physical;
pub mod summary;

pub use physical::simulate_truth;
pub use summary::{write as write_summary, Summary, SUMMARY};

pub const FIGURES: &str = "figures";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Generate,
    Simulate,
    Sense,
    Fuse,
    Calibrate,
    Graph,
    Equity,
    Intervene,
}

const STREAM_FILES: [&str; 5] = [art::IOT, art::UAV, art::UAV_IDX, art::SAT, art::SAT_IDX];

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Generate,
        Stage::Simulate,
        Stage::Sense,
        Stage::Fuse,
        Stage::Calibrate,
        Stage::Graph,
        Stage::Equity,
        Stage::Intervene,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Simulate => "simulate",
            Stage::Sense => "sense",
            Stage::Fuse => "fuse",
            Stage::Calibrate => "calibrate",
            Stage::Graph => "graph",
            Stage::Equity => "equity",
            Stage::Intervene => "intervene",
        }
    }

    /// Artifacts that must exist before the stage can run.
    pub fn required_inputs(self) -> Vec<&'static str> {
        let mut v = match self {
            Stage::Generate => return Vec::new(),
            _ => vec![art::NODES, art::TIME],
        };
        match self {
            Stage::Sense => v.push(art::TRUTH),
            Stage::Fuse | Stage::Calibrate => v.extend(STREAM_FILES),
            _ => {}
        }
        v
    }

    /// Artifacts read when present.
    fn optional_inputs(self) -> Vec<&'static str> {
        match self {
            Stage::Intervene => vec![art::EQUITY_NODES],
            _ => Vec::new(),
        }
    }
}

/// What a stage run leaves behind.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRun {
    pub stage: Stage,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

pub(crate) struct Ctx<'a> {
    pub config: &'a PipelineConfig,
    pub dir: &'a Path,
    pub warnings: Vec<String>,
}

impl Ctx<'_> {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn figure(&self, name: &str) -> String {
        format!("{FIGURES}/{name}")
    }
}

pub(crate) fn figure_csv<R, I>(ctx: &Ctx, name: &str, header: &[&str], rows: I) -> TwinResult<String>
where
    R: IntoIterator<Item = String>,
    I: IntoIterator<Item = R>,
{
    let rel = ctx.figure(name);
    let head: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    art::write_csv(&ctx.path(&rel), &head, rows)?;
    Ok(rel)
}

pub(crate) fn time_cell(timeline: &hazard_twin_core::scenario::HazardTimeline, k: usize) -> [String; 2] {
    [k.to_string(), fmt(timeline.t_h[k])]
}

/// Runs one stage against the artifacts in `dir`.
pub fn run_stage(stage: Stage, config: &PipelineConfig, dir: &Path) -> TwinResult<StageRun> {
    config.validate()?;
    let required = stage.required_inputs();
    if let Some(missing) = required.iter().find(|f| !dir.join(f).is_file()) {
        return Err(TwinError::MissingArtifact(missing.to_string()));
    }
    let mut inputs: Vec<String> = required.iter().map(|s| s.to_string()).collect();
    inputs.extend(stage.optional_inputs().into_iter().filter(|f| dir.join(f).is_file()).map(String::from));

    let mut ctx = Ctx { config, dir, warnings: Vec::new() };
    let outputs = match stage {
        Stage::Generate => physical::generate(&mut ctx),
        Stage::Simulate => physical::simulate(&mut ctx),
        Stage::Sense => physical::sense(&mut ctx),
        Stage::Fuse => estimate::fuse(&mut ctx),
        Stage::Calibrate => estimate::calibrate(&mut ctx),
        Stage::Graph => network::graph(&mut ctx),
        Stage::Equity => network::equity(&mut ctx),
        Stage::Intervene => network::intervene(&mut ctx),
    }?;
    manifest::record(dir, stage.name(), config, &inputs, &outputs)?;
    Ok(StageRun { stage, outputs, warnings: ctx.warnings })
}

/// Runs every stage in order, then writes `summary.json`.
pub fn run_pipeline(config: &PipelineConfig, dir: &Path) -> TwinResult<(Vec<StageRun>, Summary)> {
    let mut runs = Vec::with_capacity(Stage::ALL.len());
    for stage in Stage::ALL {
        let run = run_stage(stage, config, dir)
            .map_err(|e| TwinError::Stage { stage: stage.name(), source: Box::new(e) })?;
        runs.push(run);
    }
    let summary = write_summary(dir)?;
    Ok((runs, summary))
}
