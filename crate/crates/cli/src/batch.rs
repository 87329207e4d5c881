//! Batches: every input run under several seeds, then aggregated.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use scenforge::evalkit::{
    compare_pipelines, conformity, conformity_table, diversity, ComparisonReport, ConformityReport, ConformityTable, DiversityReport,
    FailureClass, PerformanceReport, ScenarioOutcome,
};

use crate::config::PipelineConfig;
use crate::inputs::InputSpec;
use crate::pipeline::{baseline_performance, claim_dir, run_pipeline_in, RunOutcome, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub input: String,
    pub seed: u64,
    pub ok: bool,
    pub failed_stage: Option<Stage>,
    pub failure: Option<FailureClass>,
    pub trace_hash: Option<String>,
}

/// The batch aggregate. Holds no timestamps or paths, so reruns of one
/// configuration serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub runs: Vec<RunSummary>,
    pub success_rate: f64,
    pub overall: ConformityReport,
    pub conformity: ConformityTable,
    pub diversity: Option<DiversityReport>,
    pub comparison: Option<ComparisonReport>,
}

impl BatchReport {
    pub fn to_document(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    /// Plain-text tables for the terminal.
    pub fn render(&self) -> String {
        let mut out = format!("runs: {}  success rate: {:.2}\n\n", self.runs.len(), self.success_rate);
        out.push_str(&self.conformity.to_table().to_string());
        if let Some(d) = &self.diversity {
            out.push('\n');
            out.push_str(&d.network_table().to_string());
            out.push('\n');
            out.push_str(&d.placement_table().to_string());
        }
        if let Some(c) = &self.comparison {
            out.push('\n');
            out.push_str(&c.to_table().to_string());
        }
        out
    }
}

#[derive(Debug)]
pub struct BatchOutput {
    pub dir: PathBuf,
    pub report: BatchReport,
    pub runs: Vec<RunOutcome>,
}

/// Seed of variation `k` of input `i`.
pub fn run_seed(cfg: &PipelineConfig, input_index: usize, k: usize) -> u64 {
    cfg.global_seed.wrapping_add((input_index * cfg.batch_size + k) as u64)
}

pub fn aggregate(cfg: &PipelineConfig, runs: &[RunOutcome]) -> BatchReport {
    let summaries: Vec<RunSummary> = runs
        .iter()
        .map(|r| {
            let failure = r.manifest.failure();
            RunSummary {
                input: r.manifest.input.clone(),
                seed: r.manifest.seed,
                ok: r.manifest.ok(),
                failed_stage: failure.map(|f| f.0),
                failure: failure.map(|f| f.1),
                trace_hash: r.execution.report.as_ref().map(|x| x.trace_hash.clone()),
            }
        })
        .collect();
    let outcomes: Vec<ScenarioOutcome> = runs.iter().filter_map(|r| r.execution.outcome()).collect();
    let ok: Vec<&RunOutcome> = runs.iter().filter(|r| r.execution.ok()).collect();
    let stats: Vec<_> = ok.iter().filter_map(|r| r.execution.report.as_ref().map(|x| x.stats.clone())).collect();
    let comparison = if cfg.compare_baseline && !ok.is_empty() {
        let ours: Vec<PerformanceReport> = ok.iter().map(|r| r.execution.report.as_ref().expect("ok").performance.clone()).collect();
        let baseline: Result<Vec<PerformanceReport>, String> = ok
            .par_iter()
            .map(|r| baseline_performance(cfg, r.execution.bundle.as_ref().expect("ok")))
            .collect();
        match baseline {
            Ok(b) => compare_pipelines(&ours, &b).ok(),
            Err(e) => {
                log::warn!("baseline arm failed: {e}");
                None
            }
        }
    } else {
        None
    };
    BatchReport {
        success_rate: if runs.is_empty() { 0.0 } else { ok.len() as f64 / runs.len() as f64 },
        runs: summaries,
        overall: conformity(&outcomes),
        conformity: conformity_table(&outcomes),
        diversity: (!stats.is_empty()).then(|| diversity(&stats)),
        comparison,
    }
}

fn pool(cfg: &PipelineConfig) -> io::Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().map_err(io::Error::other)
}

/// Runs `batch_size` seeds per input in parallel under
/// `<output_dir>/<label>-<timestamp>-<seed>/runs/` and writes
/// `aggregate.json` and `tables.txt` next to them.
pub fn run_batch_labeled(inputs: &[InputSpec], cfg: &PipelineConfig, label: &str) -> io::Result<BatchOutput> {
    if inputs.is_empty() {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "a batch needs at least one input"));
    }
    let (_, dir) = claim_dir(&cfg.output_dir, &format!("{label}-"), cfg.global_seed)?;
    let root = dir.join("runs");
    let jobs: Vec<(usize, u64)> =
        (0..inputs.len()).flat_map(|i| (0..cfg.batch_size).map(move |k| (i, k))).map(|(i, k)| (i, run_seed(cfg, i, k))).collect();
    let runs: Vec<RunOutcome> = pool(cfg)?.install(|| {
        jobs.par_iter()
            .map(|&(i, seed)| run_pipeline_in(&root, &inputs[i].name, &inputs[i].input, cfg, seed))
            .collect::<io::Result<Vec<_>>>()
    })?;
    let report = pool(cfg)?.install(|| aggregate(cfg, &runs));
    fs::write(dir.join("aggregate.json"), report.to_document())?;
    fs::write(dir.join("tables.txt"), report.render())?;
    Ok(BatchOutput { dir, report, runs })
}

pub fn run_batch(inputs: &[InputSpec], cfg: &PipelineConfig) -> io::Result<BatchOutput> {
    run_batch_labeled(inputs, cfg, "batch")
}

/// Reads a batch aggregate back.
pub fn read_aggregate(dir: &Path) -> io::Result<BatchReport> {
    let s = fs::read_to_string(dir.join("aggregate.json"))?;
    serde_json::from_str(&s).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dir: &Path, batch_size: usize) -> PipelineConfig {
        PipelineConfig { output_dir: dir.to_path_buf(), batch_size, workers: 2, ..Default::default() }
    }

    #[test]
    fn seeds_are_distinct_offsets() {
        let c = PipelineConfig { global_seed: 100, batch_size: 10, ..Default::default() };
        assert_eq!(run_seed(&c, 0, 0), 100);
        assert_eq!(run_seed(&c, 2, 3), 123);
    }

    #[test]
    fn batch_of_one_equals_the_single_run() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(dir.path(), 1);
        let input = InputSpec::text("t", "a red car follows a truck on a highway");
        let out = run_batch(&[input], &c).unwrap();
        assert_eq!(out.runs.len(), 1);
        let single = out.runs[0].execution.outcome().unwrap();
        assert_eq!(out.report.overall, conformity(&[single]));
        assert_eq!(out.report.runs[0].trace_hash.as_deref(), Some(out.runs[0].execution.report.as_ref().unwrap().trace_hash.as_str()));
        assert_eq!(read_aggregate(&out.dir).unwrap(), out.report);
    }

    #[test]
    fn rerun_gives_identical_aggregate() {
        let dir = tempfile::tempdir().unwrap();
        let c = PipelineConfig { compare_baseline: true, ..cfg(dir.path(), 3) };
        let inputs = [InputSpec::text("a", "construction zone test"), InputSpec::text("b", "intersection left turn conflict")];
        let a = run_batch(&inputs, &c).unwrap();
        let b = run_batch(&inputs, &c).unwrap();
        assert_ne!(a.dir, b.dir);
        assert_eq!(fs::read(a.dir.join("aggregate.json")).unwrap(), fs::read(b.dir.join("aggregate.json")).unwrap());
        assert_eq!(a.report.runs.len(), 6);
        assert!(a.report.comparison.is_some());
    }

    #[test]
    fn partial_failures_do_not_stop_the_batch() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(dir.path(), 2);
        let inputs = [InputSpec::text("empty", ""), InputSpec::text("ok", "two cars on a highway")];
        let out = run_batch(&inputs, &c).unwrap();
        assert_eq!(out.report.runs.iter().filter(|r| r.ok).count(), 2);
        assert_eq!(out.report.success_rate, 0.5);
        assert!(out.report.runs[..2].iter().all(|r| r.failed_stage == Some(Stage::Interpret)));
    }
}
