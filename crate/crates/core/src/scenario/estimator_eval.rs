//! Synthetic corpus generation and estimator error sweeps.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{create_dir, load_json, write_json, ScenarioError};
use crate::estimator::corpus::{
    calibrate_corpus, evaluate, generate_corpus, load_calibration, load_corpus, save_corpus, Corpus, CorpusSpec,
    EvalReport,
};
use crate::estimator::Calibration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorEvalConfig {
    pub name: String,
    /// Corpus directory. `gen-corpus` writes here; evaluation reads it when
    /// it exists and otherwise generates the corpus in memory. Relative
    /// paths resolve against the config file.
    #[serde(default)]
    pub corpus_dir: Option<PathBuf>,
    #[serde(default)]
    pub corpus: CorpusSpec,
}

fn estimator_err(e: crate::estimator::EstimatorError) -> ScenarioError {
    ScenarioError::Io(e.to_string())
}

fn resolve(cfg: &EstimatorEvalConfig, base: &Path, out: &Path) -> PathBuf {
    match &cfg.corpus_dir {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => base.join(p),
        None => out.join(&cfg.name).join("corpus"),
    }
}

/// Generates the corpus and its calibration and writes them to disk.
pub fn gen_corpus(cfg: &EstimatorEvalConfig, base: &Path, out: &Path) -> Result<(PathBuf, Calibration), ScenarioError> {
    let dir = resolve(cfg, base, out);
    let corpus = generate_corpus(&cfg.corpus);
    let cal = calibrate_corpus(&corpus).map_err(estimator_err)?;
    save_corpus(&dir, &corpus, Some(&cal)).map_err(estimator_err)?;
    Ok((dir, cal))
}

/// The corpus from disk when present, otherwise generated; with its calibration.
pub fn obtain_corpus(cfg: &EstimatorEvalConfig, base: &Path, out: &Path) -> Result<(Corpus, Calibration), ScenarioError> {
    let dir = resolve(cfg, base, out);
    if dir.join("corpus.json").exists() {
        let corpus = load_corpus(&dir).map_err(estimator_err)?;
        let cal_path = dir.join("calibration.json");
        let cal = if cal_path.exists() {
            load_calibration(&cal_path, &corpus.background).map_err(estimator_err)?
        } else {
            calibrate_corpus(&corpus).map_err(estimator_err)?
        };
        Ok((corpus, cal))
    } else {
        let corpus = generate_corpus(&cfg.corpus);
        let cal = calibrate_corpus(&corpus).map_err(estimator_err)?;
        Ok((corpus, cal))
    }
}

/// Evaluates and writes `<out>/<name>/estimator_report.json` and `estimator_table.txt`.
pub fn run_estimator_eval(cfg: &EstimatorEvalConfig, base: &Path, out: &Path) -> Result<EvalReport, ScenarioError> {
    let (corpus, cal) = obtain_corpus(cfg, base, out)?;
    let report = evaluate(&corpus, &cal);
    let dir = out.join(&cfg.name);
    create_dir(&dir)?;
    write_json(&dir.join("estimator_report.json"), &report)?;
    let table = dir.join("estimator_table.txt");
    std::fs::write(&table, report.table()).map_err(|e| ScenarioError::Io(format!("{}: {e}", table.display())))?;
    Ok(report)
}

pub fn load_eval_config(path: &Path) -> Result<EstimatorEvalConfig, ScenarioError> {
    load_json(path)
}
