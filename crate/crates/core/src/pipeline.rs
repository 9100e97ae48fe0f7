//! The four benchmark stages: dataset generation, pre-training, the paired
//! trial grid, and report emission.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::human::{generate_dataset, pairs_from_smoothed};
use crate::io::{
    csv_document, dataset_csv, loss_trace_csv, read_dataset, read_provenance, read_trial_log, trial_log_csv,
    write_atomic, ModelFile, Provenance,
};
use crate::linear::{train_linear, LinearParams, TrainingPair};
use crate::metrics::{aggregate, mean_target_distance, prediction_error_series, score_trial, ScoreReport, Summary};
use crate::network::{train_network, NetworkParams};
use crate::parallel::{map_with, Execution};
use crate::predictor::{AdaptationSettings, PredictorKind, TrainedModels};
use crate::robot::run_trial;

pub const DATASET_FILE: &str = "dataset.csv";
pub const MODELS_DIR: &str = "models";
pub const LOGS_DIR: &str = "logs";
pub const REPORT_DIR: &str = "report";
pub const GROUND_TRUTH_DIR: &str = "ground_truth";

pub const REPORT_FILES: [&str; 5] = [
    "prediction_error.csv",
    "safety_efficiency.csv",
    "per_pattern.csv",
    "error_curves.csv",
    "scatter.csv",
];

pub fn model_file_name(kind: PredictorKind) -> String {
    format!("{}.model", kind.name())
}

pub fn trial_file_name(pattern: &str, trial: usize) -> String {
    format!("{pattern}_{trial:03}.csv")
}

/// Generate the seeded training trajectories and write the dataset CSV.
pub fn cmd_gen_data(config: &ExperimentConfig, out_path: &Path) -> Result<usize> {
    config.validate()?;
    let trajectories = generate_dataset(&config.patterns, config.trajectories_per_pattern, config.data_seed())?;
    let text = dataset_csv(&Provenance::of(config), &trajectories)?;
    write_atomic(out_path, text.as_bytes())?;
    info!("wrote {} trajectories to {}", trajectories.len(), out_path.display());
    Ok(trajectories.len())
}

fn check_hash(config: &ExperimentConfig, prov: &Provenance, path: &Path) -> Result<()> {
    if prov.hash != config.hash() {
        return Err(Error::Config(format!(
            "{} was produced with config {}, current config is {}",
            path.display(),
            prov.hash,
            config.hash()
        )));
    }
    Ok(())
}

/// Pre-train the linear model and the network; write all four model files
/// plus loss traces.
pub fn cmd_train(config: &ExperimentConfig, dataset: &Path, out_dir: &Path) -> Result<()> {
    config.validate()?;
    let (prov, trajectories) = read_dataset(dataset)?;
    check_hash(config, &prov, dataset)?;
    let mut pairs: Vec<TrainingPair> = Vec::new();
    for t in &trajectories {
        pairs.extend(pairs_from_smoothed(&t.smoothed, t.label)?);
    }
    if pairs.is_empty() {
        return Err(Error::Validation(format!(
            "{} holds no training pairs",
            dataset.display()
        )));
    }
    let linear_cfg = config.linear_training();
    let network_cfg = config.network_training();
    let (linear, network) = rayon_join(
        || train_linear(&pairs, &linear_cfg),
        || train_network(&pairs, config.hidden_units, &network_cfg),
    );
    let (linear, network) = (linear?, network?);
    info!(
        "linear loss {:.6} -> {:.6}, network loss {:.6} -> {:.6}",
        linear.loss_trace[0],
        linear.loss_trace.last().unwrap(),
        network.loss_trace[0],
        network.loss_trace.last().unwrap()
    );

    let prov = Provenance::of(config);
    let adaptation = config.adaptation()?;
    let theta = vec![("theta".to_string(), linear.params.theta().clone())];
    let net = vec![
        ("hidden".to_string(), network.params.hidden_weights().clone()),
        ("output".to_string(), network.params.output_weights().clone()),
    ];
    let files = [
        (PredictorKind::FixedLinear, theta.clone(), None),
        (PredictorKind::AdaptiveLinear, theta, Some(adaptation)),
        (PredictorKind::FixedNetwork, net.clone(), None),
        (PredictorKind::AdaptiveNetwork, net, Some(adaptation)),
    ];
    for (kind, matrices, adaptation) in files {
        let file = ModelFile {
            kind,
            matrices,
            adaptation,
        };
        write_atomic(&out_dir.join(model_file_name(kind)), file.to_text(&prov).as_bytes())?;
    }
    write_atomic(
        &out_dir.join("linear_loss.csv"),
        loss_trace_csv(&prov, &linear.loss_trace).as_bytes(),
    )?;
    write_atomic(
        &out_dir.join("network_loss.csv"),
        loss_trace_csv(&prov, &network.loss_trace).as_bytes(),
    )?;
    Ok(())
}

#[cfg(feature = "parallel")]
fn rayon_join<A: Send, B: Send>(a: impl FnOnce() -> A + Send, b: impl FnOnce() -> B + Send) -> (A, B) {
    rayon::join(a, b)
}

#[cfg(not(feature = "parallel"))]
fn rayon_join<A, B>(a: impl FnOnce() -> A, b: impl FnOnce() -> B) -> (A, B) {
    (a(), b())
}

/// Models needed by `kinds`, read from `dir` and checked against `config`.
pub fn load_models(
    config: &ExperimentConfig,
    dir: &Path,
    kinds: &[PredictorKind],
) -> Result<Option<(TrainedModels, AdaptationSettings)>> {
    let needed: Vec<PredictorKind> = kinds.iter().copied().filter(|k| *k != PredictorKind::None).collect();
    if needed.is_empty() {
        return Ok(None);
    }
    let mut linear = None;
    let mut network = None;
    let mut adaptation = None;
    for kind in [
        PredictorKind::FixedLinear,
        PredictorKind::FixedNetwork,
        PredictorKind::AdaptiveLinear,
        PredictorKind::AdaptiveNetwork,
    ] {
        let path = dir.join(model_file_name(kind));
        if !path.exists() {
            if needed.contains(&kind) {
                return Err(Error::Config(format!("missing model file {}", path.display())));
            }
            continue;
        }
        let (prov, file) = ModelFile::read(&path)?;
        check_hash(config, &prov, &path)?;
        if file.kind != kind {
            return Err(Error::Config(format!("{} holds a {} model", path.display(), file.kind)));
        }
        if kind.uses_network() {
            let params = NetworkParams::new(file.matrix("hidden")?.clone(), file.matrix("output")?.clone())?;
            if let Some(prev) = &network {
                if prev != &params {
                    return Err(Error::Config(format!(
                        "{} disagrees with its frozen counterpart",
                        path.display()
                    )));
                }
            }
            network = Some(params);
        } else {
            let params = LinearParams::new(file.matrix("theta")?.clone())?;
            if let Some(prev) = &linear {
                if prev != &params {
                    return Err(Error::Config(format!(
                        "{} disagrees with its frozen counterpart",
                        path.display()
                    )));
                }
            }
            linear = Some(params);
        }
        if let Some(a) = file.adaptation {
            adaptation = Some(a);
        }
    }
    let models = TrainedModels {
        linear: linear.ok_or_else(|| Error::Config("no linear model file".into()))?,
        network: network.ok_or_else(|| Error::Config("no network model file".into()))?,
    };
    Ok(Some((models, adaptation.unwrap_or(config.adaptation()?))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub written: usize,
    pub skipped: usize,
}

fn completed(path: &Path, hash: &str) -> bool {
    path.exists() && read_provenance(path).is_ok_and(|p| p.hash == hash)
}

/// Run every (setting, pattern, trial) cell plus the human-free ground-truth
/// runs; completed files with a matching config hash are kept.
pub fn cmd_run(
    config: &ExperimentConfig,
    models_dir: &Path,
    out_dir: &Path,
    execution: Execution,
) -> Result<RunSummary> {
    config.validate()?;
    let loaded = load_models(config, models_dir, &config.models)?;
    let prov = Provenance::of(config);
    let hash = config.hash();

    // (setting or None for ground truth, pattern, trial)
    let mut jobs: Vec<(Option<PredictorKind>, usize, usize)> = Vec::new();
    for p in 0..config.patterns.len() {
        for t in 0..config.trials_per_pattern_per_model {
            jobs.push((None, p, t));
            for &k in &config.models {
                jobs.push((Some(k), p, t));
            }
        }
    }
    let path_of = |job: &(Option<PredictorKind>, usize, usize)| -> PathBuf {
        let dir = job.0.map_or(GROUND_TRUTH_DIR, |k| k.name());
        out_dir
            .join(dir)
            .join(trial_file_name(&config.patterns[job.1].name, job.2))
    };
    let (done, todo): (Vec<_>, Vec<_>) = jobs.into_iter().partition(|j| completed(&path_of(j), &hash));
    if !done.is_empty() {
        info!("{} trials already complete; skipping", done.len());
    }

    let results = map_with(execution, &todo, |job| -> Result<()> {
        let (kind, p, t) = *job;
        let mut trial = config.trial_config(kind.unwrap_or(PredictorKind::None), p, t)?;
        if kind.is_none() {
            trial = trial.without_human();
        }
        let models = match (&loaded, trial.predictor) {
            (_, PredictorKind::None) => None,
            (Some((m, a)), _) => {
                trial.adaptation = *a;
                Some(m)
            }
            (None, k) => return Err(Error::Config(format!("no models loaded for {k}"))),
        };
        let log = run_trial(&trial, models)?;
        write_atomic(&path_of(job), trial_log_csv(&prov, &log).as_bytes())
    });
    for r in results {
        r?;
    }
    Ok(RunSummary {
        written: todo.len(),
        skipped: done.len(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x}"))
}

fn summary_cols(s: Option<&Summary>) -> [String; 2] {
    [fmt_opt(s.map(|s| s.mean)), fmt_opt(s.map(|s| s.variance))]
}

/// Score every log under `log_dir` and write the report tables.
pub fn cmd_report(log_dir: &Path, out_dir: &Path) -> Result<ScoreReport> {
    let gt_dir = log_dir.join(GROUND_TRUTH_DIR);
    let mut provenance: Option<Provenance> = None;
    let mut check = |path: &Path| -> Result<()> {
        let p = read_provenance(path)?;
        match &provenance {
            None => provenance = Some(p),
            Some(first) if first.hash != p.hash => {
                return Err(Error::Config(format!(
                    "{} has config hash {}, expected {}; refusing to mix runs",
                    path.display(),
                    p.hash,
                    first.hash
                )))
            }
            _ => {}
        }
        Ok(())
    };

    let mut log_files = Vec::new();
    let entries = std::fs::read_dir(log_dir).map_err(|e| Error::io(log_dir, e))?;
    let mut settings = BTreeSet::new();
    for e in entries {
        let e = e.map_err(|e| Error::io(log_dir, e))?;
        if e.path().is_dir() {
            settings.insert(e.file_name().to_string_lossy().to_string());
        }
    }
    for s in &settings {
        let dir = log_dir.join(s);
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        for f in &files {
            check(f)?;
        }
        log_files.push((s.clone(), files));
    }
    let prov = provenance.ok_or_else(|| Error::Argument(format!("no trial logs under {}", log_dir.display())))?;
    let config = prov.config()?;
    if config.hash() != prov.hash {
        return Err(Error::Config("embedded config does not match its hash".into()));
    }

    // (setting, pattern index, trial, path)
    let mut cells = Vec::new();
    for (setting, files) in &log_files {
        if setting == GROUND_TRUTH_DIR {
            continue;
        }
        let kind: PredictorKind = setting.parse()?;
        for (p, pattern) in config.patterns.iter().enumerate() {
            for t in 0..config.trials_per_pattern_per_model {
                let path = log_dir.join(setting).join(trial_file_name(&pattern.name, t));
                if files.contains(&path) {
                    cells.push((kind, p, t, path));
                } else {
                    warn!("missing trial log {}", path.display());
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::Argument(format!("no trial logs under {}", log_dir.display())));
    }

    let mut scores = Vec::with_capacity(cells.len());
    let mut curves = Vec::new();
    for (kind, p, t, path) in &cells {
        let trial = config.trial_config(*kind, *p, *t)?;
        let gt_path = gt_dir.join(trial_file_name(&config.patterns[*p].name, *t));
        let (_, gt) = read_trial_log(&gt_path, trial.without_human())?;
        let d_rt = mean_target_distance(&gt)?;
        let (_, log) = read_trial_log(path, trial)?;
        let pattern = &config.patterns[*p].name;
        scores.push(score_trial(kind.name(), pattern, *t, &log, d_rt)?);
        for (frame, e) in prediction_error_series(&log).into_iter().enumerate() {
            if let Some(e) = e {
                curves.push(vec![
                    kind.name().to_string(),
                    pattern.clone(),
                    t.to_string(),
                    frame.to_string(),
                    format!("{e}"),
                ]);
            }
        }
    }

    let report = aggregate(scores);
    let order: Vec<PredictorKind> = PredictorKind::ALL
        .into_iter()
        .filter(|k| report.per_model.contains_key(k.name()))
        .collect();

    let prediction_rows = order.iter().filter(|k| **k != PredictorKind::None).map(|k| {
        let s = &report.per_model[k.name()];
        let [m, v] = summary_cols(s.prediction_error.as_ref());
        vec![k.name().to_string(), m, v, s.safety.count.to_string()]
    });
    let safety_rows = order.iter().map(|k| {
        let s = &report.per_model[k.name()];
        let [pm, _] = summary_cols(s.prediction_error.as_ref());
        let [sm, sv] = summary_cols(Some(&s.safety));
        let [em, ev] = summary_cols(Some(&s.efficiency));
        vec![k.name().to_string(), pm, sm, sv, em, ev, s.safety.count.to_string()]
    });
    let mut pattern_rows = Vec::new();
    for k in &order {
        for pattern in &config.patterns {
            if let Some(s) = report.per_cell.get(&(k.name().to_string(), pattern.name.clone())) {
                let [pm, pv] = summary_cols(s.prediction_error.as_ref());
                let [sm, sv] = summary_cols(Some(&s.safety));
                let [em, ev] = summary_cols(Some(&s.efficiency));
                pattern_rows.push(vec![
                    k.name().to_string(),
                    pattern.name.clone(),
                    pm,
                    pv,
                    sm,
                    sv,
                    em,
                    ev,
                    s.safety.count.to_string(),
                ]);
            }
        }
    }
    let scatter_rows = report.trials.iter().map(|t| {
        vec![
            t.model.clone(),
            t.pattern.clone(),
            t.trial.to_string(),
            fmt_opt(t.prediction_error),
            format!("{}", t.safety),
            format!("{}", t.efficiency),
        ]
    });

    let docs = [
        csv_document(
            &prov,
            "prediction error per model",
            &["model", "prediction_error_mean", "prediction_error_variance", "trials"],
            prediction_rows,
        ),
        csv_document(
            &prov,
            "safety and efficiency per setting",
            &[
                "setting",
                "prediction_error_mean",
                "safety_mean",
                "safety_variance",
                "efficiency_mean",
                "efficiency_variance",
                "trials",
            ],
            safety_rows,
        ),
        csv_document(
            &prov,
            "metrics per setting and pattern",
            &[
                "setting",
                "pattern",
                "prediction_error_mean",
                "prediction_error_variance",
                "safety_mean",
                "safety_variance",
                "efficiency_mean",
                "efficiency_variance",
                "trials",
            ],
            pattern_rows,
        ),
        csv_document(
            &prov,
            "per-frame prediction error",
            &["model", "pattern", "trial", "frame", "error"],
            curves,
        ),
        csv_document(
            &prov,
            "per-trial safety and efficiency",
            &[
                "setting",
                "pattern",
                "trial",
                "prediction_error",
                "safety",
                "efficiency",
            ],
            scatter_rows,
        ),
    ];
    for (name, doc) in REPORT_FILES.iter().zip(docs) {
        write_atomic(&out_dir.join(name), doc.as_bytes())?;
    }
    Ok(report)
}
