//! On-disk formats: dataset CSV, model files, trial-log CSV, report CSVs.
//!
//! Every file starts with `#` comment lines carrying the config hash and the
//! canonical config JSON. Floats in CSVs use the shortest representation that
//! round-trips exactly; model files use 17 significant digits.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::human::HumanTrajectory;
use crate::predictor::{AdaptationSettings, PredictorKind};
use crate::rls::LambdaSchedule;
use crate::robot::{FrameRecord, ReplanReason, TrialConfig, TrialLog};
use crate::types::{ActionLabel, Position, PredictedTrajectory, FUTURE_DIM};

pub const DATASET_HEADER: [&str; 9] = ["trial_id", "frame", "label", "raw_x", "raw_y", "raw_z", "x", "y", "z"];

pub const TRIAL_LOG_HEADER: [&str; 21] = [
    "frame",
    "hx",
    "hy",
    "hz",
    "rx",
    "ry",
    "rz",
    "pred_m1_x",
    "pred_m1_y",
    "pred_m1_z",
    "pred_m2_x",
    "pred_m2_y",
    "pred_m2_z",
    "pred_m3_x",
    "pred_m3_y",
    "pred_m3_z",
    "min_dist",
    "replan_flag",
    "tx",
    "ty",
    "tz",
];

const HASH_PREFIX: &str = "# config_hash: ";
const CONFIG_PREFIX: &str = "# config: ";

/// Provenance lines found at the top of a file.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub hash: String,
    pub config_json: String,
}

impl Provenance {
    pub fn of(config: &ExperimentConfig) -> Self {
        Self {
            hash: config.hash(),
            config_json: config.canonical_json(),
        }
    }

    pub fn config(&self) -> Result<ExperimentConfig> {
        serde_json::from_str(&self.config_json)
            .map_err(|e| Error::Config(format!("embedded config does not parse: {e}")))
    }

    fn write(&self, out: &mut String, title: &str) {
        out.push_str(&format!(
            "# {title}\n{HASH_PREFIX}{}\n{CONFIG_PREFIX}{}\n",
            self.hash, self.config_json
        ));
    }
}

/// Splits leading comment lines from the body; returns the body's first line number.
fn split_header<'a>(path: &Path, text: &'a str) -> Result<(Provenance, &'a str, usize)> {
    let mut hash = None;
    let mut config = None;
    let mut rest = text;
    let mut line = 1;
    while rest.starts_with('#') {
        let end = rest.find('\n').map_or(rest.len(), |i| i + 1);
        let l = rest[..end].trim_end();
        if let Some(h) = l.strip_prefix(HASH_PREFIX) {
            hash = Some(h.to_string());
        } else if let Some(c) = l.strip_prefix(CONFIG_PREFIX) {
            config = Some(c.to_string());
        }
        rest = &rest[end..];
        line += 1;
    }
    match (hash, config) {
        (Some(hash), Some(config_json)) => Ok((Provenance { hash, config_json }, rest, line)),
        _ => Err(Error::format(path, 1, "missing config provenance header")),
    }
}

pub fn read_provenance(path: &Path) -> Result<Provenance> {
    let text = read_text(path)?;
    Ok(split_header(path, &text)?.0)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Write via a sibling temp file and rename, so readers never see partial files.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn csv_body(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// A CSV document with the provenance header.
pub fn csv_document(
    prov: &Provenance,
    title: &str,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> String {
    let mut out = String::new();
    prov.write(&mut out, title);
    out.push_str(&csv_body(header, rows));
    out
}

fn f(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(f).unwrap_or_default()
}

struct CsvRows<'a> {
    path: &'a Path,
    records: Vec<(usize, csv::StringRecord)>,
}

fn parse_csv<'a>(path: &'a Path, body: &str, first_line: usize, header: &[&str]) -> Result<CsvRows<'a>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let got = r
        .headers()
        .map_err(|e| Error::format(path, first_line, e.to_string()))?
        .clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(Error::format(
            path,
            first_line,
            format!(
                "unexpected header '{}', expected '{}'",
                got.iter().collect::<Vec<_>>().join(","),
                header.join(",")
            ),
        ));
    }
    let mut records = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(first_line, |p| first_line + p.line() as usize - 1);
            Error::format(path, line, e.to_string())
        })?;
        let line = rec
            .position()
            .map_or(first_line, |p| first_line + p.line() as usize - 1);
        records.push((line, rec));
    }
    Ok(CsvRows { path, records })
}

impl CsvRows<'_> {
    fn num<T: std::str::FromStr>(&self, line: usize, rec: &csv::StringRecord, col: usize) -> Result<T> {
        rec[col].parse().map_err(|_| {
            Error::format(
                self.path,
                line,
                format!("column {} is not a number: '{}'", col + 1, &rec[col]),
            )
        })
    }

    fn opt_num(&self, line: usize, rec: &csv::StringRecord, col: usize) -> Result<Option<f64>> {
        if rec[col].is_empty() {
            Ok(None)
        } else {
            self.num(line, rec, col).map(Some)
        }
    }

    fn position(&self, line: usize, rec: &csv::StringRecord, col: usize) -> Result<Position> {
        Ok(Position::new(
            self.num(line, rec, col)?,
            self.num(line, rec, col + 1)?,
            self.num(line, rec, col + 2)?,
        ))
    }

    fn opt_position(&self, line: usize, rec: &csv::StringRecord, col: usize) -> Result<Option<Position>> {
        let vals = [
            self.opt_num(line, rec, col)?,
            self.opt_num(line, rec, col + 1)?,
            self.opt_num(line, rec, col + 2)?,
        ];
        match vals {
            [Some(x), Some(y), Some(z)] => Ok(Some(Position::new(x, y, z))),
            [None, None, None] => Ok(None),
            _ => Err(Error::format(self.path, line, "partially empty position")),
        }
    }
}

// ---- dataset ----

pub fn dataset_csv(prov: &Provenance, trajectories: &[HumanTrajectory]) -> Result<String> {
    let mut rows = Vec::new();
    for (id, t) in trajectories.iter().enumerate() {
        let smoothed = t.smoothed()?;
        for (s, p) in t.samples.iter().zip(smoothed) {
            rows.push(vec![
                id.to_string(),
                s.frame.to_string(),
                t.label.to_string(),
                f(s.position.x),
                f(s.position.y),
                f(s.position.z),
                f(p.x),
                f(p.y),
                f(p.z),
            ]);
        }
    }
    Ok(csv_document(prov, "motion-bench dataset", &DATASET_HEADER, rows))
}

/// One trajectory read back from the dataset file.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTrajectory {
    pub trial_id: u64,
    pub label: ActionLabel,
    pub raw: Vec<Position>,
    pub smoothed: Vec<Position>,
}

pub fn read_dataset(path: &Path) -> Result<(Provenance, Vec<DatasetTrajectory>)> {
    let text = read_text(path)?;
    let (prov, body, first) = split_header(path, &text)?;
    let rows = parse_csv(path, body, first, &DATASET_HEADER)?;
    let mut out: Vec<DatasetTrajectory> = Vec::new();
    for (line, rec) in &rows.records {
        let line = *line;
        let id: u64 = rows.num(line, rec, 0)?;
        let frame: u64 = rows.num(line, rec, 1)?;
        let label_value: u8 = rows.num(line, rec, 2)?;
        let label = ActionLabel::new(label_value).map_err(|e| Error::format(path, line, e.to_string()))?;
        let raw = rows.position(line, rec, 3)?;
        let smoothed = rows.position(line, rec, 6)?;
        let start_new = out.last().is_none_or(|t| t.trial_id != id);
        if start_new {
            if out.iter().any(|t| t.trial_id == id) {
                return Err(Error::format(path, line, format!("trajectory {id} is not contiguous")));
            }
            if frame != 0 {
                return Err(Error::format(
                    path,
                    line,
                    format!("trajectory {id} starts at frame {frame}"),
                ));
            }
            out.push(DatasetTrajectory {
                trial_id: id,
                label,
                raw: Vec::new(),
                smoothed: Vec::new(),
            });
        }
        let t = out.last_mut().expect("pushed above");
        if frame != t.raw.len() as u64 {
            return Err(Error::format(
                path,
                line,
                format!("expected frame {}, got {frame}", t.raw.len()),
            ));
        }
        if label != t.label {
            return Err(Error::format(path, line, "label changes within a trajectory"));
        }
        t.raw.push(raw);
        t.smoothed.push(smoothed);
    }
    Ok((prov, out))
}

// ---- model files ----

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub kind: PredictorKind,
    pub matrices: Vec<(String, DMatrix<f64>)>,
    /// Present for adaptive variants.
    pub adaptation: Option<AdaptationSettings>,
}

impl ModelFile {
    pub fn matrix(&self, name: &str) -> Result<&DMatrix<f64>> {
        self.matrices
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Config(format!("model file for {} lacks matrix '{name}'", self.kind)))
    }

    pub fn to_text(&self, prov: &Provenance) -> String {
        let mut out = String::new();
        prov.write(&mut out, "motion-bench model");
        out.push_str(&format!("kind {}\n", self.kind));
        if let Some(a) = &self.adaptation {
            out.push_str(&format!("lambda1 {:.16e}\n", a.schedule.lambda1()));
            out.push_str(&format!("lambda2 {:.16e}\n", a.schedule.lambda2()));
            out.push_str(&format!("gain_scale {:.16e}\n", a.gain_scale));
        }
        for (name, m) in &self.matrices {
            out.push_str(&format!("matrix {name} {} {}\n", m.nrows(), m.ncols()));
            for r in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:.16e}", m[(r, c)])).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn read(path: &Path) -> Result<(Provenance, ModelFile)> {
        let text = read_text(path)?;
        let (prov, body, first) = split_header(path, &text)?;
        let mut lines = body.lines().enumerate().map(|(i, l)| (first + i, l)).peekable();
        let bad = |line: usize, msg: String| Error::format(path, line, msg);

        let mut kind = None;
        let mut lambda1 = None;
        let mut lambda2 = None;
        let mut gain_scale = None;
        let mut matrices = Vec::new();
        while let Some((ln, l)) = lines.next() {
            let parts: Vec<&str> = l.split_whitespace().collect();
            let scalar = |v: Option<&&str>| -> Result<f64> {
                v.and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(ln, format!("malformed line '{l}'")))
            };
            match parts.first().copied() {
                None => continue,
                Some("kind") => {
                    let k = parts.get(1).ok_or_else(|| bad(ln, "missing kind".into()))?;
                    kind = Some(k.parse::<PredictorKind>().map_err(|e| bad(ln, e.to_string()))?);
                }
                Some("lambda1") => lambda1 = Some(scalar(parts.get(1))?),
                Some("lambda2") => lambda2 = Some(scalar(parts.get(1))?),
                Some("gain_scale") => gain_scale = Some(scalar(parts.get(1))?),
                Some("matrix") => {
                    let (name, rows, cols) = match parts.as_slice() {
                        [_, name, r, c] => (
                            name.to_string(),
                            r.parse::<usize>().map_err(|_| bad(ln, "bad row count".into()))?,
                            c.parse::<usize>().map_err(|_| bad(ln, "bad column count".into()))?,
                        ),
                        _ => return Err(bad(ln, format!("malformed matrix header '{l}'"))),
                    };
                    let mut values = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        let (rl, row) = lines
                            .next()
                            .ok_or_else(|| bad(ln, format!("matrix {name} truncated")))?;
                        let vals: Vec<f64> = row
                            .split_whitespace()
                            .map(|v| v.parse::<f64>())
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|_| bad(rl, "non-numeric matrix entry".into()))?;
                        if vals.len() != cols {
                            return Err(bad(rl, format!("expected {cols} values, got {}", vals.len())));
                        }
                        values.extend(vals);
                    }
                    matrices.push((name, DMatrix::from_row_slice(rows, cols, &values)));
                }
                Some(other) => return Err(bad(ln, format!("unknown directive '{other}'"))),
            }
        }
        let kind = kind.ok_or_else(|| bad(first, "missing kind".into()))?;
        let adaptation = match (lambda1, lambda2, gain_scale) {
            (Some(l1), Some(l2), Some(g)) => Some(AdaptationSettings {
                schedule: LambdaSchedule::new(l1, l2)?,
                gain_scale: g,
            }),
            (None, None, None) => None,
            _ => return Err(bad(first, "incomplete adaptation settings".into())),
        };
        if kind.is_adaptive() != adaptation.is_some() {
            return Err(bad(first, format!("adaptation settings do not match kind {kind}")));
        }
        Ok((
            prov,
            ModelFile {
                kind,
                matrices,
                adaptation,
            },
        ))
    }
}

pub fn loss_trace_csv(prov: &Provenance, trace: &[f64]) -> String {
    csv_document(
        prov,
        "motion-bench training loss",
        &["epoch", "loss"],
        trace.iter().enumerate().map(|(i, l)| vec![i.to_string(), f(*l)]),
    )
}

// ---- trial logs ----

fn replan_code(r: Option<ReplanReason>) -> &'static str {
    match r {
        None => "0",
        Some(ReplanReason::NewTask) => "1",
        Some(ReplanReason::Proximity) => "2",
    }
}

pub fn trial_log_csv(prov: &Provenance, log: &TrialLog) -> String {
    let rows = log.records.iter().map(|r| {
        let mut row = Vec::with_capacity(TRIAL_LOG_HEADER.len());
        row.push(r.frame.to_string());
        match r.human {
            Some(h) => row.extend([f(h.x), f(h.y), f(h.z)]),
            None => row.extend([String::new(), String::new(), String::new()]),
        }
        row.extend([f(r.robot.x), f(r.robot.y), f(r.robot.z)]);
        match &r.prediction {
            Some(p) => row.extend(p.as_slice().iter().map(|v| f(*v))),
            None => row.extend(std::iter::repeat_n(String::new(), FUTURE_DIM)),
        }
        row.push(opt(r.min_dist));
        row.push(replan_code(r.replan).to_string());
        row.extend([f(r.target.x), f(r.target.y), f(r.target.z)]);
        row
    });
    csv_document(prov, "motion-bench trial log", &TRIAL_LOG_HEADER, rows)
}

/// Read a trial log; `config` is the trial it belongs to.
pub fn read_trial_log(path: &Path, config: TrialConfig) -> Result<(Provenance, TrialLog)> {
    let text = read_text(path)?;
    let (prov, body, first) = split_header(path, &text)?;
    let rows = parse_csv(path, body, first, &TRIAL_LOG_HEADER)?;
    let mut records = Vec::with_capacity(rows.records.len());
    for (i, (line, rec)) in rows.records.iter().enumerate() {
        let line = *line;
        let frame: u64 = rows.num(line, rec, 0)?;
        if frame != i as u64 {
            return Err(Error::format(path, line, format!("expected frame {i}, got {frame}")));
        }
        let mut pred = Vec::with_capacity(FUTURE_DIM);
        for c in 7..7 + FUTURE_DIM {
            pred.push(rows.opt_num(line, rec, c)?);
        }
        let prediction = if pred.iter().all(Option::is_none) {
            None
        } else {
            let vals: Option<Vec<f64>> = pred.into_iter().collect();
            let vals = vals.ok_or_else(|| Error::format(path, line, "partially empty prediction"))?;
            Some(PredictedTrajectory::from_slice(&vals)?)
        };
        let replan = match &rec[17] {
            "0" => None,
            "1" => Some(ReplanReason::NewTask),
            "2" => Some(ReplanReason::Proximity),
            other => return Err(Error::format(path, line, format!("bad replan flag '{other}'"))),
        };
        records.push(FrameRecord {
            frame,
            human: rows.opt_position(line, rec, 1)?,
            robot: rows.position(line, rec, 4)?,
            target: rows.position(line, rec, 18)?,
            prediction,
            min_dist: rows.opt_num(line, rec, 16)?,
            replan,
            projected: false,
        });
    }
    Ok((prov, TrialLog { config, records }))
}
