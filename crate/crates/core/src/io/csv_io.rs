use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::control::{LogRow, SolverRecord, TrialLog};
use crate::error::{Error, Result};
use crate::harness::{Dataset, Manifest, TurnpikeResult};
use crate::identify::{FitEvaluation, ReferenceTrajectory, TrialMeta};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// `# key: value` lines preceding the column header of every CSV written here.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvHeader {
    pub entries: BTreeMap<String, String>,
}

impl CsvHeader {
    pub fn new(config_hash: &str) -> Self {
        let mut h = CsvHeader::default();
        h.set("tool", format!("pointsim {TOOL_VERSION}"));
        h.set("config_hash", config_hash);
        h
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("# {k}: {v}\n")).collect()
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_csv(path: &Path, header: &CsvHeader, columns: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut text = header.render();
    text += &columns.join(",");
    text.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        text += &cells.join(",");
        text.push('\n');
    }
    write_text(path, &text)
}

/// Parsed CSV: header entries, column names and numeric rows.
struct Table {
    header: CsvHeader,
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_csv(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut header = CsvHeader::default();
    let mut body_start = 0;
    for line in text.split_inclusive('\n') {
        let Some(rest) = line.strip_prefix('#') else { break };
        body_start += line.len();
        if let Some((k, v)) = rest.trim().split_once(": ") {
            header.set(k.trim(), v.trim());
        }
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text[body_start..].as_bytes());
    let columns: Vec<String> = reader
        .headers()
        .map_err(|e| Error::data(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::data(path, e.to_string()))?;
        let row = rec
            .iter()
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::data(path, format!("row {}: {e}", i + 1)))?;
        rows.push(row);
    }
    if let Some(n) = header.get("rows") {
        let expected: usize = n.parse().map_err(|_| Error::data(path, format!("bad row count `{n}`")))?;
        if expected != rows.len() {
            return Err(Error::data(path, format!("expected {expected} rows, found {} (truncated file?)", rows.len())));
        }
    }
    Ok(Table { header, columns, rows })
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}_{i}"))
}

fn xyz(prefix: &str) -> impl Iterator<Item = String> + '_ {
    ["x", "y", "z"].into_iter().map(move |c| format!("{prefix}_{c}"))
}

/// Number of `prefix_<i>` columns.
fn count_indexed(columns: &[String], prefix: &str) -> usize {
    columns
        .iter()
        .filter(|c| c.strip_prefix(prefix).and_then(|r| r.strip_prefix('_')).is_some_and(|r| r.parse::<usize>().is_ok()))
        .count()
}

fn check_schema(path: &Path, found: &[String], expected: &[String]) -> Result<()> {
    let missing: Vec<String> = expected.iter().filter(|c| !found.contains(c)).cloned().collect();
    let unexpected: Vec<String> = found.iter().filter(|c| !expected.contains(c)).cloned().collect();
    if missing.is_empty() && unexpected.is_empty() && found == expected {
        return Ok(());
    }
    Err(Error::Schema { path: path.to_path_buf(), missing, unexpected })
}

/// Column names of a trial log with `n` joints.
pub fn trial_columns(n: usize) -> Vec<String> {
    let mut c = vec!["t".to_string()];
    for p in ["q", "qdot", "qddot", "sigma", "sigma_dot", "u_cmd", "u_noisy"] {
        c.extend(indexed(p, n));
    }
    c.extend(xyz("x_ee"));
    c.extend(xyz("x_p"));
    c
}

/// Solver statistics and trial facts stored next to the CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialSidecar {
    pub tool: String,
    pub config_hash: String,
    pub seed: u64,
    pub target: Vector3<f64>,
    pub hit_index: Option<usize>,
    pub aborted: Option<String>,
    pub solver: Vec<SolverRecord>,
}

/// Sidecar path for a trial CSV: `trial.csv` → `trial.meta.json`.
pub fn sidecar_path(csv: &Path) -> std::path::PathBuf {
    csv.with_extension("meta.json")
}

pub fn write_trial_csv(log: &TrialLog, path: impl AsRef<Path>, config_hash: &str) -> Result<()> {
    let path = path.as_ref();
    let n = log.rows.first().map_or(0, |r| r.q.len());
    let mut h = CsvHeader::new(config_hash);
    h.set("rows", log.rows.len().to_string());
    h.set("seed", log.seed.to_string());
    h.set("target", format!("{:?} {:?} {:?}", log.target.x, log.target.y, log.target.z));
    h.set("hit_index", log.hit_index.map_or("none".into(), |i| i.to_string()));
    h.set("aborted", serde_json::to_string(&log.aborted).expect("string serializes"));
    let rows = log.rows.iter().map(|r| {
        let mut v = vec![r.t];
        for x in [&r.q, &r.qdot, &r.qddot, &r.sigma, &r.sigma_dot, &r.u_cmd, &r.u_noisy] {
            v.extend(x.iter());
        }
        v.extend(r.x_ee.iter());
        v.extend(r.x_p.iter());
        v
    });
    write_csv(path, &h, &trial_columns(n), rows)?;
    let side = TrialSidecar {
        tool: format!("pointsim {TOOL_VERSION}"),
        config_hash: config_hash.to_string(),
        seed: log.seed,
        target: log.target,
        hit_index: log.hit_index,
        aborted: log.aborted.clone(),
        solver: log.solver.clone(),
    };
    let json = serde_json::to_string_pretty(&side).expect("sidecar serializes");
    write_text(&sidecar_path(path), &json)
}

fn parse_header<T: std::str::FromStr>(path: &Path, h: &CsvHeader, key: &str) -> Result<T> {
    h.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::data(path, format!("missing or malformed header entry `{key}`")))
}

/// Reads a trial CSV; solver statistics are restored from the sidecar when it exists.
pub fn read_trial_csv(path: impl AsRef<Path>) -> Result<TrialLog> {
    let path = path.as_ref();
    let t = read_csv(path)?;
    let n = count_indexed(&t.columns, "q");
    check_schema(path, &t.columns, &trial_columns(n))?;
    let seed = parse_header(path, &t.header, "seed")?;
    let target: Vec<f64> = t
        .header
        .get("target")
        .map(|s| s.split_whitespace().filter_map(|x| x.parse().ok()).collect())
        .unwrap_or_default();
    if target.len() != 3 {
        return Err(Error::data(path, "missing or malformed header entry `target`"));
    }
    let hit_index = match t.header.get("hit_index") {
        Some("none") | None => None,
        Some(v) => Some(v.parse().map_err(|_| Error::data(path, "malformed hit_index"))?),
    };
    let aborted = t.header.get("aborted").and_then(|s| serde_json::from_str(s).ok()).flatten();
    let rows = t
        .rows
        .iter()
        .map(|r| {
            let block = |k: usize| DVector::from_column_slice(&r[1 + k * n..1 + (k + 1) * n]);
            let o = 1 + 7 * n;
            LogRow {
                t: r[0],
                q: block(0),
                qdot: block(1),
                qddot: block(2),
                sigma: block(3),
                sigma_dot: block(4),
                u_cmd: block(5),
                u_noisy: block(6),
                x_ee: Vector3::new(r[o], r[o + 1], r[o + 2]),
                x_p: Vector3::new(r[o + 3], r[o + 4], r[o + 5]),
            }
        })
        .collect();
    let side = sidecar_path(path);
    let solver = if side.exists() {
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let s: TrialSidecar = serde_json::from_str(&text).map_err(|e| Error::data(&side, e.to_string()))?;
        s.solver
    } else {
        Vec::new()
    };
    Ok(TrialLog { rows, solver, target: Vector3::new(target[0], target[1], target[2]), seed, hit_index, aborted })
}

/// Column names of a reference trajectory.
pub fn reference_columns(n: usize, cursor: bool, tau: bool) -> Vec<String> {
    let mut c = vec!["t".to_string()];
    for p in ["q", "qdot", "qddot"] {
        c.extend(indexed(p, n));
    }
    if cursor {
        c.extend(xyz("x_p"));
    }
    if tau {
        c.extend(indexed("tau", n));
    }
    c
}

/// Writes a reference trajectory. Ground-truth torques, one fewer than samples, are padded with
/// a repeat of the last entry so every row is complete.
pub fn write_reference_csv(r: &ReferenceTrajectory, path: impl AsRef<Path>, config_hash: &str) -> Result<()> {
    r.validate()?;
    let n = r.dof();
    let mut h = CsvHeader::new(config_hash);
    h.set("rows", r.len().to_string());
    h.set("meta", serde_json::to_string(&r.meta).expect("metadata serializes"));
    if let Some(t) = &r.tau {
        h.set("tau_samples", t.len().to_string());
    }
    let rows = (0..r.len()).map(|k| {
        let mut v = vec![r.times[k]];
        v.extend(r.q[k].iter());
        v.extend(r.qdot[k].iter());
        v.extend(r.qddot[k].iter());
        if let Some(c) = &r.cursor {
            v.extend(c[k].iter());
        }
        if let Some(t) = &r.tau {
            v.extend(t[k.min(t.len() - 1)].iter());
        }
        v
    });
    write_csv(path.as_ref(), &h, &reference_columns(n, r.cursor.is_some(), r.tau.is_some()), rows)
}

pub fn read_reference_csv(path: impl AsRef<Path>) -> Result<ReferenceTrajectory> {
    let path = path.as_ref();
    let t = read_csv(path)?;
    let n = count_indexed(&t.columns, "q");
    let cursor = t.columns.iter().any(|c| c == "x_p_x");
    let tau = count_indexed(&t.columns, "tau") > 0;
    check_schema(path, &t.columns, &reference_columns(n, cursor, tau))?;
    let meta: TrialMeta = match t.header.get("meta") {
        Some(s) => serde_json::from_str(s).map_err(|e| Error::data(path, format!("metadata: {e}")))?,
        None => TrialMeta::default(),
    };
    let col = |r: &Vec<f64>, k: usize| DVector::from_column_slice(&r[1 + k * n..1 + (k + 1) * n]);
    let o = 1 + 3 * n;
    let mut tau_seq: Option<Vec<DVector<f64>>> = tau.then(|| {
        let off = o + if cursor { 3 } else { 0 };
        t.rows.iter().map(|r| DVector::from_column_slice(&r[off..off + n])).collect()
    });
    if let (Some(ts), Some(k)) = (tau_seq.as_mut(), t.header.get("tau_samples").and_then(|s| s.parse::<usize>().ok())) {
        ts.truncate(k);
    }
    let r = ReferenceTrajectory {
        times: t.rows.iter().map(|r| r[0]).collect(),
        q: t.rows.iter().map(|r| col(r, 0)).collect(),
        qdot: t.rows.iter().map(|r| col(r, 1)).collect(),
        qddot: t.rows.iter().map(|r| col(r, 2)).collect(),
        cursor: cursor.then(|| t.rows.iter().map(|r| Vector3::new(r[o], r[o + 1], r[o + 2])).collect()),
        tau: tau_seq,
        meta,
    };
    r.validate()?;
    Ok(r)
}

pub fn write_fit_history(history: &[FitEvaluation], path: impl AsRef<Path>, config_hash: &str) -> Result<()> {
    let mut h = CsvHeader::new(config_hash);
    h.set("rows", history.len().to_string());
    let cols: Vec<String> = ["generation", "r1", "r2", "loss"].map(String::from).to_vec();
    write_csv(path.as_ref(), &h, &cols, history.iter().map(|e| vec![e.generation as f64, e.r1, e.r2, e.loss]))
}

pub fn read_fit_history(path: impl AsRef<Path>) -> Result<Vec<FitEvaluation>> {
    let path = path.as_ref();
    let t = read_csv(path)?;
    check_schema(path, &t.columns, &["generation", "r1", "r2", "loss"].map(String::from))?;
    Ok(t.rows.iter().map(|r| FitEvaluation { generation: r[0] as usize, r1: r[1], r2: r[2], loss: r[3] }).collect())
}

/// One deviation CSV per horizon (`turnpike_N<n>.csv`) plus `turnpike_summary.csv`. Returns the
/// written paths.
pub fn write_turnpike(result: &TurnpikeResult, dir: impl AsRef<Path>, eps: f64, config_hash: &str) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    let mut written = Vec::new();
    let mut summary = Vec::new();
    for (n, curve) in &result.curves {
        match curve {
            Ok(c) => {
                let mut h = CsvHeader::new(config_hash);
                h.set("rows", c.times.len().to_string());
                h.set("horizon", n.to_string());
                h.set("reference_horizon", result.reference.horizon.to_string());
                let path = dir.join(format!("turnpike_N{n}.csv"));
                let cols = ["t", "cursor_deviation_m", "joint_deviation_rad"].map(String::from);
                let rows = (0..c.times.len()).map(|i| vec![c.times[i], c.cursor_deviation[i], c.joint_deviation[i]]);
                write_csv(&path, &h, &cols, rows)?;
                written.push(path);
                let tte = c.time_to_exceed(eps).unwrap_or(f64::INFINITY);
                let peak = c.cursor_deviation.iter().fold(0.0f64, |m, &d| m.max(d));
                summary.push(vec![*n as f64, tte, peak, 1.0]);
            }
            Err(_) => summary.push(vec![*n as f64, f64::NAN, f64::NAN, 0.0]),
        }
    }
    let mut h = CsvHeader::new(config_hash);
    h.set("rows", summary.len().to_string());
    h.set("epsilon_m", format!("{eps:?}"));
    for (n, c) in &result.curves {
        if let Err(e) = c {
            h.set(&format!("error_N{n}"), e.replace('\n', " "));
        }
    }
    let path = dir.join("turnpike_summary.csv");
    let cols = ["horizon", "time_to_exceed_s", "max_cursor_deviation_m", "solved"].map(String::from);
    write_csv(&path, &h, &cols, summary.into_iter())?;
    written.push(path);
    Ok(written)
}

/// Writes every reference of a dataset plus `manifest.json` into `dir`.
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>, config_hash: &str) -> Result<std::path::PathBuf> {
    let dir = dir.as_ref();
    for (entry, r) in dataset.manifest.trials.iter().zip(&dataset.trials) {
        write_reference_csv(r, dir.join(&entry.file), config_hash)?;
    }
    let path = dir.join("manifest.json");
    write_text(&path, &serde_json::to_string_pretty(&dataset.manifest).expect("manifest serializes"))?;
    Ok(path)
}

/// Loads a dataset directory written by [`write_dataset`].
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::data(&path, e.to_string()))?;
    let trials = manifest.trials.iter().map(|e| read_reference_csv(dir.join(&e.file))).collect::<Result<_>>()?;
    Ok(Dataset { manifest, trials })
}

/// Header entries of any CSV written by this module.
pub fn read_csv_header(path: impl AsRef<Path>) -> Result<CsvHeader> {
    Ok(read_csv(path.as_ref())?.header)
}
