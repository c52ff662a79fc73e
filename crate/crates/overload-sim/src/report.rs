//! CSV emission and aggregate reporting.
//!
//! Every run writes its own ledger, CCDF, utilization trace, and
//! discipline-switch log; `runs.csv` is the manifest tying them together.
//! Aggregates (the table- and figure-shaped files) are always rebuilt by
//! parsing the per-run CSVs back in, so `simulate` and a later `report` over
//! the same directory produce identical bytes. All files are written
//! atomically (temp file + rename).
//!
//! File schemas are documented in the repository README.

use crate::kernel::{RunResult, Scheme};
use crate::metrics::Ccdf;
use crate::plot::{Chart, Series};
use crate::scenario::ScenarioKind;
use crate::workload::RequestClass;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Maximum step points per emitted CCDF file.
const CCDF_MAX_POINTS: usize = 2000;
/// Warm-up share of the horizon excluded from throughput measurement.
pub const WARMUP_FRACTION: f64 = 0.1;

/// Identity of one run within a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunKey {
    pub scheme: Scheme,
    pub rho: f64,
    /// Flat deadline for single-queue cells; `None` for e-commerce cells.
    pub timeout: Option<f64>,
    pub seed: u64,
}

impl RunKey {
    pub fn cell_id(&self) -> String {
        let mut id = format!("{}__rho{}", self.scheme, self.rho);
        if let Some(t) = self.timeout {
            let _ = write!(id, "__to{t}");
        }
        id
    }

    pub fn run_id(&self) -> String {
        format!("{}__seed{}", self.cell_id(), self.seed)
    }
}

/// One row of `runs.csv`.
#[derive(Debug, Clone)]
pub struct RunRow {
    pub scenario: String,
    pub kind: ScenarioKind,
    pub key: RunKey,
    pub horizon: f64,
    pub capacity: f64,
    pub sessions_arrived: u64,
    pub sessions_completed: u64,
    pub sessions_aborted: u64,
    pub generated: u64,
    pub completed: u64,
    pub timed_out: u64,
    pub dropped: u64,
    pub not_generated: u64,
    pub throughput: f64,
    pub mean_response: Option<f64>,
    pub mean_session_duration: Option<f64>,
    pub ledger_file: String,
    pub ccdf_all_file: String,
    pub ccdf_br1_file: Option<String>,
    pub util_file: String,
    pub switch_file: String,
}

#[derive(Debug, Clone)]
pub struct LedgerRow {
    pub label: String,
    pub class: RequestClass,
    pub generated: u64,
    pub completed: u64,
    pub timed_out: u64,
    pub dropped: u64,
    pub not_generated: u64,
}

pub fn write_atomic(path: &Path, content: &str) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, content)?;
    fs::rename(&tmp, path)
}

fn class_name(class: RequestClass) -> &'static str {
    match class {
        RequestClass::Browsing => "browsing",
        RequestClass::Transaction => "transaction",
    }
}

fn parse_class(s: &str) -> Option<RequestClass> {
    match s {
        "browsing" => Some(RequestClass::Browsing),
        "transaction" => Some(RequestClass::Transaction),
        _ => None,
    }
}

fn kind_name(kind: ScenarioKind) -> &'static str {
    match kind {
        ScenarioKind::E1SingleQueue => "e1-single-queue",
        ScenarioKind::E2Ecommerce => "e2-ecommerce",
    }
}

fn parse_kind(s: &str) -> Option<ScenarioKind> {
    match s {
        "e1-single-queue" => Some(ScenarioKind::E1SingleQueue),
        "e2-ecommerce" => Some(ScenarioKind::E2Ecommerce),
        _ => None,
    }
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the per-run artifact files and returns the manifest row.
pub fn emit_run(
    dir: &Path,
    scenario: &str,
    kind: ScenarioKind,
    key: RunKey,
    capacity: f64,
    result: &RunResult,
) -> io::Result<RunRow> {
    let run_id = key.run_id();
    let ledger = &result.ledger;

    let ledger_file = format!("ledger__{run_id}.csv");
    let mut csv = String::from("type,class,generated,completed,timed_out,dropped,not_generated\n");
    for (i, t) in ledger.types.iter().enumerate() {
        let c = ledger.counters(i);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            t.label,
            class_name(t.class),
            c.generated,
            c.completed,
            c.timed_out,
            c.dropped,
            c.not_generated
        );
    }
    write_atomic(&dir.join(&ledger_file), &csv)?;

    let ccdf_all_file = format!("ccdf_all__{run_id}.csv");
    write_atomic(
        &dir.join(&ccdf_all_file),
        &ccdf_csv(ledger.ccdf(None).ok().as_ref()),
    )?;

    let br1 = ledger.types.iter().position(|t| t.label == "Br-1");
    let ccdf_br1_file = match br1 {
        Some(i) => {
            let file = format!("ccdf_Br-1__{run_id}.csv");
            write_atomic(&dir.join(&file), &ccdf_csv(ledger.ccdf(Some(i)).ok().as_ref()))?;
            Some(file)
        }
        None => None,
    };

    let util_file = format!("util__{run_id}.csv");
    let mut csv = String::from("t_seconds,utilization,browsing_policy\n");
    for s in &result.util_trace {
        let _ = writeln!(csv, "{},{:.6},{}", s.time, s.utilization, s.policy);
    }
    write_atomic(&dir.join(&util_file), &csv)?;

    let switch_file = format!("switch__{run_id}.csv");
    let mut csv = String::from("t_seconds,from,to,utilization\n");
    for s in &result.switch_log {
        let _ = writeln!(csv, "{},{},{},{:.6}", s.time, s.from, s.to, s.utilization);
    }
    write_atomic(&dir.join(&switch_file), &csv)?;

    let overall = ledger.overall();
    let warmup = result.horizon * WARMUP_FRACTION;
    let durations = &ledger.session_durations;
    let mean_session_duration = if durations.is_empty() {
        None
    } else {
        Some(durations.iter().sum::<f64>() / durations.len() as f64)
    };
    Ok(RunRow {
        scenario: scenario.to_string(),
        kind,
        key,
        horizon: result.horizon,
        capacity,
        sessions_arrived: ledger.sessions.arrived,
        sessions_completed: ledger.sessions.completed,
        sessions_aborted: ledger.sessions.aborted,
        generated: overall.generated,
        completed: overall.completed,
        timed_out: overall.timed_out,
        dropped: overall.dropped,
        not_generated: overall.not_generated,
        throughput: ledger.throughput(warmup, result.horizon),
        mean_response: ledger.mean_response(None),
        mean_session_duration,
        ledger_file,
        ccdf_all_file,
        ccdf_br1_file,
        util_file,
        switch_file,
    })
}

fn ccdf_csv(ccdf: Option<&Ccdf>) -> String {
    let mut csv = String::from("t_seconds,p_greater\n");
    if let Some(ccdf) = ccdf {
        let _ = writeln!(csv, "0,{}", ccdf.value_at(0.0));
        for (t, v) in ccdf.step_points(CCDF_MAX_POINTS) {
            let _ = writeln!(csv, "{t},{v}");
        }
    }
    csv
}

const RUNS_HEADER: &str = "scenario,kind,scheme,rho,timeout,seed,horizon,capacity,\
sessions_arrived,sessions_completed,sessions_aborted,generated,completed,timed_out,dropped,\
not_generated,throughput,mean_response,mean_session_duration,ledger_file,ccdf_all_file,\
ccdf_br1_file,util_file,switch_file";

pub fn write_manifest(dir: &Path, rows: &[RunRow]) -> io::Result<()> {
    let mut csv = String::from(RUNS_HEADER);
    csv.push('\n');
    for r in rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            kind_name(r.kind),
            r.key.scheme,
            r.key.rho,
            opt_f64(r.key.timeout),
            r.key.seed,
            r.horizon,
            r.capacity,
            r.sessions_arrived,
            r.sessions_completed,
            r.sessions_aborted,
            r.generated,
            r.completed,
            r.timed_out,
            r.dropped,
            r.not_generated,
            r.throughput,
            opt_f64(r.mean_response),
            opt_f64(r.mean_session_duration),
            r.ledger_file,
            r.ccdf_all_file,
            r.ccdf_br1_file.clone().unwrap_or_default(),
            r.util_file,
            r.switch_file
        );
    }
    write_atomic(&dir.join("runs.csv"), &csv)
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed {file}: {msg}")]
    Malformed { file: String, msg: String },
}

fn read(dir: &Path, file: &str) -> Result<String, ReportError> {
    let path = dir.join(file);
    fs::read_to_string(&path).map_err(|source| ReportError::Io { path, source })
}

fn malformed(file: &str, msg: impl Into<String>) -> ReportError {
    ReportError::Malformed {
        file: file.to_string(),
        msg: msg.into(),
    }
}

pub fn parse_manifest(dir: &Path) -> Result<Vec<RunRow>, ReportError> {
    let text = read(dir, "runs.csv")?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 24 {
            return Err(malformed(
                "runs.csv",
                format!("line {}: expected 24 fields, got {}", lineno + 1, f.len()),
            ));
        }
        let num = |s: &str| -> Result<f64, ReportError> {
            s.parse()
                .map_err(|_| malformed("runs.csv", format!("bad number {s:?}")))
        };
        let int = |s: &str| -> Result<u64, ReportError> {
            s.parse()
                .map_err(|_| malformed("runs.csv", format!("bad integer {s:?}")))
        };
        rows.push(RunRow {
            scenario: f[0].to_string(),
            kind: parse_kind(f[1]).ok_or_else(|| malformed("runs.csv", "bad kind"))?,
            key: RunKey {
                scheme: Scheme::parse(f[2]).ok_or_else(|| malformed("runs.csv", "bad scheme"))?,
                rho: num(f[3])?,
                timeout: if f[4].is_empty() { None } else { Some(num(f[4])?) },
                seed: int(f[5])?,
            },
            horizon: num(f[6])?,
            capacity: num(f[7])?,
            sessions_arrived: int(f[8])?,
            sessions_completed: int(f[9])?,
            sessions_aborted: int(f[10])?,
            generated: int(f[11])?,
            completed: int(f[12])?,
            timed_out: int(f[13])?,
            dropped: int(f[14])?,
            not_generated: int(f[15])?,
            throughput: num(f[16])?,
            mean_response: if f[17].is_empty() { None } else { Some(num(f[17])?) },
            mean_session_duration: if f[18].is_empty() { None } else { Some(num(f[18])?) },
            ledger_file: f[19].to_string(),
            ccdf_all_file: f[20].to_string(),
            ccdf_br1_file: if f[21].is_empty() {
                None
            } else {
                Some(f[21].to_string())
            },
            util_file: f[22].to_string(),
            switch_file: f[23].to_string(),
        });
    }
    Ok(rows)
}

pub fn parse_ledger(dir: &Path, file: &str) -> Result<Vec<LedgerRow>, ReportError> {
    let text = read(dir, file)?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(malformed(file, "expected 7 fields"));
        }
        let int = |s: &str| -> Result<u64, ReportError> {
            s.parse().map_err(|_| malformed(file, "bad integer"))
        };
        rows.push(LedgerRow {
            label: f[0].to_string(),
            class: parse_class(f[1]).ok_or_else(|| malformed(file, "bad class"))?,
            generated: int(f[2])?,
            completed: int(f[3])?,
            timed_out: int(f[4])?,
            dropped: int(f[5])?,
            not_generated: int(f[6])?,
        });
    }
    Ok(rows)
}

pub fn parse_ccdf(dir: &Path, file: &str) -> Result<Vec<(f64, f64)>, ReportError> {
    let text = read(dir, file)?;
    let mut points = Vec::new();
    for line in text.lines().skip(1) {
        if line.is_empty() {
            continue;
        }
        let (t, v) = line
            .split_once(',')
            .ok_or_else(|| malformed(file, "expected two fields"))?;
        let parse = |s: &str| -> Result<f64, ReportError> {
            s.parse().map_err(|_| malformed(file, "bad number"))
        };
        points.push((parse(t)?, parse(v)?));
    }
    Ok(points)
}

/// Rebuilds every aggregate CSV and figure from the per-run files in `dir`.
/// This is the `report` subcommand; `simulate` calls it too, so both paths
/// emit identical aggregates.
pub fn regenerate(dir: &Path) -> Result<(), ReportError> {
    let rows = parse_manifest(dir)?;
    if rows.is_empty() {
        return Err(malformed("runs.csv", "no runs recorded"));
    }
    let kind = rows[0].kind;
    let wrap_io = |source: io::Error| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    };

    emit_capacity(dir, &rows).map_err(wrap_io)?;
    match kind {
        ScenarioKind::E1SingleQueue => emit_outcome_shares(dir, &rows, "table1.csv", false)?,
        ScenarioKind::E2Ecommerce => {
            emit_outcome_shares(dir, &rows, "table5.csv", true)?;
            emit_type_counts(dir, &rows)?;
        }
    }
    emit_load_curves(dir, &rows).map_err(wrap_io)?;
    emit_ccdf_figures(dir, &rows)?;
    Ok(())
}

fn cells(rows: &[RunRow]) -> Vec<(Option<f64>, f64, Scheme, Vec<&RunRow>)> {
    let mut out: Vec<(Option<f64>, f64, Scheme, Vec<&RunRow>)> = Vec::new();
    for row in rows {
        let k = (row.key.timeout, row.key.rho, row.key.scheme);
        match out
            .iter_mut()
            .find(|(t, r, s, _)| (*t, *r, *s) == k)
        {
            Some((_, _, _, group)) => group.push(row),
            None => out.push((k.0, k.1, k.2, vec![row])),
        }
    }
    out
}

fn emit_capacity(dir: &Path, rows: &[RunRow]) -> io::Result<()> {
    let mut csv = String::from("scenario,kind,capacity_req_per_s\n");
    let _ = writeln!(
        csv,
        "{},{},{}",
        rows[0].scenario,
        kind_name(rows[0].kind),
        rows[0].capacity
    );
    write_atomic(&dir.join("capacity.csv"), &csv)
}

/// Percentage table over intended requests, seed-averaged: Table-1-shaped
/// for the single-queue scenario, Table-5-shaped (with the Not-Generated
/// row) for the e-commerce scenario.
fn emit_outcome_shares(
    dir: &Path,
    rows: &[RunRow],
    file: &str,
    with_not_generated: bool,
) -> Result<(), ReportError> {
    let mut csv = String::from(if with_not_generated {
        "rho,scheme,completed_pct,timed_out_pct,dropped_pct,not_generated_pct\n"
    } else {
        "timeout,rho,scheme,completed_pct,timed_out_pct,dropped_pct\n"
    });
    for (timeout, rho, scheme, group) in cells(rows) {
        let mut shares = [0.0f64; 4];
        for row in &group {
            let intended = (row.generated + row.not_generated).max(1) as f64;
            shares[0] += 100.0 * row.completed as f64 / intended;
            shares[1] += 100.0 * row.timed_out as f64 / intended;
            shares[2] += 100.0 * row.dropped as f64 / intended;
            shares[3] += 100.0 * row.not_generated as f64 / intended;
        }
        for s in &mut shares {
            *s /= group.len() as f64;
        }
        if with_not_generated {
            let _ = writeln!(
                csv,
                "{rho},{scheme},{:.1},{:.1},{:.1},{:.1}",
                shares[0], shares[1], shares[2], shares[3]
            );
        } else {
            let _ = writeln!(
                csv,
                "{},{rho},{scheme},{:.1},{:.1},{:.1}",
                opt_f64(timeout),
                shares[0],
                shares[1],
                shares[2]
            );
        }
    }
    write_atomic(&dir.join(file), &csv).map_err(|source| ReportError::Io {
        path: dir.join(file),
        source,
    })
}

/// Table-4-shaped counts: browsing combined, one column per transaction
/// stage, seed-averaged.
fn emit_type_counts(dir: &Path, rows: &[RunRow]) -> Result<(), ReportError> {
    // Transaction labels from the first ledger, in type order.
    let first = parse_ledger(dir, &rows[0].ledger_file)?;
    let tr_labels: Vec<String> = first
        .iter()
        .filter(|r| r.class == RequestClass::Transaction)
        .map(|r| r.label.clone())
        .collect();
    let mut csv = String::from("rho,scheme,metric,browsing");
    for l in &tr_labels {
        let _ = write!(csv, ",{l}");
    }
    csv.push('\n');
    let metrics: [(&str, fn(&LedgerRow) -> u64); 4] = [
        ("generated", |r| r.generated),
        ("completed", |r| r.completed),
        ("timed_out", |r| r.timed_out),
        ("dropped", |r| r.dropped),
    ];
    for (_, rho, scheme, group) in cells(rows) {
        let ledgers: Vec<Vec<LedgerRow>> = group
            .iter()
            .map(|r| parse_ledger(dir, &r.ledger_file))
            .collect::<Result<_, _>>()?;
        for (metric, get) in metrics {
            let mut browsing = 0.0;
            let mut tr = vec![0.0; tr_labels.len()];
            for ledger in &ledgers {
                for row in ledger {
                    if row.class == RequestClass::Browsing {
                        browsing += get(row) as f64;
                    } else if let Some(i) = tr_labels.iter().position(|l| *l == row.label) {
                        tr[i] += get(row) as f64;
                    }
                }
            }
            let n = ledgers.len() as f64;
            let _ = write!(csv, "{rho},{scheme},{metric},{:.1}", browsing / n);
            for v in &tr {
                let _ = write!(csv, ",{:.1}", v / n);
            }
            csv.push('\n');
        }
    }
    write_atomic(&dir.join("table4.csv"), &csv).map_err(|source| ReportError::Io {
        path: dir.join("table4.csv"),
        source,
    })
}

/// Throughput and mean-response curves against load, seed-averaged, plus the
/// corresponding figures.
fn emit_load_curves(dir: &Path, rows: &[RunRow]) -> io::Result<()> {
    let mut tp_csv = String::from("rho,scheme,throughput_req_per_s,normalized\n");
    let mut mr_csv = String::from("rho,scheme,mean_response_s\n");
    let mut tp_series: Vec<Series> = Vec::new();
    let mut mr_series: Vec<Series> = Vec::new();
    let capacity = rows[0].capacity;
    for (timeout, rho, scheme, group) in cells(rows) {
        // Load curves only make sense along rho; fold timeout cells in by
        // labeling the series.
        let label = match timeout {
            Some(t) => format!("{scheme} (to={t}s)"),
            None => scheme.to_string(),
        };
        let tp = group.iter().map(|r| r.throughput).sum::<f64>() / group.len() as f64;
        let responses: Vec<f64> = group.iter().filter_map(|r| r.mean_response).collect();
        let _ = writeln!(tp_csv, "{rho},{label},{tp},{}", tp / capacity);
        let series = match tp_series.iter_mut().find(|s| s.label == label) {
            Some(s) => s,
            None => {
                tp_series.push(Series {
                    label: label.clone(),
                    points: vec![],
                });
                tp_series.last_mut().unwrap()
            }
        };
        series.points.push((rho, tp));
        if !responses.is_empty() {
            let mr = responses.iter().sum::<f64>() / responses.len() as f64;
            let _ = writeln!(mr_csv, "{rho},{label},{mr}");
            let series = match mr_series.iter_mut().find(|s| s.label == label) {
                Some(s) => s,
                None => {
                    mr_series.push(Series {
                        label: label.clone(),
                        points: vec![],
                    });
                    mr_series.last_mut().unwrap()
                }
            };
            series.points.push((rho, mr));
        } else {
            let _ = writeln!(mr_csv, "{rho},{label},");
        }
    }
    write_atomic(&dir.join("throughput_vs_load.csv"), &tp_csv)?;
    write_atomic(&dir.join("mean_response_vs_load.csv"), &mr_csv)?;
    for s in &mut tp_series {
        s.points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    }
    for s in &mut mr_series {
        s.points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    }
    let chart = Chart {
        title: "Overall throughput vs. load".to_string(),
        x_label: "rho (offered load / capacity)".to_string(),
        y_label: "completed requests / second".to_string(),
        series: tp_series,
    };
    write_atomic(&dir.join("fig_throughput_vs_load.svg"), &chart.to_svg())?;
    let chart = Chart {
        title: "Average response time vs. load".to_string(),
        x_label: "rho (offered load / capacity)".to_string(),
        y_label: "mean response time (s)".to_string(),
        series: mr_series,
    };
    write_atomic(&dir.join("fig_response_vs_load.svg"), &chart.to_svg())
}

/// One response-time-distribution figure per sweep cell, using the first
/// seed of each scheme: the overall distribution for single-queue runs, the
/// main-page distribution for e-commerce runs.
fn emit_ccdf_figures(dir: &Path, rows: &[RunRow]) -> Result<(), ReportError> {
    let mut cells_seen: BTreeSet<String> = BTreeSet::new();
    let mut groups: Vec<(String, Option<f64>, f64)> = Vec::new();
    for row in rows {
        let id = format!("rho{}_to{}", row.key.rho, opt_f64(row.key.timeout));
        if cells_seen.insert(id.clone()) {
            groups.push((id, row.key.timeout, row.key.rho));
        }
    }
    for (_, timeout, rho) in groups {
        let mut series = Vec::new();
        let mut filter_label = "response time";
        for row in rows {
            if row.key.timeout != timeout || row.key.rho != rho {
                continue;
            }
            if series
                .iter()
                .any(|s: &Series| s.label == row.key.scheme.to_string())
            {
                continue; // first seed only
            }
            let (file, label) = match (&row.ccdf_br1_file, row.kind) {
                (Some(f), ScenarioKind::E2Ecommerce) => (f.clone(), "Br-1 response time"),
                _ => (row.ccdf_all_file.clone(), "response time"),
            };
            filter_label = label;
            series.push(Series {
                label: row.key.scheme.to_string(),
                points: parse_ccdf(dir, &file)?,
            });
        }
        if series.is_empty() {
            continue;
        }
        let suffix = match timeout {
            Some(t) => format!("rho{rho}_to{t}"),
            None => format!("rho{rho}"),
        };
        let chart = Chart {
            title: format!("Unconditional CCDF of {filter_label} at rho={rho}"),
            x_label: "t (seconds)".to_string(),
            y_label: "P(T > t)".to_string(),
            series,
        };
        let file = format!("fig_ccdf_{suffix}.svg");
        write_atomic(&dir.join(&file), &chart.to_svg()).map_err(|source| ReportError::Io {
            path: dir.join(&file),
            source,
        })?;
    }
    Ok(())
}
