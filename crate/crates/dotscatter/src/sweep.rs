//! Energy sweep: worker pool, ordered CSV streaming, resume and adaptive
//! refinement.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use serde::Serialize;

use crate::config::SweepConfig;
use crate::error::{CliError, Result};
use crate::setup::{Point, PreparedSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// Solved, but a post-check (unitarity or entropy bound) failed.
    Flagged,
    Failed,
}

impl Status {
    fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Flagged => "flagged",
            Status::Failed => "failed",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "ok" => Some(Status::Ok),
            "flagged" => Some(Status::Flagged),
            "failed" => Some(Status::Failed),
            _ => None,
        }
    }
}

/// One sweep energy, already formatted for both CSV files.
#[derive(Debug, Clone)]
pub struct Row {
    pub t0: f64,
    pub status: Status,
    pub error: String,
    pub xi: Option<f64>,
    pub wall_time: f64,
    channel_fields: Vec<String>,
    entropy_fields: Vec<String>,
    /// Full result; `None` for rows read back from an earlier run.
    pub point: Option<Point>,
}

fn fmt(x: f64) -> String {
    format!("{x:.12}")
}

/// T₀ as it appears in the files, so computed and re-read rows share keys.
pub fn canonical(t0: f64) -> f64 {
    fmt(t0).parse().expect("formatted float parses")
}

fn key(t0: f64) -> u64 {
    // positive floats order like their bit patterns
    canonical(t0).to_bits()
}

pub fn channel_header(levels: usize) -> Vec<String> {
    let mut h = vec!["T0_meV".to_string(), "M".to_string()];
    for n in 0..levels {
        h.extend([
            format!("T_{n}_meV"),
            format!("R_{n}"),
            format!("T_{n}_prob"),
            format!("abs_b_{n}"),
            format!("abs_c_{n}"),
        ]);
    }
    h.push("unitarity_defect".into());
    h.extend(trailer_header());
    h
}

pub fn entropy_header(levels: usize) -> Vec<String> {
    let mut h = vec!["T0_meV".to_string(), "xi".to_string(), "M".to_string()];
    h.extend((0..levels).map(|n| format!("lambda_{n}")));
    h.extend(trailer_header());
    h
}

fn trailer_header() -> [String; 4] {
    ["status", "error", "config_hash", "wall_time_s"].map(String::from)
}

impl Row {
    fn new(sys: &PreparedSystem, t0: f64, outcome: dotscatter_core::Result<Point>, wall_time: f64) -> Self {
        let levels = sys.bound_energies().len();
        match outcome {
            Err(e) => Self {
                t0,
                status: Status::Failed,
                error: e.code().into(),
                xi: None,
                wall_time,
                channel_fields: [vec![fmt(t0), String::new()], vec![String::new(); 5 * levels + 1]].concat(),
                entropy_fields: [vec![fmt(t0)], vec![String::new(); levels + 2]].concat(),
                point: None,
            },
            Ok(p) => {
                let a = &p.amplitudes;
                let rec = &p.entropy;
                let mut problems = Vec::new();
                if !(a.unitarity_defect <= sys.config.scattering.unitarity_tolerance) {
                    problems.push("unitarity");
                }
                if !(rec.xi >= 0.0 && rec.xi <= rec.upper_bound() + 1e-12) {
                    problems.push("entropy_bound");
                }
                let mut ch = vec![fmt(t0), rec.m.to_string()];
                for n in 0..levels {
                    let c = &a.channels[n];
                    ch.extend([
                        fmt(c.kinetic),
                        fmt(a.reflection(n)),
                        fmt(a.transmission(n)),
                        fmt(a.b[n].norm()),
                        fmt(a.c[n].norm()),
                    ]);
                }
                ch.push(format!("{:.6e}", a.unitarity_defect));
                let mut lambdas = rec.eigenvalues.clone();
                lambdas.sort_by(|x, y| y.total_cmp(x));
                let mut en = vec![fmt(t0), fmt(rec.xi), rec.m.to_string()];
                en.extend((0..levels).map(|n| lambdas.get(n).map(|l| fmt(*l)).unwrap_or_default()));
                Self {
                    t0,
                    status: if problems.is_empty() { Status::Ok } else { Status::Flagged },
                    error: problems.join(";"),
                    xi: Some(rec.xi),
                    wall_time,
                    channel_fields: ch,
                    entropy_fields: en,
                    point: Some(p),
                }
            }
        }
    }

    fn trailer(&self, hash: &str) -> [String; 4] {
        [
            self.status.as_str().into(),
            self.error.clone(),
            hash.into(),
            format!("{:.3}", self.wall_time),
        ]
    }
}

/// Both output files, kept sorted by T₀ between passes.
struct Sink {
    channels: PathBuf,
    entropy: PathBuf,
    levels: usize,
    hash: String,
}

impl Sink {
    fn write_all(&self, rows: &BTreeMap<u64, Row>) -> Result<()> {
        for (path, header, pick) in self.files() {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            let tmp = path.with_extension("csv.tmp");
            let mut w = csv::Writer::from_path(&tmp)?;
            w.write_record(&header)?;
            for row in rows.values() {
                w.write_record(pick(row).iter().cloned().chain(row.trailer(&self.hash)))?;
            }
            w.flush()?;
            drop(w);
            fs::rename(&tmp, path)?;
        }
        Ok(())
    }

    fn append(&self, row: &Row) -> Result<()> {
        for (path, _, pick) in self.files() {
            let file = OpenOptions::new().append(true).open(path)?;
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
            w.write_record(pick(row).iter().cloned().chain(row.trailer(&self.hash)))?;
            w.flush()?;
        }
        Ok(())
    }

    #[allow(clippy::type_complexity)]
    fn files(&self) -> [(&Path, Vec<String>, fn(&Row) -> &Vec<String>); 2] {
        [
            (&self.channels, channel_header(self.levels), |r| &r.channel_fields),
            (&self.entropy, entropy_header(self.levels), |r| &r.entropy_fields),
        ]
    }

    /// Rows of an earlier run with the same config hash and column layout.
    fn load(&self) -> Result<BTreeMap<u64, Row>> {
        let mut out = BTreeMap::new();
        let (Ok(mut ch), Ok(mut en)) = (csv::Reader::from_path(&self.channels), csv::Reader::from_path(&self.entropy)) else {
            return Ok(out);
        };
        if ch.headers()?.iter().ne(channel_header(self.levels).iter().map(String::as_str))
            || en.headers()?.iter().ne(entropy_header(self.levels).iter().map(String::as_str))
        {
            log::warn!("existing output has a different column layout; starting over");
            return Ok(out);
        }
        let split = |rec: &csv::StringRecord| {
            let n = rec.len();
            let fields: Vec<String> = rec.iter().take(n - 4).map(String::from).collect();
            let tail: Vec<String> = rec.iter().skip(n - 4).map(String::from).collect();
            (fields, tail)
        };
        let mut entropy_rows = BTreeMap::new();
        for rec in en.records() {
            let rec = rec?;
            let (fields, tail) = split(&rec);
            if tail[2] == self.hash {
                entropy_rows.insert(fields[0].clone(), fields);
            }
        }
        for rec in ch.records() {
            let rec = rec?;
            let (fields, tail) = split(&rec);
            if tail[2] != self.hash {
                continue;
            }
            let (Some(entropy_fields), Some(status), Ok(t0)) =
                (entropy_rows.remove(&fields[0]), Status::parse(&tail[0]), fields[0].parse::<f64>())
            else {
                continue;
            };
            out.insert(
                key(t0),
                Row {
                    t0,
                    status,
                    error: tail[1].clone(),
                    xi: entropy_fields[1].parse().ok(),
                    wall_time: tail[3].parse().unwrap_or(0.0),
                    channel_fields: fields,
                    entropy_fields,
                    point: None,
                },
            );
        }
        Ok(out)
    }
}

/// Solves every energy with `threads` workers and calls `emit` in
/// ascending-index order as results become available.
pub fn solve_ordered(
    sys: &PreparedSystem,
    energies: &[f64],
    threads: usize,
    mut emit: impl FnMut(Row) -> Result<()>,
) -> Result<()> {
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Row)>();
    std::thread::scope(|scope| {
        for _ in 0..threads.min(energies.len()).max(1) {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&t0) = energies.get(i) else { break };
                let start = Instant::now();
                let outcome = sys.evaluate(t0);
                let row = Row::new(sys, t0, outcome, start.elapsed().as_secs_f64());
                log::info!("T0 = {t0:.6} meV: {} {} ({:.1} s)", row.status.as_str(), row.error, row.wall_time);
                if tx.send((i, row)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending = BTreeMap::new();
        let mut expected = 0;
        for (i, row) in rx {
            pending.insert(i, row);
            while let Some(row) = pending.remove(&expected) {
                emit(row)?;
                expected += 1;
            }
        }
        Ok(())
    })
}

/// Midpoints between neighbours whose entropies differ by more than the
/// threshold, largest jumps first.
fn refinement_candidates(rows: &BTreeMap<u64, Row>, threshold: f64, budget: usize) -> Vec<f64> {
    let ordered: Vec<&Row> = rows.values().collect();
    let mut jumps: Vec<(f64, f64)> = ordered
        .windows(2)
        .filter_map(|w| {
            let d = (w[1].xi? - w[0].xi?).abs();
            let mid = canonical(0.5 * (w[0].t0 + w[1].t0));
            (d > threshold && !rows.contains_key(&key(mid)) && mid > w[0].t0 && mid < w[1].t0).then_some((d, mid))
        })
        .collect();
    jumps.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)));
    let mut mids: Vec<f64> = jumps.into_iter().take(budget).map(|(_, m)| m).collect();
    mids.sort_by(f64::total_cmp);
    mids
}

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub code_version: &'static str,
    pub config: SweepConfig,
    pub grid: GridInfo,
    pub material: MaterialInfo,
    #[serde(rename = "bound_energies_meV")]
    pub bound_energies: Vec<f64>,
    pub degeneracy_groups: Vec<Vec<usize>>,
    pub incident_channel: usize,
    pub lead_basis_size: usize,
    pub solver: &'static str,
    pub rows: usize,
    pub failed: usize,
    pub flagged: usize,
    pub resumed: usize,
    pub setup_seconds: f64,
    pub sweep_seconds: f64,
    pub channel_columns: Vec<String>,
    pub entropy_columns: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct GridInfo {
    pub length_nm: f64,
    pub spacing_nm: f64,
    pub num_points: usize,
    pub window_nodes: (usize, usize),
    pub window_nm: (f64, f64),
}

#[derive(Debug, Serialize)]
pub struct MaterialInfo {
    pub effective_mass_ratio: f64,
    pub relative_permittivity: f64,
    pub coulomb_cutoff_d_nm: f64,
    #[serde(rename = "kinetic_prefactor_meV_nm2")]
    pub kinetic_prefactor: f64,
    #[serde(rename = "coulomb_prefactor_meV_nm")]
    pub coulomb_prefactor: f64,
}

pub struct SweepResult {
    /// Ascending in T₀.
    pub rows: Vec<Row>,
    pub provenance: Provenance,
}

impl SweepResult {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| r.status == Status::Failed).count()
    }

    /// Error if the failed fraction exceeds the configured threshold.
    pub fn check_failures(&self, threshold: f64) -> Result<()> {
        let (failed, total) = (self.failed(), self.rows.len());
        if failed as f64 > threshold * total as f64 {
            return Err(CliError::TooManyFailures { failed, total, threshold });
        }
        Ok(())
    }
}

/// Runs the configured sweep, writing both CSV files and the provenance
/// sidecar. Rows already present with the same config hash are reused.
pub fn run_sweep(sys: &PreparedSystem) -> Result<SweepResult> {
    let start = Instant::now();
    let cfg = &sys.config;
    let out = &cfg.output;
    let sink = Sink {
        channels: out.channels_csv.clone(),
        entropy: out.entropy_csv.clone(),
        levels: sys.bound_energies().len(),
        hash: sys.hash.clone(),
    };
    // earlier rows only stand in for solves; the pass structure is replayed
    // so a resumed run selects exactly the energies of a fresh one
    let mut cache = sink.load()?;
    if !cache.is_empty() {
        log::info!("resuming: {} rows already computed", cache.len());
    }
    let mut resumed = 0;
    let mut rows = BTreeMap::new();
    let base: Vec<f64> = cfg.sweep.grid().into_iter().map(canonical).collect();
    let on_base = |t: f64| base.iter().any(|b| key(*b) == key(t));

    let mut pass = |energies: Vec<f64>, rows: &mut BTreeMap<u64, Row>| -> Result<()> {
        let mut todo = Vec::new();
        for t in energies {
            match cache.remove(&key(t)) {
                Some(row) => {
                    rows.insert(key(t), row);
                    resumed += 1;
                }
                None => todo.push(t),
            }
        }
        let union = |rows: &BTreeMap<u64, Row>| {
            let mut all = cache.clone();
            all.extend(rows.iter().map(|(k, r)| (*k, r.clone())));
            all
        };
        sink.write_all(&union(rows))?;
        solve_ordered(sys, &todo, cfg.sweep.threads, |row| {
            sink.append(&row)?;
            rows.insert(key(row.t0), row);
            Ok(())
        })?;
        sink.write_all(&union(rows))
    };

    pass(base.clone(), &mut rows)?;
    let refine = &cfg.sweep.refinement;
    if refine.enabled {
        for depth in 0..refine.max_depth {
            let extra = rows.values().filter(|r| !on_base(r.t0)).count();
            let budget = refine.max_extra_points.saturating_sub(extra);
            let mids = refinement_candidates(&rows, refine.threshold, budget);
            if mids.is_empty() {
                break;
            }
            log::info!("refinement pass {}: {} midpoints", depth + 1, mids.len());
            pass(mids, &mut rows)?;
        }
    }
    sink.write_all(&rows)?;

    let rows: Vec<Row> = rows.into_values().collect();
    let provenance = provenance(sys, &rows, resumed, start.elapsed().as_secs_f64());
    if let Some(dir) = out.provenance_json.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = File::create(&out.provenance_json)?;
    serde_json::to_writer_pretty(&mut f, &provenance)?;
    writeln!(f)?;
    Ok(SweepResult { rows, provenance })
}

fn provenance(sys: &PreparedSystem, rows: &[Row], resumed: usize, sweep_seconds: f64) -> Provenance {
    let g = &sys.grid;
    let w = g.dot_window();
    let m = &sys.material;
    let levels = sys.bound_energies().len();
    Provenance {
        config_hash: sys.hash.clone(),
        code_version: env!("CARGO_PKG_VERSION"),
        config: sys.config.clone(),
        grid: GridInfo {
            length_nm: g.length(),
            spacing_nm: g.spacing(),
            num_points: g.num_points(),
            window_nodes: (w.first, w.last),
            window_nm: (g.x(w.first), g.x(w.last)),
        },
        material: MaterialInfo {
            effective_mass_ratio: m.effective_mass_ratio(),
            relative_permittivity: m.relative_permittivity(),
            coulomb_cutoff_d_nm: m.coulomb_cutoff_d(),
            kinetic_prefactor: m.kinetic_prefactor(),
            coulomb_prefactor: m.coulomb_prefactor(),
        },
        bound_energies: sys.bound_energies().to_vec(),
        degeneracy_groups: sys.degeneracy_groups().to_vec(),
        incident_channel: sys.incident_channel,
        lead_basis_size: sys.lead.len(),
        solver: if sys.coarse.is_some() { "gmres" } else { "direct" },
        rows: rows.len(),
        failed: rows.iter().filter(|r| r.status == Status::Failed).count(),
        flagged: rows.iter().filter(|r| r.status == Status::Flagged).count(),
        resumed,
        setup_seconds: sys.setup_seconds,
        sweep_seconds,
        channel_columns: channel_header(levels),
        entropy_columns: entropy_header(levels),
    }
}
