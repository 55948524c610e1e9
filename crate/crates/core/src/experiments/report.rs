use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sweep::{PhotonScan, RunMode, RunRecord, SweepKind};
use crate::error::{invalid, Result};
use crate::link::LinkConfig;
use crate::optimizer::{IterationRecord, RewardMode};
use crate::ARTIFACT_VERSION;

#[derive(Serialize)]
struct BitsRow {
    bits: u32,
    mode: RunMode,
    skr_bits_per_symbol: f64,
    tau: f64,
    n_ex: f64,
    seed: u64,
}

#[derive(Serialize)]
struct GridRow {
    taps: usize,
    bits: u32,
    mode: RunMode,
    skr_bits_per_symbol: f64,
    gap: Option<f64>,
    seed: u64,
}

#[derive(Serialize)]
struct DistanceRow {
    distance_km: f64,
    mode: RunMode,
    skr_bits_per_symbol: f64,
    tau: f64,
    n_ex: f64,
    seed: u64,
}

#[derive(Serialize)]
struct PhotonRow {
    n_photon: f64,
    skr_bits_per_symbol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub kind: SweepKind,
    pub mode: RunMode,
    pub seed: u64,
    pub optimizer_seed: Option<u64>,
    pub trace_file: Option<String>,
    pub beta: f64,
    pub score: RewardMode,
    pub link: LinkConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact_version: String,
    pub files: Vec<String>,
    pub records: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub tables: Vec<PathBuf>,
    pub traces: Vec<PathBuf>,
    pub manifest: PathBuf,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes an optimizer trace with the fixed trace schema.
pub fn write_trace_csv(path: &Path, trace: &[IterationRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["iteration", "mean_reward", "best_reward", "sigma_tx", "sigma_rx", "sigma_n"])?;
    for r in trace {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a photon scan with the `n_photon,skr_bits_per_symbol` schema.
pub fn write_photon_scan_csv(path: &Path, scan: &PhotonScan) -> Result<()> {
    write_rows(
        path,
        scan.curve.iter().map(|p| PhotonRow {
            n_photon: p.n_photon,
            skr_bits_per_symbol: p.skr_bits_per_symbol,
        }),
    )
}

fn write_table(path: &Path, kind: SweepKind, records: &[&RunRecord]) -> Result<()> {
    match kind {
        SweepKind::BitsSweep => write_rows(
            path,
            records.iter().map(|r| BitsRow {
                bits: r.link.dac.bits,
                mode: r.mode,
                skr_bits_per_symbol: r.outputs.skr_bits_per_symbol,
                tau: r.outputs.tau,
                n_ex: r.outputs.n_ex,
                seed: r.seed,
            }),
        ),
        SweepKind::TapsBitsGrid => write_rows(
            path,
            records.iter().map(|r| GridRow {
                taps: r.link.tx_len,
                bits: r.link.dac.bits,
                mode: r.mode,
                skr_bits_per_symbol: r.outputs.skr_bits_per_symbol,
                gap: r.outputs.gap,
                seed: r.seed,
            }),
        ),
        SweepKind::DistanceSweep => write_rows(
            path,
            records.iter().map(|r| DistanceRow {
                distance_km: r.link.distance_km,
                mode: r.mode,
                skr_bits_per_symbol: r.outputs.skr_bits_per_symbol,
                tau: r.outputs.tau,
                n_ex: r.outputs.n_ex,
                seed: r.seed,
            }),
        ),
        SweepKind::PhotonScan => write_rows(
            path,
            records.iter().map(|r| PhotonRow {
                n_photon: r.transceiver.mean_photon,
                skr_bits_per_symbol: r.outputs.skr_bits_per_symbol,
            }),
        ),
    }
}

/// Writes one CSV per sweep kind, a trace CSV per optimized record and
/// `manifest.json` into `out_dir`. Output depends only on the records'
/// contents, never on wall time.
pub fn report(records: &[RunRecord], out_dir: &Path) -> Result<ReportFiles> {
    if records.is_empty() {
        return Err(invalid("no records to report"));
    }
    fs::create_dir_all(out_dir)?;
    let mut kinds: Vec<SweepKind> = records.iter().map(|r| r.kind).collect();
    kinds.sort();
    kinds.dedup();

    let mut files = Vec::new();
    let mut tables = Vec::new();
    for kind in kinds {
        let name = format!("{}.csv", kind.file_stem());
        let path = out_dir.join(&name);
        let rows: Vec<&RunRecord> = records.iter().filter(|r| r.kind == kind).collect();
        write_table(&path, kind, &rows)?;
        files.push(name);
        tables.push(path);
    }

    let mut traces = Vec::new();
    let mut entries = Vec::with_capacity(records.len());
    for (index, r) in records.iter().enumerate() {
        let trace_file = if r.trace.is_empty() {
            None
        } else {
            let name = format!("trace_{index:04}.csv");
            let path = out_dir.join(&name);
            write_trace_csv(&path, &r.trace)?;
            files.push(name.clone());
            traces.push(path);
            Some(name)
        };
        entries.push(ManifestEntry {
            index,
            kind: r.kind,
            mode: r.mode,
            seed: r.seed,
            optimizer_seed: r.optimizer.as_ref().map(|o| o.seed),
            trace_file,
            beta: r.beta,
            score: r.score,
            link: r.link.clone(),
        });
    }
    let manifest = Manifest {
        artifact_version: ARTIFACT_VERSION.to_string(),
        files,
        records: entries,
    };
    let manifest_path = out_dir.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(ReportFiles {
        tables,
        traces,
        manifest: manifest_path,
    })
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(records)? + "\n")?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let text = fs::read_to_string(path)?;
    parse_records(&text)
}

pub fn parse_records(text: &str) -> Result<Vec<RunRecord>> {
    Ok(serde_json::from_str(text)?)
}

#[cfg(test)]
mod tests {
    use super::super::sweep::{run_sweep, SweepMode, SweepSpec};
    use super::*;

    fn records(kind: SweepKind) -> Vec<RunRecord> {
        let mut spec = SweepSpec {
            kind,
            mode: SweepMode::Both,
            bits: vec![8, 10],
            taps: vec![11],
            distances_km: vec![10.0],
            photon_grid: vec![2.0, 6.0],
            eval_symbols: 2048,
            ..SweepSpec::default()
        };
        spec.reference.ref_taps = 41;
        spec.env.num_symbols = 2048;
        spec.optimizer.iterations = 1;
        spec.optimizer.batch_size = 2;
        run_sweep(&spec).unwrap()
    }

    fn header(path: &Path) -> String {
        fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
    }

    #[test]
    fn empty_records_create_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        assert!(report(&[], &out).is_err());
        assert!(!out.exists());
    }

    #[test]
    fn headers_follow_fixed_schemas() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            (SweepKind::BitsSweep, "bits,mode,skr_bits_per_symbol,tau,n_ex,seed"),
            (SweepKind::TapsBitsGrid, "taps,bits,mode,skr_bits_per_symbol,gap,seed"),
            (SweepKind::DistanceSweep, "distance_km,mode,skr_bits_per_symbol,tau,n_ex,seed"),
            (SweepKind::PhotonScan, "n_photon,skr_bits_per_symbol"),
        ];
        for (kind, expected) in cases {
            let files = report(&records(kind), dir.path()).unwrap();
            assert_eq!(files.tables.len(), 1);
            assert_eq!(header(&files.tables[0]), expected);
            for t in &files.traces {
                assert_eq!(header(t), "iteration,mean_reward,best_reward,sigma_tx,sigma_rx,sigma_n");
            }
        }
    }

    #[test]
    fn report_is_byte_identical_on_rerun() {
        let recs = records(SweepKind::TapsBitsGrid);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let fa = report(&recs, a.path()).unwrap();
        let mut shifted = recs.clone();
        shifted.iter_mut().for_each(|r| r.wall_time_s += 1.0);
        report(&shifted, b.path()).unwrap();
        for p in fa.tables.iter().chain(&fa.traces).chain([&fa.manifest]) {
            let name = p.file_name().unwrap();
            assert_eq!(fs::read(p).unwrap(), fs::read(b.path().join(name)).unwrap());
        }
        let grid = fs::read_to_string(&fa.tables[0]).unwrap();
        assert!(grid.lines().nth(1).unwrap().starts_with("41,16,reference,"));
    }

    #[test]
    fn records_round_trip_through_files() {
        let recs = records(SweepKind::BitsSweep);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.json");
        write_records(&path, &recs).unwrap();
        assert_eq!(read_records(&path).unwrap(), recs);
        assert!(parse_records("[{\"kind\": \"bits-sweep\"}]").is_err());
    }
}
