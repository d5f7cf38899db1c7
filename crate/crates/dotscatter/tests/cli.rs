use std::fs;
use std::path::Path;
use std::process::Command;

use dotscatter::config::System;
use dotscatter::dump::{read_psi, write_psi};
use dotscatter::spectrum::report_spectrum;
use dotscatter::sweep::canonical;
use dotscatter::{run_sweep, PreparedSystem, Status, SweepConfig};

/// Coarse single dot that solves in well under a second per energy.
fn coarse(dir: &Path) -> SweepConfig {
    let mut c = SweepConfig::for_system(System::Qd2p);
    c.geometry.length_nm = 400.0;
    c.geometry.h_nm = 2.0;
    c.interaction.screening.as_mut().unwrap().plateau_radius_nm = 100.0;
    c.interaction.screening.as_mut().unwrap().ramp_nm = 60.0;
    c.sweep.t0_min = 10.0;
    c.sweep.t0_max = 30.0;
    c.sweep.num_steps = 6;
    c.sweep.refinement.max_extra_points = 4;
    c.output.channels_csv = dir.join("ch.csv");
    c.output.entropy_csv = dir.join("en.csv");
    c.output.provenance_json = dir.join("prov.json");
    c
}

/// File contents with the wall-time column removed.
fn without_wall_time(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn sweep_is_ordered_thread_independent_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = coarse(dir.path());
    let sys = PreparedSystem::prepare(&c).unwrap();
    let first = run_sweep(&sys).unwrap();
    assert!(first.rows.len() > 6 && first.rows.len() <= 10);
    assert!(first.rows.windows(2).all(|w| w[0].t0 < w[1].t0));
    assert_eq!(first.failed(), 0);
    for r in &first.rows {
        assert_eq!(r.status, Status::Ok);
        let p = r.point.as_ref().unwrap();
        assert!(p.amplitudes.unitarity_defect < 1e-8);
        assert!(p.entropy.xi <= p.entropy.upper_bound() + 1e-12);
    }
    let ch = without_wall_time(&c.output.channels_csv);
    let en = without_wall_time(&c.output.entropy_csv);
    assert!(ch.starts_with("T0_meV,M,T_0_meV,R_0,T_0_prob,abs_b_0,abs_c_0,"));
    assert!(en.starts_with("T0_meV,xi,M,lambda_0,"));

    // drop the tail, resume with more workers
    let raw = fs::read_to_string(&c.output.channels_csv).unwrap();
    let kept: Vec<&str> = raw.lines().take(4).collect();
    fs::write(&c.output.channels_csv, kept.join("\n") + "\n").unwrap();
    c.sweep.threads = 3;
    let sys = PreparedSystem::prepare(&c).unwrap();
    let second = run_sweep(&sys).unwrap();
    assert_eq!(second.provenance.resumed, 3);
    assert_eq!(without_wall_time(&c.output.channels_csv), ch);
    assert_eq!(without_wall_time(&c.output.entropy_csv), en);

    let prov: serde_json::Value = serde_json::from_str(&fs::read_to_string(&c.output.provenance_json).unwrap()).unwrap();
    assert_eq!(prov["config_hash"], c.hash());
    assert_eq!(prov["rows"], second.rows.len());
}

#[test]
fn changed_config_does_not_reuse_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = coarse(dir.path());
    c.sweep.refinement.enabled = false;
    c.sweep.num_steps = 2;
    run_sweep(&PreparedSystem::prepare(&c).unwrap()).unwrap();
    c.material.coulomb_cutoff_d_nm = 6.0;
    let again = run_sweep(&PreparedSystem::prepare(&c).unwrap()).unwrap();
    assert_eq!(again.provenance.resumed, 0);
}

#[test]
fn failures_are_recorded_in_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = coarse(dir.path());
    c.sweep.refinement.enabled = false;
    // the upper energies ionize the dot
    c.sweep.t0_min = 50.0;
    c.sweep.t0_max = 150.0;
    c.sweep.num_steps = 3;
    let res = run_sweep(&PreparedSystem::prepare(&c).unwrap()).unwrap();
    assert_eq!(res.rows.len(), 3);
    assert_eq!(res.rows[0].status, Status::Ok);
    assert_eq!(res.rows[2].status, Status::Failed);
    assert_eq!(res.rows[2].error, "problem");
    assert_eq!(res.failed(), 2);
    assert_eq!(res.check_failures(0.1).unwrap_err().exit_code(), 2);
    assert!(res.check_failures(0.7).is_ok());
    let text = fs::read_to_string(&c.output.entropy_csv).unwrap();
    assert!(text.lines().nth(3).unwrap().contains(",failed,problem,"));
}

#[test]
fn refinement_midpoints_are_canonical() {
    assert_eq!(canonical(0.1 + 0.2), 0.3);
    assert_eq!(canonical(12.5), 12.5);
}

#[test]
fn psi_dump_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let c = coarse(dir.path());
    let sys = PreparedSystem::prepare(&c).unwrap();
    let sol = sys.solve(17.0).unwrap();
    let path = dir.path().join("psi.bin");
    let h = &sys.hamiltonian;
    write_psi(&path, &sol, h.window_len(), h.bound_dims()).unwrap();
    let (header, psi) = read_psi(&path).unwrap();
    assert_eq!(psi, sol.psi);
    assert!(header.contains(&format!("n_slices = {}", sol.n_slices)));
}

#[test]
fn spectrum_reports() {
    let mut c = SweepConfig::for_system(System::Qd2p);
    let r = report_spectrum(&c).unwrap();
    assert_eq!(r.single_particle.len(), 4);
    assert!((r.thresholds[1] - r.spacings[0]).abs() < 1e-12);
    c.geometry.well_depth_mev = 0.0;
    let empty = report_spectrum(&c).unwrap();
    assert!(empty.single_particle.is_empty());
    assert_eq!(empty.to_string(), "no bound states\n");

    let d = SweepConfig::for_system(System::Dqd3p);
    let r = report_spectrum(&d).unwrap();
    let pairs = r.groups.iter().filter(|g| g.levels.len() == 2).count();
    assert_eq!(pairs, 4);
    assert!(r.groups.iter().all(|g| g.splitting < 1e-4));
    assert!(r.continuum_edge.unwrap() < 0.0);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_dotscatter");
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"sweep": {"num_steps": 1}}"#).unwrap();
    let out = Command::new(bin).args(["--config", bad.to_str().unwrap(), "spectrum"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = Command::new(bin).args(["spectrum", "--system", "qd_2p"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("channel thresholds"));

    let example = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/dqd_3p.json");
    assert!(SweepConfig::load(Path::new(example)).is_ok());
    let example = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/qd_2p.json");
    assert!(SweepConfig::load(Path::new(example)).is_ok());
}
