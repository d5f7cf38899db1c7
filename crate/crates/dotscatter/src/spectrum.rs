//! Bound-state report: levels, spacings, degeneracy groups and channel
//! thresholds.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use dotscatter_core::{solve_bound_states_1d, solve_bound_states_2p, BoundBasis};

use crate::config::{SweepConfig, System};
use crate::error::Result;
use crate::setup::{eigen_options, geometry, interaction, material};

#[derive(Debug, Clone, Serialize)]
pub struct Group {
    pub levels: Vec<usize>,
    /// Max minus min energy inside the group (meV).
    pub splitting: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub system: System,
    /// Single-particle levels of the potential (meV).
    pub single_particle: Vec<f64>,
    /// Two-particle levels, double dot only (meV).
    pub two_particle: Option<Vec<f64>>,
    /// Spacings between consecutive levels of the scattering target.
    pub spacings: Vec<f64>,
    pub groups: Vec<Group>,
    /// `E_n − E_0` of the target: kinetic energy at which channel `n` opens.
    pub thresholds: Vec<f64>,
    /// One-bound-one-free edge for the double dot (meV).
    pub continuum_edge: Option<f64>,
}

fn groups_of(basis: &dyn BoundBasis) -> Vec<Group> {
    let e = basis.energies();
    basis
        .degeneracy_groups()
        .iter()
        .map(|g| {
            let (lo, hi) = g.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &n| (lo.min(e[n]), hi.max(e[n])));
            Group {
                levels: g.clone(),
                splitting: hi - lo,
            }
        })
        .collect()
}

pub fn report_spectrum(config: &SweepConfig) -> Result<SpectrumReport> {
    let mat = material(config)?;
    let (grid, pot) = geometry(config)?;
    let opts = eigen_options(config);
    let one = solve_bound_states_1d(&pot, &grid, &mat, &opts)?;
    let (e, groups, two, edge) = match config.system {
        System::Qd2p => (one.energies().to_vec(), groups_of(&one), None, None),
        System::Dqd3p => {
            let inter = interaction(config, &mat, &grid);
            let set = solve_bound_states_2p(&pot, &grid, &mat, &inter, &opts)?;
            let e = set.energies().to_vec();
            (e.clone(), groups_of(&set), Some(e), Some(set.continuum_edge()))
        }
    };
    Ok(SpectrumReport {
        system: config.system,
        single_particle: one.energies().to_vec(),
        two_particle: two,
        spacings: e.windows(2).map(|w| w[1] - w[0]).collect(),
        groups,
        thresholds: e.iter().map(|x| x - e.first().copied().unwrap_or(0.0)).collect(),
        continuum_edge: edge,
    })
}

impl fmt::Display for SpectrumReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.single_particle.is_empty() {
            return writeln!(f, "no bound states");
        }
        writeln!(f, "single-particle levels (meV):")?;
        for (n, e) in self.single_particle.iter().enumerate() {
            writeln!(f, "  E{n} = {e:.6}")?;
        }
        let target = match &self.two_particle {
            Some(levels) => {
                writeln!(f, "two-particle levels (meV):")?;
                for (n, e) in levels.iter().enumerate() {
                    writeln!(f, "  eps{n} = {e:.6}")?;
                }
                if let Some(edge) = self.continuum_edge {
                    writeln!(f, "one-bound-one-free edge: {edge:.6} meV")?;
                }
                levels
            }
            None => &self.single_particle,
        };
        if target.is_empty() {
            return writeln!(f, "no bound states of the scattering target");
        }
        writeln!(f, "spacings (meV): {}", join(&self.spacings))?;
        writeln!(f, "channel thresholds T0 = E_n - E_0 (meV): {}", join(&self.thresholds))?;
        for g in self.groups.iter().filter(|g| g.levels.len() > 1) {
            writeln!(f, "near-degenerate levels {:?}: splitting {:.3e} meV", g.levels, g.splitting)?;
        }
        Ok(())
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ")
}

/// One row per window node (one coordinate) or node pair (two coordinates).
pub fn write_wavefunctions(config: &SweepConfig, path: &Path) -> Result<()> {
    let mat = material(config)?;
    let (grid, pot) = geometry(config)?;
    let opts = eigen_options(config);
    let xs = grid.window_positions();
    let mut w = csv::Writer::from_path(path)?;
    match config.system {
        System::Qd2p => {
            let set = solve_bound_states_1d(&pot, &grid, &mat, &opts)?;
            let mut head = vec!["x_nm".to_string(), "V_meV".to_string()];
            head.extend((0..set.count()).map(|n| format!("phi_{n}")));
            w.write_record(&head)?;
            let v = pot.window_samples(&grid);
            for (j, x) in xs.iter().enumerate() {
                let mut rec = vec![format!("{x:.6}"), format!("{:.6}", v[j])];
                rec.extend((0..set.count()).map(|n| format!("{:.12e}", set.state(n)[j])));
                w.write_record(&rec)?;
            }
        }
        System::Dqd3p => {
            let inter = interaction(config, &mat, &grid);
            let set = solve_bound_states_2p(&pot, &grid, &mat, &inter, &opts)?;
            let mut head = vec!["x2_nm".to_string(), "x3_nm".to_string()];
            head.extend((0..set.count()).map(|n| format!("gamma_{n}")));
            w.write_record(&head)?;
            let nw = xs.len();
            for j in 0..nw * nw {
                let mut rec = vec![format!("{:.6}", xs[j / nw]), format!("{:.6}", xs[j % nw])];
                rec.extend((0..set.count()).map(|n| format!("{:.12e}", set.state(n)[j])));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_report(report: &SpectrumReport, json: bool, out: &mut dyn Write) -> Result<()> {
    if json {
        serde_json::to_writer_pretty(&mut *out, report)?;
        writeln!(out)?;
    } else {
        write!(out, "{report}")?;
    }
    Ok(())
}
