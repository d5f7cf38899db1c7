//! JSON sweep configuration.
//!
//! Every section has defaults, so `{}` is a valid file describing the 10 to
//! 40 meV single-dot sweep. See `configs/qd_2p.json` for an annotated
//! example.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dotscatter_core::{DotKind, PostSelection};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    /// One carrier scattering off one electron bound in a single dot.
    #[serde(rename = "qd_2p")]
    Qd2p,
    /// One carrier scattering off two electrons bound in a double dot.
    #[serde(rename = "dqd_3p")]
    Dqd3p,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    SingleDot,
    DoubleDot,
}

impl From<GeometryKind> for DotKind {
    fn from(k: GeometryKind) -> Self {
        match k {
            GeometryKind::SingleDot => DotKind::SingleDot,
            GeometryKind::DoubleDot => DotKind::DoubleDot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    /// Direct for two particles, preconditioned GMRES for three.
    #[default]
    Auto,
    Direct,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Transmitted,
    Reflected,
    #[default]
    Both,
}

impl From<Side> for PostSelection {
    fn from(s: Side) -> Self {
        match s {
            Side::Transmitted => PostSelection::Transmitted,
            Side::Reflected => PostSelection::Reflected,
            Side::Both => PostSelection::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Material {
    pub effective_mass_ratio: f64,
    pub relative_permittivity: f64,
    pub coulomb_cutoff_d_nm: f64,
}

impl Default for Material {
    fn default() -> Self {
        Self {
            effective_mass_ratio: 0.067,
            relative_permittivity: 12.9,
            coulomb_cutoff_d_nm: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub kind: GeometryKind,
    #[serde(rename = "L_nm")]
    pub length_nm: f64,
    pub h_nm: f64,
    #[serde(rename = "well_depth_meV")]
    pub well_depth_mev: f64,
    pub well_width_nm: f64,
    #[serde(default)]
    pub barrier_nm: f64,
    /// Distance from the outer well edges to the bound-coordinate window edges.
    pub window_margin_nm: f64,
}

impl Geometry {
    pub fn for_system(system: System) -> Self {
        match system {
            System::Qd2p => Self {
                kind: GeometryKind::SingleDot,
                length_nm: 600.0,
                h_nm: 1.0,
                well_depth_mev: 110.0,
                well_width_nm: 30.0,
                barrier_nm: 0.0,
                window_margin_nm: 70.0,
            },
            System::Dqd3p => Self {
                kind: GeometryKind::DoubleDot,
                length_nm: 600.0,
                h_nm: 2.0,
                well_depth_mev: 110.0,
                well_width_nm: 30.0,
                barrier_nm: 20.0,
                window_margin_nm: 25.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Screening {
    pub plateau_radius_nm: f64,
    pub ramp_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InteractionConfig {
    pub coulomb: bool,
    /// Taper of the carrier/bound coupling towards the leads; `null` keeps
    /// the bare kernel everywhere.
    pub screening: Option<Screening>,
}

impl Default for InteractionConfig {
    fn default() -> Self {
        Self {
            coulomb: true,
            screening: Some(Screening {
                plateau_radius_nm: 150.0,
                ramp_nm: 90.0,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Eigen {
    pub max_levels: usize,
    #[serde(rename = "delta_deg_meV")]
    pub delta_deg_mev: f64,
    pub decay_tolerance: f64,
}

impl Eigen {
    pub fn for_system(system: System) -> Self {
        match system {
            System::Qd2p => Self {
                max_levels: 4,
                delta_deg_mev: 0.05,
                decay_tolerance: 1e-8,
            },
            System::Dqd3p => Self {
                max_levels: 8,
                delta_deg_mev: 0.05,
                decay_tolerance: 1e-3,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scattering {
    /// Bound level the carrier arrives in; `null` picks level 0 for a single
    /// dot and the lowest exchange-symmetric level for a double dot.
    pub incident_channel: Option<usize>,
    pub num_evanescent: usize,
    pub solver: SolverChoice,
    /// Extra two-particle window modes in the three-particle lead basis, also
    /// used as the coarse space of the iterative solver.
    pub lead_modes: usize,
    pub gmres_tolerance: f64,
    pub gmres_restart: usize,
    pub gmres_max_iterations: usize,
    pub memory_cap_bytes: u64,
    /// Distance (in grid slices) of the amplitude planes from the boundaries.
    pub extraction_offset: usize,
    /// Rows with a larger flux defect are flagged.
    pub unitarity_tolerance: f64,
}

impl Default for Scattering {
    fn default() -> Self {
        Self {
            incident_channel: None,
            num_evanescent: 6,
            solver: SolverChoice::Auto,
            lead_modes: 80,
            gmres_tolerance: 1e-9,
            gmres_restart: 30,
            gmres_max_iterations: 600,
            memory_cap_bytes: dotscatter_core::scattering::DEFAULT_MEMORY_CAP,
            extraction_offset: 1,
            unitarity_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Refinement {
    pub enabled: bool,
    /// Midpoints are inserted where |Δξ| between neighbours exceeds this.
    pub threshold: f64,
    pub max_extra_points: usize,
    /// Maximum number of bisection passes.
    pub max_depth: usize,
}

impl Default for Refinement {
    fn default() -> Self {
        Self {
            enabled: true,
            threshold: 0.05,
            max_extra_points: 40,
            max_depth: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sweep {
    #[serde(rename = "T0_min_meV")]
    pub t0_min: f64,
    #[serde(rename = "T0_max_meV")]
    pub t0_max: f64,
    pub num_steps: usize,
    pub refinement: Refinement,
    pub threads: usize,
    /// Fraction of failed rows above which the sweep exits with status 2.
    pub failure_threshold: f64,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            t0_min: 10.0,
            t0_max: 40.0,
            num_steps: 121,
            refinement: Refinement::default(),
            threads: 1,
            failure_threshold: 0.1,
        }
    }
}

impl Sweep {
    pub fn grid(&self) -> Vec<f64> {
        let n = self.num_steps;
        (0..n)
            .map(|i| self.t0_min + (self.t0_max - self.t0_min) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub channels_csv: PathBuf,
    pub entropy_csv: PathBuf,
    pub provenance_json: PathBuf,
}

impl Default for Output {
    fn default() -> Self {
        Self {
            channels_csv: "channels.csv".into(),
            entropy_csv: "entropy.csv".into(),
            provenance_json: "provenance.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub system: System,
    pub material: Material,
    pub geometry: Geometry,
    pub interaction: InteractionConfig,
    pub eigen: Eigen,
    pub scattering: Scattering,
    pub sweep: Sweep,
    pub post_selection: Side,
    pub output: Output,
}

/// File form: the geometry and eigen sections default per system.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "default_system")]
    system: System,
    #[serde(default)]
    material: Material,
    geometry: Option<Geometry>,
    #[serde(default)]
    interaction: InteractionConfig,
    eigen: Option<Eigen>,
    #[serde(default)]
    scattering: Scattering,
    #[serde(default)]
    sweep: Sweep,
    #[serde(default)]
    post_selection: Side,
    #[serde(default)]
    output: Output,
}

fn default_system() -> System {
    System::Qd2p
}

impl From<RawConfig> for SweepConfig {
    fn from(r: RawConfig) -> Self {
        Self {
            system: r.system,
            material: r.material,
            geometry: r.geometry.unwrap_or_else(|| Geometry::for_system(r.system)),
            interaction: r.interaction,
            eigen: r.eigen.unwrap_or_else(|| Eigen::for_system(r.system)),
            scattering: r.scattering,
            sweep: r.sweep,
            post_selection: r.post_selection,
            output: r.output,
        }
    }
}

impl SweepConfig {
    pub fn for_system(system: System) -> Self {
        serde_json::from_value::<RawConfig>(serde_json::json!({ "system": system }))
            .expect("defaults deserialize")
            .into()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let config = Self::from(raw);
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let s = &self.sweep;
        if !(s.t0_min > 0.0 && s.t0_min.is_finite()) {
            return bad(format!("T0_min_meV must be positive, got {}", s.t0_min));
        }
        if !(s.t0_max > s.t0_min && s.t0_max.is_finite()) {
            return bad(format!("T0_max_meV ({}) must exceed T0_min_meV ({})", s.t0_max, s.t0_min));
        }
        if s.num_steps < 2 {
            return bad(format!("num_steps must be at least 2, got {}", s.num_steps));
        }
        if s.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&s.failure_threshold) {
            return bad(format!("failure_threshold must lie in [0, 1], got {}", s.failure_threshold));
        }
        if !(s.refinement.threshold > 0.0) {
            return bad("refinement threshold must be positive".into());
        }
        let expected = match self.system {
            System::Qd2p => GeometryKind::SingleDot,
            System::Dqd3p => GeometryKind::DoubleDot,
        };
        if self.geometry.kind != expected {
            return bad(format!("system {:?} needs geometry kind {:?}", self.system, expected));
        }
        if !(self.geometry.window_margin_nm > 0.0) {
            return bad("window_margin_nm must be positive".into());
        }
        if self.eigen.max_levels == 0 {
            return bad("max_levels must be at least 1".into());
        }
        if !(self.eigen.delta_deg_mev >= 0.0) {
            return bad("delta_deg_meV must be non-negative".into());
        }
        let sc = &self.scattering;
        if self.system == System::Dqd3p && sc.lead_modes == 0 {
            return bad("lead_modes must be positive for the three-particle system".into());
        }
        if !(sc.unitarity_tolerance > 0.0 && sc.gmres_tolerance > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if sc.gmres_restart == 0 {
            return bad("gmres_restart must be positive".into());
        }
        if let Some(scr) = &self.interaction.screening {
            if !(scr.plateau_radius_nm > 0.0 && scr.ramp_nm >= 0.0) {
                return bad("screening radii must be positive".into());
            }
        }
        Ok(())
    }

    /// SHA-256 over everything that can change a result row. Thread count
    /// and output paths are left out so they do not invalidate a resume.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.sweep.threads = 1;
        c.output = Output::default();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        format!("{:x}", Sha256::digest(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_single_dot_sweep() {
        let c = SweepConfig::from_json("{}").unwrap();
        assert_eq!(c.system, System::Qd2p);
        assert_eq!(c.geometry.h_nm, 1.0);
        assert_eq!(c.sweep.grid().len(), 121);
        assert_eq!(c.sweep.grid()[120], 40.0);
    }

    #[test]
    fn double_dot_defaults_follow_the_system() {
        let c = SweepConfig::from_json(r#"{"system": "dqd_3p"}"#).unwrap();
        assert_eq!(c.geometry.kind, GeometryKind::DoubleDot);
        assert_eq!(c.eigen.max_levels, 8);
    }

    #[test]
    fn rejects_bad_ranges_and_unknown_keys() {
        for text in [
            r#"{"sweep": {"T0_min_meV": 0}}"#,
            r#"{"sweep": {"T0_min_meV": 20, "T0_max_meV": 10}}"#,
            r#"{"sweep": {"num_steps": 1}}"#,
            r#"{"system": "dqd_3p", "geometry": {"kind": "single_dot", "L_nm": 600, "h_nm": 1,
                "well_depth_meV": 110, "well_width_nm": 30, "window_margin_nm": 70}}"#,
            r#"{"sweeps": {}}"#,
        ] {
            assert!(matches!(SweepConfig::from_json(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn hash_ignores_threads_and_paths() {
        let a = SweepConfig::for_system(System::Qd2p);
        let mut b = a.clone();
        b.sweep.threads = 8;
        b.output.channels_csv = "elsewhere.csv".into();
        assert_eq!(a.hash(), b.hash());
        b.sweep.t0_max = 41.0;
        assert_ne!(a.hash(), b.hash());
    }
}
