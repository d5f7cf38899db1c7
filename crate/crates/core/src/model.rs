//! Material constants, the simulation grid and the dot potential profiles.
//!
//! Units are meV and nm throughout. The only physical constants that enter the
//! solvers are folded into two prefactors carried by [`MaterialParams`]:
//! the kinetic prefactor ħ²/(2m*) in meV·nm² and the Coulomb prefactor
//! e²/(4πε) in meV·nm.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

/// ħ²/(2m₀) in meV·nm² (CODATA 2018).
pub const HBAR2_OVER_2M0: f64 = 38.099_821_2;

/// e²/(4πε₀) in meV·nm (CODATA 2018).
pub const COULOMB_CONSTANT: f64 = 1_439.964_548;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    effective_mass_ratio: f64,
    relative_permittivity: f64,
    coulomb_cutoff_d: f64,
    kinetic_prefactor: f64,
    coulomb_prefactor: f64,
}

impl MaterialParams {
    /// Builds the material from m*/m₀, ε_r and the Coulomb cutoff `d` (nm).
    /// Both prefactors are derived here and cannot be set independently.
    pub fn new(
        effective_mass_ratio: f64,
        relative_permittivity: f64,
        coulomb_cutoff_d: f64,
    ) -> Result<Self> {
        for (name, value) in [
            ("effective_mass_ratio", effective_mass_ratio),
            ("relative_permittivity", relative_permittivity),
            ("coulomb_cutoff_d", coulomb_cutoff_d),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(invalid(name, format!("must be positive and finite, got {value}")));
            }
        }
        Ok(Self {
            effective_mass_ratio,
            relative_permittivity,
            coulomb_cutoff_d,
            kinetic_prefactor: HBAR2_OVER_2M0 / effective_mass_ratio,
            coulomb_prefactor: COULOMB_CONSTANT / relative_permittivity,
        })
    }

    /// GaAs: m* = 0.067 m₀, ε_r = 12.9, d = 5 nm.
    pub fn gaas() -> Self {
        Self::new(0.067, 12.9, 5.0).expect("GaAs constants are valid")
    }

    pub fn effective_mass_ratio(&self) -> f64 {
        self.effective_mass_ratio
    }

    pub fn relative_permittivity(&self) -> f64 {
        self.relative_permittivity
    }

    pub fn coulomb_cutoff_d(&self) -> f64 {
        self.coulomb_cutoff_d
    }

    /// ħ²/(2m*) in meV·nm².
    pub fn kinetic_prefactor(&self) -> f64 {
        self.kinetic_prefactor
    }

    /// e²/(4πε) in meV·nm.
    pub fn coulomb_prefactor(&self) -> f64 {
        self.coulomb_prefactor
    }

    /// Nearest-neighbour hopping ħ²/(2m*h²) of the three-point stencil.
    pub fn hopping(&self, spacing: f64) -> f64 {
        self.kinetic_prefactor / (spacing * spacing)
    }
}

pub fn make_material(
    effective_mass_ratio: f64,
    relative_permittivity: f64,
    coulomb_cutoff_d: f64,
) -> Result<MaterialParams> {
    MaterialParams::new(effective_mass_ratio, relative_permittivity, coulomb_cutoff_d)
}

/// Inclusive index range of grid nodes that carry bound-coordinate unknowns.
/// Nodes `first - 1` and `last + 1` are Dirichlet zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DotWindow {
    pub first: usize,
    pub last: usize,
}

impl DotWindow {
    pub fn len(&self) -> usize {
        self.last + 1 - self.first
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, index: usize) -> bool {
        index >= self.first && index <= self.last
    }
}

/// Uniform grid on `[0, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    length: f64,
    num_points: usize,
    spacing: f64,
    dot_window: DotWindow,
}

impl Grid1D {
    /// `length / spacing` must be an integer (to 1e-9 relative).
    pub fn new(length: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(invalid("spacing", format!("must be positive, got {spacing}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(invalid("length", format!("must be positive, got {length}")));
        }
        let cells = libm::round(length / spacing);
        if libm::fabs(cells * spacing - length) > 1e-9 * length {
            return Err(invalid(
                "spacing",
                format!("{spacing} nm does not divide the domain length {length} nm"),
            ));
        }
        let num_points = cells as usize + 1;
        if num_points < 3 {
            return Err(invalid("spacing", "grid needs at least three points"));
        }
        Ok(Self {
            length,
            num_points,
            spacing,
            dot_window: DotWindow {
                first: 1,
                last: num_points - 2,
            },
        })
    }

    /// Restricts the bound coordinates to the nodes strictly inside `(lo, hi)`.
    pub fn with_dot_window(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi < self.length && lo < hi) {
            return Err(Error::Geometry(format!(
                "dot window ({lo}, {hi}) nm must lie strictly inside (0, {}) nm",
                self.length
            )));
        }
        let eps = 1e-9 * self.spacing;
        let first = libm::floor((lo + eps) / self.spacing) as usize + 1;
        let last = libm::ceil((hi - eps) / self.spacing) as usize - 1;
        if first < 2 || last + 3 > self.num_points || last < first + 1 {
            return Err(Error::Geometry(format!(
                "dot window ({lo}, {hi}) nm leaves no lead segment on the {} nm grid",
                self.length
            )));
        }
        self.dot_window = DotWindow { first, last };
        Ok(self)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn dot_window(&self) -> DotWindow {
        self.dot_window
    }

    pub fn x(&self, index: usize) -> f64 {
        index as f64 * self.spacing
    }

    /// Node positions of the dot window.
    pub fn window_positions(&self) -> Vec<f64> {
        (self.dot_window.first..=self.dot_window.last)
            .map(|i| self.x(i))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DotKind {
    SingleDot,
    DoubleDot,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Well {
    pub center: f64,
    pub width: f64,
    pub depth: f64,
}

impl Well {
    pub fn left(&self) -> f64 {
        self.center - 0.5 * self.width
    }

    pub fn right(&self) -> f64 {
        self.center + 0.5 * self.width
    }
}

/// Square-well dot potential sampled on a [`Grid1D`].
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialProfile {
    kind: DotKind,
    wells: Vec<Well>,
    barrier_length: Option<f64>,
    samples: Vec<f64>,
}

impl PotentialProfile {
    pub fn kind(&self) -> DotKind {
        self.kind
    }

    pub fn wells(&self) -> &[Well] {
        &self.wells
    }

    pub fn barrier_length(&self) -> Option<f64> {
        self.barrier_length
    }

    /// Potential at every grid node (meV).
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Outer edges of the well region (nm).
    pub fn extent(&self) -> (f64, f64) {
        let lo = self.wells.iter().map(Well::left).fold(f64::INFINITY, f64::min);
        let hi = self.wells.iter().map(Well::right).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    pub fn center(&self) -> f64 {
        let (lo, hi) = self.extent();
        0.5 * (lo + hi)
    }

    /// Samples restricted to the dot window of `grid`.
    pub fn window_samples(&self, grid: &Grid1D) -> Vec<f64> {
        let w = grid.dot_window();
        self.samples[w.first..=w.last].to_vec()
    }

    /// Leads must be flat: every sample outside the window vanishes.
    pub fn check_flat_leads(&self, grid: &Grid1D) -> Result<()> {
        if self.samples.len() != grid.num_points() {
            return Err(Error::Geometry(format!(
                "potential has {} samples but the grid has {} points",
                self.samples.len(),
                grid.num_points()
            )));
        }
        let w = grid.dot_window();
        let outside = self
            .samples
            .iter()
            .enumerate()
            .filter(|(i, _)| !w.contains(*i))
            .any(|(_, v)| *v != 0.0);
        if outside {
            return Err(Error::Geometry(
                "dot potential extends outside the dot window".into(),
            ));
        }
        Ok(())
    }
}

/// Builds a centered single or double square-well profile.
///
/// Each node carries the average of the potential over its cell
/// `[x - h/2, x + h/2]`, so a node sitting exactly on a well edge gets half
/// the depth. This keeps the discretization second order in `h`.
pub fn build_potential(
    kind: DotKind,
    grid: &Grid1D,
    well_depth: f64,
    well_width: f64,
    barrier_length: f64,
) -> Result<PotentialProfile> {
    if !(well_depth >= 0.0 && well_depth.is_finite()) {
        return Err(invalid("well_depth", format!("must be non-negative, got {well_depth}")));
    }
    if !(well_width > 0.0 && well_width.is_finite()) {
        return Err(invalid("well_width", format!("must be positive, got {well_width}")));
    }
    let mid = 0.5 * grid.length();
    let (wells, barrier) = match kind {
        DotKind::SingleDot => (
            vec![Well {
                center: mid,
                width: well_width,
                depth: well_depth,
            }],
            None,
        ),
        DotKind::DoubleDot => {
            if !(barrier_length > 0.0 && barrier_length.is_finite()) {
                return Err(invalid(
                    "barrier_length",
                    format!("must be positive for a double dot, got {barrier_length}"),
                ));
            }
            let offset = 0.5 * (barrier_length + well_width);
            (
                vec![
                    Well {
                        center: mid - offset,
                        width: well_width,
                        depth: well_depth,
                    },
                    Well {
                        center: mid + offset,
                        width: well_width,
                        depth: well_depth,
                    },
                ],
                Some(barrier_length),
            )
        }
    };
    let lo = wells[0].left();
    let hi = wells[wells.len() - 1].right();
    let margin = 3.0 * well_width;
    if lo < margin || grid.length() - hi < margin {
        return Err(Error::Geometry(format!(
            "wells span [{lo}, {hi}] nm; leads need at least {margin} nm on each side of a {} nm domain",
            grid.length()
        )));
    }
    let h = grid.spacing();
    let samples = (0..grid.num_points())
        .map(|i| {
            let x = grid.x(i);
            let (a, b) = (x - 0.5 * h, x + 0.5 * h);
            wells
                .iter()
                .map(|w| {
                    let overlap = (b.min(w.right()) - a.max(w.left())).max(0.0);
                    -w.depth * overlap / h
                })
                .sum::<f64>()
        })
        // -0.0 from zero-depth wells would break the flat-lead check
        .map(|v| if v == 0.0 { 0.0 } else { v })
        .collect();
    Ok(PotentialProfile {
        kind,
        wells,
        barrier_length: barrier,
        samples,
    })
}

/// Cutoff Coulomb energy `e²/(4πε) / sqrt((x_i - x_j)² + d²)` in meV.
pub fn coulomb_kernel(x_i: f64, x_j: f64, material: &MaterialParams) -> f64 {
    CoulombKernel::from_material(material).eval(x_i, x_j)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoulombKernel {
    prefactor: f64,
    cutoff: f64,
}

impl CoulombKernel {
    pub fn from_material(material: &MaterialParams) -> Self {
        Self {
            prefactor: material.coulomb_prefactor(),
            cutoff: material.coulomb_cutoff_d(),
        }
    }

    /// Interaction switched off; every pair energy is zero.
    pub fn off(cutoff: f64) -> Self {
        Self {
            prefactor: 0.0,
            cutoff,
        }
    }

    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    #[inline]
    pub fn eval(&self, x_i: f64, x_j: f64) -> f64 {
        let dx = x_i - x_j;
        self.prefactor / libm::sqrt(dx * dx + self.cutoff * self.cutoff)
    }
}

/// Smooth envelope that switches the scattered-carrier interaction off in the
/// outer lead segments. Equal to one within `plateau_radius` of `center`,
/// falls as cos² over `ramp`, and is exactly zero beyond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadScreening {
    pub center: f64,
    pub plateau_radius: f64,
    pub ramp: f64,
}

impl LeadScreening {
    pub fn factor(&self, x: f64) -> f64 {
        let r = libm::fabs(x - self.center);
        if r <= self.plateau_radius {
            1.0
        } else if r >= self.plateau_radius + self.ramp {
            0.0
        } else {
            let c = libm::cos(0.5 * core::f64::consts::PI * (r - self.plateau_radius) / self.ramp);
            c * c
        }
    }

    /// Outermost position (distance from center) with a nonzero envelope.
    pub fn reach(&self) -> f64 {
        self.plateau_radius + self.ramp
    }
}

/// Pair interactions entering the few-particle Hamiltonians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub kernel: CoulombKernel,
    pub screening: Option<LeadScreening>,
}

impl Interaction {
    pub fn bare(material: &MaterialParams) -> Self {
        Self {
            kernel: CoulombKernel::from_material(material),
            screening: None,
        }
    }

    pub fn screened(material: &MaterialParams, screening: LeadScreening) -> Self {
        Self {
            kernel: CoulombKernel::from_material(material),
            screening: Some(screening),
        }
    }

    pub fn off(material: &MaterialParams) -> Self {
        Self {
            kernel: CoulombKernel::off(material.coulomb_cutoff_d()),
            screening: None,
        }
    }

    pub fn is_off(&self) -> bool {
        self.kernel.prefactor == 0.0
    }

    /// Energy between the scattered carrier at `x1` and a bound electron at `x_bound`.
    #[inline]
    pub fn carrier_bound(&self, x1: f64, x_bound: f64) -> f64 {
        let s = self.screening.map_or(1.0, |s| s.factor(x1));
        if s == 0.0 {
            0.0
        } else {
            s * self.kernel.eval(x1, x_bound)
        }
    }

    /// Energy between two bound electrons.
    #[inline]
    pub fn bound_bound(&self, x2: f64, x3: f64) -> f64 {
        self.kernel.eval(x2, x3)
    }
}
