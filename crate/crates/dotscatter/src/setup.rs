//! Everything a sweep needs that does not depend on `T₀`, built once and
//! shared read-only by the workers.

use std::time::Instant;

use dotscatter_core::eigensolve::lowest_modes_2p;
use dotscatter_core::linalg::GmresOptions;
use dotscatter_core::*;

use crate::config::{SolverChoice, SweepConfig, System};
use crate::error::Result;

#[derive(Debug, Clone)]
pub enum Bound {
    One(BoundStateSet),
    Two(TwoParticleBoundSet),
}

impl Bound {
    pub fn basis(&self) -> &dyn BoundBasis {
        match self {
            Bound::One(s) => s,
            Bound::Two(s) => s,
        }
    }
}

/// Outcome of one energy.
#[derive(Debug, Clone)]
pub struct Point {
    pub t0: f64,
    pub amplitudes: ChannelAmplitudes,
    pub entropy: EntropyRecord,
    pub iterations: usize,
    pub solver_residual: f64,
    pub warnings: Vec<String>,
}

pub struct PreparedSystem {
    pub config: SweepConfig,
    pub hash: String,
    pub material: MaterialParams,
    pub grid: Grid1D,
    pub potential: PotentialProfile,
    pub interaction: Interaction,
    pub bound: Bound,
    pub lead: LeadBasis,
    pub hamiltonian: ProductHamiltonian,
    pub coarse: Option<CoarseSpace>,
    pub incident_channel: usize,
    pub gmres: GmresOptions,
    pub setup_seconds: f64,
}

pub fn material(config: &SweepConfig) -> Result<MaterialParams> {
    let m = &config.material;
    Ok(make_material(m.effective_mass_ratio, m.relative_permittivity, m.coulomb_cutoff_d_nm)?)
}

/// Grid with the bound-coordinate window placed around the wells, plus the
/// potential on it.
pub fn geometry(config: &SweepConfig) -> Result<(Grid1D, PotentialProfile)> {
    let g = &config.geometry;
    let kind = g.kind.into();
    let bare = Grid1D::new(g.length_nm, g.h_nm)?;
    let pot = build_potential(kind, &bare, g.well_depth_mev, g.well_width_nm, g.barrier_nm)?;
    let (lo, hi) = pot.extent();
    let grid = bare.with_dot_window(lo - g.window_margin_nm, hi + g.window_margin_nm)?;
    let pot = build_potential(kind, &grid, g.well_depth_mev, g.well_width_nm, g.barrier_nm)?;
    pot.check_flat_leads(&grid)?;
    Ok((grid, pot))
}

pub fn interaction(config: &SweepConfig, material: &MaterialParams, grid: &Grid1D) -> Interaction {
    let i = &config.interaction;
    match (i.coulomb, &i.screening) {
        (false, _) => Interaction::off(material),
        (true, None) => Interaction::bare(material),
        (true, Some(s)) => Interaction::screened(
            material,
            LeadScreening {
                center: 0.5 * grid.length(),
                plateau_radius: s.plateau_radius_nm,
                ramp: s.ramp_nm,
            },
        ),
    }
}

pub fn eigen_options(config: &SweepConfig) -> EigenOptions {
    EigenOptions {
        max_levels: config.eigen.max_levels,
        delta_deg: config.eigen.delta_deg_mev,
        decay_tolerance: config.eigen.decay_tolerance,
        ..EigenOptions::default()
    }
}

impl PreparedSystem {
    pub fn prepare(config: &SweepConfig) -> Result<Self> {
        config.validate()?;
        let start = Instant::now();
        let material = material(config)?;
        let (grid, potential) = geometry(config)?;
        let interaction = interaction(config, &material, &grid);
        let opts = eigen_options(config);
        let sc = &config.scattering;
        let (bound, lead, modes) = match config.system {
            System::Qd2p => {
                let set = solve_bound_states_1d(&potential, &grid, &material, &opts)?;
                let lead = LeadBasis::full_1d(&set, &potential, &grid, &material)?;
                let modes: Vec<Vec<f64>> =
                    (0..lead.len().min(sc.lead_modes)).map(|n| lead.state(n).to_vec()).collect();
                (Bound::One(set), lead, modes)
            }
            System::Dqd3p => {
                let set = solve_bound_states_2p(&potential, &grid, &material, &interaction, &opts)?;
                let (vals, states, _) =
                    lowest_modes_2p(&potential, &grid, &material, &interaction, sc.lead_modes, &opts)?;
                let lead = LeadBasis::from_bound(&set).extended(&vals, &states);
                (Bound::Two(set), lead, states)
            }
        };
        if bound.basis().count() == 0 {
            return Err(Error::Problem("the dot has no bound state to scatter off".into()).into());
        }
        log::info!(
            "bound levels {:?}, lead basis {} functions",
            bound.basis().energies(),
            lead.len()
        );
        let cap = sc.memory_cap_bytes;
        let hamiltonian = match config.system {
            System::Qd2p => assemble_hamiltonian_2p(&potential, &grid, &material, &interaction, cap)?,
            System::Dqd3p => assemble_hamiltonian_3p(&potential, &grid, &material, &interaction, cap)?,
        };
        let iterative = match sc.solver {
            SolverChoice::Auto => config.system == System::Dqd3p,
            SolverChoice::Direct => false,
            SolverChoice::Iterative => true,
        };
        let coarse = if iterative {
            Some(CoarseSpace::new(&hamiltonian, &modes)?)
        } else {
            None
        };
        let incident_channel = match (sc.incident_channel, &bound) {
            (Some(n), _) => n,
            (None, Bound::One(_)) => 0,
            (None, Bound::Two(set)) => set.lowest_with(ExchangeSymmetry::Symmetric).unwrap_or(0),
        };
        if incident_channel >= bound.basis().count() {
            return Err(crate::error::CliError::Config(format!(
                "incident_channel {incident_channel} but only {} bound levels",
                bound.basis().count()
            )));
        }
        Ok(Self {
            config: config.clone(),
            hash: config.hash(),
            material,
            grid,
            potential,
            interaction,
            bound,
            lead,
            hamiltonian,
            coarse,
            incident_channel,
            gmres: GmresOptions {
                tolerance: sc.gmres_tolerance,
                restart: sc.gmres_restart,
                max_iterations: sc.gmres_max_iterations,
            },
            setup_seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn bound_energies(&self) -> &[f64] {
        self.bound.basis().energies()
    }

    pub fn degeneracy_groups(&self) -> &[Vec<usize>] {
        self.bound.basis().degeneracy_groups()
    }

    pub fn problem(&self, t0: f64) -> ScatteringProblem<'_> {
        let mut p = ScatteringProblem::new(&self.hamiltonian, &self.lead, t0);
        p.incident_channel = self.incident_channel;
        p.num_evanescent = self.config.scattering.num_evanescent;
        if let Some(coarse) = &self.coarse {
            p.solver = SolverKind::Iterative {
                options: self.gmres,
                coarse,
            };
        }
        p
    }

    pub fn solve(&self, t0: f64) -> dotscatter_core::Result<ScatteringSolution> {
        qtbm_solve(&self.problem(t0))
    }

    /// Solve, extract amplitudes and the entropy after post-selection.
    pub fn evaluate(&self, t0: f64) -> dotscatter_core::Result<Point> {
        let solution = self.solve(t0)?;
        self.point(&solution)
    }

    pub fn point(&self, solution: &ScatteringSolution) -> dotscatter_core::Result<Point> {
        let offset = self.config.scattering.extraction_offset;
        let amplitudes = channels::extract_amplitudes_at(solution, &self.lead, offset)?;
        let kept = post_select(&amplitudes, self.config.post_selection.into())?;
        let entropy = EntropyRecord::new(&kept, self.degeneracy_groups())?;
        Ok(Point {
            t0: solution.incident_kinetic,
            amplitudes,
            entropy,
            iterations: solution.iterations,
            solver_residual: solution.solver_residual,
            warnings: solution.warnings.clone(),
        })
    }
}
