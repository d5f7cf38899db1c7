//! Independent reference solvers for cross-checks.
//!
//! None of these reuse the product-grid assembly of [`crate::scattering`].
//! The coupled-channel solver shares only the plane-wave fit of
//! [`crate::channels`].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::channels::{fit_amplitudes, open_channels, ChannelAmplitudes, PlaneSamples, DEFAULT_PLANE_OFFSET};
use crate::eigensolve::{window_operator_1d, BoundBasis, SymmetricOperator};
use crate::error::{Error, Result};
use crate::linalg::{solve_tridiagonal, symmetric_eigen, C64, ZERO};
use crate::model::{Grid1D, Interaction, MaterialParams, PotentialProfile};

pub const DENSE_DIMENSION_CAP: usize = 4000;
pub const TRUNCATION_TOLERANCE: f64 = 1e-3;

/// Continuum transmission probability over a square well of the given depth
/// and width at kinetic energy `T`.
pub fn analytic_transmission_1d(well_depth: f64, well_width: f64, kinetic: f64, material: &MaterialParams) -> f64 {
    if well_depth == 0.0 {
        return 1.0;
    }
    let q = libm::sqrt((kinetic + well_depth) / material.kinetic_prefactor());
    let s = libm::sin(q * well_width);
    1.0 / (1.0 + well_depth * well_depth * s * s / (4.0 * kinetic * (kinetic + well_depth)))
}

/// Single-particle lattice scattering with unit incoming wave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeAmplitudes {
    pub r: C64,
    pub t: C64,
}

impl LatticeAmplitudes {
    pub fn transmission(&self) -> f64 {
        self.t.norm_sqr()
    }

    pub fn reflection(&self) -> f64 {
        self.r.norm_sqr()
    }
}

/// Tight-binding scattering on `samples` (the potential, flat at both ends)
/// at kinetic energy `T` above the lead band bottom. `from_left = false`
/// sends the wave in from the right end.
pub fn lattice_scattering_1d(
    samples: &[f64],
    hopping: f64,
    kinetic: f64,
    from_left: bool,
) -> Result<LatticeAmplitudes> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::Problem("lattice needs at least three nodes".into()));
    }
    let cos_kh = 1.0 - kinetic / (2.0 * hopping);
    if !(kinetic > 0.0 && cos_kh > -1.0) {
        return Err(Error::Problem(format!("kinetic energy {kinetic} meV outside the lattice band")));
    }
    let kh = libm::acos(cos_kh);
    let p = C64::new(libm::cos(kh), libm::sin(kh));
    let v: Vec<f64> = if from_left {
        samples.to_vec()
    } else {
        samples.iter().rev().copied().collect()
    };
    let e = v[0] + kinetic;
    let mut diag: Vec<C64> = v.iter().map(|x| C64::new(2.0 * hopping + x - e, 0.0)).collect();
    diag[0] -= p * hopping;
    diag[n - 1] -= p * hopping;
    let off = vec![C64::new(-hopping, 0.0); n - 1];
    let mut rhs = vec![ZERO; n];
    rhs[0] = (p.inv() - p) * hopping;
    let psi = solve_tridiagonal(&off, &diag, &off, &rhs)?;
    Ok(LatticeAmplitudes {
        r: psi[0] - 1.0,
        t: psi[n - 1],
    })
}

/// Full spectrum of a small symmetric operator.
pub fn dense_eigensolve_small(op: &SymmetricOperator) -> Result<Vec<f64>> {
    let n = op.dim();
    if n > DENSE_DIMENSION_CAP {
        return Err(Error::DimensionCap {
            dim: n,
            cap: DENSE_DIMENSION_CAP,
        });
    }
    Ok(symmetric_eigen(n, &op.to_dense())?.0)
}

/// The scattering problem rewritten in a truncated basis of bound-subsystem
/// states: one 1D equation in `x₁` per basis state, coupled by
/// `V_nm(x₁) = ⟨χ_n | Σ_b v(x₁, x_b) | χ_m⟩`.
#[derive(Debug, Clone)]
pub struct CoupledChannelSystem {
    energies: Vec<f64>,
    /// `V_nm(x₁_i)`, row-major `n × n` block per slice.
    potential_matrix: Vec<f64>,
    /// Carrier potential on the full grid.
    carrier_potential: Vec<f64>,
    n_slices: usize,
    spacing: f64,
    hopping: f64,
}

impl CoupledChannelSystem {
    /// `states` are weighted-normalized functions of the bound coordinates
    /// (window nodes, or window pairs `a·nw + b` for two bound electrons).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        energies: Vec<f64>,
        states: &[Vec<f64>],
        bound_particles: usize,
        carrier_potential: &[f64],
        grid: &Grid1D,
        material: &MaterialParams,
        interaction: &Interaction,
    ) -> Result<Self> {
        let h = grid.spacing();
        let xs = grid.window_positions();
        let nw = xs.len();
        let nb = energies.len();
        if states.len() != nb || nb == 0 {
            return Err(Error::Problem("coupled-channel basis needs one state per energy".into()));
        }
        let (len, w) = match bound_particles {
            1 => (nw, h),
            2 => (nw * nw, h * h),
            _ => return Err(Error::Problem("one or two bound particles".into())),
        };
        if states.iter().any(|s| s.len() != len) {
            return Err(Error::Problem("basis state length does not match the window".into()));
        }
        let n1 = grid.num_points();
        let mut potential_matrix = vec![0.0; n1 * nb * nb];
        let mut row = vec![0.0; nw];
        let mut field = vec![0.0; len];
        for i in 0..n1 {
            let x1 = grid.x(i);
            for (r, xb) in row.iter_mut().zip(&xs) {
                *r = interaction.carrier_bound(x1, *xb);
            }
            if row.iter().all(|v| *v == 0.0) {
                continue;
            }
            for (j, f) in field.iter_mut().enumerate() {
                *f = if bound_particles == 1 { row[j] } else { row[j / nw] + row[j % nw] };
            }
            let block = &mut potential_matrix[i * nb * nb..(i + 1) * nb * nb];
            for n in 0..nb {
                for m in n..nb {
                    let v: f64 = states[n]
                        .iter()
                        .zip(&states[m])
                        .zip(&field)
                        .map(|((a, b), f)| a * b * f)
                        .sum::<f64>()
                        * w;
                    block[n * nb + m] = v;
                    block[m * nb + n] = v;
                }
            }
        }
        Ok(Self {
            energies,
            potential_matrix,
            carrier_potential: carrier_potential.to_vec(),
            n_slices: n1,
            spacing: h,
            hopping: material.hopping(h),
        })
    }

    /// Basis made of the bound levels of `basis`.
    pub fn from_bound_basis(
        basis: &dyn BoundBasis,
        bound_particles: usize,
        carrier_potential: &[f64],
        grid: &Grid1D,
        material: &MaterialParams,
        interaction: &Interaction,
    ) -> Result<Self> {
        let states: Vec<Vec<f64>> = (0..basis.count()).map(|n| basis.state(n).to_vec()).collect();
        Self::new(
            basis.energies().to_vec(),
            &states,
            bound_particles,
            carrier_potential,
            grid,
            material,
            interaction,
        )
    }

    /// Basis made of the lowest `count` eigenfunctions of the one-particle
    /// window operator (bound levels first, then the discretized continuum).
    pub fn window_basis_1d(
        potential: &PotentialProfile,
        grid: &Grid1D,
        material: &MaterialParams,
        interaction: &Interaction,
        count: usize,
    ) -> Result<Self> {
        let op = window_operator_1d(potential, grid, material);
        let n = op.dim();
        let (vals, vecs) = symmetric_eigen(n, &op.to_dense())?;
        let count = count.min(n);
        let scale = 1.0 / libm::sqrt(grid.spacing());
        let states: Vec<Vec<f64>> = (0..count)
            .map(|j| {
                let mut v: Vec<f64> = vecs[j * n..(j + 1) * n].iter().map(|x| x * scale).collect();
                let big = v.iter().copied().fold(0.0, |m: f64, x| if libm::fabs(x) > libm::fabs(m) { x } else { m });
                if big < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                v
            })
            .collect();
        Self::new(vals[..count].to_vec(), &states, 1, potential.samples(), grid, material, interaction)
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// `V_nm` at slice `i`.
    pub fn coupling(&self, i: usize, n: usize, m: usize) -> f64 {
        let nb = self.len();
        self.potential_matrix[i * nb * nb + n * nb + m]
    }

    /// Largest coupling on the boundary slices.
    pub fn boundary_coupling(&self) -> f64 {
        let nb = self.len();
        let last = self.n_slices - 1;
        self.potential_matrix[..nb * nb]
            .iter()
            .chain(&self.potential_matrix[last * nb * nb..])
            .fold(0.0, |a, v| a.max(libm::fabs(*v)))
    }

    /// The system restricted to its first `count` basis states.
    pub fn truncated(&self, count: usize) -> Self {
        let nb = self.len();
        let count = count.min(nb);
        let mut pm = vec![0.0; self.n_slices * count * count];
        for i in 0..self.n_slices {
            for n in 0..count {
                for m in 0..count {
                    pm[i * count * count + n * count + m] = self.potential_matrix[i * nb * nb + n * nb + m];
                }
            }
        }
        Self {
            energies: self.energies[..count].to_vec(),
            potential_matrix: pm,
            carrier_potential: self.carrier_potential.clone(),
            n_slices: self.n_slices,
            spacing: self.spacing,
            hopping: self.hopping,
        }
    }

    /// Channel wavefunctions `u_n(x₁_i)`, stored `[i * n + n]`.
    pub fn solve_channels(&self, incident_channel: usize, incident_kinetic: f64) -> Result<Vec<C64>> {
        let nb = self.len();
        let (n1, t) = (self.n_slices, self.hopping);
        let energy = self.energies[incident_channel] + incident_kinetic;
        let v0 = self.carrier_potential[0];
        let mut phases = Vec::with_capacity(nb);
        for e in &self.energies {
            // carrier kinetic energy in the lead, measured from the lead band bottom
            let kin = energy - e - v0;
            let c = 1.0 - kin / (2.0 * t);
            phases.push(if kin > 0.0 {
                let kh = libm::acos(c);
                C64::new(libm::cos(kh), libm::sin(kh))
            } else {
                C64::new(libm::exp(-libm::acosh(c)), 0.0)
            });
        }
        let dim = n1 * nb;
        let mut trip = Vec::with_capacity(dim * (nb + 2));
        let neg_t = C64::new(-t, 0.0);
        for i in 0..n1 {
            let block = &self.potential_matrix[i * nb * nb..(i + 1) * nb * nb];
            for n in 0..nb {
                let k = i * nb + n;
                let mut d = C64::new(2.0 * t + self.carrier_potential[i] + self.energies[n] - energy, 0.0);
                if i == 0 || i == n1 - 1 {
                    d -= phases[n] * t;
                }
                for m in 0..nb {
                    let v = block[n * nb + m];
                    if m == n {
                        d += v;
                    } else if v != 0.0 {
                        trip.push(Triplet::new(k, i * nb + m, C64::new(v, 0.0)));
                    }
                }
                trip.push(Triplet::new(k, k, d));
                if i > 0 {
                    trip.push(Triplet::new(k, k - nb, neg_t));
                }
                if i + 1 < n1 {
                    trip.push(Triplet::new(k, k + nb, neg_t));
                }
            }
        }
        let a = SparseColMat::<usize, C64>::try_new_from_triplets(dim, dim, &trip)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let lu = a
            .sp_lu()
            .map_err(|e| Error::Factorization(format!("sparse LU: {e:?}")))?;
        let p = phases[incident_channel];
        let mut rhs = Mat::<C64>::zeros(dim, 1);
        rhs[(incident_channel, 0)] = (p.inv() - p) * t;
        lu.solve_in_place(rhs.as_mut());
        Ok((0..dim).map(|k| rhs[(k, 0)]).collect())
    }
}

#[derive(Debug, Clone)]
pub struct CoupledChannelResult {
    pub amplitudes: ChannelAmplitudes,
    pub warnings: Vec<String>,
}

/// Solves the coupled-channel equations and extracts amplitudes with the
/// same plane-wave fit as the main path. When two more basis states are
/// available the solve is repeated with them and a truncation warning is
/// attached if any probability moves by more than `10⁻³`.
pub fn coupled_channel_solve(
    system: &CoupledChannelSystem,
    basis_size: usize,
    incident_channel: usize,
    incident_kinetic: f64,
) -> Result<CoupledChannelResult> {
    let run = |count: usize| -> Result<ChannelAmplitudes> {
        let sys = system.truncated(count);
        let u = sys.solve_channels(incident_channel, incident_kinetic)?;
        let nb = sys.len();
        let n1 = sys.n_slices;
        let s = DEFAULT_PLANE_OFFSET;
        let last = n1 - 1;
        let at = |i: usize, n: usize| u[i * nb + n];
        let samples = PlaneSamples {
            offset: s,
            n_slices: n1,
            left: (0..nb).map(|n| [at(s, n), at(s + 1, n)]).collect(),
            right: (0..nb).map(|n| [at(last - s, n), at(last - s - 1, n)]).collect(),
        };
        let energy = sys.energies[incident_channel] + incident_kinetic;
        let shifted: Vec<f64> = sys.energies.iter().map(|e| e + sys.carrier_potential[0]).collect();
        let channels = open_channels(energy, &shifted, sys.spacing, sys.hopping)?;
        fit_amplitudes(&samples, channels, incident_channel, incident_kinetic, sys.spacing)
    };
    let amplitudes = run(basis_size)?;
    let mut warnings = Vec::new();
    if basis_size + 2 <= system.len() {
        let wider = run(basis_size + 2)?;
        let shift = (0..amplitudes.b.len())
            .map(|n| {
                libm::fabs(amplitudes.reflection(n) - wider.reflection(n))
                    .max(libm::fabs(amplitudes.transmission(n) - wider.transmission(n)))
            })
            .fold(0.0, f64::max);
        if shift > TRUNCATION_TOLERANCE {
            warnings.push(format!(
                "coupled-channel basis not converged: probabilities move by {shift:.3e} with two more states"
            ));
        }
    }
    Ok(CoupledChannelResult { amplitudes, warnings })
}
