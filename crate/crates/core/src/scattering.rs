//! Few-particle Hamiltonians on the product grid and their open-boundary
//! solution at fixed total energy.
//!
//! The scattered carrier coordinate `x₁` runs over the whole grid. The bound
//! coordinates (one for a single dot, two for a double dot) live on the dot
//! window with Dirichlet edges. Unknowns are stored slice by slice:
//! `psi[i * nt + j]` with `i` the `x₁` node and `j` the transverse index.
//!
//! Transmitting boundaries are imposed on the `x₁ = 0` and `x₁ = L` slices by
//! expanding the wavefunction one node outside the domain in lead channel
//! functions: each retained channel propagates (or decays) with its lattice
//! phase factor, the incident channel also carries the unit incoming wave,
//! and every other transverse component sees a hard wall.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, MatRef};

use crate::eigensolve::{window_operator_1d, BoundBasis};
use crate::error::{Error, Result};
use crate::linalg::{
    cdot, gmres, norm, symmetric_eigen, GmresOptions, LinearOperator, TridiagonalChains, C64, ZERO,
};
use crate::model::{Grid1D, Interaction, MaterialParams, PotentialProfile};

/// Default ceiling for [`assemble_hamiltonian_2p`] and friends (4 GiB).
pub const DEFAULT_MEMORY_CAP: u64 = 4 << 30;

/// Threshold guard: channel energies closer than this to `E` trigger a nudge.
pub const THRESHOLD_GUARD: f64 = 1e-9;
pub const THRESHOLD_NUDGE: f64 = 1e-6;

/// Vectors an iterative solve keeps alive per unknown (Krylov basis plus
/// work arrays); used for the memory estimate.
const WORKING_VECTORS: u64 = 40;

/// Real symmetric few-particle Hamiltonian, applied matrix-free.
#[derive(Debug, Clone)]
pub struct ProductHamiltonian {
    n_slices: usize,
    nw: usize,
    dims: usize,
    nt: usize,
    spacing: f64,
    hopping: f64,
    /// `2t + V(x₁)` per slice.
    x1_diag: Vec<f64>,
    /// Dot potential on the window.
    v_window: Vec<f64>,
    /// Bound–bound interaction per transverse node (three particles only).
    pair: Vec<f64>,
    transverse_diag: Vec<f64>,
    /// Carrier–bound interaction `[i * nt + j]`.
    coupling: Vec<f64>,
    coupled_slices: Vec<bool>,
}

fn estimate_bytes(unknowns: usize) -> u64 {
    unknowns as u64 * (8 + 16 * WORKING_VECTORS)
}

fn check_cap(unknowns: usize, cap: u64) -> Result<()> {
    let required = estimate_bytes(unknowns);
    if required > cap {
        return Err(Error::Resource {
            required_bytes: required,
            cap_bytes: cap,
        });
    }
    Ok(())
}

/// Two particles: carrier `x₁` on the full grid, one bound electron `x₂` on
/// the dot window.
pub fn assemble_hamiltonian_2p(
    potential: &PotentialProfile,
    grid: &Grid1D,
    material: &MaterialParams,
    interaction: &Interaction,
    memory_cap: u64,
) -> Result<ProductHamiltonian> {
    assemble(potential, grid, material, interaction, 1, memory_cap)
}

/// Three particles: carrier `x₁` on the full grid, two bound electrons
/// `(x₂, x₃)` on the window square.
pub fn assemble_hamiltonian_3p(
    potential: &PotentialProfile,
    grid: &Grid1D,
    material: &MaterialParams,
    interaction: &Interaction,
    memory_cap: u64,
) -> Result<ProductHamiltonian> {
    assemble(potential, grid, material, interaction, 2, memory_cap)
}

fn assemble(
    potential: &PotentialProfile,
    grid: &Grid1D,
    material: &MaterialParams,
    interaction: &Interaction,
    dims: usize,
    memory_cap: u64,
) -> Result<ProductHamiltonian> {
    potential.check_flat_leads(grid)?;
    let n_slices = grid.num_points();
    let nw = grid.dot_window().len();
    let nt = if dims == 1 { nw } else { nw * nw };
    check_cap(n_slices * nt, memory_cap)?;
    let h = grid.spacing();
    let t = material.hopping(h);
    let xs = grid.window_positions();
    let v_window = potential.window_samples(grid);
    let x1_diag: Vec<f64> = potential.samples().iter().map(|v| 2.0 * t + v).collect();
    let pair: Vec<f64> = if dims == 1 {
        Vec::new()
    } else {
        (0..nt)
            .map(|j| interaction.bound_bound(xs[j / nw], xs[j % nw]))
            .collect()
    };
    let transverse_diag: Vec<f64> = (0..nt)
        .map(|j| {
            if dims == 1 {
                2.0 * t + v_window[j]
            } else {
                4.0 * t + v_window[j / nw] + v_window[j % nw] + pair[j]
            }
        })
        .collect();
    let mut coupling = vec![0.0; n_slices * nt];
    let mut coupled_slices = vec![false; n_slices];
    let mut row = vec![0.0; nw];
    for i in 0..n_slices {
        let x1 = grid.x(i);
        for (r, xb) in row.iter_mut().zip(&xs) {
            *r = interaction.carrier_bound(x1, *xb);
        }
        if row.iter().all(|v| *v == 0.0) {
            continue;
        }
        coupled_slices[i] = true;
        let c = &mut coupling[i * nt..(i + 1) * nt];
        if dims == 1 {
            c.copy_from_slice(&row);
        } else {
            for (j, cj) in c.iter_mut().enumerate() {
                *cj = row[j / nw] + row[j % nw];
            }
        }
    }
    Ok(ProductHamiltonian {
        n_slices,
        nw,
        dims,
        nt,
        spacing: h,
        hopping: t,
        x1_diag,
        v_window,
        pair,
        transverse_diag,
        coupling,
        coupled_slices,
    })
}

impl ProductHamiltonian {
    pub fn dim(&self) -> usize {
        self.n_slices * self.nt
    }

    pub fn n_slices(&self) -> usize {
        self.n_slices
    }

    pub fn transverse_len(&self) -> usize {
        self.nt
    }

    pub fn window_len(&self) -> usize {
        self.nw
    }

    /// Number of bound coordinates (1 or 2).
    pub fn bound_dims(&self) -> usize {
        self.dims
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn hopping(&self) -> f64 {
        self.hopping
    }

    /// Quadrature weight of one transverse node.
    pub fn measure(&self) -> f64 {
        if self.dims == 1 {
            self.spacing
        } else {
            self.spacing * self.spacing
        }
    }

    /// Carrier–bound interaction on slice `i`.
    pub fn coupling(&self, i: usize) -> &[f64] {
        &self.coupling[i * self.nt..(i + 1) * self.nt]
    }

    /// Largest carrier–bound interaction on the two boundary slices.
    pub fn boundary_coupling(&self) -> f64 {
        let last = self.n_slices - 1;
        self.coupling(0)
            .iter()
            .chain(self.coupling(last))
            .fold(0.0, |m, v| m.max(libm::fabs(*v)))
    }

    /// `y = H x` (no boundary terms; nodes outside the grid are zero).
    pub fn apply_real(&self, x: &[f64], y: &mut [f64]) {
        self.apply_generic(x, y, 0.0);
    }

    /// `y = (H − E) x` for complex vectors.
    pub fn apply_shifted(&self, x: &[C64], y: &mut [C64], energy: f64) {
        self.apply_generic(x, y, energy);
    }

    fn apply_generic<T>(&self, x: &[T], y: &mut [T], shift: f64)
    where
        T: Copy
            + core::ops::Mul<f64, Output = T>
            + core::ops::Add<Output = T>
            + core::ops::Sub<Output = T>,
    {
        let (n1, nt, nw, t) = (self.n_slices, self.nt, self.nw, self.hopping);
        assert!(x.len() == n1 * nt && y.len() == n1 * nt);
        for i in 0..n1 {
            let xi = &x[i * nt..(i + 1) * nt];
            let yi = &mut y[i * nt..(i + 1) * nt];
            let base = self.x1_diag[i] - shift;
            let ci = &self.coupling[i * nt..(i + 1) * nt];
            for j in 0..nt {
                yi[j] = xi[j] * (base + self.transverse_diag[j] + ci[j]);
            }
            if i > 0 {
                let xp = &x[(i - 1) * nt..i * nt];
                for j in 0..nt {
                    yi[j] = yi[j] - xp[j] * t;
                }
            }
            if i + 1 < n1 {
                let xn = &x[(i + 1) * nt..(i + 2) * nt];
                for j in 0..nt {
                    yi[j] = yi[j] - xn[j] * t;
                }
            }
            if self.dims == 1 {
                for j in 0..nt {
                    if j > 0 {
                        yi[j] = yi[j] - xi[j - 1] * t;
                    }
                    if j + 1 < nt {
                        yi[j] = yi[j] - xi[j + 1] * t;
                    }
                }
            } else {
                for a in 0..nw {
                    for b in 0..nw {
                        let j = a * nw + b;
                        let mut acc = yi[j];
                        if b > 0 {
                            acc = acc - xi[j - 1] * t;
                        }
                        if b + 1 < nw {
                            acc = acc - xi[j + 1] * t;
                        }
                        if a > 0 {
                            acc = acc - xi[j - nw] * t;
                        }
                        if a + 1 < nw {
                            acc = acc - xi[j + nw] * t;
                        }
                        yi[j] = acc;
                    }
                }
            }
        }
    }

    /// Transverse operator (bound coordinates only) applied to a real vector.
    pub fn apply_transverse(&self, x: &[f64], y: &mut [f64]) {
        let (nt, nw, t) = (self.nt, self.nw, self.hopping);
        for j in 0..nt {
            let mut acc = self.transverse_diag[j] * x[j];
            if self.dims == 1 {
                if j > 0 {
                    acc -= t * x[j - 1];
                }
                if j + 1 < nt {
                    acc -= t * x[j + 1];
                }
            } else {
                let (a, b) = (j / nw, j % nw);
                if b > 0 {
                    acc -= t * x[j - 1];
                }
                if b + 1 < nw {
                    acc -= t * x[j + 1];
                }
                if a > 0 {
                    acc -= t * x[j - nw];
                }
                if a + 1 < nw {
                    acc -= t * x[j + nw];
                }
            }
            y[j] = acc;
        }
    }

    fn transverse_neighbors(&self, j: usize, out: &mut Vec<usize>) {
        out.clear();
        let (nt, nw) = (self.nt, self.nw);
        if self.dims == 1 {
            if j > 0 {
                out.push(j - 1);
            }
            if j + 1 < nt {
                out.push(j + 1);
            }
        } else {
            let (a, b) = (j / nw, j % nw);
            if b > 0 {
                out.push(j - 1);
            }
            if b + 1 < nw {
                out.push(j + 1);
            }
            if a > 0 {
                out.push(j - nw);
            }
            if a + 1 < nw {
                out.push(j + nw);
            }
        }
    }
}

/// Ordered orthonormal transverse functions used as lead channels.
///
/// The first `bound_count` entries are the bound levels of the dot; the rest
/// are higher eigenfunctions of the window operator, kept so closed channels
/// beyond the bound spectrum can be retained at the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadBasis {
    energies: Vec<f64>,
    states: Vec<Vec<f64>>,
    measure: f64,
    bound_count: usize,
    ionization: f64,
}

impl LeadBasis {
    pub fn from_bound(basis: &dyn BoundBasis) -> Self {
        Self {
            energies: basis.energies().to_vec(),
            states: (0..basis.count()).map(|n| basis.state(n).to_vec()).collect(),
            measure: basis.measure(),
            bound_count: basis.count(),
            ionization: basis.ionization_threshold(),
        }
    }

    /// Appends eigenfunctions above the bound levels. They are
    /// orthogonalized against the existing entries and renormalized.
    pub fn extended(mut self, energies: &[f64], states: &[Vec<f64>]) -> Self {
        let w = self.measure;
        let top = self.energies.last().copied().unwrap_or(f64::NEG_INFINITY);
        for (e, s) in energies.iter().zip(states) {
            if *e <= top + 1e-9 && self.energies.iter().any(|x| libm::fabs(x - e) < 1e-6) {
                continue;
            }
            let mut v = s.clone();
            for _ in 0..2 {
                for u in &self.states {
                    let o: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() * w;
                    v.iter_mut().zip(u).for_each(|(x, y)| *x -= o * y);
                }
            }
            let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>() * w);
            if n < 1e-6 {
                continue;
            }
            v.iter_mut().for_each(|x| *x /= n);
            self.energies.push(*e);
            self.states.push(v);
        }
        self
    }

    /// Lead basis of a single bound coordinate: every eigenfunction of the
    /// window operator, bound ones first.
    pub fn full_1d(
        basis: &dyn BoundBasis,
        potential: &PotentialProfile,
        grid: &Grid1D,
        material: &MaterialParams,
    ) -> Result<Self> {
        let op = window_operator_1d(potential, grid, material);
        let n = op.dim();
        let (vals, vecs) = symmetric_eigen(n, &op.to_dense())?;
        let scale = 1.0 / libm::sqrt(grid.spacing());
        let states: Vec<Vec<f64>> = (basis.count()..n)
            .map(|j| vecs[j * n..(j + 1) * n].iter().map(|x| x * scale).collect())
            .collect();
        Ok(Self::from_bound(basis).extended(&vals[basis.count()..], &states))
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn state(&self, n: usize) -> &[f64] {
        &self.states[n]
    }

    pub fn measure(&self) -> f64 {
        self.measure
    }

    pub fn bound_count(&self) -> usize {
        self.bound_count
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn ionization_threshold(&self) -> f64 {
        self.ionization
    }

    /// `⟨χ_n | v⟩` with the transverse quadrature weight.
    pub fn project(&self, n: usize, v: &[C64]) -> C64 {
        let s = &self.states[n];
        let acc = s.iter().zip(v).fold(ZERO, |acc, (a, b)| acc + b * *a);
        acc * self.measure
    }
}

/// One lead channel at fixed total energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadMode {
    /// Index into the lead basis.
    pub level: usize,
    pub bound_energy: f64,
    /// `E − bound_energy` (meV).
    pub kinetic: f64,
    pub open: bool,
    /// Lattice wavenumber `k` (open) or decay rate `κ` (closed), 1/nm.
    pub wavenumber: f64,
    /// Ratio of the channel amplitude between neighbouring nodes:
    /// `e^{ikh}` for open channels, `e^{−κh}` for closed ones.
    pub phase: C64,
}

impl LeadMode {
    pub fn new(level: usize, bound_energy: f64, energy: f64, spacing: f64, hopping: f64) -> Result<Self> {
        let kinetic = energy - bound_energy;
        let c = 1.0 - kinetic / (2.0 * hopping);
        if c < -1.0 {
            return Err(Error::Problem(format!(
                "channel {level} kinetic energy {kinetic} meV lies above the lattice band top {} meV",
                4.0 * hopping
            )));
        }
        if kinetic > 0.0 {
            let kh = libm::acos(c);
            Ok(Self {
                level,
                bound_energy,
                kinetic,
                open: true,
                wavenumber: kh / spacing,
                phase: C64::new(libm::cos(kh), libm::sin(kh)),
            })
        } else {
            let kh = libm::acosh(c);
            Ok(Self {
                level,
                bound_energy,
                kinetic,
                open: false,
                wavenumber: kh / spacing,
                phase: C64::new(libm::exp(-kh), 0.0),
            })
        }
    }

    /// Lattice group velocity `dT/dk = 2 t h sin(kh)` (meV·nm); zero when closed.
    pub fn group_velocity(&self, spacing: f64, hopping: f64) -> f64 {
        if self.open {
            2.0 * hopping * spacing * libm::sin(self.wavenumber * spacing)
        } else {
            0.0
        }
    }
}

/// Open channels plus the first `num_evanescent` closed ones, in lead-basis
/// order.
pub fn lead_modes(
    energies: &[f64],
    total_energy: f64,
    grid: &Grid1D,
    material: &MaterialParams,
    num_evanescent: usize,
) -> Result<Vec<LeadMode>> {
    lead_modes_raw(
        energies,
        total_energy,
        grid.spacing(),
        material.hopping(grid.spacing()),
        num_evanescent,
    )
}

pub(crate) fn lead_modes_raw(
    energies: &[f64],
    total_energy: f64,
    spacing: f64,
    hopping: f64,
    num_evanescent: usize,
) -> Result<Vec<LeadMode>> {
    let mut out = Vec::new();
    let mut closed = 0;
    for (n, e) in energies.iter().enumerate() {
        let m = LeadMode::new(n, *e, total_energy, spacing, hopping)?;
        if m.open {
            out.push(m);
        } else if closed < num_evanescent {
            closed += 1;
            out.push(m);
        }
    }
    Ok(out)
}

/// Linear solver used by [`qtbm_solve`].
#[derive(Debug, Clone, Copy)]
pub enum SolverKind<'a> {
    /// Sparse LU of the assembled complex matrix.
    Direct,
    /// Right-preconditioned GMRES with a two-level preconditioner.
    Iterative {
        options: GmresOptions,
        coarse: &'a CoarseSpace,
    },
}

/// A fixed-energy scattering problem.
#[derive(Clone, Copy)]
pub struct ScatteringProblem<'a> {
    pub hamiltonian: &'a ProductHamiltonian,
    pub lead: &'a LeadBasis,
    pub incident_channel: usize,
    /// Incident kinetic energy `T₀` (meV).
    pub incident_kinetic: f64,
    pub num_evanescent: usize,
    pub solver: SolverKind<'a>,
    /// Largest tolerated lead component outside the retained channels.
    pub projection_tolerance: f64,
}

impl<'a> ScatteringProblem<'a> {
    pub fn new(hamiltonian: &'a ProductHamiltonian, lead: &'a LeadBasis, incident_kinetic: f64) -> Self {
        Self {
            hamiltonian,
            lead,
            incident_channel: 0,
            incident_kinetic,
            num_evanescent: 6,
            solver: SolverKind::Direct,
            projection_tolerance: 1e-6,
        }
    }

    pub fn total_energy(&self) -> f64 {
        self.lead.energies()[self.incident_channel] + self.incident_kinetic
    }
}

#[derive(Debug, Clone)]
pub struct ScatteringSolution {
    pub psi: Vec<C64>,
    pub n_slices: usize,
    pub transverse_len: usize,
    pub spacing: f64,
    pub hopping: f64,
    pub total_energy: f64,
    /// `T₀` actually used (after any threshold nudge).
    pub incident_kinetic: f64,
    pub incident_channel: usize,
    pub modes: Vec<LeadMode>,
    /// ‖A ψ − b‖ / ‖b‖ evaluated with the matrix-free operator.
    pub solver_residual: f64,
    /// Largest boundary-slice component outside the retained channels.
    pub projection_residual: f64,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl ScatteringSolution {
    pub fn slice(&self, i: usize) -> &[C64] {
        &self.psi[i * self.transverse_len..(i + 1) * self.transverse_len]
    }

    pub fn mode(&self, level: usize) -> Option<&LeadMode> {
        self.modes.iter().find(|m| m.level == level)
    }
}

/// `(H − E)` plus the retained-channel boundary terms.
struct QtbmOperator<'a> {
    ham: &'a ProductHamiltonian,
    lead: &'a LeadBasis,
    modes: &'a [LeadMode],
    energy: f64,
}

impl LinearOperator for QtbmOperator<'_> {
    fn dim(&self) -> usize {
        self.ham.dim()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.ham.apply_shifted(x, y, self.energy);
        let (nt, t) = (self.ham.nt, self.ham.hopping);
        for s in [0, self.ham.n_slices - 1] {
            let xs = &x[s * nt..(s + 1) * nt];
            let mut corr = vec![ZERO; nt];
            for m in self.modes {
                let u = self.lead.project(m.level, xs) * m.phase * t;
                for (c, chi) in corr.iter_mut().zip(self.lead.state(m.level)) {
                    *c += u * *chi;
                }
            }
            for (yv, c) in y[s * nt..(s + 1) * nt].iter_mut().zip(&corr) {
                *yv -= c;
            }
        }
    }
}

/// Solves the scattering problem.
pub fn qtbm_solve(problem: &ScatteringProblem<'_>) -> Result<ScatteringSolution> {
    let ham = problem.hamiltonian;
    let lead = problem.lead;
    let mut warnings = Vec::new();
    if problem.incident_channel >= lead.bound_count() {
        return Err(Error::Problem(format!(
            "incident channel {} but only {} bound levels",
            problem.incident_channel,
            lead.bound_count()
        )));
    }
    if lead.measure() != ham.measure() || lead.state(0).len() != ham.nt {
        return Err(Error::Problem("lead basis does not match the Hamiltonian grid".into()));
    }
    if !(problem.incident_kinetic > 0.0) {
        return Err(Error::Problem(format!(
            "incident kinetic energy must be positive, got {}",
            problem.incident_kinetic
        )));
    }
    let mut t0 = problem.incident_kinetic;
    let e_inc = lead.energies()[problem.incident_channel];
    if lead
        .energies()
        .iter()
        .any(|e| libm::fabs(e_inc + t0 - e) <= THRESHOLD_GUARD)
    {
        t0 += THRESHOLD_NUDGE;
        warnings.push(format!(
            "total energy sits on a channel threshold; T0 nudged to {t0:.9} meV"
        ));
    }
    let energy = e_inc + t0;
    if energy >= lead.ionization_threshold() {
        return Err(Error::Problem(format!(
            "total energy {energy} meV reaches the ionization threshold {} meV",
            lead.ionization_threshold()
        )));
    }
    let modes = lead_modes_raw(lead.energies(), energy, ham.spacing, ham.hopping, problem.num_evanescent)?;
    let inc = modes
        .iter()
        .find(|m| m.level == problem.incident_channel)
        .copied()
        .ok_or_else(|| Error::Problem("incident channel is closed".into()))?;

    let (n1, nt, t) = (ham.n_slices, ham.nt, ham.hopping);
    let mut rhs = vec![ZERO; n1 * nt];
    let drive = (C64::new(1.0, 0.0) / inc.phase - inc.phase) * t;
    for (r, chi) in rhs[..nt].iter_mut().zip(lead.state(inc.level)) {
        *r = drive * *chi;
    }

    let op = QtbmOperator {
        ham,
        lead,
        modes: &modes,
        energy,
    };
    let (psi, iterations) = match problem.solver {
        SolverKind::Direct => (direct_solve(ham, lead, &modes, energy, &rhs)?, 0),
        SolverKind::Iterative { options, coarse } => {
            let pre = coarse.factor(ham, lead, &modes, energy)?;
            let mut x = vec![ZERO; n1 * nt];
            let out = gmres(&op, &pre, &rhs, &mut x, &options)?;
            (x, out.iterations)
        }
    };

    let mut ax = vec![ZERO; n1 * nt];
    op.apply(&psi, &mut ax);
    let resid: Vec<C64> = ax.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    let solver_residual = norm(&resid) / norm(&rhs);
    let tolerance = match problem.solver {
        SolverKind::Direct => 1e-8,
        SolverKind::Iterative { options, .. } => options.tolerance.max(1e-8),
    };
    if !(solver_residual < tolerance) {
        return Err(Error::LinearSolver {
            iterations,
            residual: solver_residual,
        });
    }

    let mut projection_residual: f64 = 0.0;
    let w = lead.measure();
    for s in [0, n1 - 1] {
        let slice = &psi[s * nt..(s + 1) * nt];
        let mut rest = slice.to_vec();
        for m in &modes {
            let u = lead.project(m.level, slice);
            for (r, chi) in rest.iter_mut().zip(lead.state(m.level)) {
                *r -= u * *chi;
            }
        }
        projection_residual = projection_residual.max(libm::sqrt(cdot(&rest, &rest).re * w));
    }
    if projection_residual > problem.projection_tolerance {
        return Err(Error::InsufficientBasis {
            residual: projection_residual,
            tolerance: problem.projection_tolerance,
        });
    }

    Ok(ScatteringSolution {
        psi,
        n_slices: n1,
        transverse_len: nt,
        spacing: ham.spacing,
        hopping: t,
        total_energy: energy,
        incident_kinetic: t0,
        incident_channel: problem.incident_channel,
        modes,
        solver_residual,
        projection_residual,
        iterations,
        warnings,
    })
}

/// Largest `|(H − E) ψ|` over interior slices, relative to `max |ψ|`.
pub fn interior_residual(ham: &ProductHamiltonian, solution: &ScatteringSolution) -> f64 {
    let (n1, nt) = (ham.n_slices, ham.nt);
    let mut y = vec![ZERO; n1 * nt];
    ham.apply_shifted(&solution.psi, &mut y, solution.total_energy);
    let scale = solution.psi.iter().fold(0.0, |m: f64, z| m.max(z.norm()));
    y[nt..(n1 - 1) * nt].iter().fold(0.0, |m: f64, z| m.max(z.norm())) / scale
}

fn direct_solve(
    ham: &ProductHamiltonian,
    lead: &LeadBasis,
    modes: &[LeadMode],
    energy: f64,
    rhs: &[C64],
) -> Result<Vec<C64>> {
    let (n1, nt, t) = (ham.n_slices, ham.nt, ham.hopping);
    let n = n1 * nt;
    // dense boundary blocks plus a banded factor of width nt
    let required = (n as u64) * (nt as u64) * 16 + 2 * (nt * nt) as u64 * 16;
    if required > DEFAULT_MEMORY_CAP {
        return Err(Error::Resource {
            required_bytes: required,
            cap_bytes: DEFAULT_MEMORY_CAP,
        });
    }
    let mut trip: Vec<Triplet<usize, usize, C64>> = Vec::with_capacity(n * 7 + 2 * nt * nt);
    let mut nb = Vec::with_capacity(4);
    let neg_t = C64::new(-t, 0.0);
    for i in 0..n1 {
        let ci = ham.coupling(i);
        for j in 0..nt {
            let k = i * nt + j;
            trip.push(Triplet::new(
                k,
                k,
                C64::new(ham.x1_diag[i] + ham.transverse_diag[j] + ci[j] - energy, 0.0),
            ));
            if i > 0 {
                trip.push(Triplet::new(k, k - nt, neg_t));
            }
            if i + 1 < n1 {
                trip.push(Triplet::new(k, k + nt, neg_t));
            }
            ham.transverse_neighbors(j, &mut nb);
            for &q in &nb {
                trip.push(Triplet::new(k, i * nt + q, neg_t));
            }
        }
    }
    let w = lead.measure();
    let mut block = vec![ZERO; nt * nt];
    for m in modes {
        let chi = lead.state(m.level);
        let f = m.phase * (-t * w);
        for a in 0..nt {
            if chi[a] == 0.0 {
                continue;
            }
            let fa = f * chi[a];
            for b in 0..nt {
                block[a * nt + b] += fa * chi[b];
            }
        }
    }
    for s in [0, n1 - 1] {
        for a in 0..nt {
            for b in 0..nt {
                let v = block[a * nt + b];
                if v != ZERO {
                    trip.push(Triplet::new(s * nt + a, s * nt + b, v));
                }
            }
        }
    }
    let a = SparseColMat::<usize, C64>::try_new_from_triplets(n, n, &trip)
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
    drop(trip);
    let lu = a
        .sp_lu()
        .map_err(|e| Error::Factorization(format!("sparse LU: {e:?}")))?;
    let mut b = Mat::<C64>::from_fn(n, 1, |i, _| rhs[i]);
    lu.solve_in_place(b.as_mut());
    Ok((0..n).map(|i| b[(i, 0)]).collect())
}

/// Geometry-dependent part of the two-level preconditioner.
///
/// The coarse level is spanned by the lowest eigenfunctions of the
/// transverse operator; there the carrier–bound coupling is kept exactly and
/// the block-tridiagonal system in `x₁` is factored. The complement is
/// treated in the separable eigenbasis of the one-dimensional window
/// operator, with the coupling replaced by its mean over the lowest mode.
#[derive(Debug, Clone)]
pub struct CoarseSpace {
    nm: usize,
    nt: usize,
    /// Euclidean-orthonormal coarse vectors, column-major `nt × nm`.
    u: Vec<f64>,
    /// `Uᵀ H_T U`.
    ht: Vec<f64>,
    /// `Uᵀ diag(coupling_i) U` per coupled slice.
    cm: Vec<Option<Vec<f64>>>,
    u1: Vec<f64>,
    e1: Vec<f64>,
    pair_mean: f64,
    mean_field: Vec<f64>,
}

impl CoarseSpace {
    /// `modes` are transverse functions in any normalization; they are
    /// orthonormalized here. The first one sets the mean-field coupling.
    pub fn new(ham: &ProductHamiltonian, modes: &[Vec<f64>]) -> Result<Self> {
        let nt = ham.nt;
        let nw = ham.nw;
        let mut u: Vec<f64> = Vec::with_capacity(nt * modes.len());
        let mut nm = 0;
        for m in modes {
            let mut v = m.clone();
            for _ in 0..2 {
                for k in 0..nm {
                    let col = &u[k * nt..(k + 1) * nt];
                    let o: f64 = col.iter().zip(&v).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(col).for_each(|(x, y)| *x -= o * y);
                }
            }
            let n = libm::sqrt(v.iter().map(|x| x * x).sum());
            if n < 1e-8 {
                continue;
            }
            u.extend(v.iter().map(|x| x / n));
            nm += 1;
        }
        if nm == 0 {
            return Err(Error::Problem("coarse space needs at least one mode".into()));
        }
        let mut hu = vec![0.0; nt * nm];
        for k in 0..nm {
            ham.apply_transverse(&u[k * nt..(k + 1) * nt], &mut hu[k * nt..(k + 1) * nt]);
        }
        let mut ht = crate::linalg::gram(nt, &u, nm, &hu, nm);
        for i in 0..nm {
            for j in 0..i {
                let s = 0.5 * (ht[j * nm + i] + ht[i * nm + j]);
                ht[j * nm + i] = s;
                ht[i * nm + j] = s;
            }
        }
        let g0 = &u[..nt];
        let mut cm = Vec::with_capacity(ham.n_slices);
        let mut mean_field = vec![0.0; ham.n_slices];
        let mut scaled = vec![0.0; nt * nm];
        for i in 0..ham.n_slices {
            if !ham.coupled_slices[i] {
                cm.push(None);
                continue;
            }
            let c = ham.coupling(i);
            mean_field[i] = c.iter().zip(g0).map(|(a, b)| a * b * b).sum();
            for k in 0..nm {
                for j in 0..nt {
                    scaled[k * nt + j] = c[j] * u[k * nt + j];
                }
            }
            cm.push(Some(crate::linalg::gram(nt, &u, nm, &scaled, nm)));
        }
        let pair_mean = if ham.pair.is_empty() {
            0.0
        } else {
            ham.pair.iter().zip(g0).map(|(a, b)| a * b * b).sum()
        };
        let t = ham.hopping;
        let mut dense = vec![0.0; nw * nw];
        for a in 0..nw {
            dense[a * nw + a] = 2.0 * t + ham.v_window[a];
            if a + 1 < nw {
                dense[a * nw + a + 1] = -t;
                dense[(a + 1) * nw + a] = -t;
            }
        }
        let (e1, u1) = symmetric_eigen(nw, &dense)?;
        Ok(Self {
            nm,
            nt,
            u,
            ht,
            cm,
            u1,
            e1,
            pair_mean,
            mean_field,
        })
    }

    pub fn len(&self) -> usize {
        self.nm
    }

    pub fn is_empty(&self) -> bool {
        self.nm == 0
    }

    fn factor<'a>(
        &'a self,
        ham: &'a ProductHamiltonian,
        lead: &LeadBasis,
        modes: &[LeadMode],
        energy: f64,
    ) -> Result<TwoLevel<'a>> {
        let (nm, nt, n1, t) = (self.nm, self.nt, ham.n_slices, ham.hopping);
        // boundary block in the coarse space: −t Σ p_m B_m B_mᵀ, B_m = Uᵀ χ̂_m
        let mut bblock = vec![ZERO; nm * nm];
        let sw = libm::sqrt(lead.measure());
        for m in modes {
            let chi: Vec<f64> = lead.state(m.level).iter().map(|x| x * sw).collect();
            let bm: Vec<f64> = (0..nm)
                .map(|k| self.u[k * nt..(k + 1) * nt].iter().zip(&chi).map(|(a, b)| a * b).sum())
                .collect();
            for a in 0..nm {
                for b in 0..nm {
                    bblock[b * nm + a] -= m.phase * (t * bm[a] * bm[b]);
                }
            }
        }
        let mut sinv: Vec<Vec<C64>> = Vec::with_capacity(n1);
        for i in 0..n1 {
            let mut d = Mat::<C64>::from_fn(nm, nm, |a, b| {
                let mut v = self.ht[b * nm + a];
                if let Some(c) = &self.cm[i] {
                    v += c[b * nm + a];
                }
                if a == b {
                    v += ham.x1_diag[i] - energy;
                }
                C64::new(v, 0.0)
            });
            if i == 0 || i == n1 - 1 {
                for a in 0..nm {
                    for b in 0..nm {
                        d[(a, b)] += bblock[b * nm + a];
                    }
                }
            }
            if i > 0 {
                let prev = &sinv[i - 1];
                for a in 0..nm {
                    for b in 0..nm {
                        d[(a, b)] -= prev[b * nm + a] * (t * t);
                    }
                }
            }
            let inv = d.partial_piv_lu().inverse();
            let mut flat = vec![ZERO; nm * nm];
            for b in 0..nm {
                for a in 0..nm {
                    flat[b * nm + a] = inv[(a, b)];
                }
            }
            sinv.push(flat);
        }

        let nw = ham.nw;
        let sep_energy: Vec<f64> = if ham.dims == 1 {
            self.e1.clone()
        } else {
            (0..nt)
                .map(|j| self.e1[j / nw] + self.e1[j % nw] + self.pair_mean)
                .collect()
        };
        let mut diag = vec![ZERO; n1 * nt];
        for i in 0..n1 {
            let base = ham.x1_diag[i] + self.mean_field[i] - energy;
            for j in 0..nt {
                diag[i * nt + j] = C64::new(base + sep_energy[j], 0.0);
            }
        }
        for (j, e) in sep_energy.iter().enumerate() {
            let p = LeadMode::new(0, *e, energy, ham.spacing, t)
                .map(|m| m.phase)
                .unwrap_or(ZERO);
            diag[j] -= p * t;
            diag[(n1 - 1) * nt + j] -= p * t;
        }
        let chains = TridiagonalChains::factor(n1, nt, t, &diag);
        Ok(TwoLevel {
            cs: self,
            n1,
            nw,
            dims: ham.dims,
            hopping: t,
            sinv,
            chains,
        })
    }
}

struct TwoLevel<'a> {
    cs: &'a CoarseSpace,
    n1: usize,
    nw: usize,
    dims: usize,
    hopping: f64,
    sinv: Vec<Vec<C64>>,
    chains: TridiagonalChains,
}

fn split(x: &[C64]) -> (Vec<f64>, Vec<f64>) {
    (x.iter().map(|z| z.re).collect(), x.iter().map(|z| z.im).collect())
}

impl TwoLevel<'_> {
    /// Coarse coefficients `Uᵀ r_i` per slice (`nm × n1`, column-major).
    fn restrict(&self, plane: &[f64]) -> Vec<f64> {
        let (nt, nm, n1) = (self.cs.nt, self.cs.nm, self.n1);
        let u = MatRef::from_column_major_slice(&self.cs.u, nt, nm);
        let r = MatRef::from_column_major_slice(plane, nt, n1);
        let c: Mat<f64> = u.transpose() * r;
        let mut out = vec![0.0; nm * n1];
        for i in 0..n1 {
            for k in 0..nm {
                out[i * nm + k] = c[(k, i)];
            }
        }
        out
    }

    fn prolong(&self, coarse: &[f64]) -> Mat<f64> {
        let (nt, nm, n1) = (self.cs.nt, self.cs.nm, self.n1);
        let u = MatRef::from_column_major_slice(&self.cs.u, nt, nm);
        let c = MatRef::from_column_major_slice(coarse, nm, n1);
        u * c
    }

    /// Separable transform of one real plane; `inverse` maps back.
    fn transform(&self, plane: &mut [f64], inverse: bool) {
        let (nw, n1) = (self.nw, self.n1);
        let u1 = MatRef::from_column_major_slice(&self.cs.u1, nw, nw);
        let first = if inverse { u1 * MatRef::from_column_major_slice(plane, nw, plane.len() / nw) } else {
            u1.transpose() * MatRef::from_column_major_slice(plane, nw, plane.len() / nw)
        };
        if self.dims == 1 {
            for c in 0..first.ncols() {
                for r in 0..nw {
                    plane[c * nw + r] = first[(r, c)];
                }
            }
            return;
        }
        let nt = nw * nw;
        for i in 0..n1 {
            let zi = first.as_ref().subcols(i * nw, nw);
            let yi: Mat<f64> = if inverse { zi * u1.transpose() } else { zi * u1 };
            for a in 0..nw {
                for b in 0..nw {
                    plane[i * nt + a * nw + b] = yi[(b, a)];
                }
            }
        }
    }

    fn coarse_solve(&self, rl: &mut [C64]) {
        let (nm, n1, t) = (self.cs.nm, self.n1, self.hopping);
        let matvec = |m: &[C64], v: &[C64], out: &mut [C64]| {
            out.iter_mut().for_each(|x| *x = ZERO);
            for b in 0..nm {
                let vb = v[b];
                let col = &m[b * nm..(b + 1) * nm];
                for a in 0..nm {
                    out[a] += col[a] * vb;
                }
            }
        };
        let mut tmp = vec![ZERO; nm];
        for i in 1..n1 {
            let (prev, cur) = rl.split_at_mut(i * nm);
            matvec(&self.sinv[i - 1], &prev[(i - 1) * nm..], &mut tmp);
            for (c, v) in cur[..nm].iter_mut().zip(&tmp) {
                *c += v * t;
            }
        }
        let last = (n1 - 1) * nm;
        matvec(&self.sinv[n1 - 1], &rl[last..last + nm].to_vec(), &mut tmp);
        rl[last..last + nm].copy_from_slice(&tmp);
        for i in (0..n1 - 1).rev() {
            let (cur, next) = rl.split_at_mut((i + 1) * nm);
            let y: Vec<C64> = cur[i * nm..].iter().zip(&next[..nm]).map(|(a, b)| a + b * t).collect();
            matvec(&self.sinv[i], &y, &mut tmp);
            cur[i * nm..].copy_from_slice(&tmp);
        }
    }
}

impl LinearOperator for TwoLevel<'_> {
    fn dim(&self) -> usize {
        self.n1 * self.cs.nt
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let (nt, nm, n1) = (self.cs.nt, self.cs.nm, self.n1);
        let (re, im) = split(x);
        let (cre, cim) = (self.restrict(&re), self.restrict(&im));
        let (pre, pim) = (self.prolong(&cre), self.prolong(&cim));
        let mut hre = re;
        let mut him = im;
        for i in 0..n1 {
            for j in 0..nt {
                hre[i * nt + j] -= pre[(j, i)];
                him[i * nt + j] -= pim[(j, i)];
            }
        }
        self.transform(&mut hre, false);
        self.transform(&mut him, false);
        let mut high: Vec<C64> = hre.iter().zip(&him).map(|(a, b)| C64::new(*a, *b)).collect();
        self.chains.solve_in_place(&mut high);
        let (mut zre, mut zim) = split(&high);
        self.transform(&mut zre, true);
        self.transform(&mut zim, true);
        // keep the complement orthogonal to the coarse space
        let (qre, qim) = (self.restrict(&zre), self.restrict(&zim));
        let (qre, qim) = (self.prolong(&qre), self.prolong(&qim));

        let mut coarse: Vec<C64> = cre.iter().zip(&cim).map(|(a, b)| C64::new(*a, *b)).collect();
        self.coarse_solve(&mut coarse);
        let (lre, lim) = split(&coarse);
        let (lre, lim) = (self.prolong(&lre), self.prolong(&lim));
        for i in 0..n1 {
            for j in 0..nt {
                let k = i * nt + j;
                y[k] = C64::new(
                    zre[k] - qre[(j, i)] + lre[(j, i)],
                    zim[k] - qim[(j, i)] + lim[(j, i)],
                );
            }
        }
        let _ = nm;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolve::{solve_bound_states_1d, EigenOptions};
    use crate::model::{build_potential, DotKind};

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
    }

    fn small() -> (PotentialProfile, Grid1D, MaterialParams) {
        let grid = Grid1D::new(240.0, 2.0).unwrap().with_dot_window(60.0, 180.0).unwrap();
        let pot = build_potential(DotKind::SingleDot, &grid, 110.0, 20.0, 0.0).unwrap();
        (pot, grid, MaterialParams::gaas())
    }

    #[test]
    fn hamiltonians_are_symmetric() {
        let (pot, grid, mat) = small();
        let inter = Interaction::bare(&mat);
        for ham in [
            assemble_hamiltonian_2p(&pot, &grid, &mat, &inter, DEFAULT_MEMORY_CAP).unwrap(),
            assemble_hamiltonian_3p(&pot, &grid, &mat, &inter, DEFAULT_MEMORY_CAP).unwrap(),
        ] {
            let n = ham.dim();
            let mut s = 1;
            let u: Vec<f64> = (0..n).map(|_| lcg(&mut s)).collect();
            let v: Vec<f64> = (0..n).map(|_| lcg(&mut s)).collect();
            let (mut hu, mut hv) = (vec![0.0; n], vec![0.0; n]);
            ham.apply_real(&u, &mut hu);
            ham.apply_real(&v, &mut hv);
            let a: f64 = u.iter().zip(&hv).map(|(x, y)| x * y).sum();
            let b: f64 = hu.iter().zip(&v).map(|(x, y)| x * y).sum();
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn memory_cap_is_enforced() {
        let (pot, grid, mat) = small();
        let err = assemble_hamiltonian_3p(&pot, &grid, &mat, &Interaction::bare(&mat), 1 << 20);
        assert!(matches!(err, Err(Error::Resource { required_bytes, cap_bytes: 1_048_576 }) if required_bytes > 1 << 20));
    }

    #[test]
    fn lattice_dispersion() {
        let m = LeadMode::new(0, -10.0, -10.0 + 1e-8, 1.0, 500.0).unwrap();
        assert!(m.open && m.wavenumber < 1e-5);
        let (kin, t_n) = (568.654, 20.0);
        let mut prev = f64::INFINITY;
        for h in [1.0, 0.5, 0.25, 0.125] {
            let m = LeadMode::new(0, 0.0, t_n, h, kin / (h * h)).unwrap();
            let err = (m.wavenumber - libm::sqrt(t_n / kin)).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-5);
        let c = LeadMode::new(0, 0.0, -5.0, 1.0, 500.0).unwrap();
        assert!(!c.open);
        assert!((libm::cosh(c.wavenumber) - (1.0 + 5.0 / 1000.0)).abs() < 1e-12);
        assert!(LeadMode::new(0, 0.0, 2500.0, 1.0, 500.0).is_err());
    }

    #[test]
    fn retains_open_then_closed() {
        let (pot, grid, mat) = small();
        let set = solve_bound_states_1d(&pot, &grid, &mat, &EigenOptions { max_levels: 2, ..EigenOptions::default() }).unwrap();
        let e = set.energies();
        let modes = lead_modes(e, e[0] + 0.5 * (e[1] - e[0]), &grid, &mat, 1).unwrap();
        assert_eq!(modes.len(), 2);
        assert!(modes[0].open && !modes[1].open);
    }

    #[test]
    fn direct_and_iterative_agree() {
        let (pot, grid, mat) = small();
        let inter = Interaction::bare(&mat);
        let set = solve_bound_states_1d(&pot, &grid, &mat, &EigenOptions { max_levels: 2, ..EigenOptions::default() }).unwrap();
        let lead = LeadBasis::full_1d(&set, &pot, &grid, &mat).unwrap();
        let ham = assemble_hamiltonian_2p(&pot, &grid, &mat, &inter, DEFAULT_MEMORY_CAP).unwrap();
        let mut p = ScatteringProblem::new(&ham, &lead, 25.0);
        p.projection_tolerance = 1.0;
        let a = qtbm_solve(&p).unwrap();
        let modes: Vec<Vec<f64>> = (0..lead.len().min(12)).map(|n| lead.state(n).to_vec()).collect();
        let coarse = CoarseSpace::new(&ham, &modes).unwrap();
        p.solver = SolverKind::Iterative {
            options: GmresOptions::default(),
            coarse: &coarse,
        };
        let b = qtbm_solve(&p).unwrap();
        let diff: f64 = a.psi.iter().zip(&b.psi).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-7, "max difference {diff}");
        assert!(a.solver_residual < 1e-10 && b.solver_residual < 1e-8);
    }

    fn full_grid_ground(pot: &PotentialProfile, t: f64) -> (f64, Vec<f64>) {
        let v = pot.samples();
        let n = v.len();
        let mut dense = vec![0.0; n * n];
        for i in 0..n {
            dense[i * n + i] = 2.0 * t + v[i];
            if i + 1 < n {
                dense[i * n + i + 1] = -t;
                dense[(i + 1) * n + i] = -t;
            }
        }
        let (vals, vecs) = symmetric_eigen(n, &dense).unwrap();
        (vals[0], vecs[..n].to_vec())
    }

    #[test]
    fn coulomb_off_is_kronecker_sum() {
        let (pot, grid, mat) = small();
        let ham = assemble_hamiltonian_2p(&pot, &grid, &mat, &Interaction::off(&mat), DEFAULT_MEMORY_CAP).unwrap();
        let (n1, nw, t) = (ham.n_slices(), ham.window_len(), ham.hopping());
        let mut s = 7;
        let u: Vec<f64> = (0..n1).map(|_| lcg(&mut s)).collect();
        let w: Vec<f64> = (0..nw).map(|_| lcg(&mut s)).collect();
        let x: Vec<f64> = (0..n1 * nw).map(|k| u[k / nw] * w[k % nw]).collect();
        let mut y = vec![0.0; n1 * nw];
        ham.apply_real(&x, &mut y);
        let tri = |v: &[f64], pot: &[f64], k: usize| {
            let mut a = (2.0 * t + pot[k]) * v[k];
            if k > 0 {
                a -= t * v[k - 1];
            }
            if k + 1 < v.len() {
                a -= t * v[k + 1];
            }
            a
        };
        let vw = pot.window_samples(&grid);
        for k in 0..n1 * nw {
            let (i, j) = (k / nw, k % nw);
            let expect = tri(&u, pot.samples(), i) * w[j] + u[i] * tri(&w, &vw, j);
            assert!((y[k] - expect).abs() < 1e-9, "{} vs {}", y[k], expect);
        }
    }

    #[test]
    fn product_of_ground_states_is_eigenvector() {
        let (pot, grid, mat) = small();
        let ham = assemble_hamiltonian_2p(&pot, &grid, &mat, &Interaction::off(&mat), DEFAULT_MEMORY_CAP).unwrap();
        let opts = EigenOptions { max_levels: 1, ..EigenOptions::default() };
        let set = solve_bound_states_1d(&pot, &grid, &mat, &opts).unwrap();
        let (e_full, phi) = full_grid_ground(&pot, ham.hopping());
        let e0 = set.energies()[0];
        assert!((e_full - e0).abs() < 1e-8);
        let g = set.state(0);
        let nw = ham.window_len();
        let x: Vec<f64> = (0..ham.dim()).map(|k| phi[k / nw] * g[k % nw]).collect();
        let mut y = vec![0.0; ham.dim()];
        ham.apply_real(&x, &mut y);
        let r = y.iter().zip(&x).map(|(a, b)| (a - 2.0 * e0 * b).powi(2)).sum::<f64>().sqrt();
        let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(r / nx < 1e-8, "residual {}", r / nx);
    }

    #[test]
    fn lead_plane_wave_on_two_particle_ground_state() {
        use crate::eigensolve::solve_bound_states_2p;
        use crate::model::LeadScreening;
        let grid = Grid1D::new(600.0, 4.0).unwrap().with_dot_window(240.0, 360.0).unwrap();
        let pot = build_potential(DotKind::DoubleDot, &grid, 110.0, 30.0, 20.0).unwrap();
        let mat = MaterialParams::gaas();
        let inter = Interaction::screened(&mat, LeadScreening { center: 300.0, plateau_radius: 150.0, ramp: 90.0 });
        let opts = EigenOptions { max_levels: 2, decay_tolerance: 1e-2, ..EigenOptions::default() };
        let set = solve_bound_states_2p(&pot, &grid, &mat, &inter, &opts).unwrap();
        let ham = assemble_hamiltonian_3p(&pot, &grid, &mat, &inter, DEFAULT_MEMORY_CAP).unwrap();
        let nt = ham.transverse_len();
        let gamma = set.state(0);
        let mode = LeadMode::new(0, set.energies()[0], set.energies()[0] + 10.0, 4.0, ham.hopping()).unwrap();
        let x: Vec<C64> = (0..ham.dim()).map(|k| mode.phase.powi((k / nt) as i32) * gamma[k % nt]).collect();
        let mut y = vec![ZERO; ham.dim()];
        ham.apply_shifted(&x, &mut y, set.energies()[0] + 10.0);
        // slices 1..=10 sit in the free part of the left lead
        let r = y[nt..11 * nt].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let nx = x[nt..11 * nt].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(r / nx < 1e-7, "residual {}", r / nx);
    }

    #[test]
    fn free_carrier_is_fully_transmitted() {
        let (pot, grid, mat) = small();
        let opts = EigenOptions { max_levels: 2, ..EigenOptions::default() };
        let set = solve_bound_states_1d(&pot, &grid, &mat, &opts).unwrap();
        let lead = LeadBasis::full_1d(&set, &pot, &grid, &mat).unwrap();
        let mut ham = assemble_hamiltonian_2p(&pot, &grid, &mat, &Interaction::off(&mat), DEFAULT_MEMORY_CAP).unwrap();
        let t = ham.hopping();
        ham.x1_diag.iter_mut().for_each(|d| *d = 2.0 * t);
        let sol = qtbm_solve(&ScatteringProblem::new(&ham, &lead, 20.0)).unwrap();
        let a = crate::channels::extract_amplitudes(&sol, &lead).unwrap();
        assert!((a.c[0] - C64::new(1.0, 0.0)).norm() < 1e-10, "{}", a.c[0]);
        assert!(a.b[0].norm() < 1e-10 && a.c[1].norm() < 1e-10 && a.b[1].norm() < 1e-10);
        assert!(interior_residual(&ham, &sol) < 1e-10);
    }

    #[test]
    fn threshold_energy_is_nudged() {
        let (pot, grid, mat) = small();
        let opts = EigenOptions { max_levels: 2, ..EigenOptions::default() };
        let set = solve_bound_states_1d(&pot, &grid, &mat, &opts).unwrap();
        let lead = LeadBasis::full_1d(&set, &pot, &grid, &mat).unwrap();
        let ham = assemble_hamiltonian_2p(&pot, &grid, &mat, &Interaction::off(&mat), DEFAULT_MEMORY_CAP).unwrap();
        let gap = set.energies()[1] - set.energies()[0];
        let sol = qtbm_solve(&ScatteringProblem::new(&ham, &lead, gap)).unwrap();
        assert_eq!(sol.warnings.len(), 1);
        assert!((sol.incident_kinetic - gap - THRESHOLD_NUDGE).abs() < 1e-12);
        assert!(sol.modes.iter().filter(|m| m.open).count() == 2);
    }

    #[test]
    fn unscreened_boundary_needs_more_channels() {
        let (pot, grid, mat) = small();
        let opts = EigenOptions { max_levels: 2, ..EigenOptions::default() };
        let set = solve_bound_states_1d(&pot, &grid, &mat, &opts).unwrap();
        let lead = LeadBasis::full_1d(&set, &pot, &grid, &mat).unwrap();
        let ham = assemble_hamiltonian_2p(&pot, &grid, &mat, &Interaction::bare(&mat), DEFAULT_MEMORY_CAP).unwrap();
        assert!(ham.boundary_coupling() > 1.0);
        let mut p = ScatteringProblem::new(&ham, &lead, 20.0);
        p.num_evanescent = 0;
        assert!(matches!(qtbm_solve(&p), Err(Error::InsufficientBasis { .. })));
    }

    #[test]
    fn energy_at_ionization_is_rejected() {
        let (pot, grid, mat) = small();
        let opts = EigenOptions { max_levels: 2, ..EigenOptions::default() };
        let set = solve_bound_states_1d(&pot, &grid, &mat, &opts).unwrap();
        let lead = LeadBasis::full_1d(&set, &pot, &grid, &mat).unwrap();
        let ham = assemble_hamiltonian_2p(&pot, &grid, &mat, &Interaction::off(&mat), DEFAULT_MEMORY_CAP).unwrap();
        let p = ScatteringProblem::new(&ham, &lead, -set.energies()[0] + 1.0);
        assert!(matches!(qtbm_solve(&p), Err(Error::Problem(_))));
        assert!(matches!(qtbm_solve(&ScatteringProblem::new(&ham, &lead, 0.0)), Err(Error::Problem(_))));
    }
}
