//! Bound states of the dot: single-particle levels on the dot window and
//! two-particle levels of the double dot on the window × window grid.
//!
//! The sparse path is a shift-invert block subspace iteration with a
//! Rayleigh–Ritz step. The shift sits below the Gershgorin bound so the
//! shifted operator is positive definite and a sparse Cholesky applies.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, MatRef, Side};

use crate::error::{invalid, Error, Result};
use crate::linalg::{gram, rotate, symmetric_eigen};
use crate::model::{DotWindow, Grid1D, Interaction, MaterialParams, PotentialProfile};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub max_levels: usize,
    /// Energy tolerance (meV) for grouping near-degenerate two-particle levels.
    pub delta_deg: f64,
    /// Largest allowed |ψ| on the window edge for a normalized state.
    pub decay_tolerance: f64,
    /// Target for ‖Hψ − Eψ‖ / ‖ψ‖ in meV.
    pub residual_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            max_levels: 4,
            delta_deg: 0.05,
            decay_tolerance: 1e-8,
            residual_tolerance: 1e-8,
            max_iterations: 2000,
        }
    }
}

/// Real symmetric sparse matrix kept as diagonal plus strict upper entries.
#[derive(Debug, Clone)]
pub struct SymmetricOperator {
    n: usize,
    diag: Vec<f64>,
    upper: Vec<(usize, usize, f64)>,
}

impl SymmetricOperator {
    pub fn new(diag: Vec<f64>, upper: Vec<(usize, usize, f64)>) -> Self {
        let n = diag.len();
        debug_assert!(upper.iter().all(|&(i, j, _)| i < j && j < n));
        Self { n, diag, upper }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, d), xi) in y.iter_mut().zip(&self.diag).zip(x) {
            *yi = d * xi;
        }
        for &(i, j, v) in &self.upper {
            y[i] += v * x[j];
            y[j] += v * x[i];
        }
    }

    /// Column-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = vec![0.0; n * n];
        for (i, d) in self.diag.iter().enumerate() {
            a[i * n + i] = *d;
        }
        for &(i, j, v) in &self.upper {
            a[j * n + i] += v;
            a[i * n + j] += v;
        }
        a
    }

    /// Lower bound on the spectrum from Gershgorin discs.
    pub fn gershgorin_lower(&self) -> f64 {
        let mut radius = vec![0.0; self.n];
        for &(i, j, v) in &self.upper {
            radius[i] += libm::fabs(v);
            radius[j] += libm::fabs(v);
        }
        self.diag
            .iter()
            .zip(&radius)
            .map(|(d, r)| d - r)
            .fold(f64::INFINITY, f64::min)
    }

    fn shifted_lower(&self, sigma: f64) -> Result<SparseColMat<usize, f64>> {
        let mut trip = Vec::with_capacity(self.n + self.upper.len());
        for (i, d) in self.diag.iter().enumerate() {
            trip.push(Triplet::new(i, i, d - sigma));
        }
        for &(i, j, v) in &self.upper {
            trip.push(Triplet::new(j, i, v));
        }
        SparseColMat::try_new_from_triplets(self.n, self.n, &trip)
            .map_err(|e| Error::Factorization(format!("{e:?}")))
    }
}

/// Lowest `count` eigenpairs of `op`. Vectors are column-major with unit
/// Euclidean norm. Returns `(values, vectors, residuals)`.
pub fn lowest_eigenpairs(
    op: &SymmetricOperator,
    count: usize,
    tolerance: f64,
    max_iterations: usize,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = op.dim();
    let count = count.min(n);
    if count == 0 {
        return Ok((Vec::new(), Vec::new(), Vec::new()));
    }
    let p = (2 * count).max(count + 8).min(n);
    if p == n || n <= 64 {
        return dense_lowest(op, count);
    }
    let sigma = op.gershgorin_lower() - 1.0;
    let llt = op
        .shifted_lower(sigma)?
        .sp_cholesky(Side::Lower)
        .map_err(|e| Error::Factorization(format!("shifted cholesky: {e:?}")))?;

    let mut seed = 0x9e37_79b9_7f4a_7c15_u64;
    let mut block = Mat::<f64>::from_fn(n, p, |_, _| {
        seed = seed
            .wrapping_mul(6_364_136_223_846_793_005)
            .wrapping_add(1_442_695_040_888_963_407);
        (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    });
    let mut hx = vec![0.0; n * p];
    let mut worst = f64::INFINITY;
    for _ in 0..max_iterations {
        llt.solve_in_place(block.as_mut());
        let q = block.qr().compute_thin_Q();
        let qv = to_col_major(q.as_ref());
        for j in 0..p {
            op.apply(&qv[j * n..(j + 1) * n], &mut hx[j * n..(j + 1) * n]);
        }
        let mut small = gram(n, &qv, p, &hx, p);
        for i in 0..p {
            for j in 0..i {
                let s = 0.5 * (small[j * p + i] + small[i * p + j]);
                small[j * p + i] = s;
                small[i * p + j] = s;
            }
        }
        let (theta, s) = symmetric_eigen(p, &small)?;
        let x = rotate(n, &qv, p, &s, p);
        let hxr = rotate(n, &hx, p, &s, p);
        let residuals: Vec<f64> = (0..count)
            .map(|j| {
                let xs = &x[j * n..(j + 1) * n];
                let hs = &hxr[j * n..(j + 1) * n];
                libm::sqrt(
                    xs.iter()
                        .zip(hs)
                        .map(|(a, b)| (b - theta[j] * a) * (b - theta[j] * a))
                        .sum(),
                )
            })
            .collect();
        worst = residuals.iter().copied().fold(0.0, f64::max);
        if worst < tolerance {
            let vals = theta[..count].to_vec();
            return Ok((vals, x[..n * count].to_vec(), residuals));
        }
        block = Mat::from_fn(n, p, |i, j| x[j * n + i]);
    }
    Err(Error::EigenNonConvergence {
        iterations: max_iterations,
        residual: worst,
    })
}

fn dense_lowest(op: &SymmetricOperator, count: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = op.dim();
    let (vals, vecs) = symmetric_eigen(n, &op.to_dense())?;
    let mut hx = vec![0.0; n];
    let residuals = (0..count)
        .map(|j| {
            let v = &vecs[j * n..(j + 1) * n];
            op.apply(v, &mut hx);
            libm::sqrt(hx.iter().zip(v).map(|(a, b)| { let d = a - vals[j] * b; d * d }).sum())
        })
        .collect();
    Ok((vals[..count].to_vec(), vecs[..n * count].to_vec(), residuals))
}

fn to_col_major(m: MatRef<'_, f64>) -> Vec<f64> {
    let (r, c) = (m.nrows(), m.ncols());
    let mut out = vec![0.0; r * c];
    for j in 0..c {
        for i in 0..r {
            out[j * r + i] = m[(i, j)];
        }
    }
    out
}

/// Single-particle Hamiltonian on the dot window with Dirichlet edges.
pub fn window_operator_1d(
    potential: &PotentialProfile,
    grid: &Grid1D,
    material: &MaterialParams,
) -> SymmetricOperator {
    let t = material.hopping(grid.spacing());
    let diag: Vec<f64> = potential
        .window_samples(grid)
        .iter()
        .map(|v| 2.0 * t + v)
        .collect();
    let upper = (0..diag.len().saturating_sub(1)).map(|i| (i, i + 1, -t)).collect();
    SymmetricOperator::new(diag, upper)
}

/// Two bound electrons on window × window; index `a * nw + b` holds
/// `(x₂, x₃) = (window[a], window[b])`.
pub fn window_operator_2p(
    potential: &PotentialProfile,
    grid: &Grid1D,
    material: &MaterialParams,
    interaction: &Interaction,
) -> SymmetricOperator {
    let t = material.hopping(grid.spacing());
    let v = potential.window_samples(grid);
    let xs = grid.window_positions();
    let nw = v.len();
    let mut diag = vec![0.0; nw * nw];
    let mut upper = Vec::with_capacity(2 * nw * nw);
    for a in 0..nw {
        for b in 0..nw {
            let k = a * nw + b;
            diag[k] = 4.0 * t + v[a] + v[b] + interaction.bound_bound(xs[a], xs[b]);
            if b + 1 < nw {
                upper.push((k, k + 1, -t));
            }
            if a + 1 < nw {
                upper.push((k, k + nw, -t));
            }
        }
    }
    SymmetricOperator::new(diag, upper)
}

/// Shared interface over single- and two-particle bound sets, as seen by the
/// scattering and channel code.
pub trait BoundBasis {
    /// Ascending bound energies (meV).
    fn energies(&self) -> &[f64];
    /// State `n` on the transverse window grid, normalized with [`Self::measure`].
    fn state(&self, n: usize) -> &[f64];
    /// Quadrature weight of one transverse node (`h` or `h²`).
    fn measure(&self) -> f64;
    /// Number of transverse grid nodes.
    fn transverse_len(&self) -> usize;
    fn degeneracy_groups(&self) -> &[Vec<usize>];
    fn window(&self) -> DotWindow;
    fn spacing(&self) -> f64;
    /// Total energy above which the bound subsystem can be ionized.
    fn ionization_threshold(&self) -> f64;

    fn count(&self) -> usize {
        self.energies().len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundStateSet {
    energies: Vec<f64>,
    states: Vec<Vec<f64>>,
    residuals: Vec<f64>,
    groups: Vec<Vec<usize>>,
    window: DotWindow,
    spacing: f64,
}

impl BoundStateSet {
    pub fn wavefunctions(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// Ground-state energy, if any level is bound.
    pub fn ground(&self) -> Option<f64> {
        self.energies.first().copied()
    }
}

impl BoundBasis for BoundStateSet {
    fn ionization_threshold(&self) -> f64 {
        0.0
    }

    fn energies(&self) -> &[f64] {
        &self.energies
    }

    fn state(&self, n: usize) -> &[f64] {
        &self.states[n]
    }

    fn measure(&self) -> f64 {
        self.spacing
    }

    fn transverse_len(&self) -> usize {
        self.window.len()
    }

    fn degeneracy_groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    fn window(&self) -> DotWindow {
        self.window
    }

    fn spacing(&self) -> f64 {
        self.spacing
    }
}

/// Parity of a two-particle state under x₂ ↔ x₃.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExchangeSymmetry {
    Symmetric,
    Antisymmetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoParticleBoundSet {
    energies: Vec<f64>,
    states: Vec<Vec<f64>>,
    residuals: Vec<f64>,
    parities: Vec<ExchangeSymmetry>,
    groups: Vec<Vec<usize>>,
    window: DotWindow,
    spacing: f64,
    continuum_edge: f64,
}

impl TwoParticleBoundSet {
    pub fn wavefunctions(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn parities(&self) -> &[ExchangeSymmetry] {
        &self.parities
    }

    /// Single-particle ground energy E₀: levels must lie below it.
    pub fn continuum_edge(&self) -> f64 {
        self.continuum_edge
    }

    /// Lowest level with the requested exchange parity.
    pub fn lowest_with(&self, parity: ExchangeSymmetry) -> Option<usize> {
        self.parities.iter().position(|p| *p == parity)
    }
}

impl BoundBasis for TwoParticleBoundSet {
    fn ionization_threshold(&self) -> f64 {
        self.continuum_edge
    }

    fn energies(&self) -> &[f64] {
        &self.energies
    }

    fn state(&self, n: usize) -> &[f64] {
        &self.states[n]
    }

    fn measure(&self) -> f64 {
        self.spacing * self.spacing
    }

    fn transverse_len(&self) -> usize {
        self.window.len() * self.window.len()
    }

    fn degeneracy_groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    fn window(&self) -> DotWindow {
        self.window
    }

    fn spacing(&self) -> f64 {
        self.spacing
    }
}

/// Partitions ascending energies into runs whose spread stays below `delta`.
pub fn degeneracy_groups(energies: &[f64], delta: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, e) in energies.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if e - energies[g[0]] < delta => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

fn check_options(opts: &EigenOptions) -> Result<()> {
    if opts.max_levels == 0 {
        return Err(invalid("max_levels", "must be at least 1"));
    }
    if !(opts.delta_deg >= 0.0) {
        return Err(invalid("delta_deg", "must be non-negative"));
    }
    Ok(())
}

/// Single-particle bound levels (E < 0) of the dot window, at most
/// `opts.max_levels` of them.
pub fn solve_bound_states_1d(
    potential: &PotentialProfile,
    grid: &Grid1D,
    material: &MaterialParams,
    opts: &EigenOptions,
) -> Result<BoundStateSet> {
    check_options(opts)?;
    potential.check_flat_leads(grid)?;
    let h = grid.spacing();
    let op = window_operator_1d(potential, grid, material);
    let nw = op.dim();
    let want = (opts.max_levels + 1).min(nw);
    let (vals, vecs, res) = lowest_eigenpairs(&op, want, opts.residual_tolerance, opts.max_iterations)?;
    let scale = 1.0 / libm::sqrt(h);
    let mut energies = Vec::new();
    let mut states = Vec::new();
    let mut residuals = Vec::new();
    for (n, e) in vals.iter().enumerate().take(opts.max_levels) {
        if *e >= 0.0 {
            break;
        }
        let mut v: Vec<f64> = vecs[n * nw..(n + 1) * nw].iter().map(|x| x * scale).collect();
        fix_sign(&mut v);
        let edge = libm::fabs(v[0]).max(libm::fabs(v[nw - 1]));
        if edge > opts.decay_tolerance {
            return Err(Error::WindowTooSmall {
                level: n,
                amplitude: edge,
                tolerance: opts.decay_tolerance,
            });
        }
        energies.push(*e);
        states.push(v);
        residuals.push(res[n]);
    }
    let groups = (0..energies.len()).map(|i| vec![i]).collect();
    Ok(BoundStateSet {
        energies,
        states,
        residuals,
        groups,
        window: grid.dot_window(),
        spacing: h,
    })
}

/// Lowest `count` eigenpairs of the two-particle window operator, normalized
/// with weight `h²`. Used for the bound set and as a coarse space by the
/// iterative scattering solver.
pub fn lowest_modes_2p(
    potential: &PotentialProfile,
    grid: &Grid1D,
    material: &MaterialParams,
    interaction: &Interaction,
    count: usize,
    opts: &EigenOptions,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
    let h = grid.spacing();
    let op = window_operator_2p(potential, grid, material, interaction);
    let n = op.dim();
    let (vals, vecs, res) = lowest_eigenpairs(&op, count, opts.residual_tolerance, opts.max_iterations)?;
    let scale = 1.0 / h;
    let states = (0..vals.len())
        .map(|j| vecs[j * n..(j + 1) * n].iter().map(|x| x * scale).collect())
        .collect();
    Ok((vals, states, res))
}

/// Two-particle levels of the double dot below the one-bound-one-free edge E₀.
///
/// Within each degeneracy group the states are rotated to definite exchange
/// parity.
pub fn solve_bound_states_2p(
    potential: &PotentialProfile,
    grid: &Grid1D,
    material: &MaterialParams,
    interaction: &Interaction,
    opts: &EigenOptions,
) -> Result<TwoParticleBoundSet> {
    check_options(opts)?;
    potential.check_flat_leads(grid)?;
    let single = solve_bound_states_1d(
        potential,
        grid,
        material,
        &EigenOptions {
            max_levels: 1,
            ..*opts
        },
    )?;
    let h = grid.spacing();
    let nw = grid.dot_window().len();
    let window = grid.dot_window();
    let Some(edge) = single.ground() else {
        return Ok(TwoParticleBoundSet {
            energies: Vec::new(),
            states: Vec::new(),
            residuals: Vec::new(),
            parities: Vec::new(),
            groups: Vec::new(),
            window,
            spacing: h,
            continuum_edge: 0.0,
        });
    };
    // extra levels so the last kept group is complete
    let want = opts.max_levels + 4;
    let op = window_operator_2p(potential, grid, material, interaction);
    let (vals, vecs, _) = lowest_eigenpairs(&op, want, opts.residual_tolerance, opts.max_iterations)?;
    let n = op.dim();
    let all_groups = degeneracy_groups(&vals, opts.delta_deg);

    let mut energies = Vec::new();
    let mut states: Vec<Vec<f64>> = Vec::new();
    let mut parities = Vec::new();
    for g in &all_groups {
        if energies.len() + g.len() > opts.max_levels || vals[g[g.len() - 1]] >= edge {
            break;
        }
        if g[g.len() - 1] + 1 == vals.len() {
            // group may continue past the computed levels
            break;
        }
        let block: Vec<f64> = g.iter().flat_map(|&j| vecs[j * n..(j + 1) * n].iter().copied()).collect();
        for (e, v, p) in split_by_parity(&op, nw, &block, g.len())? {
            energies.push(e);
            states.push(v.iter().map(|x| x / h).collect());
            parities.push(p);
        }
    }

    let mut hx = vec![0.0; n];
    let mut residuals = Vec::with_capacity(states.len());
    for (k, v) in states.iter_mut().enumerate() {
        op.apply(v, &mut hx);
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
        let r = libm::sqrt(hx.iter().zip(v.iter()).map(|(a, b)| { let d = a - energies[k] * b; d * d }).sum());
        residuals.push(r / norm);
        fix_sign(v);
        let edge_amp = edge_amplitude_2p(v, nw);
        if edge_amp > opts.decay_tolerance {
            return Err(Error::WindowTooSmall {
                level: k,
                amplitude: edge_amp,
                tolerance: opts.decay_tolerance,
            });
        }
    }
    let groups = degeneracy_groups(&energies, opts.delta_deg);
    Ok(TwoParticleBoundSet {
        energies,
        states,
        residuals,
        parities,
        groups,
        window,
        spacing: h,
        continuum_edge: edge,
    })
}

/// Rotates a group of `m` vectors (column-major, unit norm) to eigenvectors
/// of the exchange operator, then diagonalizes `op` inside each parity
/// sector.
fn split_by_parity(
    op: &SymmetricOperator,
    nw: usize,
    block: &[f64],
    m: usize,
) -> Result<Vec<(f64, Vec<f64>, ExchangeSymmetry)>> {
    let n = nw * nw;
    let swapped: Vec<f64> = (0..m)
        .flat_map(|j| {
            let v = &block[j * n..(j + 1) * n];
            (0..n).map(move |k| v[(k % nw) * nw + k / nw])
        })
        .collect();
    let mut pm = gram(n, block, m, &swapped, m);
    symmetrize(&mut pm, m);
    let (pv, pu) = symmetric_eigen(m, &pm)?;
    let rotated = rotate(n, block, m, &pu, m);
    let mut out = Vec::with_capacity(m);
    for (parity, cols) in [
        (ExchangeSymmetry::Symmetric, (0..m).filter(|&j| pv[j] > 0.0).collect::<Vec<_>>()),
        (ExchangeSymmetry::Antisymmetric, (0..m).filter(|&j| pv[j] <= 0.0).collect::<Vec<_>>()),
    ] {
        let k = cols.len();
        if k == 0 {
            continue;
        }
        let sub: Vec<f64> = cols.iter().flat_map(|&j| rotated[j * n..(j + 1) * n].iter().copied()).collect();
        let mut hs = vec![0.0; n * k];
        for j in 0..k {
            op.apply(&sub[j * n..(j + 1) * n], &mut hs[j * n..(j + 1) * n]);
        }
        let mut hm = gram(n, &sub, k, &hs, k);
        symmetrize(&mut hm, k);
        let (ev, eu) = symmetric_eigen(k, &hm)?;
        let vecs = rotate(n, &sub, k, &eu, k);
        for j in 0..k {
            let mut v = vecs[j * n..(j + 1) * n].to_vec();
            project_parity(&mut v, nw, parity);
            out.push((ev[j], v, parity));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

fn symmetrize(a: &mut [f64], m: usize) {
    for i in 0..m {
        for j in 0..i {
            let s = 0.5 * (a[j * m + i] + a[i * m + j]);
            a[j * m + i] = s;
            a[i * m + j] = s;
        }
    }
}

/// Removes the residual opposite-parity component and renormalizes.
fn project_parity(v: &mut [f64], nw: usize, parity: ExchangeSymmetry) {
    let sign = match parity {
        ExchangeSymmetry::Symmetric => 1.0,
        ExchangeSymmetry::Antisymmetric => -1.0,
    };
    for a in 0..nw {
        for b in a..nw {
            let (p, q) = (a * nw + b, b * nw + a);
            let s = 0.5 * (v[p] + sign * v[q]);
            v[p] = s;
            v[q] = sign * s;
        }
    }
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
    v.iter_mut().for_each(|x| *x /= norm);
}

/// Largest |Γ| on the boundary rows and columns of the window square.
pub fn edge_amplitude_2p(v: &[f64], nw: usize) -> f64 {
    let mut m: f64 = 0.0;
    for a in 0..nw {
        for k in [a, (nw - 1) * nw + a, a * nw, a * nw + nw - 1] {
            m = m.max(libm::fabs(v[k]));
        }
    }
    m
}

/// Exchange defect ‖PΓ ∓ Γ‖ / ‖Γ‖ for the given parity.
pub fn exchange_defect(v: &[f64], nw: usize, parity: ExchangeSymmetry) -> f64 {
    let sign = match parity {
        ExchangeSymmetry::Symmetric => 1.0,
        ExchangeSymmetry::Antisymmetric => -1.0,
    };
    let mut d = 0.0;
    let mut nrm = 0.0;
    for a in 0..nw {
        for b in 0..nw {
            let x = v[b * nw + a] - sign * v[a * nw + b];
            d += x * x;
            nrm += v[a * nw + b] * v[a * nw + b];
        }
    }
    libm::sqrt(d / nrm)
}

/// Fixes the sign convention: the entry of largest modulus is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0.0;
    for x in v.iter() {
        if libm::fabs(*x) > libm::fabs(best) + 1e-12 {
            best = *x;
        }
    }
    if best < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_potential, DotKind};

    fn qd() -> (PotentialProfile, Grid1D, MaterialParams) {
        let grid = Grid1D::new(600.0, 1.0).unwrap().with_dot_window(215.0, 385.0).unwrap();
        let pot = build_potential(DotKind::SingleDot, &grid, 110.0, 30.0, 0.0).unwrap();
        (pot, grid, MaterialParams::gaas())
    }

    #[test]
    fn single_dot_levels() {
        let (pot, grid, mat) = qd();
        let set = solve_bound_states_1d(&pot, &grid, &mat, &EigenOptions::default()).unwrap();
        assert_eq!(set.count(), 4);
        let e = set.energies();
        assert!(e.windows(2).all(|w| w[0] < w[1]));
        assert!(e.iter().all(|x| *x < 0.0));
        let h = grid.spacing();
        for (i, a) in set.wavefunctions().iter().enumerate() {
            for (j, b) in set.wavefunctions().iter().enumerate() {
                let o: f64 = a.iter().zip(b).map(|(x, y)| x * y * h).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((o - expect).abs() < 1e-8, "overlap {i},{j} = {o}");
            }
        }
        assert!(set.residuals().iter().all(|r| *r < 1e-8));
    }

    #[test]
    fn zero_potential_has_no_bound_state() {
        let grid = Grid1D::new(600.0, 1.0).unwrap().with_dot_window(215.0, 385.0).unwrap();
        let pot = build_potential(DotKind::SingleDot, &grid, 0.0, 30.0, 0.0).unwrap();
        let set = solve_bound_states_1d(&pot, &grid, &MaterialParams::gaas(), &EigenOptions::default()).unwrap();
        assert_eq!(set.count(), 0);
    }

    #[test]
    fn narrow_window_is_rejected() {
        let grid = Grid1D::new(600.0, 1.0).unwrap().with_dot_window(270.0, 330.0).unwrap();
        let pot = build_potential(DotKind::SingleDot, &grid, 110.0, 30.0, 0.0).unwrap();
        let err = solve_bound_states_1d(&pot, &grid, &MaterialParams::gaas(), &EigenOptions::default());
        assert!(matches!(err, Err(Error::WindowTooSmall { .. })));
    }

    #[test]
    fn subspace_iteration_matches_dense() {
        let (pot, grid, mat) = qd();
        let op = window_operator_1d(&pot, &grid, &mat);
        let (sparse, _, _) = lowest_eigenpairs(&op, 5, 1e-9, 2000).unwrap();
        let (dense, _) = symmetric_eigen(op.dim(), &op.to_dense()).unwrap();
        for (a, b) in sparse.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn groups_by_spread() {
        let g = degeneracy_groups(&[-3.0, -2.99, -2.97, -1.0, -0.5, -0.49], 0.05);
        assert_eq!(g, vec![vec![0, 1, 2], vec![3], vec![4, 5]]);
        let g = degeneracy_groups(&[-3.0, -2.96, -2.92], 0.05);
        assert_eq!(g, vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn parity_of_coarse_double_dot() {
        let grid = Grid1D::new(600.0, 4.0).unwrap().with_dot_window(240.0, 360.0).unwrap();
        let pot = build_potential(DotKind::DoubleDot, &grid, 110.0, 30.0, 20.0).unwrap();
        let mat = MaterialParams::gaas();
        let opts = EigenOptions {
            max_levels: 6,
            decay_tolerance: 1e-2,
            ..EigenOptions::default()
        };
        let set = solve_bound_states_2p(&pot, &grid, &mat, &Interaction::bare(&mat), &opts).unwrap();
        let nw = grid.dot_window().len();
        assert!(set.count() >= 2);
        for (v, p) in set.wavefunctions().iter().zip(set.parities()) {
            assert!(exchange_defect(v, nw, *p) < 1e-6);
        }
        assert_eq!(set.parities()[0], ExchangeSymmetry::Symmetric);
        assert!(set.residuals().iter().all(|r| *r < 1e-8));
    }
}
