//! Reduced density matrix of the bound subsystem and its von Neumann entropy.

use alloc::vec;
use alloc::vec::Vec;

use crate::channels::ChannelAmplitudes;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, C64, ZERO};

pub const TRACE_TOLERANCE: f64 = 1e-6;
pub const NEGATIVE_EIGENVALUE_TOLERANCE: f64 = 1e-10;

/// Block-diagonal reduced density matrix over the open channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedDensityMatrix {
    /// Bound levels of each block.
    pub levels: Vec<Vec<usize>>,
    /// Row-major Hermitian blocks, normalized to unit total trace.
    pub blocks: Vec<Vec<C64>>,
    /// Eigenvalues block by block, descending inside each block.
    pub eigenvalues: Vec<f64>,
    /// Trace before normalization.
    pub trace: f64,
}

/// Traces the carrier out of the outgoing state.
///
/// Levels in one degeneracy group share an outgoing wave, so their block
/// carries the cross terms `b_m b̄_n + c_m c̄_n`; different groups only
/// contribute diagonal entries.
pub fn reduce_density_matrix(amplitudes: &ChannelAmplitudes, degeneracy_groups: &[Vec<usize>]) -> Result<ReducedDensityMatrix> {
    let (b, c) = (&amplitudes.b, &amplitudes.c);
    let mut levels = Vec::new();
    let mut blocks = Vec::new();
    let mut trace = 0.0;
    for group in degeneracy_groups {
        let open: Vec<usize> = group
            .iter()
            .copied()
            .filter(|n| *n < amplitudes.channels.len() && amplitudes.channels[*n].open)
            .collect();
        if open.is_empty() {
            continue;
        }
        let d = open.len();
        let mut block = vec![ZERO; d * d];
        for (r, m) in open.iter().enumerate() {
            for (s, n) in open.iter().enumerate() {
                block[r * d + s] = b[*m] * b[*n].conj() + c[*m] * c[*n].conj();
            }
            trace += block[r * d + r].re;
        }
        levels.push(open);
        blocks.push(block);
    }
    if !(libm::fabs(trace - 1.0) <= TRACE_TOLERANCE) {
        return Err(Error::UpstreamUnitarity { trace });
    }
    let mut eigenvalues = Vec::new();
    for block in blocks.iter_mut() {
        block.iter_mut().for_each(|z| *z /= trace);
        let d = libm::sqrt(block.len() as f64) as usize;
        let mut vals = if d == 1 {
            vec![block[0].re]
        } else {
            hermitian_eigen(d, block)?.0
        };
        for v in vals.iter_mut() {
            if *v < -NEGATIVE_EIGENVALUE_TOLERANCE {
                return Err(Error::NumericalConsistency { value: *v });
            }
            *v = v.max(0.0);
        }
        vals.sort_by(|x, y| y.total_cmp(x));
        eigenvalues.extend(vals);
    }
    Ok(ReducedDensityMatrix {
        levels,
        blocks,
        eigenvalues,
        trace,
    })
}

/// `−Σ λ ln λ` in nats, with `0 ln 0 = 0`.
pub fn von_neumann_entropy(rdm: &ReducedDensityMatrix) -> Result<f64> {
    entropy_of(&rdm.eigenvalues)
}

pub fn entropy_of(eigenvalues: &[f64]) -> Result<f64> {
    let mut xi = 0.0;
    for &l in eigenvalues {
        if l < -NEGATIVE_EIGENVALUE_TOLERANCE {
            return Err(Error::NumericalConsistency { value: l });
        }
        if l > 0.0 {
            xi -= l * libm::log(l);
        }
    }
    Ok(xi.max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyRecord {
    pub incident_t0: f64,
    pub xi: f64,
    /// `M`, with `M + 1` open channels.
    pub m: usize,
    pub eigenvalues: Vec<f64>,
    /// `(R_n, T_n)` per bound level.
    pub probabilities: Vec<(f64, f64)>,
}

impl EntropyRecord {
    pub fn new(amplitudes: &ChannelAmplitudes, degeneracy_groups: &[Vec<usize>]) -> Result<Self> {
        let rdm = reduce_density_matrix(amplitudes, degeneracy_groups)?;
        let xi = von_neumann_entropy(&rdm)?;
        Ok(Self {
            incident_t0: amplitudes.incident_kinetic,
            xi,
            m: amplitudes.m(),
            eigenvalues: rdm.eigenvalues,
            probabilities: (0..amplitudes.b.len())
                .map(|n| (amplitudes.reflection(n), amplitudes.transmission(n)))
                .collect(),
        })
    }

    pub fn upper_bound(&self) -> f64 {
        libm::log((self.m + 1) as f64)
    }
}
