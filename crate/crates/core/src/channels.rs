//! Reflection and transmission amplitudes per bound level.
//!
//! Index convention for the channel count: `M + 1` is the number of open
//! channels (levels with positive kinetic energy), so a single open channel
//! has `M = 0`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};
use crate::scattering::{LeadBasis, LeadMode, ScatteringSolution};

/// Default distance (grid points) of the first extraction plane from each
/// boundary slice.
pub const DEFAULT_PLANE_OFFSET: usize = 1;
pub const FIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    pub index: usize,
    /// meV
    pub bound_energy: f64,
    /// `E − bound_energy` (meV).
    pub kinetic: f64,
    /// Lattice wavenumber for open channels, decay rate for closed ones (1/nm).
    pub wavenumber: f64,
    pub open: bool,
    /// meV·nm; zero for closed channels.
    pub group_velocity: f64,
}

impl Channel {
    fn from_mode(m: &LeadMode, spacing: f64, hopping: f64) -> Self {
        Self {
            index: m.level,
            bound_energy: m.bound_energy,
            kinetic: m.kinetic,
            wavenumber: m.wavenumber,
            open: m.open,
            group_velocity: m.group_velocity(spacing, hopping),
        }
    }

    #[cfg(test)]
    fn phase(&self, spacing: f64) -> C64 {
        let kh = self.wavenumber * spacing;
        C64::new(libm::cos(kh), libm::sin(kh))
    }
}

/// Every bound level as a channel at total energy `E`.
pub fn open_channels(total_energy: f64, bound_energies: &[f64], spacing: f64, hopping: f64) -> Result<Vec<Channel>> {
    bound_energies
        .iter()
        .enumerate()
        .map(|(n, e)| LeadMode::new(n, *e, total_energy, spacing, hopping).map(|m| Channel::from_mode(&m, spacing, hopping)))
        .collect()
}

/// Number of open channels minus one; `None` when nothing is open.
pub fn channel_index_m(channels: &[Channel]) -> Option<usize> {
    channels.iter().filter(|c| c.open).count().checked_sub(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelAmplitudes {
    pub channels: Vec<Channel>,
    pub incident_channel: usize,
    pub total_energy: f64,
    pub incident_kinetic: f64,
    /// Flux-normalized reflection amplitudes (zero for closed channels).
    pub b: Vec<C64>,
    /// Flux-normalized transmission amplitudes.
    pub c: Vec<C64>,
    pub unitarity_defect: f64,
    /// Largest deviation of the fitted incoming components from a unit wave
    /// in the incident channel and nothing elsewhere.
    pub fit_residual: f64,
}

impl ChannelAmplitudes {
    pub fn reflection(&self, n: usize) -> f64 {
        self.b[n].norm_sqr()
    }

    pub fn transmission(&self, n: usize) -> f64 {
        self.c[n].norm_sqr()
    }

    pub fn total_reflection(&self) -> f64 {
        self.b.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn total_transmission(&self) -> f64 {
        self.c.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn open_count(&self) -> usize {
        self.channels.iter().filter(|c| c.open).count()
    }

    /// `M`, with `M + 1` open channels.
    pub fn m(&self) -> usize {
        self.open_count().saturating_sub(1)
    }

    fn refresh_defect(&mut self) {
        self.unitarity_defect = libm::fabs(1.0 - self.total_reflection() - self.total_transmission());
    }
}

/// Channel projections of the wavefunction on two neighbouring `x₁` planes
/// near each boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneSamples {
    /// Left planes are `offset` and `offset + 1`.
    pub offset: usize,
    pub n_slices: usize,
    pub left: Vec<[C64; 2]>,
    /// Right planes are `n_slices − 1 − offset` and `n_slices − 2 − offset`.
    pub right: Vec<[C64; 2]>,
}

/// Projects the solution onto the bound-level channel functions.
pub fn project_planes(solution: &ScatteringSolution, lead: &LeadBasis, offset: usize) -> Result<PlaneSamples> {
    let n1 = solution.n_slices;
    if 2 * offset + 4 > n1 {
        return Err(Error::Problem(alloc::format!(
            "extraction offset {offset} leaves no room on a {n1}-slice grid"
        )));
    }
    let last = n1 - 1;
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for n in 0..lead.bound_count() {
        left.push([
            lead.project(n, solution.slice(offset)),
            lead.project(n, solution.slice(offset + 1)),
        ]);
        right.push([
            lead.project(n, solution.slice(last - offset)),
            lead.project(n, solution.slice(last - offset - 1)),
        ]);
    }
    Ok(PlaneSamples {
        offset,
        n_slices: n1,
        left,
        right,
    })
}

/// Splits each open channel into incoming and outgoing plane waves and
/// flux-normalizes the outgoing parts.
///
/// Both leads use the slice index `i` as the common origin of phase.
/// Left lead: `u(i) = A e^{ikhi} + B e^{−ikhi}` with `B` the reflected
/// amplitude. Right lead: `u(i) = C e^{ikhi} + D e^{−ikhi}` with `C` the
/// transmitted amplitude.
pub fn fit_amplitudes(
    samples: &PlaneSamples,
    channels: Vec<Channel>,
    incident_channel: usize,
    incident_kinetic: f64,
    spacing: f64,
) -> Result<ChannelAmplitudes> {
    let nc = channels.len();
    let inc = channels
        .get(incident_channel)
        .filter(|c| c.open)
        .copied()
        .ok_or_else(|| Error::Problem("incident channel is closed".into()))?;
    let v_inc = inc.group_velocity;
    let (mut b, mut c) = (alloc::vec![ZERO; nc], alloc::vec![ZERO; nc]);
    let mut residual: f64 = 0.0;
    let s = samples.offset as i32;
    let last = samples.n_slices as i32 - 1;
    for ch in channels.iter().filter(|c| c.open) {
        let n = ch.index;
        let p = ch.wavenumber * spacing;
        let [u0, u1] = samples.left[n];
        let (a, r) = two_wave(u0, s, u1, s + 1, p);
        let [w0, w1] = samples.right[n];
        let (t, d) = two_wave(w0, last - s, w1, last - s - 1, p);
        let target = if n == incident_channel { 1.0 } else { 0.0 };
        residual = residual.max((a - target).norm()).max(d.norm());
        let scale = libm::sqrt(ch.group_velocity / v_inc);
        b[n] = r * scale;
        c[n] = t * scale;
    }
    if residual > FIT_TOLERANCE {
        return Err(Error::ContaminatedLead {
            residual,
            tolerance: FIT_TOLERANCE,
        });
    }
    let total_energy = inc.bound_energy + inc.kinetic;
    let mut out = ChannelAmplitudes {
        channels,
        incident_channel,
        total_energy,
        incident_kinetic,
        b,
        c,
        unitarity_defect: 0.0,
        fit_residual: residual,
    };
    out.refresh_defect();
    Ok(out)
}

/// Solves `u(i) = A e^{iθi} + B e^{−iθi}` through two samples for `(A, B)`.
fn two_wave(u0: C64, i0: i32, u1: C64, i1: i32, theta: f64) -> (C64, C64) {
    let cis = |x: f64| C64::new(libm::cos(x), libm::sin(x));
    let (a0, a1) = (cis(theta * i0 as f64), cis(theta * i1 as f64));
    let (b0, b1) = (a0.conj(), a1.conj());
    let det = a0 * b1 - a1 * b0;
    ((u0 * b1 - u1 * b0) / det, (a0 * u1 - a1 * u0) / det)
}

pub fn extract_amplitudes(solution: &ScatteringSolution, lead: &LeadBasis) -> Result<ChannelAmplitudes> {
    extract_amplitudes_at(solution, lead, DEFAULT_PLANE_OFFSET)
}

pub fn extract_amplitudes_at(solution: &ScatteringSolution, lead: &LeadBasis, offset: usize) -> Result<ChannelAmplitudes> {
    let energies = &lead.energies()[..lead.bound_count()];
    let channels = open_channels(solution.total_energy, energies, solution.spacing, solution.hopping)?;
    let samples = project_planes(solution, lead, offset)?;
    fit_amplitudes(
        &samples,
        channels,
        solution.incident_channel,
        solution.incident_kinetic,
        solution.spacing,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PostSelection {
    Transmitted,
    Reflected,
    #[default]
    Both,
}

impl core::str::FromStr for PostSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transmitted" => Ok(Self::Transmitted),
            "reflected" => Ok(Self::Reflected),
            "both" => Ok(Self::Both),
            other => Err(crate::error::invalid(
                "post_selection",
                alloc::format!("expected transmitted, reflected or both, got {other:?}"),
            )),
        }
    }
}

/// Conditions on the side where the carrier is detected.
pub fn post_select(amplitudes: &ChannelAmplitudes, side: PostSelection) -> Result<ChannelAmplitudes> {
    let mut out = amplitudes.clone();
    let kept = match side {
        PostSelection::Both => return Ok(out),
        PostSelection::Transmitted => {
            out.b.iter_mut().for_each(|z| *z = ZERO);
            out.total_transmission()
        }
        PostSelection::Reflected => {
            out.c.iter_mut().for_each(|z| *z = ZERO);
            out.total_reflection()
        }
    };
    if kept < 1e-12 {
        return Err(Error::UndefinedPostSelection { kept });
    }
    let s = 1.0 / libm::sqrt(kept);
    out.b.iter_mut().chain(out.c.iter_mut()).for_each(|z| *z *= s);
    out.refresh_defect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: f64 = 568.654;

    fn chan(n: usize, e_n: f64, e: f64) -> Channel {
        Channel::from_mode(&LeadMode::new(n, e_n, e, 1.0, T).unwrap(), 1.0, T)
    }

    fn amps(r: &[f64], t: &[f64]) -> ChannelAmplitudes {
        let channels: Vec<Channel> = (0..r.len()).map(|n| chan(n, -10.0 * n as f64, 30.0)).collect();
        let mut a = ChannelAmplitudes {
            channels,
            incident_channel: 0,
            total_energy: 30.0,
            incident_kinetic: 30.0,
            b: r.iter().map(|p| C64::new(libm::sqrt(*p), 0.0)).collect(),
            c: t.iter().map(|p| C64::new(0.0, libm::sqrt(*p))).collect(),
            unitarity_defect: 0.0,
            fit_residual: 0.0,
        };
        a.refresh_defect();
        a
    }

    #[test]
    fn opening_of_second_channel() {
        let (e0, e1) = (-105.0, -92.5);
        let below = open_channels(e0 + 10.0, &[e0, e1], 1.0, T).unwrap();
        assert_eq!(channel_index_m(&below), Some(0));
        let above = open_channels(e0 + 12.6, &[e0, e1], 1.0, T).unwrap();
        assert_eq!(channel_index_m(&above), Some(1));
        for c in &above {
            assert!((c.bound_energy + c.kinetic - (e0 + 12.6)).abs() < 1e-12);
            assert_eq!(c.open, c.kinetic > 0.0);
            assert_eq!(c.group_velocity > 0.0, c.open);
        }
    }

    #[test]
    fn fit_recovers_plane_waves() {
        let channels = open_channels(-50.0, &[-80.0, -60.0, -40.0], 1.0, T).unwrap();
        let r = [C64::new(0.3, -0.2), C64::new(-0.1, 0.4)];
        let t = [C64::new(0.5, 0.1), C64::new(0.2, 0.2)];
        let n1 = 50;
        for s in [0usize, 3, 10] {
            let mut samples = PlaneSamples {
                offset: s,
                n_slices: n1,
                left: Vec::new(),
                right: Vec::new(),
            };
            for ch in &channels {
                let n = ch.index;
                if !ch.open {
                    samples.left.push([ZERO; 2]);
                    samples.right.push([ZERO; 2]);
                    continue;
                }
                let p = ch.phase(1.0);
                let a = if n == 0 { 1.0 } else { 0.0 };
                let u = |i: i32| p.powi(i) * a + p.powi(-i) * r[n];
                let w = |i: i32| p.powi(i) * t[n];
                let (si, last) = (s as i32, n1 as i32 - 1);
                samples.left.push([u(si), u(si + 1)]);
                samples.right.push([w(last - si), w(last - si - 1)]);
            }
            let out = fit_amplitudes(&samples, channels.clone(), 0, 30.0, 1.0).unwrap();
            assert!(out.fit_residual < 1e-12);
            let scale = libm::sqrt(channels[1].group_velocity / channels[0].group_velocity);
            assert!((out.b[0] - r[0]).norm() < 1e-12);
            assert!((out.c[1] - t[1] * scale).norm() < 1e-12);
            assert_eq!(out.b[2], ZERO);
        }
    }

    #[test]
    fn contaminated_fit_is_rejected() {
        let channels = open_channels(-50.0, &[-80.0], 1.0, T).unwrap();
        let samples = PlaneSamples {
            offset: 0,
            n_slices: 20,
            left: alloc::vec![[C64::new(1.0, 0.0), C64::new(0.2, 0.0)]],
            right: alloc::vec![[C64::new(0.1, 0.0), C64::new(0.1, 0.0)]],
        };
        assert!(matches!(
            fit_amplitudes(&samples, channels, 0, 30.0, 1.0),
            Err(Error::ContaminatedLead { .. })
        ));
    }

    #[test]
    fn post_selection_renormalizes() {
        let a = amps(&[0.5, 0.1], &[0.3, 0.1]);
        let kept = post_select(&a, PostSelection::Transmitted).unwrap();
        assert!((kept.transmission(0) - 0.75).abs() < 1e-12);
        assert!((kept.transmission(1) - 0.25).abs() < 1e-12);
        assert_eq!(kept.total_reflection(), 0.0);
        assert!(kept.unitarity_defect < 1e-12);
        assert_eq!(post_select(&a, PostSelection::Both).unwrap(), a);
        let r = post_select(&a, PostSelection::Reflected).unwrap();
        assert!((r.reflection(0) - 0.5 / 0.6).abs() < 1e-12);
    }

    #[test]
    fn empty_side_is_undefined() {
        let a = amps(&[1.0, 0.0], &[0.0, 0.0]);
        assert!(matches!(
            post_select(&a, PostSelection::Transmitted),
            Err(Error::UndefinedPostSelection { .. })
        ));
    }

    #[test]
    fn parses_side() {
        assert_eq!("reflected".parse::<PostSelection>().unwrap(), PostSelection::Reflected);
        assert!("left".parse::<PostSelection>().is_err());
    }
}
