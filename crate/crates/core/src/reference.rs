//! Continuum Weyl and Dirac dynamics in momentum space, and the
//! walk-versus-continuum discrepancy.
//!
//! The Weyl reference for a walk with Pauli triple `tau` (see
//! [`WalkKind::pauli_set`]) is `exp(-i (k.tau) t)`. The Dirac reference is
//! `exp(-i H t)` with
//!
//! ```text
//! H = n k.alpha - m beta,   alpha = diag(tau, -tau),   beta = [[0, I], [I, 0]]
//! ```
//!
//! which is the first-order expansion of the Dirac walk block structure.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cayley::QuotientLattice;
use crate::error::{Error, Result};
use crate::evolve::{gaussian_packet_momentum, Branch, Direction, Evolver, Representation, SpinorField, WavePacketSpec};
use crate::linalg::{block2, dot_pauli, identity, norm3, CMatrix, C64, I};
use crate::walks::{dispersion, WalkKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuumSpec {
    /// Walk whose continuum limit is used; selects Weyl or Dirac and the basis.
    pub kind: WalkKind,
    pub time: f64,
}

/// Continuum generator `H(k)`.
pub fn continuum_hamiltonian(kind: WalkKind, k: [f64; 3]) -> CMatrix {
    let tau = kind.pauli_set();
    let kt = dot_pauli(k, &tau);
    match kind.mass() {
        None => kt,
        Some(mass) => {
            let zero = CMatrix::zeros(2, 2);
            let alpha = block2(&kt, &zero, &zero, &(-&kt));
            let beta = block2(&zero, &identity(2), &identity(2), &zero);
            alpha * C64::new(mass.n(), 0.0) - beta * C64::new(mass.value(), 0.0)
        }
    }
}

/// `exp(-i H(k) t)`. `H^2 = E^2 I` for both equations, so
/// `exp(-i H t) = cos(E t) - i sin(E t) H / E`.
pub fn continuum_propagator(kind: WalkKind, k: [f64; 3], t: f64) -> CMatrix {
    let h = continuum_hamiltonian(kind, k);
    let e = match kind.mass() {
        None => norm3(k),
        Some(m) => (m.n() * m.n() * norm3(k).powi(2) + m.value() * m.value()).sqrt(),
    };
    let d = h.nrows();
    if e == 0.0 {
        return identity(d);
    }
    identity(d) * C64::new((e * t).cos(), 0.0) - h * (I * ((e * t).sin() / e))
}

/// Applies the continuum evolution to a momentum-space field.
pub fn continuum_evolve(field: &SpinorField, spec: &ContinuumSpec) -> Result<SpinorField> {
    if field.representation() != Representation::Momentum {
        return Err(Error::Shape("continuum evolution needs a momentum-space field".into()));
    }
    let d = spec.kind.dim();
    if field.dim() != d {
        return Err(Error::Shape(format!(
            "field dimension {} does not match {}",
            field.dim(),
            spec.kind.name()
        )));
    }
    let lat = field.lattice();
    let mut out = field.clone();
    out.data_mut()
        .par_chunks_mut(d)
        .zip(field.data().par_chunks(d))
        .enumerate()
        .for_each(|(i, (o, x))| {
            let k = lat.momentum(lat.coords(i)).get();
            let u = continuum_propagator(spec.kind, k, spec.time);
            for r in 0..d {
                o[r] = (0..d).map(|q| u[(r, q)] * x[q]).sum();
            }
        });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    /// `|| a/|a| - b/|b| ||`.
    pub l2: f64,
    /// `|<a|b>| / (|a| |b|)`.
    pub fidelity: f64,
}

pub fn discrepancy(walk: &SpinorField, continuum: &SpinorField) -> Result<Discrepancy> {
    let (na, nb) = (walk.norm(), continuum.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidArgument("zero field".into()));
    }
    let overlap = walk.inner(continuum)?;
    let l2sq = 2.0 - 2.0 * overlap.re / (na * nb);
    Ok(Discrepancy {
        l2: l2sq.max(0.0).sqrt(),
        fidelity: overlap.norm() / (na * nb),
    })
}

/// Walk and continuum evolution of one packet for `steps` steps.
pub fn compare_packet(
    spec: &WavePacketSpec,
    lattice: QuotientLattice,
    steps: usize,
) -> Result<Discrepancy> {
    let psi = gaussian_packet_momentum(spec, lattice)?;
    let walk = Evolver::new(spec.kind, lattice).evolve(&psi, steps, Direction::Forward)?;
    let cont = continuum_evolve(&psi, &ContinuumSpec { kind: spec.kind, time: steps as f64 })?;
    discrepancy(&walk, &cont)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub sigma_k: f64,
    pub k0: [f64; 3],
    pub steps: usize,
    pub discrepancy: f64,
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    /// Slope of `ln discrepancy` against `ln sigma_k`.
    pub fitted_exponent: f64,
}

/// Runs [`compare_packet`] over a ladder of widths at fixed `k0` and fits
/// the scaling exponent of the discrepancy.
pub fn convergence_study(
    kind: WalkKind,
    k0: [f64; 3],
    sigmas: &[f64],
    branch: Branch,
    lattice: QuotientLattice,
    steps: usize,
) -> Result<ConvergenceStudy> {
    let evolver = Evolver::new(kind, lattice);
    let mut rows = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let spec = WavePacketSpec::new(k0, sigma, branch, kind)?;
        let psi = gaussian_packet_momentum(&spec, lattice)?;
        let walk = evolver.evolve(&psi, steps, Direction::Forward)?;
        let cont = continuum_evolve(&psi, &ContinuumSpec { kind, time: steps as f64 })?;
        let d = discrepancy(&walk, &cont)?;
        rows.push(ConvergenceRow {
            sigma_k: sigma,
            k0,
            steps,
            discrepancy: d.l2,
            fidelity: d.fidelity,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.sigma_k).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.discrepancy).collect();
    Ok(ConvergenceStudy { fitted_exponent: fit_exponent(&xs, &ys), rows })
}

/// Least-squares slope of `ln y` against `ln x`; NaN with fewer than two
/// usable points.
pub fn fit_exponent(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Per-step phase mismatch of the mass gap, `|omega(0) - m|`.
pub fn gap_phase_error(kind: WalkKind) -> Result<f64> {
    let m = kind
        .mass()
        .ok_or(Error::UnsupportedKind("gap_phase_error", "Dirac"))?;
    Ok((dispersion(kind, [0.0; 3])? - m.value()).abs())
}
