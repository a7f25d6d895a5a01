//! Two-particle sector of the doubled Weyl automaton and the photon
//! bilinears built from it.
//!
//! A pair state with total momentum `k` is stored on a local grid of
//! relative momenta `q`: for every grid point a 2x2 block
//!
//! ```text
//! X(q)[s][s'] = psi_2(k/2 - q, s; k/2 + q, s')
//! ```
//!
//! holds the amplitude of `phi_s^dag(k/2 - q) psi_{s'}^dag(k/2 + q) |vac>`.
//! Total momentum is conserved, so this sector is closed under evolution.
//!
//! The up species evolves with the walk matrix `Y(p)`, the down species with
//! its complex conjugate, so `X(t) = Y(a)^t X (conj Y(b)^t)^T`. The bilinear
//! `F^i = sum_q f(q) sigma^i_{ss'} phi_s psi_{s'}` uses the plain Pauli
//! matrices; with the conjugated down evolution this reproduces the Maxwell
//! rotation only when `Y` itself is built from the transposed triple
//! `(sx, -sy, sz)`, so the supported walks are `WeylMinus` and `ZPlus`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cayley::in_brillouin;
use crate::error::{Error, Result};
use crate::linalg::{add3, cross3, dot3, norm3, pauli, scale3, sub3, CMatrix, C64, I, ZERO};
use crate::walks::{weyl_coefficients, WalkKind};

/// Relative-momentum grid around `k/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonGrid {
    k: [f64; 3],
    spacing: f64,
    radius: usize,
}

impl PhotonGrid {
    /// `q = spacing * (i, j, l)` with `|i|, |j|, |l| <= radius`. Every pair
    /// momentum `k/2 +- q` must lie in the zone.
    pub fn new(k: [f64; 3], spacing: f64, radius: usize) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid spacing {spacing} must be positive")));
        }
        crate::cayley::MomentumVector::new(k)?;
        let g = PhotonGrid { k, spacing, radius };
        let r = radius as f64 * spacing;
        for corner in [[r, r, r], [r, r, -r], [r, -r, r], [-r, r, r]] {
            for s in [1.0, -1.0] {
                let p = add3(scale3(0.5, k), scale3(s, corner));
                if !in_brillouin(p) {
                    return Err(Error::MomentumMismatch(format!(
                        "pair momentum {p:?} leaves the zone; shrink the grid"
                    )));
                }
            }
        }
        Ok(g)
    }

    pub fn k(&self) -> [f64; 3] {
        self.k
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn modes(&self) -> usize {
        (2 * self.radius + 1).pow(3)
    }

    pub fn q(&self, i: usize) -> [f64; 3] {
        let w = 2 * self.radius + 1;
        let r = self.radius as f64;
        let idx = [i / (w * w), (i / w) % w, i % w];
        idx.map(|x| (x as f64 - r) * self.spacing)
    }

    /// Index of the grid point `q = 0`.
    pub fn centre(&self) -> usize {
        (self.modes() - 1) / 2
    }

    /// Up-species momentum `k/2 - q`.
    pub fn up(&self, i: usize) -> [f64; 3] {
        sub3(scale3(0.5, self.k), self.q(i))
    }

    /// Down-species momentum `k/2 + q`.
    pub fn down(&self, i: usize) -> [f64; 3] {
        add3(scale3(0.5, self.k), self.q(i))
    }

    fn check_same(&self, other: &PhotonGrid) -> Result<()> {
        if self != other {
            return Err(Error::MomentumMismatch(
                "state and weight are defined on different pair grids".into(),
            ));
        }
        Ok(())
    }
}

/// Weight `f_k(q)` on a pair grid, normalised so `sum |f|^2 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonWeight {
    grid: PhotonGrid,
    sigma_f: f64,
    values: Vec<C64>,
}

/// Default grid half-width, in grid steps.
pub const DEFAULT_GRID_RADIUS: usize = 7;

impl PhotonWeight {
    /// Real Gaussian `exp(-|q|^2 / (4 sigma_f^2))` on a grid of spacing
    /// `sigma_f / 2`.
    pub fn gaussian(k: [f64; 3], sigma_f: f64, radius: usize) -> Result<Self> {
        if !(sigma_f > 0.0 && sigma_f.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma_f = {sigma_f} must be positive")));
        }
        let grid = PhotonGrid::new(k, sigma_f / 2.0, radius)?;
        let values = (0..grid.modes())
            .map(|i| {
                let q = grid.q(i);
                C64::new((-dot3(q, q) / (4.0 * sigma_f * sigma_f)).exp(), 0.0)
            })
            .collect();
        Self::from_values(grid, sigma_f, values)
    }

    pub fn from_values(grid: PhotonGrid, sigma_f: f64, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.modes() {
            return Err(Error::Shape(format!("{} weights for {} modes", values.len(), grid.modes())));
        }
        let norm = values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidArgument("weight has zero norm".into()));
        }
        let values = values.into_iter().map(|z| z / norm).collect();
        Ok(PhotonWeight { grid, sigma_f, values })
    }

    pub fn grid(&self) -> &PhotonGrid {
        &self.grid
    }

    pub fn sigma_f(&self) -> f64 {
        self.sigma_f
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }
}

/// Orthonormal frame transverse to `n_{k/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransverseFrame {
    pub n: [f64; 3],
    pub u1: [f64; 3],
    pub u2: [f64; 3],
}

impl TransverseFrame {
    pub fn n_hat(&self) -> [f64; 3] {
        scale3(1.0 / norm3(self.n), self.n)
    }
}

fn require_supported(kind: WalkKind) -> Result<()> {
    match kind {
        WalkKind::WeylMinus | WalkKind::ZPlus => Ok(()),
        _ => Err(Error::UnsupportedKind("the photon sector", "weyl- and z+")),
    }
}

/// Frame built from `n = n_{k/2}`: `u1` is the canonical axis least aligned
/// with `n` (first index on ties) projected onto the plane orthogonal to
/// `n`, and `u2 = n_hat x u1`.
pub fn transverse_frame(kind: WalkKind, k: [f64; 3]) -> Result<TransverseFrame> {
    if kind.is_dirac() {
        return Err(Error::UnsupportedKind("transverse_frame", "two-component"));
    }
    let (_, n) = weyl_coefficients(kind.sign(), scale3(0.5, k));
    let len = norm3(n);
    if len < 1e-300 {
        return Err(Error::DegenerateDirection);
    }
    let nh = scale3(1.0 / len, n);
    let mut axis = 0;
    for a in 1..3 {
        if nh[a].abs() < nh[axis].abs() {
            axis = a;
        }
    }
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let p = sub3(e, scale3(dot3(e, nh), nh));
    let u1 = scale3(1.0 / norm3(p), p);
    let u2 = cross3(nh, u1);
    Ok(TransverseFrame { n, u1, u2 })
}

/// `Y(p)^t = cos(omega t) - i sin(omega t) n_hat . tau`, the principal power
/// of the walk matrix.
pub fn walk_power(kind: WalkKind, p: [f64; 3], t: f64) -> CMatrix {
    let (d, n) = weyl_coefficients(kind.sign(), p);
    let s = norm3(n);
    let omega = s.atan2(d);
    let mut m = CMatrix::identity(2, 2) * C64::new((omega * t).cos(), 0.0);
    if s > 0.0 {
        let nt = crate::linalg::dot_pauli(scale3(1.0 / s, n), &kind.pauli_set());
        m -= nt * (I * (omega * t).sin());
    }
    m
}

/// Pair amplitudes `X(q)` on a grid, row-major 2x2 per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoParticleAmplitude {
    grid: PhotonGrid,
    kind: WalkKind,
    pairs: Vec<[C64; 4]>,
}

impl TwoParticleAmplitude {
    pub fn new(grid: PhotonGrid, kind: WalkKind, pairs: Vec<[C64; 4]>) -> Result<Self> {
        require_supported(kind)?;
        if pairs.len() != grid.modes() {
            return Err(Error::Shape(format!("{} blocks for {} modes", pairs.len(), grid.modes())));
        }
        let s = TwoParticleAmplitude { grid, kind, pairs };
        if (s.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("pair state norm {} is not 1", s.norm())));
        }
        Ok(s)
    }

    /// `X(q) = f(q) (u^i . sigma)^T / sqrt 2`, polarisation `i` in {0, 1}.
    pub fn photon(weight: &PhotonWeight, kind: WalkKind, polarisation: usize) -> Result<Self> {
        require_supported(kind)?;
        let frame = transverse_frame(kind, weight.grid.k)?;
        let u = match polarisation {
            0 => frame.u1,
            1 => frame.u2,
            p => return Err(Error::InvalidArgument(format!("polarisation {p} not in {{0, 1}}"))),
        };
        let m = crate::linalg::dot_pauli(u, &pauli()).transpose() * C64::new(0.5f64.sqrt(), 0.0);
        let pairs = weight
            .values
            .iter()
            .map(|&f| [m[(0, 0)] * f, m[(0, 1)] * f, m[(1, 0)] * f, m[(1, 1)] * f])
            .collect();
        Self::new(weight.grid, kind, pairs)
    }

    /// A single pair `phi_s^dag(k/2 - q) psi_{s'}^dag(k/2 + q) |vac>`.
    pub fn single_pair(grid: PhotonGrid, kind: WalkKind, index: usize, s: usize, s_prime: usize) -> Result<Self> {
        if index >= grid.modes() || s > 1 || s_prime > 1 {
            return Err(Error::InvalidArgument("pair index out of range".into()));
        }
        let mut pairs = vec![[ZERO; 4]; grid.modes()];
        pairs[index][2 * s + s_prime] = C64::new(1.0, 0.0);
        Self::new(grid, kind, pairs)
    }

    pub fn grid(&self) -> &PhotonGrid {
        &self.grid
    }

    pub fn kind(&self) -> WalkKind {
        self.kind
    }

    pub fn pairs(&self) -> &[[C64; 4]] {
        &self.pairs
    }

    pub fn norm(&self) -> f64 {
        self.pairs
            .iter()
            .flat_map(|b| b.iter())
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

fn block(b: &[C64; 4]) -> CMatrix {
    CMatrix::from_row_slice(2, 2, b)
}

fn unblock(m: &CMatrix) -> [C64; 4] {
    [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]
}

/// Evolves the pair state by `t` steps (real `t` uses the principal power).
pub fn evolve_pair(state: &TwoParticleAmplitude, t: f64) -> TwoParticleAmplitude {
    let g = state.grid;
    let kind = state.kind;
    let pairs = state
        .pairs
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            let up = walk_power(kind, g.up(i), t);
            let down = walk_power(kind, g.down(i), t).map(|z| z.conj());
            unblock(&(up * block(b) * down.transpose()))
        })
        .collect();
    TwoParticleAmplitude { grid: g, kind, pairs }
}

/// CAR sign of `<vac| phi psi phi^dag psi^dag |vac>`.
const CAR_SIGN: f64 = -1.0;

/// `<vac| F^i |state>` by Wick contraction over the grid.
pub fn f_amplitude(state: &TwoParticleAmplitude, weight: &PhotonWeight) -> Result<[C64; 3]> {
    state.grid.check_same(&weight.grid)?;
    let sig = pauli();
    let sum = state
        .pairs
        .par_iter()
        .zip(weight.values.par_iter())
        .map(|(b, &f)| {
            [0, 1, 2].map(|a| {
                let mut acc = ZERO;
                for s in 0..2 {
                    for sp in 0..2 {
                        acc += sig[a][(s, sp)] * b[2 * s + sp];
                    }
                }
                acc * f * CAR_SIGN
            })
        })
        .reduce(|| [ZERO; 3], |x, y| [x[0] + y[0], x[1] + y[1], x[2] + y[2]]);
    Ok(sum)
}

/// `<vac| F^i(t) |state>` with the operator evolved instead of the state:
/// the coefficient matrix `sigma^i` is pulled back through both species'
/// propagators before contracting with the initial amplitudes.
pub fn f_amplitude_heisenberg(state: &TwoParticleAmplitude, weight: &PhotonWeight, t: f64) -> Result<[C64; 3]> {
    state.grid.check_same(&weight.grid)?;
    let g = state.grid;
    let kind = state.kind;
    let sig = pauli();
    let sum = state
        .pairs
        .par_iter()
        .zip(weight.values.par_iter())
        .enumerate()
        .map(|(i, (b, &f))| {
            let up = walk_power(kind, g.up(i), t);
            let down = walk_power(kind, g.down(i), t).map(|z| z.conj());
            [0, 1, 2].map(|a| {
                let kernel = up.transpose() * &sig[a] * &down;
                let mut acc = ZERO;
                for r in 0..2 {
                    for rp in 0..2 {
                        acc += kernel[(r, rp)] * b[2 * r + rp];
                    }
                }
                acc * f * CAR_SIGN
            })
        })
        .reduce(|| [ZERO; 3], |x, y| [x[0] + y[0], x[1] + y[1], x[2] + y[2]]);
    Ok(sum)
}

/// `E` and `B` in transverse-frame coordinates `(u1, u2)`; their component
/// along `n_{k/2}` is zero by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EbAmplitudes {
    pub frame: TransverseFrame,
    pub e: [C64; 2],
    pub b: [C64; 2],
}

impl EbAmplitudes {
    pub fn e_cartesian(&self) -> [C64; 3] {
        to_cartesian(&self.frame, self.e)
    }

    pub fn b_cartesian(&self) -> [C64; 3] {
        to_cartesian(&self.frame, self.b)
    }

    /// Component along `n_hat`, always zero in this representation.
    pub fn normal_components(&self) -> (C64, C64) {
        (ZERO, ZERO)
    }
}

fn to_cartesian(frame: &TransverseFrame, v: [C64; 2]) -> [C64; 3] {
    [0, 1, 2].map(|a| v[0] * frame.u1[a] + v[1] * frame.u2[a])
}

/// `E = |n| F_T`, `B = i |n| F_T` at matrix-element level; the `F_T^dag`
/// terms annihilate the vacuum on the left and drop out.
pub fn eb_amplitudes(state: &TwoParticleAmplitude, weight: &PhotonWeight) -> Result<EbAmplitudes> {
    let frame = transverse_frame(state.kind, state.grid.k)?;
    let f = f_amplitude(state, weight)?;
    let len = norm3(frame.n);
    let proj = |u: [f64; 3]| f[0] * u[0] + f[1] * u[1] + f[2] * u[2];
    let e = [proj(frame.u1) * len, proj(frame.u2) * len];
    Ok(EbAmplitudes { frame, e, b: [e[0] * I, e[1] * I] })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxwellResidual {
    pub dynamic_residual: f64,
    pub transversality_residual: f64,
}

/// `max_t |E(t+1) - E(t) - 2i n x B(t+1/2)| / max_t |E(t)|` over
/// `t = 0..steps-1`, with `B(t+1/2)` from a half-step evolution.
pub fn maxwell_residual(state: &TwoParticleAmplitude, weight: &PhotonWeight, steps: usize) -> Result<MaxwellResidual> {
    if steps < 2 {
        return Err(Error::InvalidArgument("the Maxwell residual needs at least 2 steps".into()));
    }
    let eb = |t: f64| eb_amplitudes(&evolve_pair(state, t), weight);
    let len = norm3(transverse_frame(state.kind, state.grid.k)?.n);
    let norm2 = |v: [C64; 2]| (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    let mut e_max = 0.0_f64;
    let mut worst = 0.0_f64;
    let mut transverse = 0.0_f64;
    let mut prev = eb(0.0)?;
    e_max = e_max.max(norm2(prev.e));
    for t in 0..steps {
        let next = eb(t as f64 + 1.0)?;
        let half = eb(t as f64 + 0.5)?;
        // n x u1 = |n| u2, n x u2 = -|n| u1
        let nxb = [-half.b[1] * len, half.b[0] * len];
        let r = [0, 1].map(|a| next.e[a] - prev.e[a] - I * 2.0 * nxb[a]);
        worst = worst.max(norm2(r));
        e_max = e_max.max(norm2(next.e));
        let (en, bn) = next.normal_components();
        transverse = transverse.max(en.norm()).max(bn.norm());
        prev = next;
    }
    Ok(MaxwellResidual {
        dynamic_residual: if e_max > 0.0 { worst / e_max } else { f64::NAN },
        transversality_residual: transverse,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommutatorReport {
    /// `<vac| [gamma^i(k), gamma^j(k')^dag] |vac> / 2`.
    pub commutator: [[f64; 2]; 2],
    /// Imaginary parts of the same entries.
    pub commutator_imag: [[f64; 2]; 2],
    /// Grid inner product `<f'|f>`, real part.
    pub overlap: f64,
    /// `|commutator - delta_ij overlap|`.
    pub defect: [[f64; 2]; 2],
}

/// Vacuum expectation of `[gamma^i(k), gamma^j(k')^dag]` for
/// `gamma^i = u^i . F` at `t = 0`.
///
/// `gamma^i |vac> = 0`, so only `<vac| gamma^i gamma^j^dag |vac>` survives;
/// its Wick contraction pairs equal up momenta and equal down momenta of the
/// two grids. The trace over spins contributes `tr(u^i.s (u^j.s)^dag) = 2
/// delta_ij`, and the result is divided by 2 so that coincident identical
/// weights give exactly `delta_ij` (grid Kronecker delta).
pub fn commutator_defect(kind: WalkKind, w: &PhotonWeight, w2: &PhotonWeight) -> Result<CommutatorReport> {
    let frame = transverse_frame(kind, w.grid.k)?;
    let frame2 = transverse_frame(kind, w2.grid.k)?;
    let sig = pauli();
    let coeff = |u: [f64; 3]| crate::linalg::dot_pauli(u, &sig);
    let g1 = [coeff(frame.u1), coeff(frame.u2)];
    let g2 = [coeff(frame2.u1), coeff(frame2.u2)];
    let tol = 1e-12;
    let (grid, grid2) = (w.grid, w2.grid);
    let contractions: Vec<(usize, usize)> = (0..grid.modes())
        .into_par_iter()
        .flat_map_iter(|i| {
            let (a, b) = (grid.up(i), grid.down(i));
            (0..grid2.modes())
                .filter(move |&j| {
                    norm3(sub3(a, grid2.up(j))) < tol && norm3(sub3(b, grid2.down(j))) < tol
                })
                .map(move |j| (i, j))
        })
        .collect();
    let mut overlap = ZERO;
    let mut c = [[ZERO; 2]; 2];
    for &(i, j) in &contractions {
        let ff = w.values[i] * w2.values[j].conj();
        overlap += ff;
        for a in 0..2 {
            for b in 0..2 {
                // sum_{ss'} (g1)_{ss'} conj((g2)_{ss'})
                let mut tr = ZERO;
                for s in 0..2 {
                    for sp in 0..2 {
                        tr += g1[a][(s, sp)] * g2[b][(s, sp)].conj();
                    }
                }
                c[a][b] += ff * tr * 0.5;
            }
        }
    }
    let mut defect = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let target = if a == b { overlap } else { ZERO };
            defect[a][b] = (c[a][b] - target).norm();
        }
    }
    Ok(CommutatorReport {
        commutator: c.map(|r| r.map(|z| z.re)),
        commutator_imag: c.map(|r| r.map(|z| z.im)),
        overlap: overlap.re,
        defect,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxwellRow {
    pub sigma_f: f64,
    pub k_norm: f64,
    pub dynamic_residual: f64,
    pub transversality_residual: f64,
    pub commutator_diag: f64,
    pub commutator_offdiag: f64,
}

/// Maxwell residual and commutator along a ladder of weight widths.
pub fn maxwell_study(
    kind: WalkKind,
    k: [f64; 3],
    sigmas: &[f64],
    steps: usize,
    radius: usize,
) -> Result<Vec<MaxwellRow>> {
    require_supported(kind)?;
    sigmas
        .iter()
        .map(|&sigma| {
            let w = PhotonWeight::gaussian(k, sigma, radius)?;
            let state = TwoParticleAmplitude::photon(&w, kind, 0)?;
            let r = maxwell_residual(&state, &w, steps)?;
            let c = commutator_defect(kind, &w, &w)?;
            Ok(MaxwellRow {
                sigma_f: sigma,
                k_norm: norm3(k),
                dynamic_residual: r.dynamic_residual,
                transversality_residual: r.transversality_residual,
                commutator_diag: c.commutator[0][0].min(c.commutator[1][1]),
                commutator_offdiag: c.commutator[0][1].abs().max(c.commutator[1][0].abs()),
            })
        })
        .collect()
}
