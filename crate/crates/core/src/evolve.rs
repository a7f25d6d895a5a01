//! Single-excitation fields on the periodic quotient and their evolution.
//!
//! Position-space amplitudes are stored site-major, `data[site * d + s]`,
//! with sites in the order of [`QuotientLattice::index`]. The momentum
//! representation uses the same layout over momentum indices and the unitary
//! transform
//!
//! ```text
//! phi_hat(m) = N^{-3/2} sum_x exp(+2 pi i m.x / N) phi(x)
//! ```
//!
//! in generator coordinates, so a plane wave `exp(-i k.x) u` maps to a single
//! momentum carrying `u`.

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use crate::cayley::{distance_to_boundary, fold, to_cartesian_f, MomentumVector, QuotientLattice, Step};
use crate::error::{Error, Result};
use crate::linalg::{dot_pauli, fix_gauge, norm3, normal_eigen, CMatrix, CVector, C64, ZERO};
use crate::walks::{transition_matrices, weyl_coefficients, TransitionMatrixSet, WalkKind};

/// Upper bound on the packet amplitude at the zone boundary.
pub const PACKET_TAIL_BOUND: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    Position,
    Momentum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Eigenbranch of the walk matrix: `Positive` is the eigenvalue
/// `exp(+i omega)`, whose packets travel with `+grad omega`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    lattice: QuotientLattice,
    dim: usize,
    representation: Representation,
    data: Vec<C64>,
}

impl SpinorField {
    pub fn zeros(lattice: QuotientLattice, dim: usize, representation: Representation) -> Self {
        SpinorField {
            lattice,
            dim,
            representation,
            data: vec![ZERO; lattice.sites() * dim],
        }
    }

    pub fn from_data(
        lattice: QuotientLattice,
        dim: usize,
        representation: Representation,
        data: Vec<C64>,
    ) -> Result<Self> {
        if dim == 0 || data.len() != lattice.sites() * dim {
            return Err(Error::Shape(format!(
                "{} amplitudes for {} sites of dimension {dim}",
                data.len(),
                lattice.sites()
            )));
        }
        Ok(SpinorField { lattice, dim, representation, data })
    }

    /// A position-space field supported on one site.
    pub fn point_source(lattice: QuotientLattice, site: usize, spinor: &[C64]) -> Result<Self> {
        if site >= lattice.sites() {
            return Err(Error::InvalidArgument(format!("site {site} out of range")));
        }
        let mut f = SpinorField::zeros(lattice, spinor.len(), Representation::Position);
        f.data[site * spinor.len()..(site + 1) * spinor.len()].copy_from_slice(spinor);
        Ok(f)
    }

    pub fn lattice(&self) -> QuotientLattice {
        self.lattice
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn spinor(&self, site: usize) -> &[C64] {
        &self.data[site * self.dim..(site + 1) * self.dim]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.par_iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidArgument("cannot normalize a zero field".into()));
        }
        self.data.par_iter_mut().for_each(|z| *z /= n);
        Ok(())
    }

    fn check_compatible(&self, other: &SpinorField) -> Result<()> {
        if self.lattice != other.lattice || self.dim != other.dim {
            return Err(Error::Shape("fields live on different lattices or dimensions".into()));
        }
        if self.representation != other.representation {
            return Err(Error::Shape("fields are in different representations".into()));
        }
        Ok(())
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &SpinorField) -> Result<C64> {
        self.check_compatible(other)?;
        Ok(self
            .data
            .par_iter()
            .zip(other.data.par_iter())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `||self - other||`.
    pub fn distance(&self, other: &SpinorField) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .data
            .par_iter()
            .zip(other.data.par_iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    /// Probability per site (summed over spin).
    pub fn site_weights(&self) -> Vec<f64> {
        self.data
            .par_chunks(self.dim)
            .map(|s| s.iter().map(|z| z.norm_sqr()).sum())
            .collect()
    }
}

fn flatten(m: &CMatrix) -> Vec<C64> {
    let d = m.nrows();
    (0..d * d).map(|i| m[(i / d, i % d)]).collect()
}

/// Precomputed kernels for one walk on one lattice.
pub struct Evolver {
    lattice: QuotientLattice,
    dim: usize,
    forward_hops: Vec<([i64; 3], Vec<C64>)>,
    inverse_hops: Vec<([i64; 3], Vec<C64>)>,
    /// `exp(-2 pi i j / N)`; the phase of hop `h` at momentum index `m` is
    /// entry `h . m mod N` in generator coordinates.
    twiddle: Vec<C64>,
    fft_forward: Arc<dyn Fft<f64>>,
    fft_inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Evolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Evolver")
            .field("lattice", &self.lattice)
            .field("dim", &self.dim)
            .finish()
    }
}

impl Evolver {
    pub fn new(kind: WalkKind, lattice: QuotientLattice) -> Self {
        Self::with_transitions(&transition_matrices(kind), lattice)
    }

    /// Kernels for an arbitrary transition-matrix set.
    ///
    /// Forward: `phi'(x) = sum_h A_h^dag phi(x + h)`; the momentum step
    /// multiplies by the assembled walk matrix.
    pub fn with_transitions(set: &TransitionMatrixSet, lattice: QuotientLattice) -> Self {
        let dim = set.internal_dim();
        let mut forward_hops = Vec::new();
        let mut inverse_hops = Vec::new();
        for (step, a) in set.iter() {
            let h = step.coords();
            forward_hops.push((h, flatten(&a.adjoint())));
            inverse_hops.push(([-h[0], -h[1], -h[2]], flatten(a)));
        }
        let mut planner = FftPlanner::new();
        let n = lattice.period();
        let twiddle = (0..n).map(|j| C64::from_polar(1.0, -2.0 * PI * j as f64 / n as f64)).collect();
        Evolver {
            lattice,
            dim,
            forward_hops,
            inverse_hops,
            twiddle,
            fft_forward: planner.plan_fft_forward(n),
            fft_inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn lattice(&self) -> QuotientLattice {
        self.lattice
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Walk matrix at momentum index `i`, as a `d x d` matrix.
    pub fn momentum_operator(&self, i: usize) -> CMatrix {
        let d = self.dim;
        CMatrix::from_row_slice(d, d, &self.momentum_block(i)[..d * d])
    }

    /// Row-major walk matrix at momentum index `i`, assembled from the hops.
    fn momentum_block(&self, i: usize) -> [C64; 16] {
        let d = self.dim;
        let n = self.lattice.period() as i64;
        let m = self.lattice.coords(i);
        let mut out = [ZERO; 16];
        for (h, a) in &self.forward_hops {
            let j = (h[0] * m[0] as i64 + h[1] * m[1] as i64 + h[2] * m[2] as i64).rem_euclid(n);
            let ph = self.twiddle[j as usize];
            for (o, x) in out[..d * d].iter_mut().zip(a) {
                *o += ph * x;
            }
        }
        out
    }

    fn check(&self, field: &SpinorField) -> Result<()> {
        if field.dim != self.dim {
            return Err(Error::Shape(format!(
                "field dimension {} does not match walk dimension {}",
                field.dim, self.dim
            )));
        }
        if field.lattice != self.lattice {
            return Err(Error::Shape("field lives on a different lattice".into()));
        }
        Ok(())
    }

    /// One step in whichever representation the field is in.
    pub fn step(&self, field: &SpinorField, direction: Direction) -> Result<SpinorField> {
        self.check(field)?;
        Ok(match field.representation {
            Representation::Position => self.step_position(field, direction),
            Representation::Momentum => self.step_momentum(field, direction),
        })
    }

    pub fn evolve(&self, field: &SpinorField, steps: usize, direction: Direction) -> Result<SpinorField> {
        self.check(field)?;
        if field.representation == Representation::Momentum {
            return Ok(self.step_momentum_n(field, direction, steps));
        }
        let mut f = field.clone();
        for _ in 0..steps {
            f = self.step(&f, direction)?;
        }
        Ok(f)
    }

    fn step_position(&self, field: &SpinorField, direction: Direction) -> SpinorField {
        let d = self.dim;
        let lat = self.lattice;
        let n = lat.period() as i64;
        let hops = match direction {
            Direction::Forward => &self.forward_hops,
            Direction::Inverse => &self.inverse_hops,
        };
        let src = &field.data;
        let mut out = vec![ZERO; src.len()];
        out.par_chunks_mut(d).enumerate().for_each(|(i, o)| {
            let [a, b, c] = lat.coords(i);
            for (off, m) in hops {
                let w = |x: usize, dx: i64| (x as i64 + dx).rem_euclid(n) as usize;
                let j = lat.index(w(a, off[0]), w(b, off[1]), w(c, off[2]));
                let x = &src[j * d..(j + 1) * d];
                for r in 0..d {
                    let mut acc = ZERO;
                    for q in 0..d {
                        acc += m[r * d + q] * x[q];
                    }
                    o[r] += acc;
                }
            }
        });
        SpinorField { data: out, ..field.clone_shape() }
    }

    fn step_momentum(&self, field: &SpinorField, direction: Direction) -> SpinorField {
        self.step_momentum_n(field, direction, 1)
    }

    fn step_momentum_n(&self, field: &SpinorField, direction: Direction, steps: usize) -> SpinorField {
        let d = self.dim;
        let mut out = field.data.clone();
        out.par_chunks_mut(d).enumerate().for_each(|(i, o)| {
            let m = self.momentum_block(i);
            let mut x = [ZERO; 4];
            for _ in 0..steps {
                x[..d].copy_from_slice(o);
                for r in 0..d {
                    let mut acc = ZERO;
                    for q in 0..d {
                        acc += match direction {
                            Direction::Forward => m[r * d + q] * x[q],
                            Direction::Inverse => m[q * d + r].conj() * x[q],
                        };
                    }
                    o[r] = acc;
                }
            }
        });
        SpinorField { data: out, ..field.clone_shape() }
    }

    pub fn to_momentum(&self, field: &SpinorField) -> Result<SpinorField> {
        self.check(field)?;
        if field.representation == Representation::Momentum {
            return Ok(field.clone());
        }
        let mut out = field.clone();
        fft3(&mut out.data, self.lattice.period(), self.dim, self.fft_inverse.as_ref());
        out.representation = Representation::Momentum;
        Ok(out)
    }

    pub fn to_position(&self, field: &SpinorField) -> Result<SpinorField> {
        self.check(field)?;
        if field.representation == Representation::Position {
            return Ok(field.clone());
        }
        let mut out = field.clone();
        fft3(&mut out.data, self.lattice.period(), self.dim, self.fft_forward.as_ref());
        out.representation = Representation::Position;
        Ok(out)
    }
}

impl SpinorField {
    fn clone_shape(&self) -> SpinorField {
        SpinorField {
            lattice: self.lattice,
            dim: self.dim,
            representation: self.representation,
            data: Vec::new(),
        }
    }
}

/// Unitary 3D transform of every spin component, scaled by `N^{-3/2}`.
fn fft3(data: &mut [C64], n: usize, dim: usize, fft: &dyn Fft<f64>) {
    let scale = (n as f64).powf(-1.5);
    for s in 0..dim {
        let mut buf: Vec<C64> = data.iter().skip(s).step_by(dim).copied().collect();
        for axis in 0..3 {
            fft_axis(&mut buf, n, axis, fft);
        }
        for (i, z) in buf.into_iter().enumerate() {
            data[i * dim + s] = z * scale;
        }
    }
}

fn fft_axis(buf: &mut [C64], n: usize, axis: usize, fft: &dyn Fft<f64>) {
    let scratch_len = fft.get_inplace_scratch_len();
    if axis == 2 {
        buf.par_chunks_mut(n * n).for_each(|plane| {
            let mut scratch = vec![ZERO; scratch_len];
            fft.process_with_scratch(plane, &mut scratch);
        });
        return;
    }
    let stride = if axis == 0 { n * n } else { n };
    let starts: Vec<usize> = (0..n * n * n).filter(|i| (i / stride) % n == 0).collect();
    let src: &[C64] = buf;
    let lines: Vec<Vec<C64>> = starts
        .par_iter()
        .map(|&st| {
            let mut line: Vec<C64> = (0..n).map(|j| src[st + j * stride]).collect();
            let mut scratch = vec![ZERO; scratch_len];
            fft.process_with_scratch(&mut line, &mut scratch);
            line
        })
        .collect();
    for (st, line) in starts.into_iter().zip(lines) {
        for (j, z) in line.into_iter().enumerate() {
            buf[st + j * stride] = z;
        }
    }
}

/// One step of `field` under `kind`, building the kernels on the fly.
pub fn step(field: &SpinorField, kind: WalkKind, direction: Direction) -> Result<SpinorField> {
    if field.dim != kind.dim() {
        return Err(Error::Shape(format!(
            "field dimension {} does not match walk dimension {}",
            field.dim,
            kind.dim()
        )));
    }
    Evolver::new(kind, field.lattice).step(field, direction)
}

/// `exp(-i k.x) spinor / N^{3/2}` in position space.
pub fn plane_wave_state(lattice: QuotientLattice, k: [f64; 3], spinor: &[C64]) -> Result<SpinorField> {
    let m = lattice
        .momentum_index(k)
        .ok_or(Error::Aliasing(k[0], k[1], k[2]))?;
    let norm: f64 = spinor.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("spinor norm {norm} is not 1")));
    }
    let n = lattice.period();
    let d = spinor.len();
    let amp = (n as f64).powf(-1.5);
    let mut data = vec![ZERO; lattice.sites() * d];
    data.par_chunks_mut(d).enumerate().for_each(|(i, o)| {
        let x = lattice.coords(i);
        // k.x = 2 pi m.x / N exactly on the grid
        let p = (m[0] * x[0] + m[1] * x[1] + m[2] * x[2]) % n;
        let phase = C64::from_polar(amp, -2.0 * PI * p as f64 / n as f64);
        for (o, s) in o.iter_mut().zip(spinor) {
            *o = phase * s;
        }
    });
    SpinorField::from_data(lattice, d, Representation::Position, data)
}

/// Unit eigenvector of the walk matrix on `branch`, gauge fixed.
///
/// The branch projector is applied to `e_0` (or, if that is nearly
/// annihilated, to the basis vector with the largest image), so the result is
/// smooth in `k` away from those switches. At `omega = 0` the two branches are
/// degenerate and `e_0` is returned.
pub fn branch_eigenvector(kind: WalkKind, k: [f64; 3], branch: Branch) -> Result<CVector> {
    let d = kind.dim();
    let projector = if kind.is_dirac() {
        let w = crate::walks::walk_matrix_raw(kind, k);
        let (vals, q) = normal_eigen(&w)?;
        let mut p = CMatrix::zeros(d, d);
        for (j, z) in vals.iter().enumerate() {
            let positive = z.arg() > 0.0;
            if positive == (branch == Branch::Positive) {
                let col = q.column(j);
                p += col * col.adjoint();
            }
        }
        p
    } else {
        let (_, n) = weyl_coefficients(kind.sign(), k);
        let s = norm3(n);
        if s < 1e-14 {
            let mut e0 = CVector::zeros(d);
            e0[0] = C64::new(1.0, 0.0);
            return Ok(e0);
        }
        // W u = exp(+i omega) u  <=>  (n/|n|).tau u = -u
        let sign = match branch {
            Branch::Positive => -1.0,
            Branch::Negative => 1.0,
        };
        let nt = dot_pauli(n.map(|x| x * sign / s), &kind.pauli_set());
        (CMatrix::identity(2, 2) + nt) * C64::new(0.5, 0.0)
    };
    let mut best = projector.column(0).into_owned();
    if best.norm() < 0.1 {
        for j in 1..d {
            let col = projector.column(j).into_owned();
            if col.norm() > best.norm() + 1e-12 {
                best = col;
            }
        }
    }
    let norm = best.norm();
    if norm < 1e-12 {
        return Err(Error::DegenerateDirection);
    }
    let mut v = best / C64::new(norm, 0.0);
    fix_gauge(&mut v);
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavePacketSpec {
    pub k0: MomentumVector,
    pub sigma_k: f64,
    pub branch: Branch,
    pub kind: WalkKind,
    /// Packet center in generator coordinates.
    pub center: [i64; 3],
}

impl WavePacketSpec {
    pub fn new(k0: [f64; 3], sigma_k: f64, branch: Branch, kind: WalkKind) -> Result<Self> {
        let spec = WavePacketSpec {
            k0: MomentumVector::new(k0)?,
            sigma_k,
            branch,
            kind,
            center: [0; 3],
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_center(mut self, center: [i64; 3]) -> Self {
        self.center = center;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_k > 0.0 && self.sigma_k < PI / 4.0) {
            return Err(Error::InvalidPacket(format!(
                "sigma_k = {} must lie in (0, pi/4)",
                self.sigma_k
            )));
        }
        MomentumVector::new(self.k0.get())?;
        Ok(())
    }

    /// Packet amplitude at the nearest point of the zone boundary,
    /// `exp(-d^2 / (4 sigma_k^2))`.
    pub fn boundary_tail(&self) -> f64 {
        let dist = distance_to_boundary(self.k0.get()).max(0.0);
        (-dist * dist / (4.0 * self.sigma_k * self.sigma_k)).exp()
    }
}

/// Gaussian packet in the momentum representation.
///
/// Amplitude `exp(-|k - k0|^2 / (4 sigma_k^2))` times the branch spinor at
/// `k`, with each spinor's phase aligned to the spinor at `k0` so the field
/// is smooth across the packet.
pub fn gaussian_packet_momentum(spec: &WavePacketSpec, lattice: QuotientLattice) -> Result<SpinorField> {
    spec.validate()?;
    let tail = spec.boundary_tail();
    if tail > PACKET_TAIL_BOUND {
        return Err(Error::LatticeTooSmall { tail, bound: PACKET_TAIL_BOUND });
    }
    let d = spec.kind.dim();
    let n = lattice.period();
    let k0 = spec.k0.get();
    let s2 = 4.0 * spec.sigma_k * spec.sigma_k;
    let c0 = spec.center;
    let reference = branch_eigenvector(spec.kind, k0, spec.branch).ok();
    let spinors: Vec<Result<Vec<C64>>> = (0..lattice.sites())
        .into_par_iter()
        .map(|i| {
            let m = lattice.coords(i);
            let k = lattice.momentum(m).get();
            let dk = fold([k[0] - k0[0], k[1] - k0[1], k[2] - k0[2]]);
            let g = (-(dk[0] * dk[0] + dk[1] * dk[1] + dk[2] * dk[2]) / s2).exp();
            if g < 1e-300 {
                return Ok(vec![ZERO; d]);
            }
            let mut u = branch_eigenvector(spec.kind, k, spec.branch)?;
            if let Some(u0) = &reference {
                let ov = u0.dotc(&u);
                if ov.norm() > 1e-8 {
                    u *= ov.conj() / ov.norm();
                }
            }
            // translation to the center: exp(+i k.x0)
            let p = (m[0] as i64 * c0[0] + m[1] as i64 * c0[1] + m[2] as i64 * c0[2])
                .rem_euclid(n as i64);
            let phase = C64::from_polar(g, 2.0 * PI * p as f64 / n as f64);
            Ok(u.iter().map(|z| z * phase).collect())
        })
        .collect();
    let mut data = Vec::with_capacity(lattice.sites() * d);
    for s in spinors {
        data.extend(s?);
    }
    let mut f = SpinorField::from_data(lattice, d, Representation::Momentum, data)?;
    f.normalize()?;
    Ok(f)
}

/// Gaussian packet in position space.
pub fn gaussian_packet(spec: &WavePacketSpec, lattice: QuotientLattice) -> Result<SpinorField> {
    let f = gaussian_packet_momentum(spec, lattice)?;
    Evolver::new(spec.kind, lattice).to_position(&f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub norm: f64,
    pub mean_position: [f64; 3],
    pub spread: [f64; 3],
    pub mean_momentum: [f64; 3],
}

/// Moments of a position-space field in Cartesian coordinates.
///
/// The periodic quotient has no global origin, so each generator coordinate
/// is first centred on its circular mean and every site is mapped to its
/// minimum image about that centre. Cartesian moments are then taken over the
/// unwrapped positions. The mean momentum is the `|phi_hat|^2`-weighted mean
/// of the folded grid momenta.
pub fn observables(field: &SpinorField) -> Result<Observables> {
    if field.representation != Representation::Position {
        return Err(Error::Shape("observables need a position-space field".into()));
    }
    let lat = field.lattice;
    let n = lat.period() as f64;
    let w = field.site_weights();
    let norm2: f64 = w.iter().sum();
    if norm2 == 0.0 {
        return Err(Error::InvalidArgument("zero field".into()));
    }
    let mut centre = [0.0; 3];
    for j in 0..3 {
        let (s, c) = w
            .par_iter()
            .enumerate()
            .map(|(i, &p)| {
                let t = 2.0 * PI * lat.coords(i)[j] as f64 / n;
                (p * t.sin(), p * t.cos())
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        centre[j] = s.atan2(c) * n / (2.0 * PI);
    }
    let unwrap = |i: usize| {
        let x = lat.coords(i);
        let g = [0, 1, 2].map(|j| {
            let dx = x[j] as f64 - centre[j];
            centre[j] + dx - n * (dx / n).round()
        });
        to_cartesian_f(g)
    };
    let sum3 = |f: &(dyn Fn(usize, f64) -> [f64; 3] + Sync)| {
        w.par_iter()
            .enumerate()
            .map(|(i, &p)| f(i, p))
            .reduce(|| [0.0; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]])
    };
    let mean = sum3(&|i, p| unwrap(i).map(|x| x * p / norm2));
    let var = sum3(&|i, p| {
        let x = unwrap(i);
        [0, 1, 2].map(|a| p * (x[a] - mean[a]).powi(2) / norm2)
    });
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_inverse(lat.period());
    let mut mom = field.data.clone();
    fft3(&mut mom, lat.period(), field.dim, fft.as_ref());
    let wk: Vec<f64> = mom
        .par_chunks(field.dim)
        .map(|s| s.iter().map(|z| z.norm_sqr()).sum())
        .collect();
    let norm_k: f64 = wk.iter().sum();
    let mean_momentum = wk
        .par_iter()
        .enumerate()
        .map(|(i, &p)| lat.momentum(lat.coords(i)).get().map(|k| k * p / norm_k))
        .reduce(|| [0.0; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]]);
    Ok(Observables {
        norm: norm2.sqrt(),
        mean_position: mean,
        spread: var.map(f64::sqrt),
        mean_momentum,
    })
}

/// One row of a trajectory table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: usize,
    pub norm: f64,
    pub mean: [f64; 3],
    pub spread: [f64; 3],
}

/// Evolves `field` for `steps` steps in momentum space and records the
/// observables at every time, including `t = 0`.
pub fn trajectory(evolver: &Evolver, field: &SpinorField, steps: usize) -> Result<Vec<TrajectoryRow>> {
    let mut f = evolver.to_momentum(field)?;
    let mut rows = Vec::with_capacity(steps + 1);
    for t in 0..=steps {
        let o = observables(&evolver.to_position(&f)?)?;
        rows.push(TrajectoryRow { t, norm: o.norm, mean: o.mean_position, spread: o.spread });
        if t < steps {
            f = evolver.step(&f, Direction::Forward)?;
        }
    }
    Ok(rows)
}

/// Least-squares slope of the mean position against time.
pub fn drift_velocity(rows: &[TrajectoryRow]) -> [f64; 3] {
    let n = rows.len() as f64;
    let tm = rows.iter().map(|r| r.t as f64).sum::<f64>() / n;
    let stt: f64 = rows.iter().map(|r| (r.t as f64 - tm).powi(2)).sum();
    [0, 1, 2].map(|a| {
        let xm = rows.iter().map(|r| r.mean[a]).sum::<f64>() / n;
        rows.iter().map(|r| (r.t as f64 - tm) * (r.mean[a] - xm)).sum::<f64>() / stt
    })
}

/// Sites within graph distance `radius` of `origin` on the Cayley graph
/// (eight signed generators), by breadth-first search.
pub fn graph_ball(lattice: QuotientLattice, origin: usize, radius: usize) -> Vec<bool> {
    let mut dist = vec![usize::MAX; lattice.sites()];
    let mut queue = VecDeque::new();
    dist[origin] = 0;
    queue.push_back(origin);
    while let Some(i) = queue.pop_front() {
        if dist[i] == radius {
            continue;
        }
        for s in Step::SIGNED {
            let j = lattice.translate(i, s.coords());
            if dist[j] == usize::MAX {
                dist[j] = dist[i] + 1;
                queue.push_back(j);
            }
        }
    }
    dist.into_iter().map(|d| d <= radius).collect()
}

const TAG_POSITION: u32 = 0;
const TAG_MOMENTUM: u32 = 1;

/// Writes a snapshot: `u32 N, u32 d, u32 tag` (0 position, 1 momentum), then
/// `(re, im)` as `f32` pairs in `(site, spin)` order, all little-endian.
pub fn write_snapshot<W: Write>(field: &SpinorField, mut out: W) -> std::io::Result<()> {
    let tag = match field.representation {
        Representation::Position => TAG_POSITION,
        Representation::Momentum => TAG_MOMENTUM,
    };
    out.write_all(&(field.lattice.period() as u32).to_le_bytes())?;
    out.write_all(&(field.dim as u32).to_le_bytes())?;
    out.write_all(&tag.to_le_bytes())?;
    let mut buf = Vec::with_capacity(field.data.len() * 8);
    for z in &field.data {
        buf.extend_from_slice(&(z.re as f32).to_le_bytes());
        buf.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    out.write_all(&buf)
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<SpinorField> {
    let io = |e: std::io::Error| Error::InvalidArgument(format!("snapshot: {e}"));
    let mut word = [0u8; 4];
    let mut header = [0u32; 3];
    for h in header.iter_mut() {
        input.read_exact(&mut word).map_err(io)?;
        *h = u32::from_le_bytes(word);
    }
    let lattice = QuotientLattice::new(header[0] as usize)?;
    let representation = match header[2] {
        TAG_POSITION => Representation::Position,
        TAG_MOMENTUM => Representation::Momentum,
        t => return Err(Error::InvalidArgument(format!("snapshot: unknown tag {t}"))),
    };
    let len = lattice.sites() * header[1] as usize;
    let mut bytes = vec![0u8; len * 8];
    input.read_exact(&mut bytes).map_err(io)?;
    let data = bytes
        .chunks_exact(8)
        .map(|b| {
            let re = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            let im = f32::from_le_bytes([b[4], b[5], b[6], b[7]]);
            C64::new(re as f64, im as f64)
        })
        .collect();
    SpinorField::from_data(lattice, header[1] as usize, representation, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use crate::walks::{dispersion, walk_matrix_raw, Mass};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lattice(n: usize) -> QuotientLattice {
        QuotientLattice::new(n).unwrap()
    }

    fn random_field(lat: QuotientLattice, d: usize, seed: u64) -> SpinorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..lat.sites() * d)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let mut f = SpinorField::from_data(lat, d, Representation::Position, data).unwrap();
        f.normalize().unwrap();
        f
    }

    fn kinds() -> Vec<WalkKind> {
        vec![
            WalkKind::WeylPlus,
            WalkKind::WeylMinus,
            WalkKind::ZPlus,
            WalkKind::ZMinus,
            WalkKind::DiracPlus(Mass::new(0.3).unwrap()),
            WalkKind::DiracMinus(Mass::new(0.6).unwrap()),
        ]
    }

    #[test]
    fn uniform_plane_wave() {
        let lat = lattice(6);
        let f = plane_wave_state(lat, [0.0; 3], &[c(1.0, 0.0), ZERO]).unwrap();
        assert!((f.norm() - 1.0).abs() < 1e-12);
        let first = f.spinor(0)[0];
        assert!(f.data().chunks(2).all(|s| (s[0] - first).norm() < 1e-15 && s[1] == ZERO));
    }

    #[test]
    fn plane_wave_is_eigenvector_of_position_step() {
        let lat = lattice(4);
        let u = [c(0.6, 0.0), c(0.0, 0.8)];
        for kind in [WalkKind::WeylPlus, WalkKind::ZMinus] {
            let ev = Evolver::new(kind, lat);
            for i in 0..lat.sites() {
                let k = lat.momentum(lat.coords(i)).get();
                let f = plane_wave_state(lat, k, &u).unwrap();
                let g = ev.step(&f, Direction::Forward).unwrap();
                let wu = walk_matrix_raw(kind, k) * CVector::from_row_slice(&u);
                let spinor: Vec<C64> = wu.iter().copied().collect();
                let expect = plane_wave_state(lat, k, &spinor).unwrap();
                assert!(g.distance(&expect).unwrap() < 1e-13);
            }
        }
    }

    #[test]
    fn distinct_plane_waves_are_orthogonal() {
        let lat = lattice(5);
        let u = [c(1.0, 0.0), ZERO];
        let a = plane_wave_state(lat, lat.momentum([1, 0, 2]).get(), &u).unwrap();
        let b = plane_wave_state(lat, lat.momentum([3, 4, 0]).get(), &u).unwrap();
        assert!(a.inner(&b).unwrap().norm() < 1e-12);
    }

    #[test]
    fn off_grid_momentum_is_aliasing() {
        let lat = lattice(8);
        let r = plane_wave_state(lat, [0.1, 0.0, 0.0], &[c(1.0, 0.0), ZERO]);
        assert!(matches!(r, Err(Error::Aliasing(..))));
    }

    #[test]
    fn single_site_spreads_to_eight_neighbours() {
        let lat = lattice(8);
        let origin = lat.index(4, 4, 4);
        let f = SpinorField::point_source(lat, origin, &[c(1.0, 0.0), ZERO]).unwrap();
        let g = step(&f, WalkKind::WeylPlus, Direction::Forward).unwrap();
        assert!((g.norm() - 1.0).abs() < 1e-14);
        let support: Vec<usize> = g
            .site_weights()
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, _)| i)
            .collect();
        let mut expect: Vec<usize> = Step::SIGNED.iter().map(|s| lat.translate(origin, s.coords())).collect();
        expect.sort();
        // with spinor (1,0) only the four hops whose matrix has a nonzero first column fire
        assert!(support.iter().all(|i| expect.contains(i)));
        let f = SpinorField::point_source(lat, origin, &[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let g = step(&f, WalkKind::WeylPlus, Direction::Forward).unwrap();
        let support: Vec<usize> = g
            .site_weights()
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(support, expect);
    }

    #[test]
    fn forward_then_inverse_is_identity() {
        let lat = lattice(6);
        for kind in kinds() {
            let f = random_field(lat, kind.dim(), 1);
            let ev = Evolver::new(kind, lat);
            let g = ev.step(&ev.step(&f, Direction::Forward).unwrap(), Direction::Inverse).unwrap();
            assert!(f.distance(&g).unwrap() < 1e-12);
        }
    }

    #[test]
    fn plane_wave_eigenphase() {
        let lat = lattice(8);
        let ev = Evolver::new(WalkKind::WeylPlus, lat);
        for m in [[1, 0, 0], [2, 3, 1], [5, 1, 7]] {
            let k = lat.momentum(m).get();
            let omega = dispersion(WalkKind::WeylPlus, k).unwrap();
            for (branch, sign) in [(Branch::Positive, 1.0), (Branch::Negative, -1.0)] {
                let u: Vec<C64> = branch_eigenvector(WalkKind::WeylPlus, k, branch).unwrap().iter().copied().collect();
                let f = plane_wave_state(lat, k, &u).unwrap();
                let g = ev.step(&f, Direction::Forward).unwrap();
                let phase = C64::from_polar(1.0, sign * omega);
                let expect = SpinorField::from_data(
                    lat,
                    2,
                    Representation::Position,
                    f.data().iter().map(|z| z * phase).collect(),
                )
                .unwrap();
                assert!(g.distance(&expect).unwrap() < 1e-12);
            }
        }
    }

    #[test]
    fn position_and_momentum_steps_agree() {
        let lat = lattice(6);
        for kind in kinds() {
            let ev = Evolver::new(kind, lat);
            let f = random_field(lat, kind.dim(), 7);
            for dir in [Direction::Forward, Direction::Inverse] {
                let a = ev.to_momentum(&ev.step(&f, dir).unwrap()).unwrap();
                let b = ev.step(&ev.to_momentum(&f).unwrap(), dir).unwrap();
                assert!(a.distance(&b).unwrap() < 1e-10, "{}", kind.name());
            }
        }
    }

    #[test]
    fn transform_matches_direct_sum() {
        let lat = lattice(3);
        let f = random_field(lat, 2, 3);
        let ev = Evolver::new(WalkKind::WeylPlus, lat);
        let g = ev.to_momentum(&f).unwrap();
        for mi in 0..lat.sites() {
            let m = lat.coords(mi);
            let mut acc = [ZERO; 2];
            for xi in 0..lat.sites() {
                let x = lat.coords(xi);
                let p = (m[0] * x[0] + m[1] * x[1] + m[2] * x[2]) as f64;
                let e = C64::from_polar(27f64.powf(-0.5), 2.0 * PI * p / 3.0);
                acc[0] += e * f.spinor(xi)[0];
                acc[1] += e * f.spinor(xi)[1];
            }
            assert!((acc[0] - g.spinor(mi)[0]).norm() < 1e-13);
            assert!((acc[1] - g.spinor(mi)[1]).norm() < 1e-13);
        }
        let back = ev.to_position(&g).unwrap();
        assert!(back.distance(&f).unwrap() < 1e-13);
    }

    #[test]
    fn long_run_norm_drift() {
        let lat = lattice(4);
        let ev = Evolver::new(WalkKind::DiracPlus(Mass::new(0.2).unwrap()), lat);
        let mut f = random_field(lat, 4, 9);
        for _ in 0..1000 {
            let g = ev.step(&f, Direction::Forward).unwrap();
            assert!((g.norm() - f.norm()).abs() < 1e-12);
            f = g;
        }
        assert!((f.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn light_cone_small() {
        let lat = lattice(16);
        let origin = lat.index(8, 8, 8);
        let ev = Evolver::new(WalkKind::WeylMinus, lat);
        let mut f = SpinorField::point_source(lat, origin, &[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        for t in 1..=5 {
            f = ev.step(&f, Direction::Forward).unwrap();
            let ball = graph_ball(lat, origin, t);
            for (i, s) in f.data().chunks(2).enumerate() {
                if !ball[i] {
                    assert!(s[0] == ZERO && s[1] == ZERO);
                }
            }
        }
    }

    #[test]
    fn graph_ball_sizes() {
        let lat = lattice(16);
        let o = lat.index(0, 0, 0);
        let count = |r| graph_ball(lat, o, r).iter().filter(|&&b| b).count();
        assert_eq!(count(0), 1);
        assert_eq!(count(1), 9);
        // BCC coordination: 1 + 8 + 26 (6 at (±2,0,0)-type + 12 + 8 ... ) counted independently
        let mut seen = std::collections::HashSet::new();
        for a in Step::SIGNED {
            for b in Step::SIGNED {
                let x = crate::cayley::to_cartesian(a.coords());
                let y = crate::cayley::to_cartesian(b.coords());
                seen.insert([(x[0] + y[0]) as i64, (x[1] + y[1]) as i64, (x[2] + y[2]) as i64]);
            }
            let x = crate::cayley::to_cartesian(a.coords());
            seen.insert([x[0] as i64, x[1] as i64, x[2] as i64]);
        }
        assert_eq!(count(2), seen.len());
    }

    #[test]
    fn packet_at_rest() {
        let lat = lattice(16);
        let spec = WavePacketSpec::new([0.0; 3], 0.2, Branch::Positive, WalkKind::WeylPlus).unwrap();
        let f = gaussian_packet(&spec, lat).unwrap();
        assert!((f.norm() - 1.0).abs() < 1e-12);
        let o = observables(&f).unwrap();
        assert!(norm3(o.mean_momentum) < 1e-10);
        assert!(norm3(o.mean_position) < 1.0);
    }

    #[test]
    fn packet_mean_is_its_center() {
        let lat = lattice(24);
        let spec = WavePacketSpec::new([0.2, 0.1, 0.0], 0.2, Branch::Positive, WalkKind::WeylPlus)
            .unwrap()
            .with_center([3, -2, 5]);
        let f = gaussian_packet(&spec, lat).unwrap();
        let o = observables(&f).unwrap();
        let c = crate::cayley::to_cartesian([3, -2, 5]);
        assert!(norm3(crate::linalg::sub3(o.mean_position, c)) < 1.0, "{:?}", o.mean_position);
    }

    #[test]
    fn packet_validation() {
        assert!(matches!(
            WavePacketSpec::new([0.0; 3], 1.0, Branch::Positive, WalkKind::WeylPlus),
            Err(Error::InvalidPacket(_))
        ));
        let spec = WavePacketSpec::new([2.0, 0.0, 0.0], 0.5, Branch::Positive, WalkKind::WeylPlus).unwrap();
        assert!(matches!(
            gaussian_packet(&spec, lattice(8)),
            Err(Error::LatticeTooSmall { .. })
        ));
    }

    #[test]
    fn branch_eigenvectors_are_continuous() {
        let lat = lattice(32);
        let k0 = [0.1, 0.0, 0.0];
        for kind in [WalkKind::WeylPlus, WalkKind::DiracMinus(Mass::new(0.1).unwrap())] {
            let m0 = lat.momentum_index(lat.momentum([1, 1, 0]).get()).unwrap();
            let _ = k0;
            for axis in 0..3 {
                let mut m1 = m0;
                m1[axis] += 1;
                let ka = lat.momentum(m0).get();
                let kb = lat.momentum(m1).get();
                for branch in [Branch::Positive, Branch::Negative] {
                    let a = branch_eigenvector(kind, ka, branch).unwrap();
                    let b = branch_eigenvector(kind, kb, branch).unwrap();
                    let ov = a.dotc(&b);
                    assert!(ov.re > 0.0, "{}: {ov}", kind.name());
                }
            }
        }
    }

    #[test]
    fn branch_eigenvector_eigenvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for kind in kinds() {
            for _ in 0..50 {
                let k = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let omega = dispersion(kind, k).unwrap();
                let w = walk_matrix_raw(kind, k);
                for (branch, s) in [(Branch::Positive, 1.0), (Branch::Negative, -1.0)] {
                    let u = branch_eigenvector(kind, k, branch).unwrap();
                    let r = &w * &u - &u * C64::from_polar(1.0, s * omega);
                    assert!(r.norm() < 1e-10, "{}", kind.name());
                }
            }
        }
    }

    #[test]
    fn uniform_observables() {
        let lat = lattice(8);
        let a = plane_wave_state(lat, [0.0; 3], &[c(1.0, 0.0), ZERO]).unwrap();
        let b = plane_wave_state(lat, lat.momentum([2, 5, 1]).get(), &[ZERO, c(0.0, 1.0)]).unwrap();
        let (oa, ob) = (observables(&a).unwrap(), observables(&b).unwrap());
        for i in 0..3 {
            assert!((oa.spread[i] - ob.spread[i]).abs() < 1e-9);
        }
        assert!(oa.spread.iter().all(|&s| s > 1.0));
    }

    #[test]
    fn snapshot_round_trip() {
        let lat = lattice(4);
        let f = random_field(lat, 2, 5);
        let mut buf = Vec::new();
        write_snapshot(&f, &mut buf).unwrap();
        assert_eq!(buf.len(), 12 + lat.sites() * 2 * 8);
        assert_eq!(&buf[0..4], &4u32.to_le_bytes());
        let g = read_snapshot(&buf[..]).unwrap();
        assert_eq!(g.representation(), Representation::Position);
        assert!(f.distance(&g).unwrap() < 1e-6);
        assert!(read_snapshot(&buf[..20]).is_err());
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let lat = lattice(4);
        let f = random_field(lat, 2, 1);
        assert!(matches!(
            step(&f, WalkKind::DiracPlus(Mass::new(0.1).unwrap()), Direction::Forward),
            Err(Error::Shape(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn steps_preserve_norm(seed in any::<u64>(), which in 0usize..6, n in 2usize..6) {
            let kind = kinds()[which];
            let lat = lattice(n);
            let f = random_field(lat, kind.dim(), seed);
            let g = step(&f, kind, Direction::Forward).unwrap();
            prop_assert!((g.norm() - 1.0).abs() < 1e-12);
        }
    }
}
