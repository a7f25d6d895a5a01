//! Deformed Lorentz action on the Brillouin zone.
//!
//! A Lorentz element `L` acts on `k` through the null four-vector
//! `n(k) = (sin omega, n_k)`: the image `k'` satisfies
//! `p(k') = L p(k)` with `p = f n` for a positive gauge function `f`.
//! Since `p` is null and `L` is orthochronous, the spatial equations fix the
//! time component, so `k'` is found by Newton iteration on three equations.
//!
//! The direction-only problem `n(k') = lambda L n(k)` has a one-parameter
//! family of solutions, so a gauge must be chosen. [`Gauge::Phase`] uses
//! `f = omega / sin omega`, i.e. `p = (omega, omega n / |n|)`, whose spatial
//! part is the Bloch vector of the interpolating Hamiltonian. [`Gauge::Unit`]
//! uses `f = 1`. Rotations give the same `k'` in every gauge; boosts do not.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::cayley::{fold, in_brillouin, MomentumVector};
use crate::error::{Error, Result};
use crate::linalg::{cross3, norm3, scale3, sub3};
use crate::walks::{weyl_coefficients, WalkKind};

/// Newton iteration cap.
pub const NEWTON_MAX_ITERATIONS: usize = 100;
/// Finite-difference step of the Newton Jacobian.
pub const JACOBIAN_STEP: f64 = 1e-6;
/// Required residual of a converged transform.
pub const TRANSFORM_TOLERANCE: f64 = 1e-10;
/// Default number of orbit samples.
pub const DEFAULT_ORBIT_SAMPLES: usize = 256;

const METRIC: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullFourVector {
    pub time: f64,
    pub space: [f64; 3],
}

impl NullFourVector {
    pub fn minkowski_norm(&self) -> f64 {
        self.time * self.time - self.space.iter().map(|x| x * x).sum::<f64>()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.time, self.space[0], self.space[1], self.space[2]]
    }
}

fn require_weyl(kind: WalkKind) -> Result<()> {
    if kind.is_dirac() {
        Err(Error::UnsupportedKind("the deformed Lorentz action", "two-component"))
    } else {
        Ok(())
    }
}

/// `(sin omega(k), n_k)`.
pub fn null_vector(kind: WalkKind, k: [f64; 3]) -> Result<NullFourVector> {
    require_weyl(kind)?;
    let k = MomentumVector::new(k)?.get();
    let (_, n) = weyl_coefficients(kind.sign(), k);
    // sin omega = |n| on the unit sphere d^2 + |n|^2 = 1
    Ok(NullFourVector { time: norm3(n), space: n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LorentzKind {
    Identity,
    Rotation { axis: [f64; 3], angle: f64 },
    Boost { axis: [f64; 3], rapidity: f64 },
    Composite,
}

/// A proper orthochronous Lorentz transformation acting on `(t, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzElement {
    pub matrix: [[f64; 4]; 4],
    pub kind: LorentzKind,
}

fn unit_axis(axis: [f64; 3]) -> Result<[f64; 3]> {
    let n = norm3(axis);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::InvalidLorentz("axis must be a nonzero finite vector".into()));
    }
    Ok(scale3(1.0 / n, axis))
}

fn matmul(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|l| a[i][l] * b[l][j]).sum();
        }
    }
    out
}

fn det4(m: &[[f64; 4]; 4]) -> f64 {
    let mat = nalgebra::Matrix4::from_fn(|i, j| m[i][j]);
    mat.determinant()
}

impl LorentzElement {
    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        LorentzElement { matrix: m, kind: LorentzKind::Identity }
    }

    /// Validates `matrix` as a proper orthochronous Lorentz transformation.
    pub fn new(matrix: [[f64; 4]; 4]) -> Result<Self> {
        let el = LorentzElement { matrix, kind: LorentzKind::Composite };
        el.validate()?;
        Ok(el)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.matrix;
        if m.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidLorentz("non-finite entry".into()));
        }
        let mut defect = 0.0_f64;
        for i in 0..4 {
            for j in 0..4 {
                let g: f64 = (0..4).map(|l| m[l][i] * METRIC[l] * m[l][j]).sum();
                let target = if i == j { METRIC[i] } else { 0.0 };
                defect = defect.max((g - target).abs());
            }
        }
        let scale = m.iter().flatten().fold(1.0_f64, |a, x| a.max(x.abs()));
        if defect > 1e-12 * scale * scale {
            return Err(Error::InvalidLorentz(format!("metric defect {defect:.3e}")));
        }
        if (det4(m) - 1.0).abs() > 1e-9 * scale.powi(4) {
            return Err(Error::InvalidLorentz("determinant is not +1".into()));
        }
        if m[0][0] < 1.0 - 1e-12 {
            return Err(Error::InvalidLorentz("not orthochronous".into()));
        }
        Ok(())
    }

    /// Rotation by `angle` about `axis` (right-handed).
    pub fn rotation(axis: [f64; 3], angle: f64) -> Result<Self> {
        let u = unit_axis(axis)?;
        let (s, c) = angle.sin_cos();
        let mut m = Self::identity().matrix;
        for i in 0..3 {
            for j in 0..3 {
                let eps = cross3(u, [(j == 0) as u8 as f64, (j == 1) as u8 as f64, (j == 2) as u8 as f64])[i];
                m[i + 1][j + 1] = c * (i == j) as u8 as f64 + s * eps + (1.0 - c) * u[i] * u[j];
            }
        }
        Ok(LorentzElement { matrix: m, kind: LorentzKind::Rotation { axis: u, angle } })
    }

    /// Boost with `rapidity` along `axis`.
    pub fn boost(axis: [f64; 3], rapidity: f64) -> Result<Self> {
        let u = unit_axis(axis)?;
        if !rapidity.is_finite() {
            return Err(Error::InvalidLorentz("non-finite rapidity".into()));
        }
        let (ch, sh) = (rapidity.cosh(), rapidity.sinh());
        let mut m = Self::identity().matrix;
        m[0][0] = ch;
        for i in 0..3 {
            m[0][i + 1] = sh * u[i];
            m[i + 1][0] = sh * u[i];
            for j in 0..3 {
                m[i + 1][j + 1] = (i == j) as u8 as f64 + (ch - 1.0) * u[i] * u[j];
            }
        }
        Ok(LorentzElement { matrix: m, kind: LorentzKind::Boost { axis: u, rapidity } })
    }

    /// `self * other` (apply `other` first).
    pub fn compose(&self, other: &LorentzElement) -> LorentzElement {
        LorentzElement { matrix: matmul(&self.matrix, &other.matrix), kind: LorentzKind::Composite }
    }

    /// `eta L^T eta`.
    pub fn inverse(&self) -> LorentzElement {
        let mut m = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] = METRIC[i] * self.matrix[j][i] * METRIC[j];
            }
        }
        let kind = match self.kind {
            LorentzKind::Rotation { axis, angle } => LorentzKind::Rotation { axis, angle: -angle },
            LorentzKind::Boost { axis, rapidity } => LorentzKind::Boost { axis, rapidity: -rapidity },
            k => k,
        };
        LorentzElement { matrix: m, kind }
    }

    pub fn apply(&self, v: [f64; 4]) -> [f64; 4] {
        [0, 1, 2, 3].map(|i| (0..4).map(|j| self.matrix[i][j] * v[j]).sum())
    }
}

/// Positive gauge function `f` in `p = f n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Gauge {
    /// `f = omega / sin omega`: `p = (omega, omega n / |n|)`.
    #[default]
    Phase,
    /// `f = 1`: `p = n`.
    Unit,
}

impl Gauge {
    /// Largest admissible `|p|`; targets beyond it have no preimage in the zone.
    fn bound(self) -> f64 {
        match self {
            Gauge::Phase => PI,
            Gauge::Unit => 1.0,
        }
    }
}

/// `p(k)` as a four-vector.
pub fn gauge_vector(kind: WalkKind, k: [f64; 3], gauge: Gauge) -> [f64; 4] {
    let (d, n) = weyl_coefficients(kind.sign(), k);
    let s = norm3(n);
    match gauge {
        Gauge::Unit => [s, n[0], n[1], n[2]],
        Gauge::Phase => {
            let omega = s.atan2(d);
            // omega / sin omega -> 1 at the apex
            let f = if s < 1e-300 { 1.0 } else { omega / s };
            [omega, f * n[0], f * n[1], f * n[2]]
        }
    }
}

fn spatial(kind: WalkKind, k: [f64; 3], gauge: Gauge) -> [f64; 3] {
    let p = gauge_vector(kind, k, gauge);
    [p[1], p[2], p[3]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformResult {
    pub k: MomentumVector,
    pub iterations: usize,
    pub residual: f64,
}

fn solve3(j: &[[f64; 3]; 3], r: [f64; 3]) -> Option<[f64; 3]> {
    let m = nalgebra::Matrix3::from_fn(|a, b| j[a][b]);
    let x = m.lu().solve(&nalgebra::Vector3::new(r[0], r[1], r[2]))?;
    if x.iter().all(|v| v.is_finite()) {
        Some([x[0], x[1], x[2]])
    } else {
        None
    }
}

fn check_point(kind: WalkKind, k: [f64; 3]) -> Result<()> {
    require_weyl(kind)?;
    MomentumVector::new(k)?;
    let (d, n) = weyl_coefficients(kind.sign(), k);
    let omega = norm3(n).atan2(d);
    if omega < 1e-12 {
        return Err(Error::DegenerateDirection);
    }
    if PI - omega < 1e-12 {
        return Err(Error::BranchAmbiguity(omega));
    }
    Ok(())
}

/// Solves `p(k') = L p(k)` for `k'` in the zone.
pub fn deformed_transform(
    kind: WalkKind,
    k: [f64; 3],
    lorentz: &LorentzElement,
    gauge: Gauge,
) -> Result<TransformResult> {
    deformed_transform_from(kind, k, lorentz, gauge, None)
}

/// As [`deformed_transform`], starting Newton from `guess` if given.
/// Without a guess the start is the spatial part of `L p(k)`, folded.
pub fn deformed_transform_from(
    kind: WalkKind,
    k: [f64; 3],
    lorentz: &LorentzElement,
    gauge: Gauge,
    guess: Option<[f64; 3]>,
) -> Result<TransformResult> {
    check_point(kind, k)?;
    lorentz.validate()?;
    let p = lorentz.apply(gauge_vector(kind, k, gauge));
    let target = [p[1], p[2], p[3]];
    if norm3(target) >= gauge.bound() {
        return Err(Error::OutOfDomain { iterations: 0, residual: norm3(target) - gauge.bound() });
    }
    let mut x = fold(guess.unwrap_or(target));
    let f = |x: [f64; 3]| sub3(spatial(kind, x, gauge), target);
    let mut r = f(x);
    let mut rn = norm3(r);
    for it in 0..=NEWTON_MAX_ITERATIONS {
        let done = |x: [f64; 3], it: usize, rn: f64| -> Result<TransformResult> {
            Ok(TransformResult { k: MomentumVector::new(fold(x))?, iterations: it, residual: rn })
        };
        if rn == 0.0 {
            return done(x, it, rn);
        }
        if it == NEWTON_MAX_ITERATIONS {
            if rn < TRANSFORM_TOLERANCE {
                return done(x, it, rn);
            }
            break;
        }
        let mut jac = [[0.0; 3]; 3];
        for b in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[b] += JACOBIAN_STEP;
            xm[b] -= JACOBIAN_STEP;
            let (fp, fm) = (f(xp), f(xm));
            for a in 0..3 {
                jac[a][b] = (fp[a] - fm[a]) / (2.0 * JACOBIAN_STEP);
            }
        }
        let Some(dx) = solve3(&jac, r) else {
            return Err(Error::OutOfDomain { iterations: it, residual: rn });
        };
        // damped step: halve until the residual decreases
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let xn = fold(sub3(x, scale3(t, dx)));
            let rnew = f(xn);
            if norm3(rnew) < rn {
                x = xn;
                r = rnew;
                rn = norm3(rnew);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no further progress: converged to rounding level, or stuck
            if rn < TRANSFORM_TOLERANCE {
                return done(x, it, rn);
            }
            return Err(Error::OutOfDomain { iterations: it, residual: rn });
        }
    }
    Err(Error::OutOfDomain { iterations: NEWTON_MAX_ITERATIONS, residual: rn })
}

/// Continuum action on a massless momentum: spatial part of `L (|k|, k)`.
pub fn continuum_transform(k: [f64; 3], lorentz: &LorentzElement) -> [f64; 3] {
    let v = lorentz.apply([norm3(k), k[0], k[1], k[2]]);
    [v[1], v[2], v[3]]
}

/// A one-parameter subgroup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OrbitFamily {
    /// Angles uniformly in `[0, 2 pi]`.
    Rotation { axis: [f64; 3] },
    /// Rapidities uniformly in `[0, max_rapidity]`.
    Boost { axis: [f64; 3], max_rapidity: f64 },
}

impl OrbitFamily {
    pub fn parameter(&self, i: usize, samples: usize) -> f64 {
        let s = if samples > 1 { i as f64 / (samples - 1) as f64 } else { 0.0 };
        match self {
            OrbitFamily::Rotation { .. } => 2.0 * PI * s,
            OrbitFamily::Boost { max_rapidity, .. } => max_rapidity * s,
        }
    }

    pub fn element(&self, param: f64) -> Result<LorentzElement> {
        match *self {
            OrbitFamily::Rotation { axis } => LorentzElement::rotation(axis, param),
            OrbitFamily::Boost { axis, .. } => LorentzElement::boost(axis, param),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitPoint {
    pub param: f64,
    /// NaN after the orbit has left the domain.
    pub k: [f64; 3],
    pub omega: f64,
    pub in_domain: bool,
}

/// Samples the orbit of `k0`, warm-starting each solve from the previous
/// point. Once a solve fails, that sample and all later ones are flagged.
pub fn orbit(
    kind: WalkKind,
    k0: [f64; 3],
    family: &OrbitFamily,
    samples: usize,
    gauge: Gauge,
) -> Result<Vec<OrbitPoint>> {
    check_point(kind, k0)?;
    if samples < 2 {
        return Err(Error::InvalidArgument("an orbit needs at least 2 samples".into()));
    }
    let mut out = Vec::with_capacity(samples);
    let mut prev = k0;
    let mut exited = false;
    for i in 0..samples {
        let param = family.parameter(i, samples);
        let point = if exited {
            None
        } else {
            let el = family.element(param)?;
            deformed_transform_from(kind, k0, &el, gauge, Some(prev)).ok()
        };
        match point {
            Some(r) => {
                let k = r.k.get();
                let (d, n) = weyl_coefficients(kind.sign(), k);
                out.push(OrbitPoint { param, k, omega: norm3(n).atan2(d), in_domain: true });
                prev = k;
            }
            None => {
                if i <= 1 {
                    return Err(Error::DegenerateOrbit);
                }
                exited = true;
                out.push(OrbitPoint { param, k: [f64::NAN; 3], omega: f64::NAN, in_domain: false });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub samples: usize,
    pub inverse_cases: usize,
    pub composition_cases: usize,
    /// Cases dropped because a solve left the domain.
    pub skipped: usize,
    pub inverse_max_deviation: f64,
    pub composition_max_deviation: f64,
    pub pass: bool,
}

/// Uniform random small momentum, `0.01 <= |k| <= max_norm`; the apex is
/// never sampled.
fn random_small_k(rng: &mut ChaCha8Rng, max_norm: f64) -> [f64; 3] {
    loop {
        let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let n = norm3(v);
        if n > 0.1 && n <= 1.0 {
            let r = rng.random_range(0.01..max_norm);
            return scale3(r / n, v);
        }
    }
}

/// Random rotation composed with a random boost of rapidity below `max_rapidity`.
pub fn random_lorentz(rng: &mut ChaCha8Rng, max_rapidity: f64) -> LorentzElement {
    let axis = |rng: &mut ChaCha8Rng| loop {
        let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        if norm3(v) > 0.1 {
            return v;
        }
    };
    let ra = axis(rng);
    let rot = LorentzElement::rotation(ra, rng.random_range(0.0..2.0 * PI)).unwrap();
    let ba = axis(rng);
    let boost = LorentzElement::boost(ba, rng.random_range(0.0..max_rapidity)).unwrap();
    rot.compose(&boost)
}

/// Inverse round trip and composition consistency on random cases.
pub fn group_axioms_check(kind: WalkKind, samples: usize, seed: u64, gauge: Gauge) -> Result<AxiomReport> {
    require_weyl(kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut skipped = 0;
    let (mut inv_max, mut comp_max) = (0.0_f64, 0.0_f64);
    let (mut inv_n, mut comp_n) = (0, 0);
    for _ in 0..samples {
        let k = random_small_k(&mut rng, 0.3);
        let l1 = random_lorentz(&mut rng, 0.5);
        let l2 = random_lorentz(&mut rng, 0.5);
        let round = deformed_transform(kind, k, &l1.inverse(), gauge)
            .and_then(|a| deformed_transform(kind, a.k.get(), &l1, gauge));
        match round {
            Ok(r) => {
                inv_max = inv_max.max(norm3(sub3(r.k.get(), k)));
                inv_n += 1;
            }
            Err(_) => skipped += 1,
        }
        let seq = deformed_transform(kind, k, &l2, gauge)
            .and_then(|a| deformed_transform(kind, a.k.get(), &l1, gauge));
        let direct = deformed_transform(kind, k, &l1.compose(&l2), gauge);
        match (seq, direct) {
            (Ok(a), Ok(b)) => {
                comp_max = comp_max.max(norm3(sub3(a.k.get(), b.k.get())));
                comp_n += 1;
            }
            _ => skipped += 1,
        }
    }
    Ok(AxiomReport {
        samples,
        inverse_cases: inv_n,
        composition_cases: comp_n,
        skipped,
        inverse_max_deviation: inv_max,
        composition_max_deviation: comp_max,
        pass: inv_n > 0 && comp_n > 0 && inv_max < 1e-8 && comp_max < 1e-8,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionRow {
    pub k_norm: f64,
    pub deviation: f64,
    /// `deviation / |k|^3`.
    pub cubic_coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub rows: Vec<ContractionRow>,
    /// Largest `deviation / |k|^3` over the ladder.
    pub cubic_constant: f64,
    /// Log-log slope of the deviation against `|k|`.
    pub fitted_exponent: f64,
}

/// Deviation of the deformed transform from the continuum one along
/// `direction`, on a ladder of momentum norms.
pub fn small_k_contraction(
    kind: WalkKind,
    direction: [f64; 3],
    norms: &[f64],
    lorentz: &LorentzElement,
    gauge: Gauge,
) -> Result<ContractionReport> {
    let u = unit_axis(direction).map_err(|_| Error::DegenerateDirection)?;
    let mut rows = Vec::with_capacity(norms.len());
    for &r in norms {
        let k = scale3(r, u);
        let deformed = deformed_transform(kind, k, lorentz, gauge)?.k.get();
        let deviation = norm3(sub3(deformed, continuum_transform(k, lorentz)));
        rows.push(ContractionRow { k_norm: r, deviation, cubic_coefficient: deviation / r.powi(3) });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.k_norm).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.deviation).collect();
    Ok(ContractionReport {
        cubic_constant: rows.iter().map(|r| r.cubic_coefficient).fold(0.0, f64::max),
        fitted_exponent: crate::reference::fit_exponent(&xs, &ys),
        rows,
    })
}

/// True if `k` is a valid input of the deformed transform.
pub fn transformable(kind: WalkKind, k: [f64; 3]) -> bool {
    in_brillouin(k) && check_point(kind, k).is_ok()
}
