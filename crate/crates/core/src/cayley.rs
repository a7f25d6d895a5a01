//! The group Z^3 presented by the four BCC generators, its Cartesian
//! embedding, the Brillouin zone and the periodic quotient lattices used for
//! finite simulations.
//!
//! Group elements are stored in generator coordinates `(a, b, c)` with respect
//! to `h1, h2, h3`; `h4 = -h1 - h2 - h3`. Cartesian positions are only formed
//! when a dot product `k . x` is needed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Slack on the Brillouin inequalities, so folded points that land on a face
/// up to rounding still count as inside.
pub const BRILLOUIN_SLACK: f64 = 1e-12;

/// The four generators of the BCC Cayley graph in their Cartesian embedding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSet {
    pub generators: [[i32; 3]; 4],
}

impl GeneratorSet {
    /// `S = S+ ∪ S-`, ordered `h1..h4, -h1..-h4`.
    pub fn signed_set(&self) -> [[i32; 3]; 8] {
        let mut out = [[0; 3]; 8];
        for (i, h) in self.generators.iter().enumerate() {
            out[i] = *h;
            out[i + 4] = [-h[0], -h[1], -h[2]];
        }
        out
    }

    pub fn sum(&self) -> [i32; 3] {
        let mut s = [0; 3];
        for h in &self.generators {
            for a in 0..3 {
                s[a] += h[a];
            }
        }
        s
    }

    /// Determinant of the matrix with columns `h_i, h_j, h_l`.
    pub fn det(&self, i: usize, j: usize, l: usize) -> i32 {
        let (a, b, c) = (self.generators[i], self.generators[j], self.generators[l]);
        a[0] * (b[1] * c[2] - b[2] * c[1]) - b[0] * (a[1] * c[2] - a[2] * c[1])
            + c[0] * (a[1] * b[2] - a[2] * b[1])
    }
}

/// `h1=(1,1,1)`, `h2=(1,-1,-1)`, `h3=(-1,1,-1)`, `h4=(-1,-1,1)`.
pub fn canonical_generators() -> GeneratorSet {
    GeneratorSet {
        generators: [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]],
    }
}

/// A signed generator `±h_i` (index 0..4), or the identity element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Step {
    Rest,
    Hop { index: u8, inverse: bool },
}

impl Step {
    /// The eight signed generators in the order `h1..h4, -h1..-h4`.
    pub const SIGNED: [Step; 8] = [
        Step::Hop { index: 0, inverse: false },
        Step::Hop { index: 1, inverse: false },
        Step::Hop { index: 2, inverse: false },
        Step::Hop { index: 3, inverse: false },
        Step::Hop { index: 0, inverse: true },
        Step::Hop { index: 1, inverse: true },
        Step::Hop { index: 2, inverse: true },
        Step::Hop { index: 3, inverse: true },
    ];

    pub fn hop(index: u8, inverse: bool) -> Step {
        Step::Hop { index, inverse }
    }

    pub fn inverse(self) -> Step {
        match self {
            Step::Rest => Step::Rest,
            Step::Hop { index, inverse } => Step::Hop { index, inverse: !inverse },
        }
    }

    /// Generator coordinates of the element.
    pub fn coords(self) -> [i64; 3] {
        let base = match self {
            Step::Rest => return [0, 0, 0],
            Step::Hop { index: 0, .. } => [1, 0, 0],
            Step::Hop { index: 1, .. } => [0, 1, 0],
            Step::Hop { index: 2, .. } => [0, 0, 1],
            Step::Hop { .. } => [-1, -1, -1],
        };
        match self {
            Step::Hop { inverse: true, .. } => [-base[0], -base[1], -base[2]],
            _ => base,
        }
    }

    /// Cartesian embedding of the element.
    pub fn cartesian(self) -> [f64; 3] {
        to_cartesian(self.coords())
    }

    pub fn label(self) -> String {
        match self {
            Step::Rest => "e".to_string(),
            Step::Hop { index, inverse: false } => format!("h{}", index + 1),
            Step::Hop { index, inverse: true } => format!("-h{}", index + 1),
        }
    }
}

/// Cartesian position of the element with generator coordinates `coords`.
pub fn to_cartesian(coords: [i64; 3]) -> [f64; 3] {
    let g = canonical_generators().generators;
    let mut x = [0.0; 3];
    for (j, &cj) in coords.iter().enumerate() {
        for a in 0..3 {
            x[a] += cj as f64 * g[j][a] as f64;
        }
    }
    x
}

/// Real-valued generator coordinates to Cartesian.
pub fn to_cartesian_f(coords: [f64; 3]) -> [f64; 3] {
    let g = canonical_generators().generators;
    let mut x = [0.0; 3];
    for (j, &cj) in coords.iter().enumerate() {
        for a in 0..3 {
            x[a] += cj * g[j][a] as f64;
        }
    }
    x
}

/// Momentum whose products with `h1, h2, h3` are `phases`.
///
/// This applies the inverse transpose of the generator matrix.
pub fn from_generator_phases(phases: [f64; 3]) -> [f64; 3] {
    let [a, b, c] = phases;
    [(a + b) / 2.0, (a + c) / 2.0, -(b + c) / 2.0]
}

/// True iff all twelve inequalities `-pi <= k_i + s k_j <= pi` hold.
pub fn in_brillouin(k: [f64; 3]) -> bool {
    brillouin_excess(k) <= BRILLOUIN_SLACK
}

/// Largest violation of the Brillouin inequalities (negative inside).
pub fn brillouin_excess(k: [f64; 3]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        worst = worst.max((k[i] + k[j]).abs() - PI);
        worst = worst.max((k[i] - k[j]).abs() - PI);
    }
    worst
}

/// Distance from `k` to the zone boundary (zero or negative outside).
pub fn distance_to_boundary(k: [f64; 3]) -> f64 {
    // each face is |k_i ± k_j| = pi with normal of length sqrt(2)
    -brillouin_excess(k) / 2f64.sqrt()
}

/// Reduces `k` modulo the reciprocal lattice into the Brillouin zone.
///
/// The zone is the Wigner-Seitz cell of the reciprocal lattice generated by
/// `pi (±e_i ± e_j)`, so subtracting the lattice vector of a violated face
/// strictly decreases `|k|` and the loop terminates.
pub fn fold(mut k: [f64; 3]) -> [f64; 3] {
    for _ in 0..1000 {
        let mut worst = BRILLOUIN_SLACK;
        let mut shift = None;
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            for s in [1.0, -1.0] {
                let v = k[i] + s * k[j];
                if v.abs() - PI > worst {
                    worst = v.abs() - PI;
                    shift = Some((i, j, s, v.signum()));
                }
            }
        }
        match shift {
            None => return k,
            Some((i, j, s, sign)) => {
                k[i] -= sign * PI;
                k[j] -= sign * s * PI;
            }
        }
    }
    k
}

/// A point of the Brillouin zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MomentumVector([f64; 3]);

impl MomentumVector {
    pub fn new(k: [f64; 3]) -> Result<Self> {
        if k.iter().all(|x| x.is_finite()) && in_brillouin(k) {
            Ok(MomentumVector(k))
        } else {
            Err(Error::OutsideBrillouin(k[0], k[1], k[2]))
        }
    }

    /// Folds an arbitrary momentum into the zone.
    pub fn folded(k: [f64; 3]) -> Self {
        MomentumVector(fold(k))
    }

    pub const fn zero() -> Self {
        MomentumVector([0.0; 3])
    }

    pub fn get(&self) -> [f64; 3] {
        self.0
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm3(self.0)
    }

    /// `k . x` for a group element in generator coordinates.
    pub fn phase(&self, coords: [i64; 3]) -> f64 {
        crate::linalg::dot3(self.0, to_cartesian(coords))
    }
}

impl From<MomentumVector> for [f64; 3] {
    fn from(k: MomentumVector) -> Self {
        k.0
    }
}

/// Monte-Carlo estimate of the zone volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub volume: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Samples the cube `[-pi, pi]^3` uniformly and counts zone membership.
pub fn brillouin_volume_estimate(samples: usize, seed: u64) -> Result<VolumeEstimate> {
    if samples < 10_000 {
        return Err(Error::InvalidArgument(format!(
            "volume estimate needs at least 10^4 samples, got {samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inside = 0usize;
    for _ in 0..samples {
        let k = [
            rng.random_range(-PI..PI),
            rng.random_range(-PI..PI),
            rng.random_range(-PI..PI),
        ];
        if in_brillouin(k) {
            inside += 1;
        }
    }
    let cube = (2.0 * PI).powi(3);
    let p = inside as f64 / samples as f64;
    Ok(VolumeEstimate {
        volume: cube * p,
        std_error: cube * (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
    })
}

/// The periodic quotient `(Z mod N)^3` in generator coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotientLattice {
    n: usize,
}

impl QuotientLattice {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidPeriod(n));
        }
        Ok(QuotientLattice { n })
    }

    pub fn period(&self) -> usize {
        self.n
    }

    pub fn sites(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn index(&self, a: usize, b: usize, c: usize) -> usize {
        (a * self.n + b) * self.n + c
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let n = self.n;
        [index / (n * n), (index / n) % n, index % n]
    }

    /// Index of `site + coords`, wrapped cyclically.
    pub fn translate(&self, index: usize, coords: [i64; 3]) -> usize {
        let n = self.n as i64;
        let [a, b, c] = self.coords(index);
        let w = |x: usize, d: i64| ((x as i64 + d).rem_euclid(n)) as usize;
        self.index(w(a, coords[0]), w(b, coords[1]), w(c, coords[2]))
    }

    /// Centered generator coordinates in `[-N/2, N/2)`.
    pub fn centered(&self, index: usize) -> [i64; 3] {
        let n = self.n as i64;
        let half = n / 2;
        self.coords(index)
            .map(|x| ((x as i64 + half).rem_euclid(n)) - half)
    }

    /// Grid momentum for index `m = (m1, m2, m3)`, folded into the zone.
    pub fn momentum(&self, m: [usize; 3]) -> MomentumVector {
        let s = 2.0 * PI / self.n as f64;
        MomentumVector::folded(from_generator_phases([
            s * m[0] as f64,
            s * m[1] as f64,
            s * m[2] as f64,
        ]))
    }

    /// Momentum index of a grid momentum, if `k` lies on the grid.
    pub fn momentum_index(&self, k: [f64; 3]) -> Option<[usize; 3]> {
        let g = canonical_generators().generators;
        let n = self.n as f64;
        let mut m = [0usize; 3];
        for j in 0..3 {
            let phase = k[0] * g[j][0] as f64 + k[1] * g[j][1] as f64 + k[2] * g[j][2] as f64;
            let x = phase * n / (2.0 * PI);
            let r = x.round();
            if (x - r).abs() > 1e-8 {
                return None;
            }
            m[j] = (r as i64).rem_euclid(self.n as i64) as usize;
        }
        Some(m)
    }
}

/// The `N^3` momenta dual to the quotient, in the storage order of
/// [`QuotientLattice::index`].
pub fn quotient_momenta(n: usize) -> Result<Vec<MomentumVector>> {
    let lattice = QuotientLattice::new(n)?;
    Ok((0..lattice.sites())
        .map(|i| lattice.momentum(lattice.coords(i)))
        .collect())
}

/// Samples the cube `[-pi, pi]^3` on a regular grid and records membership.
pub fn membership_grid(resolution: usize) -> Vec<([f64; 3], bool)> {
    let step = 2.0 * PI / (resolution.max(2) - 1) as f64;
    let mut out = Vec::with_capacity(resolution.pow(3));
    for i in 0..resolution {
        for j in 0..resolution {
            for l in 0..resolution {
                let k = [-PI + step * i as f64, -PI + step * j as f64, -PI + step * l as f64];
                out.push((k, in_brillouin(k)));
            }
        }
    }
    out
}
