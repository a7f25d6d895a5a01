//! Transition matrices, momentum-space walk matrices, spectra, and the
//! unitarity and isotropy checks for the Weyl, transposed Weyl and Dirac
//! walks on the BCC lattice.
//!
//! [`TransitionMatrixSet`] holds the field-update transition matrices: the
//! automaton maps `psi(x)` to `sum_h A_h psi(x - h)`. A single excitation
//! evolves with their adjoints, so the momentum-space walk matrix is
//!
//! ```text
//! W(k) = sum_h exp(-i k.h) A_h^dag
//! ```
//!
//! which is the closed form `d_k I - i n_k . sigma` for the Weyl walks.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::cayley::{in_brillouin, MomentumVector, Step};
use crate::error::{Error, Result};
use crate::linalg::{
    block2, c, cmat, dot_pauli, identity, log_unitary, norm3, normal_eigen, op_norm, pauli,
    CMatrix, C64, I, ZERO,
};

/// Residual threshold for the unitarity conditions.
pub const UNITARITY_TOLERANCE: f64 = 1e-12;

/// Residual threshold for the isotropy conjugation relation.
pub const ISOTROPY_TOLERANCE: f64 = 1e-14;

/// Dirac mass parameter `m` in `[0, 1)`, with `n = sqrt(1 - m^2)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Mass(f64);

impl Mass {
    pub fn new(m: f64) -> Result<Self> {
        if m.is_finite() && (0.0..1.0).contains(&m) {
            Ok(Mass(m))
        } else {
            Err(Error::InvalidMass(m))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn n(self) -> f64 {
        (1.0 - self.0 * self.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WalkKind {
    WeylPlus,
    WeylMinus,
    ZPlus,
    ZMinus,
    DiracPlus(Mass),
    DiracMinus(Mass),
}

impl WalkKind {
    pub fn dim(self) -> usize {
        match self {
            WalkKind::DiracPlus(_) | WalkKind::DiracMinus(_) => 4,
            _ => 2,
        }
    }

    pub fn sign(self) -> Sign {
        match self {
            WalkKind::WeylPlus | WalkKind::ZPlus | WalkKind::DiracPlus(_) => Sign::Plus,
            _ => Sign::Minus,
        }
    }

    pub fn is_dirac(self) -> bool {
        self.dim() == 4
    }

    pub fn is_transposed(self) -> bool {
        matches!(self, WalkKind::ZPlus | WalkKind::ZMinus)
    }

    pub fn mass(self) -> Option<Mass> {
        match self {
            WalkKind::DiracPlus(m) | WalkKind::DiracMinus(m) => Some(m),
            _ => None,
        }
    }

    /// The Weyl walk a Dirac walk is built from (identity on 2-dim kinds).
    pub fn weyl_base(self) -> WalkKind {
        match self {
            WalkKind::DiracPlus(_) => WalkKind::WeylPlus,
            WalkKind::DiracMinus(_) => WalkKind::WeylMinus,
            other => other,
        }
    }

    /// Pauli triple appearing in the walk matrix `d I - i n . tau`.
    ///
    /// `sigma+ = (sx, sy, sz)`, `sigma- = (sx, -sy, sz)`; the transposed walks
    /// use the transposed triple.
    pub fn pauli_set(self) -> [CMatrix; 3] {
        let [sx, sy, sz] = pauli();
        let minus = !matches!(self.weyl_base(), WalkKind::WeylPlus | WalkKind::ZMinus);
        if minus {
            [sx, -sy, sz]
        } else {
            [sx, sy, sz]
        }
    }

    pub fn name(self) -> String {
        match self {
            WalkKind::WeylPlus => "weyl+".into(),
            WalkKind::WeylMinus => "weyl-".into(),
            WalkKind::ZPlus => "z+".into(),
            WalkKind::ZMinus => "z-".into(),
            WalkKind::DiracPlus(m) => format!("dirac+(m={})", m.value()),
            WalkKind::DiracMinus(m) => format!("dirac-(m={})", m.value()),
        }
    }
}

/// The closed-form coefficients `(d_k, n_k)` of the Weyl walk with sign `s`.
pub fn weyl_coefficients(sign: Sign, k: [f64; 3]) -> (f64, [f64; 3]) {
    let s = sign.value();
    let (sx, cx) = k[0].sin_cos();
    let (sy, cy) = k[1].sin_cos();
    let (sz, cz) = k[2].sin_cos();
    let d = cx * cy * cz + s * sx * sy * sz;
    let n = [
        sx * cy * cz - s * cx * sy * sz,
        cx * sy * cz + s * sx * cy * sz,
        cx * cy * sz - s * sx * sy * cz,
    ];
    (d, n)
}

/// Gradient of `d_k`.
fn weyl_d_gradient(sign: Sign, k: [f64; 3]) -> [f64; 3] {
    let s = sign.value();
    let (sx, cx) = k[0].sin_cos();
    let (sy, cy) = k[1].sin_cos();
    let (sz, cz) = k[2].sin_cos();
    [
        -sx * cy * cz + s * cx * sy * sz,
        -cx * sy * cz + s * sx * cy * sz,
        -cx * cy * sz + s * sx * sy * cz,
    ]
}

/// Field-update transition matrices, one per group element in the
/// neighbourhood (the eight signed generators, plus the identity for Dirac).
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrixSet {
    dim: usize,
    entries: BTreeMap<Step, CMatrix>,
}

impl TransitionMatrixSet {
    pub fn new(dim: usize, entries: impl IntoIterator<Item = (Step, CMatrix)>) -> Result<Self> {
        let entries: BTreeMap<Step, CMatrix> = entries.into_iter().collect();
        for s in Step::SIGNED {
            match entries.get(&s) {
                Some(m) if m.nrows() == dim && m.ncols() == dim => {}
                Some(m) => {
                    return Err(Error::Shape(format!(
                        "{} matrix is {}x{}, expected {dim}x{dim}",
                        s.label(),
                        m.nrows(),
                        m.ncols()
                    )))
                }
                None => return Err(Error::Shape(format!("missing matrix for {}", s.label()))),
            }
        }
        if let Some(m) = entries.get(&Step::Rest) {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::Shape("rest matrix has the wrong size".into()));
            }
        }
        Ok(TransitionMatrixSet { dim, entries })
    }

    pub fn internal_dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, step: Step) -> Option<&CMatrix> {
        self.entries.get(&step)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Step, &CMatrix)> {
        self.entries.iter().map(|(s, m)| (*s, m))
    }

    /// Single-excitation hopping matrix for `step`: the adjoint of the
    /// transition matrix.
    pub fn hopping(&self, step: Step) -> Option<CMatrix> {
        self.entries.get(&step).map(|m| m.adjoint())
    }

    /// `sum_h exp(-i k.h) A_h^dag`.
    pub fn assemble(&self, k: [f64; 3]) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for (step, a) in &self.entries {
            let phase = C64::from_polar(1.0, -crate::linalg::dot3(k, step.cartesian()));
            out += a.adjoint() * phase;
        }
        out
    }

    /// Copy with the matrices on the positive generators scaled by `factor`.
    pub fn perturbed(&self, factor: f64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(s, m)| match s {
                Step::Hop { inverse: false, .. } => (*s, m * c(factor, 0.0)),
                _ => (*s, m.clone()),
            })
            .collect();
        TransitionMatrixSet { dim: self.dim, entries }
    }
}

fn weyl_transition_matrices(sign: Sign) -> BTreeMap<Step, CMatrix> {
    let zp = c(0.25, 0.25);
    let zm = c(0.25, -0.25);
    let (z, w) = match sign {
        Sign::Plus => (zp, zm),
        Sign::Minus => (zm, zp),
    };
    let mut m = BTreeMap::new();
    m.insert(Step::hop(0, false), cmat([[z, ZERO], [z, ZERO]]));
    m.insert(Step::hop(0, true), cmat([[ZERO, -w], [ZERO, w]]));
    m.insert(Step::hop(1, false), cmat([[ZERO, z], [ZERO, z]]));
    m.insert(Step::hop(1, true), cmat([[w, ZERO], [-w, ZERO]]));
    m.insert(Step::hop(2, false), cmat([[ZERO, -z], [ZERO, z]]));
    m.insert(Step::hop(2, true), cmat([[w, ZERO], [w, ZERO]]));
    m.insert(Step::hop(3, false), cmat([[z, ZERO], [-z, ZERO]]));
    m.insert(Step::hop(3, true), cmat([[ZERO, w], [ZERO, w]]));
    m
}

/// Transition matrices of the given walk.
///
/// For the Dirac walks the up block carries `n A_h`, the down block
/// `n A_{-h}^dag` (the inverse Weyl walk), and the identity element carries
/// the mass coupling `-i m [[0, I], [I, 0]]`, whose adjoint `i m` appears in
/// the walk matrix.
pub fn transition_matrices(kind: WalkKind) -> TransitionMatrixSet {
    let entries = match kind {
        WalkKind::WeylPlus => weyl_transition_matrices(Sign::Plus),
        WalkKind::WeylMinus => weyl_transition_matrices(Sign::Minus),
        WalkKind::ZPlus | WalkKind::ZMinus => weyl_transition_matrices(kind.sign())
            .into_iter()
            .map(|(s, m)| (s, m.transpose()))
            .collect(),
        WalkKind::DiracPlus(mass) | WalkKind::DiracMinus(mass) => {
            let weyl = weyl_transition_matrices(kind.sign());
            let n = c(mass.n(), 0.0);
            let zero = CMatrix::zeros(2, 2);
            let mut m: BTreeMap<Step, CMatrix> = Step::SIGNED
                .iter()
                .map(|&s| {
                    let up = &weyl[&s] * n;
                    let down = weyl[&s.inverse()].adjoint() * n;
                    (s, block2(&up, &zero, &zero, &down))
                })
                .collect();
            let coupling = identity(2) * (-I * mass.value());
            m.insert(Step::Rest, block2(&zero, &coupling, &coupling, &zero));
            m
        }
    };
    TransitionMatrixSet { dim: kind.dim(), entries }
}

/// A momentum-space walk matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkMatrix {
    pub k: MomentumVector,
    pub matrix: CMatrix,
}

fn checked(k: [f64; 3]) -> Result<MomentumVector> {
    MomentumVector::new(k)
}

/// Closed-form walk matrix without the zone check. Valid for any real `k`.
pub fn walk_matrix_raw(kind: WalkKind, k: [f64; 3]) -> CMatrix {
    match kind {
        WalkKind::DiracPlus(m) | WalkKind::DiracMinus(m) => {
            dirac_block(m, weyl_matrix_raw(kind.weyl_base(), k))
        }
        _ => weyl_matrix_raw(kind, k),
    }
}

fn weyl_matrix_raw(kind: WalkKind, k: [f64; 3]) -> CMatrix {
    let (d, n) = weyl_coefficients(kind.sign(), k);
    identity(2) * c(d, 0.0) - dot_pauli(n, &kind.pauli_set()) * I
}

fn dirac_block(mass: Mass, w: CMatrix) -> CMatrix {
    let n = c(mass.n(), 0.0);
    let im = identity(2) * (I * mass.value());
    block2(&(&w * n), &im, &im, &(w.adjoint() * n))
}

/// The walk matrix at `k`: closed form for the Weyl kinds, block form for
/// the Dirac kinds.
pub fn walk_matrix(kind: WalkKind, k: [f64; 3]) -> Result<WalkMatrix> {
    let k = checked(k)?;
    Ok(WalkMatrix {
        k,
        matrix: walk_matrix_raw(kind, k.get()),
    })
}

/// `[[n W, i m I], [i m I, n W^dag]]` with `W` the Weyl walk of sign `sign`.
pub fn dirac_walk_matrix(m: f64, sign: Sign, k: [f64; 3]) -> Result<WalkMatrix> {
    let mass = Mass::new(m)?;
    let k = checked(k)?;
    let base = match sign {
        Sign::Plus => WalkKind::WeylPlus,
        Sign::Minus => WalkKind::WeylMinus,
    };
    Ok(WalkMatrix {
        k,
        matrix: dirac_block(mass, weyl_matrix_raw(base, k.get())),
    })
}

/// Dispersion `omega(k)` in `[0, pi]`.
///
/// Weyl kinds use `atan2(|n_k|, d_k)`, equal to `arccos d_k` on the unit
/// sphere `d^2 + |n|^2 = 1` and accurate near the apex. Dirac kinds take the
/// eigenphases of the numerically diagonalised 4x4 walk.
pub fn dispersion(kind: WalkKind, k: [f64; 3]) -> Result<f64> {
    let k = checked(k)?.get();
    Ok(dispersion_raw(kind, k))
}

pub(crate) fn dispersion_raw(kind: WalkKind, k: [f64; 3]) -> f64 {
    if kind.is_dirac() {
        let w = walk_matrix_raw(kind, k);
        match normal_eigen(&w) {
            Ok((vals, _)) => vals.iter().map(|z| z.arg().abs()).sum::<f64>() / vals.len() as f64,
            Err(_) => f64::NAN,
        }
    } else {
        let (d, n) = weyl_coefficients(kind.sign(), k);
        norm3(n).atan2(d)
    }
}

/// Helicity vector `n_k` of a Weyl-type walk.
pub fn helicity(kind: WalkKind, k: [f64; 3]) -> Result<[f64; 3]> {
    if kind.is_dirac() {
        return Err(Error::UnsupportedKind("helicity", "two-component"));
    }
    let k = checked(k)?.get();
    Ok(weyl_coefficients(kind.sign(), k).1)
}

/// Finite-difference step for the Dirac group velocity.
pub const DIRAC_FD_STEP: f64 = 1e-5;

/// `grad omega(k)`.
///
/// Weyl kinds use `grad omega = -grad d / sin omega` in closed form; Dirac
/// kinds use central differences with step [`DIRAC_FD_STEP`].
pub fn group_velocity(kind: WalkKind, k: [f64; 3]) -> Result<[f64; 3]> {
    let k = checked(k)?.get();
    let omega = dispersion_raw(kind, k);
    if omega < 1e-8 || std::f64::consts::PI - omega < 1e-8 {
        return Err(Error::NonDifferentiable(omega));
    }
    if kind.is_dirac() {
        let h = DIRAC_FD_STEP;
        let mut v = [0.0; 3];
        for a in 0..3 {
            let mut kp = k;
            let mut km = k;
            kp[a] += h;
            km[a] -= h;
            v[a] = (dispersion_raw(kind, kp) - dispersion_raw(kind, km)) / (2.0 * h);
        }
        Ok(v)
    } else {
        let (_, n) = weyl_coefficients(kind.sign(), k);
        let s = norm3(n);
        let g = weyl_d_gradient(kind.sign(), k);
        Ok([-g[0] / s, -g[1] / s, -g[2] / s])
    }
}

/// Hermitian `H_I(k)` with `W(k) = exp(-i H_I(k))`, principal branch.
pub fn interpolating_hamiltonian(kind: WalkKind, k: [f64; 3]) -> Result<CMatrix> {
    let k = checked(k)?.get();
    let w = walk_matrix_raw(kind, k);
    if !kind.is_dirac() {
        let (d, n) = weyl_coefficients(kind.sign(), k);
        let s = norm3(n);
        let omega = s.atan2(d);
        if std::f64::consts::PI - omega < crate::linalg::BRANCH_TOLERANCE {
            return Err(Error::BranchAmbiguity(omega));
        }
        if s == 0.0 {
            return Ok(CMatrix::zeros(2, 2));
        }
        // closed form omega (n/|n|) . tau, exact on the 2x2 sector
        return Ok(dot_pauli(n.map(|x| x * omega / s), &kind.pauli_set()));
    }
    log_unitary(&w)
}

/// Largest mismatch between the eigenvalues of the walk matrix and the
/// predicted spectrum `{exp(-i omega), exp(+i omega)}`.
pub fn spectrum_residual(kind: WalkKind, k: [f64; 3]) -> Result<f64> {
    let k = checked(k)?.get();
    let w = walk_matrix_raw(kind, k);
    let omega = if kind.is_dirac() {
        // cos omega = n d_k for the Dirac block, from (D + D^dag)/2 = n d I
        let (d, _) = weyl_coefficients(kind.sign(), k);
        (kind.mass().unwrap().n() * d).clamp(-1.0, 1.0).acos()
    } else {
        let (d, _) = weyl_coefficients(kind.sign(), k);
        d.clamp(-1.0, 1.0).acos()
    };
    let (vals, _) = normal_eigen(&w)?;
    let plus = C64::from_polar(1.0, omega);
    let minus = C64::from_polar(1.0, -omega);
    // each predicted eigenvalue must be hit dim/2 times
    let mut residual = 0.0_f64;
    let mut hits_plus = 0;
    for z in &vals {
        let (dp, dm) = ((z - plus).norm(), (z - minus).norm());
        if dp <= dm {
            hits_plus += 1;
            residual = residual.max(dp);
        } else {
            residual = residual.max(dm);
        }
    }
    if omega > 1e-6 && omega < std::f64::consts::PI - 1e-6 && hits_plus != vals.len() / 2 {
        return Ok(f64::INFINITY);
    }
    Ok(residual)
}

/// One line of a verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResidual {
    pub condition: String,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitarityReport {
    pub pass: bool,
    pub max_residual: f64,
    pub violating_condition: Option<String>,
    pub conditions: Vec<ConditionResidual>,
}

/// Checks the quadratic unitarity conditions on the transition matrices.
///
/// For every displacement `d = h_i - h_j` in the neighbourhood,
/// `sum A_i^dag A_j` and `sum A_i A_j^dag` must equal the identity when
/// `d = 0` and vanish otherwise.
pub fn verify_unitarity(set: &TransitionMatrixSet) -> UnitarityReport {
    let dim = set.internal_dim();
    let mut left: BTreeMap<[i64; 3], CMatrix> = BTreeMap::new();
    let mut right: BTreeMap<[i64; 3], CMatrix> = BTreeMap::new();
    for (si, ai) in set.iter() {
        for (sj, aj) in set.iter() {
            let (ci, cj) = (si.coords(), sj.coords());
            let d = [ci[0] - cj[0], ci[1] - cj[1], ci[2] - cj[2]];
            *left.entry(d).or_insert_with(|| CMatrix::zeros(dim, dim)) += ai.adjoint() * aj;
            *right.entry(d).or_insert_with(|| CMatrix::zeros(dim, dim)) += ai * aj.adjoint();
        }
    }
    let id = identity(dim);
    let mut conditions = Vec::new();
    for (label, sums) in [("A^dag A", &left), ("A A^dag", &right)] {
        for (d, m) in sums {
            let (name, residual) = if *d == [0, 0, 0] {
                (format!("completeness {label}"), op_norm(&(m - &id)))
            } else {
                (
                    format!("orthogonality {label} at d=({},{},{})", d[0], d[1], d[2]),
                    op_norm(m),
                )
            };
            conditions.push(ConditionResidual { condition: name, residual });
        }
    }
    let worst = conditions
        .iter()
        .max_by(|a, b| a.residual.total_cmp(&b.residual))
        .cloned();
    let max_residual = worst.as_ref().map_or(0.0, |c| c.residual);
    let pass = max_residual < UNITARITY_TOLERANCE;
    UnitarityReport {
        pass,
        max_residual,
        violating_condition: if pass { None } else { worst.map(|c| c.condition) },
        conditions,
    }
}

/// A permutation action on `{h1, h2, h3, h4}` together with the unitaries
/// representing each group element.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotropyAction {
    pub permutations: Vec<[u8; 4]>,
    pub representation: Vec<CMatrix>,
}

/// The Klein four-group acting on the generators by double transpositions:
/// `e, (12)(34), (13)(24), (14)(23)`.
pub fn klein_permutations() -> Vec<[u8; 4]> {
    vec![[0, 1, 2, 3], [1, 0, 3, 2], [2, 3, 0, 1], [3, 2, 1, 0]]
}

/// `{I, i sx, i sy, i sz}`, matched to [`klein_permutations`].
pub fn weyl_isotropy_action() -> IsotropyAction {
    let [sx, sy, sz] = pauli();
    IsotropyAction {
        permutations: klein_permutations(),
        representation: vec![identity(2), sx * I, sy * I, sz * I],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropyReport {
    pub pass: bool,
    pub max_residual: f64,
    pub violating_condition: Option<String>,
    pub conditions: Vec<ConditionResidual>,
}

fn permute(step: Step, perm: &[u8; 4]) -> Step {
    match step {
        Step::Rest => Step::Rest,
        Step::Hop { index, inverse } => Step::Hop { index: perm[index as usize], inverse },
    }
}

/// Checks `A_{l(h)} = U_l A_h U_l^{-1}` for every element `l` and every
/// element `h` of the neighbourhood.
pub fn verify_isotropy(set: &TransitionMatrixSet, action: &IsotropyAction) -> Result<IsotropyReport> {
    let expected = action.permutations.len();
    if action.representation.len() != expected {
        return Err(Error::RepresentationSize { expected, got: action.representation.len() });
    }
    let mut orbit = [false; 4];
    for p in &action.permutations {
        let mut seen = [false; 4];
        for &x in p {
            if x > 3 || seen[x as usize] {
                return Err(Error::InvalidArgument(format!("{p:?} is not a permutation")));
            }
            seen[x as usize] = true;
        }
        orbit[p[0] as usize] = true;
    }
    if !orbit.iter().all(|&b| b) {
        return Err(Error::NonTransitiveAction);
    }
    let mut conditions = Vec::new();
    for (l, (perm, u)) in action.permutations.iter().zip(&action.representation).enumerate() {
        let u_inv = u
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("singular representation matrix".into()))?;
        for (step, a) in set.iter() {
            let target = set
                .get(permute(step, perm))
                .ok_or_else(|| Error::Shape("action leaves the neighbourhood".into()))?;
            let residual = op_norm(&(target - u * a * &u_inv));
            conditions.push(ConditionResidual {
                condition: format!("element {l}: {} -> {}", step.label(), permute(step, perm).label()),
                residual,
            });
        }
    }
    let worst = conditions
        .iter()
        .max_by(|a, b| a.residual.total_cmp(&b.residual))
        .cloned();
    let max_residual = worst.as_ref().map_or(0.0, |c| c.residual);
    let pass = max_residual < ISOTROPY_TOLERANCE;
    Ok(IsotropyReport {
        pass,
        max_residual,
        violating_condition: if pass { None } else { worst.map(|c| c.condition) },
        conditions,
    })
}

/// Exhaustive search for a signed Pauli representation of the Klein action
/// that makes `set` isotropic. Each non-trivial element is tried against
/// `±I, ±i sx, ±i sy, ±i sz`; the first passing assignment is returned.
pub fn search_isotropy_representation(set: &TransitionMatrixSet) -> Option<IsotropyAction> {
    if set.internal_dim() != 2 {
        return None;
    }
    let [sx, sy, sz] = pauli();
    let mut candidates = Vec::new();
    for base in [identity(2), sx * I, sy * I, sz * I] {
        candidates.push(base.clone());
        candidates.push(-base);
    }
    let perms = klein_permutations();
    for a in &candidates {
        for b in &candidates {
            for cc in &candidates {
                let action = IsotropyAction {
                    permutations: perms.clone(),
                    representation: vec![identity(2), a.clone(), b.clone(), cc.clone()],
                };
                if let Ok(r) = verify_isotropy(set, &action) {
                    if r.pass {
                        return Some(action);
                    }
                }
            }
        }
    }
    None
}

/// True if `k` is admissible for the walk routines.
pub fn admissible(k: [f64; 3]) -> bool {
    in_brillouin(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::unitarity_defect;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_k(rng: &mut ChaCha8Rng) -> [f64; 3] {
        loop {
            let k = [
                rng.random_range(-PI..PI),
                rng.random_range(-PI..PI),
                rng.random_range(-PI..PI),
            ];
            if in_brillouin(k) {
                return k;
            }
        }
    }

    fn all_kinds() -> Vec<WalkKind> {
        vec![
            WalkKind::WeylPlus,
            WalkKind::WeylMinus,
            WalkKind::ZPlus,
            WalkKind::ZMinus,
            WalkKind::DiracPlus(Mass::new(0.3).unwrap()),
            WalkKind::DiracMinus(Mass::new(0.3).unwrap()),
        ]
    }

    #[test]
    fn printed_h1_matrix() {
        let set = transition_matrices(WalkKind::WeylPlus);
        let zp = c(0.25, 0.25);
        let expect = cmat([[zp, ZERO], [zp, ZERO]]);
        assert_eq!(set.get(Step::hop(0, false)).unwrap(), &expect);
    }

    #[test]
    fn weyl_matrices_have_rank_one() {
        for kind in [WalkKind::WeylPlus, WalkKind::WeylMinus] {
            let set = transition_matrices(kind);
            for (_, m) in set.iter() {
                assert_eq!(crate::linalg::rank(m, 1e-12), 1);
            }
        }
    }

    #[test]
    fn assembly_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in all_kinds() {
            let set = transition_matrices(kind);
            for _ in 0..200 {
                let k = random_k(&mut rng);
                let diff = op_norm(&(set.assemble(k) - walk_matrix_raw(kind, k)));
                assert!(diff < 1e-12, "{} at {k:?}: {diff}", kind.name());
            }
        }
    }

    #[test]
    fn z_walk_is_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let k = random_k(&mut rng);
            for (z, w) in [(WalkKind::ZPlus, WalkKind::WeylPlus), (WalkKind::ZMinus, WalkKind::WeylMinus)] {
                let diff = walk_matrix_raw(z, k) - walk_matrix_raw(w, k).transpose();
                assert!(op_norm(&diff) < 1e-15);
            }
        }
    }

    #[test]
    fn walk_matrix_examples() {
        let w = walk_matrix(WalkKind::WeylPlus, [0.0; 3]).unwrap();
        assert!(op_norm(&(w.matrix - identity(2))) < 1e-15);
        let w = walk_matrix(WalkKind::WeylPlus, [PI / 2.0, 0.0, 0.0]).unwrap();
        let [sx, _, _] = pauli();
        assert!(op_norm(&(w.matrix + sx * I)) < 1e-15);
        // on the zone boundary, d = 1
        let w = walk_matrix(WalkKind::WeylPlus, [PI / 2.0; 3]).unwrap();
        assert!(op_norm(&(w.matrix - identity(2))) < 1e-15);
        assert!(matches!(
            walk_matrix(WalkKind::WeylPlus, [3.0, 3.0, 0.0]),
            Err(Error::OutsideBrillouin(..))
        ));
    }

    #[test]
    fn dirac_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let k = random_k(&mut rng);
            let d = dirac_walk_matrix(0.0, Sign::Plus, k).unwrap().matrix;
            let w = walk_matrix_raw(WalkKind::WeylPlus, k);
            let zero = CMatrix::zeros(2, 2);
            assert!(op_norm(&(d - block2(&w, &zero, &zero, &w.adjoint()))) < 1e-15);
            let m = rng.random_range(0.0..0.99);
            let d = dirac_walk_matrix(m, Sign::Plus, k).unwrap().matrix;
            assert!(unitarity_defect(&d) < 1e-12);
        }
        let d = dirac_walk_matrix(0.2, Sign::Plus, [0.0; 3]).unwrap().matrix;
        let (vals, _) = normal_eigen(&d).unwrap();
        let mut phases: Vec<f64> = vals.iter().map(|z| z.arg()).collect();
        phases.sort_by(f64::total_cmp);
        let a = 0.2f64.asin();
        for (p, e) in phases.iter().zip([-a, -a, a, a]) {
            assert!((p - e).abs() < 1e-13);
        }
        assert_eq!(dirac_walk_matrix(1.0, Sign::Plus, [0.0; 3]), Err(Error::InvalidMass(1.0)));
        assert!(Mass::new(-0.1).is_err());
    }

    #[test]
    fn dirac_massless_limit_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ks: Vec<_> = (0..200).map(|_| random_k(&mut rng)).collect();
        let mut prev = f64::INFINITY;
        for m in [0.1, 0.01, 0.001] {
            let sup = ks
                .iter()
                .map(|&k| {
                    let d = dirac_walk_matrix(m, Sign::Plus, k).unwrap().matrix;
                    let w = walk_matrix_raw(WalkKind::WeylPlus, k) * c(Mass::new(m).unwrap().n(), 0.0);
                    let zero = CMatrix::zeros(2, 2);
                    op_norm(&(d - block2(&w, &zero, &zero, &w.adjoint())))
                })
                .fold(0.0, f64::max);
            assert!(sup < prev);
            assert!((sup - m).abs() < 1e-12);
            prev = sup;
        }
    }

    #[test]
    fn dispersion_examples() {
        assert_eq!(dispersion(WalkKind::WeylPlus, [0.0; 3]).unwrap(), 0.0);
        let w = dispersion(WalkKind::WeylPlus, [PI / 2.0, 0.0, 0.0]).unwrap();
        assert!((w - PI / 2.0).abs() < 1e-15);
        for m in [0.05, 0.1, 0.2, 0.7] {
            let kind = WalkKind::DiracPlus(Mass::new(m).unwrap());
            let w = dispersion(kind, [0.0; 3]).unwrap();
            assert!((w - m.asin()).abs() < 1e-12, "{m}: {w}");
        }
    }

    #[test]
    fn dirac_dispersion_matches_trace_identity() {
        // (D + D^dag)/2 = n d_k I, so cos omega = n d_k
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mass = Mass::new(0.4).unwrap();
        for _ in 0..200 {
            let k = random_k(&mut rng);
            let (d, _) = weyl_coefficients(Sign::Minus, k);
            let w = dispersion(WalkKind::DiracMinus(mass), k).unwrap();
            assert!((w - (mass.n() * d).acos()).abs() < 1e-10);
        }
    }

    #[test]
    fn helicity_examples() {
        assert_eq!(helicity(WalkKind::WeylPlus, [0.0; 3]).unwrap(), [0.0; 3]);
        let n = helicity(WalkKind::WeylPlus, [PI / 2.0, 0.0, 0.0]).unwrap();
        assert!((n[0] - 1.0).abs() < 1e-15 && n[1].abs() < 1e-15 && n[2].abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let k = random_k(&mut rng);
            for sign in [Sign::Plus, Sign::Minus] {
                let (d, n) = weyl_coefficients(sign, k);
                assert!((d * d + norm3(n).powi(2) - 1.0).abs() < 1e-12);
            }
            let w = dispersion(WalkKind::WeylPlus, k).unwrap();
            let n = helicity(WalkKind::WeylPlus, k).unwrap();
            assert!((w.sin() - norm3(n)).abs() < 1e-12);
        }
        assert!(helicity(WalkKind::DiracPlus(Mass::new(0.1).unwrap()), [0.0; 3]).is_err());
    }

    #[test]
    fn group_velocity_examples() {
        let v = group_velocity(WalkKind::WeylPlus, [PI / 2.0, 0.0, 0.0]).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15 && v[1].abs() < 1e-15 && v[2].abs() < 1e-15);
        for eps in [1e-2, 1e-3, 1e-4] {
            let v = group_velocity(WalkKind::WeylPlus, [eps, 0.0, 0.0]).unwrap();
            assert!((norm3(v) - 1.0).abs() < 1e-6);
        }
        assert!(matches!(
            group_velocity(WalkKind::WeylPlus, [0.0; 3]),
            Err(Error::NonDifferentiable(_))
        ));
    }

    #[test]
    fn group_velocity_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for kind in all_kinds() {
            for _ in 0..50 {
                let k = random_k(&mut rng);
                let Ok(v) = group_velocity(kind, k) else { continue };
                // oracle: arccos of the trace identity, independent of the eigen path
                let omega = |k: [f64; 3]| {
                    let (d, _) = weyl_coefficients(kind.sign(), k);
                    let n = kind.mass().map_or(1.0, |m| m.n());
                    (n * d).clamp(-1.0, 1.0).acos()
                };
                let h = 1e-6;
                for a in 0..3 {
                    let mut kp = k;
                    let mut km = k;
                    kp[a] += h;
                    km[a] -= h;
                    let fd = (omega(kp) - omega(km)) / (2.0 * h);
                    assert!((fd - v[a]).abs() < 1e-6 * (1.0 + fd.abs()), "{}: {fd} vs {}", kind.name(), v[a]);
                }
            }
        }
    }

    #[test]
    fn interpolating_hamiltonian_round_trip() {
        assert_eq!(
            interpolating_hamiltonian(WalkKind::WeylPlus, [0.0; 3]).unwrap(),
            CMatrix::zeros(2, 2)
        );
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for kind in all_kinds() {
            for _ in 0..100 {
                let k = random_k(&mut rng);
                let h = match interpolating_hamiltonian(kind, k) {
                    Ok(h) => h,
                    Err(Error::BranchAmbiguity(_)) => continue,
                    Err(e) => panic!("{e}"),
                };
                let u = crate::linalg::expm_hermitian(&h, 1.0);
                assert!(op_norm(&(u - walk_matrix_raw(kind, k))) < 1e-10);
            }
        }
        // omega = pi at (pi, pi, pi)/... corner where d = -1
        let corner = [PI / 2.0, PI / 2.0, -PI / 2.0];
        assert!(in_brillouin(corner));
        let (d, _) = weyl_coefficients(Sign::Plus, corner);
        assert!((d + 1.0).abs() < 1e-15);
        assert!(matches!(
            interpolating_hamiltonian(WalkKind::WeylPlus, corner),
            Err(Error::BranchAmbiguity(_))
        ));
    }

    #[test]
    fn interpolating_hamiltonian_remainder_is_second_order() {
        // H_I(k) - k.sigma scales as |k|^2 off the axes, and vanishes on them
        let dir = [0.6, -0.48, 0.64];
        let mut ratios = Vec::new();
        for s in [0.04, 0.02, 0.01, 0.005] {
            let k = dir.map(|x| x * s);
            let h = interpolating_hamiltonian(WalkKind::WeylPlus, k).unwrap();
            let rem = op_norm(&(h - dot_pauli(k, &pauli())));
            ratios.push(rem / (s * s));
        }
        let spread = ratios.iter().cloned().fold(f64::MIN, f64::max)
            / ratios.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1.05, "{ratios:?}");
        let h = interpolating_hamiltonian(WalkKind::WeylPlus, [0.03, 0.0, 0.0]).unwrap();
        assert!(op_norm(&(h - dot_pauli([0.03, 0.0, 0.0], &pauli()))) < 1e-15);
    }

    #[test]
    fn spectrum_is_exp_pm_i_omega() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for kind in all_kinds() {
            for _ in 0..200 {
                let k = random_k(&mut rng);
                assert!(spectrum_residual(kind, k).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn unitarity_examples() {
        let r = verify_unitarity(&transition_matrices(WalkKind::WeylPlus));
        assert!(r.pass && r.max_residual < 1e-14, "{r:?}");
        let r = verify_unitarity(&transition_matrices(WalkKind::WeylPlus).perturbed(1.01));
        assert!(!r.pass);
        assert!(r.violating_condition.unwrap().starts_with("completeness"));
        let r = verify_unitarity(&transition_matrices(WalkKind::DiracPlus(Mass::new(0.3).unwrap())));
        assert!(r.pass, "{r:?}");
        for kind in all_kinds() {
            assert!(verify_unitarity(&transition_matrices(kind)).pass, "{}", kind.name());
        }
    }

    #[test]
    fn isotropy_examples() {
        let set = transition_matrices(WalkKind::WeylPlus);
        let r = verify_isotropy(&set, &weyl_isotropy_action()).unwrap();
        assert!(r.pass && r.max_residual < 1e-14);
        let trivial = IsotropyAction {
            permutations: klein_permutations(),
            representation: vec![identity(2); 4],
        };
        assert!(!verify_isotropy(&set, &trivial).unwrap().pass);
        let partial = IsotropyAction {
            permutations: vec![[0, 1, 2, 3], [1, 0, 3, 2]],
            representation: vec![identity(2); 2],
        };
        assert_eq!(verify_isotropy(&set, &partial), Err(Error::NonTransitiveAction));
    }

    #[test]
    fn isotropy_search_for_every_two_component_walk() {
        let [sx, sy, sz] = pauli();
        let transposed = IsotropyAction {
            permutations: klein_permutations(),
            representation: vec![identity(2), &sx * I, -(&sy * I), &sz * I],
        };
        for kind in [WalkKind::WeylPlus, WalkKind::WeylMinus, WalkKind::ZPlus, WalkKind::ZMinus] {
            let set = transition_matrices(kind);
            let found = search_isotropy_representation(&set).expect("isotropic");
            assert!(verify_isotropy(&set, &found).unwrap().pass);
            // projective: the signs of the representatives are irrelevant
            assert!(verify_isotropy(&set, &transposed).unwrap().pass, "{}", kind.name());
        }
    }
}
