//! Discrete-time quantum walks on the body-centred cubic Cayley graph of
//! Z^3: Weyl and Dirac automata, their continuum limits, deformed Lorentz
//! symmetry and the photon sector built from pairs of Weyl fermions.
//!
//! Modules, bottom up:
//!
//! * [`cayley`]: generators, Brillouin zone, periodic quotient lattices.
//! * [`walks`]: transition matrices, walk matrices, dispersion, unitarity
//!   and isotropy checks.
//! * [`evolve`]: spinor fields, position and momentum steppers, wave packets
//!   and observables.
//! * [`reference`]: continuum Weyl and Dirac propagators and convergence
//!   studies.
//! * [`symmetry`]: the nonlinear momentum transform preserving the walk
//!   dispersion, orbits and group-axiom checks.
//! * [`photon`]: two-particle amplitudes, the `E`/`B` bilinears and the
//!   Maxwell residual.

pub mod cayley;
pub mod error;
pub mod evolve;
pub mod linalg;
pub mod photon;
pub mod reference;
pub mod symmetry;
pub mod walks;

pub use cayley::{MomentumVector, QuotientLattice, Step};
pub use error::{Error, Result};
pub use evolve::{Branch, Direction, Evolver, Representation, SpinorField, WavePacketSpec};
pub use linalg::{CMatrix, CVector, C64};
pub use walks::{Mass, Sign, TransitionMatrixSet, WalkKind};
