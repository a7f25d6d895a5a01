//! Fixtures shared by the criterion benches in `benches/`.

use qwalk_core::cayley::QuotientLattice;
use qwalk_core::evolve::{gaussian_packet, gaussian_packet_momentum};
use qwalk_core::{Branch, SpinorField, WalkKind, WavePacketSpec};

/// Lattice periods swept by the stepping benches.
pub const PERIODS: [usize; 3] = [16, 32, 64];

fn spec(kind: WalkKind) -> WavePacketSpec {
    WavePacketSpec::new([0.2, 0.1, 0.0], 0.1, Branch::Positive, kind).expect("valid packet")
}

/// A normalised Gaussian packet in the position representation.
pub fn packet(kind: WalkKind, n: usize) -> SpinorField {
    let lattice = QuotientLattice::new(n).expect("valid period");
    gaussian_packet(&spec(kind), lattice).expect("packet fits")
}

/// The same packet in the momentum representation.
pub fn packet_momentum(kind: WalkKind, n: usize) -> SpinorField {
    let lattice = QuotientLattice::new(n).expect("valid period");
    gaussian_packet_momentum(&spec(kind), lattice).expect("packet fits")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_normalised() {
        for kind in [WalkKind::WeylPlus, WalkKind::DiracPlus(qwalk_core::Mass::new(0.2).unwrap())] {
            assert!((packet(kind, 16).norm() - 1.0).abs() < 1e-12);
            assert!((packet_momentum(kind, 16).norm() - 1.0).abs() < 1e-12);
        }
    }
}
