//! Quantum Hamiltonian Computing logic gates.
//!
//! Logical inputs enter a small real symmetric Hamiltonian (the calculating
//! block) as matrix entries; outputs are read from its spectrum, either at a
//! fixed energy through kernel vectors, or at several energies through
//! resonances. The crate covers the gate catalog, Schur-complement synthesis
//! of adders, multi-energy reading intervals, Rabi dynamics of the pointer
//! states and lead-coupled transmission.

pub mod dynamics;
pub mod gates;
pub mod linalg;
pub mod logic;
pub mod multiband;
pub mod schur;
pub mod transport;

pub use linalg::{SymMatrix, Spectrum};
pub use logic::TruthTable;

/// Reduced Planck constant in eV·fs.
pub const HBAR_EV_FS: f64 = 0.6582119569;

/// Bits of row `r` for `k` inputs, most significant first.
pub fn row_bits(r: usize, k: usize) -> Vec<u8> {
    (0..k).map(|i| ((r >> (k - 1 - i)) & 1) as u8).collect()
}

/// Inverse of [`row_bits`].
pub fn bits_row(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | (b as usize & 1))
}

/// Shortest round-trip text for CSV cells: plain notation in
/// `[1e-4, 1e15)`, exponent notation otherwise. Negative zero prints as `0`.
pub fn format_num(x: f64) -> String {
    let x = x + 0.0;
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

pub fn bits_string(bits: &[u8]) -> String {
    bits.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect()
}

/// Parses a string of `0`/`1` characters.
pub fn parse_bits(s: &str) -> Option<Vec<u8>> {
    s.chars()
        .map(|c| match c {
            '0' => Some(0),
            '1' => Some(1),
            _ => None,
        })
        .collect()
}
