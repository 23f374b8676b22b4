//! Pointer-state dynamics of a complete gate Hamiltonian.
//!
//! Each reading attaches two degenerate pointer states `φ_a`, `φ_b` at the
//! reading energy, both coupled with `ε` to one calculating-block state.
//! The logical output is read from the `φ_a → φ_b` population transfer.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gates::{CompiledGate, ReadingSpec};
use crate::linalg::{eig_sym, Spectrum, SymMatrix};
use crate::HBAR_EV_FS;

pub const DEFAULT_RESONANCE_TOL: f64 = 1e-6;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_SAMPLES: usize = 4001;
const FS_PER_PS: f64 = 1000.0;
/// Squared attach weights below this do not couple.
const COUPLING_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("attach state {state} out of range for order {n}")]
    BadAttach { state: usize, n: usize },
    #[error("pointer coupling must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("state {state} out of range for order {n}")]
    BadState { state: usize, n: usize },
    #[error("t_max must be positive, got {0}")]
    BadTime(f64),
    #[error("need at least two samples")]
    BadSamples,
    #[error("threshold must lie in (0, 1), got {0}")]
    BadThreshold(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointerPair {
    pub a: usize,
    pub b: usize,
    pub attach: usize,
    pub output: usize,
    pub epsilon: f64,
    pub energy: f64,
}

/// Calculating block plus pointer pairs, appended in reading order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssembledSystem {
    pub h: SymMatrix,
    pub calc_order: usize,
    pub pairs: Vec<PointerPair>,
}

pub fn assemble_full(h0: &SymMatrix, readings: &[ReadingSpec]) -> Result<AssembledSystem, DynamicsError> {
    let m = h0.order();
    let n = m + 2 * readings.len();
    let mut h = SymMatrix::zeros(n);
    for i in 0..m {
        for j in i..m {
            h.set(i, j, h0.get(i, j));
        }
    }
    let mut pairs = Vec::with_capacity(readings.len());
    for (k, r) in readings.iter().enumerate() {
        if r.state >= m {
            return Err(DynamicsError::BadAttach { state: r.state, n: m });
        }
        if !(r.epsilon > 0.0) {
            return Err(DynamicsError::BadEpsilon(r.epsilon));
        }
        let (a, b) = (m + 2 * k, m + 2 * k + 1);
        for p in [a, b] {
            h.set(p, p, r.energy);
            h.set(r.state, p, r.epsilon);
        }
        pairs.push(PointerPair { a, b, attach: r.state, output: r.output, epsilon: r.epsilon, energy: r.energy });
    }
    Ok(AssembledSystem { h, calc_order: m, pairs })
}

/// Exact propagator `e^{-iHt/ℏ}` from one diagonalization.
#[derive(Clone, Debug)]
pub struct Propagator {
    spec: Spectrum,
}

impl Propagator {
    pub fn new(h: &SymMatrix) -> Self {
        Self { spec: eig_sym(h) }
    }

    pub fn order(&self) -> usize {
        self.spec.len()
    }

    /// Amplitudes at time `t_ps` (any sign) starting from basis state `initial`.
    pub fn amplitudes(&self, initial: usize, t_ps: f64) -> Vec<Complex64> {
        let n = self.order();
        let t_fs = t_ps * FS_PER_PS;
        let mut psi = vec![Complex64::new(0.0, 0.0); n];
        for (lam, v) in self.spec.values.iter().zip(&self.spec.vectors) {
            let ph = Complex64::from_polar(v[initial], -lam * t_fs / HBAR_EV_FS);
            for (p, &vj) in psi.iter_mut().zip(v) {
                *p += ph * vj;
            }
        }
        psi
    }

    pub fn populations(&self, initial: usize, t_ps: f64) -> Vec<f64> {
        self.amplitudes(initial, t_ps).iter().map(|z| z.norm_sqr()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSeries {
    pub times_ps: Vec<f64>,
    /// `populations[s][j]`: state `j` at sample `s`.
    pub populations: Vec<Vec<f64>>,
}

impl PopulationSeries {
    pub fn state(&self, j: usize) -> Vec<f64> {
        self.populations.iter().map(|p| p[j]).collect()
    }

    pub fn max_of(&self, j: usize) -> f64 {
        self.populations.iter().map(|p| p[j]).fold(0.0, f64::max)
    }

    pub fn max_norm_error(&self) -> f64 {
        self.populations.iter().map(|p| (p.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.populations.first().map_or(0, Vec::len);
        write!(w, "time_ps")?;
        for j in 0..n {
            write!(w, ",pop_state_{j}")?;
        }
        writeln!(w)?;
        for (t, p) in self.times_ps.iter().zip(&self.populations) {
            write!(w, "{}", crate::format_num(*t))?;
            for x in p {
                write!(w, ",{}", crate::format_num(*x))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn sample_times(t_max: f64, n: usize) -> Result<Vec<f64>, DynamicsError> {
    if !(t_max > 0.0) {
        return Err(DynamicsError::BadTime(t_max));
    }
    if n < 2 {
        return Err(DynamicsError::BadSamples);
    }
    Ok((0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect())
}

/// Populations of every state on `n_samples` uniform times in `[0, t_max]` ps.
pub fn evolve(sys: &AssembledSystem, initial: usize, t_max: f64, n_samples: usize) -> Result<PopulationSeries, DynamicsError> {
    let n = sys.h.order();
    if initial >= n {
        return Err(DynamicsError::BadState { state: initial, n });
    }
    let times_ps = sample_times(t_max, n_samples)?;
    let prop = Propagator::new(&sys.h);
    let populations = times_ps.iter().map(|&t| prop.populations(initial, t)).collect();
    Ok(PopulationSeries { times_ps, populations })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecularFrequency {
    /// Angular frequency in rad/ps.
    pub omega: f64,
    pub resonant: bool,
    /// `(eigenvalue, attach-state component)` of the levels entering `omega`.
    pub contributions: Vec<(f64, f64)>,
}

impl SecularFrequency {
    /// Time of the first complete `φ_a → φ_b` transfer, ps.
    pub fn transfer_time(&self) -> f64 {
        if self.omega > 0.0 {
            std::f64::consts::PI / self.omega
        } else {
            f64::INFINITY
        }
    }
}

/// Effective `φ_a ↔ φ_b` frequency for a reading on `h0`. Off resonance,
/// `ℏΩ/2 = ε² |Σ c_n² / (E - λ_n)|`; on resonance the three-level model
/// `{φ_a, resonant level, φ_b}` gives `Ω = √2 ε |c| / ℏ`.
pub fn secular_frequency(h0: &SymMatrix, reading: &ReadingSpec, resonance_tol: f64) -> Result<SecularFrequency, DynamicsError> {
    if reading.state >= h0.order() {
        return Err(DynamicsError::BadAttach { state: reading.state, n: h0.order() });
    }
    if !(reading.epsilon > 0.0) {
        return Err(DynamicsError::BadEpsilon(reading.epsilon));
    }
    let spec = eig_sym(h0);
    let eps = reading.epsilon;
    let comps: Vec<(f64, f64)> =
        spec.values.iter().zip(&spec.vectors).map(|(&l, v)| (l, v[reading.state])).collect();
    let res: Vec<(f64, f64)> = comps
        .iter()
        .copied()
        .filter(|&(l, c)| (l - reading.energy).abs() <= resonance_tol && c * c > COUPLING_FLOOR)
        .collect();
    let to_ps = FS_PER_PS / HBAR_EV_FS;
    if !res.is_empty() {
        let c = res.iter().map(|&(_, c)| c * c).sum::<f64>().sqrt();
        return Ok(SecularFrequency { omega: 2f64.sqrt() * eps * c * to_ps, resonant: true, contributions: res });
    }
    let used: Vec<(f64, f64)> = comps.into_iter().filter(|&(_, c)| c * c > COUPLING_FLOOR).collect();
    let sum: f64 = used.iter().map(|&(l, c)| c * c / (reading.energy - l)).sum();
    Ok(SecularFrequency { omega: 2.0 * eps * eps * sum.abs() * to_ps, resonant: false, contributions: used })
}

/// How pointer pairs are attached when a gate is read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// All pairs at once; each pair is started and read in the joint system.
    #[default]
    Joint,
    /// One pair at a time.
    Isolated,
}

impl std::str::FromStr for Readout {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "joint" => Ok(Self::Joint),
            "isolated" => Ok(Self::Isolated),
            _ => Err(format!("unknown readout `{s}`")),
        }
    }
}

/// Largest `φ_a → φ_b` transfer of each pair of `sys` over `[0, t_max]`.
pub fn pair_transfers(sys: &AssembledSystem, t_max: f64, n_samples: usize) -> Result<Vec<f64>, DynamicsError> {
    let times = sample_times(t_max, n_samples)?;
    let prop = Propagator::new(&sys.h);
    Ok(sys
        .pairs
        .iter()
        .map(|p| times.iter().map(|&t| prop.amplitudes(p.a, t)[p.b].norm_sqr()).fold(0.0, f64::max))
        .collect())
}

/// Output bits of `sys`: bit `j` is 1 when some pair reading output `j`
/// transfers more than `threshold` within `t_max`.
pub fn classify(sys: &AssembledSystem, t_max: f64, threshold: f64, n_samples: usize) -> Result<Vec<u8>, DynamicsError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(DynamicsError::BadThreshold(threshold));
    }
    let transfers = pair_transfers(sys, t_max, n_samples)?;
    Ok(bits_from(&sys.pairs, &transfers, threshold))
}

fn bits_from(pairs: &[PointerPair], transfers: &[f64], threshold: f64) -> Vec<u8> {
    let l = pairs.iter().map(|p| p.output + 1).max().unwrap_or(0);
    let mut bits = vec![0u8; l];
    for (p, &x) in pairs.iter().zip(transfers) {
        if x > threshold {
            bits[p.output] = 1;
        }
    }
    bits
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedInput {
    pub input: String,
    pub transfers: Vec<f64>,
    pub bits: Vec<u8>,
}

/// Reads every Boolean input of `g`.
pub fn classify_gate(
    g: &CompiledGate,
    readings: &[ReadingSpec],
    readout: Readout,
    t_max: f64,
    threshold: f64,
    n_samples: usize,
) -> Result<Vec<ClassifiedInput>, DynamicsError> {
    use rayon::prelude::*;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(DynamicsError::BadThreshold(threshold));
    }
    (0..1usize << g.arity)
        .into_par_iter()
        .map(|r| {
            let h0 = g.build_row(r);
            let (pairs, transfers) = match readout {
                Readout::Joint => {
                    let sys = assemble_full(&h0, readings)?;
                    let t = pair_transfers(&sys, t_max, n_samples)?;
                    (sys.pairs, t)
                }
                Readout::Isolated => {
                    let mut pairs = Vec::new();
                    let mut ts = Vec::new();
                    for rd in readings {
                        let sys = assemble_full(&h0, std::slice::from_ref(rd))?;
                        ts.extend(pair_transfers(&sys, t_max, n_samples)?);
                        pairs.extend(sys.pairs);
                    }
                    (pairs, ts)
                }
            };
            Ok(ClassifiedInput {
                input: crate::bits_string(&crate::row_bits(r, g.arity)),
                bits: bits_from(&pairs, &transfers, threshold),
                transfers,
            })
        })
        .collect()
}
