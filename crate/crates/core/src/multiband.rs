//! Multi-energy reading: one reading energy per output.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gates::{GateDescriptor, GateError};
use crate::linalg::{eig_sym, Spectrum};
use crate::logic::TruthTable;
use crate::{bits_string, row_bits};

/// Eigenvalues closer than this are one level.
pub const LEVEL_TOL: f64 = 1e-9;
/// Tolerance of the equal-weight condition in [`optimize_me_half_adder`].
pub const WEIGHT_COND_TOL: f64 = 1e-9;
const READ_STATE: usize = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultibandError {
    #[error("no valid reading interval in [{lo}, {hi}]")]
    NoInterval { lo: f64, hi: f64 },
    #[error("grid needs at least {min} points, got {got}")]
    BadGrid { min: usize, got: usize },
    #[error("bad energy range [{0}, {1}]")]
    BadRange(f64, f64),
    #[error("gap metrics need a two-input gate, got {0} inputs")]
    WrongArity(usize),
    #[error("output {index} out of range for {l} outputs")]
    BadOutput { index: usize, l: usize },
    #[error("attach state {state} out of range for order {n}")]
    BadState { state: usize, n: usize },
    #[error("empty grid")]
    EmptyGrid,
    #[error(transparent)]
    Gate(#[from] GateError),
}

/// Sorted eigenvalues per input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RootSets {
    pub roots: BTreeMap<String, Vec<f64>>,
}

impl RootSets {
    pub fn of(d: &GateDescriptor) -> Result<Self, MultibandError> {
        let g = d.compile()?;
        let roots = (0..1usize << g.arity)
            .map(|r| (bits_string(&row_bits(r, g.arity)), eig_sym(&g.build_row(r)).values))
            .collect();
        Ok(Self { roots })
    }

    pub fn get(&self, input: &str) -> &[f64] {
        self.roots.get(input).map_or(&[], Vec::as_slice)
    }
}

/// `max_{x∈xs} min_{y∈ys} |x - y|` and the maximizing `x` (largest on ties).
fn max_min(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let mut best = (0.0, f64::NAN);
    for &x in xs {
        let m = ys.iter().map(|y| (x - y).abs()).fold(f64::INFINITY, f64::min);
        let m = if m.is_finite() { m } else { 0.0 };
        if best.1.is_nan() || m > best.0 + 1e-12 || ((m - best.0).abs() <= 1e-12 && x > best.1) {
            best = (m, x);
        }
    }
    best
}

/// `(Δ₁, Δ₂)`: how far the best XOR resonance (inputs 01, 10) sits from the
/// levels of 00 and 11, and the best AND resonance (input 11) from those of
/// 00, 01 and 10.
pub fn gap_metrics(d: &GateDescriptor) -> Result<(f64, f64), MultibandError> {
    let k = d.arity()?;
    if k != 2 {
        return Err(MultibandError::WrongArity(k));
    }
    let rs = RootSets::of(d)?;
    let (d1, _) = xor_gap(&rs);
    let (d2, _) = and_gap(&rs);
    Ok((d1, d2))
}

fn xor_gap(rs: &RootSets) -> (f64, f64) {
    let xs: Vec<f64> = [rs.get("01"), rs.get("10")].concat();
    let ys: Vec<f64> = [rs.get("00"), rs.get("11")].concat();
    max_min(&xs, &ys)
}

fn and_gap(rs: &RootSets) -> (f64, f64) {
    let ys: Vec<f64> = [rs.get("00"), rs.get("01"), rs.get("10")].concat();
    max_min(rs.get("11"), &ys)
}

/// Levels of one spectrum with their weight on `state`.
fn levels(spec: &Spectrum, state: usize) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < spec.len() {
        let mut j = i;
        while j + 1 < spec.len() && spec.values[j + 1] - spec.values[i] <= LEVEL_TOL {
            j += 1;
        }
        let idx: Vec<usize> = (i..=j).collect();
        out.push((spec.values[i], spec.projector_weight(&idx, state)));
        i = j + 1;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadingInterval {
    pub output_index: usize,
    pub lo: f64,
    pub hi: f64,
    /// Output-1 inputs and the resonance each shows inside the interval.
    pub witnesses: Vec<(String, f64)>,
    pub attach_state: usize,
    /// Smallest best-resonance weight among the witnesses.
    pub min_weight: f64,
    /// Energy at which every witness resonates, when there is one.
    pub common_energy: Option<f64>,
}

impl ReadingInterval {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, e: f64) -> bool {
        self.lo <= e && e <= self.hi
    }
}

/// Reading geometry of one output: weighted levels of output-0 inputs
/// (which disqualify) and of output-1 inputs (which witness).
struct Levels {
    disq: Vec<f64>,
    witness: Vec<(String, Vec<(f64, f64)>)>,
}

impl Levels {
    fn new(d: &GateDescriptor, t: &TruthTable, output: usize, state: usize, wmin: f64) -> Result<Self, MultibandError> {
        let g = d.compile()?;
        if t.k() != g.arity {
            return Err(GateError::WrongArity { expected: g.arity, got: t.k() }.into());
        }
        if output >= t.l() {
            return Err(MultibandError::BadOutput { index: output, l: t.l() });
        }
        if state >= g.order() {
            return Err(MultibandError::BadState { state, n: g.order() });
        }
        let mut disq = Vec::new();
        let mut witness = Vec::new();
        for r in 0..t.n_rows() {
            let lv: Vec<(f64, f64)> =
                levels(&eig_sym(&g.build_row(r)), state).into_iter().filter(|&(_, w)| w > wmin * wmin).collect();
            if t.output(r, output) == 1 {
                witness.push((bits_string(&row_bits(r, t.k())), lv));
            } else {
                disq.extend(lv.into_iter().map(|(e, _)| e));
            }
        }
        disq.sort_by(f64::total_cmp);
        Ok(Self { disq, witness })
    }

    /// Interval around the disqualifier-free gap containing `e`, if valid.
    fn interval_at(&self, e: f64, range: (f64, f64)) -> Option<(f64, f64, Vec<(String, f64, f64)>)> {
        if self.disq.iter().any(|&x| (x - e).abs() <= LEVEL_TOL) {
            return None;
        }
        let below = self.disq.iter().copied().rev().find(|&x| x < e);
        let above = self.disq.iter().copied().find(|&x| x > e);
        let inside = |x: f64| {
            below.is_none_or(|b| x > b + LEVEL_TOL)
                && above.is_none_or(|a| x < a - LEVEL_TOL)
                && x >= range.0
                && x <= range.1
        };
        let mut picks = Vec::new();
        let (mut wlo, mut whi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (input, lv) in &self.witness {
            let mut best: Option<(f64, f64)> = None;
            for &(x, w) in lv.iter().filter(|(x, _)| inside(*x)) {
                wlo = wlo.min(x);
                whi = whi.max(x);
                if best.is_none_or(|(_, bw)| w > bw) {
                    best = Some((x, w));
                }
            }
            let (x, w) = best?;
            picks.push((input.clone(), x, w));
        }
        if picks.is_empty() {
            return None;
        }
        let lo = below.map_or(range.0, |b| (0.5 * (b + wlo)).max(range.0));
        let hi = above.map_or(range.1, |a| (0.5 * (whi + a)).min(range.1));
        (lo <= e && e <= hi && lo < hi).then_some((lo, hi, picks))
    }

    fn common_energy(&self, lo: f64, hi: f64) -> Option<f64> {
        let (_, first) = self.witness.first()?;
        first.iter().map(|&(x, _)| x).filter(|&x| lo <= x && x <= hi).find(|&x| {
            self.witness.iter().all(|(_, lv)| lv.iter().any(|&(y, _)| (y - x).abs() <= LEVEL_TOL))
        })
    }
}

pub const MIN_GRID: usize = 100;

/// Maximal reading intervals of one output on a uniform energy grid, longest
/// first. An interval is a gap between levels of output-0 inputs (weight on
/// the attach state above `weight_min²`) that holds such a level of every
/// output-1 input; its ends are the midpoints between the bounding
/// disqualifying level and the nearest witnessing level, clipped to `range`.
/// Intervals holding no grid point are not reported.
pub fn find_intervals(
    d: &GateDescriptor,
    t: &TruthTable,
    output_index: usize,
    attach_state: usize,
    range: (f64, f64),
    grid_n: usize,
    weight_min: f64,
) -> Result<Vec<ReadingInterval>, MultibandError> {
    if grid_n < MIN_GRID {
        return Err(MultibandError::BadGrid { min: MIN_GRID, got: grid_n });
    }
    if !(range.0 < range.1) {
        return Err(MultibandError::BadRange(range.0, range.1));
    }
    let lv = Levels::new(d, t, output_index, attach_state, weight_min)?;
    let mut out: Vec<ReadingInterval> = Vec::new();
    for i in 0..grid_n {
        let e = range.0 + (range.1 - range.0) * i as f64 / (grid_n - 1) as f64;
        let Some((lo, hi, picks)) = lv.interval_at(e, range) else { continue };
        if out.last().is_some_and(|iv| iv.lo == lo && iv.hi == hi) {
            continue;
        }
        out.push(ReadingInterval {
            output_index,
            lo,
            hi,
            min_weight: picks.iter().map(|p| p.2).fold(f64::INFINITY, f64::min),
            witnesses: picks.into_iter().map(|(s, x, _)| (s, x)).collect(),
            attach_state,
            common_energy: lv.common_energy(lo, hi),
        });
    }
    if out.is_empty() {
        return Err(MultibandError::NoInterval { lo: range.0, hi: range.1 });
    }
    out.sort_by(|a, b| b.width().total_cmp(&a.width()).then(a.lo.total_cmp(&b.lo)));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizePoint {
    pub e: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// Selected AND resonance (input 11) and its weight on the read state.
    pub energy_and: f64,
    pub weight_and: f64,
    /// Selected XOR resonance (inputs 01 and 10) and its smaller weight.
    pub energy_xor: f64,
    pub weight_xor: f64,
    pub feasible: bool,
}

impl OptimizePoint {
    pub fn weight_deviation(&self) -> f64 {
        (self.weight_and - 0.5).abs().max((self.weight_xor - 0.5).abs())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub best: OptimizePoint,
    pub points: Vec<OptimizePoint>,
}

fn weight_at(d: &GateDescriptor, input: usize, e: f64) -> Result<f64, MultibandError> {
    let spec = eig_sym(&d.compile()?.build_row(input));
    Ok(spec.projector_weight(&spec.cluster(e, LEVEL_TOL), READ_STATE))
}

pub fn evaluate_me_half_adder(e: f64) -> Result<OptimizePoint, MultibandError> {
    let d = GateDescriptor::me_half_adder3(e);
    let rs = RootSets::of(&d)?;
    let (delta1, energy_xor) = xor_gap(&rs);
    let (delta2, energy_and) = and_gap(&rs);
    let weight_and = weight_at(&d, 0b11, energy_and)?;
    let weight_xor = weight_at(&d, 0b01, energy_xor)?.min(weight_at(&d, 0b10, energy_xor)?);
    let mut p = OptimizePoint { e, delta1, delta2, energy_and, weight_and, energy_xor, weight_xor, feasible: false };
    p.feasible = p.weight_deviation() <= WEIGHT_COND_TOL;
    Ok(p)
}

/// Grid search over the on-site energy `e` of the three-state multi-energy
/// half adder. Points where both selected resonances carry weight 1/2 on the
/// read state are feasible; the feasible point with the largest
/// `min(Δ₁, Δ₂)` wins. Without feasible points the smallest weight deviation
/// wins, ties going to smaller `|e|`.
pub fn optimize_me_half_adder(e_grid: &[f64]) -> Result<Optimum, MultibandError> {
    if e_grid.is_empty() {
        return Err(MultibandError::EmptyGrid);
    }
    let points = e_grid.iter().map(|&e| evaluate_me_half_adder(e)).collect::<Result<Vec<_>, _>>()?;
    let gap = |p: &OptimizePoint| p.delta1.min(p.delta2);
    let best = if points.iter().any(|p| p.feasible) {
        points
            .iter()
            .filter(|p| p.feasible)
            .fold(None::<&OptimizePoint>, |b, p| match b {
                Some(b) if gap(b) >= gap(p) => Some(b),
                _ => Some(p),
            })
    } else {
        points.iter().fold(None::<&OptimizePoint>, |b, p| match b {
            Some(b)
                if b.weight_deviation() < p.weight_deviation() - 1e-12
                    || ((b.weight_deviation() - p.weight_deviation()).abs() <= 1e-12 && b.e.abs() <= p.e.abs()) =>
            {
                Some(b)
            }
            _ => Some(p),
        })
    }
    .cloned()
    .expect("grid is nonempty");
    Ok(Optimum { best, points })
}
