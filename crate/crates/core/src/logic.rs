//! Truth tables and their multilinear integer polynomials.
//!
//! Inputs are ordered most-significant-first: in a row index `r` of a
//! `k`-input table, variable `i` sits at bit `k - 1 - i`. Monomials are
//! stored as bit masks with the same convention, so the monomial `m`
//! evaluates to 1 on row `r` exactly when `r & m == m`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{bits_row, bits_string, parse_bits, row_bits};

const MAX_INPUTS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LogicError {
    #[error("input {input:?} does not match arity {k}")]
    UnknownInput { input: String, k: usize },
    #[error("output index {index} out of range for {l} outputs")]
    BadOutputIndex { index: usize, l: usize },
    #[error("malformed truth table: {0}")]
    Malformed(String),
    #[error("unknown builtin table `{0}`")]
    UnknownBuiltin(String),
}

/// A complete truth table with `k` inputs and `l` outputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TableJson", into = "TableJson")]
pub struct TruthTable {
    k: usize,
    l: usize,
    /// `outputs[r][j]` is output `j` on input row `r`.
    outputs: Vec<Vec<u8>>,
}

#[derive(Serialize, Deserialize)]
struct TableJson {
    k: usize,
    l: usize,
    rows: BTreeMap<String, String>,
}

impl TryFrom<TableJson> for TruthTable {
    type Error = LogicError;
    fn try_from(j: TableJson) -> Result<Self, LogicError> {
        if j.k == 0 || j.k > MAX_INPUTS || j.l == 0 {
            return Err(LogicError::Malformed(format!("bad arity k={} l={}", j.k, j.l)));
        }
        if j.rows.len() != 1 << j.k {
            return Err(LogicError::Malformed(format!(
                "expected {} rows, found {}",
                1usize << j.k,
                j.rows.len()
            )));
        }
        let mut outputs = vec![Vec::new(); 1 << j.k];
        for (input, output) in &j.rows {
            let ib = parse_bits(input)
                .filter(|b| b.len() == j.k)
                .ok_or_else(|| LogicError::Malformed(format!("bad input `{input}`")))?;
            let ob = parse_bits(output)
                .filter(|b| b.len() == j.l)
                .ok_or_else(|| LogicError::Malformed(format!("bad output `{output}`")))?;
            outputs[bits_row(&ib)] = ob;
        }
        Ok(TruthTable { k: j.k, l: j.l, outputs })
    }
}

impl From<TruthTable> for TableJson {
    fn from(t: TruthTable) -> Self {
        let rows = t
            .outputs
            .iter()
            .enumerate()
            .map(|(r, o)| (bits_string(&row_bits(r, t.k)), bits_string(o)))
            .collect();
        TableJson { k: t.k, l: t.l, rows }
    }
}

impl TruthTable {
    /// Builds a table by evaluating `f` on every input (bits MSB-first).
    pub fn from_fn(k: usize, l: usize, mut f: impl FnMut(&[u8]) -> Vec<u8>) -> Self {
        assert!((1..=MAX_INPUTS).contains(&k) && l >= 1, "bad arity");
        let outputs = (0..1usize << k)
            .map(|r| {
                let o = f(&row_bits(r, k));
                assert_eq!(o.len(), l, "output arity mismatch");
                o.into_iter().map(|b| b & 1).collect()
            })
            .collect();
        Self { k, l, outputs }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn n_rows(&self) -> usize {
        self.outputs.len()
    }

    /// Output bits of row index `r`.
    pub fn row(&self, r: usize) -> &[u8] {
        &self.outputs[r]
    }

    pub fn output(&self, r: usize, j: usize) -> u8 {
        self.outputs[r][j]
    }

    pub fn eval_output(&self, input: &[u8]) -> Result<&[u8], LogicError> {
        if input.len() != self.k || input.iter().any(|&b| b > 1) {
            return Err(LogicError::UnknownInput { input: format!("{input:?}"), k: self.k });
        }
        Ok(&self.outputs[bits_row(input)])
    }

    pub fn eval_output_str(&self, input: &str) -> Result<&[u8], LogicError> {
        let bits = parse_bits(input)
            .ok_or_else(|| LogicError::UnknownInput { input: input.into(), k: self.k })?;
        self.eval_output(&bits)
    }

    /// One of `and, or, xor, nand, nor, nxor, half_adder, full_adder`.
    pub fn builtin(name: &str) -> Result<Self, LogicError> {
        let gate2 = |f: fn(u8, u8) -> u8| TruthTable::from_fn(2, 1, |b| vec![f(b[0], b[1])]);
        Ok(match name {
            "and" => gate2(|a, b| a & b),
            "or" => gate2(|a, b| a | b),
            "xor" => gate2(|a, b| a ^ b),
            "nand" => gate2(|a, b| 1 - (a & b)),
            "nor" => gate2(|a, b| 1 - (a | b)),
            "nxor" => gate2(|a, b| 1 - (a ^ b)),
            "half_adder" => Self::half_adder(),
            "full_adder" => Self::full_adder(),
            other => return Err(LogicError::UnknownBuiltin(other.into())),
        })
    }

    pub const BUILTIN_NAMES: [&'static str; 8] =
        ["and", "or", "xor", "nand", "nor", "nxor", "half_adder", "full_adder"];

    /// Outputs `(S, C)`.
    pub fn half_adder() -> Self {
        Self::from_fn(2, 2, |b| vec![b[0] ^ b[1], b[0] & b[1]])
    }

    /// Inputs `(α, β, γ)` with γ the incoming carry; outputs `(S, C_out)`.
    pub fn full_adder() -> Self {
        Self::from_fn(3, 2, |b| {
            let s = b[0] + b[1] + b[2];
            vec![s & 1, s >> 1]
        })
    }

    /// `n`-bit ripple adder: inputs `a_1..a_n, b_1..b_n, carry`, each
    /// operand MSB-first; outputs the `n + 1` bits of the sum, MSB-first.
    pub fn adder(n: usize) -> Self {
        assert!(n >= 1 && 2 * n < MAX_INPUTS);
        Self::from_fn(2 * n + 1, n + 1, |b| {
            let a = bits_row(&b[..n]);
            let bb = bits_row(&b[n..2 * n]);
            let s = a + bb + b[2 * n] as usize;
            row_bits(s, n + 1)
        })
    }
}

/// Multilinear polynomial with integer coefficients in `k` Boolean
/// variables. Keys are monomial masks (see module docs).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingPolynomial {
    pub k: usize,
    pub coeffs: BTreeMap<u32, i64>,
}

impl RingPolynomial {
    pub fn zero(k: usize) -> Self {
        Self { k, coeffs: BTreeMap::new() }
    }

    pub fn constant(k: usize, c: i64) -> Self {
        let mut p = Self::zero(k);
        p.add_term(0, c);
        p
    }

    /// The single variable with index `i`.
    pub fn var(k: usize, i: usize) -> Self {
        let mut p = Self::zero(k);
        p.add_term(1 << (k - 1 - i), 1);
        p
    }

    pub fn add_term(&mut self, mask: u32, c: i64) {
        if c == 0 {
            return;
        }
        let e = self.coeffs.entry(mask).or_insert(0);
        *e += c;
        if *e == 0 {
            self.coeffs.remove(&mask);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, mask: u32) -> i64 {
        self.coeffs.get(&mask).copied().unwrap_or(0)
    }

    /// Product with idempotent reduction (`x² = x`).
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.k, other.k);
        let mut p = Self::zero(self.k);
        for (&m1, &c1) in &self.coeffs {
            for (&m2, &c2) in &other.coeffs {
                p.add_term(m1 | m2, c1 * c2);
            }
        }
        p
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.k, other.k);
        let mut p = self.clone();
        for (&m, &c) in &other.coeffs {
            p.add_term(m, c);
        }
        p
    }

    pub fn scale(&self, s: i64) -> Self {
        let mut p = Self::zero(self.k);
        for (&m, &c) in &self.coeffs {
            p.add_term(m, s * c);
        }
        p
    }

    /// `1 - self`
    pub fn complement(&self) -> Self {
        Self::constant(self.k, 1).add(&self.scale(-1))
    }

    /// Exact value on Boolean row `r`.
    pub fn eval_row(&self, r: usize) -> i64 {
        self.coeffs
            .iter()
            .filter(|(&m, _)| (r as u32) & m == m)
            .map(|(_, &c)| c)
            .sum()
    }

    fn var_names(&self) -> Vec<String> {
        if self.k <= 3 {
            ["α", "β", "γ"][..self.k].iter().map(|s| s.to_string()).collect()
        } else {
            (1..=self.k).map(|i| format!("x{i}")).collect()
        }
    }
}

impl fmt::Display for RingPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let names = self.var_names();
        let mut terms: Vec<(u32, i64)> = self.coeffs.iter().map(|(&m, &c)| (m, c)).collect();
        // constant first, then by degree, then lexicographic in variable order
        terms.sort_by_key(|&(m, _)| (m.count_ones(), std::cmp::Reverse(m)));
        for (n, (m, c)) in terms.into_iter().enumerate() {
            let mono: String = (0..self.k)
                .filter(|&i| m & (1 << (self.k - 1 - i)) != 0)
                .map(|i| names[i].as_str())
                .collect();
            let sign = if c < 0 { "-" } else { "+" };
            if n == 0 {
                if c < 0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            let a = c.unsigned_abs();
            if mono.is_empty() {
                write!(f, "{a}")?;
            } else if a == 1 {
                write!(f, "{mono}")?;
            } else {
                write!(f, "{a}{mono}")?;
            }
        }
        Ok(())
    }
}

/// Möbius transform of a 0/1 column indexed by row.
fn mobius(k: usize, column: impl Fn(usize) -> i64) -> RingPolynomial {
    let n = 1usize << k;
    let mut a: Vec<i64> = (0..n).map(column).collect();
    for bit in 0..k {
        let step = 1 << bit;
        for r in 0..n {
            if r & step != 0 {
                a[r] -= a[r ^ step];
            }
        }
    }
    let mut p = RingPolynomial::zero(k);
    for (m, c) in a.into_iter().enumerate() {
        p.add_term(m as u32, c);
    }
    p
}

/// The unique multilinear polynomial agreeing with output `index`.
pub fn to_ring_polynomial(t: &TruthTable, index: usize) -> Result<RingPolynomial, LogicError> {
    if index >= t.l() {
        return Err(LogicError::BadOutputIndex { index, l: t.l() });
    }
    Ok(mobius(t.k(), |r| t.output(r, index) as i64))
}

/// Reduced product of `1 - μ_j` over all outputs: zero exactly on rows where
/// some output is 1.
pub fn annihilator(t: &TruthTable) -> RingPolynomial {
    (0..t.l()).fold(RingPolynomial::constant(t.k(), 1), |acc, j| {
        acc.mul(&to_ring_polynomial(t, j).expect("index in range").complement())
    })
}

/// Evaluates at a real point (one value per variable).
pub fn eval_poly(p: &RingPolynomial, point: &[f64]) -> Result<f64, LogicError> {
    if point.len() != p.k {
        return Err(LogicError::UnknownInput { input: format!("{point:?}"), k: p.k });
    }
    Ok(p.coeffs
        .iter()
        .map(|(&m, &c)| {
            (0..p.k)
                .filter(|&i| m & (1 << (p.k - 1 - i)) != 0)
                .map(|i| point[i])
                .product::<f64>()
                * c as f64
        })
        .sum())
}
