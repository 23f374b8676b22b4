//! Block design of fixed-energy adders.
//!
//! A calculating block is split as `[[C_x, A], [Aᵀ, B]]` where only `C_x`
//! depends on the input `x` and the columns of `A` couple the reading
//! states. Outputs are encoded by the kernel of the Schur complement
//! `S_x = B - Aᵀ C_x⁻¹ A`. Compatibility of the per-input conditions on
//! `B` gives quadratic equations in the columns of `A`, solved here by
//! elimination through Woodbury differences.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gates::{
    verify_fixed_energy, CompiledGate, CustomFamily, GateDescriptor, GateError, InputPosition, ReadingSpec,
    DEFAULT_TOL, DEFAULT_WEIGHT_MIN,
};
use crate::linalg::{dot, eig_sym, inverse, LinalgError, Matrix, SymMatrix};
use crate::logic::TruthTable;
use crate::{bits_row, bits_string, parse_bits, row_bits};

const NEWTON_MAX_ITER: usize = 200;
const NEWTON_TOL: f64 = 1e-10;
const FD_STEP: f64 = 1e-6;
const RESIDUAL_TOL: f64 = 1e-8;
const SEED_RANGE: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchurError {
    #[error("C block is singular for input {0}")]
    SingularC(String),
    #[error("projected Woodbury matrix is singular")]
    SingularProjection,
    #[error("perturbation has entries outside the given positions")]
    BadSupport,
    #[error("quadratic has no real root")]
    NoRealRoot,
    #[error("T-matrix system is singular")]
    SingularT,
    #[error("kernel condition violated: {0}")]
    DegenerateKernel(String),
    #[error("scale parameters must be nonzero")]
    BadScale,
    #[error("Newton iteration did not converge")]
    NoConvergence,
    #[error("solution fails verification: {0}")]
    ValidationFailed(String),
    #[error("qr - s^2 vanishes")]
    QrsDegenerate,
    #[error("unsupported block structure: {0}")]
    Structure(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Gate(#[from] GateError),
}

/// Input-dependent upper-left block, one matrix per Boolean input in row
/// order. Serialized as a map from input bits to rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, SymMatrix>", into = "BTreeMap<String, SymMatrix>")]
pub struct CFamily {
    arity: usize,
    mats: Vec<SymMatrix>,
}

impl TryFrom<BTreeMap<String, SymMatrix>> for CFamily {
    type Error = SchurError;
    fn try_from(map: BTreeMap<String, SymMatrix>) -> Result<Self, SchurError> {
        let arity = map.keys().next().map_or(0, String::len);
        if arity == 0 || map.len() != 1 << arity {
            return Err(SchurError::Structure("C family must list every input".into()));
        }
        let mut mats = vec![SymMatrix::zeros(0); 1 << arity];
        for (k, m) in map {
            let bits = parse_bits(&k)
                .filter(|b| b.len() == arity)
                .ok_or_else(|| SchurError::Structure(format!("bad input `{k}`")))?;
            mats[bits_row(&bits)] = m;
        }
        Self::new(arity, mats)
    }
}

impl From<CFamily> for BTreeMap<String, SymMatrix> {
    fn from(c: CFamily) -> Self {
        c.mats
            .into_iter()
            .enumerate()
            .map(|(r, m)| (bits_string(&row_bits(r, c.arity)), m))
            .collect()
    }
}

impl CFamily {
    pub fn new(arity: usize, mats: Vec<SymMatrix>) -> Result<Self, SchurError> {
        if mats.len() != 1 << arity || mats.is_empty() {
            return Err(SchurError::Structure("wrong number of C matrices".into()));
        }
        let m = mats[0].order();
        if mats.iter().any(|c| c.order() != m) {
            return Err(SchurError::Structure("C matrices differ in order".into()));
        }
        Ok(Self { arity, mats })
    }

    /// Evaluates an affine gate family on every Boolean input.
    pub fn from_gate(g: &CompiledGate) -> Self {
        let mats = (0..1usize << g.arity).map(|r| g.build_row(r)).collect();
        Self { arity: g.arity, mats }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn order(&self) -> usize {
        self.mats[0].order()
    }

    pub fn get(&self, row: usize) -> &SymMatrix {
        &self.mats[row]
    }

    pub fn inverses(&self) -> Result<Vec<SymMatrix>, SchurError> {
        self.mats
            .iter()
            .enumerate()
            .map(|(r, c)| inverse(c).map_err(|_| SchurError::SingularC(bits_string(&row_bits(r, self.arity)))))
            .collect()
    }

    /// Indices touched by `C_row - C_0`.
    pub fn support(&self, row: usize) -> Vec<usize> {
        let d = self.mats[row].sub(&self.mats[0]);
        (0..d.order()).filter(|&i| d.row(i).iter().any(|&x| x != 0.0)).collect()
    }
}

/// `(C, A, B)` with `A` of shape `m × l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockPartition {
    #[serde(rename = "C")]
    pub c: CFamily,
    #[serde(rename = "A")]
    pub a: Matrix,
    #[serde(rename = "B")]
    pub b: SymMatrix,
}

impl BlockPartition {
    pub fn new(c: CFamily, a: Matrix, b: SymMatrix) -> Result<Self, SchurError> {
        if a.nrows() != c.order() || a.ncols() != b.order() {
            return Err(SchurError::Structure(format!(
                "A is {}x{}, C has order {}, B has order {}",
                a.nrows(),
                a.ncols(),
                c.order(),
                b.order()
            )));
        }
        Ok(Self { c, a, b })
    }

    /// Partition with `A = [u, v]`.
    pub fn from_uv(c: CFamily, u: &[f64], v: &[f64], b: SymMatrix) -> Result<Self, SchurError> {
        let a = Matrix::from_columns(&[u.to_vec(), v.to_vec()])?;
        Self::new(c, a, b)
    }

    pub fn l(&self) -> usize {
        self.b.order()
    }

    /// `S = B - Aᵀ C⁻¹ A` for the input with row index `row`.
    pub fn schur_complement(&self, row: usize) -> Result<SymMatrix, SchurError> {
        let c = self.c.get(row);
        let ci = inverse(c).map_err(|_| SchurError::SingularC(bits_string(&row_bits(row, self.c.arity))))?;
        let cols: Vec<Vec<f64>> = (0..self.l()).map(|j| self.a.column(j)).collect();
        Ok(SymMatrix::from_fn(self.l(), |i, j| self.b.get(i, j) - ci.bilinear(&cols[i], &cols[j])))
    }

    pub fn assemble(&self, row: usize) -> SymMatrix {
        let m = self.c.order();
        let n = m + self.l();
        let c = self.c.get(row);
        SymMatrix::from_fn(n, |i, j| match (i < m, j < m) {
            (true, true) => c.get(i, j),
            (true, false) => self.a.get(i, j - m),
            (false, false) => self.b.get(i - m, j - m),
            (false, true) => unreachable!("upper triangle only"),
        })
    }

    /// Affine gate descriptor reproducing [`assemble`](Self::assemble) on
    /// every Boolean input.
    pub fn to_descriptor(&self) -> Result<GateDescriptor, SchurError> {
        let k = self.c.arity;
        let base = self.assemble(0);
        let n = base.order();
        let mut positions = Vec::new();
        let names = ["alpha", "beta", "gamma"];
        if k > names.len() {
            return Err(SchurError::Structure("at most three inputs".into()));
        }
        let mut diffs = Vec::new();
        for v in 0..k {
            let d = self.assemble(1 << (k - 1 - v)).sub(&base);
            for i in 0..n {
                for j in i..n {
                    if d.get(i, j) != 0.0 {
                        positions.push(InputPosition { var: names[v].into(), i, j, scale: d.get(i, j) });
                    }
                }
            }
            diffs.push(d);
        }
        for r in 0..1usize << k {
            let bits = row_bits(r, k);
            let mut m = base.clone();
            for (v, d) in diffs.iter().enumerate() {
                if bits[v] == 1 {
                    m = m.add(d);
                }
            }
            if m.max_diff(&self.assemble(r)) > 1e-12 {
                return Err(SchurError::Structure("C family is not affine in its inputs".into()));
            }
        }
        Ok(GateDescriptor::custom(CustomFamily { order: n, base: base.rows(), input_positions: positions }))
    }
}

/// `C_a⁻¹ - C000⁻¹` through the Woodbury identity. The perturbation
/// `C_a - C000` restricted to `positions` is diagonalized as `Uᵀ D U`
/// (zero modes dropped), giving `-Q Uᵀ (D⁻¹ + U Q Uᵀ)⁻¹ U Q`, `Q = C000⁻¹`.
pub fn woodbury_diff(c000: &SymMatrix, c_a: &SymMatrix, positions: &[usize]) -> Result<SymMatrix, SchurError> {
    let n = c000.order();
    let delta = c_a.sub(c000);
    for i in 0..n {
        for j in 0..n {
            if delta.get(i, j) != 0.0 && !(positions.contains(&i) && positions.contains(&j)) {
                return Err(SchurError::BadSupport);
            }
        }
    }
    let q = inverse(c000).map_err(|_| SchurError::SingularC("reference".into()))?;
    let sub = delta.principal(positions);
    let spec = eig_sym(&sub);
    let scale = sub.max_abs().max(f64::MIN_POSITIVE);
    let modes: Vec<usize> = (0..spec.len()).filter(|&i| spec.values[i].abs() > 1e-12 * scale).collect();
    if modes.is_empty() {
        return Ok(SymMatrix::zeros(n));
    }
    // rows of U embedded in the full space
    let u: Vec<Vec<f64>> = modes
        .iter()
        .map(|&mi| {
            let mut row = vec![0.0; n];
            for (a, &p) in positions.iter().enumerate() {
                row[p] = spec.vectors[mi][a];
            }
            row
        })
        .collect();
    let uq: Vec<Vec<f64>> = u.iter().map(|r| q.mul_vec(r)).collect();
    let small = SymMatrix::from_fn(modes.len(), |a, b| {
        let d = if a == b { 1.0 / spec.values[modes[a]] } else { 0.0 };
        d + dot(&u[a], &uq[b])
    });
    let inv = inverse(&small).map_err(|_| SchurError::SingularProjection)?;
    Ok(SymMatrix::from_fn(n, |i, j| {
        let mut s = 0.0;
        for a in 0..modes.len() {
            for b in 0..modes.len() {
                s += uq[a][i] * inv.get(a, b) * uq[b][j];
            }
        }
        -s
    }))
}

/// T-matrices of a C family relative to its zero-input member:
/// `u (C_x⁻¹ - C_0⁻¹) v = -ũ_P T_x ṽ_P` with `ũ = C_0⁻¹ u` and `P` the
/// support of `C_x - C_0`.
#[derive(Clone, Debug)]
pub struct TMatrices {
    pub c0: SymMatrix,
    pub q: SymMatrix,
    /// Per input row: support and `T = (Q_PP + Δ_PP⁻¹)⁻¹`. Row 0 is empty.
    pub t: Vec<(Vec<usize>, SymMatrix)>,
}

impl TMatrices {
    pub fn new(cf: &CFamily) -> Result<Self, SchurError> {
        let c0 = cf.get(0).clone();
        let q = inverse(&c0).map_err(|_| SchurError::SingularC(bits_string(&row_bits(0, cf.arity()))))?;
        let mut t = vec![(Vec::new(), SymMatrix::zeros(0))];
        for r in 1..1usize << cf.arity() {
            let p = cf.support(r);
            let d = cf.get(r).sub(&c0).principal(&p);
            let di = inverse(&d).map_err(|_| SchurError::SingularProjection)?;
            let k = q.principal(&p).add(&di);
            t.push((p, inverse(&k).map_err(|_| SchurError::SingularT)?));
        }
        Ok(Self { c0, q, t })
    }

    /// `x_P T_row y_P`
    pub fn form(&self, row: usize, x: &[f64], y: &[f64]) -> f64 {
        let (p, t) = &self.t[row];
        let xs: Vec<f64> = p.iter().map(|&i| x[i]).collect();
        let ys: Vec<f64> = p.iter().map(|&i| y[i]).collect();
        t.bilinear(&xs, &ys)
    }

    /// `T_row y_P`, scattered back to full length.
    fn apply(&self, row: usize, y: &[f64]) -> Vec<f64> {
        let (p, t) = &self.t[row];
        let ys: Vec<f64> = p.iter().map(|&i| y[i]).collect();
        let w = t.mul_vec(&ys);
        let mut out = vec![0.0; y.len()];
        for (a, &i) in p.iter().enumerate() {
            out[i] = w[a];
        }
        out
    }
}

/// Two-output compatibility residuals of a half adder with `A = [u, v]`
/// (`u` reads the carry, `v` the sum): `u(C01⁻¹ - C11⁻¹)v`,
/// `u(C10⁻¹ - C11⁻¹)v`, `v(C01⁻¹ - C10⁻¹)v`.
pub fn residuals_half_adder(cf: &CFamily, u: &[f64], v: &[f64]) -> Result<[f64; 3], SchurError> {
    if cf.arity() != 2 {
        return Err(SchurError::Structure("half adder needs two inputs".into()));
    }
    let ci = cf.inverses()?;
    let f = |r: usize, x: &[f64], y: &[f64]| ci[r].bilinear(x, y);
    Ok([f(0b01, u, v) - f(0b11, u, v), f(0b10, u, v) - f(0b11, u, v), f(0b01, v, v) - f(0b10, v, v)])
}

/// `B` of a half adder from its kernel conditions.
pub fn half_adder_b(cf: &CFamily, u: &[f64], v: &[f64]) -> Result<SymMatrix, SchurError> {
    let ci = cf.inverses()?;
    Ok(SymMatrix::from_rows(&[
        [ci[0b11].bilinear(u, u), ci[0b01].bilinear(u, v)],
        [ci[0b01].bilinear(u, v), ci[0b01].bilinear(v, v)],
    ])?)
}

/// Output readings of a partition with `A = [u (carry), v (sum)]`, in the
/// `(S, C)` output order of the builtin adder tables.
pub fn adder_readings(m: usize) -> Vec<ReadingSpec> {
    vec![ReadingSpec::new(0, m + 1, 0.0), ReadingSpec::new(1, m, 0.0)]
}

fn validate(p: &BlockPartition, t: &TruthTable) -> Result<(), String> {
    let d = p.to_descriptor().map_err(|e| e.to_string())?;
    match verify_fixed_energy(&d, t, &adder_readings(p.c.order()), DEFAULT_WEIGHT_MIN, DEFAULT_TOL) {
        Ok(rep) if rep.pass => Ok(()),
        Ok(rep) => Err(format!(
            "wrong outputs on {}",
            rep.failures().map(|r| r.input.as_str()).collect::<Vec<_>>().join(",")
        )),
        Err(e) => Err(e.to_string()),
    }
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Root `y` of `t00 x² + 2 t01 x y + t11 y² = rho`; `upper` picks the root
/// with the `+√disc` sign.
fn pair_root(t: &SymMatrix, x: f64, rho: f64, upper: bool) -> Option<f64> {
    let (a, b, c) = (t.get(1, 1), 2.0 * t.get(0, 1) * x, t.get(0, 0) * x * x - rho);
    if a.abs() < 1e-14 {
        return (b.abs() > 1e-14).then(|| -c / b);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let s = if upper { disc.sqrt() } else { -disc.sqrt() };
    Some((-b + s) / (2.0 * a))
}

/// Input pairs of a family whose inputs each touch one 2×2 block.
fn input_pairs(cf: &CFamily) -> Result<Vec<(usize, usize)>, SchurError> {
    let k = cf.arity();
    let mut pairs = Vec::new();
    for v in 0..k {
        let s = cf.support(1 << (k - 1 - v));
        if s.len() != 2 {
            return Err(SchurError::Structure(format!("input {v} must couple exactly two states")));
        }
        pairs.push((s[0], s[1]));
    }
    let mut all: Vec<usize> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    all.sort_unstable();
    all.dedup();
    if all.len() != 2 * k {
        return Err(SchurError::Structure("input pairs overlap".into()));
    }
    Ok(pairs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfAdderSolution {
    pub partition: BlockPartition,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub residuals: [f64; 3],
    /// Quadratic roots used for `v̂` on the two input pairs.
    pub branch: [bool; 2],
}

/// Completes a half adder from the free values `(v̂₁, v̂₃, û₁)` (first index
/// of each input pair) and the scales `(r, s)`. All four root choices of
/// the two quadratics are tried in order; the first valid one is returned.
pub fn solve_half_adder(cf: &CFamily, free: (f64, f64, f64), scale: (f64, f64)) -> Result<HalfAdderSolution, SchurError> {
    let (r, s) = scale;
    if r == 0.0 || s == 0.0 || !r.is_finite() || !s.is_finite() {
        return Err(SchurError::BadScale);
    }
    if cf.arity() != 2 {
        return Err(SchurError::Structure("half adder needs two inputs".into()));
    }
    let pairs = input_pairs(cf)?;
    let tm = TMatrices::new(cf)?;
    let m = cf.order();
    let rho = sign(r);
    let sr = r.abs().sqrt();
    let (r_a, r_b, r_ab) = (0b10, 0b01, 0b11);
    let mut last = SchurError::NoRealRoot;
    for branch in [[true, true], [true, false], [false, true], [false, false]] {
        let attempt = (|| -> Result<HalfAdderSolution, SchurError> {
            let mut vh = vec![0.0; m];
            for (idx, (&(i, j), &x, row)) in
                [(&pairs[0], &free.0, r_a), (&pairs[1], &free.1, r_b)].into_iter().enumerate()
            {
                let t = &tm.t[row].1;
                vh[i] = x;
                vh[j] = pair_root(t, x, rho, branch[idx]).ok_or(SchurError::NoRealRoot)?;
            }
            let w_a = tm.apply(r_a, &vh);
            let w_b = tm.apply(r_b, &vh);
            let z = tm.apply(r_ab, &vh);
            let (i0, j0) = pairs[0];
            let (i1, j1) = pairs[1];
            if w_a[j0].abs() < 1e-14 || w_b[j1].abs() < 1e-14 {
                return Err(SchurError::SingularT);
            }
            let mut uh = vec![0.0; m];
            uh[i0] = free.2;
            uh[j0] = (1.0 - uh[i0] * w_a[i0]) / w_a[j0];
            // û_j1 = (1 - û_i1 w_b[i1]) / w_b[j1], substituted into the joint condition
            let coef = z[i1] - z[j1] * w_b[i1] / w_b[j1];
            if coef.abs() < 1e-14 {
                return Err(SchurError::SingularT);
            }
            uh[i1] = (1.0 - uh[i0] * z[i0] - uh[j0] * z[j0] - z[j1] / w_b[j1]) / coef;
            uh[j1] = (1.0 - uh[i1] * w_b[i1]) / w_b[j1];
            let vt: Vec<f64> = vh.iter().map(|x| x * sr).collect();
            let ut: Vec<f64> = uh.iter().map(|x| x * s / sr).collect();
            let u = tm.c0.mul_vec(&ut);
            let v = tm.c0.mul_vec(&vt);
            let residuals = residuals_half_adder(cf, &u, &v)?;
            let scale = u.iter().chain(&v).fold(1.0_f64, |a, x| a.max(x.abs()));
            if residuals.iter().any(|x| x.abs() > RESIDUAL_TOL * scale * scale) {
                return Err(SchurError::DegenerateKernel(format!("residuals {residuals:?}")));
            }
            let b = half_adder_b(cf, &u, &v)?;
            let partition = BlockPartition::from_uv(cf.clone(), &u, &v, b)?;
            validate(&partition, &TruthTable::half_adder()).map_err(SchurError::DegenerateKernel)?;
            Ok(HalfAdderSolution { partition, u, v, residuals, branch })
        })();
        match attempt {
            Ok(sol) => return Ok(sol),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Full-adder compatibility residuals with `A = [u (carry), v (sum)]`:
/// two equalities of `u C⁻¹ u` over the two-ones inputs, two of `v C⁻¹ v`
/// over the one-one inputs, five of `u C⁻¹ v` over both groups, and two
/// deviations of the three `t`-defining quantities from their mean.
pub fn residuals_full_adder(cf: &CFamily, u: &[f64], v: &[f64]) -> Result<Vec<f64>, SchurError> {
    if cf.arity() != 3 {
        return Err(SchurError::Structure("full adder needs three inputs".into()));
    }
    let ci = cf.inverses()?;
    let f = |r: usize, x: &[f64], y: &[f64]| ci[r].bilinear(x, y);
    let (r001, r010, r100, r011, r101, r110) = (1, 2, 4, 3, 5, 6);
    let mut out = vec![
        f(r011, u, u) - f(r101, u, u),
        f(r101, u, u) - f(r110, u, u),
        f(r001, v, v) - f(r010, v, v),
        f(r010, v, v) - f(r100, v, v),
    ];
    let six: Vec<f64> = [r011, r101, r110, r001, r010, r100].iter().map(|&r| f(r, u, v)).collect();
    out.extend(six.windows(2).map(|w| w[0] - w[1]));
    let (a1, a2, a3) = t_relations(&ci, u, v);
    let t = (a1 + a2 + a3) / 3.0;
    out.push(a1 - t);
    out.push(a2 - t);
    Ok(out)
}

/// The three quantities that must all equal `t`.
fn t_relations(ci: &[SymMatrix], u: &[f64], v: &[f64]) -> (f64, f64, f64) {
    let d = |r: usize, x: &[f64], y: &[f64]| ci[r].bilinear(x, y) - ci[7].bilinear(x, y);
    (d(3, u, u), d(1, v, v), -d(1, u, v))
}

/// `B` of a full adder from its kernel conditions.
pub fn full_adder_b(cf: &CFamily, u: &[f64], v: &[f64]) -> Result<SymMatrix, SchurError> {
    let ci = cf.inverses()?;
    let b12 = ci[0b001].bilinear(u, v);
    Ok(SymMatrix::from_rows(&[[ci[0b011].bilinear(u, u), b12], [b12, ci[0b001].bilinear(v, v)]])?)
}

/// Reduced three-equation system of the full adder in the rescaled
/// variables, for fixed quadratic branches and sign `rho` of `r`.
struct FullAdderSystem<'a> {
    tm: &'a TMatrices,
    pairs: Vec<(usize, usize)>,
    unit_rows: [usize; 3],
    two_rows: [usize; 3],
    branch: [bool; 3],
    rho: f64,
}

struct Reduced {
    f: [f64; 3],
    vh: Vec<f64>,
    uh: Vec<f64>,
    lambda: f64,
    sigma: f64,
    tau: f64,
}

impl FullAdderSystem<'_> {
    fn eval(&self, odd: &[f64; 3]) -> Option<Reduced> {
        let m = self.tm.q.order();
        let mut vh = vec![0.0; m];
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            vh[i] = odd[k];
            vh[j] = pair_root(&self.tm.t[self.unit_rows[k]].1, odd[k], self.rho, self.branch[k])?;
        }
        // six linear conditions û_P T_P v̂_P = 1
        let mut a = Matrix::zeros(6, m);
        for (n, &row) in self.unit_rows.iter().chain(&self.two_rows).enumerate() {
            let w = self.tm.apply(row, &vh);
            for (c, x) in w.into_iter().enumerate() {
                a.set(n, c, x);
            }
        }
        if m != 6 {
            return None;
        }
        let uh = a.solve(&[1.0; 6]).ok()?;
        let full = 7;
        let sigma = self.tm.form(full, &uh, &vh);
        let tau = self.tm.form(full, &vh, &vh);
        if (tau - self.rho).abs() < 1e-12 {
            return None;
        }
        let lambda = self.tm.form(full, &uh, &uh) - (1.0 - sigma).powi(2) / (tau - self.rho);
        let mut f = [0.0; 3];
        for (k, &row) in self.two_rows.iter().enumerate() {
            f[k] = self.tm.form(row, &uh, &uh) - lambda;
        }
        f.iter().all(|x| x.is_finite()).then_some(Reduced { f, vh, uh, lambda, sigma, tau })
    }

    fn norm(f: &[f64; 3]) -> f64 {
        f.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
    }

    /// Damped Newton with a central-difference Jacobian.
    fn newton(&self, start: [f64; 3]) -> Result<([f64; 3], usize), SchurError> {
        let mut x = start;
        let mut fx = self.eval(&x).ok_or(SchurError::NoRealRoot)?.f;
        for it in 0..NEWTON_MAX_ITER {
            if Self::norm(&fx) < NEWTON_TOL {
                return Ok((x, it));
            }
            let mut jac = Matrix::zeros(3, 3);
            for c in 0..3 {
                let (mut xp, mut xm) = (x, x);
                xp[c] += FD_STEP;
                xm[c] -= FD_STEP;
                let fp = self.eval(&xp).ok_or(SchurError::NoConvergence)?.f;
                let fm = self.eval(&xm).ok_or(SchurError::NoConvergence)?.f;
                for r in 0..3 {
                    jac.set(r, c, (fp[r] - fm[r]) / (2.0 * FD_STEP));
                }
            }
            let step = jac.solve(&fx.map(|v| -v)).map_err(|_| SchurError::NoConvergence)?;
            let mut damp = 1.0;
            loop {
                let trial = [x[0] + damp * step[0], x[1] + damp * step[1], x[2] + damp * step[2]];
                if let Some(r) = self.eval(&trial) {
                    if Self::norm(&r.f) < Self::norm(&fx) || damp < 1e-3 {
                        x = trial;
                        fx = r.f;
                        break;
                    }
                }
                damp *= 0.5;
                if damp < 1e-6 {
                    return Err(SchurError::NoConvergence);
                }
            }
        }
        if Self::norm(&fx) < NEWTON_TOL {
            Ok((x, NEWTON_MAX_ITER))
        } else {
            Err(SchurError::NoConvergence)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullAdderSolution {
    pub partition: BlockPartition,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub q: f64,
    pub r: f64,
    pub s: f64,
    pub t: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub tau: f64,
    pub max_residual: f64,
    pub branch: [bool; 3],
    pub rho: f64,
}

impl FullAdderSolution {
    pub fn qr_minus_s2(&self) -> f64 {
        self.q * self.r - self.s * self.s
    }
}

struct FullAdderContext {
    cf: CFamily,
    tm: TMatrices,
    pairs: Vec<(usize, usize)>,
}

impl FullAdderContext {
    fn new(cf: &CFamily) -> Result<Self, SchurError> {
        if cf.arity() != 3 || cf.order() != 6 {
            return Err(SchurError::Structure("full adder needs a 6-state C with three inputs".into()));
        }
        let pairs = input_pairs(cf)?;
        let tm = TMatrices::new(cf)?;
        Ok(Self { cf: cf.clone(), tm, pairs })
    }

    fn system(&self, branch: [bool; 3], rho: f64) -> FullAdderSystem<'_> {
        FullAdderSystem {
            tm: &self.tm,
            pairs: self.pairs.clone(),
            unit_rows: [0b100, 0b010, 0b001],
            two_rows: [0b110, 0b101, 0b011],
            branch,
            rho,
        }
    }

    /// Runs Newton from `start` and back-substitutes with `|r| = r_abs`.
    fn solve_from(&self, start: [f64; 3], branch: [bool; 3], rho: f64, r_abs: f64) -> Result<(FullAdderSolution, usize), SchurError> {
        let sys = self.system(branch, rho);
        let (x, iters) = sys.newton(start)?;
        let red = sys.eval(&x).ok_or(SchurError::NoConvergence)?;
        let sr = r_abs.sqrt();
        let t = (red.tau - rho) * r_abs;
        if (1.0 - red.sigma).abs() < 1e-14 {
            return Err(SchurError::QrsDegenerate);
        }
        let s = t / (1.0 - red.sigma);
        let q = red.lambda * s * s / r_abs;
        let r = rho * r_abs;
        if (q * r - s * s).abs() <= 1e-9 * (s * s).max(1e-300) {
            return Err(SchurError::QrsDegenerate);
        }
        let ut: Vec<f64> = red.uh.iter().map(|x| x * s / sr).collect();
        let vt: Vec<f64> = red.vh.iter().map(|x| x * sr).collect();
        let u = self.tm.c0.mul_vec(&ut);
        let v = self.tm.c0.mul_vec(&vt);
        let res = residuals_full_adder(&self.cf, &u, &v)?;
        let scale = u.iter().chain(&v).fold(1.0_f64, |a, x| a.max(x.abs()));
        let max_residual = res.iter().fold(0.0, |m: f64, x| m.max(x.abs())) / (scale * scale);
        if max_residual > RESIDUAL_TOL {
            return Err(SchurError::ValidationFailed(format!("residual {max_residual:.3e}")));
        }
        let b = full_adder_b(&self.cf, &u, &v)?;
        let partition = BlockPartition::from_uv(self.cf.clone(), &u, &v, b)?;
        validate(&partition, &TruthTable::full_adder()).map_err(SchurError::ValidationFailed)?;
        Ok((
            FullAdderSolution {
                partition,
                u,
                v,
                q,
                r,
                s,
                t,
                lambda: red.lambda,
                sigma: red.sigma,
                tau: red.tau,
                max_residual,
                branch,
                rho,
            },
            iters,
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub branch: [bool; 3],
    pub rho: f64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solution: Option<usize>,
}

/// One JSONL record per seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed_index: usize,
    pub start: [f64; 3],
    pub status: String,
    pub candidates: Vec<CandidateRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullAdderRun {
    pub solutions: Vec<FullAdderSolution>,
    pub log: Vec<SeedRecord>,
}

impl FullAdderRun {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for rec in &self.log {
            serde_json::to_writer(&mut w, rec)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

fn status_name(e: &SchurError) -> &'static str {
    match e {
        SchurError::NoConvergence => "no_convergence",
        SchurError::NoRealRoot => "no_real_root",
        SchurError::ValidationFailed(_) => "validation_failed",
        SchurError::QrsDegenerate => "qrs_degenerate",
        SchurError::SingularT => "singular_t",
        _ => "error",
    }
}

fn same_solution(a: &FullAdderSolution, b: &FullAdderSolution) -> bool {
    let close = |s: f64| {
        a.u.iter().zip(&b.u).chain(a.v.iter().zip(&b.v)).all(|(x, y)| (x - s * y).abs() < 1e-6)
    };
    close(1.0) || close(-1.0)
}

/// Multi-start solve of the reduced full-adder system. Seed `i` draws its
/// start uniformly from `[-2, 2]³` using stream `i` of a ChaCha8 generator
/// keyed by `seed`, then tries every quadratic branch and both signs of
/// `r`. Solutions are scaled to `|r| = 1`, validated, and deduplicated up
/// to a global sign in seed order.
pub fn solve_full_adder(cf: &CFamily, seeds: usize, seed: u64) -> Result<FullAdderRun, SchurError> {
    let ctx = FullAdderContext::new(cf)?;
    let per_seed: Vec<(SeedRecord, Vec<FullAdderSolution>)> = (0..seeds)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let start = [
                rng.gen_range(-SEED_RANGE..SEED_RANGE),
                rng.gen_range(-SEED_RANGE..SEED_RANGE),
                rng.gen_range(-SEED_RANGE..SEED_RANGE),
            ];
            let mut candidates = Vec::new();
            let mut found = Vec::new();
            for rho in [1.0, -1.0] {
                for b in 0..8u8 {
                    let branch = [b & 4 != 0, b & 2 != 0, b & 1 != 0];
                    let rec = match ctx.solve_from(start, branch, rho, 1.0) {
                        Ok((sol, it)) => {
                            let r = CandidateRecord {
                                branch,
                                rho,
                                status: "converged".into(),
                                iterations: Some(it),
                                max_residual: Some(sol.max_residual),
                                solution: None,
                            };
                            found.push(sol);
                            r
                        }
                        Err(e) => CandidateRecord {
                            branch,
                            rho,
                            status: status_name(&e).into(),
                            iterations: None,
                            max_residual: None,
                            solution: None,
                        },
                    };
                    candidates.push(rec);
                }
            }
            let status = if !found.is_empty() {
                "converged"
            } else if candidates.iter().any(|c| c.status == "validation_failed") {
                "validation_failed"
            } else if candidates.iter().any(|c| c.status == "qrs_degenerate") {
                "qrs_degenerate"
            } else {
                "no_convergence"
            };
            (SeedRecord { seed_index: i, start, status: status.into(), candidates }, found)
        })
        .collect();

    let mut solutions: Vec<FullAdderSolution> = Vec::new();
    let mut log = Vec::with_capacity(seeds);
    for (mut rec, found) in per_seed {
        let mut it = found.into_iter();
        for c in rec.candidates.iter_mut().filter(|c| c.status == "converged") {
            let sol = it.next().expect("one solution per converged candidate");
            let idx = match solutions.iter().position(|s| same_solution(s, &sol)) {
                Some(k) => k,
                None => {
                    solutions.push(sol);
                    solutions.len() - 1
                }
            };
            c.solution = Some(idx);
        }
        log.push(rec);
    }
    Ok(FullAdderRun { solutions, log })
}

/// Newton polish of an approximate full adder `(u, v)`: the rescaling, the
/// quadratic branches and the sign of `r` are taken from the given vectors.
pub fn polish_full_adder(cf: &CFamily, u: &[f64], v: &[f64]) -> Result<FullAdderSolution, SchurError> {
    let ctx = FullAdderContext::new(cf)?;
    let vt = ctx.tm.q.mul_vec(v);
    let rs: Vec<f64> = [0b100, 0b010, 0b001].iter().map(|&row| ctx.tm.form(row, &vt, &vt)).collect();
    let r_mean = rs.iter().sum::<f64>() / 3.0;
    if r_mean == 0.0 {
        return Err(SchurError::BadScale);
    }
    let rho = sign(r_mean);
    let r_abs = r_mean.abs();
    let vh0: Vec<f64> = vt.iter().map(|x| x / r_abs.sqrt()).collect();
    let start = [vh0[ctx.pairs[0].0], vh0[ctx.pairs[1].0], vh0[ctx.pairs[2].0]];
    let unit_rows = [0b100, 0b010, 0b001];
    let mut branch = [true; 3];
    for (k, &(i, j)) in ctx.pairs.iter().enumerate() {
        let t = &ctx.tm.t[unit_rows[k]].1;
        let up = pair_root(t, vh0[i], rho, true);
        let dn = pair_root(t, vh0[i], rho, false);
        branch[k] = match (up, dn) {
            (Some(a), Some(b)) => (a - vh0[j]).abs() <= (b - vh0[j]).abs(),
            (Some(_), None) => true,
            _ => false,
        };
    }
    let (mut sol, _) = ctx.solve_from(start, branch, rho, r_abs)?;
    // keep the orientation of the input
    if dot(&sol.u, u) + dot(&sol.v, v) < 0.0 {
        sol.u.iter_mut().chain(sol.v.iter_mut()).for_each(|x| *x = -*x);
        sol.partition = BlockPartition::from_uv(cf.clone(), &sol.u, &sol.v, sol.partition.b.clone())?;
    }
    Ok(sol)
}

/// Equation and variable tallies for an `n`-bit adder with each input in a
/// 2×2 block of `C`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintCount {
    pub equations: usize,
    pub variables: usize,
    pub symmetry: usize,
    pub output_compatibility: usize,
    pub input_compatibility: usize,
    /// Output class (bits) → number of inputs producing it.
    pub multiplicities: BTreeMap<String, usize>,
}

pub fn count_constraints(n: usize) -> ConstraintCount {
    let t = TruthTable::adder(n);
    let l = n + 1;
    let mut multiplicities = BTreeMap::new();
    for r in 0..t.n_rows() {
        *multiplicities.entry(bits_string(t.row(r))).or_insert(0) += 1;
    }
    let symmetry = l * (l - 1) / 2;
    let mut output_compatibility = 0;
    let mut input_compatibility = 0;
    for (class, &m) in &multiplicities {
        let ones = class.chars().filter(|&c| c == '1').count();
        if ones == 0 {
            continue;
        }
        input_compatibility += l * (m - 1);
        if ones >= 2 {
            output_compatibility += l;
        }
    }
    let inputs = 2 * n + 1;
    let big_n = 2 * inputs;
    let variables = big_n * l + big_n * (big_n + 1) / 2 - inputs;
    ConstraintCount {
        equations: symmetry + output_compatibility + input_compatibility,
        variables,
        symmetry,
        output_compatibility,
        input_compatibility,
        multiplicities,
    }
}

pub fn count_constraints_2bit() -> ConstraintCount {
    count_constraints(2)
}
