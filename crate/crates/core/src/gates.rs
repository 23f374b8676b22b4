//! Catalog of parametrized calculating blocks and truth-table verification.
//!
//! Every family is affine in its inputs: a base matrix plus, for each input
//! variable, a set of symmetric positions where the variable's value is
//! added (times a scale). [`GateDescriptor::compile`] produces that form,
//! which is also the serialized `custom` family.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{char_poly_eval, eig_sym, LinalgError, SymMatrix};
use crate::logic::{annihilator, LogicError, TruthTable};
use crate::{bits_string, row_bits};

pub const DEFAULT_WEIGHT_MIN: f64 = 0.05;
pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_TOL: f64 = 1e-8;

const VAR_NAMES: [&str; 3] = ["alpha", "beta", "gamma"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GateError {
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("expected {expected} inputs, got {got}")]
    WrongArity { expected: usize, got: usize },
    #[error("shared blocks differ at ({i},{j}) for input {input}")]
    IncompatibleBlocks { input: String, i: usize, j: usize },
    #[error("kernel of dimension {dim} at input {input}")]
    AmbiguousKernel { input: String, dim: usize },
    #[error("readings do not share one energy")]
    MixedEnergies,
    #[error("no reading specification available")]
    MissingReadings,
    #[error("reading {0} is invalid for this gate")]
    BadReading(usize),
    #[error("no parameter set exists for this gate")]
    NoSolution,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Logic(#[from] LogicError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Generic3,
    And4,
    Xor4,
    HalfAdder5,
    FullAdder8Typ,
    MeHalfAdder3,
    MeFullAdder5,
    Custom,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Generic3,
        Family::And4,
        Family::Xor4,
        Family::HalfAdder5,
        Family::FullAdder8Typ,
        Family::MeHalfAdder3,
        Family::MeFullAdder5,
        Family::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Generic3 => "generic3",
            Family::And4 => "and4",
            Family::Xor4 => "xor4",
            Family::HalfAdder5 => "half_adder5",
            Family::FullAdder8Typ => "full_adder8_typ",
            Family::MeHalfAdder3 => "me_half_adder3",
            Family::MeFullAdder5 => "me_full_adder5",
            Family::Custom => "custom",
        }
    }

    /// Names of the structural parameters the family reads.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Generic3 => &["e", "a", "k"],
            Family::And4 | Family::Xor4 | Family::HalfAdder5 => &["x"],
            Family::MeHalfAdder3 => &["e"],
            Family::MeFullAdder5 => &["eta"],
            Family::FullAdder8Typ | Family::Custom => &[],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = GateError;
    fn from_str(s: &str) -> Result<Self, GateError> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| GateError::BadParams(format!("unknown family `{s}`")))
    }
}

/// One input-dependent entry: `value(var) * scale` is added at `(i, j)` and
/// `(j, i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputPosition {
    pub var: String,
    pub i: usize,
    pub j: usize,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl InputPosition {
    fn new(var: usize, i: usize, j: usize) -> Self {
        Self { var: VAR_NAMES[var].into(), i, j, scale: 1.0 }
    }

    pub fn var_index(&self) -> Option<usize> {
        VAR_NAMES.iter().position(|v| *v == self.var)
    }
}

/// An affine family `base + Σ input_v · scale · (E_ij + E_ji)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomFamily {
    pub order: usize,
    pub base: Vec<Vec<f64>>,
    pub input_positions: Vec<InputPosition>,
}

/// Reading block specification for one output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadingSpec {
    pub output: usize,
    /// Index of the calculating-block state the pointer pair couples to.
    pub state: usize,
    pub energy: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl ReadingSpec {
    pub fn new(output: usize, state: usize, energy: f64) -> Self {
        Self { output, state, energy, epsilon: DEFAULT_EPSILON }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }
}

/// A named gate family with its structural parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateDescriptor {
    pub family: Family,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readings: Option<Vec<ReadingSpec>>,
}

/// Two-decimal entries of the typical 8-state full adder (inputs set to zero).
pub const FULL_ADDER8_TYP: [[f64; 8]; 8] = [
    [-1.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.5],
    [0.0, 0.5, 0.0, 0.0, 0.0, 1.0, 0.27, -1.17],
    [0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.5],
    [0.0, 0.0, 0.0, 0.5, 0.0, 1.0, 0.27, -1.17],
    [0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.56, 0.66],
    [0.0, 1.0, 0.0, 1.0, 0.0, 0.5, -1.40, -2.88],
    [-1.0, 0.27, -1.0, 0.27, 1.56, -1.40, -3.96, -0.40],
    [0.5, -1.17, 0.5, -1.17, 0.66, -2.88, -0.40, 2.12],
];

/// Parameter `eta` placing the multi-energy full adder at `k = 1`.
pub fn me_full_adder_eta() -> f64 {
    15f64.sqrt() / 4.0
}

impl GateDescriptor {
    pub fn new(family: Family, params: &[(&str, f64)]) -> Self {
        Self {
            family,
            params: params.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
            custom: None,
            readings: None,
        }
    }

    pub fn generic3(e: f64, a: f64, k: f64) -> Self {
        Self::new(Family::Generic3, &[("e", e), ("a", a), ("k", k)])
    }

    pub fn and4(x: f64) -> Self {
        Self::new(Family::And4, &[("x", x)])
    }

    pub fn xor4(x: f64) -> Self {
        Self::new(Family::Xor4, &[("x", x)])
    }

    pub fn half_adder5(x: f64) -> Self {
        Self::new(Family::HalfAdder5, &[("x", x)])
    }

    pub fn full_adder8_typ() -> Self {
        Self::new(Family::FullAdder8Typ, &[])
    }

    pub fn me_half_adder3(e: f64) -> Self {
        Self::new(Family::MeHalfAdder3, &[("e", e)])
    }

    pub fn me_full_adder5(eta: f64) -> Self {
        Self::new(Family::MeFullAdder5, &[("eta", eta)])
    }

    pub fn custom(c: CustomFamily) -> Self {
        Self { family: Family::Custom, params: BTreeMap::new(), custom: Some(c), readings: None }
    }

    pub fn with_readings(mut self, readings: Vec<ReadingSpec>) -> Self {
        self.readings = Some(readings);
        self
    }

    /// Catalog entries by name, with the default structural parameters.
    /// Besides the family names this accepts `and3`, `or3`, `nand3`,
    /// `nor3` and `nxor3` for the 3-state elementary gates at `k = 1`.
    pub fn builtin(name: &str) -> Result<Self, GateError> {
        if let Some(g) = name.strip_suffix('3').and_then(|g| Table1Gate::from_str(g).ok()) {
            let p = table1_params(g, 1.0)?;
            return Ok(Self::generic3(p.e, p.a, 1.0));
        }
        Ok(match Family::from_str(name)? {
            Family::Generic3 => {
                let p = table1_params(Table1Gate::And, 1.0)?;
                Self::generic3(p.e, p.a, 1.0)
            }
            Family::And4 => Self::and4(1.0),
            Family::Xor4 => Self::xor4(1.0),
            Family::HalfAdder5 => Self::half_adder5(1.0),
            Family::FullAdder8Typ => Self::full_adder8_typ(),
            Family::MeHalfAdder3 => Self::me_half_adder3(0.0),
            Family::MeFullAdder5 => Self::me_full_adder5(me_full_adder_eta()),
            Family::Custom => return Err(GateError::BadParams("custom has no default".into())),
        })
    }

    fn param(&self, name: &str) -> Result<f64, GateError> {
        let v = self
            .params
            .get(name)
            .copied()
            .ok_or_else(|| GateError::BadParams(format!("{} requires `{name}`", self.family)))?;
        if !v.is_finite() {
            return Err(GateError::BadParams(format!("`{name}` is not finite")));
        }
        Ok(v)
    }

    pub fn arity(&self) -> Result<usize, GateError> {
        Ok(self.compile()?.arity)
    }

    /// Base matrix and input positions.
    pub fn compile(&self) -> Result<CompiledGate, GateError> {
        let (base, positions, arity): (Vec<Vec<f64>>, Vec<InputPosition>, usize) = match self.family {
            Family::Generic3 => {
                let (e, a, k) = (self.param("e")?, self.param("a")?, self.param("k")?);
                (
                    vec![vec![e, 0.0, k], vec![0.0, a, 0.0], vec![k, 0.0, e]],
                    vec![InputPosition::new(0, 0, 1), InputPosition::new(1, 1, 2)],
                    2,
                )
            }
            Family::And4 | Family::Xor4 => {
                let x = self.param("x")?;
                let (c, d) = if self.family == Family::And4 { (x, -x * x) } else { (0.0, x * x) };
                (
                    vec![
                        vec![0.0, 1.0, 0.0, -x],
                        vec![1.0, 0.0, 0.0, -x],
                        vec![0.0, 0.0, -1.0, c],
                        vec![-x, -x, c, d],
                    ],
                    vec![InputPosition::new(0, 0, 2), InputPosition::new(1, 1, 2)],
                    2,
                )
            }
            Family::HalfAdder5 => {
                let x = self.param("x")?;
                (
                    vec![
                        vec![0.0, 1.0, 0.0, -x, -x],
                        vec![1.0, 0.0, 0.0, -x, -x],
                        vec![0.0, 0.0, -1.0, x, 0.0],
                        vec![-x, -x, x, -x * x, 0.0],
                        vec![-x, -x, 0.0, 0.0, x * x],
                    ],
                    vec![InputPosition::new(0, 0, 2), InputPosition::new(1, 1, 2)],
                    2,
                )
            }
            Family::FullAdder8Typ => (
                FULL_ADDER8_TYP.iter().map(|r| r.to_vec()).collect(),
                vec![
                    InputPosition::new(0, 0, 1),
                    InputPosition::new(1, 2, 3),
                    InputPosition::new(2, 4, 5),
                ],
                3,
            ),
            Family::MeHalfAdder3 => {
                let e = self.param("e")?;
                (
                    vec![vec![2.0 * e, 0.0, -2.0 * e], vec![0.0; 3], vec![-2.0 * e, 0.0, 2.0 * e]],
                    vec![InputPosition::new(0, 0, 1), InputPosition::new(1, 1, 2)],
                    2,
                )
            }
            Family::MeFullAdder5 => {
                let eta = self.param("eta")?;
                let k2 = (16.0 * eta * eta - 9.0) / 6.0;
                if k2 < 0.0 {
                    return Err(GateError::BadParams(format!("eta^2 = {} < 9/16", eta * eta)));
                }
                let k = k2.sqrt();
                let a = -1.5 + 4.0 * eta * eta;
                let (e, d, x, b) = (1.0, 1.0, k, 0.75);
                (
                    vec![
                        vec![e, 0.0, 0.0, k, 0.0],
                        vec![0.0, d, 0.0, x, 0.0],
                        vec![0.0, 0.0, e, k, 0.0],
                        vec![k, x, k, a, eta],
                        vec![0.0, 0.0, 0.0, eta, b],
                    ],
                    vec![
                        InputPosition::new(0, 0, 1),
                        InputPosition::new(1, 1, 2),
                        InputPosition::new(2, 0, 2),
                    ],
                    3,
                )
            }
            Family::Custom => {
                let c = self
                    .custom
                    .as_ref()
                    .ok_or_else(|| GateError::BadParams("custom family without matrix".into()))?;
                if c.base.len() != c.order {
                    return Err(GateError::BadParams("base order mismatch".into()));
                }
                let mut arity = 0;
                for p in &c.input_positions {
                    let v = p
                        .var_index()
                        .ok_or_else(|| GateError::BadParams(format!("unknown input `{}`", p.var)))?;
                    if p.i >= c.order || p.j >= c.order {
                        return Err(GateError::BadParams("input position out of range".into()));
                    }
                    arity = arity.max(v + 1);
                }
                if arity == 0 {
                    return Err(GateError::BadParams("custom family has no inputs".into()));
                }
                (c.base.clone(), c.input_positions.clone(), arity)
            }
        };
        let base = SymMatrix::from_rows(&base)?;
        Ok(CompiledGate { base, positions, arity })
    }

    /// Readings from the descriptor, or the family defaults.
    pub fn readings(&self) -> Result<Vec<ReadingSpec>, GateError> {
        match &self.readings {
            Some(r) => Ok(r.clone()),
            None => default_readings(self.family).ok_or(GateError::MissingReadings),
        }
    }

    /// The truth table the family is designed for, if fixed by the family.
    pub fn default_table(&self) -> Option<TruthTable> {
        let name = match self.family {
            Family::And4 => "and",
            Family::Xor4 => "xor",
            Family::HalfAdder5 | Family::MeHalfAdder3 => "half_adder",
            Family::FullAdder8Typ | Family::MeFullAdder5 => "full_adder",
            Family::Generic3 | Family::Custom => return None,
        };
        TruthTable::builtin(name).ok()
    }
}

/// Default pointer attachments. Half and full adder outputs are `(S, C)`.
pub fn default_readings(family: Family) -> Option<Vec<ReadingSpec>> {
    Some(match family {
        Family::Generic3 => vec![ReadingSpec::new(0, 1, 0.0)],
        Family::And4 | Family::Xor4 => vec![ReadingSpec::new(0, 3, 0.0)],
        Family::HalfAdder5 => vec![ReadingSpec::new(0, 4, 0.0), ReadingSpec::new(1, 3, 0.0)],
        Family::FullAdder8Typ => vec![ReadingSpec::new(0, 7, 0.0), ReadingSpec::new(1, 6, 0.0)],
        Family::MeHalfAdder3 => {
            vec![ReadingSpec::new(0, 1, 1.0), ReadingSpec::new(1, 1, 2f64.sqrt())]
        }
        Family::MeFullAdder5 => vec![ReadingSpec::new(0, 4, 1.5), ReadingSpec::new(1, 4, 0.0)],
        Family::Custom => return None,
    })
}

/// A family in affine form, ready for repeated evaluation.
#[derive(Clone, Debug)]
pub struct CompiledGate {
    pub base: SymMatrix,
    pub positions: Vec<InputPosition>,
    pub arity: usize,
}

impl CompiledGate {
    pub fn order(&self) -> usize {
        self.base.order()
    }

    pub fn build(&self, input: &[f64]) -> Result<SymMatrix, GateError> {
        if input.len() != self.arity {
            return Err(GateError::WrongArity { expected: self.arity, got: input.len() });
        }
        let mut m = self.base.clone();
        for p in &self.positions {
            let v = input[p.var_index().expect("validated")];
            m.set(p.i, p.j, m.get(p.i, p.j) + v * p.scale);
        }
        Ok(m)
    }

    pub fn build_bits(&self, bits: &[u8]) -> Result<SymMatrix, GateError> {
        let x: Vec<f64> = bits.iter().map(|&b| b as f64).collect();
        self.build(&x)
    }

    pub fn build_row(&self, r: usize) -> SymMatrix {
        self.build_bits(&row_bits(r, self.arity)).expect("row within arity")
    }

    pub fn to_custom(&self) -> CustomFamily {
        CustomFamily {
            order: self.order(),
            base: self.base.rows(),
            input_positions: self.positions.clone(),
        }
    }
}

/// Builds the calculating block for a real-valued input vector.
pub fn build(d: &GateDescriptor, input: &[f64]) -> Result<SymMatrix, GateError> {
    d.compile()?.build(input)
}

pub fn build_bits(d: &GateDescriptor, bits: &[u8]) -> Result<SymMatrix, GateError> {
    d.compile()?.build_bits(bits)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table1Gate {
    And,
    Or,
    Xor,
    Nand,
    Nor,
    Nxor,
}

impl Table1Gate {
    pub const ALL: [Table1Gate; 6] =
        [Table1Gate::And, Table1Gate::Or, Table1Gate::Xor, Table1Gate::Nand, Table1Gate::Nor, Table1Gate::Nxor];

    pub fn table(self) -> TruthTable {
        TruthTable::builtin(self.name()).expect("builtin")
    }

    pub fn name(self) -> &'static str {
        match self {
            Table1Gate::And => "and",
            Table1Gate::Or => "or",
            Table1Gate::Xor => "xor",
            Table1Gate::Nand => "nand",
            Table1Gate::Nor => "nor",
            Table1Gate::Nxor => "nxor",
        }
    }
}

impl FromStr for Table1Gate {
    type Err = GateError;
    fn from_str(s: &str) -> Result<Self, GateError> {
        Table1Gate::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| GateError::BadParams(format!("unknown gate `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table1Params {
    pub e: f64,
    pub a: f64,
}

/// Structural parameters `(e, a)` of the 3-state elementary gates as
/// functions of the coupling `k`.
pub fn table1_params(gate: Table1Gate, k: f64) -> Result<Table1Params, GateError> {
    if k == 0.0 {
        return Err(GateError::BadParams("k must be nonzero".into()));
    }
    Ok(match gate {
        Table1Gate::And => Table1Params { e: 0.0, a: 2.0 / k },
        Table1Gate::Or => Table1Params { e: 2.0 * k, a: 2.0 / (3.0 * k) },
        Table1Gate::Xor => return Err(GateError::NoSolution),
        Table1Gate::Nand => Table1Params { e: 0.0, a: 0.0 },
        Table1Gate::Nor => Table1Params { e: 1.0 / (2.0 * k), a: 0.0 },
        // a is free once e = k
        Table1Gate::Nxor => Table1Params { e: k, a: 0.0 },
    })
}

/// Merges two families sharing their upper-left `shared` block: the result
/// holds `g1` on its first `n1` states and the non-shared part of `g2` on
/// the remaining ones.
pub fn merge(g1: &GateDescriptor, g2: &GateDescriptor, shared: usize) -> Result<GateDescriptor, GateError> {
    let c1 = g1.compile()?;
    let c2 = g2.compile()?;
    if c1.arity != c2.arity {
        return Err(GateError::WrongArity { expected: c1.arity, got: c2.arity });
    }
    let (n1, n2) = (c1.order(), c2.order());
    if shared > n1.min(n2) {
        return Err(GateError::BadParams(format!("shared block {shared} exceeds matrix order")));
    }
    let n = n1 + n2 - shared;
    // position in the merged matrix of state s of g2
    let w = |s: usize| if s < shared { s } else { n1 + s - shared };
    let assemble = |x: &[f64]| -> Result<SymMatrix, GateError> {
        let h1 = c1.build(x)?;
        let h2 = c2.build(x)?;
        let mut m = SymMatrix::zeros(n);
        for i in 0..n1 {
            for j in i..n1 {
                m.set(i, j, h1.get(i, j));
            }
        }
        for i in 0..n2 {
            for j in i..n2 {
                if i < shared && j < shared {
                    continue;
                }
                m.set(w(i), w(j), m.get(w(i), w(j)) + h2.get(i, j));
            }
        }
        Ok(m)
    };
    for r in 0..1usize << c1.arity {
        let h1 = c1.build_row(r);
        let h2 = c2.build_row(r);
        for i in 0..shared {
            for j in i..shared {
                if h1.get(i, j) != h2.get(i, j) {
                    return Err(GateError::IncompatibleBlocks {
                        input: bits_string(&row_bits(r, c1.arity)),
                        i,
                        j,
                    });
                }
            }
        }
    }
    let zero = vec![0.0; c1.arity];
    let base = assemble(&zero)?;
    let mut positions = Vec::new();
    for v in 0..c1.arity {
        let mut unit = zero.clone();
        unit[v] = 1.0;
        let diff = assemble(&unit)?.sub(&base);
        for i in 0..n {
            for j in i..n {
                let s = diff.get(i, j);
                if s != 0.0 {
                    positions.push(InputPosition { var: VAR_NAMES[v].into(), i, j, scale: s });
                }
            }
        }
    }
    Ok(GateDescriptor::custom(CustomFamily { order: n, base: base.rows(), input_positions: positions }))
}

/// Result of reading one output on one input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadingRecord {
    pub output: usize,
    pub state: usize,
    pub energy: f64,
    /// Number of eigenvalues within `tol` of the reading energy.
    pub hits: usize,
    /// Squared projection of that eigenspace onto the reading state.
    pub weight: f64,
    pub decided: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub input: String,
    pub expected: Vec<u8>,
    pub decided: Vec<u8>,
    pub readings: Vec<ReadingRecord>,
    /// Largest eigenspace dimension met at any reading energy.
    pub kernel_dim: usize,
    pub ambiguous: bool,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub records: Vec<InputRecord>,
    pub pass: bool,
}

impl VerificationReport {
    pub fn failures(&self) -> impl Iterator<Item = &InputRecord> {
        self.records.iter().filter(|r| !r.ok)
    }
}

fn check_readings(g: &CompiledGate, t: &TruthTable, readings: &[ReadingSpec]) -> Result<(), GateError> {
    if t.k() != g.arity {
        return Err(GateError::WrongArity { expected: g.arity, got: t.k() });
    }
    if readings.is_empty() {
        return Err(GateError::MissingReadings);
    }
    for (n, r) in readings.iter().enumerate() {
        if r.output >= t.l() || r.state >= g.order() {
            return Err(GateError::BadReading(n));
        }
    }
    Ok(())
}

/// Reads every input of `t` at each reading's energy. An output is 1 when
/// some reading for it finds an eigenvalue within `tol` whose eigenspace
/// has squared weight above `weight_min²` on the attach state.
fn read_all(
    g: &CompiledGate,
    t: &TruthTable,
    readings: &[ReadingSpec],
    weight_min: f64,
    tol: f64,
) -> VerificationReport {
    let records: Vec<InputRecord> = (0..t.n_rows())
        .map(|r| {
            let spec = eig_sym(&g.build_row(r));
            let mut decided = vec![0u8; t.l()];
            let mut kernel_dim = 0;
            let recs: Vec<ReadingRecord> = readings
                .iter()
                .map(|rd| {
                    let cluster = spec.cluster(rd.energy, tol);
                    let weight = spec.projector_weight(&cluster, rd.state);
                    let bit = u8::from(!cluster.is_empty() && weight > weight_min * weight_min);
                    decided[rd.output] |= bit;
                    kernel_dim = kernel_dim.max(cluster.len());
                    ReadingRecord {
                        output: rd.output,
                        state: rd.state,
                        energy: rd.energy,
                        hits: cluster.len(),
                        weight,
                        decided: bit,
                    }
                })
                .collect();
            let expected = t.row(r).to_vec();
            InputRecord {
                input: bits_string(&row_bits(r, t.k())),
                ok: decided == expected,
                expected,
                decided,
                readings: recs,
                kernel_dim,
                ambiguous: kernel_dim > 1,
            }
        })
        .collect();
    let pass = records.iter().all(|r| r.ok);
    VerificationReport { records, pass }
}

/// Verification with all readings at one energy. Fails with
/// `AmbiguousKernel` when an eigenspace at that energy is degenerate.
pub fn verify_fixed_energy(
    d: &GateDescriptor,
    t: &TruthTable,
    readings: &[ReadingSpec],
    weight_min: f64,
    tol: f64,
) -> Result<VerificationReport, GateError> {
    let g = d.compile()?;
    check_readings(&g, t, readings)?;
    if readings.iter().any(|r| r.energy != readings[0].energy) {
        return Err(GateError::MixedEnergies);
    }
    let report = read_all(&g, t, readings, weight_min, tol);
    if let Some(r) = report.records.iter().find(|r| r.ambiguous) {
        return Err(GateError::AmbiguousKernel { input: r.input.clone(), dim: r.kernel_dim });
    }
    Ok(report)
}

/// Verification with per-output reading energies. Degenerate eigenspaces
/// are read through their projector and flagged `ambiguous`.
pub fn verify_multi_energy(
    d: &GateDescriptor,
    t: &TruthTable,
    readings: &[ReadingSpec],
    weight_min: f64,
    tol: f64,
) -> Result<VerificationReport, GateError> {
    let g = d.compile()?;
    check_readings(&g, t, readings)?;
    Ok(read_all(&g, t, readings, weight_min, tol))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharpolyTable {
    pub energy: f64,
    /// `(input bits, det(H - E))` in row order.
    pub values: Vec<(String, f64)>,
    /// Least-squares constant `c` in `values ≈ c · annihilator`.
    pub constant: f64,
    pub max_deviation: f64,
    pub proportional: bool,
}

/// Characteristic polynomial at `energy` on every Boolean input, compared
/// with the annihilator of `t`. Proportional means a nonzero constant fits
/// every value to within `rel_tol · max|value|`.
pub fn charpoly_table(
    d: &GateDescriptor,
    t: &TruthTable,
    energy: f64,
    rel_tol: f64,
) -> Result<CharpolyTable, GateError> {
    let g = d.compile()?;
    if t.k() != g.arity {
        return Err(GateError::WrongArity { expected: g.arity, got: t.k() });
    }
    let ann = annihilator(t);
    let vals: Vec<f64> = (0..t.n_rows()).map(|r| char_poly_eval(&g.build_row(r), energy)).collect();
    let a: Vec<f64> = (0..t.n_rows()).map(|r| ann.eval_row(r) as f64).collect();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let constant = if aa > 0.0 { vals.iter().zip(&a).map(|(v, x)| v * x).sum::<f64>() / aa } else { 0.0 };
    let max_deviation = vals.iter().zip(&a).map(|(v, x)| (v - constant * x).abs()).fold(0.0, f64::max);
    let scale = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let proportional = constant.abs() > 1e-12 * scale && max_deviation <= rel_tol * scale;
    Ok(CharpolyTable {
        energy,
        values: (0..t.n_rows()).map(|r| (bits_string(&row_bits(r, t.k())), vals[r])).collect(),
        constant,
        max_deviation,
        proportional,
    })
}

/// Squared projection of the eigenspace near `reading.energy` onto the
/// attach state, over `(α, β)` on a `grid_n × grid_n` grid of `[0, 1]²`.
/// `field[i][j]` is at `α = i/(n-1)`, `β = j/(n-1)`.
pub fn robustness_scan(
    d: &GateDescriptor,
    reading: &ReadingSpec,
    grid_n: usize,
    tol: f64,
) -> Result<Vec<Vec<f64>>, GateError> {
    let g = d.compile()?;
    if g.arity != 2 {
        return Err(GateError::WrongArity { expected: 2, got: g.arity });
    }
    if grid_n < 2 {
        return Err(GateError::BadParams("grid_n must be at least 2".into()));
    }
    if reading.state >= g.order() {
        return Err(GateError::BadReading(0));
    }
    let step = 1.0 / (grid_n - 1) as f64;
    (0..grid_n)
        .map(|i| {
            (0..grid_n)
                .map(|j| {
                    let s = eig_sym(&g.build(&[i as f64 * step, j as f64 * step])?);
                    Ok(s.projector_weight(&s.cluster(reading.energy, tol), reading.state))
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::det;
    use approx::assert_abs_diff_eq;

    #[test]
    fn generic3_and_matrix() {
        let p = table1_params(Table1Gate::And, 1.0).unwrap();
        let m = build(&GateDescriptor::generic3(p.e, p.a, 1.0), &[1.0, 1.0]).unwrap();
        assert_eq!(m.rows(), vec![vec![0.0, 1.0, 1.0], vec![1.0, 2.0, 1.0], vec![1.0, 1.0, 0.0]]);
    }

    #[test]
    fn half_adder5_determinant() {
        let m = build_bits(&GateDescriptor::half_adder5(1.0), &[0, 0]).unwrap();
        assert_abs_diff_eq!(det(&m), -2.0, epsilon = 1e-12);
    }

    #[test]
    fn me_full_adder5_parameters() {
        let m = build_bits(&GateDescriptor::me_full_adder5(me_full_adder_eta()), &[0, 0, 0]).unwrap();
        assert_abs_diff_eq!(m.get(0, 3), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.get(3, 3), 2.25, epsilon = 1e-12);
        assert_abs_diff_eq!(m.get(4, 4), 0.75, epsilon = 1e-12);
        assert_eq!((m.get(0, 0), m.get(1, 1)), (1.0, 1.0));
        assert!(matches!(
            GateDescriptor::me_full_adder5(0.5).compile(),
            Err(GateError::BadParams(_))
        ));
    }

    #[test]
    fn table1_examples() {
        assert_eq!(table1_params(Table1Gate::Or, 2.0).unwrap(), Table1Params { e: 4.0, a: 1.0 / 3.0 });
        assert_eq!(table1_params(Table1Gate::Nand, 1.0).unwrap(), Table1Params { e: 0.0, a: 0.0 });
        assert_eq!(table1_params(Table1Gate::Xor, 1.0), Err(GateError::NoSolution));
    }

    #[test]
    fn merge_and_xor_gives_half_adder() {
        let m = merge(&GateDescriptor::and4(1.0), &GateDescriptor::xor4(1.0), 3).unwrap();
        let ha = GateDescriptor::half_adder5(1.0).compile().unwrap();
        let mc = m.compile().unwrap();
        for r in 0..4 {
            assert_eq!(mc.build_row(r), ha.build_row(r));
        }
        let x = [0.3, 0.8];
        assert_eq!(mc.build(&x).unwrap(), ha.build(&x).unwrap());
    }

    #[test]
    fn merge_fully_shared_is_identity() {
        let and4 = GateDescriptor::and4(1.0);
        let m = merge(&and4, &and4, 4).unwrap().compile().unwrap();
        let a = and4.compile().unwrap();
        for r in 0..4 {
            assert_eq!(m.build_row(r), a.build_row(r));
        }
    }

    #[test]
    fn merge_detects_incompatible_blocks() {
        // different x only changes entries outside the shared block
        assert!(merge(&GateDescriptor::and4(1.0), &GateDescriptor::xor4(2.0), 3).is_ok());
        let mut c = GateDescriptor::xor4(1.0).compile().unwrap().to_custom();
        c.base[2][2] = -0.9;
        let err = merge(&GateDescriptor::and4(1.0), &GateDescriptor::custom(c), 3).unwrap_err();
        assert!(matches!(err, GateError::IncompatibleBlocks { i: 2, j: 2, .. }));
    }

    #[test]
    fn verify_half_adder5() {
        let d = GateDescriptor::half_adder5(1.0);
        let rd = d.readings().unwrap();
        let rep = verify_fixed_energy(&d, &TruthTable::half_adder(), &rd, 0.1, DEFAULT_TOL).unwrap();
        assert!(rep.pass, "{rep:#?}");
        let r11 = &rep.records[3];
        let and = r11.readings.iter().find(|r| r.state == 3).unwrap();
        let xor = r11.readings.iter().find(|r| r.state == 4).unwrap();
        assert_abs_diff_eq!(and.weight, 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(xor.weight, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn verify_nand_generic3() {
        let p = table1_params(Table1Gate::Nand, 1.0).unwrap();
        let d = GateDescriptor::generic3(p.e, p.a, 1.0);
        let rep = verify_fixed_energy(&d, &TruthTable::builtin("nand").unwrap(), &d.readings().unwrap(), DEFAULT_WEIGHT_MIN, DEFAULT_TOL)
            .unwrap();
        assert!(rep.pass, "{rep:#?}");
    }

    #[test]
    fn verify_rejects_mixed_energies() {
        let d = GateDescriptor::half_adder5(1.0);
        let rd = [ReadingSpec::new(0, 4, 0.0), ReadingSpec::new(1, 3, 1.0)];
        assert_eq!(
            verify_fixed_energy(&d, &TruthTable::half_adder(), &rd, 0.1, DEFAULT_TOL).unwrap_err(),
            GateError::MixedEnergies
        );
    }

    #[test]
    fn verify_multi_energy_me_half_adder() {
        let d = GateDescriptor::me_half_adder3(0.0);
        let t = TruthTable::half_adder();
        let rep = verify_multi_energy(&d, &t, &d.readings().unwrap(), 0.1, DEFAULT_TOL).unwrap();
        assert!(rep.pass, "{rep:#?}");
        for rec in rep.records.iter().filter(|r| r.input != "00") {
            for rd in rec.readings.iter().filter(|r| r.decided == 1) {
                assert_abs_diff_eq!(rd.weight, 0.5, epsilon = 1e-10);
            }
        }
        let off = [ReadingSpec::new(0, 1, 0.5), ReadingSpec::new(1, 1, 0.5)];
        assert!(!verify_multi_energy(&d, &t, &off, 0.1, DEFAULT_TOL).unwrap().pass);
    }

    #[test]
    fn charpoly_half_adder5() {
        let d = GateDescriptor::half_adder5(1.0);
        let cp = charpoly_table(&d, &TruthTable::half_adder(), 0.0, 1e-9).unwrap();
        let v: Vec<f64> = cp.values.iter().map(|x| x.1).collect();
        for (got, want) in v.iter().zip([-2.0, 0.0, 0.0, 0.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert!(cp.proportional);
        assert_abs_diff_eq!(cp.constant, -2.0, epsilon = 1e-12);
    }

    #[test]
    fn charpoly_nor_reference_parameters() {
        // reference NOR parameters give -e(α+β) + 2kαβ at k = 1
        let p = table1_params(Table1Gate::Nor, 1.0).unwrap();
        let d = GateDescriptor::generic3(p.e, p.a, 1.0);
        let cp = charpoly_table(&d, &TruthTable::builtin("nor").unwrap(), 0.0, 1e-9).unwrap();
        let v: Vec<f64> = cp.values.iter().map(|x| x.1).collect();
        let e = p.e;
        let want: Vec<f64> = (0..4)
            .map(|r| {
                let b = row_bits(r, 2);
                let (al, be) = (b[0] as f64, b[1] as f64);
                -e * (al + be) + 2.0 * al * be
            })
            .collect();
        for (g, w) in v.iter().zip(&want) {
            assert_abs_diff_eq!(*g, *w, epsilon = 1e-12);
        }
        assert!(!cp.proportional);
    }

    #[test]
    fn robustness_corners() {
        let d = GateDescriptor::half_adder5(1.0);
        let and = ReadingSpec::new(1, 3, 0.0);
        let f = robustness_scan(&d, &and, 11, DEFAULT_TOL).unwrap();
        assert_abs_diff_eq!(f[10][10], 0.5, epsilon = 1e-10);
        assert_eq!(f[0][0], 0.0);
        assert_abs_diff_eq!(f[0][10], 0.0, epsilon = 1e-12);
        assert!(robustness_scan(&GateDescriptor::full_adder8_typ(), &and, 5, 1e-8).is_err());
    }

    #[test]
    fn descriptor_json() {
        let d: GateDescriptor =
            serde_json::from_str(r#"{"family":"me_full_adder5","params":{"eta":0.9682458366}}"#).unwrap();
        assert_eq!(d.family, Family::MeFullAdder5);
        assert!(d.compile().is_ok());
        let c = GateDescriptor::half_adder5(1.0).compile().unwrap().to_custom();
        let s = serde_json::to_string(&GateDescriptor::custom(c)).unwrap();
        let back: GateDescriptor = serde_json::from_str(&s).unwrap();
        assert_eq!(back.compile().unwrap().build_row(3), build_bits(&GateDescriptor::half_adder5(1.0), &[1, 1]).unwrap());
        let missing: GateDescriptor = serde_json::from_str(r#"{"family":"generic3","params":{"e":1}}"#).unwrap();
        assert!(matches!(missing.compile(), Err(GateError::BadParams(_))));
    }

    #[test]
    fn builtin_names() {
        for f in Family::ALL.iter().filter(|f| **f != Family::Custom) {
            assert!(GateDescriptor::builtin(f.name()).is_ok());
        }
        assert!(GateDescriptor::builtin("nor3").is_ok());
        assert!(GateDescriptor::builtin("xor3").is_err());
    }
}
