//! Transmission through a calculating-block state between two semi-infinite
//! tight-binding chains.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::SymMatrix;

pub const DEFAULT_HOPPING: f64 = 4.0;
pub const DEFAULT_LEAD_COUPLING: f64 = 0.1;
pub const DEFAULT_GRID: (f64, f64, usize) = (-3.0, 3.0, 2001);
const GOLDEN_ITERS: usize = 80;
/// Broadening used when a state decoupled from the attach site sits at E.
const ETA: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("lead hopping must be positive, got {0}")]
    BadHopping(f64),
    #[error("attach state {state} out of range for order {n}")]
    BadAttach { state: usize, n: usize },
    #[error("Green function singular at E = {0}")]
    SingularGreen(f64),
    #[error("T_min must lie in (0, 1), got {0}")]
    BadThreshold(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeadModel {
    pub hopping: f64,
    #[serde(default)]
    pub onsite: f64,
    pub coupling: f64,
}

impl LeadModel {
    pub fn new(hopping: f64, coupling: f64) -> Result<Self, TransportError> {
        if !(hopping > 0.0) {
            return Err(TransportError::BadHopping(hopping));
        }
        Ok(Self { hopping, onsite: 0.0, coupling })
    }

    pub fn in_band(&self, e: f64) -> bool {
        (e - self.onsite).abs() < 2.0 * self.hopping
    }
}

impl Default for LeadModel {
    fn default() -> Self {
        Self { hopping: DEFAULT_HOPPING, onsite: 0.0, coupling: DEFAULT_LEAD_COUPLING }
    }
}

/// Retarded surface Green function of a semi-infinite chain, the root of
/// `h² g² - Δ g + 1 = 0` with `Im g ≤ 0` in band and `|g| h < 1` outside.
pub fn surface_green(e: f64, lead: &LeadModel) -> Complex64 {
    let h = lead.hopping;
    let d = e - lead.onsite;
    let disc = 4.0 * h * h - d * d;
    if disc >= 0.0 {
        Complex64::new(d, -disc.sqrt()) / (2.0 * h * h)
    } else {
        Complex64::new((d - d.signum() * (-disc).sqrt()) / (2.0 * h * h), 0.0)
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn complex_solve(mut a: Vec<Vec<Complex64>>, mut b: Vec<Complex64>) -> Option<Vec<Complex64>> {
    let n = b.len();
    let scale = a.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))?;
        if a[piv][col].norm() <= 1e-14 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for c in col..n {
                let t = a[col][c];
                a[r][c] -= f * t;
            }
            let t = b[col];
            b[r] -= f * t;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for r in (0..n).rev() {
        let s: Complex64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// A calculating block with both leads on one state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportModel {
    pub h0: SymMatrix,
    pub attach: usize,
    pub lead: LeadModel,
}

impl TransportModel {
    pub fn new(h0: SymMatrix, attach: usize, lead: LeadModel) -> Result<Self, TransportError> {
        if attach >= h0.order() {
            return Err(TransportError::BadAttach { state: attach, n: h0.order() });
        }
        if !(lead.hopping > 0.0) {
            return Err(TransportError::BadHopping(lead.hopping));
        }
        Ok(Self { h0, attach, lead })
    }

    /// Attach-site element of `(E - H0 - Σ)⁻¹`, `Σ = 2 ε² g(E)` on the attach
    /// site. A pole of a state with no weight on the attach site leaves this
    /// element finite; it is then evaluated at `E + iη`.
    pub fn green_attach(&self, e: f64) -> Result<Complex64, TransportError> {
        self.solve_attach(Complex64::new(e, 0.0))
            .or_else(|| self.solve_attach(Complex64::new(e, ETA)))
            .ok_or(TransportError::SingularGreen(e))
    }

    fn solve_attach(&self, z: Complex64) -> Option<Complex64> {
        let n = self.h0.order();
        let sigma = 2.0 * self.lead.coupling.powi(2) * surface_green(z.re, &self.lead);
        let a: Vec<Vec<Complex64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let mut m = if i == j { z } else { Complex64::new(0.0, 0.0) };
                        m -= self.h0.get(i, j);
                        if i == j && i == self.attach {
                            m -= sigma;
                        }
                        m
                    })
                    .collect()
            })
            .collect();
        let mut rhs = vec![Complex64::new(0.0, 0.0); n];
        rhs[self.attach] = Complex64::new(1.0, 0.0);
        complex_solve(a, rhs).map(|x| x[self.attach])
    }

    /// `T(E) = Γ² |G_aa|²` with `Γ = 2 ε² |Im g(E)|`.
    pub fn transmission_at(&self, e: f64) -> Result<f64, TransportError> {
        let gamma = 2.0 * self.lead.coupling.powi(2) * surface_green(e, &self.lead).im.abs();
        if gamma == 0.0 {
            return Ok(0.0);
        }
        Ok(gamma * gamma * self.green_attach(e)?.norm_sqr())
    }

    pub fn spectrum(&self, grid: &[f64], input: &str) -> Result<TransmissionSpectrum, TransportError> {
        let t = grid.iter().map(|&e| self.transmission_at(e)).collect::<Result<Vec<_>, _>>()?;
        Ok(TransmissionSpectrum { energies: grid.to_vec(), t, input: input.to_string(), model: Some(self.clone()) })
    }

    /// Full width at half maximum of the peak at `e0`, searched within `±span`.
    pub fn peak_width(&self, e0: f64, span: f64) -> Result<f64, TransportError> {
        let half = 0.5 * self.transmission_at(e0)?;
        let edge = |dir: f64| -> Result<f64, TransportError> {
            let (mut a, mut b) = (0.0, span);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                if self.transmission_at(e0 + dir * m)? > half {
                    a = m;
                } else {
                    b = m;
                }
            }
            Ok(0.5 * (a + b))
        };
        Ok(edge(1.0)? + edge(-1.0)?)
    }

    fn golden_max(&self, mut a: f64, mut b: f64) -> Result<(f64, f64), TransportError> {
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        let (mut fc, mut fd) = (self.transmission_at(c)?, self.transmission_at(d)?);
        for _ in 0..GOLDEN_ITERS {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - r * (b - a);
                fc = self.transmission_at(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + r * (b - a);
                fd = self.transmission_at(d)?;
            }
        }
        let e = 0.5 * (a + b);
        Ok((e, self.transmission_at(e)?))
    }
}

pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `T(E)` of one model on a grid.
pub fn transmission(h0: &SymMatrix, attach: usize, lead: &LeadModel, grid: &[f64]) -> Result<TransmissionSpectrum, TransportError> {
    TransportModel::new(h0.clone(), attach, *lead)?.spectrum(grid, "")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransmissionSpectrum {
    pub energies: Vec<f64>,
    #[serde(rename = "T")]
    pub t: Vec<f64>,
    pub input: String,
    #[serde(skip)]
    pub model: Option<TransportModel>,
}

impl TransmissionSpectrum {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "energy_eV,T")?;
        for (e, t) in self.energies.iter().zip(&self.t) {
            writeln!(w, "{},{}", crate::format_num(*e), crate::format_num(*t))?;
        }
        Ok(())
    }
}

/// Local maxima above `t_min`. With a model attached every grid maximum is
/// refined by golden-section search between its neighbours first, so peaks
/// narrower than the grid spacing are found.
pub fn resonance_peaks(ts: &TransmissionSpectrum, t_min: f64) -> Result<Vec<f64>, TransportError> {
    if !(t_min > 0.0 && t_min < 1.0) {
        return Err(TransportError::BadThreshold(t_min));
    }
    let (e, t) = (&ts.energies, &ts.t);
    let n = t.len();
    let mut out = Vec::new();
    for i in 0..n {
        let left = if i > 0 { t[i - 1] } else { f64::NEG_INFINITY };
        let right = if i + 1 < n { t[i + 1] } else { f64::NEG_INFINITY };
        if !(t[i] >= left && t[i] >= right && (t[i] > left || t[i] > right)) {
            continue;
        }
        // plateaus report their first point only
        if i > 0 && t[i] == left {
            continue;
        }
        let (pe, pt) = match &ts.model {
            Some(m) => m.golden_max(e[i.saturating_sub(1)], e[(i + 1).min(n - 1)])?,
            None => (e[i], t[i]),
        };
        if pt > t_min {
            out.push(pe);
        }
    }
    Ok(out)
}
