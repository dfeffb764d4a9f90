//! Double-double state vectors and exact-factor transport.
//!
//! Moving a vector through ρ⁻¹ and back through ρ cancels entries of size up to
//! ~1e28 on a 128-level space, so f64 arithmetic loses every digit. Vectors that
//! live in the pseudo-Hermitian frame are therefore kept at ~32 significant digits,
//! together with a componentwise a-posteriori error bound.

use num_complex::Complex;
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::fock::{StateVector, C64};
use crate::linalg::Generator;

pub type Wide = TwoFloat;
pub type WideComplex = Complex<TwoFloat>;

// Unit roundoff of a handful of double-double operations, conservatively rounded up.
const GAMMA: f64 = 1e-30;

#[inline]
pub fn widen(z: C64) -> WideComplex {
    Complex::new(TwoFloat::from(z.re), TwoFloat::from(z.im))
}

#[inline]
pub fn narrow(z: WideComplex) -> C64 {
    C64::new(f64::from(z.re), f64::from(z.im))
}

#[inline]
fn wabs(z: &WideComplex) -> f64 {
    narrow(*z).norm()
}

/// 1/x with one Newton step from the f64 reciprocal.
///
/// twofloat's own double-double division drops the residual term of its reciprocal
/// and is only f64-accurate, so it is avoided throughout.
pub fn recip(x: TwoFloat) -> TwoFloat {
    let r0 = 1.0 / x.hi();
    let resid = TwoFloat::from(1.0) - x * r0;
    resid * r0 + r0
}

pub fn recip_complex(z: WideComplex) -> WideComplex {
    let inv = recip(z.norm_sqr());
    Complex::new(z.re * inv, -z.im * inv)
}

/// Wide-precision coefficients plus a bound on their absolute error.
#[derive(Clone, Debug)]
pub struct WideVector {
    pub coeffs: Vec<WideComplex>,
    pub err: Vec<f64>,
}

impl WideVector {
    pub fn from_state(v: &StateVector) -> Self {
        WideVector {
            coeffs: v.coeffs().iter().map(|z| widen(*z)).collect(),
            err: vec![0.0; v.dim()],
        }
    }

    pub fn basis(dim: usize, n: usize) -> Self {
        Self::from_state(&StateVector::basis(dim, n))
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn to_state(&self) -> StateVector {
        StateVector::from_slice(&self.coeffs.iter().map(|z| narrow(*z)).collect::<Vec<_>>())
    }

    pub fn scale(&self, s: C64) -> Self {
        let w = widen(s);
        WideVector {
            coeffs: self.coeffs.iter().map(|z| *z * w).collect(),
            err: self.err.iter().map(|e| e * s.norm() * (1.0 + GAMMA)).collect(),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        let mut acc = TwoFloat::from(0.0);
        for z in &self.coeffs {
            acc += z.norm_sqr();
        }
        f64::from(acc)
    }

    /// Bound on the error of the Euclidean norm.
    pub fn norm_error(&self) -> f64 {
        self.err.iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    pub fn max_error(&self) -> f64 {
        self.err.iter().cloned().fold(0.0, f64::max)
    }

    /// Fails when the accumulated error exceeds `tol` relative to the vector norm.
    pub fn ensure_accurate(&self, tol: f64) -> Result<()> {
        let bound = self.norm_error() / self.norm_sqr().sqrt().max(f64::MIN_POSITIVE);
        if !(bound <= tol) {
            return Err(Error::IllConditioned { bound, tol });
        }
        Ok(())
    }
}

/// exp(c·G) as exact banded entries, applied in wide precision.
///
/// For the squeeze generators the non-zero entries are
/// E[m][r] = cʳ/r! · √((m+2r)!/m!), linking levels m and m+2r; they are generated
/// by the recurrence E[m][r] = E[m][r−1] · c · √((m+2r)(m+2r−1)) / r.
#[derive(Clone, Debug)]
pub struct WideFactor {
    generator: Generator,
    table: Vec<Vec<WideComplex>>,
    abs: Vec<Vec<f64>>,
}

impl WideFactor {
    pub fn new(generator: Generator, coeff: C64, dim: usize) -> Self {
        let (table, abs) = match generator {
            Generator::Number => {
                // exp(c(n+½)) and its reciprocal; only their mutual consistency matters
                let t: Vec<Vec<WideComplex>> = (0..dim)
                    .map(|n| {
                        let d = widen((coeff * (n as f64 + 0.5)).exp());
                        vec![d, recip_complex(d)]
                    })
                    .collect();
                let a = t.iter().map(|row| vec![wabs(&row[0]), wabs(&row[1])]).collect();
                (t, a)
            }
            _ => {
                let c = widen(coeff);
                let mut t = Vec::with_capacity(dim);
                for m in 0..dim {
                    let rmax = (dim - 1 - m) / 2;
                    let mut row = Vec::with_capacity(rmax + 1);
                    let mut e = widen(C64::new(1.0, 0.0));
                    row.push(e);
                    for r in 1..=rmax {
                        let top = m + 2 * r;
                        let s = TwoFloat::from((top * (top - 1)) as f64).sqrt() / r as f64;
                        e = e * c * Complex::new(s, TwoFloat::from(0.0));
                        row.push(e);
                    }
                    t.push(row);
                }
                let a = t.iter().map(|row| row.iter().map(wabs).collect()).collect();
                (t, a)
            }
        };
        WideFactor { generator, table, abs }
    }

    pub fn dim(&self) -> usize {
        self.table.len()
    }

    /// y = exp(±c·G) x; for the squeeze factors `inverse` only flips the sign of
    /// the odd-r entries.
    pub fn apply(&self, x: &WideVector, inverse: bool) -> WideVector {
        let n = self.dim();
        assert_eq!(n, x.dim());
        let mut y = vec![widen(C64::default()); n];
        let mut err = vec![0.0; n];
        match self.generator {
            Generator::Number => {
                for i in 0..n {
                    let which = usize::from(inverse);
                    let d = self.table[i][which];
                    let ad = self.abs[i][which];
                    y[i] = d * x.coeffs[i];
                    err[i] = ad * x.err[i] + GAMMA * ad * wabs(&x.coeffs[i]);
                }
            }
            // exp(c a†²): y[m+2r] += E[m][r] x[m]
            Generator::Raise2 => {
                for m in 0..n {
                    let xm = x.coeffs[m];
                    let xa = wabs(&xm);
                    for (r, e) in self.table[m].iter().enumerate() {
                        let e = if inverse && r % 2 == 1 { -*e } else { *e };
                        y[m + 2 * r] += e * xm;
                        err[m + 2 * r] += self.abs[m][r] * (x.err[m] + GAMMA * xa);
                    }
                }
            }
            // exp(c a²): y[m] += E[m][r] x[m+2r]
            Generator::Lower2 => {
                for m in 0..n {
                    let mut acc = widen(C64::default());
                    let mut e_acc = 0.0;
                    for (r, e) in self.table[m].iter().enumerate() {
                        let e = if inverse && r % 2 == 1 { -*e } else { *e };
                        let xv = x.coeffs[m + 2 * r];
                        acc += e * xv;
                        e_acc += self.abs[m][r] * (x.err[m + 2 * r] + GAMMA * wabs(&xv));
                    }
                    y[m] = acc;
                    err[m] = e_acc;
                }
            }
        }
        WideVector { coeffs: y, err }
    }
}
