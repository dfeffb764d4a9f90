//! Matrix exponential and the generator-shift products used by the conjugation kernels.

use crate::error::{Error, Result};
use crate::fock::{OperatorMatrix, C64};

// Beyond this the squaring phase alone loses all accuracy.
const MAX_NORM: f64 = 1e8;

/// exp(M).
///
/// Strictly triangular input is nilpotent, so the power series terminates and is
/// summed exactly. Everything else goes through scaling-and-squaring with a Taylor
/// kernel whose order is chosen from the scaled norm.
pub fn expm(m: &OperatorMatrix) -> Result<OperatorMatrix> {
    if !m.is_finite() {
        return Err(Error::NonFinite("matrix exponential input"));
    }
    let norm = m.norm1();
    if m.is_strictly_triangular() {
        return nilpotent_exp(m, norm);
    }
    if norm > MAX_NORM {
        return Err(Error::Overflow { norm });
    }

    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let a = m.scale(C64::new(0.5f64.powi(s), 0.0));
    let a_norm = a.norm1();

    let dim = m.dim();
    let mut sum = OperatorMatrix::identity(dim);
    let mut term = OperatorMatrix::identity(dim);
    let mut bound = 1.0;
    for k in 1..=40 {
        term = (&term * &a).scale(C64::new(1.0 / k as f64, 0.0));
        sum = &sum + &term;
        bound *= a_norm / k as f64;
        if bound < f64::EPSILON * 0.5 {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    if !sum.is_finite() {
        return Err(Error::Overflow { norm });
    }
    Ok(sum)
}

fn nilpotent_exp(m: &OperatorMatrix, norm: f64) -> Result<OperatorMatrix> {
    let dim = m.dim();
    let mut sum = OperatorMatrix::identity(dim);
    let mut term = OperatorMatrix::identity(dim);
    for k in 1..dim {
        term = (&term * m).scale(C64::new(1.0 / k as f64, 0.0));
        if term.max_abs() == 0.0 {
            break;
        }
        sum = &sum + &term;
    }
    if !sum.is_finite() {
        return Err(Error::Overflow { norm });
    }
    Ok(sum)
}

/// Quadratic generators of the disentangled exponentials.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    /// a²
    Lower2,
    /// a†²
    Raise2,
    /// a†a + ½
    Number,
}

impl Generator {
    pub fn adjoint(self) -> Generator {
        match self {
            Generator::Lower2 => Generator::Raise2,
            Generator::Raise2 => Generator::Lower2,
            Generator::Number => Generator::Number,
        }
    }

    pub fn matrix(self, dim: usize) -> OperatorMatrix {
        let id = OperatorMatrix::identity(dim);
        match self {
            Generator::Lower2 => left_mul(self, &id),
            Generator::Raise2 => left_mul(self, &id),
            Generator::Number => crate::fock::shifted_number(dim),
        }
    }
}

// √(n(n−1)), the a² matrix element ⟨n−2|a²|n⟩.
#[inline]
fn pair(n: usize) -> f64 {
    ((n * (n - 1)) as f64).sqrt()
}

/// G·M for a quadratic generator, O(dim²).
pub fn left_mul(g: Generator, m: &OperatorMatrix) -> OperatorMatrix {
    let n = m.dim();
    let src = m.matrix();
    OperatorMatrix::from_fn(n, |i, j| match g {
        // (a² M)[i, j] = √((i+1)(i+2)) M[i+2, j]
        Generator::Lower2 => {
            if i + 2 < n {
                src[(i + 2, j)] * pair(i + 2)
            } else {
                C64::default()
            }
        }
        // (a†² M)[i, j] = √(i(i−1)) M[i−2, j]
        Generator::Raise2 => {
            if i >= 2 {
                src[(i - 2, j)] * pair(i)
            } else {
                C64::default()
            }
        }
        Generator::Number => src[(i, j)] * (i as f64 + 0.5),
    })
}

/// M·G for a quadratic generator, O(dim²).
pub fn right_mul(g: Generator, m: &OperatorMatrix) -> OperatorMatrix {
    let n = m.dim();
    let src = m.matrix();
    OperatorMatrix::from_fn(n, |i, j| match g {
        // (M a²)[i, j] = M[i, j−2] √(j(j−1))
        Generator::Lower2 => {
            if j >= 2 {
                src[(i, j - 2)] * pair(j)
            } else {
                C64::default()
            }
        }
        // (M a†²)[i, j] = M[i, j+2] √((j+1)(j+2))
        Generator::Raise2 => {
            if j + 2 < n {
                src[(i, j + 2)] * pair(j + 2)
            } else {
                C64::default()
            }
        }
        Generator::Number => src[(i, j)] * (j as f64 + 0.5),
    })
}
