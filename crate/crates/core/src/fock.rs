//! Truncated Fock space: ladder, quadrature and Hamiltonian matrices.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Units and truncation dimension shared by every operator of a session.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub hbar: f64,
    pub mass: f64,
    pub omega: f64,
    pub n_trunc: usize,
}

impl PhysicalParams {
    pub fn new(hbar: f64, mass: f64, omega: f64, n_trunc: usize) -> Result<Self> {
        let p = PhysicalParams { hbar, mass, omega, n_trunc };
        p.validate()?;
        Ok(p)
    }

    /// ħ = m = ω = 1.
    pub fn unit(n_trunc: usize) -> Result<Self> {
        Self::new(1.0, 1.0, 1.0, n_trunc)
    }

    pub fn with_dim(&self, n_trunc: usize) -> Result<Self> {
        Self::new(self.hbar, self.mass, self.omega, n_trunc)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.hbar) || !pos(self.mass) || !pos(self.omega) {
            return Err(Error::InvalidParams(format!(
                "hbar, mass, omega must be positive (got {}, {}, {})",
                self.hbar, self.mass, self.omega
            )));
        }
        if self.n_trunc < 4 {
            return Err(Error::InvalidParams(format!("n_trunc must be >= 4 (got {})", self.n_trunc)));
        }
        Ok(())
    }

    /// √(ħ/2mω), the position scale.
    pub fn x_scale(&self) -> f64 {
        (self.hbar / (2.0 * self.mass * self.omega)).sqrt()
    }

    /// √(ħmω/2), the momentum scale.
    pub fn p_scale(&self) -> f64 {
        (self.hbar * self.mass * self.omega / 2.0).sqrt()
    }
}

/// Top-left k×k corner on which infinite-dimensional identities are asserted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubBlock(usize);

impl SubBlock {
    pub fn new(k: usize, dim: usize) -> Result<Self> {
        if k == 0 || k >= dim {
            return Err(Error::InvalidParams(format!("sub-block {k} must satisfy 0 < k < {dim}")));
        }
        Ok(SubBlock(k))
    }

    pub fn k(&self) -> usize {
        self.0
    }
}

/// Dense complex operator on the truncated space.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    m: DMatrix<C64>,
}

impl OperatorMatrix {
    pub fn from_matrix(m: DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "operator matrices are square");
        OperatorMatrix { m }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_matrix(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_matrix(DMatrix::identity(dim, dim))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self::from_matrix(DMatrix::from_fn(dim, dim, f))
    }

    pub fn diagonal(d: &[C64]) -> Self {
        Self::from_fn(d.len(), |i, j| if i == j { d[i] } else { C64::default() })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<C64> {
        &mut self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.m[(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_matrix(&self.m * s)
    }

    pub fn adjoint(&self) -> Self {
        Self::from_matrix(self.m.adjoint())
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self * other - other * self
    }

    pub fn anticommutator(&self, other: &Self) -> Self {
        self * other + other * self
    }

    /// Top-left k×k block.
    pub fn project(&self, k: usize) -> Self {
        let k = k.min(self.dim());
        Self::from_matrix(self.m.view((0, 0), (k, k)).into_owned())
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
    }

    pub fn frobenius(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn norm1(&self) -> f64 {
        (0..self.dim())
            .map(|j| self.m.column(j).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    /// max |M − N| over the leading k×k block.
    pub fn block_distance(&self, other: &Self, k: usize) -> f64 {
        let k = k.min(self.dim()).min(other.dim());
        let mut d: f64 = 0.0;
        for j in 0..k {
            for i in 0..k {
                d = d.max((self.m[(i, j)] - other.m[(i, j)]).norm());
            }
        }
        d
    }

    pub fn hermiticity_residual(&self) -> f64 {
        (self - &self.adjoint()).max_abs()
    }

    pub fn is_upper_triangular(&self) -> bool {
        let n = self.dim();
        (0..n).all(|j| (j + 1..n).all(|i| self.m[(i, j)] == C64::default()))
    }

    pub fn is_lower_triangular(&self) -> bool {
        let n = self.dim();
        (0..n).all(|j| (0..j).all(|i| self.m[(i, j)] == C64::default()))
    }

    fn has_zero_diagonal(&self) -> bool {
        (0..self.dim()).all(|i| self.m[(i, i)] == C64::default())
    }

    pub fn is_strictly_triangular(&self) -> bool {
        self.has_zero_diagonal() && (self.is_upper_triangular() || self.is_lower_triangular())
    }

    /// Determinant; triangular inputs take the exact diagonal product.
    pub fn determinant(&self) -> C64 {
        if self.is_upper_triangular() || self.is_lower_triangular() {
            return (0..self.dim()).map(|i| self.m[(i, i)]).product();
        }
        self.m.clone().lu().determinant()
    }

    pub fn apply(&self, v: &StateVector) -> StateVector {
        assert_eq!(self.dim(), v.dim());
        StateVector::from_vector(&self.m * v.vector())
    }

    /// Inverse via LU with a 1-norm condition estimate; rejects cond > 1/tol.
    pub fn inverse(&self, tol: f64) -> Result<Self> {
        let inv = self
            .m
            .clone()
            .try_inverse()
            .ok_or(Error::Singular { cond: f64::INFINITY })?;
        let inv = Self::from_matrix(inv);
        let cond = self.norm1() * inv.norm1();
        if !cond.is_finite() || !inv.is_finite() || cond * tol > 1.0 {
            return Err(Error::Singular { cond });
        }
        Ok(inv)
    }

    /// exp(M); see [`crate::linalg::expm`].
    pub fn exp(&self) -> Result<Self> {
        crate::linalg::expm(self)
    }
}

impl<'a> Add<&'a OperatorMatrix> for &'a OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix::from_matrix(&self.m + &rhs.m)
    }
}

impl<'a> Sub<&'a OperatorMatrix> for &'a OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix::from_matrix(&self.m - &rhs.m)
    }
}

impl<'a> Mul<&'a OperatorMatrix> for &'a OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix::from_matrix(&self.m * &rhs.m)
    }
}

impl Add for OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix::from_matrix(self.m + rhs.m)
    }
}

impl Sub for OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix::from_matrix(self.m - rhs.m)
    }
}

impl Mul<C64> for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, s: C64) -> OperatorMatrix {
        self.scale(s)
    }
}

impl Mul<C64> for OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, s: C64) -> OperatorMatrix {
        OperatorMatrix::from_matrix(self.m * s)
    }
}

impl Neg for OperatorMatrix {
    type Output = OperatorMatrix;
    fn neg(self) -> OperatorMatrix {
        OperatorMatrix::from_matrix(-self.m)
    }
}

/// Coefficients of a state in the number basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    v: DVector<C64>,
}

impl StateVector {
    pub fn from_vector(v: DVector<C64>) -> Self {
        StateVector { v }
    }

    pub fn from_slice(c: &[C64]) -> Self {
        Self::from_vector(DVector::from_column_slice(c))
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_vector(DVector::zeros(dim))
    }

    /// Number state |n⟩.
    pub fn basis(dim: usize, n: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[n] = re(1.0);
        Self::from_vector(v)
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn vector(&self) -> &DVector<C64> {
        &self.v
    }

    pub fn coeffs(&self) -> &[C64] {
        self.v.as_slice()
    }

    pub fn get(&self, n: usize) -> C64 {
        self.v[n]
    }

    pub fn norm(&self) -> f64 {
        self.v.norm()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_vector(&self.v * s)
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.v.dotc(&other.v)
    }

    /// max |u_n − v_n| for n < k.
    pub fn block_distance(&self, other: &Self, k: usize) -> f64 {
        (0..k.min(self.dim()).min(other.dim()))
            .map(|n| (self.v[n] - other.v[n]).norm())
            .fold(0.0, f64::max)
    }

    /// Euclidean norm of the first k coefficients.
    pub fn block_norm(&self, k: usize) -> f64 {
        self.v.rows(0, k.min(self.dim())).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Annihilation and creation matrices: a[n−1, n] = √n.
pub fn ladder_matrices(params: &PhysicalParams) -> (OperatorMatrix, OperatorMatrix) {
    let a = annihilation(params.n_trunc);
    let ad = a.adjoint();
    (a, ad)
}

pub fn annihilation(dim: usize) -> OperatorMatrix {
    OperatorMatrix::from_fn(dim, |i, j| if j == i + 1 { re((j as f64).sqrt()) } else { C64::default() })
}

/// a†a + ½.
pub fn shifted_number(dim: usize) -> OperatorMatrix {
    OperatorMatrix::from_fn(dim, |i, j| if i == j { re(i as f64 + 0.5) } else { C64::default() })
}

pub fn quadrature_matrices(params: &PhysicalParams) -> (OperatorMatrix, OperatorMatrix) {
    let (a, ad) = ladder_matrices(params);
    let x = (&ad + &a).scale(re(params.x_scale()));
    let p = (&ad - &a).scale(I * params.p_scale());
    (x, p)
}

/// H^os = ħω(a†a + ½).
pub fn harmonic_hamiltonian(params: &PhysicalParams) -> OperatorMatrix {
    shifted_number(params.n_trunc).scale(re(params.hbar * params.omega))
}

/// H^r = −(ħω/2)(a†² + a²).
pub fn inverted_hamiltonian(params: &PhysicalParams) -> OperatorMatrix {
    let (a, ad) = ladder_matrices(params);
    (&(&ad * &ad) + &(&a * &a)).scale(re(-0.5 * params.hbar * params.omega))
}

/// The pair obtained by continuing ω → iω in the oscillator ladder operators.
/// The second member is not the adjoint of the first.
pub fn naive_ladder(params: &PhysicalParams) -> (OperatorMatrix, OperatorMatrix) {
    let (x, p) = quadrature_matrices(params);
    let (h, m, w) = (params.hbar, params.mass, params.omega);
    let phase = C64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
    let xs = x.scale(re((m * w / (2.0 * h)).sqrt()));
    let ps = p.scale(re(1.0 / (2.0 * m * w * h).sqrt()));
    ((&xs + &ps).scale(phase), (&xs - &ps).scale(phase))
}
