//! Normal-ordered polynomials in a, a†.
//!
//! Conjugating by one of the Dyson-map factors acts on the ladder operators as a
//! linear substitution, so polynomial operators can be transported exactly and
//! only rendered to a matrix at the end. The rendered k-block is then free of any
//! truncation artefacts: ⟨i|a†ᵖaᵠ|j⟩ on the truncated space equals the infinite
//! space value.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use crate::fock::{re, OperatorMatrix, PhysicalParams, C64, I};
use crate::linalg::Generator;

/// Σ c_{pq} a†ᵖ aᵠ.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NormalPoly {
    terms: BTreeMap<(u32, u32), C64>,
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

impl NormalPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: C64) -> Self {
        Self::term(0, 0, c)
    }

    /// c·a†ᵖaᵠ.
    pub fn term(p: u32, q: u32, c: C64) -> Self {
        let mut out = Self::zero();
        out.push(p, q, c);
        out
    }

    pub fn annihilation() -> Self {
        Self::term(0, 1, re(1.0))
    }

    pub fn creation() -> Self {
        Self::term(1, 0, re(1.0))
    }

    /// a†a + ½.
    pub fn shifted_number() -> Self {
        Self::term(1, 1, re(1.0)) + Self::constant(re(0.5))
    }

    pub fn generator(g: Generator) -> Self {
        match g {
            Generator::Lower2 => Self::term(0, 2, re(1.0)),
            Generator::Raise2 => Self::term(2, 0, re(1.0)),
            Generator::Number => Self::shifted_number(),
        }
    }

    /// (x, p) = (√(ħ/2mω)(a† + a), i√(ħmω/2)(a† − a)).
    pub fn quadratures(params: &PhysicalParams) -> (Self, Self) {
        let (a, ad) = (Self::annihilation(), Self::creation());
        let x = (&ad + &a).scale(re(params.x_scale()));
        let p = (&ad - &a).scale(I * params.p_scale());
        (x, p)
    }

    /// ħω(a†a + ½).
    pub fn harmonic_hamiltonian(params: &PhysicalParams) -> Self {
        Self::shifted_number().scale(re(params.hbar * params.omega))
    }

    /// −(ħω/2)(a†² + a²).
    pub fn inverted_hamiltonian(params: &PhysicalParams) -> Self {
        (Self::generator(Generator::Raise2) + Self::generator(Generator::Lower2)).scale(re(-0.5 * params.hbar * params.omega))
    }

    fn push(&mut self, p: u32, q: u32, c: C64) {
        if c == C64::default() {
            return;
        }
        let e = self.terms.entry((p, q)).or_default();
        *e += c;
        if *e == C64::default() {
            self.terms.remove(&(p, q));
        }
    }

    pub fn coeff(&self, p: u32, q: u32) -> C64 {
        self.terms.get(&(p, q)).copied().unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = ((u32, u32), C64)> + '_ {
        self.terms.iter().map(|(k, v)| (*k, *v))
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|(p, q)| p + q).max().unwrap_or(0)
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = Self::zero();
        for (&(p, q), &c) in &self.terms {
            out.push(p, q, c * s);
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero();
        for (&(p, q), &c) in &self.terms {
            out.push(q, p, c.conj());
        }
        out
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    pub fn pow(&self, n: u32) -> Self {
        (0..n).fold(Self::constant(re(1.0)), |acc, _| &acc * self)
    }

    /// Largest coefficient modulus.
    pub fn max_coeff(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Replaces a ↦ `a_img`, a† ↦ `ad_img` term by term.
    pub fn substitute(&self, a_img: &Self, ad_img: &Self) -> Self {
        let mut out = Self::zero();
        let mut a_pows = vec![Self::constant(re(1.0))];
        let mut ad_pows = vec![Self::constant(re(1.0))];
        for (&(p, q), &c) in &self.terms {
            while ad_pows.len() <= p as usize {
                let next = ad_pows.last().unwrap() * ad_img;
                ad_pows.push(next);
            }
            while a_pows.len() <= q as usize {
                let next = a_pows.last().unwrap() * a_img;
                a_pows.push(next);
            }
            out = &out + &(&ad_pows[p as usize] * &a_pows[q as usize]).scale(c);
        }
        out
    }

    /// F⁻¹·self·F for F = exp(c·G).
    pub fn conjugate_by(&self, g: Generator, c: C64) -> Self {
        let (a, ad) = (Self::annihilation(), Self::creation());
        let (a_img, ad_img) = match g {
            // [a, c a†²] = 2c a†
            Generator::Raise2 => (&a + &ad.scale(c * 2.0), ad),
            // [a†, c a²] = −2c a
            Generator::Lower2 => {
                let ad_img = &ad - &a.scale(c * 2.0);
                (a, ad_img)
            }
            Generator::Number => (a.scale(c.exp()), ad.scale((-c).exp())),
        };
        self.substitute(&a_img, &ad_img)
    }

    /// Matrix on the first `dim` Fock levels.
    pub fn matrix(&self, dim: usize) -> OperatorMatrix {
        let mut m = OperatorMatrix::zeros(dim);
        for (&(p, q), &c) in &self.terms {
            let (p, q) = (p as usize, q as usize);
            // ⟨m+p| a†ᵖaᵠ |m+q⟩ = √((m+p)!/m!)·√((m+q)!/m!)
            for lvl in 0..dim.saturating_sub(p.max(q)) {
                let up: f64 = (1..=p).map(|i| (lvl + i) as f64).product();
                let down: f64 = (1..=q).map(|i| (lvl + i) as f64).product();
                m.matrix_mut()[(lvl + p, lvl + q)] += c * (up * down).sqrt();
            }
        }
        m
    }
}

impl Add for &NormalPoly {
    type Output = NormalPoly;
    fn add(self, rhs: &NormalPoly) -> NormalPoly {
        let mut out = self.clone();
        for (&(p, q), &c) in &rhs.terms {
            out.push(p, q, c);
        }
        out
    }
}

impl Add for NormalPoly {
    type Output = NormalPoly;
    fn add(self, rhs: NormalPoly) -> NormalPoly {
        &self + &rhs
    }
}

impl Sub for &NormalPoly {
    type Output = NormalPoly;
    fn sub(self, rhs: &NormalPoly) -> NormalPoly {
        let mut out = self.clone();
        for (&(p, q), &c) in &rhs.terms {
            out.push(p, q, -c);
        }
        out
    }
}

impl Sub for NormalPoly {
    type Output = NormalPoly;
    fn sub(self, rhs: NormalPoly) -> NormalPoly {
        &self - &rhs
    }
}

impl Neg for &NormalPoly {
    type Output = NormalPoly;
    fn neg(self) -> NormalPoly {
        self.scale(re(-1.0))
    }
}

/// Normal ordering by aᵠ a†ʳ = Σₖ k!·C(q,k)·C(r,k)·a†^{r−k} a^{q−k}.
impl Mul for &NormalPoly {
    type Output = NormalPoly;
    fn mul(self, rhs: &NormalPoly) -> NormalPoly {
        let mut out = NormalPoly::zero();
        for (&(p1, q1), &c1) in &self.terms {
            for (&(p2, q2), &c2) in &rhs.terms {
                for k in 0..=q1.min(p2) {
                    let w = factorial(k) * binom(q1, k) * binom(p2, k);
                    out.push(p1 + p2 - k, q1 + q2 - k, c1 * c2 * w);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{annihilation, harmonic_hamiltonian, inverted_hamiltonian, quadrature_matrices};
    use proptest::prelude::*;

    #[test]
    fn canonical_commutator() {
        let (a, ad) = (NormalPoly::annihilation(), NormalPoly::creation());
        assert_eq!(a.commutator(&ad), NormalPoly::constant(re(1.0)));
        // a a† a† = a†² a + 2a†
        let lhs = &(&a * &ad) * &ad;
        assert_eq!(lhs.coeff(2, 1), re(1.0));
        assert_eq!(lhs.coeff(1, 0), re(2.0));
    }

    #[test]
    fn rendering_matches_fock_matrices() {
        let params = PhysicalParams::new(2.0, 0.5, 3.0, 12).unwrap();
        assert_eq!(NormalPoly::annihilation().matrix(12), annihilation(12));
        let (x, p) = NormalPoly::quadratures(&params);
        let (xm, pm) = quadrature_matrices(&params);
        assert!((&x.matrix(12) - &xm).max_abs() < 1e-14);
        assert!((&p.matrix(12) - &pm).max_abs() < 1e-14);
        assert!((&NormalPoly::harmonic_hamiltonian(&params).matrix(12) - &harmonic_hamiltonian(&params)).max_abs() < 1e-13);
        assert!((&NormalPoly::inverted_hamiltonian(&params).matrix(12) - &inverted_hamiltonian(&params)).max_abs() < 1e-13);
    }

    #[test]
    fn product_renders_like_matrix_product_away_from_the_edge() {
        let x = NormalPoly::term(1, 2, C64::new(0.3, 1.0)) + NormalPoly::term(0, 1, re(2.0));
        let y = NormalPoly::term(3, 0, re(-1.0)) + NormalPoly::term(1, 1, C64::new(0.0, 0.5));
        let dense = &x.matrix(30) * &y.matrix(30);
        assert!((&x * &y).matrix(30).block_distance(&dense, 26) < 1e-10);
    }

    #[test]
    fn factor_conjugation_matches_dense_sandwich() {
        let dim = 40;
        let o = NormalPoly::term(1, 1, re(1.0)) + NormalPoly::term(0, 1, C64::new(0.2, -0.7));
        for (g, c) in [(Generator::Raise2, I * 0.5), (Generator::Lower2, -I * 0.25), (Generator::Number, C64::new(0.2, 0.1))] {
            let gm = g.matrix(dim);
            let want = &(&gm.scale(-c).exp().unwrap() * &o.matrix(dim)) * &gm.scale(c).exp().unwrap();
            let got = o.conjugate_by(g, c).matrix(dim);
            assert!(got.block_distance(&want, 10) < 1e-9 * want.project(10).max_abs(), "{g:?}");
        }
    }

    proptest! {
        #[test]
        fn conjugation_is_a_homomorphism(cr in -1.0f64..1.0, ci in -1.0f64..1.0, which in 0usize..3) {
            let g = [Generator::Raise2, Generator::Lower2, Generator::Number][which];
            let c = C64::new(cr, ci);
            let x = NormalPoly::term(2, 1, re(1.0)) + NormalPoly::term(0, 1, C64::new(0.0, 1.0));
            let y = NormalPoly::term(1, 0, re(0.5)) + NormalPoly::term(0, 2, re(1.0));
            let lhs = (&x * &y).conjugate_by(g, c);
            let rhs = &x.conjugate_by(g, c) * &y.conjugate_by(g, c);
            prop_assert!((&lhs - &rhs).max_coeff() < 1e-12 * (1.0 + lhs.max_coeff()));
            let back = x.conjugate_by(g, c).conjugate_by(g, -c);
            prop_assert!((&back - &x).max_coeff() < 1e-12);
        }
    }
}
