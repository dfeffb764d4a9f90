//! The Dyson map between the oscillator and the inverted oscillator: disentangling
//! parameters, the factored map ρ and its metric, transformed ladder operators and
//! quadratures, and the similarity / pseudo-Hermiticity checks.

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{
    inverted_hamiltonian, ladder_matrices, re,
    shifted_number, OperatorMatrix, PhysicalParams, C64, I,
};
use crate::linalg::{expm, Generator};
use crate::poly::NormalPoly;
use crate::report::Check;
use crate::wide::{narrow, WideFactor, WideVector};

/// (ε, μ₊, μ₋) and the derived disentangling parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DisentangleParams {
    pub epsilon: f64,
    pub mu_plus: C64,
    pub mu_minus: C64,
    pub theta: C64,
    pub chi: C64,
    pub v_plus: C64,
    pub v_zero: C64,
    pub v_minus: C64,
}

impl DisentangleParams {
    pub fn coefficients(&self) -> SqueezeCoefficients {
        SqueezeCoefficients { v_plus: self.v_plus, v_zero: self.v_zero, v_minus: self.v_minus }
    }

    /// |ϑ₀ − (μ₊μ₋ − χ)|, the gap between the two closed forms offered for ϑ₀.
    pub fn consistency_residual(&self) -> f64 {
        (self.v_zero - (self.mu_plus * self.mu_minus - self.chi)).norm()
    }
}

/// (ϑ₊, ϑ₀, ϑ₋) of the ordered product exp(−ϑ₋a²/2)·exp(−(lnϑ₀/2)(a†a+½))·exp(−ϑ₊a†²/2).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SqueezeCoefficients {
    pub v_plus: C64,
    pub v_zero: C64,
    pub v_minus: C64,
}

impl SqueezeCoefficients {
    /// The values that turn the transformed oscillator into the inverted one.
    pub fn inverted_point() -> Self {
        SqueezeCoefficients { v_plus: -I, v_zero: re(1.0), v_minus: I * 0.5 }
    }
}

pub fn disentangle(epsilon: f64, mu_plus: C64, mu_minus: C64) -> Result<DisentangleParams> {
    let theta = (re(epsilon * epsilon) - mu_plus * mu_minus * 4.0).sqrt();
    // sinhθ/θ and coshθ, with the series limit near θ = 0
    let (shc, ch) = if theta.norm() < 1e-6 {
        (re(1.0) + theta * theta / 6.0, re(1.0) + theta * theta / 2.0)
    } else {
        (theta.sinh() / theta, theta.cosh())
    };
    let den = ch - shc * epsilon;
    if !(den.norm() > 1e-12) {
        return Err(Error::DegenerateDisentangle { epsilon, mu_plus, mu_minus });
    }
    Ok(DisentangleParams {
        epsilon,
        mu_plus,
        mu_minus,
        theta,
        chi: -(ch + shc * epsilon) / den,
        v_plus: mu_plus * shc * 2.0 / den,
        v_zero: (den * den).inv(),
        v_minus: mu_minus * shc * 2.0 / den,
    })
}

/// exp(c·G), one factor of the Dyson map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Factor {
    pub generator: Generator,
    pub coeff: C64,
}

impl Factor {
    pub fn new(generator: Generator, coeff: C64) -> Self {
        Factor { generator, coeff }
    }

    pub fn inverse(self) -> Self {
        Factor { coeff: -self.coeff, ..self }
    }

    pub fn adjoint(self) -> Self {
        Factor { generator: self.generator.adjoint(), coeff: self.coeff.conj() }
    }

    pub fn dense(&self, dim: usize) -> Result<OperatorMatrix> {
        expm(&self.generator.matrix(dim).scale(self.coeff))
    }

    /// F⁻¹·O·F, exact for polynomial O.
    pub fn conjugate(&self, o: &NormalPoly) -> NormalPoly {
        o.conjugate_by(self.generator, self.coeff)
    }
}

/// P⁻¹·O·P for P = F₁F₂…F_k, applied one factor at a time from F₁.
pub fn conjugate_chain(chain: &[Factor], o: &NormalPoly) -> NormalPoly {
    chain.iter().fold(o.clone(), |acc, f| f.conjugate(&acc))
}

/// ρ in factored form together with its dense realisation and metric.
///
/// The dense matrices are badly conditioned (‖ρ‖ reaches 1e13 at 64 levels), so
/// operator conjugations are done on normal-ordered polynomials and state
/// transport goes through the wide-precision factors.
#[derive(Clone, Debug)]
pub struct DysonMap {
    pub params: PhysicalParams,
    /// ρ = factors[0]·factors[1]·…
    pub factors: Vec<Factor>,
    pub rho: OperatorMatrix,
    pub rho_inv: OperatorMatrix,
    pub eta: OperatorMatrix,
    pub eta_inv: OperatorMatrix,
    wide: Vec<WideFactor>,
}

impl DysonMap {
    pub fn from_factors(params: &PhysicalParams, factors: Vec<Factor>) -> Result<Self> {
        let dim = params.n_trunc;
        let mut rho = OperatorMatrix::identity(dim);
        let mut rho_inv = OperatorMatrix::identity(dim);
        for f in &factors {
            rho = &rho * &f.dense(dim)?;
            rho_inv = &f.inverse().dense(dim)? * &rho_inv;
        }
        let eta = &rho.adjoint() * &rho;
        let eta_inv = &rho_inv * &rho_inv.adjoint();
        let wide = factors.iter().map(|f| WideFactor::new(f.generator, f.coeff, dim)).collect();
        Ok(DysonMap { params: *params, factors, rho, rho_inv, eta, eta_inv, wide })
    }

    pub fn dim(&self) -> usize {
        self.params.n_trunc
    }

    pub fn rho_inv_chain(&self) -> Vec<Factor> {
        self.factors.iter().rev().map(|f| f.inverse()).collect()
    }

    pub fn rho_dag_chain(&self) -> Vec<Factor> {
        self.factors.iter().rev().map(|f| f.adjoint()).collect()
    }

    pub fn rho_inv_dag_chain(&self) -> Vec<Factor> {
        self.factors.iter().map(|f| f.inverse().adjoint()).collect()
    }

    /// η = ρ†ρ.
    pub fn eta_chain(&self) -> Vec<Factor> {
        let mut c = self.rho_dag_chain();
        c.extend(self.factors.iter().copied());
        c
    }

    /// η⁻¹ = ρ⁻¹ρ⁻†.
    pub fn eta_inv_chain(&self) -> Vec<Factor> {
        let mut c = self.rho_inv_chain();
        c.extend(self.rho_inv_dag_chain());
        c
    }

    /// η̃ = ρρ†.
    pub fn eta_tilde_chain(&self) -> Vec<Factor> {
        let mut c = self.factors.clone();
        c.extend(self.rho_dag_chain());
        c
    }

    /// ρ⁻¹·M·ρ.
    pub fn conjugate(&self, o: &NormalPoly) -> NormalPoly {
        conjugate_chain(&self.factors, o)
    }

    /// ρ·M·ρ⁻¹.
    pub fn conjugate_inverse(&self, o: &NormalPoly) -> NormalPoly {
        conjugate_chain(&self.rho_inv_chain(), o)
    }

    pub fn apply_rho(&self, x: &WideVector) -> WideVector {
        self.wide.iter().rev().fold(x.clone(), |v, f| f.apply(&v, false))
    }

    pub fn apply_rho_inv(&self, x: &WideVector) -> WideVector {
        self.wide.iter().fold(x.clone(), |v, f| f.apply(&v, true))
    }

    /// det ρ as the product of the factor determinants.
    pub fn determinant(&self) -> Result<C64> {
        let dim = self.dim();
        self.factors.iter().try_fold(re(1.0), |acc, f| Ok(acc * f.dense(dim)?.determinant()))
    }

    /// Eigenvalues of P_k η P_k, ascending, as squared singular values of ρP_k
    /// whose columns are formed in wide precision.
    pub fn metric_block_eigenvalues(&self, k: usize) -> Result<Vec<f64>> {
        let dim = self.dim();
        let mut cols = DMatrix::<C64>::zeros(dim, k);
        for j in 0..k {
            let v = self.apply_rho(&WideVector::basis(dim, j));
            v.ensure_accurate(1e-12)?;
            for (i, z) in v.coeffs.iter().enumerate() {
                cols[(i, j)] = narrow(*z);
            }
        }
        let mut ev: Vec<f64> = cols.singular_values().iter().map(|s| s * s).collect();
        ev.sort_by(f64::total_cmp);
        Ok(ev)
    }
}

pub fn build_general_dyson(params: &PhysicalParams, d: &DisentangleParams) -> Result<DysonMap> {
    let v0 = d.v_zero;
    if v0.norm() == 0.0 {
        return Err(Error::ZeroVZero);
    }
    if v0.im == 0.0 && v0.re < 0.0 {
        return Err(Error::BranchCut(v0));
    }
    DysonMap::from_factors(
        params,
        vec![
            Factor::new(Generator::Lower2, -d.v_minus / 2.0),
            Factor::new(Generator::Number, -v0.ln() / 2.0),
            Factor::new(Generator::Raise2, -d.v_plus / 2.0),
        ],
    )
}

/// ρ = exp(−(i/4)a²)·exp((i/2)a†²).
pub fn build_inverting_dyson(params: &PhysicalParams) -> Result<DysonMap> {
    DysonMap::from_factors(
        params,
        vec![Factor::new(Generator::Lower2, -I * 0.25), Factor::new(Generator::Raise2, I * 0.5)],
    )
}

/// exp(−2[(ε/2)(a†a+½) + μ₋a²/2 + μ₊a†²/2]), the undisentangled form.
pub fn single_exponential(params: &PhysicalParams, d: &DisentangleParams) -> Result<OperatorMatrix> {
    let dim = params.n_trunc;
    let g = &(&shifted_number(dim).scale(re(d.epsilon / 2.0)) + &Generator::Lower2.matrix(dim).scale(d.mu_minus / 2.0))
        + &Generator::Raise2.matrix(dim).scale(d.mu_plus / 2.0);
    expm(&g.scale(re(-2.0)))
}

/// Seeded draws from |ε|, |μ±| ≤ 0.5 restricted to the region where both sides of
/// the disentangling identity are bounded on the truncated space: the generator's
/// Hermitian part is non-negative (ε ≥ |μ₋ + μ₊*|) and |4μ₊μ₋(sinhθ/θ)²| ≤ 0.1.
pub fn sample_parameter_box(seed: u64, count: usize) -> Vec<DisentangleParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let disk = |rng: &mut ChaCha8Rng| loop {
        let z = C64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        if z.norm() <= 0.5 {
            return z;
        }
    };
    while out.len() < count {
        let eps: f64 = rng.random_range(-0.5..0.5);
        let mp = disk(&mut rng);
        let mm = disk(&mut rng);
        if eps < (mm + mp.conj()).norm() {
            continue;
        }
        let Ok(d) = disentangle(eps, mp, mm) else { continue };
        let shc = if d.theta.norm() < 1e-6 { re(1.0) } else { d.theta.sinh() / d.theta };
        if (mp * mm * shc * shc * 4.0).norm() > 0.1 {
            continue;
        }
        out.push(d);
    }
    out
}

/// True iff (ϑ₊, ϑ₋, ϑ₀) = (−i, i/2, 1) within tol.
pub fn constraint_check(c: &SqueezeCoefficients, tol: f64) -> bool {
    let t = SqueezeCoefficients::inverted_point();
    (c.v_plus - t.v_plus).norm() <= tol && (c.v_minus - t.v_minus).norm() <= tol && (c.v_zero - t.v_zero).norm() <= tol
}

/// Bracketed coefficients of (a†a+½), a†² and a² in the transformed oscillator
/// Hamiltonian, before the overall ħω/ϑ₀.
pub fn transformed_coefficients(c: &SqueezeCoefficients) -> (C64, C64, C64) {
    let (p, z, m) = (c.v_plus, c.v_zero, c.v_minus);
    (z - p * m * 2.0, m * p * p - z * p, m)
}

/// ρ⁻¹H^osρ in closed form:
/// (ħω/ϑ₀){[ϑ₀−2ϑ₊ϑ₋](a†a+½) + [ϑ₋ϑ₊²−ϑ₀ϑ₊]a†² + ϑ₋a²}.
pub fn transformed_hamiltonian_general(params: &PhysicalParams, c: &SqueezeCoefficients) -> Result<OperatorMatrix> {
    if c.v_zero.norm() == 0.0 {
        return Err(Error::ZeroVZero);
    }
    let dim = params.n_trunc;
    let (cn, cr, cl) = transformed_coefficients(c);
    let h = &(&shifted_number(dim).scale(cn) + &Generator::Raise2.matrix(dim).scale(cr))
        + &Generator::Lower2.matrix(dim).scale(cl);
    Ok(h.scale(re(params.hbar * params.omega) / c.v_zero))
}

/// The six single-factor conjugation rules, each as a residual on the k-block.
pub fn conjugation_identities_check(params: &PhysicalParams, c: &SqueezeCoefficients, k: usize, tol: f64) -> Result<Vec<Check>> {
    let dim = params.n_trunc;
    let n = shifted_number(dim);
    let a2 = Generator::Lower2.matrix(dim);
    let ad2 = Generator::Raise2.matrix(dim);
    let (p, z, m) = (c.v_plus, c.v_zero, c.v_minus);
    let lz = z.ln() / 2.0;

    let sandwich = |g: &OperatorMatrix, s: C64, x: &OperatorMatrix| -> Result<OperatorMatrix> {
        Ok(&(&expm(&g.scale(s))? * x) * &expm(&g.scale(-s))?)
    };
    let cases: [(&str, &str, OperatorMatrix, OperatorMatrix); 6] = [
        ("conj_lower_number", "e^{v-a^2/2} N e^{-v-a^2/2} = N + v- a^2", sandwich(&a2, m / 2.0, &n)?, &n + &a2.scale(m)),
        ("conj_number_lower", "e^{ln v0 N/2} a^2 e^{-ln v0 N/2} = a^2/v0", sandwich(&n, lz, &a2)?, a2.scale(z.inv())),
        (
            "conj_raise_lower",
            "e^{v+a+^2/2} a^2 e^{-v+a+^2/2} = a^2 - 2v+ N + v+^2 a+^2",
            sandwich(&ad2, p / 2.0, &a2)?,
            &(&a2 - &n.scale(p * 2.0)) + &ad2.scale(p * p),
        ),
        (
            "conj_lower_raise",
            "e^{v-a^2/2} a+^2 e^{-v-a^2/2} = a+^2 + 2v- N + v-^2 a^2",
            sandwich(&a2, m / 2.0, &ad2)?,
            &(&ad2 + &n.scale(m * 2.0)) + &a2.scale(m * m),
        ),
        ("conj_number_raise", "e^{ln v0 N/2} a+^2 e^{-ln v0 N/2} = v0 a+^2", sandwich(&n, lz, &ad2)?, ad2.scale(z)),
        ("conj_raise_number", "e^{v+a+^2/2} N e^{-v+a+^2/2} = N - v+ a+^2", sandwich(&ad2, p / 2.0, &n)?, &n - &ad2.scale(p)),
    ];
    Ok(cases
        .into_iter()
        .map(|(name, rel, lhs, rhs)| Check::new(name, rel, lhs.block_distance(&rhs, k), tol))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SignResolution {
    pub sigma: i8,
    pub residual: f64,
    pub losing_residual: f64,
    /// Frobenius norm of the k-block of H^r.
    pub reference_norm: f64,
}

/// Measures σ in ρ⁻¹H^osρ = σ·i·H^r on the k-block.
pub fn resolve_similarity_sign(params: &PhysicalParams, dyson: &DysonMap, k: usize) -> Result<SignResolution> {
    let m = dyson.conjugate(&NormalPoly::harmonic_hamiltonian(params)).matrix(dyson.dim()).project(k);
    let hr = inverted_hamiltonian(params).project(k);
    let plus = (&m - &hr.scale(I)).frobenius();
    let minus = (&m + &hr.scale(I)).frobenius();
    let reference_norm = hr.frobenius();
    let (sigma, residual, losing_residual) = if plus <= minus { (1, plus, minus) } else { (-1, minus, plus) };
    if residual >= 1e-8 || losing_residual <= 0.1 * reference_norm {
        return Err(Error::SignUnresolved { plus, minus });
    }
    Ok(SignResolution { sigma, residual, losing_residual, reference_norm })
}

/// Conjugation-built A = ρ⁻¹aρ, Ā = ρ⁻¹a†ρ next to the closed forms a + ia†, (a† + ia)/2.
#[derive(Clone, Debug)]
pub struct LadderPair {
    pub a: OperatorMatrix,
    pub abar: OperatorMatrix,
    pub a_closed: OperatorMatrix,
    pub abar_closed: OperatorMatrix,
}

pub fn transformed_ladder(params: &PhysicalParams, dyson: &DysonMap) -> Result<LadderPair> {
    let (a, ad) = ladder_matrices(params);
    let dim = dyson.dim();
    Ok(LadderPair {
        a: dyson.conjugate(&NormalPoly::annihilation()).matrix(dim),
        abar: dyson.conjugate(&NormalPoly::creation()).matrix(dim),
        a_closed: &a + &ad.scale(I),
        abar_closed: (&ad + &a.scale(I)).scale(re(0.5)),
    })
}

/// X = ρ⁻¹xρ, P = ρ⁻¹pρ.
pub fn pseudo_quadratures(params: &PhysicalParams, dyson: &DysonMap) -> Result<(OperatorMatrix, OperatorMatrix)> {
    let (x, p) = NormalPoly::quadratures(params);
    let dim = dyson.dim();
    Ok((dyson.conjugate(&x).matrix(dim), dyson.conjugate(&p).matrix(dim)))
}

/// (iħω/2)(ĀA + AĀ).
pub fn hamiltonian_from_ladder(params: &PhysicalParams, a: &OperatorMatrix, abar: &OperatorMatrix) -> OperatorMatrix {
    a.anticommutator(abar).scale(I * 0.5 * params.hbar * params.omega)
}

/// (i/2)(P²/m + mω²X²).
pub fn hamiltonian_from_quadratures(params: &PhysicalParams, x: &OperatorMatrix, p: &OperatorMatrix) -> OperatorMatrix {
    let (m, w) = (params.mass, params.omega);
    (&(p * p).scale(re(1.0 / m)) + &(x * x).scale(re(m * w * w))).scale(I * 0.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MetricConvention {
    #[serde(rename = "rho_dag_rho")]
    RhoDagRho,
    #[serde(rename = "rho_rho_dag")]
    RhoRhoDag,
}

impl MetricConvention {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetricConvention::RhoDagRho => "rho_dag_rho",
            MetricConvention::RhoRhoDag => "rho_rho_dag",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PseudoHermiticity {
    /// ‖(iH^os)† − η(iH^os)η⁻¹‖ on the block, η = ρ†ρ.
    pub eta_residual: f64,
    /// ‖(iH^os)† − η̃⁻¹(iH^os)η̃‖ on the block, η̃ = ρρ†.
    pub eta_tilde_residual: f64,
    pub convention: MetricConvention,
    /// max |⟨n^r|η|m^r⟩ − δ_nm|.
    pub orthonormality_residual: f64,
    /// ‖Ā − η⁻¹A†η‖ on the block.
    pub abar_residual: f64,
}

pub fn pseudo_hermiticity_check(params: &PhysicalParams, dyson: &DysonMap, k: usize) -> Result<PseudoHermiticity> {
    let dim = dyson.dim();
    let h = NormalPoly::harmonic_hamiltonian(params).scale(I);
    let h_dag = h.adjoint().matrix(dim);
    let via_eta = conjugate_chain(&dyson.eta_inv_chain(), &h).matrix(dim);
    let via_tilde = conjugate_chain(&dyson.eta_tilde_chain(), &h).matrix(dim);
    let eta_residual = h_dag.block_distance(&via_eta, k);
    let eta_tilde_residual = h_dag.block_distance(&via_tilde, k);
    let convention = if eta_residual <= eta_tilde_residual { MetricConvention::RhoDagRho } else { MetricConvention::RhoRhoDag };

    let mut images = Vec::with_capacity(k);
    for n in 0..k {
        let v = dyson.apply_rho(&dyson.apply_rho_inv(&WideVector::basis(dim, n)));
        v.ensure_accurate(1e-10)?;
        images.push(v.to_state());
    }
    let mut orthonormality_residual: f64 = 0.0;
    for n in 0..k {
        for m in 0..k {
            let delta = if n == m { 1.0 } else { 0.0 };
            orthonormality_residual = orthonormality_residual.max((images[n].inner(&images[m]) - delta).norm());
        }
    }

    let a = dyson.conjugate(&NormalPoly::annihilation());
    let abar = dyson.conjugate(&NormalPoly::creation()).matrix(dim);
    let rebuilt = conjugate_chain(&dyson.eta_chain(), &a.adjoint()).matrix(dim);
    let abar_residual = abar.block_distance(&rebuilt, k);

    Ok(PseudoHermiticity { eta_residual, eta_tilde_residual, convention, orthonormality_residual, abar_residual })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HeisenbergReport {
    /// ‖U†U − I‖ at the largest sample time.
    pub unitarity: f64,
    // Residuals are relative to the norm of the right-hand side, so they do not
    // depend on the units.
    /// ‖(1/iħ)[X, H^r] − iP/m‖ / ‖P/m‖ at t = 0.
    pub initial_commutator: f64,
    /// ‖dX/dt − iP/m‖ / ‖P/m‖ at t = 0 by central differences.
    pub initial_derivative: f64,
    /// worst ‖dX/dt − iP(t)/m‖ / ‖P(t)/m‖ over the sample times.
    pub position_equation: f64,
    /// worst ‖dP/dt + imω²X(t)‖ / ‖mω²X(t)‖.
    pub momentum_equation: f64,
    /// worst ‖d²X/dt² − ω²X(t)‖ / ‖ω²X(t)‖.
    pub second_order: f64,
}

/// Heisenberg-picture X(t) = U†XU, U = exp(−iH^r t/ħ), checked by central
/// differences of step dt around each sample time.
pub fn heisenberg_dynamics_check(params: &PhysicalParams, dyson: &DysonMap, k: usize, times: &[f64], dt: f64) -> Result<HeisenbergReport> {
    let (x, p) = pseudo_quadratures(params, dyson)?;
    let hr = inverted_hamiltonian(params);
    let gen = hr.scale(-I / params.hbar);
    let (m, w) = (params.mass, params.omega);
    let u_dt = expm(&gen.scale(re(dt)))?;
    let u_back = u_dt.adjoint();
    let heis = |u: &OperatorMatrix, o: &OperatorMatrix| &(&u.adjoint() * o) * u;
    let nb = |o: &OperatorMatrix| o.project(k).frobenius();
    let dist = |a: &OperatorMatrix, b: &OperatorMatrix| (&a.project(k) - &b.project(k)).frobenius();

    let ip_over_m = p.scale(I / m);
    let initial_commutator = dist(&x.commutator(&hr).scale(-I / params.hbar), &ip_over_m) / nb(&ip_over_m);
    let fd0 = (&heis(&u_dt, &x) - &heis(&u_back, &x)).scale(re(0.5 / dt));
    let initial_derivative = dist(&fd0, &ip_over_m) / nb(&ip_over_m);

    let mut report = HeisenbergReport {
        unitarity: 0.0,
        initial_commutator,
        initial_derivative,
        position_equation: 0.0,
        momentum_equation: 0.0,
        second_order: 0.0,
    };
    for &t in times {
        let u = expm(&gen.scale(re(t)))?;
        report.unitarity = report.unitarity.max((&(&u.adjoint() * &u) - &OperatorMatrix::identity(u.dim())).max_abs());
        let (up, um) = (&u * &u_dt, &u * &u_back);
        let (x0, xp, xm) = (heis(&u, &x), heis(&up, &x), heis(&um, &x));
        let (p0, pp, pm) = (heis(&u, &p), heis(&up, &p), heis(&um, &p));
        let dx = (&xp - &xm).scale(re(0.5 / dt));
        let dp = (&pp - &pm).scale(re(0.5 / dt));
        let d2x = (&(&xp - &x0.scale(re(2.0))) + &xm).scale(re(1.0 / (dt * dt)));
        let (vp, vx, ax) = (p0.scale(I / m), x0.scale(-I * m * w * w), x0.scale(re(w * w)));
        report.position_equation = report.position_equation.max(dist(&dx, &vp) / nb(&vp));
        report.momentum_equation = report.momentum_equation.max(dist(&dp, &vx) / nb(&vx));
        report.second_order = report.second_order.max(dist(&d2x, &ax) / nb(&ax));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::fock::harmonic_hamiltonian;

    fn unit(n: usize) -> PhysicalParams {
        PhysicalParams::unit(n).unwrap()
    }

    #[test]
    fn zero_squeezing_disentangle() {
        let d = disentangle(1.0, C64::default(), C64::default()).unwrap();
        let e2 = 1f64.exp().powi(2);
        assert_eq!(d.v_plus, C64::default());
        assert_eq!(d.v_minus, C64::default());
        assert!((d.theta - re(1.0)).norm() < 1e-15);
        assert!((d.v_zero - re(e2)).norm() < 1e-12);
        assert!((d.chi + re(e2)).norm() < 1e-12);
        assert!(d.consistency_residual() < 1e-12);
    }

    #[test]
    fn theta_zero_limit() {
        let d = disentangle(0.5, re(0.25), re(0.25)).unwrap();
        assert!(d.theta.norm() < 1e-12);
        assert!((d.v_plus - re(1.0)).norm() < 1e-12);
        assert!((d.v_zero - re(4.0)).norm() < 1e-12);
        // the formula just off the degenerate point agrees with the limit
        let near = disentangle(0.5, re(0.25), re(0.25 - 0.25e-12)).unwrap();
        assert!((near.v_plus - d.v_plus).norm() < 1e-6);
        assert!((near.v_zero - d.v_zero).norm() < 1e-6);
    }

    #[test]
    fn degenerate_denominator() {
        // θ = 0 (μ₊μ₋ = ¼) together with ε = 1 makes cosh θ − ε·sinhθ/θ vanish
        assert!(matches!(disentangle(1.0, re(0.25), re(1.0)), Err(Error::DegenerateDisentangle { .. })));
        assert!(disentangle(0.9, re(0.25), re(1.0)).is_ok());
    }

    #[test]
    fn factored_map_matches_single_exponential() {
        let params = unit(40);
        let d = disentangle(0.3, re(0.1), re(0.05)).unwrap();
        let map = build_general_dyson(&params, &d).unwrap();
        let single = single_exponential(&params, &d).unwrap();
        assert!(map.rho.block_distance(&single, 10) < 1e-8);
        assert!((&map.rho * &map.rho_inv).block_distance(&OperatorMatrix::identity(40), 10) < 1e-10);
    }

    #[test]
    fn zero_squeezing_map_is_diagonal() {
        let params = unit(12);
        let d = disentangle(0.4, C64::default(), C64::default()).unwrap();
        let map = build_general_dyson(&params, &d).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let want = if i == j { (-0.4 * (i as f64 + 0.5)).exp() } else { 0.0 };
                assert!((map.rho.get(i, j) - re(want)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn branch_cut_is_rejected() {
        let d = DisentangleParams { v_zero: re(-2.0), ..disentangle(1.0, re(0.0), re(0.0)).unwrap() };
        assert!(matches!(build_general_dyson(&unit(8), &d), Err(Error::BranchCut(_))));
    }

    #[test]
    fn inverting_map_basics() {
        let params = unit(32);
        let map = build_inverting_dyson(&params).unwrap();
        for n in [0, 5, 31] {
            let x = WideVector::basis(32, n);
            let back = map.apply_rho(&map.apply_rho_inv(&x));
            back.ensure_accurate(1e-12).unwrap();
            assert!(back.to_state().block_distance(&x.to_state(), 32) < 1e-12);
        }
        assert_eq!(map.determinant().unwrap(), re(1.0));
        assert!(map.eta.hermiticity_residual() <= 1e-12 * map.eta.max_abs());
        let ev = map.metric_block_eigenvalues(8).unwrap();
        assert!(ev[0] > 0.0);
    }

    #[test]
    fn dense_determinant_cross_check_small() {
        let map = build_inverting_dyson(&unit(16)).unwrap();
        let lu = map.rho.matrix().clone().lu().determinant();
        assert!((lu - re(1.0)).norm() < 1e-9);
    }

    #[test]
    fn factor_conjugation_matches_dense_on_small_space() {
        let dim = 48;
        let (a, _) = ladder_matrices(&unit(dim));
        for f in [Factor::new(Generator::Raise2, I * 0.5), Factor::new(Generator::Lower2, -I * 0.25), Factor::new(Generator::Number, C64::new(0.2, 0.1))] {
            let want = &(&f.inverse().dense(dim).unwrap() * &a) * &f.dense(dim).unwrap();
            let got = f.conjugate(&NormalPoly::annihilation()).matrix(dim);
            assert!(got.block_distance(&want, 16) < 1e-12, "{f:?}");
        }
    }

    #[test]
    fn constraint_point() {
        let c = SqueezeCoefficients::inverted_point();
        assert!(constraint_check(&c, 1e-12));
        let off = SqueezeCoefficients { v_plus: C64::default(), v_zero: re(1f64.exp().powi(2)), v_minus: C64::default() };
        assert!(!constraint_check(&off, 1e-12));
        let (n, r, l) = transformed_coefficients(&c);
        assert!(n.norm() < 1e-15);
        assert!((r - I * 0.5).norm() < 1e-15);
        assert!((l - I * 0.5).norm() < 1e-15);

        let params = PhysicalParams::new(2.0, 0.5, 3.0, 20).unwrap();
        let h = transformed_hamiltonian_general(&params, &c).unwrap();
        let want = inverted_hamiltonian(&params).scale(-I);
        assert!((&h - &want).max_abs() < 1e-12);
        assert!(h.block_distance(&harmonic_hamiltonian(&params), 4) > 0.1);
        let trivial = transformed_hamiltonian_general(&params, &off).unwrap();
        assert!((&trivial - &harmonic_hamiltonian(&params)).max_abs() < 1e-12);
    }

    #[test]
    fn conjugation_rules_hold() {
        let params = unit(64);
        let c = SqueezeCoefficients { v_plus: I * 0.5, v_zero: re(4.0), v_minus: C64::new(0.1, -0.2) };
        for chk in conjugation_identities_check(&params, &c, 16, 1e-10).unwrap() {
            assert!(chk.pass, "{chk:?}");
        }
        // ϑ₀ = 4 scales a² by exactly 1/4
        let a2 = Generator::Lower2.matrix(12);
        let n = shifted_number(12);
        let lz = re(4f64.ln() / 2.0);
        let scaled = &(&expm(&n.scale(lz)).unwrap() * &a2) * &expm(&n.scale(-lz)).unwrap();
        assert!((&scaled - &a2.scale(re(0.25))).max_abs() < 1e-13);
    }

    #[test]
    fn similarity_sign_and_ladder() {
        let params = unit(64);
        let map = build_inverting_dyson(&params).unwrap();
        let s = resolve_similarity_sign(&params, &map, 16).unwrap();
        assert_eq!(s.sigma, -1);
        let pair = transformed_ladder(&params, &map).unwrap();
        assert!(pair.a.block_distance(&pair.a_closed, 16) < 1e-10);
        assert!(pair.abar.block_distance(&pair.abar_closed, 16) < 1e-10);
        assert!(pair.a.commutator(&pair.abar).block_distance(&OperatorMatrix::identity(64), 16) < 1e-10);
        assert!((&pair.abar.project(16) - &pair.a.adjoint().project(16)).max_abs() > 0.1);

        let w3 = PhysicalParams::new(1.0, 1.0, 3.0, 64).unwrap();
        let map3 = build_inverting_dyson(&w3).unwrap();
        assert_eq!(resolve_similarity_sign(&w3, &map3, 16).unwrap().sigma, s.sigma);
    }

    #[test]
    fn pseudo_hermitian_pieces() {
        let params = PhysicalParams::new(2.0, 0.5, 3.0, 64).unwrap();
        let map = build_inverting_dyson(&params).unwrap();
        let k = 16;
        let pair = transformed_ladder(&params, &map).unwrap();
        let (x, p) = pseudo_quadratures(&params, &map).unwrap();
        let xs = (&pair.a + &pair.abar).scale(re(params.x_scale()));
        let ps = (&pair.abar - &pair.a).scale(I * params.p_scale());
        assert!(x.block_distance(&xs, k) < 1e-10);
        assert!(p.block_distance(&ps, k) < 1e-10);
        let ihbar = OperatorMatrix::identity(64).scale(I * params.hbar);
        assert!(x.commutator(&p).block_distance(&ihbar, k) < 1e-10);
        let (m, w, h) = (params.mass, params.omega, params.hbar);
        let a_back = &x.scale(re((m * w / (2.0 * h)).sqrt())) + &p.scale(I / (2.0 * m * h * w).sqrt());
        let abar_back = &x.scale(re((m * w / (2.0 * h)).sqrt())) - &p.scale(I / (2.0 * m * h * w).sqrt());
        assert!(a_back.block_distance(&pair.a, k) < 1e-10);
        assert!(abar_back.block_distance(&pair.abar, k) < 1e-10);

        let hr = inverted_hamiltonian(&params);
        let from_pair = hamiltonian_from_ladder(&params, &pair.a, &pair.abar);
        assert!(from_pair.block_distance(&hr, k) < 1e-10);
        assert!(from_pair.project(k).hermiticity_residual() < 1e-10);
        assert!(hamiltonian_from_quadratures(&params, &x, &p).block_distance(&hr, k) < 1e-10);
        let (na, nab) = crate::fock::naive_ladder(&params);
        assert!(hamiltonian_from_ladder(&params, &na, &nab).block_distance(&hr, k) < 1e-10);
    }

    #[test]
    fn metric_conventions() {
        let params = unit(64);
        let map = build_inverting_dyson(&params).unwrap();
        let ph = pseudo_hermiticity_check(&params, &map, 12).unwrap();
        assert_eq!(ph.convention, MetricConvention::RhoRhoDag);
        assert!(ph.eta_tilde_residual < 1e-8);
        assert!(ph.eta_residual > 1e-3);
        assert!(ph.orthonormality_residual < 1e-8);
        assert!(ph.abar_residual < 1e-8);
    }

    #[test]
    fn heisenberg_equations() {
        let params = unit(96);
        let map = build_inverting_dyson(&params).unwrap();
        let r = heisenberg_dynamics_check(&params, &map, 16, &[0.25, 0.5], 1e-3).unwrap();
        assert!(r.unitarity < 1e-10, "{r:?}");
        assert!(r.initial_commutator < 1e-10, "{r:?}");
        assert!(r.initial_derivative < 1e-5, "{r:?}");
        assert!(r.second_order < 1e-4, "{r:?}");
        assert!(r.position_equation < 1e-5, "{r:?}");
        assert!(r.momentum_equation < 1e-5, "{r:?}");
    }

    #[test]
    fn sampler_is_seeded() {
        let a = sample_parameter_box(7, 5);
        let b = sample_parameter_box(7, 5);
        assert_eq!(a, b);
        assert_ne!(a, sample_parameter_box(8, 5));
        for d in &a {
            assert!(d.epsilon.abs() <= 0.5 && d.mu_plus.norm() <= 0.5 && d.mu_minus.norm() <= 0.5);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn theta_squared_invariant(eps in -0.5f64..0.5, a in -0.5f64..0.5, b in -0.5f64..0.5, c in -0.5f64..0.5, e in -0.5f64..0.5) {
            let (mp, mm) = (C64::new(a, b), C64::new(c, e));
            if let Ok(d) = disentangle(eps, mp, mm) {
                prop_assert!((d.theta * d.theta - (re(eps * eps) - mp * mm * 4.0)).norm() < 1e-12);
                prop_assert!(d.theta.re >= 0.0);
            }
        }

        #[test]
        fn general_hamiltonian_matches_conjugation(seed in 0u64..1000) {
            let params = unit(40);
            let d = sample_parameter_box(seed, 1)[0];
            let map = build_general_dyson(&params, &d).unwrap();
            let direct = map.conjugate(&NormalPoly::harmonic_hamiltonian(&params)).matrix(40);
            let closed = transformed_hamiltonian_general(&params, &d.coefficients()).unwrap();
            prop_assert!(direct.block_distance(&closed, 10) < 1e-8);
            let single = single_exponential(&params, &d).unwrap();
            prop_assert!(map.rho.block_distance(&single, 10) < 1e-8);
        }
    }
}
