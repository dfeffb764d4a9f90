//! Run configuration, the verification suite, and the CSV tables.

use std::f64::consts::PI;
use std::io::Write;
use std::num::NonZeroU32;

use gauss_quad::simpson::Simpson;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherent::{
    classical_trajectory, coherent_inverted, coherent_oscillator, displacement, eta_norm_sqr, evolve_closed_form, evolve_direct,
    inverted_displacement, moments, resolution_of_identity, rotate_oscillator, Frame, Trajectory,
};
use crate::dyson::{
    build_general_dyson, build_inverting_dyson, conjugation_identities_check, constraint_check, heisenberg_dynamics_check,
    hamiltonian_from_ladder, hamiltonian_from_quadratures, pseudo_hermiticity_check, pseudo_quadratures, resolve_similarity_sign,
    sample_parameter_box, single_exponential, transformed_coefficients, transformed_hamiltonian_general, transformed_ladder,
    DysonMap, MetricConvention, SqueezeCoefficients,
};
use crate::error::{Error, Result};
use crate::fock::{
    annihilation, harmonic_hamiltonian, inverted_hamiltonian, ladder_matrices, naive_ladder, quadrature_matrices, re, OperatorMatrix,
    PhysicalParams, StateVector, C64, I,
};
use crate::linalg::expm;
use crate::poly::NormalPoly;
use crate::wide::WideVector;

/// One verified relation: its residual against a tolerance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// Human-readable statement of the relation being checked.
    pub paper_ref: String,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, relation: impl Into<String>, residual: f64, tol: f64) -> Self {
        Check { name: name.into(), paper_ref: relation.into(), residual, tol, pass: residual.is_finite() && residual < tol }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_trunc: usize,
    pub sub_block: usize,
    /// Working dimension for everything that moves states through ρ and back.
    pub metric_dim: usize,
    pub tol_exact: f64,
    pub tol_evolution: f64,
    pub tol_quadrature: f64,
    pub hbar: f64,
    pub mass: f64,
    pub omega: f64,
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub t_max: f64,
    pub dt: f64,
    pub seed: u64,
    /// Allow ω·t_max > 1.
    #[serde(rename = "unsafe")]
    pub allow_unsafe: bool,
}

pub const DEFAULT_SEED: u64 = 20_240_607;

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_trunc: 128,
            sub_block: 32,
            metric_dim: 64,
            tol_exact: 1e-10,
            tol_evolution: 1e-6,
            tol_quadrature: 1e-3,
            hbar: 1.0,
            mass: 1.0,
            omega: 1.0,
            alpha_re: 0.5,
            alpha_im: 0.0,
            t_max: 1.0,
            dt: 0.01,
            seed: DEFAULT_SEED,
            allow_unsafe: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.params()?;
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.sub_block == 0 || self.sub_block + 2 >= self.n_trunc {
            return bad(format!("sub_block {} must satisfy 0 < sub_block < n_trunc - 2 = {}", self.sub_block, self.n_trunc as i64 - 2));
        }
        if self.metric_dim < 8 || self.metric_dim > self.n_trunc {
            return bad(format!("metric_dim {} must lie in [8, n_trunc]", self.metric_dim));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive (got {})", self.dt));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return bad(format!("t_max must be non-negative (got {})", self.t_max));
        }
        if self.t_max * self.omega > 1.0 + 1e-12 && !self.allow_unsafe {
            return bad(format!("omega*t_max = {} exceeds 1 (pass --unsafe to allow)", self.t_max * self.omega));
        }
        for (name, t) in [("tol_exact", self.tol_exact), ("tol_evolution", self.tol_evolution), ("tol_quadrature", self.tol_quadrature)] {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.alpha_re.is_finite() && self.alpha_im.is_finite()) {
            return bad("alpha must be finite".into());
        }
        Ok(())
    }

    pub fn params(&self) -> Result<PhysicalParams> {
        PhysicalParams::new(self.hbar, self.mass, self.omega, self.n_trunc)
    }

    pub fn metric_params(&self) -> Result<PhysicalParams> {
        PhysicalParams::new(self.hbar, self.mass, self.omega, self.metric_dim)
    }

    pub fn alpha(&self) -> C64 {
        C64::new(self.alpha_re, self.alpha_im)
    }

    /// Sub-block used with the metric-dimension map.
    pub fn metric_block(&self) -> usize {
        self.sub_block.min(self.metric_dim / 4).max(1)
    }

    /// 0, dt, 2dt, … ≤ t_max.
    pub fn time_grid(&self) -> Vec<f64> {
        let n = (self.t_max / self.dt + 1e-9).floor() as usize;
        (0..=n).map(|i| i as f64 * self.dt).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub config: RunConfig,
    pub sigma: i8,
    pub metric: MetricConvention,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub notes: Vec<String>,
}

fn block_dist(a: &OperatorMatrix, b: &OperatorMatrix, k: usize) -> f64 {
    a.block_distance(b, k)
}

/// Residual relative to the size of the reference block, floored at 1.
fn rel(a: &OperatorMatrix, b: &OperatorMatrix, k: usize) -> f64 {
    block_dist(a, b, k) / b.project(k).max_abs().max(1.0)
}

fn fock_checks(cfg: &RunConfig) -> Result<Vec<Check>> {
    let params = cfg.params()?;
    let (n, k, tol) = (params.n_trunc, cfg.sub_block, cfg.tol_exact);
    let (a, ad) = ladder_matrices(&params);
    let (x, p) = quadrature_matrices(&params);
    let id = OperatorMatrix::identity(n);
    let (m, w, h) = (params.mass, params.omega, params.hbar);
    let kinetic = (&p * &p).scale(re(0.5 / m));
    let potential = (&x * &x).scale(re(0.5 * m * w * w));
    let hos = harmonic_hamiltonian(&params);
    let hr = inverted_hamiltonian(&params);
    let (na, nab) = naive_ladder(&params);

    let spectrum = (0..k).map(|i| (hos.get(i, i).re - h * w * (i as f64 + 0.5)).abs()).fold(0.0, f64::max) / (h * w);
    let gen = hr.scale(-I * 0.1 / h);
    let unit = &expm(&gen)? * &expm(&gen.scale(re(-1.0)))?;

    Ok(vec![
        Check::new("ladder_commutator", "[a, a+] = 1", block_dist(&a.commutator(&ad), &id, k), tol),
        Check::new("canonical_commutator", "[x, p] = i hbar", rel(&x.commutator(&p), &id.scale(I * h), k), tol),
        Check::new("harmonic_spectrum", "H_os = hbar w (n + 1/2)", spectrum, tol),
        Check::new("harmonic_quadrature_form", "H_os = p^2/2m + m w^2 x^2/2", rel(&(&kinetic + &potential), &hos, k), tol),
        Check::new("inverted_quadrature_form", "H_r = p^2/2m - m w^2 x^2/2", rel(&(&kinetic - &potential), &hr, k), tol),
        Check::new("inverted_hermitian", "H_r = H_r^dagger", hr.hermiticity_residual(), tol),
        Check::new("naive_ladder_commutator", "[A, Abar] = 1 for w -> i w", block_dist(&na.commutator(&nab), &id, k), tol),
        Check::new(
            "naive_ladder_hamiltonian",
            "(i hbar w/2)(Abar A + A Abar) = H_r for w -> i w",
            rel(&hamiltonian_from_ladder(&params, &na, &nab), &hr, k),
            tol,
        ),
        Check::new("naive_ladder_not_adjoint", "Abar != A^dagger (witness, inverted residual)", 1.0 / (&nab - &na.adjoint()).project(k).max_abs(), 1.0),
        Check::new("expm_inverse", "exp(M) exp(-M) = 1", (&unit - &id).max_abs(), tol * n as f64),
    ])
}

fn disentangle_checks(cfg: &RunConfig) -> Result<Vec<Check>> {
    let params = cfg.metric_params()?;
    let k = cfg.metric_block();
    let samples = sample_parameter_box(cfg.seed, 20);
    let mut factor = 0.0f64;
    let mut consistency = 0.0f64;
    let mut general = 0.0f64;
    for d in &samples {
        let map = build_general_dyson(&params, d)?;
        let single = single_exponential(&params, d)?;
        factor = factor.max(block_dist(&map.rho, &single, k));
        consistency = consistency.max(d.consistency_residual());
        let direct = map.conjugate(&NormalPoly::harmonic_hamiltonian(&params)).matrix(params.n_trunc);
        let closed = transformed_hamiltonian_general(&params, &d.coefficients())?;
        general = general.max(rel(&direct, &closed, k));
    }

    let target = SqueezeCoefficients::inverted_point();
    let (cn, cr, cl) = transformed_coefficients(&target);
    let coeff = cn.norm().max((cr - I * 0.5).norm()).max((cl - I * 0.5).norm());
    let h1 = transformed_hamiltonian_general(&params, &target)?;
    let want = inverted_hamiltonian(&params).scale(-I);
    let off = SqueezeCoefficients { v_plus: C64::default(), v_zero: re(1f64.exp().powi(2)), v_minus: C64::default() };

    let mut checks = vec![
        Check::new("disentangle_factorization", "three-factor product = single exponential (20 seeded samples)", factor, 1e-8),
        Check::new("disentangle_v0_consistency", "(cosh t - (e/t) sinh t)^-2 = mu+ mu- - chi (20 seeded samples)", consistency, cfg.tol_exact),
        Check::new("transformed_hamiltonian_general", "closed-form rho^-1 H_os rho = direct conjugation (20 seeded samples)", general, 1e-8),
        Check::new("transformed_hamiltonian_constraint_coefficients", "coefficients at (-i, i/2, 1) are (0, i/2, i/2)", coeff, 1e-12),
        Check::new("transformed_hamiltonian_constraint", "closed form at (-i, i/2, 1) = (i hbar w/2)(a+^2 + a^2)", rel(&h1, &want, params.n_trunc), 1e-12),
        Check::new(
            "constraint_check",
            "constraint accepts (-i, i/2, 1) and rejects (0, 0, e^2)",
            if constraint_check(&target, 1e-12) && !constraint_check(&off, 1e-12) { 0.0 } else { 1.0 },
            0.5,
        ),
    ];
    let c = SqueezeCoefficients { v_plus: I * 0.5, v_zero: re(4.0), v_minus: C64::new(0.1, -0.2) };
    checks.extend(conjugation_identities_check(&params, &c, k, cfg.tol_exact)?);
    Ok(checks)
}

fn dyson_checks(cfg: &RunConfig, map: &DysonMap) -> Result<(i8, Vec<Check>)> {
    let params = map.params;
    let (k, tol) = (cfg.sub_block, cfg.tol_exact);
    let n = params.n_trunc;
    let id = OperatorMatrix::identity(n);
    let hr = inverted_hamiltonian(&params);

    let sign = resolve_similarity_sign(&params, map, k)?;
    let sigma = sign.sigma;
    let compat = map.conjugate(&NormalPoly::harmonic_hamiltonian(&params).scale(I * sigma as f64)).matrix(n).project(k);
    let pair = transformed_ladder(&params, map)?;
    let (x, p) = pseudo_quadratures(&params, map)?;
    let xs = (&pair.a + &pair.abar).scale(re(params.x_scale()));
    let ps = (&pair.abar - &pair.a).scale(I * params.p_scale());
    let (m, w, h) = (params.mass, params.omega, params.hbar);
    let a_back = &x.scale(re((m * w / (2.0 * h)).sqrt())) + &p.scale(I / (2.0 * m * h * w).sqrt());
    let abar_back = &x.scale(re((m * w / (2.0 * h)).sqrt())) - &p.scale(I / (2.0 * m * h * w).sqrt());
    let from_pair = hamiltonian_from_ladder(&params, &pair.a, &pair.abar);
    let from_closed = hamiltonian_from_ladder(&params, &pair.a_closed, &pair.abar_closed);

    Ok((
        sigma,
        vec![
            Check::new("similarity_sign", "rho^-1 H_os rho = sigma i H_r, winning sign", sign.residual, 1e-8),
            Check::new(
                "similarity_sign_separation",
                "losing sign residual exceeds 0.1 |H_r| (inverted ratio)",
                0.1 * sign.reference_norm / sign.losing_residual,
                1.0,
            ),
            Check::new("similarity_hermitian", "rho^-1 (sigma i H_os) rho is Hermitian", compat.hermiticity_residual() / compat.max_abs().max(1.0), tol),
            Check::new("ladder_a_closed_form", "rho^-1 a rho = a + i a+", block_dist(&pair.a, &pair.a_closed, k), tol),
            Check::new("ladder_abar_closed_form", "rho^-1 a+ rho = (a+ + i a)/2", block_dist(&pair.abar, &pair.abar_closed, k), tol),
            Check::new("transformed_ladder_commutator", "[A, Abar] = 1", block_dist(&pair.a.commutator(&pair.abar), &id, k), tol),
            Check::new("ladder_not_adjoint", "Abar != A^dagger (witness, inverted residual)", 1.0 / (&pair.abar - &pair.a.adjoint()).project(k).max_abs(), 1.0),
            Check::new("quadrature_x", "X = sqrt(hbar/2mw)(A + Abar)", rel(&x, &xs, k), tol),
            Check::new("quadrature_p", "P = i sqrt(hbar m w/2)(Abar - A)", rel(&p, &ps, k), tol),
            Check::new("quadrature_commutator", "[X, P] = i hbar", rel(&x.commutator(&p), &id.scale(I * h), k), tol),
            Check::new("ladder_from_quadratures", "A = sqrt(mw/2hbar) X + i P/sqrt(2 m hbar w)", block_dist(&a_back, &pair.a, k), tol),
            Check::new("abar_from_quadratures", "Abar = sqrt(mw/2hbar) X - i P/sqrt(2 m hbar w)", block_dist(&abar_back, &pair.abar, k), tol),
            Check::new("hamiltonian_from_ladder", "(i hbar w/2)(Abar A + A Abar) = H_r", rel(&from_pair, &hr, k), tol),
            Check::new("hamiltonian_from_closed_ladder", "closed-form pair gives H_r", rel(&from_closed, &hr, k), tol),
            Check::new("hamiltonian_from_ladder_hermitian", "(i hbar w/2)(Abar A + A Abar) is Hermitian", from_pair.project(k).hermiticity_residual() / (h * w), tol),
            Check::new("hamiltonian_from_quadratures", "(i/2)(P^2/m + m w^2 X^2) = H_r", rel(&hamiltonian_from_quadratures(&params, &x, &p), &hr, k), tol),
        ],
    ))
}

fn metric_checks(cfg: &RunConfig, map: &DysonMap) -> Result<(MetricConvention, Vec<Check>)> {
    let params = map.params;
    let k = cfg.metric_block();
    let tol = 1e-8;
    let ph = pseudo_hermiticity_check(&params, map, k.min(12))?;
    let scale = params.hbar * params.omega;
    let (winner, loser) = match ph.convention {
        MetricConvention::RhoDagRho => (ph.eta_residual, ph.eta_tilde_residual),
        MetricConvention::RhoRhoDag => (ph.eta_tilde_residual, ph.eta_residual),
    };
    let ev = map.metric_block_eigenvalues(k)?;
    let min_ev = ev.first().copied().unwrap_or(0.0);
    let det = map.determinant()?;
    Ok((
        ph.convention,
        vec![
            Check::new("pseudo_hermiticity", "(i H_os)^dagger = metric-conjugated i H_os, holding convention", winner / scale, tol),
            Check::new("pseudo_hermiticity_unique", "the other convention fails (inverted residual)", tol * scale / loser, 1.0),
            Check::new("eta_orthonormality", "<n_r|eta|m_r> = delta_nm", ph.orthonormality_residual, tol),
            Check::new("abar_pseudo_adjoint", "Abar = eta^-1 A^dagger eta", ph.abar_residual, tol),
            Check::new("eta_positive", "eta block eigenvalues > 0 (negative part of the smallest)", (-min_ev).max(0.0), f64::MIN_POSITIVE),
            Check::new("eta_hermitian", "eta = eta^dagger", map.eta.hermiticity_residual() / map.eta.max_abs(), 1e-12),
            Check::new("rho_determinant", "det rho = 1", (det - re(1.0)).norm(), cfg.tol_exact),
        ],
    ))
}

fn heisenberg_checks(cfg: &RunConfig, map: &DysonMap) -> Result<Vec<Check>> {
    let params = map.params;
    let w = params.omega;
    let times = [0.25 / w, 0.5 / w];
    let r = heisenberg_dynamics_check(&params, map, cfg.sub_block, &times, 1e-3 / w)?;
    Ok(vec![
        Check::new("heisenberg_unitarity", "U^dagger U = 1", r.unitarity, cfg.tol_exact),
        Check::new("heisenberg_initial_commutator", "(1/i hbar)[X, H_r] = i P/m", r.initial_commutator, cfg.tol_exact),
        Check::new("heisenberg_initial_derivative", "dX/dt(0) = i P/m", r.initial_derivative, 1e-5),
        Check::new("heisenberg_position", "dX/dt = i P/m", r.position_equation, 1e-5),
        Check::new("heisenberg_momentum", "dP/dt = -i m w^2 X", r.momentum_equation, 1e-5),
        Check::new("heisenberg_second_order", "d^2X/dt^2 = w^2 X (dt = 1e-3/w)", r.second_order, 1e-4),
    ])
}

/// Closed form against the matrix exponential at ωt ∈ {¼, ½, 1}·ω·t_max.
pub fn evolution_residuals(params: &PhysicalParams, map: &DysonMap, alpha: C64, times: &[f64], k: usize) -> Result<Vec<f64>> {
    let s = coherent_inverted(params, map, alpha)?;
    times
        .par_iter()
        .map(|&t| {
            let closed = evolve_closed_form(map, &s, t)?;
            let direct = evolve_direct(params, &s, t)?;
            Ok(direct.block_distance(&closed.coeffs, k) / closed.coeffs.block_norm(k))
        })
        .collect()
}

fn coherent_checks(cfg: &RunConfig, big: &DysonMap, small: &DysonMap) -> Result<Vec<Check>> {
    let params = big.params;
    let mparams = small.params;
    let (k, tol) = (cfg.sub_block, cfg.tol_exact);
    let km = cfg.metric_block();
    let alpha = cfg.alpha();
    let mut checks = Vec::new();

    let osc = coherent_oscillator(&params, alpha)?;
    let a = annihilation(params.n_trunc);
    checks.push(Check::new("coherent_eigen", "a|alpha> = alpha|alpha>", a.apply(&osc.coeffs).block_distance(&osc.coeffs.scale(alpha), k), tol));
    let disp = displacement(&params, alpha)?.apply(&StateVector::basis(params.n_trunc, 0));
    checks.push(Check::new("coherent_displacement", "D(alpha)|0> = |alpha>", disp.block_distance(&osc.coeffs, k), tol));
    let rot = rotate_oscillator(&params, &osc, cfg.t_max)?;
    let direct = evolve_direct(&params, &osc, cfg.t_max)?;
    checks.push(Check::new(
        "coherent_rotation",
        "exp(-i H_os t/hbar)|alpha> = exp(-i w t/2)|alpha exp(-i w t)>",
        direct.block_distance(&rot.coeffs, k),
        tol,
    ));

    // inverted frame on the metric dimension
    let pair = transformed_ladder(&mparams, small)?;
    let mut eigen = 0.0f64;
    for z in [C64::default(), alpha, alpha * I, C64::new(-0.4, 0.3), C64::new(0.8, -0.6)] {
        let s = coherent_inverted(&mparams, small, z)?;
        eigen = eigen.max(pair.a.apply(&s.coeffs).block_distance(&s.coeffs.scale(z), km));
    }
    checks.push(Check::new("inverted_coherent_eigen", "A|alpha>_r = alpha|alpha>_r (5-point grid)", eigen, 1e-8));
    let s = coherent_inverted(&mparams, small, alpha)?;
    checks.push(Check::new("inverted_coherent_eta_norm", "<alpha_r|eta|alpha_r> = 1", (eta_norm_sqr(small, &s.wide)? - 1.0).abs(), 1e-8));
    let vac = coherent_inverted(&mparams, small, C64::default())?;
    let displaced = inverted_displacement(small, alpha)?.apply(&vac.coeffs);
    checks.push(Check::new("inverted_displacement", "D_r(alpha)|0>_r = rho^-1 D(alpha)|0>", displaced.block_distance(&s.coeffs, km), 1e-8));
    let number = &pair.abar * &pair.a;
    let mut fock = 0.0f64;
    for nlev in 0..km {
        let v = small.apply_rho_inv(&WideVector::basis(mparams.n_trunc, nlev)).to_state();
        fock = fock.max(number.apply(&v).block_distance(&v.scale(re(nlev as f64)), km));
    }
    checks.push(Check::new("inverted_number_states", "Abar A |n>_r = n |n>_r", fock, 1e-8));

    let w = params.omega;
    let times: Vec<f64> = [0.25, 0.5, 1.0].iter().map(|f| f * cfg.t_max.min(1.0 / w)).collect();
    for (t, r) in times.iter().zip(evolution_residuals(&params, big, alpha, &times, k)?) {
        checks.push(Check::new(
            format!("evolution_closed_vs_direct_wt{:.2}", w * t),
            "exp(-i H_r t/hbar)|alpha>_r = c(t)|alpha e^{wt}>_r, relative on the sub-block",
            r,
            cfg.tol_evolution,
        ));
    }
    let t_half = 0.5 / w;
    let ev = evolve_closed_form(small, &s, t_half)?;
    let want = (0.5f64).exp() * (alpha.norm_sqr() * (1f64.exp() - 1.0)).exp();
    checks.push(Check::new(
        "evolved_eta_norm",
        "eta-norm^2 at wt = 1/2 equals e^{wt} e^{|alpha|^2 (e^{2wt} - 1)}",
        (eta_norm_sqr(small, &ev.wide)? / want - 1.0).abs(),
        cfg.tol_evolution,
    ));

    let traj = classical_trajectory(&mparams, small, alpha, &cfg.time_grid(), tol)?;
    let (mut xerr, mut perr, mut unc, mut imag, mut growth) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let x0 = traj.points.first().map(|p| p.x_closed).unwrap_or(0.0);
    for p in &traj.points {
        xerr = xerr.max((p.x_matrix - p.x_closed).abs() / p.x_closed.abs().max(1.0));
        perr = perr.max((p.p_matrix - p.p_closed).abs() / p.p_closed.abs().max(1.0));
        unc = unc.max((p.product - params.hbar / 2.0).abs());
        imag = imag.max(p.imag);
        if x0 != 0.0 {
            growth = growth.max((p.x_matrix / x0 - (w * p.t).exp()).abs());
        }
    }
    checks.push(Check::new("trajectory_truncation", "trajectory grid within the truncation guard (missing points)", (cfg.time_grid().len() - traj.points.len()) as f64, 0.5));
    checks.push(Check::new("mean_x", "<X>_eta = sqrt(hbar/2mw)(alpha + alpha*) e^{wt}", xerr, cfg.tol_evolution));
    checks.push(Check::new("mean_p", "<P>_eta = -i sqrt(m w hbar/2)(alpha - alpha*) e^{wt}", perr, cfg.tol_evolution));
    checks.push(Check::new("mean_x_growth", "<X>(t)/<X>(0) = e^{wt}", growth, cfg.tol_evolution));
    checks.push(Check::new("minimum_uncertainty", "dX dP = hbar/2", unc, 1e-8));
    checks.push(Check::new("means_real", "Im <X>_eta, Im <P>_eta = 0", imag, 1e-9));
    let mut accel = 0.0f64;
    for win in traj.points.windows(3) {
        let d2 = (win[2].x_matrix - 2.0 * win[1].x_matrix + win[0].x_matrix) / (cfg.dt * cfg.dt);
        accel = accel.max((d2 - w * w * win[1].x_matrix).abs() / win[1].x_matrix.abs().max(f64::MIN_POSITIVE));
    }
    if x0 != 0.0 {
        checks.push(Check::new("classical_equation_of_motion", "x_c'' = w^2 x_c (second differences)", accel, 1e-4));
    }
    let vac_moments = moments(&mparams, small, &vac.wide, tol)?;
    checks.push(Check::new(
        "vacuum_position_variance",
        "<X^2> = hbar/2mw at alpha = 0",
        (vac_moments.mean_x2.re - params.hbar / (2.0 * params.mass * w)).abs(),
        tol,
    ));

    let osc_res = resolution_of_identity(&params, Frame::Oscillator, None, 6.0, 128, 128, 8)?;
    checks.push(Check::new("resolution_of_identity", "(1/pi) int |alpha><alpha| d^2alpha = 1, R = 6, 128x128", osc_res.max_deviation, cfg.tol_quadrature));
    let inv_res = resolution_of_identity(&mparams, Frame::Inverted, Some(small), 6.0, 64, 64, 8)?;
    checks.push(Check::new(
        "resolution_of_identity_inverted",
        "(1/pi) int rho|alpha>_r <alpha|_r rho^dagger d^2alpha = 1, R = 6, 64x64",
        inv_res.max_deviation,
        cfg.tol_quadrature,
    ));
    Ok(checks)
}

fn p2_note(cfg: &RunConfig, map: &DysonMap) -> Result<String> {
    let params = map.params;
    let alpha = cfg.alpha();
    let t = 0.5 * cfg.t_max.min(1.0 / params.omega);
    let s = coherent_inverted(&params, map, alpha)?;
    let ev = evolve_closed_form(map, &s, t)?;
    let m = moments(&params, map, &ev.wide, cfg.tol_exact)?;
    let c = crate::coherent::closed_moments(&params, alpha, t);
    Ok(format!(
        "<P^2> at t = {t}: matrix {:.12e}{:+.3e}i; real-prefactor reading deviates by {:.3e}, literal -i prefactor reading by {:.3e}",
        m.mean_p2.re,
        m.mean_p2.im,
        (m.mean_p2 - re(c.p2)).norm(),
        (m.mean_p2 - c.p2_literal).norm()
    ))
}

/// Runs every check of the suite. Independent groups run in parallel; the
/// output order is fixed.
pub fn run_verification(cfg: &RunConfig) -> Result<VerificationReport> {
    cfg.validate()?;
    let params = cfg.params()?;
    let big = build_inverting_dyson(&params)?;
    let small = build_inverting_dyson(&cfg.metric_params()?)?;

    let ((fock, dis), ((dys, met), (heis, coh))) = rayon::join(
        || rayon::join(|| fock_checks(cfg), || disentangle_checks(cfg)),
        || {
            rayon::join(
                || rayon::join(|| dyson_checks(cfg, &big), || metric_checks(cfg, &small)),
                || rayon::join(|| heisenberg_checks(cfg, &big), || coherent_checks(cfg, &big, &small)),
            )
        },
    );
    let (sigma, dys) = dys?;
    let (metric, met) = met?;
    let mut checks = fock?;
    checks.extend(dis?);
    checks.extend(dys);
    checks.extend(met);
    checks.extend(heis?);
    checks.extend(coh?);
    let pass = checks.iter().all(|c| c.pass);

    let notes = vec![
        format!("similarity sign measured: rho^-1 H_os rho = ({}) i H_r", if sigma > 0 { "+" } else { "-" }),
        format!("metric convention satisfying (iH_os)^dagger = metric conjugation: {}", metric.as_str()),
        "expectation values are normalised by the eta-norm: <O> = <psi|eta O|psi>/<psi|eta|psi>".into(),
        "closed-form evolution prefactor includes the coherent-normalisation ratio exp((|alpha e^{wt}|^2 - |alpha|^2)/2)".into(),
        p2_note(cfg, &small)?,
        format!("parameter-box samples drawn with seed {}", cfg.seed),
    ];
    Ok(VerificationReport { config: cfg.clone(), sigma, metric, checks, pass, notes })
}

pub fn trajectory(cfg: &RunConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let params = cfg.metric_params()?;
    let map = build_inverting_dyson(&params)?;
    classical_trajectory(&params, &map, cfg.alpha(), &cfg.time_grid(), cfg.tol_exact)
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let io = |e: csv::Error| Error::InvalidParams(format!("csv: {e}"));
    w.write_record(["t", "X_closed", "X_matrix", "P_closed", "P_matrix", "dX", "dP", "product"]).map_err(io)?;
    for p in &traj.points {
        w.write_record(
            [p.t, p.x_closed, p.x_matrix, p.p_closed, p.p_matrix, p.dx, p.dp, p.product].iter().map(|v| format!("{v:.15e}")),
        )
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidParams(format!("csv: {e}")))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DivergenceRow {
    pub l: f64,
    pub naive_norm: f64,
    pub hermitian_norm: f64,
}

/// ψ₀ with ω → iω: (imω/πħ)^{1/4}·exp(−imωx²/2ħ).
pub fn naive_ground_state(params: &PhysicalParams, x: f64) -> C64 {
    let (h, m, w) = (params.hbar, params.mass, params.omega);
    (I * m * w / (PI * h)).powf(0.25) * (-I * m * w * x * x / (2.0 * h)).exp()
}

/// (mω/πħ)^{1/4}·exp(−mωx²/2ħ).
pub fn hermitian_ground_state(params: &PhysicalParams, x: f64) -> f64 {
    let (h, m, w) = (params.hbar, params.mass, params.omega);
    (m * w / (PI * h)).powf(0.25) * (-m * w * x * x / (2.0 * h)).exp()
}

/// ∫_{−L}^{L}|ψ₀|² for the continued and the Hermitian ground state on nested
/// boxes L = box_l·j/steps, j = 1..=steps, Simpson's rule on grid_n points.
pub fn divergence_demo(params: &PhysicalParams, box_l: f64, steps: usize, grid_n: usize) -> Result<Vec<DivergenceRow>> {
    if !(box_l > 0.0 && box_l.is_finite()) {
        return Err(Error::InvalidParams(format!("box_l must be positive (got {box_l})")));
    }
    if grid_n < 101 || grid_n % 2 == 0 {
        return Err(Error::InvalidParams(format!("grid_n must be odd and >= 101 (got {grid_n})")));
    }
    if steps == 0 {
        return Err(Error::InvalidParams("need at least one box".into()));
    }
    let rule = Simpson::new(NonZeroU32::new(((grid_n - 1) / 2) as u32).unwrap());
    Ok((1..=steps)
        .map(|j| {
            let l = box_l * j as f64 / steps as f64;
            DivergenceRow {
                l,
                naive_norm: rule.integrate(-l, l, |x| naive_ground_state(params, x).norm_sqr()),
                hermitian_norm: rule.integrate(-l, l, |x| hermitian_ground_state(params, x).powi(2)),
            }
        })
        .collect())
}

pub fn write_divergence_csv<W: Write>(rows: &[DivergenceRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let io = |e: csv::Error| Error::InvalidParams(format!("csv: {e}"));
    w.write_record(["L", "naive_norm", "hermitian_norm"]).map_err(io)?;
    for r in rows {
        w.write_record([r.l, r.naive_norm, r.hermitian_norm].iter().map(|v| format!("{v:.15e}"))).map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidParams(format!("csv: {e}")))?;
    Ok(())
}
