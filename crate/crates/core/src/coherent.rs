//! Coherent states of the oscillator and of the inverted oscillator, their time
//! evolution, η-expectation values and the coherent-state resolution of identity.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::dyson::DysonMap;
use crate::error::{Error, Result};
use crate::fock::{harmonic_hamiltonian, inverted_hamiltonian, re, OperatorMatrix, PhysicalParams, StateVector, C64, I};
use crate::linalg::expm;
use crate::poly::NormalPoly;
use crate::wide::WideVector;

/// Largest tolerated Poisson mass beyond the truncation.
pub const TAIL_TOL: f64 = 1e-10;

// Relative error bound accepted from the wide-precision transport.
const TRANSPORT_TOL: f64 = 1e-10;
// The quadrature only needs ~1e-3, and the bound grows with |α|.
const QUADRATURE_TRANSPORT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Oscillator,
    Inverted,
}

#[derive(Clone, Debug)]
pub struct CoherentState {
    pub alpha: C64,
    pub frame: Frame,
    pub coeffs: StateVector,
    pub tail_mass: f64,
    /// The same coefficients at double-double precision, with error bounds.
    pub wide: WideVector,
}

#[derive(Clone, Debug)]
pub struct EvolvedState {
    pub base: CoherentState,
    pub t: f64,
    pub grown_alpha: C64,
    pub prefactor: C64,
    pub coeffs: StateVector,
    pub wide: WideVector,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub mean_x: C64,
    pub mean_p: C64,
    pub mean_x2: C64,
    pub mean_p2: C64,
    pub delta_x: f64,
    pub delta_p: f64,
    pub product: f64,
}

/// e^{−|α|²/2}αⁿ/√n! for n < dim.
pub fn coherent_coefficients(alpha: C64, dim: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(dim);
    let mut c = re((-0.5 * alpha.norm_sqr()).exp());
    for n in 0..dim {
        if n > 0 {
            c = c * alpha / (n as f64).sqrt();
        }
        out.push(c);
    }
    out
}

/// Σ_{n ≥ dim} e^{−|α|²}|α|^{2n}/n!, summed directly rather than as 1 − (head).
pub fn tail_mass(alpha: C64, dim: usize) -> f64 {
    let x = alpha.norm_sqr();
    if x == 0.0 {
        return 0.0;
    }
    let ln_fact: f64 = (1..=dim).map(|i| (i as f64).ln()).sum();
    let mut term = (-x + dim as f64 * x.ln() - ln_fact).exp();
    let mut sum = 0.0;
    let mut n = dim;
    while term > 1e-40 && n < dim + 10_000 {
        sum += term;
        n += 1;
        term *= x / n as f64;
    }
    sum
}

fn guard(alpha: C64, dim: usize) -> Result<f64> {
    if alpha.norm_sqr() > dim as f64 / 8.0 {
        return Err(Error::TruncationInadequate {
            reason: format!("|alpha|^2 = {:.3} exceeds n_trunc/8", alpha.norm_sqr()),
            n_trunc: dim,
        });
    }
    let tail = tail_mass(alpha, dim);
    if tail > TAIL_TOL {
        return Err(Error::TruncationInadequate { reason: format!("coherent tail mass {tail:.3e}"), n_trunc: dim });
    }
    Ok(tail)
}

/// |α⟩ in the oscillator frame.
pub fn coherent_oscillator(params: &PhysicalParams, alpha: C64) -> Result<CoherentState> {
    let dim = params.n_trunc;
    let tail_mass = guard(alpha, dim)?;
    let coeffs = StateVector::from_slice(&coherent_coefficients(alpha, dim));
    let wide = WideVector::from_state(&coeffs);
    Ok(CoherentState { alpha, frame: Frame::Oscillator, coeffs, tail_mass, wide })
}

/// D(α) = exp(αa† − α*a).
pub fn displacement(params: &PhysicalParams, alpha: C64) -> Result<OperatorMatrix> {
    expm(&displacement_generator(alpha).matrix(params.n_trunc))
}

fn displacement_generator(alpha: C64) -> NormalPoly {
    &NormalPoly::creation().scale(alpha) - &NormalPoly::annihilation().scale(alpha.conj())
}

/// D^r(α) = ρ⁻¹D(α)ρ = exp(ρ⁻¹(αa† − α*a)ρ).
pub fn inverted_displacement(dyson: &DysonMap, alpha: C64) -> Result<OperatorMatrix> {
    expm(&dyson.conjugate(&displacement_generator(alpha)).matrix(dyson.dim()))
}

/// |α⟩^r = ρ⁻¹|α⟩^os, on the map's dimension.
pub fn coherent_inverted(params: &PhysicalParams, dyson: &DysonMap, alpha: C64) -> Result<CoherentState> {
    if params.n_trunc != dyson.dim() {
        return Err(Error::DimensionMismatch(params.n_trunc, dyson.dim()));
    }
    let os = coherent_oscillator(params, alpha)?;
    let wide = dyson.apply_rho_inv(&os.wide);
    Ok(CoherentState { alpha, frame: Frame::Inverted, coeffs: wide.to_state(), tail_mass: os.tail_mass, wide })
}

fn check_time(params: &PhysicalParams, t: f64) -> Result<()> {
    if !(t >= 0.0 && params.omega * t <= 1.0 + 1e-12) {
        return Err(Error::InvalidParams(format!("omega*t = {} outside [0, 1]", params.omega * t)));
    }
    Ok(())
}

/// e^{−iH^r t/ħ}|α⟩^r in closed form: c(t)·|αe^{ωt}⟩^r with
/// c(t) = e^{ωt/2}·e^{(|αe^{ωt}|² − |α|²)/2}; the second factor is the ratio of the
/// two coherent-state normalisations.
pub fn evolve_closed_form(dyson: &DysonMap, state: &CoherentState, t: f64) -> Result<EvolvedState> {
    let params = dyson.params;
    if state.frame != Frame::Inverted {
        return Err(Error::InvalidParams("closed-form inverted evolution needs an inverted-frame state".into()));
    }
    check_time(&params, t)?;
    let wt = params.omega * t;
    let grown_alpha = state.alpha * wt.exp();
    let prefactor = re((wt / 2.0 + 0.5 * (grown_alpha.norm_sqr() - state.alpha.norm_sqr())).exp());
    let grown = coherent_inverted(&params, dyson, grown_alpha)?;
    let wide = grown.wide.scale(prefactor);
    Ok(EvolvedState { base: state.clone(), t, grown_alpha, prefactor, coeffs: wide.to_state(), wide })
}

/// e^{−iH^os t/ħ}|α⟩^os = e^{−iωt/2}|αe^{−iωt}⟩^os.
pub fn rotate_oscillator(params: &PhysicalParams, state: &CoherentState, t: f64) -> Result<EvolvedState> {
    if state.frame != Frame::Oscillator {
        return Err(Error::InvalidParams("oscillator rotation needs an oscillator-frame state".into()));
    }
    let wt = params.omega * t;
    let grown_alpha = state.alpha * (-I * wt).exp();
    let prefactor = (-I * wt / 2.0).exp();
    let rotated = coherent_oscillator(params, grown_alpha)?;
    let wide = rotated.wide.scale(prefactor);
    Ok(EvolvedState { base: state.clone(), t, grown_alpha, prefactor, coeffs: wide.to_state(), wide })
}

/// exp(−iHt/ħ) applied to the coefficients, H = H^os or H^r by frame.
pub fn evolve_direct(params: &PhysicalParams, state: &CoherentState, t: f64) -> Result<StateVector> {
    if state.coeffs.dim() != params.n_trunc {
        return Err(Error::DimensionMismatch(state.coeffs.dim(), params.n_trunc));
    }
    if state.frame == Frame::Inverted {
        check_time(params, t)?;
        guard(state.alpha * (params.omega * t).exp(), params.n_trunc)?;
    }
    let h = match state.frame {
        Frame::Oscillator => harmonic_hamiltonian(params),
        Frame::Inverted => inverted_hamiltonian(params),
    };
    Ok(expm(&h.scale(-I * t / params.hbar))?.apply(&state.coeffs))
}

/// ρψ in wide precision, checked against the transport error bound.
fn hermitian_image(dyson: &DysonMap, psi: &WideVector) -> Result<StateVector> {
    let v = dyson.apply_rho(psi);
    v.ensure_accurate(TRANSPORT_TOL)?;
    Ok(v.to_state())
}

/// ⟨ψ|ηO|ψ⟩/⟨ψ|η|ψ⟩ with O = ρ⁻¹oρ, η = ρ†ρ, evaluated as ⟨ρψ|o|ρψ⟩/⟨ρψ|ρψ⟩.
pub fn eta_expectation(dyson: &DysonMap, psi: &WideVector, observable: &OperatorMatrix) -> Result<C64> {
    if observable.dim() != psi.dim() {
        return Err(Error::DimensionMismatch(observable.dim(), psi.dim()));
    }
    let phi = hermitian_image(dyson, psi)?;
    expectation_of(&phi, observable)
}

fn expectation_of(phi: &StateVector, observable: &OperatorMatrix) -> Result<C64> {
    let norm = phi.inner(phi).re;
    if !(norm >= 1e-12) {
        return Err(Error::DegenerateState(norm));
    }
    Ok(phi.inner(&observable.apply(phi)) / norm)
}

/// ⟨ψ|η|ψ⟩.
pub fn eta_norm_sqr(dyson: &DysonMap, psi: &WideVector) -> Result<f64> {
    let v = dyson.apply_rho(psi);
    v.ensure_accurate(TRANSPORT_TOL)?;
    Ok(v.norm_sqr())
}

/// x, p, x², p² on the given number of levels.
pub fn moment_observables(params: &PhysicalParams) -> [OperatorMatrix; 4] {
    let (x, p) = NormalPoly::quadratures(params);
    let dim = params.n_trunc;
    [x.matrix(dim), p.matrix(dim), (&x * &x).matrix(dim), (&p * &p).matrix(dim)]
}

pub fn moments(params: &PhysicalParams, dyson: &DysonMap, psi: &WideVector, tol: f64) -> Result<MomentReport> {
    let phi = hermitian_image(dyson, psi)?;
    let [x, p, x2, p2] = moment_observables(params);
    let mean_x = expectation_of(&phi, &x)?;
    let mean_p = expectation_of(&phi, &p)?;
    let mean_x2 = expectation_of(&phi, &x2)?;
    let mean_p2 = expectation_of(&phi, &p2)?;
    let var_x = mean_x2.re - mean_x.re * mean_x.re;
    let var_p = mean_p2.re - mean_p.re * mean_p.re;
    for v in [var_x, var_p] {
        if v < -tol {
            return Err(Error::NegativeVariance(v));
        }
    }
    let (delta_x, delta_p) = (var_x.max(0.0).sqrt(), var_p.max(0.0).sqrt());
    Ok(MomentReport { mean_x, mean_p, mean_x2, mean_p2, delta_x, delta_p, product: delta_x * delta_p })
}

/// Closed-form moments at β = αe^{ωt}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClosedMoments {
    pub x: f64,
    pub p: f64,
    pub x2: f64,
    /// −(mωħ/2)[(β − β*)² − 1], the real reading.
    pub p2: f64,
    /// The same bracket with prefactor −imωħ/2.
    pub p2_literal: C64,
}

pub fn closed_moments(params: &PhysicalParams, alpha: C64, t: f64) -> ClosedMoments {
    let beta = alpha * (params.omega * t).exp();
    let (h, m, w) = (params.hbar, params.mass, params.omega);
    let sum = beta + beta.conj();
    let diff = beta - beta.conj();
    let p2_bracket = diff * diff - re(1.0);
    ClosedMoments {
        x: (h / (2.0 * m * w)).sqrt() * sum.re,
        p: (-I * (m * w * h / 2.0).sqrt() * diff).re,
        x2: h / (2.0 * m * w) * (sum * sum + re(1.0)).re,
        p2: (-(m * w * h / 2.0) * p2_bracket).re,
        p2_literal: -I * (m * w * h / 2.0) * p2_bracket,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x_closed: f64,
    pub x_matrix: f64,
    pub p_closed: f64,
    pub p_matrix: f64,
    pub dx: f64,
    pub dp: f64,
    pub product: f64,
    /// Largest imaginary part among the η-expectations of X and P.
    pub imag: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    /// Set when the grid was cut short by the truncation guard.
    pub warning: Option<String>,
}

/// ⟨X⟩_η, ⟨P⟩_η along a time grid, closed form next to the matrix computation.
/// Points are computed in parallel; output order follows the grid.
pub fn classical_trajectory(params: &PhysicalParams, dyson: &DysonMap, alpha: C64, times: &[f64], tol: f64) -> Result<Trajectory> {
    let base = coherent_inverted(params, dyson, alpha)?;
    let rows: Vec<Result<TrajectoryPoint>> = times
        .par_iter()
        .map(|&t| {
            let ev = evolve_closed_form(dyson, &base, t)?;
            let m = moments(params, dyson, &ev.wide, tol)?;
            let c = closed_moments(params, alpha, t);
            Ok(TrajectoryPoint {
                t,
                x_closed: c.x,
                x_matrix: m.mean_x.re,
                p_closed: c.p,
                p_matrix: m.mean_p.re,
                dx: m.delta_x,
                dp: m.delta_p,
                product: m.product,
                imag: m.mean_x.im.abs().max(m.mean_p.im.abs()),
            })
        })
        .collect();
    let mut points = Vec::with_capacity(rows.len());
    let mut warning = None;
    for (t, r) in times.iter().zip(rows) {
        match r {
            Ok(p) => points.push(p),
            Err(e @ Error::TruncationInadequate { .. }) => {
                warning = Some(format!("trajectory stopped at t = {t}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Trajectory { points, warning })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolutionReport {
    pub frame: Frame,
    pub radius: f64,
    pub n_radial: usize,
    pub n_angular: usize,
    pub k: usize,
    /// max |B − I| over the k×k block.
    pub max_deviation: f64,
    pub max_diagonal_deviation: f64,
    /// Largest transport error bound over the nodes (inverted frame only).
    pub transport_bound: f64,
}

/// (1/π)∫_{|α|≤R} |α⟩⟨α| d²α on the k×k block, Gauss–Legendre in |α| and
/// uniform nodes in arg α. In the inverted frame the integrand is ρ|α⟩^r ⟨α|^r ρ†,
/// with |α⟩^r formed on the map's dimension.
pub fn resolution_of_identity(
    params: &PhysicalParams,
    frame: Frame,
    dyson: Option<&DysonMap>,
    radius: f64,
    n_radial: usize,
    n_angular: usize,
    k: usize,
) -> Result<ResolutionReport> {
    if k == 0 || n_radial == 0 || n_angular == 0 || !(radius > 0.0) {
        return Err(Error::InvalidParams("empty quadrature".into()));
    }
    if k > params.n_trunc {
        return Err(Error::DimensionMismatch(k, params.n_trunc));
    }
    let dyson = match frame {
        Frame::Oscillator => None,
        Frame::Inverted => Some(dyson.ok_or_else(|| Error::InvalidParams("inverted frame needs a Dyson map".into()))?),
    };
    if let Some(d) = dyson {
        if k > d.dim() {
            return Err(Error::DimensionMismatch(k, d.dim()));
        }
    }
    let rule = GaussLegendre::new(NonZeroUsize::new(n_radial).unwrap());
    let nodes: Vec<(f64, f64)> = rule.as_node_weight_pairs().iter().map(|&(x, w)| (0.5 * radius * (x + 1.0), 0.5 * radius * w)).collect();
    let dphi = 2.0 * PI / n_angular as f64;

    // one partial block per radial node, reduced in node order
    let partials: Vec<Result<(DMatrix<C64>, f64)>> = nodes
        .par_iter()
        .map(|&(r, w)| {
            let mut acc = DMatrix::<C64>::zeros(k, k);
            let mut bound = 0.0f64;
            for j in 0..n_angular {
                let alpha = C64::from_polar(r, j as f64 * dphi);
                let v: Vec<C64> = match dyson {
                    None => coherent_coefficients(alpha, k),
                    Some(d) => {
                        let os = WideVector::from_state(&StateVector::from_slice(&coherent_coefficients(alpha, d.dim())));
                        let back = d.apply_rho(&d.apply_rho_inv(&os));
                        back.ensure_accurate(QUADRATURE_TRANSPORT_TOL)?;
                        bound = bound.max(back.norm_error());
                        back.to_state().coeffs()[..k].to_vec()
                    }
                };
                let weight = w * r * dphi / PI;
                for col in 0..k {
                    let vc = v[col].conj() * weight;
                    for row in 0..k {
                        acc[(row, col)] += v[row] * vc;
                    }
                }
            }
            Ok((acc, bound))
        })
        .collect();
    let mut block = DMatrix::<C64>::zeros(k, k);
    let mut transport_bound = 0.0f64;
    for p in partials {
        let (acc, bound) = p?;
        block += acc;
        transport_bound = transport_bound.max(bound);
    }
    let mut max_deviation: f64 = 0.0;
    let mut max_diagonal_deviation: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let d = (block[(i, j)] - if i == j { re(1.0) } else { C64::default() }).norm();
            max_deviation = max_deviation.max(d);
            if i == j {
                max_diagonal_deviation = max_diagonal_deviation.max(d);
            }
        }
    }
    Ok(ResolutionReport { frame, radius, n_radial, n_angular, k, max_deviation, max_diagonal_deviation, transport_bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyson::build_inverting_dyson;
    use crate::fock::{annihilation, c};
    use proptest::prelude::*;

    fn unit(n: usize) -> PhysicalParams {
        PhysicalParams::unit(n).unwrap()
    }

    #[test]
    fn vacuum_and_eigen_relation() {
        let params = unit(32);
        let s = coherent_oscillator(&params, C64::default()).unwrap();
        assert_eq!(s.coeffs, StateVector::basis(32, 0));
        assert_eq!(s.tail_mass, 0.0);

        let alpha = c(0.5, 0.3);
        let s = coherent_oscillator(&params, alpha).unwrap();
        let av = annihilation(32).apply(&s.coeffs);
        assert!(av.block_distance(&s.coeffs.scale(alpha), 16) < 1e-10);
        assert!((s.coeffs.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn displacement_builds_coherent_state() {
        let params = unit(48);
        let alpha = c(0.7, -0.4);
        let d = displacement(&params, alpha).unwrap();
        let got = d.apply(&StateVector::basis(48, 0));
        let want = coherent_oscillator(&params, alpha).unwrap().coeffs;
        assert!(got.block_distance(&want, 24) < 1e-10);
    }

    #[test]
    fn truncation_guard() {
        let params = unit(16);
        assert!(matches!(coherent_oscillator(&params, re(1.5)), Err(Error::TruncationInadequate { .. })));
        assert!(coherent_oscillator(&params, re(1.2)).is_ok());
        // inside the amplitude rule but with too heavy a tail
        assert!(matches!(coherent_oscillator(&params, re(1.4)), Err(Error::TruncationInadequate { .. })));
        assert!(tail_mass(re(1.0), 10) < 1e-6 && tail_mass(re(1.0), 10) > 1e-8);
        let head: f64 = coherent_coefficients(re(2.0), 20).iter().map(|z| z.norm_sqr()).sum();
        assert!((head + tail_mass(re(2.0), 20) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn inverted_vacuum_and_normalisation() {
        let params = unit(64);
        let map = build_inverting_dyson(&params).unwrap();
        let (a_r, _) = {
            let p = crate::dyson::transformed_ladder(&params, &map).unwrap();
            (p.a, p.abar)
        };
        let vac = coherent_inverted(&params, &map, C64::default()).unwrap();
        assert!(a_r.apply(&vac.coeffs).block_distance(&StateVector::zeros(64), 16) < 1e-10);

        let s = coherent_inverted(&params, &map, re(0.5)).unwrap();
        assert!((eta_norm_sqr(&map, &s.wide).unwrap() - 1.0).abs() < 1e-8);
        for alpha in [re(0.0), c(0.5, 0.0), c(0.0, 0.5), c(-0.4, 0.3), c(0.8, -0.6)] {
            let s = coherent_inverted(&params, &map, alpha).unwrap();
            assert!(a_r.apply(&s.coeffs).block_distance(&s.coeffs.scale(alpha), 16) < 1e-8, "{alpha}");
        }
    }

    #[test]
    fn inverted_displacement_matches_mapped_state() {
        let params = unit(64);
        let map = build_inverting_dyson(&params).unwrap();
        let alpha = c(0.5, 0.2);
        let vac = coherent_inverted(&params, &map, C64::default()).unwrap();
        let got = inverted_displacement(&map, alpha).unwrap().apply(&vac.coeffs);
        let want = coherent_inverted(&params, &map, alpha).unwrap().coeffs;
        assert!(got.block_distance(&want, 16) < 1e-8, "{}", got.block_distance(&want, 16));
    }

    #[test]
    fn fock_relation_in_inverted_frame() {
        let params = unit(64);
        let map = build_inverting_dyson(&params).unwrap();
        let pair = crate::dyson::transformed_ladder(&params, &map).unwrap();
        let number = &pair.abar * &pair.a;
        for n in 0..12 {
            let v = map.apply_rho_inv(&WideVector::basis(64, n)).to_state();
            assert!(number.apply(&v).block_distance(&v.scale(re(n as f64)), 16) < 1e-8, "{n}");
        }
    }

    #[test]
    fn closed_form_evolution() {
        let params = unit(64);
        let map = build_inverting_dyson(&params).unwrap();
        let s = coherent_inverted(&params, &map, re(0.5)).unwrap();
        let same = evolve_closed_form(&map, &s, 0.0).unwrap();
        assert!(same.coeffs.block_distance(&s.coeffs, 64) < 1e-14);

        let t = 0.5f64;
        let ev = evolve_closed_form(&map, &s, t).unwrap();
        let want = t.exp() * (0.25 * ((2.0 * t).exp() - 1.0)).exp();
        assert!((eta_norm_sqr(&map, &ev.wide).unwrap() / want - 1.0).abs() < 1e-6);

        let direct = evolve_direct(&params, &s, 0.25).unwrap();
        let closed = evolve_closed_form(&map, &s, 0.25).unwrap();
        assert!(direct.block_distance(&closed.coeffs, 16) < 1e-6);
        assert!((direct.norm() - s.coeffs.norm()).abs() < 1e-10 * s.coeffs.norm());
        assert!(evolve_closed_form(&map, &s, 1.5).is_err());
    }

    #[test]
    fn oscillator_rotation() {
        let params = PhysicalParams::new(2.0, 0.5, 3.0, 48).unwrap();
        let s = coherent_oscillator(&params, c(0.6, 0.2)).unwrap();
        let rot = rotate_oscillator(&params, &s, 0.7).unwrap();
        let direct = evolve_direct(&params, &s, 0.7).unwrap();
        assert!(direct.block_distance(&rot.coeffs, 24) < 1e-10);
    }

    #[test]
    fn expectations() {
        let params = unit(64);
        let map = build_inverting_dyson(&params).unwrap();
        let s = coherent_inverted(&params, &map, re(1.0)).unwrap();
        let id = OperatorMatrix::identity(64);
        assert!((eta_expectation(&map, &s.wide, &id).unwrap() - re(1.0)).norm() < 1e-12);
        let [x, p, ..] = moment_observables(&params);
        assert!((eta_expectation(&map, &s.wide, &x).unwrap() - re(2f64.sqrt())).norm() < 1e-10);
        assert!(eta_expectation(&map, &s.wide, &p).unwrap().norm() < 1e-10);

        let vac = coherent_inverted(&params, &map, C64::default()).unwrap();
        let m = moments(&params, &map, &vac.wide, 1e-10).unwrap();
        assert!((m.mean_x2 - re(0.5)).norm() < 1e-10);
        assert!(matches!(eta_expectation(&map, &WideVector::from_state(&StateVector::zeros(64)), &id), Err(Error::DegenerateState(_))));
    }

    #[test]
    fn moments_follow_closed_forms() {
        for params in [unit(64), PhysicalParams::new(2.0, 0.5, 3.0, 64).unwrap()] {
            let map = build_inverting_dyson(&params).unwrap();
            let alpha = c(0.5, 0.2);
            let s = coherent_inverted(&params, &map, alpha).unwrap();
            let t = 0.4 / params.omega;
            let ev = evolve_closed_form(&map, &s, t).unwrap();
            let m = moments(&params, &map, &ev.wide, 1e-10).unwrap();
            let cm = closed_moments(&params, alpha, t);
            assert!((m.product - params.hbar / 2.0).abs() < 1e-8);
            assert!((m.mean_x.re - cm.x).abs() < 1e-8 && m.mean_x.im.abs() < 1e-9);
            assert!((m.mean_p.re - cm.p).abs() < 1e-8 && m.mean_p.im.abs() < 1e-9);
            assert!((m.mean_x2.re - cm.x2).abs() < 1e-8);
            assert!((m.mean_p2.re - cm.p2).abs() < 1e-8);
            assert!((m.mean_p2 - cm.p2_literal).norm() > 0.1);
            assert!((m.delta_x - (params.hbar / (2.0 * params.mass * params.omega)).sqrt()).abs() < 1e-8);
        }
    }

    #[test]
    fn trajectory_grows_and_stops_at_guard() {
        let params = unit(64);
        let map = build_inverting_dyson(&params).unwrap();
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let tr = classical_trajectory(&params, &map, re(0.5), &times, 1e-10).unwrap();
        assert_eq!(tr.points.len(), 11);
        assert!(tr.warning.is_none());
        let x0 = tr.points[0].x_matrix;
        assert!((x0 - 0.5f64 * 2f64.sqrt()).abs() < 1e-10);
        for p in &tr.points {
            assert!((p.x_matrix / x0 - p.t.exp()).abs() < 1e-6);
            assert!((p.product - 0.5).abs() < 1e-8);
        }
        // |2.0·e^{ωt}|² passes n/8 = 8 after ωt ≈ 0.35
        let big = classical_trajectory(&params, &map, re(2.0), &times, 1e-10).unwrap();
        assert!(big.points.len() < times.len() && big.warning.is_some());
    }

    #[test]
    fn oscillator_resolution_of_identity() {
        let r = resolution_of_identity(&unit(16), Frame::Oscillator, None, 6.0, 96, 96, 8).unwrap();
        assert!(r.max_deviation < 1e-3, "{r:?}");
        assert!(resolution_of_identity(&unit(16), Frame::Inverted, None, 6.0, 8, 8, 8).is_err());
    }

    #[test]
    fn inverted_resolution_matches_oscillator() {
        let params = unit(48);
        let map = build_inverting_dyson(&params).unwrap();
        let osc = resolution_of_identity(&params, Frame::Oscillator, None, 5.0, 32, 32, 6).unwrap();
        let inv = resolution_of_identity(&params, Frame::Inverted, Some(&map), 5.0, 32, 32, 6).unwrap();
        assert!((osc.max_deviation - inv.max_deviation).abs() < 1e-8, "{osc:?} {inv:?}");
        assert!(inv.transport_bound < 1e-8 && osc.transport_bound == 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn uncertainty_is_minimal(ar in -0.6f64..0.6, ai in -0.6f64..0.6, t in 0.0f64..0.8) {
            let params = unit(64);
            let map = build_inverting_dyson(&params).unwrap();
            let s = coherent_inverted(&params, &map, c(ar, ai)).unwrap();
            let ev = evolve_closed_form(&map, &s, t).unwrap();
            let m = moments(&params, &map, &ev.wide, 1e-10).unwrap();
            prop_assert!((m.product - 0.5).abs() < 1e-8);
            prop_assert!(m.mean_x.im.abs() < 1e-9 && m.mean_p.im.abs() < 1e-9);
        }
    }
}
