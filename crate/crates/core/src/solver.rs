//! Time integration of the Elsässer system
//!
//! ```text
//! ∂t z+ = μΔz+ + ∂1 z+ - (z-·∇)z+ - ∇p
//! ∂t z- = μΔz- - ∂1 z- - (z+·∇)z- - ∇p
//! ```
//!
//! with `B0 = e1`. Diffusion and drift are integrated exactly through an
//! integrating factor; the quadratic coupling and pressure use Heun's method.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, DerivativeNorm, DomainSpec, ScalarField, VectorField};
use crate::spectral;

/// Divergence tolerance accepted by `FieldState::new`, relative to the sup norm.
const STATE_DIVERGENCE_TOL: f64 = 1e-8;
/// A run aborts once the H^N norm exceeds this multiple of its initial value.
pub const BLOW_UP_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub zp: VectorField,
    pub zm: VectorField,
    pub mu: f64,
}

impl FieldState {
    pub fn new(t: f64, zp: VectorField, zm: VectorField, mu: f64) -> Result<Self> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidArgument(format!("time {t} must be finite and >= 0")));
        }
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(Error::InvalidArgument(format!("mu = {mu} must be >= 0")));
        }
        if zp.domain() != zm.domain() {
            return Err(Error::DomainMismatch);
        }
        for (name, z) in [("z+", &zp), ("z-", &zm)] {
            if !z.is_finite() {
                return Err(Error::NonFinite(name.into()));
            }
            let div = z.divergence().max_abs();
            if div > STATE_DIVERGENCE_TOL * z.max_norm().max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidArgument(format!("{name} is not solenoidal (div {div:e})")));
            }
        }
        Ok(FieldState { t, zp, zm, mu })
    }

    pub fn zero(domain: &DomainSpec, mu: f64) -> Self {
        FieldState {
            t: 0.0,
            zp: VectorField::zeros(domain),
            zm: VectorField::zeros(domain),
            mu,
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        self.zp.domain()
    }

    /// Multiplies both fluctuations by `lambda`.
    pub fn scaled(&self, lambda: f64) -> FieldState {
        FieldState {
            t: self.t,
            zp: self.zp.scale(lambda),
            zm: self.zm.scale(lambda),
            mu: self.mu,
        }
    }

    /// Grid energy `‖z+‖² + ‖z-‖²`.
    pub fn energy(&self) -> f64 {
        self.zp.l2_norm().powi(2) + self.zm.l2_norm().powi(2)
    }

    pub fn max_amplitude(&self) -> f64 {
        self.zp.max_norm().max(self.zm.max_norm())
    }
}

/// Pressure with zero mean.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureField {
    pub p: ScalarField,
}

fn unit_b0(domain: &DomainSpec) -> VectorField {
    let mut b0 = VectorField::zeros(domain);
    b0.components_mut()[0] = ScalarField::constant(domain, 1.0);
    b0
}

/// `z+ = (v + b) - B0`, `z- = (v - b) + B0`.
pub fn elsasser_from_vb(v: &VectorField, b: &VectorField) -> Result<(VectorField, VectorField)> {
    if v.domain() != b.domain() {
        return Err(Error::DomainMismatch);
    }
    let b0 = unit_b0(v.domain());
    Ok((v.add(b).sub(&b0), v.sub(b).add(&b0)))
}

/// Inverse of `elsasser_from_vb`: `v = (z+ + z-)/2`, `b = (z+ - z-)/2 + B0`.
pub fn vb_from_elsasser(zp: &VectorField, zm: &VectorField) -> Result<(VectorField, VectorField)> {
    if zp.domain() != zm.domain() {
        return Err(Error::DomainMismatch);
    }
    let b0 = unit_b0(zp.domain());
    Ok((zp.add(zm).scale(0.5), zp.sub(zm).scale(0.5).add(&b0)))
}

fn hats_of(z: &VectorField) -> Vec<Vec<Complex64>> {
    let domain = z.domain();
    z.components()
        .par_iter()
        .map(|c| spectral::forward(domain, c.values()))
        .collect()
}

fn field_of(domain: &DomainSpec, hats: Vec<Vec<Complex64>>) -> VectorField {
    VectorField::from_parts(
        hats.into_par_iter()
            .map(|h| ScalarField::from_parts(domain.clone(), spectral::inverse(domain, h)))
            .collect(),
    )
}

/// Dealiased spectra of the tensor `T_ij = z+^i z-^j`, row-major in `(i, j)`.
fn product_tensor(domain: &DomainSpec, zp_hat: &[Vec<Complex64>], zm_hat: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let t = spectral::tables(domain);
    let d = domain.dim();
    let truncate = |h: &Vec<Complex64>| -> Vec<f64> {
        let masked: Vec<Complex64> = h
            .iter()
            .zip(&t.keep)
            .map(|(v, &k)| if k { *v } else { Complex64::default() })
            .collect();
        spectral::inverse(domain, masked)
    };
    let zp: Vec<Vec<f64>> = zp_hat.par_iter().map(truncate).collect();
    let zm: Vec<Vec<f64>> = zm_hat.par_iter().map(truncate).collect();
    (0..d * d)
        .into_par_iter()
        .map(|ij| {
            let (i, j) = (ij / d, ij % d);
            let prod: Vec<f64> = zp[i].iter().zip(&zm[j]).map(|(a, b)| a * b).collect();
            let mut h = spectral::forward(domain, &prod);
            for (v, &k) in h.iter_mut().zip(&t.keep) {
                if !k {
                    *v = Complex64::default();
                }
            }
            h
        })
        .collect()
}

/// Spectrum of `p` from `-Δp = ∂i∂j(z+^j z-^i)`, zero mean.
fn pressure_hat(domain: &DomainSpec, tensor: &[Vec<Complex64>]) -> Vec<Complex64> {
    let t = spectral::tables(domain);
    let d = domain.dim();
    (0..domain.len())
        .map(|m| {
            let k2 = t.k2[m];
            if k2 == 0.0 || t.any_nyquist(m) {
                return Complex64::default();
            }
            let k = &t.kvec[m];
            let mut s = Complex64::default();
            for i in 0..d {
                for j in 0..d {
                    s += tensor[i * d + j][m] * (k[i] * k[j]);
                }
            }
            -s / k2
        })
        .collect()
}

pub fn pressure(zp: &VectorField, zm: &VectorField) -> Result<PressureField> {
    let domain = zp.domain();
    if zm.domain() != domain {
        return Err(Error::DomainMismatch);
    }
    let tensor = product_tensor(domain, &hats_of(zp), &hats_of(zm));
    let p = spectral::inverse(domain, pressure_hat(domain, &tensor));
    Ok(PressureField {
        p: ScalarField::from_parts(domain.clone(), p),
    })
}

/// Projected nonlinear terms `(-P∂j T_ij, -P∂j T_ji)` in spectral space.
fn nonlinear_hat(
    domain: &DomainSpec,
    zp_hat: &[Vec<Complex64>],
    zm_hat: &[Vec<Complex64>],
) -> (Vec<Vec<Complex64>>, Vec<Vec<Complex64>>) {
    let t = spectral::tables(domain);
    let d = domain.dim();
    let tensor = product_tensor(domain, zp_hat, zm_hat);
    let len = domain.len();
    let mut np = vec![vec![Complex64::default(); len]; d];
    let mut nm = vec![vec![Complex64::default(); len]; d];
    for m in 0..len {
        let k = &t.kvec[m];
        for i in 0..d {
            let mut sp = Complex64::default();
            let mut sm = Complex64::default();
            for j in 0..d {
                let ik = Complex64::new(0.0, k[j]);
                sp -= ik * tensor[i * d + j][m];
                sm -= ik * tensor[j * d + i][m];
            }
            np[i][m] = sp;
            nm[i][m] = sm;
        }
    }
    (grid::project_hats(domain, np), grid::project_hats(domain, nm))
}

/// Time derivatives `(∂t z+, ∂t z-)` of the full system.
pub fn rhs(state: &FieldState) -> (VectorField, VectorField) {
    let domain = state.domain();
    let t = spectral::tables(domain);
    let zp_hat = hats_of(&state.zp);
    let zm_hat = hats_of(&state.zm);
    let (mut np, mut nm) = nonlinear_hat(domain, &zp_hat, &zm_hat);
    for m in 0..domain.len() {
        let k1 = if t.nyquist[m][0] { 0.0 } else { t.kvec[m][0] };
        let lin = -state.mu * t.k2[m];
        for a in 0..domain.dim() {
            np[a][m] += zp_hat[a][m] * Complex64::new(lin, k1);
            nm[a][m] += zm_hat[a][m] * Complex64::new(lin, -k1);
        }
    }
    (field_of(domain, np), field_of(domain, nm))
}

/// Solver knobs beyond the time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOptions {
    /// Multiplier on the quadratic coupling; zero gives the linear drift-diffusion flow.
    pub coupling: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions { coupling: 1.0 }
    }
}

/// Largest admissible step `0.5·Δx / (1 + max|z±|)`.
pub fn cfl_limit(state: &FieldState) -> f64 {
    0.5 * state.domain().min_spacing() / (1.0 + state.max_amplitude())
}

pub fn step(state: &FieldState, dt: f64) -> Result<FieldState> {
    step_with(state, dt, StepOptions::default())
}

pub fn step_with(state: &FieldState, dt: f64, opts: StepOptions) -> Result<FieldState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt = {dt} must be positive")));
    }
    let limit = cfl_limit(state);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt, limit });
    }
    let domain = state.domain();
    let t = spectral::tables(domain);
    let d = domain.dim();
    let len = domain.len();

    let factors: Vec<(Complex64, Complex64)> = (0..len)
        .map(|m| {
            let k1 = if t.nyquist[m][0] { 0.0 } else { t.kvec[m][0] };
            let decay = -state.mu * t.k2[m] * dt;
            (
                Complex64::new(decay, k1 * dt).exp(),
                Complex64::new(decay, -k1 * dt).exp(),
            )
        })
        .collect();

    let zp0 = hats_of(&state.zp);
    let zm0 = hats_of(&state.zm);
    let c = opts.coupling;

    let (np1, nm1) = if c != 0.0 {
        nonlinear_hat(domain, &zp0, &zm0)
    } else {
        (vec![vec![Complex64::default(); len]; d], vec![vec![Complex64::default(); len]; d])
    };

    // predictor: E (z + dt N)
    let mut zp_star = zp0.clone();
    let mut zm_star = zm0.clone();
    for a in 0..d {
        for m in 0..len {
            zp_star[a][m] = factors[m].0 * (zp0[a][m] + c * dt * np1[a][m]);
            zm_star[a][m] = factors[m].1 * (zm0[a][m] + c * dt * nm1[a][m]);
        }
    }
    let (np2, nm2) = if c != 0.0 {
        nonlinear_hat(domain, &zp_star, &zm_star)
    } else {
        (np1.clone(), nm1.clone())
    };

    // corrector: E (z + dt/2 N1) + dt/2 N2
    let half = 0.5 * c * dt;
    let mut zp_new = zp0;
    let mut zm_new = zm0;
    for a in 0..d {
        for m in 0..len {
            zp_new[a][m] = factors[m].0 * (zp_new[a][m] + half * np1[a][m]) + half * np2[a][m];
            zm_new[a][m] = factors[m].1 * (zm_new[a][m] + half * nm1[a][m]) + half * nm2[a][m];
        }
    }
    let next = FieldState {
        t: state.t + dt,
        zp: field_of(domain, zp_new),
        zm: field_of(domain, zm_new),
        mu: state.mu,
    };
    if !(next.zp.is_finite() && next.zm.is_finite()) {
        return Err(Error::BlowUp {
            t: next.t,
            detail: "non-finite field values".into(),
        });
    }
    Ok(next)
}

/// Steps from `state.t` to exactly `t_target` with steps no longer than `dt_max`.
pub fn advance(state: &FieldState, t_target: f64, dt_max: f64, opts: StepOptions) -> Result<FieldState> {
    let span = t_target - state.t;
    if span < -1e-12 {
        return Err(Error::InvalidArgument(format!(
            "cannot step backwards from {} to {t_target}",
            state.t
        )));
    }
    if span <= 1e-14 {
        return Ok(state.clone());
    }
    let steps = (span / dt_max - 1e-9).ceil().max(1.0) as usize;
    let dt = span / steps as f64;
    let mut current = state.clone();
    for _ in 0..steps {
        current = step_with(&current, dt, opts)?;
    }
    current.t = t_target;
    Ok(current)
}

/// Solution of the linear flow at time `t` from `z` along the sign-`±` drift:
/// Fourier factor `exp(±i k1 t - μ|k|² t)`.
pub fn drift_diffuse(f: &ScalarField, t: f64, mu: f64, sign: f64) -> ScalarField {
    let domain = f.domain();
    let tables = spectral::tables(domain);
    let mut hat = spectral::forward(domain, f.values());
    for (m, h) in hat.iter_mut().enumerate() {
        let k1 = if tables.nyquist[m][0] { 0.0 } else { tables.kvec[m][0] };
        *h *= Complex64::new(-mu * tables.k2[m] * t, sign * k1 * t).exp();
    }
    ScalarField::from_parts(domain.clone(), spectral::inverse(domain, hat))
}

/// Componentwise `drift_diffuse` of a vector field.
pub fn drift_diffuse_vector(z: &VectorField, t: f64, mu: f64, sign: f64) -> VectorField {
    VectorField::from_parts(
        z.components()
            .par_iter()
            .map(|c| drift_diffuse(c, t, mu, sign))
            .collect(),
    )
}

/// Spectral weight `Σ_{j≤N} Σ_{|a|=j} w_a k^{2a}` of one mode, with odd
/// derivatives of Nyquist modes dropped as in `grid::partial`.
pub(crate) fn sobolev_weights(domain: &DomainSpec, order: u32, norm: DerivativeNorm) -> Vec<f64> {
    let t = spectral::tables(domain);
    let d = domain.dim();
    let indices: Vec<(Vec<u32>, f64)> = (0..=order)
        .flat_map(|j| grid::multi_indices(d, j, norm))
        .collect();
    (0..domain.len())
        .map(|m| {
            indices
                .iter()
                .map(|(a, w)| {
                    let mut f = *w;
                    for (axis, &p) in a.iter().enumerate() {
                        if p % 2 == 1 && t.nyquist[m][axis] {
                            return 0.0;
                        }
                        f *= t.kvec[m][axis].powi(2 * p as i32);
                    }
                    f
                })
                .sum()
        })
        .collect()
}

/// `‖z‖_{H^N}` of one vector field via Parseval.
pub fn hn_norm_field(z: &VectorField, order: u32, norm: DerivativeNorm) -> f64 {
    let domain = z.domain();
    let w = sobolev_weights(domain, order, norm);
    let scale = domain.cell_volume() / domain.len() as f64;
    let total: f64 = z
        .components()
        .iter()
        .map(|c| {
            spectral::forward(domain, c.values())
                .iter()
                .zip(&w)
                .map(|(h, w)| h.norm_sqr() * w)
                .sum::<f64>()
        })
        .sum();
    (total * scale).sqrt()
}

/// `(‖z+‖_{H^N}, ‖z-‖_{H^N})` under the Frobenius convention.
pub fn hn_norm(state: &FieldState, order: u32) -> (f64, f64) {
    hn_norm_with(state, order, DerivativeNorm::Frobenius)
}

pub fn hn_norm_with(state: &FieldState, order: u32, norm: DerivativeNorm) -> (f64, f64) {
    (
        hn_norm_field(&state.zp, order, norm),
        hn_norm_field(&state.zm, order, norm),
    )
}

/// Raises `BlowUp` once either H^N norm passes `BLOW_UP_FACTOR` times its reference.
pub fn blow_up_guard(state: &FieldState, order: u32, reference: (f64, f64)) -> Result<()> {
    let (p, m) = hn_norm(state, order);
    for (now, start, name) in [(p, reference.0, "z+"), (m, reference.1, "z-")] {
        if !now.is_finite() || (start > 0.0 && now > BLOW_UP_FACTOR * start) {
            return Err(Error::BlowUp {
                t: state.t,
                detail: format!("{name} H^{order} norm {now:e} from {start:e}"),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{leray_project, make_domain};
    use std::f64::consts::PI;

    fn dom() -> DomainSpec {
        make_domain(2, 1, 16.0 * PI, 128).unwrap()
    }

    fn bump(domain: &DomainSpec, centre: f64, amp: f64) -> VectorField {
        // curl of a localized stream function
        let psi = ScalarField::from_fn(domain, |x| {
            amp * (-(x[0] - centre).powi(2) / 2.0).exp() * (1.0 + 0.5 * x[1].sin())
        });
        VectorField::new(vec![grid::derivative(&psi, 1, 1), grid::derivative(&psi, 0, 1).scale(-1.0)]).unwrap()
    }

    #[test]
    fn equilibrium_maps_to_origin() {
        let d = dom();
        let v = VectorField::zeros(&d);
        let b = unit_b0(&d);
        let (zp, zm) = elsasser_from_vb(&v, &b).unwrap();
        assert_eq!(zp.max_norm(), 0.0);
        assert_eq!(zm.max_norm(), 0.0);
        let (v2, b2) = vb_from_elsasser(&zp, &zm).unwrap();
        assert_eq!(v2.max_norm(), 0.0);
        assert_eq!(b2.sub(&unit_b0(&d)).max_norm(), 0.0);
    }

    #[test]
    fn opposite_fluctuations_are_magnetic() {
        let d = dom();
        let w = bump(&d, 0.0, 0.3);
        let (v, b) = vb_from_elsasser(&w, &w.scale(-1.0)).unwrap();
        assert!(v.max_norm() < 1e-15);
        assert!(b.sub(&unit_b0(&d)).sub(&w).max_norm() < 1e-15);
        let (v, b) = vb_from_elsasser(&w, &w).unwrap();
        assert!(v.sub(&w).max_norm() < 1e-15);
        assert!(b.sub(&unit_b0(&d)).max_norm() < 1e-15);
    }

    #[test]
    fn pressure_single_mode_oracle() {
        // only z+^1 z-^2 = sin x1 sin x2 is nonzero, so -Δp = cos x1 cos x2
        // and the single active mode gives p = cos x1 cos x2 / 2
        let d = DomainSpec::new(2, 1, vec![2.0 * PI, 2.0 * PI], vec![32, 32]).unwrap();
        let zp = VectorField::new(vec![ScalarField::from_fn(&d, |x| x[1].sin()), ScalarField::zeros(&d)]).unwrap();
        let zm = VectorField::new(vec![ScalarField::zeros(&d), ScalarField::from_fn(&d, |x| x[0].sin())]).unwrap();
        let p = pressure(&zp, &zm).unwrap().p;
        let exact = ScalarField::from_fn(&d, |x| 0.5 * x[0].cos() * x[1].cos());
        assert!(p.sub(&exact).max_abs() < 1e-12);
        assert!(p.integral().abs() < 1e-12);
    }

    #[test]
    fn pressure_structural_zeros() {
        let d = dom();
        let zp = bump(&d, 1.0, 0.2);
        assert_eq!(pressure(&zp, &VectorField::zeros(&d)).unwrap().p.max_abs(), 0.0);
        let f = VectorField::new(vec![ScalarField::from_fn(&d, |x| x[1].sin()), ScalarField::zeros(&d)]).unwrap();
        let g = VectorField::new(vec![ScalarField::from_fn(&d, |x| (2.0 * x[1]).cos()), ScalarField::zeros(&d)]).unwrap();
        assert!(pressure(&f, &g).unwrap().p.max_abs() < 1e-13);
    }

    #[test]
    fn rhs_linear_cases() {
        let d = dom();
        let zero = FieldState::zero(&d, 0.1);
        let (a, b) = rhs(&zero);
        assert_eq!(a.max_norm() + b.max_norm(), 0.0);

        let zp = bump(&d, 0.0, 0.5);
        let state = FieldState::new(0.0, zp.clone(), VectorField::zeros(&d), 0.0).unwrap();
        let (dzp, dzm) = rhs(&state);
        let exact = VectorField::new(zp.components().iter().map(|c| grid::derivative(c, 0, 1)).collect()).unwrap();
        assert!(dzp.sub(&exact).max_norm() < 1e-12 * exact.max_norm());
        assert_eq!(dzm.max_norm(), 0.0);
    }

    #[test]
    fn rhs_energy_identity() {
        // d/dt (‖z+‖² + ‖z-‖²) = -2μ(‖∇z+‖² + ‖∇z-‖²): transport and coupling drop out
        let d = dom();
        let zp = bump(&d, 1.0, 0.4);
        let zm = bump(&d, -1.0, 0.3);
        let mu = 0.07;
        let state = FieldState::new(0.0, zp.clone(), zm.clone(), mu).unwrap();
        let (dzp, dzm) = rhs(&state);
        let inner = |a: &VectorField, b: &VectorField| -> f64 {
            a.components().iter().zip(b.components()).map(|(x, y)| x.inner(y)).sum()
        };
        let rate = 2.0 * (inner(&zp, &dzp) + inner(&zm, &dzm));
        let grad_sq = |z: &VectorField| -> f64 {
            z.components()
                .iter()
                .flat_map(|c| (0..2).map(move |a| grid::derivative(c, a, 1).l2_norm().powi(2)))
                .sum()
        };
        let expected = -2.0 * mu * (grad_sq(&zp) + grad_sq(&zm));
        assert!((rate - expected).abs() < 1e-8 * expected.abs());
    }

    #[test]
    fn zero_state_only_advances_time() {
        let d = dom();
        let s = step(&FieldState::zero(&d, 0.1), 0.01).unwrap();
        assert_eq!(s.zp.max_norm() + s.zm.max_norm(), 0.0);
        assert!((s.t - 0.01).abs() < 1e-15);
    }

    #[test]
    fn step_rejects_cfl_violation() {
        let d = dom();
        let s = FieldState::zero(&d, 0.0);
        assert!(matches!(step(&s, 1.0), Err(Error::Cfl { .. })));
    }

    #[test]
    fn alfven_wave_is_exact() {
        let d = dom();
        let zp = bump(&d, 2.0, 0.8);
        let mu = 0.1;
        let state = FieldState::new(0.0, zp.clone(), VectorField::zeros(&d), mu).unwrap();
        let out = advance(&state, 1.0, 0.05, StepOptions::default()).unwrap();
        let exact = drift_diffuse_vector(&zp, 1.0, mu, 1.0);
        assert!(out.zp.sub(&exact).l2_norm() <= 1e-10 * exact.l2_norm());
    }

    #[test]
    fn heun_converges_at_second_order() {
        let d = make_domain(2, 1, 8.0 * PI, 64).unwrap();
        let zp = bump(&d, 1.5, 1.5);
        let zm = bump(&d, -1.5, 1.5);
        let s0 = FieldState::new(0.0, zp, zm, 0.05).unwrap();
        let t_end = 0.8;
        let run = |dt: f64| advance(&s0, t_end, dt, StepOptions::default()).unwrap();
        let reference = run(0.04 / 8.0);
        let err = |s: &FieldState| s.zp.sub(&reference.zp).l2_norm() + s.zm.sub(&reference.zm).l2_norm();
        let e1 = err(&run(0.04));
        let e2 = err(&run(0.02));
        let ratio = e1 / e2;
        assert!(ratio > 3.0 && ratio < 5.5, "ratio {ratio}");
    }

    #[test]
    fn hn_norm_single_mode() {
        let d = dom();
        let z = VectorField::new(vec![ScalarField::from_fn(&d, |x| x[1].sin()), ScalarField::zeros(&d)]).unwrap();
        let s = FieldState::new(0.0, z, VectorField::zeros(&d), 0.0).unwrap();
        let (p, m) = hn_norm(&s, 1);
        // ‖sin‖² = V/2 and ‖∂2 sin‖² = V/2
        let expected = d.volume().sqrt();
        assert!((p - expected).abs() < 1e-12 * expected);
        assert_eq!(m, 0.0);
        let (p2, _) = hn_norm(&s.scaled(-3.0), 1);
        assert!((p2 - 3.0 * p).abs() < 1e-12 * p);
    }

    #[test]
    fn projected_bump_is_accepted() {
        let d = dom();
        let raw = VectorField::new(vec![
            ScalarField::from_fn(&d, |x| (-(x[0] * x[0])).exp()),
            ScalarField::zeros(&d),
        ])
        .unwrap();
        assert!(FieldState::new(0.0, raw.clone(), VectorField::zeros(&d), 0.0).is_err());
        let projected = leray_project(&raw);
        assert!(FieldState::new(0.0, projected, VectorField::zeros(&d), 0.0).is_ok());
    }
}
