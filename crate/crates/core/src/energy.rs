//! Local energy densities, the J functional, the forcing F and the covering inequality.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, DerivativeNorm, DomainSpec, ScalarField, Stencil, VectorField};
use crate::solver::{self, FieldState};
use crate::spectral;

/// Outer radius of the cutoff support.
pub const CUTOFF_RADIUS: f64 = 2.0;
/// Closed-form constant in `|θ'|² ≤ C θ` for the cosine-squared ramp.
pub const C_THETA: f64 = PI * PI;

/// Cutoff: 1 on [0,1], cos²(π(r-1)/2) on [1,2], 0 beyond.
pub fn theta(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        (0.5 * PI * (r - 1.0)).cos().powi(2)
    }
}

pub fn theta_prime(r: f64) -> f64 {
    if r <= 1.0 || r >= 2.0 {
        0.0
    } else {
        -0.5 * PI * (PI * (r - 1.0)).sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffProfile {
    pub c_theta: f64,
}

impl Default for CutoffProfile {
    fn default() -> Self {
        CutoffProfile { c_theta: C_THETA }
    }
}

impl CutoffProfile {
    pub fn eval(&self, r: f64) -> f64 {
        theta(r)
    }

    /// Smallest `C` with `|θ'(r)|² ≤ C θ(r)` over a sample of [0, 2] with spacing `step`.
    pub fn measure_c_theta(step: f64) -> f64 {
        let count = (CUTOFF_RADIUS / step).ceil() as usize;
        (0..=count)
            .map(|i| i as f64 * step)
            .filter(|&r| theta(r) > 0.0)
            .map(|r| theta_prime(r).powi(2) / theta(r))
            .fold(0.0, f64::max)
    }

    pub fn stencil(&self, domain: &DomainSpec) -> Result<Stencil> {
        Stencil::radial(domain, CUTOFF_RADIUS, theta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDensity {
    pub rho_p: ScalarField,
    pub rho_m: ScalarField,
    pub order: u32,
    pub norm: DerivativeNorm,
}

/// Spectral derivatives `∂^a c` of every component for every multi-index of order `j`,
/// returned as `(weight, field)` pairs.
fn derivative_family(z: &VectorField, hats: &[Vec<Complex64>], j: u32, norm: DerivativeNorm) -> Vec<(f64, Vec<f64>)> {
    let domain = z.domain();
    let indices = grid::multi_indices(domain.dim(), j, norm);
    let jobs: Vec<(usize, &(Vec<u32>, f64))> = (0..hats.len())
        .flat_map(|c| indices.iter().map(move |ix| (c, ix)))
        .collect();
    jobs.par_iter()
        .map(|(c, (a, w))| {
            let h = grid::apply_partial(domain, hats[*c].clone(), a);
            (*w, spectral::inverse(domain, h))
        })
        .collect()
}

/// `|∇^j z|²` pointwise for each `j = 0..=order`.
pub fn level_energies(z: &VectorField, order: u32, norm: DerivativeNorm) -> Vec<ScalarField> {
    let domain = z.domain();
    let hats: Vec<Vec<Complex64>> = z
        .components()
        .par_iter()
        .map(|c| spectral::forward(domain, c.values()))
        .collect();
    (0..=order)
        .map(|j| {
            let mut acc = vec![0.0; domain.len()];
            for (w, f) in derivative_family(z, &hats, j, norm) {
                for (a, v) in acc.iter_mut().zip(&f) {
                    *a += w * v * v;
                }
            }
            ScalarField::from_parts(domain.clone(), acc)
        })
        .collect()
}

/// `Σ_{j≤N} |∇^j z|²` pointwise.
pub fn derivative_energy(z: &VectorField, order: u32, norm: DerivativeNorm) -> ScalarField {
    let levels = level_energies(z, order, norm);
    let mut total = ScalarField::zeros(z.domain());
    for l in &levels {
        total.add_assign_scaled(l, 1.0);
    }
    total
}

/// Same as `level_energies` for the gradient of a scalar: `|∇^(j+1) p|²` for `j = 0..=order`.
pub fn scalar_gradient_levels(p: &ScalarField, order: u32, norm: DerivativeNorm) -> Vec<ScalarField> {
    let domain = p.domain();
    let hat = spectral::forward(domain, p.values());
    (1..=order + 1)
        .map(|j| {
            let indices = grid::multi_indices(domain.dim(), j, norm);
            let fields: Vec<(f64, Vec<f64>)> = indices
                .par_iter()
                .map(|(a, w)| (*w, spectral::inverse(domain, grid::apply_partial(domain, hat.clone(), a))))
                .collect();
            let mut acc = vec![0.0; domain.len()];
            for (w, f) in fields {
                for (a, v) in acc.iter_mut().zip(&f) {
                    *a += w * v * v;
                }
            }
            ScalarField::from_parts(domain.clone(), acc)
        })
        .collect()
}

/// `ρ(X) = (Σ_Y θ(|X-Y|) E(Y) dV)^(1/2)` for one field.
pub fn rho_of(z: &VectorField, order: u32, norm: DerivativeNorm, cutoff: &Stencil) -> ScalarField {
    let e = derivative_energy(z, order, norm);
    cutoff.apply(&e).map(|v| v.max(0.0).sqrt())
}

pub fn rho(state: &FieldState, order: u32) -> Result<EnergyDensity> {
    rho_with(state, order, DerivativeNorm::Frobenius, &CutoffProfile::default())
}

pub fn rho_with(state: &FieldState, order: u32, norm: DerivativeNorm, cutoff: &CutoffProfile) -> Result<EnergyDensity> {
    let stencil = cutoff.stencil(state.domain())?;
    Ok(EnergyDensity {
        rho_p: rho_of(&state.zp, order, norm, &stencil),
        rho_m: rho_of(&state.zm, order, norm, &stencil),
        order,
        norm,
    })
}

/// Transverse maximum of `rho` integrated along axis 0.
pub fn j_of(rho: &ScalarField) -> f64 {
    let h = rho.domain().spacing(0);
    rho.transverse_max().iter().sum::<f64>() * h
}

pub fn j_functional(density: &EnergyDensity) -> (f64, f64) {
    (j_of(&density.rho_p), j_of(&density.rho_m))
}

/// Shared ball stencils of radii 2, 3 and 1/2.
#[derive(Debug, Clone)]
pub struct Balls {
    pub r2: Stencil,
    pub r3: Stencil,
    pub half: Stencil,
}

impl Balls {
    pub fn new(domain: &DomainSpec) -> Result<Self> {
        Ok(Balls {
            r2: Stencil::ball(domain, 2.0)?,
            r3: Stencil::ball(domain, 3.0)?,
            half: Stencil::ball(domain, 0.5)?,
        })
    }
}

/// `‖g‖_{L²(B(X,r))}` for every grid point `X`, given `g²`.
fn ball_norm(ball: &Stencil, squared: &ScalarField) -> ScalarField {
    ball.apply(squared).map(|v| v.max(0.0).sqrt())
}

/// The forcing `F(X)` built from bilinear derivative products and pressure gradients
/// on balls of radius 2.
pub fn f_direct(state: &FieldState, order: u32) -> Result<ScalarField> {
    f_direct_with(state, order, DerivativeNorm::Frobenius, &Stencil::ball(state.domain(), 2.0)?)
}

pub fn f_direct_with(state: &FieldState, order: u32, norm: DerivativeNorm, ball2: &Stencil) -> Result<ScalarField> {
    let domain = state.domain();
    let lp = level_energies(&state.zp, order, norm);
    let lm = level_energies(&state.zm, order, norm);
    let p = solver::pressure(&state.zp, &state.zm)?.p;
    let lpress = scalar_gradient_levels(&p, order, norm);

    let n = order as usize;
    let mut squared: Vec<ScalarField> = Vec::new();
    for k in 0..=n {
        for j in 0..=n {
            if k + j <= n + 1 {
                squared.push(lp[k].mul(&lm[j]));
            }
        }
    }
    squared.extend(lpress);
    let parts: Vec<ScalarField> = squared.par_iter().map(|s| ball_norm(ball2, s)).collect();
    let mut total = ScalarField::zeros(domain);
    for part in &parts {
        total.add_assign_scaled(part, 1.0);
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct CoveringReport {
    pub lhs: ScalarField,
    pub rhs: ScalarField,
    pub c_measured: f64,
    /// Proof constant `2^d / ω_d`.
    pub bound: f64,
}

/// Compares `‖f‖_{L²(B(X,2))}` with `∫_{B(X,3)} ‖f‖_{L²(B(Y,1/2))} dY`.
pub fn covering_check(f: &ScalarField) -> Result<CoveringReport> {
    let balls = Balls::new(f.domain())?;
    Ok(covering_check_with(f, &balls))
}

pub fn covering_check_with(f: &ScalarField, balls: &Balls) -> CoveringReport {
    let d = f.domain().dim();
    let sq = f.mul(f);
    let lhs = ball_norm(&balls.r2, &sq);
    let inner = ball_norm(&balls.half, &sq);
    let rhs = balls.r3.apply(&inner);
    let c_measured = lhs
        .values()
        .iter()
        .zip(rhs.values())
        .filter(|(_, &r)| r > 1e-14)
        .map(|(l, r)| l / r)
        .fold(0.0, f64::max);
    CoveringReport {
        lhs,
        rhs,
        c_measured,
        bound: 2f64.powi(d as i32) / grid::unit_ball_volume(d),
    }
}

/// `‖z‖_{H^N(B(X,r))}` at one grid point by direct summation, used to bracket ρ.
pub fn local_hn(z: &VectorField, order: u32, norm: DerivativeNorm, flat: usize, radius: f64) -> Result<f64> {
    let domain = z.domain();
    if 2.0 * radius >= domain.length(0) {
        return Err(Error::InvalidArgument("radius too large for the box".into()));
    }
    let e = derivative_energy(z, order, norm);
    let centre = domain.position(flat);
    let mut acc = 0.0;
    for (i, v) in e.values().iter().enumerate() {
        let x = domain.position(i);
        let mut r2 = 0.0;
        for a in 0..domain.dim() {
            let l = domain.length(a);
            let mut dx = x[a] - centre[a];
            dx -= l * (dx / l).round();
            r2 += dx * dx;
        }
        if r2.sqrt() <= radius * (1.0 + 1e-12) {
            acc += v;
        }
    }
    Ok((acc * domain.cell_volume()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_domain;

    fn dom() -> DomainSpec {
        make_domain(2, 1, 8.0 * PI, 128).unwrap()
    }

    fn bump(domain: &DomainSpec, centre: f64, amp: f64) -> VectorField {
        let psi = ScalarField::from_fn(domain, |x| {
            amp * (-(x[0] - centre).powi(2) / 2.0).exp() * (1.0 + 0.5 * x[1].cos())
        });
        VectorField::new(vec![grid::derivative(&psi, 1, 1), grid::derivative(&psi, 0, 1).scale(-1.0)]).unwrap()
    }

    #[test]
    fn theta_examples() {
        assert_eq!(theta(0.5), 1.0);
        assert_eq!(theta(2.5), 0.0);
        assert!((theta(1.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn theta_derivative_bound() {
        let c = CutoffProfile::measure_c_theta(1e-4);
        assert!(c <= C_THETA * (1.0 + 1e-12));
        // the sup of π² cos² ... is approached near r = 2
        assert!(c > 0.99 * C_THETA);
        for i in 0..20_000 {
            let r = i as f64 * 1e-4;
            assert!(theta_prime(r).powi(2) <= C_THETA * theta(r) + 1e-15);
        }
    }

    #[test]
    fn rho_zero_and_homogeneous() {
        let d = dom();
        let zero = FieldState::zero(&d, 0.0);
        let r = rho(&zero, 3).unwrap();
        assert_eq!(r.rho_p.max_abs() + r.rho_m.max_abs(), 0.0);

        let s = FieldState::new(0.0, bump(&d, 0.0, 0.3), bump(&d, 1.0, 0.2), 0.0).unwrap();
        let a = rho(&s, 3).unwrap();
        let b = rho(&s.scaled(-2.5), 3).unwrap();
        let diff = b.rho_p.sub(&a.rho_p.scale(2.5)).max_abs();
        assert!(diff <= 1e-12 * a.rho_p.max_abs());
    }

    #[test]
    fn rho_matches_direct_quadrature() {
        let d = dom();
        let z = bump(&d, 0.5, 0.4);
        let s = FieldState::new(0.0, z.clone(), VectorField::zeros(&d), 0.0).unwrap();
        let r = rho(&s, 2).unwrap();
        let e = derivative_energy(&z, 2, DerivativeNorm::Frobenius);
        for &flat in &[0usize, 17, 300, 4100, 5555, 8191, 9000, 12000, 15000, 16383] {
            let flat = flat % d.len();
            let x = d.position(flat);
            let mut acc = 0.0;
            for (i, v) in e.values().iter().enumerate() {
                let y = d.position(i);
                let mut r2 = 0.0;
                for a in 0..2 {
                    let l = d.length(a);
                    let mut dx = x[a] - y[a];
                    dx -= l * (dx / l).round();
                    r2 += dx * dx;
                }
                acc += v * theta(r2.sqrt());
            }
            let direct = (acc * d.cell_volume()).sqrt();
            assert!((direct - r.rho_p.values()[flat]).abs() <= 1e-10 * direct.max(1e-300));
        }
    }

    #[test]
    fn rho_sandwich_and_monotone_in_order() {
        let d = dom();
        let z = bump(&d, -0.5, 0.4);
        let s = FieldState::new(0.0, z.clone(), VectorField::zeros(&d), 0.0).unwrap();
        let r2 = rho(&s, 2).unwrap().rho_p;
        let r3 = rho(&s, 3).unwrap().rho_p;
        for (a, b) in r2.values().iter().zip(r3.values()) {
            assert!(b >= a);
        }
        for flat in [d.flat_index(&[64, 3]), d.flat_index(&[60, 10]), d.flat_index(&[70, 0])] {
            let inner = local_hn(&z, 3, DerivativeNorm::Frobenius, flat, 1.0).unwrap();
            let outer = local_hn(&z, 3, DerivativeNorm::Frobenius, flat, 2.0).unwrap();
            let v = r3.values()[flat];
            assert!(inner <= v * (1.0 + 1e-12) && v <= outer * (1.0 + 1e-12));
        }
    }

    #[test]
    fn rho_l2_mass_identity() {
        // Σ_X ρ² dV = (grid mass of θ) · ‖z‖²_{H^N}
        let d = dom();
        let z = bump(&d, 0.0, 0.5);
        let s = FieldState::new(0.0, z, VectorField::zeros(&d), 0.0).unwrap();
        let r = rho(&s, 3).unwrap().rho_p;
        let mass = CutoffProfile::default().stencil(&d).unwrap().mass();
        let hn = solver::hn_norm(&s, 3).0;
        let lhs = r.l2_norm().powi(2);
        assert!((lhs - mass * hn * hn).abs() <= 1e-10 * lhs);
    }

    #[test]
    fn j_examples() {
        let d = dom();
        assert_eq!(j_of(&ScalarField::zeros(&d)), 0.0);
        let a = |x: f64| (-(x * x) / 3.0).exp();
        let b = |y: f64| 1.5 + y.sin();
        let f = ScalarField::from_fn(&d, |x| a(x[0]) * b(x[1]));
        let bmax = d.coords(1).iter().map(|&y| b(y)).fold(f64::MIN, f64::max);
        let sum_a: f64 = d.coords(0).iter().map(|&x| a(x)).sum::<f64>() * d.spacing(0);
        assert!((j_of(&f) - bmax * sum_a).abs() < 1e-12 * bmax * sum_a);
    }

    #[test]
    fn f_vanishes_without_z_minus() {
        let d = dom();
        let s = FieldState::new(0.0, bump(&d, 0.0, 0.3), VectorField::zeros(&d), 0.0).unwrap();
        assert_eq!(f_direct(&s, 3).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn f_is_homogeneous_in_z_plus() {
        let d = dom();
        let s = FieldState::new(0.0, bump(&d, 0.5, 0.3), bump(&d, -0.5, 0.2), 0.0).unwrap();
        let f1 = f_direct(&s, 2).unwrap();
        let mut s2 = s.clone();
        s2.zp = s.zp.scale(3.0);
        let f2 = f_direct(&s2, 2).unwrap();
        assert!(f2.sub(&f1.scale(3.0)).max_abs() <= 1e-10 * f2.max_abs());
    }

    #[test]
    fn covering_constant_fields() {
        let d = dom();
        let zero = covering_check(&ScalarField::zeros(&d)).unwrap();
        assert_eq!(zero.lhs.max_abs() + zero.rhs.max_abs(), 0.0);
        assert_eq!(zero.c_measured, 0.0);

        let one = covering_check(&ScalarField::constant(&d, 1.0)).unwrap();
        let balls = Balls::new(&d).unwrap();
        let lhs = balls.r2.mass().sqrt();
        let rhs = balls.r3.mass() * balls.half.mass().sqrt();
        assert!((one.c_measured - lhs / rhs).abs() < 1e-12);
        // continuum value sqrt(4π) / (9π sqrt(π/4))
        let continuum = (4.0 * PI).sqrt() / (9.0 * PI * (PI / 4.0).sqrt());
        assert!((one.c_measured / continuum - 1.0).abs() < 0.1);
        assert!(one.c_measured <= one.bound);
    }
}
