//! Initial-data families.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::energy::{j_functional, rho, rho_with, CutoffProfile, EnergyDensity};
use crate::error::{Error, Result};
use crate::grid::{derivative, leray_project, DerivativeNorm, DomainSpec, ScalarField, VectorField};
use crate::kernel::ConstantsLedger;
use crate::solver::FieldState;

/// Envelope variance; the heat flow keeps the profile Gaussian with width² = 2(1 + μt).
pub const GAUSSIAN_VARIANCE: f64 = 2.0;
/// Fraction of the target threshold used by `auto_rescale`.
pub const RESCALE_FRACTION: f64 = 0.9;
/// Radii (from the packet centre) where the algebraic envelopes are checked.
pub const ENVELOPE_RADII: [f64; 3] = [4.0, 8.0, 16.0];
pub const ENVELOPE_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum Family {
    /// Gaussian packets for both Elsässer fields, set up to collide.
    GaussianBump,
    /// Algebraic decay `((1 + ⟨x⟩)/2)^{-δ}`, `⟨x⟩ = (1 + |x|²)^{1/2}`.
    ClPower { delta: f64 },
    /// Logarithmically corrected decay `(R² + |x|²)^{-1/2} ln(R² + |x|²)^{-2}`.
    HxyLog { big_r: f64 },
    /// A single Gaussian `z+` packet with `z- = 0`.
    AlfvenLinear,
}

impl Family {
    /// Envelope as a function of the distance to the packet centre, normalized to 1 at 0.
    pub fn envelope(&self, r: f64) -> f64 {
        match *self {
            Family::GaussianBump | Family::AlfvenLinear => (-r * r / (2.0 * GAUSSIAN_VARIANCE)).exp(),
            Family::ClPower { delta } => (0.5 * (1.0 + (1.0 + r * r).sqrt())).powf(-delta),
            Family::HxyLog { big_r } => {
                let f = |s: f64| {
                    let q = big_r * big_r + s * s;
                    q.powf(-0.5) * q.ln().powi(-2)
                };
                f(r) / f(0.0)
            }
        }
    }

    fn windowed(&self) -> bool {
        matches!(self, Family::ClPower { .. } | Family::HxyLog { .. })
    }

    /// Expected decay of `ρ` along the axis, when the family prescribes one.
    pub fn profile(&self, r: f64) -> Option<f64> {
        match *self {
            Family::ClPower { delta } => Some((1.0 + r).powf(-delta)),
            Family::HxyLog { .. } => Some(self.envelope(r)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(flatten)]
    pub family: Family,
    pub amplitude: f64,
    /// Packets start at `x1 = ±separation`: `z+` on the right, `z-` on the left.
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Weight of the rotational part `∇⊥(e·cos(x_T + φ))`.
    #[serde(default = "default_vortical")]
    pub vortical_weight: f64,
    /// Weight of the shear part `e(x_R)` along the first torus axis.
    #[serde(default = "default_shear")]
    pub shear_weight: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_separation() -> f64 {
    4.0
}

fn default_vortical() -> f64 {
    0.5
}

fn default_shear() -> f64 {
    1.0
}

impl DataSpec {
    pub fn new(family: Family, amplitude: f64) -> Self {
        DataSpec {
            family,
            amplitude,
            separation: default_separation(),
            vortical_weight: default_vortical(),
            shear_weight: default_shear(),
            seed: 0,
        }
    }
}

/// Smooth cutoff equal to 1 for `s ≤ 0.35` and 0 for `s ≥ 0.45` (`s = |x_R|/L`).
fn window(s: f64) -> f64 {
    let (a, b) = (0.35, 0.45);
    if s <= a {
        return 1.0;
    }
    if s >= b {
        return 0.0;
    }
    let u = (s - a) / (b - a);
    let bump = |v: f64| if v <= 0.0 { 0.0 } else { (-1.0 / v).exp() };
    bump(1.0 - u) / (bump(1.0 - u) + bump(u))
}

/// One divergence-free packet centred at `x1 = centre`.
pub fn packet(domain: &DomainSpec, spec: &DataSpec, centre: f64, phase: f64) -> Result<VectorField> {
    let d = domain.dim();
    let k = domain.unbounded_axes();
    let length = domain.length(0);
    let family = spec.family;
    let envelope = ScalarField::from_fn(domain, |x| {
        let r2: f64 = (0..k)
            .map(|a| if a == 0 { (x[0] - centre).powi(2) } else { x[a] * x[a] })
            .sum();
        let mut e = family.envelope(r2.sqrt());
        if family.windowed() {
            let abs: f64 = x[..k].iter().map(|v| v * v).sum::<f64>().sqrt();
            e *= window(abs / length);
        }
        e
    });
    let last = d - 1;
    let psi = if k < d {
        let carrier = ScalarField::from_fn(domain, |x| (x[last] + phase).cos());
        envelope.mul(&carrier)
    } else {
        envelope.clone()
    };
    let mut comps = vec![ScalarField::zeros(domain); d];
    // rotational part: (∂2ψ, -∂1ψ) in the (x1, x2) plane
    let d1 = derivative(&psi, 0, 1);
    let d2 = derivative(&psi, 1, 1);
    comps[0].add_assign_scaled(&d2, spec.vortical_weight);
    comps[1].add_assign_scaled(&d1, -spec.vortical_weight);
    if k < d {
        comps[k].add_assign_scaled(&envelope, spec.shear_weight);
    }
    let z = VectorField::new(comps)?;
    Ok(leray_project(&z).scale(spec.amplitude))
}

/// Initial Elsässer state for `spec`. Algebraic families are rejected when the
/// order-`order` density `ρ+` misses the family's envelope.
pub fn generate(domain: &DomainSpec, spec: &DataSpec, mu: f64, order: u32) -> Result<FieldState> {
    if !(spec.amplitude.is_finite() && spec.amplitude >= 0.0) {
        return Err(Error::InvalidArgument(format!("amplitude {} must be non-negative", spec.amplitude)));
    }
    if let Family::HxyLog { big_r } = spec.family {
        if big_r < 100.0 {
            return Err(Error::InvalidArgument(format!("hxy_log needs R >= 100, got {big_r}")));
        }
    }
    if let Family::ClPower { delta } = spec.family {
        if !(delta > 1.0) {
            return Err(Error::InvalidArgument(format!("cl_power needs delta > 1, got {delta}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let phase_p = rng.gen_range(0.0..2.0 * PI);
    let phase_m = rng.gen_range(0.0..2.0 * PI);
    let (zp, zm) = match spec.family {
        Family::AlfvenLinear => (packet(domain, spec, 0.0, phase_p)?, VectorField::zeros(domain)),
        _ => (
            packet(domain, spec, spec.separation, phase_p)?,
            packet(domain, spec, -spec.separation, phase_m)?,
        ),
    };
    let state = FieldState::new(0.0, zp, zm, mu)?;
    if spec.amplitude > 0.0 {
        if let Some(report) = envelope_check(&rho(&state, order)?, spec) {
            if !report.ok {
                return Err(Error::InvalidArgument(format!(
                    "envelope of rho+ deviates from the {:?} profile by a factor {:.3} (> {ENVELOPE_FACTOR})",
                    spec.family, report.spread
                )));
            }
        }
    }
    Ok(state)
}

/// Rescales `state` so that `max(J+, J-) = 0.9 ε1`; returns the factor used.
pub fn auto_rescale(state: &FieldState, ledger: &ConstantsLedger, order: u32, norm: DerivativeNorm) -> Result<(FieldState, f64)> {
    let density = rho_with(state, order, norm, &CutoffProfile::default())?;
    let (jp, jm) = j_functional(&density);
    let j = jp.max(jm);
    if j == 0.0 {
        return Ok((state.clone(), 1.0));
    }
    let lambda = RESCALE_FRACTION * ledger.eps1.value / j;
    Ok((state.scaled(lambda), lambda))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    /// `ρ+(x)/profile(r)` at distance `r` from the packet centre, on the side
    /// facing the box centre, for each check radius.
    pub normalized: Vec<f64>,
    pub spread: f64,
    pub ok: bool,
}

/// Checks that `ρ+` along the `x1` axis through the `z+` centre follows the
/// family's profile within `ENVELOPE_FACTOR`.
pub fn envelope_check(density: &EnergyDensity, spec: &DataSpec) -> Option<EnvelopeReport> {
    let domain = density.rho_p.domain();
    let centre = match spec.family {
        Family::AlfvenLinear => 0.0,
        _ => spec.separation,
    };
    let mut through = vec![0.0; domain.dim()];
    through[0] = centre;
    let line = density.rho_p.axis_line(&through);
    let xs = domain.coords(0);
    let at = |x: f64| {
        let i = xs
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        (line[i], (xs[i] - centre).abs())
    };
    let mut normalized = Vec::new();
    let inward = if centre > 0.0 { -1.0 } else { 1.0 };
    for r in ENVELOPE_RADII {
        let (v, dist) = at(centre + inward * r);
        normalized.push(v / spec.family.profile(dist)?);
    }
    let hi = normalized.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = normalized.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = hi / lo;
    Some(EnvelopeReport {
        normalized,
        spread,
        ok: lo > 0.0 && spread <= ENVELOPE_FACTOR,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{boundary_guard, make_domain};

    #[test]
    fn window_shape() {
        assert_eq!(window(0.1), 1.0);
        assert_eq!(window(0.5), 0.0);
        assert!((window(0.4) - 0.5).abs() < 1e-12);
        let mut prev = 1.0;
        for i in 0..=100 {
            let w = window(0.35 + 0.001 * i as f64);
            assert!(w <= prev + 1e-15);
            prev = w;
        }
    }

    #[test]
    fn generated_data_is_solenoidal_and_guarded() {
        let d = make_domain(2, 1, 16.0 * PI, 128).unwrap();
        for family in [
            Family::GaussianBump,
            Family::ClPower { delta: 2.0 },
            Family::HxyLog { big_r: 100.0 },
            Family::AlfvenLinear,
        ] {
            let s = generate(&d, &DataSpec::new(family, 0.1), 0.1, 3).unwrap();
            assert!(s.zp.is_solenoidal() && s.zm.is_solenoidal());
            let mags = [s.zp.magnitude_sq(), s.zm.magnitude_sq()];
            assert!(boundary_guard(&[&mags[0], &mags[1]]).ok, "{family:?}");
            assert!(s.zp.max_norm() > 0.0);
        }
    }

    #[test]
    fn alfven_linear_has_no_minus_field() {
        let d = make_domain(2, 1, 8.0 * PI, 64).unwrap();
        let s = generate(&d, &DataSpec::new(Family::AlfvenLinear, 1.0), 0.0, 3).unwrap();
        assert_eq!(s.zm.max_norm(), 0.0);
    }

    #[test]
    fn seeds_are_reproducible() {
        let d = make_domain(2, 1, 8.0 * PI, 64).unwrap();
        let mut spec = DataSpec::new(Family::GaussianBump, 1.0);
        spec.seed = 7;
        let a = generate(&d, &spec, 0.0, 3).unwrap();
        let b = generate(&d, &spec, 0.0, 3).unwrap();
        assert_eq!(a.zp, b.zp);
        spec.seed = 8;
        let c = generate(&d, &spec, 0.0, 3).unwrap();
        assert_ne!(a.zp, c.zp);
    }

    #[test]
    fn cl_power_envelope_follows_profile() {
        let d = make_domain(2, 1, 16.0 * PI, 256).unwrap();
        let spec = DataSpec::new(Family::ClPower { delta: 2.0 }, 1.0);
        let s = generate(&d, &spec, 0.0, 3).unwrap();
        let density = rho(&s, 3).unwrap();
        let report = envelope_check(&density, &spec).unwrap();
        assert!(report.ok, "{report:?}");
        assert!(envelope_check(&density, &DataSpec::new(Family::GaussianBump, 1.0)).is_none());
    }

    #[test]
    fn invalid_specs_rejected() {
        let d = make_domain(2, 1, 8.0 * PI, 64).unwrap();
        assert!(generate(&d, &DataSpec::new(Family::HxyLog { big_r: 10.0 }, 1.0), 0.0, 3).is_err());
        assert!(generate(&d, &DataSpec::new(Family::GaussianBump, -1.0), 0.0, 3).is_err());
        assert!(generate(&d, &DataSpec::new(Family::ClPower { delta: 1.0 }, 1.0), 0.0, 3).is_err());
    }

    #[test]
    fn zero_amplitude_gives_zero_state() {
        let d = make_domain(2, 1, 8.0 * PI, 64).unwrap();
        let s = generate(&d, &DataSpec::new(Family::ClPower { delta: 2.0 }, 0.0), 0.0, 3).unwrap();
        assert_eq!(s.zp.max_norm() + s.zm.max_norm(), 0.0);
    }
}
