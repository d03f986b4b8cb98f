//! Checks of the local energy inequality, the forcing estimate, comparison
//! ordering, H^N bounds and decay rates along computed trajectories.

use serde::{Deserialize, Serialize};

use crate::comparison::ComparisonBundle;
use crate::energy::{f_direct_with, rho_with, CutoffProfile, EnergyDensity};
use crate::error::{Error, Result};
use crate::grid::{derivative, laplacian, DerivativeNorm, ScalarField, Stencil, VectorField};
use crate::kernel::KernelSample;
use crate::solver::{hn_norm_with, FieldState};

/// Points where `F` is below this fraction of its maximum count as `F ≈ 0`.
pub const F_NEGLIGIBLE: f64 = 1e-12;
/// Multiplier applied to calibrated discretization errors.
pub const TOLERANCE_SAFETY: f64 = 4.0;
/// Tolerance for the comparison ordering when the solver runs without coupling.
pub const LINEAR_ORDERING_TOL: f64 = 1e-8;

/// `tol = (a h² + b Δt²) · scale`, with `scale` the sup of the compared quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceBudget {
    pub a: f64,
    pub b: f64,
}

impl ToleranceBudget {
    pub fn tol(&self, h: f64, dt: f64, scale: f64) -> f64 {
        (self.a * h * h + self.b * dt * dt) * scale
    }

    /// Budget reproducing `TOLERANCE_SAFETY` times an error `measured` observed at
    /// `(h, dt)` on a configuration with a known exact answer, split evenly between
    /// the spatial and temporal terms.
    pub fn calibrate(h: f64, dt: f64, measured: f64, scale: f64) -> Self {
        if scale <= 0.0 || measured <= 0.0 {
            return ToleranceBudget { a: 0.0, b: 0.0 };
        }
        let rel = TOLERANCE_SAFETY * measured / scale;
        ToleranceBudget {
            a: 0.5 * rel / (h * h),
            b: 0.5 * rel / (dt * dt),
        }
    }
}

/// `∂t ρ ∓ ∂1 ρ - μΔρ` for both signs, with `∂t` centred over `before`/`after`.
pub fn local_energy_lhs(before: &EnergyDensity, now: &EnergyDensity, after: &EnergyDensity, dt: f64, mu: f64) -> [ScalarField; 2] {
    let one = |b: &ScalarField, n: &ScalarField, a: &ScalarField, sign: f64| {
        a.sub(b)
            .scale(1.0 / (2.0 * dt))
            .sub(&derivative(n, 0, 1).scale(sign))
            .sub(&laplacian(n).scale(mu))
    };
    [
        one(&before.rho_p, &now.rho_p, &after.rho_p, 1.0),
        one(&before.rho_m, &now.rho_m, &after.rho_m, -1.0),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalEnergyReport {
    pub t: f64,
    /// Largest positive part of the left side.
    pub lhs_max: f64,
    pub f_max: f64,
    pub tol: f64,
    /// Smallest `C` with `LHS ≤ C F + tol` on the grid; `None` when some point
    /// with `F ≈ 0` exceeds the tolerance.
    pub c_measured: Option<f64>,
    /// `max(LHS - C1 (ρ+ρ-) * N1 - tol)` when `C1` and the kernel are supplied.
    pub violation: Option<f64>,
    /// Grid points where `LHS > tol` although `F ≈ 0`.
    pub flagged: usize,
}

/// Local energy inequality at the middle state of a centred triple. With
/// `combined = Some((C1, N1))` the combined form `LHS ≤ C1 (ρ+ρ-) * N1` is also checked.
pub fn check_local_energy(
    before: &FieldState,
    now: &FieldState,
    after: &FieldState,
    order: u32,
    norm: DerivativeNorm,
    tol: f64,
    combined: Option<(f64, &KernelSample)>,
) -> Result<LocalEnergyReport> {
    let dt = 0.5 * (after.t - before.t);
    if !(dt > 0.0) || ((now.t - before.t) - dt).abs() > 1e-9 * dt.max(1.0) {
        return Err(Error::InvalidArgument("local energy check needs a centred triple of states".into()));
    }
    let stencil = CutoffProfile::default().stencil(now.domain())?;
    let dens = |s: &FieldState| -> EnergyDensity {
        EnergyDensity {
            rho_p: crate::energy::rho_of(&s.zp, order, norm, &stencil),
            rho_m: crate::energy::rho_of(&s.zm, order, norm, &stencil),
            order,
            norm,
        }
    };
    let mid = dens(now);
    let lhs = local_energy_lhs(&dens(before), &mid, &dens(after), dt, now.mu);
    let combined_rhs = match combined {
        Some((c1, kernel)) => Some(kernel.convolve(&mid.rho_p.mul(&mid.rho_m))?.scale(c1)),
        None => None,
    };
    let f = f_direct_with(now, order, norm, &Stencil::ball(now.domain(), 2.0)?)?;
    let f_max = f.max();
    let negligible = F_NEGLIGIBLE * f_max;
    let mut c_measured: f64 = 0.0;
    let mut flagged = 0;
    let mut lhs_max: f64 = 0.0;
    let mut violation = combined_rhs.as_ref().map(|_| f64::NEG_INFINITY);
    for side in &lhs {
        for (i, (&l, &fv)) in side.values().iter().zip(f.values()).enumerate() {
            lhs_max = lhs_max.max(l);
            if l > tol {
                if fv <= negligible {
                    flagged += 1;
                } else {
                    c_measured = c_measured.max((l - tol) / fv);
                }
            }
            if let (Some(v), Some(r)) = (violation.as_mut(), combined_rhs.as_ref()) {
                *v = v.max(l - r.values()[i] - tol);
            }
        }
    }
    Ok(LocalEnergyReport {
        t: now.t,
        lhs_max,
        f_max,
        tol,
        c_measured: (flagged == 0).then_some(c_measured),
        violation,
        flagged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FEstimate {
    /// `max F / ((ρ+ρ-) * N1)`; `None` when `F > 0` where the denominator vanishes.
    pub c_f: Option<f64>,
    pub f_max: f64,
    pub denominator_max: f64,
}

/// Measures the constant in `F ≤ C_F (ρ+ρ-) * N1`.
pub fn check_f_estimate(state: &FieldState, order: u32, norm: DerivativeNorm, kernel: &KernelSample) -> Result<FEstimate> {
    let f = f_direct_with(state, order, norm, &Stencil::ball(state.domain(), 2.0)?)?;
    let dens = rho_with(state, order, norm, &CutoffProfile::default())?;
    let denominator = kernel.convolve(&dens.rho_p.mul(&dens.rho_m))?;
    let den_max = denominator.max();
    let floor = F_NEGLIGIBLE * den_max;
    let mut c_f = Some(0.0f64);
    for (&fv, &dv) in f.values().iter().zip(denominator.values()) {
        if fv > 0.0 {
            c_f = match c_f {
                Some(c) if dv > floor => Some(c.max(fv / dv)),
                _ => None,
            };
        }
    }
    Ok(FEstimate {
        c_f,
        f_max: f.max(),
        denominator_max: den_max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub t: f64,
    /// `max(ρ± - ρ±1)` over the grid and both signs.
    pub max_excess: f64,
    pub location: Vec<f64>,
    /// `max ρ±/ρ±1` over points where `ρ±1 > 0`.
    pub max_ratio: f64,
    pub tol: f64,
    pub ok: bool,
}

/// Checks `ρ±(t) ≤ ρ±1(t) + tol` on the field grid.
pub fn check_comparison(density: &EnergyDensity, bundle: &ComparisonBundle, tol: f64) -> OrderingReport {
    let domain = density.rho_p.domain();
    let upper = bundle.rho1_on(domain);
    let mut max_excess = f64::NEG_INFINITY;
    let mut location = Vec::new();
    let mut max_ratio: f64 = 0.0;
    for (r, u) in [&density.rho_p, &density.rho_m].into_iter().zip(&upper) {
        for (flat, (&a, &b)) in r.values().iter().zip(u.values()).enumerate() {
            if a - b > max_excess {
                max_excess = a - b;
                location = domain.position(flat);
            }
            if b > 0.0 {
                max_ratio = max_ratio.max(a / b);
            }
        }
    }
    OrderingReport {
        t: bundle.t,
        max_excess,
        location,
        max_ratio,
        tol,
        ok: max_excess <= tol,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HnChain {
    pub t: f64,
    pub hn: [f64; 2],
    /// `‖ρ±‖_{L²}` and `‖ρ±1‖_{L²}` on the field grid.
    pub rho_l2: [f64; 2],
    pub rho1_l2: [f64; 2],
    /// `C` in `‖z‖_{H^N} = C ‖ρ‖_{L²}`: `1/√(grid mass of θ)`.
    pub c: f64,
    pub ok: bool,
}

/// `‖z±‖_{H^N} ≤ C ‖ρ±‖_{L²} ≤ C ‖ρ±1‖_{L²}` with the measured cutoff constant.
pub fn hn_chain(state: &FieldState, density: &EnergyDensity, bundle: &ComparisonBundle) -> Result<HnChain> {
    let (hp, hm) = hn_norm_with(state, density.order, density.norm);
    let mass = CutoffProfile::default().stencil(state.domain())?.mass();
    let c = 1.0 / mass.sqrt();
    let upper = bundle.rho1_on(state.domain());
    let rho_l2 = [density.rho_p.l2_norm(), density.rho_m.l2_norm()];
    let rho1_l2 = [upper[0].l2_norm(), upper[1].l2_norm()];
    let hn = [hp, hm];
    let slack = 1e-9;
    let ok = (0..2).all(|i| hn[i] <= c * rho_l2[i] * (1.0 + slack) + 1e-300 && rho_l2[i] <= rho1_l2[i] * (1.0 + slack));
    Ok(HnChain {
        t: state.t,
        hn,
        rho_l2,
        rho1_l2,
        c,
        ok,
    })
}

/// `sup_t ‖z±(t)‖_{H^N} / ‖z±(0)‖_{H^N}`, with `0/0` read as 1.
pub fn check_hn_bound(series: &[(f64, [f64; 2])]) -> [f64; 2] {
    let mut out = [1.0, 1.0];
    let Some((_, start)) = series.first() else {
        return out;
    };
    for i in 0..2 {
        if start[i] == 0.0 {
            continue;
        }
        out[i] = series.iter().map(|(_, v)| v[i] / start[i]).fold(0.0, f64::max);
    }
    out
}

fn gradient_sup(z: &VectorField) -> f64 {
    let d = z.domain().dim();
    let mut sq = ScalarField::zeros(z.domain());
    for c in z.components() {
        for a in 0..d {
            let g = derivative(c, a, 1);
            sq = sq.add(&g.mul(&g));
        }
    }
    sq.max().max(0.0).sqrt()
}

/// `‖z‖_{W^{1,∞}} = sup|z| + sup|∇z|`.
pub fn w1inf(z: &VectorField) -> f64 {
    z.max_norm() + gradient_sup(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayQuantity {
    W1inf,
    Hn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub quantity: DecayQuantity,
    pub t_lo: f64,
    pub t_hi: f64,
    /// Decay exponent: minus the slope of `log q` against `log(1 + μt)`.
    pub alpha: f64,
    /// Standard error of `alpha` from the least-squares fit.
    pub stderr: f64,
    pub target: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
    pub samples: usize,
}

impl DecayFit {
    /// Approximate 95% interval `alpha ± 2·stderr`.
    pub fn interval(&self) -> (f64, f64) {
        (self.alpha - 2.0 * self.stderr, self.alpha + 2.0 * self.stderr)
    }
}

/// The fit window `[1/μ, min(t_end, t_sat)]`, `√(μ t_sat) = L/8`.
pub fn decay_window(mu: f64, box_length: f64, t_end: f64) -> Result<(f64, f64)> {
    if !(mu > 0.0) {
        return Err(Error::DecayRequiresViscosity);
    }
    let t_sat = (box_length / 8.0).powi(2) / mu;
    let lo = 1.0 / mu;
    let hi = t_end.min(t_sat);
    if !(hi > lo) {
        return Err(Error::Saturated(format!(
            "window [1/mu = {lo}, min(t_end, t_sat) = {hi}] is empty"
        )));
    }
    Ok((lo, hi))
}

/// Target exponents: `k/4` in general, `k/2` for `W^{1,∞}` with `ρ(0) ∈ L¹`.
pub fn decay_target(quantity: DecayQuantity, k: usize, l1_data: bool) -> f64 {
    match (quantity, l1_data) {
        (DecayQuantity::W1inf, true) => k as f64 / 2.0,
        _ => k as f64 / 4.0,
    }
}

/// Least-squares fit of `log q` against `log(1 + μt)` on the pre-set window.
pub fn fit_decay(
    series: &[(f64, f64)],
    quantity: DecayQuantity,
    mu: f64,
    k: usize,
    box_length: f64,
    l1_data: bool,
) -> Result<DecayFit> {
    let t_end = series.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = decay_window(mu, box_length, t_end)?;
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, q)| *t >= lo - 1e-12 && *t <= hi + 1e-12 && *q > 0.0)
        .map(|(t, q)| ((1.0 + mu * t).ln(), q.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Saturated(format!(
            "only {} samples inside [{lo}, {hi}]",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let stderr = if pts.len() > 2 { (ssr / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(DecayFit {
        quantity,
        t_lo: lo,
        t_hi: hi,
        alpha: -slope,
        stderr,
        target: decay_target(quantity, k, l1_data),
        residual: (ssr / n).sqrt(),
        samples: pts.len(),
    })
}

/// Decay quantities of a state: the larger of the two fields.
pub fn decay_quantities(state: &FieldState, order: u32, norm: DerivativeNorm) -> (f64, f64) {
    let (hp, hm) = hn_norm_with(state, order, norm);
    (w1inf(&state.zp).max(w1inf(&state.zm)), hp.max(hm))
}

/// Relative L² distance between two vector fields on the same grid.
pub fn relative_l2(a: &VectorField, b: &VectorField) -> Result<f64> {
    if a.domain() != b.domain() {
        return Err(Error::DomainMismatch);
    }
    let norm = b.l2_norm();
    let diff = a.sub(b).l2_norm();
    Ok(if norm == 0.0 { diff } else { diff / norm })
}
