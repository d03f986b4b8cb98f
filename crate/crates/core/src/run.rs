//! End-to-end runs: constants, trajectory, checks and report artifacts.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::comparison::{ComparisonData, ResidualReport, TIME_DIFFERENCE};
use crate::config::{FamilyName, RunConfig};
use crate::container::{save_array, write_atomic, ArrayContainer};
use crate::data::{auto_rescale, generate, DataSpec, Family};
use crate::energy::{j_functional, rho_with, CutoffProfile};
use crate::error::{Error, Result};
use crate::grid::{boundary_guard, make_domain, DerivativeNorm, DomainSpec, ScalarField, VectorField};
use crate::kernel::{estimate_c0, C0Estimate, Constant, ConstantsLedger, KernelSample};
use crate::solver::{advance, blow_up_guard, drift_diffuse_vector, hn_norm, hn_norm_with, FieldState, StepOptions};
use crate::verify::{
    check_comparison, check_f_estimate, check_hn_bound, check_local_energy, decay_quantities, fit_decay, hn_chain,
    relative_l2, DecayFit, DecayQuantity, ToleranceBudget,
};

/// Margin applied to the measured local-energy and forcing constants.
pub const CONSTANT_MARGIN: f64 = 1.25;
/// Amplitude of the colliding packets used to measure `C1` and `C_F`.
pub const CALIBRATION_AMPLITUDE: f64 = 0.1;
/// Sample times of the calibration collision (packets start 8 apart).
pub const CALIBRATION_TIMES: [f64; 5] = [1.0, 3.0, 4.0, 5.0, 7.0];
/// Smallest relative tolerance, guarding against a calibration run that happens to be exact.
pub const TOLERANCE_FLOOR: f64 = 1e-12;
/// Allowed relative L² error for the single-field (Alfvén) case.
pub const ALFVEN_TOL: f64 = 1e-6;

/// Grid on which the local-energy and forcing constants are measured.
pub fn calibration_domain(d: usize, k: usize) -> Result<DomainSpec> {
    match d {
        2 => make_domain(2, k, 16.0 * PI, 128),
        _ => make_domain(d, k, 8.0 * PI, 64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingCalibration {
    pub domain: DomainSpec,
    /// Smallest `C` with `LHS ≤ C F + tol` over the calibration samples.
    pub c_local: f64,
    /// Largest `F / ((ρ+ρ-) * N1)` over the calibration samples.
    pub c_f: f64,
    pub linear_residual: f64,
}

fn centred_triple(state: &FieldState, t: f64, dt: f64, opts: StepOptions) -> Result<[FieldState; 3]> {
    let a = advance(state, t - TIME_DIFFERENCE, dt, opts)?;
    let b = advance(&a, t, TIME_DIFFERENCE, opts)?;
    let c = advance(&b, t + TIME_DIFFERENCE, TIME_DIFFERENCE, opts)?;
    Ok([a, b, c])
}

/// Positive part of the local-energy left side for the `z- = 0` version of
/// `state` at `t = δ`, where the continuum value is `≤ 0`.
fn linear_residual(state: &FieldState, order: u32, norm: DerivativeNorm) -> Result<(f64, f64)> {
    let lin = FieldState::new(0.0, state.zp.clone(), VectorField::zeros(state.domain()), state.mu)?;
    let [a, b, c] = centred_triple(&lin, TIME_DIFFERENCE, TIME_DIFFERENCE, StepOptions::default())?;
    let r = check_local_energy(&a, &b, &c, order, norm, 0.0, None)?;
    let scale = rho_with(&b, order, norm, &CutoffProfile::default())?.rho_p.max();
    Ok((r.lhs_max.max(0.0), scale))
}

/// Tolerance budget calibrated on the `z- = 0` version of `state`, whose local
/// energy left side is nonpositive in the continuum.
pub fn tolerance_budget(state: &FieldState, order: u32, norm: DerivativeNorm) -> Result<ToleranceBudget> {
    let (lin, scale) = linear_residual(state, order, norm)?;
    let h = state.domain().min_spacing();
    Ok(ToleranceBudget::calibrate(
        h,
        TIME_DIFFERENCE,
        lin.max(TOLERANCE_FLOOR * scale),
        scale.max(f64::MIN_POSITIVE),
    ))
}

/// Tolerance for the supersolution residual at one time, calibrated on the
/// homogeneous part `C0 ρ01 * N1` whose continuum residual is zero.
pub fn residual_tolerance(report: &ResidualReport, h: f64) -> f64 {
    let measured = report.semigroup_noise.max(TOLERANCE_FLOOR * report.lhs_scale);
    if measured <= 0.0 {
        return 0.0;
    }
    ToleranceBudget::calibrate(h, TIME_DIFFERENCE, measured, report.lhs_scale).tol(h, TIME_DIFFERENCE, report.lhs_scale)
}

/// Measures the constants of the local energy inequality and the forcing
/// estimate on a moderate-amplitude collision.
pub fn calibrate_forcing(domain: &DomainSpec, order: u32, norm: DerivativeNorm, mu: f64) -> Result<ForcingCalibration> {
    let spec = DataSpec::new(Family::GaussianBump, CALIBRATION_AMPLITUDE);
    let s0 = generate(domain, &spec, mu, order)?;
    let (lin, scale) = linear_residual(&s0, order, norm)?;
    let tol = crate::verify::TOLERANCE_SAFETY * lin.max(TOLERANCE_FLOOR * scale);
    let kernel = KernelSample::n1(domain)?;
    let dt = 0.4 * domain.min_spacing();
    let mut state = s0;
    let mut c_local: f64 = 0.0;
    let mut c_f: f64 = 0.0;
    for &t in &CALIBRATION_TIMES {
        let [a, b, c] = centred_triple(&state, t, dt, StepOptions::default())?;
        let r = check_local_energy(&a, &b, &c, order, norm, tol, None)?;
        c_local = c_local.max(r.c_measured.ok_or_else(|| {
            Error::Unbounded(format!("local energy left side exceeds tolerance where F = 0 at t = {t}"))
        })?);
        let f = check_f_estimate(&b, order, norm, &kernel)?;
        c_f = c_f.max(f.c_f.ok_or_else(|| Error::Unbounded(format!("F > 0 where (ρ+ρ-)*N1 = 0 at t = {t}")))?);
        state = c;
    }
    Ok(ForcingCalibration {
        domain: domain.clone(),
        c_local,
        c_f,
        linear_residual: lin / scale.max(f64::MIN_POSITIVE),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub ledger: ConstantsLedger,
    pub c0: C0Estimate,
    pub calibration: ForcingCalibration,
}

/// `C0` on `domain` (kernel conditions plus `ρ(0)` when given) and `C1`, `C_F`
/// from the calibration grid.
pub fn measure_constants(
    domain: &DomainSpec,
    state0: Option<&FieldState>,
    order: u32,
    norm: DerivativeNorm,
    mu: f64,
) -> Result<ConstantsReport> {
    let kernel = KernelSample::n1(domain)?;
    let density = match state0 {
        Some(s) => Some(rho_with(s, order, norm, &CutoffProfile::default())?),
        None => None,
    };
    let c0 = estimate_c0(&kernel, density.as_ref())?;
    let cal_domain = calibration_domain(domain.dim(), domain.unbounded_axes())?;
    let calibration = calibrate_forcing(&cal_domain, order, norm, mu)?;
    let hash = domain.hash();
    let cal_hash = cal_domain.hash();
    let ledger = ConstantsLedger::from_measured(
        Constant::new(c0.c0, "estimate_c0: largest kernel self-convolution and rho(0) ratio, times 1.05", hash),
        Constant::new(
            CONSTANT_MARGIN * calibration.c_local * calibration.c_f,
            "1.25 x (local energy constant against F) x C_F, colliding Gaussian packets",
            cal_hash.clone(),
        ),
        Constant::new(
            CONSTANT_MARGIN * calibration.c_f,
            "1.25 x max F/((rho+ rho-)*N1), colliding Gaussian packets",
            cal_hash,
        ),
    )?;
    Ok(ConstantsReport { ledger, c0, calibration })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeRecord {
    pub t: f64,
    pub hn_p: f64,
    pub hn_m: f64,
    pub j_p: f64,
    pub j_m: f64,
    pub w1inf: f64,
    /// `max(LHS - C1 (ρ+ρ-) * N1 - tol)` of the local energy inequality.
    pub resid_local: Option<f64>,
    /// Local energy constant against `F` at this time.
    pub c_local: Option<f64>,
    pub c_f: Option<f64>,
    /// `max(ρ± - ρ±1)` on the grid.
    pub excess_comparison: Option<f64>,
    pub comparison_tol: Option<f64>,
    /// Smallest supersolution margin of `ρ±1` and its tolerance.
    pub super_margin: Option<f64>,
    pub super_tol: Option<f64>,
    pub chain_ok: Option<bool>,
    pub guard_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayOutcome {
    pub quantity: DecayQuantity,
    pub fit: Option<DecayFit>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionCheck {
    pub n: [usize; 2],
    pub c0: [f64; 2],
    pub c_local: [f64; 2],
    pub c_f: [f64; 2],
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub config: RunConfig,
    pub domain: DomainSpec,
    pub constants: ConstantsReport,
    /// Factor applied by the auto-small rescaling (1 if disabled).
    pub rescale: f64,
    pub j0: [f64; 2],
    /// `J±(0) ≤ ε1`; when false the comparison checks are advisory.
    pub small: bool,
    pub budget: ToleranceBudget,
    pub records: Vec<TimeRecord>,
    pub hn_sup_ratio: [f64; 2],
    /// `sup_t C ‖ρ±1(t)‖_{L²} / ‖z±(0)‖_{H^N}`, the bound implied by the comparison chain.
    pub hn_bound: Option<[f64; 2]>,
    pub decay: Vec<DecayOutcome>,
    pub alfven_error: Option<f64>,
    pub resolution: Option<ResolutionCheck>,
    pub failures: Vec<String>,
    pub passed: bool,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Per-time scalar series.
    pub fn series_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let mut out = String::from("t,hn_p,hn_m,j_p,j_m,resid_local,excess_comparison,guard_ok\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{},{},{}",
                r.t,
                r.hn_p,
                r.hn_m,
                r.j_p,
                r.j_m,
                opt(r.resid_local),
                opt(r.excess_comparison),
                r.guard_ok
            );
        }
        out
    }
}

fn l1_data(cfg: &RunConfig) -> bool {
    match cfg.family {
        FamilyName::GaussianBump | FamilyName::AlfvenLinear => true,
        FamilyName::ClPower => cfg.delta > cfg.k as f64,
        FamilyName::HxyLog => cfg.k == 1,
    }
}

fn magnitude_guard(state: &FieldState) -> bool {
    let p = state.zp.magnitude_sq();
    let m = state.zm.magnitude_sq();
    boundary_guard(&[&p, &m]).ok
}

/// Initial state, constants and rescaling for `cfg`.
pub fn prepare(cfg: &RunConfig) -> Result<(FieldState, ConstantsReport, f64)> {
    cfg.validate()?;
    let domain = cfg.domain()?;
    let raw = generate(&domain, &cfg.data_spec(), cfg.mu, cfg.order)?;
    let constants = measure_constants(&domain, Some(&raw), cfg.order, cfg.norm, cfg.mu)?;
    let (state, lambda) = if cfg.auto_small {
        auto_rescale(&raw, &constants.ledger, cfg.order, cfg.norm)?
    } else {
        (raw, 1.0)
    };
    Ok((state, constants, lambda))
}

/// Runs the trajectory of `cfg` and every check along it.
pub fn run_verify(cfg: &RunConfig) -> Result<RunReport> {
    Ok(run_verify_full(cfg)?.0)
}

/// As `run_verify`, also returning the state at the last sample time.
pub fn run_verify_full(cfg: &RunConfig) -> Result<(RunReport, FieldState)> {
    let (state0, constants, rescale) = prepare(cfg)?;
    run_verify_from(cfg, state0, constants, rescale)
}

pub fn run_verify_from(
    cfg: &RunConfig,
    state0: FieldState,
    constants: ConstantsReport,
    rescale: f64,
) -> Result<(RunReport, FieldState)> {
    let domain = state0.domain().clone();
    let order = cfg.order;
    let norm = cfg.norm;
    let opts = StepOptions { coupling: cfg.coupling };
    let ledger = &constants.ledger;
    let kernel = KernelSample::n1(&domain)?;
    let h = domain.min_spacing();
    let mut failures = Vec::new();

    let density0 = rho_with(&state0, order, norm, &CutoffProfile::default())?;
    let (jp, jm) = j_functional(&density0);
    let small = jp.max(jm) <= ledger.eps1.value;

    let budget = tolerance_budget(&state0, order, norm)?;

    let comparison = match ComparisonData::build(&density0, ledger, cfg.mu) {
        Ok(c) => Some(c),
        Err(Error::Smallness(msg)) => {
            if small {
                failures.push(format!("comparison data: {msg}"));
            }
            None
        }
        Err(e) => return Err(e),
    };
    let mut hn_bound: Option<[f64; 2]> = None;
    let hn0 = hn_norm_with(&state0, order, norm);
    let guard_ref = hn_norm(&state0, order);

    let mut records = Vec::new();
    let mut hn_series = Vec::new();
    let mut w_series = Vec::new();

    let mut record_comparison = |t: f64, state: &FieldState, density: &crate::energy::EnergyDensity, rec: &mut TimeRecord, failures: &mut Vec<String>| -> Result<()> {
        let Some(data) = comparison.as_ref() else {
            return Ok(());
        };
        let bundle = data.bundle(t)?;
        let upper = bundle.rho1_on(&domain);
        let tol = budget.tol(h, TIME_DIFFERENCE, upper[0].max().max(upper[1].max()));
        let ordering = check_comparison(density, &bundle, tol);
        let chain = hn_chain(state, density, &bundle)?;
        for i in 0..2 {
            let hn_start = [hn0.0, hn0.1][i];
            // 0/0 reads as 1, matching check_hn_bound
            let b = if hn_start > 0.0 { chain.c * chain.rho1_l2[i] / hn_start } else { 1.0 };
            let cur = hn_bound.get_or_insert([0.0, 0.0]);
            cur[i] = cur[i].max(b);
        }
        if small {
            if !ordering.ok {
                let what = if t == 0.0 { "initial ordering rho(0) <= rho1(0)" } else { "comparison ordering" };
                failures.push(format!(
                    "{what} at t = {t}: excess {:e} > tol {:e} at {:?}",
                    ordering.max_excess, tol, ordering.location
                ));
            }
            if !chain.ok {
                failures.push(format!("H^N chain at t = {t}"));
            }
        }
        if t >= TIME_DIFFERENCE {
            let r = data.supersolution_residual(t)?;
            let tol = residual_tolerance(&r, h);
            if small && r.min_margin < -tol {
                failures.push(format!(
                    "supersolution residual at t = {t}: margin {:e} < -tol {:e} at {:?}",
                    r.min_margin, tol, r.location
                ));
            }
            rec.super_margin = Some(r.min_margin);
            rec.super_tol = Some(tol);
        }
        rec.excess_comparison = Some(ordering.max_excess);
        rec.comparison_tol = Some(tol);
        rec.chain_ok = Some(chain.ok);
        Ok(())
    };

    let base_record = |state: &FieldState, density: &crate::energy::EnergyDensity| -> TimeRecord {
        let (hp, hm) = hn_norm_with(state, order, norm);
        let (jp, jm) = j_functional(density);
        let (w, _) = decay_quantities(state, order, norm);
        TimeRecord {
            t: state.t,
            hn_p: hp,
            hn_m: hm,
            j_p: jp,
            j_m: jm,
            w1inf: w,
            resid_local: None,
            c_local: None,
            c_f: None,
            excess_comparison: None,
            comparison_tol: None,
            super_margin: None,
            super_tol: None,
            chain_ok: None,
            guard_ok: magnitude_guard(state),
        }
    };

    let mut rec0 = base_record(&state0, &density0);
    rec0.c_f = check_f_estimate(&state0, order, norm, &kernel)?.c_f;
    record_comparison(0.0, &state0, &density0, &mut rec0, &mut failures)?;
    hn_series.push((0.0, [rec0.hn_p, rec0.hn_m]));
    w_series.push((0.0, rec0.w1inf, rec0.hn_p.max(rec0.hn_m)));
    records.push(rec0);

    let mut state = state0.clone();
    let mut last = state0.clone();
    for t in cfg.sample_times() {
        let [a, b, c] = centred_triple(&state, t, cfg.dt, opts)?;
        blow_up_guard(&b, order, guard_ref)?;
        let density = rho_with(&b, order, norm, &CutoffProfile::default())?;
        let mut rec = base_record(&b, &density);
        let tol_local = budget.tol(h, TIME_DIFFERENCE, density.rho_p.max().max(density.rho_m.max()));
        let local = check_local_energy(&a, &b, &c, order, norm, tol_local, Some((ledger.c1.value, &kernel)))?;
        rec.resid_local = local.violation;
        rec.c_local = local.c_measured;
        if let Some(v) = local.violation {
            if v > 0.0 {
                failures.push(format!("local energy inequality at t = {t}: excess {v:e}"));
            }
        }
        rec.c_f = check_f_estimate(&b, order, norm, &kernel)?.c_f;
        record_comparison(t, &b, &density, &mut rec, &mut failures)?;
        if !rec.guard_ok {
            failures.push(format!("boundary guard at t = {t}"));
        }
        hn_series.push((t, [rec.hn_p, rec.hn_m]));
        w_series.push((t, rec.w1inf, rec.hn_p.max(rec.hn_m)));
        records.push(rec);
        last = b;
        state = c;
    }

    let hn_sup_ratio = check_hn_bound(&hn_series);
    if let Some(bound) = hn_bound {
        for i in 0..2 {
            if small && hn_sup_ratio[i] > bound[i] * (1.0 + 1e-9) {
                failures.push(format!("H^N ratio {} exceeds the comparison bound {}", hn_sup_ratio[i], bound[i]));
            }
        }
    }

    let mut decay = Vec::new();
    for quantity in [DecayQuantity::W1inf, DecayQuantity::Hn] {
        let series: Vec<(f64, f64)> = w_series
            .iter()
            .map(|&(t, w, hn)| (t, if quantity == DecayQuantity::W1inf { w } else { hn }))
            .collect();
        match fit_decay(&series, quantity, cfg.mu, cfg.k, cfg.box_length, l1_data(cfg)) {
            Ok(fit) => decay.push(DecayOutcome { quantity, fit: Some(fit), error: None }),
            Err(e) => decay.push(DecayOutcome { quantity, fit: None, error: Some(e.to_string()) }),
        }
    }

    let alfven_error = if cfg.family == FamilyName::AlfvenLinear {
        let exact = drift_diffuse_vector(&state0.zp, last.t, cfg.mu, 1.0);
        let err = relative_l2(&last.zp, &exact)?;
        if err > ALFVEN_TOL {
            failures.push(format!("Alfvén exactness: relative L2 error {err:e}"));
        }
        Some(err)
    } else {
        None
    };

    let resolution = if cfg.resolution_check {
        Some(resolution_check(cfg)?)
    } else {
        None
    };
    if let Some(r) = &resolution {
        if !r.stable {
            failures.push(format!("resolution check: constants not stable across n = {:?}", r.n));
        }
    }

    let passed = failures.is_empty();
    let report = RunReport {
        config_hash: cfg.hash(),
        config: cfg.clone(),
        domain,
        constants,
        rescale,
        j0: [jp, jm],
        small,
        budget,
        records,
        hn_sup_ratio,
        hn_bound,
        decay,
        alfven_error,
        resolution,
        failures,
        passed,
    };
    Ok((report, last))
}

/// Kernel constant on the run grid and the forcing constants on the calibration
/// grid, each at `n` and `2n`.
pub fn resolution_check(cfg: &RunConfig) -> Result<ResolutionCheck> {
    let mut c0 = [0.0; 2];
    let mut c_local = [0.0; 2];
    let mut c_f = [0.0; 2];
    let cal = calibration_domain(cfg.d, cfg.k)?;
    let ns = [cfg.n, 2 * cfg.n];
    for (i, &n) in ns.iter().enumerate() {
        let domain = make_domain(cfg.d, cfg.k, cfg.box_length, n)?;
        c0[i] = estimate_c0(&KernelSample::n1(&domain)?, None)?.c0;
        let cal_n = make_domain(cfg.d, cfg.k, cal.length(0), cal.points(0) << i)?;
        let f = calibrate_forcing(&cal_n, cfg.order, cfg.norm, cfg.mu)?;
        c_local[i] = f.c_local;
        c_f[i] = f.c_f;
    }
    let rel = |v: [f64; 2]| (v[0] - v[1]).abs() / v[0].abs().max(v[1].abs());
    let stable = rel(c0) <= 0.05 && rel(c_local) <= 0.25 && rel(c_f) <= 0.25;
    Ok(ResolutionCheck { n: ns, c0, c_local, c_f, stable })
}

/// Plain trajectory: H^N and energy series, final state, and the Alfvén check
/// when `z- = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config_hash: String,
    pub config: RunConfig,
    pub times: Vec<f64>,
    pub hn: Vec<[f64; 2]>,
    pub energy: Vec<f64>,
    pub alfven_error: Option<f64>,
    pub passed: bool,
}

pub fn simulate(cfg: &RunConfig) -> Result<(SimulationReport, FieldState)> {
    cfg.validate()?;
    let domain = cfg.domain()?;
    let state0 = generate(&domain, &cfg.data_spec(), cfg.mu, cfg.order)?;
    let opts = StepOptions { coupling: cfg.coupling };
    let guard_ref = hn_norm(&state0, cfg.order);
    let hn0 = hn_norm_with(&state0, cfg.order, cfg.norm);
    let mut times = vec![0.0];
    let mut hn = vec![[hn0.0, hn0.1]];
    let mut energy = vec![state0.energy()];
    let mut state = state0.clone();
    let mut targets = cfg.sample_times();
    if targets.last().is_none_or(|&t| t < cfg.t_end - 1e-12) {
        targets.push(cfg.t_end);
    }
    for t in targets {
        state = advance(&state, t, cfg.dt, opts)?;
        blow_up_guard(&state, cfg.order, guard_ref)?;
        let (p, m) = hn_norm_with(&state, cfg.order, cfg.norm);
        times.push(t);
        hn.push([p, m]);
        energy.push(state.energy());
    }
    let alfven_error = if state0.zm.max_norm() == 0.0 {
        let exact = drift_diffuse_vector(&state0.zp, state.t, cfg.mu, 1.0);
        Some(relative_l2(&state.zp, &exact)?)
    } else {
        None
    };
    let passed = alfven_error.is_none_or(|e| e <= ALFVEN_TOL);
    Ok((
        SimulationReport {
            config_hash: cfg.hash(),
            config: cfg.clone(),
            times,
            hn,
            energy,
            alfven_error,
            passed,
        },
        state,
    ))
}

/// Stacks both Elsässer fields into one container: axes `(field, component, x1, ...)`.
pub fn state_container(state: &FieldState) -> Result<ArrayContainer> {
    let domain = state.domain();
    let d = domain.dim();
    let mut dims = vec![2u64, d as u64];
    dims.extend(domain.shape().iter().map(|&n| n as u64));
    let mut labels = vec!["field".to_string(), "component".to_string()];
    labels.extend((1..=d).map(|a| format!("x{a}")));
    let mut data = Vec::with_capacity(2 * d * domain.len());
    for z in [&state.zp, &state.zm] {
        for c in z.components() {
            data.extend_from_slice(c.values());
        }
    }
    ArrayContainer::new(dims, labels, data)
}

/// Rebuilds a state from `state_container` output on `domain`.
pub fn state_from_container(array: &ArrayContainer, domain: &DomainSpec, t: f64, mu: f64) -> Result<FieldState> {
    let d = domain.dim();
    let mut expected = vec![2u64, d as u64];
    expected.extend(domain.shape().iter().map(|&n| n as u64));
    if array.dims != expected {
        return Err(Error::Container(format!("dims {:?} do not match domain {:?}", array.dims, expected)));
    }
    let len = domain.len();
    let mut fields = Vec::new();
    for f in 0..2 {
        let comps = (0..d)
            .map(|c| {
                let start = (f * d + c) * len;
                ScalarField::new(domain.clone(), array.data[start..start + len].to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        fields.push(VectorField::new(comps)?);
    }
    let zm = fields.pop().expect("two fields");
    let zp = fields.pop().expect("two fields");
    FieldState::new(t, zp, zm, mu)
}

/// `ρ±1` at each sample time, stacked as `(time, sign, x1, ...)` on the field grid.
pub fn construct(cfg: &RunConfig) -> Result<(ConstantsReport, Vec<f64>, ArrayContainer)> {
    let (state0, constants, _) = prepare(cfg)?;
    let domain = state0.domain().clone();
    let density = rho_with(&state0, cfg.order, cfg.norm, &CutoffProfile::default())?;
    let data = ComparisonData::build(&density, &constants.ledger, cfg.mu)?;
    let mut times = vec![0.0];
    times.extend(cfg.sample_times());
    let mut values = Vec::new();
    for &t in &times {
        let bundle = data.bundle(t)?;
        for f in bundle.rho1_on(&domain) {
            values.extend_from_slice(f.values());
        }
    }
    let mut dims = vec![times.len() as u64, 2];
    dims.extend(domain.shape().iter().map(|&n| n as u64));
    let mut labels = vec!["time".to_string(), "sign".to_string()];
    labels.extend((1..=domain.dim()).map(|a| format!("x{a}")));
    Ok((constants, times, ArrayContainer::new(dims, labels, values)?))
}

/// Files written for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub ledger: Option<ConstantsLedger>,
    pub version: String,
    pub wall_time_s: f64,
    pub files: Vec<String>,
    pub passed: bool,
    pub failures: Vec<String>,
}

/// Output directory writer; every file goes through an atomic rename.
pub struct RunDir {
    root: PathBuf,
    files: Vec<String>,
    started: Instant,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(RunDir {
            root: root.to_path_buf(),
            files: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        write_atomic(&self.root.join(name), text.as_bytes())?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_array(&mut self, name: &str, array: &ArrayContainer) -> Result<()> {
        save_array(&self.root.join(name), array)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn finish(mut self, command: &str, config_hash: &str, ledger: Option<&ConstantsLedger>, passed: bool, failures: &[String]) -> Result<Manifest> {
        self.files.push("manifest.json".into());
        let manifest = Manifest {
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            ledger: ledger.cloned(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            files: self.files.clone(),
            passed,
            failures: failures.to_vec(),
        };
        write_atomic(&self.root.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        Ok(manifest)
    }
}

/// Writes the standard run directory: config copy, ledger, report, series,
/// final state and manifest.
pub fn write_run(dir: &Path, command: &str, report: &RunReport, state: &FieldState) -> Result<Manifest> {
    let mut out = RunDir::create(dir)?;
    out.write_text("config.toml", &report.config.to_toml())?;
    out.write_text("ledger.json", &report.constants.ledger.to_json()?)?;
    out.write_text("report.json", &report.to_json()?)?;
    out.write_text("series.csv", &report.series_csv())?;
    out.write_array("state.mhdc", &state_container(state)?)?;
    out.finish(
        command,
        &report.config_hash,
        Some(&report.constants.ledger),
        report.passed,
        &report.failures,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_container_roundtrip() {
        let domain = make_domain(2, 1, 8.0 * PI, 64).unwrap();
        let s = generate(&domain, &DataSpec::new(Family::GaussianBump, 0.3), 0.1, 3).unwrap();
        let a = state_container(&s).unwrap();
        assert_eq!(a.dims, vec![2, 2, 64, 16]);
        let back = state_from_container(&ArrayContainer::decode(&a.encode()).unwrap(), &domain, 0.0, 0.1).unwrap();
        assert_eq!(back.zp, s.zp);
        assert_eq!(back.zm, s.zm);
    }

    #[test]
    fn l1_classification() {
        let mut c = RunConfig::default();
        assert!(l1_data(&c));
        c.family = FamilyName::ClPower;
        c.delta = 1.5;
        assert!(l1_data(&c));
        c.k = 2;
        assert!(!l1_data(&c));
    }
}
