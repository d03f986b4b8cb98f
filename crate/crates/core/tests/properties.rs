use std::f64::consts::PI;

use proptest::prelude::*;

use mhdc::comparison::{advect_diffuse, exp_average, Sign};
use mhdc::config::RunConfig;
use mhdc::container::ArrayContainer;
use mhdc::energy::{rho_with, theta, theta_prime, CutoffProfile};
use mhdc::grid::{
    derivative, leray_project, make_domain, periodic_convolve, DerivativeNorm, DomainSpec, SampledKernel, ScalarField,
    VectorField,
};
use mhdc::kernel::{n1_eval, KernelSample};
use mhdc::solver::{step, FieldState};
use mhdc::verify::check_f_estimate;

fn domain() -> DomainSpec {
    make_domain(2, 1, 8.0 * PI, 32).unwrap()
}

/// A few Gaussian-windowed Fourier modes.
fn smooth(domain: &DomainSpec, p: &[(f64, f64, f64, f64)]) -> ScalarField {
    ScalarField::from_fn(domain, |x| {
        p.iter()
            .map(|&(a, c, k, ph)| a * (-(x[0] - c).powi(2) / 4.0).exp() * (k * x[0] + x[1] + ph).cos())
            .sum()
    })
}

fn modes() -> impl Strategy<Value = Vec<(f64, f64, f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -6.0..6.0f64, 0.0..2.0f64, 0.0..6.3f64), 1..4)
}

fn solenoidal(domain: &DomainSpec, p: &[(f64, f64, f64, f64)]) -> VectorField {
    let psi = smooth(domain, p);
    VectorField::new(vec![derivative(&psi, 1, 1), derivative(&psi, 0, 1).scale(-1.0)]).unwrap()
}

fn max_abs_diff(a: &ScalarField, b: &ScalarField) -> f64 {
    a.sub(b).max_abs()
}

/// `x1 -> -x1`, with the first component of a vector flipped.
fn reflect_scalar(f: &ScalarField) -> ScalarField {
    let d = f.domain();
    let n = d.points(0);
    let inner = d.len() / n;
    let v = f.values();
    let out = (0..d.len())
        .map(|flat| {
            let (i, rest) = (flat / inner, flat % inner);
            v[((n - i) % n) * inner + rest]
        })
        .collect();
    ScalarField::new(d.clone(), out).unwrap()
}

fn reflect(z: &VectorField) -> VectorField {
    let c = z.components();
    VectorField::new(vec![reflect_scalar(&c[0]).scale(-1.0), reflect_scalar(&c[1])]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn derivative_commutes_with_shift(p in modes()) {
        let d = domain();
        let f = smooth(&d, &p);
        let shift = |g: &ScalarField| {
            let inner = d.len() / d.points(0);
            let v = g.values();
            let out: Vec<f64> = (0..v.len()).map(|i| v[(i + inner) % v.len()]).collect();
            ScalarField::new(d.clone(), out).unwrap()
        };
        let a = derivative(&shift(&f), 0, 1);
        let b = shift(&derivative(&f, 0, 1));
        prop_assert!(max_abs_diff(&a, &b) <= 1e-12 * b.max_abs().max(1e-300));
    }

    #[test]
    fn leray_idempotent_and_contracting(p in modes(), q in modes()) {
        let d = domain();
        let u = VectorField::new(vec![smooth(&d, &p), smooth(&d, &q)]).unwrap();
        let once = leray_project(&u);
        let twice = leray_project(&once);
        prop_assert!(once.is_solenoidal());
        prop_assert!(twice.sub(&once).l2_norm() <= 1e-12 * u.l2_norm().max(1e-300));
        prop_assert!(once.l2_norm() <= u.l2_norm() * (1.0 + 1e-12));
    }

    #[test]
    fn even_kernel_convolution_is_symmetric(p in modes(), q in modes(), w in 0.5..3.0f64) {
        let d = domain();
        let (f, g) = (smooth(&d, &p), smooth(&d, &q));
        let k = SampledKernel::radial(&d, |r| (-r * r / w).exp(), None);
        let lhs = periodic_convolve(&f, &k).unwrap().inner(&g);
        let rhs = f.inner(&periodic_convolve(&g, &k).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1e-12));
    }

    #[test]
    fn step_keeps_solenoidal_and_dissipates(p in modes(), q in modes(), amp in 0.01..0.3f64) {
        let d = domain();
        let s = FieldState::new(0.0, solenoidal(&d, &p).scale(amp), solenoidal(&d, &q).scale(amp), 0.1).unwrap();
        let next = step(&s, 0.05).unwrap();
        prop_assert!(next.zp.is_solenoidal() && next.zm.is_solenoidal());
        prop_assert!(next.energy() <= s.energy() * (1.0 + 1e-12));
    }

    #[test]
    fn reflection_and_swap_commute_with_step(p in modes(), q in modes(), amp in 0.01..0.3f64) {
        let d = domain();
        let s = FieldState::new(0.0, solenoidal(&d, &p).scale(amp), solenoidal(&d, &q).scale(amp), 0.1).unwrap();
        let mirrored = FieldState::new(0.0, reflect(&s.zm), reflect(&s.zp), 0.1).unwrap();
        let a = step(&mirrored, 0.05).unwrap();
        let b = step(&s, 0.05).unwrap();
        let scale = b.zp.max_norm().max(b.zm.max_norm());
        prop_assert!(a.zp.sub(&reflect(&b.zm)).max_norm() <= 1e-12 * scale);
        prop_assert!(a.zm.sub(&reflect(&b.zp)).max_norm() <= 1e-12 * scale);
    }

    #[test]
    fn cutoff_derivative_bound(r in 0.0..2.0f64) {
        prop_assert!(theta_prime(r).powi(2) <= PI * PI * theta(r) + 1e-12);
    }

    #[test]
    fn rho_is_homogeneous_and_monotone_in_order(p in modes(), lambda in -3.0..3.0f64) {
        let d = domain();
        let z = solenoidal(&d, &p);
        let s = FieldState::new(0.0, z.clone(), z.scale(lambda), 0.1).unwrap();
        let cut = CutoffProfile::default();
        let r2 = rho_with(&s, 2, DerivativeNorm::Frobenius, &cut).unwrap();
        let r3 = rho_with(&s, 3, DerivativeNorm::Frobenius, &cut).unwrap();
        prop_assert!(r2.rho_p.min() >= 0.0);
        prop_assert!(r3.rho_p.sub(&r2.rho_p).min() >= -1e-12 * r3.rho_p.max());
        let scaled = r3.rho_p.scale(lambda.abs());
        prop_assert!(max_abs_diff(&scaled, &r3.rho_m) <= 1e-12 * r3.rho_p.max() * lambda.abs().max(1.0));
    }

    #[test]
    fn n1_convolution_is_monotone_and_bounded(p in modes(), q in modes()) {
        let d = domain();
        let k = KernelSample::n1(&d).unwrap();
        let f = smooth(&d, &p).map(f64::abs);
        let g = f.add(&smooth(&d, &q).map(f64::abs));
        let (cf, cg) = (k.convolve(&f).unwrap(), k.convolve(&g).unwrap());
        let scale = cg.max_abs();
        prop_assert!(cf.min() >= -1e-12 * scale);
        prop_assert!(cg.sub(&cf).min() >= -1e-12 * scale);
        prop_assert!(cf.max() <= f.max() * k.l1_mass * (1.0 + 1e-12));
    }

    #[test]
    fn forcing_ratio_is_scale_invariant(p in modes(), q in modes(), lambda in 0.1..10.0f64) {
        let d = domain();
        let s = FieldState::new(0.0, solenoidal(&d, &p), solenoidal(&d, &q), 0.1).unwrap();
        let k = KernelSample::n1(&d).unwrap();
        let a = check_f_estimate(&s, 2, DerivativeNorm::Frobenius, &k).unwrap().c_f;
        let b = check_f_estimate(&s.scaled(lambda), 2, DerivativeNorm::Frobenius, &k).unwrap().c_f;
        match (a, b) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-8 * a.max(b).max(1e-300)),
            (a, b) => prop_assert_eq!(a.is_some(), b.is_some()),
        }
    }

    #[test]
    fn exp_average_resolvent_identity(p in modes(), mu in 0.01..1.0f64) {
        let d = domain();
        let f = smooth(&d, &p);
        for s in Sign::BOTH {
            let g = exp_average(&f, mu, s);
            let back = g.add(&derivative(&g, 0, 1).scale(2.0 * mu * s.value()));
            prop_assert!(max_abs_diff(&back, &f) <= 1e-10 * f.max_abs().max(1e-300));
        }
    }

    #[test]
    fn semigroup_composes(p in modes(), t1 in 0.0..3.0f64, t2 in 0.0..3.0f64) {
        let d = domain();
        let f = smooth(&d, &p);
        for s in Sign::BOTH {
            let a = advect_diffuse(&advect_diffuse(&f, t1, 0.1, s), t2, 0.1, s);
            let b = advect_diffuse(&f, t1 + t2, 0.1, s);
            prop_assert!(max_abs_diff(&a, &b) <= 1e-12 * f.max_abs().max(1e-300));
        }
    }

    #[test]
    fn container_roundtrips(dims in prop::collection::vec(1u64..5, 0..4), seed in any::<u64>()) {
        let count: u64 = dims.iter().product();
        let data: Vec<f64> = (0..count).map(|i| f64::from_bits(seed.wrapping_mul(i + 1).rotate_left(7) & !(0x7ffu64 << 52) | (0x3ffu64 << 52))).collect();
        let labels = (0..dims.len()).map(|i| format!("a{i}")).collect();
        let a = ArrayContainer::new(dims, labels, data).unwrap();
        let bytes = a.encode();
        prop_assert_eq!(bytes.len() as u64, 8 + a.dims.len() as u64 * (8 + 4) + count * 8);
        let b = ArrayContainer::decode(&bytes).unwrap();
        prop_assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        prop_assert_eq!(b.encode(), bytes);
    }

    #[test]
    fn config_roundtrips(n in prop::sample::select(vec![32usize, 64, 128]), mu in 0.0..1.0f64, seed in 0..=i64::MAX as u64, steps in 1usize..40) {
        let cfg = RunConfig { n, mu, seed, dt: 0.05, t_end: 0.05 * steps as f64, sample_stride: 1, ..RunConfig::default() };
        if cfg.validate().is_ok() {
            let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
            prop_assert_eq!(back.hash(), cfg.hash());
            prop_assert_eq!(back, cfg);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    // comparability propagation ρ01(t) * N1 ≤ C0 ρ01(t), on the field box; the
    // outer half of the periodic comparison box is padding and wraps around
    #[test]
    fn smoothed_data_stays_comparable(c in -4.0..4.0f64, w in 0.5..2.0f64, t in 0.0..5.0f64) {
        use mhdc::comparison::{build_rho00, comparison_domain, comparison_kernel, restrict};
        use mhdc::energy::EnergyDensity;
        use mhdc::kernel::estimate_c0;
        let d = domain();
        let r = ScalarField::from_fn(&d, |x| (-(x[0] - c).powi(2) / (2.0 * w * w)).exp());
        let density = EnergyDensity { rho_p: r.clone(), rho_m: r, order: 3, norm: DerivativeNorm::Frobenius };
        let c0 = estimate_c0(&KernelSample::n1(&d).unwrap(), Some(&density)).unwrap().c0;
        let dc = comparison_domain(&d);
        let kernel = comparison_kernel(&dc).unwrap();
        let rho00 = build_rho00(&density, c0, &kernel).unwrap();
        for s in Sign::BOTH {
            let r01 = advect_diffuse(&rho00[s.index()], t, 0.1, s);
            let lhs = kernel.convolve(&r01).unwrap();
            let excess = restrict(&lhs.sub(&r01.scale(c0)), &d).max();
            prop_assert!(excess <= 1e-9 * lhs.max(), "excess {excess}");
        }
    }
}

#[test]
fn inviscid_energy_drift_is_small() {
    let d = make_domain(2, 1, 16.0 * PI, 128).unwrap();
    let p = [(0.3, -3.0, 0.5, 0.2), (0.2, 2.0, 1.0, 1.0)];
    let q = [(0.25, 3.0, 0.7, 2.0)];
    let s0 = FieldState::new(0.0, solenoidal(&d, &p), solenoidal(&d, &q), 0.0).unwrap();
    let e0 = s0.energy();
    let s1 = mhdc::solver::advance(&s0, 1.0, 0.02, Default::default()).unwrap();
    assert!(((s1.energy() - e0) / e0).abs() <= 1e-6, "{}", (s1.energy() - e0) / e0);
}

#[test]
fn n1_sample_is_radially_nonincreasing() {
    for x in [0.0, 0.5, 1.0, 2.0, 7.0] {
        assert!(n1_eval(&[x, 0.0]) >= n1_eval(&[x + 0.25, 0.0]));
    }
}
