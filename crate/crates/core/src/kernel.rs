//! The algebraic kernel `N1(X) = 1/(1 + |X|^(d+1))`, its sampled convolution and the
//! measured constants that feed the smallness thresholds.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::EnergyDensity;
use crate::error::{Error, Result};
use crate::grid::{DomainSpec, ScalarField, TORUS_LENGTH};
use crate::spectral;

/// Safety margin applied to the measured `C0`.
pub const C0_MARGIN: f64 = 1.05;

pub fn n1_eval(x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let q = x.len() as f64 + 1.0;
    1.0 / (1.0 + r2.powf(0.5 * q))
}

/// `∫_{R^d} N1` in closed form: `2π²/(q sin(2π/q))·…` evaluated for d = 2, 3.
pub fn n1_exact_mass(d: usize) -> f64 {
    let q = d as f64 + 1.0;
    // ∫_0^∞ r^(d-1)/(1+r^q) dr = (π/q) / sin(dπ/q)
    let radial = (PI / q) / (d as f64 * PI / q).sin();
    let sphere = match d {
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => 2.0 * PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0),
    };
    sphere * radial
}

fn gamma(x: f64) -> f64 {
    // only needed for integer and half-integer arguments
    if x == 0.5 {
        PI.sqrt()
    } else if x == 1.0 {
        1.0
    } else {
        (x - 1.0) * gamma(x - 1.0)
    }
}

/// Gradient of N1.
pub fn n1_gradient(x: &[f64]) -> Vec<f64> {
    let q = x.len() as f64 + 1.0;
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let rq2 = r2.powf(0.5 * (q - 2.0));
    let den = (1.0 + r2.powf(0.5 * q)).powi(2);
    x.iter().map(|&xi| -q * rq2 * xi / den).collect()
}

/// Laplacian of N1.
pub fn n1_laplacian(x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let q = d + 1.0;
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rq = r.powf(q);
    let den = 1.0 + rq;
    // f' / r and f'' of the radial profile
    let fp_over_r = -q * r.powf(q - 2.0) / (den * den);
    let fpp = -q * (q - 1.0) * r.powf(q - 2.0) / (den * den) + 2.0 * q * q * r.powf(2.0 * q - 2.0) / den.powi(3);
    fpp + (d - 1.0) * fp_over_r
}

/// A kernel sampled for convolution against fields on `field_domain`.
///
/// Real axes are zero padded to twice their length so the convolution is the
/// linear one of the box-restricted field with the kernel truncated at one box
/// length; torus axes are periodized over images out to the real-axis extent.
#[derive(Debug, Clone)]
pub struct KernelSample {
    field_domain: DomainSpec,
    padded: DomainSpec,
    /// Kernel values on the padded grid, origin at the centre.
    pub values: ScalarField,
    /// Grid quadrature of the sampled kernel.
    pub l1_mass: f64,
    /// Mass over the whole space, when known.
    pub total_mass: Option<f64>,
    hat: Vec<Complex64>,
}

impl KernelSample {
    pub fn n1(field_domain: &DomainSpec) -> Result<Self> {
        let d = field_domain.dim();
        KernelSample::build(field_domain, n1_eval, Some(n1_exact_mass(d)))
    }

    /// Samples an arbitrary kernel with the same padding and periodization.
    pub fn build(
        field_domain: &DomainSpec,
        kernel: impl Fn(&[f64]) -> f64 + Sync,
        total_mass: Option<f64>,
    ) -> Result<Self> {
        KernelSample::build_with_reach(field_domain, kernel, total_mass, field_domain.length(0))
    }

    /// As `build`, periodizing torus axes over images within `reach` of the origin.
    pub fn build_with_reach(
        field_domain: &DomainSpec,
        kernel: impl Fn(&[f64]) -> f64 + Sync,
        total_mass: Option<f64>,
        reach: f64,
    ) -> Result<Self> {
        let padded = field_domain.extend_unbounded(2);
        let d = field_domain.dim();
        let k = field_domain.unbounded_axes();
        let reach = reach.max(TORUS_LENGTH);
        let images = (reach / TORUS_LENGTH).ceil() as i64;
        let torus_axes: Vec<usize> = (k..d).collect();
        let image_offsets: Vec<Vec<f64>> = {
            let mut out = vec![vec![0.0; torus_axes.len()]];
            for a in 0..torus_axes.len() {
                let mut next = Vec::new();
                for base in &out {
                    for m in -images..=images {
                        let mut v = base.clone();
                        v[a] = m as f64 * field_domain.length(torus_axes[a]);
                        next.push(v);
                    }
                }
                out = next;
            }
            out
        };
        let values: Vec<f64> = (0..padded.len())
            .into_par_iter()
            .map(|flat| {
                let x = padded.position(flat);
                let mut y = x.clone();
                image_offsets
                    .iter()
                    .map(|off| {
                        for (j, &a) in torus_axes.iter().enumerate() {
                            y[a] = x[a] + off[j];
                        }
                        kernel(&y)
                    })
                    .sum()
            })
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel sample".into()));
        }
        let values = ScalarField::from_parts(padded.clone(), values);
        let l1_mass = values.integral();
        let rolled = crate::grid::centred_to_origin(&values);
        let hat = spectral::forward(&padded, &rolled);
        Ok(KernelSample {
            field_domain: field_domain.clone(),
            padded,
            values,
            l1_mass,
            total_mass,
            hat,
        })
    }

    pub fn field_domain(&self) -> &DomainSpec {
        &self.field_domain
    }

    pub fn padded_domain(&self) -> &DomainSpec {
        &self.padded
    }

    /// Fraction of the total mass outside the sampled region.
    pub fn tail_fraction(&self) -> Option<f64> {
        self.total_mass.map(|m| (m - self.l1_mass) / m)
    }

    /// Index offsets placing the field box in the middle of the padded box.
    fn offsets(&self) -> Vec<usize> {
        (0..self.field_domain.dim())
            .map(|a| (self.padded.points(a) - self.field_domain.points(a)) / 2)
            .collect()
    }

    fn pad(&self, f: &ScalarField) -> Vec<f64> {
        let off = self.offsets();
        let mut out = vec![0.0; self.padded.len()];
        let fd = &self.field_domain;
        let mut idx = vec![0usize; fd.dim()];
        for (flat, &v) in f.values().iter().enumerate() {
            let src = fd.multi_index(flat);
            for a in 0..fd.dim() {
                idx[a] = src[a] + off[a];
            }
            out[self.padded.flat_index(&idx)] = v;
        }
        out
    }

    fn crop(&self, padded: &[f64]) -> ScalarField {
        let off = self.offsets();
        let fd = &self.field_domain;
        let mut idx = vec![0usize; fd.dim()];
        let values = (0..fd.len())
            .map(|flat| {
                let src = fd.multi_index(flat);
                for a in 0..fd.dim() {
                    idx[a] = src[a] + off[a];
                }
                padded[self.padded.flat_index(&idx)]
            })
            .collect();
        ScalarField::from_parts(fd.clone(), values)
    }

    /// `(f * K)(X) = Σ_Y f(Y) K(X - Y) dV` for `f` on the field domain.
    pub fn convolve(&self, f: &ScalarField) -> Result<ScalarField> {
        if f.domain() != &self.field_domain {
            return Err(Error::DomainMismatch);
        }
        let padded = self.pad(f);
        let mut fh = spectral::forward(&self.padded, &padded);
        let dv = self.padded.cell_volume();
        for (a, b) in fh.iter_mut().zip(&self.hat) {
            *a *= b * dv;
        }
        Ok(self.crop(&spectral::inverse(&self.padded, fh)))
    }

    /// Kernel value at field-grid offset `X` (restriction of the padded sample).
    pub fn restricted(&self) -> ScalarField {
        self.crop(self.values.values())
    }

    /// `∫ K(x, y) dy` over all axes but 0, as a function of the padded axis-0 coordinate.
    pub fn transverse_marginal(&self) -> Vec<f64> {
        let n0 = self.padded.points(0);
        let inner = self.padded.len() / n0;
        let dv_t = self.padded.cell_volume() / self.padded.spacing(0);
        let v = self.values.values();
        (0..n0)
            .map(|i| v[i * inner..(i + 1) * inner].iter().sum::<f64>() * dv_t)
            .collect()
    }
}

/// A measured or derived constant with its origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub value: f64,
    pub provenance: String,
    pub domain_hash: String,
}

impl Constant {
    pub fn new(value: f64, provenance: impl Into<String>, domain_hash: impl Into<String>) -> Self {
        Constant {
            value,
            provenance: provenance.into(),
            domain_hash: domain_hash.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsLedger {
    pub c0: Constant,
    pub c1: Constant,
    pub c_theta: Constant,
    pub eps0: Constant,
    pub eps1: Constant,
    pub c_f: Constant,
}

impl ConstantsLedger {
    /// Derives `ε0 = 1/(2 C0³ C1)` and `ε1 = ε0/(2 C0²)` from the measured inputs.
    pub fn from_measured(c0: Constant, c1: Constant, c_f: Constant) -> Result<Self> {
        if !(c0.value.is_finite() && c0.value > 1.0) {
            return Err(Error::InvalidArgument(format!("C0 = {} must exceed 1", c0.value)));
        }
        for (name, c) in [("C1", &c1), ("C_F", &c_f)] {
            if !(c.value.is_finite() && c.value > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} = {} must be positive", c.value)));
            }
        }
        let hash = c0.domain_hash.clone();
        let eps0 = 1.0 / (2.0 * c0.value.powi(3) * c1.value);
        let eps1 = eps0 / (2.0 * c0.value.powi(2));
        Ok(ConstantsLedger {
            c_theta: Constant::new(crate::energy::C_THETA, "closed form for the cos² cutoff", hash.clone()),
            eps0: Constant::new(eps0, "1/(2 C0^3 C1)", hash.clone()),
            eps1: Constant::new(eps1, "eps0/(2 C0^2)", hash),
            c0,
            c1,
            c_f,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Components of the `C0` estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C0Estimate {
    /// Max of `(N1*N1)/N1` over offsets in the field box.
    pub self_conv_upper: f64,
    /// Max of `N1/(N1*N1)`.
    pub self_conv_lower: f64,
    /// Max of `ρ(0)/(ρ(0)*N1)` over both signs.
    pub rho_ratio: f64,
    pub l1_mass: f64,
    /// Largest of the above times `C0_MARGIN`.
    pub c0: f64,
}

/// Measures `C0` on the grid of `kernel` from the kernel conditions and, when
/// given, the initial energy density.
pub fn estimate_c0(kernel: &KernelSample, rho0: Option<&EnergyDensity>) -> Result<C0Estimate> {
    let domain = kernel.field_domain();
    // self convolution on a box four times longer, read off over offsets
    // spanning one field box either side of the origin
    let big = domain.extend_unbounded(4);
    let big_kernel = KernelSample::build_with_reach(&big, n1_eval, Some(n1_exact_mass(domain.dim())), domain.length(0))?;
    let n1_big = big_kernel.restricted();
    let self_conv = big_kernel.convolve(&n1_big)?;
    let window = domain.extend_unbounded(2);
    let half: Vec<f64> = (0..domain.dim()).map(|a| 0.5 * window.length(a)).collect();
    let mut upper: f64 = 0.0;
    let mut lower: f64 = 0.0;
    for (flat, (&c, &n)) in self_conv.values().iter().zip(n1_big.values()).enumerate() {
        let x = big.position(flat);
        if x.iter().zip(&half).any(|(v, h)| v.abs() >= *h) {
            continue;
        }
        if !(c > 0.0 && n > 0.0) {
            return Err(Error::Unbounded(format!("kernel ratio at offset {x:?}")));
        }
        upper = upper.max(c / n);
        lower = lower.max(n / c);
    }

    let mut rho_ratio: f64 = 0.0;
    if let Some(density) = rho0 {
        for rho in [&density.rho_p, &density.rho_m] {
            let scale = rho.max_abs();
            if scale == 0.0 {
                continue;
            }
            let conv = kernel.convolve(rho)?;
            for (flat, (&r, &c)) in rho.values().iter().zip(conv.values()).enumerate() {
                if r <= 1e-12 * scale {
                    continue;
                }
                if !(c > 0.0) {
                    return Err(Error::Unbounded(format!(
                        "rho(0)/(rho(0)*N1) at {:?}",
                        domain.position(flat)
                    )));
                }
                rho_ratio = rho_ratio.max(r / c);
            }
        }
    }

    let l1_mass = kernel.l1_mass.max(kernel.total_mass.unwrap_or(0.0));
    let worst = upper.max(lower).max(rho_ratio).max(l1_mass);
    if !worst.is_finite() {
        return Err(Error::Unbounded("C0 estimate is not finite".into()));
    }
    Ok(C0Estimate {
        self_conv_upper: upper,
        self_conv_lower: lower,
        rho_ratio,
        l1_mass,
        c0: (C0_MARGIN * worst).max(1.0 + 1e-9),
    })
}

/// Largest `min(N1(Y), N1(X-Y)) / N1(X)` over random pairs, with `|X|, |Y|`
/// log-uniform in `[1e-2, 1e3]` and uniform directions.
pub fn min_max_split_check(d: usize, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let r = 10f64.powf(rng.gen_range(-2.0..3.0));
        let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        v.iter_mut().for_each(|a| *a *= r / norm);
        v
    };
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = point(&mut rng);
        // half the draws place Y near X/2, where the ratio peaks
        let y: Vec<f64> = if rng.gen_bool(0.5) {
            let jitter = point(&mut rng);
            x.iter().zip(&jitter).map(|(a, j)| 0.5 * a + 1e-3 * j).collect()
        } else {
            point(&mut rng)
        };
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let ratio = n1_eval(&y).min(n1_eval(&xy)) / n1_eval(&x);
        worst = worst.max(ratio);
    }
    worst
}
