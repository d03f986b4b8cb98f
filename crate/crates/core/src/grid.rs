//! Computational domain, grid fields, spectral calculus and convolutions.
//!
//! The domain is a periodic box standing in for `R^k x T^(d-k)`. Axis 0 is the
//! direction of the background field `B0`; axes `0..k` are truncated copies of
//! the real line and axes `k..d` are genuine tori. Grid coordinates are
//! centred: along every axis `x_i = -L/2 + i*dx`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::spectral;

/// Minimum length of a truncated real axis.
pub const MIN_UNBOUNDED_LENGTH: f64 = 8.0 * PI;
/// Length of every torus axis.
pub const TORUS_LENGTH: f64 = 2.0 * PI;
/// Width of the boundary band watched by the truncation guard.
pub const GUARD_WIDTH: f64 = 2.0;
/// Allowed field magnitude inside the guard band, relative to the global maximum.
pub const GUARD_RELATIVE: f64 = 1e-6;
/// Kernel mass outside the sampled box above which convolutions warn.
pub const TAIL_WARN_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    d: usize,
    k: usize,
    lengths: Vec<f64>,
    n: Vec<usize>,
}

/// Builds the standard domain: real axes of length `length` with `n` points,
/// torus axes of length 2π resolved at the same spacing.
pub fn make_domain(d: usize, k: usize, length: f64, n: usize) -> Result<DomainSpec> {
    if !(2..=3).contains(&d) {
        return Err(Error::InvalidDomain(format!("d = {d} outside {{2, 3}}")));
    }
    if k < 1 || k > d {
        return Err(Error::InvalidDomain(format!("k = {k} outside [1, {d}]")));
    }
    if n < 8 || n % 2 != 0 {
        return Err(Error::InvalidDomain(format!("n = {n} must be even and >= 8")));
    }
    if !(length >= MIN_UNBOUNDED_LENGTH) || !length.is_finite() {
        return Err(Error::InvalidDomain(format!(
            "box length {length} below {MIN_UNBOUNDED_LENGTH}"
        )));
    }
    let torus_points = torus_points_for(length, n);
    let mut lengths = Vec::with_capacity(d);
    let mut points = Vec::with_capacity(d);
    for axis in 0..d {
        if axis < k {
            lengths.push(length);
            points.push(n);
        } else {
            lengths.push(TORUS_LENGTH);
            points.push(torus_points);
        }
    }
    DomainSpec::new(d, k, lengths, points)
}

/// Point count that gives a 2π axis the spacing `length / n`, rounded to even, at least 8.
fn torus_points_for(length: f64, n: usize) -> usize {
    let exact = n as f64 * TORUS_LENGTH / length;
    let even = 2 * ((exact / 2.0).round() as usize);
    even.max(8)
}

impl DomainSpec {
    pub fn new(d: usize, k: usize, lengths: Vec<f64>, n: Vec<usize>) -> Result<Self> {
        if !(2..=3).contains(&d) {
            return Err(Error::InvalidDomain(format!("d = {d} outside {{2, 3}}")));
        }
        if k < 1 || k > d {
            return Err(Error::InvalidDomain(format!("k = {k} outside [1, {d}]")));
        }
        if lengths.len() != d || n.len() != d {
            return Err(Error::InvalidDomain("per-axis vectors must have length d".into()));
        }
        if let Some(bad) = n.iter().find(|&&p| p < 8 || p % 2 != 0) {
            return Err(Error::InvalidDomain(format!("n = {bad} must be even and >= 8")));
        }
        if lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidDomain("lengths must be positive".into()));
        }
        Ok(DomainSpec { d, k, lengths, n })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of truncated real axes.
    pub fn unbounded_axes(&self) -> usize {
        self.k
    }

    pub fn is_torus_axis(&self, axis: usize) -> bool {
        axis >= self.k
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.lengths[axis]
    }

    pub fn shape(&self) -> &[usize] {
        &self.n
    }

    pub fn points(&self, axis: usize) -> usize {
        self.n[axis]
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.n[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.d).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.d).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn coords(&self, axis: usize) -> Vec<f64> {
        let h = self.spacing(axis);
        let x0 = -0.5 * self.lengths[axis];
        (0..self.n[axis]).map(|i| x0 + i as f64 * h).collect()
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.d];
        for a in (0..self.d - 1).rev() {
            s[a] = s[a + 1] * self.n[a + 1];
        }
        s
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.d];
        for a in (0..self.d).rev() {
            idx[a] = flat % self.n[a];
            flat /= self.n[a];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.n).fold(0, |acc, (i, n)| acc * n + i)
    }

    pub fn position(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(a, &i)| -0.5 * self.lengths[a] + i as f64 * self.spacing(a))
            .collect()
    }

    /// Same spacing, real axes lengthened by `factor`.
    pub fn extend_unbounded(&self, factor: usize) -> DomainSpec {
        let mut out = self.clone();
        for a in 0..self.k {
            out.lengths[a] *= factor as f64;
            out.n[a] *= factor;
        }
        out
    }

    /// Short content hash used to tag measured constants.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!("d={};k={}", self.d, self.k));
        for (l, n) in self.lengths.iter().zip(&self.n) {
            hasher.update(format!(";{:016x}:{}", l.to_bits(), n));
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    domain: DomainSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(domain: DomainSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a grid of {} points",
                values.len(),
                domain.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("scalar field value at index {i}")));
        }
        Ok(ScalarField { domain, values })
    }

    pub(crate) fn from_parts(domain: DomainSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), domain.len());
        ScalarField { domain, values }
    }

    pub fn zeros(domain: &DomainSpec) -> Self {
        ScalarField {
            domain: domain.clone(),
            values: vec![0.0; domain.len()],
        }
    }

    pub fn constant(domain: &DomainSpec, c: f64) -> Self {
        ScalarField {
            domain: domain.clone(),
            values: vec![c; domain.len()],
        }
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(domain: &DomainSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let coords: Vec<Vec<f64>> = (0..domain.dim()).map(|a| domain.coords(a)).collect();
        let mut x = vec![0.0; domain.dim()];
        let values = (0..domain.len())
            .map(|flat| {
                let idx = domain.multi_index(flat);
                for a in 0..domain.dim() {
                    x[a] = coords[a][idx[a]];
                }
                f(&x)
            })
            .collect();
        ScalarField {
            domain: domain.clone(),
            values,
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Index and value of the maximum.
    pub fn argmax(&self) -> (usize, f64) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.domain.cell_volume()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.domain.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.domain.cell_volume()).sqrt()
    }

    pub fn inner(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.domain.cell_volume()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField::from_parts(self.domain.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        debug_assert_eq!(self.domain, other.domain);
        ScalarField::from_parts(
            self.domain.clone(),
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn scale(&self, c: f64) -> ScalarField {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn add_assign_scaled(&mut self, other: &ScalarField, c: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    /// Values along the axis-0 line through the grid point nearest `through`.
    pub fn axis_line(&self, through: &[f64]) -> Vec<f64> {
        let d = self.domain.dim();
        let mut idx: Vec<usize> = (0..d)
            .map(|a| {
                let h = self.domain.spacing(a);
                let i = ((through[a] + 0.5 * self.domain.length(a)) / h).round() as i64;
                i.rem_euclid(self.domain.points(a) as i64) as usize
            })
            .collect();
        (0..self.domain.points(0))
            .map(|i| {
                idx[0] = i;
                self.values[self.domain.flat_index(&idx)]
            })
            .collect()
    }

    /// Maximum over all axes except 0, per axis-0 index.
    pub fn transverse_max(&self) -> Vec<f64> {
        let n0 = self.domain.points(0);
        let inner = self.domain.len() / n0;
        (0..n0)
            .map(|i| {
                self.values[i * inner..(i + 1) * inner]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("vector field needs components".into()))?;
        if components.len() != first.domain().dim() {
            return Err(Error::InvalidArgument(format!(
                "{} components in a {}-dimensional domain",
                components.len(),
                first.domain().dim()
            )));
        }
        if components.iter().any(|c| c.domain() != first.domain()) {
            return Err(Error::DomainMismatch);
        }
        Ok(VectorField { components })
    }

    pub(crate) fn from_parts(components: Vec<ScalarField>) -> Self {
        VectorField { components }
    }

    pub fn zeros(domain: &DomainSpec) -> Self {
        VectorField {
            components: (0..domain.dim()).map(|_| ScalarField::zeros(domain)).collect(),
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        self.components[0].domain()
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &ScalarField {
        &self.components[axis]
    }

    pub fn components_mut(&mut self) -> &mut [ScalarField] {
        &mut self.components
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.is_finite())
    }

    pub fn scale(&self, c: f64) -> VectorField {
        VectorField::from_parts(self.components.iter().map(|f| f.scale(c)).collect())
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        VectorField::from_parts(
            self.components.iter().zip(&other.components).map(|(a, b)| a.add(b)).collect(),
        )
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        VectorField::from_parts(
            self.components.iter().zip(&other.components).map(|(a, b)| a.sub(b)).collect(),
        )
    }

    /// Pointwise Euclidean magnitude squared.
    pub fn magnitude_sq(&self) -> ScalarField {
        let mut out = ScalarField::zeros(self.domain());
        for c in &self.components {
            for (o, v) in out.values.iter_mut().zip(&c.values) {
                *o += v * v;
            }
        }
        out
    }

    /// Sup over the grid of the pointwise magnitude.
    pub fn max_norm(&self) -> f64 {
        self.magnitude_sq().max().max(0.0).sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.magnitude_sq().integral().sqrt()
    }

    pub fn divergence(&self) -> ScalarField {
        let mut out = ScalarField::zeros(self.domain());
        for (a, c) in self.components.iter().enumerate() {
            out.add_assign_scaled(&derivative(c, a, 1), 1.0);
        }
        out
    }

    pub fn is_solenoidal(&self) -> bool {
        let scale = self.max_norm();
        self.divergence().max_abs() <= SOLENOIDAL_TOL * scale.max(f64::MIN_POSITIVE)
    }
}

/// Allowed spectral divergence relative to the field's sup norm.
pub const SOLENOIDAL_TOL: f64 = 1e-10;

/// Spectral derivative of order `order` along `axis` (0-based).
///
/// Odd orders drop the Nyquist mode of that axis.
pub fn derivative(f: &ScalarField, axis: usize, order: u32) -> ScalarField {
    let mut orders = [0u32; 3];
    orders[axis] = order;
    partial(f, &orders[..f.domain().dim()])
}

/// Mixed spectral derivative `∂^a f` for the multi-index `a`.
pub fn partial(f: &ScalarField, multi: &[u32]) -> ScalarField {
    let domain = f.domain();
    let hat = spectral::forward(domain, f.values());
    ScalarField::from_parts(domain.clone(), spectral::inverse(domain, apply_partial(domain, hat, multi)))
}

pub(crate) fn apply_partial(domain: &DomainSpec, mut hat: Vec<Complex64>, multi: &[u32]) -> Vec<Complex64> {
    let t = spectral::tables(domain);
    let total: u32 = multi.iter().sum();
    if total == 0 {
        return hat;
    }
    let phase = match total % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    };
    for (m, h) in hat.iter_mut().enumerate() {
        let mut factor = 1.0;
        for (a, &order) in multi.iter().enumerate() {
            if order == 0 {
                continue;
            }
            if order % 2 == 1 && t.nyquist[m][a] {
                factor = 0.0;
                break;
            }
            factor *= t.kvec[m][a].powi(order as i32);
        }
        *h *= phase * factor;
    }
    hat
}

/// Spectral Laplacian.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let domain = f.domain();
    let t = spectral::tables(domain);
    let mut hat = spectral::forward(domain, f.values());
    for (h, k2) in hat.iter_mut().zip(&t.k2) {
        *h *= -k2;
    }
    ScalarField::from_parts(domain.clone(), spectral::inverse(domain, hat))
}

/// Orthogonal projection onto divergence-free fields, `u - ∇Δ⁻¹(∇·u)`.
///
/// Nyquist modes are removed; the mean mode passes through.
pub fn leray_project(u: &VectorField) -> VectorField {
    let domain = u.domain();
    let hats: Vec<Vec<Complex64>> = u
        .components()
        .iter()
        .map(|c| spectral::forward(domain, c.values()))
        .collect();
    let projected = project_hats(domain, hats);
    VectorField::from_parts(
        projected
            .into_iter()
            .map(|h| ScalarField::from_parts(domain.clone(), spectral::inverse(domain, h)))
            .collect(),
    )
}

pub(crate) fn project_hats(domain: &DomainSpec, mut hats: Vec<Vec<Complex64>>) -> Vec<Vec<Complex64>> {
    let t = spectral::tables(domain);
    let d = domain.dim();
    for m in 0..domain.len() {
        if t.any_nyquist(m) {
            for h in hats.iter_mut() {
                h[m] = Complex64::default();
            }
            continue;
        }
        let k2 = t.k2[m];
        if k2 == 0.0 {
            continue;
        }
        let k = &t.kvec[m];
        let mut kdotu = Complex64::default();
        for a in 0..d {
            kdotu += hats[a][m] * k[a];
        }
        for a in 0..d {
            hats[a][m] -= kdotu * (k[a] / k2);
        }
    }
    hats
}

/// A kernel sampled on a grid with its origin at the box centre.
#[derive(Debug, Clone)]
pub struct SampledKernel {
    pub values: ScalarField,
    /// Mass of the untruncated kernel, when known in closed form.
    pub total_mass: Option<f64>,
}

impl SampledKernel {
    /// Samples a radial profile at the centred grid distance `|x|`.
    pub fn radial(domain: &DomainSpec, profile: impl Fn(f64) -> f64, total_mass: Option<f64>) -> Self {
        let values = ScalarField::from_fn(domain, |x| profile(x.iter().map(|v| v * v).sum::<f64>().sqrt()));
        SampledKernel { values, total_mass }
    }

    pub fn grid_mass(&self) -> f64 {
        self.values.integral()
    }

    /// Fraction of the total mass missing from the sampled box.
    pub fn tail_fraction(&self) -> Option<f64> {
        self.total_mass.map(|m| ((m - self.grid_mass()) / m).abs())
    }
}

/// Grid-quadrature convolution `Σ_Y f(Y) K(X-Y) dV` on the periodic box via FFT.
pub fn periodic_convolve(f: &ScalarField, kernel: &SampledKernel) -> Result<ScalarField> {
    let domain = f.domain();
    if kernel.values.domain() != domain {
        return Err(Error::DomainMismatch);
    }
    if let Some(tail) = kernel.tail_fraction() {
        if tail > TAIL_WARN_FRACTION {
            log::warn!("kernel mass outside the box: {:.3e} of total", tail);
        }
    }
    let shifted = centred_to_origin(&kernel.values);
    let kh = spectral::forward(domain, &shifted);
    let mut fh = spectral::forward(domain, f.values());
    let dv = domain.cell_volume();
    for (a, b) in fh.iter_mut().zip(&kh) {
        *a *= b * dv;
    }
    Ok(ScalarField::from_parts(domain.clone(), spectral::inverse(domain, fh)))
}

/// Rolls a centred sample so that the origin sits at index 0.
pub(crate) fn centred_to_origin(k: &ScalarField) -> Vec<f64> {
    let domain = k.domain();
    let shape = domain.shape();
    let mut out = vec![0.0; domain.len()];
    for (flat, &v) in k.values().iter().enumerate() {
        let idx = domain.multi_index(flat);
        let rolled: Vec<usize> = idx
            .iter()
            .zip(shape)
            .map(|(&i, &n)| (i + n - n / 2) % n)
            .collect();
        out[domain.flat_index(&rolled)] = v;
    }
    out
}

/// Direct-sum periodic convolution with a compactly supported radial weight.
///
/// Used for the cutoff and ball kernels, where exact zeros and exact
/// positivity of the result matter.
#[derive(Debug, Clone)]
pub struct Stencil {
    domain: DomainSpec,
    offsets: Vec<[isize; 3]>,
    weights: Vec<f64>,
}

impl Stencil {
    /// Stencil of grid offsets within `radius`, weighted by `profile(r) * dV`.
    pub fn radial(domain: &DomainSpec, radius: f64, profile: impl Fn(f64) -> f64) -> Result<Self> {
        let d = domain.dim();
        for a in 0..d {
            if 2.0 * radius >= domain.length(a) {
                return Err(Error::InvalidArgument(format!(
                    "stencil radius {radius} wraps axis {a} of length {}",
                    domain.length(a)
                )));
            }
        }
        let dv = domain.cell_volume();
        let reach: Vec<isize> = (0..d)
            .map(|a| (radius / domain.spacing(a)).floor() as isize)
            .collect();
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        let r_cut = radius * (1.0 + 1e-12);
        let mut o = [0isize; 3];
        let ranges: Vec<isize> = (0..3).map(|a| if a < d { reach[a] } else { 0 }).collect();
        for o0 in -ranges[0]..=ranges[0] {
            for o1 in -ranges[1]..=ranges[1] {
                for o2 in -ranges[2]..=ranges[2] {
                    o[0] = o0;
                    o[1] = o1;
                    o[2] = o2;
                    let r2: f64 = (0..d)
                        .map(|a| (o[a] as f64 * domain.spacing(a)).powi(2))
                        .sum();
                    let r = r2.sqrt();
                    if r > r_cut {
                        continue;
                    }
                    let w = profile(r);
                    if w != 0.0 {
                        offsets.push(o);
                        weights.push(w * dv);
                    }
                }
            }
        }
        Ok(Stencil {
            domain: domain.clone(),
            offsets,
            weights,
        })
    }

    /// Indicator of the closed ball of radius `radius`.
    pub fn ball(domain: &DomainSpec, radius: f64) -> Result<Self> {
        Stencil::radial(domain, radius, |_| 1.0)
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Sum of the weights, i.e. the grid quadrature of the kernel.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn apply(&self, f: &ScalarField) -> ScalarField {
        let domain = &self.domain;
        debug_assert_eq!(f.domain(), domain);
        let d = domain.dim();
        let mut shape = [1usize; 3];
        shape[3 - d..].copy_from_slice(domain.shape());
        let (n0, n1, n2) = (shape[0] as isize, shape[1] as isize, shape[2] as isize);
        let src = f.values();
        let mut out = vec![0.0; domain.len()];
        for (o, &w) in self.offsets.iter().zip(&self.weights) {
            // pad offsets to rank 3 with the contiguous axis last
            let mut off = [0isize; 3];
            off[3 - d..].copy_from_slice(&o[..d]);
            for i0 in 0..n0 {
                let s0 = (i0 - off[0]).rem_euclid(n0);
                for i1 in 0..n1 {
                    let s1 = (i1 - off[1]).rem_euclid(n1);
                    let dst_row = ((i0 * n1 + i1) * n2) as usize;
                    let src_row = ((s0 * n1 + s1) * n2) as usize;
                    let shift = off[2].rem_euclid(n2) as usize;
                    let n2u = n2 as usize;
                    // out[j] += w * src[(j - shift) mod n2]
                    let (dst_a, dst_b) = out[dst_row..dst_row + n2u].split_at_mut(shift);
                    let srow = &src[src_row..src_row + n2u];
                    for (o, s) in dst_b.iter_mut().zip(&srow[..n2u - shift]) {
                        *o += w * s;
                    }
                    for (o, s) in dst_a.iter_mut().zip(&srow[n2u - shift..]) {
                        *o += w * s;
                    }
                }
            }
        }
        ScalarField::from_parts(domain.clone(), out)
    }
}

/// Result of the truncation guard on the real axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardStatus {
    pub boundary_max: f64,
    pub global_max: f64,
    pub ok: bool,
}

/// Largest magnitude within `GUARD_WIDTH` of the faces of the real axes,
/// compared against `GUARD_RELATIVE` times the global maximum.
pub fn boundary_guard(fields: &[&ScalarField]) -> GuardStatus {
    let mut boundary_max: f64 = 0.0;
    let mut global_max: f64 = 0.0;
    for f in fields {
        let domain = f.domain();
        let coords: Vec<Vec<f64>> = (0..domain.unbounded_axes()).map(|a| domain.coords(a)).collect();
        for (flat, v) in f.values().iter().enumerate() {
            let a = v.abs();
            global_max = global_max.max(a);
            let idx = domain.multi_index(flat);
            let near = (0..domain.unbounded_axes()).any(|ax| {
                let x = coords[ax][idx[ax]];
                let half = 0.5 * domain.length(ax);
                x <= -half + GUARD_WIDTH || x >= half - GUARD_WIDTH
            });
            if near {
                boundary_max = boundary_max.max(a);
            }
        }
    }
    GuardStatus {
        boundary_max,
        global_max,
        ok: boundary_max <= GUARD_RELATIVE * global_max,
    }
}

/// Multiplicity convention inside `|∇^j z|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeNorm {
    /// Frobenius norm of the derivative tensor: weight `j!/a!` on `∂^a`.
    #[default]
    Frobenius,
    /// Each multi-index counted once.
    MultiIndex,
}

/// Multi-indices of total order `order` in `d` variables with their weights.
pub fn multi_indices(d: usize, order: u32, norm: DerivativeNorm) -> Vec<(Vec<u32>, f64)> {
    let mut out = Vec::new();
    let mut current = vec![0u32; d];
    fill_indices(0, order, &mut current, &mut out);
    out.into_iter()
        .map(|a| {
            let w = match norm {
                DerivativeNorm::Frobenius => multinomial(&a),
                DerivativeNorm::MultiIndex => 1.0,
            };
            (a, w)
        })
        .collect()
}

fn fill_indices(axis: usize, remaining: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if axis == current.len() - 1 {
        current[axis] = remaining;
        out.push(current.clone());
        return;
    }
    for v in 0..=remaining {
        current[axis] = v;
        fill_indices(axis + 1, remaining - v, current, out);
    }
}

fn multinomial(a: &[u32]) -> f64 {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    let total: u32 = a.iter().sum();
    fact(total) / a.iter().map(|&v| fact(v)).product::<f64>()
}

/// Volume of the unit ball in dimension `d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => PI.powf(d as f64 / 2.0) / gamma_half_integer(d as f64 / 2.0 + 1.0),
    }
}

fn gamma_half_integer(x: f64) -> f64 {
    // Γ on positive integers and half integers
    if (x - x.round()).abs() < 1e-12 {
        (1..x.round() as u64).map(|i| i as f64).product()
    } else {
        let mut g = PI.sqrt();
        let mut t = 0.5;
        while t < x - 1e-12 {
            g *= t;
            t += 1.0;
        }
        g
    }
}
