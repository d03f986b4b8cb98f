//! Multi-dimensional FFTs over row-major grids and per-domain wavenumber tables.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::grid::DomainSpec;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
    static TABLES: RefCell<HashMap<TableKey, Arc<SpectralGrid>>> = RefCell::new(HashMap::new());
}

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

/// In-place unnormalized transform along every axis of a row-major array.
pub(crate) fn transform(data: &mut [Complex64], shape: &[usize], direction: FftDirection) {
    let total: usize = shape.iter().product();
    debug_assert_eq!(total, data.len());
    let rank = shape.len();
    let mut scratch = Vec::new();
    for axis in 0..rank {
        let len = shape[axis];
        let fft = plan(len, direction);
        let inner: usize = shape[axis + 1..].iter().product();
        if inner == 1 {
            fft.process(data);
            continue;
        }
        let outer: usize = shape[..axis].iter().product();
        scratch.resize(len * inner, Complex64::default());
        for o in 0..outer {
            let block = &mut data[o * len * inner..(o + 1) * len * inner];
            // transpose block (len x inner) -> (inner x len) so lines are contiguous
            for j in 0..len {
                for i in 0..inner {
                    scratch[i * len + j] = block[j * inner + i];
                }
            }
            fft.process(&mut scratch);
            for j in 0..len {
                for i in 0..inner {
                    block[j * inner + i] = scratch[i * len + j];
                }
            }
        }
    }
}

pub(crate) fn forward(domain: &DomainSpec, values: &[f64]) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(&mut data, domain.shape(), FftDirection::Forward);
    data
}

pub(crate) fn inverse(domain: &DomainSpec, mut data: Vec<Complex64>) -> Vec<f64> {
    transform(&mut data, domain.shape(), FftDirection::Inverse);
    let scale = 1.0 / data.len() as f64;
    data.into_iter().map(|c| c.re * scale).collect()
}

pub(crate) fn forward_line(values: &[f64]) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan(data.len(), FftDirection::Forward).process(&mut data);
    data
}

pub(crate) fn inverse_line(mut data: Vec<Complex64>) -> Vec<f64> {
    plan(data.len(), FftDirection::Inverse).process(&mut data);
    let scale = 1.0 / data.len() as f64;
    data.into_iter().map(|c| c.re * scale).collect()
}

/// Signed integer mode number for FFT index `j` of an `n`-point axis.
pub(crate) fn mode_number(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Angular wavenumbers of an axis of length `length` sampled at `n` points, FFT order.
pub(crate) fn line_wavenumbers(n: usize, length: f64) -> Vec<f64> {
    (0..n)
        .map(|j| 2.0 * PI * mode_number(j, n) as f64 / length)
        .collect()
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct TableKey {
    shape: Vec<usize>,
    lengths: Vec<u64>,
}

/// Per-mode wavenumber data for a domain.
pub(crate) struct SpectralGrid {
    /// wavenumber vector per mode, unused trailing entries zero
    pub kvec: Vec<[f64; 3]>,
    pub k2: Vec<f64>,
    /// per-axis Nyquist membership of each mode
    pub nyquist: Vec<[bool; 3]>,
    /// true when the mode survives 2/3-rule truncation
    pub keep: Vec<bool>,
}

impl SpectralGrid {
    pub fn any_nyquist(&self, mode: usize) -> bool {
        let n = &self.nyquist[mode];
        n[0] || n[1] || n[2]
    }
}

pub(crate) fn tables(domain: &DomainSpec) -> Arc<SpectralGrid> {
    let key = TableKey {
        shape: domain.shape().to_vec(),
        lengths: domain.lengths().iter().map(|l| l.to_bits()).collect(),
    };
    TABLES.with(|t| {
        t.borrow_mut()
            .entry(key)
            .or_insert_with(|| Arc::new(build_tables(domain)))
            .clone()
    })
}

fn build_tables(domain: &DomainSpec) -> SpectralGrid {
    let shape = domain.shape();
    let rank = shape.len();
    let total = domain.len();
    let per_axis: Vec<Vec<f64>> = (0..rank)
        .map(|a| line_wavenumbers(shape[a], domain.length(a)))
        .collect();
    let mut kvec = Vec::with_capacity(total);
    let mut k2 = Vec::with_capacity(total);
    let mut nyquist = Vec::with_capacity(total);
    let mut keep = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    for _ in 0..total {
        let mut kv = [0.0; 3];
        let mut ny = [false; 3];
        let mut kept = true;
        for a in 0..rank {
            kv[a] = per_axis[a][idx[a]];
            ny[a] = idx[a] == shape[a] / 2;
            let m = mode_number(idx[a], shape[a]).unsigned_abs() as usize;
            if 3 * m > shape[a] {
                kept = false;
            }
        }
        k2.push(kv.iter().map(|k| k * k).sum());
        kvec.push(kv);
        nyquist.push(ny);
        keep.push(kept);
        for a in (0..rank).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    SpectralGrid {
        kvec,
        k2,
        nyquist,
        keep,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_inverse_roundtrip() {
        let domain = DomainSpec::new(2, 1, vec![10.0, 2.0 * PI], vec![16, 8]).unwrap();
        let values: Vec<f64> = (0..domain.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let back = inverse(&domain, forward(&domain, &values));
        for (a, b) in values.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn mode_numbers_follow_fft_order() {
        let m: Vec<i64> = (0..8).map(|j| mode_number(j, 8)).collect();
        assert_eq!(m, vec![0, 1, 2, 3, -4, -3, -2, -1]);
    }

    #[test]
    fn dealias_mask_keeps_low_modes() {
        let domain = DomainSpec::new(2, 2, vec![12.0, 12.0], vec![12, 12]).unwrap();
        let t = tables(&domain);
        // |m| <= 4 survives on a 12-point axis
        let kept = t.keep.iter().filter(|&&k| k).count();
        assert_eq!(kept, 9 * 9);
    }
}
