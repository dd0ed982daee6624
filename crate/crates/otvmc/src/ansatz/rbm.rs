//! Restricted Boltzmann machine internals.
//!
//! Parameter layout: (a_1..a_N, b_1..b_N', w_11..w_NN') with w stored
//! row-major by visible site, w_ij at offset N + N' + i*N' + j.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::spin::SpinConfiguration;

#[inline]
fn w(params: &DVector<Complex64>, n: usize, np: usize, i: usize, j: usize) -> Complex64 {
    params[n + np + i * np + j]
}

/// log(2 cosh z), stable for large |Re z|: s z + ln(1 + e^{-2 s z}) with
/// s = sign(Re z); the exponential argument never has positive real part.
#[inline]
pub fn log_2cosh(z: Complex64) -> Complex64 {
    let s = if z.re >= 0.0 { 1.0 } else { -1.0 };
    s * z + (Complex64::new(1.0, 0.0) + (-2.0 * s * z).exp()).ln()
}

/// Hidden-unit arguments gamma_j = b_j + sum_i w_ij sigma_i.
pub fn hidden_arguments(
    n: usize,
    np: usize,
    params: &DVector<Complex64>,
    x: &SpinConfiguration,
) -> Vec<Complex64> {
    let mut gamma: Vec<Complex64> = (0..np).map(|j| params[n + j]).collect();
    for i in 0..n {
        let si = x.spin(i);
        for (j, g) in gamma.iter_mut().enumerate() {
            *g += si * w(params, n, np, i, j);
        }
    }
    gamma
}

pub fn log_amplitude(
    n: usize,
    np: usize,
    params: &DVector<Complex64>,
    x: &SpinConfiguration,
) -> Complex64 {
    let gamma = hidden_arguments(n, np, params, x);
    log_amplitude_from_gamma(n, params, x, &gamma)
}

pub fn log_amplitude_from_gamma(
    n: usize,
    params: &DVector<Complex64>,
    x: &SpinConfiguration,
    gamma: &[Complex64],
) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        acc += x.spin(i) * params[i];
    }
    for &g in gamma {
        acc += log_2cosh(g);
    }
    acc
}

pub fn ratio_single(
    n: usize,
    np: usize,
    params: &DVector<Complex64>,
    x: &SpinConfiguration,
    gamma: &[Complex64],
    a: usize,
) -> Complex64 {
    let sa = x.spin(a);
    let mut delta = -2.0 * sa * params[a];
    for (j, &g) in gamma.iter().enumerate() {
        delta += log_2cosh(g - 2.0 * sa * w(params, n, np, a, j)) - log_2cosh(g);
    }
    delta.exp()
}

pub fn ratio_double(
    n: usize,
    np: usize,
    params: &DVector<Complex64>,
    x: &SpinConfiguration,
    gamma: &[Complex64],
    a: usize,
    b: usize,
) -> Complex64 {
    let sa = x.spin(a);
    let sb = x.spin(b);
    let mut delta = -2.0 * sa * params[a] - 2.0 * sb * params[b];
    for (j, &g) in gamma.iter().enumerate() {
        let shifted = g - 2.0 * sa * w(params, n, np, a, j) - 2.0 * sb * w(params, n, np, b, j);
        delta += log_2cosh(shifted) - log_2cosh(g);
    }
    delta.exp()
}

pub fn apply_flip(
    n: usize,
    np: usize,
    params: &DVector<Complex64>,
    x: &SpinConfiguration,
    gamma: &mut [Complex64],
    a: usize,
) {
    let sa = x.spin(a);
    for (j, g) in gamma.iter_mut().enumerate() {
        *g -= 2.0 * sa * w(params, n, np, a, j);
    }
}

/// O_k(x): (sigma_i; tanh gamma_j; sigma_i tanh gamma_j).
pub fn derivative_row(
    n: usize,
    np: usize,
    x: &SpinConfiguration,
    gamma: &[Complex64],
    out: &mut [Complex64],
) {
    let tanh: Vec<Complex64> = gamma.iter().map(|g| g.tanh()).collect();
    for i in 0..n {
        out[i] = Complex64::new(x.spin(i), 0.0);
    }
    out[n..n + np].copy_from_slice(&tanh);
    for i in 0..n {
        let si = x.spin(i);
        for (j, &t) in tanh.iter().enumerate() {
            out[n + np + i * np + j] = si * t;
        }
    }
}
