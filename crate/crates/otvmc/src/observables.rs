//! Collective-spin observables: per-trajectory Monte Carlo estimators of
//! magnetization and spin covariance, the Wineland squeezing parameter,
//! and the ensemble reduction across trajectories.
//!
//! Conventions: M_i = (1/N) sum_a <sigma_a^i> and
//! C_ij = (1/2)<{m_i, m_j}> - M_i M_j with m_i the normalized collective
//! spin component. The covariance of the unconditional (ensemble) state is
//! formed from ensemble-averaged first and raw second moments, so each
//! trajectory carries its raw second moments G alongside C.

use num_complex::Complex64;

use crate::ansatz::AnsatzState;
use crate::error::{Error, Result};
use crate::model::SseMode;
use crate::spin::SpinConfiguration;

/// Magnetization and covariance estimated from one trajectory's sample
/// batch. `g` holds the raw symmetrized second moments the ensemble
/// reduction needs; `c = g - m m^T` is the per-trajectory covariance.
/// `c_err` reports the scatter of the second-moment estimators (the
/// first-moment contribution to the covariance error is subdominant).
#[derive(Debug, Clone, Copy)]
pub struct CollectiveSpinEstimate {
    pub m: [f64; 3],
    pub m_err: [f64; 3],
    pub c: [[f64; 3]; 3],
    pub c_err: [[f64; 3]; 3],
    pub g: [[f64; 3]; 3],
}

/// Ensemble means at one recording time. `xi2` is NaN when the squeezing
/// parameter is undefined (mean spin length below threshold).
#[derive(Debug, Clone, Copy)]
pub struct ObservableRecord {
    pub t: f64,
    pub m: [f64; 3],
    pub m_err: [f64; 3],
    pub c: [[f64; 3]; 3],
    pub c_err: [[f64; 3]; 3],
    pub xi2: f64,
    pub xi2_err: f64,
    pub n_traj: usize,
}

/// Spin length below which the squeezing parameter is reported undefined.
pub const MIN_SPIN_LENGTH: f64 = 1e-6;

/// Estimates M and C from configurations sampled from |psi|^2.
///
/// Diagonal components come from the spins directly; transverse components
/// use single- and double-flip amplitude ratios. Estimator means are real
/// in expectation; the real part is taken after averaging.
pub fn estimate_collective_spin(
    state: &AnsatzState,
    samples: &[SpinConfiguration],
) -> Result<CollectiveSpinEstimate> {
    if samples.is_empty() {
        return Err(Error::Contract(
            "estimate_collective_spin needs a nonempty sample batch".into(),
        ));
    }
    let n = samples.len();
    let mut sum = [Complex64::default(); 9];
    let mut sum_sq = [0.0f64; 9];
    for x in samples {
        let vals = config_moments(state, x)?;
        for (k, v) in vals.iter().enumerate() {
            sum[k] += v;
            sum_sq[k] += v.re * v.re;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s.re / n as f64).collect();
    let se: Vec<f64> = (0..9)
        .map(|k| {
            if n < 2 {
                0.0
            } else {
                let var = (sum_sq[k] / n as f64 - mean[k] * mean[k]).max(0.0);
                (var / (n as f64 - 1.0)).sqrt()
            }
        })
        .collect();
    Ok(assemble_estimate(&mean, &se))
}

/// Exact-expectation counterpart of `estimate_collective_spin`, summing
/// over all 2^N configurations weighted by |psi|^2. Errors are zero.
pub fn estimate_collective_spin_exact(state: &AnsatzState) -> Result<CollectiveSpinEstimate> {
    let n_sites = state.n_sites();
    if n_sites > crate::engine::MAX_ENUMERATION_SITES {
        return Err(Error::Capacity(format!(
            "exact enumeration limited to N <= {}, got {n_sites}",
            crate::engine::MAX_ENUMERATION_SITES
        )));
    }
    let dim = 1usize << n_sites;
    let mut log_weights = Vec::with_capacity(dim);
    let mut configs = Vec::with_capacity(dim);
    for idx in 0..dim {
        let x = SpinConfiguration::from_index(idx, n_sites);
        log_weights.push(2.0 * state.log_amplitude(&x)?.re);
        configs.push(x);
    }
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|&lw| (lw - max).exp()).collect();
    let z: f64 = weights.iter().sum();

    let mut sum = [Complex64::default(); 9];
    for (x, &w) in configs.iter().zip(&weights) {
        let vals = config_moments(state, x)?;
        for (k, v) in vals.iter().enumerate() {
            sum[k] += (w / z) * v;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s.re).collect();
    Ok(assemble_estimate(&mean, &[0.0; 9]))
}

/// Per-configuration local estimators, indices 0..3 = m_x, m_y, m_z and
/// 3..9 = g_xx, g_yy, g_zz, g_xy, g_xz, g_yz.
fn config_moments(state: &AnsatzState, x: &SpinConfiguration) -> Result<[Complex64; 9]> {
    let n_sites = state.n_sites();
    let nf = n_sites as f64;
    let cache = state.cache(x)?;
    let mut ratios = vec![Complex64::default(); n_sites];
    let mut z = 0.0;
    for a in 0..n_sites {
        ratios[a] = state.ratio_single(&cache, a);
        z += x.spin(a);
    }
    let mut sx = Complex64::default();
    let mut sy = Complex64::default();
    let mut xz = Complex64::default();
    let mut yz = Complex64::default();
    for a in 0..n_sites {
        let sa = x.spin(a);
        sx += ratios[a];
        sy += Complex64::new(0.0, -sa) * ratios[a];
        xz += ratios[a] * (z - sa);
        yz += Complex64::new(0.0, -1.0) * ratios[a] * (sa * z - 1.0);
    }
    let mut xx = Complex64::default();
    let mut yy = Complex64::default();
    let mut xy = Complex64::default();
    for a in 0..n_sites {
        let sa = x.spin(a);
        for b in (a + 1)..n_sites {
            let sb = x.spin(b);
            let r = state.ratio_double(&cache, a, b);
            xx += r;
            yy -= sa * sb * r;
            xy += Complex64::new(0.0, -(sa + sb)) * r;
        }
    }
    Ok([
        sx / nf,
        sy / nf,
        Complex64::new(z / nf, 0.0),
        (Complex64::new(nf, 0.0) + 2.0 * xx) / (nf * nf),
        (Complex64::new(nf, 0.0) + 2.0 * yy) / (nf * nf),
        Complex64::new(z * z / (nf * nf), 0.0),
        xy / (nf * nf),
        xz / (nf * nf),
        yz / (nf * nf),
    ])
}

fn assemble_estimate(mean: &[f64], se: &[f64]) -> CollectiveSpinEstimate {
    let m = [mean[0], mean[1], mean[2]];
    let m_err = [se[0], se[1], se[2]];
    let g = symmetric_from_six([mean[3], mean[4], mean[5], mean[6], mean[7], mean[8]]);
    let g_err = symmetric_from_six([se[3], se[4], se[5], se[6], se[7], se[8]]);
    let mut c = g;
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] -= m[i] * m[j];
        }
    }
    CollectiveSpinEstimate {
        m,
        m_err,
        c,
        c_err: g_err,
        g,
    }
}

fn symmetric_from_six(v: [f64; 6]) -> [[f64; 3]; 3] {
    let [xx, yy, zz, xy, xz, yz] = v;
    [[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]]
}

/// Wineland squeezing parameter xi^2 = N min_perp Var(m_perp) / |M|^2.
///
/// The perpendicular plane is spanned by e1 = normalize(M x z-hat) (or
/// M x x-hat when M is along z) and e2 = M-hat x e1; the minimum over
/// directions in the plane is the smaller eigenvalue of the projected
/// 2x2 covariance.
pub fn wineland_xi2(m: &[f64; 3], c: &[[f64; 3]; 3], n_sites: usize) -> Result<f64> {
    let m_norm = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
    if m_norm < MIN_SPIN_LENGTH {
        return Err(Error::UndefinedSqueezing { m_norm });
    }
    let m_hat = [m[0] / m_norm, m[1] / m_norm, m[2] / m_norm];
    let mut e1 = cross(&m_hat, &[0.0, 0.0, 1.0]);
    if norm(&e1) < 1e-12 {
        e1 = cross(&m_hat, &[1.0, 0.0, 0.0]);
    }
    let e1 = normalize(&e1);
    let e2 = cross(&m_hat, &e1);

    let v11 = quad_form(c, &e1, &e1);
    let v22 = quad_form(c, &e2, &e2);
    let v12 = quad_form(c, &e1, &e2);
    let mean = 0.5 * (v11 + v22);
    let disc = (0.5 * (v11 - v22)).hypot(v12);
    let lambda_min = mean - disc;
    Ok(n_sites as f64 * lambda_min / (m_norm * m_norm))
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn normalize(v: &[f64; 3]) -> [f64; 3] {
    let n = norm(v);
    [v[0] / n, v[1] / n, v[2] / n]
}

fn quad_form(c: &[[f64; 3]; 3], a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let mut acc = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            acc += a[i] * c[i][j] * b[j];
        }
    }
    acc
}

/// Reduces per-trajectory estimates to the unconditional-state record.
///
/// Nonlinear mode: plain mean over trajectories (`q_weights` must be
/// absent). Linear mode: unnormalized weighted mean (1/K) sum_j Q_j A_j
/// over the normalized per-trajectory values. Errors are delete-one
/// jackknife standard errors, which reduce to sample std / sqrt(K) for
/// the plain means. The covariance and xi^2 are formed from the
/// ensemble-averaged first and second moments, not averaged per
/// trajectory.
pub fn ensemble_average(
    t: f64,
    per_traj: &[CollectiveSpinEstimate],
    mode: SseMode,
    q_weights: Option<&[f64]>,
    n_sites: usize,
) -> Result<ObservableRecord> {
    let k = per_traj.len();
    if k == 0 {
        return Err(Error::Contract("ensemble_average needs at least one trajectory".into()));
    }
    let weights: Vec<f64> = match (mode, q_weights) {
        (SseMode::Nonlinear, None) => vec![1.0; k],
        (SseMode::Nonlinear, Some(_)) => {
            return Err(Error::Contract(
                "nonlinear mode carries no trajectory weights".into(),
            ))
        }
        (SseMode::Linear, Some(q)) => {
            if q.len() != k {
                return Err(Error::Contract(format!(
                    "{} weights for {} trajectories",
                    q.len(),
                    k
                )));
            }
            q.to_vec()
        }
        (SseMode::Linear, None) => {
            return Err(Error::Contract(
                "linear mode requires one weight per trajectory".into(),
            ))
        }
    };

    let reduce = |skip: Option<usize>| -> ([f64; 3], [[f64; 3]; 3], f64) {
        let count = if skip.is_some() { k - 1 } else { k };
        let mut m = [0.0; 3];
        let mut g = [[0.0; 3]; 3];
        for (j, est) in per_traj.iter().enumerate() {
            if Some(j) == skip {
                continue;
            }
            let w = weights[j];
            for i in 0..3 {
                m[i] += w * est.m[i];
                for l in 0..3 {
                    g[i][l] += w * est.g[i][l];
                }
            }
        }
        let inv = 1.0 / count as f64;
        for i in 0..3 {
            m[i] *= inv;
            for l in 0..3 {
                g[i][l] *= inv;
            }
        }
        let mut c = g;
        for i in 0..3 {
            for l in 0..3 {
                c[i][l] -= m[i] * m[l];
            }
        }
        let xi2 = wineland_xi2(&m, &c, n_sites).unwrap_or(f64::NAN);
        (m, c, xi2)
    };

    let (m, c, xi2) = reduce(None);

    let mut m_err = [0.0; 3];
    let mut c_err = [[0.0; 3]; 3];
    let mut xi2_err = 0.0;
    if k >= 2 {
        let replicates: Vec<([f64; 3], [[f64; 3]; 3], f64)> =
            (0..k).map(|j| reduce(Some(j))).collect();
        let scale = (k as f64 - 1.0) / k as f64;
        for i in 0..3 {
            let vals: Vec<f64> = replicates.iter().map(|r| r.0[i]).collect();
            m_err[i] = (scale * centered_sum_sq(&vals)).sqrt();
            for l in 0..3 {
                let vals: Vec<f64> = replicates.iter().map(|r| r.1[i][l]).collect();
                c_err[i][l] = (scale * centered_sum_sq(&vals)).sqrt();
            }
        }
        let xi_vals: Vec<f64> = replicates.iter().map(|r| r.2).collect();
        xi2_err = if xi_vals.iter().any(|v| !v.is_finite()) {
            f64::NAN
        } else {
            (scale * centered_sum_sq(&xi_vals)).sqrt()
        };
    }

    Ok(ObservableRecord {
        t,
        m,
        m_err,
        c,
        c_err,
        xi2,
        xi2_err,
        n_traj: k,
    })
}

fn centered_sum_sq(vals: &[f64]) -> f64 {
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    vals.iter().map(|v| (v - mean) * (v - mean)).sum()
}
