//! Monte Carlo assembly and regularized solution of the variational
//! equations of motion.
//!
//! From a batch of configurations the engine builds connected-moment
//! estimates of the quantum geometric tensor S = <O*O> - <O*><O>, the force
//! F = <O* E_eff> - <O*><E_eff>, and one noise vector N^n per collapse
//! channel, N^n = <O* B^n> - <O*><B^n>. The parameter increment solves
//!
//! ```text
//! S dtheta = D,    D = -i F dt + sum_n N^n dW_n
//! ```
//!
//! in the eigenbasis of S, discarding relative eigenvalues below a cutoff
//! and suppressing eigendirections whose per-direction signal-to-noise
//! ratio falls below a threshold.
//!
//! When every log-derivative is real (long-range Jastrow) the heavy
//! covariance products run in real arithmetic, which roughly quadruples
//! matrix-assembly throughput; the RBM path uses complex arithmetic
//! throughout.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ansatz::AnsatzState;
use crate::error::{Error, Result};
use crate::model::{self, ModelSpec, SseMode};
use crate::spin::SpinConfiguration;

/// Largest N for which exact-enumeration estimation is permitted (2^N
/// configurations are visited explicitly).
pub const MAX_ENUMERATION_SITES: usize = 14;

/// How suppression reacts to a direction's signal-to-noise ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuppressionKind {
    /// Multiply by 1 / (1 + (threshold/SNR)^sharpness).
    #[default]
    Smooth,
    /// Keep the direction iff SNR >= threshold.
    Hard,
    /// No SNR gating (eigenvalue cutoff still applies).
    Off,
}

/// Spectral regularization of the S-matrix solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegularizationConfig {
    /// SNR below which an eigendirection is (smoothly) discarded.
    pub snr_threshold: f64,
    /// Relative eigenvalue cutoff: directions with lambda < cutoff *
    /// lambda_max are dropped outright.
    pub eigenvalue_cutoff: f64,
    /// Exponent of the smooth suppression factor.
    pub suppression_sharpness: i32,
    pub suppression: SuppressionKind,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        Self {
            snr_threshold: 4.0,
            eigenvalue_cutoff: 1e-8,
            suppression_sharpness: 6,
            suppression: SuppressionKind::Smooth,
        }
    }
}

impl RegularizationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.snr_threshold > 0.0) {
            return Err(Error::Config("snr_threshold must be > 0".into()));
        }
        if !(self.eigenvalue_cutoff > 0.0 && self.eigenvalue_cutoff < 1.0) {
            return Err(Error::Config("eigenvalue_cutoff must be in (0, 1)".into()));
        }
        if self.suppression_sharpness <= 0 {
            return Err(Error::Config("suppression_sharpness must be > 0".into()));
        }
        Ok(())
    }
}

/// Centered per-sample log-derivative rows, real when the ansatz permits.
#[derive(Debug, Clone)]
pub enum CenteredDerivatives {
    Real(DMatrix<f64>),
    Complex(DMatrix<Complex64>),
}

/// Connected-moment estimates of one estimation phase, plus the centered
/// per-sample data needed for per-direction SNR estimation.
#[derive(Debug, Clone)]
pub struct StepEstimates {
    pub mode: SseMode,
    pub n_samples: usize,
    /// True when built by exact enumeration; SNR is then meaningless
    /// (no Monte Carlo noise) and suppression is skipped.
    pub exact: bool,
    /// S in real storage (LJ) ...
    s_real: Option<DMatrix<f64>>,
    /// ... or complex storage (RBM); exactly one is present.
    s_complex: Option<DMatrix<Complex64>>,
    /// Force of the active mode (already linear-mode F when mode = Linear).
    pub force: DVector<Complex64>,
    /// Noise vectors, one column per channel.
    pub noise: DMatrix<Complex64>,
    /// <O_k>.
    pub o_mean: DVector<Complex64>,
    /// <E_eff> of the active mode, scalar terms omitted.
    pub e_mean: Complex64,
    /// <E_eff^lin> = <E_H> - (i/2) kappa <n_up> (drives the Q track).
    pub e_lin_mean: Complex64,
    /// Configuration-independent scalar terms of the nonlinear effective
    /// energy (zero in linear mode), for the gauge track.
    pub scalar_terms: Complex64,
    /// <B^n> per channel.
    pub channel_means: Vec<Complex64>,
    /// <L_n + L_n^dagger> = 2 Re <B^n> per channel.
    pub channel_expectations: Vec<f64>,
    /// Probability weights per sample (uniform 1/n for Monte Carlo).
    weights: DVector<f64>,
    o_centered: CenteredDerivatives,
    /// Centered E_eff of the active mode per sample.
    e_centered: DVector<Complex64>,
    /// Centered B^n per sample (column per channel).
    b_centered: DMatrix<Complex64>,
}

/// Right-hand side of one stochastic step, with its per-sample
/// decomposition g_s (such that D_k = <conj(O_k,centered) g>) retained for
/// SNR estimation.
#[derive(Debug, Clone)]
pub struct StochasticRhs {
    pub d: DVector<Complex64>,
    per_sample: DVector<Complex64>,
}

/// Result of the regularized solve.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub delta: DVector<Complex64>,
    /// Eigendirections above the eigenvalue cutoff.
    pub retained: usize,
    pub dimension: usize,
    /// Mean SNR suppression factor over retained directions.
    pub mean_suppression: f64,
}

/// Builds estimates from Monte Carlo samples.
pub fn estimate_step(
    samples: &[SpinConfiguration],
    state: &AnsatzState,
    spec: &ModelSpec,
    mode: SseMode,
) -> Result<StepEstimates> {
    if samples.is_empty() {
        return Err(Error::Contract("estimate_step needs a nonempty sample set".into()));
    }
    let n = samples.len();
    let w = DVector::from_element(n, 1.0 / n as f64);
    assemble(samples.iter(), &w, false, state, spec, mode)
}

/// Builds estimates by exact enumeration of all 2^N configurations,
/// weighted by |psi(x)|^2. Intended for validation at small N.
pub fn estimate_step_exact(
    state: &AnsatzState,
    spec: &ModelSpec,
    mode: SseMode,
) -> Result<StepEstimates> {
    let n_sites = state.n_sites();
    if n_sites > MAX_ENUMERATION_SITES {
        return Err(Error::Capacity(format!(
            "exact enumeration limited to N <= {MAX_ENUMERATION_SITES}, got {n_sites}"
        )));
    }
    let dim = 1usize << n_sites;
    let configs: Vec<SpinConfiguration> = (0..dim)
        .map(|idx| SpinConfiguration::from_index(idx, n_sites))
        .collect();
    let mut log_weights = Vec::with_capacity(dim);
    for x in &configs {
        log_weights.push(2.0 * state.log_amplitude(x)?.re);
    }
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w = DVector::from_iterator(dim, log_weights.iter().map(|&lw| (lw - max).exp()));
    let z: f64 = w.sum();
    w /= z;
    assemble(configs.iter(), &w, true, state, spec, mode)
}

/// Shared assembly over an explicit weight vector (sum = 1).
fn assemble<'a>(
    configs: impl Iterator<Item = &'a SpinConfiguration>,
    weights: &DVector<f64>,
    exact: bool,
    state: &AnsatzState,
    spec: &ModelSpec,
    mode: SseMode,
) -> Result<StepEstimates> {
    let n = weights.len();
    let m = state.parameter_count();
    let channels = spec.channels();
    let nch = channels.len();
    let table = spec.coupling_table()?;
    let real_rows = state.derivatives_are_real();

    let mut o_real = if real_rows {
        Some(DMatrix::<f64>::zeros(n, m))
    } else {
        None
    };
    let mut o_complex = if real_rows {
        None
    } else {
        Some(DMatrix::<Complex64>::zeros(n, m))
    };
    let mut e_lin = DVector::from_element(n, Complex64::default());
    let mut b = DMatrix::from_element(n, nch, Complex64::default());
    let mut up = DVector::from_element(n, 0.0f64);

    let mut row_real = vec![0.0f64; m];
    let mut row_complex = vec![Complex64::default(); m];
    for (s, x) in configs.enumerate() {
        let cache = state.cache(x)?;
        if let Some(o) = o_real.as_mut() {
            state.derivative_row_real(&cache, &mut row_real);
            for (k, &v) in row_real.iter().enumerate() {
                o[(s, k)] = v;
            }
        } else if let Some(o) = o_complex.as_mut() {
            state.derivative_row_complex(&cache, &mut row_complex);
            for (k, &v) in row_complex.iter().enumerate() {
                o[(s, k)] = v;
            }
        }
        let e_h = model::local_hamiltonian_cached(spec, &table, state, &cache);
        e_lin[s] = e_h + model::diagonal_decay_term(spec, x);
        up[s] = x.count_up() as f64;
        for (c, channel) in channels.iter().enumerate() {
            b[(s, c)] = model::local_collapse_amplitude_cached(channel, state, &cache);
        }
    }

    // Weighted means.
    let b_mean: Vec<Complex64> = (0..nch).map(|c| weighted_mean_col(&b, c, weights)).collect();
    let lambda: Vec<f64> = b_mean.iter().map(|bm| 2.0 * bm.re).collect();
    let e_lin_mean = weighted_mean_vec(&e_lin, weights);

    // Active-mode local energies.
    let mut e_active = e_lin.clone();
    if mode == SseMode::Nonlinear {
        for s in 0..n {
            let mut corr = Complex64::default();
            for c in 0..nch {
                corr += Complex64::new(0.0, lambda[c]) * b[(s, c)];
            }
            e_active[s] += corr;
        }
    }
    let e_mean = weighted_mean_vec(&e_active, weights);

    // Scalar terms need per-site up occupations u_a = (1 + <sigma_a>)/2;
    // the bias block of O holds sigma_a directly.
    let scalar_terms = if mode == SseMode::Nonlinear && nch > 0 {
        let n_sites = spec.n_sites;
        let mut site_mean = vec![0.0f64; n_sites];
        if let Some(o) = o_real.as_ref() {
            for a in 0..n_sites {
                site_mean[a] = weights.dot(&o.column(a).clone_owned());
            }
        } else if let Some(o) = o_complex.as_ref() {
            for a in 0..n_sites {
                let mut acc = 0.0;
                for s in 0..n {
                    acc += weights[s] * o[(s, a)].re;
                }
                site_mean[a] = acc;
            }
        }
        let u: Vec<f64> = site_mean.iter().map(|&sz| 0.5 * (1.0 + sz)).collect();
        model::scalar_effective_terms(&lambda, &u, spec.kappa)
    } else {
        Complex64::default()
    };

    // Center everything.
    for s in 0..n {
        e_active[s] -= e_mean;
        for c in 0..nch {
            b[(s, c)] -= b_mean[c];
        }
    }
    let sqrt_w: Vec<f64> = weights.iter().map(|&w| w.sqrt()).collect();

    let (o_centered, o_mean, s_real, s_complex, force, noise) = if let Some(mut o) = o_real {
        let mut mean = DVector::from_element(m, 0.0f64);
        for k in 0..m {
            mean[k] = weights.dot(&o.column(k).clone_owned());
        }
        for s in 0..n {
            for k in 0..m {
                o[(s, k)] -= mean[k];
            }
        }
        // Scale rows by sqrt(w): S = X^T X, F = X^T (sqrt(w) e), N = X^T (sqrt(w) B).
        let mut x = o.clone();
        for s in 0..n {
            let f = sqrt_w[s];
            for k in 0..m {
                x[(s, k)] *= f;
            }
        }
        let s_mat = x.tr_mul(&x);
        let (f_re, f_im) = split_complex(&e_active, &sqrt_w);
        let force = join_complex(&x.tr_mul(&f_re), &x.tr_mul(&f_im));
        let mut noise = DMatrix::from_element(m, nch, Complex64::default());
        for c in 0..nch {
            let col = b.column(c).clone_owned();
            let (re, im) = split_complex(&col, &sqrt_w);
            let nc = join_complex(&x.tr_mul(&re), &x.tr_mul(&im));
            noise.set_column(c, &nc);
        }
        let o_mean_c = DVector::from_iterator(m, mean.iter().map(|&v| Complex64::new(v, 0.0)));
        (
            CenteredDerivatives::Real(o),
            o_mean_c,
            Some(s_mat),
            None,
            force,
            noise,
        )
    } else {
        let mut o = o_complex.unwrap();
        let mut mean = DVector::from_element(m, Complex64::default());
        for k in 0..m {
            let mut acc = Complex64::default();
            for s in 0..n {
                acc += weights[s] * o[(s, k)];
            }
            mean[k] = acc;
        }
        for s in 0..n {
            for k in 0..m {
                o[(s, k)] -= mean[k];
            }
        }
        let mut x = o.clone();
        for s in 0..n {
            let f = Complex64::new(sqrt_w[s], 0.0);
            for k in 0..m {
                x[(s, k)] *= f;
            }
        }
        let s_mat = x.ad_mul(&x);
        let ew: DVector<Complex64> =
            DVector::from_iterator(n, e_active.iter().enumerate().map(|(s, &v)| sqrt_w[s] * v));
        let force = x.ad_mul(&ew).column(0).clone_owned();
        let mut noise = DMatrix::from_element(m, nch, Complex64::default());
        for c in 0..nch {
            let bw: DVector<Complex64> = DVector::from_iterator(
                n,
                (0..n).map(|s| Complex64::new(sqrt_w[s], 0.0) * b[(s, c)]),
            );
            let nc = x.ad_mul(&bw).column(0).clone_owned();
            noise.set_column(c, &nc);
        }
        (
            CenteredDerivatives::Complex(o),
            mean,
            None,
            Some(s_mat),
            force,
            noise,
        )
    };

    Ok(StepEstimates {
        mode,
        n_samples: n,
        exact,
        s_real,
        s_complex,
        force,
        noise,
        o_mean,
        e_mean,
        e_lin_mean,
        scalar_terms,
        channel_means: b_mean,
        channel_expectations: lambda,
        weights: weights.clone(),
        o_centered,
        e_centered: e_active,
        b_centered: b,
    })
}

fn weighted_mean_vec(v: &DVector<Complex64>, w: &DVector<f64>) -> Complex64 {
    v.iter()
        .zip(w.iter())
        .map(|(&x, &wi)| wi * x)
        .fold(Complex64::default(), |a, b| a + b)
}

fn weighted_mean_col(m: &DMatrix<Complex64>, col: usize, w: &DVector<f64>) -> Complex64 {
    m.column(col)
        .iter()
        .zip(w.iter())
        .map(|(&x, &wi)| wi * x)
        .fold(Complex64::default(), |a, b| a + b)
}

fn split_complex(v: &DVector<Complex64>, scale: &[f64]) -> (DVector<f64>, DVector<f64>) {
    let n = v.len();
    (
        DVector::from_iterator(n, v.iter().enumerate().map(|(s, c)| scale[s] * c.re)),
        DVector::from_iterator(n, v.iter().enumerate().map(|(s, c)| scale[s] * c.im)),
    )
}

fn join_complex(re: &DVector<f64>, im: &DVector<f64>) -> DVector<Complex64> {
    DVector::from_iterator(
        re.len(),
        re.iter().zip(im.iter()).map(|(&r, &i)| Complex64::new(r, i)),
    )
}

impl StepEstimates {
    /// The symmetrized S matrix in complex form (diagnostic/test accessor;
    /// the solver consumes the native storage directly).
    pub fn s_matrix(&self) -> DMatrix<Complex64> {
        if let Some(s) = &self.s_real {
            let m = s.nrows();
            DMatrix::from_fn(m, m, |r, c| {
                Complex64::new(0.5 * (s[(r, c)] + s[(c, r)]), 0.0)
            })
        } else {
            let s = self.s_complex.as_ref().unwrap();
            let m = s.nrows();
            DMatrix::from_fn(m, m, |r, c| 0.5 * (s[(r, c)] + s[(c, r)].conj()))
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.force.len()
    }

    pub fn channel_count(&self) -> usize {
        self.channel_means.len()
    }
}

/// F^lin = F - i sum_n <L_n+L_n^dagger> N^n, from nonlinear-mode estimates.
pub fn linear_mode_force(est: &StepEstimates) -> Result<DVector<Complex64>> {
    if est.mode != SseMode::Nonlinear {
        return Err(Error::Contract(
            "linear_mode_force expects nonlinear-mode estimates".into(),
        ));
    }
    let mut f = est.force.clone();
    for c in 0..est.channel_count() {
        let lam = Complex64::new(0.0, est.channel_expectations[c]);
        f -= est.noise.column(c) * lam;
    }
    Ok(f)
}

/// D = -i F dt + sum_n N^n dW_n, with the per-sample decomposition kept.
pub fn assemble_rhs(est: &StepEstimates, dt: f64, dw: &[f64]) -> Result<StochasticRhs> {
    if dw.len() != est.channel_count() {
        return Err(Error::Contract(format!(
            "expected {} Wiener increments, got {}",
            est.channel_count(),
            dw.len()
        )));
    }
    let minus_i_dt = Complex64::new(0.0, -dt);
    let mut d = &est.force * minus_i_dt;
    for (c, &w) in dw.iter().enumerate() {
        d += est.noise.column(c) * Complex64::new(w, 0.0);
    }
    let n = est.n_samples;
    let mut g = DVector::from_element(n, Complex64::default());
    for s in 0..n {
        let mut v = minus_i_dt * est.e_centered[s];
        for (c, &w) in dw.iter().enumerate() {
            v += w * est.b_centered[(s, c)];
        }
        g[s] = v;
    }
    Ok(StochasticRhs { d, per_sample: g })
}

/// Solves S dtheta = D in the eigenbasis of S with eigenvalue cutoff and
/// SNR suppression. `time` only labels the degenerate-tensor error.
pub fn snr_solve(
    est: &StepEstimates,
    rhs: &StochasticRhs,
    reg: &RegularizationConfig,
    time: f64,
) -> Result<SolveOutcome> {
    let m = est.parameter_count();
    enum Basis {
        Real(DMatrix<f64>),
        Complex(DMatrix<Complex64>),
    }
    let (eigvals, basis): (Vec<f64>, Basis) = if let Some(s) = &est.s_real {
        let sym = DMatrix::from_fn(m, m, |r, c| 0.5 * (s[(r, c)] + s[(c, r)]));
        let eig = sym.symmetric_eigen();
        (
            eig.eigenvalues.iter().cloned().collect(),
            Basis::Real(eig.eigenvectors),
        )
    } else {
        let s = est.s_complex.as_ref().unwrap();
        let sym = DMatrix::from_fn(m, m, |r, c| 0.5 * (s[(r, c)] + s[(c, r)].conj()));
        let eig = sym.symmetric_eigen();
        (
            eig.eigenvalues.iter().cloned().collect(),
            Basis::Complex(eig.eigenvectors),
        )
    };

    let lambda_max = eigvals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lambda_max.is_finite() || lambda_max <= 0.0 {
        return Err(Error::DegenerateTensor {
            time,
            detail: format!("largest eigenvalue {lambda_max} unusable"),
        });
    }
    let cutoff = reg.eigenvalue_cutoff * lambda_max;
    let kept: Vec<usize> = (0..m).filter(|&k| eigvals[k] >= cutoff).collect();
    if kept.is_empty() {
        return Err(Error::DegenerateTensor {
            time,
            detail: format!(
                "all {m} eigenvalues below cutoff {cutoff:.3e} (lambda_max {lambda_max:.3e})"
            ),
        });
    }
    let nk = kept.len();

    // Projections d_hat_k = v_k^dagger D for the kept directions.
    let d_hat: Vec<Complex64> = kept
        .iter()
        .map(|&k| match &basis {
            Basis::Real(v) => {
                let mut acc = Complex64::default();
                for j in 0..m {
                    acc += rhs.d[j] * v[(j, k)];
                }
                acc
            }
            Basis::Complex(v) => {
                let mut acc = Complex64::default();
                for j in 0..m {
                    acc += v[(j, k)].conj() * rhs.d[j];
                }
                acc
            }
        })
        .collect();

    // SNR per direction from the per-sample signal p_s = conj((O_c v_k)_s) g_s,
    // whose weighted mean reproduces d_hat_k and whose standard error
    // estimates the Monte Carlo noise of that component (dW held fixed).
    // All kept directions are projected in one gemm.
    let snr_active = !est.exact && !matches!(reg.suppression, SuppressionKind::Off);
    let n = est.n_samples;
    let mut factors = vec![1.0f64; nk];
    if snr_active {
        enum Proj {
            Real(DMatrix<f64>),
            Complex(DMatrix<Complex64>),
        }
        let u = match (&est.o_centered, &basis) {
            (CenteredDerivatives::Real(o), Basis::Real(v)) => {
                let mut vk = DMatrix::<f64>::zeros(m, nk);
                for (col, &k) in kept.iter().enumerate() {
                    vk.set_column(col, &v.column(k));
                }
                Proj::Real(o * vk)
            }
            (CenteredDerivatives::Complex(o), Basis::Complex(v)) => {
                let mut vk = DMatrix::<Complex64>::zeros(m, nk);
                for (col, &k) in kept.iter().enumerate() {
                    vk.set_column(col, &v.column(k));
                }
                Proj::Complex(o * vk)
            }
            _ => unreachable!("derivative storage and S storage always match"),
        };
        for (col, factor) in factors.iter_mut().enumerate() {
            let mut mean = Complex64::default();
            let mut var = 0.0;
            let p = |s: usize| -> Complex64 {
                match &u {
                    Proj::Real(u) => rhs.per_sample[s] * u[(s, col)],
                    Proj::Complex(u) => u[(s, col)].conj() * rhs.per_sample[s],
                }
            };
            for s in 0..n {
                mean += est.weights[s] * p(s);
            }
            for s in 0..n {
                var += est.weights[s] * (p(s) - mean).norm_sqr();
            }
            let se = (var / (n.max(2) as f64 - 1.0)).sqrt();
            let snr = if se > 0.0 {
                d_hat[col].norm() / se
            } else {
                f64::INFINITY
            };
            *factor = match reg.suppression {
                SuppressionKind::Smooth => {
                    1.0 / (1.0 + (reg.snr_threshold / snr).powi(reg.suppression_sharpness))
                }
                SuppressionKind::Hard => {
                    if snr >= reg.snr_threshold {
                        1.0
                    } else {
                        0.0
                    }
                }
                SuppressionKind::Off => 1.0,
            };
        }
    }

    let mut delta = DVector::from_element(m, Complex64::default());
    let mut suppression_sum = 0.0;
    for (col, &k) in kept.iter().enumerate() {
        let coeff = d_hat[col] * (factors[col] / eigvals[k]);
        suppression_sum += factors[col];
        match &basis {
            Basis::Real(v) => {
                for j in 0..m {
                    delta[j] += coeff * v[(j, k)];
                }
            }
            Basis::Complex(v) => {
                for j in 0..m {
                    delta[j] += coeff * v[(j, k)];
                }
            }
        }
    }

    Ok(SolveOutcome {
        delta,
        retained: nk,
        dimension: m,
        mean_suppression: suppression_sum / nk as f64,
    })
}
