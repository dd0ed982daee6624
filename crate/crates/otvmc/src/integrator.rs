//! Stratonovich predictor-corrector time stepping.
//!
//! Every step draws the Wiener increments once, takes an Euler-Maruyama
//! predictor, and applies a single corrector pass:
//!
//! ```text
//! predictor     X_bar = X + A(X) dt + B(X) dW
//! trapezoidal   X' = X + (A(X)+A(X_bar)) dt/2 + (B(X)+B(X_bar)) dW/2
//! midpoint      X' = X + A((X+X_bar)/2) dt + B((X+X_bar)/2) dW
//! ```
//!
//! Both schemes are strong order 1 for a single channel and 1/2 for
//! multiple channels. The same pattern advances the variational
//! parameters (with fresh Monte Carlo estimates at the corrector point),
//! the norm track Q in linear mode, and the optional gauge phase.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ansatz::AnsatzState;
use crate::engine::{
    assemble_rhs, estimate_step, estimate_step_exact, snr_solve, RegularizationConfig,
    StepEstimates,
};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, SseMode};
use crate::observables::{
    estimate_collective_spin, estimate_collective_spin_exact, CollectiveSpinEstimate,
};
use crate::sampler::{draw_samples, thermalize, Chain, SamplerConfig};
use crate::spin::SpinConfiguration;

/// Corrector variant; the predictor is always Euler-Maruyama.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverScheme {
    #[default]
    Midpoint,
    Trapezoidal,
}

/// How step estimates are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    #[default]
    MonteCarlo,
    /// All 2^N configurations, |psi|^2-weighted; for validation at small N.
    ExactEnumeration,
}

/// Everything a trajectory step needs besides the trajectory itself.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub spec: &'a ModelSpec,
    pub mode: SseMode,
    pub scheme: SolverScheme,
    pub dt: f64,
    pub sampler: &'a SamplerConfig,
    pub reg: &'a RegularizationConfig,
    pub estimator: EstimatorKind,
    /// Accumulate the global-phase SDE alongside the parameters.
    pub track_gauge: bool,
}

impl StepContext<'_> {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        self.sampler.validate()?;
        self.reg.validate()
    }
}

/// One independent Wiener increment per channel, each Normal(0, dt).
pub fn draw_wiener<R: Rng + ?Sized>(rng: &mut R, channels: usize, dt: f64) -> Vec<f64> {
    let sd = dt.sqrt();
    (0..channels)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// State vector admitting the linear combinations the stepper needs.
pub trait SdeState: Clone {
    fn add(&self, rhs: &Self) -> Self;
    fn scale(&self, s: f64) -> Self;
}

impl SdeState for f64 {
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
}

impl SdeState for DVector<Complex64> {
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn scale(&self, s: f64) -> Self {
        self.map(|c| c * s)
    }
}

/// One predictor-corrector step for explicit increment closures:
/// `drift(x)` must return A(x) dt and `diffusion(x)` must return B(x) dW,
/// with dW drawn once outside and captured by the closure.
pub fn predictor_corrector_step<X: SdeState>(
    scheme: SolverScheme,
    x: &X,
    mut drift: impl FnMut(&X) -> X,
    mut diffusion: impl FnMut(&X) -> X,
) -> X {
    let a0 = drift(x);
    let b0 = diffusion(x);
    let x_bar = x.add(&a0).add(&b0);
    match scheme {
        SolverScheme::Trapezoidal => {
            let a1 = drift(&x_bar);
            let b1 = diffusion(&x_bar);
            x.add(&a0.add(&a1).scale(0.5)).add(&b0.add(&b1).scale(0.5))
        }
        SolverScheme::Midpoint => {
            let mid = x.add(&x_bar).scale(0.5);
            let am = drift(&mid);
            let bm = diffusion(&mid);
            x.add(&am).add(&bm)
        }
    }
}

/// Global-phase increment for one step, evaluated on the given estimates:
/// dphi = -sum_k <O_k> dtheta_k - i <E_eff> dt + sum_n (<B^n> - lambda_n/2) dW_n,
/// where the -lambda_n/2 counterterm applies in nonlinear mode only and
/// <E_eff> includes the configuration-independent scalar terms.
pub fn integrate_gauge_phi(
    est: &StepEstimates,
    dtheta: &DVector<Complex64>,
    dt: f64,
    dw: &[f64],
) -> Complex64 {
    let mut dphi = Complex64::default();
    for (o, d) in est.o_mean.iter().zip(dtheta.iter()) {
        dphi -= o * d;
    }
    dphi -= Complex64::new(0.0, dt) * (est.e_mean + est.scalar_terms);
    for (c, &w) in dw.iter().enumerate() {
        let b = est.channel_means[c];
        let term = match est.mode {
            SseMode::Nonlinear => b - 0.5 * est.channel_expectations[c],
            SseMode::Linear => b,
        };
        dphi += term * w;
    }
    dphi
}

/// Drift and diffusion factors of the norm SDE
/// dQ = Q (2 Im<E_eff^lin> dt + 2 sum_n Re<B^n> o dW_n).
pub fn norm_drift_factors(est: &StepEstimates) -> (f64, Vec<f64>) {
    let u = 2.0 * est.e_lin_mean.im;
    let v = est.channel_means.iter().map(|b| 2.0 * b.re).collect();
    (u, v)
}

/// Advances Q by one step given the drift/diffusion factors at the
/// predictor and corrector evaluation points (Q(0) = 1 upstream).
pub fn norm_q_step(
    q: f64,
    scheme: SolverScheme,
    dt: f64,
    dw: &[f64],
    pred: (f64, &[f64]),
    corr: (f64, &[f64]),
) -> f64 {
    let drift = |u: f64, q: f64| u * q * dt;
    let diff = |v: &[f64], q: f64| -> f64 {
        q * v.iter().zip(dw).map(|(a, b)| a * b).sum::<f64>()
    };
    let q_bar = q + drift(pred.0, q) + diff(pred.1, q);
    match scheme {
        SolverScheme::Midpoint => {
            let qm = 0.5 * (q + q_bar);
            q + drift(corr.0, qm) + diff(corr.1, qm)
        }
        SolverScheme::Trapezoidal => {
            q + 0.5 * (drift(pred.0, q) + drift(corr.0, q_bar))
                + 0.5 * (diff(pred.1, q) + diff(corr.1, q_bar))
        }
    }
}

/// Norm-track update from step estimates; defined for the linear
/// unraveling only.
pub fn integrate_norm_q(
    q: f64,
    scheme: SolverScheme,
    dt: f64,
    dw: &[f64],
    est_pred: &StepEstimates,
    est_corr: &StepEstimates,
) -> Result<f64> {
    if est_pred.mode != SseMode::Linear || est_corr.mode != SseMode::Linear {
        return Err(Error::Contract(
            "norm track is defined for the linear unraveling only".into(),
        ));
    }
    let (up, vp) = norm_drift_factors(est_pred);
    let (uc, vc) = norm_drift_factors(est_corr);
    Ok(norm_q_step(q, scheme, dt, dw, (up, &vp), (uc, &vc)))
}

/// Sample batch backing one estimation phase.
#[derive(Debug, Clone)]
pub enum SampleBatch {
    MonteCarlo(Vec<SpinConfiguration>),
    Exact,
}

/// One stochastic trajectory: variational state, its Markov chain, RNG
/// stream, clock, and the norm/gauge tracks.
#[derive(Debug, Clone)]
pub struct Trajectory {
    state: AnsatzState,
    /// Present only for Monte Carlo estimation; exact enumeration consumes
    /// no sampling randomness, so its Wiener path can be replayed from the
    /// seed alone.
    chain: Option<Chain>,
    rng: ChaCha12Rng,
    time: f64,
    step_index: u64,
    q: f64,
    phi: Complex64,
}

impl Trajectory {
    /// Seeds the trajectory's RNG stream from (master_seed, index) and
    /// thermalizes the chain at the initial parameters. Stream 0 is
    /// reserved for parameter initialization.
    pub fn new(
        ctx: &StepContext,
        initial_state: AnsatzState,
        master_seed: u64,
        trajectory_index: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
        rng.set_stream(1 + trajectory_index);
        let chain = match ctx.estimator {
            EstimatorKind::MonteCarlo => {
                let mut chain = Chain::random(&initial_state, &mut rng)?;
                thermalize(
                    &initial_state,
                    &mut chain,
                    ctx.sampler.thermalization_sweeps,
                    &mut rng,
                );
                Some(chain)
            }
            EstimatorKind::ExactEnumeration => None,
        };
        Ok(Self {
            state: initial_state,
            chain,
            rng,
            time: 0.0,
            step_index: 0,
            q: 1.0,
            phi: Complex64::default(),
        })
    }

    pub fn state(&self) -> &AnsatzState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn phi(&self) -> Complex64 {
        self.phi
    }

    /// Draws the batch for the current parameters (the predictor batch).
    pub fn sample_current(&mut self, ctx: &StepContext) -> Result<SampleBatch> {
        match ctx.estimator {
            EstimatorKind::MonteCarlo => {
                let state = self.state.clone();
                self.fresh_batch(ctx, &state)
            }
            EstimatorKind::ExactEnumeration => Ok(SampleBatch::Exact),
        }
    }

    /// Re-equilibrates the chain at `state` and draws a batch from it.
    fn fresh_batch(&mut self, ctx: &StepContext, state: &AnsatzState) -> Result<SampleBatch> {
        let chain = self
            .chain
            .as_mut()
            .ok_or_else(|| Error::Contract("sampling batch requested without a chain".into()))?;
        chain.resync(state)?;
        thermalize(state, chain, ctx.sampler.rethermalization_sweeps, &mut self.rng);
        let samples = draw_samples(state, ctx.sampler, chain, &mut self.rng);
        Ok(SampleBatch::MonteCarlo(samples))
    }

    fn estimate_at(
        state: &AnsatzState,
        ctx: &StepContext,
        batch: &SampleBatch,
    ) -> Result<StepEstimates> {
        match batch {
            SampleBatch::MonteCarlo(samples) => {
                estimate_step(samples, state, ctx.spec, ctx.mode)
            }
            SampleBatch::Exact => estimate_step_exact(state, ctx.spec, ctx.mode),
        }
    }

    /// Observable estimate at the current parameters from `batch`.
    pub fn observe(&self, batch: &SampleBatch) -> Result<CollectiveSpinEstimate> {
        match batch {
            SampleBatch::MonteCarlo(samples) => estimate_collective_spin(&self.state, samples),
            SampleBatch::Exact => estimate_collective_spin_exact(&self.state),
        }
    }

    /// One predictor-corrector step. `predictor_batch` must have been
    /// drawn at the current parameters (via `sample_current`); the
    /// corrector point is re-sampled internally with the same dW.
    pub fn advance(&mut self, ctx: &StepContext, predictor_batch: &SampleBatch) -> Result<()> {
        let est_pred = Self::estimate_at(&self.state, ctx, predictor_batch)?;
        let dw = draw_wiener(&mut self.rng, est_pred.channel_count(), ctx.dt);

        let rhs_pred = assemble_rhs(&est_pred, ctx.dt, &dw)?;
        let sol_pred = snr_solve(&est_pred, &rhs_pred, ctx.reg, self.time)
            .map_err(|e| self.tag_step(e))?;

        let theta0 = self.state.parameters().clone();
        let theta_bar = &theta0 + &sol_pred.delta;
        let eval_params = match ctx.scheme {
            SolverScheme::Midpoint => (&theta0 + &theta_bar).map(|c| c * 0.5),
            SolverScheme::Trapezoidal => theta_bar.clone(),
        };
        let eval_state = self.state.with_parameters(eval_params)?;

        let corrector_batch = match ctx.estimator {
            EstimatorKind::MonteCarlo => self.fresh_batch(ctx, &eval_state)?,
            EstimatorKind::ExactEnumeration => SampleBatch::Exact,
        };
        let est_corr = Self::estimate_at(&eval_state, ctx, &corrector_batch)?;
        let rhs_corr = assemble_rhs(&est_corr, ctx.dt, &dw)?;
        let sol_corr = snr_solve(&est_corr, &rhs_corr, ctx.reg, self.time)
            .map_err(|e| self.tag_step(e))?;

        let delta = match ctx.scheme {
            SolverScheme::Midpoint => sol_corr.delta,
            SolverScheme::Trapezoidal => {
                (sol_pred.delta + sol_corr.delta).map(|c| c * 0.5)
            }
        };

        if ctx.mode == SseMode::Linear {
            self.q = integrate_norm_q(self.q, ctx.scheme, ctx.dt, &dw, &est_pred, &est_corr)?;
        }
        if ctx.track_gauge {
            self.phi += match ctx.scheme {
                SolverScheme::Midpoint => integrate_gauge_phi(&est_corr, &delta, ctx.dt, &dw),
                SolverScheme::Trapezoidal => {
                    let a = integrate_gauge_phi(&est_pred, &delta, ctx.dt, &dw);
                    let b = integrate_gauge_phi(&est_corr, &delta, ctx.dt, &dw);
                    (a + b) * 0.5
                }
            };
        }

        let new_params = &theta0 + &delta;
        self.state = self.state.with_parameters(new_params)?;
        self.time += ctx.dt;
        self.step_index += 1;
        Ok(())
    }

    fn tag_step(&self, e: Error) -> Error {
        match e {
            Error::DegenerateTensor { time, detail } => Error::DegenerateTensor {
                time,
                detail: format!("step {}: {detail}", self.step_index),
            },
            other => other,
        }
    }
}
