//! Metropolis sampling of configurations from |psi_theta(x)|^2.
//!
//! Proposals flip one uniformly chosen spin and are accepted with
//! probability min(1, |psi(x')/psi(x)|^2). One chain lives in each
//! trajectory; it persists across time steps (warm start) and is
//! re-thermalized briefly after every parameter update.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{AnsatzState, RatioCache};
use crate::error::{Error, Result};
use crate::spin::SpinConfiguration;

/// Monte Carlo sampling controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Samples drawn per estimation phase.
    pub n_samples: usize,
    /// Full sweeps (N proposals each) between retained samples.
    pub sweeps_between_samples: usize,
    /// Sweeps run once when a chain is created.
    pub thermalization_sweeps: usize,
    /// Sweeps run after each parameter update before drawing again.
    pub rethermalization_sweeps: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            sweeps_between_samples: 1,
            thermalization_sweeps: 100,
            rethermalization_sweeps: 10,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0
            || self.sweeps_between_samples == 0
            || self.thermalization_sweeps == 0
            || self.rethermalization_sweeps == 0
        {
            return Err(Error::Config("sampler fields must all be positive".into()));
        }
        Ok(())
    }
}

/// A Markov chain over spin configurations with its ansatz work buffers.
#[derive(Debug, Clone)]
pub struct Chain {
    cache: RatioCache,
    /// Cached log |psi(x)| for the current configuration.
    log_abs_psi: f64,
    accepted: u64,
    proposed: u64,
}

impl Chain {
    /// Starts a chain at an explicit configuration.
    pub fn new(state: &AnsatzState, x0: &SpinConfiguration) -> Result<Self> {
        let cache = state.cache(x0)?;
        let log_abs_psi = state.log_amplitude(x0)?.re;
        Ok(Self {
            cache,
            log_abs_psi,
            accepted: 0,
            proposed: 0,
        })
    }

    /// Starts a chain at a uniformly random configuration.
    pub fn random<R: Rng + ?Sized>(state: &AnsatzState, rng: &mut R) -> Result<Self> {
        let spins = (0..state.n_sites())
            .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
            .collect();
        Self::new(state, &SpinConfiguration::new(spins)?)
    }

    pub fn configuration(&self) -> &SpinConfiguration {
        self.cache.configuration()
    }

    pub fn cache(&self) -> &RatioCache {
        &self.cache
    }

    pub fn log_abs_psi(&self) -> f64 {
        self.log_abs_psi
    }

    /// Fraction of accepted proposals since the chain was created.
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    /// Rebuilds the work buffers and cached log |psi| from scratch for a
    /// (possibly updated) ansatz state, keeping the current configuration.
    pub fn resync(&mut self, state: &AnsatzState) -> Result<()> {
        let x = self.cache.configuration().clone();
        self.cache = state.cache(&x)?;
        self.log_abs_psi = state.log_amplitude(&x)?.re;
        Ok(())
    }
}

/// One sweep: N single-spin-flip proposals at uniformly random sites.
/// Returns the number of accepted proposals.
pub fn metropolis_sweep<R: Rng + ?Sized>(
    state: &AnsatzState,
    chain: &mut Chain,
    rng: &mut R,
) -> usize {
    let n = state.n_sites();
    let mut accepted = 0;
    for _ in 0..n {
        let site = rng.gen_range(0..n);
        let ratio = state.ratio_single(&chain.cache, site);
        let p = ratio.norm_sqr();
        if p >= 1.0 || rng.gen::<f64>() < p {
            state.apply_flip(&mut chain.cache, site);
            chain.log_abs_psi += ratio.norm().ln();
            accepted += 1;
        }
    }
    chain.proposed += n as u64;
    chain.accepted += accepted as u64;
    accepted
}

/// Runs `sweeps` thermalization sweeps.
pub fn thermalize<R: Rng + ?Sized>(
    state: &AnsatzState,
    chain: &mut Chain,
    sweeps: usize,
    rng: &mut R,
) {
    for _ in 0..sweeps {
        metropolis_sweep(state, chain, rng);
    }
}

/// Draws `config.n_samples` configurations separated by
/// `config.sweeps_between_samples` sweeps. Thermalization is the caller's
/// responsibility (chain creation or [`thermalize`]).
pub fn draw_samples<R: Rng + ?Sized>(
    state: &AnsatzState,
    config: &SamplerConfig,
    chain: &mut Chain,
    rng: &mut R,
) -> Vec<SpinConfiguration> {
    let mut samples = Vec::with_capacity(config.n_samples);
    for _ in 0..config.n_samples {
        for _ in 0..config.sweeps_between_samples {
            metropolis_sweep(state, chain, rng);
        }
        samples.push(chain.cache.configuration().clone());
    }
    samples
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{parameter_count, AnsatzKind, AnsatzState};
    use nalgebra::DVector;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn lj_state(n: usize, pair_values: &[(usize, f64)]) -> AnsatzState {
        let kind = AnsatzKind::Lj {
            sharing_distance: n - 1,
        };
        let mut params =
            DVector::from_element(parameter_count(kind, n), Complex64::new(0.0, 0.0));
        for &(slot, v) in pair_values {
            params[n + slot] = Complex64::new(v, 0.0);
        }
        AnsatzState::new(kind, n, params).unwrap()
    }

    /// Probabilities |psi(x)|^2 / Z over all 2^N configurations.
    fn enumerate_probabilities(state: &AnsatzState) -> Vec<f64> {
        let n = state.n_sites();
        let mut weights: Vec<f64> = (0..1usize << n)
            .map(|idx| {
                let x = SpinConfiguration::from_index(idx, n);
                (2.0 * state.log_amplitude(&x).unwrap().re).exp()
            })
            .collect();
        let z: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= z;
        }
        weights
    }

    /// Mean and batch-means standard error of `f` over retained samples.
    /// Batching absorbs the autocorrelation left between samples.
    fn batch_mean_se(values: &[f64], n_batches: usize) -> (f64, f64) {
        let batch = values.len() / n_batches;
        let means: Vec<f64> = (0..n_batches)
            .map(|b| values[b * batch..(b + 1) * batch].iter().sum::<f64>() / batch as f64)
            .collect();
        let mean = means.iter().sum::<f64>() / n_batches as f64;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>()
            / (n_batches as f64 * (n_batches as f64 - 1.0));
        (mean, var.sqrt())
    }

    #[test]
    fn uniform_amplitudes_accept_every_proposal() {
        let state = lj_state(5, &[]);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut chain = Chain::random(&state, &mut rng).unwrap();
        thermalize(&state, &mut chain, 200, &mut rng);
        assert_eq!(chain.acceptance_rate(), 1.0);
    }

    #[test]
    fn uniform_site_means_vanish() {
        let state = lj_state(4, &[]);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut chain = Chain::random(&state, &mut rng).unwrap();
        thermalize(&state, &mut chain, 100, &mut rng);
        let config = SamplerConfig {
            n_samples: 4000,
            ..SamplerConfig::default()
        };
        let samples = draw_samples(&state, &config, &mut chain, &mut rng);
        for a in 0..4 {
            let values: Vec<f64> = samples.iter().map(|x| x.spin(a)).collect();
            let (mean, se) = batch_mean_se(&values, 40);
            assert!(mean.abs() < 3.0 * se.max(1e-3), "site {a}: {mean} +- {se}");
        }
    }

    #[test]
    fn biased_pair_correlation_matches_enumeration() {
        let n = 4;
        // Slot 0 is the (0, 1) pair in the fully inhomogeneous layout.
        let state = lj_state(n, &[(0, 0.35), (2, -0.2)]);
        let probs = enumerate_probabilities(&state);
        let exact: f64 = probs
            .iter()
            .enumerate()
            .map(|(idx, p)| {
                let x = SpinConfiguration::from_index(idx, n);
                p * x.spin(0) * x.spin(1)
            })
            .sum();

        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let mut chain = Chain::random(&state, &mut rng).unwrap();
        thermalize(&state, &mut chain, 200, &mut rng);
        let config = SamplerConfig {
            n_samples: 8000,
            sweeps_between_samples: 2,
            ..SamplerConfig::default()
        };
        let samples = draw_samples(&state, &config, &mut chain, &mut rng);
        let values: Vec<f64> = samples.iter().map(|x| x.spin(0) * x.spin(1)).collect();
        let (mean, se) = batch_mean_se(&values, 40);
        assert!(
            (mean - exact).abs() < 3.0 * se,
            "sampled {mean} +- {se}, exact {exact}"
        );
    }

    #[test]
    fn stationary_distribution_matches_born_rule() {
        let state = lj_state(2, &[(0, 0.4)]);
        let probs = enumerate_probabilities(&state);
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let mut chain = Chain::random(&state, &mut rng).unwrap();
        thermalize(&state, &mut chain, 1000, &mut rng);

        let sweeps = 200_000;
        let mut indicator = vec![Vec::with_capacity(sweeps); 4];
        for _ in 0..sweeps {
            metropolis_sweep(&state, &mut chain, &mut rng);
            let idx = chain.configuration().to_index();
            for (k, hits) in indicator.iter_mut().enumerate() {
                hits.push(if k == idx { 1.0 } else { 0.0 });
            }
        }
        for (k, hits) in indicator.iter().enumerate() {
            let (freq, se) = batch_mean_se(hits, 100);
            assert!(
                (freq - probs[k]).abs() < 3.0 * se.max(1e-4),
                "config {k}: visited {freq} +- {se}, Born {}",
                probs[k]
            );
        }
    }

    #[test]
    fn zero_sample_request_returns_empty() {
        let state = lj_state(3, &[]);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut chain = Chain::random(&state, &mut rng).unwrap();
        let config = SamplerConfig {
            n_samples: 0,
            ..SamplerConfig::default()
        };
        assert!(draw_samples(&state, &config, &mut chain, &mut rng).is_empty());
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let state = lj_state(4, &[(1, 0.25)]);
        let config = SamplerConfig {
            n_samples: 50,
            ..SamplerConfig::default()
        };
        let draw = || {
            let mut rng = ChaCha12Rng::seed_from_u64(99);
            let mut chain = Chain::random(&state, &mut rng).unwrap();
            thermalize(&state, &mut chain, 20, &mut rng);
            draw_samples(&state, &config, &mut chain, &mut rng)
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn incremental_cache_stays_consistent() {
        let n = 6;
        let kind = AnsatzKind::Lj {
            sharing_distance: n - 1,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let m = parameter_count(kind, n);
        let params = DVector::from_fn(m, |_, _| {
            Complex64::new(
                rand::Rng::gen_range(&mut rng, -0.3..0.3),
                rand::Rng::gen_range(&mut rng, -0.3..0.3),
            )
        });
        let state = AnsatzState::new(kind, n, params).unwrap();
        let mut chain = Chain::random(&state, &mut rng).unwrap();
        thermalize(&state, &mut chain, 500, &mut rng);

        // After many in-place updates the cached log |psi| and all flip
        // ratios must match a cache rebuilt from scratch.
        let fresh = state.log_amplitude(chain.configuration()).unwrap().re;
        assert!((chain.log_abs_psi() - fresh).abs() < 1e-10);
        let mut resynced = chain.clone();
        resynced.resync(&state).unwrap();
        for a in 0..n {
            let incremental = state.ratio_single(chain.cache(), a);
            let rebuilt = state.ratio_single(resynced.cache(), a);
            assert!((incremental - rebuilt).norm() < 1e-10);
        }
    }

    #[test]
    fn config_validation_rejects_zero_fields() {
        assert!(SamplerConfig::default().validate().is_ok());
        for field in 0..4 {
            let mut config = SamplerConfig::default();
            match field {
                0 => config.n_samples = 0,
                1 => config.sweeps_between_samples = 0,
                2 => config.thermalization_sweeps = 0,
                _ => config.rethermalization_sweeps = 0,
            }
            assert!(config.validate().is_err());
        }
    }
}
