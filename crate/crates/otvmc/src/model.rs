//! Dissipative long-range transverse-field Ising chain.
//!
//! Hamiltonian (hbar = 1, periodic boundary):
//!
//! ```text
//! H = -(J / K(alpha)) * sum_{i<j} sigma^z_i sigma^z_j / d_ij^alpha  -  h * sum_i sigma^x_i
//! ```
//!
//! with minimal-image distance d_ij = min(|i-j|, N-|i-j|) and the Kac factor
//! K(alpha) = sum_{i<j} d_ij^{-alpha} / (N-1), which makes the interaction
//! energy extensive for every alpha. Dissipation is uniform local decay,
//! one collapse channel L_i = sqrt(kappa) sigma^-_i per site.
//!
//! Besides the couplings this module provides the per-configuration local
//! estimators that drive the variational equations of motion: the local
//! Hamiltonian, the collapse amplitudes B^n(x) = <x|L_n|psi>/<x|psi>, and the
//! local effective energy of the Stratonovich stochastic Schrödinger
//! equation in both its nonlinear and linear forms.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ansatz::AnsatzState;
use crate::error::{Error, Result};
use crate::spin::SpinConfiguration;

/// Boundary convention for distances. Only the periodic minimal-image ring
/// is wired up; the enum exists so configurations are explicit about it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    PeriodicMinimalImage,
}

/// Parameters of the dissipative long-range Ising model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Number of spins N >= 1.
    pub n_sites: usize,
    /// Power-law exponent alpha >= 0 of the interaction decay.
    pub alpha: f64,
    /// Overall coupling J > 0 (energy unit; times are in 1/J).
    pub j: f64,
    /// Transverse field h (any sign).
    pub h: f64,
    /// Local decay rate kappa >= 0.
    pub kappa: f64,
    #[serde(default)]
    pub boundary: Boundary,
}

impl ModelSpec {
    pub fn new(n_sites: usize, alpha: f64, j: f64, h: f64, kappa: f64) -> Result<Self> {
        let spec = Self {
            n_sites,
            alpha,
            j,
            h,
            kappa,
            boundary: Boundary::PeriodicMinimalImage,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 1 {
            return Err(Error::InvalidModel("n_sites must be >= 1".into()));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::InvalidModel("alpha must be finite and >= 0".into()));
        }
        if !self.j.is_finite() || self.j <= 0.0 {
            return Err(Error::InvalidModel("J must be finite and > 0".into()));
        }
        if !self.h.is_finite() {
            return Err(Error::InvalidModel("h must be finite".into()));
        }
        if !self.kappa.is_finite() || self.kappa < 0.0 {
            return Err(Error::InvalidModel("kappa must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Minimal-image distance between two sites on the ring.
    pub fn distance(&self, i: usize, j: usize) -> usize {
        let d = i.abs_diff(j);
        d.min(self.n_sites - d)
    }

    /// Kac normalization K(alpha) = sum_{i<j} d_ij^{-alpha} / (N-1).
    ///
    /// The antipodal pair at distance N/2 (even N) is counted once per
    /// unordered pair, like every other pair.
    pub fn kac_factor(&self) -> Result<f64> {
        kac_factor(self.n_sites, self.alpha)
    }

    /// Kac-normalized coupling J_d = J d^{-alpha} / K(alpha) between two
    /// distinct sites; symmetric and translation invariant.
    pub fn coupling(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.n_sites;
        if i >= n || j >= n || i == j {
            return Err(Error::InvalidPair { i, j, n });
        }
        let d = self.distance(i, j);
        Ok(self.j * (d as f64).powf(-self.alpha) / self.kac_factor()?)
    }

    /// Coupling as a function of (signed, periodic) site separation d;
    /// entry 0 is the vanishing self-coupling. Indexing the returned table
    /// with any d in 0..N gives J_{min(d, N-d)}.
    pub fn coupling_table(&self) -> Result<Vec<f64>> {
        let n = self.n_sites;
        if n == 1 {
            return Ok(vec![0.0]);
        }
        let kac = self.kac_factor()?;
        Ok((0..n)
            .map(|d| {
                if d == 0 {
                    0.0
                } else {
                    let m = d.min(n - d) as f64;
                    self.j * m.powf(-self.alpha) / kac
                }
            })
            .collect())
    }

    /// Diagonal Ising energy -sum_{i<j} J_{d_ij} sigma_i sigma_j of a
    /// configuration, using a precomputed [`coupling_table`](Self::coupling_table).
    pub fn ising_energy(&self, table: &[f64], x: &SpinConfiguration) -> f64 {
        let n = self.n_sites;
        let mut e = 0.0;
        for i in 0..n {
            let si = x.spin(i);
            for j in (i + 1)..n {
                e -= table[j - i] * si * x.spin(j);
            }
        }
        e
    }

    /// Number of collapse channels (one sigma^- per site when kappa > 0).
    pub fn channel_count(&self) -> usize {
        if self.kappa > 0.0 {
            self.n_sites
        } else {
            0
        }
    }

    /// Collapse channels of the model.
    pub fn channels(&self) -> Vec<CollapseChannel> {
        (0..self.channel_count())
            .map(|site| CollapseChannel {
                site,
                kappa: self.kappa,
            })
            .collect()
    }
}

/// One local decay channel L = sqrt(kappa) sigma^- acting on `site`.
///
/// For lowering operators L^2 = 0 (so the L^2 term of the effective
/// Hamiltonian drops), and L^dagger L = kappa (1 + sigma^z)/2 is diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapseChannel {
    pub site: usize,
    pub kappa: f64,
}

/// Which form of the stochastic Schrödinger equation drives the dynamics.
///
/// The nonlinear form preserves the state norm and its effective Hamiltonian
/// contains channel expectation values; the linear form is expectation-free
/// and pairs with an explicit normalization weight Q per trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SseMode {
    #[default]
    Nonlinear,
    Linear,
}

/// Sum over pairs of d^(-alpha), divided by N-1.
pub fn kac_factor(n: usize, alpha: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidModel(format!(
            "Kac factor needs at least 2 sites, got {n}"
        )));
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (j - i).min(n - (j - i)) as f64;
            sum += d.powf(-alpha);
        }
    }
    Ok(sum / (n - 1) as f64)
}

/// Local estimator of the Hamiltonian,
/// E_H(x) = E_Ising(x) - h * sum_a ratio(x -> x with spin a flipped).
pub fn local_hamiltonian(
    spec: &ModelSpec,
    state: &AnsatzState,
    x: &SpinConfiguration,
) -> Result<Complex64> {
    let table = spec.coupling_table()?;
    let cache = state.cache(x)?;
    Ok(local_hamiltonian_cached(spec, &table, state, &cache))
}

/// Hot-path variant of [`local_hamiltonian`] over a prepared ratio cache.
pub fn local_hamiltonian_cached(
    spec: &ModelSpec,
    table: &[f64],
    state: &AnsatzState,
    cache: &crate::ansatz::RatioCache,
) -> Complex64 {
    let mut e = Complex64::new(spec.ising_energy(table, cache.configuration()), 0.0);
    if spec.h != 0.0 {
        let mut flips = Complex64::new(0.0, 0.0);
        for a in 0..spec.n_sites {
            flips += state.ratio_single(cache, a);
        }
        e -= spec.h * flips;
    }
    e
}

/// Local collapse amplitude B^n(x) = <x|L_n|psi>/<x|psi>:
/// sqrt(kappa) times the raise-spin amplitude ratio when x_n = -1, else 0.
pub fn local_collapse_amplitude(
    channel: &CollapseChannel,
    state: &AnsatzState,
    x: &SpinConfiguration,
) -> Result<Complex64> {
    let cache = state.cache(x)?;
    Ok(local_collapse_amplitude_cached(channel, state, &cache))
}

/// Hot-path variant of [`local_collapse_amplitude`].
#[inline]
pub fn local_collapse_amplitude_cached(
    channel: &CollapseChannel,
    state: &AnsatzState,
    cache: &crate::ansatz::RatioCache,
) -> Complex64 {
    if cache.configuration().spin_i8(channel.site) == 1 {
        Complex64::new(0.0, 0.0)
    } else {
        channel.kappa.sqrt() * state.ratio_single(cache, channel.site)
    }
}

/// Local effective energy of the Stratonovich stochastic Schrödinger
/// equation, without its configuration-independent scalar terms (constants
/// cannot contribute to connected covariances; the gauge/weight tracks add
/// them back separately, see [`scalar_effective_terms`]).
///
/// Nonlinear mode (`channel_expectations[n]` = current estimate of
/// <L_n + L_n^dagger>):
///
/// ```text
/// E_eff(x) = E_H(x) - (i/2) kappa n_up(x) + i sum_n <L_n+L_n^dag> B^n(x)
/// ```
///
/// Linear mode (no expectations enter):
///
/// ```text
/// E_eff(x) = E_H(x) - (i/2) kappa n_up(x)
/// ```
///
/// The -(i/2) kappa n_up term is the diagonal of -(i/2) sum_n L_n^dag L_n;
/// L_n^2 = 0 for decay channels.
pub fn local_effective_energy(
    spec: &ModelSpec,
    state: &AnsatzState,
    x: &SpinConfiguration,
    channel_expectations: Option<&[f64]>,
    mode: SseMode,
) -> Result<Complex64> {
    let table = spec.coupling_table()?;
    let cache = state.cache(x)?;
    let e_h = local_hamiltonian_cached(spec, &table, state, &cache);
    let diag = diagonal_decay_term(spec, cache.configuration());
    match mode {
        SseMode::Linear => Ok(e_h + diag),
        SseMode::Nonlinear => {
            let lam = channel_expectations.ok_or_else(|| {
                Error::Contract(
                    "nonlinear local_effective_energy requires channel expectations".into(),
                )
            })?;
            if lam.len() != spec.channel_count() {
                return Err(Error::Contract(format!(
                    "expected {} channel expectations, got {}",
                    spec.channel_count(),
                    lam.len()
                )));
            }
            let mut e = e_h + diag;
            for (n, channel) in spec.channels().iter().enumerate() {
                let b = local_collapse_amplitude_cached(channel, state, &cache);
                e += Complex64::new(0.0, lam[n]) * b;
            }
            Ok(e)
        }
    }
}

/// The diagonal dissipative part -(i/2) sum_n L_n^dag L_n evaluated at x,
/// i.e. -(i/2) kappa * (number of up spins).
#[inline]
pub fn diagonal_decay_term(spec: &ModelSpec, x: &SpinConfiguration) -> Complex64 {
    Complex64::new(0.0, -0.5 * spec.kappa * x.count_up() as f64)
}

/// Configuration-independent scalar terms of the nonlinear effective
/// Hamiltonian, -(i/2) sum_n ( <L_n+L_n^dag>^2 - kappa u_n ), where u_n is
/// the mean up-spin occupation of site n. They shift only the global phase
/// and norm, so they are omitted from the force computation and consumed
/// exclusively by the optional gauge track.
pub fn scalar_effective_terms(channel_expectations: &[f64], up_occupations: &[f64], kappa: f64) -> Complex64 {
    debug_assert_eq!(channel_expectations.len(), up_occupations.len());
    let sum: f64 = channel_expectations
        .iter()
        .zip(up_occupations)
        .map(|(&lam, &u)| lam * lam - kappa * u)
        .sum();
    Complex64::new(0.0, -0.5 * sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{AnsatzKind, AnsatzState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn uniform_state(n: usize) -> AnsatzState {
        let kind = AnsatzKind::Lj {
            sharing_distance: 0,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        AnsatzState::init_paramagnetic(kind, n, &mut rng, 0.0).unwrap()
    }

    #[test]
    fn kac_factor_values() {
        assert!((kac_factor(2, 1.0).unwrap() - 1.0).abs() < 1e-15);
        // N = 4 minimal-image distances over the 6 pairs: {1,1,1,1,2,2}.
        assert!((kac_factor(4, 1.0).unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert!((kac_factor(4, 0.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(
            kac_factor(1, 1.0),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn couplings_follow_the_kac_normalized_power_law() {
        let spec = ModelSpec::new(4, 1.0, 1.0, 0.0, 0.0).unwrap();
        assert!((spec.coupling(0, 1).unwrap() - 0.6).abs() < 1e-15);
        assert!((spec.coupling(0, 2).unwrap() - 0.3).abs() < 1e-15);
        assert!(matches!(
            spec.coupling(1, 1),
            Err(Error::InvalidPair { .. })
        ));

        let flat = ModelSpec::new(5, 0.0, 1.3, 0.0, 0.0).unwrap();
        let expected = 1.3 / flat.kac_factor().unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert!((flat.coupling(i, j).unwrap() - expected).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn coupling_is_symmetric_and_translation_invariant() {
        let spec = ModelSpec::new(7, 1.4, 1.0, 0.0, 0.0).unwrap();
        let n = spec.n_sites;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let c = spec.coupling(i, j).unwrap();
                assert_eq!(c, spec.coupling(j, i).unwrap());
                assert!((c - spec.coupling((i + 1) % n, (j + 1) % n).unwrap()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn all_up_energy_is_extensive() {
        // The Kac factor makes E(all up) = -J (N-1) exactly, for any alpha.
        for n in [8usize, 16, 32] {
            for alpha in [0.5, 1.0, 2.0] {
                let spec = ModelSpec::new(n, alpha, 1.0, 0.0, 0.0).unwrap();
                let table = spec.coupling_table().unwrap();
                let all_up = SpinConfiguration::from_index((1usize << n) - 1, n);
                let e = spec.ising_energy(&table, &all_up);
                assert!(
                    (e + (n as f64 - 1.0)).abs() < 1e-12,
                    "N = {n}, alpha = {alpha}: E = {e}"
                );
            }
        }
    }

    #[test]
    fn local_hamiltonian_examples() {
        // h = 0: diagonal Ising energy, real.
        let spec = ModelSpec::new(2, 1.0, 1.0, 0.0, 0.0).unwrap();
        let state = uniform_state(2);
        let up_up = SpinConfiguration::from_index(3, 2);
        let e = local_hamiltonian(&spec, &state, &up_up).unwrap();
        assert!((e.re + 1.0).abs() < 1e-14 && e.im == 0.0);

        // Uniform amplitudes: every flip ratio is 1, so E = E_Ising - h N.
        let spec_h = ModelSpec::new(4, 1.0, 1.0, 0.7, 0.0).unwrap();
        let state4 = uniform_state(4);
        let table = spec_h.coupling_table().unwrap();
        for idx in 0..16 {
            let x = SpinConfiguration::from_index(idx, 4);
            let e = local_hamiltonian(&spec_h, &state4, &x).unwrap();
            let expected = spec_h.ising_energy(&table, &x) - 0.7 * 4.0;
            assert!((e - Complex64::new(expected, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn collapse_amplitude_matrix_structure() {
        let state = uniform_state(3);
        let channel = CollapseChannel {
            site: 1,
            kappa: 0.81,
        };
        let down = SpinConfiguration::from_index(0, 3);
        let b = local_collapse_amplitude(&channel, &state, &down).unwrap();
        assert!((b - Complex64::new(0.9, 0.0)).norm() < 1e-14);

        let up_at_1 = SpinConfiguration::from_index(2, 3);
        let b = local_collapse_amplitude(&channel, &state, &up_at_1).unwrap();
        assert_eq!(b, Complex64::new(0.0, 0.0));

        let off = CollapseChannel {
            site: 1,
            kappa: 0.0,
        };
        let b = local_collapse_amplitude(&off, &state, &down).unwrap();
        assert_eq!(b, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn effective_energy_reduces_and_extends_correctly() {
        let state = uniform_state(3);

        // kappa = 0 reduces to the plain local Hamiltonian in both modes.
        let closed = ModelSpec::new(3, 1.0, 1.0, 0.4, 0.0).unwrap();
        let x = SpinConfiguration::from_index(5, 3);
        let e_h = local_hamiltonian(&closed, &state, &x).unwrap();
        for mode in [SseMode::Nonlinear, SseMode::Linear] {
            let lam = [0.0; 0];
            let e = local_effective_energy(&closed, &state, &x, Some(&lam), mode).unwrap();
            assert!((e - e_h).norm() < 1e-14);
        }

        // All spins down, h = 0: the diagonal decay term vanishes and each
        // channel contributes i lambda_n sqrt(kappa).
        let open = ModelSpec::new(3, 1.0, 1.0, 0.0, 0.49).unwrap();
        let down = SpinConfiguration::from_index(0, 3);
        let lam = [0.3, -0.1, 0.2];
        let e = local_effective_energy(&open, &state, &down, Some(&lam), SseMode::Nonlinear)
            .unwrap();
        let table = open.coupling_table().unwrap();
        let expected = Complex64::new(open.ising_energy(&table, &down), 0.0)
            + Complex64::new(0.0, (0.3 - 0.1 + 0.2) * 0.7);
        assert!((e - expected).norm() < 1e-14);

        // Linear mode, all spins up: E_Ising - (i/2) N kappa, expectations
        // ignored entirely.
        let up = SpinConfiguration::from_index(7, 3);
        let e = local_effective_energy(&open, &state, &up, None, SseMode::Linear).unwrap();
        let expected = Complex64::new(open.ising_energy(&table, &up), -0.5 * 3.0 * 0.49);
        assert!((e - expected).norm() < 1e-14);

        // Nonlinear mode requires the expectations.
        assert!(matches!(
            local_effective_energy(&open, &state, &up, None, SseMode::Nonlinear),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn channels_exist_only_with_decay() {
        let open = ModelSpec::new(5, 1.0, 1.0, 0.0, 0.3).unwrap();
        assert_eq!(open.channels().len(), 5);
        let closed = ModelSpec::new(5, 1.0, 1.0, 0.0, 0.0).unwrap();
        assert!(closed.channels().is_empty());
    }

    #[test]
    fn model_validation_rejects_bad_parameters() {
        assert!(ModelSpec::new(0, 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(ModelSpec::new(4, -0.5, 1.0, 0.0, 0.0).is_err());
        assert!(ModelSpec::new(4, 1.0, 0.0, 0.0, 0.0).is_err());
        assert!(ModelSpec::new(4, 1.0, 1.0, f64::NAN, 0.0).is_err());
        assert!(ModelSpec::new(4, 1.0, 1.0, 0.0, -0.1).is_err());
    }
}
