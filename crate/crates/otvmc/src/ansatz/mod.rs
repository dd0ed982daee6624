//! Variational wavefunction families.
//!
//! Two ansatz kinds parametrize log psi_theta(x) over z-basis
//! configurations x:
//!
//! * RBM: log psi = sum_i a_i sigma_i + sum_j log(2 cosh gamma_j) with
//!   gamma_j = b_j + sum_i w_ij sigma_i (complex a, b, w).
//! * Long-range Jastrow (LJ): log psi = sum_i a_i sigma_i
//!   + sum_{j<k} eta_jk sigma_j sigma_k, where eta_jk may be shared across
//!   pairs by minimal-image distance: pairs at distance D > sharing_distance
//!   use one parameter per D (LJPHd); sharing_distance = 0 is the fully
//!   homogeneous LJH, sharing_distance = N-1 the fully inhomogeneous LJNH.
//!
//! All parameters are complex. The module exposes log-amplitudes,
//! log-derivatives O_k(x) = d ln psi / d theta_k, and O(N') / O(N)
//! amplitude ratios for single and double spin flips through a per-chain
//! [`RatioCache`].

mod jastrow;
mod rbm;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::SpinConfiguration;

pub use jastrow::SharingMap;

/// Ansatz family and its structural hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnsatzKind {
    /// Restricted Boltzmann machine with `n_hidden` hidden units.
    Rbm { n_hidden: usize },
    /// Long-range Jastrow; `sharing_distance` = d of LJPHd.
    Lj { sharing_distance: usize },
}

impl AnsatzKind {
    pub fn validate(&self, n_sites: usize) -> Result<()> {
        if n_sites == 0 {
            return Err(Error::Contract("ansatz needs at least one site".into()));
        }
        match *self {
            AnsatzKind::Rbm { n_hidden } => {
                if n_hidden == 0 {
                    return Err(Error::Contract("RBM needs n_hidden >= 1".into()));
                }
            }
            AnsatzKind::Lj { sharing_distance } => {
                if sharing_distance > n_sites - 1 {
                    return Err(Error::Contract(format!(
                        "LJ sharing_distance {sharing_distance} exceeds N-1 = {}",
                        n_sites - 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Total number of variational parameters M for a kind at N sites.
///
/// RBM: N N' + N + N'. LJ: N biases plus one slot per unshared pair
/// (minimal-image distance <= d) plus one slot per shared distance class
/// (d < D <= floor(N/2)).
pub fn parameter_count(kind: AnsatzKind, n_sites: usize) -> usize {
    match kind {
        AnsatzKind::Rbm { n_hidden } => n_sites * n_hidden + n_sites + n_hidden,
        AnsatzKind::Lj { sharing_distance } => {
            n_sites + SharingMap::new(n_sites, sharing_distance).slot_count()
        }
    }
}

/// An ansatz kind bound to a chain length and a concrete parameter vector.
///
/// Immutable during a Monte Carlo estimation phase; parameter updates build
/// a new state via [`with_parameters`](Self::with_parameters).
#[derive(Debug, Clone)]
pub struct AnsatzState {
    kind: AnsatzKind,
    n_sites: usize,
    params: DVector<Complex64>,
    sharing: Option<SharingMap>,
}

/// Per-configuration work buffers enabling O(N') / O(N) amplitude ratios.
///
/// RBM caches the hidden-unit arguments gamma_j; LJ caches the site sums
/// s_f = a_f + sum_{k != f} eta_fk sigma_k, in terms of which a single flip
/// changes log psi by -2 sigma_f s_f.
#[derive(Debug, Clone)]
pub struct RatioCache {
    x: SpinConfiguration,
    buf: CacheBuf,
}

#[derive(Debug, Clone)]
enum CacheBuf {
    Rbm { gamma: Vec<Complex64> },
    Lj { site_sums: Vec<Complex64> },
}

impl RatioCache {
    pub fn configuration(&self) -> &SpinConfiguration {
        &self.x
    }
}

impl AnsatzState {
    /// Builds a state from an explicit parameter vector.
    pub fn new(kind: AnsatzKind, n_sites: usize, params: DVector<Complex64>) -> Result<Self> {
        kind.validate(n_sites)?;
        let expected = parameter_count(kind, n_sites);
        if params.len() != expected {
            return Err(Error::Contract(format!(
                "parameter vector length {} does not match layout size {expected}",
                params.len()
            )));
        }
        let sharing = match kind {
            AnsatzKind::Lj { sharing_distance } => {
                Some(SharingMap::new(n_sites, sharing_distance))
            }
            AnsatzKind::Rbm { .. } => None,
        };
        Ok(Self {
            kind,
            n_sites,
            params,
            sharing,
        })
    }

    /// The paramagnetic (+x coherent) initial state. LJ is exact at theta=0;
    /// the RBM gets a small complex Gaussian perturbation on w (scale
    /// `bootstrap_scale`) because S, F, and N^n all vanish identically at
    /// the exact zero point and the equations of motion could not start.
    pub fn init_paramagnetic<R: Rng + ?Sized>(
        kind: AnsatzKind,
        n_sites: usize,
        rng: &mut R,
        bootstrap_scale: f64,
    ) -> Result<Self> {
        kind.validate(n_sites)?;
        let m = parameter_count(kind, n_sites);
        let mut params = DVector::from_element(m, Complex64::new(0.0, 0.0));
        if let AnsatzKind::Rbm { n_hidden } = kind {
            let w_start = n_sites + n_hidden;
            let sigma = bootstrap_scale / std::f64::consts::SQRT_2;
            for k in w_start..m {
                let re: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal);
                let im: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal);
                params[k] = Complex64::new(sigma * re, sigma * im);
            }
        }
        Self::new(kind, n_sites, params)
    }

    /// Same kind and layout, new parameter values.
    pub fn with_parameters(&self, params: DVector<Complex64>) -> Result<Self> {
        Self::new(self.kind, self.n_sites, params)
    }

    pub fn kind(&self) -> AnsatzKind {
        self.kind
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn parameters(&self) -> &DVector<Complex64> {
        &self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    /// True when every log-derivative O_k(x) is real for every x (LJ: all
    /// O_k are products of spins). Lets the engine assemble its covariance
    /// matrices in real arithmetic.
    pub fn derivatives_are_real(&self) -> bool {
        matches!(self.kind, AnsatzKind::Lj { .. })
    }

    pub fn sharing_map(&self) -> Option<&SharingMap> {
        self.sharing.as_ref()
    }

    fn check_configuration(&self, x: &SpinConfiguration) -> Result<()> {
        if x.len() != self.n_sites {
            return Err(Error::Contract(format!(
                "configuration length {} does not match N = {}",
                x.len(),
                self.n_sites
            )));
        }
        Ok(())
    }

    /// log psi_theta(x), recomputed from scratch.
    pub fn log_amplitude(&self, x: &SpinConfiguration) -> Result<Complex64> {
        self.check_configuration(x)?;
        Ok(match self.kind {
            AnsatzKind::Rbm { n_hidden } => {
                rbm::log_amplitude(self.n_sites, n_hidden, &self.params, x)
            }
            AnsatzKind::Lj { .. } => {
                jastrow::log_amplitude(self.sharing.as_ref().unwrap(), &self.params, x)
            }
        })
    }

    /// All log-derivatives O_k(x) as a dense complex vector.
    pub fn log_derivatives(&self, x: &SpinConfiguration) -> Result<DVector<Complex64>> {
        let cache = self.cache(x)?;
        let mut out = DVector::from_element(self.parameter_count(), Complex64::new(0.0, 0.0));
        self.derivative_row_complex(&cache, out.as_mut_slice());
        Ok(out)
    }

    /// Ratio psi(x with `flips` applied) / psi(x) for one or two distinct
    /// flip sites; empty flip sets return 1.
    pub fn amplitude_ratio(&self, x: &SpinConfiguration, flips: &[usize]) -> Result<Complex64> {
        let cache = self.cache(x)?;
        match flips {
            [] => Ok(Complex64::new(1.0, 0.0)),
            [a] if *a < self.n_sites => Ok(self.ratio_single(&cache, *a)),
            [a, b] if *a != *b && *a < self.n_sites && *b < self.n_sites => {
                Ok(self.ratio_double(&cache, *a, *b))
            }
            _ => Err(Error::Contract(format!(
                "flip sites must be 1 or 2 distinct in-range sites, got {flips:?}"
            ))),
        }
    }

    /// Builds the ratio cache for a configuration.
    pub fn cache(&self, x: &SpinConfiguration) -> Result<RatioCache> {
        self.check_configuration(x)?;
        let buf = match self.kind {
            AnsatzKind::Rbm { n_hidden } => CacheBuf::Rbm {
                gamma: rbm::hidden_arguments(self.n_sites, n_hidden, &self.params, x),
            },
            AnsatzKind::Lj { .. } => CacheBuf::Lj {
                site_sums: jastrow::site_sums(self.sharing.as_ref().unwrap(), &self.params, x),
            },
        };
        Ok(RatioCache { x: x.clone(), buf })
    }

    /// log psi from the cache in O(N + N'); used for cache-consistency checks.
    pub fn log_amplitude_cached(&self, cache: &RatioCache) -> Complex64 {
        match (&cache.buf, self.kind) {
            (CacheBuf::Rbm { gamma }, AnsatzKind::Rbm { .. }) => {
                rbm::log_amplitude_from_gamma(self.n_sites, &self.params, &cache.x, gamma)
            }
            (CacheBuf::Lj { site_sums }, AnsatzKind::Lj { .. }) => {
                jastrow::log_amplitude_from_sums(&self.params, &cache.x, site_sums)
            }
            _ => unreachable!("cache kind always matches state kind"),
        }
    }

    /// psi(x with spin a flipped) / psi(x). O(N') for RBM, O(1) for LJ.
    #[inline]
    pub fn ratio_single(&self, cache: &RatioCache, a: usize) -> Complex64 {
        match &cache.buf {
            CacheBuf::Rbm { gamma } => {
                let AnsatzKind::Rbm { n_hidden } = self.kind else {
                    unreachable!()
                };
                rbm::ratio_single(self.n_sites, n_hidden, &self.params, &cache.x, gamma, a)
            }
            CacheBuf::Lj { site_sums } => jastrow::ratio_single(&cache.x, site_sums, a),
        }
    }

    /// psi(x with spins a, b flipped) / psi(x), a != b. O(N') / O(1).
    #[inline]
    pub fn ratio_double(&self, cache: &RatioCache, a: usize, b: usize) -> Complex64 {
        debug_assert_ne!(a, b);
        match &cache.buf {
            CacheBuf::Rbm { gamma } => {
                let AnsatzKind::Rbm { n_hidden } = self.kind else {
                    unreachable!()
                };
                rbm::ratio_double(self.n_sites, n_hidden, &self.params, &cache.x, gamma, a, b)
            }
            CacheBuf::Lj { site_sums } => {
                let sharing = self.sharing.as_ref().unwrap();
                let eta = sharing
                    .pair_slot(a, b)
                    .map(|slot| self.params[self.n_sites + slot])
                    .unwrap_or_else(|| Complex64::new(0.0, 0.0));
                jastrow::ratio_double(&cache.x, site_sums, eta, a, b)
            }
        }
    }

    /// Applies an accepted single-spin flip to the cache in place.
    /// O(N') for RBM, O(N) for LJ.
    pub fn apply_flip(&self, cache: &mut RatioCache, a: usize) {
        match &mut cache.buf {
            CacheBuf::Rbm { gamma } => {
                let AnsatzKind::Rbm { n_hidden } = self.kind else {
                    unreachable!()
                };
                rbm::apply_flip(self.n_sites, n_hidden, &self.params, &cache.x, gamma, a);
            }
            CacheBuf::Lj { site_sums } => {
                jastrow::apply_flip(
                    self.sharing.as_ref().unwrap(),
                    &self.params,
                    &cache.x,
                    site_sums,
                    a,
                );
            }
        }
        cache.x.flip(a);
    }

    /// Writes the row (O_1(x) ... O_M(x)) into `out` (complex layout).
    pub fn derivative_row_complex(&self, cache: &RatioCache, out: &mut [Complex64]) {
        debug_assert_eq!(out.len(), self.parameter_count());
        match &cache.buf {
            CacheBuf::Rbm { gamma } => {
                let AnsatzKind::Rbm { n_hidden } = self.kind else {
                    unreachable!()
                };
                rbm::derivative_row(self.n_sites, n_hidden, &cache.x, gamma, out);
            }
            CacheBuf::Lj { .. } => {
                let sharing = self.sharing.as_ref().unwrap();
                let mut real = vec![0.0; out.len()];
                jastrow::derivative_row(sharing, &cache.x, &mut real);
                for (o, &r) in out.iter_mut().zip(&real) {
                    *o = Complex64::new(r, 0.0);
                }
            }
        }
    }

    /// Writes the derivative row in real arithmetic. Only valid when
    /// [`derivatives_are_real`](Self::derivatives_are_real) holds.
    pub fn derivative_row_real(&self, cache: &RatioCache, out: &mut [f64]) {
        debug_assert!(self.derivatives_are_real());
        let sharing = self.sharing.as_ref().expect("real rows imply LJ");
        jastrow::derivative_row(sharing, &cache.x, out);
    }
}
