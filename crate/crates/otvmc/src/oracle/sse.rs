//! Dense stochastic Schrödinger trajectories on the full Hilbert space,
//! sharing the predictor-corrector stepper and ensemble reduction with
//! the variational engine so that only the state representation differs.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::Result;
use crate::integrator::{draw_wiener, predictor_corrector_step, SolverScheme};
use crate::model::{ModelSpec, SseMode};
use crate::observables::{ensemble_average, CollectiveSpinEstimate, ObservableRecord};
use crate::oracle::dense::{DenseOps, SpinMoments};

/// Moments, squared norm, and trajectory weight at one recording time.
#[derive(Debug, Clone)]
pub struct SseRecord {
    pub t: f64,
    pub moments: SpinMoments,
    pub norm_sq: f64,
    pub q: f64,
}

/// One integrated trajectory.
pub struct SsePath {
    pub records: Vec<SseRecord>,
    pub final_state: DVector<Complex64>,
}

struct SseRhs<'a> {
    ops: &'a DenseOps,
    sqrt_kappa: f64,
    mode: SseMode,
}

impl SseRhs<'_> {
    /// A(psi) dt. Nonlinear mode carries the expectation-dependent
    /// counterterms that keep the norm constant in continuous time;
    /// linear mode is the bare non-Hermitian drift.
    fn drift(&self, psi: &DVector<Complex64>, dt: f64) -> DVector<Complex64> {
        let minus_i = Complex64::new(0.0, -1.0);
        let mut out = self.ops.apply_h(psi).map(|c| c * minus_i);
        if self.sqrt_kappa == 0.0 {
            return out.map(|c| c * dt);
        }
        let kappa = self.sqrt_kappa * self.sqrt_kappa;
        let norm_sq = psi.norm_squared();
        for a in 0..self.ops.n_sites() {
            let sm = self.ops.apply_sigma_minus(a, psi);
            // n_a psi = s+_a s-_a psi reuses the lowered vector.
            let n_psi = raise(a, &sm);
            match self.mode {
                SseMode::Linear => {
                    out += n_psi.map(|c| c * (-0.5 * kappa));
                }
                SseMode::Nonlinear => {
                    let exp_l = self.sqrt_kappa * psi.dotc(&sm) / norm_sq;
                    let lambda = 2.0 * exp_l.re;
                    let u = psi.dotc(&n_psi).re / norm_sq;
                    out += n_psi.map(|c| c * (-0.5 * kappa));
                    out += sm.map(|c| c * (lambda * self.sqrt_kappa));
                    let scalar = -0.5 * (lambda * lambda - kappa * u);
                    out += psi.map(|c| c * scalar);
                }
            }
        }
        out.map(|c| c * dt)
    }

    /// sum_a B_a(psi) dW_a with B_a = sqrt(kappa) s-_a (minus lambda_a/2
    /// in nonlinear mode).
    fn diffusion(&self, psi: &DVector<Complex64>, dw: &[f64]) -> DVector<Complex64> {
        let mut out = DVector::from_element(psi.len(), Complex64::default());
        if self.sqrt_kappa == 0.0 {
            return out;
        }
        let norm_sq = psi.norm_squared();
        for (a, w) in dw.iter().enumerate() {
            let sm = self.ops.apply_sigma_minus(a, psi);
            out += sm.map(|c| c * (self.sqrt_kappa * w));
            if self.mode == SseMode::Nonlinear {
                let lambda = 2.0 * (self.sqrt_kappa * psi.dotc(&sm) / norm_sq).re;
                out += psi.map(|c| c * (-0.5 * lambda * w));
            }
        }
        out
    }
}

fn raise(a: usize, lowered: &DVector<Complex64>) -> DVector<Complex64> {
    let mut out = DVector::from_element(lowered.len(), Complex64::default());
    let bit = 1usize << a;
    for idx in 0..lowered.len() {
        if idx & bit == 0 {
            out[idx | bit] = lowered[idx];
        }
    }
    out
}

/// Integrates one dense trajectory from `psi0` without renormalizing.
/// Records are taken at step multiples of `record_stride` and at the
/// final step. The weight q is the squared norm in linear mode and 1
/// in nonlinear mode.
pub fn dense_sse_trajectory(
    spec: &ModelSpec,
    psi0: &DVector<Complex64>,
    dt: f64,
    n_steps: usize,
    record_stride: usize,
    mode: SseMode,
    scheme: SolverScheme,
    rng: &mut ChaCha12Rng,
) -> Result<SsePath> {
    let ops = DenseOps::new(spec)?;
    let rhs = SseRhs {
        ops: &ops,
        sqrt_kappa: spec.kappa.sqrt(),
        mode,
    };
    let n_channels = spec.channels().len();
    let stride = record_stride.max(1);
    let mut psi = psi0.clone();
    let mut records = Vec::new();
    for idx in 0..=n_steps {
        if idx % stride == 0 || idx == n_steps {
            let norm_sq = psi.norm_squared();
            let q = match mode {
                SseMode::Linear => norm_sq,
                SseMode::Nonlinear => 1.0,
            };
            records.push(SseRecord {
                t: idx as f64 * dt,
                moments: ops.collective_spin(&psi),
                norm_sq,
                q,
            });
        }
        if idx < n_steps {
            let dw = draw_wiener(rng, n_channels, dt);
            psi = predictor_corrector_step(
                scheme,
                &psi,
                |p| rhs.drift(p, dt),
                |p| rhs.diffusion(p, &dw),
            );
        }
    }
    Ok(SsePath {
        records,
        final_state: psi,
    })
}

/// Runs `n_traj` dense trajectories from the +x coherent state and
/// reduces them to ensemble records. Trajectory j consumes RNG stream
/// 1 + j of `master_seed`, matching the variational runner.
pub fn dense_sse_ensemble(
    spec: &ModelSpec,
    dt: f64,
    n_steps: usize,
    record_stride: usize,
    mode: SseMode,
    scheme: SolverScheme,
    n_traj: usize,
    master_seed: u64,
) -> Result<Vec<ObservableRecord>> {
    let ops = DenseOps::new(spec)?;
    let psi0 = ops.coherent_plus_x();
    let mut per_time: Vec<Vec<CollectiveSpinEstimate>> = Vec::new();
    let mut weights: Vec<Vec<f64>> = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    for j in 0..n_traj {
        let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
        rng.set_stream(1 + j as u64);
        let path = dense_sse_trajectory(
            spec,
            &psi0,
            dt,
            n_steps,
            record_stride,
            mode,
            scheme,
            &mut rng,
        )?;
        if j == 0 {
            times = path.records.iter().map(|r| r.t).collect();
            per_time = vec![Vec::with_capacity(n_traj); times.len()];
            weights = vec![Vec::with_capacity(n_traj); times.len()];
        }
        for (slot, rec) in path.records.iter().enumerate() {
            per_time[slot].push(CollectiveSpinEstimate {
                m: rec.moments.m,
                m_err: [0.0; 3],
                c: rec.moments.covariance(),
                c_err: [[0.0; 3]; 3],
                g: rec.moments.g,
            });
            weights[slot].push(rec.q);
        }
    }
    times
        .iter()
        .enumerate()
        .map(|(slot, &t)| {
            let q = match mode {
                SseMode::Linear => Some(weights[slot].as_slice()),
                SseMode::Nonlinear => None,
            };
            ensemble_average(t, &per_time[slot], mode, q, spec.n_sites)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::dense::dense_lindblad_evolve;

    #[test]
    fn closed_system_matches_unitary_evolution() {
        let spec = ModelSpec::new(3, 1.0, 1.0, 0.7, 0.0).unwrap();
        let ops = DenseOps::new(&spec).unwrap();
        let psi0 = ops.coherent_plus_x();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let path = dense_sse_trajectory(
            &spec,
            &psi0,
            1e-3,
            1000,
            1000,
            SseMode::Nonlinear,
            SolverScheme::Midpoint,
            &mut rng,
        )
        .unwrap();
        let exact = ops.schrodinger_evolve(&psi0, 1.0, 1e-4);
        let fid = DenseOps::fidelity(&path.final_state, &exact);
        assert!(fid > 1.0 - 1e-8, "fidelity {fid}");
    }

    // The nonlinear flow preserves the norm exactly in continuous time.
    // The explicit predictor-corrector leaves a residual drift that the
    // scaling diagnostic above shows to vanish linearly in the step size;
    // at dt = 1e-3 the measured drift after 10^3 steps is ~2e-4 (midpoint
    // and trapezoidal alike), so the 1e-4 bound asserted here fails. The
    // bound is kept as the stated requirement rather than loosened to fit
    // the scheme.
    #[test]
    fn nonlinear_norm_stays_near_one() {
        let spec = ModelSpec::new(4, 1.0, 1.0, 0.0, 0.5).unwrap();
        let ops = DenseOps::new(&spec).unwrap();
        let psi0 = ops.coherent_plus_x();
        for seed in [1u64, 2, 3] {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let path = dense_sse_trajectory(
                &spec,
                &psi0,
                1e-3,
                1000,
                100,
                SseMode::Nonlinear,
                SolverScheme::Midpoint,
                &mut rng,
            )
            .unwrap();
            for rec in &path.records {
                assert!(
                    (rec.norm_sq.sqrt() - 1.0).abs() < 1e-4,
                    "seed {seed}: | |psi| - 1 | = {:.3e} at t = {}",
                    (rec.norm_sq.sqrt() - 1.0).abs(),
                    rec.t
                );
            }
        }
    }

    #[test]
    #[ignore]
    fn norm_drift_scaling_diagnostic() {
        let spec = ModelSpec::new(4, 1.0, 1.0, 0.0, 0.5).unwrap();
        let ops = DenseOps::new(&spec).unwrap();
        let psi0 = ops.coherent_plus_x();
        for scheme in [SolverScheme::Midpoint, SolverScheme::Trapezoidal] {
            for (dt, n_steps) in [(1e-3, 1000usize), (5e-4, 2000), (2.5e-4, 4000)] {
                let mut worst: f64 = 0.0;
                let mut finals = Vec::new();
                for seed in 0..8u64 {
                    let mut rng = ChaCha12Rng::seed_from_u64(seed);
                    let path = dense_sse_trajectory(
                        &spec, &psi0, dt, n_steps, n_steps / 10,
                        SseMode::Nonlinear, scheme, &mut rng,
                    )
                    .unwrap();
                    for rec in &path.records {
                        worst = worst.max((rec.norm_sq.sqrt() - 1.0).abs());
                    }
                    finals.push(path.records.last().unwrap().norm_sq.sqrt() - 1.0);
                }
                let mean: f64 = finals.iter().sum::<f64>() / finals.len() as f64;
                println!(
                    "{scheme:?} dt = {dt:.1e}: worst |norm-1| = {worst:.3e}, mean final = {mean:.3e}"
                );
            }
        }
    }

    #[test]
    fn linear_weight_mean_stays_near_one() {
        let spec = ModelSpec::new(2, 1.0, 1.0, 0.0, 0.8).unwrap();
        let ops = DenseOps::new(&spec).unwrap();
        let psi0 = ops.coherent_plus_x();
        let n_traj = 400;
        let mut qs = Vec::with_capacity(n_traj);
        for j in 0..n_traj {
            let mut rng = ChaCha12Rng::seed_from_u64(40);
            rng.set_stream(1 + j as u64);
            let path = dense_sse_trajectory(
                &spec,
                &psi0,
                1e-3,
                800,
                800,
                SseMode::Linear,
                SolverScheme::Midpoint,
                &mut rng,
            )
            .unwrap();
            qs.push(path.records.last().unwrap().q);
        }
        let mean: f64 = qs.iter().sum::<f64>() / n_traj as f64;
        let var: f64 =
            qs.iter().map(|q| (q - mean) * (q - mean)).sum::<f64>() / (n_traj as f64 - 1.0);
        let se = (var / n_traj as f64).sqrt();
        assert!(
            (mean - 1.0).abs() < 3.0 * se + 1e-3,
            "E[Q] = {mean} +- {se}"
        );
    }

    #[test]
    fn unraveling_reproduces_lindblad() {
        let spec = ModelSpec::new(2, 1.0, 1.0, 0.4, 0.6).unwrap();
        let grid = [0.0, 0.25, 0.5];
        let reference = dense_lindblad_evolve(&spec, &grid, 1e-4).unwrap();
        for mode in [SseMode::Nonlinear, SseMode::Linear] {
            let records =
                dense_sse_ensemble(&spec, 1e-3, 500, 250, mode, SolverScheme::Midpoint, 600, 7)
                    .unwrap();
            assert_eq!(records.len(), reference.len());
            for (got, want) in records.iter().zip(reference.iter()) {
                assert!((got.t - want.t).abs() < 1e-12);
                for i in 0..3 {
                    let sigma = got.m_err[i].max(2e-3);
                    assert!(
                        (got.m[i] - want.m[i]).abs() < 3.0 * sigma,
                        "{mode:?} M[{i}] at t = {}: {} vs {} (sigma {sigma})",
                        got.t,
                        got.m[i],
                        want.m[i]
                    );
                }
            }
        }
    }

    #[test]
    fn trajectories_are_seed_deterministic() {
        let spec = ModelSpec::new(3, 1.0, 1.0, 0.2, 0.5).unwrap();
        let ops = DenseOps::new(&spec).unwrap();
        let psi0 = ops.coherent_plus_x();
        let run = || {
            let mut rng = ChaCha12Rng::seed_from_u64(11);
            rng.set_stream(1);
            dense_sse_trajectory(
                &spec,
                &psi0,
                1e-3,
                200,
                50,
                SseMode::Linear,
                SolverScheme::Trapezoidal,
                &mut rng,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.final_state, b.final_state);
        for (ra, rb) in a.records.iter().zip(b.records.iter()) {
            assert_eq!(ra.norm_sq.to_bits(), rb.norm_sq.to_bits());
            assert_eq!(ra.q.to_bits(), rb.q.to_bits());
        }
    }
}
