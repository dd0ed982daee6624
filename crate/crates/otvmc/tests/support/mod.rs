//! Measurement helpers shared by the property suite and the acceptance
//! gate. Each returns the measured quantity; the callers pin the bounds.

use nalgebra::{Complex, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use otvmc::ansatz::{parameter_count, AnsatzKind, AnsatzState};
use otvmc::engine::{estimate_step, estimate_step_exact, StepEstimates};
use otvmc::integrator::{draw_wiener, predictor_corrector_step, SolverScheme};
use otvmc::model::{local_effective_energy, ModelSpec, SseMode};
use otvmc::oracle::dense::DenseOps;
use otvmc::oracle::sse::dense_sse_trajectory;
use otvmc::config::RunConfig;
use otvmc::runner::simulate_ensemble;
use otvmc::sampler::{draw_samples, thermalize, Chain, SamplerConfig};
use otvmc::SpinConfiguration;

pub fn random_ansatz(kind: AnsatzKind, n_sites: usize, seed: u64, scale: f64) -> AnsatzState {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let m = parameter_count(kind, n_sites);
    let params = DVector::from_fn(m, |_, _| {
        Complex64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
    });
    AnsatzState::new(kind, n_sites, params).unwrap()
}

fn random_configuration<R: Rng + ?Sized>(n_sites: usize, rng: &mut R) -> SpinConfiguration {
    SpinConfiguration::from_index(rng.gen_range(0..(1usize << n_sites)), n_sites)
}

/// Largest relative error between analytic log-derivatives and central
/// finite differences of the log-amplitude, over a few configurations.
/// The log-amplitude is holomorphic in the parameters, so a real step
/// probes the full complex derivative.
pub fn gradient_max_rel_error(kind: AnsatzKind, n_sites: usize, seed: u64) -> f64 {
    let state = random_ansatz(kind, n_sites, seed, 0.4);
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5eed);
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let x = random_configuration(n_sites, &mut rng);
        let analytic = state.log_derivatives(&x).unwrap();
        for k in 0..state.parameter_count() {
            let shift = |sign: f64| {
                let mut params = state.parameters().clone();
                params[k] += Complex::from(sign * step);
                state
                    .with_parameters(params)
                    .unwrap()
                    .log_amplitude(&x)
                    .unwrap()
            };
            let fd = (shift(1.0) - shift(-1.0)) / (2.0 * step);
            let scale = analytic[k].norm().max(1.0);
            worst = worst.max((fd - analytic[k]).norm() / scale);
        }
    }
    worst
}

fn hermiticity_and_floor(est: &StepEstimates) -> (f64, f64) {
    let s = est.s_matrix();
    let m = est.parameter_count();
    let mut residual: f64 = 0.0;
    for r in 0..m {
        for c in 0..m {
            residual = residual.max((s[(r, c)] - s[(c, r)].conj()).norm());
        }
    }
    let sym = nalgebra::DMatrix::from_fn(m, m, |r, c| 0.5 * (s[(r, c)] + s[(c, r)].conj()));
    let eig = sym.symmetric_eigen();
    let lambda_max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let lambda_min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    (residual, lambda_min / lambda_max.max(1.0))
}

/// Hermiticity residual and normalized smallest eigenvalue of S for a
/// random state, estimated both by Monte Carlo and by enumeration.
pub fn s_matrix_psd_measures(seed: u64) -> (f64, f64) {
    let spec = ModelSpec::new(3, 1.0, 1.0, 0.4, 0.6).unwrap();
    let mut worst_residual: f64 = 0.0;
    let mut worst_floor: f64 = 0.0;
    for (case, kind) in [
        AnsatzKind::Lj { sharing_distance: 2 },
        AnsatzKind::Rbm { n_hidden: 3 },
    ]
    .into_iter()
    .enumerate()
    {
        let state = random_ansatz(kind, 3, seed.wrapping_add(case as u64), 0.3);
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xabcd);
        let mut chain = Chain::random(&state, &mut rng).unwrap();
        let sampler = SamplerConfig {
            n_samples: 300,
            ..SamplerConfig::default()
        };
        thermalize(&state, &mut chain, 30, &mut rng);
        let samples = draw_samples(&state, &sampler, &mut chain, &mut rng);
        for est in [
            estimate_step(&samples, &state, &spec, SseMode::Nonlinear).unwrap(),
            estimate_step_exact(&state, &spec, SseMode::Nonlinear).unwrap(),
        ] {
            let (residual, floor) = hermiticity_and_floor(&est);
            worst_residual = worst_residual.max(residual);
            worst_floor = worst_floor.min(floor);
        }
    }
    (worst_residual, worst_floor)
}

/// Rebuilds the force as an explicitly centered covariance over the Born
/// distribution and measures (a) the distance to the engine's force and
/// (b) the change under a constant shift of every local energy. Both
/// vanish when the force is assembled from centered quantities.
pub fn force_shift_measures(seed: u64) -> (f64, f64) {
    let spec = ModelSpec::new(3, 1.0, 1.0, 0.2, 0.5).unwrap();
    let mut worst_route: f64 = 0.0;
    let mut worst_shift: f64 = 0.0;
    for (case, kind) in [
        AnsatzKind::Lj { sharing_distance: 2 },
        AnsatzKind::Rbm { n_hidden: 2 },
    ]
    .into_iter()
    .enumerate()
    {
        let state = random_ansatz(kind, 3, seed.wrapping_add(case as u64), 0.3);
        let est = estimate_step_exact(&state, &spec, SseMode::Nonlinear).unwrap();
        let m = state.parameter_count();
        let dim = 1usize << 3;

        let mut weights = Vec::with_capacity(dim);
        let mut derivs = Vec::with_capacity(dim);
        let mut energies = Vec::with_capacity(dim);
        for idx in 0..dim {
            let x = SpinConfiguration::from_index(idx, 3);
            weights.push((2.0 * state.log_amplitude(&x).unwrap().re).exp());
            derivs.push(state.log_derivatives(&x).unwrap());
            energies.push(
                local_effective_energy(
                    &spec,
                    &state,
                    &x,
                    Some(&est.channel_expectations),
                    SseMode::Nonlinear,
                )
                .unwrap(),
            );
        }
        let z: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= z;
        }

        let force = |shift: Complex64| -> DVector<Complex64> {
            let shifted: Vec<Complex64> = energies.iter().map(|e| e + shift).collect();
            let mut o_mean = DVector::from_element(m, Complex64::default());
            let mut e_mean = Complex64::default();
            for idx in 0..dim {
                o_mean += &derivs[idx] * Complex::from(weights[idx]);
                e_mean += weights[idx] * shifted[idx];
            }
            let mut f = DVector::from_element(m, Complex64::default());
            for idx in 0..dim {
                let ec = shifted[idx] - e_mean;
                for k in 0..m {
                    f[k] += weights[idx] * (derivs[idx][k] - o_mean[k]).conj() * ec;
                }
            }
            f
        };

        let baseline = force(Complex64::default());
        let scale = baseline.norm().max(1.0);
        worst_route = worst_route.max((&baseline - &est.force).norm() / scale);
        let shifted = force(Complex64::new(7.3, -2.1));
        worst_shift = worst_shift.max((&shifted - &baseline).norm() / scale);
    }
    (worst_route, worst_shift)
}

/// Worst deviation of the state norm from one along dense nonlinear
/// trajectories of the four-site benchmark model: midpoint scheme,
/// dt = 1e-3, a thousand steps.
pub fn nonlinear_norm_worst_drift() -> f64 {
    let spec = ModelSpec::new(4, 1.0, 1.0, 0.0, 0.5).unwrap();
    let ops = DenseOps::new(&spec).unwrap();
    let psi0 = ops.coherent_plus_x();
    let mut worst: f64 = 0.0;
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
            worst = worst.max((rec.norm_sq.sqrt() - 1.0).abs());
        }
    }
    worst
}

/// Z-scores of the first, second, and fourth sample moments of the
/// Wiener increments against the Gaussian values (0, dt, 3 dt^2).
pub fn wiener_moment_zscores(seed: u64) -> [f64; 3] {
    let dt = 1e-3;
    let n = 200_000usize;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(n);
    while draws.len() < n {
        draws.extend(draw_wiener(&mut rng, 4, dt));
    }
    let nf = n as f64;
    let mean: f64 = draws.iter().sum::<f64>() / nf;
    let m2: f64 = draws.iter().map(|w| w * w).sum::<f64>() / nf;
    let m4: f64 = draws.iter().map(|w| w.powi(4)).sum::<f64>() / nf;
    [
        mean / (dt / nf).sqrt(),
        // Var(w^2) = 2 dt^2 and Var(w^4) = 96 dt^4 for w ~ N(0, dt).
        (m2 - dt) / (dt * (2.0 / nf).sqrt()),
        (m4 - 3.0 * dt * dt) / (dt * dt * (96.0 / nf).sqrt()),
    ]
}

/// Renders a small fixed-seed ensemble to CSV bytes inside a dedicated
/// thread pool, so runs with different worker counts can be compared
/// byte for byte.
pub fn ensemble_csv_bytes(workers: usize) -> Vec<u8> {
    let config: RunConfig = serde_json::from_str(
        r#"{
            "model": {"n_sites": 2, "alpha": 1.0, "j": 1.0, "h": 0.3, "kappa": 0.4},
            "ansatz": {"kind": "lj", "sharing_distance": 1},
            "sampler": {
                "n_samples": 150,
                "sweeps_between_samples": 1,
                "thermalization_sweeps": 40,
                "rethermalization_sweeps": 5
            },
            "dt": 1e-3,
            "total_time": 0.02,
            "record_stride": 5,
            "n_trajectories": 3,
            "master_seed": 99
        }"#,
    )
    .unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .unwrap();
    let result = pool.install(|| simulate_ensemble(&config)).unwrap();
    assert!(result.failures.is_empty());
    otvmc::output::records_to_csv(&result.records).into_bytes()
}

/// Root-mean-square strong error of the production stepper on
/// dX = X o dW (Stratonovich), whose exact solution is X0 exp(W_t),
/// at step dt and dt/4 over the unit interval.
pub fn toy_sde_errors(scheme: SolverScheme, seed: u64) -> (f64, f64) {
    let n_paths = 400;
    let coarse_steps = 100;
    let refine = 4;
    let dt = 1.0 / coarse_steps as f64;
    let mut sq_coarse = 0.0;
    let mut sq_fine = 0.0;
    for path in 0..n_paths {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(path);
        let mut x_coarse = 1.0f64;
        let mut x_fine = 1.0f64;
        let mut w_total = 0.0;
        for _ in 0..coarse_steps {
            let fine = draw_wiener(&mut rng, refine, dt / refine as f64);
            for &dw in &fine {
                x_fine =
                    predictor_corrector_step(scheme, &x_fine, |_| 0.0, |x| x * dw);
            }
            let dw: f64 = fine.iter().sum();
            x_coarse = predictor_corrector_step(scheme, &x_coarse, |_| 0.0, |x| x * dw);
            w_total += dw;
        }
        let exact = w_total.exp();
        sq_coarse += (x_coarse - exact).powi(2);
        sq_fine += (x_fine - exact).powi(2);
    }
    (
        (sq_coarse / n_paths as f64).sqrt(),
        (sq_fine / n_paths as f64).sqrt(),
    )
}
