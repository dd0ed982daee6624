use otvmc::config::RunConfig;
use otvmc::integrator::{EstimatorKind, StepContext, Trajectory};
use otvmc::oracle::dense::DenseOps;
use otvmc::runner::initial_state;

fn config() -> RunConfig {
    RunConfig::from_json(
        &serde_json::json!({
            "model": {"n_sites": 4, "alpha": 1.0, "j": 1.0, "h": 0.0, "kappa": 0.0},
            "ansatz": {"kind": "lj", "sharing_distance": 3},
            "regularization": {"suppression": "off"},
            "dt": 1e-3,
            "total_time": 1.0,
            "n_trajectories": 1,
            "master_seed": 45
        })
        .to_string(),
    )
    .unwrap()
}

fn drive(estimator: EstimatorKind, n_steps: usize) {
    let cfg = config();
    let ctx = StepContext {
        spec: &cfg.model,
        mode: cfg.mode,
        scheme: cfg.scheme,
        dt: cfg.dt,
        sampler: &cfg.sampler,
        reg: &cfg.regularization,
        estimator,
        track_gauge: false,
    };
    let mut traj = Trajectory::new(&ctx, initial_state(&cfg).unwrap(), cfg.master_seed, 0).unwrap();
    for step in 0..n_steps {
        let batch = traj.sample_current(&ctx).unwrap();
        traj.advance(&ctx, &batch).unwrap();
        if step < 3 || (step + 1) % 250 == 0 {
            let p = traj.state().parameters();
            let max_re = p.iter().map(|c| c.re.abs()).fold(0.0f64, f64::max);
            let max_im = p.iter().map(|c| c.im.abs()).fold(0.0f64, f64::max);
            println!(
                "step {:4}  t {:.3}  max|Re theta| {:.3e}  max|Im theta| {:.3e}",
                step + 1,
                traj.time(),
                max_re,
                max_im
            );
        }
    }
    let ops = DenseOps::new(&cfg.model).unwrap();
    let sampled = ops.state_from_ansatz(traj.state()).unwrap();
    let exact = ops.schrodinger_evolve(&ops.coherent_plus_x(), traj.time(), 1e-4);
    println!(
        "{estimator:?}: fidelity 1 - {:.3e} at t {:.3}",
        1.0 - DenseOps::fidelity(&sampled, &exact),
        traj.time()
    );
    println!("parameters: {:?}", traj.state().parameters().as_slice());
}

#[test]
#[ignore]
fn exact_estimator_drive() {
    drive(EstimatorKind::ExactEnumeration, 1000);
}

#[test]
#[ignore]
fn estimate_at_theta_zero() {
    use otvmc::engine::{estimate_step, estimate_step_exact};
    use otvmc::sampler::{draw_samples, thermalize, Chain};
    use rand::SeedableRng;

    let cfg = config();
    let state = initial_state(&cfg).unwrap();
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(45);
    let mut chain = Chain::random(&state, &mut rng).unwrap();
    thermalize(&state, &mut chain, 100, &mut rng);
    let samples = draw_samples(&state, &cfg.sampler, &mut chain, &mut rng);
    let distinct: std::collections::HashSet<Vec<i8>> = samples
        .iter()
        .map(|x| (0..4).map(|a| x.spin(a) as i8).collect())
        .collect();
    println!("samples {} distinct {}", samples.len(), distinct.len());

    let mc = estimate_step(&samples, &state, &cfg.model, cfg.mode).unwrap();
    let exact = estimate_step_exact(&state, &cfg.model, cfg.mode).unwrap();
    println!("mc    |F| {:.3e}  F[4] {:?}", mc.force.norm(), mc.force[4]);
    println!("exact |F| {:.3e}  F[4] {:?}", exact.force.norm(), exact.force[4]);
    println!("mc S diag head {:?}", (0..3).map(|k| mc.s_matrix()[(k, k)]).collect::<Vec<_>>());

    let mut shown: Vec<Vec<i8>> = distinct.into_iter().collect();
    shown.sort();
    for d in &shown {
        println!("visited {:?}", d);
    }
    use otvmc::model::local_effective_energy;
    for x in samples.iter().take(6) {
        let e = local_effective_energy(&cfg.model, &state, x, None, cfg.mode).unwrap();
        println!(
            "sample {:?}  E_loc {:?}",
            (0..4).map(|a| x.spin(a) as i8).collect::<Vec<_>>(),
            e
        );
    }
}

#[test]
#[ignore]
fn monte_carlo_drive() {
    drive(EstimatorKind::MonteCarlo, 1000);
}
