use nalgebra::DVector;
use pointsim::biomech::model::fixtures::planar_two_link;
use pointsim::biomech::{gravity_torque, step_torque_in_place, BodyState, ChainModel};
use pointsim::control::{run_mpc, CostFamily, CostSpec, MpcConfig, NoiseConfig, TrialMode};
use pointsim::harness::{nominal_posture, rest_state, IsoTask};
use pointsim::identify::*;
use pointsim::interaction::TechniqueSpec;
use pointsim::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Reference sampled from the model itself under the given torques.
fn simulated_reference(model: &ChainModel, start: BodyState, torques: &[DVector<f64>]) -> ReferenceTrajectory {
    let mut s = start;
    let mut r = ReferenceTrajectory {
        times: vec![0.0],
        q: vec![s.q.clone()],
        qdot: vec![s.qdot.clone()],
        qddot: vec![s.qddot.clone()],
        cursor: None,
        tau: Some(torques.to_vec()),
        meta: TrialMeta::default(),
    };
    for (k, tau) in torques.iter().enumerate() {
        step_torque_in_place(&mut s, tau.as_slice(), model).unwrap();
        r.times.push((k + 1) as f64 * model.dt);
        r.q.push(s.q.clone());
        r.qdot.push(s.qdot.clone());
        r.qddot.push(s.qddot.clone());
    }
    r
}

fn result_with(samples: &[f64]) -> CfatResult {
    CfatResult {
        tau_seq: samples.iter().map(|&t| DVector::from_element(1, t)).collect(),
        sigma0: DVector::zeros(1),
        sigma_dot0: DVector::zeros(1),
        losses: vec![],
        flagged: vec![],
        q_sim: vec![],
    }
}

#[test]
fn constant_torque_is_recovered() {
    let m = ChainModel::paper_arm();
    let mut start = BodyState::at_rest(nominal_posture(&m));
    start.qdot = DVector::from_vec(vec![0.2, -0.1, 0.3, 0.4, -0.2, 0.1, 0.0]);
    let tau = gravity_torque(&m, &start.q) + DVector::from_vec(vec![1.5, -2.0, 0.8, 1.0, -0.3, 0.2, 0.1]);
    let r = simulated_reference(&m, start, &vec![tau.clone(); 40]);
    let out = cfat_run(&m, &r, &CfatOptions::default()).unwrap();
    for (k, t) in out.tau_seq.iter().enumerate() {
        assert!((t - &tau).amax() < 1e-3, "step {k}: error {:.2e}", (t - &tau).amax());
    }
}

#[test]
fn stationary_posture_needs_gravity_compensation() {
    let m = ChainModel::paper_arm();
    let q = nominal_posture(&m);
    let z = DVector::zeros(7);
    let r = ReferenceTrajectory {
        times: (0..6).map(|k| k as f64 * m.dt).collect(),
        q: vec![q.clone(); 6],
        qdot: vec![z.clone(); 6],
        qddot: vec![z.clone(); 6],
        cursor: None,
        tau: None,
        meta: TrialMeta::default(),
    };
    let g = gravity_torque(&m, &q);
    // Start from a poor guess to exercise the optimizer rather than the warm start.
    let state = BodyState::at_rest(q.clone());
    let target = CfatTarget { q: &q, qdot: &z, qddot: &z };
    let step = cfat_step(&m, &state, &target, &DVector::zeros(7), &CfatOptions::default()).unwrap();
    assert!((&step.tau - &g).amax() < 1e-3, "{:?} vs {:?}", step.tau.as_slice(), g.as_slice());
    assert!(step.loss <= step.initial_loss);
    let out = cfat_run(&m, &r, &CfatOptions::default()).unwrap();
    for t in &out.tau_seq {
        assert!((t - &g).amax() < 1e-3);
    }
}

#[test]
fn cfat_step_never_increases_loss() {
    let m = planar_two_link();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = Normal::new(0.0, 1.0).unwrap();
    for _ in 0..20 {
        let mut state = BodyState::at_rest(DVector::from_fn(2, |_, _| n.sample(&mut rng)));
        state.qdot = DVector::from_fn(2, |_, _| n.sample(&mut rng));
        let q = &state.q + DVector::from_fn(2, |_, _| 0.01 * n.sample(&mut rng));
        let qd = &state.qdot + DVector::from_fn(2, |_, _| 0.1 * n.sample(&mut rng));
        let qdd = DVector::from_fn(2, |_, _| 5.0 * n.sample(&mut rng));
        let guess = DVector::from_fn(2, |_, _| 3.0 * n.sample(&mut rng));
        let step = cfat_step(&m, &state, &CfatTarget { q: &q, qdot: &qd, qddot: &qdd }, &guess, &CfatOptions::default()).unwrap();
        assert!(step.loss <= step.initial_loss);
    }
}

#[test]
fn empty_reference_is_rejected() {
    let r = ReferenceTrajectory {
        times: vec![],
        q: vec![],
        qdot: vec![],
        qddot: vec![],
        cursor: None,
        tau: None,
        meta: TrialMeta::default(),
    };
    assert!(cfat_run(&planar_two_link(), &r, &CfatOptions::default()).is_err());
}

#[test]
fn shoulder_rotation_range_normalizes() {
    let (r, warnings) = extract_torque_ranges(&[result_with(&[-3.35, -1.2, 0.0, 0.4, 0.70])]).unwrap();
    assert_eq!((r.tau_minus[0], r.tau_plus[0], r.g[0]), (-3.35, 0.70, 3.35));
    let (lo, hi) = r.bounds();
    assert_eq!(lo[0], -1.0);
    assert!((hi[0] - 0.209).abs() < 5e-4);
    assert!(warnings.is_empty());
}

#[test]
fn collapsed_positive_range_is_kept_and_flagged() {
    let (r, warnings) = extract_torque_ranges(&[result_with(&[2.5; 8])]).unwrap();
    assert_eq!((r.tau_minus[0], r.tau_plus[0], r.g[0]), (2.5, 2.5, 2.5));
    assert_eq!(r.bounds(), (DVector::from_element(1, 1.0), DVector::from_element(1, 1.0)));
    assert_eq!(warnings.len(), 1);
}

#[test]
fn ten_sigma_outlier_is_dropped() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = Normal::new(0.0, 1.0).unwrap();
    let mut samples: Vec<f64> = (0..500).map(|_| n.sample(&mut rng)).collect();
    let (clean_lo, clean_hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    samples.push(10.0);
    let (r, _) = extract_torque_ranges(&[result_with(&samples)]).unwrap();
    assert_eq!(r.removed, vec![1]);
    assert_eq!((r.tau_minus[0], r.tau_plus[0]), (clean_lo, clean_hi));
}

#[test]
fn no_results_is_an_error() {
    assert!(matches!(extract_torque_ranges(&[]), Err(Error::InvalidArgument(_))));
}

#[test]
fn rmse_rejects_length_mismatch() {
    let a = vec![DVector::zeros(2); 3];
    assert!(matches!(rmse_joint(&a, &a[..2]), Err(Error::LengthMismatch { .. })));
}

#[test]
fn fitting_loss_is_zero_at_generating_weights_and_additive() {
    let m = planar_two_link();
    let tech = TechniqueSpec::preset("virtual-cursor-identity").unwrap();
    let task = IsoTask {
        center: nalgebra::Vector3::new(0.3, -0.4, 0.0),
        normal: nalgebra::Vector3::new(0.0, 0.0, -1.0),
        circle_diameter: 0.2,
        target_diameter: 0.05,
        target_count: 13,
    };
    let pos = task.positions().unwrap();
    let mut cfg = MpcConfig::for_model(&m);
    cfg.noise = NoiseConfig::off();
    cfg.mode = TrialMode::Replication { duration: 0.16 };
    let (r1, r2) = (0.01, 1e-4);
    let trials: Vec<ReferenceTrajectory> = [(0, 7), (7, 1)]
        .iter()
        .map(|&(a, b)| {
            let x0 = rest_state(&m, &tech, &pos[a]).unwrap();
            let cost = CostSpec::new(CostFamily::Jac, r1, r2, pos[b]).unwrap();
            let mut r = ReferenceTrajectory::from_trial(&run_mpc(&x0, &m, &cost, &tech, &cfg).unwrap(), &m.max_torque);
            r.meta.target_index = Some(b);
            r
        })
        .collect();
    let both = fitting_loss(r1, r2, &trials, &m, CostFamily::Jac, &tech, &cfg);
    assert!(both.abs() < 1e-9, "self-consistency loss {both:e}");

    let (w1, w2) = (0.05, 1e-3);
    let full = fitting_loss(w1, w2, &trials, &m, CostFamily::Jac, &tech, &cfg);
    let first = trial_rmse(w1, w2, &trials[0], &m, CostFamily::Jac, &tech, &cfg).unwrap();
    let rest = fitting_loss(w1, w2, &trials[1..], &m, CostFamily::Jac, &tech, &cfg);
    assert!(full > 0.0);
    assert!((full - rest - first).abs() < 1e-12);
}
