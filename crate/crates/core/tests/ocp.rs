use nalgebra::{DVector, Vector3};
use pointsim::biomech::model::fixtures::planar_two_link;
use pointsim::biomech::{forward_kinematics, step_user_in_place, ChainModel};
use pointsim::control::*;
use pointsim::harness::{rest_state, IsoTask};
use pointsim::interaction::TechniqueSpec;

fn setup() -> (ChainModel, TechniqueSpec, Vec<Vector3<f64>>) {
    let task = IsoTask {
        center: Vector3::new(0.3, -0.4, 0.0),
        normal: Vector3::new(0.0, 0.0, -1.0),
        circle_diameter: 0.2,
        target_diameter: 0.05,
        target_count: 13,
    };
    (planar_two_link(), TechniqueSpec::preset("virtual-cursor-identity").unwrap(), task.positions().unwrap())
}

fn controls(n: usize, values: &[[f64; 2]]) -> Vec<DVector<f64>> {
    values.iter().take(n).map(|v| DVector::from_row_slice(v)).collect()
}

#[test]
fn rollout_equals_manual_resimulation() {
    let (m, tech, pos) = setup();
    let cfg = MpcConfig::for_model(&m);
    let x0 = rest_state(&m, &tech, &pos[0]).unwrap();
    let spec = CostSpec::new(CostFamily::Jac, 0.016, 1.2e-4, pos[7]).unwrap();
    let u = controls(4, &[[0.3, -0.2], [0.8, 0.1], [-0.5, 0.6], [0.0, -1.0]]);
    let r = rollout(&x0, &u, &m, &tech, &spec, &cfg).unwrap();
    assert_eq!(r.states.len(), 5);

    let mut body = x0.body.clone();
    let mut total = 0.0;
    for uk in &u {
        let cursor = tech.transfer(&forward_kinematics(&m, &body.q));
        total += (cursor - spec.target).norm() + 0.016 * uk.norm_squared() + 1.2e-4 * body.qddot.norm_squared();
        for _ in 0..20 {
            step_user_in_place(&mut body, uk, &m).unwrap();
        }
    }
    assert!((r.total - total).abs() < 1e-12, "{} vs {total}", r.total);
    assert_eq!(r.states[4].body, body);
}

#[test]
fn zero_control_cost_ignores_r1() {
    let (m, tech, pos) = setup();
    let cfg = MpcConfig::for_model(&m);
    let x0 = rest_state(&m, &tech, &pos[3]).unwrap();
    let u = vec![DVector::zeros(2); 3];
    let a = rollout(&x0, &u, &m, &tech, &CostSpec::new(CostFamily::Jac, 0.0, 1e-4, pos[9]).unwrap(), &cfg).unwrap();
    let b = rollout(&x0, &u, &m, &tech, &CostSpec::new(CostFamily::Jac, 5.0, 1e-4, pos[9]).unwrap(), &cfg).unwrap();
    assert_eq!(a.total, b.total);
}

#[test]
fn solver_never_ascends() {
    let (m, tech, pos) = setup();
    let mut cfg = MpcConfig::for_model(&m);
    cfg.horizon = 3;
    for (a, b) in [(0, 7), (7, 1), (4, 11), (12, 6)] {
        let x0 = rest_state(&m, &tech, &pos[a]).unwrap();
        let spec = CostSpec::jac(pos[b]);
        for guess in [[0.0, 0.0], [0.9, -0.9], [-1.0, 1.0]] {
            let g = vec![DVector::from_row_slice(&guess); 3];
            let sol = solve_ocp(&x0, &g, &m, &tech, &spec, &cfg).unwrap();
            let at_guess = rollout(&x0, &g, &m, &tech, &spec, &cfg).unwrap().total;
            assert!(sol.cost <= at_guess + 1e-12);
            for u in &sol.u {
                assert!((0..2).all(|j| cfg.u_lo[j] <= u[j] && u[j] <= cfg.u_hi[j]));
            }
        }
    }
}

#[test]
fn solution_beats_exhaustive_three_level_grid() {
    let (m, tech, pos) = setup();
    let mut cfg = MpcConfig::for_model(&m);
    cfg.horizon = 3;
    let x0 = rest_state(&m, &tech, &pos[0]).unwrap();
    let spec = CostSpec::jac(pos[7]);
    let levels = |j: usize| [cfg.u_lo[j], 0.0, cfg.u_hi[j]];
    let mut best = f64::INFINITY;
    let mut best_u = vec![];
    for code in 0..3usize.pow(6) {
        let mut c = code;
        let u: Vec<DVector<f64>> = (0..3)
            .map(|_| {
                DVector::from_fn(2, |j, _| {
                    let l = levels(j)[c % 3];
                    c /= 3;
                    l
                })
            })
            .collect();
        let j = rollout(&x0, &u, &m, &tech, &spec, &cfg).unwrap().total;
        if j < best {
            (best, best_u) = (j, u);
        }
    }
    let sol = solve_ocp(&x0, &vec![DVector::zeros(2); 3], &m, &tech, &spec, &cfg).unwrap();
    let achieved = rollout(&x0, &sol.u, &m, &tech, &spec, &cfg).unwrap().total;
    assert!((achieved - sol.cost).abs() < 1e-12);
    assert!(achieved <= best + 1e-3, "solver {achieved} vs grid {best} at {best_u:?}");
}

#[test]
fn holding_still_is_optimal_without_gravity() {
    let (mut m, tech, _) = setup();
    m.gravity = Vector3::zeros();
    let mut cfg = MpcConfig::for_model(&m);
    cfg.horizon = 3;
    // Costs here are far below 1, where the relative ftol acts as an absolute 1e-6 threshold.
    cfg.solver.ftol = 1e-15;
    cfg.solver.gtol = 1e-12;
    let mut x0 = rest_state(&m, &tech, &Vector3::new(0.3, -0.4, 0.0)).unwrap();
    x0.body.sigma = DVector::zeros(2);
    x0.body.sigma_dot = DVector::zeros(2);
    let spec = CostSpec::jac(x0.cursor());
    let sol = solve_ocp(&x0, &vec![DVector::from_element(2, 0.05); 3], &m, &tech, &spec, &cfg).unwrap();
    let worst = sol.u.iter().map(|u| u.amax()).fold(0.0, f64::max);
    assert!(worst < 1e-3, "‖u*‖∞ = {worst:e}");
}

#[test]
fn noise_free_closed_loop_is_bit_reproducible() {
    let (m, tech, pos) = setup();
    let mut cfg = MpcConfig::for_model(&m);
    cfg.mode = TrialMode::Replication { duration: 0.12 };
    let x0 = rest_state(&m, &tech, &pos[2]).unwrap();
    let spec = CostSpec::jac(pos[9]);
    for noise in [NoiseConfig::off(), NoiseConfig { seed: 5, ..Default::default() }] {
        cfg.noise = noise;
        let a = run_mpc(&x0, &m, &spec, &tech, &cfg).unwrap();
        let b = run_mpc(&x0, &m, &spec, &tech, &cfg).unwrap();
        assert_eq!(a.rows, b.rows);
    }
}
