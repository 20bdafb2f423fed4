use nalgebra::{DVector, Matrix2, Matrix3, Vector2, Vector3};
use pointsim::biomech::model::fixtures::planar_two_link;
use pointsim::biomech::muscle::MuscleDiscretization;
use pointsim::biomech::{forward_dynamics, joint_limit_torque, mass_matrix, ChainModel};
use pointsim::control::{commanded_torque_derivative, inject_noise, NoiseConfig};
use pointsim::harness::IsoTask;
use pointsim::identify::{extract_torque_ranges, rmse_joint, CfatResult};
use pointsim::interaction::{rotation_between_normals, TechniqueSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn unit() -> impl Strategy<Value = Vector3<f64>> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("away from zero", |(x, y, z)| x * x + y * y + z * z > 1e-2)
        .prop_map(|(x, y, z)| Vector3::new(x, y, z).normalize())
}

fn point() -> impl Strategy<Value = Vector3<f64>> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn in_range(model: &ChainModel) -> impl Strategy<Value = DVector<f64>> {
    let ranges: Vec<_> = model.joints.iter().map(|j| j.range[0]..j.range[1]).collect();
    ranges.prop_map(DVector::from_vec)
}

fn series(len: usize, dim: usize) -> impl Strategy<Value = Vec<DVector<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0..2.0f64, dim).prop_map(DVector::from_vec), len)
}

// Planar two-link Lagrangian with the fixture's parameters, written out by hand.
fn two_link(q: &Vector2<f64>, qd: &Vector2<f64>, tau: &Vector2<f64>) -> Vector2<f64> {
    let (m1, m2, l1, lc1, lc2, i1, i2, g) = (2.0, 1.7, 0.33, 0.15, 0.19, 0.021, 0.017, 9.81);
    let c2 = q[1].cos();
    let h = m2 * l1 * lc2 * q[1].sin();
    let m = Matrix2::new(
        i1 + i2 + m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * c2),
        i2 + m2 * (lc2 * lc2 + l1 * lc2 * c2),
        i2 + m2 * (lc2 * lc2 + l1 * lc2 * c2),
        i2 + m2 * lc2 * lc2,
    );
    let c = Vector2::new(-h * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]), h * qd[0] * qd[0]);
    let s12 = (q[0] + q[1]).sin();
    let gr = Vector2::new((m1 * lc1 + m2 * l1) * g * q[0].sin() + m2 * lc2 * g * s12, m2 * lc2 * g * s12);
    m.try_inverse().unwrap() * (tau - c - gr)
}

fn rodrigues(a: &Vector3<f64>, b: &Vector3<f64>) -> Matrix3<f64> {
    let axis = a.cross(b);
    let s = axis.norm();
    if s < 1e-15 {
        return Matrix3::identity();
    }
    let k = axis / s;
    let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    let c = a.dot(b);
    Matrix3::identity() + kx * s + kx * kx * (1.0 - c)
}

fn results_from(samples: &[[f64; 2]], chunk: usize) -> Vec<CfatResult> {
    samples
        .chunks(chunk)
        .map(|c| CfatResult {
            tau_seq: c.iter().map(|t| DVector::from_row_slice(t)).collect(),
            sigma0: DVector::zeros(2),
            sigma_dot0: DVector::zeros(2),
            losses: vec![0.0; c.len()],
            flagged: vec![],
            q_sim: vec![],
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn arm_mass_matrix_is_spd(q in in_range(&ChainModel::paper_arm())) {
        let m = mass_matrix(&ChainModel::paper_arm(), &q);
        prop_assert!((&m - m.transpose()).amax() < 1e-12);
        prop_assert!(m.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn two_link_forward_dynamics_matches_lagrangian(
        q in (-3.1..3.1f64, -3.1..3.1f64),
        qd in (-5.0..5.0f64, -5.0..5.0f64),
        tau in (-20.0..20.0f64, -10.0..10.0f64),
    ) {
        let (q, qd, tau) = (Vector2::new(q.0, q.1), Vector2::new(qd.0, qd.1), Vector2::new(tau.0, tau.1));
        let m = planar_two_link();
        let v = |x: &Vector2<f64>| DVector::from_column_slice(x.as_slice());
        let ours = forward_dynamics(&m, &v(&q), &v(&qd), &v(&tau)).unwrap();
        let oracle = two_link(&q, &qd, &tau);
        prop_assert!((Vector2::new(ours[0], ours[1]) - oracle).norm() <= 1e-6 * oracle.norm().max(1.0));
    }

    #[test]
    fn activation_stays_bounded_for_any_bounded_control(u in prop::collection::vec(-1.0..1.0f64, 1..400)) {
        let d = MuscleDiscretization::new(ChainModel::paper_arm().muscle, 0.002);
        let (mut s, mut sd) = (0.0, 0.0);
        for &ui in &u {
            (s, sd) = d.step(s, sd, ui);
            prop_assert!(s.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn rotation_maps_normals_and_is_proper(a in unit(), b in unit()) {
        prop_assume!(a.dot(&b) > -0.99);
        let r = rotation_between_normals(&a, &b).unwrap();
        prop_assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        prop_assert!((r * a - b).amax() < 1e-12);
        prop_assert!((r - rodrigues(&a, &b)).amax() < 1e-12);
    }

    #[test]
    fn pad_cursor_lies_on_output_plane(oi in point(), ni in unit(), oo in point(), no in unit(), x in point()) {
        prop_assume!(ni.dot(&no) > -0.99);
        let t = TechniqueSpec::virtual_pad(oi, ni, oo, no).unwrap();
        prop_assert!((t.transfer(&x) - oo).dot(&no).abs() < 1e-9);
    }

    #[test]
    fn rmse_is_a_pseudometric(a in series(6, 3), b in series(6, 3), c in series(6, 3)) {
        let d = |x: &[DVector<f64>], y: &[DVector<f64>]| rmse_joint(x, y).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert!(d(&a, &b) >= 0.0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
    }

    #[test]
    fn rmse_matches_two_pass_sum(a in series(9, 4), b in series(9, 4)) {
        let sq: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - y).norm_squared()).collect();
        let oracle = (sq.iter().sum::<f64>() / sq.len() as f64).sqrt();
        prop_assert!((rmse_joint(&a, &b).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn torque_ranges_ignore_input_order(
        (samples, shuffled) in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 4..60)
            .prop_flat_map(|v| {
                let v: Vec<[f64; 2]> = v.into_iter().map(|(a, b)| [a, b]).collect();
                (Just(v.clone()), Just(v).prop_shuffle())
            }),
        chunk in 1usize..7,
    ) {
        let (a, _) = extract_torque_ranges(&results_from(&samples, chunk)).unwrap();
        let (b, _) = extract_torque_ranges(&results_from(&shuffled, 3)).unwrap();
        prop_assert_eq!(&a, &b);
        let (lo, hi) = a.bounds();
        for j in 0..2 {
            prop_assert!((lo[j].abs().max(hi[j].abs()) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn limit_torque_points_back_into_range(joint in 0usize..7, depth in 1e-6..1.0f64, upper in any::<bool>(), speed in -5.0..5.0f64) {
        let m = ChainModel::paper_arm();
        let mut q = DVector::from_iterator(7, m.joints.iter().map(|j| 0.5 * (j.range[0] + j.range[1])));
        let r = m.joints[joint].range;
        q[joint] = if upper { r[1] + depth } else { r[0] - depth };
        let mut qd = DVector::zeros(7);
        qd[joint] = speed;
        let t = joint_limit_torque(&q, &qd, &m);
        let inward = if upper { t[joint] < 0.0 } else { t[joint] > 0.0 };
        prop_assert!(inward);
        for i in (0..7).filter(|&i| i != joint) {
            prop_assert_eq!(t[i], 0.0);
        }
    }

    #[test]
    fn torque_derivative_matches_stencil(tau in series(7, 3), dt in 0.01..0.1f64) {
        let d = commanded_torque_derivative(&tau, dt).unwrap();
        let n = tau.len();
        for k in 0..n {
            let (i, j, w) = if k == 0 { (1, 0, dt) } else if k == n - 1 { (n - 1, n - 2, dt) } else { (k + 1, k - 1, 2.0 * dt) };
            for c in 0..3 {
                prop_assert!((d[k][c] - (tau[i][c] - tau[j][c]) / w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn targets_lie_on_the_circle(c in point(), n in unit(), diameter in 0.05..1.0f64, half in 1usize..12) {
        let task = IsoTask { center: c, normal: n, circle_diameter: diameter, target_diameter: 0.02, target_count: 2 * half + 1 };
        let p = task.positions().unwrap();
        for x in &p {
            prop_assert!(((x - c).norm() - 0.5 * diameter).abs() < 1e-12);
            prop_assert!((x - c).dot(&n).abs() < 1e-12);
        }
        let mut order = task.order().unwrap();
        order.sort();
        prop_assert_eq!(order, (0..2 * half + 1).collect::<Vec<_>>());
    }

    #[test]
    fn noisy_control_respects_bounds(u in prop::collection::vec(-1.0..1.0f64, 7), seed in any::<u64>()) {
        let m = ChainModel::paper_arm();
        let (lo, hi) = m.control_bounds();
        let u = DVector::from_vec(u).zip_zip_map(&lo, &hi, |x, a, b| x.clamp(a, b));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = inject_noise(&u, &NoiseConfig::default(), &lo, &hi, &mut rng);
        for i in 0..7 {
            prop_assert!(lo[i] <= v[i] && v[i] <= hi[i]);
        }
    }
}
