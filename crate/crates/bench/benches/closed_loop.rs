use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DVector;
use pointsim::biomech::{step_user_in_place, ChainModel};
use pointsim::control::{rollout, solve_ocp, CostSpec, MpcConfig, SystemState};
use pointsim::harness::{rest_state, IsoTask};
use pointsim::interaction::TechniqueSpec;
use pointsim::optim::lbfgsb::forward_difference;

struct Fixture {
    model: ChainModel,
    technique: TechniqueSpec,
    x0: SystemState,
    spec: CostSpec,
    config: MpcConfig,
}

fn fixture() -> Fixture {
    let model = ChainModel::paper_arm();
    let technique = TechniqueSpec::preset("virtual-cursor-identity").unwrap();
    let pos = IsoTask::default().positions().unwrap();
    let x0 = rest_state(&model, &technique, &pos[0]).unwrap();
    let config = MpcConfig::for_model(&model);
    Fixture { spec: CostSpec::jac(pos[7]), model, technique, x0, config }
}

fn physics(c: &mut Criterion) {
    let f = fixture();
    let u = DVector::from_element(7, 0.2);
    c.bench_function("step_user", |b| {
        let mut s = f.x0.body.clone();
        b.iter(|| step_user_in_place(black_box(&mut s), &u, &f.model).unwrap())
    });
}

fn horizon(c: &mut Criterion) {
    let f = fixture();
    let u = vec![DVector::from_element(7, 0.2); f.config.horizon];
    c.bench_function("rollout_n8", |b| {
        b.iter(|| rollout(&f.x0, black_box(&u), &f.model, &f.technique, &f.spec, &f.config).unwrap().total)
    });
    let z: Vec<f64> = u.iter().flatten().copied().collect();
    let hi: Vec<f64> = (0..f.config.horizon).flat_map(|_| f.config.u_hi.iter().copied()).collect();
    let cost = |z: &[f64]| {
        let u: Vec<DVector<f64>> = z.chunks(7).map(DVector::from_column_slice).collect();
        rollout(&f.x0, &u, &f.model, &f.technique, &f.spec, &f.config).unwrap().total
    };
    let fz = cost(&z);
    c.bench_function("fd_gradient_n8_plain", |b| b.iter(|| forward_difference(&cost, black_box(&z), fz, &hi, f.config.solver.eps)));
}

fn control_step(c: &mut Criterion) {
    let f = fixture();
    let guess = vec![DVector::zeros(7); f.config.horizon];
    let mut g = c.benchmark_group("mpc");
    g.sample_size(10);
    g.bench_function("solve_ocp_from_rest", |b| {
        b.iter(|| solve_ocp(&f.x0, black_box(&guess), &f.model, &f.technique, &f.spec, &f.config).unwrap().cost)
    });
    g.finish();
}

criterion_group!(benches, physics, horizon, control_step);
criterion_main!(benches);
