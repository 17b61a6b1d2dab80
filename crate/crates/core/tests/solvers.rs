use nfmlab_core::datasets::Label;
use nfmlab_core::sampling::{
    euler_solve, heun_solve, ClassChoice, FnField, Schedule, ScheduleKind, Solver, SolverConfig,
};

fn error_at(solver: Solver, steps: usize) -> f64 {
    let field = FnField::new(1, 1, |x: &[f64], _t, _c| x.to_vec());
    let cfg = SolverConfig::new(
        solver,
        Schedule::new(ScheduleKind::Linear, steps).unwrap(),
        0.0,
        ClassChoice::Fixed(Label::Class(0)),
    )
    .unwrap();
    let tr = match solver {
        Solver::Euler => euler_solve(&field, &cfg, 4).unwrap(),
        Solver::Heun => heun_solve(&field, &cfg, 4).unwrap(),
    };
    (tr.terminal()[0] - tr.initial()[0] * (-1.0f64).exp()).abs()
}

#[test]
fn heun_is_second_order() {
    for steps in [8, 16, 32, 64] {
        let ratio = error_at(Solver::Heun, steps) / error_at(Solver::Heun, 2 * steps);
        assert!(ratio >= 3.5, "steps {steps}: ratio {ratio}");
    }
}

#[test]
fn euler_is_first_order() {
    for steps in [16, 32, 64] {
        let ratio = error_at(Solver::Euler, steps) / error_at(Solver::Euler, 2 * steps);
        assert!((ratio - 2.0).abs() < 0.2, "steps {steps}: ratio {ratio}");
    }
}
