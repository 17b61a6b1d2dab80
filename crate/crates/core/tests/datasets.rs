use nfmlab_core::datasets::{class_log_density, true_log_density, DatasetSpec};

fn integrate(spec: &DatasetSpec, f: impl Fn(&[f64]) -> f64) -> f64 {
    let half = spec.extent() * 1.5;
    let cells = 600;
    let h = 2.0 * half / cells as f64;
    let mut total = 0.0;
    for i in 0..cells {
        for j in 0..cells {
            let p = [-half + (i as f64 + 0.5) * h, -half + (j as f64 + 0.5) * h];
            total += f(&p);
        }
    }
    total * h * h
}

#[test]
fn mixture_densities_integrate_to_one() {
    for spec in [
        DatasetSpec::default_experiment(),
        DatasetSpec::default_experiment().with_scale(4.0).unwrap(),
        DatasetSpec::aniso_gauss(2, 3, 2.0, 0.5, 0.1).unwrap(),
    ] {
        let mass = integrate(&spec, |p| true_log_density(&spec, p).unwrap().exp());
        assert!((mass - 1.0).abs() < 1e-3, "{spec:?}: {mass}");
        let class_mass = integrate(&spec, |p| class_log_density(&spec, 1, p).unwrap().exp());
        assert!((class_mass - 1.0).abs() < 1e-3, "{spec:?}: {class_mass}");
    }
}
