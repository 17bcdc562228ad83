use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use risklab::baselines::kernels::cross_gram;
use risklab::baselines::{kernel_eval, krr_fit, krr_predict, KernelSpec};
use risklab::data::sample_sphere;
use risklab::model::relu;
use risklab::pair_integral_i;
use risklab::rng::stream_rng_raw;

const KERNELS: [KernelSpec; 3] = [
    KernelSpec::ArcCosine1,
    KernelSpec::Rbf { gamma: 1.0 },
    KernelSpec::Ntk2Relu,
];

#[test]
fn arc_cosine_is_scaled_pair_integral() {
    let mut rng = stream_rng_raw(50, 0);
    for d in [3usize, 7, 10] {
        let x = sample_sphere(50, d, &mut rng);
        for i in 0..49 {
            let k = kernel_eval(&KernelSpec::ArcCosine1, x.row(i), x.row(i + 1)).unwrap();
            let integral = pair_integral_i(x.row(i), x.row(i + 1));
            assert!((k - d as f64 * integral).abs() <= 1e-12);
        }
    }
}

#[test]
fn ntk_matches_random_features() {
    let mut rng = stream_rng_raw(51, 0);
    let d = 5;
    let features = 100_000;
    let u = Array2::from_shape_fn((features, d), |_| rng.sample::<f64, _>(StandardNormal));
    let pts = sample_sphere(6, d, &mut rng);
    for i in 0..5 {
        let (x, y) = (pts.row(i), pts.row(i + 1));
        let c = x.dot(&y);
        let (ux, uy) = (u.dot(&x), u.dot(&y));
        let terms: Vec<f64> = ux
            .iter()
            .zip(uy.iter())
            .map(|(&a, &b)| relu(a) * relu(b) + c * ((a > 0.0 && b > 0.0) as u8 as f64))
            .collect();
        let n = terms.len() as f64;
        let mean = terms.iter().sum::<f64>() / n;
        let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let k = kernel_eval(&KernelSpec::Ntk2Relu, x, y).unwrap();
        assert!(
            (k - mean).abs() <= 3.0 * se,
            "pair {i}: {k} vs {mean} +- {se}"
        );
    }
}

#[test]
fn kernels_are_symmetric() {
    let mut rng = stream_rng_raw(52, 0);
    let x = sample_sphere(20, 4, &mut rng);
    for spec in KERNELS {
        for i in 0..20 {
            for j in 0..20 {
                let a = kernel_eval(&spec, x.row(i), x.row(j)).unwrap();
                let b = kernel_eval(&spec, x.row(j), x.row(i)).unwrap();
                assert_eq!(a, b);
            }
        }
    }
}

#[test]
fn krr_superposition() {
    let mut rng = stream_rng_raw(53, 0);
    let x = sample_sphere(300, 6, &mut rng);
    let y1 = Array1::from_shape_fn(300, |_| rng.sample::<f64, _>(StandardNormal));
    let y2 = Array1::from_shape_fn(300, |_| rng.sample::<f64, _>(StandardNormal));
    let probe = sample_sphere(100, 6, &mut rng);
    for spec in KERNELS {
        let f1 = krr_fit(x.view(), y1.view(), &spec, 1e-3).unwrap();
        let f2 = krr_fit(x.view(), y2.view(), &spec, 1e-3).unwrap();
        let f12 = krr_fit(x.view(), (&y1 + &y2).view(), &spec, 1e-3).unwrap();
        let lhs = f12.predict_batch(probe.view());
        let rhs = &f1.predict_batch(probe.view()) + &f2.predict_batch(probe.view());
        let worst = (&lhs - &rhs).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst <= 1e-8, "{spec}: {worst}");
    }
}

#[test]
fn krr_solve_residual() {
    let mut rng = stream_rng_raw(54, 0);
    let x = sample_sphere(400, 10, &mut rng);
    let y = Array1::from_shape_fn(400, |_| rng.sample::<f64, _>(StandardNormal));
    for spec in KERNELS {
        for lambda in [1e-6, 1e-2, 1.0] {
            let model = krr_fit(x.view(), y.view(), &spec, lambda).unwrap();
            assert!(
                model.relative_residual() <= 1e-8,
                "{spec} {lambda}: {}",
                model.relative_residual()
            );
        }
    }
}

#[test]
fn krr_interpolates_with_tiny_ridge() {
    let mut rng = stream_rng_raw(55, 0);
    let x = sample_sphere(60, 3, &mut rng);
    let y = Array1::from_shape_fn(60, |_| rng.random_range(-1.0..1.0));
    let model = krr_fit(x.view(), y.view(), &KernelSpec::Rbf { gamma: 10.0 }, 1e-10).unwrap();
    for (row, t) in x.rows().into_iter().zip(y.iter()) {
        let p = krr_predict(&model, row).unwrap();
        assert!((p - t).abs() <= 1e-4, "{p} vs {t}");
    }
}

#[test]
fn krr_shrinks_under_large_ridge() {
    let mut rng = stream_rng_raw(56, 0);
    let n = 80;
    let x = sample_sphere(n, 4, &mut rng);
    let y = Array1::from_shape_fn(n, |_| rng.random_range(-1.0f64..1.0));
    let y_inf = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let probe = sample_sphere(200, 4, &mut rng);
    for spec in KERNELS {
        let k_max = cross_gram(&spec, x.view(), x.view())
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let lambda = 1e8;
        let model = krr_fit(x.view(), y.view(), &spec, lambda).unwrap();
        let bound = y_inf * n as f64 * k_max / lambda;
        let pred = model.predict_batch(probe.view());
        assert!(pred.iter().all(|p| p.abs() <= bound), "{spec}");
        assert!(bound < 1e-5);
    }
}

#[test]
fn krr_rejects_non_unit_inputs() {
    let x = ndarray::array![[1.0, 0.0], [0.0, 0.5]];
    let y = ndarray::array![1.0, 2.0];
    let err = krr_fit(x.view(), y.view(), &KernelSpec::ArcCosine1, 0.1).unwrap_err();
    assert!(err.to_string().contains("non-unit input row 1"));
    let good = ndarray::array![[1.0, 0.0], [0.0, 1.0]];
    let model = krr_fit(good.view(), y.view(), &KernelSpec::ArcCosine1, 0.1).unwrap();
    assert!(krr_predict(&model, ndarray::array![2.0, 0.0].view()).is_err());
}
