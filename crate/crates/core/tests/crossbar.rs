use memsim_core::crossbar::{CrossbarArray, ProgrammingMode, TiledMatrix};
use memsim_core::devices::DeviceParams;
use memsim_core::linalg::Matrix;
use memsim_core::rng::seeded;
use proptest::prelude::*;
use rand::Rng;

const TOL: f64 = 0.005;
const ITER: ProgrammingMode = ProgrammingMode::Iterative { tol: TOL, max_iter: 200 };

fn naive(a: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..a.rows()).map(|r| (0..a.cols()).map(|c| a.as_slice()[r * a.cols() + c] * x[c]).sum()).collect()
}

fn naive_t(a: &Matrix, y: &[f64]) -> Vec<f64> {
    (0..a.cols()).map(|c| (0..a.rows()).map(|r| a.as_slice()[r * a.cols() + c] * y[r]).sum()).collect()
}

fn unit_vec(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

#[test]
fn programmed_weights_within_tolerance() {
    let mut rng = seeded(1);
    let a = Matrix::uniform(40, 30, 1.0, &mut rng);
    let mut xb = CrossbarArray::new(40, 30, DeviceParams::ideal(), 1.0, 0.2).unwrap();
    let stats = xb.program_matrix(&a, ITER, &mut rng).unwrap();
    assert_eq!(stats.unconverged, 0);
    let d = xb.decoded_weights();
    // each device of the pair lands within tol of its target
    assert!(max_diff(d.as_slice(), a.as_slice()) <= 2.0 * TOL + 1e-12);
}

#[test]
fn drifted_mvm_matches_conductance_oracle() {
    let p = DeviceParams { drift_nu: 0.07, drift_nu_spread: 0.0, ..DeviceParams::ideal() };
    let mut rng = seeded(2);
    let a = Matrix::uniform(12, 9, 1.0, &mut rng);
    let mut xb = CrossbarArray::new(12, 9, p, 1.0, 0.2).unwrap();
    xb.program_matrix(&a, ITER, &mut rng).unwrap();
    let dt = 250.0;
    xb.advance_time(dt).unwrap();
    let f = ((dt + p.drift_t0) / p.drift_t0).powf(-p.drift_nu);
    let scale = 1.0 / (p.g_max - p.g_min);
    let aged = Matrix::from_fn(12, 9, |r, c| {
        let (gp, gm) = xb.pair(r, c);
        let g = |g0: f64| (g0 * f).clamp(p.g_min, p.g_max);
        (g(gp.g_programmed) - g(gm.g_programmed)) * scale
    });
    let x = unit_vec(9, &mut rng);
    let got = xb.mvm(&x, &mut rng).unwrap();
    assert!(max_diff(&got, &naive(&aged, &x)) < 1e-12);
    assert!(f < 1.0);
}

#[test]
fn read_noise_averages_out() {
    let p = DeviceParams { read_noise_rel: 0.05, ..DeviceParams::ideal() };
    let mut rng = seeded(3);
    let a = Matrix::uniform(8, 8, 1.0, &mut rng);
    let mut xb = CrossbarArray::new(8, 8, p, 1.0, 0.2).unwrap();
    xb.program_matrix(&a, ITER, &mut rng).unwrap();
    let x = unit_vec(8, &mut rng);
    let exact = naive(&xb.decoded_weights(), &x);
    let n = 4000;
    let mut mean = vec![0.0; 8];
    let mut single = 0.0f64;
    for k in 0..n {
        let y = xb.mvm(&x, &mut rng).unwrap();
        if k == 0 {
            single = max_diff(&y, &exact);
        }
        for (m, v) in mean.iter_mut().zip(y) {
            *m += v / n as f64;
        }
    }
    assert!(single > 1e-4);
    assert!(max_diff(&mean, &exact) < single / 10.0);
}

#[test]
fn out_of_range_inputs_are_rejected() {
    let xb = CrossbarArray::new(3, 3, DeviceParams::ideal(), 1.0, 0.2).unwrap();
    assert!(xb.mvm(&[0.0, 1.5, 0.0], &mut seeded(0)).is_err());
    assert!(xb.mvm(&[0.0, 1.0], &mut seeded(0)).is_err());
    let mut xb = xb;
    let big = Matrix::from_fn(3, 3, |_, _| 2.0);
    assert!(xb.program_matrix(&big, ITER, &mut seeded(0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tiled_mvm_matches_float(rows in 1usize..70, cols in 1usize..70, tile in 1usize..40, seed in 0u64..1000) {
        let mut rng = seeded(seed);
        let a = Matrix::uniform(rows, cols, 0.8, &mut rng);
        let mut t = TiledMatrix::new(rows, cols, tile, DeviceParams::ideal(), 0.8, 0.2).unwrap();
        t.program_matrix(&a, ITER, &mut rng).unwrap();
        let x = unit_vec(cols, &mut rng);
        let y = unit_vec(rows, &mut rng);
        let bound = |n: usize| 2.0 * TOL * 0.8 * n as f64 + 1e-12;
        prop_assert!(max_diff(&t.mvm(&x, &mut rng).unwrap(), &naive(&a, &x)) <= bound(cols));
        prop_assert!(max_diff(&t.mvm_transpose(&y, &mut rng).unwrap(), &naive_t(&a, &y)) <= bound(rows));
        // tiling is exact with respect to the programmed weights
        let d = t.decoded_weights();
        prop_assert!(max_diff(&t.mvm(&x, &mut rng).unwrap(), &naive(&d, &x)) < 1e-9);
    }

    #[test]
    fn scaled_mvm_is_homogeneous(n in 1usize..20, s in 0.01f64..50.0, seed in 0u64..1000) {
        let mut rng = seeded(seed);
        let a = Matrix::uniform(n, n, 1.0, &mut rng);
        let mut t = TiledMatrix::new(n, n, 8, DeviceParams::ideal(), 1.0, 0.2).unwrap();
        t.program_matrix(&a, ITER, &mut rng).unwrap();
        let x = unit_vec(n, &mut rng);
        let xs: Vec<f64> = x.iter().map(|v| v * s).collect();
        let y1 = t.mvm_scaled(&x, &mut rng).unwrap();
        let y2 = t.mvm_scaled(&xs, &mut rng).unwrap();
        for (p, q) in y1.iter().zip(&y2) {
            prop_assert!((p * s - q).abs() <= 1e-9 * (1.0 + q.abs()));
        }
    }
}
