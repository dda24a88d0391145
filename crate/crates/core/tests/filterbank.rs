use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use ndarray::Array2;
use num_complex::Complex;
use palmcode::filterbank::{convolve, make_gabor, predicted_line_response, FilterParams, LineModel};
use palmcode::synth::straight_line_sample;
use palmcode::FilterBankF64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gabor_direct(x: f64, y: f64, theta: f64, u: f64, sigma: f64) -> Complex<f64> {
    let envelope = 1.0 / (2.0 * PI * sigma * sigma) * (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
    envelope * Complex::new(0.0, 2.0 * PI * u * (x * theta.cos() + y * theta.sin())).exp()
}

/// Index clamping by mirror reflection that repeats the edge sample.
fn mirror(i: isize, len: usize) -> usize {
    let len = len as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= len {
            i = 2 * len - i - 1;
        } else {
            return i as usize;
        }
    }
}

fn naive_correlation(image: &Array2<f64>, kernel: &Array2<f64>) -> Array2<f64> {
    let (h, w) = image.dim();
    let n = (kernel.nrows() / 2) as isize;
    Array2::from_shape_fn((h, w), |(y, x)| {
        let mut acc = 0.0;
        for a in -n..=n {
            for b in -n..=n {
                let pixel = image[(mirror(y as isize + a, h), mirror(x as isize + b, w))];
                acc += kernel[((a + n) as usize, (b + n) as usize)] * pixel;
            }
        }
        acc
    })
}

fn random_image(side: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((side, side), |_| rng.random_range(0.0..255.0))
}

#[test]
fn raw_kernel_matches_closed_form() {
    for k in 0..6 {
        let theta = k as f64 * PI / 6.0;
        let params = FilterParams::new(theta, 0.0916, 5.6179, 17).unwrap();
        let filter = make_gabor(params).unwrap();
        let kernel = filter.kernel();
        assert_eq!(kernel.dim(), (35, 35));
        for ((i, j), v) in kernel.indexed_iter() {
            let expected = gabor_direct(j as f64 - 17.0, i as f64 - 17.0, theta, 0.0916, 5.6179);
            assert_abs_diff_eq!(v.re, expected.re, epsilon = 1e-12);
            assert_abs_diff_eq!(v.im, expected.im, epsilon = 1e-12);
        }
    }
}

#[test]
fn bank_kernels_have_zero_mean_real_part() {
    let bank = FilterBankF64::default_bank();
    assert!(bank.is_zero_dc());
    for filter in bank.filters() {
        let sum: f64 = filter.real_kernel().sum();
        assert_abs_diff_eq!(sum, 0.0, epsilon = 1e-12);
    }
}

#[test]
fn responses_match_naive_correlation() {
    let bank = FilterBankF64::default_bank();
    let image = random_image(48, 11);
    let fast = bank.responses(image.view()).unwrap();
    for (filter, response) in bank.filters().iter().zip(&fast) {
        let expected = naive_correlation(&image, &filter.real_kernel());
        let direct = convolve(image.view(), filter).unwrap();
        for ((e, d), f) in expected.iter().zip(&direct).zip(response) {
            assert_abs_diff_eq!(*d, *e, epsilon = 1e-10);
            assert_abs_diff_eq!(*f, *e, epsilon = 1e-10);
        }
    }
}

#[test]
fn line_image_matches_naive_correlation() {
    let line = LineModel::new(60.0, 2.0, 120.0).unwrap();
    let sample = straight_line_sample(64, PI / 3.0, 0.0, &line, 0.0, 0).unwrap();
    let bank = FilterBankF64::default_bank();
    let fast = bank.responses(sample.image.view()).unwrap();
    for (filter, response) in bank.filters().iter().zip(&fast) {
        let expected = naive_correlation(&sample.image, &filter.real_kernel());
        for (f, e) in response.iter().zip(&expected) {
            assert_abs_diff_eq!(*f, *e, epsilon = 1e-10);
        }
    }
}

#[test]
fn predicted_argmin_agrees_with_rendered_lines() {
    let bank = FilterBankF64::default_bank();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trials = 200;
    let mut agree = 0;
    for trial in 0..trials {
        let angle = rng.random_range(0.0..PI);
        let line = LineModel::new(rng.random_range(30.0..90.0), rng.random_range(1.0..3.0), 100.0).unwrap();
        let sample = straight_line_sample(64, angle, 0.0, &line, 0.0, trial).unwrap();
        let responses = bank.responses(sample.image.view()).unwrap();
        let (cy, cx) = (32, 32);
        // The line passes through (31.5, 31.5); pick the nearest on-line pixel.
        let (py, px) = [(cy - 1, cx - 1), (cy - 1, cx), (cy, cx - 1), (cy, cx)]
            .into_iter()
            .min_by(|a, b| sample.line_distance[*a].total_cmp(&sample.line_distance[*b]))
            .unwrap();
        let argmin = |values: Vec<f64>| {
            values
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(k, _)| k)
                .unwrap()
        };
        let measured = argmin(responses.iter().map(|r| r[(py, px)]).collect());
        let predicted = argmin(
            bank.filters()
                .iter()
                .map(|f| predicted_line_response(&line, f.params(), angle - f.params().theta))
                .collect(),
        );
        if measured == predicted {
            agree += 1;
        }
    }
    assert!(agree * 100 >= trials * 99, "{agree} of {trials}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn responses_are_linear(seed_a in any::<u64>(), seed_b in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let bank = FilterBankF64::default_bank();
        let x = random_image(36, seed_a);
        let y = random_image(36, seed_b);
        let combined = &x * a + &y * b;
        let rx = bank.responses(x.view()).unwrap();
        let ry = bank.responses(y.view()).unwrap();
        let rc = bank.responses(combined.view()).unwrap();
        for k in 0..bank.len() {
            for ((c, p), q) in rc[k].iter().zip(&rx[k]).zip(&ry[k]) {
                prop_assert!((c - (a * p + b * q)).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn constant_offsets_leave_responses_unchanged(seed in any::<u64>(), c in -100.0f64..100.0) {
        let bank = FilterBankF64::default_bank();
        let x = random_image(36, seed);
        let shifted = &x + c;
        let rx = bank.responses(x.view()).unwrap();
        let rs = bank.responses(shifted.view()).unwrap();
        for k in 0..bank.len() {
            for (p, q) in rx[k].iter().zip(&rs[k]) {
                prop_assert!((p - q).abs() <= 1e-8);
            }
        }
    }
}
