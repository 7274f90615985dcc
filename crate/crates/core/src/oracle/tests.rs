use std::f64::consts::PI;

use proptest::prelude::*;

use super::*;
use crate::models::{Architecture, FeatureMap, InputShape, LabeledDataset, Likelihood, Model, ModelSpec, Targets, Activation};
use crate::numkit::{eigh_symmetric, Matrix, RngStream};
use crate::priors::{Family, Prior};

fn gauss_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

#[test]
fn no_data_returns_prior() {
    let prior_cov = Matrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
    let post = blr_posterior(&Matrix::zeros(0, 2), &[], &[0.5, -1.0], &prior_cov, 0.7).unwrap();
    assert!(post.covariance.sub(&prior_cov).unwrap().frobenius() < 1e-12);
    assert!((post.mean[0] - 0.5).abs() < 1e-12 && (post.mean[1] + 1.0).abs() < 1e-12);
}

#[test]
fn hand_evaluated_single_observation() {
    let phi = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
    let post = blr_posterior(&phi, &[1.0], &[0.0, 0.0], &Matrix::identity(2), 1.0).unwrap();
    assert!(post.covariance.sub(&Matrix::from_diag(&[0.5, 1.0])).unwrap().frobenius() < 1e-15);
    assert!((post.mean[0] - 0.5).abs() < 1e-15 && post.mean[1] == 0.0);
    assert_eq!(post.map(), post.mean.as_slice());
}

#[test]
fn dead_feature_marginal_is_prior() {
    let mut rng = RngStream::new(1, 0);
    let rows: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.normal(), 0.0, rng.normal()]).collect();
    let phi = Matrix::from_rows(&rows).unwrap();
    let y = rng.normal_vec(30);
    let prior_cov = Matrix::from_diag(&[1.0, 0.4, 2.0]);
    let post = blr_posterior(&phi, &y, &[0.0, 0.2, 0.0], &prior_cov, 0.5).unwrap();
    assert!((post.covariance[(1, 1)] - 0.4).abs() < 1e-14);
    assert!((post.mean[1] - 0.2).abs() < 1e-14);
    assert!(post.covariance[(0, 1)].abs() < 1e-14 && post.covariance[(1, 2)].abs() < 1e-14);
}

#[test]
fn precision_identity_and_planted_direction() {
    let mut rng = RngStream::new(2, 0);
    let v = [0.0, 0.6, 0.8];
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|_| {
            let z = rng.normal_vec(3);
            let d: f64 = z.iter().zip(&v).map(|(a, b)| a * b).sum();
            z.iter().zip(&v).map(|(a, b)| a - d * b).collect()
        })
        .collect();
    let phi = Matrix::from_rows(&rows).unwrap();
    let y = rng.normal_vec(40);
    let prior_cov = Matrix::identity(3).scale(0.3);
    let post = blr_posterior(&phi, &y, &[0.0; 3], &prior_cov, 0.2).unwrap();
    let expect = Matrix::identity(3)
        .scale(1.0 / 0.3)
        .add(&phi.transpose().matmul(&phi).unwrap().scale(1.0 / 0.2))
        .unwrap();
    assert!(post.precision().unwrap().sub(&expect).unwrap().frobenius() < 1e-8 * expect.frobenius());
    let along = post.covariance.quadratic_form(&v).unwrap();
    assert!((along - 0.3).abs() < 1e-10);
}

#[test]
fn shifts_off_the_data_subspace() {
    let mut rng = RngStream::new(3, 0);
    let rows: Vec<Vec<f64>> = (0..500).map(|_| vec![rng.normal(), 0.0]).collect();
    let phi = Matrix::from_rows(&rows).unwrap();
    let y: Vec<f64> = rows.iter().map(|r| 1.5 * r[0] + 0.1 * rng.normal()).collect();
    let post = blr_posterior(&phi, &y, &[0.0, 0.0], &Matrix::identity(2), 0.01).unwrap();
    let x = [0.8, 0.0];
    let (m0, v0) = blr_predict(&post, &x).unwrap();
    // contracted: only a sliver of parameter uncertainty remains in the data span
    assert!(v0 - 0.01 < 1e-4);
    for t in [0.0, 0.5, 3.0] {
        let (m, var) = blr_predict(&post, &[0.8, t]).unwrap();
        assert!((m - m0).abs() < 1e-15);
        assert!((var - v0 - t * t).abs() < 1e-12);
    }
    assert!(blr_predict(&post, &[1.0]).is_err());
    assert!(blr_posterior(&phi, &y, &[0.0, 0.0], &Matrix::zeros(2, 2), 0.01).is_err());
}

proptest! {
    #[test]
    fn adding_a_row_never_widens(seed in 0u64..500) {
        let mut rng = RngStream::new(seed, 9);
        let d = 3;
        let rows: Vec<Vec<f64>> = (0..4).map(|_| rng.normal_vec(d)).collect();
        let y = rng.normal_vec(5);
        let before = blr_posterior(&Matrix::from_rows(&rows).unwrap(), &y[..4], &[0.0; 3], &Matrix::identity(3), 0.5).unwrap();
        let mut more = rows.clone();
        more.push(rng.normal_vec(d));
        let after = blr_posterior(&Matrix::from_rows(&more).unwrap(), &y, &[0.0; 3], &Matrix::identity(3), 0.5).unwrap();
        let eb = eigh_symmetric(&before.covariance, 1e-9).unwrap().values;
        let ea = eigh_symmetric(&after.covariance, 1e-9).unwrap().values;
        for (a, b) in ea.iter().zip(&eb) {
            prop_assert!(*a <= b + 1e-10);
        }
    }
}

fn linear_model(inputs: usize, likelihood: Likelihood, map: FeatureMap) -> Model {
    Model::new(ModelSpec {
        architecture: Architecture::LinearFeatures {
            inputs,
            feature_map: map,
            outputs: 1,
        },
        activation: Activation::Identity,
        likelihood,
    })
    .unwrap()
}

#[test]
fn dead_feature_grid_marginal_equals_prior() {
    let mut rng = RngStream::new(4, 0);
    let model = linear_model(2, Likelihood::Bernoulli, FeatureMap::Identity);
    let rows: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.normal(), 0.0]).collect();
    let labels = rows.iter().map(|r| usize::from(r[0] + 0.3 * rng.normal() > 0.0)).collect();
    let data = LabeledDataset::new(Matrix::from_rows(&rows).unwrap(), InputShape::Flat { features: 2 }, Targets::Classes(labels)).unwrap();
    let var = 0.5;
    let prior = Prior::iid(Family::Gaussian { variance: var }, &model).unwrap();
    let s = var.sqrt();
    let axes = vec![uniform_axis(-8.0 * s, 8.0 * s, 201), uniform_axis(-8.0 * s, 8.0 * s, 301)];
    let grid = grid_posterior(&model, &prior, Some(&data), axes.clone(), None).unwrap();
    let marginal = grid.marginal(1);
    let expect = normalized_on_axis(&axes[1], |w| gauss_pdf(w, 0.0, var));
    let err = marginal.iter().zip(&expect).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-10, "{err}");
    // the informative weight has contracted
    let m0 = grid.marginal(0);
    let w = trapezoid_weights(&axes[0]);
    let mean: f64 = m0.iter().zip(&w).zip(&axes[0]).map(|((p, w), x)| p * w * x).sum();
    let spread: f64 = m0.iter().zip(&w).zip(&axes[0]).map(|((p, w), x)| p * w * (x - mean).powi(2)).sum();
    assert!(spread < 0.5 * var, "{spread}");
}

#[test]
fn one_parameter_grid_matches_conjugate() {
    let mut rng = RngStream::new(5, 0);
    let noise = 0.4;
    let model = linear_model(1, Likelihood::Gaussian { variance: noise }, FeatureMap::Identity);
    let x: Vec<f64> = rng.normal_vec(15);
    let y: Vec<f64> = x.iter().map(|v| 0.7 * v + noise.sqrt() * rng.normal()).collect();
    let data = LabeledDataset::new(
        Matrix::from_vec(15, 1, x.clone()).unwrap(),
        InputShape::Flat { features: 1 },
        Targets::Values(Matrix::from_vec(15, 1, y.clone()).unwrap()),
    )
    .unwrap();
    let prior = Prior::iid(Family::Gaussian { variance: 2.0 }, &model).unwrap();
    let post = blr_posterior(&Matrix::from_vec(15, 1, x).unwrap(), &y, &[0.0], &Matrix::from_diag(&[2.0]), noise).unwrap();
    let (m, v) = (post.mean[0], post.covariance[(0, 0)]);
    let sd = v.sqrt();
    let axis = uniform_axis(m - 8.0 * sd, m + 8.0 * sd, 401);
    let grid = grid_posterior(&model, &prior, Some(&data), vec![axis.clone()], None).unwrap();
    let err = grid
        .marginal(0)
        .iter()
        .zip(&axis)
        .map(|(p, &w)| (p - gauss_pdf(w, m, v)).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-6, "{err}");

    // refinement: halving the spacing leaves the normalizer essentially unchanged
    let coarse = grid_posterior(&model, &prior, Some(&data), vec![uniform_axis(m - 8.0 * sd, m + 8.0 * sd, 201)], None).unwrap();
    assert!((coarse.log_normalizer - grid.log_normalizer).abs() < 1e-8);
}

#[test]
fn rotated_nalu_grid_marginal_equals_induced_prior() {
    let mut rng = RngStream::new(6, 0);
    let p = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];
    let model = Model::new(ModelSpec {
        architecture: Architecture::Nalu { inputs: 2 },
        activation: Activation::Identity,
        likelihood: Likelihood::Gaussian { variance: 0.1 },
    })
    .unwrap();
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|_| {
            let a = (0.5 * rng.normal()).exp();
            vec![a, 1.0 / a]
        })
        .collect();
    let y: Vec<f64> = rows.iter().map(|r| r[0].powf(0.8) * r[1].powf(-0.4) + 0.3 * rng.normal()).collect();
    let data = LabeledDataset::new(
        Matrix::from_rows(&rows).unwrap(),
        InputShape::Flat { features: 2 },
        Targets::Values(Matrix::from_vec(40, 1, y).unwrap()),
    )
    .unwrap();
    let var = 1.0;
    let prior = Prior::iid(Family::Gaussian { variance: var }, &model).unwrap();
    let r = rotation_with_first_column(&p).unwrap();
    let axes = vec![uniform_axis(-8.0, 8.0, 241), uniform_axis(-3.0, 3.0, 241)];
    let grid = grid_posterior(&model, &prior, Some(&data), axes.clone(), Some(&r)).unwrap();
    let expect = normalized_on_axis(&axes[0], |u| gauss_pdf(u, 0.0, var));
    let err = grid.marginal(0).iter().zip(&expect).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-8, "{err}");
}

#[test]
fn grid_rejects_large_models() {
    let model = Model::new(ModelSpec::mlp(&[2, 2])).unwrap();
    let prior = Prior::iid(Family::Gaussian { variance: 1.0 }, &model).unwrap();
    let axes = vec![uniform_axis(-1.0, 1.0, 5); 6];
    assert!(matches!(
        grid_posterior(&model, &prior, None, axes, None),
        Err(crate::error::Error::Config { .. })
    ));
}
