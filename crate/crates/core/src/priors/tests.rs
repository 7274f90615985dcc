use std::f64::consts::PI;

use proptest::prelude::*;

use super::*;
use crate::models::{Architecture, InputShape, LabeledDataset, Model, ModelSpec, PriorDensity, Targets};
use crate::numkit::{dot, Matrix, RngStream};

fn mlp(widths: &[usize]) -> Model {
    Model::new(ModelSpec::mlp(widths)).unwrap()
}

fn cnn(filters: usize) -> Model {
    let mut spec = ModelSpec::mlp(&[2, 2]);
    spec.architecture = Architecture::Cnn {
        height: 5,
        width: 5,
        channels: 1,
        kernel: 3,
        filters,
        padding: false,
        pool: false,
        hidden: vec![],
        outputs: 2,
    };
    Model::new(spec).unwrap()
}

fn flat_data(rows: Vec<Vec<f64>>) -> LabeledDataset {
    let m = rows[0].len();
    let n = rows.len();
    LabeledDataset::new(
        Matrix::from_rows(&rows).unwrap(),
        InputShape::Flat { features: m },
        Targets::Classes(vec![0; n]),
    )
    .unwrap()
}

/// Rows satisfying `c·x = offset` exactly (up to rounding), `c` unit norm.
fn planted_rows(rng: &mut RngStream, n: usize, c: &[f64], offset: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let z = rng.normal_vec(c.len());
            let d = dot(&z, c);
            z.iter().zip(c).map(|(a, b)| a + (offset - d) * b).collect()
        })
        .collect()
}

fn fd_error(prior: &Prior, w: &[f64]) -> f64 {
    let mut g = vec![0.0; w.len()];
    prior.log_density_grad(w, &mut g).unwrap();
    let h = 1e-6;
    let mut x = w.to_vec();
    let mut worst = 0.0f64;
    for i in 0..w.len() {
        x[i] = w[i] + h;
        let up = prior.log_density(&x).unwrap();
        x[i] = w[i] - h;
        let down = prior.log_density(&x).unwrap();
        x[i] = w[i];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-2));
    }
    worst
}

#[test]
fn gaussian_at_origin() {
    let model = mlp(&[3, 4, 2]);
    let prior = Prior::iid(Family::Gaussian { variance: 1.0 }, &model).unwrap();
    let d = model.num_params() as f64;
    let lp = prior.log_density(&vec![0.0; model.num_params()]).unwrap();
    assert!((lp + 0.5 * d * (2.0 * PI).ln()).abs() < 1e-12);
}

#[test]
fn laplace_with_unit_l1_norm() {
    let model = mlp(&[2, 2, 2]);
    let scale = (1.0f64 / 6.0).sqrt();
    let prior = Prior::iid(Family::Laplace { scale }, &model).unwrap();
    let d = model.num_params();
    let mut w = vec![0.0; d];
    w[0] = 0.25;
    w[3] = -0.5;
    w[d - 1] = 0.25;
    let lp = prior.log_density(&w).unwrap();
    let constant = -(d as f64) * (2.0 * scale).ln();
    assert!((lp - (constant - 6.0f64.sqrt())).abs() < 1e-12);
}

#[test]
fn gradients_match_finite_differences_for_every_family() {
    let mut rng = RngStream::new(31, 0);
    let model = mlp(&[3, 4, 2]);
    let c = [0.6, 0.0, 0.8];
    let data = flat_data(planted_rows(&mut rng, 50, &c, 0.3));
    let families = [
        Family::Gaussian { variance: 0.5 },
        Family::Laplace { scale: 0.4 },
        Family::StudentT { dof: 4.0, scale_sq: 0.3 },
        Family::ExpNorm { power: 1.5, variance: 0.5 },
        Family::ExpNorm { power: 2.0, variance: 0.5 },
        Family::ExpNorm { power: 3.0, variance: 0.5 },
    ];
    let firsts = [
        None,
        Some(FirstLayerConfig::EmpCov {
            alpha: 1.0,
            eps: Some(0.1),
            center: true,
            bias_variance: None,
        }),
        Some(FirstLayerConfig::PcaDecay {
            alpha: 1.0,
            eps: None,
            decay: 0.5,
        }),
    ];
    for family in families {
        for first_layer in firsts {
            let cfg = PriorConfig {
                default: family,
                first_layer,
            };
            let prior = Prior::build(&cfg, &model, Some(&data)).unwrap();
            let mut checked = 0;
            while checked < 50 {
                let w = rng.normal_vec(model.num_params());
                // stay off the |w| kinks of the Laplace family
                if matches!(family, Family::Laplace { .. }) && w.iter().any(|v| v.abs() < 1e-3) {
                    continue;
                }
                assert!(fd_error(&prior, &w) < 1e-5, "{cfg:?}");
                checked += 1;
            }
        }
    }
}

#[test]
fn sumfilter_gradient_and_monotonicity() {
    let model = cnn(3);
    let prior = build_sumfilter(0.5, 0.2, Family::Gaussian { variance: 1.0 }, &model).unwrap();
    let mut rng = RngStream::new(2, 2);
    let w1 = model.layout().first_weight().range();
    let mut checked = 0;
    while checked < 50 {
        let w = rng.normal_vec(model.num_params());
        let sums_ok = (0..3).all(|j| (0..9).map(|k| w[w1.start + k * 3 + j]).sum::<f64>().abs() > 0.01);
        if sums_ok {
            assert!(fd_error(&prior, &w) < 1e-5);
            checked += 1;
        }
    }

    // zero-sum filter: only the Gaussian part contributes
    let mut w = vec![0.0; model.num_params()];
    for k in 0..9 {
        w[w1.start + k * 3] = if k % 2 == 0 { 0.5 } else { -0.5 };
    }
    w[w1.start + 8 * 3] = 0.0;
    w[w1.start + 7 * 3] = -0.5;
    w[w1.start + 6 * 3] = 0.5;
    let s: f64 = (0..9).map(|k| w[w1.start + k * 3]).sum();
    assert_eq!(s, 0.0);
    let mut g = vec![0.0; w.len()];
    prior.log_density_grad(&w, &mut g).unwrap();
    for k in 0..9 {
        let i = w1.start + k * 3;
        assert_eq!(g[i], -w[i] / 0.5);
    }

    // shifting one filter's sum while holding its norm-like base fixed lowers density
    let base = |s: f64| {
        let mut w = vec![0.0; model.num_params()];
        w[w1.start] = s;
        w[w1.start + 3] = -s;
        w[w1.start + 6] = 0.0;
        let mut v = w.clone();
        v[w1.start + 6] = s.abs().min(1.0);
        prior.log_density(&v).unwrap()
            - Family::Gaussian { variance: 0.5 }.scalar_logpdf_grad(s.abs().min(1.0)).0
    };
    let vals: Vec<f64> = [0.0, 0.2, 0.5, 0.9].iter().map(|&s| base(s)).collect();
    assert!(vals.windows(2).all(|p| p[1] < p[0]));

    assert!(build_sumfilter(0.5, 0.2, Family::Gaussian { variance: 1.0 }, &mlp(&[2, 3, 2])).is_err());
}

#[test]
fn gaussian_sample_variance_matches() {
    let model = mlp(&[1, 2]);
    let prior = Prior::iid(Family::Gaussian { variance: 0.01 }, &model).unwrap();
    let mut rng = RngStream::new(100, 0);
    let mut draws = Vec::with_capacity(100_000);
    while draws.len() < 100_000 {
        draws.extend(prior.sample(&mut rng));
    }
    let var = draws.iter().map(|v| v * v).sum::<f64>() / draws.len() as f64;
    assert!((0.0097..=0.0103).contains(&var), "{var}");
}

fn excess_kurtosis(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

#[test]
fn student_t_moments_and_cdf() {
    // ν = 10: excess kurtosis 6 / (ν - 4) = 1
    let mut rng = RngStream::new(7, 7);
    let f = Family::StudentT { dof: 10.0, scale_sq: 1.0 };
    let draws: Vec<f64> = (0..1_000_000).map(|_| f.sample_scalar(&mut rng)).collect();
    let k = excess_kurtosis(&draws);
    assert!((k - 1.0).abs() < 0.2, "{k}");

    // ν = 4 has no finite fourth moment; check the draws against its closed-form CDF
    let f = Family::StudentT { dof: 4.0, scale_sq: 1.0 };
    let mut draws: Vec<f64> = (0..100_000).map(|_| f.sample_scalar(&mut rng)).collect();
    draws.sort_by(f64::total_cmp);
    let cdf = |t: f64| {
        let q = 1.0 + t * t / 4.0;
        0.5 + 0.375 * (t / q.sqrt()) * (1.0 - t * t / (12.0 * q))
    };
    let n = draws.len() as f64;
    let ks = draws
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let c = cdf(t);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max);
    // 1.95 / sqrt(n) is the 0.1% critical value
    assert!(ks < 1.95 / n.sqrt(), "{ks}");

    let model = mlp(&[1, 2]);
    let cfg = PriorConfig::gaussian(1.0);
    let bad = PriorConfig {
        default: Family::StudentT { dof: 0.0, scale_sq: 1.0 },
        ..cfg
    };
    assert!(matches!(Prior::build(&bad, &model, None), Err(crate::error::Error::Config { .. })));
}

#[test]
fn exp_norm_sampler_moments() {
    let mut rng = RngStream::new(5, 5);
    // p = 2 is an isotropic Gaussian with variance α²
    let draws: Vec<f64> = (0..20_000).flat_map(|_| sample_exp_norm(2.0, 0.3, 5, &mut rng)).collect();
    let var = draws.iter().map(|v| v * v).sum::<f64>() / draws.len() as f64;
    assert!((var / 0.3 - 1.0).abs() < 0.03);
    // p = 1.5: per-coordinate variance from the radial moment formula
    let f = Family::ExpNorm { power: 1.5, variance: 0.3 };
    let expect = f.marginal_std(5).powi(2);
    let draws: Vec<f64> = (0..20_000).flat_map(|_| sample_exp_norm(1.5, 0.3, 5, &mut rng)).collect();
    let var = draws.iter().map(|v| v * v).sum::<f64>() / draws.len() as f64;
    assert!((var / expect - 1.0).abs() < 0.04, "{var} vs {expect}");
}

#[test]
fn empcov_null_direction_keeps_eps() {
    let mut rng = RngStream::new(12, 0);
    let c = [0.0, 0.6, 0.8, 0.0];
    let rows = planted_rows(&mut rng, 300, &c, 0.0);
    let x = Matrix::from_rows(&rows).unwrap();
    let prior = build_empcov(&x, 2.0, 1e-3, true, None, true).unwrap();
    let v = prior.weight_variance_along(&c).unwrap();
    assert!((v - 1e-3).abs() < 1e-10 * 1e-3 + 1e-13, "{v}");
    let smallest = *prior.spectrum.last().unwrap();
    assert!(smallest >= 1e-3 - 1e-10);

    // sampled projections
    let proj: Vec<f64> = (0..10_000).map(|_| dot(&prior.sample_unit(&mut rng).0, &c)).collect();
    let var = proj.iter().map(|p| p * p).sum::<f64>() / proj.len() as f64;
    assert!((var / 1e-3 - 1.0).abs() < 0.1);

    assert!(build_empcov(&Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap(), 1.0, 1e-4, true, None, true).is_err());
}

#[test]
fn empcov_on_isotropic_data() {
    let mut rng = RngStream::new(13, 0);
    let x = Matrix::from_vec(20_000, 3, rng.normal_vec(60_000)).unwrap();
    let prior = build_empcov(&x, 0.5, 1e-4, true, None, false).unwrap();
    let cov = prior.covariance();
    let target = Matrix::identity(3).scale(0.5 + 1e-4);
    // sampling error of a covariance entry at n = 2e4 is about 0.5 · 0.007
    assert!(cov.sub(&target).unwrap().data().iter().all(|v| v.abs() < 0.02));
}

#[test]
fn empcov_on_constant_patches() {
    let model = cnn(2);
    let img = vec![0.7; 25];
    let data = LabeledDataset::new(
        Matrix::from_rows(&[img.clone(), img]).unwrap(),
        InputShape::Image {
            height: 5,
            width: 5,
            channels: 1,
        },
        Targets::Classes(vec![0, 1]),
    )
    .unwrap();
    let rows = first_layer_rows(&model, Some(&data)).unwrap();
    assert_eq!((rows.rows(), rows.cols()), (18, 9));
    let prior = build_empcov(&rows, 1.0, 1e-4, true, None, true).unwrap();
    assert!(prior.spectrum.iter().all(|&l| (l - 1e-4).abs() < 1e-12));
    let ones = vec![1.0 / 3.0; 9];
    assert!((prior.weight_variance_along(&ones).unwrap() - 1e-4).abs() < 1e-12);
}

#[test]
fn pca_decay_spectrum() {
    let mut rng = RngStream::new(14, 0);
    let rows: Vec<Vec<f64>> = (0..500).map(|_| vec![3.0 * rng.normal(), rng.normal(), 0.3 * rng.normal()]).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let basis = crate::analysis::pca(&x).unwrap();

    let flat = build_pca_prior(&x, 0.8, 1e-3, 1.0).unwrap();
    let iso = Matrix::identity(3).scale(0.8 + 1e-3);
    assert!(flat.covariance().sub(&iso).unwrap().frobenius() < 1e-10);

    let p = build_pca_prior(&x, 0.8, 1e-3, 0.5).unwrap();
    for (i, s) in [0.5, 0.25, 0.125].iter().enumerate() {
        let v = basis.component(i);
        let var = p.weight_variance_along(&v).unwrap();
        assert!((var - (0.8 * s + 1e-3)).abs() < 1e-10);
    }

    // EmpCov is the special case s_i = eigenvalue_i
    let emp = build_empcov(&x, 0.8, 1e-3, true, None, false).unwrap();
    let via_spectrum = covariance_from_spectrum(&basis, &basis.variances, 0.8, 1e-3).unwrap();
    assert!(emp.covariance().sub(&via_spectrum).unwrap().frobenius() < 1e-10);

    assert!(build_pca_prior(&x, 0.8, 1e-3, 1.5).is_err());
    assert!(build_pca_prior(&x, 0.8, 1e-3, 0.0).is_err());
}

#[test]
fn sumfilter_sampler_is_exact_and_efficient() {
    let (d, var, gamma_sq) = (9usize, 0.05, 0.1);
    let tau2 = d as f64 * var;
    // E[s²] under ∝ N(s; 0, τ²) e^{-|s|/γ²}, by trapezoid quadrature
    let (mut z, mut m2) = (0.0, 0.0);
    let hstep = 1e-4;
    let mut s = 0.0;
    while s < 20.0 {
        let wgt = if s == 0.0 { 0.5 } else { 1.0 };
        let dens = (-s * s / (2.0 * tau2) - s / gamma_sq).exp();
        z += wgt * dens;
        m2 += wgt * dens * s * s;
        s += hstep;
    }
    let expect = m2 / z;

    let mut rng = RngStream::new(15, 0);
    let mut tries = 0u64;
    let n = 100_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let (w, t) = sample_filter(d, var, gamma_sq, &mut rng);
        tries += u64::from(t);
        let s: f64 = w.iter().sum();
        acc += s * s;
    }
    let got = acc / n as f64;
    assert!((got / expect - 1.0).abs() < 0.02, "{got} vs {expect}");
    let acceptance = n as f64 / tries as f64;
    assert!(acceptance > 0.7, "{acceptance}");
}

#[test]
fn sidecar_round_trip_and_rejections() {
    let mut rng = RngStream::new(16, 0);
    let x = Matrix::from_vec(40, 3, rng.normal_vec(120)).unwrap();
    let prior = build_empcov(&x, 1.0, 1e-4, true, None, true).unwrap();
    let bytes = prior.to_bytes();
    assert_eq!(CovariancePrior::from_bytes(&bytes).unwrap(), prior);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cov.bin");
    prior.save(&path).unwrap();
    assert_eq!(CovariancePrior::load(&path).unwrap(), prior);

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(CovariancePrior::from_bytes(&bad).is_err());
    assert!(CovariancePrior::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    assert!(CovariancePrior::from_bytes(&[]).is_err());
}

#[test]
fn projection_variance_along_planted_direction() {
    let mut rng = RngStream::new(17, 0);
    let model = mlp(&[3, 4, 2]);
    let c = [0.48, 0.0, 0.64];
    let c0 = 0.6; // |c|² + c0² = 1
    let cu: Vec<f64> = c.iter().map(|v| v / 0.8).collect();
    let data = flat_data(planted_rows(&mut rng, 200, &cu, c0 / 0.8));
    let cfg = PriorConfig {
        default: Family::Gaussian { variance: 1.0 },
        first_layer: Some(FirstLayerConfig::EmpCov {
            alpha: 1.0,
            eps: None,
            center: true,
            bias_variance: None,
        }),
    };
    let prior = Prior::build(&cfg, &model, Some(&data)).unwrap();
    // weight-only direction: α cᵀΣc + ε|c|² = ε|c|²
    let v = prior.first_layer_projection_variance(&[c[0], c[1], c[2], 0.0]).unwrap();
    assert!((v - 1e-4 * 0.64).abs() < 1e-12);
    let g = Prior::iid(Family::Gaussian { variance: 0.3 }, &model).unwrap();
    let v = g.first_layer_projection_variance(&[c[0], c[1], c[2], -c0]).unwrap();
    assert!((v - 0.3).abs() < 1e-12);
}

proptest! {
    #[test]
    fn laplace_density_decreases_with_magnitude(a in 0.0f64..5.0, b in 0.0f64..5.0, scale in 0.1f64..3.0) {
        let f = Family::Laplace { scale };
        let (la, _) = f.scalar_logpdf_grad(a);
        let (lb, _) = f.scalar_logpdf_grad(-b);
        prop_assert_eq!(a < b, la > lb);
    }
}
