use proptest::prelude::*;

use super::*;
use crate::data::{corrupt, CorruptionSpec};
use crate::inference::{hmc_sample, HmcConfig, TrajectoryRule};
use crate::models::{InputShape, LabeledDataset, Model, ModelSpec, Targets};
use crate::numkit::{dot, Matrix, RngStream};
use crate::priors::{Family, Prior};

#[test]
fn ks_statistic_examples() {
    assert_eq!(ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
    assert_eq!(ks_two_sample(&[1.0, 2.0], &[5.0, 6.0, 7.0]), 1.0);
    assert!((ks_two_sample(&[1.0, 2.0, 3.0], &[2.5]) - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn effective_sample_size_tracks_autocorrelation() {
    let mut rng = RngStream::new(1, 0);
    let n = 20_000;
    let iid = rng.normal_vec(n);
    let e = effective_sample_size(&iid);
    assert!(e > 0.8 * n as f64, "{e}");

    let rho: f64 = 0.9;
    let mut ar = vec![0.0; n];
    for t in 1..n {
        ar[t] = rho * ar[t - 1] + (1.0 - rho * rho).sqrt() * rng.normal();
    }
    let expected = n as f64 * (1.0 - rho) / (1.0 + rho);
    let e = effective_sample_size(&ar);
    assert!((e / expected - 1.0).abs() < 0.3, "{e} vs {expected}");
}

fn unit_series(rng: &mut RngStream, units: usize, len: usize, scale: f64, shift: f64) -> Vec<Vec<f64>> {
    (0..units)
        .map(|_| (0..len).map(|_| shift + scale * rng.normal()).collect())
        .collect()
}

#[test]
fn prior_match_passes_prior_draws_at_the_calibrated_rate() {
    // 4 units x 500 draws, the pooled size of the dead-feature sampler check
    let mut rng = RngStream::new(2, 0);
    let th = MatchThresholds::default();
    let trials = 400;
    let mut passes = 0;
    for _ in 0..trials {
        let prior = PriorMarginal::gaussian(0.0, 1.0, &mut rng);
        let series = unit_series(&mut rng, 4, 500, 1.0, 0.0);
        passes += usize::from(prior_match_test(&series, &prior, &th).unwrap().pass);
    }
    assert!(passes as f64 >= 0.99 * trials as f64, "{passes}/{trials}");
}

#[test]
fn prior_match_rejects_scaled_and_shifted_samples() {
    let mut rng = RngStream::new(3, 0);
    let th = MatchThresholds::default();
    let prior = PriorMarginal::gaussian(0.0, 0.25, &mut rng);
    let wide = prior_match_test(&unit_series(&mut rng, 4, 500, 1.0, 0.0), &prior, &th).unwrap();
    assert!(!wide.pass && wide.variance_ratio > 1.15);
    let shifted = prior_match_test(&unit_series(&mut rng, 4, 500, 0.5, 0.5), &prior, &th).unwrap();
    assert!(!shifted.pass && shifted.z > 3.0);
    let few = prior_match_test(&[vec![0.0; 29]], &prior, &th);
    assert!(matches!(few, Err(crate::error::Error::Config { .. })));
}

fn mlp(widths: &[usize]) -> Model {
    Model::new(ModelSpec::mlp(widths)).unwrap()
}

#[test]
fn prior_only_chain_projects_to_prior_variance_along_every_direction() {
    let model = mlp(&[3, 4, 2]);
    let alpha2 = 0.3;
    let prior = Prior::iid(Family::Gaussian { variance: alpha2 }, &model).unwrap();
    let mut cfg = HmcConfig::new(0.05, 1, 1100, 4);
    cfg.trajectory = TrajectoryRule::PiSigmaHalf;
    let chain = hmc_sample(&model, &prior, None, &cfg).unwrap();
    let mut rng = RngStream::new(5, 0);
    let probes: Vec<ProbeDirection> = (0..5)
        .map(|i| {
            let mut v = rng.normal_vec(4);
            let n = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= n);
            ProbeDirection {
                label: format!("random {i}"),
                vector: v,
            }
        })
        .collect();
    let report = project_first_layer(&prior, &chain.samples, &probes, &MatchThresholds::default(), &mut rng).unwrap();
    for d in &report.directions {
        assert_eq!(d.units, 4);
        assert!((d.test.variance / alpha2 - 1.0).abs() < 0.15, "{d:?}");
        assert!((d.test.prior_variance - alpha2).abs() < 1e-12);
    }
    let bad = ProbeDirection {
        label: "short".into(),
        vector: vec![1.0, 0.0],
    };
    assert!(project_first_layer(&prior, &chain.samples, &[bad], &MatchThresholds::default(), &mut rng).is_err());
}

#[test]
fn affine_probe_appends_negated_offset() {
    let p = ProbeDirection::affine("c", &[0.6, 0.0], 0.8);
    assert_eq!(p.vector, vec![0.6, 0.0, -0.8]);
}

#[test]
fn metrics_of_perfect_and_uniform_predictions() {
    let labels = vec![0, 2, 1, 2];
    let mut onehot = Matrix::zeros(4, 3);
    for (i, &y) in labels.iter().enumerate() {
        onehot[(i, y)] = 1.0;
    }
    let m = classification_metrics(&onehot, &labels).unwrap();
    assert_eq!((m.accuracy, m.nll, m.ece, m.bins), (1.0, 0.0, 0.0, 15));

    let k = 4;
    let uniform = Matrix::from_vec(4, k, vec![0.25; 4 * k]).unwrap();
    let m = classification_metrics(&uniform, &[0, 1, 2, 3]).unwrap();
    assert!((m.nll - (k as f64).ln()).abs() < 1e-15);
    assert_eq!(m.accuracy, 0.25);
    assert!((m.ece - (0.25 - m.accuracy).abs()).abs() < 1e-15);
}

#[test]
fn metrics_hand_fixture() {
    let probs = Matrix::from_rows(&[vec![0.9, 0.1], vec![0.6, 0.4], vec![0.3, 0.7], vec![0.2, 0.8]]).unwrap();
    let m = classification_metrics(&probs, &[0, 1, 1, 0]).unwrap();
    assert_eq!(m.accuracy, 0.5);
    let nll = -(0.9f64.ln() + 0.4f64.ln() + 0.7f64.ln() + 0.2f64.ln()) / 4.0;
    assert!((m.nll - nll).abs() < 1e-15);
    assert!((m.ece - 0.45).abs() < 1e-15);
    assert!(classification_metrics(&probs, &[0, 1, 2, 0]).is_err());
}

fn labelled(n: usize, m: usize, seed: u64) -> LabeledDataset {
    let mut rng = RngStream::new(seed, 0);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| rng.normal_vec(m)).collect();
    let labels = rows.iter().map(|r| usize::from(r[0] + r[1] > 0.0)).collect();
    LabeledDataset::new(Matrix::from_rows(&rows).unwrap(), InputShape::Flat { features: m }, Targets::Classes(labels))
        .unwrap()
}

#[test]
fn robustness_curve_baseline_row_is_clean_evaluation() {
    let model = mlp(&[3, 4, 2]);
    let prior = Prior::iid(Family::Gaussian { variance: 1.0 }, &model).unwrap();
    let mut rng = RngStream::new(6, 0);
    let samples: Vec<Vec<f64>> = (0..5).map(|_| prior.sample(&mut rng)).collect();
    let data = labelled(60, 3, 7);
    let predictors = vec![
        ("avg".to_string(), Predictor::Average(&samples)),
        ("point".to_string(), Predictor::Point(&samples[0])),
    ];
    let family = CorruptionSpec::GaussianNoise { std: 0.0 };
    let seed = RngStream::new(8, 0);
    let rows = robustness_curve(&model, &predictors, &data, &family, &[0.0, 0.5, 2.0], None, &seed).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0].metrics, evaluate(&model, Predictor::Average(&samples), &data).unwrap());
    assert_eq!(rows[1].metrics, evaluate(&model, Predictor::Point(&samples[0]), &data).unwrap());
    let again = robustness_curve(&model, &predictors, &data, &family, &[0.0, 0.5, 2.0], None, &seed).unwrap();
    assert_eq!(rows, again);
    assert!(robustness_curve(&model, &predictors, &data, &family, &[0.5, 1.0], None, &seed).is_err());
    assert!(robustness_curve(&model, &predictors, &data, &family, &[0.0, 1.0, 1.0], None, &seed).is_err());
}

#[test]
fn spectrum_of_isotropic_noise_is_flat() {
    let data = labelled(3000, 5, 9);
    let basis = pca(&data.inputs).unwrap();
    let same = corruption_spectrum(&data.inputs, &data.inputs, &basis).unwrap();
    assert!(same.iter().all(|r| r.before == r.after));

    let sigma: f64 = 0.5;
    let noisy = corrupt(&data, &CorruptionSpec::GaussianNoise { std: sigma }, None, &mut RngStream::new(1, 0)).unwrap();
    let n = data.len() as f64;
    for r in corruption_spectrum(&data.inputs, &noisy.inputs, &basis).unwrap() {
        let s2 = sigma * sigma;
        let tol = 3.0 * ((2.0 * s2 * s2 + 4.0 * r.before * s2) / (n - 1.0)).sqrt();
        assert!((r.after - r.before - s2).abs() < tol, "{r:?}");
        assert!((r.before - r.reference).abs() < 1e-10);
    }
    let short = Matrix::zeros(2, 5);
    assert!(corruption_spectrum(&data.inputs, &short, &basis).is_err());
}

#[test]
fn large_feature_values_follow_the_limiting_logits() {
    let model = mlp(&[4, 6, 6, 3]);
    let prior = Prior::iid(Family::Gaussian { variance: 1.0 }, &model).unwrap();
    let mut rng = RngStream::new(10, 0);
    let x = rng.normal_vec(4);
    let mut checked = 0;
    for _ in 0..200 {
        let w = prior.sample(&mut rng);
        let z = limiting_logits(&model, &w, 2).unwrap();
        if !is_separable(&z, 0.1) {
            continue;
        }
        checked += 1;
        let mut far = x.clone();
        far[2] += 1e3;
        let out = model.logits(&w, &far).unwrap();
        assert_eq!(crate::inference::argmax(&out), crate::inference::argmax(&z));
    }
    assert!(checked > 50);
    assert!(is_separable(&[0.0, 0.2, 0.05], 0.1));
    assert!(!is_separable(&[0.0, 0.2, 0.15], 0.1));
}

#[test]
fn weights_out_of_a_dead_unit_do_not_move_the_likelihood() {
    // widths 2-3-3-2; unit 1 of the second hidden layer has zero fan-in and a negative bias
    let model = mlp(&[2, 3, 3, 2]);
    let layout = model.layout().clone();
    let mut rng = RngStream::new(11, 0);
    let mut w = rng.normal_vec(model.num_params());
    let w2 = layout.block("W2").unwrap().clone();
    let b2 = layout.block("b2").unwrap().clone();
    for r in 0..3 {
        w[w2.offset + r * 3 + 1] = 0.0;
    }
    w[b2.offset + 1] = -1.0;
    w[b2.offset] = 10.0;
    let data = labelled(40, 2, 12);
    let base = model.log_likelihood(&w, &data).unwrap();
    let w3 = layout.block("W3").unwrap().clone();
    for v in [-5.0, 0.3, 40.0] {
        let mut moved = w.clone();
        for c in 0..2 {
            moved[w3.offset + 2 + c] = v * (c as f64 + 1.0);
        }
        assert_eq!(model.log_likelihood(&moved, &data).unwrap(), base);
    }
    let mut live = w.clone();
    live[w3.offset] += 1.0;
    assert_ne!(model.log_likelihood(&live, &data).unwrap(), base);
}

proptest! {
    #[test]
    fn ece_is_a_fraction(raw in proptest::collection::vec(0.0f64..1.0, 30), labels in proptest::collection::vec(0usize..3, 10)) {
        let mut rows = Vec::new();
        for c in raw.chunks(3) {
            let s: f64 = c.iter().sum::<f64>() + 1e-9;
            rows.push(c.iter().map(|v| v / s).collect::<Vec<_>>());
        }
        let m = classification_metrics(&Matrix::from_rows(&rows).unwrap(), &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.ece));
        prop_assert!((0.0..=1.0).contains(&m.accuracy));
    }
}
