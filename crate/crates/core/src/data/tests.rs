use proptest::prelude::*;

use super::*;
use crate::analysis::pca;
use crate::models::{InputShape, LabeledDataset, Targets};
use crate::numkit::{dot, Matrix, RngStream};

fn teacher() -> LabelRule {
    LabelRule::Teacher {
        classes: 2,
        margin: 0.5,
        sharpness: 8.0,
    }
}

fn image(h: usize, w: usize) -> InputShape {
    InputShape::Image {
        height: h,
        width: w,
        channels: 1,
    }
}

fn image_task(h: usize, w: usize, pattern: Vec<f64>, offset: f64) -> GeneratorConfig {
    GeneratorConfig {
        shape: image(h, w),
        dependences: vec![DependenceSpec::PatchAffine {
            kernel: 3,
            pattern,
            offset,
        }],
        scale: 1.0,
        feature_scales: None,
        labels: teacher(),
    }
}

/// Horizontal neighbour difference inside a 3x3 patch: rows of the image are constant.
fn row_constant_pattern() -> Vec<f64> {
    let mut g = vec![0.0; 9];
    g[0] = 1.0;
    g[1] = -1.0;
    g
}

#[test]
fn dead_feature_column_is_zero() {
    let cfg = GeneratorConfig::flat(3, teacher()).with(DependenceSpec::DeadFeature { index: 0 });
    let d = gen_planted(&cfg, 100, &mut RngStream::new(1, 0)).unwrap();
    assert!(d.inputs.column(0).iter().all(|v| *v == 0.0));
    assert!(d.inputs.column(1).iter().any(|v| *v != 0.0));
    assert_eq!(d.meta.planted.len(), 1);
}

#[test]
fn unit_affine_through_origin_is_a_dead_feature() {
    let cfg = GeneratorConfig::flat(4, teacher()).with(DependenceSpec::Affine {
        direction: vec![1.0, 0.0, 0.0, 0.0],
        offset: 0.0,
    });
    let d = gen_planted(&cfg, 100, &mut RngStream::new(2, 0)).unwrap();
    assert!(d.inputs.column(0).iter().all(|v| *v == 0.0));
}

#[test]
fn affine_dependence_holds_exactly() {
    let cfg = GeneratorConfig::flat(8, teacher()).with(DependenceSpec::Affine {
        direction: vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0, -2.0, 1.0],
        offset: 0.3 * 20.25f64.sqrt(),
    });
    let d = gen_planted(&cfg, 300, &mut RngStream::new(3, 0)).unwrap();
    let planted = &d.meta.planted[0];
    let norm = dot(&planted.direction, &planted.direction) + planted.offset.powi(2);
    assert!((norm - 1.0).abs() < 1e-14);
    for i in 0..d.len() {
        assert!((dot(&planted.direction, d.input(i)) - planted.offset).abs() < 1e-12);
    }
}

#[test]
fn multiplicative_dependence_holds() {
    let cfg = GeneratorConfig::flat(
        2,
        LabelRule::Regression {
            noise_variance: 0.01,
            signal: 1.0,
        },
    )
    .with(DependenceSpec::Multiplicative {
        exponents: vec![1.0, 1.0],
    });
    let d = gen_planted(&cfg, 200, &mut RngStream::new(4, 0)).unwrap();
    for i in 0..d.len() {
        let x = d.input(i);
        assert!(x[0] > 0.0 && x[1] > 0.0);
        assert!((x[1] - 1.0 / x[0]).abs() < 1e-12 * (1.0 + x[1].abs()));
    }
}

#[test]
fn patch_dependence_holds_on_every_valid_patch() {
    let mut pattern = vec![0.3, -0.2, 0.1, 0.0, 0.4, -0.1, 0.2, 0.0, 1.0];
    for (cfg, tol) in [
        (image_task(6, 6, row_constant_pattern(), 0.0), 1e-12),
        (image_task(6, 6, std::mem::take(&mut pattern), 0.25), 1e-10),
    ] {
        let d = gen_planted(&cfg, 50, &mut RngStream::new(5, 0)).unwrap();
        let g = &d.meta.planted[0];
        let patches = extract_patches(&d.inputs, d.shape, 3, false).unwrap();
        assert_eq!(patches.rows(), 50 * 16);
        for r in 0..patches.rows() {
            assert!((dot(&g.direction, patches.row(r)) - g.offset).abs() < tol);
        }
    }
}

#[test]
fn unstable_patterns_are_reported() {
    let mut g = vec![0.0; 9];
    g[0] = 1.0;
    g[1] = 1e-3;
    let err = gen_planted(&image_task(12, 12, g, 0.0), 20, &mut RngStream::new(6, 0));
    assert!(err.is_err());
}

#[test]
fn teacher_ignores_planted_directions_and_is_nearly_deterministic() {
    let c = vec![1.0, -1.0, 0.5, 0.0, 2.0];
    let cfg = GeneratorConfig::flat(5, teacher())
        .with(DependenceSpec::Affine {
            direction: c.clone(),
            offset: 0.0,
        })
        .with(DependenceSpec::DeadFeature { index: 3 });
    let mut rng = RngStream::new(7, 0);
    let task = PlantedTask::new(&cfg, &mut rng).unwrap();
    for u in task.teacher_directions() {
        assert!(dot(u, &c).abs() < 1e-8);
        assert!(u[3].abs() < 1e-8);
    }
    let d = task.sample(4000, &mut rng).unwrap();
    let classes = d.classes().unwrap();
    let disagree = (0..d.len())
        .filter(|&i| {
            let z = task.teacher_logits(d.input(i));
            let top = if z[0] >= z[1] { 0 } else { 1 };
            top != classes[i]
        })
        .count();
    assert!((disagree as f64) < 0.05 * d.len() as f64, "{disagree}");
    let ones = classes.iter().filter(|&&k| k == 1).count();
    assert!(ones > 1000 && ones < 3000);
}

#[test]
fn generation_is_seed_deterministic() {
    let cfg = GeneratorConfig::flat(4, teacher()).with(DependenceSpec::DeadFeature { index: 2 });
    let a = gen_planted(&cfg, 50, &mut RngStream::new(8, 0)).unwrap();
    let b = gen_planted(&cfg, 50, &mut RngStream::new(8, 0)).unwrap();
    let c = gen_planted(&cfg, 50, &mut RngStream::new(9, 0)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn spurious_feature_tracks_the_label() {
    let cfg = GeneratorConfig::flat(4, teacher()).with(DependenceSpec::Spurious {
        index: 1,
        value: 2.0,
        class: 1,
    });
    let d = gen_planted(&cfg, 100, &mut RngStream::new(10, 0)).unwrap();
    let classes = d.classes().unwrap();
    for (i, &c) in classes.iter().enumerate() {
        assert_eq!(d.input(i)[1], if c == 1 { 2.0 } else { 0.0 });
    }
}

#[test]
fn inconsistent_generator_specs_are_config_errors() {
    let bad = [
        GeneratorConfig::flat(3, teacher()).with(DependenceSpec::DeadFeature { index: 3 }),
        GeneratorConfig::flat(3, teacher()).with(DependenceSpec::Affine {
            direction: vec![1.0, 0.0],
            offset: 0.0,
        }),
        GeneratorConfig::flat(2, teacher())
            .with(DependenceSpec::DeadFeature { index: 0 })
            .with(DependenceSpec::DeadFeature { index: 1 }),
        GeneratorConfig::flat(9, teacher()).with(DependenceSpec::PatchAffine {
            kernel: 3,
            pattern: vec![1.0; 9],
            offset: 0.0,
        }),
        GeneratorConfig::flat(3, teacher())
            .with(DependenceSpec::DeadFeature { index: 0 })
            .with(DependenceSpec::Multiplicative {
                exponents: vec![1.0, 1.0, 0.0],
            }),
    ];
    for cfg in bad {
        assert!(matches!(
            gen_planted(&cfg, 10, &mut RngStream::new(0, 0)),
            Err(crate::error::Error::Config { .. })
        ));
    }
    let repeated = GeneratorConfig::flat(3, teacher())
        .with(DependenceSpec::DeadFeature { index: 0 })
        .with(DependenceSpec::DeadFeature { index: 0 });
    assert!(gen_planted(&repeated, 10, &mut RngStream::new(0, 0)).is_err());
}

fn small_flat(n: usize, m: usize, seed: u64) -> LabeledDataset {
    let mut rng = RngStream::new(seed, 0);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| rng.normal_vec(m)).collect();
    LabeledDataset::new(
        Matrix::from_rows(&rows).unwrap(),
        InputShape::Flat { features: m },
        Targets::Classes((0..n).map(|i| i % 3).collect()),
    )
    .unwrap()
}

#[test]
fn zero_noise_is_identity_and_shift_is_exact() {
    let d = small_flat(20, 4, 11);
    let mut rng = RngStream::new(0, 0);
    let same = corrupt(&d, &CorruptionSpec::GaussianNoise { std: 0.0 }, None, &mut rng).unwrap();
    assert_eq!(same.inputs, d.inputs);
    let shifted = corrupt(&d, &CorruptionSpec::ConstantShift { shift: 0.75 }, None, &mut rng).unwrap();
    for (a, b) in shifted.inputs.data().iter().zip(d.inputs.data()) {
        assert_eq!(*a, b + 0.75);
    }
    assert_eq!(shifted.targets, d.targets);
    assert_eq!(shifted.meta.corruptions.len(), 1);
}

#[test]
fn directional_noise_stays_in_the_chosen_span() {
    let d = small_flat(200, 6, 12);
    let basis = pca(&d.inputs).unwrap();
    let spec = CorruptionSpec::PcaDirectionalNoise {
        std: 2.0,
        end: ComponentEnd::Lowest,
        count: 2,
    };
    let noisy = corrupt(&d, &spec, Some(&basis), &mut RngStream::new(1, 0)).unwrap();
    let kept = basis.highest(4);
    let mut moved = 0.0f64;
    for i in 0..d.len() {
        let diff: Vec<f64> = noisy.input(i).iter().zip(d.input(i)).map(|(a, b)| a - b).collect();
        moved = moved.max(dot(&diff, &diff).sqrt());
        for &k in &kept {
            assert!(dot(&diff, &basis.component(k)).abs() < 1e-10);
        }
    }
    assert!(moved > 1.0);
    assert!(corrupt(&d, &spec, None, &mut RngStream::new(1, 0)).is_err());
}

#[test]
fn translate_needs_images_and_rolls_with_zero_fill() {
    let d = small_flat(5, 4, 13);
    let err = corrupt(&d, &CorruptionSpec::Translate { dx: 1, dy: 0 }, None, &mut RngStream::new(0, 0));
    assert!(matches!(err, Err(crate::error::Error::Config { .. })));

    let img = LabeledDataset::new(
        Matrix::from_vec(1, 6, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(),
        image(2, 3),
        Targets::Classes(vec![0]),
    )
    .unwrap();
    let right = corrupt(&img, &CorruptionSpec::Translate { dx: 1, dy: 0 }, None, &mut RngStream::new(0, 0)).unwrap();
    assert_eq!(right.input(0), &[0.0, 1.0, 2.0, 0.0, 4.0, 5.0]);
    let up = corrupt(&img, &CorruptionSpec::Translate { dx: 0, dy: -1 }, None, &mut RngStream::new(0, 0)).unwrap();
    assert_eq!(up.input(0), &[4.0, 5.0, 6.0, 0.0, 0.0, 0.0]);
}

#[test]
fn feature_activation_sets_one_column() {
    let d = small_flat(5, 3, 14);
    let spec = CorruptionSpec::FeatureActivate { index: 2, value: 7.0 };
    let out = corrupt(&d, &spec, None, &mut RngStream::new(0, 0)).unwrap();
    assert!(out.inputs.column(2).iter().all(|v| *v == 7.0));
    assert_eq!(out.inputs.column(0), d.inputs.column(0));
    assert!(corrupt(&d, &CorruptionSpec::FeatureActivate { index: 3, value: 1.0 }, None, &mut RngStream::new(0, 0)).is_err());
}

#[test]
fn translation_keeps_patch_dependence_but_noise_breaks_it() {
    let cfg = image_task(8, 8, row_constant_pattern(), 0.0);
    let d = gen_planted(&cfg, 40, &mut RngStream::new(15, 0)).unwrap();
    let g = d.meta.planted[0].clone();
    let residuals = |data: &LabeledDataset, mask: Option<&[bool]>| -> f64 {
        let p = extract_patches(&data.inputs, data.shape, 3, false).unwrap();
        let p = match mask {
            Some(m) => select_positions(&p, m).unwrap(),
            None => p,
        };
        let mut r: Vec<f64> = (0..p.rows()).map(|i| (dot(&g.direction, p.row(i)) - g.offset).abs()).collect();
        r.sort_by(f64::total_cmp);
        r[r.len() / 2]
    };
    let geom = image_geometry(d.shape, 3, false).unwrap();
    for (dx, dy) in [(1, 0), (0, 2), (-2, 1)] {
        let moved = corrupt(&d, &CorruptionSpec::Translate { dx, dy }, None, &mut RngStream::new(0, 0)).unwrap();
        let mask = translation_safe_positions(&geom, dx, dy);
        assert!(mask.iter().any(|&k| k));
        assert!(residuals(&moved, Some(&mask)) < 1e-10);
    }
    let sigma = 0.3;
    let noisy = corrupt(&d, &CorruptionSpec::GaussianNoise { std: sigma }, None, &mut RngStream::new(1, 0)).unwrap();
    assert!(residuals(&noisy, None) > 0.5 * sigma);
}

#[test]
fn patch_extraction_examples() {
    let one = Matrix::from_vec(1, 9, (1..=9).map(f64::from).collect()).unwrap();
    let p = extract_patches(&one, image(3, 3), 3, false).unwrap();
    assert_eq!((p.rows(), p.cols()), (1, 9));
    assert_eq!(p.row(0), one.row(0));

    let constant = Matrix::from_vec(2, 16, vec![0.4; 32]).unwrap();
    let p = extract_patches(&constant, image(4, 4), 2, false).unwrap();
    assert_eq!(p.rows(), 2 * 9);
    assert!(p.data().iter().all(|v| *v == 0.4));

    let padded = extract_patches(&one, image(3, 3), 3, true).unwrap();
    assert_eq!(padded.rows(), 9);
    assert_eq!(padded.row(0), &[0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 4.0, 5.0]);
    assert_eq!(padded.row(4), one.row(0));

    assert!(extract_patches(&one, image(3, 3), 4, false).is_err());
    assert!(extract_patches(&one, InputShape::Flat { features: 9 }, 3, false).is_err());
}

/// Two 2x2 images and their labels, written out byte by byte.
fn idx_fixture() -> (Vec<u8>, Vec<u8>) {
    let images = vec![
        0x00, 0x00, 0x08, 0x03, // magic: unsigned byte, rank 3
        0x00, 0x00, 0x00, 0x02, // 2 images
        0x00, 0x00, 0x00, 0x02, // 2 rows
        0x00, 0x00, 0x00, 0x02, // 2 columns
        0x00, 0xff, 0x80, 0x33, // image 0
        0x11, 0x22, 0x00, 0xfe, // image 1
    ];
    let labels = vec![0x00, 0x00, 0x08, 0x01, 0x00, 0x00, 0x00, 0x02, 0x07, 0x03];
    (images, labels)
}

#[test]
fn idx_fixture_parses_exactly() {
    let (images, labels) = idx_fixture();
    let img = parse_idx(&images).unwrap();
    assert_eq!(img.dims, vec![2, 2, 2]);
    let d = idx_dataset(&img, &parse_idx(&labels).unwrap()).unwrap();
    assert_eq!(d.input(0), &[0.0, 1.0, 128.0 / 255.0, 51.0 / 255.0]);
    assert_eq!(d.input(1), &[17.0 / 255.0, 34.0 / 255.0, 0.0, 254.0 / 255.0]);
    assert_eq!(d.classes().unwrap(), &[7, 3]);
    assert_eq!(d.shape, image(2, 2));

    let dir = tempfile::tempdir().unwrap();
    let (pi, pl) = (dir.path().join("img"), dir.path().join("lbl"));
    std::fs::write(&pi, &images).unwrap();
    std::fs::write(&pl, &labels).unwrap();
    assert_eq!(load_idx(&pi, &pl).unwrap(), d);
}

#[test]
fn bad_idx_inputs_are_format_errors() {
    use crate::error::Error;
    let (images, labels) = idx_fixture();
    assert!(matches!(parse_idx(&[]), Err(Error::Format { offset: 0, .. })));
    let mut magic = images.clone();
    magic[0] = 1;
    assert!(matches!(parse_idx(&magic), Err(Error::Format { offset: 0, .. })));
    let mut kind = images.clone();
    kind[2] = 0x0d;
    assert!(matches!(parse_idx(&kind), Err(Error::Format { offset: 2, .. })));
    assert!(matches!(parse_idx(&images[..images.len() - 1]), Err(Error::Format { offset: 16, .. })));
    assert!(matches!(parse_idx(&images[..10]), Err(Error::Format { offset: 8, .. })));

    let mut three = labels.clone();
    three[7] = 3;
    three.push(1);
    let err = idx_dataset(&parse_idx(&images).unwrap(), &parse_idx(&three).unwrap());
    assert!(matches!(err, Err(Error::Format { .. })));
}

#[test]
fn standardizer_uses_train_statistics_only() {
    let train = small_flat(50, 3, 16);
    let test = small_flat(30, 3, 17);
    let s = Standardizer::fit(&train.inputs).unwrap();
    let t = s.apply(&train).unwrap();
    for j in 0..3 {
        let col = t.inputs.column(j);
        let mean = col.iter().sum::<f64>() / 50.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 49.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }
    let u = s.apply(&test).unwrap();
    let expected = (test.input(0)[1] - s.mean[1]) / s.std[1];
    assert_eq!(u.input(0)[1], expected);

    let mut dead = train.inputs.clone();
    for i in 0..dead.rows() {
        dead.row_mut(i)[0] = 0.0;
    }
    let s = Standardizer::fit(&dead).unwrap();
    assert_eq!(s.std[0], 1.0);
}

#[test]
fn dataset_cache_round_trips() {
    let cfg = GeneratorConfig::flat(3, teacher()).with(DependenceSpec::DeadFeature { index: 1 });
    let d = gen_planted(&cfg, 25, &mut RngStream::new(18, 0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&d, dir.path(), "train").unwrap();
    assert_eq!(load_dataset(dir.path(), "train").unwrap(), d);

    let reg = LabeledDataset::new(
        Matrix::from_vec(2, 1, vec![1.0, 2.0]).unwrap(),
        InputShape::Flat { features: 1 },
        Targets::Values(Matrix::from_vec(2, 2, vec![0.5, 1.5, -1.0, 3.0]).unwrap()),
    )
    .unwrap();
    let bytes = encode_arrays(&reg.inputs, &reg.targets);
    assert_eq!(decode_arrays(&bytes).unwrap(), (reg.inputs.clone(), reg.targets.clone()));
    for cut in 0..bytes.len() {
        assert!(decode_arrays(&bytes[..cut]).is_err());
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(decode_arrays(&extra).is_err());
}

proptest! {
    #[test]
    fn corruptions_never_touch_targets(seed in 0u64..1000, std in 0.0f64..3.0, shift in -5.0f64..5.0) {
        let d = small_flat(10, 3, seed);
        let mut rng = RngStream::new(seed, 1);
        for spec in [
            CorruptionSpec::GaussianNoise { std },
            CorruptionSpec::ConstantShift { shift },
            CorruptionSpec::FeatureActivate { index: 0, value: shift },
        ] {
            let out = corrupt(&d, &spec, None, &mut rng).unwrap();
            prop_assert_eq!(&out.targets, &d.targets);
        }
    }

    #[test]
    fn idx_parser_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
        let _ = parse_idx(&bytes);
    }

    #[test]
    fn cache_decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..96)) {
        let _ = decode_arrays(&bytes);
    }
}
