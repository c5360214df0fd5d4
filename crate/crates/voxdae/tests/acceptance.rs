//! Acceptance suite: one test per shipping criterion, each printing a
//! PASS line with its measured numbers. Run with
//! `cargo test -p voxdae --test acceptance -- --nocapture`.
//!
//! The desk-scale criteria share one trained fixture pair (a denoising
//! autoencoder and a clean-input baseline trained on a synthetic 4-class
//! dataset); it is built once, on first use, behind a `OnceLock`.

use std::sync::OnceLock;
use std::time::Instant;
use voxdae::corruption::{slice_count, NoiseSpec};
use voxdae::eval::{
    denoise_table, extract_embeddings, interpolate, linear_probe, reconstruction_error,
    ProbeConfig,
};
use voxdae::gradcheck;
use voxdae::mesh::{
    parse_off, sphere_mesh, synthetic_dataset, voxelize_standard, OffErrorKind, VoxelGrid,
};
use voxdae::model::{
    init_model, load_checkpoint, save_checkpoint, CheckpointMeta, ModelParams, ModelSpec,
};
use voxdae::reference;
use voxdae::tensor::{
    conv3d_forward, deconv3d_forward, Activation, ConvSpec, LayerParams, LossKind, Tensor,
};
use voxdae::train::{train, TrainConfig};

const DESK_SEED: u64 = 42;
const DESK_TRAIN_PER_CLASS: usize = 50; // 200 training grids
const DESK_TEST_PER_CLASS: usize = 20; // 80 test grids
const DESK_EPOCHS: usize = 30;
const DESK_LR: f64 = 0.1;
const CLASS_NAMES: [&str; 4] = ["box", "cylinder", "cross", "l-shape"];

struct DeskScale {
    train_set: Vec<VoxelGrid>,
    test_set: Vec<VoxelGrid>,
    dae: ModelParams<f32>,
    cae: ModelParams<f32>,
    dae_train_secs: f64,
}

fn desk() -> &'static DeskScale {
    static DESK: OnceLock<DeskScale> = OnceLock::new();
    DESK.get_or_init(|| {
        let train_set = synthetic_dataset(
            DESK_TRAIN_PER_CLASS,
            voxdae::rng::derive_seed(DESK_SEED, "synth-train"),
        );
        let test_set = synthetic_dataset(
            DESK_TEST_PER_CLASS,
            voxdae::rng::derive_seed(DESK_SEED, "synth-test"),
        );
        let dae_config = TrainConfig {
            lr: DESK_LR,
            epochs: DESK_EPOCHS,
            dropout_p: 0.5,
            seed: DESK_SEED,
            ..TrainConfig::default()
        };
        let started = Instant::now();
        let (dae, _) = train::<f32>(&dae_config, &train_set).expect("DAE training");
        let dae_train_secs = started.elapsed().as_secs_f64();
        // The baseline trains identically except for the corruption rate.
        let cae_config = TrainConfig {
            dropout_p: 0.0,
            ..dae_config
        };
        let (cae, _) = train::<f32>(&cae_config, &train_set).expect("CAE training");
        DeskScale {
            train_set,
            test_set,
            dae,
            cae,
            dae_train_secs,
        }
    })
}

fn class_names() -> Vec<String> {
    CLASS_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Criterion 1: the model build asserts the exact feature chain
/// 1x30^3 -> 64x8^3 -> 256x3^3 -> 6912 -> 6912 -> 256x3^3 -> 64x9^3 -> 1x30^3.
#[test]
fn c01_shape_chain_reproduction() {
    let started = Instant::now();
    let spec = ModelSpec::vconv_dae(0.5);
    spec.validate().expect("spec must validate");
    let chain: Vec<String> = spec
        .shape_chain()
        .unwrap()
        .iter()
        .map(|s| s.to_string())
        .collect();
    assert_eq!(
        chain,
        ["1x30^3", "64x8^3", "256x3^3", "6912", "6912", "256x3^3", "64x9^3", "1x30^3"]
    );
    let model: ModelParams<f32> = init_model(spec, 1).expect("model build");
    assert_eq!(model.parameter_count(), 50_940_097);
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1 s");
    println!("ACCEPTANCE 1 (shape chain): PASS in {elapsed:?}");
}

/// Criterion 2: every layer backward matches central finite differences at
/// 64-bit within 1e-4 relative error; a full-model spot check stays within
/// 1e-3.
#[test]
fn c02_gradient_correctness() {
    let started = Instant::now();
    let eps = 1e-5f64;
    let mut worst_layer = 0.0f64;
    for (name, err) in [
        ("conv unit stride", gradcheck::check_conv_layer::<f64>(&ConvSpec::conv(2, 3, 3, 1), 6, eps, 201)),
        ("conv strided", gradcheck::check_conv_layer::<f64>(&ConvSpec::conv(1, 2, 3, 2), 7, eps, 202)),
        ("deconv", gradcheck::check_conv_layer::<f64>(&ConvSpec::transposed(2, 2, 3, 2), 3, eps, 203)),
        ("deconv wide", gradcheck::check_conv_layer::<f64>(&ConvSpec::transposed(3, 1, 4, 3), 3, eps, 204)),
        ("fully connected", gradcheck::check_fc_layer::<f64>(12, 9, eps, 205)),
        ("relu", gradcheck::check_activation::<f64>(Activation::Relu, 64, eps, 206)),
        ("sigmoid", gradcheck::check_activation::<f64>(Activation::Sigmoid, 64, eps, 207)),
        ("bce", gradcheck::check_loss::<f64>(LossKind::CrossEntropy, 64, eps, 208)),
        ("mse", gradcheck::check_loss::<f64>(LossKind::MeanSquared, 64, eps, 209)),
    ] {
        assert!(err <= 1e-4, "{name}: relative error {err} > 1e-4");
        worst_layer = worst_layer.max(err);
    }

    // Full-model spot check: five random weights per layer, finite
    // differences through the eval-mode forward + loss at 64-bit.
    let model: ModelParams<f64> = init_model(ModelSpec::vconv_dae(0.5), 77).unwrap();
    let grids = synthetic_dataset(1, 99);
    let (input, target) = (&grids[1], &grids[1]);
    let mut eval_rng = voxdae::rng::stream(0, "unused");
    let (_, cache) = model
        .forward(input, voxdae::model::ForwardMode::Eval, &mut eval_rng)
        .unwrap();
    let (_, grads) = model.backward(&cache, target, LossKind::CrossEntropy).unwrap();

    let mut pick_rng = voxdae::rng::stream(DESK_SEED, "spot-check");
    let mut worst_model = 0.0f64;
    for layer in 0..5 {
        for _ in 0..5 {
            use rand::Rng;
            let idx = pick_rng.random_range(0..model.layers[layer].weights.len());
            let analytic = grads.layers[layer].weights.data()[idx];
            let mut perturbed = model.clone();
            perturbed.layers[layer].weights.data_mut()[idx] += eps;
            let plus = loss_of(&perturbed, input, target);
            perturbed.layers[layer].weights.data_mut()[idx] -= 2.0 * eps;
            let minus = loss_of(&perturbed, input, target);
            let fd = (plus - minus) / (2.0 * eps);
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-6);
            worst_model = worst_model.max(rel);
            assert!(
                rel <= 1e-3,
                "layer {layer} weight {idx}: analytic {analytic}, fd {fd}, rel {rel}"
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget 1 min");
    println!(
        "ACCEPTANCE 2 (gradients): PASS, layer max rel {worst_layer:.2e}, model spot max rel {worst_model:.2e}, in {elapsed:?}"
    );
}

fn loss_of(model: &ModelParams<f64>, input: &VoxelGrid, target: &VoxelGrid) -> f64 {
    let prob = model.forward_eval(input).unwrap();
    let t: Tensor<f64> = target.to_tensor();
    voxdae::tensor::bce_loss(&prob, &t).unwrap().0
}

/// Criterion 3: optimized conv3d/deconv3d agree with the naive triple-loop
/// oracle on 100 random specs at 32-bit (<= 1e-6), and the adjoint identity
/// <conv(x), y> = <x, deconv(y)> holds at 64-bit (<= 1e-10).
#[test]
fn c03_convolution_oracle() {
    use rand::Rng;
    let started = Instant::now();
    let mut rng = voxdae::rng::stream(DESK_SEED, "conv-oracle");
    let mut max_diff = 0.0f64;
    for case in 0..100 {
        let f = rng.random_range(1..=4usize);
        let d = rng.random_range(1..=3usize);
        let cin = rng.random_range(1..=3usize);
        let cout = rng.random_range(1..=3usize);
        let transposed = case % 2 == 1;
        let (spec, edge) = if transposed {
            (ConvSpec::transposed(cin, cout, f, d), rng.random_range(1..=4usize))
        } else {
            let min_edge = f;
            (ConvSpec::conv(cin, cout, f, d), rng.random_range(min_edge..=min_edge + 5))
        };
        let input: Tensor<f32> =
            Tensor::from_fn(&[cin, edge, edge, edge], |_| rng.random_range(-1.0..1.0f32));
        let params = LayerParams {
            weights: Tensor::from_fn(&spec.weight_shape(), |_| rng.random_range(-1.0..1.0f32)),
            bias: Tensor::from_fn(&[cout], |_| rng.random_range(-1.0..1.0f32)),
        };
        let (fast, naive) = if transposed {
            (
                deconv3d_forward(&input, &params, &spec).unwrap(),
                reference::deconv3d_reference(&input, &params, &spec),
            )
        } else {
            (
                conv3d_forward(&input, &params, &spec).unwrap(),
                reference::conv3d_reference(&input, &params, &spec),
            )
        };
        let diff = fast.max_abs_diff(&naive);
        assert!(diff <= 1e-6, "case {case} ({spec:?}, edge {edge}): diff {diff}");
        max_diff = max_diff.max(diff);
    }

    // Adjoint identity at 64-bit with shared zero-bias weights.
    let mut max_adjoint = 0.0f64;
    for trial in 0..10 {
        let f = 3;
        let d = 2;
        let conv_spec = ConvSpec::conv(2, 3, f, d);
        let deconv_spec = ConvSpec::transposed(3, 2, f, d);
        let mut rng = voxdae::rng::stream_indexed(DESK_SEED, "adjoint", &[trial]);
        let weights: Tensor<f64> =
            Tensor::from_fn(&[3, 2, f, f, f], |_| rng.random_range(-1.0..1.0));
        let conv_params = LayerParams { weights: weights.clone(), bias: Tensor::zeros(&[3]) };
        let deconv_params = LayerParams { weights, bias: Tensor::zeros(&[2]) };
        let x: Tensor<f64> = Tensor::from_fn(&[2, 7, 7, 7], |_| rng.random_range(-1.0..1.0));
        let y: Tensor<f64> = Tensor::from_fn(&[3, 3, 3, 3], |_| rng.random_range(-1.0..1.0));
        let cx = conv3d_forward(&x, &conv_params, &conv_spec).unwrap();
        let dy = deconv3d_forward(&y, &deconv_params, &deconv_spec).unwrap();
        let lhs: f64 = cx.data().iter().zip(y.data()).map(|(&a, &b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(dy.data()).map(|(&a, &b)| a * b).sum();
        let gap = (lhs - rhs).abs();
        assert!(gap <= 1e-10, "trial {trial}: <conv(x),y>={lhs} vs <x,deconv(y)>={rhs}");
        max_adjoint = max_adjoint.max(gap);
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget 1 min");
    println!(
        "ACCEPTANCE 3 (convolution oracle): PASS, max |diff| {max_diff:.2e}, max adjoint gap {max_adjoint:.2e}, in {elapsed:?}"
    );
}

/// Criterion 4: the deconvolution size law gives 3 -> 9 (f5, d2) and
/// 9 -> 30 (f6, d3); slicing percents 10/20/30 map to 3/6/9 planes; the
/// error metric denominator is exactly 13824. Exact assertions.
#[test]
fn c04_paper_arithmetic() {
    assert_eq!(ConvSpec::transposed(256, 64, 5, 2).out_edge(3).unwrap(), 9);
    assert_eq!(ConvSpec::transposed(64, 1, 6, 3).out_edge(9).unwrap(), 30);
    assert_eq!(slice_count(0.10, 30), 3);
    assert_eq!(slice_count(0.20, 30), 6);
    assert_eq!(slice_count(0.30, 30), 9);
    let grid = VoxelGrid::standard();
    assert_eq!(grid.active_volume(), 13824);
    assert_eq!(grid.active_volume(), 24 * 24 * 24);
    // The metric divides by the active volume: one flipped cell scores
    // exactly 100/13824 percent.
    let mut one_off = grid.clone();
    one_off.set(15, 15, 15, true);
    let prob: Tensor<f32> = one_off.to_tensor();
    let err = reconstruction_error(&prob, &grid, 0.5);
    assert_eq!(err, 100.0 / 13824.0);
    println!("ACCEPTANCE 4 (size/slice/denominator arithmetic): PASS");
}

/// Criterion 5: on the desk-scale dataset, the trained denoiser at 50%
/// random test noise beats both the corrupted input (noise floor) and an
/// identically trained clean-input baseline, with the denoiser trained in
/// at most 15 minutes.
#[test]
fn c05_desk_scale_denoising() {
    let desk = desk();
    assert!(
        desk.dae_train_secs <= 900.0,
        "DAE training took {:.1} s, budget 900 s",
        desk.dae_train_secs
    );
    let noise = NoiseSpec::random(0.5, voxdae::rng::derive_seed(DESK_SEED, "noise"));
    let names = class_names();
    let dae_report = denoise_table(&desk.dae, &desk.test_set, &names, &noise, 0.5).unwrap();
    let cae_report = denoise_table(&desk.cae, &desk.test_set, &names, &noise, 0.5).unwrap();
    let dae_err = dae_report.mean_error();
    let cae_err = cae_report.mean_error();
    let floor = dae_report.mean_noise_floor();
    assert!(
        dae_err < floor,
        "denoiser ({dae_err:.3}%) must beat the noise floor ({floor:.3}%)"
    );
    assert!(
        dae_err < cae_err,
        "denoiser ({dae_err:.3}%) must beat the clean-input baseline ({cae_err:.3}%)"
    );
    println!(
        "ACCEPTANCE 5 (desk denoising): PASS, DAE {dae_err:.3}% < CAE {cae_err:.3}% and < floor {floor:.3}% (train {:.1} s)",
        desk.dae_train_secs
    );
}

/// Criterion 6: the same denoiser under slicing noise beats the noise floor
/// at the 30% preset, and its error increases monotonically over the
/// 10% -> 20% -> 30% presets.
#[test]
fn c06_desk_scale_completion() {
    let desk = desk();
    let names = class_names();
    let mut errors = Vec::new();
    let mut floors = Vec::new();
    for (i, percent) in [0.10, 0.20, 0.30].iter().enumerate() {
        let noise = NoiseSpec::slicing(
            *percent,
            voxdae::rng::derive_seed(DESK_SEED, "slice-noise") ^ i as u64,
        );
        let report = denoise_table(&desk.dae, &desk.test_set, &names, &noise, 0.5).unwrap();
        errors.push(report.mean_error());
        floors.push(report.mean_noise_floor());
    }
    assert!(
        errors[2] < floors[2],
        "completion at 30% slicing: error {:.3}% must beat floor {:.3}%",
        errors[2],
        floors[2]
    );
    assert!(
        errors[0] < errors[1] && errors[1] < errors[2],
        "errors must increase with slicing: {errors:?}"
    );
    println!(
        "ACCEPTANCE 6 (desk completion): PASS, errors {:.3}% < {:.3}% < {:.3}% (floors {:.3}/{:.3}/{:.3}%)",
        errors[0], errors[1], errors[2], floors[0], floors[1], floors[2]
    );
}

/// Criterion 7: training on a single shape for 200 epochs drives the
/// cross-entropy below 0.05 and the reconstruction error to 0%.
#[test]
fn c07_overfit_one_oracle() {
    let grids = synthetic_dataset(1, voxdae::rng::derive_seed(DESK_SEED, "overfit"));
    let sample = &grids[0];
    let config = TrainConfig {
        epochs: 200,
        lr: 0.05,
        seed: DESK_SEED,
        ..TrainConfig::default()
    };
    let (model, history) = train::<f32>(&config, std::slice::from_ref(sample)).unwrap();
    let final_bce = *history.last().unwrap();
    assert!(final_bce < 0.05, "final BCE {final_bce} >= 0.05");
    let prob = model.forward_eval(sample).unwrap();
    let err = reconstruction_error(&prob, sample, 0.5);
    assert_eq!(err, 0.0, "reconstruction error {err}% != 0");
    println!("ACCEPTANCE 7 (overfit-one): PASS, BCE {final_bce:.4}, reconstruction error 0%");
}

/// Criterion 8: interpolation endpoints equal the encode/decode round trips
/// bitwise, and identical endpoints give ten identical stations.
#[test]
fn c08_interpolation_endpoints() {
    let grids = synthetic_dataset(2, voxdae::rng::derive_seed(DESK_SEED, "interp"));
    let model: ModelParams<f32> = init_model(ModelSpec::vconv_dae(0.5), DESK_SEED).unwrap();
    let (source, target) = (&grids[0], &grids[5]);
    let path = interpolate(&model, source, target, 10).unwrap();
    assert_eq!(path.len(), 10);
    let source_round = model.decode(&model.encode(source).unwrap()).unwrap();
    let target_round = model.decode(&model.encode(target).unwrap()).unwrap();
    assert_eq!(path[0], source_round, "t=1 must equal decode(encode(source)) bitwise");
    assert_eq!(path[9], target_round, "t=10 must equal decode(encode(target)) bitwise");
    let constant = interpolate(&model, source, source, 10).unwrap();
    for station in &constant {
        assert_eq!(*station, constant[0], "identical endpoints must give identical stations");
    }
    println!("ACCEPTANCE 8 (interpolation endpoints): PASS");
}

/// Criterion 9: a linear probe on the trained denoiser's embeddings of the
/// synthetic test set reaches at least 90% accuracy, while embeddings from
/// a freshly initialized model stay at or below 40%.
#[test]
fn c09_embedding_probe() {
    let desk = desk();
    let config = ProbeConfig {
        seed: voxdae::rng::derive_seed(DESK_SEED, "probe"),
        ..ProbeConfig::default()
    };
    let trained_train = extract_embeddings(&desk.dae, &desk.train_set).unwrap();
    let trained_test = extract_embeddings(&desk.dae, &desk.test_set).unwrap();
    let trained_acc = linear_probe(&trained_train, &trained_test, &config);

    let untrained: ModelParams<f32> =
        init_model(ModelSpec::vconv_dae(0.5), DESK_SEED).unwrap();
    let untrained_train = extract_embeddings(&untrained, &desk.train_set).unwrap();
    let untrained_test = extract_embeddings(&untrained, &desk.test_set).unwrap();
    let untrained_acc = linear_probe(&untrained_train, &untrained_test, &config);

    assert!(
        trained_acc >= 0.90,
        "trained-embedding probe accuracy {trained_acc:.3} < 0.90"
    );
    assert!(
        untrained_acc <= 0.40,
        "untrained-embedding probe accuracy {untrained_acc:.3} > 0.40"
    );
    println!(
        "ACCEPTANCE 9 (embedding probe): PASS, trained {trained_acc:.3} vs untrained {untrained_acc:.3}"
    );
}

/// Criterion 10: checkpoints round-trip bit-exactly, and identical 64-bit
/// single-threaded runs produce byte-identical checkpoints and reports.
#[test]
fn c10_persistence_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let grids = synthetic_dataset(2, voxdae::rng::derive_seed(DESK_SEED, "determinism"));
    let config = TrainConfig {
        epochs: 2,
        seed: DESK_SEED,
        ..TrainConfig::default()
    };

    let mut checkpoint_bytes = Vec::new();
    let mut report_bytes = Vec::new();
    for run in 0..2 {
        let (params, history) = train::<f64>(&config, &grids).unwrap();
        let meta = CheckpointMeta {
            epoch: history.len() as u32,
            loss_tail: history.clone(),
            config_hash: 0xC0FFEE,
        };
        let path = tmp.path().join(format!("run{run}.vcda"));
        save_checkpoint(&params, &meta, &path).unwrap();
        checkpoint_bytes.push(std::fs::read(&path).unwrap());

        let (loaded, loaded_meta) = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(loaded, params, "checkpoint round trip must be bit-exact");
        assert_eq!(loaded_meta, meta);

        let noise = NoiseSpec::random(0.5, voxdae::rng::derive_seed(DESK_SEED, "noise"));
        let report = denoise_table(&params, &grids, &class_names(), &noise, 0.5).unwrap();
        report_bytes.push(report.to_csv().into_bytes());
    }
    assert_eq!(
        checkpoint_bytes[0], checkpoint_bytes[1],
        "identical runs must produce byte-identical checkpoints"
    );
    assert_eq!(
        report_bytes[0], report_bytes[1],
        "identical runs must produce byte-identical reports"
    );
    println!("ACCEPTANCE 10 (persistence and determinism): PASS");
}

/// Criterion 11: the OFF parser survives its fixture suite and the
/// voxelizer honors padding emptiness and the sphere-volume estimate.
#[test]
fn c11_ingestion() {
    // Standard, glued-header, n-gon, and malformed OFF cases.
    let tetra = "OFF\n4 4 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";
    let parsed = parse_off(tetra).unwrap();
    assert_eq!((parsed.vertices.len(), parsed.faces.len()), (4, 4));

    let glued = tetra.replacen("OFF\n4 4 0", "OFF4 4 0", 1);
    assert_eq!(parse_off(&glued).unwrap(), parsed);

    let quad = "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
    assert_eq!(parse_off(quad).unwrap().faces.len(), 2);

    assert_eq!(
        parse_off("PLY\n").unwrap_err().kind,
        OffErrorKind::MissingHeader
    );
    assert_eq!(
        parse_off("OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 99\n")
            .unwrap_err()
            .kind,
        OffErrorKind::IndexOutOfRange { index: 99, vertex_count: 4 }
    );
    assert_eq!(
        parse_off("OFF\n4 4 0\n0 0 0\n").unwrap_err().kind,
        OffErrorKind::UnexpectedEof
    );
    assert_eq!(
        parse_off("OFF\nnot counts\n").unwrap_err().kind,
        OffErrorKind::BadCounts
    );

    // Voxelizer: padding emptiness and the sphere volume estimate.
    let grid = voxelize_standard(&parsed).unwrap();
    assert!(grid.padding_is_empty());

    let sphere = sphere_mesh(1.0, 24, 48);
    let sphere_grid = voxelize_standard(&sphere).unwrap();
    assert!(sphere_grid.padding_is_empty());
    let analytic = std::f64::consts::PI / 6.0 * 24f64.powi(3);
    let ratio = sphere_grid.occupied_count() as f64 / analytic;
    assert!(
        (0.9..=1.1).contains(&ratio),
        "sphere volume ratio {ratio:.4} outside 1 +/- 0.1"
    );
    println!(
        "ACCEPTANCE 11 (ingestion): PASS, sphere volume ratio {ratio:.4}"
    );
}
