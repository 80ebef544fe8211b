use chrono::{Days, NaiveDate};
use quake_core::catalog::{build_labels, rasterize_daily, DayRange, HeatMapSeq, LabelTensor};
use quake_core::model::{
    predict_map, read_checkpoint, train, write_checkpoint, AdamConfig, Dataset, ModelConfig, Network, TrainConfig,
    Variant,
};
use quake_core::nn::ClassWeights;
use quake_core::prior::{combine_residual, fit_prior, prior_logits, PriorLogits, PriorMode};
use quake_core::synth::{generate, SynthConfig};
use quake_core::Error;

fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2010, 1, 1).unwrap()
}

struct Fixture {
    heatmaps: HeatMapSeq,
    labels: LabelTensor,
    prior: PriorLogits,
    train: DayRange,
    val: DayRange,
}

fn synthetic(days: usize) -> Fixture {
    let mut cfg = SynthConfig { days, seed: 5, pair_rate: 2e-3, background_rate: 0.01, ..SynthConfig::default() };
    cfg.grid.n_rows = 6;
    cfg.grid.n_cols = 6;
    let (catalog, _) = generate(&cfg).unwrap();
    let heatmaps = rasterize_daily(&catalog, &cfg.grid, cfg.start_day, days).unwrap();
    let ref_days: Vec<NaiveDate> = (0..days).map(|d| cfg.start_day + Days::new(d as u64)).collect();
    let labels = build_labels(&catalog, &cfg.grid, &cfg.labels, &ref_days).unwrap();
    let split_at = cfg.start_day + Days::new(days as u64 * 2 / 3);
    let train = DayRange { start: cfg.start_day, end: split_at };
    let val = DayRange { start: split_at + Days::new(10), end: cfg.start_day + Days::new(days as u64) };
    let fitted = fit_prior(&labels.filter_days(|d| train.contains(d)), 1.0).unwrap();
    Fixture { heatmaps, labels, prior: prior_logits(&fitted, 0.0, PriorMode::Additive), train, val }
}

fn small_model(variant: Variant, residual: bool) -> ModelConfig {
    ModelConfig {
        variant,
        use_prior_residual: residual,
        embed_channels: 3,
        hidden_channels: 4,
        window_days: 6,
        kernel_size: 3,
        head_depth: 1,
        seed: 21,
    }
}

fn quick_train() -> TrainConfig {
    TrainConfig { epochs: 2, batch_days: 4, samples_per_epoch: 24, patience: 0, ..TrainConfig::default() }
}

#[test]
fn zero_learning_rate_keeps_parameters_bit_identical() {
    let fx = synthetic(200);
    let data = Dataset { heatmaps: &fx.heatmaps, labels: &fx.labels, prior: Some(&fx.prior) };
    let net = Network::new(small_model(Variant::CnnLstm, true)).unwrap();
    let cfg = TrainConfig { adam: AdamConfig { learning_rate: 0.0, ..AdamConfig::default() }, ..quick_train() };
    let out = train(net.clone(), &cfg, &fx.train, &fx.val, &data).unwrap();
    let before: Vec<u64> = net.flat_params().iter().map(|v| v.to_bits()).collect();
    let after: Vec<u64> = out.network.flat_params().iter().map(|v| v.to_bits()).collect();
    assert_eq!(before, after);
    assert!(out.steps > 0);
}

#[test]
fn one_cell_constant_positive_converges() {
    let days = 40;
    let mut heatmaps = HeatMapSeq::zeros(day0(), days, 1, 1);
    for d in (0..days).step_by(3) {
        heatmaps.maps[d] = 3.0;
    }
    let ref_days: Vec<NaiveDate> = (0..days).map(|d| day0() + Days::new(d as u64)).collect();
    let labels = LabelTensor { reference_days: ref_days, n_rows: 1, n_cols: 1, y: vec![1; days], valid: vec![1; days] };
    let data = Dataset { heatmaps: &heatmaps, labels: &labels, prior: None };
    let model = ModelConfig { window_days: 4, ..small_model(Variant::CnnLstm, false) };
    let cfg = TrainConfig {
        minor_class_weight: 1.0,
        adam: AdamConfig { learning_rate: 1e-2, ..AdamConfig::default() },
        epochs: 200,
        batch_days: 1,
        samples_per_epoch: 1,
        patience: 0,
    };
    let all = DayRange { start: day0(), end: day0() + Days::new(days as u64) };
    let out = train(Network::new(model).unwrap(), &cfg, &all, &DayRange::empty_at(all.end), &data).unwrap();
    assert_eq!(out.steps, 200);
    let losses: Vec<f64> = out.log.epochs.iter().map(|e| e.train_loss).collect();
    assert!((losses[0] - 2f64.ln()).abs() < 1e-12, "plain mode starts at the uniform prediction");
    for w in losses[20..].windows(2) {
        assert!(w[1] < w[0], "loss rose from {} to {}", w[0], w[1]);
    }
    let p = predict_map(&out.network, day0() + Days::new(days as u64 - 1), &heatmaps, None).unwrap();
    assert!(p[0] > 0.99, "final probability {}", p[0]);
}

#[test]
fn training_is_deterministic_across_runs_and_threads() {
    let fx = synthetic(200);
    let data = Dataset { heatmaps: &fx.heatmaps, labels: &fx.labels, prior: Some(&fx.prior) };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let out = train(Network::new(small_model(Variant::CnnLstm, true)).unwrap(), &quick_train(), &fx.train, &fx.val, &data)
                .unwrap();
            let mut ckpt = Vec::new();
            write_checkpoint(&out.network, out.steps, &mut ckpt).unwrap();
            let mut log = Vec::new();
            out.log.write_csv(&mut log).unwrap();
            (ckpt, log)
        })
    };
    let a = run(1);
    assert_eq!(a, run(1));
    assert_eq!(a, run(4));
}

#[test]
fn zero_initialized_residual_model_predicts_the_prior() {
    let fx = synthetic(120);
    let day = fx.heatmaps.day(50);
    let zero = vec![0.0; 2 * fx.prior.cells()];
    let expected = combine_residual(&fx.prior, &zero).unwrap();
    let p: Vec<f64> = {
        let pm = fit_prior(&fx.labels.filter_days(|d| fx.train.contains(d)), 1.0).unwrap();
        pm.p
    };
    for variant in [Variant::Cnn, Variant::CnnLstm] {
        let net = Network::new(small_model(variant, true)).unwrap();
        let got = predict_map(&net, day, &fx.heatmaps, Some(&fx.prior)).unwrap();
        assert_eq!(got, expected);
        for (g, p) in got.iter().zip(&p) {
            assert!((g - p).abs() <= 1e-12);
        }
    }
}

#[test]
fn positive_batch_gives_nonzero_output_layer_gradient() {
    let fx = synthetic(200);
    let i = (0..fx.labels.days())
        .find(|&i| fx.labels.reference_days[i] >= fx.heatmaps.day(10) && fx.labels.labels(i).iter().zip(fx.labels.mask(i)).any(|(&y, &m)| y == 1 && m == 1))
        .expect("fixture has a positive day");
    let net = Network::new(small_model(Variant::CnnLstm, true)).unwrap();
    let t = fx.heatmaps.day_offset(fx.labels.reference_days[i]).unwrap();
    let maps = quake_core::model::window(&fx.heatmaps, t, 6).unwrap();
    let s = net
        .loss_and_grad(&maps, 6, 6, fx.labels.labels(i), fx.labels.mask(i), Some(&fx.prior), ClassWeights::minor(1000.0).unwrap())
        .unwrap();
    let n = s.grads.len();
    let norm: f64 = s.grads[n - 2].sq_norm() + s.grads[n - 1].sq_norm();
    assert!(norm > 0.0);
}

#[test]
fn checkpoint_round_trip_predicts_identically() {
    let fx = synthetic(200);
    let data = Dataset { heatmaps: &fx.heatmaps, labels: &fx.labels, prior: Some(&fx.prior) };
    let out = train(Network::new(small_model(Variant::Cnn, true)).unwrap(), &quick_train(), &fx.train, &fx.val, &data).unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&out.network, out.steps, &mut buf).unwrap();
    let (loaded, steps) = read_checkpoint(&buf[..]).unwrap();
    assert_eq!(steps, out.steps);
    let day = fx.heatmaps.day(150);
    let a = predict_map(&out.network, day, &fx.heatmaps, Some(&fx.prior)).unwrap();
    let b = predict_map(&loaded, day, &fx.heatmaps, Some(&fx.prior)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, predict_map(&loaded, day, &fx.heatmaps, Some(&fx.prior)).unwrap());
}

#[test]
fn prediction_needs_a_full_window() {
    let fx = synthetic(60);
    let net = Network::new(small_model(Variant::CnnLstm, true)).unwrap();
    let err = predict_map(&net, fx.heatmaps.day(3), &fx.heatmaps, Some(&fx.prior)).unwrap_err();
    assert!(matches!(err, Error::InsufficientHistory(_)));
    let err = predict_map(&net, fx.heatmaps.last_day() + Days::new(1), &fx.heatmaps, Some(&fx.prior)).unwrap_err();
    assert!(matches!(err, Error::InsufficientHistory(_)));
}

#[test]
fn overlapping_ranges_are_rejected() {
    let fx = synthetic(120);
    let data = Dataset { heatmaps: &fx.heatmaps, labels: &fx.labels, prior: Some(&fx.prior) };
    let net = Network::new(small_model(Variant::Cnn, true)).unwrap();
    let err = train(net, &quick_train(), &fx.train, &fx.train, &data).unwrap_err();
    assert!(err.is_validation());
}

#[test]
fn cnn_and_cnn_lstm_checkpoints_differ() {
    let a = Network::new(small_model(Variant::Cnn, true)).unwrap();
    let b = Network::new(small_model(Variant::CnnLstm, true)).unwrap();
    let (mut ba, mut bb) = (Vec::new(), Vec::new());
    write_checkpoint(&a, 0, &mut ba).unwrap();
    write_checkpoint(&b, 0, &mut bb).unwrap();
    assert_ne!(ba, bb);
    assert_eq!(read_checkpoint(&ba[..]).unwrap().0, a);
    assert_eq!(read_checkpoint(&bb[..]).unwrap().0, b);
}
