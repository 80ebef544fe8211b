//! Subcommand implementations. Every command reads its inputs from and
//! writes its outputs to the run's work directory.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use quake_core::catalog::{
    build_labels, parse_catalog, rasterize_daily, split_days, write_catalog, Catalog, CatalogFormat, DayRange,
    DaySplit, HeatMapSeq, LabelTensor,
};
use quake_core::eval::{evaluate, pool_samples, write_metrics_csv, write_sweep_csv, MetricsReport};
use quake_core::model::{load_checkpoint, predict_days, save_checkpoint, train, Dataset, Network, TrainLog};
use quake_core::prior::{combine_residual, fit_prior, prior_logits, PriorLogits, PriorMap};
use quake_core::rtl::{export_features, rtl_grid};
use quake_core::synth::generate;

use crate::config::{RunConfig, SplitName};
use crate::error::{CliError, CliResult};
use crate::provenance::write_provenance;

pub const EVENTS: &str = "events.csv";
pub const HEATMAPS: &str = "heatmaps.qgrd";
pub const HEATMAPS_META: &str = "heatmaps.meta";
pub const SUMMARY: &str = "summary.txt";
pub const FEATURES: &str = "rtl_features.csv";
pub const PRIOR_RASTER: &str = "prior.qgrd";
pub const PRIOR_SIDECAR: &str = "prior.txt";
pub const CHECKPOINT: &str = "model.ckpt";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const METRICS: &str = "metrics.csv";
pub const SWEEP_MODEL: &str = "sweep_model.csv";
pub const SWEEP_PRIOR: &str = "sweep_prior.csv";
pub const SYNTH_REPORT: &str = "synth_report.txt";

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(CliError::io(path))
}

fn open(path: &Path, producer: &'static str) -> CliResult<BufReader<File>> {
    if !path.exists() {
        return Err(CliError::MissingInput { path: path.to_path_buf(), producer });
    }
    File::open(path).map(BufReader::new).map_err(CliError::io(path))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(CliError::io(path))
}

fn prepare_dir(cfg: &RunConfig) -> CliResult<&Path> {
    fs::create_dir_all(&cfg.work_dir).map_err(CliError::io(&cfg.work_dir))?;
    Ok(&cfg.work_dir)
}

/// Counts reported by `ingest`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IngestSummary {
    pub events: usize,
    pub in_grid: usize,
    pub m5: usize,
    pub m6: usize,
    pub start_day: NaiveDate,
    pub days: usize,
}

impl IngestSummary {
    pub fn render(&self) -> String {
        format!(
            "events = {}\nin_grid = {}\nm_ge_5 = {}\nm_ge_6 = {}\nstart_day = {}\ndays = {}\n",
            self.events, self.in_grid, self.m5, self.m6, self.start_day, self.days
        )
    }
}

/// Writes a synthetic catalog to the configured catalog path.
pub fn cmd_synth(cfg: &RunConfig) -> CliResult<PathBuf> {
    let dir = prepare_dir(cfg)?;
    let synth = cfg.synth_config();
    let (catalog, report) = generate(&synth)?;
    let path = cfg.catalog_path();
    let mut w = create(&path)?;
    write_catalog(&catalog, &mut w)?;
    finish(w, &path)?;

    let report_path = dir.join(SYNTH_REPORT);
    let mut w = create(&report_path)?;
    write!(
        w,
        "events = {}\nplanted = {}\nskipped = {}\n",
        catalog.len(),
        report.planted,
        report.skipped
    )
    .map_err(CliError::io(&report_path))?;
    finish(w, &report_path)?;
    write_provenance(cfg, "synth", &[path.clone(), report_path])?;
    Ok(path)
}

/// Parses the catalog, rasterizes its full day span and writes a summary.
pub fn cmd_ingest(cfg: &RunConfig) -> CliResult<IngestSummary> {
    let dir = prepare_dir(cfg)?.to_path_buf();
    let catalog = parse_catalog(open(&cfg.catalog_path(), "synth")?, &cfg.catalog_format())?;
    let (first, last) = catalog.day_span().ok_or(quake_core::Error::EmptyCatalog)?;
    let days = (last - first).num_days() as usize + 1;
    let maps = rasterize_daily(&catalog, &cfg.grid, first, days)?;

    let summary = IngestSummary {
        events: catalog.len(),
        in_grid: catalog.events().iter().filter(|e| cfg.grid.project(e.lat, e.lon).is_some()).count(),
        m5: catalog.count_at_least(5.0),
        m6: catalog.count_at_least(6.0),
        start_day: first,
        days,
    };

    let events = dir.join(EVENTS);
    let mut w = create(&events)?;
    write_catalog(&catalog, &mut w)?;
    finish(w, &events)?;

    let raster = dir.join(HEATMAPS);
    let mut w = create(&raster)?;
    maps.write_to(&mut w)?;
    finish(w, &raster)?;

    let meta = dir.join(HEATMAPS_META);
    fs::write(
        &meta,
        format!("start_day = {}\ndays = {}\nn_rows = {}\nn_cols = {}\n", first, days, maps.n_rows, maps.n_cols),
    )
    .map_err(CliError::io(&meta))?;

    let text = dir.join(SUMMARY);
    fs::write(&text, summary.render()).map_err(CliError::io(&text))?;
    write_provenance(cfg, "ingest", &[events, raster, meta, text])?;
    Ok(summary)
}

/// Inputs shared by the commands downstream of `ingest`.
pub struct Prepared {
    pub catalog: Catalog,
    pub heatmaps: HeatMapSeq,
    pub labels: LabelTensor,
    pub split: DaySplit,
}

fn read_meta(path: &Path) -> CliResult<NaiveDate> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    text.lines()
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == "start_day")
        .and_then(|(_, v)| v.trim().parse().ok())
        .ok_or_else(|| CliError::Core(quake_core::Error::Format(format!("{}: no start_day", path.display()))))
}

/// Loads the ingested catalog and heat maps, rebuilds labels for every
/// raster day and splits the span chronologically.
pub fn prepare(cfg: &RunConfig) -> CliResult<Prepared> {
    let dir = &cfg.work_dir;
    let catalog = parse_catalog(open(&dir.join(EVENTS), "ingest")?, &CatalogFormat::default())?;
    open(&dir.join(HEATMAPS_META), "ingest")?;
    let start = read_meta(&dir.join(HEATMAPS_META))?;
    let heatmaps = HeatMapSeq::read_from(&mut open(&dir.join(HEATMAPS), "ingest")?, start)?;
    if (heatmaps.n_rows, heatmaps.n_cols) != (cfg.grid.n_rows, cfg.grid.n_cols) {
        return Err(CliError::Config(format!(
            "heat maps are {}x{} but the grid is {}x{}; re-run ingest",
            heatmaps.n_rows, heatmaps.n_cols, cfg.grid.n_rows, cfg.grid.n_cols
        )));
    }
    let days: Vec<NaiveDate> = (0..heatmaps.days).map(|d| start + Days::new(d as u64)).collect();
    let labels = build_labels(&catalog, &cfg.grid, &cfg.labels, &days)?;
    let split = split_days(start, heatmaps.days, cfg.split, cfg.gap_days)?;
    Ok(Prepared { catalog, heatmaps, labels, split })
}

impl Prepared {
    pub fn range(&self, name: SplitName) -> DayRange {
        match name {
            SplitName::Train => self.split.train,
            SplitName::Val => self.split.val,
            SplitName::Test => self.split.test,
        }
    }

    pub fn fit_prior(&self, cfg: &RunConfig) -> CliResult<PriorMap> {
        let train = self.split.train;
        Ok(fit_prior(&self.labels.filter_days(|d| train.contains(d)), cfg.prior_alpha)?)
    }
}

fn write_prior(dir: &Path, prior: &PriorMap) -> CliResult<[PathBuf; 2]> {
    let raster = dir.join(PRIOR_RASTER);
    let mut w = create(&raster)?;
    prior.write_raster(&mut w)?;
    finish(w, &raster)?;
    let sidecar = dir.join(PRIOR_SIDECAR);
    let mut w = create(&sidecar)?;
    prior.write_sidecar(&mut w)?;
    finish(w, &sidecar)?;
    Ok([raster, sidecar])
}

/// RTL features for every raster day and the training-split prior.
pub fn cmd_features(cfg: &RunConfig) -> CliResult<usize> {
    let prep = prepare(cfg)?;
    let dir = prepare_dir(cfg)?;
    let mut features = rtl_grid(&prep.catalog, &cfg.grid, &prep.labels.reference_days, &cfg.rtl)?;
    if cfg.rtl_standardize {
        features.standardize();
    }
    let path = dir.join(FEATURES);
    let mut w = create(&path)?;
    let rows = export_features(&features, &prep.labels, &mut w)?;
    finish(w, &path)?;
    let [raster, sidecar] = write_prior(dir, &prep.fit_prior(cfg)?)?;
    write_provenance(cfg, "features", &[path, raster, sidecar])?;
    Ok(rows)
}

fn logits_for(cfg: &RunConfig, prior: &PriorMap) -> PriorLogits {
    prior_logits(prior, cfg.prior_c, cfg.prior_mode)
}

/// Trains on the training split, selecting on the validation split.
pub fn cmd_train(cfg: &RunConfig) -> CliResult<TrainLog> {
    let prep = prepare(cfg)?;
    let dir = prepare_dir(cfg)?;
    let prior = prep.fit_prior(cfg)?;
    let logits = logits_for(cfg, &prior);
    let data = Dataset {
        heatmaps: &prep.heatmaps,
        labels: &prep.labels,
        prior: Some(&logits),
    };
    let network = Network::new(cfg.model.clone())?;
    let outcome = train(network, &cfg.train, &prep.split.train, &prep.split.val, &data)?;
    for e in &outcome.log.epochs {
        eprintln!(
            "epoch {:>3}  loss {:.6}  val roc {:.4}  val pr {:.4}",
            e.epoch, e.train_loss, e.val_roc_auc, e.val_pr_auc
        );
    }

    let ckpt = dir.join(CHECKPOINT);
    save_checkpoint(&outcome.network, outcome.steps, &ckpt)?;
    let log = dir.join(TRAIN_LOG);
    let mut w = create(&log)?;
    outcome.log.write_csv(&mut w)?;
    finish(w, &log)?;
    let [raster, sidecar] = write_prior(dir, &prior)?;
    write_provenance(cfg, "train", &[ckpt, log, raster, sidecar])?;
    Ok(outcome.log)
}

/// Model and prior-baseline metrics on one split.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub model: MetricsReport,
    pub prior: MetricsReport,
    pub days: usize,
}

/// Scores the trained model and the prior baseline on the same
/// (day, cell) samples of the configured split.
pub fn cmd_evaluate(cfg: &RunConfig) -> CliResult<Evaluation> {
    let prep = prepare(cfg)?;
    let dir = prepare_dir(cfg)?.to_path_buf();
    let (network, _) = load_checkpoint(&checkpoint_path(&dir)?)?;
    let prior = PriorMap::read_sidecar(open(&dir.join(PRIOR_SIDECAR), "train")?)?;
    let logits = logits_for(cfg, &prior);
    let data = Dataset {
        heatmaps: &prep.heatmaps,
        labels: &prep.labels,
        prior: Some(&logits),
    };

    let range = prep.range(cfg.eval_split);
    let rows = data.usable_days(&range, network.config().window_days);
    if rows.is_empty() {
        return Err(quake_core::Error::InsufficientHistory(format!(
            "no {} day in {}..{} has valid labels and {} days of history",
            cfg.eval_split.as_str(),
            range.start,
            range.end,
            network.config().window_days
        ))
        .into());
    }
    let keep: HashSet<NaiveDate> = rows.iter().map(|&i| prep.labels.reference_days[i]).collect();
    let labels = prep.labels.filter_days(|d| keep.contains(&d));

    let model_maps = predict_days(&network, &data, &rows)?;
    let prior_map = combine_residual(&logits, &vec![0.0; 2 * logits.cells()])?;
    let prior_maps = vec![prior_map; rows.len()];

    let model = evaluate(&pool_samples(&model_maps, &labels)?, &cfg.thresholds)?;
    let baseline = evaluate(&pool_samples(&prior_maps, &labels)?, &cfg.thresholds)?;

    let metrics = dir.join(METRICS);
    let mut w = create(&metrics)?;
    write_metrics_csv(&mut w, &[("model", &model), ("prior", &baseline)])?;
    finish(w, &metrics)?;
    let mut outputs = vec![metrics];
    for (name, report) in [(SWEEP_MODEL, &model), (SWEEP_PRIOR, &baseline)] {
        let path = dir.join(name);
        let mut w = create(&path)?;
        write_sweep_csv(&mut w, &report.rows)?;
        finish(w, &path)?;
        outputs.push(path);
    }
    write_provenance(cfg, "evaluate", &outputs)?;
    Ok(Evaluation { model, prior: baseline, days: rows.len() })
}

fn checkpoint_path(dir: &Path) -> CliResult<PathBuf> {
    let path = dir.join(CHECKPOINT);
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingInput { path, producer: "train" })
    }
}
