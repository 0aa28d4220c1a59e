//! Runs, sweeps and artifacts.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use super::task::{Evaluation, Reconstruction, TaskData};
use super::{ExperimentConfig, HarnessError, ResultRecord, Task};
use crate::formats::{save_checkpoint, write_curve, write_image, write_table, write_voxels, Table};
use crate::models::{sample_activation, LearnedActivation, Model};
use crate::training::{train, EpochStats};

/// Learned activations of every hidden layer at one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSnapshot {
    pub epoch: usize,
    pub layers: Vec<Vec<LearnedActivation>>,
}

/// A trained model with everything observed along the way.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub seed: u64,
    pub model: Model,
    pub curve: Vec<EpochStats>,
    /// Task headline metric where it was evaluated during training.
    pub metric_curve: Vec<Option<f64>>,
    /// At epochs `0`, `E/2` and `E` for models with learned activations.
    pub snapshots: Vec<ActivationSnapshot>,
    pub evaluation: Evaluation,
    pub wall_seconds: f64,
}

/// A validated config with its task data built once and shared by seeds.
#[derive(Debug, Clone)]
pub struct Prepared {
    cfg: ExperimentConfig,
    data: Arc<TaskData>,
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl Prepared {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        Ok(Self {
            data: Arc::new(TaskData::build(cfg)?),
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn data(&self) -> &TaskData {
        &self.data
    }

    /// Trains one seed without touching the disk.
    pub fn train(&self, seed: u64) -> Result<TrainedRun, HarnessError> {
        let start = Instant::now();
        let cfg = &self.cfg;
        let mut model = Model::build(&cfg.model_spec(), seed)?;
        let objective = self.data.objective(&model)?;
        let schedule = cfg.schedule()?;
        let epochs = cfg.train.epochs;
        let mid = epochs / 2;
        let learned = !model.learned_activations().is_empty();
        let mut snapshots = Vec::new();
        let mut metric_curve = Vec::with_capacity(epochs);
        let mut eval_error = None;
        let curve = train(&mut model, objective.as_ref(), &schedule, |stats, m| {
            if learned && (stats.epoch == 0 || stats.epoch == mid) {
                snapshots.push(ActivationSnapshot {
                    epoch: stats.epoch,
                    layers: m.learned_activations().into_iter().map(<[_]>::to_vec).collect(),
                });
            }
            let every = cfg.train.eval_every;
            let value = if every > 0 && stats.epoch % every == 0 && eval_error.is_none() {
                match self.data.evaluate_model(m) {
                    Ok(e) => headline(cfg.task, &e),
                    Err(e) => {
                        eval_error = Some(e);
                        None
                    }
                }
            } else {
                None
            };
            metric_curve.push(value);
        })
        .map_err(|source| HarnessError::Run {
            task: cfg.task,
            seed,
            source,
        })?;
        if let Some(e) = eval_error {
            return Err(e);
        }
        if learned {
            snapshots.push(ActivationSnapshot {
                epoch: epochs,
                layers: model.learned_activations().into_iter().map(<[_]>::to_vec).collect(),
            });
        }
        let evaluation = self.data.evaluate_model(&model)?;
        Ok(TrainedRun {
            seed,
            model,
            curve,
            metric_curve,
            snapshots,
            evaluation,
            wall_seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Directory of all seeds of this config, relative to `out_dir`.
    pub fn config_dir(&self) -> PathBuf {
        PathBuf::from(self.cfg.run_name())
    }

    /// Trains one seed and writes its artifacts under
    /// `out_dir/<task>-<model>-<hash>/seed-<seed>/`.
    pub fn run(&self, seed: u64) -> Result<ResultRecord, HarnessError> {
        let trained = self.train(seed)?;
        let rel = self.config_dir().join(format!("seed-{seed}"));
        let dir = self.cfg.out_dir.join(&rel);
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let artifacts = self.write_artifacts(&trained, &dir)?;
        Ok(ResultRecord {
            config_hash: self.cfg.hash(),
            task: self.cfg.task,
            model: self.cfg.model.kind,
            seed,
            metrics: trained.evaluation.report,
            final_loss: trained.curve.last().map_or(f64::NAN, |s| s.loss),
            epochs: trained.curve.len(),
            param_count: trained.model.param_count(),
            wall_seconds: trained.wall_seconds,
            run_dir: rel,
            artifacts,
            extras: self.data.extras()?,
        })
    }

    fn write_artifacts(&self, run: &TrainedRun, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        let mut files = vec![PathBuf::from("curve.csv"), PathBuf::from("checkpoint.nfck")];
        write_curve(
            dir.join("curve.csv"),
            &run.curve,
            self.cfg.task.headline().name(),
            &run.metric_curve,
        )?;
        save_checkpoint(&run.model, dir.join("checkpoint.nfck"))?;
        match &run.evaluation.reconstruction {
            Reconstruction::Image(img) => {
                let ext = if img.channels() == 1 { "pgm" } else { "ppm" };
                let name = PathBuf::from(format!("reconstruction.{ext}"));
                write_image(img, dir.join(&name))?;
                files.push(name);
                let truth = match self.data.as_ref() {
                    TaskData::Image { clean, .. } => clean,
                    TaskData::Ct { phantom, .. } => phantom,
                    _ => unreachable!("image reconstruction for a non-image task"),
                };
                let name = PathBuf::from(format!("target.{ext}"));
                write_image(truth, dir.join(&name))?;
                files.push(name);
                if let TaskData::Ct { sinogram, .. } = self.data.as_ref() {
                    let mut t = Table::new(&["angle", "bin", "value"]);
                    for (a, row) in sinogram.angles.iter().zip(sinogram.values.rows()) {
                        for (b, v) in row.iter().enumerate() {
                            t.push(vec![*a, b as f64, *v]);
                        }
                    }
                    write_table(dir.join("sinogram.csv"), &t)?;
                    files.push("sinogram.csv".into());
                }
            }
            Reconstruction::Volume(grid) => {
                write_voxels(dir.join("volume.csv"), grid)?;
                files.push("volume.csv".into());
            }
            Reconstruction::Field {
                grid,
                predicted,
                exact,
            } => {
                let mut t = Table::new(&["x", "t", "u", "exact"]);
                for ((r, u), e) in grid.rows().into_iter().zip(predicted).zip(exact) {
                    t.push(vec![r[0], r[1], *u, *e]);
                }
                write_table(dir.join("field.csv"), &t)?;
                files.push("field.csv".into());
            }
        }
        for p in dump_activation_traces(&run.snapshots, dir)? {
            files.push(p.strip_prefix(dir).map(Path::to_path_buf).unwrap_or(p));
        }
        Ok(files)
    }
}

fn headline(task: Task, e: &Evaluation) -> Option<f64> {
    let m = &e.report;
    match task.headline() {
        super::Headline::Psnr => m.psnr_db,
        super::Headline::Iou => m.iou,
        super::Headline::RelErr => m.rel_err,
    }
}

pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<ResultRecord, HarnessError> {
    Prepared::new(cfg)?.run(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    /// One record per seed, in the config's seed order.
    pub records: Vec<ResultRecord>,
    /// Index into `records` of the best seed under the task's ordering.
    pub best: usize,
}

impl SweepOutcome {
    pub fn best(&self) -> &ResultRecord {
        &self.records[self.best]
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::InvalidConfig(format!("thread pool: {e}")))
}

fn best_index(task: Task, records: &[ResultRecord]) -> usize {
    let h = task.headline();
    let mut best = 0;
    for (i, r) in records.iter().enumerate().skip(1) {
        let cur = records[best].headline_value();
        let v = r.headline_value();
        if cur.is_nan() && !v.is_nan() || h.better(v, cur) {
            best = i;
        }
    }
    best
}

/// Runs every seed (up to `jobs` in parallel) and writes all records to
/// `results.jsonl` in the config directory.
pub fn run_seed_sweep(cfg: &ExperimentConfig, jobs: usize) -> Result<SweepOutcome, HarnessError> {
    let prepared = Prepared::new(cfg)?;
    let records = pool(jobs)?
        .install(|| cfg.seeds.par_iter().map(|&s| prepared.run(s)).collect::<Vec<_>>())
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let path = cfg.out_dir.join(prepared.config_dir()).join("results.jsonl");
    let file = std::fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    crate::formats::write_results(&records, std::io::BufWriter::new(file))?;
    Ok(SweepOutcome {
        best: best_index(cfg.task, &records),
        records,
    })
}

/// One row of a sweep table: the swept value and the best seed's metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub best: ResultRecord,
}

fn write_sweep(path: &Path, param: &str, task: Task, rows: &[SweepRow]) -> Result<(), HarnessError> {
    let metric = task.headline().name();
    let mut t = Table::new(&[param, metric, "ssim", "seed"]);
    for r in rows {
        t.rows.push(vec![
            Some(r.value),
            Some(r.best.headline_value()),
            r.best.metrics.ssim,
            Some(r.best.seed as f64),
        ]);
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    write_table(path, &t)?;
    Ok(())
}

/// Seed sweep at each learning rate. Rows are sorted by learning rate and
/// written to `lr_sweep-<task>-<model>.csv` in the output directory.
pub fn run_lr_sweep(cfg: &ExperimentConfig, lrs: &[f64], jobs: usize) -> Result<Vec<SweepRow>, HarnessError> {
    if lrs.is_empty() {
        return Err(HarnessError::InvalidConfig("learning-rate list is empty".into()));
    }
    let mut lrs = lrs.to_vec();
    lrs.sort_by(f64::total_cmp);
    lrs.dedup();
    let mut rows = Vec::with_capacity(lrs.len());
    for lr in lrs {
        let mut c = cfg.clone();
        c.train.lr = lr;
        let out = run_seed_sweep(&c, jobs)?;
        rows.push(SweepRow {
            value: lr,
            best: out.best().clone(),
        });
    }
    let path = cfg.out_dir.join(format!("lr_sweep-{}-{}.csv", cfg.task, cfg.model.kind));
    write_sweep(&path, "lr", cfg.task, &rows)?;
    Ok(rows)
}

/// Super-resolution at each downsampling factor, one row per factor in the
/// given order, written to `scale_sweep-<task>-<model>.csv`.
pub fn run_scale_sweep(cfg: &ExperimentConfig, factors: &[usize], jobs: usize) -> Result<Vec<SweepRow>, HarnessError> {
    if !matches!(cfg.task, Task::Sisr | Task::Misr) {
        return Err(HarnessError::InvalidConfig(format!(
            "scale sweeps need the sisr or misr task, got {}",
            cfg.task
        )));
    }
    if factors.is_empty() {
        return Err(HarnessError::InvalidConfig("factor list is empty".into()));
    }
    let configs = factors
        .iter()
        .map(|&f| {
            let mut c = cfg.clone();
            c.data.factor = f;
            c.validate().map(|_| c)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::with_capacity(configs.len());
    for c in configs {
        let out = run_seed_sweep(&c, jobs)?;
        rows.push(SweepRow {
            value: c.data.factor as f64,
            best: out.best().clone(),
        });
    }
    let path = cfg.out_dir.join(format!("scale_sweep-{}-{}.csv", cfg.task, cfg.model.kind));
    write_sweep(&path, "factor", cfg.task, &rows)?;
    Ok(rows)
}

/// One CSV per hidden layer (and subnetwork, when a layer has several):
/// `h` on `[-3, 3]` and one `epoch_<n>` column per snapshot. Returns the
/// written paths; a model without learned activations writes nothing.
pub fn dump_activation_traces(snapshots: &[ActivationSnapshot], dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let Some(first) = snapshots.first().filter(|s| !s.layers.is_empty()) else {
        log::info!("model has no learned activations; no activation traces written");
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for (l, layer) in first.layers.iter().enumerate() {
        for r in 0..layer.len() {
            let name = if layer.len() == 1 {
                format!("activations_layer{l}.csv")
            } else {
                format!("activations_layer{l}_sub{r}.csv")
            };
            let mut header = vec!["h".to_string()];
            header.extend(snapshots.iter().map(|s| format!("epoch_{}", s.epoch)));
            let columns: Vec<Vec<(f64, f64)>> = snapshots.iter().map(|s| sample_activation(&s.layers[l][r])).collect();
            let mut t = Table {
                header,
                rows: Vec::new(),
            };
            for i in 0..columns[0].len() {
                let mut row = vec![Some(columns[0][i].0)];
                row.extend(columns.iter().map(|c| Some(c[i].1)));
                t.rows.push(row);
            }
            let path = dir.join(name);
            write_table(&path, &t)?;
            out.push(path);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;
    use crate::operators::ImageKind;

    fn smoke(task: Task, dir: &Path) -> ExperimentConfig {
        let mut c = ExperimentConfig::defaults(task);
        c.out_dir = dir.to_path_buf();
        c.train.epochs = 6;
        c.train.eval_every = 2;
        c.model.width = 8;
        c.model.fourier_features = c.model.fourier_features.min(4);
        c.data.height = 16;
        c.data.width = 16;
        c.data.resolution = 8;
        c.data.angles = 4;
        c.data.n_ic = 16;
        c.data.n_bc = 8;
        c.data.n_col = 32;
        c.data.eval_nx = 8;
        c.data.eval_nt = 4;
        c.seeds = vec![0, 1];
        c
    }

    #[test]
    fn checker_smoke_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = smoke(Task::Image, dir.path());
        c.data.image = ImageKind::Checker;
        c.data.height = 8;
        c.data.width = 8;
        c.train.epochs = 50;
        let r = run_experiment(&c, 0).unwrap();
        assert!(r.metrics.psnr_db.unwrap().is_finite());
        assert_eq!(r.epochs, 50);
        for a in &r.artifacts {
            assert!(dir.path().join(&r.run_dir).join(a).exists(), "{}", a.display());
        }
        let curve = std::fs::read_to_string(dir.path().join(&r.run_dir).join("curve.csv")).unwrap();
        assert_eq!(curve.lines().count(), 51);
    }

    #[test]
    fn every_task_runs_and_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        for task in Task::ALL {
            let c = smoke(task, dir.path());
            let out = run_seed_sweep(&c, 2).unwrap();
            assert_eq!(out.records.len(), 2);
            let best = out.best().headline_value();
            for r in &out.records {
                assert!(!task.headline().better(r.headline_value(), best));
                for a in &r.artifacts {
                    assert!(dir.path().join(&r.run_dir).join(a).exists(), "{task}: {}", a.display());
                }
            }
            let jsonl = dir.path().join(c.run_name()).join("results.jsonl");
            assert_eq!(crate::formats::read_results(jsonl).unwrap(), out.records);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let a = run_experiment(&smoke(Task::Denoise, d1.path()), 3).unwrap();
        let b = run_experiment(&smoke(Task::Denoise, d2.path()), 3).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.final_loss.to_bits(), b.final_loss.to_bits());
        let ca = std::fs::read(d1.path().join(&a.run_dir).join("checkpoint.nfck")).unwrap();
        let cb = std::fs::read(d2.path().join(&b.run_dir).join("checkpoint.nfck")).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn traces_have_three_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        let c = smoke(Task::Image, dir.path());
        let run = Prepared::new(&c).unwrap().train(0).unwrap();
        let epochs: Vec<_> = run.snapshots.iter().map(|s| s.epoch).collect();
        assert_eq!(epochs, vec![0, 3, 6]);
        let files = dump_activation_traces(&run.snapshots, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let text = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(text.lines().next().unwrap(), "h,epoch_0,epoch_3,epoch_6");
        let at_one = text.lines().find(|l| l.starts_with("1,")).unwrap();
        let v: f64 = at_one.split(',').nth(1).unwrap().parse().unwrap();
        assert!((v - 0.7).abs() < 1e-12);

        let mut s = smoke(Task::Image, dir.path());
        s.model.kind = ModelKind::Siren;
        let run = Prepared::new(&s).unwrap().train(0).unwrap();
        assert!(run.snapshots.is_empty());
        assert!(dump_activation_traces(&run.snapshots, dir.path()).unwrap().is_empty());
    }

    #[test]
    fn sweeps() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = smoke(Task::Sisr, dir.path());
        c.seeds = vec![0];
        let rows = run_lr_sweep(&c, &[1e-2, 1e-3], 1).unwrap();
        assert_eq!(rows.iter().map(|r| r.value).collect::<Vec<_>>(), vec![1e-3, 1e-2]);
        let csv = dir.path().join("lr_sweep-sisr-nestnet.csv");
        assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 3);
        let rows = run_scale_sweep(&c, &[1, 2], 1).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(run_scale_sweep(&c, &[3], 1).is_err());
        let mut img = c.clone();
        img.task = Task::Image;
        assert!(run_scale_sweep(&img, &[2], 1).is_err());
    }

    #[test]
    fn factor_one_equals_plain_fit() {
        let dir = tempfile::tempdir().unwrap();
        let mut sr = smoke(Task::Sisr, dir.path());
        sr.data.factor = 1;
        let mut fit = sr.clone();
        fit.task = Task::Image;
        fit.train.lr = sr.train.lr;
        fit.model = sr.model.clone();
        let a = Prepared::new(&sr).unwrap().train(0).unwrap();
        let b = Prepared::new(&fit).unwrap().train(0).unwrap();
        assert_eq!(a.evaluation.report.psnr_db, b.evaluation.report.psnr_db);
    }

    #[test]
    fn single_seed_best_is_that_seed() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = smoke(Task::Occupancy, dir.path());
        c.seeds = vec![4];
        let out = run_seed_sweep(&c, 1).unwrap();
        assert_eq!(out.best().seed, 4);
    }
}
