//! Pipeline stages behind the CLI subcommands.
//!
//! Every artifact lives under `<output_dir>/<config-hash>/<stage>/...`, so
//! different configurations never clobber each other, and each stage is
//! deterministic given the configuration: rerunning with unchanged inputs
//! rewrites byte-identical artifacts (wall-clock figures are confined to
//! the training log's `wall_ms` column and the `timings.json` sidecars).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};

use geoparam_core::dataset::{
    crop_patches, generate_conceptual, to_tanh_range, Dataset, PATCH_SIZE,
};
use geoparam_core::field::Field;
use geoparam_core::flow::{simulate, FlowProblem, PermField, ProblemKind, SimConfig};
use geoparam_core::pca::PcaModel;
use geoparam_core::rng::SeedRng;
use geoparam_core::tensor::Tensor;
use geoparam_core::uq::{
    breakthrough_density, curve_stats, point_histogram, propagate, pvi_grid, CurveStats,
    DataSource, DensityEstimate, EnsembleResult, PcaSource, SourceTag,
};
use geoparam_core::wgan::{
    self, checkpoint_entries, init_networks, GanModel, GanSpec, GanSource, TrainConfig,
    TrainHooks, TrainRecord, Trained,
};

use crate::config::PipelineConfig;
use crate::gpck::{self, TensorEntry};
use crate::gpds;
use crate::pgm;

/// Points of the shared water-cut PVI grid.
const CURVE_GRID_POINTS: usize = 200;

/// A resolved configuration bound to its artifact directory.
pub struct Workspace {
    pub cfg: PipelineConfig,
    raw_config: String,
    root: PathBuf,
}

impl Workspace {
    pub fn new(cfg: PipelineConfig, raw_config: String) -> Self {
        let root = Path::new(&cfg.output_dir).join(cfg.hash());
        Workspace {
            cfg,
            raw_config,
            root,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Create the run directory and echo the configuration into it.
    fn ensure_root(&self) -> Result<()> {
        fs::create_dir_all(&self.root)
            .with_context(|| format!("cannot create {}", self.root.display()))?;
        fs::write(self.root.join("config.txt"), &self.raw_config)?;
        fs::write(self.root.join("config.effective.txt"), self.cfg.canonical())?;
        Ok(())
    }

    fn stage_dir(&self, parts: &[&str]) -> Result<PathBuf> {
        let mut dir = self.root.clone();
        for p in parts {
            dir = dir.join(p);
        }
        fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(dir)
    }

    pub fn dataset_pack(&self) -> PathBuf {
        self.root.join("dataset").join("pack.gpds")
    }

    pub fn pca_model(&self) -> PathBuf {
        self.root.join("pca").join("model.gpck")
    }

    pub fn gan_checkpoint(&self) -> PathBuf {
        self.root.join("gan").join("checkpoint.gpck")
    }

    pub fn propagate_dir(&self, problem: ProblemKind, source: SourceTag) -> PathBuf {
        self.root
            .join("propagate")
            .join(problem.name())
            .join(source.name())
    }

    pub fn report_path(&self) -> PathBuf {
        self.root.join("report").join("report.md")
    }

    /// Fail with an actionable message when a prerequisite artifact of
    /// another subcommand is missing.
    fn prerequisite(&self, path: &Path, producer: &str) -> Result<PathBuf> {
        if !path.exists() {
            bail!(
                "missing {}; run `geoparam {producer}` first",
                path.display()
            );
        }
        Ok(path.to_path_buf())
    }

    /// Stage-specific seed stream derived from the master seed.
    fn sub_seed(&self, label: &str) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325 ^ self.cfg.seed.wrapping_mul(0x9e3779b97f4a7c15);
        for b in label.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    fn sim_config(&self) -> SimConfig {
        SimConfig {
            t_end: self.cfg.flow_t_end,
            snapshot_times: vec![self.cfg.snapshot_time()],
            cfl_factor: self.cfg.flow_cfl_factor,
            cg_tol: self.cfg.flow_cg_tol,
            cg_max_factor: self.cfg.flow_cg_max_factor,
        }
    }

    fn gan_spec(&self, nx: usize, ny: usize) -> Result<GanSpec> {
        Ok(GanSpec::dcgan(
            self.cfg.zdim,
            &self.cfg.gan_gen_channels,
            &self.cfg.gan_critic_channels,
            [1, ny, nx],
            self.cfg.gan_leak,
            self.cfg.gan_batchnorm,
        )?)
    }

    fn load_dataset(&self) -> Result<Dataset> {
        let path = self.prerequisite(&self.dataset_pack(), "gen-data")?;
        gpds::read_pack(&path)
    }

    fn load_pca(&self) -> Result<PcaModel> {
        let path = self.prerequisite(&self.pca_model(), "fit-pca")?;
        let entries = gpck::read_entries(&path)?;
        let nx = gpck::find(&entries, "nx")?.scalar()? as usize;
        let ny = gpck::find(&entries, "ny")?.scalar()? as usize;
        let mean = gpck::find(&entries, "mean")?.values.clone();
        let eigvals = gpck::find(&entries, "eigvals")?.values.clone();
        let eigvecs = gpck::find(&entries, "eigvecs")?.values.clone();
        let m = gpck::find(&entries, "m")?.scalar()? as usize;
        let fraction = gpck::find(&entries, "variance_fraction")?.scalar()?;
        Ok(PcaModel::from_parts(
            nx, ny, mean, eigvals, eigvecs, m, fraction,
        )?)
    }

    fn load_gan(&self, nx: usize, ny: usize) -> Result<GanModel> {
        let path = self.prerequisite(&self.gan_checkpoint(), "train-gan")?;
        let entries = gpck::read_entries(&path)?;
        let spec = self.gan_spec(nx, ny)?;
        let mut model = init_networks(&spec, 0)?;
        for (id, param) in model.store.clone().iter() {
            let entry = gpck::find(&entries, &param.name)
                .with_context(|| "checkpoint does not match the configured architecture")?;
            let tensor = Tensor::new(param.value.shape().to_vec(), entry.values.clone())
                .map_err(|e| anyhow!("checkpoint tensor `{}`: {e}", param.name))?;
            model.store.set_value(id, tensor);
        }
        model.iteration = gpck::find(&entries, "iteration")?.scalar()? as u64;
        Ok(model)
    }
}

fn write_csv(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn write_timings(dir: &Path, elapsed_ms: u128) -> Result<()> {
    fs::write(
        dir.join("timings.json"),
        format!("{{\n  \"elapsed_ms\": {elapsed_ms}\n}}\n"),
    )?;
    Ok(())
}

/// Generate the conceptual image, crop the realization dataset, and write
/// the pack plus preview images.
pub fn gen_data(ws: &Workspace) -> Result<()> {
    ws.ensure_root()?;
    let start = Instant::now();
    let dir = ws.stage_dir(&["dataset"])?;

    let img = generate_conceptual(ws.cfg.pattern, ws.sub_seed("conceptual"));
    pgm::write_binary_range(&dir.join("conceptual.pgm"), &img.grid)?;

    let ds = crop_patches(&img, PATCH_SIZE, ws.cfg.dataset_count, ws.sub_seed("crop"))?;
    gpds::write_pack(&ws.dataset_pack(), &ds)?;
    for i in 0..ws.cfg.dataset_preview_pgms.min(ds.len()) {
        pgm::write_binary_range(&dir.join(format!("preview_{i:03}.pgm")), &ds.patch_field(i))?;
    }
    write_timings(&dir, start.elapsed().as_millis())?;
    println!(
        "gen-data: {} patches of {}x{} -> {}",
        ds.len(),
        PATCH_SIZE,
        PATCH_SIZE,
        ws.dataset_pack().display()
    );
    Ok(())
}

/// Fit and truncate the PCA model on a subsample of the dataset.
pub fn fit_pca(ws: &Workspace) -> Result<()> {
    ws.ensure_root()?;
    let start = Instant::now();
    let ds = ws.load_dataset()?;
    let dir = ws.stage_dir(&["pca"])?;

    let n_fit = ws.cfg.pca_fit_subsample.min(ds.len());
    let fit_ds = if n_fit < ds.len() {
        let mut rng = SeedRng::stream(ws.sub_seed("pca.subsample"), 0);
        let idx = rng.sample_without_replacement(ds.len(), n_fit);
        let mut values = Vec::with_capacity(n_fit * ds.patch_len());
        for &i in &idx {
            values.extend_from_slice(ds.patch(i));
        }
        Dataset::new(ds.nx(), ds.ny(), n_fit, values, ds.range())?
    } else {
        ds.clone()
    };

    let model = PcaModel::fit(&fit_ds)?.truncate(ws.cfg.pca_variance_fraction)?;
    if model.m == 0 {
        eprintln!("fit-pca: warning: zero spectrum, retaining no components");
    }

    let m_dim = ds.patch_len();
    let kept = model.kept();
    let mut eigvecs = Vec::with_capacity(kept * m_dim);
    for r in 0..kept {
        eigvecs.extend_from_slice(model.eigenvector(r));
    }
    let entries = vec![
        TensorEntry {
            name: "mean".into(),
            shape: vec![ds.ny(), ds.nx()],
            values: model.mean_field().values().to_vec(),
        },
        TensorEntry {
            name: "eigvals".into(),
            shape: vec![model.eigenvalues().len()],
            values: model.eigenvalues().to_vec(),
        },
        TensorEntry {
            name: "eigvecs".into(),
            shape: vec![kept.max(1), if kept == 0 { 1 } else { m_dim }],
            values: if kept == 0 { vec![0.0] } else { eigvecs },
        },
        TensorEntry {
            name: "m".into(),
            shape: vec![1],
            values: vec![model.m as f64],
        },
        TensorEntry {
            name: "variance_fraction".into(),
            shape: vec![1],
            values: vec![model.variance_fraction],
        },
        TensorEntry {
            name: "nx".into(),
            shape: vec![1],
            values: vec![ds.nx() as f64],
        },
        TensorEntry {
            name: "ny".into(),
            shape: vec![1],
            values: vec![ds.ny() as f64],
        },
    ];
    gpck::write_entries(&ws.pca_model(), &entries)?;

    let total: f64 = model.eigenvalues().iter().sum();
    let mut cum = 0.0;
    write_csv(
        &dir.join("eigvals.csv"),
        "index,eigenvalue,cumulative_fraction",
        model.eigenvalues().iter().enumerate().map(|(i, &v)| {
            cum += v;
            let frac = if total > 0.0 { cum / total } else { 0.0 };
            format!("{i},{v},{frac}")
        }),
    )?;
    write_timings(&dir, start.elapsed().as_millis())?;
    println!(
        "fit-pca: fitted on {} samples, retained m={} of {} eigenpairs ({}% variance)",
        n_fit,
        model.m,
        kept,
        ws.cfg.pca_variance_fraction * 100.0
    );
    Ok(())
}

struct StageHooks {
    start: Instant,
    dir: PathBuf,
    last_print: usize,
}

impl TrainHooks for StageHooks {
    fn now_ms(&mut self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }

    fn on_record(&mut self, record: &TrainRecord) {
        if record.iteration >= self.last_print + 100 || record.iteration == 0 {
            self.last_print = record.iteration;
            eprintln!(
                "train-gan: step {} wasserstein {:.6} diversity {:.4}",
                record.iteration, record.wasserstein, record.diversity
            );
        }
    }

    fn on_checkpoint(&mut self, id: u64, model: &GanModel) {
        let entries: Vec<TensorEntry> = checkpoint_entries(model, &[])
            .into_iter()
            .map(|(name, t)| TensorEntry::from_tensor(name, &t))
            .collect();
        let path = self.dir.join(format!("checkpoint_{id:04}.gpck"));
        if let Err(e) = gpck::write_entries(&path, &entries) {
            eprintln!("train-gan: checkpoint {id} failed: {e}");
        }
    }

    fn on_warning(&mut self, message: &str) {
        eprintln!("train-gan: {message}");
    }
}

/// Train the Wasserstein GAN on the tanh-mapped dataset and store the final
/// checkpoint (parameters, optimizer accumulators, iteration counter) plus
/// the per-step training log.
pub fn train_gan(ws: &Workspace) -> Result<()> {
    ws.ensure_root()?;
    let start = Instant::now();
    let ds = ws.load_dataset()?;
    let dir = ws.stage_dir(&["gan"])?;
    // Training uses a deterministic subsample when the pack is larger than
    // the configured training-set size (0 = use everything).
    let n_train = if ws.cfg.train_subsample == 0 {
        ds.len()
    } else {
        ws.cfg.train_subsample.min(ds.len())
    };
    let train_ds = if n_train < ds.len() {
        let mut rng = SeedRng::stream(ws.sub_seed("train.subsample"), 0);
        let idx = rng.sample_without_replacement(ds.len(), n_train);
        let mut values = Vec::with_capacity(n_train * ds.patch_len());
        for &i in &idx {
            values.extend_from_slice(ds.patch(i));
        }
        Dataset::new(ds.nx(), ds.ny(), n_train, values, ds.range())?
    } else {
        ds.clone()
    };
    let tanh_ds = to_tanh_range(&train_ds)?;
    drop(train_ds);
    drop(ds);

    let spec = ws.gan_spec(tanh_ds.nx(), tanh_ds.ny())?;
    let cfg = TrainConfig {
        clip: ws.cfg.train_clip,
        n_critic: ws.cfg.train_n_critic,
        burnin_critic_iters: ws.cfg.train_burnin_iters,
        burnin_steps: ws.cfg.train_burnin_steps,
        burnin_every: ws.cfg.train_burnin_every,
        batch_size: ws.cfg.train_batch_size,
        generator_iters: ws.cfg.train_generator_iters,
        optimizer: geoparam_core::optim::RmsPropConfig {
            lr: ws.cfg.train_lr,
            rho: ws.cfg.train_rho,
            eps: ws.cfg.train_eps,
        },
        seed: ws.sub_seed("train"),
        checkpoint_every: ws.cfg.train_checkpoint_every,
    };
    let mut hooks = StageHooks {
        start,
        dir: dir.clone(),
        last_print: 0,
    };
    let Trained {
        model,
        log,
        critic_opt,
        generator_opt,
    } = wgan::train(&tanh_ds, &spec, &cfg, &mut hooks)?;

    let entries: Vec<TensorEntry> = checkpoint_entries(&model, &[&critic_opt, &generator_opt])
        .into_iter()
        .map(|(name, t)| TensorEntry::from_tensor(name, &t))
        .collect();
    gpck::write_entries(&ws.gan_checkpoint(), &entries)?;

    write_csv(
        &dir.join("train_log.csv"),
        "iteration,wasserstein_estimate,batch_diversity,wall_ms",
        log.records().iter().map(|r| {
            format!(
                "{},{},{},{}",
                r.iteration, r.wasserstein, r.diversity, r.wall_ms
            )
        }),
    )?;
    write_timings(&dir, start.elapsed().as_millis())?;
    println!(
        "train-gan: {} generator iterations -> {}",
        ws.cfg.train_generator_iters,
        ws.gan_checkpoint().display()
    );
    Ok(())
}

/// Draw realizations from the PCA or GAN parametrization and export them.
pub fn sample(ws: &Workspace) -> Result<()> {
    ws.ensure_root()?;
    let start = Instant::now();
    let source = ws.cfg.sample_source;
    let dir = ws.stage_dir(&["samples", source.name()])?;
    let count = ws.cfg.sample_count;
    let seed = ws.sub_seed("sample");

    let fields: Vec<Field> = match source {
        SourceTag::Pca => {
            let model = ws.load_pca()?;
            (0..count)
                .map(|i| {
                    let mut rng = SeedRng::stream(seed, i as u64 + 1);
                    model.sample_random(&mut rng)
                })
                .collect()
        }
        SourceTag::Gan => {
            let ds = ws.load_dataset()?;
            let model = ws.load_gan(ds.nx(), ds.ny())?;
            let generated = wgan::generate(&model, count, seed)?;
            (0..count).map(|i| generated.patch_field(i)).collect()
        }
        SourceTag::Data => {
            let ds = ws.load_dataset()?;
            let mut rng = SeedRng::stream(seed, 0);
            rng.sample_without_replacement(ds.len(), count.min(ds.len()))
                .into_iter()
                .map(|i| ds.patch_field(i))
                .collect()
        }
    };

    let (nx, ny) = (fields[0].nx(), fields[0].ny());
    let mut values = Vec::with_capacity(fields.len() * nx * ny);
    for f in &fields {
        values.extend_from_slice(f.values());
    }
    gpck::write_entries(
        &dir.join("samples.gpck"),
        &[TensorEntry {
            name: "samples".into(),
            shape: vec![fields.len(), ny, nx],
            values,
        }],
    )?;
    for (i, f) in fields.iter().enumerate() {
        // PCA samples are unclamped; the PGM clamps for display only.
        pgm::write_binary_range(&dir.join(format!("sample_{i:03}.pgm")), f)?;
    }
    write_timings(&dir, start.elapsed().as_millis())?;
    println!(
        "sample: {} {} realizations -> {}",
        fields.len(),
        source.name(),
        dir.display()
    );
    Ok(())
}

fn realization_for_simulate(ws: &Workspace) -> Result<Field> {
    let seed = ws.sub_seed("simulate");
    match ws.cfg.simulate_source {
        SourceTag::Data => {
            let ds = ws.load_dataset()?;
            if ws.cfg.simulate_index >= ds.len() {
                bail!(
                    "simulate.index {} out of range ({} patches)",
                    ws.cfg.simulate_index,
                    ds.len()
                );
            }
            Ok(ds.patch_field(ws.cfg.simulate_index))
        }
        SourceTag::Pca => {
            let model = ws.load_pca()?;
            let mut rng = SeedRng::stream(seed, ws.cfg.simulate_index as u64);
            Ok(model.sample_random(&mut rng))
        }
        SourceTag::Gan => {
            let ds = ws.load_dataset()?;
            let model = ws.load_gan(ds.nx(), ds.ny())?;
            let mut rng = SeedRng::stream(seed, ws.cfg.simulate_index as u64);
            let z = rng.normal_vec(model.spec.z_dim);
            Ok(model.generate_from_z(&z)?)
        }
    }
}

/// Run one realization through every configured flow problem and export the
/// pressure, snapshots and water-cut series.
pub fn simulate_stage(ws: &Workspace) -> Result<()> {
    ws.ensure_root()?;
    let start = Instant::now();
    let log_perm = realization_for_simulate(ws)?;
    let perm = PermField::from_log(&log_perm)?;
    let sim = ws.sim_config();

    for &kind in &ws.cfg.flow_problems {
        let dir = ws.stage_dir(&["simulate", kind.name()])?;
        let prob = FlowProblem {
            kind,
            porosity: ws.cfg.flow_porosity,
            rate: ws.cfg.flow_rate,
        };
        let sol = simulate(&perm, &prob, &sim)?;
        gpck::write_entries(
            &dir.join("pressure.gpck"),
            &[TensorEntry {
                name: "pressure".into(),
                shape: vec![sol.pressure.ny(), sol.pressure.nx()],
                values: sol.pressure.values().to_vec(),
            }],
        )?;
        pgm::write_normalized(&dir.join("pressure.pgm"), &sol.pressure)?;
        for (t, snap) in &sol.snapshots {
            let pvi = prob.pvi_of_time(*t);
            let tagname = format!("saturation_pvi_{pvi:.4}");
            gpck::write_entries(
                &dir.join(format!("{tagname}.gpck")),
                &[TensorEntry {
                    name: "saturation".into(),
                    shape: vec![snap.ny(), snap.nx()],
                    values: snap.values().to_vec(),
                }],
            )?;
            pgm::write_binary_range(&dir.join(format!("{tagname}.pgm")), snap)?;
        }
        write_csv(
            &dir.join("watercut.csv"),
            "pvi,water_cut",
            sol.water_cut.iter().map(|(p, w)| format!("{p},{w}")),
        )?;
        write_timings(&dir, start.elapsed().as_millis())?;
        println!(
            "simulate: {} in {} steps, breakthrough {:?} PVI",
            kind.name(),
            sol.steps,
            sol.breakthrough
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)] // one-shot artifact writer
fn write_stats_artifacts(
    dir: &Path,
    ws: &Workspace,
    problem: ProblemKind,
    source: SourceTag,
    result: &EnsembleResult,
    curve: &CurveStats,
    sat_cell: usize,
    sat_hist: &DensityEstimate,
    wbt: &DensityEstimate,
    wbt_absent: usize,
) -> Result<()> {
    let stats = &result.stats;
    for (name, field) in [
        ("mean", &stats.mean),
        ("variance", &stats.variance),
        ("skewness", &stats.skewness),
        ("kurtosis", &stats.kurtosis),
    ] {
        gpck::write_entries(
            &dir.join(format!("{name}.gpck")),
            &[TensorEntry {
                name: name.into(),
                shape: vec![field.ny(), field.nx()],
                values: field.values().to_vec(),
            }],
        )?;
        pgm::write_normalized(&dir.join(format!("{name}.pgm")), field)?;
    }
    write_csv(
        &dir.join("curve_stats.csv"),
        "pvi,mean,variance",
        (0..curve.grid.len())
            .map(|i| format!("{},{},{}", curve.grid[i], curve.mean[i], curve.variance[i])),
    )?;
    write_csv(
        &dir.join("sat_hist.csv"),
        "bin_left,bin_right,count",
        sat_hist
            .histogram
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                format!(
                    "{},{},{c}",
                    sat_hist.histogram.edges[i],
                    sat_hist.histogram.edges[i + 1]
                )
            }),
    )?;
    write_csv(
        &dir.join("wbt_hist.csv"),
        "bin_left,bin_right,count",
        wbt.histogram.counts.iter().enumerate().map(|(i, &c)| {
            format!("{},{},{c}", wbt.histogram.edges[i], wbt.histogram.edges[i + 1])
        }),
    )?;
    write_csv(
        &dir.join("wbt_kde.csv"),
        "x,density",
        wbt.grid
            .iter()
            .zip(&wbt.density)
            .map(|(x, d)| format!("{x},{d}")),
    )?;

    let nx = stats.mean.nx();
    let mut summary = String::from("{\n");
    let _ = writeln!(summary, "  \"pattern\": \"{}\",", ws.cfg.pattern.name());
    let _ = writeln!(summary, "  \"problem\": \"{}\",", problem.name());
    let _ = writeln!(summary, "  \"source\": \"{}\",", source.name());
    let _ = writeln!(summary, "  \"samples\": {},", stats.count);
    let _ = writeln!(summary, "  \"failures\": {},", result.failures.len());
    let _ = writeln!(
        summary,
        "  \"breakthrough_count\": {},",
        result.breakthroughs.iter().filter(|b| b.is_some()).count()
    );
    let _ = writeln!(summary, "  \"no_breakthrough_count\": {wbt_absent},");
    let _ = writeln!(summary, "  \"masked_cells\": {},", stats.masked_cells());
    let _ = writeln!(
        summary,
        "  \"max_variance_cell\": [{}, {}],",
        sat_cell % nx,
        sat_cell / nx
    );
    let _ = writeln!(summary, "  \"kde_bandwidth\": {}", wbt.bandwidth);
    summary.push_str("}\n");
    fs::write(dir.join("summary.json"), summary)?;
    Ok(())
}

/// Propagate ensembles from every configured source through every flow
/// problem and reduce them to the report statistics.
pub fn propagate_stage(ws: &Workspace) -> Result<()> {
    ws.ensure_root()?;
    let ds = ws.load_dataset()?;
    let needs_pca = ws.cfg.uq_sources.contains(&SourceTag::Pca);
    let needs_gan = ws.cfg.uq_sources.contains(&SourceTag::Gan);
    let pca_model = if needs_pca { Some(ws.load_pca()?) } else { None };
    let gan_model = if needs_gan {
        Some(ws.load_gan(ds.nx(), ds.ny())?)
    } else {
        None
    };
    let sim = ws.sim_config();
    let grid = pvi_grid(CURVE_GRID_POINTS);
    let n = ws.cfg.uq_ensemble;

    for &kind in &ws.cfg.flow_problems {
        let prob = FlowProblem {
            kind,
            porosity: ws.cfg.flow_porosity,
            rate: ws.cfg.flow_rate,
        };
        for &source in &ws.cfg.uq_sources {
            let start = Instant::now();
            let seed = ws.sub_seed(&format!("propagate.{}.{}", kind.name(), source.name()));
            let result = match source {
                SourceTag::Data => {
                    let src = DataSource::subsample(&ds, n.min(ds.len()), seed)?;
                    propagate(&src, &prob, &sim, n.min(ds.len()), source)?
                }
                SourceTag::Pca => {
                    let src = PcaSource {
                        model: pca_model.as_ref().expect("loaded above"),
                        seed,
                    };
                    propagate(&src, &prob, &sim, n, source)?
                }
                SourceTag::Gan => {
                    let src = GanSource {
                        model: gan_model.as_ref().expect("loaded above"),
                        seed,
                    };
                    propagate(&src, &prob, &sim, n, source)?
                }
            };
            for (idx, err) in &result.failures {
                eprintln!(
                    "propagate: {}/{} realization {idx} failed: {err}",
                    kind.name(),
                    source.name()
                );
            }
            let curve = curve_stats(&result.curves, &grid)?;
            let (cell, sat_hist) = point_histogram(&result.snapshot_values, &result.stats)?;
            let (wbt, absent) = breakthrough_density(&result.breakthroughs)?;

            let dir = ws.stage_dir(&["propagate", kind.name(), source.name()])?;
            write_stats_artifacts(
                &dir, ws, kind, source, &result, &curve, cell, &sat_hist, &wbt, absent,
            )?;
            write_timings(&dir, start.elapsed().as_millis())?;
            println!(
                "propagate: {}/{} n={} done in {:.1}s",
                kind.name(),
                source.name(),
                result.stats.count,
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}

/// Cross-link every artifact of the run and validate that the configured
/// set is complete.
pub fn report(ws: &Workspace) -> Result<()> {
    ws.ensure_root()?;
    let dir = ws.stage_dir(&["report"])?;
    let mut md = String::new();
    md.push_str("# Run report\n\n");
    let _ = writeln!(md, "- pattern: `{}`", ws.cfg.pattern.name());
    let _ = writeln!(md, "- seed: `{}`", ws.cfg.seed);
    let _ = writeln!(md, "- config hash: `{}`", ws.cfg.hash());
    md.push('\n');

    let rel = |p: &Path| -> String {
        p.strip_prefix(&ws.root)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned()
    };

    md.push_str("## Inputs\n\n");
    for (label, path) in [
        ("configuration (verbatim)", ws.root.join("config.txt")),
        ("configuration (effective)", ws.root.join("config.effective.txt")),
        ("dataset pack", ws.dataset_pack()),
        ("conceptual image", ws.root.join("dataset/conceptual.pgm")),
        ("pca model", ws.pca_model()),
        ("pca spectrum", ws.root.join("pca/eigvals.csv")),
        ("gan checkpoint", ws.gan_checkpoint()),
        ("gan training log", ws.root.join("gan/train_log.csv")),
    ] {
        let mark = if path.exists() { "" } else { " (missing)" };
        let _ = writeln!(md, "- {label}: [{}]({}){mark}", rel(&path), rel(&path));
    }
    md.push('\n');

    let mut missing = Vec::new();
    for &kind in &ws.cfg.flow_problems {
        for &source in &ws.cfg.uq_sources {
            let pdir = ws.propagate_dir(kind, source);
            let _ = writeln!(md, "## {} / {}\n", kind.name(), source.name());
            for artifact in [
                "mean.pgm",
                "variance.pgm",
                "skewness.pgm",
                "kurtosis.pgm",
                "mean.gpck",
                "variance.gpck",
                "skewness.gpck",
                "kurtosis.gpck",
                "curve_stats.csv",
                "sat_hist.csv",
                "wbt_hist.csv",
                "wbt_kde.csv",
                "summary.json",
            ] {
                let path = pdir.join(artifact);
                if path.exists() {
                    let _ = writeln!(md, "- [{}]({})", rel(&path), rel(&path));
                } else {
                    missing.push(path.clone());
                    let _ = writeln!(md, "- {} (missing)", rel(&path));
                }
            }
            let summary = pdir.join("summary.json");
            if let Ok(text) = fs::read_to_string(&summary) {
                md.push_str("\n```json\n");
                md.push_str(&text);
                md.push_str("```\n");
            }
            md.push('\n');
        }
    }
    fs::write(ws.report_path(), &md)?;
    println!("report: {}", ws.report_path().display());
    if !missing.is_empty() {
        bail!(
            "report incomplete: {} artifacts missing (first: {}); run `geoparam propagate` first",
            missing.len(),
            missing[0].display()
        );
    }
    let _ = dir;
    Ok(())
}
