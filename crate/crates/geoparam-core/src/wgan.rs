//! Wasserstein GAN: generator/critic pair, alternating training with a
//! clipped critic, and sampling from the trained generator.
//!
//! Training alternates blocks of critic ascent steps on
//! `E[f(real)] - E[f(G(z))]` (weights clamped to `[-c, c]` after every
//! update, the compact-search-space device standing in for the Lipschitz
//! constraint) with single generator descent steps on `-E[f(G(z))]`. The
//! critic objective value doubles as the training loss surrogate: it tracks
//! sample quality, so the log keeps it per generator step together with a
//! batch-diversity figure that flags mode collapse.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{Dataset, ValueRange};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::graph::{Graph, Mode};
use crate::math;
use crate::net::{dcgan_critic, dcgan_generator, NetSpec, Network};
use crate::optim::{clip_parameters, rmsprop_step, OptimizerState, RmsPropConfig};
use crate::params::{ParamId, ParamStore};
use crate::rng::SeedRng;
use crate::tensor::Tensor;
use crate::uq::RealizationSource;

/// Architecture pair: latent size plus the two sequential nets.
#[derive(Clone, Debug)]
pub struct GanSpec {
    pub z_dim: usize,
    pub generator: NetSpec,
    pub critic: NetSpec,
}

impl GanSpec {
    /// DCGAN-style pair for `out_shape` fields (default 1x50x50).
    pub fn dcgan(
        z_dim: usize,
        gen_channels: &[usize],
        critic_channels: &[usize],
        out_shape: [usize; 3],
        slope: f64,
        batchnorm: bool,
    ) -> Result<Self> {
        Ok(GanSpec {
            z_dim,
            generator: dcgan_generator(z_dim, gen_channels, out_shape, slope, batchnorm)?,
            critic: dcgan_critic(out_shape, critic_channels, slope, batchnorm)?,
        })
    }

    /// Output `[c, h, w]` of the generator.
    pub fn out_shape(&self) -> Result<Vec<usize>> {
        self.generator.output_shape()
    }

    fn validate(&self) -> Result<()> {
        if self.generator.input_shape != [self.z_dim] {
            return Err(Error::Config(alloc::format!(
                "generator input {:?} does not match z_dim {}",
                self.generator.input_shape,
                self.z_dim
            )));
        }
        let gen_out = self.generator.output_shape()?;
        if gen_out.len() != 3 {
            return Err(Error::Config(alloc::format!(
                "generator must emit [c, h, w] fields, got {gen_out:?}"
            )));
        }
        match self.generator.layers.last() {
            Some(crate::net::LayerSpec::Activation(crate::graph::Activation::Tanh)) => {}
            other => {
                return Err(Error::Config(alloc::format!(
                    "generator must end in tanh, got {other:?}"
                )))
            }
        }
        if self.critic.input_shape != gen_out {
            return Err(Error::Config(alloc::format!(
                "critic input {:?} does not match generator output {gen_out:?}",
                self.critic.input_shape
            )));
        }
        if self.critic.output_shape()? != [1] {
            return Err(Error::Config(
                "critic must emit one scalar per sample".into(),
            ));
        }
        Ok(())
    }
}

/// Training schedule and hyperparameters.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    /// Critic weight clamp `c`.
    pub clip: f64,
    /// Critic steps per generator step outside burn-in phases.
    pub n_critic: usize,
    /// Critic steps during a burn-in phase.
    pub burnin_critic_iters: usize,
    /// Generator steps at the start that use the burn-in count.
    pub burnin_steps: usize,
    /// Afterwards, every this-many-th generator step burns in again
    /// (0 disables).
    pub burnin_every: usize,
    pub batch_size: usize,
    pub generator_iters: usize,
    pub optimizer: RmsPropConfig,
    pub seed: u64,
    /// Checkpoint cadence in generator steps (0 = only the final state).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            clip: 0.01,
            n_critic: 5,
            burnin_critic_iters: 100,
            burnin_steps: 25,
            burnin_every: 500,
            batch_size: 64,
            generator_iters: 10_000,
            optimizer: RmsPropConfig::default(),
            seed: 0,
            checkpoint_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clip <= 0.0 {
            return Err(Error::Config("clip range must be positive".into()));
        }
        if self.n_critic < 1 {
            return Err(Error::Config("n_critic must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        self.optimizer.validate()
    }

    /// Critic iterations to run before generator step `step` (0-based).
    pub fn critic_iters_at(&self, step: usize) -> usize {
        if step < self.burnin_steps
            || (self.burnin_every > 0 && step.is_multiple_of(self.burnin_every))
        {
            self.burnin_critic_iters.max(self.n_critic)
        } else {
            self.n_critic
        }
    }
}

/// One per-generator-step log record.
#[derive(Clone, Debug)]
pub struct TrainRecord {
    pub iteration: usize,
    /// Critic objective `E[f(real)] - E[f(fake)]` after the step's last
    /// critic update.
    pub wasserstein: f64,
    /// Median pairwise L2 distance within the generated batch.
    pub diversity: f64,
    pub wall_ms: u64,
    pub checkpoint: Option<u64>,
}

/// Append-only training log with strictly increasing iteration indices.
#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    records: Vec<TrainRecord>,
}

impl TrainLog {
    pub fn push(&mut self, record: TrainRecord) {
        if let Some(last) = self.records.last() {
            assert!(
                record.iteration > last.iteration,
                "training log iterations must increase"
            );
        }
        self.records.push(record);
    }

    pub fn records(&self) -> &[TrainRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Environment callbacks for training: wall clock, checkpointing, warnings.
/// The defaults make training a pure function.
pub trait TrainHooks {
    fn now_ms(&mut self) -> u64 {
        0
    }
    fn on_record(&mut self, _record: &TrainRecord) {}
    fn on_checkpoint(&mut self, _id: u64, _model: &GanModel) {}
    fn on_warning(&mut self, _message: &str) {}
}

/// No-op hooks.
pub struct NoHooks;

impl TrainHooks for NoHooks {}

/// Generator + critic parameters with their architecture.
#[derive(Clone, Debug)]
pub struct GanModel {
    pub spec: GanSpec,
    pub store: ParamStore,
    pub generator: Network,
    pub critic: Network,
    /// Completed generator iterations.
    pub iteration: u64,
}

/// Build and initialize both networks, then dry-run them on a zero batch to
/// verify the emitted shapes.
pub fn init_networks(spec: &GanSpec, seed: u64) -> Result<GanModel> {
    spec.validate()?;
    let mut store = ParamStore::new();
    let mut rng_gen = SeedRng::stream(seed, 1);
    let mut rng_critic = SeedRng::stream(seed, 2);
    let generator = Network::init(spec.generator.clone(), "gen", &mut store, &mut rng_gen)?;
    let critic = Network::init(spec.critic.clone(), "critic", &mut store, &mut rng_critic)?;
    let model = GanModel {
        spec: spec.clone(),
        store,
        generator,
        critic,
        iteration: 0,
    };

    let out_shape = model.spec.out_shape()?;
    let mut g = Graph::new(Mode::Eval);
    let mut store = model.store.clone();
    let z = g.leaf(Tensor::zeros(&[1, model.spec.z_dim]));
    let fake = model.generator.forward(&mut g, &mut store, z, true)?;
    let got = g.value(fake).shape().to_vec();
    let want: Vec<usize> = core::iter::once(1).chain(out_shape.iter().copied()).collect();
    if got != want {
        return Err(Error::Config(alloc::format!(
            "generator emits {got:?}, expected {want:?}"
        )));
    }
    let score = model.critic.forward(&mut g, &mut store, fake, true)?;
    if g.value(score).shape() != [1, 1] {
        return Err(Error::Config(alloc::format!(
            "critic emits {:?}, expected one scalar per sample",
            g.value(score).shape()
        )));
    }
    Ok(model)
}

impl GanModel {
    /// Trainable critic parameter ids (the clipped set).
    pub fn critic_weight_ids(&self) -> Vec<ParamId> {
        self.critic.trainable_ids(&self.store)
    }

    pub fn generator_weight_ids(&self) -> Vec<ParamId> {
        self.generator.trainable_ids(&self.store)
    }

    /// Deterministic generation: one field from the latent vector `z`
    /// (inference-mode batch norm; pure function of weights and z).
    pub fn generate_from_z(&self, z: &[f64]) -> Result<Field> {
        if z.len() != self.spec.z_dim {
            return Err(Error::ShapeMismatch {
                op: "generate_from_z",
                lhs: vec![z.len()],
                rhs: vec![self.spec.z_dim],
            });
        }
        let mut g = Graph::new(Mode::Eval);
        let mut store = self.store.clone();
        let zn = g.leaf(Tensor::new(vec![1, z.len()], z.to_vec())?);
        let out = self.generator.forward(&mut g, &mut store, zn, true)?;
        let shape = g.value(out).shape().to_vec();
        let (h, w) = (shape[2], shape[3]);
        // tanh range -> binary range
        let values: Vec<f64> = g.value(out).data().iter().map(|v| (v + 1.0) / 2.0).collect();
        Field::new(w, h, values)
    }
}

/// Draw a `[batch, 1, h, w]` tensor of dataset patches with replacement.
fn sample_real_batch(dataset: &Dataset, batch: usize, rng: &mut SeedRng) -> Tensor {
    let (nx, ny) = (dataset.nx(), dataset.ny());
    let mut values = Vec::with_capacity(batch * nx * ny);
    for _ in 0..batch {
        values.extend_from_slice(dataset.patch(rng.below(dataset.len())));
    }
    Tensor::new(vec![batch, 1, ny, nx], values).expect("batch is well-formed")
}

fn draw_z(z_dim: usize, batch: usize, rng: &mut SeedRng) -> Tensor {
    Tensor::new(vec![batch, z_dim], rng.normal_vec(batch * z_dim))
        .expect("z batch is well-formed")
}

/// Median pairwise L2 distance between the samples of a batch.
pub fn batch_diversity(batch: &Tensor) -> f64 {
    let n = batch.shape()[0];
    if n < 2 {
        return 0.0;
    }
    let stride = batch.numel() / n;
    let data = batch.data();
    let mut distances = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let a = &data[i * stride..(i + 1) * stride];
            let b = &data[j * stride..(j + 1) * stride];
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            distances.push(math::sqrt(d2));
        }
    }
    math::median(&distances)
}

fn split_mut(model: &mut GanModel) -> (&Network, &Network, &mut ParamStore) {
    (&model.generator, &model.critic, &mut model.store)
}

/// One critic ascent step on `E[f(real)] - E[f(G(z))]` with the generator
/// frozen, followed by weight clipping. Returns the objective re-evaluated
/// with the updated critic on the same batches.
pub fn critic_iteration(
    model: &mut GanModel,
    opt: &mut OptimizerState,
    cfg: &TrainConfig,
    real_batch: &Tensor,
    z_batch: &Tensor,
) -> Result<f64> {
    if real_batch.shape()[0] != z_batch.shape()[0] {
        return Err(Error::shape(
            "critic_iteration batches",
            real_batch.shape(),
            z_batch.shape(),
        ));
    }
    let critic_ids = model.critic_weight_ids();
    let (generator, critic, store) = split_mut(model);

    let mut g = Graph::new(Mode::Train);
    let real = g.leaf(real_batch.clone());
    let score_real = critic.forward(&mut g, store, real, false)?;
    let mean_real = g.mean(score_real);
    let z = g.leaf(z_batch.clone());
    let fake = generator.forward(&mut g, store, z, true)?;
    let fake_values = g.value(fake).clone();
    let score_fake = critic.forward(&mut g, store, fake, false)?;
    let mean_fake = g.mean(score_fake);
    // descend on E[f(fake)] - E[f(real)] == ascend on the objective
    let loss = g.sub(mean_fake, mean_real)?;
    let grads = g.backward(loss)?;
    let param_grads = g.param_grads(&grads, store);
    rmsprop_step(store, &param_grads, opt, &cfg.optimizer)?;
    clip_parameters(store, &critic_ids, cfg.clip)?;

    // Post-step estimate on the same batches, no state mutation.
    let mut g2 = Graph::new(Mode::Train);
    let real2 = g2.leaf(real_batch.clone());
    let sr = critic.forward(&mut g2, store, real2, true)?;
    let fake2 = g2.leaf(fake_values);
    let sf = critic.forward(&mut g2, store, fake2, true)?;
    let mr = g2.value(sr).data().iter().sum::<f64>() / real_batch.shape()[0] as f64;
    let mf = g2.value(sf).data().iter().sum::<f64>() / z_batch.shape()[0] as f64;
    Ok(mr - mf)
}

/// One generator descent step on `-E[f(G(z))]` with the critic frozen.
/// Returns the generated batch for diagnostics.
pub fn generator_iteration(
    model: &mut GanModel,
    opt: &mut OptimizerState,
    cfg: &TrainConfig,
    z_batch: &Tensor,
) -> Result<Tensor> {
    let (generator, critic, store) = split_mut(model);
    let mut g = Graph::new(Mode::Train);
    let z = g.leaf(z_batch.clone());
    let fake = generator.forward(&mut g, store, z, false)?;
    let fake_values = g.value(fake).clone();
    let score = critic.forward(&mut g, store, fake, true)?;
    let mean_score = g.mean(score);
    let loss = g.neg(mean_score);
    let grads = g.backward(loss)?;
    let param_grads = g.param_grads(&grads, store);
    rmsprop_step(store, &param_grads, opt, &cfg.optimizer)?;
    Ok(fake_values)
}

/// A finished training run: the model plus everything a resumable
/// checkpoint needs.
pub struct Trained {
    pub model: GanModel,
    pub log: TrainLog,
    pub critic_opt: OptimizerState,
    pub generator_opt: OptimizerState,
}

/// Alternate critic blocks and generator steps until `generator_iters`
/// generator updates have run. Deterministic given the config seed.
pub fn train(
    dataset: &Dataset,
    spec: &GanSpec,
    cfg: &TrainConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<Trained> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("gan training dataset"));
    }
    if dataset.range() != ValueRange::Tanh {
        return Err(Error::Contract(
            "gan training expects a tanh-range dataset".into(),
        ));
    }
    let out_shape = spec.out_shape()?;
    if out_shape != [1, dataset.ny(), dataset.nx()] {
        return Err(Error::Config(alloc::format!(
            "generator output {out_shape:?} does not match dataset patches [1, {}, {}]",
            dataset.ny(),
            dataset.nx()
        )));
    }

    let mut model = init_networks(spec, cfg.seed)?;
    let mut opt_critic = OptimizerState::new(&model.store, model.critic_weight_ids());
    let mut opt_gen = OptimizerState::new(&model.store, model.generator_weight_ids());
    let mut rng_batch = SeedRng::stream(cfg.seed, 3);
    let mut rng_z = SeedRng::stream(cfg.seed, 4);
    let mut log = TrainLog::default();
    let mut checkpoint_counter = 0u64;

    for step in 0..cfg.generator_iters {
        let mut wasserstein = 0.0;
        for _ in 0..cfg.critic_iters_at(step) {
            let real = sample_real_batch(dataset, cfg.batch_size, &mut rng_batch);
            let z = draw_z(spec.z_dim, cfg.batch_size, &mut rng_z);
            wasserstein = critic_iteration(&mut model, &mut opt_critic, cfg, &real, &z)?;
            if !wasserstein.is_finite() {
                return Err(Error::Numerical(alloc::format!(
                    "training diverged at generator step {step}: objective {wasserstein}"
                )));
            }
        }
        let z = draw_z(spec.z_dim, cfg.batch_size, &mut rng_z);
        let fake = generator_iteration(&mut model, &mut opt_gen, cfg, &z)?;
        model.iteration = step as u64 + 1;

        let diversity = batch_diversity(&fake);
        if diversity < 1e-3 {
            hooks.on_warning(&alloc::format!(
                "possible mode collapse at step {step}: batch diversity {diversity:.3e}"
            ));
        }
        let checkpoint = if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 {
            checkpoint_counter += 1;
            hooks.on_checkpoint(checkpoint_counter, &model);
            Some(checkpoint_counter)
        } else {
            None
        };
        let record = TrainRecord {
            iteration: step,
            wasserstein,
            diversity,
            wall_ms: hooks.now_ms(),
            checkpoint,
        };
        hooks.on_record(&record);
        log.push(record);
    }
    Ok(Trained {
        model,
        log,
        critic_opt: opt_critic,
        generator_opt: opt_gen,
    })
}

/// Sample `count` realizations from the trained generator and map them to
/// the binary range (no thresholding).
pub fn generate(model: &GanModel, count: usize, seed: u64) -> Result<Dataset> {
    let out_shape = model.spec.out_shape()?;
    let (ny, nx) = (out_shape[1], out_shape[2]);
    let mut rng = SeedRng::stream(seed, 0);
    let mut values = Vec::with_capacity(count * nx * ny);
    for _ in 0..count {
        let z = rng.normal_vec(model.spec.z_dim);
        let field = model.generate_from_z(&z)?;
        values.extend_from_slice(field.values());
    }
    Dataset::new(nx, ny, count, values, ValueRange::Binary)
}

/// Fresh GAN samples as a propagation source, one latent stream per
/// realization index.
pub struct GanSource<'a> {
    pub model: &'a GanModel,
    pub seed: u64,
}

impl RealizationSource for GanSource<'_> {
    fn realization(&self, index: usize) -> Result<Field> {
        let mut rng = SeedRng::stream(self.seed, index as u64 + 1);
        let z = rng.normal_vec(self.model.spec.z_dim);
        self.model.generate_from_z(&z)
    }
}

/// Serialize/restore helpers shared with the checkpoint format: stable
/// iteration over every parameter plus the iteration counter.
pub fn checkpoint_entries(model: &GanModel, opts: &[&OptimizerState]) -> Vec<(String, Tensor)> {
    let mut out: Vec<(String, Tensor)> = model
        .store
        .iter()
        .map(|(_, p)| (p.name.clone(), p.value.clone()))
        .collect();
    for (oi, opt) in opts.iter().enumerate() {
        for (slot, &pid) in opt.ids().iter().enumerate() {
            out.push((
                alloc::format!("opt{oi}.{}", model.store.name(pid)),
                opt.accumulator(slot).clone(),
            ));
        }
    }
    out.push((
        "iteration".into(),
        Tensor::scalar(model.iteration as f64),
    ));
    out
}
