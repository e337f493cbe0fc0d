//! Flat key=value pipeline configuration.
//!
//! One entry per line, `#` starts a comment, unknown keys are rejected, and
//! every key has a default, so an empty file is a valid configuration. The
//! effective (fully resolved) configuration has a canonical text form whose
//! hash names the output directory, keeping artifacts from different
//! configurations apart.

use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};
use geoparam_core::dataset::Pattern;
use geoparam_core::flow::ProblemKind;
use geoparam_core::uq::SourceTag;

/// A parse failure with its 1-based line number.
#[derive(Debug)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Fully resolved pipeline configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub pattern: Pattern,
    pub seed: u64,
    pub output_dir: String,
    pub workers: usize,

    pub dataset_count: usize,
    pub dataset_preview_pgms: usize,

    pub pca_variance_fraction: f64,
    pub pca_fit_subsample: usize,

    pub zdim: usize,
    pub gan_gen_channels: Vec<usize>,
    pub gan_critic_channels: Vec<usize>,
    pub gan_batchnorm: bool,
    pub gan_leak: f64,

    pub train_subsample: usize,
    pub train_batch_size: usize,
    pub train_generator_iters: usize,
    pub train_n_critic: usize,
    pub train_burnin_iters: usize,
    pub train_burnin_steps: usize,
    pub train_burnin_every: usize,
    pub train_clip: f64,
    pub train_lr: f64,
    pub train_rho: f64,
    pub train_eps: f64,
    pub train_checkpoint_every: usize,

    pub flow_problems: Vec<ProblemKind>,
    pub flow_porosity: f64,
    pub flow_rate: f64,
    pub flow_t_end: f64,
    pub flow_snapshot_pvi: f64,
    pub flow_cfl_factor: f64,
    pub flow_cg_tol: f64,
    pub flow_cg_max_factor: usize,

    pub uq_sources: Vec<SourceTag>,
    pub uq_ensemble: usize,

    pub sample_count: usize,
    pub sample_source: SourceTag,
    pub simulate_source: SourceTag,
    pub simulate_index: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            pattern: Pattern::SemiStraight,
            seed: 42,
            output_dir: "out".into(),
            workers: 0,
            dataset_count: 40_000,
            dataset_preview_pgms: 8,
            pca_variance_fraction: 0.75,
            pca_fit_subsample: 4_000,
            zdim: 20,
            gan_gen_channels: vec![256, 128, 64],
            gan_critic_channels: vec![64, 128, 256],
            gan_batchnorm: true,
            gan_leak: 0.2,
            train_subsample: 4_000,
            train_batch_size: 64,
            train_generator_iters: 10_000,
            train_n_critic: 5,
            train_burnin_iters: 100,
            train_burnin_steps: 25,
            train_burnin_every: 500,
            train_clip: 0.01,
            train_lr: 5e-5,
            train_rho: 0.9,
            train_eps: 1e-8,
            train_checkpoint_every: 1000,
            flow_problems: vec![ProblemKind::QuarterFiveSpot, ProblemKind::UniformFlow],
            flow_porosity: 0.2,
            flow_rate: 1.0,
            flow_t_end: 0.4,
            flow_snapshot_pvi: 0.25,
            flow_cfl_factor: 0.9,
            flow_cg_tol: 1e-10,
            flow_cg_max_factor: 10,
            uq_sources: vec![SourceTag::Data, SourceTag::Pca, SourceTag::Gan],
            uq_ensemble: 5_000,
            sample_count: 16,
            sample_source: SourceTag::Gan,
            simulate_source: SourceTag::Data,
            simulate_index: 0,
        }
    }
}

fn parse_list<T, F: Fn(&str) -> Result<T, String>>(s: &str, f: F) -> Result<Vec<T>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(&f)
        .collect()
}

impl PipelineConfig {
    fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        let int = |v: &str| -> Result<usize, String> {
            v.parse().map_err(|_| format!("`{v}` is not an integer"))
        };
        let float = |v: &str| -> Result<f64, String> {
            v.parse().map_err(|_| format!("`{v}` is not a number"))
        };
        let boolean = |v: &str| -> Result<bool, String> {
            v.parse().map_err(|_| format!("`{v}` is not true/false"))
        };
        match key {
            "pattern" => self.pattern = Pattern::parse(value).map_err(|e| e.to_string())?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| format!("`{value}` is not a u64 seed"))?
            }
            "output_dir" => self.output_dir = value.to_string(),
            "workers" => self.workers = int(value)?,
            "dataset.count" => self.dataset_count = int(value)?,
            "dataset.preview_pgms" => self.dataset_preview_pgms = int(value)?,
            "pca.variance_fraction" => self.pca_variance_fraction = float(value)?,
            "pca.fit_subsample" => self.pca_fit_subsample = int(value)?,
            "zdim" => self.zdim = int(value)?,
            "gan.gen_channels" => self.gan_gen_channels = parse_list(value, |p| int(p))?,
            "gan.critic_channels" => self.gan_critic_channels = parse_list(value, |p| int(p))?,
            "gan.batchnorm" => self.gan_batchnorm = boolean(value)?,
            "gan.leak" => self.gan_leak = float(value)?,
            "train.subsample" => self.train_subsample = int(value)?,
            "train.batch_size" => self.train_batch_size = int(value)?,
            "train.generator_iters" => self.train_generator_iters = int(value)?,
            "train.n_critic" => self.train_n_critic = int(value)?,
            "train.burnin_iters" => self.train_burnin_iters = int(value)?,
            "train.burnin_steps" => self.train_burnin_steps = int(value)?,
            "train.burnin_every" => self.train_burnin_every = int(value)?,
            "train.clip" => self.train_clip = float(value)?,
            "train.lr" => self.train_lr = float(value)?,
            "train.rho" => self.train_rho = float(value)?,
            "train.eps" => self.train_eps = float(value)?,
            "train.checkpoint_every" => self.train_checkpoint_every = int(value)?,
            "flow.problems" => {
                self.flow_problems =
                    parse_list(value, |p| ProblemKind::parse(p).map_err(|e| e.to_string()))?
            }
            "flow.porosity" => self.flow_porosity = float(value)?,
            "flow.rate" => self.flow_rate = float(value)?,
            "flow.t_end" => self.flow_t_end = float(value)?,
            "flow.snapshot_pvi" => self.flow_snapshot_pvi = float(value)?,
            "flow.cfl_factor" => self.flow_cfl_factor = float(value)?,
            "flow.cg_tol" => self.flow_cg_tol = float(value)?,
            "flow.cg_max_factor" => self.flow_cg_max_factor = int(value)?,
            "uq.sources" => {
                self.uq_sources =
                    parse_list(value, |p| SourceTag::parse(p).map_err(|e| e.to_string()))?
            }
            "uq.ensemble" => self.uq_ensemble = int(value)?,
            "sample.count" => self.sample_count = int(value)?,
            "sample.source" => {
                self.sample_source = SourceTag::parse(value).map_err(|e| e.to_string())?
            }
            "simulate.source" => {
                self.simulate_source = SourceTag::parse(value).map_err(|e| e.to_string())?
            }
            "simulate.index" => self.simulate_index = int(value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Parse text, overlaying entries on the defaults.
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = PipelineConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = raw.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or_else(|| ConfigError {
                line,
                message: format!("expected key=value, got `{stripped}`"),
            })?;
            cfg.apply(key.trim(), value.trim())
                .map_err(|message| ConfigError { line, message })?;
        }
        cfg.validate().map_err(|message| ConfigError {
            line: 0,
            message,
        })?;
        Ok(cfg)
    }

    /// Parse a config file; returns the config plus the verbatim file text
    /// (echoed into the output directory).
    pub fn parse_file(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg = Self::parse_str(&text)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        Ok((cfg, text))
    }

    fn validate(&self) -> Result<(), String> {
        if !(self.pca_variance_fraction > 0.0 && self.pca_variance_fraction <= 1.0) {
            return Err("pca.variance_fraction must lie in (0, 1]".into());
        }
        if self.flow_problems.is_empty() {
            return Err("flow.problems must not be empty".into());
        }
        if self.uq_sources.is_empty() {
            return Err("uq.sources must not be empty".into());
        }
        if self.zdim == 0 {
            return Err("zdim must be positive".into());
        }
        if self.dataset_count == 0 {
            return Err("dataset.count must be positive".into());
        }
        if self.flow_snapshot_pvi <= 0.0
            || self.flow_snapshot_pvi * self.flow_porosity / self.flow_rate > self.flow_t_end
        {
            return Err("flow.snapshot_pvi must map to a time within (0, t_end]".into());
        }
        Ok(())
    }

    /// Canonical text of the effective configuration: every key, sorted,
    /// one per line. Hashing this names the artifact directory.
    pub fn canonical(&self) -> String {
        let problems: Vec<&str> = self.flow_problems.iter().map(|p| p.name()).collect();
        let sources: Vec<&str> = self.uq_sources.iter().map(|s| s.name()).collect();
        let gen_ch: Vec<String> = self.gan_gen_channels.iter().map(|c| c.to_string()).collect();
        let critic_ch: Vec<String> = self
            .gan_critic_channels
            .iter()
            .map(|c| c.to_string())
            .collect();
        let mut lines = vec![
            format!("dataset.count={}", self.dataset_count),
            format!("dataset.preview_pgms={}", self.dataset_preview_pgms),
            format!("flow.cfl_factor={}", self.flow_cfl_factor),
            format!("flow.cg_max_factor={}", self.flow_cg_max_factor),
            format!("flow.cg_tol={}", self.flow_cg_tol),
            format!("flow.porosity={}", self.flow_porosity),
            format!("flow.problems={}", problems.join(",")),
            format!("flow.rate={}", self.flow_rate),
            format!("flow.snapshot_pvi={}", self.flow_snapshot_pvi),
            format!("flow.t_end={}", self.flow_t_end),
            format!("gan.batchnorm={}", self.gan_batchnorm),
            format!("gan.critic_channels={}", critic_ch.join(",")),
            format!("gan.gen_channels={}", gen_ch.join(",")),
            format!("gan.leak={}", self.gan_leak),
            format!("output_dir={}", self.output_dir),
            format!("pattern={}", self.pattern.name()),
            format!("pca.fit_subsample={}", self.pca_fit_subsample),
            format!("pca.variance_fraction={}", self.pca_variance_fraction),
            format!("sample.count={}", self.sample_count),
            format!("sample.source={}", self.sample_source.name()),
            format!("seed={}", self.seed),
            format!("simulate.index={}", self.simulate_index),
            format!("simulate.source={}", self.simulate_source.name()),
            format!("train.batch_size={}", self.train_batch_size),
            format!("train.burnin_every={}", self.train_burnin_every),
            format!("train.burnin_iters={}", self.train_burnin_iters),
            format!("train.burnin_steps={}", self.train_burnin_steps),
            format!("train.checkpoint_every={}", self.train_checkpoint_every),
            format!("train.clip={}", self.train_clip),
            format!("train.eps={}", self.train_eps),
            format!("train.generator_iters={}", self.train_generator_iters),
            format!("train.lr={}", self.train_lr),
            format!("train.n_critic={}", self.train_n_critic),
            format!("train.rho={}", self.train_rho),
            format!("train.subsample={}", self.train_subsample),
            format!("uq.ensemble={}", self.uq_ensemble),
            format!("uq.sources={}", sources.join(",")),
            format!("zdim={}", self.zdim),
        ];
        lines.sort();
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    /// FNV-1a 64 of the canonical text, hex encoded. Note: `workers` is an
    /// execution knob, deliberately outside the hash (results do not depend
    /// on it).
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in self.canonical().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }

    /// Snapshot time (in simulation time units) of the PVI snapshot.
    pub fn snapshot_time(&self) -> f64 {
        self.flow_snapshot_pvi * self.flow_porosity / self.flow_rate
    }
}
