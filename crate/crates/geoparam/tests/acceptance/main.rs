//! Acceptance suite: one test per release criterion, each pinning its
//! tolerances in code. The two desk-scale tests are `#[ignore]`d because
//! they train the full-size network (hours of CPU); run them explicitly
//! with `cargo test --test acceptance -- --ignored` (see the README).

mod support;

use std::path::PathBuf;
use std::time::Instant;

use geoparam::config::PipelineConfig;
use geoparam::gpck;
use geoparam::pipeline::Workspace;
use geoparam_core::dataset::{self, Dataset, Pattern, ValueRange};
use geoparam_core::field::Field;
use geoparam_core::flow::{
    simulate, FlowProblem, PermField, SimConfig,
};
use geoparam_core::graph::{Activation, Graph, Mode, NodeId};
use geoparam_core::optim::OptimizerState;
use geoparam_core::pca::PcaModel;
use geoparam_core::rng::SeedRng;
use geoparam_core::tensor::Tensor;
use geoparam_core::uq::{DensityEstimate, MomentAccumulator, SourceTag};
use geoparam_core::wgan::{critic_iteration, init_networks, GanSpec, TrainConfig};

// ---------------------------------------------------------------------
// criterion 1: gradient suite
// ---------------------------------------------------------------------

type BuildFn = Box<dyn Fn(&mut Graph, &[NodeId]) -> NodeId>;

struct GradCase {
    name: &'static str,
    shapes: Vec<Vec<usize>>,
    build: BuildFn,
}

fn grad_check(case: &GradCase, rng: &mut SeedRng) {
    let inputs: Vec<Vec<f64>> = case
        .shapes
        .iter()
        .map(|s| rng.normal_vec(s.iter().product()))
        .collect();
    let out_shape = {
        let mut g = Graph::new(Mode::Train);
        let ids: Vec<NodeId> = case
            .shapes
            .iter()
            .zip(&inputs)
            .map(|(s, v)| g.var(Tensor::new(s.clone(), v.clone()).unwrap()))
            .collect();
        let out = (case.build)(&mut g, &ids);
        g.value(out).shape().to_vec()
    };
    let probe = Tensor::new(
        out_shape.clone(),
        rng.normal_vec(out_shape.iter().product()),
    )
    .unwrap();
    let loss_of = |values: &[Vec<f64>]| -> (f64, Vec<Vec<f64>>) {
        let mut g = Graph::new(Mode::Train);
        let ids: Vec<NodeId> = case
            .shapes
            .iter()
            .zip(values)
            .map(|(s, v)| g.var(Tensor::new(s.clone(), v.clone()).unwrap()))
            .collect();
        let out = (case.build)(&mut g, &ids);
        let loss = g.weighted_sum(out, &probe).unwrap();
        let value = g.value(loss).scalar_value().unwrap();
        let grads = g.backward(loss).unwrap();
        (
            value,
            ids.iter()
                .map(|&id| grads.node(id).map(|t| t.data().to_vec()).unwrap_or_default())
                .collect(),
        )
    };
    let (_, analytic) = loss_of(&inputs);
    for which in 0..case.shapes.len() {
        let mut f = |x: &[f64]| {
            let mut vals = inputs.clone();
            vals[which] = x.to_vec();
            loss_of(&vals).0
        };
        let numeric = support::central_diff(&mut f, &inputs[which], 1e-6);
        let err = support::max_rel_err(&analytic[which], &numeric);
        assert!(
            err <= 1e-5,
            "{} input {which}: rel err {err:.3e} above 1e-5",
            case.name
        );
    }
}

#[test]
fn c01_gradient_suite_hundred_random_configs() {
    let start = Instant::now();
    let mut rng = SeedRng::new(10_001);
    let mut done = 0;
    while done < 100 {
        let case = match rng.below(6) {
            0 => GradCase {
                name: "linear",
                shapes: vec![
                    vec![1 + rng.below(4), 1 + rng.below(5)],
                    vec![1 + rng.below(4), 0],
                    vec![0],
                ],
                build: Box::new(|g, ids| g.linear(ids[0], ids[1], Some(ids[2])).unwrap()),
            }
            .with_linear_dims(),
            1 => {
                let (cin, cout) = (1 + rng.below(3), 1 + rng.below(3));
                let k = 1 + rng.below(3);
                let s = 1 + rng.below(2);
                let p = rng.below(2);
                let oh = 2 + rng.below(3);
                let h = (oh - 1) * s + k;
                if h <= 2 * p {
                    continue;
                }
                let hin = h - 2 * p;
                let b = 1 + rng.below(2);
                GradCase {
                    name: "conv2d",
                    shapes: vec![vec![b, cin, hin, hin], vec![cout, cin, k, k], vec![cout]],
                    build: Box::new(move |g, ids| {
                        g.conv2d(ids[0], ids[1], Some(ids[2]), s, p).unwrap()
                    }),
                }
            }
            2 => {
                let (cin, cout) = (1 + rng.below(3), 1 + rng.below(3));
                let k = 1 + rng.below(3);
                let s = 1 + rng.below(2);
                let h = 2 + rng.below(3);
                let p = rng.below(2);
                if (h - 1) * s + k <= 2 * p {
                    continue;
                }
                let b = 1 + rng.below(2);
                GradCase {
                    name: "conv_transpose2d",
                    shapes: vec![vec![b, cin, h, h], vec![cin, cout, k, k], vec![cout]],
                    build: Box::new(move |g, ids| {
                        g.conv_transpose2d(ids[0], ids[1], Some(ids[2]), s, p).unwrap()
                    }),
                }
            }
            3 => {
                let kind = match rng.below(3) {
                    0 => Activation::Tanh,
                    1 => Activation::Sigmoid,
                    _ => Activation::LeakyRelu(0.01 + 0.5 * rng.uniform()),
                };
                let n = 1 + rng.below(24);
                GradCase {
                    name: "activation",
                    shapes: vec![vec![n]],
                    build: Box::new(move |g, ids| g.activation(ids[0], kind).unwrap()),
                }
            }
            4 => {
                let (b, c) = (2 + rng.below(4), 1 + rng.below(3));
                GradCase {
                    name: "batch_norm",
                    shapes: vec![vec![b, c, 2, 2], vec![c], vec![c]],
                    build: Box::new(move |g, ids| {
                        let rm = Tensor::zeros(&[c]);
                        let rv = Tensor::filled(&[c], 1.0);
                        g.batch_norm(ids[0], ids[1], ids[2], (&rm, &rv), 1e-5)
                            .unwrap()
                            .0
                    }),
                }
            }
            _ => GradCase {
                name: "composite",
                shapes: vec![vec![2, 2, 3, 3], vec![2, 1, 4, 4]],
                build: Box::new(|g, ids| {
                    let up = g.conv_transpose2d(ids[0], ids[1], None, 2, 1).unwrap();
                    let crop = g.crop_center(up, 5, 5).unwrap();
                    let act = g.activation(crop, Activation::Tanh).unwrap();
                    let m = g.mean(act);
                    let s = g.sum(ids[0]);
                    let sc = g.scale(s, 0.25);
                    let n = g.neg(sc);
                    let d = g.sub(m, n).unwrap();
                    g.add(d, m).unwrap()
                }),
            },
        };
        grad_check(&case, &mut rng);
        done += 1;
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs() < 60,
        "gradient suite took {elapsed:?}, budget is one minute"
    );
    println!("c01 gradient suite: 100 configurations in {elapsed:?}");
}

impl GradCase {
    /// Patch the linear case so the weight matches the input width.
    fn with_linear_dims(mut self) -> Self {
        let din = self.shapes[0][1];
        let dout = self.shapes[1][0];
        self.shapes[1] = vec![dout, din];
        self.shapes[2] = vec![dout];
        self
    }
}

// ---------------------------------------------------------------------
// criterion 2: WGAN constraints
// ---------------------------------------------------------------------

#[test]
fn c02_critic_clamp_over_500_iterations_and_latent_differentiability() {
    // (a) every trainable critic parameter stays inside [-0.01, 0.01]
    // after each of 500 critic updates on production-shaped 50x50 nets.
    let spec = GanSpec::dcgan(10, &[16, 8, 4], &[8, 16, 32], [1, 50, 50], 0.2, true).unwrap();
    let mut model = init_networks(&spec, 20_001).unwrap();
    let img = dataset::generate_conceptual(Pattern::SemiStraight, 20_002);
    let ds = dataset::to_tanh_range(
        &dataset::crop_patches(&img, 50, 256, 20_003).unwrap(),
    )
    .unwrap();
    let cfg = TrainConfig {
        batch_size: 32,
        ..TrainConfig::default()
    };
    let mut opt = OptimizerState::new(&model.store, model.critic_weight_ids());
    let mut rng = SeedRng::new(20_004);
    for iter in 0..500 {
        let mut real = Vec::with_capacity(32 * 2500);
        for _ in 0..32 {
            real.extend_from_slice(ds.patch(rng.below(ds.len())));
        }
        let real = Tensor::new(vec![32, 1, 50, 50], real).unwrap();
        let z = Tensor::new(vec![32, 10], rng.normal_vec(320)).unwrap();
        critic_iteration(&mut model, &mut opt, &cfg, &real, &z).unwrap();
        for id in model.critic_weight_ids() {
            for &w in model.store.value(id).data() {
                assert!(
                    (-0.01..=0.01).contains(&w),
                    "iteration {iter}: critic weight {w} escaped [-0.01, 0.01]"
                );
            }
        }
    }

    // (b) generator output/latent sensitivities match finite differences.
    let mut rng = SeedRng::new(20_005);
    let z0 = rng.normal_vec(10);
    let probe = Tensor::new(vec![1, 1, 50, 50], rng.normal_vec(2500)).unwrap();
    let eval = |z: &[f64]| -> (f64, Vec<f64>) {
        let mut store = model.store.clone();
        let mut g = Graph::new(Mode::Eval);
        let zn = g.var(Tensor::new(vec![1, 10], z.to_vec()).unwrap());
        let out = model.generator.forward(&mut g, &mut store, zn, true).unwrap();
        let loss = g.weighted_sum(out, &probe).unwrap();
        let value = g.value(loss).scalar_value().unwrap();
        let grads = g.backward(loss).unwrap();
        (value, grads.node(zn).unwrap().data().to_vec())
    };
    let (_, analytic) = eval(&z0);
    let mut f = |z: &[f64]| eval(z).0;
    let numeric = support::central_diff(&mut f, &z0, 1e-6);
    let err = support::max_rel_err(&analytic, &numeric);
    assert!(err <= 1e-4, "d(output)/dz rel err {err:.3e} above 1e-4");
    println!("c02 clamp held for 500 iterations; dz rel err {err:.3e}");
}

// ---------------------------------------------------------------------
// criterion 3: PCA oracle suite
// ---------------------------------------------------------------------

#[test]
fn c03_pca_eigenpairs_covariance_and_truncation() {
    // (a) eigenpairs vs the dense Jacobi oracle on 20 random toys.
    let mut rng = SeedRng::new(30_001);
    for toy in 0..20 {
        let (nx, ny) = (2 + rng.below(3), 2 + rng.below(3));
        let m = nx * ny;
        let n = if toy % 2 == 0 {
            2 + rng.below((m - 1).max(1))
        } else {
            m + 1 + rng.below(8)
        };
        let values: Vec<f64> = (0..n * m).map(|_| rng.uniform()).collect();
        let ds = Dataset::new(nx, ny, n, values, ValueRange::Binary).unwrap();
        let model = PcaModel::fit(&ds).unwrap();

        // dense covariance for the oracle
        let mut mean = vec![0.0; m];
        for p in ds.iter_patches() {
            for (acc, &v) in mean.iter_mut().zip(p) {
                *acc += v;
            }
        }
        for v in mean.iter_mut() {
            *v /= n as f64;
        }
        let mut cov = vec![0.0; m * m];
        for p in ds.iter_patches() {
            let c: Vec<f64> = p.iter().zip(&mean).map(|(&v, &mu)| v - mu).collect();
            for i in 0..m {
                for j in 0..m {
                    cov[i * m + j] += c[i] * c[j] / n as f64;
                }
            }
        }
        let (ovals, ovecs) = support::jacobi_eigen(&cov, m);
        let scale = ovals[0].abs().max(1.0);
        for (i, &lam) in model.eigenvalues().iter().enumerate() {
            assert!(
                (lam - ovals[i].max(0.0)).abs() <= 1e-8 * scale,
                "toy {toy} eigenvalue {i}: {lam} vs {}",
                ovals[i]
            );
        }
        let kept = model.kept();
        let recon = |vals: &[f64], at: &dyn Fn(usize) -> Vec<f64>| {
            let mut c = vec![0.0; m * m];
            #[allow(clippy::needless_range_loop)] // r indexes vals and at
            for r in 0..kept {
                let u = at(r);
                for i in 0..m {
                    for j in 0..m {
                        c[i * m + j] += vals[r] * u[i] * u[j];
                    }
                }
            }
            c
        };
        let mine = recon(model.eigenvalues(), &|r| model.eigenvector(r).to_vec());
        let oracle = recon(&ovals, &|r| ovecs[r * m..(r + 1) * m].to_vec());
        let worst = mine
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-8 * scale, "toy {toy}: reconstruction off {worst}");
    }

    // (b) 1e4 generated samples reproduce the truncated covariance.
    let values: Vec<f64> = (0..12 * 16).map(|_| rng.uniform()).collect();
    let ds = Dataset::new(4, 4, 12, values, ValueRange::Binary).unwrap();
    let model = PcaModel::fit(&ds).unwrap().truncate(0.75).unwrap();
    let mdim = 16;
    let mut target = vec![0.0; mdim * mdim];
    for r in 0..model.m {
        let lam = model.eigenvalues()[r];
        let u = model.eigenvector(r);
        for i in 0..mdim {
            for j in 0..mdim {
                target[i * mdim + j] += lam * u[i] * u[j];
            }
        }
    }
    let mean = model.mean_field();
    let mut cov = vec![0.0; mdim * mdim];
    let n_mc = 10_000;
    for _ in 0..n_mc {
        let y = model.sample_random(&mut rng);
        let d: Vec<f64> = y
            .values()
            .iter()
            .zip(mean.values())
            .map(|(a, b)| a - b)
            .collect();
        for i in 0..mdim {
            for j in 0..mdim {
                cov[i * mdim + j] += d[i] * d[j] / n_mc as f64;
            }
        }
    }
    let frob = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let diff: Vec<f64> = cov.iter().zip(&target).map(|(a, b)| a - b).collect();
    let rel = frob(&diff) / frob(&target);
    assert!(rel <= 0.1, "sampled covariance off by {rel} (limit 0.1)");

    // (c) exact truncation rule on the spectrum (4, 3, 2, 1).
    let toy = PcaModel::from_parts(
        2,
        2,
        vec![0.0; 4],
        vec![4.0, 3.0, 2.0, 1.0],
        vec![0.0; 16],
        4,
        1.0,
    )
    .unwrap();
    assert_eq!(toy.truncate(0.75).unwrap().m, 3);
    println!("c03 pca oracles: 20 toys, covariance rel err {rel:.4}, truncate=3");
}

// ---------------------------------------------------------------------
// criterion 4: distribution-shape reproduction
// ---------------------------------------------------------------------

#[test]
fn c04a_center_pixel_shapes_for_pca_and_data() {
    // Data: the center-pixel marginal of the cropped dataset is exactly
    // binary.
    let img = dataset::generate_conceptual(Pattern::SemiStraight, 40_001);
    let ds = dataset::crop_patches(&img, 50, 800, 40_002).unwrap();
    let center = 25 * 50 + 25;
    let centers: Vec<f64> = (0..ds.len()).map(|i| ds.patch(i)[center]).collect();
    assert!(centers.iter().all(|&v| v == 0.0 || v == 1.0));
    assert!(centers.contains(&0.0) && centers.contains(&1.0));

    // PCA: the same marginal of the fitted parametrization is Gaussian.
    let model = PcaModel::fit(&ds).unwrap().truncate(0.75).unwrap();
    let coef: Vec<f64> = (0..model.m)
        .map(|r| model.eigenvalues()[r].sqrt() * model.eigenvector(r)[center])
        .collect();
    let mu = model.mean_field().values()[center];
    let mut rng = SeedRng::new(40_003);
    let samples: Vec<f64> = (0..10_000)
        .map(|_| {
            mu + coef
                .iter()
                .map(|&c| c * rng.normal())
                .sum::<f64>()
        })
        .collect();
    let (_, var, skew, kurt) = support::sample_moments(&samples);
    assert!(var > 1e-6, "center pixel must vary");
    assert!(skew.abs() <= 0.2, "pca skewness {skew}");
    assert!((2.5..=3.5).contains(&kurt), "pca kurtosis {kurt}");
    println!("c04a data binary; pca center pixel skew {skew:.3}, kurt {kurt:.3}");
}

/// Desk-scale GAN training (4000 training patches, batch 64, 10000
/// generator iterations, the full-width DCGAN pair). Hours of CPU; run via
/// `cargo test --test acceptance -- --ignored c04b`.
#[test]
#[ignore = "desk-scale training runs for hours; see README"]
fn c04b_gan_center_pixel_mass_after_desk_scale_training() {
    let out = support::desk_out_dir();
    std::fs::create_dir_all(&out).unwrap();
    let cfg_path = out.join("desk.cfg");
    std::fs::write(&cfg_path, desk_config_text(&out)).unwrap();
    let (cfg, _) = PipelineConfig::parse_file(&cfg_path).unwrap();
    let ws = Workspace::new(cfg, String::new());

    support::run_cli_if_missing("gen-data", &cfg_path, &ws.dataset_pack());
    support::run_cli_if_missing("train-gan", &cfg_path, &ws.gan_checkpoint());
    let samples_path = ws.root().join("samples/gan/samples.gpck");
    support::run_cli_if_missing("sample", &cfg_path, &samples_path);

    let entries = gpck::read_entries(&samples_path).unwrap();
    let samples = gpck::find(&entries, "samples").unwrap();
    let (count, ny, nx) = (samples.shape[0], samples.shape[1], samples.shape[2]);
    let center = (ny / 2) * nx + nx / 2;
    let near_extreme = (0..count)
        .map(|i| samples.values[i * ny * nx + center])
        .filter(|v| v.min(1.0 - v) <= 0.15)
        .count();
    let mass = near_extreme as f64 / count as f64;
    println!("c04b gan center-pixel mass within 0.15 of {{0,1}}: {mass:.3} over {count} samples");
    assert!(
        mass >= 0.70,
        "only {mass:.3} of the center-pixel mass is within 0.15 of an extreme"
    );
}

fn desk_config_text(out: &std::path::Path) -> String {
    format!(
        "# desk-scale run\n\
         output_dir = {}\n\
         seed = 4242\n\
         dataset.count = 40000\n\
         train.subsample = 4000\n\
         train.batch_size = 64\n\
         train.generator_iters = 10000\n\
         sample.count = 4096\n\
         uq.ensemble = 5000\n",
        out.display()
    )
}

// ---------------------------------------------------------------------
// criterion 5: flow analytic suite
// ---------------------------------------------------------------------

#[test]
fn c05_flow_analytics() {
    let homogeneous = PermField::new(Field::filled(50, 50, 1.0)).unwrap();
    let uniform = FlowProblem::uniform_flow();

    // linear pressure and unit velocity
    let cfg = SimConfig::default();
    let t0 = Instant::now();
    let (p, flux) = geoparam_core::flow::solve_pressure(&homogeneous, &uniform, &cfg).unwrap();
    let h = 1.0 / 50.0;
    let p_ref = p.at(0, 25);
    let mut worst: f64 = 0.0;
    for j in 0..50 {
        for i in 0..50 {
            worst = worst.max((p.at(i, j) - (p_ref - h * i as f64)).abs());
        }
    }
    assert!(worst <= 1e-8, "pressure deviates from linear by {worst}");
    let (vx, vy) = flux.velocities();
    assert!(vx.iter().all(|v| (v - 1.0).abs() <= 1e-8));
    assert!(vy.iter().all(|v| v.abs() <= 1e-8));

    // piston breakthrough at the monotone CFL limit (exact shift regime)
    let piston_cfg = SimConfig {
        cfl_factor: 1.0,
        snapshot_times: vec![],
        ..SimConfig::default()
    };
    let sol = simulate(&homogeneous, &uniform, &piston_cfg).unwrap();
    let bt = sol.breakthrough.expect("breakthrough must occur");
    let dt_pvi = uniform.pvi_of_time(sol.dt);
    assert!(
        (bt - 1.0).abs() <= dt_pvi,
        "breakthrough {bt} PVI vs 1.0 +- {dt_pvi}"
    );

    // diagonal symmetry of the homogeneous quarter-five solution
    let q5 = FlowProblem::quarter_five_spot();
    let (pq, _) = geoparam_core::flow::solve_pressure(&homogeneous, &q5, &cfg).unwrap();
    let mut asym: f64 = 0.0;
    for j in 0..50 {
        for i in 0..50 {
            asym = asym.max((pq.at(i, j) - pq.at(j, i)).abs());
        }
    }
    assert!(asym <= 1e-9, "diagonal asymmetry {asym}");

    // per-step conservation over a full 2-PVI heterogeneous run
    let mut rng = SeedRng::new(50_001);
    let het = PermField::new(
        Field::new(50, 50, (0..2500).map(|_| (rng.uniform()).exp()).collect()).unwrap(),
    )
    .unwrap();
    for prob in [q5, uniform] {
        let sim_start = Instant::now();
        let (_, flux) = geoparam_core::flow::solve_pressure(&het, &prob, &cfg).unwrap();
        let dt = geoparam_core::flow::cfl_dt(&flux, &prob, 0.9);
        let mut s = Field::zeros(50, 50);
        let mut t = 0.0;
        let mut worst: f64 = 0.0;
        while t < 0.4 {
            let step = dt.min(0.4 - t);
            let (next, bal) =
                geoparam_core::flow::advance_saturation(&s, &flux, &prob, step).unwrap();
            let stored: f64 = next
                .values()
                .iter()
                .zip(s.values())
                .map(|(&a, &b)| (a - b) * prob.porosity / 2500.0)
                .sum();
            worst = worst.max((stored - (bal.water_in - bal.water_out)).abs());
            s = next;
            t += step;
        }
        assert!(worst <= 1e-12, "{:?}: imbalance {worst}", prob.kind);
        let elapsed = sim_start.elapsed();
        assert!(
            elapsed.as_secs() < 10,
            "{:?} run took {elapsed:?}, budget 10 s",
            prob.kind
        );
    }
    println!(
        "c05 flow analytics: linear {worst:.1e}, piston {bt:.4} PVI, asym {asym:.1e}, first solve {:?}",
        t0.elapsed()
    );
}

// ---------------------------------------------------------------------
// criterion 6: PVI arithmetic
// ---------------------------------------------------------------------

#[test]
fn c06_pvi_arithmetic() {
    let prob = FlowProblem::uniform_flow(); // rate 1, porosity 0.2
    assert!((prob.pvi_of_time(0.4) - 2.0).abs() <= 1e-12);
    assert!((prob.time_of_pvi(0.25) - 0.05).abs() <= 1e-12);
    // and through the simulator: the 0.25-PVI snapshot lands at t = 0.05
    let perm = PermField::new(Field::filled(20, 20, 1.0)).unwrap();
    let cfg = SimConfig {
        snapshot_times: vec![prob.time_of_pvi(0.25)],
        ..SimConfig::default()
    };
    let sol = simulate(&perm, &prob, &cfg).unwrap();
    assert_eq!(sol.snapshots.len(), 1);
    assert!((sol.snapshots[0].0 - 0.05).abs() <= 1e-12);
    assert!((sol.water_cut.last().unwrap().0 - 2.0).abs() <= 1e-9);
    println!("c06 PVI arithmetic: t_end 0.4 = 2 PVI, snapshot 0.25 PVI = t 0.05");
}

// ---------------------------------------------------------------------
// criterion 7: UQ oracle suite
// ---------------------------------------------------------------------

fn bernoulli_moment(p: f64, k: u32) -> f64 {
    let q = 1.0 - p;
    p * q.powi(k as i32) + q * (-p).powi(k as i32)
}

fn bernoulli_ses(p: f64, n: f64) -> (f64, f64, f64, f64) {
    let m = |k: u32| bernoulli_moment(p, k);
    let (m2, m3, m4, m5, m6, m8) = (m(2), m(3), m(4), m(5), m(6), m(8));
    let v22 = (m4 - m2 * m2) / n;
    let v33 = (m6 - m3 * m3 - 6.0 * m2 * m4 + 9.0 * m2 * m2 * m2) / n;
    let v23 = (m5 - 4.0 * m2 * m3) / n;
    let a_s = m2.powf(-1.5);
    let b_s = -1.5 * m3 * m2.powf(-2.5);
    let v44 = (m8 - m4 * m4 - 8.0 * m3 * m5 + 16.0 * m2 * m3 * m3) / n;
    let v24 = (m6 - m2 * m4 - 4.0 * m3 * m3) / n;
    let a_k = 1.0 / (m2 * m2);
    let b_k = -2.0 * m4 / (m2 * m2 * m2);
    (
        (m2 / n).sqrt(),
        v22.sqrt(),
        (a_s * a_s * v33 + b_s * b_s * v22 + 2.0 * a_s * b_s * v23).max(0.0).sqrt(),
        (a_k * a_k * v44 + b_k * b_k * v22 + 2.0 * a_k * b_k * v24).max(0.0).sqrt(),
    )
}

#[test]
fn c07_uq_oracles() {
    // (a) Bernoulli ensembles vs analytic moments within 3 SE at n = 1e5.
    let ps = [0.15, 0.3, 0.55, 0.8];
    let n = 100_000;
    let mut rng = SeedRng::new(70_001);
    let mut acc = MomentAccumulator::new(ps.len());
    let mut row = vec![0.0; ps.len()];
    for _ in 0..n {
        for (c, &p) in ps.iter().enumerate() {
            row[c] = if rng.uniform() < p { 1.0 } else { 0.0 };
        }
        acc.push(&row);
    }
    let stats = acc.finalize(ps.len(), 1, SourceTag::Data).unwrap();
    for (c, &p) in ps.iter().enumerate() {
        let q = 1.0 - p;
        let (se_m, se_v, se_s, se_k) = bernoulli_ses(p, n as f64);
        assert!((stats.mean.values()[c] - p).abs() <= 3.0 * se_m);
        assert!((stats.variance.values()[c] - p * q).abs() <= 3.0 * se_v);
        let skew_true = (q - p) / (p * q).sqrt();
        assert!((stats.skewness.values()[c] - skew_true).abs() <= 3.0 * se_s);
        let kurt_true = (1.0 - 3.0 * p * q) / (p * q);
        assert!(
            (stats.kurtosis.values()[c] - kurt_true).abs() <= 3.0 * se_k,
            "cell {c}: kurt {} vs {kurt_true} (3se {})",
            stats.kurtosis.values()[c],
            3.0 * se_k
        );
    }

    // (b) streaming equals two-pass within 1e-10.
    let obs: Vec<Vec<f64>> = (0..3000).map(|_| rng.normal_vec(4)).collect();
    let mut acc2 = MomentAccumulator::new(4);
    for o in &obs {
        acc2.push(o);
    }
    let s2 = acc2.clone().finalize(4, 1, SourceTag::Pca).unwrap();
    for c in 0..4 {
        let xs: Vec<f64> = obs.iter().map(|v| v[c]).collect();
        let (mean, m2, skew, kurt) = support::sample_moments(&xs);
        assert!((s2.mean.values()[c] - mean).abs() <= 1e-10);
        assert!((s2.variance.values()[c] - m2).abs() <= 1e-10);
        assert!((s2.skewness.values()[c] - skew).abs() <= 1e-10);
        assert!((s2.kurtosis.values()[c] - kurt).abs() <= 1e-10);
    }

    // (c) merge is grouping-independent within 1e-10.
    for chunk in [7usize, 128, 1500] {
        let mut merged = MomentAccumulator::new(4);
        for block in obs.chunks(chunk) {
            let mut part = MomentAccumulator::new(4);
            for o in block {
                part.push(o);
            }
            merged = merged.merge(&part);
        }
        let sm = merged.finalize(4, 1, SourceTag::Pca).unwrap();
        for c in 0..4 {
            assert!((sm.mean.values()[c] - s2.mean.values()[c]).abs() <= 1e-10);
            assert!((sm.variance.values()[c] - s2.variance.values()[c]).abs() <= 1e-10);
            assert!((sm.skewness.values()[c] - s2.skewness.values()[c]).abs() <= 1e-10);
            assert!((sm.kurtosis.values()[c] - s2.kurtosis.values()[c]).abs() <= 1e-10);
        }
    }
    println!("c07 uq oracles: bernoulli within 3se, streaming/two-pass/merge within 1e-10");
}

// ---------------------------------------------------------------------
// criterion 8: Scott/KDE suite
// ---------------------------------------------------------------------

#[test]
fn c08_scott_kde_normal_oracle() {
    let mut rng = SeedRng::new(80_001);
    let est = DensityEstimate::from_samples(rng.normal_vec(100_000), None).unwrap();
    let at_zero = est.eval(0.0);
    assert!(
        (at_zero - 0.3989).abs() <= 0.01,
        "KDE(0) = {at_zero}, want 0.3989 +- 0.01"
    );
    let integral = est.grid_integral();
    assert!(
        (integral - 1.0).abs() <= 1e-3,
        "KDE integral {integral}, want 1 +- 1e-3"
    );
    println!("c08 KDE(0) = {at_zero:.4}, integral {integral:.5}");
}

// ---------------------------------------------------------------------
// criterion 9: end-to-end micro pipeline, twice, byte-identical
// ---------------------------------------------------------------------

#[test]
fn c09_micro_pipeline_runs_twice_byte_identically() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let out: PathBuf = tmp.path().join("out");
    let cfg_path = tmp.path().join("micro.cfg");
    // 200 patches, 500 generator iterations, 100-realization ensembles.
    std::fs::write(
        &cfg_path,
        format!(
            "output_dir = {}\n\
             seed = 90901\n\
             dataset.count = 200\n\
             dataset.preview_pgms = 2\n\
             pca.fit_subsample = 200\n\
             zdim = 10\n\
             gan.gen_channels = 16,8\n\
             gan.critic_channels = 8,16\n\
             train.subsample = 0\n\
             train.batch_size = 32\n\
             train.generator_iters = 500\n\
             train.checkpoint_every = 250\n\
             uq.ensemble = 100\n\
             sample.count = 4\n",
            out.display()
        ),
    )
    .unwrap();
    let (cfg, _) = PipelineConfig::parse_file(&cfg_path).unwrap();
    let ws = Workspace::new(cfg, String::new());

    let run_all = || {
        for stage in [
            "gen-data",
            "fit-pca",
            "train-gan",
            "sample",
            "simulate",
            "propagate",
            "report",
        ] {
            support::run_cli(stage, &cfg_path);
        }
    };
    run_all();
    let first = support::read_tree(ws.root());
    run_all();
    let second = support::read_tree(ws.root());

    assert_eq!(first.len(), second.len(), "artifact sets differ");
    let mut compared = 0;
    for (path, bytes) in &first {
        let other = &second[path];
        if path.ends_with("timings.json") {
            continue; // wall-clock sidecars
        }
        if path.ends_with("train_log.csv") {
            let strip = |b: &[u8]| {
                String::from_utf8_lossy(b)
                    .lines()
                    .map(|l| l.rsplit_once(',').map(|(a, _)| a.to_string()).unwrap_or_default())
                    .collect::<Vec<_>>()
            };
            assert_eq!(strip(bytes), strip(other), "{path} differs beyond wall_ms");
            compared += 1;
            continue;
        }
        assert_eq!(bytes, other, "{path} not byte-identical across reruns");
        compared += 1;
    }
    assert!(compared > 80, "only {compared} artifacts compared");

    // the report must carry 4 moment maps x 3 sources x 2 problems
    let report = std::fs::read_to_string(ws.report_path()).unwrap();
    assert!(!report.contains("(missing)"));
    let mut maps = 0;
    for problem in ["quarter_five_spot", "uniform_flow"] {
        for source in ["data", "pca", "gan"] {
            for map in ["mean", "variance", "skewness", "kurtosis"] {
                let rel = format!("propagate/{problem}/{source}/{map}.pgm");
                assert!(report.contains(&rel), "report lacks {rel}");
                assert!(ws.root().join(&rel).exists());
                maps += 1;
            }
        }
    }
    assert_eq!(maps, 24);

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs() < 900,
        "micro pipeline pair took {elapsed:?}, budget 15 minutes"
    );
    println!("c09 micro pipeline x2 byte-identical ({compared} artifacts) in {elapsed:?}");
}

// ---------------------------------------------------------------------
// criterion 10: qualitative parity (non-gating, reported)
// ---------------------------------------------------------------------

/// Desk-scale parity report: mean/variance saturation maps of the GAN
/// ensemble vs the data ensemble. Reported, not gating. Requires the same
/// desk-scale run directory as c04b (reused if present).
#[test]
#[ignore = "desk-scale propagation runs for hours; see README"]
fn c10_parity_report_desk_scale() {
    let out = support::desk_out_dir();
    std::fs::create_dir_all(&out).unwrap();
    let cfg_path = out.join("desk.cfg");
    std::fs::write(&cfg_path, desk_config_text(&out)).unwrap();
    let (cfg, _) = PipelineConfig::parse_file(&cfg_path).unwrap();
    let ws = Workspace::new(cfg, String::new());

    support::run_cli_if_missing("gen-data", &cfg_path, &ws.dataset_pack());
    support::run_cli_if_missing("fit-pca", &cfg_path, &ws.pca_model());
    support::run_cli_if_missing("train-gan", &cfg_path, &ws.gan_checkpoint());
    let probe = ws
        .root()
        .join("propagate/uniform_flow/gan/variance.gpck");
    support::run_cli_if_missing("propagate", &cfg_path, &probe);

    for problem in ["quarter_five_spot", "uniform_flow"] {
        for map in ["mean", "variance"] {
            let read = |source: &str| -> Vec<f64> {
                let path = ws
                    .root()
                    .join(format!("propagate/{problem}/{source}/{map}.gpck"));
                let entries = gpck::read_entries(&path).unwrap();
                gpck::find(&entries, map).unwrap().values.clone()
            };
            let data = read("data");
            let gan = read("gan");
            let mae = data
                .iter()
                .zip(&gan)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / data.len() as f64;
            // Non-gating: the parity figure is reported, not asserted.
            println!(
                "c10 parity {problem}/{map}: GAN vs data MAE {mae:.4} (target 0.1)"
            );
        }
    }
}
