//! Command-line front end: transport distances, barycentric image transforms,
//! the toy defense pipeline, mutual-information diagnostics, and the Gaussian
//! denoising demo.

mod checkpoint;
mod config;
mod csvio;
mod dataset;
mod pnm;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use beckman::attack::AttackConfig;
use beckman::pipeline::{
    evaluate, finetune_barycentric, make_toy_dataset, penultimate_features, train_adversarial,
    EvalOptions, FinetuneConfig, TrainConfig,
};
use beckman::solver::{check_step_sizes, solve_distance, SolverConfig};
use beckman::transform::{barycentric_transform, gaussian_image, make_marginals, ImageTensor, TransformParams};
use beckman::{mi_pairwise, mi_param_output, DensityGrid, MlpModel};

const DEFAULT_EPS: f64 = 8.0 / 255.0;

#[derive(Parser)]
#[command(name = "beckman", version, about = "Beckman transport distances, barycenters, and the barycentric defense toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimum-flow transport distance between two equal-mass grayscale images
    Distance(DistanceArgs),
    /// Barycentric transform of an image (PGM or PPM)
    Barycenter(BarycenterArgs),
    /// Toy defense pipeline: dataset synthesis, pretraining, fine-tuning, evaluation
    #[command(subcommand)]
    Defend(DefendCommand),
    /// Mutual information of prediction CSVs (one file: parameter-output surrogate; two: pairwise)
    Mi(MiArgs),
    /// Gaussian denoising demo: input/barycenter image grid plus a PSNR report
    DemoGaussian(DemoArgs),
}

#[derive(Args)]
struct SolverFlags {
    #[arg(long)]
    tau1: Option<f64>,
    #[arg(long)]
    tau2: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    /// Plain-text key=value config file (flags take precedence)
    #[arg(long)]
    config: Option<PathBuf>,
}

impl SolverFlags {
    fn resolve(&self) -> Result<SolverConfig> {
        let file = config::ConfigFile::load(self.config.as_deref())?;
        Ok(SolverConfig {
            tau1: config::resolve(self.tau1, &file, "tau1", 0.1)?,
            tau2: config::resolve(self.tau2, &file, "tau2", 1.0)?,
            iterations: config::resolve(self.iters, &file, "iters", 200)?,
            ..SolverConfig::default()
        })
    }
}

#[derive(Args)]
struct DistanceArgs {
    /// First input image (binary PGM)
    input1: PathBuf,
    /// Second input image (binary PGM)
    input2: PathBuf,
    /// Write an (iteration, objective, residual) trace CSV
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct BarycenterArgs {
    /// Input image (binary PGM or PPM)
    input: PathBuf,
    /// Output image path (same format as the input)
    output: PathBuf,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Subcommand)]
enum DefendCommand {
    /// Write the synthetic two-class dataset to a directory
    Synth(SynthArgs),
    /// Adversarial (PGD) pretraining of the toy classifier
    Pretrain(PretrainArgs),
    /// One epoch of fine-tuning on barycenters of the clean samples
    Finetune(FinetuneArgs),
    /// Accuracy report (clean / FGSM / PGD-10 / PGD-20), optionally with barycentric inference
    Eval(EvalArgs),
    /// Export penultimate-layer features to CSV
    Features(FeaturesArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 512)]
    count: usize,
    #[arg(long, default_value_t = 100)]
    seed: u64,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output checkpoint path
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    /// l-infinity attack budget used for the adversarial batches
    #[arg(long)]
    eps: Option<f64>,
    /// PGD steps used during training
    #[arg(long)]
    steps: Option<usize>,
    /// Hidden width of the classifier
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct FinetuneArgs {
    #[arg(long)]
    data: PathBuf,
    /// Input checkpoint (the adversarially pretrained model)
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output checkpoint for the fine-tuned model
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    eps: Option<f64>,
    /// PGD step count for the PGD row (a 2x variant is always reported too)
    #[arg(long)]
    steps: Option<usize>,
    /// Also evaluate each setting behind the barycentric transform
    #[arg(long)]
    barycentric: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for report.csv and the per-setting prediction CSVs
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output CSV (feature columns plus a label column)
    #[arg(long)]
    out: PathBuf,
    /// Attack the images (FGSM at this epsilon) before extracting features
    #[arg(long)]
    eps: Option<f64>,
    /// Transform the (possibly attacked) images before the forward pass
    #[arg(long)]
    barycentric: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct MiArgs {
    /// Prediction CSV (n rows of C softmax probabilities)
    preds_a: PathBuf,
    /// Optional second prediction CSV; switches to the pairwise estimator
    preds_b: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum NoiseKind {
    None,
    Uniform,
    Fgsm,
}

#[derive(Args)]
struct DemoArgs {
    /// Output directory (six PGMs plus psnr.csv)
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = NoiseKind::None)]
    noise: NoiseKind,
    /// Perturbation amplitude for the uniform and fgsm modes
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Distance(args) => cmd_distance(args),
        Command::Barycenter(args) => cmd_barycenter(args),
        Command::Defend(cmd) => match cmd {
            DefendCommand::Synth(args) => cmd_synth(args),
            DefendCommand::Pretrain(args) => cmd_pretrain(args),
            DefendCommand::Finetune(args) => cmd_finetune(args),
            DefendCommand::Eval(args) => cmd_eval(args),
            DefendCommand::Features(args) => cmd_features(args),
        },
        Command::Mi(args) => cmd_mi(args),
        Command::DemoGaussian(args) => cmd_demo(args),
    }
}

fn gray_density(path: &Path) -> Result<DensityGrid> {
    let img = pnm::read_image(path)?;
    if img.channels() != 1 {
        bail!("{}: distance expects grayscale (P5) input", path.display());
    }
    Ok(DensityGrid::new(img.height(), img.width(), img.values().to_vec())?)
}

fn cmd_distance(args: DistanceArgs) -> Result<()> {
    let mut config = args.solver.resolve()?;
    config.trace_every = if args.trace.is_some() { 1 } else { 0 };
    let mu1 = gray_density(&args.input1)?;
    let mu2 = gray_density(&args.input2)?;
    let solution = solve_distance(&mu1, &mu2, &config)?;
    if !solution.trace.step_report.satisfied {
        eprintln!(
            "warning: step sizes violate the convergence condition (tau1*tau2*lambda_max = {:.4} >= 1)",
            solution.trace.step_report.product
        );
    }
    if let Some(path) = &args.trace {
        csvio::write_trace(path, &solution.trace.records)?;
    }
    println!("{}", solution.value);
    Ok(())
}

fn cmd_barycenter(args: BarycenterArgs) -> Result<()> {
    let file = config::ConfigFile::load(args.solver.config.as_deref())?;
    let params = TransformParams {
        theta: config::resolve(args.theta, &file, "theta", 4.0)?,
        alpha: config::resolve(args.alpha, &file, "alpha", 1.0)?,
        beta: config::resolve(args.beta, &file, "beta", 1.0)?,
        rho: config::resolve(args.rho, &file, "rho", 0.5)?,
    };
    let solver = args.solver.resolve()?;
    let _seed: u64 = config::resolve(args.seed, &file, "seed", 0)?; // transform is deterministic

    let img = pnm::read_image(&args.input)?;
    let report = check_step_sizes(&solver, img.height(), img.width())?;
    if !report.satisfied {
        eprintln!(
            "warning: step sizes violate the convergence condition (tau1*tau2*(lambda_max+3) = {:.4} >= 1)",
            report.product
        );
    }
    let out = barycentric_transform(&img, &params, &solver)?;
    pnm::write_image(&args.output, &out)?;
    println!("wrote {}", args.output.display());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let data = make_toy_dataset(args.count, args.seed);
    dataset::save(&args.out, &data)?;
    println!("wrote {} samples to {}", data.len(), args.out.display());
    Ok(())
}

fn cmd_pretrain(args: PretrainArgs) -> Result<()> {
    let file = config::ConfigFile::load(args.config.as_deref())?;
    let epochs = config::resolve(args.epochs, &file, "epochs", 5)?;
    let eps = config::resolve(args.eps, &file, "eps", DEFAULT_EPS)?;
    let steps = config::resolve(args.steps, &file, "steps", 10)?;
    let hidden = config::resolve(args.hidden, &file, "hidden", 32)?;
    let seed = config::resolve(args.seed, &file, "seed", 0)?;

    let data = dataset::load(&args.data)?;
    let input_dim = data.image(0).values().len();
    let mut model = MlpModel::new_random(&[input_dim, hidden, data.class_count()], seed)?;
    let train_config = TrainConfig { epochs, seed: seed + 1, ..TrainConfig::default() };
    let attack = AttackConfig::pgd(eps, steps);
    let log = train_adversarial(&mut model, &data, &train_config, &attack)?;
    for stats in &log {
        println!(
            "epoch {}: clean {:.4} adversarial {:.4}",
            stats.epoch, stats.clean_accuracy, stats.adversarial_accuracy
        );
    }
    checkpoint::save(&args.checkpoint, &model)?;
    println!("wrote checkpoint {}", args.checkpoint.display());
    Ok(())
}

fn cmd_finetune(args: FinetuneArgs) -> Result<()> {
    let file = config::ConfigFile::load(args.config.as_deref())?;
    let seed = config::resolve(args.seed, &file, "seed", 0)?;
    let data = dataset::load(&args.data)?;
    let mut model = checkpoint::load(&args.checkpoint)?;
    let config = FinetuneConfig { seed: seed + 2, ..FinetuneConfig::default() };
    let steps = finetune_barycentric(
        &mut model,
        &data,
        &config,
        &TransformParams::default(),
        &SolverConfig::default(),
    )?;
    checkpoint::save(&args.out, &model)?;
    println!("fine-tuned for {steps} steps over {} samples", data.len());
    println!("wrote checkpoint {}", args.out.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let file = config::ConfigFile::load(args.config.as_deref())?;
    let eps = config::resolve(args.eps, &file, "eps", DEFAULT_EPS)?;
    let steps = config::resolve(args.steps, &file, "steps", 10)?;
    let seed = config::resolve(args.seed, &file, "seed", 0)?;

    let data = dataset::load(&args.data)?;
    let model = checkpoint::load(&args.checkpoint)?;

    let attacks: Vec<(String, Option<AttackConfig>)> = vec![
        ("clean".to_string(), None),
        ("fgsm".to_string(), Some(AttackConfig::fgsm(eps))),
        (format!("pgd{steps}"), Some(AttackConfig::pgd(eps, steps))),
        (format!("pgd{}", steps * 2), Some(AttackConfig::pgd(eps, steps * 2))),
    ];

    let mut rows = Vec::new();
    let mut preds = Vec::new();
    for barycentric in [false, true] {
        if barycentric && !args.barycentric {
            continue;
        }
        for (name, attack) in &attacks {
            let options = EvalOptions {
                attack: *attack,
                barycentric_inference: barycentric,
                seed: seed + 3,
                ..EvalOptions::default()
            };
            let report = evaluate(&model, &data, &options)?;
            let label = if barycentric { format!("{name}_bary") } else { (*name).to_string() };
            println!("{label}: {:.4}", report.accuracy);
            rows.push((label.clone(), report.accuracy));
            preds.push((label, report.predictions));
        }
    }

    if let Some(out) = &args.out {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        csvio::write_report(&out.join("report.csv"), &rows)?;
        for (label, p) in &preds {
            csvio::write_predictions(&out.join(format!("preds_{label}.csv")), p)?;
        }
        println!("wrote report and predictions to {}", out.display());
    }
    Ok(())
}

fn cmd_features(args: FeaturesArgs) -> Result<()> {
    let data = dataset::load(&args.data)?;
    let model = checkpoint::load(&args.checkpoint)?;

    let mut working = data;
    if let Some(eps) = args.eps {
        let options = EvalOptions {
            attack: Some(AttackConfig::fgsm(eps)),
            seed: args.seed + 3,
            ..EvalOptions::default()
        };
        working = attacked_dataset(&model, &working, &options)?;
    }
    if args.barycentric {
        working = working.barycentric(&TransformParams::default(), &SolverConfig::default())?;
    }

    let rows = penultimate_features(&model, &working)?;
    let feature_dim = rows.first().map_or(0, |(f, _)| f.len());
    csvio::write_features(&args.out, &rows, feature_dim)?;
    println!("wrote {} feature rows to {}", rows.len(), args.out.display());
    Ok(())
}

/// Rebuilds a dataset with each image replaced by its attacked version.
fn attacked_dataset(
    model: &MlpModel,
    data: &beckman::pipeline::LabeledDataset,
    options: &EvalOptions,
) -> Result<beckman::pipeline::LabeledDataset> {
    use beckman::attack::attack_pgd;
    use rand::SeedableRng;
    let Some(attack) = &options.attack else {
        return Ok(data.clone());
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(options.seed);
    let mut images = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let img = data.image(i);
        let adv = attack_pgd(model, img.values(), data.label(i), attack, &mut rng)?;
        images.push(ImageTensor::new(img.channels(), img.height(), img.width(), adv)?);
    }
    Ok(beckman::pipeline::LabeledDataset::new(images, data.labels().to_vec(), data.class_count())?)
}

fn cmd_mi(args: MiArgs) -> Result<()> {
    let preds_a = csvio::read_predictions(&args.preds_a)?;
    let value = match &args.preds_b {
        Some(path_b) => mi_pairwise(&preds_a, &csvio::read_predictions(path_b)?)?,
        None => mi_param_output(&preds_a),
    };
    println!("{value}");
    Ok(())
}

const DEMO_SIZE: usize = 28;
const DEMO_SIGMA: f64 = 5.5;

fn psnr(a: &[f64], b: &[f64]) -> f64 {
    let mse: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

fn cmd_demo(args: DemoArgs) -> Result<()> {
    use rand::{Rng, SeedableRng};
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let clean = gaussian_image(DEMO_SIZE, DEMO_SIZE, DEMO_SIGMA, 1.0);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let degraded = match args.noise {
        NoiseKind::None => clean.clone(),
        NoiseKind::Uniform => {
            let values = clean
                .values()
                .iter()
                .map(|v| (v + rng.random_range(-args.eps..args.eps)).clamp(0.0, 1.0))
                .collect();
            ImageTensor::new(1, DEMO_SIZE, DEMO_SIZE, values)?
        }
        NoiseKind::Fgsm => {
            // Attack a small seeded demo classifier trained on the toy set.
            let model = demo_model(args.seed)?;
            let cfg = AttackConfig::fgsm(args.eps);
            let adv = beckman::attack::attack_fgsm(&model, clean.values(), 0, &cfg)?;
            ImageTensor::new(1, DEMO_SIZE, DEMO_SIZE, adv)?
        }
    };

    let params = TransformParams::default();
    let solver = SolverConfig::default();
    let bary_clean = barycentric_transform(&clean, &params, &solver)?;
    let bary_degraded = barycentric_transform(&degraded, &params, &solver)?;

    let channel = DensityGrid::new(DEMO_SIZE, DEMO_SIZE, degraded.values().to_vec())?;
    let (m_plus, m_minus) = make_marginals(&channel, params.theta);
    let to_image = |d: &DensityGrid| -> Result<ImageTensor> {
        let peak = d.values().iter().cloned().fold(0.0, f64::max).max(1e-12);
        let values = d.values().iter().map(|v| v / peak).collect();
        Ok(ImageTensor::new(1, DEMO_SIZE, DEMO_SIZE, values)?)
    };

    pnm::write_image(&args.out.join("clean.pgm"), &clean)?;
    pnm::write_image(&args.out.join("degraded.pgm"), &degraded)?;
    pnm::write_image(&args.out.join("bary_clean.pgm"), &bary_clean)?;
    pnm::write_image(&args.out.join("bary_degraded.pgm"), &bary_degraded)?;
    pnm::write_image(&args.out.join("marginal_plus.pgm"), &to_image(&m_plus)?)?;
    pnm::write_image(&args.out.join("marginal_minus.pgm"), &to_image(&m_minus)?)?;

    let rows = vec![
        ("degraded".to_string(), psnr(degraded.values(), clean.values())),
        ("bary_clean".to_string(), psnr(bary_clean.values(), clean.values())),
        ("bary_degraded".to_string(), psnr(bary_degraded.values(), clean.values())),
    ];
    for (name, value) in &rows {
        println!("psnr {name}: {value:.4} dB");
    }
    csvio::write_psnr(&args.out.join("psnr.csv"), &rows)?;
    Ok(())
}

/// Small classifier for the demo's FGSM mode: pretrained quickly on the
/// synthetic set so the attack gradient carries real structure.
fn demo_model(seed: u64) -> Result<MlpModel> {
    let data = make_toy_dataset(128, 100);
    let mut model = MlpModel::new_random(&[DEMO_SIZE * DEMO_SIZE, 16, 2], seed)?;
    let config = TrainConfig { epochs: 2, seed: seed + 1, ..TrainConfig::default() };
    train_adversarial(&mut model, &data, &config, &AttackConfig::pgd(DEFAULT_EPS, 10))?;
    Ok(model)
}
