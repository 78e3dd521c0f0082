use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ncmsg::bench::{self, ConvergenceConfig, ConvergenceTarget, MseConfig, RobustnessConfig};
use ncmsg::datagen::{self, ClassProblemConfig, SyntheticConfig, TransformMode};
use ncmsg::ml::{self, CentroidModel, ClassifierSpec, Descriptor, Divergence};
use ncmsg::{divergence, estimators, io};
use ncmsg::{Error, Metric, OptimizerConfig, ParameterPoint, RegularizationSpec};

#[derive(Parser)]
#[command(name = "ncmsg", version, about = "Estimation, divergences and classification with NC-MSG distributions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (manifest + CSV batches).
    Simulate(SimulateArgs),
    /// Regularized maximum-likelihood fit of every batch of a dataset.
    Fit(FitArgs),
    /// KL divergence between two parameter files.
    Kl(KlArgs),
    /// Symmetrized-KL center of mass of parameter files.
    Barycenter(BarycenterArgs),
    /// Nearest-centroid classification of batches.
    #[command(subcommand)]
    Classify(ClassifyCommand),
    /// Experiment harnesses writing CSV tables.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Args)]
struct OptimArgs {
    /// Gradient-norm tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long = "max-iter", default_value_t = 1000)]
    max_iter: usize,
}

impl OptimArgs {
    fn config(&self) -> OptimizerConfig {
        OptimizerConfig::default()
            .with_tolerance(self.tol)
            .with_max_iterations(self.max_iter)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 10)]
    p: usize,
    #[arg(long, default_value_t = 150)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    /// Batches per class.
    #[arg(long, default_value_t = 1)]
    batches: usize,
    /// With 1 class every batch shares one parameter (saved as truth.json)
    /// and batches are unlabeled.
    #[arg(long, default_value_t = 1)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[command(flatten)]
    optim: OptimArgs,
    /// Parameter JSON; the report goes next to it as `<stem>.report.csv`.
    /// Several batches get `<stem>.<index>.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct KlArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    symmetric: bool,
}

#[derive(Args)]
struct BarycenterArgs {
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    optim: OptimArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SpecArgs {
    #[arg(long, default_value = "ncmsg-theta")]
    descriptor: String,
    #[arg(long, default_value = "ncmsg-sym-kl")]
    divergence: String,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
}

impl SpecArgs {
    fn spec(&self) -> Result<ClassifierSpec, Error> {
        let descriptor: Descriptor = self.descriptor.parse()?;
        let divergence: Divergence = self.divergence.parse()?;
        ClassifierSpec::new(descriptor, divergence, RegularizationSpec::new(self.kappa, self.beta)?)
    }
}

#[derive(Subcommand)]
enum ClassifyCommand {
    /// Train centroids on a labeled dataset and save the model as JSON.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        optim: OptimArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print one predicted label per batch.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        optim: OptimArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the F1-weighted score on a labeled dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        optim: OptimArgs,
    },
    /// F1-weighted of the NC-MSG classifier on a validation set for each β.
    Tune {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        validation: PathBuf,
        /// Defaults to 1e-13, 1e-12, …, 1e-3.
        #[arg(long, value_delimiter = ',')]
        betas: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[command(flatten)]
        optim: OptimArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Fim,
    Product,
}

impl From<OptimizerArg> for Metric {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::Fim => Metric::Fisher,
            OptimizerArg::Product => Metric::Product,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Nll,
    Barycenter,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Mean,
    Rotation,
    Both,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Per-iteration cost and gradient norm of RGD runs.
    Convergence {
        #[arg(long, value_enum, default_value = "nll")]
        target: TargetArg,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1e-5, 1e-3])]
        beta: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        /// Numbers of points for the barycenter target.
        #[arg(long, value_delimiter = ',', default_values_t = [2, 10])]
        points: Vec<usize>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "fim")]
        optimizer: Vec<OptimizerArg>,
        #[arg(long, default_value_t = 10)]
        p: usize,
        #[arg(long, default_value_t = 150)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        nu: f64,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        optim: OptimArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Median iterations to the tolerance per setting and optimizer.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Location and scatter MSE of four estimators.
    Mse {
        #[arg(long = "n-grid", value_delimiter = ',', default_values_t = [100, 1000])]
        n_grid: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0.1)]
        nu: f64,
        #[arg(long, default_value_t = 10)]
        p: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "max-iter", default_value_t = 2000)]
        max_iter: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// F1-weighted of the six classifiers under rigid transforms of the test set.
    Robustness {
        #[arg(long, value_enum, default_value = "rotation")]
        mode: ModeArg,
        #[arg(long = "t-grid", value_delimiter = ',', default_values_t = [0.0, 0.25, 0.5, 0.75, 1.0])]
        t_grid: Vec<f64>,
        #[arg(long, default_value_t = 4)]
        p: usize,
        #[arg(long, default_value_t = 45)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        nu: f64,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long = "train-batches", default_value_t = 100)]
        train_batches: usize,
        #[arg(long = "test-batches", default_value_t = 100)]
        test_batches: usize,
        #[arg(long = "rotation-scale", default_value_t = 1.0)]
        rotation_scale: f64,
        #[arg(long = "offset-scale", default_value_t = 1.0)]
        offset_scale: f64,
        #[arg(long, default_value_t = 0.1)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        optim: OptimArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// An error tagged with the stage that raised it.
struct Failure {
    stage: &'static str,
    error: Error,
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T> Stage<T> for Result<T, Error> {
    fn stage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|error| Failure { stage, error })
    }
}

type Outcome = Result<(), Failure>;

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(path) => io::write_text(path, text).stage("write output"),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn simulate(a: &SimulateArgs) -> Outcome {
    if a.batches == 0 || a.classes == 0 {
        return Err(Error::InvalidConfig("--batches and --classes must be >= 1".into())).stage("simulate");
    }
    let batches = if a.classes == 1 {
        let theta = datagen::sample_parameters(&SyntheticConfig {
            p: a.p,
            n: a.n,
            nu: a.nu,
            seed: a.seed,
        })
        .stage("simulate")?;
        let batches = (0..a.batches as u64)
            .map(|b| datagen::sample_batch(&theta, bench::derive_seed(a.seed, 1, b)))
            .collect::<Result<Vec<_>, _>>()
            .stage("simulate")?;
        std::fs::create_dir_all(&a.out)
            .map_err(|e| Error::Io { path: a.out.clone(), source: e })
            .stage("write dataset")?;
        io::save_point(&a.out.join("truth.json"), &theta).stage("write dataset")?;
        batches
    } else {
        datagen::simulate_classes(&ClassProblemConfig {
            p: a.p,
            n: a.n,
            nu: a.nu,
            classes: a.classes,
            batches_per_class: a.batches,
            seed: a.seed,
            ..ClassProblemConfig::default()
        })
        .stage("simulate")?
    };
    io::save_dataset(&a.out, &batches).stage("write dataset")?;
    eprintln!("wrote {} batches to {}", batches.len(), a.out.display());
    Ok(())
}

fn fit(a: &FitArgs) -> Outcome {
    let batches = io::load_dataset(&a.data).stage("load dataset")?;
    let spec = RegularizationSpec::new(a.kappa, a.beta).stage("fit")?;
    let config = a.optim.config();
    config.validate().stage("fit")?;
    let several = batches.len() > 1;
    for (index, data) in batches.iter().enumerate() {
        for w in estimators::fit_warnings(data, &spec) {
            eprintln!("warning: batch {index}: {w}");
        }
        let (theta, report) = estimators::fit_ncmsg(data, &spec, &config)
            .map_err(|e| Error::Batch { index, source: Box::new(e) })
            .stage("fit")?;
        let out = if several {
            with_suffix(&a.out, &format!(".{index:05}.json"))
        } else {
            a.out.clone()
        };
        io::save_point(&out, &theta).stage("write output")?;
        io::write_text(&with_suffix(&out, ".report.csv"), &report.to_csv()).stage("write output")?;
        eprintln!(
            "batch {index}: {} iterations, cost {:.6e}, gradient norm {:.2e}{}",
            report.iterations,
            report.final_cost(),
            report.final_grad_norm(),
            if report.converged { "" } else { " (not converged)" }
        );
    }
    Ok(())
}

fn kl(a: &KlArgs) -> Outcome {
    let x = io::load_point(&a.a).stage("load parameters")?;
    let y = io::load_point(&a.b).stage("load parameters")?;
    let value = if a.symmetric {
        divergence::sym_kl(&x, &y)
    } else {
        divergence::kl(&x, &y)
    }
    .stage("kl")?;
    println!("{value}");
    Ok(())
}

fn barycenter(a: &BarycenterArgs) -> Outcome {
    let points = a
        .inputs
        .iter()
        .map(|p| io::load_point(p))
        .collect::<Result<Vec<ParameterPoint>, _>>()
        .stage("load parameters")?;
    let (center, report) = divergence::barycenter(&points, &a.optim.config()).stage("barycenter")?;
    io::save_point(&a.out, &center).stage("write output")?;
    io::write_text(&with_suffix(&a.out, ".report.csv"), &report.to_csv()).stage("write output")?;
    eprintln!(
        "{} iterations, variance {:.6e}, gradient norm {:.2e}{}",
        report.iterations,
        report.final_cost(),
        report.final_grad_norm(),
        if report.converged { "" } else { " (not converged)" }
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<CentroidModel, Failure> {
    let text = io::read_text(path).stage("load model")?;
    CentroidModel::from_json(&text).stage("load model")
}

fn classify(c: &ClassifyCommand) -> Outcome {
    match c {
        ClassifyCommand::Train { data, spec, optim, out } => {
            let spec = spec.spec().stage("train")?;
            let batches = io::load_dataset(data).stage("load dataset")?;
            let model = ml::train(&batches, &spec, &optim.config()).stage("train")?;
            io::write_text(out, &model.to_json().stage("train")?).stage("write output")?;
            eprintln!("trained {} on {} batches, {} classes", spec.label(), batches.len(), model.classes());
            Ok(())
        }
        ClassifyCommand::Predict { model, data, optim, out } => {
            let model = load_model(model)?;
            let batches = io::load_dataset(data).stage("load dataset")?;
            let predicted = model.predict(&batches, &optim.config()).stage("predict")?;
            let text: String = predicted.iter().map(|k| format!("{k}\n")).collect();
            emit(out.as_deref(), &text)
        }
        ClassifyCommand::Eval { model, data, optim } => {
            let model = load_model(model)?;
            let batches = io::load_dataset(data).stage("load dataset")?;
            let truth = ml::labels(&batches).stage("eval")?;
            let predicted = model.predict(&batches, &optim.config()).stage("predict")?;
            println!("{}", ml::f1_weighted(&truth, &predicted).stage("eval")?);
            Ok(())
        }
        ClassifyCommand::Tune {
            train,
            validation,
            betas,
            kappa,
            optim,
            out,
        } => {
            let betas: Vec<f64> = if betas.is_empty() {
                (-13..=-3).map(|e| 10f64.powi(e)).collect()
            } else {
                betas.clone()
            };
            let base = RegularizationSpec::new(*kappa, 0.0).stage("tune")?;
            let train_set = io::load_dataset(train).stage("load dataset")?;
            let validation_set = io::load_dataset(validation).stage("load dataset")?;
            let scores = ml::tune_beta(&train_set, &validation_set, &base, &betas, &optim.config()).stage("tune")?;
            let mut text = String::from("beta,f1_weighted\n");
            for (beta, f1) in &scores {
                text.push_str(&format!("{beta:e},{f1}\n"));
            }
            if let Some((beta, f1)) = scores
                .iter()
                .filter(|(_, f1)| !f1.is_nan())
                .fold(None::<(f64, f64)>, |best, &(b, f)| match best {
                    Some((_, bf)) if bf >= f => best,
                    _ => Some((b, f)),
                })
            {
                eprintln!("best beta {beta:e} (F1-weighted {f1})");
            }
            emit(out.as_deref(), &text)
        }
    }
}

fn run_bench(c: &BenchCommand) -> Outcome {
    match c {
        BenchCommand::Convergence {
            target,
            beta,
            kappa,
            points,
            optimizer,
            p,
            n,
            nu,
            seeds,
            seed,
            optim,
            out,
            summary,
        } => {
            let cfg = ConvergenceConfig {
                target: match target {
                    TargetArg::Nll => ConvergenceTarget::Nll,
                    TargetArg::Barycenter => ConvergenceTarget::Barycenter,
                },
                p: *p,
                n: *n,
                nu: *nu,
                betas: beta.clone(),
                kappa: *kappa,
                points: points.clone(),
                metrics: optimizer.iter().map(|&o| o.into()).collect(),
                seeds: *seeds,
                seed: *seed,
                optimizer: optim.config(),
            };
            let runs = bench::convergence(&cfg).stage("bench convergence")?;
            if let Some(path) = summary {
                let s = bench::convergence_summary(&cfg, &runs).stage("bench convergence")?;
                let text = bench::convergence_summary_csv(&cfg, &s).stage("bench convergence")?;
                io::write_text(path, &text).stage("write output")?;
            }
            emit(out.as_deref(), &bench::convergence_csv(&cfg, &runs).stage("bench convergence")?)
        }
        BenchCommand::Mse {
            n_grid,
            trials,
            nu,
            p,
            seed,
            max_iter,
            out,
        } => {
            let cfg = MseConfig {
                p: *p,
                nu: *nu,
                n_grid: n_grid.clone(),
                trials: *trials,
                seed: *seed,
                optimizer: OptimizerConfig::default().with_max_iterations(*max_iter),
                ..MseConfig::default()
            };
            let rows = bench::mse(&cfg).stage("bench mse")?;
            emit(out.as_deref(), &bench::mse_csv(&cfg, &rows).stage("bench mse")?)
        }
        BenchCommand::Robustness {
            mode,
            t_grid,
            p,
            n,
            nu,
            classes,
            train_batches,
            test_batches,
            rotation_scale,
            offset_scale,
            beta,
            kappa,
            seed,
            optim,
            out,
        } => {
            let cfg = RobustnessConfig {
                problem: ClassProblemConfig {
                    p: *p,
                    n: *n,
                    nu: *nu,
                    classes: *classes,
                    batches_per_class: *train_batches,
                    seed: *seed,
                    ..ClassProblemConfig::default()
                },
                test_batches_per_class: *test_batches,
                mode: match mode {
                    ModeArg::Mean => TransformMode::Mean,
                    ModeArg::Rotation => TransformMode::Rotation,
                    ModeArg::Both => TransformMode::Both,
                },
                t_grid: t_grid.clone(),
                rotation_scale: *rotation_scale,
                offset_scale: *offset_scale,
                regularization: RegularizationSpec::new(*kappa, *beta).stage("bench robustness")?,
                optimizer: optim.config(),
            };
            let rows = bench::robustness(&cfg).stage("bench robustness")?;
            emit(out.as_deref(), &bench::robustness_csv(&cfg, &rows).stage("bench robustness")?)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("NCMSG_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("NCMSG_THREADS must be a positive integer, got '{value}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(message) = configure_threads() {
        eprintln!("error: {message}");
        return ExitCode::from(1);
    }
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Kl(a) => kl(a),
        Command::Barycenter(a) => barycenter(a),
        Command::Classify(c) => classify(c),
        Command::Bench(c) => run_bench(c),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { stage, error }) => {
            eprintln!("error in {stage}: {error}");
            ExitCode::from(if error.is_numerical() { 2 } else { 1 })
        }
    }
}
