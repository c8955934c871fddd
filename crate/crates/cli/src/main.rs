//! Command-line front end: simulation, training, the case-study pipeline,
//! quadrangle evaluation, robust weights, and noise-driven level selection.
//! Exit codes: 0 success, 2 equivalence failure, 1 any other error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rqsvr::case_study::{run_case_study, simulate, CaseStudyConfig};
use rqsvr::drr::{optimal_weights, select_alpha, worst_case_objective, NoiseModel};
use rqsvr::io;
use rqsvr::kernel::KernelSpec;
use rqsvr::quadrangle::{check_quadrangle_identities, cvar_norm_quadrangle, qsa_quadrangle};
use rqsvr::svr::{train, Formulation, Regularization, SvrConfig, SvrParameter};

#[derive(Parser)]
#[command(
    name = "rqsvr",
    about = "CVaR-based support vector regression toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the evenly spaced linear law with standard Laplace noise
    Simulate(SimulateArgs),
    /// Fit one formulation on a dataset CSV
    Train(TrainArgs),
    /// Run the full four-formulation pipeline and the agreement report
    CaseStudy(CaseStudyArgs),
    /// Evaluate a risk quadrangle on a sample CSV
    Quadrangle(QuadrangleArgs),
    /// Worst-case reweighting of residuals at a given level
    DrrWeights(DrrWeightsArgs),
    /// Pick the level implied by a known noise law
    SelectAlpha(SelectAlphaArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    l: usize,
    #[arg(long)]
    seed: u64,
    /// Output dataset CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset CSV with header x1,...,xn,y
    #[arg(long)]
    input: PathBuf,
    /// eps-primal | nu-primal | nu-deviation | nu-dual
    #[arg(long)]
    form: String,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Capacity constant (lambda = 1/(2Cl) for primal fits, dual budget C l (1-alpha))
    #[arg(long, short = 'c')]
    c: Option<f64>,
    /// Ridge weight, mutually exclusive with --c
    #[arg(long)]
    lambda: Option<f64>,
    /// linear | rbf:GAMMA | poly:DEGREE,OFFSET
    #[arg(long, default_value = "linear")]
    kernel: String,
    /// Model JSON output path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CaseStudyArgs {
    /// JSON config {l, seed, alpha, capC, formulations, output_dir, input}
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, short = 'c')]
    c: Option<f64>,
    /// Directory for dataset/results/equivalence/model files
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Dataset CSV replacing the simulation (reproduces published tables)
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct QuadrangleArgs {
    /// Sample CSV with header value,weight
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Also re-derive the relationship identities and report residuals
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct DrrWeightsArgs {
    /// Residual sample CSV (equiprobable weights)
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    alpha: f64,
    /// Weight CSV output path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectAlphaArgs {
    /// laplace:a,d | gauss:mean,sd | expshift:rate,shift | empirical:file.csv
    #[arg(long)]
    noise: String,
    #[arg(long, default_value_t = 0.6)]
    default_alpha: f64,
}

fn parse_kernel(text: &str) -> Result<KernelSpec, String> {
    let lower = text.to_ascii_lowercase();
    if lower == "linear" {
        return Ok(KernelSpec::Linear);
    }
    if let Some(rest) = lower.strip_prefix("rbf:") {
        let gamma: f64 = rest
            .parse()
            .map_err(|e| format!("bad rbf gamma {rest:?}: {e}"))?;
        return Ok(KernelSpec::Rbf { gamma });
    }
    if let Some(rest) = lower.strip_prefix("poly:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 2 {
            return Err(format!("expected poly:DEGREE,OFFSET, got {text:?}"));
        }
        let degree: u32 = parts[0].parse().map_err(|e| format!("bad degree: {e}"))?;
        let offset: f64 = parts[1].parse().map_err(|e| format!("bad offset: {e}"))?;
        return Ok(KernelSpec::Polynomial { degree, offset });
    }
    Err(format!("unknown kernel {text:?}"))
}

fn parse_formulation(text: &str) -> Result<Formulation, String> {
    match text {
        "eps-primal" => Ok(Formulation::EpsPrimal),
        "nu-primal" => Ok(Formulation::NuPrimal),
        "nu-deviation" => Ok(Formulation::NuDeviation),
        "nu-dual" => Ok(Formulation::NuDual),
        other => Err(format!("unknown formulation {other:?}")),
    }
}

fn parse_noise(text: &str) -> Result<NoiseModel, String> {
    let (kind, rest) = text
        .split_once(':')
        .ok_or_else(|| format!("expected KIND:ARGS, got {text:?}"))?;
    let nums = |expect: usize| -> Result<Vec<f64>, String> {
        let vals: Result<Vec<f64>, _> = rest.split(',').map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| format!("bad noise parameters {rest:?}: {e}"))?;
        if vals.len() != expect {
            return Err(format!("expected {expect} parameters, got {}", vals.len()));
        }
        Ok(vals)
    };
    match kind {
        "laplace" => {
            let v = nums(2)?;
            Ok(NoiseModel::Laplace {
                location: v[0],
                scale: v[1],
            })
        }
        "gauss" => {
            let v = nums(2)?;
            Ok(NoiseModel::Gaussian {
                mean: v[0],
                sd: v[1],
            })
        }
        "expshift" => {
            let v = nums(2)?;
            Ok(NoiseModel::ShiftedExponential {
                rate: v[0],
                shift: v[1],
            })
        }
        "empirical" => {
            let sample = io::read_sample_csv(&PathBuf::from(rest))
                .map_err(|e| format!("cannot read {rest}: {e}"))?;
            Ok(NoiseModel::Empirical(sample))
        }
        other => Err(format!("unknown noise kind {other:?}")),
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Simulate(args) => {
            let d = simulate(args.l, args.seed).map_err(|e| e.to_string())?;
            io::write_dataset_csv(&args.out, &d).map_err(|e| e.to_string())?;
            println!("wrote {} rows to {}", d.len(), args.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Train(args) => {
            let d = io::read_dataset_csv(&args.input).map_err(|e| e.to_string())?;
            let formulation = parse_formulation(&args.form)?;
            let parameter = match (args.alpha, args.eps) {
                (Some(a), None) => SvrParameter::Alpha(a),
                (None, Some(e)) => SvrParameter::Epsilon(e),
                _ => return Err("pass exactly one of --alpha or --eps".into()),
            };
            let regularization = match (args.c, args.lambda) {
                (Some(c), None) => Regularization::CapC(c),
                (None, Some(v)) => Regularization::Lambda(v),
                _ => return Err("pass exactly one of --c or --lambda".into()),
            };
            let kernel = parse_kernel(&args.kernel)?;
            let cfg = SvrConfig {
                parameter,
                regularization,
                formulation,
                kernel,
            };
            let model = train(&d, &cfg).map_err(|e| e.to_string())?;
            if let Some(w) = &model.weights {
                let joined: Vec<String> = w.iter().map(|v| format!("{v:.6}")).collect();
                println!("w: {}", joined.join(" "));
            }
            println!("b: {:.6}", model.intercept);
            println!("objective: {:.6}", model.objective);
            println!(
                "linked eps: [{:.6}, {:.6}]",
                model.linked_eps.lo, model.linked_eps.hi
            );
            println!(
                "linked alpha: [{:.6}, {:.6}{}",
                model.linked_alpha.lo,
                model.linked_alpha.hi,
                if model.linked_alpha.hi_inclusive {
                    "]"
                } else {
                    ")"
                }
            );
            println!("solve seconds: {:.6}", model.solve_seconds);
            if let Some(path) = &args.out {
                io::write_model_json(path, &model).map_err(|e| e.to_string())?;
                println!("model written to {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::CaseStudy(args) => {
            let mut cfg: CaseStudyConfig = match &args.config {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
                    serde_json::from_str(&text).map_err(|e| format!("bad config: {e}"))?
                }
                None => CaseStudyConfig::default(),
            };
            if let Some(l) = args.l {
                cfg.l = l;
            }
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let Some(alpha) = args.alpha {
                cfg.alpha = alpha;
            }
            if let Some(c) = args.c {
                cfg.cap_c = c;
            }
            if args.out_dir.is_some() {
                cfg.output_dir = args.out_dir;
            }
            if args.input.is_some() {
                cfg.input = args.input;
            }
            let out = run_case_study(&cfg).map_err(|e| e.to_string())?;
            print!("{}", out.table.to_csv());
            println!(
                "max |dw| {:.6}  max |db| {:.6}  alpha_new {:.6}  pass {}",
                out.equivalence.max_delta_w,
                out.equivalence.max_delta_b,
                out.equivalence.alpha_new,
                out.equivalence.pass
            );
            if out.equivalence.pass {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(2))
            }
        }
        Command::Quadrangle(args) => {
            let s = io::read_sample_csv(&args.input).map_err(|e| e.to_string())?;
            let quartet = match (args.alpha, args.eps) {
                (Some(a), None) => cvar_norm_quadrangle(&s, a).map_err(|e| e.to_string())?,
                (None, Some(e)) => qsa_quadrangle(&s, e).map_err(|e| e.to_string())?,
                _ => return Err("pass exactly one of --alpha or --eps".into()),
            };
            println!(
                "{}",
                serde_json::to_string_pretty(&quartet).expect("serializable")
            );
            if args.check {
                let report = check_quadrangle_identities(&s, &quartet, 1e-8);
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("serializable")
                );
                if !report.pass() {
                    return Err("quadrangle identities failed".into());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::DrrWeights(args) => {
            let s = io::read_sample_csv(&args.input).map_err(|e| e.to_string())?;
            let weights = optimal_weights(&s, args.alpha).map_err(|e| e.to_string())?;
            let worst = worst_case_objective(&s, args.alpha).map_err(|e| e.to_string())?;
            println!("worst-case expected |residual|: {worst:.6}");
            match &args.out {
                Some(path) => {
                    io::write_weights_csv(path, &weights).map_err(|e| e.to_string())?;
                    println!("weights written to {}", path.display());
                }
                None => {
                    for (i, q) in weights.weights.iter().enumerate() {
                        println!("{i},{q:.6}");
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::SelectAlpha(args) => {
            let noise = parse_noise(&args.noise)?;
            let sel = select_alpha(&noise, args.default_alpha).map_err(|e| e.to_string())?;
            println!("alpha_star: {:.6}", sel.alpha_star);
            println!("nu: {:.6}", sel.nu);
            println!("eps: {:.6}", sel.eps);
            println!("symmetric: {}", sel.symmetric);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
