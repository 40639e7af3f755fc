use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use diffusion_cli::plot::DEFAULT_SELECTION;
use diffusion_cli::spec::{builtin, parse_specs, BUILTINS};
use diffusion_cli::{default_workers, emit_plot_data, read_rows, write_experiment, Error};
use diffusion_core::adversary::sample_failure_config;
use diffusion_core::analysis::{fanin_forms, random_delay_form, random_delay_form_wide, tree_delay_form};
use diffusion_core::metrics::{compute_fanin, delay_sample, AmortizedWindow, FanInOptions};
use diffusion_core::rng::{stream, Stream};
use diffusion_core::{
    counting_lower_bound, coupon_r, run_trial_with, write_trace, AlphaRule, Behavior, FanInStats, PerturbationConfig,
    Protocol, RecordOptions, ReplicaId, StopRule, SystemConfig, UpdateId, UpdateIntro,
};
use rand::seq::index;
use serde_json::json;

#[derive(Parser)]
#[command(name = "diffusion", version, about = "Byzantine-tolerant update diffusion simulator")]
struct Cli {
    /// Overrides the seed of the config or experiment.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs one trial and prints its delay and fan-in as JSON.
    Simulate {
        /// System config (TOML); flags below fill in when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        t: usize,
        #[arg(long, default_value_t = 1)]
        fan_out: usize,
        /// random, round_robin or ltree:<block size>
        #[arg(long, default_value = "random")]
        protocol: Protocol,
        /// fixed:<k>, t+1 or sqrt2tn
        #[arg(long, default_value = "t+1")]
        alpha: AlphaRule,
        /// silent, spam or conforming; t − 1 replicas fail
        #[arg(long, default_value = "silent")]
        behavior: Behavior,
        #[arg(long, default_value_t = 0.0)]
        perturb_prob: f64,
        #[arg(long)]
        max_rounds: Option<u64>,
        /// Writes the full trace (JSON Lines) here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Runs a built-in experiment or every experiment in a spec file.
    Experiment {
        /// Built-in name or path to a TOML spec file.
        target: String,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Runs only the named experiment of a spec file.
        #[arg(long)]
        only: Option<String>,
    },
    /// Prints bound values for a parameter tuple as JSON.
    Bounds {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        t: u64,
        #[arg(long)]
        alpha: u64,
        #[arg(long, default_value_t = 1)]
        fan_out: u64,
        #[arg(long)]
        ell: Option<u64>,
    },
    /// Turns result CSV files into plot-ready series files.
    PlotData {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
        /// Metric names, `active` and `forms`; comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SELECTION.map(String::from))]
        select: Vec<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn config_error(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate { config, n, t, fan_out, protocol, alpha, behavior, perturb_prob, max_rounds, trace } => {
            let mut cfg = match config {
                Some(path) => toml::from_str::<SystemConfig>(&std::fs::read_to_string(path)?).map_err(config_error)?,
                None => SystemConfig::new(n, t, fan_out, protocol)
                    .with_perturbation(PerturbationConfig { perturb_prob, ..PerturbationConfig::SYNCHRONOUS }),
            };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let validated = diffusion_core::validate_config(&cfg)?;
            let failure = sample_failure_config(&mut stream(cfg.seed, Stream::Failures), cfg.n, cfg.t, behavior);
            let correct: Vec<ReplicaId> = failure.correct(cfg.n).collect();
            let a = alpha.alpha(cfg.n, cfg.t);
            if a > correct.len() || a < cfg.t {
                return Err(Error::Config(format!("α={a} must lie in t..={}", correct.len())));
            }
            let picks = index::sample(&mut stream(cfg.seed, Stream::Schedule), correct.len(), a);
            let mut schedule = vec![UpdateIntro::genuine(UpdateId(0), 0, picks.into_iter().map(|k| correct[k]))];
            if behavior == Behavior::Spam {
                schedule.push(UpdateIntro::spurious(UpdateId(1), 0));
            }
            let stop = match max_rounds {
                Some(m) => StopRule::until_accepted_or(m),
                None => StopRule::default_for(&cfg, &schedule, &failure),
            };
            let record = if trace.is_some() { RecordOptions::ALL } else { RecordOptions::LOADS };
            let tr =
                run_trial_with(&cfg, &schedule, &failure, stop, record).map_err(|e| Error::Runtime(e.to_string()))?;
            let opts = FanInOptions { count_empty: true, window: Some(AmortizedWindow::default_for(cfg.n, 0)) };
            let fanin: FanInStats = compute_fanin(&tr, opts).map_err(|e| Error::Runtime(e.to_string()))?;
            let delay = delay_sample(&tr, UpdateId(0)).map_err(|e| Error::Runtime(e.to_string()))?;
            if let Some(path) = trace {
                write_trace(&tr, BufWriter::new(File::create(path)?)).map_err(|e| Error::Runtime(e.to_string()))?;
            }
            let out = json!({
                "config": cfg,
                "alpha": a,
                "faulty": failure.faulty_count(),
                "delay": delay,
                "terminated": tr.terminated,
                "final_round": tr.final_round,
                "fanin_peak": fanin.peak,
                "fanin_round_max": fanin.mean_round_max,
                "fanin_amortized": fanin.amortized,
                "advisories": validated.advisories,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Experiment { target, out, only } => {
            let mut specs = match builtin(&target) {
                Some(spec) => vec![spec],
                None => {
                    let text = std::fs::read_to_string(&target).map_err(|e| {
                        Error::Config(format!(
                            "`{target}` is neither a built-in ({}) nor a readable file: {e}",
                            BUILTINS.join(", ")
                        ))
                    })?;
                    parse_specs(&text)?
                }
            };
            if let Some(name) = only {
                specs.retain(|s| s.name == name);
                if specs.is_empty() {
                    return Err(Error::Config(format!("no experiment named `{name}`")));
                }
            }
            let workers = default_workers();
            for mut spec in specs {
                if let Some(seed) = cli.seed {
                    spec.seed = seed;
                }
                let (path, result) = write_experiment(&spec, workers, &out)?;
                for a in &result.advisories {
                    log::warn!("{}: {a}", spec.name);
                }
                println!("{}", path.display());
            }
        }
        Command::Bounds { n, t, alpha, fan_out, ell } => {
            let ell = ell.unwrap_or(4 * t).min(n);
            let counting = counting_lower_bound(n, alpha, t, fan_out).map_err(config_error)?;
            let r: f64 = coupon_r(alpha, t).map_err(config_error)?;
            let mut forms = vec![
                random_delay_form::<f64>(n, alpha, t, fan_out).map_err(config_error)?,
                random_delay_form_wide::<f64>(n, alpha, t, fan_out).map_err(config_error)?,
                tree_delay_form::<f64>(n, alpha, t, fan_out, ell).map_err(config_error)?,
            ];
            forms.extend(fanin_forms::<f64>(n, t, fan_out, ell).map_err(config_error)?);
            let out = json!({ "counting_lower_bound": counting, "coupon_r": r, "forms": forms });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::PlotData { csv, out, select } => {
            let mut rows = Vec::new();
            for path in csv {
                rows.extend(read_rows(BufReader::new(File::open(&path)?))?);
            }
            let select: Vec<String> =
                select.into_iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            for path in emit_plot_data(&rows, &out, &select)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}
