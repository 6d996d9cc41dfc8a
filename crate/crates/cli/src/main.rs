use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use hodgerank::experiment::{aggregate, final_mean_tau, run_experiment, ExperimentConfig};
use hodgerank::glm::LinkFunction;
use hodgerank::graph::ValueMode;
use hodgerank::hodge::RidgeConfig;
use hodgerank::io::{decompose_report, ingest, write_results, Session};
use hodgerank::sampling::Policy;

const VERSION: &str = match option_env!("HRANK_GIT_DESCRIBE") {
    Some(v) => v,
    None => concat!("v", env!("CARGO_PKG_VERSION")),
};

#[derive(Parser)]
#[command(name = "hrank", version = VERSION, about = "HodgeRank aggregation and active sampling of pairwise comparisons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulation study described by a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for results.csv and summary.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Hodge decomposition report of a comparison log.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "binary")]
        mode: String,
        /// Ridge parameter for the reported scores; 0 gives the minimal-norm fit.
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Suggest the next pair to label, optionally recording a label first.
    NextPair {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        policy: String,
        /// Start a fresh session: `n=<n> [gamma=<γ>] [sigma_eps=<σ>] [seed=<s>]`.
        #[arg(long, num_args = 1.., value_name = "KEY=VALUE")]
        init: Option<Vec<String>>,
        /// Record label `y` on items `i`, `j` (`y > 0`: `i` preferred).
        #[arg(long, num_args = 3, value_names = ["I", "J", "Y"], allow_negative_numbers = true)]
        observe: Option<Vec<String>>,
        #[arg(long, default_value = "uniform")]
        link: String,
    },
}

/// Writes through a sibling temp file and renames, so readers never see a
/// partial file.
fn write_atomic(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let name = path
        .file_name()
        .with_context(|| format!("{} is not a file path", path.display()))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let file = File::create(&tmp).with_context(|| format!("cannot write {}", tmp.display()))?;
    let mut out = BufWriter::new(file);
    let result = write(&mut out).and_then(|()| {
        out.flush()?;
        Ok(())
    });
    drop(out);
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(e);
    }
    fs::rename(&tmp, path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    version: &'a str,
    config: &'a ExperimentConfig,
    checkpoints: Vec<u64>,
    rows: usize,
    final_mean_tau: BTreeMap<String, f64>,
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("HRANK_THREADS") {
        let threads: usize = v
            .parse()
            .with_context(|| format!("HRANK_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    Ok(())
}

fn simulate(config: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("cannot read {}", config.display()))?;
    let cfg: ExperimentConfig =
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", config.display()))?;
    cfg.validate().context("invalid config")?;
    configure_threads()?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;

    info!(
        "simulating n={} budget={} replications={} schemes={:?}",
        cfg.n, cfg.budget, cfg.replications, cfg.schemes
    );
    let table = run_experiment(&cfg)?;
    let curves = aggregate(std::slice::from_ref(&table))?;
    let summary = Summary {
        version: VERSION,
        config: &cfg,
        checkpoints: cfg.checkpoints(),
        rows: table.rows.len(),
        final_mean_tau: final_mean_tau(&curves)
            .into_iter()
            .map(|(s, tau)| (s.name().to_string(), tau))
            .collect(),
    };

    write_atomic(&out.join("results.csv"), |w| Ok(write_results(&table, w)?))?;
    write_atomic(&out.join("summary.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &summary)?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    info!("wrote {} rows to {}", table.rows.len(), out.display());
    Ok(())
}

fn decompose(input: &Path, mode: &str, gamma: f64, out: Option<&Path>) -> Result<()> {
    let mode: ValueMode = mode.parse()?;
    let file = File::open(input).with_context(|| format!("cannot read {}", input.display()))?;
    let data = ingest(BufReader::new(file), mode).with_context(|| format!("cannot ingest {}", input.display()))?;
    let report = decompose_report(&data, gamma)?;
    match out {
        Some(path) => write_atomic(path, |w| {
            serde_json::to_writer_pretty(&mut *w, &report)?;
            w.write_all(b"\n")?;
            Ok(())
        }),
        None => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn parse_init(args: &[String]) -> Result<Session> {
    let mut n = None;
    let mut cfg = RidgeConfig::default();
    let mut seed = 0u64;
    for arg in args {
        let (key, value) = arg
            .split_once('=')
            .with_context(|| format!("--init expects key=value, got {arg:?}"))?;
        match key {
            "n" => n = Some(value.parse().with_context(|| format!("invalid n {value:?}"))?),
            "gamma" => cfg.gamma = value.parse().with_context(|| format!("invalid gamma {value:?}"))?,
            "sigma_eps" => {
                cfg.sigma_eps = value.parse().with_context(|| format!("invalid sigma_eps {value:?}"))?
            }
            "seed" => seed = value.parse().with_context(|| format!("invalid seed {value:?}"))?,
            _ => bail!("unknown --init key {key:?}"),
        }
    }
    let n = n.context("--init needs n=<items>")?;
    Ok(Session::new(n, &cfg, seed)?)
}

fn next_pair(
    state: &Path,
    policy: &str,
    init: Option<&[String]>,
    observe: Option<&[String]>,
    link: &str,
) -> Result<()> {
    let policy: Policy = policy.parse()?;
    let link: LinkFunction = link.parse()?;
    let mut session = match init {
        Some(args) => parse_init(args)?,
        None => {
            let file = File::open(state).with_context(|| format!("cannot read {}", state.display()))?;
            Session::load(BufReader::new(file)).with_context(|| format!("cannot load {}", state.display()))?
        }
    };
    if let Some(obs) = observe {
        let i: usize = obs[0].parse().with_context(|| format!("invalid item {:?}", obs[0]))?;
        let j: usize = obs[1].parse().with_context(|| format!("invalid item {:?}", obs[1]))?;
        let y: f64 = obs[2].parse().with_context(|| format!("invalid label {:?}", obs[2]))?;
        let suggested = session.last_selected;
        if !session.observe(i, j, y)? {
            match suggested {
                Some(p) => warn!("observed ({i}, {j}) but the last suggestion was {p}"),
                None => warn!("observed ({i}, {j}) without a pending suggestion"),
            }
        }
    }
    let pair = session.select(policy, link)?;
    write_atomic(state, |w| Ok(session.save(w)?))?;
    println!("{} {}", pair.i, pair.j);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Simulate { config, out } => simulate(&config, &out),
        Command::Decompose {
            input,
            mode,
            gamma,
            out,
        } => decompose(&input, &mode, gamma, out.as_deref()),
        Command::NextPair {
            state,
            policy,
            init,
            observe,
            link,
        } => next_pair(&state, &policy, init.as_deref(), observe.as_deref(), &link),
    }
}
