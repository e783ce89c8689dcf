use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fracdrift::estimator::{estimate, EstimatorMode};
use fracdrift::expcli::{report, run_with_workers, ExperimentConfig, ExperimentKind};
use fracdrift::fbm::{sample_fbm, FbmPath, Hurst, Method, TimeGrid};
use fracdrift::malliavin::{
    skorohod_integral, CellRule, DerivativeMode, DerivedProcess, GFunction, GIntegrand, SkorohodOptions,
    StateProcess, Window,
};
use fracdrift::sde::{integrate_euler, DriftModel, ModelKind, SolutionPath};
use fracdrift::{Error, Result};

#[derive(Parser)]
#[command(name = "fracdrift", version, about = "Drift estimation for SDEs driven by fractional Brownian motion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an fBm path and write `t,B1,...,Bd`.
    SampleFbm {
        #[arg(long)]
        h: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        dt: f64,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "auto")]
        method: Method,
        #[arg(long)]
        out: PathBuf,
    },
    /// Euler path of a registry model, written as `t,X1,...,Xm`.
    Integrate {
        #[command(flatten)]
        sim: Simulation,
        #[arg(long)]
        out: PathBuf,
    },
    /// Discrete Skorohod integral of `g(X)` over a window; one JSON line.
    Skorohod {
        #[command(flatten)]
        sim: Simulation,
        #[arg(long, default_value = "tanh")]
        g: GFunction,
        /// `a,b` on grid nodes; the whole grid by default.
        #[arg(long)]
        window: Option<String>,
        #[arg(long, default_value = "left")]
        rule: CellRule,
        /// Malliavin pivots; exact transported derivatives when omitted.
        #[arg(long)]
        pivots: Option<usize>,
    },
    /// Least-squares drift estimate; one JSON line per replication.
    Estimate {
        #[command(flatten)]
        sim: Simulation,
        #[arg(long, default_value = "both")]
        mode: EstimatorMode,
        /// Replications use path indices `0..reps`.
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(long)]
        pivots: Option<usize>,
    },
    /// Run a campaign; the exit code is 0 iff every verdict passes.
    Experiment {
        kind: ExperimentKind,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Args)]
struct Simulation {
    #[arg(long, default_value = "linear")]
    model: ModelKind,
    /// Comma-separated drift parameters.
    #[arg(long, default_value = "1")]
    theta: String,
    /// Comma-separated row-major `m × d` diffusion matrix.
    #[arg(long, default_value = "1")]
    sigma: String,
    #[arg(long, default_value = "0")]
    x0: String,
    #[arg(long)]
    h: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    dt: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "auto")]
    method: Method,
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number '{v}' in --{what}")))
        })
        .collect()
}

impl Simulation {
    fn model(&self) -> Result<DriftModel> {
        let x0 = parse_list(&self.x0, "x0")?;
        let sigma = parse_list(&self.sigma, "sigma")?;
        let m = x0.len();
        if sigma.len() % m != 0 {
            return Err(Error::Config(format!("sigma has {} entries for m = {m}", sigma.len())));
        }
        DriftModel::new(self.model, m, parse_list(&self.theta, "theta")?, sigma.clone(), sigma.len() / m)
    }

    fn run(&self, path_index: u64) -> Result<(DriftModel, FbmPath, SolutionPath)> {
        let model = self.model()?;
        let grid = TimeGrid::new(self.n, self.dt)?;
        let hurst = Hurst::new(self.h)?;
        let sampler = fracdrift::fbm::FbmSampler::new(grid, hurst, model.d(), self.method)?;
        let noise = sampler.sample(self.seed, path_index);
        let x = integrate_euler(&model, &noise, &parse_list(&self.x0, "x0")?)?;
        Ok((model, noise, x))
    }
}

fn derivative_mode(pivots: Option<usize>) -> DerivativeMode {
    match pivots {
        Some(n_s) => DerivativeMode::Pivots { n_s },
        None => DerivativeMode::default(),
    }
}

/// Rows `t, v_1, …` with 17 significant digits.
fn write_table(out: &PathBuf, prefix: &str, cols: usize, grid: TimeGrid, row: impl Fn(usize) -> Vec<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(out)?);
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=cols).map(|c| format!("{prefix}{c}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..=grid.n_steps() {
        let mut line = format!("{:.16e}", grid.t(i));
        for v in row(i) {
            line.push_str(&format!(",{v:.16e}"));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::SampleFbm {
            h,
            n,
            dt,
            d,
            seed,
            method,
            out,
        } => {
            let grid = TimeGrid::new(n, dt)?;
            let b = sample_fbm(grid, Hurst::new(h)?, d, seed, method)?;
            write_table(&out, "B", d, grid, |i| b.value(i).to_vec())?;
            Ok(true)
        }
        Command::Integrate { sim, out } => {
            let (_, _, x) = sim.run(0)?;
            write_table(&out, "X", x.m, x.grid, |i| x.value(i).to_vec())?;
            Ok(true)
        }
        Command::Skorohod {
            sim,
            g,
            window,
            rule,
            pivots,
        } => {
            let (model, noise, x) = sim.run(0)?;
            let window = match window {
                None => Window::full(noise.grid),
                Some(s) => match parse_list(&s, "window")?.as_slice() {
                    [a, b] => Window::from_times(noise.grid, *a, *b)?,
                    _ => return Err(Error::Config("--window takes 'a,b'".into())),
                },
            };
            let it = GIntegrand {
                g,
                m: model.m(),
                d: model.d(),
            };
            let opts = SkorohodOptions {
                rule,
                mode: derivative_mode(pivots),
                ..Default::default()
            };
            let proc = DerivedProcess::State(StateProcess::new(&model, &x, &it)?);
            let r = skorohod_integral(&proc, &noise, window, &opts)?;
            println!("{}", serde_json::to_string(&r)?);
            Ok(true)
        }
        Command::Estimate {
            sim,
            mode,
            reps,
            pivots,
        } => {
            let opts = SkorohodOptions {
                mode: derivative_mode(pivots),
                ..Default::default()
            };
            for r in 0..reps as u64 {
                let (model, noise, x) = sim.run(r)?;
                let e = estimate(&model, &x, &noise, mode, &opts)?;
                println!("{}", serde_json::to_string(&e)?);
            }
            Ok(true)
        }
        Command::Experiment {
            kind,
            config,
            out_dir,
            workers,
        } => {
            let cfg = ExperimentConfig::load(&config, Some(kind))?;
            let campaign = run_with_workers(&cfg, workers)?;
            let files = report(&campaign, &out_dir)?;
            for row in campaign.failures() {
                eprintln!(
                    "FAIL {} {} [{}] = {}",
                    row.criterion, row.statistic, row.params, row.value
                );
            }
            eprintln!("verdicts written to {}", files.verdicts.display());
            Ok(campaign.all_pass())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
