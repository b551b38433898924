//! `ncmax` — rearrangement calculus and certified majorants at the command
//! line. Exit codes: 0 success, 2 certificate violation, 3 configuration or
//! input error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use ncmax::error::{Error, Result};
use ncmax::harness::{
    self, doob_sweep, emit, orlicz_campaign, run_verification_campaign, ExperimentConfig,
};
use ncmax::majorant::{
    constants, majorant_commutative, majorant_for_projection, majorant_general, net_constants,
    ExponentWindow, MajorantOptions,
};
use ncmax::nets::NetDescriptor;
use ncmax::stepfn::{calderon_apply, submajorizes, StepFunction};
use ncmax::tracial::{mu, Projection, TracialOperator};
use ncmax::Tolerance;

#[derive(Parser)]
#[command(name = "ncmax", version, about = "Decreasing rearrangements, Calderon operators and certified majorants for maximal nets of matrix blocks")]
struct Cli {
    /// Master seed override for campaign-style subcommands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Relative tolerance override for certificate checks.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Output path; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format for reports.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Decreasing rearrangement of an operator (JSON in, step function out).
    Mu {
        #[arg(long)]
        input: PathBuf,
    },
    /// Apply the Calderon operator S_{p,q} to a step function.
    Calderon {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        p: f64,
        /// Upper exponent; `inf` allowed.
        #[arg(long, default_value = "inf")]
        q: String,
        /// Optional evaluation points.
        #[arg(long, value_delimiter = ',')]
        t: Vec<f64>,
    },
    /// Check g ≺≺ h for two step functions.
    Submaj {
        #[arg(long)]
        g: PathBuf,
        #[arg(long)]
        h: PathBuf,
    },
    /// Build and certify a majorant for the instance in the input file.
    Majorant {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        pprime: f64,
        #[arg(long, default_value = "inf")]
        q: String,
        #[arg(long)]
        qprime: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        kfloor: Option<i32>,
    },
    /// Run a certificate-verification campaign from a config file.
    Campaign {
        #[arg(long)]
        config: PathBuf,
    },
    /// Doob constant sweep over a p-grid.
    DoobSweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.1, 1.2, 1.4, 1.8])]
        pgrid: Vec<f64>,
        /// Include wall-clock runtimes (breaks byte determinism).
        #[arg(long)]
        emit_runtime: bool,
    },
    /// Orlicz moment campaign with Phi(t) = t^r.
    OrliczCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        phi_power: f64,
    },
}

fn parse_exponent(s: &str) -> Result<f64> {
    if s == "inf" || s == "Inf" || s == "infinity" {
        return Ok(f64::INFINITY);
    }
    s.parse::<f64>()
        .map_err(|_| Error::config(format!("invalid exponent {s:?}")))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Input of the `majorant` subcommand.
#[derive(Deserialize)]
struct MajorantInstance {
    operator: TracialOperator,
    net: NetDescriptor,
    #[serde(default)]
    mode: MajorantMode,
}

#[derive(Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum MajorantMode {
    #[default]
    General,
    Projection,
    Commutative,
}

fn run(cli: &Cli) -> Result<()> {
    let out = cli.out.as_deref();
    match &cli.cmd {
        Cmd::Mu { input } => {
            let x: TracialOperator = read_json(input)?;
            let m = mu(&x);
            emit(&format!("{}\n", serde_json::to_string_pretty(&m)?), out)
        }
        Cmd::Calderon { input, p, q, t } => {
            let g: StepFunction = read_json(input)?;
            let q = parse_exponent(q)?;
            let ev = calderon_apply(&g, *p, q)?;
            let values: Vec<serde_json::Value> = t
                .iter()
                .map(|&t| {
                    Ok(serde_json::json!({
                        "t": t,
                        "value": ev.eval(t)?,
                        "cumulative": ev.cumulative(t),
                    }))
                })
                .collect::<Result<_>>()?;
            let payload = serde_json::json!({
                "evaluation": ev,
                "points": values,
            });
            emit(&format!("{}\n", serde_json::to_string_pretty(&payload)?), out)
        }
        Cmd::Submaj { g, h } => {
            let g: StepFunction = read_json(g)?;
            let h: StepFunction = read_json(h)?;
            let tol = cli.tol.map(Tolerance::with_rel).unwrap_or_default();
            let result = submajorizes(&h, &g, tol);
            emit(
                &format!("{}\n", serde_json::json!({ "submajorized": result })),
                out,
            )
        }
        Cmd::Majorant {
            input,
            p,
            pprime,
            q,
            qprime,
            kfloor,
        } => {
            let instance: MajorantInstance = read_json(input)?;
            let q = parse_exponent(q)?;
            let window = if q.is_infinite() {
                ExponentWindow::infinite(*p, *pprime)?
            } else {
                let qprime = qprime
                    .ok_or_else(|| Error::config("finite q needs --qprime"))?;
                ExponentWindow::new(*p, *pprime, qprime, q)?
            };
            let net = instance.net.build(instance.operator.algebra())?;
            let (c_p, c_q) = net_constants(&net, &window)?;
            let consts = constants(&window, c_p, c_q)?;
            let mut opts = cli
                .tol
                .map(MajorantOptions::with_tol)
                .unwrap_or_default();
            if let Some(k) = kfloor {
                opts.k_floor = *k;
            }
            let result = match instance.mode {
                MajorantMode::General => {
                    majorant_general(&net, &instance.operator, &window, &consts, &opts)?
                }
                MajorantMode::Projection => {
                    let f = Projection::try_new(instance.operator.clone())?;
                    majorant_for_projection(&net, &f, &window, &consts, &opts)?
                }
                MajorantMode::Commutative => {
                    let f = Projection::try_new(instance.operator.clone())?;
                    majorant_commutative(&net, &f, &window, &consts, &opts)?
                }
            };
            let payload = serde_json::json!({
                "result": result.dump(),
                "mu_a": result.mu_a,
            });
            emit(&format!("{}\n", serde_json::to_string_pretty(&payload)?), out)
        }
        Cmd::Campaign { config } => {
            let mut config: ExperimentConfig = read_json(config)?;
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            if let Some(tol) = cli.tol {
                config.tol = tol;
            }
            let report = run_verification_campaign(&config)?;
            let text = match cli.format {
                Format::Csv => report.to_csv(),
                Format::Json => report.to_json(),
            };
            emit(&text, out)
        }
        Cmd::DoobSweep {
            config,
            pgrid,
            emit_runtime,
        } => {
            let mut config: ExperimentConfig = read_json(config)?;
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            if let Some(tol) = cli.tol {
                config.tol = tol;
            }
            let report = doob_sweep(&config, pgrid)?;
            let text = match cli.format {
                Format::Csv => report.to_csv(*emit_runtime),
                Format::Json => report.to_json(),
            };
            emit(&text, out)
        }
        Cmd::OrliczCheck { config, phi_power } => {
            let mut config: ExperimentConfig = read_json(config)?;
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            if let Some(tol) = cli.tol {
                config.tol = tol;
            }
            let report = orlicz_campaign(&config, *phi_power)?;
            let text = match cli.format {
                Format::Csv => report.to_csv(),
                Format::Json => report.to_json(),
            };
            emit(&text, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Certificate(_)) => {
            eprintln!("ncmax: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("ncmax: {e}");
            ExitCode::from(3)
        }
    }
}

// quiet the unused-import lint when only some subcommands use it
#[allow(unused)]
fn _touch(_: &harness::CampaignReport) {}
