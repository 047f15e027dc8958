//! hbl: experiment runner and ad-hoc subcommands for Hardy/BMO machinery
//! on finite locally doubling spaces.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use hbl_core::dyadic::{self, TieBreak};
use hbl_core::hardy_bmo::{self, Atom, AtomExponent, SplitParams};
use hbl_core::maximal;
use hbl_core::operators::{self, MultiplierSpec};
use hbl_core::report::canonical_json;
use hbl_core::runner::{self, ExperimentConfig};
use hbl_core::space::generators;
use hbl_core::space::io;
use hbl_core::space::{ball, enumerate_balls, FiniteSpace};

#[derive(Parser)]
#[command(name = "hbl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TieBreakArg {
    Id,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment suites and write reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for report.json, timings.json and CSV files.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Accepted for compatibility; suites always run in dependency
        /// order and are internally parallel.
        #[arg(long, default_value_t = false)]
        parallel: bool,
    },
    /// Generate a canonical test space and write its JSON.
    Gen(GenArgs),
    /// Build a dyadic forest and write its JSON.
    Forest {
        #[arg(long)]
        space: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long, value_enum, default_value = "id")]
        tie_break: TieBreakArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the dyadic local maximal function of a point function.
    Maximal {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        forest: PathBuf,
        #[arg(long)]
        f: PathBuf,
        /// Resolution floor, or "auto" for the designated base resolution.
        #[arg(long, default_value = "auto")]
        k_floor: String,
    },
    /// Exact H^1 atomic norm of a function at scale b.
    H1Norm {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        f: PathBuf,
        #[arg(long)]
        b: f64,
    },
    /// BMO norm N_b^q of a function.
    BmoNorm {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        f: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        #[arg(long)]
        b: f64,
    },
    /// Split an atom down to a target support scale.
    SplitAtom(SplitArgs),
    /// John-Nirenberg level-set experiment.
    Jn {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        f: PathBuf,
        #[arg(long)]
        b0: f64,
        /// Scale of the reference norm N(f); defaults to 2 * b0.
        #[arg(long)]
        n_scale: Option<f64>,
    },
    /// Duality pairing bound |<f, g>| <= N^1(f) ||g||_{H^1}.
    Pairing {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        f: PathBuf,
        #[arg(long)]
        g: PathBuf,
        #[arg(long)]
        b: f64,
    },
    /// Build a spectral multiplier operator and report its diagnostics.
    Operator {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        cutoff: Option<f64>,
        #[arg(long)]
        width: Option<f64>,
        #[arg(long)]
        b: f64,
    },
}

#[derive(Args)]
struct GenArgs {
    #[command(subcommand)]
    kind: GenKind,
}

#[derive(Subcommand)]
enum GenKind {
    Tree {
        #[arg(long)]
        q: usize,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Path {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Grid {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Hyperbolic {
        #[arg(long)]
        n_cells: usize,
        #[arg(long)]
        max_radius: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    space: PathBuf,
    /// Function file holding the atom values (zero outside the support).
    #[arg(long)]
    f: PathBuf,
    /// Support ball center (point id).
    #[arg(long)]
    center: String,
    /// Support ball radius.
    #[arg(long)]
    radius: f64,
    /// Target scale.
    #[arg(long)]
    c: f64,
    /// Scale bound of the input.
    #[arg(long)]
    b: f64,
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    r0: f64,
}

fn emit(value: &serde_json::Value) {
    print!("{}", canonical_json(value));
}

fn write_or_print(out: Option<PathBuf>, value: &serde_json::Value) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            std::fs::write(&path, canonical_json(value))
                .with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => emit(value),
    }
    Ok(())
}

fn load_space(path: &PathBuf) -> anyhow::Result<FiniteSpace> {
    io::ingest_space(path).with_context(|| format!("loading space {}", path.display()))
}

fn load_function(space: &FiniteSpace, path: &PathBuf) -> anyhow::Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading function {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    Ok(io::function_from_json(space, &value)?)
}

fn real_main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            parallel: _,
        } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading config {}", config.display()))?;
            let cfg = ExperimentConfig::from_json(&text)?;
            let report = runner::run(&cfg)?;
            if let Some(dir) = out {
                report.write(&dir)?;
                eprintln!("wrote report to {}", dir.display());
            } else {
                emit(&report.json);
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            if !report.hard_failures.is_empty() {
                for f in &report.hard_failures {
                    eprintln!("FAILED: {f}");
                }
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Gen(args) => {
            let (space, out) = match args.kind {
                GenKind::Tree { q, depth, out } => (generators::gen_tree(q, depth)?, out),
                GenKind::Path { n, out } => (generators::gen_path(n)?, out),
                GenKind::Grid { d, n, out } => (generators::gen_grid(d, n)?, out),
                GenKind::Hyperbolic {
                    n_cells,
                    max_radius,
                    seed,
                    out,
                } => (
                    generators::gen_hyperbolic_disk(n_cells, max_radius, seed)?,
                    out,
                ),
            };
            write_or_print(out, &io::space_to_json(&space))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Forest {
            space,
            delta,
            tie_break,
            seed,
            out,
        } => {
            let space = load_space(&space)?;
            let tb = match tie_break {
                TieBreakArg::Id => TieBreak::Id,
                TieBreakArg::Random => TieBreak::Random(seed.unwrap_or(0)),
            };
            let forest = dyadic::build_forest(&space, delta, tb)?;
            let report = dyadic::verify_forest(&space, &forest);
            if !report.passed() {
                return Err(anyhow!("forest verification failed: {:?}", report.violations));
            }
            write_or_print(out, &dyadic::forest_to_json(&space, &forest))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Maximal {
            space,
            forest,
            f,
            k_floor,
        } => {
            let space = load_space(&space)?;
            let text = std::fs::read_to_string(&forest)?;
            let forest = dyadic::forest_from_json(&space, &serde_json::from_str(&text)?)?;
            let f = load_function(&space, &f)?;
            let floor = if k_floor == "auto" {
                forest.base_resolution(&space)
            } else {
                k_floor
                    .parse()
                    .map_err(|_| anyhow!("--k-floor must be an integer or \"auto\""))?
            };
            let m = maximal::maximal_function(&space, &forest, &f, floor)?;
            emit(&json!({
                "kFloor": floor,
                "values": io::function_to_json(&space, &m)["values"],
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::H1Norm { space, f, b } => {
            let space = load_space(&space)?;
            let g = load_function(&space, &f)?;
            let family = enumerate_balls(&space, b)?;
            let sol = hardy_bmo::h1_norm(&space, &family, &g)?;
            match sol {
                hardy_bmo::H1Solution::Feasible {
                    value,
                    primal_objective,
                    dual_objective,
                    gap,
                } => emit(&json!({
                    "feasible": true,
                    "value": format!("{value:.12e}"),
                    "primal": format!("{primal_objective:.12e}"),
                    "dual": format!("{dual_objective:.12e}"),
                    "gap": format!("{gap:.3e}"),
                })),
                hardy_bmo::H1Solution::Infeasible => {
                    emit(&json!({"feasible": false}))
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::BmoNorm { space, f, q, b } => {
            let space = load_space(&space)?;
            let f = load_function(&space, &f)?;
            let family = enumerate_balls(&space, b)?;
            let v = hardy_bmo::bmo_norm(&space, &family, &f, q)?;
            emit(&json!({
                "q": q,
                "b": b,
                "value": format!("{:.12e}", v.value),
                "argmaxBall": v.argmax_ball.map(|bi| {
                    let b = &family.balls[bi];
                    json!({"center": space.id(b.center), "radius": b.radius})
                }),
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::SplitAtom(args) => {
            let space = load_space(&args.space)?;
            let dense = load_function(&space, &args.f)?;
            let center = space
                .index_of(&args.center)
                .ok_or_else(|| anyhow!("unknown center id {:?}", args.center))?;
            let support = ball(&space, center, args.radius)?;
            let values: Vec<f64> = support.members.iter().map(|&m| dense[m]).collect();
            let atom = Atom {
                support,
                values,
                exponent: AtomExponent::Infinity,
            };
            let viols = hardy_bmo::validate_atom(&space, &atom);
            if !viols.is_empty() {
                return Err(anyhow!("input is not a valid atom: {viols:?}"));
            }
            let params = SplitParams {
                c: args.c,
                b_big: args.b,
                beta: args.beta,
                r0: args.r0,
            };
            let dec = hardy_bmo::split_atom(&space, &atom, &params)?;
            let err = dec.reconstruction_error(&space, &atom.to_dense(space.len()));
            emit(&json!({
                "terms": dec.terms.len(),
                "coefficientSum": format!("{:.12e}", dec.coefficient_sum()),
                "maxSupportRadius": dec.max_support_radius(),
                "reconstructionError": format!("{err:.3e}"),
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Jn {
            space,
            f,
            b0,
            n_scale,
        } => {
            let space = load_space(&space)?;
            let f = load_function(&space, &f)?;
            let family = enumerate_balls(&space, b0)?;
            let n_scale = n_scale.unwrap_or(2.0 * b0);
            let fam_n = enumerate_balls(&space, n_scale)?;
            let n_f = hardy_bmo::bmo_norm(&space, &fam_n, &f, 1.0)?.value;
            if n_f == 0.0 {
                return Err(anyhow!("function is constant at the reference scale"));
            }
            let grid = hardy_bmo::jn_default_grid(&space, &family, &f, 48);
            let rep = hardy_bmo::jn_experiment(&space, &family, &f, n_f, &grid)?;
            emit(&json!({
                "b0": b0,
                "nF": format!("{n_f:.12e}"),
                "j": format!("{:.12e}", rep.j),
                "eta": format!("{:.12e}", rep.eta),
                "degenerate": rep.degenerate,
                "rows": rep
                    .rows
                    .iter()
                    .map(|r| json!({"s": r.s, "ratio": r.ratio}))
                    .collect::<Vec<_>>(),
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Pairing { space, f, g, b } => {
            let space = load_space(&space)?;
            let f = load_function(&space, &f)?;
            let g = load_function(&space, &g)?;
            let family = enumerate_balls(&space, b)?;
            let rep = hardy_bmo::duality_pairing_check(&space, &family, &f, &g)?;
            emit(&json!({
                "pairing": format!("{:.12e}", rep.pairing),
                "n1": format!("{:.12e}", rep.n1),
                "h1": format!("{:.12e}", rep.h1),
                "lpGap": format!("{:.3e}", rep.lp_gap),
                "boundHolds": rep.bound_holds,
                "skipped": rep.skipped,
            }));
            Ok(if rep.bound_holds {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Operator {
            space,
            kind,
            t,
            s,
            cutoff,
            width,
            b,
        } => {
            let space = load_space(&space)?;
            let spec = match kind.as_str() {
                "identity" => MultiplierSpec::Identity,
                "heat" => MultiplierSpec::Heat {
                    t: t.ok_or_else(|| anyhow!("--t required for heat"))?,
                },
                "resolvent" => MultiplierSpec::Resolvent {
                    s: s.unwrap_or(1.0),
                },
                "band" => MultiplierSpec::BandSmooth {
                    cutoff: cutoff.ok_or_else(|| anyhow!("--cutoff required for band"))?,
                    width: width.unwrap_or(0.5),
                },
                other => return Err(anyhow!("unknown multiplier kind {other:?}")),
            };
            let op = operators::spectral_multiplier(&space, |l| spec.eval(l))?;
            let family = enumerate_balls(&space, b)?;
            let hc = operators::hormander_constants(&space, &family, &op)?;
            let l2 = operators::l2_norm(&space, &op);
            emit(&json!({
                "kind": kind,
                "b": b,
                "nu": format!("{:.12e}", hc.nu),
                "upsilon": format!("{:.12e}", hc.upsilon),
                "l2Norm": format!("{l2:.12e}"),
                "selfAdjoint": op.is_self_adjoint(1e-12),
            }));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            // Config and usage problems exit with 2, runtime failures 1.
            let msg = format!("{e:#}");
            if msg.contains("config") || msg.contains("invalid parameter") {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
