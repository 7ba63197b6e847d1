use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cmg_core::equilibrium::{
    feasible_start, find_cce, random_feasible_start, slater_sampling_harness, verify_cce,
    FindOptions, PlayerSelection, SlaterMode, StartPoint, StepRule, Verdict, DEFAULT_MAX_ITERS,
    DEFAULT_TOL,
};
use cmg_core::equivalence::{run_equivalence_suite, EquivalenceOptions};
use cmg_core::format::GameDocument;
use cmg_core::game::{load_policy, validate_document};
use cmg_core::reproduce::reproduce;
use cmg_core::{examples, ConstrainedMarkovGame, Error};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

const EXIT_OK: u8 = 0;
const EXIT_INVALID: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_NOT_CE: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;
const EXIT_CAP: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "cmg", version, about = "Constrained Markov game analysis")]
struct Cli {
    /// Print the machine-readable report on stdout.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a game file against every structural invariant.
    Validate { game: PathBuf },
    /// Certify whether a policy is a constrained correlated equilibrium.
    Verify {
        game: PathBuf,
        policy: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Search for an equilibrium by damped best-response iteration.
    Find {
        game: PathBuf,
        /// Start from a seeded random feasible policy instead of the phase-one point.
        #[arg(long)]
        seed: Option<u64>,
        /// Start from this policy file.
        #[arg(long, conflicts_with = "seed")]
        start: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
        max_iters: usize,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = StepArg::LineSearch)]
        step: StepArg,
        #[arg(long, value_enum, default_value_t = SelectionArg::MaxGap)]
        selection: SelectionArg,
        /// Include every iterate occupancy in the trace.
        #[arg(long)]
        iterates: bool,
    },
    /// Sample policies and test Slater-type conditions at each.
    Slater {
        game: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Strong)]
        mode: ModeArg,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Cross-check the modification views (history, pair MDP, mixtures).
    Equivalence {
        game: PathBuf,
        #[arg(long)]
        player: Option<usize>,
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run the checks at this policy instead of a seeded random one.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Replay the worked examples as a pass/fail table.
    ReproducePaper {
        #[arg(long, value_parser = ["example1", "example2", "auxiliary"])]
        only: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StepArg {
    GapScaled,
    LineSearch,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SelectionArg {
    MaxGap,
    RoundRobin,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Strong,
    Weak,
}

#[derive(Serialize)]
struct RunReport {
    command: &'static str,
    game_digest: Option<String>,
    parameters: Value,
    results: Value,
    seed: Option<u64>,
    tool_version: &'static str,
}

struct Outcome {
    report: RunReport,
    text: String,
    code: u8,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(outcome) => {
            if cli.json {
                let body = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
                emit(&format!("{body}\n"));
                if std::io::stderr().is_terminal() {
                    eprint!("{}", outcome.text);
                }
            } else {
                emit(&outcome.text);
            }
            ExitCode::from(outcome.code)
        }
        Err(err) => {
            let code = exit_code(&err);
            if cli.json {
                let body = json!({ "error": err.to_string(), "exit_code": code });
                emit(&format!(
                    "{}\n",
                    serde_json::to_string_pretty(&body).expect("error serializes")
                ));
            }
            eprintln!("error: {err}");
            ExitCode::from(code)
        }
    }
}

// A closed pipe downstream is not an error worth reporting.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::CapExceeded { .. } | Error::IterationLimit(_) => EXIT_CAP,
        Error::NoFeasibleStart(_) | Error::InfeasiblePolicy { .. } => EXIT_INFEASIBLE,
        _ => EXIT_INVALID,
    }
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// A missing path whose file stem names a bundled game (`example1`,
/// `examples/example2.game`, ...) resolves to the bundled copy.
fn bundled(path: &Path) -> Option<ConstrainedMarkovGame> {
    if path.exists() {
        return None;
    }
    path.file_stem()?.to_str().and_then(examples::by_name)
}

fn load(path: &Path) -> Result<ConstrainedMarkovGame, Error> {
    match bundled(path) {
        Some(game) => Ok(game),
        None => ConstrainedMarkovGame::from_json(&read(path)?),
    }
}

fn digest(game: &ConstrainedMarkovGame) -> String {
    hex::encode(Sha256::digest(game.to_json().as_bytes()))
}

fn report(
    command: &'static str,
    game: Option<&ConstrainedMarkovGame>,
    parameters: Value,
    results: impl Serialize,
    seed: Option<u64>,
) -> RunReport {
    RunReport {
        command,
        game_digest: game.map(digest),
        parameters,
        results: serde_json::to_value(results).expect("results serialize"),
        seed,
        tool_version: env!("CARGO_PKG_VERSION"),
    }
}

fn verdict_code(verdict: Verdict) -> u8 {
    match verdict {
        Verdict::ConstrainedCe => EXIT_OK,
        Verdict::NotCe => EXIT_NOT_CE,
        Verdict::InfeasiblePolicy => EXIT_INFEASIBLE,
    }
}

fn run(command: &Command) -> Result<Outcome, Error> {
    match command {
        Command::Validate { game } => validate(game),
        Command::Verify { game, policy, tol } => {
            let g = load(game)?;
            let pi = load_policy(&g, policy)?;
            let cert = verify_cce(&g, &pi, *tol)?;
            let mut text = format!("verdict: {}\n", cert.verdict);
            for p in &cert.slacks {
                text += &format!("player {} slacks: {:?}\n", p.player + 1, p.slacks);
            }
            for gap in &cert.gaps {
                text += &format!(
                    "player {}: value {:.9} best {:.9} gap {:.3e}\n",
                    gap.player + 1,
                    gap.value,
                    gap.psi,
                    gap.gap
                );
            }
            Ok(Outcome {
                code: verdict_code(cert.verdict),
                report: report(
                    "verify",
                    Some(&g),
                    json!({ "game": game, "policy": policy, "tol": tol }),
                    &cert,
                    None,
                ),
                text,
            })
        }
        Command::Find {
            game,
            seed,
            start,
            max_iters,
            tol,
            step,
            selection,
            iterates,
        } => {
            let g = load(game)?;
            if g.mode() != cmg_core::ConstraintMode::Common {
                return Err(Error::Mode { expected: "common" });
            }
            let start_point = match (start, seed) {
                (Some(path), _) => StartPoint::Policy(load_policy(&g, path)?),
                (None, Some(s)) => StartPoint::Occupancy(random_feasible_start(&g, *s)?),
                (None, None) => StartPoint::Occupancy(feasible_start(&g)?),
            };
            let options = FindOptions {
                max_iters: *max_iters,
                tol: *tol,
                step: match step {
                    StepArg::GapScaled => StepRule::GapScaled,
                    StepArg::LineSearch => StepRule::LineSearch,
                },
                selection: match selection {
                    SelectionArg::MaxGap => PlayerSelection::MaxGap,
                    SelectionArg::RoundRobin => PlayerSelection::RoundRobin,
                },
                record_iterates: *iterates,
                ..FindOptions::default()
            };
            let found = find_cce(&g, start_point, &options)?;
            let recheck = verify_cce(&g, &found.policy, *tol)?;
            let text = format!(
                "iterations: {}\nconverged: {}\nfinal max gap: {:.3e}\nverdict: {}\nrecheck: {}\npolicy: {:?}\n",
                found.trace.iterations,
                found.trace.converged,
                found.trace.max_gaps.last().copied().unwrap_or(f64::NAN),
                found.certificate.verdict,
                recheck.verdict,
                found.policy.table().to_nested(),
            );
            Ok(Outcome {
                code: verdict_code(recheck.verdict),
                report: report(
                    "find",
                    Some(&g),
                    json!({
                        "game": game,
                        "start": start,
                        "max_iters": max_iters,
                        "tol": tol,
                        "step": options.step,
                        "selection": options.selection,
                    }),
                    json!({
                        "policy": found.policy.table().to_nested(),
                        "trace": found.trace,
                        "certificate": found.certificate,
                        "recheck": recheck,
                    }),
                    *seed,
                ),
                text,
            })
        }
        Command::Slater {
            game,
            mode,
            samples,
            seed,
        } => {
            let g = load(game)?;
            let mode = match mode {
                ModeArg::Strong => SlaterMode::Strong,
                ModeArg::Weak => SlaterMode::Weak,
            };
            let r = slater_sampling_harness(&g, mode, *samples, *seed)?;
            let mut text = format!(
                "mode: {:?}\nsamples: {}\ntested: {}\nnot applicable: {}\nfailures: {}\n",
                r.mode,
                r.num_samples,
                r.tested,
                r.not_applicable,
                r.failures.len()
            );
            if let Some(note) = &r.note {
                text += &format!("note: {note}\n");
            }
            for f in r.failures.iter().take(10) {
                text += &format!(
                    "  sample {} player {}: {} at {:?}\n",
                    f.sample,
                    f.player + 1,
                    f.condition,
                    f.witness
                );
            }
            Ok(Outcome {
                code: EXIT_OK,
                report: report(
                    "slater",
                    Some(&g),
                    json!({ "game": game, "mode": mode, "samples": samples }),
                    &r,
                    Some(*seed),
                ),
                text,
            })
        }
        Command::Equivalence {
            game,
            player,
            samples,
            seed,
            policy,
        } => {
            let g = load(game)?;
            let pi = policy.as_ref().map(|p| load_policy(&g, p)).transpose()?;
            let options = EquivalenceOptions {
                player: *player,
                samples: *samples,
                seed: *seed,
                ..EquivalenceOptions::default()
            };
            let r = run_equivalence_suite(&g, pi.as_ref(), &options)?;
            let mut text = String::new();
            for c in &r.checks {
                text += &format!(
                    "{:<5} player {} {:<40} max error {:.3e} (tol {:e}, {} cases)\n",
                    if c.passed { "pass" } else { "FAIL" },
                    c.player + 1,
                    c.name,
                    c.max_error,
                    c.tol,
                    c.cases
                );
            }
            Ok(Outcome {
                code: if r.passed { EXIT_OK } else { EXIT_INVALID },
                report: report(
                    "equivalence",
                    Some(&g),
                    json!({ "game": game, "player": player, "samples": samples, "policy": policy }),
                    &r,
                    Some(*seed),
                ),
                text,
            })
        }
        Command::ReproducePaper { only, seed } => {
            let r = reproduce(only.as_deref(), *seed)?;
            let mut text = String::new();
            for a in &r.assertions {
                text += &format!(
                    "{:<5} {:<40} expected {} observed {}\n",
                    if a.passed { "pass" } else { "FAIL" },
                    a.id,
                    a.expected,
                    a.observed
                );
            }
            text += &format!("{} passed, {} failed\n", r.passed, r.failed);
            Ok(Outcome {
                code: if r.all_passed() { EXIT_OK } else { EXIT_INVALID },
                report: report(
                    "reproduce-paper",
                    None,
                    json!({ "only": only }),
                    &r,
                    Some(*seed),
                ),
                text,
            })
        }
    }
}

fn validate(path: &Path) -> Result<Outcome, Error> {
    let (doc, game) = if let Some(g) = bundled(path) {
        (g.to_document(), Some(g))
    } else {
        let text = read(path)?;
        let doc: GameDocument =
            serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        (doc, None)
    };
    let game_report = validate_document(doc.clone());
    let game = match game {
        Some(g) => Some(g),
        None if game_report.valid => ConstrainedMarkovGame::from_document(doc).ok(),
        None => None,
    };
    let mut text = format!("valid: {}\n", game_report.valid);
    for check in &game_report.checks {
        text += &format!(
            "{:<5} {}\n",
            if check.passed { "ok" } else { "FAIL" },
            check.invariant
        );
        for v in check.violations.iter().take(5) {
            text += &format!("      at {}: {}\n", v.location, v.message);
        }
    }
    Ok(Outcome {
        code: if game_report.valid { EXIT_OK } else { EXIT_INVALID },
        report: report(
            "validate",
            game.as_ref(),
            json!({ "game": path }),
            &game_report,
            None,
        ),
        text,
    })
}
