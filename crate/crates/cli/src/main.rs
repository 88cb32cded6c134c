use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use exitwait::ghost::annotate;
use exitwait::harness::{check_programs, enumerate_programs, gen_program, CampaignReport, Execution, GenConfig};
use exitwait::lang::{parse, pretty, Command, ThreadPool};
use exitwait::pog::{build_pog, max_loopfree_sc_prefix, to_dot};
use exitwait::proofs::{check_proof, derive, Certificate, ProofTree};
use exitwait::schedule::SchedulerSpec;
use exitwait::semantics::{run, RunOutcome, Trace};

#[derive(Parser)]
#[command(name = "exitwait", version, about = "Verify and run programs that exit while others busy-wait")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Input {
    /// Program text.
    #[arg(short = 'e', long = "expr", value_name = "PROGRAM")]
    expr: Option<String>,
    /// File holding the program.
    #[arg(value_name = "FILE")]
    file: Option<PathBuf>,
}

#[derive(Args)]
struct Exec {
    /// round-robin, rotated:N, random:SEED:WINDOW or script:T,T,...
    #[arg(long, default_value = "round-robin")]
    sched: SchedulerSpec,
    /// Maximum number of steps.
    #[arg(long, default_value_t = 10_000)]
    fuel: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the program in normal form.
    Parse {
        #[command(flatten)]
        input: Input,
        /// One atom per line.
        #[arg(long)]
        pretty: bool,
    },
    /// Run the plain semantics.
    Run {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        exec: Exec,
        /// Print every step.
        #[arg(long)]
        trace: bool,
    },
    /// Search for a proof of {obs(0)} c {obs(0)}.
    Verify {
        #[command(flatten)]
        input: Input,
        /// Write the proof as a JSON certificate.
        #[arg(long, value_name = "FILE")]
        emit_cert: Option<PathBuf>,
    },
    /// Check a JSON proof certificate.
    CheckProof {
        #[arg(value_name = "CERT")]
        cert: PathBuf,
    },
    /// Annotated trace of a verified program.
    Trace {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        exec: Exec,
    },
    /// Program order graph of a verified program's annotated trace, as DOT.
    Graph {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        exec: Exec,
        /// Shade the maximal loop-free sibling-closed prefix.
        #[arg(long)]
        prefix: bool,
    },
    /// Soundness campaign over random programs.
    Fuzz {
        #[arg(long, default_value_t = 500)]
        count: usize,
        #[arg(long, default_value_t = 12)]
        max_atoms: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        fork_weight: f64,
        #[arg(long, default_value_t = 1.0)]
        loop_weight: f64,
        #[arg(long, default_value_t = 1.0)]
        exit_weight: f64,
        /// Also check every program with at most N atoms.
        #[arg(long, value_name = "N")]
        exhaustive: Option<usize>,
        /// Check programs one at a time.
        #[arg(long)]
        sequential: bool,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
}

/// Failure with its exit code.
struct Failure(u8, String);

fn usage(msg: impl Into<String>) -> Failure {
    Failure(2, msg.into())
}

fn load(input: &Input) -> Result<Command, Failure> {
    let text = match (&input.expr, &input.file) {
        (Some(e), _) => e.clone(),
        (None, Some(p)) => fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?,
        (None, None) => return Err(usage("no program given")),
    };
    parse(&text).map_err(|e| usage(format!("parse error: {e}")))
}

fn proof_of(c: &Command) -> Result<ProofTree, Failure> {
    derive(c, 0).map_err(|e| Failure(1, format!("Rejected: {e}")))
}

fn plain_trace(c: &Command, exec: &Exec) -> (RunOutcome, Trace) {
    let mut sched = exec.sched.build();
    run(&ThreadPool::initial(0, c), sched.as_mut(), exec.fuel)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure(code, msg)) => {
            if code == 1 {
                println!("{msg}");
            } else {
                eprintln!("error: {msg}");
            }
            ExitCode::from(code)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<String, Failure> {
    match cmd {
        Cmd::Parse { input, pretty: multi } => {
            let c = load(&input)?;
            Ok(if multi { format!("{}\n", pretty(&c)) } else { format!("{c}\n") })
        }
        Cmd::Run { input, exec, trace } => {
            let c = load(&input)?;
            let (outcome, t) = plain_trace(&c, &exec);
            let mut out = if trace { t.serialize() } else { String::new() };
            out.push_str(&format!("{outcome}\n"));
            match outcome {
                RunOutcome::FuelExhausted(_) => Err(Failure(1, out.trim_end().to_string())),
                _ => Ok(out),
            }
        }
        Cmd::Verify { input, emit_cert } => {
            let c = load(&input)?;
            let proof = proof_of(&c)?;
            if let Some(path) = emit_cert {
                fs::write(&path, Certificate::from_tree(&proof).to_json() + "\n")
                    .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
            }
            Ok("Verified\n".into())
        }
        Cmd::CheckProof { cert } => {
            let text = fs::read_to_string(&cert).map_err(|e| usage(format!("cannot read {}: {e}", cert.display())))?;
            let tree = Certificate::from_json(&text)
                .and_then(|c| c.to_tree())
                .map_err(|e| usage(e.to_string()))?;
            match check_proof(&tree) {
                Ok(()) => Ok(format!("Ok: {}\n", tree.conclusion)),
                Err(v) => Err(Failure(1, format!("RuleViolation: {v}"))),
            }
        }
        Cmd::Trace { input, exec } => {
            let c = load(&input)?;
            let proof = proof_of(&c)?;
            let (outcome, t) = plain_trace(&c, &exec);
            let annotated = annotate(&proof, &t).map_err(|e| Failure(1, format!("annotation failed: {e}")))?;
            Ok(format!("{}{outcome}\n", annotated.serialize()))
        }
        Cmd::Graph { input, exec, prefix } => {
            let c = load(&input)?;
            let proof = proof_of(&c)?;
            let (_, t) = plain_trace(&c, &exec);
            let annotated = annotate(&proof, &t).map_err(|e| Failure(1, format!("annotation failed: {e}")))?;
            let g = build_pog(&annotated).map_err(|e| Failure(1, e.to_string()))?;
            let shaded = prefix.then(|| max_loopfree_sc_prefix(&g));
            Ok(to_dot(&g, shaded.as_ref()))
        }
        Cmd::Fuzz {
            count,
            max_atoms,
            seed,
            fork_weight,
            loop_weight,
            exit_weight,
            exhaustive,
            sequential,
            json,
        } => {
            if fork_weight < 0.0 || loop_weight <= 0.0 || exit_weight <= 0.0 {
                return Err(usage("weights must be positive"));
            }
            let cfg = GenConfig {
                max_atoms,
                fork_weight,
                loop_weight,
                exit_weight,
                seed,
                count,
            };
            let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
            let mut report: CampaignReport = check_programs(&gen_program(&cfg), seed, exec);
            if let Some(n) = exhaustive {
                report = report.merge(check_programs(&enumerate_programs(n), 0, exec));
            }
            let out = if json { report.to_json() + "\n" } else { report.to_string() };
            if report.is_clean() {
                Ok(out)
            } else {
                Err(Failure(1, out.trim_end().to_string()))
            }
        }
    }
}
