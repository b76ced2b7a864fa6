//! Command-line driver: run suites, validate them, score utterance pairs,
//! and generate suites from dialog markup.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dialogtest::adapter::{AgentSpec, InProcessAgent};
use dialogtest::context::DialogContext;
use dialogtest::embedding::{load_model, ModelFormat};
use dialogtest::oracle::Oracle;
use dialogtest::runner::{render_report, run_suite_with, ReportFormat, RunOptions};
use dialogtest::suite::{load_suite, ContextOverrides};
use dialogtest::utterance::Utterance;
use dialogtest::vxml::{emit_suite, generate_sequences, parse_vxml, Coverage};

#[derive(Parser)]
#[command(
    name = "dialogtest",
    version,
    about = "Declarative dialog tests for line-protocol conversational agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a test suite against an agent.
    Run(RunArgs),
    /// Parse and validate a suite without running anything.
    CheckSuite {
        /// Suite file to validate.
        suite: PathBuf,
    },
    /// Score the semantic similarity of two utterances.
    Similarity(SimilarityArgs),
    /// Generate a covering test suite from dialog markup.
    GenVxml(GenVxmlArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Suite file with the cases to run.
    #[arg(long)]
    suite: PathBuf,
    /// Word vector model file.
    #[arg(long)]
    model: PathBuf,
    /// Layout of the model file.
    #[arg(long, value_name = "FORMAT")]
    model_format: ModelFormat,
    /// Equivalence threshold; wins over suite overrides and the default.
    #[arg(long)]
    threshold: Option<f64>,
    /// Relevance threshold used by breakdown checks; same precedence.
    #[arg(long)]
    relevance_threshold: Option<f64>,
    /// Agent command line; when omitted a built-in echo agent answers.
    #[arg(long)]
    agent: Option<String>,
    /// Report format written to stdout.
    #[arg(long, default_value_t = ReportFormat::Human)]
    report: ReportFormat,
    /// Worker threads for case execution; 1 is fully serial.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Wake phrase the agent expects in front of each utterance.
    #[arg(long)]
    wake_phrase: Option<String>,
}

#[derive(Args)]
struct SimilarityArgs {
    /// First utterance.
    a: String,
    /// Second utterance.
    b: String,
    /// Word vector model file.
    #[arg(long)]
    model: PathBuf,
    /// Layout of the model file.
    #[arg(long, value_name = "FORMAT")]
    model_format: ModelFormat,
}

#[derive(Args)]
struct GenVxmlArgs {
    /// Markup document to read.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Suite file to write.
    #[arg(long = "out", value_name = "PATH")]
    output: PathBuf,
    /// Cycle allowance: each transition repeats at most this many times
    /// plus one within a single generated sequence.
    #[arg(long, default_value_t = 1)]
    loop_bound: usize,
}

fn main() -> ExitCode {
    env_logger::init();
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::CheckSuite { suite } => check_suite(&suite),
        Command::Similarity(args) => similarity(args),
        Command::GenVxml(args) => gen_vxml(args),
    }
}

fn fail(err: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(2)
}

fn run(args: RunArgs) -> ExitCode {
    let suite = match load_suite(&args.suite) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let model = match load_model(&args.model, args.model_format) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    let model_id = model.name().to_owned();
    let mut oracle = Oracle::new();
    oracle.register_model(model);

    // Flag values go into the base context (validated here, once) and into
    // the enforced overrides, so per-case overrides cannot shadow them.
    let mut builder = DialogContext::builder().with_model(&model_id);
    let mut enforced = ContextOverrides {
        model_id: Some(model_id),
        ..ContextOverrides::default()
    };
    if let Some(t) = args.threshold {
        builder = builder.with_threshold(t);
        enforced.equivalence_threshold = Some(t);
    }
    if let Some(t) = args.relevance_threshold {
        builder = builder.with_relevance_threshold(t);
        enforced.relevance_threshold = Some(t);
    }
    if let Some(wake) = &args.wake_phrase {
        builder = builder.with_wake_phrase(wake);
        enforced.wake_phrase = Some(wake.clone());
    }
    let ctx = match builder.build() {
        Ok(c) => c,
        Err(e) => return fail(e),
    };

    let spec = match agent_spec(args.agent.as_deref()) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let options = RunOptions {
        jobs: args.jobs,
        enforced,
    };
    let report = run_suite_with(&suite, &ctx, &spec, &oracle, &options);
    print!("{}", render_report(&report, args.report));
    ExitCode::from(report.exit_code() as u8)
}

fn agent_spec(agent: Option<&str>) -> Result<AgentSpec, String> {
    match agent {
        None => Ok(AgentSpec::in_process(|| {
            Box::new(EchoAgent) as Box<dyn InProcessAgent>
        })),
        Some(command) => {
            let parts: Vec<String> = command.split_whitespace().map(str::to_owned).collect();
            if parts.is_empty() {
                return Err("--agent command is empty".to_owned());
            }
            // The protocol obliges agents to answer state queries, so the
            // runner may ask; agents that cannot respond fail honestly.
            Ok(AgentSpec::subprocess(parts).with_state_support(true))
        }
    }
}

/// Default test double: answers every utterance with itself and has no state.
struct EchoAgent;

impl InProcessAgent for EchoAgent {
    fn respond(&mut self, user: &str) -> String {
        user.to_owned()
    }
}

fn check_suite(path: &Path) -> ExitCode {
    match load_suite(path) {
        Ok(suite) => {
            println!("OK: {} case(s)", suite.cases.len());
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

fn similarity(args: SimilarityArgs) -> ExitCode {
    let model = match load_model(&args.model, args.model_format) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    let model_id = model.name().to_owned();
    let mut oracle = Oracle::new();
    oracle.register_model(model);
    let ctx = match DialogContext::builder().with_model(model_id).build() {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    match oracle.similarity(&Utterance::new(&args.a), &Utterance::new(&args.b), &ctx) {
        Ok(score) => {
            println!("{score:.4}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

fn gen_vxml(args: GenVxmlArgs) -> ExitCode {
    let doc = match fs::read_to_string(&args.input) {
        Ok(d) => d,
        Err(e) => return fail(format!("cannot read {}: {e}", args.input.display())),
    };
    let automaton = match parse_vxml(&doc) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let outcome = generate_sequences(&automaton, Coverage::Transition, args.loop_bound);
    for state in &outcome.unreachable_states {
        eprintln!("warning: state {state} is unreachable; its transitions stay uncovered");
    }
    let text = emit_suite(&automaton, &outcome.sequences);
    if let Err(e) = fs::write(&args.output, &text) {
        return fail(format!("cannot write {}: {e}", args.output.display()));
    }
    let emitted = outcome
        .sequences
        .iter()
        .filter(|s| !s.labels.is_empty())
        .count();
    println!("generated {emitted} case(s)");
    ExitCode::SUCCESS
}
