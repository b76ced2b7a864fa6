//! Case execution and reporting.
//!
//! Each case runs in a fresh agent session. Within a case, a failed
//! expectation records its verdict and execution continues; an error
//! (session trouble, oracle trouble) stops the case and poisons nothing
//! else. Cases may run on several threads; the report is always
//! assembled in declaration order, so output is schedule-independent.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::adapter::{open_session, AgentSpec};
use crate::context::DialogContext;
use crate::oracle::{assert_state, BreakdownKind, Oracle, Verdict};
use crate::suite::{ContextOverrides, TestCase, TestStep, TestSuite};
use crate::utterance::Utterance;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseStatus {
    Pass,
    Fail,
    Error,
}

/// One executed step. `say` steps carry no verdict.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// One-based position within the case.
    pub index: usize,
    pub label: &'static str,
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone)]
pub struct CaseReport {
    pub name: String,
    pub status: CaseStatus,
    /// Steps that actually executed, in order.
    pub steps: Vec<StepRecord>,
    /// Present iff status is [`CaseStatus::Error`].
    pub error: Option<String>,
    pub duration: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Totals {
    pub passed: usize,
    pub failed: usize,
    pub errored: usize,
}

#[derive(Debug, Clone)]
pub struct TestReport {
    pub cases: Vec<CaseReport>,
    pub duration: Duration,
    /// The base context the run started from.
    pub context: DialogContext,
}

impl TestReport {
    pub fn totals(&self) -> Totals {
        let mut t = Totals::default();
        for case in &self.cases {
            match case.status {
                CaseStatus::Pass => t.passed += 1,
                CaseStatus::Fail => t.failed += 1,
                CaseStatus::Error => t.errored += 1,
            }
        }
        t
    }

    /// 0 all pass; 1 some failure, no error; 2 any error.
    pub fn exit_code(&self) -> i32 {
        let t = self.totals();
        if t.errored > 0 {
            2
        } else if t.failed > 0 {
            1
        } else {
            0
        }
    }
}

/// Knobs beyond the base context.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 and 1 both mean fully serial.
    pub jobs: usize,
    /// Overrides applied after any per-case overrides, so they always
    /// win. The CLI routes its flags through here.
    pub enforced: ContextOverrides,
}

pub fn run_suite(
    suite: &TestSuite,
    ctx: &DialogContext,
    spec: &AgentSpec,
    oracle: &Oracle,
) -> TestReport {
    run_suite_with(suite, ctx, spec, oracle, &RunOptions::default())
}

pub fn run_suite_with(
    suite: &TestSuite,
    ctx: &DialogContext,
    spec: &AgentSpec,
    oracle: &Oracle,
    options: &RunOptions,
) -> TestReport {
    let start = Instant::now();
    let jobs = options.jobs.clamp(1, suite.cases.len().max(1));
    let mut slots: Vec<Option<CaseReport>> = suite.cases.iter().map(|_| None).collect();
    if jobs == 1 {
        for (slot, case) in slots.iter_mut().zip(&suite.cases) {
            *slot = Some(run_case(case, ctx, spec, oracle, &options.enforced));
        }
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..jobs)
                .map(|worker| {
                    let enforced = &options.enforced;
                    scope.spawn(move || {
                        suite
                            .cases
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| i % jobs == worker)
                            .map(|(i, case)| (i, run_case(case, ctx, spec, oracle, enforced)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for handle in handles {
                for (i, report) in handle.join().expect("worker panicked") {
                    slots[i] = Some(report);
                }
            }
        });
    }
    TestReport {
        cases: slots.into_iter().map(|s| s.expect("every case ran")).collect(),
        duration: start.elapsed(),
        context: ctx.clone(),
    }
}

fn error_report(name: &str, steps: Vec<StepRecord>, detail: String, start: Instant) -> CaseReport {
    CaseReport {
        name: name.to_owned(),
        status: CaseStatus::Error,
        steps,
        error: Some(detail),
        duration: start.elapsed(),
    }
}

fn run_case(
    case: &TestCase,
    base: &DialogContext,
    spec: &AgentSpec,
    oracle: &Oracle,
    enforced: &ContextOverrides,
) -> CaseReport {
    let start = Instant::now();
    let ctx = match enforced
        .apply(case.overrides.apply(base.to_builder()))
        .build()
    {
        Ok(ctx) => ctx,
        Err(e) => return error_report(&case.name, Vec::new(), format!("invalid context: {e}"), start),
    };
    let mut session = match open_session(spec, ctx.max_turns()) {
        Ok(s) => s,
        Err(e) => {
            return error_report(&case.name, Vec::new(), format!("cannot open session: {e}"), start)
        }
    };

    let mut steps = Vec::new();
    let mut any_failed = false;
    let mut error = None;
    for (i, step) in case.steps.iter().enumerate() {
        let index = i + 1;
        match step {
            TestStep::Say { text } => match session.send(&Utterance::new(text.clone())) {
                Ok(_) => steps.push(StepRecord {
                    index,
                    label: "say",
                    verdict: None,
                }),
                Err(e) => {
                    error = Some(format!("step {index} say {text:?}: {e}"));
                    break;
                }
            },
            TestStep::ExpectEquivalent {
                expected,
                threshold,
                message,
            } => {
                let actual = session
                    .transcript()
                    .last()
                    .expect("validation guarantees a prior say")
                    .agent
                    .clone();
                let step_ctx = match threshold {
                    Some(t) => match ctx.to_builder().with_threshold(*t).build() {
                        Ok(c) => c,
                        Err(e) => {
                            error = Some(format!("step {index} expect_equivalent: {e}"));
                            break;
                        }
                    },
                    None => ctx.clone(),
                };
                let msg = message.clone().unwrap_or_else(|| {
                    format!(
                        "expected a response equivalent to {:?}, got {:?}",
                        expected,
                        actual.raw()
                    )
                });
                match oracle.assert_equivalent(
                    &actual,
                    &Utterance::new(expected.clone()),
                    &step_ctx,
                    &msg,
                ) {
                    Ok(verdict) => {
                        any_failed |= !verdict.passed;
                        steps.push(StepRecord {
                            index,
                            label: "expect_equivalent",
                            verdict: Some(verdict),
                        });
                    }
                    Err(e) => {
                        error = Some(format!("step {index} expect_equivalent {expected:?}: {e}"));
                        break;
                    }
                }
            }
            TestStep::ExpectState { path, matcher } => {
                let outcome = session
                    .query_state()
                    .map_err(|e| e.to_string())
                    .and_then(|doc| assert_state(&doc, path, matcher).map_err(|e| e.to_string()));
                match outcome {
                    Ok(verdict) => {
                        any_failed |= !verdict.passed;
                        steps.push(StepRecord {
                            index,
                            label: "expect_state",
                            verdict: Some(verdict),
                        });
                    }
                    Err(e) => {
                        error = Some(format!("step {index} expect_state {path:?}: {e}"));
                        break;
                    }
                }
            }
            TestStep::ExpectNoBreakdown => {
                let response = session
                    .transcript()
                    .last()
                    .expect("validation guarantees a prior say")
                    .agent
                    .clone();
                match oracle.classify_breakdown(session.transcript(), &response, &ctx) {
                    Ok(label) => {
                        let passed = label.kind == BreakdownKind::None;
                        // score: relevance when it was computed, else -1
                        // (the floor of the cosine range) for rule-1 hits
                        let verdict = Verdict {
                            passed,
                            score: label.evidence.relevance.unwrap_or(-1.0),
                            threshold: ctx.relevance_threshold(),
                            strategy_id: ctx.strategy_id().to_owned(),
                            message: if passed {
                                "no breakdown detected".to_owned()
                            } else {
                                format!(
                                    "breakdown detected: {} (response {:?})",
                                    label.kind,
                                    response.raw()
                                )
                            },
                            skipped: None,
                        };
                        any_failed |= !passed;
                        steps.push(StepRecord {
                            index,
                            label: "expect_no_breakdown",
                            verdict: Some(verdict),
                        });
                    }
                    Err(e) => {
                        error = Some(format!("step {index} expect_no_breakdown: {e}"));
                        break;
                    }
                }
            }
        }
    }
    let _ = session.close();
    let status = if error.is_some() {
        CaseStatus::Error
    } else if any_failed {
        CaseStatus::Fail
    } else {
        CaseStatus::Pass
    };
    CaseReport {
        name: case.name.clone(),
        status,
        steps,
        error,
        duration: start.elapsed(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Human,
    Tap,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "human" => Ok(ReportFormat::Human),
            "tap" => Ok(ReportFormat::Tap),
            other => Err(format!("unknown report format {other:?} (expected human or tap)")),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Human => "human",
            ReportFormat::Tap => "tap",
        })
    }
}

pub fn render_report(report: &TestReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Tap => render_tap(report),
        ReportFormat::Human => render_human(report),
    }
}

/// Plan line, then one result line per case in order; diagnostics are
/// `#` lines. Contains nothing run-dependent, so identical runs render
/// byte-identically.
fn render_tap(report: &TestReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "1..{}", report.cases.len());
    for (i, case) in report.cases.iter().enumerate() {
        let n = i + 1;
        match case.status {
            CaseStatus::Pass => {
                let _ = writeln!(out, "ok {n} - {}", case.name);
            }
            CaseStatus::Fail => {
                let _ = writeln!(out, "not ok {n} - {}", case.name);
                for step in failed_steps(case) {
                    if let Some(v) = &step.verdict {
                        let _ = writeln!(out, "# score={:.4} threshold={:.4}", v.score, v.threshold);
                        if !v.message.is_empty() {
                            let _ = writeln!(out, "# {}", v.message);
                        }
                    }
                }
            }
            CaseStatus::Error => {
                let _ = writeln!(out, "not ok {n} - {}", case.name);
                let _ = writeln!(
                    out,
                    "# ERROR: {}",
                    case.error.as_deref().unwrap_or("unknown error")
                );
            }
        }
    }
    out
}

fn failed_steps(case: &CaseReport) -> impl Iterator<Item = &StepRecord> {
    case.steps
        .iter()
        .filter(|s| s.verdict.as_ref().is_some_and(|v| !v.passed))
}

fn render_human(report: &TestReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "running {} case(s)", report.cases.len());
    for case in &report.cases {
        match case.status {
            CaseStatus::Pass => {
                let _ = writeln!(out, "PASS {}", case.name);
            }
            CaseStatus::Fail => {
                let _ = writeln!(out, "FAIL {}", case.name);
                for step in failed_steps(case) {
                    if let Some(v) = &step.verdict {
                        let _ = writeln!(
                            out,
                            "  step {} {}: score={:.4} threshold={:.4}",
                            step.index, step.label, v.score, v.threshold
                        );
                        if !v.message.is_empty() {
                            let _ = writeln!(out, "  {}", v.message);
                        }
                    }
                }
            }
            CaseStatus::Error => {
                let _ = writeln!(
                    out,
                    "ERROR {}: {}",
                    case.name,
                    case.error.as_deref().unwrap_or("unknown error")
                );
            }
        }
    }
    let totals = report.totals();
    let _ = writeln!(
        out,
        "totals: {} passed, {} failed, {} errored",
        totals.passed, totals.failed, totals.errored
    );
    let _ = writeln!(out, "duration: {:.3}s", report.duration.as_secs_f64());
    out
}
