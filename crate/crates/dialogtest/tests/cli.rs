//! End-to-end checks of the command-line interface: exit codes, report
//! formats, suite validation, ad-hoc scoring, and markup generation.

mod common;

use common::{cli_bin, run_cli, stderr_of, stdout_of, stub_bin, write_file, TOY_MODEL_GLOVE};

struct Fixture {
    dir: tempfile::TempDir,
    model: String,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().expect("tempdir");
        let model = write_file(dir.path(), "toy.glove", TOY_MODEL_GLOVE)
            .to_string_lossy()
            .into_owned();
        Fixture { dir, model }
    }

    fn suite(&self, name: &str, text: &str) -> String {
        write_file(self.dir.path(), name, text)
            .to_string_lossy()
            .into_owned()
    }

    fn run_tap(&self, suite: &str, extra: &[&str]) -> std::process::Output {
        let mut args = vec![
            "run",
            "--suite",
            suite,
            "--model",
            &self.model,
            "--model-format",
            "glove-text",
            "--report",
            "tap",
        ];
        args.extend_from_slice(extra);
        run_cli(&args)
    }
}

#[test]
fn all_passing_suite_exits_zero() {
    let fx = Fixture::new();
    let suite = fx.suite("pass.dtest", "case greet\n  say: hi\n  expect_equivalent: hello\n");
    let out = fx.run_tap(&suite, &[]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_of(&out), "1..1\nok 1 - greet\n");
}

#[test]
fn failing_suite_exits_one_with_diagnostics() {
    let fx = Fixture::new();
    let suite = fx.suite("fail.dtest", "case mismatch\n  say: a\n  expect_equivalent: b\n");
    let out = fx.run_tap(&suite, &[]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = stdout_of(&out);
    assert!(stdout.contains("not ok 1 - mismatch"), "got {stdout:?}");
    assert!(stdout.contains("# score=0.0000 threshold=0.5000"), "got {stdout:?}");
}

#[test]
fn erroring_suite_exits_two_and_dominates_failures() {
    let fx = Fixture::new();
    let suite = fx.suite(
        "mixed.dtest",
        "case ok\n  say: hi\n  expect_equivalent: hello\n\n\
         case bad\n  say: a\n  expect_equivalent: b\n\n\
         case broken\n  say: zzz qqq\n  expect_equivalent: hi\n",
    );
    let out = fx.run_tap(&suite, &[]);
    assert_eq!(out.status.code(), Some(2));
    let stdout = stdout_of(&out);
    assert!(stdout.starts_with("1..3\n"), "got {stdout:?}");
    assert!(stdout.contains("ok 1 - ok"), "got {stdout:?}");
    assert!(stdout.contains("not ok 2 - bad"), "got {stdout:?}");
    assert!(stdout.contains("# ERROR:"), "got {stdout:?}");
}

#[test]
fn tap_output_is_byte_stable_across_runs() {
    let fx = Fixture::new();
    let suite = fx.suite(
        "stable.dtest",
        "case greet\n  say: hi\n  expect_equivalent: hello\n\n\
         case mismatch\n  say: a\n  expect_equivalent: b\n",
    );
    let agent = format!("{} echo", stub_bin());
    let first = fx.run_tap(&suite, &["--agent", &agent]);
    let second = fx.run_tap(&suite, &["--agent", &agent]);
    assert_eq!(first.status.code(), second.status.code());
    assert_eq!(stdout_of(&first), stdout_of(&second));
}

#[test]
fn threshold_flag_beats_suite_and_default() {
    let fx = Fixture::new();
    // hi/hello score 0.8: the case override alone would fail it, the flag
    // re-lowers it and must win.
    let suite = fx.suite(
        "override.dtest",
        "case tight\n  context.equivalence_threshold = 0.9\n  say: hi\n  expect_equivalent: hello\n",
    );
    let strict = fx.run_tap(&suite, &[]);
    assert_eq!(strict.status.code(), Some(1));
    let relaxed = fx.run_tap(&suite, &["--threshold", "0.7"]);
    assert_eq!(relaxed.status.code(), Some(0));
}

#[test]
fn out_of_range_threshold_is_rejected_upfront() {
    let fx = Fixture::new();
    let suite = fx.suite("pass.dtest", "case greet\n  say: hi\n  expect_equivalent: hello\n");
    let out = fx.run_tap(&suite, &["--threshold", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("error:"));
}

#[test]
fn missing_model_file_exits_two() {
    let fx = Fixture::new();
    let suite = fx.suite("pass.dtest", "case greet\n  say: hi\n  expect_equivalent: hello\n");
    let out = run_cli(&[
        "run",
        "--suite",
        &suite,
        "--model",
        "/definitely/not/a/model",
        "--model-format",
        "glove-text",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("error:"));
}

#[test]
fn state_expectations_run_against_the_clock_stub() {
    let fx = Fixture::new();
    let suite = fx.suite(
        "state.dtest",
        "case alarm\n  say: alarm\n  expect_state: alarm.set == true\n  expect_state: alarm.time == 06:30\n\n\
         case gone\n  say: alarm\n  expect_state: snooze exists\n",
    );
    let agent = format!("{} clock", stub_bin());
    let out = fx.run_tap(&suite, &["--agent", &agent]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = stdout_of(&out);
    assert!(stdout.contains("ok 1 - alarm"), "got {stdout:?}");
    assert!(stdout.contains("not ok 2 - gone"), "got {stdout:?}");
}

#[test]
fn human_report_summarizes_cases_and_totals() {
    let fx = Fixture::new();
    let suite = fx.suite(
        "two.dtest",
        "case greet\n  say: hi\n  expect_equivalent: hello\n\n\
         case mismatch\n  say: a\n  expect_equivalent: b\n",
    );
    let out = run_cli(&[
        "run",
        "--suite",
        &suite,
        "--model",
        &fx.model,
        "--model-format",
        "glove-text",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = stdout_of(&out);
    assert!(stdout.contains("running 2 case(s)"), "got {stdout:?}");
    assert!(stdout.contains("PASS greet"), "got {stdout:?}");
    assert!(stdout.contains("FAIL mismatch"), "got {stdout:?}");
    assert!(stdout.contains("1 passed, 1 failed, 0 errored"), "got {stdout:?}");
}

#[test]
fn parallel_runs_match_serial_runs() {
    let fx = Fixture::new();
    let suite = fx.suite(
        "par.dtest",
        "case one\n  say: hi\n  expect_equivalent: hello\n\n\
         case two\n  say: a\n  expect_equivalent: b\n\n\
         case three\n  say: hi\n  expect_equivalent: hi\n",
    );
    let serial = fx.run_tap(&suite, &["--jobs", "1"]);
    let parallel = fx.run_tap(&suite, &["--jobs", "3"]);
    assert_eq!(stdout_of(&serial), stdout_of(&parallel));
    assert_eq!(serial.status.code(), parallel.status.code());
}

#[test]
fn check_suite_validates_without_running() {
    let fx = Fixture::new();
    let good = fx.suite("good.dtest", "case a\n  say: hi\n  expect_no_breakdown\n");
    let out = run_cli(&["check-suite", &good]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_of(&out), "OK: 1 case(s)\n");

    let bad = fx.suite("bad.dtest", "case a\n  expect_no_breakdown\n");
    let out = run_cli(&["check-suite", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("error:"));
}

#[test]
fn similarity_prints_the_score() {
    let fx = Fixture::new();
    let out = run_cli(&[
        "similarity",
        "hi",
        "hello",
        "--model",
        &fx.model,
        "--model-format",
        "glove-text",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_of(&out), "0.8000\n");

    let out = run_cli(&[
        "similarity",
        "zzz",
        "hello",
        "--model",
        &fx.model,
        "--model-format",
        "glove-text",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_vxml_emits_a_loadable_suite() {
    let fx = Fixture::new();
    let doc = r##"
        <vxml>
          <form id="main">
            <field name="confirm">
              <prompt>Goodbye</prompt>
              <option><exit/>yes</option>
              <option><exit/>no</option>
            </field>
          </form>
          <form id="orphan">
            <field name="lost">
              <option><exit/>never</option>
            </field>
          </form>
        </vxml>
    "##;
    let input = fx.suite("flow.vxml", doc);
    let output = fx.dir.path().join("generated.dtest");
    let out = run_cli(&[
        "gen-vxml",
        "--in",
        &input,
        "--out",
        &output.to_string_lossy(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_of(&out), "generated 2 case(s)\n");
    assert!(stderr_of(&out).contains("orphan.lost"), "unreachable state goes unmentioned");

    let check = run_cli(&["check-suite", &output.to_string_lossy()]);
    assert_eq!(check.status.code(), Some(0));
    assert_eq!(stdout_of(&check), "OK: 2 case(s)\n");
}

#[test]
fn gen_vxml_rejects_bad_markup() {
    let fx = Fixture::new();
    let input = fx.suite("bad.vxml", "<vxml><menu id=\"m\"/></vxml>");
    let output = fx.dir.path().join("never.dtest");
    let out = run_cli(&[
        "gen-vxml",
        "--in",
        &input,
        "--out",
        &output.to_string_lossy(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("unsupported element"));
    assert!(!output.exists());
}

#[test]
fn usage_errors_exit_two() {
    let out = run_cli(&["run"]);
    assert_eq!(out.status.code(), Some(2));
    let out = std::process::Command::new(cli_bin())
        .arg("no-such-command")
        .output()
        .expect("CLI binary runs");
    assert_eq!(out.status.code(), Some(2));
}
