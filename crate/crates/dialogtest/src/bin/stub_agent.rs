//! Line-protocol agent doubles for exercising the harness end to end.
//!
//! Usage: `stub_agent <mode> [arg]`
//!
//! Modes:
//! - `echo` (default): answers every utterance with itself.
//! - `strip-wake <phrase>`: echoes with any leading wake phrases removed.
//! - `clock`: fixed alarm answer plus a populated state document.
//! - `sleepy <ms>`: waits before announcing READY.
//! - `slow <ms>`: waits before each answer.
//! - `rude`: answers with a `B`-prefixed line, violating the protocol.
//! - `noready`: opens with a line other than READY.
//! - `badstate`: answers state queries with a self-conflicting document.
//! - `hang`: ignores BYE and keeps reading; the driver has to kill it.

use std::io::{self, BufRead, Write};
use std::thread;
use std::time::Duration;

use dialogtest::utterance::Utterance;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mode = args.first().map(String::as_str).unwrap_or("echo");
    let stdin = io::stdin();
    let stdout = io::stdout();
    let mut out = stdout.lock();

    match mode {
        "sleepy" => {
            thread::sleep(delay(&args));
            say(&mut out, "READY");
        }
        "noready" => say(&mut out, "HELLO"),
        _ => say(&mut out, "READY"),
    }

    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line == "BYE" {
            if mode == "hang" {
                continue;
            }
            break;
        }
        if line == "Q" {
            let doc = match mode {
                "clock" => "alarm.set=true;alarm.time=06:30;volume=3",
                "badstate" => "alarm=1;alarm.time=2",
                _ => "",
            };
            if doc.is_empty() {
                say(&mut out, "S");
            } else {
                say(&mut out, &format!("S {doc}"));
            }
            continue;
        }
        let user = line.strip_prefix("U ").unwrap_or(&line);
        let reply = match mode {
            "strip-wake" => {
                let wake = args.get(1).map(String::as_str).unwrap_or("OK Google");
                Utterance::new(user).strip_wake(wake).raw().to_owned()
            }
            "slow" => {
                thread::sleep(delay(&args));
                user.to_owned()
            }
            "rude" => {
                say(&mut out, &format!("B {user}"));
                continue;
            }
            "clock" => "the alarm is set for 06:30".to_owned(),
            _ => user.to_owned(),
        };
        say(&mut out, &format!("A {reply}"));
    }
}

// stdout is block-buffered on a pipe; the driver waits on whole lines.
fn say(out: &mut impl Write, line: &str) {
    writeln!(out, "{line}").expect("stdout stays open");
    out.flush().expect("stdout flush");
}

fn delay(args: &[String]) -> Duration {
    Duration::from_millis(args.get(1).and_then(|s| s.parse().ok()).unwrap_or(50))
}
