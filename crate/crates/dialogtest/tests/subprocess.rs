//! Drives the real stub agent binary over pipes to exercise the line
//! protocol: handshake, exchanges, state queries, timeouts, and teardown.

mod common;

use std::time::{Duration, Instant};

use dialogtest::adapter::{open_session, AdapterError, AgentSpec};
use dialogtest::state::{StateNode, StateValue};
use dialogtest::utterance::Utterance;

use common::stub_bin;

fn stub_spec(args: &[&str]) -> AgentSpec {
    let mut command = vec![stub_bin().to_owned()];
    command.extend(args.iter().map(|s| s.to_string()));
    AgentSpec::subprocess(command)
}

#[test]
fn echo_agent_round_trips_utterances() {
    let mut session = open_session(&stub_spec(&["echo"]), 50).unwrap();
    let exchange = session.send(&Utterance::new("hi there")).unwrap();
    assert_eq!(exchange.agent.raw(), "hi there");
    assert_eq!(exchange.index, 0);
    let exchange = session.send(&Utterance::new("")).unwrap();
    assert_eq!(exchange.agent.raw(), "");
    let transcript = session.close();
    assert_eq!(transcript.len(), 2);
    assert_eq!(transcript.exchanges()[0].user.raw(), "hi there");
}

#[test]
fn strip_wake_agent_drops_leading_wake_phrases() {
    let mut session = open_session(&stub_spec(&["strip-wake", "OK Google"]), 10).unwrap();
    let exchange = session
        .send(&Utterance::new("OK Google OK Google what time is it?"))
        .unwrap();
    assert_eq!(exchange.agent.raw(), "what time is it?");
    session.close();
}

#[test]
fn clock_agent_exposes_typed_state() {
    let spec = stub_spec(&["clock"]).with_state_support(true);
    let mut session = open_session(&spec, 10).unwrap();
    session.send(&Utterance::new("set an alarm")).unwrap();
    let doc = session.query_state().unwrap();
    assert_eq!(
        doc.resolve("alarm.set").unwrap(),
        Some(&StateNode::Leaf(StateValue::Boolean(true)))
    );
    // Clock-face text must stay text, not become a number.
    assert_eq!(
        doc.resolve("alarm.time").unwrap(),
        Some(&StateNode::Leaf(StateValue::Text("06:30".to_owned())))
    );
    assert_eq!(
        doc.resolve("volume").unwrap(),
        Some(&StateNode::Leaf(StateValue::Number(3.0)))
    );
    assert_eq!(doc.resolve("missing").unwrap(), None);
    session.close();
}

#[test]
fn state_query_without_support_is_rejected_locally() {
    let mut session = open_session(&stub_spec(&["clock"]), 10).unwrap();
    assert!(matches!(
        session.query_state(),
        Err(AdapterError::StateUnsupported)
    ));
    session.close();
}

#[test]
fn late_ready_breaches_handshake_deadline() {
    let spec = stub_spec(&["sleepy", "2000"]).with_response_timeout(Duration::from_millis(150));
    match open_session(&spec, 10) {
        Err(AdapterError::HandshakeTimeout(_)) => {}
        other => panic!("expected handshake timeout, got {other:?}"),
    }
}

#[test]
fn wrong_greeting_is_a_protocol_violation() {
    match open_session(&stub_spec(&["noready"]), 10) {
        Err(AdapterError::ProtocolViolation(detail)) => {
            assert!(detail.contains("HELLO"), "detail was {detail:?}");
        }
        other => panic!("expected protocol violation, got {other:?}"),
    }
}

#[test]
fn mistagged_reply_is_a_protocol_violation() {
    let mut session = open_session(&stub_spec(&["rude"]), 10).unwrap();
    match session.send(&Utterance::new("hello")) {
        Err(AdapterError::ProtocolViolation(_)) => {}
        other => panic!("expected protocol violation, got {other:?}"),
    }
}

#[test]
fn slow_reply_breaches_response_deadline() {
    let spec = stub_spec(&["slow", "2000"]).with_response_timeout(Duration::from_millis(150));
    let mut session = open_session(&spec, 10).unwrap();
    match session.send(&Utterance::new("hello")) {
        Err(AdapterError::ResponseTimeout(_)) => {}
        other => panic!("expected response timeout, got {other:?}"),
    }
}

#[test]
fn conflicting_state_answer_is_malformed() {
    let spec = stub_spec(&["badstate"]).with_state_support(true);
    let mut session = open_session(&spec, 10).unwrap();
    match session.query_state() {
        Err(AdapterError::MalformedState(_)) => {}
        other => panic!("expected malformed state, got {other:?}"),
    }
    session.close();
}

#[test]
fn agent_ignoring_goodbye_is_killed_within_grace() {
    let mut session = open_session(&stub_spec(&["hang"]), 10).unwrap();
    session.send(&Utterance::new("still there?")).unwrap();
    let start = Instant::now();
    let transcript = session.close();
    assert_eq!(transcript.len(), 1);
    assert!(
        start.elapsed() < Duration::from_secs(5),
        "close took {:?}",
        start.elapsed()
    );
}

#[test]
fn missing_binary_fails_to_launch() {
    let spec = AgentSpec::subprocess(vec!["/definitely/not/an/agent".to_owned()]);
    match open_session(&spec, 10) {
        Err(AdapterError::LaunchFailure(_)) => {}
        other => panic!("expected launch failure, got {other:?}"),
    }
}

#[test]
fn turn_budget_applies_across_the_wire() {
    let mut session = open_session(&stub_spec(&["echo"]), 2).unwrap();
    session.send(&Utterance::new("one")).unwrap();
    session.send(&Utterance::new("two")).unwrap();
    match session.send(&Utterance::new("three")) {
        Err(AdapterError::MaxTurnsExceeded(2)) => {}
        other => panic!("expected turn budget breach, got {other:?}"),
    }
    session.close();
}
