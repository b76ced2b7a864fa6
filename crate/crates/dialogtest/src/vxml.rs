//! Dialog models parsed from form markup, plus input sequence generation.
//!
//! A document is a `<vxml>` element holding `<form id="...">` elements, each
//! with `<field name="...">` children. A field may carry `<prompt>` text and
//! any number of `<option>` children. Each option's text is the user input
//! that triggers it; an embedded `<goto next="#form-id"/>` jumps to the first
//! field of another form, `<exit/>` ends the dialog, and an option with
//! neither falls through to the next field of its own form (or ends the
//! dialog when the field is the form's last).
//!
//! The automaton has one state per field, named `form-id.field-name`, plus
//! the distinguished [`END_STATE`]. [`generate_sequences`] walks it to build
//! input sequences that cover every reachable transition, and [`emit_suite`]
//! renders those sequences as a test suite.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use thiserror::Error;

/// Terminal state reached by `<exit/>` or by falling through a form's last field.
pub const END_STATE: &str = "END";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VxmlError {
    #[error("unsupported element <{0}>")]
    UnsupportedElement(String),
    #[error("goto targets unknown form {0:?}")]
    DanglingGoto(String),
    #[error("malformed markup: {0}")]
    MalformedMarkup(String),
    #[error("field {field} maps input {label:?} to more than one target")]
    NondeterministicField { field: String, label: String },
}

/// Deterministic dialog automaton: labeled transitions between named states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogAutomaton {
    initial: String,
    states: BTreeSet<String>,
    // from -> label -> to; BTreeMaps keep traversal order lexicographic.
    transitions: BTreeMap<String, BTreeMap<String, String>>,
    prompts: BTreeMap<String, String>,
}

impl DialogAutomaton {
    pub fn new(initial: impl Into<String>) -> Self {
        let initial = initial.into();
        assert!(!initial.is_empty(), "initial state id must be nonempty");
        let mut states = BTreeSet::new();
        states.insert(initial.clone());
        states.insert(END_STATE.to_owned());
        DialogAutomaton {
            initial,
            states,
            transitions: BTreeMap::new(),
            prompts: BTreeMap::new(),
        }
    }

    /// Registers a state with no transitions yet. Idempotent.
    pub fn add_state(&mut self, state: impl Into<String>) {
        let state = state.into();
        assert!(!state.is_empty(), "state id must be nonempty");
        self.states.insert(state);
    }

    /// Adds `from --label--> to`, registering both endpoints.
    ///
    /// A second target for the same `(from, label)` pair is rejected: the
    /// automaton stays deterministic by construction.
    pub fn add_transition(
        &mut self,
        from: impl Into<String>,
        label: impl Into<String>,
        to: impl Into<String>,
    ) -> Result<(), VxmlError> {
        let (from, label, to) = (from.into(), label.into(), to.into());
        if from.is_empty() || to.is_empty() {
            return Err(VxmlError::MalformedMarkup(
                "transition endpoints must be nonempty".to_owned(),
            ));
        }
        if label.is_empty() {
            return Err(VxmlError::MalformedMarkup(
                "transition label must be nonempty".to_owned(),
            ));
        }
        let slots = self.transitions.entry(from.clone()).or_default();
        if slots.contains_key(&label) {
            return Err(VxmlError::NondeterministicField { field: from, label });
        }
        self.states.insert(from);
        self.states.insert(to.clone());
        slots.insert(label, to);
        Ok(())
    }

    /// Attaches prompt text to a state; empty text leaves the state promptless.
    pub fn set_prompt(&mut self, state: impl Into<String>, prompt: impl Into<String>) {
        let state = state.into();
        assert!(!state.is_empty(), "state id must be nonempty");
        let prompt = prompt.into();
        self.states.insert(state.clone());
        if !prompt.is_empty() {
            self.prompts.insert(state, prompt);
        }
    }

    pub fn initial(&self) -> &str {
        &self.initial
    }

    pub fn contains_state(&self, state: &str) -> bool {
        self.states.contains(state)
    }

    pub fn states(&self) -> impl Iterator<Item = &str> {
        self.states.iter().map(String::as_str)
    }

    pub fn prompt(&self, state: &str) -> Option<&str> {
        self.prompts.get(state).map(String::as_str)
    }

    /// Outgoing `(label, target)` pairs of `state`, ordered by label.
    pub fn transitions_from(&self, state: &str) -> impl Iterator<Item = (&str, &str)> {
        self.transitions
            .get(state)
            .into_iter()
            .flat_map(|slots| slots.iter().map(|(l, t)| (l.as_str(), t.as_str())))
    }

    /// All `(from, label, to)` triples, ordered by source state then label.
    pub fn transitions(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.transitions.iter().flat_map(|(from, slots)| {
            slots
                .iter()
                .map(move |(l, t)| (from.as_str(), l.as_str(), t.as_str()))
        })
    }

    pub fn transition_count(&self) -> usize {
        self.transitions.values().map(BTreeMap::len).sum()
    }

    pub fn target(&self, from: &str, label: &str) -> Option<&str> {
        self.transitions.get(from)?.get(label).map(String::as_str)
    }

    /// A state with no outgoing transitions ends every walk that reaches it.
    pub fn is_terminal(&self, state: &str) -> bool {
        self.transitions
            .get(state)
            .is_none_or(|slots| slots.is_empty())
    }
}

// ---------------------------------------------------------------------------
// Markup parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Vxml,
    Form,
    Field,
    Prompt,
    Option,
    /// Body of `<goto>` or `<exit>`; carries no text of its own.
    Target,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum OptionTarget {
    NextField,
    Form(String),
    Exit,
}

#[derive(Debug)]
struct OptionIr {
    label: String,
    target: OptionTarget,
}

#[derive(Debug)]
struct FieldIr {
    name: String,
    prompt_parts: Vec<String>,
    options: Vec<OptionIr>,
}

#[derive(Debug)]
struct FormIr {
    id: String,
    fields: Vec<FieldIr>,
}

/// Parses a markup document into its dialog automaton.
pub fn parse_vxml(doc: &str) -> Result<DialogAutomaton, VxmlError> {
    let forms = parse_forms(doc)?;
    build_automaton(forms)
}

fn malformed(detail: impl Into<String>) -> VxmlError {
    VxmlError::MalformedMarkup(detail.into())
}

fn collapse_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn element_name(start: &BytesStart<'_>) -> String {
    String::from_utf8_lossy(start.name().as_ref()).into_owned()
}

fn required_attr(start: &BytesStart<'_>, attr: &str, element: &str) -> Result<String, VxmlError> {
    let found = start
        .try_get_attribute(attr)
        .map_err(|e| malformed(format!("bad attribute on <{element}>: {e}")))?
        .ok_or_else(|| malformed(format!("<{element}> needs a {attr} attribute")))?;
    let value = found
        .unescape_value()
        .map_err(|e| malformed(format!("bad {attr} attribute on <{element}>: {e}")))?
        .into_owned();
    if value.trim().is_empty() {
        return Err(malformed(format!(
            "<{element}> needs a nonempty {attr} attribute"
        )));
    }
    Ok(value)
}

struct MarkupWalker {
    stack: Vec<Slot>,
    forms: Vec<FormIr>,
    form: Option<FormIr>,
    field: Option<FieldIr>,
    // Shared text buffer for the prompt or option currently open.
    text: String,
    option_target: Option<OptionTarget>,
}

impl MarkupWalker {
    fn new() -> Self {
        MarkupWalker {
            stack: Vec::new(),
            forms: Vec::new(),
            form: None,
            field: None,
            text: String::new(),
            option_target: None,
        }
    }

    fn qualified_field(&self) -> String {
        let form = self.form.as_ref().map_or("?", |f| f.id.as_str());
        let field = self.field.as_ref().map_or("?", |f| f.name.as_str());
        format!("{form}.{field}")
    }

    fn open(&mut self, start: &BytesStart<'_>) -> Result<(), VxmlError> {
        let name = element_name(start);
        let slot = match (name.as_str(), self.stack.last()) {
            ("vxml", None) => Slot::Vxml,
            ("form", Some(Slot::Vxml)) => {
                let id = required_attr(start, "id", "form")?;
                if self.forms.iter().any(|f| f.id == id) {
                    return Err(malformed(format!("duplicate form id {id:?}")));
                }
                self.form = Some(FormIr {
                    id,
                    fields: Vec::new(),
                });
                Slot::Form
            }
            ("field", Some(Slot::Form)) => {
                let name = required_attr(start, "name", "field")?;
                let form = self.form.as_ref().expect("form slot implies open form");
                if form.fields.iter().any(|f| f.name == name) {
                    return Err(malformed(format!(
                        "duplicate field name {name:?} in form {:?}",
                        form.id
                    )));
                }
                self.field = Some(FieldIr {
                    name,
                    prompt_parts: Vec::new(),
                    options: Vec::new(),
                });
                Slot::Field
            }
            ("prompt", Some(Slot::Field)) => {
                self.text.clear();
                Slot::Prompt
            }
            ("option", Some(Slot::Field)) => {
                self.text.clear();
                self.option_target = None;
                Slot::Option
            }
            ("goto", Some(Slot::Option)) => {
                let next = required_attr(start, "next", "goto")?;
                let target = next.strip_prefix('#').ok_or_else(|| {
                    malformed(format!("goto target {next:?} must look like \"#form-id\""))
                })?;
                if target.is_empty() {
                    return Err(malformed("goto target names no form".to_owned()));
                }
                self.set_option_target(OptionTarget::Form(target.to_owned()))?;
                Slot::Target
            }
            ("exit", Some(Slot::Option)) => {
                self.set_option_target(OptionTarget::Exit)?;
                Slot::Target
            }
            ("vxml" | "form" | "field" | "prompt" | "option" | "goto" | "exit", _) => {
                return Err(malformed(format!("<{name}> is not allowed here")));
            }
            _ => return Err(VxmlError::UnsupportedElement(name)),
        };
        self.stack.push(slot);
        Ok(())
    }

    fn set_option_target(&mut self, target: OptionTarget) -> Result<(), VxmlError> {
        if self.option_target.is_some() {
            return Err(malformed(format!(
                "option in field {} has more than one target",
                self.qualified_field()
            )));
        }
        self.option_target = Some(target);
        Ok(())
    }

    fn close(&mut self) -> Result<(), VxmlError> {
        let slot = self
            .stack
            .pop()
            .ok_or_else(|| malformed("unmatched closing tag".to_owned()))?;
        match slot {
            Slot::Prompt => {
                let text = collapse_ws(&self.text);
                self.text.clear();
                let field = self.field.as_mut().expect("prompt slot implies open field");
                if !text.is_empty() {
                    field.prompt_parts.push(text);
                }
            }
            Slot::Option => {
                let label = collapse_ws(&self.text);
                self.text.clear();
                if label.is_empty() {
                    return Err(malformed(format!(
                        "option in field {} has no label text",
                        self.qualified_field()
                    )));
                }
                let target = self.option_target.take().unwrap_or(OptionTarget::NextField);
                if let Some(prior) = self
                    .field
                    .as_ref()
                    .and_then(|f| f.options.iter().find(|o| o.label == label))
                {
                    let _ = prior;
                    return Err(VxmlError::NondeterministicField {
                        field: self.qualified_field(),
                        label,
                    });
                }
                let field = self.field.as_mut().expect("option slot implies open field");
                field.options.push(OptionIr { label, target });
            }
            Slot::Field => {
                let field = self.field.take().expect("field slot implies open field");
                let form = self.form.as_mut().expect("field slot implies open form");
                form.fields.push(field);
            }
            Slot::Form => {
                let form = self.form.take().expect("form slot implies open form");
                if form.fields.is_empty() {
                    return Err(malformed(format!("form {:?} has no fields", form.id)));
                }
                self.forms.push(form);
            }
            Slot::Vxml | Slot::Target => {}
        }
        Ok(())
    }

    fn take_text(&mut self, content: &str) -> Result<(), VxmlError> {
        match self.stack.last() {
            Some(Slot::Prompt | Slot::Option) => {
                self.text.push_str(content);
                Ok(())
            }
            Some(Slot::Target) if content.trim().is_empty() => Ok(()),
            Some(Slot::Target) => Err(malformed("goto and exit carry no text".to_owned())),
            _ if content.trim().is_empty() => Ok(()),
            _ => Err(malformed(format!("stray text {:?}", content.trim()))),
        }
    }
}

fn parse_forms(doc: &str) -> Result<Vec<FormIr>, VxmlError> {
    let mut reader = Reader::from_str(doc);
    let mut walker = MarkupWalker::new();
    loop {
        let event = reader
            .read_event()
            .map_err(|e| malformed(e.to_string()))?;
        match event {
            Event::Start(start) => walker.open(&start)?,
            Event::Empty(start) => {
                walker.open(&start)?;
                walker.close()?;
            }
            Event::End(_) => walker.close()?,
            Event::Text(text) => {
                let content = text
                    .xml_content()
                    .map_err(|e| malformed(e.to_string()))?;
                walker.take_text(&content)?;
            }
            Event::CData(data) => {
                let bytes = data.into_inner();
                let content = std::str::from_utf8(&bytes)
                    .map_err(|_| malformed("CDATA section is not UTF-8".to_owned()))?;
                walker.take_text(content)?;
            }
            Event::GeneralRef(reference) => {
                let resolved = match reference
                    .resolve_char_ref()
                    .map_err(|e| malformed(e.to_string()))?
                {
                    Some(c) => c.to_string(),
                    None => match reference.as_ref() {
                        b"amp" => "&".to_owned(),
                        b"lt" => "<".to_owned(),
                        b"gt" => ">".to_owned(),
                        b"quot" => "\"".to_owned(),
                        b"apos" => "'".to_owned(),
                        other => {
                            return Err(malformed(format!(
                                "unknown entity &{};",
                                String::from_utf8_lossy(other)
                            )))
                        }
                    },
                };
                walker.take_text(&resolved)?;
            }
            Event::Decl(_) | Event::Comment(_) | Event::PI(_) | Event::DocType(_) => {}
            Event::Eof => break,
        }
    }
    if !walker.stack.is_empty() {
        return Err(malformed("unexpected end of markup".to_owned()));
    }
    if walker.forms.is_empty() {
        return Err(malformed("markup defines no forms".to_owned()));
    }
    Ok(walker.forms)
}

fn build_automaton(forms: Vec<FormIr>) -> Result<DialogAutomaton, VxmlError> {
    let state_id = |form: &str, field: &str| format!("{form}.{field}");
    let mut first_states = BTreeMap::new();
    for form in &forms {
        let first = form.fields.first().expect("parser rejects empty forms");
        first_states.insert(form.id.clone(), state_id(&form.id, &first.name));
    }
    let entry = first_states
        .get(&forms[0].id)
        .expect("first form has a first state")
        .clone();
    let mut automaton = DialogAutomaton::new(entry);
    for form in &forms {
        for (index, field) in form.fields.iter().enumerate() {
            let sid = state_id(&form.id, &field.name);
            automaton.add_state(sid.clone());
            if !field.prompt_parts.is_empty() {
                automaton.set_prompt(sid.clone(), field.prompt_parts.join(" "));
            }
            for option in &field.options {
                let to = match &option.target {
                    OptionTarget::NextField => match form.fields.get(index + 1) {
                        Some(next) => state_id(&form.id, &next.name),
                        None => END_STATE.to_owned(),
                    },
                    OptionTarget::Form(id) => first_states
                        .get(id)
                        .cloned()
                        .ok_or_else(|| VxmlError::DanglingGoto(id.clone()))?,
                    OptionTarget::Exit => END_STATE.to_owned(),
                };
                automaton.add_transition(sid.clone(), option.label.clone(), to)?;
            }
        }
    }
    Ok(automaton)
}

// ---------------------------------------------------------------------------
// Sequence generation
// ---------------------------------------------------------------------------

/// Coverage criterion for [`generate_sequences`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coverage {
    /// Every reachable transition is exercised by at least one sequence.
    #[default]
    Transition,
}

/// One generated walk: the user inputs in order, plus the state it ends on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputSequence {
    pub labels: Vec<String>,
    pub terminal: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationOutcome {
    pub sequences: Vec<InputSequence>,
    /// States no walk from the initial state can visit. Transitions leaving
    /// them stay uncovered; callers should surface this as a coverage gap.
    pub unreachable_states: BTreeSet<String>,
}

/// Builds input sequences that cover every reachable transition.
///
/// Each sequence starts at the initial state and uses any single transition
/// at most `loop_bound + 1` times, so cycles are traversed but never unrolled
/// past the bound. Sequences are extended to END or to a dead-end state
/// whenever the bound leaves such an extension possible. Output is fully
/// deterministic: ties are broken lexicographically by transition label.
pub fn generate_sequences(
    automaton: &DialogAutomaton,
    coverage: Coverage,
    loop_bound: usize,
) -> GenerationOutcome {
    match coverage {
        Coverage::Transition => {}
    }
    let cap = loop_bound.saturating_add(1);

    let mut reachable = BTreeSet::new();
    let mut frontier = vec![automaton.initial()];
    reachable.insert(automaton.initial());
    while let Some(state) = frontier.pop() {
        for (_, to) in automaton.transitions_from(state) {
            if reachable.insert(to) {
                frontier.push(to);
            }
        }
    }
    let unreachable_states = automaton
        .states()
        .filter(|s| !reachable.contains(s))
        .map(str::to_owned)
        .collect();

    let mut uncovered: BTreeSet<(&str, &str)> = automaton
        .transitions()
        .filter(|(from, _, _)| reachable.contains(from))
        .map(|(from, label, _)| (from, label))
        .collect();

    let mut sequences = Vec::new();
    while !uncovered.is_empty() {
        let mut labels = Vec::new();
        let mut uses: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        let mut cur = automaton.initial();
        loop {
            let goal = |state: &str| {
                automaton
                    .transitions_from(state)
                    .map(|(label, _)| label)
                    .find(|label| {
                        uncovered.contains(&(state, *label)) && admissible(&uses, cap, state, label)
                    })
            };
            // Borrow note: `goal` reads `uncovered` and `uses`; both are only
            // mutated after the search returns.
            let Some(path) = search(automaton, cur, &uses, cap, |s| match goal(s) {
                Some(label) => Hit::ViaEdge(label),
                None => Hit::Miss,
            }) else {
                break;
            };
            for (label, to) in path {
                *uses.entry((cur, label)).or_insert(0) += 1;
                uncovered.remove(&(cur, label));
                labels.push(label.to_owned());
                cur = to;
            }
        }
        if labels.is_empty() {
            // Every uncovered transition leaves a reachable state, so a fresh
            // sequence always makes progress; this guards against stalls all
            // the same.
            break;
        }
        if !automaton.is_terminal(cur) {
            let to_terminal = search(automaton, cur, &uses, cap, |s| {
                if automaton.is_terminal(s) {
                    Hit::AtState
                } else {
                    Hit::Miss
                }
            });
            if let Some(path) = to_terminal {
                for (label, to) in path {
                    *uses.entry((cur, label)).or_insert(0) += 1;
                    uncovered.remove(&(cur, label));
                    labels.push(label.to_owned());
                    cur = to;
                }
            }
            // No admissible path to a terminal state: the sequence ends here
            // rather than break the loop bound.
        }
        sequences.push(InputSequence {
            labels,
            terminal: cur.to_owned(),
        });
    }

    GenerationOutcome {
        sequences,
        unreachable_states,
    }
}

fn admissible(
    uses: &BTreeMap<(&str, &str), usize>,
    cap: usize,
    from: &str,
    label: &str,
) -> bool {
    uses.get(&(from, label)).copied().unwrap_or(0) < cap
}

enum Hit<'a> {
    Miss,
    /// The searched-for condition holds at the state itself.
    AtState,
    /// The state has this outgoing label as the searched-for edge.
    ViaEdge(&'a str),
}

/// Breadth-first search over admissible transitions from `start`.
///
/// Returns the `(label, target)` steps of a shortest path to the nearest goal,
/// including the goal edge for [`Hit::ViaEdge`]. Exploration follows label
/// order, so equal-length paths resolve the same way on every run.
fn search<'a>(
    automaton: &'a DialogAutomaton,
    start: &'a str,
    uses: &BTreeMap<(&'a str, &'a str), usize>,
    cap: usize,
    goal: impl Fn(&'a str) -> Hit<'a>,
) -> Option<Vec<(&'a str, &'a str)>> {
    let finish = |state: &'a str,
                  hit: Hit<'a>,
                  parents: &BTreeMap<&'a str, (&'a str, &'a str)>|
     -> Vec<(&'a str, &'a str)> {
        let mut path = Vec::new();
        if let Hit::ViaEdge(label) = hit {
            let to = automaton
                .target(state, label)
                .expect("goal edge exists in the automaton");
            path.push((label, to));
        }
        let mut cur = state;
        while cur != start {
            let (prev, label) = parents[cur];
            path.push((label, cur));
            cur = prev;
        }
        path.reverse();
        path
    };

    match goal(start) {
        Hit::AtState => return Some(Vec::new()),
        hit @ Hit::ViaEdge(_) => return Some(finish(start, hit, &BTreeMap::new())),
        Hit::Miss => {}
    }
    let mut visited = BTreeSet::new();
    visited.insert(start);
    let mut parents: BTreeMap<&str, (&str, &str)> = BTreeMap::new();
    let mut queue = VecDeque::new();
    queue.push_back(start);
    while let Some(state) = queue.pop_front() {
        for (label, to) in automaton.transitions_from(state) {
            if !admissible(uses, cap, state, label) || !visited.insert(to) {
                continue;
            }
            parents.insert(to, (state, label));
            match goal(to) {
                Hit::Miss => queue.push_back(to),
                hit => return Some(finish(to, hit, &parents)),
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Suite emission
// ---------------------------------------------------------------------------

/// Renders sequences as suite text loadable by the suite parser.
///
/// Each nonempty sequence becomes one case named `path-<k>`. Every input
/// becomes a `say:` step; when the state the input was given in carries a
/// prompt, an `expect_equivalent:` step for that prompt follows.
pub fn emit_suite(automaton: &DialogAutomaton, sequences: &[InputSequence]) -> String {
    let mut out = String::new();
    let mut emitted = 0usize;
    for sequence in sequences {
        if sequence.labels.is_empty() {
            continue;
        }
        emitted += 1;
        if emitted > 1 {
            out.push('\n');
        }
        writeln!(out, "case path-{emitted}").expect("string writes cannot fail");
        let mut state = Some(automaton.initial());
        for label in &sequence.labels {
            writeln!(out, "  say: {label}").expect("string writes cannot fail");
            if let Some(cur) = state {
                if let Some(prompt) = automaton.prompt(cur) {
                    writeln!(out, "  expect_equivalent: {prompt}")
                        .expect("string writes cannot fail");
                }
            }
            state = state.and_then(|cur| automaton.target(cur, label));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suite::{parse_suite, TestStep};
    use proptest::prelude::*;

    const FAREWELL_DOC: &str = r##"
        <vxml version="2.1">
          <form id="main">
            <field name="confirm">
              <prompt>Goodbye</prompt>
              <option><exit/>yes</option>
              <option><exit/>no</option>
            </field>
          </form>
        </vxml>
    "##;

    fn labels(outcome: &GenerationOutcome) -> Vec<Vec<String>> {
        outcome.sequences.iter().map(|s| s.labels.clone()).collect()
    }

    /// Replays a sequence and returns the `(from, label)` edges it exercises.
    fn replay(automaton: &DialogAutomaton, sequence: &InputSequence) -> Vec<(String, String)> {
        let mut cur = automaton.initial().to_owned();
        let mut edges = Vec::new();
        for label in &sequence.labels {
            let to = automaton
                .target(&cur, label)
                .unwrap_or_else(|| panic!("label {label:?} is invalid at state {cur:?}"))
                .to_owned();
            edges.push((cur.clone(), label.clone()));
            cur = to;
        }
        assert_eq!(cur, sequence.terminal, "recorded terminal disagrees");
        edges
    }

    fn assert_covers_reachable(automaton: &DialogAutomaton, outcome: &GenerationOutcome, bound: usize) {
        let mut reachable = std::collections::BTreeSet::new();
        let mut frontier = vec![automaton.initial()];
        reachable.insert(automaton.initial());
        while let Some(state) = frontier.pop() {
            for (_, to) in automaton.transitions_from(state) {
                if reachable.insert(to) {
                    frontier.push(to);
                }
            }
        }
        let expected: std::collections::BTreeSet<(String, String)> = automaton
            .transitions()
            .filter(|(from, _, _)| reachable.contains(from))
            .map(|(from, label, _)| (from.to_owned(), label.to_owned()))
            .collect();
        let mut exercised = std::collections::BTreeSet::new();
        for sequence in &outcome.sequences {
            let edges = replay(automaton, sequence);
            let mut counts = std::collections::BTreeMap::new();
            for edge in &edges {
                *counts.entry(edge.clone()).or_insert(0usize) += 1;
            }
            for (edge, count) in counts {
                assert!(
                    count <= bound + 1,
                    "edge {edge:?} used {count} times with bound {bound}"
                );
            }
            exercised.extend(edges);
        }
        assert_eq!(exercised, expected, "coverage gap or phantom edge");
        let unreachable: std::collections::BTreeSet<String> = automaton
            .states()
            .filter(|s| !reachable.contains(s))
            .map(str::to_owned)
            .collect();
        assert_eq!(outcome.unreachable_states, unreachable);
    }

    #[test]
    fn single_field_exit_parses_to_two_transitions() {
        let automaton = parse_vxml(FAREWELL_DOC).unwrap();
        assert_eq!(automaton.initial(), "main.confirm");
        assert!(automaton.contains_state(END_STATE));
        assert_eq!(automaton.prompt("main.confirm"), Some("Goodbye"));
        assert_eq!(automaton.target("main.confirm", "yes"), Some(END_STATE));
        assert_eq!(automaton.target("main.confirm", "no"), Some(END_STATE));
        assert_eq!(automaton.transition_count(), 2);
    }

    #[test]
    fn option_without_target_advances_to_next_field_then_end() {
        let doc = r#"
            <vxml>
              <form id="order">
                <field name="size">
                  <prompt>What size?</prompt>
                  <option>large</option>
                </field>
                <field name="drink">
                  <prompt>Anything to drink?</prompt>
                  <option>cola</option>
                </field>
              </form>
            </vxml>
        "#;
        let automaton = parse_vxml(doc).unwrap();
        assert_eq!(automaton.initial(), "order.size");
        assert_eq!(automaton.target("order.size", "large"), Some("order.drink"));
        assert_eq!(automaton.target("order.drink", "cola"), Some(END_STATE));
    }

    #[test]
    fn goto_jumps_to_first_field_of_named_form() {
        let doc = r##"
            <vxml>
              <form id="greet">
                <field name="hello">
                  <option><goto next="#farewell"/>hi</option>
                </field>
              </form>
              <form id="farewell">
                <field name="bye">
                  <option><exit/>done</option>
                </field>
              </form>
            </vxml>
        "##;
        let automaton = parse_vxml(doc).unwrap();
        assert_eq!(automaton.target("greet.hello", "hi"), Some("farewell.bye"));
        assert_eq!(automaton.target("farewell.bye", "done"), Some(END_STATE));
    }

    #[test]
    fn goto_to_unknown_form_is_rejected() {
        let doc = r##"
            <vxml>
              <form id="main">
                <field name="f">
                  <option><goto next="#nowhere"/>go</option>
                </field>
              </form>
            </vxml>
        "##;
        assert_eq!(
            parse_vxml(doc),
            Err(VxmlError::DanglingGoto("nowhere".to_owned()))
        );
    }

    #[test]
    fn duplicate_option_labels_are_nondeterministic() {
        let doc = r#"
            <vxml>
              <form id="main">
                <field name="pick">
                  <option>same</option>
                  <option><exit/>same</option>
                </field>
              </form>
            </vxml>
        "#;
        assert_eq!(
            parse_vxml(doc),
            Err(VxmlError::NondeterministicField {
                field: "main.pick".to_owned(),
                label: "same".to_owned(),
            })
        );
    }

    #[test]
    fn unknown_elements_are_unsupported() {
        let doc = r#"<vxml><menu id="m"/></vxml>"#;
        assert_eq!(
            parse_vxml(doc),
            Err(VxmlError::UnsupportedElement("menu".to_owned()))
        );
        let doc = r#"<vxml><form id="f"><block/></form></vxml>"#;
        assert_eq!(
            parse_vxml(doc),
            Err(VxmlError::UnsupportedElement("block".to_owned()))
        );
    }

    #[test]
    fn structural_mistakes_are_malformed() {
        let cases: &[&str] = &[
            "<vxml><form id=\"a\"/></vxml>",                       // form without fields
            "<vxml/>",                                             // no forms at all
            "<form id=\"a\"><field name=\"f\"/></form>",           // form outside vxml
            "<vxml><form id=\"a\"><field name=\"f\"><option><goto next=\"x\"/>go</option></field></form></vxml>",
            "<vxml><form id=\"a\"><field name=\"f\"><option><goto next=\"#b\"/><exit/>go</option></field></form></vxml>",
            "<vxml><form id=\"a\"><field name=\"f\"><option><exit/>   </option></field></form></vxml>",
            "<vxml><form id=\"a\"><field name=\"f\"/><field name=\"f\"/></form></vxml>",
            "<vxml><form id=\"a\"><field name=\"f\"/></form><form id=\"a\"><field name=\"g\"/></form></vxml>",
            "<vxml><form id=\"a\"><field name=\"f\">loose text</field></form></vxml>",
            "<vxml><form id=\"a\"><field name=\"f\"><prompt>hi<exit/></prompt></field></form></vxml>",
            "<vxml><form><field name=\"f\"/></form></vxml>",       // form without id
            "<vxml><form id=\"a\"><field/></form></vxml>",         // field without name
            "<vxml><form id=\"a\"><field name=\"f\">",             // truncated document
        ];
        for doc in cases {
            match parse_vxml(doc) {
                Err(VxmlError::MalformedMarkup(_)) => {}
                other => panic!("expected malformed markup for {doc:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn prompt_and_label_text_is_collapsed_and_unescaped() {
        let doc = r#"
            <vxml>
              <form id="m">
                <field name="f">
                  <prompt>
                    Fish   &amp; chips
                    tonight&#33;
                  </prompt>
                  <option><exit/>  fish &amp;
                      chips  </option>
                </field>
              </form>
            </vxml>
        "#;
        let automaton = parse_vxml(doc).unwrap();
        assert_eq!(automaton.prompt("m.f"), Some("Fish & chips tonight!"));
        assert_eq!(automaton.target("m.f", "fish & chips"), Some(END_STATE));
    }

    #[test]
    fn multiple_prompts_concatenate_in_order() {
        let doc = r#"
            <vxml>
              <form id="m">
                <field name="f">
                  <prompt>Welcome back.</prompt>
                  <prompt>What now?</prompt>
                  <option><exit/>quit</option>
                </field>
              </form>
            </vxml>
        "#;
        let automaton = parse_vxml(doc).unwrap();
        assert_eq!(automaton.prompt("m.f"), Some("Welcome back. What now?"));
    }

    #[test]
    fn direct_automaton_construction_enforces_determinism() {
        let mut automaton = DialogAutomaton::new("start");
        automaton.add_transition("start", "go", "mid").unwrap();
        assert_eq!(
            automaton.add_transition("start", "go", END_STATE),
            Err(VxmlError::NondeterministicField {
                field: "start".to_owned(),
                label: "go".to_owned(),
            })
        );
        automaton.add_state("island");
        assert!(automaton.contains_state("island"));
        assert!(automaton.is_terminal("island"));
        assert!(automaton.is_terminal(END_STATE));
        assert!(!automaton.is_terminal("start"));
    }

    #[test]
    fn two_exit_options_yield_one_sequence_each() {
        let automaton = parse_vxml(FAREWELL_DOC).unwrap();
        let outcome = generate_sequences(&automaton, Coverage::Transition, 1);
        assert_eq!(labels(&outcome), vec![vec!["no"], vec!["yes"]]);
        assert!(outcome.unreachable_states.is_empty());
        assert_covers_reachable(&automaton, &outcome, 1);
    }

    #[test]
    fn chained_forms_yield_one_covering_sequence() {
        let mut automaton = DialogAutomaton::new("s1");
        automaton.add_transition("s1", "a", "s2").unwrap();
        automaton.add_transition("s2", "b", END_STATE).unwrap();
        let outcome = generate_sequences(&automaton, Coverage::Transition, 1);
        assert_eq!(labels(&outcome), vec![vec!["a", "b"]]);
        assert_covers_reachable(&automaton, &outcome, 1);
    }

    #[test]
    fn self_loop_is_taken_then_escaped() {
        let mut automaton = DialogAutomaton::new("s");
        automaton.add_transition("s", "retry", "s").unwrap();
        automaton.add_transition("s", "ok", END_STATE).unwrap();
        for bound in [0usize, 1, 2] {
            let outcome = generate_sequences(&automaton, Coverage::Transition, bound);
            assert_eq!(
                labels(&outcome),
                vec![vec!["ok"], vec!["retry", "ok"]],
                "bound {bound}"
            );
            assert_covers_reachable(&automaton, &outcome, bound);
        }
    }

    #[test]
    fn sequences_end_at_terminal_states() {
        let mut automaton = DialogAutomaton::new("a");
        automaton.add_transition("a", "x", "b").unwrap();
        automaton.add_transition("b", "y", "a").unwrap();
        automaton.add_transition("a", "quit", END_STATE).unwrap();
        let outcome = generate_sequences(&automaton, Coverage::Transition, 1);
        for sequence in &outcome.sequences {
            assert!(automaton.is_terminal(&sequence.terminal));
        }
        assert_covers_reachable(&automaton, &outcome, 1);
    }

    #[test]
    fn cycle_without_exit_ends_where_the_bound_stops_it() {
        let mut automaton = DialogAutomaton::new("s");
        automaton.add_transition("s", "again", "s").unwrap();
        let outcome = generate_sequences(&automaton, Coverage::Transition, 0);
        assert_eq!(labels(&outcome), vec![vec!["again"]]);
        assert_eq!(outcome.sequences[0].terminal, "s");
    }

    #[test]
    fn unreachable_form_is_reported_not_fatal() {
        let doc = r#"
            <vxml>
              <form id="main">
                <field name="f">
                  <option><exit/>bye</option>
                </field>
              </form>
              <form id="orphan">
                <field name="g">
                  <option><exit/>never</option>
                </field>
              </form>
            </vxml>
        "#;
        let automaton = parse_vxml(doc).unwrap();
        let outcome = generate_sequences(&automaton, Coverage::Transition, 1);
        assert_eq!(labels(&outcome), vec![vec!["bye"]]);
        assert_eq!(
            outcome.unreachable_states,
            ["orphan.g".to_owned()].into_iter().collect()
        );
    }

    #[test]
    fn initial_without_transitions_is_a_coverage_gap() {
        let mut automaton = DialogAutomaton::new("stuck");
        automaton.add_transition("island", "go", END_STATE).unwrap();
        let outcome = generate_sequences(&automaton, Coverage::Transition, 1);
        assert!(outcome.sequences.is_empty());
        assert_eq!(
            outcome.unreachable_states,
            ["END".to_owned(), "island".to_owned()].into_iter().collect()
        );
    }

    #[test]
    fn generation_is_deterministic_across_reparses() {
        let first = {
            let automaton = parse_vxml(FAREWELL_DOC).unwrap();
            generate_sequences(&automaton, Coverage::Transition, 1)
        };
        let second = {
            let automaton = parse_vxml(FAREWELL_DOC).unwrap();
            generate_sequences(&automaton, Coverage::Transition, 1)
        };
        assert_eq!(first, second);
    }

    #[test]
    fn emitted_suite_pairs_inputs_with_source_prompts() {
        let automaton = parse_vxml(FAREWELL_DOC).unwrap();
        let outcome = generate_sequences(&automaton, Coverage::Transition, 1);
        let text = emit_suite(&automaton, &outcome.sequences);
        assert_eq!(
            text,
            "case path-1\n  say: no\n  expect_equivalent: Goodbye\n\n\
             case path-2\n  say: yes\n  expect_equivalent: Goodbye\n"
        );
    }

    #[test]
    fn emitted_suite_loads_and_alternates_steps() {
        let doc = r#"
            <vxml>
              <form id="order">
                <field name="size">
                  <prompt>What size?</prompt>
                  <option>large</option>
                </field>
                <field name="drink">
                  <option><exit/>nothing</option>
                </field>
              </form>
            </vxml>
        "#;
        let automaton = parse_vxml(doc).unwrap();
        let outcome = generate_sequences(&automaton, Coverage::Transition, 1);
        let text = emit_suite(&automaton, &outcome.sequences);
        let suite = parse_suite(&text).unwrap();
        assert_eq!(suite.cases.len(), 1);
        let case = &suite.cases[0];
        assert_eq!(case.name, "path-1");
        assert_eq!(case.steps.len(), 3);
        assert!(matches!(&case.steps[0], TestStep::Say { text } if text == "large"));
        assert!(matches!(
            &case.steps[1],
            TestStep::ExpectEquivalent { expected, threshold: None, message: None }
                if expected == "What size?"
        ));
        // The drink field has no prompt, so its input stands alone.
        assert!(matches!(&case.steps[2], TestStep::Say { text } if text == "nothing"));
    }

    #[test]
    fn empty_sequences_are_skipped_when_emitting() {
        let automaton = parse_vxml(FAREWELL_DOC).unwrap();
        let sequences = vec![
            InputSequence {
                labels: Vec::new(),
                terminal: "main.confirm".to_owned(),
            },
            InputSequence {
                labels: vec!["yes".to_owned()],
                terminal: END_STATE.to_owned(),
            },
        ];
        let text = emit_suite(&automaton, &sequences);
        assert_eq!(text, "case path-1\n  say: yes\n  expect_equivalent: Goodbye\n");
    }

    proptest! {
        #[test]
        fn random_automata_are_covered_within_bound(
            edges in proptest::collection::vec((0usize..4, 0usize..4, 0usize..3), 1..8),
            bound in 0usize..3,
        ) {
            let mut automaton = DialogAutomaton::new("s0");
            for (from, to, label) in edges {
                // Keep-first on duplicate labels mirrors deterministic input.
                let _ = automaton.add_transition(
                    format!("s{from}"),
                    ["a", "b", "c"][label],
                    format!("s{to}"),
                );
            }
            let outcome = generate_sequences(&automaton, Coverage::Transition, bound);
            assert_covers_reachable(&automaton, &outcome, bound);
            let again = generate_sequences(&automaton, Coverage::Transition, bound);
            prop_assert_eq!(outcome, again);
        }
    }
}
