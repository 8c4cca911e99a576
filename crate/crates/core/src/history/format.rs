//! Text formats for histories.
//!
//! Both formats start with an `adt <stack|queue|set|multiset>` header and
//! allow blank lines and `#` comments.
//!
//! *Operation* format, one operation per line:
//!
//! ```text
//! push <value> <call> <ret>          # also pop, enq, deq
//! popempty <call> <ret>              # stack only
//! add <value> <call> <ret> <ok|fail> # also remove
//! contains <value> <call> <ret> <true|false>
//! ```
//!
//! *Event* format, one call or return per line, paired by id:
//!
//! ```text
//! call <id> <kind> [<value>] <ts>
//! ret <id> <ts> [<result>]
//! ```
//!
//! Values are integers. Any other token is interned to a fresh integer above
//! the largest literal in the input.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use super::{validate, Adt, Event, History, Operation, Outcome, Timestamp, Value, Violation};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Ops,
    Events,
}

impl Format {
    /// Guesses the format from the first record after the header.
    pub fn detect(text: &str) -> Format {
        let first_record = records(text).nth(1);
        match first_record {
            Some((_, tokens)) if matches!(tokens[0], "call" | "ret") => Format::Events,
            _ => Format::Ops,
        }
    }
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ops" => Ok(Format::Ops),
            "events" => Ok(Format::Events),
            other => Err(format!("unknown format `{other}`")),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("missing `adt` header line")]
    MissingHeader,
    #[error("line {line}: duplicate operation id {id}")]
    DuplicateId { line: usize, id: u64 },
    #[error("line {line}: return for unknown operation id {id}")]
    UnmatchedReturn { line: usize, id: u64 },
    #[error("operation {id} has no return record")]
    MissingReturn { id: u64 },
    #[error("timestamp {0} occurs more than once")]
    DuplicateTimestamp(Timestamp),
    #[error("operation {id}: call {call} is not before return {ret}")]
    CallNotBeforeReturn { id: u64, call: Timestamp, ret: Timestamp },
    #[error("operation {id}: event not legal in a {adt} history")]
    IllegalEvent { id: u64, adt: Adt },
}

fn malformed(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Malformed { line, message: message.into() }
}

/// Non-empty, comment-stripped lines with their 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let body = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = body.split_whitespace().collect();
        (!tokens.is_empty()).then_some((i + 1, tokens))
    })
}

#[derive(Clone, Debug)]
enum RawValue {
    Num(Value),
    Sym(String),
}

fn raw_value(token: &str) -> RawValue {
    match token.parse::<Value>() {
        Ok(v) => RawValue::Num(v),
        Err(_) => RawValue::Sym(token.to_string()),
    }
}

#[derive(Clone, Copy, Debug)]
enum Kind {
    Push,
    Pop,
    PopEmpty,
    Add,
    Remove,
    Contains,
}

fn kind(token: &str) -> Option<Kind> {
    Some(match token {
        "push" | "enq" => Kind::Push,
        "pop" | "deq" => Kind::Pop,
        "popempty" => Kind::PopEmpty,
        "add" => Kind::Add,
        "remove" => Kind::Remove,
        "contains" => Kind::Contains,
        _ => return None,
    })
}

#[derive(Clone, Copy, Debug)]
enum Result_ {
    Outcome(Outcome),
    Answer(bool),
}

fn result_token(token: &str) -> Option<Result_> {
    Some(match token {
        "ok" => Result_::Outcome(Outcome::Ok),
        "fail" => Result_::Outcome(Outcome::Fail),
        "true" => Result_::Answer(true),
        "false" => Result_::Answer(false),
        _ => return None,
    })
}

struct RawOp {
    line: usize,
    id: u64,
    kind: Kind,
    value: Option<RawValue>,
    result: Option<Result_>,
    call: Timestamp,
    ret: Timestamp,
}

fn timestamp(line: usize, token: &str) -> Result<Timestamp, ParseError> {
    token
        .parse()
        .map_err(|_| malformed(line, format!("bad timestamp `{token}`")))
}

fn header<'a>(
    it: &mut impl Iterator<Item = (usize, Vec<&'a str>)>,
) -> Result<Adt, ParseError> {
    let (line, tokens) = it.next().ok_or(ParseError::MissingHeader)?;
    if tokens.len() != 2 || tokens[0] != "adt" {
        return Err(ParseError::MissingHeader);
    }
    tokens[1].parse().map_err(|e: String| malformed(line, e))
}

fn parse_ops(text: &str) -> Result<(Adt, Vec<RawOp>), ParseError> {
    let mut it = records(text);
    let adt = header(&mut it)?;
    let mut ops = Vec::new();
    for (line, tokens) in it {
        let k = kind(tokens[0]).ok_or_else(|| malformed(line, format!("unknown kind `{}`", tokens[0])))?;
        let id = ops.len() as u64;
        let op = match k {
            Kind::PopEmpty => {
                if tokens.len() != 3 {
                    return Err(malformed(line, "expected `popempty <call> <ret>`"));
                }
                RawOp {
                    line,
                    id,
                    kind: k,
                    value: None,
                    result: None,
                    call: timestamp(line, tokens[1])?,
                    ret: timestamp(line, tokens[2])?,
                }
            }
            Kind::Push | Kind::Pop => {
                if tokens.len() != 4 {
                    return Err(malformed(line, format!("expected `{} <value> <call> <ret>`", tokens[0])));
                }
                RawOp {
                    line,
                    id,
                    kind: k,
                    value: Some(raw_value(tokens[1])),
                    result: None,
                    call: timestamp(line, tokens[2])?,
                    ret: timestamp(line, tokens[3])?,
                }
            }
            Kind::Add | Kind::Remove | Kind::Contains => {
                if tokens.len() != 5 {
                    return Err(malformed(
                        line,
                        format!("expected `{} <value> <call> <ret> <result>`", tokens[0]),
                    ));
                }
                let result = result_token(tokens[4])
                    .ok_or_else(|| malformed(line, format!("bad result `{}`", tokens[4])))?;
                RawOp {
                    line,
                    id,
                    kind: k,
                    value: Some(raw_value(tokens[1])),
                    result: Some(result),
                    call: timestamp(line, tokens[2])?,
                    ret: timestamp(line, tokens[3])?,
                }
            }
        };
        ops.push(op);
    }
    Ok((adt, ops))
}

fn parse_events(text: &str) -> Result<(Adt, Vec<RawOp>), ParseError> {
    let mut it = records(text);
    let adt = header(&mut it)?;
    let mut ops: Vec<RawOp> = Vec::new();
    let mut by_id: HashMap<u64, usize> = HashMap::new();
    let mut returned: BTreeSet<u64> = BTreeSet::new();
    for (line, tokens) in it {
        let id_of = |tok: &str| -> Result<u64, ParseError> {
            tok.parse().map_err(|_| malformed(line, format!("bad id `{tok}`")))
        };
        match tokens[0] {
            "call" => {
                if tokens.len() < 4 || tokens.len() > 5 {
                    return Err(malformed(line, "expected `call <id> <kind> [<value>] <ts>`"));
                }
                let id = id_of(tokens[1])?;
                let k = kind(tokens[2])
                    .ok_or_else(|| malformed(line, format!("unknown kind `{}`", tokens[2])))?;
                let (value, ts) = if tokens.len() == 5 {
                    (Some(raw_value(tokens[3])), tokens[4])
                } else {
                    (None, tokens[3])
                };
                if by_id.contains_key(&id) {
                    return Err(ParseError::DuplicateId { line, id });
                }
                by_id.insert(id, ops.len());
                ops.push(RawOp {
                    line,
                    id,
                    kind: k,
                    value,
                    result: None,
                    call: timestamp(line, ts)?,
                    ret: 0,
                });
            }
            "ret" => {
                if tokens.len() < 3 || tokens.len() > 4 {
                    return Err(malformed(line, "expected `ret <id> <ts> [<result>]`"));
                }
                let id = id_of(tokens[1])?;
                let ts = timestamp(line, tokens[2])?;
                let idx = *by_id.get(&id).ok_or(ParseError::UnmatchedReturn { line, id })?;
                if !returned.insert(id) {
                    return Err(malformed(line, format!("second return for operation {id}")));
                }
                let op = &mut ops[idx];
                op.ret = ts;
                if let Some(tok) = tokens.get(3) {
                    match (op.kind, result_token(tok)) {
                        (Kind::Add | Kind::Remove | Kind::Contains, Some(r)) => op.result = Some(r),
                        (Kind::Pop, None) if op.value.is_none() => op.value = Some(raw_value(tok)),
                        _ => return Err(malformed(line, format!("unexpected result `{tok}`"))),
                    }
                }
            }
            other => return Err(malformed(line, format!("expected `call` or `ret`, found `{other}`"))),
        }
    }
    for op in &ops {
        if !returned.contains(&op.id) {
            return Err(ParseError::MissingReturn { id: op.id });
        }
    }
    Ok((adt, ops))
}

fn resolve(adt: Adt, raw: Vec<RawOp>) -> Result<(History, BTreeMap<String, Value>), ParseError> {
    let max_literal = raw
        .iter()
        .filter_map(|op| match op.value {
            Some(RawValue::Num(v)) => Some(v),
            _ => None,
        })
        .max()
        .unwrap_or(-1);
    let mut symbols: BTreeMap<String, Value> = BTreeMap::new();
    let mut next_symbol = max_literal.saturating_add(1);
    let mut operations = Vec::with_capacity(raw.len());
    for op in raw {
        let value = match op.value {
            Some(RawValue::Num(v)) => Some(v),
            Some(RawValue::Sym(s)) => Some(*symbols.entry(s).or_insert_with(|| {
                let v = next_symbol;
                next_symbol += 1;
                v
            })),
            None => None,
        };
        let need_value = |v: Option<Value>| {
            v.ok_or_else(|| malformed(op.line, "operation is missing its value"))
        };
        let event = match (op.kind, op.result) {
            (Kind::Push, _) => Event::Push(need_value(value)?),
            (Kind::Pop, _) => Event::Pop(need_value(value)?),
            (Kind::PopEmpty, _) => Event::PopEmpty,
            (Kind::Add, Some(Result_::Outcome(o))) => Event::Add(need_value(value)?, o),
            (Kind::Remove, Some(Result_::Outcome(o))) => Event::Remove(need_value(value)?, o),
            (Kind::Contains, Some(Result_::Answer(a))) => Event::Contains(need_value(value)?, a),
            (Kind::Add | Kind::Remove, _) => {
                return Err(malformed(op.line, "add/remove needs an `ok` or `fail` result"))
            }
            (Kind::Contains, _) => return Err(malformed(op.line, "contains needs a `true` or `false` result")),
        };
        operations.push(Operation::new(op.id, event, op.call, op.ret));
    }
    let history = History::new(adt, operations);
    // Stack/queue value-level findings are semantic; only structural ones reject the input.
    if let Some(v) = validate(&history).into_iter().find(Violation::is_structural) {
        return Err(match v {
            Violation::DuplicateTimestamp(t) => ParseError::DuplicateTimestamp(t),
            Violation::DuplicateId(id) => ParseError::DuplicateId { line: 0, id },
            Violation::CallNotBeforeReturn { id, call, ret } => {
                ParseError::CallNotBeforeReturn { id, call, ret }
            }
            Violation::IllegalEvent { id } => ParseError::IllegalEvent { id, adt },
            _ => unreachable!("non-structural violation"),
        });
    }
    Ok((history, symbols))
}

/// Parses and validates a history.
pub fn parse_history(text: &str, format: Format) -> Result<History, ParseError> {
    parse_history_with_symbols(text, format).map(|(h, _)| h)
}

/// Like [`parse_history`], also returning the interning table for
/// non-numeric value tokens.
pub fn parse_history_with_symbols(
    text: &str,
    format: Format,
) -> Result<(History, BTreeMap<String, Value>), ParseError> {
    let (adt, raw) = match format {
        Format::Ops => parse_ops(text)?,
        Format::Events => parse_events(text)?,
    };
    resolve(adt, raw)
}

fn kind_word(adt: Adt, event: &Event) -> &'static str {
    match (event, adt) {
        (Event::Push(_), Adt::Queue) => "enq",
        (Event::Pop(_), Adt::Queue) => "deq",
        (Event::Push(_), _) => "push",
        (Event::Pop(_), _) => "pop",
        (Event::PopEmpty, _) => "popempty",
        (Event::Add(..), _) => "add",
        (Event::Remove(..), _) => "remove",
        (Event::Contains(..), _) => "contains",
    }
}

fn result_word(event: &Event) -> Option<&'static str> {
    match event {
        Event::Add(_, o) | Event::Remove(_, o) => Some(match o {
            Outcome::Ok => "ok",
            Outcome::Fail => "fail",
        }),
        Event::Contains(_, a) => Some(if *a { "true" } else { "false" }),
        _ => None,
    }
}

/// Renders a history. Event format lists records in timestamp order.
pub fn serialize_history(h: &History, format: Format) -> String {
    let mut out = format!("adt {}\n", h.adt);
    match format {
        Format::Ops => {
            for op in &h.operations {
                let word = kind_word(h.adt, &op.event);
                match op.event.value() {
                    Some(v) => write!(out, "{word} {v} {} {}", op.call, op.ret),
                    None => write!(out, "{word} {} {}", op.call, op.ret),
                }
                .unwrap();
                if let Some(r) = result_word(&op.event) {
                    write!(out, " {r}").unwrap();
                }
                out.push('\n');
            }
        }
        Format::Events => {
            let mut lines: Vec<(Timestamp, String)> = Vec::with_capacity(2 * h.len());
            for op in &h.operations {
                let word = kind_word(h.adt, &op.event);
                let call = match op.event.value() {
                    Some(v) => format!("call {} {word} {v} {}", op.id, op.call),
                    None => format!("call {} {word} {}", op.id, op.call),
                };
                let ret = match result_word(&op.event) {
                    Some(r) => format!("ret {} {} {r}", op.id, op.ret),
                    None => format!("ret {} {}", op.id, op.ret),
                };
                lines.push((op.call, call));
                lines.push((op.ret, ret));
            }
            lines.sort_by_key(|(t, _)| *t);
            for (_, line) in lines {
                out.push_str(&line);
                out.push('\n');
            }
        }
    }
    out
}
