//! Line-oriented `.net` format.
//!
//! ```text
//! # comment
//! mode a1
//! sq a1 Y 0.402
//! bs a2 a3 pi/2 sign=+ phase=second -> a5 a6
//! ps b1 pi
//! loss b1 0.9
//! out b1 b2 b3 b4
//! ```

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use crate::gaussian::{Axis, BsConvention, PhasePort, PortSign, MAX_SQUEEZING};

use super::{Element, NetworkSpec};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("unknown keyword `{0}`")]
    UnknownKeyword(String),
    #[error("undeclared label `{0}`")]
    UndeclaredLabel(String),
    #[error("label `{0}` was renamed by an earlier beam splitter")]
    ConsumedLabel(String),
    #[error("label `{0}` is already in use")]
    DuplicateLabel(String),
    #[error("{name} = {value} is out of range")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("{0}")]
    Syntax(String),
    #[error("no output declaration")]
    MissingOutput,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Pos {
    pub line: usize,
    pub column: usize,
}

impl Pos {
    fn err(self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            line: self.line,
            column: self.column,
            kind,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LabelState {
    Live(usize),
    Consumed,
}

/// Tracks which labels name which physical slot as the element list is read.
#[derive(Default)]
pub(crate) struct LabelTracker {
    labels: BTreeMap<String, LabelState>,
    all: BTreeMap<String, usize>,
    n_slots: usize,
}

impl LabelTracker {
    pub fn declare(&mut self, name: &str, pos: Pos) -> Result<usize, ParseError> {
        check_name(name, pos)?;
        if self.labels.contains_key(name) {
            return Err(pos.err(ParseErrorKind::DuplicateLabel(name.into())));
        }
        let slot = self.n_slots;
        self.n_slots += 1;
        self.labels.insert(name.into(), LabelState::Live(slot));
        self.all.insert(name.into(), slot);
        Ok(slot)
    }

    pub fn slot(&self, name: &str, pos: Pos) -> Result<usize, ParseError> {
        match self.labels.get(name) {
            Some(LabelState::Live(s)) => Ok(*s),
            Some(LabelState::Consumed) => Err(pos.err(ParseErrorKind::ConsumedLabel(name.into()))),
            None => Err(pos.err(ParseErrorKind::UndeclaredLabel(name.into()))),
        }
    }

    pub fn rename(&mut self, old: &str, new: &str, pos: Pos) -> Result<(), ParseError> {
        check_name(new, pos)?;
        let slot = self.slot(old, pos)?;
        if self.labels.contains_key(new) {
            return Err(pos.err(ParseErrorKind::DuplicateLabel(new.into())));
        }
        self.labels.insert(old.into(), LabelState::Consumed);
        self.labels.insert(new.into(), LabelState::Live(slot));
        self.all.insert(new.into(), slot);
        Ok(())
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn into_label_map(self) -> BTreeMap<String, usize> {
        self.all
    }
}

fn check_name(name: &str, pos: Pos) -> Result<(), ParseError> {
    let mut chars = name.chars();
    let ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
    if ok {
        Ok(())
    } else {
        Err(pos.err(ParseErrorKind::Syntax(format!("invalid label `{name}`"))))
    }
}

/// Angle written as a float or as `[-][k]pi[/m]`.
fn parse_angle(text: &str) -> Option<f64> {
    if let Ok(v) = text.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (num, den) = match body.split_once('/') {
        Some((n, d)) => (n, d.parse::<u32>().ok().filter(|&d| d > 0)?),
        None => (body, 1),
    };
    let k = match num.strip_suffix("pi")? {
        "" => 1,
        k => k.trim_end_matches('*').parse::<u32>().ok()?,
    };
    let v = f64::from(k) * PI / f64::from(den);
    Some(if neg { -v } else { v })
}

fn format_angle(v: f64) -> String {
    for den in [1u32, 2, 4] {
        for k in 1u32..=8 {
            let exact = f64::from(k) * PI / f64::from(den);
            let name = match (k, den) {
                (1, 1) => "pi".to_string(),
                (k, 1) => format!("{k}pi"),
                (1, d) => format!("pi/{d}"),
                (k, d) => format!("{k}pi/{d}"),
            };
            if v == exact {
                return name;
            }
            if v == -exact {
                return format!("-{name}");
            }
        }
    }
    format!("{v}")
}

struct Line<'a> {
    number: usize,
    tokens: Vec<(usize, &'a str)>,
}

impl<'a> Line<'a> {
    fn pos(&self, i: usize) -> Pos {
        Pos {
            line: self.number,
            column: self.tokens.get(i).map_or(1, |t| t.0),
        }
    }

    fn end_pos(&self) -> Pos {
        let column = self.tokens.last().map_or(1, |(c, t)| c + t.chars().count());
        Pos {
            line: self.number,
            column,
        }
    }

    fn token(&self, i: usize, what: &str) -> Result<&'a str, ParseError> {
        self.tokens
            .get(i)
            .map(|t| t.1)
            .ok_or_else(|| self.end_pos().err(ParseErrorKind::Syntax(format!("missing {what}"))))
    }

    fn number(&self, i: usize, what: &str) -> Result<f64, ParseError> {
        let t = self.token(i, what)?;
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.pos(i).err(ParseErrorKind::Syntax(format!(
                "expected a number for {what}, got `{t}`"
            )))),
        }
    }

    fn angle(&self, i: usize, what: &str) -> Result<f64, ParseError> {
        let t = self.token(i, what)?;
        parse_angle(t).ok_or_else(|| {
            self.pos(i).err(ParseErrorKind::Syntax(format!(
                "expected an angle for {what}, got `{t}`"
            )))
        })
    }

    fn expect_len(&self, n: usize) -> Result<(), ParseError> {
        if self.tokens.len() > n {
            return Err(self.pos(n).err(ParseErrorKind::Syntax(format!(
                "unexpected token `{}`",
                self.tokens[n].1
            ))));
        }
        Ok(())
    }
}

fn tokenize(number: usize, raw: &str) -> Line<'_> {
    let text = raw.split('#').next().unwrap_or("");
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                tokens.push((s, &text[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push((s, &text[s..]));
    }
    let tokens = tokens
        .into_iter()
        .map(|(byte, t)| (text[..byte].chars().count() + 1, t))
        .collect();
    Line { number, tokens }
}

fn range_check(pos: Pos, name: &'static str, value: f64, lo: f64, hi: f64) -> Result<f64, ParseError> {
    if value < lo || value > hi {
        Err(pos.err(ParseErrorKind::OutOfRange { name, value }))
    } else {
        Ok(value)
    }
}

pub fn parse_network(text: &str) -> Result<NetworkSpec, ParseError> {
    let mut tracker = LabelTracker::default();
    let mut modes = Vec::new();
    let mut elements = Vec::new();
    let mut outputs: Option<(Vec<String>, Line)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = tokenize(idx + 1, raw);
        let Some(&(_, keyword)) = line.tokens.first() else {
            continue;
        };
        if outputs.is_some() {
            return Err(line
                .pos(0)
                .err(ParseErrorKind::Syntax("`out` must be the last statement".into())));
        }
        match keyword {
            "mode" => {
                let name = line.token(1, "mode name")?;
                line.expect_len(2)?;
                tracker.declare(name, line.pos(1))?;
                modes.push(name.to_string());
            }
            "sq" => {
                let mode = line.token(1, "mode")?;
                tracker.slot(mode, line.pos(1))?;
                let axis_text = line.token(2, "axis")?;
                let axis: Axis = axis_text.parse().map_err(|_| {
                    line.pos(2).err(ParseErrorKind::Syntax(format!(
                        "axis must be X or Y, got `{axis_text}`"
                    )))
                })?;
                let r = range_check(line.pos(3), "r", line.number(3, "r")?, 0.0, MAX_SQUEEZING)?;
                line.expect_len(4)?;
                elements.push(Element::Squeezer {
                    mode: mode.into(),
                    axis,
                    r,
                });
            }
            "bs" => {
                let first = line.token(1, "first mode")?;
                let second = line.token(2, "second mode")?;
                let s1 = tracker.slot(first, line.pos(1))?;
                let s2 = tracker.slot(second, line.pos(2))?;
                if s1 == s2 {
                    return Err(line
                        .pos(2)
                        .err(ParseErrorKind::Syntax("beam splitter needs two distinct modes".into())));
                }
                let theta = line.angle(3, "theta")?;
                let mut convention = BsConvention::default();
                let mut renamed = None;
                let mut i = 4;
                while i < line.tokens.len() {
                    let tok = line.tokens[i].1;
                    if tok == "->" {
                        let o1 = line.token(i + 1, "first output label")?;
                        let o2 = line.token(i + 2, "second output label")?;
                        line.expect_len(i + 3)?;
                        if o1 == o2 {
                            return Err(line.pos(i + 2).err(ParseErrorKind::DuplicateLabel(o2.into())));
                        }
                        renamed = Some((i, [o1.to_string(), o2.to_string()]));
                        break;
                    }
                    match tok.split_once('=') {
                        Some(("sign", "+")) => convention.sign = PortSign::Plus,
                        Some(("sign", "-")) => convention.sign = PortSign::Minus,
                        Some(("phase", "first")) => convention.phase_port = PhasePort::First,
                        Some(("phase", "second")) => convention.phase_port = PhasePort::Second,
                        _ => {
                            return Err(line.pos(i).err(ParseErrorKind::Syntax(format!(
                                "unexpected beam-splitter option `{tok}`"
                            ))))
                        }
                    }
                    i += 1;
                }
                let outputs = match renamed {
                    Some((at, [o1, o2])) => {
                        tracker.rename(first, &o1, line.pos(at + 1))?;
                        tracker.rename(second, &o2, line.pos(at + 2))?;
                        Some([o1, o2])
                    }
                    None => None,
                };
                elements.push(Element::BeamSplitter {
                    first: first.into(),
                    second: second.into(),
                    theta,
                    convention,
                    outputs,
                });
            }
            "ps" => {
                let mode = line.token(1, "mode")?;
                tracker.slot(mode, line.pos(1))?;
                let phi = line.angle(2, "phi")?;
                line.expect_len(3)?;
                elements.push(Element::PhaseShift { mode: mode.into(), phi });
            }
            "loss" => {
                let mode = line.token(1, "mode")?;
                tracker.slot(mode, line.pos(1))?;
                let eta = range_check(line.pos(2), "eta", line.number(2, "eta")?, 0.0, 1.0)?;
                line.expect_len(3)?;
                elements.push(Element::Loss { mode: mode.into(), eta });
            }
            "out" => {
                if line.tokens.len() < 2 {
                    return Err(line
                        .end_pos()
                        .err(ParseErrorKind::Syntax("`out` needs at least one label".into())));
                }
                let mut seen = Vec::new();
                let mut names = Vec::new();
                for i in 1..line.tokens.len() {
                    let name = line.tokens[i].1;
                    let slot = tracker.slot(name, line.pos(i))?;
                    if seen.contains(&slot) {
                        return Err(line.pos(i).err(ParseErrorKind::DuplicateLabel(name.into())));
                    }
                    seen.push(slot);
                    names.push(name.to_string());
                }
                outputs = Some((names, line));
            }
            other => return Err(line.pos(0).err(ParseErrorKind::UnknownKeyword(other.into()))),
        }
    }

    let Some((outputs, _)) = outputs else {
        return Err(ParseError {
            line: text.lines().count().max(1),
            column: 1,
            kind: ParseErrorKind::MissingOutput,
        });
    };
    Ok(NetworkSpec {
        modes,
        elements,
        outputs,
    })
}

/// Checks label usage of a programmatically built spec. Positions refer to
/// the spec's serialized form.
pub(crate) fn track_labels(spec: &NetworkSpec) -> Result<(LabelTracker, Vec<Vec<usize>>), ParseError> {
    let mut tracker = LabelTracker::default();
    let mut line = 0;
    let mut next = || {
        line += 1;
        Pos { line, column: 1 }
    };
    for m in &spec.modes {
        tracker.declare(m, next())?;
    }
    let mut slots = Vec::with_capacity(spec.elements.len());
    for el in &spec.elements {
        let pos = next();
        match el {
            Element::Squeezer { mode, r, .. } => {
                range_check(pos, "r", *r, 0.0, MAX_SQUEEZING)?;
                slots.push(vec![tracker.slot(mode, pos)?]);
            }
            Element::PhaseShift { mode, phi } => {
                if !phi.is_finite() {
                    return Err(pos.err(ParseErrorKind::OutOfRange {
                        name: "phi",
                        value: *phi,
                    }));
                }
                slots.push(vec![tracker.slot(mode, pos)?]);
            }
            Element::Loss { mode, eta } => {
                range_check(pos, "eta", *eta, 0.0, 1.0)?;
                slots.push(vec![tracker.slot(mode, pos)?]);
            }
            Element::BeamSplitter {
                first,
                second,
                theta,
                outputs,
                ..
            } => {
                if !theta.is_finite() {
                    return Err(pos.err(ParseErrorKind::OutOfRange {
                        name: "theta",
                        value: *theta,
                    }));
                }
                let s1 = tracker.slot(first, pos)?;
                let s2 = tracker.slot(second, pos)?;
                if s1 == s2 {
                    return Err(pos.err(ParseErrorKind::Syntax("beam splitter needs two distinct modes".into())));
                }
                if let Some([o1, o2]) = outputs {
                    if o1 == o2 {
                        return Err(pos.err(ParseErrorKind::DuplicateLabel(o2.clone())));
                    }
                    tracker.rename(first, o1, pos)?;
                    tracker.rename(second, o2, pos)?;
                }
                slots.push(vec![s1, s2]);
            }
        }
    }
    let pos = next();
    if spec.outputs.is_empty() {
        return Err(pos.err(ParseErrorKind::MissingOutput));
    }
    let mut out_slots = Vec::new();
    for name in &spec.outputs {
        let s = tracker.slot(name, pos)?;
        if out_slots.contains(&s) {
            return Err(pos.err(ParseErrorKind::DuplicateLabel(name.clone())));
        }
        out_slots.push(s);
    }
    slots.push(out_slots);
    Ok((tracker, slots))
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in &self.modes {
            writeln!(f, "mode {m}")?;
        }
        for el in &self.elements {
            match el {
                Element::Squeezer { mode, axis, r } => writeln!(f, "sq {mode} {axis} {r}")?,
                Element::BeamSplitter {
                    first,
                    second,
                    theta,
                    convention,
                    outputs,
                } => {
                    let sign = match convention.sign {
                        PortSign::Plus => "+",
                        PortSign::Minus => "-",
                    };
                    let phase = match convention.phase_port {
                        PhasePort::First => "first",
                        PhasePort::Second => "second",
                    };
                    write!(
                        f,
                        "bs {first} {second} {} sign={sign} phase={phase}",
                        format_angle(*theta)
                    )?;
                    if let Some([o1, o2]) = outputs {
                        write!(f, " -> {o1} {o2}")?;
                    }
                    writeln!(f)?;
                }
                Element::PhaseShift { mode, phi } => writeln!(f, "ps {mode} {}", format_angle(*phi))?,
                Element::Loss { mode, eta } => writeln!(f, "loss {mode} {eta}")?,
            }
        }
        writeln!(f, "out {}", self.outputs.join(" "))
    }
}
