use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

/// Default grip force for `grasp('name')`, newtons.
pub const DEFAULT_GRASP_FORCE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraspTarget {
    Named(String),
    /// Nearest object, this force in newtons.
    Force(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionCommand {
    MoveTo(Vec3),
    Grasp(GraspTarget),
    Release,
    /// Degrees about the vertical axis.
    Rotate(f64),
    /// Perception request; no effect on the robot.
    Analyse,
}

impl ActionCommand {
    /// Canonical function name.
    pub fn name(&self) -> &'static str {
        match self {
            ActionCommand::MoveTo(_) => "move_to",
            ActionCommand::Grasp(_) => "grasp",
            ActionCommand::Release => "release",
            ActionCommand::Rotate(_) => "rotate",
            ActionCommand::Analyse => "analyse",
        }
    }

    pub fn is_actuating(&self) -> bool {
        !matches!(self, ActionCommand::Analyse)
    }
}

impl fmt::Display for ActionCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionCommand::MoveTo(p) => write!(f, "move_to([{}, {}, {}])", p.x, p.y, p.z),
            ActionCommand::Grasp(GraspTarget::Named(n)) => write!(f, "grasp('{n}')"),
            ActionCommand::Grasp(GraspTarget::Force(x)) => write!(f, "grasp({x})"),
            ActionCommand::Release => f.write_str("release()"),
            ActionCommand::Rotate(a) => write!(f, "rotate({a})"),
            ActionCommand::Analyse => f.write_str("analyse()"),
        }
    }
}

/// Columns are 1-based character positions in the action string.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("column {column}: {message}")]
    Syntax { column: usize, message: String },
    #[error("column {column}: function '{name}' is not recognized")]
    UnknownFunction { column: usize, name: String },
    #[error("column {column}: {name}: {message}")]
    BadArguments { column: usize, name: String, message: String },
}

impl DslError {
    pub fn column(&self) -> usize {
        match self {
            DslError::Syntax { column, .. }
            | DslError::UnknownFunction { column, .. }
            | DslError::BadArguments { column, .. } => *column,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Arg {
    Num(f64),
    List(Vec<f64>),
    Str(String),
}

impl Arg {
    fn kind(&self) -> &'static str {
        match self {
            Arg::Num(_) => "number",
            Arg::List(_) => "list",
            Arg::Str(_) => "string",
        }
    }
}

struct Cursor {
    chars: Vec<char>,
    pos: usize,
}

impl Cursor {
    fn new(src: &str) -> Self {
        Self { chars: src.chars().collect(), pos: 0 }
    }

    fn col(&self) -> usize {
        self.pos + 1
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, DslError> {
        Err(DslError::Syntax { column: self.col(), message: message.into() })
    }

    fn expect(&mut self, c: char) -> Result<(), DslError> {
        self.skip_ws();
        match self.peek() {
            Some(got) if got == c => {
                self.pos += 1;
                Ok(())
            }
            Some(got) => self.err(format!("expected '{c}', found '{got}'")),
            None => self.err(format!("expected '{c}', found end of input")),
        }
    }

    fn ident(&mut self) -> Result<String, DslError> {
        self.skip_ws();
        let start = self.pos;
        if !self.peek().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') {
            return self.err("expected a function name");
        }
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn number(&mut self) -> Result<f64, DslError> {
        self.skip_ws();
        let start = self.pos;
        if matches!(self.peek(), Some('+' | '-')) {
            self.pos += 1;
        }
        let int_start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        let mut digits = self.pos - int_start;
        if self.peek() == Some('.') {
            self.pos += 1;
            let frac = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
            digits += self.pos - frac;
        }
        if digits == 0 {
            self.pos = start;
            return self.err("expected a number");
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+' | '-')) {
                self.pos += 1;
            }
            let exp = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
            if self.pos == exp {
                self.pos = save;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse::<f64>().or_else(|_| {
            self.pos = start;
            self.err(format!("invalid number '{text}'"))
        })
    }

    fn string(&mut self) -> Result<String, DslError> {
        let quote = self.peek().expect("caller checked quote");
        self.pos += 1;
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c == quote {
                let s = self.chars[start..self.pos].iter().collect();
                self.pos += 1;
                return Ok(s);
            }
            self.pos += 1;
        }
        self.err("unterminated string")
    }

    fn arg(&mut self) -> Result<Arg, DslError> {
        self.skip_ws();
        match self.peek() {
            Some('[') => {
                self.pos += 1;
                let mut items = Vec::new();
                self.skip_ws();
                if self.peek() == Some(']') {
                    self.pos += 1;
                    return Ok(Arg::List(items));
                }
                loop {
                    items.push(self.number()?);
                    self.skip_ws();
                    match self.peek() {
                        Some(',') => self.pos += 1,
                        Some(']') => {
                            self.pos += 1;
                            return Ok(Arg::List(items));
                        }
                        _ => return self.err("expected ',' or ']'"),
                    }
                }
            }
            Some('\'' | '"') => self.string().map(Arg::Str),
            _ => self.number().map(Arg::Num),
        }
    }

    fn args(&mut self) -> Result<Vec<Arg>, DslError> {
        self.expect('(')?;
        let mut out = Vec::new();
        self.skip_ws();
        if self.peek() == Some(')') {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            out.push(self.arg()?);
            self.skip_ws();
            match self.peek() {
                Some(',') => self.pos += 1,
                Some(')') => {
                    self.pos += 1;
                    return Ok(out);
                }
                _ => return self.err("expected ',' or ')'"),
            }
        }
    }
}

fn finite3(v: &[f64]) -> Option<Vec3> {
    match v {
        [x, y, z] if x.is_finite() && y.is_finite() && z.is_finite() => Some(Vec3::new(*x, *y, *z)),
        _ => None,
    }
}

/// Parses one action string.
///
/// Accepted forms: `move_to([x, y, z])`, `grasp('name')`, `grasp(f)`,
/// `release()`, `rotate(f)` and `analyse()`. `moveTo` is an alias of
/// `move_to` that also takes three bare numbers; `analyze` is an alias of
/// `analyse`.
pub fn parse_action(text: &str) -> Result<ActionCommand, DslError> {
    let mut cur = Cursor::new(text);
    cur.skip_ws();
    let name_col = cur.col();
    let name = cur.ident()?;
    let args = cur.args()?;
    cur.skip_ws();
    if cur.peek().is_some() {
        return cur.err("unexpected trailing input");
    }

    let bad = |message: String| DslError::BadArguments { column: name_col, name: name.clone(), message };
    let kinds = || args.iter().map(Arg::kind).collect::<Vec<_>>().join(", ");

    match name.as_str() {
        "move_to" | "moveTo" => {
            let coords: Option<Vec3> = match args.as_slice() {
                [Arg::List(v)] => finite3(v),
                [Arg::Num(x), Arg::Num(y), Arg::Num(z)] if name == "moveTo" => finite3(&[*x, *y, *z]),
                _ => None,
            };
            coords.map(ActionCommand::MoveTo).ok_or_else(|| bad(format!("expected [x, y, z], got ({})", kinds())))
        }
        "grasp" => match args.as_slice() {
            [Arg::Str(s)] if !s.trim().is_empty() => Ok(ActionCommand::Grasp(GraspTarget::Named(s.trim().to_string()))),
            [Arg::Num(f)] if f.is_finite() && *f > 0.0 => Ok(ActionCommand::Grasp(GraspTarget::Force(*f))),
            [Arg::Num(f)] => Err(bad(format!("force must be positive, got {f}"))),
            _ => Err(bad(format!("expected an object name or a force, got ({})", kinds()))),
        },
        "release" if args.is_empty() => Ok(ActionCommand::Release),
        "release" => Err(bad(format!("takes no arguments, got ({})", kinds()))),
        "rotate" => match args.as_slice() {
            [Arg::Num(a)] if a.is_finite() => Ok(ActionCommand::Rotate(*a)),
            _ => Err(bad(format!("expected an angle in degrees, got ({})", kinds()))),
        },
        "analyse" | "analyze" if args.is_empty() => Ok(ActionCommand::Analyse),
        "analyse" | "analyze" => Err(bad(format!("takes no arguments, got ({})", kinds()))),
        _ => Err(DslError::UnknownFunction { column: name_col, name }),
    }
}
