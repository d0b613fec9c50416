//! The `.mzx` experiment description language.
//!
//! One directive per line, `#` starts a comment:
//!
//! ```text
//! directive := "source" ("A" | "B") ["excited"]
//!            | "beamsplitter" | "mirrors"
//!            | "phase" ("A" | "B") value
//!            | "wwreadout" | "entangler"
//!            | "eraser" ("open" | "closed") ["eta" "=" (number | ident)]
//!            | "detect"
//! value     := number | ident ["=" number]
//! number    := ["-"] digits ["." digits] ["pi"] | "pi"
//! ```
//!
//! An identifier in value position is a named parameter. `phase B phi` leaves
//! `phi` free (to be bound by the caller or swept); `phase B phi=0.5pi` binds it
//! in the file. Path `A` maps to direction label `x`, `B` to `y`.
//!
//! Validation rules, checked after parsing:
//!
//! | rule | message |
//! |------|---------|
//! | a `detect` must end the file | `detect required as final stage` |
//! | no directive may follow `detect` | `detect must be the final stage` |
//! | `source` at most once, before any stage | `duplicate source` / `source must precede all stages` |
//! | `entangler`, `wwreadout`, `eraser` at most once each | `duplicate <keyword>` |
//! | `eraser` needs an earlier `entangler` | `eraser requires photon register` |
//! | `wwreadout` and `entangler` are exclusive | `wwreadout and entangler are mutually exclusive` |
//! | `excited` needs an `entangler` | `excited requires an entangler (atom register)` |
//! | a bound `eta` lies in (0, 1] | `eta must lie in (0, 1]` |
//! | a parameter is bound at most once | `parameter <name> bound twice` |
//! | at most one free parameter | `at most one free parameter allowed` |

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

use crate::components::{
    beam_splitter, eraser_kraus, mirror_pair, phase_shifter, which_way_entangler, ComponentError, Path, ATOM,
    DIRECTION, PHOTON,
};
use crate::experiment::{canonical_initial, ExperimentError, Pipeline, Stage};
use crate::hilbert::{SpaceSpec, SubsystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Lexical,
    Syntactic,
    Semantic,
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorCategory::Lexical => "lexical",
            ErrorCategory::Syntactic => "syntax",
            ErrorCategory::Semantic => "semantic",
        })
    }
}

/// Diagnostic with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {category} error: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub category: ErrorCategory,
}

impl ParseError {
    fn new(category: ErrorCategory, line: usize, column: usize, message: impl Into<String>) -> Self {
        Self { line, column, message: message.into(), category }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keyword {
    Source,
    BeamSplitter,
    Mirrors,
    Phase,
    WwReadout,
    Entangler,
    Eraser,
    Detect,
    Open,
    Closed,
    Excited,
}

impl Keyword {
    const ALL: [Keyword; 11] = [
        Keyword::Source,
        Keyword::BeamSplitter,
        Keyword::Mirrors,
        Keyword::Phase,
        Keyword::WwReadout,
        Keyword::Entangler,
        Keyword::Eraser,
        Keyword::Detect,
        Keyword::Open,
        Keyword::Closed,
        Keyword::Excited,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Source => "source",
            Keyword::BeamSplitter => "beamsplitter",
            Keyword::Mirrors => "mirrors",
            Keyword::Phase => "phase",
            Keyword::WwReadout => "wwreadout",
            Keyword::Entangler => "entangler",
            Keyword::Eraser => "eraser",
            Keyword::Detect => "detect",
            Keyword::Open => "open",
            Keyword::Closed => "closed",
            Keyword::Excited => "excited",
        }
    }

    fn lookup(word: &str) -> Option<Keyword> {
        Self::ALL.into_iter().find(|k| k.as_str() == word)
    }
}

/// Numeric literal; `text` is the source spelling, kept for pretty-printing.
#[derive(Debug, Clone, PartialEq)]
pub struct Number {
    pub value: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Keyword(Keyword),
    Ident(String),
    Number(Number),
    Equals,
    Newline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub column: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Splits source text into tokens. A `Newline` token terminates every line
/// that produced at least one other token.
pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let lines: Vec<&str> = src.split('\n').collect();
    for (li, line) in lines.iter().enumerate() {
        let line_no = li + 1;
        let chars: Vec<char> = line.chars().collect();
        let before = tokens.len();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            if c == '#' {
                break;
            }
            if c == ' ' || c == '\t' || c == '\r' {
                i += 1;
                continue;
            }
            let push = |tokens: &mut Vec<Token>, kind| tokens.push(Token { kind, line: line_no, column: col });
            if c == '=' {
                push(&mut tokens, TokenKind::Equals);
                i += 1;
            } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit() || *n == 'p')) {
                let (number, next) = lex_number(&chars, i, line_no)?;
                push(&mut tokens, TokenKind::Number(number));
                i = next;
            } else if is_ident_start(c) {
                let start = i;
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let kind = if word == "pi" {
                    TokenKind::Number(Number { value: PI, text: word })
                } else if let Some(k) = Keyword::lookup(&word) {
                    TokenKind::Keyword(k)
                } else {
                    TokenKind::Ident(word)
                };
                push(&mut tokens, kind);
            } else {
                return Err(ParseError::new(
                    ErrorCategory::Lexical,
                    line_no,
                    col,
                    format!("unexpected character `{c}`"),
                ));
            }
        }
        if tokens.len() > before && li + 1 < lines.len() {
            tokens.push(Token { kind: TokenKind::Newline, line: line_no, column: chars.len() + 1 });
        }
    }
    Ok(tokens)
}

fn lex_number(chars: &[char], start: usize, line: usize) -> Result<(Number, usize), ParseError> {
    let invalid = || ParseError::new(ErrorCategory::Lexical, line, start + 1, "invalid number");
    let mut i = start;
    if chars[i] == '-' {
        i += 1;
    }
    let digits_start = i;
    while i < chars.len() && chars[i].is_ascii_digit() {
        i += 1;
    }
    if i < chars.len() && chars[i] == '.' {
        i += 1;
        let frac_start = i;
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
        if i == frac_start {
            return Err(invalid());
        }
    }
    let mantissa: String = chars[start..i].iter().collect();
    let has_digits = i > digits_start;
    let mut value = if has_digits {
        mantissa.parse::<f64>().map_err(|_| invalid())?
    } else if mantissa == "-" {
        -1.0
    } else {
        return Err(invalid());
    };
    if chars[i..].starts_with(&['p', 'i']) {
        value *= PI;
        i += 2;
    } else if !has_digits {
        return Err(invalid());
    }
    if i < chars.len() && (is_ident_char(chars[i]) || chars[i] == '.') {
        return Err(invalid());
    }
    Ok((Number { value, text: chars[start..i].iter().collect() }, i))
}

/// Parses a lone numeric literal such as `0.5`, `2pi` or `-pi`.
pub fn parse_number(text: &str) -> Option<f64> {
    match tokenize(text.trim()).ok()?.as_slice() {
        [Token { kind: TokenKind::Number(n), .. }] => Some(n.value),
        _ => None,
    }
}

/// Phase or efficiency argument.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(Number),
    /// Named parameter, bound in the file when `binding` is present.
    Param { name: String, binding: Option<Number> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Directive {
    Source { path: Path, excited: bool },
    BeamSplitter,
    Mirrors,
    Phase { path: Path, value: Value },
    WwReadout,
    Entangler,
    Eraser { open: bool, eta: Option<Value> },
    Detect,
}

impl Directive {
    fn keyword(&self) -> Keyword {
        match self {
            Directive::Source { .. } => Keyword::Source,
            Directive::BeamSplitter => Keyword::BeamSplitter,
            Directive::Mirrors => Keyword::Mirrors,
            Directive::Phase { .. } => Keyword::Phase,
            Directive::WwReadout => Keyword::WwReadout,
            Directive::Entangler => Keyword::Entangler,
            Directive::Eraser { .. } => Keyword::Eraser,
            Directive::Detect => Keyword::Detect,
        }
    }

    fn values(&self) -> impl Iterator<Item = &Value> {
        let v = match self {
            Directive::Phase { value, .. } => Some(value),
            Directive::Eraser { eta, .. } => eta.as_ref(),
            _ => None,
        };
        v.into_iter()
    }
}

fn fmt_value(f: &mut fmt::Formatter<'_>, v: &Value) -> fmt::Result {
    match v {
        Value::Number(n) => f.write_str(&n.text),
        Value::Param { name, binding: None } => f.write_str(name),
        Value::Param { name, binding: Some(n) } => write!(f, "{name}={}", n.text),
    }
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword().as_str())?;
        match self {
            Directive::Source { path, excited } => {
                write!(f, " {path}")?;
                if *excited {
                    f.write_str(" excited")?;
                }
            }
            Directive::Phase { path, value } => {
                write!(f, " {path} ")?;
                fmt_value(f, value)?;
            }
            Directive::Eraser { open, eta } => {
                f.write_str(if *open { " open" } else { " closed" })?;
                if let Some(eta) = eta {
                    f.write_str(" eta=")?;
                    fmt_value(f, eta)?;
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spanned<T> {
    pub node: T,
    pub line: usize,
    pub column: usize,
}

/// A named parameter and its in-file binding, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Option<f64>,
    pub line: usize,
}

/// Parsed experiment file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentAst {
    pub directives: Vec<Spanned<Directive>>,
}

impl ExperimentAst {
    /// Same directives in the same order, ignoring source positions.
    pub fn structurally_eq(&self, other: &ExperimentAst) -> bool {
        self.directives.len() == other.directives.len()
            && self.directives.iter().zip(&other.directives).all(|(a, b)| a.node == b.node)
    }

    /// Canonical source text: one directive per line, no comments.
    pub fn pretty(&self) -> String {
        self.directives.iter().map(|d| format!("{}\n", d.node)).collect()
    }

    pub fn source(&self) -> (Path, bool) {
        self.directives
            .iter()
            .find_map(|d| match d.node {
                Directive::Source { path, excited } => Some((path, excited)),
                _ => None,
            })
            .unwrap_or((Path::A, false))
    }

    fn has(&self, kw: Keyword) -> bool {
        self.directives.iter().any(|d| d.node.keyword() == kw)
    }

    pub fn has_entangler(&self) -> bool {
        self.has(Keyword::Entangler)
    }

    pub fn has_eraser(&self) -> bool {
        self.has(Keyword::Eraser)
    }

    /// Distinct named parameters in order of first use.
    pub fn parameters(&self) -> Vec<Parameter> {
        let mut out: Vec<Parameter> = Vec::new();
        for d in &self.directives {
            for v in d.node.values() {
                if let Value::Param { name, binding } = v {
                    match out.iter_mut().find(|p| &p.name == name) {
                        Some(p) => {
                            if p.value.is_none() {
                                p.value = binding.as_ref().map(|n| n.value);
                            }
                        }
                        None => out.push(Parameter {
                            name: name.clone(),
                            value: binding.as_ref().map(|n| n.value),
                            line: d.line,
                        }),
                    }
                }
            }
        }
        out
    }

    /// Names of parameters with no in-file binding.
    pub fn free_parameters(&self) -> Vec<String> {
        self.parameters().into_iter().filter(|p| p.value.is_none()).map(|p| p.name).collect()
    }
}

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
}

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<&'t Token> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn at_line_end(&self) -> bool {
        matches!(self.peek(), None | Some(Token { kind: TokenKind::Newline, .. }))
    }

    /// Position used when a token is missing: just past the previous token.
    fn eol_position(&self) -> (usize, usize) {
        match self.peek() {
            Some(t) => (t.line, t.column),
            None => self.tokens.last().map(|t| (t.line, t.column + 1)).unwrap_or((1, 1)),
        }
    }

    fn syntax_here(&self, msg: impl Into<String>) -> ParseError {
        let (line, col) = self.eol_position();
        ParseError::new(ErrorCategory::Syntactic, line, col, msg)
    }

    fn expect_path(&mut self) -> Result<Path, ParseError> {
        if let Some(Token { kind: TokenKind::Ident(name), .. }) = self.peek() {
            let path = match name.as_str() {
                "A" => Some(Path::A),
                "B" => Some(Path::B),
                _ => None,
            };
            if let Some(p) = path {
                self.pos += 1;
                return Ok(p);
            }
        }
        Err(self.syntax_here("expected path `A` or `B`"))
    }

    fn expect_number(&mut self) -> Result<Number, ParseError> {
        match self.peek() {
            Some(Token { kind: TokenKind::Number(n), .. }) => {
                self.pos += 1;
                Ok(n.clone())
            }
            _ => Err(self.syntax_here("expected a number")),
        }
    }

    fn eat_equals(&mut self) -> bool {
        if matches!(self.peek(), Some(Token { kind: TokenKind::Equals, .. })) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn value(&mut self, allow_binding: bool) -> Result<Value, ParseError> {
        match self.peek() {
            Some(Token { kind: TokenKind::Number(n), .. }) => {
                self.pos += 1;
                Ok(Value::Number(n.clone()))
            }
            Some(Token { kind: TokenKind::Ident(name), .. }) => {
                self.pos += 1;
                let binding = if allow_binding && self.eat_equals() { Some(self.expect_number()?) } else { None };
                Ok(Value::Param { name: name.clone(), binding })
            }
            _ => Err(self.syntax_here("expected a number or parameter name")),
        }
    }

    fn directive(&mut self) -> Result<Spanned<Directive>, ParseError> {
        let tok = self.next().expect("caller checked for a token");
        let (line, column) = (tok.line, tok.column);
        let kw = match &tok.kind {
            TokenKind::Keyword(k) => *k,
            TokenKind::Ident(w) => {
                return Err(ParseError::new(ErrorCategory::Syntactic, line, column, format!("unknown directive `{w}`")))
            }
            _ => return Err(ParseError::new(ErrorCategory::Syntactic, line, column, "expected a directive")),
        };
        let node = match kw {
            Keyword::Source => {
                let path = self.expect_path()?;
                let excited = matches!(self.peek(), Some(Token { kind: TokenKind::Keyword(Keyword::Excited), .. }));
                if excited {
                    self.pos += 1;
                }
                Directive::Source { path, excited }
            }
            Keyword::BeamSplitter => Directive::BeamSplitter,
            Keyword::Mirrors => Directive::Mirrors,
            Keyword::Phase => {
                let path = self.expect_path()?;
                Directive::Phase { path, value: self.value(true)? }
            }
            Keyword::WwReadout => Directive::WwReadout,
            Keyword::Entangler => Directive::Entangler,
            Keyword::Eraser => {
                let open = match self.peek().map(|t| &t.kind) {
                    Some(TokenKind::Keyword(Keyword::Open)) => true,
                    Some(TokenKind::Keyword(Keyword::Closed)) => false,
                    _ => return Err(self.syntax_here("expected `open` or `closed`")),
                };
                self.pos += 1;
                let eta = match self.peek() {
                    Some(Token { kind: TokenKind::Ident(w), .. }) if w == "eta" => {
                        self.pos += 1;
                        if !self.eat_equals() {
                            return Err(self.syntax_here("expected `=` after `eta`"));
                        }
                        Some(self.value(false)?)
                    }
                    _ => None,
                };
                Directive::Eraser { open, eta }
            }
            Keyword::Detect => Directive::Detect,
            Keyword::Open | Keyword::Closed | Keyword::Excited => {
                return Err(ParseError::new(
                    ErrorCategory::Syntactic,
                    line,
                    column,
                    format!("`{}` is not a directive", kw.as_str()),
                ))
            }
        };
        if !self.at_line_end() {
            return Err(self.syntax_here("unexpected token after directive"));
        }
        self.pos += 1;
        Ok(Spanned { node, line, column })
    }
}

/// Syntax only: tokens to AST, stopping at the first error.
pub fn parse_syntax(tokens: &[Token]) -> Result<ExperimentAst, ParseError> {
    let mut parser = Parser { tokens, pos: 0 };
    let mut directives = Vec::new();
    while parser.peek().is_some() {
        directives.push(parser.directive()?);
    }
    Ok(ExperimentAst { directives })
}

/// Parses and validates.
pub fn parse(tokens: &[Token]) -> Result<ExperimentAst, ParseError> {
    let ast = parse_syntax(tokens)?;
    validate(&ast)?;
    Ok(ast)
}

/// Tokenizes, parses and validates `src`.
pub fn parse_str(src: &str) -> Result<ExperimentAst, ParseError> {
    parse(&tokenize(src)?)
}

/// Checks the rule table in the module documentation.
pub fn validate(ast: &ExperimentAst) -> Result<(), ParseError> {
    let sem = |d: &Spanned<Directive>, msg: String| ParseError::new(ErrorCategory::Semantic, d.line, d.column, msg);
    let mut seen_stage = false;
    let mut seen: Vec<Keyword> = Vec::new();
    let n = ast.directives.len();

    for (i, d) in ast.directives.iter().enumerate() {
        let kw = d.node.keyword();
        match &d.node {
            Directive::Source { excited, .. } => {
                if seen.contains(&Keyword::Source) {
                    return Err(sem(d, "duplicate source".into()));
                }
                if seen_stage {
                    return Err(sem(d, "source must precede all stages".into()));
                }
                if *excited && !ast.has_entangler() {
                    return Err(sem(d, "excited requires an entangler (atom register)".into()));
                }
            }
            Directive::Detect if i + 1 != n => return Err(sem(d, "detect must be the final stage".into())),
            Directive::Entangler | Directive::WwReadout | Directive::Eraser { .. } if seen.contains(&kw) => {
                return Err(sem(d, format!("duplicate {}", kw.as_str())));
            }
            _ => {}
        }
        match &d.node {
            Directive::Eraser { eta, .. } => {
                if !seen.contains(&Keyword::Entangler) {
                    return Err(sem(d, "eraser requires photon register".into()));
                }
                if let Some(Value::Number(n)) = eta {
                    if !(n.value > 0.0 && n.value <= 1.0) {
                        return Err(sem(d, "eta must lie in (0, 1]".into()));
                    }
                }
            }
            Directive::Entangler if seen.contains(&Keyword::WwReadout) => {
                return Err(sem(d, "wwreadout and entangler are mutually exclusive".into()));
            }
            Directive::WwReadout if seen.contains(&Keyword::Entangler) => {
                return Err(sem(d, "wwreadout and entangler are mutually exclusive".into()));
            }
            _ => {}
        }
        if kw != Keyword::Source {
            seen_stage = true;
        }
        seen.push(kw);
    }

    match ast.directives.last() {
        Some(d) if d.node == Directive::Detect => {}
        Some(d) => return Err(sem(d, "detect required as final stage".into())),
        None => return Err(ParseError::new(ErrorCategory::Semantic, 1, 1, "detect required as final stage")),
    }

    let mut bound: Vec<&str> = Vec::new();
    let mut free: Vec<&str> = Vec::new();
    for d in &ast.directives {
        for v in d.node.values() {
            if let Value::Param { name, binding } = v {
                if binding.is_some() {
                    if bound.contains(&name.as_str()) {
                        return Err(sem(d, format!("parameter {name} bound twice")));
                    }
                    bound.push(name);
                }
            }
        }
    }
    for d in &ast.directives {
        for v in d.node.values() {
            if let Value::Param { name, .. } = v {
                if !bound.contains(&name.as_str()) && !free.contains(&name.as_str()) {
                    if !free.is_empty() {
                        return Err(sem(d, "at most one free parameter allowed".into()));
                    }
                    free.push(name);
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error(transparent)]
    Invalid(#[from] ParseError),
    #[error("parameter `{0}` is not bound")]
    Unbound(String),
    #[error("no parameter named `{0}` in this experiment")]
    UnknownParameter(String),
    #[error("parameter `{0}` is already bound in the file")]
    AlreadyBound(String),
    #[error("line {line}: {source}")]
    Component { line: usize, source: ComponentError },
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}

fn resolve(value: &Value, params: &BTreeMap<String, f64>) -> Result<f64, CompileError> {
    match value {
        Value::Number(n) => Ok(n.value),
        Value::Param { name, .. } => params.get(name).copied().ok_or_else(|| CompileError::Unbound(name.clone())),
    }
}

/// Space the directives need: direction always, photon and atom with an
/// entangler, eraser with an eraser directive.
pub fn required_space(ast: &ExperimentAst) -> SpaceSpec {
    let mut subs = vec![SubsystemSpec::direction()];
    if ast.has_entangler() {
        subs.push(SubsystemSpec::photon());
        subs.push(SubsystemSpec::atom());
    }
    if ast.has_eraser() {
        subs.push(SubsystemSpec::eraser());
    }
    SpaceSpec::new(subs).expect("canonical subsystems are distinct")
}

/// Builds the pipeline, binding free parameters from `bindings`.
pub fn compile(ast: &ExperimentAst, bindings: &BTreeMap<String, f64>) -> Result<Pipeline, CompileError> {
    validate(ast)?;
    let mut params = BTreeMap::new();
    let declared = ast.parameters();
    for (name, value) in bindings {
        match declared.iter().find(|p| &p.name == name) {
            None => return Err(CompileError::UnknownParameter(name.clone())),
            Some(p) if p.value.is_some() => return Err(CompileError::AlreadyBound(name.clone())),
            Some(_) => {
                params.insert(name.clone(), *value);
            }
        }
    }
    for p in &declared {
        if let Some(v) = p.value {
            params.insert(p.name.clone(), v);
        }
    }

    let space = required_space(ast);
    let (source, _) = ast.source();
    let initial = canonical_initial(&space, source)?;
    let mut stages = Vec::new();
    for d in &ast.directives {
        let at_line = |source: ComponentError| CompileError::Component { line: d.line, source };
        match &d.node {
            Directive::Source { .. } | Directive::Eraser { open: false, .. } => {}
            Directive::BeamSplitter => stages.push(Stage::optical(beam_splitter())),
            Directive::Mirrors => stages.push(Stage::optical(mirror_pair())),
            Directive::Phase { path, value } => {
                let phi = resolve(value, &params)?;
                stages.push(Stage::optical(phase_shifter(phi, *path).map_err(at_line)?));
            }
            Directive::WwReadout => stages.push(Stage::which_way_readout()),
            Directive::Entangler => stages.push(Stage::unitary(which_way_entangler(), &[DIRECTION, PHOTON, ATOM])),
            Directive::Eraser { open: true, eta } => {
                let eta = eta.as_ref().map(|v| resolve(v, &params)).transpose()?.unwrap_or(1.0);
                stages.push(Stage::eraser(eraser_kraus(eta).map_err(at_line)?));
            }
            Directive::Detect => stages.push(Stage::detect()),
        }
    }
    Ok(Pipeline::new(space, initial, stages)?)
}
