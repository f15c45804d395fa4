//! Concrete syntax for models (`.capi` files).
//!
//! ```text
//! file      := def+
//! def       := IDENT "=" session
//! session   := send | extchoice | "rec" RECVAR "." session | RECVAR | "end"
//!           |  "+{" send ("," send)* "}" | "(" session ")"
//! send      := "!" IDENT "(" arglist? ")" "." session
//! extchoice := recv | "&{" recv ("," recv)* "}"
//! recv      := "?" CODE "(" decllist? ")" assertion? "." session
//! arg       := IDENT | IDENT ":" type "(" IDENT ")"
//! decl      := IDENT ":" type
//! assertion := "<" IDENT "(" IDENT ("," IDENT)* ")" ">"
//! ```
//!
//! `#` starts a comment that runs to the end of the line.

use std::collections::BTreeMap;
use std::fmt;

use crate::ast::{
    check_well_formed, is_rec_var_name, Arg, AssertionCall, Decl, NodeId, RecvBranch, SendBranch, Session, TypeName,
    WellFormednessError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub offset: usize,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceSpan {
    pub start: Position,
    pub end: Position,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start.line, self.start.column)
    }
}

#[derive(Debug, Clone)]
pub struct ParsedModel {
    pub name: String,
    pub root: Session,
    pub spans: BTreeMap<NodeId, SourceSpan>,
}

impl PartialEq for ParsedModel {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.root == other.root
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub models: Vec<ParsedModel>,
}

impl ModelFile {
    pub fn names(&self) -> Vec<&str> {
        self.models.iter().map(|m| m.name.as_str()).collect()
    }

    /// Picks a definition by name, or the only one when `name` is `None`.
    pub fn select(&self, name: Option<&str>) -> Result<&ParsedModel, SelectError> {
        match name {
            Some(n) => self
                .models
                .iter()
                .find(|m| m.name == n)
                .ok_or_else(|| SelectError::NotFound(n.to_string(), self.names().join(", "))),
            None if self.models.len() == 1 => Ok(&self.models[0]),
            None => Err(SelectError::Ambiguous(self.names().join(", "))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SelectError {
    #[error("no model named `{0}` (defined: {1})")]
    NotFound(String, String),
    #[error("file defines several models ({0}); choose one with --model-name")]
    Ambiguous(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("{span}: syntax error: expected {}, found {found}", expected.join(" or "))]
    Syntax {
        span: SourceSpan,
        expected: Vec<String>,
        found: String,
    },
    #[error("{span}: model `{name}` is defined twice")]
    DuplicateDefinition { span: SourceSpan, name: String },
    #[error("model `{model}` is not well-formed: {}", render_wf(errors))]
    WellFormedness {
        model: String,
        errors: Vec<(WellFormednessError, Option<SourceSpan>)>,
    },
    #[error(transparent)]
    Select(#[from] SelectError),
}

fn render_wf(errors: &[(WellFormednessError, Option<SourceSpan>)]) -> String {
    errors
        .iter()
        .map(|(e, span)| match span {
            Some(s) => format!("{s}: {e}"),
            None => e.to_string(),
        })
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Punct(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Punct(p) => write!(f, "`{p}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: SourceSpan,
}

const PUNCTS: &[&str] = &["+{", "&{", "=", ".", ",", "(", ")", "{", "}", "<", ">", ":", "!", "?"];

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut pos = Position {
        offset: 0,
        line: 1,
        column: 1,
    };
    let advance = |pos: &mut Position, n: usize| {
        for &b in &bytes[pos.offset..pos.offset + n] {
            if b == b'\n' {
                pos.line += 1;
                pos.column = 1;
            } else if b & 0xC0 != 0x80 {
                pos.column += 1;
            }
        }
        pos.offset += n;
    };
    while pos.offset < bytes.len() {
        let rest = &text[pos.offset..];
        let c = rest.chars().next().unwrap();
        if c.is_whitespace() {
            advance(&mut pos, c.len_utf8());
            continue;
        }
        if c == '#' {
            let n = rest.find('\n').unwrap_or(rest.len());
            advance(&mut pos, n);
            continue;
        }
        let start = pos;
        if c.is_ascii_alphabetic() || c == '_' {
            let n = rest
                .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_'))
                .unwrap_or(rest.len());
            advance(&mut pos, n);
            tokens.push(Token {
                tok: Tok::Ident(rest[..n].to_string()),
                span: SourceSpan { start, end: pos },
            });
            continue;
        }
        if let Some(p) = PUNCTS.iter().find(|p| rest.starts_with(**p)) {
            advance(&mut pos, p.len());
            tokens.push(Token {
                tok: Tok::Punct(p),
                span: SourceSpan { start, end: pos },
            });
            continue;
        }
        let mut end = pos;
        advance(&mut end, c.len_utf8());
        return Err(ParseError::Syntax {
            span: SourceSpan { start, end },
            expected: vec!["a token".into()],
            found: format!("`{c}`"),
        });
    }
    tokens.push(Token {
        tok: Tok::Eof,
        span: SourceSpan { start: pos, end: pos },
    });
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    next_id: u32,
    spans: BTreeMap<NodeId, SourceSpan>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if !matches!(t.tok, Tok::Eof) {
            self.pos += 1;
        }
        t
    }

    fn prev_end(&self) -> Position {
        if self.pos == 0 {
            self.tokens[0].span.start
        } else {
            self.tokens[self.pos - 1].span.end
        }
    }

    fn error<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        let t = self.peek();
        Err(ParseError::Syntax {
            span: t.span,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: t.tok.to_string(),
        })
    }

    fn at(&self, p: &str) -> bool {
        matches!(&self.peek().tok, Tok::Punct(q) if *q == p)
    }

    fn eat(&mut self, p: &str) -> bool {
        if self.at(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, p: &'static str) -> Result<(), ParseError> {
        if self.eat(p) {
            Ok(())
        } else {
            self.error(&[&format!("`{p}`")])
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match &self.peek().tok {
            Tok::Ident(s) if s != "rec" && s != "end" => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.error(&[what]),
        }
    }

    fn alloc(&mut self) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        id
    }

    fn close(&mut self, id: NodeId, start: Position) {
        let end = self.prev_end();
        self.spans.insert(id, SourceSpan { start, end });
    }

    fn def(&mut self) -> Result<ParsedModel, ParseError> {
        self.next_id = 0;
        self.spans = BTreeMap::new();
        let name = self.ident("a model name")?;
        self.expect("=")?;
        let root = self.session()?;
        Ok(ParsedModel {
            name,
            root,
            spans: std::mem::take(&mut self.spans),
        })
    }

    fn session(&mut self) -> Result<Session, ParseError> {
        if self.eat("(") {
            let inner = self.session()?;
            self.expect(")")?;
            return Ok(inner);
        }
        let start = self.peek().span.start;
        let id = self.alloc();
        let session = match self.peek().tok.clone() {
            Tok::Punct("!") => Session::Internal(vec![self.send()?]),
            Tok::Punct("?") => Session::External(vec![self.recv()?]),
            Tok::Punct("+{") => {
                self.bump();
                let mut branches = vec![self.send()?];
                while self.eat(",") {
                    branches.push(self.send()?);
                }
                self.expect("}")?;
                Session::Internal(branches)
            }
            Tok::Punct("&{") => {
                self.bump();
                let mut branches = vec![self.recv()?];
                while self.eat(",") {
                    branches.push(self.recv()?);
                }
                self.expect("}")?;
                Session::External(branches)
            }
            Tok::Ident(kw) if kw == "end" => {
                self.bump();
                Session::End
            }
            Tok::Ident(kw) if kw == "rec" => {
                self.bump();
                let var = match &self.peek().tok {
                    Tok::Ident(x) if is_rec_var_name(x) => x.clone(),
                    _ => return self.error(&["a recursion variable"]),
                };
                self.bump();
                self.expect(".")?;
                Session::Rec {
                    var,
                    body: Box::new(self.session()?),
                }
            }
            Tok::Ident(x) if is_rec_var_name(&x) => {
                self.bump();
                Session::Var(x)
            }
            _ => {
                return self.error(&[
                    "`!`",
                    "`?`",
                    "`+{`",
                    "`&{`",
                    "`rec`",
                    "`end`",
                    "a recursion variable",
                    "`(`",
                ])
            }
        };
        self.close(id, start);
        Ok(session)
    }

    fn send(&mut self) -> Result<SendBranch, ParseError> {
        let start = self.peek().span.start;
        self.expect("!")?;
        let id = self.alloc();
        let op = self.ident("an operation id")?;
        self.expect("(")?;
        let mut args = Vec::new();
        if !self.at(")") {
            loop {
                args.push(self.arg()?);
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        self.close(id, start);
        self.expect(".")?;
        let cont = self.session()?;
        Ok(SendBranch { op, args, cont })
    }

    fn arg(&mut self) -> Result<Arg, ParseError> {
        let name = self.ident("an argument name")?;
        if !self.eat(":") {
            return Ok(Arg::Ref(name));
        }
        let ty = TypeName::from_ident(&self.ident("a type")?);
        self.expect("(")?;
        let generator = self.ident("a generator name")?;
        self.expect(")")?;
        Ok(Arg::Fresh { name, ty, generator })
    }

    fn recv(&mut self) -> Result<RecvBranch, ParseError> {
        let start = self.peek().span.start;
        self.expect("?")?;
        let id = self.alloc();
        let code = match &self.peek().tok {
            Tok::Ident(c) => parse_code(c),
            _ => None,
        };
        let Some(code) = code else {
            return self.error(&["a response code like `C200`"]);
        };
        self.bump();
        self.expect("(")?;
        let mut decls = Vec::new();
        if !self.at(")") {
            loop {
                let name = self.ident("a variable name")?;
                self.expect(":")?;
                let ty = TypeName::from_ident(&self.ident("a type")?);
                decls.push(Decl { name, ty });
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        let assertion = if self.eat("<") {
            let predicate = self.ident("an assertion name")?;
            self.expect("(")?;
            let mut args = vec![self.ident("a variable name")?];
            while self.eat(",") {
                args.push(self.ident("a variable name")?);
            }
            self.expect(")")?;
            self.expect(">")?;
            Some(AssertionCall { predicate, args })
        } else {
            None
        };
        self.close(id, start);
        self.expect(".")?;
        let cont = self.session()?;
        Ok(RecvBranch {
            code,
            decls,
            assertion,
            cont,
        })
    }
}

fn parse_code(s: &str) -> Option<u16> {
    let digits = s.strip_prefix('C')?;
    if digits.len() == 3 && digits.bytes().all(|b| b.is_ascii_digit()) {
        digits.parse().ok()
    } else {
        None
    }
}

/// Parses a model file holding one or more definitions. Each definition is
/// checked for well-formedness.
pub fn parse_file(text: &str) -> Result<ModelFile, ParseError> {
    let mut parser = Parser {
        tokens: lex(text)?,
        pos: 0,
        next_id: 0,
        spans: BTreeMap::new(),
    };
    let mut models: Vec<ParsedModel> = Vec::new();
    loop {
        let start = parser.peek().span;
        let model = parser.def()?;
        if models.iter().any(|m| m.name == model.name) {
            return Err(ParseError::DuplicateDefinition {
                span: start,
                name: model.name,
            });
        }
        let errors = check_well_formed(&model.root);
        if !errors.is_empty() {
            return Err(ParseError::WellFormedness {
                model: model.name.clone(),
                errors: errors
                    .into_iter()
                    .map(|e| {
                        let span = model.spans.get(&e.node).copied();
                        (e, span)
                    })
                    .collect(),
            });
        }
        models.push(model);
        if matches!(parser.peek().tok, Tok::Eof) {
            break;
        }
    }
    Ok(ModelFile { models })
}

/// Parses text containing exactly one model definition.
pub fn parse_model(text: &str) -> Result<ParsedModel, ParseError> {
    let file = parse_file(text)?;
    Ok(file.select(None)?.clone())
}

/// Renders a model back to concrete syntax.
pub fn render_model(model: &ParsedModel) -> String {
    let mut out = format!("{} = ", model.name);
    render_session(&model.root, 1, &mut out);
    out.push('\n');
    out
}

pub fn render_session_text(session: &Session) -> String {
    let mut out = String::new();
    render_session(session, 0, &mut out);
    out
}

fn indent(out: &mut String, level: usize) {
    out.push('\n');
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn render_session(session: &Session, level: usize, out: &mut String) {
    match session {
        Session::End => out.push_str("end"),
        Session::Var(x) => out.push_str(x),
        Session::Rec { var, body } => {
            out.push_str("rec ");
            out.push_str(var);
            out.push('.');
            render_session(body, level, out);
        }
        Session::Internal(branches) if branches.len() == 1 => render_send(&branches[0], level, out),
        Session::External(branches) if branches.len() == 1 => render_recv(&branches[0], level, out),
        Session::Internal(branches) => {
            out.push_str("+{");
            for (i, b) in branches.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                indent(out, level + 1);
                render_send(b, level + 2, out);
            }
            indent(out, level);
            out.push('}');
        }
        Session::External(branches) => {
            out.push_str("&{");
            for (i, b) in branches.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                indent(out, level + 1);
                render_recv(b, level + 2, out);
            }
            indent(out, level);
            out.push('}');
        }
    }
}

fn render_send(b: &SendBranch, level: usize, out: &mut String) {
    out.push('!');
    out.push_str(&b.op);
    out.push('(');
    let args: Vec<String> = b
        .args
        .iter()
        .map(|a| match a {
            Arg::Ref(x) => x.clone(),
            Arg::Fresh { name, ty, generator } => format!("{name}: {ty}({generator})"),
        })
        .collect();
    out.push_str(&args.join(", "));
    out.push_str(").");
    render_session(&b.cont, level, out);
}

fn render_recv(b: &RecvBranch, level: usize, out: &mut String) {
    out.push_str(&format!("?C{:03}(", b.code));
    let decls: Vec<String> = b.decls.iter().map(|d| format!("{}: {}", d.name, d.ty)).collect();
    out.push_str(&decls.join(", "));
    out.push(')');
    if let Some(call) = &b.assertion {
        out.push_str(&format!("<{}({})>", call.predicate, call.args.join(", ")));
    }
    out.push('.');
    if matches!(b.cont, Session::Internal(_) | Session::External(_)) {
        indent(out, level);
    }
    render_session(&b.cont, level, out);
}
