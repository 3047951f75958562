//! Tokenizer and recursive-descent parsers for the three text formats:
//! tree queries, graph queries, and fact files.
//!
//! All formats share one lexical layer. `#` starts a comment that runs to the
//! end of the line, whitespace is insignificant, and single quotes delimit
//! constants (no escapes). Anything else that is not punctuation is a bare word.

use std::fmt;

use thiserror::Error;

use super::database::{Database, Fact};
use super::graph::Atom;
use super::tree::RelTree;
use super::Symbol;

/// A syntax or schema error with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Word(String),
    Quoted(String),
    LParen,
    RParen,
    Comma,
    Semi,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) => write!(f, "`{w}`"),
            Tok::Quoted(q) => write!(f, "'{q}'"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Semi => f.write_str("`;`"),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

fn is_punct(c: char) -> bool {
    matches!(c, '(' | ')' | ',' | ';' | '\'' | '#')
}

pub(crate) fn tokenize(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);
    let bump = |c: char, line: &mut usize, column: &mut usize| {
        if c == '\n' {
            *line += 1;
            *column = 1;
        } else {
            *column += 1;
        }
    };
    while let Some(&c) = chars.peek() {
        let (l0, c0) = (line, column);
        if c.is_whitespace() {
            chars.next();
            bump(c, &mut line, &mut column);
            continue;
        }
        if c == '#' {
            while let Some(&c) = chars.peek() {
                if c == '\n' {
                    break;
                }
                chars.next();
                bump(c, &mut line, &mut column);
            }
            continue;
        }
        let tok = match c {
            '(' | ')' | ',' | ';' => {
                chars.next();
                bump(c, &mut line, &mut column);
                match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    _ => Tok::Semi,
                }
            }
            '\'' => {
                chars.next();
                bump(c, &mut line, &mut column);
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('\'') => {
                            bump('\'', &mut line, &mut column);
                            break;
                        }
                        Some('\n') | None => {
                            return Err(ParseError {
                                line: l0,
                                column: c0,
                                message: "unterminated quoted constant".into(),
                            })
                        }
                        Some(ch) => {
                            bump(ch, &mut line, &mut column);
                            s.push(ch);
                        }
                    }
                }
                if s.is_empty() {
                    return Err(ParseError {
                        line: l0,
                        column: c0,
                        message: "empty quoted constant".into(),
                    });
                }
                Tok::Quoted(s)
            }
            _ => {
                let mut s = String::new();
                while let Some(&ch) = chars.peek() {
                    if ch.is_whitespace() || is_punct(ch) {
                        break;
                    }
                    s.push(ch);
                    chars.next();
                    bump(ch, &mut line, &mut column);
                }
                Tok::Word(s)
            }
        };
        out.push(Spanned {
            tok,
            line: l0,
            column: c0,
        });
    }
    Ok(out)
}

pub(crate) struct Cursor {
    toks: Vec<Spanned>,
    pos: usize,
    end_line: usize,
    end_column: usize,
}

impl Cursor {
    pub(crate) fn new(text: &str) -> Result<Self, ParseError> {
        let toks = tokenize(text)?;
        let end_line = text.lines().count().max(1);
        let end_column = text.lines().last().map_or(0, |l| l.chars().count()) + 1;
        Ok(Cursor {
            toks,
            pos: 0,
            end_line,
            end_column,
        })
    }

    pub(crate) fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    pub(crate) fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    /// Error located at the current token (or end of input).
    pub(crate) fn error(&self, message: impl Into<String>) -> ParseError {
        let (line, column) = match self.toks.get(self.pos) {
            Some(s) => (s.line, s.column),
            None => (self.end_line, self.end_column),
        };
        ParseError {
            line,
            column,
            message: message.into(),
        }
    }

    /// Error located at the previously consumed token.
    pub(crate) fn error_prev(&self, message: impl Into<String>) -> ParseError {
        match self.pos.checked_sub(1).and_then(|p| self.toks.get(p)) {
            Some(s) => ParseError {
                line: s.line,
                column: s.column,
                message: message.into(),
            },
            None => self.error(message),
        }
    }

    pub(crate) fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(self.error(format!("expected {want}, found {t}"))),
            None => Err(self.error(format!("expected {want}, found end of input"))),
        }
    }
}

fn starts_upper(s: &str) -> bool {
    s.chars().next().is_some_and(|c| c.is_uppercase())
}

fn starts_lower(s: &str) -> bool {
    s.chars().next().is_some_and(|c| c.is_lowercase())
}

fn is_identifier(s: &str) -> bool {
    s.chars().all(|c| c.is_alphanumeric() || c == '_')
}

// ---------------------------------------------------------------------------
// Tree syntax

pub(crate) fn parse_rel_tree(text: &str) -> Result<RelTree, ParseError> {
    let mut cur = Cursor::new(text)?;
    if cur.at_end() {
        return Err(cur.error("empty input"));
    }
    let tree = tree_node(&mut cur)?;
    if !cur.at_end() {
        return Err(cur.error("trailing input after tree"));
    }
    Ok(tree)
}

fn tree_node(cur: &mut Cursor) -> Result<RelTree, ParseError> {
    match cur.next() {
        Some(Tok::Quoted(c)) => Ok(RelTree::Constant(c)),
        Some(Tok::Word(w)) if w == "_" || w == "⊥" => Ok(RelTree::Bottom),
        Some(Tok::Word(w)) => {
            if !starts_upper(&w) || !is_identifier(&w) {
                return Err(cur.error_prev(format!(
                    "`{w}` is not a relation name (uppercase-initial identifier), quoted constant, or `_`"
                )));
            }
            if cur.peek() == Some(&Tok::LParen) {
                cur.next();
                let mut children = vec![tree_node(cur)?];
                loop {
                    match cur.next() {
                        Some(Tok::Comma) => children.push(tree_node(cur)?),
                        Some(Tok::RParen) => break,
                        Some(t) => return Err(cur.error_prev(format!("expected `,` or `)`, found {t}"))),
                        None => return Err(cur.error("expected `,` or `)`, found end of input")),
                    }
                }
                Ok(RelTree::Node(w, children))
            } else {
                Ok(RelTree::Unary(w))
            }
        }
        Some(t) => Err(cur.error_prev(format!("unexpected {t}"))),
        None => Err(cur.error("unexpected end of input")),
    }
}

// ---------------------------------------------------------------------------
// Graph-query syntax

fn query_symbol(cur: &mut Cursor) -> Result<Symbol, ParseError> {
    match cur.next() {
        Some(Tok::Quoted(c)) => Ok(Symbol::Const(c)),
        Some(Tok::Word(w)) if starts_lower(&w) && is_identifier(&w) => Ok(Symbol::Var(w)),
        Some(Tok::Word(w)) => Err(cur.error_prev(format!(
            "`{w}` is neither a variable (lowercase-initial identifier) nor a quoted constant"
        ))),
        Some(t) => Err(cur.error_prev(format!("expected a variable or constant, found {t}"))),
        None => Err(cur.error("expected a variable or constant, found end of input")),
    }
}

/// Parses `Rel '(' args [';' args] ')'` where `item` parses a single argument.
/// Without `;` the first argument is the key. Returns (relation, key, rest).
pub(crate) fn atom_shape<T>(
    cur: &mut Cursor,
    relation_ok: fn(&str) -> bool,
    mut item: impl FnMut(&mut Cursor) -> Result<T, ParseError>,
) -> Result<(String, Vec<T>, Vec<T>), ParseError> {
    let rel = match cur.next() {
        Some(Tok::Word(w)) if relation_ok(&w) => w,
        Some(t) => return Err(cur.error_prev(format!("expected a relation name, found {t}"))),
        None => return Err(cur.error("expected a relation name, found end of input")),
    };
    cur.expect(Tok::LParen)?;
    let mut key = Vec::new();
    let mut rest = Vec::new();
    let mut seen_semi = false;
    // Argument list: items separated by `,` with at most one `;` splitting key from non-key.
    if cur.peek() == Some(&Tok::RParen) {
        return Err(cur.error("atom has no arguments"));
    }
    loop {
        if seen_semi && cur.peek() == Some(&Tok::RParen) {
            cur.next();
            break;
        }
        let v = item(cur)?;
        if seen_semi {
            rest.push(v);
        } else {
            key.push(v);
        }
        match cur.next() {
            Some(Tok::Comma) => {}
            Some(Tok::Semi) if !seen_semi => seen_semi = true,
            Some(Tok::RParen) => break,
            Some(t) => return Err(cur.error_prev(format!("expected `,`, `;` or `)`, found {t}"))),
            None => return Err(cur.error("unterminated atom")),
        }
    }
    if !seen_semi && key.len() > 1 {
        rest = key.split_off(1);
    }
    Ok((rel, key, rest))
}

fn query_relation_ok(w: &str) -> bool {
    starts_upper(w) && is_identifier(w)
}

pub(crate) fn parse_graph_atoms(text: &str) -> Result<Vec<Atom>, ParseError> {
    let mut cur = Cursor::new(text)?;
    if cur.at_end() {
        return Err(cur.error("empty query"));
    }
    let mut atoms = Vec::new();
    loop {
        let (relation, key, rest) = atom_shape(&mut cur, query_relation_ok, query_symbol)?;
        atoms.push(Atom { relation, key, rest });
        match cur.next() {
            None => break,
            Some(Tok::Comma) => continue,
            Some(t) => return Err(cur.error_prev(format!("expected `,` between atoms, found {t}"))),
        }
    }
    Ok(atoms)
}

// ---------------------------------------------------------------------------
// Fact files

fn fact_constant(cur: &mut Cursor) -> Result<String, ParseError> {
    match cur.next() {
        Some(Tok::Quoted(c)) | Some(Tok::Word(c)) => Ok(c),
        Some(t) => Err(cur.error_prev(format!("expected a constant, found {t}"))),
        None => Err(cur.error("expected a constant, found end of line")),
    }
}

fn fact_relation_ok(w: &str) -> bool {
    w.chars().next().is_some_and(|c| c.is_alphabetic()) && is_identifier(w)
}

pub(crate) fn parse_fact_line(line_text: &str, line_no: usize) -> Result<Option<Fact>, ParseError> {
    let relocate = |mut e: ParseError| {
        e.line = line_no;
        e
    };
    let mut cur = Cursor::new(line_text).map_err(relocate)?;
    if cur.at_end() {
        return Ok(None);
    }
    let (relation, key, rest) = atom_shape(&mut cur, fact_relation_ok, fact_constant).map_err(relocate)?;
    if !cur.at_end() {
        return Err(relocate(cur.error("trailing input after fact")));
    }
    Ok(Some(Fact::new(relation, key, rest)))
}

pub(crate) fn parse_database(text: &str) -> Result<Database, ParseError> {
    let mut facts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(f) = parse_fact_line(line, i + 1)? {
            facts.push((i + 1, f));
        }
    }
    Database::from_numbered_facts(facts)
}

/// Renders a constant for the fact-file format, quoting when needed.
pub(crate) fn fact_constant_text(c: &str) -> String {
    if !c.is_empty() && !c.chars().any(|ch| ch.is_whitespace() || is_punct(ch)) {
        c.to_string()
    } else {
        format!("'{c}'")
    }
}
