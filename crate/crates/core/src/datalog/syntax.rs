use std::iter::Peekable;
use std::str::CharIndices;

use super::{Atom, DatalogError, Program, Rule, Term};
use crate::instance::{RecId, Value};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Wildcard,
    Int(i64),
    Str(String),
    Id(String),
    LParen,
    RParen,
    Comma,
    Turnstile,
    Dot,
}

struct Lexer<'a> {
    src: &'a str,
    chars: Peekable<CharIndices<'a>>,
    line: usize,
    line_start: usize,
}

type Spanned = (Token, usize, usize);

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            chars: src.char_indices().peekable(),
            line: 1,
            line_start: 0,
        }
    }

    fn error(&self, offset: usize, message: impl Into<String>) -> DatalogError {
        DatalogError::Parse {
            line: self.line,
            column: offset - self.line_start + 1,
            message: message.into(),
        }
    }

    fn skip_trivia(&mut self) {
        while let Some(&(i, c)) = self.chars.peek() {
            if c == '\n' {
                self.line += 1;
                self.line_start = i + 1;
                self.chars.next();
            } else if c.is_whitespace() {
                self.chars.next();
            } else if c == '%' {
                while self.chars.peek().is_some_and(|&(_, c)| c != '\n') {
                    self.chars.next();
                }
            } else {
                break;
            }
        }
    }

    fn next_token(&mut self) -> Result<Option<Spanned>, DatalogError> {
        self.skip_trivia();
        let Some((start, c)) = self.chars.next() else {
            return Ok(None);
        };
        let (line, column) = (self.line, start - self.line_start + 1);
        let token = match c {
            '(' => Token::LParen,
            ')' => Token::RParen,
            ',' => Token::Comma,
            '.' => Token::Dot,
            ':' => match self.chars.next() {
                Some((_, '-')) => Token::Turnstile,
                _ => return Err(self.error(start, "expected `:-`")),
            },
            '"' => Token::Str(self.string(start)?),
            '<' => {
                let mut id = String::new();
                loop {
                    match self.chars.next() {
                        Some((_, '>')) => break,
                        Some((_, '\n')) | None => {
                            return Err(self.error(start, "unterminated identifier constant"))
                        }
                        Some((_, ch)) => id.push(ch),
                    }
                }
                Token::Id(id)
            }
            c if c == '-' || c.is_ascii_digit() => {
                let mut end = start + c.len_utf8();
                while let Some(&(i, d)) = self.chars.peek() {
                    if !d.is_ascii_digit() {
                        break;
                    }
                    end = i + 1;
                    self.chars.next();
                }
                let text = &self.src[start..end];
                Token::Int(
                    text.parse()
                        .map_err(|_| self.error(start, format!("invalid integer `{text}`")))?,
                )
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut end = start + c.len_utf8();
                while let Some(&(i, d)) = self.chars.peek() {
                    if !(d.is_alphanumeric() || d == '_' || d == '\'') {
                        break;
                    }
                    end = i + d.len_utf8();
                    self.chars.next();
                }
                match &self.src[start..end] {
                    "_" => Token::Wildcard,
                    name => Token::Ident(name.to_owned()),
                }
            }
            other => return Err(self.error(start, format!("unexpected character `{other}`"))),
        };
        Ok(Some((token, line, column)))
    }

    fn string(&mut self, start: usize) -> Result<String, DatalogError> {
        // Reuse JSON string syntax so printed constants parse back unchanged.
        let mut escaped = false;
        let end = loop {
            match self.chars.next() {
                Some((i, '"')) if !escaped => break i,
                Some((_, '\\')) if !escaped => escaped = true,
                Some((_, '\n')) | None => return Err(self.error(start, "unterminated string")),
                Some(_) => escaped = false,
            }
        };
        serde_json::from_str(&self.src[start..=end])
            .map_err(|e| self.error(start, format!("invalid string: {e}")))
    }
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    eof: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _, _)| t)
    }

    fn error(&self, message: impl Into<String>) -> DatalogError {
        let (line, column) = self
            .tokens
            .get(self.pos)
            .map(|&(_, l, c)| (l, c))
            .unwrap_or(self.eof);
        DatalogError::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<(), DatalogError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    fn atoms(&mut self) -> Result<Vec<Atom>, DatalogError> {
        let mut atoms = vec![self.atom()?];
        while self.peek() == Some(&Token::Comma) {
            self.pos += 1;
            atoms.push(self.atom()?);
        }
        Ok(atoms)
    }

    fn atom(&mut self) -> Result<Atom, DatalogError> {
        let relation = match self.peek() {
            Some(Token::Ident(name)) => name.clone(),
            _ => return Err(self.error("expected a relation name")),
        };
        self.pos += 1;
        self.expect(Token::LParen, "`(`")?;
        let mut args = vec![self.term()?];
        while self.peek() == Some(&Token::Comma) {
            self.pos += 1;
            args.push(self.term()?);
        }
        self.expect(Token::RParen, "`)` or `,`")?;
        Ok(Atom { relation, args })
    }

    fn term(&mut self) -> Result<Term, DatalogError> {
        let term = match self.peek() {
            Some(Token::Ident(v)) => Term::Var(v.clone()),
            Some(Token::Wildcard) => Term::Wildcard,
            Some(Token::Int(n)) => Term::Const(Value::Int(*n)),
            Some(Token::Str(s)) => Term::Const(Value::Str(s.clone())),
            Some(Token::Id(s)) => Term::Const(Value::Id(RecId(s.clone()))),
            _ => return Err(self.error("expected a variable, `_`, or a constant")),
        };
        self.pos += 1;
        Ok(term)
    }
}

/// Parses rules of the form `H1, ..., Hm :- B1, ..., Bn.`; `%` starts a
/// comment that runs to the end of the line.
pub fn parse_program(text: &str) -> Result<Program, DatalogError> {
    let mut lexer = Lexer::new(text);
    let mut tokens = Vec::new();
    while let Some(t) = lexer.next_token()? {
        tokens.push(t);
    }
    let eof = (lexer.line, text.len() - lexer.line_start + 1);
    let mut parser = Parser {
        tokens,
        pos: 0,
        eof,
    };
    let mut rules = Vec::new();
    while parser.peek().is_some() {
        let heads = parser.atoms()?;
        parser.expect(Token::Turnstile, "`:-`")?;
        let body = parser.atoms()?;
        parser.expect(Token::Dot, "`.` at the end of the rule")?;
        rules.push(Rule { heads, body });
    }
    if rules.is_empty() {
        return Err(parser.error("program has no rules"));
    }
    Ok(Program { rules })
}
