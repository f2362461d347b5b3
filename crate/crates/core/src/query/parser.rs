//! Recursive-descent parser for the query language.
//!
//! ```text
//! query  := expr
//! expr   := name | op '(' args ')'
//! select := expr ',' name cmp uint
//! project:= expr ',' '[' name {',' name} ']'
//! join   := expr ',' expr ',' name cmp (name | uint)
//! other  := expr ',' expr
//! ```
//!
//! Operator keywords only act as operators when followed by `(`.

use std::fmt;

use super::ast::{JoinRhs, Query};
use crate::oracle::Comparator;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: Vec<String>,
    pub found: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at line {}, column {}: expected ", self.line, self.column)?;
        match self.expected.as_slice() {
            [one] => f.write_str(one)?,
            many => write!(f, "one of {}", many.join(", "))?,
        }
        write!(f, ", found {}", self.found)
    }
}

impl std::error::Error for ParseError {}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(u64),
    Cmp(Comparator),
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    text: String,
    line: usize,
    column: usize,
}

impl Token {
    fn describe(&self) -> String {
        match self.tok {
            Tok::Eof => "end of input".into(),
            _ => format!("{:?}", self.text),
        }
    }
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            match text.parse() {
                Ok(n) => Tok::Num(n),
                Err(_) => {
                    return Err(ParseError {
                        line,
                        column: col,
                        expected: vec!["unsigned 64-bit integer".into()],
                        found: format!("{text:?}"),
                    })
                }
            }
        } else if "=<>!".contains(c) {
            while i < chars.len() && "=<>!".contains(chars[i]) {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            match text.parse() {
                Ok(cmp) => Tok::Cmp(cmp),
                Err(_) => {
                    return Err(ParseError {
                        line,
                        column: col,
                        expected: Comparator::ALL.iter().map(|c| format!("'{c}'")).collect(),
                        found: format!("{text:?}"),
                    })
                }
            }
        } else {
            i += 1;
            match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '[' => Tok::LBrack,
                ']' => Tok::RBrack,
                ',' => Tok::Comma,
                _ => {
                    return Err(ParseError {
                        line,
                        column: col,
                        expected: vec!["name".into(), "integer".into(), "comparator".into(), "punctuation".into()],
                        found: format!("{:?}", c.to_string()),
                    })
                }
            }
        };
        out.push(Token { tok, text: chars[start..i].iter().collect(), line, column: col });
        col += i - start;
    }
    out.push(Token { tok: Tok::Eof, text: String::new(), line, column: col });
    Ok(out)
}

const OPERATORS: [&str; 8] = ["union", "intersect", "diff", "product", "divide", "select", "project", "join"];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        let t = self.peek();
        Err(ParseError {
            line: t.line,
            column: t.column,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: t.describe(),
        })
    }

    fn expect(&mut self, tok: Tok, shown: &str) -> Result<(), ParseError> {
        if self.peek().tok == tok {
            self.bump();
            Ok(())
        } else {
            self.fail(&[shown])
        }
    }

    fn name(&mut self, what: &str) -> Result<String, ParseError> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.fail(&[what]),
        }
    }

    fn comparator(&mut self) -> Result<Comparator, ParseError> {
        match self.peek().tok {
            Tok::Cmp(c) => {
                self.bump();
                Ok(c)
            }
            _ => self.fail(&["comparator"]),
        }
    }

    fn uint(&mut self) -> Result<u64, ParseError> {
        match self.peek().tok {
            Tok::Num(n) => {
                self.bump();
                Ok(n)
            }
            _ => self.fail(&["unsigned integer"]),
        }
    }

    fn expr(&mut self) -> Result<Query, ParseError> {
        let name = match &self.peek().tok {
            Tok::Ident(s) => s.clone(),
            _ => return self.fail(&["expression"]),
        };
        self.bump();
        let is_call = self.peek().tok == Tok::LParen && OPERATORS.contains(&name.as_str());
        if !is_call {
            return Ok(Query::Relation(name));
        }
        self.bump();
        let first = Box::new(self.expr()?);
        self.expect(Tok::Comma, "','")?;
        let q = match name.as_str() {
            "select" => {
                let field = self.name("field name")?;
                let cmp = self.comparator()?;
                let value = self.uint()?;
                Query::Select { input: first, field, cmp, value }
            }
            "project" => {
                self.expect(Tok::LBrack, "'['")?;
                let mut fields = vec![self.name("field name")?];
                while self.peek().tok == Tok::Comma {
                    self.bump();
                    fields.push(self.name("field name")?);
                }
                self.expect(Tok::RBrack, "']'")?;
                Query::Project { input: first, fields }
            }
            "join" => {
                let right = Box::new(self.expr()?);
                self.expect(Tok::Comma, "','")?;
                let field = self.name("field name")?;
                let cmp = self.comparator()?;
                let rhs = match &self.peek().tok {
                    Tok::Ident(s) => JoinRhs::Field(s.clone()),
                    Tok::Num(n) => JoinRhs::Const(*n),
                    _ => return self.fail(&["field name", "unsigned integer"]),
                };
                self.bump();
                Query::Join { left: first, right, field, cmp, rhs }
            }
            op => {
                let second = Box::new(self.expr()?);
                match op {
                    "union" => Query::Union(first, second),
                    "intersect" => Query::Intersect(first, second),
                    "diff" => Query::Diff(first, second),
                    "product" => Query::Product(first, second),
                    _ => Query::Divide(first, second),
                }
            }
        };
        self.expect(Tok::RParen, "')'")?;
        Ok(q)
    }
}

pub fn parse(text: &str) -> Result<Query, ParseError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let q = p.expr()?;
    if p.peek().tok != Tok::Eof {
        return p.fail(&["end of input"]);
    }
    Ok(q)
}
