//! Concrete text syntax for formulas: a recursive-descent parser and a
//! canonical pretty-printer, so learned models are storable, diffable and
//! human-readable.
//!
//! Grammar (whitespace and `#`-to-end-of-line comments are insignificant):
//!
//! ```text
//! formula  := "TRUE" | pred | "!" formula | binop | temporal
//! binop    := "(" formula ")" ("&" | "|") "{" num "," num "}" "(" formula ")"
//! temporal := ("G" | "F") "[" int "," int "]" "{" num ("," num)* "}" "(" formula ")"
//! pred     := "(" affine "<=" num ")"
//! affine   := term (("+" | "-") term)*
//! term     := num "*" "x" int          -- feature indices are 1-based
//! ```
//!
//! Canonical printing uses 6 significant digits for every scalar and prints
//! predicate terms in feature order, so `parse(print(f))` reproduces `f` up
//! to 1e-6 relative on scalars. A weight written as exactly `0` is accepted
//! and marks the parsed formula as sparsified (that is the persistence form
//! of pruned models); negative weights are rejected.

#[cfg(test)]
use crate::formula::ParamView;
use crate::formula::{Expr, Formula, Interval, Predicate};
use thiserror::Error;

/// Byte range into the parsed input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
}

impl SourceSpan {
    fn join(a: SourceSpan, b: SourceSpan) -> SourceSpan {
        SourceSpan {
            start: a.start.min(b.start),
            end: a.end.max(b.end),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("parse error at {}..{}: {message}", span.start, span.end)]
pub struct ParseError {
    pub span: SourceSpan,
    pub message: String,
}

impl ParseError {
    fn new(span: SourceSpan, message: impl Into<String>) -> Self {
        ParseError {
            span,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    True,
    Always,
    Eventually,
    Bang,
    Amp,
    Pipe,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Le,
    Plus,
    Minus,
    Star,
    Feature(usize),
    Number(f64),
    /// `pred` keyword, accepted only in structure templates.
    Placeholder,
    Eof,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    span: SourceSpan,
}

fn lex(input: &str) -> Result<Vec<Spanned>, ParseError> {
    let bytes = input.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                i += 1;
            }
            '#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            '!' => {
                out.push(Spanned {
                    tok: Tok::Bang,
                    span: SourceSpan { start, end: i + 1 },
                });
                i += 1;
            }
            '&' => {
                out.push(Spanned {
                    tok: Tok::Amp,
                    span: SourceSpan { start, end: i + 1 },
                });
                i += 1;
            }
            '|' => {
                out.push(Spanned {
                    tok: Tok::Pipe,
                    span: SourceSpan { start, end: i + 1 },
                });
                i += 1;
            }
            '(' => {
                out.push(Spanned {
                    tok: Tok::LParen,
                    span: SourceSpan { start, end: i + 1 },
                });
                i += 1;
            }
            ')' => {
                out.push(Spanned {
                    tok: Tok::RParen,
                    span: SourceSpan { start, end: i + 1 },
                });
                i += 1;
            }
            '[' => {
                out.push(Spanned {
                    tok: Tok::LBracket,
                    span: SourceSpan { start, end: i + 1 },
                });
                i += 1;
            }
            ']' => {
                out.push(Spanned {
                    tok: Tok::RBracket,
                    span: SourceSpan { start, end: i + 1 },
                });
                i += 1;
            }
            '{' => {
                out.push(Spanned {
                    tok: Tok::LBrace,
                    span: SourceSpan { start, end: i + 1 },
                });
                i += 1;
            }
            '}' => {
                out.push(Spanned {
                    tok: Tok::RBrace,
                    span: SourceSpan { start, end: i + 1 },
                });
                i += 1;
            }
            ',' => {
                out.push(Spanned {
                    tok: Tok::Comma,
                    span: SourceSpan { start, end: i + 1 },
                });
                i += 1;
            }
            '+' => {
                out.push(Spanned {
                    tok: Tok::Plus,
                    span: SourceSpan { start, end: i + 1 },
                });
                i += 1;
            }
            '-' => {
                out.push(Spanned {
                    tok: Tok::Minus,
                    span: SourceSpan { start, end: i + 1 },
                });
                i += 1;
            }
            '*' => {
                out.push(Spanned {
                    tok: Tok::Star,
                    span: SourceSpan { start, end: i + 1 },
                });
                i += 1;
            }
            '<' => {
                if i + 1 < bytes.len() && bytes[i + 1] == b'=' {
                    out.push(Spanned {
                        tok: Tok::Le,
                        span: SourceSpan { start, end: i + 2 },
                    });
                    i += 2;
                } else {
                    return Err(ParseError::new(
                        SourceSpan { start, end: i + 1 },
                        "expected '<=' after '<'",
                    ));
                }
            }
            'T' => {
                if input[i..].starts_with("TRUE") {
                    out.push(Spanned {
                        tok: Tok::True,
                        span: SourceSpan { start, end: i + 4 },
                    });
                    i += 4;
                } else {
                    return Err(ParseError::new(
                        SourceSpan { start, end: i + 1 },
                        "unknown token",
                    ));
                }
            }
            'G' => {
                out.push(Spanned {
                    tok: Tok::Always,
                    span: SourceSpan { start, end: i + 1 },
                });
                i += 1;
            }
            'F' => {
                out.push(Spanned {
                    tok: Tok::Eventually,
                    span: SourceSpan { start, end: i + 1 },
                });
                i += 1;
            }
            'p' => {
                if input[i..].starts_with("pred") {
                    out.push(Spanned {
                        tok: Tok::Placeholder,
                        span: SourceSpan { start, end: i + 4 },
                    });
                    i += 4;
                } else {
                    return Err(ParseError::new(
                        SourceSpan { start, end: i + 1 },
                        "unknown token",
                    ));
                }
            }
            'x' => {
                let mut j = i + 1;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j == i + 1 {
                    return Err(ParseError::new(
                        SourceSpan { start, end: i + 1 },
                        "expected feature index after 'x'",
                    ));
                }
                let idx: usize = input[i + 1..j].parse().map_err(|_| {
                    ParseError::new(SourceSpan { start, end: j }, "feature index out of range")
                })?;
                out.push(Spanned {
                    tok: Tok::Feature(idx),
                    span: SourceSpan { start, end: j },
                });
                i = j;
            }
            '0'..='9' => {
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'.' {
                    j += 1;
                    let frac_start = j;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    if j == frac_start {
                        return Err(ParseError::new(
                            SourceSpan { start, end: j },
                            "expected digits after decimal point",
                        ));
                    }
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    let exp_start = k;
                    while k < bytes.len() && bytes[k].is_ascii_digit() {
                        k += 1;
                    }
                    if k > exp_start {
                        j = k;
                    }
                }
                let value: f64 = input[start..j].parse().map_err(|_| {
                    ParseError::new(SourceSpan { start, end: j }, "malformed number")
                })?;
                out.push(Spanned {
                    tok: Tok::Number(value),
                    span: SourceSpan { start, end: j },
                });
                i = j;
            }
            _ => {
                return Err(ParseError::new(
                    SourceSpan {
                        start,
                        end: i + c.len_utf8(),
                    },
                    format!("unknown token '{c}'"),
                ));
            }
        }
    }
    out.push(Spanned {
        tok: Tok::Eof,
        span: SourceSpan {
            start: bytes.len(),
            end: bytes.len(),
        },
    });
    Ok(out)
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    dim: usize,
    saw_zero_weight: bool,
    /// Template mode: `pred` placeholders allowed, operator weight braces
    /// optional (defaulting to all ones).
    template: bool,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.tokens[self.pos]
    }

    fn peek2(&self) -> &Spanned {
        &self.tokens[(self.pos + 1).min(self.tokens.len() - 1)]
    }

    fn advance(&mut self) -> Spanned {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Spanned, ParseError> {
        let t = self.advance();
        if t.tok == tok {
            Ok(t)
        } else {
            Err(ParseError::new(t.span, format!("expected {what}")))
        }
    }

    /// Number with optional leading minus.
    fn num(&mut self) -> Result<(f64, SourceSpan), ParseError> {
        let mut negative = false;
        let start = self.peek().span;
        if self.peek().tok == Tok::Minus {
            self.advance();
            negative = true;
        }
        let t = self.advance();
        match t.tok {
            Tok::Number(v) => {
                let span = SourceSpan::join(start, t.span);
                Ok((if negative { -v } else { v }, span))
            }
            _ => Err(ParseError::new(t.span, "expected number")),
        }
    }

    fn uint(&mut self, what: &str) -> Result<(usize, SourceSpan), ParseError> {
        let t = self.advance();
        match t.tok {
            Tok::Number(v) if v.fract() == 0.0 && v >= 0.0 && v <= usize::MAX as f64 => {
                Ok((v as usize, t.span))
            }
            _ => Err(ParseError::new(
                t.span,
                format!("expected nonnegative integer {what}"),
            )),
        }
    }

    fn weight(&mut self) -> Result<f64, ParseError> {
        let (v, span) = self.num()?;
        if v < 0.0 {
            return Err(ParseError::new(span, format!("non-positive weight {v}")));
        }
        if v == 0.0 {
            self.saw_zero_weight = true;
        }
        Ok(v)
    }

    fn formula(&mut self) -> Result<Expr, ParseError> {
        match self.peek().tok {
            Tok::True => {
                self.advance();
                Ok(Expr::True)
            }
            Tok::Placeholder => {
                let t = self.advance();
                if self.template {
                    Ok(Expr::Pred(Predicate::new(vec![0.0; self.dim], 0.0)))
                } else {
                    Err(ParseError::new(
                        t.span,
                        "'pred' placeholder is only valid in structure templates",
                    ))
                }
            }
            Tok::Bang => {
                self.advance();
                Ok(Expr::Not(Box::new(self.formula()?)))
            }
            Tok::Always | Tok::Eventually => self.temporal(),
            Tok::LParen => {
                // After '(' a number (or unary minus) can only start a
                // predicate's affine expression; anything else is the left
                // operand of a binary connective.
                match self.peek2().tok {
                    Tok::Number(_) | Tok::Minus => self.pred(),
                    _ => self.binop(),
                }
            }
            _ => Err(ParseError::new(self.peek().span, "expected formula")),
        }
    }

    fn binop(&mut self) -> Result<Expr, ParseError> {
        self.expect(Tok::LParen, "'('")?;
        let left = self.formula()?;
        self.expect(Tok::RParen, "')'")?;
        let op = self.advance();
        let is_and = match op.tok {
            Tok::Amp => true,
            Tok::Pipe => false,
            _ => return Err(ParseError::new(op.span, "expected '&' or '|'")),
        };
        let (w1, w2) = if self.template && self.peek().tok != Tok::LBrace {
            (1.0, 1.0)
        } else {
            self.expect(Tok::LBrace, "'{'")?;
            let w1 = self.weight()?;
            self.expect(Tok::Comma, "','")?;
            let w2 = self.weight()?;
            self.expect(Tok::RBrace, "'}'")?;
            (w1, w2)
        };
        self.expect(Tok::LParen, "'('")?;
        let right = self.formula()?;
        self.expect(Tok::RParen, "')'")?;
        let node = crate::formula::BinaryNode {
            weights: [w1, w2],
            left: Box::new(left),
            right: Box::new(right),
        };
        Ok(if is_and {
            Expr::And(node)
        } else {
            Expr::Or(node)
        })
    }

    fn temporal(&mut self) -> Result<Expr, ParseError> {
        let head = self.advance();
        let is_always = head.tok == Tok::Always;
        let lb = self.expect(Tok::LBracket, "'['")?;
        let (k1, _) = self.uint("interval bound")?;
        self.expect(Tok::Comma, "','")?;
        let (k2, _) = self.uint("interval bound")?;
        let rb = self.expect(Tok::RBracket, "']'")?;
        let interval_span = SourceSpan::join(lb.span, rb.span);
        let interval = Interval::new(k1, k2).map_err(|_| {
            ParseError::new(interval_span, format!("interval k1 > k2: [{k1},{k2}]"))
        })?;
        let weights = if self.template && self.peek().tok != Tok::LBrace {
            vec![1.0; interval.len()]
        } else {
            let lbrace = self.expect(Tok::LBrace, "'{'")?;
            let mut weights = vec![self.weight()?];
            while self.peek().tok == Tok::Comma {
                self.advance();
                weights.push(self.weight()?);
            }
            let rbrace = self.expect(Tok::RBrace, "'}'")?;
            if weights.len() != interval.len() {
                return Err(ParseError::new(
                    SourceSpan::join(lbrace.span, rbrace.span),
                    format!(
                        "weight length {} != interval length {}",
                        weights.len(),
                        interval.len()
                    ),
                ));
            }
            weights
        };
        self.expect(Tok::LParen, "'('")?;
        let child = self.formula()?;
        self.expect(Tok::RParen, "')'")?;
        let node = crate::formula::TemporalNode {
            interval,
            weights,
            child: Box::new(child),
        };
        Ok(if is_always {
            Expr::Always(node)
        } else {
            Expr::Eventually(node)
        })
    }

    fn pred(&mut self) -> Result<Expr, ParseError> {
        self.expect(Tok::LParen, "'('")?;
        let mut coeffs = vec![0.0; self.dim];
        let mut seen = vec![false; self.dim];
        loop {
            let sign = match self.peek().tok {
                Tok::Plus => {
                    self.advance();
                    1.0
                }
                Tok::Minus if seen.iter().any(|s| *s) => {
                    // A separator between terms; a leading minus belongs to
                    // the first coefficient and is consumed by num().
                    self.advance();
                    -1.0
                }
                _ => 1.0,
            };
            let (value, _) = self.num()?;
            self.expect(Tok::Star, "'*'")?;
            let t = self.advance();
            let idx = match t.tok {
                Tok::Feature(i) => i,
                _ => return Err(ParseError::new(t.span, "expected feature 'x<i>'")),
            };
            if idx == 0 {
                return Err(ParseError::new(
                    t.span,
                    "feature indices are 1-based; x0 is invalid",
                ));
            }
            if idx > self.dim {
                return Err(ParseError::new(
                    t.span,
                    format!("feature index {idx} exceeds signal dimension {}", self.dim),
                ));
            }
            if seen[idx - 1] {
                return Err(ParseError::new(t.span, format!("duplicate feature x{idx}")));
            }
            seen[idx - 1] = true;
            coeffs[idx - 1] = sign * value;
            match self.peek().tok {
                Tok::Plus | Tok::Minus => continue,
                _ => break,
            }
        }
        self.expect(Tok::Le, "'<='")?;
        let (offset, _) = self.num()?;
        self.expect(Tok::RParen, "')'")?;
        Ok(Expr::Pred(Predicate::new(coeffs, offset)))
    }
}

fn parse_inner(text: &str, dim: usize, template: bool) -> Result<Formula, ParseError> {
    let tokens = lex(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        dim,
        saw_zero_weight: false,
        template,
    };
    let root = parser.formula()?;
    let trailing = parser.peek().clone();
    if trailing.tok != Tok::Eof {
        return Err(ParseError::new(trailing.span, "unexpected trailing input"));
    }
    Ok(Formula::from_parts(root, parser.saw_zero_weight))
}

/// Parses `text` as a formula over an `dim`-dimensional signal.
pub fn parse(text: &str, dim: usize) -> Result<Formula, ParseError> {
    parse_inner(text, dim, false)
}

/// Parses a structure template: the formula grammar extended with the `pred`
/// keyword (a fresh zero predicate of the given dimension, to be trained)
/// and optional operator weight braces, e.g. `G[0,15](pred)`. Templates are
/// a front-end convenience, not part of the model persistence format.
pub fn parse_template(text: &str, dim: usize) -> Result<Formula, ParseError> {
    parse_inner(text, dim, true)
}

/// Largest feature index mentioned in `text`, for callers that need to infer
/// the signal dimension before parsing.
pub fn infer_dim(text: &str) -> Result<usize, ParseError> {
    let tokens = lex(text)?;
    Ok(tokens
        .iter()
        .filter_map(|t| match t.tok {
            Tok::Feature(i) => Some(i),
            _ => None,
        })
        .max()
        .unwrap_or(1))
}

/// Formats with 6 significant digits; positional where reasonable, scientific
/// for extreme magnitudes. Scalars whose 6-digit form would lose more than
/// 5e-7 relative fall back to the exact shortest representation, so parsing
/// a printed formula always recovers scalars within 1e-6 relative (6 digits
/// alone cannot promise that: a mantissa near 1.0 rounds with up to 5e-6
/// relative error).
fn fmt_scalar(x: f64) -> String {
    if x == 0.0 {
        return "0.00000".to_string();
    }
    let sci = format!("{:.5e}", x);
    let (_, exp_str) = sci.split_once('e').expect("exponential format");
    let exp: i32 = exp_str.parse().expect("exponent parses");
    let six = if (-4..=5).contains(&exp) {
        let places = (5 - exp).max(0) as usize;
        format!("{:.*}", places, x)
    } else {
        sci
    };
    let back: f64 = six.parse().expect("formatted scalar parses");
    if (back - x).abs() <= 5e-7 * x.abs() {
        six
    } else {
        format!("{x}")
    }
}

fn print_expr(expr: &Expr, out: &mut String) {
    match expr {
        Expr::True => out.push_str("TRUE"),
        Expr::Pred(p) => {
            out.push('(');
            for (j, &a) in p.coeffs.iter().enumerate() {
                if j == 0 {
                    out.push_str(&fmt_scalar(a));
                } else if a < 0.0 {
                    out.push_str(" - ");
                    out.push_str(&fmt_scalar(-a));
                } else {
                    out.push_str(" + ");
                    out.push_str(&fmt_scalar(a));
                }
                out.push_str("*x");
                out.push_str(&(j + 1).to_string());
            }
            out.push_str(" <= ");
            out.push_str(&fmt_scalar(p.offset));
            out.push(')');
        }
        Expr::Not(child) => {
            out.push('!');
            print_expr(child, out);
        }
        Expr::And(b) | Expr::Or(b) => {
            out.push('(');
            print_expr(&b.left, out);
            out.push_str(") ");
            out.push(if matches!(expr, Expr::And(_)) {
                '&'
            } else {
                '|'
            });
            out.push('{');
            out.push_str(&fmt_scalar(b.weights[0]));
            out.push(',');
            out.push_str(&fmt_scalar(b.weights[1]));
            out.push_str("} (");
            print_expr(&b.right, out);
            out.push(')');
        }
        Expr::Always(t) | Expr::Eventually(t) => {
            out.push(if matches!(expr, Expr::Always(_)) {
                'G'
            } else {
                'F'
            });
            out.push('[');
            out.push_str(&t.interval.start.to_string());
            out.push(',');
            out.push_str(&t.interval.end.to_string());
            out.push_str("]{");
            for (i, &w) in t.weights.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&fmt_scalar(w));
            }
            out.push_str("}(");
            print_expr(&t.child, out);
            out.push(')');
        }
    }
}

/// Canonical text form: 6 significant digits, terms in feature order, fully
/// parenthesized.
pub fn print(formula: &Formula) -> String {
    let mut out = String::new();
    print_expr(formula.root(), &mut out);
    out
}
