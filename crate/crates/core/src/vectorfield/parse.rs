//! Recursive-descent parser for the system definition format
//! `n=<int>; f1=<expr>; ...; fn=<expr>; [param <name>=<real>;]*`.

use super::expr::{BinaryOp, Expr, UnaryOp};
use super::SystemSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
    /// whitespace separates this token from the previous one
    spaced: bool,
}

fn syntax(pos: usize, msg: impl Into<String>) -> Error {
    Error::Syntax {
        pos,
        msg: msg.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut spaced = false;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            spaced = true;
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s = &text[start..i];
            let v: f64 = s
                .parse()
                .map_err(|_| syntax(start, format!("malformed number `{s}`")))?;
            out.push(Token {
                tok: Tok::Num(v),
                pos: start,
                spaced,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(text[start..i].to_string()),
                pos: start,
                spaced,
            });
        } else if "+-*/^()=;,".contains(c) {
            i += 1;
            out.push(Token {
                tok: Tok::Sym(c),
                pos: start,
                spaced,
            });
        } else {
            return Err(syntax(start, format!("unexpected character `{c}`")));
        }
        spaced = false;
    }
    Ok(out)
}

struct Statement<'t> {
    tokens: &'t [Token],
    /// byte offset of the terminating `;` or end of text
    end: usize,
}

fn split_statements(tokens: &[Token], text_len: usize) -> Vec<Statement<'_>> {
    let mut out = Vec::new();
    let mut start = 0;
    for (k, t) in tokens.iter().enumerate() {
        if t.tok == Tok::Sym(';') {
            out.push(Statement {
                tokens: &tokens[start..k],
                end: t.pos,
            });
            start = k + 1;
        }
    }
    out.push(Statement {
        tokens: &tokens[start..],
        end: text_len,
    });
    out.retain(|s| !s.tokens.is_empty());
    out
}

fn component_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('f')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn variable_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn signed_number(tokens: &[Token], end: usize) -> Result<f64> {
    match tokens {
        [Token {
            tok: Tok::Num(v), ..
        }] => Ok(*v),
        [Token {
            tok: Tok::Sym('-'), ..
        }, Token {
            tok: Tok::Num(v), ..
        }] => Ok(-*v),
        [Token {
            tok: Tok::Sym('+'), ..
        }, Token {
            tok: Tok::Num(v), ..
        }] => Ok(*v),
        [] => Err(syntax(end, "expected a number")),
        [t, ..] => Err(syntax(t.pos, "expected a number")),
    }
}

pub(crate) fn parse_system(text: &str, name: &str) -> Result<SystemSpec> {
    let tokens = tokenize(text)?;
    let statements = split_statements(&tokens, text.len());

    let mut n: Option<usize> = None;
    let mut param_names: Vec<String> = Vec::new();
    let mut param_values: Vec<f64> = Vec::new();
    // (component index, statement)
    let mut components: Vec<(usize, &Statement)> = Vec::new();

    for st in &statements {
        let head = &st.tokens[0];
        let Tok::Ident(word) = &head.tok else {
            return Err(syntax(head.pos, "statement must start with `n`, `f<i>` or `param`"));
        };
        if word == "param" {
            let (pname, rest) = match &st.tokens[1..] {
                [Token {
                    tok: Tok::Ident(p),
                    spaced: true,
                    ..
                }, rest @ ..] => (p.clone(), rest),
                _ => return Err(syntax(head.pos, "expected `param <name>=<real>`")),
            };
            match rest.first() {
                Some(Token {
                    tok: Tok::Sym('='), ..
                }) => {}
                Some(t) => return Err(syntax(t.pos, "expected `=`")),
                None => return Err(syntax(st.end, "expected `=`")),
            }
            if variable_index(&pname).is_some()
                || UnaryOp::from_name(&pname).is_some()
                || pname == "param"
            {
                return Err(syntax(st.tokens[1].pos, format!("reserved parameter name `{pname}`")));
            }
            if param_names.contains(&pname) {
                return Err(syntax(st.tokens[1].pos, format!("duplicate parameter `{pname}`")));
            }
            param_values.push(signed_number(&rest[1..], st.end)?);
            param_names.push(pname);
            continue;
        }
        match st.tokens.get(1) {
            Some(Token {
                tok: Tok::Sym('='), ..
            }) => {}
            Some(t) => return Err(syntax(t.pos, "expected `=`")),
            None => return Err(syntax(st.end, "expected `=`")),
        }
        if word == "n" {
            let v = signed_number(&st.tokens[2..], st.end)?;
            if v < 1.0 || v.fract() != 0.0 {
                return Err(syntax(st.tokens[2].pos, "dimension must be a positive integer"));
            }
            if n.is_some() {
                return Err(syntax(head.pos, "dimension declared twice"));
            }
            n = Some(v as usize);
        } else if let Some(k) = component_index(word) {
            if k == 0 {
                return Err(syntax(head.pos, "components are numbered from f1"));
            }
            if components.iter().any(|(j, _)| *j == k) {
                return Err(syntax(head.pos, format!("component f{k} defined twice")));
            }
            components.push((k, st));
        } else {
            return Err(Error::UnknownIdentifier {
                pos: head.pos,
                name: word.clone(),
            });
        }
    }

    let n = n.ok_or_else(|| syntax(0, "missing dimension declaration `n=<int>`"))?;

    let mut exprs: Vec<(usize, Expr)> = Vec::with_capacity(components.len());
    for (k, st) in &components {
        let mut p = ExprParser {
            tokens: &st.tokens[2..],
            i: 0,
            end: st.end,
            n,
            params: &param_names,
        };
        let e = p.expression()?;
        if let Some(t) = p.peek() {
            return Err(syntax(t.pos, "unexpected token after expression"));
        }
        exprs.push((*k, e));
    }

    if let Some((k, _)) = exprs.iter().find(|(k, _)| *k > n) {
        return Err(Error::DimensionMismatch {
            declared: n,
            detail: format!("component f{k} exceeds the dimension"),
        });
    }
    if exprs.len() != n {
        return Err(Error::DimensionMismatch {
            declared: n,
            detail: format!("found {} components", exprs.len()),
        });
    }
    exprs.sort_by_key(|(k, _)| *k);
    SystemSpec::new(
        name,
        exprs.into_iter().map(|(_, e)| e).collect(),
        param_names.into_iter().zip(param_values).collect(),
    )
}

struct ExprParser<'a> {
    tokens: &'a [Token],
    i: usize,
    end: usize,
    n: usize,
    params: &'a [String],
}

impl ExprParser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.i)
    }

    fn peek_sym(&self, c: char) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Sym(s), .. }) if *s == c)
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.end, |t| t.pos)
    }

    fn expect_sym(&mut self, c: char) -> Result<()> {
        if self.peek_sym(c) {
            self.i += 1;
            Ok(())
        } else {
            Err(syntax(self.here(), format!("expected `{c}`")))
        }
    }

    fn expression(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.peek_sym('+') {
                BinaryOp::Add
            } else if self.peek_sym('-') {
                BinaryOp::Sub
            } else {
                return Ok(lhs);
            };
            self.i += 1;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.peek_sym('*') {
                BinaryOp::Mul
            } else if self.peek_sym('/') {
                BinaryOp::Div
            } else {
                return Ok(lhs);
            };
            self.i += 1;
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek_sym('-') {
            self.i += 1;
            return Ok(Expr::unary(UnaryOp::Neg, self.unary()?));
        }
        if self.peek_sym('+') {
            self.i += 1;
            return self.unary();
        }
        self.power()
    }

    // right-associative; the exponent may carry a sign (`x1^-2`)
    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.peek_sym('^') {
            self.i += 1;
            let exponent = self.unary()?;
            return Ok(Expr::binary(BinaryOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        let Some(t) = self.peek().cloned() else {
            return Err(syntax(self.end, "unexpected end of expression"));
        };
        self.i += 1;
        match t.tok {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::Sym('(') => {
                let e = self.expression()?;
                self.expect_sym(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(op) = UnaryOp::from_name(&name) {
                    self.expect_sym('(')?;
                    let e = self.expression()?;
                    self.expect_sym(')')?;
                    return Ok(Expr::unary(op, e));
                }
                if let Some(k) = variable_index(&name) {
                    if k >= 1 && k <= self.n {
                        return Ok(Expr::Var(k - 1));
                    }
                    return Err(Error::UnknownIdentifier { pos: t.pos, name });
                }
                if let Some(idx) = self.params.iter().position(|p| *p == name) {
                    return Ok(Expr::Param(idx));
                }
                Err(Error::UnknownIdentifier { pos: t.pos, name })
            }
            Tok::Sym(c) => Err(syntax(t.pos, format!("unexpected `{c}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_scientific_literals_and_precedence() {
        let s = SystemSpec::parse("n=1; f1 = -2e-1*x1^2 + 3 / 2^2").unwrap();
        let v = s.eval_field(&[2.0]).unwrap();
        assert!((v[0] - (-0.2 * 4.0 + 0.75)).abs() < 1e-15);
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        let s = SystemSpec::parse("n=1; f1=-x1^2").unwrap();
        assert_eq!(s.eval_field(&[3.0]).unwrap()[0], -9.0);
        let s = SystemSpec::parse("n=1; f1=2^-1").unwrap();
        assert_eq!(s.eval_field(&[3.0]).unwrap()[0], 0.5);
    }

    #[test]
    fn params_may_follow_their_use() {
        let s = SystemSpec::parse("n=1; f1=mu*x1; param mu=-0.5;").unwrap();
        assert_eq!(s.eval_field(&[2.0]).unwrap()[0], -1.0);
        assert_eq!(s.parameters(), &[("mu".to_string(), -0.5)]);
    }

    #[test]
    fn reports_syntax_position() {
        match SystemSpec::parse("n=1; f1=(x1+") {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 12),
            other => panic!("unexpected {other:?}"),
        }
        match SystemSpec::parse("n=1; f1=x1 $ 2") {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 11),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_identifiers() {
        assert!(matches!(
            SystemSpec::parse("n=2; f1=x3"),
            Err(Error::UnknownIdentifier { ref name, .. }) if name == "x3"
        ));
        assert!(matches!(
            SystemSpec::parse("n=1; f1=k*x1"),
            Err(Error::UnknownIdentifier { ref name, .. }) if name == "k"
        ));
        assert!(matches!(
            SystemSpec::parse("n=1; g1=x1"),
            Err(Error::UnknownIdentifier { .. })
        ));
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            SystemSpec::parse("n=2; f1=x1"),
            Err(Error::DimensionMismatch { declared: 2, .. })
        ));
        assert!(matches!(
            SystemSpec::parse("n=1; f1=x1; f2=x1"),
            Err(Error::DimensionMismatch { declared: 1, .. })
        ));
    }

    #[test]
    fn rejects_duplicates_and_missing_n() {
        assert!(SystemSpec::parse("f1=1").is_err());
        assert!(SystemSpec::parse("n=1; f1=1; f1=2").is_err());
        assert!(SystemSpec::parse("n=1; f1=a; param a=1; param a=2").is_err());
        assert!(SystemSpec::parse("n=0;").is_err());
    }
}
