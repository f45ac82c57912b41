//! Set expressions over named streams.
//!
//! The concrete syntax accepts identifiers, `|` `&` `-` (with unicode
//! aliases `∪` `∩` `∖`), and parentheses. All three operators share one
//! precedence level and associate left, so `A & B - C` is `(A & B) - C`;
//! parentheses are the only grouping mechanism. Leaves are stream indices
//! bound either by first appearance order or by an explicit binding list.

use std::collections::HashSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SetOp {
    Union,
    Intersect,
    Diff,
}

impl SetOp {
    fn symbol(self) -> char {
        match self {
            SetOp::Union => '|',
            SetOp::Intersect => '&',
            SetOp::Diff => '-',
        }
    }
}

/// Binary expression tree over stream indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SetExpr {
    Leaf(usize),
    Node {
        op: SetOp,
        left: Box<SetExpr>,
        right: Box<SetExpr>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprError {
    /// Malformed input; `offset` is the byte offset of the failure.
    Syntax { offset: usize, message: String },
    /// Identifier not present in the supplied binding list.
    UnknownIdentifier { offset: usize, name: String },
    /// A leaf index is out of range for the bound stream count.
    Binding { index: usize, arity: usize },
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprError::Syntax { offset, message } => {
                write!(f, "syntax error at byte {offset}: {message}")
            }
            ExprError::UnknownIdentifier { offset, name } => {
                write!(f, "unknown identifier `{name}` at byte {offset}")
            }
            ExprError::Binding { index, arity } => {
                write!(f, "leaf index {index} out of range for {arity} bound streams")
            }
        }
    }
}

impl std::error::Error for ExprError {}

/// A parsed expression together with the identifier names backing each
/// stream index, in first-appearance order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedExpr {
    pub expr: SetExpr,
    pub names: Vec<String>,
}

impl fmt::Display for ParsedExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.expr.render(&self.names))
    }
}

impl SetExpr {
    /// Number of streams the expression refers to (max leaf index + 1).
    pub fn arity(&self) -> usize {
        match self {
            SetExpr::Leaf(i) => i + 1,
            SetExpr::Node { left, right, .. } => left.arity().max(right.arity()),
        }
    }

    /// Evaluates the expression as a boolean over per-stream membership.
    pub fn membership_eval(&self, present: &[bool]) -> Result<bool, ExprError> {
        match self {
            SetExpr::Leaf(i) => present.get(*i).copied().ok_or(ExprError::Binding {
                index: *i,
                arity: present.len(),
            }),
            SetExpr::Node { op, left, right } => {
                let l = left.membership_eval(present)?;
                let r = right.membership_eval(present)?;
                Ok(match op {
                    SetOp::Union => l || r,
                    SetOp::Intersect => l && r,
                    SetOp::Diff => l && !r,
                })
            }
        }
    }

    /// Evaluates the expression over explicit element sets with genuine set
    /// algebra. Kept independent of [`Self::membership_eval`] on purpose:
    /// the two are cross-checked as an oracle pair.
    pub fn exact_eval(&self, sets: &[HashSet<u64>]) -> Result<HashSet<u64>, ExprError> {
        match self {
            SetExpr::Leaf(i) => sets.get(*i).cloned().ok_or(ExprError::Binding {
                index: *i,
                arity: sets.len(),
            }),
            SetExpr::Node { op, left, right } => {
                let l = left.exact_eval(sets)?;
                let r = right.exact_eval(sets)?;
                Ok(match op {
                    SetOp::Union => l.union(&r).copied().collect(),
                    SetOp::Intersect => l.intersection(&r).copied().collect(),
                    SetOp::Diff => l.difference(&r).copied().collect(),
                })
            }
        }
    }

    /// Renders the expression with minimal parentheses: left-associative
    /// chains print bare, right operands that are themselves nodes keep
    /// their parentheses. `render` followed by [`parse`] is the identity.
    pub fn render(&self, names: &[String]) -> String {
        fn go(expr: &SetExpr, names: &[String], out: &mut String) {
            match expr {
                SetExpr::Leaf(i) => match names.get(*i) {
                    Some(name) => out.push_str(name),
                    None => out.push_str(&format!("s{i}")),
                },
                SetExpr::Node { op, left, right } => {
                    go(left, names, out);
                    out.push(' ');
                    out.push(op.symbol());
                    out.push(' ');
                    if matches!(**right, SetExpr::Node { .. }) {
                        out.push('(');
                        go(right, names, out);
                        out.push(')');
                    } else {
                        go(right, names, out);
                    }
                }
            }
        }
        let mut out = String::new();
        go(self, names, &mut out);
        out
    }
}

/// Parses an expression, binding identifiers by first appearance order.
pub fn parse(text: &str) -> Result<ParsedExpr, ExprError> {
    Parser::new(text, None).parse()
}

/// Parses an expression against an explicit binding list; identifiers not
/// in the list are an error.
pub fn parse_bound(text: &str, bindings: &[&str]) -> Result<ParsedExpr, ExprError> {
    Parser::new(text, Some(bindings)).parse()
}

struct Parser<'a> {
    text: &'a str,
    chars: Vec<(usize, char)>,
    pos: usize,
    names: Vec<String>,
    bindings: Option<&'a [&'a str]>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, bindings: Option<&'a [&'a str]>) -> Self {
        let names = bindings
            .map(|b| b.iter().map(|s| s.to_string()).collect())
            .unwrap_or_default();
        Self {
            text,
            chars: text.char_indices().collect(),
            pos: 0,
            names,
            bindings,
        }
    }

    fn parse(mut self) -> Result<ParsedExpr, ExprError> {
        let expr = self.expression()?;
        self.skip_ws();
        if let Some(&(off, c)) = self.chars.get(self.pos) {
            return Err(ExprError::Syntax {
                offset: off,
                message: format!("unexpected `{c}`"),
            });
        }
        Ok(ParsedExpr {
            expr,
            names: self.names,
        })
    }

    fn skip_ws(&mut self) {
        while matches!(self.chars.get(self.pos), Some(&(_, c)) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn offset(&self) -> usize {
        self.chars
            .get(self.pos)
            .map(|&(o, _)| o)
            .unwrap_or(self.text.len())
    }

    fn expression(&mut self) -> Result<SetExpr, ExprError> {
        let mut node = self.primary()?;
        loop {
            self.skip_ws();
            let op = match self.chars.get(self.pos) {
                Some(&(_, '|')) | Some(&(_, '∪')) => SetOp::Union,
                Some(&(_, '&')) | Some(&(_, '∩')) => SetOp::Intersect,
                Some(&(_, '-')) | Some(&(_, '∖')) => SetOp::Diff,
                _ => break,
            };
            self.pos += 1;
            let right = self.primary()?;
            node = SetExpr::Node {
                op,
                left: Box::new(node),
                right: Box::new(right),
            };
        }
        Ok(node)
    }

    fn primary(&mut self) -> Result<SetExpr, ExprError> {
        self.skip_ws();
        match self.chars.get(self.pos) {
            Some(&(_, '(')) => {
                self.pos += 1;
                let inner = self.expression()?;
                self.skip_ws();
                match self.chars.get(self.pos) {
                    Some(&(_, ')')) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(ExprError::Syntax {
                        offset: self.offset(),
                        message: "expected `)`".into(),
                    }),
                }
            }
            Some(&(start, c)) if c.is_ascii_alphabetic() || c == '_' => {
                let mut end = self.pos;
                while matches!(self.chars.get(end), Some(&(_, c)) if c.is_ascii_alphanumeric() || c == '_')
                {
                    end += 1;
                }
                let stop = self
                    .chars
                    .get(end)
                    .map(|&(o, _)| o)
                    .unwrap_or(self.text.len());
                let name = &self.text[start..stop];
                self.pos = end;
                let index = match self.names.iter().position(|n| n == name) {
                    Some(i) => i,
                    None if self.bindings.is_some() => {
                        return Err(ExprError::UnknownIdentifier {
                            offset: start,
                            name: name.to_string(),
                        });
                    }
                    None => {
                        self.names.push(name.to_string());
                        self.names.len() - 1
                    }
                };
                Ok(SetExpr::Leaf(index))
            }
            Some(&(off, c)) => Err(ExprError::Syntax {
                offset: off,
                message: format!("expected identifier or `(`, found `{c}`"),
            }),
            None => Err(ExprError::Syntax {
                offset: self.text.len(),
                message: "unexpected end of input".into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(op: SetOp, left: SetExpr, right: SetExpr) -> SetExpr {
        SetExpr::Node {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    #[test]
    fn single_identifier() {
        let parsed = parse("A").unwrap();
        assert_eq!(parsed.expr, SetExpr::Leaf(0));
        assert_eq!(parsed.names, vec!["A"]);
    }

    #[test]
    fn chains_associate_left() {
        let parsed = parse("A & B - C").unwrap();
        let expected = node(
            SetOp::Diff,
            node(SetOp::Intersect, SetExpr::Leaf(0), SetExpr::Leaf(1)),
            SetExpr::Leaf(2),
        );
        assert_eq!(parsed.expr, expected);
    }

    #[test]
    fn parentheses_override_associativity() {
        let a = parse("A & (B - C)").unwrap();
        let b = parse("A & B - C").unwrap();
        assert_ne!(a.expr, b.expr);
        let expected = node(
            SetOp::Intersect,
            SetExpr::Leaf(0),
            node(SetOp::Diff, SetExpr::Leaf(1), SetExpr::Leaf(2)),
        );
        assert_eq!(a.expr, expected);
    }

    #[test]
    fn unicode_aliases() {
        assert_eq!(parse("A ∪ B").unwrap().expr, parse("A | B").unwrap().expr);
        assert_eq!(parse("A ∩ B").unwrap().expr, parse("A & B").unwrap().expr);
        assert_eq!(parse("A ∖ B").unwrap().expr, parse("A - B").unwrap().expr);
    }

    #[test]
    fn repeated_identifier_reuses_index() {
        let parsed = parse("A & B | A").unwrap();
        assert_eq!(parsed.names, vec!["A", "B"]);
        assert_eq!(parsed.expr.arity(), 2);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse("A & ") {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
        match parse("A && B") {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
        match parse("(A | B") {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn explicit_bindings_reject_unknown_names() {
        let parsed = parse_bound("B & A", &["A", "B"]).unwrap();
        assert_eq!(
            parsed.expr,
            node(SetOp::Intersect, SetExpr::Leaf(1), SetExpr::Leaf(0))
        );
        match parse_bound("A & C", &["A", "B"]) {
            Err(ExprError::UnknownIdentifier { name, offset }) => {
                assert_eq!(name, "C");
                assert_eq!(offset, 4);
            }
            other => panic!("expected unknown identifier, got {other:?}"),
        }
    }

    #[test]
    fn membership_truth_tables() {
        let e = parse("(A & B) - C").unwrap().expr;
        assert!(e.membership_eval(&[true, true, false]).unwrap());
        assert!(!e.membership_eval(&[true, true, true]).unwrap());
        let u = parse("A | B").unwrap().expr;
        assert!(!u.membership_eval(&[false, false]).unwrap());
        assert!(u.membership_eval(&[false, true]).unwrap());
    }

    #[test]
    fn membership_rejects_short_binding() {
        let e = parse("A & B").unwrap().expr;
        assert_eq!(
            e.membership_eval(&[true]),
            Err(ExprError::Binding { index: 1, arity: 1 })
        );
    }

    #[test]
    fn exact_eval_basics() {
        let a: HashSet<u64> = [1, 2].into_iter().collect();
        let b: HashSet<u64> = [2, 3].into_iter().collect();
        let sets = vec![a, b];

        let inter = parse("A & B").unwrap().expr.exact_eval(&sets).unwrap();
        assert_eq!(inter, [2].into_iter().collect());

        let self_diff = parse("A - A").unwrap().expr.exact_eval(&sets).unwrap();
        assert!(self_diff.is_empty());
    }

    #[test]
    fn render_is_parse_fixed_point() {
        for text in [
            "A",
            "A & B - C",
            "A & (B - C)",
            "(A | B) & (C - D) | E",
            "A - (B - (C - D))",
        ] {
            let parsed = parse(text).unwrap();
            let rendered = parsed.to_string();
            let reparsed = parse(&rendered).unwrap();
            assert_eq!(parsed, reparsed, "render of {text:?} was {rendered:?}");
        }
    }
}
