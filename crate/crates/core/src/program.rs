//! Reasoning programs: a question compiled into a sequence of atomic
//! operations over scene-graph objects.
//!
//! Text form, one step per line:
//!
//! ```text
//! 0: select(category=jeans)
//! 1: relate(category=girl, relation=wearing) <- [0]
//! 2: relate(category=bag, relation=to the left of) <- [1]
//! 3: query(attribute=color) <- [2]
//! ```
//!
//! `and` / `or` take no arguments, so the parentheses may be omitted
//! (`2: and <- [0,1]`). Values run until the next `,` or `)` and may contain
//! spaces; they are normalized like every other annotation token. The final
//! step is always the last line, and every step must feed into it.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::Token;

/// The eight atomic operation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Select,
    Filter,
    Query,
    Verify,
    Compare,
    Relate,
    And,
    Or,
}

impl OpKind {
    pub const ALL: [OpKind; 8] = [
        OpKind::Select,
        OpKind::Filter,
        OpKind::Query,
        OpKind::Verify,
        OpKind::Compare,
        OpKind::Relate,
        OpKind::And,
        OpKind::Or,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Select => "select",
            OpKind::Filter => "filter",
            OpKind::Query => "query",
            OpKind::Verify => "verify",
            OpKind::Compare => "compare",
            OpKind::Relate => "relate",
            OpKind::And => "and",
            OpKind::Or => "or",
        }
    }

    /// Stable position in [`OpKind::ALL`]; used as the class index for
    /// operation-prediction losses.
    pub fn index(self) -> usize {
        OpKind::ALL.iter().position(|k| *k == self).unwrap()
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = ();

    fn from_str(s: &str) -> Result<OpKind, ()> {
        OpKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or(())
    }
}

/// One step: `<operation, attribute, category>` triplet plus dependencies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub index: usize,
    pub kind: OpKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Token>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<Token>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<Token>,
    #[serde(default)]
    pub deps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningProgram {
    pub steps: Vec<Step>,
}

impl ReasoningProgram {
    /// Index of the answer-producing step (always the last one).
    pub fn final_index(&self) -> usize {
        self.steps.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// Step index on a line doesn't match its position.
    IndexOrder,
    /// Dependency on self or a later step.
    ForwardDep,
    /// Dependency index out of range.
    UnknownDep,
    /// Wrong dependency count or missing/forbidden argument for the kind.
    Arity,
    /// Step not reachable walking dependencies back from the final step.
    Unreachable,
    /// Program has no steps.
    Empty,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::IndexOrder => "index-order",
            Rule::ForwardDep => "forward-dep",
            Rule::UnknownDep => "unknown-dep",
            Rule::Arity => "arity",
            Rule::Unreachable => "unreachable",
            Rule::Empty => "empty",
        };
        f.write_str(s)
    }
}

/// A broken program invariant: which step, which rule, and what went wrong.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub step: Option<usize>,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(i) => write!(f, "step {i} [{}]: {}", self.rule, self.message),
            None => write!(f, "[{}]: {}", self.rule, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum ProgramError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("invalid program: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(vs: &[Violation]) -> String {
    vs.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Check every structural invariant and return all violations (empty when
/// the program is well-formed).
pub fn validate_program(p: &ReasoningProgram) -> Vec<Violation> {
    let mut out = Vec::new();
    if p.steps.is_empty() {
        out.push(Violation {
            step: None,
            rule: Rule::Empty,
            message: "program must contain at least one step".into(),
        });
        return out;
    }

    for (pos, step) in p.steps.iter().enumerate() {
        if step.index != pos {
            out.push(Violation {
                step: Some(pos),
                rule: Rule::IndexOrder,
                message: format!("expected index {pos}, found {}", step.index),
            });
        }
        for &d in &step.deps {
            if d >= p.steps.len() {
                out.push(Violation {
                    step: Some(pos),
                    rule: Rule::UnknownDep,
                    message: format!("dependency {d} does not exist"),
                });
            } else if d >= pos {
                out.push(Violation {
                    step: Some(pos),
                    rule: Rule::ForwardDep,
                    message: format!("dependency {d} is not an earlier step"),
                });
            }
        }
        check_arity(pos, step, &mut out);
    }

    // Reachability: walk deps backwards from the final step.
    let mut reachable = vec![false; p.steps.len()];
    let mut stack = vec![p.final_index()];
    while let Some(i) = stack.pop() {
        if reachable[i] {
            continue;
        }
        reachable[i] = true;
        for &d in &p.steps[i].deps {
            if d < p.steps.len() {
                stack.push(d);
            }
        }
    }
    for (i, ok) in reachable.iter().enumerate() {
        if !ok {
            out.push(Violation {
                step: Some(i),
                rule: Rule::Unreachable,
                message: "step does not feed into the final step".into(),
            });
        }
    }

    out
}

fn check_arity(pos: usize, step: &Step, out: &mut Vec<Violation>) {
    let mut fail = |message: String| {
        out.push(Violation {
            step: Some(pos),
            rule: Rule::Arity,
            message,
        })
    };
    let kind = step.kind;
    match kind {
        OpKind::Select => {
            if !step.deps.is_empty() {
                fail(format!("select takes no dependencies, found {}", step.deps.len()));
            }
            if step.category.is_none() {
                fail("select requires a category".into());
            }
            if step.relation.is_some() {
                fail("select does not take a relation".into());
            }
        }
        OpKind::Filter | OpKind::Query | OpKind::Verify => {
            if step.deps.len() != 1 {
                fail(format!("{kind} takes exactly 1 dependency, found {}", step.deps.len()));
            }
            if step.attribute.is_none() {
                fail(format!("{kind} requires an attribute"));
            }
            if step.relation.is_some() {
                fail(format!("{kind} does not take a relation"));
            }
        }
        OpKind::Relate => {
            if step.deps.len() != 1 {
                fail(format!("relate takes exactly 1 dependency, found {}", step.deps.len()));
            }
            if step.category.is_none() {
                fail("relate requires a category".into());
            }
            if step.relation.is_none() {
                fail("relate requires a relation".into());
            }
            if step.attribute.is_some() {
                fail("relate does not take an attribute".into());
            }
        }
        OpKind::And | OpKind::Or => {
            if step.deps.len() < 2 {
                fail(format!("{kind} takes at least 2 dependencies, found {}", step.deps.len()));
            }
            if step.category.is_some() || step.attribute.is_some() || step.relation.is_some() {
                fail(format!("{kind} takes no arguments"));
            }
        }
        OpKind::Compare => {
            if step.deps.len() < 2 {
                fail(format!("compare takes at least 2 dependencies, found {}", step.deps.len()));
            }
            if step.attribute.is_none() {
                fail("compare requires an attribute".into());
            }
            if step.relation.is_some() {
                fail("compare does not take a relation".into());
            }
        }
    }
}

/// Parse the text form. Rejects programs with any structural violation.
pub fn parse_program(text: &str) -> Result<ReasoningProgram, ProgramError> {
    let mut steps = Vec::new();
    for (line_no, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        steps.push(parse_step_line(line_no + 1, raw_line)?);
    }
    let program = ReasoningProgram { steps };
    let violations = validate_program(&program);
    if violations.is_empty() {
        Ok(program)
    } else {
        Err(ProgramError::Invalid(violations))
    }
}

struct Cursor<'a> {
    line: usize,
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.text.len() - trimmed.len();
    }

    fn eat(&mut self, prefix: &str) -> bool {
        if self.rest().starts_with(prefix) {
            self.pos += prefix.len();
            true
        } else {
            false
        }
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, ProgramError> {
        Err(ProgramError::Syntax {
            line: self.line,
            col: self.pos + 1,
            msg: msg.into(),
        })
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> &'a str {
        let rest = self.rest();
        let end = rest
            .char_indices()
            .find(|(_, c)| !pred(*c))
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        self.pos += end;
        &rest[..end]
    }

    fn parse_usize(&mut self, what: &str) -> Result<usize, ProgramError> {
        let digits = self.take_while(|c| c.is_ascii_digit());
        if digits.is_empty() {
            return self.error(format!("expected {what}"));
        }
        digits
            .parse::<usize>()
            .or_else(|_| self.error(format!("{what} {digits:?} out of range")))
    }
}

fn parse_step_line(line_no: usize, raw: &str) -> Result<Step, ProgramError> {
    let mut c = Cursor {
        line: line_no,
        text: raw,
        pos: 0,
    };
    c.skip_ws();
    let index = c.parse_usize("step index")?;
    c.skip_ws();
    if !c.eat(":") {
        return c.error("expected ':' after step index");
    }
    c.skip_ws();
    let name = c.take_while(|ch| ch.is_ascii_alphanumeric() || ch == '_');
    let kind = match OpKind::from_str(name) {
        Ok(k) => k,
        Err(()) => return c.error(format!("unknown operation {name:?}")),
    };
    c.skip_ws();

    let mut category = None;
    let mut attribute = None;
    let mut relation = None;
    if c.eat("(") {
        c.skip_ws();
        if !c.eat(")") {
            loop {
                c.skip_ws();
                let key = c.take_while(|ch| ch.is_ascii_alphanumeric() || ch == '_');
                c.skip_ws();
                if !c.eat("=") {
                    return c.error(format!("expected '=' after argument key {key:?}"));
                }
                let value = c.take_while(|ch| ch != ',' && ch != ')');
                let token = Token::new(value);
                if token.is_empty() {
                    return c.error(format!("empty value for argument {key:?}"));
                }
                let slot = match key {
                    "category" => &mut category,
                    "attribute" => &mut attribute,
                    "relation" => &mut relation,
                    other => return c.error(format!("unknown argument key {other:?}")),
                };
                if slot.is_some() {
                    return c.error(format!("argument {key:?} given twice"));
                }
                *slot = Some(token);
                if c.eat(",") {
                    continue;
                }
                if c.eat(")") {
                    break;
                }
                return c.error("expected ',' or ')' in argument list");
            }
        }
        c.skip_ws();
    }

    let mut deps = Vec::new();
    if c.eat("<-") {
        c.skip_ws();
        if !c.eat("[") {
            return c.error("expected '[' after '<-'");
        }
        loop {
            c.skip_ws();
            deps.push(c.parse_usize("dependency index")?);
            c.skip_ws();
            if c.eat(",") {
                continue;
            }
            if c.eat("]") {
                break;
            }
            return c.error("expected ',' or ']' in dependency list");
        }
        c.skip_ws();
    }

    if !c.rest().is_empty() {
        return c.error(format!("unexpected trailing input {:?}", c.rest()));
    }

    Ok(Step {
        index,
        kind,
        category,
        attribute,
        relation,
        deps,
    })
}

/// Render back to the text form. `parse_program(serialize_program(p)) == p`
/// for any valid program.
pub fn serialize_program(p: &ReasoningProgram) -> String {
    let mut out = String::new();
    for step in &p.steps {
        out.push_str(&format!("{}: {}", step.index, step.kind));
        let mut args = Vec::new();
        if let Some(t) = &step.category {
            args.push(format!("category={t}"));
        }
        if let Some(t) = &step.attribute {
            args.push(format!("attribute={t}"));
        }
        if let Some(t) = &step.relation {
            args.push(format!("relation={t}"));
        }
        if !args.is_empty() {
            out.push_str(&format!("({})", args.join(", ")));
        }
        if !step.deps.is_empty() {
            let deps: Vec<String> = step.deps.iter().map(|d| d.to_string()).collect();
            out.push_str(&format!(" <- [{}]", deps.join(",")));
        }
        out.push('\n');
    }
    out
}

/// Kinds that appear in a program, deduplicated.
pub fn kinds_present(p: &ReasoningProgram) -> BTreeSet<OpKind> {
    p.steps.iter().map(|s| s.kind).collect()
}

/// Test fixture shared across modules: the Fig-style four-step chain over
/// the girl/jeans/bag scene.
#[cfg(test)]
pub(crate) fn jeans_chain() -> ReasoningProgram {
    parse_program(
        "0: select(category=jeans)\n\
         1: relate(category=girl, relation=wearing) <- [0]\n\
         2: relate(category=bag, relation=to the left of) <- [1]\n\
         3: query(attribute=color) <- [2]\n",
    )
    .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_step_chain_parses() {
        let p = jeans_chain();
        assert_eq!(p.steps.len(), 4);
        assert_eq!(p.final_index(), 3);
        assert_eq!(p.steps[0].kind, OpKind::Select);
        assert_eq!(p.steps[0].category, Some(Token::new("jeans")));
        assert_eq!(p.steps[2].relation, Some(Token::new("to the left of")));
        assert_eq!(p.steps[3].deps, vec![2]);
    }

    #[test]
    fn and_without_parens_parses() {
        let p = parse_program(
            "0: select(category=cup)\n1: select(category=plate)\n2: and <- [0,1]\n",
        )
        .unwrap();
        assert_eq!(p.steps[2].kind, OpKind::And);
        assert_eq!(p.steps[2].deps, vec![0, 1]);
    }

    #[test]
    fn values_keep_internal_spaces() {
        let p = parse_program(
            "0: select(category=traffic light)\n1: query(attribute=color) <- [0]\n",
        )
        .unwrap();
        assert_eq!(p.steps[0].category, Some(Token::new("traffic light")));
    }

    #[test]
    fn filter_missing_attribute_is_arity_violation() {
        let err = parse_program("0: select(category=ball)\n1: filter <- [0]\n").unwrap_err();
        match err {
            ProgramError::Invalid(vs) => {
                assert!(vs.iter().any(|v| v.step == Some(1) && v.rule == Rule::Arity),
                    "violations: {vs:?}");
            }
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn forward_and_self_deps_rejected() {
        let err = parse_program(
            "0: select(category=a)\n1: query(attribute=color) <- [1]\n",
        )
        .unwrap_err();
        match err {
            ProgramError::Invalid(vs) => {
                assert!(vs.iter().any(|v| v.rule == Rule::ForwardDep && v.step == Some(1)));
            }
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn unreachable_step_rejected() {
        let err = parse_program(
            "0: select(category=a)\n\
             1: select(category=b)\n\
             2: query(attribute=color) <- [0]\n",
        )
        .unwrap_err();
        match err {
            ProgramError::Invalid(vs) => {
                assert!(vs.iter().any(|v| v.rule == Rule::Unreachable && v.step == Some(1)));
            }
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_carries_position() {
        let err = parse_program("0: select(category=jeans\n").unwrap_err();
        match err {
            ProgramError::Syntax { line, .. } => assert_eq!(line, 1),
            other => panic!("expected Syntax, got {other:?}"),
        }
        let err = parse_program("0: frobnicate(category=x)\n").unwrap_err();
        assert!(err.to_string().contains("frobnicate"));
    }

    #[test]
    fn empty_program_rejected() {
        let err = parse_program("\n  \n").unwrap_err();
        match err {
            ProgramError::Invalid(vs) => assert!(vs.iter().any(|v| v.rule == Rule::Empty)),
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_argument_rejected() {
        let err = parse_program("0: select(category=a, category=b)\n").unwrap_err();
        assert!(matches!(err, ProgramError::Syntax { .. }));
    }

    #[test]
    fn index_mismatch_rejected() {
        let err = parse_program("1: select(category=a)\n").unwrap_err();
        match err {
            ProgramError::Invalid(vs) => {
                assert!(vs.iter().any(|v| v.rule == Rule::IndexOrder));
            }
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn compare_requires_attribute_and_two_deps() {
        let p = parse_program(
            "0: select(category=shirt)\n\
             1: select(category=hat)\n\
             2: compare(attribute=color) <- [0,1]\n",
        )
        .unwrap();
        assert_eq!(p.steps[2].kind, OpKind::Compare);

        let err = parse_program(
            "0: select(category=shirt)\n2: compare(attribute=color) <- [0]\n",
        )
        .unwrap_err();
        assert!(matches!(err, ProgramError::Invalid(_)));
    }

    #[test]
    fn roundtrip_through_text() {
        let p = jeans_chain();
        let text = serialize_program(&p);
        assert_eq!(parse_program(&text).unwrap(), p);

        let q = parse_program(
            "0: select(category=cup)\n1: select(category=plate)\n2: or <- [0,1]\n\
             3: verify(attribute=clean) <- [2]\n",
        )
        .unwrap();
        assert_eq!(parse_program(&serialize_program(&q)).unwrap(), q);
    }

    #[test]
    fn opkind_roundtrip_and_order() {
        for (i, kind) in OpKind::ALL.iter().enumerate() {
            assert_eq!(kind.index(), i);
            assert_eq!(OpKind::from_str(kind.name()), Ok(*kind));
        }
        assert_eq!(serde_json::to_string(&OpKind::Relate).unwrap(), "\"relate\"");
    }
}
