//! Line-level catalog for externally built projects. Only the constructor
//! rule is available: without a parser, constructor calls are the one
//! construct a pattern can find reliably.

use regex::Regex;

use super::RuleId;
use crate::adapter::{Edit, Replacement, Rewrite, RuleCatalog, Statement};
use crate::tree::SourceTree;

pub struct TextCatalog<'a> {
    tree: &'a SourceTree,
    constructor: Regex,
    null_literal: String,
}

impl<'a> TextCatalog<'a> {
    pub fn new(tree: &'a SourceTree, constructor: Regex, null_literal: String) -> Self {
        TextCatalog {
            tree,
            constructor,
            null_literal,
        }
    }

    /// Constructor rewrites: drop the arguments, or replace the whole call
    /// with the null literal.
    fn constructor_rewrites(&self, stmt: &Statement) -> Vec<Rewrite> {
        let text = stmt.text(self.tree);
        let mut out = Vec::new();
        for caps in self.constructor.captures_iter(text) {
            let whole = caps.get(0).expect("group 0");
            let ty = caps.get(1).map_or("", |m| m.as_str());
            let args = caps.get(2).map_or("", |m| m.as_str());
            let splice = |with: &str| {
                format!("{}{}{}", &text[..whole.start()], with, &text[whole.end()..])
            };
            let mut push = |description: String, new: String| {
                out.push(Rewrite {
                    description,
                    edits: vec![Edit {
                        target: stmt.id.clone(),
                        replacement: Replacement::Source(new),
                    }],
                })
            };
            if !args.trim().is_empty() {
                push(format!("drop arguments of {ty}"), splice(&format!("{ty}()")));
            }
            push(format!("{ty} -> {}", self.null_literal), splice(&self.null_literal));
        }
        out
    }
}

impl RuleCatalog for TextCatalog<'_> {
    fn rewrites(&self, stmt: &Statement, rule: RuleId) -> Vec<Rewrite> {
        match rule.get() {
            4 => self.constructor_rewrites(stmt),
            _ => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{StatementId, StatementKind};
    use crate::model::{CodeLocation, LineSpan};

    #[test]
    fn constructor_variants() {
        let mut t = SourceTree::new();
        t.insert("a.py", "p = Point(1, 2)\n");
        let s = Statement {
            id: StatementId {
                file: "a.py".into(),
                path: "line/1".into(),
            },
            kind: StatementKind::Call,
            span: CodeLocation {
                file_path: "a.py".into(),
                before_span: Some(LineSpan::new(1, 1)),
                after_span: None,
            },
            bytes: 0..15,
            indent: String::new(),
        };
        let cat = TextCatalog::new(&t, Regex::new(r"\b([A-Z]\w*)\(([^()]*)\)").unwrap(), "None".into());
        let got: Vec<String> = cat
            .rewrites(&s, RuleId::new(4).unwrap())
            .into_iter()
            .map(|r| match &r.edits[0].replacement {
                Replacement::Source(s) => s.clone(),
                Replacement::Delete => String::new(),
            })
            .collect();
        assert_eq!(got, ["p = Point()", "p = None"]);
        assert!(cat.rewrites(&s, RuleId::new(2).unwrap()).is_empty());
    }
}
