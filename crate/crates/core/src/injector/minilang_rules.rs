//! Rewrite catalog for MiniLang statements.
//!
//! Expression-level rules (1 to 8) mutate the AST and turn the mutant back
//! into text by splicing only the changed node, so untouched formatting
//! survives. Statement and block rules (9 to 16) work on statement text.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use minilang::ast::{BinaryOp, Expr, ExprKind, Stmt, StmtKind, Type, UnaryOp};
use minilang::lexer::tokenize;
use minilang::printer::{print_expr, print_stmt, INDENT};
use minilang::{parse_file, parse_stmt};

use super::RuleId;
use crate::adapter::minilang::{program, walk_tree, Walked};
use crate::adapter::{
    dedent_continuation, indent_continuation, render_edits, AdapterError, Edit, Replacement, Rewrite, RuleCatalog,
    Statement, StatementId,
};
use crate::tree::SourceTree;

pub const SIMILARITY_THRESHOLD: f64 = 0.4;

pub struct MiniLangCatalog<'a> {
    tree: &'a SourceTree,
    walked: Vec<Walked>,
    statements: Vec<Statement>,
    index: BTreeMap<StatementId, usize>,
    /// Callable (name, arity) pairs, tests excluded, sorted by name.
    functions: Vec<(String, usize)>,
    tokens: Vec<BTreeMap<String, usize>>,
}

/// An AST-level mutant of one statement.
#[derive(Debug, Clone)]
struct Mutant {
    stmt: Stmt,
    /// Changed node: byte range relative to the statement, and its replacement.
    site: Option<(Range<usize>, Expr)>,
    desc: String,
}

fn preorder<'e>(e: &'e Expr, out: &mut Vec<&'e Expr>) {
    out.push(e);
    for c in e.children() {
        preorder(c, out);
    }
}

fn nodes(s: &Stmt) -> Vec<&Expr> {
    let mut out = Vec::new();
    for root in s.own_exprs() {
        preorder(root, &mut out);
    }
    out
}

fn put(e: &mut Expr, n: usize, k: &mut usize, new: &Expr) -> bool {
    if *k == n {
        *e = new.clone();
        return true;
    }
    *k += 1;
    e.children_mut().into_iter().any(|c| put(c, n, k, new))
}

fn replace_nth(s: &Stmt, n: usize, new: &Expr) -> Stmt {
    let mut s = s.clone();
    let mut k = 0;
    for root in s.own_exprs_mut() {
        if put(root, n, &mut k, new) {
            break;
        }
    }
    s
}

fn next_type(t: Type) -> Type {
    match t {
        Type::Int => Type::Bool,
        Type::Bool => Type::Str,
        Type::Str | Type::Void => Type::Int,
    }
}

fn binary_family(op: BinaryOp) -> &'static [BinaryOp] {
    use BinaryOp::*;
    if op.is_logical() {
        &[And, Or]
    } else if op.is_comparison() {
        &[Lt, Le, Gt, Ge, Eq, Ne]
    } else {
        &[Add, Sub, Mul, Div, Rem]
    }
}

fn negate(e: &Expr) -> Expr {
    match &e.kind {
        ExprKind::Unary(UnaryOp::Not, inner) => (**inner).clone(),
        _ => Expr::synth(ExprKind::Unary(UnaryOp::Not, Box::new(e.clone()))),
    }
}

/// Negative values become a negated literal, which is how they parse.
fn int_literal(n: i64) -> Option<ExprKind> {
    if n >= 0 {
        Some(ExprKind::Int(n))
    } else {
        let lit = Expr::synth(ExprKind::Int(n.checked_neg()?));
        Some(ExprKind::Unary(UnaryOp::Neg, Box::new(lit)))
    }
}

fn default_return(t: Type) -> String {
    match t.default_literal() {
        Some(k) => format!(" {}", print_expr(&Expr::synth(k))),
        None => String::new(),
    }
}

fn token_bag(text: &str) -> BTreeMap<String, usize> {
    let mut bag = BTreeMap::new();
    for t in tokenize(text).unwrap_or_default() {
        *bag.entry(t.kind.text()).or_insert(0) += 1;
    }
    bag
}

/// Multiset Jaccard index: sum of minimum counts over sum of maximum counts.
pub fn jaccard(a: &BTreeMap<String, usize>, b: &BTreeMap<String, usize>) -> f64 {
    let keys: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    let (mut lo, mut hi) = (0usize, 0usize);
    for k in keys {
        let (x, y) = (a.get(k).copied().unwrap_or(0), b.get(k).copied().unwrap_or(0));
        lo += x.min(y);
        hi += x.max(y);
    }
    if hi == 0 {
        0.0
    } else {
        lo as f64 / hi as f64
    }
}

/// Token-multiset similarity of two statement texts.
pub fn similarity(a: &str, b: &str) -> f64 {
    jaccard(&token_bag(a), &token_bag(b))
}

/// True when `text` is one parenthesized group, such as `(a + 1)` but not
/// `(a + 1) * 2`.
fn is_group(text: &str) -> bool {
    if !text.starts_with('(') {
        return false;
    }
    let mut depth = 0;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in text.char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return i == text.len() - 1;
                }
            }
            _ => {}
        }
    }
    false
}

/// Offset in the dedented text that corresponds to `off` in `orig`.
fn rel_offset(orig: &str, indent: &str, off: usize) -> usize {
    dedent_continuation(&orig[..off], indent).len()
}

impl<'a> MiniLangCatalog<'a> {
    pub fn new(tree: &'a SourceTree) -> Result<Self, AdapterError> {
        let walked = walk_tree(tree)?;
        let prog = program(tree).map_err(|(file, e)| AdapterError::Parse {
            file,
            line: e.line,
            col: e.col,
            message: e.message,
        })?;
        let tests: BTreeSet<String> = prog.test_names().into_iter().collect();
        let functions = minilang::check::signatures(&prog)
            .into_iter()
            .filter(|(n, _)| !tests.contains(n))
            .map(|(n, s)| (n, s.params.len()))
            .collect();
        let statements: Vec<Statement> = walked.iter().map(|w| w.stmt.clone()).collect();
        let index = statements.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
        let tokens = statements.iter().map(|s| token_bag(s.text(tree))).collect();
        Ok(MiniLangCatalog {
            tree,
            walked,
            statements,
            index,
            functions,
            tokens,
        })
    }

    fn text(&self, i: usize) -> &'a str {
        self.statements[i].text(self.tree)
    }

    /// Statement text with continuation lines made relative to its indent.
    fn rel(&self, i: usize) -> String {
        dedent_continuation(self.text(i), &self.statements[i].indent)
    }

    fn var_type(&self, w: &Walked, name: &str) -> Option<Type> {
        w.visible.iter().rev().find(|(n, _)| n == name).map(|(_, t)| *t)
    }

    fn nearest_bool(&self, w: &Walked) -> Option<String> {
        w.visible
            .iter()
            .rev()
            .find(|(_, t)| *t == Type::Bool)
            .map(|(n, _)| n.clone())
    }

    fn node_mutants(&self, w: &Walked, s: &Stmt, f: impl Fn(&Expr) -> Vec<(Expr, String)>) -> Vec<Mutant> {
        let base = w.ast.span.start;
        let mut out = Vec::new();
        for (n, node) in nodes(s).into_iter().enumerate() {
            for (new, desc) in f(node) {
                let site = match (node.span.start.checked_sub(base), node.span.end.checked_sub(base)) {
                    (Some(a), Some(b)) if node.span.end > 0 => Some((a..b, new.clone())),
                    _ => None,
                };
                out.push(Mutant {
                    stmt: replace_nth(s, n, &new),
                    site,
                    desc,
                });
            }
        }
        out
    }

    fn ast_mutants(&self, w: &Walked, s: &Stmt, rule: u8) -> Vec<Mutant> {
        match rule {
            1 => match &s.kind {
                StmtKind::Decl { ty, name, init } => {
                    let to = next_type(*ty);
                    vec![Mutant {
                        stmt: Stmt {
                            kind: StmtKind::Decl {
                                ty: to,
                                name: name.clone(),
                                init: init.clone(),
                            },
                            span: s.span,
                        },
                        site: None,
                        desc: format!("{ty} -> {to}"),
                    }]
                }
                _ => Vec::new(),
            },
            2 => self.node_mutants(w, s, |e| match &e.kind {
                ExprKind::Binary(op, l, r) => binary_family(*op)
                    .iter()
                    .filter(|o| *o != op)
                    .map(|o| {
                        (
                            Expr::synth(ExprKind::Binary(*o, l.clone(), r.clone())),
                            format!("{} -> {}", op.symbol(), o.symbol()),
                        )
                    })
                    .collect(),
                ExprKind::Unary(op, inner) => {
                    let o = match op {
                        UnaryOp::Not => UnaryOp::Neg,
                        UnaryOp::Neg => UnaryOp::Not,
                    };
                    vec![(
                        Expr::synth(ExprKind::Unary(o, inner.clone())),
                        format!("{} -> {}", op.symbol(), o.symbol()),
                    )]
                }
                _ => Vec::new(),
            }),
            3 => self.node_mutants(w, s, |e| {
                let old = print_expr(e);
                let kinds: Vec<ExprKind> = match &e.kind {
                    ExprKind::Int(n) => {
                        let mut v = Vec::new();
                        for m in [n.checked_add(1), n.checked_sub(1), Some(0)].into_iter().flatten() {
                            if m != *n && !v.contains(&m) {
                                v.push(m);
                            }
                        }
                        v.into_iter().filter_map(int_literal).collect()
                    }
                    ExprKind::Bool(b) => vec![ExprKind::Bool(!b)],
                    ExprKind::Str(s) if !s.is_empty() => vec![ExprKind::Str(String::new())],
                    _ => Vec::new(),
                };
                kinds
                    .into_iter()
                    .map(|k| {
                        let new = Expr::synth(k);
                        let desc = format!("{old} -> {}", print_expr(&new));
                        (new, desc)
                    })
                    .collect()
            }),
            5 => self.node_mutants(w, s, |e| match &e.kind {
                ExprKind::Call(name, args) if args.len() >= 2 && print_expr(&args[0]) != print_expr(&args[1]) => {
                    let mut swapped = args.clone();
                    swapped.swap(0, 1);
                    vec![(
                        Expr::synth(ExprKind::Call(name.clone(), swapped)),
                        format!("swap first two arguments of {name}"),
                    )]
                }
                _ => Vec::new(),
            }),
            6 => {
                let target = match &s.kind {
                    StmtKind::If { .. } | StmtKind::While { .. } => true,
                    StmtKind::Decl { ty, init, .. } => *ty == Type::Bool && init.is_some(),
                    StmtKind::Assign { name, .. } => self.var_type(w, name) == Some(Type::Bool),
                    StmtKind::Return(Some(_)) => w.fn_ret == Type::Bool,
                    _ => false,
                };
                if !target {
                    return Vec::new();
                }
                // Only the root expression: index 0 in pre-order.
                self.node_mutants(w, s, |e| {
                    if !std::ptr::eq(e, s.own_exprs()[0]) {
                        return Vec::new();
                    }
                    let mut v = vec![(negate(e), "negate".to_string())];
                    if let ExprKind::Binary(op, l, r) = &e.kind {
                        if op.is_logical() {
                            v.push(((**l).clone(), format!("drop right operand of {}", op.symbol())));
                            v.push(((**r).clone(), format!("drop left operand of {}", op.symbol())));
                        }
                    }
                    v
                })
            }
            7 => self.node_mutants(w, s, |e| match &e.kind {
                ExprKind::Call(name, args) => self
                    .functions
                    .iter()
                    .filter(|(f, n)| f != name && *n == args.len())
                    .map(|(f, _)| {
                        (
                            Expr::synth(ExprKind::Call(f.clone(), args.clone())),
                            format!("{name} -> {f}"),
                        )
                    })
                    .collect(),
                _ => Vec::new(),
            }),
            _ => Vec::new(),
        }
    }

    /// Source text of a mutant, in the same absolute-indent form as the
    /// original statement text.
    fn mutant_text(&self, w: &Walked, orig: &str, m: &Mutant) -> String {
        let want = print_stmt(&m.stmt);
        let ok = |t: &str| parse_stmt(t).map(|s| print_stmt(&s) == want).unwrap_or(false);
        let mut base = orig.to_string();
        if let (StmtKind::Decl { ty: a, .. }, StmtKind::Decl { ty: b, .. }) = (&w.ast.kind, &m.stmt.kind) {
            if a != b {
                base = format!("{b}{}", &orig[a.to_string().len()..]);
            }
        }
        if ok(&base) {
            return base;
        }
        if let Some((range, new)) = &m.site {
            if range.end <= base.len() {
                let printed = print_expr(new);
                let wrapped = format!("({printed})");
                // Keep the original grouping parentheses when there were some.
                let grouped = is_group(&base[range.clone()]);
                let order = if grouped { [wrapped, printed] } else { [printed, wrapped] };
                for text in order {
                    let mut t = base.clone();
                    t.replace_range(range.clone(), &text);
                    if ok(&t) {
                        return t;
                    }
                }
            }
        }
        let start = w.ast.span.start;
        let mut t = base.clone();
        let shift = t.len() as isize - orig.len() as isize;
        let pairs: Vec<(&Expr, &Expr)> = w.ast.own_exprs().into_iter().zip(m.stmt.own_exprs()).collect();
        for (old, new) in pairs.into_iter().rev() {
            let a = (old.span.start - start) as isize + shift;
            let b = (old.span.end - start) as isize + shift;
            t.replace_range(a as usize..b as usize, &print_expr(new));
        }
        if ok(&t) {
            return t;
        }
        indent_continuation(&want, &w.stmt.indent)
    }

    fn compound(&self, w: &Walked, orig: &str) -> Vec<(String, String)> {
        let rules: Vec<(u8, Vec<Mutant>)> = (1..=7)
            .map(|r| (r, self.ast_mutants(w, &w.ast, r)))
            .filter(|(_, m)| !m.is_empty())
            .take(2)
            .collect();
        if rules.len() < 2 {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for a in &rules[0].1 {
            for b in self.ast_mutants(w, &a.stmt, rules[1].0) {
                let m = Mutant {
                    stmt: b.stmt,
                    site: None,
                    desc: format!("R{}: {}; R{}: {}", rules[0].0, a.desc, rules[1].0, b.desc),
                };
                let text = self.mutant_text(w, orig, &m);
                if text != orig && seen.insert(text.clone()) {
                    out.push((text, m.desc));
                }
            }
        }
        out
    }

    fn is_related(&self, i: usize, j: usize) -> bool {
        let (a, b) = (&self.statements[i].id, &self.statements[j].id);
        let nested = |x: &StatementId, y: &StatementId| y.path.starts_with(&format!("{}/", x.path));
        i == j || a.file != b.file || nested(a, b) || nested(b, a)
    }

    /// Most similar other statement in the same file, earliest on ties.
    fn most_similar(&self, i: usize, allow_identical: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.statements.len() {
            if self.is_related(i, j) || (!allow_identical && self.text(i) == self.text(j)) {
                continue;
            }
            let s = jaccard(&self.tokens[i], &self.tokens[j]);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((j, s));
            }
        }
        best
    }

    fn candidates(&self, i: usize, rule: u8) -> Vec<Rewrite> {
        let w = &self.walked[i];
        let id = w.stmt.id.clone();
        let orig = self.text(i);
        let indent = w.stmt.indent.as_str();
        let rel = self.rel(i);
        let single = |desc: String, r: Replacement| Rewrite {
            description: desc,
            edits: vec![Edit {
                target: id.clone(),
                replacement: r,
            }],
        };
        let source = |desc: String, text: String| single(desc, Replacement::Source(text));
        match rule {
            1..=7 => {
                let mut seen = BTreeSet::new();
                self.ast_mutants(w, &w.ast, rule)
                    .into_iter()
                    .filter_map(|m| {
                        let text = self.mutant_text(w, orig, &m);
                        (text != orig && seen.insert(text.clone()))
                            .then(|| source(m.desc, dedent_continuation(&text, indent)))
                    })
                    .collect()
            }
            8 => self
                .compound(w, orig)
                .into_iter()
                .map(|(text, desc)| source(desc, dedent_continuation(&text, indent)))
                .collect(),
            9 => match self.most_similar(i, false) {
                Some((j, s)) if s >= SIMILARITY_THRESHOLD => {
                    vec![source(format!("replace with {}", self.statements[j].id), self.rel(j))]
                }
                _ => Vec::new(),
            },
            10 => {
                let k = w.index_in_block;
                let other = if k + 1 < w.siblings.len() {
                    k + 1
                } else if k > 0 {
                    k - 1
                } else {
                    return Vec::new();
                };
                let j = self.index[&w.siblings[other]];
                if self.text(j) == orig {
                    return Vec::new();
                }
                let dir = if other > k { "down" } else { "up" };
                vec![Rewrite {
                    description: format!("move statement {dir}"),
                    edits: vec![
                        Edit {
                            target: id.clone(),
                            replacement: Replacement::Source(self.rel(j)),
                        },
                        Edit {
                            target: w.siblings[other].clone(),
                            replacement: Replacement::Source(rel.clone()),
                        },
                    ],
                }]
            }
            11 => match self.most_similar(i, true) {
                Some((j, _)) => vec![source(
                    format!("insert copy of {}", self.statements[j].id),
                    format!("{}\n{rel}", self.rel(j)),
                )],
                None => Vec::new(),
            },
            12 => {
                let guard = self.nearest_bool(w).unwrap_or_else(|| "!true".into());
                vec![source(
                    format!("wrap in if ({guard})"),
                    format!("if ({guard}) {{\n{INDENT}{}\n}}", indent_continuation(&rel, INDENT)),
                )]
            }
            13..=16 => {
                let blocks = w.ast.blocks();
                let Some(first) = blocks.first() else {
                    return Vec::new();
                };
                let base = w.ast.span.start;
                match rule {
                    13 => {
                        let guard = self.nearest_bool(w).unwrap_or_else(|| "true".into());
                        let at = rel_offset(orig, indent, first.span.start - base + 1);
                        let mut text = rel.clone();
                        text.insert_str(
                            at,
                            &format!(
                                "\n{INDENT}if ({guard}) {{\n{INDENT}{INDENT}return{};\n{INDENT}}}",
                                default_return(w.fn_ret)
                            ),
                        );
                        vec![source(format!("insert guard if ({guard}) at block head"), text)]
                    }
                    14 => {
                        let Some(b) = blocks.iter().find(|b| !b.stmts.is_empty()) else {
                            return Vec::new();
                        };
                        let a = rel_offset(orig, indent, b.span.start - base);
                        let e = rel_offset(orig, indent, b.span.end - base);
                        let mut text = rel.clone();
                        text.replace_range(a..e, "{\n}");
                        vec![source("empty block body".into(), text)]
                    }
                    15 => {
                        let (Some(s0), Some(sn)) = (first.stmts.first(), first.stmts.last()) else {
                            return Vec::new();
                        };
                        let file = self.tree.get(&id.file).unwrap_or_default();
                        // The first child follows its parent in pre-order.
                        let child_indent = &self.statements[i + 1].indent;
                        let body = dedent_continuation(&file[s0.span.start..sn.span.end], child_indent);
                        vec![source("unwrap block".into(), body)]
                    }
                    _ => vec![single("remove block".into(), Replacement::Delete)],
                }
            }
            _ => Vec::new(),
        }
    }

    /// Rewrites that render to a parseable, changed file.
    fn valid(&self, rewrites: Vec<Rewrite>) -> Vec<Rewrite> {
        rewrites
            .into_iter()
            .filter(|rw| {
                let Ok(out) = render_edits(self.tree, &self.statements, &rw.edits) else {
                    return false;
                };
                let files: BTreeSet<&str> = rw.edits.iter().map(|e| e.target.file.as_str()).collect();
                files.iter().all(|f| {
                    let text = out.get(f).unwrap_or_default();
                    parse_file(f, text).is_ok()
                }) && files.iter().any(|f| out.get(f) != self.tree.get(f))
            })
            .collect()
    }
}

impl RuleCatalog for MiniLangCatalog<'_> {
    fn rewrites(&self, stmt: &Statement, rule: RuleId) -> Vec<Rewrite> {
        match self.index.get(&stmt.id) {
            Some(&i) => self.valid(self.candidates(i, rule.get())),
            None => Vec::new(),
        }
    }
}
