//! Canonical pretty-printer. `parse(print(x))` yields `x` back, spans aside.

use crate::ast::*;

pub const INDENT: &str = "    ";

pub fn print_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e, 0);
    out
}

// `ctx` is the minimum precedence the surrounding context accepts without parens.
fn write_expr(out: &mut String, e: &Expr, ctx: u8) {
    match &e.kind {
        ExprKind::Int(n) => {
            // A negative literal only arises from synthesized code; keep it re-parseable.
            if *n < 0 {
                out.push('(');
                out.push_str(&n.to_string());
                out.push(')');
            } else {
                out.push_str(&n.to_string());
            }
        }
        ExprKind::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        ExprKind::Str(s) => write_str_literal(out, s),
        ExprKind::Null => out.push_str("null"),
        ExprKind::Var(v) => out.push_str(v),
        ExprKind::Unary(op, inner) => {
            out.push_str(op.symbol());
            let wrap = matches!(inner.kind, ExprKind::Binary(..))
                || (matches!(inner.kind, ExprKind::Int(n) if n < 0));
            if wrap {
                out.push('(');
                write_expr(out, inner, 0);
                out.push(')');
            } else {
                write_expr(out, inner, u8::MAX);
            }
        }
        ExprKind::Binary(op, lhs, rhs) => {
            let prec = op.precedence();
            let wrap = prec < ctx;
            if wrap {
                out.push('(');
            }
            write_expr(out, lhs, prec);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_expr(out, rhs, prec + 1);
            if wrap {
                out.push(')');
            }
        }
        ExprKind::Call(name, args) => {
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, a, 0);
            }
            out.push(')');
        }
    }
}

fn write_str_literal(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Prints a statement. The first line carries no indentation; continuation
/// lines are indented relative to column zero of the statement.
pub fn print_stmt(s: &Stmt) -> String {
    let mut out = String::new();
    write_stmt(&mut out, s, 0);
    out
}

fn push_indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str(INDENT);
    }
}

fn write_block(out: &mut String, b: &Block, depth: usize) {
    out.push('{');
    out.push('\n');
    for s in &b.stmts {
        push_indent(out, depth + 1);
        write_stmt(out, s, depth + 1);
        out.push('\n');
    }
    push_indent(out, depth);
    out.push('}');
}

fn write_stmt(out: &mut String, s: &Stmt, depth: usize) {
    match &s.kind {
        StmtKind::Decl { ty, name, init } => {
            out.push_str(&format!("{ty} {name}"));
            if let Some(e) = init {
                out.push_str(" = ");
                write_expr(out, e, 0);
            }
            out.push(';');
        }
        StmtKind::Assign { name, value } => {
            out.push_str(name);
            out.push_str(" = ");
            write_expr(out, value, 0);
            out.push(';');
        }
        StmtKind::Call(e) => {
            write_expr(out, e, 0);
            out.push(';');
        }
        StmtKind::If {
            cond,
            then_block,
            else_block,
        } => {
            out.push_str("if (");
            write_expr(out, cond, 0);
            out.push_str(") ");
            write_block(out, then_block, depth);
            if let Some(eb) = else_block {
                out.push_str(" else ");
                write_block(out, eb, depth);
            }
        }
        StmtKind::While { cond, body } => {
            out.push_str("while (");
            write_expr(out, cond, 0);
            out.push_str(") ");
            write_block(out, body, depth);
        }
        StmtKind::Return(e) => {
            out.push_str("return");
            if let Some(e) = e {
                out.push(' ');
                write_expr(out, e, 0);
            }
            out.push(';');
        }
        StmtKind::Block(b) => write_block(out, b, depth),
    }
}

pub fn print_function(f: &Function) -> String {
    let mut out = format!("{} {}(", f.ret, f.name);
    for (i, p) in f.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&format!("{} {}", p.ty, p.name));
    }
    out.push_str(") ");
    write_block(&mut out, &f.body, 0);
    out.push('\n');
    out
}

pub fn print_file(f: &SourceFile) -> String {
    f.functions
        .iter()
        .map(print_function)
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_file, parse_stmt};

    #[test]
    fn canonical_source_prints_back_unchanged() {
        let src = "int f(int a, bool b) {\n    int x = (a + 1) * 2;\n    if (!(x < 3) && b) {\n        x = x - (1 - a);\n    } else {\n        g(x, \"q\\\"\");\n    }\n    while (x > 0) {\n        x = x / 2;\n    }\n    return -x;\n}\n";
        let file = parse_file("f.ml", src).unwrap();
        assert_eq!(print_file(&file), src);
    }

    #[test]
    fn negation_wraps_binary_operand() {
        let s = parse_stmt("if (a && b) { }").unwrap();
        let StmtKind::If { cond, .. } = s.kind else {
            panic!()
        };
        let neg = Expr::synth(ExprKind::Unary(UnaryOp::Not, Box::new(cond)));
        assert_eq!(print_expr(&neg), "!(a && b)");
    }

    #[test]
    fn nested_blocks_indent_relative_to_statement() {
        let s = parse_stmt("while (x) { if (y) { f(); } }").unwrap();
        assert_eq!(
            print_stmt(&s),
            "while (x) {\n    if (y) {\n        f();\n    }\n}"
        );
    }
}
