//! Name resolution and static type checking.

use std::collections::BTreeMap;

use crate::ast::*;
use crate::builtins::{builtin_signature, BUILTINS};
use crate::{DiagCode, Diagnostic, Program};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub params: Vec<Type>,
    pub ret: Type,
}

/// Every callable visible to the program: builtins plus user functions.
pub fn signatures(program: &Program) -> BTreeMap<String, Signature> {
    let mut out: BTreeMap<String, Signature> = BUILTINS
        .iter()
        .map(|b| {
            (
                b.name.to_string(),
                Signature {
                    params: b.params.to_vec(),
                    ret: b.ret,
                },
            )
        })
        .collect();
    for file in &program.files {
        for f in &file.functions {
            out.entry(f.name.clone()).or_insert_with(|| Signature {
                params: f.params.iter().map(|p| p.ty).collect(),
                ret: f.ret,
            });
        }
    }
    out
}

/// Returns every diagnostic, sorted by (file, line, column).
pub fn check(program: &Program) -> Vec<Diagnostic> {
    let sigs = signatures(program);
    let mut diags = Vec::new();
    let mut seen_fns: BTreeMap<&str, ()> = BTreeMap::new();
    for file in &program.files {
        for f in &file.functions {
            if builtin_signature(&f.name).is_some() || seen_fns.insert(&f.name, ()).is_some() {
                diags.push(Diagnostic::new(
                    DiagCode::DuplicateDeclaration,
                    format!("function `{}` is already defined", f.name),
                    &file.path,
                    f.span,
                ));
            }
            let mut cx = FnChecker {
                file: &file.path,
                sigs: &sigs,
                ret: f.ret,
                scopes: vec![Vec::new()],
                diags: &mut diags,
            };
            for p in &f.params {
                cx.declare(&p.name, p.ty, f.span);
            }
            cx.block_inner(&f.body);
            if f.ret != Type::Void && !block_returns(&f.body) {
                diags.push(Diagnostic::new(
                    DiagCode::MissingReturn,
                    format!("missing return statement in `{}`", f.name),
                    &file.path,
                    Span {
                        line: f.body.span.end_line,
                        col: 1,
                        ..f.body.span
                    },
                ));
            }
        }
    }
    diags.sort_by(|a, b| (&a.file, a.line, a.col).cmp(&(&b.file, b.line, b.col)));
    diags
}

/// Whether every path through the block ends in a `return`.
pub fn block_returns(b: &Block) -> bool {
    b.stmts.iter().any(stmt_returns)
}

fn stmt_returns(s: &Stmt) -> bool {
    match &s.kind {
        StmtKind::Return(_) => true,
        StmtKind::If {
            then_block,
            else_block: Some(eb),
            ..
        } => block_returns(then_block) && block_returns(eb),
        StmtKind::Block(b) => block_returns(b),
        _ => false,
    }
}

/// Static type of an expression; `Null` is compatible with every value type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Val(Type),
    Null,
}

impl Ty {
    fn fits(self, want: Type) -> bool {
        match self {
            Ty::Null => want != Type::Void,
            Ty::Val(t) => t == want,
        }
    }

    fn show(self) -> String {
        match self {
            Ty::Null => "null".into(),
            Ty::Val(t) => t.to_string(),
        }
    }
}

struct FnChecker<'a> {
    file: &'a str,
    sigs: &'a BTreeMap<String, Signature>,
    ret: Type,
    scopes: Vec<Vec<(String, Type)>>,
    diags: &'a mut Vec<Diagnostic>,
}

impl FnChecker<'_> {
    fn report(&mut self, code: DiagCode, msg: String, span: Span) {
        self.diags.push(Diagnostic::new(code, msg, self.file, span));
    }

    fn lookup(&self, name: &str) -> Option<Type> {
        self.scopes
            .iter()
            .rev()
            .flat_map(|s| s.iter().rev())
            .find(|(n, _)| n == name)
            .map(|(_, t)| *t)
    }

    fn declare(&mut self, name: &str, ty: Type, span: Span) {
        if self.lookup(name).is_some() {
            self.report(
                DiagCode::DuplicateDeclaration,
                format!("variable `{name}` is already defined"),
                span,
            );
            return;
        }
        self.scopes.last_mut().unwrap().push((name.to_string(), ty));
    }

    fn block(&mut self, b: &Block) {
        self.scopes.push(Vec::new());
        self.block_inner(b);
        self.scopes.pop();
    }

    fn block_inner(&mut self, b: &Block) {
        for s in &b.stmts {
            self.stmt(s);
        }
    }

    fn expect(&mut self, e: &Expr, want: Type, what: &str) {
        if let Some(got) = self.expr(e) {
            if !got.fits(want) {
                self.report(
                    DiagCode::TypeMismatch,
                    format!("{what}: expected `{want}`, found `{}`", got.show()),
                    e.span,
                );
            }
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Decl { ty, name, init } => {
                if let Some(e) = init {
                    self.expect(e, *ty, &format!("initializer of `{name}`"));
                }
                self.declare(name, *ty, s.span);
            }
            StmtKind::Assign { name, value } => match self.lookup(name) {
                Some(ty) => self.expect(value, ty, &format!("assignment to `{name}`")),
                None => {
                    self.report(
                        DiagCode::CannotFindSymbol,
                        format!("cannot find symbol: variable `{name}`"),
                        s.span,
                    );
                    self.expr(value);
                }
            },
            StmtKind::Call(e) => {
                self.expr(e);
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                self.expect(cond, Type::Bool, "if condition");
                self.block(then_block);
                if let Some(eb) = else_block {
                    self.block(eb);
                }
            }
            StmtKind::While { cond, body } => {
                self.expect(cond, Type::Bool, "while condition");
                self.block(body);
            }
            StmtKind::Return(value) => match (value, self.ret) {
                (None, Type::Void) => {}
                (None, ret) => self.report(
                    DiagCode::TypeMismatch,
                    format!("return without value in function returning `{ret}`"),
                    s.span,
                ),
                (Some(e), Type::Void) => {
                    self.expr(e);
                    self.report(
                        DiagCode::TypeMismatch,
                        "return with value in void function".into(),
                        s.span,
                    );
                }
                (Some(e), ret) => self.expect(e, ret, "return value"),
            },
            StmtKind::Block(b) => self.block(b),
        }
    }

    fn expr(&mut self, e: &Expr) -> Option<Ty> {
        match &e.kind {
            ExprKind::Int(_) => Some(Ty::Val(Type::Int)),
            ExprKind::Bool(_) => Some(Ty::Val(Type::Bool)),
            ExprKind::Str(_) => Some(Ty::Val(Type::Str)),
            ExprKind::Null => Some(Ty::Null),
            ExprKind::Var(name) => match self.lookup(name) {
                Some(t) => Some(Ty::Val(t)),
                None => {
                    self.report(
                        DiagCode::CannotFindSymbol,
                        format!("cannot find symbol: variable `{name}`"),
                        e.span,
                    );
                    None
                }
            },
            ExprKind::Unary(op, inner) => {
                let want = match op {
                    UnaryOp::Not => Type::Bool,
                    UnaryOp::Neg => Type::Int,
                };
                let got = self.expr(inner)?;
                if got != Ty::Val(want) {
                    self.report(
                        DiagCode::TypeMismatch,
                        format!(
                            "operator `{}` expects `{want}`, found `{}`",
                            op.symbol(),
                            got.show()
                        ),
                        e.span,
                    );
                    return None;
                }
                Some(Ty::Val(want))
            }
            ExprKind::Binary(op, l, r) => {
                let lt = self.expr(l);
                let rt = self.expr(r);
                let (lt, rt) = (lt?, rt?);
                let result = binary_result(*op, lt, rt);
                if result.is_none() {
                    self.report(
                        DiagCode::TypeMismatch,
                        format!(
                            "operator `{}` cannot be applied to `{}` and `{}`",
                            op.symbol(),
                            lt.show(),
                            rt.show()
                        ),
                        e.span,
                    );
                }
                result.map(Ty::Val)
            }
            ExprKind::Call(name, args) => {
                let Some(sig) = self.sigs.get(name).cloned() else {
                    self.report(
                        DiagCode::CannotFindSymbol,
                        format!("cannot find symbol: function `{name}`"),
                        e.span,
                    );
                    for a in args {
                        self.expr(a);
                    }
                    return None;
                };
                if sig.params.len() != args.len() {
                    self.report(
                        DiagCode::WrongArgumentCount,
                        format!(
                            "`{name}` takes {} argument(s), {} supplied",
                            sig.params.len(),
                            args.len()
                        ),
                        e.span,
                    );
                    for a in args {
                        self.expr(a);
                    }
                } else {
                    for (i, (a, want)) in args.iter().zip(&sig.params).enumerate() {
                        self.expect(a, *want, &format!("argument {} of `{name}`", i + 1));
                    }
                }
                Some(Ty::Val(sig.ret))
            }
        }
    }
}

fn binary_result(op: BinaryOp, l: Ty, r: Ty) -> Option<Type> {
    use BinaryOp::*;
    match op {
        Add => match (l, r) {
            (Ty::Val(Type::Int), Ty::Val(Type::Int)) => Some(Type::Int),
            (Ty::Val(Type::Str), Ty::Val(Type::Str)) => Some(Type::Str),
            _ => None,
        },
        Sub | Mul | Div | Rem => {
            (l == Ty::Val(Type::Int) && r == Ty::Val(Type::Int)).then_some(Type::Int)
        }
        Lt | Le | Gt | Ge => {
            (l == Ty::Val(Type::Int) && r == Ty::Val(Type::Int)).then_some(Type::Bool)
        }
        Eq | Ne => {
            let ok = match (l, r) {
                (Ty::Null, Ty::Null) => true,
                (Ty::Null, Ty::Val(t)) | (Ty::Val(t), Ty::Null) => t != Type::Void,
                (Ty::Val(a), Ty::Val(b)) => a == b && a != Type::Void,
            };
            ok.then_some(Type::Bool)
        }
        And | Or => {
            (l == Ty::Val(Type::Bool) && r == Ty::Val(Type::Bool)).then_some(Type::Bool)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Program;

    fn diags(src: &str) -> Vec<Diagnostic> {
        let p = Program::parse(vec![("main.ml".to_string(), src.to_string())]).unwrap();
        check(&p)
    }

    fn codes(src: &str) -> Vec<DiagCode> {
        diags(src).into_iter().map(|d| d.code).collect()
    }

    #[test]
    fn well_typed_program_is_clean() {
        let src = "int f(int a) {\n    str s = \"x\";\n    if (a > 0 && len(s) == 1) {\n        return a;\n    } else {\n        return 0 - a;\n    }\n}\n";
        assert!(codes(src).is_empty(), "{:?}", diags(src));
    }

    #[test]
    fn undeclared_name_is_cannot_find_symbol() {
        let d = diags("int f() {\n    return y + 1;\n}\n");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, DiagCode::CannotFindSymbol);
        assert_eq!(d[0].code.as_str(), "cannot find symbol");
        assert_eq!(d[0].line, 2);
    }

    #[test]
    fn bool_added_to_int_is_type_mismatch() {
        let src = "int f() {\n    bool x = 1;\n    return x + 2;\n}\n";
        assert_eq!(codes(src), vec![DiagCode::TypeMismatch, DiagCode::TypeMismatch]);
    }

    #[test]
    fn missing_return_detected() {
        assert_eq!(
            codes("int f(bool b) {\n    if (b) {\n        return 1;\n    }\n}\n"),
            vec![DiagCode::MissingReturn]
        );
        assert!(codes("int f(bool b) {\n    if (b) {\n        return 1;\n    } else {\n        return 2;\n    }\n}\n").is_empty());
    }

    #[test]
    fn redeclaration_and_arity() {
        assert_eq!(
            codes("void f() {\n    int x = 1;\n    int x = 2;\n}\n"),
            vec![DiagCode::DuplicateDeclaration]
        );
        assert_eq!(
            codes("void f() {\n    assert(true);\n}\n"),
            vec![DiagCode::WrongArgumentCount]
        );
    }

    #[test]
    fn null_compares_but_does_not_add() {
        assert!(codes("bool f(str s) {\n    return s != null;\n}\n").is_empty());
        assert_eq!(
            codes("int f() {\n    return null + 1;\n}\n"),
            vec![DiagCode::TypeMismatch]
        );
    }

    #[test]
    fn block_scoped_declarations_do_not_leak() {
        assert_eq!(
            codes("int f() {\n    if (true) {\n        int x = 1;\n    }\n    return x;\n}\n"),
            vec![DiagCode::CannotFindSymbol]
        );
    }
}
