//! Recursive-descent parser producing a span-annotated AST.

use crate::ast::*;
use crate::lexer::{tokenize, Token, TokenKind};
use crate::ParseError;

pub fn parse_file(path: &str, src: &str) -> Result<SourceFile, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        src_len: src.len(),
    };
    let mut functions = Vec::new();
    while !p.at_end() {
        functions.push(p.function()?);
    }
    Ok(SourceFile {
        path: path.to_string(),
        functions,
    })
}

/// Parses a single statement, e.g. for checking a synthesized rewrite.
pub fn parse_stmt(src: &str) -> Result<Stmt, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        src_len: src.len(),
    };
    let stmt = p.stmt()?;
    if !p.at_end() {
        return Err(p.error_here("trailing tokens after statement"));
    }
    Ok(stmt)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    src_len: usize,
}

impl Parser {
    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn peek(&self) -> Option<&TokenKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn peek_at(&self, off: usize) -> Option<&TokenKind> {
        self.tokens.get(self.pos + off).map(|t| &t.kind)
    }

    fn error_here(&self, msg: impl Into<String>) -> ParseError {
        let (line, col) = match self.tokens.get(self.pos) {
            Some(t) => (t.line, t.col),
            None => self
                .tokens
                .last()
                .map(|t| (t.line, t.col + (t.end - t.start) as u32))
                .unwrap_or((1, 1)),
        };
        ParseError {
            line,
            col,
            message: msg.into(),
        }
    }

    fn bump(&mut self) -> Result<Token, ParseError> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.error_here("unexpected end of input"))?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect(&mut self, kind: TokenKind) -> Result<Token, ParseError> {
        match self.peek() {
            Some(k) if *k == kind => self.bump(),
            Some(k) => {
                let found = k.text();
                Err(self.error_here(format!("expected `{}`, found `{}`", kind.text(), found)))
            }
            None => Err(self.error_here(format!("expected `{}`, found end of input", kind.text()))),
        }
    }

    fn ident(&mut self) -> Result<(String, Token), ParseError> {
        match self.peek() {
            Some(TokenKind::Ident(name)) => {
                let name = name.clone();
                Ok((name, self.bump()?))
            }
            _ => Err(self.error_here("expected identifier")),
        }
    }

    fn prev_end(&self) -> (usize, u32) {
        let t = &self.tokens[self.pos - 1];
        (t.end, t.line)
    }

    fn span_from(&self, first: &Token) -> Span {
        let (end, end_line) = self.prev_end();
        Span {
            start: first.start,
            end: end.min(self.src_len),
            line: first.line,
            end_line,
            col: first.col,
        }
    }

    fn value_type(&mut self) -> Option<Type> {
        let ty = match self.peek()? {
            TokenKind::KwInt => Type::Int,
            TokenKind::KwBool => Type::Bool,
            TokenKind::KwStr => Type::Str,
            _ => return None,
        };
        self.pos += 1;
        Some(ty)
    }

    fn function(&mut self) -> Result<Function, ParseError> {
        let first = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.error_here("expected function"))?;
        let ret = if self.peek() == Some(&TokenKind::KwVoid) {
            self.pos += 1;
            Type::Void
        } else {
            self.value_type()
                .ok_or_else(|| self.error_here("expected function return type"))?
        };
        let (name, _) = self.ident()?;
        self.expect(TokenKind::LParen)?;
        let mut params = Vec::new();
        if self.peek() != Some(&TokenKind::RParen) {
            loop {
                let ty = self
                    .value_type()
                    .ok_or_else(|| self.error_here("expected parameter type"))?;
                let (pname, _) = self.ident()?;
                params.push(Param { ty, name: pname });
                if self.peek() == Some(&TokenKind::Comma) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect(TokenKind::RParen)?;
        let body = self.block()?;
        Ok(Function {
            ret,
            name,
            params,
            body,
            span: self.span_from(&first),
        })
    }

    fn block(&mut self) -> Result<Block, ParseError> {
        let open = self.expect(TokenKind::LBrace)?;
        let mut stmts = Vec::new();
        while self.peek() != Some(&TokenKind::RBrace) {
            if self.at_end() {
                return Err(self.error_here("unclosed block"));
            }
            stmts.push(self.stmt()?);
        }
        self.bump()?;
        Ok(Block {
            stmts,
            span: self.span_from(&open),
        })
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let first = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.error_here("expected statement"))?;
        let kind = match &first.kind {
            TokenKind::KwInt | TokenKind::KwBool | TokenKind::KwStr => {
                let ty = self.value_type().unwrap();
                let (name, _) = self.ident()?;
                let init = if self.peek() == Some(&TokenKind::Assign) {
                    self.pos += 1;
                    Some(self.expr()?)
                } else {
                    None
                };
                self.expect(TokenKind::Semi)?;
                StmtKind::Decl { ty, name, init }
            }
            TokenKind::KwIf => {
                self.pos += 1;
                self.expect(TokenKind::LParen)?;
                let cond = self.expr()?;
                self.expect(TokenKind::RParen)?;
                let then_block = self.block()?;
                let else_block = if self.peek() == Some(&TokenKind::KwElse) {
                    self.pos += 1;
                    Some(self.block()?)
                } else {
                    None
                };
                StmtKind::If {
                    cond,
                    then_block,
                    else_block,
                }
            }
            TokenKind::KwWhile => {
                self.pos += 1;
                self.expect(TokenKind::LParen)?;
                let cond = self.expr()?;
                self.expect(TokenKind::RParen)?;
                let body = self.block()?;
                StmtKind::While { cond, body }
            }
            TokenKind::KwReturn => {
                self.pos += 1;
                let value = if self.peek() == Some(&TokenKind::Semi) {
                    None
                } else {
                    Some(self.expr()?)
                };
                self.expect(TokenKind::Semi)?;
                StmtKind::Return(value)
            }
            TokenKind::LBrace => StmtKind::Block(self.block()?),
            TokenKind::Ident(name) => {
                let name = name.clone();
                match self.peek_at(1) {
                    Some(TokenKind::Assign) => {
                        self.pos += 2;
                        let value = self.expr()?;
                        self.expect(TokenKind::Semi)?;
                        StmtKind::Assign { name, value }
                    }
                    Some(TokenKind::LParen) => {
                        let call = self.expr()?;
                        if !matches!(call.kind, ExprKind::Call(..)) {
                            return Err(self.error_here("expression statement must be a call"));
                        }
                        self.expect(TokenKind::Semi)?;
                        StmtKind::Call(call)
                    }
                    _ => {
                        self.pos += 1;
                        return Err(self.error_here("expected `=` or `(` after identifier"));
                    }
                }
            }
            other => {
                let found = other.text();
                return Err(self.error_here(format!("unexpected `{found}` at start of statement")));
            }
        };
        Ok(Stmt {
            kind,
            span: self.span_from(&first),
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.binary(1)
    }

    fn binary_op(&self) -> Option<BinaryOp> {
        Some(match self.peek()? {
            TokenKind::Plus => BinaryOp::Add,
            TokenKind::Minus => BinaryOp::Sub,
            TokenKind::Star => BinaryOp::Mul,
            TokenKind::Slash => BinaryOp::Div,
            TokenKind::Percent => BinaryOp::Rem,
            TokenKind::Lt => BinaryOp::Lt,
            TokenKind::Le => BinaryOp::Le,
            TokenKind::Gt => BinaryOp::Gt,
            TokenKind::Ge => BinaryOp::Ge,
            TokenKind::EqEq => BinaryOp::Eq,
            TokenKind::NotEq => BinaryOp::Ne,
            TokenKind::AndAnd => BinaryOp::And,
            TokenKind::OrOr => BinaryOp::Or,
            _ => return None,
        })
    }

    // Precedence climbing, all binary operators left-associative.
    fn binary(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let first = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.error_here("expected expression"))?;
        let mut lhs = self.unary()?;
        while let Some(op) = self.binary_op() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.binary(prec + 1)?;
            lhs = Expr {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                span: self.span_from(&first),
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        let first = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.error_here("expected expression"))?;
        let op = match self.peek() {
            Some(TokenKind::Bang) => UnaryOp::Not,
            Some(TokenKind::Minus) => UnaryOp::Neg,
            _ => return self.primary(),
        };
        self.pos += 1;
        let operand = self.unary()?;
        Ok(Expr {
            kind: ExprKind::Unary(op, Box::new(operand)),
            span: self.span_from(&first),
        })
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let tok = self.bump()?;
        let kind = match &tok.kind {
            TokenKind::Int(n) => ExprKind::Int(*n),
            TokenKind::Str(s) => ExprKind::Str(s.clone()),
            TokenKind::KwTrue => ExprKind::Bool(true),
            TokenKind::KwFalse => ExprKind::Bool(false),
            TokenKind::KwNull => ExprKind::Null,
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect(TokenKind::RParen)?;
                return Ok(Expr {
                    kind: inner.kind,
                    span: self.span_from(&tok),
                });
            }
            TokenKind::Ident(name) => {
                let name = name.clone();
                if self.peek() == Some(&TokenKind::LParen) {
                    self.pos += 1;
                    let mut args = Vec::new();
                    if self.peek() != Some(&TokenKind::RParen) {
                        loop {
                            args.push(self.expr()?);
                            if self.peek() == Some(&TokenKind::Comma) {
                                self.pos += 1;
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(TokenKind::RParen)?;
                    ExprKind::Call(name, args)
                } else {
                    ExprKind::Var(name)
                }
            }
            other => {
                let found = other.text();
                self.pos -= 1;
                return Err(self.error_here(format!("expected expression, found `{found}`")));
            }
        };
        Ok(Expr {
            kind,
            span: self.span_from(&tok),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_function_with_nested_blocks() {
        let src = "int f(int a, bool b) {\n    int x = a + 1;\n    if (b) {\n        x = x * 2;\n    } else {\n        g(x, 1);\n    }\n    return x;\n}\n";
        let file = parse_file("f.ml", src).unwrap();
        let f = &file.functions[0];
        assert_eq!(f.name, "f");
        assert_eq!(f.params.len(), 2);
        assert_eq!(f.body.stmts.len(), 3);
        let if_stmt = &f.body.stmts[1];
        assert_eq!((if_stmt.span.line, if_stmt.span.end_line), (3, 7));
        assert_eq!(&src[if_stmt.span.start..if_stmt.span.end].lines().count(), &5);
        assert!(src[if_stmt.span.start..if_stmt.span.end].ends_with('}'));
    }

    #[test]
    fn precedence_and_associativity() {
        let s = parse_stmt("x = 1 - 2 - 3 * 4 < 5 && !y || z;").unwrap();
        let StmtKind::Assign { value, .. } = s.kind else {
            panic!()
        };
        let ExprKind::Binary(BinaryOp::Or, lhs, _) = value.kind else {
            panic!()
        };
        let ExprKind::Binary(BinaryOp::And, cmp, _) = lhs.kind else {
            panic!()
        };
        let ExprKind::Binary(BinaryOp::Lt, sub, _) = cmp.kind else {
            panic!()
        };
        // (1 - 2) - (3 * 4)
        let ExprKind::Binary(BinaryOp::Sub, left, right) = sub.kind else {
            panic!()
        };
        assert!(matches!(left.kind, ExprKind::Binary(BinaryOp::Sub, ..)));
        assert!(matches!(right.kind, ExprKind::Binary(BinaryOp::Mul, ..)));
    }

    #[test]
    fn rejects_non_call_expression_statement() {
        assert!(parse_stmt("x;").is_err());
        assert!(parse_stmt("1 + 2;").is_err());
    }

    #[test]
    fn reports_error_location() {
        let err = parse_file("bad.ml", "void f() {\n    int = 3;\n}\n").unwrap_err();
        assert_eq!(err.line, 2);
    }

    #[test]
    fn empty_file_has_no_functions() {
        assert!(parse_file("e.ml", "").unwrap().functions.is_empty());
        assert!(parse_file("e.ml", "// only a comment\n").unwrap().functions.is_empty());
    }
}
