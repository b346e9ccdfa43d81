//! Tree-walking interpreter for test functions.
//!
//! Semantics are deterministic; the only non-semantic input is the wall-clock
//! deadline that turns runaway tests into timeouts.

use std::collections::HashMap;
use std::rc::Rc;
use std::time::{Duration, Instant};

use crate::ast::*;
use crate::Program;

/// Deepest call nesting before a `stack overflow` fault.
pub const MAX_CALL_DEPTH: usize = 200;

const DEADLINE_CHECK_INTERVAL: u64 = 512;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Str(Rc<str>),
    Null,
    Void,
}

/// Result of running one test function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TestResult {
    Pass,
    /// `assert` evaluated to false; carries the assertion message.
    AssertionFailed(String),
    /// Runtime fault such as `null access` or `division by zero`.
    Fault(String),
    Timeout,
}

impl TestResult {
    pub fn is_pass(&self) -> bool {
        matches!(self, TestResult::Pass)
    }
}

enum Abort {
    Assertion(String),
    Fault(&'static str),
    Timeout,
}

enum Flow {
    Normal,
    Return(Value),
}

/// Runs a zero-argument function and classifies the result. The program is
/// expected to have passed [`crate::check`].
pub fn run_test(program: &Program, name: &str, timeout: Duration) -> TestResult {
    let mut functions = HashMap::new();
    for file in &program.files {
        for f in &file.functions {
            functions.entry(f.name.as_str()).or_insert(f);
        }
    }
    let Some(entry) = functions.get(name).copied() else {
        return TestResult::Fault("unknown test".into());
    };
    let mut it = Interp {
        functions,
        deadline: Instant::now() + timeout,
        steps: 0,
        depth: 0,
    };
    match it.call(entry, Vec::new()) {
        Ok(_) => TestResult::Pass,
        Err(Abort::Assertion(msg)) => TestResult::AssertionFailed(msg),
        Err(Abort::Fault(f)) => TestResult::Fault(f.to_string()),
        Err(Abort::Timeout) => TestResult::Timeout,
    }
}

struct Interp<'p> {
    functions: HashMap<&'p str, &'p Function>,
    deadline: Instant,
    steps: u64,
    depth: usize,
}

struct Frame {
    scopes: Vec<Vec<(String, Value)>>,
}

impl Frame {
    fn get(&self, name: &str) -> Option<&Value> {
        self.scopes
            .iter()
            .rev()
            .flat_map(|s| s.iter().rev())
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
    }

    fn set(&mut self, name: &str, value: Value) {
        for scope in self.scopes.iter_mut().rev() {
            if let Some(slot) = scope.iter_mut().rev().find(|(n, _)| n == name) {
                slot.1 = value;
                return;
            }
        }
    }
}

type Eval<T> = Result<T, Abort>;

impl<'p> Interp<'p> {
    fn tick(&mut self) -> Eval<()> {
        self.steps += 1;
        if self.steps.is_multiple_of(DEADLINE_CHECK_INTERVAL) && Instant::now() >= self.deadline {
            return Err(Abort::Timeout);
        }
        Ok(())
    }

    fn call(&mut self, f: &'p Function, args: Vec<Value>) -> Eval<Value> {
        if self.depth >= MAX_CALL_DEPTH {
            return Err(Abort::Fault("stack overflow"));
        }
        self.depth += 1;
        let mut frame = Frame {
            scopes: vec![f
                .params
                .iter()
                .map(|p| p.name.clone())
                .zip(args)
                .collect()],
        };
        let flow = self.block(&mut frame, &f.body);
        self.depth -= 1;
        match flow? {
            Flow::Return(v) => Ok(v),
            Flow::Normal if f.ret == Type::Void => Ok(Value::Void),
            Flow::Normal => Err(Abort::Fault("missing return")),
        }
    }

    fn block(&mut self, frame: &mut Frame, b: &'p Block) -> Eval<Flow> {
        frame.scopes.push(Vec::new());
        let mut result = Ok(Flow::Normal);
        for s in &b.stmts {
            match self.stmt(frame, s) {
                Ok(Flow::Normal) => {}
                other => {
                    result = other;
                    break;
                }
            }
        }
        frame.scopes.pop();
        result
    }

    fn stmt(&mut self, frame: &mut Frame, s: &'p Stmt) -> Eval<Flow> {
        self.tick()?;
        match &s.kind {
            StmtKind::Decl { name, init, .. } => {
                let v = match init {
                    Some(e) => self.expr(frame, e)?,
                    None => Value::Null,
                };
                frame.scopes.last_mut().unwrap().push((name.clone(), v));
            }
            StmtKind::Assign { name, value } => {
                let v = self.expr(frame, value)?;
                frame.set(name, v);
            }
            StmtKind::Call(e) => {
                self.expr(frame, e)?;
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                if self.truthy(frame, cond)? {
                    return self.block(frame, then_block);
                } else if let Some(eb) = else_block {
                    return self.block(frame, eb);
                }
            }
            StmtKind::While { cond, body } => {
                while self.truthy(frame, cond)? {
                    if let Flow::Return(v) = self.block(frame, body)? {
                        return Ok(Flow::Return(v));
                    }
                    self.tick()?;
                }
            }
            StmtKind::Return(e) => {
                let v = match e {
                    Some(e) => self.expr(frame, e)?,
                    None => Value::Void,
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::Block(b) => return self.block(frame, b),
        }
        Ok(Flow::Normal)
    }

    fn truthy(&mut self, frame: &mut Frame, e: &'p Expr) -> Eval<bool> {
        match self.expr(frame, e)? {
            Value::Bool(b) => Ok(b),
            Value::Null => Err(Abort::Fault("null access")),
            _ => Err(Abort::Fault("type error")),
        }
    }

    fn int(v: Value) -> Eval<i64> {
        match v {
            Value::Int(n) => Ok(n),
            Value::Null => Err(Abort::Fault("null access")),
            _ => Err(Abort::Fault("type error")),
        }
    }

    fn string(v: Value) -> Eval<Rc<str>> {
        match v {
            Value::Str(s) => Ok(s),
            Value::Null => Err(Abort::Fault("null access")),
            _ => Err(Abort::Fault("type error")),
        }
    }

    fn boolean(v: Value) -> Eval<bool> {
        match v {
            Value::Bool(b) => Ok(b),
            Value::Null => Err(Abort::Fault("null access")),
            _ => Err(Abort::Fault("type error")),
        }
    }

    fn expr(&mut self, frame: &mut Frame, e: &'p Expr) -> Eval<Value> {
        Ok(match &e.kind {
            ExprKind::Int(n) => Value::Int(*n),
            ExprKind::Bool(b) => Value::Bool(*b),
            ExprKind::Str(s) => Value::Str(Rc::from(s.as_str())),
            ExprKind::Null => Value::Null,
            ExprKind::Var(name) => frame
                .get(name)
                .cloned()
                .ok_or(Abort::Fault("unbound variable"))?,
            ExprKind::Unary(op, inner) => {
                let v = self.expr(frame, inner)?;
                match op {
                    UnaryOp::Not => Value::Bool(!Self::boolean(v)?),
                    UnaryOp::Neg => Value::Int(
                        Self::int(v)?
                            .checked_neg()
                            .ok_or(Abort::Fault("integer overflow"))?,
                    ),
                }
            }
            ExprKind::Binary(op, l, r) => self.binary(frame, *op, l, r)?,
            ExprKind::Call(name, args) => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.expr(frame, a)?);
                }
                self.tick()?;
                match self.functions.get(name.as_str()).copied() {
                    Some(f) => self.call(f, vals)?,
                    None => self.builtin(name, vals)?,
                }
            }
        })
    }

    fn binary(&mut self, frame: &mut Frame, op: BinaryOp, l: &'p Expr, r: &'p Expr) -> Eval<Value> {
        use BinaryOp::*;
        // Short-circuit first.
        if matches!(op, And | Or) {
            let lv = Self::boolean(self.expr(frame, l)?)?;
            if (op == And && !lv) || (op == Or && lv) {
                return Ok(Value::Bool(lv));
            }
            return Ok(Value::Bool(Self::boolean(self.expr(frame, r)?)?));
        }
        let lv = self.expr(frame, l)?;
        let rv = self.expr(frame, r)?;
        if matches!(op, Eq | Ne) {
            let eq = lv == rv;
            return Ok(Value::Bool(if op == Eq { eq } else { !eq }));
        }
        if op == Add {
            if let (Value::Str(a), Value::Str(b)) = (&lv, &rv) {
                let mut s = String::with_capacity(a.len() + b.len());
                s.push_str(a);
                s.push_str(b);
                return Ok(Value::Str(Rc::from(s)));
            }
        }
        let a = Self::int(lv)?;
        let b = Self::int(rv)?;
        let overflow = Abort::Fault("integer overflow");
        Ok(match op {
            Add => Value::Int(a.checked_add(b).ok_or(overflow)?),
            Sub => Value::Int(a.checked_sub(b).ok_or(overflow)?),
            Mul => Value::Int(a.checked_mul(b).ok_or(overflow)?),
            Div | Rem => {
                if b == 0 {
                    return Err(Abort::Fault("division by zero"));
                }
                let r = if op == Div {
                    a.checked_div(b)
                } else {
                    a.checked_rem(b)
                };
                Value::Int(r.ok_or(overflow)?)
            }
            Lt => Value::Bool(a < b),
            Le => Value::Bool(a <= b),
            Gt => Value::Bool(a > b),
            Ge => Value::Bool(a >= b),
            Eq | Ne | And | Or => unreachable!(),
        })
    }

    fn builtin(&mut self, name: &str, args: Vec<Value>) -> Eval<Value> {
        let mut it = args.into_iter();
        let mut next = || it.next().unwrap_or(Value::Void);
        Ok(match name {
            "assert" => {
                let cond = Self::boolean(next())?;
                let msg = match next() {
                    Value::Str(s) => s.to_string(),
                    _ => "assertion failed".to_string(),
                };
                if !cond {
                    return Err(Abort::Assertion(msg));
                }
                Value::Void
            }
            "len" => Value::Int(Self::string(next())?.chars().count() as i64),
            "char_at" => {
                let s = Self::string(next())?;
                let i = Self::int(next())?;
                let c = usize::try_from(i)
                    .ok()
                    .and_then(|i| s.chars().nth(i))
                    .ok_or(Abort::Fault("out of bounds"))?;
                Value::Str(Rc::from(c.to_string()))
            }
            "to_str" => Value::Str(Rc::from(Self::int(next())?.to_string())),
            "abs" => Value::Int(
                Self::int(next())?
                    .checked_abs()
                    .ok_or(Abort::Fault("integer overflow"))?,
            ),
            _ => return Err(Abort::Fault("unknown function")),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(src: &str, test: &str) -> TestResult {
        let p = Program::parse(vec![("t.ml".into(), src.into())]).unwrap();
        assert!(crate::check(&p).is_empty(), "{:?}", crate::check(&p));
        run_test(&p, test, Duration::from_secs(2))
    }

    #[test]
    fn passing_and_failing_assertions() {
        let src = "int sq(int x) {\n    return x * x;\n}\nvoid test_ok() {\n    assert(sq(3) == 9, \"nine\");\n}\nvoid test_bad() {\n    assert(sq(3) == 10, \"ten\");\n}\n";
        assert_eq!(run(src, "test_ok"), TestResult::Pass);
        assert_eq!(run(src, "test_bad"), TestResult::AssertionFailed("ten".into()));
    }

    #[test]
    fn runtime_faults() {
        let src = "void test_null() {\n    str s;\n    int n = len(s);\n}\nvoid test_div() {\n    int z = 0;\n    int q = 1 / z;\n}\nvoid test_oob() {\n    str c = char_at(\"ab\", 2);\n}\nvoid test_ovf() {\n    int big = 9223372036854775807;\n    big = big + 1;\n}\n";
        assert_eq!(run(src, "test_null"), TestResult::Fault("null access".into()));
        assert_eq!(run(src, "test_div"), TestResult::Fault("division by zero".into()));
        assert_eq!(run(src, "test_oob"), TestResult::Fault("out of bounds".into()));
        assert_eq!(run(src, "test_ovf"), TestResult::Fault("integer overflow".into()));
    }

    #[test]
    fn null_equality_is_not_a_fault() {
        let src = "void test_guard() {\n    str s;\n    if (s != null) {\n        int n = len(s);\n    }\n    assert(s == null, \"still null\");\n}\n";
        assert_eq!(run(src, "test_guard"), TestResult::Pass);
    }

    #[test]
    fn infinite_loop_times_out_within_twice_the_limit() {
        let p = Program::parse(vec![(
            "t.ml".into(),
            "void test_spin() {\n    int i = 0;\n    while (true) {\n        i = i + 0;\n    }\n}\n".into(),
        )])
        .unwrap();
        let limit = Duration::from_millis(150);
        let t0 = Instant::now();
        assert_eq!(run_test(&p, "test_spin", limit), TestResult::Timeout);
        assert!(t0.elapsed() < limit * 2, "took {:?}", t0.elapsed());
    }

    #[test]
    fn unbounded_recursion_is_stack_overflow() {
        let src = "int down(int n) {\n    return down(n + 1);\n}\nvoid test_rec() {\n    int x = down(0);\n}\n";
        assert_eq!(run(src, "test_rec"), TestResult::Fault("stack overflow".into()));
    }

    #[test]
    fn short_circuit_skips_faulting_operand() {
        let src = "void test_sc() {\n    str s;\n    bool ok = s == null || len(s) > 0;\n    assert(ok, \"sc\");\n}\n";
        assert_eq!(run(src, "test_sc"), TestResult::Pass);
    }
}
