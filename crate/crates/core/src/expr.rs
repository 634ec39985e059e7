//! Arithmetic expressions over state and disturbance variables.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := NUMBER | 'pi' | VAR | FUNC '(' expr (',' expr)* ')' | '(' expr ')'
//! VAR    := x<k> | w<k> | xh<k> | wh<k>     (1-based; xh/wh only in decomposition forms)
//! FUNC   := sin | cos | tan | exp | abs | sqrt | min | max
//! ```
//!
//! `^` binds tighter than unary minus (`-x1^2 = -(x1^2)`) and is
//! right-associative. Parsed expressions are compiled to a postfix program
//! for evaluation.

use std::fmt;

use smallvec::SmallVec;

use crate::error::ExprError;

/// Maximum nesting depth accepted by the parser.
pub const MAX_DEPTH: usize = 256;

/// Default finite-difference step (scaled by `max(1, |value|)`).
pub const DEFAULT_FD_STEP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarKind {
    State,
    Dist,
    StateHat,
    DistHat,
}

impl VarKind {
    fn slot(self) -> usize {
        match self {
            VarKind::State => 0,
            VarKind::Dist => 1,
            VarKind::StateHat => 2,
            VarKind::DistHat => 3,
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            VarKind::State => "x",
            VarKind::Dist => "w",
            VarKind::StateHat => "xh",
            VarKind::DistHat => "wh",
        }
    }
}

/// Declared variable counts. `hats` enables `xh<k>`/`wh<k>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarSpace {
    pub n: usize,
    pub m: usize,
    pub hats: bool,
}

impl VarSpace {
    pub fn field(n: usize, m: usize) -> Self {
        Self { n, m, hats: false }
    }

    pub fn decomposition(n: usize, m: usize) -> Self {
        Self { n, m, hats: true }
    }

    fn limit(&self, kind: VarKind) -> Option<usize> {
        match kind {
            VarKind::State => Some(self.n),
            VarKind::Dist => Some(self.m),
            VarKind::StateHat if self.hats => Some(self.n),
            VarKind::DistHat if self.hats => Some(self.m),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    Abs,
    Sqrt,
}

impl UnaryOp {
    fn apply(self, v: f64) -> f64 {
        match self {
            UnaryOp::Neg => -v,
            UnaryOp::Sin => v.sin(),
            UnaryOp::Cos => v.cos(),
            UnaryOp::Tan => v.tan(),
            UnaryOp::Exp => v.exp(),
            UnaryOp::Abs => v.abs(),
            UnaryOp::Sqrt => v.sqrt(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Exp => "exp",
            UnaryOp::Abs => "abs",
            UnaryOp::Sqrt => "sqrt",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    #[inline]
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Pow => pow(a, b),
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }
}

#[inline]
fn pow(a: f64, b: f64) -> f64 {
    // Small integer exponents are common (cubes); powi is exact-er and faster.
    if b == b.trunc() && b.abs() <= 64.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extremum {
    Min,
    Max,
}

/// Expression tree node.
#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Const(f64),
    Var(VarKind, usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
    Extremum(Extremum, Vec<Node>),
}

impl Node {
    fn eval_rec(&self, vars: &[&[f64]; 4]) -> f64 {
        match self {
            Node::Const(c) => *c,
            Node::Var(k, i) => vars[k.slot()][*i],
            Node::Unary(op, a) => op.apply(a.eval_rec(vars)),
            Node::Binary(op, a, b) => op.apply(a.eval_rec(vars), b.eval_rec(vars)),
            Node::Extremum(e, args) => fold_extremum(*e, args.iter().map(|a| a.eval_rec(vars))),
        }
    }

    /// Innermost subexpression whose value is non-finite.
    fn first_non_finite(&self, vars: &[&[f64]; 4]) -> Option<(String, f64)> {
        let children: Vec<&Node> = match self {
            Node::Const(_) | Node::Var(..) => vec![],
            Node::Unary(_, a) => vec![a],
            Node::Binary(_, a, b) => vec![a, b],
            Node::Extremum(_, args) => args.iter().collect(),
        };
        for c in children {
            if let Some(found) = c.first_non_finite(vars) {
                return Some(found);
            }
        }
        let v = self.eval_rec(vars);
        (!v.is_finite()).then(|| (self.to_string(), v))
    }

    fn depth(&self) -> usize {
        1 + match self {
            Node::Const(_) | Node::Var(..) => 0,
            Node::Unary(_, a) => a.depth(),
            Node::Binary(_, a, b) => a.depth().max(b.depth()),
            Node::Extremum(_, args) => args.iter().map(Node::depth).max().unwrap_or(0),
        }
    }

    fn compile(&self, prog: &mut Vec<Op>) {
        match self {
            Node::Const(c) => prog.push(Op::Const(*c)),
            Node::Var(k, i) => prog.push(Op::Load(k.slot() as u8, *i as u32)),
            Node::Unary(op, a) => {
                a.compile(prog);
                prog.push(Op::Unary(*op));
            }
            Node::Binary(op, a, b) => {
                a.compile(prog);
                b.compile(prog);
                prog.push(Op::Binary(*op));
            }
            Node::Extremum(e, args) => {
                for a in args {
                    a.compile(prog);
                }
                prog.push(Op::Extremum(*e, args.len() as u32));
            }
        }
    }
}

fn fold_extremum(e: Extremum, vals: impl Iterator<Item = f64>) -> f64 {
    match e {
        Extremum::Min => vals.fold(f64::INFINITY, f64::min),
        Extremum::Max => vals.fold(f64::NEG_INFINITY, f64::max),
    }
}

impl fmt::Display for Node {
    /// Canonical, fully parenthesized form that re-parses to an equal tree
    /// (constants use the shortest round-trip representation).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) if *c == std::f64::consts::PI => write!(f, "pi"),
            Node::Const(c) if c.is_sign_negative() => write!(f, "(-{:?})", -c),
            Node::Const(c) => write!(f, "{c:?}"),
            Node::Var(k, i) => write!(f, "{}{}", k.prefix(), i + 1),
            Node::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Node::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Node::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Node::Extremum(e, args) => {
                let name = match e {
                    Extremum::Min => "min",
                    Extremum::Max => "max",
                };
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Const(f64),
    Load(u8, u32),
    Unary(UnaryOp),
    Binary(BinaryOp),
    Extremum(Extremum, u32),
}

/// A parsed, validated and compiled expression. Immutable.
#[derive(Clone, Debug)]
pub struct Expr {
    root: Node,
    space: VarSpace,
    program: Vec<Op>,
    max_stack: usize,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root && self.space == other.space
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

impl Expr {
    /// Parse `src` over plain field variables `x1..xn`, `w1..wm`.
    pub fn parse(src: &str, n: usize, m: usize) -> Result<Self, ExprError> {
        Self::parse_in(src, VarSpace::field(n, m))
    }

    pub fn parse_in(src: &str, space: VarSpace) -> Result<Self, ExprError> {
        let root = Parser::new(src, space)?.parse()?;
        Ok(Self::from_node(root, space))
    }

    /// Build from a tree; variable indices must respect `space`.
    pub fn from_node(root: Node, space: VarSpace) -> Self {
        let mut program = Vec::new();
        root.compile(&mut program);
        let max_stack = stack_need(&program);
        Self {
            root,
            space,
            program,
            max_stack,
        }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn space(&self) -> VarSpace {
        self.space
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// `-self`, at the expression level.
    pub fn negated(&self) -> Self {
        Self::from_node(Node::Unary(UnaryOp::Neg, Box::new(self.root.clone())), self.space)
    }

    fn check_arity(&self, vars: &[&[f64]; 4]) -> Result<(), ExprError> {
        let expect = [
            ("x", self.space.n),
            ("w", self.space.m),
            ("xh", if self.space.hats { self.space.n } else { 0 }),
            ("wh", if self.space.hats { self.space.m } else { 0 }),
        ];
        for (k, (slot, want)) in expect.iter().enumerate() {
            if vars[k].len() < *want {
                return Err(ExprError::Arity {
                    slot,
                    expected: *want,
                    got: vars[k].len(),
                });
            }
        }
        Ok(())
    }

    /// Evaluate without a finiteness check. Slices must cover the declared
    /// variable counts.
    #[inline]
    pub fn eval_raw(&self, vars: &[&[f64]; 4]) -> f64 {
        let mut stack: SmallVec<[f64; 16]> = SmallVec::with_capacity(self.max_stack);
        for op in &self.program {
            match *op {
                Op::Const(c) => stack.push(c),
                Op::Load(s, i) => stack.push(vars[s as usize][i as usize]),
                Op::Unary(u) => {
                    let top = stack.last_mut().expect("compiled program underflow");
                    *top = u.apply(*top);
                }
                Op::Binary(b) => {
                    let rhs = stack.pop().expect("compiled program underflow");
                    let top = stack.last_mut().expect("compiled program underflow");
                    *top = b.apply(*top, rhs);
                }
                Op::Extremum(e, k) => {
                    let start = stack.len() - k as usize;
                    let v = fold_extremum(e, stack[start..].iter().copied());
                    stack.truncate(start);
                    stack.push(v);
                }
            }
        }
        stack[0]
    }

    /// Evaluate over all four variable slots `(x, w, xh, wh)`.
    pub fn eval_vars(&self, vars: &[&[f64]; 4]) -> Result<f64, ExprError> {
        self.check_arity(vars)?;
        let v = self.eval_raw(vars);
        if v.is_finite() {
            Ok(v)
        } else {
            let (subexpr, value) = self
                .root
                .first_non_finite(vars)
                .unwrap_or_else(|| (self.root.to_string(), v));
            Err(ExprError::NonFinite { subexpr, value })
        }
    }

    /// Evaluate a field expression at `(x, w)`.
    pub fn eval(&self, x: &[f64], w: &[f64]) -> Result<f64, ExprError> {
        self.eval_vars(&[x, w, &[], &[]])
    }

    /// Central finite difference with respect to one state or disturbance
    /// variable (0-based `j`); the step is `h · max(1, |value|)`.
    pub fn partial(&self, kind: VarKind, j: usize, x: &[f64], w: &[f64], h: f64) -> Result<f64, ExprError> {
        assert!(h > 0.0, "finite-difference step must be positive");
        let mut xs = x.to_vec();
        let mut ws = w.to_vec();
        let target = match kind {
            VarKind::State => &mut xs,
            VarKind::Dist => &mut ws,
            _ => panic!("partial: hat variables need eval_vars"),
        };
        let v0 = target[j];
        let step = h * v0.abs().max(1.0);
        target[j] = v0 + step;
        let plus = self.eval(&xs, &ws)?;
        let target = match kind {
            VarKind::State => &mut xs,
            _ => &mut ws,
        };
        target[j] = v0 - step;
        let minus = self.eval(&xs, &ws)?;
        Ok((plus - minus) / (2.0 * step))
    }
}

fn stack_need(program: &[Op]) -> usize {
    let mut depth = 0usize;
    let mut max = 0usize;
    for op in program {
        match op {
            Op::Const(_) | Op::Load(..) => depth += 1,
            Op::Unary(_) => {}
            Op::Binary(_) => depth -= 1,
            Op::Extremum(_, k) => depth = depth + 1 - *k as usize,
        }
        max = max.max(depth);
    }
    max
}

// ---------------------------------------------------------------------------
// Lexer / parser

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let syntax = |col: usize, found: String| ExprError::Syntax {
        src: src.to_string(),
        column: col,
        found,
        expected: vec!["number".into(), "identifier".into(), "operator".into()],
    };
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        while j < chars.len() && chars[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v: f64 = text
                    .parse()
                    .map_err(|_| syntax(col, format!("malformed number `{text}`")))?;
                out.push((Tok::Num(v), col));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push((Tok::Ident(chars[start..i].iter().collect()), col));
                continue;
            }
            other => return Err(syntax(col, format!("character `{other}`"))),
        };
        out.push((tok, col));
        i += 1;
    }
    out.push((Tok::End, chars.len() + 1));
    Ok(out)
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
    pos: usize,
    space: VarSpace,
    depth: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, space: VarSpace) -> Result<Self, ExprError> {
        if src.trim().is_empty() {
            return Err(ExprError::Empty);
        }
        Ok(Self {
            src,
            toks: lex(src)?,
            pos: 0,
            space,
            depth: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn col(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> ExprError {
        ExprError::Syntax {
            src: self.src.to_string(),
            column: self.col(),
            found: self.peek().describe(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn enter(&mut self) -> Result<(), ExprError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ExprError::TooDeep {
                src: self.src.to_string(),
                limit: MAX_DEPTH,
            });
        }
        Ok(())
    }

    fn parse(mut self) -> Result<Node, ExprError> {
        let node = self.expr()?;
        if *self.peek() != Tok::End {
            return Err(self.error(&["`+`", "`-`", "`*`", "`/`", "`^`", "end of input"]));
        }
        if node.depth() > MAX_DEPTH {
            return Err(ExprError::TooDeep {
                src: self.src.to_string(),
                limit: MAX_DEPTH,
            });
        }
        Ok(node)
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            self.enter()?;
            let inner = self.unary()?;
            self.depth -= 1;
            return Ok(Node::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            self.enter()?;
            let exp = self.unary()?;
            self.depth -= 1;
            return Ok(Node::Binary(BinaryOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let col = self.col();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Node::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                self.ident(name, col)
            }
            _ => Err(self.error(&["number", "identifier", "`(`", "`-`"])),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        if *self.peek() != Tok::RParen {
            return Err(self.error(&["`)`"]));
        }
        self.bump();
        Ok(())
    }

    fn ident(&mut self, name: String, col: usize) -> Result<Node, ExprError> {
        let unary = match name.as_str() {
            "sin" => Some(UnaryOp::Sin),
            "cos" => Some(UnaryOp::Cos),
            "tan" => Some(UnaryOp::Tan),
            "exp" => Some(UnaryOp::Exp),
            "abs" => Some(UnaryOp::Abs),
            "sqrt" => Some(UnaryOp::Sqrt),
            _ => None,
        };
        let extremum = match name.as_str() {
            "min" => Some(Extremum::Min),
            "max" => Some(Extremum::Max),
            _ => None,
        };
        if unary.is_some() || extremum.is_some() {
            if *self.peek() != Tok::LParen {
                return Err(self.error(&["`(`"]));
            }
            self.bump();
            self.enter()?;
            let mut args = vec![self.expr()?];
            while *self.peek() == Tok::Comma {
                self.bump();
                args.push(self.expr()?);
            }
            self.depth -= 1;
            if let Some(op) = unary {
                if args.len() != 1 {
                    return Err(ExprError::Syntax {
                        src: self.src.to_string(),
                        column: self.col(),
                        found: "`,`".into(),
                        expected: vec!["`)`".into()],
                    });
                }
                self.expect_rparen()?;
                return Ok(Node::Unary(op, Box::new(args.pop().unwrap())));
            }
            self.expect_rparen()?;
            return Ok(Node::Extremum(extremum.unwrap(), args));
        }
        if name == "pi" {
            return Ok(Node::Const(std::f64::consts::PI));
        }
        let (kind, digits) = if let Some(d) = name.strip_prefix("xh") {
            (VarKind::StateHat, d)
        } else if let Some(d) = name.strip_prefix("wh") {
            (VarKind::DistHat, d)
        } else if let Some(d) = name.strip_prefix('x') {
            (VarKind::State, d)
        } else if let Some(d) = name.strip_prefix('w') {
            (VarKind::Dist, d)
        } else {
            return Err(self.unknown(name, col));
        };
        let Ok(index) = digits.parse::<usize>() else {
            return Err(self.unknown(name, col));
        };
        let Some(limit) = self.space.limit(kind) else {
            return Err(self.unknown(name, col));
        };
        if index == 0 || index > limit {
            return Err(ExprError::IndexOutOfRange {
                src: self.src.to_string(),
                name,
                column: col,
                limit,
            });
        }
        Ok(Node::Var(kind, index - 1))
    }

    fn unknown(&self, name: String, col: usize) -> ExprError {
        ExprError::UnknownIdentifier {
            src: self.src.to_string(),
            name,
            column: col,
        }
    }
}
