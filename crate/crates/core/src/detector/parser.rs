use super::ast::{Arg, BinOp, Expr, ObjFilter, ParamType, Prim, Ty};
use super::{DetectorError, ErrorKind};
use crate::lex::{tokenize, Pos, Tok, Token};

pub(super) struct Parsed {
    pub name: String,
    pub params: Vec<(String, ParamType)>,
    pub body: Expr,
    pub emit: Vec<(String, Expr)>,
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
    scope: Vec<String>,
}

fn err(kind: ErrorKind, pos: Pos, message: impl Into<String>) -> DetectorError {
    DetectorError {
        kind,
        pos,
        message: message.into(),
        expected: Vec::new(),
        found: String::new(),
    }
}

const KEYWORDS: [&str; 9] = [
    "DETECT", "PARAMS", "WHERE", "EMIT", "and", "or", "not", "true", "false",
];

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.i]
    }

    fn pos(&self) -> Pos {
        self.peek().pos
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn unexpected(&self, expected: &[&str]) -> DetectorError {
        let t = self.peek();
        let list = expected.join(", ");
        DetectorError {
            kind: ErrorKind::Syntax,
            pos: t.pos,
            message: format!("expected {list}, found {}", t.tok),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: t.tok.to_string(),
        }
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(&self.peek().tok, Tok::Punct(q) if *q == p)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == w)
    }

    fn expect_punct(&mut self, p: &'static str) -> Result<(), DetectorError> {
        if self.is_punct(p) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&[&format!("`{p}`")]))
        }
    }

    fn expect_word(&mut self, w: &str) -> Result<(), DetectorError> {
        if self.is_word(w) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&[&format!("`{w}`")]))
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), DetectorError> {
        match &self.peek().tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                let p = self.bump().pos;
                Ok((s, p))
            }
            _ => Err(self.unexpected(&["identifier"])),
        }
    }

    fn program(&mut self) -> Result<Parsed, DetectorError> {
        self.expect_word("DETECT")?;
        let (name, _) = self.ident()?;
        let mut params = Vec::new();
        if self.is_word("PARAMS") {
            self.bump();
            self.expect_punct("{")?;
            while !self.is_punct("}") {
                let (key, kpos) = self.ident()?;
                self.expect_punct(":")?;
                let (ty, tpos) = self.ident()?;
                let pt = ParamType::parse(&ty).ok_or_else(|| DetectorError {
                    kind: ErrorKind::Type,
                    pos: tpos,
                    message: format!("unknown parameter type `{ty}`"),
                    expected: vec!["int".into(), "float".into(), "bool".into(), "text".into()],
                    found: ty.clone(),
                })?;
                if params.iter().any(|(k, _)| *k == key) {
                    return Err(err(
                        ErrorKind::Syntax,
                        kpos,
                        format!("parameter `{key}` declared twice"),
                    ));
                }
                params.push((key, pt));
                if !self.is_punct("}") {
                    self.expect_punct(",")?;
                }
            }
            self.bump();
        }
        self.expect_word("WHERE")?;
        let bpos = self.pos();
        let body = self.expr()?;
        if body.ty() != Ty::Bool {
            return Err(err(
                ErrorKind::Type,
                bpos,
                format!("WHERE clause must be bool, found {}", body.ty()),
            ));
        }
        let mut emit = Vec::new();
        if self.is_word("EMIT") {
            self.bump();
            self.scope = chain_vars(&body);
            self.expect_punct("{")?;
            while !self.is_punct("}") {
                let (key, kpos) = self.ident()?;
                self.expect_punct(":")?;
                let vpos = self.pos();
                let value = self.expr()?;
                let Some((_, pt)) = params.iter().find(|(k, _)| *k == key) else {
                    return Err(err(
                        ErrorKind::UndeclaredParameter,
                        kpos,
                        format!("EMIT references undeclared parameter `{key}`"),
                    ));
                };
                if !pt.accepts(value.ty()) {
                    return Err(err(
                        ErrorKind::Type,
                        vpos,
                        format!(
                            "parameter `{key}` is {} but the value is {}",
                            pt.as_str(),
                            value.ty()
                        ),
                    ));
                }
                if emit.iter().any(|(k, _): &(String, Expr)| *k == key) {
                    return Err(err(
                        ErrorKind::Syntax,
                        kpos,
                        format!("parameter `{key}` emitted twice"),
                    ));
                }
                emit.push((key, value));
                if !self.is_punct("}") {
                    self.expect_punct(",")?;
                }
            }
            self.bump();
        }
        if !matches!(self.peek().tok, Tok::Eof) {
            return Err(self.unexpected(&["end of input"]));
        }
        if let Some((k, _)) = params
            .iter()
            .find(|(k, _)| !emit.iter().any(|(e, _)| e == k))
        {
            return Err(err(
                ErrorKind::UndeclaredParameter,
                self.pos(),
                format!("parameter `{k}` is declared but never emitted"),
            ));
        }
        // emit in declaration order
        emit.sort_by_key(|(k, _)| params.iter().position(|(p, _)| p == k));
        Ok(Parsed {
            name,
            params,
            body,
            emit,
        })
    }

    fn expr(&mut self) -> Result<Expr, DetectorError> {
        self.or_expr()
    }

    fn bool_operand(&self, e: &Expr, pos: Pos, what: &str) -> Result<(), DetectorError> {
        if e.ty() == Ty::Bool {
            Ok(())
        } else {
            Err(err(
                ErrorKind::Type,
                pos,
                format!("`{what}` needs bool operands, found {}", e.ty()),
            ))
        }
    }

    fn or_expr(&mut self) -> Result<Expr, DetectorError> {
        let p = self.pos();
        let mut lhs = self.and_expr()?;
        while self.is_word("or") {
            self.bump();
            let rp = self.pos();
            let rhs = self.and_expr()?;
            self.bool_operand(&lhs, p, "or")?;
            self.bool_operand(&rhs, rp, "or")?;
            lhs = Expr::Bin(BinOp::Or, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, DetectorError> {
        let p = self.pos();
        let mut lhs = self.not_expr()?;
        while self.is_word("and") {
            self.bump();
            let rp = self.pos();
            let rhs = self.not_expr()?;
            self.bool_operand(&lhs, p, "and")?;
            self.bool_operand(&rhs, rp, "and")?;
            lhs = Expr::Bin(BinOp::And, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, DetectorError> {
        if self.is_word("not") {
            self.bump();
            let p = self.pos();
            let e = self.not_expr()?;
            self.bool_operand(&e, p, "not")?;
            return Ok(Expr::Not(Box::new(e)));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> Result<Expr, DetectorError> {
        let p = self.pos();
        let lhs = self.add_expr()?;
        let op = match &self.peek().tok {
            Tok::Punct("<") => BinOp::Lt,
            Tok::Punct("<=") => BinOp::Le,
            Tok::Punct(">") => BinOp::Gt,
            Tok::Punct(">=") => BinOp::Ge,
            Tok::Punct("==") => BinOp::Eq,
            Tok::Punct("!=") => BinOp::Ne,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.add_expr()?;
        let (lt, rt) = (lhs.ty(), rhs.ty());
        let ok = match op {
            BinOp::Eq | BinOp::Ne => lt == rt && lt != Ty::Str,
            _ => lt == Ty::Num && rt == Ty::Num,
        };
        if !ok {
            return Err(err(
                ErrorKind::Type,
                p,
                format!("cannot compare {lt} {} {rt}", op.symbol()),
            ));
        }
        Ok(Expr::Bin(op, Box::new(lhs), Box::new(rhs)))
    }

    fn num_operand(&self, e: &Expr, pos: Pos, op: BinOp) -> Result<(), DetectorError> {
        if e.ty() == Ty::Num {
            Ok(())
        } else {
            Err(err(
                ErrorKind::Type,
                pos,
                format!("`{}` needs number operands, found {}", op.symbol(), e.ty()),
            ))
        }
    }

    fn add_expr(&mut self) -> Result<Expr, DetectorError> {
        let p = self.pos();
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match &self.peek().tok {
                Tok::Punct("+") => BinOp::Add,
                Tok::Punct("-") => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rp = self.pos();
            let rhs = self.mul_expr()?;
            self.num_operand(&lhs, p, op)?;
            self.num_operand(&rhs, rp, op)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn mul_expr(&mut self) -> Result<Expr, DetectorError> {
        let p = self.pos();
        let mut lhs = self.unary()?;
        loop {
            let op = match &self.peek().tok {
                Tok::Punct("*") => BinOp::Mul,
                Tok::Punct("/") => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rp = self.pos();
            let rhs = self.unary()?;
            self.num_operand(&lhs, p, op)?;
            self.num_operand(&rhs, rp, op)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, DetectorError> {
        if self.is_punct("-") {
            self.bump();
            if let Tok::Num(n) = self.peek().tok {
                self.bump();
                return Ok(Expr::Num(-n));
            }
            let p = self.pos();
            let e = self.unary()?;
            if e.ty() != Ty::Num {
                return Err(err(ErrorKind::Type, p, format!("cannot negate {}", e.ty())));
            }
            return Ok(Expr::Neg(Box::new(e)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, DetectorError> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Num(n) => {
                self.bump();
                Ok(Expr::Num(n))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Str(s))
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Ident(ref w) if w == "true" || w == "false" => {
                self.bump();
                Ok(Expr::Bool(w == "true"))
            }
            Tok::Ident(ref w) if !KEYWORDS.contains(&w.as_str()) => {
                let name = w.clone();
                self.bump();
                if self.is_punct("(") {
                    self.call(name, t.pos)
                } else {
                    let slot = self.scope.iter().rposition(|n| *n == name).ok_or_else(|| {
                        err(
                            ErrorKind::UnboundVariable,
                            t.pos,
                            format!("unbound variable `{name}`"),
                        )
                    })?;
                    Ok(Expr::Var { name, slot })
                }
            }
            _ => Err(self.unexpected(&[
                "number",
                "string",
                "`true`",
                "`false`",
                "`(`",
                "identifier",
            ])),
        }
    }

    fn call(&mut self, name: String, pos: Pos) -> Result<Expr, DetectorError> {
        self.expect_punct("(")?;
        match name.as_str() {
            "exists_object" | "forall_object" => {
                let (var, _) = self.ident()?;
                self.expect_punct(",")?;
                let fpos = self.pos();
                let fname = match &self.peek().tok {
                    Tok::Ident(s) | Tok::Str(s) => s.clone(),
                    _ => return Err(self.unexpected(&["object filter"])),
                };
                self.bump();
                let filter = ObjFilter::parse(&fname).ok_or_else(|| DetectorError {
                    kind: ErrorKind::Type,
                    pos: fpos,
                    message: format!("unknown object filter `{fname}`"),
                    expected: ObjFilter::NAMES.iter().map(|s| s.to_string()).collect(),
                    found: fname.clone(),
                })?;
                self.expect_punct(",")?;
                let slot = self.scope.len();
                self.scope.push(var.clone());
                let bpos = self.pos();
                let body = self.expr();
                self.scope.pop();
                let body = body?;
                if body.ty() != Ty::Bool {
                    return Err(err(
                        ErrorKind::Type,
                        bpos,
                        format!("`{name}` body must be bool"),
                    ));
                }
                self.expect_punct(")")?;
                Ok(Expr::Quant {
                    all: name == "forall_object",
                    var,
                    slot,
                    filter,
                    body: Box::new(body),
                })
            }
            "event_active" => {
                let uid = self.uid_literal()?;
                let mut filter = Vec::new();
                if self.is_punct(",") {
                    self.bump();
                    self.expect_punct("{")?;
                    while !self.is_punct("}") {
                        let (key, _) = self.ident()?;
                        self.expect_punct(":")?;
                        let vpos = self.pos();
                        let v = self.expr()?;
                        if v.ty() == Ty::Vec {
                            return Err(err(
                                ErrorKind::Type,
                                vpos,
                                "event filters cannot match vectors",
                            ));
                        }
                        filter.push((key, v));
                        if !self.is_punct("}") {
                            self.expect_punct(",")?;
                        }
                    }
                    self.bump();
                }
                self.expect_punct(")")?;
                Ok(Expr::EventActive { uid, filter })
            }
            "event_involves" => {
                let uid = self.uid_literal()?;
                self.expect_punct(",")?;
                let p = self.pos();
                let obj = self.expr()?;
                if obj.ty() != Ty::Obj {
                    return Err(err(ErrorKind::Type, p, "event_involves needs an object"));
                }
                self.expect_punct(")")?;
                Ok(Expr::EventInvolves {
                    uid,
                    obj: Box::new(obj),
                })
            }
            _ => {
                let prim = Prim::from_name(&name).ok_or_else(|| DetectorError {
                    kind: ErrorKind::UnknownPrimitive,
                    pos,
                    message: format!("unknown primitive `{name}`"),
                    expected: Vec::new(),
                    found: name.clone(),
                })?;
                let mut args = Vec::new();
                let mut positions = Vec::new();
                while !self.is_punct(")") {
                    positions.push(self.pos());
                    args.push(self.expr()?);
                    if !self.is_punct(")") {
                        self.expect_punct(",")?;
                    }
                }
                self.bump();
                let sig = prim.args();
                if sig.len() != args.len() {
                    return Err(err(
                        ErrorKind::Arity,
                        pos,
                        format!(
                            "`{name}` takes {} argument(s), found {}",
                            sig.len(),
                            args.len()
                        ),
                    ));
                }
                for ((a, s), p) in args.iter().zip(sig).zip(&positions) {
                    let ok = match s {
                        Arg::T(t) => a.ty() == *t,
                        Arg::Any => a.ty() != Ty::Str,
                    };
                    if !ok {
                        let want = match s {
                            Arg::T(t) => t.to_string(),
                            Arg::Any => "a comparable value".into(),
                        };
                        return Err(err(
                            ErrorKind::Type,
                            *p,
                            format!("`{name}` expects {want}, found {}", a.ty()),
                        ));
                    }
                }
                if prim == Prim::Object {
                    if let Expr::Str(c) = &args[0] {
                        if c.parse::<crate::trace::Color>().is_err() {
                            return Err(err(
                                ErrorKind::Type,
                                positions[0],
                                format!("unknown color `{c}`"),
                            ));
                        }
                    } else {
                        return Err(err(
                            ErrorKind::Type,
                            positions[0],
                            "object() needs a color literal",
                        ));
                    }
                }
                Ok(Expr::Call(prim, args))
            }
        }
    }

    fn uid_literal(&mut self) -> Result<String, DetectorError> {
        match &self.peek().tok {
            Tok::Str(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected(&["event uid string"])),
        }
    }
}

/// Variables bound by the leading chain of `exists_object` quantifiers.
pub fn chain_vars(body: &Expr) -> Vec<String> {
    let mut out = Vec::new();
    let mut e = body;
    while let Expr::Quant {
        all: false,
        var,
        body,
        ..
    } = e
    {
        out.push(var.clone());
        e = body;
    }
    out
}

pub(super) fn parse(src: &str) -> Result<Parsed, DetectorError> {
    let toks = tokenize(src).map_err(|e| DetectorError {
        kind: ErrorKind::Syntax,
        pos: e.pos,
        message: e.message,
        expected: Vec::new(),
        found: String::new(),
    })?;
    Parser {
        toks,
        i: 0,
        scope: Vec::new(),
    }
    .program()
}
