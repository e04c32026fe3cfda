use super::ast::{CountKind, ObjRef, ParamMap, RewardExpr, Value};
use super::{ErrorKind, RewardError};
use crate::lex::{tokenize, Pos, Tok, Token};

pub const PREDICATES: [&str; 10] = [
    "AND", "OR", "NOT", "EVENT", "AFTER", "WITHIN", "COUNT", "GT", "LT", "NEARBY_AT",
];

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Id,
    Params,
    Delta,
    Count,
    Coord,
    Time,
    Strength,
    Obj,
    Color,
    Shape,
}

fn signature(name: &str) -> Option<&'static [(&'static str, Kind, bool)]> {
    use Kind::*;
    Some(match name {
        "EVENT" => &[("uid", Id, true), ("params", Params, false)],
        "AFTER" => &[
            ("uid_a", Id, true),
            ("uid_b", Id, true),
            ("min_delta", Delta, false),
            ("max_delta", Delta, false),
            ("first_params", Params, false),
            ("second_params", Params, false),
        ],
        "WITHIN" => &[
            ("uid_a", Id, true),
            ("uid_b", Id, true),
            ("window", Delta, true),
            ("event_params", Params, false),
            ("reference_params", Params, false),
        ],
        "COUNT" | "GT" | "LT" => &[("uid", Id, true), ("count", Count, true), ("params", Params, false)],
        "NEARBY_AT" => &[
            ("obj_id", Obj, true),
            ("x", Coord, true),
            ("y", Coord, true),
            ("t", Time, true),
            ("threshold_strength", Strength, false),
        ],
        "OBJECT_ID" => &[("color", Color, true), ("shape", Shape, true)],
        _ => return None,
    })
}

fn usage(name: &str) -> String {
    match signature(name) {
        Some(sig) => {
            let parts: Vec<String> = sig
                .iter()
                .map(|(n, _, req)| if *req { n.to_string() } else { format!("{n}=None") })
                .collect();
            format!("{name}({})", parts.join(", "))
        }
        None if name == "NOT" => "NOT(expr)".into(),
        None => format!("{name}(expr1, expr2, ...)"),
    }
}

#[derive(Clone, Debug)]
enum Raw {
    Call { name: String, args: Vec<Arg>, pos: Pos },
    Lit(Value, Pos),
    List(Vec<Raw>, Pos),
    Map(Vec<(String, Raw)>, Pos),
}

#[derive(Clone, Debug)]
struct Arg {
    key: Option<(String, Pos)>,
    value: Raw,
}

impl Raw {
    fn pos(&self) -> Pos {
        match self {
            Raw::Call { pos, .. } | Raw::Lit(_, pos) | Raw::List(_, pos) | Raw::Map(_, pos) => *pos,
        }
    }

    fn describe(&self) -> String {
        match self {
            Raw::Call { name, .. } => format!("call to {name}"),
            Raw::Lit(v, _) => format!("{v}"),
            Raw::List(..) => "a list".into(),
            Raw::Map(..) => "a parameter map".into(),
        }
    }
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
}

fn syntax(pos: Pos, expected: &str, found: &Tok) -> RewardError {
    RewardError {
        kind: ErrorKind::Syntax,
        pos: Some(pos),
        message: format!("expected {expected}, found {found}"),
        expected: Some(expected.to_string()),
        found: Some(found.to_string()),
        hint: format!("insert {expected} here; the whole program is one expression such as AND(EVENT(\"uid\"), ...)"),
    }
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.i]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn is(&self, p: &str) -> bool {
        matches!(&self.peek().tok, Tok::Punct(q) if *q == p)
    }

    fn expect(&mut self, p: &str) -> Result<(), RewardError> {
        if self.is(p) {
            self.next();
            Ok(())
        } else {
            let t = self.peek();
            Err(syntax(t.pos, &format!("`{p}`"), &t.tok))
        }
    }

    fn value(&mut self) -> Result<Raw, RewardError> {
        let t = self.next();
        match t.tok {
            Tok::Num(x) => Ok(Raw::Lit(Value::Num(x), t.pos)),
            Tok::Str(s) => Ok(Raw::Lit(Value::Str(s), t.pos)),
            Tok::Punct("-") => match self.next().tok {
                Tok::Num(x) => Ok(Raw::Lit(Value::Num(-x), t.pos)),
                other => Err(syntax(t.pos, "a number after `-`", &other)),
            },
            Tok::Punct("[") => Ok(Raw::List(self.items("]")?, t.pos)),
            Tok::Punct("(") => Ok(Raw::List(self.items(")")?, t.pos)),
            Tok::Punct("{") => {
                let mut entries = Vec::new();
                while !self.is("}") {
                    let k = self.next();
                    let key = match k.tok {
                        Tok::Str(s) | Tok::Ident(s) => s,
                        other => return Err(syntax(k.pos, "a parameter name", &other)),
                    };
                    self.expect(":")?;
                    entries.push((key, self.value()?));
                    if !self.is("}") {
                        self.expect(",")?;
                    }
                }
                self.next();
                Ok(Raw::Map(entries, t.pos))
            }
            Tok::Ident(name) => match name.as_str() {
                "True" | "true" => Ok(Raw::Lit(Value::Bool(true), t.pos)),
                "False" | "false" => Ok(Raw::Lit(Value::Bool(false), t.pos)),
                "None" | "null" => Ok(Raw::Lit(Value::Null, t.pos)),
                _ if self.is("(") => {
                    self.next();
                    let args = self.args()?;
                    Ok(Raw::Call { name, args, pos: t.pos })
                }
                _ => Err(syntax(t.pos, "a predicate call or literal", &Tok::Ident(name))),
            },
            other => Err(syntax(t.pos, "an expression", &other)),
        }
    }

    fn items(&mut self, close: &str) -> Result<Vec<Raw>, RewardError> {
        let mut out = Vec::new();
        while !self.is(close) {
            out.push(self.value()?);
            if !self.is(close) {
                self.expect(",")?;
            }
        }
        self.next();
        Ok(out)
    }

    fn args(&mut self) -> Result<Vec<Arg>, RewardError> {
        let mut out: Vec<Arg> = Vec::new();
        while !self.is(")") {
            let start = self.peek().clone();
            let keyed = matches!(start.tok, Tok::Ident(_))
                && matches!(self.toks.get(self.i + 1).map(|t| &t.tok), Some(Tok::Punct("=")));
            let key = if keyed {
                let Tok::Ident(k) = self.next().tok else { unreachable!() };
                self.next();
                Some((k, start.pos))
            } else {
                if out.iter().any(|a| a.key.is_some()) {
                    return Err(RewardError {
                        kind: ErrorKind::Syntax,
                        pos: Some(start.pos),
                        message: "positional argument after keyword argument".into(),
                        expected: Some("keyword argument".into()),
                        found: Some(start.tok.to_string()),
                        hint: "put positional arguments before keyword arguments".into(),
                    });
                }
                None
            };
            out.push(Arg {
                key,
                value: self.value()?,
            });
            if !self.is(")") {
                self.expect(",")?;
            }
        }
        self.next();
        Ok(out)
    }
}

fn unknown_predicate(name: &str, pos: Pos) -> RewardError {
    RewardError {
        kind: ErrorKind::UnknownPredicate,
        pos: Some(pos),
        message: format!("unknown predicate `{name}`"),
        expected: Some("a predicate".into()),
        found: Some(name.to_string()),
        hint: format!("valid predicates are {}, and OBJECT_ID for object ids", PREDICATES.join(", ")),
    }
}

fn invalid(pos: Pos, name: &str, param: &str, want: &str, found: &str) -> RewardError {
    RewardError {
        kind: ErrorKind::InvalidArgument,
        pos: Some(pos),
        message: format!("argument `{param}` of {name} must be {want}, found {found}"),
        expected: Some(want.to_string()),
        found: Some(found.to_string()),
        hint: format!("usage: {}", usage(name)),
    }
}

fn literal(raw: &Raw) -> Result<Value, RewardError> {
    Ok(match raw {
        Raw::Lit(v, _) => v.clone(),
        Raw::List(xs, _) => Value::List(xs.iter().map(literal).collect::<Result<_, _>>()?),
        Raw::Map(m, _) => Value::Map(
            m.iter()
                .map(|(k, v)| Ok((k.clone(), literal(v)?)))
                .collect::<Result<_, RewardError>>()?,
        ),
        Raw::Call { name, args, pos } => {
            if name == "OBJECT_ID" {
                let (color, shape) = object_id(args, *pos)?;
                Value::ObjectId { color, shape }
            } else if PREDICATES.contains(&name.as_str()) {
                return Err(invalid(*pos, name, "value", "a literal or OBJECT_ID", &format!("predicate {name}")));
            } else {
                return Err(unknown_predicate(name, *pos));
            }
        }
    })
}

fn object_id(args: &[Arg], pos: Pos) -> Result<(String, String), RewardError> {
    let bound = bind("OBJECT_ID", args, pos)?;
    let text = |k: usize, what: &str, ok: fn(&str) -> bool| -> Result<String, RewardError> {
        let raw = bound[k].as_ref().unwrap();
        match raw {
            Raw::Lit(Value::Str(s), _) if ok(s) => Ok(s.to_lowercase()),
            other => Err(invalid(other.pos(), "OBJECT_ID", what, "a known name in quotes", &other.describe())),
        }
    };
    Ok((
        text(0, "color", |s| crate::trace::color_filter(s).is_ok())?,
        text(1, "shape", |s| crate::trace::shape_filter(s).is_ok())?,
    ))
}

/// Matches positional and keyword arguments against a signature.
fn bind(name: &str, args: &[Arg], pos: Pos) -> Result<Vec<Option<Raw>>, RewardError> {
    let sig = signature(name).expect("fixed-arity predicate");
    let mut slots: Vec<Option<Raw>> = vec![None; sig.len()];
    for (k, a) in args.iter().enumerate() {
        let idx = match &a.key {
            None => {
                if k >= sig.len() {
                    return Err(arity(name, args.len(), pos));
                }
                k
            }
            Some((key, kpos)) => match sig.iter().position(|(n, ..)| n == key) {
                Some(i) => i,
                None => {
                    let names: Vec<&str> = sig.iter().map(|s| s.0).collect();
                    return Err(RewardError {
                        kind: ErrorKind::BadKeyword,
                        pos: Some(*kpos),
                        message: format!("{name} has no argument named `{key}`"),
                        expected: Some(names.join(", ")),
                        found: Some(key.clone()),
                        hint: format!("keywords accepted by {name}: {}", names.join(", ")),
                    });
                }
            },
        };
        if slots[idx].is_some() {
            return Err(RewardError {
                kind: ErrorKind::BadKeyword,
                pos: Some(a.value.pos()),
                message: format!("argument `{}` of {name} given twice", sig[idx].0),
                expected: None,
                found: Some(sig[idx].0.to_string()),
                hint: format!("usage: {}", usage(name)),
            });
        }
        slots[idx] = Some(a.value.clone());
    }
    for (k, (_, _, req)) in sig.iter().enumerate() {
        if *req && slots[k].is_none() {
            return Err(arity(name, args.len(), pos));
        }
    }
    Ok(slots)
}

fn arity(name: &str, got: usize, pos: Pos) -> RewardError {
    let expected = match signature(name) {
        Some(sig) => {
            let req = sig.iter().filter(|s| s.2).count();
            if req == sig.len() {
                format!("{req} arguments")
            } else {
                format!("{req} to {} arguments", sig.len())
            }
        }
        None if name == "NOT" => "1 argument".into(),
        None => "at least 1 argument".into(),
    };
    RewardError {
        kind: ErrorKind::Arity,
        pos: Some(pos),
        message: format!("{name} takes {expected}, got {got}"),
        expected: Some(expected),
        found: Some(got.to_string()),
        hint: format!("usage: {}", usage(name)),
    }
}

fn num_of(raw: &Raw) -> Option<f64> {
    match raw {
        Raw::Lit(Value::Num(x), _) => Some(*x),
        _ => None,
    }
}

fn params_of(name: &str, param: &str, raw: Option<&Raw>) -> Result<Option<ParamMap>, RewardError> {
    match raw {
        None | Some(Raw::Lit(Value::Null, _)) => Ok(None),
        Some(Raw::Map(..)) => match literal(raw.unwrap())? {
            Value::Map(m) => Ok(Some(m)),
            _ => unreachable!(),
        },
        Some(other) => Err(invalid(other.pos(), name, param, "a parameter map {\"key\": value}", &other.describe())),
    }
}

fn convert(raw: &Raw) -> Result<RewardExpr, RewardError> {
    let Raw::Call { name, args, pos } = raw else {
        return Err(RewardError {
            kind: ErrorKind::Syntax,
            pos: Some(raw.pos()),
            message: format!("expected a predicate, found {}", raw.describe()),
            expected: Some("a predicate".into()),
            found: Some(raw.describe()),
            hint: format!("valid predicates are {}", PREDICATES.join(", ")),
        });
    };
    let pos = *pos;
    match name.as_str() {
        "AND" | "OR" | "NOT" => {
            if let Some(a) = args.iter().find(|a| a.key.is_some()) {
                let (k, kp) = a.key.clone().unwrap();
                return Err(RewardError {
                    kind: ErrorKind::BadKeyword,
                    pos: Some(kp),
                    message: format!("{name} takes no keyword arguments, found `{k}`"),
                    expected: None,
                    found: Some(k),
                    hint: format!("usage: {}", usage(name)),
                });
            }
            if args.is_empty() || (name == "NOT" && args.len() != 1) {
                return Err(arity(name, args.len(), pos));
            }
            let cs = args.iter().map(|a| convert(&a.value)).collect::<Result<Vec<_>, _>>()?;
            Ok(match name.as_str() {
                "AND" => RewardExpr::And(cs),
                "OR" => RewardExpr::Or(cs),
                _ => RewardExpr::Not(Box::new(cs.into_iter().next().unwrap())),
            })
        }
        "OBJECT_ID" => Err(invalid(pos, name, "expression", "a predicate", "OBJECT_ID, which yields an id")),
        n => {
            let Some(sig) = signature(n) else {
                return Err(unknown_predicate(n, pos));
            };
            let slots = bind(n, args, pos)?;
            let mut ids = Vec::new();
            let mut nums: Vec<Option<f64>> = Vec::new();
            let mut maps: Vec<Option<ParamMap>> = Vec::new();
            let mut obj = None;
            let mut count = 0u64;
            for ((param, kind, _), slot) in sig.iter().zip(&slots) {
                let Some(r) = slot.as_ref() else {
                    if *kind == Kind::Params {
                        maps.push(None);
                    } else {
                        nums.push(None);
                    }
                    continue;
                };
                match kind {
                    Kind::Id => match r {
                        Raw::Lit(Value::Str(s), _) => ids.push(s.clone()),
                        other => return Err(invalid(other.pos(), n, param, "a quoted uid or label", &other.describe())),
                    },
                    Kind::Params => maps.push(params_of(n, param, Some(r))?),
                    Kind::Count => match num_of(r) {
                        Some(x) if x >= 0.0 && x.fract() == 0.0 => count = x as u64,
                        _ => return Err(invalid(r.pos(), n, param, "a non-negative integer", &r.describe())),
                    },
                    Kind::Obj => {
                        obj = Some(match r {
                            Raw::Lit(Value::Num(x), _) if x.fract() == 0.0 => ObjRef::Id(*x as i64),
                            Raw::Lit(Value::Str(s), _) => ObjRef::Name(s.clone()),
                            Raw::Call { name: c, args: a, pos: p } if c == "OBJECT_ID" => {
                                let (color, shape) = object_id(a, *p)?;
                                ObjRef::Lookup { color, shape }
                            }
                            other => {
                                return Err(invalid(other.pos(), n, param, "an object id or OBJECT_ID(color, shape)", &other.describe()))
                            }
                        })
                    }
                    Kind::Delta | Kind::Coord | Kind::Time | Kind::Strength => {
                        if matches!(r, Raw::Lit(Value::Null, _)) && *kind == Kind::Delta {
                            nums.push(None);
                            continue;
                        }
                        let (ok, want): (fn(f64) -> bool, &str) = match kind {
                            Kind::Delta => (|x| x >= 0.0, "a non-negative number"),
                            Kind::Time => (|x| (0.0..=1.0).contains(&x), "a time in [0, 1]"),
                            Kind::Strength => (|x| x > 0.0, "a positive number"),
                            _ => (|x| x.is_finite(), "a number"),
                        };
                        match num_of(r) {
                            Some(x) if ok(x) => nums.push(Some(x)),
                            _ => return Err(invalid(r.pos(), n, param, want, &r.describe())),
                        }
                    }
                    Kind::Color | Kind::Shape => unreachable!(),
                }
            }
            let mut ids = ids.into_iter();
            let mut maps = maps.into_iter();
            Ok(match n {
                "EVENT" => RewardExpr::Event {
                    id: ids.next().unwrap(),
                    params: maps.next().unwrap(),
                },
                "AFTER" => RewardExpr::After {
                    a: ids.next().unwrap(),
                    b: ids.next().unwrap(),
                    min_delta: nums[0],
                    max_delta: nums[1],
                    first_params: maps.next().unwrap(),
                    second_params: maps.next().unwrap(),
                },
                "WITHIN" => RewardExpr::Within {
                    a: ids.next().unwrap(),
                    b: ids.next().unwrap(),
                    window: nums[0].unwrap(),
                    event_params: maps.next().unwrap(),
                    reference_params: maps.next().unwrap(),
                },
                "COUNT" | "GT" | "LT" => RewardExpr::Count {
                    kind: match n {
                        "COUNT" => CountKind::Eq,
                        "GT" => CountKind::Gt,
                        _ => CountKind::Lt,
                    },
                    id: ids.next().unwrap(),
                    count,
                    params: maps.next().unwrap(),
                },
                _ => RewardExpr::NearbyAt {
                    obj: obj.unwrap(),
                    x: nums[0].unwrap(),
                    y: nums[1].unwrap(),
                    t: nums[2].unwrap(),
                    threshold_strength: nums[3].unwrap_or(super::DEFAULT_THRESHOLD_STRENGTH),
                },
            })
        }
    }
}

pub(super) fn parse(src: &str) -> Result<RewardExpr, RewardError> {
    let toks = tokenize(src).map_err(|e| RewardError {
        kind: ErrorKind::Syntax,
        pos: Some(e.pos),
        message: e.message.clone(),
        expected: None,
        found: None,
        hint: "remove the offending character; strings use double quotes".into(),
    })?;
    let mut p = Parser { toks, i: 0 };
    let raw = p.value()?;
    let t = p.peek();
    if t.tok != Tok::Eof {
        return Err(syntax(t.pos, "end of input", &t.tok));
    }
    convert(&raw)
}
