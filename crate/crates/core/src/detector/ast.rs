use std::collections::BTreeSet;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Ty {
    Bool,
    Num,
    Vec,
    Obj,
    Str,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ty::Bool => "bool",
            Ty::Num => "number",
            Ty::Vec => "vector",
            Ty::Obj => "object",
            Ty::Str => "string",
        })
    }
}

/// Declared type of an emitted parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamType {
    Int,
    Float,
    Bool,
    Text,
}

impl ParamType {
    pub fn parse(s: &str) -> Option<ParamType> {
        Some(match s {
            "int" => ParamType::Int,
            "float" => ParamType::Float,
            "bool" => ParamType::Bool,
            "text" => ParamType::Text,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ParamType::Int => "int",
            ParamType::Float => "float",
            ParamType::Bool => "bool",
            ParamType::Text => "text",
        }
    }

    pub fn accepts(self, ty: Ty) -> bool {
        matches!(
            (self, ty),
            (ParamType::Int, Ty::Obj | Ty::Num)
                | (ParamType::Float, Ty::Num)
                | (ParamType::Bool, Ty::Bool)
                | (ParamType::Text, Ty::Str)
        )
    }
}

/// Argument kind in a primitive signature.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arg {
    T(Ty),
    /// Any comparable value (number, vector, bool, object).
    Any,
}

macro_rules! prims {
    ($($variant:ident => $name:literal, [$($arg:expr),*], $ret:expr, $temporal:literal;)*) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
        pub enum Prim { $($variant),* }

        impl Prim {
            pub const ALL: &'static [Prim] = &[$(Prim::$variant),*];

            pub fn name(self) -> &'static str {
                match self { $(Prim::$variant => $name),* }
            }

            pub fn from_name(s: &str) -> Option<Prim> {
                match s { $($name => Some(Prim::$variant),)* _ => None }
            }

            pub fn args(self) -> &'static [Arg] {
                match self { $(Prim::$variant => &[$($arg),*]),* }
            }

            pub fn ret(self) -> Ty {
                match self { $(Prim::$variant => $ret),* }
            }

            /// Whether the primitive reads its arguments at other frames.
            pub fn is_temporal(self) -> bool {
                match self { $(Prim::$variant => $temporal),* }
            }
        }
    };
}

use Arg::{Any, T};

prims! {
    Contact => "contact", [T(Ty::Obj), T(Ty::Obj)], Ty::Bool, false;
    Contacts => "contacts", [T(Ty::Obj)], Ty::Num, false;
    Speed => "speed", [T(Ty::Obj)], Ty::Num, false;
    VelX => "vel_x", [T(Ty::Obj)], Ty::Num, false;
    VelY => "vel_y", [T(Ty::Obj)], Ty::Num, false;
    PosX => "pos_x", [T(Ty::Obj)], Ty::Num, false;
    PosY => "pos_y", [T(Ty::Obj)], Ty::Num, false;
    Position => "position", [T(Ty::Obj)], Ty::Vec, false;
    Distance => "distance", [T(Ty::Obj), T(Ty::Obj)], Ty::Num, false;
    GridCell => "grid_cell", [T(Ty::Obj), T(Ty::Num)], Ty::Vec, false;
    GridCol => "grid_col", [T(Ty::Obj), T(Ty::Num)], Ty::Num, false;
    GridRow => "grid_row", [T(Ty::Obj), T(Ty::Num)], Ty::Num, false;
    Angle => "angle", [T(Ty::Obj)], Ty::Num, false;
    IsStatic => "is_static", [T(Ty::Obj)], Ty::Bool, false;
    Object => "object", [T(Ty::Str)], Ty::Obj, false;
    Delta => "delta", [T(Ty::Num)], Ty::Num, true;
    Changed => "changed", [Any], Ty::Bool, true;
    SignFlip => "sign_flip", [T(Ty::Num)], Ty::Bool, true;
    RisingEdge => "rising_edge", [T(Ty::Bool)], Ty::Bool, true;
    Sustained => "sustained", [T(Ty::Bool), T(Ty::Num)], Ty::Bool, true;
    WithinAfter => "within_after", [T(Ty::Bool), T(Ty::Bool), T(Ty::Num)], Ty::Bool, true;
    CountSince => "count_since", [T(Ty::Bool), T(Ty::Num)], Ty::Num, true;
    Variance => "variance", [T(Ty::Num), T(Ty::Num)], Ty::Num, true;
    Time => "time", [], Ty::Num, false;
    Frame => "frame", [], Ty::Num, false;
    Abs => "abs", [T(Ty::Num)], Ty::Num, false;
    Min => "min", [T(Ty::Num), T(Ty::Num)], Ty::Num, false;
    Max => "max", [T(Ty::Num), T(Ty::Num)], Ty::Num, false;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    And,
    Or,
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne
        )
    }
}

/// Domain of a quantified object variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ObjFilter {
    Any,
    Dynamic,
    Static,
    Boundary,
    Color(crate::trace::Color),
    Kind(crate::trace::ShapeKind),
}

impl ObjFilter {
    pub fn parse(s: &str) -> Option<ObjFilter> {
        Some(match s {
            "any" => ObjFilter::Any,
            "dynamic" => ObjFilter::Dynamic,
            "static" => ObjFilter::Static,
            "boundary" => ObjFilter::Boundary,
            other => {
                if let Ok(c) = other.parse() {
                    ObjFilter::Color(c)
                } else if let Ok(k) = other.parse() {
                    ObjFilter::Kind(k)
                } else {
                    return None;
                }
            }
        })
    }

    pub const NAMES: &'static [&'static str] = &[
        "any",
        "dynamic",
        "static",
        "boundary",
        "red",
        "green",
        "blue",
        "black",
        "circle",
        "bar",
        "jar",
        "standingsticks",
    ];
}

impl fmt::Display for ObjFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjFilter::Any => f.write_str("any"),
            ObjFilter::Dynamic => f.write_str("dynamic"),
            ObjFilter::Static => f.write_str("static"),
            ObjFilter::Boundary => f.write_str("boundary"),
            ObjFilter::Color(c) => write!(f, "{c}"),
            ObjFilter::Kind(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Bool(bool),
    Num(f64),
    Str(String),
    /// Object variable; `slot` is its binding depth.
    Var {
        name: String,
        slot: usize,
    },
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Prim, Vec<Expr>),
    EventActive {
        uid: String,
        filter: Vec<(String, Expr)>,
    },
    EventInvolves {
        uid: String,
        obj: Box<Expr>,
    },
    Quant {
        all: bool,
        var: String,
        slot: usize,
        filter: ObjFilter,
        body: Box<Expr>,
    },
}

impl Expr {
    /// Number of expression nodes, literals included.
    pub fn node_count(&self) -> usize {
        1 + match self {
            Expr::Bool(_) | Expr::Num(_) | Expr::Str(_) | Expr::Var { .. } => 0,
            Expr::Neg(e) | Expr::Not(e) => e.node_count(),
            Expr::Bin(_, a, b) => a.node_count() + b.node_count(),
            Expr::Call(_, args) => args.iter().map(Expr::node_count).sum(),
            Expr::EventActive { filter, .. } => filter.iter().map(|(_, e)| e.node_count()).sum(),
            Expr::EventInvolves { obj, .. } => obj.node_count(),
            Expr::Quant { body, .. } => body.node_count(),
        }
    }

    pub fn collect_uids(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::EventActive { uid, filter } => {
                out.insert(uid.clone());
                for (_, e) in filter {
                    e.collect_uids(out);
                }
            }
            Expr::EventInvolves { uid, obj } => {
                out.insert(uid.clone());
                obj.collect_uids(out);
            }
            _ => self
                .children()
                .into_iter()
                .for_each(|c| c.collect_uids(out)),
        }
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Bool(_) | Expr::Num(_) | Expr::Str(_) | Expr::Var { .. } => vec![],
            Expr::Neg(e) | Expr::Not(e) => vec![e],
            Expr::Bin(_, a, b) => vec![a, b],
            Expr::Call(_, args) => args.iter().collect(),
            Expr::EventActive { filter, .. } => filter.iter().map(|(_, e)| e).collect(),
            Expr::EventInvolves { obj, .. } => vec![obj],
            Expr::Quant { body, .. } => vec![body],
        }
    }

    pub fn children_mut(&mut self) -> Vec<&mut Expr> {
        match self {
            Expr::Bool(_) | Expr::Num(_) | Expr::Str(_) | Expr::Var { .. } => vec![],
            Expr::Neg(e) | Expr::Not(e) => vec![e],
            Expr::Bin(_, a, b) => vec![a, b],
            Expr::Call(_, args) => args.iter_mut().collect(),
            Expr::EventActive { filter, .. } => filter.iter_mut().map(|(_, e)| e).collect(),
            Expr::EventInvolves { obj, .. } => vec![obj],
            Expr::Quant { body, .. } => vec![body],
        }
    }

    /// Static type, assuming the expression already type-checked.
    pub fn ty(&self) -> Ty {
        match self {
            Expr::Bool(_)
            | Expr::Not(_)
            | Expr::EventActive { .. }
            | Expr::EventInvolves { .. } => Ty::Bool,
            Expr::Quant { .. } => Ty::Bool,
            Expr::Num(_) | Expr::Neg(_) => Ty::Num,
            Expr::Str(_) => Ty::Str,
            Expr::Var { .. } => Ty::Obj,
            Expr::Bin(op, ..) => match op {
                BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => Ty::Num,
                _ => Ty::Bool,
            },
            Expr::Call(p, _) => p.ret(),
        }
    }

    /// Names of object variables used but not bound inside the expression.
    pub fn free_vars(&self) -> BTreeSet<String> {
        fn walk(e: &Expr, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
            match e {
                Expr::Var { name, .. } => {
                    if !bound.contains(name) {
                        out.insert(name.clone());
                    }
                }
                Expr::Quant { var, body, .. } => {
                    bound.push(var.clone());
                    walk(body, bound, out);
                    bound.pop();
                }
                _ => e.children().into_iter().for_each(|c| walk(c, bound, out)),
            }
        }
        let mut out = BTreeSet::new();
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    /// Renames free occurrences of variable `from` to `to`.
    pub fn rename_free(&mut self, from: &str, to: &str) {
        match self {
            Expr::Var { name, .. } if name == from => *name = to.to_string(),
            Expr::Quant { var, .. } if var == from => {}
            _ => self
                .children_mut()
                .into_iter()
                .for_each(|c| c.rename_free(from, to)),
        }
    }

    /// Recomputes variable slots from names given the enclosing scope.
    pub fn resolve_slots(&mut self, scope: &mut Vec<String>) -> Result<(), String> {
        match self {
            Expr::Var { name, slot } => {
                *slot = scope
                    .iter()
                    .rposition(|n| n == name)
                    .ok_or_else(|| format!("unbound variable `{name}`"))?;
                Ok(())
            }
            Expr::Quant {
                var, slot, body, ..
            } => {
                *slot = scope.len();
                scope.push(var.clone());
                let r = body.resolve_slots(scope);
                scope.pop();
                r
            }
            _ => {
                for c in self.children_mut() {
                    c.resolve_slots(scope)?;
                }
                Ok(())
            }
        }
    }
}

fn fmt_num(n: f64) -> String {
    if n.fract() == 0.0 && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Num(n) => f.write_str(&fmt_num(*n)),
            Expr::Str(s) => write!(f, "{s:?}"),
            Expr::Var { name, .. } => f.write_str(name),
            Expr::Neg(e) => write!(f, "-({e})"),
            Expr::Not(e) => write!(f, "not ({e})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(p, args) => {
                write!(f, "{}(", p.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Expr::EventActive { uid, filter } => {
                write!(f, "event_active({uid:?}")?;
                if !filter.is_empty() {
                    f.write_str(", {")?;
                    for (i, (k, e)) in filter.iter().enumerate() {
                        if i > 0 {
                            f.write_str(", ")?;
                        }
                        write!(f, "{k}: {e}")?;
                    }
                    f.write_str("}")?;
                }
                f.write_str(")")
            }
            Expr::EventInvolves { uid, obj } => write!(f, "event_involves({uid:?}, {obj})"),
            Expr::Quant {
                all,
                var,
                filter,
                body,
                ..
            } => {
                let q = if *all {
                    "forall_object"
                } else {
                    "exists_object"
                };
                write!(f, "{q}({var}, {filter}, {body})")
            }
        }
    }
}
