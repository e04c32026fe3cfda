use std::fmt;

/// A literal argument value. Parameter maps may also hold object lookups.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Num(f64),
    Str(String),
    Bool(bool),
    Null,
    List(Vec<Value>),
    Map(Vec<(String, Value)>),
    ObjectId { color: String, shape: String },
}

pub type ParamMap = Vec<(String, Value)>;

/// How NEARBY_AT names its object.
#[derive(Clone, Debug, PartialEq)]
pub enum ObjRef {
    Id(i64),
    Lookup { color: String, shape: String },
    /// Free text such as "green ball".
    Name(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CountKind {
    Eq,
    Gt,
    Lt,
}

impl CountKind {
    pub fn keyword(self) -> &'static str {
        match self {
            CountKind::Eq => "COUNT",
            CountKind::Gt => "GT",
            CountKind::Lt => "LT",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RewardExpr {
    Event {
        id: String,
        params: Option<ParamMap>,
    },
    And(Vec<RewardExpr>),
    Or(Vec<RewardExpr>),
    Not(Box<RewardExpr>),
    After {
        a: String,
        b: String,
        min_delta: Option<f64>,
        max_delta: Option<f64>,
        first_params: Option<ParamMap>,
        second_params: Option<ParamMap>,
    },
    Within {
        a: String,
        b: String,
        window: f64,
        event_params: Option<ParamMap>,
        reference_params: Option<ParamMap>,
    },
    Count {
        kind: CountKind,
        id: String,
        count: u64,
        params: Option<ParamMap>,
    },
    NearbyAt {
        obj: ObjRef,
        x: f64,
        y: f64,
        t: f64,
        threshold_strength: f64,
    },
}

impl RewardExpr {
    /// Event identifiers referenced anywhere in the tree.
    pub fn identifiers(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| match e {
            RewardExpr::Event { id, .. } | RewardExpr::Count { id, .. } => out.push(id.as_str()),
            RewardExpr::After { a, b, .. } | RewardExpr::Within { a, b, .. } => {
                out.push(a.as_str());
                out.push(b.as_str());
            }
            _ => {}
        });
        out
    }

    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a RewardExpr)) {
        f(self);
        match self {
            RewardExpr::And(cs) | RewardExpr::Or(cs) => cs.iter().for_each(|c| c.walk(f)),
            RewardExpr::Not(c) => c.walk(f),
            _ => {}
        }
    }

    /// Leaves that earn graded partial credit.
    pub fn is_graded(&self) -> bool {
        matches!(self, RewardExpr::Count { .. } | RewardExpr::NearbyAt { .. })
    }
}

fn num(f: &mut fmt::Formatter<'_>, x: f64) -> fmt::Result {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        write!(f, "{x:.1}")
    } else {
        write!(f, "{x}")
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => num(f, *x),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Bool(b) => write!(f, "{}", if *b { "True" } else { "False" }),
            Value::Null => write!(f, "None"),
            Value::List(xs) => {
                write!(f, "[")?;
                for (k, x) in xs.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, "]")
            }
            Value::Map(m) => write_map(f, m),
            Value::ObjectId { color, shape } => write!(f, "OBJECT_ID({color:?}, {shape:?})"),
        }
    }
}

fn write_map(f: &mut fmt::Formatter<'_>, m: &[(String, Value)]) -> fmt::Result {
    write!(f, "{{")?;
    for (k, (key, v)) in m.iter().enumerate() {
        if k > 0 {
            write!(f, ", ")?;
        }
        write!(f, "{key:?}: {v}")?;
    }
    write!(f, "}}")
}

impl fmt::Display for ObjRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjRef::Id(i) => write!(f, "{i}"),
            ObjRef::Lookup { color, shape } => write!(f, "OBJECT_ID({color:?}, {shape:?})"),
            ObjRef::Name(s) => write!(f, "{s:?}"),
        }
    }
}

fn opt_map(f: &mut fmt::Formatter<'_>, key: &str, m: &Option<ParamMap>) -> fmt::Result {
    if let Some(m) = m {
        write!(f, ", {key}=")?;
        write_map(f, m)?;
    }
    Ok(())
}

impl fmt::Display for RewardExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RewardExpr::Event { id, params } => {
                write!(f, "EVENT({id:?}")?;
                if let Some(m) = params {
                    write!(f, ", ")?;
                    write_map(f, m)?;
                }
                write!(f, ")")
            }
            RewardExpr::And(cs) | RewardExpr::Or(cs) => {
                let op = if matches!(self, RewardExpr::And(_)) { "AND" } else { "OR" };
                write!(f, "{op}(")?;
                for (k, c) in cs.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, ")")
            }
            RewardExpr::Not(c) => write!(f, "NOT({c})"),
            RewardExpr::After {
                a,
                b,
                min_delta,
                max_delta,
                first_params,
                second_params,
            } => {
                write!(f, "AFTER({a:?}, {b:?}")?;
                if let Some(x) = min_delta {
                    write!(f, ", min_delta=")?;
                    num(f, *x)?;
                }
                if let Some(x) = max_delta {
                    write!(f, ", max_delta=")?;
                    num(f, *x)?;
                }
                opt_map(f, "first_params", first_params)?;
                opt_map(f, "second_params", second_params)?;
                write!(f, ")")
            }
            RewardExpr::Within {
                a,
                b,
                window,
                event_params,
                reference_params,
            } => {
                write!(f, "WITHIN({a:?}, {b:?}, ")?;
                num(f, *window)?;
                opt_map(f, "event_params", event_params)?;
                opt_map(f, "reference_params", reference_params)?;
                write!(f, ")")
            }
            RewardExpr::Count {
                kind,
                id,
                count,
                params,
            } => {
                write!(f, "{}({id:?}, {count}", kind.keyword())?;
                opt_map(f, "params", params)?;
                write!(f, ")")
            }
            RewardExpr::NearbyAt {
                obj,
                x,
                y,
                t,
                threshold_strength,
            } => {
                write!(f, "NEARBY_AT({obj}, ")?;
                for v in [x, y, t] {
                    num(f, *v)?;
                    write!(f, ", ")?;
                }
                write!(f, "threshold_strength=")?;
                num(f, *threshold_strength)?;
                write!(f, ")")
            }
        }
    }
}
