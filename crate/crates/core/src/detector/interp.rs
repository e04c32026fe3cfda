use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::ast::{BinOp, Expr, ObjFilter, ParamType, Prim};
use super::DetectorProgram;
use crate::geom::Vec2;
use crate::trace::{
    frame_index, frame_time, is_builtin, Color, Params, ShapeKind, Trace, COLLISION_END,
    COLLISION_START, FLOOR_ID, LEFT_WALL_ID, RIGHT_WALL_ID, SCENE_EXTENT, TOP_WALL_ID,
};

pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmittedEvent {
    pub time: f64,
    pub description: String,
    pub parameters: Params,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error("step budget of {0} evaluations exceeded")]
    Budget(u64),
    #[error("missing dependency `{0}`: no events for this uid in the annotation context")]
    MissingDependency(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub events: Vec<EmittedEvent>,
    pub steps: u64,
    /// Wall-clock seconds; informational only, never used for scoring.
    pub elapsed: f64,
}

/// An event visible to detectors, with its frame index.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextEvent {
    pub time: f64,
    pub frame: usize,
    pub parameters: Params,
}

/// Events available to detectors: the trace's built-ins plus the output of
/// every detector evaluated so far.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnnotationContext {
    events: BTreeMap<String, Vec<ContextEvent>>,
    n_frames: usize,
}

impl AnnotationContext {
    pub fn from_trace(trace: &Trace) -> Self {
        let n = trace.frames.len();
        let mut ctx = AnnotationContext {
            events: BTreeMap::new(),
            n_frames: n,
        };
        for uid in crate::trace::BUILTIN_UIDS {
            ctx.events.insert(uid.to_string(), Vec::new());
        }
        for e in &trace.events {
            ctx.events
                .entry(e.uid.clone())
                .or_default()
                .push(ContextEvent {
                    time: e.time,
                    frame: frame_index(e.time, n),
                    parameters: e.parameters.clone(),
                });
        }
        ctx
    }

    pub fn insert(&mut self, uid: &str, events: &[EmittedEvent]) {
        let n = self.n_frames;
        self.events.insert(
            uid.to_string(),
            events
                .iter()
                .map(|e| ContextEvent {
                    time: e.time,
                    frame: frame_index(e.time, n),
                    parameters: e.parameters.clone(),
                })
                .collect(),
        );
    }

    pub fn contains(&self, uid: &str) -> bool {
        self.events.contains_key(uid)
    }

    pub fn events(&self, uid: &str) -> &[ContextEvent] {
        self.events.get(uid).map_or(&[], Vec::as_slice)
    }

    pub fn uids(&self) -> impl Iterator<Item = &str> {
        self.events.keys().map(String::as_str)
    }
}

#[derive(Clone, Copy, Debug)]
struct State {
    pos: Vec2,
    vel: Vec2,
    angle: f64,
}

/// Per-trace lookup tables shared by every detector run on that trace.
pub struct TraceView {
    n: usize,
    ids: Vec<i64>,
    is_static: Vec<bool>,
    colors: Vec<Color>,
    kinds: Vec<ShapeKind>,
    states: Vec<Vec<Option<State>>>,
    /// Contact intervals as inclusive frame ranges, keyed by (min id, max id).
    contacts: Vec<((i64, i64), usize, usize)>,
}

const BOUNDARIES: [i64; 4] = [TOP_WALL_ID, RIGHT_WALL_ID, LEFT_WALL_ID, FLOOR_ID];

impl TraceView {
    pub fn new(trace: &Trace) -> Self {
        let n = trace.frames.len();
        let mut objs: Vec<_> = trace.scene.objects.iter().collect();
        objs.sort_by_key(|o| o.id);
        let ids: Vec<i64> = objs.iter().map(|o| o.id).collect();
        let states = trace
            .frames
            .iter()
            .map(|f| {
                objs.iter()
                    .map(|o| {
                        let src = if o.is_static {
                            Some(*o)
                        } else {
                            f.object(o.id)
                        };
                        src.map(|s| State {
                            pos: s.position(),
                            vel: if o.is_static { Vec2::ZERO } else { s.velocity },
                            angle: s.angle,
                        })
                    })
                    .collect()
            })
            .collect();
        let mut open: BTreeMap<(i64, i64), usize> = BTreeMap::new();
        let mut contacts = Vec::new();
        for e in &trace.events {
            let Some((a, b)) = e.pair() else { continue };
            let key = (a.min(b), a.max(b));
            let f = frame_index(e.time, n);
            match e.uid.as_str() {
                COLLISION_START => {
                    open.entry(key).or_insert(f);
                }
                COLLISION_END => {
                    if let Some(s) = open.remove(&key) {
                        contacts.push((key, s, f));
                    }
                }
                _ => {}
            }
        }
        for (key, s) in open {
            contacts.push((key, s, n.saturating_sub(1)));
        }
        TraceView {
            n,
            is_static: objs.iter().map(|o| o.is_static).collect(),
            colors: objs.iter().map(|o| o.color).collect(),
            kinds: objs.iter().map(|o| o.kind).collect(),
            ids,
            states,
            contacts,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.n
    }

    fn index(&self, id: i64) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    fn state(&self, id: Option<i64>, frame: usize) -> Option<State> {
        let idx = self.index(id?)?;
        self.states.get(frame)?.get(idx).copied().flatten()
    }

    fn domain(&self, filter: &ObjFilter) -> Vec<i64> {
        let pick = |pred: &dyn Fn(usize) -> bool| {
            (0..self.ids.len())
                .filter(|&i| pred(i))
                .map(|i| self.ids[i])
                .collect()
        };
        match filter {
            ObjFilter::Any => self.ids.clone(),
            ObjFilter::Dynamic => pick(&|i| !self.is_static[i]),
            ObjFilter::Static => pick(&|i| self.is_static[i]),
            ObjFilter::Boundary => BOUNDARIES.to_vec(),
            ObjFilter::Color(c) => pick(&|i| self.colors[i] == *c),
            ObjFilter::Kind(k) => pick(&|i| self.kinds[i] == *k),
        }
    }

    fn in_contact(&self, a: i64, b: i64, frame: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.contacts
            .iter()
            .any(|&(k, s, e)| k == key && s <= frame && frame <= e)
    }

    fn contact_count(&self, a: i64, frame: usize) -> usize {
        let partners: BTreeSet<i64> = self
            .contacts
            .iter()
            .filter(|&&((x, y), s, e)| (x == a || y == a) && s <= frame && frame <= e)
            .map(|&((x, y), _, _)| if x == a { y } else { x })
            .collect();
        partners.len()
    }

    fn first_of_color(&self, c: Color) -> Option<i64> {
        (0..self.ids.len())
            .find(|&i| self.colors[i] == c)
            .map(|i| self.ids[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Val<'a> {
    Bool(bool),
    Num(f64),
    Vec(f64, f64),
    Obj(Option<i64>),
    Str(&'a str),
}

impl<'a> Val<'a> {
    fn b(self) -> bool {
        matches!(self, Val::Bool(true))
    }

    fn n(self) -> f64 {
        match self {
            Val::Num(x) => x,
            _ => 0.0,
        }
    }

    fn obj(self) -> Option<i64> {
        match self {
            Val::Obj(o) => o,
            _ => None,
        }
    }
}

type MemoKey = (usize, usize, [i64; 4], usize);

struct Eval<'a> {
    view: &'a TraceView,
    /// Per dependency uid: events and their indices grouped by frame.
    deps: HashMap<&'a str, (&'a [ContextEvent], Vec<Vec<u32>>)>,
    steps: u64,
    budget: u64,
    memo: HashMap<MemoKey, Val<'a>>,
}

fn param_matches(v: Option<&Value>, want: Val) -> bool {
    let Some(v) = v else { return false };
    match want {
        Val::Obj(Some(id)) => v.as_i64() == Some(id) || v.as_f64() == Some(id as f64),
        Val::Obj(None) => false,
        Val::Num(x) => v.as_f64() == Some(x),
        Val::Bool(b) => v.as_bool() == Some(b),
        Val::Str(s) => v.as_str() == Some(s),
        Val::Vec(..) => false,
    }
}

impl<'a> Eval<'a> {
    fn tick(&mut self) -> Result<(), RunError> {
        self.steps += 1;
        if self.steps > self.budget {
            Err(RunError::Budget(self.budget))
        } else {
            Ok(())
        }
    }

    /// Evaluation at another frame, cached per (node, frame, bindings).
    fn at(&mut self, e: &'a Expr, i: usize, env: &mut Vec<i64>) -> Result<Val<'a>, RunError> {
        if env.len() > 4 {
            return self.eval(e, i, env);
        }
        let mut key_env = [0i64; 4];
        key_env[..env.len()].copy_from_slice(env);
        let key = (e as *const Expr as usize, i, key_env, env.len());
        if let Some(v) = self.memo.get(&key) {
            return Ok(*v);
        }
        let v = self.eval(e, i, env)?;
        self.memo.insert(key, v);
        Ok(v)
    }

    fn window(&self, w: f64) -> usize {
        (w.max(0.0) * (self.view.n.saturating_sub(1)) as f64).round() as usize
    }

    fn eval(&mut self, e: &'a Expr, i: usize, env: &mut Vec<i64>) -> Result<Val<'a>, RunError> {
        self.tick()?;
        Ok(match e {
            Expr::Bool(b) => Val::Bool(*b),
            Expr::Num(x) => Val::Num(*x),
            Expr::Str(s) => Val::Str(s),
            Expr::Var { slot, .. } => Val::Obj(env.get(*slot).copied()),
            Expr::Neg(a) => Val::Num(-self.eval(a, i, env)?.n()),
            Expr::Not(a) => Val::Bool(!self.eval(a, i, env)?.b()),
            Expr::Bin(op, a, b) => {
                match op {
                    BinOp::And => {
                        return Ok(Val::Bool(
                            self.eval(a, i, env)?.b() && self.eval(b, i, env)?.b(),
                        ));
                    }
                    BinOp::Or => {
                        return Ok(Val::Bool(
                            self.eval(a, i, env)?.b() || self.eval(b, i, env)?.b(),
                        ));
                    }
                    _ => {}
                }
                let (x, y) = (self.eval(a, i, env)?, self.eval(b, i, env)?);
                match op {
                    BinOp::Add => Val::Num(x.n() + y.n()),
                    BinOp::Sub => Val::Num(x.n() - y.n()),
                    BinOp::Mul => Val::Num(x.n() * y.n()),
                    BinOp::Div => Val::Num(if y.n() == 0.0 { 0.0 } else { x.n() / y.n() }),
                    BinOp::Lt => Val::Bool(x.n() < y.n()),
                    BinOp::Le => Val::Bool(x.n() <= y.n()),
                    BinOp::Gt => Val::Bool(x.n() > y.n()),
                    BinOp::Ge => Val::Bool(x.n() >= y.n()),
                    BinOp::Eq => Val::Bool(x == y),
                    BinOp::Ne => Val::Bool(x != y),
                    BinOp::And | BinOp::Or => unreachable!(),
                }
            }
            Expr::Call(p, args) => self.call(*p, args, i, env)?,
            Expr::EventActive { uid, filter } => {
                let Some((events, by_frame)) = self.deps.get(uid.as_str()) else {
                    return Err(RunError::MissingDependency(uid.clone()));
                };
                let (events, idxs) = (*events, by_frame.get(i).cloned().unwrap_or_default());
                let mut wanted = Vec::with_capacity(filter.len());
                for (k, fe) in filter {
                    wanted.push((k.as_str(), self.eval(fe, i, env)?));
                }
                Val::Bool(idxs.iter().any(|&ei| {
                    let ev = &events[ei as usize];
                    wanted
                        .iter()
                        .all(|(k, w)| param_matches(ev.parameters.get(*k), *w))
                }))
            }
            Expr::EventInvolves { uid, obj } => {
                let Some((events, by_frame)) = self.deps.get(uid.as_str()) else {
                    return Err(RunError::MissingDependency(uid.clone()));
                };
                let (events, idxs) = (*events, by_frame.get(i).cloned().unwrap_or_default());
                let o = self.eval(obj, i, env)?;
                Val::Bool(idxs.iter().any(|&ei| {
                    let p = &events[ei as usize].parameters;
                    param_matches(p.get("a_id"), o) || param_matches(p.get("b_id"), o)
                }))
            }
            Expr::Quant {
                all, filter, body, ..
            } => {
                let dom = self.view.domain(filter);
                let mut result = *all;
                for id in dom {
                    env.push(id);
                    let v = self.eval(body, i, env);
                    env.pop();
                    let v = v?.b();
                    if *all && !v {
                        result = false;
                        break;
                    }
                    if !*all && v {
                        result = true;
                        break;
                    }
                }
                Val::Bool(result)
            }
        })
    }

    fn call(
        &mut self,
        p: Prim,
        args: &'a [Expr],
        i: usize,
        env: &mut Vec<i64>,
    ) -> Result<Val<'a>, RunError> {
        let view = self.view;
        let n = view.n;
        let obj_state =
            |s: &mut Self, e: &'a Expr, env: &mut Vec<i64>| -> Result<Option<State>, RunError> {
                let o = s.eval(e, i, env)?.obj();
                Ok(view.state(o, i))
            };
        Ok(match p {
            Prim::Contact => {
                let a = self.eval(&args[0], i, env)?.obj();
                let b = self.eval(&args[1], i, env)?.obj();
                Val::Bool(match (a, b) {
                    (Some(a), Some(b)) if a != b => view.in_contact(a, b, i),
                    _ => false,
                })
            }
            Prim::Contacts => {
                let a = self.eval(&args[0], i, env)?.obj();
                Val::Num(a.map_or(0, |a| view.contact_count(a, i)) as f64)
            }
            Prim::Speed => {
                Val::Num(obj_state(self, &args[0], env)?.map_or(0.0, |s| s.vel.length()))
            }
            Prim::VelX => Val::Num(obj_state(self, &args[0], env)?.map_or(0.0, |s| s.vel.x)),
            Prim::VelY => Val::Num(obj_state(self, &args[0], env)?.map_or(0.0, |s| s.vel.y)),
            Prim::PosX => Val::Num(obj_state(self, &args[0], env)?.map_or(0.0, |s| s.pos.x)),
            Prim::PosY => Val::Num(obj_state(self, &args[0], env)?.map_or(0.0, |s| s.pos.y)),
            Prim::Angle => Val::Num(obj_state(self, &args[0], env)?.map_or(0.0, |s| s.angle)),
            Prim::Position => {
                let p = obj_state(self, &args[0], env)?.map_or(Vec2::ZERO, |s| s.pos);
                Val::Vec(p.x, p.y)
            }
            Prim::Distance => {
                let a = obj_state(self, &args[0], env)?;
                let b = obj_state(self, &args[1], env)?;
                Val::Num(match (a, b) {
                    (Some(a), Some(b)) => a.pos.distance(b.pos),
                    _ => 0.0,
                })
            }
            Prim::GridCell | Prim::GridCol | Prim::GridRow => {
                let s = obj_state(self, &args[0], env)?;
                let g = self.eval(&args[1], i, env)?.n().round().max(1.0);
                let (col, row) = match s {
                    Some(s) => {
                        let cell = |v: f64| (v / SCENE_EXTENT * g).floor().clamp(0.0, g - 1.0);
                        (cell(s.pos.x), cell(s.pos.y))
                    }
                    None => (-1.0, -1.0),
                };
                match p {
                    Prim::GridCol => Val::Num(col),
                    Prim::GridRow => Val::Num(row),
                    _ => Val::Vec(col, row),
                }
            }
            Prim::IsStatic => {
                let o = self.eval(&args[0], i, env)?.obj();
                Val::Bool(match o {
                    Some(id) if id < 0 => true,
                    Some(id) => view.index(id).is_some_and(|k| view.is_static[k]),
                    None => false,
                })
            }
            Prim::Object => {
                let c = match &args[0] {
                    Expr::Str(s) => s.parse::<Color>().ok(),
                    _ => None,
                };
                Val::Obj(c.and_then(|c| view.first_of_color(c)))
            }
            Prim::Delta => {
                if i == 0 {
                    Val::Num(0.0)
                } else {
                    let now = self.at(&args[0], i, env)?.n();
                    let prev = self.at(&args[0], i - 1, env)?.n();
                    Val::Num(now - prev)
                }
            }
            Prim::Changed => {
                if i == 0 {
                    Val::Bool(false)
                } else {
                    let now = self.at(&args[0], i, env)?;
                    let prev = self.at(&args[0], i - 1, env)?;
                    Val::Bool(now != prev)
                }
            }
            Prim::SignFlip => {
                if i == 0 || i + 1 >= n {
                    Val::Bool(false)
                } else {
                    let before = self.at(&args[0], i - 1, env)?.n();
                    let after = self.at(&args[0], i + 1, env)?.n();
                    Val::Bool(before * after < 0.0 && before.abs().max(after.abs()) > 1e-6)
                }
            }
            Prim::RisingEdge => {
                let now = self.at(&args[0], i, env)?.b();
                Val::Bool(now && (i == 0 || !self.at(&args[0], i - 1, env)?.b()))
            }
            Prim::Sustained => {
                let w = self.eval(&args[1], i, env)?.n();
                let k = self.window(w);
                if i < k {
                    Val::Bool(false)
                } else {
                    let mut ok = true;
                    for j in (i - k..=i).rev() {
                        if !self.at(&args[0], j, env)?.b() {
                            ok = false;
                            break;
                        }
                    }
                    Val::Bool(ok)
                }
            }
            Prim::WithinAfter => {
                if !self.at(&args[1], i, env)?.b() {
                    Val::Bool(false)
                } else {
                    let w = self.eval(&args[2], i, env)?.n();
                    let k = self.window(w);
                    let mut found = false;
                    for j in (i.saturating_sub(k)..=i).rev() {
                        if self.at(&args[0], j, env)?.b() {
                            found = true;
                            break;
                        }
                    }
                    Val::Bool(found)
                }
            }
            Prim::CountSince => {
                let t0 = self.eval(&args[1], i, env)?.n();
                let start = frame_index(t0, n);
                let mut count = 0;
                if start <= i {
                    for j in start..=i {
                        if self.at(&args[0], j, env)?.b() {
                            count += 1;
                        }
                    }
                }
                Val::Num(count as f64)
            }
            Prim::Variance => {
                let w = self.eval(&args[1], i, env)?.n();
                let k = self.window(w);
                let lo = i.saturating_sub(k);
                let mut xs = Vec::with_capacity(i - lo + 1);
                for j in lo..=i {
                    xs.push(self.at(&args[0], j, env)?.n());
                }
                let m = xs.iter().sum::<f64>() / xs.len() as f64;
                Val::Num(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64)
            }
            Prim::Time => Val::Num(frame_time(i, n)),
            Prim::Frame => Val::Num(i as f64),
            Prim::Abs => Val::Num(self.eval(&args[0], i, env)?.n().abs()),
            Prim::Min => {
                let (a, b) = (
                    self.eval(&args[0], i, env)?.n(),
                    self.eval(&args[1], i, env)?.n(),
                );
                Val::Num(a.min(b))
            }
            Prim::Max => {
                let (a, b) = (
                    self.eval(&args[0], i, env)?.n(),
                    self.eval(&args[1], i, env)?.n(),
                );
                Val::Num(a.max(b))
            }
        })
    }

    fn domains(&self, body: &Expr) -> Vec<Vec<i64>> {
        let mut out = Vec::new();
        let mut e = body;
        while let Expr::Quant {
            all: false,
            filter,
            body,
            ..
        } = e
        {
            out.push(self.view.domain(filter));
            e = body;
        }
        out
    }
}

fn chain_core(body: &Expr) -> &Expr {
    let mut e = body;
    while let Expr::Quant {
        all: false, body, ..
    } = e
    {
        e = body;
    }
    e
}

fn to_json(v: Val, ty: ParamType) -> Option<Value> {
    Some(match (ty, v) {
        (ParamType::Int, Val::Obj(o)) => json!(o?),
        (ParamType::Int, Val::Num(x)) if x.is_finite() => json!(x.round() as i64),
        (ParamType::Float, Val::Num(x)) if x.is_finite() => json!(x),
        (ParamType::Bool, Val::Bool(b)) => json!(b),
        (ParamType::Text, Val::Str(s)) => json!(s),
        _ => return None,
    })
}

/// Runs a detector over one trace using a prebuilt view.
pub fn run_on_view(
    program: &DetectorProgram,
    view: &TraceView,
    ctx: &AnnotationContext,
    budget: u64,
) -> Result<RunOutput, RunError> {
    #[cfg(not(target_arch = "wasm32"))]
    let start = std::time::Instant::now();
    let n = view.n;
    let mut deps = HashMap::new();
    for uid in &program.depends_on {
        if !ctx.contains(uid) {
            return Err(RunError::MissingDependency(uid.clone()));
        }
        let events = ctx.events(uid);
        let mut by_frame = vec![Vec::new(); n];
        for (k, e) in events.iter().enumerate() {
            if let Some(slot) = by_frame.get_mut(e.frame) {
                slot.push(k as u32);
            }
        }
        deps.insert(uid.as_str(), (events, by_frame));
    }
    let mut ev = Eval {
        view,
        deps,
        steps: 0,
        budget,
        memo: HashMap::new(),
    };
    let domains = ev.domains(&program.body);
    let core = chain_core(&program.body);
    let mut events = Vec::new();
    let mut seen = BTreeSet::new();
    let mut env = Vec::new();
    for i in 0..n {
        let mut bindings: Vec<Vec<i64>> = Vec::new();
        enumerate(&mut ev, core, &domains, i, &mut env, &mut bindings)?;
        for binding in bindings {
            let mut params = Params::new();
            let mut complete = true;
            let mut env = binding;
            for ((key, ty), (_, e)) in program.params.iter().zip(&program.emit) {
                let v = ev.eval(e, i, &mut env)?;
                match to_json(v, *ty) {
                    Some(j) => {
                        params.insert(key.clone(), j);
                    }
                    None => complete = false,
                }
            }
            if !complete {
                continue;
            }
            let time = frame_time(i, n);
            let key = (i, serde_json::to_string(&params).unwrap_or_default());
            if seen.insert(key) {
                events.push(EmittedEvent {
                    time,
                    description: program.name.clone(),
                    parameters: params,
                });
            }
        }
    }
    #[cfg(not(target_arch = "wasm32"))]
    let elapsed = start.elapsed().as_secs_f64();
    #[cfg(target_arch = "wasm32")]
    let elapsed = 0.0;
    Ok(RunOutput {
        events,
        steps: ev.steps,
        elapsed,
    })
}

fn enumerate<'a>(
    ev: &mut Eval<'a>,
    core: &'a Expr,
    domains: &[Vec<i64>],
    i: usize,
    env: &mut Vec<i64>,
    out: &mut Vec<Vec<i64>>,
) -> Result<(), RunError> {
    let depth = env.len();
    if depth == domains.len() {
        if ev.eval(core, i, env)?.b() {
            out.push(env.clone());
        }
        return Ok(());
    }
    for &id in &domains[depth] {
        env.push(id);
        let r = enumerate(ev, core, domains, i, env, out);
        env.pop();
        r?;
    }
    Ok(())
}

pub fn run_detector(
    program: &DetectorProgram,
    trace: &Trace,
    ctx: &AnnotationContext,
) -> Result<RunOutput, RunError> {
    run_on_view(program, &TraceView::new(trace), ctx, DEFAULT_STEP_BUDGET)
}

/// Uids a detector may reference: built-ins plus the given library uids.
pub fn known_uids<'a>(library: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut v: Vec<String> = crate::trace::BUILTIN_UIDS
        .iter()
        .map(|s| s.to_string())
        .collect();
    v.extend(
        library
            .into_iter()
            .filter(|u| !is_builtin(u))
            .map(str::to_string),
    );
    v
}
