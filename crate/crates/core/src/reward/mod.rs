//! Reward programs: a small call-expression language over annotated traces
//! with boolean satisfaction and dense partial credit.

mod ast;
mod parse;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

pub use ast::{CountKind, ObjRef, ParamMap, RewardExpr, Value};
pub use parse::PREDICATES;

use crate::annotate::{annotate_full, AstExport, LibraryError, PatternLibrary};
use crate::detector::TraceView;
use crate::geom::Vec2;
use crate::lex::Pos;
use crate::trace::{color_filter, object_lookup, shape_filter, Color, ShapeKind, Trace, BUILTIN_UIDS, SCENE_EXTENT};

pub const DEFAULT_THRESHOLD_STRENGTH: f64 = 0.1;
/// Count deviation at which COUNT-family partial credit reaches 0.
pub const COUNT_CAP: f64 = 10.0;
const NUM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Syntax,
    UnknownPredicate,
    BadKeyword,
    Arity,
    InvalidArgument,
    UnknownIdentifier,
    UnknownObject,
}

/// Parse or evaluation failure, phrased so it can be fed back to a
/// program generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardError {
    pub kind: ErrorKind,
    pub pos: Option<Pos>,
    pub message: String,
    pub expected: Option<String>,
    pub found: Option<String>,
    pub hint: String,
}

impl fmt::Display for RewardError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = self.pos {
            write!(f, "{p}: ")?;
        }
        write!(f, "{} (hint: {})", self.message, self.hint)
    }
}

impl std::error::Error for RewardError {}

#[derive(Clone, Debug, PartialEq)]
pub struct RewardProgram {
    pub root: RewardExpr,
    pub source: String,
}

impl fmt::Display for RewardProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}

/// Parses reward source. Identifiers are not checked here; see
/// [`EvalContext::validate`].
pub fn parse_reward(source: &str) -> Result<RewardProgram, RewardError> {
    Ok(RewardProgram {
        root: parse::parse(source)?,
        source: source.to_string(),
    })
}

/// Which event must come later in `AFTER(a, b)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AfterConvention {
    /// `a` happens after `b`.
    #[default]
    FirstLater,
    /// `b` happens after `a`.
    FirstEarlier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtxEvent {
    pub uid: String,
    pub label: String,
    pub time: f64,
    pub parameters: crate::trace::Params,
}

pub struct EvalContext<'a> {
    pub trace: &'a Trace,
    pub events: Vec<CtxEvent>,
    uids: BTreeSet<String>,
    labels: BTreeSet<String>,
    pub after: AfterConvention,
}

impl<'a> EvalContext<'a> {
    /// `labels` maps uid to label for every pattern the program may name.
    pub fn new<I>(trace: &'a Trace, mut events: Vec<CtxEvent>, labels: I) -> Self
    where
        I: IntoIterator<Item = (String, String)>,
    {
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut uids: BTreeSet<String> = BUILTIN_UIDS.iter().map(|s| s.to_string()).collect();
        let mut lab = BTreeSet::new();
        for (u, l) in labels {
            uids.insert(u);
            lab.insert(l.to_lowercase());
        }
        EvalContext {
            trace,
            events,
            uids,
            labels: lab,
            after: AfterConvention::default(),
        }
    }

    pub fn from_export(trace: &'a Trace, export: &AstExport) -> Self {
        let events = export
            .events
            .iter()
            .map(|e| CtxEvent {
                uid: e.uid.clone(),
                label: e.label.clone(),
                time: e.time,
                parameters: e.parameters.clone(),
            })
            .collect();
        EvalContext::new(trace, events, export.labels.clone())
    }

    /// Annotates `trace` with `library` and wraps the result.
    pub fn from_library(trace: &'a Trace, library: &PatternLibrary) -> Result<Self, LibraryError> {
        let view = TraceView::new(trace);
        let ann = annotate_full(&view, trace, library)?;
        let export = AstExport::new("", trace, &ann.matrix);
        let labels: Vec<(String, String)> = library.iter().map(|d| (d.uid.clone(), d.label.clone())).collect();
        let mut ctx = EvalContext::from_export(trace, &export);
        for (u, l) in labels {
            ctx.uids.insert(u);
            ctx.labels.insert(l.to_lowercase());
        }
        Ok(ctx)
    }

    pub fn with_after(mut self, c: AfterConvention) -> Self {
        self.after = c;
        self
    }

    /// Every identifier the program may use, uids first.
    pub fn identifiers(&self) -> Vec<String> {
        self.uids.iter().cloned().chain(self.labels.iter().cloned()).collect()
    }

    pub fn validate(&self, program: &RewardProgram) -> Result<(), RewardError> {
        check_identifiers(program, &self.uids, &self.labels)
    }

    fn object_error(&self, what: &str) -> RewardError {
        let ids: Vec<String> = self
            .trace
            .scene
            .objects
            .iter()
            .map(|o| format!("{} ({})", o.id, o.description))
            .collect();
        RewardError {
            kind: ErrorKind::UnknownObject,
            pos: None,
            message: format!("no object matches {what}"),
            expected: Some("an object in the scene".into()),
            found: Some(what.to_string()),
            hint: format!("scene objects: {}", ids.join(", ")),
        }
    }

    fn resolve(&self, obj: &ObjRef) -> Result<i64, RewardError> {
        let objects = &self.trace.scene.objects;
        match obj {
            ObjRef::Id(i) => self
                .trace
                .scene
                .object(*i)
                .map(|o| o.id)
                .ok_or_else(|| self.object_error(&format!("id {i}"))),
            ObjRef::Lookup { color, shape } => object_lookup(
                objects,
                color_filter(color).unwrap_or(None),
                shape_filter(shape).unwrap_or(None),
            )
            .map_err(|_| self.object_error(&format!("OBJECT_ID({color:?}, {shape:?})"))),
            ObjRef::Name(n) => object_by_name(self.trace, n).ok_or_else(|| self.object_error(&format!("{n:?}"))),
        }
    }
}

fn check_identifiers(program: &RewardProgram, uids: &BTreeSet<String>, labels: &BTreeSet<String>) -> Result<(), RewardError> {
    for id in program.root.identifiers() {
        if !uids.contains(id) && !labels.contains(&id.to_lowercase()) {
            let known: Vec<&str> = uids.iter().chain(labels).map(String::as_str).collect();
            return Err(RewardError {
                kind: ErrorKind::UnknownIdentifier,
                pos: None,
                message: format!("unknown event identifier `{id}`"),
                expected: Some("a library uid, label or built-in event".into()),
                found: Some(id.to_string()),
                hint: format!("use one of: {}", known.join(", ")),
            });
        }
    }
    Ok(())
}

/// Checks event identifiers against built-ins and a library without a trace.
pub fn validate_against_library(program: &RewardProgram, library: &PatternLibrary) -> Result<(), RewardError> {
    let mut uids: BTreeSet<String> = BUILTIN_UIDS.iter().map(|s| s.to_string()).collect();
    let mut labels = BTreeSet::new();
    for d in library.iter() {
        uids.insert(d.uid.clone());
        labels.insert(d.label.to_lowercase());
    }
    check_identifiers(program, &uids, &labels)
}

/// Checks that every object reference resolves in `scene` once the red
/// action ball is added.
pub fn validate_objects(program: &RewardProgram, scene: &crate::trace::Scene) -> Result<(), RewardError> {
    let mut scene = scene.clone();
    let placeholder = crate::trace::Action::new(0.0, 0.0, crate::trace::Action::MIN_RADIUS);
    scene.objects.push(crate::sim::action_ball(&scene, &placeholder));
    let trace = Trace {
        action: placeholder,
        scene,
        frames: Vec::new(),
        events: Vec::new(),
    };
    let ctx = EvalContext::new(&trace, Vec::new(), std::iter::empty::<(String, String)>());
    fn values<'v>(v: &'v Value, out: &mut Vec<&'v Value>) {
        match v {
            Value::List(xs) => xs.iter().for_each(|x| values(x, out)),
            Value::Map(m) => m.iter().for_each(|(_, x)| values(x, out)),
            Value::ObjectId { .. } => out.push(v),
            _ => {}
        }
    }
    let mut refs: Vec<ObjRef> = Vec::new();
    program.root.walk(&mut |e| {
        let mut vs = Vec::new();
        let maps: Vec<&ParamMap> = match e {
            RewardExpr::NearbyAt { obj, .. } => {
                refs.push(obj.clone());
                Vec::new()
            }
            RewardExpr::Event { params, .. } | RewardExpr::Count { params, .. } => params.iter().collect(),
            RewardExpr::After {
                first_params,
                second_params,
                ..
            } => first_params.iter().chain(second_params).collect(),
            RewardExpr::Within {
                event_params,
                reference_params,
                ..
            } => event_params.iter().chain(reference_params).collect(),
            _ => Vec::new(),
        };
        for m in maps {
            m.iter().for_each(|(_, v)| values(v, &mut vs));
        }
        for v in vs {
            if let Value::ObjectId { color, shape } = v {
                refs.push(ObjRef::Lookup {
                    color: color.clone(),
                    shape: shape.clone(),
                });
            }
        }
    });
    for r in &refs {
        ctx.resolve(r)?;
    }
    Ok(())
}

/// Resolves names like "green ball" or "blue jar"; a bare integer is an id.
pub fn object_by_name(trace: &Trace, name: &str) -> Option<i64> {
    if let Ok(i) = name.trim().parse::<i64>() {
        return trace.scene.object(i).map(|o| o.id);
    }
    let mut color = None;
    let mut shape = None;
    for w in name.split_whitespace().map(str::to_lowercase) {
        if let Ok(c) = w.parse::<Color>() {
            color = Some(c);
            continue;
        }
        let w = match w.as_str() {
            "ball" => "circle",
            "bucket" | "cup" => "jar",
            "sticks" | "stick" => "standingsticks",
            other => other,
        };
        if let Ok(k) = w.parse::<ShapeKind>() {
            shape = Some(k);
        }
    }
    if color.is_none() && shape.is_none() {
        return None;
    }
    object_lookup(&trace.scene.objects, color, shape).ok()
}

fn id_matches(e: &CtxEvent, id: &str) -> bool {
    e.uid == id || e.label.to_lowercase() == id.to_lowercase()
}

fn value_matches(ctx: &EvalContext, want: &Value, got: &Json) -> Result<bool, RewardError> {
    Ok(match (want, got) {
        (Value::Num(a), Json::Number(b)) => b.as_f64().is_some_and(|b| (a - b).abs() <= NUM_TOL),
        (Value::Str(a), Json::String(b)) => a.to_lowercase() == b.to_lowercase(),
        (Value::Str(a), Json::Number(b)) => match (object_by_name(ctx.trace, a), b.as_f64()) {
            (Some(id), Some(b)) => (id as f64 - b).abs() <= NUM_TOL,
            _ => false,
        },
        (Value::Bool(a), Json::Bool(b)) => a == b,
        (Value::Null, Json::Null) => true,
        (Value::List(xs), Json::Array(ys)) => {
            if xs.len() != ys.len() {
                return Ok(false);
            }
            for (x, y) in xs.iter().zip(ys) {
                if !value_matches(ctx, x, y)? {
                    return Ok(false);
                }
            }
            true
        }
        (Value::Map(m), Json::Object(o)) => {
            for (k, v) in m {
                match o.get(k) {
                    Some(g) if value_matches(ctx, v, g)? => {}
                    _ => return Ok(false),
                }
            }
            true
        }
        (Value::ObjectId { color, shape }, Json::Number(b)) => {
            let id = ctx.resolve(&ObjRef::Lookup {
                color: color.clone(),
                shape: shape.clone(),
            })?;
            b.as_f64().is_some_and(|b| (id as f64 - b).abs() <= NUM_TOL)
        }
        _ => false,
    })
}

/// True when the event carries `id` as uid (exact) or label (any case) and
/// every requested parameter is present and equal.
pub fn match_event(ctx: &EvalContext, event: &CtxEvent, id: &str, params: Option<&ParamMap>) -> Result<bool, RewardError> {
    if !id_matches(event, id) {
        return Ok(false);
    }
    for (k, v) in params.into_iter().flatten() {
        match event.parameters.get(k) {
            Some(g) if value_matches(ctx, v, g)? => {}
            _ => return Ok(false),
        }
    }
    Ok(true)
}

fn matching<'c>(ctx: &'c EvalContext, id: &str, params: Option<&ParamMap>) -> Result<Vec<&'c CtxEvent>, RewardError> {
    let mut out = Vec::new();
    for e in &ctx.events {
        if match_event(ctx, e, id, params)? {
            out.push(e);
        }
    }
    Ok(out)
}

fn after(
    ctx: &EvalContext,
    a: &str,
    b: &str,
    min: Option<f64>,
    max: Option<f64>,
    pa: Option<&ParamMap>,
    pb: Option<&ParamMap>,
) -> Result<bool, RewardError> {
    let ea = matching(ctx, a, pa)?;
    let eb = matching(ctx, b, pb)?;
    for x in &ea {
        for y in &eb {
            let d = match ctx.after {
                AfterConvention::FirstLater => x.time - y.time,
                AfterConvention::FirstEarlier => y.time - x.time,
            };
            if d > 0.0 && min.is_none_or(|m| d >= m) && max.is_none_or(|m| d <= m) {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Partial credit from a distance beyond a target, 1 at 0 and 0 at `cap`.
pub fn inverse_log_grade(excess: f64, cap: f64) -> f64 {
    (1.0 - (1.0 + excess.max(0.0)).ln() / (1.0 + cap).ln()).clamp(0.0, 1.0)
}

fn count_deviation(kind: CountKind, actual: u64, target: u64) -> f64 {
    let (a, c) = (actual as f64, target as f64);
    match kind {
        CountKind::Eq => (a - c).abs(),
        CountKind::Gt => (c + 1.0 - a).max(0.0),
        CountKind::Lt => (a - c + 1.0).max(0.0),
    }
}

/// Truth value and graded score of one node.
fn eval_node(ctx: &EvalContext, e: &RewardExpr) -> Result<(bool, f64), RewardError> {
    let b = |v: bool| (v, if v { 1.0 } else { 0.0 });
    Ok(match e {
        RewardExpr::Event { id, params } => b(!matching(ctx, id, params.as_ref())?.is_empty()),
        RewardExpr::And(cs) => {
            let mut all = true;
            for c in cs {
                all &= eval_node(ctx, c)?.0;
            }
            b(all)
        }
        RewardExpr::Or(cs) => {
            let mut any = false;
            for c in cs {
                any |= eval_node(ctx, c)?.0;
            }
            b(any)
        }
        RewardExpr::Not(c) => b(!eval_node(ctx, c)?.0),
        RewardExpr::After {
            a,
            b: bb,
            min_delta,
            max_delta,
            first_params,
            second_params,
        } => b(after(
            ctx,
            a,
            bb,
            *min_delta,
            *max_delta,
            first_params.as_ref(),
            second_params.as_ref(),
        )?),
        RewardExpr::Within {
            a,
            b: bb,
            window,
            event_params,
            reference_params,
        } => b(after(
            ctx,
            a,
            bb,
            None,
            Some(*window),
            event_params.as_ref(),
            reference_params.as_ref(),
        )?),
        RewardExpr::Count {
            kind,
            id,
            count,
            params,
        } => {
            let n = matching(ctx, id, params.as_ref())?.len() as u64;
            let ok = match kind {
                CountKind::Eq => n == *count,
                CountKind::Gt => n > *count,
                CountKind::Lt => n < *count,
            };
            (ok, inverse_log_grade(count_deviation(*kind, n, *count), COUNT_CAP))
        }
        RewardExpr::NearbyAt {
            obj,
            x,
            y,
            t,
            threshold_strength,
        } => {
            let id = ctx.resolve(obj)?;
            let thr = threshold_strength * SCENE_EXTENT;
            match ctx.trace.position_at_time(id, *t) {
                Some(p) => {
                    let d = p.distance(Vec2::new(*x, *y));
                    (d <= thr, inverse_log_grade(d - thr, SCENE_EXTENT))
                }
                None => (false, 0.0),
            }
        }
    })
}

pub fn eval_bool(program: &RewardProgram, ctx: &EvalContext) -> Result<bool, RewardError> {
    ctx.validate(program)?;
    Ok(eval_node(ctx, &program.root)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClauseScore {
    pub clause: String,
    #[serde(rename = "bool")]
    pub satisfied: bool,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardEval {
    #[serde(rename = "bool")]
    pub satisfied: bool,
    pub score: f64,
    pub per_clause: Vec<ClauseScore>,
}

/// Mean clause score over the children of a top-level AND; any other root
/// is a single clause. Only NEARBY_AT and the COUNT family are graded.
pub fn eval_partial(program: &RewardProgram, ctx: &EvalContext) -> Result<RewardEval, RewardError> {
    ctx.validate(program)?;
    let clauses: Vec<&RewardExpr> = match &program.root {
        RewardExpr::And(cs) => cs.iter().collect(),
        other => vec![other],
    };
    let mut per_clause = Vec::new();
    for c in clauses {
        let (ok, grade) = eval_node(ctx, c)?;
        per_clause.push(ClauseScore {
            clause: c.to_string(),
            satisfied: ok,
            score: if c.is_graded() { if ok { 1.0 } else { grade } } else if ok { 1.0 } else { 0.0 },
        });
    }
    let score = per_clause.iter().map(|c| c.score).sum::<f64>() / per_clause.len() as f64;
    Ok(RewardEval {
        satisfied: per_clause.iter().all(|c| c.satisfied),
        score,
        per_clause,
    })
}
