//! Simulation traces: the action, initial scene, per-timestep frames and the
//! event list, together with their canonical JSON encoding.
//!
//! Times are normalized to `[0, 1]`; frame `i` of an `N`-frame trace sits at
//! `i / (N - 1)`. Canonical output sorts object keys and rounds every real
//! number to 9 significant digits so that two runs can be compared byte for
//! byte.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::geom::{self, Vec2};

pub const SCENE_EXTENT: f64 = 256.0;

/// Reserved ids of the implicit boundary bodies.
pub const FLOOR_ID: i64 = -1;
pub const LEFT_WALL_ID: i64 = -2;
pub const RIGHT_WALL_ID: i64 = -3;
pub const TOP_WALL_ID: i64 = -4;

pub const COLLISION_START: &str = "CollisionStart";
pub const COLLISION_END: &str = "CollisionEnd";
pub const TASK_COMPLETE: &str = "TaskComplete";
pub const BUILTIN_UIDS: [&str; 3] = [COLLISION_START, COLLISION_END, TASK_COMPLETE];

pub fn is_builtin(uid: &str) -> bool {
    BUILTIN_UIDS.contains(&uid)
}

pub fn is_boundary(id: i64) -> bool {
    (TOP_WALL_ID..=FLOOR_ID).contains(&id)
}

pub fn boundary_name(id: i64) -> Option<&'static str> {
    match id {
        FLOOR_ID => Some("floor"),
        LEFT_WALL_ID => Some("left-wall"),
        RIGHT_WALL_ID => Some("right-wall"),
        TOP_WALL_ID => Some("top-wall"),
        _ => None,
    }
}

/// Event parameters: name to number, text, boolean or list.
pub type Params = BTreeMap<String, Value>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Black,
}

impl Color {
    pub const ALL: [Color; 4] = [Color::Red, Color::Green, Color::Blue, Color::Black];

    pub fn as_str(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Black => "black",
        }
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Red => [220, 40, 40],
            Color::Green => [40, 180, 60],
            Color::Blue => [40, 80, 220],
            Color::Black => [20, 20, 20],
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Color {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Color::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown color `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Circle,
    Bar,
    Jar,
    StandingSticks,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [
        ShapeKind::Circle,
        ShapeKind::Bar,
        ShapeKind::Jar,
        ShapeKind::StandingSticks,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ShapeKind::Circle => "circle",
            ShapeKind::Bar => "bar",
            ShapeKind::Jar => "jar",
            ShapeKind::StandingSticks => "standingsticks",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ShapeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown shape `{s}`"))
    }
}

/// World-space geometry of an object.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Circle {
        center: Vec2,
        radius: f64,
    },
    /// Convex pieces `polygon_0 .. polygon_k` in index order.
    Polygons(Vec<Vec<Vec2>>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub position: Vec2,
    pub radius: f64,
}

impl Action {
    pub const MIN_RADIUS: f64 = 4.0;
    pub const MAX_RADIUS: f64 = 32.0;

    pub fn new(x: f64, y: f64, radius: f64) -> Self {
        Action {
            position: Vec2::new(x, y),
            radius,
        }
    }

    pub fn in_bounds(&self) -> bool {
        let p = self.position;
        (0.0..=SCENE_EXTENT).contains(&p.x)
            && (0.0..=SCENE_EXTENT).contains(&p.y)
            && (Self::MIN_RADIUS..=Self::MAX_RADIUS).contains(&self.radius)
    }

    pub fn clamped(self) -> Action {
        Action::new(
            self.position.x.clamp(0.0, SCENE_EXTENT),
            self.position.y.clamp(0.0, SCENE_EXTENT),
            self.radius.clamp(Self::MIN_RADIUS, Self::MAX_RADIUS),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawObject", into = "RawObject")]
pub struct SceneObject {
    pub description: String,
    pub id: i64,
    pub kind: ShapeKind,
    pub color: Color,
    pub velocity: Vec2,
    pub angle: f64,
    pub is_static: bool,
    pub shape: Shape,
}

impl SceneObject {
    pub fn describe(color: Color, kind: ShapeKind, id: i64) -> String {
        format!("{color}-{kind}-{id}")
    }

    /// Reference point of the object: circle center, or area-weighted
    /// centroid of the polygon pieces.
    pub fn position(&self) -> Vec2 {
        match &self.shape {
            Shape::Circle { center, .. } => *center,
            Shape::Polygons(polys) => geom::compound_centroid(polys),
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.length()
    }

    pub fn translate(&mut self, d: Vec2) {
        match &mut self.shape {
            Shape::Circle { center, .. } => *center = *center + d,
            Shape::Polygons(polys) => polys.iter_mut().flatten().for_each(|v| *v = *v + d),
        }
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vec2> + '_ {
        let polys: &[Vec<Vec2>] = match &self.shape {
            Shape::Circle { .. } => &[],
            Shape::Polygons(p) => p,
        };
        polys.iter().flatten().copied()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawParams {
    Circle { center: Vec2, radius: f64 },
    Polygons(BTreeMap<String, Vec<Vec2>>),
}

#[derive(Serialize, Deserialize)]
struct RawObject {
    description: String,
    id: i64,
    #[serde(rename = "type")]
    kind: ShapeKind,
    color: Color,
    velocity: Vec2,
    angle: f64,
    #[serde(rename = "static")]
    is_static: bool,
    obj_params: RawParams,
}

impl TryFrom<RawObject> for SceneObject {
    type Error = String;

    fn try_from(raw: RawObject) -> Result<Self, String> {
        let shape = match (raw.kind, raw.obj_params) {
            (ShapeKind::Circle, RawParams::Circle { center, radius }) => {
                Shape::Circle { center, radius }
            }
            (ShapeKind::Circle, RawParams::Polygons(_)) => {
                return Err("circle objects need obj_params {center, radius}".into())
            }
            (_, RawParams::Circle { .. }) => {
                return Err(format!("{} objects need polygon_N obj_params", raw.kind))
            }
            (_, RawParams::Polygons(map)) => {
                let mut indexed = Vec::with_capacity(map.len());
                for (key, verts) in map {
                    let idx = key
                        .strip_prefix("polygon_")
                        .and_then(|s| s.parse::<usize>().ok())
                        .ok_or_else(|| format!("unexpected obj_params key `{key}`"))?;
                    indexed.push((idx, verts));
                }
                indexed.sort_by_key(|(i, _)| *i);
                if indexed.iter().enumerate().any(|(k, (i, _))| k != *i) {
                    return Err("polygon keys must be polygon_0..polygon_k without gaps".into());
                }
                Shape::Polygons(indexed.into_iter().map(|(_, v)| v).collect())
            }
        };
        Ok(SceneObject {
            description: raw.description,
            id: raw.id,
            kind: raw.kind,
            color: raw.color,
            velocity: raw.velocity,
            angle: raw.angle,
            is_static: raw.is_static,
            shape,
        })
    }
}

impl From<SceneObject> for RawObject {
    fn from(o: SceneObject) -> Self {
        let obj_params = match o.shape {
            Shape::Circle { center, radius } => RawParams::Circle { center, radius },
            Shape::Polygons(polys) => RawParams::Polygons(
                polys
                    .into_iter()
                    .enumerate()
                    .map(|(i, p)| (format!("polygon_{i}"), p))
                    .collect(),
            ),
        };
        RawObject {
            description: o.description,
            id: o.id,
            kind: o.kind,
            color: o.color,
            velocity: o.velocity,
            angle: o.angle,
            is_static: o.is_static,
            obj_params,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn object(&self, id: i64) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn first_of_color(&self, color: Color) -> Option<&SceneObject> {
        self.objects
            .iter()
            .filter(|o| o.color == color)
            .min_by_key(|o| o.id)
    }

    pub fn next_id(&self) -> i64 {
        self.objects
            .iter()
            .map(|o| o.id + 1)
            .max()
            .unwrap_or(0)
            .max(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub time: f64,
    pub objects: Vec<SceneObject>,
}

impl Frame {
    pub fn object(&self, id: i64) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: f64,
    pub uid: String,
    #[serde(default)]
    pub parameters: Params,
}

impl TraceEvent {
    pub fn param_i64(&self, key: &str) -> Option<i64> {
        let v = self.parameters.get(key)?;
        v.as_i64().or_else(|| v.as_f64().map(|f| f.round() as i64))
    }

    /// Ids of the two bodies of a collision event.
    pub fn pair(&self) -> Option<(i64, i64)> {
        Some((self.param_i64("a_id")?, self.param_i64("b_id")?))
    }

    pub fn involves(&self, id: i64) -> bool {
        self.pair().is_some_and(|(a, b)| a == id || b == id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub action: Action,
    pub scene: Scene,
    pub frames: Vec<Frame>,
    pub events: Vec<TraceEvent>,
}

/// Maps a normalized time to the nearest frame index.
pub fn frame_index(time: f64, n_frames: usize) -> usize {
    if n_frames <= 1 {
        return 0;
    }
    let last = (n_frames - 1) as f64;
    (time.clamp(0.0, 1.0) * last).round() as usize
}

pub fn frame_time(index: usize, n_frames: usize) -> f64 {
    if n_frames <= 1 {
        0.0
    } else {
        index as f64 / (n_frames - 1) as f64
    }
}

impl Trace {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn id_of_color(&self, color: Color) -> Option<i64> {
        self.scene.first_of_color(color).map(|o| o.id)
    }

    /// Object state at a frame; static objects come from the scene.
    pub fn object_at(&self, id: i64, frame: usize) -> Option<&SceneObject> {
        let obj = self.scene.object(id)?;
        if obj.is_static {
            return Some(obj);
        }
        self.frames.get(frame)?.object(id)
    }

    pub fn position_at(&self, id: i64, frame: usize) -> Option<Vec2> {
        self.object_at(id, frame).map(SceneObject::position)
    }

    /// Position linearly interpolated between the frames bracketing `t`.
    pub fn position_at_time(&self, id: i64, t: f64) -> Option<Vec2> {
        let obj = self.scene.object(id)?;
        if obj.is_static {
            return Some(obj.position());
        }
        let n = self.frames.len();
        if n == 0 {
            return None;
        }
        if n == 1 {
            return self.position_at(id, 0);
        }
        let s = t.clamp(0.0, 1.0) * (n - 1) as f64;
        let lo = (s.floor() as usize).min(n - 1);
        let hi = (lo + 1).min(n - 1);
        let frac = s - lo as f64;
        match (self.position_at(id, lo), self.position_at(id, hi)) {
            (Some(a), Some(b)) => Some(a.lerp(b, frac)),
            (Some(a), None) => Some(a),
            (None, Some(b)) => Some(b),
            (None, None) => None,
        }
    }

    pub fn final_event(&self) -> Option<&TraceEvent> {
        self.events.last()
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub index: Option<usize>,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{}[{}]: {}", self.field, i, self.rule),
            None => write!(f, "{}: {}", self.field, self.rule),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: impl Into<String>, index: Option<usize>, rule: impl Into<String>) {
        self.violations.push(Violation {
            field: field.into(),
            index,
            rule: rule.into(),
        });
    }

    pub fn has_rule(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.rule.contains(needle))
    }
}

const COORD_LIMIT: f64 = 1024.0;

fn check_vec(report: &mut ValidationReport, field: &str, index: Option<usize>, v: Vec2) {
    if !v.is_finite() {
        report.push(field, index, "non-finite vector");
    } else if v.x.abs() > COORD_LIMIT || v.y.abs() > COORD_LIMIT {
        report.push(field, index, "vector component outside [-1024, 1024]");
    }
}

fn check_object(report: &mut ValidationReport, field: &str, index: usize, o: &SceneObject) {
    if o.description != SceneObject::describe(o.color, o.kind, o.id) {
        report.push(
            format!("{field}.description"),
            Some(index),
            format!(
                "description must read `{}`",
                SceneObject::describe(o.color, o.kind, o.id)
            ),
        );
    }
    if !o.angle.is_finite() {
        report.push(format!("{field}.angle"), Some(index), "non-finite angle");
    }
    check_vec(
        report,
        &format!("{field}.velocity"),
        Some(index),
        o.velocity,
    );
    match &o.shape {
        Shape::Circle { center, radius } => {
            check_vec(report, &format!("{field}.center"), Some(index), *center);
            if !(radius.is_finite() && *radius > 0.0) {
                report.push(
                    format!("{field}.radius"),
                    Some(index),
                    "radius must be positive",
                );
            }
        }
        Shape::Polygons(polys) => {
            if polys.is_empty() {
                report.push(
                    format!("{field}.obj_params"),
                    Some(index),
                    "needs at least one polygon",
                );
            }
            for p in polys {
                if p.len() < 3 {
                    report.push(
                        format!("{field}.obj_params"),
                        Some(index),
                        "polygons need at least 3 vertices",
                    );
                }
                for &v in p {
                    check_vec(report, &format!("{field}.obj_params"), Some(index), v);
                }
            }
        }
    }
}

/// Checks every structural rule of a trace; violations are returned as data.
pub fn validate_trace(trace: &Trace) -> ValidationReport {
    let mut report = ValidationReport::default();

    let a = &trace.action;
    if !(Action::MIN_RADIUS..=Action::MAX_RADIUS).contains(&a.radius) {
        report.push("action.radius", None, "radius must lie in [4, 32]");
    }
    if !(0.0..=SCENE_EXTENT).contains(&a.position.x)
        || !(0.0..=SCENE_EXTENT).contains(&a.position.y)
    {
        report.push("action.position", None, "position must lie in [0, 256]");
    }

    let mut ids = std::collections::BTreeSet::new();
    for (i, o) in trace.scene.objects.iter().enumerate() {
        if !ids.insert(o.id) {
            report.push("scene.objects.id", Some(i), "duplicate object id");
        }
        check_object(&mut report, "scene.objects", i, o);
    }

    let n = trace.frames.len();
    if n < 2 {
        report.push("frames", None, "a trace needs at least 2 frames");
    } else {
        if trace.frames[0].time != 0.0 {
            report.push("frames.time", Some(0), "first frame time must be 0");
        }
        if trace.frames[n - 1].time != 1.0 {
            report.push("frames.time", Some(n - 1), "last frame time must be 1");
        }
    }
    for (i, f) in trace.frames.iter().enumerate() {
        if !f.time.is_finite() || !(0.0..=1.0).contains(&f.time) {
            report.push("frames.time", Some(i), "frame time outside [0, 1]");
        }
        if i > 0 && f.time < trace.frames[i - 1].time {
            report.push(
                "frames.time",
                Some(i),
                format!("non-monotone frame time at index {i}"),
            );
        }
        for o in &f.objects {
            match trace.scene.object(o.id) {
                None => report.push(
                    "frames.objects",
                    Some(i),
                    format!("object {} is not in the scene", o.id),
                ),
                Some(s) if s.is_static => report.push(
                    "frames.objects",
                    Some(i),
                    format!("static object {} listed in a frame", o.id),
                ),
                _ => {}
            }
            check_vec(&mut report, "frames.objects.velocity", Some(i), o.velocity);
        }
    }

    let mut open: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    for (i, e) in trace.events.iter().enumerate() {
        if !e.time.is_finite() || !(0.0..=1.0).contains(&e.time) {
            report.push("events.time", Some(i), "event time outside [0, 1]");
        }
        if i > 0 && e.time < trace.events[i - 1].time {
            report.push(
                "events.time",
                Some(i),
                format!("non-monotone event time at index {i}"),
            );
        }
        match e.uid.as_str() {
            COLLISION_START | COLLISION_END => {
                for key in ["a_id", "b_id", "contact_points"] {
                    if !e.parameters.contains_key(key) {
                        report.push("events.parameters", Some(i), format!("missing `{key}`"));
                    }
                }
                if let Some((a, b)) = e.pair() {
                    let key = (a.min(b), a.max(b));
                    let count = open.entry(key).or_insert(0);
                    if e.uid == COLLISION_START {
                        *count += 1;
                    } else if *count == 0 {
                        report.push(
                            "events",
                            Some(i),
                            format!(
                                "CollisionEnd for ({a}, {b}) without a preceding CollisionStart"
                            ),
                        );
                    } else {
                        *count -= 1;
                    }
                }
            }
            TASK_COMPLETE => {
                if !e.parameters.get("success").is_some_and(Value::is_boolean) {
                    report.push(
                        "events.parameters",
                        Some(i),
                        "TaskComplete needs boolean `success`",
                    );
                }
            }
            _ => {}
        }
        for (k, v) in &e.parameters {
            if v.is_null() || v.is_object() {
                report.push(
                    "events.parameters",
                    Some(i),
                    format!("parameter `{k}` must be a number, text, boolean or list"),
                );
            }
        }
    }
    match trace.events.last() {
        Some(e) if e.uid == TASK_COMPLETE => {}
        _ => report.push("events", None, "final event must be TaskComplete"),
    }
    report
}

// ---------------------------------------------------------------------------
// JSON encoding
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
}

fn byte_offset(input: &[u8], line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in input.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1);
        }
        offset += l.len() + 1;
    }
    input.len()
}

/// Parses any schema-bearing JSON document with path-aware errors.
pub fn parse_json<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, TraceError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let result: Result<T, _> = serde_path_to_error::deserialize(&mut de);
    let value = match result {
        Ok(v) => v,
        Err(err) => {
            let path = err.path().to_string();
            let inner = err.into_inner();
            return Err(classify(bytes, path, inner));
        }
    };
    de.end().map_err(|e| classify(bytes, String::new(), e))?;
    Ok(value)
}

fn classify(bytes: &[u8], path: String, err: serde_json::Error) -> TraceError {
    use serde_json::error::Category;
    match err.classify() {
        Category::Syntax | Category::Eof | Category::Io => TraceError::Syntax {
            offset: byte_offset(bytes, err.line(), err.column()),
            message: err.to_string(),
        },
        Category::Data => TraceError::Schema {
            path: if path.is_empty() { ".".into() } else { path },
            message: err.to_string(),
        },
    }
}

pub fn parse_trace(bytes: &[u8]) -> Result<Trace, TraceError> {
    parse_json(bytes)
}

/// Rounds to 9 significant digits and folds negative zero.
pub fn round_sig9(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { 0.0 } else { v };
    }
    format!("{v:.8e}").parse().unwrap_or(v)
}

/// Rounds every real number in a JSON tree; integers are left alone.
pub fn canonicalize_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let r = round_sig9(n.as_f64().unwrap_or(0.0));
            if let Some(num) = serde_json::Number::from_f64(r) {
                *n = num;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(canonicalize_value),
        Value::Object(map) => map.values_mut().for_each(canonicalize_value),
        _ => {}
    }
}

/// Canonical compact JSON for any serializable value.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("in-memory types always serialize");
    canonicalize_value(&mut v);
    serde_json::to_string(&v).expect("values always serialize")
}

pub fn serialize_trace(trace: &Trace) -> String {
    to_canonical_json(trace)
}

/// Canonical form of an arbitrary JSON document (sorted keys, rounded reals).
pub fn canonicalize_json(bytes: &[u8]) -> Result<String, TraceError> {
    let v: Value = parse_json(bytes)?;
    Ok(to_canonical_json(&v))
}

// ---------------------------------------------------------------------------
// Object lookup
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no object with color `{color}` and shape `{shape}`")]
pub struct LookupError {
    pub color: String,
    pub shape: String,
}

/// Parses a color filter where `any` matches every color.
pub fn color_filter(s: &str) -> Result<Option<Color>, String> {
    if s.eq_ignore_ascii_case("any") {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

/// Parses a shape filter where `any` matches every shape.
pub fn shape_filter(s: &str) -> Result<Option<ShapeKind>, String> {
    if s.eq_ignore_ascii_case("any") {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

/// Lowest id among objects matching both filters.
pub fn object_lookup(
    objects: &[SceneObject],
    color: Option<Color>,
    shape: Option<ShapeKind>,
) -> Result<i64, LookupError> {
    objects
        .iter()
        .filter(|o| color.is_none_or(|c| o.color == c) && shape.is_none_or(|k| o.kind == k))
        .map(|o| o.id)
        .min()
        .ok_or_else(|| LookupError {
            color: color.map_or("any".into(), |c| c.to_string()),
            shape: shape.map_or("any".into(), |k| k.to_string()),
        })
}
