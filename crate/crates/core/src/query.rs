//! Question templates answered directly from a trace, and a benchmark
//! generator that pairs rollouts with templated questions and their answers.
//!
//! All times are normalized. "Touching" at a frame means an open contact
//! interval (CollisionStart through the matching CollisionEnd, inclusive);
//! the future of a split time `s` is every frame or event strictly after `s`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::annotate::{annotate, AnnotationMatrix, LibraryError, PatternLibrary};
use crate::geom::{self, Vec2};
use crate::sim::{check_placement, simulate, SimConfig, SimError};
use crate::trace::{
    frame_index, frame_time, is_boundary, Action, Color, Scene, Shape, Trace, COLLISION_START, FLOOR_ID, LEFT_WALL_ID,
    RIGHT_WALL_ID, TOP_WALL_ID,
};

/// Speed above which an object counts as moving.
pub const MOVING_THRESHOLD: f64 = 0.5;
pub const N_TEMPLATES: u8 = 27;

const NEAR_MISS_SIGMA: [f64; 3] = [8.0, 8.0, 2.0];
const NEAR_MISS_TRIES: usize = 20;
const WALLS: [i64; 3] = [LEFT_WALL_ID, RIGHT_WALL_ID, TOP_WALL_ID];

#[derive(Debug, thiserror::Error)]
pub enum QueryError {
    #[error("unknown template `{0}` (expected C1..C27)")]
    UnknownTemplate(String),
    #[error("template {template}: {message}")]
    Arguments { template: Template, message: String },
    #[error("template {0} needs an annotation matrix")]
    MissingAnnotation(Template),
    #[error("pattern `{0}` is not in the annotation")]
    UnknownPattern(String),
    #[error("no {0} object in the scene")]
    MissingObject(Color),
    #[error("scene `{0}` has no stored solution")]
    NoSolution(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Library(#[from] LibraryError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Template(u8);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnswerType {
    Count,
    ObjectId,
    Percentage,
    YesNo,
    ObjectSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Color,
    Other,
    Window,
    Split,
    Pattern,
}

impl Template {
    pub fn new(n: u8) -> Option<Template> {
        (1..=N_TEMPLATES).contains(&n).then_some(Template(n))
    }

    pub fn all() -> impl Iterator<Item = Template> {
        (1..=N_TEMPLATES).map(Template)
    }

    pub fn number(self) -> u8 {
        self.0
    }

    pub fn answer_type(self) -> AnswerType {
        match self.0 {
            1 => AnswerType::Count,
            2 => AnswerType::ObjectSet,
            3..=7 => AnswerType::ObjectId,
            8..=17 => AnswerType::Percentage,
            _ => AnswerType::YesNo,
        }
    }

    fn slots(self) -> &'static [Slot] {
        use Slot::*;
        match self.0 {
            1 => &[Color, Window],
            2 => &[Pattern],
            3 | 7..=10 | 12 | 16 | 17 => &[Color],
            4 | 15 => &[Color, Other],
            5 | 6 | 11 | 13 | 14 => &[],
            18 => &[Color, Other, Split],
            19 | 20 | 23..=26 => &[Color, Split],
            22 => &[Pattern, Split],
            _ => &[Split],
        }
    }

    pub fn needs_annotation(self) -> bool {
        self.slots().contains(&Slot::Pattern)
    }

    /// Question text with the argument slots in braces.
    pub fn text(self) -> &'static str {
        TEXTS[self.0 as usize - 1]
    }
}

const TEXTS: [&str; 27] = [
    "How many distinct objects does the {color} ball touch between {t0} and {t1}?",
    "{pattern} happened with which object(s)?",
    "Which object is closest to the {color} ball at the start?",
    "Which object blocks the direct line between {color} and {other} (if any)?",
    "Which object travels the greatest total distance during the simulation?",
    "Which object reaches the highest maximum speed during the simulation?",
    "What is the first object that the {color} ball collides with?",
    "What percentage of frames contain at least one collision involving the {color} ball (with any object or wall)?",
    "What percentage of frames contain a collision between the {color} ball and any other object (excluding walls and ground)?",
    "What percentage of frames contain a collision between the {color} ball and the ground?",
    "What percentage of frames contain at least one collision between any two moving objects (excluding walls and ground)?",
    "What percentage of frames does the {color} ball spend in free fall (not touching any object or wall)?",
    "What percentage of frames have at least one object moving in the scene?",
    "What percentage of frames have no objects moving in the scene?",
    "What percentage of frames do the {color} and {other} objects touch each other?",
    "What percentage of frames is the {color} ball in contact with any wall (left, right, or top boundary)?",
    "What percentage of frames is the {color} ball in contact with any static obstacle (excluding ground and walls)?",
    "Up to {split}, will any collision between a {color} and {other} object occur in the future?",
    "Up to {split}, will the {color} ball ever touch the green object in the future?",
    "Up to {split}, will the {color} ball ever touch the blue object in the future?",
    "Up to {split}, will there be any collision at all between moving objects (excluding walls and ground) in the future?",
    "Up to {split}, will {pattern} happen in the second part?",
    "Up to {split}, will the {color} ball touch the ground for the first time in the future?",
    "Up to {split}, will the {color} ball collide with any wall in the future?",
    "Up to {split}, will the {color} ball cross the vertical line through the green object's initial position in the future?",
    "Up to {split}, will the {color} ball cross the horizontal line through the blue object's initial position in the future?",
    "Up to {split}, will there be any frame in the future in which no objects are moving in the scene?",
];

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.0)
    }
}

impl FromStr for Template {
    type Err = QueryError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim()
            .strip_prefix(['C', 'c'])
            .and_then(|n| n.parse::<u8>().ok())
            .and_then(Template::new)
            .ok_or_else(|| QueryError::UnknownTemplate(s.to_string()))
    }
}

impl Serialize for Template {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Template {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionArgs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Color>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other: Option<Color>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<f64>,
    /// Pattern uid or label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionInstance {
    pub template: Template,
    pub args: QuestionArgs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "kebab-case")]
pub enum Answer {
    Count(u64),
    /// `None` when no object qualifies. Boundaries use their reserved ids.
    ObjectId(Option<i64>),
    Percentage(f64),
    YesNo(bool),
    ObjectSet(Vec<i64>),
}

impl QuestionInstance {
    pub fn new(template: Template, args: QuestionArgs) -> Result<Self, QueryError> {
        let q = QuestionInstance { template, args };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        let slots = self.template.slots();
        let a = &self.args;
        let bad = |m: String| {
            Err(QueryError::Arguments {
                template: self.template,
                message: m,
            })
        };
        let present = [
            (Slot::Color, a.color.is_some(), "color"),
            (Slot::Other, a.other.is_some(), "other"),
            (Slot::Window, a.t0.is_some() || a.t1.is_some(), "t0/t1"),
            (Slot::Split, a.split.is_some(), "split"),
            (Slot::Pattern, a.pattern.is_some(), "pattern"),
        ];
        for (slot, given, name) in present {
            match (slots.contains(&slot), given) {
                (true, false) => return bad(format!("missing `{name}`")),
                (false, true) => return bad(format!("unexpected `{name}`")),
                _ => {}
            }
        }
        if slots.contains(&Slot::Window) && (a.t0.is_none() || a.t1.is_none()) {
            return bad("needs both `t0` and `t1`".into());
        }
        for (name, t) in [("t0", a.t0), ("t1", a.t1), ("split", a.split)] {
            if let Some(t) = t {
                if !(0.0..=1.0).contains(&t) {
                    return bad(format!("`{name}` = {t} is outside [0, 1]"));
                }
            }
        }
        if let (Some(t0), Some(t1)) = (a.t0, a.t1) {
            if t0 > t1 {
                return bad(format!("t0 = {t0} is after t1 = {t1}"));
            }
        }
        for c in [a.color, a.other].into_iter().flatten() {
            if c == Color::Black {
                return bad("colors are red, green or blue".into());
            }
        }
        if a.color.is_some() && a.color == a.other {
            return bad("the two colors must differ".into());
        }
        Ok(())
    }

    /// Question text with slots filled in.
    pub fn render(&self) -> String {
        let a = &self.args;
        let mut s = self.template.text().to_string();
        let fill = |s: &mut String, k: &str, v: Option<String>| {
            if let Some(v) = v {
                *s = s.replace(k, &v);
            }
        };
        fill(&mut s, "{color}", a.color.map(|c| c.to_string()));
        fill(&mut s, "{other}", a.other.map(|c| c.to_string()));
        fill(&mut s, "{t0}", a.t0.map(|t| format!("t={t}")));
        fill(&mut s, "{t1}", a.t1.map(|t| format!("t={t}")));
        fill(&mut s, "{split}", a.split.map(|t| format!("t={t}")));
        fill(&mut s, "{pattern}", a.pattern.clone());
        s
    }
}

/// A maximal span of frames during which two bodies touch, inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Contact {
    pub a: i64,
    pub b: i64,
    pub start: usize,
    pub end: usize,
}

impl Contact {
    pub fn involves(&self, id: i64) -> bool {
        self.a == id || self.b == id
    }

    pub fn other(&self, id: i64) -> Option<i64> {
        if self.a == id {
            Some(self.b)
        } else if self.b == id {
            Some(self.a)
        } else {
            None
        }
    }

    pub fn covers(&self, frame: usize) -> bool {
        self.start <= frame && frame <= self.end
    }
}

/// Pairs each CollisionStart with the next CollisionEnd of the same pair.
/// Contacts still open at the end run to the last frame.
pub fn contact_intervals(trace: &Trace) -> Vec<Contact> {
    let n = trace.frames.len();
    let mut open: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    let mut out = Vec::new();
    for e in &trace.events {
        let Some((a, b)) = e.pair() else { continue };
        let key = (a.min(b), a.max(b));
        let f = frame_index(e.time, n);
        if e.uid == COLLISION_START {
            open.entry(key).or_insert(f);
        } else if e.uid == crate::trace::COLLISION_END {
            if let Some(s) = open.remove(&key) {
                out.push(Contact {
                    a: key.0,
                    b: key.1,
                    start: s,
                    end: f,
                });
            }
        }
    }
    for ((a, b), s) in open {
        out.push(Contact {
            a,
            b,
            start: s,
            end: n.saturating_sub(1),
        });
    }
    out
}

struct Ctx<'a> {
    trace: &'a Trace,
    ast: Option<&'a AnnotationMatrix>,
    contacts: Vec<Contact>,
    n: usize,
    threshold: f64,
}

impl<'a> Ctx<'a> {
    fn id(&self, c: Color) -> Result<i64, QueryError> {
        self.trace.id_of_color(c).ok_or(QueryError::MissingObject(c))
    }

    fn is_static(&self, id: i64) -> bool {
        self.trace.scene.object(id).is_some_and(|o| o.is_static)
    }

    fn is_dynamic(&self, id: i64) -> bool {
        self.trace.scene.object(id).is_some_and(|o| !o.is_static)
    }

    fn percent(&self, pred: impl Fn(usize) -> bool) -> Answer {
        if self.n == 0 {
            return Answer::Percentage(0.0);
        }
        let k = (0..self.n).filter(|&f| pred(f)).count();
        Answer::Percentage(100.0 * k as f64 / self.n as f64)
    }

    fn touching(&self, id: i64, f: usize, pred: impl Fn(i64) -> bool) -> bool {
        self.contacts
            .iter()
            .any(|c| c.covers(f) && c.other(id).is_some_and(&pred))
    }

    fn any_moving(&self, f: usize) -> bool {
        self.trace.frames[f]
            .objects
            .iter()
            .any(|o| !o.is_static && o.speed() > self.threshold)
    }

    fn future_frames(&self, split: f64) -> impl Iterator<Item = usize> {
        let n = self.n;
        (0..n).filter(move |&f| frame_time(f, n) > split)
    }

    fn future_starts(&self, split: f64) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.trace
            .events
            .iter()
            .filter(move |e| e.uid == COLLISION_START && e.time > split)
            .filter_map(|e| e.pair())
    }

    fn pattern(&self, name: &str) -> Result<(&'a AnnotationMatrix, usize), QueryError> {
        let ast = self.ast.ok_or(QueryError::UnknownPattern(name.to_string()))?;
        let j = ast
            .index(name)
            .or_else(|| ast.labels.iter().position(|l| l.eq_ignore_ascii_case(name)))
            .ok_or_else(|| QueryError::UnknownPattern(name.to_string()))?;
        Ok((ast, j))
    }

    fn start_position(&self, id: i64) -> Option<Vec2> {
        self.trace.position_at(id, 0)
    }
}

/// Ids named by an event's parameters: `*_id` keys and lists under `*_ids`.
fn event_object_ids(params: &crate::trace::Params) -> Vec<i64> {
    let mut out = Vec::new();
    for (k, v) in params {
        if k.ends_with("_id") {
            if let Some(i) = v.as_i64() {
                out.push(i);
            }
        } else if k.ends_with("_ids") {
            if let Some(xs) = v.as_array() {
                out.extend(xs.iter().filter_map(|x| x.as_i64()));
            }
        }
    }
    out
}

/// Distance from `p` to the nearest point of an object's shape; 0 inside.
fn shape_distance(shape: &Shape, p: Vec2) -> f64 {
    match shape {
        Shape::Circle { center, radius } => (p.distance(*center) - radius).max(0.0),
        Shape::Polygons(polys) => polys
            .iter()
            .map(|poly| {
                if geom::point_in_polygon(p, poly) {
                    0.0
                } else {
                    geom::segment_polygon_distance(p, p, poly)
                }
            })
            .fold(f64::INFINITY, f64::min),
    }
}

fn segment_hits(shape: &Shape, a: Vec2, b: Vec2) -> bool {
    match shape {
        Shape::Circle { center, radius } => geom::point_segment_distance(*center, a, b) <= *radius,
        Shape::Polygons(polys) => polys
            .iter()
            .any(|poly| geom::point_in_polygon(a, poly) || geom::segment_polygon_distance(a, b, poly) <= 0.0),
    }
}

fn argmax(items: impl Iterator<Item = (i64, f64)>) -> Option<i64> {
    let mut best: Option<(i64, f64)> = None;
    for (id, v) in items {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((id, v));
        }
    }
    best.map(|(id, _)| id)
}

pub fn answer(q: &QuestionInstance, trace: &Trace, ast: Option<&AnnotationMatrix>) -> Result<Answer, QueryError> {
    answer_with(q, trace, ast, MOVING_THRESHOLD)
}

/// Answers with a custom moving-speed threshold.
pub fn answer_with(
    q: &QuestionInstance,
    trace: &Trace,
    ast: Option<&AnnotationMatrix>,
    moving_threshold: f64,
) -> Result<Answer, QueryError> {
    q.validate()?;
    if q.template.needs_annotation() && ast.is_none() {
        return Err(QueryError::MissingAnnotation(q.template));
    }
    let cx = Ctx {
        trace,
        ast,
        contacts: contact_intervals(trace),
        n: trace.frames.len(),
        threshold: moving_threshold,
    };
    let a = &q.args;
    let x = match a.color {
        Some(c) => Some(cx.id(c)?),
        None => None,
    };
    let y = match a.other {
        Some(c) => Some(cx.id(c)?),
        None => None,
    };
    let split = a.split.unwrap_or(0.0);
    let not_self = |o: i64| Some(o) != x;
    let ans = match q.template.0 {
        1 => {
            let x = x.unwrap();
            let (lo, hi) = (a.t0.unwrap(), a.t1.unwrap());
            let n = cx.n;
            let touched: BTreeSet<i64> = cx
                .contacts
                .iter()
                .filter(|c| (c.start..=c.end).any(|f| (lo..=hi).contains(&frame_time(f, n))))
                .filter_map(|c| c.other(x))
                .collect();
            Answer::Count(touched.len() as u64)
        }
        2 => {
            let (ast, j) = cx.pattern(a.pattern.as_deref().unwrap())?;
            let uid = &ast.uids[j];
            let ids: BTreeSet<i64> = ast
                .events
                .iter()
                .filter(|e| &e.uid == uid)
                .flat_map(|e| event_object_ids(&e.parameters))
                .collect();
            Answer::ObjectSet(ids.into_iter().collect())
        }
        3 => {
            let x = x.unwrap();
            let p = cx.start_position(x).ok_or(QueryError::MissingObject(a.color.unwrap()))?;
            let id = argmax(trace.scene.objects.iter().filter(|o| not_self(o.id)).filter_map(|o| {
                let q = cx.start_position(o.id)?;
                Some((o.id, -p.distance(q)))
            }));
            Answer::ObjectId(id)
        }
        4 => {
            let (x, y) = (x.unwrap(), y.unwrap());
            let (p, q) = (cx.start_position(x), cx.start_position(y));
            let (Some(p), Some(q)) = (p, q) else {
                return Ok(Answer::ObjectId(None));
            };
            let id = argmax(
                trace
                    .scene
                    .objects
                    .iter()
                    .filter(|o| o.id != x && o.id != y)
                    .filter_map(|o| {
                        let shape = &trace.object_at(o.id, 0)?.shape;
                        segment_hits(shape, p, q).then(|| (o.id, -shape_distance(shape, p)))
                    }),
            );
            Answer::ObjectId(id)
        }
        5 => Answer::ObjectId(argmax(trace.scene.objects.iter().map(|o| {
            let path: f64 = (1..cx.n)
                .filter_map(|f| Some(trace.position_at(o.id, f)?.distance(trace.position_at(o.id, f - 1)?)))
                .sum();
            (o.id, path)
        }))),
        6 => Answer::ObjectId(argmax(trace.scene.objects.iter().map(|o| {
            let top = (0..cx.n)
                .filter_map(|f| trace.object_at(o.id, f))
                .map(|s| if s.is_static { 0.0 } else { s.speed() })
                .fold(0.0, f64::max);
            (o.id, top)
        }))),
        7 => {
            let x = x.unwrap();
            let first = trace
                .events
                .iter()
                .filter(|e| e.uid == COLLISION_START)
                .filter_map(|e| e.pair())
                .find_map(|(a, b)| if a == x { Some(b) } else if b == x { Some(a) } else { None });
            Answer::ObjectId(first)
        }
        8 => cx.percent(|f| cx.touching(x.unwrap(), f, |_| true)),
        9 => cx.percent(|f| cx.touching(x.unwrap(), f, |o| !is_boundary(o))),
        10 => cx.percent(|f| cx.touching(x.unwrap(), f, |o| o == FLOOR_ID)),
        11 => cx.percent(|f| {
            cx.contacts
                .iter()
                .any(|c| c.covers(f) && cx.is_dynamic(c.a) && cx.is_dynamic(c.b))
        }),
        12 => cx.percent(|f| !cx.touching(x.unwrap(), f, |_| true)),
        13 => cx.percent(|f| cx.any_moving(f)),
        14 => cx.percent(|f| !cx.any_moving(f)),
        15 => cx.percent(|f| cx.touching(x.unwrap(), f, |o| Some(o) == y)),
        16 => cx.percent(|f| cx.touching(x.unwrap(), f, |o| WALLS.contains(&o))),
        17 => cx.percent(|f| cx.touching(x.unwrap(), f, |o| !is_boundary(o) && cx.is_static(o))),
        18 => {
            let (x, y) = (x.unwrap(), y.unwrap());
            Answer::YesNo(cx.future_starts(split).any(|(a, b)| (a, b) == (x, y) || (a, b) == (y, x)))
        }
        19 | 20 => {
            let target_color = if q.template.0 == 19 { Color::Green } else { Color::Blue };
            let t = cx.id(target_color)?;
            let x = x.unwrap();
            if t == x {
                return Err(QueryError::Arguments {
                    template: q.template,
                    message: format!("the ball and the {target_color} object are the same"),
                });
            }
            Answer::YesNo(cx.future_frames(split).any(|f| cx.touching(x, f, |o| o == t)))
        }
        21 => Answer::YesNo(
            cx.future_starts(split)
                .any(|(a, b)| cx.is_dynamic(a) && cx.is_dynamic(b)),
        ),
        22 => {
            let (ast, j) = cx.pattern(a.pattern.as_deref().unwrap())?;
            let n = ast.n_frames;
            Answer::YesNo(ast.columns[j].iter().any(|&f| frame_time(f, n) > split))
        }
        23 => {
            let x = x.unwrap();
            let on_floor = |f: usize| cx.touching(x, f, |o| o == FLOOR_ID);
            let before = (0..cx.n).filter(|&f| frame_time(f, cx.n) <= split).any(on_floor);
            Answer::YesNo(!before && cx.future_frames(split).any(on_floor))
        }
        24 => {
            let x = x.unwrap();
            Answer::YesNo(
                cx.future_starts(split)
                    .any(|(a, b)| (a == x && WALLS.contains(&b)) || (b == x && WALLS.contains(&a))),
            )
        }
        25 | 26 => {
            let vertical = q.template.0 == 25;
            let c = if vertical { Color::Green } else { Color::Blue };
            let line = cx.start_position(cx.id(c)?).ok_or(QueryError::MissingObject(c))?;
            let x = x.unwrap();
            let side = |f: usize| {
                trace
                    .position_at(x, f)
                    .map(|p| if vertical { p.x > line.x } else { p.y > line.y })
            };
            Answer::YesNo(
                cx.future_frames(split)
                    .filter(|&f| f > 0)
                    .any(|f| matches!((side(f - 1), side(f)), (Some(u), Some(v)) if u != v)),
            )
        }
        27 => Answer::YesNo(cx.future_frames(split).any(|f| !cx.any_moving(f))),
        _ => unreachable!("template numbers are validated"),
    };
    Ok(ans)
}

// ---------------------------------------------------------------------------
// Benchmark generation
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkScene {
    pub scene_ref: String,
    pub scene: Scene,
    pub solution: Option<Action>,
}

/// One line of the benchmark file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub scene_ref: String,
    pub action: Action,
    pub template_id: Template,
    pub args: QuestionArgs,
    pub answer: Answer,
}

#[derive(Clone, Debug)]
pub struct SceneQuestions {
    pub trace: Trace,
    /// Whether the action is a perturbed solution.
    pub near_miss: bool,
    pub items: Vec<BenchmarkItem>,
}

pub fn to_json_lines(benchmark: &[SceneQuestions]) -> String {
    let mut out = String::new();
    for item in benchmark.iter().flat_map(|s| &s.items) {
        out.push_str(&crate::trace::to_canonical_json(item));
        out.push('\n');
    }
    out
}

/// Adds N(0, 8²) to x and y and N(0, 2²) to the radius, clipped to the
/// action bounds.
pub fn near_miss(solution: &Action, rng: &mut impl Rng) -> Action {
    let d = NEAR_MISS_SIGMA.map(|s| Normal::new(0.0, s).expect("positive sigma").sample(rng));
    Action::new(solution.position.x + d[0], solution.position.y + d[1], solution.radius + d[2]).clamped()
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Draws valid arguments for a template on this trace, or `None` when the
/// scene lacks the objects it needs.
fn sample_args(t: Template, trace: &Trace, ast: Option<&AnnotationMatrix>, rng: &mut ChaCha8Rng) -> Option<QuestionArgs> {
    let colors: Vec<Color> = [Color::Red, Color::Green, Color::Blue]
        .into_iter()
        .filter(|&c| trace.id_of_color(c).is_some())
        .collect();
    let mut args = QuestionArgs::default();
    for slot in t.slots() {
        match slot {
            Slot::Color => {
                let ok: Vec<Color> = colors
                    .iter()
                    .copied()
                    .filter(|&c| match t.0 {
                        19 => c != Color::Green && colors.contains(&Color::Green),
                        20 => c != Color::Blue && colors.contains(&Color::Blue),
                        25 => colors.contains(&Color::Green),
                        26 => colors.contains(&Color::Blue),
                        _ => true,
                    })
                    .collect();
                args.color = Some(*ok.choose(rng)?);
            }
            Slot::Other => {
                let ok: Vec<Color> = colors.iter().copied().filter(|&c| Some(c) != args.color).collect();
                args.other = Some(*ok.choose(rng)?);
            }
            Slot::Window => {
                let (u, v) = (round2(rng.gen::<f64>()), round2(rng.gen::<f64>()));
                args.t0 = Some(u.min(v));
                args.t1 = Some(u.max(v));
            }
            Slot::Split => args.split = Some(round2(rng.gen_range(0.2..0.8))),
            Slot::Pattern => {
                let ast = ast?;
                let active: Vec<&String> = ast
                    .uids
                    .iter()
                    .zip(&ast.columns)
                    .filter(|(_, c)| !c.is_empty())
                    .map(|(u, _)| u)
                    .collect();
                let pool = if active.is_empty() { ast.uids.iter().collect() } else { active };
                args.pattern = Some((*pool.choose(rng)?).clone());
            }
        }
    }
    Some(args)
}

/// For each scene, rolls out either the stored solution or a near-miss
/// (chosen with equal odds) and instantiates `per_scene` questions with
/// their answers. Pattern templates are used only when a library is given.
/// Each scene draws from its own stream of the seeded generator, so the
/// output does not depend on processing order.
pub fn generate_benchmark(
    scenes: &[BenchmarkScene],
    per_scene: usize,
    seed: u64,
    library: Option<&PatternLibrary>,
    sim: &SimConfig,
) -> Result<Vec<SceneQuestions>, QueryError> {
    scenes
        .iter()
        .enumerate()
        .map(|(i, bs)| scene_questions(i, bs, per_scene, seed, library, sim))
        .collect()
}

/// Questions for the scene at position `index` of a benchmark.
pub fn scene_questions(
    index: usize,
    bs: &BenchmarkScene,
    per_scene: usize,
    seed: u64,
    library: Option<&PatternLibrary>,
    sim: &SimConfig,
) -> Result<SceneQuestions, QueryError> {
    let solution = bs.solution.ok_or_else(|| QueryError::NoSolution(bs.scene_ref.clone()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let near = rng.gen_bool(0.5);
    let mut action = solution;
    if near {
        for _ in 0..NEAR_MISS_TRIES {
            let a = near_miss(&solution, &mut rng);
            if check_placement(&bs.scene, &a).is_ok() {
                action = a;
                break;
            }
        }
    }
    let trace = simulate(&bs.scene, &action, sim)?;
    let ast = library.map(|lib| annotate(&trace, lib)).transpose()?;
    let templates: Vec<Template> = Template::all()
        .filter(|t| !t.needs_annotation() || ast.is_some())
        .collect();
    let mut items = Vec::with_capacity(per_scene);
    let mut attempts = 0;
    while items.len() < per_scene && attempts < per_scene * 50 {
        attempts += 1;
        let t = *templates.choose(&mut rng).expect("templates available");
        let Some(args) = sample_args(t, &trace, ast.as_ref(), &mut rng) else {
            continue;
        };
        let q = QuestionInstance { template: t, args };
        let answer = answer(&q, &trace, ast.as_ref())?;
        items.push(BenchmarkItem {
            scene_ref: bs.scene_ref.clone(),
            action,
            template_id: t,
            args: q.args,
            answer,
        });
    }
    Ok(SceneQuestions {
        trace,
        near_miss: near && action != solution,
        items,
    })
}
