//! Random mini-traces with known contacts and motion, and a brute-force
//! recount of every question template over them.

use std::collections::{BTreeMap, BTreeSet};

use patternlab::annotate::{AnnotatedEvent, AnnotationMatrix};
use patternlab::geom::{self, Vec2};
use patternlab::query::{answer, Answer, QuestionArgs, QuestionInstance, Template, MOVING_THRESHOLD};
use patternlab::trace::{
    frame_time, is_boundary, Action, Color, Frame, Scene, SceneObject, Shape, ShapeKind, Trace, TraceEvent, COLLISION_END,
    COLLISION_START, FLOOR_ID, LEFT_WALL_ID, RIGHT_WALL_ID, TASK_COMPLETE, TOP_WALL_ID,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::Outcome;

fn ball(id: i64, color: Color, center: Vec2, radius: f64, is_static: bool) -> SceneObject {
    SceneObject {
        description: SceneObject::describe(color, ShapeKind::Circle, id),
        id,
        kind: ShapeKind::Circle,
        color,
        velocity: Vec2::ZERO,
        angle: 0.0,
        is_static,
        shape: Shape::Circle { center, radius },
    }
}

fn bar(id: i64, color: Color, min: Vec2, max: Vec2, is_static: bool) -> SceneObject {
    SceneObject {
        description: SceneObject::describe(color, ShapeKind::Bar, id),
        id,
        kind: ShapeKind::Bar,
        color,
        velocity: Vec2::ZERO,
        angle: 0.0,
        is_static,
        shape: Shape::Polygons(vec![geom::rect(min, max)]),
    }
}

/// Contact spans as generated, before being turned into events.
#[derive(Clone, Debug)]
struct Span {
    a: i64,
    b: i64,
    start: usize,
    end: usize,
    closed: bool,
}

struct Mini {
    trace: Trace,
    spans: Vec<Span>,
    /// Per frame, per dynamic object: (id, position, velocity).
    states: Vec<Vec<(i64, Vec2, Vec2)>>,
    /// Initial reference points of every scene object.
    start: BTreeMap<i64, Vec2>,
    /// Axis-aligned extents of static bars, by id.
    bars: BTreeMap<i64, (Vec2, Vec2)>,
    radii: BTreeMap<i64, f64>,
    ast: AnnotationMatrix,
    /// Object ids the pattern events name.
    pattern_ids: BTreeSet<i64>,
}

fn mini_trace(seed: u64) -> Mini {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(4..24);
    let green_static = rng.gen_bool(0.3);
    let with_blue = rng.gen_bool(0.8);

    let mut dynamic: Vec<(i64, Color, f64)> = vec![(0, Color::Red, rng.gen_range(4.0..20.0))];
    if !green_static {
        dynamic.push((1, Color::Green, rng.gen_range(4.0..20.0)));
    }
    if with_blue {
        dynamic.push((2, Color::Blue, rng.gen_range(4.0..20.0)));
    }
    let mut bars = BTreeMap::new();
    let mut scene_objs = Vec::new();
    let mut radii = BTreeMap::new();
    let mut start = BTreeMap::new();
    let bar_at = |_id: i64, rng: &mut ChaCha8Rng| {
        let (x, y) = (rng.gen_range(20.0..200.0), rng.gen_range(20.0..200.0));
        let (w, h) = (rng.gen_range(10.0..60.0), rng.gen_range(4.0..30.0));
        (Vec2::new(x, y), Vec2::new(x + w, y + h))
    };
    if green_static {
        bars.insert(1, bar_at(1, &mut rng));
    }
    bars.insert(3, bar_at(3, &mut rng));

    let mut states: Vec<Vec<(i64, Vec2, Vec2)>> = Vec::new();
    for _ in 0..n {
        let row = dynamic
            .iter()
            .map(|&(id, _, _)| {
                let p = Vec2::new(rng.gen_range(0.0..256.0), rng.gen_range(0.0..256.0));
                let v = if rng.gen_bool(0.4) {
                    Vec2::ZERO
                } else {
                    Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                };
                (id, p, v)
            })
            .collect();
        states.push(row);
    }
    for &(id, color, r) in &dynamic {
        let p = states[0].iter().find(|s| s.0 == id).unwrap().1;
        scene_objs.push(ball(id, color, p, r, false));
        radii.insert(id, r);
        start.insert(id, p);
    }
    for (&id, &(lo, hi)) in &bars {
        let color = if id == 1 { Color::Green } else { Color::Black };
        scene_objs.push(bar(id, color, lo, hi, true));
        start.insert(id, Vec2::new((lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0));
    }
    scene_objs.sort_by_key(|o| o.id);

    let frames: Vec<Frame> = states
        .iter()
        .enumerate()
        .map(|(i, row)| Frame {
            time: frame_time(i, n),
            objects: row
                .iter()
                .map(|&(id, p, v)| {
                    let mut o: SceneObject = scene_objs.iter().find(|o| o.id == id).unwrap().clone();
                    o.shape = Shape::Circle {
                        center: p,
                        radius: radii[&id],
                    };
                    o.velocity = v;
                    o
                })
                .collect(),
        })
        .collect();

    // contact spans for every pair of bodies
    let mut bodies: Vec<i64> = scene_objs.iter().map(|o| o.id).collect();
    bodies.extend([FLOOR_ID, LEFT_WALL_ID, RIGHT_WALL_ID, TOP_WALL_ID]);
    let mut spans = Vec::new();
    for (i, &a) in bodies.iter().enumerate() {
        for &b in &bodies[i + 1..] {
            if is_boundary(a) && is_boundary(b) {
                continue;
            }
            let static_pair = |id: i64| bars.contains_key(&id) || is_boundary(id);
            if static_pair(a) && static_pair(b) {
                continue;
            }
            let mut f = rng.gen_range(0..n + 4);
            while f < n && rng.gen_bool(0.5) {
                let end = rng.gen_range(f..n);
                let closed = end < n - 1 || rng.gen_bool(0.5);
                spans.push(Span {
                    a,
                    b,
                    start: f,
                    end,
                    closed,
                });
                if !closed {
                    break;
                }
                f = end + 1 + rng.gen_range(0..4);
            }
        }
    }

    let mut events: Vec<TraceEvent> = Vec::new();
    for s in &spans {
        let ev = |uid: &str, f: usize| TraceEvent {
            time: frame_time(f, n),
            uid: uid.into(),
            parameters: [
                ("a_id".to_string(), json!(s.a)),
                ("b_id".to_string(), json!(s.b)),
                ("contact_points".to_string(), json!([])),
            ]
            .into(),
        };
        events.push(ev(COLLISION_START, s.start));
        if s.closed {
            events.push(ev(COLLISION_END, s.end));
        }
    }
    events.sort_by(|x, y| x.time.total_cmp(&y.time));
    events.push(TraceEvent {
        time: 1.0,
        uid: TASK_COMPLETE.into(),
        parameters: [("success".to_string(), json!(false))].into(),
    });

    // a fake annotation column naming random objects
    let ids: Vec<i64> = bodies.clone();
    let mut ast = AnnotationMatrix::empty(n);
    let mut pattern_ids = BTreeSet::new();
    let mut col = BTreeSet::new();
    let mut pat_events = Vec::new();
    for _ in 0..rng.gen_range(0..4) {
        let f = rng.gen_range(0..n);
        let mut params = patternlab::trace::Params::new();
        if rng.gen_bool(0.5) {
            let o = *ids.choose(&mut rng).unwrap();
            params.insert("object_id".into(), json!(o));
            pattern_ids.insert(o);
        } else {
            let (a, b) = (*ids.choose(&mut rng).unwrap(), *ids.choose(&mut rng).unwrap());
            params.insert("a_id".into(), json!(a));
            params.insert("b_id".into(), json!(b));
            params.insert("strength".into(), json!(1.5));
            pattern_ids.extend([a, b]);
        }
        col.insert(f);
        pat_events.push(AnnotatedEvent {
            uid: "pat_a".into(),
            label: "bounce".into(),
            time: frame_time(f, n),
            frame: f,
            parameters: params,
        });
    }
    ast.uids.push("pat_a".into());
    ast.labels.push("bounce".into());
    ast.columns.push(col.into_iter().collect());
    ast.steps.push(0);
    ast.events = pat_events;

    let trace = Trace {
        action: Action::new(start[&0].x, start[&0].y, radii[&0]),
        scene: Scene { objects: scene_objs },
        frames,
        events,
    };
    Mini {
        trace,
        spans,
        states,
        start,
        bars,
        radii,
        ast,
        pattern_ids,
    }
}

// ---------------------------------------------------------------------------
// Brute-force recount
// ---------------------------------------------------------------------------

/// Acceptable answers: several when ties leave the choice open.
enum Expect {
    Exact(Answer),
    OneOf(Vec<Option<i64>>),
}

impl Mini {
    fn n(&self) -> usize {
        self.states.len()
    }

    fn id(&self, c: Color) -> i64 {
        self.trace.scene.objects.iter().find(|o| o.color == c).unwrap().id
    }

    fn touch(&self, x: i64, y: i64, f: usize) -> bool {
        self.spans
            .iter()
            .any(|s| ((s.a, s.b) == (x, y) || (s.a, s.b) == (y, x)) && s.start <= f && f <= s.end)
    }

    fn partners(&self, x: i64, f: usize) -> Vec<i64> {
        let mut all: Vec<i64> = self.trace.scene.objects.iter().map(|o| o.id).collect();
        all.extend([FLOOR_ID, LEFT_WALL_ID, RIGHT_WALL_ID, TOP_WALL_ID]);
        all.into_iter().filter(|&y| y != x && self.touch(x, y, f)).collect()
    }

    fn dynamic(&self, id: i64) -> bool {
        id >= 0 && !self.bars.contains_key(&id)
    }

    fn moving(&self, f: usize, thr: f64) -> bool {
        self.states[f].iter().any(|&(_, _, v)| (v.x * v.x + v.y * v.y).sqrt() > thr)
    }

    fn pct(&self, pred: impl Fn(usize) -> bool) -> Answer {
        let n = self.n();
        let mut k = 0;
        for f in 0..n {
            if pred(f) {
                k += 1;
            }
        }
        Answer::Percentage(k as f64 * 100.0 / n as f64)
    }

    fn pos(&self, id: i64, f: usize) -> Vec2 {
        match self.states[f].iter().find(|s| s.0 == id) {
            Some(s) => s.1,
            None => self.start[&id],
        }
    }

    fn inside(&self, id: i64, p: Vec2) -> bool {
        match self.bars.get(&id) {
            Some(&(lo, hi)) => lo.x <= p.x && p.x <= hi.x && lo.y <= p.y && p.y <= hi.y,
            None => {
                let c = self.start[&id];
                ((p.x - c.x).powi(2) + (p.y - c.y).powi(2)).sqrt() <= self.radii[&id]
            }
        }
    }

    fn gap(&self, id: i64, p: Vec2) -> f64 {
        match self.bars.get(&id) {
            Some(&(lo, hi)) => {
                let dx = (lo.x - p.x).max(0.0).max(p.x - hi.x);
                let dy = (lo.y - p.y).max(0.0).max(p.y - hi.y);
                (dx * dx + dy * dy).sqrt()
            }
            None => (((p.x - self.start[&id].x).powi(2) + (p.y - self.start[&id].y).powi(2)).sqrt() - self.radii[&id]).max(0.0),
        }
    }

    fn ties(&self, scores: Vec<(i64, f64)>) -> Expect {
        let best = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        Expect::OneOf(
            scores
                .iter()
                .filter(|s| s.1 >= best - 1e-12)
                .map(|s| Some(s.0))
                .collect(),
        )
    }

    fn future(&self, split: f64) -> Vec<usize> {
        (0..self.n()).filter(|&f| (f as f64) / ((self.n() - 1) as f64) > split).collect()
    }

    fn t(&self, f: usize) -> f64 {
        f as f64 / (self.n() - 1) as f64
    }

    fn expect(&self, q: &QuestionInstance, thr: f64) -> Expect {
        let a = &q.args;
        let x = a.color.map(|c| self.id(c)).unwrap_or(-99);
        let y = a.other.map(|c| self.id(c)).unwrap_or(-99);
        let split = a.split.unwrap_or(0.0);
        let walls = [LEFT_WALL_ID, RIGHT_WALL_ID, TOP_WALL_ID];
        let objects: Vec<i64> = self.trace.scene.objects.iter().map(|o| o.id).collect();
        use Expect::Exact;
        match q.template.number() {
            1 => {
                let mut seen = BTreeSet::new();
                for f in 0..self.n() {
                    if a.t0.unwrap() <= self.t(f) && self.t(f) <= a.t1.unwrap() {
                        seen.extend(self.partners(x, f));
                    }
                }
                Exact(Answer::Count(seen.len() as u64))
            }
            2 => Exact(Answer::ObjectSet(self.pattern_ids.iter().copied().collect())),
            3 => self.ties(
                objects
                    .iter()
                    .filter(|&&o| o != x)
                    .map(|&o| (o, -self.start[&o].distance(self.start[&x])))
                    .collect(),
            ),
            4 => {
                let (p, q) = (self.start[&x], self.start[&y]);
                let steps = 4000;
                let blockers: Vec<(i64, f64)> = objects
                    .iter()
                    .filter(|&&o| o != x && o != y)
                    .filter(|&&o| (0..=steps).any(|k| self.inside(o, p.lerp(q, k as f64 / steps as f64))))
                    .map(|&o| (o, -self.gap(o, p)))
                    .collect();
                if blockers.is_empty() {
                    Exact(Answer::ObjectId(None))
                } else {
                    self.ties(blockers)
                }
            }
            5 => self.ties(
                objects
                    .iter()
                    .map(|&o| {
                        let mut d = 0.0;
                        for f in 1..self.n() {
                            let (u, v) = (self.pos(o, f - 1), self.pos(o, f));
                            d += ((u.x - v.x).powi(2) + (u.y - v.y).powi(2)).sqrt();
                        }
                        (o, d)
                    })
                    .collect(),
            ),
            6 => self.ties(
                objects
                    .iter()
                    .map(|&o| {
                        let top = self
                            .states
                            .iter()
                            .flatten()
                            .filter(|s| s.0 == o)
                            .map(|s| (s.2.x.powi(2) + s.2.y.powi(2)).sqrt())
                            .fold(0.0, f64::max);
                        (o, top)
                    })
                    .collect(),
            ),
            7 => {
                let mine: Vec<&Span> = self.spans.iter().filter(|s| s.a == x || s.b == x).collect();
                match mine.iter().map(|s| s.start).min() {
                    None => Exact(Answer::ObjectId(None)),
                    Some(m) => Expect::OneOf(
                        mine.iter()
                            .filter(|s| s.start == m)
                            .map(|s| Some(if s.a == x { s.b } else { s.a }))
                            .collect(),
                    ),
                }
            }
            8 => Exact(self.pct(|f| !self.partners(x, f).is_empty())),
            9 => Exact(self.pct(|f| self.partners(x, f).iter().any(|&o| o >= 0))),
            10 => Exact(self.pct(|f| self.touch(x, FLOOR_ID, f))),
            11 => Exact(self.pct(|f| {
                self.spans
                    .iter()
                    .any(|s| self.dynamic(s.a) && self.dynamic(s.b) && s.start <= f && f <= s.end)
            })),
            12 => Exact(self.pct(|f| self.partners(x, f).is_empty())),
            13 => Exact(self.pct(|f| self.moving(f, thr))),
            14 => Exact(self.pct(|f| !self.moving(f, thr))),
            15 => Exact(self.pct(|f| self.touch(x, y, f))),
            16 => Exact(self.pct(|f| walls.iter().any(|&w| self.touch(x, w, f)))),
            17 => Exact(self.pct(|f| self.bars.keys().any(|&b| b != x && self.touch(x, b, f)))),
            18 => Exact(Answer::YesNo(self.spans.iter().any(|s| {
                ((s.a, s.b) == (x, y) || (s.a, s.b) == (y, x)) && self.t(s.start) > split
            }))),
            19 | 20 => {
                let c = if q.template.number() == 19 { Color::Green } else { Color::Blue };
                let g = self.id(c);
                Exact(Answer::YesNo(self.future(split).into_iter().any(|f| self.touch(x, g, f))))
            }
            21 => Exact(Answer::YesNo(
                self.spans
                    .iter()
                    .any(|s| self.dynamic(s.a) && self.dynamic(s.b) && self.t(s.start) > split),
            )),
            22 => Exact(Answer::YesNo(self.ast.columns[0].iter().any(|&f| self.t(f) > split))),
            23 => {
                let floor: Vec<usize> = (0..self.n()).filter(|&f| self.touch(x, FLOOR_ID, f)).collect();
                Exact(Answer::YesNo(!floor.is_empty() && self.t(floor[0]) > split))
            }
            24 => Exact(Answer::YesNo(self.spans.iter().any(|s| {
                let other = if s.a == x { s.b } else if s.b == x { s.a } else { 0 };
                walls.contains(&other) && self.t(s.start) > split
            }))),
            25 | 26 => {
                let vertical = q.template.number() == 25;
                let line = self.start[&self.id(if vertical { Color::Green } else { Color::Blue })];
                let coord = |p: Vec2| if vertical { p.x - line.x } else { p.y - line.y };
                Exact(Answer::YesNo(
                    self.future(split)
                        .into_iter()
                        .filter(|&f| f >= 1)
                        .any(|f| coord(self.pos(x, f - 1)) * coord(self.pos(x, f)) < 0.0),
                ))
            }
            27 => Exact(Answer::YesNo(self.future(split).into_iter().any(|f| !self.moving(f, thr)))),
            _ => unreachable!(),
        }
    }
}

fn agrees(got: &Answer, want: &Expect) -> bool {
    match (got, want) {
        (Answer::Percentage(g), Expect::Exact(Answer::Percentage(w))) => (g - w).abs() < 1e-9,
        (g, Expect::Exact(w)) => g == w,
        (Answer::ObjectId(g), Expect::OneOf(ws)) => ws.contains(g),
        _ => false,
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Fills the slots a template's text names, or `None` when the trace lacks
/// the objects it needs.
fn draw_args(t: Template, m: &Mini, rng: &mut ChaCha8Rng) -> Option<QuestionArgs> {
    let text = t.text();
    let colors: Vec<Color> = [Color::Red, Color::Green, Color::Blue]
        .into_iter()
        .filter(|&c| m.trace.id_of_color(c).is_some())
        .collect();
    let mut a = QuestionArgs::default();
    if text.contains("{color}") {
        let ok: Vec<Color> = colors
            .iter()
            .copied()
            .filter(|&c| match t.number() {
                19 => c != Color::Green && colors.contains(&Color::Green),
                20 => c != Color::Blue && colors.contains(&Color::Blue),
                25 => colors.contains(&Color::Green),
                26 => colors.contains(&Color::Blue),
                _ => true,
            })
            .collect();
        a.color = Some(*ok.choose(rng)?);
    }
    if text.contains("{other}") {
        let ok: Vec<Color> = colors.iter().copied().filter(|&c| Some(c) != a.color).collect();
        a.other = Some(*ok.choose(rng)?);
    }
    if text.contains("{t0}") {
        let (u, v) = (round2(rng.gen()), round2(rng.gen()));
        a.t0 = Some(u.min(v));
        a.t1 = Some(u.max(v));
    }
    if text.contains("{split}") {
        a.split = Some(round2(rng.gen_range(0.2..0.8)));
    }
    if text.contains("{pattern}") {
        a.pattern = Some(if rng.gen_bool(0.5) { "pat_a" } else { "bounce" }.to_string());
    }
    Some(a)
}

pub fn oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut per_template = [0usize; 27];
    let mut wrong = Vec::new();
    let mut invalid = 0;
    for seed in 0..50 {
        let m = mini_trace(seed);
        if !patternlab::trace::validate_trace(&m.trace).is_ok() {
            invalid += 1;
            continue;
        }
        for t in Template::all() {
            for _ in 0..3 {
                let Some(args) = draw_args(t, &m, &mut rng) else { continue };
                let q = QuestionInstance::new(t, args).expect("drawn arguments are valid");
                let got = answer(&q, &m.trace, Some(&m.ast));
                per_template[t.number() as usize - 1] += 1;
                match got {
                    Ok(g) if agrees(&g, &m.expect(&q, MOVING_THRESHOLD)) => {}
                    other => wrong.push(format!("trace {seed} {}: {other:?}", q.render())),
                }
            }
        }
    }
    let asked: usize = per_template.iter().sum();
    let covered = per_template.iter().filter(|&&k| k > 0).count();
    let detail = format!("50 traces, {asked} questions over {covered}/27 templates, {} disagree", wrong.len());
    let pass = wrong.is_empty() && covered == 27 && invalid == 0;
    match wrong.first() {
        Some(w) => Outcome::new(false, format!("{detail}; first: {w}")),
        None if invalid > 0 => Outcome::new(false, format!("{detail}; {invalid} generated traces invalid")),
        None => Outcome::new(pass, detail),
    }
}
