use patternlab::evolution::planted_family;
use patternlab::reward::{eval_bool, eval_partial, parse_reward, CtxEvent, EvalContext, RewardProgram};
use patternlab::trace::Trace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracle;
use crate::Outcome;

pub const SCORE_TOL: f64 = 1e-9;
const UIDS: [&str; 4] = ["u0", "u1", "u2", "u3"];

#[derive(Clone)]
enum Tree {
    Leaf(usize),
    Not(Box<Tree>),
    And(Box<Tree>, Box<Tree>),
    Or(Box<Tree>, Box<Tree>),
}

impl Tree {
    fn source(&self) -> String {
        match self {
            Tree::Leaf(i) => format!("EVENT(\"{}\")", UIDS[*i]),
            Tree::Not(t) => format!("NOT({})", t.source()),
            Tree::And(a, b) => format!("AND({}, {})", a.source(), b.source()),
            Tree::Or(a, b) => format!("OR({}, {})", a.source(), b.source()),
        }
    }

    /// Truth given the set of uids present in the stream, as a bit mask.
    fn holds(&self, present: u8) -> bool {
        match self {
            Tree::Leaf(i) => present & (1 << i) != 0,
            Tree::Not(t) => !t.holds(present),
            Tree::And(a, b) => a.holds(present) && b.holds(present),
            Tree::Or(a, b) => a.holds(present) || b.holds(present),
        }
    }
}

/// Every tree with at most `depth` node levels; a bare EVENT is depth 1.
fn trees(depth: usize) -> Vec<Tree> {
    let leaves: Vec<Tree> = (0..UIDS.len()).map(Tree::Leaf).collect();
    if depth == 1 {
        return leaves;
    }
    let sub = trees(depth - 1);
    let mut out = leaves;
    out.extend(sub.iter().map(|t| Tree::Not(Box::new(t.clone()))));
    for a in &sub {
        for b in &sub {
            out.push(Tree::And(Box::new(a.clone()), Box::new(b.clone())));
            out.push(Tree::Or(Box::new(a.clone()), Box::new(b.clone())));
        }
    }
    out
}

fn event(uid: &str, time: f64) -> CtxEvent {
    CtxEvent {
        uid: uid.into(),
        label: uid.into(),
        time,
        parameters: Default::default(),
    }
}

fn labels(uids: &[&str]) -> Vec<(String, String)> {
    uids.iter().map(|u| (u.to_string(), u.to_string())).collect()
}

fn context<'a>(trace: &'a Trace, events: &[(usize, f64)], uids: &[&str]) -> EvalContext<'a> {
    EvalContext::new(trace, events.iter().map(|&(u, t)| event(uids[u], t)).collect(), labels(uids))
}

fn base_trace() -> Trace {
    planted_family(1, 5).remove(0)
}

#[derive(Clone, Copy, Debug)]
enum Temporal {
    After(usize, usize, Option<f64>, Option<f64>),
    Within(usize, usize, f64),
    Count(u8, usize, u64),
}

const ABC: [&str; 3] = ["a", "b", "c"];

impl Temporal {
    fn source(&self) -> String {
        match *self {
            Temporal::After(a, b, lo, hi) => {
                let mut s = format!("AFTER(\"{}\", \"{}\"", ABC[a], ABC[b]);
                if let Some(v) = lo {
                    s += &format!(", min_delta={v}");
                }
                if let Some(v) = hi {
                    s += &format!(", max_delta={v}");
                }
                s + ")"
            }
            Temporal::Within(a, b, w) => format!("WITHIN(\"{}\", \"{}\", {w})", ABC[a], ABC[b]),
            Temporal::Count(k, u, c) => format!("{}(\"{}\", {c})", ["COUNT", "GT", "LT"][k as usize], ABC[u]),
        }
    }

    fn holds(&self, events: &[(usize, f64)]) -> bool {
        let times = |u: usize| events.iter().filter(move |e| e.0 == u).map(|e| e.1);
        let gap = |a: usize, b: usize, lo: f64, hi: f64| times(a).any(|x| times(b).any(|y| x - y > 0.0 && lo <= x - y && x - y <= hi));
        match *self {
            Temporal::After(a, b, lo, hi) => gap(a, b, lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY)),
            Temporal::Within(a, b, w) => gap(a, b, f64::NEG_INFINITY, w),
            Temporal::Count(k, u, c) => {
                let n = times(u).count() as u64;
                [n == c, n > c, n < c][k as usize]
            }
        }
    }

    /// Graded score of the clause on its own.
    fn score(&self, events: &[(usize, f64)]) -> f64 {
        if self.holds(events) {
            return 1.0;
        }
        match *self {
            Temporal::Count(k, u, c) => {
                let (n, c) = (events.iter().filter(|e| e.0 == u).count() as f64, c as f64);
                let dev = [(n - c).abs(), c + 1.0 - n, n - c + 1.0][k as usize];
                oracle::log_grade(dev, 10.0)
            }
            _ => 0.0,
        }
    }
}

fn temporal_programs() -> Vec<Temporal> {
    let bounds = [None, Some(0.25), Some(0.5)];
    let mut out = Vec::new();
    for a in 0..3 {
        for b in 0..3 {
            for lo in bounds {
                for hi in bounds {
                    out.push(Temporal::After(a, b, lo, hi));
                }
            }
            for w in [0.25, 0.5, 1.0] {
                out.push(Temporal::Within(a, b, w));
            }
        }
        for k in 0..3 {
            for c in 0..4 {
                out.push(Temporal::Count(k, a, c));
            }
        }
    }
    out
}

pub fn boolean_oracle() -> Outcome {
    let trace = base_trace();
    let programs: Vec<(Tree, RewardProgram)> = trees(3)
        .into_iter()
        .map(|t| {
            let p = parse_reward(&t.source()).expect("enumerated tree parses");
            (t, p)
        })
        .collect();
    let mut streams: Vec<Vec<(usize, f64)>> = Vec::new();
    for len in 0..=6u32 {
        for code in 0..4usize.pow(len) {
            let mut c = code;
            let s = (0..len)
                .map(|i| {
                    let u = c % 4;
                    c /= 4;
                    (u, i as f64 / 6.0)
                })
                .collect();
            streams.push(s);
        }
    }
    let (mut checks, mut wrong) = (0u64, Vec::new());
    for s in &streams {
        let ctx = context(&trace, s, &UIDS);
        let present = s.iter().fold(0u8, |m, e| m | 1 << e.0);
        for (t, p) in &programs {
            checks += 1;
            if eval_bool(p, &ctx).ok() != Some(t.holds(present)) {
                wrong.push(format!("{} on {s:?}", t.source()));
            }
        }
    }

    let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
    let temporal = temporal_programs();
    let parsed: Vec<RewardProgram> = temporal.iter().map(|t| parse_reward(&t.source()).expect("temporal program parses")).collect();
    let mut orderings = 0u64;
    for len in [2u32, 3] {
        for uc in 0..3usize.pow(len) {
            for tc in 0..5usize.pow(len) {
                let (mut u, mut t) = (uc, tc);
                let s: Vec<(usize, f64)> = (0..len)
                    .map(|_| {
                        let e = (u % 3, grid[t % 5]);
                        u /= 3;
                        t /= 5;
                        e
                    })
                    .collect();
                orderings += 1;
                let ctx = context(&trace, &s, &ABC);
                for (tp, p) in temporal.iter().zip(&parsed) {
                    checks += 1;
                    if eval_bool(p, &ctx).ok() != Some(tp.holds(&s)) {
                        wrong.push(format!("{} on {s:?}", tp.source()));
                    }
                }
            }
        }
    }
    let detail = format!(
        "{} trees x {} streams, {} temporal programs x {orderings} streams: {} of {checks} disagree",
        programs.len(),
        streams.len(),
        temporal.len(),
        wrong.len()
    );
    match wrong.first() {
        None => Outcome::new(true, detail),
        Some(w) => Outcome::new(false, format!("{detail}; first: {w}")),
    }
}

#[derive(Clone, Debug)]
enum Clause {
    Event(usize),
    NotEvent(usize),
    Or(usize, usize),
    Temporal(Temporal),
    Nearby { x: f64, y: f64, t: f64, s: f64 },
}

pub fn partial_credit() -> Outcome {
    let trace = base_trace();
    let ball = trace.scene.objects.iter().find(|o| !o.is_static).unwrap().id;
    let temporal = temporal_programs();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut worst, mut wrong) = (0.0f64, Vec::new());
    for _ in 0..1000 {
        let events: Vec<(usize, f64)> = (0..rng.gen_range(0..7)).map(|_| (rng.gen_range(0..3), (rng.gen_range(0..=100) as f64) / 100.0)).collect();
        let clauses: Vec<Clause> = (0..rng.gen_range(2..=5))
            .map(|_| match rng.gen_range(0..6) {
                0 => Clause::Event(rng.gen_range(0..3)),
                1 => Clause::NotEvent(rng.gen_range(0..3)),
                2 => Clause::Or(rng.gen_range(0..3), rng.gen_range(0..3)),
                3 | 4 => Clause::Temporal(temporal[rng.gen_range(0..temporal.len())]),
                _ => Clause::Nearby {
                    x: rng.gen_range(0..=256) as f64,
                    y: rng.gen_range(0..=256) as f64,
                    t: rng.gen_range(0..=20) as f64 / 20.0,
                    s: rng.gen_range(1..=20) as f64 / 100.0,
                },
            })
            .collect();
        let has = |u: usize| events.iter().any(|e| e.0 == u);
        let mut src = Vec::new();
        let mut expect = 0.0;
        for c in &clauses {
            let (s, v) = match c {
                Clause::Event(u) => (format!("EVENT(\"{}\")", ABC[*u]), has(*u) as u8 as f64),
                Clause::NotEvent(u) => (format!("NOT(EVENT(\"{}\"))", ABC[*u]), !has(*u) as u8 as f64),
                Clause::Or(a, b) => (format!("OR(EVENT(\"{}\"), EVENT(\"{}\"))", ABC[*a], ABC[*b]), (has(*a) || has(*b)) as u8 as f64),
                Clause::Temporal(tp) => (tp.source(), tp.score(&events)),
                Clause::Nearby { x, y, t, s } => {
                    let p = oracle::position(&trace, ball, *t).unwrap();
                    let d = ((p.x - x).powi(2) + (p.y - y).powi(2)).sqrt();
                    let thr = s * oracle::EXTENT;
                    let v = if d <= thr { 1.0 } else { oracle::log_grade(d - thr, oracle::EXTENT) };
                    (format!("NEARBY_AT({ball}, {x}, {y}, {t}, {s})"), v)
                }
            };
            src.push(s);
            expect += v;
        }
        expect /= clauses.len() as f64;
        let text = format!("AND({})", src.join(", "));
        let prog = parse_reward(&text).expect("random program parses");
        let got = eval_partial(&prog, &context(&trace, &events, &ABC)).expect("random program evaluates").score;
        worst = worst.max((got - expect).abs());
        if (got - expect).abs() > SCORE_TOL {
            wrong.push(format!("{text}: {got} vs {expect}"));
        }
    }

    // a target moved away from the ball in 33 steps never scores higher
    let t = 0.5;
    let p = oracle::position(&trace, ball, t).unwrap();
    let corner = [(0.0, 0.0), (256.0, 0.0), (0.0, 256.0), (256.0, 256.0)]
        .into_iter()
        .max_by(|a, b| (a.0 - p.x).hypot(a.1 - p.y).total_cmp(&(b.0 - p.x).hypot(b.1 - p.y)))
        .unwrap();
    let reach = (corner.0 - p.x).hypot(corner.1 - p.y);
    let dir = ((corner.0 - p.x) / reach, (corner.1 - p.y) / reach);
    let mut scores = Vec::new();
    for k in 0..33 {
        let d = 0.95 * reach * k as f64 / 32.0;
        let prog = parse_reward(&format!("NEARBY_AT({ball}, {}, {}, {t}, 0.05)", p.x + dir.0 * d, p.y + dir.1 * d)).unwrap();
        scores.push(eval_partial(&prog, &context(&trace, &[], &ABC)).unwrap().score);
    }
    let violations = scores.windows(2).filter(|w| w[1] > w[0]).count();
    let shaped = scores[0] == 1.0 && scores[32] < scores[0];
    let detail = format!(
        "1000 programs, max err {worst:.1e}, {} mismatches; sweep {:.3}..{:.3}, {violations} violations",
        wrong.len(),
        scores[0],
        scores[32]
    );
    let pass = wrong.is_empty() && violations == 0 && shaped;
    match wrong.first() {
        Some(w) => Outcome::new(false, format!("{detail}; first: {w}")),
        None => Outcome::new(pass, detail),
    }
}
