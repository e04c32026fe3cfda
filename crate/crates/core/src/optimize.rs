//! Simulated annealing over the single-ball action space, scored by a
//! reward program.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::annotate::{LibraryError, PatternLibrary};
use crate::geom::Vec2;
use crate::reward::{eval_bool, eval_partial, validate_against_library, EvalContext, RewardError, RewardProgram};
use crate::sim::{check_placement, simulate, SimConfig, SimError};
use crate::trace::{Action, Color, Scene, ShapeKind, Trace, SCENE_EXTENT};

/// Draws allowed when looking for a valid starting placement.
const INITIAL_TRIES: usize = 200;
pub const SUCCESS_TOLERANCE: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealConfig {
    pub samples: usize,
    pub t0: f64,
    pub cooling: f64,
    /// Proposal standard deviations for x, y and radius.
    pub sigma: [f64; 3],
    pub seed: u64,
    pub initial: Option<Action>,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            samples: 250,
            t0: 0.5,
            cooling: 0.995,
            sigma: [16.0, 16.0, 2.0],
            seed: 0,
            initial: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OptimizeError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let bad = |m: &str| Err(OptimizeError::Config(m.into()));
        if self.samples == 0 {
            return bad("samples must be at least 1");
        }
        if !(self.t0 > 0.0) {
            return bad("initial temperature must be positive");
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return bad("cooling factor must lie in (0, 1)");
        }
        if self.sigma.iter().any(|s| !(*s > 0.0)) {
            return bad("proposal steps must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    /// Partial-credit score in [0, 1].
    #[default]
    Dense,
    /// 1 when the program is satisfied, else 0.
    Binary,
}

/// A reward program bound to the library used to annotate rollouts.
#[derive(Clone, Debug)]
pub struct RewardFn {
    pub program: RewardProgram,
    pub library: PatternLibrary,
    pub mode: RewardMode,
}

impl RewardFn {
    pub fn new(program: RewardProgram, library: PatternLibrary, mode: RewardMode) -> Result<Self, RewardError> {
        validate_against_library(&program, &library)?;
        Ok(RewardFn { program, library, mode })
    }

    pub fn binary(&self) -> RewardFn {
        RewardFn {
            mode: RewardMode::Binary,
            ..self.clone()
        }
    }

    pub fn score(&self, trace: &Trace) -> Result<f64, OptimizeError> {
        let ctx = EvalContext::from_library(trace, &self.library)?;
        Ok(match self.mode {
            RewardMode::Dense => eval_partial(&self.program, &ctx)?.score,
            RewardMode::Binary => {
                if eval_bool(&self.program, &ctx)? {
                    1.0
                } else {
                    0.0
                }
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub action: Action,
    pub score: f64,
    pub accepted: bool,
    /// False when the placement overlapped the scene and was not simulated.
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationRun {
    pub history: Vec<Sample>,
    pub best_index: usize,
    pub best: Sample,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub best_trace: Option<Trace>,
}

fn evaluate(scene: &Scene, reward: &RewardFn, sim: &SimConfig, a: &Action) -> Result<(f64, Option<Trace>), OptimizeError> {
    if check_placement(scene, a).is_err() {
        return Ok((0.0, None));
    }
    let trace = match simulate(scene, a, sim) {
        Ok(t) => t,
        Err(SimError::InvalidPlacement(_)) | Err(SimError::InvalidAction(_)) => return Ok((0.0, None)),
        Err(e) => return Err(e.into()),
    };
    Ok((reward.score(&trace)?, Some(trace)))
}

fn random_action(rng: &mut ChaCha8Rng) -> Action {
    Action::new(
        rng.gen_range(0.0..=SCENE_EXTENT),
        rng.gen_range(0.0..=SCENE_EXTENT),
        rng.gen_range(Action::MIN_RADIUS..=Action::MAX_RADIUS),
    )
}

/// Simulated annealing with Gaussian proposals clipped to the action
/// bounds and a geometric cooling schedule. Overlapping placements score 0
/// and stay in the history.
pub fn anneal(scene: &Scene, reward: &RewardFn, config: &AnnealConfig, sim: &SimConfig) -> Result<OptimizationRun, OptimizeError> {
    config.validate()?;
    sim.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let start = match config.initial {
        Some(a) => a.clamped(),
        None => {
            let mut a = random_action(&mut rng);
            for _ in 1..INITIAL_TRIES {
                if check_placement(scene, &a).is_ok() {
                    break;
                }
                a = random_action(&mut rng);
            }
            a
        }
    };
    let normals = config.sigma.map(|s| Normal::new(0.0, s).expect("positive sigma"));
    let (s0, t0) = evaluate(scene, reward, sim, &start)?;
    let mut history = vec![Sample {
        action: start,
        score: s0,
        accepted: true,
        valid: t0.is_some(),
    }];
    let (mut cur, mut cur_score) = (start, s0);
    let (mut best_index, mut best_trace) = (0, t0);
    let mut temp = config.t0;
    for i in 1..config.samples {
        temp *= config.cooling;
        let a = Action::new(
            cur.position.x + normals[0].sample(&mut rng),
            cur.position.y + normals[1].sample(&mut rng),
            cur.radius + normals[2].sample(&mut rng),
        )
        .clamped();
        let u: f64 = rng.gen();
        let (score, trace) = evaluate(scene, reward, sim, &a)?;
        let valid = trace.is_some();
        let delta = score - cur_score;
        let accepted = delta >= 0.0 || u < (delta / temp).exp();
        if accepted {
            cur = a;
            cur_score = score;
        }
        if score > history[best_index].score {
            best_index = i;
            best_trace = trace;
        }
        history.push(Sample {
            action: a,
            score,
            accepted,
            valid,
        });
    }
    let best = history[best_index].clone();
    Ok(OptimizationRun {
        history,
        best_index,
        best,
        best_trace,
    })
}

/// True when the green object's final center lies strictly within `tol`
/// of `target`.
pub fn success_test(trace: &Trace, target: Vec2, tol: f64) -> bool {
    let Some(id) = trace.id_of_color(Color::Green) else {
        return false;
    };
    let last = trace.frames.len().saturating_sub(1);
    trace.position_at(id, last).is_some_and(|p| p.distance(target) < tol)
}

/// Resting point of a ball of radius `r` on the floor of the first jar of
/// the given color.
pub fn jar_target(scene: &Scene, color: Color, r: f64) -> Option<Vec2> {
    let jar = scene.objects.iter().find(|o| o.kind == ShapeKind::Jar && o.color == color)?;
    let (mut lo, mut hi) = (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    let mut floor_top = f64::INFINITY;
    if let crate::trace::Shape::Polygons(polys) = &jar.shape {
        for poly in polys {
            let top = poly.iter().map(|v| v.y).fold(f64::NEG_INFINITY, f64::max);
            for v in poly {
                lo = Vec2::new(lo.x.min(v.x), lo.y.min(v.y));
                hi = Vec2::new(hi.x.max(v.x), hi.y.max(v.y));
            }
            floor_top = floor_top.min(top);
        }
    }
    if !floor_top.is_finite() {
        return None;
    }
    Some(Vec2::new((lo.x + hi.x) / 2.0, floor_top + r))
}

/// Goal program for the bucket scene: the red ball strikes the green ball,
/// which falls and comes to rest in the second jar.
pub const BUCKET_GOAL: &str = r#"AND(EVENT("CollisionStart", {"a_id": OBJECT_ID("green", "circle"), "b_id": OBJECT_ID("red", "circle")}), EVENT("free_fall", {"object_id": "green ball"}), NEARBY_AT("green ball", 144.0, 14.0, 1.0, 0.03))"#;

/// Three jars under a low shelf with the green ball at its edge, and the
/// success target on the floor of the second jar.
pub fn bucket_scene() -> (Scene, Vec2) {
    let tpl = crate::sim::SceneTemplate::new("buckets3", 0)
        .with("first_jar_x", 100.0)
        .with("jar_gap", 44.0)
        .with("shelf_len", 90.0)
        .with("shelf_y", 100.0);
    let scene = crate::sim::build_scene(&tpl).expect("bucket template builds");
    (scene, Vec2::new(144.0, 14.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub x_bins: usize,
    pub y_bins: usize,
    /// `cells[j][i]`: best score among proposals in x bin `i`, y bin `j`
    /// (y bin 0 at the bottom); `None` when unvisited.
    pub cells: Vec<Vec<Option<f64>>>,
}

pub fn export_heatmap(run: &OptimizationRun, x_bins: usize, y_bins: usize) -> Heatmap {
    let (xb, yb) = (x_bins.max(1), y_bins.max(1));
    let mut cells = vec![vec![None; xb]; yb];
    let bin = |v: f64, n: usize| ((v / SCENE_EXTENT * n as f64).floor().max(0.0) as usize).min(n - 1);
    for s in &run.history {
        let (i, j) = (bin(s.action.position.x, xb), bin(s.action.position.y, yb));
        let c: &mut Option<f64> = &mut cells[j][i];
        *c = Some(c.map_or(s.score, |v: f64| v.max(s.score)));
    }
    Heatmap {
        x_bins: xb,
        y_bins: yb,
        cells,
    }
}

impl Heatmap {
    pub fn to_json(&self) -> String {
        crate::trace::to_canonical_json(self)
    }

    /// Binary PPM with `scale` pixels per cell, top row = highest y bin.
    /// Unvisited cells are dark blue; visited cells run black to white.
    pub fn to_ppm(&self, scale: usize) -> Vec<u8> {
        let s = scale.max(1);
        let (w, h) = (self.x_bins * s, self.y_bins * s);
        let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
        let ch = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        for py in 0..h {
            let j = self.y_bins - 1 - py / s;
            for px in 0..w {
                let rgb = match self.cells[j][px / s] {
                    None => [16, 24, 48],
                    Some(v) => {
                        let v = v.clamp(0.0, 1.0);
                        [ch(3.0 * v), ch(3.0 * v - 1.0), ch(3.0 * v - 2.0)]
                    }
                };
                out.extend_from_slice(&rgb);
            }
        }
        out
    }
}
