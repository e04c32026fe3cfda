//! Parameterized scene families. Every template places exactly one green
//! and one blue object; the seed jitters positions within small ranges.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geom::{rect, Vec2};
use crate::trace::{Color, Scene, SceneObject, Shape, ShapeKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneTemplate {
    pub template_id: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub seed: u64,
}

impl SceneTemplate {
    pub fn new(template_id: &str, seed: u64) -> Self {
        SceneTemplate {
            template_id: template_id.to_string(),
            params: BTreeMap::new(),
            seed,
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }
}

type BuildFn = fn(&mut Builder, &Params);

struct TemplateDef {
    id: &'static str,
    defaults: &'static [(&'static str, f64)],
    build: BuildFn,
}

const TEMPLATES: &[TemplateDef] = &[
    TemplateDef {
        id: "ball_on_bar",
        defaults: &[
            ("shelf_x", 90.0),
            ("shelf_y", 120.0),
            ("shelf_len", 70.0),
            ("ball_r", 10.0),
            ("target_x", 190.0),
            ("target_len", 50.0),
            ("jitter", 15.0),
        ],
        build: ball_on_bar,
    },
    TemplateDef {
        id: "falling_ball",
        defaults: &[
            ("ball_x", 70.0),
            ("ball_y", 210.0),
            ("ball_r", 9.0),
            ("ramp_tilt", 0.35),
            ("ramp_len", 90.0),
            ("target_x", 200.0),
            ("target_len", 40.0),
            ("jitter", 12.0),
        ],
        build: falling_ball,
    },
    TemplateDef {
        id: "lever",
        defaults: &[
            ("pivot_x", 128.0),
            ("pivot_h", 30.0),
            ("plank_len", 140.0),
            ("ball_r", 9.0),
            ("target_x", 210.0),
            ("target_y", 110.0),
            ("jitter", 10.0),
        ],
        build: lever,
    },
    TemplateDef {
        id: "buckets3",
        defaults: &[
            ("shelf_len", 70.0),
            ("shelf_y", 150.0),
            ("ball_r", 10.0),
            ("jar_width", 40.0),
            ("jar_height", 40.0),
            ("first_jar_x", 120.0),
            ("jar_gap", 50.0),
            ("jitter", 0.0),
        ],
        build: buckets3,
    },
    TemplateDef {
        id: "wall_bounce",
        defaults: &[
            ("post_x", 190.0),
            ("post_h", 80.0),
            ("ball_r", 10.0),
            ("target_x", 30.0),
            ("target_h", 40.0),
            ("jitter", 12.0),
        ],
        build: wall_bounce,
    },
    TemplateDef {
        id: "stack",
        defaults: &[
            ("count", 3.0),
            ("stack_x", 80.0),
            ("block_w", 40.0),
            ("block_h", 12.0),
            ("ball_r", 9.0),
            ("target_x", 200.0),
            ("jitter", 10.0),
        ],
        build: stack,
    },
];

pub fn template_ids() -> Vec<&'static str> {
    TEMPLATES.iter().map(|t| t.id).collect()
}

struct Params {
    values: BTreeMap<String, f64>,
    jitter: BTreeMap<String, f64>,
}

impl Params {
    fn get(&self, name: &str) -> f64 {
        self.values[name]
    }

    /// Parameter plus its seeded offset in `[-jitter, jitter]`.
    fn jit(&self, name: &str) -> f64 {
        self.values[name] + self.jitter.get(name).copied().unwrap_or(0.0)
    }
}

struct Builder {
    objects: Vec<SceneObject>,
}

impl Builder {
    fn push(
        &mut self,
        color: Color,
        kind: ShapeKind,
        is_static: bool,
        angle: f64,
        shape: Shape,
    ) -> i64 {
        let id = self.objects.len() as i64;
        self.objects.push(SceneObject {
            description: SceneObject::describe(color, kind, id),
            id,
            kind,
            color,
            velocity: Vec2::ZERO,
            angle,
            is_static,
            shape,
        });
        id
    }

    fn ball(&mut self, color: Color, center: Vec2, radius: f64, is_static: bool) -> i64 {
        self.push(
            color,
            ShapeKind::Circle,
            is_static,
            0.0,
            Shape::Circle { center, radius },
        )
    }

    /// Bar of the given length and thickness centered at `center`, rotated by `angle`.
    fn bar(
        &mut self,
        color: Color,
        center: Vec2,
        len: f64,
        thick: f64,
        angle: f64,
        is_static: bool,
    ) -> i64 {
        let half = Vec2::new(len / 2.0, thick / 2.0);
        let poly = rect(-half, half)
            .into_iter()
            .map(|v| center + v.rotate(angle))
            .collect();
        self.push(
            color,
            ShapeKind::Bar,
            is_static,
            angle,
            Shape::Polygons(vec![poly]),
        )
    }

    fn bar_rect(&mut self, color: Color, min: Vec2, max: Vec2, is_static: bool) -> i64 {
        self.push(
            color,
            ShapeKind::Bar,
            is_static,
            0.0,
            Shape::Polygons(vec![rect(min, max)]),
        )
    }

    /// Open-topped container: floor plate plus two side walls.
    fn jar(
        &mut self,
        color: Color,
        base_x: f64,
        base_y: f64,
        width: f64,
        height: f64,
        is_static: bool,
    ) -> i64 {
        let wall = 4.0;
        let (l, r) = (base_x - width / 2.0, base_x + width / 2.0);
        let pieces = vec![
            rect(Vec2::new(l, base_y), Vec2::new(r, base_y + wall)),
            rect(
                Vec2::new(l, base_y + wall),
                Vec2::new(l + wall, base_y + height),
            ),
            rect(
                Vec2::new(r - wall, base_y + wall),
                Vec2::new(r, base_y + height),
            ),
        ];
        self.push(
            color,
            ShapeKind::Jar,
            is_static,
            0.0,
            Shape::Polygons(pieces),
        )
    }

    /// Two upright posts joined by a crossbar.
    fn sticks(
        &mut self,
        color: Color,
        base_x: f64,
        width: f64,
        height: f64,
        is_static: bool,
    ) -> i64 {
        let t = 4.0;
        let (l, r) = (base_x - width / 2.0, base_x + width / 2.0);
        let pieces = vec![
            rect(Vec2::new(l, 0.0), Vec2::new(l + t, height - t)),
            rect(Vec2::new(r - t, 0.0), Vec2::new(r, height - t)),
            rect(Vec2::new(l, height - t), Vec2::new(r, height)),
        ];
        self.push(
            color,
            ShapeKind::StandingSticks,
            is_static,
            0.0,
            Shape::Polygons(pieces),
        )
    }
}

fn ball_on_bar(b: &mut Builder, p: &Params) {
    let (sx, sy, len, r) = (
        p.jit("shelf_x"),
        p.jit("shelf_y"),
        p.get("shelf_len"),
        p.get("ball_r"),
    );
    let thick = 6.0;
    b.ball(Color::Green, Vec2::new(sx, sy + thick / 2.0 + r), r, false);
    b.bar(Color::Black, Vec2::new(sx, sy), len, thick, 0.0, true);
    let (tx, tl) = (p.jit("target_x"), p.get("target_len"));
    b.bar_rect(
        Color::Blue,
        Vec2::new(tx - tl / 2.0, 0.0),
        Vec2::new(tx + tl / 2.0, 6.0),
        true,
    );
}

fn falling_ball(b: &mut Builder, p: &Params) {
    let (x, y, r) = (p.jit("ball_x"), p.get("ball_y"), p.get("ball_r"));
    b.ball(Color::Green, Vec2::new(x, y), r, false);
    let tilt = p.get("ramp_tilt");
    // ramp below the ball sloping down to the left, away from the target
    b.bar(
        Color::Black,
        Vec2::new(x + 10.0, 110.0),
        p.get("ramp_len"),
        6.0,
        tilt,
        true,
    );
    let (tx, tl) = (p.jit("target_x"), p.get("target_len"));
    b.bar_rect(
        Color::Blue,
        Vec2::new(tx - tl / 2.0, 0.0),
        Vec2::new(tx + tl / 2.0, 6.0),
        true,
    );
}

fn lever(b: &mut Builder, p: &Params) {
    let (px, ph, len, r) = (
        p.jit("pivot_x"),
        p.get("pivot_h"),
        p.get("plank_len"),
        p.get("ball_r"),
    );
    let thick = 6.0;
    b.bar_rect(
        Color::Black,
        Vec2::new(px - 5.0, 0.0),
        Vec2::new(px + 5.0, ph),
        true,
    );
    let plank_y = ph + thick / 2.0;
    b.bar(Color::Black, Vec2::new(px, plank_y), len, thick, 0.0, false);
    let gx = px - len / 2.0 + r + 4.0;
    b.ball(
        Color::Green,
        Vec2::new(gx, plank_y + thick / 2.0 + r),
        r,
        false,
    );
    let (tx, ty) = (p.jit("target_x"), p.jit("target_y"));
    b.bar_rect(
        Color::Blue,
        Vec2::new(tx - 20.0, ty),
        Vec2::new(tx + 20.0, ty + 6.0),
        true,
    );
}

fn buckets3(b: &mut Builder, p: &Params) {
    let (len, sy, r) = (p.get("shelf_len"), p.jit("shelf_y"), p.get("ball_r"));
    let thick = 6.0;
    b.ball(
        Color::Green,
        Vec2::new(len - 2.0 * r, sy + thick / 2.0 + r),
        r,
        false,
    );
    b.bar_rect(
        Color::Black,
        Vec2::new(0.0, sy - thick / 2.0),
        Vec2::new(len, sy + thick / 2.0),
        true,
    );
    let (w, h) = (p.get("jar_width"), p.get("jar_height"));
    let x0 = p.jit("first_jar_x");
    let gap = p.get("jar_gap");
    let colors = [Color::Black, Color::Black, Color::Blue];
    for (i, c) in colors.into_iter().enumerate() {
        b.jar(c, x0 + gap * i as f64, 0.0, w, h, true);
    }
}

fn wall_bounce(b: &mut Builder, p: &Params) {
    let (px, ph, r) = (p.jit("post_x"), p.jit("post_h"), p.get("ball_r"));
    b.bar_rect(
        Color::Black,
        Vec2::new(px - 6.0, 0.0),
        Vec2::new(px + 6.0, ph),
        true,
    );
    b.ball(Color::Green, Vec2::new(px, ph + r), r, false);
    let (tx, th) = (p.jit("target_x"), p.get("target_h"));
    b.bar_rect(
        Color::Blue,
        Vec2::new(tx - 4.0, 0.0),
        Vec2::new(tx + 4.0, th),
        true,
    );
}

fn stack(b: &mut Builder, p: &Params) {
    let count = p.get("count").round().max(1.0) as usize;
    let (sx, w, h, r) = (
        p.jit("stack_x"),
        p.get("block_w"),
        p.get("block_h"),
        p.get("ball_r"),
    );
    let mut top = 0.0;
    for i in 0..count {
        // small alternating offsets make the tower easy to topple
        let dx = if i % 2 == 0 { 0.0 } else { w * 0.15 };
        b.bar_rect(
            Color::Black,
            Vec2::new(sx - w / 2.0 + dx, top),
            Vec2::new(sx + w / 2.0 + dx, top + h),
            false,
        );
        top += h;
    }
    b.ball(Color::Green, Vec2::new(sx, top + r), r, false);
    b.sticks(Color::Blue, p.jit("target_x"), 40.0, 30.0, true);
}

/// Instantiates a template; identical inputs give identical scenes.
pub fn build_scene(template: &SceneTemplate) -> Result<Scene, SimError> {
    let def = TEMPLATES
        .iter()
        .find(|t| t.id == template.template_id)
        .ok_or_else(|| SimError::UnknownTemplate(template.template_id.clone()))?;
    let mut values: BTreeMap<String, f64> = def
        .defaults
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();
    for (k, v) in &template.params {
        if !values.contains_key(k) {
            return Err(SimError::BadParameter {
                name: k.clone(),
                message: format!("not a parameter of `{}`", def.id),
            });
        }
        if !v.is_finite() {
            return Err(SimError::BadParameter {
                name: k.clone(),
                message: "must be finite".into(),
            });
        }
        values.insert(k.clone(), *v);
    }
    let amp = values["jitter"].abs();
    let mut rng = ChaCha8Rng::seed_from_u64(template.seed);
    let mut jitter = BTreeMap::new();
    // jitter applies to positional parameters, drawn in key order
    for k in values.keys() {
        if k.ends_with("_x") || k.ends_with("_y") || k.ends_with("_h") {
            let d: f64 = if amp > 0.0 {
                rng.gen_range(-amp..=amp)
            } else {
                0.0
            };
            jitter.insert(k.clone(), d);
        }
    }
    let params = Params { values, jitter };
    let mut builder = Builder {
        objects: Vec::new(),
    };
    (def.build)(&mut builder, &params);
    let scene = Scene {
        objects: builder.objects,
    };
    check_scene(&scene)?;
    Ok(scene)
}

fn check_scene(scene: &Scene) -> Result<(), SimError> {
    let count = |c| scene.objects.iter().filter(|o| o.color == c).count();
    if count(Color::Green) != 1 || count(Color::Blue) != 1 || count(Color::Red) != 0 {
        return Err(SimError::InvalidScene(
            "need exactly one green and one blue object and no red object".into(),
        ));
    }
    let out = scene
        .objects
        .iter()
        .flat_map(|o| match &o.shape {
            Shape::Circle { center, radius } => vec![
                *center + Vec2::new(*radius, *radius),
                *center - Vec2::new(*radius, *radius),
            ],
            Shape::Polygons(_) => o.vertices().collect(),
        })
        .any(|v| !(-1e-9..=256.0 + 1e-9).contains(&v.x) || !(-1e-9..=256.0 + 1e-9).contains(&v.y));
    if out {
        return Err(SimError::InvalidScene(
            "geometry leaves the 256x256 scene".into(),
        ));
    }
    Ok(())
}
