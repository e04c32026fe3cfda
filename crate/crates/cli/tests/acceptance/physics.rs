use patternlab::geom::{self, Vec2};
use patternlab::sim::{build_scene, simulate, simulate_observed, SceneTemplate, SimConfig, Snapshot};
use patternlab::trace::{serialize_trace, Action, Color, Scene, SceneObject, Shape, ShapeKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

pub const RESTITUTION_TOL: f64 = 0.05;
pub const ENERGY_TOL: f64 = 0.02;

fn object(id: i64, color: Color, kind: ShapeKind, is_static: bool, angle: f64, shape: Shape) -> SceneObject {
    SceneObject {
        description: SceneObject::describe(color, kind, id),
        id,
        kind,
        color,
        velocity: Vec2::ZERO,
        angle,
        is_static,
        shape,
    }
}

/// Five bodies in separate columns: circles and rotated boxes, some black
/// ones static.
fn random_scene(rng: &mut ChaCha8Rng) -> Scene {
    let colors = [Color::Green, Color::Blue, Color::Black, Color::Black, Color::Black];
    let mut objects = Vec::new();
    for (id, &color) in colors.iter().enumerate() {
        let c = Vec2::new(30.0 + 45.0 * id as f64 + rng.gen_range(-5.0..5.0), rng.gen_range(40.0..200.0));
        let is_static = color == Color::Black && rng.gen_bool(0.3);
        objects.push(if rng.gen_bool(0.5) {
            let radius = rng.gen_range(5.0..15.0);
            object(id as i64, color, ShapeKind::Circle, is_static, 0.0, Shape::Circle { center: c, radius })
        } else {
            let (w, h) = (rng.gen_range(10.0..30.0), rng.gen_range(5.0..15.0));
            let a = rng.gen_range(-0.6..0.6);
            let poly = geom::rect(Vec2::new(-w / 2.0, -h / 2.0), Vec2::new(w / 2.0, h / 2.0))
                .into_iter()
                .map(|v| c + v.rotate(a))
                .collect();
            object(id as i64, color, ShapeKind::Bar, is_static, a, Shape::Polygons(vec![poly]))
        });
    }
    Scene { objects }
}

/// Kinetic plus potential energy with unit density.
fn energy(s: &Snapshot, g: f64) -> f64 {
    s.bodies
        .iter()
        .filter(|b| !b.is_static)
        .map(|b| {
            let (m, i, c) = match &b.shape {
                Shape::Circle { center, radius } => {
                    let m = std::f64::consts::PI * radius * radius;
                    (m, 0.5 * m * radius * radius, *center)
                }
                Shape::Polygons(ps) => {
                    let p = &ps[0];
                    let (w, h) = (p[0].distance(p[1]), p[1].distance(p[2]));
                    let m = w * h;
                    (m, m * (w * w + h * h) / 12.0, geom::polygon_centroid(p))
                }
            };
            0.5 * m * b.velocity.length_sq() + 0.5 * i * b.angular_velocity * b.angular_velocity + m * g * c.y
        })
        .sum()
}

pub fn sanity() -> Outcome {
    let mut bad = Vec::new();

    let scene = build_scene(&SceneTemplate::new("stack", 3)).unwrap();
    let action = Action::new(70.0, 200.0, 12.0);
    let first = serialize_trace(&simulate(&scene, &action, &SimConfig::default()).unwrap());
    let identical = (1..100)
        .filter(|_| serialize_trace(&simulate(&scene, &action, &SimConfig::default()).unwrap()) == first)
        .count()
        + 1;
    if identical != 100 {
        bad.push(format!("{identical} of 100 runs identical"));
    }

    let mut ratios = Vec::new();
    for e in [0.3, 0.5, 0.8] {
        let cfg = SimConfig {
            restitution: e,
            damping: 0.0,
            ..SimConfig::default()
        };
        let mut vy = Vec::new();
        let mut obs = |s: &Snapshot| vy.push(s.bodies[0].velocity.y);
        simulate_observed(&Scene { objects: vec![] }, &Action::new(128.0, 150.0, 8.0), &cfg, Some(&mut obs)).unwrap();
        match vy.windows(2).position(|w| w[0] < 0.0 && w[1] > 0.0) {
            Some(k) => {
                let r = vy[k + 1].abs() / vy[k].abs();
                ratios.push(r);
                if (r - e).abs() > RESTITUTION_TOL * e {
                    bad.push(format!("restitution {e}: rebound ratio {r:.4}"));
                }
            }
            None => bad.push(format!("restitution {e}: no bounce")),
        }
    }

    let cfg = SimConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut runs, mut worst) = (0, 0.0f64);
    while runs < 20 {
        let scene = random_scene(&mut rng);
        let action = Action::new(rng.gen_range(20.0..236.0), rng.gen_range(215.0..225.0), rng.gen_range(4.0..10.0));
        let mut es = Vec::new();
        let mut obs = |s: &Snapshot| es.push(energy(s, cfg.gravity));
        if simulate_observed(&scene, &action, &cfg, Some(&mut obs)).is_err() {
            continue;
        }
        runs += 1;
        let scale = es[0].abs().max(1.0);
        let mut low = f64::INFINITY;
        for e in &es {
            low = low.min(*e);
            worst = worst.max((e - low) / scale);
        }
    }
    if worst > ENERGY_TOL {
        bad.push(format!("energy rose by {:.2}% of scale", worst * 100.0));
    }
    let detail = format!(
        "100/100 identical, rebound ratios {:?}, max energy rise {:.3}% over {runs} scenes",
        ratios.iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
        worst * 100.0
    );
    Outcome::new(bad.is_empty(), if bad.is_empty() { detail } else { bad.join("; ") })
}
