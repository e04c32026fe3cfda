//! Deterministic 2D rigid-body simulation of one-ball tasks.
//!
//! The agent adds a red ball to a scene; the rollout succeeds when the green
//! and blue objects touch at the end. The solver uses fixed substeps,
//! sequential impulses with Coulomb friction and a restitution pass, and a
//! single positional projection pass. The four scene boundaries are
//! half-planes with the reserved ids in [`crate::trace`].

mod body;
mod collide;
mod templates;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::geom::Vec2;
use crate::trace::{
    Action, Color, Frame, Scene, SceneObject, ShapeKind, Trace, TraceEvent, COLLISION_END,
    COLLISION_START, SCENE_EXTENT, TASK_COMPLETE,
};

pub use body::{mass_properties, MassProperties};
pub use templates::{build_scene, template_ids, SceneTemplate};

use body::Body;
use collide::Manifold;

/// Separation at or below which two bodies count as touching.
pub const CONTACT_TOLERANCE: f64 = 0.5;
/// Separation above which an open contact is considered ended.
pub const RELEASE_TOLERANCE: f64 = 1.0;

const LINEAR_SLOP: f64 = 0.1;
const POSITION_BAUMGARTE: f64 = 0.2;
const MAX_CORRECTION: f64 = 2.0;
const RESTITUTION_THRESHOLD: f64 = 20.0;
const COORD_LIMIT: f64 = 1024.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Downward acceleration in scene units per second squared.
    pub gravity: f64,
    /// Number of recorded frames.
    pub timesteps: usize,
    /// Simulated seconds covered by the rollout.
    pub duration: f64,
    pub substeps: usize,
    pub iterations: usize,
    pub restitution: f64,
    pub friction: f64,
    /// Linear and angular velocity damping per second.
    pub damping: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            // 9.8 m/s^2 with 25.6 scene units per meter
            gravity: 9.8 * 25.6,
            timesteps: 300,
            duration: 5.0,
            substeps: 4,
            iterations: 8,
            restitution: 0.3,
            friction: 0.5,
            damping: 0.05,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let finite = [
            self.gravity,
            self.duration,
            self.restitution,
            self.friction,
            self.damping,
        ];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SimError::InvalidConfig(
                "coefficients must be finite and non-negative".into(),
            ));
        }
        if self.timesteps < 2 {
            return Err(SimError::InvalidConfig(
                "timesteps must be at least 2".into(),
            ));
        }
        if self.substeps == 0 || self.iterations == 0 {
            return Err(SimError::InvalidConfig(
                "substeps and iterations must be positive".into(),
            ));
        }
        if self.restitution > 1.0 {
            return Err(SimError::InvalidConfig(
                "restitution must lie in [0, 1]".into(),
            ));
        }
        if self.duration == 0.0 {
            return Err(SimError::InvalidConfig("duration must be positive".into()));
        }
        Ok(())
    }

    fn total_substeps(&self) -> usize {
        (self.timesteps - 1) * self.substeps
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("action out of bounds: {0}")]
    InvalidAction(String),
    #[error("invalid placement: red ball overlaps object {0}")]
    InvalidPlacement(i64),
    #[error(
        "simulation diverged at t={time:.4}: object {id} has non-finite or out-of-range state"
    )]
    Diverged { time: f64, id: i64 },
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("template parameter `{name}`: {message}")]
    BadParameter { name: String, message: String },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
}

/// Pose and velocity of one body at an observed instant.
#[derive(Clone, Debug)]
pub struct BodyState {
    pub id: i64,
    pub is_static: bool,
    pub position: Vec2,
    pub angle: f64,
    pub velocity: Vec2,
    pub angular_velocity: f64,
    pub shape: crate::trace::Shape,
}

/// Full world state at a substep, handed to observers.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub time: f64,
    pub bodies: Vec<BodyState>,
}

/// Event ordering of a contact pair: a scene boundary always comes second,
/// otherwise the lower id comes first.
pub fn pair_key(a: i64, b: i64) -> (i64, i64) {
    match (a < 0, b < 0) {
        (true, false) => (b, a),
        (false, true) => (a, b),
        _ => (a.min(b), a.max(b)),
    }
}

/// Bodies, indexed with the boundary half-planes first.
struct World {
    bodies: Vec<Body>,
    config: SimConfig,
    h: f64,
}

impl World {
    fn new(objects: &[SceneObject], config: &SimConfig) -> Self {
        let mut bodies = Body::boundaries();
        bodies.extend(objects.iter().map(Body::from_object));
        World {
            bodies,
            config: config.clone(),
            h: config.duration / config.total_substeps() as f64,
        }
    }

    fn collide(&self, margin: f64) -> Vec<Manifold> {
        let mut out = Vec::new();
        let n = self.bodies.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (&self.bodies[i], &self.bodies[j]);
                if a.is_static && b.is_static {
                    continue;
                }
                if !a.may_touch(b, margin) {
                    continue;
                }
                for (si, sa) in a.world.iter().enumerate() {
                    for (sj, sb) in b.world.iter().enumerate() {
                        if let Some(m) = collide::collide(sa, sb, margin) {
                            out.push(Manifold::new(i, j, si, sj, m));
                        }
                    }
                }
            }
        }
        out
    }

    fn integrate_velocities(&mut self) {
        let h = self.h;
        let g = Vec2::new(0.0, -self.config.gravity);
        let damp = 1.0 / (1.0 + h * self.config.damping);
        for b in self.bodies.iter_mut().filter(|b| !b.is_static) {
            b.vel = (b.vel + g * h) * damp;
            b.omega *= damp;
        }
    }

    fn solve_velocities(&mut self, manifolds: &mut [Manifold]) {
        let h = self.h;
        for m in manifolds.iter_mut() {
            let (a, b) = (&self.bodies[m.a], &self.bodies[m.b]);
            m.prepare(a, b);
        }
        for _ in 0..self.config.iterations {
            for m in manifolds.iter_mut() {
                let (a, b) = two_mut(&mut self.bodies, m.a, m.b);
                m.solve(a, b, self.config.friction, h);
            }
        }
        let e = self.config.restitution;
        if e > 0.0 {
            for m in manifolds.iter_mut() {
                let (a, b) = two_mut(&mut self.bodies, m.a, m.b);
                m.restitute(a, b, e, RESTITUTION_THRESHOLD);
            }
        }
    }

    fn integrate_positions(&mut self) {
        let h = self.h;
        for b in self.bodies.iter_mut().filter(|b| !b.is_static) {
            b.pos += b.vel * h;
            b.angle += b.omega * h;
            b.refresh();
        }
    }

    fn correct_positions(&mut self, manifolds: &[Manifold]) {
        for m in manifolds {
            let (a, b) = two_mut(&mut self.bodies, m.a, m.b);
            let (sa, sb) = (&a.world[m.shape_a], &b.world[m.shape_b]);
            let Some(current) = collide::collide(sa, sb, 0.0) else {
                continue;
            };
            let Some(deepest) = current
                .points
                .iter()
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .copied()
            else {
                continue;
            };
            let (point, sep) = deepest;
            let c = (POSITION_BAUMGARTE * (sep + LINEAR_SLOP)).clamp(-MAX_CORRECTION, 0.0);
            if c >= 0.0 {
                continue;
            }
            let n = current.normal;
            let ra = point - a.pos;
            let rb = point - b.pos;
            let rna = ra.cross(n);
            let rnb = rb.cross(n);
            let k = a.inv_mass + b.inv_mass + a.inv_inertia * rna * rna + b.inv_inertia * rnb * rnb;
            if k <= 0.0 {
                continue;
            }
            let impulse = -c / k;
            let p = n * impulse;
            if !a.is_static {
                a.pos -= p * a.inv_mass;
                a.angle -= a.inv_inertia * ra.cross(p);
                a.refresh();
            }
            if !b.is_static {
                b.pos += p * b.inv_mass;
                b.angle += b.inv_inertia * rb.cross(p);
                b.refresh();
            }
        }
    }

    fn check_finite(&self, time: f64) -> Result<(), SimError> {
        for b in self.bodies.iter().filter(|b| !b.is_static) {
            let ok = b.pos.is_finite()
                && b.vel.is_finite()
                && b.angle.is_finite()
                && b.omega.is_finite()
                && b.pos.x.abs() <= COORD_LIMIT
                && b.pos.y.abs() <= COORD_LIMIT
                && b.vel.x.abs() <= COORD_LIMIT
                && b.vel.y.abs() <= COORD_LIMIT;
            if !ok {
                return Err(SimError::Diverged { time, id: b.id });
            }
        }
        Ok(())
    }

    fn snapshot(&self, time: f64) -> Snapshot {
        Snapshot {
            time,
            bodies: self
                .bodies
                .iter()
                .filter(|b| !b.is_boundary())
                .map(|b| BodyState {
                    id: b.id,
                    is_static: b.is_static,
                    position: b.pos,
                    angle: b.angle,
                    velocity: b.vel,
                    angular_velocity: b.omega,
                    shape: b.shape(),
                })
                .collect(),
        }
    }

    fn frame(&self, time: f64, template: &BTreeMap<i64, &SceneObject>) -> Frame {
        let objects = self
            .bodies
            .iter()
            .filter(|b| !b.is_static)
            .map(|b| {
                let base = template[&b.id];
                SceneObject {
                    description: base.description.clone(),
                    id: b.id,
                    kind: base.kind,
                    color: base.color,
                    velocity: b.vel,
                    angle: b.angle,
                    is_static: false,
                    shape: b.shape(),
                }
            })
            .collect();
        Frame { time, objects }
    }
}

fn two_mut<T>(v: &mut [T], i: usize, j: usize) -> (&mut T, &mut T) {
    debug_assert!(i < j);
    let (lo, hi) = v.split_at_mut(j);
    (&mut lo[i], &mut hi[0])
}

/// Tracks open contacts with hysteresis and emits collision events.
#[derive(Default)]
struct ContactTracker {
    open: BTreeMap<(i64, i64), ()>,
}

impl ContactTracker {
    fn update(
        &mut self,
        world: &World,
        manifolds: &[Manifold],
        time: f64,
        events: &mut Vec<TraceEvent>,
    ) {
        let mut best: BTreeMap<(i64, i64), (f64, Vec<Vec2>)> = BTreeMap::new();
        for m in manifolds {
            let key = pair_key(world.bodies[m.a].id, world.bodies[m.b].id);
            let entry = best.entry(key).or_insert((f64::INFINITY, Vec::new()));
            for &(p, sep) in &m.points {
                entry.0 = entry.0.min(sep);
                if sep <= RELEASE_TOLERANCE {
                    entry.1.push(p);
                }
            }
        }
        let mut ended = Vec::new();
        for key in self.open.keys() {
            let sep = best.get(key).map_or(f64::INFINITY, |b| b.0);
            if sep > RELEASE_TOLERANCE {
                ended.push(*key);
            }
        }
        for key in ended {
            self.open.remove(&key);
            events.push(collision_event(COLLISION_END, time, key, &[]));
        }
        for (key, (sep, points)) in &best {
            if *sep <= CONTACT_TOLERANCE && !self.open.contains_key(key) {
                self.open.insert(*key, ());
                events.push(collision_event(COLLISION_START, time, *key, points));
            }
        }
    }

    fn is_open(&self, a: i64, b: i64) -> bool {
        self.open.contains_key(&pair_key(a, b))
    }
}

fn collision_event(uid: &str, time: f64, (a, b): (i64, i64), points: &[Vec2]) -> TraceEvent {
    let pts: Vec<Value> = points.iter().map(|p| json!([p.x, p.y])).collect();
    TraceEvent {
        time,
        uid: uid.to_string(),
        parameters: [
            ("a_id".to_string(), json!(a)),
            ("b_id".to_string(), json!(b)),
            ("contact_points".to_string(), Value::Array(pts)),
        ]
        .into(),
    }
}

/// The red ball the action adds, with the next free id.
pub fn action_ball(scene: &Scene, action: &Action) -> SceneObject {
    let id = scene.next_id();
    SceneObject {
        description: SceneObject::describe(Color::Red, ShapeKind::Circle, id),
        id,
        kind: ShapeKind::Circle,
        color: Color::Red,
        velocity: Vec2::ZERO,
        angle: 0.0,
        is_static: false,
        shape: crate::trace::Shape::Circle {
            center: action.position,
            radius: action.radius,
        },
    }
}

/// Checks that the red ball lies inside the scene and clear of every object.
pub fn check_placement(scene: &Scene, action: &Action) -> Result<(), SimError> {
    if !action.in_bounds() {
        return Err(SimError::InvalidAction(format!(
            "({}, {}, {}) must satisfy x, y in [0, 256] and r in [4, 32]",
            action.position.x, action.position.y, action.radius
        )));
    }
    let ball = Body::from_object(&action_ball(scene, action));
    let walls = Body::boundaries();
    for other in walls.iter().chain(
        scene
            .objects
            .iter()
            .map(Body::from_object)
            .collect::<Vec<_>>()
            .iter(),
    ) {
        if !ball.may_touch(other, 0.0) {
            continue;
        }
        for sa in &ball.world {
            for sb in &other.world {
                if let Some(m) = collide::collide(sa, sb, 0.0) {
                    if m.points.iter().any(|&(_, sep)| sep < -1e-6) {
                        return Err(SimError::InvalidPlacement(other.id));
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn simulate(scene: &Scene, action: &Action, config: &SimConfig) -> Result<Trace, SimError> {
    simulate_observed(scene, action, config, None)
}

/// Runs a rollout, optionally reporting the world state before every substep.
pub fn simulate_observed(
    scene: &Scene,
    action: &Action,
    config: &SimConfig,
    mut observer: Option<&mut dyn FnMut(&Snapshot)>,
) -> Result<Trace, SimError> {
    config.validate()?;
    check_placement(scene, action)?;
    let mut objects = scene.objects.clone();
    let red = action_ball(scene, action);
    objects.push(red);
    for o in &objects {
        if o.id < 0 {
            return Err(SimError::InvalidScene(format!(
                "object id {} is reserved",
                o.id
            )));
        }
    }
    let full_scene = Scene { objects };
    let by_id: BTreeMap<i64, &SceneObject> = full_scene.objects.iter().map(|o| (o.id, o)).collect();
    if by_id.len() != full_scene.objects.len() {
        return Err(SimError::InvalidScene("duplicate object ids".into()));
    }

    let mut world = World::new(&full_scene.objects, config);
    let total = config.total_substeps();
    let n_frames = config.timesteps;
    let mut frames = Vec::with_capacity(n_frames);
    let mut events = Vec::new();
    let mut tracker = ContactTracker::default();
    let margin = RELEASE_TOLERANCE;

    for k in 0..=total {
        let time = if k == total {
            1.0
        } else {
            k as f64 / total as f64
        };
        if let Some(obs) = observer.as_mut() {
            obs(&world.snapshot(time));
        }
        let mut manifolds = world.collide(margin);
        tracker.update(&world, &manifolds, time, &mut events);
        if k % config.substeps == 0 {
            let fi = k / config.substeps;
            let ft = if fi == n_frames - 1 {
                1.0
            } else {
                fi as f64 / (n_frames - 1) as f64
            };
            frames.push(world.frame(ft, &by_id));
        }
        if k == total {
            break;
        }
        world.integrate_velocities();
        world.solve_velocities(&mut manifolds);
        world.integrate_positions();
        world.correct_positions(&manifolds);
        world.check_finite(time)?;
    }

    let green = full_scene.first_of_color(Color::Green).map(|o| o.id);
    let blue = full_scene.first_of_color(Color::Blue).map(|o| o.id);
    let success = match (green, blue) {
        (Some(g), Some(b)) => tracker.is_open(g, b),
        _ => false,
    };
    events.push(TraceEvent {
        time: 1.0,
        uid: TASK_COMPLETE.to_string(),
        parameters: [("success".to_string(), json!(success))].into(),
    });

    Ok(Trace {
        action: *action,
        scene: full_scene,
        frames,
        events,
    })
}

/// Whether a green-blue contact is still open when the rollout ends.
pub fn task_success(trace: &Trace) -> bool {
    let (Some(g), Some(b)) = (
        trace.id_of_color(Color::Green),
        trace.id_of_color(Color::Blue),
    ) else {
        return false;
    };
    let key = pair_key(g, b);
    let mut open = 0i64;
    for e in &trace.events {
        if let Some((x, y)) = e.pair() {
            if pair_key(x, y) != key {
                continue;
            }
            match e.uid.as_str() {
                COLLISION_START => open += 1,
                COLLISION_END => open = (open - 1).max(0),
                _ => {}
            }
        }
    }
    open > 0
}

/// Bin-center actions over `x, y` in `[0, 256]` and `r` in `[4, 32]`,
/// ordered with `x` slowest and `r` fastest.
pub fn quantize_actions(x_bins: usize, y_bins: usize, r_bins: usize) -> Vec<Action> {
    let center =
        |i: usize, bins: usize, lo: f64, hi: f64| lo + (i as f64 + 0.5) * (hi - lo) / bins as f64;
    let mut out = Vec::with_capacity(x_bins * y_bins * r_bins);
    for ix in 0..x_bins {
        for iy in 0..y_bins {
            for ir in 0..r_bins {
                out.push(Action::new(
                    center(ix, x_bins, 0.0, SCENE_EXTENT),
                    center(iy, y_bins, 0.0, SCENE_EXTENT),
                    center(ir, r_bins, Action::MIN_RADIUS, Action::MAX_RADIUS),
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests;
