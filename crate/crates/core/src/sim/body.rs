use crate::geom::{self, Vec2};
use crate::trace::{
    SceneObject, Shape, FLOOR_ID, LEFT_WALL_ID, RIGHT_WALL_ID, SCENE_EXTENT, TOP_WALL_ID,
};

/// Mass, center of mass and rotational inertia at unit density.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassProperties {
    pub mass: f64,
    pub center: Vec2,
    /// About the center of mass.
    pub inertia: f64,
}

fn polygon_mass(poly: &[Vec2]) -> MassProperties {
    let n = poly.len();
    let origin = poly[0];
    let mut area = 0.0;
    let mut center = Vec2::ZERO;
    let mut inertia = 0.0;
    for i in 1..n.saturating_sub(1) {
        let e1 = poly[i] - origin;
        let e2 = poly[i + 1] - origin;
        let d = e1.cross(e2);
        let tri = 0.5 * d;
        area += tri;
        center += (e1 + e2) * (tri / 3.0);
        let intx2 = e1.x * e1.x + e2.x * e1.x + e2.x * e2.x;
        let inty2 = e1.y * e1.y + e2.y * e1.y + e2.y * e2.y;
        inertia += (0.25 / 3.0) * d * (intx2 + inty2);
    }
    if area.abs() < 1e-12 {
        return MassProperties {
            mass: 0.0,
            center: geom::polygon_centroid(poly),
            inertia: 0.0,
        };
    }
    let c = center * (1.0 / area);
    MassProperties {
        mass: area.abs(),
        center: origin + c,
        inertia: (inertia - area * c.length_sq()).abs(),
    }
}

/// Mass properties of an object's shape at unit density.
pub fn mass_properties(shape: &Shape) -> MassProperties {
    match shape {
        Shape::Circle { center, radius } => {
            let mass = std::f64::consts::PI * radius * radius;
            MassProperties {
                mass,
                center: *center,
                inertia: 0.5 * mass * radius * radius,
            }
        }
        Shape::Polygons(polys) => {
            let parts: Vec<MassProperties> = polys.iter().map(|p| polygon_mass(p)).collect();
            let mass: f64 = parts.iter().map(|p| p.mass).sum();
            if mass <= 0.0 {
                return MassProperties {
                    mass: 0.0,
                    center: geom::compound_centroid(polys),
                    inertia: 0.0,
                };
            }
            let center = parts
                .iter()
                .fold(Vec2::ZERO, |acc, p| acc + p.center * p.mass)
                * (1.0 / mass);
            let inertia = parts
                .iter()
                .map(|p| p.inertia + p.mass * (p.center - center).length_sq())
                .sum();
            MassProperties {
                mass,
                center,
                inertia,
            }
        }
    }
}

#[derive(Clone, Debug)]
pub(super) enum LocalShape {
    Circle {
        radius: f64,
    },
    Poly {
        verts: Vec<Vec2>,
        normals: Vec<Vec2>,
    },
}

#[derive(Clone, Debug)]
pub(super) enum WorldShape {
    Circle {
        center: Vec2,
        radius: f64,
    },
    Poly {
        verts: Vec<Vec2>,
        normals: Vec<Vec2>,
    },
    /// Points `p` with `normal·p >= offset` lie on the open side.
    Plane {
        normal: Vec2,
        offset: f64,
    },
}

fn outward_normals(verts: &[Vec2]) -> Vec<Vec2> {
    let n = verts.len();
    (0..n)
        .map(|i| {
            let e = verts[(i + 1) % n] - verts[i];
            Vec2::new(e.y, -e.x).normalized()
        })
        .collect()
}

#[derive(Clone, Debug)]
pub(super) struct Body {
    pub id: i64,
    pub is_static: bool,
    pub pos: Vec2,
    pub angle: f64,
    pub vel: Vec2,
    pub omega: f64,
    pub inv_mass: f64,
    pub inv_inertia: f64,
    /// Radius of a disc around `pos` containing the body; infinite for planes.
    pub bound: f64,
    local: Vec<LocalShape>,
    pub world: Vec<WorldShape>,
}

impl Body {
    pub fn boundaries() -> Vec<Body> {
        let plane = |id, normal: Vec2, offset| Body {
            id,
            is_static: true,
            pos: Vec2::ZERO,
            angle: 0.0,
            vel: Vec2::ZERO,
            omega: 0.0,
            inv_mass: 0.0,
            inv_inertia: 0.0,
            bound: f64::INFINITY,
            local: Vec::new(),
            world: vec![WorldShape::Plane { normal, offset }],
        };
        vec![
            plane(FLOOR_ID, Vec2::new(0.0, 1.0), 0.0),
            plane(LEFT_WALL_ID, Vec2::new(1.0, 0.0), 0.0),
            plane(RIGHT_WALL_ID, Vec2::new(-1.0, 0.0), -SCENE_EXTENT),
            plane(TOP_WALL_ID, Vec2::new(0.0, -1.0), -SCENE_EXTENT),
        ]
    }

    pub fn from_object(o: &SceneObject) -> Body {
        let props = mass_properties(&o.shape);
        let (local, bound) = match &o.shape {
            Shape::Circle { radius, .. } => (vec![LocalShape::Circle { radius: *radius }], *radius),
            Shape::Polygons(polys) => {
                let mut bound: f64 = 0.0;
                let local = polys
                    .iter()
                    .map(|p| {
                        let verts: Vec<Vec2> = geom::ccw(p.clone())
                            .into_iter()
                            .map(|v| (v - props.center).rotate(-o.angle))
                            .collect();
                        for v in &verts {
                            bound = bound.max(v.length());
                        }
                        let normals = outward_normals(&verts);
                        LocalShape::Poly { verts, normals }
                    })
                    .collect();
                (local, bound)
            }
        };
        let dynamic = !o.is_static && props.mass > 0.0;
        let mut body = Body {
            id: o.id,
            is_static: !dynamic,
            pos: props.center,
            angle: o.angle,
            vel: if dynamic { o.velocity } else { Vec2::ZERO },
            omega: 0.0,
            inv_mass: if dynamic { 1.0 / props.mass } else { 0.0 },
            inv_inertia: if dynamic && props.inertia > 0.0 {
                1.0 / props.inertia
            } else {
                0.0
            },
            bound,
            local,
            world: Vec::new(),
        };
        body.refresh();
        body
    }

    pub fn is_boundary(&self) -> bool {
        self.local.is_empty()
    }

    /// Recomputes world-space geometry from the pose.
    pub fn refresh(&mut self) {
        if self.is_boundary() {
            return;
        }
        let (pos, angle) = (self.pos, self.angle);
        self.world = self
            .local
            .iter()
            .map(|s| match s {
                LocalShape::Circle { radius } => WorldShape::Circle {
                    center: pos,
                    radius: *radius,
                },
                LocalShape::Poly { verts, normals } => WorldShape::Poly {
                    verts: verts.iter().map(|v| pos + v.rotate(angle)).collect(),
                    normals: normals.iter().map(|n| n.rotate(angle)).collect(),
                },
            })
            .collect();
    }

    /// Conservative broad-phase test.
    pub fn may_touch(&self, other: &Body, margin: f64) -> bool {
        match (self.is_boundary(), other.is_boundary()) {
            (true, true) => false,
            (true, false) => plane_reach(&self.world[0], other, margin),
            (false, true) => plane_reach(&other.world[0], self, margin),
            (false, false) => self.pos.distance(other.pos) <= self.bound + other.bound + margin,
        }
    }

    pub fn shape(&self) -> Shape {
        match self.world.as_slice() {
            [WorldShape::Circle { center, radius }] => Shape::Circle {
                center: *center,
                radius: *radius,
            },
            pieces => Shape::Polygons(
                pieces
                    .iter()
                    .filter_map(|p| match p {
                        WorldShape::Poly { verts, .. } => Some(verts.clone()),
                        _ => None,
                    })
                    .collect(),
            ),
        }
    }
}

fn plane_reach(plane: &WorldShape, body: &Body, margin: f64) -> bool {
    match plane {
        WorldShape::Plane { normal, offset } => {
            normal.dot(body.pos) - offset - body.bound <= margin
        }
        _ => true,
    }
}
