//! Narrow-phase contact generation and the per-contact impulse solver.

use super::body::{Body, WorldShape};
use crate::geom::Vec2;

/// Contact normal pointing from the first shape to the second, with
/// contact points and their signed separations.
#[derive(Clone, Debug)]
pub(super) struct RawManifold {
    pub normal: Vec2,
    pub points: Vec<(Vec2, f64)>,
}

pub(super) fn collide(a: &WorldShape, b: &WorldShape, margin: f64) -> Option<RawManifold> {
    use WorldShape::*;
    match (a, b) {
        (Plane { .. }, Plane { .. }) => None,
        (Plane { normal, offset }, other) => plane_shape(*normal, *offset, other, margin),
        (other, Plane { normal, offset }) => plane_shape(*normal, *offset, other, margin).map(flip),
        (
            Circle {
                center: ca,
                radius: ra,
            },
            Circle {
                center: cb,
                radius: rb,
            },
        ) => circle_circle(*ca, *ra, *cb, *rb, margin),
        (Poly { verts, normals }, Circle { center, radius }) => {
            poly_circle(verts, normals, *center, *radius, margin)
        }
        (Circle { center, radius }, Poly { verts, normals }) => {
            poly_circle(verts, normals, *center, *radius, margin).map(flip)
        }
        (
            Poly {
                verts: va,
                normals: na,
            },
            Poly {
                verts: vb,
                normals: nb,
            },
        ) => poly_poly(va, na, vb, nb, margin),
    }
}

fn flip(mut m: RawManifold) -> RawManifold {
    m.normal = -m.normal;
    m
}

fn plane_shape(n: Vec2, offset: f64, shape: &WorldShape, margin: f64) -> Option<RawManifold> {
    match shape {
        WorldShape::Circle { center, radius } => {
            let sep = n.dot(*center) - offset - radius;
            (sep <= margin).then(|| RawManifold {
                normal: n,
                points: vec![(*center - n * *radius, sep)],
            })
        }
        WorldShape::Poly { verts, .. } => {
            let mut pts: Vec<(Vec2, f64)> = verts
                .iter()
                .map(|&v| (v, n.dot(v) - offset))
                .filter(|&(_, s)| s <= margin)
                .collect();
            if pts.is_empty() {
                return None;
            }
            pts.sort_by(|x, y| x.1.total_cmp(&y.1));
            pts.truncate(2);
            Some(RawManifold {
                normal: n,
                points: pts,
            })
        }
        WorldShape::Plane { .. } => None,
    }
}

fn circle_circle(ca: Vec2, ra: f64, cb: Vec2, rb: f64, margin: f64) -> Option<RawManifold> {
    let d = cb - ca;
    let dist = d.length();
    let sep = dist - ra - rb;
    if sep > margin {
        return None;
    }
    let n = if dist > 1e-12 {
        d * (1.0 / dist)
    } else {
        Vec2::new(0.0, 1.0)
    };
    Some(RawManifold {
        normal: n,
        points: vec![(ca + n * (ra + 0.5 * sep), sep)],
    })
}

fn poly_circle(
    verts: &[Vec2],
    normals: &[Vec2],
    c: Vec2,
    r: f64,
    margin: f64,
) -> Option<RawManifold> {
    let n = verts.len();
    let mut best = f64::NEG_INFINITY;
    let mut idx = 0;
    for i in 0..n {
        let s = normals[i].dot(c - verts[i]);
        if s > r + margin {
            return None;
        }
        if s > best {
            best = s;
            idx = i;
        }
    }
    let v1 = verts[idx];
    let v2 = verts[(idx + 1) % n];
    let (normal, sep) = if best < 1e-12 {
        (normals[idx], best - r)
    } else if (c - v1).dot(v2 - v1) <= 0.0 {
        let d = c - v1;
        (d.normalized(), d.length() - r)
    } else if (c - v2).dot(v1 - v2) <= 0.0 {
        let d = c - v2;
        (d.normalized(), d.length() - r)
    } else {
        (normals[idx], best - r)
    };
    if sep > margin {
        return None;
    }
    Some(RawManifold {
        normal,
        points: vec![(c - normal * (r + 0.5 * sep), sep)],
    })
}

fn max_separation(va: &[Vec2], na: &[Vec2], vb: &[Vec2]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..va.len() {
        let s = vb
            .iter()
            .map(|&v| na[i].dot(v - va[i]))
            .fold(f64::INFINITY, f64::min);
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

fn clip(seg: [Vec2; 2], dir: Vec2, offset: f64) -> Option<[Vec2; 2]> {
    let d0 = dir.dot(seg[0]) - offset;
    let d1 = dir.dot(seg[1]) - offset;
    let mut out = Vec::with_capacity(2);
    if d0 <= 0.0 {
        out.push(seg[0]);
    }
    if d1 <= 0.0 {
        out.push(seg[1]);
    }
    if d0 * d1 < 0.0 {
        out.push(seg[0] + (seg[1] - seg[0]) * (d0 / (d0 - d1)));
    }
    (out.len() >= 2).then(|| [out[0], out[1]])
}

fn poly_poly(
    va: &[Vec2],
    na: &[Vec2],
    vb: &[Vec2],
    nb: &[Vec2],
    margin: f64,
) -> Option<RawManifold> {
    let (ea, sa) = max_separation(va, na, vb);
    if sa > margin {
        return None;
    }
    let (eb, sb) = max_separation(vb, nb, va);
    if sb > margin {
        return None;
    }
    let flipped = sb > sa + 1e-3;
    let (rv, rn, re, iv, inn) = if flipped {
        (vb, nb, eb, va, na)
    } else {
        (va, na, ea, vb, nb)
    };
    let ref_n = rn[re];
    let inc = (0..iv.len())
        .min_by(|&i, &j| ref_n.dot(inn[i]).total_cmp(&ref_n.dot(inn[j])))
        .unwrap_or(0);
    let seg = [iv[inc], iv[(inc + 1) % iv.len()]];
    let v1 = rv[re];
    let v2 = rv[(re + 1) % rv.len()];
    let t = (v2 - v1).normalized();
    let seg = clip(seg, -t, -t.dot(v1))?;
    let seg = clip(seg, t, t.dot(v2))?;
    let points: Vec<(Vec2, f64)> = seg
        .iter()
        .map(|&p| (p, ref_n.dot(p - v1)))
        .filter(|&(_, s)| s <= margin)
        .collect();
    if points.is_empty() {
        return None;
    }
    Some(RawManifold {
        normal: if flipped { -ref_n } else { ref_n },
        points,
    })
}

#[derive(Clone, Debug, Default)]
struct PointCache {
    ra: Vec2,
    rb: Vec2,
    mass_n: f64,
    mass_t: f64,
    acc_n: f64,
    acc_t: f64,
    vn_pre: f64,
}

/// A contact between one shape of body `a` and one shape of body `b`.
#[derive(Clone, Debug)]
pub(super) struct Manifold {
    pub a: usize,
    pub b: usize,
    pub shape_a: usize,
    pub shape_b: usize,
    pub normal: Vec2,
    pub points: Vec<(Vec2, f64)>,
    cache: Vec<PointCache>,
}

fn velocity_at(body: &Body, r: Vec2) -> Vec2 {
    body.vel + r.perp() * body.omega
}

fn apply(a: &mut Body, b: &mut Body, ra: Vec2, rb: Vec2, p: Vec2) {
    if !a.is_static {
        a.vel -= p * a.inv_mass;
        a.omega -= a.inv_inertia * ra.cross(p);
    }
    if !b.is_static {
        b.vel += p * b.inv_mass;
        b.omega += b.inv_inertia * rb.cross(p);
    }
}

impl Manifold {
    pub fn new(a: usize, b: usize, shape_a: usize, shape_b: usize, raw: RawManifold) -> Self {
        Manifold {
            a,
            b,
            shape_a,
            shape_b,
            normal: raw.normal,
            points: raw.points,
            cache: Vec::new(),
        }
    }

    fn tangent(&self) -> Vec2 {
        Vec2::new(self.normal.y, -self.normal.x)
    }

    pub fn prepare(&mut self, a: &Body, b: &Body) {
        let n = self.normal;
        let t = self.tangent();
        let eff = |ra: Vec2, rb: Vec2, d: Vec2| {
            let (ca, cb) = (ra.cross(d), rb.cross(d));
            let k = a.inv_mass + b.inv_mass + a.inv_inertia * ca * ca + b.inv_inertia * cb * cb;
            if k > 0.0 {
                1.0 / k
            } else {
                0.0
            }
        };
        self.cache = self
            .points
            .iter()
            .map(|&(p, _)| {
                let ra = p - a.pos;
                let rb = p - b.pos;
                PointCache {
                    ra,
                    rb,
                    mass_n: eff(ra, rb, n),
                    mass_t: eff(ra, rb, t),
                    acc_n: 0.0,
                    acc_t: 0.0,
                    vn_pre: (velocity_at(b, rb) - velocity_at(a, ra)).dot(n),
                }
            })
            .collect();
    }

    /// One Gauss-Seidel pass. Points with positive separation act as
    /// speculative constraints that only forbid closing the gap this step.
    pub fn solve(&mut self, a: &mut Body, b: &mut Body, friction: f64, h: f64) {
        let n = self.normal;
        let t = self.tangent();
        for (c, &(_, sep)) in self.cache.iter_mut().zip(&self.points) {
            if sep > super::CONTACT_TOLERANCE {
                continue;
            }
            let dv = velocity_at(b, c.rb) - velocity_at(a, c.ra);
            let vt = dv.dot(t);
            let max_f = friction * c.acc_n;
            let new_t = (c.acc_t - c.mass_t * vt).clamp(-max_f, max_f);
            let dl = new_t - c.acc_t;
            c.acc_t = new_t;
            apply(a, b, c.ra, c.rb, t * dl);

            let dv = velocity_at(b, c.rb) - velocity_at(a, c.ra);
            let vn = dv.dot(n);
            let target = if sep > 0.0 { -sep / h } else { 0.0 };
            let new_n = (c.acc_n - c.mass_n * (vn - target)).max(0.0);
            let dl = new_n - c.acc_n;
            c.acc_n = new_n;
            apply(a, b, c.ra, c.rb, n * dl);
        }
    }

    /// Sets the outgoing normal speed of impacting points to `e` times the
    /// incoming speed.
    pub fn restitute(&mut self, a: &mut Body, b: &mut Body, e: f64, threshold: f64) {
        let n = self.normal;
        for (c, &(_, sep)) in self.cache.iter_mut().zip(&self.points) {
            if c.vn_pre > -threshold || c.acc_n <= 0.0 || sep > super::CONTACT_TOLERANCE {
                continue;
            }
            let vn = (velocity_at(b, c.rb) - velocity_at(a, c.ra)).dot(n);
            let new_n = (c.acc_n - c.mass_n * (vn + e * c.vn_pre)).max(0.0);
            let dl = new_n - c.acc_n;
            c.acc_n = new_n;
            apply(a, b, c.ra, c.rb, n * dl);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rect;

    fn poly(v: Vec<Vec2>) -> WorldShape {
        let n = v.len();
        let normals = (0..n)
            .map(|i| {
                let e = v[(i + 1) % n] - v[i];
                Vec2::new(e.y, -e.x).normalized()
            })
            .collect();
        WorldShape::Poly { verts: v, normals }
    }

    #[test]
    fn circle_on_box_face() {
        let b = poly(rect(Vec2::new(0.0, 0.0), Vec2::new(10.0, 10.0)));
        let c = WorldShape::Circle {
            center: Vec2::new(5.0, 12.0),
            radius: 1.5,
        };
        let m = collide(&b, &c, 1.0).unwrap();
        assert!((m.normal.y - 1.0).abs() < 1e-12);
        assert!((m.points[0].1 - 0.5).abs() < 1e-12);
        let m = collide(&c, &b, 1.0).unwrap();
        assert!((m.normal.y + 1.0).abs() < 1e-12);
    }

    #[test]
    fn circle_near_box_corner() {
        let b = poly(rect(Vec2::new(0.0, 0.0), Vec2::new(10.0, 10.0)));
        let c = WorldShape::Circle {
            center: Vec2::new(13.0, 14.0),
            radius: 4.0,
        };
        let m = collide(&b, &c, 2.0).unwrap();
        assert!((m.points[0].1 - 1.0).abs() < 1e-12);
        assert!((m.normal.x - 0.6).abs() < 1e-12);
    }

    #[test]
    fn stacked_boxes_have_two_points() {
        let a = poly(rect(Vec2::new(0.0, 0.0), Vec2::new(10.0, 2.0)));
        let b = poly(rect(Vec2::new(2.0, 1.9), Vec2::new(6.0, 4.0)));
        let m = collide(&a, &b, 0.5).unwrap();
        assert_eq!(m.points.len(), 2);
        assert!((m.normal.y - 1.0).abs() < 1e-9);
        for (_, s) in &m.points {
            assert!((s + 0.1).abs() < 1e-9);
        }
    }

    #[test]
    fn separated_boxes_do_not_collide() {
        let a = poly(rect(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0)));
        let b = poly(rect(Vec2::new(3.0, 0.0), Vec2::new(4.0, 1.0)));
        assert!(collide(&a, &b, 1.0).is_none());
    }

    #[test]
    fn plane_reports_signed_gap() {
        let floor = WorldShape::Plane {
            normal: Vec2::new(0.0, 1.0),
            offset: 0.0,
        };
        let c = WorldShape::Circle {
            center: Vec2::new(3.0, 4.5),
            radius: 5.0,
        };
        let m = collide(&floor, &c, 1.0).unwrap();
        assert!((m.points[0].1 + 0.5).abs() < 1e-12);
    }
}
