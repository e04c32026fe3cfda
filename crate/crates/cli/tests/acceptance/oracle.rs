//! Reference implementations written from the definitions, sharing no code
//! with the library beyond its data types.

use patternlab::geom::Vec2;
use patternlab::trace::{SceneObject, Shape, Trace};

pub const EXTENT: f64 = 256.0;

pub fn center(o: &SceneObject) -> Vec2 {
    match &o.shape {
        Shape::Circle { center, .. } => *center,
        Shape::Polygons(_) => o.position(),
    }
}

/// Position at normalized time `t`, linear between the two nearest frames.
pub fn position(trace: &Trace, id: i64, t: f64) -> Option<Vec2> {
    let obj = trace.scene.objects.iter().find(|o| o.id == id)?;
    if obj.is_static {
        return Some(center(obj));
    }
    let at = |f: usize| trace.frames[f].objects.iter().find(|o| o.id == id).map(center);
    let n = trace.frames.len();
    match n {
        0 => None,
        1 => at(0),
        _ => {
            let s = t.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = (s.floor() as usize).min(n - 1);
            let hi = (lo + 1).min(n - 1);
            let w = s - lo as f64;
            match (at(lo), at(hi)) {
                (Some(a), Some(b)) => Some(Vec2::new(a.x + (b.x - a.x) * w, a.y + (b.y - a.y) * w)),
                (a, b) => a.or(b),
            }
        }
    }
}

pub fn trace_distance(a: &Trace, b: &Trace, samples: usize) -> f64 {
    let ids: Vec<i64> = a
        .scene
        .objects
        .iter()
        .filter(|o| !o.is_static && b.scene.objects.iter().any(|p| p.id == o.id && !p.is_static))
        .map(|o| o.id)
        .collect();
    let (mut sum, mut k) = (0.0, 0);
    for s in 0..samples {
        let t = s as f64 / (samples - 1) as f64;
        for &id in &ids {
            if let (Some(p), Some(q)) = (position(a, id, t), position(b, id, t)) {
                sum += ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt() / EXTENT;
                k += 1;
            }
        }
    }
    sum / k as f64
}

pub fn histogram(frames: &[usize], n: usize, bins: usize) -> Vec<f64> {
    if frames.is_empty() {
        return vec![1.0 / bins as f64; bins];
    }
    let mut c = vec![0.0; bins];
    for &f in frames {
        let t = if n > 1 { f as f64 / (n - 1) as f64 } else { 0.0 };
        c[((t * bins as f64) as usize).min(bins - 1)] += 1.0;
    }
    let total = frames.len() as f64;
    let raw: Vec<f64> = c.iter().map(|v| v / total + 1e-6).collect();
    let z: f64 = raw.iter().sum();
    raw.iter().map(|v| v / z).collect()
}

pub fn sym_ce(p: &[f64], q: &[f64]) -> f64 {
    let h = |a: &[f64], b: &[f64]| -> f64 { -a.iter().zip(b).map(|(x, y)| x * y.ln()).sum::<f64>() };
    (h(p, q) + h(q, p)) / 2.0
}

/// Deviation-product form of the Pearson coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Raw-sums form: n*sxy - sx*sy over the product of the two spreads.
pub fn pearson_sums(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// 1 at zero excess, 0 at `cap`.
pub fn log_grade(excess: f64, cap: f64) -> f64 {
    let v = 1.0 - (1.0 + excess.max(0.0)).ln() / (1.0 + cap).ln();
    v.clamp(0.0, 1.0)
}
