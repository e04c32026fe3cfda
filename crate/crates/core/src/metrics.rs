//! Distances between traces and between annotations, and correlation.

use std::collections::BTreeSet;

use crate::annotate::AnnotationMatrix;
use crate::trace::{Trace, SCENE_EXTENT};

pub const SMOOTHING: f64 = 1e-6;
pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_SAMPLES: usize = 100;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("the traces share no dynamic objects")]
    NoSharedObjects,
    #[error("need at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 values, got {0}")]
    TooShort(usize),
    #[error("need at least 1 sample")]
    NoSamples,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub bins: Vec<f64>,
}

impl Histogram {
    pub fn uniform(b: usize) -> Self {
        Histogram {
            bins: vec![1.0 / b as f64; b],
        }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

/// Normalized translational distance over dynamic objects present in both
/// traces, sampled at `samples` uniform normalized times.
pub fn trace_distance(t1: &Trace, t2: &Trace, samples: usize) -> Result<f64, MetricError> {
    if samples == 0 {
        return Err(MetricError::NoSamples);
    }
    let dynamic = |t: &Trace| -> BTreeSet<i64> { t.scene.objects.iter().filter(|o| !o.is_static).map(|o| o.id).collect() };
    let shared: Vec<i64> = dynamic(t1).intersection(&dynamic(t2)).copied().collect();
    if shared.is_empty() {
        return Err(MetricError::NoSharedObjects);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for k in 0..samples {
        let t = if samples == 1 { 0.0 } else { k as f64 / (samples - 1) as f64 };
        for &id in &shared {
            if let (Some(a), Some(b)) = (t1.position_at_time(id, t), t2.position_at_time(id, t)) {
                total += a.distance(b) / SCENE_EXTENT;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(MetricError::NoSharedObjects);
    }
    Ok(total / count as f64)
}

/// Activations binned over normalized time, smoothed and normalized; an
/// empty column gives the uniform histogram.
pub fn pattern_histogram(frames: &[usize], n: usize, b: usize) -> Histogram {
    let b = b.max(1);
    if frames.is_empty() || n == 0 {
        return Histogram::uniform(b);
    }
    let mut counts = vec![0.0; b];
    for &i in frames {
        let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
        let k = ((t * b as f64).floor() as usize).min(b - 1);
        counts[k] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    let smoothed: Vec<f64> = counts.iter().map(|c| c / total + SMOOTHING).collect();
    let z: f64 = smoothed.iter().sum();
    Histogram {
        bins: smoothed.into_iter().map(|v| v / z).collect(),
    }
}

/// H(p, q) = -sum p_i ln q_i.
pub fn cross_entropy(p: &Histogram, q: &Histogram) -> f64 {
    p.bins.iter().zip(&q.bins).map(|(a, b)| -a * b.ln()).sum()
}

pub fn symmetric_cross_entropy(p: &Histogram, q: &Histogram) -> f64 {
    0.5 * (cross_entropy(p, q) + cross_entropy(q, p))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Direction {
    #[default]
    Symmetric,
    /// H(h(A1), h(A2)) only.
    Forward,
}

fn compare(p: &Histogram, q: &Histogram, dir: Direction) -> f64 {
    match dir {
        Direction::Symmetric => symmetric_cross_entropy(p, q),
        Direction::Forward => cross_entropy(p, q),
    }
}

/// Distance between two activation columns of possibly different lengths.
pub fn column_distance(a: &[usize], n_a: usize, b: &[usize], n_b: usize, bins: usize) -> f64 {
    symmetric_cross_entropy(&pattern_histogram(a, n_a, bins), &pattern_histogram(b, n_b, bins))
}

pub fn annotation_distance(a1: &AnnotationMatrix, a2: &AnnotationMatrix, b: usize) -> Result<f64, MetricError> {
    annotation_distance_with(a1, a2, b, Direction::Symmetric)
}

/// Mean per-pattern cross entropy over the union of both matrices' patterns;
/// a pattern missing from one side counts as a column with no activations.
pub fn annotation_distance_with(
    a1: &AnnotationMatrix,
    a2: &AnnotationMatrix,
    b: usize,
    dir: Direction,
) -> Result<f64, MetricError> {
    if b < 2 {
        return Err(MetricError::TooFewBins(b));
    }
    let uids: BTreeSet<&str> = a1.uids.iter().chain(&a2.uids).map(String::as_str).collect();
    if uids.is_empty() {
        return Ok(0.0);
    }
    let empty: &[usize] = &[];
    let mut total = 0.0;
    for u in &uids {
        let h1 = pattern_histogram(a1.column(u).unwrap_or(empty), a1.n_frames, b);
        let h2 = pattern_histogram(a2.column(u).unwrap_or(empty), a2.n_frames, b);
        total += compare(&h1, &h2, dir);
    }
    Ok(total / uids.len() as f64)
}

/// Pearson correlation; 0 when either side has no variance.
pub fn correlation(xs: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    if xs.len() != ys.len() {
        return Err(MetricError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(MetricError::TooShort(xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::AnnotationMatrix;
    use crate::geom::Vec2;
    use crate::trace::fixtures::minimal_trace;
    use proptest::prelude::*;

    fn matrix(n: usize, cols: &[(&str, Vec<usize>)]) -> AnnotationMatrix {
        let mut m = AnnotationMatrix::empty(n);
        for (u, c) in cols {
            m.uids.push(u.to_string());
            m.labels.push(u.to_string());
            m.columns.push(c.clone());
            m.steps.push(0);
        }
        m
    }

    fn shifted(t: &Trace, d: Vec2) -> Trace {
        let mut t = t.clone();
        for f in &mut t.frames {
            for o in &mut f.objects {
                if !o.is_static {
                    o.translate(d);
                }
            }
        }
        t
    }

    #[test]
    fn identical_traces_are_zero_apart() {
        let t = minimal_trace();
        assert_eq!(trace_distance(&t, &t, 50).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_scales_by_extent() {
        let t = minimal_trace();
        let s = shifted(&t, Vec2::new(25.6, 0.0));
        assert!((trace_distance(&t, &s, 100).unwrap() - 0.1).abs() < 1e-9);
        let s = shifted(&t, Vec2::new(3.0, 4.0));
        assert!((trace_distance(&s, &t, 7).unwrap() - 5.0 / 256.0).abs() < 1e-9);
    }

    #[test]
    fn different_lengths_resample() {
        let t = minimal_trace();
        let mut short = t.clone();
        short.frames.truncate(2);
        for (i, f) in short.frames.iter_mut().enumerate() {
            f.time = i as f64;
        }
        let d = trace_distance(&t, &short, 20).unwrap();
        assert!(d.is_finite() && d >= 0.0);
    }

    #[test]
    fn no_shared_objects_is_an_error() {
        let t = minimal_trace();
        let mut u = t.clone();
        u.scene.objects.retain(|o| o.is_static);
        assert_eq!(trace_distance(&t, &u, 10), Err(MetricError::NoSharedObjects));
    }

    #[test]
    fn histogram_cases() {
        let all: Vec<usize> = (0..100).collect();
        let h = pattern_histogram(&all, 100, 4);
        for v in &h.bins {
            assert!((v - 0.25).abs() < 1e-9);
        }
        let h = pattern_histogram(&[0], 100, 4);
        assert!((h.bins[0] - 1.0).abs() < 1e-5);
        assert!(h.bins[1] > 0.0 && h.bins[1] < 1e-5);
        assert_eq!(pattern_histogram(&[], 100, 4), Histogram::uniform(4));
        assert!((pattern_histogram(&[3, 9], 10, 3).bins.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_self_distance_is_entropy() {
        let all: Vec<usize> = (0..100).collect();
        let m = matrix(100, &[("p", all)]);
        let d = annotation_distance(&m, &m, 4).unwrap();
        assert!((d - 4f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn point_masses_far_apart() {
        let a = matrix(100, &[("p", vec![0])]);
        let b = matrix(100, &[("p", vec![99])]);
        let d = annotation_distance(&a, &b, 4).unwrap();
        // closed form with the same smoothing
        let z = 1.0 + 4.0 * SMOOTHING;
        let (hi, lo) = ((1.0 + SMOOTHING) / z, SMOOTHING / z);
        let h = -(hi * lo.ln() + lo * hi.ln() + 2.0 * lo * lo.ln());
        assert!((d - h).abs() < 1e-9);
        assert!(d > 0.9 * (1.0 / SMOOTHING).ln());
        assert_eq!(annotation_distance(&a, &b, 1), Err(MetricError::TooFewBins(1)));
    }

    #[test]
    fn missing_columns_join_as_empty() {
        let a = matrix(10, &[("p", vec![0, 1]), ("q", vec![5])]);
        let b = matrix(10, &[("p", vec![0, 1])]);
        let d = annotation_distance(&a, &b, 2).unwrap();
        let p = symmetric_cross_entropy(&pattern_histogram(&[0, 1], 10, 2), &pattern_histogram(&[0, 1], 10, 2));
        let q = symmetric_cross_entropy(&pattern_histogram(&[5], 10, 2), &Histogram::uniform(2));
        assert!((d - (p + q) / 2.0).abs() < 1e-12);
        let f = annotation_distance_with(&a, &b, 2, Direction::Forward).unwrap();
        assert!(f.is_finite());
    }

    #[test]
    fn correlation_cases() {
        assert!((correlation(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((correlation(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(correlation(&[2.0, 2.0, 2.0], &[1.0, 5.0, 3.0]).unwrap(), 0.0);
        assert!(correlation(&[1.0], &[1.0, 2.0]).is_err());
    }

    fn simplex_point(a: usize, b: usize, c: usize) -> Histogram {
        let v = [a as f64, b as f64, c as f64, (100 - a - b - c) as f64];
        let smoothed: Vec<f64> = v.iter().map(|x| x / 100.0 + SMOOTHING).collect();
        let z: f64 = smoothed.iter().sum();
        Histogram {
            bins: smoothed.into_iter().map(|x| x / z).collect(),
        }
    }

    /// Stationary point of q -> H(p,q) + H(q,p) on the simplex:
    /// q_i = p_i / (lambda - ln p_i) with lambda chosen so the q_i sum to 1.
    fn analytic_minimizer(p: &[f64]) -> Vec<f64> {
        let max_ln = p.iter().map(|x| x.ln()).fold(f64::NEG_INFINITY, f64::max);
        let total = |l: f64| p.iter().map(|x| x / (l - x.ln())).sum::<f64>();
        let (mut lo, mut hi) = (max_ln + 1e-12, max_ln + 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        p.iter().map(|x| x / (lo - x.ln())).collect()
    }

    #[test]
    fn grid_minimum_matches_stationary_point() {
        for (a, b, c) in [(25, 25, 25), (10, 20, 30), (40, 30, 20)] {
            let h = simplex_point(a, b, c);
            let mut best = (f64::INFINITY, [0usize; 3]);
            for i in 1..=100 {
                for j in 1..=100 - i {
                    for k in 1..100 - i - j {
                        let d = symmetric_cross_entropy(&h, &simplex_point(i, j, k));
                        if d < best.0 {
                            best = (d, [i, j, k]);
                        }
                    }
                }
            }
            let q = analytic_minimizer(&h.bins);
            for (g, want) in best.1.iter().zip(&q) {
                assert!((*g as f64 / 100.0 - want).abs() <= 0.011, "{:?} vs {q:?}", best.1);
            }
            assert!(best.0 <= symmetric_cross_entropy(&h, &h) + 1e-12);
            if a == 25 && b == 25 && c == 25 {
                assert_eq!(best.1, [25, 25, 25]);
            }
        }
    }

    proptest! {
        #[test]
        fn correlation_is_affine_invariant(
            xs in proptest::collection::vec(-100.0f64..100.0, 3..30),
            a in 0.1f64..10.0,
            c in -50.0f64..50.0,
        ) {
            let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * x - i as f64).collect();
            let r = correlation(&xs, &ys).unwrap();
            let scaled: Vec<f64> = xs.iter().map(|x| a * x + c).collect();
            let r2 = correlation(&scaled, &ys).unwrap();
            prop_assert!((r - r2).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&r));
        }

        #[test]
        fn annotation_distance_is_symmetric(
            c1 in proptest::collection::btree_set(0usize..50, 0..20),
            c2 in proptest::collection::btree_set(0usize..80, 0..20),
            b in 2usize..12,
        ) {
            let a = matrix(50, &[("p", c1.into_iter().collect())]);
            let m = matrix(80, &[("p", c2.into_iter().collect()), ("q", vec![1])]);
            let d1 = annotation_distance(&a, &m, b).unwrap();
            let d2 = annotation_distance(&m, &a, b).unwrap();
            prop_assert!((d1 - d2).abs() < 1e-12);
            prop_assert!(d1 >= 0.0);
        }

        #[test]
        fn trace_distance_is_symmetric(dx in -40.0f64..40.0, dy in -40.0f64..40.0) {
            let t = minimal_trace();
            let s = shifted(&t, Vec2::new(dx, dy));
            let a = trace_distance(&t, &s, 30).unwrap();
            let b = trace_distance(&s, &t, 30).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((a - (dx * dx + dy * dy).sqrt() / 256.0).abs() < 1e-9);
        }
    }
}
