use patternlab::annotate::{annotate, guided_library, Origin, PatternLibrary};
use patternlab::detector::{grammar_mutate, parse_detector};
use patternlab::evolution::{length_penalty, planted_family, time_penalty, FitnessContext};
use patternlab::geom::Vec2;
use patternlab::metrics::{column_distance, correlation, pattern_histogram, symmetric_cross_entropy, trace_distance, Histogram};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracle;
use crate::Outcome;

pub const NU_TOL: f64 = 1e-9;
pub const DP_TOL: f64 = 1e-9;
pub const DX_TOL: f64 = 1e-6;
pub const PEARSON_TOL: f64 = 1e-9;
const BINS: usize = 10;
const MOVING: &str = "DETECT moving PARAMS {object_id: int} WHERE exists_object(o, dynamic, speed(o) > 5) EMIT {object_id: o}";

pub fn penalties() -> Outcome {
    let mut bad = Vec::new();
    if length_penalty(1) != 0.0 {
        bad.push(format!("lambda(1) = {}", length_penalty(1)));
    }
    let l1000 = length_penalty(1000);
    if (l1000 - 1.3816).abs() >= 1e-3 {
        bad.push(format!("lambda(1000) = {l1000}"));
    }
    for mu in [1.0, 10.0, 37.0, 1234.0, 4096.0] {
        for (k, want) in [(1.0, 0.0), (1.5, 0.5), (2.0, 1.0), (2.5, 1.0), (3.0, 1.0)] {
            let got = time_penalty(k * mu, mu);
            if got != want {
                bad.push(format!("psi({k} mu) = {got} at mu {mu}"));
            }
        }
    }
    Outcome::new(bad.is_empty(), if bad.is_empty() { format!("lambda(1000) = {l1000:.5}") } else { bad.join("; ") })
}

/// Library detectors without dependencies.
fn pool() -> Vec<(String, String, String, String)> {
    guided_library()
        .iter()
        .filter(|d| d.depends_on().is_empty())
        .map(|d| (d.uid.clone(), d.label.clone(), d.description.clone(), d.program.source.clone()))
        .collect()
}

pub fn decomposition() -> Outcome {
    let pool = pool();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut checked, mut worst, mut tries) = (0, 0.0f64, 0);
    let mut failures = Vec::new();
    while checked < 50 && tries < 5000 {
        tries += 1;
        let traces = planted_family(rng.gen_range(4..9), rng.gen());
        let mut lib = PatternLibrary::new();
        let k = rng.gen_range(0..=4);
        for (uid, label, desc, src) in pool.choose_multiple(&mut rng, k) {
            lib.add(uid, label, desc, Origin::Guided, src).unwrap();
        }
        let parent = if rng.gen_bool(0.5) { MOVING.to_string() } else { pool.choose(&mut rng).unwrap().3.clone() };
        let Ok(parent) = parse_detector(&parent) else { continue };
        let Ok(cand) = parse_detector(&grammar_mutate(&[parent], rng.gen())) else { continue };
        let Ok(fc) = FitnessContext::new(&traces, &lib, BINS) else { continue };
        let report = fc.evaluate(&cand);
        if report.degenerate {
            continue;
        }

        let mut full = lib.clone();
        if full.add("candidate_under_test", "candidate", "", Origin::Automatic, &cand.source).is_err() {
            continue;
        }
        let mats: Vec<_> = match traces.iter().map(|t| annotate(t, &full)).collect::<Result<Vec<_>, _>>() {
            Ok(m) => m,
            Err(_) => continue,
        };
        let cand_col = |i: usize| mats[i].column("candidate_under_test").unwrap().to_vec();
        let cand_j = |i: usize| mats[i].uids.iter().position(|u| u == "candidate_under_test").unwrap();

        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for l in 0..traces.len() {
            for m in l + 1..traces.len() {
                xs.push(oracle::trace_distance(&traces[l], &traces[m], 100));
                let hl = oracle::histogram(&cand_col(l), traces[l].frames.len(), BINS);
                let hm = oracle::histogram(&cand_col(m), traces[m].frames.len(), BINS);
                ys.push(oracle::sym_ce(&hl, &hm));
            }
        }
        let spread = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
        // a constant side has no defined correlation; those fixtures are skipped
        if spread(&xs) < 1e-9 || spread(&ys) < 1e-9 {
            continue;
        }
        let rho = oracle::pearson(&xs, &ys);

        let mut novel = Vec::new();
        for (i, t) in traces.iter().enumerate() {
            let n = t.frames.len();
            let h = oracle::histogram(&cand_col(i), n, BINS);
            let lib_cols: Vec<Vec<f64>> = lib.uids().iter().map(|u| oracle::histogram(mats[i].column(u).unwrap(), n, BINS)).collect();
            novel.push(if lib_cols.is_empty() {
                oracle::sym_ce(&h, &vec![1.0 / BINS as f64; BINS])
            } else {
                lib_cols.iter().map(|q| oracle::sym_ce(&h, q)).sum::<f64>() / lib_cols.len() as f64
            });
        }
        let raw = novel.iter().sum::<f64>() / novel.len() as f64;
        let eta = raw / (raw + (BINS as f64).ln());
        let lambda = (cand.node_count.min(1000) as f64).ln() / 5.0;

        let lib_steps: Vec<f64> = mats
            .iter()
            .flat_map(|m| m.uids.iter().zip(&m.steps).filter(|(u, _)| *u != "candidate_under_test").map(|(_, s)| *s as f64))
            .collect();
        let mu = if lib_steps.is_empty() { 0.0 } else { lib_steps.iter().sum::<f64>() / lib_steps.len() as f64 };
        let cost = (0..traces.len()).map(|i| mats[i].steps[cand_j(i)] as f64).sum::<f64>() / traces.len() as f64;
        let psi = if mu <= 0.0 { 0.0 } else { ((cost - mu) / mu).clamp(0.0, 1.0) };

        let nu = rho + eta - lambda - psi;
        let err = (nu - report.nu).abs();
        worst = worst.max(err);
        if err > NU_TOL {
            failures.push(format!(
                "fixture {checked}: nu {} vs oracle {nu} (rho {} / {rho}, eta {} / {eta}, lambda {} / {lambda}, psi {} / {psi})",
                report.nu, report.rho, report.eta, report.lambda, report.psi
            ));
        }
        checked += 1;
    }
    let pass = checked == 50 && failures.is_empty();
    let mut detail = format!("{checked} fixtures, max |nu - oracle| = {worst:.2e}");
    if let Some(f) = failures.first() {
        detail = format!("{detail}; {} mismatches, first: {f}", failures.len());
    }
    Outcome::new(pass, detail)
}

pub fn distances() -> Outcome {
    let mut bad = Vec::new();
    let ln = f64::ln;
    let h = |v: [f64; 4]| Histogram { bins: v.to_vec() };
    // closed forms worked out by hand
    let cases = [
        (h([0.25; 4]), h([0.25; 4]), ln(4.0)),
        (h([0.5, 0.25, 0.125, 0.125]), h([0.25; 4]), 2.125 * ln(2.0)),
        (
            h([0.4, 0.3, 0.2, 0.1]),
            h([0.1, 0.2, 0.3, 0.4]),
            -(0.4 * ln(0.1) + 0.3 * ln(0.2) + 0.2 * ln(0.3) + 0.1 * ln(0.4)),
        ),
        (h([0.7, 0.1, 0.1, 0.1]), h([0.7, 0.1, 0.1, 0.1]), -(0.7 * ln(0.7) + 0.3 * ln(0.1))),
    ];
    for (i, (p, q, want)) in cases.iter().enumerate() {
        let got = symmetric_cross_entropy(p, q);
        if (got - want).abs() > DP_TOL {
            bad.push(format!("d_p case {i}: {got} vs {want}"));
        }
    }
    // a column at the first and last of 9 frames fills bins 0 and 3
    let e = 1e-6;
    let z = 1.0 + 4.0 * e;
    let want = [(0.5 + e) / z, e / z, e / z, (0.5 + e) / z];
    let got = pattern_histogram(&[0, 8], 9, 4);
    if got.bins.iter().zip(want).any(|(g, w)| (g - w).abs() > 1e-15) {
        bad.push(format!("histogram {:?}", got.bins));
    }
    let uniform_case = column_distance(&[], 9, &[], 20, 4);
    if (uniform_case - ln(4.0)).abs() > DP_TOL {
        bad.push(format!("empty columns: {uniform_case}"));
    }

    let base = planted_family(2, 11);
    for (k, off) in [Vec2::new(3.0, 4.0), Vec2::new(-12.0, 0.0), Vec2::new(0.5, -0.25), Vec2::new(20.0, 21.0)].into_iter().enumerate() {
        let t1 = &base[k % 2];
        let mut t2 = t1.clone();
        for o in t2.scene.objects.iter_mut().filter(|o| !o.is_static) {
            o.translate(off);
        }
        for f in &mut t2.frames {
            for o in f.objects.iter_mut().filter(|o| !o.is_static) {
                o.translate(off);
            }
        }
        let want = off.length() / 256.0;
        let got = trace_distance(t1, &t2, 100).unwrap();
        if (got - want).abs() > DX_TOL {
            bad.push(format!("d_x offset {off:?}: {got} vs {want}"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(3..60);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| rng.gen_range(-1.0..1.0) * 3.0 + x * rng.gen_range(-1.0..1.0)).collect();
        let err = (correlation(&xs, &ys).unwrap() - oracle::pearson_sums(&xs, &ys)).abs();
        worst = worst.max(err);
    }
    if worst > PEARSON_TOL {
        bad.push(format!("pearson max error {worst:e}"));
    }
    Outcome::new(bad.is_empty(), if bad.is_empty() { format!("4 closed forms, 4 offsets, 100 vectors (pearson max err {worst:.1e})") } else { bad.join("; ") })
}
