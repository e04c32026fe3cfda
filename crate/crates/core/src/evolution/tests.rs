use super::*;
use crate::annotate::PatternLibrary;
use proptest::prelude::*;

const HIT: &str = r#"DETECT hit PARAMS {object_id: int} WHERE exists_object(o, dynamic, event_active("CollisionStart", {b_id: o})) EMIT {object_id: o}"#;
const MOVING: &str = r#"DETECT moving PARAMS {object_id: int} WHERE exists_object(o, dynamic, speed(o) > 5) EMIT {object_id: o}"#;

fn prog(src: &str) -> DetectorProgram {
    parse_detector(src).unwrap()
}

/// Always proposes the same source.
struct Fixed(String);

impl Mutator for Fixed {
    fn propose(&mut self, _: &MutationContext, _: &[DetectorProgram], _: u64) -> Option<String> {
        Some(self.0.clone())
    }
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

#[test]
fn length_penalty_caps_at_1000() {
    assert_eq!(length_penalty(1), 0.0);
    assert!((length_penalty(1000) - 1000f64.ln() / 5.0).abs() < 1e-12);
    assert_eq!(length_penalty(5000), length_penalty(1000));
    assert!(length_penalty(9) > length_penalty(3));
}

#[test]
fn time_penalty_shape() {
    assert_eq!(time_penalty(123.0, 0.0), 0.0);
    assert_eq!(time_penalty(10.0, 10.0), 0.0);
    assert_eq!(time_penalty(5.0, 10.0), 0.0);
    assert!((time_penalty(15.0, 10.0) - 0.5).abs() < 1e-12);
    assert_eq!(time_penalty(30.0, 10.0), 1.0);
}

#[test]
fn planted_family_splits_on_collision() {
    let ts = planted_family(6, 1);
    for (k, t) in ts.iter().enumerate() {
        let hits = t.events.iter().filter(|e| e.uid == "CollisionStart").count();
        assert_eq!(hits > 0, k % 2 == 0, "trace {k}");
    }
}

#[test]
fn planted_detector_scores_high() {
    let ts = planted_family(10, 3);
    let r = evaluate_fitness(&ts, &prog(HIT), &PatternLibrary::new()).unwrap();
    assert!(!r.degenerate);
    assert!(r.rho >= 0.9, "rho {}", r.rho);
    assert!(r.nu >= 0.3, "nu {}", r.nu);
    assert_eq!(r.psi, 0.0);
}

#[test]
fn components_match_independent_recomputation() {
    let ts = planted_family(6, 5);
    let p = prog(HIT);
    let r = evaluate_fitness(&ts, &p, &PatternLibrary::new()).unwrap();
    assert!((r.nu - (r.rho + r.eta - r.lambda - r.psi)).abs() < 1e-12);
    assert_eq!(r.pairs.len(), 15);
    let xs: Vec<f64> = r.pairs.iter().map(|q| q.d_x).collect();
    let ys: Vec<f64> = r.pairs.iter().map(|q| q.d_p).collect();
    assert!((r.rho - pearson(&xs, &ys)).abs() < 1e-9);

    // novelty against an empty library compares to the uniform histogram
    let b = 10usize;
    let mut novel = Vec::new();
    for t in &ts {
        let n = t.frames.len();
        let mut counts = vec![0.0; b];
        for e in t.events.iter().filter(|e| e.uid == "CollisionStart") {
            let f = crate::trace::frame_index(e.time, n);
            counts[((f as f64 / (n - 1) as f64 * b as f64) as usize).min(b - 1)] += 1.0;
        }
        let total: f64 = counts.iter().sum();
        let h: Vec<f64> = if total == 0.0 {
            vec![1.0 / b as f64; b]
        } else {
            let z = 1.0 + b as f64 * 1e-6;
            counts.iter().map(|c| (c / total + 1e-6) / z).collect()
        };
        let u = 1.0 / b as f64;
        let ce_hu: f64 = h.iter().map(|p| -p * u.ln()).sum();
        let ce_uh: f64 = h.iter().map(|q| -u * q.ln()).sum();
        novel.push(0.5 * (ce_hu + ce_uh));
    }
    for (a, e) in r.d_novel.iter().zip(&novel) {
        assert!((a - e).abs() < 1e-9, "{a} vs {e}");
    }
    let raw = novel.iter().sum::<f64>() / novel.len() as f64;
    assert!((r.eta - raw / (raw + (b as f64).ln())).abs() < 1e-9);
    assert!((r.lambda - (p.node_count as f64).ln() / 5.0).abs() < 1e-12);
}

#[test]
fn degenerate_candidates_score_negative_infinity() {
    let ts = planted_family(4, 0);
    let lib = PatternLibrary::new();
    let always = evaluate_fitness(&ts, &prog("DETECT a WHERE true"), &lib).unwrap();
    assert!(always.degenerate && always.nu == f64::NEG_INFINITY);
    let never = evaluate_fitness(&ts, &prog("DETECT n WHERE false"), &lib).unwrap();
    assert_eq!(never.reason.as_deref(), Some("never fires"));
    let moving = evaluate_fitness(&ts, &prog(MOVING), &lib).unwrap();
    assert!(moving.degenerate);
    let ghost = evaluate_fitness(&ts, &prog(r#"DETECT g WHERE event_active("ghost")"#), &lib).unwrap();
    assert!(ghost.reason.unwrap().starts_with("runtime error"));
}

#[test]
fn too_few_traces_is_an_error() {
    let ts = planted_family(1, 0);
    assert_eq!(
        evaluate_fitness(&ts, &prog(HIT), &PatternLibrary::new()).unwrap_err(),
        EvolutionError::TooFewTraces(1)
    );
}

#[test]
fn time_penalty_uses_library_cost() {
    let ts = planted_family(4, 2);
    let mut lib = PatternLibrary::new();
    lib.add("cheap", "cheap", "", Origin::Guided, "DETECT cheap WHERE false").unwrap();
    let r = evaluate_fitness(&ts, &prog(HIT), &lib).unwrap();
    assert!(r.mu > 0.0);
    assert!(r.cost > r.mu);
    assert_eq!(r.psi, time_penalty(r.cost, r.mu));
}

fn island(scores: &[f64], tag: &str) -> Island {
    Island {
        programs: scores
            .iter()
            .enumerate()
            .map(|(k, s)| (prog(&format!("DETECT {tag}{k} WHERE frame() == {k}")), *s))
            .collect(),
    }
}

#[test]
fn reset_replaces_worst_half_with_global_best() {
    let mut islands = vec![island(&[3.0], "a"), island(&[1.0], "b"), island(&[2.0, -1.0], "c"), island(&[0.0], "d")];
    let reset = reset_islands(&mut islands);
    assert_eq!(reset, vec![1, 3]);
    for &i in &reset {
        assert_eq!(islands[i].programs.len(), 1);
        assert_eq!(islands[i].programs[0].0.name, "a0");
        assert_eq!(islands[i].programs[0].1, 3.0);
    }
    assert_eq!(islands[2].programs.len(), 2);
}

#[test]
fn identity_mutator_keeps_seed() {
    let ts = planted_family(4, 4);
    let fc = FitnessContext::new(&ts, &PatternLibrary::new(), 10).unwrap();
    let g0 = prog(HIT);
    let nu0 = fc.evaluate(&g0).nu;
    let cfg = EvolutionConfig {
        budget: 12,
        reset_period: 5,
        ..EvolutionConfig::default()
    };
    let mut eval = |p: &DetectorProgram| fc.evaluate(p);
    let r = funsearch(&mut eval, &g0, &mut IdentityMutator, &MutationContext::default(), &cfg).unwrap();
    assert_eq!(r.best.to_string(), g0.to_string());
    assert_eq!(r.nu, nu0);
    assert!(r.best_so_far.iter().all(|v| *v == nu0));
    assert_eq!(r.resets.len(), 2);
}

#[test]
fn config_validation() {
    let bad = EvolutionConfig {
        budget: 2,
        ..EvolutionConfig::default()
    };
    assert!(matches!(bad.validate(), Err(EvolutionError::Config(_))));
    assert!(EvolutionConfig::default().validate().is_ok());
}

#[test]
fn search_is_deterministic_and_finds_planted_pattern() {
    let ts = planted_family(8, 6);
    let fc = FitnessContext::new(&ts, &PatternLibrary::new(), 10).unwrap();
    let g0 = prog(MOVING);
    let cfg = EvolutionConfig {
        budget: 120,
        seed: 11,
        ..EvolutionConfig::default()
    };
    let run = || {
        let mut eval = |p: &DetectorProgram| fc.evaluate(p);
        funsearch(&mut eval, &g0, &mut GrammarMutator, &MutationContext::default(), &cfg).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.best.to_string(), b.best.to_string());
    assert_eq!(a.best_so_far, b.best_so_far);
    assert!(a.nu > 0.0, "best {} at {}", a.best, a.nu);
}

#[test]
fn uid_is_stable_and_avoids_collisions() {
    let p = prog(HIT);
    let lib = PatternLibrary::new();
    let u = abstraction_uid("hit", &p, &lib);
    assert_eq!(u, abstraction_uid("hit", &p, &lib));
    assert!(u.starts_with("abstraction_") && u.len() == 18);
    assert!(u["abstraction_".len()..].chars().all(|c| c.is_ascii_digit()));
    let mut taken = PatternLibrary::new();
    taken.add(&u, "x", "", Origin::Automatic, "DETECT x WHERE frame() == 1").unwrap();
    assert_ne!(abstraction_uid("hit", &p, &taken), u);
}

#[test]
fn redundant_second_label_is_rejected() {
    let ts = planted_family(8, 9);
    let lib = PatternLibrary::new();
    let first = evaluate_fitness(&ts, &prog(HIT), &lib).unwrap();
    let mut with = PatternLibrary::new();
    with.add("hit", "hit", "", Origin::Automatic, HIT).unwrap();
    let second = evaluate_fitness(&ts, &prog(HIT), &with).unwrap();
    assert!(second.eta < first.eta);
    let delta = 0.5 * (first.nu + second.nu);
    let cfg = EvolutionConfig {
        budget: 4,
        delta,
        ..EvolutionConfig::default()
    };
    let labels = vec![
        LabelSpec {
            label: "impact".into(),
            description: "ball strikes the bar".into(),
        },
        LabelSpec {
            label: "impact again".into(),
            description: String::new(),
        },
    ];
    let d = discover(&ts, &labels, &prog(HIT), &mut Fixed(HIT.into()), &cfg, PatternLibrary::new()).unwrap();
    assert!(d.outcomes[0].accepted);
    assert!(!d.outcomes[1].accepted);
    assert_eq!(d.library.len(), 1);
    let uid = d.outcomes[0].uid.clone().unwrap();
    assert_eq!(d.library.get(&uid).unwrap().origin, Origin::Guided);
}

#[test]
fn log_entries_round_trip_with_infinite_scores() {
    let e = LogEntry {
        label: "x".into(),
        iteration: 3,
        island: 1,
        nu: f64::NEG_INFINITY,
        rho: 0.0,
        eta: 0.0,
        lambda: 0.0,
        psi: 0.0,
        accepted: false,
    };
    let s = serde_json::to_string(&e).unwrap();
    assert!(s.contains("\"nu\":null"));
    let back: LogEntry = serde_json::from_str(&s).unwrap();
    assert_eq!(back, e);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]
    #[test]
    fn best_so_far_never_decreases(seed in 0u64..1000) {
        let ts = planted_family(4, 8);
        let fc = FitnessContext::new(&ts, &PatternLibrary::new(), 10).unwrap();
        let cfg = EvolutionConfig { budget: 30, reset_period: 7, seed, ..EvolutionConfig::default() };
        let mut eval = |p: &DetectorProgram| fc.evaluate(p);
        let r = funsearch(&mut eval, &prog(HIT), &mut GrammarMutator, &MutationContext::default(), &cfg).unwrap();
        prop_assert!(r.best_so_far.windows(2).all(|w| w[1] >= w[0]));
        prop_assert_eq!(*r.best_so_far.last().unwrap(), r.nu);
    }
}

