use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::path::Path;
use std::process::Command;

use patternlab::annotate::{ablate, annotate, Origin, PatternLibrary};
use patternlab::sim::{build_scene, simulate, SceneTemplate, SimConfig};
use patternlab::trace::Action;

use crate::Outcome;

/// (uid, uids it reads, source). `hit <- struck_rest <- late_struck_rest`
/// is the 3-deep chain; `rest` and `rest_late` hang off a separate root.
const CHAIN: [(&str, &[&str], &str); 6] = [
    ("hit", &[], r#"DETECT hit PARAMS {object_id: int} WHERE exists_object(o, dynamic, event_active("CollisionStart", {b_id: o})) EMIT {object_id: o}"#),
    ("rest", &[], r#"DETECT rest PARAMS {object_id: int} WHERE exists_object(o, dynamic, speed(o) < 2 and frame() > 10) EMIT {object_id: o}"#),
    ("struck_rest", &["hit"], r#"DETECT struck_rest WHERE event_active("hit", {}) and frame() > 5"#),
    ("late_struck_rest", &["struck_rest"], r#"DETECT late_struck_rest WHERE event_active("struck_rest", {}) and frame() > 40"#),
    ("rest_late", &["rest"], r#"DETECT rest_late WHERE event_active("rest", {}) and frame() > 60"#),
    ("rest_or_hit", &["rest", "hit"], r#"DETECT rest_or_hit WHERE event_active("rest", {}) or event_active("hit", {})"#),
];

/// Transitive dependents of `root` by breadth-first search over the
/// reverse of the declared edges.
fn dependents(root: &str) -> BTreeSet<String> {
    let mut rev: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (uid, reads, _) in CHAIN {
        for r in reads {
            rev.entry(r).or_default().push(uid);
        }
    }
    let mut seen = BTreeSet::from([root.to_string()]);
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &d in rev.get(u).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(d.to_string()) {
                queue.push_back(d);
            }
        }
    }
    seen
}

pub fn ablation_closure() -> Outcome {
    let mut lib = PatternLibrary::new();
    for (uid, _, src) in CHAIN {
        lib.add(uid, uid, uid, Origin::Guided, src).unwrap();
    }
    let scene = build_scene(&SceneTemplate::new("ball_on_bar", 0)).unwrap();
    let cfg = SimConfig {
        timesteps: 120,
        ..SimConfig::default()
    };
    let traces: Vec<_> = [(120.0, 30.0, 12.0), (60.0, 200.0, 10.0), (200.0, 150.0, 16.0)]
        .into_iter()
        .filter_map(|(x, y, r)| simulate(&scene, &Action::new(x, y, r), &cfg).ok())
        .collect();
    let mut bad = Vec::new();
    let mut checked_columns = 0;
    for root in ["hit", "struck_rest", "rest"] {
        let small = ablate(&lib, root).unwrap();
        let kept: BTreeSet<String> = small.uids().into_iter().collect();
        let all: BTreeSet<String> = lib.uids().into_iter().collect();
        let removed: BTreeSet<String> = all.difference(&kept).cloned().collect();
        let want = dependents(root);
        if removed != want {
            bad.push(format!("ablate {root}: removed {removed:?}, expected {want:?}"));
        }
        for t in &traces {
            let (a, b) = (annotate(t, &lib).unwrap(), annotate(t, &small).unwrap());
            for u in &kept {
                checked_columns += 1;
                if a.column(u) != b.column(u) {
                    bad.push(format!("ablate {root}: column {u} changed"));
                }
            }
        }
    }
    let active = traces.iter().any(|t| annotate(t, &lib).unwrap().column("late_struck_rest").is_some_and(|c| !c.is_empty()));
    if !active {
        bad.push("the chain never fires on the fixture traces".into());
    }
    Outcome::new(
        bad.is_empty(),
        if bad.is_empty() { format!("3 roots, closures match BFS, {checked_columns} surviving columns identical") } else { bad.join("; ") },
    )
}

fn files(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

pub fn end_to_end() -> Outcome {
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scripts/e2e_mock.sh");
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let status = Command::new("bash")
            .arg(&script)
            .arg(&out)
            .arg("7")
            .env("PATTERNLAB", env!("CARGO_BIN_EXE_patternlab"))
            .output()
            .unwrap();
        if !status.status.success() {
            return Outcome::new(false, format!("script failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        runs.push(files(&out));
    }
    let names: Vec<&str> = runs[0].iter().map(|f| f.0.as_str()).collect();
    let differing: Vec<&str> = runs[0].iter().zip(&runs[1]).filter(|(x, y)| x != y).map(|(x, _)| x.0.as_str()).collect();
    let expected = ["library.json", "ast", "reward.dsl", "run.json", "optimize.json"];
    let missing: Vec<&&str> = expected.iter().filter(|e| !names.iter().any(|n| n.starts_with(**e))).collect();
    let same = runs[0].len() == runs[1].len() && differing.is_empty();
    let summary = fs::read_to_string(tmp.path().join("a/optimize.json")).unwrap_or_default();
    let rate = serde_json::from_str::<serde_json::Value>(&summary).ok().and_then(|v| v["success_rate"].as_f64());
    Outcome::new(
        same && missing.is_empty(),
        format!(
            "{} files, {} differ between runs{}; success rate {rate:?}",
            names.len(),
            differing.len(),
            if missing.is_empty() { String::new() } else { format!(", missing {missing:?}") }
        ),
    )
}
