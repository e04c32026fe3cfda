use super::*;
use crate::trace::fixtures::{ball, bar};
use crate::trace::{serialize_trace, validate_trace, Shape};

fn empty() -> Scene {
    Scene::default()
}

#[test]
fn free_fall_lands_on_floor_and_rests() {
    let t = simulate(
        &empty(),
        &Action::new(128.0, 200.0, 10.0),
        &SimConfig::default(),
    )
    .unwrap();
    assert!(validate_trace(&t).is_ok(), "{:?}", validate_trace(&t));
    assert_eq!(t.frames.len(), 300);
    let first = t
        .events
        .iter()
        .find(|e| e.uid == COLLISION_START)
        .expect("floor contact");
    assert_eq!(first.pair(), Some((0, crate::trace::FLOOR_ID)));
    let impact = frame_of(first.time, t.frames.len());
    let ys: Vec<f64> = (0..t.frames.len())
        .map(|i| t.position_at(0, i).unwrap().y)
        .collect();
    for w in ys[..impact.saturating_sub(1)].windows(2) {
        assert!(w[1] <= w[0]);
    }
    let end = ys.last().unwrap();
    assert!((end - 10.0).abs() < 0.5, "final height {end}");
}

fn frame_of(t: f64, n: usize) -> usize {
    crate::trace::frame_index(t, n)
}

#[test]
fn frames_are_uniform_in_time() {
    let cfg = SimConfig {
        timesteps: 11,
        ..SimConfig::default()
    };
    let t = simulate(&empty(), &Action::new(50.0, 50.0, 5.0), &cfg).unwrap();
    for (i, f) in t.frames.iter().enumerate() {
        assert_eq!(f.time, i as f64 / 10.0);
    }
}

#[test]
fn resting_green_on_blue_succeeds() {
    let scene = Scene {
        objects: vec![
            ball(0, Color::Green, Vec2::new(100.0, 16.0), 10.0, false),
            bar(
                1,
                Color::Blue,
                Vec2::new(60.0, 0.0),
                Vec2::new(140.0, 6.0),
                true,
            ),
        ],
    };
    let t = simulate(
        &scene,
        &Action::new(220.0, 200.0, 6.0),
        &SimConfig::default(),
    )
    .unwrap();
    assert!(task_success(&t));
    let last = t.final_event().unwrap();
    assert_eq!(last.uid, TASK_COMPLETE);
    assert_eq!(last.parameters["success"], json!(true));
}

#[test]
fn overlapping_placement_is_rejected() {
    let scene = Scene {
        objects: vec![bar(
            0,
            Color::Black,
            Vec2::new(50.0, 50.0),
            Vec2::new(150.0, 60.0),
            true,
        )],
    };
    let err = simulate(
        &scene,
        &Action::new(100.0, 62.0, 5.0),
        &SimConfig::default(),
    )
    .unwrap_err();
    assert_eq!(err, SimError::InvalidPlacement(0));
    let err = simulate(&scene, &Action::new(2.0, 100.0, 5.0), &SimConfig::default()).unwrap_err();
    assert_eq!(err, SimError::InvalidPlacement(crate::trace::LEFT_WALL_ID));
    assert!(matches!(
        simulate(
            &scene,
            &Action::new(100.0, 100.0, 40.0),
            &SimConfig::default()
        ),
        Err(SimError::InvalidAction(_))
    ));
}

#[test]
fn restitution_scales_rebound_speed() {
    let cfg = SimConfig {
        restitution: 0.8,
        damping: 0.0,
        ..SimConfig::default()
    };
    let mut states = Vec::new();
    let mut obs = |s: &Snapshot| states.push(s.bodies[0].velocity.y);
    simulate_observed(
        &empty(),
        &Action::new(128.0, 150.0, 8.0),
        &cfg,
        Some(&mut obs),
    )
    .unwrap();
    let flip = states
        .windows(2)
        .position(|w| w[0] < 0.0 && w[1] > 0.0)
        .unwrap();
    let ratio = states[flip + 1].abs() / states[flip].abs();
    assert!((ratio - 0.8).abs() < 0.05 * 0.8, "ratio {ratio}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let scene = build_scene(&SceneTemplate::new("stack", 3)).unwrap();
    let a = Action::new(70.0, 200.0, 12.0);
    let x = serialize_trace(&simulate(&scene, &a, &SimConfig::default()).unwrap());
    let y = serialize_trace(&simulate(&scene, &a, &SimConfig::default()).unwrap());
    assert_eq!(x, y);
}

#[test]
fn every_template_builds_and_simulates() {
    for id in template_ids() {
        for seed in 0..3 {
            let scene = build_scene(&SceneTemplate::new(id, seed)).unwrap();
            assert_eq!(scene, build_scene(&SceneTemplate::new(id, seed)).unwrap());
            let t = simulate(
                &scene,
                &Action::new(230.0, 230.0, 6.0),
                &SimConfig::default(),
            )
            .unwrap_or_else(|e| panic!("{id}/{seed}: {e}"));
            let report = validate_trace(&t);
            assert!(report.is_ok(), "{id}/{seed}: {report:?}");
            let flag = t.final_event().unwrap().parameters["success"]
                .as_bool()
                .unwrap();
            assert_eq!(flag, task_success(&t), "{id}/{seed}");
        }
    }
}

#[test]
fn unknown_template_and_parameter() {
    assert_eq!(
        build_scene(&SceneTemplate::new("nope", 0)),
        Err(SimError::UnknownTemplate("nope".into()))
    );
    assert!(matches!(
        build_scene(&SceneTemplate::new("lever", 0).with("bogus", 1.0)),
        Err(SimError::BadParameter { .. })
    ));
}

#[test]
fn buckets_have_three_jars() {
    let s = build_scene(&SceneTemplate::new("buckets3", 0)).unwrap();
    let jars = s
        .objects
        .iter()
        .filter(|o| o.kind == ShapeKind::Jar)
        .count();
    assert_eq!(jars, 3);
    for o in s.objects.iter().filter(|o| o.kind == ShapeKind::Jar) {
        assert!(matches!(&o.shape, Shape::Polygons(p) if p.len() == 3));
    }
}

#[test]
fn quantized_grid() {
    assert_eq!(quantize_actions(4, 4, 3).len(), 48);
    assert_eq!(
        quantize_actions(1, 1, 1),
        vec![Action::new(128.0, 128.0, 18.0)]
    );
    let xs: Vec<f64> = quantize_actions(2, 1, 1)
        .iter()
        .map(|a| a.position.x)
        .collect();
    assert_eq!(xs, vec![64.0, 192.0]);
}

fn trace_with(events: Vec<(f64, &str, i64, i64)>) -> Trace {
    let mut t = crate::trace::fixtures::minimal_trace();
    t.scene
        .objects
        .push(ball(1, Color::Green, Vec2::new(10.0, 10.0), 5.0, false));
    t.scene
        .objects
        .push(ball(2, Color::Blue, Vec2::new(30.0, 10.0), 5.0, true));
    let mut evs: Vec<TraceEvent> = events
        .into_iter()
        .map(|(time, uid, a, b)| collision_event(uid, time, (a, b), &[]))
        .collect();
    evs.push(t.events.pop().unwrap());
    t.events = evs;
    t
}

#[test]
fn success_follows_open_contacts() {
    assert!(task_success(&trace_with(vec![(
        0.7,
        COLLISION_START,
        1,
        2
    )])));
    assert!(!task_success(&trace_with(vec![
        (0.3, COLLISION_START, 1, 2),
        (0.5, COLLISION_END, 1, 2)
    ])));
    assert!(!task_success(&trace_with(vec![])));
}
