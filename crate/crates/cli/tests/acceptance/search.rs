use patternlab::annotate::guided_library;
use patternlab::detector::parse_detector;
use patternlab::evolution::{funsearch, planted_family, EvolutionConfig, FitnessContext, GrammarMutator, MutationContext};
use patternlab::optimize::{anneal, bucket_scene, success_test, AnnealConfig, RewardFn, RewardMode, BUCKET_GOAL, SUCCESS_TOLERANCE};
use patternlab::reward::parse_reward;
use patternlab::sim::{simulate, SimConfig};

use crate::Outcome;

pub const RECOVERY_THRESHOLD: f64 = 0.3;
pub const RECOVERED_SEEDS: usize = 8;
pub const BUDGETS: [usize; 4] = [10, 50, 100, 250];
pub const OPT_SEEDS: u64 = 20;
/// Required dense minus binary successes at the largest budget: 10
/// percentage points of 20 seeds.
pub const MIN_GAP_AT_250: usize = 2;

const MOVING: &str = "DETECT moving PARAMS {object_id: int} WHERE exists_object(o, dynamic, speed(o) > 5) EMIT {object_id: o}";

pub fn planted_recovery() -> Outcome {
    let g0 = parse_detector(MOVING).unwrap();
    let ctx = MutationContext {
        label: "ball hits the bar".into(),
        description: "the falling ball collides with the bar".into(),
        library_summary: String::new(),
    };
    let lib = patternlab::annotate::PatternLibrary::new();
    let (mut recovered, mut monotone, mut nus) = (0, 0, Vec::new());
    for seed in 0..10u64 {
        let traces = planted_family(10, seed);
        let fc = FitnessContext::new(&traces, &lib, 10).unwrap();
        let cfg = EvolutionConfig {
            islands: 4,
            prompt_size: 2,
            reset_period: 50,
            budget: 500,
            delta: RECOVERY_THRESHOLD,
            seed,
            ..EvolutionConfig::default()
        };
        let r = funsearch(&mut |p| fc.evaluate(p), &g0, &mut GrammarMutator, &ctx, &cfg).unwrap();
        if r.nu >= RECOVERY_THRESHOLD {
            recovered += 1;
        }
        if r.best_so_far.len() == 500 && r.best_so_far.windows(2).all(|w| w[1] >= w[0]) {
            monotone += 1;
        }
        nus.push((r.nu * 100.0).round() / 100.0);
    }
    Outcome::new(
        recovered >= RECOVERED_SEEDS && monotone == 10,
        format!("{recovered}/10 seeds reach nu >= {RECOVERY_THRESHOLD} (best nu {nus:?}); best-so-far monotone in {monotone}/10"),
    )
}

/// Successes per budget: the best action among the first `b` samples is
/// rolled out again and must end within tolerance of the target.
fn successes(mode: RewardMode) -> Vec<usize> {
    let (scene, target) = bucket_scene();
    let sim = SimConfig::default();
    let reward = RewardFn::new(parse_reward(BUCKET_GOAL).unwrap(), guided_library(), mode).unwrap();
    let mut wins = vec![0; BUDGETS.len()];
    for seed in 0..OPT_SEEDS {
        let cfg = AnnealConfig {
            samples: *BUDGETS.last().unwrap(),
            seed,
            ..AnnealConfig::default()
        };
        let run = anneal(&scene, &reward, &cfg, &sim).unwrap();
        for (k, &b) in BUDGETS.iter().enumerate() {
            let mut best = 0;
            for i in 1..b {
                if run.history[i].score > run.history[best].score {
                    best = i;
                }
            }
            let ok = simulate(&scene, &run.history[best].action, &sim).is_ok_and(|t| success_test(&t, target, SUCCESS_TOLERANCE));
            wins[k] += ok as usize;
        }
    }
    wins
}

pub fn dense_vs_binary() -> Outcome {
    let dense = successes(RewardMode::Dense);
    let binary = successes(RewardMode::Binary);
    let every = dense.iter().zip(&binary).all(|(d, b)| d >= b);
    let gap = dense[3] as i64 - binary[3] as i64;
    let pct = |v: &[usize]| v.iter().map(|&x| format!("{}%", x * 100 / OPT_SEEDS as usize)).collect::<Vec<_>>().join("/");
    Outcome::new(
        every && gap >= MIN_GAP_AT_250 as i64,
        format!("budgets {BUDGETS:?}: dense {} vs binary {}; gap at 250 = {} pp", pct(&dense), pct(&binary), gap * 100 / OPT_SEEDS as i64),
    )
}
