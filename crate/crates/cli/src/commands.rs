use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use patternlab::annotate::{ablate as ablate_library, annotate as annotate_trace, render_annotations, AstExport, PatternLibrary};
use patternlab::detector::{parse_detector, DetectorProgram};
use patternlab::evolution::{
    discover as discover_labels, funsearch, EvolutionConfig, FitnessContext, GrammarMutator, LabelSpec, LogEntry, MutationContext, Mutator,
};
use patternlab::lm::{synthesize_reward, Backend, EndpointConfig, ExchangeRecord, GrammarBackend, HttpBackend, LmMutator, MockBackend};
use patternlab::metrics::{annotation_distance, correlation, trace_distance};
use patternlab::optimize::{anneal, export_heatmap, success_test, AnnealConfig, OptimizationRun, RewardFn, RewardMode, SUCCESS_TOLERANCE};
use patternlab::query::{answer, scene_questions, to_json_lines, BenchmarkScene, QuestionArgs, QuestionInstance};
use patternlab::render::{render_frame, render_frames};
use patternlab::reward::{eval_partial, parse_reward, validate_against_library, EvalContext};
use patternlab::sim::{check_placement, quantize_actions, simulate as rollout, task_success, template_ids, SimConfig};
use patternlab::trace::{parse_json, serialize_trace, Action, Scene, Trace};
use serde_json::json;

use crate::util::*;
use crate::*;

/// Seed program for detector search: fires while any dynamic object moves.
pub const DEFAULT_G0: &str =
    r#"DETECT moving PARAMS {object_id: int} WHERE exists_object(o, dynamic, speed(o) > 5) EMIT {object_id: o}"#;

pub fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let scene = build(&a.scene, a.seed)?;
    let trace = rollout(&scene, &a.action, &sim_config(&a.sim))?;
    let text = serialize_trace(&trace);
    match &a.out {
        Some(out) => {
            write_text(out, &text)?;
            print_json(&json!({
                "out": out,
                "frames": trace.frames.len(),
                "events": trace.events.len(),
                "success": task_success(&trace),
            }))
        }
        None => emit(&text),
    }
}

pub fn annotate(a: AnnotateArgs) -> Result<(), CliError> {
    let paths = trace_paths(&a.traces)?;
    if paths.len() > 1 && a.out_dir.is_none() {
        return Err(CliError::Usage("several traces need --out-dir".into()));
    }
    let library = read_library(a.library.as_deref())?;
    let results = par_map(&paths, a.jobs, |_, p| -> Result<String, CliError> {
        let trace = read_trace(p)?;
        let matrix = annotate_trace(&trace, &library)?;
        Ok(if a.table {
            render_annotations(&matrix, &library)
        } else {
            AstExport::new(&p.to_string_lossy(), &trace, &matrix).to_json()
        })
    });
    let texts = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    if let Some(dir) = &a.out_dir {
        let ext = if a.table { "txt" } else { "ast.json" };
        let mut written = Vec::new();
        for (p, text) in paths.iter().zip(&texts) {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "trace".into());
            let out = dir.join(format!("{stem}.{ext}"));
            write_text(&out, text)?;
            written.push(out);
        }
        return print_json(&json!({ "written": written }));
    }
    match &a.out {
        Some(out) => {
            write_text(out, &texts[0])?;
            print_json(&json!({ "written": [out] }))
        }
        None => emit(texts[0].trim_end()),
    }
}

pub fn metrics(a: MetricsArgs) -> Result<(), CliError> {
    let (paths, traces) = read_traces(&a.traces)?;
    if traces.len() < 2 {
        return Err(CliError::Usage("metrics needs at least two traces".into()));
    }
    let library = read_library(a.library.as_deref())?;
    let matrices = par_map(&traces, a.jobs, |_, t| annotate_trace(t, &library))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut pairs = Vec::new();
    let (mut xs, mut ps) = (Vec::new(), Vec::new());
    for l in 0..traces.len() {
        for m in l + 1..traces.len() {
            let d_x = trace_distance(&traces[l], &traces[m], a.samples)?;
            let d_p = annotation_distance(&matrices[l], &matrices[m], a.bins)?;
            xs.push(d_x);
            ps.push(d_p);
            pairs.push(json!({ "a": paths[l], "b": paths[m], "d_x": d_x, "d_p": d_p }));
        }
    }
    print_json(&json!({
        "pairs": pairs,
        "correlation": correlation(&xs, &ps).ok(),
    }))
}

fn evolution_config(s: &SearchArgs) -> EvolutionConfig {
    EvolutionConfig {
        islands: s.islands,
        prompt_size: s.prompt_size,
        reset_period: s.reset_period,
        budget: s.budget,
        delta: s.delta,
        temperature: s.temperature,
        seed: s.seed,
        bins: s.bins,
        ..EvolutionConfig::default()
    }
}

fn load_g0(s: &SearchArgs) -> Result<DetectorProgram, CliError> {
    let src = match &s.g0 {
        Some(p) => read_text(p)?,
        None => DEFAULT_G0.to_string(),
    };
    Ok(parse_detector(&src)?)
}

fn backend(spec: &BackendSpec) -> Result<Box<dyn Backend>, CliError> {
    Ok(match spec {
        BackendSpec::Grammar => Box::new(GrammarBackend::new()),
        BackendSpec::Mock(None) => Box::new(MockBackend::new(Vec::new())),
        BackendSpec::Mock(Some(p)) => Box::new(MockBackend::from_file(p)?),
        BackendSpec::Http => Box::new(HttpBackend::new(EndpointConfig::from_env()?)),
    })
}

/// Runs `f` with the mutator for `spec` and returns the exchange records.
fn with_mutator<R>(spec: &BackendSpec, f: impl FnOnce(&mut dyn Mutator) -> R) -> Result<(R, Vec<ExchangeRecord>), CliError> {
    match spec {
        BackendSpec::Grammar => Ok((f(&mut GrammarMutator), Vec::new())),
        other => {
            let mut m = LmMutator::new(backend(other)?);
            let r = f(&mut m);
            Ok((r, m.backend.records().to_vec()))
        }
    }
}

fn write_log(path: Option<&Path>, log: &[LogEntry]) -> Result<(), CliError> {
    if let Some(p) = path {
        let mut text = String::new();
        for e in log {
            text.push_str(&serde_json::to_string(e)?);
            text.push('\n');
        }
        write_text(p, text)?;
    }
    Ok(())
}

fn write_records(path: Option<&Path>, records: &[ExchangeRecord]) -> Result<(), CliError> {
    if let Some(p) = path {
        write_text(p, serde_json::to_string_pretty(records)?)?;
    }
    Ok(())
}

pub fn evolve(a: EvolveArgs) -> Result<(), CliError> {
    let (_, traces) = read_traces(&a.traces)?;
    let library = read_library_or_empty(a.library.as_deref())?;
    let g0 = load_g0(&a.search)?;
    let cfg = evolution_config(&a.search);
    let fc = FitnessContext::new(&traces, &library, cfg.bins)?;
    let ctx = MutationContext {
        label: a.label.clone(),
        description: a.description.clone(),
        library_summary: library.summary(),
    };
    let mut eval = |p: &DetectorProgram| fc.evaluate(p);
    let (result, records) = with_mutator(&a.search.backend, |m| funsearch(&mut eval, &g0, m, &ctx, &cfg))?;
    let result = result?;
    write_log(a.search.log.as_deref(), &result.log)?;
    write_records(a.search.records.as_deref(), &records)?;
    let source = result.best.to_string();
    if let Some(out) = &a.out {
        write_text(out, format!("{source}\n"))?;
    }
    print_json(&json!({
        "label": a.label,
        "nu": result.best_report.as_ref().map(|r| r.nu),
        "accepted": result.nu > cfg.delta,
        "source": source,
        "report": result.best_report,
    }))
}

pub fn discover(a: DiscoverArgs) -> Result<(), CliError> {
    let (paths, traces) = read_traces(&a.traces)?;
    let labels: Vec<LabelSpec> =
        parse_json(read_text(&a.labels)?.as_bytes()).map_err(|e| CliError::Domain(format!("{}: {e}", a.labels.display())))?;
    if labels.is_empty() {
        return Err(CliError::Domain("label list is empty".into()));
    }
    let start = read_library_or_empty(a.library.as_deref())?;
    let g0 = load_g0(&a.search)?;
    let cfg = evolution_config(&a.search);
    let (found, records) = with_mutator(&a.search.backend, |m| discover_labels(&traces, &labels, &g0, m, &cfg, start))?;
    let found = found?;
    write_text(&a.out, found.library.to_json())?;
    write_log(a.search.log.as_deref(), &found.log)?;
    write_records(a.search.records.as_deref(), &records)?;
    if let Some(m) = &a.manifest {
        let manifest = json!({
            "seed": cfg.seed,
            "config": cfg,
            "backend": a.search.backend.to_string(),
            "g0": g0.to_string(),
            "traces": paths,
            "labels": labels,
            "start_library": a.library,
            "exchanges": records.len(),
        });
        write_text(m, serde_json::to_string_pretty(&manifest)?)?;
    }
    print_json(&json!({
        "library_size": found.library.len(),
        "outcomes": found.outcomes,
    }))
}

pub fn reward_parse(a: RewardParseArgs) -> Result<(), CliError> {
    let program = parse_reward(&read_text(&a.program)?)?;
    if let Some(p) = &a.library {
        validate_against_library(&program, &read_library(Some(p))?)?;
    }
    let ids: BTreeSet<&str> = program.root.identifiers().into_iter().collect();
    print_json(&json!({
        "ok": true,
        "canonical": program.to_string(),
        "identifiers": ids,
    }))
}

fn resolve_trace_ref(ast_path: &Path, trace_ref: &str) -> Result<PathBuf, CliError> {
    let direct = PathBuf::from(trace_ref);
    if direct.is_file() {
        return Ok(direct);
    }
    if let Some(dir) = ast_path.parent() {
        let near = dir.join(trace_ref);
        if near.is_file() {
            return Ok(near);
        }
    }
    Err(CliError::Domain(format!("trace `{trace_ref}` not found; pass --trace")))
}

pub fn reward_eval(a: RewardEvalArgs) -> Result<(), CliError> {
    let program = parse_reward(&read_text(&a.program)?)?;
    let export: AstExport =
        parse_json(read_text(&a.ast)?.as_bytes()).map_err(|e| CliError::Domain(format!("{}: {e}", a.ast.display())))?;
    let trace_path = match &a.trace {
        Some(p) => p.clone(),
        None => resolve_trace_ref(&a.ast, &export.trace_ref)?,
    };
    let trace = read_trace(&trace_path)?;
    let ctx = EvalContext::from_export(&trace, &export);
    print_json(&eval_partial(&program, &ctx)?)
}

pub fn reward_synthesize(a: RewardSynthesizeArgs) -> Result<(), CliError> {
    let goal = match (&a.goal, &a.goal_file) {
        (Some(g), _) => g.clone(),
        (None, Some(p)) => read_text(p)?.trim().to_string(),
        (None, None) => return Err(CliError::Usage("--goal or --goal-file is required".into())),
    };
    let scene = build(&a.scene, a.scene_seed)?;
    let library = read_library(a.library.as_deref())?;
    let mut b = backend(&a.backend)?;
    let result = synthesize_reward(&goal, &library, &scene, &mut b, a.retries);
    write_records(a.records.as_deref(), b.records())?;
    let s = result?;
    let program = s.program.to_string();
    if let Some(out) = &a.out {
        write_text(out, format!("{program}\n"))?;
    }
    print_json(&json!({
        "program": program,
        "repairs": s.repairs,
        "errors": s.errors,
        "backend": a.backend.to_string(),
    }))
}

fn green_at_end(trace: &Trace, target: patternlab::geom::Vec2) -> bool {
    success_test(trace, target, SUCCESS_TOLERANCE)
}

pub fn optimize(a: OptimizeArgs) -> Result<(), CliError> {
    if a.runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let program = parse_reward(&read_text(&a.program)?)?;
    let library = read_library(a.library.as_deref())?;
    let mode = match a.mode {
        Mode::Dense => RewardMode::Dense,
        Mode::Binary => RewardMode::Binary,
    };
    let reward = RewardFn::new(program, library, mode)?;
    let scene: Scene = build(&a.scene, a.scene_seed)?;
    let sim: SimConfig = sim_config(&a.sim);
    let configs: Vec<AnnealConfig> = (0..a.runs as u64)
        .map(|k| AnnealConfig {
            samples: a.samples,
            t0: a.t0,
            cooling: a.cooling,
            seed: a.seed.wrapping_add(k),
            ..AnnealConfig::default()
        })
        .collect();
    let runs: Vec<OptimizationRun> = par_map(&configs, a.jobs, |_, c| anneal(&scene, &reward, c, &sim))
        .into_iter()
        .collect::<Result<_, _>>()?;
    let mut summaries = Vec::new();
    let mut successes = 0usize;
    for (c, r) in configs.iter().zip(&runs) {
        let task = r.best_trace.as_ref().is_some_and(task_success);
        let reached = a.target.map(|t| r.best_trace.as_ref().is_some_and(|tr| green_at_end(tr, t)));
        if reached.unwrap_or(task) {
            successes += 1;
        }
        summaries.push(json!({
            "seed": c.seed,
            "best_index": r.best_index,
            "best": r.best,
            "task_success": task,
            "target_reached": reached,
        }));
    }
    let first = &runs[0];
    if let Some(out) = &a.out {
        let history = OptimizationRun {
            best_trace: None,
            ..first.clone()
        };
        write_text(out, serde_json::to_string_pretty(&history)?)?;
    }
    if let Some(out) = &a.trace_out {
        match &first.best_trace {
            Some(t) => write_text(out, serialize_trace(t))?,
            None => return Err(CliError::Domain("best sample was never simulated".into())),
        }
    }
    if a.heatmap.is_some() || a.heatmap_ppm.is_some() {
        let h = export_heatmap(first, a.heatmap_bins, a.heatmap_bins);
        if let Some(p) = &a.heatmap {
            write_text(p, h.to_json())?;
        }
        if let Some(p) = &a.heatmap_ppm {
            write_text(p, h.to_ppm(8))?;
        }
    }
    let mean = runs.iter().map(|r| r.best.score).sum::<f64>() / runs.len() as f64;
    print_json(&json!({
        "runs": summaries,
        "mean_best_score": mean,
        "success_rate": successes as f64 / runs.len() as f64,
    }))
}

pub fn qa_answer(a: QaAnswerArgs) -> Result<(), CliError> {
    let trace = read_trace(&a.trace)?;
    let q = QuestionInstance::new(
        a.question,
        QuestionArgs {
            color: a.color,
            other: a.other,
            t0: a.t0,
            t1: a.t1,
            split: a.split,
            pattern: a.pattern.clone(),
        },
    )?;
    let ast = if a.question.needs_annotation() {
        Some(annotate_trace(&trace, &read_library(a.library.as_deref())?)?)
    } else {
        None
    };
    let ans = answer(&q, &trace, ast.as_ref())?;
    print_json(&json!({
        "template": q.template,
        "question": q.render(),
        "args": q.args,
        "answer": ans,
    }))
}

/// First grid action whose rollout ends with green touching blue.
fn find_solution(scene: &Scene, sim: &SimConfig) -> Option<Action> {
    for (x, y, r) in [(4, 4, 3), (8, 8, 3)] {
        for action in quantize_actions(x, y, r) {
            if check_placement(scene, &action).is_err() {
                continue;
            }
            if rollout(scene, &action, sim).is_ok_and(|t| task_success(&t)) {
                return Some(action);
            }
        }
    }
    None
}

pub fn qa_generate(a: QaGenerateArgs) -> Result<(), CliError> {
    let sim = sim_config(&a.sim);
    let ids: Vec<String> = if a.templates.is_empty() {
        template_ids().into_iter().map(String::from).collect()
    } else {
        a.templates.clone()
    };
    let mut specs = Vec::new();
    for id in &ids {
        for k in 0..a.scenes_per_template as u64 {
            specs.push((id.clone(), a.seed.wrapping_add(k)));
        }
    }
    let found = par_map(&specs, a.jobs, |_, (id, seed)| -> Result<BenchmarkScene, CliError> {
        let args = SceneArgs {
            template: Some(id.clone()),
            params: Vec::new(),
            scene: None,
        };
        let scene = build(&args, *seed)?;
        let solution = find_solution(&scene, &sim);
        Ok(BenchmarkScene {
            scene_ref: format!("{id}:{seed}"),
            scene,
            solution,
        })
    });
    let mut scenes = Vec::new();
    let mut skipped = Vec::new();
    for s in found {
        let s = s?;
        if s.solution.is_some() {
            scenes.push(s);
        } else {
            skipped.push(s.scene_ref);
        }
    }
    let library = if a.no_patterns {
        None
    } else {
        Some(read_library(a.library.as_deref())?)
    };
    let out = par_map(&scenes, a.jobs, |i, bs| scene_questions(i, bs, a.per_scene, a.seed, library.as_ref(), &sim))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    write_text(&a.out, to_json_lines(&out))?;
    print_json(&json!({
        "scenes": out.len(),
        "items": out.iter().map(|s| s.items.len()).sum::<usize>(),
        "near_miss": out.iter().filter(|s| s.near_miss).count(),
        "skipped": skipped,
    }))
}

pub fn ablate(a: AblateArgs) -> Result<(), CliError> {
    let library: PatternLibrary = read_library(Some(&a.library))?;
    let reduced = ablate_library(&library, &a.uid)?;
    let kept: BTreeSet<String> = reduced.uids().into_iter().collect();
    let removed: Vec<String> = library.uids().into_iter().filter(|u| !kept.contains(u)).collect();
    if let Some(out) = &a.out {
        write_text(out, reduced.to_json())?;
    }
    let consistent = match &a.trace {
        Some(p) => {
            let trace = read_trace(p)?;
            let full = annotate_trace(&trace, &library)?;
            let part = annotate_trace(&trace, &reduced)?;
            Some(part.uids.iter().all(|u| part.column(u) == full.column(u)))
        }
        None => None,
    };
    print_json(&json!({
        "removed": removed,
        "kept": kept,
        "consistent": consistent,
    }))
}

pub fn render(a: RenderArgs) -> Result<(), CliError> {
    let trace = read_trace(&a.trace)?;
    if let Some(k) = a.frame {
        let frame = trace
            .frames
            .get(k)
            .ok_or_else(|| CliError::Domain(format!("frame {k} out of range (trace has {})", trace.frames.len())))?;
        let out = a.out.as_ref().ok_or_else(|| CliError::Usage("--frame needs --out".into()))?;
        write_text(out, render_frame(&trace, frame).to_ppm())?;
        return print_json(&json!({ "frames": 1, "out": out }));
    }
    let dir = a.out_dir.as_ref().ok_or_else(|| CliError::Usage("--out-dir or --frame is required".into()))?;
    let n = render_frames(&trace, dir)?;
    print_json(&json!({ "frames": n, "out_dir": dir }))
}
