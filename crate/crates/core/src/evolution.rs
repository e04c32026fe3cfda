//! Fitness of candidate detectors, island-model search, and the discovery
//! loop that grows a pattern library label by label.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotate::{annotate_full, Annotation, LibraryError, Origin, PatternDetector, PatternLibrary};
use crate::detector::{grammar_mutate, parse_detector, run_on_view, DetectorProgram, TraceView, DEFAULT_STEP_BUDGET};
use crate::metrics::{column_distance, correlation, pattern_histogram, symmetric_cross_entropy, trace_distance, Histogram};
use crate::trace::{frame_index, Trace};

pub const MAX_LINES: usize = 1000;
pub const DEGENERATE_FIRE_RATE: f64 = 0.9;

/// ln(min(n, 1000)) / 5.
pub fn length_penalty(num_lines: usize) -> f64 {
    (num_lines.clamp(1, MAX_LINES) as f64).ln() / 5.0
}

/// 0 up to the mean cost, rising linearly to 1 at twice the mean.
pub fn time_penalty(t: f64, mu: f64) -> f64 {
    if mu <= 0.0 || t <= mu {
        0.0
    } else if t >= 2.0 * mu {
        1.0
    } else {
        (t - mu) / mu
    }
}

/// Maps a raw mean cross entropy into [0, 1).
pub fn rescale_novelty(raw: f64, bins: usize) -> f64 {
    let l = (bins as f64).ln();
    if raw <= 0.0 {
        0.0
    } else {
        raw / (raw + l)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostic {
    pub l: usize,
    pub m: usize,
    pub d_x: f64,
    pub d_p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub rho: f64,
    pub eta: f64,
    pub lambda: f64,
    pub psi: f64,
    /// `rho + eta - lambda - psi`, or negative infinity when degenerate.
    #[serde(with = "nu_serde")]
    pub nu: f64,
    pub degenerate: bool,
    pub reason: Option<String>,
    pub pairs: Vec<PairDiagnostic>,
    pub d_novel: Vec<f64>,
    /// Mean interpreter steps per trace for the candidate.
    pub cost: f64,
    /// Mean per-trace cost of one library detector.
    pub mu: f64,
}

mod nu_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

impl FitnessReport {
    fn degenerate(reason: String) -> Self {
        FitnessReport {
            rho: 0.0,
            eta: 0.0,
            lambda: 0.0,
            psi: 0.0,
            nu: f64::NEG_INFINITY,
            degenerate: true,
            reason: Some(reason),
            pairs: Vec::new(),
            d_novel: Vec::new(),
            cost: 0.0,
            mu: 0.0,
        }
    }
}

#[derive(Debug, PartialEq, thiserror::Error)]
pub enum EvolutionError {
    #[error("need at least 2 traces, got {0}")]
    TooFewTraces(usize),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error("trace distance: {0}")]
    Metric(#[from] crate::metrics::MetricError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("seed program: {0}")]
    Seed(String),
}

/// Everything about a trace set and library that does not depend on the
/// candidate, computed once.
pub struct FitnessContext<'a> {
    traces: &'a [Trace],
    views: Vec<TraceView>,
    annotations: Vec<Annotation>,
    d_x: Vec<(usize, usize, f64)>,
    library_hists: Vec<Vec<Histogram>>,
    mu: f64,
    pub bins: usize,
}

impl<'a> FitnessContext<'a> {
    pub fn new(traces: &'a [Trace], library: &PatternLibrary, bins: usize) -> Result<Self, EvolutionError> {
        if traces.len() < 2 {
            return Err(EvolutionError::TooFewTraces(traces.len()));
        }
        let views: Vec<TraceView> = traces.iter().map(TraceView::new).collect();
        let mut annotations = Vec::new();
        for (t, v) in traces.iter().zip(&views) {
            annotations.push(annotate_full(v, t, library)?);
        }
        let mut d_x = Vec::new();
        for l in 0..traces.len() {
            for m in l + 1..traces.len() {
                d_x.push((l, m, trace_distance(&traces[l], &traces[m], crate::metrics::DEFAULT_SAMPLES)?));
            }
        }
        let library_hists = annotations
            .iter()
            .map(|a| {
                a.matrix
                    .columns
                    .iter()
                    .map(|c| pattern_histogram(c, a.matrix.n_frames, bins))
                    .collect()
            })
            .collect();
        let costs: Vec<f64> = annotations
            .iter()
            .flat_map(|a| a.matrix.steps.iter().map(|&s| s as f64))
            .collect();
        let mu = if costs.is_empty() {
            0.0
        } else {
            costs.iter().sum::<f64>() / costs.len() as f64
        };
        Ok(FitnessContext {
            traces,
            views,
            annotations,
            d_x,
            library_hists,
            mu,
            bins,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Candidate activations per trace, or a reason it cannot be scored.
    pub fn activations(&self, candidate: &DetectorProgram) -> Result<(Vec<Vec<usize>>, f64), String> {
        let mut cols = Vec::new();
        let mut steps = 0u64;
        for ((t, v), a) in self.traces.iter().zip(&self.views).zip(&self.annotations) {
            let out = run_on_view(candidate, v, &a.context, DEFAULT_STEP_BUDGET).map_err(|e| e.to_string())?;
            let n = t.frames.len();
            let mut frames: Vec<usize> = out.events.iter().map(|e| frame_index(e.time, n)).collect();
            frames.sort_unstable();
            frames.dedup();
            cols.push(frames);
            steps += out.steps;
        }
        Ok((cols, steps as f64 / self.traces.len() as f64))
    }

    pub fn evaluate(&self, candidate: &DetectorProgram) -> FitnessReport {
        let (cols, cost) = match self.activations(candidate) {
            Ok(x) => x,
            Err(e) => return FitnessReport::degenerate(format!("runtime error: {e}")),
        };
        for (c, t) in cols.iter().zip(self.traces) {
            let n = t.frames.len().max(1);
            if c.len() as f64 > DEGENERATE_FIRE_RATE * n as f64 {
                return FitnessReport::degenerate(format!("fires on {} of {} frames", c.len(), n));
            }
        }
        if cols.iter().all(Vec::is_empty) {
            return FitnessReport::degenerate("never fires".into());
        }
        let b = self.bins;
        let mut pairs = Vec::new();
        for &(l, m, dx) in &self.d_x {
            let dp = column_distance(
                &cols[l],
                self.traces[l].frames.len(),
                &cols[m],
                self.traces[m].frames.len(),
                b,
            );
            pairs.push(PairDiagnostic { l, m, d_x: dx, d_p: dp });
        }
        let xs: Vec<f64> = pairs.iter().map(|p| p.d_x).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.d_p).collect();
        let rho = correlation(&xs, &ys).unwrap_or(0.0);
        let mut d_novel = Vec::new();
        for (k, c) in cols.iter().enumerate() {
            let h = pattern_histogram(c, self.traces[k].frames.len(), b);
            let lib = &self.library_hists[k];
            let v = if lib.is_empty() {
                symmetric_cross_entropy(&h, &Histogram::uniform(b))
            } else {
                lib.iter().map(|q| symmetric_cross_entropy(&h, q)).sum::<f64>() / lib.len() as f64
            };
            d_novel.push(v);
        }
        let raw = d_novel.iter().sum::<f64>() / d_novel.len() as f64;
        let eta = rescale_novelty(raw, b);
        let lambda = length_penalty(candidate.node_count);
        let psi = time_penalty(cost, self.mu);
        FitnessReport {
            rho,
            eta,
            lambda,
            psi,
            nu: rho + eta - lambda - psi,
            degenerate: false,
            reason: None,
            pairs,
            d_novel,
            cost,
            mu: self.mu,
        }
    }
}

pub fn evaluate_fitness(
    traces: &[Trace],
    candidate: &DetectorProgram,
    library: &PatternLibrary,
) -> Result<FitnessReport, EvolutionError> {
    Ok(FitnessContext::new(traces, library, crate::metrics::DEFAULT_BINS)?.evaluate(candidate))
}

/// What a mutator knows about the pattern being searched for.
#[derive(Clone, Debug, Default)]
pub struct MutationContext {
    pub label: String,
    pub description: String,
    pub library_summary: String,
}

pub trait Mutator {
    /// Proposes new detector source from parents; `None` when no proposal
    /// could be produced (counts against the budget).
    fn propose(&mut self, ctx: &MutationContext, parents: &[DetectorProgram], seed: u64) -> Option<String>;

    /// Whether calls must be serialized.
    fn is_serial(&self) -> bool {
        true
    }
}

pub struct GrammarMutator;

impl Mutator for GrammarMutator {
    fn propose(&mut self, _: &MutationContext, parents: &[DetectorProgram], seed: u64) -> Option<String> {
        Some(grammar_mutate(parents, seed))
    }

    fn is_serial(&self) -> bool {
        false
    }
}

/// Returns the first parent unchanged.
pub struct IdentityMutator;

impl Mutator for IdentityMutator {
    fn propose(&mut self, _: &MutationContext, parents: &[DetectorProgram], _: u64) -> Option<String> {
        parents.first().map(|p| p.source.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    pub islands: usize,
    pub prompt_size: usize,
    pub reset_period: usize,
    pub budget: usize,
    pub delta: f64,
    pub temperature: f64,
    pub seed: u64,
    pub bins: usize,
    pub island_capacity: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            islands: 4,
            prompt_size: 2,
            reset_period: 50,
            budget: 500,
            delta: 0.3,
            temperature: 0.1,
            seed: 0,
            bins: crate::metrics::DEFAULT_BINS,
            island_capacity: 32,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        let bad = |m: &str| Err(EvolutionError::Config(m.to_string()));
        if self.islands < 2 {
            return bad("islands must be at least 2");
        }
        if self.prompt_size < 1 {
            return bad("prompt size must be at least 1");
        }
        if self.budget < self.islands {
            return bad("budget must be at least the number of islands");
        }
        if self.prompt_size > self.island_capacity {
            return bad("prompt size exceeds island capacity");
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        if self.reset_period == 0 {
            return bad("reset period must be positive");
        }
        if self.bins < 2 {
            return bad("need at least 2 bins");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Island {
    pub programs: Vec<(DetectorProgram, f64)>,
}

impl Island {
    pub fn best(&self) -> f64 {
        self.programs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max)
    }

    fn best_index(&self) -> usize {
        let mut k = 0;
        for (i, p) in self.programs.iter().enumerate() {
            if p.1 > self.programs[k].1 {
                k = i;
            }
        }
        k
    }

    /// The `s` highest-scoring programs, best first; ties keep insertion order.
    fn top(&self, s: usize) -> Vec<DetectorProgram> {
        let mut idx: Vec<usize> = (0..self.programs.len()).collect();
        idx.sort_by(|&a, &b| self.programs[b].1.total_cmp(&self.programs[a].1).then(a.cmp(&b)));
        idx.into_iter().take(s).map(|i| self.programs[i].0.clone()).collect()
    }

    fn insert(&mut self, p: DetectorProgram, nu: f64, capacity: usize) {
        let key = p.to_string();
        if self.programs.iter().any(|(q, _)| q.to_string() == key) {
            return;
        }
        self.programs.push((p, nu));
        if self.programs.len() > capacity {
            let mut worst = 0;
            for (i, q) in self.programs.iter().enumerate() {
                if q.1 < self.programs[worst].1 {
                    worst = i;
                }
            }
            self.programs.remove(worst);
        }
    }
}

/// Resets the worst half of the islands (by best score, ties by index) to a
/// single copy of the global best program; returns the reset indices.
pub fn reset_islands(islands: &mut [Island]) -> Vec<usize> {
    let (gi, gp) = global_best(islands);
    let best = islands[gi].programs[gp].clone();
    let mut order: Vec<usize> = (0..islands.len()).collect();
    order.sort_by(|&a, &b| islands[a].best().total_cmp(&islands[b].best()).then(a.cmp(&b)));
    let mut reset: Vec<usize> = order.into_iter().take(islands.len() / 2).collect();
    reset.sort_unstable();
    for &i in &reset {
        islands[i].programs = vec![best.clone()];
    }
    reset
}

fn global_best(islands: &[Island]) -> (usize, usize) {
    let mut gi = 0;
    for (i, isl) in islands.iter().enumerate() {
        if isl.best() > islands[gi].best() {
            gi = i;
        }
    }
    (gi, islands[gi].best_index())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub label: String,
    pub iteration: usize,
    pub island: usize,
    #[serde(with = "nu_serde")]
    pub nu: f64,
    pub rho: f64,
    pub eta: f64,
    pub lambda: f64,
    pub psi: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub best: DetectorProgram,
    pub nu: f64,
    pub best_report: Option<FitnessReport>,
    /// Global best score after each iteration.
    pub best_so_far: Vec<f64>,
    pub log: Vec<LogEntry>,
    pub resets: Vec<(usize, Vec<usize>)>,
}

fn sample_island(islands: &[Island], temperature: f64, rng: &mut ChaCha8Rng) -> usize {
    let scores: Vec<f64> = islands.iter().map(Island::best).collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return rng.gen_range(0..islands.len());
    }
    let weights: Vec<f64> = scores
        .iter()
        .map(|s| if s.is_finite() { ((s - max) / temperature).exp() } else { 0.0 })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut r = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if r < *w {
            return i;
        }
        r -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Island-model search starting from `g0`.
pub fn funsearch(
    evaluate: &mut dyn FnMut(&DetectorProgram) -> FitnessReport,
    g0: &DetectorProgram,
    mutator: &mut dyn Mutator,
    ctx: &MutationContext,
    config: &EvolutionConfig,
) -> Result<SearchResult, EvolutionError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let r0 = evaluate(g0);
    let nu0 = r0.nu;
    let mut islands: Vec<Island> = (0..config.islands)
        .map(|_| Island {
            programs: vec![(g0.clone(), nu0)],
        })
        .collect();
    let mut best = (g0.clone(), nu0, Some(r0));
    let mut best_so_far = Vec::with_capacity(config.budget);
    let mut log = Vec::new();
    let mut resets = Vec::new();
    for it in 0..config.budget {
        let k = sample_island(&islands, config.temperature, &mut rng);
        let parents = islands[k].top(config.prompt_size);
        let seed = rng.gen::<u64>();
        if let Some(src) = mutator.propose(ctx, &parents, seed) {
            if let Ok(p) = parse_detector(&src) {
                let r = evaluate(&p);
                let accepted = !r.degenerate;
                log.push(LogEntry {
                    label: ctx.label.clone(),
                    iteration: it,
                    island: k,
                    nu: r.nu,
                    rho: r.rho,
                    eta: r.eta,
                    lambda: r.lambda,
                    psi: r.psi,
                    accepted,
                });
                if accepted {
                    if r.nu > best.1 {
                        best = (p.clone(), r.nu, Some(r.clone()));
                    }
                    islands[k].insert(p, r.nu, config.island_capacity);
                }
            }
        }
        if (it + 1) % config.reset_period == 0 {
            resets.push((it, reset_islands(&mut islands)));
        }
        best_so_far.push(best.1);
    }
    Ok(SearchResult {
        best: best.0,
        nu: best.1,
        best_report: best.2,
        best_so_far,
        log,
        resets,
    })
}

/// `abstraction_NNNNNN`, derived from the label and canonical source.
pub fn abstraction_uid(label: &str, program: &DetectorProgram, taken: &PatternLibrary) -> String {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    h.update([0u8]);
    h.update(program.to_string().as_bytes());
    let d = h.finalize();
    let mut n = u64::from_be_bytes(d[..8].try_into().unwrap()) % 1_000_000;
    loop {
        let uid = format!("abstraction_{n:06}");
        if taken.get(&uid).is_none() {
            return uid;
        }
        n = (n + 1) % 1_000_000;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub label: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelOutcome {
    pub label: String,
    pub accepted: bool,
    pub uid: Option<String>,
    #[serde(with = "nu_serde")]
    pub nu: f64,
    pub source: String,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Discovery {
    pub library: PatternLibrary,
    pub outcomes: Vec<LabelOutcome>,
    pub log: Vec<LogEntry>,
}

/// Searches for one detector per label, adding each to the library when
/// its score exceeds the acceptance threshold.
pub fn discover(
    traces: &[Trace],
    labels: &[LabelSpec],
    g0: &DetectorProgram,
    mutator: &mut dyn Mutator,
    config: &EvolutionConfig,
    start: PatternLibrary,
) -> Result<Discovery, EvolutionError> {
    config.validate()?;
    let mut library = start;
    let mut outcomes = Vec::new();
    let mut log = Vec::new();
    for (k, spec) in labels.iter().enumerate() {
        let fc = FitnessContext::new(traces, &library, config.bins)?;
        let ctx = MutationContext {
            label: spec.label.clone(),
            description: spec.description.clone(),
            library_summary: library.summary(),
        };
        let cfg = EvolutionConfig {
            seed: config.seed.wrapping_add(k as u64),
            ..config.clone()
        };
        let mut eval = |p: &DetectorProgram| fc.evaluate(p);
        let result = funsearch(&mut eval, g0, mutator, &ctx, &cfg)?;
        log.extend(result.log.iter().cloned());
        let mut outcome = LabelOutcome {
            label: spec.label.clone(),
            accepted: false,
            uid: None,
            nu: result.nu,
            source: result.best.to_string(),
            error: None,
        };
        if result.nu > config.delta {
            let uid = abstraction_uid(&spec.label, &result.best, &library);
            let d = PatternDetector {
                uid: uid.clone(),
                label: spec.label.clone(),
                description: spec.description.clone(),
                origin: Origin::Guided,
                program: parse_detector(&result.best.to_string()).expect("best program reparses"),
            };
            match library.push(d) {
                Ok(()) => {
                    outcome.accepted = true;
                    outcome.uid = Some(uid);
                }
                Err(e) => outcome.error = Some(e.to_string()),
            }
        }
        outcomes.push(outcome);
    }
    Ok(Discovery { library, outcomes, log })
}

/// Traces of a ball dropped toward a static bar that sits either under
/// the drop point (even index, a collision happens) or off to the side
/// (odd index, the ball falls freely for the whole run).
pub fn planted_family(n: usize, seed: u64) -> Vec<Trace> {
    use crate::geom::{rect, Vec2};
    use crate::sim::{simulate, SimConfig};
    use crate::trace::{Action, Color, Scene, SceneObject, Shape, ShapeKind};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SimConfig {
        duration: 1.0,
        timesteps: 60,
        ..SimConfig::default()
    };
    (0..n)
        .map(|k| {
            let x = 80.0 + rng.gen_range(-1.0..1.0);
            let bx = if k % 2 == 0 { x } else { x + 120.0 };
            let bar = SceneObject {
                description: SceneObject::describe(Color::Black, ShapeKind::Bar, 0),
                id: 0,
                kind: ShapeKind::Bar,
                color: Color::Black,
                velocity: Vec2::ZERO,
                angle: 0.0,
                is_static: true,
                shape: Shape::Polygons(vec![rect(Vec2::new(bx - 30.0, 164.0), Vec2::new(bx + 30.0, 170.0))]),
            };
            let scene = Scene { objects: vec![bar] };
            simulate(&scene, &Action::new(x, 200.0, 8.0), &cfg).expect("valid planted scene")
        })
        .collect()
}

#[cfg(test)]
mod tests;
