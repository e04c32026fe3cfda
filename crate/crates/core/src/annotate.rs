//! Pattern library, dependency ordering and annotation of traces.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::detector::{
    parse_detector, run_on_view, AnnotationContext, DetectorError, DetectorProgram, RunError, TraceView,
    DEFAULT_STEP_BUDGET,
};
use crate::trace::{frame_index, is_builtin, Params, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Guided,
    Automatic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatternDetector {
    pub uid: String,
    pub label: String,
    pub description: String,
    pub origin: Origin,
    pub program: DetectorProgram,
}

impl PatternDetector {
    pub fn new(uid: &str, label: &str, description: &str, origin: Origin, source: &str) -> Result<Self, LibraryError> {
        let program = parse_detector(source).map_err(|error| LibraryError::Parse {
            uid: uid.to_string(),
            error,
        })?;
        Ok(PatternDetector {
            uid: uid.to_string(),
            label: label.to_string(),
            description: description.to_string(),
            origin,
            program,
        })
    }

    pub fn depends_on(&self) -> &[String] {
        &self.program.depends_on
    }
}

#[derive(Debug, PartialEq, thiserror::Error)]
pub enum LibraryError {
    #[error("duplicate detector uid `{0}`")]
    DuplicateUid(String),
    #[error("uid `{0}` is reserved for a built-in event")]
    ReservedUid(String),
    #[error("detector `{0}` has an empty label")]
    EmptyLabel(String),
    #[error("detector `{uid}`: {error}")]
    Parse { uid: String, error: DetectorError },
    #[error("detector `{uid}`: stored {field} does not match its program")]
    Mismatch { uid: String, field: &'static str },
    #[error("dependency cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("unknown detector uid `{0}`")]
    UnknownUid(String),
    #[error("detector `{uid}` failed: {error}")]
    Run { uid: String, error: RunError },
    #[error("library file: {0}")]
    Json(String),
}

/// On-disk form of one library entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryEntry {
    pub uid: String,
    pub label: String,
    #[serde(default)]
    pub description: String,
    pub origin: Origin,
    pub source: String,
    #[serde(default)]
    pub parameters_schema: BTreeMap<String, String>,
    #[serde(default)]
    pub depends_on: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PatternLibrary {
    detectors: Vec<PatternDetector>,
}

impl PatternLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, d: PatternDetector) -> Result<(), LibraryError> {
        if is_builtin(&d.uid) {
            return Err(LibraryError::ReservedUid(d.uid));
        }
        if d.label.trim().is_empty() {
            return Err(LibraryError::EmptyLabel(d.uid));
        }
        if self.get(&d.uid).is_some() {
            return Err(LibraryError::DuplicateUid(d.uid));
        }
        self.detectors.push(d);
        Ok(())
    }

    pub fn add(&mut self, uid: &str, label: &str, description: &str, origin: Origin, source: &str) -> Result<(), LibraryError> {
        self.push(PatternDetector::new(uid, label, description, origin, source)?)
    }

    pub fn get(&self, uid: &str) -> Option<&PatternDetector> {
        self.detectors.iter().find(|d| d.uid == uid)
    }

    pub fn by_label(&self, label: &str) -> Option<&PatternDetector> {
        self.detectors.iter().find(|d| d.label.eq_ignore_ascii_case(label))
    }

    pub fn iter(&self) -> impl Iterator<Item = &PatternDetector> {
        self.detectors.iter()
    }

    pub fn len(&self) -> usize {
        self.detectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detectors.is_empty()
    }

    pub fn uids(&self) -> Vec<String> {
        self.detectors.iter().map(|d| d.uid.clone()).collect()
    }

    pub fn entries(&self) -> Vec<LibraryEntry> {
        self.detectors
            .iter()
            .map(|d| LibraryEntry {
                uid: d.uid.clone(),
                label: d.label.clone(),
                description: d.description.clone(),
                origin: d.origin,
                source: d.program.source.clone(),
                parameters_schema: d.program.parameters_schema(),
                depends_on: d.program.depends_on.clone(),
            })
            .collect()
    }

    pub fn from_entries(entries: &[LibraryEntry]) -> Result<Self, LibraryError> {
        let mut lib = PatternLibrary::new();
        for e in entries {
            let d = PatternDetector::new(&e.uid, &e.label, &e.description, e.origin, &e.source)?;
            if !e.parameters_schema.is_empty() && e.parameters_schema != d.program.parameters_schema() {
                return Err(LibraryError::Mismatch {
                    uid: e.uid.clone(),
                    field: "parameters_schema",
                });
            }
            if !e.depends_on.is_empty() && e.depends_on != d.program.depends_on {
                return Err(LibraryError::Mismatch {
                    uid: e.uid.clone(),
                    field: "depends_on",
                });
            }
            lib.push(d)?;
        }
        Ok(lib)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries()).expect("library serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LibraryError> {
        let entries: Vec<LibraryEntry> = serde_json::from_str(text).map_err(|e| LibraryError::Json(e.to_string()))?;
        Self::from_entries(&entries)
    }

    /// One line per detector for prompts: `uid | label | params | description`.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for d in &self.detectors {
            let schema = serde_json::to_string(&d.program.parameters_schema()).unwrap_or_default();
            out.push_str(&format!("{} | {} | {} | {}\n", d.uid, d.label, schema, d.description));
        }
        out
    }
}

/// Topological order of the library; ties are broken by uid.
pub fn resolve_order(library: &PatternLibrary) -> Result<Vec<String>, LibraryError> {
    let uids: BTreeSet<&str> = library.iter().map(|d| d.uid.as_str()).collect();
    let mut deps: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for d in library.iter() {
        let inner = d
            .depends_on()
            .iter()
            .map(String::as_str)
            .filter(|u| uids.contains(u))
            .collect();
        deps.insert(d.uid.as_str(), inner);
    }
    let mut order = Vec::new();
    let mut done: BTreeSet<&str> = BTreeSet::new();
    loop {
        let ready: Option<&str> = deps
            .iter()
            .find(|(u, ds)| !done.contains(*u) && ds.iter().all(|d| done.contains(d)))
            .map(|(u, _)| *u);
        match ready {
            Some(u) => {
                done.insert(u);
                order.push(u.to_string());
            }
            None => break,
        }
    }
    if order.len() < deps.len() {
        // walk unresolved dependencies from the smallest stuck uid until one repeats
        let mut path: Vec<&str> = Vec::new();
        let mut cur = *deps.keys().find(|u| !done.contains(*u)).unwrap();
        while !path.contains(&cur) {
            path.push(cur);
            cur = *deps[cur].iter().find(|d| !done.contains(*d)).unwrap();
        }
        let start = path.iter().position(|u| *u == cur).unwrap();
        let mut cycle: Vec<String> = path[start..].iter().map(|s| s.to_string()).collect();
        cycle.push(cur.to_string());
        return Err(LibraryError::Cycle(cycle));
    }
    Ok(order)
}

/// Removes `uid` and everything that transitively depends on it.
pub fn ablate(library: &PatternLibrary, uid: &str) -> Result<PatternLibrary, LibraryError> {
    if library.get(uid).is_none() {
        return Err(LibraryError::UnknownUid(uid.to_string()));
    }
    let mut removed: BTreeSet<String> = BTreeSet::from([uid.to_string()]);
    loop {
        let before = removed.len();
        for d in library.iter() {
            if d.depends_on().iter().any(|u| removed.contains(u)) {
                removed.insert(d.uid.clone());
            }
        }
        if removed.len() == before {
            break;
        }
    }
    Ok(PatternLibrary {
        detectors: library.iter().filter(|d| !removed.contains(&d.uid)).cloned().collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedEvent {
    pub uid: String,
    pub label: String,
    pub time: f64,
    pub frame: usize,
    pub parameters: Params,
}

/// Sparse frame-by-pattern activation matrix plus the events behind it.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationMatrix {
    pub n_frames: usize,
    pub uids: Vec<String>,
    pub labels: Vec<String>,
    /// Sorted, distinct active frames per column.
    pub columns: Vec<Vec<usize>>,
    pub events: Vec<AnnotatedEvent>,
    /// Interpreter steps spent per column.
    pub steps: Vec<u64>,
}

impl AnnotationMatrix {
    pub fn empty(n_frames: usize) -> Self {
        AnnotationMatrix {
            n_frames,
            uids: Vec::new(),
            labels: Vec::new(),
            columns: Vec::new(),
            events: Vec::new(),
            steps: Vec::new(),
        }
    }

    pub fn n_patterns(&self) -> usize {
        self.uids.len()
    }

    pub fn index(&self, uid: &str) -> Option<usize> {
        self.uids.iter().position(|u| u == uid)
    }

    pub fn pattern_index(&self) -> BTreeMap<String, usize> {
        self.uids.iter().cloned().enumerate().map(|(j, u)| (u, j)).collect()
    }

    pub fn column(&self, uid: &str) -> Option<&[usize]> {
        self.index(uid).map(|j| self.columns[j].as_slice())
    }

    pub fn get(&self, frame: usize, j: usize) -> bool {
        self.columns.get(j).is_some_and(|c| c.binary_search(&frame).is_ok())
    }

    /// Adds a column from emitted events.
    pub fn push_column(&mut self, uid: &str, label: &str, events: &[crate::detector::EmittedEvent], steps: u64) {
        let n = self.n_frames;
        let mut frames: Vec<usize> = events.iter().map(|e| frame_index(e.time, n)).collect();
        frames.dedup();
        frames.sort_unstable();
        frames.dedup();
        self.uids.push(uid.to_string());
        self.labels.push(label.to_string());
        self.columns.push(frames);
        self.steps.push(steps);
        for e in events {
            self.events.push(AnnotatedEvent {
                uid: uid.to_string(),
                label: label.to_string(),
                time: e.time,
                frame: frame_index(e.time, n),
                parameters: e.parameters.clone(),
            });
        }
        sort_events(&mut self.events);
    }
}

fn sort_events(events: &mut [AnnotatedEvent]) {
    events.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then_with(|| a.label.cmp(&b.label))
            .then_with(|| a.uid.cmp(&b.uid))
            .then_with(|| {
                serde_json::to_string(&a.parameters)
                    .unwrap_or_default()
                    .cmp(&serde_json::to_string(&b.parameters).unwrap_or_default())
            })
    });
}

/// Result of annotating one trace, with the context later detectors can use.
pub struct Annotation {
    pub matrix: AnnotationMatrix,
    pub context: AnnotationContext,
    /// Columns that failed in lenient mode.
    pub failures: Vec<(String, RunError)>,
}

fn annotate_inner(view: &TraceView, trace: &Trace, library: &PatternLibrary, strict: bool) -> Result<Annotation, LibraryError> {
    let order = resolve_order(library)?;
    let mut ctx = AnnotationContext::from_trace(trace);
    let mut matrix = AnnotationMatrix::empty(trace.frames.len());
    let mut failures = Vec::new();
    for uid in order {
        let d = library.get(&uid).expect("ordered uid exists");
        match run_on_view(&d.program, view, &ctx, DEFAULT_STEP_BUDGET) {
            Ok(out) => {
                ctx.insert(&uid, &out.events);
                matrix.push_column(&uid, &d.label, &out.events, out.steps);
            }
            Err(error) if strict => return Err(LibraryError::Run { uid, error }),
            Err(error) => {
                ctx.insert(&uid, &[]);
                matrix.push_column(&uid, &d.label, &[], 0);
                failures.push((uid, error));
            }
        }
    }
    Ok(Annotation {
        matrix,
        context: ctx,
        failures,
    })
}

/// Runs every detector in dependency order; any detector error aborts.
pub fn annotate(trace: &Trace, library: &PatternLibrary) -> Result<AnnotationMatrix, LibraryError> {
    annotate_inner(&TraceView::new(trace), trace, library, true).map(|a| a.matrix)
}

/// Strict annotation reusing a prebuilt view; also returns the final context.
pub fn annotate_full(view: &TraceView, trace: &Trace, library: &PatternLibrary) -> Result<Annotation, LibraryError> {
    annotate_inner(view, trace, library, true)
}

/// Like [`annotate`], but a failing detector leaves an empty column.
pub fn annotate_lenient(trace: &Trace, library: &PatternLibrary) -> Result<Annotation, LibraryError> {
    annotate_inner(&TraceView::new(trace), trace, library, false)
}

/// `t=<time> <label> <parameters>` per event, in time order.
pub fn render_annotations(matrix: &AnnotationMatrix, library: &PatternLibrary) -> String {
    let mut events = matrix.events.clone();
    for e in &mut events {
        if let Some(d) = library.get(&e.uid) {
            e.label = d.label.clone();
        }
    }
    sort_events(&mut events);
    let mut out = String::new();
    for e in &events {
        let params = serde_json::to_string(&e.parameters).unwrap_or_default();
        out.push_str(&format!("t={:.3} {} {}\n", e.time, e.label, params));
    }
    out
}

fn rle(frames: &[usize]) -> Vec<[usize; 2]> {
    let mut runs: Vec<[usize; 2]> = Vec::new();
    for &f in frames {
        match runs.last_mut() {
            Some([start, len]) if *start + *len == f => *len += 1,
            _ => runs.push([f, 1]),
        }
    }
    runs
}

/// Annotated trace export: events plus run-length encoded columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AstExport {
    pub trace_ref: String,
    pub n_frames: usize,
    pub events: Vec<ExportEvent>,
    /// Per uid, `[start_frame, length]` runs of activation.
    pub matrix: BTreeMap<String, Vec<[usize; 2]>>,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportEvent {
    pub uid: String,
    pub label: String,
    pub time: f64,
    pub parameters: Params,
}

impl AstExport {
    pub fn new(trace_ref: &str, trace: &Trace, matrix: &AnnotationMatrix) -> Self {
        let mut events: Vec<ExportEvent> = trace
            .events
            .iter()
            .map(|e| ExportEvent {
                uid: e.uid.clone(),
                label: e.uid.clone(),
                time: e.time,
                parameters: e.parameters.clone(),
            })
            .chain(matrix.events.iter().map(|e| ExportEvent {
                uid: e.uid.clone(),
                label: e.label.clone(),
                time: e.time,
                parameters: e.parameters.clone(),
            }))
            .collect();
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        AstExport {
            trace_ref: trace_ref.to_string(),
            n_frames: matrix.n_frames,
            events,
            matrix: matrix.uids.iter().cloned().zip(matrix.columns.iter().map(|c| rle(c))).collect(),
            labels: matrix.uids.iter().cloned().zip(matrix.labels.iter().cloned()).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        crate::trace::to_canonical_json(self)
    }

    /// Active frames per uid, decoded from the run-length form.
    pub fn columns(&self) -> BTreeMap<String, Vec<usize>> {
        self.matrix
            .iter()
            .map(|(u, runs)| (u.clone(), runs.iter().flat_map(|[s, l]| *s..*s + *l).collect()))
            .collect()
    }
}

pub fn export_value(trace_ref: &str, trace: &Trace, matrix: &AnnotationMatrix) -> Value {
    json!(AstExport::new(trace_ref, trace, matrix))
}

/// Hand-written detectors for common patterns.
pub fn guided_library() -> PatternLibrary {
    let mut lib = PatternLibrary::new();
    for (uid, label, description, source) in GUIDED {
        lib.add(uid, label, description, Origin::Guided, source)
            .expect("guided detectors are valid");
    }
    lib
}

const GUIDED: [(&str, &str, &str, &str); 8] = [
    (
        "bounce",
        "bounce",
        "A moving object hits something and its vertical velocity reverses.",
        r#"DETECT bounce PARAMS {object_id: int} WHERE exists_object(o, dynamic, rising_edge(sign_flip(vel_y(o)) and event_active("CollisionStart", {a_id: o}))) EMIT {object_id: o}"#,
    ),
    (
        "collision",
        "collision",
        "Two objects come into contact.",
        r#"DETECT collision PARAMS {object_a: int, object_b: int} WHERE exists_object(a, any, exists_object(b, any, event_active("CollisionStart", {a_id: a, b_id: b}))) EMIT {object_a: a, object_b: b}"#,
    ),
    (
        "wall_hit",
        "wall hit",
        "A dynamic object starts touching a scene boundary.",
        r#"DETECT wall_hit PARAMS {object_id: int, wall_id: int} WHERE exists_object(o, dynamic, exists_object(w, boundary, event_active("CollisionStart", {a_id: o, b_id: w}))) EMIT {object_id: o, wall_id: w}"#,
    ),
    (
        "grid_transition",
        "grid transition",
        "A dynamic object moves into a new cell of a 10x10 grid.",
        r#"DETECT grid_transition PARAMS {object_id: int, col: int, row: int} WHERE exists_object(o, dynamic, changed(grid_cell(o, 10)) and frame() > 0) EMIT {object_id: o, col: grid_col(o, 10), row: grid_row(o, 10)}"#,
    ),
    (
        "free_fall",
        "free fall",
        "A dynamic object moves downward with no contacts for a sustained period.",
        r#"DETECT free_fall PARAMS {object_id: int} WHERE exists_object(o, dynamic, rising_edge(sustained(contacts(o) == 0 and vel_y(o) < -20, 0.05))) EMIT {object_id: o}"#,
    ),
    (
        "comes_to_rest",
        "comes to rest",
        "A dynamic object that was moving settles and stays still.",
        r#"DETECT comes_to_rest PARAMS {object_id: int} WHERE exists_object(o, dynamic, rising_edge(sustained(speed(o) < 2, 0.1)) and frame() > 30) EMIT {object_id: o}"#,
    ),
    (
        "launch",
        "launch",
        "A dynamic object gains speed quickly while moving upward.",
        r#"DETECT launch PARAMS {object_id: int} WHERE exists_object(o, dynamic, rising_edge(delta(speed(o)) > 15 and vel_y(o) > 10)) EMIT {object_id: o}"#,
    ),
    (
        "bounce_then_rest",
        "bounce then rest",
        "An object bounces and comes to rest shortly afterwards.",
        r#"DETECT bounce_then_rest PARAMS {object_id: int} WHERE exists_object(o, dynamic, within_after(event_active("bounce", {object_id: o}), event_active("comes_to_rest", {object_id: o}), 0.5)) EMIT {object_id: o}"#,
    ),
];
