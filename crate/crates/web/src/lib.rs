//! Browser demo: simulate a template scene, play it back, score a reward
//! program against it, and ask questions about it.

use patternlab::annotate::{annotate, guided_library, AnnotationMatrix, PatternLibrary};
use patternlab::query::{answer, QuestionArgs, QuestionInstance, Template};
use patternlab::render::render_frame;
use patternlab::reward::{eval_partial, parse_reward, EvalContext};
use patternlab::sim::{build_scene, simulate, task_success, template_ids, SceneTemplate, SimConfig};
use patternlab::trace::{parse_json, Action, Trace};
use serde_json::json;
use wasm_bindgen::prelude::*;

pub struct Session {
    library: PatternLibrary,
    trace: Option<(Trace, AnnotationMatrix)>,
}

impl Default for Session {
    fn default() -> Self {
        Session {
            library: guided_library(),
            trace: None,
        }
    }
}

impl Session {
    fn current(&self) -> Result<&(Trace, AnnotationMatrix), String> {
        self.trace.as_ref().ok_or_else(|| "run a simulation first".to_string())
    }

    /// Simulates and annotates; returns a JSON summary.
    pub fn run(&mut self, template: &str, seed: u64, action: Action, timesteps: usize) -> Result<String, String> {
        let scene = build_scene(&SceneTemplate::new(template, seed)).map_err(|e| e.to_string())?;
        let cfg = SimConfig {
            timesteps,
            ..SimConfig::default()
        };
        let trace = simulate(&scene, &action, &cfg).map_err(|e| e.to_string())?;
        let matrix = annotate(&trace, &self.library).map_err(|e| e.to_string())?;
        let patterns: Vec<_> = matrix
            .uids
            .iter()
            .zip(&matrix.columns)
            .filter(|(_, c)| !c.is_empty())
            .map(|(u, c)| json!({"uid": u, "first_frame": c[0], "frames": c.len()}))
            .collect();
        let summary = json!({
            "frames": trace.frames.len(),
            "events": trace.events.len(),
            "task_success": task_success(&trace),
            "patterns": patterns,
        });
        self.trace = Some((trace, matrix));
        Ok(summary.to_string())
    }

    pub fn frames(&self) -> usize {
        self.trace.as_ref().map_or(0, |t| t.0.frames.len())
    }

    /// RGBA pixels of one frame, top row first.
    pub fn rgba(&self, k: usize) -> Result<Vec<u8>, String> {
        let (trace, _) = self.current()?;
        let frame = trace.frames.get(k).ok_or_else(|| format!("frame {k} out of range"))?;
        let img = render_frame(trace, frame);
        Ok(img.pixels.iter().flat_map(|p| [p[0], p[1], p[2], 255]).collect())
    }

    pub fn score(&self, program: &str) -> Result<String, String> {
        let (trace, _) = self.current()?;
        let program = parse_reward(program).map_err(|e| e.to_string())?;
        let ctx = EvalContext::from_library(trace, &self.library).map_err(|e| e.to_string())?;
        let eval = eval_partial(&program, &ctx).map_err(|e| e.to_string())?;
        serde_json::to_string(&eval).map_err(|e| e.to_string())
    }

    /// `args` is a JSON object with any of color, other, t0, t1, split, pattern.
    pub fn ask(&self, template: &str, args: &str) -> Result<String, String> {
        let (trace, matrix) = self.current()?;
        let t: Template = template.parse().map_err(|e: patternlab::query::QueryError| e.to_string())?;
        let args: QuestionArgs = parse_json(args.as_bytes()).map_err(|e| e.to_string())?;
        let q = QuestionInstance::new(t, args).map_err(|e| e.to_string())?;
        let a = answer(&q, trace, Some(matrix)).map_err(|e| e.to_string())?;
        Ok(json!({"question": q.render(), "answer": a}).to_string())
    }
}

#[wasm_bindgen]
pub struct Demo(Session);

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Demo {
        Demo(Session::default())
    }

    pub fn templates() -> String {
        template_ids().join(",")
    }

    pub fn simulate(&mut self, template: &str, seed: u32, x: f64, y: f64, r: f64, timesteps: u32) -> Result<String, JsError> {
        self.0.run(template, seed as u64, Action::new(x, y, r), timesteps as usize).map_err(|e| JsError::new(&e))
    }

    pub fn frames(&self) -> usize {
        self.0.frames()
    }

    pub fn frame_rgba(&self, k: usize) -> Result<Vec<u8>, JsError> {
        self.0.rgba(k).map_err(|e| JsError::new(&e))
    }

    pub fn score(&self, program: &str) -> Result<String, JsError> {
        self.0.score(program).map_err(|e| JsError::new(&e))
    }

    pub fn ask(&self, template: &str, args: &str) -> Result<String, JsError> {
        self.0.ask(template, args).map_err(|e| JsError::new(&e))
    }
}

impl Default for Demo {
    fn default() -> Self {
        Demo::new()
    }
}
