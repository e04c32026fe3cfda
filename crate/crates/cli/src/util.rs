use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use patternlab::annotate::{guided_library, PatternLibrary};
use patternlab::geom::Vec2;
use patternlab::query::Template;
use patternlab::sim::{build_scene, SceneTemplate, SimConfig};
use patternlab::trace::{parse_json, parse_trace, Action, Color, Scene, Trace};
use serde::Serialize;

use crate::{BackendSpec, CliError, SceneArgs, SimArgs};

fn floats(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let v: Result<Vec<f64>, _> = s.split(',').map(|p| p.trim().parse::<f64>()).collect();
    match v {
        Ok(v) if v.len() == n => Ok(v),
        Ok(_) => Err(format!("expected {n} comma-separated numbers")),
        Err(e) => Err(e.to_string()),
    }
}

pub fn parse_action(s: &str) -> Result<Action, String> {
    let v = floats(s, 3)?;
    Ok(Action::new(v[0], v[1], v[2]))
}

pub fn parse_point(s: &str) -> Result<Vec2, String> {
    let v = floats(s, 2)?;
    Ok(Vec2::new(v[0], v[1]))
}

pub fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected NAME=VALUE")?;
    Ok((k.trim().to_string(), v.trim().parse::<f64>().map_err(|e| e.to_string())?))
}

pub fn parse_template(s: &str) -> Result<Template, String> {
    s.parse::<Template>().map_err(|e| e.to_string())
}

pub fn parse_color(s: &str) -> Result<Color, String> {
    s.parse::<Color>().map_err(|e| e.to_string())
}

pub fn parse_backend(s: &str) -> Result<BackendSpec, String> {
    match s {
        "grammar" => Ok(BackendSpec::Grammar),
        "http" => Ok(BackendSpec::Http),
        "mock" => Ok(BackendSpec::Mock(None)),
        _ => match s.strip_prefix("mock:") {
            Some(p) if !p.is_empty() => Ok(BackendSpec::Mock(Some(PathBuf::from(p)))),
            _ => Err("expected grammar, http, mock or mock:<transcript.json>".into()),
        },
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Domain(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

pub fn read_trace(path: &Path) -> Result<Trace, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    parse_trace(&bytes).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

/// Expands directories to their `*.json` files, sorted by name.
pub fn trace_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| CliError::Domain(format!("{}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json") && !f.to_string_lossy().ends_with(".ast.json"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(CliError::Domain("no trace files found".into()));
    }
    Ok(out)
}

pub fn read_traces(inputs: &[PathBuf]) -> Result<(Vec<PathBuf>, Vec<Trace>), CliError> {
    let paths = trace_paths(inputs)?;
    let traces = paths.iter().map(|p| read_trace(p)).collect::<Result<Vec<_>, _>>()?;
    Ok((paths, traces))
}

pub fn read_library(path: Option<&Path>) -> Result<PatternLibrary, CliError> {
    match path {
        Some(p) => PatternLibrary::from_json(&read_text(p)?).map_err(|e| CliError::Domain(format!("{}: {e}", p.display()))),
        None => Ok(guided_library()),
    }
}

pub fn read_library_or_empty(path: Option<&Path>) -> Result<PatternLibrary, CliError> {
    match path {
        Some(_) => read_library(path),
        None => Ok(PatternLibrary::new()),
    }
}

pub fn build(scene: &SceneArgs, seed: u64) -> Result<Scene, CliError> {
    if let Some(p) = &scene.scene {
        return parse_json::<Scene>(read_text(p)?.as_bytes()).map_err(|e| CliError::Domain(format!("{}: {e}", p.display())));
    }
    let id = scene.template.as_deref().ok_or_else(|| CliError::Usage("--template or --scene is required".into()))?;
    let mut t = SceneTemplate::new(id, seed);
    for (k, v) in &scene.params {
        t = t.with(k, *v);
    }
    Ok(build_scene(&t)?)
}

pub fn sim_config(a: &SimArgs) -> SimConfig {
    let mut c = SimConfig::default();
    if let Some(n) = a.timesteps {
        c.timesteps = n;
    }
    if let Some(d) = a.duration {
        c.duration = d;
    }
    c
}

/// Writes a line to standard output; a closed pipe is not an error.
pub fn emit(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

pub fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    emit(&serde_json::to_string_pretty(value)?)
}

/// Maps `f` over `items` on up to `jobs` threads; results keep input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(usize, &T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let mut out: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let f = &f;
        let workers: Vec<_> = (0..jobs)
            .map(|w| {
                s.spawn(move || {
                    items
                        .iter()
                        .enumerate()
                        .skip(w)
                        .step_by(jobs)
                        .map(|(i, t)| (i, f(i, t)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in workers {
            for (i, r) in h.join().expect("worker thread panicked") {
                out[i] = Some(r);
            }
        }
    });
    out.into_iter().map(|r| r.expect("every index is filled")).collect()
}
