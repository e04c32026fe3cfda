//! Argument definitions and dispatch for the `patternlab` binary.

use std::fmt;
use std::path::PathBuf;

use clap::builder::PossibleValuesParser;
use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod util;

pub use util::par_map;

#[derive(Parser, Debug)]
#[command(name = "patternlab", version, about = "Event-pattern discovery, trace annotation and reward optimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Roll out one action in a scene and write the trace
    Simulate(SimulateArgs),
    /// Annotate traces with a pattern library
    Annotate(AnnotateArgs),
    /// Pairwise trace and annotation distances
    Metrics(MetricsArgs),
    /// Evolve one detector for a label
    Evolve(EvolveArgs),
    /// Evolve detectors for a list of labels and grow a library
    Discover(DiscoverArgs),
    /// Parse, evaluate or synthesize reward programs
    #[command(subcommand)]
    Reward(RewardCommand),
    /// Search for an action that maximizes a reward program
    Optimize(OptimizeArgs),
    /// Answer template questions or generate a question benchmark
    #[command(subcommand)]
    Qa(QaCommand),
    /// Remove a pattern and its dependents from a library
    Ablate(AblateArgs),
    /// Rasterize trace frames to PPM images
    Render(RenderArgs),
}

#[derive(Subcommand, Debug)]
pub enum RewardCommand {
    /// Parse a program and print its canonical form
    Parse(RewardParseArgs),
    /// Evaluate a program on an annotated trace
    Eval(RewardEvalArgs),
    /// Ask a language model backend for a program
    Synthesize(RewardSynthesizeArgs),
}

#[derive(Subcommand, Debug)]
pub enum QaCommand {
    /// Answer one question about a trace
    Answer(QaAnswerArgs),
    /// Generate question/answer items over template scenes
    Generate(QaGenerateArgs),
}

fn template_parser() -> PossibleValuesParser {
    PossibleValuesParser::new(patternlab::sim::template_ids())
}

#[derive(Args, Debug, Clone)]
pub struct SceneArgs {
    /// Scene template id
    #[arg(long, value_parser = template_parser(), required_unless_present = "scene", conflicts_with = "scene")]
    pub template: Option<String>,
    /// Template parameter override; repeatable
    #[arg(long = "param", value_name = "NAME=VALUE", value_parser = util::parse_param)]
    pub params: Vec<(String, f64)>,
    /// Scene JSON file used instead of a template
    #[arg(long, value_name = "FILE")]
    pub scene: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SimArgs {
    /// Number of recorded frames
    #[arg(long)]
    pub timesteps: Option<usize>,
    /// Simulated seconds
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Seed for the template's position jitter
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Red ball placement
    #[arg(long, value_name = "X,Y,R", value_parser = util::parse_action)]
    pub action: patternlab::trace::Action,
    /// Output trace file; printed to standard output when omitted
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnnotateArgs {
    /// Trace files or directories of *.json traces
    #[arg(long = "trace", value_name = "PATH", required = true, num_args = 1..)]
    pub traces: Vec<PathBuf>,
    /// Library JSON; the built-in guided library when omitted
    #[arg(long, value_name = "FILE")]
    pub library: Option<PathBuf>,
    /// Output file for a single trace; printed to standard output when omitted
    #[arg(long, value_name = "FILE", conflicts_with = "out_dir")]
    pub out: Option<PathBuf>,
    /// Output directory, one <stem>.ast.json per trace
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Print a frame-by-pattern text table instead of JSON
    #[arg(long)]
    pub table: bool,
    /// Worker threads across traces
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Trace files or directories of *.json traces (two or more in total)
    #[arg(long = "trace", value_name = "PATH", required = true, num_args = 1..)]
    pub traces: Vec<PathBuf>,
    /// Library JSON; the built-in guided library when omitted
    #[arg(long, value_name = "FILE")]
    pub library: Option<PathBuf>,
    /// Histogram bins for annotation distances
    #[arg(long, default_value_t = patternlab::metrics::DEFAULT_BINS)]
    pub bins: usize,
    /// Time samples for trace distances
    #[arg(long, default_value_t = patternlab::metrics::DEFAULT_SAMPLES)]
    pub samples: usize,
    /// Worker threads across traces
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BackendSpec {
    Grammar,
    Http,
    Mock(Option<PathBuf>),
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Grammar => write!(f, "grammar"),
            BackendSpec::Http => write!(f, "http"),
            BackendSpec::Mock(None) => write!(f, "mock"),
            BackendSpec::Mock(Some(p)) => write!(f, "mock:{}", p.display()),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SearchArgs {
    /// Number of islands
    #[arg(long, default_value_t = 4)]
    pub islands: usize,
    /// Parents shown per proposal
    #[arg(long, default_value_t = 2)]
    pub prompt_size: usize,
    /// Iterations between island resets
    #[arg(long, default_value_t = 50)]
    pub reset_period: usize,
    /// Proposals per label
    #[arg(long, default_value_t = 500)]
    pub budget: usize,
    /// Acceptance threshold on the fitness score
    #[arg(long, default_value_t = 0.3)]
    pub delta: f64,
    /// Island sampling temperature
    #[arg(long, default_value_t = 0.1)]
    pub temperature: f64,
    /// Histogram bins used by the fitness
    #[arg(long, default_value_t = patternlab::metrics::DEFAULT_BINS)]
    pub bins: usize,
    /// Seed for island sampling and mutation
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Initial detector source file; a generic motion detector when omitted
    #[arg(long, value_name = "FILE")]
    pub g0: Option<PathBuf>,
    /// Proposal source: grammar, http, mock or mock:<transcript.json>
    #[arg(long, default_value = "grammar", value_parser = util::parse_backend)]
    pub backend: BackendSpec,
    /// Fitness log, one JSON object per line
    #[arg(long, value_name = "FILE")]
    pub log: Option<PathBuf>,
    /// Language model exchange records (hashes only) as JSON
    #[arg(long, value_name = "FILE")]
    pub records: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvolveArgs {
    /// Trace files or directories of *.json traces
    #[arg(long = "trace", value_name = "PATH", required = true, num_args = 1..)]
    pub traces: Vec<PathBuf>,
    /// Pattern label
    #[arg(long)]
    pub label: String,
    /// Pattern description
    #[arg(long, default_value = "")]
    pub description: String,
    /// Existing library the candidate is compared against; empty when omitted
    #[arg(long, value_name = "FILE")]
    pub library: Option<PathBuf>,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Output file for the best detector source
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DiscoverArgs {
    /// Trace files or directories of *.json traces
    #[arg(long = "traces", visible_alias = "trace", value_name = "PATH", required = true, num_args = 1..)]
    pub traces: Vec<PathBuf>,
    /// JSON array of {"label", "description"} objects
    #[arg(long, value_name = "FILE")]
    pub labels: PathBuf,
    /// Starting library; empty when omitted
    #[arg(long, value_name = "FILE")]
    pub library: Option<PathBuf>,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Output library file
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Run manifest with seeds, configuration and inputs
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RewardParseArgs {
    /// Reward program file
    #[arg(long, value_name = "FILE")]
    pub program: PathBuf,
    /// Library used to check identifiers
    #[arg(long, value_name = "FILE")]
    pub library: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RewardEvalArgs {
    /// Reward program file
    #[arg(long, value_name = "FILE")]
    pub program: PathBuf,
    /// Annotated trace from `annotate`
    #[arg(long, value_name = "FILE")]
    pub ast: PathBuf,
    /// Trace file; the annotation's trace_ref when omitted
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RewardSynthesizeArgs {
    /// Goal in plain language
    #[arg(long, required_unless_present = "goal_file")]
    pub goal: Option<String>,
    /// File holding the goal text
    #[arg(long, value_name = "FILE", conflicts_with = "goal")]
    pub goal_file: Option<PathBuf>,
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Seed for the template's position jitter
    #[arg(long, default_value_t = 0)]
    pub scene_seed: u64,
    /// Library JSON; the built-in guided library when omitted
    #[arg(long, value_name = "FILE")]
    pub library: Option<PathBuf>,
    /// Language model backend: http, mock or mock:<transcript.json>
    #[arg(long, value_parser = util::parse_backend)]
    pub backend: BackendSpec,
    /// Repair rounds after a rejected program
    #[arg(long, default_value_t = 3)]
    pub retries: usize,
    /// Output program file
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Exchange records (hashes only) as JSON
    #[arg(long, value_name = "FILE")]
    pub records: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Dense,
    Binary,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    /// Reward program file
    #[arg(long, value_name = "FILE")]
    pub program: PathBuf,
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Seed for the template's position jitter
    #[arg(long, default_value_t = 0)]
    pub scene_seed: u64,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Library JSON used to annotate rollouts; the guided library when omitted
    #[arg(long, value_name = "FILE")]
    pub library: Option<PathBuf>,
    /// Simulations per run
    #[arg(long, default_value_t = 250)]
    pub samples: usize,
    /// Annealer seed; run k uses seed + k
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independent runs
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Score with partial credit or with 0/1 satisfaction
    #[arg(long, value_enum, default_value_t = Mode::Dense)]
    pub mode: Mode,
    /// Initial annealing temperature
    #[arg(long, default_value_t = 0.5)]
    pub t0: f64,
    /// Geometric cooling factor
    #[arg(long, default_value_t = 0.995)]
    pub cooling: f64,
    /// Success target for the green ball at the end of the rollout
    #[arg(long, value_name = "X,Y", value_parser = util::parse_point)]
    pub target: Option<patternlab::geom::Vec2>,
    /// Output file for the first run's sample history
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Output file for the first run's best rollout
    #[arg(long, value_name = "FILE")]
    pub trace_out: Option<PathBuf>,
    /// Score heatmap of the first run as JSON
    #[arg(long, value_name = "FILE")]
    pub heatmap: Option<PathBuf>,
    /// Score heatmap of the first run as a PPM image
    #[arg(long, value_name = "FILE")]
    pub heatmap_ppm: Option<PathBuf>,
    /// Heatmap cells per axis
    #[arg(long, default_value_t = 16)]
    pub heatmap_bins: usize,
    /// Worker threads across runs
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct QaAnswerArgs {
    /// Trace file
    #[arg(long, value_name = "FILE")]
    pub trace: PathBuf,
    /// Question template, C1 to C27
    #[arg(long, value_name = "ID", value_parser = util::parse_template)]
    pub question: patternlab::query::Template,
    /// Object color slot
    #[arg(long, value_parser = util::parse_color)]
    pub color: Option<patternlab::trace::Color>,
    /// Second object color slot
    #[arg(long, value_parser = util::parse_color)]
    pub other: Option<patternlab::trace::Color>,
    /// Window start, normalized time
    #[arg(long)]
    pub t0: Option<f64>,
    /// Window end, normalized time
    #[arg(long)]
    pub t1: Option<f64>,
    /// Split time, normalized
    #[arg(long)]
    pub split: Option<f64>,
    /// Pattern uid or label
    #[arg(long)]
    pub pattern: Option<String>,
    /// Library for pattern questions; the guided library when omitted
    #[arg(long, value_name = "FILE")]
    pub library: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct QaGenerateArgs {
    /// Scene templates to draw from; all when omitted
    #[arg(long = "template", value_parser = template_parser())]
    pub templates: Vec<String>,
    /// Jittered scenes per template
    #[arg(long, default_value_t = 2)]
    pub scenes_per_template: usize,
    /// Questions per scene
    #[arg(long, default_value_t = 10)]
    pub per_scene: usize,
    /// Seed for scene jitter, near-miss actions and question sampling
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Library for pattern questions; the guided library when omitted
    #[arg(long, value_name = "FILE")]
    pub library: Option<PathBuf>,
    /// Leave out questions that need annotations
    #[arg(long)]
    pub no_patterns: bool,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Output file, one JSON item per line
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Worker threads across scenes
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Library JSON
    #[arg(long, value_name = "FILE")]
    pub library: PathBuf,
    /// Pattern uid to remove
    #[arg(long)]
    pub uid: String,
    /// Output library file
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Trace used to check that surviving columns are unchanged
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Trace file
    #[arg(long, value_name = "FILE")]
    pub trace: PathBuf,
    /// Directory receiving frame_NNNNN.ppm for every frame
    #[arg(long, value_name = "DIR", required_unless_present = "frame")]
    pub out_dir: Option<PathBuf>,
    /// Single frame index to render
    #[arg(long, requires = "out")]
    pub frame: Option<usize>,
    /// Output image for --frame
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

/// Failure of a command. Usage errors exit with 2, domain errors with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Domain(m) => write!(f, "{m}"),
        }
    }
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Domain(e.to_string())
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Annotate(a) => commands::annotate(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Evolve(a) => commands::evolve(a),
        Command::Discover(a) => commands::discover(a),
        Command::Reward(RewardCommand::Parse(a)) => commands::reward_parse(a),
        Command::Reward(RewardCommand::Eval(a)) => commands::reward_eval(a),
        Command::Reward(RewardCommand::Synthesize(a)) => commands::reward_synthesize(a),
        Command::Optimize(a) => commands::optimize(a),
        Command::Qa(QaCommand::Answer(a)) => commands::qa_answer(a),
        Command::Qa(QaCommand::Generate(a)) => commands::qa_generate(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Render(a) => commands::render(a),
    }
}
