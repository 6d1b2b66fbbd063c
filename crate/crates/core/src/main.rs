use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tessera::engine::{Copies, EngineConfig, InitKind, Mode, OutputCombination, TransformKind};
use tessera::runner::{self, parse_size, RunRequest, RunnerError};

#[derive(Parser)]
#[command(name = "tessera", version, about = "Tile-rearrangement image synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate images and write them with a manifest.
    Run(Box<RunArgs>),
    /// Re-check a run directory against its manifest.
    Verify {
        dir: PathBuf,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Serve the mock denoiser and codec over HTTP.
    ServeMock(ServeArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON or TOML run file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Repeat once per prompt.
    #[arg(long = "prompt")]
    prompts: Vec<String>,
    /// Source image(s) for fixed modes.
    #[arg(long = "source")]
    sources: Vec<PathBuf>,
    /// Tiles per side for the permutation transform.
    #[arg(long, conflicts_with_all = ["rings", "flip_divisions"])]
    tiles: Option<usize>,
    /// Ring count for the ring-rotation transform.
    #[arg(long, conflicts_with = "flip_divisions")]
    rings: Option<usize>,
    /// Angular step of ring rotations, in degrees.
    #[arg(long)]
    ring_step: Option<u32>,
    /// Comma-separated block divisions for the flip transform.
    #[arg(long, value_delimiter = ',')]
    flip_divisions: Option<Vec<usize>>,
    /// Copies allowed per source tile.
    #[arg(long, conflicts_with = "copies_map")]
    copies: Option<usize>,
    /// Comma-separated per-tile copy counts.
    #[arg(long, value_delimiter = ',')]
    copies_map: Option<Vec<usize>>,
    #[arg(long)]
    mainline_steps: Option<usize>,
    #[arg(long)]
    rollout_steps: Option<usize>,
    #[arg(long)]
    mixing_ratio: Option<f64>,
    #[arg(long)]
    guidance_scale: Option<f64>,
    /// `mock:target=a.png,...` or an `http(s)://` URL.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    emit_contact_sheet: bool,
    /// Image size `HxW` for free modes.
    #[arg(long)]
    size: Option<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, value_parser = parse_init)]
    init: Option<InitKind>,
    #[arg(long)]
    no_dynamic_matching: bool,
    #[arg(long, value_parser = parse_combination)]
    output_combination: Option<OutputCombination>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8040")]
    addr: String,
    /// `PROMPT=FILE`, repeated per prompt.
    #[arg(long = "target", required = true, value_parser = parse_target)]
    targets: Vec<(String, PathBuf)>,
    #[arg(long, default_value_t = 1.0)]
    pull: f64,
    /// Codec downsampling factor.
    #[arg(long, default_value_t = 1)]
    scale: usize,
    #[arg(long, default_value_t = 4)]
    threads: usize,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.replace('-', "_").parse().map_err(|e: tessera::engine::EngineError| e.to_string())
}

fn parse_init(s: &str) -> Result<InitKind, String> {
    match s {
        "random" => Ok(InitKind::Random),
        "identity" => Ok(InitKind::Identity),
        _ => Err(format!("unknown init {s:?}; use random or identity")),
    }
}

fn parse_combination(s: &str) -> Result<OutputCombination, String> {
    match s.replace('-', "_").as_str() {
        "averaged" => Ok(OutputCombination::Averaged),
        "first_rollout" => Ok(OutputCombination::FirstRollout),
        _ => Err(format!("unknown output combination {s:?}; use averaged or first_rollout")),
    }
}

fn parse_target(s: &str) -> Result<(String, PathBuf), String> {
    s.split_once('=')
        .map(|(p, f)| (p.to_string(), PathBuf::from(f)))
        .ok_or_else(|| format!("target {s:?} is not PROMPT=FILE"))
}

impl RunArgs {
    fn into_request(self) -> Result<RunRequest, RunnerError> {
        let mut req = match &self.config {
            Some(path) => RunRequest::from_file(path)?,
            None => RunRequest {
                engine: EngineConfig::default(),
                sources: Vec::new(),
                backend: String::new(),
                backend_base: PathBuf::new(),
                out: PathBuf::from("out"),
                emit_contact_sheet: false,
                size: None,
                workers: 0,
            },
        };
        let e = &mut req.engine;
        if let Some(m) = self.mode {
            e.mode = m;
        }
        if !self.prompts.is_empty() {
            e.prompts = self.prompts;
        }
        if let Some(m) = self.tiles {
            e.transform = TransformKind::Permutation;
            e.tiles = m;
        }
        if let Some(r) = self.rings {
            e.transform = TransformKind::Rings;
            e.rings = r;
        }
        if let Some(s) = self.ring_step {
            e.ring_step = s;
        }
        if let Some(d) = self.flip_divisions {
            e.transform = TransformKind::Flips;
            e.flip_divisions = d;
        }
        if let Some(c) = self.copies {
            e.copies = Some(Copies::Uniform(c));
        }
        if let Some(v) = self.copies_map {
            e.copies = Some(Copies::PerTile(v));
        }
        if let Some(s) = self.mainline_steps {
            e.mainline_steps = s;
        }
        if let Some(s) = self.rollout_steps {
            e.rollout_steps = Some(s);
        }
        if let Some(r) = self.mixing_ratio {
            e.mixing_ratio = r;
        }
        if let Some(g) = self.guidance_scale {
            e.guidance_scale = g;
        }
        if let Some(s) = self.seed {
            e.seed = s;
        }
        if let Some(i) = self.init {
            e.init = i;
        }
        if self.no_dynamic_matching {
            e.dynamic_matching = false;
        }
        if let Some(c) = self.output_combination {
            e.output_combination = c;
        }
        if !self.sources.is_empty() {
            req.sources = self.sources;
        }
        if let Some(b) = self.backend {
            req.backend = b;
            req.backend_base = PathBuf::new();
        }
        if let Some(o) = self.out {
            req.out = o;
        }
        req.emit_contact_sheet |= self.emit_contact_sheet;
        if let Some(s) = self.size {
            req.size = Some(parse_size(&s)?);
        }
        req.workers = self.workers;
        Ok(req)
    }
}

fn execute(command: Command) -> Result<(), RunnerError> {
    match command {
        Command::Run(args) => {
            let report = runner::run(&args.into_request()?)?;
            println!(
                "wrote {} image(s) to {} (changes per step: {:?})",
                report.manifest.outputs.len(),
                report.out.display(),
                report.manifest.change_trace
            );
            Ok(())
        }
        Command::Verify { dir, json } => {
            let report = runner::verify(&dir)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                for c in &report.checks {
                    println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
                }
            }
            if report.passed() {
                Ok(())
            } else {
                let failed = report.checks.iter().filter(|c| !c.passed).count();
                Err(RunnerError::VerifyFailed(format!("{failed} check(s) failed")))
            }
        }
        Command::ServeMock(args) => {
            let server = runner::serve_mock(&args.addr, &args.targets, args.pull, args.scale, args.threads)?;
            println!("serving mock backend on {}", server.url());
            server.join();
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
