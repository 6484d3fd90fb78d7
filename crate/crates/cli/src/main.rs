use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bimaug_core::buffer::ImageBuffer;
use bimaug_core::config::{parse_override, PipelineConfig, SynthesizerKind};
use bimaug_core::dataset::{
    augment_dataset, augment_episode, export_bundles, list_episodes, segment_dataset, validate_dataset, AugmentContext,
    Episode, IdentitySynthesizer, OutputLayout, OverlaySynthesizer, Synthesizer, ValidationInputs,
};
use bimaug_core::contact::EpisodeSegmentation;
use bimaug_core::geometry::JointVector;
use bimaug_core::render::{build_skeleton_scene, render_skeleton, tile_views, untile_views};
use bimaug_core::synthetic::{write_demo, DemoSpec};
use bimaug_core::{Arm, ArmPair};
use clap::{Parser, Subcommand};

/// Offline augmentation of bimanual demonstration datasets.
#[derive(Parser)]
#[command(name = "bimaug", version)]
struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Dotted config override, e.g. `--set anneal.max_iterations=200`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the skeleton images of one frame.
    RenderSkeleton {
        /// Episode directory name under the dataset root.
        #[arg(long)]
        episode: String,
        #[arg(long)]
        frame: usize,
        /// Joint override as JSON `{"left": [...], "right": [...]}`.
        #[arg(long)]
        joints: Option<String>,
        /// Render the commanded action instead of the joint state.
        #[arg(long)]
        action: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Contact segmentation labels for every episode (or one).
    Segment {
        #[arg(long)]
        episode: Option<String>,
        /// Defaults to `<output>/segmentation`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the augmented dataset, bundles, labels and audit log.
    Augment,
    /// Check a dataset. Defaults to the augmented output when it exists.
    Validate {
        dataset: Option<PathBuf>,
        /// Source dataset for the locality checks.
        #[arg(long)]
        source: Option<PathBuf>,
        /// Bundle directory for the label-image checks.
        #[arg(long)]
        bundles: Option<PathBuf>,
    },
    /// Write conditioning bundles only.
    ExportBundles {
        /// Defaults to `<output>/bundles`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tile 1 to 4 equally sized views into one 2x2 composite.
    Tile {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true, num_args = 1..=4)]
        inputs: Vec<PathBuf>,
    },
    /// Split a 2x2 composite back into views.
    Untile {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out_dir: PathBuf,
        input: PathBuf,
    },
    /// Write a synthetic demo workspace with a ready config.
    MakeDemo {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        episodes: usize,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 1)]
        cameras: usize,
        #[arg(long, default_value_t = 96)]
        side: u32,
        #[arg(long)]
        depth: bool,
    },
}

/// Outcome of a command that ran to completion.
enum Verdict {
    Ok,
    Invalid,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let path = cli.config.as_deref().context("--config is required for this command")?;
    let overrides = cli.set.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?;
    let mut cfg = PipelineConfig::load(path, &overrides)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn synthesizer(kind: SynthesizerKind) -> Box<dyn Synthesizer> {
    match kind {
        SynthesizerKind::Overlay => Box::new(OverlaySynthesizer),
        SynthesizerKind::Identity => Box::new(IdentitySynthesizer),
    }
}

fn parse_joints(text: &str) -> Result<ArmPair<JointVector>> {
    serde_json::from_str(text).context("--joints must be {\"left\": [...], \"right\": [...]}")
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn render_cmd(cfg: &PipelineConfig, episode: &str, frame: usize, joints: Option<&str>, action: bool, out: &Path) -> Result<Verdict> {
    let chains = cfg.load_chains()?;
    let cameras = cfg.load_cameras()?;
    let q = match joints {
        Some(text) => parse_joints(text)?,
        None => {
            let ep = Episode::load(&cfg.paths.dataset.join(episode))?;
            let f = ep.frame(frame).with_context(|| format!("episode {episode} has {} frames", ep.len()))?;
            if action {
                f.state().action.clone()
            } else {
                f.state().joints.clone()
            }
        }
    };
    let mut bad = false;
    for arm in Arm::BOTH {
        let chain = chains.get(arm);
        let v = q.get(arm);
        if v.len() != chain.dof() {
            eprintln!("{arm} arm: {} joint values, chain has {}", v.len(), chain.dof());
            bad = true;
        } else if let Some(j) = chain.first_limit_violation(v) {
            let l = chain.joints[j].limits;
            eprintln!("{arm} arm: joint {j} = {} outside [{}, {}]", v.0[j], l.lower, l.upper);
            bad = true;
        }
    }
    if bad {
        return Ok(Verdict::Invalid);
    }
    let scene = build_skeleton_scene(&chains, &q, &cfg.style)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (c, cam) in cameras.iter().enumerate() {
        let path = out.join(format!("cam{c}_skeleton.png"));
        render_skeleton(&scene, cam).0.save_png(&path)?;
        println!("{}", path.display());
    }
    Ok(Verdict::Ok)
}

fn segment_cmd(cfg: &PipelineConfig, episode: Option<&str>, out: Option<&Path>) -> Result<Verdict> {
    let layout = OutputLayout::new(&cfg.paths.output);
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| layout.segmentation());
    let segs = match episode {
        Some(name) => {
            let ep = Episode::load(&cfg.paths.dataset.join(name))?;
            vec![(name.to_string(), EpisodeSegmentation::segment(ep.id(), &ep.torques()?, &cfg.contact)?)]
        }
        None => segment_dataset(&cfg.paths.dataset, &cfg.contact)?,
    };
    for (name, seg) in &segs {
        write_json(&dir.join(format!("{name}.json")), &seg.to_label_json())?;
        let rich = seg.phases().iter().filter(|p| **p == bimaug_core::contact::Phase::ContactRich).count();
        println!("{name}: {rich} of {} frames contact-rich", seg.len());
    }
    Ok(Verdict::Ok)
}

fn augment_cmd(cfg: &PipelineConfig) -> Result<Verdict> {
    let chains = cfg.load_chains()?;
    let cameras = cfg.load_cameras()?;
    let synth = synthesizer(cfg.synthesizer);
    let summary = augment_dataset(
        &cfg.paths.dataset,
        &OutputLayout::new(&cfg.paths.output),
        &chains,
        &cameras,
        &cfg.sampler(),
        synth.as_ref(),
        &cfg.settings(),
        &cfg.contact,
        cfg.bundle_side,
        Some(&cfg.to_output_json()),
    )?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(Verdict::Ok)
}

fn validate_cmd(cfg: &PipelineConfig, dataset: Option<&Path>, source: Option<&Path>, bundles: Option<&Path>) -> Result<Verdict> {
    let chains = cfg.load_chains()?;
    let cameras = cfg.load_cameras()?;
    let layout = OutputLayout::new(&cfg.paths.output);
    let augmented = layout.dataset();
    let target = match dataset {
        Some(d) => d.to_path_buf(),
        None if augmented.is_dir() => augmented,
        None => cfg.paths.dataset.clone(),
    };
    let is_source = target == cfg.paths.dataset;
    let source = source.map(Path::to_path_buf).or_else(|| (!is_source).then(|| cfg.paths.dataset.clone()));
    let default_bundles = layout.bundles();
    let bundles = bundles
        .map(Path::to_path_buf)
        .or_else(|| (!is_source && default_bundles.join(bimaug_core::dataset::MANIFEST_FILE).is_file()).then_some(default_bundles));
    let inputs = ValidationInputs {
        chains: &chains,
        cameras: &cameras,
        style: &cfg.style,
        k: cfg.k,
        source: source.as_deref(),
        bundles: bundles.as_deref(),
    };
    let report = validate_dataset(&target, &inputs)?;
    for issue in &report.issues {
        println!("{issue}");
    }
    println!(
        "{}: {} episodes, {} frames, {} modified, {} issues",
        target.display(),
        report.episodes,
        report.frames,
        report.modified_frames,
        report.issues.len()
    );
    Ok(if report.is_ok() { Verdict::Ok } else { Verdict::Invalid })
}

fn export_cmd(cfg: &PipelineConfig, out: Option<&Path>) -> Result<Verdict> {
    let chains = cfg.load_chains()?;
    let cameras = cfg.load_cameras()?;
    let synth = synthesizer(cfg.synthesizer);
    let sampler = cfg.sampler();
    let settings = cfg.settings();
    let ctx = AugmentContext {
        chains: &chains,
        cameras: &cameras,
        sampler: &sampler,
        synthesizer: synth.as_ref(),
        settings: &settings,
    };
    let mut bundles = Vec::new();
    for dir in list_episodes(&cfg.paths.dataset)? {
        let ep = Episode::load(&dir)?;
        let seg = EpisodeSegmentation::segment(ep.id(), &ep.torques()?, &cfg.contact)?;
        bundles.extend(augment_episode(&ep, &seg, &ctx)?.bundles);
    }
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| OutputLayout::new(&cfg.paths.output).bundles());
    let manifest = export_bundles(&bundles, &dir, cfg.bundle_side)?;
    println!("{} bundles written to {}", manifest.entries.len(), dir.display());
    Ok(Verdict::Ok)
}

fn tile_cmd(out: &Path, inputs: &[PathBuf]) -> Result<Verdict> {
    let views = inputs.iter().map(|p| ImageBuffer::load_png(p)).collect::<Result<Vec<_>, _>>()?;
    tile_views(&views)?.save_png(out)?;
    Ok(Verdict::Ok)
}

fn untile_cmd(count: usize, out_dir: &Path, input: &Path) -> Result<Verdict> {
    let composite = ImageBuffer::load_png(input)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for (i, view) in untile_views(&composite, count)?.iter().enumerate() {
        view.save_png(&out_dir.join(format!("view{i}.png")))?;
    }
    Ok(Verdict::Ok)
}

fn run(cli: &Cli) -> Result<Verdict> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    match &cli.command {
        Command::RenderSkeleton {
            episode,
            frame,
            joints,
            action,
            out,
        } => render_cmd(&load_config(cli)?, episode, *frame, joints.as_deref(), *action, out),
        Command::Segment { episode, out } => segment_cmd(&load_config(cli)?, episode.as_deref(), out.as_deref()),
        Command::Augment => augment_cmd(&load_config(cli)?),
        Command::Validate { dataset, source, bundles } => {
            validate_cmd(&load_config(cli)?, dataset.as_deref(), source.as_deref(), bundles.as_deref())
        }
        Command::ExportBundles { out } => export_cmd(&load_config(cli)?, out.as_deref()),
        Command::Tile { out, inputs } => tile_cmd(out, inputs),
        Command::Untile { count, out_dir, input } => untile_cmd(*count, out_dir, input),
        Command::MakeDemo {
            out,
            episodes,
            frames,
            cameras,
            side,
            depth,
        } => {
            if !(1..=4).contains(cameras) {
                bail!("--cameras must be between 1 and 4");
            }
            let spec = DemoSpec {
                episodes: *episodes,
                frames: *frames,
                cameras: *cameras,
                side: *side,
                seed: cli.seed.unwrap_or(0),
                with_depth: *depth,
            };
            let cfg = write_demo(out, &spec)?;
            println!("{}", cfg.display());
            Ok(Verdict::Ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(Verdict::Ok) => ExitCode::SUCCESS,
        Ok(Verdict::Invalid) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
