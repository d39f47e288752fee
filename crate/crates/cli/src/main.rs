use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use slicereg::pyramid::build_pyramid;
use slicereg::sift::{detect_and_describe, match_features, Keypoint, Match};
use slicereg::{phantom::PhantomSpec, GrayImage, RoiBox};
use slicereg_cli::config::{parse_roi, PipelineConfig, DEFAULT_CONFIG_TOML};
use slicereg_cli::errors::{categorize, ConfigError};
use slicereg_cli::pipeline::{self, Stack, CHAIN_JSON, REPORT_JSON};
use slicereg_cli::schema::{read_json, write_json, ChainFile};
use slicereg_cli::stack::create_dir;

/// Regional rigid registration of serial whole-slide sections.
#[derive(Parser)]
#[command(name = "slicereg", version)]
struct Cli {
    /// TOML configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct InOut {
    /// Directory of numbered slices.
    #[arg(long, visible_alias = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Whiten everything outside the tissue hull.
    Preprocess(InOut),
    /// Piecewise-constant segmentation of preprocessed slices.
    Segment {
        #[command(flatten)]
        io: InOut,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Whole-tissue alignment from preprocessed slices and their segmentations.
    AlignGlobal {
        #[command(flatten)]
        io: InOut,
        /// Output directory of `segment`.
        #[arg(long, visible_alias = "ms")]
        segments: PathBuf,
    },
    /// Coarse-to-fine registration around a region of interest.
    Register {
        #[command(flatten)]
        io: InOut,
        /// cx,cy,width,height in slice-0 pixels.
        #[arg(long, value_parser = parse_roi)]
        roi: Option<RoiBox>,
        /// Coarsest pyramid level.
        #[arg(long)]
        levels: Option<usize>,
        /// `transforms.json` from `align-global` (or its directory), applied before registration.
        #[arg(long)]
        prior: Option<PathBuf>,
        /// Extra copy of the chain document (it is always written to `<out>/chain.json`).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score a chain against lumen masks.
    Evaluate {
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        window: Option<usize>,
        /// Report path (default: print to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic stack with ground truth.
    Phantom {
        #[arg(long)]
        out: PathBuf,
        /// Phantom spec, JSON if the extension says so, TOML otherwise
        /// (default: 20 slices of 1024x1024).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        slices: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Center the ROI on this distractor patch instead of the vessel.
        #[arg(long)]
        roi_at_distractor: Option<usize>,
    },
    /// Full pipeline.
    Run {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        masks: Option<PathBuf>,
        #[arg(long, value_parser = parse_roi)]
        roi: Option<RoiBox>,
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Dump keypoints (and matches against a second image) as JSON.
    SiftInspect {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        other: Option<PathBuf>,
        #[arg(long, value_parser = parse_roi)]
        roi: RoiBox,
        /// Pyramid level to inspect; the ROI is given at full resolution.
        #[arg(long, default_value_t = 0)]
        level: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the default configuration.
    Config,
}

#[derive(Serialize)]
struct Inspection {
    level: usize,
    keypoints: Vec<Keypoint>,
    other_keypoints: Option<Vec<Keypoint>>,
    matches: Option<Vec<Match>>,
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> anyhow::Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            let text = serde_json::to_string_pretty(value)?;
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

fn level_image(path: &Path, level: usize) -> anyhow::Result<GrayImage> {
    let img: GrayImage = slicereg::io::load_gray(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(build_pyramid(&img, level)?.level(level).clone())
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = PipelineConfig::load_or_default(cli.config.as_deref())?;
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    match cli.command {
        Command::Run { input, out, masks, roi, levels } => {
            cfg.input = input.or(cfg.input);
            cfg.output = out.or(cfg.output);
            cfg.masks = masks.or(cfg.masks);
            cfg.roi = roi.or(cfg.roi);
            if let Some(k) = levels {
                cfg.register.levels = k;
            }
            let outcome = pipeline::run_pipeline(&cfg)?;
            if let Some(r) = outcome.report {
                eprintln!("mean similarity {:.4} ± {:.4} over {} pairs", r.mean, r.std, r.pairs.len());
            }
            if !outcome.chain.fallback_pairs.is_empty() {
                eprintln!("identity fallback on pairs {:?}", outcome.chain.fallback_pairs);
            }
            Ok(())
        }
        Command::Config => {
            print!("{DEFAULT_CONFIG_TOML}");
            Ok(())
        }
        Command::Phantom { out, spec, slices, seed, roi_at_distractor } => {
            let mut spec: PhantomSpec = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
                        serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
                    } else {
                        toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
                    }
                }
                None => PhantomSpec::default(),
            };
            spec.slices = slices.unwrap_or(spec.slices);
            spec.seed = seed.unwrap_or(spec.seed);
            pipeline::with_threads(cfg.threads, || pipeline::write_phantom(&out, &spec, roi_at_distractor))??;
            Ok(())
        }
        command => pipeline::with_threads(cfg.threads, move || stage(command, cfg))?,
    }
}

fn stage(command: Command, mut cfg: PipelineConfig) -> anyhow::Result<()> {
    match command {
        Command::Preprocess(io) => {
            let stack = Stack::read(&io.input)?;
            let cleaned = pipeline::preprocess(&stack, &cfg.preprocess)?;
            pipeline::write_images(&io.out, &stack.paths, &cleaned)
        }
        Command::Segment { io, seed } => {
            cfg.segment.seed = seed.unwrap_or(cfg.segment.seed);
            let stack = Stack::read(&io.input)?;
            let (labels, seeds) = pipeline::segment(&stack, &cfg.segment)?;
            pipeline::write_segments(&io.out, &stack.paths, &labels, &seeds)
        }
        Command::AlignGlobal { io, segments } => {
            let stack = Stack::read(&io.input)?;
            let labels = pipeline::read_segments(&segments)?;
            let ga = pipeline::align_global(&stack.images, &labels, &cfg.global)?;
            pipeline::write_global(&io.out, &stack.paths, &ga)
        }
        Command::Register { io, roi, levels, prior, report } => {
            let roi = roi.or(cfg.roi).ok_or_else(|| ConfigError("register needs --roi or a configured roi".into()))?;
            cfg.register.levels = levels.unwrap_or(cfg.register.levels);
            let stack = Stack::read(&io.input)?;
            let priors = prior.as_deref().map(pipeline::read_priors).transpose()?;
            let chain = pipeline::register(&stack.images, &roi, &cfg.register, priors.as_deref())?;
            create_dir(&io.out)?;
            let doc = pipeline::write_register(&io.out, &stack.paths, &stack.images, roi, &chain)?;
            if !doc.fallback_pairs.is_empty() {
                eprintln!("identity fallback on pairs {:?}", doc.fallback_pairs);
            }
            report.map_or(Ok(()), |r| write_json(&r, &doc))
        }
        Command::Evaluate { masks, chain, window, out } => {
            let chain_path = if chain.is_dir() { chain.join(CHAIN_JSON) } else { chain };
            let doc: ChainFile = read_json(&chain_path)?;
            let masks = pipeline::read_masks(&masks)?;
            let report = pipeline::evaluate(&masks, &doc, window.unwrap_or(cfg.evaluate.window))?;
            let out = out.map(|o| if o.is_dir() { o.join(REPORT_JSON) } else { o });
            emit(out.as_deref(), &report)
        }
        Command::SiftInspect { image, other, roi, level, out } => {
            let a = level_image(&image, level)?;
            let roi_l = roi.for_level(level, a.dims());
            let fa = detect_and_describe(&a, &roi_l, &cfg.register.sift)?;
            let (other_keypoints, matches) = match other {
                Some(p) => {
                    let b = level_image(&p, level)?;
                    let fb = detect_and_describe(&b, &roi_l, &cfg.register.sift)?;
                    let m = match_features(&fa, &fb, &cfg.register.sift);
                    (Some(fb.iter().map(|f| f.keypoint).collect()), Some(m))
                }
                None => (None, None),
            };
            let report = Inspection { level, keypoints: fa.iter().map(|f| f.keypoint).collect(), other_keypoints, matches };
            emit(out.as_deref(), &report)
        }
        Command::Run { .. } | Command::Phantom { .. } | Command::Config => unreachable!("handled by execute"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let cat = categorize(&e);
            eprintln!("slicereg: {}: {e:#}", cat.label());
            ExitCode::from(cat.exit_code() as u8)
        }
    }
}
