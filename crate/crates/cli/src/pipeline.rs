//! Stage functions shared by the subcommands and the full run. Each stage
//! persists what the next one needs, so any stage can be rerun on its own.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use rayon::prelude::*;
use slicereg::eval::{evaluate_masks, EvalReport};
use slicereg::global_align::{align_whole_tissue, GlobalAlignment, GlobalConfig};
use slicereg::mumford_shah::{mc_segment, render_ms, MsConfig};
use slicereg::phantom::{self, PhantomSpec};
use slicereg::preprocess::{clean_tissue, PreprocessConfig};
use slicereg::roi_register::{apply_chain, register_stack, RoiRegConfig};
use slicereg::{BinaryMask, GrayImage, LabelImage, RegistrationChain, RigidTransform2D, RoiBox};

use crate::config::PipelineConfig;
use crate::schema::{
    read_json, write_json, ChainFile, Manifest, PairTransform, PhantomTruth, SegmentEntry, SegmentsFile, StageTime,
    TransformsFile,
};
use crate::errors::{ConfigError, InputError};
use crate::stack::{create_dir, list_slices, load_gray_stack, load_mask_stack, output_path};

pub const SEGMENTS_JSON: &str = "segments.json";
pub const TRANSFORMS_JSON: &str = "transforms.json";
pub const CHAIN_JSON: &str = "chain.json";
pub const REPORT_JSON: &str = "report.json";
pub const MANIFEST_JSON: &str = "manifest.json";

/// A loaded slice directory.
#[derive(Debug, Clone)]
pub struct Stack {
    pub paths: Vec<PathBuf>,
    pub images: Vec<GrayImage>,
}

impl Stack {
    pub fn read(dir: &Path) -> anyhow::Result<Self> {
        let paths = list_slices(dir)?;
        let images = load_gray_stack(&paths)?;
        Ok(Self { paths, images })
    }

    /// File names, used to label outputs.
    pub fn sources(&self) -> Vec<String> {
        file_names(&self.paths)
    }
}

fn file_names(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned())).collect()
}

/// Runs `f` on a pool of `threads` workers (all cores when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build()?;
    Ok(pool.install(f))
}

pub fn write_images(dir: &Path, paths: &[PathBuf], images: &[GrayImage]) -> anyhow::Result<()> {
    create_dir(dir)?;
    paths.par_iter().zip(images).try_for_each(|(src, img)| {
        let out = output_path(dir, src);
        slicereg::io::save_gray(img, &out).with_context(|| format!("writing {}", out.display()))
    })
}

pub fn preprocess(stack: &Stack, cfg: &PreprocessConfig) -> anyhow::Result<Vec<GrayImage>> {
    stack
        .paths
        .par_iter()
        .zip(&stack.images)
        .map(|(p, img)| clean_tissue(img, cfg).with_context(|| format!("preprocessing {}", p.display())))
        .collect()
}

/// Segments every slice; slice `i` anneals with `cfg.seed + i`.
pub fn segment(stack: &Stack, cfg: &MsConfig) -> anyhow::Result<(Vec<LabelImage>, Vec<u64>)> {
    let seeds: Vec<u64> = (0..stack.images.len()).map(|i| cfg.seed.wrapping_add(i as u64)).collect();
    let labels = stack
        .paths
        .par_iter()
        .zip(&stack.images)
        .zip(&seeds)
        .map(|((p, img), &seed)| {
            mc_segment(img, &MsConfig { seed, ..*cfg }).with_context(|| format!("segmenting {}", p.display()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok((labels, seeds))
}

pub fn write_segments(dir: &Path, paths: &[PathBuf], labels: &[LabelImage], seeds: &[u64]) -> anyhow::Result<()> {
    create_dir(dir)?;
    let entries = paths
        .par_iter()
        .zip(labels)
        .zip(seeds)
        .enumerate()
        .map(|(index, ((src, lab), &seed))| {
            let rendered = output_path(dir, src);
            slicereg::io::save_gray(&render_ms(lab), &rendered).with_context(|| format!("writing {}", rendered.display()))?;
            let out = rendered.with_extension("labels.png");
            slicereg::io::save_labels(lab.width(), lab.height(), lab.labels(), &out)
                .with_context(|| format!("writing {}", out.display()))?;
            Ok(SegmentEntry {
                index,
                source: file_names(std::slice::from_ref(src)).remove(0),
                labels: file_names(&[out]).remove(0),
                seed,
                phase_means: lab.phase_means().to_vec(),
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    write_json(&dir.join(SEGMENTS_JSON), &SegmentsFile { slices: entries })
}

pub fn read_segments(dir: &Path) -> anyhow::Result<Vec<LabelImage>> {
    let doc: SegmentsFile = read_json(&dir.join(SEGMENTS_JSON))?;
    doc.slices
        .par_iter()
        .map(|e| {
            let path = dir.join(&e.labels);
            let (w, h, labels) = slicereg::io::load_labels(&path).with_context(|| format!("loading labels {}", path.display()))?;
            LabelImage::new(w, h, labels, e.phase_means.clone()).with_context(|| format!("labels {}", path.display()))
        })
        .collect()
}

fn need_pairs(n: usize) -> anyhow::Result<()> {
    if n < 2 {
        return Err(InputError(format!("registration needs at least two slices, found {n}")).into());
    }
    Ok(())
}

pub fn align_global(images: &[GrayImage], labels: &[LabelImage], cfg: &GlobalConfig) -> anyhow::Result<GlobalAlignment<f64>> {
    if images.len() != labels.len() {
        return Err(InputError(format!("{} slices but {} segmentations", images.len(), labels.len())).into());
    }
    need_pairs(images.len())?;
    if let Some(i) = (0..images.len()).find(|&i| images[i].dims() != labels[i].dims()) {
        return Err(InputError(format!("segmentation {i} does not match its slice size")).into());
    }
    Ok(align_whole_tissue(images, labels, cfg).context("whole-tissue alignment")?)
}

pub fn write_global(dir: &Path, paths: &[PathBuf], ga: &GlobalAlignment<f64>) -> anyhow::Result<()> {
    write_images(dir, paths, &ga.registered)?;
    let doc = TransformsFile {
        sources: file_names(paths),
        pairs: ga
            .pairwise
            .iter()
            .enumerate()
            .map(|(i, t)| PairTransform { fixed: i, moving: i + 1, transform: *t })
            .collect(),
        cumulative: ga.cumulative.clone(),
    };
    write_json(&dir.join(TRANSFORMS_JSON), &doc)
}

/// Cumulative whole-tissue transforms from a `transforms.json`.
/// `path` is `transforms.json` or the `align-global` output directory.
pub fn read_priors(path: &Path) -> anyhow::Result<Vec<RigidTransform2D>> {
    let file = if path.is_dir() { path.join(TRANSFORMS_JSON) } else { path.to_path_buf() };
    Ok(read_json::<TransformsFile>(&file)?.cumulative)
}

pub fn register(
    images: &[GrayImage],
    roi: &RoiBox,
    cfg: &RoiRegConfig,
    priors: Option<&[RigidTransform2D]>,
) -> anyhow::Result<RegistrationChain> {
    need_pairs(images.len())?;
    if let Some(p) = priors {
        if p.len() != images.len() {
            return Err(InputError(format!("{} prior transforms for {} slices", p.len(), images.len())).into());
        }
    }
    Ok(register_stack(images, roi, cfg, priors).context("regional registration")?)
}

pub fn write_register(
    dir: &Path,
    paths: &[PathBuf],
    images: &[GrayImage],
    roi: RoiBox,
    chain: &RegistrationChain,
) -> anyhow::Result<ChainFile> {
    write_images(dir, paths, &apply_chain(images, chain)?)?;
    let doc = ChainFile::from_chain(chain, roi, &file_names(paths));
    write_json(&dir.join(CHAIN_JSON), &doc)?;
    Ok(doc)
}

pub fn evaluate(masks: &[BinaryMask], chain: &ChainFile, window: usize) -> anyhow::Result<EvalReport> {
    if masks.len() != chain.slices.len() {
        return Err(InputError(format!("{} masks for a chain of {} slices", masks.len(), chain.slices.len())).into());
    }
    Ok(evaluate_masks(masks, &chain.totals(), &chain.fallback_flags(), window)?)
}

pub fn read_masks(dir: &Path) -> anyhow::Result<Vec<BinaryMask>> {
    load_mask_stack(&list_slices(dir)?)
}

/// What a full run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub chain: ChainFile,
    pub report: Option<EvalReport>,
    pub manifest: Manifest,
}

struct Stopwatch(Vec<StageTime>);

impl Stopwatch {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> anyhow::Result<T>) -> anyhow::Result<T> {
        let start = Instant::now();
        let out = f().with_context(|| format!("stage {stage} failed"))?;
        self.0.push(StageTime { stage: stage.into(), seconds: start.elapsed().as_secs_f64() });
        Ok(out)
    }
}

/// Full pipeline: preprocess, segment, whole-tissue alignment, regional
/// registration, then evaluation when masks are configured. Outputs go to
/// `preprocessed/`, `segmented/`, `global/`, `register/`, plus
/// `report.json` and `manifest.json` at the top of the output directory.
pub fn run_pipeline(cfg: &PipelineConfig) -> anyhow::Result<RunOutcome> {
    let Some(input) = cfg.input.as_deref() else { bail!(ConfigError("no input directory configured".into())) };
    let Some(out) = cfg.output.as_deref() else { bail!(ConfigError("no output directory configured".into())) };
    let Some(roi) = cfg.roi else { bail!(ConfigError("no region of interest configured".into())) };
    with_threads(cfg.threads, || {
        let mut watch = Stopwatch(Vec::new());
        create_dir(out)?;
        let raw = watch.time("load", || Stack::read(input))?;
        let masks = cfg.masks.as_deref().map(|m| watch.time("load-masks", || read_masks(m))).transpose()?;
        if let Some(m) = &masks {
            if m.first().map(|m| m.dims()) != raw.images.first().map(|i| i.dims()) || m.len() != raw.images.len() {
                return Err(InputError(format!(
                    "masks in {} do not match the {} slices in {}",
                    cfg.masks.as_deref().unwrap_or(Path::new("")).display(),
                    raw.images.len(),
                    input.display()
                ))
                .into());
            }
        }
        let cleaned = Stack {
            images: watch.time("preprocess", || {
                let imgs = preprocess(&raw, &cfg.preprocess)?;
                write_images(&out.join("preprocessed"), &raw.paths, &imgs)?;
                Ok(imgs)
            })?,
            paths: raw.paths.clone(),
        };
        let (labels, seeds) = watch.time("segment", || {
            let (labels, seeds) = segment(&cleaned, &cfg.segment)?;
            write_segments(&out.join("segmented"), &cleaned.paths, &labels, &seeds)?;
            Ok((labels, seeds))
        })?;
        let ga = watch.time("align-global", || {
            let ga = align_global(&cleaned.images, &labels, &cfg.global)?;
            write_global(&out.join("global"), &cleaned.paths, &ga)?;
            Ok(ga)
        })?;
        let chain = watch.time("register", || {
            let chain = register(&cleaned.images, &roi, &cfg.register, Some(&ga.cumulative))?;
            write_register(&out.join("register"), &cleaned.paths, &cleaned.images, roi, &chain)
        })?;
        let report = masks
            .map(|m| {
                watch.time("evaluate", || {
                    let report = evaluate(&m, &chain, cfg.evaluate.window)?;
                    write_json(&out.join(REPORT_JSON), &report)?;
                    Ok(report)
                })
            })
            .transpose()?;
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            threads: rayon::current_num_threads(),
            config: cfg.clone(),
            inputs: raw.sources(),
            segment_seeds: seeds,
            stages: watch.0,
        };
        write_json(&out.join(MANIFEST_JSON), &manifest)?;
        Ok(RunOutcome { chain, report, manifest })
    })?
}

/// Writes `slices/`, `masks/`, `truth.json` and a ready-to-run
/// `pipeline.toml` for a generated phantom. `roi_at_distractor` replaces the
/// vessel ROI by a box inside that distractor patch (side = patch radius).
pub fn write_phantom(dir: &Path, spec: &PhantomSpec, roi_at_distractor: Option<usize>) -> anyhow::Result<PipelineConfig> {
    let ph = phantom::generate(spec).context("generating phantom")?;
    let roi = match roi_at_distractor {
        None => ph.roi,
        Some(k) => {
            let &(x, y) = ph.distractors.get(k).ok_or_else(|| {
                ConfigError(format!("distractor {k} requested but the phantom has {}", ph.distractors.len()))
            })?;
            let (cx, cy) = ph.truth[0].apply(x, y);
            let side = spec.distractors.radius;
            RoiBox::new(cx, cy, side, side).clipped(spec.width, spec.height)
        }
    };
    let (slices, masks) = (dir.join("slices"), dir.join("masks"));
    create_dir(&slices)?;
    create_dir(&masks)?;
    let digits = spec.slices.to_string().len().max(3);
    (0..spec.slices).into_par_iter().try_for_each(|i| -> anyhow::Result<()> {
        let name = format!("slice_{i:0digits$}.png");
        slicereg::io::save_rgb(&ph.slices[i], &slices.join(&name))?;
        slicereg::io::save_mask(&ph.masks[i], &masks.join(&name))?;
        Ok(())
    })?;
    write_json(
        &dir.join("truth.json"),
        &PhantomTruth { spec: *spec, roi, truth: ph.truth.clone(), distractors: ph.distractors.clone() },
    )?;
    let cfg = PipelineConfig {
        input: Some(slices),
        output: Some(dir.join("out")),
        masks: Some(masks),
        roi: Some(roi),
        ..PipelineConfig::default()
    };
    let path = dir.join("pipeline.toml");
    std::fs::write(&path, cfg.to_toml()?).with_context(|| format!("writing {}", path.display()))?;
    Ok(cfg)
}
