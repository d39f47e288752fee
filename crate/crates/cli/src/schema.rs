//! JSON documents written by the pipeline. Transforms are `{theta, dx, dy}`
//! (radians, pixels) mapping a slice's content into the slice-0 frame.

use std::path::Path;

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use slicereg::phantom::PhantomSpec;
use slicereg::roi_register::{RegistrationChain, RoiRegConfig};
use slicereg::{RigidTransform2D, RoiBox};

use crate::config::PipelineConfig;

/// `segmented/segments.json`: one entry per label raster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentsFile {
    pub slices: Vec<SegmentEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub index: usize,
    pub source: String,
    /// Label raster file name, next to this document.
    pub labels: String,
    pub seed: u64,
    pub phase_means: Vec<f64>,
}

/// `global/transforms.json`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformsFile {
    pub sources: Vec<String>,
    /// `pairs[i]` moves slice `i + 1` (already placed by `cumulative[i]`) onto slice `i`.
    pub pairs: Vec<PairTransform>,
    pub cumulative: Vec<RigidTransform2D>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTransform {
    pub fixed: usize,
    pub moving: usize,
    pub transform: RigidTransform2D,
}

/// `register/chain.json`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainFile {
    pub roi: RoiBox,
    pub config: RoiRegConfig,
    pub slices: Vec<ChainSlice>,
    pub fallback_pairs: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSlice {
    pub index: usize,
    pub source: String,
    /// `regional ∘ prior`, the transform applied to the original slice.
    pub cumulative: RigidTransform2D,
    pub regional: RigidTransform2D,
    /// Placement from whole-tissue alignment (identity without one).
    pub prior: RigidTransform2D,
    /// Correction registering this slice onto the previous one (identity for slice 0).
    pub relative: RigidTransform2D,
    /// Whether any level of that registration fell back to identity.
    pub fallback: bool,
    /// Coarsest level first; empty for slice 0.
    pub levels: Vec<LevelRecord>,
}

/// One cascade level; the transform is in that level's pixel frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    pub theta: f64,
    pub dx: f64,
    pub dy: f64,
    pub matches: usize,
    pub candidates: usize,
    pub ssd: f64,
    pub fallback: bool,
}

impl ChainFile {
    pub fn from_chain(chain: &RegistrationChain<f64>, roi: RoiBox, sources: &[String]) -> Self {
        let slices = (0..chain.len())
            .map(|i| {
                let pair = i.checked_sub(1);
                ChainSlice {
                    index: i,
                    source: sources[i].clone(),
                    cumulative: chain.total(i),
                    regional: chain.cumulative[i],
                    prior: chain.prior[i],
                    relative: pair.map_or_else(RigidTransform2D::identity, |p| chain.pairwise[p]),
                    fallback: pair.is_some_and(|p| chain.pair_fell_back(p)),
                    levels: pair
                        .map(|p| &chain.pairs[p][..])
                        .unwrap_or_default()
                        .iter()
                        .map(|l| LevelRecord {
                            level: l.level,
                            theta: l.transform.theta,
                            dx: l.transform.dx,
                            dy: l.transform.dy,
                            matches: l.matches,
                            candidates: l.candidate_count,
                            ssd: l.chosen_ssd,
                            fallback: l.fallback,
                        })
                        .collect(),
                }
            })
            .collect();
        let fallback_pairs = (0..chain.pairs.len()).filter(|&i| chain.pair_fell_back(i)).map(|i| [i, i + 1]).collect();
        Self { roi, config: chain.config, slices, fallback_pairs }
    }

    pub fn totals(&self) -> Vec<RigidTransform2D> {
        self.slices.iter().map(|s| s.cumulative).collect()
    }

    /// `flags[i]` for pair `(i, i + 1)`.
    pub fn fallback_flags(&self) -> Vec<bool> {
        self.slices.iter().skip(1).map(|s| s.fallback).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

/// `manifest.json`
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub threads: usize,
    pub config: PipelineConfig,
    pub inputs: Vec<String>,
    /// Annealing seed used for each slice.
    pub segment_seeds: Vec<u64>,
    pub stages: Vec<StageTime>,
}

/// `truth.json` written next to a generated phantom.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhantomTruth {
    pub spec: PhantomSpec,
    pub roi: RoiBox,
    /// `truth[i]` moves the unperturbed content into slice `i`.
    pub truth: Vec<RigidTransform2D>,
    pub distractors: Vec<(f64, f64)>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
