use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::schedule::ScheduleConfig;

pub const DEFAULT_MAINLINE_STEPS: usize = 15;
pub const DEFAULT_PIXEL_LOOKAHEAD: usize = 5;
pub const DEFAULT_LATENT_ROLLOUT_STEPS: usize = 50;
pub const DEFAULT_MIXING_RATIO: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    FreePixel,
    FixedPixel,
    FreeLatent,
    FixedLatent,
}

impl Mode {
    pub fn is_fixed(self) -> bool {
        matches!(self, Mode::FixedPixel | Mode::FixedLatent)
    }

    pub fn is_latent(self) -> bool {
        matches!(self, Mode::FreeLatent | Mode::FixedLatent)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::FreePixel => "free_pixel",
            Mode::FixedPixel => "fixed_pixel",
            Mode::FreeLatent => "free_latent",
            Mode::FixedLatent => "fixed_latent",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Mode::FreePixel, Mode::FixedPixel, Mode::FreeLatent, Mode::FixedLatent]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| EngineError::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    #[default]
    Permutation,
    Rings,
    Flips,
}

/// How a latent-mode mainline step forms its next state from the rollouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputCombination {
    /// The first prompt's decoded rollout.
    FirstRollout,
    /// The mean of all decoded rollouts, each pulled back to the shared frame.
    #[default]
    Averaged,
}

/// Starting transforms of prompts after the first in free modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    #[default]
    Random,
    Identity,
}

/// Tile reuse allowance: one count for every source tile, or one per tile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Copies {
    Uniform(usize),
    PerTile(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub mode: Mode,
    pub prompts: Vec<String>,
    pub transform: TransformKind,
    /// Tiles per side for permutations.
    pub tiles: usize,
    pub rings: usize,
    pub ring_step: u32,
    pub flip_divisions: Vec<usize>,
    pub mainline_steps: usize,
    /// Lookahead in pixel free mode, full rollout length in latent modes.
    pub rollout_steps: Option<usize>,
    pub mixing_ratio: f64,
    pub copies: Option<Copies>,
    pub seed: u64,
    pub output_combination: OutputCombination,
    pub guidance_scale: f64,
    pub init: InitKind,
    pub dynamic_matching: bool,
    pub schedule: ScheduleConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::FreePixel,
            prompts: Vec::new(),
            transform: TransformKind::Permutation,
            tiles: 4,
            rings: 3,
            ring_step: crate::transform::DEFAULT_ANGULAR_STEP,
            flip_divisions: vec![1],
            mainline_steps: DEFAULT_MAINLINE_STEPS,
            rollout_steps: None,
            mixing_ratio: DEFAULT_MIXING_RATIO,
            copies: None,
            seed: 0,
            output_combination: OutputCombination::Averaged,
            guidance_scale: 1.0,
            init: InitKind::Random,
            dynamic_matching: true,
            schedule: ScheduleConfig::default(),
        }
    }
}

fn bad(msg: impl Into<String>) -> EngineError {
    EngineError::Config(msg.into())
}

impl EngineConfig {
    pub fn rollout_steps_or_default(&self) -> usize {
        self.rollout_steps.unwrap_or(if self.mode.is_latent() {
            DEFAULT_LATENT_ROLLOUT_STEPS
        } else {
            DEFAULT_PIXEL_LOOKAHEAD
        })
    }

    /// The config with every defaulted field spelled out.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        out.rollout_steps = Some(self.rollout_steps_or_default());
        out
    }

    /// Checks everything that does not depend on image geometry.
    pub fn validate(&self, source_count: usize) -> Result<(), EngineError> {
        let n = self.prompts.len();
        if self.mode.is_fixed() {
            if n < 1 {
                return Err(bad("fixed modes need at least one prompt"));
            }
            if source_count < 1 {
                return Err(bad("fixed modes need a source image"));
            }
        } else {
            if n < 2 {
                return Err(bad(format!("free modes need at least two prompts, got {n}")));
            }
            if source_count > 0 {
                return Err(bad("source images are only used by fixed modes"));
            }
        }
        if self.prompts.iter().any(|p| p.is_empty()) {
            return Err(bad("prompts must be non-empty"));
        }
        let train = self.schedule.train_steps;
        if self.mainline_steps == 0 || self.mainline_steps > train {
            return Err(bad(format!(
                "mainline steps must lie in 1..={train}, got {}",
                self.mainline_steps
            )));
        }
        let rollout = self.rollout_steps_or_default();
        if rollout == 0 || rollout > train {
            return Err(bad(format!("rollout steps must lie in 1..={train}, got {rollout}")));
        }
        if !(self.mixing_ratio > 0.0 && self.mixing_ratio < 1.0) {
            return Err(bad(format!(
                "mixing ratio must lie strictly between 0 and 1, got {}",
                self.mixing_ratio
            )));
        }
        // Negated so NaN is rejected too.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.guidance_scale >= 1.0) {
            return Err(bad(format!("guidance scale must be >= 1, got {}", self.guidance_scale)));
        }
        match self.transform {
            TransformKind::Permutation if self.tiles == 0 => return Err(bad("tiles must be positive")),
            TransformKind::Rings => {
                if self.rings == 0 {
                    return Err(bad("ring count must be positive"));
                }
                if self.ring_step == 0 || !360u32.is_multiple_of(self.ring_step) {
                    return Err(bad(format!("ring step {} must divide 360", self.ring_step)));
                }
            }
            TransformKind::Flips => {
                if self.flip_divisions.is_empty() || self.flip_divisions.contains(&0) {
                    return Err(bad("flip divisions must be a non-empty list of positive sizes"));
                }
            }
            _ => {}
        }
        if self.transform != TransformKind::Permutation {
            if self.copies.is_some() {
                return Err(bad("copies apply only to the permutation transform"));
            }
            if source_count > 1 {
                return Err(bad("multiple source images need the permutation transform"));
            }
        }
        if let Some(copies) = &self.copies {
            if !self.mode.is_fixed() {
                return Err(bad("copies apply only to fixed modes"));
            }
            let tiles = self.tiles * self.tiles;
            match copies {
                Copies::Uniform(0) => return Err(bad("copies must be positive")),
                Copies::Uniform(_) => {}
                Copies::PerTile(v) => {
                    if v.len() != tiles && v.len() != tiles * source_count {
                        return Err(bad(format!(
                            "copies map has {} entries; expected {tiles} or {}",
                            v.len(),
                            tiles * source_count
                        )));
                    }
                    if v.contains(&0) {
                        return Err(bad("every copies map entry must be positive"));
                    }
                }
            }
        }
        Ok(())
    }
}
