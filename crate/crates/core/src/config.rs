//! Run configuration and its flat text format.
//!
//! One `key = value` per line, `#` starts a comment, lists are
//! comma-separated. Unknown and repeated keys are errors. Every key is
//! written back by [`RunConfig::to_text`], and parsing that text yields the
//! same configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const STAGES: usize = 4;
pub const DAMAGE_CLASSES: usize = 5;
pub const LOC_CLASSES: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchMode {
    /// Overlapping 7×7/stride-4 stage-1 embedding, 3×3/stride-2 merges.
    Overlap,
    /// Strict 4×4/stride-4 stage-1 patches, 2×2/stride-2 merges.
    NonOverlap,
}

impl PatchMode {
    /// `(kernel, stride, pad)` of the embedding in front of `stage`.
    pub fn embed_geometry(self, stage: usize) -> (usize, usize, usize) {
        match (self, stage) {
            (PatchMode::Overlap, 0) => (7, 4, 3),
            (PatchMode::Overlap, _) => (3, 2, 1),
            (PatchMode::NonOverlap, 0) => (4, 4, 0),
            (PatchMode::NonOverlap, _) => (2, 2, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub blocks: [usize; STAGES],
    pub channels: [usize; STAGES],
    pub heads: [usize; STAGES],
    pub sr_ratios: [usize; STAGES],
    pub expansion: usize,
    pub patch_mode: PatchMode,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            blocks: [3, 4, 6, 3],
            channels: [16, 32, 64, 128],
            heads: [1, 2, 4, 8],
            sr_ratios: [8, 4, 2, 1],
            expansion: 4,
            patch_mode: PatchMode::Overlap,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub kernel: usize,
    pub reduction: usize,
    /// Separate merge convolutions per task instead of one shared merge.
    pub dup_merge: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { kernel: 3, reduction: 4, dup_merge: false }
    }
}

/// Where localization features join the damage branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddBack {
    /// Localization concatenation is added before the damage fusion conv.
    PreConv,
    /// Fused localization map is added after the damage fusion conv.
    PostConv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub width: usize,
    /// Decode resolution is `input / scale_div`.
    pub scale_div: usize,
    pub addback: AddBack,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self { width: 64, scale_div: 4, addback: AddBack::PostConv }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub fusion: FusionConfig,
    pub decoder: DecoderConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LovaszClasses {
    Present,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    pub dice_eps: f64,
    pub bce_weight: f64,
    pub dice_weight: f64,
    pub ce_weight: f64,
    pub lovasz_weight: f64,
    pub lovasz_classes: LovaszClasses,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            dice_eps: 1.0,
            bce_weight: 1.0,
            dice_weight: 1.0,
            ce_weight: 1.0,
            lovasz_weight: 1.0,
            lovasz_classes: LovaszClasses::Present,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: usize,
    pub batch_size: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 6e-5,
            weight_decay: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 3000,
            batch_size: 2,
            clip_norm: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub size: usize,
    pub buildings: (usize, usize),
    pub building_size: (usize, usize),
    /// Probability of damage levels 1..=4 (no damage, minor, major, destroyed).
    pub damage_probs: [f64; 4],
    pub noise: f64,
    /// Minimum empty gap between two buildings, in pixels.
    pub gap: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            size: 64,
            buildings: (2, 6),
            building_size: (8, 20),
            damage_probs: [0.4, 0.2, 0.2, 0.2],
            noise: 0.08,
            gap: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    /// Directory of DFR1 quadruplets; synthesized when unset.
    pub train_dir: Option<PathBuf>,
    pub eval_dir: Option<PathBuf>,
    pub train_count: usize,
    pub eval_count: usize,
    pub eval_split: EvalSplit,
    pub synth: SynthConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_dir: None,
            eval_dir: None,
            train_count: 200,
            eval_count: 50,
            eval_split: EvalSplit::Eval,
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optim: OptimizerConfig,
    pub data: DataConfig,
    pub seed: u64,
    /// Checkpoint every this many steps; 0 writes only the final checkpoint.
    pub checkpoint_every: usize,
    pub out_dir: PathBuf,
    /// Rayon worker threads; 0 uses the rayon default.
    pub workers: usize,
    /// Abort with the producing op's name on the first non-finite value.
    pub debug_nan: bool,
    /// Warn and skip the update instead of aborting on non-finite gradients.
    pub nonfinite_warn: bool,
    /// Stop early once the loss over the whole training set drops below this; 0 disables.
    pub target_loss: f64,
    pub log_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            optim: OptimizerConfig::default(),
            data: DataConfig::default(),
            seed: 0,
            checkpoint_every: 0,
            out_dir: PathBuf::from("runs/default"),
            workers: 0,
            debug_nan: false,
            nonfinite_warn: false,
            target_loss: 0.0,
            log_every: 10,
        }
    }
}

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key} = {value}: {why}"))
}

fn scalar<V: FromStr>(key: &str, value: &str) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

fn list<V: FromStr>(key: &str, value: &str) -> Result<Vec<V>>
where
    V::Err: std::fmt::Display,
{
    value.split(',').map(|s| scalar(key, s.trim())).collect()
}

fn array<V: FromStr + Copy, const N: usize>(key: &str, value: &str) -> Result<[V; N]>
where
    V::Err: std::fmt::Display,
{
    let items: Vec<V> = list(key, value)?;
    items.try_into().map_err(|v: Vec<V>| bad(key, value, format!("expected {N} values, got {}", v.len())))
}

fn pair(key: &str, value: &str) -> Result<(usize, usize)> {
    let [a, b] = array::<usize, 2>(key, value)?;
    Ok((a, b))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

fn join<V: std::fmt::Display>(items: &[V]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn path_text(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Parses config text on top of the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {key}", lineno + 1)));
            }
            cfg.set(key, value).map_err(|e| {
                Error::Config(format!("line {}: {}", lineno + 1, e.to_string().trim_start_matches("config error: ")))
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let enc = &mut self.model.encoder;
        let fus = &mut self.model.fusion;
        let dec = &mut self.model.decoder;
        match key {
            "enc.blocks" => enc.blocks = array(key, value)?,
            "enc.channels" => enc.channels = array(key, value)?,
            "enc.heads" => enc.heads = array(key, value)?,
            "enc.sr_ratios" => enc.sr_ratios = array(key, value)?,
            "enc.expansion" => enc.expansion = scalar(key, value)?,
            "enc.patch_mode" => {
                enc.patch_mode = match value {
                    "overlap" => PatchMode::Overlap,
                    "nonoverlap" => PatchMode::NonOverlap,
                    _ => return Err(bad(key, value, "expected overlap or nonoverlap")),
                }
            }
            "fus.kernel" => fus.kernel = scalar(key, value)?,
            "fus.reduction" => fus.reduction = scalar(key, value)?,
            "fus.dup_merge" => fus.dup_merge = boolean(key, value)?,
            "dec.width" => dec.width = scalar(key, value)?,
            "dec.scale" => {
                let s: f64 = scalar(key, value)?;
                let div = (1.0 / s).round();
                if !(s > 0.0) || !matches!(div as usize, 1 | 2 | 4) || (1.0 / div - s).abs() > 1e-12 {
                    return Err(bad(key, value, "expected 1, 0.5 or 0.25"));
                }
                dec.scale_div = div as usize;
            }
            "dec.addback" => {
                dec.addback = match value {
                    "pre_conv" => AddBack::PreConv,
                    "post_conv" => AddBack::PostConv,
                    _ => return Err(bad(key, value, "expected pre_conv or post_conv")),
                }
            }
            "loss.alpha" => self.loss.alpha = scalar(key, value)?,
            "loss.dice_eps" => self.loss.dice_eps = scalar(key, value)?,
            "loss.bce_weight" => self.loss.bce_weight = scalar(key, value)?,
            "loss.dice_weight" => self.loss.dice_weight = scalar(key, value)?,
            "loss.ce_weight" => self.loss.ce_weight = scalar(key, value)?,
            "loss.lovasz_weight" => self.loss.lovasz_weight = scalar(key, value)?,
            "loss.lovasz_classes" => {
                self.loss.lovasz_classes = match value {
                    "present" => LovaszClasses::Present,
                    "all" => LovaszClasses::All,
                    _ => return Err(bad(key, value, "expected present or all")),
                }
            }
            "opt.lr" => self.optim.lr = scalar(key, value)?,
            "opt.weight_decay" => self.optim.weight_decay = scalar(key, value)?,
            "opt.beta1" => self.optim.beta1 = scalar(key, value)?,
            "opt.beta2" => self.optim.beta2 = scalar(key, value)?,
            "opt.eps" => self.optim.eps = scalar(key, value)?,
            "opt.steps" => self.optim.steps = scalar(key, value)?,
            "opt.batch_size" => self.optim.batch_size = scalar(key, value)?,
            "opt.clip_norm" => self.optim.clip_norm = scalar(key, value)?,
            "data.train_dir" => self.data.train_dir = opt_path(value),
            "data.eval_dir" => self.data.eval_dir = opt_path(value),
            "data.train_count" => self.data.train_count = scalar(key, value)?,
            "data.eval_count" => self.data.eval_count = scalar(key, value)?,
            "data.eval_split" => {
                self.data.eval_split = match value {
                    "train" => EvalSplit::Train,
                    "eval" => EvalSplit::Eval,
                    _ => return Err(bad(key, value, "expected train or eval")),
                }
            }
            "data.size" => self.data.synth.size = scalar(key, value)?,
            "data.buildings" => self.data.synth.buildings = pair(key, value)?,
            "data.building_size" => self.data.synth.building_size = pair(key, value)?,
            "data.damage_probs" => self.data.synth.damage_probs = array(key, value)?,
            "data.noise" => self.data.synth.noise = scalar(key, value)?,
            "data.gap" => self.data.synth.gap = scalar(key, value)?,
            "run.seed" => self.seed = scalar(key, value)?,
            "run.checkpoint_every" => self.checkpoint_every = scalar(key, value)?,
            "run.out_dir" => self.out_dir = PathBuf::from(value),
            "run.workers" => self.workers = scalar(key, value)?,
            "run.debug_nan" => self.debug_nan = boolean(key, value)?,
            "run.nonfinite_warn" => self.nonfinite_warn = boolean(key, value)?,
            "run.target_loss" => self.target_loss = scalar(key, value)?,
            "run.log_every" => self.log_every = scalar(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key}"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let enc = &self.model.encoder;
        let fus = &self.model.fusion;
        let dec = &self.model.decoder;
        let syn = &self.data.synth;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("enc.blocks", join(&enc.blocks));
        kv("enc.channels", join(&enc.channels));
        kv("enc.heads", join(&enc.heads));
        kv("enc.sr_ratios", join(&enc.sr_ratios));
        kv("enc.expansion", enc.expansion.to_string());
        kv(
            "enc.patch_mode",
            match enc.patch_mode {
                PatchMode::Overlap => "overlap",
                PatchMode::NonOverlap => "nonoverlap",
            }
            .into(),
        );
        kv("fus.kernel", fus.kernel.to_string());
        kv("fus.reduction", fus.reduction.to_string());
        kv("fus.dup_merge", fus.dup_merge.to_string());
        kv("dec.width", dec.width.to_string());
        kv("dec.scale", (1.0 / dec.scale_div as f64).to_string());
        kv(
            "dec.addback",
            match dec.addback {
                AddBack::PreConv => "pre_conv",
                AddBack::PostConv => "post_conv",
            }
            .into(),
        );
        kv("loss.alpha", self.loss.alpha.to_string());
        kv("loss.dice_eps", self.loss.dice_eps.to_string());
        kv("loss.bce_weight", self.loss.bce_weight.to_string());
        kv("loss.dice_weight", self.loss.dice_weight.to_string());
        kv("loss.ce_weight", self.loss.ce_weight.to_string());
        kv("loss.lovasz_weight", self.loss.lovasz_weight.to_string());
        kv(
            "loss.lovasz_classes",
            match self.loss.lovasz_classes {
                LovaszClasses::Present => "present",
                LovaszClasses::All => "all",
            }
            .into(),
        );
        kv("opt.lr", self.optim.lr.to_string());
        kv("opt.weight_decay", self.optim.weight_decay.to_string());
        kv("opt.beta1", self.optim.beta1.to_string());
        kv("opt.beta2", self.optim.beta2.to_string());
        kv("opt.eps", self.optim.eps.to_string());
        kv("opt.steps", self.optim.steps.to_string());
        kv("opt.batch_size", self.optim.batch_size.to_string());
        kv("opt.clip_norm", self.optim.clip_norm.to_string());
        kv("data.train_dir", path_text(&self.data.train_dir));
        kv("data.eval_dir", path_text(&self.data.eval_dir));
        kv("data.train_count", self.data.train_count.to_string());
        kv("data.eval_count", self.data.eval_count.to_string());
        kv(
            "data.eval_split",
            match self.data.eval_split {
                EvalSplit::Train => "train",
                EvalSplit::Eval => "eval",
            }
            .into(),
        );
        kv("data.size", syn.size.to_string());
        kv("data.buildings", join(&[syn.buildings.0, syn.buildings.1]));
        kv("data.building_size", join(&[syn.building_size.0, syn.building_size.1]));
        kv("data.damage_probs", join(&syn.damage_probs));
        kv("data.noise", syn.noise.to_string());
        kv("data.gap", syn.gap.to_string());
        kv("run.seed", self.seed.to_string());
        kv("run.checkpoint_every", self.checkpoint_every.to_string());
        kv("run.out_dir", self.out_dir.display().to_string());
        kv("run.workers", self.workers.to_string());
        kv("run.debug_nan", self.debug_nan.to_string());
        kv("run.nonfinite_warn", self.nonfinite_warn.to_string());
        kv("run.target_loss", self.target_loss.to_string());
        kv("run.log_every", self.log_every.to_string());
        s
    }

    /// Synthetic-data settings with the run seed applied.
    pub fn synth(&self) -> SynthConfig {
        SynthConfig { seed: self.seed, ..self.data.synth.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.optim.validate()?;
        self.data.synth.validate()?;
        if self.model.decoder.scale_div > 4 {
            return Err(Error::Config("dec.scale must be at least 0.25".into()));
        }
        Ok(())
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        for s in 0..STAGES {
            if e.blocks[s] == 0 || e.channels[s] == 0 || e.heads[s] == 0 || e.sr_ratios[s] == 0 {
                return Err(Error::Config(format!(
                    "stage {}: blocks, channels, heads and sr_ratios must be positive",
                    s + 1
                )));
            }
            if e.channels[s] % e.heads[s] != 0 {
                return Err(Error::Config(format!(
                    "stage {}: {} channels not divisible by {} heads",
                    s + 1,
                    e.channels[s],
                    e.heads[s]
                )));
            }
            let r = self.fusion.reduction;
            if r == 0 || e.channels[s] % r != 0 {
                return Err(Error::Config(format!(
                    "fus.reduction {r} must divide stage {} channels {}",
                    s + 1,
                    e.channels[s]
                )));
            }
        }
        if e.expansion == 0 {
            return Err(Error::Config("enc.expansion must be positive".into()));
        }
        if self.fusion.kernel % 2 == 0 {
            return Err(Error::Config(format!("fus.kernel {} must be odd", self.fusion.kernel)));
        }
        if self.decoder.width == 0 {
            return Err(Error::Config("dec.width must be positive".into()));
        }
        Ok(())
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::Config(format!("loss.alpha {} must be >= 0", self.alpha)));
        }
        if !(self.dice_eps > 0.0) {
            return Err(Error::Config(format!("loss.dice_eps {} must be > 0", self.dice_eps)));
        }
        for w in [self.bce_weight, self.dice_weight, self.ce_weight, self.lovasz_weight] {
            if !(w >= 0.0) {
                return Err(Error::Config(format!("loss mixing weight {w} must be >= 0")));
            }
        }
        Ok(())
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("opt.lr {} must be > 0", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("opt.beta1 and opt.beta2 must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("opt.eps {} must be > 0", self.eps)));
        }
        if !(self.weight_decay >= 0.0) || !(self.clip_norm >= 0.0) {
            return Err(Error::Config("opt.weight_decay and opt.clip_norm must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("opt.batch_size must be positive".into()));
        }
        Ok(())
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.size % 32 != 0 {
            return Err(Error::Config(format!("data.size {} must be a positive multiple of 32", self.size)));
        }
        let (lo, hi) = self.buildings;
        if lo > hi {
            return Err(Error::Config(format!("data.buildings range {lo},{hi} is inverted")));
        }
        let (smin, smax) = self.building_size;
        if smin == 0 || smin > smax || smax > self.size {
            return Err(Error::Config(format!(
                "data.building_size {smin},{smax} must satisfy 0 < min <= max <= {}",
                self.size
            )));
        }
        let total: f64 = self.damage_probs.iter().sum();
        if self.damage_probs.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("data.damage_probs must be non-negative and sum to 1, got {total}")));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::Config("data.noise must be >= 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn published_hyperparameters_are_defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.model.encoder.blocks, [3, 4, 6, 3]);
        assert_eq!(cfg.optim.lr, 6e-5);
        assert_eq!(cfg.optim.weight_decay, 5e-3);
        assert_eq!(cfg.loss.alpha, 1.0);
    }

    #[test]
    fn comments_blank_lines_and_lists() {
        let cfg = RunConfig::parse(
            "# toy\n\nenc.channels = 8, 16, 24, 32  # widths\nenc.heads = 1,2,3,4\nfus.reduction = 2\ndec.scale = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.model.encoder.channels, [8, 16, 24, 32]);
        assert_eq!(cfg.model.decoder.scale_div, 2);
    }

    #[test]
    fn unknown_and_duplicate_keys_fail() {
        assert!(matches!(RunConfig::parse("enc.bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("opt.lr = 1\nopt.lr = 2"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("opt.lr"), Err(Error::Config(_))));
    }

    #[test]
    fn invariants_are_enforced() {
        assert!(RunConfig::parse("enc.heads = 1,2,5,8").is_err());
        assert!(RunConfig::parse("opt.lr = 0").is_err());
        assert!(RunConfig::parse("opt.beta1 = 1").is_err());
        assert!(RunConfig::parse("loss.alpha = -1").is_err());
        assert!(RunConfig::parse("loss.dice_eps = 0").is_err());
        assert!(RunConfig::parse("data.damage_probs = 0.5,0.5,0.5,0").is_err());
        assert!(RunConfig::parse("data.size = 48").is_err());
        assert!(RunConfig::parse("dec.scale = 0.3").is_err());
        assert!(RunConfig::parse("enc.blocks = 3,4,6").is_err());
    }

    #[test]
    fn full_width_preset_is_valid() {
        let cfg = RunConfig::parse(
            "enc.channels = 64,128,320,512\nenc.heads = 1,2,5,8\nfus.reduction = 16\ndec.width = 256\n",
        )
        .unwrap();
        assert_eq!(cfg.model.encoder.heads, [1, 2, 5, 8]);
    }
}
