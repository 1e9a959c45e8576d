//! Declarative run configuration.
//!
//! The config file is TOML with sections `[data]`, `[networks]`, `[weights]`,
//! `[stage1]`, `[stage2]` and `[run]`. Published training defaults are
//! pre-filled (weights 2/2/0.5 and 1/0.1/1/2, batch 8, learning rate 1e-4,
//! patch 64, halving every 1.6M steps); `total_steps` has no published value
//! and must be given by any config that trains. Unknown keys are rejected
//! with the offending key and line. A config that parses successfully has
//! also passed every invariant check, so nothing fails late mid-training.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::datasets::{SplitMode, SplitSpec};
use crate::error::{Error, Result};
use crate::imaging::ScaleFactor;
use crate::losses::LossWeights;
use crate::networks::{DiscInput, GeneratorSpec, PatchDiscSpec, SrNetSpec, TapPoint};
use crate::trainer::{Stage1Ablation, Stage1Config, Stage2Ablation, Stage2Config};

#[derive(Clone, Debug, Serialize, Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub lr_dir: Option<PathBuf>,
    pub hr_dir: Option<PathBuf>,
    pub scale: Option<u32>,
    /// `basic` or `non_overlapping`.
    pub split: Option<String>,
    pub n_prime: Option<usize>,
    /// Seed for the split permutation; defaults to `run.seed`.
    pub split_seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NetworksSection {
    pub gen_blocks: usize,
    pub gen_channels: usize,
    pub sr_groups: usize,
    pub sr_blocks: usize,
    pub sr_channels: usize,
    pub ca_reduction: usize,
    /// `shallow` or `groupK` (e.g. `group0`).
    pub tap: String,
    pub disc_base: usize,
    pub disc_scales: usize,
    pub ada_disc_base: usize,
    pub ada_disc_scales: usize,
}

impl Default for NetworksSection {
    fn default() -> Self {
        NetworksSection {
            gen_blocks: 8,
            gen_channels: 64,
            sr_groups: 5,
            sr_blocks: 10,
            sr_channels: 64,
            ca_reduction: 16,
            tap: "group0".into(),
            disc_base: 64,
            disc_scales: 3,
            ada_disc_base: 64,
            ada_disc_scales: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Stage1Section {
    /// Required: no published default exists for the iteration count.
    pub total_steps: u64,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_patch")]
    pub patch: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_halve_every")]
    pub halve_every: u64,
    #[serde(default = "default_d_steps")]
    pub d_steps: u32,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    #[serde(default)]
    pub augment: bool,
    #[serde(default)]
    pub fake_pool: bool,
    #[serde(default = "default_fake_pool_size")]
    pub fake_pool_size: usize,
    /// `full`, `gan_only` or `one_cycle`.
    #[serde(default = "default_ablation")]
    pub ablation: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Stage2Section {
    pub total_steps: u64,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_patch")]
    pub patch: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_halve_every")]
    pub halve_every: u64,
    #[serde(default = "default_d_steps")]
    pub d_steps: u32,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    #[serde(default)]
    pub augment: bool,
    /// `full`, `bic_input`, `no_ragan`, `no_gan_real`, `no_ada` or `l1_only`.
    #[serde(default = "default_ablation")]
    pub ablation: String,
}

fn default_batch() -> usize {
    8
}
fn default_patch() -> usize {
    64
}
fn default_lr() -> f64 {
    1e-4
}
fn default_halve_every() -> u64 {
    1_600_000
}
fn default_d_steps() -> u32 {
    1
}
fn default_log_every() -> u64 {
    50
}
fn default_fake_pool_size() -> usize {
    50
}
fn default_ablation() -> String {
    "full".into()
}

#[derive(Clone, Debug, Serialize, Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataSection,
    pub networks: NetworksSection,
    pub weights: LossWeights,
    pub stage1: Option<Stage1Section>,
    pub stage2: Option<Stage2Section>,
    pub run: RunSection,
}

impl RunConfig {
    pub fn parse(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if let Some(s) = self.data.scale {
            ScaleFactor::new(s)?;
        }
        if let Some(split) = &self.data.split {
            match split.as_str() {
                "basic" => {}
                "non_overlapping" => {
                    let n = self
                        .data
                        .n_prime
                        .ok_or_else(|| Error::Config("data.split = non_overlapping requires data.n_prime".into()))?;
                    if n == 0 {
                        return Err(Error::Config("data.n_prime must be positive".into()));
                    }
                }
                other => {
                    return Err(Error::Config(format!(
                        "data.split must be `basic` or `non_overlapping`, got `{other}`"
                    )))
                }
            }
        }
        self.tap_point()?;
        if self.networks.ca_reduction > self.networks.sr_channels || self.networks.ca_reduction == 0 {
            return Err(Error::Config(format!(
                "networks.ca_reduction {} must be in 1..={}",
                self.networks.ca_reduction, self.networks.sr_channels
            )));
        }
        if let Some(s1) = &self.stage1 {
            parse_stage1_ablation(&s1.ablation)?;
            // Build the full trainer config so every structural invariant is
            // checked at parse time.
            self.stage1_config()?;
        }
        if let Some(s2) = &self.stage2 {
            parse_stage2_ablation(&s2.ablation)?;
            if self.stage2_config().is_err() && self.data.scale.is_none() {
                return Err(Error::Config("stage2 requires data.scale".into()));
            }
            self.stage2_config()?;
        }
        Ok(())
    }

    /// Digest of the canonical serialized form, recorded in checkpoints.
    pub fn digest(&self) -> [u8; 32] {
        let canonical = toml::to_string(self).expect("config serializes");
        checkpoint::config_digest(&canonical)
    }

    pub fn scale(&self) -> Result<ScaleFactor> {
        let s = self.data.scale.ok_or_else(|| Error::Config("data.scale is required".into()))?;
        ScaleFactor::new(s)
    }

    pub fn lr_dir(&self) -> Result<&Path> {
        self.data.lr_dir.as_deref().ok_or_else(|| Error::Config("data.lr_dir is required".into()))
    }

    pub fn hr_dir(&self) -> Result<&Path> {
        self.data.hr_dir.as_deref().ok_or_else(|| Error::Config("data.hr_dir is required".into()))
    }

    pub fn split_spec(&self) -> Result<Option<SplitSpec>> {
        match self.data.split.as_deref() {
            None | Some("basic") => Ok(None),
            Some("non_overlapping") => {
                let n_prime =
                    self.data.n_prime.ok_or_else(|| Error::Config("data.n_prime is required".into()))?;
                Ok(Some(SplitSpec { n_prime, mode: SplitMode::NonOverlapping }))
            }
            Some(other) => Err(Error::Config(format!("unknown split mode `{other}`"))),
        }
    }

    pub fn split_seed(&self) -> u64 {
        self.data.split_seed.unwrap_or(self.run.seed)
    }

    fn tap_point(&self) -> Result<TapPoint> {
        let tap = &self.networks.tap;
        if tap == "shallow" {
            return Ok(TapPoint::AfterShallow);
        }
        if let Some(k) = tap.strip_prefix("group") {
            let k: usize =
                k.parse().map_err(|_| Error::Config(format!("networks.tap: bad group index in `{tap}`")))?;
            if k >= self.networks.sr_groups {
                return Err(Error::Config(format!(
                    "networks.tap group {k} out of range (sr_groups = {})",
                    self.networks.sr_groups
                )));
            }
            return Ok(TapPoint::AfterGroup(k));
        }
        Err(Error::Config(format!("networks.tap must be `shallow` or `groupK`, got `{tap}`")))
    }

    pub fn gen_spec(&self) -> GeneratorSpec {
        GeneratorSpec { n_res_blocks: self.networks.gen_blocks, channels: self.networks.gen_channels, global_skip: true }
    }

    pub fn sr_spec(&self) -> Result<SrNetSpec> {
        Ok(SrNetSpec {
            n_groups: self.networks.sr_groups,
            n_blocks_per_group: self.networks.sr_blocks,
            channels: self.networks.sr_channels,
            ca_reduction: self.networks.ca_reduction,
            scale: self.scale()?,
            tap_point: self.tap_point()?,
        })
    }

    pub fn disc_spec(&self) -> PatchDiscSpec {
        PatchDiscSpec {
            base_channels: self.networks.disc_base,
            n_scale_layers: self.networks.disc_scales,
            input: DiscInput::Image,
            use_norm: true,
        }
    }

    pub fn stage1_config(&self) -> Result<Stage1Config> {
        let s = self.stage1.as_ref().ok_or_else(|| Error::Config("missing [stage1] section".into()))?;
        let cfg = Stage1Config {
            batch: s.batch,
            patch_lr: s.patch,
            lr0: s.lr,
            halve_every: s.halve_every,
            total_steps: s.total_steps,
            weights: self.weights,
            seed: self.run.seed,
            d_steps_per_g_step: s.d_steps,
            log_every: s.log_every,
            augment: s.augment,
            use_fake_pool: s.fake_pool,
            fake_pool_size: s.fake_pool_size,
            ablation: parse_stage1_ablation(&s.ablation)?,
            gen_spec: self.gen_spec(),
            disc_spec: self.disc_spec(),
        };
        // Surface structural problems (patch too small for the
        // discriminator, bad rates) now rather than at step one.
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn stage2_config(&self) -> Result<Stage2Config> {
        let s = self.stage2.as_ref().ok_or_else(|| Error::Config("missing [stage2] section".into()))?;
        let cfg = Stage2Config {
            batch: s.batch,
            patch_lr: s.patch,
            lr0: s.lr,
            halve_every: s.halve_every,
            total_steps: s.total_steps,
            weights: self.weights,
            seed: self.run.seed,
            d_steps_per_g_step: s.d_steps,
            log_every: s.log_every,
            augment: s.augment,
            ablation: parse_stage2_ablation(&s.ablation)?,
            sr_spec: self.sr_spec()?,
            disc_spec: self.disc_spec(),
            ada_disc_base: self.networks.ada_disc_base,
            ada_disc_scales: self.networks.ada_disc_scales,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_stage1_ablation(s: &str) -> Result<Stage1Ablation> {
    match s {
        "full" => Ok(Stage1Ablation::Full),
        "gan_only" => Ok(Stage1Ablation::GanOnly),
        "one_cycle" => Ok(Stage1Ablation::OneCycle),
        other => Err(Error::Config(format!(
            "stage1.ablation must be one of full|gan_only|one_cycle, got `{other}`"
        ))),
    }
}

fn parse_stage2_ablation(s: &str) -> Result<Stage2Ablation> {
    match s {
        "full" => Ok(Stage2Ablation::Full),
        "bic_input" => Ok(Stage2Ablation::BicInput),
        "no_ragan" => Ok(Stage2Ablation::NoRagan),
        "no_gan_real" => Ok(Stage2Ablation::NoGanReal),
        "no_ada" => Ok(Stage2Ablation::NoAda),
        "l1_only" => Ok(Stage2Ablation::L1Only),
        other => Err(Error::Config(format!(
            "stage2.ablation must be one of full|bic_input|no_ragan|no_gan_real|no_ada|l1_only, got `{other}`"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_weights_section_gives_published_defaults() {
        let cfg = RunConfig::parse_str("[weights]\n").unwrap();
        assert_eq!(cfg.weights, LossWeights::default());
        assert_eq!(cfg.weights.w1, 2.0);
        assert_eq!(cfg.weights.lambda2, 0.1);
    }

    #[test]
    fn partial_weights_override_keeps_other_defaults() {
        let cfg = RunConfig::parse_str("[weights]\nlambda2 = 0.001\n").unwrap();
        assert_eq!(cfg.weights.lambda2, 0.001);
        assert_eq!(cfg.weights.lambda1, 1.0);
        assert_eq!(cfg.weights.w3, 0.5);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = RunConfig::parse_str("[weights]\nlambda9 = 1.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("lambda9"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn type_mismatch_is_config_error() {
        assert!(matches!(RunConfig::parse_str("[stage1]\ntotal_steps = \"many\"\n"), Err(Error::Config(_))));
    }

    #[test]
    fn stage_sections_require_total_steps() {
        let err = RunConfig::parse_str("[stage1]\nbatch = 8\n").unwrap_err();
        assert!(err.to_string().contains("total_steps"), "{err}");
    }

    #[test]
    fn ablation_flag_maps_to_weight_mask() {
        let text = r#"
[data]
scale = 4
[stage2]
total_steps = 10
ablation = "no_ada"
"#;
        let cfg = RunConfig::parse_str(text).unwrap();
        let s2 = cfg.stage2_config().unwrap();
        assert_eq!(s2.effective_weights().lambda4, 0.0);
        assert_eq!(s2.weights.lambda4, 2.0);
    }

    #[test]
    fn paper_defaults_fill_stage_sections() {
        let text = "[data]\nscale = 4\n[stage1]\ntotal_steps = 100\n";
        let cfg = RunConfig::parse_str(text).unwrap();
        let s1 = cfg.stage1_config().unwrap();
        assert_eq!(s1.batch, 8);
        assert_eq!(s1.patch_lr, 64);
        assert_eq!(s1.lr0, 1e-4);
        assert_eq!(s1.halve_every, 1_600_000);
    }

    #[test]
    fn invariant_violations_fail_at_parse_time() {
        // Patch too small for the default 3-scale discriminator.
        let text = "[data]\nscale = 4\n[stage1]\ntotal_steps = 10\npatch = 16\n";
        assert!(matches!(RunConfig::parse_str(text), Err(Error::Config(_))));
        // Bad tap group.
        let text = "[networks]\ntap = \"group9\"\n";
        assert!(matches!(RunConfig::parse_str(text), Err(Error::Config(_))));
        // Negative weight.
        let text = "[weights]\nw1 = -1.0\n";
        assert!(matches!(RunConfig::parse_str(text), Err(Error::Config(_))));
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = RunConfig::parse_str("[run]\nseed = 1\n").unwrap();
        let b = RunConfig::parse_str("[run]\nseed = 1\n").unwrap();
        let c = RunConfig::parse_str("[run]\nseed = 2\n").unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn split_spec_requires_fields() {
        let cfg = RunConfig::parse_str("[data]\nsplit = \"non_overlapping\"\nn_prime = 300\n").unwrap();
        let split = cfg.split_spec().unwrap().unwrap();
        assert_eq!(split.n_prime, 300);
        assert!(matches!(
            RunConfig::parse_str("[data]\nsplit = \"non_overlapping\"\n"),
            Err(Error::Config(_))
        ));
    }
}
