//! Stage 2: degradation-adaptive SR training on generated pairs with a
//! parallel real-LR stream, plus single-image inference.
//!
//! Each step forwards the SR network on both input streams, updates the
//! relativistic backbone, the HR discriminator and the feature-domain
//! discriminator on detached outputs, then updates the SR network on the
//! weighted objective. SR outputs for real LR inputs never receive pixel
//! supervision; they participate only through their discriminator.

use std::path::PathBuf;

use crate::checkpoint::Checkpoint;
use crate::datasets::{BatchSampler, GeneratedPairSet, Stage2Batch, UnpairedCorpus};
use crate::error::{Error, Result};
use crate::imaging::{clamp01, ImageTensor};
use crate::losses::{self, AdaSide, GanSide, LossReport, LossWeights, Stage2Components};
use crate::networks::{
    bind, build_patch_discriminator, build_sr_network, disc_forward, eval_sr, sr_forward, DiscInput, ParamStore,
    PatchDiscSpec, SrNetSpec,
};
use crate::optim::lr_at;
use crate::rng::{stream_rng, Rng, RngState};
use crate::tape::Tape;
use crate::tensor::Tensor;

use super::{param_grads, NetState};

/// SR-network training variants (Table-style ablations).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage2Ablation {
    Full,
    /// Train on bicubic pairs (a pairset produced by an identity generator);
    /// the loss configuration is unchanged.
    BicInput,
    NoRagan,
    NoGanReal,
    NoAda,
    L1Only,
}

#[derive(Clone, Debug)]
pub struct Stage2Config {
    pub batch: usize,
    pub patch_lr: usize,
    pub lr0: f64,
    pub halve_every: u64,
    pub total_steps: u64,
    pub weights: LossWeights,
    pub seed: u64,
    pub d_steps_per_g_step: u32,
    pub log_every: u64,
    pub augment: bool,
    pub ablation: Stage2Ablation,
    pub sr_spec: SrNetSpec,
    /// Architecture of the two image discriminators (RaGAN backbone and the
    /// HR discriminator).
    pub disc_spec: PatchDiscSpec,
    /// Base width and scale-layer count of the feature discriminator; its
    /// input channels follow the SR tap.
    pub ada_disc_base: usize,
    pub ada_disc_scales: usize,
}

impl Stage2Config {
    pub fn new(sr_spec: SrNetSpec) -> Self {
        Stage2Config {
            batch: 8,
            patch_lr: 64,
            lr0: 1e-4,
            halve_every: 1_600_000,
            total_steps: 0,
            weights: LossWeights::default(),
            seed: 0,
            d_steps_per_g_step: 1,
            log_every: 50,
            augment: false,
            ablation: Stage2Ablation::Full,
            sr_spec,
            disc_spec: PatchDiscSpec::default(),
            ada_disc_base: 64,
            ada_disc_scales: 1,
        }
    }

    /// Ablation flags expressed as weight masks.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.weights;
        match self.ablation {
            Stage2Ablation::Full | Stage2Ablation::BicInput => {}
            Stage2Ablation::NoRagan => w.lambda2 = 0.0,
            Stage2Ablation::NoGanReal => w.lambda3 = 0.0,
            Stage2Ablation::NoAda => w.lambda4 = 0.0,
            Stage2Ablation::L1Only => {
                w.lambda2 = 0.0;
                w.lambda3 = 0.0;
                w.lambda4 = 0.0;
            }
        }
        w
    }

    pub fn needs_real_lr(&self) -> bool {
        let w = self.effective_weights();
        w.lambda3 > 0.0 || w.lambda4 > 0.0
    }

    fn ada_disc_spec(&self) -> PatchDiscSpec {
        PatchDiscSpec {
            base_channels: self.ada_disc_base,
            n_scale_layers: self.ada_disc_scales,
            input: DiscInput::Feature { channels: self.sr_spec.channels },
            use_norm: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.patch_lr == 0 || self.total_steps == 0 {
            return Err(Error::Config("batch, patch and total_steps must be positive".into()));
        }
        if self.d_steps_per_g_step == 0 {
            return Err(Error::Config("d_steps_per_g_step must be at least 1".into()));
        }
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        self.weights.validate()?;
        let w = self.effective_weights();
        let s = self.sr_spec.scale.get();
        if w.lambda2 > 0.0 || w.lambda3 > 0.0 {
            self.disc_spec.logit_map_size(self.patch_lr * s, self.patch_lr * s).map_err(|e| {
                Error::Config(format!("image discriminator cannot consume {0}x{0} patches: {e}", self.patch_lr * s))
            })?;
        }
        if w.lambda4 > 0.0 {
            self.ada_disc_spec().logit_map_size(self.patch_lr, self.patch_lr).map_err(|e| {
                Error::Config(format!("feature discriminator cannot consume {0}x{0} taps: {e}", self.patch_lr))
            })?;
        }
        Ok(())
    }
}

pub struct Stage2Trainer {
    cfg: Stage2Config,
    pairset: GeneratedPairSet,
    corpus: UnpairedCorpus,
    sampler: BatchSampler,
    data_rng: Rng,
    pub r: NetState,
    pub d_ra: Option<NetState>,
    pub d_hr: Option<NetState>,
    pub d_ada: Option<NetState>,
    step: u64,
    pub diagnostic_dir: Option<PathBuf>,
}

impl Stage2Trainer {
    pub fn new(pairset: GeneratedPairSet, corpus: UnpairedCorpus, cfg: Stage2Config) -> Result<Self> {
        cfg.validate()?;
        if pairset.pairs.is_empty() {
            return Err(Error::Corpus("stage 2 requires a non-empty generated pair set".into()));
        }
        if cfg.needs_real_lr() && corpus.lr_paths.is_empty() {
            return Err(Error::Config(
                "the configured losses need a real-LR corpus; only ablations without the real stream can omit it"
                    .into(),
            ));
        }
        let w = cfg.effective_weights();
        let r = NetState::new(build_sr_network(&cfg.sr_spec, &mut stream_rng(cfg.seed, "init.r"))?);
        let d_ra = (w.lambda2 > 0.0)
            .then(|| NetState::new(build_patch_discriminator(&cfg.disc_spec, &mut stream_rng(cfg.seed, "init.d_ra"))));
        let d_hr = (w.lambda3 > 0.0)
            .then(|| NetState::new(build_patch_discriminator(&cfg.disc_spec, &mut stream_rng(cfg.seed, "init.d_hr"))));
        let d_ada = (w.lambda4 > 0.0).then(|| {
            NetState::new(build_patch_discriminator(&cfg.ada_disc_spec(), &mut stream_rng(cfg.seed, "init.d_ada")))
        });
        Ok(Stage2Trainer {
            sampler: BatchSampler::new(cfg.augment),
            data_rng: stream_rng(cfg.seed, "stage2.data"),
            r,
            d_ra,
            d_hr,
            d_ada,
            step: 0,
            diagnostic_dir: None,
            pairset,
            corpus,
            cfg,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &Stage2Config {
        &self.cfg
    }

    pub fn sample_batch(&mut self) -> Result<Stage2Batch> {
        self.sampler.stage2_batch(
            &self.pairset,
            &self.corpus,
            self.cfg.batch,
            self.cfg.patch_lr,
            &mut self.data_rng,
            self.cfg.needs_real_lr(),
        )
    }

    fn update_d_ra(&mut self, real_hr: &ImageTensor, sr_gen: &ImageTensor, lr: f64) -> Result<()> {
        let Some(net) = self.d_ra.as_mut() else { return Ok(()) };
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &net.params, true);
        let real_v = tape.leaf(real_hr.clone(), false);
        let fake_v = tape.leaf(sr_gen.clone(), false);
        let c_real = disc_forward(&mut tape, &bound, &self.cfg.disc_spec, real_v)?;
        let c_fake = disc_forward(&mut tape, &bound, &self.cfg.disc_spec, fake_v)?;
        let loss = losses::ragan_loss(&mut tape, c_real, c_fake, GanSide::Discriminator)?;
        let mut grads = tape.backward(loss);
        net.apply(&param_grads(&bound, &mut grads), lr);
        Ok(())
    }

    fn update_d_hr(&mut self, real_hr: &ImageTensor, sr_real: &ImageTensor, lr: f64) -> Result<()> {
        let Some(net) = self.d_hr.as_mut() else { return Ok(()) };
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &net.params, true);
        let real_v = tape.leaf(real_hr.clone(), false);
        let fake_v = tape.leaf(sr_real.clone(), false);
        let real_logits = disc_forward(&mut tape, &bound, &self.cfg.disc_spec, real_v)?;
        let fake_logits = disc_forward(&mut tape, &bound, &self.cfg.disc_spec, fake_v)?;
        let loss = losses::gan_real_hr_loss(&mut tape, real_logits, fake_logits, GanSide::Discriminator)?;
        let mut grads = tape.backward(loss);
        net.apply(&param_grads(&bound, &mut grads), lr);
        Ok(())
    }

    fn update_d_ada(&mut self, feat_gen: &Tensor<f32>, feat_real: &Tensor<f32>, lr: f64) -> Result<()> {
        let Some(net) = self.d_ada.as_mut() else { return Ok(()) };
        let spec = self.cfg.ada_disc_spec();
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &net.params, true);
        let gen_v = tape.leaf(feat_gen.clone(), false);
        let real_v = tape.leaf(feat_real.clone(), false);
        let gen_logits = disc_forward(&mut tape, &bound, &spec, gen_v)?;
        let real_logits = disc_forward(&mut tape, &bound, &spec, real_v)?;
        let loss = losses::adaptive_feature_loss(&mut tape, gen_logits, real_logits, AdaSide::Discriminator)?;
        let mut grads = tape.backward(loss);
        net.apply(&param_grads(&bound, &mut grads), lr);
        Ok(())
    }

    /// One full optimization step; returns the SR-side report.
    pub fn step(&mut self) -> Result<LossReport> {
        let cfg = self.cfg.clone();
        let lr = lr_at(self.step, cfg.lr0, cfg.halve_every);
        let weights = cfg.effective_weights();
        let batch = self.sample_batch()?;

        // SR forward on both streams, with gradients.
        let mut tape = Tape::new();
        let r_bound = bind(&mut tape, &self.r.params, true);
        let gen_v = tape.leaf(batch.gen_lr.clone(), false);
        let (sr_gen, feat_gen) = sr_forward(&mut tape, &r_bound, &cfg.sr_spec, gen_v)?;
        let real_stream = match &batch.real_lr {
            Some(rl) => {
                let v = tape.leaf(rl.clone(), false);
                Some(sr_forward(&mut tape, &r_bound, &cfg.sr_spec, v)?)
            }
            None => None,
        };

        // Discriminator updates on detached outputs of the pre-update R.
        let sr_gen_val = tape.value(sr_gen).clone();
        let real_vals = real_stream.map(|(sr, feat)| (tape.value(sr).clone(), tape.value(feat).clone()));
        let feat_gen_val = tape.value(feat_gen).clone();
        for _ in 0..cfg.d_steps_per_g_step {
            if weights.lambda2 > 0.0 {
                self.update_d_ra(&batch.real_hr, &sr_gen_val, lr)?;
            }
            if let Some((sr_real_val, _)) = &real_vals {
                if weights.lambda3 > 0.0 {
                    self.update_d_hr(&batch.real_hr, sr_real_val, lr)?;
                }
            }
            if let Some((_, feat_real_val)) = &real_vals {
                if weights.lambda4 > 0.0 {
                    self.update_d_ada(&feat_gen_val, feat_real_val, lr)?;
                }
            }
        }

        // SR losses against the updated discriminators.
        let hr_v = tape.leaf(batch.real_hr.clone(), false);
        let l1 = Some(losses::l1_content_loss(&mut tape, sr_gen, hr_v)?);
        let ragan = match &self.d_ra {
            Some(d) if weights.lambda2 > 0.0 => {
                let d_bound = bind(&mut tape, &d.params, false);
                let c_real = disc_forward(&mut tape, &d_bound, &cfg.disc_spec, hr_v)?;
                let c_fake = disc_forward(&mut tape, &d_bound, &cfg.disc_spec, sr_gen)?;
                Some(losses::ragan_loss(&mut tape, c_real, c_fake, GanSide::Generator)?)
            }
            _ => None,
        };
        let gan_real = match (&self.d_hr, &real_stream) {
            (Some(d), Some((sr_real, _))) if weights.lambda3 > 0.0 => {
                let d_bound = bind(&mut tape, &d.params, false);
                let logits = disc_forward(&mut tape, &d_bound, &cfg.disc_spec, *sr_real)?;
                // Non-saturating generator side uses only the fake logits.
                Some(losses::gan_real_hr_loss(&mut tape, logits, logits, GanSide::Generator)?)
            }
            _ => None,
        };
        let ada = match (&self.d_ada, &real_stream) {
            (Some(d), Some((_, feat_real))) if weights.lambda4 > 0.0 => {
                let spec = cfg.ada_disc_spec();
                let d_bound = bind(&mut tape, &d.params, false);
                let gen_logits = disc_forward(&mut tape, &d_bound, &spec, feat_gen)?;
                let real_logits = disc_forward(&mut tape, &d_bound, &spec, *feat_real)?;
                Some(losses::adaptive_feature_loss(&mut tape, gen_logits, real_logits, AdaSide::Extractor)?)
            }
            _ => None,
        };

        let comps = Stage2Components { l1, ragan, gan_real, ada };
        let (total, report) = losses::stage2_objective(&mut tape, self.step, comps, &weights)?;
        self.guard(&report)?;

        let mut grads = tape.backward(total);
        let r_grads = param_grads(&r_bound, &mut grads);
        self.r.apply(&r_grads, lr);
        self.step += 1;
        Ok(report)
    }

    /// Discriminator updates only, from gradient-free SR forwards. Used to
    /// verify that discriminator optimization never touches the SR
    /// parameters; does not advance the step counter.
    pub fn discriminators_only_step(&mut self, batch: &Stage2Batch) -> Result<()> {
        let cfg = self.cfg.clone();
        let lr = lr_at(self.step, cfg.lr0, cfg.halve_every);
        let weights = cfg.effective_weights();
        let (sr_gen, feat_gen) = eval_sr(&cfg.sr_spec, &self.r.params, &batch.gen_lr)?;
        let real_vals = match &batch.real_lr {
            Some(rl) => Some(eval_sr(&cfg.sr_spec, &self.r.params, rl)?),
            None => None,
        };
        if weights.lambda2 > 0.0 {
            self.update_d_ra(&batch.real_hr, &sr_gen, lr)?;
        }
        if let Some((sr_real, feat_real)) = &real_vals {
            if weights.lambda3 > 0.0 {
                self.update_d_hr(&batch.real_hr, sr_real, lr)?;
            }
            if weights.lambda4 > 0.0 {
                self.update_d_ada(&feat_gen, feat_real, lr)?;
            }
        }
        Ok(())
    }

    fn guard(&self, report: &LossReport) -> Result<()> {
        if report.all_finite() {
            return Ok(());
        }
        if let Some(dir) = &self.diagnostic_dir {
            let path = dir.join(format!("diverged_step{}.ckpt", self.step));
            let _ = std::fs::create_dir_all(dir);
            let _ = self.checkpoint([0u8; 32]).save(&path);
            log::error!("divergence at step {}; diagnostic checkpoint at {}", self.step, path.display());
        }
        Err(Error::Numeric(format!("non-finite loss at step {}: {}", self.step, report.to_json_line())))
    }

    pub fn run(&mut self) -> Result<Vec<LossReport>> {
        let mut reports = Vec::new();
        while self.step < self.cfg.total_steps {
            let report = self.step()?;
            let done = self.step;
            if done % self.cfg.log_every.max(1) == 0 || done == self.cfg.total_steps {
                log::info!("stage2 {}", report.to_json_line());
                reports.push(report);
            }
        }
        Ok(reports)
    }

    pub fn checkpoint(&self, config_digest: [u8; 32]) -> Checkpoint {
        let mut ckpt = Checkpoint::new(2, self.step, self.cfg.seed, config_digest);
        ckpt.add_net("r", &self.r.params, &self.r.adam);
        if let Some(d) = &self.d_ra {
            ckpt.add_net("d_ra", &d.params, &d.adam);
        }
        if let Some(d) = &self.d_hr {
            ckpt.add_net("d_hr", &d.params, &d.adam);
        }
        if let Some(d) = &self.d_ada {
            ckpt.add_net("d_ada", &d.params, &d.adam);
        }
        ckpt.rngs.push(("data".into(), RngState::capture(&self.data_rng)));
        ckpt
    }

    pub fn resume(
        pairset: GeneratedPairSet,
        corpus: UnpairedCorpus,
        cfg: Stage2Config,
        ckpt: &Checkpoint,
    ) -> Result<Self> {
        if ckpt.stage != 2 {
            return Err(Error::Checkpoint(format!("expected stage 2 checkpoint, got stage {}", ckpt.stage)));
        }
        if ckpt.seed != cfg.seed {
            return Err(Error::Checkpoint(format!("checkpoint seed {} != config seed {}", ckpt.seed, cfg.seed)));
        }
        let mut trainer = Stage2Trainer::new(pairset, corpus, cfg)?;
        let (params, adam) = ckpt.extract_net("r")?;
        trainer.r = NetState { params, adam };
        if trainer.d_ra.is_some() {
            let (params, adam) = ckpt.extract_net("d_ra")?;
            trainer.d_ra = Some(NetState { params, adam });
        }
        if trainer.d_hr.is_some() {
            let (params, adam) = ckpt.extract_net("d_hr")?;
            trainer.d_hr = Some(NetState { params, adam });
        }
        if trainer.d_ada.is_some() {
            let (params, adam) = ckpt.extract_net("d_ada")?;
            trainer.d_ada = Some(NetState { params, adam });
        }
        trainer.data_rng = ckpt.rng("data")?.restore();
        trainer.step = ckpt.step;
        Ok(trainer)
    }
}

/// Default inference tiling: 128-px LR tiles with 16-px overlap.
pub const INFER_TILE: usize = 128;
pub const INFER_OVERLAP: usize = 16;

/// Super-resolve a single image, tiling large inputs with feather-blended
/// overlaps. Output dims are input dims times the scale factor, clamped to
/// `[0, 1]`.
pub fn super_resolve(params: &ParamStore<f32>, spec: &SrNetSpec, img: &ImageTensor) -> Result<ImageTensor> {
    super_resolve_tiled(params, spec, img, INFER_TILE, INFER_OVERLAP)
}

fn tile_starts(n: usize, tile: usize, overlap: usize) -> Vec<usize> {
    if n <= tile {
        return vec![0];
    }
    let stride = tile - overlap;
    let mut starts: Vec<usize> = (0..).map(|i| i * stride).take_while(|&s| s + tile < n).collect();
    starts.push(n - tile);
    starts
}

pub fn super_resolve_tiled(
    params: &ParamStore<f32>,
    spec: &SrNetSpec,
    img: &ImageTensor,
    tile: usize,
    overlap: usize,
) -> Result<ImageTensor> {
    let [b, c, h, w] = img.shape();
    if b != 1 || c != 3 {
        return Err(Error::Argument(format!("super_resolve expects one RGB image, got {:?}", img.shape())));
    }
    if h < 8 || w < 8 {
        return Err(Error::Argument(format!("input {h}x{w} is smaller than 8x8")));
    }
    if overlap >= tile {
        return Err(Error::Argument(format!("overlap {overlap} must be smaller than tile {tile}")));
    }
    let s = spec.scale.get();
    if h <= tile && w <= tile {
        let (sr, _) = eval_sr(spec, params, img)?;
        return Ok(clamp01(&sr));
    }

    // Feathered accumulation: each tile contributes with a per-axis tent
    // that ramps linearly across the overlap band; the accumulated weights
    // normalize out.
    let ramp = |u: usize, len: usize| -> f64 {
        let cap = (overlap + 1) as f64;
        ((u + 1).min(len - u) as f64 / cap).min(1.0)
    };
    let mut acc = vec![0.0f64; 3 * h * s * w * s];
    let mut wsum = vec![0.0f64; h * s * w * s];
    let (ow_full, oh_full) = (w * s, h * s);
    for &y0 in &tile_starts(h, tile, overlap) {
        for &x0 in &tile_starts(w, tile, overlap) {
            let th = tile.min(h);
            let tw = tile.min(w);
            let mut patch = Tensor::zeros([1, 3, th, tw]);
            for ch in 0..3 {
                for y in 0..th {
                    let src = &img.data()[ch * h * w + (y0 + y) * w + x0..][..tw];
                    patch.data_mut()[ch * th * tw + y * tw..][..tw].copy_from_slice(src);
                }
            }
            let (sr, _) = eval_sr(spec, params, &patch)?;
            for y in 0..th * s {
                let wy = ramp(y / s, th);
                for x in 0..tw * s {
                    let wgt = wy * ramp(x / s, tw);
                    let oy = y0 * s + y;
                    let ox = x0 * s + x;
                    wsum[oy * ow_full + ox] += wgt;
                    for ch in 0..3 {
                        acc[ch * oh_full * ow_full + oy * ow_full + ox] += wgt * sr.data()[ch * th * s * tw * s + y * tw * s + x] as f64;
                    }
                }
            }
        }
    }
    let mut out = Tensor::zeros([1, 3, oh_full, ow_full]);
    for ch in 0..3 {
        for i in 0..oh_full * ow_full {
            out.data_mut()[ch * oh_full * ow_full + i] = (acc[ch * oh_full * ow_full + i] / wsum[i]) as f32;
        }
    }
    Ok(clamp01(&out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::scan_corpus;
    use crate::imaging::{self, ScaleFactor};
    use crate::networks::TapPoint;
    use crate::trainer::stage1::synthesize_lr_corpus;
    use crate::networks::{build_generator, GeneratorSpec};

    fn tiny_sr_spec(scale: u32) -> SrNetSpec {
        SrNetSpec {
            n_groups: 2,
            n_blocks_per_group: 1,
            channels: 8,
            ca_reduction: 4,
            scale: ScaleFactor::new(scale).unwrap(),
            tap_point: TapPoint::AfterGroup(0),
        }
    }

    fn tiny_cfg(seed: u64, steps: u64) -> Stage2Config {
        let mut cfg = Stage2Config::new(tiny_sr_spec(4));
        cfg.batch = 2;
        cfg.patch_lr = 8;
        cfg.total_steps = steps;
        cfg.seed = seed;
        cfg.log_every = 1;
        cfg.disc_spec = PatchDiscSpec { base_channels: 8, n_scale_layers: 2, input: DiscInput::Image, use_norm: true };
        cfg.ada_disc_base = 8;
        cfg.ada_disc_scales = 1;
        cfg
    }

    struct World {
        _dir: tempfile::TempDir,
        pairset: GeneratedPairSet,
        corpus: UnpairedCorpus,
    }

    fn tiny_world() -> World {
        let dir = tempfile::tempdir().unwrap();
        let scale = ScaleFactor::new(4).unwrap();
        let lr_dir = dir.path().join("lr");
        let hr_dir = dir.path().join("hr");
        std::fs::create_dir_all(&lr_dir).unwrap();
        std::fs::create_dir_all(&hr_dir).unwrap();
        let mut rng = stream_rng(7, "s2-test");
        for i in 0..2 {
            let hr = crate::smoke::procedural_image(48, &mut rng).unwrap();
            imaging::save_image(&hr, hr_dir.join(format!("h{i}.png"))).unwrap();
            let lr = crate::smoke::oracle_degrade(&hr, scale, 1.0, 0.01, &mut rng).unwrap();
            imaging::save_image(&lr, lr_dir.join(format!("l{i}.png"))).unwrap();
        }
        let corpus = scan_corpus(&lr_dir, &hr_dir, scale).unwrap();
        let gspec = GeneratorSpec::tiny(1, 8);
        let g = build_generator::<f32>(&gspec, &mut stream_rng(0, "init.g"));
        let pairset =
            synthesize_lr_corpus(&g, &gspec, "fresh", &corpus.hr_paths, scale, dir.path().join("synth")).unwrap();
        World { _dir: dir, pairset, corpus }
    }

    #[test]
    fn l1_only_report_has_exactly_one_term() {
        let w = tiny_world();
        let mut cfg = tiny_cfg(0, 1);
        cfg.ablation = Stage2Ablation::L1Only;
        let mut t = Stage2Trainer::new(w.pairset, w.corpus, cfg).unwrap();
        assert!(t.d_ra.is_none() && t.d_hr.is_none() && t.d_ada.is_none());
        let report = t.step().unwrap();
        assert_eq!(report.terms.len(), 1);
        assert_eq!(report.terms[0].0, "l1");
    }

    #[test]
    fn full_mode_with_lambda4_zero_matches_no_ada_stepwise() {
        let w = tiny_world();
        let mut cfg_a = tiny_cfg(3, 4);
        cfg_a.weights.lambda4 = 0.0;
        let mut cfg_b = tiny_cfg(3, 4);
        cfg_b.ablation = Stage2Ablation::NoAda;
        let mut ta = Stage2Trainer::new(w.pairset.clone(), w.corpus.clone(), cfg_a).unwrap();
        let mut tb = Stage2Trainer::new(w.pairset, w.corpus, cfg_b).unwrap();
        for _ in 0..4 {
            let ra = ta.step().unwrap();
            let rb = tb.step().unwrap();
            assert_eq!(ra.to_json_line(), rb.to_json_line());
            assert_eq!(ta.r.params, tb.r.params);
        }
    }

    #[test]
    fn missing_real_lr_corpus_is_config_error_outside_permitted_ablations() {
        let w = tiny_world();
        let empty = UnpairedCorpus { lr_paths: Vec::new(), hr_paths: w.corpus.hr_paths.clone(), scale: w.corpus.scale };
        let cfg = tiny_cfg(0, 1);
        assert!(matches!(Stage2Trainer::new(w.pairset.clone(), empty.clone(), cfg), Err(Error::Config(_))));
        let mut cfg = tiny_cfg(0, 1);
        cfg.ablation = Stage2Ablation::L1Only;
        assert!(Stage2Trainer::new(w.pairset, empty, cfg).is_ok());
    }

    #[test]
    fn discriminator_updates_never_touch_r_and_vice_versa() {
        let w = tiny_world();
        let mut t = Stage2Trainer::new(w.pairset, w.corpus, tiny_cfg(5, 2)).unwrap();
        let batch = t.sample_batch().unwrap();
        let r_before = t.r.params.clone();
        t.discriminators_only_step(&batch).unwrap();
        assert_eq!(t.r.params, r_before, "discriminator step must not change R");
        // A full step changes R but also advances the discriminators; verify
        // R actually moved under the composite objective.
        t.step().unwrap();
        assert_ne!(t.r.params, r_before);
    }

    #[test]
    fn ada_gradient_stops_at_the_tap_boundary() {
        // Backward of the extractor-side alignment loss alone must leave
        // everything past the tap (later groups, upsampler, tail) untouched.
        let cfg = tiny_cfg(6, 1);
        let r = build_sr_network::<f32>(&cfg.sr_spec, &mut stream_rng(0, "r")).unwrap();
        let d_ada = build_patch_discriminator::<f32>(&cfg.ada_disc_spec(), &mut stream_rng(1, "d"));
        let mut tape = Tape::new();
        let r_bound = bind(&mut tape, &r, true);
        let mk = |seed: u64| {
            let mut rng = stream_rng(seed, "x");
            let mut t = Tensor::zeros([1, 3, 8, 8]);
            for v in t.data_mut() {
                use rand::Rng as _;
                *v = rng.random_range(0.0..1.0f32);
            }
            t
        };
        let (xa, xb) = (mk(1), mk(2));
        let xa_v = tape.leaf(xa, false);
        let xb_v = tape.leaf(xb, false);
        let (_, feat_gen) = sr_forward(&mut tape, &r_bound, &cfg.sr_spec, xa_v).unwrap();
        let (_, feat_real) = sr_forward(&mut tape, &r_bound, &cfg.sr_spec, xb_v).unwrap();
        let d_bound = bind(&mut tape, &d_ada, false);
        let spec = cfg.ada_disc_spec();
        let gl = disc_forward(&mut tape, &d_bound, &spec, feat_gen).unwrap();
        let rl = disc_forward(&mut tape, &d_bound, &spec, feat_real).unwrap();
        let loss = losses::adaptive_feature_loss(&mut tape, gl, rl, AdaSide::Extractor).unwrap();
        let mut grads = tape.backward(loss);
        let g = param_grads(&r_bound, &mut grads);
        for name in ["group1.block0.conv0.weight", "up0.weight", "up1.weight", "tail.weight"] {
            assert!(!g.contains_key(name), "{name} received gradient across the tap");
        }
        assert!(g.contains_key("shallow.weight"));
        assert!(g.contains_key("group0.block0.conv0.weight"));
    }

    #[test]
    fn super_resolve_shape_contract_and_determinism() {
        let spec = tiny_sr_spec(4);
        let params = build_sr_network::<f32>(&spec, &mut stream_rng(2, "r")).unwrap();
        for size in [16usize, 33, 200] {
            let img = Tensor::full([1, 3, size, size], 0.5);
            let out = super_resolve(&params, &spec, &img).unwrap();
            assert_eq!(out.shape(), [1, 3, size * 4, size * 4]);
        }
        let img = Tensor::full([1, 3, 20, 20], 0.3);
        assert_eq!(super_resolve(&params, &spec, &img).unwrap(), super_resolve(&params, &spec, &img).unwrap());
        let small = Tensor::full([1, 3, 7, 9], 0.3);
        assert!(super_resolve(&params, &spec, &small).is_err());
    }

    #[test]
    fn tiled_inference_matches_untiled_in_tile_interiors() {
        // Channel attention pools globally, so a 128-px tile and the full
        // 160-px image see slightly different statistics even deep in the
        // tile interior; measured drift at this configuration stays below
        // 5e-3 (typically a few 1e-4) over seeds. That bound is frozen here.
        for seed in [3u64, 4, 5] {
            let spec = tiny_sr_spec(2);
            let params = build_sr_network::<f32>(&spec, &mut stream_rng(seed, "r")).unwrap();
            let mut rng = stream_rng(seed + 1, "img");
            let mut img = Tensor::zeros([1, 3, 160, 160]);
            for v in img.data_mut() {
                use rand::Rng as _;
                *v = rng.random_range(0.0..1.0f32);
            }
            let untiled = super_resolve_tiled(&params, &spec, &img, 256, 16).unwrap();
            let tiled = super_resolve_tiled(&params, &spec, &img, 128, 16).unwrap();
            // Compare away from tile seams: tiles start at 0 and 32, so
            // seams live in LR band [32, 128). Check the pure-interior
            // regions of both tiles, 8 LR px away from any seam or border.
            let s = 2;
            let mut max_diff = 0.0f32;
            for ch in 0..3 {
                for y in (8 * s)..(24 * s) {
                    for x in (8 * s)..(24 * s) {
                        max_diff = max_diff.max((tiled.at(0, ch, y, x) - untiled.at(0, ch, y, x)).abs());
                    }
                }
                for y in (136 * s)..(152 * s) {
                    for x in (136 * s)..(152 * s) {
                        max_diff = max_diff.max((tiled.at(0, ch, y, x) - untiled.at(0, ch, y, x)).abs());
                    }
                }
            }
            assert!(max_diff < 5e-3, "seed {seed}: interior mismatch {max_diff}");
        }
    }
}
