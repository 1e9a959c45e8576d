//! Desk-scale benchmark harness: runs the two-stage pipeline over several
//! seeds on the procedural smoke corpus and prints per-seed quality numbers.
//! Used to size the quantitative smoke benchmark configuration.

use std::time::Instant;

use rayon::prelude::*;
use unpaired_sr::datasets::scan_corpus;
use unpaired_sr::imaging::{bicubic_resize, load_image, ImageTensor, ResizeScale, ScaleFactor};
use unpaired_sr::losses::LossWeights;
use unpaired_sr::metrics::{psnr, Psnr};
use unpaired_sr::networks::{DiscInput, GeneratorSpec, PatchDiscSpec, SrNetSpec, TapPoint};
use unpaired_sr::smoke::{load_hidden_pairs, make_smoke_corpus, SmokeSpec};
use unpaired_sr::trainer::{
    super_resolve, synthesize_lr_corpus, Stage1Config, Stage1Trainer, Stage2Config, Stage2Trainer,
};

fn mean_psnr_db(pairs: &[(ImageTensor, ImageTensor)]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in pairs {
        match psnr(a, b).unwrap() {
            Psnr::Db(v) => acc += v,
            Psnr::Infinite => acc += 100.0,
        }
    }
    acc / pairs.len() as f64
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let stage1_steps: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let stage2_steps: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let arg_f = |i: usize, default: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    let w1 = arg_f(4, 1.0);
    let w3 = arg_f(5, 5.0);
    let s1_lr = arg_f(6, 1e-4);
    let lambda2 = arg_f(7, 0.02);
    let lambda3 = arg_f(8, 0.05);
    let lambda4 = arg_f(9, 0.1);
    let s2_lr = arg_f(10, 1e-4);
    println!("w=({w1},{w1},{w3}) s1_lr={s1_lr} lambda=(1,{lambda2},{lambda3},{lambda4}) s2_lr={s2_lr}");

    let dir = tempfile::tempdir().unwrap();
    let scale = ScaleFactor::new(4).unwrap();
    let spec = SmokeSpec {
        n: 24,
        hr_size: 96,
        scale,
        sigma_blur: 1.2,
        sigma_noise: 0.01,
        n_prime: 16,
        seed: 7,
    };
    let corpus_paths = make_smoke_corpus(dir.path().join("corpus"), &spec).unwrap();
    let corpus = scan_corpus(&corpus_paths.lr_dir, &corpus_paths.hr_dir, scale).unwrap();
    let hidden = load_hidden_pairs(&corpus_paths.root).unwrap();

    // Baselines shared by all seeds.
    let eval_pairs: Vec<(ImageTensor, ImageTensor)> = hidden
        .iter()
        .map(|(lr, hr)| (load_image(lr).unwrap(), load_image(hr).unwrap()))
        .collect();
    let bicubic_lr_baseline: Vec<(ImageTensor, ImageTensor)> = eval_pairs
        .iter()
        .map(|(lr, hr)| (bicubic_resize(hr, ResizeScale::down(scale)).unwrap(), lr.clone()))
        .collect();
    let baseline_a = mean_psnr_db(&bicubic_lr_baseline);
    let bicubic_up_baseline: Vec<(ImageTensor, ImageTensor)> = eval_pairs
        .iter()
        .map(|(lr, hr)| (bicubic_resize(lr, ResizeScale::up(scale)).unwrap(), hr.clone()))
        .collect();
    let baseline_b = mean_psnr_db(&bicubic_up_baseline);
    println!("baseline: bicubic LR vs oracle LR {baseline_a:.3} dB; bicubic x4 up vs HR {baseline_b:.3} dB");

    let gen_spec = GeneratorSpec::tiny(2, 16);
    let sr_spec = SrNetSpec {
        n_groups: 2,
        n_blocks_per_group: 2,
        channels: 32,
        ca_reduction: 8,
        scale,
        tap_point: TapPoint::AfterGroup(0),
    };
    let disc_spec = PatchDiscSpec { base_channels: 16, n_scale_layers: 2, input: DiscInput::Image, use_norm: true };

    let results: Vec<(u64, f64, f64, f64, f64)> = (0..n_seeds)
        .into_par_iter()
        .map(|seed| {
            let t0 = Instant::now();
            let s1_cfg = Stage1Config {
                batch: 4,
                patch_lr: 12,
                total_steps: stage1_steps,
                seed,
                log_every: 500,
                lr0: s1_lr,
                weights: LossWeights { w1, w2: w1, w3, ..LossWeights::default() },
                gen_spec,
                disc_spec,
                ..Default::default()
            };
            let mut s1 = Stage1Trainer::new(corpus.clone(), s1_cfg).unwrap();
            s1.run().unwrap();
            let t1 = t0.elapsed().as_secs_f64();

            // (a) generated LR vs oracle LR on the held-out images.
            let gen_lr_pairs: Vec<(ImageTensor, ImageTensor)> = eval_pairs
                .iter()
                .map(|(lr, hr)| {
                    let syn = bicubic_resize(hr, ResizeScale::down(scale)).unwrap();
                    let gen = unpaired_sr::networks::eval_generator(&gen_spec, &s1.g.params, &syn).unwrap();
                    (unpaired_sr::imaging::clamp01(&gen), lr.clone())
                })
                .collect();
            let gen_psnr = mean_psnr_db(&gen_lr_pairs);

            // Stage 2 on this seed's generated pairs.
            let synth_dir = dir.path().join(format!("synth{seed}"));
            let pairset =
                synthesize_lr_corpus(&s1.g.params, &gen_spec, "tune", &corpus.hr_paths, scale, &synth_dir).unwrap();
            let mut s2_cfg = Stage2Config::new(sr_spec);
            s2_cfg.batch = 2;
            s2_cfg.patch_lr = 8;
            s2_cfg.total_steps = stage2_steps;
            s2_cfg.seed = seed;
            s2_cfg.log_every = 500;
            s2_cfg.lr0 = s2_lr;
            s2_cfg.disc_spec = disc_spec;
            s2_cfg.ada_disc_base = 16;
            s2_cfg.ada_disc_scales = 1;
            s2_cfg.weights = LossWeights { lambda2, lambda3, lambda4, ..LossWeights::default() };
            let mut s2 = Stage2Trainer::new(pairset, corpus.clone(), s2_cfg).unwrap();
            s2.run().unwrap();

            // (b) SR output vs hidden HR on the held-out images.
            let sr_pairs: Vec<(ImageTensor, ImageTensor)> = eval_pairs
                .iter()
                .map(|(lr, hr)| (super_resolve(&s2.r.params, &sr_spec, lr).unwrap(), hr.clone()))
                .collect();
            let sr_psnr = mean_psnr_db(&sr_pairs);
            let t2 = t0.elapsed().as_secs_f64();
            (seed, gen_psnr, sr_psnr, t1, t2)
        })
        .collect();

    let mut a_wins = 0;
    let mut b_wins = 0;
    for (seed, gen_psnr, sr_psnr, t1, t2) in &results {
        let a = gen_psnr > &baseline_a;
        let b = *sr_psnr >= baseline_b + 0.3;
        a_wins += a as u32;
        b_wins += b as u32;
        println!(
            "seed {seed}: gen-LR {gen_psnr:.3} dB (base {baseline_a:.3}, {}), SR {sr_psnr:.3} dB (base {baseline_b:.3}, {}), stage1 {t1:.0}s total {t2:.0}s",
            if a { "WIN" } else { "lose" },
            if b { "WIN" } else { "lose" },
        );
    }
    println!("(a) {a_wins}/{n_seeds} seeds, (b) {b_wins}/{n_seeds} seeds");
}
