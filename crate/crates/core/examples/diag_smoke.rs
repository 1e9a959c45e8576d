//! Convergence diagnostics on the smoke corpus.

use unpaired_sr::datasets::scan_corpus;
use unpaired_sr::imaging::{bicubic_resize, clamp01, load_image, ResizeScale, ScaleFactor};
use unpaired_sr::losses::LossWeights;
use unpaired_sr::metrics::{psnr, Psnr};
use unpaired_sr::networks::{eval_generator, DiscInput, GeneratorSpec, PatchDiscSpec, SrNetSpec, TapPoint};
use unpaired_sr::smoke::{load_hidden_pairs, make_smoke_corpus, SmokeSpec};
use unpaired_sr::trainer::{super_resolve, synthesize_lr_corpus, Stage1Config, Stage1Trainer, Stage2Ablation, Stage2Config, Stage2Trainer};

fn db(p: Psnr) -> f64 { match p { Psnr::Db(v) => v, Psnr::Infinite => 100.0 } }

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(|s| s.as_str()).unwrap_or("l1");
    let steps: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1500);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(3e-4);
    let batch: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(2);
    let patch: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(8);

    let dir = tempfile::tempdir().unwrap();
    let scale = ScaleFactor::new(4).unwrap();
    let spec = SmokeSpec { n: 24, hr_size: 96, scale, sigma_blur: 1.2, sigma_noise: 0.01, n_prime: 16, seed: 7 };
    let cp = make_smoke_corpus(dir.path().join("c"), &spec).unwrap();
    let corpus = scan_corpus(&cp.lr_dir, &cp.hr_dir, scale).unwrap();
    let hidden = load_hidden_pairs(&cp.root).unwrap();
    let eval: Vec<_> = hidden.iter().map(|(l, h)| (load_image(l).unwrap(), load_image(h).unwrap())).collect();

    let gen_spec = GeneratorSpec::tiny(2, 16);
    let disc_spec = PatchDiscSpec { base_channels: 16, n_scale_layers: 2, input: DiscInput::Image, use_norm: true };

    if mode == "l1" || mode == "l1oracle" {
        let pairset = if mode == "l1oracle" {
            // Ideal-degradation pairs: the upper bound a perfect stage 1
            // would hand to stage 2.
            let gen_dir = dir.path().join("oracle_gen");
            std::fs::create_dir_all(&gen_dir).unwrap();
            let mut rng = unpaired_sr::rng::stream_rng(55, "oracle.noise");
            let mut pairs = Vec::new();
            for (i, hr_path) in corpus.hr_paths.iter().enumerate() {
                let hr = load_image(hr_path).unwrap();
                let lr = unpaired_sr::smoke::oracle_degrade(&hr, scale, 1.2, 0.01, &mut rng).unwrap();
                let p = gen_dir.join(format!("g{i}.png"));
                unpaired_sr::imaging::save_image(&lr, &p).unwrap();
                pairs.push((p, hr_path.clone()));
            }
            unpaired_sr::datasets::GeneratedPairSet { pairs, provenance: "oracle".into(), scale }
        } else {
            let g = unpaired_sr::networks::build_generator::<f32>(&gen_spec, &mut unpaired_sr::rng::stream_rng(0, "init.g"));
            synthesize_lr_corpus(&g, &gen_spec, "id", &corpus.hr_paths, scale, dir.path().join("synth")).unwrap()
        };
        let sr_spec = SrNetSpec { n_groups: 2, n_blocks_per_group: 2, channels: 32, ca_reduction: 8, scale, tap_point: TapPoint::AfterGroup(0) };
        let mut cfg = Stage2Config::new(sr_spec);
        cfg.batch = batch; cfg.patch_lr = patch; cfg.total_steps = steps; cfg.seed = 0; cfg.log_every = steps / 15;
        cfg.lr0 = lr;
        cfg.halve_every = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(1_600_000);
        cfg.ablation = Stage2Ablation::L1Only;
        cfg.disc_spec = disc_spec; cfg.ada_disc_base = 16; cfg.ada_disc_scales = 1;
        let mut t = Stage2Trainer::new(pairset, corpus.clone(), cfg).unwrap();
        // Init PSNR of raw net output.
        let mut acc = 0.0;
        for (lrw, hr) in &eval { acc += db(psnr(&super_resolve(&t.r.params, &sr_spec, lrw).unwrap(), hr).unwrap()); }
        println!("init SR PSNR {:.3}", acc / eval.len() as f64);
        let reports = t.run().unwrap();
        for r in &reports { println!("  step {} l1 {:.4}", r.step, r.term("l1").unwrap()); }
        let mut acc = 0.0;
        let mut acc_crop = 0.0;
        for (lrw, hr) in &eval {
            let sr = super_resolve(&t.r.params, &sr_spec, lrw).unwrap();
            acc += db(psnr(&sr, hr).unwrap());
            let crop = |img: &unpaired_sr::imaging::ImageTensor| {
                let [b, c, h, w] = img.shape();
                let mut out = unpaired_sr::tensor::Tensor::zeros([b, c, h - 8, w - 8]);
                for pl in 0..b * c { for y in 0..h - 8 { for x in 0..w - 8 {
                    out.data_mut()[pl * (h - 8) * (w - 8) + y * (w - 8) + x] = img.data()[pl * h * w + (y + 4) * w + x + 4];
                } } }
                out
            };
            acc_crop += db(psnr(&crop(&sr), &crop(hr)).unwrap());
        }
        println!("final SR PSNR {:.3} (border-cropped {:.3})", acc / eval.len() as f64, acc_crop / eval.len() as f64);
    } else {
        // Stage 1 drift analysis.
        let w3: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(5.0);
        let cfg = Stage1Config {
            batch, patch_lr: 12, total_steps: steps, seed: 0, log_every: steps / 15, lr0: lr,
            weights: LossWeights { w1: 1.0, w2: 1.0, w3, ..Default::default() },
            gen_spec, disc_spec, ..Default::default()
        };
        let mut t = Stage1Trainer::new(corpus.clone(), cfg).unwrap();
        let reports = t.run().unwrap();
        for r in &reports {
            println!("  step {} gan_g {:.3} gan_f {:.3} cycle {:.4}", r.step,
                r.term("gan_g").unwrap_or(0.0), r.term("gan_f").unwrap_or(0.0), r.term("cycle").unwrap_or(0.0));
        }
        // Where does G's output deviate: global shift or texture?
        for (i, (lrw, hr)) in eval.iter().enumerate().take(3) {
            let syn = bicubic_resize(hr, ResizeScale::down(scale)).unwrap();
            let gen = clamp01(&eval_generator(&gen_spec, &t.g.params, &syn).unwrap());
            let n = (syn.numel() / 3) as f32;
            let mut shifts = [0.0f32; 3];
            for c in 0..3 {
                let off = c * syn.height() * syn.width();
                for k in 0..syn.height() * syn.width() {
                    shifts[c] += gen.data()[off + k] - syn.data()[off + k];
                }
                shifts[c] /= n;
            }
            println!(
                "img {i}: PSNR(gen,oracle) {:.2}  PSNR(syn,oracle) {:.2}  PSNR(gen,syn) {:.2}  mean shift {:?}",
                db(psnr(&gen, lrw).unwrap()), db(psnr(&syn, lrw).unwrap()), db(psnr(&gen, &syn).unwrap()), shifts
            );
        }
    }
}
