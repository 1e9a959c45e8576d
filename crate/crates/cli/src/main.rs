//! Operator surface: stage orchestration, inference, evaluation and the
//! smoke-test world generator.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime or numeric error.
//! Verbosity is controlled by `UNPAIRED_SR_LOG` (quiet, info, debug).

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use unpaired_sr::checkpoint::Checkpoint;
use unpaired_sr::config::RunConfig;
use unpaired_sr::datasets::{apply_split, scan_corpus, GeneratedPairSet, SplitMode, SplitSpec, UnpairedCorpus};
use unpaired_sr::error::{Error, Result};
use unpaired_sr::imaging::{load_image, save_image, ScaleFactor};
use unpaired_sr::losses::LossReport;
use unpaired_sr::metrics::evaluate_corpus;
use unpaired_sr::rng::stream_rng;
use unpaired_sr::smoke::{make_smoke_corpus, SmokeSpec};
use unpaired_sr::trainer::{super_resolve, synthesize_lr_corpus, Stage1Trainer, Stage2Trainer};

#[derive(Parser)]
#[command(name = "unpaired-sr", about = "Two-stage unpaired real-world super-resolution", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the degradation generation networks (stage 1).
    TrainDegrade {
        #[arg(long)]
        config: PathBuf,
        /// Override run.seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Override stage1.total_steps from the config.
        #[arg(long)]
        total_steps: Option<u64>,
        /// Override run.out_dir from the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Resume from a stage-1 checkpoint written with the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Apply a trained degradation generator to every HR image, writing the
    /// generated-LR dataset and its pair manifest.
    SynthesizeLr {
        #[arg(long)]
        config: PathBuf,
        /// Stage-1 checkpoint holding the generator.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train the degradation-adaptive SR network (stage 2).
    TrainSr {
        #[arg(long)]
        config: PathBuf,
        /// Pair manifest produced by synthesize-lr.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        total_steps: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Super-resolve one image with a trained stage-2 checkpoint.
    SuperResolve {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Full-reference evaluation of same-named images across two
    /// directories.
    Evaluate {
        results: PathBuf,
        references: PathBuf,
        /// Border pixels to crop before measuring; defaults to the scale.
        #[arg(long)]
        border_crop: Option<usize>,
        #[arg(long, default_value_t = 4)]
        scale: u32,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Also write a CSV table.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Generate the procedural smoke corpus with a known oracle degradation.
    MakeSmokeCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 24)]
        n: usize,
        #[arg(long, default_value_t = 96)]
        hr_size: usize,
        #[arg(long, default_value_t = 4)]
        scale: u32,
        #[arg(long, default_value_t = 1.2)]
        sigma_blur: f64,
        #[arg(long, default_value_t = 0.01)]
        sigma_noise: f64,
        #[arg(long, default_value_t = 16)]
        n_prime: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Materialize a corpus split as path lists.
    Split {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the stricter non-overlapping split.
        #[arg(long)]
        non_overlapping: bool,
        /// HR-side subset size for the non-overlapping split.
        #[arg(long)]
        n_prime: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn init_logging() -> Result<()> {
    let level = match std::env::var("UNPAIRED_SR_LOG").as_deref() {
        Err(_) | Ok("info") => log::LevelFilter::Info,
        Ok("quiet") => log::LevelFilter::Off,
        Ok("debug") => log::LevelFilter::Debug,
        Ok(other) => {
            return Err(Error::Config(format!(
                "UNPAIRED_SR_LOG must be quiet, info or debug, got `{other}`"
            )))
        }
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init().ok();
    Ok(())
}

fn load_corpus(cfg: &RunConfig) -> Result<UnpairedCorpus> {
    let corpus = scan_corpus(cfg.lr_dir()?, cfg.hr_dir()?, cfg.scale()?)?;
    match cfg.split_spec()? {
        Some(split) => {
            let mut rng = stream_rng(cfg.split_seed(), "split");
            apply_split(&corpus, &split, &mut rng)
        }
        None => Ok(corpus),
    }
}

fn out_dir_for(cfg: &RunConfig, cli_out: Option<PathBuf>) -> PathBuf {
    cli_out.or_else(|| cfg.run.out_dir.clone()).unwrap_or_else(|| PathBuf::from("runs"))
}

fn write_reports(path: &Path, reports: &[LossReport], append: bool) -> Result<()> {
    let mut opts = std::fs::OpenOptions::new();
    opts.create(true).write(true);
    if append {
        opts.append(true);
    } else {
        opts.truncate(true);
    }
    let file = opts.open(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in reports {
        writeln!(w, "{}", r.to_json_line()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn check_resume_digest(ckpt: &Checkpoint, cfg: &RunConfig) -> Result<()> {
    if ckpt.config_digest != cfg.digest() {
        return Err(Error::Config(
            "checkpoint was written under a different configuration; refusing to resume".into(),
        ));
    }
    Ok(())
}

fn load_config_with_overrides(
    path: &Path,
    seed: Option<u64>,
    total_steps_stage1: Option<u64>,
    total_steps_stage2: Option<u64>,
) -> Result<RunConfig> {
    let mut cfg = RunConfig::parse(path)?;
    if let Some(seed) = seed {
        cfg.run.seed = seed;
    }
    if let Some(steps) = total_steps_stage1 {
        let s = cfg.stage1.as_mut().ok_or_else(|| Error::Config("missing [stage1] section".into()))?;
        s.total_steps = steps;
    }
    if let Some(steps) = total_steps_stage2 {
        let s = cfg.stage2.as_mut().ok_or_else(|| Error::Config("missing [stage2] section".into()))?;
        s.total_steps = steps;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainDegrade { config, seed, total_steps, out_dir, resume } => {
            let cfg = load_config_with_overrides(&config, seed, total_steps, None)?;
            let out = out_dir_for(&cfg, out_dir);
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let corpus = load_corpus(&cfg)?;
            let digest = cfg.digest();
            let resuming = resume.is_some();
            let mut trainer = match resume {
                Some(ckpt_path) => {
                    let ckpt = Checkpoint::load(&ckpt_path)?;
                    check_resume_digest(&ckpt, &cfg)?;
                    Stage1Trainer::resume(corpus, cfg.stage1_config()?, &ckpt)?
                }
                None => Stage1Trainer::new(corpus, cfg.stage1_config()?)?,
            };
            trainer.diagnostic_dir = Some(out.clone());
            let reports = trainer.run()?;
            write_reports(&out.join("stage1_log.jsonl"), &reports, resuming)?;
            let ckpt_path = out.join("stage1.ckpt");
            trainer.checkpoint(digest).save(&ckpt_path)?;
            println!("stage 1 complete at step {}; checkpoint {}", trainer.step_count(), ckpt_path.display());
            Ok(())
        }
        Command::SynthesizeLr { config, checkpoint, out_dir } => {
            let cfg = RunConfig::parse(&config)?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            if ckpt.stage != 1 {
                return Err(Error::Checkpoint(format!("expected a stage-1 checkpoint, got stage {}", ckpt.stage)));
            }
            let (g_params, _) = ckpt.extract_net("g")?;
            let corpus = load_corpus(&cfg)?;
            let pairset = synthesize_lr_corpus(
                &g_params,
                &cfg.gen_spec(),
                &ckpt.content_id(),
                &corpus.hr_paths,
                cfg.scale()?,
                &out_dir,
            )?;
            println!(
                "wrote {} generated pairs; manifest {}",
                pairset.pairs.len(),
                out_dir.join("pairs.tsv").display()
            );
            Ok(())
        }
        Command::TrainSr { config, pairs, seed, total_steps, out_dir, resume } => {
            let cfg = load_config_with_overrides(&config, seed, None, total_steps)?;
            let out = out_dir_for(&cfg, out_dir);
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let pairset = GeneratedPairSet::load_manifest(&pairs)?;
            let corpus = load_corpus(&cfg)?;
            let digest = cfg.digest();
            let resuming = resume.is_some();
            let mut trainer = match resume {
                Some(ckpt_path) => {
                    let ckpt = Checkpoint::load(&ckpt_path)?;
                    check_resume_digest(&ckpt, &cfg)?;
                    Stage2Trainer::resume(pairset, corpus, cfg.stage2_config()?, &ckpt)?
                }
                None => Stage2Trainer::new(pairset, corpus, cfg.stage2_config()?)?,
            };
            trainer.diagnostic_dir = Some(out.clone());
            let reports = trainer.run()?;
            write_reports(&out.join("stage2_log.jsonl"), &reports, resuming)?;
            let ckpt_path = out.join("stage2.ckpt");
            trainer.checkpoint(digest).save(&ckpt_path)?;
            println!("stage 2 complete at step {}; checkpoint {}", trainer.step_count(), ckpt_path.display());
            Ok(())
        }
        Command::SuperResolve { input, output, config, checkpoint } => {
            let cfg = RunConfig::parse(&config)?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            if ckpt.stage != 2 {
                return Err(Error::Checkpoint(format!("expected a stage-2 checkpoint, got stage {}", ckpt.stage)));
            }
            let (r_params, _) = ckpt.extract_net("r")?;
            let img = load_image(&input)?;
            let sr = super_resolve(&r_params, &cfg.sr_spec()?, &img)?;
            save_image(&sr, &output)?;
            println!("{} -> {} ({}x{})", input.display(), output.display(), sr.height(), sr.width());
            Ok(())
        }
        Command::Evaluate { results, references, border_crop, scale, json, csv } => {
            let border = border_crop.unwrap_or(ScaleFactor::new(scale)?.get());
            let report = evaluate_corpus(&results, &references, border)?;
            if let Some(path) = csv {
                std::fs::write(&path, report.to_csv()).map_err(|e| Error::io(&path, e))?;
            }
            match json {
                Some(path) => {
                    std::fs::write(&path, report.to_json()).map_err(|e| Error::io(&path, e))?;
                    let psnr = report.mean_psnr.map(|v| format!("{v:.3}")).unwrap_or_else(|| "infinite".into());
                    println!(
                        "{} pairs: mean PSNR {} dB ({} identical excluded), mean SSIM {:.4}",
                        report.per_image.len(),
                        psnr,
                        report.infinite_psnr_count,
                        report.mean_ssim
                    );
                }
                None => println!("{}", report.to_json()),
            }
            Ok(())
        }
        Command::MakeSmokeCorpus { out, n, hr_size, scale, sigma_blur, sigma_noise, n_prime, seed } => {
            let spec = SmokeSpec {
                n,
                hr_size,
                scale: ScaleFactor::new(scale)?,
                sigma_blur,
                sigma_noise,
                n_prime,
                seed,
            };
            let corpus = make_smoke_corpus(&out, &spec)?;
            println!(
                "smoke corpus at {}: {} HR / {} LR images, hidden manifest {}",
                corpus.root.display(),
                n_prime,
                n - n_prime,
                corpus.hidden_manifest.display()
            );
            Ok(())
        }
        Command::Split { config, out, non_overlapping, n_prime, seed } => {
            let cfg = RunConfig::parse(&config)?;
            let corpus = scan_corpus(cfg.lr_dir()?, cfg.hr_dir()?, cfg.scale()?)?;
            let split = if non_overlapping {
                let n_prime = n_prime
                    .or(cfg.data.n_prime)
                    .ok_or_else(|| Error::Config("--n-prime (or data.n_prime) required".into()))?;
                SplitSpec { n_prime, mode: SplitMode::NonOverlapping }
            } else {
                SplitSpec { n_prime: 0, mode: SplitMode::Basic }
            };
            let mut rng = stream_rng(seed.unwrap_or_else(|| cfg.split_seed()), "split");
            let result = apply_split(&corpus, &split, &mut rng)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let write_list = |name: &str, paths: &[PathBuf]| -> Result<()> {
                let p = out.join(name);
                let mut text = String::new();
                for path in paths {
                    text.push_str(&path.display().to_string());
                    text.push('\n');
                }
                std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
            };
            write_list("hr_keep.txt", &result.hr_paths)?;
            write_list("lr_keep.txt", &result.lr_paths)?;
            println!("kept {} HR / {} LR paths under {}", result.hr_paths.len(), result.lr_paths.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_logging() {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
