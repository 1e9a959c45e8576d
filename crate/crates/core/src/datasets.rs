//! Unpaired corpora, the non-overlapping split, generated-pair manifests and
//! training batch assembly.
//!
//! Pair information that datasets may carry through their file naming is
//! deliberately discarded at scan time: the two path lists are treated as
//! independent sets from then on.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom as _;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::imaging::{self, ImageTensor, ResizeScale, ScaleFactor};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Two independent image sets plus the scale relating their resolutions.
#[derive(Clone, Debug, PartialEq)]
pub struct UnpairedCorpus {
    pub lr_paths: Vec<PathBuf>,
    pub hr_paths: Vec<PathBuf>,
    pub scale: ScaleFactor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitMode {
    Basic,
    NonOverlapping,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub n_prime: usize,
    pub mode: SplitMode,
}

fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("png") | Some("jpg") | Some("jpeg")
    )
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image_file(p))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Corpus(format!("no readable images in {}", dir.display())));
    }
    Ok(paths)
}

/// Scan two directories into an unpaired corpus with lexicographically
/// sorted path lists.
pub fn scan_corpus(lr_dir: impl AsRef<Path>, hr_dir: impl AsRef<Path>, scale: ScaleFactor) -> Result<UnpairedCorpus> {
    let lr_paths = list_images(lr_dir.as_ref())?;
    let hr_paths = list_images(hr_dir.as_ref())?;
    let canon = |p: &PathBuf| p.canonicalize().unwrap_or_else(|_| p.clone());
    let lr_set: HashSet<PathBuf> = lr_paths.iter().map(canon).collect();
    for p in &hr_paths {
        if lr_set.contains(&canon(p)) {
            return Err(Error::Corpus(format!("{} appears in both LR and HR sets", p.display())));
        }
    }
    Ok(UnpairedCorpus { lr_paths, hr_paths, scale })
}

/// Apply a split. `Basic` keeps everything. `NonOverlapping` retains a
/// random `n_prime`-subset of indices on the HR side and the complementary
/// indices on the LR side, so the two sets share no content.
pub fn apply_split(corpus: &UnpairedCorpus, split: &SplitSpec, rng: &mut Rng) -> Result<UnpairedCorpus> {
    match split.mode {
        SplitMode::Basic => Ok(corpus.clone()),
        SplitMode::NonOverlapping => {
            let n = corpus.hr_paths.len();
            if corpus.lr_paths.len() != n {
                return Err(Error::Argument(format!(
                    "non-overlapping split needs aligned equal-length lists, got {} LR vs {n} HR",
                    corpus.lr_paths.len()
                )));
            }
            if split.n_prime == 0 || split.n_prime >= n {
                return Err(Error::Argument(format!("n_prime must satisfy 0 < n' < {n}, got {}", split.n_prime)));
            }
            let mut indices: Vec<usize> = (0..n).collect();
            indices.shuffle(rng);
            let mut hr_keep: Vec<usize> = indices[..split.n_prime].to_vec();
            let mut lr_keep: Vec<usize> = indices[split.n_prime..].to_vec();
            hr_keep.sort_unstable();
            lr_keep.sort_unstable();
            Ok(UnpairedCorpus {
                lr_paths: lr_keep.iter().map(|&i| corpus.lr_paths[i].clone()).collect(),
                hr_paths: hr_keep.iter().map(|&i| corpus.hr_paths[i].clone()).collect(),
                scale: corpus.scale,
            })
        }
    }
}

/// Aligned (generated LR, real HR) pairs produced by a frozen degradation
/// generator, plus the identifier of that generator.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedPairSet {
    pub pairs: Vec<(PathBuf, PathBuf)>,
    pub provenance: String,
    pub scale: ScaleFactor,
}

impl GeneratedPairSet {
    /// Write the manifest: a header line, then one `gen<TAB>hr` line per
    /// pair. Paths under the manifest directory are stored relative to it;
    /// anything else is stored absolute so the manifest resolves from any
    /// working directory.
    pub fn save_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let rel = |p: &PathBuf| match p.strip_prefix(base) {
            Ok(stripped) => stripped.to_path_buf(),
            Err(_) => std::path::absolute(p).unwrap_or_else(|_| p.clone()),
        };
        writeln!(w, "# producer={} scale={}", self.provenance, self.scale).map_err(|e| Error::io(path, e))?;
        for (gen, hr) in &self.pairs {
            writeln!(w, "{}\t{}", rel(gen).display(), rel(hr).display()).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_manifest(path: impl AsRef<Path>) -> Result<GeneratedPairSet> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = std::io::BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Corpus(format!("empty manifest {}", path.display())))?
            .map_err(|e| Error::io(path, e))?;
        let (provenance, scale) = parse_manifest_header(&header, path)?;
        let mut pairs = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let (gen, hr) = line
                .split_once('\t')
                .ok_or_else(|| Error::Corpus(format!("malformed manifest line `{line}`")))?;
            let resolve = |s: &str| {
                let p = PathBuf::from(s);
                if p.is_absolute() {
                    p
                } else {
                    base.join(p)
                }
            };
            pairs.push((resolve(gen), resolve(hr)));
        }
        if pairs.is_empty() {
            return Err(Error::Corpus(format!("manifest {} lists no pairs", path.display())));
        }
        Ok(GeneratedPairSet { pairs, provenance, scale })
    }
}

fn parse_manifest_header(header: &str, path: &Path) -> Result<(String, ScaleFactor)> {
    let bad = || Error::Corpus(format!("malformed manifest header in {}: `{header}`", path.display()));
    let rest = header.strip_prefix("# ").ok_or_else(bad)?;
    let mut producer = None;
    let mut scale = None;
    for field in rest.split_whitespace() {
        if let Some(v) = field.strip_prefix("producer=") {
            producer = Some(v.to_string());
        } else if let Some(v) = field.strip_prefix("scale=") {
            scale = Some(ScaleFactor::new(v.parse::<u32>().map_err(|_| bad())?)?);
        }
    }
    Ok((producer.ok_or_else(bad)?, scale.ok_or_else(bad)?))
}

/// One stage-2 training batch. `real_lr` is absent in ablations that do not
/// use the real-LR stream.
pub struct Stage2Batch {
    pub gen_lr: ImageTensor,
    pub real_hr: ImageTensor,
    pub real_lr: Option<ImageTensor>,
}

/// Batch assembly with a decoded-image cache.
///
/// Sampling is a pure function of the supplied RNG; the cache only avoids
/// redundant decoding. Parallel prefetch workers each own a sampler and an
/// independently derived RNG.
pub struct BatchSampler {
    cache: HashMap<PathBuf, ImageTensor>,
    dims: HashMap<PathBuf, (usize, usize)>,
    cache_cap: usize,
    pub augment: bool,
}

impl BatchSampler {
    pub fn new(augment: bool) -> Self {
        BatchSampler { cache: HashMap::new(), dims: HashMap::new(), cache_cap: 1024, augment }
    }

    fn load(&mut self, path: &Path) -> Result<&ImageTensor> {
        if !self.cache.contains_key(path) {
            if self.cache.len() >= self.cache_cap {
                self.cache.clear();
            }
            let img = imaging::load_image(path)?;
            self.cache.insert(path.to_path_buf(), img);
        }
        Ok(&self.cache[path])
    }

    fn dims_of(&mut self, path: &Path) -> Result<(usize, usize)> {
        if let Some(&d) = self.dims.get(path) {
            return Ok(d);
        }
        let d = imaging::image_dimensions(path)?;
        self.dims.insert(path.to_path_buf(), d);
        Ok(d)
    }

    /// Indices of images at least `min_h x min_w` in size.
    fn eligible(&mut self, paths: &[PathBuf], min_h: usize, min_w: usize) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for (i, p) in paths.iter().enumerate() {
            let (h, w) = self.dims_of(p)?;
            if h >= min_h && w >= min_w {
                out.push(i);
            }
        }
        Ok(out)
    }

    fn augment_pair(&self, hr: ImageTensor, lr: ImageTensor, rng: &mut Rng) -> (ImageTensor, ImageTensor) {
        // Identical transform on both halves to preserve correspondence;
        // draws match the augment() contract (two booleans).
        let do_flip = rng.random::<bool>();
        let do_rot = rng.random::<bool>();
        let apply = |img: &ImageTensor| {
            let mut out = if do_flip { imaging::hflip(img) } else { img.clone() };
            if do_rot {
                out = imaging::rot90(&out);
            }
            out
        };
        (apply(&hr), apply(&lr))
    }

    /// Independent unpaired halves for degradation training: bicubic
    /// downscales of random HR crops, and random real-LR crops.
    pub fn stage1_batch(
        &mut self,
        corpus: &UnpairedCorpus,
        batch: usize,
        patch: usize,
        rng: &mut Rng,
    ) -> Result<(ImageTensor, ImageTensor)> {
        let s = corpus.scale.get();
        let hr_eligible = self.eligible(&corpus.hr_paths, patch * s, patch * s)?;
        if hr_eligible.is_empty() {
            return Err(Error::Corpus(format!("no HR image fits a {0}x{0} crop", patch * s)));
        }
        let lr_eligible = self.eligible(&corpus.lr_paths, patch, patch)?;
        if lr_eligible.is_empty() {
            return Err(Error::Corpus(format!("no LR image fits a {patch}x{patch} crop")));
        }

        let mut syn = Vec::with_capacity(batch);
        for _ in 0..batch {
            let idx = hr_eligible[rng.random_range(0..hr_eligible.len())];
            let path = corpus.hr_paths[idx].clone();
            let img = self.load(&path)?.clone();
            let mut crop = imaging::random_crop(&img, patch * s, rng)?;
            if self.augment {
                crop = imaging::augment(&crop, rng);
            }
            syn.push(imaging::bicubic_resize(&crop, ResizeScale::down(corpus.scale))?);
        }
        let mut real = Vec::with_capacity(batch);
        for _ in 0..batch {
            let idx = lr_eligible[rng.random_range(0..lr_eligible.len())];
            let path = corpus.lr_paths[idx].clone();
            let img = self.load(&path)?.clone();
            let mut crop = imaging::random_crop(&img, patch, rng)?;
            if self.augment {
                crop = imaging::augment(&crop, rng);
            }
            real.push(crop);
        }
        let syn_refs: Vec<&ImageTensor> = syn.iter().collect();
        let real_refs: Vec<&ImageTensor> = real.iter().collect();
        Ok((Tensor::cat_batch(&syn_refs), Tensor::cat_batch(&real_refs)))
    }

    /// Spatially corresponding (generated LR, real HR) crops plus an
    /// independent real-LR stream.
    pub fn stage2_batch(
        &mut self,
        pairset: &GeneratedPairSet,
        corpus: &UnpairedCorpus,
        batch: usize,
        patch: usize,
        rng: &mut Rng,
        need_real_lr: bool,
    ) -> Result<Stage2Batch> {
        if pairset.pairs.is_empty() {
            return Err(Error::Corpus("empty generated pair set".into()));
        }
        let s = pairset.scale.get();
        let mut pair_eligible = Vec::new();
        for (i, (gen, hr)) in pairset.pairs.iter().enumerate() {
            let (gh, gw) = self.dims_of(gen)?;
            let (hh, hw) = self.dims_of(hr)?;
            if hh != gh * s || hw != gw * s {
                return Err(Error::Corpus(format!(
                    "pair {} violates the scale invariant: {gh}x{gw} LR vs {hh}x{hw} HR at scale {s}",
                    gen.display()
                )));
            }
            if gh >= patch && gw >= patch {
                pair_eligible.push(i);
            }
        }
        if pair_eligible.is_empty() {
            return Err(Error::Corpus(format!("no generated pair fits a {patch}x{patch} LR crop")));
        }

        let mut gens = Vec::with_capacity(batch);
        let mut hrs = Vec::with_capacity(batch);
        for _ in 0..batch {
            let idx = pair_eligible[rng.random_range(0..pair_eligible.len())];
            let (gen_path, hr_path) = pairset.pairs[idx].clone();
            let gen = self.load(&gen_path)?.clone();
            let hr = self.load(&hr_path)?.clone();
            let (mut hr_patch, mut gen_patch) = imaging::paired_crop(&hr, &gen, patch, pairset.scale, rng)?;
            if self.augment {
                (hr_patch, gen_patch) = self.augment_pair(hr_patch, gen_patch, rng);
            }
            gens.push(gen_patch);
            hrs.push(hr_patch);
        }

        let real_lr = if need_real_lr {
            let lr_eligible = self.eligible(&corpus.lr_paths, patch, patch)?;
            if lr_eligible.is_empty() {
                return Err(Error::Corpus(format!("no real LR image fits a {patch}x{patch} crop")));
            }
            let mut reals = Vec::with_capacity(batch);
            for _ in 0..batch {
                let idx = lr_eligible[rng.random_range(0..lr_eligible.len())];
                let path = corpus.lr_paths[idx].clone();
                let img = self.load(&path)?.clone();
                let mut crop = imaging::random_crop(&img, patch, rng)?;
                if self.augment {
                    crop = imaging::augment(&crop, rng);
                }
                reals.push(crop);
            }
            let refs: Vec<&ImageTensor> = reals.iter().collect();
            Some(Tensor::cat_batch(&refs))
        } else {
            None
        };

        let gen_refs: Vec<&ImageTensor> = gens.iter().collect();
        let hr_refs: Vec<&ImageTensor> = hrs.iter().collect();
        Ok(Stage2Batch { gen_lr: Tensor::cat_batch(&gen_refs), real_hr: Tensor::cat_batch(&hr_refs), real_lr })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn write_noise_image(path: &Path, h: usize, w: usize, seed: u64) {
        let mut rng = stream_rng(seed, "ds-test");
        let mut img = Tensor::zeros([1, 3, h, w]);
        for v in img.data_mut() {
            *v = rng.random_range(0..=255u32) as f32 / 255.0;
        }
        imaging::save_image(&img, path).unwrap();
    }

    fn make_corpus(dir: &Path, n: usize, lr_size: usize, scale: usize) -> (PathBuf, PathBuf) {
        let lr_dir = dir.join("lr");
        let hr_dir = dir.join("hr");
        std::fs::create_dir_all(&lr_dir).unwrap();
        std::fs::create_dir_all(&hr_dir).unwrap();
        for i in 0..n {
            write_noise_image(&lr_dir.join(format!("img_{i:03}.png")), lr_size, lr_size, i as u64);
            write_noise_image(&hr_dir.join(format!("img_{i:03}.png")), lr_size * scale, lr_size * scale, 100 + i as u64);
        }
        (lr_dir, hr_dir)
    }

    #[test]
    fn scan_sorts_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let (lr, hr) = make_corpus(dir.path(), 4, 12, 4);
        let corpus = scan_corpus(&lr, &hr, ScaleFactor::new(4).unwrap()).unwrap();
        assert_eq!(corpus.lr_paths.len(), 4);
        assert_eq!(corpus.hr_paths.len(), 4);
        let mut sorted = corpus.lr_paths.clone();
        sorted.sort();
        assert_eq!(corpus.lr_paths, sorted);
    }

    #[test]
    fn single_image_per_side_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let (lr, hr) = make_corpus(dir.path(), 1, 12, 4);
        assert!(scan_corpus(&lr, &hr, ScaleFactor::new(4).unwrap()).is_ok());
    }

    #[test]
    fn same_directory_on_both_sides_is_corpus_error() {
        let dir = tempfile::tempdir().unwrap();
        let (lr, _) = make_corpus(dir.path(), 2, 12, 4);
        assert!(matches!(scan_corpus(&lr, &lr, ScaleFactor::new(4).unwrap()), Err(Error::Corpus(_))));
    }

    #[test]
    fn empty_directory_is_corpus_error() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty");
        std::fs::create_dir_all(&empty).unwrap();
        let (_, hr) = make_corpus(dir.path(), 2, 12, 4);
        assert!(matches!(scan_corpus(&empty, &hr, ScaleFactor::new(4).unwrap()), Err(Error::Corpus(_))));
    }

    #[test]
    fn non_overlapping_split_sizes_and_disjointness() {
        let dir = tempfile::tempdir().unwrap();
        let (lr, hr) = make_corpus(dir.path(), 20, 8, 2);
        let corpus = scan_corpus(&lr, &hr, ScaleFactor::new(2).unwrap()).unwrap();
        for seed in 0..100 {
            let split = SplitSpec { n_prime: 15, mode: SplitMode::NonOverlapping };
            let out = apply_split(&corpus, &split, &mut stream_rng(seed, "split")).unwrap();
            assert_eq!(out.hr_paths.len(), 15);
            assert_eq!(out.lr_paths.len(), 5);
            // Disjoint index sets: retained basenames never collide.
            let hr_names: HashSet<_> = out.hr_paths.iter().map(|p| p.file_name().unwrap().to_owned()).collect();
            for p in &out.lr_paths {
                assert!(!hr_names.contains(p.file_name().unwrap()));
            }
        }
    }

    #[test]
    fn split_boundary_and_range_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (lr, hr) = make_corpus(dir.path(), 5, 8, 2);
        let corpus = scan_corpus(&lr, &hr, ScaleFactor::new(2).unwrap()).unwrap();
        let out = apply_split(
            &corpus,
            &SplitSpec { n_prime: 4, mode: SplitMode::NonOverlapping },
            &mut stream_rng(0, "split"),
        )
        .unwrap();
        assert_eq!(out.lr_paths.len(), 1);
        for bad in [0usize, 5, 6] {
            assert!(apply_split(
                &corpus,
                &SplitSpec { n_prime: bad, mode: SplitMode::NonOverlapping },
                &mut stream_rng(0, "split")
            )
            .is_err());
        }
        let basic = apply_split(&corpus, &SplitSpec { n_prime: 0, mode: SplitMode::Basic }, &mut stream_rng(0, "s"))
            .unwrap();
        assert_eq!(&basic, &corpus);
    }

    #[test]
    fn stage1_batch_shapes_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let (lr, hr) = make_corpus(dir.path(), 3, 16, 4);
        let corpus = scan_corpus(&lr, &hr, ScaleFactor::new(4).unwrap()).unwrap();
        let mut sampler = BatchSampler::new(false);
        let (syn, real) = sampler.stage1_batch(&corpus, 8, 8, &mut stream_rng(1, "b")).unwrap();
        assert_eq!(syn.shape(), [8, 3, 8, 8]);
        assert_eq!(real.shape(), [8, 3, 8, 8]);
        let (syn2, real2) = BatchSampler::new(false).stage1_batch(&corpus, 8, 8, &mut stream_rng(1, "b")).unwrap();
        assert_eq!(syn, syn2);
        assert_eq!(real, real2);
    }

    #[test]
    fn tiny_corpus_fills_batch_by_resampling() {
        let dir = tempfile::tempdir().unwrap();
        let (lr, hr) = make_corpus(dir.path(), 1, 12, 2);
        let corpus = scan_corpus(&lr, &hr, ScaleFactor::new(2).unwrap()).unwrap();
        let mut sampler = BatchSampler::new(false);
        let (syn, _) = sampler.stage1_batch(&corpus, 6, 8, &mut stream_rng(2, "b")).unwrap();
        assert_eq!(syn.batch(), 6);
    }

    #[test]
    fn oversized_patch_is_corpus_error() {
        let dir = tempfile::tempdir().unwrap();
        let (lr, hr) = make_corpus(dir.path(), 2, 8, 2);
        let corpus = scan_corpus(&lr, &hr, ScaleFactor::new(2).unwrap()).unwrap();
        let mut sampler = BatchSampler::new(false);
        assert!(matches!(sampler.stage1_batch(&corpus, 2, 9, &mut stream_rng(0, "b")), Err(Error::Corpus(_))));
    }

    fn make_pairset(dir: &Path, n: usize, lr_size: usize, scale: ScaleFactor) -> GeneratedPairSet {
        let gen_dir = dir.join("gen");
        let phr_dir = dir.join("phr");
        std::fs::create_dir_all(&gen_dir).unwrap();
        std::fs::create_dir_all(&phr_dir).unwrap();
        let mut pairs = Vec::new();
        for i in 0..n {
            // gen = bicubic(hr) so crops are spatially consistent.
            let hr_path = phr_dir.join(format!("hr_{i}.png"));
            write_noise_image(&hr_path, lr_size * scale.get(), lr_size * scale.get(), 500 + i as u64);
            let hr = imaging::load_image(&hr_path).unwrap();
            let gen = imaging::bicubic_resize(&hr, ResizeScale::down(scale)).unwrap();
            let gen_path = gen_dir.join(format!("gen_{i}.png"));
            imaging::save_image(&gen, &gen_path).unwrap();
            pairs.push((gen_path, hr_path));
        }
        GeneratedPairSet { pairs, provenance: "test".into(), scale }
    }

    #[test]
    fn stage2_batch_shapes_and_bicubic_interior_agreement() {
        let dir = tempfile::tempdir().unwrap();
        let scale = ScaleFactor::new(4).unwrap();
        let pairset = make_pairset(dir.path(), 2, 16, scale);
        let (lr, hr) = make_corpus(dir.path(), 2, 16, 4);
        let corpus = scan_corpus(&lr, &hr, scale).unwrap();
        let mut sampler = BatchSampler::new(false);
        let batch = sampler.stage2_batch(&pairset, &corpus, 4, 8, &mut stream_rng(3, "b"), true).unwrap();
        assert_eq!(batch.gen_lr.shape(), [4, 3, 8, 8]);
        assert_eq!(batch.real_hr.shape(), [4, 3, 32, 32]);
        assert_eq!(batch.real_lr.as_ref().unwrap().shape(), [4, 3, 8, 8]);

        // With gen = B(hr), downscaling the HR crop reproduces the gen crop
        // away from the resampling boundary ring (and the 8-bit quantization
        // of the stored gen image).
        for b in 0..4 {
            let hr_b = batch.real_hr.slice_batch(b);
            let lr_b = bicubic_resize(&hr_b, ResizeScale::down(scale)).unwrap();
            for c in 0..3 {
                for y in 2..6 {
                    for x in 2..6 {
                        let d = (lr_b.at(0, c, y, x) - batch.gen_lr.at(b, c, y, x)).abs();
                        assert!(d <= 0.5 / 255.0 + 1e-5, "interior mismatch {d}");
                    }
                }
            }
        }
    }

    use crate::imaging::bicubic_resize;

    #[test]
    fn stage2_without_real_lr_allows_empty_lr_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let scale = ScaleFactor::new(2).unwrap();
        let pairset = make_pairset(dir.path(), 2, 12, scale);
        let corpus = UnpairedCorpus { lr_paths: Vec::new(), hr_paths: Vec::new(), scale };
        let mut sampler = BatchSampler::new(false);
        let batch = sampler.stage2_batch(&pairset, &corpus, 2, 8, &mut stream_rng(0, "b"), false).unwrap();
        assert!(batch.real_lr.is_none());
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let scale = ScaleFactor::new(3).unwrap();
        let pairset = make_pairset(dir.path(), 3, 8, scale);
        let manifest = dir.path().join("pairs.tsv");
        pairset.save_manifest(&manifest).unwrap();
        let loaded = GeneratedPairSet::load_manifest(&manifest).unwrap();
        assert_eq!(loaded.provenance, "test");
        assert_eq!(loaded.scale, scale);
        let canon: Vec<_> = loaded.pairs.iter().map(|(g, h)| (g.canonicalize().unwrap(), h.canonicalize().unwrap())).collect();
        let want: Vec<_> = pairset.pairs.iter().map(|(g, h)| (g.canonicalize().unwrap(), h.canonicalize().unwrap())).collect();
        assert_eq!(canon, want);
    }
}
