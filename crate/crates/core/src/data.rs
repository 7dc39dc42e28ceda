//! Corpus ingestion, deterministic splits and batching, synthetic corpus
//! generation, and byte-level obfuscation transforms.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::encoder::{
    bytes_to_entropy_image, bytes_to_gray, RawBinary, DEFAULT_ENTROPY_WINDOW, DEFAULT_SIDE,
};
use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

pub const DEFAULT_CLASSES: [&str; 3] = ["mirai", "gafgyt", "goodware"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodingMode {
    Gray,
    Entropy,
}

impl EncodingMode {
    pub fn channels(self) -> usize {
        match self {
            EncodingMode::Gray => 1,
            EncodingMode::Entropy => 3,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gray" => Ok(EncodingMode::Gray),
            "entropy" => Ok(EncodingMode::Entropy),
            other => Err(Error::Config(format!(
                "unknown encoding mode {other:?} (expected gray or entropy)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EncodingMode::Gray => "gray",
            EncodingMode::Entropy => "entropy",
        }
    }
}

/// One labeled corpus file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
    pub label_name: String,
}

/// Encoded images with integer labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<Tensor<f32>>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub mode: EncodingMode,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.70,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 5,
            seed: 0,
        }
    }
}

/// Parse a manifest: one `<relative-path>\t<label>` per line, `#` comments
/// and blank lines allowed. Paths resolve relative to the manifest's
/// directory. Duplicate paths and unknown labels are rejected.
pub fn load_manifest(path: &Path, classes: &[&str]) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (rel, label_name) = line.split_once('\t').ok_or(Error::ManifestParse {
            line: line_no,
            message: "expected <path>\\t<label>".into(),
        })?;
        let label = classes
            .iter()
            .position(|&c| c == label_name)
            .ok_or_else(|| Error::ManifestParse {
                line: line_no,
                message: format!("unknown label {label_name:?}"),
            })?;
        if !seen.insert(rel.to_string()) {
            return Err(Error::ManifestParse {
                line: line_no,
                message: format!("duplicate path {rel:?}"),
            });
        }
        entries.push(ManifestEntry {
            path: base.join(rel),
            label,
            label_name: label_name.to_string(),
        });
    }
    Ok(entries)
}

/// Options for [`encode_corpus`]; `obfuscation` applies the listed transforms
/// to each file's bytes before encoding.
#[derive(Debug, Clone, Default)]
pub struct EncodeOptions {
    pub obfuscation: Vec<Obfuscation>,
}

/// Encode every manifest entry, preserving order. Unreadable or empty files
/// abort the load, listing all offenders.
pub fn encode_corpus(
    entries: &[ManifestEntry],
    mode: EncodingMode,
    options: &EncodeOptions,
) -> Result<Dataset> {
    let mut images = Vec::with_capacity(entries.len());
    let mut labels = Vec::with_capacity(entries.len());
    let mut failures = Vec::new();
    for entry in entries {
        match encode_one(entry, mode, options) {
            Ok(img) => {
                images.push(img);
                labels.push(entry.label);
            }
            Err(e) => failures.push(format!("{}: {e}", entry.path.display())),
        }
    }
    if !failures.is_empty() {
        return Err(Error::CorpusLoad(failures));
    }
    Ok(Dataset {
        images,
        labels,
        class_names: DEFAULT_CLASSES.iter().map(|s| s.to_string()).collect(),
        mode,
    })
}

fn encode_one(
    entry: &ManifestEntry,
    mode: EncodingMode,
    options: &EncodeOptions,
) -> Result<Tensor<f32>> {
    let mut bytes = fs::read(&entry.path).map_err(|e| Error::io(&entry.path, e))?;
    for transform in &options.obfuscation {
        bytes = obfuscate(&bytes, *transform)?;
    }
    let bin = RawBinary::new(bytes, entry.path.display().to_string())?;
    encode_bytes(&bin, mode)
}

/// Encode a single in-memory binary with the default side and window.
pub fn encode_bytes(bin: &RawBinary, mode: EncodingMode) -> Result<Tensor<f32>> {
    Ok(match mode {
        EncodingMode::Gray => bytes_to_gray(bin, DEFAULT_SIDE)?.to_tensor(),
        EncodingMode::Entropy => {
            bytes_to_entropy_image(bin, DEFAULT_SIDE, DEFAULT_ENTROPY_WINDOW)?.to_tensor()
        }
    })
}

/// Seeded shuffle-split: first `ceil(train_fraction * n)` samples train.
pub fn split_dataset(ds: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    if ds.is_empty() {
        return Err(Error::Data("cannot split an empty dataset".into()));
    }
    if !(0.0 < spec.train_fraction && spec.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction {} outside (0, 1)",
            spec.train_fraction
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);
    let n_train = (spec.train_fraction * ds.len() as f64).ceil() as usize;
    let pick = |indices: &[usize]| Dataset {
        images: indices.iter().map(|&i| ds.images[i].clone()).collect(),
        labels: indices.iter().map(|&i| ds.labels[i]).collect(),
        class_names: ds.class_names.clone(),
        mode: ds.mode,
    };
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

/// Batch index lists for one epoch, reshuffled from `(seed, epoch)`. The
/// final partial batch is kept.
pub fn make_batches(n_samples: usize, config: &TrainConfig, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n_samples).collect();
    let mixed = config
        .seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(epoch as u64 + 1);
    let mut rng = ChaCha20Rng::seed_from_u64(mixed);
    order.shuffle(&mut rng);
    order
        .chunks(config.batch_size.max(1))
        .map(|c| c.to_vec())
        .collect()
}

/// Byte-level obfuscation transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Obfuscation {
    /// XOR every byte with the key.
    Xor { key: u8 },
    /// Seeded shuffle of 256-byte block order.
    Permute { seed: u64 },
}

pub const PERMUTE_BLOCK: usize = 256;

pub fn obfuscate(bytes: &[u8], mode: Obfuscation) -> Result<Vec<u8>> {
    if bytes.is_empty() {
        return Err(Error::EmptyInput("obfuscate".into()));
    }
    Ok(match mode {
        Obfuscation::Xor { key } => bytes.iter().map(|&b| b ^ key).collect(),
        Obfuscation::Permute { seed } => {
            let perm = block_permutation(bytes.len(), seed);
            let mut out = Vec::with_capacity(bytes.len());
            for &block in &perm {
                let lo = block * PERMUTE_BLOCK;
                let hi = (lo + PERMUTE_BLOCK).min(bytes.len());
                out.extend_from_slice(&bytes[lo..hi]);
            }
            out
        }
    })
}

/// Invert an obfuscation transform.
pub fn deobfuscate(bytes: &[u8], mode: Obfuscation) -> Result<Vec<u8>> {
    if bytes.is_empty() {
        return Err(Error::EmptyInput("deobfuscate".into()));
    }
    Ok(match mode {
        Obfuscation::Xor { key } => bytes.iter().map(|&b| b ^ key).collect(),
        Obfuscation::Permute { seed } => {
            let perm = block_permutation(bytes.len(), seed);
            // Shuffled block i came from original block perm[i]; blocks keep
            // their original lengths, so sizes must be tracked per block.
            let n_blocks = perm.len();
            let orig_len = |b: usize| {
                if b + 1 == n_blocks && bytes.len() % PERMUTE_BLOCK != 0 {
                    bytes.len() % PERMUTE_BLOCK
                } else {
                    PERMUTE_BLOCK
                }
            };
            let last_orig = n_blocks - 1;
            let mut starts = vec![0usize; n_blocks];
            let mut pos = 0;
            for (i, &src) in perm.iter().enumerate() {
                starts[i] = pos;
                pos += if src == last_orig {
                    orig_len(last_orig)
                } else {
                    PERMUTE_BLOCK
                };
            }
            let mut out = vec![0u8; bytes.len()];
            for (i, &src) in perm.iter().enumerate() {
                let len = if src == last_orig {
                    orig_len(last_orig)
                } else {
                    PERMUTE_BLOCK
                };
                let dst = src * PERMUTE_BLOCK;
                out[dst..dst + len].copy_from_slice(&bytes[starts[i]..starts[i] + len]);
            }
            out
        }
    })
}

fn block_permutation(len: usize, seed: u64) -> Vec<usize> {
    let n_blocks = len.div_ceil(PERMUTE_BLOCK);
    let mut perm: Vec<usize> = (0..n_blocks).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    perm
}

pub const GENERATOR_VERSION: u32 = 1;

/// Generate a three-family synthetic corpus under `out_dir` and return the
/// manifest path. Families, in class order:
///
/// 0. mirai-like: a 16-byte repeating motif over a 4-symbol alphabet with
///    5% seeded byte noise (low entropy).
/// 1. gafgyt-like: alternating 256-byte blocks of constant filler and
///    seeded uniform bytes (mid entropy).
/// 2. goodware-like: seeded uniform bytes with sparse zero runs (high
///    entropy).
///
/// File sizes are drawn from 2 to 64 KiB. Fully determined by the seed.
pub fn synth_corpus(n_per_class: usize, seed: u64, out_dir: &Path) -> Result<PathBuf> {
    if n_per_class == 0 {
        return Err(Error::Config("need at least one file per class".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut manifest = String::new();
    manifest.push_str(&format!(
        "# meta: seed={seed} version={GENERATOR_VERSION} n_per_class={n_per_class}\n"
    ));
    for (class, name) in DEFAULT_CLASSES.iter().enumerate() {
        for i in 0..n_per_class {
            let size = rng.gen_range(2 * 1024..=64 * 1024);
            let bytes = match class {
                0 => gen_motif_family(&mut rng, size),
                1 => gen_block_family(&mut rng, size),
                _ => gen_uniform_family(&mut rng, size),
            };
            let file_name = format!("{name}_{i:04}.bin");
            let path = out_dir.join(&file_name);
            fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
            manifest.push_str(&format!("{file_name}\t{name}\n"));
        }
    }
    let manifest_path = out_dir.join("MANIFEST.tsv");
    fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

fn gen_motif_family(rng: &mut ChaCha20Rng, size: usize) -> Vec<u8> {
    // Motif bytes come from a narrow low 4-symbol alphabet so this family
    // sits below the block family in mean window entropy.
    let motif: Vec<u8> = (0..16).map(|_| rng.gen_range(0..4u8)).collect();
    let mut bytes: Vec<u8> = (0..size).map(|i| motif[i % 16]).collect();
    let noisy = size / 20; // 5% of positions
    for _ in 0..noisy {
        let pos = rng.gen_range(0..size);
        bytes[pos] = rng.gen();
    }
    bytes
}

fn gen_block_family(rng: &mut ChaCha20Rng, size: usize) -> Vec<u8> {
    let filler: u8 = 0x80;
    let mut bytes = Vec::with_capacity(size);
    let mut block = 0usize;
    while bytes.len() < size {
        let take = 256.min(size - bytes.len());
        if block % 2 == 0 {
            bytes.extend(std::iter::repeat(filler).take(take));
        } else {
            bytes.extend((0..take).map(|_| rng.gen::<u8>()));
        }
        block += 1;
    }
    bytes
}

fn gen_uniform_family(rng: &mut ChaCha20Rng, size: usize) -> Vec<u8> {
    let mut bytes: Vec<u8> = (0..size).map(|_| rng.gen()).collect();
    // Sparse zero runs, roughly one per KiB.
    let runs = (size / 1024).max(1);
    for _ in 0..runs {
        let len = rng.gen_range(16..=64usize);
        let start = rng.gen_range(0..size.saturating_sub(len).max(1));
        bytes[start..start + len.min(size - start)].fill(0);
    }
    bytes
}
