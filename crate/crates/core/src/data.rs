//! IDX ingestion, normalization to `[0, 1]`, deterministic splits and
//! minibatching.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{derive_seed, Rng, Vector};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw contents of an IDX image file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// Sample-major, row-major within each image.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> &[u8] {
        let d = self.rows * self.cols;
        &self.pixels[i * d..(i + 1) * d]
    }
}

fn read_be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let chunk = bytes.get(offset..offset + 4).ok_or_else(|| {
        Error::Format(format!(
            "truncated IDX header: need {} bytes for {what}, have {}",
            offset + 4,
            bytes.len()
        ))
    })?;
    Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = read_be_u32(bytes, 0, "magic")?;
    if found != expected {
        return Err(Error::Format(format!(
            "bad IDX magic: expected {expected:#010x}, found {found:#010x}"
        )));
    }
    Ok(())
}

fn check_payload(bytes: &[u8], header: usize, payload: usize) -> Result<()> {
    let have = bytes.len() - header;
    if have != payload {
        return Err(Error::Format(format!(
            "IDX payload size mismatch: header declares {payload} bytes, file has {have}"
        )));
    }
    Ok(())
}

pub fn load_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let count = read_be_u32(bytes, 4, "count")? as usize;
    let rows = read_be_u32(bytes, 8, "rows")? as usize;
    let cols = read_be_u32(bytes, 12, "cols")? as usize;
    let payload = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::Format("IDX dimensions overflow".into()))?;
    check_payload(bytes, 16, payload)?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..].to_vec(),
    })
}

pub fn load_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let count = read_be_u32(bytes, 4, "count")? as usize;
    check_payload(bytes, 8, count)?;
    Ok(bytes[8..].to_vec())
}

pub fn write_idx_images(images: &IdxImages) -> Result<Vec<u8>> {
    if images.pixels.len() != images.count * images.rows * images.cols {
        return Err(Error::shape(
            "write_idx_images",
            images.count * images.rows * images.cols,
            images.pixels.len(),
        ));
    }
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [
        IDX_IMAGES_MAGIC,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    Ok(out)
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Maps each byte `v` to `v / 255`, `d` bytes per sample.
pub fn normalize(pixels: &[u8], d: usize) -> Vec<Vector> {
    if d == 0 {
        return Vec::new();
    }
    pixels
        .chunks_exact(d)
        .map(|img| Vector::from_raw(img.iter().map(|&v| v as f64 / 255.0).collect()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Valid,
    Test,
}

impl SplitTag {
    pub const ALL: [SplitTag; 3] = [SplitTag::Train, SplitTag::Valid, SplitTag::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Valid => "valid",
            SplitTag::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitTag::Train),
            "valid" | "validation" => Ok(SplitTag::Valid),
            "test" => Ok(SplitTag::Test),
            other => Err(Error::arg(format!("unknown split '{other}'"))),
        }
    }
}

/// Samples in `[0,1]^d`, labels and per-sample split tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Vector>,
    labels: Vec<usize>,
    dim: usize,
    n_classes: usize,
    split_tags: Vec<SplitTag>,
}

/// A labeled view of one split, owned.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub samples: Vec<Vector>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl LabeledSet {
    pub fn new(samples: Vec<Vector>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::shape("LabeledSet::new", samples.len(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::arg(format!("label {bad} out of range for {n_classes} classes")));
        }
        if let Some(first) = samples.first() {
            if let Some(bad) = samples.iter().find(|s| s.len() != first.len()) {
                return Err(Error::shape("LabeledSet::new", first.len(), bad.len()));
            }
        }
        Ok(LabeledSet {
            samples,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, Vector::len)
    }
}

impl Dataset {
    /// Every sample starts tagged `Train`.
    pub fn new(samples: Vec<Vector>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::shape("Dataset::new", samples.len(), labels.len()));
        }
        if n_classes < 2 {
            return Err(Error::arg("a dataset needs at least 2 classes"));
        }
        let dim = samples.first().map_or(0, Vector::len);
        for (i, s) in samples.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::shape("Dataset::new", dim, format!("{} at sample {i}", s.len())));
            }
            if s.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::arg(format!("sample {i} has a component outside [0, 1]")));
            }
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(Error::arg(format!(
                "label {l} at sample {i} out of range for {n_classes} classes"
            )));
        }
        let split_tags = vec![SplitTag::Train; samples.len()];
        Ok(Dataset {
            samples,
            labels,
            dim,
            n_classes,
            split_tags,
        })
    }

    pub fn from_idx(images: &IdxImages, labels: &[u8], n_classes: usize) -> Result<Self> {
        if images.count != labels.len() {
            return Err(Error::Format(format!(
                "image file has {} samples but label file has {}",
                images.count,
                labels.len()
            )));
        }
        let samples = normalize(&images.pixels, images.rows * images.cols);
        Dataset::new(samples, labels.iter().map(|&l| l as usize).collect(), n_classes)
    }

    /// Concatenates pre-split parts, tagging each part's samples.
    pub fn from_parts(parts: Vec<(SplitTag, Dataset)>) -> Result<Self> {
        let mut iter = parts.into_iter();
        let Some((tag, mut acc)) = iter.next() else {
            return Err(Error::arg("no dataset parts given"));
        };
        acc.split_tags.fill(tag);
        for (tag, part) in iter {
            if part.dim != acc.dim && !part.samples.is_empty() && !acc.samples.is_empty() {
                return Err(Error::shape("Dataset::from_parts", acc.dim, part.dim));
            }
            if part.n_classes != acc.n_classes {
                return Err(Error::arg("dataset parts disagree on the number of classes"));
            }
            acc.dim = acc.dim.max(part.dim);
            acc.split_tags.extend(std::iter::repeat_n(tag, part.samples.len()));
            acc.samples.extend(part.samples);
            acc.labels.extend(part.labels);
        }
        Ok(acc)
    }

    /// One-hot "bars": each sample lights a single component `c` and is
    /// labelled `c`. Sample `i` starts as bar `i % width` and the order is
    /// then shuffled, so with `n_samples` a multiple of `width` every bar
    /// appears equally often.
    pub fn bars(n_samples: usize, width: usize, seed: u64) -> Result<Self> {
        if width < 2 {
            return Err(Error::arg("bars width must be at least 2"));
        }
        let mut rng = Rng::new(seed);
        let mut classes: Vec<usize> = (0..n_samples).map(|i| i % width).collect();
        rng.shuffle(&mut classes);
        let samples = classes
            .iter()
            .map(|&c| {
                let mut v = vec![0.0; width];
                v[c] = 1.0;
                Vector::from_raw(v)
            })
            .collect();
        Dataset::new(samples, classes, width)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn samples(&self) -> &[Vector] {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn split_tags(&self) -> &[SplitTag] {
        &self.split_tags
    }

    pub fn indices(&self, tag: SplitTag) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split_tags[i] == tag).collect()
    }

    pub fn count(&self, tag: SplitTag) -> usize {
        self.split_tags.iter().filter(|&&t| t == tag).count()
    }

    pub fn subset(&self, tag: SplitTag) -> LabeledSet {
        let idx = self.indices(tag);
        LabeledSet {
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    /// Keeps the first `n` samples.
    pub fn truncate(&mut self, n: usize) {
        self.samples.truncate(n);
        self.labels.truncate(n);
        self.split_tags.truncate(n);
    }

    /// Shuffles by `seed`, then assigns contiguous runs to train/valid/test.
    /// Sizes use largest-remainder rounding so each is within 1 of
    /// `fraction · N`.
    pub fn split(mut self, fractions: (f64, f64, f64), seed: u64) -> Result<Self> {
        let fr = [fractions.0, fractions.1, fractions.2];
        if fr.iter().any(|f| !f.is_finite() || *f <= 0.0) {
            return Err(Error::arg(format!("split fractions must be positive, got {fr:?}")));
        }
        let total: f64 = fr.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::arg(format!("split fractions must sum to 1, got {total}")));
        }
        let sizes = apportion(self.len(), &fr);
        let mut order: Vec<usize> = (0..self.len()).collect();
        Rng::new(seed).shuffle(&mut order);
        let mut tags = vec![SplitTag::Train; self.len()];
        let mut cursor = 0;
        for (tag, size) in SplitTag::ALL.into_iter().zip(sizes) {
            for &i in &order[cursor..cursor + size] {
                tags[i] = tag;
            }
            cursor += size;
        }
        self.split_tags = tags;
        Ok(self)
    }

    /// Index batches covering every sample tagged `tag` exactly once, in an
    /// order fixed by `(seed, epoch)`. The last batch may be short.
    pub fn minibatches(&self, tag: SplitTag, batch_size: usize, seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
        if batch_size == 0 {
            return Err(Error::arg("batch_size must be at least 1"));
        }
        let idx = self.indices(tag);
        if idx.is_empty() {
            return Err(Error::arg(format!("no samples tagged {}", tag.name())));
        }
        let order = epoch_order(idx.len(), seed, epoch);
        Ok(order
            .chunks(batch_size)
            .map(|c| c.iter().map(|&k| idx[k]).collect())
            .collect())
    }
}

/// Largest-remainder apportionment of `n` items by `fractions`.
fn apportion(n: usize, fractions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = n - sizes.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..fractions.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in by_remainder.iter().cycle() {
        if rest == 0 {
            break;
        }
        sizes[i] += 1;
        rest -= 1;
    }
    sizes
}

/// Permutation of `0..n` for one training epoch.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(derive_seed(seed ^ epoch as u64, "epoch-order")).shuffle(&mut order);
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand_built_images() -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&[0, 0, 8, 3]); // 2051
        b.extend_from_slice(&[0, 0, 0, 1]);
        b.extend_from_slice(&[0, 0, 0, 2]);
        b.extend_from_slice(&[0, 0, 0, 2]);
        b.extend_from_slice(&[0, 128, 255, 64]);
        b
    }

    #[test]
    fn hand_built_image_file() {
        let bytes = hand_built_images();
        assert_eq!(bytes.len(), 20);
        let img = load_idx_images(&bytes).unwrap();
        assert_eq!((img.count, img.rows, img.cols), (1, 2, 2));
        assert_eq!(img.image(0), &[0, 128, 255, 64]);
        assert_eq!(write_idx_images(&img).unwrap(), bytes);
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let labels = write_idx_labels(&[1, 2]);
        let err = load_idx_images(&labels).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        assert!(err.to_string().contains("0x00000803") && err.to_string().contains("0x00000801"));
        assert!(load_idx_labels(&hand_built_images()).is_err());
    }

    #[test]
    fn truncated_payloads() {
        let bytes = hand_built_images();
        let err = load_idx_images(&bytes[..18]).unwrap_err();
        assert!(err.to_string().contains("4 bytes"), "{err}");
        assert!(load_idx_images(&bytes[..10]).is_err());
        let labels = write_idx_labels(&[0, 1, 2]);
        assert!(load_idx_labels(&labels[..10]).is_err());
    }

    #[test]
    fn empty_files() {
        let img = load_idx_images(
            &write_idx_images(&IdxImages {
                count: 0,
                rows: 28,
                cols: 28,
                pixels: vec![],
            })
            .unwrap(),
        )
        .unwrap();
        assert_eq!(img.count, 0);
        assert!(load_idx_labels(&write_idx_labels(&[])).unwrap().is_empty());
        let ds = Dataset::from_idx(&img, &[], 10).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn hand_built_label_file() {
        let bytes = [0u8, 0, 8, 1, 0, 0, 0, 3, 0, 1, 2];
        assert_eq!(load_idx_labels(&bytes).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn normalize_examples() {
        let v = normalize(&[0, 255, 128], 3);
        assert_eq!(v[0].as_slice()[0], 0.0);
        assert_eq!(v[0].as_slice()[1], 1.0);
        assert!((v[0].as_slice()[2] - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn labels_out_of_range_rejected() {
        let img = load_idx_images(&hand_built_images()).unwrap();
        assert!(Dataset::from_idx(&img, &[10], 10).is_err());
        assert!(Dataset::from_idx(&img, &[9], 10).is_ok());
        assert!(Dataset::from_idx(&img, &[1, 2], 10).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = Dataset::bars(100, 4, 0).unwrap();
        let a = ds.clone().split((0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(
            (
                a.count(SplitTag::Train),
                a.count(SplitTag::Valid),
                a.count(SplitTag::Test)
            ),
            (80, 10, 10)
        );
        let b = ds.clone().split((0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(a.split_tags(), b.split_tags());

        let c = ds.clone().split((0.98, 0.01, 0.01), 1).unwrap();
        assert_eq!(c.count(SplitTag::Valid), 1);

        assert!(ds.clone().split((1.0, 0.0, 0.0), 1).is_err());
        assert!(ds.split((0.5, 0.3, 0.3), 1).is_err());
    }

    #[test]
    fn apportion_within_one() {
        for n in [0, 1, 7, 10, 99, 70_000] {
            for fr in [[5.0 / 7.0, 1.0 / 7.0, 1.0 / 7.0], [0.45, 0.45, 0.1], [0.34, 0.33, 0.33]] {
                let sizes = apportion(n, &fr);
                assert_eq!(sizes.iter().sum::<usize>(), n);
                for (s, f) in sizes.iter().zip(fr) {
                    assert!((*s as f64 - f * n as f64).abs() < 1.0);
                }
            }
        }
        assert_eq!(
            apportion(70_000, &[5.0 / 7.0, 1.0 / 7.0, 1.0 / 7.0]),
            vec![50_000, 10_000, 10_000]
        );
    }

    #[test]
    fn minibatch_sizes() {
        let ds = Dataset::bars(10, 2, 0).unwrap();
        let sizes: Vec<usize> = ds
            .minibatches(SplitTag::Train, 3, 1, 0)
            .unwrap()
            .iter()
            .map(Vec::len)
            .collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);
        assert_eq!(ds.minibatches(SplitTag::Train, 50, 1, 0).unwrap().len(), 1);
        assert!(ds.minibatches(SplitTag::Valid, 3, 1, 0).is_err());
        assert!(ds.minibatches(SplitTag::Train, 0, 1, 0).is_err());
    }

    #[test]
    fn minibatches_partition_the_split() {
        let ds = Dataset::bars(40, 4, 3).unwrap().split((0.5, 0.25, 0.25), 3).unwrap();
        let batches = ds.minibatches(SplitTag::Train, 7, 11, 2).unwrap();
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, ds.indices(SplitTag::Train));
        let other_epoch = ds.minibatches(SplitTag::Train, 7, 11, 3).unwrap();
        assert_ne!(batches, other_epoch);
        assert_eq!(batches, ds.minibatches(SplitTag::Train, 7, 11, 2).unwrap());
    }

    #[test]
    fn bars_are_balanced_one_hot() {
        let ds = Dataset::bars(256, 8, 0).unwrap();
        assert_eq!(ds.dim(), 8);
        for c in 0..8 {
            assert_eq!(ds.labels().iter().filter(|&&l| l == c).count(), 32);
        }
        for (s, &l) in ds.samples().iter().zip(ds.labels()) {
            assert_eq!(s.iter().sum::<f64>(), 1.0);
            assert_eq!(s[l], 1.0);
        }
    }
}
