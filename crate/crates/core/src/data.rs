//! Datasets: bit-exact CIFAR-10-binary and IDX loaders, deterministic
//! synthetic generators, and seeded subsetting.
//!
//! Loaders are pure functions of the input bytes. The CIFAR-10 loader
//! round-trips: [`to_cifar10_bytes`] reproduces the exact bytes a dataset was
//! parsed from. Synthetic data is a pure function of the caller's PRNG, so a
//! seed pins every sample.
//!
//! Image data lives in `[0, 1]` (bytes divided by 255, nothing else — no
//! centering, no augmentation). Synthetic *vector* data (gaussians, spirals)
//! is not range-limited: class centers sit at radius 3 by construction.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

/// An immutable labeled dataset. `images` is `[N, C, H, W]`; vector data uses
/// `[N, 1, k, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Tensor,
    labels: Vec<usize>,
    classes: usize,
    name: String,
}

impl Dataset {
    /// Validates the core invariants: rank-4 images, one label per sample,
    /// every label below `classes`.
    pub fn new(images: Tensor, labels: Vec<usize>, classes: usize, name: String) -> Result<Self> {
        if images.rank() != 4 {
            return Err(Error::Data(format!(
                "images must be [N, C, H, W], got {:?}",
                images.shape()
            )));
        }
        let n = images.shape()[0];
        if labels.len() != n {
            return Err(Error::Data(format!(
                "{} images but {} labels",
                n,
                labels.len()
            )));
        }
        if classes < 2 {
            return Err(Error::Data(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(Dataset {
            images,
            labels,
            classes,
            name,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Per-sample shape `[C, H, W]`.
    pub fn sample_shape(&self) -> Vec<usize> {
        self.images.shape()[1..].to_vec()
    }

    /// How many samples carry each label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Copies the given samples (in the given order) into a new dataset.
    pub fn gather(&self, indices: &[usize]) -> Result<Dataset> {
        let n = self.len();
        let stride: usize = self.sample_shape().iter().product();
        let mut data = Vec::with_capacity(indices.len() * stride);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= n {
                return Err(Error::Data(format!(
                    "index {i} out of range for {n} samples"
                )));
            }
            data.extend_from_slice(&self.images.data()[i * stride..(i + 1) * stride]);
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend(self.sample_shape());
        Ok(Dataset {
            images: Tensor::new(shape, data)?,
            labels,
            classes: self.classes,
            name: self.name.clone(),
        })
    }

    /// True when every value sits in `[0, 1]` — holds for loader output,
    /// deliberately not for synthetic vector data.
    pub fn is_unit_range(&self) -> bool {
        self.images.data().iter().all(|&v| (0.0..=1.0).contains(&v))
    }
}

const CIFAR_RECORD: usize = 3073;
const CIFAR_PIXELS: usize = 3072;

/// Parses CIFAR-10 binary records: each is 1 label byte then 32x32 R, G, B
/// planes (row-major), 3073 bytes total. Pixels are scaled by 1/255.
pub fn parse_cifar10(bytes: &[u8]) -> Result<Dataset> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::Data(format!(
            "CIFAR-10 file length {} is not a positive multiple of {CIFAR_RECORD}",
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * CIFAR_PIXELS);
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        let label = rec[0];
        if label > 9 {
            return Err(Error::Data(format!(
                "record {i}: label byte {label} exceeds 9"
            )));
        }
        labels.push(label as usize);
        data.extend(rec[1..].iter().map(|&b| b as f64 / 255.0));
    }
    Dataset::new(
        Tensor::new(vec![n, 3, 32, 32], data)?,
        labels,
        10,
        "cifar10".into(),
    )
}

/// Loads and concatenates CIFAR-10 binary files in the order given.
pub fn load_cifar10_bin<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset> {
    if paths.is_empty() {
        return Err(Error::Data("no CIFAR-10 files given".into()));
    }
    let mut bytes = Vec::new();
    for p in paths {
        bytes.extend(
            std::fs::read(p.as_ref())
                .map_err(|e| Error::Data(format!("reading {}: {e}", p.as_ref().display())))?,
        );
    }
    parse_cifar10(&bytes)
}

/// Inverse of [`parse_cifar10`]: reproduces the original bytes exactly.
/// Fails if the data is not 8-bit quantized `[N, 3, 32, 32]` with labels
/// under 10.
pub fn to_cifar10_bytes(ds: &Dataset) -> Result<Vec<u8>> {
    if ds.images.shape()[1..] != [3, 32, 32] {
        return Err(Error::Data(format!(
            "CIFAR-10 layout needs [N, 3, 32, 32] images, got {:?}",
            ds.images.shape()
        )));
    }
    let mut out = Vec::with_capacity(ds.len() * CIFAR_RECORD);
    let stride = CIFAR_PIXELS;
    for (i, &label) in ds.labels.iter().enumerate() {
        if label > 9 {
            return Err(Error::Data(format!("label {label} exceeds 9")));
        }
        out.push(label as u8);
        for &v in &ds.images.data()[i * stride..(i + 1) * stride] {
            let scaled = v * 255.0;
            let b = scaled.round();
            if (scaled - b).abs() > 1e-9 || !(0.0..=255.0).contains(&b) {
                return Err(Error::Data(format!(
                    "pixel value {v} is not an 8-bit fraction"
                )));
            }
            out.push(b as u8);
        }
    }
    Ok(out)
}

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], pos: usize, what: &str) -> Result<u32> {
    bytes
        .get(pos..pos + 4)
        .map(|s| u32::from_be_bytes(s.try_into().unwrap()))
        .ok_or_else(|| Error::Data(format!("IDX {what}: truncated header")))
}

/// Parses an IDX image/label pair (the classic grayscale digit format):
/// big-endian headers, magic `0x00000803` for `N x H x W` u8 images and
/// `0x00000801` for `N` u8 labels. Output is `[N, 1, H, W]` in `[0, 1]`.
pub fn parse_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Dataset> {
    let magic = be_u32(image_bytes, 0, "image")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Data(format!(
            "IDX image magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}"
        )));
    }
    let n = be_u32(image_bytes, 4, "image")? as usize;
    let h = be_u32(image_bytes, 8, "image")? as usize;
    let w = be_u32(image_bytes, 12, "image")? as usize;
    if h == 0 || w == 0 {
        return Err(Error::Data(format!("IDX image dims {h}x{w} are empty")));
    }
    let want = 16 + n * h * w;
    if image_bytes.len() != want {
        return Err(Error::Data(format!(
            "IDX image file is {} bytes, header implies {want}",
            image_bytes.len()
        )));
    }

    let magic = be_u32(label_bytes, 0, "label")?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::Data(format!(
            "IDX label magic {magic:#010x}, expected {IDX_LABEL_MAGIC:#010x}"
        )));
    }
    let n_labels = be_u32(label_bytes, 4, "label")? as usize;
    if n_labels != n {
        return Err(Error::Data(format!(
            "IDX pair mismatch: {n} images but {n_labels} labels"
        )));
    }
    if label_bytes.len() != 8 + n {
        return Err(Error::Data(format!(
            "IDX label file is {} bytes, header implies {}",
            label_bytes.len(),
            8 + n
        )));
    }
    if n == 0 {
        return Err(Error::Data("IDX pair holds zero samples".into()));
    }

    let labels: Vec<usize> = label_bytes[8..].iter().map(|&b| b as usize).collect();
    let classes = labels.iter().max().copied().unwrap_or(0).max(1) + 1;
    let data: Vec<f64> = image_bytes[16..]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    Dataset::new(
        Tensor::new(vec![n, 1, h, w], data)?,
        labels,
        classes,
        "idx".into(),
    )
}

/// Loads an IDX image/label file pair from disk.
pub fn load_idx<P: AsRef<Path>>(image_path: P, label_path: P) -> Result<Dataset> {
    let imgs = std::fs::read(image_path.as_ref())
        .map_err(|e| Error::Data(format!("reading {}: {e}", image_path.as_ref().display())))?;
    let labels = std::fs::read(label_path.as_ref())
        .map_err(|e| Error::Data(format!("reading {}: {e}", label_path.as_ref().display())))?;
    parse_idx(&imgs, &labels)
}

/// One standard normal draw (Box–Muller; consumes exactly two uniforms).
fn normal(rng: &mut Rng) -> f64 {
    let u1 = 1.0 - rng.next_f64(); // (0, 1]: keeps ln() finite
    let u2 = rng.next_f64();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Radius of the circle the gaussian class centers sit on.
const GAUSSIANS_RADIUS: f64 = 3.0;

fn make_gaussians(k: usize, n: usize, rng: &mut Rng) -> Result<Dataset> {
    // Centers: equally spaced on a radius-3 circle in the first two of k
    // coordinates; isotropic unit-variance noise in all k.
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let th = std::f64::consts::TAU * j as f64 / k as f64;
            let mut c = vec![0.0; k];
            c[0] = GAUSSIANS_RADIUS * th.cos();
            c[1] = GAUSSIANS_RADIUS * th.sin();
            c
        })
        .collect();
    let mut data = Vec::with_capacity(n * k);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        labels.push(c);
        for &coord in &centers[c] {
            data.push(coord + normal(rng));
        }
    }
    Dataset::new(
        Tensor::new(vec![n, 1, k, 1], data)?,
        labels,
        k,
        format!("gaussians-{k}"),
    )
}

/// Spiral geometry: radius 0.5..3.0 over 1.5 turns, classes offset by a
/// half-revolution, coordinate noise sigma 0.1.
fn make_spirals(n: usize, rng: &mut Rng) -> Result<Dataset> {
    let mut data = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        labels.push(c);
        let t = rng.next_f64();
        let r = 0.5 + 2.5 * t;
        let th = 3.0 * std::f64::consts::PI * t + std::f64::consts::PI * c as f64;
        data.push(r * th.cos() + 0.1 * normal(rng));
        data.push(r * th.sin() + 0.1 * normal(rng));
    }
    Dataset::new(
        Tensor::new(vec![n, 1, 2, 1], data)?,
        labels,
        2,
        "spirals-2".into(),
    )
}

/// Builds a synthetic dataset. `kind` is `gaussians-<k>` (k in 2..=16) or
/// `spirals-2`. Samples cycle through classes, so class counts differ by at
/// most one. Deterministic given the PRNG state.
pub fn make_synthetic(kind: &str, n: usize, rng: &mut Rng) -> Result<Dataset> {
    type Builder = fn(usize, usize, &mut Rng) -> Result<Dataset>;
    let (builder, classes): (Builder, usize) = if let Some(k) = kind.strip_prefix("gaussians-") {
        let k: usize = k.parse().map_err(|_| bad_kind(kind))?;
        if !(2..=16).contains(&k) {
            return Err(Error::InvalidArg(format!(
                "gaussians class count must be 2..=16, got {k}"
            )));
        }
        (make_gaussians, k)
    } else if kind == "spirals-2" {
        (|_, n, rng| make_spirals(n, rng), 2)
    } else {
        return Err(bad_kind(kind));
    };
    if n < classes {
        return Err(Error::InvalidArg(format!(
            "{kind} needs at least {classes} samples, got {n}"
        )));
    }
    builder(classes, n, rng)
}

fn bad_kind(kind: &str) -> Error {
    Error::InvalidArg(format!(
        "unknown synthetic kind \"{kind}\" (expected gaussians-<k> or spirals-2)"
    ))
}

/// Seeded shuffle-and-split: the first `n_train` shuffled samples become the
/// train set, the next `n_test` the test set. Logs class counts.
pub fn subset(
    ds: &Dataset,
    n_train: usize,
    n_test: usize,
    rng: &mut Rng,
) -> Result<(Dataset, Dataset)> {
    let n = ds.len();
    if n_train + n_test > n {
        return Err(Error::InvalidArg(format!(
            "subset of {n_train}+{n_test} oversubscribes {n} samples"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let train = ds.gather(&idx[..n_train])?;
    let test = ds.gather(&idx[n_train..n_train + n_test])?;
    log::info!(
        "subset of {}: train {:?}, test {:?}",
        ds.name(),
        train.class_counts(),
        test.class_counts()
    );
    Ok((train, test))
}

/// Generates `n` CIFAR-10-format records of synthetic class-coded gratings:
/// class `c` fixes an orientation (`pi*c/10`) and spatial frequency
/// (2, 4, or 6 cycles), each channel phase-shifted, plus per-pixel noise.
/// Labels cycle 0..10. Useful wherever real CIFAR-10 files are absent but
/// the exact on-disk format (and a learnable signal) is needed.
pub fn synth_cifar10_bytes(n: usize, rng: &mut Rng) -> Vec<u8> {
    let mut out = Vec::with_capacity(n * CIFAR_RECORD);
    for i in 0..n {
        let c = i % 10;
        out.push(c as u8);
        let th = std::f64::consts::PI * c as f64 / 10.0;
        let f = (2 + 2 * (c % 3)) as f64;
        let (fx, fy) = (f * th.cos(), f * th.sin());
        for ch in 0..3 {
            let phase = ch as f64 * std::f64::consts::FRAC_PI_3;
            for y in 0..32 {
                for x in 0..32 {
                    let arg = std::f64::consts::TAU * (fx * x as f64 + fy * y as f64) / 32.0;
                    let noise = 0.05 * (2.0 * rng.next_f64() - 1.0);
                    let v = (0.5 + 0.45 * (arg + phase).sin() + noise).clamp(0.0, 1.0);
                    out.push((v * 255.0).round() as u8);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, fill: impl FnMut(usize) -> u8) -> Vec<u8> {
        let mut rec = vec![label];
        rec.extend((0..CIFAR_PIXELS).map(fill));
        rec
    }

    #[test]
    fn cifar_parses_planes_and_labels() {
        // Record 0: label 3, R plane all 255, G all 51, B all 0.
        // Record 1: all zero.
        let mut bytes = record(3, |i| match i / 1024 {
            0 => 255,
            1 => 51,
            _ => 0,
        });
        bytes.extend(record(0, |_| 0));
        let ds = parse_cifar10(&bytes).unwrap();
        assert_eq!(ds.images().shape(), &[2, 3, 32, 32]);
        assert_eq!(ds.labels(), &[3, 0]);
        assert_eq!(ds.classes(), 10);
        assert!(ds.is_unit_range());
        assert_eq!(ds.images().get(&[0, 0, 0, 0]).unwrap(), 1.0);
        assert_eq!(ds.images().get(&[0, 1, 5, 7]).unwrap(), 51.0 / 255.0);
        assert_eq!(ds.images().get(&[0, 2, 31, 31]).unwrap(), 0.0);
        assert!(ds.images().data()[CIFAR_PIXELS..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cifar_rejects_bad_input() {
        assert!(matches!(
            parse_cifar10(&vec![0u8; 3072]),
            Err(Error::Data(_))
        ));
        assert!(matches!(parse_cifar10(&[]), Err(Error::Data(_))));
        let bytes = record(10, |_| 0); // label byte over 9
        assert!(matches!(parse_cifar10(&bytes), Err(Error::Data(_))));
    }

    #[test]
    fn cifar_roundtrip_is_byte_exact() {
        let mut rng = Rng::new(99);
        let mut bytes = Vec::new();
        for i in 0..5 {
            bytes.extend(record((i % 10) as u8, |_| (rng.next_u64() % 256) as u8));
        }
        let ds = parse_cifar10(&bytes).unwrap();
        assert_eq!(to_cifar10_bytes(&ds).unwrap(), bytes);

        // Through real files too.
        let dir = std::env::temp_dir().join(format!("cifar-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let (p1, p2) = (dir.join("a.bin"), dir.join("b.bin"));
        std::fs::write(&p1, &bytes[..CIFAR_RECORD * 2]).unwrap();
        std::fs::write(&p2, &bytes[CIFAR_RECORD * 2..]).unwrap();
        let loaded = load_cifar10_bin(&[&p1, &p2]).unwrap();
        assert_eq!(loaded, ds);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn cifar_serializer_rejects_non_quantized() {
        let images = Tensor::filled(vec![1, 3, 32, 32], 0.5).unwrap(); // 127.5/255
        let ds = Dataset::new(images, vec![0], 10, "x".into()).unwrap();
        assert!(matches!(to_cifar10_bytes(&ds), Err(Error::Data(_))));
    }

    fn idx_pair(n: usize, h: usize, w: usize, px: impl FnMut(usize) -> u8) -> (Vec<u8>, Vec<u8>) {
        let mut imgs = Vec::new();
        imgs.extend(IDX_IMAGE_MAGIC.to_be_bytes());
        imgs.extend((n as u32).to_be_bytes());
        imgs.extend((h as u32).to_be_bytes());
        imgs.extend((w as u32).to_be_bytes());
        imgs.extend((0..n * h * w).map(px));
        let mut labels = Vec::new();
        labels.extend(IDX_LABEL_MAGIC.to_be_bytes());
        labels.extend((n as u32).to_be_bytes());
        labels.extend((0..n).map(|i| (i % 10) as u8));
        (imgs, labels)
    }

    #[test]
    fn idx_parses_valid_pair() {
        let (imgs, labels) = idx_pair(10, 28, 28, |i| (i % 256) as u8);
        let ds = parse_idx(&imgs, &labels).unwrap();
        assert_eq!(ds.images().shape(), &[10, 1, 28, 28]);
        assert_eq!(ds.labels()[3], 3);
        assert_eq!(ds.classes(), 10);
        assert!(ds.is_unit_range());
        assert_eq!(ds.images().get(&[0, 0, 0, 1]).unwrap(), 1.0 / 255.0);
    }

    #[test]
    fn idx_rejects_malformed_input() {
        let (imgs, labels) = idx_pair(10, 28, 28, |_| 0);

        let mut bad = imgs.clone();
        bad[3] = 0x02; // magic 0x00000802
        assert!(matches!(parse_idx(&bad, &labels), Err(Error::Data(_))));

        let (short_imgs, _) = idx_pair(9, 28, 28, |_| 0);
        assert!(matches!(
            parse_idx(&short_imgs, &labels),
            Err(Error::Data(_))
        ));

        assert!(matches!(
            parse_idx(&imgs[..imgs.len() - 1], &labels),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            parse_idx(&imgs[..10], &labels),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            parse_idx(&imgs, &labels[..labels.len() - 1]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn gaussians_are_balanced_and_deterministic() {
        let ds = make_synthetic("gaussians-3", 300, &mut Rng::new(7)).unwrap();
        assert_eq!(ds.class_counts(), vec![100, 100, 100]);
        assert_eq!(ds.images().shape(), &[300, 1, 3, 1]);
        assert_eq!(ds.classes(), 3);

        let again = make_synthetic("gaussians-3", 300, &mut Rng::new(7)).unwrap();
        assert_eq!(ds, again);
        let other = make_synthetic("gaussians-3", 300, &mut Rng::new(8)).unwrap();
        assert_ne!(ds, other);
    }

    // Unit-variance gaussians whose centers sit 2*3*sin(pi/3) ~ 5.2 apart are
    // almost separable: the nearest-center rule (a linear classifier) lands
    // near 0.99 accuracy; the contract claims > 0.95.
    #[test]
    fn gaussians_are_linearly_separable() {
        let k = 3;
        let ds = make_synthetic("gaussians-3", 3000, &mut Rng::new(1234)).unwrap();
        let centers: Vec<Vec<f64>> = (0..k)
            .map(|j| {
                let th = std::f64::consts::TAU * j as f64 / k as f64;
                vec![3.0 * th.cos(), 3.0 * th.sin(), 0.0]
            })
            .collect();
        let mut correct = 0;
        for i in 0..ds.len() {
            let p = &ds.images().data()[i * k..(i + 1) * k];
            let best = (0..k)
                .min_by(|&a, &b| {
                    let da: f64 = (0..k).map(|d| (p[d] - centers[a][d]).powi(2)).sum();
                    let db: f64 = (0..k).map(|d| (p[d] - centers[b][d]).powi(2)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            correct += (best == ds.labels()[i]) as usize;
        }
        let acc = correct as f64 / ds.len() as f64;
        assert!(acc > 0.95, "nearest-center accuracy {acc}");
    }

    #[test]
    fn spirals_shape_and_balance() {
        let ds = make_synthetic("spirals-2", 201, &mut Rng::new(3)).unwrap();
        assert_eq!(ds.images().shape(), &[201, 1, 2, 1]);
        assert_eq!(ds.class_counts(), vec![101, 100]);
        assert_eq!(
            ds,
            make_synthetic("spirals-2", 201, &mut Rng::new(3)).unwrap()
        );
        // Points stay within the spiral envelope (radius 3 plus noise).
        for i in 0..ds.len() {
            let p = &ds.images().data()[i * 2..i * 2 + 2];
            assert!((p[0].powi(2) + p[1].powi(2)).sqrt() < 4.0);
        }
    }

    #[test]
    fn synthetic_argument_errors() {
        let mut rng = Rng::new(1);
        assert!(matches!(
            make_synthetic("gaussians-3", 2, &mut rng),
            Err(Error::InvalidArg(_))
        ));
        assert!(matches!(
            make_synthetic("gaussians-1", 10, &mut rng),
            Err(Error::InvalidArg(_))
        ));
        assert!(matches!(
            make_synthetic("rings-4", 10, &mut rng),
            Err(Error::InvalidArg(_))
        ));
    }

    #[test]
    fn subset_splits_disjointly() {
        // Unique pixel values let us match rows back to origins.
        let n = 100;
        let images = Tensor::new(
            vec![n, 1, 1, 1],
            (0..n).map(|i| i as f64 / n as f64).collect(),
        )
        .unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
        let ds = Dataset::new(images, labels, 4, "toy".into()).unwrap();

        let (train, test) = subset(&ds, 50, 10, &mut Rng::new(5)).unwrap();
        assert_eq!(train.len(), 50);
        assert_eq!(test.len(), 10);
        let mut seen: Vec<f64> = train
            .images()
            .data()
            .iter()
            .chain(test.images().data())
            .copied()
            .collect();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        seen.dedup();
        assert_eq!(seen.len(), 60); // disjoint picks

        // Same seed, same split; labels travel with their rows.
        let (train2, test2) = subset(&ds, 50, 10, &mut Rng::new(5)).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        for i in 0..train.len() {
            let orig = (train.images().data()[i] * n as f64).round() as usize;
            assert_eq!(train.labels()[i], orig % 4);
        }

        let (full, empty) = subset(&ds, n, 0, &mut Rng::new(5)).unwrap();
        assert_eq!(full.len(), n);
        assert!(empty.is_empty());

        assert!(matches!(
            subset(&ds, 95, 10, &mut Rng::new(5)),
            Err(Error::InvalidArg(_))
        ));
    }

    #[test]
    fn grating_records_parse_as_cifar() {
        let bytes = synth_cifar10_bytes(25, &mut Rng::new(11));
        assert_eq!(bytes.len(), 25 * CIFAR_RECORD);
        let ds = parse_cifar10(&bytes).unwrap();
        assert_eq!(ds.labels()[..12], [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 0, 1]);
        assert!(ds.is_unit_range());
        // Different classes produce visibly different images.
        let a = &ds.images().data()[0..1024];
        let b = &ds.images().data()[CIFAR_PIXELS * 3..CIFAR_PIXELS * 3 + 1024];
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
        assert!(diff / 1024.0 > 0.1);
        // Deterministic.
        assert_eq!(bytes, synth_cifar10_bytes(25, &mut Rng::new(11)));
        // And they round-trip like any CIFAR data.
        assert_eq!(to_cifar10_bytes(&ds).unwrap(), bytes);
    }

    #[test]
    fn dataset_invariants_are_enforced() {
        let images = Tensor::zeros(vec![2, 1, 2, 1]).unwrap();
        assert!(Dataset::new(images.clone(), vec![0], 2, "x".into()).is_err());
        assert!(Dataset::new(images.clone(), vec![0, 2], 2, "x".into()).is_err());
        assert!(Dataset::new(images.clone(), vec![0, 1], 1, "x".into()).is_err());
        let flat = Tensor::zeros(vec![2, 2]).unwrap();
        assert!(Dataset::new(flat, vec![0, 1], 2, "x".into()).is_err());
        let ok = Dataset::new(images, vec![0, 1], 2, "x".into()).unwrap();
        assert_eq!(ok.sample_shape(), vec![1, 2, 1]);
        assert!(ok.gather(&[5]).is_err());
    }
}
