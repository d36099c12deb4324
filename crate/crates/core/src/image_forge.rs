//! Fooling images: Mix (global blend) and Patch (rectangular paste).
//!
//! Mix: `x~ = λ·x_o + (1 - λ)·x_f` with the fake resized to the original.
//! Patch: `x~ = M ⊙ x_o + (1 - M) ⊙ x_f` with `M` zero on one rectangle;
//! the realized `λ = ΣM / (W·H)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::imageops::{self, FilterType};
use image::RgbImage;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concept::lemma_candidates;
use crate::corpus::{Corpus, ImageRecord};
use crate::seed::derive_rng;
use crate::{Error, Result};

/// Partner draws before `pair_fakes` settles for a partner sharing nouns.
pub const PAIR_ATTEMPTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixMode {
    Mix,
    Patch,
}

impl MixMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MixMode::Mix => "mix",
            MixMode::Patch => "patch",
        }
    }
}

impl fmt::Display for MixMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MixMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mix" => Ok(MixMode::Mix),
            "patch" => Ok(MixMode::Patch),
            other => Err(Error::InvalidArgument(format!("unknown image mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl MaskRect {
    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageManifestEntry {
    pub new_image_id: String,
    pub orig_image_id: String,
    pub fake_image_id: String,
    pub mode: MixMode,
    pub lambda_requested: f64,
    pub lambda_actual: f64,
    pub seed: u64,
    pub mask_rect: Option<MaskRect>,
    /// Relative to the image output directory.
    pub output_path: String,
}

pub fn new_image_id(orig: &str, mode: MixMode, lambda: f64, seed: u64) -> String {
    format!("{orig}#{mode}{}#s{seed}", lambda_label(lambda))
}

/// Shortest decimal form of `lambda`, used in ids and paths.
pub fn lambda_label(lambda: f64) -> String {
    format!("{lambda}")
}

fn check_dims(img: &RgbImage, what: &str) -> Result<()> {
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::InvalidImage(format!("{what} image has a zero dimension")));
    }
    Ok(())
}

fn resized(img: &RgbImage, w: u32, h: u32) -> RgbImage {
    if img.dimensions() == (w, h) {
        img.clone()
    } else {
        imageops::resize(img, w, h, FilterType::Triangle)
    }
}

/// Global blend of `orig` and `fake` (bilinearly resized to `orig`).
pub fn mix(orig: &RgbImage, fake: &RgbImage, lambda: f64) -> Result<RgbImage> {
    check_dims(orig, "original")?;
    check_dims(fake, "fake")?;
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidArgument(format!("mix lambda {lambda} outside (0, 1]")));
    }
    if lambda == 1.0 {
        return Ok(orig.clone());
    }
    let fake = resized(fake, orig.width(), orig.height());
    let mut out = orig.clone();
    for (o, f) in out.as_mut().iter_mut().zip(fake.as_raw()) {
        let v = lambda * *o as f64 + (1.0 - lambda) * *f as f64;
        *o = v.round().clamp(0.0, 255.0) as u8;
    }
    Ok(out)
}

/// `λ = ΣM / (W·H)` for a mask that is zero exactly on `rect`.
pub fn lambda_from_rect(width: u32, height: u32, rect: &MaskRect) -> f64 {
    let total = width as u64 * height as u64;
    (total - rect.area()) as f64 / total as f64
}

/// Rectangle of area ≈ `(1 - λ)·W·H` with aspect ratio (w/h) drawn
/// uniformly from [0.5, 2], placed uniformly inside the image.
pub fn patch_rect<R: Rng + ?Sized>(width: u32, height: u32, lambda_target: f64, rng: &mut R) -> Result<MaskRect> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidImage("image has a zero dimension".into()));
    }
    // λ = 1 is accepted as the identity (empty rectangle).
    if !(lambda_target > 0.0 && lambda_target <= 1.0) {
        return Err(Error::InvalidArgument(format!("patch lambda {lambda_target} outside (0, 1]")));
    }
    let area = (1.0 - lambda_target) * width as f64 * height as f64;
    let aspect: f64 = rng.random_range(0.5..=2.0);
    if area < 0.5 {
        return Ok(MaskRect { x: 0, y: 0, w: 0, h: 0 });
    }
    let mut w = ((area * aspect).sqrt().round() as u32).clamp(1, width);
    let mut h = (area / w as f64).round() as u32;
    if h > height {
        h = height;
        w = ((area / h as f64).round() as u32).clamp(1, width);
    }
    let h = h.max(1);
    let x = rng.random_range(0..=width - w);
    let y = rng.random_range(0..=height - h);
    Ok(MaskRect { x, y, w, h })
}

/// Pastes `fake`, resized to a random rectangle, into `orig`.
pub fn patch<R: Rng + ?Sized>(orig: &RgbImage, fake: &RgbImage, lambda_target: f64, rng: &mut R) -> Result<(RgbImage, f64, MaskRect)> {
    check_dims(orig, "original")?;
    check_dims(fake, "fake")?;
    let rect = patch_rect(orig.width(), orig.height(), lambda_target, rng)?;
    Ok((paste(orig, fake, &rect), lambda_from_rect(orig.width(), orig.height(), &rect), rect))
}

/// `orig` with `fake` resized into `rect`.
pub fn paste(orig: &RgbImage, fake: &RgbImage, rect: &MaskRect) -> RgbImage {
    let mut out = orig.clone();
    if rect.area() == 0 {
        return out;
    }
    let piece = resized(fake, rect.w, rect.h);
    imageops::replace(&mut out, &piece, rect.x as i64, rect.y as i64);
    out
}

fn noun_lemmas(corpus: &Corpus, image: &ImageRecord) -> BTreeSet<String> {
    image
        .caption_ids
        .iter()
        .filter_map(|id| corpus.caption(id))
        .flat_map(|c| c.noun_indices.iter().map(move |&i| &c.tokens[i]))
        .flat_map(|w| lemma_candidates(w))
        .collect()
}

/// Assigns every image a different image of the corpus to blend in.
///
/// Partners are drawn uniformly per image from a generator keyed by
/// `(seed, image_id)`; a partner whose captions share a noun lemma with the
/// original's is redrawn, up to [`PAIR_ATTEMPTS`] times.
pub fn pair_fakes(corpus: &Corpus, seed: u64) -> BTreeMap<String, String> {
    let n = corpus.images.len();
    if n < 2 {
        return BTreeMap::new();
    }
    let lemmas: Vec<BTreeSet<String>> = corpus
        .images
        .par_iter()
        .map(|img| noun_lemmas(corpus, img))
        .collect();
    corpus
        .images
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            let mut rng = derive_rng(seed, &["pair", &img.image_id]);
            let mut first = None;
            for _ in 0..PAIR_ATTEMPTS {
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                first.get_or_insert(j);
                if lemmas[i].is_disjoint(&lemmas[j]) {
                    return (img.image_id.clone(), corpus.images[j].image_id.clone());
                }
            }
            let j = first.expect("at least one draw");
            log::debug!("{}: no noun-disjoint partner found, using {}", img.image_id, corpus.images[j].image_id);
            (img.image_id.clone(), corpus.images[j].image_id.clone())
        })
        .collect()
}

/// Generated images plus the number of originals that could not be read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSet {
    pub mode: MixMode,
    pub lambda: f64,
    pub seed: u64,
    pub entries: Vec<ImageManifestEntry>,
    pub skipped: usize,
}

impl ImageSet {
    /// Directory of this set's PNGs, relative to the image output directory.
    pub fn relative_dir(mode: MixMode, lambda: f64, seed: u64) -> PathBuf {
        PathBuf::from(mode.as_str()).join(lambda_label(lambda)).join(seed.to_string())
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Vec<ImageManifestEntry>> {
        let text = crate::wordlist::read_to_string(path)?;
        let mut entries = Vec::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            if !line.trim().is_empty() {
                entries.push(serde_json::from_str(line).map_err(|e| Error::parse(path, &text[offset..], e))?);
            }
            offset += line.len();
        }
        Ok(entries)
    }
}

/// File name for an image id, with path separators and other unsafe
/// characters replaced.
pub fn file_stem(image_id: &str) -> String {
    image_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn load_rgb(path: &Path) -> Result<RgbImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(image::load_from_memory(&bytes)
        .map_err(|e| Error::InvalidImage(format!("{}: {e}", path.display())))?
        .to_rgb8())
}

/// Writes `img` as PNG via a temporary file and a rename.
pub fn write_png_atomic(img: &RgbImage, path: &Path) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::InvalidImage(e.to_string()))?;
    let tmp = path.with_extension("png.tmp");
    std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Generates one blended image per original into `out_dir` (the image
/// output root; files land under `{mode}/{lambda}/{seed}/`).
pub fn gen_image_set(
    corpus: &Corpus,
    image_root: &Path,
    pairing: &BTreeMap<String, String>,
    mode: MixMode,
    lambda: f64,
    seed: u64,
    out_dir: &Path,
) -> Result<ImageSet> {
    let valid = match mode {
        MixMode::Mix => lambda > 0.0 && lambda <= 1.0,
        MixMode::Patch => lambda > 0.0 && lambda < 1.0,
    };
    if !valid {
        return Err(Error::InvalidArgument(format!("{mode} lambda {lambda} out of range")));
    }
    let paths: HashMap<&str, PathBuf> = corpus
        .images
        .iter()
        .map(|i| (i.image_id.as_str(), image_root.join(&i.file_path)))
        .collect();
    let rel_dir = ImageSet::relative_dir(mode, lambda, seed);
    let results: Vec<Option<ImageManifestEntry>> = corpus
        .images
        .par_iter()
        .map(|img| {
            let Some(fake_id) = pairing.get(&img.image_id) else {
                log::warn!("{}: no fake partner, skipped", img.image_id);
                return Ok(None);
            };
            let (orig, fake) = match (load_rgb(&paths[img.image_id.as_str()]), load_rgb(&paths[fake_id.as_str()])) {
                (Ok(o), Ok(f)) if o.width() > 0 && o.height() > 0 && f.width() > 0 && f.height() > 0 => (o, f),
                (Err(e), _) | (_, Err(e)) => {
                    log::warn!("{}: {e}; skipped", img.image_id);
                    return Ok(None);
                }
                _ => {
                    log::warn!("{}: empty image; skipped", img.image_id);
                    return Ok(None);
                }
            };
            let (out, lambda_actual, mask_rect) = match mode {
                MixMode::Mix => (mix(&orig, &fake, lambda)?, lambda, None),
                MixMode::Patch => {
                    let mut rng = derive_rng(seed, &["patch", &lambda_label(lambda), &img.image_id]);
                    let (out, actual, rect) = patch(&orig, &fake, lambda, &mut rng)?;
                    (out, actual, Some(rect))
                }
            };
            let rel = rel_dir.join(format!("{}.png", file_stem(&img.image_id)));
            write_png_atomic(&out, &out_dir.join(&rel))?;
            Ok(Some(ImageManifestEntry {
                new_image_id: new_image_id(&img.image_id, mode, lambda, seed),
                orig_image_id: img.image_id.clone(),
                fake_image_id: fake_id.clone(),
                mode,
                lambda_requested: lambda,
                lambda_actual,
                seed,
                mask_rect,
                output_path: rel.to_string_lossy().replace('\\', "/"),
            }))
        })
        .collect::<Result<_>>()?;
    let skipped = results.iter().filter(|r| r.is_none()).count();
    Ok(ImageSet {
        mode,
        lambda,
        seed,
        entries: results.into_iter().flatten().collect(),
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn solid(w: u32, h: u32, v: u8) -> RgbImage {
        RgbImage::from_pixel(w, h, Rgb([v, v, v]))
    }

    fn noise(w: u32, h: u32, seed: u64) -> RgbImage {
        let mut rng = derive_rng(seed, &["noise"]);
        RgbImage::from_fn(w, h, |_, _| Rgb([rng.random(), rng.random(), rng.random()]))
    }

    #[test]
    fn mix_identity_and_midpoint() {
        let a = noise(16, 16, 1);
        assert_eq!(mix(&a, &noise(8, 8, 2), 1.0).unwrap(), a);
        let m = mix(&solid(4, 4, 255), &solid(4, 4, 0), 0.5).unwrap();
        assert!(m.as_raw().iter().all(|&v| v == 127 || v == 128));
    }

    #[test]
    fn mix_is_linear_up_to_rounding() {
        let a = noise(16, 16, 3);
        let b = noise(16, 16, 4);
        let ab = mix(&a, &b, 0.8).unwrap();
        let ba = mix(&b, &a, 0.8).unwrap();
        for i in 0..a.as_raw().len() {
            let lhs = ab.as_raw()[i] as i32 + ba.as_raw()[i] as i32;
            let rhs = a.as_raw()[i] as i32 + b.as_raw()[i] as i32;
            assert!((lhs - rhs).abs() <= 1);
        }
    }

    #[test]
    fn mix_rejects_bad_input() {
        assert!(mix(&solid(0, 4, 0), &solid(4, 4, 0), 0.5).is_err());
        assert!(mix(&solid(4, 4, 0), &solid(4, 4, 0), 0.0).is_err());
        assert!(mix(&solid(4, 4, 0), &solid(4, 4, 0), 1.5).is_err());
    }

    #[test]
    fn patch_partitions_pixels() {
        let a = noise(40, 30, 5);
        let b = noise(20, 20, 6);
        let mut rng = derive_rng(0, &[]);
        let (out, lambda, rect) = patch(&a, &b, 0.7, &mut rng).unwrap();
        let piece = imageops::resize(&b, rect.w, rect.h, FilterType::Triangle);
        for (x, y, p) in out.enumerate_pixels() {
            if rect.contains(x, y) {
                assert_eq!(*p, *piece.get_pixel(x - rect.x, y - rect.y));
            } else {
                assert_eq!(*p, *a.get_pixel(x, y));
            }
        }
        assert_eq!(lambda, lambda_from_rect(40, 30, &rect));
        assert!((lambda - 0.7).abs() <= 2.0 * 40.0 / (40.0 * 30.0));
    }

    #[test]
    fn patch_hits_target_area() {
        for seed in 0..200 {
            let mut rng = derive_rng(seed, &[]);
            for target in [0.9, 0.8, 0.7, 0.6] {
                let rect = patch_rect(224, 224, target, &mut rng).unwrap();
                assert!(rect.x + rect.w <= 224 && rect.y + rect.h <= 224);
                let aspect = rect.w as f64 / rect.h as f64;
                assert!((0.45..=2.2).contains(&aspect), "aspect {aspect}");
                assert!((lambda_from_rect(224, 224, &rect) - target).abs() <= 0.005);
            }
        }
    }

    #[test]
    fn tiny_patch_is_identity() {
        let a = noise(4, 4, 7);
        let mut rng = derive_rng(0, &[]);
        let (out, lambda, rect) = patch(&a, &noise(4, 4, 8), 0.99, &mut rng).unwrap();
        assert_eq!(rect.area(), 0);
        assert_eq!(lambda, 1.0);
        assert_eq!(out, a);
    }

    #[test]
    fn labels() {
        assert_eq!(lambda_label(0.9), "0.9");
        assert_eq!(new_image_id("42", MixMode::Patch, 0.8, 2), "42#patch0.8#s2");
        assert_eq!(file_stem("a/b c"), "a_b_c");
        assert_eq!(ImageSet::relative_dir(MixMode::Mix, 0.7, 1), PathBuf::from("mix/0.7/1"));
    }
}
