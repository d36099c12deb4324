//! Synthetic test splits.
//!
//! [`write_karpathy_fixture`] writes a small Karpathy-style annotation file
//! with template captions and matching PNG images; [`synthetic_corpus`]
//! builds an ids-only corpus of any size for pool-shape checks.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::json;

use crate::corpus::{CaptionRecord, Corpus, ImageRecord, CAPTIONS_PER_IMAGE};
use crate::image_forge::write_png_atomic;
use crate::seed::derive_rng;
use crate::{Error, Result};

const SUBJECTS: &[&str] = &[
    "man", "woman", "dog", "cat", "horse", "boy", "girl", "bird", "cow", "elephant", "giraffe", "zebra",
];
const OBJECTS: &[&str] = &[
    "umbrella", "bicycle", "kite", "frisbee", "pizza", "surfboard", "skateboard", "laptop", "book", "ball",
    "sandwich", "banana",
];
const PLACES: &[&str] = &["street", "beach", "kitchen", "field", "park", "room", "table", "road", "river", "snow"];
const ADJECTIVES: &[&str] = &["young", "small", "large", "brown", "white", "black", "red", "happy", "old"];
const VERBS: &[&str] = &["holding", "carrying", "next to", "looking at", "playing with", "near"];

/// Paths of a written fixture.
#[derive(Debug, Clone)]
pub struct FixturePaths {
    pub annotations: PathBuf,
    pub image_root: PathBuf,
}

fn caption_text<R: Rng + ?Sized>(rng: &mut R, subject: &str, object: &str, place: &str) -> String {
    let adj = ADJECTIVES.choose(rng).unwrap();
    let verb = VERBS.choose(rng).unwrap();
    match rng.random_range(0..5) {
        0 => format!("A {adj} {subject} {verb} a {object} in the {place}."),
        1 => format!("a {subject} {verb} a {object}"),
        2 => format!("There is a {subject} with a {object} on the {place}"),
        3 => format!("The {adj} {subject} is {verb} the {object} by the {place}."),
        _ => format!("A {subject} and a {object}, in a {place}."),
    }
}

fn fixture_image<R: Rng + ?Sized>(rng: &mut R, width: u32, height: u32) -> RgbImage {
    let bg: Rgb<u8> = Rgb([rng.random(), rng.random(), rng.random()]);
    let fg = Rgb([rng.random(), rng.random(), rng.random()]);
    let (cx, cy) = (rng.random_range(0..width), rng.random_range(0..height));
    let r = rng.random_range(3..=width.min(height) / 2 + 3) as i64;
    let (rx, ry) = (rng.random_range(0..width), rng.random_range(0..height));
    let (rw, rh) = (rng.random_range(2..=width / 2), rng.random_range(2..=height / 2));
    let accent = Rgb([rng.random(), rng.random(), rng.random()]);
    RgbImage::from_fn(width, height, |x, y| {
        let (dx, dy) = (x as i64 - cx as i64, y as i64 - cy as i64);
        if dx * dx + dy * dy <= r * r {
            fg
        } else if x >= rx && x < rx + rw && y >= ry && y < ry + rh {
            accent
        } else {
            let shade = ((x + y) % 16) as u8;
            Rgb(bg.0.map(|c| c.saturating_add(shade)))
        }
    })
}

/// Writes `n_images` test-split images (5 captions each) plus a few
/// train-split distractors under `dir`.
pub fn write_karpathy_fixture(dir: &Path, n_images: usize, seed: u64) -> Result<FixturePaths> {
    let image_root = dir.to_path_buf();
    let images_dir = dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    let mut records = Vec::new();
    let mut sentid = 0u64;
    for i in 0..n_images + 2 {
        let cocoid = 100_000 + i as u64;
        let mut rng = derive_rng(seed, &["fixture", &cocoid.to_string()]);
        let subject = *SUBJECTS.choose(&mut rng).unwrap();
        let object = *OBJECTS.choose(&mut rng).unwrap();
        let place = *PLACES.choose(&mut rng).unwrap();
        let sentences: Vec<_> = (0..CAPTIONS_PER_IMAGE)
            .map(|_| {
                sentid += 1;
                json!({"raw": caption_text(&mut rng, subject, object, place), "sentid": sentid})
            })
            .collect();
        let filename = format!("{cocoid}.png");
        let split = if i < n_images { "test" } else { "train" };
        if i < n_images {
            let img = fixture_image(&mut rng, 48, 40);
            write_png_atomic(&img, &images_dir.join(&filename))?;
        }
        records.push(json!({
            "filepath": "images",
            "filename": filename,
            "split": split,
            "cocoid": cocoid,
            "sentences": sentences,
        }));
    }
    let annotations = dir.join("dataset_coco.json");
    let text = serde_json::to_string_pretty(&json!({"images": records, "dataset": "coco"}))?;
    std::fs::write(&annotations, text).map_err(|e| Error::io(&annotations, e))?;
    Ok(FixturePaths { annotations, image_root })
}

/// An ids-only corpus of `n_images` images with five two-word captions each.
pub fn synthetic_corpus(n_images: usize) -> Corpus {
    let mut images = Vec::with_capacity(n_images);
    let mut captions = Vec::with_capacity(n_images * CAPTIONS_PER_IMAGE);
    for i in 0..n_images {
        let image_id = format!("img{i:05}");
        let caption_ids: Vec<String> = (0..CAPTIONS_PER_IMAGE).map(|k| format!("{image_id}-{k}")).collect();
        for id in &caption_ids {
            captions.push(CaptionRecord {
                caption_id: id.clone(),
                image_id: image_id.clone(),
                text: "a dog".into(),
                tokens: vec!["a".into(), "dog".into()],
                noun_indices: vec![1],
            });
        }
        images.push(ImageRecord {
            file_path: format!("{image_id}.png"),
            image_id,
            caption_ids,
        });
    }
    Corpus::new("synthetic", images, captions).expect("synthetic corpus is valid")
}
