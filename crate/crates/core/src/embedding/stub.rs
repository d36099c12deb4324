//! Deterministic stand-in encoder.
//!
//! Vectors come from a SHA-256 seeded SplitMix64 stream, so the same input
//! always yields the same vector and the scheme is easy to reproduce in
//! other languages. Text is embedded as a weighted bag of token directions:
//! removing a token subtracts exactly that token's contribution, and with
//! near-orthogonal directions the resulting embedding shift grows with the
//! token's weight.

use std::collections::HashMap;

use image::RgbImage;
use sha2::{Digest, Sha256};

use super::{EmbeddingBackend, ProviderId};
use crate::corpus::tokenize;
use crate::{Error, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const SEP: u8 = 0x1f;

struct SplitMix64(u64);

impl SplitMix64 {
    fn seeded(bytes: &[u8]) -> Self {
        let digest = Sha256::digest(bytes);
        let mut seed = [0u8; 8];
        seed.copy_from_slice(&digest[..8]);
        SplitMix64(u64::from_le_bytes(seed))
    }

    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(GOLDEN);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Raw expansion of `bytes` into `dim` values in [-1, 1).
fn expand(bytes: &[u8], dim: usize) -> Vec<f64> {
    let mut stream = SplitMix64::seeded(bytes);
    (0..dim).map(|_| stream.next_unit() * 2.0 - 1.0).collect()
}

fn normalize(values: &[f64]) -> Option<Vec<f32>> {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    Some(values.iter().map(|v| (v / norm) as f32).collect())
}

fn keyed(parts: &[&[u8]]) -> Vec<u8> {
    let mut out = Vec::new();
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            out.push(SEP);
        }
        out.extend_from_slice(part);
    }
    out
}

/// Unit vector expanded from `bytes`. Panics if `dim < 2`.
pub fn stub_vector(bytes: &[u8], dim: usize) -> Vec<f32> {
    assert!(dim >= 2, "stub vectors need at least two dimensions");
    // An all-zero expansion has probability zero; re-key rather than divide by zero.
    let mut key = bytes.to_vec();
    loop {
        if let Some(v) = normalize(&expand(&key, dim)) {
            return v;
        }
        key.push(SEP);
    }
}

/// Default weight of `token` under `model`, in [0.25, 1.75).
pub fn stub_token_weight(model: &str, token: &str) -> f64 {
    let key = keyed(&[model.as_bytes(), b"weight", token.as_bytes()]);
    0.25 + 1.5 * SplitMix64::seeded(&key).next_unit()
}

/// Text embedding: normalized sum of `weight(token) * direction(token)` over
/// word tokens. Text without word tokens falls back to hashing its bytes.
pub fn stub_text_vector(model: &str, text: &str, dim: usize, weights: &HashMap<String, f64>) -> Vec<f32> {
    assert!(dim >= 2, "stub vectors need at least two dimensions");
    let tokens = tokenize(text);
    let mut acc = vec![0.0f64; dim];
    for token in &tokens {
        let weight = weights
            .get(token)
            .copied()
            .unwrap_or_else(|| stub_token_weight(model, token));
        let direction = expand(&keyed(&[model.as_bytes(), b"token", token.as_bytes()]), dim);
        for (a, d) in acc.iter_mut().zip(&direction) {
            *a += weight * d;
        }
    }
    match normalize(&acc) {
        Some(v) if !tokens.is_empty() => v,
        _ => stub_vector(&keyed(&[model.as_bytes(), b"text", text.as_bytes()]), dim),
    }
}

/// Image embedding from decoded RGB pixels, so re-encodings of the same
/// picture agree and any pixel change moves the vector.
pub fn stub_image_vector(model: &str, image: &RgbImage, dim: usize) -> Vec<f32> {
    let mut bytes = keyed(&[model.as_bytes(), b"image", b""]);
    bytes.extend_from_slice(&image.width().to_le_bytes());
    bytes.extend_from_slice(&image.height().to_le_bytes());
    bytes.extend_from_slice(image.as_raw());
    stub_vector(&bytes, dim)
}

/// In-process backend serving any model name with the stub encoders.
#[derive(Debug, Clone, Default)]
pub struct StubBackend {
    weights: HashMap<String, f64>,
}

impl StubBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Overrides the weight of individual tokens for every model.
    pub fn with_weights(weights: HashMap<String, f64>) -> Self {
        StubBackend { weights }
    }
}

impl EmbeddingBackend for StubBackend {
    fn embed_texts(&self, model: &ProviderId, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        Ok(texts
            .iter()
            .map(|t| stub_text_vector(&model.name, t, model.dim, &self.weights))
            .collect())
    }

    fn embed_images(&self, model: &ProviderId, images: &[Vec<u8>]) -> Result<Vec<Vec<f32>>> {
        images
            .iter()
            .map(|bytes| {
                let decoded = image::load_from_memory(bytes)
                    .map_err(|e| Error::InvalidImage(e.to_string()))?
                    .to_rgb8();
                Ok(stub_image_vector(&model.name, &decoded, model.dim))
            })
            .collect()
    }
}
