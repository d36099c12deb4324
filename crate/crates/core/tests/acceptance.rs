//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the summary is printed
//! exactly once, in order. Exits non-zero when any criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rocoforge::caption_forge::Policy;
use rocoforge::corpus::{CaptionRecord, NounLexicon};
use rocoforge::ei::{consensus_source_word, ei_from_embeddings, ei_score, leave_one_out, score_caption, select_extreme_noun, Extreme};
use rocoforge::embedding::{stub_text_vector, Embedder, EmbeddingBackend, EmbeddingMatrix, ProviderId, StubBackend};
use rocoforge::eval::{
    assemble_pool, drop_rate, false_recall_at_1, recall_at_1, recall_at_k, similarity, top1_streaming, Direction, FoolingItem, Pool,
    SimilarityMatrix,
};
use rocoforge::fixture::{synthetic_corpus, write_karpathy_fixture};
use rocoforge::image_forge::{lambda_from_rect, mix, patch, MixMode};
use rocoforge::pipeline::{Pipeline, RunConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// Drop-rate arithmetic against published table rows.

/// (base R@1, new R@1, printed drop rate)
const PUBLISHED_ROWS: &[(f64, f64, f64)] = &[
    (81.90, 64.50, 21.25),
    (66.06, 37.54, 43.17),
    (50.10, 36.44, 27.27),
    (64.31, 40.71, 36.70),
    (56.36, 39.03, 30.75),
    (52.44, 38.18, 27.19),
    (77.58, 60.13, 22.49),
    (70.54, 35.28, 49.98),
    (82.36, 66.84, 18.85),
    (52.66, 42.22, 19.82),
    (55.46, 39.30, 29.14),
    (58.02, 31.71, 45.34),
    (30.14, 20.29, 32.68),
    (60.67, 44.13, 27.27),
    (40.34, 27.04, 32.97),
    (51.55, 46.87, 9.08),
    (81.90, 72.74, 11.18),
    (66.06, 36.56, 44.66),
    (82.36, 80.98, 1.68),
    (77.58, 73.26, 5.57),
    (44.07, 40.94, 7.09),
    (50.10, 48.37, 3.45),
];

fn drop_rate_arithmetic() -> Outcome {
    let start = Instant::now();
    for &(base, new, printed) in PUBLISHED_ROWS {
        let got = drop_rate(base, new).map_err(|e| e.to_string())?;
        ensure((got - printed).abs() <= 0.02 + 1e-9, || format!("{base} -> {new}: got {got}, printed {printed}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("{} rows within 0.02", PUBLISHED_ROWS.len()))
}

// ---------------------------------------------------------------------------
// Metric oracle.

struct Instance {
    pool: Pool,
    sim: SimilarityMatrix,
    positives: Vec<Vec<bool>>,
    fooling: Vec<bool>,
}

fn random_instance(rng: &mut ChaCha8Rng, max_q: usize, max_g: usize) -> Instance {
    let q = rng.random_range(1..=max_q);
    let g = rng.random_range(2..=max_g);
    // Coarse score grid so ties are frequent.
    let levels = rng.random_range(2..40) as f32;
    let data: Vec<f32> = (0..q * g).map(|_| (rng.random_range(0..levels as u32) as f32) / levels).collect();
    let fooling: Vec<bool> = (0..g).map(|_| rng.random_bool(0.3)).collect();
    let mut positives = vec![vec![false; g]; q];
    for row in positives.iter_mut() {
        for (c, slot) in row.iter_mut().enumerate() {
            *slot = !fooling[c] && rng.random_bool(0.05);
        }
    }
    let pool = Pool::from_parts(
        Direction::I2t,
        (0..q).map(|i| format!("q{i}")).collect(),
        (0..g).map(|i| format!("g{i}")).collect(),
        positives
            .iter()
            .map(|row| (0..g as u32).filter(|&c| row[c as usize]).collect())
            .collect(),
        fooling.clone(),
    )
    .expect("valid pool");
    let sim = SimilarityMatrix::new(q, g, data).expect("shape");
    Instance { pool, sim, positives, fooling }
}

/// Exhaustive ranking: position of every gallery item for one query, with
/// higher scores first and the lower index first among equal scores.
fn oracle_ranks(scores: &[f32]) -> Vec<usize> {
    (0..scores.len())
        .map(|i| {
            scores
                .iter()
                .enumerate()
                .filter(|&(j, &s)| s > scores[i] || (s == scores[i] && j < i))
                .count()
        })
        .collect()
}

fn oracle_metrics(inst: &Instance, k: usize) -> (f64, f64, f64) {
    let q = inst.sim.rows;
    let (mut r1, mut fr1, mut rk) = (0usize, 0usize, 0usize);
    for r in 0..q {
        let ranks = oracle_ranks(inst.sim.row(r));
        let top = ranks.iter().position(|&x| x == 0).unwrap();
        r1 += inst.positives[r][top] as usize;
        fr1 += inst.fooling[top] as usize;
        rk += (0..ranks.len()).any(|c| inst.positives[r][c] && ranks[c] < k) as usize;
    }
    let pct = |h: usize| 100.0 * h as f64 / q as f64;
    (pct(r1), pct(fr1), pct(rk))
}

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for n in 0..1000 {
        let inst = random_instance(&mut rng, 50, 200);
        let k = rng.random_range(1..=10);
        let (r1, fr1, rk) = oracle_metrics(&inst, k);
        let got = (
            recall_at_1(&inst.sim, &inst.pool),
            false_recall_at_1(&inst.sim, &inst.pool),
            recall_at_k(&inst.sim, &inst.pool, k),
        );
        ensure(got == (r1, fr1, rk), || format!("instance {n}: got {got:?}, oracle {:?}", (r1, fr1, rk)))?;
    }
    // The streaming path used on real embeddings must agree with the dense one.
    for n in 0..50 {
        let q = rng.random_range(1..40);
        let g = rng.random_range(2..300);
        let p = ProviderId::new("stub", 8);
        let rows = |m: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f32>> {
            (0..m).map(|_| (0..8).map(|_| rng.random_range(0..3) as f32).collect()).collect()
        };
        let qm = EmbeddingMatrix::from_rows(p.clone(), &rows(q, &mut rng)).unwrap();
        let gm = EmbeddingMatrix::from_rows(p, &rows(g, &mut rng)).unwrap();
        let dense = rocoforge::eval::top1(&similarity(&qm, &gm).unwrap());
        let streamed = top1_streaming(&qm, &gm).unwrap();
        ensure(dense == streamed, || format!("streaming instance {n} disagrees"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok("1000 instances up to 50x200 match the exhaustive oracle".into())
}

// ---------------------------------------------------------------------------
// EI.

fn cosine_f64(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Backend multiplying every stub vector by a constant.
struct ScaledStub(f32);

impl EmbeddingBackend for ScaledStub {
    fn embed_texts(&self, model: &ProviderId, texts: &[String]) -> rocoforge::Result<Vec<Vec<f32>>> {
        let rows = StubBackend::new().embed_texts(model, texts)?;
        Ok(rows.into_iter().map(|r| r.into_iter().map(|v| v * self.0).collect()).collect())
    }

    fn embed_images(&self, model: &ProviderId, images: &[Vec<u8>]) -> rocoforge::Result<Vec<Vec<f32>>> {
        StubBackend::new().embed_images(model, images)
    }
}

const NOUNS: &[&str] = &["dog", "cat", "man", "woman", "bus", "table", "pizza", "horse", "kite", "plate", "street", "beach", "train", "bench"];
const FILLER: &[&str] = &["a", "the", "on", "with", "near", "two", "sitting", "big", "small", "riding"];

fn engineered_caption(rng: &mut ChaCha8Rng, id: usize) -> (CaptionRecord, usize, HashMap<String, f64>) {
    let n_nouns = rng.random_range(2..=4);
    let mut nouns: Vec<&str> = Vec::new();
    while nouns.len() < n_nouns {
        let w = NOUNS[rng.random_range(0..NOUNS.len())];
        if !nouns.contains(&w) {
            nouns.push(w);
        }
    }
    let mut words: Vec<&str> = Vec::new();
    for noun in &nouns {
        words.push(FILLER[rng.random_range(0..FILLER.len())]);
        words.push(noun);
    }
    let caption = CaptionRecord::from_text(format!("c{id}"), "i", words.join(" "), &NounLexicon::shipped());
    let weak = nouns[rng.random_range(0..nouns.len())];
    let weights: HashMap<String, f64> = nouns
        .iter()
        .map(|n| (n.to_string(), if *n == weak { 0.02 } else { 1.5 }))
        .collect();
    let weak_idx = caption.tokens.iter().position(|t| t == weak).unwrap();
    (caption, weak_idx, weights)
}

fn ei_correctness() -> Outcome {
    let start = Instant::now();
    let lex = NounLexicon::shipped();
    let provider = ProviderId::new("stub", 64);
    let embedder = Embedder::stub();
    let texts = [
        "a dog sitting on a wooden bench",
        "two men riding horses on the beach",
        "a plate of pizza next to a glass of wine",
        "a red bus driving down a city street",
        "a cat sleeping on the couch near a window",
    ];
    let mut checked = 0;
    for (i, text) in texts.iter().enumerate() {
        let caption = CaptionRecord::from_text(format!("c{i}"), "i", *text, &lex);
        for &idx in &caption.noun_indices {
            let got = ei_score(&embedder, &provider, &caption, idx).map_err(|e| e.to_string())?;
            // Independent recomputation: drop the token, re-embed, 1 - cosine.
            let mut kept = caption.tokens.clone();
            kept.remove(idx);
            let full = stub_text_vector("stub", text, 64, &HashMap::new());
            let reduced = stub_text_vector("stub", &kept.join(" "), 64, &HashMap::new());
            let want = 1.0 - cosine_f64(&full, &reduced);
            ensure((got - want).abs() <= 1e-6, || format!("{text:?} idx {idx}: {got} vs {want}"))?;

            let scaled = Embedder::new(Arc::new(ScaledStub(7.5)));
            let s = ei_score(&scaled, &provider, &caption, idx).map_err(|e| e.to_string())?;
            ensure((s - got).abs() <= 1e-6, || format!("scaled embeddings change EI: {s} vs {got}"))?;
            let reduced_text = leave_one_out(&caption, idx).map_err(|e| e.to_string())?;
            let a = stub_text_vector("stub", text, 64, &HashMap::new());
            let b = stub_text_vector("stub", &reduced_text, 64, &HashMap::new());
            let a3: Vec<f32> = a.iter().map(|v| v * 3.0).collect();
            let b3: Vec<f32> = b.iter().map(|v| v * 0.25).collect();
            let raw = ei_from_embeddings(&a, &b).map_err(|e| e.to_string())?;
            let raw_scaled = ei_from_embeddings(&a3, &b3).map_err(|e| e.to_string())?;
            ensure((raw - raw_scaled).abs() <= 1e-6, || "ei_from_embeddings is not scale invariant".into())?;
            checked += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let models: Vec<ProviderId> = ["vsrn", "clip", "vse-infty", "blip"]
        .iter()
        .zip([2048, 512, 1024, 256])
        .map(|(n, d)| ProviderId::new(*n, d))
        .collect();
    let mut hits = 0;
    for id in 0..200 {
        let (caption, weak_idx, weights) = engineered_caption(&mut rng, id);
        let e = Embedder::new(Arc::new(StubBackend::with_weights(weights)));
        let picked = select_extreme_noun(&e, &models[id % 4], &caption, Extreme::Lowest).map_err(|e| e.to_string())?;
        let mut choices = BTreeMap::new();
        for m in &models {
            let rec = score_caption(&e, m, &caption, false).map_err(|e| e.to_string())?;
            choices.insert(m.name.clone(), rec.lowest_noun_idx);
        }
        let consensus = consensus_source_word(&caption.caption_id, &choices, 0, Extreme::Lowest).map_err(|e| e.to_string())?;
        if picked == weak_idx && consensus.consensus_idx == weak_idx {
            hits += 1;
        }
    }
    ensure(hits == 200, || format!("least-influential noun found in {hits}/200 captions"))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("{checked} scores within 1e-6, scale invariant, 200/200 engineered captions"))
}

// ---------------------------------------------------------------------------
// Consensus.

fn consensus() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let names = ["vsrn", "clip", "vse-infty", "blip"];
    for n in 0..10_000 {
        let choices: BTreeMap<String, usize> = names.iter().map(|m| (m.to_string(), rng.random_range(0..5))).collect();
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for &c in choices.values() {
            *counts.entry(c).or_default() += 1;
        }
        let best = *counts.values().max().unwrap();
        let modes: Vec<usize> = counts.iter().filter(|&(_, &c)| c == best).map(|(&i, _)| i).collect();
        let rec = consensus_source_word(&format!("c{n}"), &choices, n as u64, Extreme::Lowest).map_err(|e| e.to_string())?;
        ensure(
            modes.contains(&rec.consensus_idx) && rec.consensus_count == best && rec.tie_broken == (modes.len() > 1),
            || format!("map {choices:?}: got {rec:?}"),
        )?;
    }

    let ties: [(&[usize], usize); 2] = [(&[1, 1, 6, 6], 2), (&[3, 7, 9, 12], 4)];
    let mut worst = 0.0f64;
    for (picks, k) in ties {
        let choices: BTreeMap<String, usize> = names.iter().zip(picks).map(|(m, &p)| (m.to_string(), p)).collect();
        let mut freq: HashMap<usize, usize> = HashMap::new();
        for seed in 0..10_000u64 {
            let rec = consensus_source_word("tie", &choices, seed, Extreme::Lowest).map_err(|e| e.to_string())?;
            *freq.entry(rec.consensus_idx).or_default() += 1;
        }
        let expected = 10_000.0 / k as f64;
        ensure(freq.len() == k, || format!("only {} of {k} tied indices drawn", freq.len()))?;
        for (idx, count) in &freq {
            let dev = (*count as f64 - expected).abs() / expected;
            worst = worst.max(dev);
            ensure(dev <= 0.05, || format!("index {idx} drawn {count} times, expected {expected}"))?;
        }
    }
    Ok(format!("10000 maps match the mode oracle; tie draws within {:.1}% of uniform", worst * 100.0))
}

// ---------------------------------------------------------------------------
// Mixing.

fn random_image(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |_, _| Rgb([rng.random(), rng.random(), rng.random()]))
}

fn mixing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 0..100 {
        let a = random_image(&mut rng, 16, 16);
        let b = random_image(&mut rng, 16, 16);
        let lambda: f64 = rng.random_range(0.0..=1.0);
        let out = mix(&a, &b, lambda).map_err(|e| e.to_string())?;
        for i in 0..out.as_raw().len() {
            let reference = lambda * a.as_raw()[i] as f64 + (1.0 - lambda) * b.as_raw()[i] as f64;
            let got = out.as_raw()[i] as f64;
            ensure((got - reference).abs() <= 1.0, || format!("pair {n}, byte {i}: {got} vs {reference}"))?;
        }
        let same = mix(&a, &b, 1.0).map_err(|e| e.to_string())?;
        ensure(same == a, || format!("pair {n}: mix at lambda 1 is not the identity"))?;
    }

    let orig = random_image(&mut rng, 224, 224);
    let fake = random_image(&mut rng, 224, 224);
    let mut worst = 0.0f64;
    for &target in &[0.9, 0.8, 0.7, 0.6, 0.5] {
        for seed in 0..20 {
            let mut prng = ChaCha8Rng::seed_from_u64(seed);
            let (out, actual, rect) = patch(&orig, &fake, target, &mut prng).map_err(|e| e.to_string())?;
            ensure(actual == lambda_from_rect(224, 224, &rect), || "stored lambda differs from the rectangle".into())?;
            worst = worst.max((actual - target).abs());
            ensure((actual - target).abs() <= 0.005, || format!("target {target}: actual {actual}"))?;
            // The pasted region is the fake resized to the rectangle.
            let pasted = image::imageops::resize(&fake, rect.w, rect.h, image::imageops::FilterType::Triangle);
            let mut from_fake = 0u64;
            for (x, y, p) in out.enumerate_pixels() {
                if rect.contains(x, y) {
                    ensure(p == pasted.get_pixel(x - rect.x, y - rect.y), || format!("pixel ({x},{y}) is not from the fake"))?;
                    from_fake += 1;
                } else {
                    ensure(p == orig.get_pixel(x, y), || format!("pixel ({x},{y}) is not from the original"))?;
                }
            }
            ensure(from_fake == rect.area(), || "partition does not cover the rectangle".into())?;
        }
    }
    let mut prng = ChaCha8Rng::seed_from_u64(0);
    let (same, actual, _) = patch(&orig, &fake, 1.0, &mut prng).map_err(|e| e.to_string())?;
    ensure(same == orig && actual == 1.0, || "patch at lambda 1 is not the identity".into())?;
    Ok(format!("mix within 1/255 on 100 pairs; patch partition exact, |lambda error| <= {worst:.5}; lambda 1 identity"))
}

// ---------------------------------------------------------------------------
// Determinism of the full pipeline.

fn read_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn determinism() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fixture = write_karpathy_fixture(&dir.path().join("data"), 20, 0).map_err(|e| e.to_string())?;
    let run = |name: &str, jobs: usize| -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
        let config = RunConfig {
            corpus: Some(fixture.annotations.clone()),
            image_root: Some(fixture.image_root.clone()),
            policies: Policy::ALL.to_vec(),
            modes: vec![MixMode::Mix, MixMode::Patch],
            lambdas: vec![0.9, 0.8],
            seeds: vec![0, 1, 2],
            out_dir: dir.path().join(name),
            cache: Some(dir.path().join(format!("cache-{name}"))),
            jobs: Some(jobs),
            ..RunConfig::default()
        };
        Pipeline::new(config)
            .and_then(|p| p.run_all())
            .map_err(|e| format!("{name}: {e}"))?;
        Ok(read_tree(&dir.path().join(name)))
    };
    let a = run("a", 1)?;
    let b = run("b", 4)?;
    let c = run("c", 4)?;
    ensure(a.keys().any(|p| p.ends_with("report.csv")), || "no report produced".into())?;
    for other in [&b, &c] {
        ensure(a.len() == other.len(), || format!("{} vs {} files", a.len(), other.len()))?;
        for (path, bytes) in &a {
            ensure(other.get(path) == Some(bytes), || format!("{} differs", path.display()))?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("{} files byte-identical across 3 runs (jobs 1, 4, 4) in {:.1}s", a.len(), elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------------------
// Pool shapes at full scale.

fn pool_shape() -> Outcome {
    let corpus = synthetic_corpus(5000);
    let captions: Vec<FoolingItem> = corpus
        .captions_in_order()
        .map(|c| FoolingItem {
            id: format!("{}#rand_voca#s0", c.caption_id),
            orig_id: c.caption_id.clone(),
        })
        .collect();
    let images: Vec<FoolingItem> = corpus
        .images
        .iter()
        .map(|i| FoolingItem {
            id: format!("{}#mix0.9#s0", i.image_id),
            orig_id: i.image_id.clone(),
        })
        .collect();
    let i2t = assemble_pool(&corpus, &captions, Direction::I2t).map_err(|e| e.to_string())?;
    let t2i = assemble_pool(&corpus, &images, Direction::T2i).map_err(|e| e.to_string())?;
    ensure(i2t.shape() == (5000, 50_000), || format!("i2t shape {:?}", i2t.shape()))?;
    ensure(t2i.shape() == (25_000, 10_000), || format!("t2i shape {:?}", t2i.shape()))?;
    ensure(i2t.fooling_count() == 25_000 && t2i.fooling_count() == 5000, || "fooling counts".into())?;
    ensure(i2t.positives.iter().all(|p| p.len() == 5), || "i2t positives are not 5 per image".into())?;
    ensure(t2i.positives.iter().all(|p| p.len() == 1), || "t2i positives are not 1 per caption".into())?;
    Ok("i2t 5000x50000, t2i 25000x10000".into())
}

// ---------------------------------------------------------------------------
// Monotonicity.

fn monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for n in 0..500 {
        let inst = random_instance(&mut rng, 30, 60);
        let (q, g) = inst.pool.shape();
        // Base gallery: the non-fooling prefix; fooling items appended after it.
        let extra = rng.random_range(1..40);
        let levels = 16u32;
        let mut data = Vec::with_capacity(q * (g + extra));
        for r in 0..q {
            data.extend_from_slice(inst.sim.row(r));
            data.extend((0..extra).map(|_| rng.random_range(0..levels) as f32 / levels as f32));
        }
        let mut fooling = inst.fooling.clone();
        fooling.extend(std::iter::repeat_n(true, extra));
        let grown = Pool::from_parts(
            Direction::I2t,
            inst.pool.queries.clone(),
            (0..g + extra).map(|i| format!("g{i}")).collect(),
            inst.pool.positives.clone(),
            fooling,
        )
        .map_err(|e| e.to_string())?;
        let grown_sim = SimilarityMatrix::new(q, g + extra, data).map_err(|e| e.to_string())?;
        let before = recall_at_1(&inst.sim, &inst.pool);
        let after = recall_at_1(&grown_sim, &grown);
        ensure(after <= before, || format!("instance {n}: R@1 rose from {before} to {after}"))?;
    }
    Ok("500 instances, R@1 never increases".into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("drop_rate_arithmetic", drop_rate_arithmetic),
        ("metric_oracle_equivalence", metric_oracle),
        ("ei_correctness", ei_correctness),
        ("consensus", consensus),
        ("mixing", mixing),
        ("determinism", determinism),
        ("pool_shape", pool_shape),
        ("monotonicity", monotonicity),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<28} {detail} ({secs:.2}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<28} {detail} ({secs:.2}s)");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
