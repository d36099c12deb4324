//! Retrieval pools, ranking kernels, metrics and result tables.

mod metrics;
mod pool;
mod rank;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::caption_forge::CaptionManifestEntry;
use crate::corpus::Corpus;
use crate::embedding::{Embedder, EmbeddingMatrix, ProviderId};
use crate::image_forge::ImageManifestEntry;
use crate::Result;

pub use metrics::{
    drop_rate, false_recall_at_1, false_recall_from_top1, recall_at_1, recall_at_k, recall_from_top1, round2,
};
pub use pool::{assemble_pool, assemble_pool_with, caption_fooling, image_fooling, Direction, FoolingItem, Pool, PositiveRule};
pub use rank::{argmax_first, dot, similarity, top1, top1_streaming, top_k, SimilarityMatrix};
pub use report::{EvalReport, ReportRow};

pub const BASE_I2T: &str = "coco5k_i2t";
pub const BASE_T2I: &str = "coco5k_t2i";

/// A generated caption set to evaluate (image-to-text).
#[derive(Debug, Clone)]
pub struct CaptionVariant {
    pub name: String,
    pub seed: u64,
    pub entries: Vec<CaptionManifestEntry>,
}

/// A generated image set to evaluate (text-to-image). Entry output paths
/// are relative to `root`.
#[derive(Debug, Clone)]
pub struct ImageVariant {
    pub name: String,
    pub seed: u64,
    pub entries: Vec<ImageManifestEntry>,
    pub root: PathBuf,
}

/// R@1 and FR@1 of one pool from the query and gallery embeddings.
pub fn score_pool(pool: &Pool, queries: &EmbeddingMatrix, gallery: &EmbeddingMatrix) -> Result<(f64, f64)> {
    let top = top1_streaming(queries, gallery)?;
    Ok((recall_from_top1(&top, pool), false_recall_from_top1(&top, pool)))
}

fn variant_rows(model: &str, direction: Direction, base: f64, name: &str, per_seed: &[(u64, f64, f64)]) -> Vec<ReportRow> {
    let drop = |r: f64| drop_rate(base, r).ok();
    let mut rows: Vec<ReportRow> = per_seed
        .iter()
        .map(|&(seed, r, fr)| ReportRow {
            model: model.to_string(),
            variant: name.to_string(),
            direction,
            seed: seed.to_string(),
            r_at_1: r,
            drop_rate: drop(r),
            fr_at_1: Some(fr),
        })
        .collect();
    if per_seed.len() >= 2 {
        let n = per_seed.len() as f64;
        let r = per_seed.iter().map(|s| s.1).sum::<f64>() / n;
        let fr = per_seed.iter().map(|s| s.2).sum::<f64>() / n;
        rows.push(ReportRow {
            model: model.to_string(),
            variant: name.to_string(),
            direction,
            seed: "mean".into(),
            r_at_1: r,
            drop_rate: drop(r),
            fr_at_1: Some(fr),
        });
    }
    rows
}

/// Groups variants by name in first-appearance order.
fn by_name<T>(items: &[T], name: impl Fn(&T) -> &str) -> Vec<(String, Vec<&T>)> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&T>> = BTreeMap::new();
    for item in items {
        let n = name(item).to_string();
        if !groups.contains_key(&n) {
            order.push(n.clone());
        }
        groups.entry(n).or_default().push(item);
    }
    order
        .into_iter()
        .map(|n| {
            let g = groups.remove(&n).unwrap();
            (n, g)
        })
        .collect()
}

/// Evaluates every model on the clean pools and on each generated variant.
///
/// Per-seed R@1 and FR@1 are rounded to two decimals; drop rates are
/// computed from the rounded values. Variants with several seeds also get a
/// `mean` row averaging the per-seed rows. Image queries count any of
/// their captions as correct; see [`evaluate_with`] to change that.
pub fn evaluate(
    embedder: &Embedder,
    models: &[ProviderId],
    corpus: &Corpus,
    image_root: &Path,
    captions: &[CaptionVariant],
    images: &[ImageVariant],
) -> Result<EvalReport> {
    evaluate_with(embedder, models, corpus, image_root, captions, images, PositiveRule::Any)
}

pub fn evaluate_with(
    embedder: &Embedder,
    models: &[ProviderId],
    corpus: &Corpus,
    image_root: &Path,
    captions: &[CaptionVariant],
    images: &[ImageVariant],
    rule: PositiveRule,
) -> Result<EvalReport> {
    let texts: Vec<String> = corpus.captions_in_order().map(|c| c.text.clone()).collect();
    let image_paths: Vec<PathBuf> = corpus
        .images
        .iter()
        .map(|i| image_root.join(&i.file_path))
        .collect();
    let base_i2t = assemble_pool_with(corpus, &[], Direction::I2t, rule)?;
    let base_t2i = assemble_pool(corpus, &[], Direction::T2i)?;

    let mut report = EvalReport::default();
    for model in models {
        log::info!("evaluating {model}");
        let cap_emb = embedder.embed_texts(model, &texts)?;
        let img_emb = embedder.embed_images(model, &image_paths)?;

        let (r_i2t, _) = score_pool(&base_i2t, &img_emb, &cap_emb)?;
        let (r_t2i, _) = score_pool(&base_t2i, &cap_emb, &img_emb)?;
        let (r_i2t, r_t2i) = (round2(r_i2t), round2(r_t2i));
        for (variant, direction, r) in [(BASE_I2T, Direction::I2t, r_i2t), (BASE_T2I, Direction::T2i, r_t2i)] {
            if r == 0.0 {
                log::warn!("{model}: base {direction} R@1 is zero; drop rates are undefined");
            }
            report.rows.push(ReportRow {
                model: model.name.clone(),
                variant: variant.into(),
                direction,
                seed: "-".into(),
                r_at_1: r,
                drop_rate: None,
                fr_at_1: None,
            });
        }

        for (name, variants) in by_name(captions, |v| &v.name) {
            let mut per_seed = Vec::new();
            for v in variants {
                let pool = assemble_pool_with(corpus, &caption_fooling(&v.entries), Direction::I2t, rule)?;
                let gen_texts: Vec<String> = v.entries.iter().map(|e| e.text.clone()).collect();
                let gallery = cap_emb.concat(&embedder.embed_texts(model, &gen_texts)?)?;
                let (r, fr) = score_pool(&pool, &img_emb, &gallery)?;
                per_seed.push((v.seed, round2(r), round2(fr)));
            }
            report.rows.extend(variant_rows(&model.name, Direction::I2t, r_i2t, &name, &per_seed));
        }

        for (name, variants) in by_name(images, |v| &v.name) {
            let mut per_seed = Vec::new();
            for v in variants {
                let pool = assemble_pool(corpus, &image_fooling(&v.entries), Direction::T2i)?;
                let paths: Vec<PathBuf> = v.entries.iter().map(|e| v.root.join(&e.output_path)).collect();
                let gallery = img_emb.concat(&embedder.embed_images(model, &paths)?)?;
                let (r, fr) = score_pool(&pool, &cap_emb, &gallery)?;
                per_seed.push((v.seed, round2(r), round2(fr)));
            }
            report.rows.extend(variant_rows(&model.name, Direction::T2i, r_t2i, &name, &per_seed));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CaptionRecord, ImageRecord, NounLexicon};
    use crate::seed::derive_rng;
    use rand::Rng;

    fn tiny_corpus(n: usize) -> Corpus {
        let lex = NounLexicon::shipped();
        let mut images = Vec::new();
        let mut caps = Vec::new();
        for i in 0..n {
            let ids: Vec<String> = (0..5).map(|k| format!("{i}-{k}")).collect();
            for id in &ids {
                caps.push(CaptionRecord::from_text(id.clone(), i.to_string(), "a dog on a sofa", &lex));
            }
            images.push(ImageRecord {
                image_id: i.to_string(),
                file_path: format!("{i}.png"),
                caption_ids: ids,
            });
        }
        Corpus::new("test", images, caps).unwrap()
    }

    fn fooling(n: usize, per: usize, direction: Direction, corpus: &Corpus) -> Vec<FoolingItem> {
        let origs: Vec<String> = match direction {
            Direction::I2t => corpus.captions_in_order().map(|c| c.caption_id.clone()).collect(),
            Direction::T2i => corpus.images.iter().map(|i| i.image_id.clone()).collect(),
        };
        origs
            .iter()
            .take(n)
            .flat_map(|o| (0..per).map(move |k| FoolingItem { id: format!("{o}#g{k}"), orig_id: o.clone() }))
            .collect()
    }

    #[test]
    fn pool_arithmetic() {
        let c = tiny_corpus(3);
        let f = fooling(15, 1, Direction::I2t, &c);
        let p = assemble_pool(&c, &f, Direction::I2t).unwrap();
        assert_eq!(p.shape(), (3, 30));
        assert_eq!(p.fooling_count(), 15);
        assert_eq!(p.positives[1], vec![5, 6, 7, 8, 9]);
        let t = assemble_pool(&c, &fooling(3, 1, Direction::T2i, &c), Direction::T2i).unwrap();
        assert_eq!(t.shape(), (15, 6));
        assert_eq!(t.positives[7], vec![1]);
        assert!(!t.positives.iter().flatten().any(|&g| t.fooling[g as usize]));
    }

    #[test]
    fn dangling_and_duplicate_ids_are_manifest_errors() {
        let c = tiny_corpus(2);
        let bad = vec![FoolingItem { id: "x".into(), orig_id: "nope".into() }];
        assert!(matches!(assemble_pool(&c, &bad, Direction::I2t), Err(crate::Error::Manifest(m)) if m.contains("nope")));
        let dup = vec![FoolingItem { id: "0".into(), orig_id: "1".into() }];
        assert!(matches!(assemble_pool(&c, &dup, Direction::T2i), Err(crate::Error::Manifest(_))));
    }

    fn random_matrix(rows: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = derive_rng(seed, &["m"]);
        let data: Vec<Vec<f32>> = (0..rows)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect())
            .collect();
        EmbeddingMatrix::from_rows(ProviderId::new("t", dim), &data).unwrap()
    }

    #[test]
    fn similarity_matches_naive_loop() {
        let q = random_matrix(20, 8, 1);
        let g = random_matrix(50, 8, 2);
        let s = similarity(&q, &g).unwrap();
        for i in 0..20 {
            for j in 0..50 {
                let naive: f64 = q.row(i).iter().zip(g.row(j)).map(|(a, b)| *a as f64 * *b as f64).sum();
                assert!((s.get(i, j) as f64 - naive).abs() < 1e-5);
            }
        }
        assert!(similarity(&q, &random_matrix(3, 4, 3)).is_err());
    }

    #[test]
    fn streaming_top1_agrees_with_dense() {
        let q = random_matrix(37, 20, 4);
        let g = random_matrix(1100, 20, 5);
        assert_eq!(top1_streaming(&q, &g).unwrap(), top1(&similarity(&q, &g).unwrap()));
    }

    #[test]
    fn identical_and_orthogonal() {
        let p = ProviderId::new("t", 2);
        let a = EmbeddingMatrix::from_rows(p.clone(), &[vec![1.0, 0.0]]).unwrap();
        let b = EmbeddingMatrix::from_rows(p, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let s = similarity(&a, &b).unwrap();
        assert_eq!(s.data, vec![1.0, 0.0]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(argmax_first(&[0.5, 0.9, 0.9, 0.1]), Some(1));
        assert_eq!(top_k(&[0.5, 0.9, 0.9, 0.1], 3), vec![1, 2, 0]);
    }

    #[test]
    fn metric_extremes() {
        let c = tiny_corpus(2);
        let f = fooling(10, 1, Direction::I2t, &c);
        let pool = assemble_pool(&c, &f, Direction::I2t).unwrap();
        // Each image's own first caption scores highest.
        let mut data = vec![0.0f32; 2 * 20];
        data[0] = 1.0;
        data[20 + 5] = 1.0;
        let sim = SimilarityMatrix::new(2, 20, data).unwrap();
        assert_eq!(recall_at_1(&sim, &pool), 100.0);
        assert_eq!(false_recall_at_1(&sim, &pool), 0.0);
        // Fooling items dominate.
        let mut data = vec![0.0f32; 2 * 20];
        data[10] = 1.0;
        data[20 + 15] = 1.0;
        let sim = SimilarityMatrix::new(2, 20, data).unwrap();
        assert_eq!(recall_at_1(&sim, &pool), 0.0);
        assert_eq!(false_recall_at_1(&sim, &pool), 100.0);
        assert_eq!(recall_at_k(&sim, &pool, 3), 50.0);
        assert_eq!(recall_at_k(&sim, &pool, 20), 100.0);
    }

    #[test]
    fn drop_rate_examples() {
        assert_eq!(drop_rate(81.90, 64.50).unwrap(), 21.25);
        assert_eq!(drop_rate(66.06, 37.54).unwrap(), 43.17);
        assert_eq!(drop_rate(64.31, 40.71).unwrap(), 36.70);
        assert!(matches!(drop_rate(0.0, 1.0), Err(crate::Error::UndefinedDropRate)));
    }

    #[test]
    fn mean_rows_average_seeds() {
        let rows = variant_rows("m", Direction::T2i, 50.0, "mix_0.9", &[(0, 40.0, 10.0), (1, 41.0, 9.0), (2, 45.5, 8.0)]);
        assert_eq!(rows.len(), 4);
        let mean = &rows[3];
        assert!(mean.is_mean());
        assert!((mean.r_at_1 - (40.0 + 41.0 + 45.5) / 3.0).abs() < 1e-9);
        assert_eq!(mean.drop_rate, Some(round2(100.0 * (50.0 - mean.r_at_1) / 50.0)));
        assert_eq!(variant_rows("m", Direction::I2t, 0.0, "x", &[(0, 0.0, 0.0)])[0].drop_rate, None);
    }

    #[test]
    fn renderings() {
        let report = EvalReport {
            rows: vec![
                ReportRow {
                    model: "clip".into(),
                    variant: BASE_I2T.into(),
                    direction: Direction::I2t,
                    seed: "-".into(),
                    r_at_1: 50.1,
                    drop_rate: None,
                    fr_at_1: None,
                },
                ReportRow {
                    model: "clip".into(),
                    variant: "rand_voca".into(),
                    direction: Direction::I2t,
                    seed: "0".into(),
                    r_at_1: 36.44,
                    drop_rate: Some(27.27),
                    fr_at_1: Some(12.5),
                },
            ],
        };
        assert_eq!(
            report.to_csv(),
            "model,variant,seed,r_at_1,drop_rate,fr_at_1\nclip,coco5k_i2t,-,50.10,-,-\nclip,rand_voca,0,36.44,27.27,12.50\n"
        );
        assert!(report.to_markdown().contains("| clip | rand_voca | 0 | 36.44 | 27.27 | 12.50 |"));
        let text = report.to_text();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(report.base_r1("clip", Direction::I2t), Some(50.1));
    }
}
