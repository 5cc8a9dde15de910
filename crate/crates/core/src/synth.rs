//! Seeded synthetic data: topic corpora and planted linear manifolds.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{ensure, Result};

/// Topics are spread over a unit latent cube by max-min placement and terms
/// sit at random points of it. Each document jitters its topic's latent
/// position by `doc_spread` and draws terms with probability decaying as a
/// Gaussian of latent distance, so nearby topics share vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopicCorpusConfig {
    pub topics: usize,
    pub documents: usize,
    pub latent_dim: usize,
    pub vocabulary_size: usize,
    pub doc_len: (usize, usize),
    pub kernel_width: f64,
    /// Standard deviation of each document's latent offset from its topic.
    pub doc_spread: f64,
    pub seed: u64,
}

impl Default for TopicCorpusConfig {
    fn default() -> Self {
        TopicCorpusConfig {
            topics: 20,
            documents: 500,
            latent_dim: 3,
            vocabulary_size: 300,
            doc_len: (150, 300),
            kernel_width: 0.25,
            doc_spread: 0.1,
            seed: 1,
        }
    }
}

pub fn term_name(i: usize) -> String {
    const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
    const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
    let mut out = String::new();
    let mut x = i;
    loop {
        out.push_str(ONSETS[x % ONSETS.len()]);
        x /= ONSETS.len();
        out.push_str(VOWELS[x % VOWELS.len()]);
        x /= VOWELS.len();
        if x == 0 {
            break;
        }
        x -= 1;
    }
    out
}

pub fn topic_corpus(cfg: &TopicCorpusConfig) -> Result<Vec<Document>> {
    ensure(cfg.topics >= 1 && cfg.documents >= 1, || "need topics and documents".into())?;
    ensure(cfg.latent_dim >= 1 && cfg.vocabulary_size >= 1, || {
        "latent_dim and vocabulary_size must be positive".into()
    })?;
    ensure(cfg.doc_len.0 >= 1 && cfg.doc_len.0 <= cfg.doc_len.1, || {
        "doc_len must be a non-empty range".into()
    })?;
    ensure(cfg.kernel_width > 0.0, || "kernel_width must be positive".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..cfg.latent_dim).map(|_| rng.gen::<f64>()).collect()
    };
    let candidates: Vec<Vec<f64>> = (0..cfg.topics * 50).map(|_| point(&mut rng)).collect();
    let topics = farthest_points(&candidates, cfg.topics);
    let anchors: Vec<Vec<f64>> = (0..cfg.vocabulary_size).map(|_| point(&mut rng)).collect();
    let names: Vec<String> = (0..cfg.vocabulary_size).map(term_name).collect();

    let inv = 1.0 / (2.0 * cfg.kernel_width * cfg.kernel_width);
    let sampler = |z: &[f64]| {
        let w: Vec<f64> = anchors
            .iter()
            .map(|a| {
                let d2: f64 = z.iter().zip(a).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 * inv).exp() + 1e-12
            })
            .collect();
        WeightedIndex::new(w).expect("positive weights")
    };

    let width = (cfg.documents - 1).to_string().len();
    let docs = (0..cfg.documents)
        .map(|i| {
            let t = i % cfg.topics;
            let z: Vec<f64> = topics[t]
                .iter()
                .map(|&c| c + cfg.doc_spread * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let dist = sampler(&z);
            let len = rng.gen_range(cfg.doc_len.0..=cfg.doc_len.1);
            let words: Vec<&str> = (0..len)
                .map(|_| names[dist.sample(&mut rng)].as_str())
                .collect();
            Document::new(format!("doc{i:0width$}"), words.join(" ")).with_topic(format!("topic{t:02}"))
        })
        .collect();
    Ok(docs)
}

/// Greedy max-min selection starting from the first candidate.
fn farthest_points(candidates: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut chosen = vec![candidates[0].clone()];
    let mut nearest: Vec<f64> = candidates.iter().map(|c| d2(c, &candidates[0])).collect();
    while chosen.len() < k.min(candidates.len()) {
        let (i, _) = nearest
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
        chosen.push(candidates[i].clone());
        for (n, c) in nearest.iter_mut().zip(candidates) {
            *n = n.min(d2(c, &candidates[i]));
        }
    }
    chosen
}

/// `n` points on a random `d`-dimensional linear subspace of `ambient`
/// dimensions, plus isotropic noise of standard deviation `noise` times the
/// typical signal coordinate scale.
pub fn planted_linear(n: usize, d: usize, ambient: usize, noise: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..ambient).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    (0..n)
        .map(|_| {
            let c: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            (0..ambient)
                .map(|j| {
                    let s: f64 = (0..d).map(|i| c[i] * basis[i][j]).sum();
                    s + noise * rng.sample::<f64, _>(StandardNormal)
                })
                .collect()
        })
        .collect()
}
