//! Growing self-organizing maps with cross-run stability evaluation.
//!
//! A [`Som`] is a D-dimensional rectangular lattice of nodes, each holding a
//! weight vector in feature space. Lattices grow in two ways: by inserting
//! nodes between existing ones ([`Som::grow_nodes`]) and by adding a lattice
//! axis ([`Som::grow_dimension`]). [`incremental_evaluate`] trains several
//! independently seeded maps in parallel, adds one axis at a time and stops
//! once the pairwise distances between projected probe documents agree
//! across runs.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::linalg;

/// Jitter magnitude for new-axis copies, relative to the mean weight norm.
pub const GROWTH_JITTER: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub epochs: usize,
    /// Learning rate `(initial, final)`, interpolated linearly over the phase.
    pub learning_rate: (f64, f64),
    /// Neighborhood radius in lattice units `(initial, final)`.
    pub radius: (f64, f64),
}

impl Schedule {
    fn validate(&self) -> Result<()> {
        let (l0, l1) = self.learning_rate;
        let (r0, r1) = self.radius;
        ensure(l0 >= l1 && l1 >= 0.0 && l0.is_finite(), || {
            format!("learning rate schedule must satisfy initial >= final >= 0, got ({l0}, {l1})")
        })?;
        ensure(r0 >= r1 && r1 > 0.0 && r0.is_finite(), || {
            format!("radius schedule must satisfy initial >= final > 0, got ({r0}, {r1})")
        })
    }

    fn at(&self, step: usize, total: usize) -> (f64, f64) {
        let frac = if total <= 1 {
            0.0
        } else {
            step as f64 / (total - 1) as f64
        };
        let lerp = |(a, b): (f64, f64)| a + (b - a) * frac;
        (lerp(self.learning_rate), lerp(self.radius))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub dim: usize,
    pub node_count: usize,
    pub epochs: usize,
    pub updates: usize,
    /// Mean Euclidean distance from each training vector to its BMU after the phase.
    pub quantization_error: f64,
}

/// Borrowed view of one lattice node.
#[derive(Debug, Clone, Copy)]
pub struct SomNode<'a> {
    pub lattice_coords: &'a [usize],
    pub weights: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Som {
    axis_sizes: Vec<usize>,
    feature_len: usize,
    /// Row-major over the lattice (last axis fastest), `feature_len` values per node.
    weights: Vec<f64>,
    /// Flattened lattice coordinates, `dim` values per node.
    coords: Vec<usize>,
    rng_seed: u64,
    training_log: Vec<PhaseSummary>,
}

fn lattice_coords(axis_sizes: &[usize]) -> Vec<usize> {
    let count: usize = axis_sizes.iter().product();
    let dim = axis_sizes.len();
    let mut out = Vec::with_capacity(count * dim);
    let mut cur = vec![0usize; dim];
    for _ in 0..count {
        out.extend_from_slice(&cur);
        for axis in (0..dim).rev() {
            cur[axis] += 1;
            if cur[axis] < axis_sizes[axis] {
                break;
            }
            cur[axis] = 0;
        }
    }
    out
}

fn lattice_index(axis_sizes: &[usize], coords: &[usize]) -> usize {
    coords
        .iter()
        .zip(axis_sizes)
        .fold(0, |acc, (&c, &s)| acc * s + c)
}

impl Som {
    /// Nodes start as random convex combinations of up to three sampled vectors.
    pub fn init(dim: usize, axis_sizes: &[usize], data_sample: &[Vec<f64>], seed: u64) -> Result<Som> {
        ensure(dim >= 1, || "lattice dimension must be at least 1".into())?;
        ensure(axis_sizes.len() == dim, || {
            format!("expected {dim} axis sizes, got {}", axis_sizes.len())
        })?;
        ensure(axis_sizes.iter().all(|&s| s >= 1), || "axis sizes must be positive".into())?;
        ensure(!data_sample.is_empty(), || "data sample is empty".into())?;
        let feature_len = data_sample[0].len();
        check_lengths(data_sample, feature_len)?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count: usize = axis_sizes.iter().product();
        let picks = data_sample.len().min(3);
        let mut weights = Vec::with_capacity(count * feature_len);
        for _ in 0..count {
            let chosen: Vec<&Vec<f64>> = (0..picks)
                .map(|_| &data_sample[rng.gen_range(0..data_sample.len())])
                .collect();
            let raw: Vec<f64> = (0..picks).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            let mut node = vec![0.0; feature_len];
            for (v, r) in chosen.iter().zip(&raw) {
                let c = r / total;
                for (w, x) in node.iter_mut().zip(v.iter()) {
                    *w += c * x;
                }
            }
            if picks == 1 {
                node.clone_from(chosen[0]);
            }
            weights.extend(node);
        }
        Ok(Som {
            axis_sizes: axis_sizes.to_vec(),
            feature_len,
            weights,
            coords: lattice_coords(axis_sizes),
            rng_seed: seed,
            training_log: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.axis_sizes.len()
    }

    pub fn axis_sizes(&self) -> &[usize] {
        &self.axis_sizes
    }

    pub fn feature_len(&self) -> usize {
        self.feature_len
    }

    pub fn node_count(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn training_log(&self) -> &[PhaseSummary] {
        &self.training_log
    }

    pub(crate) fn set_training_log(&mut self, log: Vec<PhaseSummary>) {
        self.training_log = log;
    }

    pub fn node(&self, index: usize) -> SomNode<'_> {
        SomNode {
            lattice_coords: self.node_coords(index),
            weights: self.node_weights(index),
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = SomNode<'_>> {
        (0..self.node_count()).map(|i| self.node(i))
    }

    pub fn node_weights(&self, index: usize) -> &[f64] {
        &self.weights[index * self.feature_len..(index + 1) * self.feature_len]
    }

    pub fn node_coords(&self, index: usize) -> &[usize] {
        let d = self.dim();
        &self.coords[index * d..(index + 1) * d]
    }

    pub fn index_of(&self, coords: &[usize]) -> Option<usize> {
        if coords.len() != self.dim() || coords.iter().zip(&self.axis_sizes).any(|(c, s)| c >= s) {
            return None;
        }
        Some(lattice_index(&self.axis_sizes, coords))
    }

    /// Flat weight storage, node-major.
    pub fn raw_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Rebuilds a map from stored parts (used when loading map files).
    pub fn from_parts(axis_sizes: Vec<usize>, feature_len: usize, weights: Vec<f64>, rng_seed: u64) -> Result<Som> {
        ensure(!axis_sizes.is_empty() && axis_sizes.iter().all(|&s| s >= 1), || {
            "axis sizes must be non-empty and positive".into()
        })?;
        let count: usize = axis_sizes.iter().product();
        if weights.len() != count * feature_len {
            return Err(Error::DimensionMismatch {
                expected: count * feature_len,
                actual: weights.len(),
            });
        }
        ensure(weights.iter().all(|w| w.is_finite()), || "weights must be finite".into())?;
        Ok(Som {
            coords: lattice_coords(&axis_sizes),
            axis_sizes,
            feature_len,
            weights,
            rng_seed,
            training_log: Vec::new(),
        })
    }

    /// Index of the node nearest `v`; ties go to the smallest lattice index.
    pub fn bmu(&self, v: &[f64]) -> Result<usize> {
        self.check_len(v.len())?;
        Ok(self.bmu_unchecked(v).0)
    }

    fn bmu_unchecked(&self, v: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, w) in self.weights.chunks_exact(self.feature_len).enumerate() {
            let d = linalg::squared_distance(w, v);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    /// BMU lattice coordinates as reals.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        let i = self.bmu(v)?;
        Ok(self.node_coords(i).iter().map(|&c| c as f64).collect())
    }

    pub fn project_all(&self, vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        vectors.iter().map(|v| self.project(v)).collect()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.feature_len {
            return Err(Error::DimensionMismatch {
                expected: self.feature_len,
                actual: len,
            });
        }
        Ok(())
    }

    /// Sequential Kohonen training.
    ///
    /// Per sample the BMU is found by linear scan and every node within the
    /// current lattice radius `r` moves toward the sample with strength
    /// `lr * exp(-d^2 / (2 (r/2)^2))`, `d` being the lattice distance to the
    /// BMU. Sample order is reshuffled every epoch from `seed`.
    pub fn train(&mut self, vectors: &[Vec<f64>], schedule: &Schedule, seed: u64) -> Result<()> {
        ensure(!vectors.is_empty(), || "no training vectors".into())?;
        check_lengths(vectors, self.feature_len)?;
        schedule.validate()?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total = schedule.epochs * vectors.len();
        let dim = self.dim();
        let flen = self.feature_len;
        let mut order: Vec<usize> = (0..vectors.len()).collect();
        let mut step = 0;
        let mut updates = 0;
        for _ in 0..schedule.epochs {
            order.shuffle(&mut rng);
            for &s in &order {
                let x = &vectors[s];
                let (lr, radius) = schedule.at(step, total);
                step += 1;
                let (b, _) = self.bmu_unchecked(x);
                if lr == 0.0 {
                    continue;
                }
                let bc = &self.coords[b * dim..(b + 1) * dim];
                let bc: Vec<usize> = bc.to_vec();
                let r2 = radius * radius;
                let sigma = radius / 2.0;
                let inv = 1.0 / (2.0 * sigma * sigma);
                for (node, (c, w)) in self
                    .coords
                    .chunks_exact(dim)
                    .zip(self.weights.chunks_exact_mut(flen))
                    .enumerate()
                {
                    let d2: f64 = c
                        .iter()
                        .zip(&bc)
                        .map(|(&a, &b)| {
                            let t = a as f64 - b as f64;
                            t * t
                        })
                        .sum();
                    if d2 > r2 && node != b {
                        continue;
                    }
                    let h = lr * (-d2 * inv).exp();
                    if h == 0.0 {
                        continue;
                    }
                    for (wi, xi) in w.iter_mut().zip(x) {
                        *wi += h * (xi - *wi);
                    }
                    updates += 1;
                }
            }
        }
        let qe = vectors
            .iter()
            .map(|v| self.bmu_unchecked(v).1.sqrt())
            .sum::<f64>()
            / vectors.len() as f64;
        self.training_log.push(PhaseSummary {
            dim,
            node_count: self.node_count(),
            epochs: schedule.epochs,
            updates,
            quantization_error: qe,
        });
        Ok(())
    }

    /// Inserts a node between every pair of lattice neighbours: each axis of
    /// size `s` becomes `2s - 1`. Originals keep their weights at doubled
    /// coordinates; a new node takes the mean of its adjacent originals.
    pub fn grow_nodes(&self) -> Som {
        let new_sizes: Vec<usize> = self.axis_sizes.iter().map(|&s| 2 * s - 1).collect();
        let new_coords = lattice_coords(&new_sizes);
        let dim = self.dim();
        let flen = self.feature_len;
        let count: usize = new_sizes.iter().product();
        let mut weights = Vec::with_capacity(count * flen);
        let mut corner = vec![0usize; dim];
        for c in new_coords.chunks_exact(dim) {
            let odd: Vec<usize> = (0..dim).filter(|&a| c[a] % 2 == 1).collect();
            let n_adj = 1usize << odd.len();
            let mut acc = vec![0.0; flen];
            for mask in 0..n_adj {
                for a in 0..dim {
                    corner[a] = c[a] / 2;
                }
                for (bit, &a) in odd.iter().enumerate() {
                    if mask >> bit & 1 == 1 {
                        corner[a] += 1;
                    }
                }
                let src = self.node_weights(lattice_index(&self.axis_sizes, &corner));
                if n_adj == 1 {
                    acc.copy_from_slice(src);
                } else {
                    for (a, s) in acc.iter_mut().zip(src) {
                        *a += s;
                    }
                }
            }
            if n_adj > 1 {
                let k = n_adj as f64;
                acc.iter_mut().for_each(|a| *a /= k);
            }
            weights.extend(acc);
        }
        Som {
            axis_sizes: new_sizes,
            feature_len: flen,
            weights,
            coords: new_coords,
            rng_seed: self.rng_seed,
            training_log: self.training_log.clone(),
        }
    }

    /// Appends a lattice axis of `new_axis_size` layers.
    ///
    /// Layer 0 is an exact copy of the current map. Layers above it receive
    /// Gaussian jitter of norm about `GROWTH_JITTER` times the mean weight
    /// norm when `jitter_seed` is set, and are exact copies otherwise.
    pub fn grow_dimension(&self, new_axis_size: usize, max_dim: usize, jitter_seed: Option<u64>) -> Result<Som> {
        if self.dim() >= max_dim {
            return Err(Error::MaxDimExceeded(max_dim));
        }
        ensure(new_axis_size >= 1, || "new axis size must be positive".into())?;
        let mut sizes = self.axis_sizes.clone();
        sizes.push(new_axis_size);
        let flen = self.feature_len;
        let old_count = self.node_count();

        let mean_norm = self
            .weights
            .chunks_exact(flen)
            .map(linalg::norm)
            .sum::<f64>()
            / old_count as f64;
        let sd = GROWTH_JITTER * mean_norm / (flen.max(1) as f64).sqrt();
        let mut rng = jitter_seed.map(ChaCha8Rng::seed_from_u64);

        let mut weights = Vec::with_capacity(old_count * new_axis_size * flen);
        for node in 0..old_count {
            let w = self.node_weights(node);
            for layer in 0..new_axis_size {
                match rng.as_mut() {
                    Some(rng) if layer > 0 => {
                        weights.extend(w.iter().map(|x| x + sd * rng.sample::<f64, _>(StandardNormal)))
                    }
                    _ => weights.extend_from_slice(w),
                }
            }
        }
        Ok(Som {
            coords: lattice_coords(&sizes),
            axis_sizes: sizes,
            feature_len: flen,
            weights,
            rng_seed: self.rng_seed,
            training_log: self.training_log.clone(),
        })
    }
}

fn check_lengths(vectors: &[Vec<f64>], len: usize) -> Result<()> {
    match vectors.iter().find(|v| v.len() != len) {
        Some(v) => Err(Error::DimensionMismatch {
            expected: len,
            actual: v.len(),
        }),
        None => Ok(()),
    }
}

/// Upper-triangle pairwise Euclidean distances, row by row.
pub fn condensed_distances(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(linalg::euclidean(&points[i], &points[j]));
        }
    }
    out
}

/// Pearson correlation of the condensed pairwise-distance vectors of two
/// projections of the same probe set.
pub fn stability_score(coords_a: &[Vec<f64>], coords_b: &[Vec<f64>]) -> Result<f64> {
    if coords_a.len() != coords_b.len() {
        return Err(Error::DimensionMismatch {
            expected: coords_a.len(),
            actual: coords_b.len(),
        });
    }
    ensure(coords_a.len() >= 3, || {
        format!("stability needs at least 3 probes, got {}", coords_a.len())
    })?;
    let da = condensed_distances(coords_a);
    let db = condensed_distances(coords_b);
    Ok(pearson_or_constant(&da, &db))
}

fn pearson_or_constant(a: &[f64], b: &[f64]) -> f64 {
    let is_const = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    match (is_const(a), is_const(b)) {
        (true, true) => {
            if (a[0] == 0.0) == (b[0] == 0.0) {
                1.0
            } else {
                0.0
            }
        }
        (true, false) | (false, true) => 0.0,
        (false, false) => {
            let n = a.len() as f64;
            let ma = a.iter().sum::<f64>() / n;
            let mb = b.iter().sum::<f64>() / n;
            let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
            for (x, y) in a.iter().zip(b) {
                let (dx, dy) = (x - ma, y - mb);
                sab += dx * dy;
                saa += dx * dx;
                sbb += dy * dy;
            }
            if saa == 0.0 || sbb == 0.0 {
                return 0.0;
            }
            (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SomConfig {
    pub initial_dim: usize,
    pub nodes_per_axis: usize,
    pub epochs_per_phase: usize,
    pub learning_rate: (f64, f64),
    pub neighborhood_radius: (f64, f64),
    pub parallel_runs: usize,
    pub stability_threshold: f64,
    pub max_dim: usize,
    pub probe_size: usize,
    pub seed: u64,
    /// Size of each added axis; `None` uses the current smallest axis.
    pub new_axis_size: Option<usize>,
    /// Every run uses `seed` unchanged. Only meaningful for testing.
    pub force_equal_seeds: bool,
    /// Disables symmetry-breaking jitter on dimension growth.
    pub disable_jitter: bool,
}

impl Default for SomConfig {
    fn default() -> Self {
        SomConfig {
            initial_dim: 2,
            nodes_per_axis: 5,
            epochs_per_phase: 40,
            learning_rate: (0.5, 0.02),
            neighborhood_radius: (4.0, 1.0),
            parallel_runs: 3,
            stability_threshold: 0.9,
            max_dim: 6,
            probe_size: 60,
            seed: 42,
            new_axis_size: None,
            force_equal_seeds: false,
            disable_jitter: false,
        }
    }
}

impl SomConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.initial_dim >= 1, || "initial_dim must be at least 1".into())?;
        ensure(self.initial_dim <= self.max_dim, || {
            format!("initial_dim {} exceeds max_dim {}", self.initial_dim, self.max_dim)
        })?;
        ensure(self.nodes_per_axis >= 2, || "nodes_per_axis must be at least 2".into())?;
        ensure(self.parallel_runs >= 2, || "parallel_runs must be at least 2".into())?;
        ensure(
            self.stability_threshold > 0.0 && self.stability_threshold <= 1.0,
            || format!("stability_threshold must lie in (0, 1], got {}", self.stability_threshold),
        )?;
        ensure(self.probe_size >= 3, || "probe_size must be at least 3".into())?;
        self.schedule().validate()
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            epochs: self.epochs_per_phase,
            learning_rate: self.learning_rate,
            radius: self.neighborhood_radius,
        }
    }

    /// Seed of run `run`; all runs share `seed` when `force_equal_seeds` is set.
    pub fn run_seed(&self, run: usize) -> u64 {
        if self.force_equal_seeds {
            self.seed
        } else {
            mix_seed(self.seed, run as u64 + 1)
        }
    }
}

/// SplitMix64-style derivation of independent child seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed
        .wrapping_add(salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub dim: usize,
    /// `(run_a, run_b, score)` for every unordered run pair.
    pub pairwise_scores: Vec<(usize, usize, f64)>,
    pub mean_score: f64,
    pub stabilized: bool,
}

impl StabilityReport {
    fn from_projections(dim: usize, projections: &[Vec<Vec<f64>>], threshold: f64) -> Result<Self> {
        let mut pairwise_scores = Vec::new();
        for a in 0..projections.len() {
            for b in a + 1..projections.len() {
                pairwise_scores.push((a, b, stability_score(&projections[a], &projections[b])?));
            }
        }
        let mean_score =
            pairwise_scores.iter().map(|p| p.2).sum::<f64>() / pairwise_scores.len() as f64;
        Ok(StabilityReport {
            dim,
            pairwise_scores,
            mean_score,
            stabilized: mean_score >= threshold,
        })
    }

    /// Mean score of `run` against every other run.
    pub fn run_mean(&self, run: usize) -> f64 {
        let scores: Vec<f64> = self
            .pairwise_scores
            .iter()
            .filter(|p| p.0 == run || p.1 == run)
            .map(|p| p.2)
            .collect();
        if scores.is_empty() {
            0.0
        } else {
            scores.iter().sum::<f64>() / scores.len() as f64
        }
    }
}

/// One JSON-lines training log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseLog {
    pub dim: usize,
    pub pairwise_scores: Vec<(usize, usize, f64)>,
    pub mean_score: f64,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub final_dim: usize,
    pub soms: Vec<Som>,
    pub reports: Vec<StabilityReport>,
    pub probe_indices: Vec<usize>,
    pub phase_logs: Vec<PhaseLog>,
}

impl Evaluation {
    pub fn stabilized(&self) -> bool {
        self.reports.last().is_some_and(|r| r.stabilized)
    }
}

/// Seeded sample of `probe_size` distinct indices, sorted ascending.
pub fn select_probes(n: usize, probe_size: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x9_0b_e5));
    let mut idx = rand::seq::index::sample(&mut rng, n, probe_size.min(n)).into_vec();
    idx.sort_unstable();
    idx
}

/// Trains `parallel_runs` maps, adding one lattice axis per phase until the
/// mean cross-run stability reaches the threshold or `max_dim` is hit.
pub fn incremental_evaluate(vectors: &[Vec<f64>], config: &SomConfig) -> Result<Evaluation> {
    config.validate()?;
    ensure(vectors.len() >= config.probe_size, || {
        format!("need at least probe_size={} vectors, got {}", config.probe_size, vectors.len())
    })?;
    let probe_indices = select_probes(vectors.len(), config.probe_size, config.seed);
    let probes: Vec<Vec<f64>> = probe_indices.iter().map(|&i| vectors[i].clone()).collect();
    let schedule = config.schedule();

    let sizes = vec![config.nodes_per_axis; config.initial_dim];
    let mut soms: Vec<Som> = (0..config.parallel_runs)
        .into_par_iter()
        .map(|r| {
            let seed = config.run_seed(r);
            let mut som = Som::init(config.initial_dim, &sizes, vectors, seed)?;
            som.train(vectors, &schedule, mix_seed(seed, 1))?;
            Ok(som)
        })
        .collect::<Result<_>>()?;

    let mut reports = Vec::new();
    let mut phase_logs = Vec::new();
    let mut started = Instant::now();
    loop {
        let dim = soms[0].dim();
        let projections: Vec<Vec<Vec<f64>>> = soms
            .iter()
            .map(|s| s.project_all(&probes))
            .collect::<Result<_>>()?;
        let report = StabilityReport::from_projections(dim, &projections, config.stability_threshold)?;
        phase_logs.push(PhaseLog {
            dim,
            pairwise_scores: report.pairwise_scores.clone(),
            mean_score: report.mean_score,
            wall_time_ms: started.elapsed().as_millis() as u64,
        });
        let done = report.stabilized || dim >= config.max_dim;
        reports.push(report);
        if done {
            break;
        }

        started = Instant::now();
        soms = soms
            .into_par_iter()
            .enumerate()
            .map(|(r, som)| {
                let seed = config.run_seed(r);
                let axis = config
                    .new_axis_size
                    .unwrap_or_else(|| *som.axis_sizes().iter().min().expect("non-empty lattice"));
                let jitter = (!config.disable_jitter).then(|| mix_seed(seed, 1000 + dim as u64));
                let mut grown = som.grow_dimension(axis, config.max_dim, jitter)?;
                grown.train(vectors, &schedule, mix_seed(seed, 1 + dim as u64))?;
                Ok(grown)
            })
            .collect::<Result<_>>()?;
    }

    Ok(Evaluation {
        final_dim: soms[0].dim(),
        soms,
        reports,
        probe_indices,
        phase_logs,
    })
}
