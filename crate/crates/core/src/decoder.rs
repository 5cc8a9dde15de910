//! Simulated brain-to-map decoder.
//!
//! Synthetic subjects respond to a map position `c` with a voxel pattern
//! `alpha * (S c + s0) + (1 - alpha) * (U c + u0) + noise`, where `S, s0`
//! are shared by a cohort and `U, u0` are individual. Patterns are smoothed
//! and z-scored, then a one-hidden-layer network regresses map coordinates.
//!
//! The resting baselines `s0, u0` matter: z-scoring divides out the pattern
//! scale, so without them `c` and `2c` would be indistinguishable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::gkm::{KnowledgeMap, NeighborQuery};
use crate::som::mix_seed;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Self {
        Matrix {
            rows,
            cols,
            data: (0..rows * cols)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// The cohort-wide part of the response model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedResponse {
    pub weight: Matrix,
    pub baseline: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResponseModel {
    pub voxels: usize,
    pub dim: usize,
    /// Standard deviation of response weight entries.
    pub weight_scale: f64,
    /// Standard deviation of resting baseline entries; 0 disables baselines.
    pub baseline_scale: f64,
    /// Pass the mixed response through `tanh` before adding noise.
    pub nonlinear: bool,
}

impl Default for ResponseModel {
    fn default() -> Self {
        ResponseModel {
            voxels: 100,
            dim: 3,
            weight_scale: 1.0,
            baseline_scale: 4.0,
            nonlinear: false,
        }
    }
}

impl SharedResponse {
    pub fn generate(model: &ResponseModel, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SharedResponse {
            weight: Matrix::gaussian(model.voxels, model.dim, model.weight_scale, &mut rng),
            baseline: (0..model.voxels)
                .map(|_| model.baseline_scale * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSubject {
    pub id: String,
    pub shared_weight: Matrix,
    pub shared_baseline: Vec<f64>,
    pub subject_weight: Matrix,
    pub subject_baseline: Vec<f64>,
    pub mixing: f64,
    pub noise_sigma: f64,
    pub nonlinear: bool,
    pub seed: u64,
}

impl SyntheticSubject {
    /// Draws the individual response from `seed` on top of `shared`.
    pub fn generate(
        id: impl Into<String>,
        shared: &SharedResponse,
        model: &ResponseModel,
        mixing: f64,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        let individual = SharedResponse::generate(model, mix_seed(seed, 0x5eed));
        Self::from_parts(
            id,
            shared.clone(),
            individual,
            mixing,
            noise_sigma,
            model.nonlinear,
            seed,
        )
    }

    pub fn from_parts(
        id: impl Into<String>,
        shared: SharedResponse,
        individual: SharedResponse,
        mixing: f64,
        noise_sigma: f64,
        nonlinear: bool,
        seed: u64,
    ) -> Result<Self> {
        ensure((0.0..=1.0).contains(&mixing), || format!("mixing must lie in [0, 1], got {mixing}"))?;
        ensure(noise_sigma >= 0.0 && noise_sigma.is_finite(), || {
            format!("noise_sigma must be >= 0, got {noise_sigma}")
        })?;
        let (sw, uw) = (&shared.weight, &individual.weight);
        if sw.rows != uw.rows || sw.cols != uw.cols {
            return Err(Error::DimensionMismatch {
                expected: sw.rows * sw.cols,
                actual: uw.rows * uw.cols,
            });
        }
        ensure(shared.baseline.len() == sw.rows && individual.baseline.len() == sw.rows, || {
            "baseline length must equal voxel count".into()
        })?;
        let finite = |m: &Matrix| m.data.iter().all(|x| x.is_finite());
        ensure(finite(sw) && finite(uw), || "response matrices must be finite".into())?;
        Ok(SyntheticSubject {
            id: id.into(),
            shared_weight: shared.weight,
            shared_baseline: shared.baseline,
            subject_weight: individual.weight,
            subject_baseline: individual.baseline,
            mixing,
            noise_sigma,
            nonlinear,
            seed,
        })
    }

    pub fn voxels(&self) -> usize {
        self.shared_weight.rows
    }

    pub fn dim(&self) -> usize {
        self.shared_weight.cols
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationPattern {
    pub voxels: Vec<f64>,
    pub subject_id: String,
    pub target_coords: Vec<f64>,
}

pub fn synth_pattern(subject: &SyntheticSubject, coords: &[f64], draw_seed: u64) -> Result<ActivationPattern> {
    if coords.len() != subject.dim() {
        return Err(Error::DimensionMismatch {
            expected: subject.dim(),
            actual: coords.len(),
        });
    }
    let a = subject.mixing;
    let shared = subject.shared_weight.mul_vec(coords);
    let own = subject.subject_weight.mul_vec(coords);
    let mut rng = ChaCha8Rng::seed_from_u64(draw_seed);
    let voxels = (0..subject.voxels())
        .map(|i| {
            let mut r = a * (shared[i] + subject.shared_baseline[i])
                + (1.0 - a) * (own[i] + subject.subject_baseline[i]);
            if subject.nonlinear {
                r = r.tanh();
            }
            if subject.noise_sigma > 0.0 {
                r += subject.noise_sigma * rng.sample::<f64, _>(StandardNormal);
            }
            r
        })
        .collect();
    Ok(ActivationPattern {
        voxels,
        subject_id: subject.id.clone(),
        target_coords: coords.to_vec(),
    })
}

/// Edge-clamped moving average over `window` voxels, then z-scoring with
/// the population standard deviation. Constant input maps to zeros.
pub fn preprocess(voxels: &[f64], window: usize) -> Result<Vec<f64>> {
    ensure(window >= 1 && window % 2 == 1, || {
        format!("window must be a positive odd number, got {window}")
    })?;
    let n = voxels.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let half = (window / 2) as isize;
    let smoothed: Vec<f64> = (0..n as isize)
        .map(|i| {
            (-half..=half)
                .map(|o| voxels[(i + o).clamp(0, n as isize - 1) as usize])
                .sum::<f64>()
                / window as f64
        })
        .collect();
    let mean = smoothed.iter().sum::<f64>() / n as f64;
    let var = smoothed.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    let scale = smoothed.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if var.sqrt() <= 1e-12 * scale || var == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let sd = var.sqrt();
    Ok(smoothed.iter().map(|x| (x - mean) / sd).collect())
}

/// `inputs -> tanh(hidden) -> outputs`, with outputs mapped back through a
/// fixed affine target normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoder {
    inputs: usize,
    hidden: usize,
    outputs: usize,
    /// `[w1 (hidden x inputs), b1 (hidden), w2 (outputs x hidden), b2 (outputs)]`
    params: Vec<f64>,
    target_center: Vec<f64>,
    target_scale: Vec<f64>,
    pub epochs_trained: usize,
    pub error_log: Vec<f64>,
}

struct Forward {
    hidden: Vec<f64>,
    out: Vec<f64>,
}

impl Decoder {
    /// Xavier-uniform weights and zero biases.
    pub fn new(inputs: usize, hidden: usize, outputs: usize, seed: u64) -> Self {
        let mut d = Decoder::zeros(inputs, hidden, outputs);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l1 = (6.0 / (inputs + hidden) as f64).sqrt();
        let l2 = (6.0 / (hidden + outputs) as f64).sqrt();
        let (w1, rest) = d.params.split_at_mut(hidden * inputs);
        w1.iter_mut().for_each(|w| *w = rng.gen_range(-l1..l1));
        let w2 = &mut rest[hidden..hidden + outputs * hidden];
        w2.iter_mut().for_each(|w| *w = rng.gen_range(-l2..l2));
        d
    }

    pub fn zeros(inputs: usize, hidden: usize, outputs: usize) -> Self {
        Decoder {
            inputs,
            hidden,
            outputs,
            params: vec![0.0; hidden * inputs + hidden + outputs * hidden + outputs],
            target_center: vec![0.0; outputs],
            target_scale: vec![1.0; outputs],
            epochs_trained: 0,
            error_log: Vec::new(),
        }
    }

    /// Network outputs are scaled so that `[lo, hi]` maps to `[-1, 1]`.
    pub fn with_target_range(mut self, lo: &[f64], hi: &[f64]) -> Result<Self> {
        ensure(lo.len() == self.outputs && hi.len() == self.outputs, || {
            "target range width must equal decoder output width".into()
        })?;
        self.target_center = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
        self.target_scale = lo
            .iter()
            .zip(hi)
            .map(|(a, b)| if b > a { 0.5 * (b - a) } else { 1.0 })
            .collect();
        Ok(self)
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let (w1, r) = self.params.split_at(self.hidden * self.inputs);
        let (b1, r) = r.split_at(self.hidden);
        let (w2, b2) = r.split_at(self.outputs * self.hidden);
        (w1, b1, w2, b2)
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let (w1, b1, w2, b2) = self.split();
        let hidden: Vec<f64> = w1
            .chunks_exact(self.inputs)
            .zip(b1)
            .map(|(row, b)| (row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b).tanh())
            .collect();
        let out = w2
            .chunks_exact(self.hidden)
            .zip(b2)
            .map(|(row, b)| row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + b)
            .collect();
        Forward { hidden, out }
    }

    fn check_width(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.inputs {
            return Err(Error::DimensionMismatch {
                expected: self.inputs,
                actual: features.len(),
            });
        }
        Ok(())
    }

    fn normalize_target(&self, t: &[f64]) -> Vec<f64> {
        t.iter()
            .zip(self.target_center.iter().zip(&self.target_scale))
            .map(|(v, (c, s))| (v - c) / s)
            .collect()
    }

    pub fn decode(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check_width(features)?;
        let f = self.forward(features);
        Ok(f.out
            .iter()
            .zip(self.target_center.iter().zip(&self.target_scale))
            .map(|(o, (c, s))| c + s * o)
            .collect())
    }

    fn check_samples(&self, samples: &[Sample]) -> Result<()> {
        ensure(!samples.is_empty(), || "no training samples".into())?;
        for s in samples {
            self.check_width(&s.features)?;
            if s.target.len() != self.outputs {
                return Err(Error::DimensionMismatch {
                    expected: self.outputs,
                    actual: s.target.len(),
                });
            }
        }
        Ok(())
    }

    /// Mean over samples and outputs of the squared error in normalized
    /// target space.
    pub fn loss(&self, samples: &[Sample]) -> Result<f64> {
        self.check_samples(samples)?;
        Ok(self.loss_unchecked(samples.iter()))
    }

    fn loss_unchecked<'a>(&self, samples: impl ExactSizeIterator<Item = &'a Sample>) -> f64 {
        let n = samples.len();
        let total: f64 = samples
            .map(|s| {
                let f = self.forward(&s.features);
                let t = self.normalize_target(&s.target);
                f.out.iter().zip(&t).map(|(o, t)| (o - t) * (o - t)).sum::<f64>()
            })
            .sum();
        total / (n * self.outputs) as f64
    }

    /// Analytic gradient of [`Decoder::loss`] with respect to `params`.
    pub fn gradient(&self, samples: &[Sample]) -> Result<Vec<f64>> {
        self.check_samples(samples)?;
        let refs: Vec<&Sample> = samples.iter().collect();
        Ok(self.gradient_unchecked(&refs))
    }

    fn gradient_unchecked(&self, batch: &[&Sample]) -> Vec<f64> {
        let (_, _, w2, _) = self.split();
        let (ni, nh, no) = (self.inputs, self.hidden, self.outputs);
        let mut g = vec![0.0; self.params.len()];
        let (gw1, r) = g.split_at_mut(nh * ni);
        let (gb1, r) = r.split_at_mut(nh);
        let (gw2, gb2) = r.split_at_mut(no * nh);
        let norm = 2.0 / (batch.len() * no) as f64;
        for s in batch {
            let f = self.forward(&s.features);
            let t = self.normalize_target(&s.target);
            let d_out: Vec<f64> = f.out.iter().zip(&t).map(|(o, t)| norm * (o - t)).collect();
            for o in 0..no {
                gb2[o] += d_out[o];
                for h in 0..nh {
                    gw2[o * nh + h] += d_out[o] * f.hidden[h];
                }
            }
            for h in 0..nh {
                let back: f64 = (0..no).map(|o| d_out[o] * w2[o * nh + h]).sum();
                let dz = back * (1.0 - f.hidden[h] * f.hidden[h]);
                if dz == 0.0 {
                    continue;
                }
                gb1[h] += dz;
                for (gw, x) in gw1[h * ni..(h + 1) * ni].iter_mut().zip(&s.features) {
                    *gw += dz * x;
                }
            }
        }
        g
    }

    /// One gradient-descent step on `batch`.
    pub fn step(&mut self, batch: &[Sample], learning_rate: f64) -> Result<()> {
        self.check_samples(batch)?;
        let refs: Vec<&Sample> = batch.iter().collect();
        self.apply(&refs, learning_rate);
        Ok(())
    }

    fn apply(&mut self, batch: &[&Sample], learning_rate: f64) {
        if learning_rate == 0.0 {
            return;
        }
        let g = self.gradient_unchecked(batch);
        for (p, d) in self.params.iter_mut().zip(g) {
            *p -= learning_rate * d;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            epochs: 50,
            batch_size: 16,
            learning_rate: 0.05,
            seed: 7,
        }
    }
}

/// Mini-batch gradient descent; appends the full-set loss after every
/// epoch to `error_log`.
pub fn train_decoder(decoder: &mut Decoder, samples: &[Sample], schedule: &TrainSchedule) -> Result<()> {
    train_decoder_with(decoder, samples, schedule, |_, _| {})
}

/// As [`train_decoder`], calling `after_epoch(epoch, decoder)` after each epoch.
pub fn train_decoder_with(
    decoder: &mut Decoder,
    samples: &[Sample],
    schedule: &TrainSchedule,
    mut after_epoch: impl FnMut(usize, &Decoder),
) -> Result<()> {
    decoder.check_samples(samples)?;
    ensure(schedule.batch_size >= 1, || "batch_size must be at least 1".into())?;
    ensure(schedule.learning_rate >= 0.0, || "learning_rate must be >= 0".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 1..=schedule.epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for chunk in order.chunks(schedule.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            decoder.apply(&batch, schedule.learning_rate);
        }
        decoder.epochs_trained += 1;
        let err = decoder.loss_unchecked(samples.iter());
        decoder.error_log.push(err);
        after_epoch(epoch, decoder);
    }
    Ok(())
}

/// Root mean squared error in raw coordinate units.
pub fn rmse(decoder: &Decoder, samples: &[Sample]) -> Result<f64> {
    decoder.check_samples(samples)?;
    let total: f64 = samples
        .iter()
        .map(|s| {
            let y = decoder.decode(&s.features).expect("width checked");
            y.iter().zip(&s.target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum();
    Ok((total / (samples.len() * decoder.outputs) as f64).sqrt())
}

/// Per-axis bounds of the stored coordinates, and the largest axis extent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundingBox {
    pub fn of_map(map: &KnowledgeMap) -> Result<Self> {
        ensure(!map.is_empty(), || "map has no entries".into())?;
        let d = map.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for e in map.entries() {
            for (k, &c) in e.coords.iter().enumerate() {
                lo[k] = lo[k].min(c);
                hi[k] = hi[k].max(c);
            }
        }
        Ok(BoundingBox { lo, hi })
    }

    /// Largest per-axis extent; the yardstick for RMSE thresholds.
    pub fn range(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| b - a)
            .fold(0.0, f64::max)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&a, &b)| if b > a { rng.gen_range(a..=b) } else { a })
            .collect()
    }
}

/// `n` preprocessed samples at uniformly drawn points of `bbox`.
pub fn draw_samples(
    subject: &SyntheticSubject,
    bbox: &BoundingBox,
    n: usize,
    window: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let point = bbox.sample(&mut rng);
            let pattern = synth_pattern(subject, &point, mix_seed(seed, i as u64 + 1))?;
            Ok(Sample {
                features: preprocess(&pattern.voxels, window)?,
                target: point,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    /// Documents shown per iteration.
    pub neighbors: usize,
    pub window: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            neighbors: 5,
            window: 3,
            learning_rate: 0.02,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolStep {
    pub iteration: usize,
    pub point: Vec<f64>,
    pub shown_documents: Vec<String>,
    pub draw_seed: u64,
    /// Loss on this iteration's sample before the update.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolLog {
    pub subject_id: String,
    pub config: ProtocolConfig,
    pub iterations: usize,
    pub steps: Vec<ProtocolStep>,
}

/// Online training session: draw a map point, show its nearest documents,
/// record the subject's response, preprocess it and take one training step.
pub fn run_protocol(
    map: &KnowledgeMap,
    subject: &SyntheticSubject,
    decoder: Decoder,
    iterations: usize,
    config: &ProtocolConfig,
) -> Result<(Decoder, ProtocolLog)> {
    let bbox = BoundingBox::of_map(map)?;
    if subject.dim() != map.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            actual: subject.dim(),
        });
    }
    if decoder.outputs() != map.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            actual: decoder.outputs(),
        });
    }
    let mut decoder = decoder;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut steps = Vec::with_capacity(iterations);
    for iteration in 0..iterations {
        let point = bbox.sample(&mut rng);
        let shown_documents = map
            .neighbors(NeighborQuery::Coords(&point), config.neighbors)?
            .into_iter()
            .map(|n| n.doc_id)
            .collect();
        let draw_seed = mix_seed(config.seed, iteration as u64 + 1);
        let pattern = synth_pattern(subject, &point, draw_seed)?;
        let sample = Sample {
            features: preprocess(&pattern.voxels, config.window)?,
            target: point.clone(),
        };
        let batch = std::slice::from_ref(&sample);
        let loss = decoder.loss(batch)?;
        decoder.step(batch, config.learning_rate)?;
        steps.push(ProtocolStep {
            iteration,
            point,
            shown_documents,
            draw_seed,
            loss,
        });
    }
    Ok((
        decoder,
        ProtocolLog {
            subject_id: subject.id.clone(),
            config: *config,
            iterations,
            steps,
        },
    ))
}

/// Re-runs a logged session from its recorded seed and iteration count.
pub fn replay_protocol(
    map: &KnowledgeMap,
    subject: &SyntheticSubject,
    initial: Decoder,
    log: &ProtocolLog,
) -> Result<(Decoder, ProtocolLog)> {
    run_protocol(map, subject, initial, log.iterations, &log.config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub hidden: usize,
    pub window: usize,
    pub schedule: TrainSchedule,
    pub bbox: BoundingBox,
    pub init_seed: u64,
    pub sample_seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            hidden: 64,
            window: 3,
            schedule: TrainSchedule::default(),
            bbox: BoundingBox {
                lo: vec![0.0; 3],
                hi: vec![4.0; 3],
            },
            init_seed: 1,
            sample_seed: 2,
        }
    }
}

/// One decoder trained on samples pooled across a cohort sharing a
/// common response.
pub fn pretrain_anthropogenic(
    subjects: &[SyntheticSubject],
    samples_per_subject: usize,
    config: &PretrainConfig,
) -> Result<Decoder> {
    ensure(subjects.len() >= 2, || "pretraining needs at least 2 subjects".into())?;
    let first = &subjects[0];
    for s in &subjects[1..] {
        if s.shared_weight != first.shared_weight || s.shared_baseline != first.shared_baseline {
            return Err(Error::InvalidCohort(format!(
                "subject {} does not share the shared response of subject {}",
                s.id, first.id
            )));
        }
    }
    ensure(config.bbox.lo.len() == first.dim(), || {
        "bounding box width must equal map dimension".into()
    })?;
    let pooled: Vec<Sample> = subjects
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            draw_samples(s, &config.bbox, samples_per_subject, config.window, mix_seed(config.sample_seed, i as u64))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut decoder = Decoder::new(first.voxels(), config.hidden, first.dim(), config.init_seed)
        .with_target_range(&config.bbox.lo, &config.bbox.hi)?;
    train_decoder(&mut decoder, &pooled, &config.schedule)?;
    Ok(decoder)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: ResponseModel,
    pub mixing: f64,
    pub noise_sigma: f64,
    pub cohort_size: usize,
    pub held_out_subjects: usize,
    pub pretrain_samples_per_subject: usize,
    pub pretrain: PretrainConfig,
    pub finetune_samples: usize,
    pub eval_samples: usize,
    pub finetune: TrainSchedule,
    /// Held-out RMSE threshold as a fraction of the coordinate range.
    pub threshold_fraction: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ResponseModel::default(),
            mixing: 0.7,
            noise_sigma: 0.0,
            cohort_size: 10,
            held_out_subjects: 10,
            pretrain_samples_per_subject: 200,
            pretrain: PretrainConfig {
                schedule: TrainSchedule {
                    epochs: 40,
                    ..TrainSchedule::default()
                },
                ..PretrainConfig::default()
            },
            finetune_samples: 100,
            eval_samples: 100,
            finetune: TrainSchedule {
                epochs: 60,
                batch_size: 10,
                learning_rate: 0.05,
                seed: 3,
            },
            threshold_fraction: 0.1,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Pretrained,
    Scratch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub arm: Arm,
    pub subject_id: String,
    /// Held-out RMSE before training (index 0) and after each epoch.
    pub rmse: Vec<f64>,
    /// First epoch meeting the threshold; `None` if never reached.
    pub epochs_to_threshold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub threshold_rmse: f64,
    pub max_epochs: usize,
    /// Medians count never-reached subjects as `max_epochs + 1`.
    pub median_epochs_pretrained: f64,
    pub median_epochs_scratch: f64,
    pub curves: Vec<LearningCurve>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn curve_for(
    arm: Arm,
    subject: &SyntheticSubject,
    mut decoder: Decoder,
    train: &[Sample],
    eval: &[Sample],
    schedule: &TrainSchedule,
    threshold: f64,
) -> Result<LearningCurve> {
    let mut curve = vec![rmse(&decoder, eval)?];
    let mut hit = (curve[0] <= threshold).then_some(0);
    // Early stop once the threshold is met; later epochs do not change the result.
    if hit.is_none() {
        let mut remaining = schedule.epochs;
        let mut sched = *schedule;
        while remaining > 0 && hit.is_none() {
            sched.epochs = 1;
            sched.seed = mix_seed(schedule.seed, remaining as u64);
            train_decoder(&mut decoder, train, &sched)?;
            let r = rmse(&decoder, eval)?;
            curve.push(r);
            if r <= threshold {
                hit = Some(curve.len() - 1);
            }
            remaining -= 1;
        }
    }
    Ok(LearningCurve {
        arm,
        subject_id: subject.id.clone(),
        rmse: curve,
        epochs_to_threshold: hit,
    })
}

/// Compares fine-tuning from a cohort-pretrained decoder against training
/// from random initialization on held-out subjects.
pub fn pretraining_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    ensure(cfg.model.dim == cfg.pretrain.bbox.lo.len(), || {
        "model dim must equal bounding box width".into()
    })?;
    let shared = SharedResponse::generate(&cfg.model, mix_seed(cfg.seed, 1));
    let make = |prefix: &str, i: usize, salt: u64| {
        SyntheticSubject::generate(
            format!("{prefix}{i:02}"),
            &shared,
            &cfg.model,
            cfg.mixing,
            cfg.noise_sigma,
            mix_seed(cfg.seed, salt + i as u64),
        )
    };
    let cohort: Vec<SyntheticSubject> = (0..cfg.cohort_size)
        .map(|i| make("cohort", i, 100))
        .collect::<Result<_>>()?;
    let held_out: Vec<SyntheticSubject> = (0..cfg.held_out_subjects)
        .map(|i| make("subject", i, 10_000))
        .collect::<Result<_>>()?;

    let pre_cfg = PretrainConfig {
        init_seed: mix_seed(cfg.seed, 2),
        sample_seed: mix_seed(cfg.seed, 3),
        ..cfg.pretrain.clone()
    };
    let pretrained = pretrain_anthropogenic(&cohort, cfg.pretrain_samples_per_subject, &pre_cfg)?;
    let bbox = &cfg.pretrain.bbox;
    let threshold = cfg.threshold_fraction * bbox.range();

    let per_subject: Vec<(LearningCurve, LearningCurve)> = held_out
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let base = mix_seed(cfg.seed, 50_000 + i as u64);
            let train = draw_samples(s, bbox, cfg.finetune_samples, pre_cfg.window, mix_seed(base, 1))?;
            let eval = draw_samples(s, bbox, cfg.eval_samples, pre_cfg.window, mix_seed(base, 2))?;
            let schedule = TrainSchedule {
                seed: mix_seed(base, 3),
                ..cfg.finetune
            };
            let scratch = Decoder::new(s.voxels(), pre_cfg.hidden, s.dim(), mix_seed(base, 4))
                .with_target_range(&bbox.lo, &bbox.hi)?;
            let mut warm = pretrained.clone();
            warm.error_log.clear();
            warm.epochs_trained = 0;
            Ok((
                curve_for(Arm::Pretrained, s, warm, &train, &eval, &schedule, threshold)?,
                curve_for(Arm::Scratch, s, scratch, &train, &eval, &schedule, threshold)?,
            ))
        })
        .collect::<Result<_>>()?;

    let censored = |c: &LearningCurve| c.epochs_to_threshold.unwrap_or(cfg.finetune.epochs + 1) as f64;
    let median_epochs_pretrained = median(per_subject.iter().map(|p| censored(&p.0)).collect());
    let median_epochs_scratch = median(per_subject.iter().map(|p| censored(&p.1)).collect());
    Ok(ExperimentSummary {
        threshold_rmse: threshold,
        max_epochs: cfg.finetune.epochs,
        median_epochs_pretrained,
        median_epochs_scratch,
        curves: per_subject.into_iter().flat_map(|(a, b)| [a, b]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(voxels: usize, dim: usize) -> ResponseModel {
        ResponseModel {
            voxels,
            dim,
            ..Default::default()
        }
    }

    fn subject(alpha: f64, noise: f64, baseline: f64) -> SyntheticSubject {
        let m = ResponseModel {
            baseline_scale: baseline,
            ..model(12, 2)
        };
        let shared = SharedResponse::generate(&m, 1);
        SyntheticSubject::generate("s", &shared, &m, alpha, noise, 2).unwrap()
    }

    #[test]
    fn pure_shared_noise_free_pattern_is_linear() {
        let s = subject(1.0, 0.0, 0.0);
        let c = [0.5, -1.25];
        let p = synth_pattern(&s, &c, 9).unwrap();
        assert_eq!(p.voxels, s.shared_weight.mul_vec(&c));
        let zero = synth_pattern(&s, &[0.0, 0.0], 9).unwrap();
        assert!(zero.voxels.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pattern_is_seeded() {
        let s = subject(0.5, 0.3, 1.0);
        let a = synth_pattern(&s, &[1.0, 2.0], 4).unwrap();
        assert_eq!(a, synth_pattern(&s, &[1.0, 2.0], 4).unwrap());
        assert_ne!(a, synth_pattern(&s, &[1.0, 2.0], 5).unwrap());
        assert!(synth_pattern(&s, &[1.0], 4).is_err());
    }

    #[test]
    fn subject_validation() {
        let m = model(4, 2);
        let shared = SharedResponse::generate(&m, 1);
        assert!(SyntheticSubject::generate("x", &shared, &m, 1.5, 0.0, 1).is_err());
        assert!(SyntheticSubject::generate("x", &shared, &m, 0.5, -1.0, 1).is_err());
        let other = SharedResponse::generate(&model(5, 2), 1);
        assert!(SyntheticSubject::from_parts("x", shared, other, 0.5, 0.0, false, 1).is_err());
    }

    #[test]
    fn preprocess_examples() {
        let v = [1.0, 4.0, 2.0, 8.0];
        let out = preprocess(&v, 1).unwrap();
        let mean = 15.0 / 4.0;
        let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0).sqrt();
        for (o, x) in out.iter().zip(&v) {
            assert!((o - (x - mean) / sd).abs() < 1e-12);
        }
        assert_eq!(preprocess(&[2.5; 6], 3).unwrap(), vec![0.0; 6]);
        assert_eq!(preprocess(&[0.0, 3.0, 0.0], 3).unwrap(), vec![0.0; 3]);
        assert!(preprocess(&v, 2).is_err());
        assert!(preprocess(&v, 0).is_err());
    }

    #[test]
    fn preprocess_standardizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..50).map(|_| rng.gen::<f64>() * 10.0).collect();
        let out = preprocess(&v, 5).unwrap();
        let mean = out.iter().sum::<f64>() / 50.0;
        let var = out.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 50.0;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_decoder_outputs_bias() {
        let mut d = Decoder::zeros(4, 3, 2);
        let n = d.params().len();
        d.params_mut()[n - 2] = 0.25;
        d.params_mut()[n - 1] = -1.5;
        assert_eq!(d.decode(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0.25, -1.5]);
        assert!(d.decode(&[1.0]).is_err());
    }

    #[test]
    fn memorizes_single_sample() {
        let s = Sample {
            features: vec![0.5, -1.0, 2.0, 0.1],
            target: vec![0.3, -0.7],
        };
        let mut d = Decoder::new(4, 8, 2, 1);
        let sched = TrainSchedule {
            epochs: 500,
            batch_size: 1,
            learning_rate: 0.05,
            seed: 1,
        };
        train_decoder(&mut d, &vec![s.clone(); 4], &sched).unwrap();
        let y = d.decode(&s.features).unwrap();
        assert!(y.iter().zip(&s.target).all(|(a, b)| (a - b).abs() < 1e-3));
        assert_eq!(d.decode(&s.features).unwrap(), y);
        assert_eq!(d.error_log.len(), 500);
    }

    #[test]
    fn zero_rate_keeps_weights() {
        let mut d = Decoder::new(3, 4, 2, 5);
        let before = d.clone();
        let s = vec![Sample {
            features: vec![1.0, 0.0, -1.0],
            target: vec![1.0, 1.0],
        }];
        let sched = TrainSchedule {
            learning_rate: 0.0,
            epochs: 3,
            ..Default::default()
        };
        train_decoder(&mut d, &s, &sched).unwrap();
        assert_eq!(d.params(), before.params());
    }

    #[test]
    fn training_rejects_bad_samples() {
        let mut d = Decoder::new(3, 4, 2, 5);
        assert!(train_decoder(&mut d, &[], &TrainSchedule::default()).is_err());
        let bad = vec![Sample {
            features: vec![1.0, 0.0],
            target: vec![1.0, 1.0],
        }];
        assert!(train_decoder(&mut d, &bad, &TrainSchedule::default()).is_err());
    }

    #[test]
    fn target_range_normalizes_outputs() {
        let d = Decoder::zeros(2, 2, 2)
            .with_target_range(&[0.0, 10.0], &[4.0, 20.0])
            .unwrap();
        assert_eq!(d.decode(&[0.3, 0.1]).unwrap(), vec![2.0, 15.0]);
    }

    #[test]
    fn cohort_must_share_response() {
        let m = model(6, 2);
        let a = SharedResponse::generate(&m, 1);
        let b = SharedResponse::generate(&m, 2);
        let s1 = SyntheticSubject::generate("a", &a, &m, 0.7, 0.0, 1).unwrap();
        let s2 = SyntheticSubject::generate("b", &b, &m, 0.7, 0.0, 2).unwrap();
        let cfg = PretrainConfig {
            bbox: BoundingBox {
                lo: vec![0.0; 2],
                hi: vec![1.0; 2],
            },
            ..Default::default()
        };
        assert!(matches!(
            pretrain_anthropogenic(&[s1.clone(), s2], 5, &cfg),
            Err(Error::InvalidCohort(_))
        ));
        assert!(pretrain_anthropogenic(&[s1], 5, &cfg).is_err());
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
