//! Offline map building and the decoder simulations behind the CLI.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use gkm_core::corpus::{ingest_corpus, IngestConfig, IngestedCorpus};
use gkm_core::decoder::{
    draw_samples, pretraining_experiment, rmse, run_protocol, BoundingBox, Decoder, ExperimentSummary,
    ProtocolLog, SharedResponse, SyntheticSubject,
};
use gkm_core::digest::sha256_hex;
use gkm_core::dimension::{intrinsic_dimension_pca, jl_min_dimension, JlQuery};
use gkm_core::gkm::{build_map, BuildInputs, JlRecord, KnowledgeMap, Provenance};
use gkm_core::mapfile::save_map;
use gkm_core::som::{incremental_evaluate, mix_seed, Evaluation, PhaseLog, PhaseSummary};
use serde::Serialize;

use crate::config::{BuildConfig, ProtocolRunConfig};

/// Attached to JL output for the one case where a widely quoted figure (58)
/// disagrees with the bound it is said to come from.
pub fn jl_note(m: u64, epsilon: f64, min_dimension: u64) -> Option<String> {
    (m == 20_000 && epsilon == 0.1).then(|| {
        format!(
            "8 ln(20000) / 0.1^2 = {:.1}, so the bound is {min_dimension}; the figure of 58 sometimes \
             quoted for m = 20000, epsilon = 0.1 does not follow from this formula",
            8.0 * 20_000f64.ln() / 0.01
        )
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BuildSummary {
    pub final_dim: usize,
    pub stabilized: bool,
    pub mean_score: f64,
    pub pairwise_scores: Vec<(usize, usize, f64)>,
    pub entry_count: usize,
    pub unmappable: usize,
    pub chosen_run: usize,
    pub jl_min_dimension: u64,
    pub intrinsic_dim: usize,
}

pub struct BuildOutput {
    pub map: KnowledgeMap,
    pub evaluation: Evaluation,
    pub summary: BuildSummary,
}

/// ingest, dimension estimates, incremental evaluation, map assembly.
pub fn build(corpus_path: &Path, config: &BuildConfig) -> Result<BuildOutput> {
    let corpus = ingest_corpus(
        corpus_path,
        &IngestConfig {
            vocabulary: config.vocabulary,
        },
    )
    .with_context(|| format!("ingesting corpus {}", corpus_path.display()))?;
    build_from_corpus(&corpus, config)
}

pub fn build_from_corpus(corpus: &IngestedCorpus, config: &BuildConfig) -> Result<BuildOutput> {
    config.som.validate().context("validating som config")?;
    let vectors = corpus.dense_vectors();
    anyhow::ensure!(
        vectors.len() >= 2,
        "at least 2 mappable documents are required, found {}",
        vectors.len()
    );
    let doc_ids: Vec<String> = corpus.vectors.iter().map(|v| v.doc_id.clone()).collect();
    let labels: Vec<Option<String>> = doc_ids.iter().map(|id| corpus.topic_of(id).map(str::to_owned)).collect();

    let m = vectors.len() as u64;
    let min_dimension = jl_min_dimension(JlQuery {
        m,
        epsilon: config.jl_epsilon,
    })?;
    let pca = intrinsic_dimension_pca(&vectors, config.pca_threshold).context("estimating intrinsic dimension")?;
    let evaluation = incremental_evaluate(&vectors, &config.som).context("incremental evaluation")?;

    let mut notes = Vec::new();
    notes.extend(jl_note(m, config.jl_epsilon, min_dimension));
    if !evaluation.stabilized() {
        notes.push(format!(
            "stability threshold {} not reached by max_dim {}",
            config.som.stability_threshold, config.som.max_dim
        ));
    }
    let provenance = Provenance {
        config_hash: sha256_hex(serde_json::to_string(config)?.as_bytes()),
        created_unix: std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse().ok()),
        jl_bound: Some(JlRecord {
            m,
            epsilon: config.jl_epsilon,
            min_dimension,
        }),
        intrinsic_dimension: Some(pca.clone()),
        unmappable: corpus.unmappable.clone(),
        notes,
        ..Default::default()
    };
    let map = build_map(BuildInputs {
        soms: &evaluation.soms,
        stability_reports: &evaluation.reports,
        vectors: &vectors,
        doc_ids: &doc_ids,
        labels: Some(&labels),
        vocabulary: &corpus.vocabulary,
        provenance,
    })?;
    let last = evaluation.reports.last().expect("at least one phase");
    let summary = BuildSummary {
        final_dim: evaluation.final_dim,
        stabilized: evaluation.stabilized(),
        mean_score: last.mean_score,
        pairwise_scores: last.pairwise_scores.clone(),
        entry_count: map.len(),
        unmappable: corpus.unmappable.len(),
        chosen_run: map.provenance().chosen_run,
        jl_min_dimension: min_dimension,
        intrinsic_dim: pca.intrinsic_dim,
    };
    Ok(BuildOutput {
        map,
        evaluation,
        summary,
    })
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TrainingLogLine<'a> {
    Phase(&'a PhaseLog),
    Run {
        run: usize,
        seed: u64,
        #[serde(flatten)]
        summary: &'a PhaseSummary,
    },
}

/// One JSON object per line: every phase's stability result, then every
/// run's per-phase training summary.
pub fn write_training_log(evaluation: &Evaluation, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    for p in &evaluation.phase_logs {
        writeln!(out, "{}", serde_json::to_string(&TrainingLogLine::Phase(p))?)?;
    }
    for (run, som) in evaluation.soms.iter().enumerate() {
        for s in som.training_log() {
            let line = TrainingLogLine::Run {
                run,
                seed: som.rng_seed(),
                summary: s,
            };
            writeln!(out, "{}", serde_json::to_string(&line)?)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn build_to_file(corpus_path: &Path, config: &BuildConfig, out: &Path, log: Option<&Path>) -> Result<BuildSummary> {
    let built = build(corpus_path, config)?;
    save_map(&built.map, out).with_context(|| format!("writing map {}", out.display()))?;
    if let Some(log) = log {
        write_training_log(&built.evaluation, log)?;
    }
    Ok(built.summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct ProtocolOutcome {
    pub subject_id: String,
    pub iterations: usize,
    pub held_out_rmse: f64,
    pub coordinate_range: f64,
    pub relative_rmse: f64,
}

/// Trains a fresh decoder for one synthetic subject over `map`.
pub fn protocol_run(map: &KnowledgeMap, cfg: &ProtocolRunConfig) -> Result<(Decoder, ProtocolLog, ProtocolOutcome)> {
    let model = gkm_core::decoder::ResponseModel {
        dim: map.dim(),
        ..cfg.model
    };
    let shared = SharedResponse::generate(&model, mix_seed(cfg.seed, 1));
    let subject = SyntheticSubject::generate("subject00", &shared, &model, cfg.mixing, cfg.noise_sigma, mix_seed(cfg.seed, 2))?;
    let bbox = BoundingBox::of_map(map)?;
    let decoder = Decoder::new(model.voxels, cfg.hidden, map.dim(), mix_seed(cfg.seed, 3)).with_target_range(&bbox.lo, &bbox.hi)?;
    let protocol = gkm_core::decoder::ProtocolConfig {
        seed: mix_seed(cfg.seed, 4),
        ..cfg.protocol
    };
    let (decoder, log) = run_protocol(map, &subject, decoder, cfg.iterations, &protocol)?;
    let eval = draw_samples(&subject, &bbox, cfg.eval_samples.max(1), protocol.window, mix_seed(cfg.seed, 5))?;
    let err = rmse(&decoder, &eval)?;
    let outcome = ProtocolOutcome {
        subject_id: subject.id.clone(),
        iterations: cfg.iterations,
        held_out_rmse: err,
        coordinate_range: bbox.range(),
        relative_rmse: err / bbox.range(),
    };
    Ok((decoder, log, outcome))
}

pub fn write_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    for item in items {
        writeln!(out, "{}", serde_json::to_string(&item)?)?;
    }
    out.flush()?;
    Ok(())
}

pub fn summary_table(s: &ExperimentSummary) -> String {
    format!(
        "arm         median_epochs_to_threshold\n\
         pretrained  {}\n\
         scratch     {}\n\
         (threshold rmse {:.4}, budget {} epochs, unreached counted as {})\n",
        s.median_epochs_pretrained,
        s.median_epochs_scratch,
        s.threshold_rmse,
        s.max_epochs,
        s.max_epochs + 1
    )
}

/// Runs the pretraining comparison and writes `curves.jsonl` and
/// `summary.json` under `out_dir`.
pub fn pretrain_run(cfg: &gkm_core::decoder::ExperimentConfig, out_dir: &Path) -> Result<ExperimentSummary> {
    let summary = pretraining_experiment(cfg)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write_jsonl(&summary.curves, &out_dir.join("curves.jsonl"))?;
    #[derive(Serialize)]
    struct Table {
        median_epochs_pretrained: f64,
        median_epochs_scratch: f64,
        threshold_rmse: f64,
        max_epochs: usize,
    }
    let table = Table {
        median_epochs_pretrained: summary.median_epochs_pretrained,
        median_epochs_scratch: summary.median_epochs_scratch,
        threshold_rmse: summary.threshold_rmse,
        max_epochs: summary.max_epochs,
    };
    std::fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&table)?)?;
    Ok(summary)
}
