//! The knowledge map: document coordinates in one global Euclidean frame,
//! plus the retained SOM and vocabulary needed to place new text.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::{vectorize_text, Vocabulary};
use crate::dimension::DimensionEstimate;
use crate::error::{ensure, Error, Result};
use crate::linalg;
use crate::som::{Som, StabilityReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEntry {
    pub doc_id: String,
    pub coords: Vec<f64>,
    /// Optional externally supplied label, e.g. a topic; display only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// A label pinned to a map position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub label: String,
    pub coords: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JlRecord {
    pub m: u64,
    pub epsilon: f64,
    pub min_dimension: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub config_hash: String,
    pub run_seeds: Vec<u64>,
    pub chosen_run: usize,
    pub stability_reports: Vec<StabilityReport>,
    /// Unix seconds; `None` keeps builds byte-reproducible.
    pub created_unix: Option<u64>,
    pub jl_bound: Option<JlRecord>,
    pub intrinsic_dimension: Option<DimensionEstimate>,
    pub unmappable: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeMap {
    pub(crate) dim: usize,
    /// Sorted by `doc_id`.
    pub(crate) entries: Vec<MapEntry>,
    pub(crate) vocabulary_ref: String,
    pub(crate) vocabulary: Vocabulary,
    pub(crate) som: Som,
    pub(crate) provenance: Provenance,
    pub(crate) annotations: Vec<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborResult {
    pub doc_id: String,
    pub distance: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, Copy)]
pub enum NeighborQuery<'a> {
    Id(&'a str),
    Coords(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewProjection {
    pub target_dim: usize,
    /// `(doc_id, reduced coordinates)` in map entry order.
    pub view_coords: Vec<(String, Vec<f64>)>,
    /// `target_dim` rows of length `dim`; view = basis * (coords - mean).
    pub basis: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Variance captured by each view axis.
    pub axis_variance: Vec<f64>,
}

impl ViewProjection {
    pub fn apply(&self, coords: &[f64]) -> Vec<f64> {
        self.basis
            .iter()
            .map(|row| {
                row.iter()
                    .zip(coords.iter().zip(&self.mean))
                    .map(|(b, (c, m))| b * (c - m))
                    .sum()
            })
            .collect()
    }
}

/// Everything needed to assemble a map after incremental evaluation.
pub struct BuildInputs<'a> {
    pub soms: &'a [Som],
    /// Reports of the final phase come last; only that one drives selection.
    pub stability_reports: &'a [StabilityReport],
    pub vectors: &'a [Vec<f64>],
    pub doc_ids: &'a [String],
    pub labels: Option<&'a [Option<String>]>,
    pub vocabulary: &'a Vocabulary,
    pub provenance: Provenance,
}

/// Index of the run with the best mean stability against the others in
/// `report`; ties go to the lowest seed.
pub fn select_run(soms: &[Som], report: Option<&StabilityReport>) -> usize {
    let score = |i: usize| report.map_or(0.0, |r| r.run_mean(i));
    (0..soms.len())
        .min_by(|&a, &b| {
            score(b)
                .partial_cmp(&score(a))
                .unwrap_or(Ordering::Equal)
                .then(soms[a].rng_seed().cmp(&soms[b].rng_seed()))
                .then(a.cmp(&b))
        })
        .expect("non-empty run list")
}

pub fn build_map(inputs: BuildInputs<'_>) -> Result<KnowledgeMap> {
    let BuildInputs {
        soms,
        stability_reports,
        vectors,
        doc_ids,
        labels,
        vocabulary,
        mut provenance,
    } = inputs;
    ensure(!soms.is_empty(), || "no SOM runs supplied".into())?;
    let dim = soms[0].dim();
    if let Some(s) = soms.iter().find(|s| s.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: s.dim(),
        });
    }
    if vectors.len() != doc_ids.len() {
        return Err(Error::DimensionMismatch {
            expected: doc_ids.len(),
            actual: vectors.len(),
        });
    }
    if let Some(l) = labels {
        ensure(l.len() == doc_ids.len(), || "labels not aligned with doc ids".into())?;
    }

    let chosen = select_run(soms, stability_reports.last());
    let som = soms[chosen].clone();
    let mut entries: Vec<MapEntry> = vectors
        .iter()
        .zip(doc_ids)
        .enumerate()
        .map(|(i, (v, id))| {
            Ok(MapEntry {
                doc_id: id.clone(),
                coords: som.project(v)?,
                label: labels.and_then(|l| l[i].clone()),
            })
        })
        .collect::<Result<_>>()?;
    entries.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    if let Some(w) = entries.windows(2).find(|w| w[0].doc_id == w[1].doc_id) {
        return Err(Error::DuplicateId(w[0].doc_id.clone()));
    }

    provenance.chosen_run = chosen;
    provenance.run_seeds = soms.iter().map(Som::rng_seed).collect();
    provenance.stability_reports = stability_reports.to_vec();
    Ok(KnowledgeMap {
        dim,
        entries,
        vocabulary_ref: vocabulary.content_hash(),
        vocabulary: vocabulary.clone(),
        som,
        provenance,
        annotations: Vec::new(),
    })
}

impl KnowledgeMap {
    /// Assembles a map from stored coordinates, e.g. for tests or imports.
    /// The SOM lattice dimension must equal the coordinate dimension.
    pub fn from_entries(
        entries: Vec<MapEntry>,
        som: Som,
        vocabulary: Vocabulary,
        provenance: Provenance,
    ) -> Result<KnowledgeMap> {
        let dim = som.dim();
        let mut entries = entries;
        if let Some(e) = entries.iter().find(|e| e.coords.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: e.coords.len(),
            });
        }
        ensure(entries.iter().flat_map(|e| &e.coords).all(|c| c.is_finite()), || {
            "coordinates must be finite".into()
        })?;
        entries.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        if let Some(w) = entries.windows(2).find(|w| w[0].doc_id == w[1].doc_id) {
            return Err(Error::DuplicateId(w[0].doc_id.clone()));
        }
        Ok(KnowledgeMap {
            dim,
            entries,
            vocabulary_ref: vocabulary.content_hash(),
            vocabulary,
            som,
            provenance,
            annotations: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MapEntry] {
        &self.entries
    }

    pub fn vocabulary_ref(&self) -> &str {
        &self.vocabulary_ref
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn som(&self) -> &Som {
        &self.som
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn annotate(&mut self, label: impl Into<String>, coords: Vec<f64>) -> Result<()> {
        if coords.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: coords.len(),
            });
        }
        self.annotations.push(Annotation {
            label: label.into(),
            coords,
        });
        Ok(())
    }

    pub fn entry(&self, id: &str) -> Result<&MapEntry> {
        self.entries
            .binary_search_by(|e| e.doc_id.as_str().cmp(id))
            .map(|i| &self.entries[i])
            .map_err(|_| Error::UnknownId(id.to_owned()))
    }

    pub fn coords(&self, id: &str) -> Result<&[f64]> {
        self.entry(id).map(|e| e.coords.as_slice())
    }

    /// Euclidean distance between two stored documents.
    pub fn relevance(&self, id_a: &str, id_b: &str) -> Result<f64> {
        let a = self.coords(id_a)?;
        let b = self.coords(id_b)?;
        Ok(linalg::euclidean(a, b))
    }

    /// The `k` nearest stored documents, sorted by distance then id. A query
    /// by id excludes that document.
    pub fn neighbors(&self, query: NeighborQuery<'_>, k: usize) -> Result<Vec<NeighborResult>> {
        let (origin, skip) = match query {
            NeighborQuery::Id(id) => (self.coords(id)?, Some(id)),
            NeighborQuery::Coords(c) => {
                if c.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        actual: c.len(),
                    });
                }
                ensure(c.iter().all(|x| x.is_finite()), || "query coordinates must be finite".into())?;
                (c, None)
            }
        };
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut scored: Vec<(f64, &str)> = self
            .entries
            .iter()
            .filter(|e| Some(e.doc_id.as_str()) != skip)
            .map(|e| (linalg::euclidean(origin, &e.coords), e.doc_id.as_str()))
            .collect();
        let by = |a: &(f64, &str), b: &(f64, &str)| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1));
        if k < scored.len() {
            scored.select_nth_unstable_by(k, by);
            scored.truncate(k);
        }
        scored.sort_by(by);
        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(i, (distance, id))| NeighborResult {
                doc_id: id.to_owned(),
                distance,
                rank: i + 1,
            })
            .collect())
    }

    /// Places `text` using `vocab`, which must be the vocabulary the map was
    /// built with.
    pub fn locate_text(&self, text: &str, vocab: &Vocabulary) -> Result<Vec<f64>> {
        if vocab != &self.vocabulary {
            return Err(Error::InvalidArgument(
                "vocabulary does not match the one the map was built with".into(),
            ));
        }
        self.locate(text)
    }

    /// Places `text` using the map's own vocabulary.
    pub fn locate(&self, text: &str) -> Result<Vec<f64>> {
        let fv = vectorize_text("query", text, &self.vocabulary).map_err(|e| match e {
            Error::Unmappable(_) => Error::Unmappable("query text".into()),
            other => other,
        })?;
        self.som.project(&fv.to_dense(self.vocabulary.len()))
    }

    /// PCA of the stored coordinates onto 2 or 3 axes. Each basis vector is
    /// signed so its largest-magnitude component is positive.
    pub fn project_to_view(&self, target_dim: usize) -> Result<ViewProjection> {
        ensure(target_dim == 2 || target_dim == 3, || {
            format!("view dimension must be 2 or 3, got {target_dim}")
        })?;
        ensure(self.entries.len() > target_dim, || {
            format!(
                "view needs at least {} entries, map has {}",
                target_dim + 1,
                self.entries.len()
            )
        })?;
        let rows: Vec<Vec<f64>> = self.entries.iter().map(|e| e.coords.clone()).collect();
        let mean = linalg::column_means(&rows);
        let x = linalg::centered_matrix(&rows);
        let cov = x.tr_mul(&x) / (rows.len() as f64 - 1.0);
        let (values, vectors) = linalg::sym_eigen_desc(cov);

        let mut basis = Vec::with_capacity(target_dim);
        let mut axis_variance = Vec::with_capacity(target_dim);
        for k in 0..target_dim {
            if let Some(&value) = values.get(k) {
                let mut v: Vec<f64> = vectors.column(k).iter().copied().collect();
                let lead = v
                    .iter()
                    .copied()
                    .fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
                if lead < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                basis.push(v);
                axis_variance.push(value.max(0.0));
            } else {
                basis.push(vec![0.0; self.dim]);
                axis_variance.push(0.0);
            }
        }
        let mut view = ViewProjection {
            target_dim,
            view_coords: Vec::with_capacity(rows.len()),
            basis,
            mean,
            axis_variance,
        };
        view.view_coords = self
            .entries
            .iter()
            .map(|e| (e.doc_id.clone(), view.apply(&e.coords)))
            .collect();
        Ok(view)
    }
}
