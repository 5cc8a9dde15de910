//! Vector space model: tokenization, feature selection and tf-idf vectors.
//!
//! Every document becomes one L2-normalized sparse vector whose axes are the
//! retained vocabulary terms. Term order is descending document frequency
//! with lexicographic tie-breaking, so axis indices are stable for a given
//! corpus regardless of the order documents were read in.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::digest;
use crate::error::{ensure, Error, Result};

/// Schema version written into serialized corpus snapshots.
pub const CORPUS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_uri: Option<String>,
    /// Ground truth for synthetic corpora. Never read by training code.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_label: Option<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            source_uri: None,
            topic_label: None,
        }
    }

    pub fn with_topic(mut self, label: impl Into<String>) -> Self {
        self.topic_label = Some(label.into());
        self
    }
}

/// Lowercased alphanumeric tokens of at least two characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|tok| tok.chars().count() >= 2)
        .map(|tok| tok.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabularyConfig {
    pub min_df: usize,
    pub max_df_ratio: f64,
    pub max_terms: usize,
}

impl Default for VocabularyConfig {
    fn default() -> Self {
        VocabularyConfig {
            min_df: 1,
            max_df_ratio: 1.0,
            max_terms: 2000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    terms: Vec<String>,
    document_frequency: Vec<usize>,
    corpus_size: usize,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    terms: Vec<String>,
    document_frequency: Vec<usize>,
    corpus_size: usize,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_parts(r.terms, r.document_frequency, r.corpus_size)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            terms: v.terms,
            document_frequency: v.document_frequency,
            corpus_size: v.corpus_size,
        }
    }
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms
            && self.document_frequency == other.document_frequency
            && self.corpus_size == other.corpus_size
    }
}

impl Vocabulary {
    pub fn from_parts(
        terms: Vec<String>,
        document_frequency: Vec<usize>,
        corpus_size: usize,
    ) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            terms,
            document_frequency,
            corpus_size,
            index,
        }
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn document_frequency(&self) -> &[usize] {
        &self.document_frequency
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// Smoothed inverse document frequency `ln((1+N)/(1+df)) + 1`.
    pub fn idf(&self, term_index: usize) -> f64 {
        let n = self.corpus_size as f64;
        let df = self.document_frequency[term_index] as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }

    /// SHA-256 over the canonical JSON form; identifies the feature axes.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("vocabulary serializes");
        digest::sha256_hex(&bytes)
    }
}

pub fn build_vocabulary(docs: &[Document], config: &VocabularyConfig) -> Result<Vocabulary> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    ensure(config.min_df >= 1, || "min_df must be at least 1".into())?;
    ensure(config.max_df_ratio > 0.0 && config.max_df_ratio <= 1.0, || {
        format!("max_df_ratio must lie in (0, 1], got {}", config.max_df_ratio)
    })?;

    let per_doc: Vec<HashSet<String>> = docs
        .par_iter()
        .map(|d| tokenize(&d.text).into_iter().collect())
        .collect();
    let mut df: HashMap<&str, usize> = HashMap::new();
    for terms in &per_doc {
        for t in terms {
            *df.entry(t.as_str()).or_default() += 1;
        }
    }

    let n = docs.len();
    let mut kept: Vec<(&str, usize)> = df
        .into_iter()
        .filter(|&(_, c)| c >= config.min_df && (c as f64 / n as f64) <= config.max_df_ratio)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    kept.truncate(config.max_terms);
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary);
    }

    let (terms, freqs) = kept.into_iter().map(|(t, c)| (t.to_owned(), c)).unzip();
    Ok(Vocabulary::from_parts(terms, freqs, n))
}

/// Sparse tf-idf vector, entries sorted by term index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub doc_id: String,
    pub entries: Vec<(u32, f64)>,
    pub l2_norm: f64,
}

impl FeatureVector {
    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for &(i, w) in &self.entries {
            out[i as usize] = w;
        }
        out
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }
}

pub fn vectorize(doc: &Document, vocab: &Vocabulary) -> Result<FeatureVector> {
    vectorize_text(&doc.id, &doc.text, vocab)
}

/// Vectorizes free text under `vocab`; `id` only labels the result.
pub fn vectorize_text(id: &str, text: &str, vocab: &Vocabulary) -> Result<FeatureVector> {
    let mut tf: BTreeMap<usize, u32> = BTreeMap::new();
    for tok in tokenize(text) {
        if let Some(i) = vocab.index_of(&tok) {
            *tf.entry(i).or_default() += 1;
        }
    }
    if tf.is_empty() {
        return Err(Error::Unmappable(id.to_owned()));
    }
    let mut entries: Vec<(u32, f64)> = tf
        .into_iter()
        .map(|(i, c)| (i as u32, f64::from(c) * vocab.idf(i)))
        .collect();
    let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    for (_, w) in &mut entries {
        *w /= norm;
    }
    let l2_norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    Ok(FeatureVector {
        doc_id: id.to_owned(),
        entries,
        l2_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct IngestConfig {
    pub vocabulary: VocabularyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestedCorpus {
    pub vocabulary: Vocabulary,
    pub vectors: Vec<FeatureVector>,
    /// Ids of documents with no in-vocabulary terms; excluded from `vectors`.
    pub unmappable: Vec<String>,
    /// Documents in id order, including unmappable ones.
    #[serde(skip)]
    pub documents: Vec<Document>,
}

impl IngestedCorpus {
    pub fn topic_of(&self, doc_id: &str) -> Option<&str> {
        self.documents
            .binary_search_by(|d| d.id.as_str().cmp(doc_id))
            .ok()
            .and_then(|i| self.documents[i].topic_label.as_deref())
    }

    pub fn dense_vectors(&self) -> Vec<Vec<f64>> {
        let n = self.vocabulary.len();
        self.vectors.iter().map(|v| v.to_dense(n)).collect()
    }

    /// Versioned JSON snapshot of vocabulary and vectors.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Snapshot<'a> {
            schema_version: u32,
            vocabulary: &'a Vocabulary,
            vectors: &'a [FeatureVector],
            unmappable: &'a [String],
        }
        Ok(serde_json::to_string(&Snapshot {
            schema_version: CORPUS_SCHEMA_VERSION,
            vocabulary: &self.vocabulary,
            vectors: &self.vectors,
            unmappable: &self.unmappable,
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Snapshot {
            schema_version: u32,
            vocabulary: Vocabulary,
            vectors: Vec<FeatureVector>,
            unmappable: Vec<String>,
        }
        let snap: Snapshot = serde_json::from_str(s)?;
        if snap.schema_version != CORPUS_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: snap.schema_version,
                supported: CORPUS_SCHEMA_VERSION,
            });
        }
        Ok(IngestedCorpus {
            vocabulary: snap.vocabulary,
            vectors: snap.vectors,
            unmappable: snap.unmappable,
            documents: Vec::new(),
        })
    }
}

/// Builds the vocabulary and vectors for an in-memory document set.
///
/// Documents are sorted by id first, so the output does not depend on the
/// input order.
pub fn vectorize_corpus(mut docs: Vec<Document>, config: &IngestConfig) -> Result<IngestedCorpus> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    for pair in docs.windows(2) {
        if pair[0].id == pair[1].id {
            return Err(Error::DuplicateId(pair[0].id.clone()));
        }
    }
    let vocabulary = build_vocabulary(&docs, &config.vocabulary)?;
    let results: Vec<Result<FeatureVector>> =
        docs.par_iter().map(|d| vectorize(d, &vocabulary)).collect();

    let mut vectors = Vec::with_capacity(docs.len());
    let mut unmappable = Vec::new();
    for r in results {
        match r {
            Ok(v) => vectors.push(v),
            Err(Error::Unmappable(id)) => unmappable.push(id),
            Err(e) => return Err(e),
        }
    }
    Ok(IngestedCorpus {
        vocabulary,
        vectors,
        unmappable,
        documents: docs,
    })
}

pub fn ingest_corpus(path: &Path, config: &IngestConfig) -> Result<IngestedCorpus> {
    let docs = load_documents(path)?;
    vectorize_corpus(docs, config)
}

/// Reads either a directory of `*.txt` files or a JSON-lines file.
pub fn load_documents(path: &Path) -> Result<Vec<Document>> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_dir() {
        load_text_dir(path)
    } else {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_jsonl(&text, &path.display().to_string())
    }
}

fn load_text_dir(root: &Path) -> Result<Vec<Document>> {
    let mut files = Vec::new();
    collect_txt_files(root, &mut files)?;
    files.sort();
    let mut docs = Vec::with_capacity(files.len());
    for (index, file) in files.iter().enumerate() {
        let rel = file.strip_prefix(root).unwrap_or(file);
        let id = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let bytes = fs::read(file).map_err(|e| Error::io(file, e))?;
        let text = String::from_utf8(bytes).map_err(|_| Error::MalformedRecord {
            origin: file.display().to_string(),
            index,
            reason: "file is not valid UTF-8".into(),
        })?;
        if text.trim().is_empty() {
            return Err(Error::MalformedRecord {
                origin: file.display().to_string(),
                index,
                reason: "empty document text".into(),
            });
        }
        let mut doc = Document::new(id, text);
        doc.source_uri = Some(file.display().to_string());
        docs.push(doc);
    }
    Ok(docs)
}

fn collect_txt_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let ty = entry.file_type().map_err(|e| Error::io(&path, e))?;
        if ty.is_dir() {
            collect_txt_files(&path, out)?;
        } else if path.extension().is_some_and(|ext| ext == "txt") {
            out.push(path);
        }
    }
    Ok(())
}

/// Parses one JSON object per non-blank line. `index` in errors is 1-based.
pub fn parse_jsonl(text: &str, origin: &str) -> Result<Vec<Document>> {
    #[derive(Deserialize)]
    struct Record {
        id: String,
        text: String,
        #[serde(default)]
        topic_label: Option<String>,
        #[serde(default)]
        source_uri: Option<String>,
    }

    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| Error::MalformedRecord {
            origin: origin.to_owned(),
            index: i + 1,
            reason,
        };
        let rec: Record = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        if rec.id.is_empty() {
            return Err(malformed("empty id".into()));
        }
        if rec.text.is_empty() {
            return Err(malformed("empty text".into()));
        }
        docs.push(Document {
            id: rec.id,
            text: rec.text,
            source_uri: rec.source_uri,
            topic_label: rec.topic_label,
        });
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(texts: &[&str]) -> Vec<Document> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document::new(format!("d{i}"), *t))
            .collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("Knowledge, Representation!"),
            vec!["knowledge", "representation"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("a GKM-3 map"), vec!["gkm", "map"]);
    }

    #[test]
    fn tokenize_is_unicode_aware() {
        assert_eq!(tokenize("Ünïcode—Straße ÄB"), vec!["ünïcode", "straße", "äb"]);
    }

    #[test]
    fn vocabulary_order_and_filters() {
        let d = docs(&["xx yy", "xx zz", "xx"]);
        let v = build_vocabulary(&d, &VocabularyConfig::default()).unwrap();
        assert_eq!(v.terms(), ["xx", "yy", "zz"]);
        assert_eq!(v.document_frequency(), [3, 1, 1]);

        let cfg = VocabularyConfig {
            max_df_ratio: 0.9,
            ..Default::default()
        };
        let v = build_vocabulary(&d, &cfg).unwrap();
        assert_eq!(v.terms(), ["yy", "zz"]);
    }

    #[test]
    fn vocabulary_max_terms_keeps_highest_df() {
        let d = docs(&["aa bb cc", "bb cc", "cc dd"]);
        let cfg = VocabularyConfig {
            max_terms: 2,
            ..Default::default()
        };
        let v = build_vocabulary(&d, &cfg).unwrap();
        assert_eq!(v.terms(), ["cc", "bb"]);
    }

    #[test]
    fn vocabulary_rejects_bad_input() {
        let d = docs(&["only one"]);
        let cfg = VocabularyConfig {
            min_df: 2,
            ..Default::default()
        };
        assert!(matches!(build_vocabulary(&d, &cfg), Err(Error::EmptyVocabulary)));
        assert!(matches!(
            build_vocabulary(&[], &VocabularyConfig::default()),
            Err(Error::EmptyCorpus)
        ));
        let cfg = VocabularyConfig {
            max_df_ratio: 0.0,
            ..Default::default()
        };
        assert!(build_vocabulary(&d, &cfg).is_err());
    }

    #[test]
    fn vectorize_single_term_is_unit() {
        let d = docs(&["xx yy", "xx zz", "xx"]);
        let v = build_vocabulary(&d, &VocabularyConfig::default()).unwrap();
        let fv = vectorize(&Document::new("q", "yy yy yy"), &v).unwrap();
        assert_eq!(fv.entries, vec![(1, 1.0)]);
        assert!((fv.l2_norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vectorize_matches_hand_tfidf() {
        let d = docs(&["xx yy", "xx zz", "xx"]);
        let v = build_vocabulary(&d, &VocabularyConfig::default()).unwrap();
        // xx: df 3 -> ln(4/4)+1 = 1 ; yy: df 1 -> ln(4/2)+1
        let wx = 1.0_f64;
        let wy = 2.0_f64.ln() + 1.0;
        let norm = (wx * wx + wy * wy).sqrt();
        let fv = vectorize(&d[0], &v).unwrap();
        assert_eq!(fv.entries.len(), 2);
        assert_eq!(fv.entries[0].0, 0);
        assert_eq!(fv.entries[1].0, 1);
        assert!((fv.entries[0].1 - wx / norm).abs() < 1e-12);
        assert!((fv.entries[1].1 - wy / norm).abs() < 1e-12);
    }

    #[test]
    fn vectorize_identical_multisets_equal() {
        let d = docs(&["xx yy", "xx zz", "xx"]);
        let v = build_vocabulary(&d, &VocabularyConfig::default()).unwrap();
        let a = vectorize(&Document::new("a", "yy xx xx"), &v).unwrap();
        let b = vectorize(&Document::new("a", "xx, XX; yy"), &v).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn vectorize_rejects_out_of_vocabulary() {
        let d = docs(&["xx yy", "xx zz", "xx"]);
        let v = build_vocabulary(&d, &VocabularyConfig::default()).unwrap();
        let err = vectorize(&Document::new("q", "nothing here"), &v).unwrap_err();
        assert!(matches!(err, Error::Unmappable(id) if id == "q"));
    }

    #[test]
    fn corpus_reports_unmappable_without_failing() {
        let d = vec![
            Document::new("a", "alpha beta"),
            Document::new("b", "alpha gamma"),
            Document::new("c", "zz"),
        ];
        let cfg = IngestConfig {
            vocabulary: VocabularyConfig {
                min_df: 2,
                ..Default::default()
            },
        };
        let c = vectorize_corpus(d, &cfg).unwrap();
        assert_eq!(c.vectors.len(), 2);
        assert_eq!(c.unmappable, vec!["c".to_string()]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let d = vec![Document::new("a", "xx"), Document::new("a", "yy")];
        assert!(matches!(
            vectorize_corpus(d, &IngestConfig::default()),
            Err(Error::DuplicateId(_))
        ));
    }

    #[test]
    fn jsonl_parse_and_line_numbers() {
        let ok = "{\"id\":\"a\",\"text\":\"hello world\",\"topic_label\":\"t\"}\n\n{\"id\":\"b\",\"text\":\"more\"}\n";
        let d = parse_jsonl(ok, "mem").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].topic_label.as_deref(), Some("t"));

        let bad = "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"b\"}\n";
        match parse_jsonl(bad, "mem") {
            Err(Error::MalformedRecord { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn snapshot_roundtrip_and_version_check() {
        let c = vectorize_corpus(docs(&["xx yy", "xx zz", "xx"]), &IngestConfig::default()).unwrap();
        let json = c.to_json().unwrap();
        let back = IngestedCorpus::from_json(&json).unwrap();
        assert_eq!(back.vocabulary, c.vocabulary);
        assert_eq!(back.vectors, c.vectors);

        let future = json.replacen("\"schema_version\":1", "\"schema_version\":99", 1);
        assert!(matches!(
            IngestedCorpus::from_json(&future),
            Err(Error::SchemaVersion { found: 99, .. })
        ));
    }
}
