//! Map container format.
//!
//! All integers are little-endian. Strings are a `u32` byte length followed
//! by UTF-8 bytes.
//!
//! ```text
//! header (64 bytes)
//!   magic           8 bytes   "GKMMAP\r\n"
//!   schema_version  u32
//!   dim             u32
//!   entry_count     u64
//!   payload_len     u64
//!   checksum        32 bytes  SHA-256 of the payload
//! payload
//!   vocabulary_ref  string    hex SHA-256 of the vocabulary JSON
//!   vocabulary      string    JSON {terms, document_frequency, corpus_size}
//!   provenance      string    JSON
//!   annotations     string    JSON array of {label, coords}
//!   entries         entry_count x {
//!                     doc_id string,
//!                     has_label u8, [label string],
//!                     coords dim x f64 }
//!   som
//!     axis_count    u32
//!     axis_sizes    axis_count x u32
//!     feature_len   u32
//!     rng_seed      u64
//!     training_log  string    JSON
//!     weights       node_count x feature_len x f64
//! ```

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::corpus::Vocabulary;
use crate::digest;
use crate::error::{Error, Result};
use crate::gkm::{Annotation, KnowledgeMap, MapEntry, Provenance};
use crate::som::{PhaseSummary, Som};

pub const MAGIC: &[u8; 8] = b"GKMMAP\r\n";
pub const SCHEMA_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8 + 8 + 32;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Corrupt(format!("record runs past end at offset {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<&'a str> {
        let n = self.u32()? as usize;
        std::str::from_utf8(self.take(n)?).map_err(|_| Error::Corrupt("invalid UTF-8 string".into()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Corrupt("count overflows usize".into()))
    }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("map sections serialize")
}

pub fn to_bytes(map: &KnowledgeMap) -> Vec<u8> {
    let mut p = Writer(Vec::new());
    p.str(&map.vocabulary_ref);
    p.str(&json(&map.vocabulary));
    p.str(&json(&map.provenance));
    p.str(&json(&map.annotations));
    for e in &map.entries {
        p.str(&e.doc_id);
        match &e.label {
            Some(l) => {
                p.u8(1);
                p.str(l);
            }
            None => p.u8(0),
        }
        for &c in &e.coords {
            p.f64(c);
        }
    }
    let som = &map.som;
    p.u32(som.dim() as u32);
    for &s in som.axis_sizes() {
        p.u32(s as u32);
    }
    p.u32(som.feature_len() as u32);
    p.u64(som.rng_seed());
    p.str(&json(&som.training_log()));
    for &w in som.raw_weights() {
        p.f64(w);
    }
    let payload = p.0;

    let mut h = Writer(Vec::with_capacity(HEADER_LEN + payload.len()));
    h.0.extend_from_slice(MAGIC);
    h.u32(SCHEMA_VERSION);
    h.u32(map.dim as u32);
    h.u64(map.entries.len() as u64);
    h.u64(payload.len() as u64);
    h.0.extend_from_slice(&digest::sha256(&payload));
    h.0.extend_from_slice(&payload);
    h.0
}

pub fn from_bytes(bytes: &[u8]) -> Result<KnowledgeMap> {
    if bytes.len() < 12 {
        return Err(Error::Checksum);
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Corrupt("not a knowledge map file (bad magic)".into()));
    }
    let mut r = Reader { buf: bytes, pos: 8 };
    let version = r.u32()?;
    if version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: version,
            supported: SCHEMA_VERSION,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Checksum);
    }
    let dim = r.u32()? as usize;
    let entry_count = r.usize()?;
    let payload_len = r.usize()?;
    let checksum: [u8; 32] = r.take(32)?.try_into().unwrap();
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != payload_len || digest::sha256(payload) != checksum {
        return Err(Error::Checksum);
    }

    let mut r = Reader { buf: payload, pos: 0 };
    let vocabulary_ref = r.str()?.to_owned();
    let vocabulary: Vocabulary = serde_json::from_str(r.str()?)?;
    if vocabulary.content_hash() != vocabulary_ref {
        return Err(Error::Corrupt("vocabulary does not match its recorded hash".into()));
    }
    let provenance: Provenance = serde_json::from_str(r.str()?)?;
    let annotations: Vec<Annotation> = serde_json::from_str(r.str()?)?;

    let mut entries = Vec::with_capacity(entry_count.min(payload.len()));
    for _ in 0..entry_count {
        let doc_id = r.str()?.to_owned();
        let label = match r.u8()? {
            0 => None,
            1 => Some(r.str()?.to_owned()),
            other => return Err(Error::Corrupt(format!("bad label flag {other}"))),
        };
        let coords = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        entries.push(MapEntry {
            doc_id,
            coords,
            label,
        });
    }

    let axis_count = r.u32()? as usize;
    let axis_sizes = (0..axis_count)
        .map(|_| r.u32().map(|s| s as usize))
        .collect::<Result<Vec<_>>>()?;
    let feature_len = r.u32()? as usize;
    let rng_seed = r.u64()?;
    let training_log: Vec<PhaseSummary> = serde_json::from_str(r.str()?)?;
    let node_count = axis_sizes
        .iter()
        .try_fold(1usize, |acc, &s| acc.checked_mul(s))
        .and_then(|n| n.checked_mul(feature_len))
        .ok_or_else(|| Error::Corrupt("SOM size overflows".into()))?;
    if node_count * 8 > payload.len() - r.pos {
        return Err(Error::Corrupt("SOM weights truncated".into()));
    }
    let weights = (0..node_count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    if r.pos != payload.len() {
        return Err(Error::Corrupt("trailing bytes after SOM weights".into()));
    }
    let mut som = Som::from_parts(axis_sizes, feature_len, weights, rng_seed)?;
    som.set_training_log(training_log);
    if som.dim() != dim {
        return Err(Error::Corrupt(format!(
            "header dim {dim} disagrees with SOM dim {}",
            som.dim()
        )));
    }
    if som.feature_len() != vocabulary.len() {
        return Err(Error::Corrupt("SOM feature length disagrees with vocabulary".into()));
    }

    let mut map = KnowledgeMap::from_entries(entries, som, vocabulary, provenance)?;
    map.annotations = annotations;
    Ok(map)
}

pub fn save_map(map: &KnowledgeMap, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(map)).map_err(|e| Error::io(path, e))
}

pub fn load_map(path: &Path) -> Result<KnowledgeMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// Human-readable export of every map field; not read back.
pub fn to_debug_json(map: &KnowledgeMap) -> Result<String> {
    #[derive(Serialize)]
    struct SomExport<'a> {
        axis_sizes: &'a [usize],
        feature_len: usize,
        rng_seed: u64,
        training_log: &'a [PhaseSummary],
        weights: Vec<&'a [f64]>,
    }
    #[derive(Serialize)]
    struct Export<'a> {
        schema_version: u32,
        dim: usize,
        entry_count: usize,
        vocabulary_ref: &'a str,
        vocabulary: &'a Vocabulary,
        provenance: &'a Provenance,
        annotations: &'a [Annotation],
        entries: &'a [MapEntry],
        som: SomExport<'a>,
    }
    let som = &map.som;
    Ok(serde_json::to_string_pretty(&Export {
        schema_version: SCHEMA_VERSION,
        dim: map.dim,
        entry_count: map.entries.len(),
        vocabulary_ref: &map.vocabulary_ref,
        vocabulary: &map.vocabulary,
        provenance: &map.provenance,
        annotations: &map.annotations,
        entries: &map.entries,
        som: SomExport {
            axis_sizes: som.axis_sizes(),
            feature_len: som.feature_len(),
            rng_seed: som.rng_seed(),
            training_log: som.training_log(),
            weights: (0..som.node_count()).map(|i| som.node_weights(i)).collect(),
        },
    })?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{vectorize_corpus, Document, IngestConfig};
    use crate::gkm::{build_map, BuildInputs};
    use crate::som::{incremental_evaluate, SomConfig};

    fn sample_map() -> KnowledgeMap {
        let docs: Vec<Document> = (0..12)
            .map(|i| {
                let text = if i % 2 == 0 { "red apple fruit" } else { "blue ocean water" };
                Document::new(format!("d{i:02}"), format!("{text} n{i}x")).with_topic(if i % 2 == 0 { "food" } else { "sea" })
            })
            .collect();
        let corpus = vectorize_corpus(docs, &IngestConfig::default()).unwrap();
        let vectors = corpus.dense_vectors();
        let cfg = SomConfig {
            nodes_per_axis: 3,
            epochs_per_phase: 5,
            probe_size: 6,
            max_dim: 3,
            ..Default::default()
        };
        let ev = incremental_evaluate(&vectors, &cfg).unwrap();
        let ids: Vec<String> = corpus.vectors.iter().map(|v| v.doc_id.clone()).collect();
        let labels: Vec<Option<String>> = ids.iter().map(|id| corpus.topic_of(id).map(str::to_owned)).collect();
        let mut map = build_map(BuildInputs {
            soms: &ev.soms,
            stability_reports: &ev.reports,
            vectors: &vectors,
            doc_ids: &ids,
            labels: Some(&labels),
            vocabulary: &corpus.vocabulary,
            provenance: Provenance {
                config_hash: "abc".into(),
                notes: vec!["note".into()],
                ..Default::default()
            },
        })
        .unwrap();
        map.annotate("fruit corner", vec![0.5; map.dim()]).unwrap();
        map
    }

    #[test]
    fn roundtrip_is_exact() {
        let map = sample_map();
        let bytes = to_bytes(&map);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, map);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gkm");
        let map = sample_map();
        save_map(&map, &path).unwrap();
        assert_eq!(load_map(&path).unwrap(), map);
    }

    #[test]
    fn truncation_and_corruption_fail_checksum() {
        let bytes = to_bytes(&sample_map());
        for cut in [bytes.len() - 1, bytes.len() / 2, HEADER_LEN, 20] {
            assert!(matches!(from_bytes(&bytes[..cut]), Err(Error::Checksum)), "cut {cut}");
        }
        let mut flipped = bytes.clone();
        let last = flipped.len() - 3;
        flipped[last] ^= 0x40;
        assert!(matches!(from_bytes(&flipped), Err(Error::Checksum)));
    }

    #[test]
    fn future_version_is_reported() {
        let mut bytes = to_bytes(&sample_map());
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            from_bytes(&bytes),
            Err(Error::SchemaVersion { found: 7, supported: SCHEMA_VERSION })
        ));
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = to_bytes(&sample_map());
        bytes[0] = b'X';
        assert!(matches!(from_bytes(&bytes), Err(Error::Corrupt(_))));
    }

    #[test]
    fn debug_json_has_header_fields() {
        let map = sample_map();
        let v: serde_json::Value = serde_json::from_str(&to_debug_json(&map).unwrap()).unwrap();
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
        assert_eq!(v["entry_count"], map.len());
        assert_eq!(v["dim"], map.dim());
    }
}
