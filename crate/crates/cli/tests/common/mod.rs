#![allow(dead_code)]

use std::path::{Path, PathBuf};

use gkm_cli::config::BuildConfig;
use serde_json::Value;
use gkm_core::som::SomConfig;
use gkm_core::synth::{topic_corpus, TopicCorpusConfig};

pub fn small_corpus() -> Vec<gkm_core::corpus::Document> {
    topic_corpus(&TopicCorpusConfig {
        topics: 4,
        documents: 60,
        vocabulary_size: 80,
        doc_len: (20, 40),
        seed: 3,
        ..Default::default()
    })
    .unwrap()
}

pub fn write_jsonl(dir: &Path) -> PathBuf {
    let path = dir.join("corpus.jsonl");
    let lines: Vec<String> = small_corpus()
        .iter()
        .map(|d| serde_json::to_string(d).unwrap())
        .collect();
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

pub fn small_config() -> BuildConfig {
    BuildConfig {
        som: SomConfig {
            initial_dim: 1,
            max_dim: 2,
            nodes_per_axis: 4,
            epochs_per_phase: 5,
            probe_size: 20,
            seed: 9,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn schema(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Checks the keyword subset the published schemas use: type, enum,
/// required, properties, additionalProperties, items, prefixItems,
/// minItems, maxItems, minimum, maximum, exclusiveMinimum, exclusiveMaximum.
fn check(schema: &Value, value: &Value, at: &str, errors: &mut Vec<String>) {
    let mut fail = |msg: String| errors.push(format!("{at}: {msg}"));
    if let Some(t) = schema.get("type").and_then(Value::as_str) {
        let ok = match t {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "string" => value.is_string(),
            "boolean" => value.is_boolean(),
            "number" => value.is_number(),
            "integer" => value.is_u64() || value.is_i64(),
            other => panic!("unsupported type {other}"),
        };
        if !ok {
            return fail(format!("expected {t}, got {value}"));
        }
    }
    if let Some(options) = schema.get("enum").and_then(Value::as_array) {
        if !options.contains(value) {
            fail(format!("{value} not in {options:?}"));
        }
    }
    if let Some(x) = value.as_f64() {
        let bound = |k: &str| schema.get(k).and_then(Value::as_f64);
        if bound("minimum").is_some_and(|m| x < m) || bound("maximum").is_some_and(|m| x > m) {
            fail(format!("{x} out of range"));
        }
        if bound("exclusiveMinimum").is_some_and(|m| x <= m) || bound("exclusiveMaximum").is_some_and(|m| x >= m) {
            fail(format!("{x} out of exclusive range"));
        }
    }
    if let Some(obj) = value.as_object() {
        for key in schema.get("required").and_then(Value::as_array).into_iter().flatten() {
            if !obj.contains_key(key.as_str().unwrap()) {
                errors.push(format!("{at}: missing {key}"));
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        for (k, v) in obj {
            match props.and_then(|p| p.get(k)) {
                Some(sub) => check(sub, v, &format!("{at}.{k}"), errors),
                None if schema.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    errors.push(format!("{at}: unexpected property {k}"))
                }
                None => {}
            }
        }
    }
    if let Some(arr) = value.as_array() {
        let len = |k: &str| schema.get(k).and_then(Value::as_u64).map(|n| n as usize);
        if len("minItems").is_some_and(|n| arr.len() < n) || len("maxItems").is_some_and(|n| arr.len() > n) {
            errors.push(format!("{at}: bad length {}", arr.len()));
        }
        let prefix = schema.get("prefixItems").and_then(Value::as_array);
        for (i, item) in arr.iter().enumerate() {
            let sub = prefix.and_then(|p| p.get(i)).or_else(|| schema.get("items"));
            if let Some(sub) = sub {
                check(sub, item, &format!("{at}[{i}]"), errors);
            }
        }
    }
}

pub fn assert_valid(name: &str, value: &Value) {
    let mut errors = Vec::new();
    check(&schema(name), value, "$", &mut errors);
    assert!(errors.is_empty(), "{name}: {errors:?}\n{value}");
}
