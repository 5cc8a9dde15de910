use gkm_core::corpus::{build_vocabulary, Document, VocabularyConfig};
use gkm_core::gkm::*;
use gkm_core::mapfile::{from_bytes, load_map, save_map, to_bytes, to_debug_json};
use gkm_core::som::Som;
use gkm_core::Error;
use proptest::prelude::*;

fn map_from(coords: &[Vec<f64>]) -> KnowledgeMap {
    let dim = coords[0].len();
    let entries = coords
        .iter()
        .enumerate()
        .map(|(i, c)| MapEntry {
            doc_id: format!("e{i:03}"),
            coords: c.clone(),
            label: (i % 3 == 0).then(|| format!("l{}", i % 2)),
        })
        .collect();
    let vocab = build_vocabulary(
        &[Document::new("a", "alpha beta"), Document::new("b", "beta gamma")],
        &VocabularyConfig::default(),
    )
    .unwrap();
    let som = Som::from_parts(vec![2; dim], vocab.len(), vec![0.25; (1 << dim) * vocab.len()], 7).unwrap();
    KnowledgeMap::from_entries(entries, som, vocab, Provenance::default()).unwrap()
}

fn maps() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=10, 2usize..=200).prop_flat_map(|(d, n)| {
        // Integer-valued coordinates make distance ties common.
        let coord = prop_oneof![(-3i32..3).prop_map(f64::from), -5.0f64..5.0];
        prop::collection::vec(prop::collection::vec(coord, d), n)
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn relevance_is_a_metric(coords in maps()) {
        let map = map_from(&coords);
        let ids: Vec<String> = map.entries().iter().map(|e| e.doc_id.clone()).collect();
        let n = ids.len().min(25);
        for a in &ids[..n] {
            prop_assert_eq!(map.relevance(a, a).unwrap(), 0.0);
            for b in &ids[..n] {
                let ab = map.relevance(a, b).unwrap();
                prop_assert!(ab >= 0.0);
                prop_assert_eq!(ab, map.relevance(b, a).unwrap());
                for c in &ids[..n] {
                    prop_assert!(ab <= map.relevance(a, c).unwrap() + map.relevance(c, b).unwrap() + 1e-12);
                }
            }
        }
    }

    #[test]
    fn neighbors_match_brute_force(coords in maps(), k in 0usize..250) {
        let map = map_from(&coords);
        let entries = map.entries();
        let q = &entries[0];
        let mut expected: Vec<(f64, &str)> = entries[1..]
            .iter()
            .map(|e| (dist(&q.coords, &e.coords), e.doc_id.as_str()))
            .collect();
        expected.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
        expected.truncate(k);
        let got = map.neighbors(NeighborQuery::Id(&q.doc_id), k).unwrap();
        prop_assert_eq!(got.len(), expected.len());
        for (i, (g, e)) in got.iter().zip(&expected).enumerate() {
            prop_assert_eq!(g.doc_id.as_str(), e.1);
            prop_assert_eq!(g.distance, e.0);
            prop_assert_eq!(g.rank, i + 1);
        }
    }

    #[test]
    fn binary_round_trip_is_exact(coords in maps()) {
        let mut map = map_from(&coords);
        map.annotate("pin", coords[0].clone()).unwrap();
        let bytes = to_bytes(&map);
        let back = from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &map);
        prop_assert_eq!(to_bytes(&back), bytes);
    }
}

#[test]
fn unknown_ids_are_reported() {
    let map = map_from(&[vec![0.0, 0.0], vec![1.0, 1.0]]);
    assert!(matches!(map.relevance("e000", "nope"), Err(Error::UnknownId(_))));
    assert!(matches!(map.neighbors(NeighborQuery::Id("nope"), 3), Err(Error::UnknownId(_))));
    assert!(matches!(map.entry("nope"), Err(Error::UnknownId(_))));
}

#[test]
fn file_round_trip_and_debug_export() {
    let map = map_from(&[vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, -1.0]]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.gkm");
    save_map(&map, &path).unwrap();
    assert_eq!(load_map(&path).unwrap(), map);
    let json: serde_json::Value = serde_json::from_str(&to_debug_json(&map).unwrap()).unwrap();
    assert_eq!(json["entries"].as_array().unwrap().len(), 3);
    assert_eq!(json["dim"], 2);
}

#[test]
fn view_projection_applies_to_stored_coords() {
    let map = map_from(&[
        vec![0.0, 0.0, 0.0, 1.0],
        vec![1.0, 2.0, 0.5, 0.0],
        vec![3.0, 1.0, 1.0, 2.0],
        vec![-1.0, 0.5, 2.0, 1.0],
        vec![2.0, -2.0, 0.0, 0.5],
    ]);
    for dim in [2, 3] {
        let view = map.project_to_view(dim).unwrap();
        for (id, c) in &view.view_coords {
            let applied = view.apply(map.coords(id).unwrap());
            assert!(applied.iter().zip(c).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }
    assert!(map.project_to_view(4).is_err());
}
