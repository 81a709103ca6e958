//! On-disk graph bundle.
//!
//! ```text
//! meta.json            counts, modality descriptors, class count, endianness tag
//! edges.tsv            "u<TAB>v" per line, u < v, sorted
//! labels.tsv           "node<TAB>label"; missing rows are unlabeled nodes
//! feat_<name>.f32      row-major little-endian f32, num_nodes × feature_dim
//! mask_<name>.bits     availability bits, packed LSB-first
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ClientShard, Modality, MultimodalGraph, Provenance, SplitMasks};
use crate::error::{Error, Result};

const ENDIANNESS: &str = "little";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    num_nodes: usize,
    num_edges: usize,
    num_classes: usize,
    modalities: Vec<Modality>,
    endianness: String,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    match fs::read(path) {
        Ok(bytes) => Ok(bytes),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingFile(path.to_path_buf())),
        Err(e) => Err(e.into()),
    }
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read_file(path)?).map_err(|e| Error::Parse {
        what: path.display().to_string(),
        detail: e.to_string(),
    })
}

fn parse_pairs(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Parse {
            what: format!("{}:{}", path.display(), lineno + 1),
            detail: format!("expected two tab-separated integers, got {line:?}"),
        };
        let (a, b) = line.split_once('\t').ok_or_else(bad)?;
        out.push((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?));
    }
    Ok(out)
}

fn pack_bits(bits: impl Iterator<Item = bool>, len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len.div_ceil(8)];
    for (i, b) in bits.enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

pub fn save_bundle(graph: &MultimodalGraph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    graph.validate()?;
    fs::create_dir_all(dir)?;
    let meta = Meta {
        num_nodes: graph.num_nodes,
        num_edges: graph.edges.len(),
        num_classes: graph.num_classes,
        modalities: graph.modalities.clone(),
        endianness: ENDIANNESS.into(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;

    let mut edges = String::new();
    for (u, v) in &graph.edges {
        writeln!(edges, "{u}\t{v}").unwrap();
    }
    fs::write(dir.join("edges.tsv"), edges)?;

    let mut labels = String::new();
    for (i, l) in graph.labels.iter().enumerate() {
        if let Some(l) = l {
            writeln!(labels, "{i}\t{l}").unwrap();
        }
    }
    fs::write(dir.join("labels.tsv"), labels)?;

    for (m, modality) in graph.modalities.iter().enumerate() {
        let feats = &graph.features[m];
        let mut bytes = Vec::with_capacity(feats.len() * 4);
        for row in feats.rows() {
            for x in row {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        fs::write(dir.join(format!("feat_{}.f32", modality.name)), bytes)?;
        let bits = pack_bits(graph.modality_mask.column(m).iter().copied(), graph.num_nodes);
        fs::write(dir.join(format!("mask_{}.bits", modality.name)), bits)?;
    }
    Ok(())
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<MultimodalGraph> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta: Meta = serde_json::from_str(&read_text(&meta_path)?).map_err(|e| Error::Parse {
        what: meta_path.display().to_string(),
        detail: e.to_string(),
    })?;
    if meta.endianness != ENDIANNESS {
        return Err(Error::Parse {
            what: meta_path.display().to_string(),
            detail: format!("unsupported endianness {:?}", meta.endianness),
        });
    }
    let n = meta.num_nodes;

    let edges = parse_pairs(&dir.join("edges.tsv"))?;
    if edges.len() != meta.num_edges {
        return Err(Error::DimensionMismatch {
            what: "edges.tsv line count".into(),
            expected: meta.num_edges,
            found: edges.len(),
        });
    }

    let mut labels = vec![None; n];
    for (node, label) in parse_pairs(&dir.join("labels.tsv"))? {
        if node >= n {
            return Err(Error::NodeOutOfRange { id: node, num_nodes: n });
        }
        labels[node] = Some(label);
    }

    let mut features = Vec::with_capacity(meta.modalities.len());
    let mut mask = Array2::from_elem((n, meta.modalities.len()), false);
    for (m, modality) in meta.modalities.iter().enumerate() {
        let path = dir.join(format!("feat_{}.f32", modality.name));
        let bytes = read_file(&path)?;
        let expected = n * modality.feature_dim * 4;
        if bytes.len() != expected {
            let row_bytes = n * 4;
            // Whole rows of a different width are a shape error; anything else is truncation.
            if row_bytes > 0 && bytes.len() % row_bytes == 0 {
                return Err(Error::DimensionMismatch {
                    what: path.display().to_string(),
                    expected: modality.feature_dim,
                    found: bytes.len() / row_bytes,
                });
            }
            return Err(Error::TruncatedPayload {
                what: path.display().to_string(),
                expected,
                found: bytes.len(),
            });
        }
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        features.push(Array2::from_shape_vec((n, modality.feature_dim), values).expect("length checked"));

        let path = dir.join(format!("mask_{}.bits", modality.name));
        let bits = read_file(&path)?;
        if bits.len() != n.div_ceil(8) {
            return Err(Error::TruncatedPayload {
                what: path.display().to_string(),
                expected: n.div_ceil(8),
                found: bits.len(),
            });
        }
        for i in 0..n {
            mask[[i, m]] = bits[i / 8] >> (i % 8) & 1 == 1;
        }
    }

    MultimodalGraph {
        num_nodes: n,
        edges,
        modalities: meta.modalities,
        features,
        modality_mask: mask,
        labels,
        num_classes: meta.num_classes,
    }
    .canonicalize()
}

fn client_dir(root: &Path, client: usize) -> PathBuf {
    root.join(format!("client_{client}"))
}

/// One bundle per client under `client_<k>/` plus `assignment.tsv` (global node, client).
pub fn save_shards(shards: &[ClientShard], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut assignment: Vec<(usize, usize)> = shards
        .iter()
        .flat_map(|s| s.node_global_ids.iter().map(move |&g| (g, s.client_id)))
        .collect();
    assignment.sort_unstable();
    let mut text = String::new();
    for (g, k) in assignment {
        writeln!(text, "{g}\t{k}").unwrap();
    }
    fs::write(dir.join("assignment.tsv"), text)?;

    for shard in shards {
        let cdir = client_dir(dir, shard.client_id);
        save_bundle(&shard.graph, &cdir)?;
        let mut ids = String::new();
        for (local, g) in shard.node_global_ids.iter().enumerate() {
            writeln!(ids, "{local}\t{g}").unwrap();
        }
        fs::write(cdir.join("node_ids.tsv"), ids)?;
        let mut split = String::new();
        for i in 0..shard.graph.num_nodes {
            let tag = if shard.split_masks.train[i] {
                "train"
            } else if shard.split_masks.val[i] {
                "val"
            } else if shard.split_masks.test[i] {
                "test"
            } else {
                continue;
            };
            writeln!(split, "{i}\t{tag}").unwrap();
        }
        fs::write(cdir.join("split.tsv"), split)?;
        fs::write(cdir.join("provenance.json"), serde_json::to_string_pretty(&shard.provenance)?)?;
    }
    Ok(())
}

pub fn load_shards(dir: impl AsRef<Path>) -> Result<Vec<ClientShard>> {
    let dir = dir.as_ref();
    let assignment = parse_pairs(&dir.join("assignment.tsv"))?;
    let num_clients = assignment.iter().map(|&(_, k)| k + 1).max().unwrap_or(0);
    let mut shards = Vec::with_capacity(num_clients);
    for k in 0..num_clients {
        let cdir = client_dir(dir, k);
        let graph = load_bundle(&cdir)?;
        let n = graph.num_nodes;
        let mut node_global_ids = vec![usize::MAX; n];
        for (local, g) in parse_pairs(&cdir.join("node_ids.tsv"))? {
            if local >= n {
                return Err(Error::NodeOutOfRange { id: local, num_nodes: n });
            }
            node_global_ids[local] = g;
        }
        let mut split_masks = SplitMasks {
            train: vec![false; n],
            val: vec![false; n],
            test: vec![false; n],
        };
        let split_path = cdir.join("split.tsv");
        for (lineno, line) in read_text(&split_path)?.lines().enumerate() {
            let parsed = line.split_once('\t').and_then(|(i, tag)| Some((i.parse::<usize>().ok()?, tag)));
            let (i, tag) = parsed.filter(|(i, _)| *i < n).ok_or_else(|| Error::Parse {
                what: format!("{}:{}", split_path.display(), lineno + 1),
                detail: format!("bad split line {line:?}"),
            })?;
            match tag {
                "train" => split_masks.train[i] = true,
                "val" => split_masks.val[i] = true,
                "test" => split_masks.test[i] = true,
                other => {
                    return Err(Error::Parse {
                        what: split_path.display().to_string(),
                        detail: format!("unknown split tag {other:?}"),
                    })
                }
            }
        }
        let prov_path = cdir.join("provenance.json");
        let provenance: Provenance = serde_json::from_str(&read_text(&prov_path)?)?;
        shards.push(ClientShard {
            client_id: k,
            node_global_ids,
            graph,
            split_masks,
            provenance,
        });
    }
    Ok(shards)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MultimodalGraph {
        let mut g = MultimodalGraph::from_edges(3, vec![(0, 1), (1, 2)])
            .unwrap()
            .with_labels(vec![Some(0), None, Some(1)], 2)
            .unwrap()
            .with_features(
                vec![Modality::new("text", 2), Modality::new("image", 3)],
                vec![
                    Array2::from_shape_vec((3, 2), vec![0.1, -2.5, 3.0e-8, 7.0, f32::MIN_POSITIVE, 1.0]).unwrap(),
                    Array2::from_shape_vec((3, 3), (0..9).map(|x| x as f32 / 3.0).collect()).unwrap(),
                ],
            )
            .unwrap();
        g.mask_out(2, 1);
        g
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let g = sample();
        save_bundle(&g, dir.path()).unwrap();
        let back = load_bundle(dir.path()).unwrap();
        assert_eq!(back, g);
        for (a, b) in g.features.iter().zip(&back.features) {
            let ab: Vec<u32> = a.iter().map(|x| x.to_bits()).collect();
            let bb: Vec<u32> = b.iter().map(|x| x.to_bits()).collect();
            assert_eq!(ab, bb);
        }
    }

    #[test]
    fn short_rows_are_a_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let g = MultimodalGraph::from_edges(4, vec![])
            .unwrap()
            .with_features(vec![Modality::new("text", 8)], vec![Array2::zeros((4, 8))])
            .unwrap();
        save_bundle(&g, dir.path()).unwrap();
        fs::write(dir.path().join("feat_text.f32"), vec![0u8; 4 * 7 * 4]).unwrap();
        let err = load_bundle(dir.path()).unwrap_err();
        assert!(
            matches!(err, Error::DimensionMismatch { expected: 8, found: 7, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn ragged_payload_is_truncation() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&sample(), dir.path()).unwrap();
        let path = dir.path().join("feat_image.f32");
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(Error::TruncatedPayload { .. })));
    }

    #[test]
    fn missing_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&sample(), dir.path()).unwrap();
        fs::remove_file(dir.path().join("mask_text.bits")).unwrap();
        match load_bundle(dir.path()) {
            Err(Error::MissingFile(p)) => assert!(p.ends_with("mask_text.bits")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bits_pack_lsb_first() {
        assert_eq!(pack_bits([true, false, false, true, false, false, false, false, true].into_iter(), 9), vec![0b1001, 1]);
    }
}
