//! Binary persistence for [`BipartiteGraph`].
//!
//! Layout (little endian):
//!
//! ```text
//! magic "SETXIDX\0" | version u32 | payload length u64 | sha256(payload) [32]
//! payload = meta | entity table | feature table | edges
//! ```
//!
//! Each payload section is prefixed with its byte length (u64). The edge
//! section is the entity-major CSR: row offsets, feature indices, raw counts,
//! then weights as raw f64 bits. The column index and dominant types are
//! rebuilt on load.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::corpus::{ContextFeature, EntityId};
use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;

pub const MAGIC: &[u8; 8] = b"SETXIDX\0";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 32;

pub fn save_index(graph: &BipartiteGraph, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(graph);
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    file.sync_all()?;
    Ok(())
}

pub fn load_index(path: impl AsRef<Path>) -> Result<BipartiteGraph> {
    decode(&fs::read(path)?)
}

pub fn encode(graph: &BipartiteGraph) -> Vec<u8> {
    let mut meta = Vec::new();
    put_u64(&mut meta, graph.min_count());
    put_u64(&mut meta, graph.num_entities() as u64);
    put_u64(&mut meta, graph.num_features() as u64);
    put_u64(&mut meta, graph.num_edges() as u64);

    let mut entities = Vec::new();
    for (i, e) in graph.entities().iter().enumerate() {
        put_str(&mut entities, e.as_str());
        put_u64(&mut entities, graph.mention_count_at(i as u32));
    }

    let mut features = Vec::new();
    for f in graph.features() {
        put_str(&mut features, f.key());
    }

    let mut edges = Vec::new();
    let mut offset = 0u64;
    put_u64(&mut edges, 0);
    for e in 0..graph.num_entities() {
        offset += graph.row(e as u32).features.len() as u64;
        put_u64(&mut edges, offset);
    }
    let rows: Vec<_> = (0..graph.num_entities())
        .map(|e| graph.row(e as u32))
        .collect();
    for row in &rows {
        row.features.iter().for_each(|&c| put_u32(&mut edges, c));
    }
    for row in &rows {
        row.counts.iter().for_each(|&n| put_u64(&mut edges, n));
    }
    for row in &rows {
        row.weights
            .iter()
            .for_each(|&w| put_u64(&mut edges, w.to_bits()));
    }

    let mut payload = Vec::new();
    for section in [&meta, &entities, &features, &edges] {
        put_u64(&mut payload, section.len() as u64);
        payload.extend_from_slice(section);
    }

    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u64(&mut out, payload.len() as u64);
    out.extend_from_slice(&Sha256::digest(&payload));
    out.extend_from_slice(&payload);
    out
}

pub fn decode(bytes: &[u8]) -> Result<BipartiteGraph> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(Error::IndexFormat(
            "not a setexpan index (bad magic)".into(),
        ));
    }
    let mut header = Cursor::new(&bytes[8..HEADER_LEN]);
    let version = header.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::IndexVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let payload_len = header.u64()? as usize;
    let checksum = header.take(32)?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != payload_len {
        return Err(Error::IndexFormat(format!(
            "payload is {} bytes, header says {payload_len}",
            payload.len()
        )));
    }
    if Sha256::digest(payload).as_slice() != checksum {
        return Err(Error::IndexChecksum);
    }

    let mut sections = Cursor::new(payload);
    let mut next_section = || -> Result<Cursor<'_>> {
        let len = sections.u64()? as usize;
        Ok(Cursor::new(sections.take(len)?))
    };
    let mut meta = next_section()?;
    let mut entity_table = next_section()?;
    let mut feature_table = next_section()?;
    let mut edge_table = next_section()?;

    let min_count = meta.u64()?;
    let n_entities = meta.u64()? as usize;
    let n_features = meta.u64()? as usize;
    let n_edges = meta.u64()? as usize;

    let mut entities = Vec::with_capacity(n_entities);
    let mut mention_counts = Vec::with_capacity(n_entities);
    for _ in 0..n_entities {
        entities.push(EntityId::from_canonical(entity_table.string()?));
        mention_counts.push(entity_table.u64()?);
    }
    if entities.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::IndexFormat(
            "entity table is not strictly sorted".into(),
        ));
    }

    let mut features = Vec::with_capacity(n_features);
    for _ in 0..n_features {
        features.push(ContextFeature::from_key(&feature_table.string()?)?);
    }
    if features.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::IndexFormat(
            "feature table is not strictly sorted".into(),
        ));
    }

    let offsets = (0..=n_entities)
        .map(|_| edge_table.u64().map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    if offsets[0] != 0 || offsets[n_entities] != n_edges || offsets.windows(2).any(|w| w[0] > w[1])
    {
        return Err(Error::IndexFormat("bad row offsets".into()));
    }
    let cols = (0..n_edges)
        .map(|_| edge_table.u32())
        .collect::<Result<Vec<_>>>()?;
    let counts = (0..n_edges)
        .map(|_| edge_table.u64())
        .collect::<Result<Vec<_>>>()?;
    let weights = (0..n_edges)
        .map(|_| edge_table.u64().map(f64::from_bits))
        .collect::<Result<Vec<_>>>()?;

    let mut edges = Vec::with_capacity(n_edges);
    for e in 0..n_entities {
        let span = offsets[e]..offsets[e + 1];
        if cols[span.clone()].windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::IndexFormat(format!(
                "row {e} is not strictly sorted"
            )));
        }
        for i in span {
            if cols[i] as usize >= n_features {
                return Err(Error::IndexFormat(format!(
                    "feature index {} out of range",
                    cols[i]
                )));
            }
            if counts[i] == 0 || !(weights[i].is_finite() && weights[i] >= 0.0) {
                return Err(Error::IndexFormat(format!("invalid edge at position {i}")));
            }
            edges.push((e as u32, cols[i], counts[i], weights[i]));
        }
    }

    Ok(BipartiteGraph::assemble(
        min_count,
        entities,
        mention_counts,
        features,
        edges,
    ))
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Cursor { buf }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::IndexFormat("unexpected end of data".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::IndexFormat("string is not UTF-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_graph() -> BipartiteGraph {
        let f = |l: &str| ContextFeature::skipgram(&[l], &["x"]).unwrap();
        let e = |s: &str| EntityId::new(s).unwrap();
        BipartiteGraph::from_weighted_edges(vec![
            (e("a"), f("p"), 2, 0.5),
            (e("a"), ContextFeature::coarse_type("LOC").unwrap(), 2, 0.0),
            (e("b"), f("p"), 1, 0.25),
            (e("b"), f("q"), 3, 1.75),
        ])
        .unwrap()
    }

    #[test]
    fn round_trip_in_memory() {
        let g = small_graph();
        assert_eq!(decode(&encode(&g)).unwrap(), g);
    }

    #[test]
    fn corrupted_payload_fails_checksum() {
        let mut bytes = encode(&small_graph());
        let last = bytes.len() - 1;
        bytes[last] ^= 0x40;
        assert!(matches!(decode(&bytes), Err(Error::IndexChecksum)));
    }

    #[test]
    fn future_version_is_rejected() {
        let mut bytes = encode(&small_graph());
        bytes[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        assert!(matches!(
            decode(&bytes),
            Err(Error::IndexVersion {
                found: 2,
                expected: 1
            })
        ));
    }

    #[test]
    fn truncated_and_foreign_files_fail() {
        let bytes = encode(&small_graph());
        assert!(matches!(
            decode(&bytes[..bytes.len() - 3]),
            Err(Error::IndexFormat(_))
        ));
        assert!(matches!(decode(b"hello"), Err(Error::IndexFormat(_))));
    }
}
