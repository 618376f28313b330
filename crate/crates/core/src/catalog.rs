//! Registry of materialized models.
//!
//! Every materialized model is a payload file plus one line in a
//! line-oriented index: `{model_id, kind, l, u, payload_file, checksum}`.
//! Models of one kind are summarized by *enhanced descriptors*: maximal
//! ranges formed by transitively overlapping model descriptors, each
//! mapping back to the contributing model ids. Enhanced descriptors make
//! relevant-model lookup one sweep over a sorted, disjoint list.
//!
//! Catalogs are per model kind: a regression model is never relevant to a
//! naive Bayes query. "Overlap" means shared ids, so adjacent ranges like
//! [0,9] and [10,19] stay separate.
//!
//! Concurrency: any number of readers; `materialize` takes the single
//! writer lock.

use crate::error::{Error, Result};
use crate::range::{union_len, IdRange};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

pub const INDEX_FILE: &str = "catalog.idx";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    LinReg,
    NbGaussian,
    NbMultinomial,
    LogregChunk,
}

pub const ALL_KINDS: [ModelKind; 4] = [
    ModelKind::LinReg,
    ModelKind::NbGaussian,
    ModelKind::NbMultinomial,
    ModelKind::LogregChunk,
];

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::LinReg => "linreg",
            ModelKind::NbGaussian => "nb-gaussian",
            ModelKind::NbMultinomial => "nb-multinomial",
            ModelKind::LogregChunk => "logreg-chunk",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linreg" => Ok(ModelKind::LinReg),
            "nb-gaussian" => Ok(ModelKind::NbGaussian),
            "nb-multinomial" => Ok(ModelKind::NbMultinomial),
            "logreg" | "logreg-chunk" => Ok(ModelKind::LogregChunk),
            other => Err(Error::InvalidArgument(format!(
                "unknown model kind {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelId(pub u64);

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.0)
    }
}

/// Range tag of one materialized model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub id: ModelId,
    pub kind: ModelKind,
    pub range: IdRange,
}

/// Index record of one materialized model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub descriptor: ModelDescriptor,
    pub payload_file: String,
    pub checksum: String,
    pub payload_bytes: u64,
}

/// Maximal merged range of transitively overlapping model descriptors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnhancedDescriptor {
    pub range: IdRange,
    pub members: Vec<ModelId>,
}

/// Sorts descriptors by lower bound and sweep-merges every overlapping run
/// into one enhanced descriptor.
pub fn preprocess_descriptors(descriptors: &[(ModelId, IdRange)]) -> Vec<EnhancedDescriptor> {
    let mut sorted = descriptors.to_vec();
    sorted.sort_by_key(|(id, r)| (r.lo, r.hi, *id));
    let mut out: Vec<EnhancedDescriptor> = Vec::new();
    for (id, r) in sorted {
        match out.last_mut() {
            Some(e) if r.lo <= e.range.hi => {
                e.range.hi = e.range.hi.max(r.hi);
                e.members.push(id);
            }
            _ => out.push(EnhancedDescriptor {
                range: r,
                members: vec![id],
            }),
        }
    }
    out
}

#[derive(Clone, Debug)]
struct StoredModel {
    kind: ModelKind,
    range: IdRange,
    payload_file: String,
    checksum: String,
    payload_bytes: u64,
}

#[derive(Default)]
struct State {
    next_id: u64,
    models: BTreeMap<u64, StoredModel>,
    enhanced: BTreeMap<&'static str, Vec<EnhancedDescriptor>>,
}

fn kind_key(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::LinReg => "linreg",
        ModelKind::NbGaussian => "nb-gaussian",
        ModelKind::NbMultinomial => "nb-multinomial",
        ModelKind::LogregChunk => "logreg-chunk",
    }
}

impl State {
    fn descriptors_of(&self, kind: ModelKind) -> Vec<(ModelId, IdRange)> {
        self.models
            .iter()
            .filter(|(_, m)| m.kind == kind)
            .map(|(id, m)| (ModelId(*id), m.range))
            .collect()
    }

    fn rebuild_enhanced(&mut self, kind: ModelKind) {
        let descs = self.descriptors_of(kind);
        self.enhanced
            .insert(kind_key(kind), preprocess_descriptors(&descs));
    }

    /// Splices the new descriptor into the sorted disjoint enhanced list,
    /// merging with every descriptor it overlaps. Produces the same result
    /// as a full rebuild.
    fn insert_enhanced(&mut self, kind: ModelKind, id: ModelId, range: IdRange) {
        let models = &self.models;
        let list = self.enhanced.entry(kind_key(kind)).or_default();
        let start = list.partition_point(|e| e.range.hi < range.lo);
        let end = list.partition_point(|e| e.range.lo <= range.hi);
        let mut merged = EnhancedDescriptor {
            range,
            members: vec![id],
        };
        for e in &list[start..end] {
            merged.range.lo = merged.range.lo.min(e.range.lo);
            merged.range.hi = merged.range.hi.max(e.range.hi);
            merged.members.extend(e.members.iter().copied());
        }
        merged
            .members
            .sort_by_key(|m| match models.get(&m.0) {
                Some(s) => (s.range.lo, s.range.hi, *m),
                None => (u64::MAX, u64::MAX, *m),
            });
        list.splice(start..end, [merged]);
    }

    fn entry(&self, id: u64) -> Option<CatalogEntry> {
        self.models.get(&id).map(|m| CatalogEntry {
            descriptor: ModelDescriptor {
                id: ModelId(id),
                kind: m.kind,
                range: m.range,
            },
            payload_file: m.payload_file.clone(),
            checksum: m.checksum.clone(),
            payload_bytes: m.payload_bytes,
        })
    }
}

pub struct Catalog {
    dir: PathBuf,
    state: RwLock<State>,
}

fn checksum_hex(payload: &[u8]) -> String {
    let digest = Sha256::digest(payload);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

impl Catalog {
    /// Opens (or creates) the catalog directory and rebuilds the in-memory
    /// state from the index file.
    pub fn open(dir: &Path) -> Result<Catalog> {
        std::fs::create_dir_all(dir)?;
        let mut state = State::default();
        let index_path = dir.join(INDEX_FILE);
        if index_path.exists() {
            let text = std::fs::read_to_string(&index_path)?;
            for (lineno, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() != 6 {
                    return Err(Error::BadCatalogIndex(format!(
                        "line {}: expected 6 fields, got {}",
                        lineno + 1,
                        fields.len()
                    )));
                }
                let id: u64 = fields[0].parse().map_err(|_| {
                    Error::BadCatalogIndex(format!("line {}: bad id", lineno + 1))
                })?;
                let kind: ModelKind = fields[1].parse()?;
                let lo: u64 = fields[2].parse().map_err(|_| {
                    Error::BadCatalogIndex(format!("line {}: bad lo", lineno + 1))
                })?;
                let hi: u64 = fields[3].parse().map_err(|_| {
                    Error::BadCatalogIndex(format!("line {}: bad hi", lineno + 1))
                })?;
                let payload_file = fields[4].to_string();
                let payload_bytes = std::fs::metadata(dir.join(&payload_file))
                    .map(|m| m.len())
                    .unwrap_or(0);
                state.models.insert(
                    id,
                    StoredModel {
                        kind,
                        range: IdRange::new(lo, hi)?,
                        payload_file,
                        checksum: fields[5].to_string(),
                        payload_bytes,
                    },
                );
                state.next_id = state.next_id.max(id + 1);
            }
        }
        for kind in ALL_KINDS {
            state.rebuild_enhanced(kind);
        }
        Ok(Catalog {
            dir: dir.to_path_buf(),
            state: RwLock::new(state),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write_index(&self, state: &State) -> Result<()> {
        let mut text = String::new();
        for (id, m) in &state.models {
            text.push_str(&format!(
                "{id}\t{}\t{}\t{}\t{}\t{}\n",
                m.kind, m.range.lo, m.range.hi, m.payload_file, m.checksum
            ));
        }
        let tmp = self.dir.join("catalog.idx.tmp");
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, self.dir.join(INDEX_FILE))?;
        Ok(())
    }

    /// Persists a payload under a fresh model id. An existing model with
    /// the same (kind, range) is replaced and its id retired.
    pub fn materialize(&self, kind: ModelKind, range: IdRange, payload: &[u8]) -> Result<ModelId> {
        let mut state = self.state.write().unwrap();
        let duplicate: Option<u64> = state
            .models
            .iter()
            .find(|(_, m)| m.kind == kind && m.range == range)
            .map(|(id, _)| *id);
        if let Some(old) = duplicate {
            let old_file = state.models.remove(&old).unwrap().payload_file;
            let _ = std::fs::remove_file(self.dir.join(old_file));
        }
        let id = state.next_id;
        state.next_id += 1;
        let payload_file = format!("m{id}.bin");
        std::fs::write(self.dir.join(&payload_file), payload)?;
        state.models.insert(
            id,
            StoredModel {
                kind,
                range,
                payload_file,
                checksum: checksum_hex(payload),
                payload_bytes: payload.len() as u64,
            },
        );
        if duplicate.is_some() {
            // Retirement can split an enhanced range; recompute the batch way.
            state.rebuild_enhanced(kind);
        } else {
            state.insert_enhanced(kind, ModelId(id), range);
        }
        self.write_index(&state)?;
        Ok(ModelId(id))
    }

    /// Loads and checksum-verifies one payload.
    pub fn load(&self, id: ModelId) -> Result<(ModelDescriptor, Vec<u8>)> {
        let (descriptor, file, checksum) = {
            let state = self.state.read().unwrap();
            let m = state
                .models
                .get(&id.0)
                .ok_or_else(|| Error::UnknownModel(id.to_string()))?;
            (
                ModelDescriptor {
                    id,
                    kind: m.kind,
                    range: m.range,
                },
                m.payload_file.clone(),
                m.checksum.clone(),
            )
        };
        let payload = std::fs::read(self.dir.join(&file))?;
        let got = checksum_hex(&payload);
        if got != checksum {
            return Err(Error::CorruptPayload {
                id: id.to_string(),
                expected: checksum,
                got,
            });
        }
        Ok((descriptor, payload))
    }

    pub fn entries(&self, kind: ModelKind) -> Vec<CatalogEntry> {
        let state = self.state.read().unwrap();
        state
            .models
            .iter()
            .filter(|(_, m)| m.kind == kind)
            .map(|(id, _)| state.entry(*id).unwrap())
            .collect()
    }

    pub fn all_entries(&self) -> Vec<CatalogEntry> {
        let state = self.state.read().unwrap();
        state
            .models
            .keys()
            .map(|id| state.entry(*id).unwrap())
            .collect()
    }

    pub fn enhanced(&self, kind: ModelKind) -> Vec<EnhancedDescriptor> {
        let state = self.state.read().unwrap();
        state.enhanced.get(kind_key(kind)).cloned().unwrap_or_default()
    }

    pub fn find_exact(&self, kind: ModelKind, range: IdRange) -> Option<CatalogEntry> {
        let state = self.state.read().unwrap();
        state
            .models
            .iter()
            .find(|(_, m)| m.kind == kind && m.range == range)
            .map(|(id, _)| state.entry(*id).unwrap())
    }

    /// Relevant models for a query: all members of every enhanced
    /// descriptor intersecting the query range. Because enhanced
    /// descriptors are overlap-closed, this includes models that only
    /// *transitively* overlap the query. Logistic chunk models are instead
    /// filtered to descriptors fully contained in the query, the only ones
    /// an insertion-only model can use.
    pub fn relevant_models(&self, query: IdRange, kind: ModelKind) -> Vec<CatalogEntry> {
        let state = self.state.read().unwrap();
        let mut out: Vec<CatalogEntry> = if kind == ModelKind::LogregChunk {
            state
                .models
                .iter()
                .filter(|(_, m)| m.kind == kind && query.contains(&m.range))
                .map(|(id, _)| state.entry(*id).unwrap())
                .collect()
        } else {
            let mut ids: Vec<u64> = Vec::new();
            if let Some(list) = state.enhanced.get(kind_key(kind)) {
                for e in list {
                    if e.range.overlaps(&query) {
                        ids.extend(e.members.iter().map(|m| m.0));
                    }
                }
            }
            ids.into_iter()
                .map(|id| state.entry(id).unwrap())
                .collect()
        };
        out.sort_by_key(|e| (e.descriptor.range.lo, e.descriptor.range.hi, e.descriptor.id));
        out
    }

    /// Percentage of the n base records covered by descriptors of `kind`.
    pub fn coverage(&self, kind: ModelKind, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let state = self.state.read().unwrap();
        let ranges: Vec<IdRange> = state
            .models
            .values()
            .filter(|m| m.kind == kind)
            .map(|m| m.range)
            .collect();
        union_len(&ranges) as f64 / n as f64 * 100.0
    }

    pub fn model_count(&self) -> usize {
        self.state.read().unwrap().models.len()
    }

    /// Payload bytes plus index bytes currently on disk.
    pub fn total_bytes(&self) -> u64 {
        let state = self.state.read().unwrap();
        let payloads: u64 = state.models.values().map(|m| m.payload_bytes).sum();
        let index = std::fs::metadata(self.dir.join(INDEX_FILE))
            .map(|m| m.len())
            .unwrap_or(0);
        payloads + index
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use tempfile::TempDir;

    fn r(lo: u64, hi: u64) -> IdRange {
        IdRange::new(lo, hi).unwrap()
    }

    fn open_catalog() -> (TempDir, Catalog) {
        let tmp = TempDir::new().unwrap();
        let catalog = Catalog::open(tmp.path()).unwrap();
        (tmp, catalog)
    }

    #[test]
    fn materialize_updates_enhanced_descriptors() {
        let (_tmp, c) = open_catalog();
        c.materialize(ModelKind::LinReg, r(10, 20), b"a").unwrap();
        let e = c.enhanced(ModelKind::LinReg);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].range, r(10, 20));

        c.materialize(ModelKind::LinReg, r(15, 30), b"b").unwrap();
        let e = c.enhanced(ModelKind::LinReg);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].range, r(10, 30));
        assert_eq!(e[0].members.len(), 2);

        c.materialize(ModelKind::LinReg, r(40, 50), b"c").unwrap();
        let e = c.enhanced(ModelKind::LinReg);
        assert_eq!(
            e.iter().map(|e| e.range).collect::<Vec<_>>(),
            vec![r(10, 30), r(40, 50)]
        );
    }

    #[test]
    fn duplicate_range_replaces_and_retires() {
        let (_tmp, c) = open_catalog();
        let old = c.materialize(ModelKind::LinReg, r(0, 9), b"old").unwrap();
        let new = c.materialize(ModelKind::LinReg, r(0, 9), b"new").unwrap();
        assert_ne!(old, new);
        assert!(matches!(c.load(old), Err(Error::UnknownModel(_))));
        assert_eq!(c.load(new).unwrap().1, b"new");
        assert_eq!(c.model_count(), 1);
    }

    /// The four-model layout from the worked planner example: D1=[0,19],
    /// D2=[0,9], D3=[10,29], D4=[30,49]. D1..D3 chain-overlap, D4 is only
    /// adjacent, so two enhanced descriptors come out.
    #[test]
    fn preprocess_merges_overlap_runs() {
        let descs = vec![
            (ModelId(1), r(0, 19)),
            (ModelId(2), r(0, 9)),
            (ModelId(3), r(10, 29)),
            (ModelId(4), r(30, 49)),
        ];
        let enhanced = preprocess_descriptors(&descs);
        assert_eq!(enhanced.len(), 2);
        assert_eq!(enhanced[0].range, r(0, 29));
        assert_eq!(
            enhanced[0].members,
            vec![ModelId(2), ModelId(1), ModelId(3)]
        );
        assert_eq!(enhanced[1].range, r(30, 49));
        assert_eq!(enhanced[1].members, vec![ModelId(4)]);
    }

    #[test]
    fn preprocess_single_and_empty() {
        assert!(preprocess_descriptors(&[]).is_empty());
        let one = preprocess_descriptors(&[(ModelId(7), r(3, 8))]);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].range, r(3, 8));
        assert_eq!(one[0].members, vec![ModelId(7)]);
    }

    /// Brute-force oracle: connected components of the pairwise-overlap
    /// graph.
    fn overlap_components(descs: &[(ModelId, IdRange)]) -> Vec<EnhancedDescriptor> {
        let n = descs.len();
        let mut comp: Vec<usize> = (0..n).collect();
        fn root(comp: &mut Vec<usize>, i: usize) -> usize {
            if comp[i] != i {
                let r = root(comp, comp[i]);
                comp[i] = r;
            }
            comp[i]
        }
        for i in 0..n {
            for j in i + 1..n {
                if descs[i].1.overlaps(&descs[j].1) {
                    let (a, b) = (root(&mut comp, i), root(&mut comp, j));
                    comp[a] = b;
                }
            }
        }
        let mut groups: BTreeMap<usize, EnhancedDescriptor> = BTreeMap::new();
        for i in 0..n {
            let g = root(&mut comp, i);
            let e = groups.entry(g).or_insert(EnhancedDescriptor {
                range: descs[i].1,
                members: Vec::new(),
            });
            e.range.lo = e.range.lo.min(descs[i].1.lo);
            e.range.hi = e.range.hi.max(descs[i].1.hi);
            e.members.push(descs[i].0);
        }
        let mut out: Vec<EnhancedDescriptor> = groups.into_values().collect();
        for e in &mut out {
            let mut with_ranges: Vec<(u64, u64, ModelId)> = e
                .members
                .iter()
                .map(|m| {
                    let r = descs.iter().find(|(id, _)| id == m).unwrap().1;
                    (r.lo, r.hi, *m)
                })
                .collect();
            with_ranges.sort();
            e.members = with_ranges.into_iter().map(|(_, _, m)| m).collect();
        }
        out.sort_by_key(|e| e.range.lo);
        out
    }

    #[test]
    fn preprocess_matches_component_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for _ in 0..20 {
            let descs: Vec<(ModelId, IdRange)> = (0..100)
                .map(|i| {
                    let lo = rng.gen_range(0..1000);
                    let len = rng.gen_range(1..60);
                    (ModelId(i), r(lo, lo + len - 1))
                })
                .collect();
            assert_eq!(preprocess_descriptors(&descs), overlap_components(&descs));
        }
    }

    #[test]
    fn relevant_models_worked_example() {
        let (_tmp, c) = open_catalog();
        let d1 = c.materialize(ModelKind::LinReg, r(0, 19), b"1").unwrap();
        let d2 = c.materialize(ModelKind::LinReg, r(0, 9), b"2").unwrap();
        let d3 = c.materialize(ModelKind::LinReg, r(10, 29), b"3").unwrap();
        let d4 = c.materialize(ModelKind::LinReg, r(30, 49), b"4").unwrap();
        // Query [20,39] intersects both enhanced descriptors; everything
        // chained into them is relevant.
        let rel = c.relevant_models(r(20, 39), ModelKind::LinReg);
        let ids: Vec<ModelId> = rel.iter().map(|e| e.descriptor.id).collect();
        assert_eq!(ids, vec![d2, d1, d3, d4]);
        // A query out beyond everything is served by nothing.
        assert!(c.relevant_models(r(60, 70), ModelKind::LinReg).is_empty());
        // Other kinds never see these models.
        assert!(c.relevant_models(r(20, 39), ModelKind::NbGaussian).is_empty());
    }

    /// Fixed-point closure oracle for relevant models: start with models
    /// intersecting the query, then add anything overlapping the set until
    /// stable.
    fn closure_oracle(descs: &[(ModelId, IdRange)], query: IdRange) -> Vec<ModelId> {
        let mut sel: Vec<bool> = descs.iter().map(|(_, r)| r.overlaps(&query)).collect();
        loop {
            let mut changed = false;
            for i in 0..descs.len() {
                if sel[i] {
                    continue;
                }
                if descs
                    .iter()
                    .enumerate()
                    .any(|(j, (_, rj))| sel[j] && rj.overlaps(&descs[i].1))
                {
                    sel[i] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut ids: Vec<(u64, u64, ModelId)> = descs
            .iter()
            .zip(&sel)
            .filter(|(_, &s)| s)
            .map(|((id, r), _)| (r.lo, r.hi, *id))
            .collect();
        ids.sort();
        ids.into_iter().map(|(_, _, id)| id).collect()
    }

    #[test]
    fn relevant_models_matches_closure_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(321);
        for _ in 0..10 {
            let (_tmp, c) = open_catalog();
            let mut descs = Vec::new();
            for _ in 0..25 {
                let lo = rng.gen_range(0..500);
                let len = rng.gen_range(1..80);
                let id = c
                    .materialize(ModelKind::NbGaussian, r(lo, lo + len - 1), b"x")
                    .unwrap();
                descs.push((id, r(lo, lo + len - 1)));
            }
            for _ in 0..10 {
                let lo = rng.gen_range(0..500);
                let len = rng.gen_range(1..120);
                let query = r(lo, lo + len - 1);
                let got: Vec<ModelId> = c
                    .relevant_models(query, ModelKind::NbGaussian)
                    .iter()
                    .map(|e| e.descriptor.id)
                    .collect();
                assert_eq!(got, closure_oracle(&descs, query), "query {query}");
            }
        }
    }

    #[test]
    fn logreg_chunks_filter_to_contained() {
        let (_tmp, c) = open_catalog();
        let inside = c
            .materialize(ModelKind::LogregChunk, r(10, 19), b"w")
            .unwrap();
        c.materialize(ModelKind::LogregChunk, r(18, 27), b"w").unwrap();
        c.materialize(ModelKind::LogregChunk, r(40, 49), b"w").unwrap();
        let rel = c.relevant_models(r(5, 30), ModelKind::LogregChunk);
        // [18,27] is contained too; [40,49] is outside.
        assert_eq!(rel.len(), 2);
        assert_eq!(rel[0].descriptor.id, inside);
        let rel = c.relevant_models(r(12, 30), ModelKind::LogregChunk);
        assert_eq!(rel.len(), 1);
        assert_eq!(rel[0].descriptor.range, r(18, 27));
    }

    #[test]
    fn load_roundtrip_and_corruption() {
        let (tmp, c) = open_catalog();
        let payload: Vec<u8> = (0..=255).collect();
        let id = c.materialize(ModelKind::LinReg, r(0, 99), &payload).unwrap();
        let (desc, back) = c.load(id).unwrap();
        assert_eq!(back, payload);
        assert_eq!(desc.range, r(0, 99));
        assert!(matches!(
            c.load(ModelId(999)),
            Err(Error::UnknownModel(_))
        ));

        // Flip a byte on disk; the checksum must notice.
        let file = tmp.path().join(format!("m{}.bin", id.0));
        let mut bytes = std::fs::read(&file).unwrap();
        bytes[3] ^= 0xFF;
        std::fs::write(&file, bytes).unwrap();
        assert!(matches!(c.load(id), Err(Error::CorruptPayload { .. })));
    }

    #[test]
    fn bulk_roundtrip_checksums() {
        let (_tmp, c) = open_catalog();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut ids = Vec::new();
        for i in 0..1000u64 {
            let payload: Vec<u8> = (0..rng.gen_range(8..64)).map(|_| rng.gen()).collect();
            let lo = i * 10;
            ids.push((
                c.materialize(ModelKind::LinReg, r(lo, lo + 9), &payload)
                    .unwrap(),
                payload,
            ));
        }
        for (id, payload) in ids {
            assert_eq!(c.load(id).unwrap().1, payload);
        }
    }

    #[test]
    fn coverage_percentages() {
        let (_tmp, c) = open_catalog();
        assert_eq!(c.coverage(ModelKind::LinReg, 100), 0.0);
        c.materialize(ModelKind::LinReg, r(0, 49), b"a").unwrap();
        c.materialize(ModelKind::LinReg, r(25, 74), b"b").unwrap();
        assert_eq!(c.coverage(ModelKind::LinReg, 100), 75.0);
    }

    #[test]
    fn coverage_matches_bitmap_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let (_tmp, c) = open_catalog();
        let n = 400u64;
        let mut bitmap = vec![false; n as usize];
        for _ in 0..30 {
            let lo = rng.gen_range(0..n - 20);
            let hi = lo + rng.gen_range(0..20);
            c.materialize(ModelKind::NbMultinomial, r(lo, hi), b"p").unwrap();
            for slot in bitmap.iter_mut().take(hi as usize + 1).skip(lo as usize) {
                *slot = true;
            }
        }
        let want = bitmap.iter().filter(|b| **b).count() as f64 / n as f64 * 100.0;
        assert!((c.coverage(ModelKind::NbMultinomial, n) - want).abs() < 1e-9);
    }

    #[test]
    fn reload_reproduces_enhanced_descriptors() {
        let tmp = TempDir::new().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let before = {
            let c = Catalog::open(tmp.path()).unwrap();
            for _ in 0..40 {
                let lo = rng.gen_range(0..300);
                let len = rng.gen_range(1..50);
                c.materialize(ModelKind::LinReg, r(lo, lo + len - 1), b"z")
                    .unwrap();
            }
            c.enhanced(ModelKind::LinReg)
        };
        let c = Catalog::open(tmp.path()).unwrap();
        assert_eq!(c.enhanced(ModelKind::LinReg), before);
        assert_eq!(c.model_count(), 40);
    }

    #[test]
    fn concurrent_readers_during_writes() {
        let (_tmp, c) = open_catalog();
        for i in 0..20u64 {
            c.materialize(ModelKind::LinReg, r(i * 10, i * 10 + 9), b"p")
                .unwrap();
        }
        let c = std::sync::Arc::new(c);
        let mut handles = Vec::new();
        for t in 0..4 {
            let c = c.clone();
            handles.push(std::thread::spawn(move || {
                for i in 0..50 {
                    let q = r((t * 13 + i) % 150, (t * 13 + i) % 150 + 30);
                    let _ = c.relevant_models(q, ModelKind::LinReg);
                    let _ = c.coverage(ModelKind::LinReg, 200);
                }
            }));
        }
        let writer = {
            let c = c.clone();
            std::thread::spawn(move || {
                for i in 20..40u64 {
                    c.materialize(ModelKind::LinReg, r(i * 10, i * 10 + 9), b"p")
                        .unwrap();
                }
            })
        };
        for h in handles {
            h.join().unwrap();
        }
        writer.join().unwrap();
        assert_eq!(c.model_count(), 40);
    }
}
