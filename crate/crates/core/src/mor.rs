//! Mean Opinion Rank studies: randomized presentation manifests and
//! aggregation of collected rankings.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::seed::{rng_from_seed, sub_seed};

pub const RANK_CSV_HEADER: [&str; 4] = ["participant", "image", "method", "rank"];

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyMethod {
    /// Anonymized code shown to participants: `A`, `B`, ...
    pub code: String,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub code: String,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyItem {
    pub image: String,
    /// Presentation order.
    pub candidates: Vec<Candidate>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyManifest {
    pub study_id: String,
    pub shuffle_seed: u64,
    pub methods: Vec<StudyMethod>,
    pub items: Vec<StudyItem>,
}

impl StudyManifest {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self).map_err(|e| Error::Encode(e.to_string()))?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::atomic_write(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fsutil::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::parse(path.display().to_string(), e.line(), e.to_string()))
    }

    /// Real method name behind a presentation code.
    pub fn method_name(&self, code: &str) -> Option<&str> {
        self.methods.iter().find(|m| m.code == code).map(|m| m.name.as_str())
    }
}

/// Presentation code of the `i`-th method: `A`..`Z`, then `AA`, `AB`, ...
pub fn method_code(mut i: usize) -> String {
    let mut code = Vec::new();
    loop {
        code.push(b'A' + (i % 26) as u8);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    code.reverse();
    String::from_utf8(code).expect("ASCII")
}

fn find_candidate(dir: &Path, image: &str) -> Option<PathBuf> {
    IMAGE_EXTENSIONS
        .iter()
        .map(|ext| dir.join(format!("{image}.{ext}")))
        .find(|p| p.is_file())
}

/// Builds a study over `image_ids` for the methods `(name, output_dir)`.
/// Each image's candidate order is an independent shuffle seeded from
/// `seed` and the image id.
pub fn build_study(study_id: &str, image_ids: &[String], methods: &[(String, PathBuf)], seed: u64) -> Result<StudyManifest> {
    if image_ids.is_empty() {
        return Err(Error::arg("study needs at least one image"));
    }
    if methods.is_empty() {
        return Err(Error::arg("study needs at least one method"));
    }
    let mut names = BTreeSet::new();
    for (name, _) in methods {
        if !names.insert(name) {
            return Err(Error::arg(format!("method {name} listed twice")));
        }
    }
    let mut ids = BTreeSet::new();
    for id in image_ids {
        if !ids.insert(id) {
            return Err(Error::arg(format!("image {id} listed twice")));
        }
    }
    let study_methods: Vec<StudyMethod> = methods
        .iter()
        .enumerate()
        .map(|(i, (name, _))| StudyMethod {
            code: method_code(i),
            name: name.clone(),
        })
        .collect();
    let mut items = Vec::with_capacity(image_ids.len());
    for image in image_ids {
        let mut candidates = Vec::with_capacity(methods.len());
        for (m, (name, dir)) in study_methods.iter().zip(methods) {
            let file = find_candidate(dir, image).ok_or_else(|| {
                Error::Validation(format!("image {image}: no file for method {name} in {}", dir.display()))
            })?;
            candidates.push(Candidate {
                code: m.code.clone(),
                file: file.to_string_lossy().replace('\\', "/"),
            });
        }
        let mut rng = rng_from_seed(sub_seed(seed, &format!("mor.item:{image}")));
        candidates.shuffle(&mut rng);
        items.push(StudyItem {
            image: image.clone(),
            candidates,
        });
    }
    Ok(StudyManifest {
        study_id: study_id.to_string(),
        shuffle_seed: seed,
        methods: study_methods,
        items,
    })
}

/// One participant's ranking of every method for one image; rank 1 is best.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankRecord {
    pub participant: String,
    pub image: String,
    pub ranks: BTreeMap<String, u32>,
}

impl RankRecord {
    fn error(&self, reason: impl Into<String>) -> Error {
        Error::Rank {
            participant: self.participant.clone(),
            image: self.image.clone(),
            reason: reason.into(),
        }
    }

    /// Checks that the record ranks exactly `methods` with a permutation of
    /// `1..=methods.len()`.
    pub fn validate(&self, methods: &[String]) -> Result<()> {
        for m in methods {
            if !self.ranks.contains_key(m) {
                return Err(self.error(format!("method {m} is not ranked")));
            }
        }
        if let Some(extra) = self.ranks.keys().find(|k| !methods.contains(k)) {
            return Err(self.error(format!("unknown method {extra}")));
        }
        let m = methods.len() as u32;
        let mut seen = vec![false; methods.len()];
        for (method, &rank) in &self.ranks {
            if rank == 0 || rank > m {
                return Err(self.error(format!("rank {rank} for {method} is outside 1..={m}")));
            }
            if std::mem::replace(&mut seen[rank as usize - 1], true) {
                return Err(self.error(format!("rank {rank} is assigned more than once")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MorSummary {
    /// Mean rank per method, in the order the methods were given.
    pub mor: Vec<(String, f64)>,
    pub record_count: usize,
}

impl MorSummary {
    pub fn get(&self, method: &str) -> Option<f64> {
        self.mor.iter().find(|(m, _)| m == method).map(|(_, v)| *v)
    }
}

/// Mean rank of each method over all records. Every record must be a
/// complete strict ranking of `methods`, and each (participant, image) pair
/// may appear only once.
pub fn aggregate_mor(records: &[RankRecord], methods: &[String]) -> Result<MorSummary> {
    if methods.is_empty() {
        return Err(Error::arg("no methods to aggregate"));
    }
    if records.is_empty() {
        return Err(Error::Validation("no rank records".into()));
    }
    let mut seen = BTreeSet::new();
    let mut sums = vec![0u64; methods.len()];
    for rec in records {
        rec.validate(methods)?;
        if !seen.insert((&rec.participant, &rec.image)) {
            return Err(rec.error("duplicate record"));
        }
        for (i, m) in methods.iter().enumerate() {
            sums[i] += rec.ranks[m] as u64;
        }
    }
    let n = records.len();
    Ok(MorSummary {
        mor: methods
            .iter()
            .zip(sums)
            .map(|(m, s)| (m.clone(), s as f64 / n as f64))
            .collect(),
        record_count: n,
    })
}

/// Methods mentioned by `records`, sorted.
pub fn methods_in(records: &[RankRecord]) -> Vec<String> {
    let set: BTreeSet<&String> = records.iter().flat_map(|r| r.ranks.keys()).collect();
    set.into_iter().cloned().collect()
}

#[derive(Deserialize)]
struct RankRow {
    participant: String,
    image: String,
    method: String,
    rank: u32,
}

/// Parses rank CSV (`participant,image,method,rank`) into records grouped by
/// (participant, image) in order of first appearance. Rows are not checked
/// for completeness here; see [`aggregate_mor`].
pub fn parse_rank_csv(text: &str, source_name: &str) -> Result<Vec<RankRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(source_name, 1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != RANK_CSV_HEADER {
        return Err(Error::parse(
            source_name,
            1,
            format!("expected header {}", RANK_CSV_HEADER.join(",")),
        ));
    }
    let mut index: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut records: Vec<RankRecord> = Vec::new();
    for row in rdr.deserialize::<RankRow>() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(source_name, line, e.to_string())
        })?;
        let key = (row.participant.clone(), row.image.clone());
        let slot = *index.entry(key).or_insert_with(|| {
            records.push(RankRecord {
                participant: row.participant.clone(),
                image: row.image.clone(),
                ranks: BTreeMap::new(),
            });
            records.len() - 1
        });
        let rec = &mut records[slot];
        if rec.ranks.insert(row.method.clone(), row.rank).is_some() {
            return Err(rec.error(format!("method {} is ranked more than once", row.method)));
        }
    }
    Ok(records)
}

pub fn write_rank_csv(records: &[RankRecord]) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let enc = |e: csv::Error| Error::Encode(e.to_string());
    wtr.write_record(RANK_CSV_HEADER).map_err(enc)?;
    for rec in records {
        let mut rows: Vec<_> = rec.ranks.iter().collect();
        rows.sort_by_key(|(m, r)| (**r, (*m).clone()));
        for (method, rank) in rows {
            wtr.write_record([&rec.participant, &rec.image, method, &rank.to_string()])
                .map_err(enc)?;
        }
    }
    wtr.into_inner().map_err(|e| Error::Encode(e.to_string()))
}

pub fn load_rank_csv(path: &Path) -> Result<Vec<RankRecord>> {
    let bytes = fsutil::read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::parse(path.display().to_string(), 0, e.to_string()))?;
    parse_rank_csv(&text, &path.display().to_string())
}
