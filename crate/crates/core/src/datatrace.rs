//! Requirements-to-dataset traceability.
//!
//! Data requirements are grouped into six dimensions (airport, weather, time
//! of day, distance, elevation, lateral offset). Dataset files are tagged
//! with requirement ids through sidecar files (`<file name>.tags`, one id per
//! line) and summarised in a textual manifest:
//!
//! ```text
//! <sha256-hex> <byte_size> <path> <tag,tag,...>
//! ```
//!
//! one line per file, sorted by path, LF endings, `-` when a file has no tags.
//! The manifest is the versioned pointer to the binary data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::{Error, Result};

pub const SIDECAR_SUFFIX: &str = ".tags";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Dimension {
    Airport,
    Weather,
    TimeOfDay,
    Distance,
    Elevation,
    LateralOffset,
}

impl Dimension {
    pub const ALL: [Dimension; 6] = [
        Dimension::Airport,
        Dimension::Weather,
        Dimension::TimeOfDay,
        Dimension::Distance,
        Dimension::Elevation,
        Dimension::LateralOffset,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Airport => "AIRPORT",
            Dimension::Weather => "WEATHER",
            Dimension::TimeOfDay => "TIME_OF_DAY",
            Dimension::Distance => "DISTANCE",
            Dimension::Elevation => "ELEVATION",
            Dimension::LateralOffset => "LATERAL_OFFSET",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::InvalidValue(format!("unknown dimension `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub id: String,
    pub dimension: Dimension,
    pub description: String,
}

const BUILTIN_CATALOG: &str = "\
# Operational-condition data requirements for the runway sign datasets.
KSFO AIRPORT San Francisco International Airport
KBOS AIRPORT Boston Logan International Airport
KSAN AIRPORT San Diego International Airport
FAIR WEATHER Fair weather
RAIN WEATHER Rainy weather
SNOW WEATHER Snowy weather
FOG WEATHER Foggy weather
MRNG TIME_OF_DAY Morning
DUSK TIME_OF_DAY Dusk
AFTN TIME_OF_DAY Afternoon
DAWN TIME_OF_DAY Dawn
DS10 DISTANCE 10 to 12 meters
DS12 DISTANCE 12 to 14 meters
DS14 DISTANCE 14 to 16 meters
EL10 ELEVATION 1.0 to 1.3 meters above ground level
EL13 ELEVATION 1.3 to 1.6 meters above ground level
EL16 ELEVATION 1.6 to 1.9 meters above ground level
LO00 LATERAL_OFFSET 0 to 0.7 meters lateral offset from the sign center line
LO07 LATERAL_OFFSET 0.7 to 1.4 meters lateral offset from the sign center line
LO14 LATERAL_OFFSET 1.4 to 2 meters lateral offset from the sign center line
";

pub fn builtin_catalog() -> Vec<Requirement> {
    parse_catalog(BUILTIN_CATALOG, "<builtin>").expect("builtin catalog is well formed")
}

/// Parse `<id> <DIMENSION> <description...>` lines; `#` starts a comment line.
pub fn parse_catalog(text: &str, source: &str) -> Result<Vec<Requirement>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(3, char::is_whitespace);
        let id = parts.next().unwrap_or_default();
        let dim = parts
            .next()
            .ok_or_else(|| Error::parse(source, idx + 1, "missing dimension"))?;
        let dimension = dim
            .parse()
            .map_err(|e: Error| Error::parse(source, idx + 1, e.to_string()))?;
        if id.contains(',') {
            return Err(Error::parse(
                source,
                idx + 1,
                format!("requirement id `{id}` contains a comma"),
            ));
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateId(id.to_string()));
        }
        out.push(Requirement {
            id: id.to_string(),
            dimension,
            description: parts.next().unwrap_or_default().trim().to_string(),
        });
    }
    Ok(out)
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Vec<Requirement>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_catalog(&text, &path.display().to_string())
}

pub fn write_catalog(reqs: &[Requirement]) -> String {
    reqs.iter()
        .map(|r| format!("{} {} {}\n", r.id, r.dimension, r.description))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataItem {
    pub path: String,
    pub content_hash: String,
    pub byte_size: u64,
    pub tags: BTreeSet<String>,
}

fn hash_file(path: &Path) -> Result<(String, u64)> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    let mut size = 0u64;
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        size += n as u64;
        hasher.update(&buf[..n]);
    }
    Ok((hex::encode(hasher.finalize()), size))
}

fn parse_sidecar(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut tags = BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let tag = raw.trim();
        if tag.is_empty() || tag.starts_with('#') {
            continue;
        }
        if tag.contains(|c: char| c.is_whitespace() || c == ',') {
            return Err(Error::parse(
                path.display().to_string(),
                idx + 1,
                format!("malformed tag `{tag}`: one requirement id per line"),
            ));
        }
        tags.insert(tag.to_string());
    }
    Ok(tags)
}

fn relative_path(root: &Path, path: &Path) -> Result<String> {
    let rel = path.strip_prefix(root).unwrap_or(path);
    let parts: Vec<String> = rel
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    let joined = parts.join("/");
    if joined.contains(char::is_whitespace) {
        return Err(Error::InvalidValue(format!(
            "path `{joined}` contains whitespace and cannot be written to a manifest"
        )));
    }
    Ok(joined)
}

/// Hash every regular file under `root` and attach the tags from its sidecar.
///
/// Sidecars are not themselves manifest entries. A sidecar without a data
/// file next to it is an error.
pub fn build_manifest(root: impl AsRef<Path>) -> Result<Vec<DataItem>> {
    let root = root.as_ref();
    let mut data_files = BTreeMap::new();
    let mut sidecars = BTreeMap::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into())
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = relative_path(root, entry.path())?;
        match rel.strip_suffix(SIDECAR_SUFFIX) {
            Some(target) => sidecars.insert(target.to_string(), entry.into_path()),
            None => data_files.insert(rel, entry.into_path()),
        };
    }
    if let Some(orphan) = sidecars.keys().find(|k| !data_files.contains_key(*k)) {
        return Err(Error::InvalidValue(format!(
            "sidecar `{orphan}{SIDECAR_SUFFIX}` has no matching data file"
        )));
    }
    data_files
        .into_iter()
        .map(|(rel, abs)| {
            let (content_hash, byte_size) = hash_file(&abs)?;
            let tags = match sidecars.get(&rel) {
                Some(sidecar) => parse_sidecar(sidecar)?,
                None => BTreeSet::new(),
            };
            Ok(DataItem {
                path: rel,
                content_hash,
                byte_size,
                tags,
            })
        })
        .collect()
}

/// Render the manifest text. Items are sorted by path.
pub fn write_manifest(items: &[DataItem]) -> String {
    let mut sorted: Vec<&DataItem> = items.iter().collect();
    sorted.sort_by(|a, b| a.path.cmp(&b.path));
    let mut out = String::new();
    for item in sorted {
        let tags = if item.tags.is_empty() {
            "-".to_string()
        } else {
            item.tags.iter().cloned().collect::<Vec<_>>().join(",")
        };
        let _ = writeln!(
            out,
            "{} {} {} {}",
            item.content_hash, item.byte_size, item.path, tags
        );
    }
    out
}

pub fn parse_manifest(text: &str, source: &str) -> Result<Vec<DataItem>> {
    let mut items = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: &str| Error::parse(source, idx + 1, m.to_string());
        let fields: Vec<&str> = line.split(' ').collect();
        let [hash, size, path, tags] = fields.as_slice() else {
            return Err(err("expected `<sha256> <size> <path> <tags>`"));
        };
        if hash.len() != 64
            || !hash
                .chars()
                .all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase())
        {
            return Err(err("content hash must be 64 lowercase hex characters"));
        }
        let byte_size = size
            .parse()
            .map_err(|_| err("byte size is not an integer"))?;
        let tags = if *tags == "-" {
            BTreeSet::new()
        } else {
            tags.split(',').map(str::to_string).collect()
        };
        items.push(DataItem {
            path: path.to_string(),
            content_hash: hash.to_string(),
            byte_size,
            tags,
        });
    }
    Ok(items)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<DataItem>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementRow {
    pub id: String,
    pub dimension: Dimension,
    pub count: usize,
    pub items: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRow {
    pub path: String,
    pub requirements: Vec<String>,
}

/// Requirement-to-item links and their transpose. Only catalog ids appear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMatrix {
    pub requirements: Vec<RequirementRow>,
    pub items: Vec<ItemRow>,
}

impl TraceMatrix {
    pub fn row(&self, requirement: &str) -> Option<&RequirementRow> {
        self.requirements.iter().find(|r| r.id == requirement)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UntracedTag {
    pub tag: String,
    pub items: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionGap {
    pub path: String,
    pub missing: Vec<Dimension>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionOverlap {
    pub path: String,
    pub dimension: Dimension,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub counts: Vec<(String, usize)>,
    pub uncovered: Vec<String>,
    pub untraced_tags: Vec<UntracedTag>,
    pub incomplete_items: Vec<DimensionGap>,
    /// Items carrying more than one tag of the same dimension. Advisory only.
    pub warnings: Vec<DimensionOverlap>,
}

pub fn trace(catalog: &[Requirement], manifest: &[DataItem]) -> (TraceMatrix, CoverageReport) {
    let dims: BTreeMap<&str, Dimension> = catalog
        .iter()
        .map(|r| (r.id.as_str(), r.dimension))
        .collect();
    let mut items: Vec<&DataItem> = manifest.iter().collect();
    items.sort_by(|a, b| a.path.cmp(&b.path));

    let mut rows: BTreeMap<&str, Vec<String>> = catalog
        .iter()
        .map(|r| (r.id.as_str(), Vec::new()))
        .collect();
    let mut item_rows = Vec::with_capacity(items.len());
    let mut untraced: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut incomplete = Vec::new();
    let mut warnings = Vec::new();
    let catalog_dims: BTreeSet<Dimension> = catalog.iter().map(|r| r.dimension).collect();

    for item in items {
        let mut known = Vec::new();
        let mut per_dim: BTreeMap<Dimension, Vec<String>> = BTreeMap::new();
        for tag in &item.tags {
            match dims.get(tag.as_str()) {
                Some(&dim) => {
                    rows.get_mut(tag.as_str())
                        .expect("catalog id")
                        .push(item.path.clone());
                    known.push(tag.clone());
                    per_dim.entry(dim).or_default().push(tag.clone());
                }
                None => untraced
                    .entry(tag.clone())
                    .or_default()
                    .push(item.path.clone()),
            }
        }
        let missing: Vec<Dimension> = catalog_dims
            .iter()
            .filter(|d| !per_dim.contains_key(d))
            .copied()
            .collect();
        if !missing.is_empty() {
            incomplete.push(DimensionGap {
                path: item.path.clone(),
                missing,
            });
        }
        for (dimension, tags) in per_dim {
            if tags.len() > 1 {
                warnings.push(DimensionOverlap {
                    path: item.path.clone(),
                    dimension,
                    tags,
                });
            }
        }
        item_rows.push(ItemRow {
            path: item.path.clone(),
            requirements: known,
        });
    }

    let requirements: Vec<RequirementRow> = catalog
        .iter()
        .map(|r| {
            let items = rows.remove(r.id.as_str()).unwrap_or_default();
            RequirementRow {
                id: r.id.clone(),
                dimension: r.dimension,
                count: items.len(),
                items,
            }
        })
        .collect();
    let report = CoverageReport {
        counts: requirements
            .iter()
            .map(|r| (r.id.clone(), r.count))
            .collect(),
        uncovered: requirements
            .iter()
            .filter(|r| r.count == 0)
            .map(|r| r.id.clone())
            .collect(),
        untraced_tags: untraced
            .into_iter()
            .map(|(tag, items)| UntracedTag { tag, items })
            .collect(),
        incomplete_items: incomplete,
        warnings,
    };
    (
        TraceMatrix {
            requirements,
            items: item_rows,
        },
        report,
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Collision {
    pub content_hash: String,
    pub paths_a: Vec<String>,
    pub paths_b: Vec<String>,
}

/// Content hashes present in both manifests; empty means the datasets share no file.
pub fn check_independence(a: &[DataItem], b: &[DataItem]) -> Vec<Collision> {
    let index = |m: &[DataItem]| {
        let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for item in m {
            map.entry(item.content_hash.clone())
                .or_default()
                .push(item.path.clone());
        }
        for paths in map.values_mut() {
            paths.sort();
        }
        map
    };
    let (ia, mut ib) = (index(a), index(b));
    ia.into_iter()
        .filter_map(|(hash, paths_a)| {
            ib.remove(&hash).map(|paths_b| Collision {
                content_hash: hash,
                paths_a,
                paths_b,
            })
        })
        .collect()
}

/// Plain-text traceability matrix: one row per item, one column per requirement.
pub fn render_matrix(matrix: &TraceMatrix) -> String {
    let ids: Vec<&str> = matrix.requirements.iter().map(|r| r.id.as_str()).collect();
    let width = matrix
        .items
        .iter()
        .map(|i| i.path.len())
        .max()
        .unwrap_or(4)
        .max(4);
    let mut out = String::new();
    let _ = write!(out, "{:width$}", "item");
    for id in &ids {
        let _ = write!(out, " {id:>4}");
    }
    out.push('\n');
    for item in &matrix.items {
        let _ = write!(out, "{:width$}", item.path);
        for id in &ids {
            let mark = if item.requirements.iter().any(|r| r == id) {
                "x"
            } else {
                "."
            };
            let _ = write!(out, " {:>w$}", mark, w = id.len().max(4));
        }
        out.push('\n');
    }
    let _ = write!(out, "{:width$}", "total");
    for r in &matrix.requirements {
        let _ = write!(out, " {:>w$}", r.count, w = r.id.len().max(4));
    }
    out.push('\n');
    out
}

/// Plain-text coverage histogram with gap listings.
pub fn render_coverage(report: &CoverageReport) -> String {
    let mut out = String::new();
    let max = report.counts.iter().map(|c| c.1).max().unwrap_or(0).max(1);
    for (id, count) in &report.counts {
        let bar = "#".repeat((count * 40).div_ceil(max));
        let _ = writeln!(out, "{id:<8} {count:>5} {bar}");
    }
    let list = |v: Vec<&str>| {
        if v.is_empty() {
            "none".to_string()
        } else {
            v.join(", ")
        }
    };
    let _ = writeln!(
        out,
        "uncovered: {}",
        list(report.uncovered.iter().map(String::as_str).collect())
    );
    let _ = writeln!(
        out,
        "untraced tags: {}",
        list(
            report
                .untraced_tags
                .iter()
                .map(|t| t.tag.as_str())
                .collect()
        )
    );
    let _ = writeln!(
        out,
        "items missing a dimension: {}",
        report.incomplete_items.len()
    );
    for gap in &report.incomplete_items {
        let dims: Vec<&str> = gap.missing.iter().map(|d| d.as_str()).collect();
        let _ = writeln!(out, "  {} -> {}", gap.path, dims.join(", "));
    }
    for w in &report.warnings {
        let _ = writeln!(
            out,
            "warning: {} has {} tags in {}: {}",
            w.path,
            w.tags.len(),
            w.dimension,
            w.tags.join(", ")
        );
    }
    out
}
