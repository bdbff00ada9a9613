//! JSON-lines corpus files and their split manifests.
//!
//! One record per line:
//!
//! ```json
//! {"case_id":"c1","image_width":512,"image_height":512,"report_text":null,
//!  "split":"train","fixations":[{"x_px":10.5,"y_px":20.0,"duration_ms":180.0}]}
//! ```
//!
//! A manifest may sit next to the corpus as `<corpus>.manifest.json`. When
//! present it must satisfy `train + test = total` and list exactly the cases
//! in the corpus with matching split tags.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use gazebench_core::{Fixation, Scanpath};
use gazebench_model::container::write_atomic;

use crate::error::{CliError, Context, Result};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(CliError::Validation(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixationRecord {
    x_px: f64,
    y_px: f64,
    duration_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseRecord {
    case_id: String,
    image_width: u32,
    image_height: u32,
    #[serde(default)]
    report_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
    fixations: Vec<FixationRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusCase {
    pub scanpath: Scanpath,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub case_id: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format_version: u32,
    pub dataset_name: String,
    pub total: usize,
    pub train: usize,
    pub test: usize,
    #[serde(default)]
    pub cases: Vec<ManifestEntry>,
}

impl CorpusManifest {
    /// Manifest describing `cases`, whose split tags must all be set.
    pub fn for_cases(dataset_name: &str, cases: &[CorpusCase]) -> Result<Self> {
        let entries = cases
            .iter()
            .map(|c| {
                let split = c.split.ok_or_else(|| {
                    CliError::Validation(format!("case '{}' has no split tag", c.scanpath.case_id()))
                })?;
                Ok(ManifestEntry { case_id: c.scanpath.case_id().to_string(), split })
            })
            .collect::<Result<Vec<_>>>()?;
        let train = entries.iter().filter(|e| e.split == Split::Train).count();
        Ok(Self {
            format_version: MANIFEST_FORMAT_VERSION,
            dataset_name: dataset_name.to_string(),
            total: entries.len(),
            train,
            test: entries.len() - train,
            cases: entries,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(CliError::Validation(format!("manifest '{}': {m}", self.dataset_name)));
        if self.format_version != MANIFEST_FORMAT_VERSION {
            return fail(format!("unsupported format version {}", self.format_version));
        }
        if self.train + self.test != self.total {
            return fail(format!(
                "train + test = {} + {} = {} does not equal total {}",
                self.train,
                self.test,
                self.train + self.test,
                self.total
            ));
        }
        if self.cases.len() != self.total {
            return fail(format!("lists {} cases but total is {}", self.cases.len(), self.total));
        }
        let tagged_train = self.cases.iter().filter(|c| c.split == Split::Train).count();
        if tagged_train != self.train || self.cases.len() - tagged_train != self.test {
            return fail(format!(
                "split tags give {} train / {} test, counts say {} / {}",
                tagged_train,
                self.cases.len() - tagged_train,
                self.train,
                self.test
            ));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = self.cases.iter().find(|c| !seen.insert(c.case_id.as_str())) {
            return fail(format!("case '{}' listed twice", dup.case_id));
        }
        Ok(())
    }

    /// Checks that the manifest describes exactly `cases`.
    pub fn check_cases(&self, cases: &[CorpusCase]) -> Result<()> {
        self.validate()?;
        let listed: BTreeMap<&str, Split> = self.cases.iter().map(|c| (c.case_id.as_str(), c.split)).collect();
        let present: BTreeSet<&str> = cases.iter().map(|c| c.scanpath.case_id()).collect();
        let missing: Vec<&str> = listed.keys().filter(|id| !present.contains(*id)).copied().collect();
        let extra: Vec<&str> = present.iter().filter(|id| !listed.contains_key(*id)).copied().collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(CliError::Validation(format!(
                "manifest and corpus disagree: missing from corpus {missing:?}, not in manifest {extra:?}"
            )));
        }
        for c in cases {
            let expected = listed[c.scanpath.case_id()];
            if let Some(split) = c.split {
                if split != expected {
                    return Err(CliError::Validation(format!(
                        "case '{}' is tagged {split} but the manifest says {expected}",
                        c.scanpath.case_id()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).context(format!("reading {}", path.display()))?;
        let manifest: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(path, text.as_bytes())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub cases: Vec<CorpusCase>,
    pub manifest: Option<CorpusManifest>,
}

impl Corpus {
    pub fn scanpaths(&self) -> impl Iterator<Item = &Scanpath> {
        self.cases.iter().map(|c| &c.scanpath)
    }

    /// Cases tagged with `split`; untagged cases are not included.
    pub fn split(&self, split: Split) -> Vec<&CorpusCase> {
        self.cases.iter().filter(|c| c.split == Some(split)).collect()
    }

    pub fn get(&self, case_id: &str) -> Option<&CorpusCase> {
        self.cases.iter().find(|c| c.scanpath.case_id() == case_id)
    }
}

pub fn manifest_path(corpus: &Path) -> PathBuf {
    let mut name = corpus.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    corpus.with_file_name(name)
}

/// Loads a corpus and, if one exists, its sidecar manifest.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let sidecar = manifest_path(path);
    let manifest = if sidecar.exists() { Some(CorpusManifest::load(&sidecar)?) } else { None };
    load_corpus_with_manifest(path, manifest)
}

pub fn load_corpus_with_manifest(path: &Path, manifest: Option<CorpusManifest>) -> Result<Corpus> {
    let text = fs::read_to_string(path).context(format!("reading {}", path.display()))?;
    let cases = parse_corpus(&text).context(path.display())?;
    if let Some(m) = &manifest {
        m.check_cases(&cases).context(path.display())?;
    }
    Ok(Corpus { cases, manifest })
}

pub fn parse_corpus(text: &str) -> Result<Vec<CorpusCase>> {
    let mut cases = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let at = |m: String| CliError::Validation(format!("line {line_no}: {m}"));
        let record: CaseRecord = serde_json::from_str(line).map_err(|e| at(e.to_string()))?;
        let pixels: Vec<(f64, f64, f64)> = record
            .fixations
            .iter()
            .map(|f| (f.x_px, f.y_px, f.duration_ms))
            .collect();
        let scanpath = Scanpath::from_pixels(&record.case_id, &pixels, (record.image_width, record.image_height))
            .map_err(|e| at(e.to_string()))?
            .with_report(record.report_text);
        if !seen.insert(record.case_id.clone()) {
            return Err(at(format!("duplicate case_id '{}'", record.case_id)));
        }
        cases.push(CorpusCase { scanpath, split: record.split });
    }
    if cases.is_empty() {
        return Err(CliError::Validation("no records".into()));
    }
    Ok(cases)
}

/// Pixel coordinate that divides back to exactly `x`, when one exists.
///
/// Such a coordinate exists whenever `x` itself came from a pixel value,
/// which holds for every loaded corpus and for [`snap_to_pixels`] output.
fn to_pixels(x: f64, extent: u32) -> f64 {
    let w = f64::from(extent);
    let px = x * w;
    let (mut up, mut down) = (px, px);
    for _ in 0..4 {
        for p in [up, down] {
            if p / w == x && (0.0..=w).contains(&p) {
                return p;
            }
        }
        up = up.next_up();
        down = down.next_down();
    }
    px
}

/// Re-derives normalized coordinates from pixel positions so the scanpath
/// survives a write and reload bit for bit.
pub fn snap_to_pixels(s: &Scanpath) -> Result<Scanpath> {
    let (w, h) = (f64::from(s.image_width()), f64::from(s.image_height()));
    let pixels: Vec<(f64, f64, f64)> = s
        .fixations()
        .iter()
        .map(|f| ((f.x() * w).clamp(0.0, w), (f.y() * h).clamp(0.0, h), f.duration()))
        .collect();
    Ok(Scanpath::from_pixels(s.case_id(), &pixels, s.image_dims())?.with_report(s.report_text().map(str::to_string)))
}

fn to_record(case: &CorpusCase) -> CaseRecord {
    let s = &case.scanpath;
    CaseRecord {
        case_id: s.case_id().to_string(),
        image_width: s.image_width(),
        image_height: s.image_height(),
        report_text: s.report_text().map(str::to_string),
        split: case.split,
        fixations: s
            .fixations()
            .iter()
            .map(|f: &Fixation| FixationRecord {
                x_px: to_pixels(f.x(), s.image_width()),
                y_px: to_pixels(f.y(), s.image_height()),
                duration_ms: f.duration(),
            })
            .collect(),
    }
}

pub fn format_corpus(cases: &[CorpusCase]) -> String {
    let mut out = String::new();
    for c in cases {
        out.push_str(&serde_json::to_string(&to_record(c)).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Writes the corpus atomically, and the manifest sidecar if given.
pub fn write_corpus(path: &Path, cases: &[CorpusCase], manifest: Option<&CorpusManifest>) -> Result<()> {
    if cases.is_empty() {
        return Err(CliError::Validation("refusing to write a corpus with no records".into()));
    }
    if let Some(m) = manifest {
        m.check_cases(cases)?;
    }
    write_atomic(path, format_corpus(cases).as_bytes())?;
    if let Some(m) = manifest {
        m.save(&manifest_path(path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn case(id: &str, split: Option<Split>) -> CorpusCase {
        let s = Scanpath::from_pixels(id, &[(10.0, 20.0, 100.0), (30.0, 5.0, 250.0)], (100, 50)).unwrap();
        CorpusCase { scanpath: s, split }
    }

    #[test]
    fn parses_records_and_normalizes() {
        let text = r#"{"case_id":"a","image_width":200,"image_height":100,"fixations":[{"x_px":50,"y_px":25,"duration_ms":300}]}"#;
        let cases = parse_corpus(text).unwrap();
        let f = cases[0].scanpath.fixations()[0];
        assert_eq!((f.x(), f.y(), f.duration()), (0.25, 0.25, 300.0));
        assert_eq!(cases[0].split, None);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let good = r#"{"case_id":"a","image_width":10,"image_height":10,"fixations":[]}"#;
        let bad = r#"{"case_id":"b","image_width":10,"image_height":10,"fixations":[{"x_px":11,"y_px":1,"duration_ms":5}]}"#;
        let err = parse_corpus(&format!("{good}\n\n{bad}\n")).unwrap_err().to_string();
        assert!(err.starts_with("line 3:"), "{err}");
        let err = parse_corpus(&format!("{good}\n{{\"case_id\":1}}")).unwrap_err().to_string();
        assert!(err.starts_with("line 2:"), "{err}");
        let err = parse_corpus(&format!("{good}\n{good}")).unwrap_err().to_string();
        assert!(err.contains("duplicate"), "{err}");
    }

    #[test]
    fn empty_file_has_no_records() {
        assert_eq!(parse_corpus("").unwrap_err().to_string(), "no records");
        assert_eq!(parse_corpus("\n  \n").unwrap_err().to_string(), "no records");
    }

    fn manifest(total: usize, train: usize, test: usize) -> CorpusManifest {
        let cases = (0..total)
            .map(|i| ManifestEntry {
                case_id: format!("c{i}"),
                split: if i < train { Split::Train } else { Split::Test },
            })
            .collect();
        CorpusManifest { format_version: 1, dataset_name: "d".into(), total, train, test, cases }
    }

    #[test]
    fn manifest_counts_must_add_up() {
        manifest(10, 7, 3).validate().unwrap();
        let err = manifest(10, 7, 4).validate().unwrap_err().to_string();
        assert!(err.contains("does not equal total"), "{err}");
        let mut m = manifest(10, 7, 3);
        m.cases[0].split = Split::Test;
        assert!(m.validate().is_err());
        let mut m = manifest(3, 2, 1);
        m.cases[1].case_id = "c0".into();
        assert!(m.validate().is_err());
    }

    #[test]
    fn manifest_must_match_corpus() {
        let cases = vec![case("c0", Some(Split::Train)), case("c1", None)];
        let mut m = manifest(2, 1, 1);
        m.check_cases(&cases).unwrap();
        m.cases[1].case_id = "zz".into();
        assert!(m.check_cases(&cases).is_err());
        let tagged_wrong = vec![case("c0", Some(Split::Test)), case("c1", None)];
        assert!(manifest(2, 1, 1).check_cases(&tagged_wrong).is_err());
    }

    #[test]
    fn write_refuses_inconsistent_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let cases = vec![case("c0", Some(Split::Train)), case("c1", Some(Split::Test))];
        let mut m = CorpusManifest::for_cases("d", &cases).unwrap();
        m.total = 3;
        assert!(write_corpus(&path, &cases, Some(&m)).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn file_round_trip_with_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let cases = vec![case("c0", Some(Split::Train)), case("c1", Some(Split::Test))];
        let m = CorpusManifest::for_cases("d", &cases).unwrap();
        write_corpus(&path, &cases, Some(&m)).unwrap();
        let loaded = load_corpus(&path).unwrap();
        assert_eq!(loaded.cases, cases);
        assert_eq!(loaded.manifest, Some(m));
        assert_eq!(loaded.split(Split::Test).len(), 1);
    }

    proptest! {
        #[test]
        fn snapped_scanpaths_survive_a_round_trip(
            w in 1u32..5000, h in 1u32..5000,
            pts in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64, 0.5..2000.0f64), 0..20),
        ) {
            let fixations = pts.iter().map(|&(x, y, t)| Fixation::new(x, y, t).unwrap()).collect();
            let raw = Scanpath::new("p", w, h, fixations).unwrap().with_report(Some("a \"quoted\"\nline".into()));
            let s = snap_to_pixels(&raw).unwrap();
            for (a, b) in s.fixations().iter().zip(raw.fixations()) {
                prop_assert!((a.x() - b.x()).abs() < 1e-12 && (a.y() - b.y()).abs() < 1e-12);
            }
            let cases = vec![CorpusCase { scanpath: s, split: Some(Split::Test) }];
            let text = format_corpus(&cases);
            let back = parse_corpus(&text).unwrap();
            prop_assert_eq!(&back, &cases);
            prop_assert_eq!(format_corpus(&back), text);
        }
    }
}
