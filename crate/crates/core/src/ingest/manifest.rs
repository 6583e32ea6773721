use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use walkdir::WalkDir;

use super::read_image;
use crate::error::{Error, Result};
use crate::rng;

const HEADER_PREFIX: &str = "# dfsmc-manifest v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
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
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Dataset(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleRecord {
    /// Relative to the manifest root.
    pub image_path: PathBuf,
    pub family_name: String,
    pub family_index: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    /// Directory the record paths are relative to.
    pub root: PathBuf,
    pub records: Vec<SampleRecord>,
    pub family_count: usize,
    pub seed: u64,
    pub ratio: f64,
}

/// `<stem>.aug<k>.pgm` names are reserved for augmentation output.
fn is_augmented_copy(path: &Path) -> bool {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default();
    stem.rsplit_once(".aug")
        .is_some_and(|(_, k)| !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()))
}

fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("pgm" | "png")
    )
}

/// Family names in index order.
fn family_names(records: &[SampleRecord]) -> Vec<String> {
    records
        .iter()
        .map(|r| r.family_name.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

impl DatasetManifest {
    /// One record per image under `root/<family>/`, all marked train.
    /// Augmented copies written by an earlier run are skipped.
    pub fn build(root: &Path) -> Result<Self> {
        let mut families: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
        let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(root, e))?;
            if !entry
                .file_type()
                .map_err(|e| Error::io(entry.path(), e))?
                .is_dir()
            {
                continue;
            }
            let name = entry.file_name().to_string_lossy().into_owned();
            let mut files = Vec::new();
            for f in WalkDir::new(entry.path()).sort_by_file_name() {
                let f = f.map_err(|e| Error::Dataset(e.to_string()))?;
                if f.file_type().is_file()
                    && is_image_file(f.path())
                    && !is_augmented_copy(f.path())
                {
                    let rel = f.path().strip_prefix(root).expect("walk stays under root");
                    files.push(rel.to_path_buf());
                }
            }
            if files.is_empty() {
                return Err(Error::EmptyFamily(name));
            }
            families.insert(name, files);
        }
        if families.is_empty() {
            return Err(Error::Dataset(format!(
                "{} has no family directories",
                root.display()
            )));
        }
        let records: Vec<SampleRecord> = families
            .into_iter()
            .enumerate()
            .flat_map(|(index, (name, files))| {
                files.into_iter().map(move |image_path| SampleRecord {
                    image_path,
                    family_name: name.clone(),
                    family_index: index,
                    split: Split::Train,
                })
            })
            .collect();
        let manifest = DatasetManifest {
            root: root.to_path_buf(),
            family_count: family_names(&records).len(),
            records,
            seed: 0,
            ratio: 1.0,
        };
        manifest.validate()?;
        manifest.check_images()?;
        Ok(manifest)
    }

    /// Structural checks: dense lexicographic family indices, unique paths.
    pub fn validate(&self) -> Result<()> {
        let names = family_names(&self.records);
        if names.len() != self.family_count {
            return Err(Error::Dataset(format!(
                "family_count {} but {} distinct families",
                self.family_count,
                names.len()
            )));
        }
        for r in &self.records {
            if names.get(r.family_index) != Some(&r.family_name) {
                return Err(Error::Dataset(format!(
                    "family {:?} has index {}, expected lexicographic rank",
                    r.family_name, r.family_index
                )));
            }
        }
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(&r.image_path) {
                return Err(Error::Dataset(format!(
                    "duplicate path {}",
                    r.image_path.display()
                )));
            }
        }
        Ok(())
    }

    /// Decode every referenced image.
    pub fn check_images(&self) -> Result<()> {
        self.records
            .par_iter()
            .try_for_each(|r| read_image(&self.path_of(r)).map(|_| ()))
    }

    pub fn path_of(&self, record: &SampleRecord) -> PathBuf {
        self.root.join(&record.image_path)
    }

    pub fn family_names(&self) -> Vec<String> {
        family_names(&self.records)
    }

    pub fn split_records(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split_records(split).count()
    }

    /// Serialize with record paths relative to `manifest_dir`.
    pub fn to_text(&self, manifest_dir: &Path) -> Result<String> {
        let root = std::path::absolute(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let dir = std::path::absolute(manifest_dir).map_err(|e| Error::io(manifest_dir, e))?;
        let rel_root = pathdiff::diff_paths(&root, &dir).unwrap_or(root);
        let mut out = format!("{HEADER_PREFIX} seed={} ratio={}\n", self.seed, self.ratio);
        for r in &self.records {
            let p = rel_root.join(&r.image_path);
            let p = p
                .to_str()
                .ok_or_else(|| Error::Dataset(format!("non UTF-8 path {}", p.display())))?;
            if p.contains(['\t', '\n']) || r.family_name.contains(['\t', '\n']) {
                return Err(Error::Dataset(format!("tab or newline in record {p}")));
            }
            out.push_str(&format!(
                "{p}\t{}\t{}\t{}\n",
                r.family_name, r.family_index, r.split
            ));
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        crate::pipeline::write_atomic(path, self.to_text(dir)?.as_bytes())
    }

    pub fn parse(text: &str, root: &Path) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Dataset("empty manifest".into()))?;
        let rest = header
            .strip_prefix(HEADER_PREFIX)
            .ok_or_else(|| Error::Dataset(format!("bad manifest header {header:?}")))?;
        let mut seed = None;
        let mut ratio = None;
        for kv in rest.split_whitespace() {
            match kv.split_once('=') {
                Some(("seed", v)) => seed = v.parse::<u64>().ok(),
                Some(("ratio", v)) => ratio = v.parse::<f64>().ok(),
                _ => return Err(Error::Dataset(format!("bad header field {kv:?}"))),
            }
        }
        let (Some(seed), Some(ratio)) = (seed, ratio) else {
            return Err(Error::Dataset("header needs seed and ratio".into()));
        };
        let mut records = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [path, family, index, split] = fields[..] else {
                return Err(Error::Dataset(format!(
                    "line {}: expected 4 tab-separated fields",
                    n + 2
                )));
            };
            records.push(SampleRecord {
                image_path: PathBuf::from(path),
                family_name: family.to_string(),
                family_index: index
                    .parse()
                    .map_err(|_| Error::Dataset(format!("line {}: bad index", n + 2)))?,
                split: split.parse()?,
            });
        }
        let manifest = DatasetManifest {
            root: root.to_path_buf(),
            family_count: family_names(&records).len(),
            records,
            seed,
            ratio,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        Self::parse(&text, root)
    }
}

/// Number of train samples a family of `n` gets at `ratio`.
pub fn train_count(ratio: f64, n: usize) -> usize {
    // the epsilon absorbs products such as 0.29 * 100 = 28.999999999999996
    ((ratio * n as f64) + 1e-9).floor() as usize
}

/// Per-family hold-out split. Record order is preserved; only split tags
/// change.
pub fn stratified_split(
    manifest: &DatasetManifest,
    ratio: f64,
    seed: u64,
) -> Result<DatasetManifest> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!(
            "split ratio must be in (0, 1], got {ratio}"
        )));
    }
    manifest.validate()?;
    let mut out = manifest.clone();
    out.seed = seed;
    out.ratio = ratio;
    let mut by_family: Vec<Vec<usize>> = vec![Vec::new(); manifest.family_count];
    for (i, r) in manifest.records.iter().enumerate() {
        by_family[r.family_index].push(i);
    }
    for (family, mut members) in by_family.into_iter().enumerate() {
        let mut rng = rng::stream(seed, &format!("split/{family}"));
        members.shuffle(&mut rng);
        let n_train = train_count(ratio, members.len());
        if n_train == 0 {
            log::warn!(
                "family {} has {} sample(s); it contributes no training data",
                manifest.family_names()[family],
                members.len()
            );
        }
        for (rank, idx) in members.into_iter().enumerate() {
            out.records[idx].split = if rank < n_train {
                Split::Train
            } else {
                Split::Test
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(counts: &[(&str, usize)]) -> DatasetManifest {
        let mut names: Vec<&str> = counts.iter().map(|c| c.0).collect();
        names.sort();
        let mut records = Vec::new();
        for &(name, n) in counts {
            let index = names.iter().position(|&x| x == name).unwrap();
            for i in 0..n {
                records.push(SampleRecord {
                    image_path: PathBuf::from(format!("{name}/{i:05}.pgm")),
                    family_name: name.to_string(),
                    family_index: index,
                    split: Split::Train,
                });
            }
        }
        DatasetManifest {
            root: PathBuf::from("."),
            family_count: names.len(),
            records,
            seed: 0,
            ratio: 1.0,
        }
    }

    fn counts(m: &DatasetManifest, family: usize) -> (usize, usize) {
        let rs = m.records.iter().filter(|r| r.family_index == family);
        let (tr, te): (Vec<_>, Vec<_>) = rs.partition(|r| r.split == Split::Train);
        (tr.len(), te.len())
    }

    #[test]
    fn floor_counts() {
        let m = synthetic(&[("Allaple.A", 2949), ("Skintrim.N", 80)]);
        let s = stratified_split(&m, 0.6, 42).unwrap();
        assert_eq!(counts(&s, 0), (1769, 1180));
        assert_eq!(counts(&s, 1), (48, 32));
    }

    #[test]
    fn full_ratio_keeps_everything_in_train() {
        let m = synthetic(&[("a", 7), ("b", 3)]);
        let s = stratified_split(&m, 1.0, 1).unwrap();
        assert_eq!(s.count(Split::Test), 0);
    }

    #[test]
    fn singleton_family_gets_no_train() {
        let m = synthetic(&[("a", 1), ("b", 5)]);
        let s = stratified_split(&m, 0.6, 1).unwrap();
        assert_eq!(counts(&s, 0), (0, 1));
        assert_eq!(counts(&s, 1), (3, 2));
    }

    #[test]
    fn bad_ratio() {
        let m = synthetic(&[("a", 2)]);
        assert!(stratified_split(&m, 0.0, 1).is_err());
        assert!(stratified_split(&m, 1.5, 1).is_err());
    }

    #[test]
    fn text_round_trip() {
        let m = stratified_split(&synthetic(&[("x", 3), ("y", 2)]), 0.6, 9).unwrap();
        let text = m.to_text(Path::new(".")).unwrap();
        assert!(text.starts_with("# dfsmc-manifest v1 seed=9 ratio=0.6\n"));
        let back = DatasetManifest::parse(&text, Path::new(".")).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_non_lexicographic_indices() {
        let mut m = synthetic(&[("a", 1), ("b", 1)]);
        m.records[0].family_index = 1;
        m.records[1].family_index = 0;
        assert!(m.validate().is_err());
    }
}
