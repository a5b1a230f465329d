//! Vulnerability taxonomy and the label store loaded from CSV.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};

/// The fixed vulnerability taxonomy with per-tag severities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VulnTag {
    Reentrancy,
    TimeDependency,
    Erc20Transfer,
    GasConsumption,
    ImplicitVisibility,
    IntegerOverflow,
    IntegerUnderflow,
}

impl VulnTag {
    pub const ALL: [VulnTag; 7] = [
        VulnTag::Reentrancy,
        VulnTag::TimeDependency,
        VulnTag::Erc20Transfer,
        VulnTag::GasConsumption,
        VulnTag::ImplicitVisibility,
        VulnTag::IntegerOverflow,
        VulnTag::IntegerUnderflow,
    ];

    pub fn severity(self) -> u8 {
        match self {
            VulnTag::Reentrancy => 3,
            VulnTag::TimeDependency => 2,
            _ => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VulnTag::Reentrancy => "Reentrancy",
            VulnTag::TimeDependency => "TimeDependency",
            VulnTag::Erc20Transfer => "ERC20Transfer",
            VulnTag::GasConsumption => "GasConsumption",
            VulnTag::ImplicitVisibility => "ImplicitVisibility",
            VulnTag::IntegerOverflow => "IntegerOverflow",
            VulnTag::IntegerUnderflow => "IntegerUnderflow",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl std::fmt::Display for VulnTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Immutable map from (contract-file name, contract name) to vulnerability
/// tags. Duplicate rows deduplicate silently; unknown tags are rejected.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelStore {
    map: BTreeMap<(String, String), BTreeSet<VulnTag>>,
}

impl LabelStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, file: &str, contract: &str, tag: VulnTag) {
        self.map
            .entry((file.to_string(), contract.to_string()))
            .or_default()
            .insert(tag);
    }

    pub fn tags(&self, file: &str, contract: &str) -> BTreeSet<VulnTag> {
        self.map
            .get(&(file.to_string(), contract.to_string()))
            .cloned()
            .unwrap_or_default()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(String, String), &BTreeSet<VulnTag>)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Loads labels from a CSV file with header `file,contract,tag`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Labels {
                file: path.to_path_buf(),
                row: 0,
                reason: e.to_string(),
            })?;

        let headers = reader
            .headers()
            .map_err(|e| Error::Labels {
                file: path.to_path_buf(),
                row: 0,
                reason: e.to_string(),
            })?
            .clone();
        let expected = ["file", "contract", "tag"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Labels {
                file: path.to_path_buf(),
                row: 0,
                reason: format!("expected header \"file,contract,tag\", got {headers:?}"),
            });
        }

        let mut store = LabelStore::new();
        for (i, record) in reader.records().enumerate() {
            let row = i + 2; // 1-based, after the header
            let record = record.map_err(|e| Error::Labels {
                file: path.to_path_buf(),
                row,
                reason: e.to_string(),
            })?;
            if record.len() != 3 {
                return Err(Error::Labels {
                    file: path.to_path_buf(),
                    row,
                    reason: format!("expected 3 fields, got {}", record.len()),
                });
            }
            let tag = VulnTag::parse(&record[2]).ok_or_else(|| Error::Labels {
                file: path.to_path_buf(),
                row,
                reason: format!("unknown tag {:?}", &record[2]),
            })?;
            store.insert(&record[0], &record[1], tag);
        }
        Ok(store)
    }

    /// Renders the store back to CSV, one row per (file, contract, tag).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("file,contract,tag\n");
        for ((file, contract), tags) in &self.map {
            for tag in tags {
                out.push_str(&format!("{file},{contract},{tag}\n"));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_simple_row() {
        let f = write_csv("file,contract,tag\na.hex,main,Reentrancy\n");
        let store = LabelStore::load(f.path()).unwrap();
        assert_eq!(
            store.tags("a.hex", "main"),
            BTreeSet::from([VulnTag::Reentrancy])
        );
    }

    #[test]
    fn unknown_tag_rejected_with_row() {
        let f = write_csv("file,contract,tag\na.hex,main,Frontrunning\n");
        match LabelStore::load(f.path()).unwrap_err() {
            Error::Labels { row, reason, .. } => {
                assert_eq!(row, 2);
                assert!(reason.contains("Frontrunning"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_rows_deduplicate() {
        let f = write_csv("file,contract,tag\na.hex,main,Reentrancy\na.hex,main,Reentrancy\n");
        let store = LabelStore::load(f.path()).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.tags("a.hex", "main").len(), 1);
    }

    #[test]
    fn severities_are_fixed() {
        assert_eq!(VulnTag::Reentrancy.severity(), 3);
        assert_eq!(VulnTag::TimeDependency.severity(), 2);
        for tag in &VulnTag::ALL[2..] {
            assert_eq!(tag.severity(), 1);
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut store = LabelStore::new();
        store.insert("a", "a", VulnTag::IntegerOverflow);
        store.insert("b", "b", VulnTag::Reentrancy);
        store.insert("b", "b", VulnTag::GasConsumption);
        let f = write_csv(&store.to_csv());
        assert_eq!(LabelStore::load(f.path()).unwrap(), store);
    }
}
