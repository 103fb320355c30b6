use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::FeatureTable;
use crate::error::{Error, Result};

/// Disjoint train/test item id lists (`split.json`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitSpec {
    /// Checks disjointness and that every id exists in `table`.
    pub fn validate(&self, table: &FeatureTable) -> Result<()> {
        let train: HashSet<&str> = self.train.iter().map(String::as_str).collect();
        if let Some(id) = self.test.iter().find(|id| train.contains(id.as_str())) {
            return Err(Error::data(format!("id \"{id}\" is in both train and test")));
        }
        let known: HashSet<&str> = table.ids().iter().map(String::as_str).collect();
        if let Some(id) = self
            .train
            .iter()
            .chain(&self.test)
            .find(|id| !known.contains(id.as_str()))
        {
            return Err(Error::data(format!("split id \"{id}\" not in feature table")));
        }
        Ok(())
    }

    /// Split `table` into `(train, test)` tables, preserving split-list order.
    pub fn apply(&self, table: &FeatureTable) -> Result<(FeatureTable, FeatureTable)> {
        self.validate(table)?;
        let index: HashMap<&str, usize> = table
            .ids()
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let pick = |ids: &[String]| -> Vec<usize> { ids.iter().map(|id| index[id.as_str()]).collect() };
        Ok((table.select(&pick(&self.train)), table.select(&pick(&self.test))))
    }
}

pub fn load_split(path: &Path) -> Result<SplitSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_split(path: &Path, split: &SplitSpec) -> Result<()> {
    let text = serde_json::to_string_pretty(split)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn table() -> FeatureTable {
        let m = Array2::from_shape_vec((3, 1), vec![1.0, 2.0, 3.0]).unwrap();
        FeatureTable::new(vec!["a".into(), "b".into(), "c".into()], vec![0, 1, 0], m).unwrap()
    }

    #[test]
    fn apply_split() {
        let s = SplitSpec {
            train: vec!["c".into(), "a".into()],
            test: vec!["b".into()],
        };
        let (tr, te) = s.apply(&table()).unwrap();
        assert_eq!(tr.ids(), &["c", "a"]);
        assert_eq!(tr.row(0)[0], 3.0);
        assert_eq!(te.labels(), &[1]);
    }

    #[test]
    fn overlap_and_unknown_rejected() {
        let overlap = SplitSpec {
            train: vec!["a".into()],
            test: vec!["a".into()],
        };
        assert!(overlap.validate(&table()).is_err());
        let unknown = SplitSpec {
            train: vec!["z".into()],
            test: vec![],
        };
        assert!(unknown.validate(&table()).is_err());
    }

    #[test]
    fn unknown_json_field_rejected() {
        assert!(serde_json::from_str::<SplitSpec>(r#"{"train":[],"test":[],"x":1}"#).is_err());
    }
}
