use std::collections::HashMap;

use super::Dataset;
use crate::error::{Error, Result};
use crate::model::{DataUnit, UnitPartition};

/// Splits `ds` into independent units.
///
/// Without `unit_col` every row is its own unit. With it, rows sharing a key
/// form one unit and units appear in first-appearance order of their key.
/// An empty dataset is rejected since a partition needs m ≥ 1.
pub fn partition_units(ds: &Dataset, unit_col: Option<&str>) -> Result<UnitPartition> {
    if ds.n_rows() == 0 {
        return Err(Error::Argument("dataset has no rows".into()));
    }
    let Some(col) = unit_col else {
        let units = (0..ds.n_rows())
            .map(|r| DataUnit::new(r.to_string(), ds.take_rows(&[r])))
            .collect::<Result<Vec<_>>>()?;
        return UnitPartition::new(units);
    };
    let column = ds
        .column(col)
        .ok_or_else(|| Error::schema(col, "unit column not found"))?;

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for r in 0..ds.n_rows() {
        let key = column.key(r);
        match index.get(&key) {
            Some(&g) => groups[g].1.push(r),
            None => {
                index.insert(key.clone(), groups.len());
                groups.push((key, vec![r]));
            }
        }
    }
    let units = groups
        .into_iter()
        .map(|(key, rows)| DataUnit::new(key, ds.take_rows(&rows)))
        .collect::<Result<Vec<_>>>()?;
    UnitPartition::new(units)
}
