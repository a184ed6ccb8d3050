use std::collections::HashMap;

use super::ChemError;

/// Task labels keyed by sample id. Absent cells are `None`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct LabelTable {
    pub tasks: Vec<String>,
    ids: Vec<String>,
    values: HashMap<String, Vec<Option<f64>>>,
}

impl LabelTable {
    pub fn get(&self, id: &str) -> Option<&[Option<f64>]> {
        self.values.get(id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Rows in file order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Option<f64>])> {
        self.ids.iter().map(|id| (id.as_str(), self.values[id].as_slice()))
    }
}

/// Reads an RFC-4180 label table. The header names the tasks after a leading
/// sample-id column; empty cells are absent labels.
pub fn load_labels(csv_bytes: &[u8]) -> Result<LabelTable, ChemError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(csv_bytes);
    let header = reader
        .headers()
        .map_err(|e| ChemError::Labels { line: 1, msg: e.to_string() })?
        .clone();
    if header.len() < 2 {
        return Err(ChemError::Labels { line: 1, msg: "header needs a sample id column and at least one task".into() });
    }
    let tasks: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut table = LabelTable { tasks, ..Default::default() };
    for record in reader.records() {
        let record = record.map_err(|e| ChemError::Labels {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let id = record.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(ChemError::Labels { line, msg: "empty sample id".into() });
        }
        let mut row = Vec::with_capacity(table.tasks.len());
        for (cell, task) in record.iter().skip(1).zip(&table.tasks) {
            if cell.is_empty() {
                row.push(None);
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(Some(v)),
                _ => {
                    return Err(ChemError::Labels { line, msg: format!("task {task:?}: non-numeric value {cell:?}") })
                }
            }
        }
        if table.values.contains_key(&id) {
            return Err(ChemError::DuplicateId(id));
        }
        table.ids.push(id.clone());
        table.values.insert(id, row);
    }
    Ok(table)
}
