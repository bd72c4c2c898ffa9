use std::path::Path;

use serde::Serialize;

use super::PipelineError;
use crate::chemfeat::MoleculeFeatures;
use crate::molgraph::{parse_smiles, MolecularGraph};

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub smiles: Vec<String>,
    pub molecules: Vec<MolecularGraph>,
    /// Aligned with `molecules`; `None` for pre-training corpora.
    pub labels: Option<Vec<f64>>,
}

/// A CSV row that did not become a molecule. `row` is the 1-based file
/// line, counting the header.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reject {
    pub row: usize,
    pub smiles: String,
    pub reason: String,
}

impl Dataset {
    /// Parses in-memory SMILES; the first failure is an error.
    pub fn from_smiles(
        name: &str,
        smiles: &[&str],
        labels: Option<Vec<f64>>,
    ) -> Result<Self, PipelineError> {
        if let Some(l) = &labels {
            if l.len() != smiles.len() {
                return Err(PipelineError::Config(format!(
                    "{} labels for {} molecules",
                    l.len(),
                    smiles.len()
                )));
            }
        }
        let molecules = smiles
            .iter()
            .map(|s| parse_smiles(s).map_err(|e| PipelineError::Smiles(format!("{s}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Dataset {
            name: name.to_string(),
            smiles: smiles.iter().map(|s| s.to_string()).collect(),
            molecules,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.molecules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.molecules.is_empty()
    }

    pub fn labels(&self) -> Result<&[f64], PipelineError> {
        self.labels.as_deref().ok_or(PipelineError::Unlabeled)
    }

    pub fn features(&self) -> Vec<MoleculeFeatures> {
        self.molecules
            .iter()
            .map(MoleculeFeatures::compute)
            .collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            smiles: idx.iter().map(|&i| self.smiles[i].clone()).collect(),
            molecules: idx.iter().map(|&i| self.molecules[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
        }
    }
}

/// Reads a headered CSV. A missing label column yields an unlabelled
/// dataset; unparsable SMILES and labels become rejects.
pub fn load_dataset(
    path: &Path,
    smiles_column: &str,
    label_column: Option<&str>,
) -> Result<(Dataset, Vec<Reject>), PipelineError> {
    let file = std::fs::File::open(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let smiles_idx = col(smiles_column)
        .ok_or_else(|| PipelineError::MissingColumn(smiles_column.to_string()))?;
    let label_idx = label_column.and_then(|name| {
        let found = col(name);
        if found.is_none() {
            log::warn!(
                "no label column {name:?} in {}; dataset is unlabelled",
                path.display()
            );
        }
        found
    });
    let mut ds = Dataset {
        name: path
            .file_stem()
            .map_or_else(String::new, |s| s.to_string_lossy().into_owned()),
        smiles: Vec::new(),
        molecules: Vec::new(),
        labels: label_idx.map(|_| Vec::new()),
    };
    let mut rejects = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let smiles = record.get(smiles_idx).unwrap_or("").trim().to_string();
        let mut reject = |reason: String| {
            rejects.push(Reject {
                row,
                smiles: smiles.clone(),
                reason,
            })
        };
        let label = match label_idx {
            None => None,
            Some(i) => match record.get(i).unwrap_or("").trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Some(v),
                _ => {
                    reject(format!("bad label {:?}", record.get(i).unwrap_or("")));
                    continue;
                }
            },
        };
        match parse_smiles(&smiles) {
            Ok(g) => {
                ds.molecules.push(g);
                ds.smiles.push(smiles);
                if let (Some(labels), Some(v)) = (ds.labels.as_mut(), label) {
                    labels.push(v);
                }
            }
            Err(e) => reject(e.to_string()),
        }
    }
    if ds.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    Ok((ds, rejects))
}

pub fn write_rejects(path: &Path, rejects: &[Reject]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rejects {
        w.serialize(r)?;
    }
    if rejects.is_empty() {
        w.write_record(["row", "smiles", "reason"])?;
    }
    w.flush().map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}
