//! Replacement fragments for scaffold-invariant perturbation.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::molgraph::{parse_smiles, MolecularGraph, SmilesError};

/// Largest fragment that keeps a replacement below five changed atoms.
pub const MAX_FRAGMENT_ATOMS: usize = 4;

const BUILTIN: &[(&str, usize)] = &[
    ("C", 0),
    ("CC", 0),
    ("CCC", 0),
    ("C(C)C", 0),
    ("C(C)(C)C", 0),
    ("O", 0),
    ("OC", 0),
    ("OCC", 0),
    ("N", 0),
    ("NC", 0),
    ("N(C)C", 0),
    ("F", 0),
    ("Cl", 0),
    ("Br", 0),
    ("I", 0),
    ("C#N", 0),
    ("C=O", 0),
    ("C(C)=O", 0),
    ("C(=O)O", 0),
    ("C(N)=O", 0),
    ("C(F)(F)F", 0),
    ("S", 0),
    ("SC", 0),
    ("C=C", 0),
    ("C#C", 0),
    ("[NH+](=O)[O-]", 0),
    ("NC=O", 0),
    ("CO", 0),
];

#[derive(Debug, Clone)]
pub struct Fragment {
    pub graph: MolecularGraph,
    pub attachment: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FragmentSource {
    Builtin,
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct FragmentPool {
    fragments: Vec<Fragment>,
    source: FragmentSource,
}

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("cannot read fragment file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected \"SMILES<TAB>attachment_index\"")]
    Format { line: usize },
    #[error("line {line}: {source}")]
    Smiles { line: usize, source: SmilesError },
    #[error("line {line}: fragment has {atoms} heavy atoms, at most {MAX_FRAGMENT_ATOMS} allowed")]
    TooLarge { line: usize, atoms: usize },
    #[error("line {line}: fragment contains a ring")]
    Cyclic { line: usize },
    #[error("line {line}: attachment index {index} out of range")]
    BadAttachment { line: usize, index: usize },
    #[error("line {line}: attachment atom has no free valence")]
    NoFreeValence { line: usize },
    #[error("fragment pool is empty")]
    Empty,
}

fn validate(smiles: &str, attachment: usize, line: usize) -> Result<Fragment, PoolError> {
    let graph = parse_smiles(smiles).map_err(|source| PoolError::Smiles { line, source })?;
    if graph.num_atoms() > MAX_FRAGMENT_ATOMS {
        return Err(PoolError::TooLarge {
            line,
            atoms: graph.num_atoms(),
        });
    }
    if graph.atoms().iter().any(|a| a.in_ring) {
        return Err(PoolError::Cyclic { line });
    }
    if attachment >= graph.num_atoms() {
        return Err(PoolError::BadAttachment {
            line,
            index: attachment,
        });
    }
    if graph.atom(attachment).explicit_h == 0 {
        return Err(PoolError::NoFreeValence { line });
    }
    Ok(Fragment { graph, attachment })
}

impl FragmentPool {
    /// Common small substituents, all attached through their first atom.
    pub fn builtin() -> Self {
        let fragments = BUILTIN
            .iter()
            .enumerate()
            .map(|(i, &(s, a))| validate(s, a, i + 1).expect("builtin fragments are valid"))
            .collect();
        FragmentPool {
            fragments,
            source: FragmentSource::Builtin,
        }
    }

    /// Validates `(smiles, attachment)` pairs; errors report 1-based positions.
    pub fn from_smiles(entries: &[(&str, usize)]) -> Result<Self, PoolError> {
        let fragments = entries
            .iter()
            .enumerate()
            .map(|(i, &(s, a))| validate(s, a, i + 1))
            .collect::<Result<Vec<_>, _>>()?;
        if fragments.is_empty() {
            return Err(PoolError::Empty);
        }
        Ok(FragmentPool {
            fragments,
            source: FragmentSource::Builtin,
        })
    }

    /// Parses "SMILES<TAB>attachment_index" lines; blank lines and '#'
    /// comments are skipped.
    pub fn parse(text: &str) -> Result<Vec<Fragment>, PoolError> {
        let mut fragments = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut fields = content.split('\t');
            let (Some(smiles), Some(index), None) = (fields.next(), fields.next(), fields.next())
            else {
                return Err(PoolError::Format { line });
            };
            let index: usize = index
                .trim()
                .parse()
                .map_err(|_| PoolError::Format { line })?;
            fragments.push(validate(smiles.trim(), index, line)?);
        }
        if fragments.is_empty() {
            return Err(PoolError::Empty);
        }
        Ok(fragments)
    }

    pub fn from_file(path: &Path) -> Result<Self, PoolError> {
        let text = fs::read_to_string(path)?;
        Ok(FragmentPool {
            fragments: Self::parse(&text)?,
            source: FragmentSource::File(path.to_path_buf()),
        })
    }

    pub fn fragments(&self) -> &[Fragment] {
        &self.fragments
    }

    pub fn source(&self) -> &FragmentSource {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.fragments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }
}

pub fn build_fragment_pool(source: &FragmentSource) -> Result<FragmentPool, PoolError> {
    match source {
        FragmentSource::Builtin => Ok(FragmentPool::builtin()),
        FragmentSource::File(p) => FragmentPool::from_file(p),
    }
}
