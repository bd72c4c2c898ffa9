//! Atomic masses, valence table and the functional-group detector table,
//! loaded from the bundled `data/chem_tables.json`.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::Deserialize;

use crate::molgraph::Element;

const TABLES_JSON: &str = include_str!("../../data/chem_tables.json");

#[derive(Debug, Deserialize)]
pub struct GroupEntry {
    pub name: String,
    pub pattern: String,
}

#[derive(Debug, Deserialize)]
pub struct ChemTables {
    masses: BTreeMap<String, f64>,
    valences: BTreeMap<String, Vec<u8>>,
    pub functional_groups: Vec<GroupEntry>,
}

impl ChemTables {
    pub fn mass(&self, symbol: &str) -> f64 {
        self.masses[symbol]
    }

    pub fn valences(&self, element: Element) -> &[u8] {
        &self.valences[element.symbol()]
    }
}

pub fn chem_tables() -> &'static ChemTables {
    static TABLES: OnceLock<ChemTables> = OnceLock::new();
    TABLES.get_or_init(|| {
        serde_json::from_str(TABLES_JSON).expect("bundled chem_tables.json is valid")
    })
}
