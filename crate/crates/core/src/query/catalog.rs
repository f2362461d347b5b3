use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::encoding::{Row, Schema};
use crate::oracle::Relation;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub schema: Schema,
    pub rows: Vec<Row>,
}

/// Named base relations. Rows are kept in load order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub relations: BTreeMap<String, Table>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a relation under its schema name. Rejects repeated names, rows
    /// that do not fit, repeated rows, and repeated keys.
    pub fn insert(&mut self, schema: Schema, rows: Vec<Row>) -> Result<()> {
        schema.validate()?;
        if self.relations.contains_key(&schema.name) {
            return Err(Error::Schema(format!("relation {} is already in the catalog", schema.name)));
        }
        let mut seen = BTreeSet::new();
        let mut keys = BTreeSet::new();
        for (i, r) in rows.iter().enumerate() {
            schema.check_row(r)?;
            if !seen.insert(r) {
                return Err(Error::Data(format!("relation {}: row {} repeats {r}", schema.name, i + 1)));
            }
            if schema.key_prefix > 0 && !keys.insert(&r.0[..schema.key_prefix]) {
                return Err(Error::DuplicateKey { row: i + 1 });
            }
        }
        self.relations.insert(schema.name.clone(), Table { schema, rows });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Table> {
        self.relations.get(name)
    }

    pub fn relation(&self, name: &str) -> Option<Relation> {
        self.get(name).map(|t| Relation { schema: t.schema.clone(), rows: t.rows.iter().cloned().collect() })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Catalog = serde_json::from_str(text).map_err(|e| Error::Data(format!("catalog: {e}")))?;
        let mut cat = Catalog::new();
        for (name, t) in raw.relations {
            if name != t.schema.name {
                return Err(Error::Data(format!("catalog entry {name} holds relation {}", t.schema.name)));
            }
            cat.insert(t.schema, t.rows)?;
        }
        Ok(cat)
    }
}
