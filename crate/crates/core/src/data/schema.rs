use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Ground-truth role of a synthetic field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldRole {
    Informative,
    Noise,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSchema {
    pub field_id: usize,
    pub name: String,
    /// Number of distinct feature values in the field.
    pub cardinality: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<FieldRole>,
}

/// Ordered list of categorical fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaFile", into = "SchemaFile")]
pub struct DatasetSchema {
    fields: Vec<FieldSchema>,
}

// On-disk layout: a TOML array of tables, field ids implied by order.
#[derive(Serialize, Deserialize)]
struct SchemaFile {
    field: Vec<FieldEntry>,
}

#[derive(Serialize, Deserialize)]
struct FieldEntry {
    name: String,
    cardinality: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    role: Option<FieldRole>,
}

impl TryFrom<SchemaFile> for DatasetSchema {
    type Error = Error;

    fn try_from(file: SchemaFile) -> Result<Self> {
        let fields = file
            .field
            .into_iter()
            .enumerate()
            .map(|(field_id, e)| FieldSchema {
                field_id,
                name: e.name,
                cardinality: e.cardinality,
                role: e.role,
            })
            .collect();
        DatasetSchema::new(fields)
    }
}

impl From<DatasetSchema> for SchemaFile {
    fn from(schema: DatasetSchema) -> Self {
        SchemaFile {
            field: schema
                .fields
                .into_iter()
                .map(|f| FieldEntry {
                    name: f.name,
                    cardinality: f.cardinality,
                    role: f.role,
                })
                .collect(),
        }
    }
}

impl DatasetSchema {
    pub fn new(fields: Vec<FieldSchema>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::Data("schema must contain at least one field".into()));
        }
        for (i, f) in fields.iter().enumerate() {
            if f.field_id != i {
                return Err(Error::Data(format!(
                    "field ids must be dense and ordered: position {i} has id {}",
                    f.field_id
                )));
            }
            if f.cardinality == 0 {
                return Err(Error::Data(format!(
                    "field {i} ({}) has cardinality 0",
                    f.name
                )));
            }
            if u32::try_from(f.cardinality).is_err() {
                return Err(Error::Data(format!(
                    "field {i} cardinality exceeds u32 range"
                )));
            }
        }
        Ok(Self { fields })
    }

    /// Schema with fields named `f0..f{N-1}` and no roles.
    pub fn from_cardinalities(cardinalities: &[usize]) -> Result<Self> {
        Self::new(
            cardinalities
                .iter()
                .enumerate()
                .map(|(i, &c)| FieldSchema {
                    field_id: i,
                    name: format!("f{i}"),
                    cardinality: c,
                    role: None,
                })
                .collect(),
        )
    }

    pub fn fields(&self) -> &[FieldSchema] {
        &self.fields
    }

    pub fn field(&self, id: usize) -> Option<&FieldSchema> {
        self.fields.get(id)
    }

    /// N, the number of fields.
    pub fn num_fields(&self) -> usize {
        self.fields.len()
    }

    /// n, the total number of features over all fields.
    pub fn total_features(&self) -> usize {
        self.fields.iter().map(|f| f.cardinality).sum()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.fields.iter().map(|f| f.cardinality).collect()
    }

    /// Ids of fields tagged informative.
    pub fn informative_fields(&self) -> Vec<usize> {
        self.fields
            .iter()
            .filter(|f| f.role == Some(FieldRole::Informative))
            .map(|f| f.field_id)
            .collect()
    }

    pub(crate) fn push_field(&mut self, name: String, cardinality: usize) {
        let field_id = self.fields.len();
        self.fields.push(FieldSchema {
            field_id,
            name,
            cardinality,
            role: None,
        });
    }

    /// Hex SHA-256 over field names and cardinalities (roles excluded).
    pub fn hash(&self) -> String {
        let mut bytes = Vec::new();
        for f in &self.fields {
            bytes.extend_from_slice(f.name.as_bytes());
            bytes.push(0);
            bytes.extend_from_slice(&(f.cardinality as u64).to_le_bytes());
        }
        crate::sha256_hex(&bytes)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Data(format!("schema: {e}")))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes to TOML")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals() {
        let s = DatasetSchema::from_cardinalities(&[3, 5, 7]).unwrap();
        assert_eq!(s.num_fields(), 3);
        assert_eq!(s.total_features(), 15);
    }

    #[test]
    fn rejects_empty_and_zero_cardinality() {
        assert!(DatasetSchema::from_cardinalities(&[]).is_err());
        assert!(DatasetSchema::from_cardinalities(&[3, 0]).is_err());
    }

    #[test]
    fn toml_round_trip_with_roles() {
        let text = r#"
[[field]]
name = "gender"
cardinality = 2
role = "informative"

[[field]]
name = "site"
cardinality = 40
"#;
        let s = DatasetSchema::from_toml_str(text).unwrap();
        assert_eq!(s.field(0).unwrap().role, Some(FieldRole::Informative));
        assert_eq!(s.field(1).unwrap().role, None);
        assert_eq!(s.informative_fields(), vec![0]);
        let again = DatasetSchema::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn hash_ignores_roles() {
        let mut a = DatasetSchema::from_cardinalities(&[4, 9]).unwrap();
        let h = a.hash();
        a.fields[0].role = Some(FieldRole::Noise);
        assert_eq!(h, a.hash());
        let b = DatasetSchema::from_cardinalities(&[4, 10]).unwrap();
        assert_ne!(h, b.hash());
    }
}
