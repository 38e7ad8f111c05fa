use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, ProtectedAttr};
use crate::error::{Error, Result};

/// Column roles for a CSV file. Serialized as JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub label: String,
    pub protected: Vec<String>,
    pub features: Vec<String>,
    /// Privileged value per protected attribute.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub privileged: BTreeMap<String, String>,
    /// Feature columns that encode a sensitive attribute.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sensitive: Vec<String>,
    /// Optional per-record weight column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<String>,
}

impl Schema {
    pub fn from_json(text: &str) -> Result<Self> {
        let schema: Schema =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    /// The schema that [`write_csv`] produces for `ds`.
    pub fn for_dataset(ds: &Dataset) -> Self {
        Schema {
            label: ds.label_name().to_string(),
            protected: ds.protected().iter().map(|a| a.name.clone()).collect(),
            features: ds.feature_names().to_vec(),
            privileged: ds.privileged().clone(),
            sensitive: ds.sensitive_features().to_vec(),
            weight: ds.weights().map(|_| "weight".to_string()),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.label.is_empty() {
            return Err(Error::Schema("label column name is empty".into()));
        }
        if self.protected.is_empty() {
            return Err(Error::Schema("at least one protected column is required".into()));
        }
        if self.features.is_empty() {
            return Err(Error::Schema("at least one feature column is required".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        let roles = std::iter::once(&self.label)
            .chain(&self.protected)
            .chain(&self.features)
            .chain(&self.weight);
        for name in roles {
            if !seen.insert(name) {
                return Err(Error::Schema(format!("column {name} is assigned two roles")));
            }
        }
        for s in &self.sensitive {
            if !self.features.contains(s) {
                return Err(Error::Schema(format!(
                    "sensitive column {s} is not listed under features"
                )));
            }
        }
        for attr in self.privileged.keys() {
            if !self.protected.contains(attr) {
                return Err(Error::Schema(format!(
                    "privileged designation for {attr}, which is not a protected column"
                )));
            }
        }
        Ok(())
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema(format!("missing column {name}")))
}

/// Reads a headed, comma-separated UTF-8 file under the given column roles.
/// Row order is preserved; error rows are 1-based over data rows.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();

    let label_col = column_index(&headers, &schema.label)?;
    let feature_cols = schema
        .features
        .iter()
        .map(|f| column_index(&headers, f))
        .collect::<Result<Vec<_>>>()?;
    let protected_cols = schema
        .protected
        .iter()
        .map(|p| column_index(&headers, p))
        .collect::<Result<Vec<_>>>()?;
    let weight_col = schema
        .weight
        .as_deref()
        .map(|w| column_index(&headers, w))
        .transpose()?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut protected: Vec<Vec<String>> = vec![Vec::new(); protected_cols.len()];
    let mut weights = Vec::new();

    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let field = |col: usize| record.get(col).unwrap_or("").trim();

        labels.push(match field(label_col) {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::InvalidRecord {
                    row,
                    message: format!("label {:?} in column {} is not 0 or 1", other, schema.label),
                })
            }
        });
        for (&col, name) in feature_cols.iter().zip(&schema.features) {
            features.push(parse_finite(field(col)).ok_or_else(|| Error::InvalidRecord {
                row,
                message: format!("feature {name} value {:?} is not a finite number", field(col)),
            })?);
        }
        for (values, &col) in protected.iter_mut().zip(&protected_cols) {
            values.push(field(col).to_string());
        }
        if let Some(col) = weight_col {
            weights.push(parse_finite(field(col)).ok_or_else(|| Error::InvalidRecord {
                row,
                message: format!("weight value {:?} is not a finite number", field(col)),
            })?);
        }
    }

    let attrs = schema
        .protected
        .iter()
        .zip(protected)
        .map(|(name, values)| ProtectedAttr::new(name.clone(), values))
        .collect();
    let mut ds = Dataset::from_flat(features, schema.features.clone(), labels, attrs)?
        .with_label_name(schema.label.clone())
        .with_sensitive_features(schema.sensitive.clone())?;
    if weight_col.is_some() {
        ds = ds.with_weights(weights)?;
    }
    for (attr, value) in &schema.privileged {
        ds = ds.with_privileged(attr, value)?;
    }
    Ok(ds)
}

fn parse_finite(text: &str) -> Option<f64> {
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Writes `ds` in the layout described by [`Schema::for_dataset`]: features,
/// protected attributes, label, then the optional weight column.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<&str> = ds.feature_names().iter().map(String::as_str).collect();
    header.extend(ds.protected().iter().map(|a| a.name.as_str()));
    header.push(ds.label_name());
    if ds.weights().is_some() {
        header.push("weight");
    }
    writer.write_record(&header)?;

    for i in 0..ds.n_records() {
        let mut record: Vec<String> = ds.row(i).iter().map(|v| v.to_string()).collect();
        record.extend(ds.protected().iter().map(|a| a.values[i].clone()));
        record.push(ds.labels()[i].to_string());
        if let Some(w) = ds.weights() {
            record.push(w[i].to_string());
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads the first column of a headed CSV file as numbers.
pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    reader
        .records()
        .enumerate()
        .map(|(i, record)| {
            let record = record?;
            let text = record.get(0).unwrap_or("").trim();
            parse_finite(text).ok_or_else(|| Error::InvalidRecord {
                row: i + 1,
                message: format!("value {text:?} is not a finite number"),
            })
        })
        .collect()
}

/// Writes a single headed column.
pub fn write_vector<T: ToString>(path: impl AsRef<Path>, header: &str, values: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record([header])?;
    for v in values {
        writer.write_record([v.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::File::create(&path)
            .unwrap()
            .write_all(text.as_bytes())
            .unwrap();
        path
    }

    fn schema() -> Schema {
        Schema::from_json(r#"{"label": "y", "protected": ["sex"], "features": ["age"]}"#).unwrap()
    }

    #[test]
    fn loads_four_row_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "d.csv", "age,sex,y\n30,F,1\n41,M,0\n25,F,0\n52,M,1\n");
        let ds = load_csv(&path, &schema()).unwrap();
        assert_eq!(ds.n_records(), 4);
        assert_eq!(ds.n_features(), 1);
        assert_eq!(ds.column(0), vec![30.0, 41.0, 25.0, 52.0]);
        assert_eq!(ds.labels(), &[1, 0, 0, 1]);
        assert_eq!(ds.protected_values("sex").unwrap()[1], "M");
    }

    #[test]
    fn non_binary_label_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "d.csv", "age,sex,y\n30,F,1\n41,M,0\n25,F,2\n52,M,1\n");
        let err = load_csv(&path, &schema()).unwrap_err();
        assert!(matches!(err, Error::InvalidRecord { row: 3, .. }), "{err}");
        assert!(err.to_string().contains("row 3"));
    }

    #[test]
    fn unparsable_feature_and_missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "d.csv", "age,sex,y\n30,F,1\nold,M,0\n");
        assert!(matches!(
            load_csv(&path, &schema()).unwrap_err(),
            Error::InvalidRecord { row: 2, .. }
        ));
        let path = write_file(&dir, "e.csv", "age,gender,y\n30,F,1\n");
        let err = load_csv(&path, &schema()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        assert!(err.to_string().contains("sex"));
    }

    #[test]
    fn schema_requires_roles() {
        let err = Schema::from_json(r#"{"protected": ["sex"], "features": ["age"]}"#).unwrap_err();
        assert!(err.to_string().contains("label"), "{err}");
        assert!(Schema::from_json(r#"{"label": "y", "protected": [], "features": ["a"]}"#).is_err());
        assert!(Schema::from_json(r#"{"label": "y", "protected": ["s"], "features": []}"#).is_err());
        assert!(
            Schema::from_json(r#"{"label": "y", "protected": ["y"], "features": ["a"]}"#).is_err()
        );
    }

    #[test]
    fn round_trip_preserves_dataset() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 1000;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random::<f64>() * 200.0 - 100.0).collect())
            .collect();
        let labels = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let groups = (0..n)
            .map(|_| ["a", "b", "c"][rng.random_range(0..3)].to_string())
            .collect();
        let weights = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
        let ds = Dataset::new(
            rows,
            vec!["f0".into(), "f1".into(), "f2".into()],
            labels,
            vec![ProtectedAttr::new("g", groups)],
        )
        .unwrap()
        .with_weights(weights)
        .unwrap()
        .with_privileged("g", "c")
        .unwrap()
        .with_sensitive_features(vec!["f1".into()])
        .unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        write_csv(&ds, &path).unwrap();
        let schema = Schema::from_json(&Schema::for_dataset(&ds).to_json()).unwrap();
        let back = load_csv(&path, &schema).unwrap();
        assert_eq!(back, ds.with_label_name("label"));
    }
}
