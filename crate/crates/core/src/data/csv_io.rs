use std::io::Write;
use std::path::Path;

use super::{DataMatrix, FeatureSchema};
use crate::error::{Error, Result};

/// Load a comma-separated file whose header matches `schema` (in any order).
pub fn load_csv(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<DataMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, schema)
}

/// Load a CSV taking every column except `label` as a feature, in file order.
pub fn load_csv_any(path: impl AsRef<Path>, label: Option<&str>) -> Result<DataMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header = data_lines(&text).next().ok_or(Error::EmptyDataset)?;
    let features: Vec<&str> =
        header.split(',').map(str::trim).filter(|c| Some(*c) != label).collect();
    let label = label.filter(|l| header.split(',').any(|c| c.trim() == *l));
    let schema = FeatureSchema::new(features, label)?;
    parse_csv(&text, &schema)
}

fn data_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(|l| l.trim_end_matches('\r')).filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
}

pub(crate) fn parse_csv(text: &str, schema: &FeatureSchema) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Format(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(Error::EmptyDataset);
    }

    let mut expected: Vec<&str> = schema.feature_names().iter().map(String::as_str).collect();
    expected.extend(schema.label_name());
    let missing: Vec<String> =
        expected.iter().filter(|e| !header.iter().any(|h| h == *e)).map(|s| s.to_string()).collect();
    let extra: Vec<String> = header.iter().filter(|h| !expected.contains(&h.as_str())).cloned().collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::HeaderMismatch { missing, extra });
    }

    let feature_pos: Vec<usize> = schema
        .feature_names()
        .iter()
        .map(|f| header.iter().position(|h| h == f).expect("checked above"))
        .collect();
    let label_pos = schema.label_name().map(|l| header.iter().position(|h| h == l).expect("checked above"));

    let d = schema.feature_count();
    let mut values = Vec::new();
    let mut labels = label_pos.map(|_| Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("row {}: {e}", row + 1)))?;
        if record.len() != header.len() {
            return Err(Error::Format(format!(
                "row {}: expected {} fields, found {}",
                row + 1,
                header.len(),
                record.len()
            )));
        }
        for (j, &pos) in feature_pos.iter().enumerate() {
            let cell = &record[pos];
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: row + 1,
                column: schema.feature_names()[j].clone(),
                value: cell.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row: row + 1, column: j });
            }
            values.push(v);
        }
        if let (Some(labels), Some(pos)) = (&mut labels, label_pos) {
            labels.push(record[pos].to_owned());
        }
    }
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    debug_assert_eq!(values.len() % d, 0);
    DataMatrix::new(schema.clone(), values, labels)
}

/// Write `data` as CSV: header row, then one line per row. Floats use the
/// shortest representation that round-trips.
pub fn write_csv(path: impl AsRef<Path>, data: &DataMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    write_csv_to(&mut out, data).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_csv_to(out: &mut impl Write, data: &DataMatrix) -> std::io::Result<()> {
    let mut header = data.schema().feature_names().join(",");
    if let Some(l) = data.schema().label_name() {
        header.push(',');
        header.push_str(l);
    }
    writeln!(out, "{header}")?;
    for (i, row) in data.rows().enumerate() {
        let mut line = row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        if let Some(labels) = data.labels() {
            line.push(',');
            line.push_str(&labels[i]);
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn crop_schema() -> FeatureSchema {
        FeatureSchema::new(["N", "P", "K", "temperature", "humidity", "ph", "rainfall"], Some("label")).unwrap()
    }

    #[test]
    fn parses_crop_row() {
        let text = "N,P,K,temperature,humidity,ph,rainfall,label\n90,42,43,20.879,82.002,6.502,202.935,rice\n";
        let m = parse_csv(text, &crop_schema()).unwrap();
        assert_eq!(m.n_rows(), 1);
        assert_eq!(m.row(0), &[90.0, 42.0, 43.0, 20.879, 82.002, 6.502, 202.935]);
        assert_eq!(m.labels().unwrap(), &["rice".to_string()]);
    }

    #[test]
    fn header_order_is_irrelevant() {
        let text = "label,rainfall,ph,humidity,temperature,K,P,N\nmaize,102.266,6.931,71.574,26.1,17,44,61\n";
        let m = parse_csv(text, &crop_schema()).unwrap();
        assert_eq!(m.row(0), &[61.0, 44.0, 17.0, 26.1, 71.574, 6.931, 102.266]);
    }

    #[test]
    fn header_only_is_empty() {
        let text = "N,P,K,temperature,humidity,ph,rainfall,label\n";
        assert!(matches!(parse_csv(text, &crop_schema()), Err(Error::EmptyDataset)));
        assert!(matches!(parse_csv("", &crop_schema()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn header_mismatch_lists_columns() {
        let text = "N,P,K,temperature,humidity,pH,rainfall,label\n1,2,3,4,5,6,7,x\n";
        match parse_csv(text, &crop_schema()) {
            Err(Error::HeaderMismatch { missing, extra }) => {
                assert_eq!(missing, vec!["ph".to_string()]);
                assert_eq!(extra, vec!["pH".to_string()]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_cell_reports_position() {
        let text = "N,P,K,temperature,humidity,ph,rainfall,label\n1,2,3,4,5,6,7,x\n1,2,abc,4,5,6,7,y\n";
        match parse_csv(text, &crop_schema()) {
            Err(Error::Parse { row, column, value }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "K", "abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite() {
        let text = "N,P,K,temperature,humidity,ph,rainfall,label\n1,2,NaN,4,5,6,7,x\n";
        assert!(matches!(parse_csv(text, &crop_schema()), Err(Error::NonFinite { row: 1, column: 2 })));
    }

    #[test]
    fn missing_file() {
        let err = load_csv("/definitely/not/here.csv", &crop_schema()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let text = "N,P,K,temperature,humidity,ph,rainfall,label\n90,42,43,20.879,82.002,6.502,202.935,rice\n13,60,25,17.1636,20.595,5.685,128.256,kidney beans\n";
        let m = parse_csv(text, &crop_schema()).unwrap();
        write_csv(&path, &m).unwrap();
        assert_eq!(load_csv(&path, &crop_schema()).unwrap(), m);
        assert_eq!(load_csv_any(&path, Some("label")).unwrap(), m);
    }
}
