//! CSV dataset ingestion.
//!
//! UTF-8 with a header row. The label column maps to contiguous integers by
//! first appearance; categorical columns keep string identity through
//! per-column code books; everything else must parse as a finite real.
//! Any missing or unparseable cell rejects the whole file, citing its
//! location. No imputation.

use std::path::Path;

use localicl_core::{Dataset, Tensor};

use crate::error::{CliError, Result};

pub fn ingest_csv(
    path: &Path,
    label_col: &str,
    cat_cols: &[String],
    c_max: usize,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::data(format!("{}: header: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();

    let label_idx = headers
        .iter()
        .position(|h| h == label_col)
        .ok_or_else(|| CliError::data(format!("{}: no column named '{label_col}'", path.display())))?;
    let mut cat_idx = Vec::new();
    for c in cat_cols {
        let idx = headers
            .iter()
            .position(|h| h == c)
            .ok_or_else(|| CliError::data(format!("{}: no column named '{c}'", path.display())))?;
        if idx == label_idx {
            return Err(CliError::data(format!(
                "{}: '{c}' is the label column, not a feature",
                path.display()
            )));
        }
        cat_idx.push(idx);
    }

    let feature_idx: Vec<usize> = (0..headers.len()).filter(|&i| i != label_idx).collect();
    let cat_mask: Vec<bool> = feature_idx.iter().map(|i| cat_idx.contains(i)).collect();

    let mut label_codes: Vec<String> = Vec::new();
    let mut cat_codes: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    let mut rows: Vec<f64> = Vec::new();
    let mut labels: Vec<u32> = Vec::new();

    for (row_num, record) in reader.records().enumerate() {
        let record = record
            .map_err(|e| CliError::data(format!("{}: row {}: {e}", path.display(), row_num + 1)))?;
        if record.len() != headers.len() {
            return Err(CliError::data(format!(
                "{}: row {}: {} cells, expected {}",
                path.display(),
                row_num + 1,
                record.len(),
                headers.len()
            )));
        }
        for (col, cell) in record.iter().enumerate() {
            let place = || format!("{}: row {}, column '{}'", path.display(), row_num + 1, headers[col]);
            if cell.is_empty() {
                return Err(CliError::data(format!("{}: missing value", place())));
            }
            if col == label_idx {
                let code = match label_codes.iter().position(|c| c == cell) {
                    Some(c) => c,
                    None => {
                        label_codes.push(cell.to_string());
                        label_codes.len() - 1
                    }
                };
                labels.push(code as u32);
            } else if cat_idx.contains(&col) {
                let codes = &mut cat_codes[col];
                let code = match codes.iter().position(|c| c == cell) {
                    Some(c) => c,
                    None => {
                        codes.push(cell.to_string());
                        codes.len() - 1
                    }
                };
                rows.push(code as f64);
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| CliError::data(format!("{}: unparseable value '{cell}'", place())))?;
                if !v.is_finite() {
                    return Err(CliError::data(format!("{}: non-finite value '{cell}'", place())));
                }
                rows.push(v);
            }
        }
    }

    let n = labels.len();
    if n == 0 {
        return Err(CliError::data(format!("{}: no data rows", path.display())));
    }
    if label_codes.len() > c_max {
        return Err(CliError::data(format!(
            "{}: {} label classes exceed the supported maximum of {c_max}",
            path.display(),
            label_codes.len()
        )));
    }
    let d = feature_idx.len();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let ds = Dataset::new(
        name,
        Tensor::new(vec![n, d], rows),
        labels,
        cat_mask,
        label_codes.len(),
    )?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn basic_ingestion_with_categoricals() {
        let f = write_csv("a,color,target\n1.5,red,yes\n2.5,blue,no\n3.5,red,yes\n");
        let ds = ingest_csv(f.path(), "target", &["color".to_string()], 10).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.cat_mask, vec![false, true]);
        // labels by first appearance: yes=0, no=1
        assert_eq!(ds.labels, vec![0, 1, 0]);
        // color codes: red=0, blue=1
        assert_eq!(ds.features.at2(0, 1), 0.0);
        assert_eq!(ds.features.at2(1, 1), 1.0);
        assert_eq!(ds.features.at2(2, 1), 0.0);
    }

    #[test]
    fn nan_cell_rejected_with_location() {
        let f = write_csv("a,b,y\n1.0,2.0,0\n1.0,NaN,1\n");
        let err = ingest_csv(f.path(), "y", &[], 10).unwrap_err();
        assert!(err.message.contains("row 2"), "{}", err.message);
        assert!(err.message.contains("'b'"), "{}", err.message);
    }

    #[test]
    fn missing_cell_rejected_with_location() {
        let f = write_csv("a,b,y\n1.0,,0\n1.0,2.0,1\n");
        let err = ingest_csv(f.path(), "y", &[], 10).unwrap_err();
        assert!(err.message.contains("row 1"), "{}", err.message);
        assert!(err.message.contains("missing"), "{}", err.message);
    }

    #[test]
    fn too_many_classes_rejected() {
        let mut content = String::from("a,y\n");
        for i in 0..11 {
            content.push_str(&format!("{i}.0,c{i}\n"));
        }
        let f = write_csv(&content);
        let err = ingest_csv(f.path(), "y", &[], 10).unwrap_err();
        assert!(err.message.contains("11 label classes"), "{}", err.message);
    }

    #[test]
    fn binary_labels_by_first_appearance() {
        let f = write_csv("x,y\n0.0,yes\n1.0,no\n2.0,yes\n");
        let ds = ingest_csv(f.path(), "y", &[], 10).unwrap();
        assert_eq!(ds.labels, vec![0, 1, 0]);
        assert_eq!(ds.n_classes, 2);
    }

    #[test]
    fn single_class_rejected() {
        let f = write_csv("x,y\n0.0,a\n1.0,a\n");
        assert!(ingest_csv(f.path(), "y", &[], 10).is_err());
    }

    #[test]
    fn unparseable_numeric_rejected() {
        let f = write_csv("x,y\nhello,0\n2.0,1\n");
        let err = ingest_csv(f.path(), "y", &[], 10).unwrap_err();
        assert!(err.message.contains("unparseable"), "{}", err.message);
        assert!(err.message.contains("row 1"), "{}", err.message);
    }
}
