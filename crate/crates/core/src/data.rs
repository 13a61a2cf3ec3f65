//! Data model for two-arm studies: per-arm samples, the loading vector, and
//! the design statistics (Gram matrix, penalty weights, column means) that
//! the solvers reuse.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{HitsError, Result};

/// Covariates and responses for one treatment arm.
///
/// `x` is stored column-major (`nalgebra::DMatrix`), `n_k` rows by `p` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSample {
    x: DMatrix<f64>,
    y: DVector<f64>,
    label: u8,
}

impl GroupSample {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, label: u8) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(HitsError::Dimension(format!(
                "design has {} rows but response has length {}",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() < 2 {
            return Err(HitsError::InsufficientData(format!(
                "arm {label} has {} rows, at least 2 are required",
                x.nrows()
            )));
        }
        if x.ncols() < 1 {
            return Err(HitsError::Dimension("design has no columns".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(HitsError::Schema(format!(
                "arm {label} contains non-finite values"
            )));
        }
        Ok(Self { x, y, label })
    }

    /// Builds a sample from row-major covariates.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>, label: u8) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(HitsError::Dimension("ragged covariate rows".into()));
        }
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(x, DVector::from_vec(y), label)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn label(&self) -> u8 {
        self.label
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Same design, different response.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        Self::new(self.x.clone(), y, self.label)
    }

    /// Subsample by row indices, keeping row order as given.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let x = self.x.select_rows(rows.iter());
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        Self::new(x, y, self.label)
    }
}

/// Two arms sharing the same covariate dimension plus the loading vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoGroupDataset {
    pub group1: GroupSample,
    pub group2: GroupSample,
    pub x_new: DVector<f64>,
}

impl TwoGroupDataset {
    pub fn new(group1: GroupSample, group2: GroupSample, x_new: DVector<f64>) -> Result<Self> {
        if group1.p() != group2.p() {
            return Err(HitsError::Dimension(format!(
                "arm 1 has {} covariates, arm 2 has {}",
                group1.p(),
                group2.p()
            )));
        }
        if x_new.len() != group1.p() {
            return Err(HitsError::Dimension(format!(
                "loading has length {} but p = {}",
                x_new.len(),
                group1.p()
            )));
        }
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(HitsError::Schema("loading contains non-finite values".into()));
        }
        Ok(Self {
            group1,
            group2,
            x_new,
        })
    }

    pub fn p(&self) -> usize {
        self.group1.p()
    }

    pub fn with_loading(&self, x_new: DVector<f64>) -> Result<Self> {
        Self::new(self.group1.clone(), self.group2.clone(), x_new)
    }
}

/// Cached second-moment statistics of one arm's design.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignStats {
    /// Uncentered Gram matrix `X'X / n`.
    pub gram: DMatrix<f64>,
    /// `W_j = sqrt(mean_i X_ij^2)`.
    pub weights: DVector<f64>,
    pub col_means: DVector<f64>,
    pub n: usize,
}

impl DesignStats {
    pub fn p(&self) -> usize {
        self.gram.nrows()
    }
}

pub fn design_stats(g: &GroupSample) -> DesignStats {
    let x = g.x();
    let n = g.n();
    let p = g.p();
    let inv_n = 1.0 / n as f64;

    // Explicit transpose so the product goes through the blocked GEMM kernel.
    let xt = x.transpose();
    let mut gram = &xt * x;
    gram *= inv_n;
    for j in 0..p {
        for i in (j + 1)..p {
            let v = 0.5 * (gram[(i, j)] + gram[(j, i)]);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }

    let weights = DVector::from_iterator(
        p,
        x.column_iter()
            .map(|c| (c.iter().map(|v| v * v).sum::<f64>() * inv_n).sqrt()),
    );
    let col_means = DVector::from_iterator(p, x.column_iter().map(|c| c.sum() * inv_n));

    DesignStats {
        gram,
        weights,
        col_means,
        n,
    }
}

/// Returns `(x / ||x||_2, ||x||_2)`.
pub fn standardize_loading(x_new: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let norm = x_new.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(HitsError::DegenerateLoading);
    }
    Ok((x_new / norm, norm))
}

/// Column mapping for CSV ingestion.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub response: String,
    pub arm: String,
    /// Covariate columns in order; `None` takes every remaining column in file order.
    pub covariates: Option<Vec<String>>,
    /// Prepend a column of ones as covariate 1.
    pub intercept: bool,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self { response: "y".into(), arm: "arm".into(), covariates: None, intercept: false }
    }
}

struct ParsedTable {
    response: Vec<f64>,
    arm: Option<Vec<u8>>,
    rows: Vec<Vec<f64>>,
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    let trimmed = raw.trim();
    match trimmed.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(HitsError::Parse {
            row,
            column: column.to_string(),
            value: trimmed.to_string(),
        }),
    }
}

fn read_table(path: &Path, response: &str, arm: Option<&str>, covariates: Option<&[String]>, intercept: bool) -> Result<ParsedTable> {
    let io_err = |source: std::io::Error| HitsError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => io_err(source),
            other => HitsError::Schema(format!("{other:?}")),
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| HitsError::Schema(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HitsError::Schema(format!("missing column '{name}'")))
    };

    let response_idx = find(response)?;
    let arm_idx = arm.map(find).transpose()?;
    let covariate_idx: Vec<usize> = match covariates {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|&i| i != response_idx && Some(i) != arm_idx)
            .collect(),
    };
    if covariate_idx.is_empty() && !intercept {
        return Err(HitsError::Schema("no covariate columns selected".into()));
    }

    let mut table = ParsedTable {
        response: Vec::new(),
        arm: arm_idx.map(|_| Vec::new()),
        rows: Vec::new(),
    };
    for (r, record) in reader.records().enumerate() {
        // Row numbers are 1-based data rows (header excluded).
        let row = r + 1;
        let record = record.map_err(|e| HitsError::Schema(format!("row {row}: {e}")))?;
        let cell = |i: usize| record.get(i).unwrap_or("");
        table
            .response
            .push(parse_cell(cell(response_idx), row, &headers[response_idx])?);
        if let (Some(i), Some(arms)) = (arm_idx, table.arm.as_mut()) {
            let v = parse_cell(cell(i), row, &headers[i])?;
            let label = if v == 1.0 {
                1
            } else if v == 2.0 {
                2
            } else {
                return Err(HitsError::Parse {
                    row,
                    column: headers[i].clone(),
                    value: cell(i).to_string(),
                });
            };
            arms.push(label);
        }
        let mut values = Vec::with_capacity(covariate_idx.len() + usize::from(intercept));
        if intercept {
            values.push(1.0);
        }
        for &i in &covariate_idx {
            values.push(parse_cell(cell(i), row, &headers[i])?);
        }
        table.rows.push(values);
    }
    Ok(table)
}

/// Reads a two-arm dataset. The returned loading is all zeros and must be
/// replaced before inference (see [`TwoGroupDataset::with_loading`]).
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<TwoGroupDataset> {
    let table = read_table(
        path.as_ref(),
        &schema.response,
        Some(&schema.arm),
        schema.covariates.as_deref(),
        schema.intercept,
    )?;
    let arms = table.arm.expect("arm column requested");
    let mut parts: [(Vec<Vec<f64>>, Vec<f64>); 2] = Default::default();
    for ((row, y), arm) in table.rows.into_iter().zip(table.response).zip(arms) {
        let part = &mut parts[usize::from(arm - 1)];
        part.0.push(row);
        part.1.push(y);
    }
    let [(rows1, y1), (rows2, y2)] = parts;
    for (label, rows) in [(1, &rows1), (2, &rows2)] {
        if rows.len() < 2 {
            return Err(HitsError::InsufficientData(format!(
                "arm {label} has {} rows, at least 2 are required",
                rows.len()
            )));
        }
    }
    let g1 = GroupSample::from_rows(&rows1, y1, 1)?;
    let g2 = GroupSample::from_rows(&rows2, y2, 2)?;
    let p = g1.p();
    TwoGroupDataset::new(g1, g2, DVector::zeros(p))
}

/// Reads a single-arm sample (for prediction), ignoring any arm column.
pub fn load_single_csv(
    path: impl AsRef<Path>,
    response: &str,
    covariates: Option<&[String]>,
    intercept: bool,
    exclude: Option<&str>,
) -> Result<GroupSample> {
    let mut names = covariates.map(<[String]>::to_vec);
    if names.is_none() {
        if let Some(ex) = exclude {
            // Resolve "all other columns" while dropping the excluded one.
            let headers = csv::ReaderBuilder::new()
                .from_path(path.as_ref())
                .and_then(|mut r| r.headers().cloned())
                .map_err(|e| HitsError::Schema(e.to_string()))?;
            names = Some(
                headers
                    .iter()
                    .map(str::trim)
                    .filter(|h| *h != response && *h != ex)
                    .map(str::to_string)
                    .collect(),
            );
        }
    }
    let table = read_table(path.as_ref(), response, None, names.as_deref(), intercept)?;
    GroupSample::from_rows(&table.rows, table.response, 1)
}

/// Parses a loading vector from an inline JSON array (`"[1, 0.5]"`), a `.json`
/// file holding an array, or a one-column CSV file (header optional).
pub fn read_loading(source: &str) -> Result<DVector<f64>> {
    let trimmed = source.trim();
    let values: Vec<f64> = if trimmed.starts_with('[') {
        serde_json::from_str(trimmed)
            .map_err(|e| HitsError::Schema(format!("loading JSON: {e}")))?
    } else {
        let path = Path::new(trimmed);
        let text = std::fs::read_to_string(path).map_err(|source| HitsError::Io {
            path: trimmed.to_string(),
            source,
        })?;
        if text.trim_start().starts_with('[') {
            serde_json::from_str(text.trim())
                .map_err(|e| HitsError::Schema(format!("loading JSON: {e}")))?
        } else {
            let mut out = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let cell = line.split(',').next().unwrap_or("").trim();
                if cell.is_empty() {
                    continue;
                }
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => out.push(v),
                    _ if i == 0 => continue,
                    _ => {
                        return Err(HitsError::Parse {
                            row: i,
                            column: "loading".into(),
                            value: cell.into(),
                        })
                    }
                }
            }
            out
        }
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(HitsError::Schema("loading contains non-finite values".into()));
    }
    Ok(DVector::from_vec(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn schema(intercept: bool) -> CsvSchema {
        CsvSchema {
            response: "y".into(),
            arm: "arm".into(),
            covariates: None,
            intercept,
        }
    }

    #[test]
    fn partitions_by_arm_with_intercept() {
        let f = write_csv("y,arm,a,b\n1,1,0.5,2\n2,1,1.5,3\n3,2,2.5,4\n4,2,3.5,5\n");
        let ds = load_csv(f.path(), &schema(true)).unwrap();
        assert_eq!(ds.group1.n(), 2);
        assert_eq!(ds.group2.n(), 2);
        assert_eq!(ds.p(), 3);
        assert_eq!(ds.group1.x()[(0, 0)], 1.0);
        assert_eq!(ds.group1.x()[(1, 1)], 1.5);
        assert_eq!(ds.group2.x()[(1, 2)], 5.0);
        assert_eq!(ds.group2.y()[0], 3.0);
    }

    #[test]
    fn na_cell_is_a_parse_error_naming_the_cell() {
        let f = write_csv("y,arm,a\n1,1,0.5\n2,1,NA\n3,2,1\n4,2,2\n");
        match load_csv(f.path(), &schema(false)) {
            Err(HitsError::Parse { row, column, value }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "a");
                assert_eq!(value, "NA");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_thin_arm() {
        let f = write_csv("y,arm,a\n1,1,0.5\n2,1,1\n3,2,1\n");
        let mut s = schema(false);
        s.covariates = Some(vec!["zz".into()]);
        assert!(matches!(load_csv(f.path(), &s), Err(HitsError::Schema(_))));
        assert!(matches!(
            load_csv(f.path(), &schema(false)),
            Err(HitsError::InsufficientData(_))
        ));
    }

    #[test]
    fn full_size_partition() {
        // 183 patients: 92 on arm 1, 91 on arm 2, 171 covariates.
        let mut text = String::from("y,arm");
        for j in 0..171 {
            text.push_str(&format!(",c{j}"));
        }
        text.push('\n');
        for i in 0..183 {
            let arm = if i < 92 { 1 } else { 2 };
            text.push_str(&format!("{},{}", i as f64 * 0.1, arm));
            for j in 0..171 {
                text.push_str(&format!(",{}", ((i * 7 + j * 3) % 11) as f64));
            }
            text.push('\n');
        }
        let f = write_csv(&text);
        let ds = load_csv(f.path(), &schema(false)).unwrap();
        assert_eq!((ds.group1.n(), ds.group2.n(), ds.p()), (92, 91, 171));
    }

    #[test]
    fn gram_of_scaled_basis_rows() {
        let n = 9;
        let mut x = DMatrix::zeros(n, 3);
        x[(0, 0)] = (n as f64).sqrt();
        let g = GroupSample::new(x, DVector::zeros(n), 1).unwrap();
        let s = design_stats(&g);
        let mut expected = DMatrix::zeros(3, 3);
        expected[(0, 0)] = 1.0;
        assert!((s.gram - expected).abs().max() < 1e-14);
    }

    #[test]
    fn gram_of_ones_column() {
        let g = GroupSample::new(DMatrix::from_element(5, 1, 1.0), DVector::zeros(5), 1).unwrap();
        let s = design_stats(&g);
        assert_eq!(s.gram[(0, 0)], 1.0);
        assert_eq!(s.weights[0], 1.0);
        assert_eq!(s.col_means[0], 1.0);
    }

    #[test]
    fn gram_matches_direct_triple_loop() {
        // Independent oracle: explicit sums over rows.
        let (n, p) = (20, 5);
        let x = DMatrix::from_fn(n, p, |i, j| ((i * 31 + j * 17) % 13) as f64 / 7.0 - 0.8);
        let g = GroupSample::new(x.clone(), DVector::zeros(n), 1).unwrap();
        let s = design_stats(&g);
        for a in 0..p {
            for b in 0..p {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += x[(i, a)] * x[(i, b)];
                }
                assert!((s.gram[(a, b)] - acc / n as f64).abs() < 1e-12);
            }
            assert!((s.gram[(a, a)] - s.weights[a].powi(2)).abs() <= 1e-10 * s.gram[(a, a)].max(1e-300));
        }
    }

    #[test]
    fn standardize_examples() {
        let mut e3 = DVector::zeros(5);
        e3[2] = 1.0;
        let (u, norm) = standardize_loading(&e3).unwrap();
        assert_eq!(u, e3);
        assert_eq!(norm, 1.0);

        let (u, norm) = standardize_loading(&DVector::from_vec(vec![3.0, 4.0])).unwrap();
        assert!((u[0] - 0.6).abs() < 1e-15 && (u[1] - 0.8).abs() < 1e-15);
        assert_eq!(norm, 5.0);

        assert!(matches!(
            standardize_loading(&DVector::zeros(4)),
            Err(HitsError::DegenerateLoading)
        ));
    }

    #[test]
    fn loading_sources() {
        assert_eq!(read_loading("[1, 2.5]").unwrap().as_slice(), &[1.0, 2.5]);
        let f = write_csv("x\n1\n-2\n0.5\n");
        assert_eq!(
            read_loading(f.path().to_str().unwrap()).unwrap().as_slice(),
            &[1.0, -2.0, 0.5]
        );
    }
}
