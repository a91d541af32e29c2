//! Dataset ingestion, design matrices, train/test splitting and the
//! simulation generators used by the benchmark experiments.

use crate::composite::{CompositeDist, CompositeParams};
use crate::regression::shapes_from_alpha;
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use std::path::Path;

/// Declared type of a covariate column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Numeric,
    Categorical,
}

/// Covariate declaration inside a [`Schema`].
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: ColumnType,
}

/// Names the response column and types every covariate of a CSV file.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Schema {
    pub response: String,
    #[serde(default)]
    pub covariates: Vec<CovariateSpec>,
}

/// One covariate column; categorical levels are kept sorted so encodings
/// are stable across runs.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical { levels: Vec<String>, codes: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Self {
        Column { name: name.into(), data: ColumnData::Numeric(values) }
    }

    /// Builds a categorical column; levels are collected lexicographically.
    pub fn categorical(name: impl Into<String>, values: &[String]) -> Self {
        let mut levels: Vec<String> = values.to_vec();
        levels.sort();
        levels.dedup();
        let codes = values
            .iter()
            .map(|v| levels.binary_search(v).expect("level present") as u32)
            .collect();
        Column { name: name.into(), data: ColumnData::Categorical { levels, codes } }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn take(&self, idx: &[usize]) -> Column {
        let data = match &self.data {
            ColumnData::Numeric(v) => ColumnData::Numeric(idx.iter().map(|i| v[*i]).collect()),
            ColumnData::Categorical { levels, codes } => ColumnData::Categorical {
                levels: levels.clone(),
                codes: idx.iter().map(|i| codes[*i]).collect(),
            },
        };
        Column { name: self.name.clone(), data }
    }
}

/// Positive responses plus named covariate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub response: Vec<f64>,
    pub response_name: String,
    pub columns: Vec<Column>,
}

impl Dataset {
    pub fn new(response_name: impl Into<String>, response: Vec<f64>, columns: Vec<Column>) -> Result<Self> {
        if let Some((i, v)) = response.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::Data(format!(
                "non-positive response {v} at row {}",
                i + 1
            )));
        }
        for c in &columns {
            if c.len() != response.len() {
                return Err(Error::Dimension(format!(
                    "column '{}' has {} rows, response has {}",
                    c.name,
                    c.len(),
                    response.len()
                )));
            }
        }
        Ok(Dataset { response, response_name: response_name.into(), columns })
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    fn take(&self, idx: &[usize]) -> Dataset {
        Dataset {
            response: idx.iter().map(|i| self.response[*i]).collect(),
            response_name: self.response_name.clone(),
            columns: self.columns.iter().map(|c| c.take(idx)).collect(),
        }
    }
}

/// Parse a CSV file against a schema. Cell errors carry 1-based data-row
/// numbers and the offending column.
pub fn read_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path.as_ref())
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.as_ref().display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("missing header row: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();

    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("column '{name}' not found in header")))
    };
    let response_idx = col_index(&schema.response)?;
    let covariate_idx: Vec<usize> =
        schema.covariates.iter().map(|c| col_index(&c.name)).collect::<Result<_>>()?;

    let mut response = Vec::new();
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); schema.covariates.len()];
    for (row_num, record) in reader.records().enumerate() {
        let row = row_num + 1;
        let record =
            record.map_err(|e| Error::Data(format!("row {row}: malformed record: {e}")))?;
        let cell = record.get(response_idx).ok_or_else(|| {
            Error::Data(format!("row {row}: missing cell in column '{}'", schema.response))
        })?;
        let y: f64 = cell.trim().parse().map_err(|_| {
            Error::Data(format!(
                "row {row}, column '{}': cannot parse '{cell}' as a number",
                schema.response
            ))
        })?;
        if !(y > 0.0) {
            return Err(Error::Data(format!(
                "row {row}, column '{}': response must be positive, got {y}",
                schema.response
            )));
        }
        response.push(y);
        for (slot, (spec, idx)) in raw.iter_mut().zip(schema.covariates.iter().zip(&covariate_idx))
        {
            let cell = record.get(*idx).ok_or_else(|| {
                Error::Data(format!("row {row}: missing cell in column '{}'", spec.name))
            })?;
            slot.push(cell.trim().to_string());
        }
    }

    let mut columns = Vec::new();
    for (spec, values) in schema.covariates.iter().zip(raw) {
        let column = match spec.kind {
            ColumnType::Numeric => {
                let parsed: Result<Vec<f64>> = values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        v.parse().map_err(|_| {
                            Error::Data(format!(
                                "row {}, column '{}': cannot parse '{v}' as a number",
                                i + 1,
                                spec.name
                            ))
                        })
                    })
                    .collect();
                Column::numeric(spec.name.clone(), parsed?)
            }
            ColumnType::Categorical => Column::categorical(spec.name.clone(), &values),
        };
        columns.push(column);
    }
    Dataset::new(schema.response.clone(), response, columns)
}

/// Write a dataset back out; the inverse of [`read_csv`] for its schema.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())
        .map_err(|e| Error::Data(format!("cannot create {}: {e}", path.as_ref().display())))?;
    let mut header = vec![dataset.response_name.clone()];
    header.extend(dataset.columns.iter().map(|c| c.name.clone()));
    writer.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
    for i in 0..dataset.n() {
        let mut row = vec![format_float(dataset.response[i])];
        for c in &dataset.columns {
            row.push(match &c.data {
                ColumnData::Numeric(v) => format_float(v[i]),
                ColumnData::Categorical { levels, codes } => levels[codes[i] as usize].clone(),
            });
        }
        writer.write_record(&row).map_err(|e| Error::Data(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

/// Shortest decimal that round-trips through f64.
fn format_float(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

/// Design matrix with a leading intercept column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    data: Vec<f64>,
    nrows: usize,
    ncols: usize,
}

impl DesignMatrix {
    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = names.len();
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != ncols {
                return Err(Error::Dimension(format!(
                    "design row {i} has {} entries, expected {ncols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(DesignMatrix { names, data, nrows: rows.len(), ncols })
    }

    /// Intercept-only design for n observations.
    pub fn intercept_only(n: usize) -> Self {
        DesignMatrix {
            names: vec!["Intercept".to_string()],
            data: vec![1.0; n],
            nrows: n,
            ncols: 1,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Build the design matrix for the named covariates: numeric columns pass
/// through, categoricals get treatment (dummy) coding with the
/// lexicographically first level as the reference, and an intercept column
/// is prepended. The term "1" denotes an intercept-only model.
pub fn design_matrix(dataset: &Dataset, terms: &[String]) -> Result<DesignMatrix> {
    let mut names = vec!["Intercept".to_string()];
    // per output column: None = intercept, otherwise (column, level code for dummies)
    let mut builders: Vec<(usize, Option<u32>)> = Vec::new();
    for term in terms {
        if term == "1" {
            continue;
        }
        let (ci, column) = dataset
            .columns
            .iter()
            .enumerate()
            .find(|(_, c)| &c.name == term)
            .ok_or_else(|| Error::Data(format!("unknown covariate '{term}'")))?;
        match &column.data {
            ColumnData::Numeric(v) => {
                if v.windows(2).all(|w| w[0] == w[1]) && !v.is_empty() {
                    return Err(Error::Data(format!(
                        "covariate '{term}' is constant; remove it or drop the intercept"
                    )));
                }
                names.push(term.clone());
                builders.push((ci, None));
            }
            ColumnData::Categorical { levels, .. } => {
                if levels.len() < 2 {
                    return Err(Error::Data(format!(
                        "categorical covariate '{term}' has a single level"
                    )));
                }
                // reference = lexicographically first level (levels are sorted)
                for (code, level) in levels.iter().enumerate().skip(1) {
                    names.push(format!("{term}_{level}"));
                    builders.push((ci, Some(code as u32)));
                }
            }
        }
    }

    let n = dataset.n();
    let ncols = names.len();
    let mut data = Vec::with_capacity(n * ncols);
    for i in 0..n {
        data.push(1.0);
        for (ci, dummy) in &builders {
            let value = match (&dataset.columns[*ci].data, dummy) {
                (ColumnData::Numeric(v), None) => v[i],
                (ColumnData::Categorical { codes, .. }, Some(level)) => {
                    f64::from(codes[i] == *level)
                }
                _ => unreachable!("builder/type mismatch"),
            };
            data.push(value);
        }
    }
    Ok(DesignMatrix { names, data, nrows: n, ncols })
}

/// Uniform random train/test partition; the training set receives
/// ⌈ratio·n⌉ rows. Deterministic per seed.
pub fn split(dataset: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::domain(format!("split ratio must be in (0,1), got {ratio}")));
    }
    let n = dataset.n();
    let n_train = (ratio * n as f64).ceil() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let (train_idx, test_idx) = idx.split_at(n_train.min(n));
    let mut train_idx = train_idx.to_vec();
    let mut test_idx = test_idx.to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((dataset.take(&train_idx), dataset.take(&test_idx)))
}

/// Configuration of the Gamma-body / GPD-tail benchmark generator.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MixtureConfig {
    pub n: usize,
    pub n_tail: usize,
    /// Gamma mean coefficients: mean = exp(xᵀβ).
    pub beta_body: Vec<f64>,
    /// Gamma dispersion φ (variance = φ·mean²).
    pub phi_body: f64,
    /// GPD location coefficients: loc = exp(xᵀβ).
    pub beta_loc: Vec<f64>,
    /// GPD scale coefficients: scale = exp(xᵀβ).
    pub beta_scale: Vec<f64>,
    /// GPD shape ξ.
    pub xi: f64,
}

impl MixtureConfig {
    /// The benchmark configuration: n = 2000 with a 10% GPD tail.
    pub fn benchmark() -> Self {
        MixtureConfig {
            n: 2000,
            n_tail: 200,
            beta_body: vec![2.0, 2.0, 1.5],
            phi_body: 1.5,
            beta_loc: vec![1.0, 0.5, 0.5],
            beta_scale: vec![3.0, 0.5, 1.0],
            xi: 1.5,
        }
    }
}

/// Simulate the two-component benchmark data: standard-normal covariates,
/// a Gamma body and a GPD tail whose location plays the role of a
/// covariate-dependent threshold.
pub fn simulate_mixture(config: &MixtureConfig, seed: u64) -> Result<Dataset> {
    if config.n_tail >= config.n {
        return Err(Error::domain(format!(
            "n_tail = {} must be below n = {}",
            config.n_tail, config.n
        )));
    }
    let k = config.beta_body.len() - 1;
    if config.beta_loc.len() != k + 1 || config.beta_scale.len() != k + 1 {
        return Err(Error::Dimension(
            "beta_body, beta_loc and beta_scale must share one length".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs: Vec<Vec<f64>> = vec![Vec::with_capacity(config.n); k];
    let mut y = Vec::with_capacity(config.n);
    let n_body = config.n - config.n_tail;
    for i in 0..config.n {
        let mut x_row = vec![1.0];
        for x_col in xs.iter_mut() {
            let v: f64 = StandardNormal.sample(&mut rng);
            x_col.push(v);
            x_row.push(v);
        }
        let dotp = |beta: &[f64]| -> f64 { x_row.iter().zip(beta).map(|(a, b)| a * b).sum() };
        let value = if i < n_body {
            let mean = dotp(&config.beta_body).exp();
            let shape = 1.0 / config.phi_body;
            let gamma = Gamma::new(shape, mean * config.phi_body)
                .map_err(|e| Error::domain(format!("gamma parameters invalid: {e}")))?;
            gamma.sample(&mut rng)
        } else {
            let loc = dotp(&config.beta_loc).exp();
            let scale = dotp(&config.beta_scale).exp();
            let u: f64 = rng.gen_range(f64::EPSILON..1.0);
            loc + scale * ((1.0 - u).powf(-config.xi) - 1.0) / config.xi
        };
        y.push(value.max(f64::MIN_POSITIVE));
    }
    let columns = xs
        .into_iter()
        .enumerate()
        .map(|(j, v)| Column::numeric(format!("x{}", j + 1), v))
        .collect();
    Dataset::new("loss", y, columns)
}

/// Simulate from the composite GBII regression itself: standard-normal
/// covariates and responses drawn through the location-scale property
/// y = exp(xᵀβ)·Y₁ with Y₁ the unit-location composite.
pub fn simulate_regression(
    n: usize,
    beta: &[f64],
    alpha: &[f64; 6],
    seed: u64,
) -> Result<Dataset> {
    let (head, tail) = shapes_from_alpha(alpha)?;
    let unit = CompositeDist::new(CompositeParams::new(1.0, head, tail)?)?;
    let k = beta.len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs: Vec<Vec<f64>> = vec![Vec::with_capacity(n); k];
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut eta = beta[0];
        for (x_col, b) in xs.iter_mut().zip(&beta[1..]) {
            let v: f64 = StandardNormal.sample(&mut rng);
            x_col.push(v);
            eta += b * v;
        }
        let q = rng.gen_range(f64::MIN_POSITIVE..1.0);
        y.push(eta.exp() * unit.var_q(q)?);
    }
    let columns = xs
        .into_iter()
        .enumerate()
        .map(|(j, v)| Column::numeric(format!("x{}", j + 1), v))
        .collect();
    Dataset::new("loss", y, columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn schema(covs: &[(&str, ColumnType)]) -> Schema {
        Schema {
            response: "loss".into(),
            covariates: covs
                .iter()
                .map(|(n, t)| CovariateSpec { name: (*n).into(), kind: *t })
                .collect(),
        }
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn read_csv_well_formed() {
        let f = write_tmp("loss,gender\n1.5,male\n2.0,female\n0.7,male\n");
        let ds = read_csv(f.path(), &schema(&[("gender", ColumnType::Categorical)])).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.response, vec![1.5, 2.0, 0.7]);
    }

    #[test]
    fn read_csv_rejects_nonpositive_response_with_row() {
        let f = write_tmp("loss\n1.5\n0\n2.0\n");
        let err = read_csv(f.path(), &schema(&[])).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn read_csv_missing_column() {
        let f = write_tmp("loss\n1.5\n");
        let err = read_csv(f.path(), &schema(&[("age", ColumnType::Numeric)])).unwrap_err();
        assert!(err.to_string().contains("age"), "{err}");
    }

    #[test]
    fn read_csv_unparsable_cell_names_location() {
        let f = write_tmp("loss,age\n1.5,12\n2.0,abc\n");
        let err = read_csv(f.path(), &schema(&[("age", ColumnType::Numeric)])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("age"), "{msg}");
    }

    #[test]
    fn csv_roundtrip_identical() {
        let f = write_tmp("loss,gender,age\n1.5,male,30\n2.25,female,41\n0.7,male,29\n");
        let sch = schema(&[("gender", ColumnType::Categorical), ("age", ColumnType::Numeric)]);
        let ds = read_csv(f.path(), &sch).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_csv(&ds, out.path()).unwrap();
        let ds2 = read_csv(out.path(), &sch).unwrap();
        assert_eq!(ds, ds2);
    }

    #[test]
    fn design_matrix_dummy_coding() {
        let ds = Dataset::new(
            "loss",
            vec![1.0, 2.0, 3.0],
            vec![Column::categorical(
                "Gender",
                &["male".to_string(), "female".to_string(), "male".to_string()],
            )],
        )
        .unwrap();
        let dm = design_matrix(&ds, &["Gender".to_string()]).unwrap();
        // reference level is "female" (lexicographically first)
        assert_eq!(dm.names(), &["Intercept".to_string(), "Gender_male".to_string()]);
        assert_eq!(dm.row(0), &[1.0, 1.0]);
        assert_eq!(dm.row(1), &[1.0, 0.0]);
    }

    #[test]
    fn design_matrix_three_levels() {
        let vals: Vec<String> =
            ["MTD", "MTA", "other", "MTD"].iter().map(|s| s.to_string()).collect();
        let ds = Dataset::new(
            "loss",
            vec![1.0; 4],
            vec![Column::categorical("ClaimType", &vals)],
        )
        .unwrap();
        let dm = design_matrix(&ds, &["ClaimType".to_string()]).unwrap();
        // levels sorted: MTA (reference), MTD, other → two dummy columns
        assert_eq!(
            dm.names(),
            &[
                "Intercept".to_string(),
                "ClaimType_MTD".to_string(),
                "ClaimType_other".to_string()
            ]
        );
        assert_eq!(dm.ncols(), 3);
    }

    #[test]
    fn design_matrix_numeric_passthrough_and_intercept_only() {
        let ds = Dataset::new(
            "loss",
            vec![1.0, 2.0],
            vec![Column::numeric("age", vec![30.0, 41.0])],
        )
        .unwrap();
        let dm = design_matrix(&ds, &["age".to_string()]).unwrap();
        assert_eq!(dm.row(1), &[1.0, 41.0]);
        let dm1 = design_matrix(&ds, &["1".to_string()]).unwrap();
        assert_eq!(dm1.ncols(), 1);
        assert!(design_matrix(&ds, &["nope".to_string()]).is_err());
    }

    #[test]
    fn design_matrix_rejects_constant_column() {
        let ds = Dataset::new(
            "loss",
            vec![1.0, 2.0],
            vec![Column::numeric("flat", vec![3.0, 3.0])],
        )
        .unwrap();
        assert!(design_matrix(&ds, &["flat".to_string()]).is_err());
    }

    #[test]
    fn split_sizes_and_partition() {
        let ds = Dataset::new(
            "loss",
            (1..=10).map(|i| i as f64).collect(),
            vec![Column::numeric("x", (1..=10).map(|i| i as f64).collect())],
        )
        .unwrap();
        let (train, test) = split(&ds, 0.6, 11).unwrap();
        assert_eq!(train.n(), 6);
        assert_eq!(test.n(), 4);
        let mut all: Vec<f64> = train.response.iter().chain(&test.response).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, ds.response);
        // determinism
        let (train2, _) = split(&ds, 0.6, 11).unwrap();
        assert_eq!(train, train2);
    }

    #[test]
    fn mixture_generator_properties() {
        let cfg = MixtureConfig { n: 500, n_tail: 50, ..MixtureConfig::benchmark() };
        let ds = simulate_mixture(&cfg, 3).unwrap();
        assert_eq!(ds.n(), 500);
        assert_eq!(ds, simulate_mixture(&cfg, 3).unwrap());
        // GPD rows exceed their own location parameter
        let x1 = match &ds.column("x1").unwrap().data {
            ColumnData::Numeric(v) => v.clone(),
            _ => unreachable!(),
        };
        let x2 = match &ds.column("x2").unwrap().data {
            ColumnData::Numeric(v) => v.clone(),
            _ => unreachable!(),
        };
        for i in 450..500 {
            let loc = (1.0 + 0.5 * x1[i] + 0.5 * x2[i]).exp();
            assert!(ds.response[i] > loc, "GPD draw below location at row {i}");
        }
    }

    #[test]
    fn regression_simulator_is_deterministic() {
        let alpha =
            [1.5_f64.ln(), 0.0, 2.0_f64.ln(), 1.5_f64.ln(), 2.0_f64.ln(), 1.5_f64.ln()];
        let a = simulate_regression(200, &[2.0, 0.5, 0.2], &alpha, 9).unwrap();
        let b = simulate_regression(200, &[2.0, 0.5, 0.2], &alpha, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.columns.len(), 2);
        assert!(a.response.iter().all(|y| *y > 0.0));
    }
}
