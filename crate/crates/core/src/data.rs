//! Functional datasets: grids, response curves and covariates, plus CSV
//! ingestion and the preprocessing steps applied to functional covariates.

use std::io::{Read, Write};

use indexmap::IndexMap;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building or reading datasets.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("grid error: {0}")]
    Grid(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("degenerate column: {0}")]
    DegenerateColumn(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Strictly increasing, nonnegative evaluation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self, DataError> {
        if points.len() < 2 {
            return Err(DataError::Grid(format!("a grid needs at least 2 points, got {}", points.len())));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(DataError::Grid("grid contains non-finite values".into()));
        }
        if points[0] < 0.0 {
            return Err(DataError::Grid(format!("grid starts at {} but must lie in [0, t_max]", points[0])));
        }
        if let Some(w) = points.windows(2).find(|w| w[1] <= w[0]) {
            return Err(DataError::Grid(format!("grid not strictly increasing at {} -> {}", w[0], w[1])));
        }
        Ok(Self { points })
    }

    /// `g` equally spaced points on `[a, b]`.
    pub fn uniform(a: f64, b: f64, g: usize) -> Result<Self, DataError> {
        if g < 2 {
            return Err(DataError::Grid(format!("a grid needs at least 2 points, got {g}")));
        }
        let h = (b - a) / (g - 1) as f64;
        Self::new((0..g).map(|i| if i + 1 == g { b } else { a + i as f64 * h }).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.points[0], self.points[self.points.len() - 1])
    }

    /// Whether two grids hold the same points up to a relative tolerance.
    pub fn matches(&self, other: &Grid) -> bool {
        let (a, b) = self.range();
        let tol = 1e-9 * (b - a).abs().max(1.0);
        self.len() == other.len() && self.points.iter().zip(&other.points).all(|(x, y)| (x - y).abs() <= tol)
    }
}

impl TryFrom<Vec<f64>> for Grid {
    type Error = DataError;
    fn try_from(points: Vec<f64>) -> Result<Self, Self::Error> {
        Grid::new(points)
    }
}

impl From<Grid> for Vec<f64> {
    fn from(grid: Grid) -> Self {
        grid.points
    }
}

/// Pointwise mean and standard deviation used to standardize a functional
/// covariate. Kept so that new data can be transformed the same way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardization {
    pub fn apply(&self, values: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(values.nrows(), values.ncols(), |i, k| (values[(i, k)] - self.mean[k]) / self.sd[k])
    }
}

/// A covariate observed as one curve per response curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalCovariate {
    /// N×G_s matrix, one curve per row.
    pub values: DMatrix<f64>,
    pub grid: Grid,
    pub standardized: bool,
}

impl FunctionalCovariate {
    pub fn new(values: DMatrix<f64>, grid: Grid) -> Result<Self, DataError> {
        if values.ncols() != grid.len() {
            return Err(DataError::Dimension(format!(
                "functional covariate has {} columns but its grid has {} points",
                values.ncols(),
                grid.len()
            )));
        }
        Ok(Self { values, grid, standardized: false })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Covariate {
    Scalar { values: Vec<f64> },
    Categorical { levels: Vec<String>, codes: Vec<usize> },
    Functional(FunctionalCovariate),
}

impl Covariate {
    /// Builds a categorical covariate from labels; levels are the sorted
    /// distinct labels.
    pub fn categorical_from_labels<S: AsRef<str>>(labels: &[S]) -> Self {
        let mut levels: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
        levels.sort();
        levels.dedup();
        let codes =
            labels.iter().map(|s| levels.iter().position(|l| l == s.as_ref()).expect("label present")).collect();
        Covariate::Categorical { levels, codes }
    }

    pub fn n_rows(&self) -> usize {
        match self {
            Covariate::Scalar { values } => values.len(),
            Covariate::Categorical { codes, .. } => codes.len(),
            Covariate::Functional(f) => f.values.nrows(),
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Covariate::Scalar { .. } => "scalar",
            Covariate::Categorical { .. } => "categorical",
            Covariate::Functional(_) => "functional",
        }
    }

    fn select_rows(&self, rows: &[usize]) -> Covariate {
        match self {
            Covariate::Scalar { values } => Covariate::Scalar { values: rows.iter().map(|&i| values[i]).collect() },
            Covariate::Categorical { levels, codes } => {
                Covariate::Categorical { levels: levels.clone(), codes: rows.iter().map(|&i| codes[i]).collect() }
            }
            Covariate::Functional(f) => Covariate::Functional(FunctionalCovariate {
                values: f.values.select_rows(rows),
                grid: f.grid.clone(),
                standardized: f.standardized,
            }),
        }
    }
}

/// N response curves on a common grid together with their covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalDataset {
    /// N×G matrix, one curve per row.
    pub response: DMatrix<f64>,
    pub grid: Grid,
    pub covariates: IndexMap<String, Covariate>,
}

impl FunctionalDataset {
    pub fn new(response: DMatrix<f64>, grid: Grid, covariates: IndexMap<String, Covariate>) -> Result<Self, DataError> {
        if response.ncols() != grid.len() {
            return Err(DataError::Dimension(format!(
                "response has {} columns but the grid has {} points",
                response.ncols(),
                grid.len()
            )));
        }
        if response.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Parse("response contains missing or non-finite cells".into()));
        }
        let n = response.nrows();
        for (name, cov) in &covariates {
            if cov.n_rows() != n {
                return Err(DataError::Dimension(format!(
                    "covariate '{name}' has {} rows, expected {n}",
                    cov.n_rows()
                )));
            }
            match cov {
                Covariate::Categorical { levels, codes } => {
                    if codes.iter().any(|&c| c >= levels.len()) {
                        return Err(DataError::Schema(format!("covariate '{name}' has a code outside its level set")));
                    }
                }
                Covariate::Functional(f) if f.values.ncols() != f.grid.len() => {
                    return Err(DataError::Dimension(format!("functional covariate '{name}' does not match its grid")));
                }
                _ => {}
            }
        }
        Ok(Self { response, grid, covariates })
    }

    pub fn n_curves(&self) -> usize {
        self.response.nrows()
    }

    pub fn n_grid(&self) -> usize {
        self.grid.len()
    }

    pub fn covariate(&self, name: &str) -> Option<&Covariate> {
        self.covariates.get(name)
    }

    /// Dataset restricted to the given curves (repetitions allowed).
    pub fn select_curves(&self, rows: &[usize]) -> FunctionalDataset {
        FunctionalDataset {
            response: self.response.select_rows(rows),
            grid: self.grid.clone(),
            covariates: self.covariates.iter().map(|(k, c)| (k.clone(), c.select_rows(rows))).collect(),
        }
    }

    /// Writes the dataset in wide format: `y@<t>` response columns,
    /// `<name>@<s>` functional covariate columns, one column per scalar or
    /// categorical covariate.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = self.grid.points().iter().map(|t| format!("y@{}", fmt_num(*t))).collect();
        for (name, cov) in &self.covariates {
            match cov {
                Covariate::Functional(f) => {
                    header.extend(f.grid.points().iter().map(|s| format!("{name}@{}", fmt_num(*s))))
                }
                _ => header.push(name.clone()),
            }
        }
        w.write_record(&header)?;
        for i in 0..self.n_curves() {
            let mut rec: Vec<String> = self.response.row(i).iter().map(|v| fmt_num(*v)).collect();
            for cov in self.covariates.values() {
                match cov {
                    Covariate::Scalar { values } => rec.push(fmt_num(values[i])),
                    Covariate::Categorical { levels, codes } => rec.push(levels[codes[i]].clone()),
                    Covariate::Functional(f) => rec.extend(f.values.row(i).iter().map(|v| fmt_num(*v))),
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a wide-format table; see [`Schema`] for how columns are mapped.
    pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let mut rows: Vec<Vec<String>> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(DataError::Parse(format!(
                    "row {} has {} fields, header has {}",
                    line + 1,
                    rec.len(),
                    header.len()
                )));
            }
            rows.push(rec.iter().map(|s| s.trim().to_string()).collect());
        }
        if rows.is_empty() {
            return Err(DataError::Parse("table has no data rows".into()));
        }

        // Group columns by name; `name@value` columns form functional blocks.
        let mut blocks: IndexMap<String, Vec<(usize, f64)>> = IndexMap::new();
        let mut plain: Vec<(usize, String)> = Vec::new();
        for (j, col) in header.iter().enumerate() {
            match col.split_once('@') {
                Some((name, at)) => {
                    let s: f64 = at
                        .parse()
                        .map_err(|_| DataError::Parse(format!("column '{col}' has a non-numeric grid value")))?;
                    blocks.entry(name.to_string()).or_default().push((j, s));
                }
                None => plain.push((j, col.clone())),
            }
        }
        let response_cols = blocks
            .shift_remove(&schema.response)
            .ok_or_else(|| DataError::Schema(format!("no response columns named '{}@<t>'", schema.response)))?;
        let (response, grid) = parse_block(&rows, &response_cols, &schema.response)?;

        let mut covariates = IndexMap::new();
        for (j, name) in plain {
            let cov = if let Some(levels) = schema.categorical.get(&name) {
                let labels: Vec<&str> = rows.iter().map(|r| r[j].as_str()).collect();
                match levels {
                    Some(levels) => {
                        let codes = labels
                            .iter()
                            .map(|l| {
                                levels.iter().position(|v| v == l).ok_or_else(|| {
                                    DataError::Schema(format!("unknown level '{l}' in categorical column '{name}'"))
                                })
                            })
                            .collect::<Result<Vec<_>, _>>()?;
                        Covariate::Categorical { levels: levels.clone(), codes }
                    }
                    None => Covariate::categorical_from_labels(&labels),
                }
            } else {
                let values =
                    rows.iter().enumerate().map(|(i, r)| parse_num(&r[j], i, &name)).collect::<Result<Vec<_>, _>>()?;
                Covariate::Scalar { values }
            };
            covariates.insert(name, cov);
        }
        for (name, cols) in blocks {
            let (values, grid) = parse_block(&rows, &cols, &name)?;
            covariates.insert(name, Covariate::Functional(FunctionalCovariate::new(values, grid)?));
        }
        FunctionalDataset::new(response, grid, covariates)
    }
}

/// Column-role map used when reading a wide-format table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    /// Prefix of the response block (`<response>@<t>` columns).
    pub response: String,
    /// Plain columns read as categorical. A declared level list makes
    /// unknown labels an error; otherwise levels are the sorted labels.
    pub categorical: IndexMap<String, Option<Vec<String>>>,
}

impl Schema {
    pub fn new(response: impl Into<String>) -> Self {
        Self { response: response.into(), categorical: IndexMap::new() }
    }

    pub fn with_categorical(mut self, name: impl Into<String>, levels: Option<Vec<String>>) -> Self {
        self.categorical.insert(name.into(), levels);
        self
    }

    /// Schema that reproduces the column roles of an existing dataset.
    pub fn for_dataset(data: &FunctionalDataset, response: &str) -> Self {
        let mut schema = Schema::new(response);
        for (name, cov) in &data.covariates {
            if let Covariate::Categorical { levels, .. } = cov {
                schema.categorical.insert(name.clone(), Some(levels.clone()));
            }
        }
        schema
    }
}

fn parse_num(s: &str, row: usize, col: &str) -> Result<f64, DataError> {
    s.parse::<f64>()
        .map_err(|_| DataError::Parse(format!("row {}: column '{col}' value '{s}' is not numeric", row + 1)))
}

fn parse_block(rows: &[Vec<String>], cols: &[(usize, f64)], name: &str) -> Result<(DMatrix<f64>, Grid), DataError> {
    let grid =
        Grid::new(cols.iter().map(|c| c.1).collect()).map_err(|e| DataError::Grid(format!("block '{name}': {e}")))?;
    let mut m = DMatrix::zeros(rows.len(), cols.len());
    for (i, r) in rows.iter().enumerate() {
        for (k, (j, s)) in cols.iter().enumerate() {
            m[(i, k)] = parse_num(&r[*j], i, &format!("{name}@{s}"))?;
        }
    }
    Ok((m, grid))
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

/// Centers every column to mean 0 and scales it to sample standard
/// deviation 1 (denominator N−1).
pub fn standardize_functional(cov: &FunctionalCovariate) -> Result<(FunctionalCovariate, Standardization), DataError> {
    let n = cov.values.nrows();
    if n < 2 {
        return Err(DataError::DegenerateColumn(format!("standardization needs at least 2 curves, got {n}")));
    }
    let mut mean = Vec::with_capacity(cov.values.ncols());
    let mut sd = Vec::with_capacity(cov.values.ncols());
    for (k, col) in cov.values.column_iter().enumerate() {
        let m = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let s = var.sqrt();
        if !(s > 1e-12 * m.abs().max(1.0)) {
            return Err(DataError::DegenerateColumn(format!(
                "zero pointwise variance at grid point {} (s = {})",
                k,
                cov.grid.points()[k]
            )));
        }
        mean.push(m);
        sd.push(s);
    }
    let stats = Standardization { mean, sd };
    let out = FunctionalCovariate { values: stats.apply(&cov.values), grid: cov.grid.clone(), standardized: true };
    Ok((out, stats))
}

/// Forward differences divided by the grid spacing. The result lives on the
/// grid without its last point.
pub fn numeric_derivative(cov: &FunctionalCovariate) -> Result<FunctionalCovariate, DataError> {
    let s = cov.grid.points();
    // The output grid must itself be a valid grid of at least 2 points.
    if s.len() < 3 {
        return Err(DataError::Grid(format!("numeric derivative needs at least 3 grid points, got {}", s.len())));
    }
    let g = s.len() - 1;
    let values = DMatrix::from_fn(cov.values.nrows(), g, |i, k| {
        (cov.values[(i, k + 1)] - cov.values[(i, k)]) / (s[k + 1] - s[k])
    });
    Ok(FunctionalCovariate { values, grid: Grid::new(s[..g].to_vec())?, standardized: false })
}

/// Drops the last grid point of a functional covariate, used to align a
/// covariate with its forward-difference derivative.
pub fn drop_last_point(cov: &FunctionalCovariate) -> Result<FunctionalCovariate, DataError> {
    let g = cov.grid.len() - 1;
    Ok(FunctionalCovariate {
        values: cov.values.columns(0, g).into_owned(),
        grid: Grid::new(cov.grid.points()[..g].to_vec())?,
        standardized: cov.standardized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_table() -> &'static str {
        "y@0,y@1,y@2,z,g,x@0,x@0.5\n1,2,3,0.5,a,1,2\n4,5,6,0.25,b,3,4\n"
    }

    #[test]
    fn ingest_reshapes_rows_into_curves() {
        let schema = Schema::new("y").with_categorical("g", None);
        let d = FunctionalDataset::read_csv(small_table().as_bytes(), &schema).unwrap();
        assert_eq!(d.n_curves(), 2);
        assert_eq!(d.n_grid(), 3);
        assert_eq!(d.response[(1, 2)], 6.0);
        assert!(matches!(d.covariate("z"), Some(Covariate::Scalar { .. })));
        match d.covariate("x") {
            Some(Covariate::Functional(f)) => assert_eq!(f.grid.points(), &[0.0, 0.5]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ingest_rejects_non_monotone_grid() {
        let t = "y@2,y@1,y@3\n1,2,3\n";
        let err = FunctionalDataset::read_csv(t.as_bytes(), &Schema::new("y")).unwrap_err();
        assert!(matches!(err, DataError::Grid(_)), "{err}");
    }

    #[test]
    fn ingest_rejects_ragged_rows() {
        let t = "y@0,y@1\n1,2\n3\n";
        let err = FunctionalDataset::read_csv(t.as_bytes(), &Schema::new("y")).unwrap_err();
        assert!(matches!(err, DataError::Parse(_)), "{err}");
    }

    #[test]
    fn ingest_rejects_unknown_level() {
        let schema = Schema::new("y").with_categorical("g", Some(vec!["a".into()]));
        let err = FunctionalDataset::read_csv(small_table().as_bytes(), &schema).unwrap_err();
        assert!(matches!(err, DataError::Schema(_)), "{err}");
    }

    #[test]
    fn ingest_large_table_shape() {
        let g = 105;
        let mut t: Vec<String> = (0..g).map(|k| format!("y@{}", k as f64 * 0.25)).collect();
        let mut s = t.join(",") + "\n";
        for i in 0..334 {
            t = (0..g).map(|k| format!("{}", (i * k) as f64 * 0.01)).collect();
            s += &(t.join(",") + "\n");
        }
        let d = FunctionalDataset::read_csv(s.as_bytes(), &Schema::new("y")).unwrap();
        assert_eq!((d.n_curves(), d.n_grid()), (334, 105));
    }

    #[test]
    fn csv_round_trip_is_identity() {
        let schema = Schema::new("y").with_categorical("g", None);
        let d = FunctionalDataset::read_csv(small_table().as_bytes(), &schema).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = FunctionalDataset::read_csv(&buf[..], &Schema::for_dataset(&d, "y")).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn standardize_constant_matrix_is_degenerate() {
        let f =
            FunctionalCovariate::new(DMatrix::from_element(4, 3, 5.0), Grid::uniform(0.0, 1.0, 3).unwrap()).unwrap();
        assert!(matches!(standardize_functional(&f), Err(DataError::DegenerateColumn(_))));
    }

    #[test]
    fn standardize_two_point_case() {
        let f = FunctionalCovariate::new(
            DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 0.0, 2.0, 2.0, 2.0]),
            Grid::uniform(0.0, 1.0, 3).unwrap(),
        )
        .unwrap();
        let (s, _) = standardize_functional(&f).unwrap();
        for k in 0..3 {
            assert!((s.values[(0, k)] + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
            assert!((s.values[(1, k)] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        }
        assert!(s.standardized);
    }

    #[test]
    fn standardize_matches_recomputed_moments_and_is_idempotent() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let m = DMatrix::from_fn(10, 20, |_, _| rng.random_range(-3.0..5.0));
        let f = FunctionalCovariate::new(m, Grid::uniform(0.0, 1.0, 20).unwrap()).unwrap();
        let (s, _) = standardize_functional(&f).unwrap();
        for col in s.values.column_iter() {
            let mean = col.sum() / 10.0;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0).sqrt();
            assert!(mean.abs() < 1e-12);
            assert!((sd - 1.0).abs() < 1e-12);
        }
        let (s2, _) = standardize_functional(&s).unwrap();
        assert!((s2.values - &s.values).amax() < 1e-12);
    }

    #[test]
    fn derivative_examples() {
        let grid = Grid::new(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let sq = FunctionalCovariate::new(DMatrix::from_row_slice(1, 4, &[0.0, 1.0, 4.0, 9.0]), grid.clone()).unwrap();
        let d = numeric_derivative(&sq).unwrap();
        assert_eq!(d.values.as_slice(), &[1.0, 3.0, 5.0]);
        assert_eq!(d.grid.points(), &[0.0, 1.0, 2.0]);

        let g = Grid::uniform(0.0, 2.0, 9).unwrap();
        let id = FunctionalCovariate::new(DMatrix::from_fn(2, 9, |i, k| g.points()[k] + i as f64), g.clone()).unwrap();
        let d = numeric_derivative(&id).unwrap();
        assert!(d.values.iter().all(|v| (v - 1.0).abs() < 1e-12));

        let c = FunctionalCovariate::new(DMatrix::from_element(2, 9, 4.0), g).unwrap();
        assert!(numeric_derivative(&c).unwrap().values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn derivative_rejects_short_grid() {
        let f =
            FunctionalCovariate::new(DMatrix::from_row_slice(1, 2, &[0.0, 1.0]), Grid::new(vec![0.0, 1.0]).unwrap())
                .unwrap();
        assert!(matches!(numeric_derivative(&f), Err(DataError::Grid(_))));
    }

    #[test]
    fn derivative_of_standardized_linear_family_is_grid_independent() {
        // x_i(s) = a_i + b_i s: the standardized derivative curves are the
        // standardized slopes, whatever the grid resolution.
        let a = [0.3, -1.0, 2.0, 0.7];
        let b = [1.0, 2.5, -0.5, 0.2];
        let curves = |g: usize| {
            let grid = Grid::uniform(0.0, 1.0, g).unwrap();
            let m = DMatrix::from_fn(4, g, |i, k| a[i] + b[i] * grid.points()[k]);
            let f = FunctionalCovariate::new(m, grid).unwrap();
            let (d, _) = standardize_functional(&numeric_derivative(&f).unwrap()).unwrap();
            d.values
        };
        let coarse = curves(11);
        let fine = curves(101);
        for m in [&coarse, &fine] {
            for col in m.column_iter() {
                assert!((col - coarse.column(0)).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(Grid::new(vec![0.0]).is_err());
        assert!(Grid::new(vec![0.0, 0.0]).is_err());
        assert!(Grid::new(vec![-1.0, 0.0]).is_err());
    }
}
