//! Construction of base-learner design blocks for every term kind, and the
//! serializable recipes that rebuild them for new data.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::df::{df_to_lambda, psd_rank};
use super::ortho::orthogonalize;
use super::quadrature::{historical_weights, trapezoid_weights};
use super::spline::{difference_penalty, SplineBasisDef};
use super::tensor::{row_tensor, Design};
use super::BasisError;
use crate::data::{standardize_functional, Covariate, FunctionalDataset, Grid, Standardization};
use crate::terms::{BasisSettings, TermDescriptor, TermKind};

/// Degrees of freedom given to the time direction of a tensor block.
pub const TIME_DF: f64 = 3.0;
/// Number of covariate values per axis on which effect surfaces are reported.
pub const SURFACE_POINTS: usize = 40;

/// Basis in the time direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TimePart {
    Spline {
        def: SplineBasisDef,
        diff_order: usize,
    },
    /// Indicators of `t < c₁`, `c₁ ≤ t < c₂`, …, `t ≥ c_k` with a ridge penalty.
    Step {
        changepoints: Vec<f64>,
    },
}

impl TimePart {
    pub fn n_basis(&self) -> usize {
        match self {
            TimePart::Spline { def, .. } => def.n_basis,
            TimePart::Step { changepoints } => changepoints.len() + 1,
        }
    }

    pub fn eval(&self, t: &[f64]) -> Result<DMatrix<f64>, BasisError> {
        match self {
            TimePart::Spline { def, .. } => def.eval(t),
            TimePart::Step { changepoints } => {
                let mut m = DMatrix::zeros(t.len(), changepoints.len() + 1);
                for (g, &tv) in t.iter().enumerate() {
                    let c = changepoints.iter().take_while(|&&cp| tv >= cp).count();
                    m[(g, c)] = 1.0;
                }
                Ok(m)
            }
        }
    }

    pub fn penalty(&self) -> DMatrix<f64> {
        match self {
            TimePart::Spline { def, diff_order: 0 } => DMatrix::identity(def.n_basis, def.n_basis),
            TimePart::Spline { def, diff_order } => {
                difference_penalty(def.n_basis, *diff_order).expect("validated order")
            }
            TimePart::Step { changepoints } => DMatrix::identity(changepoints.len() + 1, changepoints.len() + 1),
        }
    }
}

/// Limits of integration of a functional-covariate effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integration {
    Full,
    Historical,
}

/// Covariate-side basis of a block, with everything learned from the
/// training data (ranges, constraint transforms, standardization).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CovariatePart {
    /// `b_X ≡ 1`.
    Constant,
    /// `b_X = z − shift`.
    Linear { covariate: String, shift: f64 },
    /// `b_X = z₁ z₂ − shift`.
    LinearProduct { covariates: [String; 2], shift: f64 },
    /// `b_X = Zᵀ b(z)`.
    Smooth { covariate: String, def: SplineBasisDef, diff_order: usize, z: DMatrix<f64> },
    /// Level dummies (times a slope covariate for group-linear effects),
    /// reparametrized by `z`.
    Group { covariate: String, levels: Vec<String>, slope: Option<String>, z: DMatrix<f64> },
    /// `Zᵀ (b₁(z₁) ⊗ b₂(z₂))`.
    SmoothPair { covariates: [String; 2], defs: [SplineBasisDef; 2], diff_orders: [usize; 2], z: DMatrix<f64> },
    /// `∫ x(s) φ(s) ds` by trapezoid quadrature on the covariate grid.
    Integral {
        covariate: String,
        def: SplineBasisDef,
        diff_order: usize,
        limits: Integration,
        grid: Grid,
        standardization: Option<Standardization>,
    },
    /// `x(t)`, a time-varying covariate value.
    Concurrent { covariate: String, standardization: Option<Standardization> },
}

/// Serializable description of a calibrated block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecipe {
    pub term: TermDescriptor,
    pub cov: CovariatePart,
    pub time: TimePart,
    /// Smoothing parameters of the covariate directions.
    pub lambda_x: Vec<f64>,
    pub lambda_y: f64,
    pub df_target: f64,
}

/// A base-learner: design, penalty and its recipe.
#[derive(Debug, Clone)]
pub struct DesignBlock {
    pub recipe: BlockRecipe,
    pub design: Design,
    pub penalty: DMatrix<f64>,
}

/// Effect function evaluated on a rectangular grid. Values are stored
/// row-major over the axes, the time axis last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSurface {
    pub term: String,
    pub axes: Vec<(String, Vec<f64>)>,
    /// Labels of a categorical axis, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
    pub values: Vec<f64>,
}

impl EffectSurface {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.1.len()).collect()
    }

    /// Whether two surfaces live on the same axes.
    pub fn same_axes(&self, other: &EffectSurface) -> bool {
        self.axes.len() == other.axes.len()
            && self.axes.iter().zip(&other.axes).all(|(a, b)| {
                a.1.len() == b.1.len() && a.1.iter().zip(&b.1).all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(1.0))
            })
    }

    pub fn zeros_like(&self) -> EffectSurface {
        EffectSurface {
            values: self.values.iter().map(|v| if v.is_nan() { f64::NAN } else { 0.0 }).collect(),
            ..self.clone()
        }
    }

    /// Long-format CSV: one column per axis plus `value`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = self.axes.iter().map(|a| a.0.clone()).collect();
        header.push("value".into());
        w.write_record(&header)?;
        let shape = self.shape();
        let mut idx = vec![0usize; shape.len()];
        for v in &self.values {
            let mut rec: Vec<String> = idx.iter().zip(&self.axes).map(|(&i, a)| crate::data::fmt_num(a.1[i])).collect();
            rec.push(crate::data::fmt_num(*v));
            w.write_record(&rec)?;
            for d in (0..shape.len()).rev() {
                idx[d] += 1;
                if idx[d] < shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a surface written by [`EffectSurface::write_csv`].
    pub fn read_csv<R: std::io::Read>(reader: R, term: &str) -> Result<EffectSurface, BasisError> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> =
            r.headers().map_err(|e| BasisError::Dimension(e.to_string()))?.iter().map(String::from).collect();
        let n_axes = header.len().saturating_sub(1);
        let mut axes: Vec<Vec<f64>> = vec![Vec::new(); n_axes];
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| BasisError::Dimension(e.to_string()))?;
            let nums: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| BasisError::Dimension(format!("bad number '{s}'"))))
                .collect::<Result<_, _>>()?;
            for (d, axis) in axes.iter_mut().enumerate() {
                if !axis.iter().any(|v: &f64| v.to_bits() == nums[d].to_bits()) {
                    axis.push(nums[d]);
                }
            }
            values.push(nums[n_axes]);
        }
        Ok(EffectSurface {
            term: term.to_string(),
            axes: header[..n_axes].iter().cloned().zip(axes).collect(),
            levels: None,
            values,
        })
    }
}

fn scalar<'a>(data: &'a FunctionalDataset, name: &str) -> Result<&'a [f64], BasisError> {
    match data.covariate(name) {
        Some(Covariate::Scalar { values }) => Ok(values),
        _ => Err(BasisError::Prediction(format!("scalar covariate '{name}' missing"))),
    }
}

fn functional<'a>(data: &'a FunctionalDataset, name: &str) -> Result<&'a crate::data::FunctionalCovariate, BasisError> {
    match data.covariate(name) {
        Some(Covariate::Functional(f)) => Ok(f),
        _ => Err(BasisError::Prediction(format!("functional covariate '{name}' missing"))),
    }
}

/// Level indices of `data`'s categorical covariate mapped onto `levels`.
fn level_codes(data: &FunctionalDataset, name: &str, levels: &[String]) -> Result<Vec<usize>, BasisError> {
    match data.covariate(name) {
        Some(Covariate::Categorical { levels: own, codes }) => {
            let map: Vec<Option<usize>> = own.iter().map(|l| levels.iter().position(|m| m == l)).collect();
            codes
                .iter()
                .map(|&c| {
                    map[c].ok_or_else(|| {
                        BasisError::Prediction(format!("unseen level '{}' of covariate '{name}'", own[c]))
                    })
                })
                .collect()
        }
        _ => Err(BasisError::Prediction(format!("categorical covariate '{name}' missing"))),
    }
}

fn dummies(codes: &[usize], n_levels: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(codes.len(), n_levels);
    for (i, &c) in codes.iter().enumerate() {
        d[(i, c)] = 1.0;
    }
    d
}

fn range_of(values: &[f64], name: &str) -> Result<(f64, f64), BasisError> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(BasisError::Dimension(format!("covariate '{name}' is constant")));
    }
    Ok((lo, hi))
}

fn spline_def(s: &BasisSettings, range: (f64, f64)) -> Result<SplineBasisDef, BasisError> {
    SplineBasisDef::new(s.degree, s.n_basis, range)
}

fn spline_penalty(k: usize, d: usize) -> DMatrix<f64> {
    if d == 0 {
        DMatrix::identity(k, k)
    } else {
        difference_penalty(k, d).expect("validated order")
    }
}

/// Values of a functional covariate after the recipe's standardization.
fn functional_values(
    data: &FunctionalDataset,
    name: &str,
    stats: &Option<Standardization>,
) -> Result<DMatrix<f64>, BasisError> {
    let f = functional(data, name)?;
    Ok(match stats {
        Some(s) => {
            if s.mean.len() != f.values.ncols() {
                return Err(BasisError::DomainMismatch(format!(
                    "covariate '{name}' has {} grid points, model expects {}",
                    f.values.ncols(),
                    s.mean.len()
                )));
            }
            s.apply(&f.values)
        }
        None => f.values.clone(),
    })
}

impl CovariatePart {
    /// Penalty matrices of the penalized covariate directions, in the
    /// block's covariate coefficient space.
    fn penalties(&self) -> Vec<DMatrix<f64>> {
        match self {
            CovariatePart::Constant
            | CovariatePart::Linear { .. }
            | CovariatePart::LinearProduct { .. }
            | CovariatePart::Concurrent { .. } => vec![],
            CovariatePart::Smooth { def, diff_order, z, .. } => {
                vec![z.transpose() * spline_penalty(def.n_basis, *diff_order) * z]
            }
            CovariatePart::Group { z, .. } => vec![DMatrix::identity(z.ncols(), z.ncols())],
            CovariatePart::SmoothPair { defs, diff_orders, z, .. } => {
                let (k1, k2) = (defs[0].n_basis, defs[1].n_basis);
                let p1 = spline_penalty(k1, diff_orders[0]).kronecker(&DMatrix::identity(k2, k2));
                let p2 = DMatrix::identity(k1, k1).kronecker(&spline_penalty(k2, diff_orders[1]));
                vec![z.transpose() * p1 * z, z.transpose() * p2 * z]
            }
            CovariatePart::Integral { def, diff_order, .. } => {
                vec![spline_penalty(def.n_basis, *diff_order)]
            }
        }
    }

    pub fn n_basis(&self) -> usize {
        match self {
            CovariatePart::Constant
            | CovariatePart::Linear { .. }
            | CovariatePart::LinearProduct { .. }
            | CovariatePart::Concurrent { .. } => 1,
            CovariatePart::Smooth { z, .. } | CovariatePart::Group { z, .. } | CovariatePart::SmoothPair { z, .. } => {
                z.ncols()
            }
            CovariatePart::Integral { def, .. } => def.n_basis,
        }
    }

    /// Time-constant covariate design (N×K_X), `None` for time-varying parts.
    fn static_design(&self, data: &FunctionalDataset) -> Result<Option<DMatrix<f64>>, BasisError> {
        let n = data.n_curves();
        Ok(Some(match self {
            CovariatePart::Constant => DMatrix::from_element(n, 1, 1.0),
            CovariatePart::Linear { covariate, shift } => {
                let z = scalar(data, covariate)?;
                DMatrix::from_fn(n, 1, |i, _| z[i] - shift)
            }
            CovariatePart::LinearProduct { covariates, shift } => {
                let a = scalar(data, &covariates[0])?;
                let b = scalar(data, &covariates[1])?;
                DMatrix::from_fn(n, 1, |i, _| a[i] * b[i] - shift)
            }
            CovariatePart::Smooth { covariate, def, z, .. } => def.eval(scalar(data, covariate)?)? * z,
            CovariatePart::Group { covariate, levels, slope, z } => {
                let mut d = dummies(&level_codes(data, covariate, levels)?, levels.len());
                if let Some(s) = slope {
                    let zs = scalar(data, s)?;
                    for (i, mut row) in d.row_iter_mut().enumerate() {
                        row *= zs[i];
                    }
                }
                d * z
            }
            CovariatePart::SmoothPair { covariates, defs, z, .. } => {
                let b1 = defs[0].eval(scalar(data, &covariates[0])?)?;
                let b2 = defs[1].eval(scalar(data, &covariates[1])?)?;
                row_tensor(&b1, &b2)? * z
            }
            CovariatePart::Integral { covariate, def, limits: Integration::Full, grid, standardization, .. } => {
                let x = functional_values(data, covariate, standardization)?;
                check_grid(data, covariate, grid)?;
                let w = trapezoid_weights(grid.points());
                let phi = def.eval(grid.points())?;
                weighted(&x, &w) * phi
            }
            CovariatePart::Integral { .. } | CovariatePart::Concurrent { .. } => return Ok(None),
        }))
    }

    /// Covariate-side basis rows at the evaluation points of an effect
    /// surface, with the axes describing them.
    fn surface_rows(&self, data_ranges: &SurfaceRanges) -> Result<SurfaceRows, BasisError> {
        let lin = |r: (f64, f64)| -> Vec<f64> {
            (0..SURFACE_POINTS).map(|i| r.0 + (r.1 - r.0) * i as f64 / (SURFACE_POINTS - 1) as f64).collect()
        };
        Ok(match self {
            CovariatePart::Constant | CovariatePart::Concurrent { .. } => {
                (DMatrix::from_element(1, 1, 1.0), vec![], None)
            }
            CovariatePart::Linear { covariate, shift } => {
                let zg = lin(data_ranges.get(covariate)?);
                let rows = DMatrix::from_fn(zg.len(), 1, |i, _| zg[i] - shift);
                (rows, vec![(covariate.clone(), zg)], None)
            }
            CovariatePart::LinearProduct { covariates, shift } => {
                let a = lin(data_ranges.get(&covariates[0])?);
                let b = lin(data_ranges.get(&covariates[1])?);
                let rows = DMatrix::from_fn(a.len() * b.len(), 1, |r, _| a[r / b.len()] * b[r % b.len()] - shift);
                (rows, vec![(covariates[0].clone(), a), (covariates[1].clone(), b)], None)
            }
            CovariatePart::Smooth { covariate, def, z, .. } => {
                let zg = lin(def.range);
                (def.eval(&zg)? * z, vec![(covariate.clone(), zg)], None)
            }
            CovariatePart::Group { covariate, levels, z, .. } => {
                let idx: Vec<f64> = (0..levels.len()).map(|l| l as f64).collect();
                (z.clone(), vec![(covariate.clone(), idx)], Some(levels.clone()))
            }
            CovariatePart::SmoothPair { covariates, defs, z, .. } => {
                let a = lin(defs[0].range);
                let b = lin(defs[1].range);
                let ea: Vec<f64> = a.iter().flat_map(|&v| std::iter::repeat_n(v, b.len())).collect();
                let eb: Vec<f64> = (0..a.len()).flat_map(|_| b.iter().copied()).collect();
                let rows = row_tensor(&defs[0].eval(&ea)?, &defs[1].eval(&eb)?)? * z;
                (rows, vec![(covariates[0].clone(), a), (covariates[1].clone(), b)], None)
            }
            CovariatePart::Integral { def, grid, .. } => {
                let s = grid.points().to_vec();
                (def.eval(&s)?, vec![("s".to_string(), s)], None)
            }
        })
    }
}

/// Basis rows, named axes and categorical labels of an effect surface.
type SurfaceRows = (DMatrix<f64>, Vec<(String, Vec<f64>)>, Option<Vec<String>>);

/// Observed ranges of scalar covariates, for linear-effect surfaces.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRanges(pub indexmap::IndexMap<String, (f64, f64)>);

impl SurfaceRanges {
    pub fn from_data(data: &FunctionalDataset) -> Self {
        let mut m = indexmap::IndexMap::new();
        for (name, cov) in &data.covariates {
            if let Covariate::Scalar { values } = cov {
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                m.insert(name.clone(), (lo, hi));
            }
        }
        SurfaceRanges(m)
    }

    fn get(&self, name: &str) -> Result<(f64, f64), BasisError> {
        self.0.get(name).copied().ok_or_else(|| BasisError::Prediction(format!("no range recorded for '{name}'")))
    }
}

fn weighted(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, k| x[(i, k)] * w[k])
}

fn check_grid(data: &FunctionalDataset, name: &str, grid: &Grid) -> Result<(), BasisError> {
    let f = functional(data, name)?;
    if !f.grid.matches(grid) {
        return Err(BasisError::DomainMismatch(format!(
            "covariate '{name}' is observed on a different grid than at training time"
        )));
    }
    Ok(())
}

impl BlockRecipe {
    pub fn n_coef(&self) -> usize {
        self.cov.n_basis() * self.time.n_basis()
    }

    pub fn name(&self) -> String {
        self.term.display_name()
    }

    /// Calibrated penalty `Σ λ_x (P_x ⊗ I) + λ_y (I ⊗ P_y)`.
    pub fn penalty(&self) -> DMatrix<f64> {
        let kx = self.cov.n_basis();
        let ky = self.time.n_basis();
        let mut p = DMatrix::identity(kx, kx).kronecker(&self.time.penalty()) * self.lambda_y;
        for (px, &l) in self.cov.penalties().iter().zip(&self.lambda_x) {
            if l != 0.0 {
                p += px.kronecker(&DMatrix::identity(ky, ky)) * l;
            }
        }
        p
    }

    /// Design of this block on (possibly new) data.
    pub fn design(&self, data: &FunctionalDataset) -> Result<Design, BasisError> {
        let t = data.grid.points();
        let by = self.time.eval(t)?;
        if let Some(bx) = self.cov.static_design(data)? {
            return Ok(Design::Kron { bx, by });
        }
        let (n, g) = (data.n_curves(), t.len());
        let ky = by.ncols();
        match &self.cov {
            CovariatePart::Integral { covariate, def, grid, standardization, .. } => {
                check_grid(data, covariate, grid)?;
                let x = functional_values(data, covariate, standardization)?;
                let s = grid.points();
                let phi = def.eval(s)?;
                let ks = phi.ncols();
                let mut b = DMatrix::zeros(n * g, ks * ky);
                for (gi, &tv) in t.iter().enumerate() {
                    let w = historical_weights(s, tv);
                    let h = weighted(&x, &w) * &phi;
                    for i in 0..n {
                        let r = i * g + gi;
                        for a in 0..ks {
                            let ha = h[(i, a)];
                            if ha != 0.0 {
                                for c in 0..ky {
                                    b[(r, a * ky + c)] = ha * by[(gi, c)];
                                }
                            }
                        }
                    }
                }
                Ok(Design::Dense { b, n, g })
            }
            CovariatePart::Concurrent { covariate, standardization } => {
                let f = functional(data, covariate)?;
                if !f.grid.matches(&data.grid) {
                    return Err(BasisError::DomainMismatch(format!(
                        "covariate '{covariate}' must be observed on the response grid"
                    )));
                }
                let x = functional_values(data, covariate, standardization)?;
                let b = DMatrix::from_fn(n * g, ky, |r, c| x[(r / g, r % g)] * by[(r % g, c)]);
                Ok(Design::Dense { b, n, g })
            }
            _ => unreachable!("static parts handled above"),
        }
    }

    /// Effect function of coefficient vector `theta` on the reporting grid:
    /// covariate values (or `s`, or group levels) crossed with `t`.
    pub fn surface(
        &self,
        theta: &DVector<f64>,
        t: &[f64],
        ranges: &SurfaceRanges,
    ) -> Result<EffectSurface, BasisError> {
        let (rows, mut axes, levels) = self.cov.surface_rows(ranges)?;
        let by = self.time.eval(t)?;
        let coef = DMatrix::from_row_slice(self.cov.n_basis(), self.time.n_basis(), theta.as_slice());
        let vals = rows * coef * by.transpose();
        let hist = matches!(self.cov, CovariatePart::Integral { limits: Integration::Historical, .. });
        let mut values = Vec::with_capacity(vals.len());
        for r in 0..vals.nrows() {
            let s = axes.first().map(|a| a.1[r % a.1.len().max(1)]).unwrap_or(0.0);
            for (gi, &tv) in t.iter().enumerate() {
                // β(s, t) of a historical effect is undefined for s > t.
                if hist && s > tv + 1e-12 * tv.abs().max(1.0) {
                    values.push(f64::NAN);
                } else {
                    values.push(vals[(r, gi)]);
                }
            }
        }
        axes.push(("t".to_string(), t.to_vec()));
        Ok(EffectSurface { term: self.name(), axes, levels, values })
    }
}

/// Penalized direction used when splitting the degrees of freedom.
struct Direction {
    design: DMatrix<f64>,
    penalty: DMatrix<f64>,
}

fn calibrate_direction(dir: &Direction, df: f64) -> Result<f64, BasisError> {
    let gram = dir.design.tr_mul(&dir.design);
    let rank = psd_rank(&gram) as f64;
    if df >= rank {
        return Ok(0.0);
    }
    // Null-space dimension of the penalty within the design's column space.
    let null = {
        let big = &gram + &dir.penalty * (1e8 * gram.trace() / dir.penalty.trace().max(1e-300));
        super::df::hat_trace(&gram, &(big - &gram), 1.0)
    };
    let target = if df <= null + 1e-6 {
        let t = null + (0.5f64).min((rank - null) / 2.0);
        log::debug!("marginal df {df} not above null dimension {null}; using {t}");
        t
    } else {
        df
    };
    df_to_lambda(&gram, &dir.penalty, target)
}

/// Builds the calibrated design block of `term` on the training data.
pub fn build_effect_design(term: &TermDescriptor, data: &FunctionalDataset) -> Result<DesignBlock, BasisError> {
    term.validate(data, &term.display_name()).map_err(BasisError::Spec)?;
    let t = data.grid.points();
    let time = match term.kind {
        TermKind::StepIntercept => TimePart::Step { changepoints: term.changepoints.clone() },
        _ => TimePart::Spline {
            def: spline_def(&term.time_basis, data.grid.range())?,
            diff_order: term.time_basis.diff_order,
        },
    };
    let n = data.n_curves();
    let cs = &term.covariate_basis;
    let ones = DMatrix::from_element(n, 1, 1.0);
    // Covariate part plus the marginal designs used for df splitting.
    let (cov, marg): (CovariatePart, Vec<DMatrix<f64>>) = match term.kind {
        TermKind::FunctionalIntercept | TermKind::StepIntercept => (CovariatePart::Constant, vec![]),
        TermKind::LinearScalar => {
            let z = scalar(data, &term.covariates[0])?;
            let shift = if term.centered() { z.iter().sum::<f64>() / n as f64 } else { 0.0 };
            (CovariatePart::Linear { covariate: term.covariates[0].clone(), shift }, vec![])
        }
        TermKind::LinearInteraction => {
            let a = scalar(data, &term.covariates[0])?;
            let b = scalar(data, &term.covariates[1])?;
            let shift = if term.centered() { a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / n as f64 } else { 0.0 };
            let covariates = [term.covariates[0].clone(), term.covariates[1].clone()];
            (CovariatePart::LinearProduct { covariates, shift }, vec![])
        }
        TermKind::SmoothScalar => {
            let name = &term.covariates[0];
            let zv = scalar(data, name)?;
            let def = spline_def(cs, range_of(zv, name)?)?;
            let full = def.eval(zv)?;
            let (z, bx) = if term.centered() {
                orthogonalize(&full, &ones)?
            } else {
                (DMatrix::identity(def.n_basis, def.n_basis), full)
            };
            (CovariatePart::Smooth { covariate: name.clone(), def, diff_order: cs.diff_order, z }, vec![bx])
        }
        TermKind::GroupIntercept | TermKind::GroupLinear => {
            let name = &term.covariates[0];
            let levels = match data.covariate(name) {
                Some(Covariate::Categorical { levels, .. }) => levels.clone(),
                _ => unreachable!("validated"),
            };
            let mut full = dummies(&level_codes(data, name, &levels)?, levels.len());
            let slope = if term.kind == TermKind::GroupLinear {
                let zs = scalar(data, &term.covariates[1])?;
                for (i, mut row) in full.row_iter_mut().enumerate() {
                    row *= zs[i];
                }
                Some(term.covariates[1].clone())
            } else {
                None
            };
            let (z, bx) = if term.centered() {
                let constraint = match (&term.within, &slope) {
                    (Some(parent), _) => {
                        let plevels = match data.covariate(parent) {
                            Some(Covariate::Categorical { levels, .. }) => levels.clone(),
                            _ => unreachable!("validated"),
                        };
                        dummies(&level_codes(data, parent, &plevels)?, plevels.len())
                    }
                    (None, Some(s)) => {
                        let zs = scalar(data, s)?;
                        DMatrix::from_column_slice(n, 1, zs)
                    }
                    (None, None) => ones.clone(),
                };
                orthogonalize(&full, &constraint)?
            } else {
                (DMatrix::identity(levels.len(), levels.len()), full)
            };
            (CovariatePart::Group { covariate: name.clone(), levels, slope, z }, vec![bx])
        }
        TermKind::SmoothInteraction => {
            let (n1, n2) = (&term.covariates[0], &term.covariates[1]);
            let (z1, z2) = (scalar(data, n1)?, scalar(data, n2)?);
            let d1 = spline_def(cs, range_of(z1, n1)?)?;
            let d2 = spline_def(cs, range_of(z2, n2)?)?;
            let (b1, b2) = (d1.eval(z1)?, d2.eval(z2)?);
            let full = row_tensor(&b1, &b2)?;
            let z = if term.centered() {
                let mut marg = DMatrix::zeros(n, b1.ncols() + b2.ncols());
                marg.columns_mut(0, b1.ncols()).copy_from(&b1);
                marg.columns_mut(b1.ncols(), b2.ncols()).copy_from(&b2);
                orthogonalize(&full, &marg)?.0
            } else {
                DMatrix::identity(full.ncols(), full.ncols())
            };
            (
                CovariatePart::SmoothPair {
                    covariates: [n1.clone(), n2.clone()],
                    defs: [d1, d2],
                    diff_orders: [cs.diff_order, cs.diff_order],
                    z,
                },
                vec![b1, b2],
            )
        }
        TermKind::FunctionalLinear | TermKind::Historical => {
            let name = &term.covariates[0];
            let f = functional(data, name)?;
            let standardization = if term.standardize && !f.standardized {
                Some(standardize_functional(f).map_err(BasisError::Data)?.1)
            } else {
                None
            };
            let def = spline_def(cs, f.grid.range())?;
            let limits = if term.kind == TermKind::Historical { Integration::Historical } else { Integration::Full };
            let x = functional_values(data, name, &standardization)?;
            let marg = weighted(&x, &trapezoid_weights(f.grid.points())) * def.eval(f.grid.points())?;
            (
                CovariatePart::Integral {
                    covariate: name.clone(),
                    def,
                    diff_order: cs.diff_order,
                    limits,
                    grid: f.grid.clone(),
                    standardization,
                },
                vec![marg],
            )
        }
        TermKind::Concurrent => {
            let name = &term.covariates[0];
            let f = functional(data, name)?;
            let standardization = if term.standardize && !f.standardized {
                Some(standardize_functional(f).map_err(BasisError::Data)?.1)
            } else {
                None
            };
            (CovariatePart::Concurrent { covariate: name.clone(), standardization }, vec![])
        }
    };

    let mut recipe = BlockRecipe { term: term.clone(), cov, time, lambda_x: vec![], lambda_y: 1.0, df_target: term.df };
    let cov_pens = recipe.cov.penalties();
    let m = cov_pens.len() + 1;
    if m == 1 {
        recipe.lambda_x = vec![];
        recipe.lambda_y = 1.0;
    } else {
        let per = (term.df / TIME_DF).powf(1.0 / (m - 1) as f64);
        let by = recipe.time.eval(t)?;
        recipe.lambda_y = calibrate_direction(&Direction { design: by, penalty: recipe.time.penalty() }, TIME_DF)?;
        // Two-way interactions calibrate each direction on its raw marginal
        // basis; single directions use the constrained block basis.
        recipe.lambda_x = match &recipe.cov {
            CovariatePart::SmoothPair { defs, diff_orders, .. } => marg
                .iter()
                .zip(defs.iter().zip(diff_orders))
                .map(|(d, (def, &o))| {
                    calibrate_direction(&Direction { design: d.clone(), penalty: spline_penalty(def.n_basis, o) }, per)
                })
                .collect::<Result<_, _>>()?,
            _ => marg
                .iter()
                .zip(&cov_pens)
                .map(|(d, p)| calibrate_direction(&Direction { design: d.clone(), penalty: p.clone() }, per))
                .collect::<Result<_, _>>()?,
        };
        if recipe.lambda_y == 0.0 && recipe.lambda_x.iter().all(|&l| l == 0.0) {
            // Every direction was left unpenalized by its marginal target;
            // fall back to trace-normalized penalties for the shape.
            let ty = recipe.time.penalty().trace();
            recipe.lambda_y = 1.0 / ty.max(1e-300);
            recipe.lambda_x = cov_pens.iter().map(|p| 1.0 / p.trace().max(1e-300)).collect();
        }
    }

    let design = recipe.design(data)?;
    let gram = design.gram();
    let shape = recipe.penalty();
    let scale = df_to_lambda(&gram, &shape, term.df).map_err(|e| match e {
        BasisError::InfeasibleDf(msg) => BasisError::InfeasibleDf(format!("term '{}': {msg}", term.display_name())),
        other => other,
    })?;
    recipe.lambda_y *= scale;
    for l in recipe.lambda_x.iter_mut() {
        *l *= scale;
    }
    let penalty = recipe.penalty();
    Ok(DesignBlock { recipe, design, penalty })
}
