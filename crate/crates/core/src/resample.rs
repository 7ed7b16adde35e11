//! Curve-level resampling: out-of-bag risk paths, stopping-iteration
//! selection and basic bootstrap bands for effect surfaces.

use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{DesignBlock, EffectSurface};
use crate::boost::{
    build_blocks, learners_for, loss_sum, loss_weights, rebuild_blocks, BoostError, Engine, FittedModel, Hyper,
};
use crate::data::{fmt_num, FunctionalDataset};
use crate::families::{family_by_id, Family};
use crate::terms::ModelSpec;

/// Smallest number of bootstrap replicates accepted for bands.
pub const MIN_BAND_REPLICATES: usize = 50;

#[derive(Debug, Error)]
pub enum ResampleError {
    #[error("resampling needs at least two curves, got {0}")]
    TooFewCurves(usize),
    #[error("invalid fold configuration: {0}")]
    Folds(String),
    #[error("every fold failed; no risk path available")]
    NoCompleteRows,
    #[error("bands need at least {MIN_BAND_REPLICATES} bootstrap replicates, got {0}")]
    TooFewReplicates(usize),
    #[error(transparent)]
    Boost(#[from] BoostError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMethod {
    Bootstrap,
    Kfold,
    Subsampling,
}

impl std::str::FromStr for ResampleMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bootstrap" => Ok(Self::Bootstrap),
            "kfold" => Ok(Self::Kfold),
            "subsampling" => Ok(Self::Subsampling),
            other => Err(format!("unknown resampling method '{other}'")),
        }
    }
}

/// Curve indices (0-based) used for fitting and for scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    /// Multiset of training curves.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub method: ResampleMethod,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

fn fold_rng(seed: u64, fold: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fold as u64 + 1);
    rng
}

fn complement(n: usize, train: &[usize]) -> Vec<usize> {
    let mut inside = vec![false; n];
    for &i in train {
        inside[i] = true;
    }
    (0..n).filter(|&i| !inside[i]).collect()
}

/// Draws `n_folds` curve-level resamples of `n` curves.
pub fn make_folds(n: usize, method: ResampleMethod, n_folds: usize, seed: u64) -> Result<FoldPlan, ResampleError> {
    if n < 2 {
        return Err(ResampleError::TooFewCurves(n));
    }
    if n_folds < 1 || (method == ResampleMethod::Kfold && !(2..=n).contains(&n_folds)) {
        return Err(ResampleError::Folds(format!("{n_folds} folds are not possible for {method:?} with {n} curves")));
    }
    let folds = match method {
        ResampleMethod::Kfold => {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut fold_rng(seed, 0));
            (0..n_folds)
                .map(|k| {
                    let (lo, hi) = (k * n / n_folds, (k + 1) * n / n_folds);
                    let mut test = perm[lo..hi].to_vec();
                    test.sort_unstable();
                    let mut train: Vec<usize> = perm[..lo].iter().chain(&perm[hi..]).copied().collect();
                    train.sort_unstable();
                    Fold { train, test }
                })
                .collect()
        }
        ResampleMethod::Subsampling => (0..n_folds)
            .map(|k| {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut fold_rng(seed, k));
                let mut train = perm[..n.div_ceil(2)].to_vec();
                train.sort_unstable();
                let test = complement(n, &train);
                Fold { train, test }
            })
            .collect(),
        ResampleMethod::Bootstrap => (0..n_folds)
            .map(|k| {
                let mut rng = fold_rng(seed, k);
                loop {
                    let mut train: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                    train.sort_unstable();
                    let test = complement(n, &train);
                    if !test.is_empty() {
                        break Fold { train, test };
                    }
                }
            })
            .collect(),
    };
    Ok(FoldPlan { method, seed, folds })
}

/// Out-of-sample risk per fold (rows) and iteration (columns); failed
/// folds are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskMatrix {
    pub rows: Vec<Option<Vec<f64>>>,
}

impl RiskMatrix {
    pub fn n_iterations(&self) -> usize {
        self.rows.iter().flatten().map(|r| r.len()).max().unwrap_or(0)
    }

    /// Mean over complete rows at every iteration.
    pub fn mean_path(&self) -> Result<Vec<f64>, ResampleError> {
        let rows: Vec<&Vec<f64>> = self.rows.iter().flatten().collect();
        if rows.is_empty() {
            return Err(ResampleError::NoCompleteRows);
        }
        let m = rows[0].len();
        Ok((0..m).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64).collect())
    }

    /// Rows = folds plus a final `mean` row, columns = iterations 0..M.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ResampleError> {
        let mut w = csv::Writer::from_writer(writer);
        let m = self.n_iterations();
        let mut header = vec!["fold".to_string()];
        header.extend((0..m).map(|k| format!("m{k}")));
        w.write_record(&header)?;
        for (f, row) in self.rows.iter().enumerate() {
            let mut rec = vec![f.to_string()];
            match row {
                Some(r) => rec.extend(r.iter().map(|v| fmt_num(*v))),
                None => rec.extend((0..m).map(|_| "NA".to_string())),
            }
            w.write_record(&rec)?;
        }
        if let Ok(mean) = self.mean_path() {
            let mut rec = vec!["mean".to_string()];
            rec.extend(mean.iter().map(|v| fmt_num(*v)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| ResampleError::Csv(e.into()))?;
        Ok(())
    }
}

/// Iteration with the smallest mean out-of-sample risk; ties go to the
/// smallest iteration.
pub fn select_mstop(risk: &RiskMatrix) -> Result<usize, ResampleError> {
    let mean = risk.mean_path()?;
    Ok(argmin_first(&mean))
}

fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = k;
        }
    }
    best
}

/// Result of boosting on one fold: the test-risk path and the updates.
struct FoldRun {
    path: Vec<f64>,
    history: Vec<crate::boost::Step>,
}

fn run_fold(
    family: &'static dyn Family,
    data: &FunctionalDataset,
    blocks: &[Vec<DesignBlock>],
    hyper: &Hyper,
    fold: &Fold,
) -> Result<FoldRun, BoostError> {
    let y_train = data.response.select_rows(&fold.train);
    let y_test = data.response.select_rows(&fold.test);
    let offsets = match hyper.offsets {
        crate::boost::OffsetInit::Zero => vec![0.0; family.n_params()],
        crate::boost::OffsetInit::Moments => family.moment_offsets(y_train.as_slice())?,
    };
    let learners = learners_for(blocks, Some(&fold.train))?;
    let test_designs: Vec<Vec<crate::basis::Design>> =
        blocks.iter().map(|bs| bs.iter().map(|b| b.design.select_curves(&fold.test)).collect()).collect();
    let weights = loss_weights(&data.grid, hyper);
    for v in y_test.iter() {
        family.check_support(*v)?;
    }
    let (nt, g) = y_test.shape();
    let mut h_test: Vec<DMatrix<f64>> = offsets.iter().map(|&o| DMatrix::from_element(nt, g, o)).collect();
    let score = |h: &[DMatrix<f64>]| {
        let refs: Vec<&DMatrix<f64>> = h.iter().collect();
        loss_sum(family, &y_test, &refs, weights.as_deref()) / nt as f64
    };
    let mut path = vec![score(&h_test)];
    let mut engine = Engine::new(family, &y_train, &learners, offsets, hyper, weights.clone())?;
    engine.run(hyper.m_stop_max, |_, steps| {
        for s in steps {
            let inc = nalgebra::DVector::from_column_slice(&s.increment);
            h_test[s.q] += test_designs[s.q][s.j].mul(&inc);
        }
        path.push(score(&h_test));
        Ok(())
    })?;
    let history = engine.into_state().history;
    Ok(FoldRun { path, history })
}

/// Fits every fold on its training curves and scores the held-out curves
/// at every iteration `0..=m_stop_max`. Blocks are calibrated once on the
/// full data.
pub fn oob_risk_path(
    data: &FunctionalDataset,
    spec: &ModelSpec,
    hyper: &Hyper,
    plan: &FoldPlan,
) -> Result<RiskMatrix, ResampleError> {
    let blocks = build_blocks(spec, data)?;
    oob_risk_path_blocks(data, spec, hyper, plan, &blocks)
}

/// As [`oob_risk_path`] with prebuilt blocks.
pub fn oob_risk_path_blocks(
    data: &FunctionalDataset,
    spec: &ModelSpec,
    hyper: &Hyper,
    plan: &FoldPlan,
    blocks: &[Vec<DesignBlock>],
) -> Result<RiskMatrix, ResampleError> {
    let family = family_by_id(&spec.family).map_err(BoostError::from)?;
    let rows = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(k, fold)| match run_fold(family, data, blocks, hyper, fold) {
            Ok(run) => Some(run.path),
            Err(e) => {
                log::warn!("fold {k} failed: {e}");
                None
            }
        })
        .collect();
    Ok(RiskMatrix { rows })
}

/// Pointwise basic bootstrap band of one effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectBand {
    pub q: usize,
    pub j: usize,
    pub estimate: EffectSurface,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Bootstrap replicates that contributed.
    pub replicates: usize,
}

impl EffectBand {
    /// Long format: axis columns plus `estimate,lower,upper`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ResampleError> {
        let mut buf = Vec::new();
        self.estimate.write_csv(&mut buf)?;
        let mut r = csv::Reader::from_reader(buf.as_slice());
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        header.pop();
        header.extend(["estimate", "lower", "upper"].map(String::from));
        w.write_record(&header)?;
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            let mut out: Vec<String> = rec.iter().map(String::from).collect();
            out.push(fmt_num(self.lower[k]));
            out.push(fmt_num(self.upper[k]));
            w.write_record(&out)?;
        }
        w.flush().map_err(|e| ResampleError::Csv(e.into()))?;
        Ok(())
    }
}

/// Linear-interpolation sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Basic bootstrap bands `[f̂ − Δ*_{1−α/2}, f̂ − Δ*_{α/2}]` for every effect
/// of `model`, with `Δ* = f̂* − f̂`.
///
/// Each replicate is fitted on a curve-level bootstrap sample with the
/// stored blocks and stopped at the iteration minimizing its own
/// out-of-bag risk, capped at the model's fitted iterations. Effects
/// evaluate on the model's grid; effects never selected in a replicate
/// count as zero surfaces.
pub fn bootstrap_bands(
    model: &FittedModel,
    data: &FunctionalDataset,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<Vec<EffectBand>, ResampleError> {
    if replicates < MIN_BAND_REPLICATES {
        return Err(ResampleError::TooFewReplicates(replicates));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(ResampleError::Folds(format!("band level {level} outside (0, 1)")));
    }
    let family = model.family()?;
    let blocks = rebuild_blocks(&model.recipes, data)?;
    let plan = make_folds(data.n_curves(), ResampleMethod::Bootstrap, replicates, seed)?;
    let mut hyper = model.hyper.clone();
    hyper.m_stop_max = model.iterations;
    let t = model.grid.points().to_vec();
    let shapes: Vec<Vec<usize>> = model.recipes.iter().map(|rs| rs.iter().map(|r| r.n_coef()).collect()).collect();

    let runs: Vec<Option<Vec<Vec<nalgebra::DVector<f64>>>>> = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(k, fold)| match run_fold(family, data, &blocks, &hyper, fold) {
            Ok(run) => {
                let m = argmin_first(&run.path);
                Some(crate::boost::replay_coefficients(&shapes, &run.history, m))
            }
            Err(e) => {
                log::warn!("bootstrap replicate {k} failed: {e}");
                None
            }
        })
        .collect();
    let runs: Vec<_> = runs.into_iter().flatten().collect();
    if runs.is_empty() {
        return Err(ResampleError::NoCompleteRows);
    }
    let coef = model.coefficients(None)?;
    let alpha = 1.0 - level;
    let mut bands = Vec::new();
    for (q, recipes) in model.recipes.iter().enumerate() {
        for (j, recipe) in recipes.iter().enumerate() {
            let estimate = recipe.surface(&coef[q][j], &t, &model.ranges).map_err(BoostError::from)?;
            let reps: Vec<Vec<f64>> = runs
                .iter()
                .map(|c| recipe.surface(&c[q][j], &t, &model.ranges).map(|s| s.values))
                .collect::<Result<_, _>>()
                .map_err(BoostError::from)?;
            let n_cells = estimate.values.len();
            let mut lower = vec![f64::NAN; n_cells];
            let mut upper = vec![f64::NAN; n_cells];
            let mut delta = Vec::with_capacity(reps.len());
            for c in 0..n_cells {
                let f = estimate.values[c];
                if f.is_nan() {
                    continue;
                }
                delta.clear();
                delta.extend(reps.iter().map(|r| r[c] - f));
                delta.sort_by(|a, b| a.total_cmp(b));
                lower[c] = f - quantile_sorted(&delta, 1.0 - alpha / 2.0);
                upper[c] = f - quantile_sorted(&delta, alpha / 2.0);
            }
            bands.push(EffectBand { q, j, estimate, lower, upper, replicates: runs.len() });
        }
    }
    Ok(bands)
}
