//! Acceptance suite. Each test covers one criterion, prints a single
//! `PASS`/`FAIL` line to stderr (visible without `--nocapture`) and then
//! asserts. Tolerances are pinned as constants next to each test.

use std::io::Write;
use std::time::Instant;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use funboost::basis::{hat_trace, CovariatePart, Design, DesignBlock};
use funboost::boost::{FittedModel, Hyper, Learner, Method};
use funboost::data::{Covariate, FunctionalCovariate, FunctionalDataset, Grid};
use funboost::families::{Family, GAMMA_CV, GAUSSIAN, ZA_GAMMA};
use funboost::resample::{make_folds, oob_risk_path, select_mstop, ResampleMethod, RiskMatrix};
use funboost::simulate::{
    draw_general_curves, evaluate, generate_scenario, parametric_growth_curve, za_gamma_template_spec, DependencyLevel,
    GrowthCurve, RandomSplineDef, ScenarioConfig, ScenarioModel,
};
use funboost::terms::{BasisSettings, ModelSpec, TermDescriptor, TermKind};

fn report(id: u32, title: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let line = format!("[acceptance {id:>2}] {status} {title}: {detail}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Bootstrap-selected stopping iteration and the out-of-bag risk matrix.
fn bootstrap_mstop(data: &FunctionalDataset, spec: &ModelSpec, hyper: &Hyper, seed: u64) -> (usize, RiskMatrix) {
    let plan = make_folds(data.n_curves(), ResampleMethod::Bootstrap, 10, seed).unwrap();
    let risk = oob_risk_path(data, spec, hyper, &plan).unwrap();
    (select_mstop(&risk).unwrap(), risk)
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

const GRAD_POINTS: usize = 1000;
const GRAD_REL_TOL: f64 = 1e-6;
const GRAD_STEP: f64 = 1e-3;
/// Denominator floor of the relative error, so that exact zeros compare.
const GRAD_FLOOR: f64 = 1e-3;
const GRAD_SECONDS: f64 = 10.0;

/// Fourth-order central difference of the loss in predictor `q`.
fn fd_gradient(family: &dyn Family, y: f64, h: &[f64], q: usize) -> f64 {
    let at = |d: f64| {
        let mut hh = h.to_vec();
        hh[q] += d;
        family.loss(y, &hh)
    };
    let s = GRAD_STEP;
    (-at(2.0 * s) + 8.0 * at(s) - 8.0 * at(-s) + at(-2.0 * s)) / (12.0 * s)
}

#[test]
fn criterion_01_gradients_match_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let families: [&dyn Family; 3] = [&GAUSSIAN, &GAMMA_CV, &ZA_GAMMA];
    for family in families {
        for _ in 0..GRAD_POINTS {
            let (y, h) = match family.id() {
                "gaussian" => {
                    (rng.random_range(-3.0..3.0), vec![rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)])
                }
                "gamma-cv" => {
                    (rng.random_range(0.05..5.0), vec![rng.random_range(-1.0..1.5), rng.random_range(-1.5..0.5)])
                }
                _ => {
                    let y = if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random_range(0.05..5.0) };
                    (y, vec![rng.random_range(-1.0..1.5), rng.random_range(-1.5..0.5), rng.random_range(-2.0..2.0)])
                }
            };
            for q in 0..family.n_params() {
                let analytic = -family.neg_gradient(q, y, &h);
                let numeric = fd_gradient(family, y, &h, q);
                let rel = (analytic - numeric).abs() / analytic.abs().max(GRAD_FLOOR);
                worst = worst.max(rel);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < GRAD_REL_TOL && secs < GRAD_SECONDS;
    report(
        1,
        "gradient vs finite differences",
        pass,
        &format!("max rel err {worst:.2e} (< {GRAD_REL_TOL:e}), {secs:.2} s"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 2. and 3. Random design blocks

const N_BLOCKS: usize = 100;
const LEARNER_TOL: f64 = 1e-10;
const ORTHO_TOL: f64 = 1e-8;
const DF_TOL: f64 = 1e-6;

fn random_dataset(rng: &mut ChaCha8Rng) -> FunctionalDataset {
    let n = rng.random_range(30..60);
    let g = rng.random_range(8..20);
    let grid = Grid::uniform(0.0, 1.0, g).unwrap();
    let y = DMatrix::from_fn(n, g, |_, _| rng.random_range(-1.0..1.0));
    let mut cov = IndexMap::new();
    for name in ["z1", "z2"] {
        let values = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        cov.insert(name.to_string(), Covariate::Scalar { values });
    }
    let group: Vec<String> = (0..n).map(|i| format!("g{}", i % 4)).collect();
    cov.insert("g".into(), Covariate::categorical_from_labels(&group));
    let batch: Vec<String> = (0..n).map(|i| format!("b{}", i % 8)).collect();
    cov.insert("batch".into(), Covariate::categorical_from_labels(&batch));
    let x = DMatrix::from_fn(n, g, |_, _| rng.random_range(-1.0..1.0));
    cov.insert("x".into(), Covariate::Functional(FunctionalCovariate::new(x, grid.clone()).unwrap()));
    FunctionalDataset::new(y, grid, cov).unwrap()
}

fn random_term(rng: &mut ChaCha8Rng, i: usize) -> TermDescriptor {
    let df = rng.random_range(2.5..5.0);
    let time = BasisSettings::new(3, rng.random_range(5..9), 2);
    let covb = BasisSettings::new(3, rng.random_range(5..8), 2);
    let t = match i % 11 {
        0 => TermDescriptor::functional_intercept(),
        1 => TermDescriptor::new(TermKind::StepIntercept, &[]).with_changepoints(vec![0.3, 0.6]).with_df(2.5),
        2 => TermDescriptor::new(TermKind::LinearScalar, &["z1"]),
        3 => TermDescriptor::new(TermKind::SmoothScalar, &["z2"]),
        4 => TermDescriptor::new(TermKind::GroupIntercept, &["g"]),
        5 => TermDescriptor::new(TermKind::GroupIntercept, &["batch"]).with_within("g"),
        6 => TermDescriptor::new(TermKind::GroupLinear, &["g", "z1"]),
        7 => TermDescriptor::new(TermKind::LinearInteraction, &["z1", "z2"]),
        8 => TermDescriptor::new(TermKind::SmoothInteraction, &["z1", "z2"]).with_df(df + 6.0),
        9 => TermDescriptor::new(TermKind::Historical, &["x"]).standardized(),
        _ => TermDescriptor::new(TermKind::FunctionalLinear, &["x"]),
    };
    // Tensor blocks have a four-dimensional penalty null space, so their
    // targets must lie above it.
    let df = match t.kind {
        TermKind::StepIntercept => return t,
        TermKind::SmoothInteraction => t.df,
        TermKind::FunctionalIntercept | TermKind::LinearScalar | TermKind::LinearInteraction => df,
        _ => df + 2.5,
    };
    t.with_df(df).with_time_basis(time).with_covariate_basis(covb)
}

/// `N_BLOCKS` blocks of every term kind on random datasets.
fn random_blocks() -> Vec<(FunctionalDataset, DesignBlock)> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    (0..N_BLOCKS)
        .map(|i| {
            let data = random_dataset(&mut rng);
            let term = random_term(&mut rng, i);
            let block = funboost::basis::build_effect_design(&term, &data)
                .unwrap_or_else(|e| panic!("block {i} ({}): {e}", term.display_name()));
            (data, block)
        })
        .collect()
}

#[test]
fn criterion_02_learner_matches_dense_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(203);
    let mut worst = 0.0f64;
    for (data, block) in random_blocks() {
        let (n, g) = (data.n_curves(), data.n_grid());
        let u = DMatrix::from_fn(n, g, |_, _| rng.random_range(-2.0..2.0));
        let learner = Learner::new(block.design.clone(), &block.penalty).unwrap();
        let fit = learner.fit(&u, u.norm_squared());
        // Dense oracle on the materialized (N·G)×K design, rows curve-major.
        let b = block.design.materialize();
        let uv = DVector::from_iterator(n * g, u.transpose().iter().copied());
        let system = b.tr_mul(&b) + &block.penalty;
        let rhs = b.tr_mul(&uv);
        let want = system.clone().lu().solve(&rhs).expect("penalized system is regular");
        let scale = want.amax().max(1.0);
        worst = worst.max((&fit.theta - &want).amax() / scale);
    }
    let pass = worst < LEARNER_TOL;
    report(
        2,
        "base-learner vs dense normal equations",
        pass,
        &format!("{N_BLOCKS} blocks, max scaled diff {worst:.2e} (< {LEARNER_TOL:e})"),
    );
    assert!(pass);
}

/// Largest `|Bᵀ C|` between the covariate part of a block and the columns
/// it was constrained against, or `None` for blocks without constraints.
fn constraint_violation(data: &FunctionalDataset, block: &DesignBlock) -> Option<f64> {
    let Design::Kron { bx, .. } = &block.design else { return None };
    let n = data.n_curves();
    let ones = DMatrix::from_element(n, 1, 1.0);
    let scalar = |name: &str| match data.covariate(name) {
        Some(Covariate::Scalar { values }) => values.clone(),
        _ => panic!("scalar covariate {name}"),
    };
    let dummies = |name: &str| match data.covariate(name) {
        Some(Covariate::Categorical { levels, codes }) => {
            DMatrix::from_fn(n, levels.len(), |i, l| if codes[i] == l { 1.0 } else { 0.0 })
        }
        _ => panic!("categorical covariate {name}"),
    };
    let c = match &block.recipe.cov {
        CovariatePart::SmoothPair { covariates, defs, .. } => {
            let b1 = defs[0].eval(&scalar(&covariates[0])).unwrap();
            let b2 = defs[1].eval(&scalar(&covariates[1])).unwrap();
            let mut m = DMatrix::zeros(n, b1.ncols() + b2.ncols());
            m.columns_mut(0, b1.ncols()).copy_from(&b1);
            m.columns_mut(b1.ncols(), b2.ncols()).copy_from(&b2);
            m
        }
        CovariatePart::Group { slope: None, .. } => match &block.recipe.term.within {
            Some(parent) => dummies(parent),
            None => ones,
        },
        CovariatePart::Group { slope: Some(s), .. } => DMatrix::from_column_slice(n, 1, &scalar(s)),
        CovariatePart::Smooth { .. } => ones,
        _ => return None,
    };
    Some(bx.tr_mul(&c).amax())
}

#[test]
fn criterion_03_orthogonalization_and_df_calibration() {
    let mut worst_ortho = 0.0f64;
    let mut constrained = 0;
    let mut interactions = 0;
    let mut worst_df = 0.0f64;
    for (data, block) in random_blocks() {
        if let Some(v) = constraint_violation(&data, &block) {
            constrained += 1;
            worst_ortho = worst_ortho.max(v);
        }
        if block.recipe.term.kind == TermKind::SmoothInteraction {
            interactions += 1;
        }
        let tr = hat_trace(&block.design.gram(), &block.penalty, 1.0);
        worst_df = worst_df.max((tr - block.recipe.df_target).abs());
    }
    let pass = worst_ortho < ORTHO_TOL && worst_df < DF_TOL && interactions > 0;
    report(
        3,
        "orthogonalization and df calibration",
        pass,
        &format!(
            "{constrained} constrained blocks ({interactions} interactions) max |BᵀC| {worst_ortho:.2e} (< {ORTHO_TOL:e}); \
             {N_BLOCKS} blocks max |tr H - df| {worst_df:.2e} (< {DF_TOL:e})"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 4. Random-spline contract

const TRACE_TOL: f64 = 1e-8;
const MC_DRAWS: usize = 10_000;
const MC_REL_TOL: f64 = 0.03;

#[test]
fn criterion_04_random_spline_contract() {
    let g = 60;
    let points: Vec<f64> = (0..g).map(|i| 2.0 + 8.0 * i as f64 / (g - 1) as f64).collect();
    let mut worst = 0.0f64;
    let mut cases = 0;
    for k in [6, 10, 20] {
        for d in 0..=3usize {
            for share in [0.0, 0.25, 0.8, 1.0] {
                if d == 0 && share > 0.0 {
                    continue;
                }
                let scale = 0.5 + k as f64 / 10.0;
                let def = RandomSplineDef::new(3, k, d, scale, share, (2.0, 10.0)).unwrap();
                let b = def.basis(&points).unwrap();
                let mean_var = b.norm_squared() / g as f64;
                let null_var = b.columns(0, d).norm_squared() / g as f64;
                worst = worst.max((mean_var - scale).abs()).max((null_var - share * scale).abs());
                cases += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst_mc = 0.0f64;
    for (d, share) in [(2, 0.8), (1, 0.5), (0, 0.0)] {
        let def = RandomSplineDef::new(3, 20, d, 1.7, share, (0.0, 1.0)).unwrap();
        let gp: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let draws = funboost::simulate::draw_random_spline(&def, &gp, MC_DRAWS, &mut rng).unwrap();
        let emp = draws.norm_squared() / (MC_DRAWS * gp.len()) as f64;
        worst_mc = worst_mc.max((emp / def.scale - 1.0).abs());
    }
    let pass = worst < TRACE_TOL && worst_mc < MC_REL_TOL;
    report(
        4,
        "random-spline variance identities",
        pass,
        &format!(
            "{cases} lattice cases max err {worst:.2e} (< {TRACE_TOL:e}); MC rel err {worst_mc:.4} (< {MC_REL_TOL})"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 5. Inverse-transform marginals

const KS_DRAWS: usize = 10_000;
const KS_TOL: f64 = 0.02;
const ZERO_TOL: f64 = 0.01;
const KS_SECONDS: f64 = 60.0;

/// Kolmogorov-Smirnov distance between a sample and a cdf that may have an
/// atom at zero (`atom0` is the cdf just below zero being 0).
fn ks_distance(sample: &mut [f64], cdf: &dyn Fn(f64) -> f64) -> f64 {
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sample.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < sample.len() {
        let x = sample[i];
        let mut j = i;
        while j < sample.len() && sample[j] == x {
            j += 1;
        }
        let f = cdf(x);
        // Left limit of the model cdf: only the atom at zero differs.
        let f_left = if x == 0.0 { 0.0 } else { f };
        d = d.max((j as f64 / n - f).abs()).max((i as f64 / n - f_left).abs());
        i = j;
    }
    d
}

#[test]
fn criterion_05_inverse_transform_marginals() {
    let start = Instant::now();
    let g = 6;
    let t: Vec<f64> = (0..g).map(|i| i as f64 / (g - 1) as f64).collect();
    let cases: [(&dyn Family, Vec<Vec<f64>>); 3] = [
        (&GAUSSIAN, vec![vec![-1.0, 0.0, 0.5, 2.0, 3.0, 0.3], vec![0.5, 1.0, 2.0, 0.3, 1.5, 1.0]]),
        (&GAMMA_CV, vec![vec![0.5, 1.0, 2.0, 5.0, 0.2, 1.0], vec![0.3, 0.5, 1.0, 1.5, 0.8, 0.1]]),
        (
            &ZA_GAMMA,
            vec![
                vec![0.5, 1.0, 2.0, 5.0, 0.2, 1.0],
                vec![0.3, 0.5, 1.0, 1.5, 0.8, 0.1],
                vec![0.05, 0.2, 0.5, 0.8, 0.3, 0.0],
            ],
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst_ks = 0.0f64;
    let mut worst_zero = 0.0f64;
    for (family, cols) in &cases {
        let params: Vec<DMatrix<f64>> = cols.iter().map(|c| DMatrix::from_fn(KS_DRAWS, g, |_, k| c[k])).collect();
        for level in DependencyLevel::ALL {
            let y = draw_general_curves(*family, &params, level, &t, &mut rng).unwrap();
            for k in 0..g {
                let theta: Vec<f64> = cols.iter().map(|c| c[k]).collect();
                let mut col: Vec<f64> = y.column(k).iter().copied().collect();
                if family.id() == "za-gamma" {
                    let zeros = col.iter().filter(|v| **v == 0.0).count() as f64 / KS_DRAWS as f64;
                    worst_zero = worst_zero.max((zeros - theta[2]).abs());
                }
                let ks = ks_distance(&mut col, &|v| family.cdf(v, &theta));
                worst_ks = worst_ks.max(ks);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_ks < KS_TOL && worst_zero < ZERO_TOL && secs < KS_SECONDS;
    report(
        5,
        "inverse-transform marginals",
        pass,
        &format!("max KS {worst_ks:.4} (< {KS_TOL}), zero-fraction err {worst_zero:.4} (< {ZERO_TOL}), {secs:.1} s"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 6. Effect recovery

const RECOVERY_REPLICATES: u64 = 10;
const RECOVERY_TOL: f64 = 0.10;
const RECOVERY_MSTOP_MAX: usize = 500;
const RECOVERY_SECONDS: f64 = 900.0;

#[test]
fn criterion_06_effect_recovery() {
    let start = Instant::now();
    let hyper = Hyper::new(0.2, RECOVERY_MSTOP_MAX);
    let (mut f1, mut f2) = (Vec::new(), Vec::new());
    for seed in 1..=RECOVERY_REPLICATES {
        let cfg = ScenarioConfig::new(ScenarioModel::Continuous, 100, 100, DependencyLevel::Independent, seed);
        let (data, truth) = generate_scenario(&cfg).unwrap();
        let spec = truth.fit_spec();
        let (m, _) = bootstrap_mstop(&data, &spec, &hyper, seed);
        let model = FittedModel::fit(&data, &spec, &hyper).unwrap();
        let ev = evaluate(&model, &truth, Some(m)).unwrap();
        let rel = |cov: &str| {
            let name = format!("smooth_scalar({cov})");
            ev.effects.iter().find(|e| e.param == "mu" && e.term == name).and_then(|e| e.relrmse).unwrap()
        };
        f1.push(rel("z1"));
        f2.push(rel("z2"));
    }
    let secs = start.elapsed().as_secs_f64();
    let (m1, m2) = (median(&f1), median(&f2));
    let pass = m1 < RECOVERY_TOL && m2 < RECOVERY_TOL && secs < RECOVERY_SECONDS;
    report(
        6,
        "effect recovery (continuous, N=100, G=100)",
        pass,
        &format!("median relRMSE f1 {m1:.4}, f2 {m2:.4} (< {RECOVERY_TOL}), {secs:.0} s"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 7. Method ordering

const ORDERING_REPLICATES: u64 = 20;
const ORDERING_MSTOP_MAX: usize = 300;

#[test]
fn criterion_07_noncyclic_beats_cyclic() {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for level in DependencyLevel::ALL {
        let mut kld = [0.0f64; 2];
        for seed in 1..=ORDERING_REPLICATES {
            let cfg = ScenarioConfig::new(ScenarioModel::Categorical, 50, 50, level, 700 + seed);
            let (data, truth) = generate_scenario(&cfg).unwrap();
            let spec = truth.fit_spec();
            for (k, method) in [Method::Noncyclic, Method::Cyclic].into_iter().enumerate() {
                let hyper = Hyper::new(0.2, ORDERING_MSTOP_MAX).with_method(method);
                let (m, _) = bootstrap_mstop(&data, &spec, &hyper, seed);
                let model = FittedModel::fit(&data, &spec, &hyper).unwrap();
                kld[k] += evaluate(&model, &truth, Some(m)).unwrap().mean_kld / ORDERING_REPLICATES as f64;
            }
        }
        pass &= kld[0] < kld[1];
        lines.push(format!("{} {:.4} vs {:.4}", level.as_str(), kld[0], kld[1]));
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        7,
        "mean KLD noncyclic < cyclic (categorical, N=50, G=50)",
        pass,
        &format!("{}; {secs:.0} s", lines.join(", ")),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 8. Early-stopping sensitivity

const SENSITIVITY_SEEDS: u64 = 20;
const SENSITIVITY_GRID: usize = 50;
const SENSITIVITY_MSTOP_MAX: usize = 500;
const U_SHAPE_SHARE: f64 = 0.8;
/// A path is U-shaped when its minimum is interior and the final risk lies
/// above the minimum by at least this share of the initial drop.
const U_SHAPE_RISE: f64 = 0.01;

fn is_u_shaped(path: &[f64]) -> bool {
    let (m, min) =
        path.iter().enumerate().fold((0, f64::INFINITY), |(bm, bv), (k, &v)| if v < bv { (k, v) } else { (bm, bv) });
    let drop = path[0] - min;
    let rise = path[path.len() - 1] - min;
    m > 0 && m + 1 < path.len() && drop > 0.0 && rise > U_SHAPE_RISE * drop
}

#[test]
fn criterion_08_early_stopping_sensitivity() {
    let start = Instant::now();
    let hyper = Hyper::new(0.2, SENSITIVITY_MSTOP_MAX);
    let mut mstops = [Vec::new(), Vec::new()];
    let (mut u_shaped, mut folds) = (0, 0);
    for seed in 1..=SENSITIVITY_SEEDS {
        for (k, level) in [DependencyLevel::Independent, DependencyLevel::HighDependency].into_iter().enumerate() {
            let cfg = ScenarioConfig::new(ScenarioModel::Continuous, 100, SENSITIVITY_GRID, level, 800 + seed);
            let (data, truth) = generate_scenario(&cfg).unwrap();
            let (m, risk) = bootstrap_mstop(&data, &truth.fit_spec(), &hyper, seed);
            mstops[k].push(m as f64);
            if level == DependencyLevel::HighDependency {
                for row in risk.rows.iter().flatten() {
                    folds += 1;
                    u_shaped += is_u_shaped(row) as usize;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let (mi, mh) = (median(&mstops[0]), median(&mstops[1]));
    let share = u_shaped as f64 / folds as f64;
    let pass = mh < mi && share >= U_SHAPE_SHARE;
    report(
        8,
        "early stopping sensitive to in-curve dependency (N=100)",
        pass,
        &format!("median m_stop high {mh} < independent {mi}; U-shaped folds {u_shaped}/{folds} = {share:.2} (>= {U_SHAPE_SHARE}); {secs:.0} s"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 9. Determinism and serialization

#[test]
fn criterion_09_determinism_and_serialization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::new(ScenarioModel::Continuous, 40, 30, DependencyLevel::Dependent, 909);
    let bytes = |f: &dyn Fn(&mut Vec<u8>)| {
        let mut v = Vec::new();
        f(&mut v);
        v
    };
    let run = || {
        let (data, truth) = generate_scenario(&cfg).unwrap();
        let hyper = Hyper::new(0.2, 60);
        let model = FittedModel::fit(&data, &truth.fit_spec(), &hyper).unwrap();
        let plan = make_folds(data.n_curves(), ResampleMethod::Bootstrap, 3, 9).unwrap();
        let risk = oob_risk_path(&data, &truth.fit_spec(), &Hyper::new(0.2, 30), &plan).unwrap();
        let data_csv = bytes(&|w| data.write_csv(w).unwrap());
        let truth_json = bytes(&|w| truth.to_writer(w).unwrap());
        let model_json = bytes(&|w| model.to_writer(w).unwrap());
        let risk_csv = bytes(&|w| risk.write_csv(w).unwrap());
        (data, model, [data_csv, truth_json, model_json, risk_csv])
    };
    let (data, model, first) = run();
    let (_, _, second) = run();
    let repeat_identical = first == second;

    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let loaded = FittedModel::load(&path).unwrap();
    let mut identical = true;
    for m in [None, Some(0), Some(25)] {
        let a = model.predict(&data, m).unwrap();
        let b = loaded.predict(&data, m).unwrap();
        let (pa, pb) = (model.predictors(&data, m).unwrap(), loaded.predictors(&data, m).unwrap());
        identical &=
            a == b && pa.iter().zip(&pb).all(|(x, y)| x.iter().zip(y.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }
    let pass = repeat_identical && identical;
    report(
        9,
        "determinism and serialization",
        pass,
        &format!("repeated outputs byte-identical: {repeat_identical}; save/load/predict bit-identical: {identical}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 10. Parametric growth fixtures

const FIXTURE_REL_RMSE: f64 = 0.01;
const FIXTURE_MSTOP: usize = 2000;

#[test]
fn criterion_10_parametric_growth_fixtures() {
    let g = 97;
    let t: Vec<f64> = (0..g).map(|i| 48.0 * i as f64 / (g - 1) as f64).collect();
    let curves = [
        GrowthCurve::BaranyiRoberts { y0: 2.0, y_max: 8.0, mu_max: 0.6, lag: 6.0 },
        GrowthCurve::Gompertz { y0: 2.0, y_max: 8.0, mu_max: 0.5, lag: 8.0 },
        GrowthCurve::Logistic { y0: 0.05, y_max: 2.0, rate: 0.35 },
    ];
    let spec = ModelSpec::new(
        "gamma-cv",
        vec![
            vec![TermDescriptor::functional_intercept().with_time_basis(BasisSettings::new(3, 20, 2))],
            // The coefficient of variation stays at its starting value.
            vec![],
        ],
    );
    let hyper = Hyper::new(0.1, FIXTURE_MSTOP);
    let mut pass = true;
    let mut parts = Vec::new();
    for curve in &curves {
        let y = parametric_growth_curve(curve, &t).unwrap();
        let n = 4;
        let response = DMatrix::from_fn(n, g, |_, k| y[k]);
        let data = FunctionalDataset::new(response, Grid::new(t.clone()).unwrap(), IndexMap::new()).unwrap();
        let model = FittedModel::fit(&data, &spec, &hyper).unwrap();
        let mu = model.predict(&data, Some(FIXTURE_MSTOP)).unwrap();
        let mu = mu.param("mu").unwrap();
        let rmse = ((0..g).map(|k| (mu[(0, k)] - y[k]).powi(2)).sum::<f64>() / g as f64).sqrt();
        let range =
            y.iter().copied().fold(f64::NEG_INFINITY, f64::max) - y.iter().copied().fold(f64::INFINITY, f64::min);
        let rel = rmse / range;
        pass &= rel < FIXTURE_REL_RMSE;
        parts.push(format!("{} {rel:.4}", curve.name()));
    }
    report(
        10,
        "functional intercept reproduces growth curves",
        pass,
        &format!("RMSE / range at m = {FIXTURE_MSTOP}: {} (< {FIXTURE_REL_RMSE})", parts.join(", ")),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 11. za-gamma template end to end

const TEMPLATE_MSTOP: usize = 300;
const TEMPLATE_MIN_REDUCTION: f64 = 0.20;

#[test]
fn criterion_11_za_gamma_template_end_to_end() {
    let start = Instant::now();
    let cfg = ScenarioConfig::new(ScenarioModel::Application, 50, 50, DependencyLevel::HighDependency, 1111);
    let (data, _) = generate_scenario(&cfg).unwrap();
    let spec = za_gamma_template_spec();
    let fit = FittedModel::fit(&data, &spec, &Hyper::new(0.1, TEMPLATE_MSTOP));
    let (pass, detail) = match fit {
        Ok(model) => {
            let r0 = model.risk_path[0];
            let r1 = *model.risk_path.last().unwrap();
            let reduction = (r0 - r1) / r0.abs();
            let finite = model.risk_path.iter().all(|v| v.is_finite());
            (
                finite && reduction >= TEMPLATE_MIN_REDUCTION,
                format!("risk {r0:.3} -> {r1:.3}, reduction {reduction:.3} (>= {TEMPLATE_MIN_REDUCTION})"),
            )
        }
        Err(e) => (false, format!("fit failed: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    report(11, "za-gamma template fit (N=50, G=50)", pass, &format!("{detail}; {secs:.0} s"));
    assert!(pass);
}
