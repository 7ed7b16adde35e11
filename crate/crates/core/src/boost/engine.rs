//! Component-wise gradient boosting over all distribution parameters.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::learner::{Learner, LearnerFit};
use super::{BoostError, Hyper, Method};
use crate::families::{Family, MAX_PARAMS};

/// One accepted update: `increment = ν·θ̃` added to learner `j` of
/// parameter `q` during iteration `iteration` (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub iteration: usize,
    pub q: usize,
    pub j: usize,
    pub increment: Vec<f64>,
}

/// Best update for one parameter: the least-squares winner among its
/// learners and the empirical loss after its ν-step.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub q: usize,
    pub j: usize,
    pub theta: DVector<f64>,
    pub rss: f64,
    pub loss: f64,
    /// Updated predictor of parameter `q` (N×G).
    pub predictor: DMatrix<f64>,
}

/// Coefficients, predictors and the record of a boosting run.
#[derive(Debug, Clone)]
pub struct BoostState {
    pub offsets: Vec<f64>,
    pub coefficients: Vec<Vec<DVector<f64>>>,
    pub predictors: Vec<DMatrix<f64>>,
    pub history: Vec<Step>,
    /// Mean per-curve empirical loss after 0, 1, ... iterations.
    pub risk_path: Vec<f64>,
    pub iteration: usize,
}

/// `Σ_i Σ_t w_t ρ(y_i(t), h_i(t))` over an N×G response.
pub fn loss_sum(family: &dyn Family, y: &DMatrix<f64>, h: &[&DMatrix<f64>], weights: Option<&[f64]>) -> f64 {
    let q = h.len();
    let mut buf = [0.0; MAX_PARAMS];
    let mut total = 0.0;
    for t in 0..y.ncols() {
        let w = weights.map_or(1.0, |w| w[t]);
        let mut col = 0.0;
        for i in 0..y.nrows() {
            for p in 0..q {
                buf[p] = h[p][(i, t)];
            }
            col += family.loss(y[(i, t)], &buf[..q]);
        }
        total += w * col;
    }
    total
}

/// Boosting run over fixed learners on one response matrix.
pub struct Engine<'a> {
    family: &'a dyn Family,
    y: &'a DMatrix<f64>,
    learners: &'a [Vec<Learner>],
    hyper: &'a Hyper,
    weights: Option<Vec<f64>>,
    state: BoostState,
}

impl<'a> Engine<'a> {
    /// `weights` are per-grid-point loss weights, `None` for the plain sum.
    pub fn new(
        family: &'a dyn Family,
        y: &'a DMatrix<f64>,
        learners: &'a [Vec<Learner>],
        offsets: Vec<f64>,
        hyper: &'a Hyper,
        weights: Option<Vec<f64>>,
    ) -> Result<Self, BoostError> {
        let nq = family.n_params();
        if learners.len() != nq || offsets.len() != nq {
            return Err(BoostError::Hyper(format!("family '{}' needs {nq} learner sets and offsets", family.id())));
        }
        hyper.validate(nq)?;
        for v in y.iter() {
            family.check_support(*v)?;
        }
        let (n, g) = y.shape();
        let predictors: Vec<DMatrix<f64>> = offsets.iter().map(|&o| DMatrix::from_element(n, g, o)).collect();
        let coefficients = learners.iter().map(|ls| ls.iter().map(|l| DVector::zeros(l.n_coef())).collect()).collect();
        let mut engine = Self {
            family,
            y,
            learners,
            hyper,
            weights,
            state: BoostState {
                offsets,
                coefficients,
                predictors,
                history: Vec::new(),
                risk_path: Vec::new(),
                iteration: 0,
            },
        };
        let r0 = engine.current_loss() / n as f64;
        if !r0.is_finite() {
            return Err(BoostError::Domain { iteration: 0, msg: "offset model has non-finite loss".into() });
        }
        engine.state.risk_path.push(r0);
        Ok(engine)
    }

    pub fn state(&self) -> &BoostState {
        &self.state
    }

    pub fn into_state(self) -> BoostState {
        self.state
    }

    fn current_loss(&self) -> f64 {
        let refs: Vec<&DMatrix<f64>> = self.state.predictors.iter().collect();
        loss_sum(self.family, self.y, &refs, self.weights.as_deref())
    }

    fn gradient(&self, q: usize) -> Result<DMatrix<f64>, BoostError> {
        let (n, g) = self.y.shape();
        let nq = self.family.n_params();
        let mut buf = [0.0; MAX_PARAMS];
        let mut u = DMatrix::zeros(n, g);
        for t in 0..g {
            let w = self.weights.as_ref().map_or(1.0, |w| w[t]);
            for i in 0..n {
                for (b, h) in buf.iter_mut().zip(&self.state.predictors) {
                    *b = h[(i, t)];
                }
                let v = w * self.family.neg_gradient(q, self.y[(i, t)], &buf[..nq]);
                if !v.is_finite() {
                    return Err(BoostError::Domain {
                        iteration: self.state.iteration + 1,
                        msg: format!(
                            "non-finite gradient for parameter {} at curve {i}, grid point {t}",
                            self.family.param_names()[q]
                        ),
                    });
                }
                u[(i, t)] = v;
            }
        }
        Ok(u)
    }

    /// Fits every learner of parameter `q` to the current negative gradient
    /// and evaluates the ν-step of the least-squares winner. Parameters
    /// without learners have no candidate.
    pub fn candidate(&self, q: usize) -> Result<Option<Candidate>, BoostError> {
        if self.learners[q].is_empty() {
            return Ok(None);
        }
        let u = self.gradient(q)?;
        let u_sq = u.norm_squared();
        let fits: Vec<LearnerFit> = self.learners[q].par_iter().map(|l| l.fit(&u, u_sq)).collect();
        let mut best = 0;
        for (j, f) in fits.iter().enumerate() {
            if f.rss < fits[best].rss {
                best = j;
            }
        }
        let nu = self.hyper.step(q);
        let fit = &fits[best];
        let predictor = &self.state.predictors[q] + self.learners[q][best].design.mul(&fit.theta) * nu;
        let mut refs: Vec<&DMatrix<f64>> = self.state.predictors.iter().collect();
        refs[q] = &predictor;
        let loss = loss_sum(self.family, self.y, &refs, self.weights.as_deref());
        Ok(Some(Candidate { q, j: best, theta: fit.theta.clone(), rss: fit.rss, loss, predictor }))
    }

    fn accept(&mut self, c: Candidate, iteration: usize) -> Result<(), BoostError> {
        if !c.loss.is_finite() {
            return Err(BoostError::Domain {
                iteration,
                msg: format!("non-finite loss after updating parameter {}", self.family.param_names()[c.q]),
            });
        }
        let inc = c.theta * self.hyper.step(c.q);
        self.state.coefficients[c.q][c.j] += &inc;
        self.state.predictors[c.q] = c.predictor;
        self.state.history.push(Step { iteration, q: c.q, j: c.j, increment: inc.as_slice().to_vec() });
        Ok(())
    }

    /// Runs one boosting iteration and returns the steps it added.
    pub fn iterate(&mut self) -> Result<&[Step], BoostError> {
        let iteration = self.state.iteration + 1;
        let before = self.state.history.len();
        let nq = self.family.n_params();
        let loss = match self.hyper.method {
            Method::Noncyclic => {
                let mut best: Option<Candidate> = None;
                for q in 0..nq {
                    let Some(c) = self.candidate(q)? else { continue };
                    if !c.loss.is_finite() {
                        return Err(BoostError::Domain {
                            iteration,
                            msg: format!(
                                "non-finite loss for the candidate update of parameter {}",
                                self.family.param_names()[q]
                            ),
                        });
                    }
                    if best.as_ref().is_none_or(|b| c.loss < b.loss) {
                        best = Some(c);
                    }
                }
                match best {
                    Some(c) => {
                        let loss = c.loss;
                        self.accept(c, iteration)?;
                        loss
                    }
                    None => self.current_loss(),
                }
            }
            Method::Cyclic => {
                let mut loss = self.current_loss();
                for q in 0..nq {
                    if let Some(c) = self.candidate(q)? {
                        loss = c.loss;
                        self.accept(c, iteration)?;
                    }
                }
                loss
            }
        };
        self.state.iteration = iteration;
        self.state.risk_path.push(loss / self.y.nrows() as f64);
        Ok(&self.state.history[before..])
    }

    /// Runs `m` iterations, calling `observer` with each iteration's steps.
    pub fn run(
        &mut self,
        m: usize,
        mut observer: impl FnMut(usize, &[Step]) -> Result<(), BoostError>,
    ) -> Result<(), BoostError> {
        for _ in 0..m {
            let iteration = self.state.iteration + 1;
            let steps = self.iterate()?;
            observer(iteration, steps)?;
        }
        Ok(())
    }
}

/// Adds the steps of `history` with iteration ≤ `m` to zero coefficients.
pub fn replay_coefficients(shapes: &[Vec<usize>], history: &[Step], m: usize) -> Vec<Vec<DVector<f64>>> {
    let mut coef: Vec<Vec<DVector<f64>>> =
        shapes.iter().map(|s| s.iter().map(|&k| DVector::zeros(k)).collect()).collect();
    for s in history.iter().take_while(|s| s.iteration <= m) {
        let c = &mut coef[s.q][s.j];
        for (a, b) in c.iter_mut().zip(&s.increment) {
            *a += b;
        }
    }
    coef
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Design;
    use crate::families::GAUSSIAN;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intercept_learner(n: usize, g: usize) -> Learner {
        Learner::new(
            Design::Kron { bx: DMatrix::from_element(n, 1, 1.0), by: DMatrix::from_element(g, 1, 1.0) },
            &DMatrix::zeros(1, 1),
        )
        .unwrap()
    }

    fn linear_learner(x: &[f64], g: usize) -> Learner {
        let n = x.len();
        Learner::new(
            Design::Kron { bx: DMatrix::from_fn(n, 1, |i, _| x[i]), by: DMatrix::from_element(g, 1, 1.0) },
            &DMatrix::zeros(1, 1),
        )
        .unwrap()
    }

    #[test]
    fn zero_residual_start() {
        let (n, g) = (4, 3);
        let y = DMatrix::from_element(n, g, 5.0);
        let learners = vec![vec![intercept_learner(n, g)], vec![intercept_learner(n, g)]];
        let hyper = Hyper::new(0.1, 1);
        let mut e = Engine::new(&GAUSSIAN, &y, &learners, vec![5.0, 0.0], &hyper, None).unwrap();
        let c0 = e.candidate(0).unwrap().unwrap();
        assert_eq!(c0.theta.amax(), 0.0);
        assert_eq!(c0.loss, e.state().risk_path[0] * n as f64);
        e.iterate().unwrap();
        // The log σ gradient is −1 everywhere and shrinking σ lowers the loss.
        assert_eq!(e.state().history[0].q, 1);
    }

    #[test]
    fn tie_breaks_to_smallest_q() {
        let (n, g) = (3, 2);
        // Both residuals and log-variance gradients vanish: y = μ ± 1 with σ = 1.
        let y = DMatrix::from_row_slice(3, 2, &[1.0, -1.0, -1.0, 1.0, 0.0, 0.0]);
        let learners = vec![vec![intercept_learner(n, g)], vec![intercept_learner(n, g)]];
        let hyper = Hyper::new(0.1, 1);
        let sigma = (4.0f64 / 6.0).sqrt().ln();
        let mut e = Engine::new(&GAUSSIAN, &y, &learners, vec![0.0, sigma], &hyper, None).unwrap();
        let r0 = e.state().risk_path[0];
        e.iterate().unwrap();
        let s = &e.state().history[0];
        assert_eq!((s.q, s.j), (0, 0));
        assert!((e.state().risk_path[1] - r0).abs() < 1e-12);
    }

    #[test]
    fn l2_boosting_reaches_ols_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, g) = (20, 5);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = DMatrix::from_fn(n, g, |i, _| 2.0 * x[i]);
        // σ stays at 1, so the μ gradient is the plain residual.
        let learners = vec![vec![linear_learner(&x, g)], vec![]];
        let hyper = Hyper::new(0.1, 200);
        let mut e = Engine::new(&GAUSSIAN, &y, &learners, vec![0.0, 0.0], &hyper, None).unwrap();
        e.run(200, |_, _| Ok(())).unwrap();
        let mse = (&e.state().predictors[0] - &y).norm_squared() / (n * g) as f64;
        assert!(mse < 1e-4, "mse {mse}");
    }

    fn toy(seed: u64) -> (DMatrix<f64>, Vec<Vec<Learner>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, g) = (20, 10);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = DMatrix::from_fn(n, g, |i, t| {
            let s = (0.3 * z[i]).exp();
            1.0 + x[i] * (t as f64 / 5.0) + s * rng.random_range(-1.7..1.7)
        });
        let mk = || vec![intercept_learner(n, g), linear_learner(&x, g), linear_learner(&z, g)];
        (y, vec![mk(), mk()])
    }

    #[test]
    fn risk_path_non_increasing() {
        let (y, learners) = toy(5);
        let hyper = Hyper::new(0.1, 50);
        let off = GAUSSIAN.moment_offsets(y.as_slice()).unwrap();
        let mut e = Engine::new(&GAUSSIAN, &y, &learners, off, &hyper, None).unwrap();
        e.run(50, |_, _| Ok(())).unwrap();
        let r = &e.state().risk_path;
        assert_eq!(r.len(), 51);
        for w in r.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn selected_candidate_is_minimal() {
        let (y, learners) = toy(6);
        let hyper = Hyper::new(0.1, 30);
        let off = GAUSSIAN.moment_offsets(y.as_slice()).unwrap();
        let mut e = Engine::new(&GAUSSIAN, &y, &learners, off, &hyper, None).unwrap();
        for _ in 0..30 {
            let cands: Vec<Candidate> = (0..2).map(|q| e.candidate(q).unwrap().unwrap()).collect();
            // Exhaustive check over every learner of every parameter.
            for q in 0..2 {
                let u = e.gradient(q).unwrap();
                let usq = u.norm_squared();
                for l in &learners[q] {
                    assert!(l.fit(&u, usq).rss >= cands[q].rss - 1e-9);
                }
            }
            e.iterate().unwrap();
            let s = e.state().history.last().unwrap();
            for c in &cands {
                assert!(cands[s.q].loss <= c.loss);
            }
        }
    }

    #[test]
    fn replay_reproduces_predictor() {
        let (y, learners) = toy(7);
        let hyper = Hyper::new(0.2, 40);
        let off = GAUSSIAN.moment_offsets(y.as_slice()).unwrap();
        let mut e = Engine::new(&GAUSSIAN, &y, &learners, off.clone(), &hyper, None).unwrap();
        e.run(40, |_, _| Ok(())).unwrap();
        let st = e.state();
        let shapes: Vec<Vec<usize>> = learners.iter().map(|l| l.iter().map(|b| b.n_coef()).collect()).collect();
        let coef = replay_coefficients(&shapes, &st.history, 40);
        for q in 0..2 {
            let mut h = DMatrix::from_element(20, 10, off[q]);
            for (j, l) in learners[q].iter().enumerate() {
                assert!((&coef[q][j] - &st.coefficients[q][j]).amax() < 1e-12);
                h += l.design.mul(&coef[q][j]);
            }
            assert!((h - &st.predictors[q]).amax() < 1e-12);
        }
    }

    #[test]
    fn unselected_learners_stay_zero() {
        let (y, mut learners) = toy(8);
        // A useless learner: constant zero column.
        let zero = Learner::new(
            Design::Kron { bx: DMatrix::zeros(20, 1), by: DMatrix::from_element(10, 1, 1.0) },
            &DMatrix::identity(1, 1),
        )
        .unwrap();
        learners[0].push(zero);
        let hyper = Hyper::new(0.1, 30);
        let off = GAUSSIAN.moment_offsets(y.as_slice()).unwrap();
        let mut e = Engine::new(&GAUSSIAN, &y, &learners, off, &hyper, None).unwrap();
        e.run(30, |_, _| Ok(())).unwrap();
        assert!(e.state().history.iter().all(|s| !(s.q == 0 && s.j == 3)));
        assert_eq!(e.state().coefficients[0][3].amax(), 0.0);
    }

    #[test]
    fn cyclic_alternates_and_single_parameter_agrees() {
        let (y, learners) = toy(9);
        let mut hyper = Hyper::new(0.1, 6);
        hyper.method = Method::Cyclic;
        let off = GAUSSIAN.moment_offsets(y.as_slice()).unwrap();
        let single = vec![vec![learners[0][0].clone()], vec![learners[1][0].clone()]];
        let mut e = Engine::new(&GAUSSIAN, &y, &single, off, &hyper, None).unwrap();
        e.run(6, |_, _| Ok(())).unwrap();
        let qs: Vec<usize> = e.state().history.iter().map(|s| s.q).collect();
        assert_eq!(qs, vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        assert_eq!(e.state().risk_path.len(), 7);

        // One active parameter: both strategies give the same trajectory.
        let y2 = y.map(|v| v.abs() + 0.1);
        let gamma = crate::families::gamma_cv_family();
        let off = gamma.moment_offsets(y2.as_slice()).unwrap();
        let learners2 = vec![learners[0].clone(), vec![]];
        let mut histories = Vec::new();
        for method in [Method::Noncyclic, Method::Cyclic] {
            let mut h = Hyper::new(0.1, 10);
            h.method = method;
            let mut e = Engine::new(gamma, &y2, &learners2, off.clone(), &h, None).unwrap();
            e.run(10, |_, _| Ok(())).unwrap();
            histories.push(e.into_state().history);
        }
        assert_eq!(histories[0].len(), 10);
        assert_eq!(histories[0], histories[1]);
    }
}
