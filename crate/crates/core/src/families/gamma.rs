use statrs::function::gamma::{digamma, gamma_lr, ln_gamma};

use super::gaussian::std_normal_quantile;
use super::{monotone_solve, Family, FamilyError, Link, POS_MAX, POS_MIN};

/// Gamma distribution parameterized by mean μ and coefficient of variation
/// c, both log-linked. Shape is 1/c² and scale μc².
#[derive(Debug, Clone, Copy, Default)]
pub struct GammaCv;

fn shape(c: f64) -> f64 {
    1.0 / (c * c)
}

/// Negative log-density at `y > 0` for mean `mu` and cv `c`.
pub(crate) fn gamma_rho(y: f64, mu: f64, c: f64) -> f64 {
    let a = shape(c);
    ln_gamma(a) + a * (mu / a).ln() - (a - 1.0) * y.ln() + a * y / mu
}

/// Negative gradients with respect to (log μ, log c) at unclamped values.
pub(crate) fn gamma_neg_gradient(q: usize, y: f64, log_mu: f64, log_c: f64) -> f64 {
    let mu = log_mu.exp();
    let a = (-2.0 * log_c).exp();
    match q {
        0 => a * (y / mu - 1.0),
        1 => 2.0 * a * (digamma(a) - a.ln() + log_mu - y.ln() + y / mu - 1.0),
        _ => panic!("gamma-cv has two parameters, got index {q}"),
    }
}

/// `P(Y ≤ y)` for mean `mu` and cv `c`.
pub fn gamma_cdf(y: f64, mu: f64, c: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    if y == f64::INFINITY {
        return 1.0;
    }
    let a = shape(c);
    gamma_lr(a, y * a / mu)
}

/// Standard gamma (unit scale) quantile by safeguarded Newton iteration
/// from a Wilson–Hilferty start.
fn standard_gamma_quantile(u: f64, a: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return f64::INFINITY;
    }
    let z = std_normal_quantile(u);
    let wh = a * (1.0 - 1.0 / (9.0 * a) + z / (3.0 * a.sqrt())).powi(3);
    // Small-x approximation P(a, x) ≈ x^a / Γ(a + 1).
    let small = ((u.ln() + ln_gamma(a + 1.0)) / a).exp();
    let start = if wh > 0.0 && wh.is_finite() { wh } else { small };
    let cdf = |x: f64| if x <= 0.0 { 0.0 } else { gamma_lr(a, x) };
    let mut hi = start.max(a).max(1.0);
    while cdf(hi) < u {
        hi *= 2.0;
    }
    let ln_ga = ln_gamma(a);
    let pdf = |x: f64| {
        if x <= 0.0 {
            0.0
        } else {
            ((a - 1.0) * x.ln() - x - ln_ga).exp()
        }
    };
    monotone_solve(cdf, pdf, u, 0.0, hi, start)
}

/// Quantile at level `u` for mean `mu` and cv `c`.
pub fn gamma_quantile(u: f64, mu: f64, c: f64) -> f64 {
    let a = shape(c);
    standard_gamma_quantile(u, a) * mu / a
}

/// `KL(Gamma(μ1, c1) ‖ Gamma(μ2, c2))` in closed form.
pub fn gamma_kld(mu1: f64, c1: f64, mu2: f64, c2: f64) -> f64 {
    let (a1, a2) = (shape(c1), shape(c2));
    let (b1, b2) = (a1 / mu1, a2 / mu2);
    (a1 - a2) * digamma(a1) - ln_gamma(a1) + ln_gamma(a2) + a2 * (b1.ln() - b2.ln()) + a1 * (b2 - b1) / b1
}

pub(crate) fn positive_moment_offsets(y: &[f64]) -> Result<(f64, f64), FamilyError> {
    let pos: Vec<f64> = y.iter().copied().filter(|v| *v > 0.0).collect();
    if pos.len() < 2 {
        return Err(FamilyError::DegenerateData("fewer than two positive observations for the gamma component".into()));
    }
    let n = pos.len() as f64;
    let mean = pos.iter().sum::<f64>() / n;
    let var = pos.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return Err(FamilyError::DegenerateData("positive responses have zero variance".into()));
    }
    Ok((mean.ln(), (var.sqrt() / mean).ln()))
}

impl Family for GammaCv {
    fn id(&self) -> &'static str {
        "gamma-cv"
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["mu", "cv"]
    }

    fn links(&self) -> &'static [Link] {
        &[Link::Log, Link::Log]
    }

    fn check_support(&self, y: f64) -> Result<(), FamilyError> {
        if y > 0.0 && y.is_finite() {
            Ok(())
        } else {
            Err(FamilyError::Support(y, "gamma-cv"))
        }
    }

    fn loss(&self, y: f64, h: &[f64]) -> f64 {
        let mu = Link::Log.inverse_clamped(h[0]);
        let c = Link::Log.inverse_clamped(h[1]);
        gamma_rho(y, mu, c)
    }

    fn neg_gradient(&self, q: usize, y: f64, h: &[f64]) -> f64 {
        gamma_neg_gradient(q, y, h[0], h[1])
    }

    fn cdf(&self, y: f64, theta: &[f64]) -> f64 {
        gamma_cdf(y, theta[0], theta[1])
    }

    fn quantile(&self, u: f64, theta: &[f64]) -> f64 {
        gamma_quantile(u, theta[0], theta[1])
    }

    fn kld(&self, t: &[f64], e: &[f64]) -> f64 {
        let cl = |v: f64| v.clamp(POS_MIN, POS_MAX);
        gamma_kld(cl(t[0]), cl(t[1]), cl(e[0]), cl(e[1]))
    }

    fn moment_offsets(&self, y: &[f64]) -> Result<Vec<f64>, FamilyError> {
        let (m, c) = positive_moment_offsets(y)?;
        Ok(vec![m, c])
    }

    fn admissible(&self, theta: &[f64]) -> bool {
        theta.iter().all(|v| *v > 0.0 && v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_util::*;
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::Distribution;

    #[test]
    fn mean_residual_zero() {
        let h = [1.3f64.ln(), 0.7f64.ln()];
        assert!(GammaCv.neg_gradient(0, 1.3, &h).abs() < 1e-14);
    }

    #[test]
    fn loss_is_exponential_log_density_at_unit_cv() {
        // c = 1 gives the exponential distribution with mean μ.
        let mu: f64 = 2.5;
        let y = 1.7;
        let want = mu.ln() + y / mu;
        assert!((GammaCv.loss(y, &[mu.ln(), 0.0]) - want).abs() < 1e-13);
    }

    #[test]
    fn density_integrates_to_one() {
        for &(mu, c) in &[(2.0, 0.5), (0.3, 1.4), (10.0, 0.1)] {
            let h = [f64::ln(mu), f64::ln(c)];
            let v = integrate_positive(&|y| (-GammaCv.loss(y, &h)).exp(), 1e-12);
            assert!((v - 1.0).abs() < 1e-6, "mu={mu} c={c} integral={v}");
        }
    }

    #[test]
    fn monte_carlo_moments() {
        let (mu, c) = (2.0, 0.5);
        let a = shape(c);
        let dist = rand_distr::Gamma::new(a, mu / a).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - 2.0).abs() < 0.02 && (sd - 1.0).abs() < 0.01, "mean {mean} sd {sd}");
        // The same moments through the family's own quantile function.
        let m_q = integrate(&|u| gamma_quantile(u, mu, c), 1e-12, 1.0 - 1e-12, 1e-10);
        assert!((m_q - 2.0).abs() < 1e-4);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &(mu, c) in &[(2.0, 0.5), (0.05, 2.0), (100.0, 0.05), (1.0, 5.0)] {
            let mut prev = 0.0;
            for &u in &[1e-8, 1e-4, 0.01, 0.2, 0.5, 0.8, 0.99, 1.0 - 1e-6] {
                let y = gamma_quantile(u, mu, c);
                assert!(y >= prev, "quantile not monotone at u={u}");
                prev = y;
                assert!((gamma_cdf(y, mu, c) - u).abs() < 1e-8, "mu={mu} c={c} u={u}");
            }
        }
    }

    #[test]
    fn kld_matches_quadrature() {
        let cases = [((2.0, 0.5), (1.5, 0.7)), ((0.4, 1.2), (0.6, 0.9)), ((5.0, 0.2), (5.5, 0.25))];
        for ((m1, c1), (m2, c2)) in cases {
            let (h1, h2) = ([f64::ln(m1), f64::ln(c1)], [f64::ln(m2), f64::ln(c2)]);
            let num = integrate_positive(
                &|y| {
                    let l1 = GammaCv.loss(y, &h1);
                    (-l1).exp() * (GammaCv.loss(y, &h2) - l1)
                },
                1e-13,
            );
            let k = GammaCv.kld(&[m1, c1], &[m2, c2]);
            assert!((k - num).abs() < 1e-6, "closed {k} numeric {num}");
        }
        assert_eq!(GammaCv.kld(&[2.0, 0.5], &[2.0, 0.5]), 0.0);
    }

    #[test]
    fn support_and_offsets() {
        assert!(matches!(GammaCv.check_support(0.0), Err(FamilyError::Support(..))));
        assert!(matches!(GammaCv.check_support(-1.0), Err(FamilyError::Support(..))));
        let o = GammaCv.moment_offsets(&[1.0, 3.0]).unwrap();
        let sd = 2f64.sqrt();
        assert!((o[0] - 2f64.ln()).abs() < 1e-15 && (o[1] - (sd / 2.0).ln()).abs() < 1e-15);
        assert!(GammaCv.moment_offsets(&[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_difference(y in 0.05f64..10.0, lm in -1.5f64..2.0, lc in -1.5f64..0.8) {
            let h = [lm, lc];
            for q in 0..2 {
                let fd = -central_diff(&|hh| GammaCv.loss(y, hh), &h, q, 1e-5);
                let an = GammaCv.neg_gradient(q, y, &h);
                prop_assert!((fd - an).abs() / an.abs().max(fd.abs()).max(1e-3) < 1e-6,
                    "q={} fd={} an={}", q, fd, an);
            }
        }

        #[test]
        fn kld_nonnegative(m1 in 0.1f64..5.0, c1 in 0.1f64..2.0, m2 in 0.1f64..5.0, c2 in 0.1f64..2.0) {
            prop_assert!(GammaCv.kld(&[m1, c1], &[m2, c2]) >= -1e-12);
        }
    }
}
