use super::gamma::{gamma_cdf, gamma_kld, gamma_neg_gradient, gamma_quantile, gamma_rho, positive_moment_offsets};
use super::{Family, FamilyError, Link, POS_MAX, POS_MIN, PROB_MAX, PROB_MIN};

/// Smallest and largest zero probability used for the starting value.
const OFFSET_P_MIN: f64 = 1e-6;

/// Point mass at zero with probability p plus a mean/cv gamma on the
/// positives. Parameters are (μ, c, p) with log, log and logit links.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZaGamma;

impl Family for ZaGamma {
    fn id(&self) -> &'static str {
        "za-gamma"
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["mu", "cv", "p"]
    }

    fn links(&self) -> &'static [Link] {
        &[Link::Log, Link::Log, Link::Logit]
    }

    fn check_support(&self, y: f64) -> Result<(), FamilyError> {
        if y >= 0.0 && y.is_finite() {
            Ok(())
        } else {
            Err(FamilyError::Support(y, "za-gamma"))
        }
    }

    fn loss(&self, y: f64, h: &[f64]) -> f64 {
        let p = Link::Logit.inverse_clamped(h[2]);
        if y == 0.0 {
            return -p.ln();
        }
        let mu = Link::Log.inverse_clamped(h[0]);
        let c = Link::Log.inverse_clamped(h[1]);
        -(-p).ln_1p() + gamma_rho(y, mu, c)
    }

    fn neg_gradient(&self, q: usize, y: f64, h: &[f64]) -> f64 {
        match q {
            0 | 1 if y == 0.0 => 0.0,
            0 | 1 => gamma_neg_gradient(q, y, h[0], h[1]),
            2 => {
                let p = Link::Logit.inverse(h[2]);
                if y == 0.0 {
                    1.0 - p
                } else {
                    -p
                }
            }
            _ => panic!("za-gamma has three parameters, got index {q}"),
        }
    }

    fn cdf(&self, y: f64, theta: &[f64]) -> f64 {
        if y < 0.0 {
            return 0.0;
        }
        let p = theta[2];
        p + (1.0 - p) * gamma_cdf(y, theta[0], theta[1])
    }

    fn quantile(&self, u: f64, theta: &[f64]) -> f64 {
        let p = theta[2];
        if u <= p {
            return 0.0;
        }
        gamma_quantile((u - p) / (1.0 - p), theta[0], theta[1])
    }

    fn kld(&self, t: &[f64], e: &[f64]) -> f64 {
        let cp = |v: f64| v.clamp(PROB_MIN, PROB_MAX);
        let cl = |v: f64| v.clamp(POS_MIN, POS_MAX);
        let (p1, p2) = (cp(t[2]), cp(e[2]));
        let bern = p1 * (p1 / p2).ln() + (1.0 - p1) * ((1.0 - p1) / (1.0 - p2)).ln();
        bern + (1.0 - p1) * gamma_kld(cl(t[0]), cl(t[1]), cl(e[0]), cl(e[1]))
    }

    fn moment_offsets(&self, y: &[f64]) -> Result<Vec<f64>, FamilyError> {
        if y.is_empty() {
            return Err(FamilyError::DegenerateData("empty response".into()));
        }
        let (m, c) = positive_moment_offsets(y)?;
        let zeros = y.iter().filter(|v| **v == 0.0).count() as f64;
        let p = (zeros / y.len() as f64).clamp(OFFSET_P_MIN, 1.0 - OFFSET_P_MIN);
        Ok(vec![m, c, Link::Logit.link(p)])
    }

    fn admissible(&self, theta: &[f64]) -> bool {
        theta[0] > 0.0
            && theta[0].is_finite()
            && theta[1] > 0.0
            && theta[1].is_finite()
            && theta[2] > 0.0
            && theta[2] < 1.0
    }
}
