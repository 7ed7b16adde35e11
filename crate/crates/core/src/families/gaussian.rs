use statrs::function::erf::{erfc, erfc_inv};

use super::{Family, FamilyError, Link, POS_MAX, POS_MIN};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Normal distribution with identity link for μ and log link for σ.
#[derive(Debug, Clone, Copy, Default)]
pub struct Gaussian;

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn std_normal_quantile(u: f64) -> f64 {
    if u <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if u >= 1.0 {
        return f64::INFINITY;
    }
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

impl Family for Gaussian {
    fn id(&self) -> &'static str {
        "gaussian"
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["mu", "sigma"]
    }

    fn links(&self) -> &'static [Link] {
        &[Link::Identity, Link::Log]
    }

    fn check_support(&self, y: f64) -> Result<(), FamilyError> {
        if y.is_finite() {
            Ok(())
        } else {
            Err(FamilyError::Support(y, "gaussian"))
        }
    }

    fn loss(&self, y: f64, h: &[f64]) -> f64 {
        let log_sigma = h[1].clamp(POS_MIN.ln(), POS_MAX.ln());
        let r = (y - h[0]) * (-log_sigma).exp();
        HALF_LN_2PI + log_sigma + 0.5 * r * r
    }

    fn neg_gradient(&self, q: usize, y: f64, h: &[f64]) -> f64 {
        let inv_var = (-2.0 * h[1]).exp();
        let r = y - h[0];
        match q {
            0 => r * inv_var,
            1 => r * r * inv_var - 1.0,
            _ => panic!("gaussian has two parameters, got index {q}"),
        }
    }

    fn cdf(&self, y: f64, theta: &[f64]) -> f64 {
        std_normal_cdf((y - theta[0]) / theta[1])
    }

    fn quantile(&self, u: f64, theta: &[f64]) -> f64 {
        theta[0] + theta[1] * std_normal_quantile(u)
    }

    fn kld(&self, t: &[f64], e: &[f64]) -> f64 {
        let (m1, s1) = (t[0], t[1].clamp(POS_MIN, POS_MAX));
        let (m2, s2) = (e[0], e[1].clamp(POS_MIN, POS_MAX));
        let d = m1 - m2;
        (s2 / s1).ln() + (s1 * s1 + d * d) / (2.0 * s2 * s2) - 0.5
    }

    fn moment_offsets(&self, y: &[f64]) -> Result<Vec<f64>, FamilyError> {
        let n = y.len();
        if n < 2 {
            return Err(FamilyError::DegenerateData("fewer than two observations".into()));
        }
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        if !(var > 0.0) {
            return Err(FamilyError::DegenerateData("response has zero variance".into()));
        }
        Ok(vec![mean, 0.5 * var.ln()])
    }

    fn admissible(&self, theta: &[f64]) -> bool {
        theta[0].is_finite() && theta[1] > 0.0 && theta[1].is_finite()
    }
}
