//! Trapezoid quadrature weights for integrals over functional covariates.

/// Trapezoid weights on the points `s`; a single point gets weight 0.
pub fn trapezoid_weights(s: &[f64]) -> Vec<f64> {
    let n = s.len();
    let mut w = vec![0.0; n];
    for k in 1..n {
        let h = 0.5 * (s[k] - s[k - 1]);
        w[k - 1] += h;
        w[k] += h;
    }
    w
}

/// Weights for `∫_{s_0}^{t} x(s) ds` using only points with `s ≤ t`; the last
/// included point receives half its cell, as in the trapezoid rule.
pub fn historical_weights(s: &[f64], t: f64) -> Vec<f64> {
    let m = s.iter().take_while(|&&v| v <= t + 1e-12 * t.abs().max(1.0)).count();
    let mut w = trapezoid_weights(&s[..m]);
    w.resize(s.len(), 0.0);
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(g: usize) -> Vec<f64> {
        (0..g).map(|k| k as f64 / (g - 1) as f64).collect()
    }

    #[test]
    fn uniform_weights() {
        let s = uniform(11);
        let w = trapezoid_weights(&s);
        assert!((w[0] - 0.05).abs() < 1e-15 && (w[10] - 0.05).abs() < 1e-15);
        assert!(w[1..10].iter().all(|v| (v - 0.1).abs() < 1e-15));
        assert_eq!(trapezoid_weights(&[0.5]), vec![0.0]);
    }

    #[test]
    fn integral_of_identity() {
        let s = uniform(100);
        let w = trapezoid_weights(&s);
        let v: f64 = w.iter().zip(&s).map(|(w, s)| w * s).sum();
        assert!((v - 0.5).abs() < 1e-3);
    }

    #[test]
    fn historical_limits() {
        let s = uniform(21);
        for (k, &t) in s.iter().enumerate() {
            let w = historical_weights(&s, t);
            assert!(w[k + 1..].iter().all(|v| *v == 0.0));
            let one: f64 = w.iter().sum();
            let lin: f64 = w.iter().zip(&s).map(|(w, s)| w * s).sum();
            assert!((one - t).abs() < 1e-12);
            // Trapezoid is exact for linear integrands.
            assert!((lin - t * t / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn historical_error_is_second_order() {
        // ∫₀¹ s² ds = 1/3; halving the spacing divides the error by ~4.
        let err = |g: usize| {
            let s = uniform(g);
            let w = historical_weights(&s, 1.0);
            (w.iter().zip(&s).map(|(w, s)| w * s * s).sum::<f64>() - 1.0 / 3.0).abs()
        };
        let sizes = [11, 21, 41, 81, 161];
        let e: Vec<f64> = sizes.iter().map(|&g| err(g)).collect();
        let h: Vec<f64> = sizes.iter().map(|&g| 1.0 / (g - 1) as f64).collect();
        let n = e.len() as f64;
        let (lx, ly): (Vec<f64>, Vec<f64>) = h.iter().zip(&e).map(|(h, e)| (h.ln(), e.ln())).unzip();
        let mx = lx.iter().sum::<f64>() / n;
        let my = ly.iter().sum::<f64>() / n;
        let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((slope - 2.0).abs() < 0.05, "slope {slope}");
    }
}
