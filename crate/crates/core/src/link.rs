use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::ScoreError;
use crate::stats;

/// Cumulative link: the CDF mapping `theta_j - x'beta` to `P(Y <= j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    #[default]
    Logit,
    Probit,
    Cloglog,
}

impl Link {
    pub fn cdf(self, z: f64) -> f64 {
        match self {
            Link::Logit => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
            Link::Probit => stats::normal_cdf(z),
            Link::Cloglog => -(-z.exp()).exp_m1(),
        }
    }

    /// Upper tail `1 - F(z)`, computed without cancellation.
    pub fn sf(self, z: f64) -> f64 {
        match self {
            Link::Logit => Link::Logit.cdf(-z),
            Link::Probit => stats::normal_sf(z),
            Link::Cloglog => (-z.exp()).exp(),
        }
    }

    pub fn pdf(self, z: f64) -> f64 {
        if z.is_infinite() {
            return 0.0;
        }
        match self {
            Link::Logit => self.cdf(z) * self.cdf(-z),
            Link::Probit => stats::normal_pdf(z),
            Link::Cloglog => (z - z.exp()).exp(),
        }
    }

    /// Derivative of the density.
    pub fn pdf_deriv(self, z: f64) -> f64 {
        if z.is_infinite() {
            return 0.0;
        }
        match self {
            Link::Logit => self.pdf(z) * (1.0 - 2.0 * self.cdf(z)),
            Link::Probit => -z * stats::normal_pdf(z),
            Link::Cloglog => self.pdf(z) * (1.0 - z.exp()),
        }
    }

    pub fn quantile(self, p: f64) -> f64 {
        match self {
            Link::Logit => (p / (1.0 - p)).ln(),
            Link::Probit => stats::normal_quantile(p),
            Link::Cloglog => (-(-p).ln_1p()).ln(),
        }
    }

    /// `F(upper) - F(lower)` for `lower < upper`, evaluated on whichever tail
    /// keeps precision.
    pub fn interval_prob(self, lower: f64, upper: f64) -> f64 {
        if lower > 0.0 {
            self.sf(lower) - self.sf(upper)
        } else {
            self.cdf(upper) - self.cdf(lower)
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Link::Logit => "logit",
            Link::Probit => "probit",
            Link::Cloglog => "cloglog",
        };
        f.write_str(s)
    }
}

impl FromStr for Link {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "logit" => Ok(Link::Logit),
            "probit" => Ok(Link::Probit),
            "cloglog" => Ok(Link::Cloglog),
            other => Err(ScoreError::validation(format!("unknown link '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINKS: [Link; 3] = [Link::Logit, Link::Probit, Link::Cloglog];

    #[test]
    fn cdf_limits_and_monotonicity() {
        for link in LINKS {
            assert_eq!(link.cdf(f64::NEG_INFINITY), 0.0);
            assert_eq!(link.cdf(f64::INFINITY), 1.0);
            let mut prev = 0.0;
            for i in -60..=60 {
                let z = i as f64 / 10.0;
                let c = link.cdf(z);
                // Saturates at 1 in double precision far in the upper tail.
                assert!(c > prev || c == 1.0, "{link} not increasing at {z}");
                prev = c;
            }
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for link in LINKS {
            for p in [0.01, 0.2, 0.5, 0.8, 0.99] {
                let z = link.quantile(p);
                assert!((link.cdf(z) - p).abs() < 1e-10, "{link} at {p}");
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for link in LINKS {
            for z in [-3.0, -0.7, 0.0, 0.4, 2.5] {
                let fd = (link.cdf(z + h) - link.cdf(z - h)) / (2.0 * h);
                assert!((fd - link.pdf(z)).abs() < 1e-9, "{link} pdf at {z}");
                let fd2 = (link.pdf(z + h) - link.pdf(z - h)) / (2.0 * h);
                assert!((fd2 - link.pdf_deriv(z)).abs() < 1e-9, "{link} pdf' at {z}");
            }
        }
    }

    #[test]
    fn symmetric_links_are_half_at_zero() {
        assert_eq!(Link::Logit.cdf(0.0), 0.5);
        assert!((Link::Probit.cdf(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn interval_prob_keeps_upper_tail_precision() {
        let p = Link::Logit.interval_prob(40.0, 41.0);
        let exact = (-40f64).exp() / (1.0 + (-40f64).exp()) - (-41f64).exp() / (1.0 + (-41f64).exp());
        assert!(p > 0.0);
        assert!((p - exact).abs() / exact < 1e-10);
    }
}
