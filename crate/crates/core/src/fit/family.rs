use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Exponential family with its canonical link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Family {
    #[default]
    #[serde(rename = "gaussian", alias = "gaussian-identity")]
    Gaussian,
    #[serde(rename = "poisson", alias = "poisson-log")]
    Poisson,
    #[serde(rename = "binomial", alias = "binomial-logit")]
    Binomial,
}

const MU_EPS: f64 = 1e-10;

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Poisson => "poisson",
            Family::Binomial => "binomial",
        }
    }

    /// Known-scale families fix φ = 1.
    pub fn scale_known(self) -> bool {
        !matches!(self, Family::Gaussian)
    }

    pub fn link(self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => mu,
            Family::Poisson => mu.ln(),
            Family::Binomial => (mu / (1.0 - mu)).ln(),
        }
    }

    pub fn inverse_link(self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => eta,
            Family::Poisson => eta.exp(),
            Family::Binomial => {
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    /// dμ/dη at η.
    pub fn mu_eta(self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Poisson => eta.exp(),
            Family::Binomial => {
                let mu = self.inverse_link(eta);
                mu * (1.0 - mu)
            }
        }
    }

    pub fn variance(self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Poisson => mu,
            Family::Binomial => mu * (1.0 - mu),
        }
    }

    /// Keeps a mean strictly inside the family's valid range.
    pub fn clamp_mu(self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => mu,
            Family::Poisson => mu.max(MU_EPS),
            Family::Binomial => mu.clamp(MU_EPS, 1.0 - MU_EPS),
        }
    }

    /// Starting mean for the IRLS iteration.
    pub fn initial_mu(self, y: f64) -> f64 {
        match self {
            Family::Gaussian => y,
            Family::Poisson => y + 0.1,
            Family::Binomial => (y + 0.5) / 2.0,
        }
    }

    pub fn validate_response(self, y: &[f64]) -> Result<(), String> {
        match self {
            Family::Gaussian => Ok(()),
            Family::Poisson => {
                if y.iter().all(|&v| v >= 0.0 && v.fract() == 0.0) {
                    Ok(())
                } else {
                    Err("poisson response must be non-negative integers".into())
                }
            }
            Family::Binomial => {
                if y.iter().all(|&v| v == 0.0 || v == 1.0) {
                    Ok(())
                } else {
                    Err("binomial response must be 0/1".into())
                }
            }
        }
    }

    /// Unit deviance contribution of one observation.
    pub fn unit_deviance(self, y: f64, mu: f64) -> f64 {
        match self {
            Family::Gaussian => (y - mu) * (y - mu),
            Family::Poisson => {
                let t = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
                2.0 * (t - (y - mu))
            }
            Family::Binomial => {
                let mu = self.clamp_mu(mu);
                if y == 1.0 {
                    -2.0 * mu.ln()
                } else {
                    -2.0 * (1.0 - mu).ln()
                }
            }
        }
    }

    /// Log-likelihood of one observation at scale `phi`.
    pub fn log_likelihood(self, y: f64, mu: f64, phi: f64) -> f64 {
        match self {
            Family::Gaussian => {
                -0.5 * (y - mu) * (y - mu) / phi - 0.5 * (2.0 * std::f64::consts::PI * phi).ln()
            }
            Family::Poisson => {
                let lm = if mu > 0.0 { mu.ln() } else { f64::NEG_INFINITY };
                let t = if y > 0.0 { y * lm } else { 0.0 };
                t - mu - ln_gamma(y + 1.0)
            }
            Family::Binomial => {
                let mu = self.clamp_mu(mu);
                if y == 1.0 {
                    mu.ln()
                } else {
                    (1.0 - mu).ln()
                }
            }
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
