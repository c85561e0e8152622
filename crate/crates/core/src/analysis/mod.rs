//! Internal rate of return, signaling share and learning-weight tables.

use crate::error::{Error, Result};
use crate::model::theta;

/// Career over which returns are discounted.
#[derive(Debug, Clone, PartialEq)]
pub struct Career {
    /// Average wage by experience `W̄(t)`; `None` is flat at 1.
    pub baseline: Option<Vec<f64>>,
    /// Number of working years, `t = 0..career_length`.
    pub career_length: usize,
}

impl Default for Career {
    fn default() -> Self {
        Self { baseline: None, career_length: 40 }
    }
}

impl Career {
    fn baseline_at(&self, t: usize) -> f64 {
        self.baseline.as_ref().map_or(1.0, |b| b[t])
    }

    fn validate(&self, estimated: usize) -> Result<()> {
        if self.career_length == 0 {
            return Err(Error::InvalidInput("career length must be positive".into()));
        }
        if estimated > self.career_length {
            return Err(Error::InvalidInput(format!(
                "career length {} is shorter than the {estimated} estimated years",
                self.career_length
            )));
        }
        if let Some(b) = &self.baseline {
            if b.len() < self.career_length {
                return Err(Error::InvalidInput(format!(
                    "baseline covers {} years, career needs {}",
                    b.len(),
                    self.career_length
                )));
            }
            if b.iter().take(self.career_length).any(|w| !(w.is_finite() && *w > 0.0)) {
                return Err(Error::InvalidInput("baseline wages must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrrInput {
    /// Proportional return `b_t` for the estimated years.
    pub returns: Vec<f64>,
    /// Return used after the estimated years, where learning is complete
    /// and skill prices are back at one.
    pub limit_return: f64,
    pub career: Career,
}

impl IrrInput {
    pub fn new(returns: Vec<f64>, limit_return: f64) -> Self {
        Self { returns, limit_return, career: Career::default() }
    }

    fn return_at(&self, t: usize) -> f64 {
        self.returns.get(t).copied().unwrap_or(self.limit_return)
    }

    /// Present value of one more year of schooling minus the value of
    /// starting work now.
    fn pv_difference(&self, r: f64) -> f64 {
        let mut f = 0.0;
        let mut disc = 1.0;
        for t in 0..self.career.career_length {
            let w = self.career.baseline_at(t);
            f += w * disc * ((1.0 + self.return_at(t)) / (1.0 + r) - 1.0);
            disc /= 1.0 + r;
        }
        f
    }
}

/// Root of the present-value difference on `(−0.99, 1.0)` by bisection.
pub fn irr(input: &IrrInput) -> Result<f64> {
    input.career.validate(input.returns.len())?;
    if input.returns.iter().chain(std::iter::once(&input.limit_return)).any(|b| !b.is_finite()) {
        return Err(Error::InvalidInput("returns must be finite".into()));
    }
    let (mut lo, mut hi) = (-0.99, 1.0);
    let (f_lo, f_hi) = (input.pv_difference(lo), input.pv_difference(hi));
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NoSolution(format!(
            "present-value difference has the same sign at r = {lo} and r = {hi}"
        )));
    }
    let lo_positive = f_lo > 0.0;
    // Runs to full precision, which is tighter than |f| < 1e-12·ΣW̄.
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let f = input.pv_difference(mid);
        if f == 0.0 {
            return Ok(mid);
        }
        if (f > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalingSummary {
    pub private_irr: f64,
    /// IRR of the social profile.
    pub social_return: f64,
    /// `private_irr − social_return`.
    pub signaling_points: f64,
    /// Share of the private IRR not explained by productivity.
    pub signaling_share: f64,
}

/// IRRs of the private and social profiles and the signaling share
/// `1 − social/private`. Beyond the estimated years both profiles use
/// `limit_return`.
pub fn signaling_decomposition(
    private: &[f64],
    social: &[f64],
    limit_return: f64,
    career: &Career,
) -> Result<SignalingSummary> {
    if private.len() != social.len() {
        return Err(Error::InvalidInput("private and social profiles cover different years".into()));
    }
    let private_irr = irr(&IrrInput { returns: private.to_vec(), limit_return, career: career.clone() })?;
    let social_return = irr(&IrrInput { returns: social.to_vec(), limit_return, career: career.clone() })?;
    if private_irr.abs() < 1e-12 {
        return Err(Error::InvalidInput("signaling share is undefined when the private IRR is zero".into()));
    }
    let signaling_points = private_irr - social_return;
    Ok(SignalingSummary {
        private_irr,
        social_return,
        signaling_points,
        signaling_share: signaling_points / private_irr,
    })
}

/// `(t, θ_t)` for each requested experience year.
pub fn theta_table(kappa: f64, ts: &[usize]) -> Result<Vec<(usize, f64)>> {
    ts.iter().map(|&t| Ok((t, theta(kappa, t)?))).collect()
}
