//! Per-agent likelihood families and the statistics of their log-likelihood
//! ratios: KL divergences, logarithmic moment generating functions and
//! covariances.
//!
//! Hypotheses and agents are 0-based here. For a pair `(theta0, theta)` the
//! log-likelihood ratio is `x = log L(xi|theta0) - log L(xi|theta)` with `xi`
//! drawn from the `theta0` model.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{integrate_real_line, QuadTol};

const LN_HALF: f64 = -std::f64::consts::LN_2;

/// Number of hypotheses (at least two).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisSet(usize);

impl HypothesisSet {
    pub fn new(count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::Parameter(format!("need at least 2 hypotheses, got {count}")));
        }
        Ok(HypothesisSet(count))
    }

    pub fn count(self) -> usize {
        self.0
    }
}

/// Capability shared by every likelihood family.
pub trait LikelihoodModel: Send + Sync {
    fn family(&self) -> &'static str;
    fn n_agents(&self) -> usize;
    fn n_hypotheses(&self) -> usize;
    /// Draw one observation for agent `k` under hypothesis `theta0`.
    fn sample(&self, k: usize, theta0: usize, rng: &mut dyn RngCore) -> f64;
    fn log_likelihood(&self, k: usize, xi: f64, theta: usize) -> f64;
    /// KL divergence `d_k(theta)` between the `theta0` and `theta` models of agent `k`.
    fn kl(&self, k: usize, theta0: usize, theta: usize) -> f64;
    /// `Lambda_k(t; theta) = log E[exp(t x)]` under `theta0`.
    fn lmgf(&self, k: usize, t: f64, theta0: usize, theta: usize) -> Result<f64>;
    /// Points where the densities or ratios of agent `k` are not smooth.
    fn kinks(&self, k: usize, hypotheses: &[usize]) -> Vec<f64>;
    /// Closed support `[x_min, x_max]` of the log-likelihood ratio.
    fn llr_support(&self, k: usize, theta0: usize, theta: usize) -> (f64, f64);

    fn hypotheses(&self) -> HypothesisSet {
        HypothesisSet(self.n_hypotheses())
    }

    fn density(&self, k: usize, xi: f64, theta: usize) -> f64 {
        self.log_likelihood(k, xi, theta).exp()
    }
}

/// Laplace likelihoods with unit scale: `L_k(xi|theta) = exp(-|xi - e_k(theta)|) / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceFamily {
    /// `locations[k][theta]`.
    pub locations: Vec<Vec<f64>>,
}

/// Unit-variance Gaussian likelihoods with per-agent, per-hypothesis means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianFamily {
    pub means: Vec<Vec<f64>>,
}

fn validate_table(table: &[Vec<f64>]) -> Result<()> {
    let h = table.first().map(Vec::len).unwrap_or(0);
    if table.is_empty() {
        return Err(Error::Parameter("model needs at least one agent".into()));
    }
    HypothesisSet::new(h)?;
    for (k, row) in table.iter().enumerate() {
        if row.len() != h {
            return Err(Error::Parameter(format!("agent {} has {} hypotheses, expected {h}", k + 1, row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("agent {} has a non-finite parameter", k + 1)));
        }
    }
    Ok(())
}

impl LaplaceFamily {
    pub fn new(locations: Vec<Vec<f64>>) -> Result<Self> {
        validate_table(&locations)?;
        Ok(LaplaceFamily { locations })
    }

    /// `Delta = e_k(theta) - e_k(theta0)`.
    pub fn delta(&self, k: usize, theta0: usize, theta: usize) -> f64 {
        self.locations[k][theta] - self.locations[k][theta0]
    }
}

impl GaussianFamily {
    pub fn new(means: Vec<Vec<f64>>) -> Result<Self> {
        validate_table(&means)?;
        Ok(GaussianFamily { means })
    }
}

/// Closed-form Laplace LMGF, symmetric in the sign of `delta`, evaluated as a
/// log-sum-exp of its three terms. The `sinh(D u)/u` term (`u = t + 1/2`) uses
/// its series near the removable singularity.
pub fn laplace_lmgf(t: f64, delta: f64) -> f64 {
    let d = delta.abs();
    if d == 0.0 {
        return 0.0;
    }
    let u = t + 0.5;
    let point_low = LN_HALF - d * (t + 1.0);
    let point_high = LN_HALF + d * t;
    let log_sinh_ratio = if u.abs() < 1e-6 {
        let u2 = u * u;
        (d + d.powi(3) * u2 / 6.0 + d.powi(5) * u2 * u2 / 120.0).ln()
    } else {
        let y = d * u.abs();
        y + (-(-2.0 * y).exp_m1()).ln() - std::f64::consts::LN_2 - u.abs().ln()
    };
    let continuous = LN_HALF - d / 2.0 + log_sinh_ratio;
    crate::numerics::log_sum_exp(&[point_low, point_high, continuous])
}

fn sample_standard_laplace(rng: &mut dyn RngCore) -> f64 {
    // inverse CDF on u in (-1/2, 1/2)
    let bits = rng.next_u64() >> 11;
    let u = (bits as f64 + 0.5) / (1u64 << 53) as f64 - 0.5;
    -u.signum() * (-2.0 * u.abs()).ln_1p()
}

impl LikelihoodModel for LaplaceFamily {
    fn family(&self) -> &'static str {
        "laplace"
    }

    fn n_agents(&self) -> usize {
        self.locations.len()
    }

    fn n_hypotheses(&self) -> usize {
        self.locations[0].len()
    }

    fn sample(&self, k: usize, theta0: usize, rng: &mut dyn RngCore) -> f64 {
        self.locations[k][theta0] + sample_standard_laplace(rng)
    }

    fn log_likelihood(&self, k: usize, xi: f64, theta: usize) -> f64 {
        LN_HALF - (xi - self.locations[k][theta]).abs()
    }

    fn kl(&self, k: usize, theta0: usize, theta: usize) -> f64 {
        let d = self.delta(k, theta0, theta).abs();
        d + (-d).exp_m1()
    }

    fn lmgf(&self, k: usize, t: f64, theta0: usize, theta: usize) -> Result<f64> {
        let v = laplace_lmgf(t, self.delta(k, theta0, theta));
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::LmgfOverflow { family: self.family(), t })
        }
    }

    fn kinks(&self, k: usize, hypotheses: &[usize]) -> Vec<f64> {
        hypotheses.iter().map(|&h| self.locations[k][h]).collect()
    }

    fn llr_support(&self, k: usize, theta0: usize, theta: usize) -> (f64, f64) {
        let d = self.delta(k, theta0, theta).abs();
        (-d, d)
    }
}

impl LikelihoodModel for GaussianFamily {
    fn family(&self) -> &'static str {
        "gaussian"
    }

    fn n_agents(&self) -> usize {
        self.means.len()
    }

    fn n_hypotheses(&self) -> usize {
        self.means[0].len()
    }

    fn sample(&self, k: usize, theta0: usize, rng: &mut dyn RngCore) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.means[k][theta0] + z
    }

    fn log_likelihood(&self, k: usize, xi: f64, theta: usize) -> f64 {
        let r = xi - self.means[k][theta];
        -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * r * r
    }

    fn kl(&self, k: usize, theta0: usize, theta: usize) -> f64 {
        let d = self.means[k][theta] - self.means[k][theta0];
        0.5 * d * d
    }

    fn lmgf(&self, k: usize, t: f64, theta0: usize, theta: usize) -> Result<f64> {
        // x ~ N(D^2/2, D^2) under theta0
        let v = self.kl(k, theta0, theta) * t * (t + 1.0);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::LmgfOverflow { family: self.family(), t })
        }
    }

    fn kinks(&self, k: usize, hypotheses: &[usize]) -> Vec<f64> {
        hypotheses.iter().map(|&h| self.means[k][h]).collect()
    }

    fn llr_support(&self, k: usize, theta0: usize, theta: usize) -> (f64, f64) {
        if self.means[k][theta] == self.means[k][theta0] {
            (0.0, 0.0)
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        }
    }
}

/// Either supported family, for configuration-driven code paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Laplace(LaplaceFamily),
    Gaussian(GaussianFamily),
}

impl Family {
    fn inner(&self) -> &dyn LikelihoodModel {
        match self {
            Family::Laplace(m) => m,
            Family::Gaussian(m) => m,
        }
    }

    /// The per-agent parameter table (locations or means).
    pub fn table(&self) -> &[Vec<f64>] {
        match self {
            Family::Laplace(m) => &m.locations,
            Family::Gaussian(m) => &m.means,
        }
    }
}

impl LikelihoodModel for Family {
    fn family(&self) -> &'static str {
        self.inner().family()
    }
    fn n_agents(&self) -> usize {
        self.inner().n_agents()
    }
    fn n_hypotheses(&self) -> usize {
        self.inner().n_hypotheses()
    }
    fn sample(&self, k: usize, theta0: usize, rng: &mut dyn RngCore) -> f64 {
        match self {
            Family::Laplace(m) => m.sample(k, theta0, rng),
            Family::Gaussian(m) => m.sample(k, theta0, rng),
        }
    }
    fn log_likelihood(&self, k: usize, xi: f64, theta: usize) -> f64 {
        match self {
            Family::Laplace(m) => m.log_likelihood(k, xi, theta),
            Family::Gaussian(m) => m.log_likelihood(k, xi, theta),
        }
    }
    fn kl(&self, k: usize, theta0: usize, theta: usize) -> f64 {
        self.inner().kl(k, theta0, theta)
    }
    fn lmgf(&self, k: usize, t: f64, theta0: usize, theta: usize) -> Result<f64> {
        self.inner().lmgf(k, t, theta0, theta)
    }
    fn kinks(&self, k: usize, hypotheses: &[usize]) -> Vec<f64> {
        self.inner().kinks(k, hypotheses)
    }
    fn llr_support(&self, k: usize, theta0: usize, theta: usize) -> (f64, f64) {
        self.inner().llr_support(k, theta0, theta)
    }
}

/// `x_k(theta) = log L_k(xi|theta0) - log L_k(xi|theta)`.
pub fn log_likelihood_ratio<M: LikelihoodModel + ?Sized>(
    model: &M,
    k: usize,
    xi: f64,
    theta: usize,
    theta0: usize,
) -> Result<f64> {
    if theta == theta0 {
        return Err(Error::DegeneratePair(theta + 1));
    }
    Ok(model.log_likelihood(k, xi, theta0) - model.log_likelihood(k, xi, theta))
}

pub fn kl_divergence<M: LikelihoodModel + ?Sized>(model: &M, k: usize, theta0: usize, theta: usize) -> Result<f64> {
    if theta == theta0 {
        return Err(Error::DegeneratePair(theta + 1));
    }
    Ok(model.kl(k, theta0, theta))
}

pub fn lmgf<M: LikelihoodModel + ?Sized>(model: &M, k: usize, t: f64, theta0: usize, theta: usize) -> Result<f64> {
    if theta == theta0 {
        return Err(Error::DegeneratePair(theta + 1));
    }
    if !t.is_finite() {
        return Err(Error::Parameter(format!("LMGF argument must be finite, got {t}")));
    }
    model.lmgf(k, t, theta0, theta)
}

/// First and second moments of a pair of log-likelihood ratios at one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlrMoments {
    pub mean: f64,
    pub mean_other: f64,
    pub covariance: f64,
}

/// Means (the KL divergences) and covariance `rho_k(theta, theta')` of the
/// log-likelihood ratios, the covariance by adaptive quadrature over the
/// `theta0` density.
pub fn llr_moments<M: LikelihoodModel + ?Sized>(
    model: &M,
    k: usize,
    theta0: usize,
    theta: usize,
    theta_other: usize,
) -> Result<LlrMoments> {
    let mean = kl_divergence(model, k, theta0, theta)?;
    let mean_other = kl_divergence(model, k, theta0, theta_other)?;
    let llr = |xi: f64, th: usize| model.log_likelihood(k, xi, theta0) - model.log_likelihood(k, xi, th);
    let integrand = |xi: f64| {
        let w = model.density(k, xi, theta0);
        if w == 0.0 {
            return 0.0;
        }
        (llr(xi, theta) - mean) * (llr(xi, theta_other) - mean_other) * w
    };
    let kinks = model.kinks(k, &[theta0, theta, theta_other]);
    let covariance = integrate_real_line(integrand, &kinks, QuadTol { abs: 1e-14, rel: 1e-10 })?;
    Ok(LlrMoments { mean, mean_other, covariance })
}

/// Parse a model-assignment file.
///
/// Each non-comment row reads `agent_range hypothesis value`, e.g. `1-3 1 0.1`
/// (1-based, ranges inclusive). An optional `family laplace|gaussian` line
/// selects the family (default Laplace). Every (agent, hypothesis) pair must
/// be assigned exactly once.
pub fn parse_model_assignment(text: &str) -> Result<Family> {
    let mut family = "laplace".to_string();
    let mut rows: Vec<(usize, usize, usize, f64, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line: line_no, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0].eq_ignore_ascii_case("family") {
            family = fields.get(1).ok_or_else(|| err("expected `family NAME`".into()))?.to_ascii_lowercase();
            continue;
        }
        if fields.len() != 3 {
            return Err(err(format!("expected `agent_range hypothesis value`, found `{line}`")));
        }
        let (lo, hi) = match fields[0].split_once('-') {
            Some((a, b)) => (a.parse::<usize>(), b.parse::<usize>()),
            None => (fields[0].parse::<usize>(), fields[0].parse::<usize>()),
        };
        let (lo, hi) = match (lo, hi) {
            (Ok(a), Ok(b)) if a >= 1 && a <= b => (a, b),
            _ => return Err(err(format!("bad agent range `{}`", fields[0]))),
        };
        let hyp: usize =
            fields[1].parse().ok().filter(|&h| h >= 1).ok_or_else(|| err(format!("bad hypothesis `{}`", fields[1])))?;
        let value: f64 = fields[2]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| err(format!("bad value `{}`", fields[2])))?;
        rows.push((lo, hi, hyp, value, line_no));
    }
    let n = rows.iter().map(|r| r.1).max().unwrap_or(0);
    let h = rows.iter().map(|r| r.2).max().unwrap_or(0);
    if n == 0 {
        return Err(Error::Parse { line: 0, message: "no assignments".into() });
    }
    let mut table: Vec<Vec<Option<f64>>> = vec![vec![None; h]; n];
    for &(lo, hi, hyp, value, line) in &rows {
        for agent in lo..=hi {
            let slot = &mut table[agent - 1][hyp - 1];
            if slot.is_some() {
                return Err(Error::Parse { line, message: format!("agent {agent}, hypothesis {hyp} assigned twice") });
            }
            *slot = Some(value);
        }
    }
    let mut full = Vec::with_capacity(n);
    for (k, row) in table.into_iter().enumerate() {
        let mut out = Vec::with_capacity(h);
        for (th, v) in row.into_iter().enumerate() {
            out.push(v.ok_or(Error::Parse {
                line: 0,
                message: format!("agent {}, hypothesis {} not assigned", k + 1, th + 1),
            })?);
        }
        full.push(out);
    }
    match family.as_str() {
        "laplace" => Ok(Family::Laplace(LaplaceFamily::new(full)?)),
        "gaussian" => Ok(Family::Gaussian(GaussianFamily::new(full)?)),
        other => Err(Error::Parse { line: 0, message: format!("unknown family `{other}`") }),
    }
}

/// Render a family in the assignment format, one row per (agent, hypothesis).
pub fn format_model_assignment(family: &Family) -> String {
    let mut out = format!("family {}\n", family.family());
    for (k, row) in family.table().iter().enumerate() {
        for (th, v) in row.iter().enumerate() {
            out.push_str(&format!("{} {} {}\n", k + 1, th + 1, v));
        }
    }
    out
}
