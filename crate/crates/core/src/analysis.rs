//! Theoretical performance descriptors of ASL in the small step-size regime:
//! consistency limits, Gaussian approximations, large-deviation error
//! exponents, rate functions and adaptation times.
//!
//! Vectors indexed by hypothesis have length `H` and carry a zero at the true
//! hypothesis `theta0`; covariance matrices are `H x H` with a zero row and
//! column at `theta0`.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CombinationMatrix, NetworkAnalysis, PerronEnvelope};
use crate::models::{llr_moments, LikelihoodModel};
use crate::numerics::{bisect, integrate, maximize_unimodal, QuadTol};
use crate::rng::stream_rng;

/// Residual target for the `t*` root.
pub const T_STAR_TOL: f64 = 1e-12;
/// Absolute tolerance of the `phi` quadrature.
pub const PHI_QUAD_TOL: f64 = 1e-10;
/// Half-width of the window around `tau = 0` where `Lambda_ave(tau)/tau` is
/// interpolated instead of evaluated.
pub const PHI_SINGULAR_WINDOW: f64 = 1e-4;
/// Default sample count of the Gaussian error-probability estimate.
pub const GAUSSIAN_SAMPLES: usize = 1_000_000;
/// Tail target of the refined-moment series.
pub const SERIES_TAIL_TOL: f64 = 1e-12;

fn wrong_hypotheses(n_hyp: usize, theta0: usize) -> impl Iterator<Item = usize> {
    (0..n_hyp).filter(move |&t| t != theta0)
}

fn check_inputs<M: LikelihoodModel + ?Sized>(model: &M, pi: &[f64], theta0: usize) -> Result<()> {
    if pi.len() != model.n_agents() {
        return Err(Error::Parameter(format!("{} Perron weights for {} agents", pi.len(), model.n_agents())));
    }
    if theta0 >= model.n_hypotheses() {
        return Err(Error::Parameter(format!("true hypothesis {} out of range", theta0 + 1)));
    }
    Ok(())
}

fn check_pair<M: LikelihoodModel + ?Sized>(model: &M, pi: &[f64], theta0: usize, theta: usize) -> Result<()> {
    check_inputs(model, pi, theta0)?;
    if theta >= model.n_hypotheses() {
        return Err(Error::Parameter(format!("hypothesis {} out of range", theta + 1)));
    }
    if theta == theta0 {
        return Err(Error::DegeneratePair(theta + 1));
    }
    Ok(())
}

/// `m_ave(theta) = sum_l pi_l d_l(theta)` with the hypotheses that fail
/// global identifiability (`m_ave <= 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanDescriptor {
    pub values: Vec<f64>,
    pub unidentifiable: Vec<usize>,
}

pub fn compute_m_ave<M: LikelihoodModel + ?Sized>(model: &M, pi: &[f64], theta0: usize) -> Result<MeanDescriptor> {
    check_inputs(model, pi, theta0)?;
    let mut values = vec![0.0; model.n_hypotheses()];
    let mut unidentifiable = Vec::new();
    for th in wrong_hypotheses(model.n_hypotheses(), theta0) {
        values[th] = pi.iter().enumerate().map(|(l, p)| p * model.kl(l, theta0, th)).sum();
        if values[th] <= 0.0 {
            unidentifiable.push(th);
        }
    }
    Ok(MeanDescriptor { values, unidentifiable })
}

/// Per-agent LLR covariance matrices `rho_l(theta, theta')`.
pub fn agent_covariances<M: LikelihoodModel + ?Sized>(model: &M, theta0: usize) -> Result<Vec<DMatrix<f64>>> {
    let h = model.n_hypotheses();
    (0..model.n_agents())
        .map(|l| {
            let mut rho = DMatrix::zeros(h, h);
            for a in wrong_hypotheses(h, theta0) {
                for b in wrong_hypotheses(h, theta0).filter(|&b| b >= a) {
                    let c = llr_moments(model, l, theta0, a, b)?.covariance;
                    rho[(a, b)] = c;
                    rho[(b, a)] = c;
                }
            }
            Ok(rho)
        })
        .collect()
}

/// `c_ave(theta, theta') = sum_l pi_l^2 rho_l(theta, theta')`.
pub fn compute_c_ave<M: LikelihoodModel + ?Sized>(model: &M, pi: &[f64], theta0: usize) -> Result<DMatrix<f64>> {
    check_inputs(model, pi, theta0)?;
    let rho = agent_covariances(model, theta0)?;
    let h = model.n_hypotheses();
    let mut c = DMatrix::zeros(h, h);
    for (p, r) in pi.iter().zip(&rho) {
        c += r * (p * p);
    }
    Ok(c)
}

/// Finite-step-size moments of the steady-state log-belief ratios per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedMoments {
    /// `m[k][theta]`.
    pub m: Vec<Vec<f64>>,
    /// `c[k]`, `H x H`.
    pub c: Vec<DMatrix<f64>>,
    pub truncation: usize,
}

/// Series truncation index with geometric tail below `SERIES_TAIL_TOL * scale`.
pub fn default_truncation(delta: f64, scale: f64) -> usize {
    let scale = scale.max(1.0);
    ((SERIES_TAIL_TOL / scale).ln() / (1.0 - delta).ln()).ceil().max(1.0) as usize
}

/// Series weights `w[l][k] = delta sum_{m<M} (1-delta)^m [A^{m+1}]_{lk}` and
/// the squared counterpart. Once the powers of `A` have converged to the
/// Perron projector the remaining geometric tail is summed in closed form.
pub fn series_weights(a: &CombinationMatrix, delta: f64, truncation: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.n();
    let q = 1.0 - delta;
    let am = a.matrix();
    let mut w = DMatrix::zeros(n, n);
    let mut s = DMatrix::zeros(n, n);
    let mut p = am.clone();
    let mut qm = 1.0;
    for m in 0..truncation {
        w += &p * (delta * qm);
        s += p.component_mul(&p) * (delta * delta * qm * qm);
        qm *= q;
        if m + 1 == truncation {
            break;
        }
        let next = &p * am;
        let converged = (0..n).all(|l| {
            let row = next.row(l);
            let first = row[0];
            row.iter().all(|v| (v - first).abs() < 1e-15)
        }) && (&next - &p).amax() < 1e-15;
        p = next;
        if converged {
            // p[(l, k)] == pi_l for every remaining m' in m+1..truncation
            let q_end = q.powi(truncation as i32);
            let lin = qm - q_end;
            let quad = (qm * qm - q_end * q_end) / (1.0 - q * q);
            for l in 0..n {
                for k in 0..n {
                    let pl = p[(l, k)];
                    w[(l, k)] += pl * lin;
                    s[(l, k)] += pl * pl * delta * delta * quad;
                }
            }
            break;
        }
    }
    (w, s)
}

pub fn refined_moments<M: LikelihoodModel + ?Sized>(
    model: &M,
    a: &CombinationMatrix,
    delta: f64,
    theta0: usize,
    truncation: Option<usize>,
) -> Result<RefinedMoments> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Parameter(format!("step size must lie in (0, 1), got {delta}")));
    }
    if a.n() != model.n_agents() {
        return Err(Error::Parameter("matrix size and agent count differ".into()));
    }
    let n = a.n();
    let h = model.n_hypotheses();
    let d: Vec<Vec<f64>> =
        (0..n).map(|l| (0..h).map(|th| if th == theta0 { 0.0 } else { model.kl(l, theta0, th) }).collect()).collect();
    let dmax = d.iter().flatten().copied().fold(0.0, f64::max);
    let truncation = truncation.unwrap_or_else(|| default_truncation(delta, dmax));
    let (w, s) = series_weights(a, delta, truncation);
    let rho = agent_covariances(model, theta0)?;
    let m = (0..n).map(|k| (0..h).map(|th| (0..n).map(|l| w[(l, k)] * d[l][th]).sum()).collect()).collect();
    let c = (0..n)
        .map(|k| {
            let mut ck = DMatrix::zeros(h, h);
            for l in 0..n {
                ck += &rho[l] * s[(l, k)];
            }
            ck
        })
        .collect();
    Ok(RefinedMoments { m, c, truncation })
}

/// Monte Carlo probability with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub p: f64,
    pub se: f64,
    pub samples: usize,
}

/// Symmetric square root factor `L` with `L L^T = C`, rejecting matrices
/// with an eigenvalue below `-1e-10` (relative to the largest magnitude).
pub fn psd_factor(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !c.is_square() {
        return Err(Error::InvalidMatrix("covariance must be square".into()));
    }
    let n = c.nrows();
    if n == 0 {
        return Ok(c.clone());
    }
    let sym = (c + c.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.min();
    if min < -1e-10 * scale {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * sqrt)
}

/// `P[min_theta N(m, C)(theta) <= 0]` by seeded Monte Carlo.
pub fn gaussian_error_probability(
    m: &[f64],
    c: &DMatrix<f64>,
    samples: usize,
    seed: u64,
) -> Result<ProbabilityEstimate> {
    if c.nrows() != m.len() {
        return Err(Error::InvalidMatrix(format!("{}-vector with {}x{} covariance", m.len(), c.nrows(), c.ncols())));
    }
    if samples == 0 {
        return Err(Error::Parameter("sample count must be positive".into()));
    }
    let l = psd_factor(c)?;
    let n = m.len();
    let mut rng = stream_rng(seed, 0, 0);
    let mut z = vec![0.0; n];
    let mut hits = 0usize;
    for _ in 0..samples {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        let bad = (0..n).any(|i| m[i] + (0..n).map(|j| l[(i, j)] * z[j]).sum::<f64>() <= 0.0);
        if bad {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    Ok(ProbabilityEstimate { p, se: (p * (1.0 - p) / samples as f64).sqrt(), samples })
}

/// Restrict an `H`-vector and `H x H` matrix to the wrong hypotheses.
pub fn restrict_to_wrong(m: &[f64], c: &DMatrix<f64>, theta0: usize) -> (Vec<f64>, DMatrix<f64>) {
    let idx: Vec<usize> = wrong_hypotheses(m.len(), theta0).collect();
    let mv = idx.iter().map(|&i| m[i]).collect();
    let cm = DMatrix::from_fn(idx.len(), idx.len(), |i, j| c[(idx[i], idx[j])]);
    (mv, cm)
}

/// `Lambda_ave(t; theta) = sum_l Lambda_l(pi_l t; theta)`.
pub fn lambda_ave<M: LikelihoodModel + ?Sized>(
    model: &M,
    pi: &[f64],
    t: f64,
    theta0: usize,
    theta: usize,
) -> Result<f64> {
    check_pair(model, pi, theta0, theta)?;
    lambda_ave_unchecked(model, pi, t, theta0, theta)
}

fn lambda_ave_unchecked<M: LikelihoodModel + ?Sized>(
    model: &M,
    pi: &[f64],
    t: f64,
    theta0: usize,
    theta: usize,
) -> Result<f64> {
    let mut s = 0.0;
    for (l, p) in pi.iter().enumerate() {
        s += model.lmgf(l, p * t, theta0, theta)?;
    }
    Ok(s)
}

/// Negative root of `Lambda_ave(t; theta)`, bracketed by
/// `[-1/pi_min, -1/pi_max]`.
pub fn solve_t_star<M: LikelihoodModel + ?Sized>(model: &M, pi: &[f64], theta0: usize, theta: usize) -> Result<f64> {
    check_pair(model, pi, theta0, theta)?;
    let m = compute_m_ave(model, pi, theta0)?;
    if m.values[theta] <= 0.0 {
        return Err(Error::Parameter(format!("hypothesis {} is not identifiable (m_ave <= 0)", theta + 1)));
    }
    let pmin = pi.iter().copied().fold(f64::INFINITY, f64::min);
    let pmax = pi.iter().copied().fold(0.0, f64::max);
    let mut failure = None;
    let t = bisect(
        |t| match lambda_ave_unchecked(model, pi, t, theta0, theta) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        -1.0 / pmin,
        -1.0 / pmax,
        T_STAR_TOL,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    t
}

/// `phi(t; theta) = int_0^t Lambda_ave(tau; theta) / tau dtau`.
pub fn phi_integral<M: LikelihoodModel + ?Sized>(
    model: &M,
    pi: &[f64],
    t: f64,
    theta0: usize,
    theta: usize,
) -> Result<f64> {
    check_pair(model, pi, theta0, theta)?;
    phi_unchecked(model, pi, t, theta0, theta)
}

fn phi_unchecked<M: LikelihoodModel + ?Sized>(
    model: &M,
    pi: &[f64],
    t: f64,
    theta0: usize,
    theta: usize,
) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let h = PHI_SINGULAR_WINDOW;
    let g_plus = lambda_ave_unchecked(model, pi, h, theta0, theta)? / h;
    let g_minus = lambda_ave_unchecked(model, pi, -h, theta0, theta)? / -h;
    let mut failure = None;
    let g = |tau: f64| {
        if tau.abs() < h {
            return g_minus + (g_plus - g_minus) * (tau + h) / (2.0 * h);
        }
        match lambda_ave_unchecked(model, pi, tau, theta0, theta) {
            Ok(v) => v / tau,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    };
    let tol = QuadTol { abs: PHI_QUAD_TOL, rel: 1e-12 };
    let total = if t.abs() <= h {
        integrate(g, 0.0, t, tol)?
    } else {
        let edge = h * t.signum();
        let mut g = g;
        integrate(&mut g, 0.0, edge, tol)? + integrate(&mut g, edge, t, tol)?
    };
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentEntry {
    pub theta: usize,
    pub t_star: f64,
    pub phi: f64,
    pub m_ave: f64,
}

/// Per-hypothesis exponents `Phi(theta) = -phi(t*_theta; theta)` and the
/// network exponent `Phi = min_theta Phi(theta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorExponents {
    pub theta0: usize,
    pub entries: Vec<ExponentEntry>,
    pub phi: f64,
    pub worst: usize,
}

impl ErrorExponents {
    pub fn entry(&self, theta: usize) -> Option<&ExponentEntry> {
        self.entries.iter().find(|e| e.theta == theta)
    }

    /// `Phi(theta)` as an `H`-vector (zero at `theta0`).
    pub fn phi_vector(&self, n_hyp: usize) -> Vec<f64> {
        let mut v = vec![0.0; n_hyp];
        for e in &self.entries {
            v[e.theta] = e.phi;
        }
        v
    }
}

pub fn error_exponent<M: LikelihoodModel + ?Sized>(model: &M, pi: &[f64], theta0: usize) -> Result<ErrorExponents> {
    check_inputs(model, pi, theta0)?;
    let m = compute_m_ave(model, pi, theta0)?;
    if let Some(&th) = m.unidentifiable.first() {
        return Err(Error::Parameter(format!("hypothesis {} is not identifiable (m_ave <= 0)", th + 1)));
    }
    let mut entries = Vec::new();
    for th in wrong_hypotheses(model.n_hypotheses(), theta0) {
        let t_star = solve_t_star(model, pi, theta0, th)?;
        let phi = -phi_unchecked(model, pi, t_star, theta0, th)?;
        entries.push(ExponentEntry { theta: th, t_star, phi, m_ave: m.values[th] });
    }
    let worst = entries.iter().fold(&entries[0], |b, e| if e.phi < b.phi { e } else { b });
    Ok(ErrorExponents { theta0, phi: worst.phi, worst: worst.theta, entries })
}

/// Support `(lo, hi)` of `x_ave = sum_l pi_l x_l(theta)`.
pub fn average_llr_support<M: LikelihoodModel + ?Sized>(
    model: &M,
    pi: &[f64],
    theta0: usize,
    theta: usize,
) -> (f64, f64) {
    pi.iter().enumerate().fold((0.0, 0.0), |(lo, hi), (l, p)| {
        let (a, b) = model.llr_support(l, theta0, theta);
        let lo = if *p == 0.0 { lo } else { lo + p * a };
        let hi = if *p == 0.0 { hi } else { hi + p * b };
        (lo, hi)
    })
}

/// Fenchel-Legendre transform `phi*(gamma) = sup_t [gamma t - phi(t)]`;
/// `+inf` outside the open support of the average LLR.
pub fn rate_function<M: LikelihoodModel + ?Sized>(
    model: &M,
    pi: &[f64],
    gamma: f64,
    theta0: usize,
    theta: usize,
) -> Result<f64> {
    check_pair(model, pi, theta0, theta)?;
    let (lo, hi) = average_llr_support(model, pi, theta0, theta);
    if !(gamma > lo && gamma < hi) {
        return Ok(f64::INFINITY);
    }
    let pmin = pi.iter().copied().filter(|p| *p > 0.0).fold(f64::INFINITY, f64::min);
    let bound = 10.0 / pmin;
    let mut failure = None;
    let (_, best) = maximize_unimodal(
        |t| match phi_unchecked(model, pi, t, theta0, theta) {
            Ok(v) => gamma * t - v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        -bound,
        bound,
        1e-9,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(best.max(0.0))
}

/// Constants of the instantaneous error bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientConstants {
    pub theta0: usize,
    /// `K1(theta)`, zero at `theta0`.
    pub k1_theta: Vec<f64>,
    pub k2_theta: Vec<f64>,
    pub k1: f64,
    pub k2: f64,
    pub kappa: f64,
    pub beta: f64,
    pub lambda_ave_0: Vec<f64>,
    pub m_ave: Vec<f64>,
    pub t_star: Vec<f64>,
}

impl TransientConstants {
    /// All initial states good: `lambda_ave_0(theta) >= m_ave(theta)` for every wrong `theta`.
    pub fn favorable(&self) -> bool {
        wrong_hypotheses(self.m_ave.len(), self.theta0).all(|th| self.lambda_ave_0[th] >= self.m_ave[th])
    }
}

/// `K1(theta) = |t*|(m_ave - lambda_ave_0)`, `K2(theta) = kappa |t*| sum_l |lambda_l0|`.
/// `lambda0[l][theta]` is the initial log-belief ratio against `theta0`.
pub fn transient_constants<M: LikelihoodModel + ?Sized>(
    model: &M,
    pi: &[f64],
    envelope: PerronEnvelope,
    lambda0: &[Vec<f64>],
    theta0: usize,
) -> Result<TransientConstants> {
    check_inputs(model, pi, theta0)?;
    let h = model.n_hypotheses();
    if lambda0.len() != pi.len() || lambda0.iter().any(|r| r.len() != h) {
        return Err(Error::Parameter("initial log-belief ratios must be N x H".into()));
    }
    let m = compute_m_ave(model, pi, theta0)?;
    let mut k1_theta = vec![0.0; h];
    let mut k2_theta = vec![0.0; h];
    let mut lambda_ave_0 = vec![0.0; h];
    let mut t_star = vec![0.0; h];
    for th in wrong_hypotheses(h, theta0) {
        let ts = solve_t_star(model, pi, theta0, th)?;
        t_star[th] = ts;
        lambda_ave_0[th] = pi.iter().zip(lambda0).map(|(p, r)| p * r[th]).sum();
        k1_theta[th] = ts.abs() * (m.values[th] - lambda_ave_0[th]);
        k2_theta[th] = envelope.kappa * ts.abs() * lambda0.iter().map(|r| r[th].abs()).sum::<f64>();
    }
    let max_wrong = |v: &[f64]| wrong_hypotheses(h, theta0).map(|th| v[th]).fold(f64::NEG_INFINITY, f64::max);
    Ok(TransientConstants {
        theta0,
        k1: max_wrong(&k1_theta),
        k2: max_wrong(&k2_theta),
        k1_theta,
        k2_theta,
        kappa: envelope.kappa,
        beta: envelope.beta,
        lambda_ave_0,
        m_ave: m.values,
        t_star,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransientCase {
    Favorable,
    Unfavorable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptationTime {
    pub steps: f64,
    pub case: TransientCase,
}

/// Steps after which the exponent stays within a fraction `epsilon` of `Phi`.
pub fn adaptation_time(
    constants: &TransientConstants,
    phi: f64,
    beta: f64,
    delta: f64,
    epsilon: f64,
) -> Result<AdaptationTime> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Parameter(format!("step size must lie in (0, 1), got {delta}")));
    }
    if !(phi > 0.0) {
        return Err(Error::Parameter(format!("exponent must be positive, got {phi}")));
    }
    let (case, k, rate) = if constants.favorable() {
        (TransientCase::Favorable, constants.k2, (1.0 / beta).ln())
    } else {
        (TransientCase::Unfavorable, constants.k1, (1.0 / (1.0 - delta)).ln())
    };
    let bound = k / phi;
    if !(epsilon > 0.0) || epsilon > bound {
        return Err(Error::Parameter(format!(
            "epsilon = {epsilon} outside the admissible range (0, {bound}] of the {case:?} case"
        )));
    }
    Ok(AdaptationTime { steps: (k / (epsilon * phi)).ln() / rate, case })
}

/// Tolerance fraction of a 3 dB adaptation time: the exponent has recovered
/// half of `Phi`.
pub const THREE_DB_EPSILON: f64 = 0.5;

/// Initial ratios after an abrupt change of truth: every agent sits at the
/// steady state of `previous`, `lambda_l0(theta) = m'(theta) - m'(theta0)`
/// with `m'` the network-average drift under `previous`.
pub fn changed_truth_ratios<M: LikelihoodModel + ?Sized>(
    model: &M,
    pi: &[f64],
    theta0: usize,
    previous: usize,
) -> Result<Vec<Vec<f64>>> {
    check_inputs(model, pi, theta0)?;
    let old = compute_m_ave(model, pi, previous)?.values;
    let row: Vec<f64> = old.iter().map(|v| v - old[theta0]).collect();
    Ok(vec![row; pi.len()])
}

/// Worst case of the adaptation time over the new truth and the previous one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseAdaptation {
    pub theta0: usize,
    pub previous: usize,
    pub phi: f64,
    pub time: AdaptationTime,
    pub constants: TransientConstants,
}

impl WorstCaseAdaptation {
    /// `delta * T`, the constant of the `c / delta` law.
    pub fn scaled(&self, delta: f64) -> f64 {
        delta * self.time.steps
    }
}

pub fn worst_case_adaptation<M: LikelihoodModel + ?Sized>(
    model: &M,
    net: &NetworkAnalysis,
    delta: f64,
    epsilon: f64,
) -> Result<WorstCaseAdaptation> {
    let h = model.n_hypotheses();
    let mut best: Option<WorstCaseAdaptation> = None;
    for theta0 in 0..h {
        let phi = error_exponent(model, &net.pi, theta0)?.phi;
        for previous in (0..h).filter(|&p| p != theta0) {
            let lambda0 = changed_truth_ratios(model, &net.pi, theta0, previous)?;
            let constants = transient_constants(model, &net.pi, net.envelope, &lambda0, theta0)?;
            let time = adaptation_time(&constants, phi, net.envelope.beta, delta, epsilon)?;
            if best.as_ref().is_none_or(|b| time.steps > b.time.steps) {
                best = Some(WorstCaseAdaptation { theta0, previous, phi, time, constants });
            }
        }
    }
    best.ok_or_else(|| Error::Parameter("at least two hypotheses are required".into()))
}

/// Nominal bound `sum_theta exp{(1/delta)[-Phi(theta) + K1(theta)(1-delta)^i + K2(theta)(1-delta)^i beta^i]}`,
/// clipped to 1. The `O(delta)` correction has no computable constant and is
/// omitted, so this is an exponent-level envelope.
pub fn instantaneous_bound(constants: &TransientConstants, phi_theta: &[f64], delta: f64, i: usize) -> f64 {
    let q = (1.0 - delta).powi(i as i32);
    let b = constants.beta.powi(i as i32);
    let total: f64 = wrong_hypotheses(phi_theta.len(), constants.theta0)
        .map(|th| ((-phi_theta[th] + constants.k1_theta[th] * q + constants.k2_theta[th] * q * b) / delta).exp())
        .sum();
    total.min(1.0)
}

/// Steady-state descriptors for export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateDescriptors {
    pub theta0: usize,
    pub m_ave: Vec<f64>,
    pub c_ave: Vec<Vec<f64>>,
    pub t_star: Vec<f64>,
    pub phi_theta: Vec<f64>,
    pub phi: f64,
    pub pi: Vec<f64>,
    pub beta2_magnitude: f64,
}

pub fn steady_state_descriptors<M: LikelihoodModel + ?Sized>(
    model: &M,
    net: &NetworkAnalysis,
    theta0: usize,
) -> Result<SteadyStateDescriptors> {
    let h = model.n_hypotheses();
    let m = compute_m_ave(model, &net.pi, theta0)?;
    let c = compute_c_ave(model, &net.pi, theta0)?;
    let ex = error_exponent(model, &net.pi, theta0)?;
    let mut t_star = vec![0.0; h];
    for e in &ex.entries {
        t_star[e.theta] = e.t_star;
    }
    Ok(SteadyStateDescriptors {
        theta0,
        m_ave: m.values,
        c_ave: (0..h).map(|i| (0..h).map(|j| c[(i, j)]).collect()).collect(),
        t_star,
        phi_theta: ex.phi_vector(h),
        phi: ex.phi,
        pi: net.pi.clone(),
        beta2_magnitude: net.beta2_magnitude,
    })
}

impl SteadyStateDescriptors {
    /// One record per wrong hypothesis (1-based): `theta m_ave c_ave_diag t_star phi`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# theta m_ave c_ave_diag t_star phi\n");
        for th in wrong_hypotheses(self.m_ave.len(), self.theta0) {
            out.push_str(&format!(
                "{} {:.10e} {:.10e} {:.10e} {:.10e}\n",
                th + 1,
                self.m_ave[th],
                self.c_ave[th][th],
                self.t_star[th],
                self.phi_theta[th]
            ));
        }
        out
    }
}
