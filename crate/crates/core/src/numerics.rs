//! Small numerical toolkit: adaptive Gauss–Kronrod quadrature (finite and
//! infinite ranges), bracketed bisection, golden-section maximization and
//! log-sum-exp helpers.

use crate::error::{Error, Result};

// Kronrod 15-point abscissae (positive half) and weights; the 7-point Gauss
// rule uses the odd-indexed abscissae.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

const MAX_INTERVALS: usize = 4000;

/// Tolerances for [`integrate`]. Converged when the summed error estimate is
/// below `max(abs, rel * |integral|)`.
#[derive(Debug, Clone, Copy)]
pub struct QuadTol {
    pub abs: f64,
    pub rel: f64,
}

impl Default for QuadTol {
    fn default() -> Self {
        QuadTol { abs: 1e-13, rel: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Segment { a, b, value: kronrod * half, error: ((kronrod - gauss) * half).abs() }
}

/// Globally adaptive G7–K15 integration of `f` over the finite interval `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: QuadTol) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut segments = vec![gk15(&mut f, lo, hi)];
    loop {
        let value: f64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::QuadratureFailure { estimate: value, error });
        }
        if error <= tol.abs.max(tol.rel * value.abs()) {
            return Ok(sign * value);
        }
        if segments.len() >= MAX_INTERVALS {
            return Err(Error::QuadratureFailure { estimate: value, error });
        }
        let (worst, _) = segments.iter().enumerate().max_by(|x, y| x.1.error.total_cmp(&y.1.error)).expect("non-empty");
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            // interval collapsed to adjacent floats
            return Err(Error::QuadratureFailure { estimate: value, error });
        }
        segments.push(gk15(&mut f, s.a, mid));
        segments.push(gk15(&mut f, mid, s.b));
    }
}

/// Integrate `f` over the whole real line, splitting at `breakpoints`
/// (kinks or discontinuities of the integrand). Tails are mapped onto `[0, 1)`
/// with `x = b ± s / (1 - s)`.
pub fn integrate_real_line<F: Fn(f64) -> f64>(f: F, breakpoints: &[f64], tol: QuadTol) -> Result<f64> {
    let mut pts: Vec<f64> = breakpoints.iter().copied().filter(|x| x.is_finite()).collect();
    if pts.is_empty() {
        pts.push(0.0);
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let n_pieces = pts.len() + 1;
    let piece_tol = QuadTol { abs: tol.abs / n_pieces as f64, rel: tol.rel };

    let first = pts[0];
    let last = *pts.last().unwrap();
    let left = integrate(
        |s| {
            let w = 1.0 - s;
            f(first - s / w) / (w * w)
        },
        0.0,
        1.0,
        piece_tol,
    )?;
    let right = integrate(
        |s| {
            let w = 1.0 - s;
            f(last + s / w) / (w * w)
        },
        0.0,
        1.0,
        piece_tol,
    )?;
    let mut total = left + right;
    for w in pts.windows(2) {
        total += integrate(&f, w[0], w[1], piece_tol)?;
    }
    Ok(total)
}

/// Bisection for a sign change of `f` on `[lo, hi]`. Stops when the bracket
/// can no longer be halved or `|f| <= ftol`.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, ftol: f64) -> Result<f64> {
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut fa = f(a);
    let fb = f(b);
    if fa.abs() <= ftol {
        return Ok(a);
    }
    if fb.abs() <= ftol {
        return Ok(b);
    }
    if !(fa.signum() != fb.signum()) || fa.is_nan() || fb.is_nan() {
        return Err(Error::RootBracketing { lo: a, hi: b, f_lo: fa, f_hi: fb });
    }
    for _ in 0..2000 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
/// Returns `(argmax, max)`.
pub fn maximize_unimodal<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, xtol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > xtol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mut best = if fc > fd { (c, fc) } else { (d, fd) };
    for x in [lo, hi] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// `log(sum(exp(xs)))`, stable for large magnitudes; `-inf` for an empty or
/// all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Exponentiate and normalize a row of log-weights into a probability vector.
pub fn softmax(logs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logs);
    logs.iter().map(|x| (x - lse).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let v = integrate(|x| x * x * x - 2.0 * x, 0.0, 2.0, QuadTol::default()).unwrap();
        assert!((v - 0.0).abs() < 1e-13);
        let v = integrate(|x| x.powi(4), -1.0, 1.0, QuadTol::default()).unwrap();
        assert!((v - 0.4).abs() < 1e-14);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let a = integrate(f64::exp, 0.0, 1.0, QuadTol::default()).unwrap();
        let b = integrate(f64::exp, 1.0, 0.0, QuadTol::default()).unwrap();
        assert!((a + b).abs() < 1e-15);
        assert!((a - (1f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn handles_kinks_adaptively() {
        let v = integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0, QuadTol::default()).unwrap();
        assert!((v - (0.045 + 0.245)).abs() < 1e-10);
    }

    #[test]
    fn real_line_gaussian_and_laplace() {
        let g = integrate_real_line(|x| (-x * x / 2.0).exp(), &[0.0], QuadTol::default()).unwrap();
        assert!((g - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-9);
        let l = integrate_real_line(|x: f64| 0.5 * (-(x - 0.7).abs()).exp(), &[0.7], QuadTol::default()).unwrap();
        assert!((l - 1.0).abs() < 1e-10);
    }

    #[test]
    fn bisection_finds_root_and_reports_missing_bracket() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 0.0).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
        let err = bisect(|x| x * x + 1.0, -1.0, 1.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::RootBracketing { .. }));
    }

    #[test]
    fn golden_section_maximum() {
        let (x, v) = maximize_unimodal(|x| -(x - 1.25).powi(2) + 3.0, -5.0, 5.0, 1e-10);
        assert!((x - 1.25).abs() < 1e-7);
        assert!((v - 3.0).abs() < 1e-15);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        let p = softmax(&[-1e4, -1e4 + 2f64.ln()]);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-11);
    }
}
