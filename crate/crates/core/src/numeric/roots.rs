//! Sign-scan bracketing followed by bisection.

use thiserror::Error;

/// Number of uniform scan points used to locate brackets.
pub const SCAN_POINTS: usize = 512;
/// Bisection stops once the bracket is narrower than this.
pub const X_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootError {
    #[error("{what}: no sign change on [{lo}, {hi}] (f(lo) = {f_lo:e}, f(hi) = {f_hi:e})")]
    NoBracket { what: String, lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("{what}: function is not finite at x = {x}")]
    NonFinite { what: String, x: f64 },
}

/// Values of `f` on a uniform grid.
#[derive(Debug, Clone)]
pub struct Scan {
    pub xs: Vec<f64>,
    pub fs: Vec<f64>,
}

impl Scan {
    pub fn new<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, points: usize) -> Scan {
        let n = points.max(2);
        let xs: Vec<f64> =
            (0..n).map(|k| if k == n - 1 { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 }).collect();
        let fs = xs.iter().map(|&x| f(x)).collect();
        Scan { xs, fs }
    }

    /// Sub-intervals `[x_k, x_{k+1}]` over which `f` changes sign, plus
    /// degenerate brackets at exact zeros.
    pub fn brackets(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for k in 0..self.xs.len() {
            if self.fs[k] == 0.0 {
                out.push((self.xs[k], self.xs[k]));
            } else if k + 1 < self.xs.len() && self.fs[k + 1] != 0.0 && sign_change(self.fs[k], self.fs[k + 1]) {
                out.push((self.xs[k], self.xs[k + 1]));
            }
        }
        out
    }

    pub fn sign_changes(&self) -> usize {
        self.brackets().len()
    }
}

fn sign_change(a: f64, b: f64) -> bool {
    (a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0)
}

/// Bisection on a bracket with opposite-sign (or zero) endpoint values.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, what: &str) -> Result<f64, RootError> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.is_nan() || f_hi.is_nan() || !sign_change(f_lo, f_hi) {
        return Err(RootError::NoBracket { what: what.to_string(), lo, hi, f_lo, f_hi });
    }
    while hi - lo > X_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm.is_nan() {
            return Err(RootError::NonFinite { what: what.to_string(), x: mid });
        }
        if fm == 0.0 {
            return Ok(mid);
        }
        if sign_change(f_lo, fm) {
            hi = mid;
        } else {
            lo = mid;
            f_lo = fm;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// All roots found by a scan of [`SCAN_POINTS`] points and bisection of each bracket.
pub fn all_roots<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, what: &str) -> Result<Vec<f64>, RootError> {
    let scan = Scan::new(&f, lo, hi, SCAN_POINTS);
    scan.brackets().into_iter().map(|(a, b)| bisect(&f, a, b, what)).collect()
}

/// Smallest root on `[lo, hi]`, or `None` if the scan sees no sign change.
pub fn first_root<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, what: &str) -> Result<Option<f64>, RootError> {
    let scan = Scan::new(&f, lo, hi, SCAN_POINTS);
    match scan.brackets().first() {
        Some(&(a, b)) => bisect(&f, a, b, what).map(Some),
        None => Ok(None),
    }
}

/// Smallest root on `[lo, hi]`; absence is an error carrying the endpoint signs.
pub fn require_root<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, what: &str) -> Result<f64, RootError> {
    match first_root(&f, lo, hi, what)? {
        Some(x) => Ok(x),
        None => Err(RootError::NoBracket { what: what.to_string(), lo, hi, f_lo: f(lo), f_hi: f(hi) }),
    }
}
