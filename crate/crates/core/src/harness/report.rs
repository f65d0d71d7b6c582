//! Report rendering: fixed-precision numbers, sweep CSV bodies, and
//! pass/fail lines. Everything here is deterministic text so that a
//! rerun reproduces its output byte-for-byte.

use crate::estimators::{OrderFit, SweepRecord};

/// 17 significant digits: enough to reconstruct the exact f64.
pub fn fmt_g17(v: f64) -> String {
    format!("{v:.16e}")
}

pub const SWEEP_COLUMNS: &str = "axis_value,error_mean,error_std,n_samples,window_lo,window_hi";

/// One CSV row; real-valued columns carry 17 significant digits, counts
/// stay integral.
pub fn sweep_row(r: &SweepRecord) -> String {
    format!(
        "{},{},{},{},{},{}",
        fmt_g17(r.axis_value),
        fmt_g17(r.error_mean),
        fmt_g17(r.error_std),
        r.n_samples,
        r.window_lo,
        r.window_hi
    )
}

/// Footer lines for a fitted sweep; `#`-prefixed so the file reparses
/// as a config.
pub fn fit_footer(fit: &OrderFit) -> String {
    format!(
        "# fit slope = {}\n# fit intercept = {}\n# fit r2 = {}\n",
        fmt_g17(fit.slope),
        fmt_g17(fit.intercept),
        fmt_g17(fit.r2)
    )
}

/// One named check against a target interval.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub passed: bool,
}

impl Check {
    pub fn interval(name: &str, value: f64, lo: f64, hi: f64) -> Check {
        Check {
            name: name.to_string(),
            value,
            lo,
            hi,
            passed: value.is_finite() && value >= lo && value <= hi,
        }
    }

    /// |value - target| <= tol as an interval check.
    pub fn near(name: &str, value: f64, target: f64, tol: f64) -> Check {
        Check::interval(name, value, target - tol, target + tol)
    }

    pub fn render(&self) -> String {
        format!(
            "{}: value = {} target = [{}, {}] {}\n",
            self.name,
            fmt_g17(self.value),
            fmt_g17(self.lo),
            fmt_g17(self.hi),
            status(self.passed)
        )
    }
}

pub fn status(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_reconstructs_the_exact_float() {
        for v in [0.1, 1.0 / 3.0, 6.02e23, -0.0, 5e-324, 1.25e-7] {
            let s = fmt_g17(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {s}");
        }
        assert_eq!(fmt_g17(2.0), "2.0000000000000000e0");
    }

    #[test]
    fn checks_compare_against_their_interval() {
        let ok = Check::near("slope", 1.52, 1.5, 0.1);
        assert!(ok.passed);
        assert!(ok.render().contains("PASS"));
        let bad = Check::near("slope", 1.7, 1.5, 0.1);
        assert!(!bad.passed);
        assert!(bad.render().contains("FAIL"));
        let nan = Check::interval("rate", f64::NAN, 0.0, 1.0);
        assert!(!nan.passed);
        assert!(!all_passed(&[ok, bad]));
    }

    #[test]
    fn sweep_rows_follow_the_fixed_schema() {
        let r = SweepRecord {
            axis_value: 8.0,
            error_mean: 0.5,
            error_std: 0.01,
            n_samples: 10,
            window_lo: 91,
            window_hi: 100,
        };
        let row = sweep_row(&r);
        assert_eq!(row.split(',').count(), SWEEP_COLUMNS.split(',').count());
        assert!(row.starts_with("8.0000000000000000e0,5.0000000000000000e-1"));
        assert!(row.ends_with("10,91,100"));
    }
}
