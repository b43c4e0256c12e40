//! Inequality-check rows shared by the verification routines.

use std::fmt::Write;

/// One `lhs <= rhs` check under the 3 standard error policy.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub check: String,
    pub lhs: f64,
    pub rhs: f64,
    pub se: f64,
    pub pass: bool,
}

impl CheckRow {
    /// Passes iff lhs <= rhs + 3 se.
    pub fn le(check: impl Into<String>, lhs: f64, rhs: f64, se: f64) -> Self {
        CheckRow { check: check.into(), lhs, rhs, se, pass: lhs <= rhs + 3.0 * se }
    }

    /// Passes iff |lhs - rhs| <= max(3 se, floor).
    pub fn close(check: impl Into<String>, lhs: f64, rhs: f64, se: f64, floor: f64) -> Self {
        CheckRow { check: check.into(), lhs, rhs, se, pass: (lhs - rhs).abs() <= (3.0 * se).max(floor) }
    }

    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

pub const CHECK_CSV_HEADER: &str = "check,lhs,rhs,margin,se,pass";

pub fn checks_to_csv(rows: &[CheckRow]) -> String {
    let mut s = String::from(CHECK_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{:?},{:?},{:?},{:?},{}", r.check, r.lhs, r.rhs, r.margin(), r.se, r.pass);
    }
    s
}
