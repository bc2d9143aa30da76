//! Rejection-rate tables and their CSV/JSON serialization.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::Result;
use crate::reltest::normal_quantile;

/// Method labels appearing in result tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TestMethod {
    #[serde(rename = "LKSD-V")]
    LksdV,
    #[serde(rename = "LKSD-U")]
    LksdU,
    #[serde(rename = "KSD-exact")]
    KsdExact,
}

impl TestMethod {
    pub fn label(&self) -> &'static str {
        match self {
            TestMethod::LksdV => "LKSD-V",
            TestMethod::LksdU => "LKSD-U",
            TestMethod::KsdExact => "KSD-exact",
        }
    }

    /// Sort key fixing the row order inside one (n, alpha) block.
    fn order(&self) -> u8 {
        match self {
            TestMethod::LksdU => 0,
            TestMethod::LksdV => 1,
            TestMethod::KsdExact => 2,
        }
    }
}

/// 95% Wilson score interval for a binomial rate.
pub fn wilson_ci(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = normal_quantile(0.975).expect("fixed quantile");
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// One table row: rejection rate for a (sample size, level, method) cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RejectionRow {
    pub n: usize,
    pub alpha: f64,
    pub method: TestMethod,
    pub rejection_rate: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub trials: usize,
    pub rejects: usize,
    /// Trials whose variance estimate degenerated (never rejected).
    pub degenerate: usize,
}

impl RejectionRow {
    pub fn from_counts(
        n: usize,
        alpha: f64,
        method: TestMethod,
        rejects: usize,
        degenerate: usize,
        trials: usize,
    ) -> Self {
        let (lo, hi) = wilson_ci(rejects, trials);
        Self {
            n,
            alpha,
            method,
            rejection_rate: rejects as f64 / trials.max(1) as f64,
            wilson_lo: lo,
            wilson_hi: hi,
            trials,
            rejects,
            degenerate,
        }
    }
}

/// A trial that aborted, with enough detail to re-run it in isolation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialFailure {
    pub n: usize,
    pub trial: usize,
    pub data_seed: u64,
    pub message: String,
}

/// Aggregated results of one experiment run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RejectionTable {
    pub schema_version: u32,
    pub rows: Vec<RejectionRow>,
    pub aborted_trials: Vec<TrialFailure>,
}

impl RejectionTable {
    pub fn new(mut rows: Vec<RejectionRow>, aborted_trials: Vec<TrialFailure>) -> Self {
        rows.sort_by(|a, b| {
            (a.n, a.method.order())
                .cmp(&(b.n, b.method.order()))
                .then(a.alpha.partial_cmp(&b.alpha).expect("finite alpha"))
        });
        Self {
            schema_version: crate::SCHEMA_VERSION,
            rows,
            aborted_trials,
        }
    }

    pub fn rate(&self, n: usize, alpha: f64, method: TestMethod) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.n == n && r.method == method && (r.alpha - alpha).abs() < 1e-12)
            .map(|r| r.rejection_rate)
    }

    pub fn degenerate_fraction(&self, n: usize, alpha: f64, method: TestMethod) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.n == n && r.method == method && (r.alpha - alpha).abs() < 1e-12)
            .map(|r| r.degenerate as f64 / r.trials.max(1) as f64)
    }

    /// Pinned CSV layout: `n,alpha,method,rate,ci_lo,ci_hi,trials`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,alpha,method,rate,ci_lo,ci_hi,trials")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{:.6},{:.6},{:.6},{}",
                r.n,
                r.alpha,
                r.method.label(),
                r.rejection_rate,
                r.wilson_lo,
                r.wilson_hi,
                r.trials
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_brackets_rate() {
        for (s, t) in [(0usize, 100usize), (3, 100), (50, 100), (100, 100)] {
            let (lo, hi) = wilson_ci(s, t);
            let p = s as f64 / t as f64;
            assert!(lo <= p + 1e-12 && p <= hi + 1e-12, "({s},{t}) -> [{lo},{hi}]");
            assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        }
    }

    #[test]
    fn wilson_hand_value() {
        // 3/100 at 95%: standard Wilson interval ≈ (0.0103, 0.0850)
        let (lo, hi) = wilson_ci(3, 100);
        assert!((lo - 0.0103).abs() < 3e-3, "lo {lo}");
        assert!((hi - 0.0850).abs() < 3e-3, "hi {hi}");
    }

    #[test]
    fn csv_layout_is_stable() {
        let rows = vec![
            RejectionRow::from_counts(200, 0.05, TestMethod::LksdV, 1, 0, 100),
            RejectionRow::from_counts(100, 0.05, TestMethod::KsdExact, 0, 0, 100),
            RejectionRow::from_counts(100, 0.05, TestMethod::LksdU, 7, 2, 100),
        ];
        let table = RejectionTable::new(rows, vec![]);
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "n,alpha,method,rate,ci_lo,ci_hi,trials");
        assert!(lines[1].starts_with("100,0.05,LKSD-U,0.070000,"));
        assert!(lines[2].starts_with("100,0.05,KSD-exact,0.000000,"));
        assert!(lines[3].starts_with("200,0.05,LKSD-V,0.010000,"));
        assert!(lines.iter().all(|l| l.split(',').count() == 7));
    }

    #[test]
    fn rate_lookup() {
        let table = RejectionTable::new(
            vec![RejectionRow::from_counts(
                100,
                0.05,
                TestMethod::LksdV,
                25,
                0,
                100,
            )],
            vec![],
        );
        assert_eq!(table.rate(100, 0.05, TestMethod::LksdV), Some(0.25));
        assert_eq!(table.rate(100, 0.01, TestMethod::LksdV), None);
    }
}
