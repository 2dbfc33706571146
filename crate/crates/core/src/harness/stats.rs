use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Mean and 95% confidence half-width of one quantity at one time bucket,
/// aggregated over episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSummary {
    /// Bucket label, usually the time in seconds.
    pub t: f64,
    pub mean: f64,
    /// Half-width of the Student-t 95% interval; 0 when only one sample
    /// exists or the samples agree exactly.
    pub ci95: f64,
    pub count: usize,
}

/// Student-t 95% interval over independent per-episode samples.
pub fn t_interval(label: f64, values: &[f64]) -> ConfidenceSummary {
    assert!(!values.is_empty(), "confidence interval of nothing");
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return ConfidenceSummary {
            t: label,
            mean,
            ci95: 0.0,
            count: 1,
        };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let ci95 = if sd == 0.0 {
        0.0
    } else {
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid dof");
        dist.inverse_cdf(0.975) * sd / (n as f64).sqrt()
    };
    ConfidenceSummary {
        t: label,
        mean,
        ci95,
        count: n,
    }
}
