//! Log-log slope fitting for sweep results.

use anyhow::bail;

/// Result of an ordinary least-squares fit of `log(value)` against
/// `log(n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Points actually used by the fit.
    pub used: usize,
    /// Points dropped because their value was not positive.
    pub excluded: usize,
}

/// Fits `value ~ c * n^slope` by least squares in log space. Nonpositive
/// values cannot be log-transformed; they are excluded with a warning on
/// stderr. Fewer than 5 usable points is an error.
pub fn fit_loglog_slope(series: &[(usize, f64)]) -> anyhow::Result<SlopeFit> {
    let mut xs = Vec::with_capacity(series.len());
    let mut ys = Vec::with_capacity(series.len());
    let mut excluded = 0usize;
    for &(n, value) in series {
        if n == 0 || !(value > 0.0) || !value.is_finite() {
            eprintln!("warning: slope fit excludes point (N={n}, value={value}): not positive");
            excluded += 1;
            continue;
        }
        xs.push((n as f64).ln());
        ys.push(value.ln());
    }
    if xs.len() < 5 {
        bail!(
            "slope fit needs at least 5 positive points; got {} usable of {}",
            xs.len(),
            series.len()
        );
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        bail!("slope fit needs at least two distinct N values");
    }
    let slope = sxy / sxx;
    Ok(SlopeFit { slope, intercept: mean_y - slope * mean_x, used: xs.len(), excluded })
}
