//! Series statistics for Monte Carlo output: autocorrelation-aware errors
//! and the affine extrapolation fit.

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1) as f64
}

/// Integrated autocorrelation time by Geyer's initial-positive-sequence rule:
/// sum paired autocovariances `Gamma_k = gamma_{2k} + gamma_{2k+1}` while they
/// stay positive.
pub fn integrated_autocorr_time(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 8 {
        return 1.0;
    }
    let mu = mean(xs);
    let centered: Vec<f64> = xs.iter().map(|x| x - mu).collect();
    let c0: f64 = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return 1.0;
    }
    let max_lag = (n / 3).min(2000);
    let gamma = |lag: usize| -> f64 {
        let mut s = 0.0;
        for i in 0..n - lag {
            s += centered[i] * centered[i + lag];
        }
        s / n as f64 / c0
    };
    let mut tau = 1.0; // gamma_0 = 1
    let mut k = 1;
    while 2 * k + 1 <= max_lag {
        let pair = gamma(2 * k - 1) + gamma(2 * k);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 1;
    }
    tau.max(1.0)
}

/// Effective sample size from the integrated autocorrelation time.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let tau = integrated_autocorr_time(xs);
    (xs.len() as f64 / tau).min(xs.len() as f64)
}

/// Mean with an autocorrelation-corrected standard error.
pub fn mean_with_error(xs: &[f64]) -> (f64, f64) {
    let mu = mean(xs);
    let ess = effective_sample_size(xs).max(1.0);
    (mu, (variance(xs) / ess).sqrt())
}

/// Weighted least squares for `y = intercept + slope * x`.
///
/// Returns the intercept, its standard error (statistical propagation plus a
/// residual-based model term added in quadrature), the slope, and the RMS
/// residual. Points with zero reported error get the smallest positive error
/// present (or unit weights when none do).
pub struct AffineFit {
    pub intercept: f64,
    pub intercept_se: f64,
    pub slope: f64,
    pub rms_residual: f64,
}

pub fn affine_fit(xs: &[f64], ys: &[f64], ses: &[f64]) -> AffineFit {
    assert!(xs.len() == ys.len() && ys.len() == ses.len());
    assert!(xs.len() >= 2);
    let floor = ses
        .iter()
        .copied()
        .filter(|s| *s > 0.0)
        .fold(f64::INFINITY, f64::min);
    let all_exact = !floor.is_finite();
    let floor = if floor.is_finite() { floor } else { 1.0 };
    let w: Vec<f64> = ses.iter().map(|s| 1.0 / s.max(floor).powi(2)).collect();

    let sw: f64 = w.iter().sum();
    let swx: f64 = w.iter().zip(xs).map(|(w, x)| w * x).sum();
    let swy: f64 = w.iter().zip(ys).map(|(w, y)| w * y).sum();
    let swxx: f64 = w.iter().zip(xs).map(|(w, x)| w * x * x).sum();
    let swxy: f64 = w
        .iter()
        .zip(xs.iter().zip(ys))
        .map(|(w, (x, y))| w * x * y)
        .sum();
    let det = sw * swxx - swx * swx;
    let slope = (sw * swxy - swx * swy) / det;
    let intercept = (swxx * swy - swx * swxy) / det;

    // statistical variance of the intercept under the reported errors;
    // exact inputs contribute no statistical term
    let var_stat = if all_exact { 0.0 } else { swxx / det };

    let n = xs.len() as f64;
    let mut ss_res = 0.0;
    for ((x, y), _) in xs.iter().zip(ys).zip(&w) {
        let r = y - intercept - slope * x;
        ss_res += r * r;
    }
    let rms_residual = (ss_res / n).sqrt();
    // model-error term: residual scatter projected onto the intercept, with
    // the usual (1/n + xbar^2/Sxx) leverage factor
    let xbar: f64 = xs.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let dof = (n - 2.0).max(1.0);
    let var_model = ss_res / dof * (1.0 / n + xbar * xbar / sxx);

    AffineFit {
        intercept,
        intercept_se: (var_stat + var_model).sqrt(),
        slope,
        rms_residual,
    }
}
