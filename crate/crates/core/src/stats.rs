//! Monte Carlo summaries, regressions and Kolmogorov–Smirnov distances.

/// A sample estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Sample mean and its standard error.
pub fn mean_stderr(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate {
            value: f64::NAN,
            stderr: f64::NAN,
            n,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Estimate { value: mean, stderr, n }
}

/// Least-squares line `y ≈ intercept + slope x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len(), "regression needs paired data");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_stderr = if x.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    LinearFit {
        slope,
        intercept,
        slope_stderr,
    }
}

/// Slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> LinearFit {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

/// One-sample Kolmogorov–Smirnov distance of `samples` from `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// 5%-level asymptotic critical value `1.36/√n` of the KS distance.
pub fn ks_mc_bound(n: usize) -> f64 {
    1.36 / (n as f64).sqrt()
}

/// Cumulative distribution of a density sampled on a uniform periodic grid
/// `x_j = x_0 + j h`; the mass of each cell is spread uniformly over
/// `[x_j - h/2, x_j + h/2)`.
#[derive(Clone, Debug)]
pub struct GridCdf {
    x0: f64,
    h: f64,
    cumulative: Vec<f64>,
}

impl GridCdf {
    pub fn new(x0: f64, h: f64, density: &[f64]) -> Self {
        let mut cumulative = Vec::with_capacity(density.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for d in density {
            acc += d * h;
            cumulative.push(acc);
        }
        Self { x0, h, cumulative }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let u = (x - self.x0) / self.h + 0.5;
        if u <= 0.0 {
            return 0.0;
        }
        let last = self.cumulative.len() - 1;
        if u >= last as f64 {
            return self.cumulative[last];
        }
        let i = u.floor() as usize;
        let frac = u - i as f64;
        self.cumulative[i] + frac * (self.cumulative[i + 1] - self.cumulative[i])
    }
}

/// Wraps `x` into `[-l, l)`.
pub fn wrap(x: f64, l: f64) -> f64 {
    (x + l).rem_euclid(2.0 * l) - l
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn regression_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let fit = linear_fit(&x, &y);
        assert_relative_eq!(fit.slope, -0.5, epsilon = 1e-14);
        assert_relative_eq!(fit.intercept, 2.0, epsilon = 1e-14);
        let fit = log_log_slope(&[1.0, 2.0, 4.0], &[3.0, 12.0, 48.0]);
        assert_relative_eq!(fit.slope, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn ks_of_uniform_grid() {
        let samples: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_distance(&samples, |x| x.clamp(0.0, 1.0)) <= 0.0005 + 1e-12);
        let cdf = GridCdf::new(0.05, 0.1, &[1.0; 10]);
        assert_relative_eq!(cdf.cdf(0.37), 0.37, epsilon = 1e-12);
        assert_eq!(cdf.cdf(-1.0), 0.0);
    }

    #[test]
    fn summaries() {
        let e = mean_stderr(&[1.0, 2.0, 3.0]);
        assert_eq!(e.value, 2.0);
        assert_relative_eq!(e.stderr, (1.0f64 / 3.0).sqrt(), epsilon = 1e-14);
        assert_relative_eq!(wrap(3.5, 2.0), -0.5, epsilon = 1e-15);
    }
}
