//! Small numeric helpers shared across modules.

use statrs::function::erf::erfc;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Centre and scale to unit sample standard deviation.
///
/// Returns `None` when the values have zero spread.
pub fn standardize(xs: &[f64]) -> Option<(Vec<f64>, f64, f64)> {
    let m = mean(xs);
    let sd = sample_sd(xs);
    if !(sd > 0.0) || !sd.is_finite() {
        return None;
    }
    Some((xs.iter().map(|x| (x - m) / sd).collect(), m, sd))
}

/// Linear-interpolation quantile (the "type 7" rule used by numpy and R).
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!(!xs.is_empty(), "quantile of empty slice");
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `sigmoid(a) - sigmoid(b)` evaluated without cancellation; the sign is
/// exactly the sign of `a - b`.
pub fn sigmoid_diff(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if (a - b).abs() >= 1.0 {
        // no cancellation; subtract on the unsaturated tail
        return if a + b > 0.0 {
            sigmoid(-b) - sigmoid(-a)
        } else {
            sigmoid(a) - sigmoid(b)
        };
    }
    // sigma(a) - sigma(b) = sigma(a) * sigma(-b) * (1 - exp(b - a))
    let sa = sigmoid(a);
    let snb = sigmoid(-b);
    -sa * snb * (b - a).exp_m1()
}

/// Two-sided p-value of a standard-normal statistic.
pub fn two_sided_p(z: f64) -> f64 {
    if !z.is_finite() {
        return 0.0;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}
