//! ARIMA(p, 1, 0) fitted by conditional least squares.

/// Relative ridge term keeping the normal equations solvable when the
/// lagged differences are collinear.
const RIDGE: f64 = 1e-10;
const FLAT: f64 = 1e-12;

pub fn difference(y: &[f64]) -> Vec<f64> {
    y.windows(2).map(|w| w[1] - w[0]).collect()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// True when every element equals the mean up to rounding.
pub fn is_flat(v: &[f64]) -> bool {
    let m = mean(v);
    let scale = v.iter().fold(1.0_f64, |a, x| a.max(x.abs()));
    v.iter().all(|x| (x - m).abs() <= FLAT * scale)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let (upper, lower) = a.split_at_mut(col + 1);
        let pivot_row = &upper[col];
        for (i, r) in lower.iter_mut().enumerate() {
            let f = r[col] / pivot_row[col];
            for (x, p) in r[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            b[col + 1 + i] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Least-squares AR(p) coefficients (no intercept) for a differenced
/// series. Coefficient `i` multiplies lag `i + 1`.
pub fn fit_ar(d: &[f64], p: usize) -> Option<Vec<f64>> {
    if p == 0 || d.len() <= p {
        return None;
    }
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for t in p..d.len() {
        for i in 0..p {
            let xi = d[t - 1 - i];
            xty[i] += xi * d[t];
            for j in 0..p {
                xtx[i][j] += xi * d[t - 1 - j];
            }
        }
    }
    let trace: f64 = (0..p).map(|i| xtx[i][i]).sum();
    let lambda = RIDGE * (trace / p as f64).max(f64::MIN_POSITIVE);
    for (i, row) in xtx.iter_mut().enumerate() {
        row[i] += lambda;
    }
    solve(xtx, xty)
}

/// How a forecast was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Fitted,
    /// Differences were constant: last value plus the mean step.
    Degenerate,
    /// History too short: last value repeated.
    Fallback,
}

/// Forecast `horizon` values after `y` with an ARIMA(p,1,0) model.
pub fn forecast(y: &[f64], p: usize, horizon: usize, min_points: usize) -> (Vec<f64>, Method) {
    let last = y.last().copied().unwrap_or(0.0);
    if y.len() < min_points.max(2) {
        return (vec![last; horizon], Method::Fallback);
    }
    let d = difference(y);
    let step = mean(&d);
    let degenerate = |step: f64| {
        (
            (1..=horizon).map(|h| last + h as f64 * step).collect(),
            Method::Degenerate,
        )
    };
    if is_flat(&d) {
        return degenerate(step);
    }
    let Some(phi) = fit_ar(&d, p) else {
        return degenerate(step);
    };
    let mut lags: Vec<f64> = d.iter().rev().take(p).copied().collect();
    lags.resize(p, 0.0);
    let mut level = last;
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let next: f64 = phi.iter().zip(&lags).map(|(a, b)| a * b).sum();
        level += next;
        out.push(level);
        lags.rotate_right(1);
        lags[0] = next;
    }
    if out.iter().all(|v| v.is_finite()) {
        (out, Method::Fitted)
    } else {
        degenerate(step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differencing() {
        assert_eq!(difference(&[1.0, 4.0, 2.0]), vec![3.0, -2.0]);
        assert!(difference(&[1.0]).is_empty());
    }

    #[test]
    fn solves_small_systems() {
        let x = solve(vec![vec![2.0, 1.0], vec![1.0, 3.0]], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
        assert!(solve(vec![vec![0.0]], vec![1.0]).is_none());
    }

    #[test]
    fn recovers_ar1_coefficient() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut d = vec![1.0];
        for _ in 0..2000 {
            let prev = *d.last().unwrap();
            d.push(0.5 * prev + rng.gen_range(-1.0..1.0));
        }
        let phi = fit_ar(&d, 1).unwrap();
        assert!((phi[0] - 0.5).abs() < 0.05, "{phi:?}");
    }

    #[test]
    fn periodic_differences_are_continued_exactly() {
        // Period six: an AR(5) on the differences fits without error.
        let cycle = [10.0, 30.0, 25.0, 60.0, 40.0, 15.0];
        let y: Vec<f64> = cycle.iter().cycle().take(18).copied().collect();
        let (f, m) = forecast(&y, 5, 6, 7);
        assert_eq!(m, Method::Fitted);
        for (a, b) in f.iter().zip(cycle.iter()) {
            assert!((a - b).abs() < 1e-6, "{f:?}");
        }
    }
}
