//! Straightforward scalar transcriptions of every formula, written without
//! reference to the library code, for differential testing.

#![allow(dead_code, clippy::needless_range_loop)]

pub fn mean(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in x {
        s += v;
    }
    s / x.len() as f64
}

pub fn central_moment(x: &[f64], k: i32) -> f64 {
    let m = mean(x);
    let mut s = 0.0;
    for v in x {
        s += (v - m).powi(k);
    }
    s / x.len() as f64
}

pub fn pop_std(x: &[f64]) -> f64 {
    central_moment(x, 2).sqrt()
}

pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

pub fn moments(x: &[f64]) -> Moments {
    let m2 = central_moment(x, 2);
    let m3 = central_moment(x, 3);
    let m4 = central_moment(x, 4);
    let (s, k) = if m2 == 0.0 {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };
    Moments {
        mean: mean(x),
        variance: m2,
        std: m2.sqrt(),
        skewness: s,
        excess_kurtosis: k,
    }
}

pub fn mean_excess(x: &[f64], rf: f64) -> f64 {
    let e: Vec<f64> = x.iter().map(|v| v - rf).collect();
    mean(&e)
}

pub fn sharpe(x: &[f64], rf: f64) -> f64 {
    mean_excess(x, rf) / (pop_std(x) + 1e-12)
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn prob_sharpe(x: &[f64], rf: f64, benchmark: f64) -> f64 {
    let sr = sharpe(x, rf);
    let m = moments(x);
    let raw_kurtosis = m.excess_kurtosis + 3.0;
    let radicand = 1.0 - m.skewness * sr + (raw_kurtosis - 1.0) / 4.0 * sr * sr;
    if radicand <= 0.0 {
        return 0.5;
    }
    normal_cdf((sr - benchmark) * ((x.len() - 1) as f64).sqrt() / radicand.sqrt())
}

pub fn downside_risk(x: &[f64], eps: f64) -> f64 {
    let neg: Vec<f64> = x.iter().copied().filter(|v| *v < 0.0).collect();
    let n_neg = neg.len() as f64;
    let sd_neg = if neg.len() < 2 { 0.0 } else { pop_std(&neg) };
    (sd_neg + n_neg.sqrt() * pop_std(x)) / (n_neg + eps)
}

pub fn forecast_vol(x: &[f64]) -> f64 {
    let n = x.len();
    let m = mean(x);
    let mut s = 0.0;
    for t in n / 4..n {
        s += (x[t] - m) * (x[t] - m);
    }
    (s / n as f64).sqrt()
}

/// Largest `(W_i - W_j) / W_i` over every pair `i <= j` of the wealth path,
/// with `W_0 = 1`.
pub fn max_drawdown(x: &[f64]) -> f64 {
    let mut wealth = vec![1.0];
    let mut cum = 0.0;
    for v in x {
        cum += v;
        wealth.push(f64::exp(cum));
    }
    let mut best = 0.0f64;
    for i in 0..wealth.len() {
        for j in i..wealth.len() {
            best = best.max((wealth[i] - wealth[j]) / wealth[i]);
        }
    }
    best
}

pub fn alpha_s1(x: &[f64], rf: f64, eps: f64) -> f64 {
    let sd = pop_std(x);
    mean_excess(x, rf).exp() / ((sd * sd + eps) * (sd + eps)).sqrt()
}

pub fn alpha_s2(x: &[f64], rf: f64, eps: f64) -> f64 {
    let sd = pop_std(x);
    mean_excess(x, rf).exp() / ((sd * sd + eps).sqrt() + downside_risk(x, eps) + forecast_vol(x))
}

pub fn alpha_s3(x: &[f64], rf: f64, eps: f64) -> f64 {
    let m = moments(x);
    alpha_s2(x, rf, eps) * (1.0 - m.excess_kurtosis / 12.0) * (1.0 + m.skewness / 6.0) / (1.0 + max_drawdown(x))
}

pub fn alpha_s4(x: &[f64], rf: f64, eps: f64) -> f64 {
    let regime = if mean_excess(x, rf) > 0.0 { 1.0 } else { 0.0 };
    alpha_s3(x, rf, eps) * (1.0 + 0.1 * regime)
}

/// Kendall's tau-b by visiting every pair.
pub fn kendall_brute(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let (mut conc, mut disc, mut tie_a, mut tie_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            if da == 0.0 {
                tie_a += 1;
            }
            if db == 0.0 {
                tie_b += 1;
            }
            if da != 0.0 && db != 0.0 {
                if (da > 0.0) == (db > 0.0) {
                    conc += 1;
                } else {
                    disc += 1;
                }
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    (conc - disc) as f64 / (((n0 - tie_a) as f64) * ((n0 - tie_b) as f64)).sqrt()
}

/// Column-wise returns `x[asset][t]` into the ridge covariance (divisor T-1).
pub fn covariance(x: &[Vec<f64>], lambda: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = x.len();
    let t = x[0].len();
    let mu: Vec<f64> = x.iter().map(|c| mean(c)).collect();
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..t {
                acc += (x[i][k] - mu[i]) * (x[j][k] - mu[j]);
            }
            s[i][j] = acc / (t - 1) as f64;
        }
        s[i][i] += lambda;
    }
    (mu, s)
}

/// Solves `a z = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, v)| {
            let mut r = row.clone();
            r.push(*v);
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..=n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut z = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = m[row][n];
        for k in row + 1..n {
            acc -= m[row][k] * z[k];
        }
        z[row] = acc / m[row][row];
    }
    z
}

pub struct AllocationSteps {
    pub softmax: Vec<f64>,
    pub weights: Vec<f64>,
}

/// The four allocation steps: inverse-covariance solve, clip and rescale,
/// softmax, entropy regularization and renormalization.
pub fn alphasharpe_steps(x: &[Vec<f64>], lambda: f64, eps: f64, per_asset: bool) -> AllocationSteps {
    let (mu, sigma) = covariance(x, lambda);
    let n = mu.len();
    let z = solve(&sigma, &mu);
    let r: Vec<f64> = z.iter().map(|v| if *v > 0.0 { *v } else { 0.0 }).collect();
    let spread = pop_std(&r);
    let adj: Vec<f64> = (0..n)
        .map(|i| (1.0 + spread * r[i]) / (sigma[i][i] + eps).sqrt())
        .collect();
    let top = adj.iter().copied().fold(f64::MIN, f64::max);
    let e: Vec<f64> = adj.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = e.iter().sum();
    let w: Vec<f64> = e.iter().map(|v| v / total).collect();
    let mut h = 0.0;
    for wi in &w {
        h -= wi * (wi + eps).ln();
    }
    let reg: Vec<f64> = w
        .iter()
        .map(|wi| {
            if per_asset {
                wi * (-h * wi).exp()
            } else {
                wi * (-h).exp()
            }
        })
        .collect();
    let pos: f64 = reg.iter().map(|v| v.max(0.0)).sum();
    AllocationSteps {
        softmax: w,
        weights: reg.iter().map(|v| v.max(0.0) / pos).collect(),
    }
}
