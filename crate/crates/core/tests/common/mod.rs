//! Independent reference implementations shared by the test targets.

/// Brute force: sort each window, take its lower-middle element, then the
/// same for absolute deviations; replace in a second pass.
pub fn hampel_oracle(x: &[f64], window: usize, nsig: f64) -> Vec<f64> {
    let half = window / 2;
    let lower_mid = |mut v: Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[(v.len() - 1) / 2]
    };
    let n = x.len();
    let mut outlier = vec![false; n];
    let mut med = vec![0.0; n];
    for p in 0..n {
        let lo = p.saturating_sub(half);
        let hi = (p + half).min(n - 1);
        let win: Vec<f64> = x[lo..=hi].to_vec();
        let mu = lower_mid(win.clone());
        let mad = lower_mid(win.iter().map(|v| (v - mu).abs()).collect());
        med[p] = mu;
        outlier[p] = (x[p] - mu).abs() > nsig * mad;
    }
    let mut out = x.to_vec();
    let mut last = None;
    for p in 0..n {
        if outlier[p] {
            out[p] = last.unwrap_or(med[p]);
        } else {
            last = Some(x[p]);
        }
    }
    out
}

/// Full-window SSIM written directly from the definition, without
/// separable filtering.
pub fn reference_ssim(x: &[f64], y: &[f64], h: usize, w: usize) -> f64 {
    let mut win = [[0.0; 11]; 11];
    let mut total = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut acc = 0.0;
    let mut count = 0;
    for r0 in 0..=h - 11 {
        for q0 in 0..=w - 11 {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let k = win[i][j] / total;
                    let a = x[(r0 + i) * w + q0 + j];
                    let b = y[(r0 + i) * w + q0 + j];
                    mx += k * a;
                    my += k * b;
                    sxx += k * a * a;
                    syy += k * b * b;
                    sxy += k * a * b;
                }
            }
            let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
            acc += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    acc / count as f64
}
