//! Shared oracles for the acceptance tests. These stay independent of the
//! library's estimation path: the heat kernel comes from the spectral
//! series, not from bridge sampling.

/// Heat kernel of Brownian motion on the unit sphere at angle `theta`,
/// as the Legendre series
///     sum_l (2l + 1) exp(-l (l + 1) t / 2) P_l(cos theta) / (4 pi),
/// truncated at l = 50 (terms decay like exp(-l^2 t / 2)).
pub fn sphere_heat_kernel(t: f64, cos_theta: f64) -> f64 {
    let mut p_prev = 1.0f64;
    let mut p_curr = cos_theta;
    let mut sum = 1.0 + 3.0 * (-t).exp() * cos_theta;
    for l in 2..=50u32 {
        let lf = l as f64;
        let p_next = ((2.0 * lf - 1.0) * cos_theta * p_curr - (lf - 1.0) * p_prev) / lf;
        sum += (2.0 * lf + 1.0) * (-lf * (lf + 1.0) * t / 2.0).exp() * p_next;
        p_prev = p_curr;
        p_curr = p_next;
    }
    sum / (4.0 * std::f64::consts::PI)
}

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var)
}

#[allow(dead_code)]
pub fn report(name: &str, passed: bool, detail: &str) {
    println!("{}: {} [{}]", name, if passed { "PASS" } else { "FAIL" }, detail);
}
