/// Central-difference gradient `(f(theta + eps e_i) - f(theta - eps e_i)) / (2 eps)`.
pub fn finite_difference_gradient(mut f: impl FnMut(&[f64]) -> f64, theta: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            probe[i] = theta[i] + eps;
            let up = f(&probe);
            probe[i] = theta[i] - eps;
            let down = f(&probe);
            probe[i] = theta[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Central difference along the single coordinate `i`.
pub fn finite_difference_coordinate(mut f: impl FnMut(&[f64]) -> f64, theta: &[f64], i: usize, eps: f64) -> f64 {
    let mut probe = theta.to_vec();
    probe[i] = theta[i] + eps;
    let up = f(&probe);
    probe[i] = theta[i] - eps;
    let down = f(&probe);
    (up - down) / (2.0 * eps)
}

/// Five-point central difference along coordinate `i`, accurate to `O(eps^4)`.
/// Preferred when some derivatives are small relative to `f`, where the
/// two-point rule's rounding error would dominate.
pub fn five_point_coordinate(mut f: impl FnMut(&[f64]) -> f64, theta: &[f64], i: usize, eps: f64) -> f64 {
    let mut probe = theta.to_vec();
    let mut at = |k: f64| {
        probe[i] = theta[i] + k * eps;
        f(&probe)
    };
    (8.0 * (at(1.0) - at(-1.0)) - (at(2.0) - at(-2.0))) / (12.0 * eps)
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
