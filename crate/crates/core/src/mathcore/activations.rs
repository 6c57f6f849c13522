/// ln(1 + e^x), computed as max(x, 0) + ln(1 + e^-|x|) so it neither
/// overflows for large x nor loses the tail for very negative x.
#[inline]
pub fn softplus_scalar(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| softplus_scalar(v)).collect()
}

pub fn sigmoid(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| sigmoid_scalar(v)).collect()
}

pub fn tanh(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.tanh()).collect()
}

/// Max-subtracted softmax; the output sums to 1 and is invariant under
/// adding a constant to every input.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_values() {
        assert!((softplus_scalar(0.0) - 2.0f64.ln()).abs() < 1e-12);
        // Saturation: softplus(1000) = 1000 within 1e-9.
        assert!((softplus_scalar(1000.0) - 1000.0).abs() < 1e-9);
        // ln(1 + e^-1), evaluated directly.
        assert!((softplus_scalar(-1.0) - 0.31326168751822286).abs() < 1e-12);
        assert!(softplus_scalar(-1e6).is_finite());
        assert!(softplus_scalar(1e6).is_finite());
        assert!(softplus_scalar(-50.0) > 0.0);
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert!(sigmoid_scalar(-800.0) >= 0.0);
        assert!(sigmoid_scalar(800.0) <= 1.0);
        let s = sigmoid(&[-2.0, 0.0, 2.0]);
        assert!((s[0] + s[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_uniform_and_stability() {
        let p = softmax(&[0.0, 0.0, 0.0, 0.0]);
        for v in &p {
            assert!((v - 0.25).abs() < 1e-12);
        }
        let p = softmax(&[100.0, 0.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!(p[0] > 1.0 - 1e-9);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn softmax_shift_invariant() {
        let x = [0.3, -1.2, 4.0, 0.0];
        let shifted: Vec<f64> = x.iter().map(|v| v + 17.5).collect();
        for (a, b) in softmax(&x).iter().zip(softmax(&shifted)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
