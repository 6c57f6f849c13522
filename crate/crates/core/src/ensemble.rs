//! Entropy-weighted combination of prediction distributions.
//!
//! Each model's distribution is raised to a weight derived from its own
//! uncertainty: w = H_rel(p)^(-b), with H_rel the Shannon entropy relative
//! to the uniform distribution over the alphabet. The weighted product is
//! renormalized, so confident (low-entropy) models dominate the mix.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct WeightedCombineConfig {
    /// Non-linear scaling of the certainty weight.
    pub bias: f64,
    /// Lower clamp on the relative entropy; the weight diverges at zero
    /// entropy otherwise.
    pub entropy_floor: f64,
}

impl Default for WeightedCombineConfig {
    fn default() -> Self {
        WeightedCombineConfig {
            bias: 0.5,
            entropy_floor: 1e-6,
        }
    }
}

/// Shannon entropy in bits, with 0 log 0 = 0.
pub fn shannon_entropy(p: &[f64]) -> Result<f64> {
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "distribution sums to {}, expected 1",
            sum
        )));
    }
    if p.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument(
            "distribution has negative entries".into(),
        ));
    }
    Ok(p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.log2())
        .sum())
}

/// Entropy relative to the uniform distribution over the alphabet, in
/// [entropy_floor, 1].
pub fn relative_entropy(p: &[f64], config: &WeightedCombineConfig) -> Result<f64> {
    if p.len() < 2 {
        return Err(Error::InvalidArgument(
            "relative entropy needs an alphabet of at least 2".into(),
        ));
    }
    let h = shannon_entropy(p)?;
    let h_max = (p.len() as f64).log2();
    Ok((h / h_max).max(config.entropy_floor))
}

/// Entropy-weighted geometric mean: p(a) proportional to
/// prod_m p_m(a)^(w_m / sum w) with w_m = H_rel(p_m)^(-bias). The
/// exponents are normalized to sum to one, which makes the combination a
/// true weighted geometric mean: combining copies of one distribution
/// returns it, and bias 0 reduces to the plain normalized geometric mean.
/// Computed in log space; zero probabilities are clamped at 1e-12 so one
/// model cannot veto an outcome outright.
pub fn combine(dists: &[Vec<f64>], config: &WeightedCombineConfig) -> Result<Vec<f64>> {
    if dists.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let alphabet = dists[0].len();
    for d in dists {
        if d.len() != alphabet {
            return Err(Error::ShapeMismatch(format!(
                "distribution over {} symbols, expected {}",
                d.len(),
                alphabet
            )));
        }
    }
    let raw: Vec<f64> = dists
        .iter()
        .map(|d| relative_entropy(d, config).map(|h| h.powf(-config.bias)))
        .collect::<Result<_>>()?;
    let total: f64 = raw.iter().sum();

    let mut log_p = vec![0.0; alphabet];
    for (d, &w) in dists.iter().zip(&raw) {
        let e = w / total;
        for (acc, &v) in log_p.iter_mut().zip(d) {
            *acc += e * v.max(1e-12).log2();
        }
    }
    let max = log_p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = log_p.iter().map(|&l| (l - max).exp2()).collect();
    let sum: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= sum;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> WeightedCombineConfig {
        WeightedCombineConfig::default()
    }

    #[test]
    fn entropy_values() {
        assert_eq!(shannon_entropy(&[0.25; 4]).unwrap(), 2.0);
        assert_eq!(shannon_entropy(&[1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!((shannon_entropy(&[0.5, 0.25, 0.25]).unwrap() - 1.5).abs() < 1e-12);
        assert!(shannon_entropy(&[0.9, 0.3]).is_err());
    }

    #[test]
    fn relative_entropy_values() {
        assert!((relative_entropy(&[0.25; 4], &cfg()).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(relative_entropy(&[1.0, 0.0], &cfg()).unwrap(), 1e-6);
        assert!((relative_entropy(&[0.5, 0.25, 0.25, 0.0], &cfg()).unwrap() - 0.75).abs() < 1e-12);
        assert!(relative_entropy(&[1.0], &cfg()).is_err());
    }

    #[test]
    fn combine_idempotent_and_uniform() {
        let d = vec![0.7, 0.1, 0.2];
        let out = combine(&[d.clone(), d.clone()], &cfg()).unwrap();
        for (a, b) in out.iter().zip(&d) {
            assert!((a - b).abs() < 1e-9);
        }
        let u = vec![0.25; 4];
        let out = combine(&[u.clone(), u.clone()], &cfg()).unwrap();
        for v in out {
            assert!((v - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn combine_worked_example() {
        // Independent evaluation: w1 = H([0.8,0.2])^-0.5 = 0.721928^-0.5 =
        // 1.176936, w2 = 1; normalized exponents 0.540639 / 0.459361;
        // output proportional to [0.8^e1 * 0.5^e2, 0.2^e1 * 0.5^e2].
        let out = combine(&[vec![0.8, 0.2], vec![0.5, 0.5]], &cfg()).unwrap();
        assert!((out[0] - 0.679066390288999).abs() < 1e-6, "got {}", out[0]);
        assert!((out[1] - 0.320933609711001).abs() < 1e-6);
    }

    #[test]
    fn combine_alphabet_mismatch_rejected() {
        assert!(combine(&[vec![0.5, 0.5], vec![0.25; 4]], &cfg()).is_err());
    }

    #[test]
    fn bias_zero_is_plain_geometric_mean() {
        let cfg0 = WeightedCombineConfig {
            bias: 0.0,
            ..cfg()
        };
        let a = vec![0.6, 0.3, 0.1];
        let b = vec![0.2, 0.5, 0.3];
        let out = combine(&[a.clone(), b.clone()], &cfg0).unwrap();
        // Plain normalized geometric mean: sqrt of the product.
        let mut geo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x * y).sqrt()).collect();
        let s: f64 = geo.iter().sum();
        geo.iter_mut().for_each(|v| *v /= s);
        for (x, y) in out.iter().zip(&geo) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn low_entropy_model_dominates_argmax() {
        let confident = vec![1e-6, 1.0 - 2e-6, 1e-6];
        let contrary = vec![0.55, 0.05, 0.4];
        let out = combine(&[confident, contrary], &cfg()).unwrap();
        let argmax = out
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 1);
    }
}
