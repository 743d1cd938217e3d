//! Aspect-ratio grouping: two-component 1-D Gaussian mixture fitted by EM,
//! with a fixed-threshold bypass and a single-group fallback signal.

use serde::{Deserialize, Serialize};

use super::ShapeModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitSource {
    /// Threshold from the equal-posterior point of a fitted mixture.
    Em,
    /// Configured fixed threshold; EM bypassed.
    Fixed,
}

/// Two-group split of the training population by aspect ratio.
///
/// Group 0 holds ratios at or below the threshold, group 1 those above.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSplit {
    pub threshold: f64,
    pub assignments: Vec<u32>,
    pub source: SplitSource,
}

impl GroupSplit {
    pub fn group_of(&self, aspect_ratio: f64) -> u32 {
        u32::from(aspect_ratio > self.threshold)
    }
}

/// Splits with a configured threshold (no EM).
pub fn fixed_threshold_split(ratios: &[f64], threshold: f64) -> GroupSplit {
    GroupSplit {
        threshold,
        assignments: ratios.iter().map(|&r| u32::from(r > threshold)).collect(),
        source: SplitSource::Fixed,
    }
}

/// Fits a two-component Gaussian mixture to the aspect ratios by EM and
/// thresholds at the equal-posterior point between the component means.
///
/// Initialization is deterministic (quartiles), so the result depends only
/// on the data; the seed is accepted for interface stability. Identical
/// ratios (or collapsed components) signal the single-group fallback via
/// [`Error::DegenerateSplit`].
pub fn cluster_aspect_ratios(ratios: &[f64], _seed: u64) -> Result<GroupSplit> {
    if ratios.len() < 4 {
        return Err(Error::Data(format!(
            "need at least 4 aspect ratios, got {}",
            ratios.len()
        )));
    }
    if ratios.iter().any(|r| !r.is_finite() || *r <= 0.0) {
        return Err(Error::Data("aspect ratios must be positive and finite".into()));
    }
    let mut sorted = ratios.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite ratios"));
    let spread = sorted[sorted.len() - 1] - sorted[0];
    if spread <= 0.0 {
        return Err(Error::DegenerateSplit("all aspect ratios identical".into()));
    }

    let n = ratios.len();
    let quantile = |q: f64| sorted[((n - 1) as f64 * q).round() as usize];
    let global_mean = ratios.iter().sum::<f64>() / n as f64;
    let global_var = ratios
        .iter()
        .map(|r| (r - global_mean).powi(2))
        .sum::<f64>()
        / n as f64;

    let mut mu = [quantile(0.25), quantile(0.75)];
    let mut var = [global_var.max(1e-12); 2];
    let mut w = [0.5, 0.5];

    let mut resp = vec![0.0f64; n];
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..500 {
        // E step: responsibility of component 1.
        let mut ll = 0.0;
        for (i, &r) in ratios.iter().enumerate() {
            let p0 = w[0] * gaussian(r, mu[0], var[0]);
            let p1 = w[1] * gaussian(r, mu[1], var[1]);
            let total = p0 + p1;
            if total <= 0.0 || !total.is_finite() {
                return Err(Error::Numeric("mixture likelihood underflow".into()));
            }
            resp[i] = p1 / total;
            ll += total.ln();
        }
        // M step.
        let n1: f64 = resp.iter().sum();
        let n0 = n as f64 - n1;
        if n0 < 1e-9 || n1 < 1e-9 {
            return Err(Error::DegenerateSplit("a mixture component collapsed".into()));
        }
        mu[0] = ratios
            .iter()
            .zip(&resp)
            .map(|(r, g)| r * (1.0 - g))
            .sum::<f64>()
            / n0;
        mu[1] = ratios.iter().zip(&resp).map(|(r, g)| r * g).sum::<f64>() / n1;
        var[0] = (ratios
            .iter()
            .zip(&resp)
            .map(|(r, g)| (1.0 - g) * (r - mu[0]).powi(2))
            .sum::<f64>()
            / n0)
            .max(1e-12);
        var[1] = (ratios
            .iter()
            .zip(&resp)
            .map(|(r, g)| g * (r - mu[1]).powi(2))
            .sum::<f64>()
            / n1)
            .max(1e-12);
        w[0] = n0 / n as f64;
        w[1] = n1 / n as f64;

        if (ll - prev_ll).abs() < 1e-12 {
            break;
        }
        prev_ll = ll;
    }

    // Order components so component 0 has the lower mean.
    if mu[0] > mu[1] {
        mu.swap(0, 1);
        var.swap(0, 1);
        w.swap(0, 1);
    }
    if mu[1] - mu[0] < 1e-9 {
        return Err(Error::DegenerateSplit("mixture means coincide".into()));
    }

    let threshold = equal_posterior_point(mu, var, w)?;
    Ok(GroupSplit {
        threshold,
        assignments: ratios.iter().map(|&r| u32::from(r > threshold)).collect(),
        source: SplitSource::Em,
    })
}

fn gaussian(x: f64, mu: f64, var: f64) -> f64 {
    let d = x - mu;
    (-(d * d) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Point between the component means where the weighted densities agree,
/// found by bisection on the log-density difference.
fn equal_posterior_point(mu: [f64; 2], var: [f64; 2], w: [f64; 2]) -> Result<f64> {
    let g = |x: f64| {
        (w[0].ln() - 0.5 * (2.0 * std::f64::consts::PI * var[0]).ln()
            - (x - mu[0]).powi(2) / (2.0 * var[0]))
            - (w[1].ln()
                - 0.5 * (2.0 * std::f64::consts::PI * var[1]).ln()
                - (x - mu[1]).powi(2) / (2.0 * var[1]))
    };
    let (mut lo, mut hi) = (mu[0], mu[1]);
    let (glo, ghi) = (g(lo), g(hi));
    if glo <= 0.0 || ghi >= 0.0 {
        // No crossing between the means; fall back to the midpoint.
        return Ok(0.5 * (mu[0] + mu[1]));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Picks the shape model whose group matches the aspect ratio; a ratio
/// exactly on the threshold goes to the lower group id.
pub fn select_model<'a>(
    aspect_ratio: f64,
    split: &GroupSplit,
    models: &'a [ShapeModel],
) -> Result<&'a ShapeModel> {
    let group = split.group_of(aspect_ratio);
    models
        .iter()
        .find(|m| m.group_id() == group)
        .ok_or_else(|| Error::Data(format!("no shape model for group {group}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    #[test]
    fn bimodal_ratios_split_near_generation_boundary() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let lo = Normal::new(1.0, 0.1).unwrap();
        let hi = Normal::new(1.5, 0.1).unwrap();
        let mut ratios: Vec<f64> = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..60 {
            ratios.push(f64::max(lo.sample(&mut rng), 0.2));
            labels.push(0u32);
        }
        for _ in 0..60 {
            ratios.push(f64::max(hi.sample(&mut rng), 0.2));
            labels.push(1u32);
        }
        let split = cluster_aspect_ratios(&ratios, 0).unwrap();
        assert!(
            split.threshold > 1.1 && split.threshold < 1.4,
            "threshold {}",
            split.threshold
        );
        let agree = split
            .assignments
            .iter()
            .zip(&labels)
            .filter(|(a, b)| a == b)
            .count();
        assert!(agree as f64 / labels.len() as f64 >= 0.95, "agreement {agree}");
    }

    #[test]
    fn fixed_threshold_bypasses_em() {
        let ratios = [1.0, 1.1, 1.3, 1.5];
        let split = fixed_threshold_split(&ratios, 1.22);
        assert_eq!(split.assignments, vec![0, 0, 1, 1]);
        assert_eq!(split.source, SplitSource::Fixed);
    }

    #[test]
    fn identical_ratios_signal_fallback() {
        let ratios = [1.2; 8];
        match cluster_aspect_ratios(&ratios, 0) {
            Err(Error::DegenerateSplit(_)) => {}
            other => panic!("expected DegenerateSplit, got {other:?}"),
        }
    }

    #[test]
    fn tie_goes_to_lower_group() {
        let split = fixed_threshold_split(&[1.0, 1.5], 1.22);
        assert_eq!(split.group_of(1.22), 0);
        assert_eq!(split.group_of(1.0), 0);
        assert_eq!(split.group_of(1.5), 1);
    }

    #[test]
    fn select_model_matches_group() {
        use crate::shape::{build_ssm, Shape};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut mk = |group| {
            let shapes: Vec<Shape> = (0..4)
                .map(|_| {
                    let coords: Vec<f64> =
                        (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
                    Shape::from_coords(coords).unwrap()
                })
                .collect();
            build_ssm(&shapes, 0.95, group).unwrap()
        };
        let models = [mk(0), mk(1)];
        let split = fixed_threshold_split(&[1.0, 1.5], 1.22);
        assert_eq!(select_model(1.0, &split, &models).unwrap().group_id(), 0);
        assert_eq!(select_model(1.5, &split, &models).unwrap().group_id(), 1);
        assert_eq!(select_model(1.22, &split, &models).unwrap().group_id(), 0);
        assert!(select_model(1.5, &split, &models[..1]).is_err());
    }
}
