//! Gaussian mechanism calibration and seeded sampling.
//!
//! Input perturbation adds noise with `sigma = b * kappa / (2 eps)` to each
//! agent's reward. Output perturbation adds noise to the composed joint reward
//! with `sigma = b * kappa * mu / (2 eps N)`, where `mu` is the largest number
//! of joint actions that share one local action of some agent.

use alloc::format;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::RewardVector;
use crate::stats::q_inverse;

/// Generator behind every noise draw. ChaCha8 from `rand_chacha` 0.9, seeded
/// with `seed_from_u64`; normals come from the `rand_distr` ziggurat sampler.
pub type NoiseRng = ChaCha8Rng;

/// `(epsilon, delta, b)` for the Gaussian mechanism.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyParams {
    epsilon: f64,
    delta: f64,
    b: f64,
}

impl PrivacyParams {
    /// Requires `epsilon > 0`, `0 <= delta < 0.5` and `b > 0`, all finite.
    pub fn new(epsilon: f64, delta: f64, b: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(0.0..0.5).contains(&delta) {
            return Err(Error::Domain(format!("delta must lie in [0, 0.5), got {delta}")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::Domain(format!("adjacency bound b must be positive, got {b}")));
        }
        Ok(Self { epsilon, delta, b })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

/// Standard deviation of the additive Gaussian noise, in reward units.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NoiseScale(f64);

impl NoiseScale {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma > 0.0 && sigma.is_finite() {
            Ok(Self(sigma))
        } else {
            Err(Error::Domain(format!("noise scale must be positive and finite, got {sigma}")))
        }
    }

    pub fn sigma(self) -> f64 {
        self.0
    }
}

/// `kappa(eps, delta) = Q^-1(delta) + sqrt(Q^-1(delta)^2 + 2 eps)`.
///
/// `delta = 0` is a valid privacy level but leaves `kappa` undefined, so it is
/// rejected here rather than replaced by some small positive value.
pub fn kappa(params: &PrivacyParams) -> Result<f64> {
    if params.delta == 0.0 {
        return Err(Error::Domain(
            "kappa(epsilon, delta) is undefined at delta = 0 since Q^-1(0) is infinite; \
             the Gaussian mechanism needs delta > 0"
                .into(),
        ));
    }
    let q = q_inverse(params.delta)?;
    Ok(q + libm::sqrt(q * q + 2.0 * params.epsilon))
}

/// Input perturbation scale `b * kappa / (2 eps)`.
pub fn sigma_input(params: &PrivacyParams) -> Result<NoiseScale> {
    scaled_sigma(params, 1.0, 1.0)
}

/// Output perturbation scale `b * kappa * mu / (2 eps N)` for agents with the
/// given local action counts.
pub fn sigma_output(params: &PrivacyParams, action_counts: &[usize]) -> Result<NoiseScale> {
    let mu = mu(action_counts)?;
    scaled_sigma(params, mu as f64, action_counts.len() as f64)
}

// One code path for both scales so that a single agent gets bit-identical sigmas.
fn scaled_sigma(params: &PrivacyParams, mu: f64, agents: f64) -> Result<NoiseScale> {
    let k = kappa(params)?;
    NoiseScale::new(params.b * k * mu / (2.0 * params.epsilon * agents))
}

/// `mu = max_j prod_{l != j} m_l` over agents. Equal to `prod m / min m`.
pub fn mu(action_counts: &[usize]) -> Result<u128> {
    let min = match action_counts.iter().min() {
        None => return Err(Error::Domain("mu needs at least one agent".into())),
        Some(0) => return Err(Error::Domain("action counts must be positive".into())),
        Some(&m) => m,
    };
    let mut skipped = false;
    let mut product: u128 = 1;
    for &m in action_counts {
        if m == min && !skipped {
            skipped = true;
            continue;
        }
        product = product.checked_mul(m as u128).ok_or(Error::Capacity {
            what: "mu",
            needed: u128::MAX,
            limit: u128::MAX,
        })?;
    }
    Ok(product)
}

/// Generator for one seed.
pub fn noise_rng(seed: u64) -> NoiseRng {
    NoiseRng::seed_from_u64(seed)
}

/// Seed of Monte Carlo sample `index`: `base XOR splitmix64(index)`.
pub fn sample_seed(base: u64, index: u64) -> u64 {
    base ^ splitmix64(index)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Add i.i.d. `N(0, sigma^2)` noise to every entry, drawing from `rng`.
pub fn perturb_with(values: &[f64], scale: NoiseScale, rng: &mut NoiseRng) -> Vec<f64> {
    let sigma = scale.sigma();
    values
        .iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(rng);
            v + sigma * z
        })
        .collect()
}

/// The Gaussian mechanism applied to a whole reward vector with a fresh
/// generator seeded by `seed`.
pub fn gaussian_perturb(vector: &RewardVector, scale: NoiseScale, seed: u64) -> RewardVector {
    let mut rng = noise_rng(seed);
    RewardVector::from_raw(perturb_with(vector.as_slice(), scale, &mut rng))
}

/// Adjacency: exactly one entry differs and the L1 distance is at most `b`.
/// Identical vectors are not adjacent.
pub fn is_adjacent(v: &RewardVector, w: &RewardVector, b: f64) -> Result<bool> {
    if v.len() != w.len() {
        return Err(Error::Shape {
            expected: v.len(),
            found: w.len(),
        });
    }
    let mut differing = v.as_slice().iter().zip(w.as_slice()).filter(|(x, y)| x != y);
    Ok(match (differing.next(), differing.next()) {
        (Some((x, y)), None) => (x - y).abs() <= b,
        _ => false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn params(eps: f64, delta: f64) -> PrivacyParams {
        PrivacyParams::new(eps, delta, 1.0).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn kappa_reference_values() {
        assert!((kappa(&params(1.0, 0.01)).unwrap() - 5.048_827_337_9).abs() < 1e-9);
        assert!((kappa(&params(0.1, 0.01)).unwrap() - 4.695_291_611_5).abs() < 1e-9);
        for &d in &[1e-6, 0.01, 0.2, 0.49] {
            for &e in &[0.01, 1.0, 50.0] {
                assert!(kappa(&params(e, d)).unwrap() > libm::sqrt(2.0 * e));
            }
        }
        let zero = PrivacyParams::new(1.0, 0.0, 1.0).unwrap();
        assert!(matches!(kappa(&zero), Err(Error::Domain(_))));
        assert!(sigma_input(&zero).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(PrivacyParams::new(0.0, 0.1, 1.0).is_err());
        assert!(PrivacyParams::new(1.0, 0.5, 1.0).is_err());
        assert!(PrivacyParams::new(1.0, -0.1, 1.0).is_err());
        assert!(PrivacyParams::new(1.0, 0.1, 0.0).is_err());
        assert!(PrivacyParams::new(f64::NAN, 0.1, 1.0).is_err());
        assert!(NoiseScale::new(0.0).is_err());
    }

    #[test]
    fn input_scales() {
        let cases = [
            (0.1, 23.476_458_057),
            (1.0, 2.524_413_669),
            (5.0, 0.625_214_645),
            (10.0, 0.368_368_452),
        ];
        for (eps, sigma) in cases {
            assert!(rel(sigma_input(&params(eps, 0.01)).unwrap().sigma(), sigma) < 1e-8);
        }
    }

    #[test]
    fn output_scales() {
        let p = params(1.0, 0.01);
        let s = |n: usize| sigma_output(&p, &vec![4; n]).unwrap().sigma();
        assert!(rel(s(2), 5.048_827_34) < 1e-8);
        assert!(rel(s(5), 129.249_98) < 1e-6);
        assert!(rel(s(10), 66_175.99) < 1e-6);
        assert_eq!(sigma_output(&p, &[7]).unwrap(), sigma_input(&p).unwrap());
    }

    #[test]
    fn mu_values() {
        assert_eq!(mu(&[4, 4]).unwrap(), 4);
        assert_eq!(mu(&[6]).unwrap(), 1);
        assert_eq!(mu(&[4; 5]).unwrap(), 256);
        assert_eq!(mu(&[2, 5, 3]).unwrap(), 15);
        assert!(mu(&[]).is_err());
        assert!(mu(&[3, 0]).is_err());
        // brute force max over agents of the product of the others
        let counts = [3usize, 1, 4, 2, 5];
        let brute = (0..counts.len())
            .map(|j| {
                counts
                    .iter()
                    .enumerate()
                    .filter(|&(l, _)| l != j)
                    .map(|(_, &m)| m as u128)
                    .product::<u128>()
            })
            .max()
            .unwrap();
        assert_eq!(mu(&counts).unwrap(), brute);
    }

    #[test]
    fn perturbation_is_seeded() {
        let v = RewardVector::new(vec![1.0, -2.0, 3.5]).unwrap();
        let s = NoiseScale::new(1.0).unwrap();
        assert_eq!(gaussian_perturb(&v, s, 9), gaussian_perturb(&v, s, 9));
        assert_ne!(gaussian_perturb(&v, s, 9), gaussian_perturb(&v, s, 10));
        let tiny = gaussian_perturb(&v, NoiseScale::new(1e-300).unwrap(), 3);
        assert_eq!(tiny, v);
    }

    #[test]
    fn perturbation_moments() {
        let v = RewardVector::new(vec![0.0]).unwrap();
        let s = NoiseScale::new(2.0).unwrap();
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|i| gaussian_perturb(&v, s, sample_seed(17, i))[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!(rel(libm::sqrt(var), 2.0) < 0.01, "std {}", libm::sqrt(var));
    }

    #[test]
    fn adjacency() {
        let v = RewardVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        let b = 0.75;
        assert!(!is_adjacent(&v, &v, b).unwrap());
        let w = RewardVector::new(vec![1.0, 2.0 + b, 3.0]).unwrap();
        assert!(is_adjacent(&v, &w, b).unwrap());
        let far = RewardVector::new(vec![1.0, 2.0 + 2.0 * b, 3.0]).unwrap();
        assert!(!is_adjacent(&v, &far, b).unwrap());
        let two = RewardVector::new(vec![2.0, 3.0]).unwrap();
        let base = RewardVector::new(vec![1.0, 2.0]).unwrap();
        assert!(!is_adjacent(&base, &two, 10.0).unwrap());
        assert!(matches!(is_adjacent(&v, &two, 1.0), Err(Error::Shape { .. })));
    }

    #[test]
    fn splitmix_streams_differ() {
        let seeds: Vec<u64> = (0..1000).map(|i| sample_seed(42, i)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
    }
}
