//! Closed-form privacy/performance bounds.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::mechanism::{kappa, sigma_input, NoiseScale, PrivacyParams};
use crate::model::RewardVector;
use crate::stats::{phi, q_inverse, q_survival};

fn check_counts(agents: usize, nm: usize) -> Result<()> {
    if agents == 0 || nm == 0 {
        return Err(Error::Domain(format!(
            "agent count and nm must be positive, got N = {agents}, nm = {nm}"
        )));
    }
    Ok(())
}

/// `sqrt((1 - 2/pi) (nm - 1) / N)`: the spread term shared by the accuracy
/// and iteration bounds.
fn spread(agents: usize, nm: usize) -> f64 {
    libm::sqrt((1.0 - 2.0 / PI) * (nm as f64 - 1.0) / agents as f64)
}

/// `C = sqrt(2 / (N pi)) + sqrt((1 - 2/pi) (nm - 1) / N)`.
pub fn accuracy_constant(agents: usize, nm: usize) -> Result<f64> {
    check_counts(agents, nm)?;
    Ok(libm::sqrt(2.0 / (agents as f64 * PI)) + spread(agents, nm))
}

/// Bound on the expected largest absolute error of the input-perturbed
/// joint reward: `C b kappa / (2 eps)`.
pub fn accuracy_bound(params: &PrivacyParams, agents: usize, nm: usize) -> Result<f64> {
    let c = accuracy_constant(agents, nm)?;
    Ok(c * params.b() * kappa(params)? / (2.0 * params.epsilon()))
}

/// Smallest `eps` that the sufficient condition certifies for expected
/// largest absolute error `a`: `2 C^2 b^2 / (4 a^2) + C b Q^-1(delta) / a`.
pub fn min_epsilon_for_accuracy(a: f64, delta: f64, b: f64, agents: usize, nm: usize) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Domain(format!("accuracy target must be positive, got {a}")));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::Domain(format!("adjacency bound b must be positive, got {b}")));
    }
    if delta == 0.0 {
        return Err(Error::Domain(
            "delta = 0 leaves Q^-1(delta) infinite, so no epsilon is certified".into(),
        ));
    }
    let c = accuracy_constant(agents, nm)?;
    Ok(2.0 * c * c * b * b / (4.0 * a * a) + c * b * q_inverse(delta)? / a)
}

/// Indices of the `k` largest entries, ties going to the lower index.
pub fn top_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    order.truncate(k);
    order
}

/// Indices of the `k` smallest entries, ties going to the lower index.
pub fn bottom_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    order.truncate(k);
    order
}

/// Top-`p` and bottom-`q` selection for the order-preservation bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub p: usize,
    pub q: usize,
}

impl Selection {
    /// `p = 0` or `q = 0` drops that side of the event; at least one side must
    /// be present and `p + q` cannot exceed the vector length.
    pub fn check(&self, len: usize) -> Result<()> {
        if self.p + self.q == 0 {
            return Err(Error::Domain("at least one of p and q must be positive".into()));
        }
        if self.p + self.q > len {
            return Err(Error::Shape {
                expected: len,
                found: self.p + self.q,
            });
        }
        Ok(())
    }
}

/// `min T^p - max T^-p` and `max T_q - min T_-q`. A side without a
/// complement (or absent) reports `+inf` / `-inf` respectively, i.e. an event
/// that always holds.
pub fn selection_gaps(values: &[f64], sel: Selection) -> Result<(f64, f64)> {
    sel.check(values.len())?;
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let len = sorted.len();
    let top = if sel.p == 0 || sel.p == len {
        f64::INFINITY
    } else {
        sorted[sel.p - 1] - sorted[sel.p]
    };
    let bottom = if sel.q == 0 || sel.q == len {
        f64::NEG_INFINITY
    } else {
        sorted[len - sel.q] - sorted[len - sel.q - 1]
    };
    Ok((top, bottom))
}

/// Upper bound on the probability that input perturbation keeps the top-`p`
/// and bottom-`q` index sets of an agent's reward:
/// `min{Phi(gap_top / (sqrt 2 sigma)), Q(gap_bottom / (sqrt 2 sigma))}`.
pub fn order_preservation_bound(reward: &RewardVector, sel: Selection, params: &PrivacyParams) -> Result<f64> {
    order_bound_for_scale(reward, sel, sigma_input(params)?)
}

/// [`order_preservation_bound`] for an explicit noise scale.
pub fn order_bound_for_scale(reward: &RewardVector, sel: Selection, scale: NoiseScale) -> Result<f64> {
    let (top, bottom) = selection_gaps(reward.as_slice(), sel)?;
    let s = SQRT_2 * scale.sigma();
    Ok(phi(top / s).min(q_survival(bottom / s)))
}

/// Closed form for the expected growth in policy-evaluation work.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationBound {
    /// `ceil(log((4 R_max + 4 sigma S) / (eta (1 - gamma)^2)) / log(1 / gamma)) + 1`
    /// with `S = sqrt((1 - 2/pi) (nm - 1) / N)`.
    pub ceiling_term: u64,
    /// `nm (ceiling_term - k)` for the sweep count `k` being compared against.
    pub bound: f64,
}

/// Inputs of [`expected_iteration_increase_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationBoundInput {
    pub r_max: f64,
    pub agents: usize,
    pub nm: usize,
    pub eta: f64,
    pub gamma: f64,
}

/// Bound on `E[nm (K_private - k)]`, the expected extra policy-evaluation work
/// caused by input perturbation, where `k` is the deterministic sweep count
/// for the sensitive reward.
pub fn expected_iteration_increase_bound(input: &IterationBoundInput, params: &PrivacyParams, k: u64) -> Result<IterationBound> {
    let IterationBoundInput {
        r_max,
        agents,
        nm,
        eta,
        gamma,
    } = *input;
    check_counts(agents, nm)?;
    if !(r_max >= 0.0 && r_max.is_finite()) {
        return Err(Error::Domain(format!("R_max must be finite and non-negative, got {r_max}")));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Domain(format!("eta must be positive, got {eta}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let sigma = sigma_input(params)?.sigma();
    let numerator = 4.0 * r_max + 4.0 * sigma * spread(agents, nm);
    let raw = libm::log(numerator / (eta * (1.0 - gamma) * (1.0 - gamma))) / libm::log(1.0 / gamma);
    let ceiling_term = libm::ceil(raw).max(0.0) as u64 + 1;
    Ok(IterationBound {
        ceiling_term,
        bound: nm as f64 * (ceiling_term as f64 - k as f64),
    })
}
