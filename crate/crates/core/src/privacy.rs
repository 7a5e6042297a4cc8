//! Gaussian mechanism, sensitivity bookkeeping, RDP accounting for
//! (subsampled) Gaussian composition, and noise-multiplier calibration.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Target privacy guarantee. `epsilon = f64::INFINITY` switches every
/// mechanism into its non-private variant (all noise scales zero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpec {
    pub epsilon: f64,
    pub delta: f64,
}

pub const DEFAULT_DELTA: f64 = 1e-5;

impl PrivacySpec {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParams(format!("epsilon must be > 0, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParams(format!("delta must lie in (0,1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn non_private() -> Self {
        Self { epsilon: f64::INFINITY, delta: DEFAULT_DELTA }
    }

    pub fn is_private(&self) -> bool {
        self.epsilon.is_finite()
    }

    /// Sub-budget with the given fractions of epsilon and delta.
    pub fn portion(&self, eps_fraction: f64, delta_fraction: f64) -> Self {
        Self { epsilon: self.epsilon * eps_fraction, delta: self.delta * delta_fraction }
    }
}

/// A calibrated Gaussian mechanism: L2 sensitivity of the query and the
/// noise standard deviation in the same units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMech {
    pub sensitivity: f64,
    pub sigma: f64,
}

impl GaussianMech {
    /// Calibrate for an (epsilon, delta) target; infinite epsilon gives
    /// sigma zero.
    pub fn calibrate(sensitivity: f64, epsilon: f64, delta: f64) -> Result<Self> {
        Ok(Self { sensitivity, sigma: calibrate_gaussian(sensitivity, epsilon, delta)? })
    }
}

/// Noise standard deviation of the Gaussian mechanism:
/// `sigma = sqrt(2 ln(1.25/delta)) * sensitivity / epsilon`.
pub fn calibrate_gaussian(sensitivity: f64, epsilon: f64, delta: f64) -> Result<f64> {
    if !(sensitivity >= 0.0) {
        return Err(Error::InvalidParams(format!("sensitivity must be >= 0, got {sensitivity}")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParams(format!("epsilon must be > 0, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParams(format!("delta must lie in (0,1), got {delta}")));
    }
    if epsilon.is_infinite() || sensitivity == 0.0 {
        return Ok(0.0);
    }
    Ok((2.0 * (1.25 / delta).ln()).sqrt() * sensitivity / epsilon)
}

/// Add i.i.d. `N(0, sigma^2)` noise in place; `sigma = 0` leaves the input
/// untouched without consuming randomness.
pub fn add_gaussian_noise<R: Rng + ?Sized>(values: &mut [f64], sigma: f64, rng: &mut R) {
    assert!(sigma >= 0.0, "sigma must be non-negative");
    if sigma == 0.0 {
        return;
    }
    for v in values.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v += sigma * z;
    }
}

/// Renyi orders tracked by the accountant: integers 2..=64 plus two
/// high-order probes.
pub fn default_orders() -> Vec<u64> {
    let mut orders: Vec<u64> = (2..=64).collect();
    orders.extend([128, 256]);
    orders
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RdpComponent {
    per_step: Vec<f64>,
    steps: u64,
}

/// Accumulated RDP of composed mechanisms over a fixed order grid.
///
/// Internally the ledger keeps (per-step cost, step count) pairs so that
/// composing two runs of the same mechanism is exactly additive: the totals
/// are evaluated as `steps * per_step` with a single rounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountantState {
    orders: Vec<u64>,
    components: Vec<RdpComponent>,
}

impl AccountantState {
    pub fn empty() -> Self {
        Self { orders: default_orders(), components: Vec::new() }
    }

    pub fn orders(&self) -> &[u64] {
        &self.orders
    }

    /// Accumulated epsilon_alpha per order.
    pub fn rdp(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.orders.len()];
        for comp in &self.components {
            for (t, &p) in total.iter_mut().zip(&comp.per_step) {
                *t += comp.steps as f64 * p;
            }
        }
        total
    }

    pub fn steps(&self) -> u64 {
        self.components.iter().map(|c| c.steps).sum()
    }

    /// Sequential composition with another ledger over the same orders.
    /// Components with bit-identical per-step costs merge their step counts.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.orders != other.orders {
            return Err(Error::InvalidParams("cannot compose ledgers over different orders".into()));
        }
        let mut merged = self.clone();
        for comp in &other.components {
            match merged.components.iter_mut().find(|c| c.per_step == comp.per_step) {
                Some(existing) => existing.steps += comp.steps,
                None => merged.components.push(comp.clone()),
            }
        }
        Ok(merged)
    }

    /// Convert to (epsilon, minimizing order) at the given delta via
    /// `eps = min_alpha eps_alpha + ln(1/delta) / (alpha - 1)`.
    pub fn to_epsilon(&self, delta: f64) -> Result<(f64, u64)> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParams(format!("delta must lie in (0,1), got {delta}")));
        }
        if self.orders.is_empty() {
            return Err(Error::EmptyState);
        }
        let rdp = self.rdp();
        let log_inv_delta = (1.0 / delta).ln();
        let mut best = f64::INFINITY;
        let mut best_order = self.orders[0];
        for (&alpha, &eps_alpha) in self.orders.iter().zip(&rdp) {
            let eps = eps_alpha + log_inv_delta / (alpha as f64 - 1.0);
            if eps < best {
                best = eps;
                best_order = alpha;
            }
        }
        Ok((best, best_order))
    }
}

/// RDP ledger of `steps` applications of the Poisson-subsampled Gaussian
/// mechanism with sampling rate `q` and the given noise multiplier.
///
/// At `q = 1` the per-step cost is exactly `alpha / (2 sigma^2)`; for
/// `q < 1` the integer-order binomial bound is evaluated in log space.
pub fn rdp_subsampled_gaussian(q: f64, noise_multiplier: f64, steps: u64) -> Result<AccountantState> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidParams(format!("sampling rate must lie in (0,1], got {q}")));
    }
    if !(noise_multiplier > 0.0) {
        return Err(Error::InvalidParams(format!(
            "noise multiplier must be > 0, got {noise_multiplier}"
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidParams("steps must be >= 1".into()));
    }
    let orders = default_orders();
    let sigma2 = noise_multiplier * noise_multiplier;
    let mut per_step = Vec::with_capacity(orders.len());
    for &alpha in &orders {
        let eps = if q == 1.0 {
            alpha as f64 / (2.0 * sigma2)
        } else {
            subsampled_rdp_integer_order(q, sigma2, alpha)?
        };
        if !eps.is_finite() {
            return Err(Error::NumericalOverflow(format!("order {alpha} overflowed")));
        }
        per_step.push(eps);
    }
    Ok(AccountantState { orders, components: vec![RdpComponent { per_step, steps }] })
}

/// `log sum_k C(alpha,k) (1-q)^(alpha-k) q^k exp(k(k-1)/(2 sigma^2))`,
/// divided by `alpha - 1`, evaluated stably in log space.
fn subsampled_rdp_integer_order(q: f64, sigma2: f64, alpha: u64) -> Result<f64> {
    let a = alpha as f64;
    let log_q = q.ln();
    let log_1mq = (1.0 - q).ln();
    let mut log_terms = Vec::with_capacity(alpha as usize + 1);
    let mut log_binom = 0.0;
    for k in 0..=alpha {
        let kf = k as f64;
        log_terms.push(log_binom + (a - kf) * log_1mq + kf * log_q + kf * (kf - 1.0) / (2.0 * sigma2));
        if k < alpha {
            log_binom += ((a - kf) / (kf + 1.0)).ln();
        }
    }
    let max = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NumericalOverflow(format!("order {alpha}: log term {max}")));
    }
    let sum: f64 = log_terms.iter().map(|t| (t - max).exp()).sum();
    Ok((max + sum.ln()).max(0.0) / (a - 1.0))
}

/// Smallest noise multiplier whose accountant epsilon lands in
/// `[0.99 * epsilon, epsilon]`, found by bisection. Returns 0 for infinite
/// epsilon.
pub fn calibrate_noise_multiplier(q: f64, steps: u64, epsilon: f64, delta: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParams(format!("epsilon must be > 0, got {epsilon}")));
    }
    if epsilon.is_infinite() {
        return Ok(0.0);
    }
    let eps_at = |sigma: f64| -> Result<f64> {
        Ok(rdp_subsampled_gaussian(q, sigma, steps)?.to_epsilon(delta)?.0)
    };

    let mut lo = 1e-6;
    let mut hi = 1.0;
    let mut eps_hi = eps_at(hi)?;
    while eps_hi > epsilon {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Unachievable(format!(
                "epsilon {epsilon} not reachable with noise multiplier up to 1e6"
            )));
        }
        eps_hi = eps_at(hi)?;
    }
    let eps_lo = eps_at(lo)?;
    if eps_lo <= epsilon {
        // even near-zero noise satisfies the target
        return Ok(lo);
    }
    assert!(eps_lo > eps_hi, "accountant epsilon must decrease in sigma");

    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let eps_mid = eps_at(mid)?;
        if eps_mid > epsilon {
            lo = mid;
        } else {
            hi = mid;
            eps_hi = eps_mid;
        }
        if eps_hi >= 0.99 * epsilon || (hi - lo) / hi < 1e-3 {
            break;
        }
    }
    debug_assert!(eps_hi <= epsilon);
    Ok(hi)
}

/// Proportional budget split: `eps_i = eps * w_i / sum(w)`.
pub fn split_budget(epsilon: f64, weights: &[f64]) -> Vec<f64> {
    assert!(!weights.is_empty(), "split_budget needs at least one weight");
    assert!(weights.iter().all(|&w| w > 0.0 && w.is_finite()), "weights must be positive finite");
    let total: f64 = weights.iter().sum();
    weights.iter().map(|&w| epsilon * w / total).collect()
}
