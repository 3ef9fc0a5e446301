//! Central finite-difference verification of analytic gradients.
//!
//! Checks run in `f64`: networks trained in `f32` are cast to an `f64`
//! shadow copy first.
//!
//! An entry that misses the tolerance at the primary step is re-measured at
//! each fallback step and keeps its smallest error. ReLU and max-pool kinks,
//! hinge corners and batch normalization over a handful of rows make the
//! loss sharply curved on the scale of the primary step; a wrong backward
//! pass fails at every step. The report counts re-measured entries.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Parameter;

/// A network plus a fixed input and loss, reduced to a scalar function of
/// its parameters.
pub trait GradCheckable {
    fn parameters(&mut self) -> Vec<&mut Parameter<f64>>;

    /// Forward pass only.
    fn loss(&mut self) -> f64;

    /// Zeroes gradients, then runs forward and backward, leaving the analytic
    /// gradient in each parameter's `grad`.
    fn loss_and_grad(&mut self) -> f64;
}

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Smaller steps tried, in order, for entries that fail at `step`.
    pub fallback_steps: Vec<f64>,
    pub tolerance: f64,
    /// Check at most this many randomly chosen entries per parameter.
    pub max_entries_per_param: Option<usize>,
    /// Denominator floor in the relative error, so that entries whose true
    /// gradient is ~0 are judged on absolute error.
    pub denom_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-3,
            fallback_steps: vec![1e-4, 1e-5, 1e-6, 1e-7],
            tolerance: 1e-4,
            max_entries_per_param: None,
            denom_floor: 1e-7,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub entries_checked: usize,
    /// Entries that needed a fallback step.
    pub retried: usize,
    /// `(analytic, numeric)` at the worst entry.
    pub worst_values: Option<(f64, f64)>,
    pub per_param: Vec<(String, f64)>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn grad_check<N: GradCheckable>(net: &mut N, cfg: &GradCheckConfig) -> GradCheckReport {
    net.loss_and_grad();
    let analytic: Vec<(String, Vec<f64>)> = net
        .parameters()
        .iter()
        .map(|p| (p.name.clone(), p.grad.iter().copied().collect()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        entries_checked: 0,
        retried: 0,
        worst_values: None,
        per_param: Vec::new(),
        tolerance: cfg.tolerance,
    };

    for (p_idx, (name, grads)) in analytic.iter().enumerate() {
        let n = grads.len();
        let entries: Vec<usize> = match cfg.max_entries_per_param {
            Some(k) if k < n => {
                let mut v = sample(&mut rng, n, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        let mut worst_here = 0.0f64;
        for flat in entries {
            let analytic = grads[flat];
            let mut numeric = central_difference(net, p_idx, flat, cfg.step);
            let mut err = relative_error(analytic, numeric, cfg.denom_floor);
            if err >= cfg.tolerance && !cfg.fallback_steps.is_empty() {
                report.retried += 1;
                for &h in &cfg.fallback_steps {
                    let n = central_difference(net, p_idx, flat, h);
                    let e = relative_error(analytic, n, cfg.denom_floor);
                    if e < err {
                        err = e;
                        numeric = n;
                    }
                }
            }
            report.entries_checked += 1;
            worst_here = worst_here.max(err);
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((name.clone(), flat));
                report.worst_values = Some((analytic, numeric));
            }
        }
        report.per_param.push((name.clone(), worst_here));
    }
    report
}

fn central_difference<N: GradCheckable>(net: &mut N, p_idx: usize, flat: usize, h: f64) -> f64 {
    let original = nudge(net, p_idx, flat, None);
    nudge(net, p_idx, flat, Some(original + h));
    let plus = net.loss();
    nudge(net, p_idx, flat, Some(original - h));
    let minus = net.loss();
    nudge(net, p_idx, flat, Some(original));
    (plus - minus) / (2.0 * h)
}

/// Reads (and optionally overwrites) one parameter entry; returns the value
/// held before the call.
fn nudge<N: GradCheckable>(net: &mut N, p_idx: usize, flat: usize, set: Option<f64>) -> f64 {
    let mut params = net.parameters();
    let p = &mut params[p_idx];
    let slot = p
        .value
        .as_slice_mut()
        .expect("parameters are contiguous")
        .get_mut(flat)
        .expect("index in range");
    let old = *slot;
    if let Some(v) = set {
        *slot = v;
    }
    old
}
