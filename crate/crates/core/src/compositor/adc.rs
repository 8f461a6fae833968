//! Adaptive density control: cloning, splitting and culling driven by
//! accumulated screen-space gradients, plus the schedule deciding when it
//! runs.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;
use crate::splat::GaussianSet;

/// Thresholds of one density-control pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdcThresholds {
    /// Mean screen-space gradient norm above which a Gaussian is densified.
    pub grad: f64,
    /// Clone below, split above this fraction of the set's spatial extent.
    pub size_fraction: f64,
    /// Gaussians with lower opacity are culled.
    pub min_opacity: f64,
    /// Children of a split have their scale divided by this.
    pub split_factor: f64,
    pub split_children: usize,
    /// Screen radius cap in pixels (applied only when the schedule enables it).
    pub max_screen_radius: f64,
}

impl Default for AdcThresholds {
    fn default() -> Self {
        Self {
            grad: 2e-4,
            size_fraction: 0.01,
            min_opacity: 0.005,
            split_factor: 1.6,
            split_children: 2,
            max_screen_radius: 20.0,
        }
    }
}

/// Per-Gaussian statistics accumulated between two passes.
#[derive(Debug, Clone, PartialEq)]
pub struct AdcStats<T: Real> {
    pub grad_sum: Vec<T>,
    pub visible: Vec<u32>,
    pub max_radius: Vec<T>,
}

impl<T: Real> AdcStats<T> {
    pub fn new(n: usize) -> Self {
        Self { grad_sum: vec![T::zero(); n], visible: vec![0; n], max_radius: vec![T::zero(); n] }
    }

    pub fn len(&self) -> usize {
        self.grad_sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grad_sum.is_empty()
    }

    /// Adds one render: Gaussians with a positive radius count as visible.
    pub fn accumulate(&mut self, screen_grad: &[T], radius: &[T]) {
        for i in 0..self.len() {
            if radius[i] > T::zero() {
                self.grad_sum[i] += screen_grad[i];
                self.visible[i] += 1;
                self.max_radius[i] = self.max_radius[i].max(radius[i]);
            }
        }
    }

    pub fn mean_grad(&self, i: usize) -> T {
        if self.visible[i] == 0 {
            T::zero()
        } else {
            self.grad_sum[i] / T::lit(self.visible[i] as f64)
        }
    }
}

/// Counts of one pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdcReport {
    pub cloned: usize,
    pub split: usize,
    pub culled: usize,
}

/// Result of a pass: the counts and, for every Gaussian of the new set, the
/// index it was carried over from (`None` for clones and split children,
/// which start with fresh optimizer state).
#[derive(Debug, Clone, PartialEq)]
pub struct AdcOutcome {
    pub report: AdcReport,
    pub rows: Vec<Option<usize>>,
}

/// Options that vary between invocations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdcPass {
    /// Clone and split; when false only culling happens.
    pub densify: bool,
    /// Apply the screen radius cap.
    pub cap_radius: bool,
}

/// One density-control pass over `set`. Clones keep their parent's
/// parameters; split children are drawn from the parent's Gaussian with
/// scales shrunk by the split factor. Culling runs on the densified set.
pub fn adc_step<T: Real>(
    set: &mut GaussianSet<T>,
    stats: &AdcStats<T>,
    th: &AdcThresholds,
    extent: T,
    pass: AdcPass,
    rng: &mut impl Rng,
) -> AdcOutcome {
    let n = set.len();
    assert_eq!(stats.len(), n, "statistics do not match the set");
    let size_limit = T::lit(th.size_fraction) * extent;
    let grad_thr = T::lit(th.grad);
    let mut clone = Vec::new();
    let mut split = Vec::new();
    if pass.densify {
        for i in 0..n {
            if stats.mean_grad(i) > grad_thr && stats.visible[i] > 0 {
                if set.max_scale(i) <= size_limit {
                    clone.push(i);
                } else {
                    split.push(i);
                }
            }
        }
    }
    let mut is_split = vec![false; n];
    for &i in &split {
        is_split[i] = true;
    }

    let mut next = GaussianSet::new(set.color_mode);
    let mut rows = Vec::new();
    let mut radius = Vec::new();
    for i in (0..n).filter(|&i| !is_split[i]) {
        let g = set.gaussian(i);
        next.push(*g.mean, *g.log_scale, *g.quat, g.opacity_logit, g.color);
        rows.push(Some(i));
        radius.push(stats.max_radius[i]);
    }
    for &i in &clone {
        let g = set.gaussian(i);
        next.push(*g.mean, *g.log_scale, *g.quat, g.opacity_logit, g.color);
        rows.push(None);
        radius.push(T::zero());
    }
    let shrink = T::lit(th.split_factor).ln();
    for &i in &split {
        let g = set.gaussian(i);
        let rot = set.rotation(i).unwrap_or_else(nalgebra::Matrix3::identity);
        let s = g.scale();
        let ls = g.log_scale.map(|v| v - shrink);
        for _ in 0..th.split_children {
            let z: Vector3<T> = Vector3::from_fn(|k, _| T::lit(rng.sample::<f64, _>(StandardNormal)) * s[k]);
            let off = rot * z;
            let m = [g.mean[0] + off.x, g.mean[1] + off.y, g.mean[2] + off.z];
            next.push(m, ls, *g.quat, g.opacity_logit, g.color);
            rows.push(None);
            radius.push(T::zero());
        }
    }

    let min_o = T::lit(th.min_opacity);
    let cap = T::lit(th.max_screen_radius);
    let keep: Vec<usize> = (0..next.len())
        .filter(|&j| !(next.opacity(j) < min_o || (pass.cap_radius && radius[j] > cap)))
        .collect();
    let culled = next.len() - keep.len();
    let rows = keep.iter().map(|&j| rows[j]).collect();
    *set = next.gather(&keep);
    AdcOutcome { report: AdcReport { cloned: clone.len(), split: split.len(), culled }, rows }
}

/// Clamps every opacity to at most `value`. Returns how many changed.
pub fn reset_opacity<T: Real>(set: &mut GaussianSet<T>, value: f64) -> usize {
    let cap = T::lit(value).logit();
    let mut changed = 0;
    for l in set.opacity_logits.iter_mut() {
        if *l > cap {
            *l = cap;
            changed += 1;
        }
    }
    changed
}

/// What the schedule asks of a distractor set after a visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistractorAdc {
    Skip,
    Full,
    CullOnly,
}

/// When density control and opacity resets happen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdcSchedule {
    /// Static densification starts after this step.
    pub densify_from: usize,
    /// Static densification period in steps.
    pub static_interval: usize,
    /// No cloning or splitting after this step.
    pub densify_until: usize,
    /// Distractor sets are processed on every `S`-th visit of their view.
    pub distractor_visits: u32,
    /// Static opacity reset period in steps; 0 disables it.
    pub reset_interval: usize,
    pub reset_value: f64,
}

impl Default for AdcSchedule {
    fn default() -> Self {
        Self {
            densify_from: 500,
            static_interval: 100,
            densify_until: 15_000,
            distractor_visits: 10,
            reset_interval: 3000,
            reset_value: 0.01,
        }
    }
}

impl AdcSchedule {
    /// Static pass at (1-based) `step`.
    pub fn static_pass(&self, step: usize) -> bool {
        self.static_interval > 0
            && step > self.densify_from
            && step <= self.densify_until
            && step.is_multiple_of(self.static_interval)
    }

    /// The screen radius cap is enforced once the first reset has happened.
    pub fn cap_radius(&self, step: usize) -> bool {
        self.reset_interval > 0 && step > self.reset_interval
    }

    /// Distractor pass for a view that has now been trained `visits` times.
    pub fn distractor_pass(&self, visits: u32, step: usize) -> DistractorAdc {
        if self.distractor_visits == 0 || visits == 0 || !visits.is_multiple_of(self.distractor_visits) {
            DistractorAdc::Skip
        } else if step <= self.densify_until {
            DistractorAdc::Full
        } else {
            DistractorAdc::CullOnly
        }
    }

    /// Static opacity reset at `step`; never applied to distractor sets.
    pub fn opacity_reset(&self, step: usize) -> bool {
        self.reset_interval > 0 && step <= self.densify_until && step.is_multiple_of(self.reset_interval)
    }
}
