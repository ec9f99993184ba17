//! Measurement refinement for imprecise matches.

use serde::{Deserialize, Serialize};

use crate::bbox::{overlap_rate, BoundingBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub t_ie: f64,
    pub t_a: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { t_ie: 0.6, t_a: 0.8 }
    }
}

impl Thresholds {
    /// Bound on the second fit ratio once the first exceeds `t_a` while the
    /// overlap rate stays below `t_ie`.
    pub fn t_a_prime(&self) -> f64 {
        let p = self.t_ie * self.t_a;
        p / (p + self.t_a - self.t_ie)
    }

    pub fn is_valid(&self) -> bool {
        0.0 < self.t_ie && self.t_ie < self.t_a && self.t_a <= 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RefineCase {
    Precise,
    /// Measurement shrank inside the estimate.
    Shrinking,
    /// Measurement shrank far inside the estimate.
    Stasis,
    /// Measurement grew around the estimate.
    Growing,
    Otherwise,
}

/// Fit ratios `|Bi ∩ Be| / |Bi|` and `|Bi ∩ Be| / |Be|`.
pub fn fit_ratios(b_i: &BoundingBox, b_e: &BoundingBox) -> (f64, f64) {
    let inter = b_i.intersection_area(b_e);
    let r_m = if b_i.area() > 0.0 { inter / b_i.area() } else { 0.0 };
    let r_e = if b_e.area() > 0.0 { inter / b_e.area() } else { 0.0 };
    (r_m, r_e)
}

pub fn classify(r_ie: f64, r_m: f64, r_e: f64, th: &Thresholds) -> RefineCase {
    let ta2 = th.t_a_prime();
    if r_ie >= th.t_ie {
        RefineCase::Precise
    } else if th.t_a < r_m && r_m <= 1.0 && th.t_ie <= r_e && r_e < ta2 {
        RefineCase::Shrinking
    } else if th.t_a < r_m && r_m <= 1.0 && (0.0..th.t_ie).contains(&r_e) {
        RefineCase::Stasis
    } else if th.t_ie <= r_m && r_m < ta2 && th.t_a < r_e && r_e <= 1.0 {
        RefineCase::Growing
    } else {
        RefineCase::Otherwise
    }
}

/// Inputs for one refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineInput {
    pub initial: BoundingBox,
    pub prior: BoundingBox,
    pub mean_size: BoundingBox,
    pub previous: BoundingBox,
    /// Measurement within the border margin of the frame.
    pub at_border: bool,
    /// Monotone area decrease over the recent history.
    pub shrinking: bool,
    /// Monotone area increase over the recent history.
    pub growing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refinement {
    pub case: RefineCase,
    pub r_ie: f64,
    /// Measurement fed to the update.
    pub refined: BoundingBox,
    /// Final box comes from `refined` rather than the posterior.
    pub lambda: bool,
    pub precise: bool,
}

impl Refinement {
    /// Reported box once the posterior is known.
    pub fn final_box(&self, posterior: &BoundingBox, initial: &BoundingBox) -> BoundingBox {
        if self.precise {
            self.r_ie * *initial + (1.0 - self.r_ie) * *posterior
        } else if self.lambda {
            self.refined
        } else {
            *posterior
        }
    }
}

pub fn refine(input: &RefineInput, th: &Thresholds) -> Refinement {
    let r_ie = overlap_rate(&input.initial, &input.prior);
    let (r_m, r_e) = fit_ratios(&input.initial, &input.prior);
    let case = classify(r_ie, r_m, r_e, th);
    let precise = |case| Refinement {
        case,
        r_ie,
        refined: input.initial,
        lambda: false,
        precise: true,
    };
    let imprecise = |case, refined, lambda| Refinement {
        case,
        r_ie,
        refined,
        lambda,
        precise: false,
    };
    let overlap = input.initial.intersection(&input.prior).unwrap_or(input.prior);
    match case {
        RefineCase::Precise => precise(case),
        RefineCase::Shrinking if input.at_border || input.shrinking => precise(case),
        RefineCase::Shrinking => imprecise(case, 0.5 * (overlap + input.prior), false),
        RefineCase::Stasis if input.at_border => precise(case),
        RefineCase::Stasis => imprecise(case, input.previous, false),
        RefineCase::Growing if input.at_border || input.growing => precise(case),
        RefineCase::Growing => imprecise(case, 0.5 * (overlap + input.mean_size), true),
        RefineCase::Otherwise => {
            let refined = r_ie * input.initial + (1.0 - r_ie) * input.mean_size;
            let lambda = overlap_rate(&refined, &input.prior) >= th.t_ie;
            imprecise(case, refined, lambda)
        }
    }
}
