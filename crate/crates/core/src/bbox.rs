//! Axis-aligned boxes in centroid form and their vector algebra.

use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

/// Rectangle `[cx, cy, w, h]` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    pub fn from_ltwh(left: f64, top: f64, w: f64, h: f64) -> Self {
        Self::new(left + w / 2.0, top + h / 2.0, w, h)
    }

    /// φ: the 4-vector `[cx, cy, w, h]`.
    pub fn to_vector(self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    /// φ⁻¹.
    pub fn from_vector(z: [f64; 4]) -> Self {
        Self::new(z[0], z[1], z[2], z[3])
    }

    pub fn left(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn right(&self) -> f64 {
        self.cx + self.w / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.cx.is_finite() && self.cy.is_finite()
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.left() && x <= self.right() && y >= self.top() && y <= self.bottom()
    }

    /// Overlapping rectangle, if the boxes intersect with positive area.
    pub fn intersection(&self, other: &Self) -> Option<Self> {
        let l = self.left().max(other.left());
        let t = self.top().max(other.top());
        let r = self.right().min(other.right());
        let b = self.bottom().min(other.bottom());
        (r > l && b > t).then(|| Self::from_ltwh(l, t, r - l, b - t))
    }

    pub fn intersection_area(&self, other: &Self) -> f64 {
        self.intersection(other).map_or(0.0, |i| i.area())
    }

    /// Smallest box covering both.
    pub fn hull(&self, other: &Self) -> Self {
        let l = self.left().min(other.left());
        let t = self.top().min(other.top());
        let r = self.right().max(other.right());
        let b = self.bottom().max(other.bottom());
        Self::from_ltwh(l, t, r - l, b - t)
    }

    pub fn centroid_distance(&self, other: &Self) -> f64 {
        (self.cx - other.cx).hypot(self.cy - other.cy)
    }
}

/// `|B ∩ B'| / |B ∪ B'|`, 0 for degenerate pairs.
pub fn overlap_rate(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Componentwise sum of the φ-vectors (⊕).
pub fn box_oplus(a: &BoundingBox, b: &BoundingBox) -> BoundingBox {
    BoundingBox::new(a.cx + b.cx, a.cy + b.cy, a.w + b.w, a.h + b.h)
}

/// Scalar multiple of the φ-vector (⊗).
pub fn box_otimes(k: f64, b: &BoundingBox) -> BoundingBox {
    BoundingBox::new(k * b.cx, k * b.cy, k * b.w, k * b.h)
}

impl Add for BoundingBox {
    type Output = BoundingBox;

    fn add(self, rhs: Self) -> Self {
        box_oplus(&self, &rhs)
    }
}

impl Mul<BoundingBox> for f64 {
    type Output = BoundingBox;

    fn mul(self, rhs: BoundingBox) -> BoundingBox {
        box_otimes(self, &rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn overlap_examples() {
        let a = BoundingBox::from_ltwh(0.0, 0.0, 1.0, 1.0);
        assert_eq!(overlap_rate(&a, &a), 1.0);
        let far = BoundingBox::from_ltwh(5.0, 5.0, 1.0, 1.0);
        assert_eq!(overlap_rate(&a, &far), 0.0);
        let half = BoundingBox::from_ltwh(0.5, 0.0, 1.0, 1.0);
        assert!((overlap_rate(&a, &half) - 0.5 / 1.5).abs() < 1e-15);
        // touching edges do not overlap
        let touch = BoundingBox::from_ltwh(1.0, 0.0, 1.0, 1.0);
        assert_eq!(overlap_rate(&a, &touch), 0.0);
    }

    #[test]
    fn algebra_examples() {
        let b = BoundingBox::new(10.0, 20.0, 8.0, 6.0);
        let c = BoundingBox::new(14.0, 10.0, 2.0, 4.0);
        assert_eq!(0.5 * (b + b), b);
        assert_eq!(1.0 * b, b);
        assert_eq!(0.5 * (b + c), BoundingBox::new(12.0, 15.0, 5.0, 5.0));
        assert_eq!(BoundingBox::from_vector(b.to_vector()), b);
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (-50.0..50.0f64, -50.0..50.0f64, 0.5..40.0f64, 0.5..40.0f64)
            .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, w, h))
    }

    proptest! {
        #[test]
        fn overlap_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let r = overlap_rate(&a, &b);
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert_eq!(r, overlap_rate(&b, &a));
            if a != b {
                prop_assert!(r < 1.0 || (a.left() == b.left() && a.right() == b.right()
                    && a.top() == b.top() && a.bottom() == b.bottom()));
            }
        }

        #[test]
        fn phi_linearity(a in arb_box(), b in arb_box(), k in -3.0..3.0f64) {
            let s = (a + b).to_vector();
            let m = (k * a).to_vector();
            for i in 0..4 {
                prop_assert_eq!(s[i], a.to_vector()[i] + b.to_vector()[i]);
                prop_assert_eq!(m[i], k * a.to_vector()[i]);
            }
        }
    }
}
