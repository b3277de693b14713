use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in normalized image coordinates, `y` growing downward.
///
/// Serialized as `[x_min, y_min, x_max, y_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        BoundingBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.coords()
    }
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        let valid = [x_min, y_min, x_max, y_max].into_iter().all(in_unit)
            && x_min < x_max
            && y_min < y_max;
        if !valid {
            return Err(Error::InvalidBox {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// All four edges of `inner` lie strictly inside `self`.
    pub fn strictly_contains(&self, inner: &BoundingBox) -> bool {
        self.x_min < inner.x_min
            && self.y_min < inner.y_min
            && inner.x_max < self.x_max
            && inner.y_max < self.y_max
    }

    pub fn center_distance(&self, other: &BoundingBox) -> f64 {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        (ax - bx).hypot(ay - by)
    }
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// The 12 relation labels, numbered 1..=12.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
#[repr(u8)]
pub enum RelationType {
    Inside = 1,
    Surrounding = 2,
    RightOf = 3,
    LeftOf = 4,
    Under = 5,
    Above = 6,
    TopRight = 7,
    BottomRight = 8,
    TopLeft = 9,
    BottomLeft = 10,
    Overlap = 11,
    SelfRel = 12,
}

impl RelationType {
    pub const ALL: [RelationType; 12] = [
        RelationType::Inside,
        RelationType::Surrounding,
        RelationType::RightOf,
        RelationType::LeftOf,
        RelationType::Under,
        RelationType::Above,
        RelationType::TopRight,
        RelationType::BottomRight,
        RelationType::TopLeft,
        RelationType::BottomLeft,
        RelationType::Overlap,
        RelationType::SelfRel,
    ];

    pub fn label(self) -> u8 {
        self as u8
    }

    pub fn from_label(label: u8) -> Option<Self> {
        label
            .checked_sub(1)
            .and_then(|i| Self::ALL.get(i as usize).copied())
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationType::Inside => "inside",
            RelationType::Surrounding => "surrounding",
            RelationType::RightOf => "right_of",
            RelationType::LeftOf => "left_of",
            RelationType::Under => "under",
            RelationType::Above => "above",
            RelationType::TopRight => "top_right",
            RelationType::BottomRight => "bottom_right",
            RelationType::TopLeft => "top_left",
            RelationType::BottomLeft => "bottom_left",
            RelationType::Overlap => "overlap",
            RelationType::SelfRel => "self",
        }
    }
}

impl TryFrom<u8> for RelationType {
    type Error = String;

    fn try_from(label: u8) -> std::result::Result<Self, String> {
        RelationType::from_label(label).ok_or_else(|| format!("relation label {label} not in 1..=12"))
    }
}

impl From<RelationType> for u8 {
    fn from(r: RelationType) -> u8 {
        r.label()
    }
}

/// tan(22.5°); separates axis-aligned octants from diagonal ones.
const TAN_22_5: f64 = std::f64::consts::SQRT_2 - 1.0;

/// Relation between `src` and `dst`.
///
/// Containment reads as "src surrounds dst" (or "src inside dst"); for
/// disjoint boxes the direction is that of `dst`'s center seen from `src`'s
/// center, split into eight 45° sectors centered on the axes. Boundary
/// directions resolve to the axis-aligned relation.
pub fn classify_relation(src: &BoundingBox, dst: &BoundingBox, same_entity: bool) -> RelationType {
    if same_entity {
        return RelationType::SelfRel;
    }
    if src.strictly_contains(dst) {
        return RelationType::Surrounding;
    }
    if dst.strictly_contains(src) {
        return RelationType::Inside;
    }
    if src.intersection_area(dst) > 0.0 {
        return RelationType::Overlap;
    }
    let (sx, sy) = src.center();
    let (dx, dy) = dst.center();
    let (vx, vy) = (dx - sx, dy - sy);
    if vy.abs() <= TAN_22_5 * vx.abs() {
        if vx > 0.0 {
            RelationType::RightOf
        } else {
            RelationType::LeftOf
        }
    } else if vx.abs() <= TAN_22_5 * vy.abs() {
        if vy > 0.0 {
            RelationType::Under
        } else {
            RelationType::Above
        }
    } else {
        match (vx > 0.0, vy > 0.0) {
            (true, true) => RelationType::BottomRight,
            (true, false) => RelationType::TopRight,
            (false, true) => RelationType::BottomLeft,
            (false, false) => RelationType::TopLeft,
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    /// Fraction of grid cell centers covered, standing in for exact areas.
    fn raster_iou(a: &BoundingBox, b: &BoundingBox, n: usize) -> f64 {
        let inside = |bx: &BoundingBox, x: f64, y: f64| {
            x > bx.x_min() && x < bx.x_max() && y > bx.y_min() && y < bx.y_max()
        };
        let (mut inter, mut union) = (0usize, 0usize);
        for i in 0..n {
            for j in 0..n {
                let (x, y) = ((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
                let (ia, ib) = (inside(a, x, y), inside(b, x, y));
                inter += (ia && ib) as usize;
                union += (ia || ib) as usize;
            }
        }
        inter as f64 / union as f64
    }

    #[test]
    fn box_validation() {
        assert!(BoundingBox::new(0.2, 0.2, 0.1, 0.3).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 1.1, 0.3).is_err());
        assert!(BoundingBox::new(0.1, 0.1, 0.1, 0.3).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 1.0, 1.0).is_ok());
        assert!(serde_json::from_str::<BoundingBox>("[0.5, 0.1, 0.2, 0.3]").is_err());
    }

    #[test]
    fn iou_examples() {
        let a = bb(0.0, 0.0, 0.2, 0.2);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(0.5, 0.5, 0.6, 0.6)), 0.0);
        let b = bb(0.1, 0.1, 0.3, 0.3);
        let raster = raster_iou(&a, &b, 1000);
        assert!((raster - 1.0 / 7.0).abs() < 1e-3, "raster {raster}");
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-9);
    }

    #[test]
    fn relation_labels_are_a_bijection() {
        let labels: Vec<u8> = RelationType::ALL.iter().map(|r| r.label()).collect();
        assert_eq!(labels, (1..=12).collect::<Vec<u8>>());
        for r in RelationType::ALL {
            assert_eq!(RelationType::from_label(r.label()), Some(r));
        }
        assert_eq!(RelationType::from_label(0), None);
        assert_eq!(RelationType::from_label(13), None);
    }

    #[test]
    fn classify_examples() {
        let a = bb(0.0, 0.0, 0.1, 0.1);
        assert_eq!(classify_relation(&a, &a, true), RelationType::SelfRel);
        let outer = bb(0.0, 0.0, 1.0, 1.0);
        let inner = bb(0.2, 0.2, 0.4, 0.4);
        assert_eq!(classify_relation(&outer, &inner, false), RelationType::Surrounding);
        assert_eq!(classify_relation(&inner, &outer, false), RelationType::Inside);
        assert_eq!(classify_relation(&a, &bb(0.5, 0.0, 0.6, 0.1), false), RelationType::RightOf);
        assert_eq!(classify_relation(&a, &bb(0.5, 0.5, 0.6, 0.6), false), RelationType::BottomRight);
        assert_eq!(classify_relation(&a, &bb(0.0, 0.5, 0.1, 0.6), false), RelationType::Under);
        assert_eq!(classify_relation(&bb(0.0, 0.5, 0.1, 0.6), &a, false), RelationType::Above);
        // Equal boxes on different entities: neither strictly contains the other.
        assert_eq!(classify_relation(&a, &a, false), RelationType::Overlap);
        // Shared edge without strict containment.
        assert_eq!(classify_relation(&outer, &bb(0.0, 0.2, 0.5, 0.5), false), RelationType::Overlap);
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0..0.9f64, 0.0..0.9f64, 0.01..0.5f64, 0.01..0.5f64).prop_map(|(x, y, w, h)| {
            bb(x, y, (x + w).min(1.0), (y + h).min(1.0))
        })
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let (ab, ba) = (iou(&a, &b), iou(&b, &a));
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn disjoint_relations_are_antisymmetric(a in arb_box(), b in arb_box()) {
            use RelationType::*;
            prop_assume!(a.intersection_area(&b) == 0.0);
            let (ab, ba) = (classify_relation(&a, &b, false), classify_relation(&b, &a, false));
            let mirror = |r| match r {
                RightOf => LeftOf, LeftOf => RightOf, Above => Under, Under => Above,
                TopRight => BottomLeft, BottomLeft => TopRight,
                TopLeft => BottomRight, BottomRight => TopLeft, other => other,
            };
            prop_assert_eq!(ba, mirror(ab));
        }

        #[test]
        fn containment_duality(outer in arb_box(), fx in 0.05..0.45f64, fy in 0.05..0.45f64) {
            let inner = bb(
                outer.x_min() + fx * outer.width(),
                outer.y_min() + fy * outer.height(),
                outer.x_max() - fx * outer.width(),
                outer.y_max() - fy * outer.height(),
            );
            prop_assume!(outer.strictly_contains(&inner));
            prop_assert_eq!(classify_relation(&outer, &inner, false), RelationType::Surrounding);
            prop_assert_eq!(classify_relation(&inner, &outer, false), RelationType::Inside);
        }
    }
}
