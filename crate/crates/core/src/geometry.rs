//! Axis-aligned box arithmetic.
//!
//! Boxes are stored in corner format `(x_min, y_min, x_max, y_max)` in
//! continuous pixel coordinates. Construction rejects empty or non-finite
//! boxes, so every area used as a denominator below is strictly positive.

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Largest magnitude allowed for the log-scale terms of a [`BoxDelta`] at
/// decode time.
pub const MAX_LOG_SCALE: f64 = 4.0;

/// An axis-aligned rectangle with strictly positive area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        let coords = [x_min, y_min, x_max, y_max];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite(coords));
        }
        // Strict comparison on the extents, not the coordinates: for very
        // large coordinates `x_max > x_min` can hold while the difference
        // still rounds to something the area cannot represent.
        let (w, h) = (x_max - x_min, y_max - y_min);
        if !(w > 0.0 && h > 0.0 && (w * h) > 0.0 && (w * h).is_finite()) {
            return Err(GeometryError::Degenerate(coords));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Builds a box from its center and size.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)
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

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn area(&self) -> f64 {
        area(self)
    }

    /// True when `other` lies entirely inside `self` (boundaries may touch).
    pub fn contains(&self, other: &BBox) -> bool {
        self.x_min <= other.x_min && self.y_min <= other.y_min && self.x_max >= other.x_max && self.y_max >= other.y_max
    }

    /// Clips the box to `[0, width] x [0, height]`. Returns `None` when
    /// nothing with positive area remains.
    pub fn clip(&self, width: f64, height: f64) -> Option<BBox> {
        BBox::new(
            self.x_min.max(0.0),
            self.y_min.max(0.0),
            self.x_max.min(width),
            self.y_max.min(height),
        )
        .ok()
    }

    /// Applies `x -> x * scale + shift` to every coordinate.
    pub fn affine(&self, scale: f64, shift_x: f64, shift_y: f64) -> Result<BBox, GeometryError> {
        BBox::new(
            self.x_min * scale + shift_x,
            self.y_min * scale + shift_y,
            self.x_max * scale + shift_x,
            self.y_max * scale + shift_y,
        )
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = GeometryError;

    fn try_from(c: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.corners()
    }
}

pub fn area(b: &BBox) -> f64 {
    (b.x_max - b.x_min) * (b.y_max - b.y_min)
}

pub fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let w = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let h = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if w <= 0.0 || h <= 0.0 {
        0.0
    } else {
        w * h
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection_area(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    inter / (area(a) + area(b) - inter)
}

/// Fraction of `target` covered by `region`.
pub fn inclusion_ratio(region: &BBox, target: &BBox) -> f64 {
    intersection_area(region, target) / area(target)
}

/// Tightest box covering both inputs.
pub fn enclose(a: &BBox, b: &BBox) -> BBox {
    BBox {
        x_min: a.x_min.min(b.x_min),
        y_min: a.y_min.min(b.y_min),
        x_max: a.x_max.max(b.x_max),
        y_max: a.y_max.max(b.y_max),
    }
}

/// Regression offsets of a box relative to an anchor.
///
/// `dx`, `dy` are center shifts in units of anchor width/height; `dw`, `dh`
/// are log size ratios.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoxDelta {
    pub dx: f64,
    pub dy: f64,
    pub dw: f64,
    pub dh: f64,
}

impl BoxDelta {
    pub fn to_array(self) -> [f64; 4] {
        [self.dx, self.dy, self.dw, self.dh]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            dx: a[0],
            dy: a[1],
            dw: a[2],
            dh: a[3],
        }
    }
}

pub fn encode_box(anchor: &BBox, gt: &BBox) -> BoxDelta {
    let (acx, acy) = anchor.center();
    let (gcx, gcy) = gt.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    BoxDelta {
        dx: (gcx - acx) / aw,
        dy: (gcy - acy) / ah,
        dw: (gt.width() / aw).ln(),
        dh: (gt.height() / ah).ln(),
    }
}

/// Inverse of [`encode_box`]. Log-scale terms are clamped to
/// `±MAX_LOG_SCALE` before exponentiation.
pub fn decode_box(anchor: &BBox, d: &BoxDelta) -> Result<BBox, GeometryError> {
    if !d.to_array().iter().all(|v| v.is_finite()) {
        return Err(GeometryError::NonFiniteDelta(d.to_array()));
    }
    let (acx, acy) = anchor.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    let cx = acx + d.dx * aw;
    let cy = acy + d.dy * ah;
    let w = aw * d.dw.clamp(-MAX_LOG_SCALE, MAX_LOG_SCALE).exp();
    let h = ah * d.dh.clamp(-MAX_LOG_SCALE, MAX_LOG_SCALE).exp();
    BBox::from_center(cx, cy, w, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn area_examples() {
        assert_eq!(area(&b(0.0, 0.0, 10.0, 10.0)), 100.0);
        assert_eq!(area(&b(0.0, 0.0, 1.0, 1.0)), 1.0);
        assert_eq!(area(&b(2.5, 3.0, 4.0, 7.0)), 6.0);
    }

    #[test]
    fn rejects_degenerate_and_non_finite() {
        assert!(BBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, 1.0, -1.0).is_err());
        assert!(BBox::new(0.0, f64::NAN, 1.0, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::INFINITY, 1.0).is_err());
        assert!(BBox::try_from([1.0, 1.0, 0.5, 2.0]).is_err());
    }

    #[test]
    fn intersection_examples() {
        assert_eq!(intersection_area(&b(0.0, 0.0, 2.0, 2.0), &b(1.0, 1.0, 3.0, 3.0)), 1.0);
        assert_eq!(intersection_area(&b(0.0, 0.0, 1.0, 1.0), &b(5.0, 5.0, 6.0, 6.0)), 0.0);
        let a = b(0.3, 0.7, 9.1, 4.2);
        assert_eq!(intersection_area(&a, &a), area(&a));
        // edge-touching boxes do not intersect
        assert_eq!(intersection_area(&b(0.0, 0.0, 1.0, 1.0), &b(1.0, 0.0, 2.0, 1.0)), 0.0);
    }

    #[test]
    fn iou_examples() {
        let a = b(1.0, 2.0, 5.0, 9.0);
        assert_eq!(iou(&a, &a), 1.0);
        let v = iou(&b(0.0, 0.0, 2.0, 2.0), &b(1.0, 1.0, 3.0, 3.0));
        assert!((v - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(iou(&b(0.0, 0.0, 1.0, 1.0), &b(5.0, 5.0, 6.0, 6.0)), 0.0);
    }

    #[test]
    fn inclusion_examples() {
        let target = b(20.0, 0.0, 30.0, 10.0);
        assert_eq!(inclusion_ratio(&b(0.0, 0.0, 40.0, 10.0), &target), 1.0);
        assert!((inclusion_ratio(&b(0.0, 0.0, 24.0, 10.0), &target) - 0.4).abs() < 1e-15);
        assert_eq!(inclusion_ratio(&b(0.0, 0.0, 5.0, 5.0), &target), 0.0);
    }

    #[test]
    fn enclose_examples() {
        assert_eq!(
            enclose(&b(0.0, 0.0, 10.0, 10.0), &b(20.0, 0.0, 30.0, 10.0)),
            b(0.0, 0.0, 30.0, 10.0)
        );
        let a = b(1.0, 2.0, 3.0, 4.0);
        assert_eq!(enclose(&a, &a), a);
        assert_eq!(enclose(&a, &b(0.0, 5.0, 2.0, 9.0)), b(0.0, 2.0, 3.0, 9.0));
    }

    #[test]
    fn encode_decode_identity() {
        let a = b(3.0, 4.0, 19.0, 12.0);
        assert_eq!(encode_box(&a, &a), BoxDelta::default());
        assert_eq!(decode_box(&a, &BoxDelta::default()).unwrap(), a);
    }

    #[test]
    fn decode_rejects_non_finite_and_clamps_scale() {
        let a = b(0.0, 0.0, 10.0, 10.0);
        let bad = BoxDelta {
            dw: f64::NAN,
            ..Default::default()
        };
        assert!(decode_box(&a, &bad).is_err());
        let huge = BoxDelta {
            dw: 50.0,
            dh: -50.0,
            ..Default::default()
        };
        let d = decode_box(&a, &huge).unwrap();
        assert!((d.width() - 10.0 * 4f64.exp()).abs() < 1e-9);
        assert!((d.height() - 10.0 * (-4f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn serde_uses_corner_array() {
        let a = b(1.0, 2.5, 3.0, 4.0);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, "[1.0,2.5,3.0,4.0]");
        assert_eq!(serde_json::from_str::<BBox>(&s).unwrap(), a);
        assert!(serde_json::from_str::<BBox>("[1.0,2.0,1.0,4.0]").is_err());
    }
}
