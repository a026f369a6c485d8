//! Integer screen geometry: element bounding boxes and screen sizes.
//!
//! Coordinates are pixels with the origin at the top-left corner. All
//! rounding is floor, so the centre of `[273,84][324,180]` is `(298,132)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Axis-aligned box `[x1,y1][x2,y2]` with `x1 <= x2` and `y1 <= y2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct BoundingBox {
    x1: i32,
    y1: i32,
    x2: i32,
    y2: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeometryError {
    #[error("inverted box [{0},{1}][{2},{3}]")]
    Inverted(i32, i32, i32, i32),
    #[error("bounds {0:?} do not match \"[x1,y1][x2,y2]\"")]
    BadBounds(String),
    #[error("screen size must be positive, got {0}x{1}")]
    EmptyScreen(u32, u32),
}

impl BoundingBox {
    /// The canonical "no element" box used by `Complete` actions.
    pub const ZERO: BoundingBox = BoundingBox { x1: 0, y1: 0, x2: 0, y2: 0 };

    pub fn new(x1: i32, y1: i32, x2: i32, y2: i32) -> Result<Self, GeometryError> {
        if x1 > x2 || y1 > y2 {
            return Err(GeometryError::Inverted(x1, y1, x2, y2));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> i32 {
        self.x1
    }
    pub fn y1(&self) -> i32 {
        self.y1
    }
    pub fn x2(&self) -> i32 {
        self.x2
    }
    pub fn y2(&self) -> i32 {
        self.y2
    }

    pub fn width(&self) -> i32 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> i32 {
        self.y2 - self.y1
    }

    pub fn corners(&self) -> [i32; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// Midpoint, floored on each axis.
    pub fn center(&self) -> (i32, i32) {
        (
            (self.x1 + self.x2).div_euclid(2),
            (self.y1 + self.y2).div_euclid(2),
        )
    }

    /// True iff the closed rectangles share at least one point.
    pub fn intersects(&self, other: &BoundingBox) -> bool {
        self.x1 <= other.x2 && other.x1 <= self.x2 && self.y1 <= other.y2 && other.y1 <= self.y2
    }

    pub fn contains_point(&self, (x, y): (i32, i32)) -> bool {
        self.x1 <= x && x <= self.x2 && self.y1 <= y && y <= self.y2
    }

    /// Moves every edge outward by `frac` of the screen extent on that axis,
    /// floors, then clamps to the screen.
    pub fn expand(&self, screen: ScreenSize, frac: f64) -> BoundingBox {
        let dx = frac * f64::from(screen.width);
        let dy = frac * f64::from(screen.height);
        let w = screen.width as i32;
        let h = screen.height as i32;
        let x1 = (f64::from(self.x1) - dx).floor() as i32;
        let y1 = (f64::from(self.y1) - dy).floor() as i32;
        let x2 = (f64::from(self.x2) + dx).floor() as i32;
        let y2 = (f64::from(self.y2) + dy).floor() as i32;
        BoundingBox {
            x1: x1.clamp(0, w),
            y1: y1.clamp(0, h),
            x2: x2.clamp(0, w),
            y2: y2.clamp(0, h),
        }
        .normalized()
    }

    /// Clamps every coordinate into the screen rectangle.
    pub fn clamp_to(&self, screen: ScreenSize) -> BoundingBox {
        let w = screen.width as i32;
        let h = screen.height as i32;
        BoundingBox {
            x1: self.x1.clamp(0, w),
            y1: self.y1.clamp(0, h),
            x2: self.x2.clamp(0, w),
            y2: self.y2.clamp(0, h),
        }
    }

    pub fn translate(&self, dx: i32, dy: i32) -> BoundingBox {
        BoundingBox {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }

    fn normalized(self) -> BoundingBox {
        // A box lying entirely off-screen can clamp to an inverted pair only if
        // it was inverted to begin with; keep the invariant regardless.
        BoundingBox {
            x1: self.x1.min(self.x2),
            y1: self.y1.min(self.y2),
            x2: self.x1.max(self.x2),
            y2: self.y1.max(self.y2),
        }
    }
}

/// Free-function form of [`BoundingBox::center`].
pub fn bbox_center(b: &BoundingBox) -> (i32, i32) {
    b.center()
}

pub fn bbox_intersects(a: &BoundingBox, b: &BoundingBox) -> bool {
    a.intersects(b)
}

pub fn bbox_expand(b: &BoundingBox, screen: ScreenSize, frac: f64) -> BoundingBox {
    b.expand(screen, frac)
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}][{},{}]", self.x1, self.y1, self.x2, self.y2)
    }
}

impl FromStr for BoundingBox {
    type Err = GeometryError;

    /// Parses the UIAutomator form `[x1,y1][x2,y2]`. Whitespace around numbers
    /// is tolerated; anything else is rejected.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GeometryError::BadBounds(s.to_string());
        let rest = s.trim().strip_prefix('[').ok_or_else(bad)?;
        let (first, rest) = rest.split_once("][").ok_or_else(bad)?;
        let second = rest.strip_suffix(']').ok_or_else(bad)?;
        let pair = |p: &str| -> Result<(i32, i32), GeometryError> {
            let (a, b) = p.split_once(',').ok_or_else(bad)?;
            let a = a.trim().parse::<i32>().map_err(|_| bad())?;
            let b = b.trim().parse::<i32>().map_err(|_| bad())?;
            Ok((a, b))
        };
        let (x1, y1) = pair(first)?;
        let (x2, y2) = pair(second)?;
        BoundingBox::new(x1, y1, x2, y2)
    }
}

impl Serialize for BoundingBox {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.corners().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BoundingBox {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [x1, y1, x2, y2] = <[i32; 4]>::deserialize(deserializer)?;
        BoundingBox::new(x1, y1, x2, y2).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ScreenSize {
    pub width: u32,
    pub height: u32,
}

impl ScreenSize {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::EmptyScreen(width, height));
        }
        Ok(Self { width, height })
    }

    pub fn bounds(&self) -> BoundingBox {
        BoundingBox {
            x1: 0,
            y1: 0,
            x2: self.width as i32,
            y2: self.height as i32,
        }
    }
}

impl Default for ScreenSize {
    fn default() -> Self {
        Self { width: 720, height: 1280 }
    }
}

impl<'de> Deserialize<'de> for ScreenSize {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            width: u32,
            height: u32,
        }
        let raw = Raw::deserialize(deserializer)?;
        ScreenSize::new(raw.width, raw.height).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x1: i32, y1: i32, x2: i32, y2: i32) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn center_examples() {
        assert_eq!(b(273, 84, 324, 180).center(), (298, 132));
        assert_eq!(b(0, 528, 720, 960).center(), (360, 744));
        assert_eq!(BoundingBox::ZERO.center(), (0, 0));
    }

    #[test]
    fn intersects_examples() {
        assert!(b(0, 0, 10, 10).intersects(&b(10, 10, 20, 20)));
        assert!(!b(0, 0, 10, 10).intersects(&b(11, 0, 20, 10)));
        assert!(b(0, 0, 10, 10).intersects(&b(0, 0, 10, 10)));
    }

    #[test]
    fn expand_examples() {
        let screen = ScreenSize::new(720, 1280).unwrap();
        assert_eq!(b(100, 100, 200, 200).expand(screen, 0.0), b(100, 100, 200, 200));
        // 200 + 0.14*720 = 300.8 -> 300; 200 + 0.14*1280 = 379.2 -> 379
        assert_eq!(b(100, 100, 200, 200).expand(screen, 0.14), b(0, 0, 300, 379));
        assert_eq!(b(0, 0, 720, 1280).expand(screen, 0.14), b(0, 0, 720, 1280));
    }

    #[test]
    fn parse_bounds() {
        assert_eq!("[231,72][555,168]".parse::<BoundingBox>().unwrap(), b(231, 72, 555, 168));
        assert_eq!(" [0, 528][720, 960] ".parse::<BoundingBox>().unwrap(), b(0, 528, 720, 960));
        for bad in ["", "[1,2]", "[1,2][3]", "[a,2][3,4]", "(1,2)(3,4)", "[5,5][1,1]"] {
            assert!(bad.parse::<BoundingBox>().is_err(), "{bad}");
        }
    }

    #[test]
    fn rejects_inverted_and_empty_screen() {
        assert!(BoundingBox::new(5, 0, 4, 1).is_err());
        assert!(ScreenSize::new(0, 10).is_err());
        assert!(serde_json::from_str::<BoundingBox>("[3,3,1,1]").is_err());
        assert!(serde_json::from_str::<ScreenSize>(r#"{"width":0,"height":1}"#).is_err());
    }

    fn any_box() -> impl Strategy<Value = BoundingBox> {
        (0..2000i32, 0..2000i32, 0..2000i32, 0..2000i32)
            .prop_map(|(a, b, c, d)| BoundingBox::new(a.min(c), b.min(d), a.max(c), b.max(d)).unwrap())
    }

    proptest! {
        #[test]
        fn center_commutes_with_translation(bx in any_box(), dx in -500..500i32, dy in -500..500i32) {
            let (cx, cy) = bx.center();
            prop_assert_eq!(bx.translate(dx, dy).center(), (cx + dx, cy + dy));
        }

        #[test]
        fn expand_by_zero_is_identity_on_screen(bx in any_box()) {
            let screen = ScreenSize::new(2000, 2000).unwrap();
            prop_assert_eq!(bx.expand(screen, 0.0), bx);
        }

        #[test]
        fn intersects_symmetric_and_reflexive(a in any_box(), c in any_box()) {
            prop_assert!(a.intersects(&a));
            prop_assert_eq!(a.intersects(&c), c.intersects(&a));
        }

        #[test]
        fn expanded_box_contains_original(bx in any_box(), frac in 0.0..1.0f64) {
            let screen = ScreenSize::new(2000, 2000).unwrap();
            let e = bx.expand(screen, frac);
            prop_assert!(e.x1() <= bx.x1() && e.y1() <= bx.y1());
            prop_assert!(e.x2() >= bx.x2() && e.y2() >= bx.y2());
        }
    }
}
