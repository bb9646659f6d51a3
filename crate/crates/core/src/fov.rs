//! Field-of-view decomposition and occluder rigs.
//!
//! A display's field of view is quoted as a diagonal angle plus an aspect
//! ratio. Under a planar pinhole projection the image window at unit depth is
//! a rectangle whose half-diagonal is `tan(d/2)`; its half-width and
//! half-height split that diagonal in the aspect ratio.
//!
//! An optical see-through headset renders black as transparent, so masking a
//! wide device down to a narrower target field of view only needs four black
//! rectangles placed in a near plane. [`occluder_layout`] computes them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{half_rad, Scalar};

/// Default distance of the occluder plane in front of the eye point, in meters.
pub const DEFAULT_OCCLUDER_DISTANCE_M: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FovError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("target diagonal {target}° exceeds device diagonal {device}°")]
    TargetExceedsDevice { target: f64, device: f64 },
    #[error("aspect ratio of target ({target}) differs from device ({device})")]
    AspectMismatch { target: String, device: String },
}

/// Display aspect ratio, e.g. `3:2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aspect<T> {
    pub w: T,
    pub h: T,
}

impl<T: Scalar> Aspect<T> {
    pub fn new(w: T, h: T) -> Result<Self, FovError> {
        if !(w > T::zero() && h > T::zero() && w.is_finite() && h.is_finite()) {
            return Err(FovError::InvalidInput(format!("aspect units must be positive, got {w}:{h}")));
        }
        Ok(Self { w, h })
    }

    pub fn ratio(&self) -> T {
        self.w / self.h
    }

    /// Same shape regardless of scale (`3:2` equals `6:4`).
    pub fn same_shape(&self, other: &Self) -> bool {
        let a = self.ratio();
        let b = other.ratio();
        (a - b).abs() <= T::lit(1e-12) * a.max(b)
    }
}

impl<T: Scalar> fmt::Display for Aspect<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.w, self.h)
    }
}

impl<T: Scalar> FromStr for Aspect<T> {
    type Err = FovError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || FovError::InvalidInput(format!("aspect must look like W:H, got {s:?}"));
        let (w, h) = s.split_once(':').ok_or_else(bad)?;
        let w: f64 = w.trim().parse().map_err(|_| bad())?;
        let h: f64 = h.trim().parse().map_err(|_| bad())?;
        Aspect::new(T::lit(w), T::lit(h))
    }
}

/// Diagonal field of view with its aspect ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldOfView<T> {
    pub diagonal_deg: T,
    pub aspect: Aspect<T>,
}

impl<T: Scalar> FieldOfView<T> {
    pub fn new(diagonal_deg: T, aspect: Aspect<T>) -> Result<Self, FovError> {
        // 180 is admitted as the unrestricted natural view used by the
        // models; it has no finite projection, so the occluder rig rejects it
        if !(diagonal_deg > T::zero() && diagonal_deg <= T::lit(180.0)) {
            return Err(FovError::InvalidInput(format!(
                "diagonal FoV must lie in (0, 180] degrees, got {diagonal_deg}"
            )));
        }
        Aspect::new(aspect.w, aspect.h)?;
        Ok(Self { diagonal_deg, aspect })
    }

    /// Convenience constructor from plain numbers.
    pub fn with_aspect(diagonal_deg: T, w: T, h: T) -> Result<Self, FovError> {
        Self::new(diagonal_deg, Aspect::new(w, h)?)
    }

    pub fn decompose(&self) -> DecomposedFov<T> {
        decompose_fov(self)
    }
}

/// Horizontal and vertical full angles of a rectangular field of view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecomposedFov<T> {
    pub horizontal_deg: T,
    pub vertical_deg: T,
}

impl<T: Scalar> DecomposedFov<T> {
    /// Diagonal angle recovered from `tan²(d/2) = tan²(h/2) + tan²(v/2)`.
    pub fn recompose_diagonal(&self) -> T {
        let th = half_rad(self.horizontal_deg).tan();
        let tv = half_rad(self.vertical_deg).tan();
        (th.hypot(tv).atan() * T::lit(2.0)).to_degrees()
    }
}

pub fn decompose_fov<T: Scalar>(fov: &FieldOfView<T>) -> DecomposedFov<T> {
    let two = T::lit(2.0);
    let t = half_rad(fov.diagonal_deg).tan();
    let norm = fov.aspect.w.hypot(fov.aspect.h);
    let th = t * fov.aspect.w / norm;
    let tv = t * fov.aspect.h / norm;
    DecomposedFov {
        horizontal_deg: (th.atan() * two).to_degrees(),
        vertical_deg: (tv.atan() * two).to_degrees(),
    }
}

/// Axis-aligned rectangle in the occluder plane, `x` right and `y` up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect<T> {
    pub center_x: T,
    pub center_y: T,
    pub half_width: T,
    pub half_height: T,
}

impl<T: Scalar> Rect<T> {
    fn from_bounds(x0: T, x1: T, y0: T, y1: T) -> Self {
        let two = T::lit(2.0);
        Self {
            center_x: (x0 + x1) / two,
            center_y: (y0 + y1) / two,
            half_width: (x1 - x0) / two,
            half_height: (y1 - y0) / two,
        }
    }

    pub fn area(&self) -> T {
        self.half_width * self.half_height * T::lit(4.0)
    }

    pub fn contains(&self, x: T, y: T) -> bool {
        (x - self.center_x).abs() <= self.half_width && (y - self.center_y).abs() <= self.half_height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Top,
    Bottom,
    Left,
    Right,
}

/// Where a point in the occluder plane falls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Clear,
    Occluded(Side),
    OutsideDevice,
}

/// Four black rectangles masking a device frustum down to a target window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccluderRig<T> {
    pub distance_m: T,
    pub clear_half_width_m: T,
    pub clear_half_height_m: T,
    pub device_half_width_m: T,
    pub device_half_height_m: T,
    pub top: Rect<T>,
    pub bottom: Rect<T>,
    pub left: Rect<T>,
    pub right: Rect<T>,
    /// Target equals device: every occluder has zero area.
    pub degenerate: bool,
}

impl<T: Scalar> OccluderRig<T> {
    pub fn occluders(&self) -> [(Side, &Rect<T>); 4] {
        [
            (Side::Top, &self.top),
            (Side::Bottom, &self.bottom),
            (Side::Left, &self.left),
            (Side::Right, &self.right),
        ]
    }

    /// Classifies a point of the occluder plane. Points on the window edge
    /// count as clear.
    pub fn classify(&self, x: T, y: T) -> Region {
        if x.abs() <= self.clear_half_width_m && y.abs() <= self.clear_half_height_m {
            return Region::Clear;
        }
        for (side, rect) in self.occluders() {
            if rect.contains(x, y) {
                return Region::Occluded(side);
            }
        }
        Region::OutsideDevice
    }

    /// Point where a ray from the eye at the given horizontal and vertical
    /// angles meets the occluder plane.
    pub fn ray_hit(&self, yaw_deg: T, pitch_deg: T) -> (T, T) {
        (self.distance_m * yaw_deg.to_radians().tan(), self.distance_m * pitch_deg.to_radians().tan())
    }
}

pub fn occluder_layout<T: Scalar>(
    device: &FieldOfView<T>,
    target: &FieldOfView<T>,
    distance_m: T,
) -> Result<OccluderRig<T>, FovError> {
    if !(distance_m > T::zero() && distance_m.is_finite()) {
        return Err(FovError::InvalidInput(format!("occluder distance must be positive, got {distance_m}")));
    }
    if device.diagonal_deg >= T::lit(180.0) {
        return Err(FovError::InvalidInput("a 180° device has no finite occluder plane".into()));
    }
    if !device.aspect.same_shape(&target.aspect) {
        return Err(FovError::AspectMismatch {
            target: target.aspect.to_string(),
            device: device.aspect.to_string(),
        });
    }
    if target.diagonal_deg > device.diagonal_deg {
        return Err(FovError::TargetExceedsDevice {
            target: target.diagonal_deg.to_f64_lossy(),
            device: device.diagonal_deg.to_f64_lossy(),
        });
    }

    let dev = device.decompose();
    let tgt = target.decompose();
    let cw = distance_m * half_rad(tgt.horizontal_deg).tan();
    let ch = distance_m * half_rad(tgt.vertical_deg).tan();
    let dw = distance_m * half_rad(dev.horizontal_deg).tan();
    let dh = distance_m * half_rad(dev.vertical_deg).tan();

    // Top and bottom span the full device width; left and right fill the
    // remaining band beside the window.
    let top = Rect::from_bounds(-dw, dw, ch, dh);
    let bottom = Rect::from_bounds(-dw, dw, -dh, -ch);
    let left = Rect::from_bounds(-dw, -cw, -ch, ch);
    let right = Rect::from_bounds(cw, dw, -ch, ch);

    Ok(OccluderRig {
        distance_m,
        clear_half_width_m: cw,
        clear_half_height_m: ch,
        device_half_width_m: dw,
        device_half_height_m: dh,
        top,
        bottom,
        left,
        right,
        degenerate: target.diagonal_deg == device.diagonal_deg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fov(d: f64, w: f64, h: f64) -> FieldOfView<f64> {
        FieldOfView::with_aspect(d, w, h).unwrap()
    }

    #[test]
    fn fifty_degrees_three_two() {
        let d = fov(50.0, 3.0, 2.0).decompose();
        assert_abs_diff_eq!(d.horizontal_deg, 42.4117, epsilon = 1e-4);
        assert_abs_diff_eq!(d.vertical_deg, 29.0047, epsilon = 1e-4);
        // two-decimal figures quoted for this headset
        assert_abs_diff_eq!(d.horizontal_deg, 42.41, epsilon = 1e-2);
        assert_abs_diff_eq!(d.vertical_deg, 29.01, epsilon = 1e-2);
        assert!(d.horizontal_deg > d.vertical_deg);
    }

    #[test]
    fn square_aspect_is_symmetric() {
        let d = fov(90.0, 1.0, 1.0).decompose();
        assert_abs_diff_eq!(d.horizontal_deg, d.vertical_deg, epsilon = 1e-12);
    }

    #[test]
    fn tall_aspect_swaps_order() {
        let d = fov(60.0, 9.0, 16.0).decompose();
        assert!(d.vertical_deg > d.horizontal_deg);
    }

    #[test]
    fn tiny_diagonal_goes_to_zero() {
        let d = fov(1e-9, 16.0, 9.0).decompose();
        assert!(d.horizontal_deg < 1e-9 && d.vertical_deg < 1e-9);
        assert!(d.horizontal_deg > 0.0 && d.vertical_deg > 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(FieldOfView::with_aspect(0.0, 3.0, 2.0).is_err());
        assert!(FieldOfView::with_aspect(180.1, 3.0, 2.0).is_err());
        let natural = FieldOfView::with_aspect(180.0, 3.0, 2.0).unwrap();
        let target = FieldOfView::with_aspect(50.0, 3.0, 2.0).unwrap();
        assert!(occluder_layout(&natural, &target, 0.3).is_err());
        assert!(FieldOfView::with_aspect(f64::NAN, 3.0, 2.0).is_err());
        assert!(FieldOfView::with_aspect(50.0, 0.0, 2.0).is_err());
        assert!(FieldOfView::with_aspect(50.0, 3.0, -2.0).is_err());
    }

    #[test]
    fn aspect_parsing() {
        let a: Aspect<f64> = "16:9".parse().unwrap();
        assert_eq!((a.w, a.h), (16.0, 9.0));
        assert!("16x9".parse::<Aspect<f64>>().is_err());
        assert!("0:9".parse::<Aspect<f64>>().is_err());
        assert!(a.same_shape(&"32:18".parse().unwrap()));
    }

    #[test]
    fn occluders_for_study_headset() {
        let rig = occluder_layout(&fov(110.0, 3.0, 2.0), &fov(50.0, 3.0, 2.0), 0.3).unwrap();
        assert_abs_diff_eq!(rig.clear_half_width_m, 0.1164, epsilon = 5e-5);
        assert_abs_diff_eq!(rig.clear_half_height_m, 0.0776, epsilon = 5e-5);
        assert!(!rig.degenerate);
        for (_, r) in rig.occluders() {
            assert!(r.area() > 0.0);
        }
        // Tiling: occluders plus window cover the device rectangle exactly.
        let total: f64 = rig.occluders().iter().map(|(_, r)| r.area()).sum::<f64>()
            + 4.0 * rig.clear_half_width_m * rig.clear_half_height_m;
        assert_abs_diff_eq!(total, 4.0 * rig.device_half_width_m * rig.device_half_height_m, epsilon = 1e-12);
    }

    #[test]
    fn identity_rig_is_degenerate() {
        let f = fov(50.0, 3.0, 2.0);
        let rig = occluder_layout(&f, &f, 0.3).unwrap();
        assert!(rig.degenerate);
        for (_, r) in rig.occluders() {
            assert_abs_diff_eq!(r.area(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn occluder_errors() {
        let err = occluder_layout(&fov(50.0, 3.0, 2.0), &fov(60.0, 3.0, 2.0), 0.3).unwrap_err();
        assert!(matches!(err, FovError::TargetExceedsDevice { .. }));
        let err = occluder_layout(&fov(110.0, 3.0, 2.0), &fov(50.0, 16.0, 9.0), 0.3).unwrap_err();
        assert!(matches!(err, FovError::AspectMismatch { .. }));
        let err = occluder_layout(&fov(110.0, 3.0, 2.0), &fov(50.0, 3.0, 2.0), 0.0).unwrap_err();
        assert!(matches!(err, FovError::InvalidInput(_)));
    }

    #[test]
    fn classify_regions() {
        let rig = occluder_layout(&fov(110.0, 3.0, 2.0), &fov(50.0, 3.0, 2.0), 0.3).unwrap();
        assert_eq!(rig.classify(0.0, 0.0), Region::Clear);
        assert_eq!(rig.classify(0.0, 0.2), Region::Occluded(Side::Top));
        assert_eq!(rig.classify(0.0, -0.2), Region::Occluded(Side::Bottom));
        assert_eq!(rig.classify(-0.2, 0.0), Region::Occluded(Side::Left));
        assert_eq!(rig.classify(0.2, 0.0), Region::Occluded(Side::Right));
        assert_eq!(rig.classify(5.0, 0.0), Region::OutsideDevice);
    }

    #[test]
    fn single_precision_decomposition() {
        let d = FieldOfView::<f32>::with_aspect(50.0, 3.0, 2.0).unwrap().decompose();
        assert!((d.horizontal_deg - 42.41).abs() < 1e-2);
        assert!((d.recompose_diagonal() - 50.0).abs() < 1e-3);
    }
}
