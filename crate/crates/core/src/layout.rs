//! Circular conversation layouts.
//!
//! The local user stands at the origin facing `+z` and sits at the bottom of
//! a circle of radius `R` centered at `(0, R)`. Remote avatars are spread
//! evenly along the upper arc. `radian_deg` is the angle the group subtends
//! at the local user, from the leftmost avatar to the rightmost one. Because
//! the local user is on the circle, that is an inscribed angle, so the
//! avatars cover a central arc of twice that size around the top point
//! `(0, 2R)`.
//!
//! Frame convention: `x` to the right, `z` forward, yaw measured from `+z`
//! toward `+x`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayoutError {
    #[error("remote user count must be at least 1")]
    InvalidCount,
    #[error("invalid placement: {0}")]
    InvalidPlacement(String),
    #[error("billboard position coincides with the viewer")]
    AtOrigin,
}

/// Non-fatal conditions surfaced alongside a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// Radian is zero with two or more avatars; they all coincide.
    DegenerateRadian,
    /// Requested FoV was outside the model range and was clamped.
    FovClamped { requested_deg: f64, used_deg: f64 },
    /// Occluder rig clips nothing.
    DegenerateOccluders,
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::DegenerateRadian => write!(f, "radian is 0: all avatars coincide"),
            Warning::FovClamped { requested_deg, used_deg } => {
                write!(f, "FoV {requested_deg}° is outside the model range, clamped to {used_deg}°")
            }
            Warning::DegenerateOccluders => {
                write!(f, "target equals device FoV: occluders have zero area")
            }
        }
    }
}

/// A conversation circle: spread angle at the local user and circle radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement<T> {
    pub radian_deg: T,
    pub radius_m: T,
    /// False for the single-avatar case, where no spread angle exists.
    #[serde(default = "yes")]
    pub radian_applicable: bool,
}

fn yes() -> bool {
    true
}

impl<T: Scalar> Placement<T> {
    pub fn new(radian_deg: T, radius_m: T) -> Result<Self, LayoutError> {
        let p = Self { radian_deg, radius_m, radian_applicable: true };
        p.validate()?;
        Ok(p)
    }

    /// Placement for a lone remote user: only the radius matters.
    pub fn single(radius_m: T) -> Result<Self, LayoutError> {
        let p = Self { radian_deg: T::zero(), radius_m, radian_applicable: false };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        if !(self.radius_m > T::zero() && self.radius_m.is_finite()) {
            return Err(LayoutError::InvalidPlacement(format!(
                "radius must be positive, got {}",
                self.radius_m
            )));
        }
        if !(self.radian_deg >= T::zero() && self.radian_deg < T::lit(180.0)) {
            return Err(LayoutError::InvalidPlacement(format!(
                "radian must lie in [0, 180), got {}",
                self.radian_deg
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvatarPose<T> {
    #[serde(rename = "x")]
    pub x_m: T,
    #[serde(rename = "z")]
    pub z_m: T,
    #[serde(rename = "yaw")]
    pub yaw_deg: T,
}

impl<T: Scalar> AvatarPose<T> {
    pub fn distance_to_origin(&self) -> T {
        self.x_m.hypot(self.z_m)
    }

    /// Unit facing vector `(x, z)` implied by the yaw.
    pub fn facing(&self) -> (T, T) {
        let r = self.yaw_deg.to_radians();
        (r.sin(), r.cos())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationLayout<T> {
    pub placement: Placement<T>,
    pub n_remote: usize,
    /// Leftmost first.
    pub poses: Vec<AvatarPose<T>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
}

impl<T: Scalar> ConversationLayout<T> {
    pub fn center(&self) -> (T, T) {
        (T::zero(), self.placement.radius_m)
    }

    /// Angle subtended at the local user between the leftmost and rightmost avatars.
    pub fn subtended_deg(&self) -> T {
        let (Some(l), Some(r)) = (self.poses.first(), self.poses.last()) else {
            return T::zero();
        };
        let a = l.x_m.atan2(l.z_m);
        let b = r.x_m.atan2(r.z_m);
        (b - a).abs().to_degrees()
    }

    pub fn adjacent_gaps(&self) -> Vec<T> {
        adjacent_gaps(self)
    }
}

/// Central offsets (degrees from the top of the circle), leftmost first.
pub fn central_offsets<T: Scalar>(radian_deg: T, n_remote: usize) -> Vec<T> {
    if n_remote <= 1 {
        return vec![T::zero(); n_remote];
    }
    let span = T::lit(2.0) * radian_deg;
    let last = T::from_usize_lossy(n_remote - 1);
    (0..n_remote).map(|i| span * (T::from_usize_lossy(i) / last - T::lit(0.5))).collect()
}

pub fn resolve_layout<T: Scalar>(
    placement: Placement<T>,
    n_remote: usize,
) -> Result<ConversationLayout<T>, LayoutError> {
    if n_remote == 0 {
        return Err(LayoutError::InvalidCount);
    }
    placement.validate()?;

    let placement = if n_remote == 1 {
        Placement { radian_deg: T::zero(), radian_applicable: false, ..placement }
    } else {
        placement
    };
    let r = placement.radius_m;

    let mut warnings = Vec::new();
    if n_remote >= 2 && placement.radian_deg == T::zero() {
        warnings.push(Warning::DegenerateRadian);
    }

    let poses = central_offsets(placement.radian_deg, n_remote)
        .into_iter()
        .map(|delta| {
            let d = delta.to_radians();
            let x = r * d.sin();
            let z = r + r * d.cos();
            let yaw_deg = billboard_yaw(x, z).expect("avatar poses lie in front of the user");
            AvatarPose { x_m: x, z_m: z, yaw_deg }
        })
        .collect();

    Ok(ConversationLayout { placement, n_remote, poses, warnings })
}

/// Chord from the local user to the point at central offset `δ` from the top
/// of the circle: `2R·cos(|δ|/2)`.
pub fn distance_to_local<T: Scalar>(placement: &Placement<T>, central_offset_deg: T) -> T {
    // cos(π/2) is not exactly zero in floating point.
    if central_offset_deg.abs() >= T::lit(180.0) {
        return T::zero();
    }
    let half = central_offset_deg.abs().to_radians() / T::lit(2.0);
    T::lit(2.0) * placement.radius_m * half.cos()
}

/// Interpersonal distances walking around the circle: local user to the
/// leftmost avatar, each avatar to the next, rightmost avatar back to the
/// local user.
pub fn adjacent_gaps<T: Scalar>(layout: &ConversationLayout<T>) -> Vec<T> {
    let origin = (T::zero(), T::zero());
    let ring: Vec<(T, T)> = std::iter::once(origin)
        .chain(layout.poses.iter().map(|p| (p.x_m, p.z_m)))
        .chain(std::iter::once(origin))
        .collect();
    ring.windows(2).map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1)).collect()
}

/// Yaw that turns a billboard at `(x, z)` to face the viewer at the origin.
/// Normalized to `(-180, 180]`.
pub fn billboard_yaw<T: Scalar>(x_m: T, z_m: T) -> Result<T, LayoutError> {
    let (fx, fz) = billboard_facing(x_m, z_m)?;
    let mut yaw = fx.atan2(fz).to_degrees();
    if yaw <= T::lit(-180.0) {
        yaw += T::lit(360.0);
    }
    Ok(yaw)
}

/// Unit vector pointing from `(x, z)` back at the origin.
pub fn billboard_facing<T: Scalar>(x_m: T, z_m: T) -> Result<(T, T), LayoutError> {
    let len = x_m.hypot(z_m);
    if len == T::zero() {
        return Err(LayoutError::AtOrigin);
    }
    // `0 - x` rather than `-x` keeps the straight-ahead case at +0.
    Ok(((T::zero() - x_m) / len, (T::zero() - z_m) / len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
        (a.0 - b.0).hypot(a.1 - b.1)
    }

    #[test]
    fn single_avatar_opposite_user() {
        let l = resolve_layout(Placement::new(35.0, 1.09).unwrap(), 1).unwrap();
        assert_eq!(l.poses.len(), 1);
        assert!(!l.placement.radian_applicable);
        assert_eq!(l.placement.radian_deg, 0.0);
        assert_abs_diff_eq!(l.poses[0].x_m, 0.0);
        assert_abs_diff_eq!(l.poses[0].z_m, 2.18, epsilon = 1e-12);
        let (fx, fz) = l.poses[0].facing();
        assert_abs_diff_eq!(fx, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fz, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_avatars_form_equilateral_triangle() {
        let l = resolve_layout(Placement::new(60.0, 1.0).unwrap(), 2).unwrap();
        let a = (l.poses[0].x_m, l.poses[0].z_m);
        let b = (l.poses[1].x_m, l.poses[1].z_m);
        assert_abs_diff_eq!(a.0, -0.75_f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(a.1, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(b.0, 0.75_f64.sqrt(), epsilon = 1e-12);
        let o = (0.0, 0.0);
        let side = 3.0_f64.sqrt();
        for d in [dist(o, a), dist(a, b), dist(b, o)] {
            assert_abs_diff_eq!(d, side, epsilon = 1e-9);
        }
        assert!(l.warnings.is_empty());
    }

    #[test]
    fn zero_radian_gathers_at_top() {
        let l = resolve_layout(Placement::new(0.0, 1.0).unwrap(), 3).unwrap();
        assert_eq!(l.warnings, vec![Warning::DegenerateRadian]);
        for p in &l.poses {
            assert_abs_diff_eq!(p.x_m, 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(p.z_m, 2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_count_rejected() {
        assert_eq!(resolve_layout(Placement::new(30.0, 1.0).unwrap(), 0), Err(LayoutError::InvalidCount));
    }

    #[test]
    fn placement_validation() {
        assert!(Placement::new(30.0, 0.0).is_err());
        assert!(Placement::new(180.0, 1.0).is_err());
        assert!(Placement::new(-1.0, 1.0).is_err());
        assert!(Placement::new(0.0, 1.0).is_ok());
    }

    #[test]
    fn chord_distances() {
        let p = Placement::new(10.0, 1.09).unwrap();
        assert_abs_diff_eq!(distance_to_local(&p, 0.0), 2.18, epsilon = 1e-12);
        let p = Placement::new(10.0, 1.0).unwrap();
        assert_abs_diff_eq!(distance_to_local(&p, 60.0), 3.0_f64.sqrt(), epsilon = 1e-12);
        assert_eq!(distance_to_local(&p, 180.0), 0.0);
        assert_eq!(distance_to_local(&p, -180.0), 0.0);
        // agrees with the Euclidean distance of the resolved pose
        let l = resolve_layout(Placement::new(60.0, 1.0).unwrap(), 2).unwrap();
        assert_abs_diff_eq!(distance_to_local(&p, 60.0), l.poses[1].distance_to_origin(), epsilon = 1e-12);
    }

    #[test]
    fn gaps() {
        let l = resolve_layout(Placement::single(0.53).unwrap(), 1).unwrap();
        let g = adjacent_gaps(&l);
        assert_eq!(g.len(), 2);
        assert_abs_diff_eq!(g[0], 1.06, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], 1.06, epsilon = 1e-12);

        let l = resolve_layout(Placement::new(60.0, 1.0).unwrap(), 2).unwrap();
        for g in adjacent_gaps(&l) {
            assert_abs_diff_eq!(g, 3.0_f64.sqrt(), epsilon = 1e-9);
        }

        let l = resolve_layout(Placement::new(0.0, 1.0).unwrap(), 2).unwrap();
        let g = adjacent_gaps(&l);
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[2], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn billboard() {
        let (fx, fz) = billboard_facing(0.0, 2.18).unwrap();
        assert_eq!((fx, fz), (0.0, -1.0));
        assert_eq!(billboard_yaw(0.0, 2.18).unwrap(), 180.0);

        let (fx, fz) = billboard_facing(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(fx, -std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-8);
        assert_abs_diff_eq!(fz, -std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-8);
        let (mx, mz) = billboard_facing(-1.0, 1.0).unwrap();
        assert_abs_diff_eq!(mx, -fx, epsilon = 1e-15);
        assert_abs_diff_eq!(mz, fz, epsilon = 1e-15);
        assert_abs_diff_eq!(billboard_yaw(1.0, 1.0).unwrap(), -135.0, epsilon = 1e-12);
        assert_abs_diff_eq!(billboard_yaw(-1.0, 1.0).unwrap(), 135.0, epsilon = 1e-12);

        assert_eq!(billboard_yaw(0.0, 0.0), Err(LayoutError::AtOrigin));
    }

    #[test]
    fn json_shape() {
        let l = resolve_layout(Placement::new(60.0, 1.0).unwrap(), 2).unwrap();
        let v = serde_json::to_value(&l).unwrap();
        assert_eq!(v["n_remote"], 2);
        assert!(v["poses"][0]["x"].is_number());
        assert!(v["poses"][0]["z"].is_number());
        assert!(v["poses"][0]["yaw"].is_number());
        assert_eq!(v["placement"]["radius_m"], 1.0);
        let back: ConversationLayout<f64> = serde_json::from_value(v).unwrap();
        assert_eq!(back, l);
    }

    #[test]
    fn single_precision_layout() {
        let l = resolve_layout(Placement::<f32>::new(60.0, 1.0).unwrap(), 2).unwrap();
        for g in adjacent_gaps(&l) {
            assert!((g - 3.0_f32.sqrt()).abs() < 1e-5);
        }
    }
}
