use huddle::fov::DEFAULT_OCCLUDER_DISTANCE_M;
use huddle::{decompose_fov, occluder_layout, FieldOfView, FieldOfViewF32, Region, Side};
use proptest::prelude::*;

/// Horizontal and vertical FoV from the corner ray on the unit sphere.
fn ray_cast(diag: f64, w: f64, h: f64) -> (f64, f64) {
    let half = (diag / 2.0).to_radians();
    let phi = h.atan2(w);
    let (x, y, z) = (half.sin() * phi.cos(), half.sin() * phi.sin(), half.cos());
    (2.0 * x.atan2(z).to_degrees(), 2.0 * y.atan2(z).to_degrees())
}

proptest! {
    #[test]
    fn decomposition_matches_ray_cast(diag in 0.5..179.5f64, w in 0.2..5.0f64, h in 0.2..5.0f64) {
        let d = decompose_fov(&FieldOfView::with_aspect(diag, w, h).unwrap());
        let (rh, rv) = ray_cast(diag, w, h);
        prop_assert!((d.horizontal_deg - rh).abs() < 1e-9);
        prop_assert!((d.vertical_deg - rv).abs() < 1e-9);
        prop_assert!((d.recompose_diagonal() - diag).abs() < 1e-9);
        prop_assert!(d.horizontal_deg <= diag && d.vertical_deg <= diag);
    }

    #[test]
    fn single_precision_tracks_double(diag in 5.0..170.0f32, w in 1.0..3.0f32, h in 1.0..3.0f32) {
        let d32 = FieldOfViewF32::with_aspect(diag, w, h).unwrap().decompose();
        let (rh, rv) = ray_cast(f64::from(diag), f64::from(w), f64::from(h));
        prop_assert!((f64::from(d32.horizontal_deg) - rh).abs() < 1e-3);
        prop_assert!((f64::from(d32.vertical_deg) - rv).abs() < 1e-3);
    }

    #[test]
    fn occluder_boundary_rays(
        dev in 30.0..160.0f64,
        frac in 0.05..1.0f64,
        w in 1.0..3.0f64,
        h in 1.0..3.0f64,
    ) {
        let tgt = dev * frac;
        let device = FieldOfView::with_aspect(dev, w, h).unwrap();
        let target = FieldOfView::with_aspect(tgt, w, h).unwrap();
        let rig = occluder_layout(&device, &target, DEFAULT_OCCLUDER_DISTANCE_M).unwrap();
        let (th, tv) = ray_cast(tgt, w, h);
        let (dh, dv) = ray_cast(dev, w, h);

        let (x, _) = rig.ray_hit(th / 2.0, 0.0);
        let (_, y) = rig.ray_hit(0.0, tv / 2.0);
        prop_assert!((x - rig.clear_half_width_m).abs() < 1e-6);
        prop_assert!((y - rig.clear_half_height_m).abs() < 1e-6);
        let (xd, _) = rig.ray_hit(dh / 2.0, 0.0);
        let (_, yd) = rig.ray_hit(0.0, dv / 2.0);
        prop_assert!((xd - rig.device_half_width_m).abs() < 1e-6);
        prop_assert!((yd - rig.device_half_height_m).abs() < 1e-6);

        // occluders tile the band between window and device edge
        prop_assert!((rig.top.center_y - rig.top.half_height - rig.clear_half_height_m).abs() < 1e-12);
        prop_assert!((rig.top.center_y + rig.top.half_height - rig.device_half_height_m).abs() < 1e-12);
        prop_assert!((rig.right.center_x - rig.right.half_width - rig.clear_half_width_m).abs() < 1e-12);

        let eps = 1e-7;
        prop_assert_eq!(rig.classify(x - eps, 0.0), Region::Clear);
        if frac < 0.999 {
            prop_assert_eq!(rig.classify(x + eps, 0.0), Region::Occluded(Side::Right));
            prop_assert_eq!(rig.classify(-x - eps, 0.0), Region::Occluded(Side::Left));
            prop_assert_eq!(rig.classify(0.0, y + eps), Region::Occluded(Side::Top));
            prop_assert_eq!(rig.classify(0.0, -y - eps), Region::Occluded(Side::Bottom));
        }
        prop_assert_eq!(rig.classify(xd + eps, 0.0), Region::OutsideDevice);

        // occluded area plus window equals the device rectangle
        let occluded: f64 = rig.occluders().iter().map(|(_, r)| r.area()).sum();
        let window = 4.0 * rig.clear_half_width_m * rig.clear_half_height_m;
        let device_area = 4.0 * rig.device_half_width_m * rig.device_half_height_m;
        prop_assert!((occluded + window - device_area).abs() < 1e-9 * device_area.max(1.0));
    }
}

#[test]
fn quoted_rig_half_window() {
    let device = FieldOfView::with_aspect(110.0, 3.0, 2.0).unwrap();
    let target = FieldOfView::with_aspect(50.0, 3.0, 2.0).unwrap();
    let rig = occluder_layout(&device, &target, 0.3).unwrap();
    assert!((rig.clear_half_width_m - 0.1164).abs() < 5e-5);
    assert!((rig.clear_half_height_m - 0.0776).abs() < 5e-5);
}
