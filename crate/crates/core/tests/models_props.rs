use huddle::models::{MODEL_FOV_MAX_DEG, MODEL_FOV_MIN_DEG};
use huddle::{layout_for, FieldOfView, ModelError, ModelTable, ModelTableF32, SourcePolicy, Target, Warning};
use proptest::prelude::*;

#[test]
fn builtin_models_are_monotone_over_their_range() {
    let t = ModelTable::builtin();
    for m in t.iter() {
        let signs: Vec<f64> = (0..=1700).map(|i| m.derivative(10.0 + i as f64 * 0.1)).collect();
        assert!(
            signs.iter().all(|d| *d >= 0.0) || signs.iter().all(|d| *d <= 0.0),
            "{:?} {}-RU not monotone",
            m.target,
            m.scenario
        );
    }
    // radian widens and radius shrinks as the FoV grows
    for n in 2..=4 {
        assert!(t.get(Target::Radian, n).unwrap().derivative(90.0) > 0.0);
    }
    for n in 1..=4 {
        assert!(t.get(Target::Radius, n).unwrap().derivative(90.0) < 0.0);
    }
}

#[test]
fn model_json_round_trips() {
    let t = ModelTable::builtin();
    let json = serde_json::to_string(&t.to_file()).unwrap();
    let back: huddle::ModelFile = serde_json::from_str(&json).unwrap();
    assert_eq!(ModelTable::from_models(back.models).unwrap(), t);
    let bad = json.replace("\"scenario\"", "\"scenery\"");
    assert!(serde_json::from_str::<huddle::ModelFile>(&bad).is_err());
}

#[test]
fn pilot_policy() {
    let t = ModelTable::builtin();
    let fov = FieldOfView::with_aspect(45.0, 16.0, 9.0).unwrap();
    assert_eq!(layout_for(&t, &fov, 2, SourcePolicy::Pilot), Err(ModelError::NotTabulated(45.0)));
    let r = layout_for(&t, &fov, 2, SourcePolicy::PilotOverride).unwrap();
    assert_eq!(r.source, huddle::PlacementSource::Model);
}

proptest! {
    #[test]
    fn aspect_does_not_change_predictions(fov in 10.0..180.0f64, w in 1.0..3.0f64, h in 1.0..3.0f64, n in 1usize..=4) {
        let t = ModelTable::builtin();
        let a = layout_for(&t, &FieldOfView::with_aspect(fov, w, h).unwrap(), n, SourcePolicy::Model).unwrap();
        let b = layout_for(&t, &FieldOfView::with_aspect(fov, 3.0, 2.0).unwrap(), n, SourcePolicy::Model).unwrap();
        prop_assert_eq!(a.layout, b.layout);
    }

    #[test]
    fn out_of_range_fov_is_clamped_and_flagged(fov in 0.01..10.0f64, n in 1usize..=4) {
        let t = ModelTable::builtin();
        let p = t.predict(fov, n).unwrap();
        prop_assert_eq!(p.clamped_to, Some(MODEL_FOV_MIN_DEG));
        prop_assert_eq!(p.placement, t.predict(MODEL_FOV_MIN_DEG, n).unwrap().placement);
        let r = layout_for(&t, &FieldOfView::with_aspect(fov, 3.0, 2.0).unwrap(), n, SourcePolicy::Model).unwrap();
        let clamped = matches!(r.layout.warnings[0], Warning::FovClamped { .. });
        prop_assert!(clamped);
        prop_assert!(t.predict(MODEL_FOV_MAX_DEG, n).unwrap().clamped_to.is_none());
    }

    #[test]
    fn single_and_double_precision_agree(fov in 10.0..180.0f64, n in 1usize..=4) {
        let p64 = ModelTable::builtin().predict(fov, n).unwrap().placement;
        let p32 = ModelTableF32::builtin().predict(fov as f32, n).unwrap().placement;
        prop_assert!((f64::from(p32.radian_deg) - p64.radian_deg).abs() < 1e-3);
        prop_assert!((f64::from(p32.radius_m) - p64.radius_m).abs() < 1e-5);
    }
}
