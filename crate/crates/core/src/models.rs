//! Field-of-view to placement models.
//!
//! One polynomial per (target, scenario) maps the diagonal FoV in degrees to
//! either the spread angle (Radian) or the circle radius (Radius). The
//! scenario is the number of remote users, 1 through 4. There is no Radian
//! model for a single remote user.
//!
//! The built-in coefficients come from regressions over user studies between
//! 30° and 110°. A lookup table of the optimal placements from the headset
//! study at 30°, 40° and 50° is also available for exact reproduction.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fov::FieldOfView;
use crate::layout::{resolve_layout, ConversationLayout, LayoutError, Placement, Warning};
use crate::scalar::Scalar;

pub const MIN_SCENARIO: usize = 1;
pub const MAX_SCENARIO: usize = 4;
pub const MODEL_FOV_MIN_DEG: f64 = 10.0;
pub const MODEL_FOV_MAX_DEG: f64 = 180.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unsupported scenario: {0} remote users (supported: 1..=4)")]
    UnsupportedScenario(usize),
    #[error("no tabulated placement at {0}° (tabulated: 30, 40, 50)")]
    NotTabulated(f64),
    #[error("no {target} model for {scenario} remote users")]
    MissingModel { target: Target, scenario: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Radian,
    Radius,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Radian => "radian",
            Target::Radius => "radius",
        })
    }
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "radian" => Ok(Target::Radian),
            "radius" => Ok(Target::Radius),
            other => Err(format!("unknown target {other:?} (expected radian or radius)")),
        }
    }
}

/// `value = Σ coefficients[k] · fov^k`, coefficients in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementModel<T> {
    pub target: Target,
    pub scenario: usize,
    pub coefficients: Vec<T>,
    pub fov_range: [T; 2],
}

impl<T: Scalar> PlacementModel<T> {
    pub fn new(target: Target, scenario: usize, coefficients: Vec<T>) -> Result<Self, ModelError> {
        let m = Self {
            target,
            scenario,
            coefficients,
            fov_range: [T::lit(MODEL_FOV_MIN_DEG), T::lit(MODEL_FOV_MAX_DEG)],
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(MIN_SCENARIO..=MAX_SCENARIO).contains(&self.scenario) {
            return Err(ModelError::UnsupportedScenario(self.scenario));
        }
        if self.coefficients.is_empty() || self.coefficients.len() > 4 {
            return Err(ModelError::InvalidModel(format!(
                "expected 1 to 4 coefficients, got {}",
                self.coefficients.len()
            )));
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(ModelError::InvalidModel("non-finite coefficient".into()));
        }
        let [lo, hi] = self.fov_range;
        if !(lo > T::zero() && lo < hi && hi <= T::lit(180.0)) {
            return Err(ModelError::InvalidModel(format!("bad fov_range [{lo}, {hi}]")));
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    /// Horner evaluation, no clamping.
    pub fn eval(&self, fov_deg: T) -> T {
        self.coefficients.iter().rev().fold(T::zero(), |acc, &c| acc * fov_deg + c)
    }

    pub fn derivative(&self, fov_deg: T) -> T {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(T::zero(), |acc, (k, &c)| acc * fov_deg + c * T::from_usize_lossy(k))
    }
}

/// The complete set of models used for prediction, keyed by (target, scenario).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTable<T> {
    models: BTreeMap<(Target, usize), PlacementModel<T>>,
}

const BUILTIN: [(Target, usize, &[f64]); 7] = [
    (Target::Radian, 2, &[20.20, 0.45, -0.0012]),
    (Target::Radian, 3, &[52.87, 0.22]),
    (Target::Radian, 4, &[61.79, 0.37]),
    (Target::Radius, 1, &[1.34, -0.0045]),
    (Target::Radius, 2, &[1.33, -0.0042]),
    (Target::Radius, 3, &[1.47, -0.0045]),
    (Target::Radius, 4, &[1.63, -0.0043]),
];

impl<T: Scalar> ModelTable<T> {
    /// Regressed models shipped with the toolkit.
    pub fn builtin() -> Self {
        let models = BUILTIN
            .iter()
            .map(|&(target, scenario, coeffs)| {
                let m = PlacementModel::new(target, scenario, coeffs.iter().map(|&c| T::lit(c)).collect())
                    .expect("built-in model is valid");
                ((target, scenario), m)
            })
            .collect();
        Self { models }
    }

    pub fn from_models(models: impl IntoIterator<Item = PlacementModel<T>>) -> Result<Self, ModelError> {
        let mut map = BTreeMap::new();
        for m in models {
            m.validate()?;
            if m.target == Target::Radian && m.scenario == 1 {
                return Err(ModelError::InvalidModel("a single remote user has no radian model".into()));
            }
            map.insert((m.target, m.scenario), m);
        }
        Ok(Self { models: map })
    }

    /// Replaces or adds models, e.g. re-fitted ones.
    pub fn with_overrides(
        mut self,
        models: impl IntoIterator<Item = PlacementModel<T>>,
    ) -> Result<Self, ModelError> {
        for m in models {
            m.validate()?;
            self.models.insert((m.target, m.scenario), m);
        }
        Ok(self)
    }

    pub fn get(&self, target: Target, scenario: usize) -> Option<&PlacementModel<T>> {
        self.models.get(&(target, scenario))
    }

    pub fn iter(&self) -> impl Iterator<Item = &PlacementModel<T>> {
        self.models.values()
    }

    pub fn to_file(&self) -> ModelFile<T> {
        ModelFile { models: self.models.values().cloned().collect(), fit: None }
    }

    pub fn predict(&self, fov_deg: T, n_remote: usize) -> Result<Prediction<T>, ModelError> {
        predict_placement(self, fov_deg, n_remote)
    }
}

/// On-disk model document: `{"models": [...]}` with optional fit metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile<T> {
    pub models: Vec<PlacementModel<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSummary>,
}

/// Diagnostics attached to a model produced by fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSummary {
    pub selected_order: usize,
    pub rss: f64,
    pub candidates: Vec<CandidateSummary>,
    pub samples: usize,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSummary {
    pub order: usize,
    pub monotone: bool,
    pub rss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub placement: Placement<T>,
    /// FoV actually fed to the models when the request was out of range.
    pub clamped_to: Option<T>,
}

impl<T: Scalar> Prediction<T> {
    pub fn warnings(&self, requested: T) -> Vec<Warning> {
        self.clamped_to
            .map(|used| Warning::FovClamped {
                requested_deg: requested.to_f64_lossy(),
                used_deg: used.to_f64_lossy(),
            })
            .into_iter()
            .collect()
    }
}

pub fn check_scenario(n_remote: usize) -> Result<(), ModelError> {
    if (MIN_SCENARIO..=MAX_SCENARIO).contains(&n_remote) {
        Ok(())
    } else {
        Err(ModelError::UnsupportedScenario(n_remote))
    }
}

pub fn predict_placement<T: Scalar>(
    table: &ModelTable<T>,
    fov_deg: T,
    n_remote: usize,
) -> Result<Prediction<T>, ModelError> {
    check_scenario(n_remote)?;
    let lo = T::lit(MODEL_FOV_MIN_DEG);
    let hi = T::lit(MODEL_FOV_MAX_DEG);
    if fov_deg.is_nan() {
        return Err(ModelError::Layout(LayoutError::InvalidPlacement("FoV is NaN".into())));
    }
    let used = fov_deg.max(lo).min(hi);
    let clamped_to = (used != fov_deg).then_some(used);

    let radius_model = table
        .get(Target::Radius, n_remote)
        .ok_or(ModelError::MissingModel { target: Target::Radius, scenario: n_remote })?;
    let radius = radius_model.eval(used);

    let placement = if n_remote == 1 {
        Placement::single(radius)?
    } else {
        let radian_model = table
            .get(Target::Radian, n_remote)
            .ok_or(ModelError::MissingModel { target: Target::Radian, scenario: n_remote })?;
        Placement::new(radian_model.eval(used), radius)?
    };
    Ok(Prediction { placement, clamped_to })
}

/// Optimal placements found in the headset study, indexed by FoV then scenario.
/// `None` radian marks the single-user case.
type PilotRow = (u32, [(Option<f64>, f64); 4]);

const PILOT: [PilotRow; 3] = [
    (30, [(None, 1.24), (Some(33.75), 1.26), (Some(59.64), 1.31), (Some(72.97), 1.61)]),
    (40, [(None, 1.17), (Some(39.06), 1.20), (Some(68.14), 1.21), (Some(75.20), 1.55)]),
    (50, [(None, 1.09), (Some(40.20), 1.09), (Some(66.63), 1.17), (Some(80.42), 1.50)]),
];

pub const PILOT_FOVS: [u32; 3] = [30, 40, 50];

pub fn pilot_lookup<T: Scalar>(fov_deg: T, n_remote: usize) -> Result<Placement<T>, ModelError> {
    check_scenario(n_remote)?;
    let row = PILOT
        .iter()
        .find(|(f, _)| T::lit(f64::from(*f)) == fov_deg)
        .ok_or_else(|| ModelError::NotTabulated(fov_deg.to_f64_lossy()))?;
    let (radian, radius) = row.1[n_remote - 1];
    Ok(match radian {
        Some(r) => Placement::new(T::lit(r), T::lit(radius))?,
        None => Placement::single(T::lit(radius))?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourcePolicy {
    /// Regressed models everywhere.
    #[default]
    Model,
    /// Pilot table at its tabulated FoVs, models elsewhere.
    PilotOverride,
    /// Pilot table only; other FoVs are an error.
    Pilot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementSource {
    Model,
    PilotTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutResult<T> {
    pub source: PlacementSource,
    pub fov: FieldOfView<T>,
    pub layout: ConversationLayout<T>,
}

/// Predicts a placement for the FoV and resolves it into avatar poses.
/// Aspect ratio is carried through but does not affect the prediction.
pub fn layout_for<T: Scalar>(
    table: &ModelTable<T>,
    fov: &FieldOfView<T>,
    n_remote: usize,
    policy: SourcePolicy,
) -> Result<LayoutResult<T>, ModelError> {
    check_scenario(n_remote)?;
    let fov_deg = fov.diagonal_deg;

    let pilot = match policy {
        SourcePolicy::Model => None,
        SourcePolicy::Pilot => Some(pilot_lookup(fov_deg, n_remote)?),
        SourcePolicy::PilotOverride => match pilot_lookup(fov_deg, n_remote) {
            Ok(p) => Some(p),
            Err(ModelError::NotTabulated(_)) => None,
            Err(e) => return Err(e),
        },
    };

    let (placement, source, mut warnings) = match pilot {
        Some(p) => (p, PlacementSource::PilotTable, Vec::new()),
        None => {
            let pred = predict_placement(table, fov_deg, n_remote)?;
            let w = pred.warnings(fov_deg);
            (pred.placement, PlacementSource::Model, w)
        }
    };

    let mut layout = resolve_layout(placement, n_remote)?;
    warnings.append(&mut layout.warnings);
    layout.warnings = warnings;
    Ok(LayoutResult { source, fov: *fov, layout })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn builtin_coefficients() {
        let t = ModelTable::<f64>::builtin();
        assert_eq!(t.iter().count(), 7);
        assert_eq!(t.get(Target::Radian, 2).unwrap().coefficients, vec![20.20, 0.45, -0.0012]);
        assert_eq!(t.get(Target::Radius, 4).unwrap().coefficients, vec![1.63, -0.0043]);
        assert!(t.get(Target::Radian, 1).is_none());
    }

    #[test]
    fn predictions() {
        let t = ModelTable::<f64>::builtin();
        let p = t.predict(180.0, 2).unwrap();
        assert_abs_diff_eq!(p.placement.radian_deg, 62.32, epsilon = 1e-9);
        assert_abs_diff_eq!(p.placement.radius_m, 0.574, epsilon = 1e-9);
        assert!(p.clamped_to.is_none());

        let p = t.predict(110.0, 2).unwrap();
        assert_abs_diff_eq!(p.placement.radian_deg, 55.18, epsilon = 1e-9);
        assert_abs_diff_eq!(p.placement.radius_m, 0.868, epsilon = 1e-9);

        let p = t.predict(5.0, 3).unwrap();
        assert_eq!(p.clamped_to, Some(10.0));
        assert_abs_diff_eq!(p.placement.radian_deg, 55.07, epsilon = 1e-9);
        assert_abs_diff_eq!(p.placement.radius_m, 1.425, epsilon = 1e-9);

        let p = t.predict(250.0, 4).unwrap();
        assert_eq!(p.clamped_to, Some(180.0));

        let p = t.predict(110.0, 1).unwrap();
        assert!(!p.placement.radian_applicable);
        assert_abs_diff_eq!(p.placement.radius_m, 0.845, epsilon = 1e-9);
    }

    #[test]
    fn unsupported_scenarios() {
        let t = ModelTable::<f64>::builtin();
        assert_eq!(t.predict(50.0, 0), Err(ModelError::UnsupportedScenario(0)));
        assert_eq!(t.predict(50.0, 5), Err(ModelError::UnsupportedScenario(5)));
        assert!(matches!(pilot_lookup(50.0_f64, 5), Err(ModelError::UnsupportedScenario(5))));
    }

    #[test]
    fn pilot_values() {
        let p = pilot_lookup(50.0_f64, 2).unwrap();
        assert_eq!((p.radian_deg, p.radius_m), (40.20, 1.09));
        let p = pilot_lookup(30.0_f64, 4).unwrap();
        assert_eq!((p.radian_deg, p.radius_m), (72.97, 1.61));
        let p = pilot_lookup(40.0_f64, 1).unwrap();
        assert!(!p.radian_applicable);
        assert_eq!(p.radius_m, 1.17);
        assert_eq!(pilot_lookup(45.0_f64, 2), Err(ModelError::NotTabulated(45.0)));
    }

    #[test]
    fn layout_policies() {
        let t = ModelTable::<f64>::builtin();
        let fov = FieldOfView::with_aspect(50.0, 3.0, 2.0).unwrap();
        let r = layout_for(&t, &fov, 2, SourcePolicy::Pilot).unwrap();
        assert_eq!(r.source, PlacementSource::PilotTable);
        assert_eq!(r.layout.placement.radian_deg, 40.20);

        let r = layout_for(&t, &fov, 2, SourcePolicy::Model).unwrap();
        assert_eq!(r.source, PlacementSource::Model);

        let fov = FieldOfView::with_aspect(110.0, 3.0, 2.0).unwrap();
        let r = layout_for(&t, &fov, 2, SourcePolicy::PilotOverride).unwrap();
        assert_eq!(r.source, PlacementSource::Model);
        assert!(matches!(layout_for(&t, &fov, 2, SourcePolicy::Pilot), Err(ModelError::NotTabulated(_))));

        let r = layout_for(&t, &fov, 1, SourcePolicy::Model).unwrap();
        assert_abs_diff_eq!(r.layout.poses[0].z_m, 1.69, epsilon = 1e-9);
    }

    #[test]
    fn clamp_surfaces_as_warning() {
        let t = ModelTable::<f64>::builtin();
        let fov = FieldOfView::with_aspect(5.0, 3.0, 2.0).unwrap();
        let r = layout_for(&t, &fov, 3, SourcePolicy::Model).unwrap();
        assert_eq!(r.layout.warnings, vec![Warning::FovClamped { requested_deg: 5.0, used_deg: 10.0 }]);
    }

    #[test]
    fn aspect_does_not_change_prediction() {
        let t = ModelTable::<f64>::builtin();
        let a = FieldOfView::with_aspect(90.0, 3.0, 2.0).unwrap();
        let b = FieldOfView::with_aspect(90.0, 16.0, 9.0).unwrap();
        assert_eq!(
            layout_for(&t, &a, 3, SourcePolicy::Model).unwrap().layout,
            layout_for(&t, &b, 3, SourcePolicy::Model).unwrap().layout
        );
    }

    #[test]
    fn model_file_round_trip() {
        let t = ModelTable::<f64>::builtin();
        let json = serde_json::to_string(&t.to_file()).unwrap();
        let file: ModelFile<f64> = serde_json::from_str(&json).unwrap();
        let back = ModelTable::from_models(file.models).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<ModelFile<f64>>(r#"{"models":[],"extra":1}"#).is_err());
    }

    #[test]
    fn rejects_invalid_models() {
        assert!(PlacementModel::<f64>::new(Target::Radius, 5, vec![1.0]).is_err());
        assert!(PlacementModel::<f64>::new(Target::Radius, 2, vec![]).is_err());
        assert!(PlacementModel::<f64>::new(Target::Radius, 2, vec![f64::NAN]).is_err());
        let m = PlacementModel::<f64>::new(Target::Radian, 1, vec![1.0]).unwrap();
        assert!(ModelTable::from_models([m]).is_err());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let t = ModelTable::<f64>::builtin();
        for m in t.iter() {
            for fov in [10.0, 55.5, 120.0, 179.0] {
                let h = 1e-5;
                let fd = (m.eval(fov + h) - m.eval(fov - h)) / (2.0 * h);
                assert_abs_diff_eq!(m.derivative(fov), fd, epsilon = 1e-7);
            }
        }
    }
}
