//! Placement of life-size video avatars for group conversations in
//! head-mounted displays.
//!
//! The local user is pinned at the bottom of a conversation circle and remote
//! participants are spread along its upper arc. How wide the group spreads
//! and how large the circle is are predicted from the display's field of
//! view by per-group-size polynomial models.
//!
//! All geometry and numerics are generic over [`Scalar`] (`f32` or `f64`).
//! The aliases at the crate root fix the scalar to `f64`, with `*F32`
//! variants for single precision.

pub mod correlation;
pub mod fit;
pub mod fov;
pub mod layout;
pub mod media;
pub mod models;
pub mod scalar;
pub mod svg;

pub use scalar::Scalar;

pub use correlation::{pearson, spearman, CorrelationError};
pub use fit::{fit_monotone_poly, monotone_on_range, FitError};
pub use fov::{decompose_fov, occluder_layout, FovError, Region, Side};
pub use layout::{
    adjacent_gaps, billboard_facing, billboard_yaw, distance_to_local, resolve_layout, LayoutError, Warning,
};
pub use media::{
    chroma_key_matte, life_size_scale, ChromaKey, Frame, MattingBackend, MediaError, PixelFormat,
};
pub use models::{
    layout_for, pilot_lookup, predict_placement, ModelError, PlacementSource, SourcePolicy, Target,
};

pub type Aspect = fov::Aspect<f64>;
pub type FieldOfView = fov::FieldOfView<f64>;
pub type DecomposedFov = fov::DecomposedFov<f64>;
pub type OccluderRig = fov::OccluderRig<f64>;
pub type Placement = layout::Placement<f64>;
pub type AvatarPose = layout::AvatarPose<f64>;
pub type ConversationLayout = layout::ConversationLayout<f64>;
pub type PlacementModel = models::PlacementModel<f64>;
pub type ModelTable = models::ModelTable<f64>;
pub type ModelFile = models::ModelFile<f64>;
pub type Prediction = models::Prediction<f64>;
pub type LayoutResult = models::LayoutResult<f64>;
pub type Sample = fit::Sample<f64>;
pub type FitResult = fit::FitResult<f64>;
pub type CalibrationInput = media::CalibrationInput<f64>;

pub type FieldOfViewF32 = fov::FieldOfView<f32>;
pub type PlacementF32 = layout::Placement<f32>;
pub type ConversationLayoutF32 = layout::ConversationLayout<f32>;
pub type ModelTableF32 = models::ModelTable<f32>;
pub type FitResultF32 = fit::FitResult<f32>;
pub type CalibrationInputF32 = media::CalibrationInput<f32>;
