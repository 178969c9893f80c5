//! Skeleton motion data: topology, motion files, body-frame features,
//! augmentation, weak-perspective projection, foot contacts and
//! cross-subject splits.

mod augment;
mod contacts;
mod features;
mod frame;
mod manifest;
mod motion;
mod projection;
mod resample;
mod rotation;
mod topology;

pub use augment::{
    apply_augmentation, augment, augment_with, crop_len, draw_augmentations, AugmentDraw, CROPS,
    MIN_CROP_RATIO, ROTATIONS,
};
pub use contacts::{detect_foot_contacts, ContactThresholds};
pub use features::{build_features, Channel, FeatureSequence, Representation};
pub use frame::{
    compute_velocity, finite_difference, root_frame, rotate_z, to_local_frame, translate, RootFrame,
};
pub use manifest::{split_by_subject, DatasetManifest, ManifestEntry, Split, MANIFEST_HEADER};
pub use motion::{Action, MotionFile, MotionSequence};
pub use projection::{features_2d, project_weak_perspective, view_yaws, Camera, Projection2d, VIEW_STEP};
pub use resample::{resample, resample_frames};
pub use rotation::{bone_rotation_features, euler_xyz, rotation_from_euler_xyz};
pub use topology::{Roles, SkeletonTopology, ARM_FRAGMENTS, LEG_FRAGMENTS, XSENS_JOINTS};
