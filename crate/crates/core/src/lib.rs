//! Differentiable multi-channel skeleton images and analysis-by-synthesis
//! pose fitting.
//!
//! A pose is rendered into a `C x W x H` image whose pixels decay
//! exponentially with the squared distance to the nearest limb of their
//! channel. Splitting limbs across channels by body side removes the
//! left/right ambiguity of a single-channel rendering. The renderer has an
//! exact analytic gradient, so 2D keypoints, or 3D joints through a
//! perspective camera, can be recovered from a target image with Adam.

pub mod augment;
pub mod camera;
pub mod cli;
pub mod config;
pub mod error;
pub mod fit;
pub mod gradcheck;
pub mod kinematics;
pub mod metrics;
pub mod optim;
pub mod pose;
pub mod render;
pub mod rng;
pub mod rotation;
pub mod skim;
pub mod synth;
pub mod topology;

pub use error::{Error, Result};
pub use pose::{flip_pose, Pose2D, Pose3D, PoseRecord, Rotation6D};
pub use render::{
    point_segment_sq_distance, render, render_backward, render_loss_and_grad, RenderGradient,
    RenderParams, SkeletonImage,
};
pub use topology::{default_human_topology, SkeletonTopology};
