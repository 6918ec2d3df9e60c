use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Rotation axis of a revolute joint, expressed in the frame of the previous link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointAxis {
    X,
    Y,
    Z,
}

impl JointAxis {
    pub fn unit(self) -> Vector3<f64> {
        match self {
            JointAxis::X => Vector3::x(),
            JointAxis::Y => Vector3::y(),
            JointAxis::Z => Vector3::z(),
        }
    }
}

/// End-effector pose. The orientation quaternion is scalar-last `(x, y, z, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 3],
    pub orientation: [f64; 4],
}

/// Serial chain forward kinematics.
///
/// Each joint rotates about its axis in the current frame, then the link
/// extends along the rotated local x axis. The base sits at the origin.
pub fn forward_kinematics(joint_angles: &[f64], axes: &[JointAxis], link_lengths: &[f64]) -> Pose {
    debug_assert_eq!(joint_angles.len(), axes.len());
    debug_assert_eq!(joint_angles.len(), link_lengths.len());
    let mut rot = UnitQuaternion::identity();
    let mut pos = Vector3::zeros();
    for ((&q, axis), &len) in joint_angles.iter().zip(axes).zip(link_lengths) {
        rot *= UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_unchecked(axis.unit()), q);
        pos += rot * Vector3::new(len, 0.0, 0.0);
    }
    let rot = UnitQuaternion::new_normalize(rot.into_inner());
    let c = rot.coords;
    Pose {
        position: [pos.x, pos.y, pos.z],
        orientation: [c.x, c.y, c.z, c.w],
    }
}
