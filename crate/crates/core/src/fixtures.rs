//! Robot descriptions used by tests, examples and the demo workspace.

use crate::chain::KinematicChain;
use crate::scalar::Real;
use crate::urdf::parse_urdf;

/// Seven-axis arm with the joint layout of a common collaborative manipulator.
pub const ARM7_URDF: &str = include_str!("../fixtures/arm7.urdf");
/// Planar arm with two unit links rotating about z.
pub const PLANAR_2R_URDF: &str = include_str!("../fixtures/planar_2r.urdf");
/// Three prismatic then three revolute joints through one point.
pub const IDENTITY6_URDF: &str = include_str!("../fixtures/identity6.urdf");

/// Comfortable starting configuration for [`ARM7_URDF`].
#[allow(clippy::approx_constant)]
pub const ARM7_HOME: [f64; 7] = [0.0, -0.785398, 0.0, -2.356194, 0.0, 1.570796, 0.785398];

pub fn arm7<T: Real>() -> KinematicChain<T> {
    parse_urdf(ARM7_URDF).expect("arm7 fixture parses")
}

pub fn planar_2r<T: Real>() -> KinematicChain<T> {
    parse_urdf(PLANAR_2R_URDF).expect("planar fixture parses")
}

pub fn identity6<T: Real>() -> KinematicChain<T> {
    parse_urdf(IDENTITY6_URDF).expect("identity6 fixture parses")
}

/// Peg-removal scene for [`ARM7_URDF`]: a board obstacle holding a cylindrical
/// peg, a disposal box, four keypoints and a planned trajectory.
pub const DISASSEMBLY_WORKSPACE: &str = include_str!("../fixtures/disassembly.workspace.json");
