//! Reading and writing URDF robot descriptions.
//!
//! Only the kinematic skeleton is interpreted: links, joints, origins, axes and
//! limits. Mesh file names are kept as opaque references; inertial and
//! collision data are skipped.

use std::collections::HashMap;
use std::fmt::Write;

use nalgebra::Vector3;

use crate::chain::{JointKind, JointSpec, KinematicChain};
use crate::error::KinematicsError;
use crate::scalar::{lit, to_f64, Real};
use crate::transform::RigidTransform;

struct RawJoint {
    name: String,
    kind: String,
    parent: String,
    child: String,
    origin: RigidTransform<f64>,
    axis: Option<Vector3<f64>>,
    lower: f64,
    upper: f64,
    velocity: f64,
}

/// Parses a URDF document whose links form a single path from the root link
/// to a unique leaf link.
pub fn parse_urdf<T: Real>(document: &str) -> Result<KinematicChain<T>, KinematicsError> {
    parse(document, None)
}

/// Parses the path from the root link to `tip`. Branches off that path are ignored.
pub fn parse_urdf_to_tip<T: Real>(document: &str, tip: &str) -> Result<KinematicChain<T>, KinematicsError> {
    parse(document, Some(tip))
}

fn malformed(msg: impl Into<String>) -> KinematicsError {
    KinematicsError::Malformed(msg.into())
}

fn parse_vec3(text: Option<&str>, what: &str) -> Result<Vector3<f64>, KinematicsError> {
    let Some(text) = text else {
        return Ok(Vector3::zeros());
    };
    let values = text
        .split_whitespace()
        .map(|s| s.parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| malformed(format!("{what}: {e}")))?;
    match values.as_slice() {
        [x, y, z] if values.iter().all(|v| v.is_finite()) => Ok(Vector3::new(*x, *y, *z)),
        _ => Err(malformed(format!("{what}: expected three finite numbers, got `{text}`"))),
    }
}

fn parse_scalar(text: Option<&str>, what: &str) -> Result<f64, KinematicsError> {
    match text {
        None => Ok(0.0),
        Some(s) => s
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| !v.is_nan())
            .ok_or_else(|| malformed(format!("{what}: `{s}` is not a number"))),
    }
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, tag: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|n| n.has_tag_name(tag))
}

fn parse<T: Real>(document: &str, tip: Option<&str>) -> Result<KinematicChain<T>, KinematicsError> {
    let doc = roxmltree::Document::parse(document).map_err(|e| malformed(e.to_string()))?;
    let robot = doc.root_element();
    if !robot.has_tag_name("robot") {
        return Err(malformed("root element is not <robot>"));
    }
    let robot_name = robot.attribute("name").unwrap_or("robot").to_string();

    let mut links: Vec<String> = Vec::new();
    let mut meshes: Vec<(String, String)> = Vec::new();
    for link in robot.children().filter(|n| n.has_tag_name("link")) {
        let name = link
            .attribute("name")
            .ok_or_else(|| malformed("link without a name"))?
            .to_string();
        if links.contains(&name) {
            return Err(malformed(format!("duplicate link `{name}`")));
        }
        for mesh in link.descendants().filter(|n| n.has_tag_name("mesh")) {
            if let Some(file) = mesh.attribute("filename") {
                meshes.push((name.clone(), file.to_string()));
            }
        }
        links.push(name);
    }

    let mut joints: Vec<RawJoint> = Vec::new();
    for node in robot.children().filter(|n| n.has_tag_name("joint")) {
        let name = node
            .attribute("name")
            .ok_or_else(|| malformed("joint without a name"))?
            .to_string();
        let kind = node
            .attribute("type")
            .ok_or_else(|| malformed(format!("joint `{name}` has no type")))?
            .to_string();
        let link_ref = |tag: &str| -> Result<String, KinematicsError> {
            let l = child(node, tag)
                .and_then(|n| n.attribute("link"))
                .ok_or_else(|| malformed(format!("joint `{name}` has no {tag} link")))?;
            if !links.iter().any(|x| x == l) {
                return Err(malformed(format!("joint `{name}` references unknown link `{l}`")));
            }
            Ok(l.to_string())
        };
        let parent = link_ref("parent")?;
        let child_link = link_ref("child")?;
        let origin = match child(node, "origin") {
            Some(o) => RigidTransform::from_xyz_rpy(
                parse_vec3(o.attribute("xyz"), "origin xyz")?,
                parse_vec3(o.attribute("rpy"), "origin rpy")?,
            ),
            None => RigidTransform::identity(),
        };
        let axis = child(node, "axis")
            .map(|a| parse_vec3(a.attribute("xyz"), "axis"))
            .transpose()?;
        let (lower, upper, velocity) = match child(node, "limit") {
            Some(l) => (
                parse_scalar(l.attribute("lower"), "limit lower")?,
                parse_scalar(l.attribute("upper"), "limit upper")?,
                parse_scalar(l.attribute("velocity"), "limit velocity")?,
            ),
            None => (0.0, 0.0, 0.0),
        };
        joints.push(RawJoint {
            name,
            kind,
            parent,
            child: child_link,
            origin,
            axis,
            lower,
            upper,
            velocity,
        });
    }

    let mut parent_joint: HashMap<&str, usize> = HashMap::new();
    for (i, j) in joints.iter().enumerate() {
        if parent_joint.insert(j.child.as_str(), i).is_some() {
            return Err(KinematicsError::Branching(format!("link `{}` has two parents", j.child)));
        }
    }
    let roots: Vec<&String> = links.iter().filter(|l| !parent_joint.contains_key(l.as_str())).collect();
    let base = match roots.as_slice() {
        [one] => (*one).clone(),
        [] => return Err(malformed("no root link")),
        _ => return Err(KinematicsError::Branching(format!("{} root links", roots.len()))),
    };
    let tip = match tip {
        Some(t) => {
            if !links.iter().any(|l| l == t) {
                return Err(malformed(format!("unknown tip link `{t}`")));
            }
            t.to_string()
        }
        None => {
            let leaves: Vec<&String> = links
                .iter()
                .filter(|l| !joints.iter().any(|j| &j.parent == *l))
                .collect();
            match leaves.as_slice() {
                [one] => (*one).clone(),
                _ => {
                    return Err(KinematicsError::Branching(format!(
                        "{} leaf links; name the tip link explicitly",
                        leaves.len()
                    )))
                }
            }
        }
    };

    let mut path: Vec<usize> = Vec::new();
    let mut cursor = tip.as_str();
    while let Some(&j) = parent_joint.get(cursor) {
        if path.len() > joints.len() {
            return Err(malformed("kinematic loop"));
        }
        path.push(j);
        cursor = joints[j].parent.as_str();
    }
    debug_assert_eq!(cursor, base);
    path.reverse();

    let mut specs: Vec<JointSpec<T>> = Vec::with_capacity(path.len());
    let mut link_names = vec![base];
    for &idx in &path {
        let raw = &joints[idx];
        let origin = raw.origin.cast::<T>();
        let kind = match raw.kind.as_str() {
            "revolute" | "continuous" => JointKind::Revolute,
            "prismatic" => JointKind::Prismatic,
            "fixed" => JointKind::Fixed,
            other => {
                return Err(KinematicsError::UnsupportedJoint {
                    joint: raw.name.clone(),
                    kind: other.to_string(),
                })
            }
        };
        if kind == JointKind::Fixed {
            specs.push(JointSpec::fixed(raw.name.clone(), origin));
            continue;
        }
        let axis = raw.axis.ok_or_else(|| KinematicsError::MissingAxis(raw.name.clone()))?;
        let norm = axis.norm();
        if norm == 0.0 {
            return Err(KinematicsError::InvalidAxis(raw.name.clone()));
        }
        let (lower, upper) = if raw.kind == "continuous" {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            (raw.lower, raw.upper)
        };
        if lower > upper {
            return Err(KinematicsError::InvalidLimits(raw.name.clone()));
        }
        let axis = (axis / norm).map(lit::<T>);
        let mut spec = match kind {
            JointKind::Revolute => JointSpec::revolute(raw.name.clone(), origin, axis, lit(lower), lit(upper)),
            _ => JointSpec::prismatic(raw.name.clone(), origin, axis, lit(lower), lit(upper)),
        };
        spec.velocity_limit = lit(raw.velocity);
        specs.push(spec);
        link_names.push(raw.child.clone());
    }
    if link_names.last() != Some(&tip) {
        link_names.push(tip);
    }

    let mut chain = KinematicChain::new(robot_name, specs, RigidTransform::identity())?;
    meshes.retain(|(link, _)| link_names.contains(link));
    chain.link_names = link_names;
    chain.meshes = meshes;
    Ok(chain)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('"', "&quot;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn origin_element<T: Real>(t: &RigidTransform<T>) -> String {
    let xyz = t.translation.map(to_f64);
    let (r, p, y) = t.cast::<f64>().rotation.euler_angles();
    format!(
        "<origin xyz=\"{} {} {}\" rpy=\"{} {} {}\"/>",
        xyz.x, xyz.y, xyz.z, r, p, y
    )
}

/// Writes the chain back out as URDF. Fixed joints that were folded at parse
/// time are not restored; a trailing tool offset becomes one fixed joint.
pub fn to_urdf<T: Real>(chain: &KinematicChain<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "<?xml version=\"1.0\"?>");
    let _ = writeln!(out, "<robot name=\"{}\">", xml_escape(&chain.name));
    for link in &chain.link_names {
        let meshes: Vec<&String> = chain
            .meshes
            .iter()
            .filter(|(l, _)| l == link)
            .map(|(_, f)| f)
            .collect();
        if meshes.is_empty() {
            let _ = writeln!(out, "  <link name=\"{}\"/>", xml_escape(link));
        } else {
            let _ = writeln!(out, "  <link name=\"{}\">", xml_escape(link));
            for m in meshes {
                let _ = writeln!(
                    out,
                    "    <visual><geometry><mesh filename=\"{}\"/></geometry></visual>",
                    xml_escape(m)
                );
            }
            let _ = writeln!(out, "  </link>");
        }
    }
    for (i, joint) in chain.joints.iter().enumerate() {
        let (lower, upper) = (to_f64(joint.lower), to_f64(joint.upper));
        let kind = match joint.kind {
            JointKind::Revolute if lower.is_infinite() && upper.is_infinite() => "continuous",
            JointKind::Revolute => "revolute",
            JointKind::Prismatic => "prismatic",
            JointKind::Fixed => "fixed",
        };
        let axis = joint.axis.map(to_f64);
        let _ = writeln!(out, "  <joint name=\"{}\" type=\"{kind}\">", xml_escape(&joint.name));
        let _ = writeln!(out, "    <parent link=\"{}\"/>", xml_escape(&chain.link_names[i]));
        let _ = writeln!(out, "    <child link=\"{}\"/>", xml_escape(&chain.link_names[i + 1]));
        let _ = writeln!(out, "    {}", origin_element(&joint.origin));
        let _ = writeln!(out, "    <axis xyz=\"{} {} {}\"/>", axis.x, axis.y, axis.z);
        let velocity = to_f64(joint.velocity_limit);
        if kind == "continuous" {
            let _ = writeln!(out, "    <limit effort=\"0\" velocity=\"{velocity}\"/>");
        } else {
            let _ = writeln!(
                out,
                "    <limit lower=\"{lower}\" upper=\"{upper}\" effort=\"0\" velocity=\"{velocity}\"/>"
            );
        }
        let _ = writeln!(out, "  </joint>");
    }
    let dof = chain.dof();
    if chain.link_names.len() > dof + 1 {
        let _ = writeln!(out, "  <joint name=\"{}_tool_joint\" type=\"fixed\">", xml_escape(&chain.link_names[dof + 1]));
        let _ = writeln!(out, "    <parent link=\"{}\"/>", xml_escape(&chain.link_names[dof]));
        let _ = writeln!(out, "    <child link=\"{}\"/>", xml_escape(&chain.link_names[dof + 1]));
        let _ = writeln!(out, "    {}", origin_element(&chain.tool_offset));
        let _ = writeln!(out, "  </joint>");
    }
    let _ = writeln!(out, "</robot>");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const ONE_JOINT: &str = r#"<?xml version="1.0"?>
<robot name="one">
  <link name="base"/>
  <link name="arm"/>
  <joint name="j1" type="revolute">
    <parent link="base"/>
    <child link="arm"/>
    <axis xyz="0 0 1"/>
    <limit lower="-3.141592653589793" upper="3.141592653589793" velocity="1.0" effort="10"/>
  </joint>
</robot>"#;

    #[test]
    fn minimal_single_joint() {
        let chain: KinematicChain<f64> = parse_urdf(ONE_JOINT).unwrap();
        assert_eq!(chain.dof(), 1);
        assert_eq!(chain.joints[0].lower, -PI);
        assert_eq!(chain.joints[0].upper, PI);
        assert_eq!(chain.link_names, vec!["base", "arm"]);
    }

    #[test]
    fn inverted_limits_rejected() {
        let doc = ONE_JOINT.replace(
            r#"lower="-3.141592653589793" upper="3.141592653589793""#,
            r#"lower="1.0" upper="-1.0""#,
        );
        let err = parse_urdf::<f64>(&doc).unwrap_err();
        assert_eq!(err, KinematicsError::InvalidLimits("j1".into()));
        assert!(err.to_string().contains("invalid limits"));
    }

    #[test]
    fn missing_axis_rejected() {
        let doc = ONE_JOINT.replace(r#"<axis xyz="0 0 1"/>"#, "");
        assert_eq!(parse_urdf::<f64>(&doc).unwrap_err(), KinematicsError::MissingAxis("j1".into()));
    }

    #[test]
    fn malformed_xml_rejected() {
        assert!(matches!(parse_urdf::<f64>("<robot><link"), Err(KinematicsError::Malformed(_))));
        assert!(matches!(parse_urdf::<f64>("<nope/>"), Err(KinematicsError::Malformed(_))));
    }

    #[test]
    fn branching_needs_tip() {
        let doc = ONE_JOINT.replace(
            "</robot>",
            r#"<link name="side"/>
  <joint name="j2" type="fixed"><parent link="base"/><child link="side"/></joint>
</robot>"#,
        );
        assert!(matches!(parse_urdf::<f64>(&doc), Err(KinematicsError::Branching(_))));
        let chain: KinematicChain<f64> = parse_urdf_to_tip(&doc, "arm").unwrap();
        assert_eq!(chain.dof(), 1);
    }

    #[test]
    fn meshes_are_opaque() {
        let doc = ONE_JOINT.replace(
            r#"<link name="arm"/>"#,
            r#"<link name="arm"><visual><geometry><mesh filename="package://arm.dae"/></geometry></visual><inertial><mass value="1"/></inertial></link>"#,
        );
        let chain: KinematicChain<f64> = parse_urdf(&doc).unwrap();
        assert_eq!(chain.meshes, vec![("arm".to_string(), "package://arm.dae".to_string())]);
        let again: KinematicChain<f64> = parse_urdf(&to_urdf(&chain)).unwrap();
        assert_eq!(again.meshes, chain.meshes);
    }

    #[test]
    fn continuous_joint_has_open_limits() {
        let doc = ONE_JOINT.replace("revolute", "continuous");
        let chain: KinematicChain<f64> = parse_urdf(&doc).unwrap();
        assert!(chain.joints[0].lower.is_infinite());
        let again: KinematicChain<f64> = parse_urdf(&to_urdf(&chain)).unwrap();
        assert!(again.joints[0].upper.is_infinite());
    }

    #[test]
    fn floating_joint_unsupported() {
        let doc = ONE_JOINT.replace("revolute", "floating");
        assert!(matches!(parse_urdf::<f64>(&doc), Err(KinematicsError::UnsupportedJoint { .. })));
    }
}
