//! Ground-truth synthesis for arbitrary keypoints.
//!
//! Every part is parameterized the same way: a longitudinal position along
//! the line through its enclosing keypoints, a thickness fraction toward the
//! mask boundary and a side. Hands and the head get their missing enclosing
//! point by extending a keypoint line to the mask boundary; the head can
//! alternatively be parameterized by a rotation angle around the head
//! keypoint; bent elbows and knees rotate a construction line around an
//! anchor point on the inner bend.

use rand::Rng;

use crate::dataset_io::{BodyPartMask, KeypointName, LabelSet, MaskLabel, Side, Skeleton};
use crate::error::{Error, Result};
use crate::geom::{line_intersection, project_onto, signed_angle, LineQuery, Point2};
use crate::mask_geometry::{coherent_intersections, ray_boundary, side_of, IntersectionPair, LineSide};

/// The 18 parts keypoints can be generated on: the 14 mask parts plus the
/// four bendable joints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EvalPart {
    Head,
    Torso,
    UpperArm(Side),
    Forearm(Side),
    Hand(Side),
    Thigh(Side),
    LowerLeg(Side),
    Foot(Side),
    Elbow(Side),
    Knee(Side),
}

use Side::{Left, Right};

pub const EVAL_PARTS: [EvalPart; 18] = [
    EvalPart::Head,
    EvalPart::Torso,
    EvalPart::UpperArm(Left),
    EvalPart::UpperArm(Right),
    EvalPart::Forearm(Left),
    EvalPart::Forearm(Right),
    EvalPart::Hand(Left),
    EvalPart::Hand(Right),
    EvalPart::Thigh(Left),
    EvalPart::Thigh(Right),
    EvalPart::LowerLeg(Left),
    EvalPart::LowerLeg(Right),
    EvalPart::Foot(Left),
    EvalPart::Foot(Right),
    EvalPart::Elbow(Left),
    EvalPart::Elbow(Right),
    EvalPart::Knee(Left),
    EvalPart::Knee(Right),
];

impl EvalPart {
    pub fn name(self) -> String {
        match self {
            EvalPart::Head => "head".into(),
            EvalPart::Torso => "torso".into(),
            EvalPart::UpperArm(s) => format!("{}_upper_arm", s.prefix()),
            EvalPart::Forearm(s) => format!("{}_forearm", s.prefix()),
            EvalPart::Hand(s) => format!("{}_hand", s.prefix()),
            EvalPart::Thigh(s) => format!("{}_thigh", s.prefix()),
            EvalPart::LowerLeg(s) => format!("{}_lower_leg", s.prefix()),
            EvalPart::Foot(s) => format!("{}_foot", s.prefix()),
            EvalPart::Elbow(s) => format!("{}_elbow", s.prefix()),
            EvalPart::Knee(s) => format!("{}_knee", s.prefix()),
        }
    }

    pub fn parse(s: &str) -> Option<EvalPart> {
        EVAL_PARTS.into_iter().find(|p| p.name() == s)
    }

    pub fn is_joint(self) -> bool {
        matches!(self, EvalPart::Elbow(_) | EvalPart::Knee(_))
    }

    pub fn mirrored(self) -> EvalPart {
        match self {
            EvalPart::Head => EvalPart::Head,
            EvalPart::Torso => EvalPart::Torso,
            EvalPart::UpperArm(s) => EvalPart::UpperArm(s.opposite()),
            EvalPart::Forearm(s) => EvalPart::Forearm(s.opposite()),
            EvalPart::Hand(s) => EvalPart::Hand(s.opposite()),
            EvalPart::Thigh(s) => EvalPart::Thigh(s.opposite()),
            EvalPart::LowerLeg(s) => EvalPart::LowerLeg(s.opposite()),
            EvalPart::Foot(s) => EvalPart::Foot(s.opposite()),
            EvalPart::Elbow(s) => EvalPart::Elbow(s.opposite()),
            EvalPart::Knee(s) => EvalPart::Knee(s.opposite()),
        }
    }

    /// Labels of the part itself; joints own the labels of both adjacent
    /// parts, which are never told apart during the bent construction.
    pub fn primary_labels(self) -> LabelSet {
        match self {
            EvalPart::Head => LabelSet::of(&[MaskLabel::Head]),
            EvalPart::Torso => LabelSet::of(&[MaskLabel::Torso]),
            EvalPart::UpperArm(s) => LabelSet::of(&[MaskLabel::UpperArm(s)]),
            EvalPart::Forearm(s) => LabelSet::of(&[MaskLabel::Forearm(s)]),
            EvalPart::Hand(s) => LabelSet::of(&[MaskLabel::Hand(s)]),
            EvalPart::Thigh(s) => LabelSet::of(&[MaskLabel::Thigh(s)]),
            EvalPart::LowerLeg(s) => LabelSet::of(&[MaskLabel::LowerLeg(s)]),
            EvalPart::Foot(s) => LabelSet::of(&[MaskLabel::Foot(s)]),
            EvalPart::Elbow(s) => LabelSet::of(&[MaskLabel::UpperArm(s), MaskLabel::Forearm(s)]),
            EvalPart::Knee(s) => LabelSet::of(&[MaskLabel::Thigh(s), MaskLabel::LowerLeg(s)]),
        }
    }

    /// Neighboring labels an enclosing keypoint's pixel may legitimately
    /// carry (a knee pixel can be labeled thigh or lower leg depending on
    /// the mask). A query's label set is widened by such a label only when
    /// its construction point actually sits on one.
    fn adjacent_labels(self) -> LabelSet {
        match self {
            EvalPart::Head => LabelSet::of(&[]),
            EvalPart::Torso => LabelSet::of(&[
                MaskLabel::Head,
                MaskLabel::Thigh(Left),
                MaskLabel::Thigh(Right),
            ]),
            EvalPart::UpperArm(s) => {
                LabelSet::of(&[MaskLabel::Torso, MaskLabel::Forearm(s)])
            }
            EvalPart::Forearm(s) => {
                LabelSet::of(&[MaskLabel::UpperArm(s), MaskLabel::Hand(s)])
            }
            EvalPart::Hand(s) => LabelSet::of(&[MaskLabel::Forearm(s)]),
            EvalPart::Thigh(s) => LabelSet::of(&[MaskLabel::Torso, MaskLabel::LowerLeg(s)]),
            EvalPart::LowerLeg(s) => LabelSet::of(&[MaskLabel::Thigh(s), MaskLabel::Foot(s)]),
            EvalPart::Foot(s) => LabelSet::of(&[MaskLabel::LowerLeg(s)]),
            EvalPart::Elbow(_) | EvalPart::Knee(_) => LabelSet::of(&[]),
        }
    }
}

/// How the head part of a query is parameterized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeadQuery {
    /// Longitudinal position along the neck-head line extended to the mask
    /// boundary on both ends, like any other part.
    Extension,
    /// Rotation angle around the head keypoint, counter-clockwise from the
    /// neck-head direction; the generated point lies toward the boundary hit
    /// by the rotated ray.
    Angle { alpha: f64 },
}

/// Strategy selector for head queries in grids and samplers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadStrategy {
    Extension,
    Angle,
}

impl HeadStrategy {
    pub fn name(self) -> &'static str {
        match self {
            HeadStrategy::Extension => "extension",
            HeadStrategy::Angle => "angle",
        }
    }

    pub fn parse(s: &str) -> Option<HeadStrategy> {
        match s {
            "extension" => Some(HeadStrategy::Extension),
            "angle" => Some(HeadStrategy::Angle),
            _ => None,
        }
    }
}

/// Human-readable description of one arbitrary keypoint.
///
/// `p` is the longitudinal fraction for straight parts, the rotation
/// fraction for joints, and unused (0) for head-angle queries. With `q = 0`
/// the side is irrelevant; constructors canonicalize it to `Right`.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointQuery {
    pub part: EvalPart,
    pub p: f64,
    pub q: f64,
    pub side: Side,
    pub head: Option<HeadQuery>,
}

impl KeypointQuery {
    pub fn straight(part: EvalPart, p: f64, q: f64, side: Side) -> KeypointQuery {
        debug_assert!(part != EvalPart::Head);
        KeypointQuery {
            part,
            p,
            q,
            side: if q == 0.0 { Side::Right } else { side },
            head: None,
        }
    }

    pub fn head_extension(p: f64, q: f64, side: Side) -> KeypointQuery {
        KeypointQuery {
            part: EvalPart::Head,
            p,
            q,
            side: if q == 0.0 { Side::Right } else { side },
            head: Some(HeadQuery::Extension),
        }
    }

    pub fn head_angle(alpha: f64, q: f64) -> KeypointQuery {
        KeypointQuery {
            part: EvalPart::Head,
            p: 0.0,
            q,
            side: Side::Right,
            head: Some(HeadQuery::Angle { alpha }),
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self.head {
            Some(HeadQuery::Angle { alpha }) => Some(alpha),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) || !self.p.is_finite() {
            return Err(Error::Encode(format!("p = {} out of [0, 1]", self.p)));
        }
        if !(0.0..=1.0).contains(&self.q) || !self.q.is_finite() {
            return Err(Error::Encode(format!("q = {} out of [0, 1]", self.q)));
        }
        match (self.part, &self.head) {
            (EvalPart::Head, Some(HeadQuery::Extension)) => Ok(()),
            (EvalPart::Head, Some(HeadQuery::Angle { alpha })) => {
                if !alpha.is_finite() || !(0.0..std::f64::consts::TAU).contains(alpha) {
                    Err(Error::Encode(format!("alpha = {alpha} out of [0, 2pi)")))
                } else {
                    Ok(())
                }
            }
            (EvalPart::Head, None) => Err(Error::Encode(
                "head query without a head strategy".into(),
            )),
            (_, None) => Ok(()),
            (part, Some(_)) => Err(Error::Encode(format!(
                "head parameters on non-head part {}",
                part.name()
            ))),
        }
    }

    /// The mirrored query for a horizontally flipped scene.
    pub fn mirrored(&self) -> KeypointQuery {
        let head = self.head.map(|h| match h {
            HeadQuery::Extension => HeadQuery::Extension,
            HeadQuery::Angle { alpha } => HeadQuery::Angle {
                alpha: (std::f64::consts::TAU - alpha).rem_euclid(std::f64::consts::TAU),
            },
        });
        KeypointQuery {
            part: self.part.mirrored(),
            p: self.p,
            q: self.q,
            side: if self.q == 0.0 {
                Side::Right
            } else {
                self.side.opposite()
            },
            head,
        }
    }

    /// Stable string key used to match predictions against grid entries.
    pub fn cache_key(&self) -> String {
        let alpha = self
            .alpha()
            .map(|a| format!("{a}"))
            .unwrap_or_default();
        format!(
            "{}|{}|{}|{}|{}",
            self.part.name(),
            self.p,
            self.q,
            self.side,
            alpha
        )
    }
}

/// Which source a part geometry came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometrySource {
    Annotated,
    Extended,
}

/// Enclosing points and directed axis of one part. `axis` runs from `k1`
/// toward `k2`; the longitudinal fraction interpolates `p * k1 + (1-p) * k2`.
#[derive(Debug, Clone)]
pub struct PartGeometry {
    pub part: EvalPart,
    pub k1: Point2,
    pub k2: Point2,
    pub axis: LineQuery,
    pub source: GeometrySource,
}

impl PartGeometry {
    fn new(part: EvalPart, k1: Point2, k2: Point2, source: GeometrySource) -> Result<PartGeometry> {
        let axis = LineQuery::new(k1, k2 - k1).map_err(|_| {
            Error::GeometryUnavailable(format!(
                "enclosing keypoints of {} coincide",
                part.name()
            ))
        })?;
        Ok(PartGeometry {
            part,
            k1,
            k2,
            axis,
            source,
        })
    }

    pub fn point_at(&self, p: f64) -> Point2 {
        self.k1 * p + self.k2 * (1.0 - p)
    }

    /// Longitudinal fraction of a point assumed to lie on the axis.
    pub fn fraction_of(&self, point: Point2) -> f64 {
        let len = self.k1.dist(self.k2);
        1.0 - (point - self.k1).dot(self.axis.direction) / len
    }
}

fn enclosing(part: EvalPart) -> Option<(KeypointName, KeypointName)> {
    match part {
        EvalPart::UpperArm(s) => Some((KeypointName::Shoulder(s), KeypointName::Elbow(s))),
        EvalPart::Forearm(s) => Some((KeypointName::Elbow(s), KeypointName::Wrist(s))),
        EvalPart::Thigh(s) => Some((KeypointName::Hip(s), KeypointName::Knee(s))),
        EvalPart::LowerLeg(s) => Some((KeypointName::Knee(s), KeypointName::Ankle(s))),
        EvalPart::Foot(s) => Some((KeypointName::Heel(s), KeypointName::ToeTip(s))),
        _ => None,
    }
}

/// Builds the enclosing-point geometry of a non-joint part.
///
/// Limbs and feet use their two annotated keypoints; the torso runs from the
/// neck to the middle of the hips; hands extend the wrist-hand line beyond
/// the hand keypoint to the mask boundary; the head (extension strategy)
/// extends the neck-head line to the mask boundary on both ends.
pub fn part_geometry(
    skeleton: &Skeleton,
    mask: &BodyPartMask,
    part: EvalPart,
) -> Result<PartGeometry> {
    match part {
        EvalPart::Torso => {
            let neck = skeleton.visible_pos(KeypointName::Neck)?;
            let l_hip = skeleton.visible_pos(KeypointName::Hip(Left))?;
            let r_hip = skeleton.visible_pos(KeypointName::Hip(Right))?;
            PartGeometry::new(part, neck, (l_hip + r_hip) * 0.5, GeometrySource::Annotated)
        }
        EvalPart::Hand(s) => {
            let wrist = skeleton.visible_pos(KeypointName::Wrist(s))?;
            let hand = skeleton.visible_pos(KeypointName::Hand(s))?;
            let dir = (hand - wrist).normalized().map_err(|_| {
                Error::GeometryUnavailable(format!("wrist and hand of {} coincide", part.name()))
            })?;
            let tip = ray_boundary(mask, part.primary_labels(), hand, dir).ok_or_else(|| {
                Error::GeometryUnavailable(format!(
                    "hand keypoint of {} is outside the hand mask",
                    part.name()
                ))
            })?;
            PartGeometry::new(part, wrist, tip, GeometrySource::Extended)
        }
        EvalPart::Head => {
            let neck = skeleton.visible_pos(KeypointName::Neck)?;
            let head = skeleton.visible_pos(KeypointName::Head)?;
            let dir = (head - neck)
                .normalized()
                .map_err(|_| Error::GeometryUnavailable("neck and head coincide".into()))?;
            let labels = part.primary_labels();
            let top = ray_boundary(mask, labels, head, dir).ok_or_else(|| {
                Error::GeometryUnavailable("head keypoint is outside the head mask".into())
            })?;
            let bottom = ray_boundary(mask, labels, head, -dir).ok_or_else(|| {
                Error::GeometryUnavailable("head keypoint is outside the head mask".into())
            })?;
            PartGeometry::new(part, top, bottom, GeometrySource::Extended)
        }
        EvalPart::Elbow(_) | EvalPart::Knee(_) => Err(Error::GeometryUnavailable(format!(
            "{} is a joint; use the bent construction",
            part.name()
        ))),
        other => {
            let (n1, n2) = enclosing(other).expect("straight part");
            let k1 = skeleton.visible_pos(n1)?;
            let k2 = skeleton.visible_pos(n2)?;
            PartGeometry::new(other, k1, k2, GeometrySource::Annotated)
        }
    }
}

/// Label set for a cross-section at `at`: the part's own labels, widened by
/// the label under `at` when that label belongs to an adjacent part.
fn query_labels(part: EvalPart, mask: &BodyPartMask, at: Point2) -> LabelSet {
    let primary = part.primary_labels();
    if let Some(code) = mask.code_near(at) {
        if !primary.contains_code(code) && part.adjacent_labels().contains_code(code) {
            if let Some(label) = MaskLabel::from_code(code) {
                let mut labels = vec![label];
                for l in crate::dataset_io::MASK_LABEL_ORDER {
                    if primary.contains_code(l.code()) {
                        labels.push(l);
                    }
                }
                return LabelSet::of(&labels);
            }
        }
    }
    primary
}

/// The cross-section of a straight part at longitudinal fraction `p`.
#[derive(Debug, Clone)]
pub struct StraightFrame {
    pub k_i: Point2,
    pub ortho: LineQuery,
    pub pair: IntersectionPair,
}

pub fn straight_frame(
    geom: &PartGeometry,
    mask: &BodyPartMask,
    p: f64,
) -> Result<StraightFrame> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::GenerationFailed(format!("p = {p} out of [0, 1]")));
    }
    let k_i = geom.point_at(p);
    let ortho = LineQuery::new(k_i, geom.axis.direction.left_normal())
        .map_err(|e| Error::GenerationFailed(e.to_string()))?;
    let labels = query_labels(geom.part, mask, k_i);
    let pair = match coherent_intersections(mask, labels, &ortho) {
        Ok(Some(pair)) => pair,
        Ok(None) => {
            return Err(Error::GenerationFailed(format!(
                "intermediate point of {} at p = {p} is outside the part mask",
                geom.part.name()
            )))
        }
        Err(_) => {
            return Err(Error::GenerationFailed(format!(
                "intermediate point of {} at p = {p} is outside the raster",
                geom.part.name()
            )))
        }
    };
    Ok(StraightFrame { k_i, ortho, pair })
}

/// Arbitrary point on a straight part: interpolates from the central line
/// toward the chosen-side boundary of the coherent cross-section.
pub fn straight_point(
    geom: &PartGeometry,
    mask: &BodyPartMask,
    p: f64,
    q: f64,
    side: Side,
) -> Result<Point2> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::GenerationFailed(format!("q = {q} out of [0, 1]")));
    }
    let frame = straight_frame(geom, mask, p)?;
    let c = frame.pair.side(side);
    Ok(c * q + frame.k_i * (1.0 - q))
}

/// The rotated head line and its boundary pair for the angle strategy.
pub struct HeadAngleFrame {
    pub center: Point2,
    pub line: LineQuery,
    pub pair: IntersectionPair,
}

pub fn head_angle_frame(
    skeleton: &Skeleton,
    mask: &BodyPartMask,
    alpha: f64,
) -> Result<HeadAngleFrame> {
    let neck = skeleton.visible_pos(KeypointName::Neck)?;
    let head = skeleton.visible_pos(KeypointName::Head)?;
    let base = (head - neck)
        .normalized()
        .map_err(|_| Error::GeometryUnavailable("neck and head coincide".into()))?;
    let dir = base.rotate_ccw(alpha);
    let line = LineQuery::new(head, dir).map_err(|e| Error::GenerationFailed(e.to_string()))?;
    match coherent_intersections(mask, EvalPart::Head.primary_labels(), &line) {
        Ok(Some(pair)) => Ok(HeadAngleFrame {
            center: head,
            line,
            pair,
        }),
        _ => Err(Error::GenerationFailed(
            "head keypoint is outside the head mask".into(),
        )),
    }
}

/// Arbitrary point on the head via the angle strategy: rotate the neck-head
/// direction counter-clockwise by `alpha` around the head keypoint and move
/// `q` of the way to the boundary the rotated ray points at. The rays for
/// `alpha` and `alpha + pi` share a line but select opposite endpoints.
pub fn head_angle_point(
    skeleton: &Skeleton,
    mask: &BodyPartMask,
    alpha: f64,
    q: f64,
) -> Result<Point2> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::GenerationFailed(format!("q = {q} out of [0, 1]")));
    }
    let frame = head_angle_frame(skeleton, mask, alpha)?;
    // c_left of the pair is the run end along the positive (rotated ray)
    // direction.
    let c = frame.pair.c_left;
    Ok(c * q + frame.center * (1.0 - q))
}

fn joint_triple(joint: EvalPart) -> Result<(KeypointName, KeypointName, KeypointName)> {
    match joint {
        EvalPart::Elbow(s) => Ok((
            KeypointName::Shoulder(s),
            KeypointName::Elbow(s),
            KeypointName::Wrist(s),
        )),
        EvalPart::Knee(s) => Ok((
            KeypointName::Hip(s),
            KeypointName::Knee(s),
            KeypointName::Ankle(s),
        )),
        other => Err(Error::GeometryUnavailable(format!(
            "{} is not a bendable joint",
            other.name()
        ))),
    }
}

fn joint_parts(joint: EvalPart) -> (EvalPart, EvalPart) {
    match joint {
        EvalPart::Elbow(s) => (EvalPart::UpperArm(s), EvalPart::Forearm(s)),
        EvalPart::Knee(s) => (EvalPart::Thigh(s), EvalPart::LowerLeg(s)),
        _ => unreachable!("checked by joint_triple"),
    }
}

/// Bending angle of an elbow or knee: the angle enclosed by the two limb
/// segments meeting at the joint, in [0, pi] (pi = straight).
pub fn bending_angle(skeleton: &Skeleton, joint: EvalPart) -> Result<f64> {
    let (root, mid, end) = joint_triple(joint)?;
    let root = skeleton.visible_pos(root)?;
    let mid = skeleton.visible_pos(mid)?;
    let end = skeleton.visible_pos(end)?;
    let u = (root - mid).normalized().map_err(|_| {
        Error::GeometryUnavailable(format!("degenerate upper segment at {}", joint.name()))
    })?;
    let w = (end - mid).normalized().map_err(|_| {
        Error::GeometryUnavailable(format!("degenerate lower segment at {}", joint.name()))
    })?;
    Ok(u.dot(w).clamp(-1.0, 1.0).acos())
}

/// Frozen construction data of a bent joint: the anchor on the inner bend
/// and the two perpendicular extremes the rotating line sweeps between.
#[derive(Debug, Clone)]
pub struct BentJointContext {
    pub joint: EvalPart,
    pub beta: f64,
    pub anchor: Point2,
    pub start_dir: Point2,
    pub end_dir: Point2,
    /// Signed sweep from `start_dir` to `end_dir` (shortest rotation).
    pub sweep: f64,
    pub upper: PartGeometry,
    pub lower: PartGeometry,
}

/// Builds the bent-joint context: intersects the bending-angle bisector with
/// the unified upper+lower mask and anchors on the acute (inner) side.
pub fn anchor_point(
    skeleton: &Skeleton,
    mask: &BodyPartMask,
    joint: EvalPart,
) -> Result<BentJointContext> {
    let (root_n, mid_n, end_n) = joint_triple(joint)?;
    let (upper_part, lower_part) = joint_parts(joint);
    let upper = part_geometry(skeleton, mask, upper_part)?;
    let lower = part_geometry(skeleton, mask, lower_part)?;

    let root = skeleton.visible_pos(root_n)?;
    let mid = skeleton.visible_pos(mid_n)?;
    let end = skeleton.visible_pos(end_n)?;
    let u = (root - mid).normalized().map_err(|_| {
        Error::GeometryUnavailable(format!("degenerate upper segment at {}", joint.name()))
    })?;
    let w = (end - mid).normalized().map_err(|_| {
        Error::GeometryUnavailable(format!("degenerate lower segment at {}", joint.name()))
    })?;
    let beta = u.dot(w).clamp(-1.0, 1.0).acos();
    if beta < 1e-9 {
        return Err(Error::GenerationFailed(format!(
            "{} is fully folded; the bisector is undefined",
            joint.name()
        )));
    }

    let labels = joint.primary_labels();
    let anchor = if std::f64::consts::PI - beta < 1e-6 {
        // Straight limb: the bisector degenerates to the perpendicular of
        // the limb; anchor on the nearer boundary.
        let limb = (mid - root).normalized().unwrap();
        let n = limb.left_normal();
        let hit_l = ray_boundary(mask, labels, mid, n);
        let hit_r = ray_boundary(mask, labels, mid, -n);
        match (hit_l, hit_r) {
            (Some(a), Some(b)) => {
                if mid.dist(a) <= mid.dist(b) {
                    a
                } else {
                    b
                }
            }
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => {
                return Err(Error::GenerationFailed(format!(
                    "joint keypoint of {} is outside the unified mask",
                    joint.name()
                )))
            }
        }
    } else {
        let bisector = (u + w).normalized().unwrap();
        ray_boundary(mask, labels, mid, bisector).ok_or_else(|| {
            Error::GenerationFailed(format!(
                "joint keypoint of {} is outside the unified mask",
                joint.name()
            ))
        })?
    };

    let (_, proj_u) = project_onto(&upper.axis, anchor);
    let start_dir = (proj_u - anchor).normalized().map_err(|_| {
        Error::GenerationFailed(format!("anchor of {} lies on the upper axis", joint.name()))
    })?;
    let (_, proj_l) = project_onto(&lower.axis, anchor);
    let end_dir = (proj_l - anchor).normalized().map_err(|_| {
        Error::GenerationFailed(format!("anchor of {} lies on the lower axis", joint.name()))
    })?;
    let sweep = signed_angle(start_dir, end_dir);
    Ok(BentJointContext {
        joint,
        beta,
        anchor,
        start_dir,
        end_dir,
        sweep,
        upper,
        lower,
    })
}

/// Which of the two reference points a bent-joint thickness runs toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BentSide {
    /// Toward the anchor on the inner bend.
    Inner,
    /// Toward the far mask boundary.
    Outer,
}

#[derive(Debug, Clone, Copy)]
pub enum ChosenPart {
    Upper,
    Lower,
}

/// The rotated construction line at sweep fraction `s`.
#[derive(Debug, Clone)]
pub struct BentFrame {
    pub direction: Point2,
    pub k_i: Point2,
    pub chosen: ChosenPart,
    /// Longitudinal fraction of `k_i` on the chosen part's axis, clamped to
    /// [0, 1].
    pub p_on_chosen: f64,
    pub k_o: Point2,
}

impl BentFrame {
    pub fn chosen_geometry<'a>(&self, ctx: &'a BentJointContext) -> &'a PartGeometry {
        match self.chosen {
            ChosenPart::Upper => &ctx.upper,
            ChosenPart::Lower => &ctx.lower,
        }
    }
}

pub fn bent_frame(ctx: &BentJointContext, mask: &BodyPartMask, s: f64) -> Result<BentFrame> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::GenerationFailed(format!("s = {s} out of [0, 1]")));
    }
    let direction = ctx.start_dir.rotate_ccw(ctx.sweep * s);
    let la = LineQuery::new(ctx.anchor, direction)
        .map_err(|e| Error::GenerationFailed(e.to_string()))?;

    let frac = |geom: &PartGeometry| -> Option<f64> {
        line_intersection(&la, &geom.axis).map(|(_, t_axis, _)| {
            1.0 - t_axis / geom.k1.dist(geom.k2)
        })
    };
    let p_u = frac(&ctx.upper);
    let p_l = frac(&ctx.lower);
    let tol = 1e-9;
    let in_range = |p: Option<f64>| p.is_some_and(|p| (-tol..=1.0 + tol).contains(&p));

    // Prefer an intersection inside the upper part, then the lower part;
    // otherwise clamp to the axis endpoint nearest the construction line.
    let (chosen, p) = if in_range(p_u) {
        (ChosenPart::Upper, p_u.unwrap().clamp(0.0, 1.0))
    } else if in_range(p_l) {
        (ChosenPart::Lower, p_l.unwrap().clamp(0.0, 1.0))
    } else {
        match (p_u, p_l) {
            (None, None) => {
                return Err(Error::GenerationFailed(format!(
                    "construction line of {} is parallel to both axes",
                    ctx.joint.name()
                )))
            }
            (Some(p), None) => (ChosenPart::Upper, p.clamp(0.0, 1.0)),
            (None, Some(p)) => (ChosenPart::Lower, p.clamp(0.0, 1.0)),
            (Some(pu), Some(pl)) => {
                let dist_to_line = |geom: &PartGeometry, p: f64| {
                    let endpoint = geom.point_at(p.clamp(0.0, 1.0));
                    (endpoint - la.origin).cross(la.direction).abs()
                };
                if dist_to_line(&ctx.upper, pu) <= dist_to_line(&ctx.lower, pl) {
                    (ChosenPart::Upper, pu.clamp(0.0, 1.0))
                } else {
                    (ChosenPart::Lower, pl.clamp(0.0, 1.0))
                }
            }
        }
    };
    let geom = match chosen {
        ChosenPart::Upper => &ctx.upper,
        ChosenPart::Lower => &ctx.lower,
    };
    let k_i = geom.point_at(p);

    // Far boundary along the construction line, walking inward from just
    // off the anchor.
    let labels = ctx.joint.primary_labels();
    let start = ctx.anchor + direction * 0.5;
    let k_o = ray_boundary(mask, labels, start, direction)
        .or_else(|| ray_boundary(mask, labels, ctx.anchor + direction * 1.0, direction))
        .ok_or_else(|| {
            Error::GenerationFailed(format!(
                "construction line of {} leaves the mask at the anchor",
                ctx.joint.name()
            ))
        })?;
    Ok(BentFrame {
        direction,
        k_i,
        chosen,
        p_on_chosen: p,
        k_o,
    })
}

/// Arbitrary point on a bent joint: rotate the construction line by fraction
/// `s` of the sweep and interpolate `q` of the way from the axis
/// intersection toward the anchor (inner) or the far boundary (outer).
pub fn bent_point(
    ctx: &BentJointContext,
    mask: &BodyPartMask,
    s: f64,
    q: f64,
    side: BentSide,
) -> Result<Point2> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::GenerationFailed(format!("q = {q} out of [0, 1]")));
    }
    let frame = bent_frame(ctx, mask, s)?;
    let target = match side {
        BentSide::Inner => ctx.anchor,
        BentSide::Outer => frame.k_o,
    };
    Ok(target * q + frame.k_i * (1.0 - q))
}

/// Maps the query's left/right thickness side to inner/outer: the anchor
/// defines the inner side, classified against the chosen part's axis.
pub fn bent_side_from_lr(
    ctx: &BentJointContext,
    frame: &BentFrame,
    side: Side,
) -> Result<BentSide> {
    let geom = frame.chosen_geometry(ctx);
    let inner_side = match side_of(&geom.axis, ctx.anchor) {
        LineSide::Left => Side::Left,
        LineSide::Right => Side::Right,
        LineSide::On => {
            return Err(Error::GenerationFailed(format!(
                "anchor of {} lies on the part axis",
                ctx.joint.name()
            )))
        }
    };
    Ok(if side == inner_side {
        BentSide::Inner
    } else {
        BentSide::Outer
    })
}

/// Generates the ground-truth point for any query.
pub fn generate(skeleton: &Skeleton, mask: &BodyPartMask, query: &KeypointQuery) -> Result<Point2> {
    query.validate().map_err(|e| Error::GenerationFailed(e.to_string()))?;
    match (query.part, &query.head) {
        (EvalPart::Head, Some(HeadQuery::Angle { alpha })) => {
            head_angle_point(skeleton, mask, *alpha, query.q)
        }
        (part, _) if part.is_joint() => {
            let ctx = anchor_point(skeleton, mask, part)?;
            let frame = bent_frame(&ctx, mask, query.p)?;
            let side = bent_side_from_lr(&ctx, &frame, query.side)?;
            let target = match side {
                BentSide::Inner => ctx.anchor,
                BentSide::Outer => frame.k_o,
            };
            Ok(target * query.q + frame.k_i * (1.0 - query.q))
        }
        (part, _) => {
            let geom = part_geometry(skeleton, mask, part)?;
            straight_point(&geom, mask, query.p, query.q, query.side)
        }
    }
}

/// Detects left/right collapse at a joint: the cross-section endpoints near
/// the joint, taken in each adjacent part, must classify to the same sides
/// against the other part's axis. A swap means generated points would
/// cluster degenerately around the joint.
pub fn detect_collapse(skeleton: &Skeleton, mask: &BodyPartMask, joint: EvalPart) -> Result<bool> {
    joint_triple(joint)?;
    let (upper_part, lower_part) = joint_parts(joint);
    let upper = part_geometry(skeleton, mask, upper_part)?;
    let lower = part_geometry(skeleton, mask, lower_part)?;

    // Probe slightly inside each part so the cross-sections stay off the
    // joint pixel itself.
    let frame_u = straight_frame(&upper, mask, 0.1);
    let frame_l = straight_frame(&lower, mask, 0.9);
    let (frame_u, frame_l) = match (frame_u, frame_l) {
        (Ok(u), Ok(l)) => (u, l),
        _ => return Ok(false),
    };
    let swapped = |pair: &IntersectionPair, other: &LineQuery| {
        side_of(other, pair.c_left) == LineSide::Right
            && side_of(other, pair.c_right) == LineSide::Left
    };
    Ok(swapped(&frame_u.pair, &lower.axis) || swapped(&frame_l.pair, &upper.axis))
}

/// Draws a uniform random query for a part: p, q uniform in [0, 1), side
/// uniform, and for head-angle queries alpha uniform in [0, 2pi). The draw
/// order (p, q, side, then alpha) is fixed, so a seeded RNG reproduces the
/// same query stream.
pub fn sample_query<R: Rng>(part: EvalPart, head: HeadStrategy, rng: &mut R) -> KeypointQuery {
    let p: f64 = rng.gen();
    let q: f64 = rng.gen();
    let side = if rng.gen::<bool>() { Side::Left } else { Side::Right };
    match (part, head) {
        (EvalPart::Head, HeadStrategy::Angle) => {
            let alpha: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
            KeypointQuery::head_angle(alpha, q)
        }
        (EvalPart::Head, HeadStrategy::Extension) => KeypointQuery::head_extension(p, q, side),
        _ => KeypointQuery::straight(part, p, q, side),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset_io::Keypoint;
    use crate::synthetic::AthleteSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rect_torso_geom() -> (PartGeometry, BodyPartMask) {
        let mut mask = BodyPartMask::filled(120, 110, MaskLabel::Background);
        for y in 0..=100 {
            for x in 40..=60 {
                mask.set_code(x, y, MaskLabel::Torso.code());
            }
        }
        let geom = PartGeometry::new(
            EvalPart::Torso,
            Point2::new(50.0, 10.0),
            Point2::new(50.0, 90.0),
            GeometrySource::Annotated,
        )
        .unwrap();
        (geom, mask)
    }

    #[test]
    fn torso_uses_hip_midpoint() {
        let mut s = Skeleton::new("img", "a");
        s.set(KeypointName::Neck, Keypoint::at(50.0, 20.0));
        s.set(KeypointName::Hip(Left), Keypoint::at(40.0, 100.0));
        s.set(KeypointName::Hip(Right), Keypoint::at(60.0, 100.0));
        let mask = BodyPartMask::filled(128, 128, MaskLabel::Torso);
        let geom = part_geometry(&s, &mask, EvalPart::Torso).unwrap();
        assert!(geom.k2.dist(Point2::new(50.0, 100.0)) < 1e-12);
    }

    #[test]
    fn hand_extends_to_mask_boundary() {
        let mut s = Skeleton::new("img", "a");
        s.set(KeypointName::Wrist(Left), Keypoint::at(4.0, 0.0));
        s.set(KeypointName::Hand(Left), Keypoint::at(4.0, 10.0));
        let mut mask = BodyPartMask::filled(9, 30, MaskLabel::Background);
        for y in 0..=18 {
            for x in 0..9 {
                mask.set_code(x, y, MaskLabel::Hand(Left).code());
            }
        }
        let geom = part_geometry(&s, &mask, EvalPart::Hand(Left)).unwrap();
        assert!((geom.k2.y - 18.0).abs() <= 0.5, "{:?}", geom.k2);
        assert!((geom.k2.x - 4.0).abs() < 1e-9);
        assert_eq!(geom.source, GeometrySource::Extended);
    }

    #[test]
    fn invisible_keypoint_is_geometry_unavailable() {
        let mut s = Skeleton::new("img", "a");
        s.set(KeypointName::Shoulder(Left), Keypoint::at(10.0, 10.0));
        // Elbow left invisible.
        let mask = BodyPartMask::filled(64, 64, MaskLabel::UpperArm(Left));
        assert!(matches!(
            part_geometry(&s, &mask, EvalPart::UpperArm(Left)),
            Err(Error::GeometryUnavailable(_))
        ));
    }

    #[test]
    fn straight_point_center_and_boundary() {
        let (geom, mask) = rect_torso_geom();
        let center = straight_point(&geom, &mask, 0.5, 0.0, Side::Right).unwrap();
        assert!(center.dist(Point2::new(50.0, 50.0)) < 1e-9);
        // Axis points down; its left normal points toward +x.
        let left = straight_point(&geom, &mask, 0.5, 1.0, Side::Left).unwrap();
        assert!((left.x - 60.0).abs() <= 0.5, "{left:?}");
        let right = straight_point(&geom, &mask, 0.5, 1.0, Side::Right).unwrap();
        assert!((right.x - 40.0).abs() <= 0.5, "{right:?}");
    }

    #[test]
    fn straight_point_outside_mask_fails() {
        let (geom, mask) = rect_torso_geom();
        let mut geom = geom;
        geom.k1 = Point2::new(100.0, 10.0);
        geom.k2 = Point2::new(100.0, 90.0);
        geom.axis = LineQuery::new(geom.k1, geom.k2 - geom.k1).unwrap();
        assert!(matches!(
            straight_point(&geom, &mask, 0.5, 0.5, Side::Left),
            Err(Error::GenerationFailed(_))
        ));
    }

    #[test]
    fn head_angle_q_zero_is_head_keypoint() {
        let (skeleton, mask) = AthleteSpec::t_pose("img", "a").build();
        let head = skeleton.visible_pos(KeypointName::Head).unwrap();
        for k in 0..12 {
            let alpha = k as f64 * std::f64::consts::TAU / 12.0;
            let p = head_angle_point(&skeleton, &mask, alpha, 0.0).unwrap();
            assert!(p.dist(head) < 1e-9);
        }
    }

    #[test]
    fn head_angle_opposite_angles_are_collinear() {
        let (skeleton, mask) = AthleteSpec::t_pose("img", "a").build();
        let head = skeleton.visible_pos(KeypointName::Head).unwrap();
        let alpha = 0.7;
        let a = head_angle_point(&skeleton, &mask, alpha, 1.0).unwrap();
        let b = head_angle_point(&skeleton, &mask, alpha + std::f64::consts::PI, 1.0).unwrap();
        // Both lie on the same line through the head keypoint, on opposite
        // sides.
        let da = a - head;
        let db = b - head;
        assert!(da.cross(db).abs() < 1.0, "not collinear: {da:?} {db:?}");
        assert!(da.dot(db) < 0.0, "same side: {da:?} {db:?}");
    }

    #[test]
    fn bending_angle_straight_and_right() {
        let mut s = Skeleton::new("img", "a");
        s.set(KeypointName::Hip(Left), Keypoint::at(50.0, 10.0));
        s.set(KeypointName::Knee(Left), Keypoint::at(50.0, 60.0));
        s.set(KeypointName::Ankle(Left), Keypoint::at(50.0, 110.0));
        let beta = bending_angle(&s, EvalPart::Knee(Left)).unwrap();
        assert!((beta - std::f64::consts::PI).abs() < 1e-9);

        s.set(KeypointName::Ankle(Left), Keypoint::at(100.0, 60.0));
        let beta = bending_angle(&s, EvalPart::Knee(Left)).unwrap();
        assert!((beta - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    }

    #[test]
    fn bending_angle_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let mut s = Skeleton::new("img", "a");
            let hip = Point2::new(rng.gen_range(20.0..80.0), rng.gen_range(20.0..80.0));
            let knee = Point2::new(rng.gen_range(20.0..80.0), rng.gen_range(20.0..80.0));
            let ankle = Point2::new(rng.gen_range(20.0..80.0), rng.gen_range(20.0..80.0));
            if hip.dist(knee) < 1.0 || ankle.dist(knee) < 1.0 {
                continue;
            }
            s.set(KeypointName::Hip(Left), Keypoint::at(hip.x, hip.y));
            s.set(KeypointName::Knee(Left), Keypoint::at(knee.x, knee.y));
            s.set(KeypointName::Ankle(Left), Keypoint::at(ankle.x, ankle.y));
            let beta = bending_angle(&s, EvalPart::Knee(Left)).unwrap();
            let u = hip - knee;
            let w = ankle - knee;
            let expect = (u.dot(w) / (u.norm() * w.norm())).clamp(-1.0, 1.0).acos();
            assert!((beta - expect).abs() < 1e-9);
        }
    }

    fn l_shape_fixture() -> (Skeleton, BodyPartMask) {
        let mut s = Skeleton::new("img", "a");
        s.set(KeypointName::Hip(Left), Keypoint::at(30.0, 20.0));
        s.set(KeypointName::Knee(Left), Keypoint::at(30.0, 80.0));
        s.set(KeypointName::Ankle(Left), Keypoint::at(90.0, 80.0));
        let mut mask = BodyPartMask::filled(128, 128, MaskLabel::Background);
        crate::synthetic::fill_capsule(
            &mut mask,
            Point2::new(30.0, 20.0),
            Point2::new(30.0, 80.0),
            10.0,
            MaskLabel::Thigh(Left),
        );
        crate::synthetic::fill_capsule(
            &mut mask,
            Point2::new(30.0, 80.0),
            Point2::new(90.0, 80.0),
            10.0,
            MaskLabel::LowerLeg(Left),
        );
        (s, mask)
    }

    #[test]
    fn anchor_at_inner_corner_of_l_shape() {
        let (s, mask) = l_shape_fixture();
        let ctx = anchor_point(&s, &mask, EvalPart::Knee(Left)).unwrap();
        assert!((ctx.beta - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        // Inner corner of the L: up and to the right of the knee.
        assert!(
            ctx.anchor.dist(Point2::new(40.0, 70.0)) <= 1.5,
            "anchor {:?}",
            ctx.anchor
        );
    }

    #[test]
    fn anchor_classifies_to_same_side_of_both_axes() {
        for spec in [
            AthleteSpec::runner("img", "a"),
            AthleteSpec::t_pose("img", "a"),
        ] {
            let (s, mask) = spec.build();
            for joint in [
                EvalPart::Elbow(Left),
                EvalPart::Elbow(Right),
                EvalPart::Knee(Left),
                EvalPart::Knee(Right),
            ] {
                let ctx = anchor_point(&s, &mask, joint).unwrap();
                let su = side_of(&ctx.upper.axis, ctx.anchor);
                let sl = side_of(&ctx.lower.axis, ctx.anchor);
                assert_ne!(su, LineSide::On, "{joint:?}");
                assert_eq!(su, sl, "{joint:?}: anchor not on the inner side");
            }
        }
    }

    #[test]
    fn bent_start_is_perpendicular_to_upper_part() {
        let (s, mask) = l_shape_fixture();
        let ctx = anchor_point(&s, &mask, EvalPart::Knee(Left)).unwrap();
        let frame = bent_frame(&ctx, &mask, 0.0).unwrap();
        assert!(
            frame.direction.dot(ctx.upper.axis.direction).abs() < 1e-9,
            "start not perpendicular"
        );
        // Inner interpolation stays between the axis point and the anchor.
        let inner = bent_point(&ctx, &mask, 0.0, 0.5, BentSide::Inner).unwrap();
        let mid = (frame.k_i + ctx.anchor) * 0.5;
        assert!(inner.dist(mid) < 1e-9);
    }

    #[test]
    fn bent_end_lies_on_lower_axis() {
        let (s, mask) = l_shape_fixture();
        let ctx = anchor_point(&s, &mask, EvalPart::Knee(Left)).unwrap();
        let p = bent_point(&ctx, &mask, 1.0, 0.0, BentSide::Inner).unwrap();
        let (_, proj) = project_onto(&ctx.lower.axis, p);
        assert!(p.dist(proj) < 1e-9, "{p:?} not on lower axis");
    }

    #[test]
    fn collapse_false_on_straight_and_runner() {
        for spec in [
            AthleteSpec::t_pose("img", "a"),
            AthleteSpec::runner("img", "a"),
        ] {
            let (s, mask) = spec.build();
            for joint in [
                EvalPart::Elbow(Left),
                EvalPart::Elbow(Right),
                EvalPart::Knee(Left),
                EvalPart::Knee(Right),
            ] {
                assert!(!detect_collapse(&s, &mask, joint).unwrap(), "{joint:?}");
            }
        }
    }

    #[test]
    fn collapse_true_on_fold_back() {
        let (s, mask) = AthleteSpec::fold_back("img", "a").build();
        assert!(detect_collapse(&s, &mask, EvalPart::Knee(Right)).unwrap());
    }

    #[test]
    fn collapse_invariant_under_translation() {
        let (s, mask) = AthleteSpec::fold_back("img", "a").build();
        let (dx, dy) = (7.0, -5.0);
        let mut s2 = s.clone();
        for name in crate::dataset_io::KEYPOINT_ORDER {
            let kp = s.get(name);
            s2.set(
                name,
                Keypoint {
                    pos: kp.pos + Point2::new(dx, dy),
                    visible: kp.visible,
                },
            );
        }
        let mut mask2 = BodyPartMask::filled(mask.width(), mask.height(), MaskLabel::Background);
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                let sx = x as i64 - dx as i64;
                let sy = y as i64 - dy as i64;
                if sx >= 0 && sy >= 0 && (sx as u32) < mask.width() && (sy as u32) < mask.height() {
                    mask2.set_code(x, y, mask.code_at(sx as u32, sy as u32));
                }
            }
        }
        assert_eq!(
            detect_collapse(&s, &mask, EvalPart::Knee(Right)).unwrap(),
            detect_collapse(&s2, &mask2, EvalPart::Knee(Right)).unwrap()
        );
    }

    #[test]
    fn sample_query_is_deterministic() {
        let a = sample_query(
            EvalPart::Thigh(Left),
            HeadStrategy::Extension,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        let b = sample_query(
            EvalPart::Thigh(Left),
            HeadStrategy::Extension,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert_eq!(a, b);
    }

    #[test]
    fn sample_query_p_mean_is_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_query(EvalPart::Torso, HeadStrategy::Extension, &mut rng).p)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn sample_query_head_angles_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let q = sample_query(EvalPart::Head, HeadStrategy::Angle, &mut rng);
            let alpha = q.alpha().unwrap();
            assert!((0.0..std::f64::consts::TAU).contains(&alpha));
        }
    }

    #[test]
    fn generated_points_stay_on_part_labels() {
        let (s, mask) = AthleteSpec::runner("img", "a").build();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut ok = 0;
        let mut total = 0;
        for part in EVAL_PARTS {
            for _ in 0..60 {
                let query = sample_query(part, HeadStrategy::Angle, &mut rng);
                total += 1;
                match generate(&s, &mask, &query) {
                    Ok(point) => {
                        ok += 1;
                        let labels = if part.is_joint() {
                            part.primary_labels()
                        } else {
                            // Widened at joints, so accept any foreground.
                            LabelSet::foreground()
                        };
                        assert!(
                            mask.in_set(point, labels),
                            "{} point {point:?} off mask",
                            part.name()
                        );
                    }
                    Err(e) if e.is_skippable() => {}
                    Err(e) => panic!("unexpected error: {e}"),
                }
            }
        }
        assert!(ok as f64 >= total as f64 * 0.9, "only {ok}/{total} generated");
    }
}
