//! Machine encodings of keypoint queries.
//!
//! Two encodings exist. The vector form spreads the longitudinal fraction
//! over the entries of the part's enclosing keypoints in a 20-entry keypoint
//! vector, puts the thickness fraction into a 3-entry thickness vector
//! (left slot, center, right slot) and keeps a single-entry angle vector
//! that is zero except for head-angle queries. The normalized-pose form runs
//! the ordinary generators on a canonical T-pose template and reports the
//! resulting point in template-normalized coordinates.

use crate::dataset_io::{
    save_annotations, save_mask, BodyPartMask, KeypointName, LabelSet, MaskLabel, Side, Skeleton,
};
use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::gt_generation::{generate, EvalPart, HeadQuery, KeypointQuery};
use crate::synthetic::AthleteSpec;

pub const KEYPOINT_VEC_LEN: usize = 20;
pub const THICKNESS_VEC_LEN: usize = 3;

/// The vector-triple encoding of one query.
///
/// Invariants: keypoint entries sum to 1, thickness entries sum to 1, the
/// angle entry is `alpha / 2pi` for head-angle queries and 0 otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorEncoding {
    pub keypoint_vec: [f64; KEYPOINT_VEC_LEN],
    pub thickness_vec: [f64; THICKNESS_VEC_LEN],
    pub angle_vec: [f64; 1],
}

impl VectorEncoding {
    /// All 24 entries in file order: keypoint, thickness, angle.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(24);
        out.extend_from_slice(&self.keypoint_vec);
        out.extend_from_slice(&self.thickness_vec);
        out.extend_from_slice(&self.angle_vec);
        out
    }

    pub fn from_flat(values: &[f64]) -> Result<VectorEncoding> {
        if values.len() != 24 {
            return Err(Error::Decode(format!(
                "expected 24 encoding values, found {}",
                values.len()
            )));
        }
        let mut enc = VectorEncoding {
            keypoint_vec: [0.0; KEYPOINT_VEC_LEN],
            thickness_vec: [0.0; THICKNESS_VEC_LEN],
            angle_vec: [0.0],
        };
        enc.keypoint_vec.copy_from_slice(&values[..20]);
        enc.thickness_vec.copy_from_slice(&values[20..23]);
        enc.angle_vec[0] = values[23];
        Ok(enc)
    }
}

fn idx(name: KeypointName) -> usize {
    name.index()
}

/// Encodes a query as the vector triple.
pub fn encode_vector(query: &KeypointQuery) -> Result<VectorEncoding> {
    query.validate()?;
    let mut kv = [0.0; KEYPOINT_VEC_LEN];
    let mut av = [0.0];
    let p = query.p;

    match (query.part, &query.head) {
        (EvalPart::Head, Some(HeadQuery::Angle { alpha })) => {
            kv[idx(KeypointName::Head)] = 1.0;
            av[0] = alpha / std::f64::consts::TAU;
        }
        (EvalPart::Head, _) => {
            kv[idx(KeypointName::Head)] = p;
            kv[idx(KeypointName::Neck)] = 1.0 - p;
        }
        (EvalPart::Torso, _) => {
            kv[idx(KeypointName::Neck)] = p;
            kv[idx(KeypointName::Hip(Side::Left))] = 0.5 * (1.0 - p);
            kv[idx(KeypointName::Hip(Side::Right))] = 0.5 * (1.0 - p);
        }
        (EvalPart::UpperArm(s), _) => {
            kv[idx(KeypointName::Shoulder(s))] = p;
            kv[idx(KeypointName::Elbow(s))] = 1.0 - p;
        }
        (EvalPart::Forearm(s), _) => {
            kv[idx(KeypointName::Elbow(s))] = p;
            kv[idx(KeypointName::Wrist(s))] = 1.0 - p;
        }
        (EvalPart::Hand(s), _) => {
            kv[idx(KeypointName::Wrist(s))] = p;
            kv[idx(KeypointName::Hand(s))] = 1.0 - p;
        }
        (EvalPart::Thigh(s), _) => {
            kv[idx(KeypointName::Hip(s))] = p;
            kv[idx(KeypointName::Knee(s))] = 1.0 - p;
        }
        (EvalPart::LowerLeg(s), _) => {
            kv[idx(KeypointName::Knee(s))] = p;
            kv[idx(KeypointName::Ankle(s))] = 1.0 - p;
        }
        (EvalPart::Foot(s), _) => {
            kv[idx(KeypointName::Heel(s))] = p;
            kv[idx(KeypointName::ToeTip(s))] = 1.0 - p;
        }
        // Joints span from the keypoint behind the upper part to the one
        // behind the lower part; the rotation fraction plays the
        // longitudinal role.
        (EvalPart::Elbow(s), _) => {
            kv[idx(KeypointName::Shoulder(s))] = 1.0 - p;
            kv[idx(KeypointName::Wrist(s))] = p;
        }
        (EvalPart::Knee(s), _) => {
            kv[idx(KeypointName::Hip(s))] = 1.0 - p;
            kv[idx(KeypointName::Ankle(s))] = p;
        }
    }

    let q = query.q;
    let tv = match (query.part, &query.head, query.side) {
        (EvalPart::Head, Some(HeadQuery::Angle { .. }), _) => [0.0, 1.0 - q, q],
        (_, _, Side::Left) => [q, 1.0 - q, 0.0],
        (_, _, Side::Right) => [0.0, 1.0 - q, q],
    };
    Ok(VectorEncoding {
        keypoint_vec: kv,
        thickness_vec: tv,
        angle_vec: av,
    })
}

const DECODE_TOL: f64 = 1e-9;
const SUPPORT_EPS: f64 = 1e-12;

fn decode_thickness(tv: &[f64; 3]) -> Result<(f64, Side)> {
    for v in tv {
        if !v.is_finite() || *v < -DECODE_TOL || *v > 1.0 + DECODE_TOL {
            return Err(Error::Decode(format!("thickness entry {v} out of range")));
        }
    }
    if (tv.iter().sum::<f64>() - 1.0).abs() > DECODE_TOL {
        return Err(Error::Decode("thickness vector does not sum to 1".into()));
    }
    if tv[0] > SUPPORT_EPS && tv[2] > SUPPORT_EPS {
        return Err(Error::Decode("both thickness side slots set".into()));
    }
    let (q, side) = if tv[0] > SUPPORT_EPS {
        (tv[0], Side::Left)
    } else if tv[2] > SUPPORT_EPS {
        (tv[2], Side::Right)
    } else {
        (0.0, Side::Right)
    };
    if (tv[1] - (1.0 - q)).abs() > DECODE_TOL {
        return Err(Error::Decode(
            "thickness center inconsistent with side slot".into(),
        ));
    }
    Ok((q, side))
}

/// Decodes a vector triple back into the query it encodes.
///
/// Shared-keypoint patterns are ambiguous only at exact endpoints (for
/// example a one-hot neck is torso `p = 1` as well as head-extension
/// `p = 0`); those measure-zero collisions resolve by a fixed priority, see
/// the singleton table below.
pub fn decode_vector(enc: &VectorEncoding) -> Result<KeypointQuery> {
    let kv = &enc.keypoint_vec;
    for v in kv {
        if !v.is_finite() || *v < -DECODE_TOL || *v > 1.0 + DECODE_TOL {
            return Err(Error::Decode(format!("keypoint entry {v} out of range")));
        }
    }
    if (kv.iter().sum::<f64>() - 1.0).abs() > DECODE_TOL {
        return Err(Error::Decode("keypoint vector does not sum to 1".into()));
    }
    let a = enc.angle_vec[0];
    if !a.is_finite() || !(0.0..=1.0).contains(&a) {
        return Err(Error::Decode(format!("angle entry {a} out of range")));
    }
    let (q, side) = decode_thickness(&enc.thickness_vec)?;

    let support: Vec<usize> = (0..KEYPOINT_VEC_LEN)
        .filter(|&i| kv[i] > SUPPORT_EPS)
        .collect();
    let has = |name: KeypointName| support.contains(&idx(name));
    let val = |name: KeypointName| kv[idx(name)];

    let query = match support.len() {
        0 => return Err(Error::Decode("all-zero keypoint vector".into())),
        1 => {
            let name = crate::dataset_io::KEYPOINT_ORDER[support[0]];
            match name {
                KeypointName::Head => {
                    if enc.thickness_vec[0] > SUPPORT_EPS {
                        return Err(Error::Decode(
                            "head-angle thickness must use the right slot".into(),
                        ));
                    }
                    let alpha = a * std::f64::consts::TAU;
                    if alpha >= std::f64::consts::TAU {
                        return Err(Error::Decode("angle entry maps outside [0, 2pi)".into()));
                    }
                    KeypointQuery::head_angle(alpha, q)
                }
                KeypointName::Neck => KeypointQuery::straight(EvalPart::Torso, 1.0, q, side),
                KeypointName::Shoulder(s) => {
                    KeypointQuery::straight(EvalPart::UpperArm(s), 1.0, q, side)
                }
                KeypointName::Elbow(s) => {
                    KeypointQuery::straight(EvalPart::UpperArm(s), 0.0, q, side)
                }
                KeypointName::Wrist(s) => {
                    KeypointQuery::straight(EvalPart::Forearm(s), 0.0, q, side)
                }
                KeypointName::Hand(s) => KeypointQuery::straight(EvalPart::Hand(s), 0.0, q, side),
                KeypointName::Hip(s) => KeypointQuery::straight(EvalPart::Thigh(s), 1.0, q, side),
                KeypointName::Knee(s) => KeypointQuery::straight(EvalPart::Thigh(s), 0.0, q, side),
                KeypointName::Ankle(s) => {
                    KeypointQuery::straight(EvalPart::LowerLeg(s), 0.0, q, side)
                }
                KeypointName::Heel(s) => KeypointQuery::straight(EvalPart::Foot(s), 1.0, q, side),
                KeypointName::ToeTip(s) => {
                    KeypointQuery::straight(EvalPart::Foot(s), 0.0, q, side)
                }
            }
        }
        2 => {
            let pair_query = 'pair: {
                if has(KeypointName::Head) && has(KeypointName::Neck) {
                    break 'pair Some(KeypointQuery::head_extension(
                        val(KeypointName::Head),
                        q,
                        side,
                    ));
                }
                if has(KeypointName::Hip(Side::Left)) && has(KeypointName::Hip(Side::Right)) {
                    let l = val(KeypointName::Hip(Side::Left));
                    let r = val(KeypointName::Hip(Side::Right));
                    if (l - r).abs() > DECODE_TOL {
                        return Err(Error::Decode("unequal hip entries for torso".into()));
                    }
                    break 'pair Some(KeypointQuery::straight(EvalPart::Torso, 0.0, q, side));
                }
                for s in [Side::Left, Side::Right] {
                    if has(KeypointName::Shoulder(s)) && has(KeypointName::Elbow(s)) {
                        break 'pair Some(KeypointQuery::straight(
                            EvalPart::UpperArm(s),
                            val(KeypointName::Shoulder(s)),
                            q,
                            side,
                        ));
                    }
                    if has(KeypointName::Elbow(s)) && has(KeypointName::Wrist(s)) {
                        break 'pair Some(KeypointQuery::straight(
                            EvalPart::Forearm(s),
                            val(KeypointName::Elbow(s)),
                            q,
                            side,
                        ));
                    }
                    if has(KeypointName::Wrist(s)) && has(KeypointName::Hand(s)) {
                        break 'pair Some(KeypointQuery::straight(
                            EvalPart::Hand(s),
                            val(KeypointName::Wrist(s)),
                            q,
                            side,
                        ));
                    }
                    if has(KeypointName::Hip(s)) && has(KeypointName::Knee(s)) {
                        break 'pair Some(KeypointQuery::straight(
                            EvalPart::Thigh(s),
                            val(KeypointName::Hip(s)),
                            q,
                            side,
                        ));
                    }
                    if has(KeypointName::Knee(s)) && has(KeypointName::Ankle(s)) {
                        break 'pair Some(KeypointQuery::straight(
                            EvalPart::LowerLeg(s),
                            val(KeypointName::Knee(s)),
                            q,
                            side,
                        ));
                    }
                    if has(KeypointName::Heel(s)) && has(KeypointName::ToeTip(s)) {
                        break 'pair Some(KeypointQuery::straight(
                            EvalPart::Foot(s),
                            val(KeypointName::Heel(s)),
                            q,
                            side,
                        ));
                    }
                    if has(KeypointName::Shoulder(s)) && has(KeypointName::Wrist(s)) {
                        break 'pair Some(KeypointQuery::straight(
                            EvalPart::Elbow(s),
                            val(KeypointName::Wrist(s)),
                            q,
                            side,
                        ));
                    }
                    if has(KeypointName::Hip(s)) && has(KeypointName::Ankle(s)) {
                        break 'pair Some(KeypointQuery::straight(
                            EvalPart::Knee(s),
                            val(KeypointName::Ankle(s)),
                            q,
                            side,
                        ));
                    }
                }
                None
            };
            pair_query.ok_or_else(|| {
                Error::Decode("keypoint support matches no part pattern".into())
            })?
        }
        3 => {
            if has(KeypointName::Neck)
                && has(KeypointName::Hip(Side::Left))
                && has(KeypointName::Hip(Side::Right))
            {
                let p = val(KeypointName::Neck);
                let l = val(KeypointName::Hip(Side::Left));
                let r = val(KeypointName::Hip(Side::Right));
                if (l - r).abs() > DECODE_TOL {
                    return Err(Error::Decode("unequal hip entries for torso".into()));
                }
                if (l - 0.5 * (1.0 - p)).abs() > DECODE_TOL {
                    return Err(Error::Decode(
                        "hip entries inconsistent with neck entry".into(),
                    ));
                }
                KeypointQuery::straight(EvalPart::Torso, p, q, side)
            } else {
                return Err(Error::Decode(
                    "keypoint support matches no part pattern".into(),
                ));
            }
        }
        n => return Err(Error::Decode(format!("{n} keypoint entries set"))),
    };

    if query.alpha().is_none() && a.abs() > DECODE_TOL {
        return Err(Error::Decode(
            "angle entry set for a non-head-angle query".into(),
        ));
    }
    query.validate().map_err(|e| Error::Decode(e.to_string()))?;
    Ok(query)
}

// ---------------------------------------------------------------------------
// Normalized pose
// ---------------------------------------------------------------------------

pub const TEMPLATE_VERSION: u32 = 1;

/// Geometry of the shipped T-pose template. The default layout is the
/// versioned artifact; tests and the normalized-pose encoding are relative
/// to it.
#[derive(Debug, Clone)]
pub struct TemplateConfig {
    pub version: u32,
    pub spec: AthleteSpec,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        TemplateConfig {
            version: TEMPLATE_VERSION,
            spec: AthleteSpec::t_pose("template", "template"),
        }
    }
}

/// Canonical T-pose with per-part masks, used as the coordinate frame of
/// the normalized-pose encoding.
#[derive(Debug, Clone)]
pub struct NormPoseTemplate {
    pub version: u32,
    pub skeleton: Skeleton,
    pub mask: BodyPartMask,
}

impl NormPoseTemplate {
    pub fn width(&self) -> u32 {
        self.mask.width()
    }

    pub fn height(&self) -> u32 {
        self.mask.height()
    }

    /// Writes the template as the standard mask PNG + annotation CSV pair.
    pub fn save(&self, mask_path: &std::path::Path, csv_path: &std::path::Path) -> Result<()> {
        save_mask(
            mask_path,
            &self.mask,
            &[("Comment".into(), format!("template v{}", self.version))],
        )?;
        save_annotations(
            &[self.skeleton.clone()],
            csv_path,
            &[format!("template v{}", self.version)],
        )
    }
}

/// Builds the shipped procedural template; deterministic.
pub fn build_normpose_template() -> NormPoseTemplate {
    let config = TemplateConfig::default();
    let (skeleton, mask) = config.spec.build();
    NormPoseTemplate {
        version: config.version,
        skeleton,
        mask,
    }
}

/// A query expressed as normalized template coordinates in [0, 1]^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormPoseEncoding {
    pub x: f64,
    pub y: f64,
}

/// Encodes a query by running the ordinary generators on the template and
/// normalizing: the template's upper-left pixel center maps to (0, 0) and
/// the lower-right one to (1, 1).
pub fn encode_normpose(
    query: &KeypointQuery,
    template: &NormPoseTemplate,
) -> Result<NormPoseEncoding> {
    let point = generate(&template.skeleton, &template.mask, query)
        .map_err(|e| Error::Encode(format!("template generation failed: {e}")))?;
    let x = point.x / (template.width() as f64 - 1.0);
    let y = point.y / (template.height() as f64 - 1.0);
    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
        return Err(Error::Encode(format!(
            "template point ({}, {}) escapes the normalized square",
            point.x, point.y
        )));
    }
    Ok(NormPoseEncoding { x, y })
}

/// Template pixel both encodings would land on; used to compare encodings at
/// template resolution.
pub fn denormalize(enc: &NormPoseEncoding, template: &NormPoseTemplate) -> Point2 {
    Point2::new(
        enc.x * (template.width() as f64 - 1.0),
        enc.y * (template.height() as f64 - 1.0),
    )
}
