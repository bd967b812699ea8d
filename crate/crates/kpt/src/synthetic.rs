//! Procedural athletes: a skeleton plus a matching body-part mask drawn from
//! capsules and a head disk. Used for the normalized-pose template, the test
//! fixtures and the runnable examples.
//!
//! Parts are painted in a fixed order (torso, arms, hands, legs, feet, head)
//! so overlapping regions around joints get the label of the distal part.
//! Painting is mirror-symmetric whenever the keypoint layout is.

use rand::Rng;

use crate::dataset_io::{
    BodyPartMask, Keypoint, KeypointName, MaskLabel, Side, Skeleton,
};
use crate::geom::Point2;

/// Half thicknesses of the drawn parts, in pixels.
#[derive(Debug, Clone)]
pub struct PartRadii {
    pub head: f64,
    pub torso: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    pub hand: f64,
    pub thigh: f64,
    pub lower_leg: f64,
    pub foot: f64,
}

impl Default for PartRadii {
    fn default() -> Self {
        PartRadii {
            head: 30.0,
            torso: 35.0,
            upper_arm: 14.0,
            forearm: 11.0,
            hand: 9.0,
            thigh: 12.0,
            lower_leg: 11.0,
            foot: 9.0,
        }
    }
}

/// A drawable athlete: canvas size, keypoint layout and part thicknesses.
#[derive(Debug, Clone)]
pub struct AthleteSpec {
    pub width: u32,
    pub height: u32,
    pub skeleton: Skeleton,
    pub radii: PartRadii,
    /// The hand capsule runs from the wrist to
    /// `wrist + (hand - wrist) * hand_extend`, so the mask reaches beyond the
    /// annotated hand keypoint the way fingers do.
    pub hand_extend: f64,
}

impl AthleteSpec {
    /// Upright T pose: arms horizontal, hands hanging down, feet turned
    /// outwards. Every part is fully visible and every limb is straight.
    pub fn t_pose(image_id: &str, athlete_id: &str) -> AthleteSpec {
        let (w, h) = (360u32, 340u32);
        let cx = (w - 1) as f64 / 2.0;
        let mut s = Skeleton::new(image_id, athlete_id);
        let mut set = |name: KeypointName, x: f64, y: f64| s.set(name, Keypoint::at(x, y));
        set(KeypointName::Head, cx, 46.0);
        set(KeypointName::Neck, cx, 86.0);
        for side in [Side::Left, Side::Right] {
            // Left body parts drawn on the image-left half.
            let m = |x: f64| match side {
                Side::Left => x,
                Side::Right => (w - 1) as f64 - x,
            };
            set(KeypointName::Shoulder(side), m(126.5), 96.0);
            set(KeypointName::Elbow(side), m(74.5), 96.0);
            set(KeypointName::Wrist(side), m(26.5), 96.0);
            set(KeypointName::Hand(side), m(26.5), 122.0);
            set(KeypointName::Hip(side), m(163.5), 168.0);
            set(KeypointName::Knee(side), m(163.5), 232.0);
            set(KeypointName::Ankle(side), m(163.5), 290.0);
            set(KeypointName::Heel(side), m(163.5), 306.0);
            set(KeypointName::ToeTip(side), m(113.5), 306.0);
        }
        AthleteSpec {
            width: w,
            height: h,
            skeleton: s,
            radii: PartRadii::default(),
            hand_extend: 1.5,
        }
    }

    /// A running pose with moderately bent elbows and knees. All keypoints
    /// visible; limbs are bent but nowhere near collapse.
    pub fn runner(image_id: &str, athlete_id: &str) -> AthleteSpec {
        let (w, h) = (320u32, 340u32);
        let mut s = Skeleton::new(image_id, athlete_id);
        let mut set = |name: KeypointName, x: f64, y: f64| s.set(name, Keypoint::at(x, y));
        set(KeypointName::Head, 150.0, 42.0);
        set(KeypointName::Neck, 150.0, 76.0);
        set(KeypointName::Shoulder(Side::Left), 128.0, 88.0);
        set(KeypointName::Shoulder(Side::Right), 172.0, 88.0);
        // Left arm bent forward, right arm bent back.
        set(KeypointName::Elbow(Side::Left), 84.0, 118.0);
        set(KeypointName::Wrist(Side::Left), 102.0, 162.0);
        set(KeypointName::Hand(Side::Left), 114.0, 184.0);
        set(KeypointName::Elbow(Side::Right), 216.0, 120.0);
        set(KeypointName::Wrist(Side::Right), 200.0, 164.0);
        set(KeypointName::Hand(Side::Right), 190.0, 186.0);
        set(KeypointName::Hip(Side::Left), 138.0, 168.0);
        set(KeypointName::Hip(Side::Right), 162.0, 168.0);
        // Left leg striding forward, right leg trailing with a strong bend.
        set(KeypointName::Knee(Side::Left), 104.0, 226.0);
        set(KeypointName::Ankle(Side::Left), 122.0, 290.0);
        set(KeypointName::Heel(Side::Left), 126.0, 302.0);
        set(KeypointName::ToeTip(Side::Left), 162.0, 314.0);
        set(KeypointName::Knee(Side::Right), 196.0, 222.0);
        set(KeypointName::Ankle(Side::Right), 238.0, 268.0);
        set(KeypointName::Heel(Side::Right), 248.0, 276.0);
        set(KeypointName::ToeTip(Side::Right), 276.0, 248.0);
        AthleteSpec {
            width: w,
            height: h,
            skeleton: s,
            radii: PartRadii {
                torso: 26.0,
                head: 24.0,
                ..PartRadii::default()
            },
            hand_extend: 1.5,
        }
    }

    /// A pose whose right lower leg is folded back along the thigh, the
    /// degenerate situation where the intersection sides swap between the
    /// upper and lower part of the knee.
    pub fn fold_back(image_id: &str, athlete_id: &str) -> AthleteSpec {
        let mut spec = AthleteSpec::runner(image_id, athlete_id);
        let s = &mut spec.skeleton;
        s.set(KeypointName::Hip(Side::Right), Keypoint::at(168.0, 150.0));
        s.set(KeypointName::Knee(Side::Right), Keypoint::at(172.0, 240.0));
        // Ankle back up right next to the hip: the lower leg runs opposite
        // to the thigh.
        s.set(KeypointName::Ankle(Side::Right), Keypoint::at(186.0, 158.0));
        s.set(KeypointName::Heel(Side::Right), Keypoint::at(190.0, 148.0));
        s.set(KeypointName::ToeTip(Side::Right), Keypoint::at(206.0, 172.0));
        spec
    }

    /// Draws the mask for this spec. Parts whose keypoints are invisible are
    /// left unpainted, which is how occlusions are simulated.
    pub fn build_mask(&self) -> BodyPartMask {
        let mut mask = BodyPartMask::filled(self.width, self.height, MaskLabel::Background);
        let s = &self.skeleton;
        let seg = |a: KeypointName, b: KeypointName| -> Option<(Point2, Point2)> {
            let (ka, kb) = (s.get(a), s.get(b));
            (ka.visible && kb.visible).then_some((ka.pos, kb.pos))
        };

        if let (true, true, true) = (
            s.get(KeypointName::Neck).visible,
            s.get(KeypointName::Hip(Side::Left)).visible,
            s.get(KeypointName::Hip(Side::Right)).visible,
        ) {
            let neck = s.get(KeypointName::Neck).pos;
            let midhip = (s.get(KeypointName::Hip(Side::Left)).pos
                + s.get(KeypointName::Hip(Side::Right)).pos)
                * 0.5;
            fill_capsule(&mut mask, neck, midhip, self.radii.torso, MaskLabel::Torso);
        }
        for side in [Side::Left, Side::Right] {
            if let Some((a, b)) = seg(KeypointName::Shoulder(side), KeypointName::Elbow(side)) {
                fill_capsule(&mut mask, a, b, self.radii.upper_arm, MaskLabel::UpperArm(side));
            }
            if let Some((a, b)) = seg(KeypointName::Elbow(side), KeypointName::Wrist(side)) {
                fill_capsule(&mut mask, a, b, self.radii.forearm, MaskLabel::Forearm(side));
            }
            if let Some((a, b)) = seg(KeypointName::Wrist(side), KeypointName::Hand(side)) {
                let end = a + (b - a) * self.hand_extend;
                fill_capsule(&mut mask, a, end, self.radii.hand, MaskLabel::Hand(side));
            }
        }
        for side in [Side::Left, Side::Right] {
            if let Some((a, b)) = seg(KeypointName::Hip(side), KeypointName::Knee(side)) {
                fill_capsule(&mut mask, a, b, self.radii.thigh, MaskLabel::Thigh(side));
            }
            if let Some((a, b)) = seg(KeypointName::Knee(side), KeypointName::Ankle(side)) {
                fill_capsule(&mut mask, a, b, self.radii.lower_leg, MaskLabel::LowerLeg(side));
            }
            if let Some((a, b)) = seg(KeypointName::Heel(side), KeypointName::ToeTip(side)) {
                fill_capsule(&mut mask, a, b, self.radii.foot, MaskLabel::Foot(side));
            }
        }
        if s.get(KeypointName::Head).visible {
            let c = s.get(KeypointName::Head).pos;
            fill_capsule(&mut mask, c, c, self.radii.head, MaskLabel::Head);
        }
        mask
    }

    pub fn build(&self) -> (Skeleton, BodyPartMask) {
        (self.skeleton.clone(), self.build_mask())
    }
}

fn dist_to_segment(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq < 1e-12 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Paints every pixel whose center is within `radius` of the segment.
pub fn fill_capsule(mask: &mut BodyPartMask, a: Point2, b: Point2, radius: f64, label: MaskLabel) {
    let x0 = (a.x.min(b.x) - radius).floor().max(0.0) as u32;
    let x1 = (a.x.max(b.x) + radius).ceil().min(mask.width() as f64 - 1.0) as u32;
    let y0 = (a.y.min(b.y) - radius).floor().max(0.0) as u32;
    let y1 = (a.y.max(b.y) + radius).ceil().min(mask.height() as f64 - 1.0) as u32;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let p = Point2::new(x as f64, y as f64);
            if dist_to_segment(p, a, b) <= radius {
                mask.set_code(x, y, label.code());
            }
        }
    }
}

/// Fills the convex hull of `points` with `label`; returns the hull centroid
/// (an interior point for any non-degenerate hull).
pub fn convex_mask(
    width: u32,
    height: u32,
    label: MaskLabel,
    points: &[Point2],
) -> (BodyPartMask, Point2) {
    let hull = convex_hull(points);
    let mut centroid = Point2::new(0.0, 0.0);
    for p in &hull {
        centroid = centroid + *p;
    }
    centroid = centroid * (1.0 / hull.len() as f64);

    let mut mask = BodyPartMask::filled(width, height, MaskLabel::Background);
    for y in 0..height {
        for x in 0..width {
            let p = Point2::new(x as f64, y as f64);
            if inside_convex(&hull, p) {
                mask.set_code(x, y, label.code());
            }
        }
    }
    (mask, centroid)
}

/// A random convex mask with at least a few pixels of interior around the
/// returned point.
pub fn random_convex_mask<R: Rng>(
    rng: &mut R,
    width: u32,
    height: u32,
    label: MaskLabel,
) -> (BodyPartMask, Point2) {
    let margin = 6.0;
    let n = rng.gen_range(5..12);
    let pts: Vec<Point2> = (0..n)
        .map(|_| {
            Point2::new(
                rng.gen_range(margin..width as f64 - margin),
                rng.gen_range(margin..height as f64 - margin),
            )
        })
        .collect();
    let (mask, centroid) = convex_mask(width, height, label, &pts);
    (mask, centroid)
}

/// A random mask that is star shaped around its center: the boundary radius
/// is a piecewise-linear function of the angle.
pub fn random_star_mask<R: Rng>(
    rng: &mut R,
    width: u32,
    height: u32,
    label: MaskLabel,
) -> (BodyPartMask, Point2) {
    let center = Point2::new(width as f64 / 2.0, height as f64 / 2.0);
    let max_r = (width.min(height) as f64) / 2.0 - 4.0;
    let spokes = rng.gen_range(6..14);
    let radii: Vec<f64> = (0..spokes)
        .map(|_| rng.gen_range(max_r * 0.35..max_r))
        .collect();
    let radius_at = |theta: f64| -> f64 {
        let t = theta.rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU * spokes as f64;
        let i = t.floor() as usize % spokes;
        let frac = t - t.floor();
        radii[i] * (1.0 - frac) + radii[(i + 1) % spokes] * frac
    };
    let mut mask = BodyPartMask::filled(width, height, MaskLabel::Background);
    for y in 0..height {
        for x in 0..width {
            let p = Point2::new(x as f64, y as f64);
            let d = p - center;
            let theta = f64::atan2(d.y, d.x);
            if d.norm() <= radius_at(theta) {
                mask.set_code(x, y, label.code());
            }
        }
    }
    (mask, center)
}

fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap().then(a.y.partial_cmp(&b.y).unwrap()));
    pts.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Point2, a: Point2, b: Point2| (a - o).cross(b - o);
    let mut lower: Vec<Point2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn inside_convex(hull: &[Point2], p: Point2) -> bool {
    if hull.len() < 3 {
        return false;
    }
    let mut sign = 0.0f64;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let c = (b - a).cross(p - a);
        if c.abs() < 1e-12 {
            continue;
        }
        if sign == 0.0 {
            sign = c.signum();
        } else if c.signum() != sign {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset_io::MASK_LABEL_ORDER;

    #[test]
    fn t_pose_paints_all_parts() {
        let (_, mask) = AthleteSpec::t_pose("img", "a").build();
        for label in MASK_LABEL_ORDER {
            assert!(
                mask.count_label(label) >= 100,
                "{label:?} has {} px",
                mask.count_label(label)
            );
        }
    }

    #[test]
    fn t_pose_is_mirror_symmetric() {
        let (_, mask) = AthleteSpec::t_pose("img", "a").build();
        assert_eq!(mask.mirrored(), mask);
    }

    #[test]
    fn invisible_keypoints_leave_parts_unpainted() {
        let mut spec = AthleteSpec::t_pose("img", "a");
        spec.skeleton
            .set(KeypointName::Hand(Side::Left), Keypoint::invisible());
        let mask = spec.build_mask();
        assert_eq!(mask.count_label(MaskLabel::Hand(Side::Left)), 0);
        assert!(mask.count_label(MaskLabel::Hand(Side::Right)) > 0);
    }

    #[test]
    fn convex_mask_contains_centroid() {
        let pts = [
            Point2::new(10.0, 10.0),
            Point2::new(50.0, 12.0),
            Point2::new(55.0, 48.0),
            Point2::new(12.0, 40.0),
        ];
        let (mask, centroid) = convex_mask(64, 64, MaskLabel::Torso, &pts);
        assert!(mask.in_set(centroid, crate::dataset_io::LabelSet::of(&[MaskLabel::Torso])));
    }
}
