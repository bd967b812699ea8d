//! Reproducible evaluation: the fixed per-part query grid, PCK and PCT.
//!
//! The grid holds 25 equally spaced longitudinal positions per part (the
//! rotation fraction for joints, 25 line orientations for the head-angle
//! variant), each with thicknesses 0, 0.5 and 1 on both sides; the central
//! entries coincide across sides and are kept once, giving 125 queries per
//! part and 2250 for a fully visible athlete.
//!
//! PCK measures the distance to the ground truth against the left-shoulder
//! to right-hip distance. PCT recovers the predicted thickness through the
//! query's own construction line and compares it to the queried thickness,
//! adding instead of subtracting when the prediction lands on the other
//! side.

use std::collections::HashMap;

use crate::dataset_io::{BodyPartMask, KeypointName, Side, Skeleton};
use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::gt_generation::{
    anchor_point, bent_frame, bent_side_from_lr, head_angle_frame, part_geometry, straight_frame,
    BentSide, EvalPart, HeadQuery, HeadStrategy, KeypointQuery, EVAL_PARTS,
};

pub const POSITIONS_PER_PART: usize = 25;
pub const QUERIES_PER_PART: usize = 125;
pub const FULL_GRID: usize = QUERIES_PER_PART * 18;

/// Thickness levels of the grid; q = 0 is shared between sides.
const GRID_Q: [f64; 2] = [0.5, 1.0];

#[derive(Debug, Clone)]
pub struct GridEntry {
    pub query: KeypointQuery,
    pub gt: Point2,
}

/// The evaluation grid of one image.
#[derive(Debug, Clone)]
pub struct EvalGrid {
    pub image_id: String,
    pub head_strategy: HeadStrategy,
    pub entries: Vec<GridEntry>,
    /// Queries that could not be generated (occluded parts, mask failures).
    pub skipped: usize,
    pub per_part: HashMap<EvalPart, usize>,
}

impl EvalGrid {
    /// Total size of the nominal grid: generated entries plus skips.
    pub fn nominal_size(&self) -> usize {
        self.entries.len() + self.skipped
    }
}

fn grid_queries_for_part(part: EvalPart, head_strategy: HeadStrategy) -> Vec<KeypointQuery> {
    let mut queries = Vec::with_capacity(QUERIES_PER_PART);
    for j in 0..POSITIONS_PER_PART {
        if part == EvalPart::Head && head_strategy == HeadStrategy::Angle {
            // 25 line orientations over [0, pi); the side picks the ray
            // endpoint, which is the angle itself or the opposite one.
            let base = j as f64 * std::f64::consts::PI / POSITIONS_PER_PART as f64;
            queries.push(KeypointQuery::head_angle(base, 0.0));
            for q in GRID_Q {
                for side in [Side::Left, Side::Right] {
                    let alpha = match side {
                        Side::Right => base,
                        Side::Left => base + std::f64::consts::PI,
                    };
                    queries.push(KeypointQuery::head_angle(alpha, q));
                }
            }
        } else {
            let p = j as f64 / (POSITIONS_PER_PART - 1) as f64;
            let make = |p: f64, q: f64, side: Side| -> KeypointQuery {
                if part == EvalPart::Head {
                    KeypointQuery::head_extension(p, q, side)
                } else {
                    KeypointQuery::straight(part, p, q, side)
                }
            };
            queries.push(make(p, 0.0, Side::Right));
            for q in GRID_Q {
                for side in [Side::Left, Side::Right] {
                    queries.push(make(p, q, side));
                }
            }
        }
    }
    queries
}

/// Builds the evaluation grid. Parts with unavailable geometry contribute
/// no entries and count as skipped; individual query failures are skipped
/// the same way. Never aborts.
pub fn make_grid(skeleton: &Skeleton, mask: &BodyPartMask, head_strategy: HeadStrategy) -> EvalGrid {
    let mut grid = EvalGrid {
        image_id: skeleton.image_id.clone(),
        head_strategy,
        entries: Vec::with_capacity(FULL_GRID),
        skipped: 0,
        per_part: HashMap::new(),
    };
    for part in EVAL_PARTS {
        let queries = grid_queries_for_part(part, head_strategy);
        let mut generated = 0usize;

        // Resolve the per-part construction once; per-query work reuses it.
        enum PartCtx {
            Straight(crate::gt_generation::PartGeometry),
            Bent(crate::gt_generation::BentJointContext),
            HeadAngle,
            Unavailable,
        }
        let ctx = if part == EvalPart::Head && head_strategy == HeadStrategy::Angle {
            PartCtx::HeadAngle
        } else if part.is_joint() {
            match anchor_point(skeleton, mask, part) {
                Ok(ctx) => PartCtx::Bent(ctx),
                Err(_) => PartCtx::Unavailable,
            }
        } else {
            match part_geometry(skeleton, mask, part) {
                Ok(geom) => PartCtx::Straight(geom),
                Err(_) => PartCtx::Unavailable,
            }
        };

        for query in queries {
            let gt = match &ctx {
                PartCtx::Unavailable => Err(Error::GeometryUnavailable(part.name())),
                PartCtx::HeadAngle => {
                    crate::gt_generation::head_angle_point(
                        skeleton,
                        mask,
                        query.alpha().expect("angle query"),
                        query.q,
                    )
                }
                PartCtx::Straight(geom) => {
                    crate::gt_generation::straight_point(geom, mask, query.p, query.q, query.side)
                }
                PartCtx::Bent(ctx) => bent_frame(ctx, mask, query.p).and_then(|frame| {
                    let side = bent_side_from_lr(ctx, &frame, query.side)?;
                    let target = match side {
                        BentSide::Inner => ctx.anchor,
                        BentSide::Outer => frame.k_o,
                    };
                    Ok(target * query.q + frame.k_i * (1.0 - query.q))
                }),
            };
            match gt {
                Ok(gt) => {
                    generated += 1;
                    grid.entries.push(GridEntry { query, gt });
                }
                Err(_) => grid.skipped += 1,
            }
        }
        grid.per_part.insert(part, generated);
    }
    grid
}

/// Predictions of one image, keyed by the query's stable string key.
pub type PredictionMap = HashMap<String, Point2>;

pub fn prediction_map(records: &[(KeypointQuery, Point2)]) -> PredictionMap {
    records
        .iter()
        .map(|(q, p)| (q.cache_key(), *p))
        .collect()
}

/// Recovers the thickness of a predicted point through the query's
/// construction line: the signed projection from the central point,
/// normalized by the distance to the boundary on the predicted side. Values
/// above 1 mean the prediction is outside the mask.
pub fn thickness_of(
    pred: Point2,
    query: &KeypointQuery,
    skeleton: &Skeleton,
    mask: &BodyPartMask,
) -> Result<(f64, Side)> {
    match (query.part, &query.head) {
        (EvalPart::Head, Some(HeadQuery::Angle { alpha })) => {
            let frame = head_angle_frame(skeleton, mask, *alpha)?;
            let u = (pred - frame.center).dot(frame.line.direction);
            // The generated side (toward the rotated ray's endpoint) is the
            // canonical Right; the opposite endpoint is Left.
            let side = if u > 0.0 {
                Side::Right
            } else if u < 0.0 {
                Side::Left
            } else {
                query.side
            };
            let boundary = match side {
                Side::Right => frame.pair.c_left,
                Side::Left => frame.pair.c_right,
            };
            let denom = frame.center.dist(boundary);
            if denom < 1e-9 {
                return Err(Error::GenerationFailed(
                    "degenerate head cross-section".into(),
                ));
            }
            Ok((u.abs() / denom, side))
        }
        (part, _) if part.is_joint() => {
            let ctx = anchor_point(skeleton, mask, part)?;
            let frame = bent_frame(&ctx, mask, query.p)?;
            let toward_anchor = (ctx.anchor - frame.k_i).normalized().map_err(|_| {
                Error::GenerationFailed("anchor coincides with the axis point".into())
            })?;
            let u = (pred - frame.k_i).dot(toward_anchor);
            let inner_lr = match bent_side_from_lr(&ctx, &frame, Side::Left)? {
                BentSide::Inner => Side::Left,
                BentSide::Outer => Side::Right,
            };
            let (side, boundary) = if u > 0.0 {
                (inner_lr, ctx.anchor)
            } else if u < 0.0 {
                (inner_lr.opposite(), frame.k_o)
            } else {
                let side = query.side;
                let bent = bent_side_from_lr(&ctx, &frame, side)?;
                let boundary = match bent {
                    BentSide::Inner => ctx.anchor,
                    BentSide::Outer => frame.k_o,
                };
                (side, boundary)
            };
            let denom = frame.k_i.dist(boundary);
            if denom < 1e-9 {
                return Err(Error::GenerationFailed(
                    "degenerate joint cross-section".into(),
                ));
            }
            Ok((u.abs() / denom, side))
        }
        (part, _) => {
            let geom = part_geometry(skeleton, mask, part)?;
            let frame = straight_frame(&geom, mask, query.p)?;
            let u = (pred - frame.k_i).dot(frame.ortho.direction);
            let side = if u > 0.0 {
                Side::Left
            } else if u < 0.0 {
                Side::Right
            } else {
                query.side
            };
            let denom = frame.k_i.dist(frame.pair.side(side));
            if denom < 1e-9 {
                return Err(Error::GenerationFailed(
                    "degenerate cross-section".into(),
                ));
            }
            Ok((u.abs() / denom, side))
        }
    }
}

/// Merged part families, matching how left and right instances are reported
/// together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartFamily {
    Head,
    Torso,
    UpperArm,
    Elbow,
    Forearm,
    Hand,
    Thigh,
    Knee,
    LowerLeg,
    Foot,
}

pub const PART_FAMILIES: [PartFamily; 10] = [
    PartFamily::Head,
    PartFamily::Torso,
    PartFamily::UpperArm,
    PartFamily::Elbow,
    PartFamily::Forearm,
    PartFamily::Hand,
    PartFamily::Thigh,
    PartFamily::Knee,
    PartFamily::LowerLeg,
    PartFamily::Foot,
];

impl PartFamily {
    pub fn of(part: EvalPart) -> PartFamily {
        match part {
            EvalPart::Head => PartFamily::Head,
            EvalPart::Torso => PartFamily::Torso,
            EvalPart::UpperArm(_) => PartFamily::UpperArm,
            EvalPart::Elbow(_) => PartFamily::Elbow,
            EvalPart::Forearm(_) => PartFamily::Forearm,
            EvalPart::Hand(_) => PartFamily::Hand,
            EvalPart::Thigh(_) => PartFamily::Thigh,
            EvalPart::Knee(_) => PartFamily::Knee,
            EvalPart::LowerLeg(_) => PartFamily::LowerLeg,
            EvalPart::Foot(_) => PartFamily::Foot,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PartFamily::Head => "head",
            PartFamily::Torso => "torso",
            PartFamily::UpperArm => "upper_arm",
            PartFamily::Elbow => "elbow",
            PartFamily::Forearm => "forearm",
            PartFamily::Hand => "hand",
            PartFamily::Thigh => "thigh",
            PartFamily::Knee => "knee",
            PartFamily::LowerLeg => "lower_leg",
            PartFamily::Foot => "foot",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Counter {
    pub correct: usize,
    pub evaluated: usize,
}

impl Counter {
    pub fn rate(&self) -> f64 {
        if self.evaluated == 0 {
            0.0
        } else {
            self.correct as f64 / self.evaluated as f64
        }
    }

    fn add(&mut self, correct: bool) {
        self.evaluated += 1;
        if correct {
            self.correct += 1;
        }
    }

    fn merge(&mut self, other: &Counter) {
        self.correct += other.correct;
        self.evaluated += other.evaluated;
    }
}

/// Per-part and aggregate PCK/PCT results. All fields are raw counts so
/// reports over disjoint image sets merge exactly.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub pck_thresholds: Vec<f64>,
    pub pct_threshold: f64,
    pub pck: Vec<Counter>,
    pub pct: Counter,
    pub per_part_pct: HashMap<PartFamily, Counter>,
    pub per_part_pck: HashMap<PartFamily, Vec<Counter>>,
    /// Grid queries that produced no comparable pair: generation skips,
    /// missing predictions and thickness recovery failures.
    pub skipped: usize,
    /// Grid size including skips; `pct.evaluated + skipped` equals this.
    pub grid_size: usize,
    /// Images excluded from PCK because a reference keypoint is invisible.
    pub pck_excluded_images: usize,
    pub images: usize,
}

impl MetricReport {
    pub fn merge(&mut self, other: &MetricReport) {
        assert_eq!(self.pck_thresholds, other.pck_thresholds);
        for (a, b) in self.pck.iter_mut().zip(&other.pck) {
            a.merge(b);
        }
        self.pct.merge(&other.pct);
        for family in PART_FAMILIES {
            self.per_part_pct
                .entry(family)
                .or_default()
                .merge(other.per_part_pct.get(&family).unwrap_or(&Counter::default()));
            let entry = self
                .per_part_pck
                .entry(family)
                .or_insert_with(|| vec![Counter::default(); self.pck_thresholds.len()]);
            if let Some(rows) = other.per_part_pck.get(&family) {
                for (a, b) in entry.iter_mut().zip(rows) {
                    a.merge(b);
                }
            }
        }
        self.skipped += other.skipped;
        self.grid_size += other.grid_size;
        self.pck_excluded_images += other.pck_excluded_images;
        self.images += other.images;
    }
}

/// Accumulates metric counts image by image. Merging accumulators is
/// associative and commutative, so per-image work can run in parallel.
#[derive(Debug, Clone)]
pub struct MetricAccumulator {
    report: MetricReport,
}

impl MetricAccumulator {
    pub fn new(pck_thresholds: &[f64], pct_threshold: f64) -> MetricAccumulator {
        MetricAccumulator {
            report: MetricReport {
                pck_thresholds: pck_thresholds.to_vec(),
                pct_threshold,
                pck: vec![Counter::default(); pck_thresholds.len()],
                pct: Counter::default(),
                per_part_pct: PART_FAMILIES
                    .into_iter()
                    .map(|f| (f, Counter::default()))
                    .collect(),
                per_part_pck: PART_FAMILIES
                    .into_iter()
                    .map(|f| (f, vec![Counter::default(); pck_thresholds.len()]))
                    .collect(),
                skipped: 0,
                grid_size: 0,
                pck_excluded_images: 0,
                images: 0,
            },
        }
    }

    /// Scores one image's predictions against its grid.
    pub fn add_image(
        &mut self,
        skeleton: &Skeleton,
        mask: &BodyPartMask,
        grid: &EvalGrid,
        preds: &PredictionMap,
    ) {
        let r = &mut self.report;
        r.images += 1;
        r.grid_size += grid.nominal_size();
        r.skipped += grid.skipped;

        let reference = pck_reference(skeleton);
        if reference.is_none() {
            r.pck_excluded_images += 1;
        }

        for entry in &grid.entries {
            let family = PartFamily::of(entry.query.part);
            let Some(&pred) = preds.get(&entry.query.cache_key()) else {
                r.skipped += 1;
                continue;
            };
            // PCT drives the evaluated/skipped bookkeeping; PCK rides along
            // for every comparable pair with a valid reference.
            match thickness_of(pred, &entry.query, skeleton, mask) {
                Ok((q_hat, side_hat)) => {
                    let diff = if side_hat == entry.query.side {
                        (q_hat - entry.query.q).abs()
                    } else {
                        q_hat + entry.query.q
                    };
                    let correct = diff <= r.pct_threshold;
                    r.pct.add(correct);
                    r.per_part_pct.get_mut(&family).unwrap().add(correct);
                }
                Err(_) => {
                    r.skipped += 1;
                    continue;
                }
            }
            if let Some(ref_dist) = reference {
                let dist = pred.dist(entry.gt);
                for (i, &t) in r.pck_thresholds.iter().enumerate() {
                    let correct = dist <= t * ref_dist;
                    r.pck[i].add(correct);
                    r.per_part_pck.get_mut(&family).unwrap()[i].add(correct);
                }
            }
        }
    }

    pub fn merge(&mut self, other: &MetricAccumulator) {
        self.report.merge(&other.report);
    }

    pub fn finalize(self) -> MetricReport {
        self.report
    }
}

/// PCK reference length: the left-shoulder to right-hip distance, or `None`
/// when either keypoint is invisible.
pub fn pck_reference(skeleton: &Skeleton) -> Option<f64> {
    let shoulder = skeleton.get(KeypointName::Shoulder(Side::Left));
    let hip = skeleton.get(KeypointName::Hip(Side::Right));
    (shoulder.visible && hip.visible).then(|| shoulder.pos.dist(hip.pos))
}

/// One-shot report over a set of images.
pub fn report(
    images: &[(&Skeleton, &BodyPartMask, &EvalGrid, &PredictionMap)],
    pck_thresholds: &[f64],
    pct_threshold: f64,
) -> MetricReport {
    let mut acc = MetricAccumulator::new(pck_thresholds, pct_threshold);
    for (skeleton, mask, grid, preds) in images {
        acc.add_image(skeleton, mask, grid, preds);
    }
    acc.finalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset_io::{Keypoint, MaskLabel};
    use crate::gt_generation::GeometrySource;
    use crate::synthetic::AthleteSpec;

    #[test]
    fn full_grid_on_t_pose() {
        let (skeleton, mask) = AthleteSpec::t_pose("img", "a").build();
        for strategy in [HeadStrategy::Extension, HeadStrategy::Angle] {
            let grid = make_grid(&skeleton, &mask, strategy);
            assert_eq!(grid.skipped, 0, "strategy {strategy:?}");
            assert_eq!(grid.entries.len(), FULL_GRID);
            for part in EVAL_PARTS {
                assert_eq!(grid.per_part[&part], QUERIES_PER_PART, "{part:?}");
            }
        }
    }

    #[test]
    fn occluded_hand_drops_125_entries() {
        let mut spec = AthleteSpec::t_pose("img", "a");
        spec.skeleton
            .set(KeypointName::Hand(Side::Left), Keypoint::invisible());
        let (skeleton, mask) = spec.build();
        let grid = make_grid(&skeleton, &mask, HeadStrategy::Extension);
        assert_eq!(grid.per_part[&EvalPart::Hand(Side::Left)], 0);
        assert_eq!(grid.entries.len(), FULL_GRID - QUERIES_PER_PART);
        assert_eq!(grid.skipped, QUERIES_PER_PART);
    }

    #[test]
    fn grid_spacing_is_uniform() {
        let queries = grid_queries_for_part(EvalPart::Thigh(Side::Left), HeadStrategy::Extension);
        let mut centers: Vec<f64> = queries
            .iter()
            .filter(|q| q.q == 0.0)
            .map(|q| q.p)
            .collect();
        assert_eq!(centers.len(), POSITIONS_PER_PART);
        centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(centers[0], 0.0);
        assert_eq!(*centers.last().unwrap(), 1.0);
        for w in centers.windows(2) {
            assert!((w[1] - w[0] - 1.0 / 24.0).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_is_deterministic() {
        let (skeleton, mask) = AthleteSpec::runner("img", "a").build();
        let a = make_grid(&skeleton, &mask, HeadStrategy::Angle);
        let b = make_grid(&skeleton, &mask, HeadStrategy::Angle);
        assert_eq!(a.entries.len(), b.entries.len());
        for (ea, eb) in a.entries.iter().zip(&b.entries) {
            assert_eq!(ea.query, eb.query);
            assert_eq!(ea.gt, eb.gt);
        }
    }

    #[test]
    fn pck_boundary_is_inclusive() {
        let (skeleton, mask) = AthleteSpec::t_pose("img", "a").build();
        let grid = make_grid(&skeleton, &mask, HeadStrategy::Extension);
        let t = 0.1;
        let ref_dist = pck_reference(&skeleton).unwrap();
        // Displace every prediction by exactly t * reference along x.
        let preds: PredictionMap = grid
            .entries
            .iter()
            .map(|e| {
                (
                    e.query.cache_key(),
                    e.gt + Point2::new(t * ref_dist, 0.0),
                )
            })
            .collect();
        let report = report(&[(&skeleton, &mask, &grid, &preds)], &[t], 10.0);
        assert_eq!(report.pck[0].rate(), 1.0);
    }

    #[test]
    fn pct_rules_per_side() {
        // q = 0.3 left, recovered 0.4 left: diff 0.1, correct at 0.2.
        // q = 0.3 left, recovered 0.1 right: diff 0.4, incorrect at 0.2.
        let mut mask = BodyPartMask::filled(120, 110, MaskLabel::Background);
        for y in 0..=100 {
            for x in 40..=60 {
                mask.set_code(x, y, MaskLabel::Torso.code());
            }
        }
        let mut skeleton = Skeleton::new("img", "a");
        skeleton.set(KeypointName::Neck, Keypoint::at(50.0, 10.0));
        skeleton.set(KeypointName::Hip(Side::Left), Keypoint::at(45.0, 90.0));
        skeleton.set(KeypointName::Hip(Side::Right), Keypoint::at(55.0, 90.0));

        let geom = part_geometry(&skeleton, &mask, EvalPart::Torso).unwrap();
        assert_eq!(geom.source, GeometrySource::Annotated);
        let query = KeypointQuery::straight(EvalPart::Torso, 0.5, 0.3, Side::Left);
        let frame = straight_frame(&geom, &mask, 0.5).unwrap();
        let width_left = frame.k_i.dist(frame.pair.c_left);
        let width_right = frame.k_i.dist(frame.pair.c_right);

        let pred_left = frame.k_i + frame.ortho.direction * (0.4 * width_left);
        let (q_hat, side_hat) = thickness_of(pred_left, &query, &skeleton, &mask).unwrap();
        assert_eq!(side_hat, Side::Left);
        assert!((q_hat - 0.4).abs() < 1e-9);
        let diff = (q_hat - query.q).abs();
        assert!(diff <= 0.2);

        let pred_right = frame.k_i + frame.ortho.direction * (-0.1 * width_right);
        let (q_hat, side_hat) = thickness_of(pred_right, &query, &skeleton, &mask).unwrap();
        assert_eq!(side_hat, Side::Right);
        assert!((q_hat - 0.1).abs() < 1e-9);
        let diff = q_hat + query.q;
        assert!(diff > 0.2);
    }

    #[test]
    fn thickness_of_rectangle_closed_form() {
        // Rectangle x in [40, 60]: sub-pixel boundaries sit at 39.75 and
        // 60.25, so the half width on each side of the axis x = 50 is 10.25.
        let mut mask = BodyPartMask::filled(120, 110, MaskLabel::Background);
        for y in 0..=100 {
            for x in 40..=60 {
                mask.set_code(x, y, MaskLabel::Torso.code());
            }
        }
        let mut skeleton = Skeleton::new("img", "a");
        skeleton.set(KeypointName::Neck, Keypoint::at(50.0, 10.0));
        skeleton.set(KeypointName::Hip(Side::Left), Keypoint::at(45.0, 90.0));
        skeleton.set(KeypointName::Hip(Side::Right), Keypoint::at(55.0, 90.0));
        let query = KeypointQuery::straight(EvalPart::Torso, 0.25, 0.5, Side::Left);
        let k_i = Point2::new(50.0, 70.0);
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let dx: f64 = rng.gen_range(-15.0..15.0);
            let dy: f64 = rng.gen_range(-3.0..3.0);
            let pred = k_i + Point2::new(dx, dy);
            let (q_hat, side_hat) = thickness_of(pred, &query, &skeleton, &mask).unwrap();
            let expect = dx.abs() / 10.25;
            assert!((q_hat - expect).abs() < 1e-6, "dx {dx}: {q_hat} vs {expect}");
            if dx > 0.0 {
                assert_eq!(side_hat, Side::Left);
            } else if dx < 0.0 {
                assert_eq!(side_hat, Side::Right);
            }
        }
    }

    #[test]
    fn gt_predictions_score_perfectly() {
        let (skeleton, mask) = AthleteSpec::t_pose("img", "a").build();
        let grid = make_grid(&skeleton, &mask, HeadStrategy::Angle);
        let preds: PredictionMap = grid
            .entries
            .iter()
            .map(|e| (e.query.cache_key(), e.gt))
            .collect();
        let report = report(&[(&skeleton, &mask, &grid, &preds)], &[0.1, 0.05], 0.2);
        assert_eq!(report.pct.rate(), 1.0);
        assert_eq!(report.pck[0].rate(), 1.0);
        assert_eq!(report.pck[1].rate(), 1.0);
        assert_eq!(report.pct.evaluated + report.skipped, report.grid_size);
    }

    #[test]
    fn empty_predictions_all_skipped() {
        let (skeleton, mask) = AthleteSpec::t_pose("img", "a").build();
        let grid = make_grid(&skeleton, &mask, HeadStrategy::Extension);
        let preds = PredictionMap::new();
        let report = report(&[(&skeleton, &mask, &grid, &preds)], &[0.1], 0.2);
        assert_eq!(report.pct.evaluated, 0);
        assert_eq!(report.skipped, report.grid_size);
        assert_eq!(report.pct.rate(), 0.0);
    }

    #[test]
    fn report_additivity_over_disjoint_sets() {
        let (s1, m1) = AthleteSpec::t_pose("img1", "a").build();
        let (s2, m2) = AthleteSpec::runner("img2", "b").build();
        let g1 = make_grid(&s1, &m1, HeadStrategy::Angle);
        let g2 = make_grid(&s2, &m2, HeadStrategy::Angle);
        // Perturb predictions a little so rates are nontrivial.
        let perturbed = |g: &EvalGrid, amount: f64| -> PredictionMap {
            g.entries
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let off = if i % 3 == 0 { amount } else { 0.0 };
                    (e.query.cache_key(), e.gt + Point2::new(off, -off))
                })
                .collect()
        };
        let p1 = perturbed(&g1, 6.0);
        let p2 = perturbed(&g2, 9.0);
        let merged = report(
            &[(&s1, &m1, &g1, &p1), (&s2, &m2, &g2, &p2)],
            &[0.1, 0.05],
            0.2,
        );
        let mut a = report(&[(&s1, &m1, &g1, &p1)], &[0.1, 0.05], 0.2);
        let b = report(&[(&s2, &m2, &g2, &p2)], &[0.1, 0.05], 0.2);
        a.merge(&b);
        assert_eq!(a.pct, merged.pct);
        assert_eq!(a.pck, merged.pck);
        assert_eq!(a.skipped, merged.skipped);
        for family in PART_FAMILIES {
            assert_eq!(a.per_part_pct[&family], merged.per_part_pct[&family]);
        }
    }

    #[test]
    fn pck_invisible_reference_excludes_image() {
        let mut spec = AthleteSpec::t_pose("img", "a");
        spec.skeleton
            .set(KeypointName::Shoulder(Side::Left), Keypoint::invisible());
        let (skeleton, mask) = spec.build();
        let grid = make_grid(&skeleton, &mask, HeadStrategy::Extension);
        let preds: PredictionMap = grid
            .entries
            .iter()
            .map(|e| (e.query.cache_key(), e.gt))
            .collect();
        let report = report(&[(&skeleton, &mask, &grid, &preds)], &[0.1], 0.2);
        assert_eq!(report.pck_excluded_images, 1);
        assert_eq!(report.pck[0].evaluated, 0);
        // PCT is unaffected by the missing reference.
        assert!(report.pct.evaluated > 0);
        assert_eq!(report.pct.rate(), 1.0);
    }
}
