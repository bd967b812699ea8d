//! Raster geometry on label masks: coherent line-mask intersections, signed
//! side classification and ray-boundary hits.
//!
//! Lines are rasterized by sampling at half-pixel steps and testing the
//! nearest pixel's label. A run of in-label samples ends at the first sample
//! that is out of the label set (gap tolerance zero), which is what keeps a
//! detached blob of the same label from stretching an intersection across
//! background. Sub-pixel endpoints are the midpoint between the last
//! in-label sample and the first out-of-label sample, so quantization stays
//! within a quarter pixel; where a run hits the raster border the endpoint
//! is the last in-label sample.

use crate::dataset_io::{BodyPartMask, LabelSet};
use crate::error::{Error, Result};
use crate::geom::{LineQuery, Point2};

/// Classification of a point against a directed line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineSide {
    Left,
    Right,
    On,
}

const SIDE_EPS: f64 = 1e-9;

/// Which side of `reference` the point lies on. Left is the side reached by
/// rotating the direction 90 degrees counter-clockwise in image coordinates.
pub fn side_of(reference: &LineQuery, point: Point2) -> LineSide {
    let v = point - reference.origin;
    let cross = reference.direction.cross(v);
    if cross.abs() < SIDE_EPS {
        LineSide::On
    } else if cross < 0.0 {
        LineSide::Left
    } else {
        LineSide::Right
    }
}

/// Endpoints of the coherent in-label run through a query line's origin.
///
/// `c_left` is the endpoint along the positive line direction. Callers that
/// walk the orthogonal of a part axis pass the axis' left normal as the line
/// direction, which makes `c_left`/`c_right` land on the left/right of the
/// axis as the names say.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntersectionPair {
    pub c_left: Point2,
    pub c_right: Point2,
}

impl IntersectionPair {
    pub fn side(&self, side: crate::dataset_io::Side) -> Point2 {
        match side {
            crate::dataset_io::Side::Left => self.c_left,
            crate::dataset_io::Side::Right => self.c_right,
        }
    }
}

const STEP: f64 = 0.5;

fn in_raster(mask: &BodyPartMask, p: Point2) -> bool {
    mask.nearest_pixel(p).is_some()
}

/// Walks from `origin` along `dir` (unit) while nearest-pixel labels stay in
/// `labels`; returns the sub-pixel end of the run. The caller guarantees the
/// origin sample is in-label.
fn walk_run_end(mask: &BodyPartMask, labels: LabelSet, origin: Point2, dir: Point2) -> Point2 {
    let max_t = (mask.width() as f64 + mask.height() as f64) * 2.0;
    let mut last_in = 0.0;
    let mut t = STEP;
    while t <= max_t {
        let p = origin + dir * t;
        if !in_raster(mask, p) {
            // Raster border: no out-of-label sample exists to average with.
            return origin + dir * last_in;
        }
        if !mask.in_set(p, labels) {
            return origin + dir * (last_in + STEP * 0.5);
        }
        last_in = t;
        t += STEP;
    }
    origin + dir * last_in
}

/// Endpoints of the maximal contiguous in-label run along `line` containing
/// `line.origin`.
///
/// Returns `Ok(None)` when the origin's nearest pixel is not in `labels`;
/// an origin outside the raster is an error.
pub fn coherent_intersections(
    mask: &BodyPartMask,
    labels: LabelSet,
    line: &LineQuery,
) -> Result<Option<IntersectionPair>> {
    if !in_raster(mask, line.origin) {
        return Err(Error::OutOfBounds {
            x: line.origin.x,
            y: line.origin.y,
            width: mask.width(),
            height: mask.height(),
        });
    }
    if !mask.in_set(line.origin, labels) {
        return Ok(None);
    }
    let c_left = walk_run_end(mask, labels, line.origin, line.direction);
    let c_right = walk_run_end(mask, labels, line.origin, -line.direction);
    Ok(Some(IntersectionPair { c_left, c_right }))
}

/// Far end of the origin's coherent run along a single ray. Returns `None`
/// when the origin is outside the raster or not in-label.
pub fn ray_boundary(
    mask: &BodyPartMask,
    labels: LabelSet,
    origin: Point2,
    direction: Point2,
) -> Option<Point2> {
    if !in_raster(mask, origin) || !mask.in_set(origin, labels) {
        return None;
    }
    let dir = direction.normalized().ok()?;
    Some(walk_run_end(mask, labels, origin, dir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset_io::{BodyPartMask, MaskLabel};

    fn rect_mask(width: u32, height: u32, x0: u32, x1: u32, y0: u32, y1: u32) -> BodyPartMask {
        let mut mask = BodyPartMask::filled(width, height, MaskLabel::Background);
        for y in y0..=y1 {
            for x in x0..=x1 {
                mask.set_code(x, y, MaskLabel::Torso.code());
            }
        }
        mask
    }

    fn torso_set() -> LabelSet {
        LabelSet::of(&[MaskLabel::Torso])
    }

    #[test]
    fn rectangle_endpoints() {
        // Filled rectangle x in [40, 60], y in [0, 100]; horizontal query.
        let mask = rect_mask(120, 110, 40, 60, 0, 100);
        let line = LineQuery::new(Point2::new(50.0, 50.0), Point2::new(1.0, 0.0)).unwrap();
        let pair = coherent_intersections(&mask, torso_set(), &line)
            .unwrap()
            .unwrap();
        assert!((pair.c_left.x - 60.0).abs() <= 0.5, "{:?}", pair);
        assert!((pair.c_right.x - 40.0).abs() <= 0.5, "{:?}", pair);
        assert!((pair.c_left.y - 50.0).abs() < 1e-9);
        assert!((pair.c_right.y - 50.0).abs() < 1e-9);
    }

    #[test]
    fn detached_blob_is_excluded() {
        let mut mask = rect_mask(120, 110, 40, 60, 0, 100);
        for y in 45..=55 {
            for x in 80..=90 {
                mask.set_code(x, y, MaskLabel::Torso.code());
            }
        }
        let line = LineQuery::new(Point2::new(50.0, 50.0), Point2::new(1.0, 0.0)).unwrap();
        let pair = coherent_intersections(&mask, torso_set(), &line)
            .unwrap()
            .unwrap();
        // Coherence: the run stops at the rectangle edge, not at the blob.
        assert!((pair.c_left.x - 60.0).abs() <= 0.5, "{:?}", pair);
    }

    #[test]
    fn origin_not_in_label_yields_none() {
        let mask = rect_mask(120, 110, 40, 60, 0, 100);
        let line = LineQuery::new(Point2::new(10.0, 50.0), Point2::new(1.0, 0.0)).unwrap();
        assert!(coherent_intersections(&mask, torso_set(), &line)
            .unwrap()
            .is_none());
    }

    #[test]
    fn origin_outside_raster_is_bounds_error() {
        let mask = rect_mask(120, 110, 40, 60, 0, 100);
        let line = LineQuery::new(Point2::new(-5.0, 50.0), Point2::new(1.0, 0.0)).unwrap();
        assert!(matches!(
            coherent_intersections(&mask, torso_set(), &line),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn pixels_between_origin_and_endpoints_are_in_set() {
        let mask = rect_mask(120, 110, 40, 60, 0, 100);
        let line = LineQuery::new(Point2::new(47.0, 30.0), Point2::new(3.0, 1.0)).unwrap();
        let pair = coherent_intersections(&mask, torso_set(), &line)
            .unwrap()
            .unwrap();
        for end in [pair.c_left, pair.c_right] {
            let dist = line.origin.dist(end);
            let mut t = 0.5;
            while t < dist - 0.5 {
                let p = line.origin + (end - line.origin) * (t / dist);
                assert!(mask.in_set(p, torso_set()), "sample {p:?} off mask");
                t += 0.5;
            }
        }
    }

    #[test]
    fn side_of_convention() {
        // Down-image direction: +x offset is Left.
        let line = LineQuery::new(Point2::new(0.0, 0.0), Point2::new(0.0, 1.0)).unwrap();
        assert_eq!(side_of(&line, Point2::new(1.0, 0.0)), LineSide::Left);
        assert_eq!(side_of(&line, Point2::new(-1.0, 3.0)), LineSide::Right);
        assert_eq!(side_of(&line, Point2::new(0.0, 42.0)), LineSide::On);
    }

    #[test]
    fn ray_boundary_both_directions() {
        let mask = rect_mask(120, 110, 40, 60, 0, 100);
        let hit_up = ray_boundary(
            &mask,
            torso_set(),
            Point2::new(50.0, 50.0),
            Point2::new(0.0, -1.0),
        )
        .unwrap();
        assert!(hit_up.dist(Point2::new(50.0, 0.0)) <= 0.5, "{hit_up:?}");
        let hit_down = ray_boundary(
            &mask,
            torso_set(),
            Point2::new(50.0, 50.0),
            Point2::new(0.0, 1.0),
        )
        .unwrap();
        assert!(hit_down.dist(Point2::new(50.0, 100.0)) <= 0.5, "{hit_down:?}");
    }

    #[test]
    fn ray_boundary_origin_off_label_is_none() {
        let mask = rect_mask(120, 110, 40, 60, 0, 100);
        assert!(ray_boundary(
            &mask,
            torso_set(),
            Point2::new(5.0, 5.0),
            Point2::new(1.0, 0.0)
        )
        .is_none());
    }
}
