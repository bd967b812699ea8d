//! Overlay rendering: equally spaced longitudinal lines per body part with a
//! color gradient from the part color at the boundary to white on the
//! central line.

use crate::dataset_io::{BodyPartMask, LabelSet, Side, Skeleton};
use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::gt_generation::{
    anchor_point, bent_frame, bent_side_from_lr, head_angle_point, part_geometry, straight_point,
    BentSide, EvalPart, HeadStrategy, EVAL_PARTS,
};

pub type Rgb = [u8; 3];

/// What to draw: line count per side, sampling density and colors.
#[derive(Debug, Clone)]
pub struct OverlaySpec {
    /// Lines per side including the boundary line (q spacing 1/lines).
    pub lines_per_side: usize,
    /// Longitudinal samples per polyline.
    pub samples: usize,
    pub head_strategy: HeadStrategy,
    pub central_color: Rgb,
}

impl Default for OverlaySpec {
    fn default() -> Self {
        OverlaySpec {
            lines_per_side: 3,
            samples: 100,
            head_strategy: HeadStrategy::Angle,
            central_color: [255, 255, 255],
        }
    }
}

impl OverlaySpec {
    pub fn validate(&self) -> Result<()> {
        if self.lines_per_side == 0 {
            return Err(Error::Config("lines_per_side must be at least 1".into()));
        }
        if self.samples < 2 {
            return Err(Error::Config("samples must be at least 2".into()));
        }
        Ok(())
    }
}

/// Default color table: distinguishable hues per part family, left darker
/// than right.
pub fn part_color(part: EvalPart) -> Rgb {
    let shade = |c: Rgb, side: Side| -> Rgb {
        match side {
            Side::Right => c,
            Side::Left => [
                (c[0] as f32 * 0.62) as u8,
                (c[1] as f32 * 0.62) as u8,
                (c[2] as f32 * 0.62) as u8,
            ],
        }
    };
    match part {
        EvalPart::Head => [240, 220, 60],
        EvalPart::Torso => [60, 200, 90],
        EvalPart::UpperArm(s) => shade([235, 90, 60], s),
        EvalPart::Forearm(s) => shade([245, 150, 50], s),
        EvalPart::Hand(s) => shade([250, 100, 180], s),
        EvalPart::Thigh(s) => shade([70, 110, 240], s),
        EvalPart::LowerLeg(s) => shade([80, 200, 230], s),
        EvalPart::Foot(s) => shade([150, 90, 220], s),
        EvalPart::Elbow(s) => shade([200, 200, 90], s),
        EvalPart::Knee(s) => shade([90, 230, 170], s),
    }
}

/// One drawable polyline: sample points (None where generation failed, which
/// breaks the line) and its color.
#[derive(Debug, Clone)]
pub struct Polyline {
    pub points: Vec<Option<Point2>>,
    pub color: Rgb,
    /// Closed lines connect the last sample back to the first (head-angle
    /// rings).
    pub closed: bool,
}

fn gradient(center: Rgb, part: Rgb, q: f64) -> Rgb {
    let mix = |a: u8, b: u8| -> u8 { (a as f64 * (1.0 - q) + b as f64 * q).round() as u8 };
    [
        mix(center[0], part[0]),
        mix(center[1], part[1]),
        mix(center[2], part[2]),
    ]
}

/// Builds the polylines of one part: `lines_per_side` thickness levels per
/// side plus the shared central line. Returns an empty list when the part's
/// geometry is unavailable (occluded parts are simply omitted).
pub fn part_polylines(
    skeleton: &Skeleton,
    mask: &BodyPartMask,
    part: EvalPart,
    spec: &OverlaySpec,
) -> Vec<Polyline> {
    let color = part_color(part);
    let n = spec.lines_per_side;
    let mut levels: Vec<(f64, Option<Side>)> = vec![(0.0, None)];
    for i in 1..=n {
        let q = i as f64 / n as f64;
        levels.push((q, Some(Side::Left)));
        levels.push((q, Some(Side::Right)));
    }

    let head_angle = part == EvalPart::Head && spec.head_strategy == HeadStrategy::Angle;
    let mut lines = Vec::new();
    if head_angle {
        if part_geometry(skeleton, mask, EvalPart::Head).is_err() {
            // Without a visible neck-head axis there is nothing to rotate.
            return Vec::new();
        }
        for (q, side) in levels {
            if side == Some(Side::Left) {
                // A full ring already covers both sides.
                continue;
            }
            let points = (0..spec.samples)
                .map(|j| {
                    let alpha = j as f64 * std::f64::consts::TAU / spec.samples as f64;
                    head_angle_point(skeleton, mask, alpha, q).ok()
                })
                .collect();
            lines.push(Polyline {
                points,
                color: gradient(spec.central_color, color, q),
                closed: true,
            });
        }
        return lines;
    }

    if part.is_joint() {
        let Ok(ctx) = anchor_point(skeleton, mask, part) else {
            return Vec::new();
        };
        for (q, side) in levels {
            let points = (0..spec.samples)
                .map(|j| {
                    let s = j as f64 / (spec.samples - 1) as f64;
                    bent_frame(&ctx, mask, s)
                        .and_then(|frame| {
                            let bent = match side {
                                None => BentSide::Inner, // q = 0: target irrelevant
                                Some(lr) => bent_side_from_lr(&ctx, &frame, lr)?,
                            };
                            let target = match bent {
                                BentSide::Inner => ctx.anchor,
                                BentSide::Outer => frame.k_o,
                            };
                            Ok(target * q + frame.k_i * (1.0 - q))
                        })
                        .ok()
                })
                .collect();
            lines.push(Polyline {
                points,
                color: gradient(spec.central_color, color, q),
                closed: false,
            });
        }
        return lines;
    }

    let Ok(geom) = part_geometry(skeleton, mask, part) else {
        return Vec::new();
    };
    for (q, side) in levels {
        let points = (0..spec.samples)
            .map(|j| {
                let p = j as f64 / (spec.samples - 1) as f64;
                straight_point(&geom, mask, p, q, side.unwrap_or(Side::Right)).ok()
            })
            .collect();
        lines.push(Polyline {
            points,
            color: gradient(spec.central_color, color, q),
            closed: false,
        });
    }
    lines
}

/// A plain RGB raster; rows of `width * 3` bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn filled(width: u32, height: u32, color: Rgb) -> RgbImage {
        let mut data = Vec::with_capacity((width * height * 3) as usize);
        for _ in 0..width * height {
            data.extend_from_slice(&color);
        }
        RgbImage {
            width,
            height,
            data,
        }
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let i = ((y * self.width + x) * 3) as usize;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    fn set(&mut self, x: u32, y: u32, color: Rgb) {
        let i = ((y * self.width + x) * 3) as usize;
        self.data[i..i + 3].copy_from_slice(&color);
    }
}

/// True when the pixel may be painted: on a part label, or background within
/// one pixel of a part boundary (polylines hug boundaries, so their
/// rasterization may touch the first background pixel).
fn paintable(mask: &BodyPartMask, x: u32, y: u32) -> bool {
    let fg = LabelSet::foreground();
    if fg.contains_code(mask.code_at(x, y)) {
        return true;
    }
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx >= 0 && ny >= 0 && (nx as u32) < mask.width() && (ny as u32) < mask.height() {
                if fg.contains_code(mask.code_at(nx as u32, ny as u32)) {
                    return true;
                }
            }
        }
    }
    false
}

fn draw_segment(img: &mut RgbImage, mask: &BodyPartMask, a: Point2, b: Point2, color: Rgb) {
    let dist = a.dist(b);
    let steps = (dist / 0.4).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let p = a + (b - a) * t;
        let (x, y) = (p.x.round(), p.y.round());
        if x < 0.0 || y < 0.0 || x >= img.width as f64 || y >= img.height as f64 {
            continue;
        }
        let (x, y) = (x as u32, y as u32);
        if paintable(mask, x, y) {
            img.set(x, y, color);
        }
    }
}

/// Draws the overlay onto a copy of `image`. Dimensions must match the mask.
pub fn render_overlay(
    image: &RgbImage,
    skeleton: &Skeleton,
    mask: &BodyPartMask,
    spec: &OverlaySpec,
) -> Result<RgbImage> {
    spec.validate()?;
    if image.width != mask.width() || image.height != mask.height() {
        return Err(Error::Shape(format!(
            "image {}x{} does not match mask {}x{}",
            image.width,
            image.height,
            mask.width(),
            mask.height()
        )));
    }
    let mut out = image.clone();
    for part in EVAL_PARTS {
        for line in part_polylines(skeleton, mask, part, spec) {
            let mut prev: Option<Point2> = None;
            for point in line.points.iter() {
                if let (Some(a), Some(b)) = (prev, *point) {
                    draw_segment(&mut out, mask, a, b, line.color);
                }
                prev = *point;
            }
            if line.closed {
                if let (Some(Some(first)), Some(Some(last))) =
                    (line.points.first(), line.points.last())
                {
                    draw_segment(&mut out, mask, *last, *first, line.color);
                }
            }
        }
    }
    Ok(out)
}
