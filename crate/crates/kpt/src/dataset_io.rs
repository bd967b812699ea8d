//! Dataset files: skeleton annotations, body-part masks, prediction files
//! and the athlete-disjoint split.
//!
//! On-disk formats:
//!
//! - Annotations: one CSV with header `image_id,athlete_id,slow_motion`
//!   followed by `<name>_x,<name>_y,<name>_v` triplets for the 20 keypoint
//!   names in canonical order. Invisible keypoints carry coordinates (0, 0)
//!   with `v = 0`.
//! - Masks: 8-bit single-channel PNG, one file per image, values 0..=14
//!   (0 = background).
//! - Predictions / queries: CSV `image_id,part,p,q,side,alpha,x,y` with
//!   `alpha` empty except for head-angle queries. A queries file is the same
//!   without the trailing `x,y`.
//!
//! All readers skip leading `#` comment lines so tool output headers can be
//! fed straight back in.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::gt_generation::{EvalPart, HeadQuery, KeypointQuery};

/// Body laterality, also used as the thickness side of a query (the left
/// intersection point vs the right one).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn prefix(self) -> &'static str {
        match self {
            Side::Left => "l",
            Side::Right => "r",
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Left => write!(f, "left"),
            Side::Right => write!(f, "right"),
        }
    }
}

/// The 20 annotated keypoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeypointName {
    Head,
    Neck,
    Shoulder(Side),
    Elbow(Side),
    Wrist(Side),
    Hand(Side),
    Hip(Side),
    Knee(Side),
    Ankle(Side),
    Heel(Side),
    ToeTip(Side),
}

use KeypointName::*;
use Side::{Left, Right};

/// Canonical ordering; also the index layout of the keypoint vector in
/// `query_encoding` and of the annotation CSV columns.
pub const KEYPOINT_ORDER: [KeypointName; 20] = [
    Head,
    Neck,
    Shoulder(Left),
    Shoulder(Right),
    Elbow(Left),
    Elbow(Right),
    Wrist(Left),
    Wrist(Right),
    Hand(Left),
    Hand(Right),
    Hip(Left),
    Hip(Right),
    Knee(Left),
    Knee(Right),
    Ankle(Left),
    Ankle(Right),
    Heel(Left),
    Heel(Right),
    ToeTip(Left),
    ToeTip(Right),
];

impl KeypointName {
    pub fn index(self) -> usize {
        match self {
            Head => 0,
            Neck => 1,
            Shoulder(Left) => 2,
            Shoulder(Right) => 3,
            Elbow(Left) => 4,
            Elbow(Right) => 5,
            Wrist(Left) => 6,
            Wrist(Right) => 7,
            Hand(Left) => 8,
            Hand(Right) => 9,
            Hip(Left) => 10,
            Hip(Right) => 11,
            Knee(Left) => 12,
            Knee(Right) => 13,
            Ankle(Left) => 14,
            Ankle(Right) => 15,
            Heel(Left) => 16,
            Heel(Right) => 17,
            ToeTip(Left) => 18,
            ToeTip(Right) => 19,
        }
    }

    pub fn name(self) -> String {
        match self {
            Head => "head".into(),
            Neck => "neck".into(),
            Shoulder(s) => format!("{}_shoulder", s.prefix()),
            Elbow(s) => format!("{}_elbow", s.prefix()),
            Wrist(s) => format!("{}_wrist", s.prefix()),
            Hand(s) => format!("{}_hand", s.prefix()),
            Hip(s) => format!("{}_hip", s.prefix()),
            Knee(s) => format!("{}_knee", s.prefix()),
            Ankle(s) => format!("{}_ankle", s.prefix()),
            Heel(s) => format!("{}_heel", s.prefix()),
            ToeTip(s) => format!("{}_toe_tip", s.prefix()),
        }
    }

    pub fn parse(s: &str) -> Option<KeypointName> {
        KEYPOINT_ORDER.into_iter().find(|k| k.name() == s)
    }

    pub fn mirrored(self) -> KeypointName {
        match self {
            Head => Head,
            Neck => Neck,
            Shoulder(s) => Shoulder(s.opposite()),
            Elbow(s) => Elbow(s.opposite()),
            Wrist(s) => Wrist(s.opposite()),
            Hand(s) => Hand(s.opposite()),
            Hip(s) => Hip(s.opposite()),
            Knee(s) => Knee(s.opposite()),
            Ankle(s) => Ankle(s.opposite()),
            Heel(s) => Heel(s.opposite()),
            ToeTip(s) => ToeTip(s.opposite()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub pos: Point2,
    pub visible: bool,
}

impl Keypoint {
    pub const fn invisible() -> Keypoint {
        Keypoint {
            pos: Point2::new(0.0, 0.0),
            visible: false,
        }
    }

    pub const fn at(x: f64, y: f64) -> Keypoint {
        Keypoint {
            pos: Point2::new(x, y),
            visible: true,
        }
    }
}

/// The 20 named keypoints of one athlete in one image.
#[derive(Debug, Clone)]
pub struct Skeleton {
    pub image_id: String,
    pub athlete_id: String,
    pub slow_motion: bool,
    points: [Keypoint; 20],
}

impl Skeleton {
    pub fn new(image_id: impl Into<String>, athlete_id: impl Into<String>) -> Skeleton {
        Skeleton {
            image_id: image_id.into(),
            athlete_id: athlete_id.into(),
            slow_motion: false,
            points: [Keypoint::invisible(); 20],
        }
    }

    pub fn get(&self, name: KeypointName) -> Keypoint {
        self.points[name.index()]
    }

    pub fn set(&mut self, name: KeypointName, kp: Keypoint) {
        self.points[name.index()] = kp;
    }

    /// Position of a keypoint, or a `GeometryUnavailable` error when it is
    /// marked invisible. Geometry code must use this accessor so the
    /// visibility flag is always honored.
    pub fn visible_pos(&self, name: KeypointName) -> Result<Point2> {
        let kp = self.get(name);
        if kp.visible {
            Ok(kp.pos)
        } else {
            Err(Error::GeometryUnavailable(format!(
                "keypoint {} is not visible",
                name.name()
            )))
        }
    }

    /// Checks that every visible keypoint lies inside a `width` x `height`
    /// raster (pixel centers 0..width-1, 0..height-1 with half-pixel skirt).
    pub fn check_bounds(&self, width: u32, height: u32) -> Result<()> {
        for name in KEYPOINT_ORDER {
            let kp = self.get(name);
            if !kp.visible {
                continue;
            }
            let (x, y) = (kp.pos.x, kp.pos.y);
            if !(x >= -0.5 && x < width as f64 - 0.5 && y >= -0.5 && y < height as f64 - 0.5) {
                return Err(Error::OutOfBounds {
                    x,
                    y,
                    width,
                    height,
                });
            }
        }
        Ok(())
    }

    /// Horizontal mirror about the vertical centerline of a `width`-pixel
    /// raster, with left/right keypoints swapped.
    pub fn mirrored(&self, width: u32) -> Skeleton {
        let mut out = self.clone();
        for name in KEYPOINT_ORDER {
            let src = self.get(name);
            let mirrored = Keypoint {
                pos: Point2::new(width as f64 - 1.0 - src.pos.x, src.pos.y),
                visible: src.visible,
            };
            out.set(name.mirrored(), mirrored);
        }
        out
    }
}

/// The 14 body-part labels of a mask, plus background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskLabel {
    Background,
    Head,
    Torso,
    UpperArm(Side),
    Forearm(Side),
    Hand(Side),
    Thigh(Side),
    LowerLeg(Side),
    Foot(Side),
}

/// All 14 foreground labels in raster-code order (codes 1..=14).
pub const MASK_LABEL_ORDER: [MaskLabel; 14] = [
    MaskLabel::Head,
    MaskLabel::Torso,
    MaskLabel::UpperArm(Left),
    MaskLabel::UpperArm(Right),
    MaskLabel::Forearm(Left),
    MaskLabel::Forearm(Right),
    MaskLabel::Hand(Left),
    MaskLabel::Hand(Right),
    MaskLabel::Thigh(Left),
    MaskLabel::Thigh(Right),
    MaskLabel::LowerLeg(Left),
    MaskLabel::LowerLeg(Right),
    MaskLabel::Foot(Left),
    MaskLabel::Foot(Right),
];

pub const MAX_LABEL_CODE: u8 = 14;

impl MaskLabel {
    pub fn code(self) -> u8 {
        match self {
            MaskLabel::Background => 0,
            MaskLabel::Head => 1,
            MaskLabel::Torso => 2,
            MaskLabel::UpperArm(Left) => 3,
            MaskLabel::UpperArm(Right) => 4,
            MaskLabel::Forearm(Left) => 5,
            MaskLabel::Forearm(Right) => 6,
            MaskLabel::Hand(Left) => 7,
            MaskLabel::Hand(Right) => 8,
            MaskLabel::Thigh(Left) => 9,
            MaskLabel::Thigh(Right) => 10,
            MaskLabel::LowerLeg(Left) => 11,
            MaskLabel::LowerLeg(Right) => 12,
            MaskLabel::Foot(Left) => 13,
            MaskLabel::Foot(Right) => 14,
        }
    }

    pub fn from_code(code: u8) -> Option<MaskLabel> {
        if code == 0 {
            return Some(MaskLabel::Background);
        }
        MASK_LABEL_ORDER.get(code as usize - 1).copied()
    }

    pub fn mirrored(self) -> MaskLabel {
        match self {
            MaskLabel::UpperArm(s) => MaskLabel::UpperArm(s.opposite()),
            MaskLabel::Forearm(s) => MaskLabel::Forearm(s.opposite()),
            MaskLabel::Hand(s) => MaskLabel::Hand(s.opposite()),
            MaskLabel::Thigh(s) => MaskLabel::Thigh(s.opposite()),
            MaskLabel::LowerLeg(s) => MaskLabel::LowerLeg(s.opposite()),
            MaskLabel::Foot(s) => MaskLabel::Foot(s.opposite()),
            other => other,
        }
    }
}

/// Small set of mask labels as a bitmask over raster codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelSet(u16);

impl LabelSet {
    pub fn of(labels: &[MaskLabel]) -> LabelSet {
        let mut bits = 0u16;
        for l in labels {
            bits |= 1 << l.code();
        }
        LabelSet(bits)
    }

    pub fn contains_code(self, code: u8) -> bool {
        code <= MAX_LABEL_CODE && self.0 & (1 << code) != 0
    }

    pub fn foreground() -> LabelSet {
        LabelSet(!1 & ((1 << 15) - 1))
    }
}

/// Labeled raster assigning each pixel a body-part code or background.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyPartMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl BodyPartMask {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<BodyPartMask> {
        if data.len() != (width as usize) * (height as usize) {
            return Err(Error::MaskFormat(format!(
                "raster data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(bad) = data.iter().find(|&&v| v > MAX_LABEL_CODE) {
            return Err(Error::MaskFormat(format!(
                "label code {bad} out of range 0..={MAX_LABEL_CODE}"
            )));
        }
        Ok(BodyPartMask {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, label: MaskLabel) -> BodyPartMask {
        BodyPartMask {
            width,
            height,
            data: vec![label.code(); (width as usize) * (height as usize)],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn code_at(&self, x: u32, y: u32) -> u8 {
        self.data[(y as usize) * (self.width as usize) + (x as usize)]
    }

    pub fn set_code(&mut self, x: u32, y: u32, code: u8) {
        self.data[(y as usize) * (self.width as usize) + (x as usize)] = code;
    }

    /// Nearest pixel of a real-valued point, or `None` outside the raster.
    pub fn nearest_pixel(&self, p: Point2) -> Option<(u32, u32)> {
        let ix = p.x.round();
        let iy = p.y.round();
        if ix < 0.0 || iy < 0.0 || ix >= self.width as f64 || iy >= self.height as f64 {
            return None;
        }
        Some((ix as u32, iy as u32))
    }

    /// Label code of the nearest pixel, or `None` outside the raster.
    pub fn code_near(&self, p: Point2) -> Option<u8> {
        self.nearest_pixel(p).map(|(x, y)| self.code_at(x, y))
    }

    pub fn in_set(&self, p: Point2, labels: LabelSet) -> bool {
        self.code_near(p)
            .map(|c| labels.contains_code(c))
            .unwrap_or(false)
    }

    pub fn count_label(&self, label: MaskLabel) -> usize {
        let code = label.code();
        self.data.iter().filter(|&&c| c == code).count()
    }

    /// Horizontal mirror with left/right labels swapped.
    pub fn mirrored(&self) -> BodyPartMask {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                let src = self.code_at(self.width - 1 - x, y);
                let label = MaskLabel::from_code(src).expect("validated code");
                out.set_code(x, y, label.mirrored().code());
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Annotation CSV
// ---------------------------------------------------------------------------

fn annotation_header() -> Vec<String> {
    let mut cols = vec![
        "image_id".to_string(),
        "athlete_id".to_string(),
        "slow_motion".to_string(),
    ];
    for name in KEYPOINT_ORDER {
        let n = name.name();
        cols.push(format!("{n}_x"));
        cols.push(format!("{n}_y"));
        cols.push(format!("{n}_v"));
    }
    cols
}

/// Loads a skeleton annotation CSV. Every row must carry all 20 keypoints;
/// unknown or missing columns and duplicate image ids are hard errors.
pub fn load_annotations(path: &Path) -> Result<Vec<Skeleton>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;

    let expected = annotation_header();
    let headers = reader.headers().map_err(|e| csv_error(path, e))?;
    let got: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
    if got != expected {
        // Report the first mismatch by name so schema errors are actionable.
        let msg = match got.iter().zip(expected.iter()).find(|(g, e)| g != e) {
            Some((g, e)) => format!("expected column `{e}`, found `{g}`"),
            None => format!(
                "expected {} columns, found {}",
                expected.len(),
                got.len()
            ),
        };
        return Err(Error::schema(path, msg));
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| -> Result<&str> {
            record
                .get(i)
                .ok_or_else(|| Error::parse(path, line, format!("missing field {i}")))
        };
        let parse_f64 = |i: usize| -> Result<f64> {
            let s = field(i)?;
            s.parse::<f64>()
                .map_err(|_| Error::parse(path, line, format!("invalid number `{s}`")))
        };
        let parse_flag = |i: usize| -> Result<bool> {
            match field(i)? {
                "0" => Ok(false),
                "1" => Ok(true),
                s => Err(Error::parse(path, line, format!("invalid flag `{s}`"))),
            }
        };

        let image_id = field(0)?.to_string();
        if !seen.insert(image_id.clone()) {
            return Err(Error::DuplicateImage(image_id));
        }
        let mut skeleton = Skeleton::new(image_id, field(1)?.to_string());
        skeleton.slow_motion = parse_flag(2)?;
        for (k, name) in KEYPOINT_ORDER.into_iter().enumerate() {
            let base = 3 + 3 * k;
            let x = parse_f64(base)?;
            let y = parse_f64(base + 1)?;
            let visible = parse_flag(base + 2)?;
            if visible && !(x.is_finite() && y.is_finite()) {
                return Err(Error::parse(
                    path,
                    line,
                    format!("non-finite coordinates for {}", name.name()),
                ));
            }
            skeleton.set(
                name,
                Keypoint {
                    pos: Point2::new(x, y),
                    visible,
                },
            );
        }
        out.push(skeleton);
    }
    Ok(out)
}

/// Writes an annotation CSV; `header_comments` lines (without the leading
/// `#`) are emitted first.
pub fn save_annotations(
    skeletons: &[Skeleton],
    path: &Path,
    header_comments: &[String],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for cmt in header_comments {
        writeln!(w, "# {cmt}").map_err(|e| Error::io(path, e))?;
    }
    writeln!(w, "{}", annotation_header().join(",")).map_err(|e| Error::io(path, e))?;
    for s in skeletons {
        let mut fields = vec![
            s.image_id.clone(),
            s.athlete_id.clone(),
            if s.slow_motion { "1" } else { "0" }.to_string(),
        ];
        for name in KEYPOINT_ORDER {
            let kp = s.get(name);
            // Invisible keypoints are stored as (0, 0) with v = 0.
            let (x, y) = if kp.visible {
                (kp.pos.x, kp.pos.y)
            } else {
                (0.0, 0.0)
            };
            fields.push(format!("{x}"));
            fields.push(format!("{y}"));
            fields.push(if kp.visible { "1" } else { "0" }.to_string());
        }
        writeln!(w, "{}", fields.join(",")).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::Other, e.to_string()),
        },
        _ => {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(path, line, e.to_string())
        }
    }
}

// ---------------------------------------------------------------------------
// Mask PNG
// ---------------------------------------------------------------------------

/// Loads an 8-bit single-channel PNG as a body-part mask. Any value above 14
/// is a format error.
pub fn load_mask(path: &Path) -> Result<BodyPartMask> {
    let img = image::open(path).map_err(|e| Error::MaskFormat(format!("{}: {e}", path.display())))?;
    let gray = match img {
        image::DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(Error::MaskFormat(format!(
                "{}: expected 8-bit single-channel PNG, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (width, height) = gray.dimensions();
    BodyPartMask::new(width, height, gray.into_raw())
}

/// Writes a mask as an 8-bit grayscale PNG. `text_chunks` become `tEXt`
/// entries (used by the CLI to embed run headers).
pub fn save_mask(path: &Path, mask: &BodyPartMask, text_chunks: &[(String, String)]) -> Result<()> {
    write_gray_png(path, mask.width(), mask.height(), mask.data(), text_chunks)
}

pub(crate) fn write_gray_png(
    path: &Path,
    width: u32,
    height: u32,
    data: &[u8],
    text_chunks: &[(String, String)],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width, height);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    for (k, v) in text_chunks {
        encoder
            .add_text_chunk(k.clone(), v.clone())
            .map_err(|e| Error::MaskFormat(e.to_string()))?;
    }
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::MaskFormat(e.to_string()))?;
    writer
        .write_image_data(data)
        .map_err(|e| Error::MaskFormat(e.to_string()))?;
    Ok(())
}

pub(crate) fn write_rgb_png(
    path: &Path,
    width: u32,
    height: u32,
    data: &[u8],
    text_chunks: &[(String, String)],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width, height);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    for (k, v) in text_chunks {
        encoder
            .add_text_chunk(k.clone(), v.clone())
            .map_err(|e| Error::MaskFormat(e.to_string()))?;
    }
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::MaskFormat(e.to_string()))?;
    writer
        .write_image_data(data)
        .map_err(|e| Error::MaskFormat(e.to_string()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Predictions / queries CSV
// ---------------------------------------------------------------------------

/// One predicted (or ground-truth) point for one query on one image.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub image_id: String,
    pub query: KeypointQuery,
    pub point: Point2,
}

pub const PREDICTION_HEADER: &str = "image_id,part,p,q,side,alpha,x,y";
pub const QUERY_HEADER: &str = "image_id,part,p,q,side,alpha";

fn format_query_fields(image_id: &str, q: &KeypointQuery) -> String {
    let alpha = match q.head {
        Some(HeadQuery::Angle { alpha }) => format!("{alpha}"),
        _ => String::new(),
    };
    format!(
        "{},{},{},{},{},{}",
        image_id,
        q.part.name(),
        q.p,
        q.q,
        q.side,
        alpha
    )
}

/// Saves prediction records; floats use shortest round-trip formatting so a
/// save/load/save cycle is byte-identical.
pub fn save_predictions(
    records: &[PredictionRecord],
    path: &Path,
    header_comments: &[String],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for cmt in header_comments {
        writeln!(w, "# {cmt}").map_err(|e| Error::io(path, e))?;
    }
    writeln!(w, "{PREDICTION_HEADER}").map_err(|e| Error::io(path, e))?;
    for r in records {
        writeln!(
            w,
            "{},{},{}",
            format_query_fields(&r.image_id, &r.query),
            r.point.x,
            r.point.y
        )
        .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Saves queries without points (the prediction format minus `x,y`).
pub fn save_queries(
    records: &[(String, KeypointQuery)],
    path: &Path,
    header_comments: &[String],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for cmt in header_comments {
        writeln!(w, "# {cmt}").map_err(|e| Error::io(path, e))?;
    }
    writeln!(w, "{QUERY_HEADER}").map_err(|e| Error::io(path, e))?;
    for (image_id, q) in records {
        writeln!(w, "{}", format_query_fields(image_id, q)).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn parse_query_fields(
    path: &Path,
    line: u64,
    record: &csv::StringRecord,
) -> Result<(String, KeypointQuery)> {
    let field = |i: usize| -> Result<&str> {
        record
            .get(i)
            .ok_or_else(|| Error::parse(path, line, format!("missing field {i}")))
    };
    let image_id = field(0)?.to_string();
    let part_name = field(1)?;
    let part = EvalPart::parse(part_name)
        .ok_or_else(|| Error::parse(path, line, format!("unknown part `{part_name}`")))?;
    let p: f64 = field(2)?
        .parse()
        .map_err(|_| Error::parse(path, line, "invalid p"))?;
    let q: f64 = field(3)?
        .parse()
        .map_err(|_| Error::parse(path, line, "invalid q"))?;
    let side = match field(4)? {
        "left" => Side::Left,
        "right" => Side::Right,
        s => return Err(Error::parse(path, line, format!("invalid side `{s}`"))),
    };
    let alpha_field = field(5)?;
    let head = if part == EvalPart::Head {
        if alpha_field.is_empty() {
            Some(HeadQuery::Extension)
        } else {
            let alpha: f64 = alpha_field
                .parse()
                .map_err(|_| Error::parse(path, line, "invalid alpha"))?;
            Some(HeadQuery::Angle { alpha })
        }
    } else if alpha_field.is_empty() {
        None
    } else {
        return Err(Error::parse(
            path,
            line,
            format!("alpha given for non-head part `{part_name}`"),
        ));
    };
    let query = KeypointQuery { part, p, q, side, head };
    query
        .validate()
        .map_err(|e| Error::parse(path, line, e.to_string()))?;
    Ok((image_id, query))
}

/// Loads a predictions CSV (8 columns). Malformed rows report their line
/// number.
pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?;
    let got = headers.iter().collect::<Vec<_>>().join(",");
    if got != PREDICTION_HEADER {
        return Err(Error::schema(
            path,
            format!("expected header `{PREDICTION_HEADER}`, found `{got}`"),
        ));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let (image_id, query) = parse_query_fields(path, line, &record)?;
        let x: f64 = record
            .get(6)
            .ok_or_else(|| Error::parse(path, line, "missing x"))?
            .parse()
            .map_err(|_| Error::parse(path, line, "invalid x"))?;
        let y: f64 = record
            .get(7)
            .ok_or_else(|| Error::parse(path, line, "missing y"))?
            .parse()
            .map_err(|_| Error::parse(path, line, "invalid y"))?;
        out.push(PredictionRecord {
            image_id,
            query,
            point: Point2::new(x, y),
        });
    }
    Ok(out)
}

/// Loads queries from either the 6-column query format or the 8-column
/// prediction format (points ignored).
pub fn load_queries(path: &Path) -> Result<Vec<(String, KeypointQuery)>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?;
    let got = headers.iter().collect::<Vec<_>>().join(",");
    if got != PREDICTION_HEADER && got != QUERY_HEADER {
        return Err(Error::schema(
            path,
            format!("expected `{QUERY_HEADER}` or `{PREDICTION_HEADER}`, found `{got}`"),
        ));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        out.push(parse_query_fields(path, line, &record)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Athlete-disjoint split
// ---------------------------------------------------------------------------

/// Splits skeletons into (train, test, val) such that no athlete appears in
/// more than one subset. Deterministic for a given seed; subset sizes track
/// the requested fractions as closely as athlete granularity permits.
pub fn split_by_athlete(
    skeletons: &[Skeleton],
    fractions: [f64; 3],
    seed: u64,
) -> Result<(Vec<Skeleton>, Vec<Skeleton>, Vec<Skeleton>)> {
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!("fractions sum to {sum}, expected 1")));
    }
    if fractions.iter().any(|&f| f < 0.0) {
        return Err(Error::Split("negative fraction".into()));
    }

    let mut by_athlete: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in skeletons.iter().enumerate() {
        by_athlete.entry(&s.athlete_id).or_default().push(i);
    }
    if by_athlete.len() < 3 {
        return Err(Error::Split(format!(
            "need at least 3 distinct athletes, found {}",
            by_athlete.len()
        )));
    }

    // Shuffle athletes for tie-breaking, then place big athletes first into
    // whichever subset is furthest below its target image count.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut athletes: Vec<(&str, Vec<usize>)> = by_athlete.into_iter().collect();
    athletes.shuffle(&mut rng);
    athletes.sort_by(|a, b| b.1.len().cmp(&a.1.len()));

    let total = skeletons.len() as f64;
    let targets = [
        fractions[0] * total,
        fractions[1] * total,
        fractions[2] * total,
    ];
    let mut assigned = [0usize; 3];
    let mut subsets: [Vec<Skeleton>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (_, images) in athletes {
        let mut best = 0;
        let mut best_deficit = f64::NEG_INFINITY;
        for (i, target) in targets.iter().enumerate() {
            let deficit = target - assigned[i] as f64;
            if deficit > best_deficit {
                best_deficit = deficit;
                best = i;
            }
        }
        assigned[best] += images.len();
        for idx in images {
            subsets[best].push(skeletons[idx].clone());
        }
    }
    let [train, test, val] = subsets;
    Ok((train, test, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn sample_skeleton(image: &str, athlete: &str) -> Skeleton {
        let mut s = Skeleton::new(image, athlete);
        for (i, name) in KEYPOINT_ORDER.into_iter().enumerate() {
            s.set(name, Keypoint::at(10.0 + i as f64, 20.0 + 0.5 * i as f64));
        }
        s
    }

    #[test]
    fn annotation_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.csv");
        let mut skeletons = Vec::new();
        for a in 0..3 {
            for i in 0..2 {
                let mut s = sample_skeleton(&format!("img_{a}_{i}"), &format!("athlete{a}"));
                s.slow_motion = i == 1;
                s.set(KeypointName::Hand(Side::Left), Keypoint::invisible());
                skeletons.push(s);
            }
        }
        save_annotations(&skeletons, &path, &["written by test".into()]).unwrap();
        let loaded = load_annotations(&path).unwrap();
        assert_eq!(loaded.len(), 6);
        for (a, b) in skeletons.iter().zip(loaded.iter()) {
            assert_eq!(a.image_id, b.image_id);
            assert_eq!(a.athlete_id, b.athlete_id);
            assert_eq!(a.slow_motion, b.slow_motion);
            for name in KEYPOINT_ORDER {
                assert_eq!(a.get(name), b.get(name));
            }
        }
    }

    #[test]
    fn fixture_file_three_athletes_five_images() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.csv");
        let skeletons: Vec<Skeleton> = (0..5)
            .map(|i| sample_skeleton(&format!("img{i}"), &format!("athlete{}", i % 3)))
            .collect();
        save_annotations(&skeletons, &path, &[]).unwrap();
        let loaded = load_annotations(&path).unwrap();
        assert_eq!(loaded.len(), 5);
    }

    #[test]
    fn missing_keypoint_column_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut cols = annotation_header();
        // Drop one keypoint triplet, leaving 19 keypoints.
        cols.truncate(cols.len() - 3);
        let mut f = File::create(&path).unwrap();
        writeln!(f, "{}", cols.join(",")).unwrap();
        assert!(matches!(
            load_annotations(&path),
            Err(Error::Schema { .. })
        ));
    }

    #[test]
    fn unknown_keypoint_name_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut cols = annotation_header();
        cols[3] = "skull_x".into();
        let mut f = File::create(&path).unwrap();
        writeln!(f, "{}", cols.join(",")).unwrap();
        let err = load_annotations(&path).unwrap_err();
        assert!(err.to_string().contains("skull_x"), "{err}");
    }

    #[test]
    fn duplicate_image_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.csv");
        let skeletons = vec![
            sample_skeleton("img0", "a"),
            sample_skeleton("img0", "b"),
            sample_skeleton("img1", "c"),
        ];
        save_annotations(&skeletons, &path, &[]).unwrap();
        assert!(matches!(
            load_annotations(&path),
            Err(Error::DuplicateImage(id)) if id == "img0"
        ));
    }

    #[test]
    fn mask_roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.png");
        let mut mask = BodyPartMask::filled(16, 12, MaskLabel::Background);
        mask.set_code(3, 4, MaskLabel::Torso.code());
        mask.set_code(5, 6, MaskLabel::Foot(Side::Right).code());
        save_mask(&path, &mask, &[]).unwrap();
        let loaded = load_mask(&path).unwrap();
        assert_eq!(loaded, mask);
    }

    #[test]
    fn all_background_mask_has_no_foreground() {
        let mask = BodyPartMask::filled(8, 8, MaskLabel::Background);
        assert_eq!(
            MASK_LABEL_ORDER
                .iter()
                .map(|&l| mask.count_label(l))
                .sum::<usize>(),
            0
        );
    }

    #[test]
    fn out_of_range_code_rejected() {
        let data = vec![200u8; 4];
        assert!(matches!(
            BodyPartMask::new(2, 2, data),
            Err(Error::MaskFormat(_))
        ));
    }

    #[test]
    fn split_one_athlete_per_subset() {
        let skeletons: Vec<Skeleton> = (0..3)
            .map(|i| sample_skeleton(&format!("img{i}"), &format!("a{i}")))
            .collect();
        let (train, test, val) =
            split_by_athlete(&skeletons, [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0).unwrap();
        assert_eq!(train.len(), 1);
        assert_eq!(test.len(), 1);
        assert_eq!(val.len(), 1);
    }

    #[test]
    fn split_rejects_single_athlete() {
        let skeletons = vec![sample_skeleton("img0", "solo")];
        assert!(matches!(
            split_by_athlete(&skeletons, [0.5, 0.3, 0.2], 0),
            Err(Error::Split(_))
        ));
    }

    #[test]
    fn split_is_deterministic() {
        let skeletons: Vec<Skeleton> = (0..40)
            .map(|i| sample_skeleton(&format!("img{i}"), &format!("a{}", i % 7)))
            .collect();
        let a = split_by_athlete(&skeletons, [0.7, 0.2, 0.1], 42).unwrap();
        let b = split_by_athlete(&skeletons, [0.7, 0.2, 0.1], 42).unwrap();
        let ids = |v: &[Skeleton]| v.iter().map(|s| s.image_id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&a.0), ids(&b.0));
        assert_eq!(ids(&a.1), ids(&b.1));
        assert_eq!(ids(&a.2), ids(&b.2));
    }

    #[test]
    fn predictions_roundtrip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("preds1.csv");
        let p2 = dir.path().join("preds2.csv");
        let records = vec![
            PredictionRecord {
                image_id: "img0".into(),
                query: KeypointQuery::straight(
                    EvalPart::Thigh(Side::Left),
                    0.12345678901234567,
                    0.5,
                    Side::Right,
                ),
                point: Point2::new(100.25, 37.333333333333336),
            },
            PredictionRecord {
                image_id: "img0".into(),
                query: KeypointQuery::head_angle(2.718281828459045, 0.9),
                point: Point2::new(55.5, 44.0),
            },
        ];
        save_predictions(&records, &p1, &[]).unwrap();
        let loaded = load_predictions(&p1).unwrap();
        assert_eq!(loaded, records);
        save_predictions(&loaded, &p2, &[]).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn empty_prediction_file_loads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        save_predictions(&[], &path, &[]).unwrap();
        assert!(load_predictions(&path).unwrap().is_empty());
    }

    #[test]
    fn unknown_part_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.csv");
        let mut f = File::create(&path).unwrap();
        writeln!(f, "{PREDICTION_HEADER}").unwrap();
        writeln!(f, "img0,l_thigh,0.5,0.5,left,,10,10").unwrap();
        writeln!(f, "img0,tail,0.5,0.5,left,,10,10").unwrap();
        match load_predictions(&path) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("tail"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
