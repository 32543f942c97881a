//! Per-frame outputs of the two dissimilar detection channels.
//!
//! Channels are replayed from line-oriented fixtures: one JSON object per
//! line with exactly the fields `frame`, `channel`, `class`, `bbox` and
//! `confidence`. Lines starting with `#` and blank lines are skipped.
//!
//! [`synthesize_frames`] produces a reproducible stand-in for recorded
//! channel outputs. It draws uniforms from ChaCha8 (`rand_chacha`, seeded
//! through `SeedableRng::seed_from_u64`) and maps them through the Beta
//! quantile, so the inter-channel IoU of every frame follows the requested
//! Beta distribution exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::{beta_quantile, BetaParams};
use crate::geometry::BoundingBox;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SignClass(String);

impl SignClass {
    pub fn new(label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if label.is_empty() {
            return Err(Error::InvalidValue("sign class must not be empty".into()));
        }
        Ok(Self(label))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for SignClass {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Self::new(value)
    }
}

impl From<SignClass> for String {
    fn from(value: SignClass) -> Self {
        value.0
    }
}

impl fmt::Display for SignClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One of the two redundant channels. `A` is the pass-through source, `B`
/// the dissimilar check channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChannelId {
    A,
    B,
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelId::A => f.write_str("A"),
            ChannelId::B => f.write_str("B"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub class: SignClass,
    confidence: f64,
}

impl Detection {
    pub fn new(bbox: BoundingBox, class: SignClass, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidValue(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self {
            bbox,
            class,
            confidence,
        })
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub detections_a: Vec<Detection>,
    pub detections_b: Vec<Detection>,
}

impl FrameRecord {
    pub fn new(frame_id: u64) -> Self {
        Self {
            frame_id,
            detections_a: Vec::new(),
            detections_b: Vec::new(),
        }
    }

    pub fn channel(&self, id: ChannelId) -> &[Detection] {
        match id {
            ChannelId::A => &self.detections_a,
            ChannelId::B => &self.detections_b,
        }
    }

    fn channel_mut(&mut self, id: ChannelId) -> &mut Vec<Detection> {
        match id {
            ChannelId::A => &mut self.detections_a,
            ChannelId::B => &mut self.detections_b,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionLine {
    frame: u64,
    channel: ChannelId,
    class: SignClass,
    bbox: BoundingBox,
    confidence: f64,
}

/// Iterate the non-comment lines of a line-oriented fixture as `(line_no, text)`.
pub(crate) fn fixture_lines<'a, R: BufRead + 'a>(
    reader: R,
    source: &'a str,
) -> impl Iterator<Item = Result<(usize, String)>> + 'a {
    reader.lines().enumerate().filter_map(move |(idx, line)| {
        let line_no = idx + 1;
        match line {
            Err(e) => Some(Err(Error::parse(source, line_no, e.to_string()))),
            Ok(text) => {
                let trimmed = text.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    None
                } else {
                    Some(Ok((line_no, trimmed.to_string())))
                }
            }
        }
    })
}

/// Parse a detections fixture.
///
/// Records for one `(frame, channel)` pair must appear as a single run
/// within that channel's stream: returning to a frame after the channel has
/// moved on would make detection indices ambiguous and is reported as a
/// duplicate.
pub fn parse_detections<R: BufRead>(reader: R, source: &str) -> Result<Vec<FrameRecord>> {
    let mut frames: BTreeMap<u64, FrameRecord> = BTreeMap::new();
    let mut open: BTreeMap<ChannelId, u64> = BTreeMap::new();
    let mut closed: std::collections::BTreeSet<(ChannelId, u64)> = Default::default();

    for item in fixture_lines(reader, source) {
        let (line_no, text) = item?;
        let rec: DetectionLine = serde_json::from_str(&text)
            .map_err(|e| Error::parse(source, line_no, e.to_string()))?;
        let detection = Detection::new(rec.bbox, rec.class, rec.confidence)
            .map_err(|e| Error::parse(source, line_no, e.to_string()))?;

        match open.get(&rec.channel) {
            Some(&current) if current == rec.frame => {}
            previous => {
                if closed.contains(&(rec.channel, rec.frame)) {
                    let index = frames[&rec.frame].channel(rec.channel).len();
                    return Err(Error::parse(
                        source,
                        line_no,
                        format!(
                            "duplicate (frame {}, channel {}, index {index}): records for this frame were already closed",
                            rec.frame, rec.channel
                        ),
                    ));
                }
                if let Some(&prev) = previous {
                    closed.insert((rec.channel, prev));
                }
                open.insert(rec.channel, rec.frame);
            }
        }

        frames
            .entry(rec.frame)
            .or_insert_with(|| FrameRecord::new(rec.frame))
            .channel_mut(rec.channel)
            .push(detection);
    }
    Ok(frames.into_values().collect())
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<Vec<FrameRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_detections(std::io::BufReader::new(file), &path.display().to_string())
}

/// Write frames in fixture format: frame order, channel A before B.
pub fn write_detections<W: Write>(mut out: W, frames: &[FrameRecord]) -> Result<()> {
    for frame in frames {
        for channel in [ChannelId::A, ChannelId::B] {
            for d in frame.channel(channel) {
                let line = DetectionLine {
                    frame: frame.frame_id,
                    channel,
                    class: d.class.clone(),
                    bbox: d.bbox,
                    confidence: d.confidence,
                };
                serde_json::to_writer(&mut out, &line)?;
                out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
            }
        }
    }
    Ok(())
}

/// Lateral offset of one unit square against another that yields the
/// requested IoU: overlap `1 - d`, union `1 + d`.
pub fn unit_square_offset(target_iou: f64) -> f64 {
    (1.0 - target_iou) / (1.0 + target_iou)
}

/// Generate `n` frames whose channel-B box overlaps the channel-A box with
/// an IoU drawn from `Beta(params)`.
///
/// Channel A always reports the unit square at the origin; channel B reports
/// the same square shifted right by [`unit_square_offset`]. Both channels
/// agree on `base_class`. Confidences are drawn uniformly from `[0.9, 1.0)`.
pub fn synthesize_frames(
    params: &BetaParams,
    n: usize,
    seed: u64,
    base_class: &SignClass,
) -> Result<Vec<FrameRecord>> {
    if n == 0 {
        return Err(Error::InvalidValue("frame count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = BoundingBox::new(0.0, 0.0, 1.0, 1.0)?;
    let mut frames = Vec::with_capacity(n);
    for frame_id in 0..n as u64 {
        let u = open_unit(&mut rng);
        let target = beta_quantile(params, u).clamp(f64::MIN_POSITIVE, 1.0);
        let shifted = unit.translate(unit_square_offset(target), 0.0)?;
        let conf_a = 0.9 + 0.1 * rng.random::<f64>();
        let conf_b = 0.9 + 0.1 * rng.random::<f64>();
        frames.push(FrameRecord {
            frame_id,
            detections_a: vec![Detection::new(unit, base_class.clone(), conf_a)?],
            detections_b: vec![Detection::new(shifted, base_class.clone(), conf_b)?],
        });
    }
    Ok(frames)
}

// Uniform draw on the open interval (0, 1).
fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
