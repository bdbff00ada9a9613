//! Canonical scanpath representation.
//!
//! Coordinates are stored normalized to the unit square; the source image
//! dimensions travel with each scanpath so metrics that work in pixel space
//! (heatmap rendering) can convert back. Durations are milliseconds.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A single fixation: normalized position and dwell time in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    x: f64,
    y: f64,
    duration: f64,
}

impl Fixation {
    pub fn new(x: f64, y: f64, duration: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(Error::InvalidFixation(format!(
                "coordinates ({x}, {y}) outside the unit square"
            )));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::InvalidFixation(format!(
                "duration must be positive, got {duration}"
            )));
        }
        Ok(Self { x, y, duration })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    /// Dwell time in milliseconds.
    pub fn duration(&self) -> f64 {
        self.duration
    }
}

/// An ordered fixation sequence over one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scanpath {
    case_id: String,
    image_width: u32,
    image_height: u32,
    fixations: Vec<Fixation>,
    report_text: Option<String>,
}

impl Scanpath {
    pub fn new(
        case_id: impl Into<String>,
        image_width: u32,
        image_height: u32,
        fixations: Vec<Fixation>,
    ) -> Result<Self> {
        if image_width == 0 || image_height == 0 {
            return Err(Error::InvalidDimensions {
                width: image_width,
                height: image_height,
            });
        }
        Ok(Self {
            case_id: case_id.into(),
            image_width,
            image_height,
            fixations,
            report_text: None,
        })
    }

    pub fn with_report(mut self, text: Option<String>) -> Self {
        self.report_text = text;
        self
    }

    /// Builds a scanpath from pixel-space `(px, py, ms)` triples.
    ///
    /// Pixel coordinates must lie in `[0, W] x [0, H]`; the error names the
    /// first offending fixation.
    pub fn from_pixels(
        case_id: impl Into<String>,
        pixel_fixations: &[(f64, f64, f64)],
        image_dims: (u32, u32),
    ) -> Result<Self> {
        let (width, height) = image_dims;
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions { width, height });
        }
        let (w, h) = (f64::from(width), f64::from(height));
        let fixations = pixel_fixations
            .iter()
            .enumerate()
            .map(|(index, &(px, py, ms))| {
                if !(0.0..=w).contains(&px) || !(0.0..=h).contains(&py) {
                    return Err(Error::OutOfBounds {
                        index,
                        px,
                        py,
                        width,
                        height,
                    });
                }
                Fixation::new(px / w, py / h, ms).map_err(|e| match e {
                    Error::InvalidFixation(msg) => {
                        Error::InvalidFixation(format!("fixation {index}: {msg}"))
                    }
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(case_id, width, height, fixations)
    }

    pub fn case_id(&self) -> &str {
        &self.case_id
    }

    pub fn image_width(&self) -> u32 {
        self.image_width
    }

    pub fn image_height(&self) -> u32 {
        self.image_height
    }

    pub fn image_dims(&self) -> (u32, u32) {
        (self.image_width, self.image_height)
    }

    pub fn fixations(&self) -> &[Fixation] {
        &self.fixations
    }

    pub fn report_text(&self) -> Option<&str> {
        self.report_text.as_deref()
    }

    pub fn len(&self) -> usize {
        self.fixations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixations.is_empty()
    }

    /// Fixation `i` in pixel coordinates.
    pub fn pixel_position(&self, i: usize) -> (f64, f64) {
        let f = &self.fixations[i];
        (
            f.x * f64::from(self.image_width),
            f.y * f64::from(self.image_height),
        )
    }

    /// Sum of fixation durations in milliseconds.
    pub fn total_duration(&self) -> f64 {
        self.fixations.iter().map(|f| f.duration).sum()
    }

    /// Same case metadata with a different fixation list.
    pub fn with_fixations(&self, fixations: Vec<Fixation>) -> Self {
        Self {
            fixations,
            ..self.clone()
        }
    }

    /// Pads with `(0, 0, 0)` rows or truncates to exactly `max_len` rows.
    pub fn pad_truncate(&self, max_len: usize) -> Result<FixationQuadSequence> {
        if max_len == 0 {
            return Err(Error::InvalidArgument(
                "maximum fixation length must be at least 1".into(),
            ));
        }
        let rows = (0..max_len)
            .map(|i| match self.fixations.get(i) {
                Some(f) => FixationQuad::valid(f.x, f.y, f.duration),
                None => FixationQuad::PADDING,
            })
            .collect();
        Ok(FixationQuadSequence { rows })
    }
}

/// One `(x, y, t, v)` row of a padded sequence. `t` is in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixationQuad {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub padding: bool,
}

impl FixationQuad {
    pub const PADDING: FixationQuad = FixationQuad {
        x: 0.0,
        y: 0.0,
        t: 0.0,
        padding: true,
    };

    fn valid(x: f64, y: f64, t: f64) -> Self {
        Self {
            x,
            y,
            t,
            padding: false,
        }
    }

    /// The padding flag as a probability target: 1 for padding, 0 for valid.
    pub fn v(&self) -> f64 {
        if self.padding {
            1.0
        } else {
            0.0
        }
    }
}

/// Fixed-length sequence of quads: a valid prefix followed by padding.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationQuadSequence {
    rows: Vec<FixationQuad>,
}

impl FixationQuadSequence {
    /// Validates prefix/suffix contiguity and the padding sentinel.
    pub fn from_rows(rows: Vec<FixationQuad>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("sequence must have at least one row".into()));
        }
        let valid = rows.iter().take_while(|r| !r.padding).count();
        for (i, r) in rows.iter().enumerate().skip(valid) {
            if !r.padding {
                return Err(Error::InvalidArgument(format!(
                    "valid row {i} follows padding"
                )));
            }
            if *r != FixationQuad::PADDING {
                return Err(Error::InvalidArgument(format!(
                    "padding row {i} does not carry the (0,0,0) sentinel"
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[FixationQuad] {
        &self.rows
    }

    /// Sequence length `F`.
    pub fn max_len(&self) -> usize {
        self.rows.len()
    }

    /// Number of valid (non-padding) rows.
    pub fn valid_len(&self) -> usize {
        self.rows.iter().take_while(|r| !r.padding).count()
    }

    /// Valid rows converted back into fixations.
    pub fn strip_padding(&self) -> Vec<Fixation> {
        self.rows
            .iter()
            .take_while(|r| !r.padding)
            .map(|r| Fixation {
                x: r.x,
                y: r.y,
                duration: r.t,
            })
            .collect()
    }
}
