use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Normalized rectangle carried by a grounding token. Coordinates are
/// fractions of the image width/height with `0 ≤ x1 ≤ x2 ≤ 1` and
/// `0 ≤ y1 ≤ y2 ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRegion")]
pub struct Region {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

#[derive(Deserialize)]
struct RawRegion {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl TryFrom<RawRegion> for Region {
    type Error = RegionError;

    fn try_from(r: RawRegion) -> Result<Self, Self::Error> {
        Region::new(r.x1, r.y1, r.x2, r.y2)
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionError {
    #[error("region must be written as [x1,y1,x2,y2], got {text:?}")]
    Syntax { text: String },
    #[error("region needs 4 coordinates, got {count}")]
    Arity { count: usize },
    #[error("coordinate {text:?} is not a finite number")]
    NotANumber { text: String },
    #[error("coordinate {name}={value} outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("{name2}={hi} is less than {name1}={lo}")]
    Inverted {
        name1: &'static str,
        name2: &'static str,
        lo: f64,
        hi: f64,
    },
}

const NAMES: [&str; 4] = ["x1", "y1", "x2", "y2"];

impl Region {
    pub const FULL: Region = Region {
        x1: 0.0,
        y1: 0.0,
        x2: 1.0,
        y2: 1.0,
    };

    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, RegionError> {
        let r = Region { x1, y1, x2, y2 };
        r.check()?;
        Ok(r)
    }

    /// Checks the bounds invariants.
    pub fn check(&self) -> Result<(), RegionError> {
        let coords = [self.x1, self.y1, self.x2, self.y2];
        for (name, v) in NAMES.iter().zip(coords) {
            if !v.is_finite() {
                return Err(RegionError::NotANumber { text: v.to_string() });
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(RegionError::OutOfRange { name, value: v });
            }
        }
        if self.x2 < self.x1 {
            return Err(RegionError::Inverted {
                name1: "x1",
                name2: "x2",
                lo: self.x1,
                hi: self.x2,
            });
        }
        if self.y2 < self.y1 {
            return Err(RegionError::Inverted {
                name1: "y1",
                name2: "y2",
                lo: self.y1,
                hi: self.y2,
            });
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.check().is_ok()
    }

    /// Snaps every coordinate to the 3-decimal grid used on the wire.
    pub fn quantized(&self) -> Region {
        Region {
            x1: snap(self.x1),
            y1: snap(self.y1),
            x2: snap(self.x2),
            y2: snap(self.y2),
        }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Canonical interior of a grounding span: `[x1,y1,x2,y2]` with three
    /// decimals each.
    pub fn to_canonical(&self) -> String {
        format!(
            "[{:.3},{:.3},{:.3},{:.3}]",
            self.x1 + 0.0,
            self.y1 + 0.0,
            self.x2 + 0.0,
            self.y2 + 0.0
        )
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_canonical())
    }
}

fn snap(v: f64) -> f64 {
    // `+ 0.0` folds -0.0 into 0.0 so it never prints as "-0.000".
    (v * 1000.0).round() / 1000.0 + 0.0
}

/// Parses the interior of a grounding span. Any decimal precision is
/// accepted; bounds are checked on the values as written, then the result
/// is snapped to the 3-decimal wire grid.
pub fn parse_region(text: &str) -> Result<Region, RegionError> {
    let inner = text
        .trim()
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| RegionError::Syntax { text: text.to_string() })?;
    let parts: Vec<&str> = inner.split(',').collect();
    if parts.len() != 4 {
        return Err(RegionError::Arity { count: parts.len() });
    }
    let mut coords = [0.0; 4];
    for (slot, part) in coords.iter_mut().zip(&parts) {
        let part = part.trim();
        let v: f64 = part
            .parse()
            .map_err(|_| RegionError::NotANumber { text: part.to_string() })?;
        if !v.is_finite() {
            return Err(RegionError::NotANumber { text: part.to_string() });
        }
        *slot = v;
    }
    Ok(Region::new(coords[0], coords[1], coords[2], coords[3])?.quantized())
}
