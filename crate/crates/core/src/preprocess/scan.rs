use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// The six prototypical expressions, in label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expression {
    Anger,
    Disgust,
    Fear,
    Happiness,
    Sadness,
    Surprise,
}

impl Expression {
    pub const ALL: [Expression; 6] = [
        Self::Anger,
        Self::Disgust,
        Self::Fear,
        Self::Happiness,
        Self::Sadness,
        Self::Surprise,
    ];

    pub fn label(self) -> usize {
        self as usize
    }

    pub fn from_label(label: usize) -> Result<Self> {
        Self::ALL
            .get(label)
            .copied()
            .ok_or_else(|| Error::Input(format!("no expression with label {label}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Anger => "anger",
            Self::Disgust => "disgust",
            Self::Fear => "fear",
            Self::Happiness => "happiness",
            Self::Sadness => "sadness",
            Self::Surprise => "surprise",
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Expression {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .or_else(|| s.parse::<usize>().ok().and_then(|l| Self::ALL.get(l).copied()))
            .ok_or_else(|| Error::Input(format!("unknown expression `{s}`")))
    }
}

/// Salient facial region a landmark belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    LeftEye,
    RightEye,
    Nose,
    Mouth,
}

impl Region {
    pub const ALL: [Region; 4] = [Self::LeftEye, Self::RightEye, Self::Nose, Self::Mouth];

    pub fn tag(self) -> &'static str {
        match self {
            Self::LeftEye => "left-eye",
            Self::RightEye => "right-eye",
            Self::Nose => "nose",
            Self::Mouth => "mouth",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.tag() == tag)
    }
}

/// A 2D landmark in normalized image coordinates: `x` grows to the right,
/// `y` grows downwards, both in `[0,1]` over the projection box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub region: Region,
    pub x: f64,
    pub y: f64,
}

/// A colored point cloud with region-tagged landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    /// `(x, y, z)` in millimetres; `y` up, `z` towards the viewer.
    pub points: Vec<[f64; 3]>,
    /// Per-point RGB in `[0,1]`.
    pub colors: Vec<[f64; 3]>,
    pub landmarks: Vec<Landmark>,
    pub subject_id: u64,
    pub expression: Expression,
    pub intensity: u8,
}

impl Scan {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Input("scan has no points".into()));
        }
        if self.points.len() != self.colors.len() {
            return Err(Error::Input(format!(
                "{} points but {} colors",
                self.points.len(),
                self.colors.len()
            )));
        }
        if let Some(p) = self.points.iter().find(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::Input(format!("non-finite point {p:?}")));
        }
        if self.colors.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Input("colors must lie in [0,1]".into()));
        }
        for r in Region::ALL {
            if !self.landmarks.iter().any(|l| l.region == r) {
                return Err(Error::Input(format!("no landmark for region {}", r.tag())));
            }
        }
        Ok(())
    }

    /// Text form: a header `subject expression intensity`, then `tag x y`
    /// landmark lines, then `x y z r g b` point lines. `#` starts a comment.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# subject expression intensity")?;
        writeln!(w, "{} {} {}", self.subject_id, self.expression, self.intensity)?;
        for l in &self.landmarks {
            writeln!(w, "{} {} {}", l.region.tag(), l.x, l.y)?;
        }
        for (p, c) in self.points.iter().zip(&self.colors) {
            writeln!(w, "{} {} {} {} {} {}", p[0], p[1], p[2], c[0], c[1], c[2])?;
        }
        Ok(())
    }

    pub fn read_text<R: Read>(r: R) -> Result<Self> {
        let mut header = None;
        let mut landmarks = Vec::new();
        let mut points = Vec::new();
        let mut colors = Vec::new();
        for (i, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Format(format!("scan line {}: {what}: `{body}`", i + 1));
            let toks: Vec<&str> = body.split_whitespace().collect();
            if header.is_none() {
                let [s, e, k] = toks[..] else { return Err(bad("expected `subject expression intensity`")) };
                let subject = s.parse().map_err(|_| bad("bad subject id"))?;
                let expression: Expression = e.parse().map_err(|_| bad("bad expression"))?;
                let intensity = k.parse().map_err(|_| bad("bad intensity"))?;
                header = Some((subject, expression, intensity));
                continue;
            }
            let num = |t: &str| t.parse::<f64>().map_err(|_| bad("bad number"));
            match toks[..] {
                [tag, x, y] => {
                    if !points.is_empty() {
                        return Err(bad("landmark after points"));
                    }
                    let region = Region::from_tag(tag).ok_or_else(|| bad("unknown region tag"))?;
                    landmarks.push(Landmark { region, x: num(x)?, y: num(y)? });
                }
                [x, y, z, r, g, b] => {
                    points.push([num(x)?, num(y)?, num(z)?]);
                    colors.push([num(r)?, num(g)?, num(b)?]);
                }
                _ => return Err(bad("expected a landmark or a point")),
            }
        }
        let (subject_id, expression, intensity) =
            header.ok_or_else(|| Error::Format("scan file has no header".into()))?;
        let scan = Scan { points, colors, landmarks, subject_id, expression, intensity };
        scan.validate()?;
        Ok(scan)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        self.write_text(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_text(fs::File::open(path)?)
    }
}
