use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of rain-rate classes.
pub const NUM_CLASSES: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    /// Rain rate in mm/h.
    Rate,
    /// Class index `0..NUM_CLASSES`.
    Class,
    /// Class index scaled onto `[0, 1]`.
    Normalized,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrameData {
    Rate(Vec<f64>),
    Class(Vec<u8>),
    Normalized(Vec<f64>),
}

/// One 2-D radar grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RainFrame {
    height: usize,
    width: usize,
    /// Minutes since the start of the sequence.
    pub timestamp_min: f64,
    pub resolution_km: f64,
    data: FrameData,
}

impl RainFrame {
    fn build(height: usize, width: usize, data: FrameData) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("frame must be non-empty, got {height}x{width}")));
        }
        let len = match &data {
            FrameData::Rate(v) | FrameData::Normalized(v) => v.len(),
            FrameData::Class(v) => v.len(),
        };
        if len != height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} frame needs {} cells, got {len}",
                height * width
            )));
        }
        Ok(Self {
            height,
            width,
            timestamp_min: 0.0,
            resolution_km: 1.0,
            data,
        })
    }

    pub fn from_rates(height: usize, width: usize, rates: Vec<f64>) -> Result<Self> {
        if let Some(bad) = rates.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
            return Err(Error::Data(format!("rain rate must be finite and >= 0, got {bad}")));
        }
        Self::build(height, width, FrameData::Rate(rates))
    }

    pub fn from_classes(height: usize, width: usize, classes: Vec<u8>) -> Result<Self> {
        if let Some(bad) = classes.iter().find(|c| **c as usize >= NUM_CLASSES) {
            return Err(Error::Data(format!(
                "class index {bad} outside 0..{}",
                NUM_CLASSES - 1
            )));
        }
        Self::build(height, width, FrameData::Class(classes))
    }

    pub fn from_normalized(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("normalized value {bad} outside [0, 1]")));
        }
        Self::build(height, width, FrameData::Normalized(values))
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::from_rates(height, width, vec![0.0; height * width])
    }

    pub fn with_timestamp(mut self, minutes: f64) -> Self {
        self.timestamp_min = minutes;
        self
    }

    pub fn with_resolution(mut self, km: f64) -> Self {
        self.resolution_km = km;
        self
    }

    /// Copy time and resolution metadata from `other`.
    pub(crate) fn with_meta_of(self, other: &RainFrame) -> Self {
        self.with_timestamp(other.timestamp_min)
            .with_resolution(other.resolution_km)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn encoding(&self) -> Encoding {
        match self.data {
            FrameData::Rate(_) => Encoding::Rate,
            FrameData::Class(_) => Encoding::Class,
            FrameData::Normalized(_) => Encoding::Normalized,
        }
    }

    pub fn data(&self) -> &FrameData {
        &self.data
    }

    pub fn rates(&self) -> Result<&[f64]> {
        match &self.data {
            FrameData::Rate(v) => Ok(v),
            _ => Err(self.wrong_encoding(Encoding::Rate)),
        }
    }

    pub fn classes(&self) -> Result<&[u8]> {
        match &self.data {
            FrameData::Class(v) => Ok(v),
            _ => Err(self.wrong_encoding(Encoding::Class)),
        }
    }

    pub fn normalized(&self) -> Result<&[f64]> {
        match &self.data {
            FrameData::Normalized(v) => Ok(v),
            _ => Err(self.wrong_encoding(Encoding::Normalized)),
        }
    }

    fn wrong_encoding(&self, wanted: Encoding) -> Error {
        Error::Data(format!(
            "expected {wanted:?} encoding, frame is {:?}",
            self.encoding()
        ))
    }
}

/// Ordered frames on a fixed cadence.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub frames: Vec<RainFrame>,
    pub timestep_min: f64,
}

impl Sequence {
    pub fn new(frames: Vec<RainFrame>, timestep_min: f64) -> Result<Self> {
        if let Some(first) = frames.first() {
            let (dims, enc) = (first.dims(), first.encoding());
            if frames.iter().any(|f| f.dims() != dims || f.encoding() != enc) {
                return Err(Error::Shape("sequence frames differ in shape or encoding".into()));
            }
        }
        Ok(Self {
            frames,
            timestep_min,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Keep every `every`-th frame starting with the first, e.g. 5-min to
    /// 15-min cadence with `every = 3`.
    pub fn thin(&self, every: usize) -> Result<Sequence> {
        if every == 0 {
            return Err(Error::Domain("temporal stride must be >= 1".into()));
        }
        Ok(Sequence {
            frames: self.frames.iter().step_by(every).cloned().collect(),
            timestep_min: self.timestep_min * every as f64,
        })
    }
}

/// Conditioning frames followed by the frames to predict.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub inputs: Vec<RainFrame>,
    pub targets: Vec<RainFrame>,
}

impl Sample {
    pub fn new(inputs: Vec<RainFrame>, targets: Vec<RainFrame>) -> Result<Self> {
        if inputs.is_empty() || targets.is_empty() {
            return Err(Error::Shape("a sample needs at least one input and one target".into()));
        }
        let first = &inputs[0];
        let all = inputs.iter().chain(&targets);
        if all.clone().any(|f| {
            f.dims() != first.dims()
                || f.encoding() != first.encoding()
                || f.resolution_km != first.resolution_km
        }) {
            return Err(Error::Shape("sample frames differ in shape, encoding or resolution".into()));
        }
        let times: Vec<f64> = all.map(|f| f.timestamp_min).collect();
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Data("sample timestamps must strictly increase".into()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn frames(&self) -> impl Iterator<Item = &RainFrame> {
        self.inputs.iter().chain(&self.targets)
    }

    pub fn len(&self) -> usize {
        self.inputs.len() + self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}
