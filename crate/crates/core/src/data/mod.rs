//! Radar data pipeline: Z–R conversion, class quantization, downsampling,
//! rain filtering, windowing, the synthetic generator and the on-disk
//! container.

mod classes;
pub mod container;
mod downsample;
mod frame;
pub mod synthetic;
mod window;
pub mod zr;

pub use classes::{denormalize, normalize, ClassTable, DEFAULT_BOUNDARIES};
pub use container::{Dataset, Manifest, SequenceEntry, Split};
pub use downsample::downsample;
pub use frame::{Encoding, FrameData, RainFrame, Sample, Sequence, NUM_CLASSES};
pub use synthetic::{generate_synthetic_sequence, SyntheticConfig};
pub use window::{
    filtered_starts, passes_rain_filter, window_dataset, WindowSpec, DEFAULT_RAIN_THRESHOLD,
};
pub use zr::{rain_rate_to_reflectivity, reflectivity_to_rain_rate, ZrRelation};
