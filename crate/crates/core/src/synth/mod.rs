//! Degraded-dataset synthesis: parameter sampling, the per-sample pipeline
//! (low-light, scattering, volumetric occlusion) and the dataset writer.

mod dataset;
mod params;
mod sample;

pub use dataset::{
    generate_dataset, sample_id, DatasetConfig, ImageFormat, InputPair, Manifest, ManifestEntry, SampleMeta,
    WeatherCounts, MANIFEST_FILE, MANIFEST_SCHEMA_VERSION,
};
pub use params::{
    sample_weather_params, Interval, RainRanges, SamplingRanges, SnowRanges, WeatherKind, WeatherParams, WeatherType,
};
pub use sample::{apply_low_light, synthesize_sample, undo_low_light, DegradedSample};
