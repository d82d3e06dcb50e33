//! Peak detection on likelihood maps.
//!
//! Local maxima are found by comparing the map with its grayscale dilation.
//! Peaks whose prominence is below `h` are removed beforehand by the
//! h-maxima transform (reconstruction by dilation of `map - h` under `map`);
//! survivors must exceed the value threshold `T` and lie at least `d` pixels
//! from every stronger accepted peak.

mod dilate;
mod peaks;
mod reconstruct;

pub use dilate::{gray_dilate, Footprint};
pub use peaks::{detect_peaks, detect_slice, local_maxima, peaks_to_detections, DetectorConfig, Peak, Plateau};
pub use reconstruct::{h_maxima, morph_reconstruct_dilation};
