//! Shared foundation for the FTU segmentation pipeline: raster types,
//! sample metadata, the RLE mask codec, deterministic random streams, and
//! the on-disk formats every other crate speaks.

pub mod error;
pub mod io;
pub mod meta;
pub mod raster;
pub mod rle;
pub mod rng;

pub use error::{CoreError, Result};
pub use meta::{Organ, SampleMeta, Sex, Source};
pub use raster::{BinaryMask, ByteImage, ProbMap};
pub use rle::{rle_decode, rle_encode, Rle, Run};
pub use rng::SeededRng;
