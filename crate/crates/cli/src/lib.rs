//! Library half of the `hyperseg` tool: file formats shared with tests and
//! fuzz targets.

pub mod features_file;
