//! Field snapshots and printable geometry.
//!
//! The final design is split at a `chi` threshold into two regions (the
//! void `phi < phi_threshold` belongs to neither), each region is traced
//! into polygons with holes, extruded, and written as a binary STL.

mod contour;
mod stl;
mod triangulate;
mod vtk;

use std::path::PathBuf;

use thiserror::Error;

pub use contour::{split_regions, threshold_contour, ContourPolygonSet, PolygonWithHoles, RegionMask};
pub use stl::{extrude_region, extrude_to_stl, read_stl, write_stl, TriangleSoup3D};
pub use triangulate::{check_simple, triangulate_polygon};
pub use vtk::{read_vtk, write_fields, write_fields_to, FieldSnapshot};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("output path is empty")]
    EmptyPath,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}

impl ExportError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        ExportError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Signed area of a closed ring; positive when counter-clockwise.
pub fn ring_area(ring: &[[f64; 2]]) -> f64 {
    let n = ring.len();
    let mut s = 0.0;
    for i in 0..n {
        let (p, q) = (ring[i], ring[(i + 1) % n]);
        s += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * s
}
