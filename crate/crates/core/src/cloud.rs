//! LiDAR point clouds and their two on-disk encodings: packed little-endian
//! `f32` triples, and CSV with an `x,y,z` header.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Points in the sensor frame, meters: x forward, y left, z up.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<[f32; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvPoint {
    x: f32,
    y: f32,
    z: f32,
}

impl PointCloud {
    pub fn new(points: Vec<[f32; 3]>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::invalid(format!("point {i} has a non-finite coordinate")));
        }
        Ok(PointCloud { points })
    }

    pub fn points(&self) -> &[[f32; 3]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Decodes packed little-endian `(x, y, z)` `f32` records.
    pub fn from_bin_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() % 12 != 0 {
            return Err(Error::format(
                "point cloud",
                format!("{} bytes is not a whole number of 12-byte records", bytes.len()),
            ));
        }
        let points = bytes
            .chunks_exact(12)
            .map(|rec| {
                let f = |o: usize| f32::from_le_bytes([rec[o], rec[o + 1], rec[o + 2], rec[o + 3]]);
                [f(0), f(4), f(8)]
            })
            .collect();
        PointCloud::new(points).map_err(|e| Error::format("point cloud", e.to_string()))
    }

    pub fn to_bin_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.points.len() * 12);
        for p in &self.points {
            for c in p {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out
    }

    /// Parses CSV with the exact header `x,y,z`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::format("point cloud csv", e.to_string()))?;
        if header.iter().map(str::trim).collect::<Vec<_>>() != ["x", "y", "z"] {
            return Err(Error::format("point cloud csv", "header must be x,y,z"));
        }
        let mut points = Vec::new();
        for row in rdr.deserialize::<CsvPoint>() {
            let p = row.map_err(|e| Error::format("point cloud csv", e.to_string()))?;
            points.push([p.x, p.y, p.z]);
        }
        PointCloud::new(points).map_err(|e| Error::format("point cloud csv", e.to_string()))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        w.write_record(["x", "y", "z"])
            .map_err(|e| Error::invalid(e.to_string()))?;
        for p in &self.points {
            w.serialize(CsvPoint { x: p[0], y: p[1], z: p[2] })
                .map_err(|e| Error::invalid(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))
    }

    /// Reads either encoding, chosen by the `.csv` extension.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let name = path.display().to_string();
        let res = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            Self::from_csv_reader(bytes.as_slice())
        } else {
            Self::from_bin_bytes(&bytes)
        };
        res.map_err(|e| match e {
            Error::InputFormat { reason, .. } => Error::format(name, reason),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bin_rejects_partial_records_and_nan() {
        assert!(PointCloud::from_bin_bytes(&[0u8; 13]).is_err());
        let mut b = vec![0u8; 12];
        b[0..4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(PointCloud::from_bin_bytes(&b).is_err());
        assert!(PointCloud::from_bin_bytes(&[]).unwrap().is_empty());
    }

    #[test]
    fn csv_requires_header() {
        let ok = PointCloud::from_csv_reader("x,y,z\n1,2,3\n-1.5,0,2\n".as_bytes()).unwrap();
        assert_eq!(ok.points(), &[[1.0, 2.0, 3.0], [-1.5, 0.0, 2.0]]);
        assert!(PointCloud::from_csv_reader("a,b,c\n1,2,3\n".as_bytes()).is_err());
        assert!(PointCloud::from_csv_reader("x,y,z\n1,2\n".as_bytes()).is_err());
        assert!(PointCloud::from_csv_reader("x,y,z\n1,2,nan\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn encodings_round_trip(pts in prop::collection::vec(prop::array::uniform3(-200f32..200.0), 0..50)) {
            let cloud = PointCloud::new(pts).unwrap();
            prop_assert_eq!(&PointCloud::from_bin_bytes(&cloud.to_bin_bytes()).unwrap(), &cloud);
            let mut buf = Vec::new();
            cloud.write_csv(&mut buf).unwrap();
            prop_assert_eq!(&PointCloud::from_csv_reader(buf.as_slice()).unwrap(), &cloud);
        }
    }
}
