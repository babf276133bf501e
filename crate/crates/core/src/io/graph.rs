//! Converter for OctoMap scan-graph (`.graph`) files.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! node_count u32
//! per node: point_count u32 | point_count * (x y z: f64)     sensor frame
//!           tx ty tz: f64 | qw qx qy qz: f64                 sensor pose
//!           id u32
//! edge_count u32 | edges ...                                 ignored
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::scan::{Scan, ScanFile};

#[derive(Clone, Debug, PartialEq)]
pub struct GraphNode {
    pub id: u32,
    pub translation: [f64; 3],
    /// Unit quaternion (w, x, y, z).
    pub rotation: [f64; 4],
    pub points: Vec<[f64; 3]>,
}

impl GraphNode {
    /// Rotate then translate a sensor-frame point.
    pub fn to_world(&self, p: [f64; 3]) -> [f64; 3] {
        let [w, x, y, z] = self.rotation;
        let r = [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ];
        std::array::from_fn(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + self.translation[i])
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let b = self
            .buf
            .get(self.pos..self.pos + N)
            .ok_or_else(|| Error::Format(format!("scan graph truncated at byte {}", self.pos)))?;
        self.pos += N;
        Ok(b.try_into().expect("length N"))
    }

    fn u32(&mut self) -> Result<u32> {
        self.bytes().map(u32::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.bytes().map(f64::from_le_bytes)
    }

    fn vec3(&mut self) -> Result<[f64; 3]> {
        Ok([self.f64()?, self.f64()?, self.f64()?])
    }
}

pub fn parse_graph(bytes: &[u8]) -> Result<Vec<GraphNode>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let n = c.u32()?;
    let mut nodes = Vec::new();
    for _ in 0..n {
        let count = c.u32()? as usize;
        if count.saturating_mul(24) > bytes.len() - c.pos {
            return Err(Error::Format(format!("point count {count} exceeds file size")));
        }
        let points = (0..count).map(|_| c.vec3()).collect::<Result<_>>()?;
        let translation = c.vec3()?;
        let rotation = [c.f64()?, c.f64()?, c.f64()?, c.f64()?];
        let id = c.u32()?;
        nodes.push(GraphNode { id, translation, rotation, points });
    }
    Ok(nodes)
}

/// Inverse of [`parse_graph`], writing an empty edge list.
pub fn encode_graph(nodes: &[GraphNode]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(nodes.len() as u32).to_le_bytes());
    for node in nodes {
        out.extend_from_slice(&(node.points.len() as u32).to_le_bytes());
        for v in node.points.iter().flatten().chain(&node.translation).chain(&node.rotation) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&node.id.to_le_bytes());
    }
    out.extend_from_slice(&0u32.to_le_bytes());
    out
}

/// World-frame scans, one per graph node.
pub fn graph_to_scans(nodes: &[GraphNode]) -> ScanFile {
    let scans = nodes
        .iter()
        .map(|n| Scan::new(n.translation, n.points.iter().map(|&p| n.to_world(p)).collect()))
        .collect();
    ScanFile { scans }
}

pub fn convert_graph(path: impl AsRef<Path>) -> Result<ScanFile> {
    Ok(graph_to_scans(&parse_graph(&std::fs::read(path)?)?))
}
