//! Legacy-VTK ASCII writers (structured points for the design fields,
//! unstructured triangles for the mechanical state) and a minimal structured
//! points reader used by the round-trip tests and the streamline CLI.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum VtkError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {0}: {1}")]
    Parse(usize, String),
}

/// Atomic text write: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, content: &str) -> Result<(), std::io::Error> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(content.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

/// Structured-points dataset: nodal scalars (and optional vectors) on a
/// uniform grid.
pub struct StructuredPoints {
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub scalars: Vec<(String, Vec<f64>)>,
    pub vectors: Vec<(String, Vec<[f64; 3]>)>,
}

impl StructuredPoints {
    pub fn num_points(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn write(&self, path: &Path) -> Result<(), VtkError> {
        let n = self.num_points();
        for (name, v) in &self.scalars {
            assert_eq!(v.len(), n, "field {name} length");
        }
        let mut s = String::new();
        s.push_str("# vtk DataFile Version 3.0\n");
        s.push_str("frcopt design fields\n");
        s.push_str("ASCII\n");
        s.push_str("DATASET STRUCTURED_POINTS\n");
        s.push_str(&format!("DIMENSIONS {} {} {}\n", self.dims[0], self.dims[1], self.dims[2]));
        s.push_str(&format!("ORIGIN {} {} {}\n", self.origin[0], self.origin[1], self.origin[2]));
        s.push_str(&format!("SPACING {} {} {}\n", self.spacing[0], self.spacing[1], self.spacing[2]));
        s.push_str(&format!("POINT_DATA {n}\n"));
        for (name, values) in &self.scalars {
            s.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
            for v in values {
                s.push_str(&format!("{v:.17e}\n"));
            }
        }
        for (name, values) in &self.vectors {
            s.push_str(&format!("VECTORS {name} double\n"));
            for v in values {
                s.push_str(&format!("{:.17e} {:.17e} {:.17e}\n", v[0], v[1], v[2]));
            }
        }
        write_atomic(path, &s)?;
        Ok(())
    }

    /// Minimal reader for files produced by [`write`](Self::write).
    pub fn read(path: &Path) -> Result<Self, VtkError> {
        let text = std::fs::read_to_string(path)?;
        let mut dims = [0usize; 3];
        let mut origin = [0.0f64; 3];
        let mut spacing = [1.0f64; 3];
        let mut scalars: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut vectors: BTreeMap<String, Vec<[f64; 3]>> = BTreeMap::new();
        let mut scalar_order = Vec::new();
        let mut vector_order = Vec::new();
        let mut lines = text.lines().enumerate().peekable();
        let mut npoints = 0usize;
        while let Some((i, line)) = lines.next() {
            let line = line.trim();
            let mut tok = line.split_whitespace();
            match tok.next() {
                Some("DIMENSIONS") => {
                    for d in dims.iter_mut() {
                        *d = tok
                            .next()
                            .and_then(|t| t.parse().ok())
                            .ok_or_else(|| VtkError::Parse(i + 1, "bad DIMENSIONS".into()))?;
                    }
                }
                Some("ORIGIN") => {
                    for d in origin.iter_mut() {
                        *d = tok
                            .next()
                            .and_then(|t| t.parse().ok())
                            .ok_or_else(|| VtkError::Parse(i + 1, "bad ORIGIN".into()))?;
                    }
                }
                Some("SPACING") => {
                    for d in spacing.iter_mut() {
                        *d = tok
                            .next()
                            .and_then(|t| t.parse().ok())
                            .ok_or_else(|| VtkError::Parse(i + 1, "bad SPACING".into()))?;
                    }
                }
                Some("POINT_DATA") => {
                    npoints = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| VtkError::Parse(i + 1, "bad POINT_DATA".into()))?;
                }
                Some("SCALARS") => {
                    let name = tok
                        .next()
                        .ok_or_else(|| VtkError::Parse(i + 1, "SCALARS needs a name".into()))?
                        .to_string();
                    // skip LOOKUP_TABLE line
                    lines.next();
                    let mut values = Vec::with_capacity(npoints);
                    while values.len() < npoints {
                        let (j, vline) = lines
                            .next()
                            .ok_or_else(|| VtkError::Parse(i + 1, "truncated scalars".into()))?;
                        for t in vline.split_whitespace() {
                            values.push(
                                t.parse()
                                    .map_err(|_| VtkError::Parse(j + 1, "bad scalar value".into()))?,
                            );
                        }
                    }
                    scalar_order.push(name.clone());
                    scalars.insert(name, values);
                }
                Some("VECTORS") => {
                    let name = tok
                        .next()
                        .ok_or_else(|| VtkError::Parse(i + 1, "VECTORS needs a name".into()))?
                        .to_string();
                    let mut values = Vec::with_capacity(npoints);
                    let mut comps: Vec<f64> = Vec::new();
                    while values.len() < npoints {
                        let (j, vline) = lines
                            .next()
                            .ok_or_else(|| VtkError::Parse(i + 1, "truncated vectors".into()))?;
                        for t in vline.split_whitespace() {
                            comps.push(
                                t.parse()
                                    .map_err(|_| VtkError::Parse(j + 1, "bad vector value".into()))?,
                            );
                            if comps.len() == 3 {
                                values.push([comps[0], comps[1], comps[2]]);
                                comps.clear();
                            }
                        }
                    }
                    vector_order.push(name.clone());
                    vectors.insert(name, values);
                }
                _ => {}
            }
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(VtkError::Parse(0, "missing DIMENSIONS".into()));
        }
        let n = dims[0] * dims[1] * dims[2];
        for (name, v) in &scalars {
            if v.len() != n {
                return Err(VtkError::Parse(0, format!("field {name}: {} values for {n} points", v.len())));
            }
        }
        Ok(Self {
            dims,
            origin,
            spacing,
            scalars: scalar_order.into_iter().map(|k| (k.clone(), scalars[&k].clone())).collect(),
            vectors: vector_order.into_iter().map(|k| (k.clone(), vectors[&k].clone())).collect(),
        })
    }

    pub fn scalar(&self, name: &str) -> Option<&[f64]> {
        self.scalars.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

/// Unstructured triangle mesh with point vectors and cell scalars
/// (displacement / stress / strain-energy density on solid cells).
pub struct TriangleMesh {
    pub points: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
    pub point_vectors: Vec<(String, Vec<[f64; 3]>)>,
    pub cell_scalars: Vec<(String, Vec<f64>)>,
}

impl TriangleMesh {
    pub fn write(&self, path: &Path) -> Result<(), VtkError> {
        let mut s = String::new();
        s.push_str("# vtk DataFile Version 3.0\n");
        s.push_str("frcopt state fields\n");
        s.push_str("ASCII\n");
        s.push_str("DATASET UNSTRUCTURED_GRID\n");
        s.push_str(&format!("POINTS {} double\n", self.points.len()));
        for p in &self.points {
            s.push_str(&format!("{:.17e} {:.17e} {:.17e}\n", p[0], p[1], p[2]));
        }
        s.push_str(&format!("CELLS {} {}\n", self.triangles.len(), 4 * self.triangles.len()));
        for t in &self.triangles {
            s.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
        }
        s.push_str(&format!("CELL_TYPES {}\n", self.triangles.len()));
        for _ in &self.triangles {
            s.push_str("5\n");
        }
        if !self.point_vectors.is_empty() {
            s.push_str(&format!("POINT_DATA {}\n", self.points.len()));
            for (name, values) in &self.point_vectors {
                s.push_str(&format!("VECTORS {name} double\n"));
                for v in values {
                    s.push_str(&format!("{:.17e} {:.17e} {:.17e}\n", v[0], v[1], v[2]));
                }
            }
        }
        if !self.cell_scalars.is_empty() {
            s.push_str(&format!("CELL_DATA {}\n", self.triangles.len()));
            for (name, values) in &self.cell_scalars {
                s.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
                for v in values {
                    s.push_str(&format!("{v:.17e}\n"));
                }
            }
        }
        write_atomic(path, &s)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structured_points_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.vtk");
        let sp = StructuredPoints {
            dims: [3, 2, 1],
            origin: [0.0, 0.0, 0.0],
            spacing: [0.5, 0.5, 1.0],
            scalars: vec![
                ("phi".into(), vec![1.0, -2.0, 3.5, 0.25, -0.125, 9.0]),
                ("theta_xy".into(), vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]),
            ],
            vectors: vec![("tangent".into(), vec![[1.0, 0.0, 0.0]; 6])],
        };
        sp.write(&path).unwrap();
        let back = StructuredPoints::read(&path).unwrap();
        assert_eq!(back.dims, sp.dims);
        assert_eq!(back.num_points(), 6);
        assert_eq!(back.scalar("phi").unwrap(), &sp.scalars[0].1[..]);
        assert_eq!(back.scalar("theta_xy").unwrap(), &sp.scalars[1].1[..]);
        assert_eq!(back.vectors[0].1.len(), 6);
    }

    #[test]
    fn triangle_mesh_is_self_consistent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.vtk");
        let mesh = TriangleMesh {
            points: vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            triangles: vec![[0, 1, 2]],
            point_vectors: vec![("displacement".into(), vec![[0.0; 3]; 3])],
            cell_scalars: vec![("energy_density".into(), vec![0.5])],
        };
        mesh.write(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("POINTS 3 double"));
        assert!(text.contains("CELLS 1 4"));
        assert!(text.contains("CELL_TYPES 1"));
        assert!(text.contains("VECTORS displacement double"));
    }
}
