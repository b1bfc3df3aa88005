use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::ExportError;
use crate::mesh::Mesh;
use crate::optimizer::OptimizerState;
use crate::stress::element_von_mises;

/// Contents of a legacy VTK unstructured-grid snapshot.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldSnapshot {
    pub points: Vec<[f64; 2]>,
    pub cells: Vec<[usize; 3]>,
    pub point_data: BTreeMap<String, Vec<f64>>,
    pub cell_data: BTreeMap<String, Vec<f64>>,
}

impl FieldSnapshot {
    pub fn from_state(mesh: &Mesh, state: &OptimizerState) -> Self {
        let u = &state.u.values;
        let u_mag = (0..mesh.node_count()).map(|i| u[2 * i].hypot(u[2 * i + 1])).collect();
        let mut point_data = BTreeMap::new();
        point_data.insert("phi".to_string(), state.phi.values.clone());
        point_data.insert("chi".to_string(), state.chi.values.clone());
        point_data.insert("u_mag".to_string(), u_mag);
        let mut cell_data = BTreeMap::new();
        cell_data.insert("von_mises".to_string(), element_von_mises(&state.sigma));
        Self {
            points: mesh.nodes.clone(),
            cells: mesh.elements.clone(),
            point_data,
            cell_data,
        }
    }

    pub fn point_field(&self, name: &str) -> Option<&[f64]> {
        self.point_data.get(name).map(Vec::as_slice)
    }

    pub fn write(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "gradtopo design snapshot")?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(w, "POINTS {} double", self.points.len())?;
        for p in &self.points {
            writeln!(w, "{} {} 0", p[0], p[1])?;
        }
        writeln!(w, "CELLS {} {}", self.cells.len(), 4 * self.cells.len())?;
        for c in &self.cells {
            writeln!(w, "3 {} {} {}", c[0], c[1], c[2])?;
        }
        writeln!(w, "CELL_TYPES {}", self.cells.len())?;
        for _ in &self.cells {
            writeln!(w, "5")?;
        }
        write_block(w, "POINT_DATA", self.points.len(), &self.point_data)?;
        write_block(w, "CELL_DATA", self.cells.len(), &self.cell_data)?;
        Ok(())
    }
}

fn write_block(w: &mut impl Write, kind: &str, n: usize, data: &BTreeMap<String, Vec<f64>>) -> std::io::Result<()> {
    if data.is_empty() {
        return Ok(());
    }
    writeln!(w, "{kind} {n}")?;
    for (name, values) in data {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in values {
            writeln!(w, "{v}")?;
        }
    }
    Ok(())
}

/// Write `phi`, `chi`, `|u|` at the nodes and the von Mises stress per cell.
pub fn write_fields(path: &Path, mesh: &Mesh, state: &OptimizerState) -> Result<(), ExportError> {
    write_fields_to(path, &FieldSnapshot::from_state(mesh, state))
}

pub fn write_fields_to(path: &Path, snapshot: &FieldSnapshot) -> Result<(), ExportError> {
    if path.as_os_str().is_empty() {
        return Err(ExportError::EmptyPath);
    }
    let file = fs::File::create(path).map_err(|e| ExportError::io(path, e))?;
    let mut w = BufWriter::new(file);
    snapshot
        .write(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| ExportError::io(path, e))
}

/// Parse a snapshot written by [`write_fields`].
pub fn read_vtk(path: &Path) -> Result<FieldSnapshot, ExportError> {
    if path.as_os_str().is_empty() {
        return Err(ExportError::EmptyPath);
    }
    let text = fs::read_to_string(path).map_err(|e| ExportError::io(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let err = |line: usize, message: &str| ExportError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    };
    let mut snap = FieldSnapshot::default();
    let mut block: Option<(bool, usize)> = None;
    // skip the version and title lines
    lines.next();
    lines.next();
    while let Some((ln, line)) = lines.next() {
        let words: Vec<&str> = line.split_whitespace().collect();
        let count = |k: usize| -> Result<usize, ExportError> {
            words
                .get(k)
                .and_then(|w| w.parse().ok())
                .ok_or_else(|| err(ln, "expected a count"))
        };
        match words[0] {
            "ASCII" | "DATASET" => {}
            "POINTS" => {
                let n = count(1)?;
                for _ in 0..n {
                    let (l, t) = lines.next().ok_or_else(|| err(ln, "truncated POINTS"))?;
                    let v = parse_floats(t).ok_or_else(|| err(l, "bad point"))?;
                    if v.len() < 2 {
                        return Err(err(l, "bad point"));
                    }
                    snap.points.push([v[0], v[1]]);
                }
            }
            "CELLS" => {
                let n = count(1)?;
                for _ in 0..n {
                    let (l, t) = lines.next().ok_or_else(|| err(ln, "truncated CELLS"))?;
                    let v: Vec<usize> = t
                        .split_whitespace()
                        .map(|s| s.parse())
                        .collect::<Result<_, _>>()
                        .map_err(|_| err(l, "bad cell"))?;
                    if v.len() != 4 || v[0] != 3 {
                        return Err(err(l, "only triangles are supported"));
                    }
                    snap.cells.push([v[1], v[2], v[3]]);
                }
            }
            "CELL_TYPES" => {
                for _ in 0..count(1)? {
                    lines.next();
                }
            }
            "POINT_DATA" => block = Some((true, count(1)?)),
            "CELL_DATA" => block = Some((false, count(1)?)),
            "SCALARS" => {
                let (is_point, n) = block.ok_or_else(|| err(ln, "SCALARS outside a data block"))?;
                let name = words.get(1).ok_or_else(|| err(ln, "missing field name"))?.to_string();
                let (l, t) = lines.next().ok_or_else(|| err(ln, "missing LOOKUP_TABLE"))?;
                if !t.starts_with("LOOKUP_TABLE") {
                    return Err(err(l, "expected LOOKUP_TABLE"));
                }
                let mut values = Vec::with_capacity(n);
                while values.len() < n {
                    let (l, t) = lines.next().ok_or_else(|| err(ln, "truncated field"))?;
                    values.extend(parse_floats(t).ok_or_else(|| err(l, "bad value"))?);
                }
                let target = if is_point {
                    &mut snap.point_data
                } else {
                    &mut snap.cell_data
                };
                target.insert(name, values);
            }
            _ => return Err(err(ln, &format!("unexpected keyword {}", words[0]))),
        }
    }
    Ok(snap)
}

fn parse_floats(t: &str) -> Option<Vec<f64>> {
    t.split_whitespace().map(|s| s.parse().ok()).collect()
}
