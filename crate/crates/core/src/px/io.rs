//! JSON and CSV persistence of [`GridFunction`]s.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::px::grid::{Grid, GridFunction};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dimension: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    shape: Vec<usize>,
    spacing: Vec<f64>,
    name: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Document {
    header: Header,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn to_json(&self) -> Result<String> {
        let g = self.grid();
        let doc = Document {
            header: Header {
                dimension: g.dim(),
                lower: g.lower().to_vec(),
                upper: g.upper().to_vec(),
                shape: g.shape().to_vec(),
                spacing: g.spacing().to_vec(),
                name: self.name().to_string(),
            },
            values: self.values().to_vec(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Document = serde_json::from_str(text)?;
        Self::from_document(doc)
    }

    fn from_document(doc: Document) -> Result<Self> {
        let h = doc.header;
        if h.lower.len() != h.dimension || h.shape.len() != h.dimension {
            return Err(Error::Domain(format!(
                "header declares dimension {} but carries {} corners and {} extents",
                h.dimension,
                h.lower.len(),
                h.shape.len()
            )));
        }
        if h.shape.iter().any(|s| *s < 2) {
            return Err(Error::Domain(format!("shape {:?} needs at least 2 nodes per axis", h.shape)));
        }
        let cells: Vec<usize> = h.shape.iter().map(|s| s - 1).collect();
        let grid = Grid::new(h.lower, h.upper, &cells)?;
        GridFunction::new(grid, doc.values, h.name)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(self.to_json()?.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let doc: Document = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        Self::from_document(doc)
    }

    /// One row per node: coordinates `x0..x{n-1}` then `value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let n = self.dim();
        let mut header: Vec<String> = (0..n).map(|d| format!("x{d}")).collect();
        header.push("value".into());
        w.write_record(&header)?;
        let mut x = vec![0.0; n];
        for (i, v) in self.values().iter().enumerate() {
            self.grid().point_into(i, &mut x);
            let mut row: Vec<String> = x.iter().map(|c| c.to_string()).collect();
            row.push(v.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Grid {
    /// Rebuilds derived fields after deserializing a bare `Grid`.
    pub fn normalized(self) -> Self {
        self.rebuilt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_is_exact() {
        let g = Grid::new(vec![-1.0, 0.0], vec![1.0, 0.5], &[6, 3]).unwrap();
        let u = GridFunction::from_fn(&g, "u", |x| (x[0] * 3.1).sin() + x[1] / 7.0);
        let back = GridFunction::from_json(&u.to_json().unwrap()).unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn header_is_self_describing() {
        let g = Grid::cube(1, 0.0, 1.0, 4).unwrap();
        let u = GridFunction::constant(&g, "f", 2.0);
        let v: serde_json::Value = serde_json::from_str(&u.to_json().unwrap()).unwrap();
        assert_eq!(v["header"]["dimension"], 1);
        assert_eq!(v["header"]["name"], "f");
        assert_eq!(v["header"]["spacing"][0], 0.25);
        assert_eq!(v["values"].as_array().unwrap().len(), 5);
    }

    #[test]
    fn rejects_short_value_arrays() {
        let text = r#"{"header":{"dimension":1,"lower":[0],"upper":[1],"shape":[3],"spacing":[0.5],"name":"u"},"values":[1,2]}"#;
        assert!(GridFunction::from_json(text).is_err());
    }
}
