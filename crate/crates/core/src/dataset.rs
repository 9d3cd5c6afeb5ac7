//! Line-delimited JSON object files and attribute normalization.
//!
//! One record per line:
//! `{"id": "o1", "x": 3.0, "y": 4.0, "keywords": ["pizza"], "attrs": [12.5, 3]}`.
//! Blank lines are skipped. Raw attribute values are min-max normalized per
//! dimension over the file, then flipped for dimensions where larger raw
//! values are better, so that every stored attribute prefers small values.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::drtree::Mbr;
use crate::error::{QdrError, Result};
use crate::model::{GeoObject, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub keywords: Vec<String>,
    pub attrs: Vec<f64>,
}

impl From<&GeoObject> for ObjectRecord {
    fn from(o: &GeoObject) -> Self {
        Self {
            id: o.id.clone(),
            x: o.location.x,
            y: o.location.y,
            keywords: o.keywords.clone(),
            attrs: o.attributes.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    #[default]
    LowerBetter,
    HigherBetter,
}

/// Per-dimension ranges fitted on a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub directions: Vec<Direction>,
}

impl Normalizer {
    /// Fits ranges over `rows`. Missing trailing directions default to
    /// lower-better.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, directions: &[Direction]) -> Result<Self> {
        let mut min: Vec<f64> = Vec::new();
        let mut max: Vec<f64> = Vec::new();
        for row in rows {
            if min.is_empty() {
                min = row.to_vec();
                max = row.to_vec();
                continue;
            }
            if row.len() != min.len() {
                return Err(QdrError::DimensionMismatch {
                    expected: min.len(),
                    actual: row.len(),
                });
            }
            for (i, &v) in row.iter().enumerate() {
                min[i] = min[i].min(v);
                max[i] = max[i].max(v);
            }
        }
        if min.is_empty() {
            return Err(QdrError::InvalidParameter("cannot fit a normalizer on no rows".into()));
        }
        if directions.len() > min.len() {
            return Err(QdrError::DimensionMismatch {
                expected: min.len(),
                actual: directions.len(),
            });
        }
        let mut dirs = directions.to_vec();
        dirs.resize(min.len(), Direction::LowerBetter);
        Ok(Self {
            min,
            max,
            directions: dirs,
        })
    }

    pub fn dimension(&self) -> usize {
        self.min.len()
    }

    /// Constant dimensions map to 0 regardless of direction.
    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(i, &v)| {
                let span = self.max[i] - self.min[i];
                if span <= 0.0 {
                    return 0.0;
                }
                let unit = ((v - self.min[i]) / span).clamp(0.0, 1.0);
                match self.directions[i] {
                    Direction::LowerBetter => unit,
                    Direction::HigherBetter => 1.0 - unit,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub object_count: usize,
    pub attribute_dimension: usize,
    pub attribute_directions: Vec<Direction>,
    pub bounds: Mbr,
    pub universe_size: usize,
}

impl DatasetManifest {
    pub fn describe(objects: &[GeoObject], directions: &[Direction]) -> Result<Self> {
        let first = objects
            .first()
            .ok_or_else(|| QdrError::InvalidParameter("dataset has no objects".into()))?;
        let dim = first.attributes.len();
        if dim == 0 {
            return Err(QdrError::InvalidParameter("objects need at least one attribute".into()));
        }
        let mut dirs = directions.to_vec();
        dirs.resize(dim, Direction::LowerBetter);
        Ok(Self {
            object_count: objects.len(),
            attribute_dimension: dim,
            attribute_directions: dirs,
            bounds: Mbr::enclosing(objects.iter().map(|o| o.location)).unwrap(),
            universe_size: objects
                .iter()
                .flat_map(|o| o.keywords.iter())
                .collect::<BTreeSet<_>>()
                .len(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadOptions {
    pub directions: Vec<Direction>,
    /// Take `attrs` as already normalized; values must lie in `[0, 1]`.
    pub prenormalized: bool,
}

fn record_error(path: &Path, line: usize, message: impl Into<String>) -> QdrError {
    QdrError::Record {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parses records, reporting every malformed line. Returns `(line, record)`.
pub fn read_records(path: &Path) -> Result<Vec<(usize, ObjectRecord)>> {
    let reader = BufReader::new(File::open(path).map_err(QdrError::file(path))?);
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut dim = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ObjectRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                errors.push(record_error(path, line_no, e.to_string()));
                continue;
            }
        };
        let problem = if rec.keywords.iter().all(|k| k.trim().is_empty()) {
            Some("empty keyword list".to_string())
        } else if rec.attrs.is_empty() {
            Some("empty attribute list".to_string())
        } else if rec.attrs.iter().any(|a| !a.is_finite()) || !rec.x.is_finite() || !rec.y.is_finite() {
            Some("non-finite number".to_string())
        } else if dim.is_some_and(|d| d != rec.attrs.len()) {
            Some(format!(
                "expected {} attributes, found {}",
                dim.unwrap(),
                rec.attrs.len()
            ))
        } else {
            None
        };
        match problem {
            Some(m) => errors.push(record_error(path, line_no, m)),
            None => {
                dim.get_or_insert(rec.attrs.len());
                records.push((line_no, rec));
            }
        }
    }
    if let Some(first) = errors.first() {
        return Err(QdrError::Ingest {
            path: path.to_path_buf(),
            count: errors.len(),
            first: first.to_string(),
        });
    }
    if records.is_empty() {
        return Err(QdrError::Ingest {
            path: path.to_path_buf(),
            count: 0,
            first: "file contains no records".into(),
        });
    }
    Ok(records)
}

/// Reads and normalizes an object file.
pub fn load_objects(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<(Vec<GeoObject>, DatasetManifest)> {
    let path = path.as_ref();
    let records = read_records(path)?;
    let normalizer = if opts.prenormalized {
        None
    } else {
        Some(Normalizer::fit(
            records.iter().map(|(_, r)| r.attrs.as_slice()),
            &opts.directions,
        )?)
    };
    let mut objects = Vec::with_capacity(records.len());
    let mut errors = Vec::new();
    for (line, r) in records {
        let attrs = match &normalizer {
            Some(n) => n.apply(&r.attrs),
            None => r.attrs,
        };
        match GeoObject::new(r.id, Point::new(r.x, r.y), &r.keywords, attrs) {
            Ok(o) => objects.push(o),
            Err(e) => errors.push(record_error(path, line, e.to_string())),
        }
    }
    if let Some(first) = errors.first() {
        return Err(QdrError::Ingest {
            path: path.to_path_buf(),
            count: errors.len(),
            first: first.to_string(),
        });
    }
    let manifest = DatasetManifest::describe(&objects, &opts.directions)?;
    Ok((objects, manifest))
}

pub fn write_objects(objects: &[GeoObject], mut w: impl Write) -> Result<()> {
    for o in objects {
        serde_json::to_writer(&mut w, &ObjectRecord::from(o))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_objects(objects: &[GeoObject], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref()).map_err(QdrError::file(path))?);
    write_objects(objects, &mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::io::Write as _;

    use super::*;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn hand_fixture_normalizes_exactly() {
        let f = file(
            r#"{"id":"a","x":0,"y":0,"keywords":["Pizza","pizza"],"attrs":[10,1.0,7]}
{"id":"b","x":1,"y":1,"keywords":["steak"],"attrs":[20,0.5,7]}

{"id":"c","x":2,"y":0,"keywords":["sushi"],"attrs":[30,0.0,7]}
"#,
        );
        let opts = LoadOptions {
            directions: vec![Direction::LowerBetter, Direction::HigherBetter],
            prenormalized: false,
        };
        let (objs, manifest) = load_objects(f.path(), &opts).unwrap();
        let attrs: Vec<_> = objs.iter().map(|o| o.attributes.clone()).collect();
        // (v - min) / (max - min), second dimension flipped, third constant.
        assert_eq!(
            attrs,
            vec![vec![0.0, 0.0, 0.0], vec![0.5, 0.5, 0.0], vec![1.0, 1.0, 0.0]]
        );
        assert_eq!(objs[0].keywords, vec!["pizza"]);
        assert_eq!(manifest.object_count, 3);
        assert_eq!(manifest.attribute_dimension, 3);
        assert_eq!(manifest.universe_size, 3);
        assert_eq!(manifest.attribute_directions[2], Direction::LowerBetter);
    }

    #[test]
    fn reports_every_bad_line() {
        let f = file(
            r#"{"id":"a","x":0,"y":0,"keywords":["p"],"attrs":[1]}
{"id":"b","x":0,"keywords":["p"],"attrs":[1]}
{"id":"c","x":0,"y":0,"keywords":[],"attrs":[1]}
{"id":"d","x":0,"y":0,"keywords":["p"],"attrs":["cheap"]}
"#,
        );
        match load_objects(f.path(), &LoadOptions::default()) {
            Err(QdrError::Ingest { count, first, .. }) => {
                assert_eq!(count, 3);
                assert!(first.contains(":2:"), "{first}");
                assert!(first.contains("y"), "{first}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn prenormalized_values_are_range_checked() {
        let f = file(r#"{"id":"a","x":0,"y":0,"keywords":["p"],"attrs":[1.5]}"#);
        let opts = LoadOptions {
            prenormalized: true,
            ..Default::default()
        };
        assert!(matches!(
            load_objects(f.path(), &opts),
            Err(QdrError::Ingest { count: 1, .. })
        ));
    }

    #[test]
    fn renormalizing_is_identity() {
        let rows = [vec![3.0, 9.0], vec![5.0, 1.0], vec![4.0, 4.0]];
        let n = Normalizer::fit(rows.iter().map(|r| r.as_slice()), &[Direction::HigherBetter]).unwrap();
        let once: Vec<_> = rows.iter().map(|r| n.apply(r)).collect();
        let n2 = Normalizer::fit(once.iter().map(|r| r.as_slice()), &[]).unwrap();
        let twice: Vec<_> = once.iter().map(|r| n2.apply(r)).collect();
        assert_eq!(once, twice);
    }

    #[test]
    fn write_then_load_roundtrip() {
        let objs = vec![
            GeoObject::new("x", Point::new(1.5, 2.5), ["b", "a"], vec![0.25, 1.0]).unwrap(),
            GeoObject::new("y", Point::new(-1.0, 0.0), ["c"], vec![0.0, 0.5]).unwrap(),
        ];
        let f = tempfile::NamedTempFile::new().unwrap();
        save_objects(&objs, f.path()).unwrap();
        let opts = LoadOptions {
            prenormalized: true,
            ..Default::default()
        };
        let (back, _) = load_objects(f.path(), &opts).unwrap();
        assert_eq!(back, objs);
    }
}
