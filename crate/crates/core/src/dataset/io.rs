//! Line-oriented dataset container.
//!
//! ```text
//! # cocodiff skeleton dataset v1
//! shape<TAB>C<TAB>T<TAB>V<TAB>M
//! classes<TAB>name0<TAB>name1...
//! topology<TAB>V<TAB>center<TAB>a-b<TAB>a-b...
//! seq<TAB>sample_id<TAB>label<TAB>x0 x1 x2 ...
//! ```
//!
//! Coordinates are written with the shortest decimal form that round-trips
//! to the same `f32`, so save followed by load is exact.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{GraphTopology, SequenceShape, SkeletonDataset, SkeletonSequence};
use crate::error::{Error, Result};

const MAGIC: &str = "# cocodiff skeleton dataset v1";

pub fn write_dataset<W: Write>(ds: &SkeletonDataset, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{MAGIC}")?;
    let s = ds.shape;
    writeln!(w, "shape\t{}\t{}\t{}\t{}", s.channels, s.frames, s.joints, s.actors)?;
    write!(w, "classes")?;
    for name in &ds.class_names {
        write!(w, "\t{name}")?;
    }
    writeln!(w)?;
    write!(w, "topology\t{}\t{}", ds.topology.num_joints, ds.topology.center_joint)?;
    for (a, b) in &ds.topology.edges {
        write!(w, "\t{a}-{b}")?;
    }
    writeln!(w)?;
    let mut line = String::new();
    for seq in &ds.sequences {
        line.clear();
        use std::fmt::Write as _;
        let _ = write!(line, "seq\t{}\t{}\t", seq.sample_id, seq.label);
        for (i, x) in seq.data.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{x}");
        }
        writeln!(w, "{line}")?;
    }
    w.flush()
}

pub fn save_dataset(ds: &SkeletonDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    for name in &ds.class_names {
        if name.is_empty() || name.contains(['\t', '\n', '\r']) {
            return Err(Error::config("class_names", format!("{name:?} cannot be stored")));
        }
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(ds, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<SkeletonDataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file))
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn num<T: std::str::FromStr>(line: usize, what: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| perr(line, format!("invalid {what} `{s}`")))
}

pub fn read_dataset<R: Read>(r: R) -> Result<SkeletonDataset> {
    let reader = BufReader::new(r);
    let mut shape: Option<SequenceShape> = None;
    let mut class_names: Option<Vec<String>> = None;
    let mut topology: Option<GraphTopology> = None;
    let mut sequences = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| perr(lineno, e.to_string()))?;
        if lineno == 1 {
            if line.trim_end() != MAGIC {
                return Err(perr(1, "missing dataset header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let tag = fields.next().unwrap_or_default();
        match tag {
            "shape" => {
                let v: Vec<usize> = fields
                    .map(|f| num(lineno, "extent", f))
                    .collect::<Result<_>>()?;
                if v.len() != 4 {
                    return Err(perr(lineno, "shape needs four extents"));
                }
                shape = Some(SequenceShape {
                    channels: v[0],
                    frames: v[1],
                    joints: v[2],
                    actors: v[3],
                });
            }
            "classes" => class_names = Some(fields.map(str::to_string).collect()),
            "topology" => {
                let v: usize = num(lineno, "joint count", fields.next().unwrap_or_default())?;
                let center: usize = num(lineno, "center joint", fields.next().unwrap_or_default())?;
                let mut edges = Vec::new();
                for f in fields {
                    let (a, b) = f
                        .split_once('-')
                        .ok_or_else(|| perr(lineno, format!("invalid edge `{f}`")))?;
                    edges.push((num(lineno, "edge endpoint", a)?, num(lineno, "edge endpoint", b)?));
                }
                topology = Some(
                    GraphTopology::new(v, edges, center).map_err(|e| perr(lineno, e.to_string()))?,
                );
            }
            "seq" => {
                let (Some(shape), Some(names)) = (shape, class_names.as_ref()) else {
                    return Err(perr(lineno, "sequence record before shape/classes header"));
                };
                let sample_id: u64 = num(lineno, "sample id", fields.next().unwrap_or_default())?;
                let label: usize = num(lineno, "label", fields.next().unwrap_or_default())?;
                if label >= names.len() {
                    return Err(perr(
                        lineno,
                        format!("label {label} out of range for {} classes", names.len()),
                    ));
                }
                let body = fields.next().unwrap_or_default();
                let data: Vec<f32> = body
                    .split_ascii_whitespace()
                    .map(|x| num::<f32>(lineno, "coordinate", x))
                    .collect::<Result<_>>()?;
                if data.len() != shape.len() {
                    return Err(perr(
                        lineno,
                        format!("expected {} coordinates, found {}", shape.len(), data.len()),
                    ));
                }
                if data.iter().any(|x| !x.is_finite()) {
                    return Err(perr(lineno, "non-finite coordinate"));
                }
                sequences.push(SkeletonSequence {
                    data,
                    label,
                    sample_id,
                });
            }
            other => return Err(perr(lineno, format!("unknown record `{other}`"))),
        }
    }

    let shape = shape.ok_or_else(|| perr(0, "missing shape record"))?;
    let class_names = class_names.ok_or_else(|| perr(0, "missing classes record"))?;
    let topology = topology.ok_or_else(|| perr(0, "missing topology record"))?;
    if topology.num_joints != shape.joints {
        return Err(perr(0, "topology joint count disagrees with shape"));
    }
    Ok(SkeletonDataset {
        shape,
        sequences,
        class_names,
        topology,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, GenerationSpec};

    fn tiny() -> SkeletonDataset {
        generate_dataset(&GenerationSpec {
            num_classes: 2,
            samples_per_class: 2,
            frames: 4,
            ..GenerationSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn roundtrip_is_exact() {
        let ds = tiny();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        assert_eq!(read_dataset(&buf[..]).unwrap(), ds);
    }

    #[test]
    fn out_of_range_label_is_parse_error() {
        let ds = tiny();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("seq\t0\t0\t", "seq\t0\t5\t", 1);
        match read_dataset(text.as_bytes()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 5),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn empty_sequence_list_is_valid() {
        let mut ds = tiny();
        ds.sequences.clear();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = read_dataset(&buf[..]).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.class_names, ds.class_names);
    }

    #[test]
    fn truncated_record_reports_line() {
        let ds = tiny();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        text.truncate(text.len() - 20);
        match read_dataset(text.as_bytes()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 8),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn bad_header_rejected() {
        assert!(matches!(
            read_dataset("hello\n".as_bytes()).unwrap_err(),
            Error::Parse { line: 1, .. }
        ));
    }
}
