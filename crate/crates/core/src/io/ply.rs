//! ASCII PLY point clouds with an optional per-point instance id.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlyCloud {
    pub points: PointCloud,
    pub instance_ids: Option<Vec<i64>>,
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Ply { line, message: message.into() }
}

const FLOAT_TYPES: [&str; 4] = ["float", "double", "float32", "float64"];
const INT_TYPES: [&str; 12] =
    ["char", "uchar", "short", "ushort", "int", "uint", "int8", "uint8", "int16", "uint16", "int32", "uint32"];

struct Element {
    name: String,
    count: usize,
    properties: Vec<(String, String)>,
    header_line: usize,
}

/// Parses ASCII PLY text. Only the `vertex` element is read; other elements
/// are skipped. Lines are numbered from 1.
pub fn parse_ply(text: &str) -> Result<PlyCloud> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(err(1, "missing 'ply' magic")),
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_seen = false;
    let mut last_line = 1;
    loop {
        let Some((n, line)) = lines.next() else {
            return Err(err(last_line + 1, "unexpected end of file before end_header"));
        };
        last_line = n;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", "1.0"] => format_seen = true,
            ["format", other, ..] => return Err(err(n, format!("unsupported format '{other}'"))),
            ["element", name, count] => {
                let count = count.parse().map_err(|_| err(n, format!("bad element count '{count}'")))?;
                elements.push(Element { name: name.to_string(), count, properties: Vec::new(), header_line: n });
            }
            ["property", "list", ..] => {
                let e = elements.last_mut().ok_or_else(|| err(n, "property before any element"))?;
                if e.name == "vertex" {
                    return Err(err(n, "list properties on vertex are not supported"));
                }
                e.properties.push(("list".into(), tokens.last().unwrap_or(&"").to_string()));
            }
            ["property", ty, name] => {
                let e = elements.last_mut().ok_or_else(|| err(n, "property before any element"))?;
                e.properties.push((ty.to_string(), name.to_string()));
            }
            ["end_header"] => break,
            _ => return Err(err(n, format!("unrecognised header line '{line}'"))),
        }
    }
    if !format_seen {
        return Err(err(last_line, "missing 'format ascii 1.0' line"));
    }

    let mut out = PlyCloud::default();
    for e in &elements {
        if e.name != "vertex" {
            for k in 0..e.count {
                if lines.next().is_none() {
                    return Err(err(last_line + 1, format!("missing {} element {} of {}", e.name, k + 1, e.count)));
                }
                last_line += 1;
            }
            continue;
        }
        let find = |name: &str| e.properties.iter().position(|(_, p)| p == name);
        let mut xyz = [0usize; 3];
        for (slot, name) in xyz.iter_mut().zip(["x", "y", "z"]) {
            let idx = find(name).ok_or_else(|| err(e.header_line, format!("vertex has no '{name}' property")))?;
            if !FLOAT_TYPES.contains(&e.properties[idx].0.as_str()) {
                return Err(err(e.header_line, format!("property '{name}' must be floating point")));
            }
            *slot = idx;
        }
        let id_idx = find("instance_id");
        if let Some(i) = id_idx {
            if !INT_TYPES.contains(&e.properties[i].0.as_str()) {
                return Err(err(e.header_line, "property 'instance_id' must be an integer"));
            }
        }
        let mut ids = id_idx.map(|_| Vec::with_capacity(e.count));
        out.points.reserve(e.count);
        for k in 0..e.count {
            let Some((n, line)) = lines.next() else {
                return Err(err(last_line + 1, format!("missing vertex element {} of {}", k + 1, e.count)));
            };
            last_line = n;
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != e.properties.len() {
                return Err(err(n, format!("expected {} values, found {}", e.properties.len(), tokens.len())));
            }
            let num = |i: usize| -> Result<f64> {
                tokens[i].parse::<f64>().map_err(|_| err(n, format!("bad number '{}'", tokens[i])))
            };
            out.points.push(Vector3::new(num(xyz[0])?, num(xyz[1])?, num(xyz[2])?));
            if let (Some(ids), Some(i)) = (ids.as_mut(), id_idx) {
                ids.push(tokens[i].parse::<i64>().map_err(|_| err(n, format!("bad integer '{}'", tokens[i])))?);
            }
        }
        out.instance_ids = ids;
    }
    if !elements.iter().any(|e| e.name == "vertex") {
        return Err(err(last_line, "no vertex element"));
    }
    Ok(out)
}

pub fn format_ply(cloud: &PlyCloud) -> Result<String> {
    if let Some(ids) = &cloud.instance_ids {
        if ids.len() != cloud.points.len() {
            return Err(Error::Format("instance id count differs from point count".into()));
        }
    }
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", cloud.points.len());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.instance_ids.is_some() {
        s.push_str("property int instance_id\n");
    }
    s.push_str("end_header\n");
    for (k, p) in cloud.points.iter().enumerate() {
        let _ = write!(s, "{} {} {}", p.x, p.y, p.z);
        if let Some(ids) = &cloud.instance_ids {
            let _ = write!(s, " {}", ids[k]);
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn load_ply(path: &Path) -> Result<PlyCloud> {
    parse_ply(&std::fs::read_to_string(path)?)
}

pub fn save_ply(path: &Path, cloud: &PlyCloud) -> Result<()> {
    std::fs::write(path, format_ply(cloud)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn three_points_in_order() {
        let text = "ply\nformat ascii 1.0\ncomment test\nelement vertex 3\nproperty float x\nproperty float y\n\
                    property float z\nend_header\n1 2 3\n4 5 6\n-7.5 0 1e3\n";
        let c = parse_ply(text).unwrap();
        assert_eq!(
            c.points,
            vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(4.0, 5.0, 6.0), Vector3::new(-7.5, 0.0, 1000.0)]
        );
        assert!(c.instance_ids.is_none());
    }

    #[test]
    fn round_trip_is_exact_and_byte_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for with_ids in [false, true] {
            let points: PointCloud = (0..500)
                .map(|_| Vector3::new(rng.random_range(-1e3..1e3), rng.random::<f64>() * 1e-7, -rng.random::<f64>()))
                .collect();
            let ids = with_ids.then(|| (0..500).map(|k| (k % 7) as i64 - 1).collect());
            let cloud = PlyCloud { points, instance_ids: ids };
            let text = format_ply(&cloud).unwrap();
            let back = parse_ply(&text).unwrap();
            assert_eq!(back, cloud);
            assert_eq!(format_ply(&back).unwrap(), text);
        }
    }

    #[test]
    fn truncated_file_names_missing_element() {
        let text = "ply\nformat ascii 1.0\nelement vertex 3\nproperty double x\nproperty double y\n\
                    property double z\nend_header\n1 2 3\n4 5 6\n";
        match parse_ply(text) {
            Err(Error::Ply { line, message }) => {
                assert_eq!(line, 10);
                assert!(message.contains("vertex element 3 of 3"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_errors_carry_line_numbers() {
        let cases = [
            ("plx\n", 1),
            ("ply\nformat binary_little_endian 1.0\n", 2),
            ("ply\nformat ascii 1.0\nelement vertex x\n", 3),
            ("ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\nend_header\n1 2\n", 3),
            ("ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\nend_header\n1 2 q\n", 8),
            ("ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\nend_header\n1 2\n", 8),
        ];
        for (text, expected) in cases {
            match parse_ply(text) {
                Err(Error::Ply { line, .. }) => assert_eq!(line, expected, "{text:?}"),
                other => panic!("unexpected {other:?} for {text:?}"),
            }
        }
    }

    #[test]
    fn other_elements_are_skipped() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\n\
                    property uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n\
                    1 2 3 255\n3 0 0 0\n";
        let c = parse_ply(text).unwrap();
        assert_eq!(c.points, vec![Vector3::new(1.0, 2.0, 3.0)]);
    }
}
