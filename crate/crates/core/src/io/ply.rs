//! PLY 1.0 reader and writer.
//!
//! The reader accepts ascii and binary_little_endian files whose vertex
//! element carries float or double x, y, z, with optional uchar red, green,
//! blue; any other fixed-size vertex property is skipped by size. The
//! writer always emits double coordinates plus uchar colors, so binary
//! round-trips are bit-exact; ascii coordinates carry 9 significant digits.

use serde::{Deserialize, Serialize};

use crate::diff::PointLabel;
use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud, Rgb};

/// Vertex color written for matched points.
pub const MATCHED_COLOR: Rgb = [160, 160, 160];
/// Vertex color for points present only in the current cloud (damage side).
pub const UNMATCHED_CURRENT_COLOR: Rgb = [255, 0, 0];
/// Vertex color for points present only in the reference cloud.
pub const UNMATCHED_REFERENCE_COLOR: Rgb = [0, 255, 0];
/// Vertex color when neither labels nor stored colors exist.
pub const DEFAULT_COLOR: Rgb = [255, 255, 255];

pub fn label_color(label: PointLabel) -> Rgb {
    match label {
        PointLabel::Matched => MATCHED_COLOR,
        PointLabel::UnmatchedCurrent => UNMATCHED_CURRENT_COLOR,
        PointLabel::UnmatchedReference => UNMATCHED_REFERENCE_COLOR,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<ScalarType> {
        Some(match name {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    ty: ScalarType,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

/// Summary of a parsed header: format, vertex count, and the declared
/// vertex properties in order.
#[derive(Debug, Clone, PartialEq)]
pub struct PlyHeaderInfo {
    pub format: PlyFormat,
    pub vertex_count: usize,
    pub has_color: bool,
    pub property_names: Vec<String>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    /// Number of header lines, including `end_header`.
    lines: usize,
    /// Byte offset of the first data byte.
    body_offset: usize,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::PlyParse {
        line,
        message: message.into(),
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0usize;
    let mut line_no = 0usize;
    let mut next_line = || -> Result<(usize, String)> {
        if offset >= bytes.len() {
            return Err(Error::UnexpectedEndOfData);
        }
        let start = offset;
        let end = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|p| start + p)
            .ok_or(Error::UnexpectedEndOfData)?;
        offset = end + 1;
        line_no += 1;
        let raw = &bytes[start..end];
        let text = std::str::from_utf8(raw)
            .map_err(|_| parse_err(line_no, "header line is not valid UTF-8"))?;
        Ok((line_no, text.trim_end_matches('\r').to_string()))
    };

    let (line, magic) = next_line()?;
    if magic.trim() != "ply" {
        return Err(parse_err(line, "missing ply magic"));
    }

    let mut format: Option<PlyFormat> = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let (line, text) = next_line()?;
        let mut tokens = text.split_whitespace();
        match tokens.next() {
            None => continue, // blank header line
            Some("comment") | Some("obj_info") => continue,
            Some("format") => {
                let kind = tokens
                    .next()
                    .ok_or_else(|| parse_err(line, "format line missing type"))?;
                format = Some(match kind {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    "binary_big_endian" => {
                        return Err(parse_err(line, "binary_big_endian is not supported"))
                    }
                    other => return Err(parse_err(line, format!("unknown format `{other}`"))),
                });
            }
            Some("element") => {
                let name = tokens
                    .next()
                    .ok_or_else(|| parse_err(line, "element line missing name"))?;
                let count: usize = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err(line, "element line missing count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(line, "property before any element"))?;
                let ty_name = tokens
                    .next()
                    .ok_or_else(|| parse_err(line, "property line missing type"))?;
                if ty_name == "list" {
                    // Lists are only a problem if we must traverse them to
                    // reach the vertices; flagged at read time.
                    element.properties.push(Property {
                        name: format!(
                            "list:{}",
                            tokens.clone().next_back().unwrap_or_default()
                        ),
                        ty: ScalarType::U8,
                    });
                    continue;
                }
                let ty = ScalarType::parse(ty_name)
                    .ok_or_else(|| parse_err(line, format!("unknown property type `{ty_name}`")))?;
                let name = tokens
                    .next()
                    .ok_or_else(|| parse_err(line, "property line missing name"))?;
                element.properties.push(Property {
                    name: name.to_string(),
                    ty,
                });
            }
            Some("end_header") => {
                let format =
                    format.ok_or_else(|| parse_err(line, "end_header before format line"))?;
                return Ok(Header {
                    format,
                    elements,
                    lines: line_no,
                    body_offset: offset,
                });
            }
            Some(other) => {
                return Err(parse_err(line, format!("unexpected header keyword `{other}`")))
            }
        }
    }
}

struct VertexLayout {
    x: usize,
    y: usize,
    z: usize,
    color: Option<[usize; 3]>,
}

fn vertex_layout(element: &Element) -> Result<VertexLayout> {
    let find = |name: &str| element.properties.iter().position(|p| p.name == name);
    let coord = |name: &str| -> Result<usize> {
        let idx = find(name).ok_or_else(|| {
            parse_err(0, format!("vertex element has no `{name}` property"))
        })?;
        match element.properties[idx].ty {
            ScalarType::F32 | ScalarType::F64 => Ok(idx),
            other => Err(Error::UnsupportedCoordinateType(format!(
                "property `{name}` is {other:?}, expected float or double"
            ))),
        }
    };
    let x = coord("x")?;
    let y = coord("y")?;
    let z = coord("z")?;
    let color = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b))
            if [r, g, b]
                .iter()
                .all(|&i| element.properties[i].ty == ScalarType::U8) =>
        {
            Some([r, g, b])
        }
        _ => None,
    };
    for p in &element.properties {
        if p.name.starts_with("list:") {
            return Err(parse_err(0, "list properties on the vertex element are not supported"));
        }
    }
    Ok(VertexLayout { x, y, z, color })
}

/// Parses a PLY byte stream into a cloud.
pub fn read_ply(bytes: &[u8]) -> Result<PointCloud> {
    read_ply_with_info(bytes).map(|(cloud, _)| cloud)
}

/// Parses a PLY byte stream, also returning the header summary.
pub fn read_ply_with_info(bytes: &[u8]) -> Result<(PointCloud, PlyHeaderInfo)> {
    let header = parse_header(bytes)?;
    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| parse_err(header.lines, "no vertex element declared"))?;
    let vertex = &header.elements[vertex_pos];
    let layout = vertex_layout(vertex)?;

    let info = PlyHeaderInfo {
        format: header.format,
        vertex_count: vertex.count,
        has_color: layout.color.is_some(),
        property_names: vertex.properties.iter().map(|p| p.name.clone()).collect(),
    };

    let mut points = Vec::with_capacity(vertex.count);
    let mut colors: Option<Vec<Rgb>> = layout.color.map(|_| Vec::with_capacity(vertex.count));

    match header.format {
        PlyFormat::Ascii => {
            let body = std::str::from_utf8(&bytes[header.body_offset..])
                .map_err(|_| parse_err(header.lines + 1, "ascii body is not valid UTF-8"))?;
            let mut lines = body.lines();
            let mut line_no = header.lines;
            for element in &header.elements[..vertex_pos] {
                for _ in 0..element.count {
                    line_no += 1;
                    lines.next().ok_or(Error::UnexpectedEndOfData)?;
                }
            }
            for v in 0..vertex.count {
                line_no += 1;
                let line = lines.next().ok_or(Error::UnexpectedEndOfData)?;
                let tokens: Vec<&str> = line.split_whitespace().collect();
                if tokens.len() < vertex.properties.len() {
                    return Err(parse_err(
                        line_no,
                        format!(
                            "vertex {v}: expected {} values, found {}",
                            vertex.properties.len(),
                            tokens.len()
                        ),
                    ));
                }
                let num = |idx: usize| -> Result<f64> {
                    tokens[idx].parse::<f64>().map_err(|_| {
                        parse_err(line_no, format!("invalid number `{}`", tokens[idx]))
                    })
                };
                let p = Point3::new(num(layout.x)?, num(layout.y)?, num(layout.z)?);
                if !p.is_finite() {
                    return Err(parse_err(line_no, format!("non-finite coordinate at vertex {v}")));
                }
                points.push(p);
                if let (Some(cols), Some([r, g, b])) = (&mut colors, layout.color) {
                    let chan = |idx: usize| -> Result<u8> {
                        tokens[idx].parse::<u8>().map_err(|_| {
                            parse_err(line_no, format!("invalid color value `{}`", tokens[idx]))
                        })
                    };
                    cols.push([chan(r)?, chan(g)?, chan(b)?]);
                }
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let mut cursor = header.body_offset;
            let take = |cursor: &mut usize, n: usize| -> Result<&[u8]> {
                if *cursor + n > bytes.len() {
                    return Err(Error::UnexpectedEndOfData);
                }
                let slice = &bytes[*cursor..*cursor + n];
                *cursor += n;
                Ok(slice)
            };
            for element in &header.elements[..vertex_pos] {
                let mut stride = 0usize;
                for p in &element.properties {
                    if p.name.starts_with("list:") {
                        return Err(parse_err(
                            header.lines,
                            format!(
                                "cannot skip element `{}`: variable-length list property",
                                element.name
                            ),
                        ));
                    }
                    stride += p.ty.size();
                }
                take(&mut cursor, stride * element.count)?;
            }
            for v in 0..vertex.count {
                let mut values = [0.0f64; 3];
                let mut rgb = [0u8; 3];
                for (idx, prop) in vertex.properties.iter().enumerate() {
                    let raw = take(&mut cursor, prop.ty.size())?;
                    let coord_slot = if idx == layout.x {
                        Some(0)
                    } else if idx == layout.y {
                        Some(1)
                    } else if idx == layout.z {
                        Some(2)
                    } else {
                        None
                    };
                    if let Some(slot) = coord_slot {
                        values[slot] = match prop.ty {
                            ScalarType::F32 => {
                                f32::from_le_bytes(raw.try_into().unwrap()) as f64
                            }
                            ScalarType::F64 => f64::from_le_bytes(raw.try_into().unwrap()),
                            _ => unreachable!("layout guarantees float coordinates"),
                        };
                    } else if let Some([r, g, b]) = layout.color {
                        if idx == r {
                            rgb[0] = raw[0];
                        } else if idx == g {
                            rgb[1] = raw[0];
                        } else if idx == b {
                            rgb[2] = raw[0];
                        }
                    }
                }
                let p = Point3::new(values[0], values[1], values[2]);
                if !p.is_finite() {
                    return Err(parse_err(0, format!("non-finite coordinate at vertex {v}")));
                }
                points.push(p);
                if let Some(cols) = &mut colors {
                    cols.push(rgb);
                }
            }
        }
    }

    let cloud = PointCloud {
        points,
        colors,
        labels: None,
    };
    cloud.validate()?;
    Ok((cloud, info))
}

/// Serializes a cloud to PLY bytes.
///
/// When `labels` are given they drive the vertex colors (matched gray,
/// current-only red, reference-only green); otherwise stored colors are
/// used, falling back to white. Coordinates are written as doubles.
pub fn write_ply(
    cloud: &PointCloud,
    labels: Option<&[PointLabel]>,
    format: PlyFormat,
) -> Result<Vec<u8>> {
    cloud.validate()?;
    if let Some(labels) = labels {
        if labels.len() != cloud.len() {
            return Err(Error::AttributeLength {
                attribute: "labels",
                got: labels.len(),
                expected: cloud.len(),
            });
        }
    }

    let color_of = |i: usize| -> Rgb {
        if let Some(labels) = labels {
            label_color(labels[i])
        } else if let Some(colors) = &cloud.colors {
            colors[i]
        } else {
            DEFAULT_COLOR
        }
    };

    let format_name = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let mut out = Vec::with_capacity(64 + cloud.len() * 27);
    out.extend_from_slice(
        format!(
            "ply\nformat {format_name} 1.0\nelement vertex {}\n\
             property double x\nproperty double y\nproperty double z\n\
             property uchar red\nproperty uchar green\nproperty uchar blue\n\
             end_header\n",
            cloud.len()
        )
        .as_bytes(),
    );

    match format {
        PlyFormat::Ascii => {
            for (i, p) in cloud.points.iter().enumerate() {
                let [r, g, b] = color_of(i);
                out.extend_from_slice(
                    format!("{:.8e} {:.8e} {:.8e} {r} {g} {b}\n", p.x, p.y, p.z).as_bytes(),
                );
            }
        }
        PlyFormat::BinaryLittleEndian => {
            for (i, p) in cloud.points.iter().enumerate() {
                out.extend_from_slice(&p.x.to_le_bytes());
                out.extend_from_slice(&p.y.to_le_bytes());
                out.extend_from_slice(&p.z.to_le_bytes());
                out.extend_from_slice(&color_of(i));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_colored_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-100.0..100.0),
                    rng.random_range(-100.0..100.0),
                    rng.random_range(-100.0..100.0),
                )
            })
            .collect();
        let colors = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        PointCloud::with_colors(points, colors).unwrap()
    }

    #[test]
    fn single_vertex_ascii_file() {
        let data = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n";
        let cloud = read_ply(data).unwrap();
        assert_eq!(cloud.points, vec![Point3::ORIGIN]);
        assert!(cloud.colors.is_none());
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        for seed in 0..5 {
            let cloud = random_colored_cloud(200, seed);
            let bytes = write_ply(&cloud, None, PlyFormat::BinaryLittleEndian).unwrap();
            let (back, info) = read_ply_with_info(&bytes).unwrap();
            assert_eq!(back.points, cloud.points);
            assert_eq!(back.colors, cloud.colors);
            assert_eq!(info.format, PlyFormat::BinaryLittleEndian);
            assert_eq!(info.vertex_count, 200);
            assert!(info.has_color);
        }
    }

    #[test]
    fn ascii_round_trip_preserves_nine_significant_digits() {
        let cloud = random_colored_cloud(100, 9);
        let bytes = write_ply(&cloud, None, PlyFormat::Ascii).unwrap();
        let back = read_ply(&bytes).unwrap();
        for (a, b) in cloud.points.iter().zip(&back.points) {
            for (va, vb) in a.to_array().into_iter().zip(b.to_array()) {
                let rel = (va - vb).abs() / va.abs().max(1e-300);
                assert!(rel <= 1e-6, "{va} vs {vb}");
            }
        }
        assert_eq!(back.colors, cloud.colors);
    }

    #[test]
    fn extra_fixed_size_property_is_skipped() {
        // float coordinates plus a float "confidence" the reader must skip
        let mut data = Vec::new();
        data.extend_from_slice(
            b"ply\nformat binary_little_endian 1.0\nelement vertex 2\n\
              property float x\nproperty float y\nproperty float z\n\
              property float confidence\nend_header\n",
        );
        for (p, conf) in [([1.0f32, 2.0, 3.0], 0.5f32), ([4.0, 5.0, 6.0], 0.9)] {
            for v in p {
                data.extend_from_slice(&v.to_le_bytes());
            }
            data.extend_from_slice(&conf.to_le_bytes());
        }
        let cloud = read_ply(&data).unwrap();
        assert_eq!(
            cloud.points,
            vec![Point3::new(1.0, 2.0, 3.0), Point3::new(4.0, 5.0, 6.0)]
        );
    }

    #[test]
    fn preceding_fixed_size_element_is_skipped() {
        let mut data = Vec::new();
        data.extend_from_slice(
            b"ply\nformat binary_little_endian 1.0\n\
              element camera 1\nproperty float fov\n\
              element vertex 1\n\
              property double x\nproperty double y\nproperty double z\nend_header\n",
        );
        data.extend_from_slice(&1.5f32.to_le_bytes());
        for v in [7.0f64, 8.0, 9.0] {
            data.extend_from_slice(&v.to_le_bytes());
        }
        let cloud = read_ply(&data).unwrap();
        assert_eq!(cloud.points, vec![Point3::new(7.0, 8.0, 9.0)]);
    }

    #[test]
    fn malformed_header_reports_the_line() {
        let data = b"ply\nformat ascii 1.0\nelement vertex one\nend_header\n";
        match read_ply(data) {
            Err(Error::PlyParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn integer_coordinates_are_rejected() {
        let data = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty int x\nproperty float y\nproperty float z\nend_header\n0 0 0\n";
        assert!(matches!(
            read_ply(data),
            Err(Error::UnsupportedCoordinateType(_))
        ));
    }

    #[test]
    fn truncated_binary_body_is_detected() {
        let cloud = random_colored_cloud(10, 3);
        let mut bytes = write_ply(&cloud, None, PlyFormat::BinaryLittleEndian).unwrap();
        bytes.truncate(bytes.len() - 5);
        assert!(matches!(read_ply(&bytes), Err(Error::UnexpectedEndOfData)));
    }

    #[test]
    fn truncated_ascii_body_is_detected() {
        let data = b"ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n";
        assert!(matches!(read_ply(data), Err(Error::UnexpectedEndOfData)));
    }

    #[test]
    fn big_endian_fails_loudly() {
        let data = b"ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n";
        match read_ply(data) {
            Err(Error::PlyParse { message, .. }) => {
                assert!(message.contains("binary_big_endian"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_coordinates_are_rejected() {
        let mut data = Vec::new();
        data.extend_from_slice(
            b"ply\nformat binary_little_endian 1.0\nelement vertex 1\n\
              property double x\nproperty double y\nproperty double z\nend_header\n",
        );
        data.extend_from_slice(&f64::NAN.to_le_bytes());
        data.extend_from_slice(&1.0f64.to_le_bytes());
        data.extend_from_slice(&2.0f64.to_le_bytes());
        assert!(matches!(read_ply(&data), Err(Error::PlyParse { .. })));
    }

    #[test]
    fn labels_drive_the_output_colors() {
        let cloud = PointCloud::new(vec![Point3::ORIGIN; 6]);
        let labels = vec![
            PointLabel::Matched,
            PointLabel::UnmatchedReference,
            PointLabel::UnmatchedCurrent,
            PointLabel::Matched,
            PointLabel::UnmatchedCurrent,
            PointLabel::UnmatchedCurrent,
        ];
        let bytes = write_ply(&cloud, Some(&labels), PlyFormat::BinaryLittleEndian).unwrap();
        let back = read_ply(&bytes).unwrap();
        let colors = back.colors.unwrap();
        let count = |c: Rgb| colors.iter().filter(|&&x| x == c).count();
        assert_eq!(count(MATCHED_COLOR), 2);
        assert_eq!(count(UNMATCHED_REFERENCE_COLOR), 1);
        assert_eq!(count(UNMATCHED_CURRENT_COLOR), 3);
    }

    #[test]
    fn colorless_cloud_comes_back_white() {
        let cloud = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0)]);
        let bytes = write_ply(&cloud, None, PlyFormat::Ascii).unwrap();
        let back = read_ply(&bytes).unwrap();
        assert_eq!(back.colors, Some(vec![DEFAULT_COLOR]));
    }

    #[test]
    fn fully_matched_cloud_is_all_gray() {
        let cloud = random_colored_cloud(20, 8);
        let labels = vec![PointLabel::Matched; 20];
        let bytes = write_ply(&cloud, Some(&labels), PlyFormat::BinaryLittleEndian).unwrap();
        let back = read_ply(&bytes).unwrap();
        assert_eq!(back.colors, Some(vec![MATCHED_COLOR; 20]));
    }

    #[test]
    fn reader_accepts_every_writer_combination() {
        let plain = PointCloud::new(vec![Point3::new(0.5, -1.5, 2.5); 4]);
        let colored = random_colored_cloud(4, 7);
        let labels = vec![PointLabel::Matched; 4];
        for format in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            for (cloud, lab) in [
                (&plain, None),
                (&colored, None),
                (&plain, Some(labels.as_slice())),
                (&colored, Some(labels.as_slice())),
            ] {
                let bytes = write_ply(cloud, lab, format).unwrap();
                let back = read_ply(&bytes).unwrap();
                assert_eq!(back.len(), cloud.len());
            }
        }
    }
}
