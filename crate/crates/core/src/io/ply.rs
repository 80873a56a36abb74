use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, Vector3};

/// Reads an ASCII PLY point cloud. A header line `comment organized R C`
/// marks an organized cloud; `nan` coordinates become invalid points.
pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(text).map_err(|_| {
        Error::UnsupportedFormat(format!("{} is not ASCII (binary PLY?)", path.display()))
    })?;
    parse_ply(&text, &path.display().to_string())
}

struct Header {
    vertex_count: usize,
    properties: Vec<String>,
    organized: Option<(usize, usize)>,
    body_start: usize,
}

fn parse_header(text: &str, ctx: &str) -> Result<Header> {
    let mut lines = text.split_inclusive('\n');
    let mut offset = 0;
    let mut next = |offset: &mut usize| {
        lines.next().map(|l| {
            *offset += l.len();
            l.trim()
        })
    };
    if next(&mut offset) != Some("ply") {
        return Err(Error::parse(ctx, "missing 'ply' magic"));
    }
    let mut vertex_count = None;
    let mut properties = Vec::new();
    let mut organized = None;
    let mut in_vertex = false;
    let mut seen_format = false;
    loop {
        let line = next(&mut offset).ok_or_else(|| Error::parse(ctx, "missing end_header"))?;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                match tok.next() {
                    Some("ascii") => {}
                    Some(f @ ("binary_little_endian" | "binary_big_endian")) => {
                        return Err(Error::UnsupportedFormat(format!("{f} PLY; only ascii is read")))
                    }
                    other => return Err(Error::parse(ctx, format!("unknown format {other:?}"))),
                }
                seen_format = true;
            }
            Some("comment") => {
                if tok.next() == Some("organized") {
                    let dims: Vec<usize> = tok
                        .map(|t| t.parse())
                        .collect::<Result<_, _>>()
                        .map_err(|_| Error::parse(ctx, "bad organized comment"))?;
                    if dims.len() != 2 {
                        return Err(Error::parse(ctx, "organized comment needs rows and cols"));
                    }
                    organized = Some((dims[0], dims[1]));
                }
            }
            Some("obj_info") => {}
            Some("element") => {
                let name = tok.next();
                let count = tok.next().and_then(|c| c.parse::<usize>().ok());
                in_vertex = name == Some("vertex");
                if in_vertex {
                    vertex_count =
                        Some(count.ok_or_else(|| Error::parse(ctx, "bad vertex count"))?);
                }
            }
            Some("property") if in_vertex => {
                let ty = tok.next().ok_or_else(|| Error::parse(ctx, "bad property"))?;
                if ty == "list" {
                    return Err(Error::UnsupportedFormat("list property on vertex".into()));
                }
                let name = tok.next().ok_or_else(|| Error::parse(ctx, "property without name"))?;
                properties.push(name.to_string());
            }
            Some("property") => {}
            Some("end_header") => break,
            Some(other) => return Err(Error::parse(ctx, format!("unexpected header line '{other}'"))),
            None => {}
        }
    }
    if !seen_format {
        return Err(Error::parse(ctx, "missing format line"));
    }
    let vertex_count = vertex_count.ok_or_else(|| Error::parse(ctx, "no vertex element"))?;
    Ok(Header {
        vertex_count,
        properties,
        organized,
        body_start: offset,
    })
}

/// Parses PLY text; `ctx` names the source in error messages.
pub fn parse_ply(text: &str, ctx: &str) -> Result<PointCloud> {
    let header = parse_header(text, ctx)?;
    let col = |name: &str| header.properties.iter().position(|p| p == name);
    let xyz = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => [x, y, z],
        _ => return Err(Error::parse(ctx, "vertex needs x, y, z properties")),
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(x), Some(y), Some(z)) => Some([x, y, z]),
        _ => None,
    };

    let mut points = Vec::with_capacity(header.vertex_count);
    let mut normals = Vec::new();
    let mut rows = text[header.body_start..].lines().filter(|l| !l.trim().is_empty());
    for i in 0..header.vertex_count {
        let line = rows
            .next()
            .ok_or_else(|| Error::parse(ctx, format!("expected {} vertices, found {i}", header.vertex_count)))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| Error::parse(ctx, format!("vertex {i}: non-numeric value")))?;
        if vals.len() != header.properties.len() {
            return Err(Error::parse(
                ctx,
                format!("vertex {i}: expected {} values, got {}", header.properties.len(), vals.len()),
            ));
        }
        points.push(Point3::new(vals[xyz[0]], vals[xyz[1]], vals[xyz[2]]));
        if let Some(nc) = normal_cols {
            normals.push(Vector3::new(vals[nc[0]], vals[nc[1]], vals[nc[2]]));
        }
    }

    let mut cloud = match header.organized {
        Some((r, c)) => {
            if r * c != header.vertex_count {
                return Err(Error::parse(
                    ctx,
                    format!("organized {r}x{c} does not match {} vertices", header.vertex_count),
                ));
            }
            PointCloud::organized(r, c, points)?
        }
        None => PointCloud::from_points(points).map_err(|_| {
            Error::parse(ctx, "non-finite coordinate in unorganized cloud")
        })?,
    };
    if normal_cols.is_some() {
        let normals = normals
            .into_iter()
            .map(|n| if n.iter().all(|v| v.is_finite()) { n } else { Vector3::z() })
            .collect();
        cloud.set_normals(normals)?;
    }
    Ok(cloud)
}

/// ASCII PLY text with 6-decimal coordinates. Invalid organized points are
/// written as `nan`.
pub fn write_ply_string(cloud: &PointCloud) -> String {
    let mut s = String::with_capacity(64 + cloud.len() * 40);
    s.push_str("ply\nformat ascii 1.0\n");
    if let Some(o) = cloud.organization() {
        let _ = writeln!(s, "comment organized {} {}", o.rows, o.cols);
    }
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.normals().is_some() {
        s.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    s.push_str("end_header\n");
    for (i, p) in cloud.points().iter().enumerate() {
        if cloud.is_valid(i) {
            let _ = write!(s, "{:.6} {:.6} {:.6}", p.x, p.y, p.z);
        } else {
            s.push_str("nan nan nan");
        }
        if let Some(ns) = cloud.normals() {
            let n = ns[i];
            let _ = write!(s, " {:.6} {:.6} {:.6}", n.x, n.y, n.z);
        }
        s.push('\n');
    }
    s
}

pub fn write_ply(cloud: &PointCloud, path: &Path) -> Result<()> {
    std::fs::write(path, write_ply_string(cloud)).map_err(|e| Error::io(path, e))
}
