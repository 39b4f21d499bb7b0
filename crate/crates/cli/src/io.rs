//! File formats: the plain-text mesh format (bit-exact round trip), solution
//! and trajectory CSV exports, and small helpers for report files.
//!
//! Floats are written with Rust's shortest-roundtrip formatting, so reading a
//! file back reproduces the identical bit patterns.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use helmbound_core::geom::{BoundaryTag, Mesh};
use helmbound_core::rays::RayTraceResult;
use helmbound_core::C64;

#[derive(Debug)]
pub enum IoError {
    Io(io::Error),
    Format { line: usize, message: String },
}

impl std::fmt::Display for IoError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IoError::Io(e) => write!(f, "io: {e}"),
            IoError::Format { line, message } => write!(f, "line {line}: {message}"),
        }
    }
}

impl std::error::Error for IoError {}

impl From<io::Error> for IoError {
    fn from(e: io::Error) -> Self {
        IoError::Io(e)
    }
}

fn tag_name(tag: BoundaryTag) -> &'static str {
    match tag {
        BoundaryTag::GammaD => "GammaD",
        BoundaryTag::GammaI => "GammaI",
    }
}

/// Serializes a mesh:
/// header `vertices N triangles M edges K`, then N lines `x y`, M lines
/// `i j k`, K lines `i j tag`.
pub fn mesh_to_string(mesh: &Mesh) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "vertices {} triangles {} edges {}",
        mesh.vertices.len(),
        mesh.triangles.len(),
        mesh.boundary_edges.len()
    );
    for v in &mesh.vertices {
        let _ = writeln!(out, "{} {}", v[0], v[1]);
    }
    for t in &mesh.triangles {
        let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
    }
    for &(a, b, tag) in &mesh.boundary_edges {
        let _ = writeln!(out, "{} {} {}", a, b, tag_name(tag));
    }
    out
}

pub fn mesh_from_str(text: &str) -> Result<Mesh, IoError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or(IoError::Format { line: 1, message: "empty mesh file".into() })?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 6 || parts[0] != "vertices" || parts[2] != "triangles" || parts[4] != "edges"
    {
        return Err(IoError::Format {
            line: 1,
            message: "expected header `vertices N triangles M edges K`".into(),
        });
    }
    let bad_count = |line: usize| IoError::Format { line, message: "bad count".into() };
    let nv: usize = parts[1].parse().map_err(|_| bad_count(1))?;
    let nt: usize = parts[3].parse().map_err(|_| bad_count(1))?;
    let ne: usize = parts[5].parse().map_err(|_| bad_count(1))?;
    let mut vertices = Vec::with_capacity(nv);
    let mut triangles = Vec::with_capacity(nt);
    let mut boundary_edges = Vec::with_capacity(ne);
    for _ in 0..nv {
        let (idx, line) = lines.next().ok_or(IoError::Format {
            line: 0,
            message: "unexpected end of file in vertex block".into(),
        })?;
        let mut it = line.split_whitespace();
        let x: f64 = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or(IoError::Format { line: idx + 1, message: "bad vertex".into() })?;
        let y: f64 = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or(IoError::Format { line: idx + 1, message: "bad vertex".into() })?;
        vertices.push([x, y]);
    }
    for _ in 0..nt {
        let (idx, line) = lines.next().ok_or(IoError::Format {
            line: 0,
            message: "unexpected end of file in triangle block".into(),
        })?;
        let ids: Vec<usize> = line.split_whitespace().filter_map(|s| s.parse().ok()).collect();
        if ids.len() != 3 {
            return Err(IoError::Format { line: idx + 1, message: "bad triangle".into() });
        }
        triangles.push([ids[0], ids[1], ids[2]]);
    }
    for _ in 0..ne {
        let (idx, line) = lines.next().ok_or(IoError::Format {
            line: 0,
            message: "unexpected end of file in edge block".into(),
        })?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(IoError::Format { line: idx + 1, message: "bad boundary edge".into() });
        }
        let a: usize = parts[0]
            .parse()
            .map_err(|_| IoError::Format { line: idx + 1, message: "bad edge index".into() })?;
        let b: usize = parts[1]
            .parse()
            .map_err(|_| IoError::Format { line: idx + 1, message: "bad edge index".into() })?;
        let tag = match parts[2] {
            "GammaD" => BoundaryTag::GammaD,
            "GammaI" => BoundaryTag::GammaI,
            other => {
                return Err(IoError::Format {
                    line: idx + 1,
                    message: format!("unknown boundary tag `{other}`"),
                })
            }
        };
        boundary_edges.push((a, b, tag));
    }
    let mut mesh = Mesh { vertices, triangles, boundary_edges, h_max: 0.0 };
    mesh.h_max = mesh.compute_h_max();
    Ok(mesh)
}

pub fn write_mesh(path: &Path, mesh: &Mesh) -> Result<(), IoError> {
    fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}

pub fn read_mesh(path: &Path) -> Result<Mesh, IoError> {
    mesh_from_str(&fs::read_to_string(path)?)
}

/// Solution export: `vertex_index,x,y,re_u,im_u`.
pub fn solution_csv(mesh: &Mesh, u: &[C64]) -> String {
    let mut out = String::from("vertex_index,x,y,re_u,im_u\n");
    for (i, (v, val)) in mesh.vertices.iter().zip(u).enumerate() {
        let _ = writeln!(out, "{},{},{},{},{}", i, v[0], v[1], val.re, val.im);
    }
    out
}

/// Trajectory export: `ray_id,s,x1,x2[,x3],xi1,xi2[,xi3],null_drift`.
pub fn trajectories_csv<const D: usize>(
    traces: &[(usize, RayTraceResult<D>)],
    n: &helmbound_core::coeff::CoefficientField<D>,
) -> String {
    let mut out = String::from("ray_id,s");
    for d in 0..D {
        let _ = write!(out, ",x{}", d + 1);
    }
    for d in 0..D {
        let _ = write!(out, ",xi{}", d + 1);
    }
    out.push_str(",null_drift\n");
    for (id, trace) in traces {
        for s in &trace.samples {
            let _ = write!(out, "{},{}", id, s.s);
            for d in 0..D {
                let _ = write!(out, ",{}", s.x[d]);
            }
            for d in 0..D {
                let _ = write!(out, ",{}", s.xi[d]);
            }
            let _ = writeln!(out, ",{}", s.null_drift(n));
        }
    }
    out
}
