//! ASCII OBJ and OFF readers/writers (triangles only).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Mesh, MeshError};

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    let path = path.as_ref();
    let ext = extension(path);
    let reader = BufReader::new(File::open(path)?);
    match ext.as_str() {
        "obj" => read_obj(reader),
        "off" => read_off(reader),
        other => Err(MeshError::UnsupportedFormat(other.to_string())),
    }
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let path = path.as_ref();
    let ext = extension(path);
    let mut w = BufWriter::new(File::create(path)?);
    match ext.as_str() {
        "obj" => write_obj(mesh, &mut w)?,
        "off" => write_off(mesh, &mut w)?,
        other => return Err(MeshError::UnsupportedFormat(other.to_string())),
    }
    w.flush()?;
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64, MeshError> {
    let tok = tok.ok_or_else(|| parse_err(line, "missing coordinate"))?;
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid number {tok:?}")))
}

pub fn read_obj(reader: impl BufRead) -> Result<Mesh, MeshError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(toks.next(), lineno)?;
                let y = parse_f64(toks.next(), lineno)?;
                let z = parse_f64(toks.next(), lineno)?;
                vertices.push([x, y, z]);
            }
            Some("f") => {
                let refs: Vec<&str> = toks.collect();
                if refs.len() != 3 {
                    return Err(parse_err(
                        lineno,
                        format!("non-triangular face ({} vertices)", refs.len()),
                    ));
                }
                let mut face = [0usize; 3];
                for (slot, r) in refs.iter().enumerate() {
                    // "v", "v/vt", "v//vn", "v/vt/vn"
                    let head = r.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("invalid face index {r:?}")))?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        return Err(parse_err(lineno, "face index 0 is invalid in OBJ"));
                    };
                    if resolved < 0 {
                        return Err(parse_err(lineno, format!("face index {idx} out of range")));
                    }
                    face[slot] = resolved as usize;
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    Mesh::new(vertices, faces)
}

pub fn read_off(mut reader: impl Read) -> Result<Mesh, MeshError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (lineno, first) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let mut header: Vec<&str> = first.split_whitespace().collect();
    if header.first() != Some(&"OFF") {
        return Err(parse_err(lineno, "missing OFF header"));
    }
    header.remove(0);
    if header.is_empty() {
        let (_, counts) = lines
            .next()
            .ok_or_else(|| parse_err(lineno, "missing element counts"))?;
        header = counts.split_whitespace().collect();
    }
    let counts: Vec<usize> = header
        .iter()
        .map(|t| t.parse())
        .collect::<Result<_, _>>()
        .map_err(|_| parse_err(lineno, "invalid element counts"))?;
    let (nv, nf) = match counts.as_slice() {
        [nv, nf, ..] => (*nv, *nf),
        _ => return Err(parse_err(lineno, "invalid element counts")),
    };

    let mut vertices = Vec::with_capacity(nv);
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nv {
        let (lineno, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of file in vertex block"))?;
        let mut t = l.split_whitespace();
        let x = parse_f64(t.next(), lineno)?;
        let y = parse_f64(t.next(), lineno)?;
        let z = parse_f64(t.next(), lineno)?;
        vertices.push([x, y, z]);
    }
    for _ in 0..nf {
        let (lineno, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of file in face block"))?;
        let mut t = l.split_whitespace();
        let n: usize = t
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(lineno, "invalid face vertex count"))?;
        if n != 3 {
            return Err(parse_err(lineno, format!("non-triangular face ({n} vertices)")));
        }
        // trailing per-face color values are ignored
        let mut face = [0usize; 3];
        for slot in &mut face {
            *slot = t
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(lineno, "invalid face index"))?;
        }
        faces.push(face);
    }
    Mesh::new(vertices, faces)
}

pub fn write_obj(mesh: &Mesh, w: &mut impl Write) -> std::io::Result<()> {
    for v in mesh.vertices() {
        writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
    }
    for f in mesh.faces() {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

pub fn write_off(mesh: &Mesh, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "OFF")?;
    writeln!(
        w,
        "{} {} {}",
        mesh.vertex_count(),
        mesh.face_count(),
        mesh.edge_count()
    )?;
    for v in mesh.vertices() {
        writeln!(w, "{} {} {}", v[0], v[1], v[2])?;
    }
    for f in mesh.faces() {
        writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
    }
    Ok(())
}
