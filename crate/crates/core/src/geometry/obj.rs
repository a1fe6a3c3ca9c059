use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::mesh::Mesh;
use super::shapes::Vec3;

/// ASCII OBJ text with `v`, `vn` and 1-based `f` records.
pub fn to_obj_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {:.9} {:.9} {:.9}", v[0], v[1], v[2]);
    }
    for n in &mesh.normals {
        let _ = writeln!(s, "vn {:.9} {:.9} {:.9}", n[0], n[1], n[2]);
    }
    let with_normals = !mesh.normals.is_empty();
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|i| i + 1);
        if with_normals {
            let _ = writeln!(s, "f {a}//{a} {b}//{b} {c}//{c}");
        } else {
            let _ = writeln!(s, "f {a} {b} {c}");
        }
    }
    s
}

pub fn write_obj(path: impl AsRef<Path>, mesh: &Mesh) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_obj_string(mesh)).map_err(|e| Error::io(path, e))
}

pub fn read_obj(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text)
}

fn parse_vec3<'a>(mut it: impl Iterator<Item = &'a str>, line: usize) -> Result<Vec3> {
    let mut out = [0.0; 3];
    for slot in &mut out {
        let tok = it.next().ok_or(Error::Parse {
            line,
            msg: "expected three coordinates".into(),
        })?;
        *slot = tok.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad number {tok:?}"),
        })?;
    }
    Ok(out)
}

/// Parses OBJ text. Faces may use `i`, `i/t`, `i//n` or `i/t/n` forms;
/// polygons are fan-triangulated. Normals are kept only when there is one
/// per vertex.
pub fn parse_obj(text: &str) -> Result<Mesh> {
    let mut mesh = Mesh::default();
    let mut faces: Vec<(usize, Vec<i64>)> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut it = content.split_whitespace();
        match it.next() {
            None => {}
            Some("v") => mesh.vertices.push(parse_vec3(it, line)?),
            Some("vn") => mesh.normals.push(parse_vec3(it, line)?),
            Some("f") => {
                let idx = it
                    .map(|tok| {
                        let first = tok.split('/').next().unwrap_or("");
                        first.parse::<i64>().map_err(|_| Error::Parse {
                            line,
                            msg: format!("bad face index {tok:?}"),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                if idx.len() < 3 {
                    return Err(Error::Parse {
                        line,
                        msg: format!("face needs at least 3 vertices, got {}", idx.len()),
                    });
                }
                faces.push((line, idx));
            }
            Some(_) => {}
        }
    }
    let nv = mesh.vertices.len() as i64;
    for (line, idx) in faces {
        let resolved = idx
            .iter()
            .map(|&i| {
                let r = if i < 0 { nv + i } else { i - 1 };
                if i == 0 || r < 0 || r >= nv {
                    Err(Error::Parse {
                        line,
                        msg: format!("vertex index {i} out of range 1..={nv}"),
                    })
                } else {
                    Ok(r as usize)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        for w in 1..resolved.len() - 1 {
            mesh.triangles.push([resolved[0], resolved[w], resolved[w + 1]]);
        }
    }
    if mesh.normals.len() != mesh.vertices.len() {
        mesh.normals.clear();
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_round_trip() {
        let m = Mesh {
            vertices: vec![[0.1, 0.2, 0.3], [1.0 / 3.0, 0.0, -0.5], [0.0, 1.0, 1e-7]],
            normals: vec![[0.0, 0.0, 1.0]; 3],
            triangles: vec![[0, 1, 2]],
        };
        let back = parse_obj(&to_obj_string(&m)).unwrap();
        assert_eq!(back.triangles, m.triangles);
        for (a, b) in back.vertices.iter().zip(&m.vertices) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-6);
            }
        }
        assert_eq!(back.normals.len(), 3);
    }

    #[test]
    fn empty_mesh_round_trip() {
        let s = to_obj_string(&Mesh::default());
        assert!(s.is_empty());
        assert!(parse_obj(&s).unwrap().is_empty());
    }

    #[test]
    fn malformed_face_reports_line() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\n# comment\nf 1 2 x\n";
        match parse_obj(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
        match parse_obj("v 0 0 0\nf 1 2 3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn quads_are_triangulated() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\n").unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.obj");
        let m = Mesh {
            vertices: vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            normals: vec![],
            triangles: vec![[0, 1, 2]],
        };
        write_obj(&p, &m).unwrap();
        assert_eq!(read_obj(&p).unwrap(), m);
    }
}
