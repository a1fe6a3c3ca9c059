use std::collections::HashMap;

use crate::error::{Error, Result};

use super::grid::SdfGrid;
use super::mc_tables::{CORNERS, EDGES, TRIANGLES};
use super::mesh::{dot3, Mesh};
use super::shapes::normalize;

/// Triangles smaller than this are removed after extraction.
pub const MIN_TRIANGLE_AREA: f64 = 1e-14;

/// Extracts the `iso` level set of `grid` as a welded triangle mesh.
///
/// A lattice edge is identified by its lower node and its axis, so every
/// crossing produces exactly one vertex shared by all adjacent cubes.
/// Vertex normals interpolate the grid's central-difference gradient and
/// point toward increasing values; triangle winding is made to agree with
/// them. A grid with no crossing yields an empty mesh.
pub fn marching_cubes(grid: &SdfGrid, iso: f64) -> Result<Mesh> {
    if !iso.is_finite() {
        return Err(Error::Numerical(format!("iso value {iso}")));
    }
    if let Some(v) = grid.values().iter().find(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite grid value {v}")));
    }
    let n = grid.res();
    let mut mesh = Mesh::default();
    let mut welded: HashMap<(usize, u8), usize> = HashMap::new();

    for i in 0..n - 1 {
        for j in 0..n - 1 {
            for k in 0..n - 1 {
                let node = |c: usize| [i + CORNERS[c][0], j + CORNERS[c][1], k + CORNERS[c][2]];
                let vals: [f64; 8] = std::array::from_fn(|c| {
                    let p = node(c);
                    grid.at(p[0], p[1], p[2])
                });
                let case = (0..8).fold(0usize, |acc, c| acc | (usize::from(vals[c] < iso) << c));
                if case == 0 || case == 255 {
                    continue;
                }
                let row = &TRIANGLES[case];
                let mut tri = [0usize; 3];
                for (slot, &e) in row.iter().take_while(|&&e| e >= 0).enumerate() {
                    let [ca, cb] = EDGES[e as usize];
                    let (na, nb) = (node(ca), node(cb));
                    let axis = (0..3).find(|&a| na[a] != nb[a]).expect("edge spans one axis");
                    let lower = if na[axis] < nb[axis] { na } else { nb };
                    let key = (grid.index(lower[0], lower[1], lower[2]), axis as u8);
                    let id = *welded.entry(key).or_insert_with(|| {
                        let (va, vb) = (vals[ca], vals[cb]);
                        let t = ((iso - va) / (vb - va)).clamp(0.0, 1.0);
                        let (pa, pb) = (grid.point(na[0], na[1], na[2]), grid.point(nb[0], nb[1], nb[2]));
                        let (ga, gb) = (grid.node_gradient(na), grid.node_gradient(nb));
                        mesh.vertices.push(std::array::from_fn(|a| pa[a] + t * (pb[a] - pa[a])));
                        mesh.normals
                            .push(normalize(std::array::from_fn(|a| ga[a] + t * (gb[a] - ga[a]))));
                        mesh.vertices.len() - 1
                    });
                    tri[slot % 3] = id;
                    if slot % 3 == 2 {
                        mesh.triangles.push(tri);
                    }
                }
            }
        }
    }

    mesh.remove_degenerate(MIN_TRIANGLE_AREA);
    orient(&mut mesh);
    Ok(mesh)
}

/// Flips the whole mesh when its faces mostly disagree with the vertex
/// normals. The table winding is globally consistent, so one vote suffices.
fn orient(mesh: &mut Mesh) {
    let vote: f64 = (0..mesh.triangles.len())
        .map(|t| {
            let avg = mesh.triangles[t]
                .iter()
                .fold([0.0; 3], |acc, &i| std::array::from_fn(|a| acc[a] + mesh.normals[i][a]));
            dot3(mesh.face_cross(t), avg).signum()
        })
        .sum();
    if vote < 0.0 {
        for t in &mut mesh.triangles {
            t.swap(1, 2);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes::{AnalyticShape, ShapeFamily};
    use crate::numcore::rng;

    #[test]
    fn sphere_vertices_within_cell_diagonal() {
        let s = AnalyticShape::sphere(0.5);
        let g = SdfGrid::from_shape(&s, 64).unwrap();
        let m = marching_cubes(&g, 0.0).unwrap();
        let d = g.spacing() * 3f64.sqrt();
        assert!((d - 0.055).abs() < 1e-3);
        for v in &m.vertices {
            let r = dot3(*v, *v).sqrt();
            assert!((r - 0.5).abs() <= d, "{r}");
        }
        assert!(m.is_watertight());
        let vol = m.signed_volume();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 0.125;
        assert!(vol > 0.0 && (vol - exact).abs() / exact < 0.02, "{vol}");
    }

    #[test]
    fn normals_point_outward() {
        let s = AnalyticShape::sphere(0.5);
        let m = marching_cubes(&SdfGrid::from_shape(&s, 32).unwrap(), 0.0).unwrap();
        for (v, n) in m.vertices.iter().zip(&m.normals) {
            assert!(dot3(normalize(*v), *n) > 0.99);
        }
        for t in 0..m.triangles.len() {
            let c = m.triangles[t]
                .iter()
                .fold([0.0; 3], |acc, &i| std::array::from_fn(|a| acc[a] + m.vertices[i][a]));
            assert!(dot3(m.face_cross(t), c) > 0.0);
        }
    }

    #[test]
    fn families_extract_closed_outward_meshes() {
        let mut r = rng::seeded(4);
        for fam in ShapeFamily::ALL {
            let s = fam.sample(&mut r);
            let m = marching_cubes(&SdfGrid::from_shape(&s, 40).unwrap(), 0.0).unwrap();
            assert!(m.is_watertight(), "{fam:?}");
            assert!(m.signed_volume() > 0.0, "{fam:?}");
        }
    }

    #[test]
    fn constant_grid_is_empty() {
        let g = SdfGrid::from_fn(8, -1.0, 1.0, |_| 1.0).unwrap();
        assert!(marching_cubes(&g, 0.0).unwrap().is_empty());
        let g = SdfGrid::from_fn(8, -1.0, 1.0, |_| -1.0).unwrap();
        assert!(marching_cubes(&g, 0.0).unwrap().is_empty());
    }

    #[test]
    fn single_corner_case() {
        let mut vals = vec![1.0; 8];
        vals[0] = -1.0;
        let g = SdfGrid::new(2, 0.0, 1.0, vals).unwrap();
        let m = marching_cubes(&g, 0.0).unwrap();
        assert_eq!(m.triangles.len(), 1);
        assert_eq!(m.vertices.len(), 3);
        for v in &m.vertices {
            assert!((v.iter().sum::<f64>() - 0.5).abs() < 1e-12);
        }
    }
}
