use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numcore::rng::{self, Rng};
use crate::numcore::Tensor2;

use super::shapes::{normalize, Vec3};

/// Indexed triangle mesh with per-vertex normals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

#[inline]
fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl Mesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.normals.is_empty() && self.normals.len() != self.vertices.len() {
            return Err(Error::dim(
                "mesh",
                format!("{} normals", self.normals.len()),
                format!("{} vertices", self.vertices.len()),
            ));
        }
        let v = self.vertices.len();
        if let Some(t) = self.triangles.iter().find(|t| t.iter().any(|&i| i >= v)) {
            return Err(Error::Data(format!("triangle {t:?} indexes past {v} vertices")));
        }
        Ok(())
    }

    /// Unnormalised face normal `(b − a) × (c − a)`; its length is twice the area.
    pub fn face_cross(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        cross(sub(b, a), sub(c, a))
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        0.5 * dot3(self.face_cross(t), self.face_cross(t)).sqrt()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Signed enclosed volume by the divergence theorem; positive when the
    /// triangles wind counter-clockwise seen from outside.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i]);
                dot3(a, cross(b, c)) / 6.0
            })
            .sum()
    }

    /// Every undirected edge is shared by exactly two triangles, traversed
    /// once in each direction.
    pub fn is_watertight(&self) -> bool {
        let mut count: HashMap<(usize, usize), [u32; 2]> = HashMap::new();
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                count.entry((a.min(b), a.max(b))).or_default()[usize::from(a > b)] += 1;
            }
        }
        !count.is_empty() && count.values().all(|&c| c == [1, 1])
    }

    /// Drops triangles whose area is below `min_area` and vertices no
    /// longer referenced.
    pub fn remove_degenerate(&mut self, min_area: f64) {
        let keep: Vec<[usize; 3]> = (0..self.triangles.len())
            .filter(|&t| {
                let tri = self.triangles[t];
                tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2] && self.triangle_area(t) > min_area
            })
            .map(|t| self.triangles[t])
            .collect();
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut normals = Vec::new();
        let has_normals = !self.normals.is_empty();
        let mut triangles = Vec::with_capacity(keep.len());
        for tri in keep {
            triangles.push(tri.map(|i| {
                if remap[i] == usize::MAX {
                    remap[i] = vertices.len();
                    vertices.push(self.vertices[i]);
                    if has_normals {
                        normals.push(self.normals[i]);
                    }
                }
                remap[i]
            }));
        }
        self.vertices = vertices;
        self.normals = normals;
        self.triangles = triangles;
    }

    pub fn flip(&mut self) {
        for t in &mut self.triangles {
            t.swap(1, 2);
        }
        for n in &mut self.normals {
            *n = n.map(|x| -x);
        }
    }

    /// Area-weighted surface samples with unit normals, deterministic per
    /// seed. Normals interpolate the vertex normals when present and fall
    /// back to the face normal otherwise.
    pub fn sample_surface(&self, n: usize, seed: u64) -> Result<(Tensor2, Tensor2)> {
        if self.is_empty() {
            return Err(Error::EmptyInput("mesh has no triangles"));
        }
        let mut cdf = Vec::with_capacity(self.triangles.len());
        let mut total = 0.0;
        for t in 0..self.triangles.len() {
            total += self.triangle_area(t);
            cdf.push(total);
        }
        if !(total > 0.0) {
            return Err(Error::Data("mesh has zero area".into()));
        }
        let mut r: Rng = rng::seeded(seed);
        let mut pts = Tensor2::zeros(n, 3);
        let mut nrm = Tensor2::zeros(n, 3);
        for s in 0..n {
            let target = rng::uniform(&mut r, 0.0, total);
            let t = cdf.partition_point(|&c| c < target).min(cdf.len() - 1);
            let (u, v) = (rng::uniform(&mut r, 0.0, 1.0), rng::uniform(&mut r, 0.0, 1.0));
            let su = u.sqrt();
            let w = [1.0 - su, su * (1.0 - v), su * v];
            let tri = self.triangles[t];
            let mut p = [0.0; 3];
            let mut nn = [0.0; 3];
            for (c, &i) in tri.iter().enumerate() {
                for a in 0..3 {
                    p[a] += w[c] * self.vertices[i][a];
                    if !self.normals.is_empty() {
                        nn[a] += w[c] * self.normals[i][a];
                    }
                }
            }
            if self.normals.is_empty() || dot3(nn, nn) < 1e-24 {
                nn = self.face_cross(t);
            }
            pts.row_mut(s).copy_from_slice(&p);
            nrm.row_mut(s).copy_from_slice(&normalize(nn));
        }
        Ok((pts, nrm))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tetra() -> Mesh {
        Mesh {
            vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            normals: vec![],
            triangles: vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        }
    }

    #[test]
    fn tetra_volume_and_topology() {
        let m = tetra();
        assert!((m.signed_volume() - 1.0 / 6.0).abs() < 1e-15);
        assert!(m.is_watertight());
        let mut open = m.clone();
        open.triangles.pop();
        assert!(!open.is_watertight());
        let mut flipped = m.clone();
        flipped.flip();
        assert!(flipped.signed_volume() < 0.0);
        // inconsistent winding is not watertight
        let mut bad = m;
        bad.triangles[0].swap(1, 2);
        assert!(!bad.is_watertight());
    }

    #[test]
    fn samples_lie_on_triangle() {
        let m = Mesh {
            vertices: vec![[0.0, 0.0, 0.5], [1.0, 0.0, 0.5], [0.0, 1.0, 0.5]],
            normals: vec![],
            triangles: vec![[0, 1, 2]],
        };
        let (p, n) = m.sample_surface(500, 3).unwrap();
        for (row, nr) in p.iter_rows().zip(n.iter_rows()) {
            assert!((row[2] - 0.5).abs() < 1e-9);
            assert!(row[0] >= -1e-12 && row[1] >= -1e-12 && row[0] + row[1] <= 1.0 + 1e-12);
            assert!((nr[2] - 1.0).abs() < 1e-12);
        }
        assert_eq!(m.sample_surface(500, 3).unwrap().0, p);
    }

    #[test]
    fn area_weighting_three_to_one() {
        // two coplanar triangles with areas 1.5 and 0.5
        let m = Mesh {
            vertices: vec![
                [0.0, 0.0, 0.0],
                [3.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [10.0, 0.0, 0.0],
                [11.0, 0.0, 0.0],
                [10.0, 1.0, 0.0],
            ],
            normals: vec![],
            triangles: vec![[0, 1, 2], [3, 4, 5]],
        };
        let n = 100_000;
        let (p, _) = m.sample_surface(n, 11).unwrap();
        let big = p.iter_rows().filter(|r| r[0] < 5.0).count() as f64 / n as f64;
        assert!((big - 0.75).abs() / 0.75 < 0.05, "{big}");
    }

    #[test]
    fn degenerate_cleanup_reindexes() {
        let mut m = tetra();
        m.vertices.push([2.0, 2.0, 2.0]);
        m.triangles.push([4, 4, 1]);
        m.remove_degenerate(1e-14);
        assert_eq!(m.triangles.len(), 4);
        assert_eq!(m.vertices.len(), 4);
        m.validate().unwrap();
    }

    #[test]
    fn empty_mesh_cannot_be_sampled() {
        assert!(Mesh::default().sample_surface(10, 0).is_err());
    }
}
