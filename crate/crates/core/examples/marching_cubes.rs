//! Extracts a sphere with marching cubes and writes it as OBJ.
//!
//! `cargo run --release --example marching_cubes -- [res] [out.obj]`

use kanrecon::geometry::{marching_cubes, write_obj, AnalyticShape, SdfGrid};

fn main() -> kanrecon::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let res = args.get(1).map_or(Ok(64), |s| s.parse()).expect("res");
    let out = args.get(2).cloned().unwrap_or_else(|| "sphere.obj".into());
    let grid = SdfGrid::from_shape(&AnalyticShape::sphere(0.5), res)?;
    let mesh = marching_cubes(&grid, 0.0)?;
    let worst = mesh
        .vertices
        .iter()
        .map(|v| ((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() - 0.5).abs())
        .fold(0.0, f64::max);
    println!("{} vertices, {} triangles", mesh.vertices.len(), mesh.triangles.len());
    println!("watertight {}", mesh.is_watertight());
    println!("area {:.5} (exact {:.5})", mesh.area(), std::f64::consts::PI);
    println!(
        "volume {:.5} (exact {:.5})",
        mesh.signed_volume(),
        std::f64::consts::PI / 6.0
    );
    println!(
        "max radial error {worst:.2e}, cell diagonal {:.2e}",
        grid.spacing() * 3f64.sqrt()
    );
    write_obj(&out, &mesh)?;
    println!("wrote {out}");
    Ok(())
}
