//! Scores an offset and a rescaled sphere against the ground truth.
//!
//! `cargo run --release --example metrics`

use kanrecon::geometry::{AnalyticShape, SdfGrid};
use kanrecon::metrics::{evaluate_instance, EvalConfig, Prediction};
use kanrecon::pipeline::extract;

fn main() -> kanrecon::Result<()> {
    let gt = AnalyticShape::sphere(0.5);
    let cfg = EvalConfig {
        samples: 4000,
        grid_res: 48,
        ..EvalConfig::default()
    };
    let cases = [
        ("identical", gt),
        ("shifted 0.05", gt.with_pose([0.05, 0.0, 0.0], 1.0)),
        ("scaled 1.2", gt.with_pose([0.0; 3], 1.2)),
        ("scaled 0.6", gt.with_pose([0.0; 3], 0.6)),
    ];
    println!(
        "{:14} {:>9} {:>8} {:>7} {:>7} {:>7}",
        "case", "CD", "F", "NC", "IoU", "PSNR"
    );
    for (name, shape) in cases {
        let sdf_grid = SdfGrid::from_shape(&shape, cfg.grid_res)?;
        let mesh = extract(&sdf_grid)?;
        let m = evaluate_instance(&Prediction { mesh, sdf_grid }, &gt, &cfg)?;
        println!(
            "{name:14} {:9.4} {:8.2} {:7.4} {:7.4} {:7.2}",
            m.cd, m.fscore, m.nc, m.iou, m.psnr_sdf
        );
    }
    Ok(())
}
