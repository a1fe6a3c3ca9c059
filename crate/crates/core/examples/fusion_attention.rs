//! Category-weighted attention over prior tokens as the weighting grows.
//!
//! `cargo run --example fusion_attention`

use kanrecon::fusion::MultiHeadFusion;
use kanrecon::numcore::{rng, Tensor2};

fn main() -> kanrecon::Result<()> {
    let (d_img, cats, d_p, d_model, d_geo, heads) = (6, 3, 5, 8, 4, 2);
    let mut r = rng::stream(3, &[0]);
    let tokens = rng::normal_tensor(&mut r, cats, d_p, 1.0);
    let token_cats = [0, 1, 2];
    let f_img = rng::normal_tensor(&mut r, 1, d_img, 1.0);
    for alpha in [1.0, std::f64::consts::E, 10.0, 100.0] {
        let mut f = MultiHeadFusion::init(
            d_img,
            cats,
            d_p,
            d_model,
            d_geo,
            heads,
            alpha,
            &mut rng::stream(3, &[1]),
        )?;
        let q = kanrecon::fusion::query_input(&f_img, &[1], cats)?;
        let out = f.forward(&q, &[1], &tokens, &token_cats)?;
        let w: &[Tensor2] = f.attention().expect("cached");
        let head0: Vec<String> = w[0].row(0).iter().map(|v| format!("{v:.4}")).collect();
        println!(
            "alpha {alpha:7.3}  head0 weights [{}]  out[0] {:+.5}",
            head0.join(", "),
            out.get(0, 0)
        );
    }
    Ok(())
}
