//! AGT1 tensor files and binary PGM/PPM images.
//!
//! ```text
//! cargo run --example image_io
//! ```

use agos::data::{load_agt, load_image, save_agt, save_pnm};
use agos::{Shape, Tensor};

fn main() -> agos::Result<()> {
    let dir = std::env::temp_dir().join("agos-image-io");
    std::fs::create_dir_all(&dir)?;

    let t = Tensor::<f64>::from_f64(Shape::new(1, 2, 3, 1), &[0.0, 0.25, 0.5, 0.75, 1.0, 1.0 / 3.0])?;
    save_agt(dir.join("t.agt"), &t)?;
    let back = load_agt(dir.join("t.agt"))?;
    println!("AGT1 {:?} {} -> equal: {}", back.dtype(), back.shape(), back.cast::<f64>() == t);

    let rgb = Tensor::<f64>::from_f64(
        Shape::new(1, 2, 2, 3),
        &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.5, 0.5, 0.5],
    )?;
    for maxval in [255, 65535] {
        let path = dir.join(format!("rgb{maxval}.ppm"));
        save_pnm(&path, &rgb, maxval)?;
        let img = load_image(&path)?;
        println!("{} -> {} max error {:.2e}", path.display(), img.shape(), img.max_abs_diff(&rgb));
    }
    Ok(())
}
