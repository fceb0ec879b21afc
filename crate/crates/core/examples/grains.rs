//! Multi-grain perception on a single impulse: the footprint of each dilated
//! kernel and the differential maps of a constant image.
//!
//! ```text
//! cargo run --example grains
//! ```

use agos::functional::{conv2d, ConvKernel};
use agos::mgp::{dilation_rate, mgp_forward_values, MgpParams};
use agos::{Shape, Tensor};

fn main() -> agos::Result<()> {
    let size = 13;
    let mut impulse = Tensor::<f64>::zeros(Shape::new(1, size, size, 1));
    impulse.data_mut()[(size / 2) * size + size / 2] = 1.0;
    for t in 1..=3 {
        let r = dilation_rate(t)?;
        let k = ConvKernel::new(Tensor::full(Shape::new(3, 3, 1, 1), 1.0), Tensor::zeros(Shape::vector(1, 1)), r)?;
        let y = conv2d(&impulse, &k)?;
        println!("grain {t}, dilation {r}:");
        for i in 0..size {
            let line: String = (0..size).map(|j| if y.get(0, i, j, 0) != 0.0 { '#' } else { '.' }).collect();
            println!("  {line}");
        }
    }

    // shared 3x3 weights: differences of a constant image vanish away from the border
    let w = Tensor::from_f64(Shape::new(3, 3, 1, 1), &[0.1, -0.2, 0.3, 0.4, 0.5, -0.6, 0.7, 0.8, -0.9])?;
    let b = Tensor::zeros(Shape::vector(1, 1));
    let params = MgpParams {
        base: ConvKernel::identity_1x1(1),
        dilated: (0..=2)
            .map(|t| ConvKernel::new(w.clone(), b.clone(), if t == 0 { 1 } else { 2 * t - 1 }))
            .collect::<agos::Result<_>>()?,
        tie_weights: true,
    };
    let grains = mgp_forward_values(&Tensor::full(Shape::new(1, 15, 15, 1), 1.0), &params)?;
    for (t, g) in grains.features.iter().enumerate().skip(1) {
        println!("|X_d,{t}| middle row: {:.2?}", (0..15).map(|j| g.get(0, 7, j, 0)).collect::<Vec<_>>());
    }
    Ok(())
}
