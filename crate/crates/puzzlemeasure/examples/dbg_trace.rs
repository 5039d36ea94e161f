use puzzlemeasure::complex::cx;
use puzzlemeasure::dynamics::UnicriticalMap;
use puzzlemeasure::potential::PotentialField;
use puzzlemeasure::ray::equipotential;

fn main() {
    let f = UnicriticalMap::quadratic(cx(-2.0, 0.0));
    let field = PotentialField::new(f);
    for g0 in [1e-3, 1e-4] {
        match equipotential(&field, g0, 128) {
            Ok(poly) => {
                let max_im = poly.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
                let bad = poly.iter().filter(|z| (field.green(**z).value - g0).abs() > 0.05 * g0).count();
                println!("g0={g0:.0e}: ok, max|im|={max_im:.3e}, off-curve {bad}");
            }
            Err(e) => println!("g0={g0:.0e}: ERR {e}"),
        }
    }
}
