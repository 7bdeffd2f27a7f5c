fn main() {
    let mut f = |x: f64| (-2.0*x.powi(4)).exp();
    let v = gradgibbs::numeric::adaptive_simpson(&mut f, -5.0, 5.0, 1e-10);
    println!("adaptive = {:.15}, want 1.524381187466", v);
    let mut g = |x: f64| (-2.0*x.powi(4)).exp();
    let v2 = gradgibbs::numeric::adaptive_simpson(&mut g, -5.0, 0.0, 1e-10)
           + gradgibbs::numeric::adaptive_simpson(&mut g, 0.0, 5.0, 1e-10);
    println!("split    = {:.15}", v2);
}
