#[test]
fn cubic_probe() {
    use transverse_core::chart::Chart;
    use transverse_core::courant::{courant_splitting, CourantAlgebroid, CourantOpts};
    use transverse_core::poly::Poly;
    use transverse_core::tensor::parse_tensor;

    let c2 = Chart::submanifold("p", &[], &["x", "y"]).unwrap();
    let a2 = CourantAlgebroid::<f64>::standard(&c2).unwrap();
    let alpha = parse_tensor(&c2, "y*dx - x*dy").unwrap().into_form(1).unwrap();

    // tau for the CONSTANT pi (control): X = x@x + y@y
    let xc = parse_tensor(&c2, "x*@x + y*@y").unwrap().into_vector_field().unwrap();
    let tau_c = a2.exact_section(&xc, &alpha);
    let rc = courant_splitting(&a2, &tau_c, &[vec![0.2, -0.15]], &CourantOpts::default());
    eprintln!("tau constant: {:?}", rc.as_ref().err().map(|e| e.to_string()));

    // tau for the quadratic-factor pi: X = (1+x^2)(x@x+y@y)
    let x3 = parse_tensor(&c2, "x*@x + x^3*@x + y*@y + x^2*y*@y").unwrap().into_vector_field().unwrap();
    let tau3 = a2.exact_section(&x3, &alpha);
    let r3 = courant_splitting(&a2, &tau3, &[vec![0.2, -0.15]], &CourantOpts::default());
    eprintln!("tau cubic: {:?}", r3.as_ref().err().map(|e| e.to_string()));

    let mut opts = CourantOpts::default();
    opts.jet_order = 6;
    let r4 = courant_splitting(&a2, &tau3, &[vec![0.2, -0.15]], &opts);
    eprintln!("tau cubic jet 6: {:?}", r4.as_ref().err().map(|e| e.to_string()));
    panic!("probe");
}
