use bdfluid::flow::{big_h_direct, GTable};
use bdfluid::model::{ModelAnalysis, ModelSpec, Regulation};
use std::time::Instant;

fn main() {
    let m = ModelSpec::new(2.0, 1.0, 1e4, 0.0, Regulation::Ricker { a: 1.0 }).unwrap();
    let t0 = Instant::now();
    let a = ModelAnalysis::analyze(&m).unwrap();
    println!("ricker analyze: {:?} x_inf={}", t0.elapsed(), a.x_inf());
    let t0 = Instant::now();
    let t = GTable::build(&a).unwrap();
    println!("ricker build: {:?}", t0.elapsed());
    for x in [0.01, 0.2, 0.5, 0.9 * a.x_inf()] {
        let t0 = Instant::now();
        let d = big_h_direct(&m, a.x_inf(), x, 1e-12).unwrap();
        println!("direct H({x}) = {d}: {:?}", t0.elapsed());
        let t0 = Instant::now();
        let h = t.big_h(x).unwrap();
        println!("table  H({x}) = {h}: {:?}", t0.elapsed());
    }
}
