// Tempered Grünwald weights and their sign structure.

use tfde::weights::{check_sign_structure, untempered_weights, TemperedWeights};

pub fn run_example() -> tfde::Result<()> {
    let plain = untempered_weights(1.5, 5)?;
    println!("plain weights, alpha = 1.5: {plain:.5?}");

    for lambda in [0.0, 1.0, 10.0] {
        let w = TemperedWeights::new(1.5, lambda, 1.0 / 64.0, 4096)?;
        let props = check_sign_structure(&w);
        println!(
            "lambda = {lambda:>4}: g0 = {:.6}, g1 = {:.6}, g2 = {:.6}, signs ok = {}, underflowed = {}",
            w.get(0),
            w.get(1),
            w.get(2),
            props.all_hold(),
            props.underflowed
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> tfde::Result<()> {
    run_example()
}
