use lorentz_core::verify::{gate06_clt_endpoint, Scale, DEFAULT_SEED};
fn main() {
    let g = gate06_clt_endpoint(DEFAULT_SEED, Scale::Full).unwrap();
    for (l, v) in &g.details { eprintln!("{l}: {v:.5}"); }
}
