//! Scratch: scan for kink-certified gradcheck seeds per variant.

use sctx::exp::{find_certified_seed, forward_kink_margin, grad_check_variant, KINK_GUARD};
use sctx::model::ALL_VARIANTS;

fn main() {
    for variant in ALL_VARIANTS {
        let t0 = std::time::Instant::now();
        let mut seeds = Vec::new();
        let mut cursor = 0u64;
        while seeds.len() < 5 {
            let seed = find_certified_seed(variant, cursor, 2_000_000).unwrap();
            seeds.push(seed);
            cursor = seed + 1;
        }
        let scan_t = t0.elapsed().as_secs_f64();
        let t1 = std::time::Instant::now();
        let mut ok = true;
        let mut worst = 0.0f64;
        for &s in &seeds {
            let rep = grad_check_variant(variant, s, 1e-3, 1e-3).unwrap();
            ok &= rep.pass;
            worst = worst.max(rep.max_rel_err);
            if !rep.pass {
                println!("  FAIL {} seed {s}: {rep}", variant.name());
            }
        }
        println!(
            "{:<13} seeds {:?} scan {:.1}s checks {:.1}s pass={} worst={:.2e} margins {:?}",
            variant.name(),
            seeds,
            scan_t,
            t1.elapsed().as_secs_f64(),
            ok,
            worst,
            seeds
                .iter()
                .map(|&s| format!("{:.3}", forward_kink_margin(variant, s).unwrap()))
                .collect::<Vec<_>>()
        );
    }
    let _ = KINK_GUARD;
}
