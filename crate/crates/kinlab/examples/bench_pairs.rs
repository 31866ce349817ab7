use kinlab::functionals::*;
use kinlab::phase::{make_ensemble, InitSpec};
use std::time::Instant;

fn main() {
    let ens = make_ensemble(
        &InitSpec::GaussianCloud {
            center_x: vec![0.0, 0.0],
            center_xi: vec![0.0, 0.0],
            sigma_x: 1.0,
            sigma_xi: 1.0,
            count: 10_000,
            total_mass: 1.0,
        },
        42,
    )
    .unwrap();
    let cone = ConeSpec { apex_angle: 0.3, puncture_speed: 0.2, separation_radius: 5.0 };
    let strategy = PairReduceStrategy::exact();
    // warmup
    let _ = pair_functionals(&ens, &[cone], 5.0, &strategy).unwrap();
    let t0 = Instant::now();
    let f = pair_functionals(&ens, &[cone], 5.0, &strategy).unwrap();
    let dt = t0.elapsed();
    println!("fused pass N=10^4: {:?}  (e_rel={:.6}, gamma={:.6})", dt, f.rel_energy, f.gamma_mass[0]);
}
