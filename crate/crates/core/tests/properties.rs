mod checks;

use checks::property;

#[test]
fn calibration_gradient_matches_central_differences() {
    println!("{}", property::calibration_gradient().unwrap());
}

#[test]
fn sensing_noise_has_configured_spread() {
    println!("{}", property::sensing_noise_spread().unwrap());
}

#[test]
fn fusion_weights_stay_on_the_simplex() {
    println!("{}", property::fusion_simplex().unwrap());
}

#[test]
fn identical_seeds_give_identical_draws() {
    println!("{}", property::seeded_draws_repeat().unwrap());
}

#[test]
fn risk_is_monotone_and_relief_never_raises_it() {
    println!("{}", property::monotonicity().unwrap());
}

#[test]
fn clipped_quantities_stay_in_bounds() {
    println!("{}", property::clipping_bounds().unwrap());
}
