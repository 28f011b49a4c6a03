use escapepath::model::{builtin_double_well, double_well_mirrored};
use escapepath::sde::{empirical_mpep, exit_statistics, sign_test_p_value, simulate, SimConfig};

#[test]
fn halving_dt_keeps_mean_exit_time() {
    let m = builtin_double_well();
    let coarse = SimConfig::double_well(0.5, 0.0, 4000, 3);
    let mut fine = coarse.clone();
    fine.dt = coarse.dt / 2.0;
    let a = exit_statistics(&simulate(&m, &coarse, None).unwrap()).unwrap();
    let b = exit_statistics(&simulate(&m, &fine, None).unwrap()).unwrap();
    assert_eq!(a.n_no_exit + b.n_no_exit, 0);
    let change = (a.mean_exit_time - b.mean_exit_time).abs() / b.mean_exit_time;
    assert!(change <= 0.1, "{} vs {}", a.mean_exit_time, b.mean_exit_time);
}

#[test]
fn exit_locations_are_symmetric_without_perturbation() {
    let m = builtin_double_well();
    let ens = simulate(&m, &SimConfig::double_well(0.5, 0.0, 500, 21), None).unwrap();
    let x2: Vec<f64> = ens.exits.iter().map(|e| e.exit_location[1]).collect();
    assert!(sign_test_p_value(&x2) > 0.01);
}

fn mean_x2_profile(model: &escapepath::VectorFieldModel, mu: f64) -> f64 {
    let ens = simulate(model, &SimConfig::double_well(0.4, mu, 300, 8), None).unwrap();
    let p = empirical_mpep(&ens, 101).unwrap();
    let x2 = p.component(1);
    x2.iter().sum::<f64>() / x2.len() as f64
}

#[test]
fn mirrored_perturbation_mirrors_the_empirical_path() {
    let a = mean_x2_profile(&builtin_double_well(), 0.4);
    let b = mean_x2_profile(&double_well_mirrored(), 0.4);
    assert!(a < 0.0 && b > 0.0, "{a} {b}");
}

#[test]
fn log_exit_time_scaling_trends_to_barrier() {
    // ε² log E[τ] approaches 2(V(b) − V(a)) = 0.5 from above as ε shrinks
    let m = builtin_double_well();
    let vals: Vec<f64> = [0.6, 0.5, 0.4]
        .iter()
        .map(|&eps| {
            let ens = simulate(&m, &SimConfig::double_well(eps, 0.0, 400, 4), None).unwrap();
            exit_statistics(&ens).unwrap().eps2_log_mean_time
        })
        .collect();
    assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
    assert!(vals.iter().all(|v| *v > 0.5), "{vals:?}");
}
