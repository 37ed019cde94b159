use nvforge::photon::{hom_visibility, hom_visibility_monte_carlo, FilterWindow, PhotonSource};
use nvforge::ple::{
    fit_line_gaussian, simulate_ple_scan, DetuningGrid, EmitterModel, PleScanConfig,
};

fn mean_width(emitter: &EmitterModel) -> f64 {
    let cfg = PleScanConfig {
        detuning: DetuningGrid::centered(400.0, 81),
        n_scans: 50,
        ..PleScanConfig::default()
    };
    (0..20)
        .map(|seed| {
            fit_line_gaussian(&simulate_ple_scan(emitter, &cfg, seed).unwrap())
                .unwrap()
                .fwhm_mhz
        })
        .sum::<f64>()
        / 20.0
}

#[test]
fn fitted_width_grows_with_jumps_and_saturation() {
    let by_sigma: Vec<f64> = [0.0, 20.0, 40.0, 70.0]
        .iter()
        .map(|&s| mean_width(&EmitterModel::new(20.0, s, 1.0)))
        .collect();
    assert!(by_sigma.windows(2).all(|w| w[1] >= w[0]), "{by_sigma:?}");
    let by_saturation: Vec<f64> = [0.0, 1.0, 4.0, 10.0]
        .iter()
        .map(|&s| mean_width(&EmitterModel::new(20.0, 30.0, s)))
        .collect();
    assert!(
        by_saturation.windows(2).all(|w| w[1] >= w[0]),
        "{by_saturation:?}"
    );
}

#[test]
fn closed_form_visibility_matches_monte_carlo_on_grid() {
    let mut worst = 0.0f64;
    for fwhm in [13.3, 40.0, 100.0, 200.0, 500.0] {
        for window_ps in [50.0, 300.0, 1000.0, 3000.0, 10_000.0] {
            let source = PhotonSource::new(12.0, fwhm).unwrap();
            let window = FilterWindow::new(window_ps).unwrap();
            let exact = hom_visibility(&source, &window);
            let mc = hom_visibility_monte_carlo(&source, &window, 200_000, 3);
            worst = worst.max((exact - mc).abs());
        }
    }
    assert!(worst <= 0.02, "{worst}");
}
