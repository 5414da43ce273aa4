mod common;

use common::small_scene;
use fpm::epie::{run_epie, EpieConfig};
use fpm::io::{read_dataset, write_dataset};
use fpm::metrics::passband_metrics;
use fpm::model::{remove_gauge, spectrum_to_field, Gauge};
use fpm::pgnn::{run_pgnn, PgnnConfig};
use proptest::prelude::*;

#[test]
fn reconstruction_from_disk_matches_in_memory() {
    let scene = small_scene(0.0);
    let mut ds = scene.dataset.clone();
    for img in &mut ds.images {
        for v in img.as_mut_slice() {
            *v = *v as f32 as f64;
        }
    }
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ds, dir.path()).unwrap();
    let loaded = read_dataset(dir.path()).unwrap();
    let cfg = PgnnConfig {
        stages: 2,
        epochs_per_stage: 2,
        ..PgnnConfig::default()
    };
    let a = run_pgnn(&ds, &cfg).unwrap();
    let b = run_pgnn(&loaded, &cfg).unwrap();
    assert_eq!(a.object, b.object);
    assert_eq!(a.loss_history, b.loss_history);
}

#[test]
fn both_engines_recover_a_defocused_object() {
    let scene = small_scene(30.0);
    let init = {
        let (s, c) = scene.model.initial_estimate(&scene.dataset).unwrap();
        scene.model.dataset_loss(&s, &c, &scene.dataset).unwrap()
    };
    let p = run_pgnn(&scene.dataset, &PgnnConfig::default()).unwrap();
    let e = run_epie(&scene.dataset, &EpieConfig::default()).unwrap();
    for (name, object, spectrum, pupil) in [
        ("pgnn", &p.object, &p.state.object_spectrum, &p.pupil),
        ("epie", &e.object, &e.state.object_spectrum, &e.pupil),
    ] {
        let loss = scene.model.dataset_loss(spectrum, pupil, &scene.dataset).unwrap();
        let m = passband_metrics(object, &scene.truth.object_spatial, &scene.model).unwrap();
        assert!(loss < 5e-2 * init, "{name}: loss ratio {}", loss / init);
        assert!(m.rel_err_amp < 0.1, "{name}: {m:?}");
    }
    // positive defocus shows up as negative defocus coefficient
    assert!(p.zernike_coeffs[3] < -0.1, "{:?}", p.zernike_coeffs);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gauge_moves_leave_every_capture_unchanged(
        scale in 0.2f64..5.0,
        ramp_row in -0.3f64..0.3,
        ramp_col in -0.3f64..0.3,
    ) {
        let scene = small_scene(15.0);
        let mut spectrum = scene.truth.spectrum();
        let mut pupil = scene.truth.pupil.clone();
        remove_gauge(&mut spectrum, &mut pupil, &Gauge { scale, ramp_row, ramp_col });
        for n in 0..scene.model.len() {
            let moved = spectrum_to_field(&scene.model.exit_spectrum(&spectrum, &pupil, n).unwrap());
            let peak = scene.dataset.images[n].min_max().1.max(1e-300);
            for (z, &i) in moved.iter().zip(scene.dataset.images[n].iter()) {
                prop_assert!((z.norm_sqr() - i).abs() <= 1e-10 * peak);
            }
        }
    }
}
