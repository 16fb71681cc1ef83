use proptest::prelude::*;

use zeno_core::config::{ProtocolConfig, RunConfig, parse_config};
use zeno_core::grid::{Grid, gaussian_state};
use zeno_core::measurement::{MeasurementWindow, Projector, project};
use zeno_core::output::{Provenance, read_points_csv, write_scan_csv};
use zeno_core::potentials::Well;
use zeno_core::propagator::{Propagator, StepControl};
use zeno_core::protocols::{EnsembleSpec, ScanPoint, ScanResult, ZenoScan};
use zeno_core::units::KAPPA_RB87;

fn grid() -> Grid {
    Grid::new(-4.0, 4.0, 512).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn free_flight_is_unitary(sigma in 0.05f64..0.4, k0 in -60.0f64..60.0, t in 0.0f64..40.0) {
        let mut psi = gaussian_state(&grid(), 0.0, sigma, k0).unwrap();
        Propagator::new(grid(), KAPPA_RB87).unwrap().evolve_free(&mut psi, t, &StepControl::default()).unwrap();
        prop_assert!((psi.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn trap_evolution_is_unitary(x0 in -0.2f64..0.2, k0 in -40.0f64..40.0, t in 0.0f64..1.5) {
        let mut psi = gaussian_state(&grid(), x0, 0.05, k0).unwrap();
        Propagator::new(grid(), KAPPA_RB87)
            .unwrap()
            .evolve_static(&mut psi, &Well::gaussian(301.2, 1.1, 0.0), t, &StepControl::default())
            .unwrap();
        prop_assert!((psi.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn hard_projection_is_idempotent(x0 in -1.5f64..1.5, radius in 0.2f64..1.5) {
        let psi = gaussian_state(&grid(), x0, 0.3, 5.0).unwrap();
        let proj = Projector::new(&grid(), &MeasurementWindow::hard(0.0, radius), None).unwrap();
        let (once, p1) = project(&psi, &proj).unwrap();
        prop_assume!(p1 > 1e-6);
        let (twice, p2) = project(&once, &proj).unwrap();
        prop_assert!((p2 - 1.0).abs() < 1e-12);
        prop_assert!(once.distance(&twice).unwrap() < 1e-12);
    }

    #[test]
    fn config_round_trips(seed in any::<u64>(), samples in 1usize..4096, n in proptest::collection::vec(1usize..100, 1..6)) {
        let mut cfg = RunConfig::minimal(ProtocolConfig::Zeno(ZenoScan { n_list: n, ..Default::default() }));
        cfg.ensemble = EnsembleSpec { n_samples: samples, rng_seed: seed, ..Default::default() };
        let back = parse_config(&cfg.to_json()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn scan_csv_round_trips(vals in proptest::collection::vec((0.0f64..100.0, 0.0f64..1.0, 0.0f64..0.1), 1..20)) {
        let sr = ScanResult {
            protocol: "zeno".into(),
            axis: "N".into(),
            series: "s".into(),
            points: vals.iter().map(|&(param, loss_prob, stderr)| ScanPoint { param, loss_prob, stderr, mean_final_x: -param }).collect(),
        };
        let cfg = RunConfig::minimal(ProtocolConfig::Zeno(ZenoScan::default()));
        let mut buf = Vec::new();
        write_scan_csv(&sr, &Provenance::of(&cfg), &mut buf).unwrap();
        prop_assert_eq!(read_points_csv(buf.as_slice()).unwrap(), sr.data_points());
    }

    #[test]
    fn thermal_draws_are_seeded(seed in any::<u64>()) {
        let ens = EnsembleSpec { n_samples: 16, rng_seed: seed, ..Default::default() };
        let a = ens.wavevectors(KAPPA_RB87).unwrap();
        prop_assert_eq!(&a, &ens.wavevectors(KAPPA_RB87).unwrap());
        let other = EnsembleSpec { rng_seed: seed.wrapping_add(1), ..ens };
        prop_assert_ne!(a, other.wavevectors(KAPPA_RB87).unwrap());
    }
}
