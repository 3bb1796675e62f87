use proptest::prelude::*;

use ssb_erasure::config::ExperimentKind;
use ssb_erasure::estimators::{
    jc_from_temperature, mean_mz_series, success_rate, switching_time, temperature_from_jc, total_variation,
    tv_noise_sigma, MagnetizationHistogram, SwitchConvention,
};
use ssb_erasure::glauber::{BathParameters, GlauberEngine, ReplicaTrajectory};
use ssb_erasure::lattice::{Boundary, LatticeGeometry, SpinConfiguration};
use ssb_erasure::runner::prepare_initial_ensemble;
use ssb_erasure::schedule::classical_preset;
use ssb_erasure::thermo::{erasure_action, total_work, PathWork, WorkMode};

fn config_strategy(n: usize) -> impl Strategy<Value = SpinConfiguration> {
    prop::collection::vec(prop::bool::ANY, n)
        .prop_map(|v| SpinConfiguration::new(v.into_iter().map(|b| if b { 1 } else { -1 }).collect()).unwrap())
}

fn ensemble_strategy(n: usize, times: usize) -> impl Strategy<Value = Vec<ReplicaTrajectory>> {
    prop::collection::vec(prop::collection::vec(config_strategy(n), times), 1..12).prop_map(move |reps| {
        reps.into_iter()
            .enumerate()
            .map(|(i, snapshots)| ReplicaTrajectory {
                seed: i as u64,
                times: (0..times).map(|k| k as f64).collect(),
                snapshots,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn histogram_is_normalized(configs in prop::collection::vec(config_strategy(9), 1..40)) {
        let h = MagnetizationHistogram::from_configs(0.0, &configs).unwrap();
        let total: f64 = h.probabilities().iter().map(|p| p.1).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let direct = configs.iter().map(|c| c.sum_z() as f64 / 9.0).sum::<f64>() / configs.len() as f64;
        prop_assert!((h.mean_mz() - direct).abs() < 1e-12);
        prop_assert!(h.probabilities().iter().all(|&(m, _)| (-1.0..=1.0).contains(&m)));
    }

    #[test]
    fn total_variation_is_a_bounded_symmetric_distance(
        a in prop::collection::vec(config_strategy(6), 1..30),
        b in prop::collection::vec(config_strategy(6), 1..30),
    ) {
        let ha = MagnetizationHistogram::from_configs(0.0, &a).unwrap();
        let hb = MagnetizationHistogram::from_configs(0.0, &b).unwrap();
        let d = total_variation(&ha, &hb).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
        prop_assert!((d - total_variation(&hb, &ha).unwrap()).abs() < 1e-12);
        prop_assert_eq!(total_variation(&ha, &ha).unwrap(), 0.0);
        prop_assert!(tv_noise_sigma(&ha, &hb) >= 0.0);
        // mirroring both sides preserves the distance
        let dm = total_variation(&ha.mirrored(), &hb.mirrored()).unwrap();
        prop_assert!((d - dm).abs() < 1e-12);
    }

    #[test]
    fn success_rate_bounds(configs in prop::collection::vec(config_strategy(8), 1..40), delta in 0.05f64..1.0) {
        let h = MagnetizationHistogram::from_configs(0.0, &configs).unwrap();
        let r = success_rate(&h, delta).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.qubit_fraction));
        prop_assert!((0.0..=1.0).contains(&r.replica_fraction));
    }

    #[test]
    fn switching_time_ignores_replica_order(ens in ensemble_strategy(5, 8), delta in 0.1f64..0.9, rot in 0usize..12) {
        let members: Vec<usize> = (0..ens.len()).collect();
        let mut shuffled = ens.clone();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        for conv in [SwitchConvention::Crossing, SwitchConvention::FromOnset(1.0)] {
            let a = switching_time(&mean_mz_series(&ens, &members).unwrap(), delta, conv).unwrap();
            let b = switching_time(&mean_mz_series(&shuffled, &members).unwrap(), delta, conv).unwrap();
            match (a.value(), b.value()) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn ledger_identity(
        w_z in -1e-15f64..1e-15,
        w_zz in -1e-15f64..1e-15,
        delta_w in 0.0f64..1e-15,
        u_f in -1e-15f64..1e-15,
        se in 0.0f64..1e-17,
    ) {
        let pw = PathWork { w_z, w_zz, stderr_w_z: se, stderr_w_zz: se };
        let coop = total_work(&pw, delta_w, Some((u_f, se)), WorkMode::Cooperative).unwrap();
        prop_assert!((coop.w_exp - (w_z + w_zz - u_f)).abs() <= 1e-30 + 1e-12 * (w_z.abs() + w_zz.abs() + u_f.abs()));
        let (lo, hi) = coop.interval();
        prop_assert!((hi - lo - 2.0 * delta_w).abs() <= 1e-12 * (hi.abs() + lo.abs()) + 1e-30);
        let cyc = total_work(&pw, delta_w, None, WorkMode::Cycle).unwrap();
        prop_assert!(cyc.u_f.is_none());
        prop_assert!((cyc.w_exp - (w_z + w_zz)).abs() <= 1e-30 + 1e-12 * (w_z.abs() + w_zz.abs()));
    }

    #[test]
    fn erasure_action_arithmetic(w in 0.0f64..1e-16, t in 0.0f64..100.0, r in 0.0f64..=1.0) {
        let e = erasure_action(w, t, r).unwrap();
        prop_assert!((e.action_a - w * t * 1e-6).abs() <= 1e-12 * e.action_a.abs() + 1e-40);
        prop_assert!((e.action_a_star - e.action_a * (1.0 - r)).abs() <= 1e-12 * e.action_a.abs() + 1e-40);
        prop_assert!(e.action_a_star <= e.action_a);
    }

    #[test]
    fn temperature_formula_inverts(t_mk in 1.0f64..500.0) {
        let (back, _) = temperature_from_jc(jc_from_temperature(t_mk), 0.0).unwrap();
        prop_assert!((back - t_mk).abs() < 1e-9 * t_mk);
    }

    #[test]
    fn even_combinations_are_mirror_symmetric(sources in prop::collection::vec(config_strategy(7), 1..10)) {
        let n = 2 * sources.len();
        for kind in [ExperimentKind::ClassicalBit, ExperimentKind::QuantumBit] {
            let e = prepare_initial_ensemble(kind, n, 7, Some(&sources), 0).unwrap();
            let h = MagnetizationHistogram::from_configs(0.0, &e).unwrap();
            prop_assert_eq!(&h, &h.mirrored());
            for i in 0..n / 2 {
                prop_assert_eq!(&e[2 * i], &e[2 * i + 1].inverted());
            }
        }
    }
}

#[test]
fn seed_isolation() {
    let g = LatticeGeometry::new(4, 4, Boundary::Open).unwrap();
    let path = classical_preset(20.0).unwrap();
    let engine = GlauberEngine::new(&g);
    let initials: Vec<SpinConfiguration> = (0..6).map(|_| SpinConfiguration::all_down(16)).collect();
    let seeds: Vec<u64> = (100..106).collect();
    let bath = BathParameters::default();
    let a = engine.run_ensemble(&initials, &path, &bath, &seeds).unwrap();
    let mut changed = seeds.clone();
    changed[3] = 999;
    let b = engine.run_ensemble(&initials, &path, &bath, &changed).unwrap();
    for i in 0..6 {
        if i == 3 {
            assert_ne!(a[i].snapshots, b[i].snapshots);
        } else {
            assert_eq!(a[i], b[i], "replica {i} changed");
        }
    }
}
