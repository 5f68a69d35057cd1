use proptest::prelude::*;

use tvflow::case::parse_case;
use tvflow::derivatives::jacobian_at_vector;
use tvflow::interval::{combined_tv, IntervalSolution, LinearTimeInterval};
use tvflow::linalg::DenseMatrix;
use tvflow::norms::{gamma_and_critical, matrix_norm, vector_norm, NormKind};
use tvflow::{build_ybus, Branch, Bus, BusSets, BusType, Case, InjectionTarget, VoltageState};

fn bus(id: usize, bus_type: BusType, p: f64, q: f64, vset: f64) -> Bus {
    Bus {
        id,
        bus_type,
        p_demand: p,
        q_demand: q,
        p_generation: 0.0,
        q_generation: 0.0,
        shunt_conductance: 0.0,
        shunt_susceptance: 0.0,
        v_setpoint: vset,
        v_angle_setpoint: 0.0,
    }
}

prop_compose! {
    fn arb_branch(n: usize)(
        from in 1..=n, to_off in 1..n, r in 0.001..0.1, x in 0.01..0.5, b in 0.0..0.1,
        tap in prop_oneof![Just(1.0), 0.9..1.1], status in prop::bool::weighted(0.9),
    ) -> Branch {
        Branch {
            from_bus: from,
            to_bus: (from - 1 + to_off) % n + 1,
            series_resistance: r,
            series_reactance: x,
            total_charging_susceptance: b,
            tap_ratio: tap,
            phase_shift: 0.0,
            status,
        }
    }
}

fn arb_case() -> impl Strategy<Value = Case> {
    (2usize..8).prop_flat_map(|n| {
        (
            prop::collection::vec((prop::bool::ANY, 0.0..0.5, -0.2..0.2, 0.95..1.05), n),
            prop::collection::vec(arb_branch(n), n - 1..2 * n),
            1.0..500.0,
        )
            .prop_map(move |(specs, mut branches, base)| {
                let buses = specs
                    .into_iter()
                    .enumerate()
                    .map(|(i, (pv, p, q, v))| {
                        let kind = if i == 0 {
                            BusType::Slack
                        } else if pv {
                            BusType::PV
                        } else {
                            BusType::PQ
                        };
                        bus(i + 1, kind, p, q, v)
                    })
                    .collect();
                // a chain keeps every bus connected
                for (k, br) in branches.iter_mut().take(n - 1).enumerate() {
                    br.from_bus = k + 1;
                    br.to_bus = k + 2;
                    br.status = true;
                }
                Case { name: "random".into(), base_mva: base, buses, branches }
            })
    })
}

fn close(a: &DenseMatrix, b: &DenseMatrix, tol: f64) -> bool {
    a.max_abs_diff(b) <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jacobian_is_linear_in_its_argument(
        case in arb_case(),
        seed in prop::collection::vec(-1.5..1.5f64, 32),
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
    ) {
        let ybus = build_ybus(&case).unwrap();
        let sets = BusSets::from_case(&case).unwrap();
        let n2 = 2 * case.bus_count();
        let u: Vec<f64> = seed.iter().take(n2).copied().collect();
        let v: Vec<f64> = seed.iter().rev().take(n2).copied().collect();
        let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let ju = jacobian_at_vector(&u, &ybus, &sets).unwrap();
        let jv = jacobian_at_vector(&v, &ybus, &sets).unwrap();
        let jm = jacobian_at_vector(&mix, &ybus, &sets).unwrap();
        let n = ju.dim();
        let expected = DenseMatrix::from_row_major(
            n,
            n,
            ju.matrix().as_slice().iter().zip(jv.matrix().as_slice()).map(|(x, y)| a * x + b * y).collect(),
        )
        .unwrap();
        let scale = 1.0 + expected.as_slice().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        prop_assert!(close(jm.matrix(), &expected, 1e-11 * scale));
    }

    #[test]
    fn ybus_is_symmetric_without_phase_shifters(case in arb_case()) {
        let y = build_ybus(&case).unwrap();
        prop_assert!(y.is_symmetric(1e-12));
    }

    #[test]
    fn json_round_trip_is_identical(case in arb_case()) {
        let back = Case::from_json(&case.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, case);
    }

    #[test]
    fn per_unit_values_do_not_depend_on_base(
        base in 1.0..1000.0f64,
        pd in 0.0..2.0f64,
        qd in -1.0..1.0f64,
        pg in 0.0..2.0f64,
        bs in -0.5..0.5f64,
    ) {
        let text = |base: f64| format!(
            "mpc.baseMVA = {base};\nmpc.bus = [\n1 3 0 0 0 0 1 1.0 0 0 1 1.1 0.9;\n2 2 {} {} 0 {} 1 1.0 0 0 1 1.1 0.9;\n];\n\
             mpc.gen = [\n1 0 0 100 -100 1.0 100 1;\n2 {} 0 100 -100 1.02 100 1;\n];\n\
             mpc.branch = [\n1 2 0.01 0.1 0.02 0 0 0 0 0 1;\n];\n",
            pd * base, qd * base, bs * base, pg * base
        );
        let a = parse_case(&text(base)).unwrap();
        let b = parse_case(&text(100.0)).unwrap();
        for (x, y) in a.buses.iter().zip(&b.buses) {
            prop_assert!((x.p_demand - y.p_demand).abs() < 1e-12);
            prop_assert!((x.q_demand - y.q_demand).abs() < 1e-12);
            prop_assert!((x.p_generation - y.p_generation).abs() < 1e-12);
            prop_assert!((x.shunt_susceptance - y.shunt_susceptance).abs() < 1e-12);
        }
    }

    #[test]
    fn vector_norms_are_ordered(v in prop::collection::vec(-10.0..10.0f64, 1..40)) {
        let one = vector_norm(&v, NormKind::One).unwrap();
        let two = vector_norm(&v, NormKind::Two).unwrap();
        let inf = vector_norm(&v, NormKind::Inf).unwrap();
        let n = v.len() as f64;
        prop_assert!(inf <= two * (1.0 + 1e-12));
        prop_assert!(two <= one * (1.0 + 1e-12));
        prop_assert!(one <= n * inf * (1.0 + 1e-12));
        prop_assert!(two <= n.sqrt() * inf * (1.0 + 1e-12));
    }

    #[test]
    fn spectral_norm_is_bounded_by_one_and_inf(
        n in 1usize..12,
        data in prop::collection::vec(-5.0..5.0f64, 144),
    ) {
        let m = DenseMatrix::from_row_major(n, n, data[..n * n].to_vec()).unwrap();
        let one = matrix_norm(&m, NormKind::One).unwrap();
        let two = matrix_norm(&m, NormKind::Two).unwrap();
        let inf = matrix_norm(&m, NormKind::Inf).unwrap();
        prop_assert!(two <= (one * inf).sqrt() * (1.0 + 1e-9));
        prop_assert!(two >= inf / (n as f64).sqrt() * (1.0 - 1e-6));
    }

    #[test]
    fn gamma_grows_with_order(rho in 1e-3..1e3f64, x1 in 1e-6..1.0f64, order in 2usize..16) {
        let (gamma, critical) = gamma_and_critical(rho, x1, order);
        prop_assert!(gamma.windows(2).all(|w| w[1] > w[0]));
        match critical {
            Some(d) => {
                prop_assert!(gamma[d - 2] <= 1.0);
                prop_assert!(d == order || gamma[d - 1] > 1.0);
            }
            None => prop_assert!(gamma[0] > 1.0),
        }
    }

    #[test]
    fn combined_function_interpolates_and_mirrors(
        t0 in -5.0..5.0f64,
        length in 0.05..2.0f64,
        data in prop::collection::vec(-1.0..1.0f64, 24),
        frac in 0.0..1.0f64,
    ) {
        let target = InjectionTarget { p: vec![0.0], q: vec![], pv_vsq: vec![] };
        let iv = LinearTimeInterval::new(t0, t0 + length, target.clone(), target).unwrap();
        let x0 = VoltageState::from_stacked(&data[0..6], t0);
        let xe = VoltageState::from_stacked(&data[6..12], t0 + length);
        let sol = IntervalSolution::from_parts(iv, x0, xe, data[12..18].to_vec(), data[18..24].to_vec()).unwrap();
        prop_assert!(combined_tv(&sol, sol.interval.t_start).unwrap().max_abs_diff(&sol.x_start) <= 1e-14);
        prop_assert!(combined_tv(&sol, sol.interval.t_end).unwrap().max_abs_diff(&sol.x_end) <= 1e-14);
        let t = t0 + frac * length;
        let rev = sol.reversed();
        prop_assert!(combined_tv(&sol, t).unwrap().max_abs_diff(&combined_tv(&rev, -t).unwrap()) <= 1e-12);
    }
}
