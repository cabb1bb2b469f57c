use aelfit::inference::{effective_sample_size_of, log_prior, run_chain, AnalyticTarget, ChainConfig, PriorEntry, PriorSpec, Proposal};
use aelfit::models::{
    cell_voltage, hto_transfer_steady_state, simulate_hto, CurveOptions, HtoInit, HtoParams, InputSchedule, Interpolation,
    OperatingPoint, PlantConstants, PolarizationParams, ScheduleInputs,
};
use aelfit::ode::{integrate, IntegratorConfig, OdeProblem};
use aelfit::surrogate::{build_surrogate, eval_surrogate, total_degree_indices, Bounds, GridSpec};
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 24,
        ..ProptestConfig::default()
    }
}

/// Monomial polynomial with one coefficient per total-degree index.
fn poly(indices: &[Vec<u32>], coef: &[f64], m: &[f64]) -> f64 {
    indices
        .iter()
        .zip(coef)
        .map(|(a, c)| c * a.iter().zip(m).map(|(&e, x)| x.powi(e as i32)).product::<f64>())
        .sum()
}

fn gaussian_2d(bounds: Bounds, centre: [f64; 2]) -> AnalyticTarget<impl Fn(&[f64]) -> f64 + Sync, impl Fn(&[f64]) -> Vec<f64> + Sync> {
    AnalyticTarget {
        bounds,
        log_density: move |m: &[f64]| -0.5 * ((m[0] - centre[0]).powi(2) + (m[1] - centre[1]).powi(2)),
        grad: move |m: &[f64]| vec![centre[0] - m[0], centre[1] - m[1]],
    }
}

fn two_level(i_hi: f64, i_lo: f64, p: f64, period: f64, n: usize) -> InputSchedule {
    let times = (0..n).map(|k| k as f64 * period).collect();
    let values = (0..n)
        .map(|k| ScheduleInputs {
            i_cell: if k % 2 == 0 { i_hi } else { i_lo },
            pressure: p,
            t_c_in: 293.15,
            temperature: 353.15,
        })
        .collect();
    InputSchedule::new(times, values, n as f64 * period, Interpolation::Hold).unwrap()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn surrogate_reproduces_polynomials(
        d in 1usize..=3,
        order in 0usize..=3,
        raw in prop::collection::vec(-2.0f64..2.0, 20),
        lo in prop::collection::vec(-3.0f64..0.0, 3),
        width in prop::collection::vec(0.5f64..4.0, 3),
    ) {
        let indices = total_degree_indices(d, order);
        let coef: Vec<f64> = raw.iter().cycle().take(indices.len()).copied().collect();
        let lo = lo[..d].to_vec();
        let hi: Vec<f64> = lo.iter().zip(&width).map(|(l, w)| l + w).collect();
        let bounds = Bounds::new(lo.clone(), hi.clone()).unwrap();
        let f = |m: &[f64]| Ok(vec![poly(&indices, &coef, m)]);
        let (model, _) = build_surrogate(&f, &bounds, GridSpec { level: order }, vec!["y".into()]).unwrap();
        let scale = coef.iter().map(|c| c.abs()).sum::<f64>().max(1.0) * 4f64.powi(order as i32);
        for k in 0..10 {
            let m: Vec<f64> = (0..d).map(|j| lo[j] + (hi[j] - lo[j]) * (((k * 7 + j * 3) % 11) as f64 / 10.0)).collect();
            let got = eval_surrogate(&model, &m).unwrap()[0];
            let want = poly(&indices, &coef, &m);
            prop_assert!((got - want).abs() <= 1e-10 * scale, "{got} vs {want} at {m:?}");
        }
    }

    #[test]
    fn chain_holds_on_reject_and_stays_in_box(
        seed in any::<u64>(),
        c0 in -0.5f64..0.5,
        c1 in -0.5f64..0.5,
        random_walk in any::<bool>(),
    ) {
        let bounds = Bounds::new(vec![-1.5, -1.0], vec![1.0, 2.0]).unwrap();
        let target = gaussian_2d(bounds.clone(), [c0, c1]);
        let cfg = ChainConfig {
            n_steps: 2000,
            epsilon: 0.6,
            proposal: if random_walk { Proposal::RandomWalk } else { Proposal::Mala },
            seed,
            ..ChainConfig::default()
        };
        let res = run_chain(&target, &cfg).unwrap();
        prop_assert!(res.samples.iter().all(|s| bounds.contains(s)));
        prop_assert!(res.accepted.iter().any(|a| !a));
        for k in 1..res.samples.len() {
            if !res.accepted[k] {
                prop_assert_eq!(&res.samples[k], &res.samples[k - 1]);
                prop_assert_eq!(res.log_post_trace[k], res.log_post_trace[k - 1]);
            }
        }
        let again = run_chain(&target, &cfg).unwrap();
        prop_assert_eq!(res.samples, again.samples);
    }

    #[test]
    fn zero_current_gives_reversible_voltage(
        r1 in 1e-5f64..5e-4,
        r2 in -1e-6f64..0.0,
        r3 in 0.0f64..2e-6,
        s in 0.05f64..0.4,
        t1 in 0.001f64..0.01,
        t2 in 0.5f64..5.0,
        t3 in -50.0f64..50.0,
        temp in 290.0f64..370.0,
        pres in 1.0f64..32.0,
    ) {
        let p = PolarizationParams { r1, r2, r3, s, t1, t2, t3 };
        let opts = CurveOptions::from(&PlantConstants::default());
        let u = cell_voltage(&p, &OperatingPoint::new(0.0, temp, pres), &opts).unwrap();
        prop_assert_eq!(u, opts.u_rev);
    }

    #[test]
    fn ode_solution_is_linear_in_the_initial_state(
        a in -0.5f64..0.0,
        b in -0.3f64..0.3,
        y0 in prop::collection::vec(-2.0f64..2.0, 2),
        z0 in prop::collection::vec(-2.0f64..2.0, 2),
        alpha in -3.0f64..3.0,
    ) {
        let rhs = move |_t: f64, y: &[f64], dy: &mut [f64], _p: f64| {
            dy[0] = a * y[0] + b * y[1];
            dy[1] = -b * y[0] + a * y[1];
        };
        let grid = [0.0, 1.0, 5.0];
        let cfg = IntegratorConfig::rk4(0.01);
        let run = |y: Vec<f64>| integrate(&OdeProblem::new(rhs, (0.0, 5.0), y), &cfg, &grid).unwrap();
        let combo: Vec<f64> = y0.iter().zip(&z0).map(|(y, z)| y + alpha * z).collect();
        let (ry, rz, rc) = (run(y0.clone()), run(z0.clone()), run(combo));
        for k in 0..grid.len() {
            for j in 0..2 {
                let want = ry[k][j] + alpha * rz[k][j];
                prop_assert!((rc[k][j] - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn hto_inventories_stay_non_negative(
        s_h2 in 0.5e-4f64..2e-4,
        v_an in 3.0f64..15.0,
        v_lye in 2.0f64..10.0,
        i_hi in 2000.0f64..5000.0,
        i_lo in 0.0f64..1000.0,
        p in 2.0f64..32.0,
    ) {
        let hp = HtoParams { s_h2, v_an_lye: v_an, v_lye };
        let c = PlantConstants::default();
        let sched = two_level(i_hi, i_lo, p, 600.0, 6);
        let grid: Vec<f64> = (0..=72).map(|k| k as f64 * 50.0).collect();
        let traj = simulate_hto(&hp, &c, &sched, &HtoInit::SteadyState, &grid, &IntegratorConfig::default()).unwrap();
        for s in &traj.states {
            prop_assert!(s.to_array().iter().all(|v| *v >= 0.0));
        }
        for (h, ok) in traj.hto.iter().zip(&traj.defined) {
            if *ok {
                prop_assert!(*h >= 0.0 && h.is_finite());
            }
        }
        // the first sample sits in the high-current equilibrium
        let ss = hto_transfer_steady_state(&hp, &c, &OperatingPoint::new(i_hi, 353.15, p)).unwrap();
        prop_assert!((traj.hto[0] - ss).abs() <= 1e-9 * ss);
    }

    #[test]
    fn ess_lies_between_zero_and_n(xs in prop::collection::vec(-10.0f64..10.0, 10..400)) {
        let ess = effective_sample_size_of(&xs);
        prop_assert!(ess > 0.0 && ess <= xs.len() as f64, "{ess}");
    }

    #[test]
    fn prior_is_minus_infinity_outside_the_box(
        m in prop::collection::vec(-3.0f64..3.0, 2),
    ) {
        let prior = PriorSpec::new(vec![
            PriorEntry::uniform("a", -1.0, 1.0),
            PriorEntry::gaussian("b", -2.0, 2.0, 0.5, 1.0),
        ]).unwrap();
        let inside = m[0].abs() <= 1.0 && m[1].abs() <= 2.0;
        let lp = log_prior(&prior, &m);
        if inside {
            prop_assert!(lp.is_finite());
        } else {
            prop_assert_eq!(lp, f64::NEG_INFINITY);
        }
    }
}
