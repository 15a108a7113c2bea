use csmc_core::analysis::{kpi, sliding_plane, Window};
use csmc_core::modulation::{schedule_average, vector_to_complex, Method};
use csmc_core::sim::{run, Scenario};

#[test]
fn margin_stays_positive_on_the_bench() {
    for (m, d0) in [(Method::Sbi, 0.0), (Method::Csa, 0.0), (Method::Zcsa, 0.25)] {
        let t = run(&Scenario::benchmark(m, d0)).unwrap();
        assert!(t.summary.min_margin > 0.0, "{m}: {}", t.summary.min_margin);
        assert!(t.records.iter().all(|r| r.margin > 0.0));
    }
}

#[test]
fn zcsa_band_is_tighter_than_sbi() {
    let w = Window::new(30e-3, 50e-3);
    let sbi = sliding_plane(&run(&Scenario::benchmark(Method::Sbi, 0.0)).unwrap(), w).unwrap();
    let z = sliding_plane(&run(&Scenario::benchmark(Method::Zcsa, 0.25)).unwrap(), w).unwrap();
    assert!(z.max_abs < sbi.max_abs);
}

#[test]
fn csa_periods_average_to_the_convex_combination() {
    let sc = Scenario { duration: 10e-3, events: vec![], ..Scenario::benchmark(Method::Csa, 0.0) };
    let t = run(&sc).unwrap();
    let c = sc.scale;
    // with one period of delay, period k applies the decision of sample k − 1
    for w in t.records.windows(2) {
        let (prev, cur) = (&w[0], &w[1]);
        let (up, um) = prev.sector.unwrap().csa_vectors();
        let want = vector_to_complex(up, c) * prev.duty + vector_to_complex(um, c) * (1.0 - prev.duty);
        assert!((schedule_average(&cur.applied, c) - want).norm() < 1e-12);
    }
}

#[test]
fn kpi_repeats_period_to_period() {
    // steady operation without events
    let sc = Scenario { events: vec![], duration: 100e-3, ..Scenario::benchmark(Method::Zcsa, 0.25) };
    let t = run(&sc).unwrap();
    let a = kpi(&t, Window::new(40e-3, 60e-3)).unwrap();
    let b = kpi(&t, Window::new(80e-3, 100e-3)).unwrap();
    assert!((a.rmse - b.rmse).abs() <= 0.01 * a.rmse, "{} vs {}", a.rmse, b.rmse);
}
