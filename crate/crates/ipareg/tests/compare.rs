use ipareg::{bundled, compare_fixed_gain, emit_plot_data, run_scenario, OutputError};

#[test]
fn small_fixed_gain_settles_slower_after_downward_and_first_steps() {
    let s = bundled("md1_delay_fig5").unwrap();
    let c = compare_fixed_gain(&s, &[0.030]).unwrap();
    let (ad, fx) = (&c.controllers[0], &c.controllers[1]);
    assert_eq!(fx.label, "fixed 0.03");
    for seg in [0, 2] {
        let a = ad.segments[seg].settle_cycles.unwrap();
        let f = fx.segments[seg].settle_cycles.unwrap_or(usize::MAX);
        assert!(f > a, "segment r={}: fixed {f} vs adaptive {a}", ad.segments[seg].r);
    }
}

#[test]
fn fixed_gain_at_steady_adaptive_gain_behaves_alike() {
    let s = bundled("md1_delay_fig2").unwrap();
    let adaptive = &run_scenario(&s).unwrap()[0];
    let tail: Vec<f64> = adaptive.trace.rows[20..].iter().filter_map(|r| r.a).collect();
    let steady = tail.iter().sum::<f64>() / tail.len() as f64;
    let c = compare_fixed_gain(&s, &[steady]).unwrap();
    // amplitudes over the last half, away from the start-up transient
    let amp = |k: usize| {
        c.controllers[k].trace.rows[50..]
            .iter()
            .map(|r| (r.y - r.r).abs())
            .fold(0.0, f64::max)
    };
    let ratio = amp(1) / amp(0);
    assert!((0.5..=2.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn plot_data_to_unwritable_path_is_an_io_error() {
    let mut s = bundled("md1_delay_fig2").unwrap();
    s.n_cycles = 3;
    s.report.segments.clear();
    let r = &run_scenario(&s).unwrap()[0];
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("missing").join("plot.csv");
    assert!(matches!(emit_plot_data(r, &bad), Err(OutputError::Io { .. })));
    let good = dir.path().join("plot.csv");
    emit_plot_data(r, &good).unwrap();
    assert_eq!(std::fs::read_to_string(good).unwrap().lines().count(), 4);
}
