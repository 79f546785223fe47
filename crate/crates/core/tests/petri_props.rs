use ipareg_core::petri::{
    crn_derivative_for_batches, draw_batches, petri_path, rate_resolve, Batch, PetriConfig,
};
use ipareg_core::sim::RngStream;
use proptest::prelude::*;

/// Fixed-step Euler integration of the fluid net, landing exactly on each
/// checkpoint. Within a step the threshold and emptying guards are located
/// linearly so a mode switch does not smear over a whole step.
fn euler_markings(
    u: f64,
    cfg: &PetriConfig,
    batches: &[Batch],
    checkpoints: &[f64],
    dt: f64,
) -> Vec<(f64, f64)> {
    let (mut t, mut m1, mut m2) = (0.0f64, cfg.m1_0, cfg.m2_0);
    let mut bi = 0;
    let mut out = Vec::new();
    for &cp in checkpoints {
        while t < cp {
            while bi < batches.len() && batches[bi].time <= t {
                m1 += batches[bi].amount;
                bi += 1;
            }
            let mut h = dt.min(cp - t);
            let (_, v2, v3) = rate_resolve(m1, m2, u, cfg);
            let (r1, r2) = (-v3, v2 - v3);
            if r1 < 0.0 {
                let guard = if m1 > u { m1 - u } else { m1 };
                if guard > 0.0 && guard < -r1 * h {
                    h = guard / -r1;
                }
            }
            if r2 < 0.0 && m2 > 0.0 && m2 < -r2 * h {
                h = m2 / -r2;
            }
            m1 = (m1 + r1 * h).max(0.0);
            m2 = (m2 + r2 * h).max(0.0);
            t += h;
            if (t - cp).abs() < 1e-12 {
                t = cp;
            }
        }
        while bi < batches.len() && batches[bi].time <= t && batches[bi].time < cp {
            m1 += batches[bi].amount;
            bi += 1;
        }
        out.push((m1, m2));
    }
    out
}

#[test]
fn closed_form_matches_euler_at_event_boundaries() {
    let cfg = PetriConfig {
        t_f: 200.0,
        ..PetriConfig::default()
    };
    let mut s = RngStream::new(5, 3);
    for u in [8.0, 24.8, 41.0] {
        let batches = draw_batches(&cfg, 0.0, &mut s).unwrap();
        let path = petri_path(u, &cfg, 0.0, 0.0, &batches).unwrap();
        // markings just before each event, replayed from the closed form
        let times: Vec<f64> = path.events.iter().map(|e| e.time).collect();
        let euler = euler_markings(u, &cfg, &batches, &times, 1e-4);
        let mut replay = Vec::new();
        for e in &path.events {
            let prefix: Vec<Batch> = batches.iter().copied().filter(|b| b.time < e.time).collect();
            if e.time == 0.0 {
                replay.push((0.0, 0.0));
                continue;
            }
            let sub = PetriConfig { t_f: e.time, ..cfg };
            let p = petri_path(u, &sub, 0.0, 0.0, &prefix).unwrap();
            replay.push((p.final_state.m1, p.final_state.m2));
        }
        for ((a, b), t) in replay.iter().zip(&euler).zip(&times) {
            assert!((a.0 - b.0).abs() < 1e-6, "m1 at {t}: {} vs {}", a.0, b.0);
            assert!((a.1 - b.1).abs() < 1e-6, "m2 at {t}: {} vs {}", a.1, b.1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inventory_nonincreasing_in_threshold(seed in 0u64..10_000, u in 2.0f64..80.0, du in 0.01f64..10.0) {
        let cfg = PetriConfig::default();
        let batches = draw_batches(&cfg, cfg.first_order_at, &mut RngStream::new(seed, 3)).unwrap();
        let lo = petri_path(u, &cfg, 0.0, 0.0, &batches).unwrap();
        let hi = petri_path(u + du, &cfg, 0.0, 0.0, &batches).unwrap();
        prop_assert!(hi.y <= lo.y + 1e-9);
        prop_assert!(lo.dy <= 1e-12);
    }
}

#[test]
fn perturbation_estimate_matches_crn_on_random_scenarios() {
    let cfg = PetriConfig::default();
    let mut pick = RngStream::new(2024, 9);
    let (mut compared, mut straddled) = (0, 0);
    for k in 0..100u64 {
        let u = pick.uniform(3.0, 70.0).unwrap();
        let batches = draw_batches(&cfg, cfg.first_order_at, &mut RngStream::new(k, 3)).unwrap();
        let crn = crn_derivative_for_batches(u, 1e-3, &cfg, &batches).unwrap();
        if !crn.order_stable {
            straddled += 1;
            continue;
        }
        let ipa = petri_path(u, &cfg, 0.0, 0.0, &batches).unwrap().dy;
        compared += 1;
        let scale = crn.value.abs().max(1e-9);
        assert!(
            (ipa - crn.value).abs() <= 0.05 * scale || (ipa - crn.value).abs() < 1e-9,
            "scenario {k} u={u}: {ipa} vs {}",
            crn.value
        );
    }
    assert!(compared >= 90, "only {compared} comparable, {straddled} straddled");
}
