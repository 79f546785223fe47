use ipareg_core::ooo::{
    crn_commit_derivative, generate_trace, ipa_pass, issue_with_rob, timing_pass, WorkloadProfile,
};
use ipareg_core::sim::RngStream;
use proptest::prelude::*;

fn profile(which: u8) -> WorkloadProfile {
    match which {
        0 => WorkloadProfile::compute(),
        1 => WorkloadProfile::memory(),
        _ => WorkloadProfile {
            mem_fraction: 0.0,
            ..WorkloadProfile::compute()
        },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// `d_M(tau) = C tau + D` with `C = d'_M` while the branch record holds.
    #[test]
    fn commit_time_is_affine_in_tau(seed in 0u64..100_000, which in 0u8..3, tau in 0.1f64..2.0) {
        let p = profile(which);
        let trace = generate_trace(&p, 1500, &mut RngStream::new(seed, 4)).unwrap();
        let t = ipa_pass(&trace, tau, timing_pass(&trace, tau, p.mshr_capacity)).unwrap();
        let c = t.d_m_prime();
        prop_assert_eq!(c.fract(), 0.0);
        let mem: f64 = trace.iter().map(|r| r.mem_latency).sum();
        let d = t.d_m() - c * tau;
        prop_assert!(d >= -1e-9 * t.d_m() && d <= mem + 1e-9 * t.d_m());
        for tau2 in [tau * (1.0 - 1e-6), tau * (1.0 + 1e-6)] {
            let t2 = timing_pass(&trace, tau2, p.mshr_capacity);
            if t2.stall_flags == t.stall_flags {
                let predicted = c * tau2 + d;
                prop_assert!((t2.d_m() - predicted).abs() <= 1e-9 * t2.d_m());
            }
        }
    }

    #[test]
    fn derivative_equals_difference_quotient(seed in 0u64..100_000, which in 0u8..3, tau in 0.1f64..2.0) {
        let p = profile(which);
        let trace = generate_trace(&p, 1500, &mut RngStream::new(seed, 4)).unwrap();
        let crn = crn_commit_derivative(&trace, tau, 1e-7 * tau, p.mshr_capacity);
        prop_assume!(crn.order_stable);
        let t = ipa_pass(&trace, tau, timing_pass(&trace, tau, p.mshr_capacity)).unwrap();
        prop_assert!((crn.value - t.d_m_prime()).abs() <= 1e-6 * t.d_m_prime(),
            "fd {} ipa {}", crn.value, t.d_m_prime());
    }

    #[test]
    fn commits_strictly_increase(seed in 0u64..100_000, which in 0u8..3, tau in 0.1f64..2.0) {
        let p = profile(which);
        let program = generate_trace(&p, 1500, &mut RngStream::new(seed, 4)).unwrap();
        let (_, t) = issue_with_rob(&program, tau, p.mshr_capacity, p.rob_capacity);
        prop_assert!(t.commit[0] > 0.0);
        prop_assert!(t.commit.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(t.beta.iter().zip(&t.alpha).all(|(b, a)| b >= a));
    }

    /// Every commit adds at least one cycle, which bounds `d'_M` below by
    /// `M` when no instruction waits on clock-independent memory latency.
    #[test]
    fn memory_free_derivative_at_least_m(seed in 0u64..100_000, tau in 0.1f64..2.0) {
        let p = profile(2);
        let trace = generate_trace(&p, 1500, &mut RngStream::new(seed, 4)).unwrap();
        let t = ipa_pass(&trace, tau, timing_pass(&trace, tau, p.mshr_capacity)).unwrap();
        prop_assert!(t.d_m_prime() >= trace.len() as f64);
        prop_assert!((t.d_m() - t.d_m_prime() * tau).abs() <= 1e-9 * t.d_m());
    }
}
