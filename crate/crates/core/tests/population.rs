use hbbm_core::analysis::validate::yule_check;
use hbbm_core::engine::{run_with, typical_count, SimConfig};
use hbbm_core::exec::{map_indexed, Execution};
use hbbm_core::rng::{derive_seed, stream, Purpose};
use hbbm_core::stats::{ks_distance, Moments};
use hbbm_core::theory::yule_pmf;
use hbbm_core::{diffusion, State};

/// Forward equations of the pure-birth chain, `p_k' = β(k-1)p_{k-1} - βk p_k`,
/// integrated by RK4. The system for `k ≤ K` is closed.
fn birth_ode(beta: f64, t: f64, kmax: usize) -> Vec<f64> {
    let rhs = |p: &[f64]| -> Vec<f64> {
        (0..kmax)
            .map(|i| {
                let k = (i + 1) as f64;
                let inflow = if i == 0 { 0.0 } else { beta * (k - 1.0) * p[i - 1] };
                inflow - beta * k * p[i]
            })
            .collect()
    };
    let steps = 10_000;
    let h = t / steps as f64;
    let mut p = vec![0.0; kmax];
    p[0] = 1.0;
    for _ in 0..steps {
        let k1 = rhs(&p);
        let k2 = rhs(&p.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect::<Vec<_>>());
        let k3 = rhs(&p.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect::<Vec<_>>());
        let k4 = rhs(&p.iter().zip(&k3).map(|(a, b)| a + h * b).collect::<Vec<_>>());
        for i in 0..kmax {
            p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    p
}

#[test]
fn geometric_law_agrees_with_birth_equations() {
    let p = birth_ode(1.0, 1.0, 10);
    for (i, pk) in p.iter().enumerate() {
        assert!((pk - yule_pmf(1.0, 1.0, i as u64 + 1)).abs() < 1e-10, "k = {}", i + 1);
    }
    assert!((p[0] - (-1.0f64).exp()).abs() < 1e-12);
}

#[test]
fn simulated_population_law() {
    let report = yule_check(1.0, 1.0, 10_000, 11, Execution::Parallel).unwrap();
    assert!(report.p_value > 0.001, "chi-square p = {}", report.p_value);
    assert!(report.mean.within(3.0), "{:?}", report.mean);
    // low bins against the ODE solution rather than the closed form
    let ode = birth_ode(1.0, 1.0, 10);
    for &(k, observed, _) in report.bins.iter().filter(|b| b.0 <= 3) {
        let expected = 10_000.0 * ode[k as usize - 1];
        assert!((observed as f64 - expected).abs() < 4.0 * expected.sqrt(), "k = {k}");
    }
}

#[test]
fn second_moment_of_population() {
    let (beta, t) = (0.5f64, 2.0);
    let scale = (-beta * t).exp();
    let values = map_indexed(10_000, Execution::Parallel, |r| {
        let c = SimConfig::new(beta, t, derive_seed(5, 0, r as u64));
        let n = run_with(&c, Execution::Sequential).unwrap().population() as f64;
        (scale * n).powi(2)
    });
    let m = Moments::from_values(values);
    let exact = 2.0 - scale;
    assert!((m.mean() - exact).abs() < 3.0 * m.stderr(), "{} vs {exact}", m.mean());
}

#[test]
fn waiting_times_between_branchings_are_exponential() {
    // with n alive, the next split comes after Exp(βn)
    let beta = 0.7;
    let mut gaps = Vec::new();
    let mut r = 0;
    while gaps.len() < 10_000 {
        let c = SimConfig::new(beta, 6.0, derive_seed(9, 0, r));
        let s = run_with(&c, Execution::Sequential).unwrap();
        for w in s.population_history.windows(2) {
            gaps.push((w[1].0 - w[0].0) * beta * w[0].1 as f64);
        }
        r += 1;
    }
    let d = ks_distance(&gaps, |x| 1.0 - (-x).exp());
    assert!(d < 1.63 / (gaps.len() as f64).sqrt(), "KS {d}");
}

#[test]
fn typical_set_is_often_non_empty() {
    // P(non-empty) is at least the chance that one fixed lineage stays typical
    let (beta, t, onset) = (0.5, 10.0, 1.0);
    let hits = (0..100)
        .filter(|&r| {
            let c = SimConfig::new(beta, t, derive_seed(21, 0, r));
            typical_count(&run_with(&c, Execution::Parallel).unwrap(), onset).unwrap() > 0
        })
        .count();
    let params = diffusion::DiffusionParams::default();
    let grid = diffusion::Grid::new(params.dt, t);
    let single = 4000;
    let ok = (0..single)
        .filter(|&i| {
            let mut rng = stream(77, i as u128, Purpose::SinglePath);
            let mut typical = true;
            diffusion::advance(State::default(), 0.0, t, &grid, &params, &mut rng, |s, st| {
                if s >= onset && (st.log_y + 0.5 * s).abs() > s.powf(2.0 / 3.0) {
                    typical = false;
                }
            });
            typical
        })
        .count();
    let p = ok as f64 / single as f64;
    let freq = hits as f64 / 100.0;
    assert!(freq > 0.1, "{freq}");
    assert!(freq >= p - 3.0 * (p * (1.0 - p) / 100.0).sqrt(), "{freq} vs single path {p}");
}
