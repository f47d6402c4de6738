//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any fails. Runs without the libtest harness so the lines are always shown.

#![allow(clippy::needless_range_loop)]

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Discrete, DiscreteCDF, Poisson};

use crs_core::analysis::{
    convergence_sweep, discovery_vs_c, ks_two_sample, simulate_replicate,
    simulate_replicate_with_pool, t0_vs_c_table,
};
use crs_core::graph_walk::run_on_graph;
use crs_core::ode::{
    expected_coupons, find_t0, integrate, rates, vector_field, FluidModel, FluidState,
    IntegratorOptions,
};
use crs_core::random::replicate_rng;
use crs_core::sbm::{
    sample_adjacency, sample_block_sizes, BlockSizes, SbmParams, DEFAULT_GRAPH_CAP,
};
use crs_core::simulator::{run_with_observer, step, ChainState, HiddenPool};
use crs_core::KahanSum;

const PI: [f64; 2] = [1.0 / 3.0, 2.0 / 3.0];

fn table_rates() -> Vec<Vec<f64>> {
    vec![vec![2.0, 3.0], vec![3.0, 4.0]]
}

fn table_params(n: usize, c: usize, seed_fraction: f64) -> SbmParams {
    SbmParams::new(n, PI.to_vec(), table_rates(), c, seed_fraction).unwrap()
}

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within_budget(o: Outcome, elapsed: Duration, budget: Duration) -> Outcome {
    if elapsed <= budget {
        o
    } else {
        outcome(
            false,
            format!("{} | over time budget {:?}", o.detail, budget),
        )
    }
}

fn table_one() -> Outcome {
    const EXPECTED: [f64; 6] = [0.18, 0.91, 0.94, 0.95, 0.95, 0.95];
    let start = Instant::now();
    let caps: Vec<usize> = (1..=6).collect();
    let mut lines = Vec::new();
    let mut matched = Vec::new();
    for a0 in [0.05, 0.01] {
        let rows = t0_vs_c_table(
            &table_params(10_000, 3, a0),
            &caps,
            IntegratorOptions::default(),
        )
        .unwrap();
        let t0: Vec<f64> = rows.iter().map(|r| r.t0).collect();
        let ok = t0.iter().zip(EXPECTED).all(|(t, e)| (t - e).abs() <= 0.02);
        let monotone = t0.windows(2).all(|w| w[1] >= w[0]);
        lines.push(format!(
            "|a0|={a0}: [{}]",
            t0.iter()
                .map(|t| format!("{t:.4}"))
                .collect::<Vec<_>>()
                .join(", ")
        ));
        if ok && monotone {
            matched.push(a0);
        }
    }
    let detail = format!("{} matched |a0| in {:?}", lines.join("; "), matched);
    within_budget(
        outcome(!matched.is_empty(), detail),
        start.elapsed(),
        Duration::from_secs(5),
    )
}

fn table_two() -> Outcome {
    const TABLE_TWO: [f64; 6] = [0.213, 0.308, 0.268, 0.308, 0.310, 0.260];
    let start = Instant::now();
    let base = table_params(1000, 3, 0.01);
    assert_eq!(base.seed_count(), 10);
    let caps: Vec<usize> = (1..=6).collect();
    let reports =
        discovery_vs_c(&base, &caps, 0.2, 400, 2024, IntegratorOptions::default()).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (r, target) in reports.iter().zip(TABLE_TWO) {
        let ok = r.summary.within_band(target, 3.0);
        pass &= ok;
        parts.push(format!(
            "c={} target {target} mean {:.3} sd {:.3}{}",
            r.coupon_cap,
            r.summary.mean,
            r.summary.stddev,
            if ok { "" } else { " OUT" }
        ));
    }
    within_budget(
        outcome(pass, parts.join("; ")),
        start.elapsed(),
        Duration::from_secs(30),
    )
}

fn convergence() -> Outcome {
    let start = Instant::now();
    let base = table_params(500, 3, 0.01);
    let pts = convergence_sweep(&base, &[500, 5000], 20, 77, IntegratorOptions::default()).unwrap();
    let (small, large) = (pts[0].mean_d1, pts[1].mean_d1);
    let pass = large < small && large < 0.5 * small;
    let detail = format!(
        "mean d1 N=500: {small:.5} (se {:.5}), N=5000: {large:.5} (se {:.5}), ratio {:.3}",
        pts[0].stderr_d1,
        pts[1].stderr_d1,
        large / small
    );
    within_budget(
        outcome(pass, detail),
        start.elapsed(),
        Duration::from_secs(120),
    )
}

fn one_step_coupon_law() -> Outcome {
    const N: usize = 10_000;
    const DRAWS: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut pass = true;
    let mut worst = 0.0f64;
    for case in 0..10 {
        let j = rng.random_range(20..=80u64);
        let sizes = BlockSizes::new(vec![j * 100, (100 - j) * 100]);
        let pi: Vec<f64> = sizes
            .as_slice()
            .iter()
            .map(|&s| s as f64 / N as f64)
            .collect();
        let off = rng.random_range(0.5..5.0);
        let lambda = vec![
            vec![rng.random_range(0.5..5.0), off],
            vec![off, rng.random_range(0.5..5.0)],
        ];
        let c = rng.random_range(1..=6usize);
        let p = SbmParams::new(N, pi, lambda, c, 0.01).unwrap();

        let mut state = ChainState {
            a: vec![0; 2],
            b: vec![0; 2],
            u: vec![0; 2],
            sizes: sizes.clone(),
            step: 0,
        };
        for l in 0..2 {
            let n_l = sizes.get(l);
            state.a[l] = rng.random_range(1..=n_l / 10);
            state.u[l] = rng.random_range(0..=n_l / 3);
            state.b[l] = rng.random_range(0..=(n_l - state.a[l] - state.u[l]) / 2);
        }

        let model = FluidModel::<f64>::new(&p);
        let scale = |v: &[u64]| v.iter().map(|&x| x as f64 / N as f64).collect::<Vec<_>>();
        let x = FluidState {
            a: scale(&state.a),
            b: scale(&state.b),
            u: scale(&state.u),
        };
        let r = rates(&x, &model);
        let mass = x.active_mass();

        let mut sums = [KahanSum::new(), KahanSum::new()];
        let mut squares = [KahanSum::new(), KahanSum::new()];
        for _ in 0..DRAWS {
            let (_, draw) = step(&state, &p, &mut rng).unwrap();
            for l in 0..2 {
                let v = draw.coupons[l] as f64;
                sums[l].add(v);
                squares[l].add(v * v);
            }
        }
        let tol_bias = 2.0 * 2.0 * (c as f64 + 1.0) * p.max_rate() / N as f64;
        for l in 0..2 {
            let oracle: f64 = (0..2)
                .map(|k| {
                    let total = r.total[k];
                    if total > 0.0 {
                        x.a[k] / mass * r.lambda_at(k, l) / total * expected_coupons(total, c)
                    } else {
                        0.0
                    }
                })
                .sum();
            let mean = sums[l].total() / DRAWS as f64;
            let var = (squares[l].total() / DRAWS as f64 - mean * mean).max(0.0) * DRAWS as f64
                / (DRAWS - 1) as f64;
            let se = (var / DRAWS as f64).sqrt();
            let tol = 3.0 * se + tol_bias;
            let err = (mean - oracle).abs();
            worst = worst.max(err / tol);
            if err > tol {
                pass = false;
                eprintln!("case {case} block {l}: mean {mean} oracle {oracle} tol {tol}");
            }
        }
    }
    outcome(
        pass,
        format!("10 states x {DRAWS} draws; worst |error|/tolerance {worst:.3}"),
    )
}

fn truncated_poisson_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let big_lambda = rng.random_range(1e-6..=100.0);
        let c = rng.random_range(0..=20usize);
        let poisson = Poisson::new(big_lambda).unwrap();
        let below: f64 = (0..c as u64)
            .map(|h| h as f64 * poisson.pmf(h))
            .collect::<KahanSum>()
            .total();
        let tail = if c == 0 { 1.0 } else { poisson.sf(c as u64 - 1) };
        let brute = below + c as f64 * tail;
        worst = worst.max((expected_coupons(big_lambda, c) - brute).abs());
    }
    outcome(
        worst <= 1e-12,
        format!("1000 random (Λ, c); max deviation {worst:.3e}"),
    )
}

fn random_params(rng: &mut ChaCha8Rng) -> SbmParams {
    let m = rng.random_range(1..=4usize);
    let n = rng.random_range(100..=4000usize);
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut pi: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let head: f64 = pi[..m - 1].iter().sum();
    pi[m - 1] = 1.0 - head;
    let mut lambda = vec![vec![0.0; m]; m];
    for k in 0..m {
        for l in k..m {
            let v = rng.random_range(0.0..6.0);
            lambda[k][l] = v;
            lambda[l][k] = v;
        }
    }
    let c = rng.random_range(1..=8usize);
    let seed_fraction: f64 = rng.random_range(0.005..0.1);
    SbmParams::new(n, pi, lambda, c, seed_fraction.max(1.0 / n as f64)).unwrap()
}

fn invariant_suite() -> Outcome {
    const TARGET_STEPS: usize = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut steps = 0usize;
    let mut runs = 0usize;
    let mut violations = Vec::new();
    while steps < TARGET_STEPS {
        let p = random_params(&mut rng);
        let sizes = sample_block_sizes(&p, &mut rng);
        let Ok(traj) = run_with_observer(&p, &sizes, &mut rng, |s, d| {
            steps += 1;
            if s.check_conservation().is_err() {
                violations.push(format!("conservation at step {}", s.step));
            }
            let z: u64 = d.z.iter().sum();
            let coupons: u64 = d.coupons.iter().sum();
            if coupons != z.min(p.coupon_cap() as u64) {
                violations.push(format!(
                    "coupons {coupons} vs min({z}, c) at step {}",
                    s.step
                ));
            }
        }) else {
            // a block smaller than its seed share; not a chain step
            continue;
        };
        runs += 1;
        for n in 0..=p.n_population() {
            if traj.interviewed_total(n) != n.min(traj.n0()) as u64 {
                violations.push(format!("|U_{n}| != min(n, n0)"));
            }
        }
    }

    let mut ode_worst = 0.0f64;
    for _ in 0..20 {
        let p = random_params(&mut rng);
        let model = FluidModel::<f64>::new(&p);
        let path = integrate(
            &model.default_initial_state(),
            &model,
            IntegratorOptions::default(),
        )
        .unwrap();
        let t0 = find_t0(&path);
        for (t, x) in path.grid.iter().zip(&path.states) {
            ode_worst = ode_worst.max((x.interviewed_mass() - t.min(t0)).abs());
        }
    }

    let mut field_worst = 0.0f64;
    for _ in 0..10_000 {
        let p = random_params(&mut rng);
        let m = p.n_blocks();
        let model = FluidModel::<f64>::new(&p);
        let mut x = FluidState {
            a: vec![0.0; m],
            b: vec![0.0; m],
            u: vec![0.0; m],
        };
        for l in 0..m {
            let room = p.pi()[l];
            x.a[l] = rng.random_range(0.0..room / 3.0) + 1e-6;
            x.b[l] = rng.random_range(0.0..room / 3.0);
            x.u[l] = rng.random_range(0.0..room / 3.0);
        }
        let f = vector_field(&x, &model, 1e-8).unwrap();
        let r = rates(&x, &model);
        let mass = x.active_mass();
        for l in 0..m {
            let lhs = f.a[l] + f.b[l] + f.u[l];
            let rhs: f64 = (0..m).map(|k| x.a[k] / mass * r.mu_at(k, l)).sum();
            field_worst = field_worst.max((lhs - rhs).abs());
        }
    }

    let pass = violations.is_empty() && ode_worst <= 1e-6 && field_worst <= 1e-12;
    let mut detail = format!(
        "{steps} chain steps over {runs} runs, {} violations; max ||u_t||-min(t,t0) {ode_worst:.2e}; max field identity error {field_worst:.2e}",
        violations.len()
    );
    if let Some(first) = violations.first() {
        detail.push_str(&format!("; first: {first}"));
    }
    outcome(pass, detail)
}

fn mode_samples(p: &SbmParams, pool: HiddenPool, replicates: u64) -> (Vec<f64>, Vec<f64>) {
    (0..replicates)
        .map(|r| {
            let traj = simulate_replicate_with_pool(p, pool, 31, r).unwrap();
            (
                traj.n0() as f64,
                traj.interviewed_total(p.n_population()) as f64,
            )
        })
        .unzip()
}

fn mode_equivalence() -> Outcome {
    const REPLICATES: u64 = 1000;
    let p = table_params(200, 3, 0.01);
    let (graph_n0, graph_u): (Vec<f64>, Vec<f64>) = (0..REPLICATES)
        .map(|r| {
            let mut rng = replicate_rng(32, r);
            let sizes = sample_block_sizes(&p, &mut rng);
            let graph = sample_adjacency(&p, &sizes, DEFAULT_GRAPH_CAP, &mut rng).unwrap();
            let traj = run_on_graph(&p, &graph, &mut rng).unwrap();
            (
                traj.n0() as f64,
                traj.interviewed_total(p.n_population()) as f64,
            )
        })
        .unzip();

    let (dist_n0, dist_u) = mode_samples(&p, HiddenPool::Exact, REPLICATES);
    let ks_n0 = ks_two_sample(&dist_n0, &graph_n0);
    let ks_u = ks_two_sample(&dist_u, &graph_u);
    let pass = !ks_n0.rejects(0.01) && !ks_u.rejects(0.01);

    // reported for reference: the doubly-subtracted pool is a different chain at finite N
    let (literal_n0, _) = mode_samples(&p, HiddenPool::Literal, REPLICATES);
    let ks_literal = ks_two_sample(&literal_n0, &graph_n0);
    outcome(
        pass,
        format!(
            "n0: D={:.4} p={:.4}; final |U|: D={:.4} p={:.4}; literal pool n0: D={:.4} p={:.2e}",
            ks_n0.statistic,
            ks_n0.p_value,
            ks_u.statistic,
            ks_u.p_value,
            ks_literal.statistic,
            ks_literal.p_value
        ),
    )
}

fn degenerate_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mismatches = 0;
    let mut runs = 0;
    let mut t0_worst = 0.0f64;
    for _ in 0..200 {
        let m = rng.random_range(1..=3usize);
        let n = rng.random_range(50..=3000usize);
        let pi = vec![1.0 / m as f64; m];
        let a0 = rng.random_range(0.01..0.5);
        let c = rng.random_range(1..=6usize);
        let p = SbmParams::new(n, pi, vec![vec![0.0; m]; m], c, a0).unwrap();
        let expected = p.seed_count();
        for r in 0..5 {
            let Ok(traj) = simulate_replicate(&p, rng.random(), r) else {
                continue;
            };
            runs += 1;
            if traj.n0() != expected {
                mismatches += 1;
            }
        }
        let h = 1e-4;
        let model = FluidModel::<f64>::new(&p);
        let path = integrate(
            &model.default_initial_state(),
            &model,
            IntegratorOptions::with_step(h),
        )
        .unwrap();
        t0_worst = t0_worst.max((find_t0(&path) - a0).abs() / h);
    }
    outcome(
        mismatches == 0 && t0_worst <= 2.0,
        format!("{runs} runs, {mismatches} with n0 != floor(a0 N); max |t0 - a0| = {t0_worst:.3}h"),
    )
}

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("table 1 stopping times", table_one),
        ("table 2 discovered proportion", table_two),
        ("fluid-limit convergence", convergence),
        ("one-step coupon law", one_step_coupon_law),
        ("truncated Poisson oracle", truncated_poisson_oracle),
        ("invariant suite", invariant_suite),
        ("mode equivalence", mode_equivalence),
        ("degenerate closed form", degenerate_closed_form),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {} [{}] {name}: {} ({:.2}s)",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
