//! Distributional checks tying the simulator to the continuous-time model:
//! exponential holding times, time rescaling, and convergence of empirical
//! frequencies towards the limit laws as the tree grows.

use patree_core::analytic::pi_table;
use patree_core::simulate::{census, derive_stream, init_growth};
use patree_core::stats::{compare_degree, kolmogorov_sf, ks_test};
use patree_core::weight::WeightFunction;

fn ba() -> WeightFunction {
    WeightFunction::linear(1.0, 1.0).unwrap()
}

#[test]
fn holding_gaps_are_unit_exponential_after_scaling() {
    // For omega(k) = k+1 the total weight with m vertices is 2m−1, so the
    // gaps W·(T_{i+1}−T_i) are i.i.d. Exp(1).
    let mut s = init_growth(&ba(), 314).unwrap();
    s.grow_continuous(10_000).unwrap();
    let times = s.birth_times();
    let mut scaled: Vec<f64> = times
        .windows(2)
        .enumerate()
        .map(|(i, t)| (t[1] - t[0]) * (2.0 * (i as f64 + 1.0) - 1.0))
        .collect();
    let (d, p) = ks_test(&mut scaled, |x| 1.0 - (-x).exp());
    assert!(p > 0.001, "KS d = {d}, p = {p}");
}

#[test]
fn scale_equivariance_of_birth_times() {
    // Simulating with c·omega and multiplying times by c reproduces the law
    // of the original birth times; checked on T_1 and T_2 with a two-sample
    // KS test across independent runs.
    let w = ba();
    let c = 3.0;
    let scaled_w = w.scaled(c).unwrap();
    let runs = 2000usize;
    let mut t1_base = Vec::with_capacity(runs);
    let mut t2_base = Vec::with_capacity(runs);
    let mut t1_scaled = Vec::with_capacity(runs);
    let mut t2_scaled = Vec::with_capacity(runs);
    for r in 0..runs as u64 {
        let mut a = init_growth(&w, derive_stream(1000, r)).unwrap();
        a.grow_continuous(2).unwrap();
        t1_base.push(a.birth_times()[1]);
        t2_base.push(a.birth_times()[2]);
        let mut b = init_growth(&scaled_w, derive_stream(2000, r)).unwrap();
        b.grow_continuous(2).unwrap();
        t1_scaled.push(b.birth_times()[1] * c);
        t2_scaled.push(b.birth_times()[2] * c);
    }
    for (mut xs, mut ys) in [(t1_base, t1_scaled), (t2_base, t2_scaled)] {
        xs.sort_unstable_by(|a, b| a.total_cmp(b));
        ys.sort_unstable_by(|a, b| a.total_cmp(b));
        // Two-sample KS over the pooled support.
        let mut d: f64 = 0.0;
        let (mut i, mut j) = (0usize, 0usize);
        while i < xs.len() && j < ys.len() {
            if xs[i] <= ys[j] {
                i += 1;
            } else {
                j += 1;
            }
            let gap = (i as f64 / xs.len() as f64 - j as f64 / ys.len() as f64).abs();
            d = d.max(gap);
        }
        let m = xs.len() as f64;
        let n = ys.len() as f64;
        let p = kolmogorov_sf(d * (m * n / (m + n)).sqrt());
        assert!(p > 0.001, "two-sample KS d = {d}, p = {p}");
    }
}

#[test]
fn degree_tv_decreases_with_tree_size() {
    // Almost-sure convergence shows up as a shrinking TV distance; compare
    // the median over seeds at n = 1e4, 1e5, 1e6.
    let w = ba();
    let mut medians = Vec::new();
    for &n in &[10_000usize, 100_000, 1_000_000] {
        let mut tvs: Vec<f64> = (0..5u64)
            .map(|s| compare_degree(&w, n, 1, derive_stream(555, s), 20).unwrap().tv_distance)
            .collect();
        tvs.sort_unstable_by(|a, b| a.total_cmp(b));
        medians.push(tvs[2]);
    }
    assert!(
        medians[0] > medians[1] && medians[1] > medians[2],
        "medians {medians:?}"
    );
}

#[test]
fn uniform_attachment_degree_law_is_geometric() {
    // omega ≡ 1: p(k) = 2^{-(k+1)}.
    let w = WeightFunction::constant(1.0).unwrap();
    let report = compare_degree(&w, 1_000_000, 4, 777, 20).unwrap();
    for (k, row) in report.rows.iter().take(6).enumerate() {
        let expect = (0.5f64).powi(k as i32 + 1);
        assert!((row.theory - expect).abs() < 1e-12);
    }
    assert!(report.tv_distance < 0.01, "tv = {}", report.tv_distance);
}

#[test]
fn covered_mass_matches_simulated_small_subtree_fraction() {
    // pi_table's covered mass at max_size = 6 is the limiting fraction of
    // vertices whose progeny has at most 6 vertices.
    let w = ba();
    let table = pi_table(&w, 6).unwrap();
    assert!(table.covered_mass > 0.0 && table.covered_mass < 1.0);

    let mut s = init_growth(&w, 98765).unwrap();
    s.grow_discrete(999_999).unwrap();
    let c = census(&s, 6, &[]);
    let small = 1.0 - c.subtree_hist.other as f64 / c.n_vertices as f64;
    assert!(
        (small - table.covered_mass).abs() < 0.01,
        "simulated {small} vs covered {}",
        table.covered_mass
    );
}

