//! Theory-vs-simulation comparisons: total-variation distance, χ² and
//! Kolmogorov–Smirnov goodness of fit, and the multi-run experiment
//! drivers. Runs are dispatched concurrently by derived seed and folded in
//! seed order, so every report is reproducible bit for bit.

use std::collections::{BTreeMap, BTreeSet};
use std::io;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Gamma};
use thiserror::Error;

use crate::analytic::{pi_table, AnalyticError};
use crate::malthus::{degree_dist, kappa, solve_malthus, MalthusError};
use crate::simulate::{
    census, derive_stream, init_growth, theta_sample_with_kappa, MarkedHistogram,
};
use crate::tree::{trees_up_to, TreeCode, TreeError};
use crate::weight::{WeightError, WeightFunction};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("distribution is not normalized: total mass {total}")]
    Unnormalized { total: f64 },
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Malthus(#[from] MalthusError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Finite outcome→mass map with an explicit residual tail, so the whole
/// table sums to 1.
#[derive(Clone, Debug)]
pub struct DistributionTable<K: Ord> {
    pub masses: BTreeMap<K, f64>,
    pub tail: f64,
}

impl<K: Ord> DistributionTable<K> {
    pub fn total(&self) -> f64 {
        self.masses.values().sum::<f64>() + self.tail
    }

    fn check_normalized(&self) -> Result<(), StatsError> {
        let total = self.total();
        if (total - 1.0).abs() > 1e-6 {
            return Err(StatsError::Unnormalized { total });
        }
        Ok(())
    }
}

/// Total-variation distance (1/2)Σ|p−q| over the union of outcomes plus
/// the tails.
pub fn tv_distance<K: Ord + Clone>(
    p: &DistributionTable<K>,
    q: &DistributionTable<K>,
) -> Result<f64, StatsError> {
    p.check_normalized()?;
    q.check_normalized()?;
    let keys: BTreeSet<&K> = p.masses.keys().chain(q.masses.keys()).collect();
    let mut sum = (p.tail - q.tail).abs();
    for k in keys {
        let a = p.masses.get(k).copied().unwrap_or(0.0);
        let b = q.masses.get(k).copied().unwrap_or(0.0);
        sum += (a - b).abs();
    }
    Ok(sum / 2.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Number of low-expectation cells pooled before testing.
    pub lumped_cells: usize,
}

/// χ² goodness of fit of observed counts against expected probabilities.
/// Cells with expected count < 5 are pooled (the standard validity rule);
/// returns None when fewer than two cells survive.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Option<ChiSquare> {
    assert_eq!(observed.len(), probs.len());
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return None;
    }
    let n = total as f64;
    let mut kept: Vec<(f64, f64)> = Vec::new(); // (observed, expected)
    let mut pooled_obs = 0.0;
    let mut pooled_exp = 0.0;
    let mut lumped = 0usize;
    for (&o, &p) in observed.iter().zip(probs) {
        let e = p * n;
        if e < 5.0 {
            pooled_obs += o as f64;
            pooled_exp += e;
            lumped += 1;
        } else {
            kept.push((o as f64, e));
        }
    }
    if pooled_exp > 0.0 {
        if pooled_exp >= 5.0 || kept.is_empty() {
            kept.push((pooled_obs, pooled_exp));
        } else {
            // Fold the undersized pool into the smallest surviving cell.
            let idx = kept
                .iter()
                .enumerate()
                .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
                .map(|(i, _)| i)
                .expect("kept is non-empty");
            kept[idx].0 += pooled_obs;
            kept[idx].1 += pooled_exp;
        }
    }
    if kept.len() < 2 {
        return None;
    }
    let statistic: f64 = kept.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = kept.len() - 1;
    let dist = ChiSquared::new(dof as f64).expect("dof >= 1");
    let p_value = dist.sf(statistic).clamp(0.0, 1.0);
    Some(ChiSquare { statistic, dof, p_value, lumped_cells: lumped })
}

/// Two-sided KS statistic of sorted samples against a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Survival function of the Kolmogorov distribution,
/// Q(z) = 2 Σ_{j≥1} (−1)^{j−1} e^{−2j²z²}, with the theta-inversion form
/// for small z where the alternating series converges slowly.
pub fn kolmogorov_sf(z: f64) -> f64 {
    if z <= 0.0 {
        return 1.0;
    }
    if z < 0.2 {
        return 1.0;
    }
    if z < 0.755 {
        let v = 1.0 / (z * z);
        let w = (2.0 * std::f64::consts::PI).sqrt();
        let c1 = -std::f64::consts::PI.powi(2) / 8.0;
        return (1.0
            - w / z * ((c1 * v).exp() + (9.0 * c1 * v).exp() + (25.0 * c1 * v).exp()))
        .clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64 * z).powi(2)).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test; p-value from the asymptotic Kolmogorov law with the
/// usual finite-n effective factor √n + 0.12 + 0.11/√n.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> (f64, f64) {
    samples.sort_unstable_by(|a, b| a.total_cmp(b));
    let d = ks_statistic(samples, cdf);
    let sq = (samples.len() as f64).sqrt();
    let z = d * (sq + 0.12 + 0.11 / sq);
    (d, kolmogorov_sf(z))
}

/// Runs `count` independent jobs across threads and returns results in
/// index order (the fold order is deterministic regardless of scheduling).
pub fn run_indexed<T, F>(count: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if count == 0 {
        return Vec::new();
    }
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(count);
    let mut slots: Vec<Option<T>> = (0..count).map(|_| None).collect();
    std::thread::scope(|scope| {
        let job = &job;
        let mut handles = Vec::with_capacity(threads);
        for t in 0..threads {
            handles.push(scope.spawn(move || {
                let mut part = Vec::new();
                let mut i = t;
                while i < count {
                    part.push((i, job(i)));
                    i += threads;
                }
                part
            }));
        }
        for h in handles {
            for (i, v) in h.join().expect("worker panicked") {
                slots[i] = Some(v);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("all slots filled")).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonRow {
    pub outcome: String,
    pub theory: f64,
    pub empirical: f64,
    pub std_error: f64,
}

/// Per-outcome theory vs pooled empirical masses, with TV distance and a
/// χ² verdict. Standard errors come from across-run variance: runs are
/// independent, vertices within a run are not.
#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub tv_distance: f64,
    pub chi_square: Option<ChiSquare>,
    pub n_vertices: u64,
    pub runs: u32,
    pub seeds: Vec<u64>,
    pub notes: Vec<String>,
}

impl ComparisonReport {
    /// CSV rows `outcome,theory,empirical,stderr`; outcomes are quoted
    /// because canonical codes contain commas.
    pub fn write_csv<W: io::Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "outcome,theory,empirical,stderr")?;
        for row in &self.rows {
            writeln!(
                out,
                "\"{}\",{:.12e},{:.12e},{:.12e}",
                row.outcome, row.theory, row.empirical, row.std_error
            )?;
        }
        Ok(())
    }
}

fn assemble_report(
    labels: Vec<String>,
    theory: Vec<f64>,
    per_run: &[Vec<u64>],
    per_run_totals: &[u64],
    seeds: Vec<u64>,
    n_vertices: u64,
    notes: Vec<String>,
) -> Result<ComparisonReport, StatsError> {
    let runs = per_run.len();
    let cells = labels.len();
    let mut pooled = vec![0u64; cells];
    for run in per_run {
        for (i, &c) in run.iter().enumerate() {
            pooled[i] += c;
        }
    }
    let grand_total: u64 = per_run_totals.iter().sum();
    let mut rows = Vec::with_capacity(cells);
    let mut theory_table = DistributionTable { masses: BTreeMap::new(), tail: 0.0 };
    let mut empirical_table = DistributionTable { masses: BTreeMap::new(), tail: 0.0 };
    for i in 0..cells {
        let empirical = pooled[i] as f64 / grand_total as f64;
        // Across-run spread of the per-run proportions.
        let std_error = if runs > 1 {
            let props: Vec<f64> = per_run
                .iter()
                .zip(per_run_totals)
                .map(|(r, &t)| r[i] as f64 / t as f64)
                .collect();
            let mean = props.iter().sum::<f64>() / runs as f64;
            let var =
                props.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (runs as f64 - 1.0);
            (var / runs as f64).sqrt()
        } else {
            0.0
        };
        theory_table.masses.insert(labels[i].clone(), theory[i]);
        empirical_table.masses.insert(labels[i].clone(), empirical);
        rows.push(ComparisonRow {
            outcome: labels[i].clone(),
            theory: theory[i],
            empirical,
            std_error,
        });
    }
    let tv = tv_distance(&theory_table, &empirical_table)?;
    let chi_square = chi_square_gof(&pooled, &theory);
    Ok(ComparisonReport {
        rows,
        tv_distance: tv,
        chi_square,
        n_vertices,
        runs: runs as u32,
        seeds,
        notes,
    })
}

/// Empirical degree frequencies (k ≤ kmax plus a lumped tail) against the
/// asymptotic degree law.
pub fn compare_degree(
    w: &WeightFunction,
    n_vertices: usize,
    runs: usize,
    base_seed: u64,
    kmax: usize,
) -> Result<ComparisonReport, StatsError> {
    assert!(n_vertices >= 1 && runs >= 1);
    let theory = degree_dist(w, kmax, 1e-12)?;
    let seeds: Vec<u64> = (0..runs).map(|r| derive_stream(base_seed, r as u64)).collect();
    let hists = run_indexed(runs, |r| -> Result<BTreeMap<u32, u64>, WeightError> {
        let mut state = init_growth(w, seeds[r])?;
        state.grow_discrete(n_vertices - 1)?;
        Ok(state.degree_histogram())
    });

    let mut labels: Vec<String> = (0..=kmax).map(|k| k.to_string()).collect();
    labels.push("tail".into());
    let mut theory_masses = theory.masses.clone();
    theory_masses.push(theory.tail_mass);

    let mut per_run = Vec::with_capacity(runs);
    for hist in hists {
        let hist = hist?;
        let mut counts = vec![0u64; kmax + 2];
        for (&k, &c) in &hist {
            let cell = (k as usize).min(kmax + 1);
            counts[cell] += c;
        }
        per_run.push(counts);
    }
    let totals = vec![n_vertices as u64; runs];
    assemble_report(
        labels,
        theory_masses,
        &per_run,
        &totals,
        seeds,
        n_vertices as u64,
        vec![format!("degrees above {kmax} lumped into `tail`")],
    )
}

/// Empirical subtree-shape frequencies (size ≤ max_size, larger lumped as
/// OTHER) against the limiting subtree law π.
pub fn compare_subtrees(
    w: &WeightFunction,
    n_vertices: usize,
    runs: usize,
    base_seed: u64,
    max_size: usize,
) -> Result<ComparisonReport, StatsError> {
    assert!(n_vertices >= 1 && runs >= 1);
    let table = pi_table(w, max_size)?;
    let seeds: Vec<u64> = (0..runs).map(|r| derive_stream(base_seed, r as u64)).collect();
    let censuses = run_indexed(runs, |r| -> Result<_, WeightError> {
        let mut state = init_growth(w, seeds[r])?;
        state.grow_discrete(n_vertices - 1)?;
        Ok(census(&state, max_size, &[]).subtree_hist)
    });

    let codes: Vec<TreeCode> = table.masses.keys().cloned().collect();
    let mut labels: Vec<String> = codes.iter().map(|c| c.to_string()).collect();
    labels.push("OTHER".into());
    let mut theory: Vec<f64> = codes.iter().map(|c| table.masses[c]).collect();
    theory.push(1.0 - table.covered_mass);

    let mut per_run = Vec::with_capacity(runs);
    for hist in censuses {
        let hist = hist?;
        let mut counts = vec![0u64; labels.len()];
        for (i, code) in codes.iter().enumerate() {
            counts[i] = hist.by_code.get(code).copied().unwrap_or(0);
        }
        *counts.last_mut().expect("has OTHER cell") = hist.other;
        per_run.push(counts);
    }
    let totals = vec![n_vertices as u64; runs];
    assemble_report(
        labels,
        theory,
        &per_run,
        &totals,
        seeds,
        n_vertices as u64,
        vec![format!("subtrees larger than {max_size} lumped into OTHER")],
    )
}

/// Marked-law comparison for one ancestor level k.
#[derive(Clone, Debug, Serialize)]
pub struct AncestorComparison {
    /// (subtree code, mark) pairs against π(G) each.
    pub marked: ComparisonReport,
    /// Unmarked marginal against the size-biased mass π(G)·|gen_k(G)|.
    pub marginal: ComparisonReport,
    /// Per-shape χ² of the mark-conditional counts against uniformity.
    pub mark_uniformity: Vec<(String, Option<ChiSquare>)>,
}

/// Empirical (k-ancestor subtree, mark) frequencies over vertices of depth
/// ≥ k against the marked law π^(k)(G,u) = π(G).
pub fn compare_ancestors(
    w: &WeightFunction,
    n_vertices: usize,
    runs: usize,
    base_seed: u64,
    k: usize,
    max_size: usize,
) -> Result<AncestorComparison, StatsError> {
    assert!(n_vertices >= 1 && runs >= 1);
    let table = pi_table(w, max_size)?;
    let seeds: Vec<u64> = (0..runs).map(|r| derive_stream(base_seed, r as u64)).collect();
    let censuses = run_indexed(runs, |r| -> Result<MarkedHistogram, WeightError> {
        let mut state = init_growth(w, seeds[r])?;
        state.grow_discrete(n_vertices - 1)?;
        Ok(census(&state, max_size, &[k]).ancestor_hists.remove(&k).expect("requested k"))
    });
    let mut hists = Vec::with_capacity(runs);
    for h in censuses {
        hists.push(h?);
    }

    // Theory: every mark position in generation k of each shape carries the
    // unmarked mass π(G); the marginal is size-biased by |gen_k|.
    let mut marked_keys: Vec<(TreeCode, u32)> = Vec::new();
    let mut marked_theory: Vec<f64> = Vec::new();
    let mut marginal_keys: Vec<TreeCode> = Vec::new();
    let mut marginal_theory: Vec<f64> = Vec::new();
    let mut marks_per_code: BTreeMap<TreeCode, Vec<u32>> = BTreeMap::new();
    for t in trees_up_to(max_size)? {
        let code = t.code();
        let mass = table.masses[&code];
        let gen = t.generation(k);
        if gen.is_empty() {
            continue;
        }
        let mut marks = Vec::with_capacity(gen.len());
        for u in &gen {
            let rank = t.index_of(u).expect("in tree") as u32;
            marked_keys.push((code.clone(), rank));
            marked_theory.push(mass);
            marks.push(rank);
        }
        marks_per_code.insert(code.clone(), marks);
        marginal_keys.push(code.clone());
        marginal_theory.push(mass * gen.len() as f64);
    }

    let marked_covered: f64 = marked_theory.iter().sum();
    let mut marked_labels: Vec<String> =
        marked_keys.iter().map(|(c, m)| format!("{c}|{m}")).collect();
    marked_labels.push("OTHER".into());
    let mut marked_theory_full = marked_theory.clone();
    marked_theory_full.push(1.0 - marked_covered);

    let mut marginal_labels: Vec<String> =
        marginal_keys.iter().map(|c| c.to_string()).collect();
    marginal_labels.push("OTHER".into());
    let marginal_covered: f64 = marginal_theory.iter().sum();
    let mut marginal_theory_full = marginal_theory.clone();
    marginal_theory_full.push(1.0 - marginal_covered);

    let mut marked_runs = Vec::with_capacity(runs);
    let mut marginal_runs = Vec::with_capacity(runs);
    let mut eligible = Vec::with_capacity(runs);
    for hist in &hists {
        let mut marked_counts = vec![0u64; marked_labels.len()];
        for (i, key) in marked_keys.iter().enumerate() {
            marked_counts[i] = hist.by_key.get(key).copied().unwrap_or(0);
        }
        *marked_counts.last_mut().expect("OTHER cell") = hist.other;
        let mut marginal_counts = vec![0u64; marginal_labels.len()];
        for (i, code) in marginal_keys.iter().enumerate() {
            marginal_counts[i] = hist
                .by_key
                .range((code.clone(), 0)..=(code.clone(), u32::MAX))
                .map(|(_, &c)| c)
                .sum();
        }
        *marginal_counts.last_mut().expect("OTHER cell") = hist.other;
        marked_runs.push(marked_counts);
        marginal_runs.push(marginal_counts);
        eligible.push(hist.eligible);
    }

    let note = format!(
        "denominator is the {} vertices of depth >= {k}; shapes larger than {max_size} \
         lumped into OTHER",
        eligible.iter().sum::<u64>()
    );
    let marked = assemble_report(
        marked_labels,
        marked_theory_full,
        &marked_runs,
        &eligible,
        seeds.clone(),
        n_vertices as u64,
        vec![note.clone()],
    )?;
    let marginal = assemble_report(
        marginal_labels,
        marginal_theory_full,
        &marginal_runs,
        &eligible,
        seeds,
        n_vertices as u64,
        vec![note],
    )?;

    // Mark uniformity per shape: the theory masses are equal across marks.
    let mut mark_uniformity = Vec::new();
    for (code, marks) in &marks_per_code {
        if marks.len() < 2 {
            continue;
        }
        let counts: Vec<u64> = marks
            .iter()
            .map(|&m| {
                hists
                    .iter()
                    .map(|h| h.by_key.get(&(code.clone(), m)).copied().unwrap_or(0))
                    .sum()
            })
            .collect();
        let uniform = vec![1.0 / marks.len() as f64; marks.len()];
        mark_uniformity.push((code.to_string(), chi_square_gof(&counts, &uniform)));
    }

    Ok(AncestorComparison { marked, marginal, mark_uniformity })
}

#[derive(Clone, Debug, Serialize)]
pub struct ThetaCheck {
    pub ks_statistic: f64,
    pub p_value: f64,
    pub sample_mean: f64,
    pub std_error: f64,
    pub samples: usize,
    /// Shape = rate = β/(α+β) of the reference Gamma law.
    pub gamma_shape: f64,
    pub lambda_star: f64,
    pub kappa: f64,
}

/// Samples the normalized growth statistic for ω(k) = αk+β and tests it
/// against Gamma(shape a, rate a) with a = β/(α+β); the mean is reported
/// against its theoretical value 1.
pub fn gamma_theta_check(
    alpha: f64,
    beta: f64,
    n_vertices: usize,
    samples: usize,
    base_seed: u64,
) -> Result<ThetaCheck, StatsError> {
    assert!(samples >= 2);
    let w = WeightFunction::linear(alpha, beta)?;
    let root = solve_malthus(&w, 1e-12)?;
    let kap = kappa(&w, root.lambda_star, 1e-9)?;
    let drawn = run_indexed(samples, |i| {
        theta_sample_with_kappa(&w, root.lambda_star, kap, n_vertices, derive_stream(base_seed, i as u64))
    });
    let mut values = Vec::with_capacity(samples);
    for v in drawn {
        values.push(v?);
    }
    let mean = values.iter().sum::<f64>() / samples as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples as f64 - 1.0);
    let std_error = (var / samples as f64).sqrt();
    let shape = beta / (alpha + beta);
    let gamma = Gamma::new(shape, shape).expect("positive parameters");
    let (d, p) = ks_test(&mut values, |x| gamma.cdf(x));
    Ok(ThetaCheck {
        ks_statistic: d,
        p_value: p,
        sample_mean: mean,
        std_error,
        samples,
        gamma_shape: shape,
        lambda_star: root.lambda_star,
        kappa: kap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_pcg::Pcg64;

    fn table(entries: &[(&str, f64)], tail: f64) -> DistributionTable<String> {
        DistributionTable {
            masses: entries.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            tail,
        }
    }

    #[test]
    fn tv_distance_examples() {
        let p = table(&[("a", 0.5), ("b", 0.5)], 0.0);
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);

        let q = table(&[("c", 1.0)], 0.0);
        assert!((tv_distance(&p, &q).unwrap() - 1.0).abs() < 1e-12);

        let p = table(&[("a", 1.0)], 0.0);
        let q = table(&[("a", 0.5), ("b", 0.5)], 0.0);
        assert!((tv_distance(&p, &q).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tv_distance_rejects_unnormalized() {
        let p = table(&[("a", 0.4)], 0.0);
        let q = table(&[("a", 1.0)], 0.0);
        assert!(matches!(
            tv_distance(&p, &q),
            Err(StatsError::Unnormalized { .. })
        ));
    }

    #[test]
    fn chi_square_basics() {
        // Perfect fit: statistic 0, p = 1.
        let c = chi_square_gof(&[50, 50], &[0.5, 0.5]).unwrap();
        assert_eq!(c.statistic, 0.0);
        assert!((c.p_value - 1.0).abs() < 1e-12);
        assert_eq!(c.dof, 1);

        // Known value: 60/40 vs uniform gives (10²/50)·2 = 4.0.
        let c = chi_square_gof(&[60, 40], &[0.5, 0.5]).unwrap();
        assert!((c.statistic - 4.0).abs() < 1e-12);
        assert!((c.p_value - 0.0455).abs() < 1e-3);

        // Tiny expected cells get pooled.
        let c = chi_square_gof(&[96, 2, 1, 1], &[0.94, 0.02, 0.02, 0.02]).unwrap();
        assert!(c.lumped_cells == 3);
        assert_eq!(c.dof, 1);

        assert!(chi_square_gof(&[10], &[1.0]).is_none());
        assert!(chi_square_gof(&[0, 0], &[0.5, 0.5]).is_none());
    }

    #[test]
    fn kolmogorov_sf_reference_values() {
        // Classical table values of the Kolmogorov distribution.
        assert!((kolmogorov_sf(1.0) - 0.2700).abs() < 5e-4);
        assert!((kolmogorov_sf(0.5) - 0.9639).abs() < 5e-4);
        assert!(kolmogorov_sf(2.0) < 1e-3);
        assert!((kolmogorov_sf(1.36) - 0.049).abs() < 2e-3); // 5% critical point
        assert_eq!(kolmogorov_sf(0.1), 1.0);
    }

    #[test]
    fn ks_statistic_hand_case() {
        // Two samples at 0.1 and 0.2 against U(0,1): sup gap at x = 0.2 is
        // |1 − 0.2| = 0.8.
        let d = ks_statistic(&[0.1, 0.2], |x| x);
        assert!((d - 0.8).abs() < 1e-12);
    }

    #[test]
    fn ks_uniform_self_test() {
        let mut rng = Pcg64::seed_from_u64(7);
        let mut xs: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let (d, p) = ks_test(&mut xs, |x| x.clamp(0.0, 1.0));
        assert!(d < 0.05, "d = {d}");
        assert!(p > 0.001, "p = {p}");
    }

    #[test]
    fn run_indexed_is_ordered() {
        let out = run_indexed(100, |i| i * i);
        assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
        assert!(run_indexed(0, |i| i).is_empty());
    }

    #[test]
    fn compare_degree_smoke() {
        let w = WeightFunction::constant(1.0).unwrap();
        let report = compare_degree(&w, 20_000, 4, 99, 8).unwrap();
        // ω ≡ 1: p(k) = 2^−(k+1).
        assert!((report.rows[0].theory - 0.5).abs() < 1e-12);
        assert!((report.rows[0].empirical - 0.5).abs() < 0.02);
        assert!(report.tv_distance < 0.02, "tv = {}", report.tv_distance);
        let total_theory: f64 = report.rows.iter().map(|r| r.theory).sum();
        let total_emp: f64 = report.rows.iter().map(|r| r.empirical).sum();
        assert!((total_theory - 1.0).abs() < 1e-9);
        assert!((total_emp - 1.0).abs() < 1e-9);

        // Bit-for-bit reproducibility of the whole report.
        let again = compare_degree(&w, 20_000, 4, 99, 8).unwrap();
        assert_eq!(serde_json::to_string(&report).unwrap(), serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn compare_subtrees_smoke() {
        let w = WeightFunction::linear(1.0, 1.0).unwrap();
        let report = compare_subtrees(&w, 20_000, 4, 5, 3).unwrap();
        let singleton = report.rows.iter().find(|r| r.outcome == "0").unwrap();
        assert!((singleton.theory - 2.0 / 3.0).abs() < 1e-9);
        assert!((singleton.empirical - 2.0 / 3.0).abs() < 0.02);
        // The singleton's frequency is the degree-0 frequency, identically.
        let deg = compare_degree(&w, 20_000, 4, 5, 3).unwrap();
        assert_eq!(singleton.empirical, deg.rows[0].empirical);
        assert!(report.tv_distance < 0.02);
    }

    #[test]
    fn compare_ancestors_k0_reduces_to_subtrees() {
        let w = WeightFunction::linear(1.0, 1.0).unwrap();
        let anc = compare_ancestors(&w, 5_000, 2, 11, 0, 3).unwrap();
        let sub = compare_subtrees(&w, 5_000, 2, 11, 3).unwrap();
        // Marks at k = 0 are only the root, so the marked rows match the
        // subtree comparison one-for-one.
        for (a, s) in anc.marginal.rows.iter().zip(sub.rows.iter()) {
            assert_eq!(a.outcome, s.outcome);
            assert_eq!(a.empirical, s.empirical);
        }
        // Marked and marginal totals agree by aggregation.
        let marked_total: f64 = anc.marked.rows.iter().map(|r| r.empirical).sum();
        let marginal_total: f64 = anc.marginal.rows.iter().map(|r| r.empirical).sum();
        assert!((marked_total - marginal_total).abs() < 1e-12);
    }

    #[test]
    fn compare_ancestors_marks_counted_exactly_equal() {
        // Every occurrence of a shape as a k-ancestor subtree counts once
        // per mark position, so mark-conditional counts are exactly equal
        // and the uniformity χ² is identically zero.
        let w = WeightFunction::linear(1.0, 1.0).unwrap();
        let anc = compare_ancestors(&w, 10_000, 2, 17, 1, 4).unwrap();
        assert!(!anc.mark_uniformity.is_empty());
        for (code, chi) in &anc.mark_uniformity {
            if let Some(c) = chi {
                assert!(c.statistic < 1e-9, "shape {code}: chi2 {}", c.statistic);
                assert!(c.p_value > 0.999);
            }
        }
    }

    #[test]
    fn gamma_theta_check_smoke() {
        let check = gamma_theta_check(1.0, 1.0, 2_000, 200, 5).unwrap();
        assert!((check.gamma_shape - 0.5).abs() < 1e-12);
        assert!((check.lambda_star - 2.0).abs() < 1e-10);
        assert!((check.kappa - 1.0).abs() < 1e-10);
        assert!(check.sample_mean > 0.5 && check.sample_mean < 1.5);
        assert!(check.p_value >= 0.0 && check.p_value <= 1.0);
        assert!(check.ks_statistic > 0.0);
    }

    #[test]
    fn report_csv_shape() {
        let w = WeightFunction::constant(2.0).unwrap();
        let report = compare_degree(&w, 1_000, 2, 3, 2).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "outcome,theory,empirical,stderr");
        assert!(text.lines().count() == 1 + report.rows.len());
        assert!(text.contains("\"tail\""));
    }
}
