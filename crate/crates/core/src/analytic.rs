//! The limiting subtree distribution π and its derived laws.
//!
//! π(G) sums λ*/(λ*+W(G)) · Π_i w(G,s,i+1)/(λ*+W(G,s,i)) over the
//! historical orderings s of G. The attach-weight product in the numerator
//! is the same for every s, so it is factored out and only the denominators
//! vary per history.

use std::collections::BTreeMap;
use std::io;

use num_rational::Rational64;
use thiserror::Error;

use crate::malthus::{solve_malthus, MalthusError};
use crate::tree::{trees_up_to, OrderedTree, TreeCode, TreeError, VertexLabel};
use crate::weight::{WeightError, WeightFunction};

/// Default enumeration cap shared by the π operations.
pub const DEFAULT_PI_CAP: usize = crate::tree::DEFAULT_ENUM_CAP;

#[derive(Debug, Error)]
pub enum AnalyticError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Malthus(#[from] MalthusError),
    #[error(transparent)]
    Weight(#[from] WeightError),
}

/// π restricted to trees of size ≤ max_size, keyed by canonical code.
#[derive(Clone, Debug)]
pub struct TreeDistribution {
    pub masses: BTreeMap<TreeCode, f64>,
    pub max_size: usize,
    /// Σ of the listed masses; the remaining 1 − covered_mass sits on
    /// larger trees.
    pub covered_mass: f64,
    pub lambda_star: f64,
}

impl TreeDistribution {
    /// CSV rows `"<code>",mass` under a comment header carrying λ* and the
    /// covered mass. Codes contain commas, so they are always quoted.
    pub fn write_csv<W: io::Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(
            out,
            "# lambda_star={:.12e} covered_mass={:.12e} max_size={}",
            self.lambda_star, self.covered_mass, self.max_size
        )?;
        writeln!(out, "canonical_code,mass")?;
        for (code, mass) in &self.masses {
            writeln!(out, "\"{code}\",{mass:.12e}")?;
        }
        Ok(())
    }
}

/// π(G): the limiting fraction of vertices whose progeny subtree equals G.
pub fn pi_mass(
    g: &OrderedTree,
    w: &WeightFunction,
    lambda_star: f64,
    cap: usize,
) -> Result<f64, AnalyticError> {
    if g.size() > cap {
        return Err(TreeError::TooLarge { size: g.size(), cap }.into());
    }
    let total = g.total_weight(w)?;
    // Shared numerator Π_x Π_{j<deg(x)} ω(j); identical across histories.
    let mut numerator = 1.0_f64;
    for &c in &g.code().0 {
        for j in 0..c as usize {
            numerator *= w.eval(j)?;
        }
    }
    let mut denom_sum = 0.0_f64;
    g.visit_histories(w, &mut |_, totals, _| {
        let mut prod = 1.0;
        for &wt in &totals[..totals.len() - 1] {
            prod *= lambda_star + wt;
        }
        denom_sum += 1.0 / prod;
    })?;
    Ok(lambda_star / (lambda_star + total) * numerator * denom_sum)
}

/// π over every tree of size ≤ max_size. λ* is solved internally.
pub fn pi_table(w: &WeightFunction, max_size: usize) -> Result<TreeDistribution, AnalyticError> {
    if max_size > DEFAULT_PI_CAP {
        return Err(TreeError::TooLarge { size: max_size, cap: DEFAULT_PI_CAP }.into());
    }
    let lambda_star = solve_malthus(w, 1e-12)?.lambda_star;
    let mut masses = BTreeMap::new();
    let mut covered = 0.0;
    for t in trees_up_to(max_size)? {
        let mass = pi_mass(&t, w, lambda_star, max_size)?;
        covered += mass;
        masses.insert(t.code(), mass);
    }
    Ok(TreeDistribution { masses, max_size, covered_mass: covered, lambda_star })
}

/// Closed-form π(G) for ω(k) = k + β:
/// |ord(G)| · Π_x (deg(x)−1+β)^(deg(x)) / ((1+β)^n · (n+2−1/(1+β))^(n+1))
/// with n = |G|−1 and falling-factorial powers.
pub fn pi_linear(g: &OrderedTree, beta: f64) -> f64 {
    assert!(beta > 0.0, "pi_linear needs beta > 0");
    use crate::malthus::falling_factorial;
    let n = g.size() - 1;
    let orderings = u64::try_from(&g.count_histories())
        .expect("history count fits u64 for enumerable trees") as f64;
    let mut num = 1.0_f64;
    for &c in &g.code().0 {
        let d = c as usize;
        num *= falling_factorial(d as f64 - 1.0 + beta, d);
    }
    let denom = (1.0 + beta).powi(n as i32)
        * falling_factorial(n as f64 + 2.0 - 1.0 / (1.0 + beta), n + 1);
    orderings * num / denom
}

/// Limit of the fraction of vertices whose k-th ancestor's progeny is G:
/// the size-biased mass π(G)·|generation k of G|.
pub fn ancestor_subtree_mass(
    g: &OrderedTree,
    k: usize,
    w: &WeightFunction,
    lambda_star: f64,
    cap: usize,
) -> Result<f64, AnalyticError> {
    let gen_size = g.generation(k).len() as f64;
    if gen_size == 0.0 {
        return Ok(0.0);
    }
    Ok(pi_mass(g, w, lambda_star, cap)? * gen_size)
}

/// π^(k)(G, u) = π(G) for any mark u in generation k of G.
pub fn marked_pi(
    g: &OrderedTree,
    u: &VertexLabel,
    k: usize,
    w: &WeightFunction,
    lambda_star: f64,
    cap: usize,
) -> Result<f64, AnalyticError> {
    if u.generation() != k || !g.contains(u) {
        return Err(TreeError::InvalidMark { label: u.clone(), k }.into());
    }
    pi_mass(g, w, lambda_star, cap)
}

/// Exact census check behind steadiness, in rational arithmetic.
///
/// For μ(G) = #{x ∈ G0 : G0↓x = G}/|G0|, every occurrence of G as a progeny
/// subtree — except the whole tree, which sits at the root — is the
/// first-generation subtree of exactly one parent occurrence, so
/// Σ_H μ(H)·#{x ∈ gen₁(H) : H↓x = G} = μ(G) − 1{G = G0}/|G0| holds exactly.
pub fn steadiness_exact(g0: &OrderedTree) -> bool {
    let n = g0.size() as i64;
    let mut counts: BTreeMap<TreeCode, i64> = BTreeMap::new();
    let mut reps: BTreeMap<TreeCode, OrderedTree> = BTreeMap::new();
    for x in g0.labels() {
        let sub = g0.subtree_at(x).expect("labels are in the tree");
        let code = sub.code();
        *counts.entry(code.clone()).or_insert(0) += 1;
        reps.entry(code).or_insert(sub);
    }
    let whole = g0.code();
    for (gcode, &gcnt) in &counts {
        let mut lhs = Rational64::new(0, 1);
        for (hcode, &hcnt) in &counts {
            let h = &reps[hcode];
            let m = h
                .generation(1)
                .iter()
                .filter(|x| h.subtree_at(x).expect("in tree").code() == *gcode)
                .count() as i64;
            if m > 0 {
                lhs += Rational64::new(hcnt * m, n);
            }
        }
        let mut rhs = Rational64::new(gcnt, n);
        if *gcode == whole {
            rhs -= Rational64::new(1, n);
        }
        if lhs != rhs {
            return false;
        }
    }
    true
}

#[derive(Clone, Copy, Debug)]
pub struct SteadinessResidual {
    /// Σ_{|H| ≤ |G|+extra} π(H)·#{x ∈ gen₁(H) : H↓x = G}
    pub lhs_partial: f64,
    /// π(G), the steady-state target the partial sums increase towards.
    pub target: f64,
}

/// Truncated steadiness identity for the limit law π.
pub fn steadiness_residual(
    w: &WeightFunction,
    lambda_star: f64,
    g: &OrderedTree,
    extra: usize,
    cap: usize,
) -> Result<SteadinessResidual, AnalyticError> {
    let max_size = g.size() + extra;
    if max_size > cap {
        return Err(TreeError::TooLarge { size: max_size, cap }.into());
    }
    let target = pi_mass(g, w, lambda_star, cap)?;
    let gcode = g.code();
    let mut lhs = 0.0;
    for h in trees_up_to(max_size)? {
        if h.size() <= g.size() {
            continue;
        }
        let m = h
            .generation(1)
            .iter()
            .filter(|x| h.subtree_at(x).expect("in tree").code() == gcode)
            .count();
        if m > 0 {
            lhs += pi_mass(&h, w, lambda_star, cap)? * m as f64;
        }
    }
    Ok(SteadinessResidual { lhs_partial: lhs, target })
}
