//! Seeded growth of the random tree, O(log n) per attachment.
//!
//! Discrete and continuous time share the same jump chain: continuous mode
//! only adds exponential holding times at the current total weight, drawn
//! from a separate stream so matched seeds give identical attachment
//! sequences in both modes.

use std::collections::BTreeMap;
use std::io;

use rand::{RngExt, SeedableRng};
use rand_distr::{Distribution, Exp1};
use rand_pcg::Pcg64;
use serde::Serialize;

use crate::fenwick::FenwickTree;
use crate::malthus::{kappa, MalthusError};
use crate::tree::{OrderedTree, TreeCode};
use crate::weight::{WeightError, WeightFunction};

/// Exact weight-index rebuild cadence, cancelling floating-point drift.
const REBUILD_INTERVAL: u64 = 1 << 20;

/// Derives an independent 64-bit stream key from a base seed and a lane
/// index (SplitMix64 finalizer over `seed ^ lane·φ64`). Run r of a
/// multi-run experiment uses lane r; the growth state itself draws its
/// attachment and holding-time streams from two reserved lanes.
pub fn derive_stream(seed: u64, lane: u64) -> u64 {
    let mut z = seed ^ lane.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const ATTACH_LANE: u64 = 0xA77AC4;
const HOLDING_LANE: u64 = 0x401D1;

/// Live growth state: birth-ordered parent array, per-vertex child counts
/// and weights, the sampling index, and (in continuous mode) birth times.
#[derive(Clone, Debug)]
pub struct GrowthState {
    weight: WeightFunction,
    omega0: f64,
    parents: Vec<u32>,
    child_count: Vec<u32>,
    vertex_weight: Vec<f64>,
    index: FenwickTree,
    birth_times: Vec<f64>,
    attach_rng: Pcg64,
    holding_rng: Pcg64,
    steps_since_rebuild: u64,
    seed: u64,
}

/// Single root, weight ω(0), T₀ = 0.
pub fn init_growth(w: &WeightFunction, seed: u64) -> Result<GrowthState, WeightError> {
    let w0 = w.eval(0)?;
    let mut index = FenwickTree::new();
    index.push(w0);
    Ok(GrowthState {
        weight: w.clone(),
        omega0: w0,
        parents: vec![0],
        child_count: vec![0],
        vertex_weight: vec![w0],
        index,
        birth_times: vec![0.0],
        attach_rng: Pcg64::seed_from_u64(derive_stream(seed, ATTACH_LANE)),
        holding_rng: Pcg64::seed_from_u64(derive_stream(seed, HOLDING_LANE)),
        steps_since_rebuild: 0,
        seed,
    })
}

impl GrowthState {
    pub fn n_vertices(&self) -> usize {
        self.parents.len()
    }

    /// Parent birth index per vertex; entry 0 is the root and refers to
    /// itself.
    pub fn parents(&self) -> &[u32] {
        &self.parents
    }

    pub fn child_counts(&self) -> &[u32] {
        &self.child_count
    }

    /// Birth times T₀ = 0, T₁, …; length 1 until continuous growth runs.
    pub fn birth_times(&self) -> &[f64] {
        &self.birth_times
    }

    pub fn has_birth_times(&self) -> bool {
        self.birth_times.len() == self.parents.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// W(G) = Σ_v ω(child_count[v]), read off the sampling index.
    pub fn total_weight(&self) -> f64 {
        self.index.total()
    }

    /// Attaches one vertex: samples the parent with probability
    /// ω(deg)/W(G), appends the child, and updates the index.
    pub fn attach_step(&mut self) -> Result<usize, WeightError> {
        let total = self.index.total();
        let target = self.attach_rng.random::<f64>() * total;
        let parent = self.index.search(target);

        let d = self.child_count[parent] as usize;
        let upgraded = self.weight.eval(d + 1)?;
        self.index.add(parent, upgraded - self.vertex_weight[parent]);
        self.vertex_weight[parent] = upgraded;
        self.child_count[parent] += 1;

        let born = self.parents.len();
        self.parents.push(parent as u32);
        self.child_count.push(0);
        self.vertex_weight.push(self.omega0);
        self.index.push(self.omega0);

        self.steps_since_rebuild += 1;
        if self.steps_since_rebuild >= REBUILD_INTERVAL {
            self.index.rebuild(&self.vertex_weight);
            self.steps_since_rebuild = 0;
        }
        Ok(born)
    }

    /// Runs `n_steps` attachments; birth times stay unset (discrete model).
    pub fn grow_discrete(&mut self, n_steps: usize) -> Result<(), WeightError> {
        for _ in 0..n_steps {
            self.attach_step()?;
        }
        Ok(())
    }

    /// Runs `n_steps` attachments with exponential holding times at rate
    /// W(G); the embedded jump chain is exactly the discrete model.
    pub fn grow_continuous(&mut self, n_steps: usize) -> Result<(), WeightError> {
        assert!(
            self.has_birth_times(),
            "continuous growth cannot resume a tree grown in discrete mode"
        );
        for _ in 0..n_steps {
            let rate = self.index.total();
            let dt = Distribution::<f64>::sample(&Exp1, &mut self.holding_rng) / rate;
            let t = self.birth_times.last().unwrap() + dt;
            self.attach_step()?;
            self.birth_times.push(t);
        }
        Ok(())
    }

    pub fn degree_histogram(&self) -> BTreeMap<u32, u64> {
        let mut hist = BTreeMap::new();
        for &c in &self.child_count {
            *hist.entry(c).or_insert(0) += 1;
        }
        hist
    }

    /// Largest relative deviation between the incremental prefix sums and
    /// an exact rebuild; drift control keeps this within 1e−9.
    pub fn weight_index_drift(&self) -> f64 {
        let mut exact = FenwickTree::with_capacity(self.vertex_weight.len());
        for _ in 0..self.vertex_weight.len() {
            exact.push(0.0);
        }
        exact.rebuild(&self.vertex_weight);
        let total = exact.total();
        let mut worst: f64 = 0.0;
        let step = (self.vertex_weight.len() / 64).max(1);
        for i in (0..self.vertex_weight.len()).step_by(step) {
            let diff = (self.index.prefix_sum(i) - exact.prefix_sum(i)).abs();
            worst = worst.max(diff / total.max(1.0));
        }
        worst =
            worst.max((self.index.total() - total).abs() / total.max(1.0));
        worst
    }

    /// Neveu-labelled copy of the tree; intended for small states.
    pub fn to_ordered_tree(&self) -> OrderedTree {
        let parents: Vec<usize> = self.parents.iter().map(|&p| p as usize).collect();
        OrderedTree::from_parents(&parents)
    }
}

/// One sample of the normalized growth statistic κ·λ*·e^(−λ*·T_n)·n, whose
/// mean approaches 1 (the growth constant Θ has unit mean).
pub fn theta_sample(
    w: &WeightFunction,
    lambda_star: f64,
    n_vertices: usize,
    seed: u64,
) -> Result<f64, MalthusError> {
    let kap = kappa(w, lambda_star, 1e-9)?;
    theta_sample_with_kappa(w, lambda_star, kap, n_vertices, seed)
}

/// As `theta_sample` with κ supplied, so batch callers solve it once.
pub fn theta_sample_with_kappa(
    w: &WeightFunction,
    lambda_star: f64,
    kap: f64,
    n_vertices: usize,
    seed: u64,
) -> Result<f64, MalthusError> {
    assert!(n_vertices >= 1);
    let mut state = init_growth(w, seed)?;
    state.grow_continuous(n_vertices - 1)?;
    let t_n = *state.birth_times.last().unwrap();
    Ok(kap * lambda_star * (-(lambda_star * t_n)).exp() * n_vertices as f64)
}

/// Histogram over canonical subtree codes, with everything above the size
/// cap lumped into `other`.
#[derive(Clone, Debug, Default)]
pub struct CodeHistogram {
    pub by_code: BTreeMap<TreeCode, u64>,
    pub other: u64,
}

impl CodeHistogram {
    pub fn total(&self) -> u64 {
        self.by_code.values().sum::<u64>() + self.other
    }
}

/// Histogram over (ancestor subtree code, preorder mark index) pairs for
/// one ancestor level k; `eligible` counts vertices of depth ≥ k.
#[derive(Clone, Debug, Default)]
pub struct MarkedHistogram {
    pub by_key: BTreeMap<(TreeCode, u32), u64>,
    pub other: u64,
    pub eligible: u64,
}

impl MarkedHistogram {
    pub fn total(&self) -> u64 {
        self.by_key.values().sum::<u64>() + self.other
    }
}

#[derive(Clone, Debug)]
pub struct CensusReport {
    pub n_vertices: u64,
    pub degree_hist: BTreeMap<u32, u64>,
    pub subtree_hist: CodeHistogram,
    pub ancestor_hists: BTreeMap<usize, MarkedHistogram>,
}

/// Single pass over a finished state: degree histogram, canonical codes of
/// all subtrees of size ≤ subtree_cap (larger ones lumped), and for each
/// requested k the (k-ancestor subtree code, mark) counts over vertices of
/// depth ≥ k.
pub fn census(state: &GrowthState, subtree_cap: usize, ancestor_ks: &[usize]) -> CensusReport {
    let parents = &state.parents;
    let n = parents.len();

    let mut children: Vec<Vec<u32>> = vec![Vec::new(); n];
    for v in 1..n {
        children[parents[v] as usize].push(v as u32);
    }
    let mut sizes = vec![1u32; n];
    for v in (1..n).rev() {
        sizes[parents[v] as usize] += sizes[v];
    }
    let mut depth = vec![0u32; n];
    for v in 1..n {
        depth[v] = depth[parents[v] as usize] + 1;
    }

    // Children are stored in birth order, which is exactly sibling order.
    let code_of = |root: usize| -> TreeCode {
        let mut code = Vec::with_capacity(sizes[root] as usize);
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            code.push(children[v].len() as u32);
            for &c in children[v].iter().rev() {
                stack.push(c as usize);
            }
        }
        TreeCode(code)
    };
    let preorder_rank_of = |root: usize, target: usize| -> u32 {
        let mut rank = 0u32;
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            if v == target {
                return rank;
            }
            rank += 1;
            for &c in children[v].iter().rev() {
                stack.push(c as usize);
            }
        }
        unreachable!("target must lie in the subtree of its ancestor");
    };

    let mut subtree_hist = CodeHistogram::default();
    for (v, &size) in sizes.iter().enumerate() {
        if size as usize <= subtree_cap {
            *subtree_hist.by_code.entry(code_of(v)).or_insert(0) += 1;
        } else {
            subtree_hist.other += 1;
        }
    }

    let mut ancestor_hists = BTreeMap::new();
    for &k in ancestor_ks {
        let mut hist = MarkedHistogram::default();
        for (v, &d) in depth.iter().enumerate() {
            if (d as usize) < k {
                continue;
            }
            hist.eligible += 1;
            let mut a = v;
            for _ in 0..k {
                a = parents[a] as usize;
            }
            if sizes[a] as usize <= subtree_cap {
                let key = (code_of(a), preorder_rank_of(a, v));
                *hist.by_key.entry(key).or_insert(0) += 1;
            } else {
                hist.other += 1;
            }
        }
        ancestor_hists.insert(k, hist);
    }

    CensusReport {
        n_vertices: n as u64,
        degree_hist: state.degree_histogram(),
        subtree_hist,
        ancestor_hists,
    }
}

#[derive(Serialize)]
struct TreeDumpRow<'a> {
    seed: u64,
    weight: &'a str,
    parents: Vec<Option<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    birth_times: Option<&'a [f64]>,
}

/// One JSON object per line: seed, weight spec, birth-ordered parents
/// (root entry null), and birth times when the state carries them.
pub fn write_jsonl<W: io::Write>(
    state: &GrowthState,
    weight_spec: &str,
    out: &mut W,
) -> io::Result<()> {
    let parents: Vec<Option<u32>> = state
        .parents
        .iter()
        .enumerate()
        .map(|(i, &p)| (i != 0).then_some(p))
        .collect();
    let row = TreeDumpRow {
        seed: state.seed,
        weight: weight_spec,
        parents,
        birth_times: state.has_birth_times().then_some(state.birth_times()),
    };
    serde_json::to_writer(&mut *out, &row)?;
    writeln!(out)
}
