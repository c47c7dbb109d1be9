//! Finite rooted ordered trees in Neveu notation: a tree is a set of integer
//! sequences closed under taking parents and left siblings, the root being
//! the empty sequence. Labels sorted lexicographically are exactly preorder,
//! so the canonical code of a tree is its child-count sequence in label
//! order.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use thiserror::Error;

use crate::weight::{WeightError, WeightFunction};

/// Default cap on |G| for history enumeration (the number of historical
/// orderings grows factorially).
pub const DEFAULT_ENUM_CAP: usize = 10;

/// Cap on `trees_up_to`: Catalan growth makes larger generations pointless.
pub const MAX_TREES_SIZE: usize = 12;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("label set has no root")]
    MissingRoot,
    #[error("label {label} has no parent in the set")]
    MissingParent { label: VertexLabel },
    #[error("label {label} has no left sibling in the set")]
    MissingLeftSibling { label: VertexLabel },
    #[error("vertex {label} is not in the tree")]
    VertexAbsent { label: VertexLabel },
    #[error("label {label} is too shallow for ancestor level {n}")]
    TooShallow { label: VertexLabel, n: usize },
    #[error("size {size} exceeds the cap {cap}")]
    TooLarge { size: usize, cap: usize },
    #[error("invalid canonical code: {0}")]
    BadCode(String),
    #[error("mark {label} is not in generation {k} of the tree")]
    InvalidMark { label: VertexLabel, k: usize },
    #[error(transparent)]
    Weight(#[from] WeightError),
}

/// A vertex of the infinite Ulam–Harris tree: the root is the empty
/// sequence, and `x·n` is the n-th child of `x` (entries are 1-based).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct VertexLabel(Vec<u32>);

impl VertexLabel {
    pub fn root() -> Self {
        VertexLabel(Vec::new())
    }

    /// Builds a label from path entries; every entry must be ≥ 1.
    pub fn new(path: Vec<u32>) -> Result<Self, TreeError> {
        if path.contains(&0) {
            return Err(TreeError::BadCode("label entries are 1-based".into()));
        }
        Ok(VertexLabel(path))
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    /// Generation |x| = path length.
    pub fn generation(&self) -> usize {
        self.0.len()
    }

    pub fn path(&self) -> &[u32] {
        &self.0
    }

    /// The n-th child label x·n (1-based).
    pub fn child(&self, n: u32) -> Self {
        let mut path = self.0.clone();
        path.push(n);
        VertexLabel(path)
    }

    /// Drops the last `n` coordinates.
    pub fn ancestor(&self, n: usize) -> Result<Self, TreeError> {
        if self.0.len() < n {
            return Err(TreeError::TooShallow { label: self.clone(), n });
        }
        Ok(VertexLabel(self.0[..self.0.len() - n].to_vec()))
    }

    pub fn parent(&self) -> Option<Self> {
        (!self.is_root()).then(|| VertexLabel(self.0[..self.0.len() - 1].to_vec()))
    }

    /// The last `k` coordinates: the label this vertex gets inside the
    /// subtree rooted at its k-th ancestor.
    pub fn suffix(&self, k: usize) -> Result<Self, TreeError> {
        if self.0.len() < k {
            return Err(TreeError::TooShallow { label: self.clone(), n: k });
        }
        Ok(VertexLabel(self.0[self.0.len() - k..].to_vec()))
    }

    fn is_prefix_of(&self, other: &VertexLabel) -> bool {
        other.0.len() >= self.0.len() && other.0[..self.0.len()] == self.0[..]
    }
}

impl fmt::Display for VertexLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "root");
        }
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ".")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

/// Canonical code of an ordered tree: child counts in preorder.
/// Serialized as comma-separated counts, e.g. `1,1,0` for the path of
/// length 3 and `2,0,0` for the cherry.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct TreeCode(pub Vec<u32>);

impl fmt::Display for TreeCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for TreeCode {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let counts = s
            .split(',')
            .map(|p| p.trim().parse::<u32>().map_err(|_| TreeError::BadCode(s.into())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TreeCode(counts))
    }
}

/// A finite rooted ordered tree. Labels are kept sorted, which is preorder;
/// `child_counts` is aligned with `labels` and equals the canonical code.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct OrderedTree {
    labels: Vec<VertexLabel>,
    child_counts: Vec<u32>,
}

impl OrderedTree {
    pub fn singleton() -> Self {
        OrderedTree { labels: vec![VertexLabel::root()], child_counts: vec![0] }
    }

    /// Validates a label set against the closure rules and builds the tree.
    pub fn validate<I>(labels: I) -> Result<Self, TreeError>
    where
        I: IntoIterator<Item = VertexLabel>,
    {
        let set: BTreeSet<VertexLabel> = labels.into_iter().collect();
        if !set.contains(&VertexLabel::root()) {
            return Err(TreeError::MissingRoot);
        }
        for label in &set {
            if let Some(parent) = label.parent() {
                if !set.contains(&parent) {
                    return Err(TreeError::MissingParent { label: label.clone() });
                }
                let last = *label.path().last().expect("non-root");
                if last > 1 {
                    let mut sib = label.path().to_vec();
                    *sib.last_mut().expect("non-root") = last - 1;
                    if !set.contains(&VertexLabel(sib)) {
                        return Err(TreeError::MissingLeftSibling { label: label.clone() });
                    }
                }
            }
        }
        let labels: Vec<VertexLabel> = set.into_iter().collect();
        let mut child_counts = vec![0u32; labels.len()];
        for label in &labels {
            if let Some(parent) = label.parent() {
                let idx = labels.binary_search(&parent).expect("parent-closed");
                child_counts[idx] += 1;
            }
        }
        Ok(OrderedTree { labels, child_counts })
    }

    /// Rebuilds a tree from its canonical code.
    pub fn decode(code: &TreeCode) -> Result<Self, TreeError> {
        if code.0.is_empty() {
            return Err(TreeError::BadCode("empty code".into()));
        }
        let mut labels = vec![VertexLabel::root()];
        // (label, children spawned so far, children total)
        let mut stack = vec![(VertexLabel::root(), 0u32, code.0[0])];
        let mut pos = 1usize;
        while let Some(top) = stack.last_mut() {
            if top.1 == top.2 {
                stack.pop();
                continue;
            }
            top.1 += 1;
            let child = top.0.child(top.1);
            let count = *code
                .0
                .get(pos)
                .ok_or_else(|| TreeError::BadCode(format!("code `{code}` ends early")))?;
            pos += 1;
            labels.push(child.clone());
            stack.push((child, 0, count));
        }
        if pos != code.0.len() {
            return Err(TreeError::BadCode(format!("code `{code}` has trailing entries")));
        }
        Ok(OrderedTree { labels, child_counts: code.0.clone() })
    }

    /// Builds a tree from a birth-ordered parent array (`parents[i] < i`,
    /// root entry ignored); each vertex becomes the next child of its parent.
    pub fn from_parents(parents: &[usize]) -> Self {
        assert!(!parents.is_empty());
        let n = parents.len();
        let mut labels: Vec<VertexLabel> = Vec::with_capacity(n);
        let mut counts_by_birth = vec![0u32; n];
        labels.push(VertexLabel::root());
        for i in 1..n {
            let p = parents[i];
            assert!(p < i, "parents must precede children in birth order");
            counts_by_birth[p] += 1;
            labels.push(labels[p].child(counts_by_birth[p]));
        }
        let mut pairs: Vec<(VertexLabel, u32)> =
            labels.into_iter().zip(counts_by_birth).collect();
        pairs.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let (labels, child_counts) = pairs.into_iter().unzip();
        OrderedTree { labels, child_counts }
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    /// Labels in preorder (= lexicographic order).
    pub fn labels(&self) -> &[VertexLabel] {
        &self.labels
    }

    pub fn code(&self) -> TreeCode {
        TreeCode(self.child_counts.clone())
    }

    pub fn contains(&self, x: &VertexLabel) -> bool {
        self.labels.binary_search(x).is_ok()
    }

    pub fn index_of(&self, x: &VertexLabel) -> Option<usize> {
        self.labels.binary_search(x).ok()
    }

    /// Number of children of `x`.
    pub fn degree_of(&self, x: &VertexLabel) -> Result<u32, TreeError> {
        self.index_of(x)
            .map(|i| self.child_counts[i])
            .ok_or_else(|| TreeError::VertexAbsent { label: x.clone() })
    }

    /// Vertices of generation `n`, in lexicographic order.
    pub fn generation(&self, n: usize) -> Vec<VertexLabel> {
        self.labels.iter().filter(|l| l.generation() == n).cloned().collect()
    }

    pub fn depth(&self) -> usize {
        self.labels.iter().map(|l| l.generation()).max().unwrap_or(0)
    }

    /// The progeny of `x`, re-rooted at the empty label.
    pub fn subtree_at(&self, x: &VertexLabel) -> Result<OrderedTree, TreeError> {
        let start = self
            .index_of(x)
            .ok_or_else(|| TreeError::VertexAbsent { label: x.clone() })?;
        // Preorder keeps a subtree contiguous.
        let mut end = start + 1;
        while end < self.labels.len() && x.is_prefix_of(&self.labels[end]) {
            end += 1;
        }
        let k = x.generation();
        let labels = self.labels[start..end]
            .iter()
            .map(|l| VertexLabel(l.path()[k..].to_vec()))
            .collect();
        Ok(OrderedTree { labels, child_counts: self.child_counts[start..end].to_vec() })
    }

    /// Subtree size at each vertex, aligned with `labels()`.
    pub fn subtree_sizes(&self) -> Vec<usize> {
        let n = self.labels.len();
        let mut sizes = vec![1usize; n];
        // Preorder: a subtree is the contiguous run of descendants.
        for i in (0..n).rev() {
            let mut j = i + 1;
            while j < n && self.labels[i].is_prefix_of(&self.labels[j]) {
                j += sizes[j];
            }
            sizes[i] = j - i;
        }
        sizes
    }

    /// Total weight W(G) = Σ_x ω(deg(x, G)).
    pub fn total_weight(&self, w: &WeightFunction) -> Result<f64, TreeError> {
        let mut total = 0.0;
        for &c in &self.child_counts {
            total += w.eval(c as usize)?;
        }
        Ok(total)
    }

    /// All historical orderings with their weight sequences.
    pub fn enumerate_histories(
        &self,
        w: &WeightFunction,
        cap: usize,
    ) -> Result<Vec<History>, TreeError> {
        if self.size() > cap {
            return Err(TreeError::TooLarge { size: self.size(), cap });
        }
        let mut out = Vec::new();
        self.visit_histories(w, &mut |order, totals, attach| {
            out.push(History {
                order: order.iter().map(|&i| self.labels[i].clone()).collect(),
                total_weights: totals.to_vec(),
                attach_weights: attach.to_vec(),
            });
        })?;
        Ok(out)
    }

    /// Walks every historical ordering, handing the visitor the order (as
    /// indices into `labels()`), the running total weights W(G,s,i) for
    /// i = 0..|G| and the attachment weights w(G,s,i) for i = 1..|G|.
    pub(crate) fn visit_histories<F>(
        &self,
        w: &WeightFunction,
        visit: &mut F,
    ) -> Result<(), TreeError>
    where
        F: FnMut(&[usize], &[f64], &[f64]),
    {
        let n = self.size();
        let parent_idx: Vec<Option<usize>> = self
            .labels
            .iter()
            .map(|l| l.parent().map(|p| self.index_of(&p).expect("parent-closed")))
            .collect();
        let left_sibling_idx: Vec<Option<usize>> = self
            .labels
            .iter()
            .map(|l| {
                let last = *l.path().last()?;
                if last <= 1 {
                    return None;
                }
                let mut sib = l.path().to_vec();
                *sib.last_mut().expect("non-root") = last - 1;
                Some(self.index_of(&VertexLabel(sib)).expect("sibling-closed"))
            })
            .collect();

        // Weight increments are precomputed per vertex degree transition.
        let omega: Vec<f64> =
            (0..n).map(|d| w.eval(d)).collect::<Result<Vec<_>, _>>()?;

        struct Dfs<'a, F> {
            parent_idx: &'a [Option<usize>],
            left_sibling_idx: &'a [Option<usize>],
            omega: &'a [f64],
            added: Vec<bool>,
            deg: Vec<usize>,
            order: Vec<usize>,
            totals: Vec<f64>,
            attach: Vec<f64>,
            visit: &'a mut F,
            n: usize,
        }

        impl<F: FnMut(&[usize], &[f64], &[f64])> Dfs<'_, F> {
            fn run(&mut self) {
                if self.order.len() == self.n {
                    (self.visit)(&self.order, &self.totals, &self.attach);
                    return;
                }
                for v in 1..self.n {
                    if self.added[v] {
                        continue;
                    }
                    let p = self.parent_idx[v].expect("non-root");
                    if !self.added[p] {
                        continue;
                    }
                    if let Some(s) = self.left_sibling_idx[v] {
                        if !self.added[s] {
                            continue;
                        }
                    }
                    // Attach v: its parent moves from degree d to d+1.
                    let d = self.deg[p];
                    let step_w = self.omega[d];
                    let new_total =
                        self.totals.last().unwrap() + self.omega[d + 1] - self.omega[d]
                            + self.omega[0];
                    self.added[v] = true;
                    self.deg[p] += 1;
                    self.order.push(v);
                    self.totals.push(new_total);
                    self.attach.push(step_w);
                    self.run();
                    self.attach.pop();
                    self.totals.pop();
                    self.order.pop();
                    self.deg[p] -= 1;
                    self.added[v] = false;
                }
            }
        }

        let mut dfs = Dfs {
            parent_idx: &parent_idx,
            left_sibling_idx: &left_sibling_idx,
            omega: &omega,
            added: {
                let mut a = vec![false; n];
                a[0] = true;
                a
            },
            deg: vec![0; n],
            order: vec![0],
            totals: vec![omega[0]],
            attach: Vec::new(),
            visit,
            n,
        };
        dfs.run();
        Ok(())
    }

    /// |ord(G)| in exact integer arithmetic:
    /// (|G|−2)! · Π_{x≠root} a(x)⁻¹ b(x)⁻¹ with a(x) = max(|G↓x|−1, 1) and
    /// b(x) = max(Σ_{y later sibling of x} |G↓y|, 1).
    pub fn count_histories(&self) -> BigUint {
        let n = self.size();
        if n <= 1 {
            return BigUint::from(1u32);
        }
        let sizes = self.subtree_sizes();
        let mut numerator = BigUint::from(1u32);
        for m in 1..=n.saturating_sub(2) {
            numerator *= BigUint::from(m);
        }
        let mut denominator = BigUint::from(1u32);
        for (i, label) in self.labels.iter().enumerate() {
            if label.is_root() {
                continue;
            }
            let a = sizes[i].saturating_sub(1).max(1);
            let last = *label.path().last().expect("non-root");
            let parent = label.parent().expect("non-root");
            let parent_deg =
                self.child_counts[self.index_of(&parent).expect("parent-closed")];
            let mut later: usize = 0;
            for sib in last + 1..=parent_deg {
                let idx =
                    self.index_of(&parent.child(sib)).expect("sibling-closed");
                later += sizes[idx];
            }
            let b = later.max(1);
            denominator *= BigUint::from(a) * BigUint::from(b);
        }
        debug_assert!(
            (&numerator % &denominator) == BigUint::from(0u32),
            "count formula must divide exactly"
        );
        numerator / denominator
    }
}

/// A tree with one vertex of generation `k` marked.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MarkedTree {
    tree: OrderedTree,
    mark: VertexLabel,
}

impl MarkedTree {
    pub fn new(tree: OrderedTree, mark: VertexLabel) -> Result<Self, TreeError> {
        if !tree.contains(&mark) {
            return Err(TreeError::InvalidMark { label: mark, k: 0 });
        }
        Ok(MarkedTree { tree, mark })
    }

    pub fn tree(&self) -> &OrderedTree {
        &self.tree
    }

    pub fn mark(&self) -> &VertexLabel {
        &self.mark
    }

    /// Generation of the mark.
    pub fn k(&self) -> usize {
        self.mark.generation()
    }
}

/// One historical ordering of a tree: the birth order together with the
/// running total weights and per-step attachment weights.
#[derive(Clone, Debug)]
pub struct History {
    /// s_0 .. s_{|G|−1}; s_0 is the root.
    pub order: Vec<VertexLabel>,
    /// W(G,s,i) for i = 0..|G|−1 (weight of each prefix tree).
    pub total_weights: Vec<f64>,
    /// w(G,s,i) for i = 1..|G|−1: the jump rate into each prefix.
    pub attach_weights: Vec<f64>,
}

/// Every ordered tree of size ≤ n, keyed and ordered by canonical code.
/// Counts per size follow the Catalan numbers.
pub fn trees_up_to(n: usize) -> Result<Vec<OrderedTree>, TreeError> {
    if n > MAX_TREES_SIZE {
        return Err(TreeError::TooLarge { size: n, cap: MAX_TREES_SIZE });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // codes[s] = canonical codes of all trees with s vertices
    let mut codes: Vec<Vec<Vec<u32>>> = vec![Vec::new(); n + 1];
    // forests[s] = (root degree contribution, concatenated code) for ordered
    // forests with s vertices total
    let mut forests: Vec<Vec<(u32, Vec<u32>)>> = vec![Vec::new(); n];
    if n >= 1 {
        codes[1] = vec![vec![0]];
    }
    forests[0] = vec![(0, Vec::new())];
    for s in 1..n {
        // forests of total size s: first tree of size j, rest of size s−j
        let mut fs = Vec::new();
        for j in 1..=s {
            for tree_code in &codes[j] {
                for (cnt, rest) in &forests[s - j] {
                    let mut code = tree_code.clone();
                    code.extend_from_slice(rest);
                    fs.push((cnt + 1, code));
                }
            }
        }
        forests[s] = fs;
        // a tree of size s+1 is a root above a forest of size s
        codes[s + 1] = forests[s]
            .iter()
            .map(|(cnt, rest)| {
                let mut code = Vec::with_capacity(rest.len() + 1);
                code.push(*cnt);
                code.extend_from_slice(rest);
                code
            })
            .collect();
    }
    let mut out = Vec::new();
    for s in 1..=n {
        let mut size_codes = std::mem::take(&mut codes[s]);
        size_codes.sort_unstable();
        size_codes.dedup();
        for code in size_codes {
            out.push(OrderedTree::decode(&TreeCode(code))?);
        }
    }
    Ok(out)
}
