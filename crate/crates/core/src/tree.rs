//! Greedy CART growth with penalized split selection.
//!
//! Growth is depth first, left child before right. Each node that may split
//! draws `mtry` candidate features from the tree's random stream and commits
//! the best penalized split. A committed feature joins the used set at once,
//! so every later node, in this tree or in later trees sharing the set, sees
//! it as used.
//!
//! Internally each feature keeps the node's sample positions sorted by value.
//! Splitting a node stably partitions every feature's segment, so no node ever
//! re-sorts.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::rng::Stream;
use crate::split::{
    beats, scan_classification, scan_regression, GainPenalty, NodeStats, SplitCandidate, TargetRef, UsedSet,
    GAIN_TIE_TOLERANCE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowConfig {
    /// Candidate features drawn at each node.
    pub mtry: usize,
    /// Nodes with fewer than `2 * min_node_size` samples become leaves.
    pub min_node_size: usize,
    /// Depth at which nodes become leaves; the root has depth 1.
    pub max_depth: Option<usize>,
    /// Penalize new features by `lambda^depth` instead of `lambda`.
    pub depth_penalty: bool,
}

impl GrowConfig {
    /// Unlimited depth, `min_node_size` 5 for regression and 1 for
    /// classification.
    pub fn new(mtry: usize, task: crate::data::Task) -> Self {
        Self {
            mtry,
            min_node_size: default_min_node_size(task),
            max_depth: None,
            depth_penalty: false,
        }
    }

    pub fn validate(&self, n_features: usize) -> crate::Result<()> {
        if self.mtry == 0 || self.mtry > n_features {
            return Err(crate::Error::Config(format!(
                "mtry {} outside [1, {n_features}]",
                self.mtry
            )));
        }
        if self.min_node_size == 0 {
            return Err(crate::Error::Config("min_node_size must be at least 1".into()));
        }
        if self.max_depth == Some(0) {
            return Err(crate::Error::Config("max_depth must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn default_min_node_size(task: crate::data::Task) -> usize {
    match task {
        crate::data::Task::Regression => 5,
        crate::data::Task::Classification => 1,
    }
}

/// A tree node. Every node records its sample count and the prediction it
/// would make as a leaf (mean, or majority class code with ties to the lower
/// code); internal nodes also carry their split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub samples: usize,
    pub prediction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Box<Split>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Unpenalized gain of the split.
    pub gain: f64,
    /// Gain as compared during the search, after penalization.
    pub penalized_gain: f64,
    pub left: Node,
    pub right: Node,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }

    pub fn leaf(samples: usize, prediction: f64) -> Self {
        Self {
            samples,
            prediction,
            split: None,
        }
    }

    /// Depth-first (left first) iterator over the subtree's nodes.
    pub fn iter(&self) -> NodeIter<'_> {
        NodeIter { stack: vec![self] }
    }
}

pub struct NodeIter<'a> {
    stack: Vec<&'a Node>,
}

impl<'a> Iterator for NodeIter<'a> {
    type Item = &'a Node;

    fn next(&mut self) -> Option<&'a Node> {
        let node = self.stack.pop()?;
        if let Some(s) = &node.split {
            self.stack.push(&s.right);
            self.stack.push(&s.left);
        }
        Some(node)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub root: Node,
    /// Per-feature sum of the raw gains of this tree's splits.
    pub gain_totals: Vec<f64>,
}

impl Tree {
    /// Route `row` down the tree (`<=` goes left) and return the leaf's
    /// prediction.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.leaf_for(row).prediction
    }

    pub fn leaf_for(&self, row: &[f64]) -> &Node {
        let mut node = &self.root;
        while let Some(s) = &node.split {
            node = if row[s.feature] <= s.threshold {
                &s.left
            } else {
                &s.right
            };
        }
        node
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Node> {
        self.root.iter().filter(|n| n.is_leaf())
    }

    pub fn n_nodes(&self) -> usize {
        self.root.iter().count()
    }

    pub fn depth(&self) -> usize {
        fn depth(n: &Node) -> usize {
            match &n.split {
                None => 1,
                Some(s) => 1 + depth(&s.left).max(depth(&s.right)),
            }
        }
        depth(&self.root)
    }

    /// Features split on at least once.
    pub fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .root
            .iter()
            .filter_map(|n| n.split.as_ref().map(|s| s.feature))
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        de.disable_recursion_limit();
        let tree = Tree::deserialize(&mut de)?;
        de.end()?;
        Ok(tree)
    }
}

/// Penalization state for growing one tree.
pub enum TreePenalty<'a> {
    /// Unpenalized CART; no used set is kept.
    Off,
    Regularized {
        lambdas: &'a [f64],
        used: &'a mut UsedSet,
    },
}

/// Row order of every feature, sorted by value (ties by row index). Shared by
/// all trees grown on the same dataset.
#[derive(Debug, Clone)]
pub struct Presort {
    order: Vec<Vec<u32>>,
}

impl Presort {
    pub fn new(data: &Dataset) -> Self {
        let n = data.n_rows();
        let order = (0..data.n_features())
            .map(|f| {
                let x = data.column(f);
                let mut rows: Vec<u32> = (0..n as u32).collect();
                rows.sort_by(|&a, &b| x[a as usize].total_cmp(&x[b as usize]));
                rows
            })
            .collect();
        Self { order }
    }
}

/// Grow one tree on `rows` (repeats allowed, as in a bootstrap sample).
pub fn grow_tree(
    data: &Dataset,
    rows: &[usize],
    config: &GrowConfig,
    penalty: TreePenalty<'_>,
    rng: &mut Stream,
) -> Tree {
    grow_tree_presorted(data, &Presort::new(data), rows, config, penalty, rng)
}

pub(crate) fn grow_tree_presorted(
    data: &Dataset,
    presort: &Presort,
    rows: &[usize],
    config: &GrowConfig,
    penalty: TreePenalty<'_>,
    rng: &mut Stream,
) -> Tree {
    assert!(!rows.is_empty(), "grow_tree on an empty sample");
    let p = data.n_features();
    assert!(config.mtry >= 1 && config.mtry <= p, "mtry outside [1, p]");
    let (lambdas, used) = match penalty {
        TreePenalty::Off => (None, None),
        TreePenalty::Regularized { lambdas, used } => {
            assert_eq!(lambdas.len(), p, "one lambda per feature");
            (Some(lambdas), Some(used))
        }
    };
    let mut grower = Grower::new(data, presort, rows, config, lambdas, used, rng);
    let root = grower.grow(0, rows.len(), 1);
    Tree {
        root,
        gain_totals: grower.gain_totals,
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Entry {
    x: f64,
    pos: u32,
}

struct Grower<'a, 'r> {
    data: &'a Dataset,
    target: TargetRef<'a>,
    config: &'a GrowConfig,
    lambdas: Option<&'a [f64]>,
    used: Option<&'r mut UsedSet>,
    rng: &'r mut Stream,
    /// Sample position -> dataset row.
    sample_rows: Vec<usize>,
    /// Target value per sample position (regression) or class code.
    sample_y: Vec<f64>,
    sample_codes: Vec<u32>,
    /// Per feature, `(value, sample position)` sorted by value within each
    /// node segment.
    sorted: Vec<Vec<Entry>>,
    /// Sample positions in sample order within each node segment.
    natural: Vec<u32>,
    goes_left: Vec<bool>,
    buf: Vec<u32>,
    entry_buf: Vec<Entry>,
    pool: Vec<usize>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    codes: Vec<u32>,
    class_scratch: Vec<usize>,
    gain_totals: Vec<f64>,
}

impl<'a, 'r> Grower<'a, 'r> {
    fn new(
        data: &'a Dataset,
        presort: &Presort,
        rows: &[usize],
        config: &'a GrowConfig,
        lambdas: Option<&'a [f64]>,
        used: Option<&'r mut UsedSet>,
        rng: &'r mut Stream,
    ) -> Self {
        let n_rows = data.n_rows();
        let n_samples = rows.len();
        let target = TargetRef::from(data.target());

        // Positions of each row in the sample, ascending.
        let mut start = vec![0u32; n_rows + 1];
        for &r in rows {
            start[r + 1] += 1;
        }
        for r in 0..n_rows {
            start[r + 1] += start[r];
        }
        let mut fill = start.clone();
        let mut positions = vec![0u32; n_samples];
        for (pos, &r) in rows.iter().enumerate() {
            positions[fill[r] as usize] = pos as u32;
            fill[r] += 1;
        }
        let sorted = presort
            .order
            .iter()
            .enumerate()
            .map(|(f, order)| {
                let x = data.column(f);
                let mut v = Vec::with_capacity(n_samples);
                for &r in order {
                    let r = r as usize;
                    v.extend(
                        positions[start[r] as usize..start[r + 1] as usize]
                            .iter()
                            .map(|&pos| Entry { x: x[r], pos }),
                    );
                }
                v
            })
            .collect();

        let (sample_y, sample_codes) = match target {
            TargetRef::Regression(y) => (rows.iter().map(|&r| y[r]).collect(), Vec::new()),
            TargetRef::Classification { codes, .. } => (Vec::new(), rows.iter().map(|&r| codes[r]).collect()),
        };

        Self {
            data,
            target,
            config,
            lambdas,
            used,
            rng,
            sample_rows: rows.to_vec(),
            sample_y,
            sample_codes,
            sorted,
            natural: (0..n_samples as u32).collect(),
            goes_left: vec![false; n_samples],
            buf: Vec::with_capacity(n_samples),
            entry_buf: Vec::with_capacity(n_samples),
            pool: Vec::with_capacity(data.n_features()),
            xs: Vec::with_capacity(n_samples),
            ys: Vec::with_capacity(n_samples),
            codes: Vec::with_capacity(n_samples),
            class_scratch: Vec::new(),
            gain_totals: vec![0.0; data.n_features()],
        }
    }

    fn node_stats(&self, lo: usize, hi: usize) -> NodeStats {
        let seg = &self.natural[lo..hi];
        match self.target {
            TargetRef::Regression(_) => NodeStats::regression(seg.iter().map(|&p| self.sample_y[p as usize])),
            TargetRef::Classification { n_classes, .. } => {
                NodeStats::classification(seg.iter().map(|&p| self.sample_codes[p as usize]), n_classes)
            }
        }
    }

    fn is_terminal(&self, n: usize, depth: usize) -> bool {
        n < 2 * self.config.min_node_size || self.config.max_depth.is_some_and(|d| depth >= d)
    }

    fn grow(&mut self, lo: usize, hi: usize, depth: usize) -> Node {
        let n = hi - lo;
        let stats = self.node_stats(lo, hi);
        let prediction = match &stats {
            NodeStats::Regression { mean, .. } => *mean,
            NodeStats::Classification { counts, majority } => {
                counts.iter().position(|c| c == majority).unwrap_or(0) as f64
            }
        };
        if self.is_terminal(n, depth) || stats.is_pure(n) {
            return Node::leaf(n, prediction);
        }

        let Some(best) = self.search(lo, hi, depth, &stats) else {
            return Node::leaf(n, prediction);
        };

        if let Some(used) = self.used.as_deref_mut() {
            used.insert(best.feature);
        }
        self.gain_totals[best.feature] += best.raw_gain;

        let n_left = self.partition(lo, hi, depth, &best);
        let left = self.grow(lo, lo + n_left, depth + 1);
        let right = self.grow(lo + n_left, hi, depth + 1);
        Node {
            samples: n,
            prediction,
            split: Some(Box::new(Split {
                feature: best.feature,
                threshold: best.threshold,
                gain: best.raw_gain,
                penalized_gain: best.penalized_gain,
                left,
                right,
            })),
        }
    }

    fn search(&mut self, lo: usize, hi: usize, depth: usize, stats: &NodeStats) -> Option<SplitCandidate> {
        let p = self.data.n_features();
        self.pool.clear();
        self.pool.extend(0..p);
        self.rng.partial_shuffle_into(&mut self.pool, self.config.mtry);
        let penalty = match (self.lambdas, self.used.as_deref()) {
            (Some(lambdas), Some(used)) => GainPenalty::Regularized {
                lambdas,
                used,
                depth_penalty: self.config.depth_penalty,
            },
            _ => GainPenalty::Off,
        };

        // Least penalized first, so the gain bound can skip the rest.
        let mut candidates: Vec<(f64, usize)> = self.pool[..self.config.mtry]
            .iter()
            .map(|&f| (penalty.multiplier(f, depth), f))
            .collect();
        candidates.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let max_gain = stats.max_gain();

        let mut best: Option<SplitCandidate> = None;
        for &(multiplier, f) in &candidates {
            let bound = multiplier * max_gain;
            let hopeless = match best {
                Some(b) => {
                    let tol = GAIN_TIE_TOLERANCE * b.penalized_gain.abs();
                    bound < b.penalized_gain - tol || (bound <= b.penalized_gain + tol && f > b.feature)
                }
                None => bound <= 0.0,
            };
            if hopeless {
                continue;
            }
            let seg = &self.sorted[f][lo..hi];
            if seg[0].x == seg[seg.len() - 1].x {
                continue;
            }
            self.xs.clear();
            self.xs.extend(seg.iter().map(|e| e.x));
            let found = match self.target {
                TargetRef::Regression(_) => {
                    self.ys.clear();
                    self.ys.extend(seg.iter().map(|e| self.sample_y[e.pos as usize]));
                    scan_regression(&self.xs, &self.ys, stats, multiplier)
                }
                TargetRef::Classification { .. } => {
                    self.codes.clear();
                    self.codes
                        .extend(seg.iter().map(|e| self.sample_codes[e.pos as usize]));
                    scan_classification(&self.xs, &self.codes, stats, multiplier, &mut self.class_scratch)
                }
            };
            if let Some((threshold, raw_gain, penalized_gain)) = found {
                if best.map_or(true, |b| beats(penalized_gain, f, &b)) {
                    best = Some(SplitCandidate {
                        feature: f,
                        threshold,
                        raw_gain,
                        penalized_gain,
                    });
                }
            }
        }
        best
    }

    /// Stably partition every segment `[lo, hi)` into left then right and
    /// return the left size.
    fn partition(&mut self, lo: usize, hi: usize, depth: usize, split: &SplitCandidate) -> usize {
        let x = self.data.column(split.feature);
        let mut n_left = 0;
        for &p in &self.natural[lo..hi] {
            let left = x[self.sample_rows[p as usize]] <= split.threshold;
            self.goes_left[p as usize] = left;
            n_left += usize::from(left);
        }
        stable_partition(&mut self.natural[lo..hi], &self.goes_left, &mut self.buf, |&p| p);

        // Feature order is only needed by children that will search.
        let n_right = hi - lo - n_left;
        if self.is_terminal(n_left, depth + 1) && self.is_terminal(n_right, depth + 1) {
            return n_left;
        }
        for order in &mut self.sorted {
            stable_partition(&mut order[lo..hi], &self.goes_left, &mut self.entry_buf, |e| {
                e.pos
            });
        }
        n_left
    }
}

fn stable_partition<T: Copy + Default>(
    seg: &mut [T],
    goes_left: &[bool],
    buf: &mut Vec<T>,
    pos: impl Fn(&T) -> u32,
) {
    buf.clear();
    buf.resize(seg.len(), T::default());
    let (mut li, mut ri) = (0, 0);
    for k in 0..seg.len() {
        let p = seg[k];
        let left = usize::from(goes_left[pos(&p) as usize]);
        seg[li] = p;
        buf[ri] = p;
        li += left;
        ri += 1 - left;
    }
    seg[li..].copy_from_slice(&buf[..ri]);
}
