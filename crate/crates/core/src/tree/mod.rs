//! Regression trees with a linear model in every leaf.

mod frame;
mod search;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use frame::{FeatureSource, FrameRow, PriceShifted, TrainingFrame, INTERCEPT, PRICE};
pub use search::{Presort, SplitChoice};

use crate::data::features::default_split_candidates;
use crate::error::{Error, Result};
use crate::linreg::NamedVector;
use search::{exact_fit, Resolved};

/// Smallest `k` with `k³ ≥ n`.
pub fn cube_root_ceil(n: usize) -> usize {
    let mut k = (n as f64).cbrt().floor() as usize;
    while k.saturating_pow(3) < n {
        k += 1;
    }
    while k > 0 && (k - 1).saturating_pow(3) >= n {
        k -= 1;
    }
    k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Regressors of every leaf model.
    pub leaf_regressors: Vec<String>,
    /// Variables a node may split on.
    pub split_candidates: Vec<String>,
    /// Split budget per tree; `None` uses the cube root of the tree's
    /// training size.
    pub max_splits: Option<usize>,
    /// Smallest leaf; `None` uses the squared leaf-regressor count.
    pub min_leaf_size: Option<usize>,
    /// Smallest accepted SSE improvement, as a fraction of the root RSS.
    pub improvement_tolerance: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            leaf_regressors: [INTERCEPT, PRICE, "season_sin", "season_cos"]
                .map(String::from)
                .to_vec(),
            split_candidates: default_split_candidates(),
            max_splits: None,
            min_leaf_size: None,
            improvement_tolerance: 1e-9,
        }
    }
}

impl TreeConfig {
    /// Also lets nodes split on the price itself.
    pub fn with_price_splits(mut self) -> Self {
        if !self.split_candidates.iter().any(|c| c == PRICE) {
            self.split_candidates.push(PRICE.to_string());
        }
        self
    }

    pub fn min_leaf_floor(&self) -> usize {
        self.leaf_regressors.len().pow(2)
    }

    pub fn effective_min_leaf(&self) -> usize {
        self.min_leaf_size.unwrap_or_else(|| self.min_leaf_floor())
    }

    pub fn effective_max_splits(&self, n_records: usize) -> usize {
        self.max_splits.unwrap_or_else(|| cube_root_ceil(n_records))
    }

    pub fn validate(&self, n_records: usize) -> Result<()> {
        if self.leaf_regressors.is_empty() {
            return Err(Error::Config("no leaf regressors".into()));
        }
        if let Some(m) = self.min_leaf_size {
            if m < self.min_leaf_floor() {
                return Err(Error::Config(format!(
                    "min_leaf_size {m} is below {} (squared leaf-regressor count)",
                    self.min_leaf_floor()
                )));
            }
        }
        if let Some(k) = self.max_splits {
            let cap = cube_root_ceil(n_records);
            if k > cap {
                return Err(Error::Config(format!(
                    "max_splits {k} exceeds {cap} (cube root of {n_records} observations)"
                )));
            }
        }
        if !(self.improvement_tolerance >= 0.0) {
            return Err(Error::Config("improvement_tolerance must be nonnegative".into()));
        }
        Ok(())
    }

    pub(crate) fn resolve(&self, frame: &TrainingFrame, n_records: usize) -> Result<Resolved> {
        self.validate(n_records)?;
        let leaf = self
            .leaf_regressors
            .iter()
            .map(|n| frame.index_of(n))
            .collect::<Result<Vec<_>>>()?;
        let candidates = self
            .split_candidates
            .iter()
            .map(|n| frame.index_of(n))
            .collect::<Result<Vec<_>>>()?;
        let intercept = self.leaf_regressors.iter().position(|n| n == INTERCEPT);
        Ok(Resolved {
            leaf,
            candidates,
            candidate_names: self.split_candidates.clone(),
            min_leaf: self.effective_min_leaf(),
            max_splits: self.effective_max_splits(n_records),
            intercept,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub variable: String,
    /// Values `<= threshold` go left.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafModel {
    /// One coefficient per leaf regressor; dropped columns hold 0.
    pub coefficients: NamedVector,
    pub dropped: Vec<String>,
    pub n_obs: usize,
    pub residual_sum_squares: f64,
    /// Training rows of the leaf; empty when not retained.
    pub record_indices: Vec<usize>,
}

impl LeafModel {
    pub fn predict(&self, source: &(impl FeatureSource + ?Sized)) -> Result<f64> {
        let mut q = 0.0;
        for (name, b) in self.coefficients.iter() {
            let v = source
                .feature(name)
                .ok_or_else(|| Error::UnknownFeature(name.to_string()))?;
            if b != 0.0 {
                q += b * v;
            }
        }
        Ok(q)
    }

    pub fn price_coefficient(&self) -> Option<f64> {
        self.coefficients.get(PRICE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split { rule: SplitRule, left: usize, right: usize },
    Leaf(LeafModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitLogEntry {
    pub node: usize,
    pub variable: String,
    pub threshold: f64,
    pub sse_before: f64,
    pub sse_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelTree {
    /// Arena of nodes; the root is node 0.
    nodes: Vec<Node>,
    leaf_regressors: Vec<String>,
    split_log: Vec<SplitLogEntry>,
}

impl ModelTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf_regressors(&self) -> &[String] {
        &self.leaf_regressors
    }

    pub fn split_log(&self) -> &[SplitLogEntry] {
        &self.split_log
    }

    pub fn split_count(&self) -> usize {
        self.split_log.len()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &LeafModel> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf(l) => Some(l),
            Node::Split { .. } => None,
        })
    }

    pub fn leaf_for(&self, source: &(impl FeatureSource + ?Sized)) -> Result<&LeafModel> {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(l) => return Ok(l),
                Node::Split { rule, left, right } => {
                    let v = source
                        .feature(&rule.variable)
                        .ok_or_else(|| Error::UnknownFeature(rule.variable.clone()))?;
                    i = if v <= rule.threshold { *left } else { *right };
                }
            }
        }
    }

    /// Predicted log ticket count.
    pub fn predict(&self, source: &(impl FeatureSource + ?Sized)) -> Result<f64> {
        self.leaf_for(source)?.predict(source)
    }

    pub fn discard_record_indices(&mut self) {
        for n in &mut self.nodes {
            if let Node::Leaf(l) = n {
                l.record_indices = Vec::new();
            }
        }
    }

    /// Resolves variable names against a frame for fast row prediction.
    pub fn compile(&self, frame: &TrainingFrame) -> Result<CompiledTree> {
        let price = frame.index_of(PRICE).ok();
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                Ok(match n {
                    Node::Split { rule, left, right } => CompiledNode::Split {
                        column: frame.index_of(&rule.variable)?,
                        threshold: rule.threshold,
                        left: *left,
                        right: *right,
                    },
                    Node::Leaf(l) => {
                        let mut terms = Vec::new();
                        let mut price_coefficient = 0.0;
                        for (name, b) in l.coefficients.iter() {
                            let c = frame.index_of(name)?;
                            if Some(c) == price {
                                price_coefficient = b;
                            }
                            if b != 0.0 {
                                terms.push((c, b));
                            }
                        }
                        CompiledNode::Leaf {
                            terms,
                            price_coefficient,
                        }
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CompiledTree { nodes, price })
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let doc = TreeDoc {
            leaf_regressors: self.leaf_regressors.clone(),
            split_log: self.split_log.clone(),
            root: self.node_doc(0),
        };
        serde_json::to_value(doc).expect("tree serializes")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_json_value())?)
    }

    pub fn from_json(text: &str) -> Result<ModelTree> {
        let doc: TreeDoc = serde_json::from_str(text)?;
        let mut tree = ModelTree {
            nodes: Vec::new(),
            leaf_regressors: doc.leaf_regressors,
            split_log: doc.split_log,
        };
        tree.push_doc(doc.root)?;
        Ok(tree)
    }

    fn node_doc(&self, i: usize) -> NodeDoc {
        match &self.nodes[i] {
            Node::Split { rule, left, right } => NodeDoc::Split {
                variable: rule.variable.clone(),
                threshold: rule.threshold,
                left: Box::new(self.node_doc(*left)),
                right: Box::new(self.node_doc(*right)),
            },
            Node::Leaf(l) => NodeDoc::Leaf {
                coefficients: l.coefficients.iter().map(|(n, b)| (n.to_string(), b)).collect(),
                n_obs: l.n_obs,
                rss: l.residual_sum_squares,
                dropped: l.dropped.clone(),
            },
        }
    }

    fn push_doc(&mut self, doc: NodeDoc) -> Result<usize> {
        let id = self.nodes.len();
        match doc {
            NodeDoc::Split {
                variable,
                threshold,
                left,
                right,
            } => {
                self.nodes.push(Node::Leaf(placeholder_leaf()));
                let l = self.push_doc(*left)?;
                let r = self.push_doc(*right)?;
                self.nodes[id] = Node::Split {
                    rule: SplitRule { variable, threshold },
                    left: l,
                    right: r,
                };
            }
            NodeDoc::Leaf {
                coefficients,
                n_obs,
                rss,
                dropped,
            } => {
                let mut values = Vec::with_capacity(self.leaf_regressors.len());
                for name in &self.leaf_regressors {
                    let b = coefficients
                        .get(name)
                        .copied()
                        .ok_or_else(|| Error::Serde(format!("leaf lacks coefficient `{name}`")))?;
                    values.push(b);
                }
                self.nodes.push(Node::Leaf(LeafModel {
                    coefficients: NamedVector {
                        names: self.leaf_regressors.clone(),
                        values,
                    },
                    dropped,
                    n_obs,
                    residual_sum_squares: rss,
                    record_indices: Vec::new(),
                }));
            }
        }
        Ok(id)
    }
}

fn placeholder_leaf() -> LeafModel {
    LeafModel {
        coefficients: NamedVector::default(),
        dropped: Vec::new(),
        n_obs: 0,
        residual_sum_squares: 0.0,
        record_indices: Vec::new(),
    }
}

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    leaf_regressors: Vec<String>,
    split_log: Vec<SplitLogEntry>,
    root: NodeDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeDoc {
    Split {
        variable: String,
        threshold: f64,
        left: Box<NodeDoc>,
        right: Box<NodeDoc>,
    },
    Leaf {
        coefficients: BTreeMap<String, f64>,
        n_obs: usize,
        rss: f64,
        #[serde(default)]
        dropped: Vec<String>,
    },
}

#[derive(Debug, Clone)]
enum CompiledNode {
    Split {
        column: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        terms: Vec<(usize, f64)>,
        price_coefficient: f64,
    },
}

/// A tree bound to the column layout of one frame.
#[derive(Debug, Clone)]
pub struct CompiledTree {
    nodes: Vec<CompiledNode>,
    price: Option<usize>,
}

impl CompiledTree {
    fn leaf_of(&self, frame: &TrainingFrame, row: usize, price_shift: f64) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                CompiledNode::Split {
                    column,
                    threshold,
                    left,
                    right,
                } => {
                    let mut v = frame.column(*column)[row];
                    if Some(*column) == self.price {
                        v += price_shift;
                    }
                    i = if v <= *threshold { *left } else { *right };
                }
                CompiledNode::Leaf { .. } => return i,
            }
        }
    }

    fn leaf_value(&self, leaf: usize, frame: &TrainingFrame, row: usize, price_shift: f64) -> f64 {
        let CompiledNode::Leaf {
            terms,
            price_coefficient,
        } = &self.nodes[leaf]
        else {
            unreachable!("leaf_of returns leaves")
        };
        let mut q = 0.0;
        for &(c, b) in terms {
            q += b * frame.column(c)[row];
        }
        if price_shift != 0.0 {
            q += price_coefficient * price_shift;
        }
        q
    }

    /// Prediction for a frame row with the price column shifted by
    /// `price_shift` (in logs).
    pub fn predict_row(&self, frame: &TrainingFrame, row: usize, price_shift: f64) -> f64 {
        self.leaf_value(self.leaf_of(frame, row, price_shift), frame, row, price_shift)
    }

    /// Change of the prediction when the log price moves by `price_shift`.
    pub fn price_response(&self, frame: &TrainingFrame, row: usize, price_shift: f64) -> f64 {
        let base = self.leaf_of(frame, row, 0.0);
        let moved = self.leaf_of(frame, row, price_shift);
        if base == moved {
            let CompiledNode::Leaf { price_coefficient, .. } = &self.nodes[base] else {
                unreachable!("leaf_of returns leaves")
            };
            price_coefficient * price_shift
        } else {
            self.leaf_value(moved, frame, row, price_shift) - self.leaf_value(base, frame, row, 0.0)
        }
    }
}

/// Summed leaf RSS of splitting `rows` at `variable <= threshold`, or
/// `None` when either side is smaller than the minimum leaf.
pub fn split_sse(
    frame: &TrainingFrame,
    rows: &[usize],
    variable: &str,
    threshold: f64,
    config: &TreeConfig,
) -> Result<Option<f64>> {
    let r = config.resolve(frame, rows.len())?;
    let col = frame.column(frame.index_of(variable)?);
    let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| col[i] <= threshold);
    if left.len() < r.min_leaf || right.len() < r.min_leaf {
        return Ok(None);
    }
    Ok(Some(
        exact_fit(frame, &r.leaf, &left).0 + exact_fit(frame, &r.leaf, &right).0,
    ))
}

/// Best split of `rows` over all candidate variables and midpoint
/// thresholds, or `None` when no split improves on the unsplit node by more
/// than the tolerance.
pub fn best_split(frame: &TrainingFrame, rows: &[usize], config: &TreeConfig) -> Result<Option<SplitChoice>> {
    let rows = sorted_rows(rows);
    let r = config.resolve(frame, rows.len())?;
    let Some(choice) = search::search(frame, &r, None, &rows) else {
        return Ok(None);
    };
    let (rss, _, _) = exact_fit(frame, &r.leaf, &rows);
    let tol = tolerance(frame, &rows, rss, config.improvement_tolerance);
    Ok((rss - choice.sse > tol).then_some(choice))
}

fn sorted_rows(rows: &[usize]) -> Vec<usize> {
    let mut v = rows.to_vec();
    v.sort_unstable();
    v
}

fn tolerance(frame: &TrainingFrame, rows: &[usize], root_rss: f64, relative: f64) -> f64 {
    let y = frame.response();
    let sum_sq: f64 = rows.iter().map(|&i| y[i] * y[i]).sum();
    relative * root_rss + 1e-12 * sum_sq
}

/// Grows a tree on `rows`, always expanding the frontier node whose best
/// split reduces SSE the most, until the split budget is spent or no node
/// can be split.
pub fn grow_tree(frame: &TrainingFrame, rows: &[usize], config: &TreeConfig) -> Result<ModelTree> {
    grow(frame, rows, config, None)
}

/// As `grow_tree`, reusing column orderings shared by many trees.
pub fn grow_tree_presorted(
    frame: &TrainingFrame,
    rows: &[usize],
    config: &TreeConfig,
    presort: &Presort,
) -> Result<ModelTree> {
    grow(frame, rows, config, Some(presort))
}

/// Column orderings for the split candidates of `config`.
pub fn presort(frame: &TrainingFrame, config: &TreeConfig) -> Result<Presort> {
    let candidates = config
        .split_candidates
        .iter()
        .map(|n| frame.index_of(n))
        .collect::<Result<Vec<_>>>()?;
    Ok(Presort::new(frame, &candidates))
}

struct Pending {
    rows: Vec<usize>,
    leaf: LeafModel,
}

struct FrontierEntry {
    node: usize,
    improvement: f64,
    choice: SplitChoice,
}

fn grow(frame: &TrainingFrame, rows: &[usize], config: &TreeConfig, presort: Option<&Presort>) -> Result<ModelTree> {
    let rows = sorted_rows(rows);
    let r = config.resolve(frame, rows.len())?;
    if rows.len() < r.min_leaf {
        return Err(Error::TooFewObservations {
            n_obs: rows.len(),
            n_params: r.min_leaf,
        });
    }
    let fit_node = |rows: Vec<usize>| -> Pending {
        let (rss, coefs, dropped) = exact_fit(frame, &r.leaf, &rows);
        Pending {
            leaf: LeafModel {
                coefficients: NamedVector {
                    names: config.leaf_regressors.clone(),
                    values: coefs,
                },
                dropped: dropped.iter().map(|&k| config.leaf_regressors[k].clone()).collect(),
                n_obs: rows.len(),
                residual_sum_squares: rss,
                record_indices: Vec::new(),
            },
            rows,
        }
    };

    let root = fit_node(rows);
    let tol = tolerance(
        frame,
        &root.rows,
        root.leaf.residual_sum_squares,
        config.improvement_tolerance,
    );
    let mut pending: Vec<Option<Pending>> = vec![Some(root)];
    let mut structure: Vec<Option<(SplitRule, usize, usize)>> = vec![None];
    let mut split_log = Vec::new();
    let mut frontier: Vec<FrontierEntry> = Vec::new();

    let consider = |node: usize, p: &Pending, frontier: &mut Vec<FrontierEntry>| {
        if r.max_splits == 0 {
            return;
        }
        if let Some(choice) = search::search(frame, &r, presort, &p.rows) {
            let improvement = p.leaf.residual_sum_squares - choice.sse;
            if improvement > tol {
                frontier.push(FrontierEntry {
                    node,
                    improvement,
                    choice,
                });
            }
        }
    };
    consider(0, pending[0].as_ref().unwrap(), &mut frontier);

    while split_log.len() < r.max_splits && !frontier.is_empty() {
        let mut pick = 0;
        for (i, e) in frontier.iter().enumerate() {
            let b = &frontier[pick];
            if e.improvement > b.improvement || (e.improvement == b.improvement && e.node < b.node) {
                pick = i;
            }
        }
        let entry = frontier.swap_remove(pick);
        let parent = pending[entry.node].take().expect("frontier node is pending");
        let col = frame.column(r.candidates[entry.choice.candidate_index]);
        let threshold = entry.choice.threshold;
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = parent.rows.iter().partition(|&&i| col[i] <= threshold);
        let left = fit_node(left_rows);
        let right = fit_node(right_rows);
        split_log.push(SplitLogEntry {
            node: entry.node,
            variable: entry.choice.variable.clone(),
            threshold,
            sse_before: parent.leaf.residual_sum_squares,
            sse_after: left.leaf.residual_sum_squares + right.leaf.residual_sum_squares,
        });
        let (li, ri) = (pending.len(), pending.len() + 1);
        structure[entry.node] = Some((
            SplitRule {
                variable: entry.choice.variable,
                threshold,
            },
            li,
            ri,
        ));
        consider(li, &left, &mut frontier);
        consider(ri, &right, &mut frontier);
        pending.push(Some(left));
        pending.push(Some(right));
        structure.push(None);
        structure.push(None);
    }

    let nodes = pending
        .into_iter()
        .zip(structure)
        .map(|(p, s)| match s {
            Some((rule, left, right)) => Node::Split { rule, left, right },
            None => {
                let p = p.expect("leaf keeps its rows");
                let mut leaf = p.leaf;
                leaf.record_indices = p.rows;
                Node::Leaf(leaf)
            }
        })
        .collect();
    let (nodes, ids) = preorder(nodes);
    for e in &mut split_log {
        e.node = ids[e.node];
    }
    Ok(ModelTree {
        nodes,
        leaf_regressors: config.leaf_regressors.clone(),
        split_log,
    })
}

/// Renumbers an arena so that every node precedes its left subtree, which
/// precedes its right subtree. Returns the nodes and the old-to-new map.
fn preorder(nodes: Vec<Node>) -> (Vec<Node>, Vec<usize>) {
    let mut ids = vec![0; nodes.len()];
    let mut order = Vec::with_capacity(nodes.len());
    let mut stack = vec![0usize];
    while let Some(i) = stack.pop() {
        ids[i] = order.len();
        order.push(i);
        if let Node::Split { left, right, .. } = &nodes[i] {
            stack.push(*right);
            stack.push(*left);
        }
    }
    let mut slots: Vec<Option<Node>> = nodes.into_iter().map(Some).collect();
    let out = order
        .into_iter()
        .map(|i| match slots[i].take().expect("each node visited once") {
            Node::Split { rule, left, right } => Node::Split {
                rule,
                left: ids[left],
                right: ids[right],
            },
            leaf => leaf,
        })
        .collect();
    (out, ids)
}
