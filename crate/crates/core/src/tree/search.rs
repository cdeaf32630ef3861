//! Exhaustive split search.
//!
//! Every candidate variable is swept in sorted order while the cross
//! products of the leaf regressors and the response are accumulated for the
//! left side; the residual sum of squares of each side then falls out of a
//! symmetric elimination of its small Gram matrix. The few candidates that
//! come within rounding distance of the best one are re-fitted exactly by QR
//! so that ties resolve on identical arithmetic.

use super::frame::TrainingFrame;
use crate::linreg::least_squares;

/// Relative pivot tolerance of the Gram elimination.
const PIVOT_TOLERANCE: f64 = 1e-9;
/// Maximum number of near-best candidates re-fitted exactly.
const MAX_EXACT: usize = 32;

/// Candidate columns and limits resolved against a frame.
#[derive(Debug, Clone)]
pub(crate) struct Resolved {
    pub leaf: Vec<usize>,
    pub candidates: Vec<usize>,
    pub candidate_names: Vec<String>,
    pub min_leaf: usize,
    pub max_splits: usize,
    /// Position of a constant intercept within `leaf`, if any.
    pub intercept: Option<usize>,
}

/// Frame rows sorted by each candidate column, shared across trees.
#[derive(Debug, Clone)]
pub struct Presort {
    candidates: Vec<usize>,
    orders: Vec<Vec<u32>>,
}

impl Presort {
    pub fn new(frame: &TrainingFrame, candidates: &[usize]) -> Self {
        let orders = candidates
            .iter()
            .map(|&c| {
                let col = frame.column(c);
                let mut order: Vec<u32> = (0..frame.n_rows() as u32).collect();
                order.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                order
            })
            .collect();
        Presort {
            candidates: candidates.to_vec(),
            orders,
        }
    }

    pub(crate) fn covers(&self, candidates: &[usize]) -> bool {
        self.candidates == candidates
    }
}

/// Best split of a node.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitChoice {
    pub variable: String,
    /// Position of the variable in the configured split candidates.
    pub candidate_index: usize,
    pub threshold: f64,
    /// Largest value sent left and smallest value sent right.
    pub lower: f64,
    pub upper: f64,
    /// Summed residual sum of squares of the two sides.
    pub sse: f64,
    pub n_left: usize,
    pub n_right: usize,
}

/// Residual sum of squares of OLS of the response on the leaf columns over
/// `rows`, with the coefficients (zero for dropped columns).
pub(crate) fn exact_fit(frame: &TrainingFrame, leaf: &[usize], rows: &[usize]) -> (f64, Vec<f64>, Vec<usize>) {
    let cols: Vec<Vec<f64>> = leaf
        .iter()
        .map(|&c| {
            let col = frame.column(c);
            rows.iter().map(|&r| col[r]).collect()
        })
        .collect();
    let y: Vec<f64> = rows.iter().map(|&r| frame.response()[r]).collect();
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    let ls = least_squares(&refs, &y).expect("columns match rows");
    (ls.residual_sum_squares, ls.coefficients, ls.dropped)
}

fn exact_split_sse(frame: &TrainingFrame, leaf: &[usize], rows: &[usize], column: usize, threshold: f64) -> f64 {
    let col = frame.column(column);
    let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| col[r] <= threshold);
    exact_fit(frame, leaf, &left).0 + exact_fit(frame, leaf, &right).0
}

/// Midpoint between two consecutive distinct values, kept strictly below
/// the upper one.
pub(crate) fn midpoint(lower: f64, upper: f64) -> f64 {
    let m = lower + (upper - lower) / 2.0;
    if m < upper && m >= lower {
        m
    } else {
        lower
    }
}

struct Gram {
    d: usize,
    packed: Vec<f64>,
}

impl Gram {
    fn new(d: usize) -> Self {
        Gram {
            d,
            packed: vec![0.0; d * (d + 1) / 2],
        }
    }

    fn add(&mut self, row: &[f64]) {
        let mut t = 0;
        for i in 0..self.d {
            let ri = row[i];
            for &rj in &row[i..] {
                self.packed[t] += ri * rj;
                t += 1;
            }
        }
    }
}

/// Residual sum of squares from an augmented Gram matrix
/// `[X'X X'y; y'X y'y]`, eliminating the regressor pivots in order and
/// skipping those that vanish relative to their original diagonal.
fn schur_sse(packed: &[f64], d: usize, dense: &mut [f64]) -> f64 {
    let mut t = 0;
    for i in 0..d {
        for j in i..d {
            dense[i * d + j] = packed[t];
            t += 1;
        }
    }
    for k in 0..d - 1 {
        let piv = dense[k * d + k];
        let orig = diag_of(packed, d, k);
        if orig <= 0.0 || piv <= PIVOT_TOLERANCE * orig {
            continue;
        }
        for i in k + 1..d {
            let f = dense[k * d + i] / piv;
            if f == 0.0 {
                continue;
            }
            for j in i..d {
                dense[i * d + j] -= f * dense[k * d + j];
            }
        }
    }
    dense[d * d - 1].max(0.0)
}

fn diag_of(packed: &[f64], d: usize, k: usize) -> f64 {
    packed[k * (2 * d - k + 1) / 2]
}

struct Near {
    sse: f64,
    candidate: usize,
    lower: f64,
    upper: f64,
}

/// Best feasible split of `rows` (ascending frame row indices).
pub(crate) fn search(
    frame: &TrainingFrame,
    r: &Resolved,
    presort: Option<&Presort>,
    rows: &[usize],
) -> Option<SplitChoice> {
    let n = rows.len();
    if n < 2 * r.min_leaf || r.candidates.is_empty() {
        return None;
    }
    let p = r.leaf.len();
    let d = p + 1;
    let y = frame.response();

    // Node-local augmented rows, centred when the leaf model has an intercept.
    let mut means = vec![0.0; d];
    if r.intercept.is_some() {
        for (k, &c) in r.leaf.iter().enumerate() {
            if Some(k) != r.intercept {
                let col = frame.column(c);
                means[k] = rows.iter().map(|&i| col[i]).sum::<f64>() / n as f64;
            }
        }
        means[p] = rows.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
    }
    let mut local = vec![0.0; n * d];
    for (k, &c) in r.leaf.iter().enumerate() {
        let col = frame.column(c);
        for (li, &row) in rows.iter().enumerate() {
            local[li * d + k] = col[row] - means[k];
        }
    }
    for (li, &row) in rows.iter().enumerate() {
        local[li * d + p] = y[row] - means[p];
    }
    let mut total = Gram::new(d);
    for li in 0..n {
        total.add(&local[li * d..(li + 1) * d]);
    }
    let scale = total.packed[total.packed.len() - 1];
    let window = 1e-9 * scale;

    let use_presort = presort.filter(|ps| ps.covers(&r.candidates) && n * 16 >= frame.n_rows());
    let mut local_of: Vec<u32> = Vec::new();
    if use_presort.is_some() {
        local_of = vec![u32::MAX; frame.n_rows()];
        for (li, &row) in rows.iter().enumerate() {
            local_of[row] = li as u32;
        }
    }

    let mut order: Vec<u32> = Vec::with_capacity(n);
    let mut dense = vec![0.0; d * d];
    let mut right = vec![0.0; total.packed.len()];
    let mut best = f64::INFINITY;
    let mut near: Vec<Near> = Vec::new();

    for (ci, &c) in r.candidates.iter().enumerate() {
        let col = frame.column(c);
        order.clear();
        match use_presort {
            Some(ps) => order.extend(
                ps.orders[ci]
                    .iter()
                    .map(|&row| local_of[row as usize])
                    .filter(|&li| li != u32::MAX),
            ),
            None => {
                order.extend(0..n as u32);
                order.sort_by(|&a, &b| col[rows[a as usize]].total_cmp(&col[rows[b as usize]]).then(a.cmp(&b)));
            }
        }
        let value = |li: u32| col[rows[li as usize]];
        if value(order[0]) == value(order[n - 1]) {
            continue;
        }
        let mut left = Gram::new(d);
        for i in 0..n - r.min_leaf {
            let li = order[i] as usize;
            left.add(&local[li * d..(li + 1) * d]);
            let n_left = i + 1;
            if n_left < r.min_leaf {
                continue;
            }
            let (lo, hi) = (value(order[i]), value(order[i + 1]));
            if lo == hi {
                continue;
            }
            for (t, v) in right.iter_mut().enumerate() {
                *v = total.packed[t] - left.packed[t];
            }
            let sse = schur_sse(&left.packed, d, &mut dense) + schur_sse(&right, d, &mut dense);
            if sse <= best + window {
                best = best.min(sse);
                near.push(Near {
                    sse,
                    candidate: ci,
                    lower: lo,
                    upper: hi,
                });
                if near.len() > 4 * MAX_EXACT {
                    near.retain(|c| c.sse <= best + window);
                }
            }
        }
    }
    near.retain(|c| c.sse <= best + window);
    if near.is_empty() {
        return None;
    }
    near.sort_by(|a, b| {
        a.sse
            .total_cmp(&b.sse)
            .then(a.candidate.cmp(&b.candidate))
            .then(a.lower.total_cmp(&b.lower))
    });
    near.truncate(MAX_EXACT);
    near.sort_by(|a, b| a.candidate.cmp(&b.candidate).then(a.lower.total_cmp(&b.lower)));

    let mut chosen: Option<(f64, &Near)> = None;
    for c in &near {
        let threshold = midpoint(c.lower, c.upper);
        let sse = exact_split_sse(frame, &r.leaf, rows, r.candidates[c.candidate], threshold);
        let better = match chosen {
            None => true,
            Some((b, _)) => sse < b - (1e-12 * b.max(sse) + 1e-15 * scale),
        };
        if better {
            chosen = Some((sse, c));
        }
    }
    let (sse, c) = chosen?;
    let threshold = midpoint(c.lower, c.upper);
    let col = frame.column(r.candidates[c.candidate]);
    let n_left = rows.iter().filter(|&&row| col[row] <= threshold).count();
    Some(SplitChoice {
        variable: r.candidate_names[c.candidate].clone(),
        candidate_index: c.candidate,
        threshold,
        lower: c.lower,
        upper: c.upper,
        sse,
        n_left,
        n_right: n - n_left,
    })
}
