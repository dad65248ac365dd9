//! Independent reference implementations used by the integration tests.
//! None of them call into the numeric code they are compared against.
#![allow(dead_code)]

use otrank::dataset::{QAInstance, Sentence};
use otrank::embeddings::{EmbeddingStore, FrequencyTable};
use otrank::reranker::{Ffn, ModelParams};
use rand::Rng;

// ---------------------------------------------------------------- transport

/// Exact optimum of the transportation LP by enumerating basic feasible
/// solutions: every spanning tree of the bipartite row/column graph with
/// `n + m − 1` cells whose peeled flows are nonnegative.
pub fn lp_optimum(p: &[f64], q: &[f64], d: &[Vec<f64>]) -> f64 {
    let (n, m) = (p.len(), q.len());
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let k = n + m - 1;
    let mut best = f64::INFINITY;
    let mut pick = Vec::with_capacity(k);
    subsets(&cells, k, 0, &mut pick, &mut |basis| {
        if let Some(flow) = peel(p, q, basis) {
            let c: f64 = basis
                .iter()
                .zip(&flow)
                .map(|(&(i, j), f)| f * d[i][j])
                .sum();
            best = best.min(c);
        }
    });
    best
}

fn subsets<T: Copy>(
    items: &[T],
    k: usize,
    start: usize,
    pick: &mut Vec<T>,
    f: &mut impl FnMut(&[T]),
) {
    if pick.len() == k {
        f(pick);
        return;
    }
    for i in start..items.len() {
        if items.len() - i < k - pick.len() {
            break;
        }
        pick.push(items[i]);
        subsets(items, k, i + 1, pick, f);
        pick.pop();
    }
}

/// Solve the flows on a candidate basis by repeatedly fixing a cell that is
/// the only open one in its row or column. `None` if the cells do not form
/// a tree or a flow comes out negative.
fn peel(p: &[f64], q: &[f64], basis: &[(usize, usize)]) -> Option<Vec<f64>> {
    let mut row_left = p.to_vec();
    let mut col_left = q.to_vec();
    let mut flow = vec![f64::NAN; basis.len()];
    let mut open = vec![true; basis.len()];
    for _ in 0..basis.len() {
        let mut fixed = false;
        for c in 0..basis.len() {
            if !open[c] {
                continue;
            }
            let (i, j) = basis[c];
            let row_count = (0..basis.len())
                .filter(|&e| open[e] && basis[e].0 == i)
                .count();
            let col_count = (0..basis.len())
                .filter(|&e| open[e] && basis[e].1 == j)
                .count();
            let v = if row_count == 1 {
                row_left[i]
            } else if col_count == 1 {
                col_left[j]
            } else {
                continue;
            };
            flow[c] = v;
            row_left[i] -= v;
            col_left[j] -= v;
            open[c] = false;
            fixed = true;
            break;
        }
        if !fixed {
            return None;
        }
    }
    let residual = row_left
        .iter()
        .chain(&col_left)
        .fold(0.0f64, |a, v| a.max(v.abs()));
    if residual > 1e-12 || flow.iter().any(|f| *f < -1e-12) {
        return None;
    }
    Some(flow)
}

/// Plain multiplicative Sinkhorn-Knopp scaling run to `tol` on the
/// marginals. Fine for the small, well-scaled problems used in the oracles.
pub fn sinkhorn_knopp(p: &[f64], q: &[f64], d: &[Vec<f64>], eps: f64, tol: f64) -> Vec<Vec<f64>> {
    let (n, m) = (p.len(), q.len());
    let k: Vec<Vec<f64>> = d
        .iter()
        .map(|r| r.iter().map(|c| (-c / eps).exp()).collect())
        .collect();
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; m];
    for _ in 0..1_000_000 {
        for i in 0..n {
            let s: f64 = (0..m).map(|j| k[i][j] * v[j]).sum();
            u[i] = p[i] / s;
        }
        for j in 0..m {
            let s: f64 = (0..n).map(|i| k[i][j] * u[i]).sum();
            v[j] = q[j] / s;
        }
        let plan: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..m).map(|j| u[i] * k[i][j] * v[j]).collect())
            .collect();
        let row_err = (0..n)
            .map(|i| (plan[i].iter().sum::<f64>() - p[i]).abs())
            .fold(0.0, f64::max);
        let col_err = (0..m)
            .map(|j| ((0..n).map(|i| plan[i][j]).sum::<f64>() - q[j]).abs())
            .fold(0.0, f64::max);
        if row_err.max(col_err) <= tol {
            return plan;
        }
    }
    panic!("reference Sinkhorn did not converge");
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += (a[k] - b[k]) * (a[k] - b[k]);
    }
    s.sqrt()
}

/// Random probability vector with entries bounded away from zero.
pub fn random_simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

pub fn random_points(rng: &mut impl Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

// ------------------------------------------------------------------ scoring

/// Scalar recomputation of one window's score and edge weights.
pub struct OracleWindow {
    pub score: f64,
    pub alpha: [[f64; 3]; 3],
    pub costs: [f64; 3],
    pub reps: [Vec<f64>; 3],
}

fn ffn_scalar(f: &Ffn, x: &[f64]) -> f64 {
    let l0 = &f.layers[0];
    let l1 = &f.layers[1];
    let hidden = l0.bias.len();
    let mut out = l1.bias[0];
    for h in 0..hidden {
        let mut z = l0.bias[h];
        for (c, xc) in x.iter().enumerate() {
            z += l0.weight.get(h, c) * xc;
        }
        if z > 0.0 {
            out += l1.weight.get(0, h) * z;
        }
    }
    out
}

fn content_positions(s: &Sentence) -> Vec<usize> {
    if s.is_padding {
        return vec![];
    }
    let c: Vec<usize> = (0..s.tokens.len())
        .filter(|&i| s.tokens[i].is_content)
        .collect();
    if c.is_empty() {
        (0..s.tokens.len()).collect()
    } else {
        c
    }
}

fn weights(s: &Sentence, idx: &[usize], ft: &FrequencyTable) -> Vec<f64> {
    let raw: Vec<f64> = idx
        .iter()
        .map(|&i| {
            ft.counts
                .get(&s.tokens[i].normalized)
                .copied()
                .unwrap_or(0)
                .max(1) as f64
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Cost and pooled representation of one sentence against the question.
pub fn oracle_align(
    question: &Sentence,
    qv: &[Vec<f64>],
    sentence: &Sentence,
    sv: &[Vec<f64>],
    ft: &FrequencyTable,
    eps_scale: f64,
) -> (f64, Vec<f64>) {
    let dim = qv[0].len();
    let cols = content_positions(sentence);
    if cols.is_empty() {
        return (0.0, vec![0.0; dim]);
    }
    let rows = content_positions(question);
    let d: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| cols.iter().map(|&j| euclidean(&qv[i], &sv[j])).collect())
        .collect();
    let mean = d.iter().flatten().sum::<f64>() / (rows.len() * cols.len()) as f64;
    let eps = if mean > 0.0 {
        eps_scale * mean
    } else {
        eps_scale
    };
    let p = weights(question, &rows, ft);
    let q = weights(sentence, &cols, ft);
    let plan = sinkhorn_knopp(&p, &q, &d, eps, 1e-14);
    let mut cost = 0.0;
    let mut chosen = vec![false; cols.len()];
    for i in 0..rows.len() {
        let mut best = 0;
        for j in 0..cols.len() {
            cost += plan[i][j] * d[i][j];
            if plan[i][j] > plan[i][best] {
                best = j;
            }
        }
        chosen[best] = true;
    }
    let picked: Vec<usize> = (0..cols.len()).filter(|&j| chosen[j]).collect();
    let mut rep = vec![0.0; dim];
    for &j in &picked {
        for k in 0..dim {
            rep[k] += sv[cols[j]][k];
        }
    }
    for r in rep.iter_mut() {
        *r /= picked.len() as f64;
    }
    (cost, rep)
}

/// Graph forward in explicit loops.
pub fn oracle_graph(
    params: &ModelParams,
    reps: &[Vec<f64>; 3],
    costs: &[f64; 3],
) -> ([[f64; 3]; 3], f64) {
    let dim = reps[0].len();
    let mut alpha = [[0.0; 3]; 3];
    for i in 0..3 {
        let mut u = [0.0; 3];
        for j in 0..3 {
            let mut z = Vec::with_capacity(dim + 2);
            for k in 0..dim {
                z.push(reps[i][k] * reps[j][k]);
            }
            z.push(costs[i]);
            z.push(costs[j]);
            u[j] = ffn_scalar(&params.dep, &z);
        }
        let mx = u[0].max(u[1]).max(u[2]);
        let e = [(u[0] - mx).exp(), (u[1] - mx).exp(), (u[2] - mx).exp()];
        let s = e[0] + e[1] + e[2];
        for j in 0..3 {
            alpha[i][j] = e[j] / s;
        }
    }
    let mut h: Vec<Vec<f64>> = reps.to_vec();
    for layer in &params.gcn.layers {
        let mut next = vec![vec![0.0; dim]; 3];
        for i in 0..3 {
            for r in 0..dim {
                let mut acc = layer.bias[r];
                for j in 0..3 {
                    let mut wh = 0.0;
                    for c in 0..dim {
                        wh += layer.weight.get(r, c) * h[j][c];
                    }
                    acc += alpha[i][j] * wh;
                }
                next[i][r] = acc.max(0.0);
            }
        }
        h = next;
    }
    let logit = ffn_scalar(&params.head, &h[0]);
    (alpha, 1.0 / (1.0 + (-logit).exp()))
}

/// Score a window from raw data: alignment via [`oracle_align`], then
/// [`oracle_graph`].
pub fn oracle_score(
    instance: &QAInstance,
    window_index: usize,
    store: &EmbeddingStore,
    ft: &FrequencyTable,
    params: &ModelParams,
    eps_scale: f64,
) -> OracleWindow {
    let qv = store
        .question_vectors(&instance.question_id, &instance.question)
        .unwrap();
    let w = &instance.windows[window_index];
    let sentences = [&w.cand, w.prev.as_ref().unwrap(), w.next.as_ref().unwrap()];
    let mut costs = [0.0; 3];
    let mut reps: [Vec<f64>; 3] = Default::default();
    for (k, s) in sentences.iter().enumerate() {
        let sv = store
            .sentence_vectors(&instance.question_id, &w.id, s)
            .unwrap();
        let (c, r) = oracle_align(&instance.question, &qv, s, &sv, ft, eps_scale);
        costs[k] = c;
        reps[k] = r;
    }
    let (alpha, score) = oracle_graph(params, &reps, &costs);
    OracleWindow {
        score,
        alpha,
        costs,
        reps,
    }
}

// ------------------------------------------------------------------ metrics

/// Stable descending order by selection: the highest remaining score wins,
/// earliest position on ties.
pub fn oracle_order(scores: &[f64]) -> Vec<usize> {
    let mut left: Vec<usize> = (0..scores.len()).collect();
    let mut out = Vec::with_capacity(scores.len());
    while !left.is_empty() {
        let mut best = 0;
        for k in 1..left.len() {
            if scores[left[k]] > scores[left[best]] {
                best = k;
            }
        }
        out.push(left.remove(best));
    }
    out
}

/// (P@1, AP, RR) straight from the definitions, or `None` without positives.
pub fn oracle_metrics(scores: &[f64], labels: &[bool]) -> Option<(f64, f64, f64)> {
    let order = oracle_order(scores);
    let rel: Vec<bool> = order.iter().map(|&i| labels[i]).collect();
    let total = rel.iter().filter(|r| **r).count();
    if total == 0 {
        return None;
    }
    let p1 = if rel[0] { 1.0 } else { 0.0 };
    let mut sum = 0.0;
    for k in 1..=rel.len() {
        if rel[k - 1] {
            let in_top_k = rel[..k].iter().filter(|r| **r).count();
            sum += in_top_k as f64 / k as f64;
        }
    }
    let first = rel.iter().position(|r| *r).unwrap() + 1;
    Some((p1, sum / total as f64, 1.0 / first as f64))
}
