use rayon::prelude::*;

use super::GbtParams;
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Loss reduction net of gamma.
        gain: f64,
        /// Hessian sum reaching the node.
        cover: f64,
    },
    Leaf {
        weight: f64,
    },
}

/// Nodes in creation order; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { weight } => return *weight,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if row[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Depth of the deepest node; a lone leaf has depth 0.
    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }

    pub fn splits(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, gain, .. } => Some((*feature, *gain)),
            Node::Leaf { .. } => None,
        })
    }
}

/// Row indices of each column in ascending value order (ties by row).
pub(crate) fn presort(x: &DenseMatrix) -> Vec<Vec<u32>> {
    (0..x.n_cols)
        .into_par_iter()
        .map(|j| {
            let mut idx: Vec<u32> = (0..x.n_rows as u32).collect();
            idx.sort_by(|&a, &b| x.get(a as usize, j).total_cmp(&x.get(b as usize, j)).then(a.cmp(&b)));
            idx
        })
        .collect()
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    gl: f64,
    hl: f64,
}

struct Open {
    node: usize,
    g: f64,
    h: f64,
}

const NONE: u32 = u32::MAX;

fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    -g / (h + lambda)
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

/// Threshold strictly between `lo` and `hi` such that `lo < t <= hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if lo < m && m <= hi {
        m
    } else {
        hi
    }
}

/// Level-wise exact greedy construction over the sampled rows and columns.
pub(crate) fn build(
    x: &DenseMatrix,
    sorted: &[Vec<u32>],
    g: &[f64],
    h: &[f64],
    rows: &[bool],
    cols: &[usize],
    p: &GbtParams,
) -> Tree {
    let lambda = p.l2_lambda;
    let mut node_of: Vec<u32> = rows.iter().map(|&r| if r { 0 } else { NONE }).collect();
    let (mut g0, mut h0) = (0.0, 0.0);
    for i in 0..x.n_rows {
        if rows[i] {
            g0 += g[i];
            h0 += h[i];
        }
    }
    let mut nodes = vec![Node::Leaf {
        weight: leaf_weight(g0, h0, lambda),
    }];
    let mut open = vec![Open { node: 0, g: g0, h: h0 }];

    for _depth in 0..p.max_depth {
        if open.is_empty() {
            break;
        }
        // slot of each open node by tree index
        let mut slot_of = vec![NONE; nodes.len()];
        for (s, o) in open.iter().enumerate() {
            slot_of[o.node] = s as u32;
        }
        let per_col: Vec<Vec<Option<Candidate>>> = cols
            .par_iter()
            .map(|&j| scan_column(x, &sorted[j], j, g, h, &node_of, &slot_of, &open, p))
            .collect();
        let mut best: Vec<Option<Candidate>> = vec![None; open.len()];
        for col in &per_col {
            for (s, c) in col.iter().enumerate() {
                if let Some(c) = c {
                    if best[s].is_none_or(|b| c.gain > b.gain) {
                        best[s] = Some(*c);
                    }
                }
            }
        }

        let mut next_open = Vec::new();
        let mut child_of: Vec<Option<(usize, usize, usize, f64)>> = vec![None; open.len()];
        for (s, o) in open.iter().enumerate() {
            let Some(c) = best[s] else { continue };
            let (gr, hr) = (o.g - c.gl, o.h - c.hl);
            let left = nodes.len();
            nodes.push(Node::Leaf {
                weight: leaf_weight(c.gl, c.hl, lambda),
            });
            nodes.push(Node::Leaf {
                weight: leaf_weight(gr, hr, lambda),
            });
            nodes[o.node] = Node::Split {
                feature: c.feature,
                threshold: c.threshold,
                left,
                right: left + 1,
                gain: c.gain,
                cover: o.h,
            };
            child_of[s] = Some((c.feature, left, left + 1, c.threshold));
            next_open.push(Open {
                node: left,
                g: c.gl,
                h: c.hl,
            });
            next_open.push(Open {
                node: left + 1,
                g: gr,
                h: hr,
            });
        }
        for i in 0..x.n_rows {
            let nd = node_of[i];
            if nd == NONE {
                continue;
            }
            let s = slot_of[nd as usize];
            node_of[i] = match child_of[s as usize] {
                Some((f, l, r, t)) => (if x.get(i, f) < t { l } else { r }) as u32,
                None => NONE,
            };
        }
        open = next_open;
    }
    Tree { nodes }
}

#[allow(clippy::too_many_arguments)]
fn scan_column(
    x: &DenseMatrix,
    order: &[u32],
    j: usize,
    g: &[f64],
    h: &[f64],
    node_of: &[u32],
    slot_of: &[u32],
    open: &[Open],
    p: &GbtParams,
) -> Vec<Option<Candidate>> {
    let k = open.len();
    let mut gl = vec![0.0; k];
    let mut hl = vec![0.0; k];
    let mut last: Vec<Option<f64>> = vec![None; k];
    let mut best: Vec<Option<Candidate>> = vec![None; k];
    let lambda = p.l2_lambda;
    for &r in order {
        let r = r as usize;
        let nd = node_of[r];
        if nd == NONE {
            continue;
        }
        let s = slot_of[nd as usize] as usize;
        let v = x.get(r, j);
        if let Some(prev) = last[s] {
            if v > prev {
                let o = &open[s];
                let (gr, hr) = (o.g - gl[s], o.h - hl[s]);
                if hl[s] >= p.min_child_weight && hr >= p.min_child_weight {
                    let gain =
                        0.5 * (score(gl[s], hl[s], lambda) + score(gr, hr, lambda) - score(o.g, o.h, lambda)) - p.gamma;
                    if gain > 0.0 && best[s].is_none_or(|b| gain > b.gain) {
                        best[s] = Some(Candidate {
                            gain,
                            feature: j,
                            threshold: midpoint(prev, v),
                            gl: gl[s],
                            hl: hl[s],
                        });
                    }
                }
            }
        }
        gl[s] += g[r];
        hl[s] += h[r];
        last[s] = Some(v);
    }
    best
}
