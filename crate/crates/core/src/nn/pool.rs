use std::collections::{HashMap, VecDeque};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{EdgeMesh, NnError};
use crate::mesh::collapse::CollapseMesh;
use crate::mesh::sorted_pair;

/// One edge collapse performed by [`mesh_pool`], in input edge ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollapseRecord {
    pub edge: usize,
    /// `(survivor, absorbed)` for the neighbor pair of each incident face.
    pub merged: [[usize; 2]; 2],
}

/// Everything needed to replay a pooling step on features or gradients.
///
/// Output edge `j` carries the weighted mean of input edges `rows[j]`. The
/// weights in a row sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolTrace {
    pub input_edges: usize,
    pub collapses: Vec<CollapseRecord>,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl PoolTrace {
    pub fn output_edges(&self) -> usize {
        self.rows.len()
    }

    /// Pooled features, `C x output_edges`.
    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let c = x.nrows();
        let mut out = Array2::zeros((c, self.rows.len()));
        for (j, row) in self.rows.iter().enumerate() {
            for &(i, w) in row {
                for ch in 0..c {
                    out[[ch, j]] += w * x[[ch, i]];
                }
            }
        }
        out
    }

    /// Adjoint of [`apply`](Self::apply): routes output gradients back to
    /// the input edges.
    pub fn backward(&self, dy: ArrayView2<f64>) -> Array2<f64> {
        let c = dy.nrows();
        let mut dx = Array2::zeros((c, self.input_edges));
        for (j, row) in self.rows.iter().enumerate() {
            for &(i, w) in row {
                for ch in 0..c {
                    dx[[ch, i]] += w * dy[[ch, j]];
                }
            }
        }
        dx
    }
}

/// Priority of an edge: feature L2 norm rounded to single precision, so
/// norms equal up to round-off tie and fall back to the edge id.
fn priority(x: ArrayView2<f64>, e: usize) -> f32 {
    x.column(e).iter().map(|v| v * v).sum::<f64>().sqrt() as f32
}

/// Collapses edges in ascending order of feature norm (ties by edge id)
/// until `target` edges remain. Collapsing edge `e` with face neighbors
/// `(a, b)` and `(c, d)` fuses `a` with `b` and `c` with `d`, since each
/// pair becomes one edge once `e` vanishes; each survivor takes the
/// count-weighted mean of its own, its partner's and `e`'s merged inputs.
/// Collapses that would break the link condition are re-queued last.
///
/// Closed meshes lose exactly three edges per collapse, so the result has
/// the largest edge count `<= target` reachable from the input.
pub fn mesh_pool(
    x: ArrayView2<f64>,
    input: &EdgeMesh,
    target: usize,
) -> Result<(Array2<f64>, EdgeMesh, PoolTrace), NnError> {
    let (trace, mesh) = pool_topology(x, input, target)?;
    Ok((trace.apply(x), mesh, trace))
}

pub(crate) fn pool_topology(
    x: ArrayView2<f64>,
    input: &EdgeMesh,
    target: usize,
) -> Result<(PoolTrace, EdgeMesh), NnError> {
    let mesh = &input.mesh;
    let n_edges = mesh.edge_count();
    if x.ncols() != n_edges {
        return Err(NnError::Shape(format!(
            "features have {} edges, mesh has {n_edges}",
            x.ncols()
        )));
    }
    if target >= n_edges {
        return Err(NnError::Shape(format!(
            "pool target {target} must be below the current {n_edges} edges"
        )));
    }

    let mut order: Vec<(f32, usize)> = (0..n_edges).map(|e| (priority(x, e), e)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut rank = vec![0usize; n_edges];
    for (r, &(_, e)) in order.iter().enumerate() {
        rank[e] = r;
    }
    let mut queue: VecDeque<usize> = order.into_iter().map(|(_, e)| e).collect();

    let mut cm = CollapseMesh::from_mesh(mesh);
    let mut endpoints: Vec<[usize; 2]> = mesh.edges().to_vec();
    let mut by_pair: HashMap<[usize; 2], usize> =
        endpoints.iter().enumerate().map(|(e, &p)| (p, e)).collect();
    let mut alive = vec![true; n_edges];
    let mut groups: Vec<Vec<usize>> = (0..n_edges).map(|e| vec![e]).collect();
    let mut collapses = Vec::new();
    let mut remaining = n_edges;
    let mut failures_in_a_row = 0usize;

    while remaining > target {
        let Some(e) = queue.pop_front() else { break };
        if !alive[e] {
            continue;
        }
        let [u, v] = endpoints[e];
        if !cm.can_collapse(u, v) {
            queue.push_back(e);
            failures_in_a_row += 1;
            if failures_in_a_row > queue.len() {
                break;
            }
            continue;
        }
        failures_in_a_row = 0;

        let (keep, gone) = (u, v);
        let ring = cm.neighbors(gone);
        let opposite = cm.collapse(keep, gone).opposite;
        alive[e] = false;
        by_pair.remove(&[u, v]);

        let mut merged = [[0usize; 2]; 2];
        for (side, &w) in opposite.iter().enumerate() {
            let kept_side = by_pair[&sorted_pair(keep, w)];
            let gone_side = by_pair
                .remove(&sorted_pair(gone, w))
                .expect("face edge exists");
            // the earlier-queued edge carries on, whichever endpoint survives
            let (survivor, absorbed) = if rank[gone_side] < rank[kept_side] {
                (gone_side, kept_side)
            } else {
                (kept_side, gone_side)
            };
            endpoints[survivor] = sorted_pair(keep, w);
            by_pair.insert(sorted_pair(keep, w), survivor);
            let (absorbed_group, e_group) = (std::mem::take(&mut groups[absorbed]), groups[e].clone());
            groups[survivor].extend(absorbed_group);
            groups[survivor].extend(e_group);
            alive[absorbed] = false;
            merged[side] = [survivor, absorbed];
        }
        for w in ring {
            if w == keep || opposite.contains(&w) {
                continue;
            }
            let id = by_pair
                .remove(&sorted_pair(gone, w))
                .expect("ring edge exists");
            let p = sorted_pair(keep, w);
            endpoints[id] = p;
            by_pair.insert(p, id);
        }
        collapses.push(CollapseRecord { edge: e, merged });
        remaining -= 3;
    }

    if remaining > target {
        return Err(NnError::PoolUnreachable {
            target,
            reached: remaining,
        });
    }

    // renumber: the pooled mesh orders edges by its own compacted vertex ids
    let pooled = cm.to_mesh();
    let mut new_to_old_vertex = Vec::with_capacity(pooled.vertex_count());
    for v in 0..mesh.vertex_count() {
        if cm.vertex_alive(v) {
            new_to_old_vertex.push(v);
        }
    }
    let rows = pooled
        .edges()
        .iter()
        .map(|&[a, b]| {
            let old = by_pair[&sorted_pair(new_to_old_vertex[a], new_to_old_vertex[b])];
            weights(&groups[old])
        })
        .collect();
    let trace = PoolTrace {
        input_edges: n_edges,
        collapses,
        rows,
    };
    Ok((trace, EdgeMesh::new(pooled)?))
}

/// Multiset of input edges to sorted `(edge, weight)` pairs summing to one.
fn weights(group: &[usize]) -> Vec<(usize, f64)> {
    let mut g = group.to_vec();
    g.sort_unstable();
    let n = g.len() as f64;
    let mut out: Vec<(usize, f64)> = Vec::new();
    for i in g {
        match out.last_mut() {
            Some((last, w)) if *last == i => *w += 1.0,
            _ => out.push((i, 1.0)),
        }
    }
    for (_, w) in &mut out {
        *w /= n;
    }
    out
}
