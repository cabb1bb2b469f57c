use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::basis::gauss_legendre_rule;

/// Sparse-grid level. Level `L` uses 1-D Gauss rules of `ℓ + 1` points with
/// `L - d + 1 <= |ℓ|₁ <= L`, and a total-degree basis of order `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub level: usize,
}

/// All multi-indices of length `d` with entries summing to exactly `total`,
/// in lexicographic order.
fn compositions(d: usize, total: usize, out: &mut Vec<Vec<usize>>) {
    fn rec(prefix: &mut Vec<usize>, d: usize, left: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == d {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(prefix, d, left - k, out);
            prefix.pop();
        }
    }
    rec(&mut Vec::with_capacity(d), d, total, out);
}

/// Total-degree index set `{α : |α|₁ <= order}`, graded by degree and
/// lexicographic within a degree. Size is `C(d + order, order)`.
pub fn total_degree_indices(d: usize, order: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=order {
        let mut level = Vec::new();
        compositions(d, total, &mut level);
        out.extend(level.into_iter().map(|a| a.into_iter().map(|v| v as u32).collect()));
    }
    out
}

/// Smolyak node set in reference coordinates, deduplicated and sorted
/// lexicographically.
pub fn sparse_grid_nodes(d: usize, spec: GridSpec) -> Vec<Vec<f64>> {
    assert!(d >= 1, "sparse grid dimension must be >= 1");
    let level = spec.level;
    let mut rules: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut nodes: Vec<Vec<f64>> = Vec::new();
    let lowest = (level + 1).saturating_sub(d);
    for total in lowest..=level {
        let mut levels = Vec::new();
        compositions(d, total, &mut levels);
        for l in levels {
            let axes: Vec<Vec<f64>> = l
                .iter()
                .map(|&li| {
                    rules
                        .entry(li + 1)
                        .or_insert_with(|| gauss_legendre_rule(li + 1).expect("n >= 1").0)
                        .clone()
                })
                .collect();
            tensor_product(&axes, &mut nodes);
        }
    }
    nodes.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    nodes.dedup();
    nodes
}

fn tensor_product(axes: &[Vec<f64>], out: &mut Vec<Vec<f64>>) {
    let d = axes.len();
    let mut idx = vec![0usize; d];
    loop {
        out.push((0..d).map(|k| axes[k][idx[k]]).collect());
        let mut k = d;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn one_dimension_is_the_gauss_rule() {
        for level in 0..6 {
            let nodes = sparse_grid_nodes(1, GridSpec { level });
            let (gauss, _) = gauss_legendre_rule(level + 1).unwrap();
            let flat: Vec<f64> = nodes.into_iter().map(|n| n[0]).collect();
            assert_eq!(flat, gauss);
        }
    }

    #[test]
    fn level_zero_is_the_centre() {
        assert_eq!(sparse_grid_nodes(2, GridSpec { level: 0 }), vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn frozen_node_counts() {
        for (d, level, count) in [
            (2, 2, 13),
            (3, 3, 69),
            (3, 4, 165),
            (3, 5, 351),
            (7, 3, 589),
            (7, 4, 2437),
        ] {
            assert_eq!(sparse_grid_nodes(d, GridSpec { level }).len(), count, "d={d} L={level}");
        }
    }

    #[test]
    fn nodes_lie_in_full_tensor_superset() {
        // every sparse node appears in the tensor grid built from all rules up
        // to n = L + 1 points
        let (d, level) = (3, 3);
        let mut axis: Vec<f64> = (1..=level + 1)
            .flat_map(|n| gauss_legendre_rule(n).unwrap().0)
            .collect();
        axis.sort_by(f64::total_cmp);
        axis.dedup();
        let nodes = sparse_grid_nodes(d, GridSpec { level });
        for n in &nodes {
            assert!(n.iter().all(|x| axis.contains(x)));
        }
        let mut seen = nodes.clone();
        seen.dedup();
        assert_eq!(seen.len(), nodes.len());
        assert!(nodes.len() < axis.len().pow(d as u32));
    }

    #[test]
    fn basis_size_is_binomial() {
        for d in 1..=7 {
            for order in 0..=5 {
                let idx = total_degree_indices(d, order);
                assert_eq!(idx.len(), binom(d + order, order));
                assert_eq!(idx[0], vec![0; d]);
            }
        }
    }
}
