//! Optimal gated assignment.
//!
//! With a finite gate every admissible pair earns `d_max − cost` and the
//! matching with the largest total gain wins, so a pair at exactly `d_max` is
//! neutral. With an infinite gate the matching has maximum cardinality and,
//! among those, minimum cost. Equal optima are resolved towards the
//! lexicographically smallest sequence of LED indices per cluster, with
//! "unmatched" ranking after every LED.
//!
//! The problem is padded to a square `(M + N)` matrix: cluster rows may take
//! a dummy column (unmatched) and LED columns a dummy row. It is solved with
//! the shortest-augmenting-path Hungarian method, and the tie rule is then
//! applied by swapping along alternating paths of zero reduced cost.

use std::collections::VecDeque;

use super::{Assignment, CostMatrix, Pair};

/// Minimum-cost injective matching over the admissible entries of `cost`.
///
/// Connected components of the admissibility graph are solved separately;
/// both the optimum and the tie rule decompose over them.
pub fn assign(cost: &CostMatrix) -> Assignment {
    let (m, n) = (cost.rows(), cost.cols());
    // Union-find over rows `0..m` and columns `m..m + n`.
    let mut parent: Vec<usize> = (0..m + n).collect();
    let mut has_edge = vec![false; m + n];
    for i in 0..m {
        for j in 0..n {
            if cost.is_admissible(i, j) {
                has_edge[i] = true;
                has_edge[m + j] = true;
                let (a, b) = (find(&mut parent, i), find(&mut parent, m + j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut components: Vec<(usize, Vec<usize>, Vec<usize>)> = Vec::new();
    for v in 0..m + n {
        if !has_edge[v] {
            continue;
        }
        let root = find(&mut parent, v);
        let k = match components.iter().position(|c| c.0 == root) {
            Some(k) => k,
            None => {
                components.push((root, Vec::new(), Vec::new()));
                components.len() - 1
            }
        };
        if v < m {
            components[k].1.push(v);
        } else {
            components[k].2.push(v - m);
        }
    }

    let mut pairs = Vec::new();
    for (_, rows, cols) in &components {
        if rows.len() == 1 && cols.len() == 1 {
            pairs.push(Pair { cluster: rows[0], led: cols[0], cost: cost.get(rows[0], cols[0]) });
            continue;
        }
        let sub: Vec<f64> = rows.iter().flat_map(|&i| cols.iter().map(move |&j| cost.get(i, j))).collect();
        let sub = CostMatrix::new(rows.len(), cols.len(), sub, cost.d_max).expect("sub-matrix of a valid matrix");
        for p in solve(&sub).pairs {
            pairs.push(Pair { cluster: rows[p.cluster], led: cols[p.led], ..p });
        }
    }
    pairs.sort_by_key(|p| p.cluster);
    let mut row_taken = vec![false; m];
    let mut col_taken = vec![false; n];
    for p in &pairs {
        row_taken[p.cluster] = true;
        col_taken[p.led] = true;
    }
    Assignment {
        pairs,
        unmatched_clusters: (0..m).filter(|&i| !row_taken[i]).collect(),
        unmatched_leds: (0..n).filter(|&j| !col_taken[j]).collect(),
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// [`assign`] on a single matrix without decomposition.
fn solve(cost: &CostMatrix) -> Assignment {
    let (m, n) = (cost.rows(), cost.cols());
    let admissible = |i: usize, j: usize| cost.is_admissible(i, j);
    if m == 0 || n == 0 || !(0..m).any(|i| (0..n).any(|j| admissible(i, j))) {
        return Assignment { pairs: Vec::new(), unmatched_clusters: (0..m).collect(), unmatched_leds: (0..n).collect() };
    }

    let reward = if cost.d_max.is_finite() {
        cost.d_max
    } else {
        let max_cost = (0..m)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| admissible(i, j))
            .map(|(i, j)| cost.get(i, j))
            .fold(0.0, f64::max);
        1.0 + 2.0 * (m.min(n) as f64 + 1.0) * (max_cost + 1.0)
    };
    let size = m + n;
    let mut a = vec![0.0; size * size];
    for i in 0..m {
        for j in 0..n {
            a[i * size + j] = if admissible(i, j) { cost.get(i, j) - reward } else { f64::INFINITY };
        }
    }
    let scale = a.iter().filter(|v| v.is_finite()).fold(1.0f64, |s, v| s.max(v.abs()));
    let tol = 1e-9 * scale * size as f64;

    let solution = solve_square(&a, size);
    let mut sigma = solution.row_to_col;
    let mut owner = vec![0usize; size];
    for (i, &j) in sigma.iter().enumerate() {
        owner[j] = i;
    }
    let tight = |i: usize, j: usize| {
        let v = a[i * size + j];
        v.is_finite() && v - solution.u[i] - solution.v[j] <= tol
    };

    let mut fixed = vec![false; size];
    for i in 0..m {
        let rank = if sigma[i] < n { sigma[i] } else { n };
        for j in 0..rank {
            if tight(i, j) && reroute(i, j, &mut sigma, &mut owner, &fixed, &tight) {
                break;
            }
        }
        fixed[i] = true;
    }

    let mut pairs = Vec::new();
    let mut unmatched_clusters = Vec::new();
    let mut led_taken = vec![false; n];
    for (i, &j) in sigma.iter().enumerate().take(m) {
        if j < n {
            pairs.push(Pair { cluster: i, led: j, cost: cost.get(i, j) });
            led_taken[j] = true;
        } else {
            unmatched_clusters.push(i);
        }
    }
    let unmatched_leds = (0..n).filter(|&j| !led_taken[j]).collect();
    Assignment { pairs, unmatched_clusters, unmatched_leds }
}

/// Moves row `i` onto column `j` by shifting the rows along an alternating
/// path of tight edges from `j`'s owner back to `i`'s current column. Rows
/// already fixed never move.
fn reroute(
    i: usize,
    j: usize,
    sigma: &mut [usize],
    owner: &mut [usize],
    fixed: &[bool],
    tight: &impl Fn(usize, usize) -> bool,
) -> bool {
    let size = sigma.len();
    let start = owner[j];
    if fixed[start] || start == i {
        return false;
    }
    let target = sigma[i];
    // parent[row] = (previous row, column it would take).
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; size];
    let mut seen = vec![false; size];
    seen[start] = true;
    seen[i] = true;
    let mut queue = VecDeque::from([start]);
    let mut end = None;
    'search: while let Some(r) = queue.pop_front() {
        for c in 0..size {
            if c == j || c == sigma[r] || !tight(r, c) {
                continue;
            }
            if c == target {
                end = Some((r, c));
                break 'search;
            }
            let next = owner[c];
            if seen[next] || fixed[next] {
                continue;
            }
            seen[next] = true;
            parent[next] = Some((r, c));
            queue.push_back(next);
        }
    }
    let Some((mut row, mut col)) = end else {
        return false;
    };
    loop {
        let prev_col = sigma[row];
        sigma[row] = col;
        owner[col] = row;
        match parent[row] {
            Some((prev_row, _)) => {
                col = prev_col;
                row = prev_row;
            }
            None => break,
        }
    }
    sigma[i] = j;
    owner[j] = i;
    true
}

struct Solution {
    row_to_col: Vec<usize>,
    u: Vec<f64>,
    v: Vec<f64>,
}

/// Hungarian method with potentials on a square row-major matrix whose
/// `INFINITY` entries are missing edges. A perfect matching over finite
/// entries must exist.
fn solve_square(a: &[f64], size: usize) -> Solution {
    const INF: f64 = f64::INFINITY;
    // 1-based: index 0 is the virtual root.
    let mut u = vec![0.0; size + 1];
    let mut v = vec![0.0; size + 1];
    let mut p = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    let mut minv = vec![INF; size + 1];
    let mut used = vec![false; size + 1];
    for i in 1..=size {
        p[0] = i;
        let mut j0 = 0;
        minv.fill(INF);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0;
            let row = &a[(i0 - 1) * size..i0 * size];
            for j in 1..=size {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            debug_assert!(delta.is_finite(), "padded matrix always has a perfect matching");
            for j in 0..=size {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; size];
    for j in 1..=size {
        row_to_col[p[j] - 1] = j - 1;
    }
    Solution { row_to_col, u: u[1..].to_vec(), v: v[1..].to_vec() }
}
