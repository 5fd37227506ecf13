//! Exact antichain width via Dilworth/König: the maximum antichain of a
//! DAG equals |V| minus a maximum matching in the split graph of its
//! transitive closure.

use std::collections::VecDeque;

/// Reachability sets by per-vertex DFS. `reach[u]` lists every `v != u`
/// reachable from `u`, ascending.
pub fn transitive_closure(succ: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = succ.len();
    let mut reach = Vec::with_capacity(n);
    let mut mark = vec![usize::MAX; n];
    let mut stack = Vec::new();
    for root in 0..n {
        let mut found = Vec::new();
        stack.clear();
        stack.extend(succ[root].iter().copied());
        while let Some(v) = stack.pop() {
            if mark[v] == root {
                continue;
            }
            mark[v] = root;
            found.push(v);
            stack.extend(succ[v].iter().copied().filter(|&w| mark[w] != root));
        }
        found.sort_unstable();
        reach.push(found);
    }
    reach
}

/// Hopcroft-Karp maximum matching. `adj[u]` lists right-side neighbours of
/// left vertex `u`; the right side has `right_len` vertices.
pub fn max_bipartite_matching(adj: &[Vec<usize>], right_len: usize) -> usize {
    const FREE: usize = usize::MAX;
    let left_len = adj.len();
    let mut match_left = vec![FREE; left_len];
    let mut match_right = vec![FREE; right_len];
    let mut dist = vec![0usize; left_len];
    let mut matching = 0;

    loop {
        // BFS layering from free left vertices.
        let mut queue = VecDeque::new();
        for u in 0..left_len {
            if match_left[u] == FREE {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = usize::MAX;
            }
        }
        let mut found_free = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                let w = match_right[v];
                if w == FREE {
                    found_free = true;
                } else if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        if !found_free {
            break;
        }

        // Iterative DFS along layered edges.
        let mut cursor = vec![0usize; left_len];
        for root in 0..left_len {
            if match_left[root] != FREE {
                continue;
            }
            let mut path: Vec<usize> = vec![root];
            while let Some(&u) = path.last() {
                if cursor[u] >= adj[u].len() {
                    dist[u] = usize::MAX;
                    path.pop();
                    continue;
                }
                let v = adj[u][cursor[u]];
                cursor[u] += 1;
                let w = match_right[v];
                if w == FREE {
                    // Augment along the path: each left vertex on the path takes
                    // the right vertex its cursor last stepped over.
                    for &l in path.iter().rev() {
                        let r = adj[l][cursor[l] - 1];
                        match_left[l] = r;
                        match_right[r] = l;
                    }
                    matching += 1;
                    break;
                } else if dist[w] == dist[u] + 1 {
                    path.push(w);
                }
            }
        }
    }
    matching
}

/// Maximum antichain size of the DAG given by successor lists.
pub(crate) fn exact_width(succ: &[Vec<usize>]) -> usize {
    let closure = transitive_closure(succ);
    succ.len() - max_bipartite_matching(&closure, succ.len())
}
