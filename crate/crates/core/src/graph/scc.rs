//! Iterative Tarjan strongly-connected-components over an adjacency list.

/// Returns the strongly connected components of the graph given by `succ`
/// (node `i` has edges to every `succ[i][k]`). Components come out in reverse
/// topological order of the condensation; members of each component are
/// sorted ascending.
pub fn tarjan_scc(succ: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNVISITED: usize = usize::MAX;
    let n = succ.len();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next_index = 0;
    // (node, position in its successor list)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if let Some(&w) = succ[v].get(*pos) {
                *pos += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                comps.push(comp);
            }
        }
    }
    comps
}

/// Components that contain a cycle: size > 1, or a single node with a self-loop.
pub fn cyclic_components(succ: &[Vec<usize>]) -> Vec<Vec<usize>> {
    tarjan_scc(succ)
        .into_iter()
        .filter(|c| c.len() > 1 || succ[c[0]].contains(&c[0]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cycle_and_self_loop() {
        let succ = vec![vec![1], vec![0], vec![2], vec![]];
        let mut cyc = cyclic_components(&succ);
        cyc.sort();
        assert_eq!(cyc, vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn dag_has_no_cycles() {
        let succ = vec![vec![1, 2], vec![2], vec![]];
        assert!(cyclic_components(&succ).is_empty());
        assert_eq!(tarjan_scc(&succ).len(), 3);
    }

    #[test]
    fn deep_chain_does_not_overflow() {
        let n = 200_000;
        let mut succ: Vec<Vec<usize>> = (0..n).map(|i| vec![i + 1]).collect();
        succ[n - 1] = vec![0];
        let cyc = cyclic_components(&succ);
        assert_eq!(cyc.len(), 1);
        assert_eq!(cyc[0].len(), n);
    }
}
