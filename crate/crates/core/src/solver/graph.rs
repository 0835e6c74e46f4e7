use crate::mdp::StateId;

use super::{MarkovChain, Mdp};

/// Tarjan's algorithm, iterative. Components come out in reverse topological
/// order: every edge leaving a component points into an earlier one.
pub fn strongly_connected_components(succ: &[Vec<StateId>]) -> Vec<Vec<StateId>> {
    const UNVISITED: usize = usize::MAX;
    let n = succ.len();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut components = Vec::new();
    let mut next_index = 0;
    // (node, position in its successor list)
    let mut call: Vec<(StateId, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos == 0 && index[v] == UNVISITED {
                index[v] = next_index;
                low[v] = next_index;
                next_index += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if let Some(&w) = succ[v].get(*pos) {
                *pos += 1;
                if index[w] == UNVISITED {
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
                components.push(comp);
            }
        }
    }
    components
}

/// Bottom strongly connected components of a chain, each sorted, ordered by
/// smallest member.
pub fn bsccs(chain: &MarkovChain) -> Vec<Vec<StateId>> {
    let succ = chain.successor_graph();
    let comps = strongly_connected_components(&succ);
    let mut comp_of = vec![0usize; succ.len()];
    for (i, c) in comps.iter().enumerate() {
        for &s in c {
            comp_of[s] = i;
        }
    }
    let mut bottom: Vec<Vec<StateId>> = comps
        .iter()
        .enumerate()
        .filter(|(i, c)| c.iter().all(|&s| succ[s].iter().all(|&t| comp_of[t] == *i)))
        .map(|(_, c)| c.clone())
        .collect();
    bottom.sort_by_key(|c| c[0]);
    bottom
}

/// True iff the union graph of all positive-probability transitions forms a
/// single strongly connected component.
pub fn is_strongly_connected(mdp: &Mdp) -> bool {
    strongly_connected_components(&mdp.successor_graph()).len() == 1
}
