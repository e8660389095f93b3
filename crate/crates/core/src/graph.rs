//! Active graph, strongly connected components and flood detection.

use num_traits::Signed;
use thiserror::Error;

use crate::clearing::ClearingState;
use crate::model::{BankId, ClaimId, FinancialNetwork};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("unknown bank index {0}")]
    UnknownBankId(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveEdge {
    pub claim: ClaimId,
    pub debtor: BankId,
    pub creditor: BankId,
    pub slope: Rational,
    /// Index of the payment-function interval the debtor's assets lie in.
    pub interval: usize,
}

/// Claims whose payment function has positive slope at the current assets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveGraph {
    edges: Vec<ActiveEdge>,
    out: Vec<Vec<usize>>,
}

impl ActiveGraph {
    /// Active graph over all claims except those for which `skip` is true.
    pub fn build_filtered(
        net: &FinancialNetwork,
        assets: &[Rational],
        skip: impl Fn(ClaimId) -> bool,
    ) -> Self {
        let mut edges = Vec::new();
        let mut out = vec![Vec::new(); net.num_banks()];
        for (i, c) in net.claims().iter().enumerate() {
            if skip(ClaimId(i)) {
                continue;
            }
            let a = &assets[c.debtor.0];
            let slope = c.payment.slope_at(a);
            if slope.is_positive() {
                out[c.debtor.0].push(edges.len());
                edges.push(ActiveEdge {
                    claim: ClaimId(i),
                    debtor: c.debtor,
                    creditor: c.creditor,
                    slope: slope.clone(),
                    interval: c.payment.interval_index(a),
                });
            }
        }
        Self { edges, out }
    }

    pub fn num_banks(&self) -> usize {
        self.out.len()
    }

    pub fn edges(&self) -> &[ActiveEdge] {
        &self.edges
    }

    pub fn out_edges(&self, v: BankId) -> impl Iterator<Item = &ActiveEdge> {
        self.out[v.0].iter().map(move |&i| &self.edges[i])
    }

    pub fn is_active(&self, e: ClaimId) -> bool {
        self.edges.iter().any(|a| a.claim == e)
    }

    /// Sorted `(claim, interval)` pairs. Two states are in the same phase
    /// exactly when their keys are equal.
    pub fn phase_key(&self) -> Vec<(ClaimId, usize)> {
        let mut key: Vec<_> = self.edges.iter().map(|e| (e.claim, e.interval)).collect();
        key.sort();
        key
    }

    /// Same graph with every active out-edge of `w` dropped.
    pub fn without_out_edges(&self, w: BankId) -> Self {
        let mut edges = Vec::with_capacity(self.edges.len());
        let mut out = vec![Vec::new(); self.out.len()];
        for e in &self.edges {
            if e.debtor != w {
                out[e.debtor.0].push(edges.len());
                edges.push(e.clone());
            }
        }
        Self { edges, out }
    }

    fn successors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.out[v].iter().map(move |&i| self.edges[i].creditor.0)
    }
}

pub fn active_graph(net: &FinancialNetwork, state: &ClearingState) -> ActiveGraph {
    ActiveGraph::build_filtered(net, state.assets(), |_| false)
}

/// SCCs of an active graph and the DAG between them. Components are
/// numbered by their smallest member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Condensation {
    components: Vec<Vec<BankId>>,
    component_of: Vec<usize>,
    successors: Vec<Vec<usize>>,
}

impl Condensation {
    pub fn components(&self) -> &[Vec<BankId>] {
        &self.components
    }

    pub fn component(&self, c: usize) -> &[BankId] {
        &self.components[c]
    }

    pub fn component_of(&self, v: BankId) -> usize {
        self.component_of[v.0]
    }

    /// Components reached by an edge leaving `c`, ascending.
    pub fn successors(&self, c: usize) -> &[usize] {
        &self.successors[c]
    }

    pub fn is_sink(&self, c: usize) -> bool {
        self.successors[c].is_empty()
    }

    pub fn is_singleton(&self, c: usize) -> bool {
        self.components[c].len() == 1
    }

    /// Components ordered so that every DAG edge points forward.
    pub fn topological_order(&self) -> Vec<usize> {
        let k = self.components.len();
        let mut indegree = vec![0usize; k];
        for s in &self.successors {
            for &t in s {
                indegree[t] += 1;
            }
        }
        let mut ready: Vec<usize> = (0..k).rev().filter(|&c| indegree[c] == 0).collect();
        let mut order = Vec::with_capacity(k);
        while let Some(c) = ready.pop() {
            order.push(c);
            for &t in self.successors[c].iter().rev() {
                indegree[t] -= 1;
                if indegree[t] == 0 {
                    ready.push(t);
                }
            }
        }
        order
    }
}

/// Tarjan's algorithm, iterative.
pub fn condense(g: &ActiveGraph) -> Condensation {
    let n = g.num_banks();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut raw: Vec<Vec<usize>> = Vec::new();
    let mut counter = 0;
    let succ: Vec<Vec<usize>> = (0..n).map(|v| g.successors(v).collect()).collect();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(top) = call.last_mut() {
            let v = top.0;
            if top.1 < succ[v].len() {
                let w = succ[v][top.1];
                top.1 += 1;
                if index[w] == UNSEEN {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    raw.push(comp);
                }
            }
        }
    }

    raw.sort_by_key(|c| c[0]);
    let mut component_of = vec![0; n];
    for (i, comp) in raw.iter().enumerate() {
        for &v in comp {
            component_of[v] = i;
        }
    }
    let mut successors: Vec<Vec<usize>> = vec![Vec::new(); raw.len()];
    for (v, list) in succ.iter().enumerate() {
        for &w in list {
            let (a, b) = (component_of[v], component_of[w]);
            if a != b {
                successors[a].push(b);
            }
        }
    }
    for s in &mut successors {
        s.sort_unstable();
        s.dedup();
    }
    let components = raw.into_iter().map(|c| c.into_iter().map(BankId).collect()).collect();
    Condensation { components, component_of, successors }
}

pub(crate) fn reachable_mask(g: &ActiveGraph, v: BankId) -> Vec<bool> {
    let mut seen = vec![false; g.num_banks()];
    let mut todo = vec![v.0];
    seen[v.0] = true;
    while let Some(u) = todo.pop() {
        for w in g.successors(u) {
            if !seen[w] {
                seen[w] = true;
                todo.push(w);
            }
        }
    }
    seen
}

/// Banks reachable from `v` along active edges, including `v`, ascending.
pub fn reachable_from(g: &ActiveGraph, v: BankId) -> Result<Vec<BankId>, GraphError> {
    if v.0 >= g.num_banks() {
        return Err(GraphError::UnknownBankId(v.0));
    }
    let mask = reachable_mask(g, v);
    Ok((0..mask.len()).filter(|&u| mask[u]).map(BankId).collect())
}

/// The non-singleton sink component reachable from `v` with the smallest
/// member, if any.
pub fn find_flood_component(
    g: &ActiveGraph,
    c: &Condensation,
    v: BankId,
) -> Result<Option<usize>, GraphError> {
    if v.0 >= g.num_banks() {
        return Err(GraphError::UnknownBankId(v.0));
    }
    let mut seen = vec![false; c.components().len()];
    let start = c.component_of(v);
    let mut todo = vec![start];
    seen[start] = true;
    let mut best: Option<usize> = None;
    while let Some(k) = todo.pop() {
        if c.is_sink(k) && !c.is_singleton(k) && best.is_none_or(|b| k < b) {
            best = Some(k);
        }
        for &t in c.successors(k) {
            if !seen[t] {
                seen[t] = true;
                todo.push(t);
            }
        }
    }
    Ok(best)
}

/// All non-singleton sink components, ascending.
pub fn flood_components(c: &Condensation) -> Vec<usize> {
    (0..c.components().len()).filter(|&k| c.is_sink(k) && !c.is_singleton(k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NetworkSpec;
    use crate::rational::int;

    fn example3() -> FinancialNetwork {
        NetworkSpec::new()
            .bank("u", 1)
            .bank("v", 2)
            .bank("w", 0)
            .bank("y", 0)
            .claim("u", "v", 2)
            .claim("v", "w", 2)
            .claim("v", "y", 2)
            .claim("y", "v", 2)
            .edge_ranking("v", &["w", "y"])
            .build()
            .unwrap()
    }

    fn at(values: &[i64]) -> ClearingState {
        ClearingState::new(values.iter().map(|&x| int(x)).collect())
    }

    #[test]
    fn example3_initial_active_graph() {
        let net = example3();
        let g = active_graph(&net, &at(&[0, 0, 0, 0]));
        let claims: Vec<usize> = g.edges().iter().map(|e| e.claim.0).collect();
        assert_eq!(claims, vec![0, 1, 3]);
        let c = condense(&g);
        assert_eq!(c.components().len(), 4);
        assert!((0..4).all(|k| c.is_singleton(k)));
        assert_eq!(reachable_from(&g, BankId(0)).unwrap(), vec![BankId(0), BankId(1), BankId(2)]);
        assert_eq!(find_flood_component(&g, &c, BankId(0)).unwrap(), None);
    }

    #[test]
    fn example3_after_phase_change() {
        let net = example3();
        let g = active_graph(&net, &at(&[1, 2, 2, 0]));
        let claims: Vec<usize> = g.edges().iter().map(|e| e.claim.0).collect();
        assert_eq!(claims, vec![0, 2, 3]);
        let c = condense(&g);
        let k = find_flood_component(&g, &c, BankId(1)).unwrap().unwrap();
        assert_eq!(c.component(k), &[BankId(1), BankId(3)]);
        assert!(c.is_sink(k));
        assert_eq!(flood_components(&c), vec![k]);
    }

    #[test]
    fn solvent_banks_have_no_active_edges() {
        let net = example3();
        let g = active_graph(&net, &at(&[2, 4, 0, 2]));
        assert!(g.edges().is_empty());
        assert_eq!(condense(&g).components().len(), 4);
        assert_eq!(reachable_from(&g, BankId(2)).unwrap(), vec![BankId(2)]);
        assert_eq!(reachable_from(&g, BankId(9)), Err(GraphError::UnknownBankId(9)));
    }

    #[test]
    fn three_cycle_is_one_component() {
        let net = NetworkSpec::new()
            .bank("a", 0)
            .bank("b", 0)
            .bank("c", 0)
            .claim("a", "b", 1)
            .claim("b", "c", 1)
            .claim("c", "a", 1)
            .build()
            .unwrap();
        let g = active_graph(&net, &at(&[0, 0, 0]));
        let c = condense(&g);
        assert_eq!(c.components().len(), 1);
        for v in 0..3 {
            assert_eq!(reachable_from(&g, BankId(v)).unwrap().len(), 3);
        }
        assert_eq!(c.topological_order(), vec![0]);
    }

    #[test]
    fn topological_order_respects_edges() {
        let net = NetworkSpec::new()
            .bank("a", 0)
            .bank("b", 0)
            .bank("c", 0)
            .claim("c", "b", 1)
            .claim("b", "a", 1)
            .build()
            .unwrap();
        let g = active_graph(&net, &at(&[0, 0, 0]));
        let c = condense(&g);
        assert_eq!(c.topological_order(), vec![2, 1, 0]);
    }
}
