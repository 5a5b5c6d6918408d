//! Edmonds-Karp max-flow on a session graph, used to cross-check cuts.

use std::collections::VecDeque;

use crate::overlay::{SessionGraph, Vertex};

fn index(g: &SessionGraph, v: Vertex) -> usize {
    let n = g.num_sinks();
    match v {
        Vertex::Source => 0,
        Vertex::Relay(i) => 1 + i,
        Vertex::Helper(k) => 1 + n + k,
        Vertex::Sink(j) => 1 + g.num_middle() + j,
    }
}

fn vertex(g: &SessionGraph, i: usize) -> Vertex {
    let (n, m) = (g.num_sinks(), g.num_middle());
    match i {
        0 => Vertex::Source,
        i if i <= n => Vertex::Relay(i - 1),
        i if i <= m => Vertex::Helper(i - 1 - n),
        i => Vertex::Sink(i - 1 - m),
    }
}

/// Max-flow value from the source to sink `j` and the edges of a minimum cut.
pub fn max_flow(g: &SessionGraph, j: usize) -> (f64, Vec<(Vertex, Vertex)>) {
    let size = 1 + g.num_middle() + g.num_sinks();
    let mut cap = vec![vec![0.0f64; size]; size];
    let edges = g.edges();
    for &(a, b, c) in &edges {
        cap[index(g, a)][index(g, b)] += c;
    }
    let (s, t) = (0, index(g, Vertex::Sink(j)));
    let mut flow = 0.0;
    loop {
        let mut prev = vec![usize::MAX; size];
        prev[s] = s;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for v in 0..size {
                if prev[v] == usize::MAX && cap[u][v] > 0.0 {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if prev[t] == usize::MAX {
            break;
        }
        let mut push = f64::INFINITY;
        let mut v = t;
        while v != s {
            push = push.min(cap[prev[v]][v]);
            v = prev[v];
        }
        let mut v = t;
        while v != s {
            let u = prev[v];
            cap[u][v] -= push;
            cap[v][u] += push;
            v = u;
        }
        flow += push;
    }
    let mut seen = vec![false; size];
    seen[s] = true;
    let mut queue = VecDeque::from([s]);
    while let Some(u) = queue.pop_front() {
        for v in 0..size {
            if !seen[v] && cap[u][v] > 0.0 {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    let cut = edges
        .iter()
        .filter(|(a, b, _)| seen[index(g, *a)] && !seen[index(g, *b)])
        .map(|&(a, b, _)| (a, b))
        .collect();
    // Index round trip keeps the vertex layout honest.
    debug_assert!((0..size).all(|i| index(g, vertex(g, i)) == i));
    (flow, cut)
}
