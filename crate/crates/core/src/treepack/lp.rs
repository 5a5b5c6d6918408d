//! Fractional tree packing by column generation, used to certify packing
//! bounds and to steer the packer past greedy dead ends.
//!
//! The master problem `max sum x_T  s.t.  sum_{T ∋ e} x_T <= c_e` is solved
//! through its dual `min sum c_e w_e  s.t.  sum_{e ∈ T} w_e >= 1`, whose rows
//! are the trees generated so far. Pricing finds the cheapest two-hop tree
//! under `w` by enumerating the set of middle vertices it uses.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use super::{Residual, UnitEdge};

/// Above this many usable middle vertices the pricing enumeration is skipped.
pub(super) const MAX_PRICING_MIDS: usize = 16;

const EPS: f64 = 1e-9;

/// A unit tree as the middle vertex feeding each sink.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub(super) struct Column(pub Vec<usize>);

impl Column {
    pub fn edges(&self) -> Vec<UnitEdge> {
        let mut edges: Vec<UnitEdge> = self.0.iter().map(|&v| UnitEdge::ToMid(v)).collect();
        edges.extend(self.0.iter().enumerate().map(|(j, &v)| UnitEdge::ToSink(v, j)));
        edges.sort();
        edges.dedup();
        edges
    }
}

pub(super) struct Fractional {
    /// Optimal fractional packing value, in units.
    pub value: f64,
    pub columns: Vec<(Column, f64)>,
}

struct Layout<'a> {
    res: &'a Residual,
    mids: usize,
    sinks: usize,
    own: Vec<Vec<bool>>,
    /// Position of each finite `v -> t_j` edge in `finite_edges`.
    index: Vec<Vec<Option<usize>>>,
}

impl Layout<'_> {
    fn reach(&self, v: usize, j: usize) -> bool {
        self.res.to_mid[v] >= 1 && self.res.to_sink[v][j] >= 1
    }

    /// Finite-capacity edges, which are the only ones that can bind.
    fn finite_edges(&self) -> Vec<UnitEdge> {
        let mut edges: Vec<UnitEdge> = (0..self.mids).map(UnitEdge::ToMid).collect();
        for v in 0..self.mids {
            for j in 0..self.sinks {
                if !self.own[v][j] {
                    edges.push(UnitEdge::ToSink(v, j));
                }
            }
        }
        edges
    }

    fn cap(&self, e: UnitEdge) -> f64 {
        match e {
            UnitEdge::ToMid(v) => self.res.to_mid[v] as f64,
            UnitEdge::ToSink(v, j) => self.res.to_sink[v][j] as f64,
        }
    }

    /// Cheapest tree under edge weights `w` (indexed like `finite_edges`).
    fn price(&self, w: &[f64]) -> Option<(f64, Column)> {
        let usable: Vec<usize> = (0..self.mids).filter(|&v| self.res.to_mid[v] >= 1).collect();
        let sink_w = |v: usize, j: usize| -> f64 {
            if self.own[v][j] {
                0.0
            } else {
                w[self.sink_index(v, j)]
            }
        };
        let mut best: Option<(f64, Column)> = None;
        for mask in 1u32..(1u32 << usable.len()) {
            let set: Vec<usize> = (0..usable.len())
                .filter(|&i| mask & (1 << i) != 0)
                .map(|i| usable[i])
                .collect();
            let mut cost: f64 = set.iter().map(|&v| w[v]).sum();
            let mut pick = Vec::with_capacity(self.sinks);
            for j in 0..self.sinks {
                let Some((c, v)) = set
                    .iter()
                    .filter(|&&v| self.reach(v, j))
                    .map(|&v| (sink_w(v, j), v))
                    .min_by(|a, b| a.0.total_cmp(&b.0))
                else {
                    cost = f64::INFINITY;
                    break;
                };
                cost += c;
                pick.push(v);
            }
            // A subset with an idle vertex costs at least as much as the one
            // without it, so only exact supports are kept.
            if cost.is_finite()
                && set.iter().all(|v| pick.contains(v))
                && best.as_ref().is_none_or(|(b, _)| cost < *b - EPS)
            {
                best = Some((cost, Column(pick)));
            }
        }
        best
    }

    fn sink_index(&self, v: usize, j: usize) -> usize {
        self.index[v][j].expect("own-sink edges have no weight")
    }

    fn edge_index(&self, e: UnitEdge) -> Option<usize> {
        match e {
            UnitEdge::ToMid(v) => Some(v),
            UnitEdge::ToSink(v, j) => (!self.own[v][j]).then(|| self.sink_index(v, j)),
        }
    }
}

/// Solves the fractional packing LP on `res`. `None` when the instance is too
/// wide to price exhaustively or the LP solver fails.
pub(super) fn fractional(res: &Residual, own: Vec<Vec<bool>>) -> Option<Fractional> {
    let mids = res.to_mid.len();
    let sinks = res.to_sink.first().map_or(0, Vec::len);
    let mut index = vec![vec![None; sinks]; mids];
    let mut next = mids;
    for v in 0..mids {
        for j in 0..sinks {
            if !own[v][j] {
                index[v][j] = Some(next);
                next += 1;
            }
        }
    }
    let layout = Layout {
        res,
        mids,
        sinks,
        own,
        index,
    };
    if sinks == 0 || (0..mids).filter(|&v| res.to_mid[v] >= 1).count() > MAX_PRICING_MIDS {
        return None;
    }
    let edges = layout.finite_edges();
    let mut columns: Vec<Column> = Vec::new();
    let mut w = vec![0.0; edges.len()];
    // No tree at all leaves the value at zero.
    while let Some((cost, col)) = layout.price(&w) {
        if cost >= 1.0 - 1e-7 || columns.contains(&col) {
            break;
        }
        columns.push(col);
        let mut dual = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<_> = edges
            .iter()
            .map(|&e| dual.add_var(layout.cap(e), (0.0, f64::INFINITY)))
            .collect();
        for c in &columns {
            let row: Vec<_> = c
                .edges()
                .into_iter()
                .filter_map(|e| layout.edge_index(e))
                .map(|i| (vars[i], 1.0))
                .collect();
            dual.add_constraint(row, ComparisonOp::Ge, 1.0);
        }
        let sol = dual.solve().ok()?.into_solution().ok()?;
        w = vars.iter().map(|&x| sol[x].max(0.0)).collect();
    }
    if columns.is_empty() {
        return Some(Fractional {
            value: 0.0,
            columns: vec![],
        });
    }

    let mut primal = Problem::new(OptimizationDirection::Maximize);
    let xs: Vec<_> = columns
        .iter()
        .map(|_| primal.add_var(1.0, (0.0, f64::INFINITY)))
        .collect();
    let mut rows: Vec<Vec<(microlp::Variable, f64)>> = vec![Vec::new(); edges.len()];
    for (c, &x) in columns.iter().zip(&xs) {
        for i in c.edges().into_iter().filter_map(|e| layout.edge_index(e)) {
            rows[i].push((x, 1.0));
        }
    }
    for (i, row) in rows.into_iter().enumerate() {
        if !row.is_empty() {
            primal.add_constraint(row, ComparisonOp::Le, layout.cap(edges[i]));
        }
    }
    let sol = primal.solve().ok()?.into_solution().ok()?;
    Some(Fractional {
        value: sol.objective(),
        columns: columns
            .into_iter()
            .zip(&xs)
            .map(|(c, &x)| (c, sol[x].max(0.0)))
            .collect(),
    })
}

/// Integral packing guided by the fractional optimum: take the integer parts
/// of every column, or one copy of the heaviest column when all are below
/// one, and re-solve on what is left.
pub(super) fn lp_rounding(mut res: Residual, own: &[Vec<bool>]) -> Option<Vec<(Vec<UnitEdge>, u64)>> {
    let mut packed = Vec::new();
    loop {
        let frac = fractional(&res, own.to_vec())?;
        if frac.value < 1.0 - EPS {
            return Some(packed);
        }
        let mut took = false;
        for (col, x) in &frac.columns {
            let edges = col.edges();
            let room = edges.iter().map(|&e| *res.cap_mut(e)).min().unwrap_or(0);
            let copies = ((x + EPS).floor() as u64).min(room);
            if copies >= 1 {
                res.remove(&edges, copies);
                packed.push((edges, copies));
                took = true;
            }
        }
        if !took {
            let (col, _) = frac
                .columns
                .iter()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("positive value has a column");
            let edges = col.edges();
            if edges.iter().any(|&e| *res.cap_mut(e) == 0) {
                return Some(packed);
            }
            res.remove(&edges, 1);
            packed.push((edges, 1));
        }
    }
}

