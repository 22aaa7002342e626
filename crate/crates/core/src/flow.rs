//! Dinic max-flow on real capacities.

use std::collections::VecDeque;

#[derive(Clone, Debug)]
struct Arc {
    to: usize,
    cap: f64,
    rev: usize,
}

#[derive(Clone, Debug)]
pub struct FlowNetwork {
    adj: Vec<Vec<Arc>>,
    eps: f64,
}

impl FlowNetwork {
    pub fn new(n: usize) -> Self {
        Self {
            adj: vec![Vec::new(); n],
            eps: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    /// Undirected edge: capacity `cap` in both directions.
    pub fn add_undirected(&mut self, u: usize, v: usize, cap: f64) {
        let (ru, rv) = (self.adj[v].len(), self.adj[u].len());
        self.adj[u].push(Arc { to: v, cap, rev: ru });
        self.adj[v].push(Arc { to: u, cap, rev: rv });
    }

    fn levels(&self, s: usize) -> Vec<usize> {
        let mut level = vec![usize::MAX; self.adj.len()];
        level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for a in &self.adj[u] {
                if a.cap > self.eps && level[a.to] == usize::MAX {
                    level[a.to] = level[u] + 1;
                    q.push_back(a.to);
                }
            }
        }
        level
    }

    fn push(&mut self, u: usize, t: usize, limit: f64, level: &[usize], next: &mut [usize]) -> f64 {
        if u == t {
            return limit;
        }
        while next[u] < self.adj[u].len() {
            let i = next[u];
            let Arc { to, cap, rev } = self.adj[u][i];
            if cap > self.eps && level[to] == level[u] + 1 {
                let pushed = self.push(to, t, limit.min(cap), level, next);
                if pushed > 0.0 {
                    self.adj[u][i].cap -= pushed;
                    self.adj[to][rev].cap += pushed;
                    return pushed;
                }
            }
            next[u] += 1;
        }
        0.0
    }

    /// Maximum `s`-`t` flow value. Infinite when an all-infinite path
    /// joins the terminals.
    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let finite: f64 = self
            .adj
            .iter()
            .flatten()
            .filter(|a| a.cap.is_finite())
            .map(|a| a.cap)
            .sum();
        self.eps = 1e-13 * finite.max(f64::MIN_POSITIVE);
        let mut flow = 0.0;
        loop {
            let level = self.levels(s);
            if level[t] == usize::MAX {
                return flow;
            }
            let mut next = vec![0; self.adj.len()];
            loop {
                let f = self.push(s, t, f64::INFINITY, &level, &mut next);
                if f <= 0.0 {
                    break;
                }
                if f.is_infinite() {
                    return f64::INFINITY;
                }
                flow += f;
            }
        }
    }

    /// Nodes reachable from `s` in the residual graph after `max_flow`:
    /// the source side of a minimum cut.
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        self.levels(s).into_iter().map(|l| l != usize::MAX).collect()
    }
}
