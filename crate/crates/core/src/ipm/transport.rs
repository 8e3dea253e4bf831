//! Exact discrete optimal transport by successive shortest paths.

/// Residual mass below this is treated as zero.
const MASS_EPS: f64 = 1e-15;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    rev: usize,
    cap: f64,
    cost: f64,
}

struct Network {
    adj: Vec<Vec<Edge>>,
}

impl Network {
    fn new(n: usize) -> Self {
        Self {
            adj: vec![Vec::new(); n],
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: f64, cost: f64) {
        let rev_from = self.adj[to].len();
        let rev_to = self.adj[from].len();
        self.adj[from].push(Edge {
            to,
            rev: rev_from,
            cap,
            cost,
        });
        self.adj[to].push(Edge {
            to: from,
            rev: rev_to,
            cap: 0.0,
            cost: -cost,
        });
    }

    /// Bellman-Ford from `src`; returns the predecessor `(node, edge)` per node.
    fn shortest_paths(&self, src: usize) -> (Vec<f64>, Vec<Option<(usize, usize)>>) {
        let n = self.adj.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![None; n];
        dist[src] = 0.0;
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                if !dist[u].is_finite() {
                    continue;
                }
                for (k, e) in self.adj[u].iter().enumerate() {
                    if e.cap > MASS_EPS && dist[u] + e.cost < dist[e.to] - 1e-15 {
                        dist[e.to] = dist[u] + e.cost;
                        pred[e.to] = Some((u, k));
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        (dist, pred)
    }
}

/// Minimum cost of moving `supply` onto `demand` with unit cost `cost(i, j)`.
///
/// Both sides carry `(point, mass)` entries with equal total mass.
pub(crate) fn min_transport_cost(
    supply: &[(usize, f64)],
    demand: &[(usize, f64)],
    cost: impl Fn(usize, usize) -> f64,
) -> f64 {
    let (m, k) = (supply.len(), demand.len());
    if m == 0 || k == 0 {
        return 0.0;
    }
    let src = 0;
    let sink = m + k + 1;
    let mut net = Network::new(m + k + 2);
    for (i, &(_, mass)) in supply.iter().enumerate() {
        net.add_edge(src, 1 + i, mass, 0.0);
    }
    for (j, &(_, mass)) in demand.iter().enumerate() {
        net.add_edge(1 + m + j, sink, mass, 0.0);
    }
    for (i, &(a, _)) in supply.iter().enumerate() {
        for (j, &(b, _)) in demand.iter().enumerate() {
            net.add_edge(1 + i, 1 + m + j, f64::INFINITY, cost(a, b));
        }
    }
    let mut total = 0.0;
    // Each augmentation saturates at least one edge.
    let max_rounds = 4 * (m * k + m + k) + 16;
    for _ in 0..max_rounds {
        let (dist, pred) = net.shortest_paths(src);
        if !dist[sink].is_finite() {
            break;
        }
        let mut flow = f64::INFINITY;
        let mut v = sink;
        while let Some((u, e)) = pred[v] {
            flow = flow.min(net.adj[u][e].cap);
            v = u;
        }
        if flow <= MASS_EPS {
            break;
        }
        let mut v = sink;
        while let Some((u, e)) = pred[v] {
            net.adj[u][e].cap -= flow;
            let (to, rev) = (net.adj[u][e].to, net.adj[u][e].rev);
            net.adj[to][rev].cap += flow;
            v = u;
        }
        total += flow * dist[sink];
    }
    total
}
