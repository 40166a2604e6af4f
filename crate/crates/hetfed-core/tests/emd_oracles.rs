//! Transport-distance checks against two independent oracles: exhaustive
//! vertex enumeration of the transportation polytope for four classes, and
//! a successive-shortest-paths solver for six. Dyadic inputs make the
//! discrete-ground case exact, not just close.

use hetfed_core::measures::{emd, GroundMetric, LabelDistribution};
use hetfed_core::numerics::Matrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn random_distribution(n: usize, rng: &mut StdRng, with_zero: bool) -> LabelDistribution {
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    if with_zero {
        v[rng.gen_range(0..n)] = 0.0;
    }
    let sum: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= sum;
    }
    let head: f64 = v[..n - 1].iter().sum();
    v[n - 1] = 1.0 - head;
    LabelDistribution::new(v).unwrap()
}

fn random_angle_ground(n: usize, rng: &mut StdRng) -> (GroundMetric, Vec<Vec<f64>>) {
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = rng.gen_range(0.05..1.0);
            c[i][j] = v;
            c[j][i] = v;
        }
    }
    let costs = c.clone();
    (GroundMetric::angle(Matrix::from_fn(n, n, |i, j| c[i][j])).unwrap(), costs)
}

fn total_variation(p: &LabelDistribution, q: &LabelDistribution) -> f64 {
    0.5 * p
        .probabilities()
        .iter()
        .zip(q.probabilities())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

/// Minimum transport cost by enumerating every basic feasible solution:
/// spanning trees of the complete bipartite graph carry unique flows, and
/// some optimal solution sits at such a vertex.
fn vertex_oracle(p: &[f64], q: &[f64], cost: &[Vec<f64>]) -> f64 {
    let n = p.len();
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .collect();
    let m = edges.len();
    let nodes = 2 * n;
    let mut best = f64::INFINITY;

    'mask: for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize != nodes - 1 {
            continue;
        }
        let chosen: Vec<usize> = (0..m).filter(|&e| mask & (1 << e) != 0).collect();

        let mut parent: Vec<usize> = (0..nodes).collect();
        fn root(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &e in &chosen {
            let (i, j) = edges[e];
            let (a, b) = (root(&mut parent, i), root(&mut parent, n + j));
            if a == b {
                continue 'mask;
            }
            parent[a] = b;
        }

        let mut degree = vec![0usize; nodes];
        for &e in &chosen {
            degree[edges[e].0] += 1;
            degree[n + edges[e].1] += 1;
        }
        let mut balance: Vec<f64> = p.iter().chain(q.iter()).copied().collect();
        let mut used = vec![false; chosen.len()];
        let mut flows = vec![0.0; chosen.len()];
        for _round in 0..chosen.len() {
            let (slot, e) = chosen
                .iter()
                .enumerate()
                .find(|&(slot, &e)| {
                    !used[slot] && (degree[edges[e].0] == 1 || degree[n + edges[e].1] == 1)
                })
                .map(|(slot, &e)| (slot, e))
                .expect("a tree always has a leaf edge");
            let (i, j) = edges[e];
            let f = if degree[i] == 1 {
                let f = balance[i];
                balance[n + j] -= f;
                f
            } else {
                let f = balance[n + j];
                balance[i] -= f;
                f
            };
            flows[slot] = f;
            used[slot] = true;
            degree[i] -= 1;
            degree[n + j] -= 1;
        }
        if flows.iter().any(|&f| f < -1e-12) {
            continue;
        }
        let total: f64 = flows
            .iter()
            .zip(&chosen)
            .map(|(&f, &e)| f.max(0.0) * cost[edges[e].0][edges[e].1])
            .sum();
        best = best.min(total);
    }
    best
}

/// Minimum transport cost by successive shortest augmenting paths on the
/// residual network, Bellman-Ford for the negative backward arcs.
fn shortest_path_oracle(p: &[f64], q: &[f64], cost: &[Vec<f64>]) -> f64 {
    let n = p.len();
    let eps = 1e-15;
    let mut supply = p.to_vec();
    let mut demand = q.to_vec();
    let mut flow = vec![vec![0.0f64; n]; n];
    let (src, snk) = (2 * n, 2 * n + 1);
    let nodes = 2 * n + 2;

    for _augmentation in 0..10_000 {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev: Vec<Option<usize>> = vec![None; nodes];
        dist[src] = 0.0;
        for _sweep in 0..nodes {
            let mut changed = false;
            // The improvement threshold keeps rounding-level negative
            // cycles (forward plus backward copies of one arc) from
            // spinning the predecessor pointers into a loop.
            let relax = |from: usize, to: usize, w: f64, dist: &mut [f64], prev: &mut [Option<usize>]| {
                if dist[from].is_finite() && dist[from] + w < dist[to] - 1e-13 {
                    dist[to] = dist[from] + w;
                    prev[to] = Some(from);
                    true
                } else {
                    false
                }
            };
            for i in 0..n {
                if supply[i] > eps {
                    changed |= relax(src, i, 0.0, &mut dist, &mut prev);
                }
                for j in 0..n {
                    changed |= relax(i, n + j, cost[i][j], &mut dist, &mut prev);
                    if flow[i][j] > eps {
                        changed |= relax(n + j, i, -cost[i][j], &mut dist, &mut prev);
                    }
                }
            }
            for j in 0..n {
                if demand[j] > eps {
                    changed |= relax(n + j, snk, 0.0, &mut dist, &mut prev);
                }
            }
            if !changed {
                break;
            }
        }
        if !dist[snk].is_finite() {
            break;
        }

        let mut path = vec![snk];
        while *path.last().unwrap() != src {
            assert!(path.len() <= nodes, "path reconstruction cycled");
            path.push(prev[*path.last().unwrap()].expect("broken shortest-path tree"));
        }
        path.reverse();

        let mut delta = f64::INFINITY;
        for pair in path.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if a == src {
                delta = delta.min(supply[b]);
            } else if b == snk {
                delta = delta.min(demand[a - n]);
            } else if a >= n {
                delta = delta.min(flow[b][a - n]);
            }
        }
        for pair in path.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if a == src {
                supply[b] -= delta;
            } else if b == snk {
                demand[a - n] -= delta;
            } else if a < n {
                flow[a][b - n] += delta;
            } else {
                flow[b][a - n] -= delta;
            }
        }
    }
    assert!(supply.iter().all(|&s| s <= 1e-12), "oracle left supply unrouted");

    (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| flow[i][j] * cost[i][j])
        .sum()
}

#[test]
fn discrete_ground_matches_total_variation_exactly() {
    let mut rng = StdRng::seed_from_u64(7001);
    for n in 2..=8 {
        for _ in 0..20 {
            let draw = |rng: &mut StdRng| {
                let mut counts = vec![0usize; n];
                for _ in 0..64 {
                    counts[rng.gen_range(0..n)] += 1;
                }
                LabelDistribution::from_counts(&counts).unwrap()
            };
            let p = draw(&mut rng);
            let q = draw(&mut rng);
            // Sixty-fourths stay exact through the solver's additions, so
            // the match is equality, not approximation.
            assert_eq!(
                emd(&p, &q, &GroundMetric::Discrete).unwrap(),
                total_variation(&p, &q)
            );
        }
    }
}

#[test]
fn four_class_transport_matches_vertex_enumeration() {
    let mut rng = StdRng::seed_from_u64(7100);
    for trial in 0..15 {
        let p = random_distribution(4, &mut rng, trial % 5 == 4);
        let q = random_distribution(4, &mut rng, trial % 7 == 6);
        let (ground, costs) = random_angle_ground(4, &mut rng);

        let want = vertex_oracle(p.probabilities(), q.probabilities(), &costs);
        let got = emd(&p, &q, &ground).unwrap();
        assert!(
            (got - want).abs() <= 1e-9,
            "trial {trial}: solver {got} vs vertex oracle {want}"
        );

        let unit = vec![
            vec![0.0, 1.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0, 1.0],
            vec![1.0, 1.0, 0.0, 1.0],
            vec![1.0, 1.0, 1.0, 0.0],
        ];
        let discrete_want = vertex_oracle(p.probabilities(), q.probabilities(), &unit);
        let discrete_got = emd(&p, &q, &GroundMetric::Discrete).unwrap();
        assert!((discrete_got - discrete_want).abs() <= 1e-9);
    }
}

#[test]
fn six_class_transport_matches_the_shortest_path_oracle() {
    let mut rng = StdRng::seed_from_u64(7200);
    for trial in 0..20 {
        let p = random_distribution(6, &mut rng, trial % 4 == 3);
        let q = random_distribution(6, &mut rng, trial % 6 == 5);
        let (ground, costs) = random_angle_ground(6, &mut rng);

        let want = shortest_path_oracle(p.probabilities(), q.probabilities(), &costs);
        let got = emd(&p, &q, &ground).unwrap();
        assert!(
            (got - want).abs() <= 1e-9,
            "trial {trial}: solver {got} vs shortest-path oracle {want}"
        );
    }
}

#[test]
fn scaling_the_ground_scales_the_distance() {
    let mut rng = StdRng::seed_from_u64(7300);
    for _ in 0..10 {
        let p = random_distribution(5, &mut rng, false);
        let q = random_distribution(5, &mut rng, false);
        let (ground, costs) = random_angle_ground(5, &mut rng);
        let lambda = rng.gen_range(0.1..5.0);
        let scaled =
            GroundMetric::angle(Matrix::from_fn(5, 5, |i, j| lambda * costs[i][j])).unwrap();

        let base = emd(&p, &q, &ground).unwrap();
        let spread = emd(&p, &q, &scaled).unwrap();
        assert!((spread - lambda * base).abs() <= 1e-12 * (1.0 + lambda * base));
    }
}

#[test]
fn transport_cost_sits_between_the_total_variation_bounds() {
    let mut rng = StdRng::seed_from_u64(7400);
    for _ in 0..20 {
        let p = random_distribution(6, &mut rng, false);
        let q = random_distribution(6, &mut rng, false);
        let (ground, costs) = random_angle_ground(6, &mut rng);
        let off_diag: Vec<f64> = (0..6)
            .flat_map(|i| (0..6).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j)
            .map(|(i, j)| costs[i][j])
            .collect();
        let lo = off_diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = off_diag.iter().cloned().fold(0.0, f64::max);

        let tv = total_variation(&p, &q);
        let got = emd(&p, &q, &ground).unwrap();
        assert!(got >= lo * tv - 1e-12, "{got} under the floor {lo}·{tv}");
        assert!(got <= hi * tv + 1e-12, "{got} over the ceiling {hi}·{tv}");

        assert_eq!(emd(&p, &p, &ground).unwrap(), 0.0);
    }
}
