//! Property tests across module boundaries, each checked against a brute-force
//! or closed-form oracle written here.

use proptest::prelude::*;
use raremine::baseline_lr::loss_and_gradient;
use raremine::dataset::{cosine, Corpus, Record, Source};
use raremine::labelprop::{adaptive_k, adaptive_k_from_counts, propagate, LpState, NEGATIVE, POSITIVE};
use raremine::simgraph::{build_bipartite, build_similarity_graph, row_normalize, SimilarityGraph};

fn corpus(prefix: &str, vecs: &[Vec<f32>], source: Source) -> Corpus {
    Corpus::from_records(
        vecs.iter()
            .enumerate()
            .map(|(i, e)| Record {
                id: format!("{prefix}{i:03}"),
                text: None,
                embedding: e.clone(),
                truth: None,
                source,
            })
            .collect(),
    )
    .unwrap()
}

fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-1.0f32..1.0, dim).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn graph_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..25).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..(3 * n))))
}

/// Harmonic solution on a connected unit-weight graph by Gaussian elimination:
/// `x_u = mean of neighbours` for free nodes, `x_c = y_c` for clamped ones.
fn harmonic(adj: &[Vec<bool>], y: &[f64], clamped: &[bool]) -> Vec<f64> {
    let n = adj.len();
    let free: Vec<usize> = (0..n).filter(|&i| !clamped[i]).collect();
    let m = free.len();
    let mut a = vec![vec![0.0; m + 1]; m];
    for (r, &u) in free.iter().enumerate() {
        let deg = adj[u].iter().filter(|&&e| e).count() as f64;
        a[r][r] = 1.0;
        for v in 0..n {
            if !adj[u][v] {
                continue;
            }
            match free.iter().position(|&f| f == v) {
                Some(c) => a[r][c] -= 1.0 / deg,
                None => a[r][m] += y[v] / deg,
            }
        }
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        let pivot = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col {
                let f = row[col] / pivot[col];
                for (x, p) in row[col..].iter_mut().zip(&pivot[col..]) {
                    *x -= f * p;
                }
            }
        }
    }
    let mut x = y.to_vec();
    for (r, &u) in free.iter().enumerate() {
        x[u] = a[r][m] / a[r][r];
    }
    x
}

fn connected(adj: &[Vec<bool>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for v in 0..adj.len() {
            if adj[u][v] && !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.iter().all(|&s| s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn clamped_nodes_never_move((n, edges) in graph_strategy(), clamp_bits in prop::collection::vec(0u8..3, 25)) {
        let ids: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
        let edges: Vec<(usize, usize, f64)> = edges.into_iter().map(|(a, b)| (a, b, 1.0)).collect();
        let w = row_normalize(&SimilarityGraph::from_edges(ids, &edges));
        let initial: Vec<f64> = (0..n).map(|i| match clamp_bits[i] { 1 => POSITIVE, 2 => NEGATIVE, _ => 0.0 }).collect();
        let clamped: Vec<bool> = initial.iter().map(|&v| v != 0.0).collect();
        let mut st = LpState::new(initial.clone(), clamped.clone());
        for _ in 0..20 {
            st.step(&w);
            for i in 0..n {
                if clamped[i] {
                    prop_assert_eq!(st.scores[i], initial[i]);
                }
                // Averages of values in [-1, 1] stay there.
                prop_assert!(st.scores[i].abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn adaptive_k_matches_integer_ceiling(k0 in 1usize..50, batch in 1usize..200, pos_frac in 0.0f64..=1.0, mult in 1usize..12) {
        let positives = ((batch as f64) * pos_frac).round() as usize;
        let k_max = k0 * mult;
        let expected = if positives == 0 { k_max } else { (k0 * batch).div_ceil(positives).clamp(k0, k_max) };
        prop_assert_eq!(adaptive_k_from_counts(k0, positives, batch, k_max), expected);
        if positives > 0 {
            prop_assert_eq!(adaptive_k(k0, positives as f64 / batch as f64, k_max), expected);
        }
    }

    #[test]
    fn bipartite_edges_are_the_capped_threshold_neighbors(
        left in prop::collection::vec(nonzero_vec(4), 1..6),
        right in prop::collection::vec(nonzero_vec(4), 1..40),
        tau in 0.0f64..0.9,
        d_max in 1usize..8,
    ) {
        let l = corpus("s", &left, Source::Synthetic);
        let r = corpus("r", &right, Source::Real);
        let g = build_bipartite(&l, &r, tau, d_max, None).unwrap();
        for (i, nbrs) in g.edges.iter().enumerate() {
            // Oracle: all right items above tau, best first, ties by id.
            let mut want: Vec<(usize, f64)> = (0..r.len())
                .map(|j| (j, cosine(l.embedding(i), r.embedding(j)).unwrap()))
                .filter(|&(_, s)| s > tau)
                .collect();
            want.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            want.truncate(d_max);
            prop_assert!(nbrs.len() <= d_max);
            let got: Vec<usize> = nbrs.iter().map(|e| e.0).collect();
            let exp: Vec<usize> = want.iter().map(|e| e.0).collect();
            prop_assert_eq!(got, exp);
        }
    }

    #[test]
    fn similarity_graph_is_symmetric_and_sound(
        vecs in prop::collection::vec(nonzero_vec(3), 2..30),
        tau in 0.0f64..0.95,
        cap in prop::option::of(1usize..5),
    ) {
        let c = corpus("x", &vecs, Source::Real);
        let g = build_similarity_graph(&c, tau, cap, None).unwrap();
        for i in 0..c.len() {
            prop_assert!(!g.has_edge(i, i));
            for &(j, s) in &g.adjacency[i] {
                prop_assert!(g.has_edge(j, i));
                prop_assert!(s > tau);
                prop_assert_eq!(s, cosine(c.embedding(i), c.embedding(j)).unwrap());
            }
            if cap.is_none() {
                for j in 0..c.len() {
                    if i != j && cosine(c.embedding(i), c.embedding(j)).unwrap() > tau {
                        prop_assert!(g.has_edge(i, j));
                    }
                }
            }
        }
    }

    #[test]
    fn lr_gradient_matches_central_differences(
        xs in prop::collection::vec(prop::collection::vec(-2.0f32..2.0, 3), 2..12),
        ys_bits in prop::collection::vec(any::<bool>(), 12),
        params in prop::collection::vec(-1.5f64..1.5, 4),
        l2 in 0.0f64..0.1,
    ) {
        let feats: Vec<&[f32]> = xs.iter().map(Vec::as_slice).collect();
        let ys = &ys_bits[..xs.len()];
        let (_, g) = loss_and_gradient(&params, &feats, ys, l2);
        let h = 1e-5;
        let mut diff2 = 0.0;
        let mut norm2 = 0.0;
        for k in 0..params.len() {
            let mut up = params.clone();
            let mut dn = params.clone();
            up[k] += h;
            dn[k] -= h;
            let num = (loss_and_gradient(&up, &feats, ys, l2).0 - loss_and_gradient(&dn, &feats, ys, l2).0) / (2.0 * h);
            diff2 += (num - g[k]).powi(2);
            norm2 += num.abs().max(g[k].abs()).powi(2);
        }
        prop_assert!(diff2.sqrt() <= 1e-5 * norm2.sqrt().max(1e-3));
    }

    #[test]
    fn a_new_positive_clamp_never_lowers_scores(
        n in 3usize..14,
        bits in prop::collection::vec(prop::bool::weighted(0.4), 14 * 14),
        labels in prop::collection::vec(0u8..3, 14),
        pick in 0usize..14,
    ) {
        let mut adj = vec![vec![false; n]; n];
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if bits[i * 14 + j] {
                    adj[i][j] = true;
                    adj[j][i] = true;
                    edges.push((i, j, 1.0));
                }
            }
        }
        prop_assume!(connected(&adj));
        let mut y: Vec<f64> = (0..n).map(|i| match labels[i] { 1 => POSITIVE, 2 => NEGATIVE, _ => 0.0 }).collect();
        let mut clamped: Vec<bool> = y.iter().map(|&v| v != 0.0).collect();
        let free: Vec<usize> = (0..n).filter(|&i| !clamped[i]).collect();
        prop_assume!(free.len() < n && free.len() >= 2);

        let ids: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
        let w = row_normalize(&SimilarityGraph::from_edges(ids, &edges));
        let before = harmonic(&adj, &y, &clamped);
        let run = propagate(&w, &y, &clamped, 20_000, 1e-13);
        for (i, (got, want)) in run.scores.iter().zip(&before).enumerate() {
            prop_assert!((got - want).abs() < 1e-8, "node {}: {} vs {}", i, got, want);
        }

        let v = free[pick % free.len()];
        y[v] = POSITIVE;
        clamped[v] = true;
        let after = harmonic(&adj, &y, &clamped);
        for (i, (a, b)) in after.iter().zip(&before).enumerate() {
            prop_assert!(*a >= b - 1e-9, "node {} fell from {} to {}", i, b, a);
        }
    }
}
