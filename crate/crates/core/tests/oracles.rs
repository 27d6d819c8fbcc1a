//! Algorithms checked against brute-force oracles.

mod common;

use cchn_core::conflict::build_conflict_graph;
use cchn_core::harness::{generate_grid_scenario, toy_scenario, GridConfig};
use cchn_core::lp::verify_solution;
use cchn_core::mis::{
    augmented_sio, enumerate_all_mis, is_maximal_independent, sio_mis, SessionEndpoints,
};
use cchn_core::model::{derive_links, NodeId, SessionId};
use cchn_core::{LinearProgram, LpStatus, MisCollection, NlcSolver, Relation, VertexId};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn toy_graph_matches_rule_replay() {
    let sc = toy_scenario(10.0, 1e6);
    let g = build_conflict_graph(&sc, &derive_links(&sc));
    let oracle = replay(&sc, 100.0, 200.0);
    let ours = keyed(&g);
    assert_eq!(oracle.count('C'), 6);
    assert_eq!(oracle.count('I') + oracle.count('O'), 2);
    assert_eq!(g.len(), 9);
    let mut a = ours.vertices.clone();
    let mut b = oracle.vertices.clone();
    a.sort();
    b.sort();
    assert_eq!(a, b);
    assert_eq!(ours.edges, oracle.edges);
}

#[test]
fn grid_graph_matches_rule_replay() {
    let sc = generate_grid_scenario(&GridConfig::default()).unwrap();
    let g = build_conflict_graph(&sc, &derive_links(&sc));
    let r_t = sc
        .radio
        .transmission_range(cchn_core::EntityType::Cr, cchn_core::EntityType::Cr);
    let r_i = sc
        .radio
        .interference_range(cchn_core::EntityType::Cr, cchn_core::EntityType::Cr);
    let oracle = replay(&sc, r_t, r_i);
    let ours = keyed(&g);
    assert_eq!(ours.vertices.len(), oracle.vertices.len());
    assert_eq!(ours.edges, oracle.edges);
}

#[test]
fn exact_enumeration_matches_subset_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..150 {
        let n = rng.gen_range(1..=14);
        let sessions = rng.gen_range(0..=n.min(3));
        let p = rng.gen_range(0.1..0.7);
        let edges = random_edges(&mut rng, n, sessions, p);
        let g = synthetic_graph(n, sessions, &edges);
        let mut ours: Vec<u32> = enumerate_all_mis(&g, 40)
            .unwrap()
            .sets()
            .iter()
            .map(|s| to_mask(s))
            .collect();
        let mut oracle = all_mis(&masks(n, &edges));
        ours.sort_unstable();
        oracle.sort_unstable();
        assert_eq!(ours, oracle);
    }
}

/// Endpoints for synthetic session vertices; they only seed the scheduling
/// index, so any distinct nodes will do.
fn endpoints(sessions: usize) -> Vec<SessionEndpoints> {
    (0..sessions)
        .map(|i| SessionEndpoints {
            session: SessionId(i),
            source: NodeId(1000 + 2 * i),
            dest: NodeId(1001 + 2 * i),
        })
        .collect()
}

#[test]
fn heuristic_sets_are_maximal_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..120 {
        let n = rng.gen_range(2..=14);
        let sessions = rng.gen_range(0..=n.min(4));
        let p = rng.gen_range(0.1..0.7);
        let edges = random_edges(&mut rng, n, sessions, p);
        let g = synthetic_graph(n, sessions, &edges);
        let oracle = all_mis(&masks(n, &edges));
        let src = [NodeId(2 * sessions)];
        let dst = [NodeId(2 * sessions + 1)];
        let plain = sio_mis(&g, &src, &dst, 8, 5);
        let aug = augmented_sio(&g, &endpoints(sessions), &src, &dst, 8, 5, 12).unwrap();
        assert_eq!(aug.inner_iterations, (1usize << sessions) - 1);
        for set in plain.sets().iter().chain(aug.mis.sets()) {
            assert!(oracle.contains(&to_mask(set)), "{set:?} is not an MIS");
        }
        assert!(aug.mis.len() >= plain.len());
    }
}

#[test]
fn lp_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut optimal = 0;
    for _ in 0..300 {
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=4);
        let lp = random_lp(&mut rng, n, m);
        let sol = lp.solve(1e-9).unwrap();
        match vertex_oracle(&lp) {
            None => assert_eq!(sol.status, LpStatus::Infeasible, "{}", lp.to_text()),
            Some(best) => {
                optimal += 1;
                assert_eq!(sol.status, LpStatus::Optimal, "{}", lp.to_text());
                assert!(
                    close(sol.objective, best, 1e-7),
                    "{} vs {best}\n{}",
                    sol.objective,
                    lp.to_text()
                );
                assert!(verify_solution(&lp, &sol.values, 1e-9));
            }
        }
    }
    assert!(optimal > 100);
}

#[test]
fn lp_duals_close_the_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..300 {
        let n = rng.gen_range(1..=6);
        let m = rng.gen_range(1..=6);
        let lp = random_lp(&mut rng, n, m);
        let sol = lp.solve(1e-9).unwrap();
        if sol.status != LpStatus::Optimal {
            continue;
        }
        let bound = dual_bound(&lp, &sol.duals).expect("dual signs");
        assert!(bound >= sol.objective - 1e-7, "weak duality violated");
        assert!(
            close(bound, sol.objective, 1e-7),
            "gap {bound} vs {}",
            sol.objective
        );
    }
}

/// Throughput LP over a set family: paths share link capacity scaled by
/// the time given to each set containing the link.
fn family_lp(n: usize, caps: &[f64], paths: &[(Vec<usize>, f64)], family: &[u32]) -> LinearProgram {
    let mut lp = LinearProgram::new();
    let rates: Vec<usize> = paths
        .iter()
        .enumerate()
        .map(|(k, (_, w))| lp.add_variable(format!("t{k}"), 0.0, f64::INFINITY, *w))
        .collect();
    let shares: Vec<usize> = (0..family.len())
        .map(|q| lp.add_variable(format!("l{q}"), 0.0, 1.0, 0.0))
        .collect();
    for l in 0..n {
        let mut row: Vec<(usize, f64)> = paths
            .iter()
            .zip(&rates)
            .filter(|((p, _), _)| p.contains(&l))
            .map(|(_, &t)| (t, 1.0))
            .collect();
        for (q, &set) in family.iter().enumerate() {
            if set & (1 << l) != 0 {
                row.push((shares[q], -caps[l]));
            }
        }
        lp.add_constraint(format!("link{l}"), row, Relation::Le, 0.0);
    }
    lp.add_constraint(
        "time",
        shares.iter().map(|&s| (s, 1.0)).collect(),
        Relation::Le,
        1.0,
    );
    lp
}

#[test]
fn mis_only_schedule_loses_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..25 {
        let n = rng.gen_range(3..=12);
        let p = rng.gen_range(0.2..0.6);
        let edges = random_edges(&mut rng, n, 0, p);
        let adj = masks(n, &edges);
        let caps: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=5) as f64).collect();
        let paths: Vec<(Vec<usize>, f64)> = (0..rng.gen_range(1..=4))
            .map(|_| {
                let len = rng.gen_range(1..=3.min(n));
                let mut p: Vec<usize> = (0..n).collect();
                for i in 0..len {
                    let j = rng.gen_range(i..n);
                    p.swap(i, j);
                }
                p.truncate(len);
                (p, rng.gen_range(1..=3) as f64)
            })
            .collect();
        let g = synthetic_graph(n, 0, &edges);
        let mis: Vec<u32> = enumerate_all_mis(&g, 40)
            .unwrap()
            .sets()
            .iter()
            .map(|s| to_mask(s))
            .collect();
        let full = family_lp(n, &caps, &paths, &all_independent_sets(&adj))
            .solve(1e-9)
            .unwrap();
        let reduced = family_lp(n, &caps, &paths, &mis).solve(1e-9).unwrap();
        assert_eq!(full.status, LpStatus::Optimal);
        assert!(
            close(full.objective, reduced.objective, 1e-7),
            "{} vs {}",
            full.objective,
            reduced.objective
        );
    }
}

fn solve_micro(far: bool, length: f64, volume: f64, rate_cr: f64, rate_pcr: f64) -> (f64, f64) {
    let (r_t, r_i) = (100.0, 150.0);
    let mut sc = micro_scenario(r_t, r_i, far, length, volume);
    sc.rate_cr = rate_cr;
    sc.rate_pcr = rate_pcr;
    let g = build_conflict_graph(&sc, &derive_links(&sc));
    let mis = enumerate_all_mis(&g, 40).unwrap();
    let ours = NlcSolver::default().solve(&sc, &g, &mis).unwrap().objective;
    (ours, schedule_oracle(&sc, r_t, r_i, 150))
}

#[test]
fn single_session_matches_discretized_schedule() {
    let cases = [
        (false, 10.0, 3e6, 3e6, 3e6),
        (false, 10.0, 7e6, 3e6, 3e6),
        (false, 20.0, 1e7, 2e6, 5e6),
        (false, 10.0, 0.0, 3e6, 3e6),
        (false, 10.0, 2e7, 3e6, 3e6),
        (true, 10.0, 3e6, 3e6, 3e6),
        (true, 30.0, 4e7, 4e6, 2e6),
    ];
    for (far, length, volume, rc, rp) in cases {
        let (ours, oracle) = solve_micro(far, length, volume, rc, rp);
        // the grid can only undershoot the continuous optimum
        assert!(ours >= oracle - 1e-6, "{ours} < {oracle}");
        assert!(
            close(ours, oracle, 0.02),
            "far={far} D={volume}: {ours} vs {oracle}"
        );
    }
}

#[test]
fn protection_check_catches_leaks() {
    let sc = toy_scenario(10.0, 1e9);
    let g = build_conflict_graph(&sc, &derive_links(&sc));
    let mis = enumerate_all_mis(&g, 40).unwrap();
    let mut sol = NlcSolver::default().solve(&sc, &g, &mis).unwrap();
    assert!(!sol.theta[0]);
    assert!(cchn_core::nlc::protection_holds(&sol, &g, &mis));
    let s = g.session_vertex(SessionId(0)).unwrap();
    let leak = (0..mis.len()).find(|&q| !mis.contains(q, s)).unwrap();
    sol.lambda[0][leak] = 1e-12;
    assert!(!cchn_core::nlc::protection_holds(&sol, &g, &mis));
}

#[test]
fn census_of_the_grid() {
    let sc = generate_grid_scenario(&GridConfig::default()).unwrap();
    let links = derive_links(&sc);
    let g = build_conflict_graph(&sc, &links);
    assert_eq!(sc.nodes.iter().filter(|n| n.kind.is_facility()).count(), 25);
    assert_eq!(sc.sessions.len(), 5);
    // every vertex is a CR link, a PU-related link or a session
    let sessions = g.session_vertices().count();
    assert_eq!(sessions, 5);
    assert_eq!(
        g.len(),
        links
            .iter()
            .filter(|l| l.kind == cchn_core::LinkKind::Cr || l.is_pu_related())
            .count()
            + 5
    );
    let empty: Vec<VertexId> = Vec::new();
    assert!(!is_maximal_independent(&g, &empty));
    let _ = MisCollection::new(g.len());
}
