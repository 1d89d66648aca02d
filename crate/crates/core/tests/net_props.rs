mod common;

use common::{closed_loop, regions};
use cwhnet_core::admissible::AdmissibleOptions;
use cwhnet_core::net::{build_nodes, shortest_path, switching_ready, GridSpec, VirtualNet};
use cwhnet_core::Vector;

fn grid() -> GridSpec {
    GridSpec {
        axes: [
            vec![-100.0, -50.0, 0.0, 50.0, 100.0, 150.0],
            vec![-100.0, -50.0, 0.0, 50.0, 100.0],
            vec![-50.0, 0.0, 50.0],
        ],
        extra: vec![[100.0, -100.0, 0.0], [100.0, 100.0, 0.0]],
    }
}

fn in_cone_interior(p: &[f64; 3]) -> bool {
    // Points strictly inside the inscribed pyramid are inside the circular cone of half-angle 30°.
    let rs = regions();
    let obs = rs.obstacle().unwrap();
    let x = Vector::from_column_slice(&[p[0], p[1], p[2], 0.0, 0.0, 0.0]);
    (0..obs.n_rows()).all(|i| obs.normals().row(i).transpose().dot(&x) < obs.offsets()[i] - 1e-9)
}

#[test]
fn node_count_matches_independent_filter() {
    let cl = closed_loop();
    let nodes = build_nodes(&grid(), &cl, &regions()).unwrap();
    let pts = grid().points();
    assert_eq!(pts.len(), 90);
    let inside: Vec<_> = pts.iter().filter(|p| in_cone_interior(p)).collect();
    assert_eq!(nodes.len(), pts.len() - inside.len());
    assert!(!nodes.iter().any(|n| in_cone_interior(&[n[0], n[1], n[2]])));
    // Equilibrium positions coincide with the set-points.
    for n in &nodes {
        let eq = cl.equilibrium_state(n).unwrap();
        assert!((eq.rows(0, 3) - n).norm() < 1e-9);
    }
}

#[test]
fn planned_path_is_certified_and_switchable() {
    let cl = closed_loop();
    let nodes = build_nodes(&grid(), &cl, &regions()).unwrap();
    let net = VirtualNet::build(&cl, regions(), nodes, &AdmissibleOptions::new(0.1)).unwrap();
    assert!(net
        .edges()
        .iter()
        .all(|e| e.weight >= 0.0 && e.weight.is_finite() && e.from != e.to));
    for e in net.edges() {
        assert_eq!(net.edge_exists(e.from, e.to).unwrap(), (true, Some(e.region)));
        let set = net.set(e.to, e.region);
        assert!(switching_ready(&cl, set, &net.equilibria()[e.from], &net.nodes()[e.to]).unwrap());
    }
    let find = |p: [f64; 3]| net.nodes().iter().position(|n| n.as_slice() == p).unwrap();
    let (start, goal) = (find([100.0, -100.0, 0.0]), find([100.0, 100.0, 0.0]));
    let path = shortest_path(&net, start, goal).unwrap();
    assert_eq!(path.nodes.first(), Some(&start));
    assert_eq!(path.nodes.last(), Some(&goal));
    let mut cost = 0.0;
    for (k, w) in path.nodes.windows(2).enumerate() {
        let e = net.edge(w[0], w[1]).expect("consecutive nodes are connected");
        assert_eq!(e.region, path.hop_regions[k]);
        cost += e.weight;
    }
    assert!((cost - path.cost).abs() < 1e-12);
    // The straight segment crosses the cone, so the route must leave the x1-x2 plane or go round.
    assert!(path.nodes.len() > 2);
    assert!(path
        .nodes
        .iter()
        .all(|&k| !in_cone_interior(&[net.nodes()[k][0], net.nodes()[k][1], net.nodes()[k][2]])));
}
