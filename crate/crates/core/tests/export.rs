use gradtopo::config::RunConfig;
use gradtopo::export::{
    extrude_region, extrude_to_stl, read_stl, read_vtk, ring_area, split_regions, threshold_contour, write_fields,
    ContourPolygonSet, FieldSnapshot, RegionMask,
};
use gradtopo::optimizer::Problem;
use gradtopo::Mesh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Iso-line length summed triangle by triangle: each triangle whose nodes
/// straddle the level holds one straight segment between two edge crossings.
fn marching_length(mesh: &Mesh, f: &[f64], level: f64) -> f64 {
    let mut total = 0.0;
    for t in &mesh.elements {
        let mut pts = Vec::new();
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let (fa, fb) = (f[a] - level, f[b] - level);
            if (fa < 0.0) != (fb < 0.0) {
                let s = fa / (fa - fb);
                let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
                pts.push([pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])]);
            }
        }
        if pts.len() == 2 {
            total += (pts[1][0] - pts[0][0]).hypot(pts[1][1] - pts[0][1]);
        }
    }
    total
}

fn check_partition(set: &ContourPolygonSet, area: f64) {
    let sum = set.above_area() + set.below_area();
    assert!((sum - area).abs() <= 1e-6 * area, "{sum} vs {area}");
    for p in set.above.iter().chain(&set.below) {
        assert!(ring_area(&p.outer) > 0.0);
        assert!(p.holes.iter().all(|h| ring_area(h) < 0.0));
    }
}

#[test]
fn checkerboard_contour_length_matches_per_element_oracle() {
    let mesh = Mesh::rectangle(6.0, 4.0, 6, 4, None);
    let chi: Vec<f64> = (0..mesh.node_count())
        .map(|i| {
            let (x, y) = (mesh.nodes[i][0] as usize, mesh.nodes[i][1] as usize);
            ((x + y) % 2) as f64
        })
        .collect();
    let set = threshold_contour(&mesh.nodes, &mesh.elements, &chi, 0.5).unwrap();
    let expected = marching_length(&mesh, &chi, 0.5);
    let got = set.interface_length([0.0, 0.0, 6.0, 4.0]);
    assert!((got - expected).abs() < 1e-9 * expected, "{got} vs {expected}");
    check_partition(&set, 24.0);
}

#[test]
fn random_field_contour_length_and_partition() {
    let mesh = Mesh::rectangle(10.0, 5.0, 20, 10, None);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let chi: Vec<f64> = (0..mesh.node_count()).map(|_| rng.gen_range(0.0..1.0)).collect();
    for t in [0.2, 0.5, 0.8] {
        let set = threshold_contour(&mesh.nodes, &mesh.elements, &chi, t).unwrap();
        let expected = marching_length(&mesh, &chi, t);
        let got = set.interface_length([0.0, 0.0, 10.0, 5.0]);
        assert!((got - expected).abs() < 1e-9 * expected, "t = {t}: {got} vs {expected}");
        check_partition(&set, 50.0);
    }
}

#[test]
fn linear_field_splits_unit_square_in_half() {
    let mesh = Mesh::rectangle(1.0, 1.0, 5, 5, None);
    let chi: Vec<f64> = mesh.nodes.iter().map(|p| p[0]).collect();
    let set = threshold_contour(&mesh.nodes, &mesh.elements, &chi, 0.5).unwrap();
    assert_eq!((set.above.len(), set.below.len()), (1, 1));
    assert!((set.above_area() - 0.5).abs() < 1e-12);
    assert!((set.below_area() - 0.5).abs() < 1e-12);
    assert!(set.above[0].outer.iter().all(|p| p[0] >= 0.5 - 1e-12));
    assert!((set.interface_length([0.0, 0.0, 1.0, 1.0]) - 1.0).abs() < 1e-12);
}

#[test]
fn threshold_extremes() {
    let mesh = Mesh::rectangle(4.0, 2.0, 4, 2, None);
    let chi: Vec<f64> = mesh.nodes.iter().map(|p| p[0] / 4.0).collect();
    let all = threshold_contour(&mesh.nodes, &mesh.elements, &chi, 0.0).unwrap();
    assert!(all.below.is_empty());
    assert!((all.above_area() - 8.0).abs() < 1e-12);
    let ones = vec![1.0; mesh.node_count()];
    let set = threshold_contour(&mesh.nodes, &mesh.elements, &ones, 0.5).unwrap();
    assert!(set.below.is_empty());
    assert_eq!(set.above.len(), 1);
}

#[test]
fn extruded_regions_of_an_optimized_design_are_closed() {
    let mut cfg = RunConfig::cantilever();
    cfg.domain.width = 40.0;
    cfg.domain.height = 20.0;
    cfg.domain.nx = 20;
    cfg.domain.ny = 10;
    cfg.optimizer.max_iter = 25;
    cfg.optimizer.perturbation = 0.01;
    let p = Problem::new(&cfg).unwrap();
    let out = p.run().unwrap();

    let dir = tempfile::tempdir().unwrap();
    let vtk = dir.path().join("final.vtk");
    write_fields(&vtk, &p.mesh, &out.state).unwrap();
    let snap = read_vtk(&vtk).unwrap();
    let direct = FieldSnapshot::from_state(&p.mesh, &out.state);
    for name in ["phi", "chi"] {
        let (a, b) = (snap.point_field(name).unwrap(), direct.point_field(name).unwrap());
        assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-7 * y.abs().max(1.0)));
    }

    let chi = snap.point_field("chi").unwrap();
    let phi = snap.point_field("phi").unwrap();
    let threshold = 0.5 * (chi.iter().cloned().fold(0.0, f64::max));
    let mask = RegionMask { phi, threshold: 0.5 };
    let set = split_regions(&snap.points, &snap.cells, chi, threshold, Some(mask)).unwrap();
    let masked = threshold_contour(&snap.points, &snap.cells, phi, 0.5)
        .unwrap()
        .above_area();
    assert!((set.above_area() + set.below_area() - masked).abs() < 1e-6 * masked);

    let height = 5.0;
    for (name, polys) in [("above", &set.above), ("below", &set.below)] {
        if polys.is_empty() {
            continue;
        }
        let path = dir.path().join(format!("{name}.stl"));
        let soup = extrude_to_stl(polys, height, &path).unwrap();
        assert!(soup.is_watertight());
        let area: f64 = polys.iter().map(|p| p.area()).sum();
        assert!((soup.volume() - area * height).abs() <= 1e-6 * area * height);
        let back = read_stl(&path).unwrap();
        assert_eq!(back.len(), soup.len());
        assert!((back.volume() - soup.volume()).abs() <= 1e-4 * soup.volume());
        // one component per polygon, each with genus equal to its hole count
        let mut expected: Vec<i64> = polys.iter().map(|p| 2 - 2 * p.holes.len() as i64).collect();
        let mut got = soup.euler_characteristics();
        expected.sort_unstable();
        got.sort_unstable();
        assert_eq!(got, expected);
    }
}

#[test]
fn extrusion_volume_matches_polygon_area() {
    let mesh = Mesh::rectangle(8.0, 8.0, 16, 16, None);
    // radial bump gives a disc above and a square with a round hole below
    let chi: Vec<f64> = mesh
        .nodes
        .iter()
        .map(|p| 1.0 - ((p[0] - 4.0).powi(2) + (p[1] - 4.0).powi(2)).sqrt() / 4.0)
        .collect();
    let set = threshold_contour(&mesh.nodes, &mesh.elements, &chi, 0.5).unwrap();
    assert_eq!(set.below.len(), 1);
    assert_eq!(set.below[0].holes.len(), 1);
    for polys in [&set.above, &set.below] {
        let soup = extrude_region(polys, 2.5).unwrap();
        assert!(soup.is_watertight());
        let area: f64 = polys.iter().map(|p| p.area()).sum();
        assert!((soup.volume() - 2.5 * area).abs() <= 1e-9 * area);
    }
    let below = extrude_region(&set.below, 1.0).unwrap();
    assert_eq!(below.euler_characteristics(), vec![0]);
}

#[test]
fn pinched_region_extrudes_to_separate_closed_parts() {
    // saddle: the above region is two opposite quadrants touching at (1, 1)
    let mesh = Mesh::rectangle(2.0, 2.0, 4, 4, None);
    let chi: Vec<f64> = mesh.nodes.iter().map(|p| (p[0] - 1.0) * (p[1] - 1.0) + 0.5).collect();
    let set = threshold_contour(&mesh.nodes, &mesh.elements, &chi, 0.5).unwrap();
    check_partition(&set, 4.0);
    for polys in [&set.above, &set.below] {
        assert_eq!(polys.len(), 2);
        let soup = extrude_region(polys, 1.0).unwrap();
        assert!(soup.is_watertight());
        assert_eq!(soup.euler_characteristics(), vec![2, 2]);
        assert!((soup.volume() - 2.0).abs() < 1e-5);
    }
}
