use proptest::prelude::*;

use igadd::analysis::{fit_order, l2_error};
use igadd::config::CaseConfig;
use igadd::geometry::{Patch, Point};
use igadd::io::{read_geometry, write_geometry};
use igadd::quadrature::default_rules;
use igadd::splines::{KnotVector, TensorSpace};

fn square(p: usize, n: usize) -> Patch {
    let kv = || KnotVector::uniform(p, n, 0.0, 1.0).unwrap();
    Patch::axis_aligned(TensorSpace::new(vec![kv(), kv()]).unwrap(), &[0.0, 0.0], &[1.0, 1.0]).unwrap()
}

proptest! {
    #[test]
    fn l2_triangle_inequality(a in prop::collection::vec(-5.0..5.0f64, 16),
                              b in prop::collection::vec(-5.0..5.0f64, 16),
                              c in prop::collection::vec(-5.0..5.0f64, 16)) {
        let patch = square(1, 3);
        let rules = default_rules(patch.space()).unwrap();
        let diff = |u: &[f64], v: &[f64]| -> f64 {
            let d: Vec<f64> = u.iter().zip(v).map(|(x, y)| x - y).collect();
            l2_error(&patch, &d, |_| 0.0, &rules).unwrap()
        };
        prop_assert!(diff(&a, &c) <= diff(&a, &b) + diff(&b, &c) + 1e-12);
        prop_assert_eq!(diff(&a, &a), 0.0);
    }

    #[test]
    fn fit_order_ignores_error_scale(slope in 0.5..5.0f64, scale in 1e-6..1e6f64) {
        let pts: Vec<(f64, f64)> = (0..5).map(|k| {
            let h = 0.5f64.powi(k);
            (h, h.powf(slope) * (1.0 + 0.1 * (k as f64).sin()))
        }).collect();
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(h, e)| (h, scale * e)).collect();
        let (s1, c1) = fit_order(&pts).unwrap();
        let (s2, c2) = fit_order(&scaled).unwrap();
        prop_assert!((s1 - s2).abs() < 1e-9);
        prop_assert!((c2 - c1 - scale.ln()).abs() < 1e-8);
    }

    #[test]
    fn geometry_file_round_trip(p in 1usize..4, n in 1usize..5, bend in -0.2..0.2f64) {
        let space = TensorSpace::new(vec![
            KnotVector::uniform(p, n, 0.0, 1.0).unwrap(),
            KnotVector::uniform(p, n + 1, -1.0, 1.0).unwrap(),
        ]).unwrap();
        let patch = Patch::interpolate(space, 2, |xi| {
            Point::from_slice(&[xi[0] + bend * xi[1] * xi[1], xi[1]])
        }).unwrap();
        prop_assert_eq!(read_geometry(&write_geometry(&patch)).unwrap(), patch);
    }

    #[test]
    fn config_round_trip(degree in prop::option::of(1usize..=6), refine in 0usize..=6,
                         overlap in prop::option::of(0.01..2.0f64), workers in 1usize..16,
                         epsilon in 1e-12..1e-2f64, interp: bool) {
        let mut c = CaseConfig::new("two_patch_2d");
        c.degree = degree;
        c.refine = refine;
        c.overlap = overlap;
        c.workers = workers;
        c.epsilon = epsilon;
        if interp {
            c.set("trace", "interp").unwrap();
        }
        prop_assert_eq!(CaseConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn parsers_never_panic(text in "\\PC{0,200}") {
        let _ = read_geometry(&text);
        let _ = CaseConfig::parse(&text);
        let _ = igadd::io::VtkGrid::parse(&text);
    }
}
