//! Gauss–Legendre rules on knot-span elements and pushed-forward integration.

use crate::error::{Error, Result};
use crate::geometry::{advance, Patch, Point};
use crate::splines::{Multi, TensorSpace};

pub const MAX_POINTS: usize = 30;

/// Nodes (ascending) and weights of the `n`-point rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(1..=MAX_POINTS).contains(&n) {
        return Err(Error::InvalidInput(format!(
            "Gauss rule size {n} outside 1..={MAX_POINTS}"
        )));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_n and its derivative
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}

/// Tensor Gauss rule on one parametric element box.
#[derive(Debug, Clone)]
pub struct ElementRule {
    pub lo: Point,
    pub hi: Point,
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
}

impl ElementRule {
    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }
}

/// One rule per non-empty knot-span box, first direction running fastest.
pub fn element_rules(space: &TensorSpace, points_per_direction: usize) -> Result<Vec<ElementRule>> {
    let (gx, gw) = gauss_legendre(points_per_direction)?;
    let dim = space.dim();
    let elements: Vec<Vec<(f64, f64)>> = space.dirs().iter().map(|kv| kv.elements()).collect();
    let extents: Multi = elements.iter().map(Vec::len).collect();
    let node_extents: Multi = smallvec::smallvec![points_per_direction; dim];
    let mut rules = Vec::with_capacity(extents.iter().product());
    let mut elem: Multi = smallvec::smallvec![0; dim];
    loop {
        let boxes: Vec<(f64, f64)> = (0..dim).map(|d| elements[d][elem[d]]).collect();
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut node: Multi = smallvec::smallvec![0; dim];
        loop {
            let mut w = 1.0;
            let x: Point = (0..dim)
                .map(|d| {
                    let (a, b) = boxes[d];
                    w *= 0.5 * (b - a) * gw[node[d]];
                    0.5 * (a + b) + 0.5 * (b - a) * gx[node[d]]
                })
                .collect();
            nodes.push(x);
            weights.push(w);
            if !advance(&mut node, &node_extents) {
                break;
            }
        }
        rules.push(ElementRule {
            lo: boxes.iter().map(|b| b.0).collect(),
            hi: boxes.iter().map(|b| b.1).collect(),
            nodes,
            weights,
        });
        if !advance(&mut elem, &extents) {
            break;
        }
    }
    Ok(rules)
}

/// Default rule size: `max(p) + 1` points per direction.
pub fn default_rules(space: &TensorSpace) -> Result<Vec<ElementRule>> {
    let p = space.degrees().iter().copied().max().unwrap_or(0);
    element_rules(space, p + 1)
}

/// `Σ w · f(F(x̂)) · |det DF(x̂)|` over all element rules.
pub fn integrate_physical<F>(patch: &Patch, rules: &[ElementRule], integrand: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let square = patch.dim_param() == patch.dim_phys();
    let mut total = 0.0;
    for rule in rules {
        for (xi, &w) in rule.nodes.iter().zip(&rule.weights) {
            let (x, jac, _) = patch.map_full(xi)?;
            let measure = jac.measure();
            if square && (measure == 0.0 || !measure.is_finite()) {
                return Err(Error::SingularJacobian {
                    det: jac.det(),
                    point: xi.to_vec(),
                });
            }
            total += w * integrand(&x) * measure;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splines::KnotVector;
    use approx::assert_abs_diff_eq;

    // Legendre polynomial from its explicit coefficient formula, roots by bisection.
    fn legendre_explicit(n: usize, x: f64) -> f64 {
        let mut sum = 0.0;
        for k in 0..=n / 2 {
            let c = (-1f64).powi(k as i32) * binom(n, k) * binom(2 * n - 2 * k, n);
            sum += c * x.powi((n - 2 * k) as i32);
        }
        sum / 2f64.powi(n as i32)
    }

    fn binom(n: usize, k: usize) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn small_rules() {
        let (x, w) = gauss_legendre(1).unwrap();
        assert_eq!(x, vec![0.0]);
        assert_abs_diff_eq!(w[0], 2.0, epsilon = 1e-15);
        let (x, w) = gauss_legendre(2).unwrap();
        // oracle: bisection on the explicit P_2
        let (mut a, mut b) = (0.1, 0.9);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if legendre_explicit(2, a) * legendre_explicit(2, m) <= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        assert_abs_diff_eq!(x[1], 0.5 * (a + b), epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(x[0], -1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 1.0, epsilon = 1e-15);
        assert!(gauss_legendre(0).is_err());
        assert!(gauss_legendre(31).is_err());
    }

    #[test]
    fn nodes_are_legendre_roots() {
        for n in 1..=12 {
            let (x, w) = gauss_legendre(n).unwrap();
            assert_abs_diff_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
            for &xi in &x {
                assert!(legendre_explicit(n, xi).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn element_rules_tile_domain() {
        let kv = KnotVector::new(vec![0., 0., 0.3, 0.3, 1., 2., 2.], 1).unwrap();
        let space = TensorSpace::new(vec![kv]).unwrap();
        let rules = element_rules(&space, 2).unwrap();
        assert_eq!(rules.len(), 3);
        assert!(rules.iter().all(|r| r.nodes.len() == 2));
        let total: f64 = rules.iter().map(|r| r.weights.iter().sum::<f64>()).sum();
        assert_abs_diff_eq!(total, 2.0, epsilon = 1e-14);
        for r in &rules {
            assert_abs_diff_eq!(r.weights.iter().sum::<f64>(), r.volume(), epsilon = 1e-15);
        }
    }

    #[test]
    fn elementwise_polynomial_integration() {
        // monomial oracle: ∫ x^a y^b over [0,1]×[0,2] = 2^(b+1) / ((a+1)(b+1))
        let space = TensorSpace::new(vec![
            KnotVector::new(vec![0., 0., 0., 0.2, 0.7, 1., 1., 1.], 2).unwrap(),
            KnotVector::uniform(2, 3, 0.0, 2.0).unwrap(),
        ])
        .unwrap();
        let n = 3;
        let rules = element_rules(&space, n).unwrap();
        assert_eq!(rules.len(), 9);
        assert!(rules.iter().all(|r| r.nodes.len() == 9));
        let coeffs = [(0, 0, 1.5), (1, 3, -0.7), (5, 2, 2.0), (4, 5, 0.3)];
        let mut got = 0.0;
        for r in &rules {
            for (x, w) in r.nodes.iter().zip(&r.weights) {
                got += w * coeffs
                    .iter()
                    .map(|&(a, b, c)| c * x[0].powi(a) * x[1].powi(b))
                    .sum::<f64>();
            }
        }
        let exact: f64 = coeffs
            .iter()
            .map(|&(a, b, c)| c * 2f64.powi(b + 1) / ((a + 1) as f64 * (b + 1) as f64))
            .sum();
        assert!((got - exact).abs() <= 1e-13 * exact.abs());
    }

    #[test]
    fn physical_areas() {
        let kv = || KnotVector::uniform(1, 1, 0.0, 1.0).unwrap();
        let space = TensorSpace::new(vec![kv(), kv()]).unwrap();
        let id = Patch::axis_aligned(space.clone(), &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let rules = default_rules(&space).unwrap();
        assert_abs_diff_eq!(integrate_physical(&id, &rules, |_| 1.0).unwrap(), 1.0, epsilon = 1e-15);
        let quad = Patch::new(space, vec![0.0, 0.0, 2.0, 0.0, 0.0, 1.0, 2.0, 1.0], 2).unwrap();
        assert_abs_diff_eq!(
            integrate_physical(&quad, &rules, |_| 1.0).unwrap(),
            2.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn distorted_patch_matches_refined_rule() {
        let kv = || KnotVector::uniform(3, 4, 0.0, 1.0).unwrap();
        let space = TensorSpace::new(vec![kv(), kv()]).unwrap();
        let patch = Patch::interpolate(space.clone(), 2, |xi| {
            smallvec::smallvec![xi[0] + 0.1 * (3.0 * xi[1]).sin(), xi[1] + 0.1 * xi[0] * xi[0]]
        })
        .unwrap();
        let f = |x: &[f64]| (x[0] * x[1]).exp() * (2.0 * x[0]).cos();
        let coarse = integrate_physical(&patch, &element_rules(&space, 10).unwrap(), f).unwrap();
        let fine = integrate_physical(&patch, &element_rules(&space, 40.min(MAX_POINTS)).unwrap(), f).unwrap();
        assert_abs_diff_eq!(coarse, fine, epsilon = 1e-10);
    }
}
