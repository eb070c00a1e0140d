//! Error norms, log–log order fits and the corner-singularity exponent.

use std::f64::consts::PI;
use std::io::Write;

use crate::assembly::eval_node;
use crate::error::{Error, Result};
use crate::geometry::Patch;
use crate::quadrature::ElementRule;

/// `‖u_h − u‖_{L²}` by element-wise quadrature on the physical patch.
pub fn l2_error<U>(patch: &Patch, coeffs: &[f64], exact: U, rules: &[ElementRule]) -> Result<f64>
where
    U: Fn(&[f64]) -> f64,
{
    let mut sum = 0.0;
    for rule in rules {
        for (xi, &w) in rule.nodes.iter().zip(&rule.weights) {
            let node = eval_node(patch, xi, false)?;
            let uh: f64 = node.indices.iter().zip(&node.values).map(|(&i, v)| v * coeffs[i]).sum();
            let d = uh - exact(&node.x);
            sum += w * node.measure * d * d;
        }
    }
    Ok(sum.sqrt())
}

/// `|u_h − u|_{H¹}` with physical gradients.
pub fn h1_seminorm_error<G>(patch: &Patch, coeffs: &[f64], grad_exact: G, rules: &[ElementRule]) -> Result<f64>
where
    G: Fn(&[f64]) -> [f64; 3],
{
    let dim = patch.dim_phys();
    let mut sum = 0.0;
    for rule in rules {
        for (xi, &w) in rule.nodes.iter().zip(&rule.weights) {
            let node = eval_node(patch, xi, true)?;
            let mut g = [0.0; 3];
            for (&i, grad) in node.indices.iter().zip(&node.grads) {
                for d in 0..dim {
                    g[d] += coeffs[i] * grad[d];
                }
            }
            let ge = grad_exact(&node.x);
            let d2: f64 = (0..dim).map(|d| (g[d] - ge[d]).powi(2)).sum();
            sum += w * node.measure * d2;
        }
    }
    Ok(sum.sqrt())
}

/// `(h, e)` pairs from a refinement study.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceSeries {
    pub points: Vec<(f64, f64)>,
}

impl ConvergenceSeries {
    pub fn new(points: Vec<(f64, f64)>) -> Self {
        Self { points }
    }

    pub fn push(&mut self, h: f64, e: f64) {
        self.points.push((h, e));
    }

    /// Least-squares line through `(log h, log e)`: `(slope, intercept)`.
    pub fn fit_order(&self) -> Result<(f64, f64)> {
        fit_order(&self.points)
    }

    /// Writes `h,error` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "h,error")?;
        for (h, e) in &self.points {
            writeln!(out, "{h:e},{e:e}")?;
        }
        Ok(())
    }
}

pub fn fit_order(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 3 {
        return Err(Error::InvalidInput("order fit needs at least three points".into()));
    }
    if points.windows(2).any(|w| w[1].0 >= w[0].0) {
        return Err(Error::InvalidInput("mesh sizes must strictly decrease".into()));
    }
    if points.iter().any(|&(h, e)| !(h > 0.0 && e > 0.0)) {
        return Err(Error::InvalidInput("mesh sizes and errors must be positive".into()));
    }
    let n = points.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|&(h, e)| (h.ln(), e.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Harmonic function on the `3π/2` sector of radius `radius` vanishing on the
/// straight edges and equal to `θ(α − θ)` on the arc, truncated at the odd
/// term `n_max`. `theta` is measured from the first straight edge.
pub fn sector_series(rho: f64, theta: f64, radius: f64, n_max: usize) -> f64 {
    let mut sum = 0.0;
    for n in (1..=n_max).step_by(2) {
        let nf = n as f64;
        let e = 2.0 * nf / 3.0;
        sum += (rho / radius).powf(e) * (e * theta).sin() / nf.powi(3);
    }
    18.0 / PI * sum
}

/// Radial derivative of [`sector_series`].
pub fn sector_series_radial(rho: f64, theta: f64, radius: f64, n_max: usize) -> f64 {
    let mut sum = 0.0;
    for n in (1..=n_max).step_by(2) {
        let nf = n as f64;
        let e = 2.0 * nf / 3.0;
        sum += e * (rho / radius).powf(e) / rho * (e * theta).sin() / nf.powi(3);
    }
    18.0 / PI * sum
}

/// Log–log slope of `|∂u/∂ρ|` along the ray `corner + ρ·direction`, with the
/// derivative taken by central differences of step `1e-4·ρ`.
pub fn radial_exponent<U>(field: U, corner: &[f64], direction: &[f64], radii: &[f64]) -> Result<f64>
where
    U: Fn(&[f64]) -> Result<f64>,
{
    let len = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
    if len == 0.0 {
        return Err(Error::InvalidInput("zero ray direction".into()));
    }
    let at = |rho: f64| -> Vec<f64> { corner.iter().zip(direction).map(|(c, d)| c + rho * d / len).collect() };
    let mut samples = Vec::with_capacity(radii.len());
    for &rho in radii {
        let step = 1e-4 * rho;
        let derivative = (field(&at(rho + step))? - field(&at(rho - step))?) / (2.0 * step);
        samples.push((rho, derivative.abs()));
    }
    samples.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(fit_order(&samples)?.0)
}

/// `count` radii geometrically spaced over `[lo, hi]`.
pub fn geometric_radii(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let count = count.max(2);
    (0..count)
        .map(|k| lo * (hi / lo).powf(k as f64 / (count - 1) as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{default_rules, element_rules};
    use crate::splines::{KnotVector, TensorSpace};
    use approx::assert_abs_diff_eq;

    fn unit_square(p: usize, n: usize) -> Patch {
        let kv = || KnotVector::uniform(p, n, 0.0, 1.0).unwrap();
        Patch::axis_aligned(TensorSpace::new(vec![kv(), kv()]).unwrap(), &[0.0, 0.0], &[1.0, 1.0]).unwrap()
    }

    #[test]
    fn trivial_norms() {
        let patch = unit_square(2, 3);
        let rules = default_rules(patch.space()).unwrap();
        let zero = vec![0.0; patch.num_basis()];
        assert_abs_diff_eq!(l2_error(&patch, &zero, |_| 1.0, &rules).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(
            h1_seminorm_error(&patch, &zero, |_| [1.0, 0.0, 0.0], &rules).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        // x coordinate field is in the space
        let xs: Vec<f64> = (0..patch.num_basis()).map(|i| patch.control(i)[0]).collect();
        assert!(l2_error(&patch, &xs, |x| x[0], &rules).unwrap() <= 1e-12);
        assert!(h1_seminorm_error(&patch, &xs, |_| [1.0, 0.0, 0.0], &rules).unwrap() <= 1e-11);
    }

    #[test]
    fn refined_rule_cross_check() {
        let patch = unit_square(2, 3);
        let coeffs: Vec<f64> = (0..patch.num_basis()).map(|i| (i as f64).cos()).collect();
        let u = |x: &[f64]| (2.0 * x[0]).sin() * x[1];
        let g = |x: &[f64]| [2.0 * (2.0 * x[0]).cos() * x[1], (2.0 * x[0]).sin(), 0.0];
        let coarse = element_rules(patch.space(), 8).unwrap();
        let fine = element_rules(patch.space(), 30).unwrap();
        assert_abs_diff_eq!(
            l2_error(&patch, &coeffs, u, &coarse).unwrap(),
            l2_error(&patch, &coeffs, u, &fine).unwrap(),
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            h1_seminorm_error(&patch, &coeffs, g, &coarse).unwrap(),
            h1_seminorm_error(&patch, &coeffs, g, &fine).unwrap(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn synthetic_fits() {
        let hs = [0.5, 0.25, 0.125, 0.0625];
        let cube: Vec<(f64, f64)> = hs.iter().map(|&h| (h, h * h * h)).collect();
        let (s, _) = fit_order(&cube).unwrap();
        assert_abs_diff_eq!(s, 3.0, epsilon = 1e-10);
        let sq: Vec<(f64, f64)> = hs.iter().map(|&h| (h, 2.0 * h * h)).collect();
        let (s, c) = fit_order(&sq).unwrap();
        assert_abs_diff_eq!(s, 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(c, 2f64.ln(), epsilon = 1e-10);
        let scaled: Vec<(f64, f64)> = sq.iter().map(|&(h, e)| (h, 7.0 * e)).collect();
        assert_abs_diff_eq!(fit_order(&scaled).unwrap().0, 2.0, epsilon = 1e-10);
        assert!(fit_order(&sq[..2]).is_err());
        assert!(fit_order(&[(0.5, 1.0), (0.25, 0.0), (0.1, 1.0)]).is_err());
    }

    #[test]
    fn series_matches_arc_data_and_exponent() {
        let alpha = 1.5 * PI;
        for k in 1..10 {
            let th = alpha * k as f64 / 10.0;
            // truncation error of an n⁻³ series with ~500 terms
            assert_abs_diff_eq!(sector_series(3.0, th, 3.0, 999), th * (alpha - th), epsilon = 1e-4);
        }
        assert_eq!(sector_series(1.0, 0.0, 3.0, 199), 0.0);
        assert!(sector_series(1.0, alpha, 3.0, 199).abs() < 1e-12);
        let radii = geometric_radii(1e-3, 1e-1, 12);
        let th = 0.75 * PI;
        let e = radial_exponent(
            |x| {
                let rho = x[0].hypot(x[1]);
                Ok(sector_series(rho, th, 3.0, 199))
            },
            &[0.0, 0.0],
            &[th.cos(), th.sin()],
            &radii,
        )
        .unwrap();
        assert!((e + 1.0 / 3.0).abs() < 0.01, "{e}");
    }

    #[test]
    fn smooth_power_exponent() {
        // u = ρ² sin θ: ∂u/∂ρ = 2ρ sin θ
        let radii = geometric_radii(1e-2, 1e-1, 6);
        let e = radial_exponent(
            |x| {
                let rho = x[0].hypot(x[1]);
                Ok(rho * rho * x[1].atan2(x[0]).sin())
            },
            &[0.0, 0.0],
            &[1.0, 1.0],
            &radii,
        )
        .unwrap();
        assert_abs_diff_eq!(e, 1.0, epsilon = 1e-6);
    }
}
