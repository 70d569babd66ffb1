//! Gauss–Kronrod quadrature of arbitrary order with global adaptive
//! subdivision.
//!
//! An order-`n` rule pairs the `n`-point Gauss–Legendre rule with its
//! `2n + 1`-point Kronrod extension. The Kronrod abscissae are the zeros of
//! the Stieltjes polynomial `E_{n+1}`, which is built in the Legendre basis
//! from its orthogonality conditions against `P_n · x^k`; the weights then
//! come from exactness on `P_0 .. P_{2n}`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};

/// Evaluates `P_0(x) .. P_m(x)` by the three-term recurrence.
fn legendre_all(m: usize, x: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(m + 1);
    p.push(1.0);
    if m >= 1 {
        p.push(x);
    }
    for j in 1..m {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0) * x * p[j] - jf * p[j - 1]) / (jf + 1.0);
        p.push(next);
    }
    p
}

/// `(P_n(x), P_n'(x))` for |x| < 1.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let p = legendre_all(n, x);
    let pn = p[n];
    let pm = if n >= 1 { p[n - 1] } else { 0.0 };
    let d = n as f64 * (x * pn - pm) / (x * x - 1.0);
    (pn, d)
}

/// Gauss–Legendre nodes (ascending) and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 1..=n {
        let mut x = -(std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let step = p / d;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        nodes.push(x);
        weights.push(2.0 / ((1.0 - x * x) * d * d));
    }
    (nodes, weights)
}

/// Nodes and weights of one Gauss–Kronrod pair on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussKronrodRule {
    order: usize,
    /// All `2n + 1` Kronrod nodes in ascending order.
    nodes: Vec<f64>,
    kronrod_weights: Vec<f64>,
    /// Gauss weights aligned with `nodes`; zero on Kronrod-only nodes.
    gauss_weights: Vec<f64>,
}

impl GaussKronrodRule {
    /// Builds the rule with `order` Gauss points. Rules are cached.
    pub fn new(order: usize) -> Arc<GaussKronrodRule> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussKronrodRule>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        guard
            .entry(order)
            .or_insert_with(|| Arc::new(Self::compute(order)))
            .clone()
    }

    fn compute(n: usize) -> GaussKronrodRule {
        assert!(n >= 1, "Gauss-Kronrod rule needs order >= 1");
        let (gauss_nodes, gauss_w) = gauss_legendre(n);

        // Coefficients of E_{n+1} = P_{n+1} + sum_{j<=n} c_j P_j.
        let (aux_nodes, aux_w) = gauss_legendre(2 * n + 2);
        let basis: Vec<Vec<f64>> = aux_nodes.iter().map(|&x| legendre_all(n + 1, x)).collect();
        let mut m = DMatrix::<f64>::zeros(n + 1, n + 1);
        let mut rhs = DVector::<f64>::zeros(n + 1);
        for (b, &w) in basis.iter().zip(&aux_w) {
            for k in 0..=n {
                let common = w * b[n] * b[k];
                for j in 0..=n {
                    m[(k, j)] += common * b[j];
                }
                rhs[k] -= common * b[n + 1];
            }
        }
        let coeffs = m
            .lu()
            .solve(&rhs)
            .expect("Stieltjes system is nonsingular");
        let stieltjes = |x: f64| -> f64 {
            let p = legendre_all(n + 1, x);
            p[n + 1] + (0..=n).map(|j| coeffs[j] * p[j]).sum::<f64>()
        };

        // Kronrod nodes interlace the Gauss nodes.
        let mut brackets = Vec::with_capacity(n + 2);
        brackets.push(-1.0);
        brackets.extend_from_slice(&gauss_nodes);
        brackets.push(1.0);
        let mut kronrod_only = Vec::with_capacity(n + 1);
        for pair in brackets.windows(2) {
            let (mut lo, mut hi) = (pair[0], pair[1]);
            let mut flo = stieltjes(lo);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = stieltjes(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm > 0.0) == (flo > 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-17 {
                    break;
                }
            }
            kronrod_only.push(0.5 * (lo + hi));
        }

        let mut nodes: Vec<(f64, Option<f64>)> = gauss_nodes
            .iter()
            .zip(&gauss_w)
            .map(|(&x, &w)| (x, Some(w)))
            .chain(kronrod_only.iter().map(|&x| (x, None)))
            .collect();
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));

        // Kronrod weights: exact for P_0 .. P_{2n}.
        let size = 2 * n + 1;
        let mut v = DMatrix::<f64>::zeros(size, size);
        for (i, &(x, _)) in nodes.iter().enumerate() {
            let p = legendre_all(size - 1, x);
            for j in 0..size {
                v[(j, i)] = p[j];
            }
        }
        let mut moments = DVector::<f64>::zeros(size);
        moments[0] = 2.0;
        let kw = v.lu().solve(&moments).expect("Kronrod weight system is nonsingular");

        GaussKronrodRule {
            order: n,
            nodes: nodes.iter().map(|p| p.0).collect(),
            kronrod_weights: kw.iter().copied().collect(),
            gauss_weights: nodes.iter().map(|p| p.1.unwrap_or(0.0)).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn kronrod_weights(&self) -> &[f64] {
        &self.kronrod_weights
    }

    pub fn gauss_weights(&self) -> &[f64] {
        &self.gauss_weights
    }

    /// Applies the pair on `[a, b]`, returning the Kronrod estimate and the
    /// max-norm of the Kronrod–Gauss difference.
    fn apply<const D: usize, F>(&self, f: &mut F, a: f64, b: f64) -> ([f64; D], f64)
    where
        F: FnMut(f64) -> [f64; D],
    {
        let centre = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut k = [0.0; D];
        let mut g = [0.0; D];
        for ((&x, &kw), &gw) in self
            .nodes
            .iter()
            .zip(&self.kronrod_weights)
            .zip(&self.gauss_weights)
        {
            let y = f(centre + half * x);
            for c in 0..D {
                k[c] += kw * y[c];
                g[c] += gw * y[c];
            }
        }
        let mut err: f64 = 0.0;
        for c in 0..D {
            k[c] *= half;
            g[c] *= half;
            err = err.max((k[c] - g[c]).abs());
        }
        (k, err)
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral<const D: usize> {
    pub value: [f64; D],
    pub error: f64,
    pub segments: usize,
    pub converged: bool,
}

struct Segment<const D: usize> {
    a: f64,
    b: f64,
    value: [f64; D],
    error: f64,
}

impl<const D: usize> PartialEq for Segment<D> {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl<const D: usize> Eq for Segment<D> {}
impl<const D: usize> PartialOrd for Segment<D> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const D: usize> Ord for Segment<D> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Global adaptive Gauss–Kronrod integrator: the segment with the largest
/// error estimate is bisected until the summed error meets the tolerance.
#[derive(Debug, Clone)]
pub struct Integrator {
    rule: Arc<GaussKronrodRule>,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_segments: usize,
}

impl Integrator {
    pub fn new(order: usize) -> Self {
        Integrator {
            rule: GaussKronrodRule::new(order),
            abs_tol: 0.0,
            rel_tol: 1e-10,
            max_segments: 2000,
        }
    }

    pub fn with_tolerance(mut self, abs_tol: f64, rel_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_max_segments(mut self, max_segments: usize) -> Self {
        self.max_segments = max_segments.max(1);
        self
    }

    pub fn rule(&self) -> &GaussKronrodRule {
        &self.rule
    }

    /// Integrates over `[a, b]`. Interior `breakpoints` (discontinuities or
    /// kinks of the integrand) start as segment boundaries.
    pub fn integrate<const D: usize, F>(&self, mut f: F, a: f64, b: f64, breakpoints: &[f64]) -> Integral<D>
    where
        F: FnMut(f64) -> [f64; D],
    {
        let mut cuts: Vec<f64> = std::iter::once(a)
            .chain(breakpoints.iter().copied().filter(|&x| x > a && x < b))
            .chain(std::iter::once(b))
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let mut heap = BinaryHeap::new();
        for w in cuts.windows(2) {
            let (value, error) = self.rule.apply(&mut f, w[0], w[1]);
            heap.push(Segment { a: w[0], b: w[1], value, error });
        }

        loop {
            let (total, error) = Self::totals(&heap);
            let scale = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let target = self.abs_tol.max(self.rel_tol * scale);
            let finite = error.is_finite() && total.iter().all(|v| v.is_finite());
            if (finite && error <= target) || heap.len() >= self.max_segments || !finite {
                return Integral {
                    value: total,
                    error,
                    segments: heap.len(),
                    converged: finite && error <= target,
                };
            }
            let worst = heap.pop().expect("at least one segment");
            let mid = 0.5 * (worst.a + worst.b);
            if !(mid > worst.a && mid < worst.b) {
                // Segment cannot be split any further in floating point.
                heap.push(Segment { error: 0.0, ..worst });
                continue;
            }
            for (lo, hi) in [(worst.a, mid), (mid, worst.b)] {
                let (value, error) = self.rule.apply(&mut f, lo, hi);
                heap.push(Segment { a: lo, b: hi, value, error });
            }
        }
    }

    fn totals<const D: usize>(heap: &BinaryHeap<Segment<D>>) -> ([f64; D], f64) {
        let mut total = [0.0; D];
        let mut error = 0.0;
        for s in heap.iter() {
            for c in 0..D {
                total[c] += s.value[c];
            }
            error += s.error;
        }
        (total, error)
    }

    /// Scalar convenience wrapper.
    pub fn integrate_scalar<F>(&self, mut f: F, a: f64, b: f64, breakpoints: &[f64]) -> Integral<1>
    where
        F: FnMut(f64) -> f64,
    {
        self.integrate(|x| [f(x)], a, b, breakpoints)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Published G7-K15 abscissae and weights (non-negative half).
    const K15_NODES: [f64; 8] = [
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144845693013,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
        0.000000000000000000000000000000000,
    ];
    const K15_WEIGHTS: [f64; 8] = [
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
        0.209482141084727828012999174891714,
    ];
    const G7_WEIGHTS: [f64; 4] = [
        0.129484966168869693270611432679082,
        0.279705391489276667901467771423780,
        0.381830050505118944950369775488975,
        0.417959183673469387755102040816327,
    ];

    #[test]
    fn order_seven_matches_published_table() {
        let rule = GaussKronrodRule::new(7);
        assert_eq!(rule.nodes().len(), 15);
        for i in 0..8 {
            // Ascending order: node 7 is zero, nodes 8.. positive.
            let x = rule.nodes()[14 - i];
            assert_relative_eq!(x, K15_NODES[i], epsilon = 1e-14);
            assert_relative_eq!(rule.kronrod_weights()[14 - i], K15_WEIGHTS[i], epsilon = 1e-14);
        }
        let gauss: Vec<f64> = rule.gauss_weights().iter().rev().copied().filter(|w| *w > 0.0).collect();
        for i in 0..4 {
            assert_relative_eq!(gauss[i], G7_WEIGHTS[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn order_twenty_is_exact_to_degree_61() {
        let rule = GaussKronrodRule::new(20);
        assert_eq!(rule.nodes().len(), 41);
        for deg in [0usize, 2, 10, 40, 60] {
            let k: f64 = rule
                .nodes()
                .iter()
                .zip(rule.kronrod_weights())
                .map(|(x, w)| w * x.powi(deg as i32))
                .sum();
            assert_relative_eq!(k, 2.0 / (deg as f64 + 1.0), epsilon = 1e-12);
        }
        let g: f64 = rule
            .nodes()
            .iter()
            .zip(rule.gauss_weights())
            .map(|(x, w)| w * x.powi(38))
            .sum();
        assert_relative_eq!(g, 2.0 / 39.0, epsilon = 1e-12);
    }

    #[test]
    fn adaptive_handles_discontinuity_with_breakpoint() {
        let integ = Integrator::new(7);
        let step = |x: f64| if x < 0.5 { x } else { 0.0 };
        let with = integ.integrate_scalar(step, 0.0, 1.0, &[0.5]);
        assert!(with.converged);
        assert_relative_eq!(with.value[0], 0.125, epsilon = 1e-14);
        let without = integ.integrate_scalar(step, 0.0, 1.0, &[]);
        assert_relative_eq!(without.value[0], 0.125, epsilon = 1e-8);
    }

    #[test]
    fn adaptive_smooth_peaked_integrand() {
        let integ = Integrator::new(10);
        let r = integ.integrate_scalar(|x| (-x.abs()).exp(), -40.0, 60.0, &[0.0]);
        let exact = 2.0 - (-40.0f64).exp() - (-60.0f64).exp();
        assert_relative_eq!(r.value[0], exact, max_relative = 1e-12);
    }

    #[test]
    fn vector_valued_integrand() {
        let integ = Integrator::new(7);
        let r = integ.integrate(|x| [x, x * x, x.sin()], 0.0, std::f64::consts::PI, &[]);
        assert_relative_eq!(r.value[0], std::f64::consts::PI.powi(2) / 2.0, max_relative = 1e-12);
        assert_relative_eq!(r.value[1], std::f64::consts::PI.powi(3) / 3.0, max_relative = 1e-12);
        assert_relative_eq!(r.value[2], 2.0, max_relative = 1e-12);
    }
}
