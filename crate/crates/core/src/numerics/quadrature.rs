//! Gauss–Legendre rules on the angle interval `(−π/2, π/2)`.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use crate::error::{invalid, Result};

/// Smallest distance to the real axis the graded rule resolves.
const MIN_DIST: f64 = 1e-10;

/// Number of nodes used when the caller does not choose one.
pub const DEFAULT_NODES: usize = 201;

/// A fixed quadrature rule on `(−π/2, π/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Builds a rule from explicit nodes and weights, checking the invariants:
    /// nodes strictly increasing inside the open interval, positive weights
    /// summing to π.
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return Err(invalid!("nodes and weights must be non-empty and of equal length"));
        }
        if nodes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid!("quadrature nodes must be strictly increasing"));
        }
        if !(nodes[0] > -FRAC_PI_2 && nodes[nodes.len() - 1] < FRAC_PI_2) {
            return Err(invalid!("quadrature nodes must lie in (-pi/2, pi/2)"));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(invalid!("quadrature weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - PI).abs() > 1e-10 {
            return Err(invalid!("quadrature weights sum to {total}, expected pi"));
        }
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        gauss_legendre(DEFAULT_NODES).expect("default rule is valid")
    }
}

/// `n`-point Gauss–Legendre rule mapped to `(−π/2, π/2)`.
pub fn gauss_legendre(n: usize) -> Result<QuadratureRule> {
    if n < 2 {
        return Err(invalid!("Gauss-Legendre rule needs n >= 2, got {n}"));
    }
    let (x, w) = legendre_nodes(n);
    let nodes = x.iter().map(|v| v * FRAC_PI_2).collect();
    let weights = w.iter().map(|v| v * FRAC_PI_2).collect();
    QuadratureRule::new(nodes, weights)
}

/// Nodes and weights on `[−1, 1]`, ascending, by Newton iteration on `P_n`.
fn legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = alloc::vec![0.0; n];
    let mut w = alloc::vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi's initial guess for the i-th largest root.
        let mut z = libm::cos(PI * (i as f64 + 0.75) / (nf + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_eval(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_eval(n, z);
        if d != 0.0 {
            dp = d;
        }
        let weight = 2.0 / ((1.0 - z * z) * dp * dp);
        x[n - 1 - i] = z;
        x[i] = -z;
        w[n - 1 - i] = weight;
        w[i] = weight;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre_eval(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre rule on `(−π/2, π/2)` for π-periodic integrands
/// that are analytic except near the complex points `re ± i·dist`.
///
/// Panels are graded geometrically toward each `re` (and its images `re ± π`),
/// starting at half-width `dist/4`, so every panel stays at least twice its
/// half-length away from the nearest singularity. Panels longer than
/// `max_len` are split evenly. Each panel carries `panel_nodes` nodes.
pub fn graded_rule(singular: &[(f64, f64)], panel_nodes: usize, max_len: f64) -> Result<QuadratureRule> {
    if panel_nodes < 2 || !(max_len > 0.0) {
        return Err(invalid!("graded rule needs at least 2 nodes per panel and a positive panel length"));
    }
    // Points closer than half their distance to the real axis share a grading.
    let mut points: Vec<(f64, f64)> = singular
        .iter()
        .filter(|(re, d)| re.is_finite() && d.is_finite())
        .map(|&(re, d)| (re, d.abs().max(MIN_DIST)))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (re, d) in points {
        match merged.last_mut() {
            Some(last) if re - last.0 <= 0.5 * d.min(last.1) => last.1 = last.1.min(d),
            _ => merged.push((re, d)),
        }
    }
    let mut breaks: Vec<f64> = alloc::vec![-FRAC_PI_2, FRAC_PI_2];
    let mut min_off = f64::INFINITY;
    for &(re, dist) in &merged {
        min_off = min_off.min(dist / 4.0);
        for img in [re - PI, re, re + PI] {
            breaks.push(img);
            let mut off = dist / 4.0;
            while off < PI {
                breaks.push(img - off);
                breaks.push(img + off);
                off *= 2.0;
            }
        }
    }
    breaks.retain(|x| *x >= -FRAC_PI_2 && *x <= FRAC_PI_2);
    breaks.sort_by(f64::total_cmp);
    // Panels much narrower than the finest grading carry no information and
    // would put nodes closer together than the floating-point spacing.
    let tol = 0.5 * min_off.min(1.0);
    let mut kept: Vec<f64> = Vec::with_capacity(breaks.len());
    for b in breaks {
        match kept.last() {
            Some(&last) if b - last < tol => {
                if b == FRAC_PI_2 {
                    *kept.last_mut().unwrap() = b;
                }
            }
            _ => kept.push(b),
        }
    }
    if kept.len() >= 2 && kept[0] != -FRAC_PI_2 {
        kept[0] = -FRAC_PI_2;
    }
    let breaks = kept;
    let (base_x, base_w) = legendre_nodes(panel_nodes);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for pair in breaks.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let pieces = libm::ceil((hi - lo) / max_len).max(1.0) as usize;
        let h = (hi - lo) / pieces as f64;
        for piece in 0..pieces {
            let a = lo + h * piece as f64;
            let (mid, half) = (a + 0.5 * h, 0.5 * h);
            for (x, w) in base_x.iter().zip(&base_w) {
                nodes.push(mid + half * x);
                weights.push(half * w);
            }
        }
    }
    // Rescale the weights so they sum to π exactly despite rounding.
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w *= PI / total;
    }
    QuadratureRule::new(nodes, weights)
}

/// `log Σ w_i exp(a_i)` with the maximum factored out. Returns `(value, max)`.
pub fn log_sum_exp_weighted(log_terms: &[f64], weights: &[f64]) -> (f64, f64) {
    let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return (max, max);
    }
    let s: f64 = log_terms
        .iter()
        .zip(weights)
        .map(|(a, w)| w * libm::exp(a - max))
        .sum();
    (max + libm::log(s), max)
}
