//! Gauss–Legendre rules and iterated integrals over the ordered simplex.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on `P_n` from the Chebyshev-like initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
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
        GaussLegendre { nodes, weights }
    }

    /// Composite rule on `[a, b]` with `panels` equal panels, as (node, weight) pairs.
    pub fn composite(&self, a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
        let h = (b - a) / panels as f64;
        let mut out = Vec::with_capacity(panels * self.nodes.len());
        for p in 0..panels {
            let lo = a + h * p as f64;
            let mid = lo + 0.5 * h;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                out.push((mid + 0.5 * h * x, 0.5 * h * w));
            }
        }
        out
    }

    pub fn integrate(&self, a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
        self.composite(a, b, panels).into_iter().map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `∫₀^upper f₁(τ₁) ∫₀^{τ₁} f₂(τ₂) ⋯ ∫₀^{τ_{k−1}} f_k(τ_k) dτ_k ⋯ dτ₁`
/// with the same composite rule applied at every level.
pub fn ordered_integral(rule: &GaussLegendre, panels: usize, upper: f64, fs: &[&dyn Fn(f64) -> f64]) -> f64 {
    match fs.split_first() {
        None => 1.0,
        Some((f, rest)) => {
            if upper == 0.0 {
                return 0.0;
            }
            rule.composite(0.0, upper, panels)
                .into_iter()
                .map(|(x, w)| {
                    let inner = if rest.is_empty() { 1.0 } else { ordered_integral(rule, panels, x, rest) };
                    w * f(x) * inner
                })
                .sum()
        }
    }
}

/// Ordered-simplex integral over `[0, 1]` with panel doubling until two
/// successive values differ by less than `tol`. Returns the value and the
/// final panel count, or the last change on failure.
pub fn ordered_integral_adaptive(
    fs: &[&dyn Fn(f64) -> f64],
    nodes_per_panel: usize,
    tol: f64,
    max_panels: usize,
) -> std::result::Result<(f64, usize), f64> {
    let rule = GaussLegendre::new(nodes_per_panel);
    let mut panels = 1;
    let mut previous = ordered_integral(&rule, panels, 1.0, fs);
    let mut change = f64::INFINITY;
    while panels < max_panels {
        panels *= 2;
        let current = ordered_integral(&rule, panels, 1.0, fs);
        change = (current - previous).abs();
        previous = current;
        if change < tol {
            return Ok((current, panels));
        }
    }
    Err(change)
}
