//! Gauss-Legendre rules mapped to the unit interval.

/// Nodes θⱼ ∈ (0, 1) and weights wⱼ > 0 with Σ wⱼ = 1, exact for
/// polynomials of degree `2q − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl UnitRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Legendre polynomial P_q(t) and its derivative.
fn legendre(q: usize, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, t);
    if q == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=q {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = q as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, dp)
}

pub fn gauss_legendre(q: usize) -> UnitRule {
    assert!(q >= 1, "quadrature needs at least one point");
    let mut nodes = Vec::with_capacity(q);
    let mut weights = Vec::with_capacity(q);
    for k in (1..=q).rev() {
        let mut t = (std::f64::consts::PI * (k as f64 - 0.25) / (q as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(q, t);
            let step = p / dp;
            t -= step;
            if step.abs() <= 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(q, t);
        let w = 2.0 / ((1.0 - t * t) * dp * dp);
        nodes.push(0.5 * (t + 1.0));
        weights.push(0.5 * w);
    }
    UnitRule { nodes, weights }
}
