//! Gauss–Legendre rules on the unit interval and adaptive integration.

use std::collections::BinaryHeap;

use gauss_quad::GaussLegendre;

/// Nodes and weights of the `order`-point Gauss–Legendre rule on `[0, 1]`.
pub fn unit_gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    let order = order.max(2);
    GaussLegendre::new(order)
        .expect("order >= 2")
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect()
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Sum of the panel error estimates.
    pub error: f64,
    /// Panels in the final partition.
    pub panels: usize,
    /// Whether the panel limit was reached before the tolerance.
    pub truncated: bool,
}

const PANEL_ORDER: usize = 7;
/// Relative disagreement below which bisection cannot improve a panel.
const ROUNDING_FLOOR: f64 = 1e-14;

struct Panel {
    a: f64,
    b: f64,
    /// Rule applied to the two halves.
    value: f64,
    /// Rule applied to each half, kept for the next split.
    halves: [f64; 2],
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error).is_eq()
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss–Legendre quadrature of `f` over `[a, b]` to
/// tolerance `tol` (absolute, relative once the value exceeds 1), using at
/// most `max_panels` panels. The panel with
/// the largest error estimate is bisected until the estimates sum below the tolerance.
/// The rule is open, so `f` is never evaluated at panel ends.
pub fn adaptive_gauss_legendre<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    a: f64,
    b: f64,
    tol: f64,
    max_panels: usize,
) -> Result<Integral, E> {
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            panels: 0,
            truncated: false,
        });
    }
    let rule = unit_gauss_legendre(PANEL_ORDER);
    let whole = gauss_panel(&mut f, &rule, a, b)?;
    let mut heap = BinaryHeap::new();
    heap.push(split(&mut f, &rule, a, b, whole)?);
    let mut error = heap.peek().map_or(0.0, |p| p.error);
    let mut value = heap.peek().map_or(0.0, |p| p.value);
    while error > tol * value.abs().max(1.0) && heap.len() < max_panels.max(1) {
        let worst = heap.pop().expect("nonempty");
        if worst.error == 0.0 {
            heap.push(worst);
            break;
        }
        let m = 0.5 * (worst.a + worst.b);
        let left = split(&mut f, &rule, worst.a, m, worst.halves[0])?;
        let right = split(&mut f, &rule, m, worst.b, worst.halves[1])?;
        error += left.error + right.error - worst.error;
        value += left.value + right.value - worst.value;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to shed the drift of the running total.
    let error: f64 = heap.iter().map(|p| p.error).sum();
    let value: f64 = heap.iter().map(|p| p.value).sum();
    Ok(Integral {
        value,
        error,
        panels: heap.len(),
        truncated: error > tol * value.abs().max(1.0),
    })
}

fn gauss_panel<E>(f: &mut impl FnMut(f64) -> Result<f64, E>, rule: &[(f64, f64)], a: f64, b: f64) -> Result<f64, E> {
    let h = b - a;
    let mut acc = 0.0;
    for &(x, w) in rule {
        acc += w * f(a + h * x)?;
    }
    Ok(acc * h)
}

fn split<E>(
    f: &mut impl FnMut(f64) -> Result<f64, E>,
    rule: &[(f64, f64)],
    a: f64,
    b: f64,
    whole: f64,
) -> Result<Panel, E> {
    let m = 0.5 * (a + b);
    let left = gauss_panel(f, rule, a, m)?;
    let right = gauss_panel(f, rule, m, b)?;
    let value = left + right;
    let mut error = (value - whole).abs();
    if error <= ROUNDING_FLOOR * (left.abs() + right.abs()) || m <= a || m >= b {
        error = 0.0;
    }
    Ok(Panel {
        a,
        b,
        value,
        halves: [left, right],
        error,
    })
}
