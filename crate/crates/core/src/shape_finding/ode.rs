//! Adaptive Dormand–Prince 5(4) integrator with terminal events.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 200_000,
        }
    }
}

/// An accepted integration node with its derivative.
#[derive(Debug, Clone, Copy)]
pub struct Node<const N: usize> {
    pub s: f64,
    pub y: [f64; N],
    pub dy: [f64; N],
}

/// How an integration run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Reached the requested end point.
    End,
    /// The event function crossed zero; the last node sits on the root.
    Event,
    /// The abort predicate fired.
    Aborted,
}

#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    pub nodes: Vec<Node<N>>,
    pub termination: Termination,
}

impl<const N: usize> Trajectory<N> {
    pub fn last(&self) -> &Node<N> {
        self.nodes.last().expect("trajectory has at least one node")
    }

    /// Cubic Hermite interpolation between accepted nodes.
    pub fn sample(&self, s: f64) -> [f64; N] {
        let nodes = &self.nodes;
        let k = match nodes.binary_search_by(|n| n.s.total_cmp(&s)) {
            Ok(i) => return nodes[i].y,
            Err(0) => return nodes[0].y,
            Err(i) if i >= nodes.len() => return nodes[nodes.len() - 1].y,
            Err(i) => i - 1,
        };
        let (a, b) = (&nodes[k], &nodes[k + 1]);
        let h = b.s - a.s;
        let t = (s - a.s) / h;
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        std::array::from_fn(|i| h00 * a.y[i] + h10 * h * a.dy[i] + h01 * b.y[i] + h11 * h * b.dy[i])
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
}

/// One Dormand–Prince step; returns (y_new, f(y_new), error estimate).
fn dp_step<const N: usize, F>(
    rhs: &mut F,
    s: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
) -> Result<([f64; N], [f64; N], [f64; N])>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let k2 = rhs(s + C2 * h, &axpy(y, h, &[(A21, k1)]))?;
    let k3 = rhs(s + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = rhs(s + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = rhs(
        s + C5 * h,
        &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    )?;
    let k6 = rhs(
        s + h,
        &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    )?;
    let y_new = axpy(y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = rhs(s + h, &y_new)?;
    let err = std::array::from_fn(|i| {
        h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
    });
    Ok((y_new, k7, err))
}

/// Integrates `y' = rhs(s, y)` from `s0` towards `s_end`.
///
/// Integration stops early when `event(y)` changes sign from positive to
/// non-positive (the final node is placed on the root), or when `abort(s, y)`
/// returns true.
pub fn integrate<const N: usize, F, G, A>(
    mut rhs: F,
    s0: f64,
    y0: [f64; N],
    s_end: f64,
    tol: Tolerances,
    event: G,
    abort: A,
) -> Result<Trajectory<N>>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    G: Fn(&[f64; N]) -> f64,
    A: Fn(f64, &[f64; N]) -> bool,
{
    if !(s_end > s0) {
        return Err(Error::InvalidInput(format!(
            "integration interval [{s0}, {s_end}] is empty"
        )));
    }
    let span = s_end - s0;
    let mut s = s0;
    let mut y = y0;
    let mut dy = rhs(s, &y)?;
    let mut nodes = vec![Node { s, y, dy }];
    let mut h = span * 1e-4;
    let mut g_prev = event(&y);

    for _ in 0..tol.max_steps {
        h = h.min(s_end - s);
        let (y_new, dy_new, err) = dp_step(&mut rhs, s, &y, &dy, h)?;
        let err_norm = ((0..N)
            .map(|i| {
                let sc = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
                (err[i] / sc).powi(2)
            })
            .sum::<f64>()
            / N as f64)
            .sqrt();
        if !err_norm.is_finite() {
            h *= 0.2;
            continue;
        }
        if err_norm > 1.0 {
            h *= (0.9 * err_norm.powf(-0.2)).max(0.2);
            if h < span * 1e-15 {
                return Err(Error::InvalidInput(format!(
                    "step size underflow at s = {s:.6e}"
                )));
            }
            continue;
        }

        let g_new = event(&y_new);
        if g_prev > 0.0 && g_new <= 0.0 {
            let (s_root, y_root, dy_root) =
                locate_event(&mut rhs, &event, s, &y, &dy, h, g_prev, g_new)?;
            nodes.push(Node {
                s: s_root,
                y: y_root,
                dy: dy_root,
            });
            return Ok(Trajectory {
                nodes,
                termination: Termination::Event,
            });
        }

        s += h;
        y = y_new;
        dy = dy_new;
        g_prev = g_new;
        nodes.push(Node { s, y, dy });
        if abort(s, &y) {
            return Ok(Trajectory {
                nodes,
                termination: Termination::Aborted,
            });
        }
        if s >= s_end {
            return Ok(Trajectory {
                nodes,
                termination: Termination::End,
            });
        }
        let fac = if err_norm == 0.0 {
            5.0
        } else {
            (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= fac;
    }
    Err(Error::InvalidInput(format!(
        "integrator exceeded {} steps",
        tol.max_steps
    )))
}

/// Finds the event root inside an accepted step by re-stepping from its
/// start with an Illinois-modified regula falsi on the step length.
#[allow(clippy::too_many_arguments)]
fn locate_event<const N: usize, F, G>(
    rhs: &mut F,
    event: &G,
    s: f64,
    y: &[f64; N],
    dy: &[f64; N],
    h: f64,
    g0: f64,
    g1: f64,
) -> Result<(f64, [f64; N], [f64; N])>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    G: Fn(&[f64; N]) -> f64,
{
    let (mut a, mut ga) = (0.0, g0);
    let (mut b, mut gb) = (h, g1);
    let mut best = (h, None);
    let mut side = 0i8;
    for _ in 0..100 {
        let t = (a * gb - b * ga) / (gb - ga);
        let t = if t.is_finite() && t > a && t < b {
            t
        } else {
            0.5 * (a + b)
        };
        let (yt, dyt, _) = dp_step(rhs, s, y, dy, t)?;
        let gt = event(&yt);
        best = (t, Some((yt, dyt)));
        if gt.abs() <= 1e-14 * (1.0 + g0.abs()) || (b - a) <= 1e-15 * h.abs().max(s.abs()) {
            break;
        }
        if gt > 0.0 {
            a = t;
            ga = gt;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = t;
            gb = gt;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
    }
    let (t, sol) = best;
    let (yt, dyt) = match sol {
        Some(v) => v,
        None => {
            let (yt, dyt, _) = dp_step(rhs, s, y, dy, t)?;
            (yt, dyt)
        }
    };
    Ok((s + t, yt, dyt))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let tr = integrate(
            |_, y: &[f64; 1]| Ok([-y[0]]),
            0.0,
            [1.0],
            5.0,
            Tolerances::default(),
            |_| 1.0,
            |_, _| false,
        )
        .unwrap();
        assert_eq!(tr.termination, Termination::End);
        let last = tr.last();
        assert!((last.s - 5.0).abs() < 1e-14);
        assert!((last.y[0] - (-5.0f64).exp()).abs() < 1e-10);
        let mid = tr.sample(2.345);
        assert!((mid[0] - (-2.345f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn harmonic_oscillator_event_at_quarter_period() {
        // y = (cos s, -sin s); the first component vanishes at s = π/2.
        let tr = integrate(
            |_, y: &[f64; 2]| Ok([y[1], -y[0]]),
            0.0,
            [1.0, 0.0],
            10.0,
            Tolerances::default(),
            |y| y[0],
            |_, _| false,
        )
        .unwrap();
        assert_eq!(tr.termination, Termination::Event);
        let last = tr.last();
        assert!((last.s - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        assert!(last.y[0].abs() < 1e-12);
    }

    #[test]
    fn abort_predicate_stops_integration() {
        let tr = integrate(
            |_, _: &[f64; 1]| Ok([1.0]),
            0.0,
            [0.0],
            10.0,
            Tolerances::default(),
            |_| 1.0,
            |_, y| y[0] > 3.0,
        )
        .unwrap();
        assert_eq!(tr.termination, Termination::Aborted);
        assert!(tr.last().y[0] > 3.0);
    }
}
