//! Named parameter axes and their expansion into value lists.

use serde::{Deserialize, Serialize};

use crate::SweepError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeAxis {
    pub start: f64,
    /// Inclusive when it lies on the step lattice.
    pub stop: f64,
    pub step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricAxis {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Single(f64),
    Values(Vec<f64>),
    Range(RangeAxis),
    Geometric(GeometricAxis),
}

/// Values are rounded to 12 decimals so that lattice points print cleanly
/// and compare exactly.
fn tidy(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

impl Axis {
    pub fn values(values: &[f64]) -> Self {
        Axis::Values(values.to_vec())
    }

    pub fn range(start: f64, stop: f64, step: f64) -> Self {
        Axis::Range(RangeAxis { start, stop, step })
    }

    pub fn geometric(start: f64, stop: f64, points: usize) -> Self {
        Axis::Geometric(GeometricAxis {
            start,
            stop,
            points,
        })
    }

    /// Expands the axis. Integer axes are rounded and deduplicated.
    pub fn expand(&self, name: &str, integer: bool) -> Result<Vec<f64>, SweepError> {
        let bad = |msg: &str| SweepError::Config(format!("axis {name}: {msg}"));
        let mut out = match self {
            Axis::Single(x) => vec![*x],
            Axis::Values(v) => v.clone(),
            Axis::Range(r) => {
                if !(r.step > 0.0) || !(r.stop >= r.start) {
                    return Err(bad("range needs step > 0 and stop >= start"));
                }
                let n = ((r.stop - r.start) / r.step + 1e-9).floor() as usize + 1;
                (0..n).map(|k| tidy(r.start + k as f64 * r.step)).collect()
            }
            Axis::Geometric(g) => {
                if g.points < 2 || !(g.start > 0.0) || !(g.stop > g.start) {
                    return Err(bad("geometric axis needs 0 < start < stop and points >= 2"));
                }
                let ratio = g.stop / g.start;
                (0..g.points)
                    .map(|k| tidy(g.start * ratio.powf(k as f64 / (g.points - 1) as f64)))
                    .collect()
            }
        };
        if out.is_empty() {
            return Err(bad("no values"));
        }
        if out.iter().any(|x| !x.is_finite()) {
            return Err(bad("values must be finite"));
        }
        if integer {
            if out.iter().any(|&x| x < 0.0) {
                return Err(bad("integer axis values must be >= 0"));
            }
            for x in out.iter_mut() {
                *x = x.round();
            }
            out.dedup();
        }
        Ok(out)
    }
}

/// Cartesian product in row-major order: the last axis varies fastest.
pub fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut cells = vec![Vec::with_capacity(axes.len())];
    for values in axes {
        cells = cells
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut c = prefix.clone();
                    c.push(v);
                    c
                })
            })
            .collect();
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_includes_stop_on_lattice() {
        let v = Axis::range(0.4, 1.0, 0.01).expand("x", false).unwrap();
        assert_eq!(v.len(), 61);
        assert_eq!(v[0], 0.4);
        assert_eq!(v[60], 1.0);
        assert_eq!(v[27], 0.67);
        let off = Axis::range(0.4, 4.0 / 3.0, 0.01).expand("x", false).unwrap();
        assert_eq!(*off.last().unwrap(), 1.33);
    }

    #[test]
    fn geometric_integer_axis() {
        let v = Axis::geometric(5.0, 200.0, 12).expand("t", true).unwrap();
        assert_eq!(v[0], 5.0);
        assert_eq!(*v.last().unwrap(), 200.0);
        assert!(v.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn invalid_axes() {
        assert!(Axis::range(1.0, 0.0, 0.1).expand("x", false).is_err());
        assert!(Axis::values(&[]).expand("x", false).is_err());
        assert!(Axis::values(&[-1.0]).expand("k", true).is_err());
        assert!(Axis::geometric(0.0, 1.0, 3).expand("x", false).is_err());
    }

    #[test]
    fn product_order() {
        let cells = cartesian(&[vec![1.0, 2.0], vec![3.0, 4.0, 5.0]]);
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[1], vec![1.0, 4.0]);
        assert_eq!(cells[3], vec![2.0, 3.0]);
    }
}
