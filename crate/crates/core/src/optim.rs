//! One-dimensional minimization: coarse grid bracketing followed by
//! golden-section refinement.

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct SearchOptions {
    pub grid_points: usize,
    /// Final bracket width.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            grid_points: 61,
            tolerance: 1e-9,
            max_iter: 200,
        }
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimizes `f` over `[lo, hi]`. The grid locates the best cell, whose two
/// neighbours form the golden-section bracket.
pub fn minimize_bracketed<F>(mut f: F, lo: f64, hi: f64, opts: SearchOptions) -> Result<Minimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    let n = opts.grid_points.max(3);
    let step = (hi - lo) / (n - 1) as f64;
    let mut best = (0usize, f64::INFINITY);
    for k in 0..n {
        let x = lo + step * k as f64;
        let v = f(x)?;
        if v < best.1 {
            best = (k, v);
        }
    }
    let k = best.0;
    let mut a = lo + step * k.saturating_sub(1) as f64;
    let mut b = (lo + step * (k + 1) as f64).min(hi);

    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut iterations = 0;
    while (b - a).abs() > opts.tolerance && iterations < opts.max_iter {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
        iterations += 1;
    }
    let converged = (b - a).abs() <= opts.tolerance;
    let (mut x, mut value) = if fc <= fd { (c, fc) } else { (d, fd) };
    // The grid optimum can beat the interior point when the bracket sits on
    // a search bound.
    if best.1 < value {
        x = lo + step * k as f64;
        value = best.1;
    }
    Ok(Minimum {
        x,
        value,
        iterations,
        converged,
    })
}
