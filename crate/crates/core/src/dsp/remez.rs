//! Parks–McClellan (Remez exchange) design of odd-length, even-symmetric
//! linear-phase FIR filters.
//!
//! The amplitude response is `A(ω) = Σ a_k cos(kω)`. Each reference set is
//! solved directly as a linear system in the Chebyshev basis `T_k(cos ω)`.
//! The textbook barycentric formula for δ loses every significant digit once
//! the reference has a few hundred nodes with uneven spacing, which is the
//! normal case for a narrow notch at a high sample rate.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One approximation band in normalized frequency (cycles/sample, 0..=0.5).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    pub desired: f64,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct RemezDesign {
    pub taps: Vec<f64>,
    /// Final weighted deviation |δ|.
    pub deviation: f64,
    pub iterations: usize,
}

const GRID_DENSITY: usize = 16;
const MAX_ITERATIONS: usize = 100;
const CONVERGENCE: f64 = 1e-7;

struct Grid {
    x: Vec<f64>,
    desired: Vec<f64>,
    weight: Vec<f64>,
    /// Half-open index range of each band.
    spans: Vec<(usize, usize)>,
}

fn build_grid(bands: &[Band], extremals: usize) -> Grid {
    let total: f64 = bands.iter().map(|b| b.hi - b.lo).sum();
    let step = 0.5 / (GRID_DENSITY * extremals) as f64;
    let mut grid = Grid {
        x: Vec::new(),
        desired: Vec::new(),
        weight: Vec::new(),
        spans: Vec::new(),
    };
    for band in bands {
        let first = grid.x.len();
        let points = (((band.hi - band.lo) / step).ceil() as usize).max(
            // every band keeps a few points even when very narrow
            ((band.hi - band.lo) / total * extremals as f64).ceil() as usize + 2,
        );
        for k in 0..=points {
            let f = band.lo + (band.hi - band.lo) * k as f64 / points as f64;
            grid.x.push((2.0 * PI * f).cos());
            grid.desired.push(band.desired);
            grid.weight.push(band.weight);
        }
        grid.spans.push((first, grid.x.len()));
    }
    grid
}

/// Initial extremal set: spread over each band in proportion to its width,
/// with at least two per band. A narrow stopband that gets no initial
/// extremal leaves the first reference all-passband and δ = 0.
fn initial_extremals(grid: &Grid, bands: &[Band], count: usize) -> Vec<usize> {
    let total: f64 = bands.iter().map(|b| b.hi - b.lo).sum();
    let mut share: Vec<usize> = bands
        .iter()
        .zip(&grid.spans)
        .map(|(b, &(a, e))| {
            (((b.hi - b.lo) / total * count as f64).round() as usize).clamp(2.min(e - a), e - a)
        })
        .collect();
    // trim or pad the widest bands until the shares add up
    loop {
        let sum: usize = share.iter().sum();
        if sum == count {
            break;
        }
        let widest = (0..share.len())
            .filter(|&i| {
                let room = grid.spans[i].1 - grid.spans[i].0;
                if sum > count {
                    share[i] > 2
                } else {
                    share[i] < room
                }
            })
            .max_by(|&i, &j| (bands[i].hi - bands[i].lo).total_cmp(&(bands[j].hi - bands[j].lo)));
        match widest {
            Some(i) if sum > count => share[i] -= 1,
            Some(i) => share[i] += 1,
            None => break,
        }
    }
    let mut ext = Vec::with_capacity(count);
    for (&(a, e), &k) in grid.spans.iter().zip(&share) {
        let len = e - a;
        for j in 0..k {
            ext.push(
                a + if k == 1 {
                    len / 2
                } else {
                    j * (len - 1) / (k - 1)
                },
            );
        }
    }
    ext
}

/// Σ a_k T_k(x) by Clenshaw's recurrence.
fn chebyshev_eval(a: &[f64], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &c in a.iter().skip(1).rev() {
        let b0 = 2.0 * x * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    a[0] + x * b1 - b2
}

/// Solves `Σ a_k T_k(x_i) + (-1)^i δ / W_i = D_i` on the reference.
fn solve_reference(grid: &Grid, ext: &[usize]) -> Result<(Vec<f64>, f64)> {
    let n = ext.len();
    let r = n - 1;
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for (i, &g) in ext.iter().enumerate() {
        let w = grid.x[g].clamp(-1.0, 1.0).acos();
        for k in 0..r {
            m[(i, k)] = (k as f64 * w).cos();
        }
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        m[(i, r)] = sign / grid.weight[g];
        rhs[i] = grid.desired[g];
    }
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("singular Remez reference".into()))?;
    Ok((sol.as_slice()[..r].to_vec(), sol[r]))
}

/// Designs an odd-length (`num_taps` = 2M+1) equiripple filter.
pub fn remez(num_taps: usize, bands: &[Band]) -> Result<RemezDesign> {
    if num_taps < 3 || num_taps % 2 == 0 {
        return Err(Error::Design(format!(
            "tap count must be odd and ≥ 3, got {num_taps}"
        )));
    }
    if bands.is_empty() {
        return Err(Error::Design("no bands".into()));
    }
    for (i, b) in bands.iter().enumerate() {
        if !(0.0 <= b.lo && b.lo < b.hi && b.hi <= 0.5 && b.weight > 0.0) {
            return Err(Error::Design(format!("band {i} is malformed: {b:?}")));
        }
        if i > 0 && bands[i - 1].hi >= b.lo {
            return Err(Error::Design(
                "bands must be increasing and disjoint".into(),
            ));
        }
    }

    exchange(num_taps, bands).map(|(d, _)| d)
}

/// Below this many reference points the proportional initial guess is good
/// enough; above it the reference is scaled up from a half-length design.
const SCALING_THRESHOLD: usize = 64;

/// Runs the exchange and also returns the final reference frequencies.
fn exchange(num_taps: usize, bands: &[Band]) -> Result<(RemezDesign, Vec<f64>)> {
    let m = (num_taps - 1) / 2;
    let r = m + 1; // cosine coefficients
    let grid = build_grid(bands, r + 1);
    let ng = grid.x.len();
    if ng < r + 1 {
        return Err(Error::Design("frequency grid too coarse".into()));
    }

    let scaled = if r + 1 > SCALING_THRESHOLD {
        let half = (num_taps / 2) | 1;
        exchange(half, bands)
            .ok()
            .and_then(|(_, f)| scale_reference(&grid, bands, &f, r + 1))
    } else {
        None
    };
    let fallback = || {
        let e = initial_extremals(&grid, bands, r + 1);
        if e.len() == r + 1 {
            e
        } else {
            (0..=r).map(|k| k * (ng - 1) / r).collect()
        }
    };
    let mut run = match scaled {
        Some(e) => iterate(&grid, e)?,
        None => iterate(&grid, fallback())?,
    };
    if !run.converged {
        let other = iterate(&grid, fallback())?;
        if other.max_err < run.max_err {
            run = other;
        }
    }
    let Run {
        coeffs,
        deviation,
        iterations,
        ext,
        ..
    } = run;

    let mut taps = vec![0.0; num_taps];
    taps[m] = coeffs[0];
    for k in 1..=m {
        taps[m + k] = 0.5 * coeffs[k];
        taps[m - k] = 0.5 * coeffs[k];
    }
    if taps.iter().any(|t| !t.is_finite()) {
        return Err(Error::Numeric(
            "Remez exchange produced non-finite taps".into(),
        ));
    }
    let freqs = ext
        .iter()
        .map(|&i| grid.x[i].clamp(-1.0, 1.0).acos() / (2.0 * PI))
        .collect();
    Ok((
        RemezDesign {
            taps,
            deviation,
            iterations,
        },
        freqs,
    ))
}

struct Run {
    coeffs: Vec<f64>,
    deviation: f64,
    max_err: f64,
    iterations: usize,
    ext: Vec<usize>,
    converged: bool,
}

/// Exchange iterations from `ext`. Keeps the iterate with the smallest
/// peak error in case the exchange stalls.
fn iterate(grid: &Grid, mut ext: Vec<usize>) -> Result<Run> {
    let r = ext.len() - 1;
    let mut best: Option<Run> = None;
    for iter in 0..MAX_ITERATIONS {
        let (a, delta) = solve_reference(grid, &ext)?;
        let err: Vec<f64> = (0..grid.x.len())
            .map(|i| grid.weight[i] * (grid.desired[i] - chebyshev_eval(&a, grid.x[i])))
            .collect();
        let max_err = err.iter().fold(0.0f64, |a, e| a.max(e.abs()));
        let converged = (max_err - delta.abs()) / max_err.max(f64::MIN_POSITIVE) < CONVERGENCE;
        if best.as_ref().is_none_or(|b| max_err < b.max_err) {
            best = Some(Run {
                coeffs: a,
                deviation: delta.abs(),
                max_err,
                iterations: iter + 1,
                ext: ext.clone(),
                converged,
            });
        }
        if converged {
            break;
        }
        // Multiple exchange when the error alternates enough, otherwise
        // swap in the single worst point.
        ext = match select_extremals(&err, r + 1, delta.abs()) {
            Some(e) if e != ext => e,
            _ => match single_exchange(&ext, &err, delta) {
                Some(e) => e,
                None => break,
            },
        };
    }
    Ok(best.expect("at least one iteration runs"))
}

/// Stretches a converged reference of a shorter filter onto `count` points:
/// each band keeps its share of nodes and their relative spacing.
fn scale_reference(grid: &Grid, bands: &[Band], old: &[f64], count: usize) -> Option<Vec<usize>> {
    let per_band: Vec<Vec<f64>> = bands
        .iter()
        .map(|b| {
            old.iter()
                .copied()
                .filter(|&f| f >= b.lo - 1e-12 && f <= b.hi + 1e-12)
                .collect()
        })
        .collect();
    let total: usize = per_band.iter().map(Vec::len).sum();
    if total < 2 {
        return None;
    }
    let mut share: Vec<usize> = per_band
        .iter()
        .map(|v| (v.len() as f64 * count as f64 / total as f64).round() as usize)
        .collect();
    while share.iter().sum::<usize>() != count {
        let sum: usize = share.iter().sum();
        let i = (0..share.len()).max_by_key(|&i| per_band[i].len())?;
        if sum > count {
            share[i] = share[i].checked_sub(1)?;
        } else {
            share[i] += 1;
        }
    }
    let mut ext = Vec::with_capacity(count);
    for ((b, pts), (&(a, e), &k)) in bands
        .iter()
        .zip(&per_band)
        .zip(grid.spans.iter().zip(&share))
    {
        if k == 0 {
            continue;
        }
        let len = e - a;
        if pts.is_empty() || k > len {
            return None;
        }
        for j in 0..k {
            let t = if k == 1 {
                0.5
            } else {
                j as f64 / (k - 1) as f64
            } * (pts.len() - 1) as f64;
            let lo = t.floor() as usize;
            let hi = (lo + 1).min(pts.len() - 1);
            let f = pts[lo] + (pts[hi] - pts[lo]) * (t - lo as f64);
            let idx = a
                + (((f - b.lo) / (b.hi - b.lo)) * (len - 1) as f64)
                    .round()
                    .clamp(0.0, (len - 1) as f64) as usize;
            ext.push(idx);
        }
    }
    // resolve collisions by nudging forward, then check
    for i in 1..ext.len() {
        if ext[i] <= ext[i - 1] {
            ext[i] = ext[i - 1] + 1;
        }
    }
    (ext.len() == count && ext.last().is_some_and(|&l| l < grid.x.len())).then_some(ext)
}

/// Replaces one reference point by the grid point of largest |E| so that
/// the reference error signs keep alternating. `None` when that point is
/// already in the reference.
fn single_exchange(ext: &[usize], err: &[f64], delta: f64) -> Option<Vec<usize>> {
    let g = (0..err.len()).max_by(|&a, &b| err[a].abs().total_cmp(&err[b].abs()))?;
    let pos = ext.partition_point(|&e| e < g);
    if ext.get(pos) == Some(&g) {
        return None;
    }
    // Error at reference point i is (-1)^i δ by construction.
    let node_sign = |i: usize| {
        if i % 2 == 0 {
            delta.signum()
        } else {
            -delta.signum()
        }
    };
    let s = err[g].signum();
    let mut out = ext.to_vec();
    let last = ext.len() - 1;
    if pos == 0 {
        if node_sign(0) == s {
            out[0] = g;
        } else {
            out.insert(0, g);
            out.pop();
        }
    } else if pos == ext.len() {
        if node_sign(last) == s {
            out[last] = g;
        } else {
            out.push(g);
            out.remove(0);
        }
    } else if node_sign(pos - 1) == s {
        out[pos - 1] = g;
    } else {
        out[pos] = g;
    }
    Some(out)
}

/// Picks `count` alternating extrema of the weighted error with
/// |E| ≥ `floor`. Returns `None` if too few are found.
fn select_extremals(err: &[f64], count: usize, floor: f64) -> Option<Vec<usize>> {
    // The largest |E| of every same-sign run. Each reference point sits in
    // its own run with |E| = δ, so at least `count` of them clear the floor.
    let thresh = floor * (1.0 - 1e-9);
    let mut cand: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < err.len() {
        let sign = err[i].signum();
        let mut best = i;
        let mut j = i;
        while j < err.len() && err[j].signum() == sign {
            if err[j].abs() > err[best].abs() {
                best = j;
            }
            j += 1;
        }
        if err[best].abs() >= thresh {
            cand.push(best);
        }
        i = j;
    }
    // Enforce alternation: of consecutive same-sign extrema keep the larger.
    let mut alt: Vec<usize> = Vec::with_capacity(cand.len());
    for i in cand {
        if let Some(&last) = alt.last() {
            if err[last].signum() == err[i].signum() {
                if err[i].abs() > err[last].abs() {
                    *alt.last_mut().unwrap() = i;
                }
                continue;
            }
        }
        alt.push(i);
    }
    while alt.len() > count {
        let excess = alt.len() - count;
        let last = alt.len() - 1;
        if excess == 1 {
            if err[alt[0]].abs() < err[alt[last]].abs() {
                alt.remove(0);
            } else {
                alt.pop();
            }
            continue;
        }
        // Drop the weakest extremum together with its weaker neighbour so
        // signs keep alternating.
        let k = (0..alt.len())
            .min_by(|&a, &b| err[alt[a]].abs().total_cmp(&err[alt[b]].abs()))
            .unwrap();
        if k == 0 || k == last {
            alt.remove(k);
        } else {
            let nb = if err[alt[k - 1]].abs() < err[alt[k + 1]].abs() {
                k - 1
            } else {
                k + 1
            };
            alt.remove(k.max(nb));
            alt.remove(k.min(nb));
        }
    }
    (alt.len() == count).then_some(alt)
}

/// Zero-phase amplitude `Σ h[n] e^{-jω(n - c)}` magnitude at `f` cycles/sample.
pub fn magnitude_at(taps: &[f64], f: f64) -> f64 {
    let w = 2.0 * PI * f;
    let (mut re, mut im) = (0.0, 0.0);
    for (n, h) in taps.iter().enumerate() {
        re += h * (w * n as f64).cos();
        im -= h * (w * n as f64).sin();
    }
    (re * re + im * im).sqrt()
}
