//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

/// Adaptive Simpson on `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

fn ln_choose(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// Probability that the posterior-predictive DLT total over `n + l`
/// patients lands in `members`, by integrating the binomial likelihood of
/// the remaining patients against the Beta(m+1, n−m+1) posterior.
pub fn drp_by_quadrature(n: usize, m_eff: f64, l: usize, members: &[usize]) -> f64 {
    let (nf, lf) = (n as f64, l as f64);
    let (a, b) = (m_eff + 1.0, nf - m_eff + 1.0);
    let ln_norm = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
    let mut total = 0.0;
    for &r in members {
        let k = r as f64 - m_eff;
        if k < -1e-9 || k > lf + 1e-9 {
            continue;
        }
        let k = k.clamp(0.0, lf);
        let coef = (ln_choose(lf, k) + ln_norm).exp();
        let f = move |p: f64| {
            if p <= 0.0 || p >= 1.0 {
                return 0.0;
            }
            coef * ((a - 1.0 + k) * p.ln() + (b - 1.0 + lf - k) * (1.0 - p).ln()).exp()
        };
        total += integrate(&f, 0.0, 1.0, 1e-13);
    }
    total
}

/// Keyboard decision recomputed from its definition.
pub fn keyboard_decision(phi: f64, width: f64, n: usize, m: usize) -> i32 {
    let (a, b) = (1.0 + m as f64, 1.0 + (n - m) as f64);
    let mass = |lo: f64, hi: f64| beta_reg(a, b, hi.min(1.0)) - beta_reg(a, b, lo.max(0.0));
    let target = (phi - width / 2.0, phi + width / 2.0);
    let mut keys = vec![target];
    let mut lo = target.0;
    while lo - width >= -1e-9 {
        keys.insert(0, (lo - width, lo));
        lo -= width;
    }
    let t = keys.len() - 1;
    let mut hi = target.1;
    while hi + width <= 1.0 + 1e-9 {
        keys.push((hi, hi + width));
        hi += width;
    }
    let masses: Vec<f64> = keys.iter().map(|&(lo, hi)| mass(lo, hi)).collect();
    let best = masses.iter().cloned().fold(f64::MIN, f64::max);
    let pick = if masses[t] >= best - 1e-12 {
        t
    } else {
        masses.iter().position(|&x| x >= best - 1e-12).unwrap()
    };
    (pick as i32 - t as i32).signum()
}

/// Weighted least-squares isotone fit under the componentwise order on the
/// tried cells, by the max-min formula over upper and lower sets.
///
/// `cells` are `(j, k, value, weight)`. Exponential in the cell count.
pub fn isotonic_by_minmax(cells: &[(usize, usize, f64, f64)]) -> Vec<f64> {
    let len = cells.len();
    assert!(len <= 16);
    let le = |x: usize, y: usize| cells[x].0 <= cells[y].0 && cells[x].1 <= cells[y].1;
    let is_upper = |s: u32| {
        (0..len).all(|x| s & (1 << x) == 0 || (0..len).all(|y| !le(x, y) || s & (1 << y) != 0))
    };
    let uppers: Vec<u32> = (1u32..(1 << len)).filter(|&s| is_upper(s)).collect();
    let full = (1u32 << len) - 1;
    // Lower sets are complements of upper sets, plus the full set.
    let mut lowers: Vec<u32> = uppers.iter().map(|&u| full & !u).filter(|&l| l != 0).collect();
    lowers.push(full);
    let avg = |s: u32| {
        let (mut num, mut den) = (0.0, 0.0);
        for (x, c) in cells.iter().enumerate() {
            if s & (1 << x) != 0 {
                num += c.2 * c.3;
                den += c.3;
            }
        }
        num / den
    };
    (0..len)
        .map(|x| {
            uppers
                .iter()
                .filter(|&&u| u & (1 << x) != 0)
                .map(|&u| {
                    lowers
                        .iter()
                        .filter(|&&l| l & (1 << x) != 0)
                        .map(|&l| avg(u & l))
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// SplitMix64 stream for test-side randomization.
pub struct Mix(pub u64);

impl Mix {
    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }

    pub fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }
}
