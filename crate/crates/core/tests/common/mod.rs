//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's numerical routines.

#![allow(dead_code)]

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn pdf(h: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * h * h).exp()
}

/// Soft threshold followed by clipping to `[-cap, cap]`.
pub fn prox_ref(y: f64, t: f64, cap: f64) -> f64 {
    (y.abs() - t).max(0.0).min(cap).copysign(y)
}

/// Objective of the scalar problem evaluated at `prox_ref`.
pub fn moreau_ref(y: f64, t: f64, cap: f64) -> f64 {
    let x = prox_ref(y, t, cap);
    0.5 * (x - y) * (x - y) + t * x.abs()
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * eps {
        return left + right + diff / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, eps: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(&f, a, b, fa, fm, fb, whole, eps, 50)
}

/// `E[f(H)]` for `H ~ N(0,1)`, integrating over `[-40, 40]` split at the
/// given breakpoints and on a uniform 0.25 mesh (so the adaptive rule cannot
/// mistake a far-tail panel for a zero integrand).
pub fn gauss_expect<F: Fn(f64) -> f64>(f: F, breaks: &[f64]) -> f64 {
    let mut pts: Vec<f64> = (0..=320).map(|i| -40.0 + 0.25 * i as f64).collect();
    pts.extend(breaks.iter().copied().filter(|b| b.abs() < 40.0));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.windows(2)
        .map(|w| simpson(|h| f(h) * pdf(h), w[0], w[1], 1e-15))
        .sum()
}

/// Gaussian tail by quadrature of the density.
pub fn q_ref(x: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - q_ref(-x);
    }
    (0..160)
        .map(|i| simpson(pdf, x + 0.25 * i as f64, x + 0.25 * (i + 1) as f64, 1e-19))
        .sum()
}

/// `E[g(prox(a H; b))]` and similar functionals of `H` by quadrature.
pub fn prox_expect<F: Fn(f64, f64) -> f64>(a: f64, b: f64, cap: f64, g: F) -> f64 {
    let (u, v) = (b / a, (b + cap) / a);
    gauss_expect(|h| g(h, prox_ref(a * h, b, cap)), &[-v, -u, u, v])
}

/// `psi(tau, beta)` with the inner expectation by quadrature.
pub fn psi_ref(tau: f64, beta: f64, rho: f64, delta: f64, l1: f64, l2: f64, p: f64) -> f64 {
    let k = beta / tau + 2.0 * l2;
    let tt = 1.0 / (1.0 / tau + 2.0 * l2 / beta);
    let t = l1 * tt / beta;
    let cap = p.sqrt();
    let env = gauss_expect(
        |h| moreau_ref(tt * h, t, cap),
        &[-(t + cap) / tt, -t / tt, t / tt, (t + cap) / tt],
    );
    beta * tau * delta / 2.0 - beta * beta / 4.0 + beta * rho / (2.0 * tau) - 0.5 * beta * beta / k
        + k * env
}

/// Dense column-major matrix used by the reference solvers.
pub struct Dense {
    pub m: usize,
    pub n: usize,
    pub cols: Vec<Vec<f64>>,
}

impl Dense {
    pub fn from_fn(m: usize, n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        Self {
            m,
            n,
            cols: (0..n).map(|j| (0..m).map(|i| f(i, j)).collect()).collect(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (j, col) in self.cols.iter().enumerate() {
            for i in 0..self.m {
                out[i] += col[i] * x[j];
            }
        }
        out
    }
}

/// Objective by direct summation.
pub fn objective_ref(h: &Dense, s: &[f64], x: &[f64], rho: f64, l1: f64, l2: f64) -> f64 {
    let n = h.n as f64;
    let hx = h.apply(x);
    let mut fit = 0.0;
    for i in 0..h.m {
        let d = hx[i] - rho.sqrt() * s[i];
        fit += d * d;
    }
    let mut sq = 0.0;
    let mut ab = 0.0;
    for v in x {
        sq += v * v;
        ab += v.abs();
    }
    fit / n + l2 * sq / n + l1 * ab / n
}

/// Cyclic coordinate descent with exact coordinate minimization.
pub fn coordinate_descent(
    h: &Dense,
    s: &[f64],
    rho: f64,
    l1: f64,
    l2: f64,
    p: f64,
    sweeps: usize,
) -> Vec<f64> {
    let cap = p.sqrt();
    let mut x = vec![0.0; h.n];
    let mut r: Vec<f64> = s.iter().map(|v| -rho.sqrt() * v).collect();
    let norms: Vec<f64> = h
        .cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect();
    for _ in 0..sweeps {
        let mut change: f64 = 0.0;
        for j in 0..h.n {
            let col = &h.cols[j];
            let a = norms[j] + l2;
            // gradient of the fit part with x_j removed
            let mut g = 0.0;
            for i in 0..h.m {
                g += col[i] * (r[i] - col[i] * x[j]);
            }
            let new = prox_ref(-g / a, l1 / (2.0 * a), cap);
            let d = new - x[j];
            if d != 0.0 {
                for i in 0..h.m {
                    r[i] += col[i] * d;
                }
                x[j] = new;
                change = change.max(d.abs());
            }
        }
        if change < 1e-15 {
            break;
        }
    }
    x
}

/// Exhaustive grid search on `[-cap, cap]^n` followed by successively finer
/// local grids around the best point.
pub fn grid_search(
    h: &Dense,
    s: &[f64],
    rho: f64,
    l1: f64,
    l2: f64,
    p: f64,
    step: f64,
) -> Vec<f64> {
    let cap = p.sqrt();
    let n = h.n;
    let mut best = vec![0.0; n];
    let mut best_val = f64::INFINITY;
    let search = |center: &[f64], half: f64, step: f64, best: &mut Vec<f64>, best_val: &mut f64| {
        let k = (2.0 * half / step).round() as usize + 1;
        let mut idx = vec![0usize; n];
        let mut x = vec![0.0; n];
        loop {
            for d in 0..n {
                x[d] = (center[d] - half + step * idx[d] as f64).clamp(-cap, cap);
            }
            let v = objective_ref(h, s, &x, rho, l1, l2);
            if v < *best_val {
                *best_val = v;
                best.copy_from_slice(&x);
            }
            let mut d = 0;
            loop {
                if d == n {
                    return;
                }
                idx[d] += 1;
                if idx[d] < k {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    };
    search(&vec![0.0; n], cap, step, &mut best, &mut best_val);
    let mut st = step;
    for _ in 0..4 {
        let center = best.clone();
        search(&center, 2.0 * st, st / 10.0, &mut best, &mut best_val);
        st /= 10.0;
    }
    best
}

/// Small deterministic generator (SplitMix64) for building test data
/// without the library's RNG plumbing.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Box-Muller normal.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform().max(1e-300);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn sign(&mut self) -> f64 {
        if self.next_u64() & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Random `m x n` channel with `N(0, 1/n)` entries and BPSK symbols.
pub fn random_problem(m: usize, n: usize, seed: u64) -> (Dense, Vec<f64>) {
    let mut g = SplitMix(seed);
    let scale = 1.0 / (n as f64).sqrt();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| scale * g.normal()).collect())
        .collect();
    let s = (0..m).map(|_| g.sign()).collect();
    (Dense { m, n, cols }, s)
}
