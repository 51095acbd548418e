//! Closed-form `E[exp(i A)]` for trigonometric arguments
//!
//! ```text
//! A = sum_j s_j w_j^T (x - u_j) + phase
//! ```
//!
//! with `x ~ N(mu, diag(d))` and independent `w_j ~ N(nu_j, diag(beta_j))`.
//! Everything is diagonal, so the expectation factorizes over input
//! dimensions. For one dimension, conditioning on `x` leaves a Gaussian in
//! the `w_j`, and the remaining integral over `x` is Gaussian with a complex
//! linear term:
//!
//! ```text
//! a = sum s_j^2 beta_j
//! B = sum s_j^2 beta_j u_j + i sum s_j nu_j
//! C = -1/2 sum s_j^2 beta_j u_j^2 - i sum s_j nu_j u_j
//! g = 1 + a d
//! log F = -1/2 log g + C + (2 mu B + B^2 d - a mu^2) / (2 g)
//! ```

use num_complex::Complex64;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// One frequency participating in the argument.
#[derive(Clone, Copy)]
pub(crate) struct Term<'a> {
    pub scale: f64,
    pub nu: &'a [f64],
    pub beta: &'a [f64],
    pub shift: &'a [f64],
}

/// Mutable gradient sinks for one term.
pub(crate) struct TermGrad<'a> {
    pub nu: &'a mut [f64],
    pub beta: &'a mut [f64],
    pub shift: &'a mut [f64],
}

struct DimParts {
    a: f64,
    b: Complex64,
    c: Complex64,
}

#[inline]
fn dim_parts(terms: &[Term], q: usize) -> DimParts {
    let mut a = 0.0;
    let mut b_re = 0.0;
    let mut b_im = 0.0;
    let mut c_re = 0.0;
    let mut c_im = 0.0;
    for t in terms {
        let s2b = t.scale * t.scale * t.beta[q];
        let u = t.shift[q];
        a += s2b;
        b_re += s2b * u;
        c_re -= 0.5 * s2b * u * u;
        let sn = t.scale * t.nu[q];
        b_im += sn;
        c_im -= sn * u;
    }
    DimParts {
        a,
        b: Complex64::new(b_re, b_im),
        c: Complex64::new(c_re, c_im),
    }
}

#[inline]
fn log_factor(p: &DimParts, mu: f64, d: f64) -> Complex64 {
    let g = 1.0 + p.a * d;
    let num = 2.0 * mu * p.b + p.b * p.b * d - p.a * mu * mu;
    -0.5 * g.ln() + p.c + num / (2.0 * g)
}

/// `E[exp(i A)]`.
pub(crate) fn char_fn(terms: &[Term], mean: &[f64], var: &[f64], phase: f64) -> Complex64 {
    let mut log = Complex64::new(0.0, phase);
    for q in 0..mean.len() {
        let p = dim_parts(terms, q);
        log += log_factor(&p, mean[q], var[q]);
    }
    log.exp()
}

/// Accumulate `weight * d Re(E[exp(i A)]) / d(.)` into the sinks and return
/// `(E[exp(i A)], d Re / d phase * weight)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn char_fn_backprop(
    terms: &[Term],
    mean: &[f64],
    var: &[f64],
    phase: f64,
    weight: f64,
    term_grads: &mut [TermGrad],
    d_mean: &mut [f64],
    d_var: &mut [f64],
) -> (Complex64, f64) {
    let value = char_fn(terms, mean, var, phase);
    let wv = weight * value;
    for q in 0..mean.len() {
        let p = dim_parts(terms, q);
        let mu = mean[q];
        let d = var[q];
        let g = 1.0 + p.a * d;
        let num = 2.0 * mu * p.b + p.b * p.b * d - p.a * mu * mu;

        let dl_dmu = (p.b - p.a * mu) / g;
        let dl_dd = -0.5 * p.a / g + p.b * p.b / (2.0 * g) - num * p.a / (2.0 * g * g);
        let dl_da = -0.5 * d / g - mu * mu / (2.0 * g) - num * d / (2.0 * g * g);
        let dl_db = (mu + p.b * d) / g;
        // dl/dC == 1

        d_mean[q] += (wv * dl_dmu).re;
        d_var[q] += (wv * dl_dd).re;

        for (t, tg) in terms.iter().zip(term_grads.iter_mut()) {
            let s = t.scale;
            let s2 = s * s;
            let u = t.shift[q];
            let beta = t.beta[q];
            let nu = t.nu[q];
            // beta enters a, Re B and Re C
            let d_beta = dl_da * s2 + dl_db * (s2 * u) - 0.5 * s2 * u * u;
            // nu enters Im B and Im C
            let d_nu = dl_db * (I * s) - I * (s * u);
            // u enters Re B and C
            let d_u = dl_db * (s2 * beta) + Complex64::new(-s2 * beta * u, -s * nu);
            tg.beta[q] += (wv * d_beta).re;
            tg.nu[q] += (wv * d_nu).re;
            tg.shift[q] += (wv * d_u).re;
        }
    }
    (value, (wv * I).re)
}
