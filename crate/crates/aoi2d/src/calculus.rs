//! Composition engine for 2D-AoI distributions: kernel-shifted AoI CCDFs,
//! minima over sensors via CCDF products, tail integration, quantiles,
//! prediction-variance distributions, and the random-AeD convolution.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::kernel::{Kernel, Position};

/// One sensor together with its independent channel to the monitor.
#[derive(Debug, Clone)]
pub struct SensorLink {
    pub index: usize,
    pub position: Position,
    pub channel: ChannelModel,
}

/// A numerically evaluable complementary CDF. The function is non-increasing,
/// maps into [0, 1], and is identically 1 below `support_lo`. `knots` lists
/// discontinuities and kinks so that integration can split exactly at them.
#[derive(Clone)]
pub struct CcdfFn {
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    support_lo: f64,
    knots: Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
    /// Upper end of the argument domain, if bounded (1 for variance CCDFs).
    domain_hi: Option<f64>,
    description: String,
}

impl std::fmt::Debug for CcdfFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CcdfFn")
            .field("support_lo", &self.support_lo)
            .field("domain_hi", &self.domain_hi)
            .field("description", &self.description)
            .finish()
    }
}

impl CcdfFn {
    pub fn from_fn(
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        support_lo: f64,
        description: impl Into<String>,
    ) -> Self {
        CcdfFn {
            eval: Arc::new(eval),
            support_lo,
            knots: Arc::new(|_| Vec::new()),
            domain_hi: None,
            description: description.into(),
        }
    }

    /// The plain AoI CCDF of a channel, as a [`CcdfFn`].
    pub fn from_channel(channel: &ChannelModel, description: impl Into<String>) -> Self {
        let c = channel.clone();
        let k = channel.clone();
        CcdfFn {
            eval: Arc::new(move |y| c.ccdf(y)),
            support_lo: 0.0,
            knots: Arc::new(move |y_max| k.ccdf_knots(y_max)),
            domain_hi: None,
            description: description.into(),
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        if y < self.support_lo {
            return 1.0;
        }
        (self.eval)(y)
    }

    /// Like [`CcdfFn::eval`] but rejects arguments outside the declared
    /// domain.
    pub fn eval_checked(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("CCDF argument must be >= 0, got {y}")));
        }
        if let Some(hi) = self.domain_hi {
            if y >= hi {
                return Err(Error::Domain(format!("CCDF argument must be < {hi}, got {y}")));
            }
        }
        Ok(self.eval(y))
    }

    pub fn support_lo(&self) -> f64 {
        self.support_lo
    }

    pub fn domain_hi(&self) -> Option<f64> {
        self.domain_hi
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// Sorted, deduplicated discontinuities and kinks in `(0, y_max]`.
    pub fn knots_upto(&self, y_max: f64) -> Vec<f64> {
        let mut ks = (self.knots)(y_max);
        if self.support_lo > 0.0 && self.support_lo <= y_max {
            ks.push(self.support_lo);
        }
        ks.retain(|k| *k > 0.0 && *k <= y_max && k.is_finite());
        ks.sort_by(|a, b| a.total_cmp(b));
        ks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
        ks
    }

    /// Pointwise product of several CCDFs: the CCDF of the minimum under
    /// independence.
    pub fn product(parts: Vec<CcdfFn>, description: impl Into<String>) -> Result<CcdfFn> {
        if parts.is_empty() {
            return Err(Error::Config("CCDF product over an empty link list".into()));
        }
        let support_lo = parts.iter().map(|p| p.support_lo).fold(f64::INFINITY, f64::min);
        let domain_hi = parts[0].domain_hi;
        let eval_parts = parts.clone();
        let knot_parts = parts;
        Ok(CcdfFn {
            eval: Arc::new(move |y| {
                let mut acc = 1.0;
                for p in &eval_parts {
                    acc *= p.eval(y);
                    if acc < 1e-300 {
                        return 0.0;
                    }
                }
                acc
            }),
            support_lo,
            knots: Arc::new(move |y_max| {
                let mut ks = Vec::new();
                for p in &knot_parts {
                    ks.extend(p.knots_upto(y_max));
                }
                ks
            }),
            domain_hi,
            description: description.into(),
        })
    }
}

/// CCDF of the 2D-AoI of a single sensor link with respect to `target`:
/// the channel's AoI CCDF shifted through the kernel's AeD transform.
pub fn ccdf_2d_single(link: &SensorLink, k: &Kernel, target: &Position) -> Result<CcdfFn> {
    let h = k.h_spatial(&link.position, target)?;
    let support_lo = if h >= 1.0 { 0.0 } else { k.g_inverse(h)? };
    let kern = k.clone();
    let chan = link.channel.clone();
    let kern2 = k.clone();
    let chan2 = link.channel.clone();
    let shift = move |y: f64, kern: &Kernel| -> f64 {
        // age threshold T with g(T) h = g(y); y >= support guarantees
        // g(y)/h <= 1 up to round-off
        let arg = (kern.g_unwrapped(y) / h).min(1.0);
        kern.g_inverse(arg).unwrap_or(0.0)
    };
    let shift2 = shift;
    Ok(CcdfFn {
        eval: Arc::new(move |y| {
            if y < support_lo {
                return 1.0;
            }
            chan.ccdf(shift(y, &kern))
        }),
        support_lo,
        knots: Arc::new(move |y_max| {
            if y_max <= support_lo {
                return Vec::new();
            }
            let t_max = shift2(y_max, &kern2);
            chan2
                .ccdf_knots(t_max)
                .into_iter()
                .filter_map(|t| {
                    // map channel knot back to the 2D domain
                    let g = kern2.g_unwrapped(t) * h;
                    if g < 1e-300 {
                        None
                    } else {
                        kern2.g_inverse(g.min(1.0)).ok()
                    }
                })
                .collect()
        }),
        domain_hi: None,
        description: format!("2d-aoi sensor {}", link.index),
    })
}

/// CCDF of the minimal 2D-AoI over independent links: the product of the
/// per-link CCDFs.
pub fn ccdf_2d_min(links: &[SensorLink], k: &Kernel, target: &Position) -> Result<CcdfFn> {
    let parts = links
        .iter()
        .map(|l| ccdf_2d_single(l, k, target))
        .collect::<Result<Vec<_>>>()?;
    CcdfFn::product(parts, format!("min 2d-aoi over {} sensors", links.len()))
}

/// CCDF over `z` of the normalized single-sample prediction variance
/// `P[Phi > z sigma^2]`, with noise factor `eta = sigma^2/(sigma^2+sigma_N^2)`.
pub fn ccdf_predvar_single(
    link: &SensorLink,
    k: &Kernel,
    target: &Position,
    eta: f64,
) -> Result<CcdfFn> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Config(format!("noise factor eta must be in (0, 1], got {eta}")));
    }
    let h = k.h_spatial(&link.position, target)?;
    let sqrt_eta_h = eta.sqrt() * h;
    // variance below sigma^2 (1 - eta h^2) is unattainable
    let support_lo = 1.0 - eta * h * h;
    let kern = k.clone();
    let chan = link.channel.clone();
    let kern2 = k.clone();
    let chan2 = link.channel.clone();
    let threshold = move |z: f64, kern: &Kernel| -> f64 {
        let arg = ((1.0 - z).max(0.0).sqrt() / sqrt_eta_h).min(1.0);
        if arg <= 0.0 {
            return f64::INFINITY;
        }
        kern.g_inverse(arg).unwrap_or(f64::INFINITY)
    };
    let threshold2 = threshold;
    Ok(CcdfFn {
        eval: Arc::new(move |z| {
            if z < support_lo {
                return 1.0;
            }
            if z >= 1.0 {
                return 0.0;
            }
            chan.ccdf(threshold(z, &kern))
        }),
        support_lo: support_lo.max(0.0),
        knots: Arc::new(move |z_max| {
            let z_cap = z_max.min(1.0 - 1e-15);
            let t_max = threshold2(z_cap, &kern2);
            if !t_max.is_finite() {
                return Vec::new();
            }
            chan2
                .ccdf_knots(t_max)
                .into_iter()
                .map(|t| {
                    let gh = kern2.g_unwrapped(t) * sqrt_eta_h;
                    1.0 - gh * gh
                })
                .collect()
        }),
        domain_hi: Some(1.0),
        description: format!("prediction variance sensor {}", link.index),
    })
}

/// CCDF of the minimal normalized prediction variance over independent links.
pub fn ccdf_predvar_min(
    links: &[SensorLink],
    k: &Kernel,
    target: &Position,
    eta: f64,
) -> Result<CcdfFn> {
    let parts = links
        .iter()
        .map(|l| ccdf_predvar_single(l, k, target, eta))
        .collect::<Result<Vec<_>>>()?;
    CcdfFn::product(parts, format!("min prediction variance over {} sensors", links.len()))
}

/// Mean of the normalized prediction variance, `E[Phi]/sigma^2`, by
/// integrating its CCDF over `z` in [0, 1).
pub fn mean_predvar_from_ccdf(f: &CcdfFn) -> Result<f64> {
    integrate_ccdf(f, 0.0, 1.0 - 1e-12)
}

/// Expected value by tail integration of the CCDF.
pub fn mean_from_ccdf(f: &CcdfFn) -> Result<f64> {
    if let Some(hi) = f.domain_hi {
        return integrate_ccdf(f, 0.0, hi - 1e-12);
    }
    // find a truncation point where the tail is negligible
    let mut y_max = (2.0 * f.support_lo).max(1.0);
    let mut tries = 0;
    while f.eval(y_max) >= 1e-12 {
        y_max *= 2.0;
        tries += 1;
        if tries > 200 {
            return Err(Error::Numeric(format!(
                "CCDF '{}' does not decay below 1e-12 within the iteration budget",
                f.description
            )));
        }
    }
    integrate_ccdf(f, 0.0, y_max)
}

/// Integral of a CCDF over `[lo, hi]`, split exactly at its knots. Smooth
/// pieces are handled by adaptive Simpson quadrature; step pieces are exact.
pub fn integrate_ccdf(f: &CcdfFn, lo: f64, hi: f64) -> Result<f64> {
    if hi <= lo {
        return Ok(0.0);
    }
    let mut cuts = vec![lo];
    cuts.extend(f.knots_upto(hi).into_iter().filter(|k| *k > lo && *k < hi));
    cuts.push(hi);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 1e-14 * b.abs().max(1.0) {
            continue;
        }
        // stop just short of b: the CCDF is right-continuous, so the value at
        // b belongs to the next piece
        let cut = b - 1e-9 * (b - a);
        let fa = f.eval(a);
        let fc = f.eval(cut);
        let fm = f.eval(0.5 * (a + cut));
        if (fa - fc).abs() <= 1e-14 && (fm - fc).abs() <= 1e-14 {
            // constant piece
            total += fc * (b - a);
            continue;
        }
        let tol = 1e-10 * (b - a).max(1.0);
        total += adaptive_simpson(&|y| f.eval(y), a, cut, fa, fm, fc, tol, 0)?;
        total += fc * (b - cut);
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let err = left + right - whole;
    if err.abs() <= 15.0 * tol || depth >= 48 {
        return Ok(left + right + err / 15.0);
    }
    Ok(adaptive_simpson(f, a, m, fa, flm, fm, 0.5 * tol, depth + 1)?
        + adaptive_simpson(f, m, b, fm, frm, fb, 0.5 * tol, depth + 1)?)
}

/// Smallest `y` with `f(y) <= 1 - p`, the `p`-quantile of the distribution.
pub fn quantile_from_ccdf(f: &CcdfFn, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile level must be in (0, 1), got {p}")));
    }
    let target = 1.0 - p;
    if f.eval(0.0) <= target {
        return Ok(0.0);
    }
    let mut hi = (2.0 * f.support_lo).max(1.0);
    let mut tries = 0;
    while f.eval(hi) > target {
        hi *= 2.0;
        tries += 1;
        if tries > 200 {
            return Err(Error::Numeric(format!(
                "quantile bracket for '{}' did not close",
                f.description
            )));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-9 * hi.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        if f.eval(mid) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// CCDF of the 2D-AoI with an exponentially distributed random AeD (rate
/// `p_succ * omega`) on top of a continuous slotted-ALOHA AoI.
pub fn ccdf_2d_random_aed(q: f64, p_succ: f64, omega: f64, y: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("q must be in (0, 1), got {q}")));
    }
    if !(p_succ > 0.0 && p_succ <= 1.0) {
        return Err(Error::Domain(format!("p_succ must be in (0, 1], got {p_succ}")));
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::Domain(format!("omega must be > 0, got {omega}")));
    }
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("y must be >= 0, got {y}")));
    }
    let ln1q = (1.0 - q).ln();
    let rate = p_succ * omega;
    let denom = ln1q + rate;
    if denom.abs() < 1e-12 {
        return Err(Error::Numeric(format!(
            "degenerate parameters: the AeD rate {rate} coincides with the channel decay \
             rate {}, the convolution formula has a vanishing denominator",
            -ln1q
        )));
    }
    let v = (ln1q * (-rate * y).exp() + rate * (1.0 - q).powf(y)) / denom;
    Ok(v.clamp(0.0, 1.0))
}

/// Simulates a Poisson sampling stream thinned by Bernoulli successes and
/// fits the exponential rate of the successful-sample interarrival times.
/// The fitted rate converges to `p_succ * omega`.
pub fn random_aed_interarrival_check(
    omega: f64,
    p_succ: f64,
    n_samples: u64,
    seed: u64,
) -> Result<f64> {
    if !(omega > 0.0) || !(p_succ > 0.0 && p_succ <= 1.0) {
        return Err(Error::Config(format!("bad thinning parameters omega={omega} p={p_succ}")));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut t = 0.0f64;
    let mut last_success: Option<f64> = None;
    let mut sum = 0.0f64;
    let mut count = 0u64;
    for _ in 0..n_samples {
        t += exp_sample(&mut rng, omega);
        if rng.gen::<f64>() < p_succ {
            if let Some(prev) = last_success {
                sum += t - prev;
                count += 1;
            }
            last_success = Some(t);
        }
    }
    if count == 0 {
        return Err(Error::Numeric("no successful samples were generated".into()));
    }
    Ok(count as f64 / sum)
}

pub(crate) fn exp_sample<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.gen();
    -(1.0 - u).ln() / rate
}

// internal access used by the shift closures above
impl Kernel {
    pub(crate) fn g_unwrapped(&self, delta: f64) -> f64 {
        self.g_temporal(delta.max(0.0)).unwrap_or(0.0)
    }
}

/// Closed-form mean AoI of an M|M|1 queue, used as an independent oracle for
/// the tail-integration route.
pub fn mm1_mean_aoi(lambda: f64, mu: f64) -> f64 {
    let rho = lambda / mu;
    (1.0 + 1.0 / rho + rho * rho / (1.0 - rho)) / mu
}
