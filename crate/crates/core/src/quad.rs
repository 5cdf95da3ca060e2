//! Adaptive Gauss–Kronrod (10/21) quadrature for positive integrands supplied as
//! log-densities. Panel sums and error estimates are carried as logarithms, so
//! integrands of order `e^{-800}` integrate without underflow.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_352,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];

/// Gauss weights for the odd-indexed Kronrod abscissae `XGK[1], XGK[3], ..., XGK[9]`.
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_36,
    0.295_524_224_714_752_87,
];

/// `log(e^a + e^b)` without overflow.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log(sum_i e^{x_i})`.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m == f64::INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log|e^a - e^b|`.
fn log_abs_diff(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    let d = lo - hi;
    if d == 0.0 {
        return f64::NEG_INFINITY;
    }
    hi + (-d.exp_m1()).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogQuadConfig {
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for LogQuadConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-11,
            max_panels: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub a: f64,
    pub b: f64,
    pub log_value: f64,
    pub log_err: f64,
}

impl Panel {
    /// The 21 Kronrod abscissae of this panel with their log-weights.
    pub fn kronrod_nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (self.a + self.b);
        let h = 0.5 * (self.b - self.a);
        let lh = h.ln();
        (0..21).map(move |i| {
            let (j, s) = if i < 10 { (i, -1.0) } else if i == 10 { (10, 0.0) } else { (20 - i, 1.0) };
            (c + s * h * XGK[j], WGK[j].ln() + lh)
        })
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.log_err.total_cmp(&other.log_err)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogQuadResult {
    pub log_value: f64,
    pub log_err: f64,
    pub panels: Vec<Panel>,
    pub evals: usize,
    pub converged: bool,
}

impl LogQuadResult {
    /// Estimated relative error of the integral.
    pub fn rel_err(&self) -> f64 {
        if self.log_value == f64::NEG_INFINITY {
            0.0
        } else {
            (self.log_err - self.log_value).exp()
        }
    }
}

fn panel<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut lk = [f64::NEG_INFINITY; 21];
    let mut lg = [f64::NEG_INFINITY; 10];
    let mut kn = 0;
    let mut gn = 0;
    for j in 0..11 {
        let signs: &[f64] = if j == 10 { &[0.0] } else { &[-1.0, 1.0] };
        for &s in signs {
            let lf = f(c + s * h * XGK[j]);
            let lf = if lf.is_nan() { f64::NEG_INFINITY } else { lf };
            lk[kn] = WGK[j].ln() + lf;
            kn += 1;
            if j % 2 == 1 {
                lg[gn] = WG[j / 2].ln() + lf;
                gn += 1;
            }
        }
    }
    let lh = h.ln();
    let k = log_sum_exp(lk) + lh;
    let g = log_sum_exp(lg) + lh;
    Panel {
        a,
        b,
        log_value: k,
        log_err: log_abs_diff(k, g),
    }
}

/// Integrate `exp(log_f(x))` over `[a, b]`, starting from the panels delimited by `breaks`
/// (interior break points outside `(a, b)` are ignored).
pub fn integrate_log<F: FnMut(f64) -> f64>(
    mut log_f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    cfg: LogQuadConfig,
) -> LogQuadResult {
    let mut pts: Vec<f64> = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (1.0 + y.abs()));
    pts.extend(inner);
    pts.push(b);

    let mut heap = BinaryHeap::new();
    let mut evals = 0;
    for w in pts.windows(2) {
        heap.push(panel(&mut log_f, w[0], w[1]));
        evals += 21;
    }
    let ltol = cfg.rel_tol.ln();
    let mut converged = false;
    loop {
        let total = log_sum_exp(heap.iter().map(|p| p.log_value));
        let err = log_sum_exp(heap.iter().map(|p| p.log_err));
        if total == f64::NEG_INFINITY || err <= ltol + total {
            converged = true;
            break;
        }
        if heap.len() >= cfg.max_panels {
            break;
        }
        let worst = heap.pop().expect("at least one panel");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            heap.push(worst);
            break;
        }
        heap.push(panel(&mut log_f, worst.a, mid));
        heap.push(panel(&mut log_f, mid, worst.b));
        evals += 42;
    }
    let mut panels = heap.into_vec();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    LogQuadResult {
        log_value: log_sum_exp(panels.iter().map(|p| p.log_value)),
        log_err: log_sum_exp(panels.iter().map(|p| p.log_err)),
        panels,
        evals,
        converged,
    }
}
