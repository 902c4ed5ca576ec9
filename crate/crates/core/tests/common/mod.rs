//! Independent f64 reference implementations used as test oracles.
#![allow(dead_code, clippy::too_many_arguments)]

pub mod service;

use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use histostyle::evaluation::ScoreRecord;
use histostyle::image::{ColorMode, RgbImage};
use histostyle::style::{
    content_representation, style_representation, total_loss_and_gradient, StyleTransferConfig,
};
use histostyle::tensor::{PoolMode, Tensor};
use histostyle::vgg::{LayerKind, NetworkWeights, VggNetwork, DEFAULT_CHANNEL_MEANS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Feature map in f64, channel-major.
#[derive(Debug, Clone)]
pub struct Map {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Map {
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }
}

/// Direct cross-correlation with zero padding, written as the textbook
/// seven-deep loop.
pub fn naive_conv(
    input: &Map,
    kernel: &[f64],
    out_c: usize,
    kh: usize,
    kw: usize,
    bias: &[f64],
    stride: usize,
    pad: usize,
) -> Map {
    let oh = (input.h + 2 * pad - kh) / stride + 1;
    let ow = (input.w + 2 * pad - kw) / stride + 1;
    let mut data = vec![0.0; out_c * oh * ow];
    for o in 0..out_c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[o];
                for i in 0..input.c {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let y = (oy * stride + ky) as isize - pad as isize;
                            let x = (ox * stride + kx) as isize - pad as isize;
                            if y < 0 || x < 0 || y >= input.h as isize || x >= input.w as isize {
                                continue;
                            }
                            let k = kernel[((o * input.c + i) * kh + ky) * kw + kx];
                            acc += k * input.at(i, y as usize, x as usize);
                        }
                    }
                }
                data[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    Map {
        c: out_c,
        h: oh,
        w: ow,
        data,
    }
}

/// `G[i][j] = Σ_p F[i][p]·F[j][p]`.
pub fn naive_gram(f: &Map) -> Vec<f64> {
    let m = f.h * f.w;
    let mut g = vec![0.0; f.c * f.c];
    for i in 0..f.c {
        for j in 0..f.c {
            g[i * f.c + j] = (0..m).map(|p| f.data[i * m + p] * f.data[j * m + p]).sum();
        }
    }
    g
}

/// Pools and records which input won each max window (for kink detection).
fn naive_pool(input: &Map, mode: PoolMode, pattern: &mut Vec<u8>) -> Map {
    let (oh, ow) = (input.h.div_ceil(2), input.w.div_ceil(2));
    let mut data = Vec::with_capacity(input.c * oh * ow);
    for c in 0..input.c {
        for oy in 0..oh {
            for ox in 0..ow {
                let ys = [2 * oy, (2 * oy + 1).min(input.h - 1)];
                let xs = [2 * ox, (2 * ox + 1).min(input.w - 1)];
                let vals: Vec<f64> = ys
                    .iter()
                    .flat_map(|&y| xs.iter().map(move |&x| (y, x)))
                    .map(|(y, x)| input.at(c, y, x))
                    .collect();
                data.push(match mode {
                    PoolMode::Max => {
                        let mut best = 0;
                        for k in 1..4 {
                            if vals[k] > vals[best] {
                                best = k;
                            }
                        }
                        pattern.push(best as u8);
                        vals[best]
                    }
                    PoolMode::Average => vals.iter().sum::<f64>() / 4.0,
                });
            }
        }
    }
    Map {
        c: input.c,
        h: oh,
        w: ow,
        data,
    }
}

/// Every named activation, plus the piecewise-linear switching pattern
/// (ReLU signs, max-pool winners) that identifies the smooth piece `x` is in.
pub fn net_forward_with_pattern(
    weights: &NetworkWeights,
    pooling: PoolMode,
    x: &Map,
) -> (BTreeMap<String, Map>, Vec<u8>) {
    let mut taps = BTreeMap::new();
    let mut pattern = Vec::new();
    let mut cur = x.clone();
    for layer in weights.spec() {
        cur = match layer.kind {
            LayerKind::Conv => {
                let conv = weights.conv(&layer.name).unwrap();
                let d = conv.kernel.dims();
                let k: Vec<f64> = conv.kernel.data().iter().map(|&v| v as f64).collect();
                let b: Vec<f64> = conv.bias.iter().map(|&v| v as f64).collect();
                naive_conv(&cur, &k, d[0], d[2], d[3], &b, 1, 1)
            }
            LayerKind::Relu => {
                pattern.extend(cur.data.iter().map(|&v| (v > 0.0) as u8));
                Map {
                    data: cur.data.iter().map(|&v| v.max(0.0)).collect(),
                    ..cur
                }
            }
            LayerKind::Pool => naive_pool(&cur, pooling, &mut pattern),
        };
        taps.insert(layer.name.clone(), cur.clone());
    }
    (taps, pattern)
}

pub fn net_forward(weights: &NetworkWeights, pooling: PoolMode, x: &Map) -> BTreeMap<String, Map> {
    net_forward_with_pattern(weights, pooling, x).0
}

pub fn preprocess(image: &RgbImage, means: [f32; 3]) -> Map {
    let (w, h) = (image.width(), image.height());
    let mut data = vec![0.0; 3 * w * h];
    for y in 0..h {
        for x in 0..w {
            let p = image.pixel(x, y);
            for c in 0..3 {
                data[(c * h + y) * w + x] = p[c] as f64 - means[c] as f64;
            }
        }
    }
    Map { c: 3, h, w, data }
}

/// The total loss computed from first principles in f64, with the content
/// features and style Grams fixed up front.
pub struct OracleLoss<'a> {
    weights: &'a NetworkWeights,
    config: StyleTransferConfig,
    content: Map,
    /// Per style tap: Gram and its spatial size.
    style: Vec<(Vec<f64>, f64)>,
}

impl<'a> OracleLoss<'a> {
    pub fn new(
        weights: &'a NetworkWeights,
        config: &StyleTransferConfig,
        content: &Map,
        style: &Map,
    ) -> Self {
        let c = net_forward(weights, config.pooling, content);
        let s = net_forward(weights, config.pooling, style);
        Self {
            weights,
            config: config.clone(),
            content: c[&config.content_tap].clone(),
            style: config
                .style_taps
                .iter()
                .map(|t| (naive_gram(&s[t]), (s[t].h * s[t].w) as f64))
                .collect(),
        }
    }

    pub fn eval(&self, target: &Map) -> (f64, Vec<u8>) {
        let cfg = &self.config;
        let (t, pattern) = net_forward_with_pattern(self.weights, cfg.pooling, target);
        let tt = &t[&cfg.content_tap];
        let content_loss: f64 = 0.5
            * self
                .content
                .data
                .iter()
                .zip(&tt.data)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
        let mut style_loss = 0.0;
        for ((tap, w), (a, ma)) in cfg
            .style_taps
            .iter()
            .zip(&cfg.layer_weights)
            .zip(&self.style)
        {
            let ft = &t[tap];
            let g = naive_gram(ft);
            let n = ft.c as f64;
            let mg = (ft.h * ft.w) as f64;
            let e: f64 = if cfg.style_normalization {
                a.iter()
                    .zip(&g)
                    .map(|(a, g)| (a / ma - g / mg).powi(2))
                    .sum::<f64>()
                    / (4.0 * n * n)
            } else {
                a.iter().zip(&g).map(|(a, g)| (a - g).powi(2)).sum()
            };
            style_loss += w * e;
        }
        (content_loss + cfg.alpha * style_loss, pattern)
    }

    /// Central difference along coordinate `i`, shrinking the step until
    /// both probes stay in the same smooth piece as `x`. Returns the
    /// estimate and the step used.
    /// `base` is the pattern of `x` from [`OracleLoss::eval`].
    pub fn partial(&self, x: &Map, base: &[u8], i: usize, mut h: f64) -> (f64, f64) {
        for _ in 0..6 {
            let mut plus = x.clone();
            plus.data[i] += h;
            let mut minus = x.clone();
            minus.data[i] -= h;
            let (fp, pp) = self.eval(&plus);
            let (fm, pm) = self.eval(&minus);
            if pp == base && pm == base {
                return ((fp - fm) / (2.0 * h), h);
            }
            h /= 10.0;
        }
        panic!("coordinate {i} sits on a switching boundary");
    }
}

/// Total loss from first principles.
pub fn oracle_loss(
    weights: &NetworkWeights,
    config: &StyleTransferConfig,
    content: &Map,
    style: &Map,
    target: &Map,
) -> f64 {
    OracleLoss::new(weights, config, content, style)
        .eval(target)
        .0
}

pub fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> RgbImage {
    RgbImage::new(w, h, (0..w * h * 3).map(|_| rng.gen()).collect()).unwrap()
}

/// Smooth structured image: blobs and stripes rather than white noise.
pub fn structured_image(w: usize, h: usize, phase: f64) -> RgbImage {
    let mut px = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64 / w as f64, y as f64 / h as f64);
            let base = (6.0 * fx + phase).sin() * (5.0 * fy - phase).cos();
            for c in 0..3 {
                let v =
                    128.0 + 100.0 * (base + 0.3 * ((c as f64 + 1.0) * 9.0 * (fx + fy)).sin()) / 1.3;
                px.push(v.clamp(0.0, 255.0) as u8);
            }
        }
    }
    RgbImage::new(w, h, px).unwrap()
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Per-image design class for one property: −1 negative, 0 neutral, +1 positive.
pub type Class = i8;

/// Designed joint classes (removed, added) and how many images get each.
pub const BUCKET_DESIGN: [((Class, Class), usize); 9] = [
    ((1, 1), 70),
    ((1, 0), 6),
    ((1, -1), 5),
    ((0, 1), 5),
    ((-1, 1), 4),
    ((-1, -1), 3),
    ((0, 0), 3),
    ((-1, 0), 2),
    ((0, -1), 2),
];

pub const RATERS: usize = 5;

fn class_of_scores(scores: &[u8]) -> Class {
    let mean = scores.iter().map(|&s| s as f64).sum::<f64>() / scores.len() as f64;
    if mean > 3.0 {
        1
    } else if mean < 3.0 {
        -1
    } else {
        0
    }
}

/// Five scores whose mean lands in `class`, by rejection sampling.
fn scores_in_class(r: &mut impl Rng, class: Class) -> Vec<u8> {
    loop {
        let s: Vec<u8> = (0..RATERS).map(|_| r.gen_range(0..=6)).collect();
        if class_of_scores(&s) == class {
            return s;
        }
    }
}

/// 100 images × 5 raters whose per-image classes follow [`BUCKET_DESIGN`].
/// Returns the records and the designed class of every image, by id.
pub fn synthetic_scores(seed: u64) -> (Vec<ScoreRecord>, BTreeMap<String, (Class, Class)>) {
    let mut r = rng(seed);
    let mut records = Vec::new();
    let mut design = BTreeMap::new();
    let mut image = 0;
    for ((removed_class, added_class), count) in BUCKET_DESIGN {
        for _ in 0..count {
            let id = format!("img{image:03}");
            let mode = ColorMode::ALL[image % 4];
            let removed = scores_in_class(&mut r, removed_class);
            let added = scores_in_class(&mut r, added_class);
            for k in 0..RATERS {
                records.push(ScoreRecord {
                    rater_id: format!("rater{k}"),
                    image_id: id.clone(),
                    color_mode: mode,
                    removed_artifacts: removed[k],
                    added_structures: added[k],
                    timestamp: Utc
                        .timestamp_millis_opt(1_700_000_000_000 + records.len() as i64)
                        .unwrap(),
                });
            }
            design.insert(id, (removed_class, added_class));
            image += 1;
        }
    }
    (records, design)
}

/// Records where (added, removed) = (5, 4) is planted as the clear mode.
pub fn mode_scores(seed: u64) -> Vec<ScoreRecord> {
    let mut r = rng(seed);
    (0..500)
        .map(|i| {
            let (added, removed) = if r.gen_bool(0.3) {
                (5, 4)
            } else {
                (r.gen_range(0..=6), r.gen_range(0..=6))
            };
            ScoreRecord {
                rater_id: format!("rater{}", i % 5),
                image_id: format!("img{:03}", i / 5),
                color_mode: ColorMode::ALL[(i / 5) % 4],
                removed_artifacts: removed,
                added_structures: added,
                timestamp: Utc
                    .timestamp_millis_opt(1_700_000_000_000 + i as i64)
                    .unwrap(),
            }
        })
        .collect()
}

/// Named buckets by brute force over the designed classes.
pub fn brute_force_buckets(design: &BTreeMap<String, (Class, Class)>) -> [u64; 6] {
    let count = |pred: &dyn Fn(Class, Class) -> bool| {
        design.values().filter(|(r, a)| pred(*r, *a)).count() as u64
    };
    [
        count(&|r, a| r == 1 && a == 1),
        count(&|r, a| r == 1 && a != 1),
        count(&|r, a| a == 1 && r != 1),
        count(&|r, a| r == -1 && a != -1),
        count(&|r, a| a == -1 && r != -1),
        count(&|r, a| r == -1 && a == -1),
    ]
}

/// Dense BFGS inverse-Hessian: `H₀ = γI`, then
/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ` for each pair, oldest first.
pub fn dense_bfgs_direction(pairs: &[(Vec<f64>, Vec<f64>)], g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let gamma = pairs
        .last()
        .map(|(s, y)| dot(s, y) / dot(y, y))
        .unwrap_or(1.0);
    let mut h = vec![vec![0.0; n]; n];
    for (i, row) in h.iter_mut().enumerate() {
        row[i] = gamma;
    }
    for (s, y) in pairs {
        let rho = 1.0 / dot(s, y);
        // V = I − ρ y sᵀ; H ← Vᵀ H V + ρ s sᵀ.
        let v: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (i == j) as u8 as f64 - rho * y[i] * s[j])
                    .collect()
            })
            .collect();
        let hv: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| h[i][k] * v[k][j]).sum())
                    .collect()
            })
            .collect();
        h = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| v[k][i] * hv[k][j]).sum::<f64>() + rho * s[i] * s[j])
                    .collect()
            })
            .collect();
    }
    (0..n).map(|i| -dot(&h[i], g)).collect()
}

/// `ln Γ(a)` for integer or half-integer `a` by the exact recurrence from
/// `Γ(1) = 1` and `Γ(½) = √π`.
fn ln_gamma_half_integer(a: f64) -> f64 {
    let twice = (2.0 * a).round();
    assert!((twice - 2.0 * a).abs() < 1e-12 && twice >= 1.0);
    let (mut x, mut acc) = if (twice as u64).is_multiple_of(2) {
        (1.0, 0.0)
    } else {
        (0.5, 0.5 * std::f64::consts::PI.ln())
    };
    while x < a - 1e-9 {
        acc += x.ln();
        x += 1.0;
    }
    acc
}

fn simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson over `panels` equal pieces so narrow peaks are not missed.
fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson(f, lo, hi, fa, fm, fb, whole, 1e-14, 40)
        })
        .sum()
}

/// Upper tail of the chi-square density. With `x = u²` the density becomes
/// `2c·u^(k−1)·exp(−u²/2)`, smooth at zero for every `k ≥ 1`.
pub fn chi_square_sf_quadrature(x: f64, k: f64) -> f64 {
    let ln_c = -(k / 2.0) * 2f64.ln() - ln_gamma_half_integer(k / 2.0);
    let density = move |u: f64| {
        if u <= 0.0 {
            return if k == 1.0 { 2.0 * ln_c.exp() } else { 0.0 };
        }
        (2f64.ln() + ln_c + (k - 1.0) * u.ln() - 0.5 * u * u).exp()
    };
    let lo = x.sqrt();
    let hi = lo.max(k.sqrt()) + 40.0;
    integrate(&density, lo, hi, 400)
}

/// `0.5 − ∫₀ᵗ` of the Student-t density.
pub fn t_sf_quadrature(t: f64, nu: f64) -> f64 {
    let ln_c = ln_gamma_half_integer((nu + 1.0) / 2.0)
        - ln_gamma_half_integer(nu / 2.0)
        - 0.5 * (nu * std::f64::consts::PI).ln();
    let density = move |s: f64| (ln_c - (nu + 1.0) / 2.0 * (1.0 + s * s / nu).ln()).exp();
    0.5 - integrate(&density, 0.0, t, 400)
}

/// Reference (x, df) points for the chi-square survival function.
pub const CHI_POINTS: [(f64, f64); 20] = [
    (0.5, 1.0),
    (3.841458820694124, 1.0),
    (10.0, 1.0),
    (46.24, 1.0),
    (0.1, 2.0),
    (5.991, 2.0),
    (2.0, 3.0),
    (9.0, 4.0),
    (1.0, 5.0),
    (11.07, 5.0),
    (3.0, 7.0),
    (25.0, 7.0),
    (10.0, 10.0),
    (18.307, 10.0),
    (12.0, 20.0),
    (40.0, 20.0),
    (50.0, 50.0),
    (80.0, 50.0),
    (100.0, 100.0),
    (1000.0, 1000.0),
];

/// Analytic gradient vs kink-aware central differences of the f64 oracle
/// at every pixel. Returns the worst relative error, with a denominator floor
/// of `1e-2 · max|∂L/∂x|` so near-zero components are judged on an absolute
/// scale.
pub fn worst_gradient_error(config: &StyleTransferConfig, weights: &NetworkWeights) -> f64 {
    let content = preprocess(&structured_image(16, 16, 0.3), DEFAULT_CHANNEL_MEANS);
    let style = preprocess(&structured_image(16, 16, 2.1), DEFAULT_CHANNEL_MEANS);
    let target = preprocess(&structured_image(16, 16, 1.2), DEFAULT_CHANNEL_MEANS);

    let net = VggNetwork::new(weights, config.pooling);
    let to_tensor =
        |m: &Map| Tensor::new([3, m.h, m.w], m.data.iter().map(|&v| v as f32).collect()).unwrap();
    let c = content_representation(&net, &to_tensor(&content), config).unwrap();
    let s = style_representation(&net, &to_tensor(&style), config).unwrap();
    let (_, grad) = total_loss_and_gradient(&net, &to_tensor(&target), &c, &s, config).unwrap();

    let oracle = OracleLoss::new(weights, config, &content, &style);
    let (_, pattern) = oracle.eval(&target);
    let numeric: Vec<f64> = (0..target.data.len())
        .map(|i| oracle.partial(&target, &pattern, i, 1e-3).0)
        .collect();
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    numeric
        .iter()
        .zip(grad.data())
        .map(|(&n, &a)| rel_err(a as f64, n, 1e-2 * scale))
        .fold(0.0, f64::max)
}
