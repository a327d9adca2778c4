//! Exponential and power-law decay fits, regime segmentation and exponent
//! scaling laws.
//!
//! Every fit is an unweighted straight-line least-squares fit in log space:
//! `ln y` against `t` for exponentials, `ln y` against `ln t` for power laws.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Fewest samples accepted by a single decay fit.
pub const MIN_FIT_POINTS: usize = 8;
/// Fewest samples in one segment of a regime segmentation.
pub const MIN_SEGMENT_POINTS: usize = 10;
/// Fractional sse reduction an extra segment must achieve to be kept.
pub const SEGMENT_GAIN: f64 = 0.05;
/// Centered moving-average width applied before breakpoint search.
pub const SMOOTHING_WIDTH: usize = 5;
/// Tail samples with local relative variance at or above this are dropped
/// before segmentation.
pub const TAIL_VARIANCE_LIMIT: f64 = 0.1;
const TAIL_WINDOW: usize = 11;
/// Fewest points on each side of a two-power-law split (the knee point is
/// shared by both sides).
pub const MIN_SCALING_POINTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FitModel {
    /// `y = A e^{-α t}`
    Exponential,
    /// `y = A t^{-β}`
    PowerLaw,
    /// `y = a x² + b x + c`
    Quadratic,
}

impl FitModel {
    pub fn name(self) -> &'static str {
        match self {
            FitModel::Exponential => "exp",
            FitModel::PowerLaw => "pow",
            FitModel::Quadratic => "quad",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: FitModel,
    /// α for exponentials, β for power laws, γ for scaling power laws and the
    /// leading coefficient `a` for quadratics.
    pub exponent: f64,
    /// `A` for decay laws, `c` for quadratics.
    pub prefactor: f64,
    /// Abscissa span actually covered by the fitted points.
    pub window: (f64, f64),
    pub sse: f64,
    pub n_points: usize,
    /// Quadratic coefficients in ascending powers `[c, b, a]`; empty otherwise.
    pub coefficients: Vec<f64>,
}

impl FitResult {
    /// Model value at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        match self.model {
            FitModel::Exponential => self.prefactor * (-self.exponent * x).exp(),
            FitModel::PowerLaw => self.prefactor * x.powf(-self.exponent),
            FitModel::Quadratic => {
                let c = &self.coefficients;
                c[0] + c[1] * x + c[2] * x * x
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSegmentation {
    pub breakpoints: Vec<f64>,
    pub segments: Vec<FitResult>,
    /// Set when no multi-segment fit beat a single segment by the required
    /// margin.
    pub single_regime: bool,
}

impl RegimeSegmentation {
    pub fn total_sse(&self) -> f64 {
        self.segments.iter().map(|s| s.sse).sum()
    }
}

struct Line {
    slope: f64,
    intercept: f64,
    sse: f64,
}

fn line_fit(x: &[f64], y: &[f64]) -> Line {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    Line { slope, intercept, sse }
}

fn select(t: &[f64], y: &[f64], window: (f64, f64)) -> Result<(Vec<f64>, Vec<f64>)> {
    if t.len() != y.len() {
        return Err(Error::Fit("time and value columns differ in length".into()));
    }
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::Fit(format!("empty window [{lo}, {hi}]")));
    }
    let (ts, ys): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(y)
        .filter(|(t, _)| **t >= lo && **t <= hi)
        .map(|(t, y)| (*t, *y))
        .unzip();
    if ts.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "window [{lo}, {hi}] holds {} points, need {MIN_FIT_POINTS}",
            ts.len()
        )));
    }
    if let Some(v) = ys.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Fit(format!("non-positive value {v} in window")));
    }
    Ok((ts, ys))
}

fn decay_fit(model: FitModel, ts: &[f64], ys: &[f64]) -> Result<FitResult> {
    let x: Vec<f64> = match model {
        FitModel::Exponential => ts.to_vec(),
        FitModel::PowerLaw => {
            if let Some(t) = ts.iter().find(|t| !(**t > 0.0)) {
                return Err(Error::Fit(format!("power law needs t > 0, got {t}")));
            }
            ts.iter().map(|t| t.ln()).collect()
        }
        FitModel::Quadratic => return Err(Error::Fit("quadratic is not a decay law".into())),
    };
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let line = line_fit(&x, &ly);
    Ok(FitResult {
        model,
        exponent: -line.slope,
        prefactor: line.intercept.exp(),
        window: (ts[0], ts[ts.len() - 1]),
        sse: line.sse,
        n_points: ts.len(),
        coefficients: Vec::new(),
    })
}

/// Fits `y = A e^{-α t}` to the samples with `t` in `window` (inclusive).
pub fn fit_exponential(t: &[f64], y: &[f64], window: (f64, f64)) -> Result<FitResult> {
    let (ts, ys) = select(t, y, window)?;
    decay_fit(FitModel::Exponential, &ts, &ys)
}

/// Fits `y = A t^{-β}` to the samples with `t` in `window` (inclusive).
pub fn fit_powerlaw(t: &[f64], y: &[f64], window: (f64, f64)) -> Result<FitResult> {
    let (ts, ys) = select(t, y, window)?;
    decay_fit(FitModel::PowerLaw, &ts, &ys)
}

/// Centered moving average; the window shrinks symmetrically at the ends.
pub fn moving_average(y: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    (0..y.len())
        .map(|i| {
            let h = half.min(i).min(y.len() - 1 - i);
            let s = &y[i - h..=i + h];
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect()
}

/// Index one past the last sample kept: the tail is cut at the first point
/// (beyond the first half of the series) whose centered window has relative
/// variance `var/mean²` of at least [`TAIL_VARIANCE_LIMIT`].
fn stable_len(y: &[f64]) -> usize {
    let half = TAIL_WINDOW / 2;
    if y.len() < TAIL_WINDOW {
        return y.len();
    }
    for i in (y.len() / 2).max(half)..y.len() - half {
        let w = &y[i - half..=i + half];
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        if var / (mean * mean) >= TAIL_VARIANCE_LIMIT {
            return i;
        }
    }
    y.len()
}

/// Running sums for O(1) straight-line sse over any index range.
struct Prefix {
    x: Vec<f64>,
    y: Vec<f64>,
    xx: Vec<f64>,
    xy: Vec<f64>,
    yy: Vec<f64>,
    valid: Vec<usize>,
}

impl Prefix {
    fn new(x: &[f64], y: &[f64], ok: impl Fn(usize) -> bool) -> Self {
        let n = x.len();
        let mut p = Prefix {
            x: vec![0.0; n + 1],
            y: vec![0.0; n + 1],
            xx: vec![0.0; n + 1],
            xy: vec![0.0; n + 1],
            yy: vec![0.0; n + 1],
            valid: vec![0; n + 1],
        };
        for i in 0..n {
            p.x[i + 1] = p.x[i] + x[i];
            p.y[i + 1] = p.y[i] + y[i];
            p.xx[i + 1] = p.xx[i] + x[i] * x[i];
            p.xy[i + 1] = p.xy[i] + x[i] * y[i];
            p.yy[i + 1] = p.yy[i] + y[i] * y[i];
            p.valid[i + 1] = p.valid[i] + ok(i) as usize;
        }
        p
    }

    /// sse of the best line through samples `a..b`.
    fn sse(&self, a: usize, b: usize) -> f64 {
        if self.valid[b] - self.valid[a] != b - a {
            return f64::INFINITY;
        }
        let n = (b - a) as f64;
        let sx = self.x[b] - self.x[a];
        let sy = self.y[b] - self.y[a];
        let sxx = self.xx[b] - self.xx[a] - sx * sx / n;
        let sxy = self.xy[b] - self.xy[a] - sx * sy / n;
        let syy = self.yy[b] - self.yy[a] - sy * sy / n;
        (syy - sxy * sxy / sxx).max(0.0)
    }
}

/// Models used for a `k`-segment fit: the leading `k − 1` entries of the
/// sequence followed by its last entry.
fn models_for(sequence: &[FitModel], k: usize) -> Vec<FitModel> {
    if k == 1 {
        return vec![sequence[0]];
    }
    let mut m = sequence[..k - 1].to_vec();
    m.push(*sequence.last().unwrap());
    m
}

/// Best split of `0..n` into `models.len()` segments; returns the start index
/// of every segment after the first and the summed sse.
fn best_split(prefix: &[&Prefix], models: &[usize], n: usize) -> Option<(Vec<usize>, f64)> {
    let k = models.len();
    let min = MIN_SEGMENT_POINTS;
    if n < k * min {
        return None;
    }
    // cost[j][e]: best sse covering 0..e with the first j+1 segments
    let mut cost = vec![vec![f64::INFINITY; n + 1]; k];
    let mut arg = vec![vec![0usize; n + 1]; k];
    for (e, c) in cost[0].iter_mut().enumerate().skip(min) {
        *c = prefix[models[0]].sse(0, e);
    }
    for j in 1..k {
        for e in (j + 1) * min..=n {
            for s in j * min..=e - min {
                let c = cost[j - 1][s] + prefix[models[j]].sse(s, e);
                if c < cost[j][e] {
                    cost[j][e] = c;
                    arg[j][e] = s;
                }
            }
        }
    }
    if !cost[k - 1][n].is_finite() {
        return None;
    }
    let mut starts = Vec::with_capacity(k - 1);
    let mut e = n;
    for j in (1..k).rev() {
        let s = arg[j][e];
        starts.push(s);
        e = s;
    }
    starts.reverse();
    Some((starts, cost[k - 1][n]))
}

/// Splits a decaying series into at most `max_segments` regimes, each fitted
/// with its model from `model_sequence`.
///
/// A `k`-segment fit uses the first `k − 1` models of the sequence and then
/// its last one, so `[Exponential, Exponential, PowerLaw]` yields
/// exp, exp→pow and exp→exp→pow candidates. Breakpoints are searched on the
/// smoothed series with a fluctuating tail removed; the reported fits use the
/// raw samples of each segment. An extra segment is accepted only when it
/// lowers the total sse by at least [`SEGMENT_GAIN`].
pub fn detect_regimes(
    t: &[f64],
    y: &[f64],
    max_segments: usize,
    model_sequence: &[FitModel],
) -> Result<RegimeSegmentation> {
    if !(1..=3).contains(&max_segments) {
        return Err(Error::Fit(format!("max_segments must be 1..=3, got {max_segments}")));
    }
    if model_sequence.is_empty() || model_sequence.len() > 3 {
        return Err(Error::Fit("model sequence must hold 1 to 3 models".into()));
    }
    if model_sequence.contains(&FitModel::Quadratic) {
        return Err(Error::Fit("quadratic is not a decay law".into()));
    }
    if t.len() != y.len() {
        return Err(Error::Fit("time and value columns differ in length".into()));
    }
    if let Some(v) = y.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Fit(format!("series must be strictly positive, found {v}")));
    }
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Fit("times must be strictly increasing".into()));
    }

    let n = stable_len(y);
    let smooth = moving_average(&y[..n], SMOOTHING_WIDTH);
    let ly: Vec<f64> = smooth.iter().map(|v| v.ln()).collect();
    let lt: Vec<f64> = t[..n].iter().map(|t| if *t > 0.0 { t.ln() } else { 0.0 }).collect();
    let exp_prefix = Prefix::new(&t[..n], &ly, |_| true);
    let pow_prefix = Prefix::new(&lt, &ly, |i| t[i] > 0.0);
    let prefixes = [&exp_prefix, &pow_prefix];
    let slot = |m: FitModel| usize::from(m == FitModel::PowerLaw);

    let segments_of = |starts: &[usize], models: &[FitModel]| -> Result<Vec<FitResult>> {
        let mut bounds = vec![0];
        bounds.extend_from_slice(starts);
        bounds.push(n);
        bounds
            .windows(2)
            .zip(models)
            .map(|(w, m)| decay_fit(*m, &t[w[0]..w[1]], &y[w[0]..w[1]]))
            .collect()
    };

    let first = models_for(model_sequence, 1);
    let (mut starts, mut best_sse) = best_split(&prefixes, &[slot(first[0])], n)
        .ok_or_else(|| Error::Fit(format!("need at least {MIN_SEGMENT_POINTS} usable samples")))?;
    let mut models = first;
    let limit = max_segments.min(if model_sequence.len() == 1 { 1 } else { model_sequence.len() });
    for k in 2..=limit {
        let cand = models_for(model_sequence, k);
        let slots: Vec<usize> = cand.iter().map(|m| slot(*m)).collect();
        if let Some((s, sse)) = best_split(&prefixes, &slots, n) {
            if sse <= (1.0 - SEGMENT_GAIN) * best_sse {
                starts = s;
                best_sse = sse;
                models = cand;
            }
        }
    }
    let segments = segments_of(&starts, &models)?;
    Ok(RegimeSegmentation {
        breakpoints: starts.iter().map(|&i| t[i]).collect(),
        single_regime: segments.len() == 1,
        segments,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingModel {
    /// `α ∝ N^γ` with separate exponents below and above a knee.
    TwoPowerLaws,
    /// `α = aN² + bN + c`
    Quadratic,
}

/// Fits how a decay exponent scales with bath size.
///
/// `TwoPowerLaws` scans the knee over the sorted points; the knee belongs to
/// both sides and each side needs [`MIN_SCALING_POINTS`] points. It returns the
/// small-N fit followed by the large-N fit. `Quadratic` returns one result.
pub fn fit_exponent_scaling(points: &[(f64, f64)], model: ScalingModel) -> Result<Vec<FitResult>> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    match model {
        ScalingModel::Quadratic => {
            if pts.len() < 4 {
                return Err(Error::Fit(format!("quadratic fit needs 4 points, got {}", pts.len())));
            }
            let x = DMatrix::from_fn(pts.len(), 3, |r, c| pts[r].0.powi(c as i32));
            let y = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
            let coef = x
                .clone()
                .svd(true, true)
                .solve(&y, 1e-14)
                .map_err(|e| Error::Fit(e.to_string()))?;
            let sse = (&x * &coef - &y).norm_squared();
            Ok(vec![FitResult {
                model: FitModel::Quadratic,
                exponent: coef[2],
                prefactor: coef[0],
                window: (pts[0].0, pts[pts.len() - 1].0),
                sse,
                n_points: pts.len(),
                coefficients: coef.iter().copied().collect(),
            }])
        }
        ScalingModel::TwoPowerLaws => {
            if let Some(p) = pts.iter().find(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
                return Err(Error::Fit(format!("power-law scaling needs positive points, got {p:?}")));
            }
            let n = pts.len();
            if n < 2 * MIN_SCALING_POINTS - 1 {
                return Err(Error::Fit(format!(
                    "degenerate split: {n} points cannot give {MIN_SCALING_POINTS} per side"
                )));
            }
            let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
            let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
            let mut best: Option<(f64, usize)> = None;
            for knee in MIN_SCALING_POINTS - 1..=n - MIN_SCALING_POINTS {
                let a = line_fit(&lx[..=knee], &ly[..=knee]);
                let b = line_fit(&lx[knee..], &ly[knee..]);
                let sse = a.sse + b.sse;
                if best.is_none_or(|(s, _)| sse < s) {
                    best = Some((sse, knee));
                }
            }
            let (_, knee) = best.unwrap();
            let side = |r: std::ops::Range<usize>| {
                let l = line_fit(&lx[r.clone()], &ly[r.clone()]);
                FitResult {
                    model: FitModel::PowerLaw,
                    exponent: l.slope,
                    prefactor: l.intercept.exp(),
                    window: (pts[r.start].0, pts[r.end - 1].0),
                    sse: l.sse,
                    n_points: r.len(),
                    coefficients: Vec::new(),
                }
            };
            Ok(vec![side(0..knee + 1), side(knee..n)])
        }
    }
}
