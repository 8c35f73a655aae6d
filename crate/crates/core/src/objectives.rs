//! Training objectives over a predicted parameter map, with analytic
//! gradients, and a plain gradient-descent driver that minimizes them.
//!
//! All losses work on the map's normalized frame: pixel `(u, v)` sits at
//! `(x, y) = (u, v) / extent` and a parameter vector `(p, q, r, s)` has
//! inverse depth `(p·x + q·y + r)·s`. Instance parameters `P^c` are the means
//! of the predicted pixel parameters over each ground-truth surface, and the
//! gradients flow back through those means into every pixel. Gradients are
//! reported per pixel and channel; pixels outside the loss get zeros. At
//! hinge kinks, L1 zeros and argmax ties the subgradient is zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ensure_same_shape, DepthMap, ParamMap, SegmentationMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Variance margin.
    pub delta_v: f64,
    /// Distance margin.
    pub delta_d: f64,
    /// Softmax scale of the stretch loss.
    pub k: f64,
    /// Weight of the variance term in the 3D objective.
    pub alpha: f64,
    /// Weight of the depth term in the 3D objective.
    pub beta: f64,
    /// Weight of the depth-consistency term in the 2D objective.
    pub eta: f64,
    /// Weight of the stretch term in the 2D objective.
    pub theta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { delta_v: 0.1, delta_d: 1.0, k: 20.0, alpha: 0.5, beta: 1.0, eta: 10.0, theta: 0.03 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [self.delta_v, self.delta_d, self.k, self.alpha, self.beta, self.eta, self.theta];
        if all.iter().all(|x| x.is_finite() && *x > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("loss settings must be positive: {self:?}")))
        }
    }
}

/// Per-pixel gradient with respect to the four channels.
pub type Grad = Vec<[f64; 4]>;

#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Grad,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminative {
    pub var: LossValue,
    pub dist: LossValue,
}

/// Term values of an objective and the gradient of its weighted total.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub l_p: Option<f64>,
    pub l_var: Option<f64>,
    pub l_dist: Option<f64>,
    pub l_z: Option<f64>,
    pub l_s: Option<f64>,
    #[serde(skip)]
    pub grad: Grad,
}

/// Pixels taking part in the instance-level losses, grouped by their
/// ground-truth label.
struct Groups {
    extent: f64,
    width: usize,
    /// `(pixel, group)` for every valid, labeled pixel.
    pixels: Vec<(usize, usize)>,
    counts: Vec<usize>,
    centers: Vec<[f64; 4]>,
}

impl Groups {
    fn new(pred: &ParamMap, seg: &SegmentationMap) -> Result<Self> {
        ensure_same_shape(pred.dims(), seg.dims())?;
        let labels = seg.distinct_labels();
        let group_of = |l: u32| labels.binary_search(&l).ok();
        let mut pixels = Vec::new();
        for (i, &l) in seg.labels().iter().enumerate() {
            if l == SegmentationMap::SENTINEL || !pred.mask()[i] {
                continue;
            }
            if let Some(g) = group_of(l) {
                pixels.push((i, g));
            }
        }
        if pixels.is_empty() {
            return Err(Error::EmptyOverlap);
        }
        // Running means keep the center of identical members exact.
        let mut counts = vec![0usize; labels.len()];
        let mut means = vec![[0.0; 4]; labels.len()];
        for &(i, g) in &pixels {
            counts[g] += 1;
            for k in 0..4 {
                means[g][k] += (pred.channels()[i][k] - means[g][k]) / counts[g] as f64;
            }
        }
        // Labels whose pixels are all invalid in the prediction drop out.
        let keep: Vec<usize> = (0..labels.len()).filter(|&g| counts[g] > 0).collect();
        let mut remap = vec![usize::MAX; labels.len()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let pixels = pixels.into_iter().map(|(i, g)| (i, remap[g])).collect();
        let counts: Vec<usize> = keep.iter().map(|&g| counts[g]).collect();
        let centers = keep.iter().map(|&g| means[g]).collect();
        Ok(Self { extent: pred.extent(), width: pred.width(), pixels, counts, centers })
    }

    fn coords(&self, i: usize) -> (f64, f64) {
        ((i % self.width) as f64 / self.extent, (i / self.width) as f64 / self.extent)
    }

    fn n(&self) -> usize {
        self.pixels.len()
    }

    fn c(&self) -> usize {
        self.centers.len()
    }

    /// Spreads center gradients over the member pixels.
    fn to_pixels(&self, len: usize, center_grad: &[[f64; 4]]) -> Grad {
        let mut grad = vec![[0.0; 4]; len];
        for &(i, g) in &self.pixels {
            let n = self.counts[g] as f64;
            for k in 0..4 {
                grad[i][k] = center_grad[g][k] / n;
            }
        }
        grad
    }
}

#[inline]
fn inv_depth(p: &[f64; 4], x: f64, y: f64) -> f64 {
    (p[0] * x + p[1] * y + p[2]) * p[3]
}

#[inline]
fn inv_depth_grad(p: &[f64; 4], x: f64, y: f64) -> [f64; 4] {
    [x * p[3], y * p[3], p[3], p[0] * x + p[1] * y + p[2]]
}

#[inline]
fn add_scaled(acc: &mut [f64; 4], g: &[f64; 4], s: f64) {
    for k in 0..4 {
        acc[k] += g[k] * s;
    }
}

fn norm4(a: &[f64; 4]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sub4(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
}

/// Mean per-pixel L1 distance between predicted and target parameters over
/// the pixels valid in both.
pub fn loss_param_l1(pred: &ParamMap, target: &ParamMap) -> Result<LossValue> {
    ensure_same_shape(pred.dims(), target.dims())?;
    let shared: Vec<usize> = (0..pred.channels().len()).filter(|&i| pred.mask()[i] && target.mask()[i]).collect();
    if shared.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    let n = shared.len() as f64;
    let mut grad = vec![[0.0; 4]; pred.channels().len()];
    let mut value = 0.0;
    for &i in &shared {
        let d = sub4(&pred.channels()[i], &target.channels()[i]);
        for k in 0..4 {
            value += d[k].abs();
            grad[i][k] = if d[k] > 0.0 {
                1.0 / n
            } else if d[k] < 0.0 {
                -1.0 / n
            } else {
                0.0
            };
        }
    }
    Ok(LossValue { value: value / n, grad })
}

/// Variance and distance hinges of the discriminative loss. The distance
/// term sums over ordered pairs of surfaces and is zero for one surface.
pub fn loss_discriminative(pred: &ParamMap, seg: &SegmentationMap, cfg: &LossConfig) -> Result<Discriminative> {
    let groups = Groups::new(pred, seg)?;
    let len = pred.channels().len();
    let c = groups.c() as f64;

    // Variance: per member, g = unit offset from the center when active.
    let mut var = 0.0;
    let mut offsets = vec![[0.0; 4]; len];
    let mut offset_sums = vec![[0.0; 4]; groups.c()];
    for &(i, g) in &groups.pixels {
        let d = sub4(&pred.channels()[i], &groups.centers[g]);
        let dist = norm4(&d);
        if dist > cfg.delta_v {
            var += (dist - cfg.delta_v) / (groups.counts[g] as f64 * c);
            let unit = d.map(|x| x / dist);
            offsets[i] = unit;
            add_scaled(&mut offset_sums[g], &unit, 1.0);
        }
    }
    let mut var_grad = vec![[0.0; 4]; len];
    for &(i, g) in &groups.pixels {
        let n = groups.counts[g] as f64;
        for k in 0..4 {
            var_grad[i][k] = (offsets[i][k] - offset_sums[g][k] / n) / (n * c);
        }
    }

    let mut dist = 0.0;
    let mut center_grad = vec![[0.0; 4]; groups.c()];
    if groups.c() >= 2 {
        let pairs = c * (c - 1.0);
        for a in 0..groups.c() {
            for b in 0..groups.c() {
                if a == b {
                    continue;
                }
                let d = sub4(&groups.centers[a], &groups.centers[b]);
                let norm = norm4(&d);
                if norm < cfg.delta_d {
                    dist += (cfg.delta_d - norm) / pairs;
                    if norm > 0.0 {
                        // d/dP^a of -‖P^a − P^b‖, and the opposite for P^b.
                        let unit = d.map(|x| x / norm);
                        add_scaled(&mut center_grad[a], &unit, -1.0 / pairs);
                        add_scaled(&mut center_grad[b], &unit, 1.0 / pairs);
                    }
                }
            }
        }
    }
    Ok(Discriminative {
        var: LossValue { value: var, grad: var_grad },
        dist: LossValue { value: dist, grad: groups.to_pixels(len, &center_grad) },
    })
}

/// Mean absolute inverse-depth error of the depth map stitched with the
/// ground-truth labels, over pixels with a valid prediction, a label and a
/// valid ground-truth depth.
pub fn loss_depth_supervised(pred: &ParamMap, seg: &SegmentationMap, gt_depth: &DepthMap) -> Result<LossValue> {
    ensure_same_shape(pred.dims(), gt_depth.dims())?;
    let groups = Groups::new(pred, seg)?;
    let used: Vec<(usize, usize, f64)> =
        groups.pixels.iter().filter_map(|&(i, g)| gt_depth.get_index(i).map(|z| (i, g, z))).collect();
    if used.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    let n = used.len() as f64;
    let mut value = 0.0;
    let mut center_grad = vec![[0.0; 4]; groups.c()];
    for &(i, g, z) in &used {
        let (x, y) = groups.coords(i);
        let e = inv_depth(&groups.centers[g], x, y) - 1.0 / z;
        value += e.abs() / n;
        if e != 0.0 {
            add_scaled(&mut center_grad[g], &inv_depth_grad(&groups.centers[g], x, y), e.signum() / n);
        }
    }
    Ok(LossValue { value, grad: groups.to_pixels(pred.channels().len(), &center_grad) })
}

/// Mean gap between the stitched (maximal) inverse depth and the inverse
/// depth of the labeled surface.
pub fn loss_depth_2d(pred: &ParamMap, seg: &SegmentationMap) -> Result<LossValue> {
    let groups = Groups::new(pred, seg)?;
    let n = groups.n() as f64;
    let mut value = 0.0;
    let mut center_grad = vec![[0.0; 4]; groups.c()];
    for &(i, g) in &groups.pixels {
        let (x, y) = groups.coords(i);
        let mut top = (g, inv_depth(&groups.centers[g], x, y));
        let labeled = top.1;
        for (c, p) in groups.centers.iter().enumerate() {
            let w = inv_depth(p, x, y);
            if w > top.1 {
                top = (c, w);
            }
        }
        if top.0 != g {
            value += (top.1 - labeled) / n;
            add_scaled(&mut center_grad[top.0], &inv_depth_grad(&groups.centers[top.0], x, y), 1.0 / n);
            add_scaled(&mut center_grad[g], &inv_depth_grad(&groups.centers[g], x, y), -1.0 / n);
        }
    }
    Ok(LossValue { value, grad: groups.to_pixels(pred.channels().len(), &center_grad) })
}

/// Negative mean softmax weight (scale `k`) of the labeled surface's
/// inverse depth among all surfaces.
pub fn loss_stretch(pred: &ParamMap, seg: &SegmentationMap, k: f64) -> Result<LossValue> {
    let groups = Groups::new(pred, seg)?;
    let n = groups.n() as f64;
    let mut value = 0.0;
    let mut center_grad = vec![[0.0; 4]; groups.c()];
    let mut w = vec![0.0; groups.c()];
    // Running mean, exact when every pixel contributes the same weight.
    for (j, &(i, g)) in groups.pixels.iter().enumerate() {
        let (x, y) = groups.coords(i);
        for (c, p) in groups.centers.iter().enumerate() {
            w[c] = inv_depth(p, x, y);
        }
        let top = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = w.iter().map(|wc| (k * (wc - top)).exp()).sum();
        let sigma = |c: usize| (k * (w[c] - top)).exp() / z;
        let sl = sigma(g);
        value += (-sl - value) / (j + 1) as f64;
        // d(−σ_l)/dw_c = −k·σ_l·(δ_lc − σ_c)
        for (c, p) in groups.centers.iter().enumerate() {
            let delta = if c == g { 1.0 } else { 0.0 };
            let dw = -k * sl * (delta - sigma(c)) / n;
            add_scaled(&mut center_grad[c], &inv_depth_grad(p, x, y), dw);
        }
    }
    Ok(LossValue { value, grad: groups.to_pixels(pred.channels().len(), &center_grad) })
}

fn accumulate(total: &mut Grad, part: &Grad, weight: f64) {
    for (t, p) in total.iter_mut().zip(part) {
        add_scaled(t, p, weight);
    }
}

/// `L_p + α·L_var + β·L_z` with depth supervision.
pub fn loss_total_3d(
    pred: &ParamMap,
    target: &ParamMap,
    seg: &SegmentationMap,
    gt_depth: &DepthMap,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    let lp = loss_param_l1(pred, target)?;
    let disc = loss_discriminative(pred, seg, cfg)?;
    let lz = loss_depth_supervised(pred, seg, gt_depth)?;
    let mut grad = lp.grad.clone();
    accumulate(&mut grad, &disc.var.grad, cfg.alpha);
    accumulate(&mut grad, &lz.grad, cfg.beta);
    Ok(LossBreakdown {
        total: lp.value + cfg.alpha * disc.var.value + cfg.beta * lz.value,
        l_p: Some(lp.value),
        l_var: Some(disc.var.value),
        l_dist: None,
        l_z: Some(lz.value),
        l_s: None,
        grad,
    })
}

/// `L_var + L_dist + η·L_z + θ·L_s` with segmentation supervision only.
pub fn loss_total_2d(pred: &ParamMap, seg: &SegmentationMap, cfg: &LossConfig) -> Result<LossBreakdown> {
    let disc = loss_discriminative(pred, seg, cfg)?;
    let lz = loss_depth_2d(pred, seg)?;
    let ls = loss_stretch(pred, seg, cfg.k)?;
    let mut grad = disc.var.grad.clone();
    accumulate(&mut grad, &disc.dist.grad, 1.0);
    accumulate(&mut grad, &lz.grad, cfg.eta);
    accumulate(&mut grad, &ls.grad, cfg.theta);
    Ok(LossBreakdown {
        total: disc.var.value + disc.dist.value + cfg.eta * lz.value + cfg.theta * ls.value,
        l_p: None,
        l_var: Some(disc.var.value),
        l_dist: Some(disc.dist.value),
        l_z: Some(lz.value),
        l_s: Some(ls.value),
        grad,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "3d")]
    ThreeD,
}

/// Supervision for [`optimize_param_map`]; 3D mode needs every field.
#[derive(Clone, Debug)]
pub struct Supervision<'a> {
    pub seg: &'a SegmentationMap,
    pub params: Option<&'a ParamMap>,
    pub depth: Option<&'a DepthMap>,
}

impl Supervision<'_> {
    fn evaluate(&self, pred: &ParamMap, mode: Mode, cfg: &LossConfig) -> Result<LossBreakdown> {
        match mode {
            Mode::TwoD => loss_total_2d(pred, self.seg, cfg),
            Mode::ThreeD => {
                let (Some(params), Some(depth)) = (self.params, self.depth) else {
                    return Err(Error::InvalidArgument("3D mode needs target parameters and depth".into()));
                };
                loss_total_3d(pred, params, self.seg, depth, cfg)
            }
        }
    }
}

/// Gradient descent on the 2D or 3D objective over all pixel parameters.
///
/// Each step starts from `lr` and halves the step until the Armijo condition
/// holds, so the loss trace (initial value followed by one entry per step)
/// never increases. When no step size decreases the loss the map is left
/// unchanged for the remaining steps.
pub fn optimize_param_map(
    init: &ParamMap,
    gt: &Supervision,
    mode: Mode,
    cfg: &LossConfig,
    steps: usize,
    lr: f64,
) -> Result<(ParamMap, Vec<f64>)> {
    cfg.validate()?;
    if !(lr > 0.0) {
        return Err(Error::InvalidArgument(format!("learning rate must be positive, got {lr}")));
    }
    let mut map = init.clone();
    let mut current = gt.evaluate(&map, mode, cfg)?;
    let mut trace = vec![current.total];
    if !current.total.is_finite() {
        return Err(Error::NonFiniteLoss { step: 0, trace });
    }
    let mut stalled = false;
    for step in 1..=steps {
        if !stalled {
            let g2: f64 = current.grad.iter().flatten().map(|x| x * x).sum();
            let mut t = lr;
            let mut accepted = None;
            for _ in 0..60 {
                let mut trial = map.clone();
                for (ch, g) in trial.channels_mut().iter_mut().zip(&current.grad) {
                    for k in 0..4 {
                        ch[k] -= t * g[k];
                    }
                }
                let eval = gt.evaluate(&trial, mode, cfg)?;
                if eval.total.is_finite() && eval.total <= current.total - 1e-4 * t * g2 {
                    accepted = Some((trial, eval));
                    break;
                }
                t /= 2.0;
            }
            match accepted {
                Some((trial, eval)) => {
                    map = trial;
                    current = eval;
                }
                None => stalled = true,
            }
        }
        trace.push(current.total);
        if !current.total.is_finite() {
            return Err(Error::NonFiniteLoss { step, trace });
        }
    }
    Ok((map, trace))
}
