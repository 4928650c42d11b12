//! IoU and DIoU regression losses with analytic gradients in the
//! (cx, cy, w, h) parameterization, plus a central-finite-difference
//! oracle and a randomized gradient checker.
//!
//! The IoU loss is 1 − IoU. The DIoU loss adds the distance penalty
//! ρ²(b, b_gt)/c², which keeps a useful center gradient alive when the
//! boxes do not intersect (plain IoU loss is constant 1 there, so descent
//! stalls).
//!
//! At configurations where an intersection or enclosing edge ties with a
//! box edge the loss is not differentiable; the analytic gradient takes
//! the one-sided derivative that treats the predicted box's edge as the
//! binding one.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::CenterBox;
use crate::scalar::Scalar;

/// Which regression loss to evaluate. Serialized as the lowercase tokens
/// `iou` / `diou` on the CLI and in files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Iou,
    Diou,
}

impl LossKind {
    pub fn token(&self) -> &'static str {
        match self {
            LossKind::Iou => "iou",
            LossKind::Diou => "diou",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iou" => Ok(LossKind::Iou),
            "diou" => Ok(LossKind::Diou),
            other => Err(Error::InvalidConfig(format!(
                "unknown loss kind {other:?} (expected \"iou\" or \"diou\")"
            ))),
        }
    }
}

/// Partials of a loss with respect to the predicted box's (cx, cy, w, h).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxGradient<S> {
    pub d_cx: S,
    pub d_cy: S,
    pub d_w: S,
    pub d_h: S,
}

impl<S: Scalar> BoxGradient<S> {
    fn from_parts(parts: [S; 4]) -> Self {
        Self {
            d_cx: parts[0],
            d_cy: parts[1],
            d_w: parts[2],
            d_h: parts[3],
        }
    }

    pub fn components(&self) -> [S; 4] {
        [self.d_cx, self.d_cy, self.d_w, self.d_h]
    }
}

/// Partial derivatives of a one-dimensional span with respect to the
/// predicted box's center coordinate and size along that axis.
struct AxisSpan<S> {
    span: S,
    d_center: S,
    d_size: S,
}

/// Span of the intersection along one axis. `min(p_hi, g_hi) − max(p_lo, g_lo)`,
/// with the predicted edge treated as binding on ties.
fn intersection_axis<S: Scalar>(p_lo: S, p_hi: S, g_lo: S, g_hi: S) -> AxisSpan<S> {
    let hi_binds = if p_hi <= g_hi { S::one() } else { S::zero() };
    let lo_binds = if p_lo >= g_lo { S::one() } else { S::zero() };
    AxisSpan {
        span: p_hi.min(g_hi) - p_lo.max(g_lo),
        d_center: hi_binds - lo_binds,
        d_size: (hi_binds + lo_binds) * S::half(),
    }
}

/// Span of the enclosing box along one axis. `max(p_hi, g_hi) − min(p_lo, g_lo)`,
/// with the predicted edge treated as binding on ties.
fn enclosing_axis<S: Scalar>(p_lo: S, p_hi: S, g_lo: S, g_hi: S) -> AxisSpan<S> {
    let hi_binds = if p_hi >= g_hi { S::one() } else { S::zero() };
    let lo_binds = if p_lo <= g_lo { S::one() } else { S::zero() };
    AxisSpan {
        span: p_hi.max(g_hi) - p_lo.min(g_lo),
        d_center: hi_binds - lo_binds,
        d_size: (hi_binds + lo_binds) * S::half(),
    }
}

impl LossKind {
    /// Loss value: `1 − IoU` for [`LossKind::Iou`] (range [0, 1]),
    /// `1 − IoU + ρ²/c²` for [`LossKind::Diou`] (range [0, 2)).
    ///
    /// Rejects a ground-truth box with zero area; the prediction may be
    /// degenerate (its IoU is then 0).
    pub fn loss<S: Scalar>(&self, pred: &CenterBox<S>, gt: &CenterBox<S>) -> Result<S> {
        if gt.area() <= S::zero() {
            return Err(Error::ZeroAreaGroundTruth);
        }
        let p = pred.to_corner();
        let g = gt.to_corner();
        let base = S::one() - p.iou(&g);
        Ok(match self {
            LossKind::Iou => base,
            LossKind::Diou => base + p.diou_penalty(&g),
        })
    }

    /// Analytic gradient of the loss at `pred`. Requires both boxes to have
    /// strictly positive area.
    ///
    /// For disjoint boxes the IoU gradient vanishes entirely (the loss is
    /// locally constant at 1), while the DIoU gradient keeps pulling the
    /// predicted center toward the target.
    pub fn gradient<S: Scalar>(
        &self,
        pred: &CenterBox<S>,
        gt: &CenterBox<S>,
    ) -> Result<BoxGradient<S>> {
        if pred.area() <= S::zero() {
            return Err(Error::ZeroAreaPrediction);
        }
        if gt.area() <= S::zero() {
            return Err(Error::ZeroAreaGroundTruth);
        }

        let p = pred.to_corner();
        let g = gt.to_corner();
        let zero = S::zero();

        // Intersection area and its partials. Off the overlap region the
        // area is identically zero, so its partials are zero too.
        let ix = intersection_axis(p.x1(), p.x2(), g.x1(), g.x2());
        let iy = intersection_axis(p.y1(), p.y2(), g.y1(), g.y2());
        let (inter, d_inter) = if ix.span > zero && iy.span > zero {
            let d = [
                ix.d_center * iy.span,
                iy.d_center * ix.span,
                ix.d_size * iy.span,
                iy.d_size * ix.span,
            ];
            (ix.span * iy.span, d)
        } else {
            (zero, [zero; 4])
        };

        let union = pred.area() + gt.area() - inter;
        let d_pred_area = [zero, zero, pred.h(), pred.w()];

        // d(IoU)/dθ = (I'·U − I·U') / U², with U' = A' − I'.
        let union_sq = union * union;
        let mut parts = [zero; 4];
        for k in 0..4 {
            let d_union = d_pred_area[k] - d_inter[k];
            let d_iou = (d_inter[k] * union - inter * d_union) / union_sq;
            parts[k] = -d_iou;
        }

        if let LossKind::Diou = self {
            let ex = enclosing_axis(p.x1(), p.x2(), g.x1(), g.x2());
            let ey = enclosing_axis(p.y1(), p.y2(), g.y1(), g.y2());
            let c2 = ex.span * ex.span + ey.span * ey.span;
            let dx = pred.cx() - gt.cx();
            let dy = pred.cy() - gt.cy();
            let rho2 = dx * dx + dy * dy;

            let d_rho2 = [dx * S::two(), dy * S::two(), zero, zero];
            let d_c2 = [
                S::two() * ex.span * ex.d_center,
                S::two() * ey.span * ey.d_center,
                S::two() * ex.span * ex.d_size,
                S::two() * ey.span * ey.d_size,
            ];
            let c2_sq = c2 * c2;
            for k in 0..4 {
                parts[k] = parts[k] + (d_rho2[k] * c2 - rho2 * d_c2[k]) / c2_sq;
            }
        }

        Ok(BoxGradient::from_parts(parts))
    }

    /// Central-difference approximation `(L(θ+ε) − L(θ−ε)) / 2ε` of each
    /// partial; the independent oracle the analytic gradient is checked
    /// against.
    pub fn finite_diff_gradient<S: Scalar>(
        &self,
        pred: &CenterBox<S>,
        gt: &CenterBox<S>,
        eps: S,
    ) -> Result<BoxGradient<S>> {
        if eps <= S::zero() {
            return Err(Error::NonPositiveEpsilon(eps.as_f64()));
        }
        let base = [pred.cx(), pred.cy(), pred.w(), pred.h()];
        let mut parts = [S::zero(); 4];
        for k in 0..4 {
            let mut hi = base;
            let mut lo = base;
            hi[k] = hi[k] + eps;
            lo[k] = lo[k] - eps;
            let hi_box = CenterBox::new(hi[0], hi[1], hi[2], hi[3])?;
            let lo_box = CenterBox::new(lo[0], lo[1], lo[2], lo[3])?;
            parts[k] = (self.loss(&hi_box, gt)? - self.loss(&lo_box, gt)?) / (S::two() * eps);
        }
        Ok(BoxGradient::from_parts(parts))
    }
}

/// Pass threshold on the relative error between analytic and
/// finite-difference gradients.
pub const GRAD_REL_TOL: f64 = 1e-5;
/// Absolute tolerance applied to components smaller than
/// [`GRAD_SMALL_COMPONENT`], where relative error is meaningless.
pub const GRAD_ABS_TOL: f64 = 1e-8;
pub const GRAD_SMALL_COMPONENT: f64 = 1e-3;
/// Sampled boxes keep every corner comparison at least this far from a
/// tie, so no sample sits on a non-differentiable configuration.
pub const GRAD_TIE_MARGIN: f64 = 1e-3;

/// Outcome of a randomized gradient check over both loss kinds.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub samples: usize,
    /// Largest relative error among components with magnitude ≥ [`GRAD_SMALL_COMPONENT`].
    pub max_rel_error: f64,
    /// Largest absolute error among the remaining (tiny) components.
    pub max_abs_error: f64,
    pub passed: bool,
}

fn sample_checked_pair<S: Scalar>(rng: &mut ChaCha8Rng) -> (CenterBox<S>, CenterBox<S>) {
    const CANVAS: f64 = 100.0;
    loop {
        let mut draw = || {
            let cx = rng.random::<f64>() * CANVAS;
            let cy = rng.random::<f64>() * CANVAS;
            let w = 1.0 + rng.random::<f64>() * (CANVAS / 2.0 - 1.0);
            let h = 1.0 + rng.random::<f64>() * (CANVAS / 2.0 - 1.0);
            (cx, cy, w, h)
        };
        let (pcx, pcy, pw, ph) = draw();
        let (gcx, gcy, gw, gh) = draw();
        let p = [
            pcx - pw / 2.0,
            pcx + pw / 2.0,
            pcy - ph / 2.0,
            pcy + ph / 2.0,
        ];
        let g = [
            gcx - gw / 2.0,
            gcx + gw / 2.0,
            gcy - gh / 2.0,
            gcy + gh / 2.0,
        ];
        let clear = (0..2).all(|axis| {
            let (p_lo, p_hi) = (p[2 * axis], p[2 * axis + 1]);
            let (g_lo, g_hi) = (g[2 * axis], g[2 * axis + 1]);
            [p_lo - g_lo, p_lo - g_hi, p_hi - g_lo, p_hi - g_hi]
                .iter()
                .all(|d| d.abs() >= GRAD_TIE_MARGIN)
        });
        if clear {
            let pred = CenterBox::new(S::cast(pcx), S::cast(pcy), S::cast(pw), S::cast(ph));
            let gt = CenterBox::new(S::cast(gcx), S::cast(gcy), S::cast(gw), S::cast(gh));
            return (pred.unwrap(), gt.unwrap());
        }
    }
}

/// Compares analytic and central-difference gradients for both loss kinds
/// over `samples` random box pairs kept clear of corner ties.
pub fn gradient_check<S: Scalar>(samples: usize, eps: S, seed: u64) -> Result<GradCheckReport> {
    if eps <= S::zero() {
        return Err(Error::NonPositiveEpsilon(eps.as_f64()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for _ in 0..samples {
        let (pred, gt) = sample_checked_pair::<S>(&mut rng);
        for kind in [LossKind::Iou, LossKind::Diou] {
            let analytic = kind.gradient(&pred, &gt)?;
            let numeric = kind.finite_diff_gradient(&pred, &gt, eps)?;
            for (a, n) in analytic
                .components()
                .iter()
                .zip(numeric.components().iter())
            {
                let a = a.as_f64();
                let n = n.as_f64();
                let scale = a.abs().max(n.abs());
                if scale >= GRAD_SMALL_COMPONENT {
                    max_rel = max_rel.max((a - n).abs() / scale);
                } else {
                    max_abs = max_abs.max((a - n).abs());
                }
            }
        }
    }
    Ok(GradCheckReport {
        samples,
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        passed: max_rel <= GRAD_REL_TOL && max_abs <= GRAD_ABS_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cb(cx: f64, cy: f64, w: f64, h: f64) -> CenterBox<f64> {
        CenterBox::new(cx, cy, w, h).unwrap()
    }

    /// Corner-form helper mirroring the geometry tests.
    fn cb_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> CenterBox<f64> {
        crate::geometry::BBox::new(x1, y1, x2, y2)
            .unwrap()
            .to_center()
    }

    #[test]
    fn zero_loss_at_identity() {
        let b = cb(1.0, 1.0, 2.0, 2.0);
        assert_eq!(LossKind::Iou.loss(&b, &b).unwrap(), 0.0);
        assert_eq!(LossKind::Diou.loss(&b, &b).unwrap(), 0.0);
    }

    #[test]
    fn loss_examples() {
        let pred = cb_corners(0.0, 0.0, 2.0, 2.0);
        let gt = cb_corners(1.0, 1.0, 3.0, 3.0);
        let iou = LossKind::Iou.loss(&pred, &gt).unwrap();
        assert!((iou - 6.0 / 7.0).abs() < 1e-12);
        let diou = LossKind::Diou.loss(&pred, &gt).unwrap();
        assert!((diou - (6.0 / 7.0 + 1.0 / 9.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_zero_area_gt() {
        let pred = cb(0.0, 0.0, 1.0, 1.0);
        let flat = cb(0.0, 0.0, 1.0, 0.0);
        assert!(matches!(
            LossKind::Iou.loss(&pred, &flat),
            Err(Error::ZeroAreaGroundTruth)
        ));
        assert!(matches!(
            LossKind::Diou.gradient(&flat, &pred),
            Err(Error::ZeroAreaPrediction)
        ));
    }

    #[test]
    fn symmetric_stationary_point() {
        let b = cb(1.0, 1.0, 2.0, 2.0);
        let g = LossKind::Iou.gradient(&b, &b).unwrap();
        assert_eq!(g.d_cx, 0.0);
        assert_eq!(g.d_cy, 0.0);
    }

    #[test]
    fn disjoint_gradients() {
        let pred = cb_corners(0.0, 0.0, 1.0, 1.0);
        let gt = cb_corners(2.0, 0.0, 3.0, 1.0);

        let iou_grad = LossKind::Iou.gradient(&pred, &gt).unwrap();
        assert_eq!(iou_grad.d_cx, 0.0);
        assert_eq!(iou_grad.d_cy, 0.0);

        // d/dcx of 1 + (cx−2.5)²/((3.5−cx)²+1) at cx = 0.5
        let diou_grad = LossKind::Diou.gradient(&pred, &gt).unwrap();
        assert!((diou_grad.d_cx - (-0.16)).abs() < 1e-12);
        assert_eq!(diou_grad.d_cy, 0.0);
    }

    #[test]
    fn finite_diff_matches_disjoint_value() {
        let pred = cb_corners(0.0, 0.0, 1.0, 1.0);
        let gt = cb_corners(2.0, 0.0, 3.0, 1.0);
        let fd = LossKind::Diou
            .finite_diff_gradient(&pred, &gt, 1e-6)
            .unwrap();
        assert!((fd.d_cx - (-0.16)).abs() < 1e-6);
        assert!(fd.d_cy.abs() < 1e-6);
    }

    #[test]
    fn finite_diff_zero_at_identity() {
        let b = cb(5.0, 5.0, 4.0, 3.0);
        for kind in [LossKind::Iou, LossKind::Diou] {
            let fd = kind.finite_diff_gradient(&b, &b, 1e-6).unwrap();
            for c in fd.components() {
                assert!(c.abs() < 1e-6, "{kind}: {c}");
            }
        }
    }

    #[test]
    fn finite_diff_matches_analytic_on_overlap() {
        let pred = cb_corners(0.0, 0.0, 2.0, 2.0);
        let gt = cb_corners(1.0, 1.0, 3.0, 3.0);
        for kind in [LossKind::Iou, LossKind::Diou] {
            let a = kind.gradient(&pred, &gt).unwrap();
            let n = kind.finite_diff_gradient(&pred, &gt, 1e-6).unwrap();
            for (ac, nc) in a.components().iter().zip(n.components().iter()) {
                let scale = ac.abs().max(nc.abs()).max(1e-3);
                assert!((ac - nc).abs() / scale < 1e-5, "{kind}: {ac} vs {nc}");
            }
        }
    }

    #[test]
    fn rejects_non_positive_epsilon() {
        let b = cb(1.0, 1.0, 2.0, 2.0);
        assert!(matches!(
            LossKind::Iou.finite_diff_gradient(&b, &b, 0.0),
            Err(Error::NonPositiveEpsilon(_))
        ));
    }

    #[test]
    fn gradient_check_passes() {
        let report = gradient_check::<f64>(250, 1e-6, 7).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.max_rel_error <= GRAD_REL_TOL);
    }

    #[test]
    fn gradient_check_degrades_with_coarse_eps() {
        let fine = gradient_check::<f64>(100, 1e-6, 11).unwrap();
        let coarse = gradient_check::<f64>(100, 1e-1, 11).unwrap();
        assert!(coarse.max_rel_error > fine.max_rel_error);
    }

    #[test]
    fn gradient_check_vacuous_on_zero_samples() {
        let report = gradient_check::<f64>(0, 1e-6, 7).unwrap();
        assert!(report.passed);
        assert_eq!(report.samples, 0);
        assert_eq!(report.max_rel_error, 0.0);
    }

    #[test]
    fn f32_gradients_agree_with_coarser_oracle() {
        // single precision needs a larger step for the central difference
        let pred = CenterBox::<f32>::new(10.0, 10.0, 8.0, 6.0).unwrap();
        let gt = CenterBox::<f32>::new(12.0, 11.0, 6.0, 9.0).unwrap();
        for kind in [LossKind::Iou, LossKind::Diou] {
            let a = kind.gradient(&pred, &gt).unwrap();
            let n = kind.finite_diff_gradient(&pred, &gt, 1e-2f32).unwrap();
            for (ac, nc) in a.components().iter().zip(n.components().iter()) {
                assert!((ac - nc).abs() < 1e-2, "{kind}: {ac} vs {nc}");
            }
        }
    }

    #[test]
    fn loss_kind_tokens() {
        assert_eq!(LossKind::Iou.to_string(), "iou");
        assert_eq!("diou".parse::<LossKind>().unwrap(), LossKind::Diou);
        assert!("IoU".parse::<LossKind>().is_err());
    }

    #[test]
    fn dominance_and_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let (pred, gt) = sample_checked_pair::<f64>(&mut rng);
            let li = LossKind::Iou.loss(&pred, &gt).unwrap();
            let ld = LossKind::Diou.loss(&pred, &gt).unwrap();
            let penalty = pred.to_corner().diou_penalty(&gt.to_corner());
            assert!(ld >= li);
            assert!((ld - li - penalty).abs() < 1e-12);

            let s = 3.25;
            let scale = |b: &CenterBox<f64>| {
                CenterBox::new(b.cx() * s, b.cy() * s, b.w() * s, b.h() * s).unwrap()
            };
            let li_s = LossKind::Iou.loss(&scale(&pred), &scale(&gt)).unwrap();
            let ld_s = LossKind::Diou.loss(&scale(&pred), &scale(&gt)).unwrap();
            assert!((li - li_s).abs() <= 1e-9 * li.max(1.0));
            assert!((ld - ld_s).abs() <= 1e-9 * ld.max(1.0));
        }
    }
}
