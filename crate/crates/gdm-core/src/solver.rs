//! Convex optimization kernels: Euclidean projection onto the probability
//! simplex, evaluation of the per-constraint quadratic pieces
//! g(a) = 1/2 ||sum_i a_i y_i (x_i .* delta)||^2 + 1/(2C) a'a,
//! and the reduced min-max problem min_{a in A} max_t g_t(a).
//!
//! The min-max solver works on the equivalent concave dual
//! q(mu) = min_a sum_t mu_t g_t(a) over the piece-weight simplex: each outer
//! step solves the inner strongly convex problem with an accelerated
//! projected-gradient method, then moves mu toward the currently-max piece
//! (or away from the worst active piece) with an exact line search. The
//! duality gap theta - q(mu) certifies the returned tolerance. With a single
//! piece the same code path doubles as the squared-hinge SVM dual solver.

use serde::{Deserialize, Serialize};

use crate::data::SparseDataset;
use crate::error::{GdmError, Result};

/// Hard cap on accelerated-gradient steps for one inner solve.
const MAX_INNER_STEPS: usize = 10_000;
/// Safety cap on outer piece-weight updates.
const MAX_OUTER_STEPS: usize = 500;
/// Piece weights below this are treated as inactive.
const MU_FLOOR: f64 = 1e-9;

/// Euclidean projection onto A = { u | sum u_i = 1, u_i >= 0 }.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut shift = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (i as f64 + 1.0);
        if u - t > 0.0 {
            shift = t;
        }
    }
    v.iter().map(|&x| (x - shift).max(0.0)).collect()
}

/// One quadratic piece of the reduced problem: the dual objective restricted
/// to a constraint mask's active (support) features.
#[derive(Debug, Clone)]
pub struct QuadraticPiece<'a> {
    data: &'a SparseDataset,
    support: Vec<usize>,
    bias: bool,
}

impl<'a> QuadraticPiece<'a> {
    pub fn new(data: &'a SparseDataset, support: Vec<usize>) -> Self {
        QuadraticPiece {
            data,
            support,
            bias: false,
        }
    }

    /// Augment with a virtual constant feature (evaluation pathway only;
    /// selection never sees it).
    pub fn with_bias(mut self) -> Self {
        self.bias = true;
        self
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn data(&self) -> &SparseDataset {
        self.data
    }
}

struct SignedDual {
    signed: Vec<f64>,
    sum: f64,
    alpha_sq: f64,
}

fn signed_view(ds: &SparseDataset, alpha: &[f64]) -> SignedDual {
    let mut signed = Vec::with_capacity(alpha.len());
    let mut sum = 0.0;
    let mut alpha_sq = 0.0;
    for (i, &a) in alpha.iter().enumerate() {
        let s = a * ds.label(i);
        signed.push(s);
        sum += s;
        alpha_sq += a * a;
    }
    SignedDual {
        signed,
        sum,
        alpha_sq,
    }
}

/// Quadratic part 1/2 sum_j v_j^2 of one piece, where v_j is the
/// standardized feature j dotted with the signed dual.
fn piece_quad_value(piece: &QuadraticPiece, sd: &SignedDual) -> f64 {
    let mut q = 0.0;
    for &j in &piece.support {
        let v = piece
            .data
            .standardized_dot_with_sum(j, &sd.signed, sd.sum);
        q += v * v;
    }
    if piece.bias {
        q += sd.sum * sd.sum;
    }
    0.5 * q
}

/// Quadratic value of one piece while accumulating `weight` times its
/// gradient contribution into `(t, off, bias_acc)`; the full gradient is
/// grad_i = y_i * (t_i - off + bias_acc) + alpha_i / C.
fn piece_quad_value_grad(
    piece: &QuadraticPiece,
    sd: &SignedDual,
    weight: f64,
    t: &mut [f64],
    off: &mut f64,
    bias_acc: &mut f64,
) -> f64 {
    let mut q = 0.0;
    for &j in &piece.support {
        let st = piece.data.stats(j);
        if st.degenerate {
            continue;
        }
        let v = piece
            .data
            .standardized_dot_with_sum(j, &sd.signed, sd.sum);
        q += v * v;
        let scale = weight * v / st.centered_norm;
        for (i, raw) in piece.data.row(j).iter() {
            t[i] += scale * raw;
        }
        *off += scale * st.mean;
    }
    if piece.bias {
        q += sd.sum * sd.sum;
        *bias_acc += weight * sd.sum;
    }
    0.5 * q
}

/// Value and gradient of one piece's full objective g at `alpha`.
pub fn eval_piece(piece: &QuadraticPiece, alpha: &[f64], c_param: f64) -> (f64, Vec<f64>) {
    let ds = piece.data;
    let sd = signed_view(ds, alpha);
    let n = alpha.len();
    let mut t = vec![0.0; n];
    let mut off = 0.0;
    let mut bias_acc = 0.0;
    let quad = piece_quad_value_grad(piece, &sd, 1.0, &mut t, &mut off, &mut bias_acc);
    let value = quad + sd.alpha_sq / (2.0 * c_param);
    let grad: Vec<f64> = (0..n)
        .map(|i| ds.label(i) * (t[i] - off + bias_acc) + alpha[i] / c_param)
        .collect();
    (value, grad)
}

/// Full objective value of one piece at `alpha` (no gradient).
pub fn piece_value(piece: &QuadraticPiece, alpha: &[f64], c_param: f64) -> f64 {
    let sd = signed_view(piece.data, alpha);
    piece_quad_value(piece, &sd) + sd.alpha_sq / (2.0 * c_param)
}

fn mixture_value_grad(
    pieces: &[QuadraticPiece],
    mu: &[f64],
    alpha: &[f64],
    c_param: f64,
) -> (f64, Vec<f64>) {
    let ds = pieces[0].data;
    let sd = signed_view(ds, alpha);
    let n = alpha.len();
    let mut t = vec![0.0; n];
    let mut off = 0.0;
    let mut bias_acc = 0.0;
    let mut quad = 0.0;
    for (piece, &w) in pieces.iter().zip(mu) {
        if w <= 0.0 {
            continue;
        }
        quad += w * piece_quad_value_grad(piece, &sd, w, &mut t, &mut off, &mut bias_acc);
    }
    let value = quad + sd.alpha_sq / (2.0 * c_param);
    let grad: Vec<f64> = (0..n)
        .map(|i| ds.label(i) * (t[i] - off + bias_acc) + alpha[i] / c_param)
        .collect();
    (value, grad)
}

/// Simplex optimality residual: alpha'grad - min_i grad_i. Zero exactly at
/// the constrained minimum; also equals the primal-dual gap of the
/// recovered SVM for a single piece.
fn simplex_residual(alpha: &[f64], grad: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut min_g = f64::INFINITY;
    for (&a, &g) in alpha.iter().zip(grad) {
        dot += a * g;
        min_g = min_g.min(g);
    }
    (dot - min_g).max(0.0)
}

struct InnerResult {
    alpha: Vec<f64>,
    value: f64,
    residual: f64,
    steps: usize,
}

/// Projected gradient with backtracking for min over A of sum_t mu_t g_t.
///
/// The ridge term makes the objective 1/C-strongly convex while the
/// quadratic part has curvature at most the number of active features, so
/// plain projected gradient contracts linearly; no momentum bookkeeping is
/// needed for the accuracies used here.
fn inner_solve(
    pieces: &[QuadraticPiece],
    mu: &[f64],
    alpha0: &[f64],
    c_param: f64,
    tol: f64,
    lip: &mut f64,
) -> InnerResult {
    let eval = |a: &[f64]| mixture_value_grad(pieces, mu, a, c_param);

    let mut x = project_simplex(alpha0);
    let (mut fx, mut gx) = eval(&x);
    let mut l = lip.clamp(1e-10, 1e16);
    let mut steps = 0;

    loop {
        let r = simplex_residual(&x, &gx);
        if r <= tol || steps >= MAX_INNER_STEPS {
            *lip = l;
            return InnerResult {
                alpha: x,
                value: fx,
                residual: r,
                steps,
            };
        }
        steps += 1;

        // Backtracking on the quadratic upper model.
        let (p, fp, gp) = loop {
            let cand: Vec<f64> = x
                .iter()
                .zip(&gx)
                .map(|(&xi, &gi)| xi - gi / l)
                .collect();
            let p = project_simplex(&cand);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for i in 0..p.len() {
                let d = p[i] - x[i];
                lin += gx[i] * d;
                sq += d * d;
            }
            if sq == 0.0 {
                // Projected step is a fixed point: nothing left to move.
                *lip = l;
                return InnerResult {
                    alpha: x,
                    value: fx,
                    residual: r,
                    steps,
                };
            }
            let (fp, gp) = eval(&p);
            if fp <= fx + lin + 0.5 * l * sq + 1e-14 * fx.abs().max(1.0) || l >= 1e15 {
                break (p, fp, gp);
            }
            l *= 2.0;
        };

        x = p;
        fx = fp;
        gx = gp;
        l = (l * 0.7).max(1e-10);
    }
}

/// Solution of the reduced min-max problem.
#[derive(Debug, Clone)]
pub struct MinMaxSolution {
    /// Dual vector in A.
    pub alpha: Vec<f64>,
    /// max_t g_t(alpha).
    pub theta: f64,
    /// Convex weights over the pieces at optimality.
    pub mu: Vec<f64>,
    /// Certified optimality gap theta - q_lo at termination.
    pub kkt_residual: f64,
    /// Total accelerated-gradient steps spent.
    pub iterations: usize,
    /// Best upper value seen after each outer update (non-increasing).
    pub objective_trace: Vec<f64>,
}

fn piece_values(pieces: &[QuadraticPiece], alpha: &[f64], c_param: f64) -> Vec<f64> {
    let sd = signed_view(pieces[0].data, alpha);
    let ridge = sd.alpha_sq / (2.0 * c_param);
    pieces
        .iter()
        .map(|p| piece_quad_value(p, &sd) + ridge)
        .collect()
}

#[derive(Clone)]
struct DualPoint {
    mu: Vec<f64>,
    alpha: Vec<f64>,
    vals: Vec<f64>,
    theta: f64,
    q_lo: f64,
    residual: f64,
}

/// Minimize max_t g_t over the simplex A to within `eps_sub` on the
/// objective, certified by a duality gap.
///
/// Works on the concave dual q(mu) = min_a sum_t mu_t g_t(a) over the
/// piece-weight simplex. The inner minimum is 1/C-strongly convex, so q has
/// a Lipschitz gradient (the vector of piece values at the inner minimizer)
/// and accelerated projected ascent on mu converges geometrically in
/// practice. Every iterate carries the certificate
/// q_lo = F_mu(alpha) - residual <= q(mu) <= OPT <= theta(alpha),
/// and the solver stops when the incumbent's theta meets the best q_lo.
pub fn solve_minmax(
    pieces: &[QuadraticPiece],
    warm_start: Option<&[f64]>,
    c_param: f64,
    eps_sub: f64,
) -> Result<MinMaxSolution> {
    if pieces.is_empty() {
        return Err(GdmError::InvalidConfig("no pieces to solve over".into()));
    }
    if !(c_param > 0.0) || !(eps_sub > 0.0) {
        return Err(GdmError::InvalidConfig(
            "C and eps_sub must be positive".into(),
        ));
    }
    let n = pieces[0].data.n_samples();
    let uniform = vec![1.0 / n as f64; n];
    let alpha0 = warm_start.map(<[f64]>::to_vec).unwrap_or(uniform);
    if alpha0.len() != n {
        return Err(GdmError::DimensionMismatch {
            expected: n,
            got: alpha0.len(),
        });
    }

    let n_pieces = pieces.len();
    let mut lip = 1.0;
    let mut total_steps = 0usize;
    let budget = MAX_INNER_STEPS * 20;
    let mut trace = Vec::new();

    let eval_dual = |mu: &[f64],
                     warm: &[f64],
                     tol: f64,
                     lip: &mut f64,
                     steps: &mut usize|
     -> DualPoint {
        let inner = inner_solve(pieces, mu, warm, c_param, tol, lip);
        *steps += inner.steps.max(1);
        let vals = piece_values(pieces, &inner.alpha, c_param);
        let theta = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        DualPoint {
            mu: mu.to_vec(),
            alpha: inner.alpha,
            vals,
            theta,
            q_lo: inner.value - inner.residual,
            residual: inner.residual,
        }
    };

    let complementary = |pt: &DualPoint| {
        pt.mu
            .iter()
            .zip(&pt.vals)
            .all(|(&w, &v)| w <= 1e-6 || pt.theta - v <= 0.9 * eps_sub)
    };
    let finish = |pt: &DualPoint, gap: f64, steps: usize, trace: Vec<f64>| {
        let mut mu_out = pt.mu.clone();
        for w in &mut mu_out {
            if *w <= MU_FLOOR {
                *w = 0.0;
            }
        }
        let s: f64 = mu_out.iter().sum();
        for w in &mut mu_out {
            *w /= s;
        }
        MinMaxSolution {
            alpha: pt.alpha.clone(),
            theta: pt.theta,
            mu: mu_out,
            kkt_residual: gap.max(0.0),
            iterations: steps,
            objective_trace: trace,
        }
    };

    let tol0 = (0.1 * eps_sub).max(1e-15);
    let mu0 = vec![1.0 / n_pieces as f64; n_pieces];
    let mut cur = eval_dual(&mu0, &alpha0, tol0, &mut lip, &mut total_steps);

    // Single piece: the weight is fixed and the gap equals the inner
    // residual, so just drive the inner solver down.
    if n_pieces == 1 {
        let mut best_theta = f64::INFINITY;
        loop {
            best_theta = best_theta.min(cur.theta);
            trace.push(best_theta);
            if cur.residual <= 0.9 * eps_sub {
                let gap = cur.residual;
                return Ok(finish(&cur, gap, total_steps, trace));
            }
            if total_steps >= budget {
                break;
            }
            let tol = (cur.residual * 0.3).max(1e-15);
            let warm = cur.alpha.clone();
            cur = eval_dual(&[1.0], &warm, tol, &mut lip, &mut total_steps);
        }
        return Err(GdmError::NonConvergence {
            iterations: total_steps,
            residual: cur.residual,
            best_alpha: cur.alpha,
        });
    }

    // Weight ascent: move toward the max-value piece (Frank-Wolfe) or away
    // from the worst active piece, with an exact line search. Along any
    // segment the dual q is concave and its derivative at s is the plain
    // dot product of the direction with the piece values at the inner
    // minimizer, so the 1-D maximum is found by bisecting the derivative
    // sign. For a two-piece pool the first line search already spans the
    // whole weight simplex.
    let mut incumbent = cur.clone();
    let mut best_q_lo = cur.q_lo;
    let mut best_theta = f64::INFINITY;

    for _outer in 0..MAX_OUTER_STEPS {
        best_q_lo = best_q_lo.max(cur.q_lo);
        if cur.theta < incumbent.theta {
            incumbent = cur.clone();
        }
        best_theta = best_theta.min(incumbent.theta);
        trace.push(best_theta);

        let gap = incumbent.theta - best_q_lo;
        if gap <= 0.9 * eps_sub {
            if complementary(&incumbent) {
                return Ok(finish(&incumbent, gap, total_steps, trace));
            }
            // Certificate holds but a slack piece still carries weight:
            // verify the trimmed weights before accepting.
            let mut trimmed: Vec<f64> = incumbent
                .mu
                .iter()
                .zip(&incumbent.vals)
                .map(|(&w, &v)| {
                    if incumbent.theta - v > 0.45 * eps_sub {
                        0.0
                    } else {
                        w.max(MU_FLOOR)
                    }
                })
                .collect();
            let sum: f64 = trimmed.iter().sum();
            if sum > 0.0 {
                for w in &mut trimmed {
                    *w /= sum;
                }
                let warm = incumbent.alpha.clone();
                let pt = eval_dual(&trimmed, &warm, tol0, &mut lip, &mut total_steps);
                best_q_lo = best_q_lo.max(pt.q_lo);
                let gap_t = pt.theta - best_q_lo;
                if gap_t <= 0.9 * eps_sub && complementary(&pt) {
                    best_theta = best_theta.min(pt.theta);
                    trace.push(best_theta);
                    return Ok(finish(&pt, gap_t, total_steps, trace));
                }
                if pt.theta < incumbent.theta {
                    incumbent = pt;
                }
            }
        }
        if total_steps >= budget {
            break;
        }

        let floor = (1e-12 * incumbent.theta.abs()).max(1e-15);
        let tol = (gap * 0.02).clamp(floor, tol0);

        // Pairwise step: shift weight from the worst active piece straight
        // to the max-value piece. On a two-piece active face one exact line
        // search lands on the face optimum, which avoids the endgame zigzag
        // of plain toward-the-vertex steps.
        let t_fw = cur
            .vals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        let t_aw = cur
            .vals
            .iter()
            .enumerate()
            .filter(|&(i, _)| cur.mu[i] > MU_FLOOR)
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        let (dir, s_max): (Vec<f64>, f64) = if t_fw != t_aw {
            let d = (0..n_pieces)
                .map(|i| {
                    if i == t_fw {
                        1.0
                    } else if i == t_aw {
                        -1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            (d, cur.mu[t_aw])
        } else {
            // All weight already sits on the max piece: plain step toward it.
            let d = (0..n_pieces)
                .map(|i| if i == t_fw { 1.0 - cur.mu[i] } else { -cur.mu[i] })
                .collect();
            (d, 1.0)
        };
        let mu_at = |s: f64| -> Vec<f64> {
            let raw: Vec<f64> = cur
                .mu
                .iter()
                .zip(&dir)
                .map(|(&w, &d)| (w + s * d).max(0.0))
                .collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / sum).collect()
        };
        let slope = |pt: &DualPoint| -> f64 {
            dir.iter().zip(&pt.vals).map(|(&d, &v)| d * v).sum()
        };

        // Exact line search: bisect the sign of q'(s). The derivative at
        // s = 0 is nonnegative by the direction choice.
        let end = eval_dual(&mu_at(s_max), &cur.alpha.clone(), tol, &mut lip, &mut total_steps);
        let mut best = if end.q_lo >= cur.q_lo { end.clone() } else { cur.clone() };
        if slope(&end) < 0.0 {
            let (mut lo, mut hi) = (0.0f64, s_max);
            let mut lo_pt = cur.clone();
            let mut warm = end.alpha;
            for _bis in 0..60 {
                let mid = 0.5 * (lo + hi);
                let pt = eval_dual(&mu_at(mid), &warm, tol, &mut lip, &mut total_steps);
                warm = pt.alpha.clone();
                if slope(&pt) >= 0.0 {
                    lo = mid;
                    lo_pt = pt;
                } else {
                    hi = mid;
                }
                if lo_pt.q_lo > best.q_lo {
                    best = lo_pt.clone();
                }
                if lo_pt.theta < incumbent.theta {
                    incumbent = lo_pt.clone();
                }
                // Remaining 1-D improvement is bounded by slope * width.
                let bound = slope(&lo_pt).abs() * (hi - lo);
                if bound <= 0.02 * eps_sub || total_steps >= budget {
                    break;
                }
            }
        }
        if best.theta < incumbent.theta {
            incumbent = best.clone();
        }

        if best.q_lo <= best_q_lo {
            // No certified dual progress: tighten at the current weights or
            // stop if the tolerance floor is already reached.
            if cur.residual <= floor * 1.01 {
                break;
            }
            let warm = cur.alpha.clone();
            let mu_cur = cur.mu.clone();
            let tighter = (cur.residual * 0.1).max(floor);
            cur = eval_dual(&mu_cur, &warm, tighter, &mut lip, &mut total_steps);
        } else {
            cur = best;
        }
    }

    let gap = incumbent.theta - best_q_lo;
    Err(GdmError::NonConvergence {
        iterations: total_steps,
        residual: gap.max(incumbent.residual),
        best_alpha: incumbent.alpha,
    })
}

/// Linear classifier over a fixed feature subset, with the training-set
/// standardization statistics snapshotted for prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub features: Vec<usize>,
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_weight: Option<f64>,
    pub gamma: f64,
}

impl SvmModel {
    /// Raw margins w'x for each sample, standardizing with the stored
    /// training statistics.
    pub fn decision_values(&self, ds: &SparseDataset) -> Result<Vec<f64>> {
        if ds.n_samples() == 0 {
            return Err(GdmError::EmptyDataset);
        }
        if let Some(&bad) = self.features.iter().find(|&&j| j >= ds.n_features()) {
            return Err(GdmError::DimensionMismatch {
                expected: ds.n_features(),
                got: bad,
            });
        }
        let mut dv = vec![0.0; ds.n_samples()];
        let mut offset = 0.0;
        for (k, &j) in self.features.iter().enumerate() {
            let wj = self.weights[k] / self.scales[k];
            offset += wj * self.means[k];
            for (i, raw) in ds.row(j).iter() {
                dv[i] += wj * raw;
            }
        }
        let bias = self.bias_weight.unwrap_or(0.0);
        for v in &mut dv {
            *v = *v - offset + bias;
        }
        Ok(dv)
    }

    /// Sign predictions; a zero margin maps to +1.
    pub fn predict(&self, ds: &SparseDataset) -> Result<Vec<i8>> {
        Ok(self
            .decision_values(ds)?
            .into_iter()
            .map(|v| if v >= 0.0 { 1 } else { -1 })
            .collect())
    }
}

/// Recover the primal SVM weights from the single-piece dual solution:
/// w = sum_i alpha_i y_i (x_i .* delta) over the standardized view, with
/// gamma chosen so the recovered point is primal feasible.
pub fn recover_svm(piece: &QuadraticPiece, alpha: &[f64], c_param: f64) -> SvmModel {
    let ds = piece.data;
    let sd = signed_view(ds, alpha);
    let mut features = Vec::new();
    let mut weights = Vec::new();
    let mut means = Vec::new();
    let mut scales = Vec::new();
    for &j in &piece.support {
        let st = ds.stats(j);
        if st.degenerate {
            continue;
        }
        features.push(j);
        weights.push(ds.standardized_dot_with_sum(j, &sd.signed, sd.sum));
        means.push(st.mean);
        scales.push(st.centered_norm);
    }
    let mut model = SvmModel {
        features,
        weights,
        means,
        scales,
        bias_weight: piece.bias.then_some(sd.sum),
        gamma: 0.0,
    };
    let dv = model
        .decision_values(ds)
        .expect("training data always matches its own piece");
    model.gamma = dv
        .iter()
        .enumerate()
        .map(|(i, &v)| ds.label(i) * v + alpha[i] / c_param)
        .fold(f64::INFINITY, f64::min);
    model
}

/// Primal objective 1/2 ||w||^2 - gamma + C/2 sum xi_i^2 at the recovered
/// point with xi_i = alpha_i / C (feasible by the choice of gamma).
pub fn primal_objective(
    svm: &SvmModel,
    ds: &SparseDataset,
    alpha: &[f64],
    c_param: f64,
) -> Result<f64> {
    let w_sq: f64 = svm.weights.iter().map(|w| w * w).sum::<f64>()
        + svm.bias_weight.map_or(0.0, |b| b * b);
    let xi_sq: f64 = alpha.iter().map(|a| (a / c_param).powi(2)).sum();
    let _ = svm.decision_values(ds)?;
    Ok(0.5 * w_sq - svm.gamma + 0.5 * c_param * xi_sq)
}

/// Dual objective -g(alpha) of the single-piece problem.
pub fn dual_objective(piece: &QuadraticPiece, alpha: &[f64], c_param: f64) -> f64 {
    -piece_value(piece, alpha, c_param)
}
