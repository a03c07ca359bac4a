//! ADMM splitting for the trace program.
//!
//! The symmetric variable lives in scaled-triangle coordinates `x = svec(Q)`.
//! Two copies are kept: a free copy `x̂` that carries the objective and the
//! linear map, and a constrained pair `(Z, z)` with `Z ∈ S₊` and `z` in the
//! fit ball. Consensus `x̂ = Z`, `M x̂ = z` is enforced with scaled duals
//! `(U, u)`. Both blocks share one penalty, so the linear system
//! `(I + MᵀM) x̂ = …` never changes and is factored once.
//!
//! Data are normalized before iterating: `M` to unit spectral norm and the
//! command to unit length. Since the feasible set is a cone intersected with a
//! ball, this only rescales the optimal `Q` by a positive constant.

use nalgebra::{DMatrix, DVector};

use super::{smat, svec, SdpSolution, SdpStatus, SolverSettings, TraceProblem, TraceSolver};
use crate::linalg::{self, Cholesky, SymMatrix};

const RELAXATION: f64 = 1.6;
const CHECK_EVERY: usize = 10;
const ADAPT_EVERY: usize = 50;
// Penalty updates grow sparser so that ρ eventually freezes.
const ADAPT_GROWTH: f64 = 0.25;
const ABS_TOLERANCE: f64 = 1e-12;
// Normalized margins for the infeasibility certificate.
const CERT_CONE_TOL: f64 = 1e-7;
pub(super) const CERT_BALL_MARGIN: f64 = 1e-6;
// Largest multiplicative nudge accepted when pulling Q back inside the ball.
const MAX_FEASIBILITY_SCALE: f64 = 1e-4;

/// Embedded first-order backend, registered as `"admm"`.
#[derive(Debug, Clone, Copy, Default)]
pub struct AdmmSolver;

impl TraceSolver for AdmmSolver {
    fn name(&self) -> &'static str {
        "admm"
    }

    fn solve(&self, problem: &TraceProblem, settings: &SolverSettings) -> SdpSolution {
        let f_norm = problem.f_cmd().norm();
        // Q = 0 is feasible and Tr ≥ 0 on the cone, so it is optimal.
        if problem.epsilon() >= f_norm {
            return SdpSolution::zero(problem);
        }
        let Some((scaled, unscale)) = normalize(problem) else {
            return SdpSolution::failed(problem, SdpStatus::Infeasible, 0);
        };

        let outcome = match iterate(&scaled, settings) {
            Ok(outcome) => outcome,
            Err(iterations) => {
                return SdpSolution::failed(problem, SdpStatus::NumericalFailure, iterations)
            }
        };

        match outcome {
            Outcome::Infeasible { iterations } => {
                SdpSolution::failed(problem, SdpStatus::Infeasible, iterations)
            }
            Outcome::Finished { z, gap, iterations, converged } => {
                let z = match pull_into_ball(&scaled, z) {
                    Some(z) => z,
                    None if converged => {
                        return SdpSolution::failed(problem, SdpStatus::NumericalFailure, iterations)
                    }
                    None => return SdpSolution::failed(problem, SdpStatus::Infeasible, iterations),
                };
                let q = SymMatrix::symmetrize(&(smat(&z, scaled.n) * unscale));
                let residual = problem.residual(&q);
                let status = if converged && residual <= problem.epsilon() * (1.0 + 1e-6) {
                    SdpStatus::Optimal
                } else {
                    SdpStatus::NumericalFailure
                };
                SdpSolution {
                    trace: q.trace(),
                    q,
                    status,
                    residual,
                    gap_estimate: gap,
                    iterations,
                }
            }
        }
    }
}

pub(super) struct Scaled {
    pub(super) map: DMatrix<f64>,
    pub(super) center: DVector<f64>,
    pub(super) radius: f64,
    pub(super) n: usize,
}

/// Normalized data and the factor mapping a normalized `Q` back. `None` when
/// the map vanishes. Requires a nonzero command.
pub(super) fn normalize(problem: &TraceProblem) -> Option<(Scaled, f64)> {
    let f_norm = problem.f_cmd().norm();
    let raw_map = problem.symmetric_map();
    let sigma = spectral_norm(&raw_map);
    if sigma == 0.0 {
        return None;
    }
    let scaled = Scaled {
        map: &raw_map / sigma,
        center: problem.f_cmd() / f_norm,
        radius: problem.epsilon() / f_norm,
        n: problem.n(),
    };
    Some((scaled, f_norm / sigma))
}

enum Outcome {
    Finished { z: DVector<f64>, gap: f64, iterations: usize, converged: bool },
    Infeasible { iterations: usize },
}

fn iterate(p: &Scaled, settings: &SolverSettings) -> Result<Outcome, usize> {
    let dim = p.n * (p.n + 1) / 2;
    let m = &p.map;
    let mt = m.transpose();
    let kkt = DMatrix::<f64>::identity(dim, dim) + &mt * m;
    let chol = Cholesky::new(&kkt).map_err(|_| 0usize)?;
    let c = svec(&DMatrix::identity(p.n, p.n));
    let c_norm = c.norm();

    let mut big_z = DVector::<f64>::zeros(dim);
    let mut big_u = DVector::<f64>::zeros(dim);
    let mut z = p.center.clone();
    let mut u = DVector::<f64>::zeros(m.nrows());
    let mut rho = 1.0;
    let mut y_prev = DVector::<f64>::zeros(m.nrows());

    let mut last_gap = f64::NAN;
    let mut next_adapt = ADAPT_EVERY;
    for k in 1..=settings.max_iterations {
        let rhs = (&big_z - &big_u) + &mt * (&z - &u) - &c / rho;
        let x_hat = chol.solve(&rhs);
        let mx = m * &x_hat;

        let x_relaxed = &x_hat * RELAXATION + &big_z * (1.0 - RELAXATION);
        let z_relaxed = &mx * RELAXATION + &z * (1.0 - RELAXATION);

        let z_cone = project_psd(&(&x_relaxed + &big_u), p.n).map_err(|_| k)?;
        let z_ball = project_ball(&(&z_relaxed + &u), &p.center, p.radius);

        big_u += &x_relaxed - &z_cone;
        u += &z_relaxed - &z_ball;

        let check = k % CHECK_EVERY == 0 || k == settings.max_iterations;
        if check {
            let r_prim = ((&x_hat - &z_cone).norm_squared() + (&mx - &z_ball).norm_squared()).sqrt();
            let r_dual = rho * (&(&z_cone - &big_z) + &mt * (&z_ball - &z)).norm();
            let prim_scale = (x_hat.norm_squared() + mx.norm_squared())
                .sqrt()
                .max((z_cone.norm_squared() + z_ball.norm_squared()).sqrt());
            let mtu = &mt * &u;
            let dual_scale = c_norm.max(rho * big_u.norm()).max(rho * mtu.norm());

            // y = −ρu is the multiplier of the ball constraint.
            let y = &u * -rho;
            let primal_obj = c.dot(&z_cone);
            let dual_obj = p.center.dot(&y) - p.radius * y.norm();
            last_gap = (primal_obj - dual_obj).abs() / (1.0 + primal_obj.abs() + dual_obj.abs());

            let converged = r_prim <= ABS_TOLERANCE + settings.tol * prim_scale
                && r_dual <= ABS_TOLERANCE + settings.tol * dual_scale;
            big_z = z_cone;
            z = z_ball;
            if converged {
                return Ok(Outcome::Finished { z: big_z, gap: last_gap, iterations: k, converged: true });
            }

            if certifies_infeasibility(p, &mt, &(&y - &y_prev)) {
                return Ok(Outcome::Infeasible { iterations: k });
            }
            y_prev = y;

            if k >= next_adapt && r_dual > 0.0 && r_prim > 0.0 {
                next_adapt = k + ((k as f64 * ADAPT_GROWTH) as usize).max(ADAPT_EVERY);
                let ratio = ((r_prim / prim_scale.max(1e-300)) / (r_dual / dual_scale)).sqrt();
                if !(0.2..=5.0).contains(&ratio) {
                    let new_rho = (rho * ratio).clamp(1e-6, 1e6);
                    big_u *= rho / new_rho;
                    u *= rho / new_rho;
                    y_prev = &u * -new_rho;
                    rho = new_rho;
                }
            }
        } else {
            big_z = z_cone;
            z = z_ball;
        }
    }
    Ok(Outcome::Finished {
        z: big_z,
        gap: last_gap,
        iterations: settings.max_iterations,
        converged: false,
    })
}

// A direction d with Mᵀd ⪯ 0 and fᵀd − ε‖d‖ > 0 separates the ball from the
// image of the cone.
fn certifies_infeasibility(p: &Scaled, mt: &DMatrix<f64>, dy: &DVector<f64>) -> bool {
    let len = dy.norm();
    if !(len > 1e-10) {
        return false;
    }
    let d = dy / len;
    p.center.dot(&d) - p.radius >= CERT_BALL_MARGIN && separates_cone(mt, &d, p.n)
}

/// Whether the unit direction `d` satisfies `smat(Mᵀd) ⪯ 0` to certificate precision.
pub(super) fn separates_cone(mt: &DMatrix<f64>, d: &DVector<f64>, n: usize) -> bool {
    let cone_side = SymMatrix::symmetrize(&smat(&(mt * d), n));
    match linalg::sym_eig(&cone_side) {
        Ok(pairs) => pairs.last().map_or(false, |top| top.value <= CERT_CONE_TOL),
        Err(_) => false,
    }
}

// Rescales z by t ≈ 1 so that M z lands inside the ball; the cone is invariant
// under positive scaling. Returns None when no small nudge is enough.
fn pull_into_ball(p: &Scaled, z: DVector<f64>) -> Option<DVector<f64>> {
    let v = &p.map * &z;
    let dist = (&v - &p.center).norm();
    if dist <= p.radius {
        return Some(z);
    }
    let vv = v.norm_squared();
    if vv == 0.0 {
        return None;
    }
    let vf = v.dot(&p.center);
    let disc = vf * vf - vv * (p.center.norm_squared() - p.radius * p.radius);
    if disc < 0.0 {
        return None;
    }
    let lo = (vf - disc.sqrt()) / vv;
    let hi = (vf + disc.sqrt()) / vv;
    // Aim slightly inside the interval to survive rounding.
    let margin = 1e-12 * (hi - lo);
    let t = 1.0_f64.clamp(lo + margin, hi - margin);
    if (t - 1.0).abs() > MAX_FEASIBILITY_SCALE {
        return None;
    }
    Some(z * t)
}

fn project_ball(v: &DVector<f64>, center: &DVector<f64>, radius: f64) -> DVector<f64> {
    let d = v - center;
    let len = d.norm();
    if len <= radius {
        v.clone()
    } else {
        center + d * (radius / len)
    }
}

pub(super) fn project_psd(v: &DVector<f64>, n: usize) -> crate::error::Result<DVector<f64>> {
    let x = SymMatrix::symmetrize(&smat(v, n));
    let pairs = linalg::sym_eig(&x)?;
    let mut out = DMatrix::zeros(n, n);
    for pair in pairs.iter().filter(|p| p.value > 0.0) {
        out += &pair.vector * pair.vector.transpose() * pair.value;
    }
    Ok(svec(&out))
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    let mut v = DVector::from_element(gram.nrows(), 1.0).normalize();
    let mut lambda = 0.0;
    for _ in 0..200 {
        let w = &gram * &v;
        let len = w.norm();
        if len == 0.0 {
            return 0.0;
        }
        v = w / len;
        if (len - lambda).abs() <= 1e-12 * len {
            lambda = len;
            break;
        }
        lambda = len;
    }
    lambda.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    #[test]
    fn psd_projection_clips_negative_eigenvalues() {
        let x = dmatrix![1.0, 0.0; 0.0, -2.0];
        let p = smat(&project_psd(&svec(&x), 2).unwrap(), 2);
        assert_abs_diff_eq!(p, dmatrix![1.0, 0.0; 0.0, 0.0], epsilon = 1e-15);
    }

    #[test]
    fn ball_projection() {
        let c = DVector::from_vec(vec![1.0, 0.0]);
        let inside = DVector::from_vec(vec![1.2, 0.1]);
        assert_eq!(project_ball(&inside, &c, 0.5), inside);
        let out = project_ball(&DVector::from_vec(vec![3.0, 0.0]), &c, 0.5);
        assert_abs_diff_eq!(out, DVector::from_vec(vec![1.5, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = dmatrix![3.0, 0.0; 0.0, -4.0; 0.0, 0.0];
        assert_abs_diff_eq!(spectral_norm(&m), 4.0, epsilon = 1e-9);
    }
}
