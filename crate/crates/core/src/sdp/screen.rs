//! Screening of fit tolerances that no Gram matrix can meet.
//!
//! `dist(f, M(S₊))` does not depend on ε, so one projection per command rules
//! out the whole infeasible part of a sweep. The bound is certified with the
//! same separating-direction test the ADMM backend uses.

use nalgebra::DVector;

use super::admm::{self, CERT_BALL_MARGIN};
use super::TraceProblem;

const MAX_ITERATIONS: usize = 2000;
const CHECK_EVERY: usize = 10;
// Stop once the certified bound is this close to the achieved distance.
const BRACKET_TOLERANCE: f64 = 1e-6;

/// Largest `r` such that every `ε < r` is certified infeasible for the map and
/// command of `problem`; its ε is ignored. Zero when nothing can be ruled out.
///
/// Runs accelerated projected gradient on `½‖M x − f‖²` over the cone. At the
/// minimizer the unit residual `d` satisfies `Mᵀd ⪯ 0` and `fᵀd = dist`, and
/// any such `d` separates the cone image from every ball of radius `< fᵀd`.
pub fn unreachable_radius(problem: &TraceProblem) -> f64 {
    let f_norm = problem.f_cmd().norm();
    if f_norm == 0.0 {
        return 0.0;
    }
    // A vanishing map only reaches the origin.
    let Some((p, _)) = admm::normalize(problem) else {
        return f_norm;
    };
    let m = &p.map;
    let mt = m.transpose();
    let mut x = DVector::<f64>::zeros(m.ncols());
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut best = 0.0_f64;

    // ‖M‖ = 1 after normalization, so a unit step is safe.
    for k in 1..=MAX_ITERATIONS {
        let grad = &mt * (m * &y - &p.center);
        let Ok(x_next) = admm::project_psd(&(&y - grad), p.n) else {
            break;
        };
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let step = &x_next - &x;
        // Restart momentum when it points uphill.
        if (&y - &x_next).dot(&step) > 0.0 {
            t = 1.0;
            y = x_next.clone();
        } else {
            y = &x_next + &step * ((t - 1.0) / t_next);
            t = t_next;
        }
        x = x_next;

        if k % CHECK_EVERY == 0 {
            let r = &p.center - m * &x;
            let dist = r.norm();
            if dist <= 1e-10 {
                return 0.0;
            }
            let d = r / dist;
            if admm::separates_cone(&mt, &d, p.n) {
                let lower = p.center.dot(&d);
                best = best.max(lower - CERT_BALL_MARGIN);
                if dist - lower <= BRACKET_TOLERANCE {
                    break;
                }
            }
        }
    }
    best.max(0.0) * f_norm
}
