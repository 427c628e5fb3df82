//! Kernel checks shared by the property and acceptance targets.
#![allow(dead_code)]

use periodic_silp::basis::MonomialBasis;
use periodic_silp::control::FeedbackLaw;
use periodic_silp::simulate::{dopri5, IntegratorConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64], margin: f64) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(&a, &b)| {
            let w = b - a;
            rng.gen_range(a + margin * w..b - margin * w)
        })
        .collect()
}

/// Worst relative mismatch between analytic basis gradients and central
/// differences, over `per_index` random interior points for every index.
pub fn gradient_fd_error(basis: &MonomialBasis, per_index: usize, seed: u64) -> f64 {
    let sb = basis.problem().state_box();
    let (lo, hi) = (sb.lower().to_vec(), sb.upper().to_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for i in 1..=basis.len() {
        for _ in 0..per_index {
            let y = random_state(&mut rng, &lo, &hi, 0.01);
            let g = basis.eval_grad_phi(i, &y).unwrap();
            let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-3);
            for j in 0..y.len() {
                let h = 1e-6 * (hi[j] - lo[j]);
                let (mut yp, mut ym) = (y.clone(), y.clone());
                yp[j] += h;
                ym[j] -= h;
                let fd = (basis.eval_phi(i, &yp).unwrap() - basis.eval_phi(i, &ym).unwrap()) / (2.0 * h);
                worst = worst.max((fd - g[j]).abs() / scale);
            }
        }
    }
    worst
}

/// Largest control difference between the closed-form law and the numeric
/// box minimizer over `samples` random states. States where the numeric
/// minimizer reports several near-optimal controls are skipped and counted.
pub fn feedback_agreement(closed: &FeedbackLaw, samples: usize, seed: u64) -> (f64, usize) {
    let numeric = FeedbackLaw::numeric(closed.psi().clone());
    let sb = closed.problem().state_box();
    let (lo, hi) = (sb.lower().to_vec(), sb.upper().to_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut skipped) = (0.0f64, 0);
    for _ in 0..samples {
        let y = random_state(&mut rng, &lo, &hi, 0.0);
        let b = numeric.minimize(&y);
        if b.multimodal {
            skipped += 1;
            continue;
        }
        let a = closed.minimize(&y);
        for (x, z) in a.u.iter().zip(&b.u) {
            worst = worst.max((x - z).abs());
        }
    }
    (worst, skipped)
}

/// Least-squares slope of `-log(error)` against `log(steps)` for one turn of
/// the rotation field, sweeping the tolerances over several decades.
pub fn rotation_observed_order() -> f64 {
    let rhs = |_t: f64, y: &[f64], out: &mut [f64]| {
        out[0] = -y[1];
        out[1] = y[0];
    };
    let t_end = 2.0 * std::f64::consts::PI;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 0..8 {
        let tol = 1e-4 * 0.5f64.powi(2 * k);
        let cfg = IntegratorConfig {
            rtol: tol,
            atol: tol,
            ..Default::default()
        };
        let sol = dopri5(&rhs, 0.0, &[1.0, 0.0], t_end, &cfg, &mut |_| Ok(()));
        assert!(sol.error.is_none());
        let err = ((sol.y_end[0] - 1.0).powi(2) + sol.y_end[1].powi(2)).sqrt();
        xs.push((sol.steps.len() as f64).ln());
        ys.push(-err.ln());
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
