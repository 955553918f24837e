#![allow(dead_code)]

use rand::Rng;
use underlay_core::matrix::{blend_gaussian, gaussian_complex, ComplexMatrix};
use underlay_core::sensing::{
    asymptotic_covariance, estimate_pu_state, extract_null_space, sample_covariance, SensingConfig,
};
use underlay_core::sim::{beamform, leakage};
use underlay_core::traffic::{PuLinkState, TrafficModel};

/// Sum over every explicit path of length `steps` that never touches `avoid`.
pub fn taboo_by_paths(
    m: &TrafficModel,
    from: PuLinkState,
    to: PuLinkState,
    avoid: PuLinkState,
    steps: usize,
) -> f64 {
    fn walk(
        m: &TrafficModel,
        at: PuLinkState,
        to: PuLinkState,
        avoid: PuLinkState,
        left: usize,
    ) -> f64 {
        if at == avoid {
            return 0.0;
        }
        if left == 0 {
            return if at == to { 1.0 } else { 0.0 };
        }
        PuLinkState::ALL
            .iter()
            .map(|&next| m.prob(at, next) * walk(m, next, to, avoid, left - 1))
            .sum()
    }
    walk(m, from, to, avoid, steps)
}

/// Largest |matrix product - path enumeration| over all triples and step counts.
pub fn worst_taboo_gap(m: &TrafficModel, max_steps: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for &from in &PuLinkState::ALL {
        for &to in &PuLinkState::ALL {
            for &avoid in &PuLinkState::ALL {
                for steps in 0..=max_steps {
                    let a = m.taboo_prob(from, to, avoid, steps);
                    let b = taboo_by_paths(m, from, to, avoid, steps);
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    worst
}

pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn age<R: Rng + ?Sized>(g: &ComplexMatrix, alpha: f64, tau: u64, rng: &mut R) -> ComplexMatrix {
    let mut g = g.clone();
    let fresh = (1.0 - alpha * alpha).sqrt();
    for _ in 0..tau {
        blend_gaussian(&mut g, alpha, fresh, rng);
    }
    g
}

/// Unit-power leakage ||G_tau^H v||^2 when v is the beamformer built on the
/// exact null space of G_0, one sample per trial.
pub fn stale_null_leakage<R: Rng + ?Sized>(
    alpha: f64,
    tau: u64,
    m_s: usize,
    m_p: usize,
    n: usize,
    rng: &mut R,
) -> Vec<f64> {
    let cfg = SensingConfig::default();
    (0..n)
        .map(|_| {
            let g0 = gaussian_complex(m_s, m_p, rng);
            let a = extract_null_space(&asymptotic_covariance(&g0, &cfg), m_p, 0)
                .unwrap()
                .basis;
            let h = gaussian_complex(m_s, m_s, rng);
            let g_rx = gaussian_complex(m_s, m_p, rng);
            let b = extract_null_space(&asymptotic_covariance(&g_rx, &cfg), m_p, 0)
                .unwrap()
                .basis;
            let v = beamform(&h, &a, &b).unwrap().v;
            leakage(1.0, &age(&g0, alpha, tau, rng), &v)
        })
        .collect()
}

pub struct StaleTestStats {
    pub errors: usize,
    pub trials: usize,
    /// Mean unit-power leakage into the true receiver.
    pub mean_leakage: f64,
}

/// Two primaries a and b, both last captured `tau` slots ago from N-sample
/// covariances; a's capture is the most recent reference. With equal
/// priors either a transmits again or b does. The secondary tests the
/// reference against the current covariance and precodes with the null
/// space of whichever primary it believes is receiving.
pub fn stale_test_oracle<R: Rng + ?Sized>(
    cfg: &SensingConfig,
    alpha: f64,
    tau: u64,
    m_s: usize,
    m_p: usize,
    n: usize,
    rng: &mut R,
) -> StaleTestStats {
    let mut errors = 0;
    let mut leak_sum = 0.0;
    for _ in 0..n {
        let a0 = gaussian_complex(m_s, m_p, rng);
        let b0 = gaussian_complex(m_s, m_p, rng);
        let null_a = extract_null_space(&sample_covariance(&a0, cfg, rng), m_p, 0).unwrap();
        let null_b = extract_null_space(&sample_covariance(&b0, cfg, rng), m_p, 0).unwrap();
        let a_now = age(&a0, alpha, tau, rng);
        let b_now = age(&b0, alpha, tau, rng);
        let same = rng.random_bool(0.5);
        let tx_now = if same { &a_now } else { &b_now };
        let cov_now = sample_covariance(tx_now, cfg, rng);
        let est = estimate_pu_state(&null_a, PuLinkState::Pu1Tx, &cov_now, cfg, alpha, tau);
        let said_same = est.state == PuLinkState::Pu1Tx;
        errors += (said_same != same) as usize;
        // believed receiver is b when a is believed to transmit
        let precoder = if said_same {
            &null_b.basis
        } else {
            &null_a.basis
        };
        let receiver_now = if same { &b_now } else { &a_now };
        let h = gaussian_complex(m_s, m_s, rng);
        let eye = ComplexMatrix::identity(m_s);
        let v = beamform(&h, precoder, &eye).unwrap().v;
        leak_sum += leakage(1.0, receiver_now, &v);
    }
    StaleTestStats {
        errors,
        trials: n,
        mean_leakage: leak_sum / n as f64,
    }
}
