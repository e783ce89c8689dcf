use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::DriftModel;
use crate::rng::path_rng;

/// A probed point where a hypothesis failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub hypothesis: &'static str,
    pub value: f64,
    pub witness: Vec<f64>,
}

/// Outcome of probing the dissipativity and growth hypotheses on random states.
///
/// `L₁` must be positive, so a nonpositive eigenvalue or ratio is always a violation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub l1_claimed: f64,
    /// Smallest eigenvalue of the symmetric part of `Σ θ_j ∇f_j(x)` over the probes.
    pub min_eigenvalue: f64,
    pub min_eigenvalue_at: Vec<f64>,
    /// Smallest `⟨x − y, (f(x) − f(y))θ⟩ / |x − y|²` over the probe pairs.
    pub min_dissipativity_ratio: f64,
    /// Largest `(|f(x)| + |∇f(x)|) / (L₂(1 + |x|^γ))`.
    pub max_growth_ratio: f64,
    pub probes: usize,
    pub violations: Vec<Violation>,
}

impl Certificate {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

const EIG_SLACK: f64 = 1e-8;

fn min_sym_eigenvalue(a: &[f64], m: usize) -> f64 {
    match m {
        1 => a[0],
        2 => {
            let (p, q, r) = (a[0], 0.5 * (a[1] + a[2]), a[3]);
            let mean = 0.5 * (p + r);
            mean - (0.25 * (p - r) * (p - r) + q * q).sqrt()
        }
        _ => {
            let s = DMatrix::from_fn(m, m, |i, j| 0.5 * (a[i * m + j] + a[j * m + i]));
            s.symmetric_eigenvalues().min()
        }
    }
}

/// Probe the hypotheses at `probe_count` Gaussian points of scale `probe_radius`,
/// plus any extra states (e.g. the visited states of a path, row-major `k × m`).
pub fn certify_hypotheses(
    model: &DriftModel,
    probe_count: usize,
    probe_radius: f64,
    seed: u64,
    extra_states: &[f64],
) -> Certificate {
    let m = model.m();
    let l = model.l();
    let l1 = model.l1();
    let (l2, gamma) = model.growth();
    let mut rng = path_rng(seed, 0);
    let mut points: Vec<Vec<f64>> = (0..probe_count)
        .map(|_| (0..m).map(|_| probe_radius * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    points.extend(extra_states.chunks_exact(m).map(<[f64]>::to_vec));

    let mut cert = Certificate {
        l1_claimed: l1,
        min_eigenvalue: f64::INFINITY,
        min_eigenvalue_at: vec![],
        min_dissipativity_ratio: f64::INFINITY,
        max_growth_ratio: 0.0,
        probes: points.len(),
        violations: vec![],
    };
    let mut a = vec![0.0; m * m];
    let mut g = vec![0.0; m * m];
    let mut f = vec![0.0; m * l];
    let mut worst_growth = None;
    for x in &points {
        model.jacobian_into(x, &mut a);
        let ev = min_sym_eigenvalue(&a, m);
        if ev < cert.min_eigenvalue {
            cert.min_eigenvalue = ev;
            cert.min_eigenvalue_at = x.clone();
        }
        if ev < l1 - EIG_SLACK || ev <= 0.0 {
            cert.violations.push(Violation {
                hypothesis: "jacobian eigenvalue below L1",
                value: ev,
                witness: x.clone(),
            });
        }

        model.f_into(x, &mut f);
        let fnorm = f.iter().map(|v| v * v).sum::<f64>();
        let mut gsq = 0.0;
        for j in 0..l {
            model.grad_f_into(j, x, &mut g);
            gsq += g.iter().map(|v| v * v).sum::<f64>();
        }
        let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ratio = (fnorm.sqrt() + gsq.sqrt()) / (l2 * (1.0 + xnorm.powf(gamma)));
        if ratio > cert.max_growth_ratio {
            cert.max_growth_ratio = ratio;
            worst_growth = Some(x.clone());
        }
    }
    if cert.max_growth_ratio > 1.0 {
        cert.violations.push(Violation {
            hypothesis: "polynomial growth bound",
            value: cert.max_growth_ratio,
            witness: worst_growth.unwrap_or_default(),
        });
    }

    // consecutive probes as pairs
    let mut fx = vec![0.0; m];
    let mut fy = vec![0.0; m];
    for pair in points.windows(2) {
        let (x, y) = (&pair[0], &pair[1]);
        let dist_sq: f64 = x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum();
        if dist_sq == 0.0 {
            continue;
        }
        model.drift_into(x, &mut fx);
        model.drift_into(y, &mut fy);
        let inner: f64 = (0..m).map(|r| (x[r] - y[r]) * (fx[r] - fy[r])).sum();
        let ratio = inner / dist_sq;
        if ratio < cert.min_dissipativity_ratio {
            cert.min_dissipativity_ratio = ratio;
        }
        if ratio < l1 - EIG_SLACK * (1.0 + l1.abs()) || ratio <= 0.0 {
            let mut witness = x.clone();
            witness.extend_from_slice(y);
            cert.violations.push(Violation {
                hypothesis: "one-sided dissipativity",
                value: ratio,
                witness,
            });
        }
    }
    cert
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::ModelKind;

    #[test]
    fn linear_certificate() {
        let c = certify_hypotheses(&DriftModel::fou(1.0, 1.0), 200, 2.0, 7, &[]);
        assert!(c.passes());
        assert!((c.min_eigenvalue - 1.0).abs() < 1e-15);
        assert!((c.min_dissipativity_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_cubic_is_certified_with_l1_one() {
        let model = DriftModel::new(ModelKind::Cubic, 1, vec![1.0, 1.0], vec![1.0], 1).unwrap();
        let c = certify_hypotheses(&model, 500, 3.0, 11, &[0.0]);
        assert!(c.passes(), "{:?}", c.violations);
        assert_eq!(c.l1_claimed, 1.0);
        assert!((c.min_eigenvalue - 1.0).abs() < 1e-12);
        assert!(c.min_dissipativity_ratio >= 1.0);
    }

    #[test]
    fn coupled_model_passes() {
        let model = DriftModel::new(ModelKind::Coupled2d, 2, vec![1.0], vec![1.0, 0.0, 0.0, 1.0], 2).unwrap();
        let c = certify_hypotheses(&model, 500, 3.0, 5, &[]);
        assert!(c.passes(), "{:?}", c.violations);
    }

    #[test]
    fn sign_flip_is_flagged() {
        let c = certify_hypotheses(&DriftModel::fou(-1.0, 1.0), 20, 1.0, 3, &[]);
        assert!(!c.passes());
        let v = c
            .violations
            .iter()
            .find(|v| v.hypothesis == "one-sided dissipativity")
            .unwrap();
        assert!(v.value < 0.0);
        assert_eq!(v.witness.len(), 2);
    }

    #[test]
    fn symmetric_part_eigenvalue() {
        // [[2, 3], [-1, 2]] has symmetric part [[2, 1], [1, 2]]
        assert!((min_sym_eigenvalue(&[2.0, 3.0, -1.0, 2.0], 2) - 1.0).abs() < 1e-15);
        let a = [3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0];
        assert!((min_sym_eigenvalue(&a, 3) - 1.0).abs() < 1e-12);
    }
}
