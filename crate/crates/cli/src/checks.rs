//! Exact kernel identities, evaluated without randomness.

use lrp_core::kernel::{block_kernel_sum, closed_form_1d, kernel_value, probability_from_kernel, quadrature_value};
use lrp_core::renorm::block_edge_marginal;
use lrp_core::KernelSpec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

pub const CLOSED_FORM_TOLERANCE: f64 = 1e-10;
pub const IDENTITY_TOLERANCE: f64 = 1e-8;

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

/// Coarse displacements used by the block identities.
pub fn identity_displacements(d: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for w in [2i64, 3, 5] {
        let mut axis = vec![0; d];
        axis[0] = w;
        out.push(axis);
        if d > 1 {
            out.push(vec![w; d]);
        }
    }
    out
}

/// Closed form against quadrature for `k = 2..=64` in one dimension.
pub fn closed_form_check() -> Check {
    let worst = (2..=64u64)
        .map(|k| (closed_form_1d(k) - quadrature_value(&[k], 1e-13)).abs())
        .fold(0.0, f64::max);
    Check::new(
        "kernel closed form vs quadrature",
        worst <= CLOSED_FORM_TOLERANCE,
        format!("max abs error {worst:e} for k = 2..64"),
    )
}

/// `Σ_{x ∈ V_0^n, y ∈ V_w^n} J(y − x) = J(w)` and the matching edge marginal.
pub fn block_identity_checks(beta: f64) -> Vec<Check> {
    let mut sums = 0.0f64;
    let mut marginals = 0.0f64;
    let mut failure = None;
    for d in [1usize, 2] {
        let spec = KernelSpec::self_similar(d, beta).expect("valid kernel");
        for w in identity_displacements(d) {
            let exact = kernel_value(&spec, &w).ok().and_then(|j| j.finite());
            for n in [2u64, 3, 4] {
                match (exact, block_kernel_sum(&spec, n, &w)) {
                    (Some(j), Ok(s)) => sums = sums.max(relative(s, j)),
                    (_, Err(e)) => failure = Some(e.to_string()),
                    (None, _) => failure = Some(format!("J({w:?}) is not finite")),
                }
                let fine = kernel_value(&spec, &w).map(|j| probability_from_kernel(beta, j));
                match (fine, block_edge_marginal(&spec, n, &w)) {
                    (Ok(p), Ok(m)) if p > 0.0 => marginals = marginals.max(relative(m, p)),
                    (Ok(_), Ok(m)) => marginals = marginals.max(m.abs()),
                    (_, Err(e)) | (Err(e), _) => failure = Some(e.to_string()),
                }
            }
        }
    }
    let detail = |worst: f64| match &failure {
        Some(e) => format!("max rel error {worst:e}; {e}"),
        None => format!("max rel error {worst:e} over d in {{1,2}}, n in {{2,3,4}}, w in {{2,3,5}}"),
    };
    vec![
        Check::new(
            "block kernel sum equals coarse kernel",
            failure.is_none() && sums <= IDENTITY_TOLERANCE,
            detail(sums),
        ),
        Check::new(
            "block edge marginal equals p(w)",
            failure.is_none() && marginals <= IDENTITY_TOLERANCE,
            detail(marginals),
        ),
    ]
}

pub fn exact_checks(beta: f64) -> Vec<Check> {
    let mut checks = vec![closed_form_check()];
    checks.extend(block_identity_checks(beta));
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identities_hold() {
        for check in exact_checks(1.0) {
            assert!(check.passed, "{check:?}");
        }
    }

    #[test]
    fn displacements_have_far_sup_norm() {
        assert_eq!(identity_displacements(1), vec![vec![2], vec![3], vec![5]]);
        assert_eq!(identity_displacements(2).len(), 6);
    }
}
