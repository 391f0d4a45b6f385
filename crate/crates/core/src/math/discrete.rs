use crate::{Error, Result};

/// A joint distribution over finitely many discrete variables, stored as a
/// flat row-major probability table.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    support_sizes: Vec<usize>,
    table: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(support_sizes: Vec<usize>, table: Vec<f64>) -> Result<Self> {
        if support_sizes.is_empty() || support_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidInput("support sizes must be positive".into()));
        }
        let n: usize = support_sizes.iter().product();
        if table.len() != n {
            return Err(Error::InvalidInput(format!(
                "table has {} entries, supports require {}",
                table.len(),
                n
            )));
        }
        if table.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidInput("probability table has negative or non-finite mass".into()));
        }
        let total: f64 = table.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("table sums to {total}, not 1 within 1e-12")));
        }
        Ok(Self { support_sizes, table })
    }

    pub fn support_sizes(&self) -> &[usize] {
        &self.support_sizes
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }
}

/// `KL(p || q)` in nats. Returns `+inf` when `q` has zero mass where `p` does
/// not (absolute-continuity failure is reported, not raised).
pub fn discrete_kl(p: &DiscreteJoint, q: &DiscreteJoint) -> Result<f64> {
    if p.support_sizes != q.support_sizes {
        return Err(Error::InvalidInput(format!(
            "support mismatch: {:?} vs {:?}",
            p.support_sizes, q.support_sizes
        )));
    }
    Ok(kl_slices(&p.table, &q.table))
}

/// Jensen-Shannon divergence, computed as
/// `(KL(p||m) + KL(q||m)) / 2` with `m = (p + q) / 2`. Bounded by `ln 2`.
pub fn discrete_jsd(p: &DiscreteJoint, q: &DiscreteJoint) -> Result<f64> {
    if p.support_sizes != q.support_sizes {
        return Err(Error::InvalidInput(format!(
            "support mismatch: {:?} vs {:?}",
            p.support_sizes, q.support_sizes
        )));
    }
    Ok(jsd_slices(&p.table, &q.table))
}

pub(crate) fn kl_slices(p: &[f64], q: &[f64]) -> f64 {
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return f64::INFINITY;
            }
            kl += pi * (pi / qi).ln();
        }
    }
    kl
}

pub(crate) fn jsd_slices(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(&a, &b)| 0.5 * (a + b)).collect();
    0.5 * (kl_slices(p, &m) + kl_slices(q, &m))
}
