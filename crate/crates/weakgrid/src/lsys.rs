//! Dense state-space systems with named channels.
//!
//! `LinearSystem` is the currency every other module trades in: device
//! models, the reduced network, assembled interconnections and closed loops
//! are all continuous-time quadruples (A, B, C, D) with labelled inputs,
//! outputs and states.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Continuous-time LTI system `x' = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub states: Vec<String>,
}

impl LinearSystem {
    /// Builds a system, checking dimension consistency and label uniqueness.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        inputs: Vec<String>,
        outputs: Vec<String>,
        states: Vec<String>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension("state map must be square".into()));
        }
        if b.nrows() != n || c.ncols() != n {
            return Err(Error::Dimension(format!(
                "input/output maps do not match {n} states"
            )));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::Dimension("feedthrough shape mismatch".into()));
        }
        if inputs.len() != b.ncols() || outputs.len() != c.nrows() || states.len() != n {
            return Err(Error::Dimension("channel label count mismatch".into()));
        }
        for (name, labels) in [("input", &inputs), ("output", &outputs)] {
            let mut seen = std::collections::HashSet::new();
            for l in labels.iter() {
                if !seen.insert(l.as_str()) {
                    return Err(Error::Dimension(format!("duplicate {name} label `{l}`")));
                }
            }
        }
        Ok(Self { a, b, c, d, inputs, outputs, states })
    }

    /// System with zero states (pure feedthrough).
    pub fn static_gain(d: DMatrix<f64>, inputs: Vec<String>, outputs: Vec<String>) -> Self {
        let n = 0;
        Self {
            a: DMatrix::zeros(n, n),
            b: DMatrix::zeros(n, d.ncols()),
            c: DMatrix::zeros(d.nrows(), n),
            d,
            inputs,
            outputs,
            states: Vec::new(),
        }
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_index(&self, label: &str) -> Result<usize> {
        self.inputs
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::MissingChannel(label.into()))
    }

    pub fn output_index(&self, label: &str) -> Result<usize> {
        self.outputs
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::MissingChannel(label.into()))
    }

    /// All eigenvalues of the state map.
    pub fn eigenvalues(&self) -> Vec<C64> {
        eigenvalues(&self.a)
    }

    /// Transfer matrix `C (sI - A)^{-1} B + D` at `s = j omega`.
    pub fn frequency_response(&self, omega: f64) -> Result<DMatrix<C64>> {
        self.response_at(C64::new(0.0, omega))
    }

    /// Transfer matrix at an arbitrary complex frequency.
    pub fn response_at(&self, s: C64) -> Result<DMatrix<C64>> {
        let n = self.order();
        let d_c = self.d.map(|x| C64::new(x, 0.0));
        if n == 0 {
            return Ok(d_c);
        }
        let mut m = self.a.map(|x| C64::new(-x, 0.0));
        for i in 0..n {
            m[(i, i)] += s;
        }
        let lu = m.lu();
        let b_c = self.b.map(|x| C64::new(x, 0.0));
        let x = lu
            .solve(&b_c)
            .ok_or_else(|| Error::Numerical(format!("(sI - A) singular at s = {s}")))?;
        let c_c = self.c.map(|x| C64::new(x, 0.0));
        Ok(&c_c * x + d_c)
    }

    /// Restricts the system to the given input/output channel labels.
    pub fn select(&self, inputs: &[&str], outputs: &[&str]) -> Result<Self> {
        let in_idx: Vec<usize> = inputs
            .iter()
            .map(|l| self.input_index(l))
            .collect::<Result<_>>()?;
        let out_idx: Vec<usize> = outputs
            .iter()
            .map(|l| self.output_index(l))
            .collect::<Result<_>>()?;
        let b = self.b.select_columns(&in_idx);
        let d_cols = self.d.select_columns(&in_idx);
        let c = self.c.select_rows(&out_idx);
        let d = d_cols.select_rows(&out_idx);
        LinearSystem::new(
            self.a.clone(),
            b,
            c,
            d,
            inputs.iter().map(|s| s.to_string()).collect(),
            outputs.iter().map(|s| s.to_string()).collect(),
            self.states.clone(),
        )
    }

    /// Largest real part over all eigenvalues; `-inf` for a static system.
    pub fn spectral_abscissa(&self) -> f64 {
        if self.order() == 0 {
            return f64::NEG_INFINITY;
        }
        self.eigenvalues()
            .iter()
            .map(|e| e.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Eigenvalues of a dense real matrix via the real Schur form.
///
/// The matrix is balanced (diagonal similarity) first; the assembled grid
/// models mix per-unit control states with rad/s network states, and the
/// unbalanced QR iteration stalls on them.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<C64> {
    let n = a.nrows();
    if n == 0 {
        return Vec::new();
    }
    let mut balanced = a.clone();
    nalgebra::linalg::balancing::balance_parlett_reinsch(&mut balanced);
    for (eps, iter_per_row) in [(f64::EPSILON, 60usize), (1e-13, 120), (1e-10, 200)] {
        if let Some(schur) = nalgebra::linalg::Schur::try_new(
            balanced.clone(),
            eps,
            iter_per_row.saturating_mul(n.max(8)),
        ) {
            return schur.complex_eigenvalues().iter().copied().collect();
        }
    }
    // Last resort: tiny random similarity jitter to break symmetry-induced
    // stalls, with a tolerance wide enough to converge.
    let jitter = 1e-11 * balanced.norm() / (n as f64);
    let mut perturbed = balanced;
    for i in 0..n {
        perturbed[(i, i)] += jitter * ((i % 7) as f64 - 3.0);
    }
    nalgebra::linalg::Schur::try_new(perturbed, 1e-9, 400 * n)
        .expect("Schur iteration failed even after balancing and jitter")
        .complex_eigenvalues()
        .iter()
        .copied()
        .collect()
}

/// Zero-order-hold discretization of `(A, B)` over one step `dt`.
///
/// Returns `(Phi, Gamma)` with `x+ = Phi x + Gamma u` for piecewise-constant
/// input. Computed from the exponential of the augmented matrix so a
/// singular `A` needs no special casing.
pub fn discretize_zoh(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let m = b.ncols();
    let mut aug = DMatrix::<f64>::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, m)).copy_from(b);
    let e = (aug * dt).exp();
    let phi = e.view((0, 0), (n, n)).into_owned();
    let gamma = e.view((0, n), (n, m)).into_owned();
    (phi, gamma)
}

/// Solves `A x = rhs` for complex matrices, with a structured error.
pub fn complex_solve(a: &DMatrix<C64>, rhs: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    a.clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::Numerical("singular complex system".into()))
}

/// Maximum singular value of a complex matrix (via the Gram matrix).
pub fn sigma_max(m: &DMatrix<C64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let g = m.adjoint() * m;
    // Hermitian PSD; power iteration is robust and dependency-free for the
    // small blocks used here.
    let n = g.nrows();
    let mut v = DVector::<C64>::from_element(n, C64::new(1.0, 0.0));
    let mut lambda = 0.0f64;
    for _ in 0..200 {
        let w = &g * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w / C64::new(norm, 0.0);
        let new_lambda = norm;
        let done = (new_lambda - lambda).abs() <= 1e-13 * new_lambda.max(1.0);
        v = next;
        lambda = new_lambda;
        if done {
            break;
        }
    }
    lambda.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simple_sys() -> LinearSystem {
        // x' = -x + u, y = x: 1/(s+1)
        LinearSystem::new(
            DMatrix::from_row_slice(1, 1, &[-1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::zeros(1, 1),
            vec!["u".into()],
            vec!["y".into()],
            vec!["x".into()],
        )
        .unwrap()
    }

    #[test]
    fn frequency_response_first_order() {
        let sys = simple_sys();
        let g = sys.frequency_response(1.0).unwrap();
        // 1/(1+j) = 0.5 - 0.5j
        assert!((g[(0, 0)].re - 0.5).abs() < 1e-12);
        assert!((g[(0, 0)].im + 0.5).abs() < 1e-12);
    }

    #[test]
    fn zoh_matches_scalar_exponential() {
        let a = DMatrix::from_row_slice(1, 1, &[-2.0]);
        let b = DMatrix::from_row_slice(1, 1, &[1.0]);
        let (phi, gamma) = discretize_zoh(&a, &b, 0.1);
        assert!((phi[(0, 0)] - (-0.2f64).exp()).abs() < 1e-12);
        // Gamma = (e^{a dt} - 1)/a
        assert!((gamma[(0, 0)] - ((-0.2f64).exp() - 1.0) / -2.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_labels_rejected() {
        let r = LinearSystem::new(
            DMatrix::zeros(0, 0),
            DMatrix::zeros(0, 2),
            DMatrix::zeros(1, 0),
            DMatrix::zeros(1, 2),
            vec!["u".into(), "u".into()],
            vec!["y".into()],
            vec![],
        );
        assert!(r.is_err());
    }

    #[test]
    fn sigma_max_of_identity() {
        let m = DMatrix::<C64>::identity(3, 3);
        assert!((sigma_max(&m) - 1.0).abs() < 1e-10);
    }
}
