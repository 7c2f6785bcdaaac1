//! Network reduction and grid-strength indicators.
//!
//! The transmission grid is described by its branch susceptances and a
//! uniform resistance-to-inductance ratio. Passive nodes are eliminated by
//! a Schur complement on the susceptance Laplacian, the infinite bus is
//! grounded by deleting its row and column, and the grid-strength report
//! (gSCR, participation factors, aggregate STATCOM quantities) follows from
//! the eigenstructure of the power-weighted reduced susceptance matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsys::LinearSystem;

/// Role of a node in the study network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Ibr,
    Statcom,
    Passive,
    InfiniteBus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
}

/// Branch between two nodes with positive per-unit susceptance `1/X`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    pub from: String,
    pub to: String,
    pub susceptance: f64,
}

/// Static description of the grid: nodes, branches, uniform R/L ratio and
/// rated angular frequency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkModel {
    pub nodes: Vec<Node>,
    pub branches: Vec<Branch>,
    /// Uniform line R/L ratio in 1/s.
    pub tau: f64,
    /// Rated synchronous angular frequency in rad/s.
    pub omega0: f64,
}

impl NetworkModel {
    /// Checks the structural invariants: positive susceptances, resolvable
    /// branch endpoints, exactly one infinite bus, and a connected graph.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidNetwork("no nodes".into()));
        }
        let mut ids = std::collections::HashMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if ids.insert(node.id.clone(), i).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate node id `{}`", node.id)));
            }
        }
        let inf_count = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::InfiniteBus)
            .count();
        if inf_count != 1 {
            return Err(Error::InvalidNetwork(format!(
                "expected exactly one infinite bus, found {inf_count}"
            )));
        }
        if self.tau < 0.0 || !self.tau.is_finite() {
            return Err(Error::InvalidNetwork("tau must be finite and >= 0".into()));
        }
        if self.omega0 <= 0.0 {
            return Err(Error::InvalidNetwork("omega0 must be positive".into()));
        }
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for br in &self.branches {
            let a = *ids
                .get(&br.from)
                .ok_or_else(|| Error::InvalidNetwork(format!("branch references unknown node `{}`", br.from)))?;
            let b = *ids
                .get(&br.to)
                .ok_or_else(|| Error::InvalidNetwork(format!("branch references unknown node `{}`", br.to)))?;
            if a == b {
                return Err(Error::InvalidNetwork(format!("self-loop at `{}`", br.from)));
            }
            if !(br.susceptance > 0.0) || !br.susceptance.is_finite() {
                return Err(Error::InvalidNetwork(format!(
                    "branch {} - {} must have positive susceptance",
                    br.from, br.to
                )));
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        // Connectivity from the infinite bus.
        let start = self
            .nodes
            .iter()
            .position(|n| n.kind == NodeKind::InfiniteBus)
            .unwrap();
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidNetwork(format!(
                "node `{}` is not connected to the infinite bus",
                self.nodes[i].id
            )));
        }
        Ok(())
    }

    /// Node ids in canonical order: IBRs, then STATCOMs, then passive, then
    /// the infinite bus.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        for kind in [NodeKind::Ibr, NodeKind::Statcom, NodeKind::Passive, NodeKind::InfiniteBus] {
            for (i, n) in self.nodes.iter().enumerate() {
                if n.kind == kind {
                    order.push(i);
                }
            }
        }
        order
    }

    pub fn ibr_ids(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Ibr)
            .map(|n| n.id.as_str())
            .collect()
    }

    pub fn statcom_ids(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Statcom)
            .map(|n| n.id.as_str())
            .collect()
    }

    /// Full susceptance Laplacian in canonical node order.
    fn laplacian(&self) -> DMatrix<f64> {
        let order = self.canonical_order();
        let pos: std::collections::HashMap<&str, usize> = order
            .iter()
            .enumerate()
            .map(|(canon, &orig)| (self.nodes[orig].id.as_str(), canon))
            .collect();
        let n = self.nodes.len();
        let mut l = DMatrix::zeros(n, n);
        for br in &self.branches {
            let a = pos[br.from.as_str()];
            let b = pos[br.to.as_str()];
            l[(a, a)] += br.susceptance;
            l[(b, b)] += br.susceptance;
            l[(a, b)] -= br.susceptance;
            l[(b, a)] -= br.susceptance;
        }
        l
    }
}

/// Node-reduced network: device nodes only, infinite bus grounded.
#[derive(Debug, Clone)]
pub struct ReducedNetwork {
    /// (n+k) x (n+k) reduced susceptance matrix over IBR and STATCOM nodes.
    pub b_red: DMatrix<f64>,
    /// Number of IBR nodes.
    pub n: usize,
    /// Number of STATCOM nodes.
    pub k: usize,
    /// n x n matrix after folding the STATCOM block: `B11 - B12 B22^{-1} B21`.
    pub b_redn: DMatrix<f64>,
    /// Reduced coupling of each device node to the infinite-bus voltage
    /// (entries of the grounded Laplacian column, all <= 0).
    pub inf_coupling: DVector<f64>,
    /// Device-node ids in canonical order (IBRs then STATCOMs).
    pub node_ids: Vec<String>,
}

impl ReducedNetwork {
    pub fn b11(&self) -> DMatrix<f64> {
        self.b_red.view((0, 0), (self.n, self.n)).into_owned()
    }
    pub fn b12(&self) -> DMatrix<f64> {
        self.b_red.view((0, self.n), (self.n, self.k)).into_owned()
    }
    pub fn b21(&self) -> DMatrix<f64> {
        self.b_red.view((self.n, 0), (self.k, self.n)).into_owned()
    }
    pub fn b22(&self) -> DMatrix<f64> {
        self.b_red.view((self.n, self.n), (self.k, self.k)).into_owned()
    }
}

/// Eliminates passive nodes and grounds the infinite bus.
pub fn kron_reduce(net: &NetworkModel) -> Result<ReducedNetwork> {
    net.validate()?;
    let order = net.canonical_order();
    let n = net.nodes.iter().filter(|x| x.kind == NodeKind::Ibr).count();
    let k = net.nodes.iter().filter(|x| x.kind == NodeKind::Statcom).count();
    let n_dev = n + k;
    let n_total = net.nodes.len();
    let n_grounded = n_total - 1; // infinite bus deleted
    let l = net.laplacian();

    // Grounded Laplacian and its coupling column to the infinite bus.
    let lg = l.view((0, 0), (n_grounded, n_grounded)).into_owned();
    let inf_col = l
        .view((0, n_grounded), (n_grounded, 1))
        .into_owned()
        .column(0)
        .into_owned();

    // Schur complement over the passive block.
    let q = n_grounded - n_dev;
    let (b_red, inf_coupling) = if q == 0 {
        (lg.clone(), inf_col.clone())
    } else {
        let l_dd = lg.view((0, 0), (n_dev, n_dev)).into_owned();
        let l_dp = lg.view((0, n_dev), (n_dev, q)).into_owned();
        let l_pd = lg.view((n_dev, 0), (q, n_dev)).into_owned();
        let l_pp = lg.view((n_dev, n_dev), (q, q)).into_owned();
        let lu = l_pp.lu();
        let x = lu.solve(&l_pd).ok_or_else(|| Error::SingularReduction {
            nodes: order[n_dev..n_grounded]
                .iter()
                .map(|&i| net.nodes[i].id.clone())
                .collect(),
        })?;
        let inf_p = inf_col.rows(n_dev, q).into_owned();
        let y = lu.solve(&inf_p).ok_or_else(|| Error::SingularReduction {
            nodes: order[n_dev..n_grounded]
                .iter()
                .map(|&i| net.nodes[i].id.clone())
                .collect(),
        })?;
        let b_red = &l_dd - &l_dp * x;
        let inf_red = inf_col.rows(0, n_dev).into_owned() - &l_dp * y;
        (b_red, inf_red)
    };

    // Fold the STATCOM block per the reduced-susceptance definition.
    let b_redn = if k == 0 {
        b_red.clone()
    } else {
        let b11 = b_red.view((0, 0), (n, n)).into_owned();
        let b12 = b_red.view((0, n), (n, k)).into_owned();
        let b21 = b_red.view((n, 0), (k, n)).into_owned();
        let b22 = b_red.view((n, n), (k, k)).into_owned();
        let x = b22.lu().solve(&b21).ok_or_else(|| Error::SingularReduction {
            nodes: net.statcom_ids().iter().map(|s| s.to_string()).collect(),
        })?;
        b11 - b12 * x
    };

    let node_ids = order[..n_dev]
        .iter()
        .map(|&i| net.nodes[i].id.clone())
        .collect();

    Ok(ReducedNetwork { b_red, n, k, b_redn, inf_coupling, node_ids })
}

/// Dispatch point: per-IBR active power and per-STATCOM reactive current.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatingCondition {
    /// Per-IBR active power output, system base, each > 0.
    pub p_e: Vec<f64>,
    /// Per-STATCOM reactive current, own base, each in [-1, 1].
    pub i_qs: Vec<f64>,
    /// Rated IBR capacities, system base.
    pub s_b: Vec<f64>,
    /// Rated STATCOM capacities, system base.
    pub s_bs: Vec<f64>,
}

impl OperatingCondition {
    pub fn validate(&self) -> Result<()> {
        if self.p_e.len() != self.s_b.len() || self.i_qs.len() != self.s_bs.len() {
            return Err(Error::InvalidOperatingCondition(
                "p_e/s_b or i_qs/s_bs length mismatch".into(),
            ));
        }
        for (i, (&p, &s)) in self.p_e.iter().zip(&self.s_b).enumerate() {
            if !(p > 0.0) || p > s * (1.0 + 1e-12) {
                return Err(Error::InvalidOperatingCondition(format!(
                    "p_e[{i}] = {p} must lie in (0, s_b = {s}]"
                )));
            }
        }
        for (j, &iq) in self.i_qs.iter().enumerate() {
            if !(iq.abs() <= 1.0) {
                return Err(Error::InvalidOperatingCondition(format!(
                    "i_qs[{j}] = {iq} outside [-1, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Rated condition: every IBR at capacity.
    pub fn rated(s_b: Vec<f64>, s_bs: Vec<f64>, i_qs: Vec<f64>) -> Self {
        Self { p_e: s_b.clone(), i_qs, s_b, s_bs }
    }

    /// Uniformly scales the active-power dispatch.
    pub fn scaled_power(&self, alpha: f64) -> Self {
        Self {
            p_e: self.p_e.iter().map(|p| p * alpha).collect(),
            ..self.clone()
        }
    }
}

/// Grid-strength quantities at one operating condition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridStrengthReport {
    pub gscr: f64,
    /// Smallest eigenvalue of `P_e^{-1} B_redn`; equals `gscr`.
    pub lambda1: f64,
    /// Left eigenvector, normalized so that `u1^T v1 = 1`, entries positive.
    pub u1: Vec<f64>,
    /// Right eigenvector, same normalization.
    pub v1: Vec<f64>,
    /// IBR participation factors `p1_i = v1_i u1_i`, summing to one.
    pub p1: Vec<f64>,
    /// STATCOM participation factors, all nonnegative.
    pub p2: Vec<f64>,
    /// Aggregate STATCOM participation.
    pub p_sigma: f64,
    /// Participation-weighted average STATCOM reactive current.
    pub iq_sigma: f64,
    /// Set when the smallest eigenvalue is non-simple within tolerance;
    /// participation factors are then unreliable.
    pub degenerate: bool,
    /// Set when `p_sigma` vanished and `iq_sigma` was defined as zero.
    pub no_statcom_participation: bool,
}

/// Relative gap under which the smallest eigenvalue counts as degenerate.
const DEGENERACY_REL_TOL: f64 = 1e-8;

/// Computes gSCR, eigenvectors and participation factors at a dispatch.
pub fn grid_strength(red: &ReducedNetwork, oc: &OperatingCondition) -> Result<GridStrengthReport> {
    oc.validate()?;
    if oc.p_e.len() != red.n || oc.i_qs.len() != red.k {
        return Err(Error::Dimension(format!(
            "operating condition sized {}/{} vs network {}/{}",
            oc.p_e.len(),
            oc.i_qs.len(),
            red.n,
            red.k
        )));
    }
    let n = red.n;
    let sqrt_p: DVector<f64> = DVector::from_iterator(n, oc.p_e.iter().map(|p| p.sqrt()));
    // Symmetric similarity P^{-1/2} B_redn P^{-1/2}: same spectrum as
    // P^{-1} B_redn but amenable to the symmetric eigensolver.
    let mut m = red.b_redn.clone();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] /= sqrt_p[i] * sqrt_p[j];
        }
    }
    m = (&m + m.transpose()) * 0.5;
    let eig = m.symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lambda1 = eig.eigenvalues[idx[0]];
    let degenerate = if n > 1 {
        let lambda2 = eig.eigenvalues[idx[1]];
        (lambda2 - lambda1).abs() <= DEGENERACY_REL_TOL * lambda1.abs().max(1e-300)
    } else {
        false
    };

    let mut w: DVector<f64> = eig.eigenvectors.column(idx[0]).into_owned();
    if w.sum() < 0.0 {
        w.neg_mut();
    }
    let mut degenerate = degenerate;
    if w.iter().any(|&x| x <= 0.0) {
        // Perron-type positivity fails only in (near-)degenerate cases.
        degenerate = true;
    }
    w /= w.norm();

    let u1: Vec<f64> = (0..n).map(|i| w[i] * sqrt_p[i]).collect();
    let v1: Vec<f64> = (0..n).map(|i| w[i] / sqrt_p[i]).collect();
    let p1: Vec<f64> = (0..n).map(|i| w[i] * w[i]).collect();

    // Extended eigenvector tails over STATCOM nodes.
    let p2 = if red.k > 0 {
        let b21 = red.b21();
        let b22 = red.b22();
        let lu = b22.lu();
        let v1_vec = DVector::from_vec(v1.clone());
        let u_over_p: DVector<f64> =
            DVector::from_iterator(n, u1.iter().zip(&oc.p_e).map(|(u, p)| u / p));
        let tail_v = -(lu
            .solve(&(&b21 * v1_vec))
            .ok_or_else(|| Error::Numerical("singular STATCOM block".into()))?);
        let tail_u = -(lu
            .solve(&(&b21 * u_over_p))
            .ok_or_else(|| Error::Numerical("singular STATCOM block".into()))?);
        (0..red.k)
            .map(|j| oc.s_bs[j] * tail_u[j] * tail_v[j])
            .collect::<Vec<f64>>()
    } else {
        Vec::new()
    };
    let p_sigma: f64 = p2.iter().sum();
    let (iq, zero_flag) = iq_sigma(&p2, &oc.i_qs)?;

    Ok(GridStrengthReport {
        gscr: lambda1,
        lambda1,
        u1,
        v1,
        p1,
        p2,
        p_sigma,
        iq_sigma: iq,
        degenerate,
        no_statcom_participation: zero_flag,
    })
}

/// Participation-weighted average of STATCOM reactive currents.
///
/// Returns the average together with a flag marking the degenerate
/// zero-participation case, where the value is defined as zero.
pub fn iq_sigma(p2: &[f64], i_qs: &[f64]) -> Result<(f64, bool)> {
    if p2.len() != i_qs.len() {
        return Err(Error::Dimension("p2 and i_qs length mismatch".into()));
    }
    if p2.iter().any(|&p| p < -1e-12) {
        return Err(Error::InvalidOperatingCondition(
            "negative STATCOM participation factor".into(),
        ));
    }
    let p_sigma: f64 = p2.iter().sum();
    if p_sigma <= 0.0 {
        return Ok((0.0, true));
    }
    let num: f64 = p2.iter().zip(i_qs).map(|(p, iq)| p * iq).sum();
    Ok((num / p_sigma, false))
}

/// State-space realization of the dynamic network factor `B_red (x) gamma(s)`.
///
/// Inputs are the stacked dq node-voltage deviations (plus the infinite-bus
/// voltage deviation on the trailing `vinf_d`/`vinf_q` channels), outputs the
/// stacked dq currents drawn into the network. Each 2x2 block of the
/// transfer matrix from node voltages equals `b_ij * gamma(j omega)`.
pub fn network_dynamics(red: &ReducedNetwork, tau: f64, omega0: f64) -> LinearSystem {
    let m = red.n + red.k;
    let nx = 2 * m;
    let mut a = DMatrix::zeros(nx, nx);
    for i in 0..m {
        a[(2 * i, 2 * i)] = -tau;
        a[(2 * i + 1, 2 * i + 1)] = -tau;
        // omega0 * R90 with R90 = [[0, 1], [-1, 0]]
        a[(2 * i, 2 * i + 1)] = omega0;
        a[(2 * i + 1, 2 * i)] = -omega0;
    }
    let mut b = DMatrix::zeros(nx, nx + 2);
    for i in 0..m {
        for j in 0..m {
            b[(2 * i, 2 * j)] = omega0 * red.b_red[(i, j)];
            b[(2 * i + 1, 2 * j + 1)] = omega0 * red.b_red[(i, j)];
        }
        b[(2 * i, nx)] = omega0 * red.inf_coupling[i];
        b[(2 * i + 1, nx + 1)] = omega0 * red.inf_coupling[i];
    }
    let c = DMatrix::identity(nx, nx);
    let d = DMatrix::zeros(nx, nx + 2);
    let mut inputs = Vec::with_capacity(nx + 2);
    let mut outputs = Vec::with_capacity(nx);
    let mut states = Vec::with_capacity(nx);
    for id in &red.node_ids {
        inputs.push(format!("v_{id}_d"));
        inputs.push(format!("v_{id}_q"));
        outputs.push(format!("inet_{id}_d"));
        outputs.push(format!("inet_{id}_q"));
        states.push(format!("xnet_{id}_d"));
        states.push(format!("xnet_{id}_q"));
    }
    inputs.push("vinf_d".into());
    inputs.push("vinf_q".into());
    LinearSystem::new(a, b, c, d, inputs, outputs, states)
        .expect("network realization dimensions are consistent by construction")
}

/// Closed-form network factor `gamma(s)` evaluated at `s = j omega`.
pub fn gamma_at(omega: f64, tau: f64, omega0: f64) -> nalgebra::Matrix2<crate::lsys::C64> {
    use crate::lsys::C64;
    let s = C64::new(tau, omega); // s + tau with s = j omega
    let denom = (s * s) / omega0 + omega0;
    let f = denom.inv();
    nalgebra::Matrix2::new(f * s, f * omega0, -f * omega0, f * s)
}
