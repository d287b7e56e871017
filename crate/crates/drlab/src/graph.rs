//! Graph states, the comb graph behind the dual-rail encoding, and the
//! single-qubit Clifford vertex operators.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{self, cr, CMat, CVec, ONE, ZERO};
use crate::states::{MultimodeState, SubsystemLabel};

/// Index into the 24-element single-qubit Clifford group table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalClifford(pub u8);

impl LocalClifford {
    pub const IDENTITY: LocalClifford = LocalClifford(0);

    pub fn matrix(self) -> &'static CMat {
        &clifford_table()[self.0 as usize]
    }

    pub fn hadamard() -> LocalClifford {
        LocalClifford(*hadamard_index() as u8)
    }

    pub fn pauli_x() -> LocalClifford {
        LocalClifford(*pauli_x_index() as u8)
    }
}

fn canonical_phase(m: &CMat) -> CMat {
    let mut out = m.clone();
    for k in 0..4 {
        let z = out[(k % 2, k / 2)];
        if z.norm() > 1e-9 {
            let corr = z.conj() / z.norm();
            out *= C64::from(corr);
            break;
        }
    }
    out
}

fn mat_key(m: &CMat) -> [i64; 8] {
    let mut key = [0i64; 8];
    for (i, z) in m.iter().enumerate() {
        key[2 * i] = (z.re * 1e9).round() as i64;
        key[2 * i + 1] = (z.im * 1e9).round() as i64;
    }
    key
}

/// The 24 single-qubit Cliffords modulo global phase, enumerated by a
/// breadth-first closure over the H and S generators starting at identity.
/// The enumeration is deterministic, so indices are stable.
fn clifford_table() -> &'static Vec<CMat> {
    static TABLE: OnceLock<Vec<CMat>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = CMat::from_row_slice(2, 2, &[cr(s), cr(s), cr(s), cr(-s)]);
        let sg = CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, C64::new(0.0, 1.0)]);
        let mut table = vec![canonical_phase(&CMat::identity(2, 2))];
        let mut seen: BTreeSet<[i64; 8]> = table.iter().map(mat_key).collect();
        let mut frontier = table.clone();
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for m in &frontier {
                for g in [&h, &sg] {
                    let cand = canonical_phase(&(g * m));
                    let key = mat_key(&cand);
                    if seen.insert(key) {
                        table.push(cand.clone());
                        next.push(cand);
                    }
                }
            }
            frontier = next;
        }
        assert_eq!(table.len(), 24);
        table
    })
}

fn find_index(target: &CMat) -> usize {
    let key = mat_key(&canonical_phase(target));
    clifford_table()
        .iter()
        .position(|m| mat_key(m) == key)
        .expect("matrix not in the Clifford table")
}

fn hadamard_index() -> &'static usize {
    static IDX: OnceLock<usize> = OnceLock::new();
    IDX.get_or_init(|| {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        find_index(&CMat::from_row_slice(2, 2, &[cr(s), cr(s), cr(s), cr(-s)]))
    })
}

fn pauli_x_index() -> &'static usize {
    static IDX: OnceLock<usize> = OnceLock::new();
    IDX.get_or_init(|| find_index(&linalg::pauli(1)))
}

/// Vertex/edge structure with per-vertex local Clifford tags.
#[derive(Debug, Clone)]
pub struct GraphState {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    vop: Vec<LocalClifford>,
}

impl GraphState {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            edges: BTreeSet::new(),
            vop: vec![LocalClifford::IDENTITY; n],
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<()> {
        if a == b {
            return Err(Error::InvalidArgument(format!("self-loop at vertex {a}")));
        }
        if a >= self.n || b >= self.n {
            return Err(Error::InvalidArgument(format!(
                "edge ({a},{b}) out of range for {} vertices",
                self.n
            )));
        }
        self.edges.insert((a.min(b), a.max(b)));
        Ok(())
    }

    pub fn set_vop(&mut self, vertex: usize, vop: LocalClifford) -> Result<()> {
        if vop.0 >= 24 {
            return Err(Error::InvalidArgument(format!(
                "vop index {} outside the 24-element Clifford group",
                vop.0
            )));
        }
        if vertex >= self.n {
            return Err(Error::InvalidArgument(format!("vertex {vertex} out of range")));
        }
        self.vop[vertex] = vop;
        Ok(())
    }

    pub fn vop(&self, vertex: usize) -> LocalClifford {
        self.vop[vertex]
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == v {
                    Some(b)
                } else if b == v {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Stabilizer generator X_v prod_{u in N(v)} Z_u of the bare graph state
    /// (vops not applied).
    pub fn stabilizer_generator(&self, v: usize) -> CMat {
        let dims = vec![2usize; self.n];
        let mut op = linalg::op_on(&dims, v, &linalg::pauli(1));
        for u in self.neighbors(v) {
            op = op * linalg::op_on(&dims, u, &linalg::pauli(3));
        }
        op
    }
}

/// Comb graph of the dual-rail encoding: rung edges (2k, 2k+1) and backbone
/// edges (2k+1, 2k+3).
pub fn make_comb_graph(n_logical: usize) -> Result<GraphState> {
    if n_logical < 1 {
        return Err(Error::InvalidArgument("n_logical must be >= 1".into()));
    }
    let mut g = GraphState::new(2 * n_logical);
    for k in 0..n_logical {
        g.add_edge(2 * k, 2 * k + 1)?;
        if k + 1 < n_logical {
            g.add_edge(2 * k + 1, 2 * k + 3)?;
        }
    }
    Ok(g)
}

/// Comb graph with the vertex operators that reproduce the ideal dual-rail
/// cluster state: Hadamard on even vertices, X on odd vertices. The
/// placement is pinned by `graph_to_state` tests against the circuit
/// construction.
pub fn comb_with_cluster_vops(n_logical: usize) -> Result<GraphState> {
    let mut g = make_comb_graph(n_logical)?;
    for v in 0..2 * n_logical {
        if v % 2 == 0 {
            g.set_vop(v, LocalClifford::hadamard())?;
        } else {
            g.set_vop(v, LocalClifford::pauli_x())?;
        }
    }
    Ok(g)
}

/// State vector of the graph state: CZ over edges applied to |+>^n, then
/// per-vertex vops.
pub fn graph_state_vector(g: &GraphState) -> Result<CVec> {
    let n = g.n_vertices();
    if n > 16 {
        return Err(Error::Overflow(format!("{n} vertices exceed the bound of 16")));
    }
    let dim = 1usize << n;
    let scale = (dim as f64).powf(-0.5);
    let mut v = CVec::from_element(dim, cr(scale));
    // CZ phases
    for idx in 0..dim {
        let mut sign = 1.0;
        for &(a, b) in g.edges() {
            let ba = (idx >> (n - 1 - a)) & 1;
            let bb = (idx >> (n - 1 - b)) & 1;
            if ba == 1 && bb == 1 {
                sign = -sign;
            }
        }
        v[idx] *= cr(sign);
    }
    // per-vertex local Cliffords
    for vertex in 0..n {
        let m = g.vop(vertex).matrix();
        if (m - CMat::identity(2, 2)).iter().all(|z| z.norm() < 1e-12) {
            continue;
        }
        let stride = 1usize << (n - 1 - vertex);
        let mut out = CVec::zeros(dim);
        for idx in 0..dim {
            let bit = (idx >> (n - 1 - vertex)) & 1;
            let base = idx & !(stride);
            for newbit in 0..2 {
                let target = base | (newbit * stride);
                out[target] += m[(newbit, bit)] * v[idx];
            }
        }
        v = out;
    }
    linalg::fix_global_phase(&mut v);
    Ok(v)
}

/// Dense density matrix of the graph state. Bounded at 12 vertices; the
/// vector form supports the full 16.
pub fn graph_to_state(g: &GraphState) -> Result<MultimodeState> {
    if g.n_vertices() > 12 {
        return Err(Error::Overflow(format!(
            "dense matrix for {} vertices; use graph_state_vector",
            g.n_vertices()
        )));
    }
    let v = graph_state_vector(g)?;
    let labels = (0..g.n_vertices())
        .map(|index| SubsystemLabel::Vertex { index })
        .collect();
    MultimodeState::from_pure(vec![2; g.n_vertices()], labels, &v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{ideal_cluster_vector, Branch};
    use approx::assert_abs_diff_eq;

    #[test]
    fn clifford_table_has_24_elements_with_h_and_x() {
        assert_eq!(clifford_table().len(), 24);
        let h = LocalClifford::hadamard().matrix();
        assert!(h[(0, 0)].re > 0.0);
        let x = LocalClifford::pauli_x().matrix();
        assert!(x[(0, 1)].norm() > 0.9);
    }

    #[test]
    fn comb_graph_edges() {
        let g = make_comb_graph(2).unwrap();
        let expect: BTreeSet<(usize, usize)> = [(0, 1), (1, 3), (2, 3)].into_iter().collect();
        assert_eq!(g.edges(), &expect);

        let g1 = make_comb_graph(1).unwrap();
        let expect1: BTreeSet<(usize, usize)> = [(0, 1)].into_iter().collect();
        assert_eq!(g1.edges(), &expect1);

        let g4 = make_comb_graph(4).unwrap();
        assert_eq!(g4.n_vertices(), 8);
        assert_eq!(g4.edges().len(), 7);
    }

    #[test]
    fn no_self_loops() {
        let mut g = GraphState::new(3);
        assert!(g.add_edge(1, 1).is_err());
    }

    #[test]
    fn empty_graph_is_plus_product() {
        let g = GraphState::new(3);
        let v = graph_state_vector(&g).unwrap();
        for amp in v.iter() {
            assert_abs_diff_eq!(amp.re, 8f64.powf(-0.5), epsilon = 1e-12);
            assert_abs_diff_eq!(amp.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn comb_with_vops_reproduces_ideal_cluster() {
        for n in [1usize, 2, 3] {
            let g = comb_with_cluster_vops(n).unwrap();
            let mut gv = graph_state_vector(&g).unwrap();
            linalg::fix_global_phase(&mut gv);
            let ideal = ideal_cluster_vector(n, Branch::Plus).unwrap();
            let overlap = (ideal.adjoint() * &gv)[(0, 0)].norm_sqr();
            assert!(overlap > 1.0 - 1e-10, "n = {n}: overlap {overlap}");
        }
    }

    #[test]
    fn bare_comb_satisfies_its_stabilizers() {
        let g = make_comb_graph(3).unwrap();
        let v = graph_state_vector(&g).unwrap();
        for vert in 0..6 {
            let s = g.stabilizer_generator(vert);
            let sv = &s * &v;
            let expval = (v.adjoint() * &sv)[(0, 0)].re;
            assert_abs_diff_eq!(expval, 1.0, epsilon = 1e-10);
        }
    }
}
