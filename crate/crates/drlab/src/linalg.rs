//! Dense complex linear algebra helpers used throughout the crate.
//!
//! Subsystem convention: a composite index runs row-major over the `dims`
//! list, i.e. subsystem 0 is the most significant factor and
//! `kron(a, b)` places `a` on subsystem 0.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<C64>;
pub type CVec = nalgebra::DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn kron_all(mats: &[CMat]) -> CMat {
    let mut out = mats[0].clone();
    for m in &mats[1..] {
        out = out.kronecker(m);
    }
    out
}

pub fn dag(m: &CMat) -> CMat {
    m.adjoint()
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().sum()
}

pub fn outer(v: &CVec) -> CMat {
    v * v.adjoint()
}

/// Max entrywise |m - m†|.
pub fn hermiticity_violation(m: &CMat) -> f64 {
    let d = m - m.adjoint();
    d.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigendecomposition of a Hermitian matrix. Returns (eigenvalues ascending,
/// eigenvectors as columns).
///
/// Tries the nalgebra solver first; its QR iteration can emit NaN on exactly
/// degenerate spectra (for instance rank-one projectors), in which case a
/// tridiagonal QL solver on the real embedding takes over.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let se = m.clone().symmetric_eigen();
    let n = se.eigenvalues.len();
    if se.eigenvalues.iter().all(|v| v.is_finite())
        && se.eigenvectors.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
        let vals: Vec<f64> = idx.iter().map(|&k| se.eigenvalues[k]).collect();
        let mut vecs = CMat::zeros(n, n);
        for (col, &k) in idx.iter().enumerate() {
            vecs.set_column(col, &se.eigenvectors.column(k));
        }
        return (vals, vecs);
    }
    eigh_robust(m)
}

/// Hermitian eigendecomposition through the real symmetric embedding
/// `[[Re A, -Im A], [Im A, Re A]]`, whose spectrum doubles that of A.
fn eigh_robust(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let big = 2 * n;
    let mut v = vec![0.0f64; big * big];
    for r in 0..n {
        for c in 0..n {
            let z = m[(r, c)];
            v[r * big + c] = z.re;
            v[r * big + (n + c)] = -z.im;
            v[(n + r) * big + c] = z.im;
            v[(n + r) * big + (n + c)] = z.re;
        }
    }
    let mut d = vec![0.0f64; big];
    let mut e = vec![0.0f64; big];
    tred2(&mut v, &mut d, &mut e, big);
    tql2(&mut v, &mut d, &mut e, big);
    // every eigenvalue of A appears twice; walk ascending and keep n complex
    // eigenvectors by Gram-Schmidt
    let mut vals = Vec::with_capacity(n);
    let mut vecs = CMat::zeros(n, n);
    let mut kept = 0usize;
    for col in 0..big {
        if kept == n {
            break;
        }
        let mut z = CVec::from_fn(n, |r, _| C64::new(v[r * big + col], v[(n + r) * big + col]));
        for prev in 0..kept {
            let overlap = (vecs.column(prev).adjoint() * &z)[(0, 0)];
            z -= vecs.column(prev) * overlap;
        }
        let norm = z.norm();
        if norm > 1e-6 {
            z.scale_mut(1.0 / norm);
            vecs.set_column(kept, &z);
            vals.push(d[col]);
            kept += 1;
        }
    }
    debug_assert_eq!(kept, n, "failed to extract a full eigenbasis");
    (vals, vecs)
}

/// Householder reduction of a real symmetric matrix (row-major `v`, order
/// `n`) to tridiagonal form, accumulating the transformation into `v`.
fn tred2(v: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) {
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for item in d.iter().take(i) {
            scale += item.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
                v[j * n + i] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[j * n + i] = f;
                g = e[j] + v[j * n + j] * f;
                for k in j + 1..i {
                    g += v[k * n + j] * d[k];
                    e[k] += v[k * n + j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k * n + j] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[(n - 1) * n + i] = v[i * n + i];
        v[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k * n + i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k * n + i + 1] * v[k * n + j];
                }
                for k in 0..=i {
                    v[k * n + j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k * n + i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
        v[(n - 1) * n + j] = 0.0;
    }
    v[(n - 1) * n + n - 1] = 1.0;
    e[0] = 0.0;
}

/// Implicit-shift QL iteration on a symmetric tridiagonal matrix, sorting
/// the results ascending.
fn tql2(v: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;
    let eps = 2.0f64.powi(-52);
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0f64;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0f64;
                let mut s2 = 0.0f64;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g2 = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g2;
                    d[i + 1] = h + s * (c * g2 + s * d[i]);
                    for k in 0..n {
                        h = v[k * n + i + 1];
                        v[k * n + i + 1] = s * v[k * n + i] + c * h;
                        v[k * n + i] = c * v[k * n + i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 || iter > 60 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    // insertion sort with column swaps
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for j in i + 1..n {
            if d[j] < p {
                k = j;
                p = d[j];
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            for row in 0..n {
                v.swap(row * n + i, row * n + k);
            }
        }
    }
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    let (vals, _) = eigh(m);
    vals.first().copied().unwrap_or(0.0)
}

/// Hermitian square root of a PSD matrix; small negative eigenvalues are
/// clamped to zero.
pub fn sqrt_psd(m: &CMat) -> CMat {
    let (vals, vecs) = eigh(m);
    let n = vals.len();
    let mut d = CMat::zeros(n, n);
    for k in 0..n {
        d[(k, k)] = cr(vals[k].max(0.0).sqrt());
    }
    &vecs * d * vecs.adjoint()
}

/// Euclidean projection of `vals` onto the simplex {x >= 0, sum x = target}.
pub fn simplex_project(vals: &[f64], target: f64) -> Vec<f64> {
    let mut sorted = vals.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = (sorted.iter().sum::<f64>() - target) / sorted.len() as f64;
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - target) / (k as f64 + 1.0);
        if v - t <= 0.0 {
            // previous support size was k; recompute theta over it
            theta = (cumsum - v - target) / k as f64;
            break;
        }
        theta = t;
    }
    vals.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// Projection of a Hermitian matrix onto {rho PSD, Tr rho = target}.
pub fn project_psd_trace(m: &CMat, target: f64) -> CMat {
    let herm = (m + m.adjoint()).scale(0.5);
    let (vals, vecs) = eigh(&herm);
    let projected = simplex_project(&vals, target);
    let n = vals.len();
    let mut d = CMat::zeros(n, n);
    for k in 0..n {
        d[(k, k)] = cr(projected[k]);
    }
    &vecs * d * vecs.adjoint()
}

/// Partial trace keeping the subsystems in `keep` (ascending original order).
pub fn partial_trace(m: &CMat, dims: &[usize], keep: &[usize]) -> Result<CMat> {
    let total: usize = dims.iter().product();
    if m.nrows() != total || m.ncols() != total {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{} but dims imply {}",
            m.nrows(),
            m.ncols(),
            total
        )));
    }
    for &k in keep {
        if k >= dims.len() {
            return Err(Error::InvalidArgument(format!(
                "keep index {k} out of range for {} subsystems",
                dims.len()
            )));
        }
    }
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    if keep_sorted.is_empty() {
        return Err(Error::InvalidArgument("keep set must be nonempty".into()));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep_sorted.contains(k)).collect();
    let dk: usize = keep_sorted.iter().map(|&k| dims[k]).product();
    let dt: usize = traced.iter().map(|&k| dims[k]).product();

    // strides of each subsystem in the full index
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let offset = |subs: &[usize], multi: &[usize]| -> usize {
        subs.iter().zip(multi).map(|(&s, &x)| strides[s] * x).sum()
    };
    let unrank = |subs: &[usize], mut r: usize| -> Vec<usize> {
        let mut multi = vec![0usize; subs.len()];
        for (pos, &s) in subs.iter().enumerate().rev() {
            multi[pos] = r % dims[s];
            r /= dims[s];
        }
        multi
    };

    let mut out = CMat::zeros(dk, dk);
    for rk in 0..dk {
        let mk = unrank(&keep_sorted, rk);
        let ok = offset(&keep_sorted, &mk);
        for ck in 0..dk {
            let mc = unrank(&keep_sorted, ck);
            let oc = offset(&keep_sorted, &mc);
            let mut acc = ZERO;
            for rt in 0..dt {
                let mt = unrank(&traced, rt);
                let ot = offset(&traced, &mt);
                acc += m[(ok + ot, oc + ot)];
            }
            out[(rk, ck)] = acc;
        }
    }
    Ok(out)
}

/// Partial transpose over the subsystems listed in `sites`.
pub fn partial_transpose(m: &CMat, dims: &[usize], sites: &[usize]) -> CMat {
    let total: usize = dims.iter().product();
    debug_assert_eq!(m.nrows(), total);
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let mut out = CMat::zeros(total, total);
    let nd = dims.len();
    let mut row_multi = vec![0usize; nd];
    for r in 0..total {
        let mut rr = r;
        for k in (0..nd).rev() {
            row_multi[k] = rr % dims[k];
            rr /= dims[k];
        }
        let mut col_multi = vec![0usize; nd];
        for ccol in 0..total {
            let mut cc = ccol;
            for k in (0..nd).rev() {
                col_multi[k] = cc % dims[k];
                cc /= dims[k];
            }
            let mut nr = 0usize;
            let mut ncl = 0usize;
            for k in 0..nd {
                if sites.contains(&k) {
                    nr += strides[k] * col_multi[k];
                    ncl += strides[k] * row_multi[k];
                } else {
                    nr += strides[k] * row_multi[k];
                    ncl += strides[k] * col_multi[k];
                }
            }
            out[(nr, ncl)] = m[(r, ccol)];
        }
    }
    out
}

/// Embed a single-subsystem operator at `site` into the full product space.
pub fn op_on(dims: &[usize], site: usize, op: &CMat) -> CMat {
    let left: usize = dims[..site].iter().product();
    let right: usize = dims[site + 1..].iter().product();
    kron(&kron(&identity(left), op), &identity(right))
}

/// Reorder subsystems of a square operator: `perm[new_pos] = old_pos`.
pub fn permute_subsystems(m: &CMat, dims: &[usize], perm: &[usize]) -> CMat {
    let total: usize = dims.iter().product();
    let nd = dims.len();
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let mut new_strides = vec![1usize; nd];
    for k in (0..nd.saturating_sub(1)).rev() {
        new_strides[k] = new_strides[k + 1] * new_dims[k + 1];
    }
    // map: full old index -> full new index
    let mut index_map = vec![0usize; total];
    let mut multi = vec![0usize; nd];
    for r in 0..total {
        let mut rr = r;
        for k in (0..nd).rev() {
            multi[k] = rr % dims[k];
            rr /= dims[k];
        }
        let mut nidx = 0usize;
        for (new_pos, &old_pos) in perm.iter().enumerate() {
            nidx += new_strides[new_pos] * multi[old_pos];
        }
        index_map[r] = nidx;
    }
    let mut out = CMat::zeros(total, total);
    for r in 0..total {
        for ccol in 0..total {
            out[(index_map[r], index_map[ccol])] = m[(r, ccol)];
        }
    }
    out
}

/// Pauli matrices in the order I, X, Y, Z.
pub fn pauli(k: usize) -> CMat {
    match k {
        0 => CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ONE]),
        1 => CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        2 => CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        3 => CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        _ => panic!("pauli index out of range"),
    }
}

/// Multiply the vector by a phase so the first amplitude of significant
/// magnitude is real and positive.
pub fn fix_global_phase(v: &mut CVec) {
    let tol = 1e-12;
    if let Some(z) = v.iter().find(|z| z.norm() > tol) {
        let phase = z / z.norm();
        let corr = phase.conj();
        for x in v.iter_mut() {
            *x *= corr;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_places_first_factor_most_significant() {
        let a = CMat::from_row_slice(2, 2, &[cr(1.0), ZERO, ZERO, cr(2.0)]);
        let b = identity(3);
        let k = kron(&a, &b);
        assert_eq!(k.nrows(), 6);
        assert_eq!(k[(5, 5)], cr(2.0));
    }

    #[test]
    fn eigh_recovers_matrix() {
        let m = CMat::from_row_slice(2, 2, &[cr(1.0), c(0.0, -0.5), c(0.0, 0.5), cr(2.0)]);
        let (vals, vecs) = eigh(&m);
        let mut d = CMat::zeros(2, 2);
        d[(0, 0)] = cr(vals[0]);
        d[(1, 1)] = cr(vals[1]);
        let back = &vecs * d * vecs.adjoint();
        assert!((back - m).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn simplex_projection_basics() {
        let p = simplex_project(&[0.5, 0.7], 1.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p[0] - 0.4).abs() < 1e-12 && (p[1] - 0.6).abs() < 1e-12);
        let p = simplex_project(&[-1.0, 2.0], 1.0);
        assert!((p[0] - 0.0).abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partial_trace_of_product_state() {
        let v0 = CVec::from_vec(vec![ONE, ZERO]);
        let v1 = CVec::from_vec(vec![ZERO, ONE]);
        let rho = kron(&outer(&v0), &outer(&v1));
        let reduced = partial_trace(&rho, &[2, 2], &[1]).unwrap();
        assert!((reduced[(1, 1)] - ONE).norm() < 1e-12);
    }

    #[test]
    fn partial_transpose_is_involution() {
        let m = CMat::from_fn(4, 4, |r, c_| c(r as f64, c_ as f64));
        let pt = partial_transpose(&partial_transpose(&m, &[2, 2], &[1]), &[2, 2], &[1]);
        assert!((pt - m).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn permute_subsystems_round_trip() {
        let m = CMat::from_fn(8, 8, |r, c_| c(r as f64, (c_ * 7) as f64));
        let p = permute_subsystems(&m, &[2, 2, 2], &[2, 0, 1]);
        // inverse of perm [2,0,1] is [1,2,0]
        let back = permute_subsystems(&p, &[2, 2, 2], &[1, 2, 0]);
        assert!((back - m).iter().all(|z| z.norm() < 1e-12));
    }
}
