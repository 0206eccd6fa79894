//! Constructive identifiability: recovery of `(alpha, pi[, rho])` from exact
//! low-order observation moments through Hankel determinants and Vandermonde systems.
//!
//! For random-dyad and star sampling, `u_i = sum_k alpha_k s_k^i` (times `rho` for
//! star) where `s` is the per-block probability of an observed edge. The `s_k` are
//! the roots of `B(x) = sum_k (-1)^(k+Q) D_k x^k`, `D_k` being the determinant of
//! the `(Q+1) x Q` Hankel matrix `M_ij = u_(i+j)` with row `k` removed. Class
//! sampling carries a second sequence `v` whose roots separate `alpha` from `rho`.

use nalgebra::DMatrix;

use crate::designs::SamplingDesign;
use crate::error::{Result, SbmError};
use crate::metrics::for_each_permutation;
use crate::model::SbmParameters;

/// Largest `Q` handled; Vandermonde conditioning degrades quickly beyond.
pub const MAX_RECOVERY_Q: usize = 5;

const IMAGINARY_TOL: f64 = 1e-8;
const ROOT_GAP_TOL: f64 = 1e-10;
/// Threshold on `det(M_Q) / prod diag(M_Q)`, a scale-free singularity measure.
const HADAMARD_RATIO_TOL: f64 = 1e-12;

/// Exact moments of one design. `u` always has length `2Q`; class sampling
/// adds `v`. `cross` is the `Q x Q` matrix `U` of two-row moments.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSequence {
    pub design: SamplingDesign,
    pub u: Vec<f64>,
    pub v: Option<Vec<f64>>,
    pub cross: DMatrix<f64>,
}

impl MomentSequence {
    pub fn q(&self) -> usize {
        self.cross.nrows()
    }

    /// `Q x Q` Hankel block `M_Q` of a sequence.
    pub fn hankel(seq: &[f64], q: usize) -> DMatrix<f64> {
        DMatrix::from_fn(q, q, |i, j| seq[i + j])
    }
}

/// Distinct sorted roots and their Vandermonde matrix `V[i, q] = roots[q]^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct VandermondeSystem {
    pub roots: Vec<f64>,
    pub vmatrix: DMatrix<f64>,
}

impl VandermondeSystem {
    pub fn new(roots: Vec<f64>) -> Result<Self> {
        if roots.windows(2).any(|w| w[1] - w[0] <= ROOT_GAP_TOL) {
            return Err(SbmError::RepeatedRoots);
        }
        let q = roots.len();
        let vmatrix = DMatrix::from_fn(q, q, |i, k| roots[k].powi(i as i32));
        Ok(VandermondeSystem { roots, vmatrix })
    }

    fn inverse(&self) -> Result<DMatrix<f64>> {
        self.vmatrix
            .clone()
            .try_inverse()
            .ok_or_else(|| SbmError::Singular("Vandermonde matrix".into()))
    }
}

fn vandermonde_unsorted(roots: &[f64]) -> DMatrix<f64> {
    let q = roots.len();
    DMatrix::from_fn(q, q, |i, k| roots[k].powi(i as i32))
}

fn power_sums(weights: &[f64], roots: &[f64], len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| weights.iter().zip(roots).map(|(w, r)| w * r.powi(i as i32)).sum())
        .collect()
}

/// Analytic moments of random-dyad, star or class sampling.
pub fn exact_moments(params: &SbmParameters, design: &SamplingDesign) -> Result<MomentSequence> {
    design.validate()?;
    let q = params.q();
    let alpha = params.alpha();
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(alpha));
    let pa = params.pi_alpha();
    match design {
        SamplingDesign::RandomDyad { rho } => {
            let s: Vec<f64> = pa.iter().map(|x| rho * x).collect();
            let sm = vandermonde_unsorted(&s);
            let cross = &sm * &a * params.pi() * &a * sm.transpose();
            Ok(MomentSequence {
                design: design.clone(),
                u: power_sums(alpha, &s, 2 * q),
                v: None,
                cross,
            })
        }
        SamplingDesign::Star { rho } => {
            let sm = vandermonde_unsorted(&pa);
            let w: Vec<f64> = alpha.iter().map(|x| rho * x).collect();
            let cross = (&sm * &a * params.pi() * &a * sm.transpose()) * (rho * rho);
            Ok(MomentSequence {
                design: design.clone(),
                u: power_sums(&w, &pa, 2 * q),
                v: None,
                cross,
            })
        }
        SamplingDesign::Class { rho } => {
            if rho.len() != q {
                return Err(SbmError::DimensionMismatch {
                    expected: q,
                    found: rho.len(),
                });
            }
            let t: Vec<f64> = (0..q)
                .map(|k| (0..q).map(|l| params.pi()[(k, l)] * rho[l] * alpha[l]).sum())
                .collect();
            let tm = vandermonde_unsorted(&t);
            let b = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(rho));
            let cross = &tm * &a * params.pi() * &a * &b * tm.transpose();
            let w: Vec<f64> = rho.iter().zip(alpha).map(|(r, a)| r * a).collect();
            Ok(MomentSequence {
                design: design.clone(),
                u: power_sums(&w, &pa, 2 * q),
                v: Some(power_sums(alpha, &t, 2 * q)),
                cross,
            })
        }
        other => Err(SbmError::Unsupported(format!("moments of {} sampling", other.name()))),
    }
}

/// Coefficients `c_0..c_Q` of `B(x) = sum_k (-1)^(k+Q) D_k x^k` built from `seq[0..2Q]`.
pub fn hankel_polynomial(seq: &[f64], q: usize) -> Result<Vec<f64>> {
    if seq.len() < 2 * q {
        return Err(SbmError::DimensionMismatch {
            expected: 2 * q,
            found: seq.len(),
        });
    }
    let m = DMatrix::from_fn(q + 1, q, |i, j| seq[i + j]);
    Ok((0..=q)
        .map(|k| {
            let mk = m.clone().remove_row(k);
            let sign = if (k + q) % 2 == 0 { 1.0 } else { -1.0 };
            sign * mk.lu().determinant()
        })
        .collect())
}

/// Fewer than `q` distinct roots make `M_Q` singular. Applied to the raw
/// sequence: after recentring the diagonal itself collapses and the ratio no
/// longer sees the degeneracy.
fn check_distinct_roots(seq: &[f64], q: usize) -> Result<()> {
    let mq = MomentSequence::hankel(seq, q);
    let diag: f64 = mq.diagonal().iter().product();
    let det = mq.lu().determinant();
    if diag <= 0.0 || !(det / diag > HADAMARD_RATIO_TOL) {
        return Err(SbmError::RepeatedRoots);
    }
    Ok(())
}

/// Real roots of the Hankel polynomial, sorted increasingly.
fn hankel_roots(seq: &[f64], q: usize) -> Result<Vec<f64>> {
    let coeffs = hankel_polynomial(seq, q)?;
    let lead = coeffs[q];
    let mut roots = if q == 1 {
        vec![-coeffs[0] / lead]
    } else {
        // companion matrix of the monic polynomial
        let mut c = DMatrix::<f64>::zeros(q, q);
        for i in 1..q {
            c[(i, i - 1)] = 1.0;
        }
        for i in 0..q {
            c[(i, q - 1)] = -coeffs[i] / lead;
        }
        let eig = c.complex_eigenvalues();
        let mut out = Vec::with_capacity(q);
        for z in eig.iter() {
            if z.im.abs() > IMAGINARY_TOL {
                return Err(SbmError::ComplexRoots(z.im.abs()));
            }
            out.push(z.re);
        }
        out
    };
    for r in roots.iter_mut() {
        polish_root(&coeffs, r);
    }
    roots.sort_by(|a, b| a.total_cmp(b));
    Ok(roots)
}

/// A few Newton steps on `B`, kept only while they shrink the residual.
fn polish_root(coeffs: &[f64], x: &mut f64) {
    let eval = |x: f64| {
        let mut p = 0.0;
        let mut dp = 0.0;
        for &c in coeffs.iter().rev() {
            dp = dp * x + p;
            p = p * x + c;
        }
        (p, dp)
    };
    for _ in 0..5 {
        let (p, dp) = eval(*x);
        if dp == 0.0 || !dp.is_finite() {
            return;
        }
        let next = *x - p / dp;
        if eval(next).0.abs() >= p.abs() {
            return;
        }
        *x = next;
    }
}

/// Lower-triangular binomial matrix `P[i, j] = C(i, j) (-c)^(i-j)`, so that
/// `P` applied to the power vector of `x` gives the power vector of `x - c`.
fn shift_matrix(len: usize, c: f64) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(len, len);
    for i in 0..len {
        let mut binom = 1.0;
        for j in (0..=i).rev() {
            p[(i, j)] = binom * (-c).powi((i - j) as i32);
            binom = binom * j as f64 / (i - j + 1) as f64;
        }
    }
    p
}

/// A power-sum sequence recentred on its weighted mean root, together with the
/// shift. Recentring leaves `A` and `pi` unchanged but keeps the Hankel
/// matrices well conditioned when the roots sit far from zero.
struct Centred {
    shift: f64,
    seq: Vec<f64>,
    cross: DMatrix<f64>,
}

impl Centred {
    fn new(seq: &[f64], cross: &DMatrix<f64>, q: usize) -> Result<Self> {
        check_distinct_roots(seq, q)?;
        let shift = if seq[0] != 0.0 { seq[1] / seq[0] } else { 0.0 };
        let p = shift_matrix(2 * q, shift);
        let seq = (&p * nalgebra::DVector::from_column_slice(&seq[..2 * q])).iter().copied().collect();
        let pq = p.view((0, 0), (q, q)).into_owned();
        let cross = &pq * cross * pq.transpose();
        Ok(Centred { shift, seq, cross })
    }

    fn system(&self, q: usize) -> Result<(VandermondeSystem, DMatrix<f64>)> {
        let sys = VandermondeSystem::new(hankel_roots(&self.seq, q)?)?;
        let inv = sys.inverse()?;
        Ok((sys, inv))
    }
}

fn check_q(q: usize, moments: &MomentSequence) -> Result<()> {
    if q == 0 {
        return Err(SbmError::InvalidParameters("q must be at least 1".into()));
    }
    if q > MAX_RECOVERY_Q {
        return Err(SbmError::Unsupported(format!("recovery beyond Q = {MAX_RECOVERY_Q}")));
    }
    if moments.u.len() < 2 * q || moments.cross.shape() != (q, q) {
        return Err(SbmError::DimensionMismatch {
            expected: 2 * q,
            found: moments.u.len(),
        });
    }
    Ok(())
}

/// Symmetric part of a recovered connectivity matrix (exact input gives a symmetric one).
fn symmetric(pi: DMatrix<f64>) -> DMatrix<f64> {
    (&pi + pi.transpose()) * 0.5
}

/// Recovery under random-dyad or star sampling with known `rho`. Blocks come out
/// in increasing order of `s = rho pi alpha` (resp. `pi alpha`).
pub fn recover_mar(moments: &MomentSequence, rho: f64, q: usize) -> Result<SbmParameters> {
    check_q(q, moments)?;
    let scale = match moments.design {
        SamplingDesign::RandomDyad { .. } => 1.0,
        SamplingDesign::Star { .. } => rho,
        _ => return Err(SbmError::InvalidDesign("recover_mar expects random-dyad or star moments".into())),
    };
    if rho <= 0.0 {
        return Err(SbmError::InvalidParameters("rho must be positive".into()));
    }
    let centred = Centred::new(&moments.u, &moments.cross, q)?;
    let (_, s_inv) = centred.system(q)?;
    let a_mat = &s_inv * MomentSequence::hankel(&centred.seq, q) * s_inv.transpose() / scale;
    let alpha: Vec<f64> = a_mat.diagonal().iter().copied().collect();
    if alpha.iter().any(|&a| a <= 0.0) {
        return Err(SbmError::Singular("non-positive recovered proportion".into()));
    }
    let a_inv = DMatrix::from_fn(q, q, |i, j| if i == j { 1.0 / alpha[i] } else { 0.0 });
    let pi = &a_inv * &s_inv * &centred.cross * s_inv.transpose() * &a_inv / (scale * scale);
    Ok(SbmParameters::from_parts_unchecked(alpha, symmetric(pi)))
}

/// Recovery under class sampling: `alpha` from the `v`/`t` system, `rho` from the
/// `u`/`o` system, `pi` from the cross moments. Blocks come out in increasing
/// order of `t = pi diag(rho) alpha`.
pub fn recover_class(moments: &MomentSequence, q: usize) -> Result<(SbmParameters, Vec<f64>)> {
    check_q(q, moments)?;
    if !matches!(moments.design, SamplingDesign::Class { .. }) {
        return Err(SbmError::InvalidDesign("recover_class expects class moments".into()));
    }
    let v = moments
        .v
        .as_ref()
        .ok_or_else(|| SbmError::InvalidParameters("class recovery needs the v sequence".into()))?;
    if v.len() < 2 * q {
        return Err(SbmError::DimensionMismatch {
            expected: 2 * q,
            found: v.len(),
        });
    }
    let t_centred = Centred::new(v, &moments.cross, q)?;
    let (_, t_inv) = t_centred.system(q)?;
    let a_mat = &t_inv * MomentSequence::hankel(&t_centred.seq, q) * t_inv.transpose();
    let alpha: Vec<f64> = a_mat.diagonal().iter().copied().collect();
    if alpha.iter().any(|&a| a <= 0.0) {
        return Err(SbmError::Singular("non-positive recovered proportion".into()));
    }

    let o_centred = Centred::new(&moments.u, &DMatrix::zeros(q, q), q)?;
    let (o_sys, o_inv) = o_centred.system(q)?;
    let o_roots: Vec<f64> = o_sys.roots.iter().map(|r| r + o_centred.shift).collect();
    // diag(alpha rho) in o-order
    let ab = (&o_inv * MomentSequence::hankel(&o_centred.seq, q) * o_inv.transpose()).diagonal();

    // perm[k] = o-index of the block at t-index k; the right one reproduces o = pi alpha.
    let mut best: Option<(f64, Vec<f64>, DMatrix<f64>)> = None;
    let a_inv = DMatrix::from_fn(q, q, |i, j| if i == j { 1.0 / alpha[i] } else { 0.0 });
    for_each_permutation(q, &mut |perm| {
        let rho: Vec<f64> = (0..q).map(|k| ab[perm[k]] / alpha[k]).collect();
        if rho.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return;
        }
        let b_inv = DMatrix::from_fn(q, q, |i, j| if i == j { 1.0 / rho[i] } else { 0.0 });
        let pi = &a_inv * &t_inv * &t_centred.cross * t_inv.transpose() * &b_inv * &a_inv;
        let err: f64 = (0..q)
            .map(|k| {
                let pa: f64 = (0..q).map(|l| pi[(k, l)] * alpha[l]).sum();
                (pa - o_roots[perm[k]]).abs()
            })
            .fold(0.0, f64::max);
        if best.as_ref().is_none_or(|b| err < b.0) {
            best = Some((err, rho, pi));
        }
    });
    let (_, rho, pi) = best.ok_or_else(|| SbmError::Singular("no consistent block matching".into()))?;
    Ok((SbmParameters::from_parts_unchecked(alpha, symmetric(pi)), rho))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q2() -> SbmParameters {
        SbmParameters::from_rows(vec![0.4, 0.6], &[vec![0.7, 0.1], vec![0.1, 0.5]]).unwrap()
    }

    #[test]
    fn single_block_moments_are_geometric() {
        let p = SbmParameters::planted_partition(vec![1.0], 0.3, 0.3).unwrap();
        let m = exact_moments(&p, &SamplingDesign::RandomDyad { rho: 0.5 }).unwrap();
        assert!((m.u[1] - 0.15).abs() < 1e-15);
        let r = recover_mar(&m, 0.5, 1).unwrap();
        assert!((r.pi()[(0, 0)] - 0.3).abs() < 1e-12);
        assert_eq!(r.alpha(), &[1.0]);
    }

    #[test]
    fn spec_style_example_is_degenerate() {
        // pi alpha = (0.34, 0.34): the two blocks cannot be told apart from u
        let m = exact_moments(&q2(), &SamplingDesign::RandomDyad { rho: 0.8 }).unwrap();
        assert!((m.u[0] - 1.0).abs() < 1e-15);
        assert!(matches!(recover_mar(&m, 0.8, 2), Err(SbmError::RepeatedRoots)));
    }

    #[test]
    fn random_dyad_round_trip() {
        let p = SbmParameters::from_rows(vec![0.4, 0.6], &[vec![0.7, 0.1], vec![0.1, 0.3]]).unwrap();
        let m = exact_moments(&p, &SamplingDesign::RandomDyad { rho: 0.8 }).unwrap();
        let r = recover_mar(&m, 0.8, 2).unwrap();
        assert!(r.max_abs_diff(&p.permuted(&[1, 0])) < 1e-9, "{r:?}");
    }

    #[test]
    fn star_round_trip() {
        let p = SbmParameters::from_rows(vec![0.4, 0.6], &[vec![0.7, 0.1], vec![0.1, 0.3]]).unwrap();
        let m = exact_moments(&p, &SamplingDesign::Star { rho: 0.6 }).unwrap();
        let r = recover_mar(&m, 0.6, 2).unwrap();
        // pi alpha = (0.34, 0.22): sorted order swaps the blocks
        let expected = p.permuted(&[1, 0]);
        assert!(r.max_abs_diff(&expected) < 1e-9, "{r:?}");
    }

    #[test]
    fn class_round_trip() {
        let p = SbmParameters::from_rows(vec![0.3, 0.7], &[vec![0.6, 0.1], vec![0.1, 0.4]]).unwrap();
        let m = exact_moments(&p, &SamplingDesign::Class { rho: vec![0.9, 0.2] }).unwrap();
        let (r, rho) = recover_class(&m, 2).unwrap();
        // t = pi diag(rho) alpha = (0.176, 0.083): block 1 comes first
        let expected = p.permuted(&[1, 0]);
        assert!(r.max_abs_diff(&expected) < 1e-9);
        assert!((rho[0] - 0.2).abs() < 1e-9 && (rho[1] - 0.9).abs() < 1e-9);
    }

    #[test]
    fn equal_pi_alpha_gives_repeated_roots() {
        let p = SbmParameters::from_rows(vec![0.5, 0.5], &[vec![0.6, 0.2], vec![0.2, 0.6]]).unwrap();
        let m = exact_moments(&p, &SamplingDesign::RandomDyad { rho: 0.9 }).unwrap();
        assert!(matches!(recover_mar(&m, 0.9, 2), Err(SbmError::RepeatedRoots)));
    }

    #[test]
    fn polynomial_vanishes_at_true_roots() {
        let p = SbmParameters::from_rows(vec![0.4, 0.6], &[vec![0.7, 0.1], vec![0.1, 0.3]]).unwrap();
        let m = exact_moments(&p, &SamplingDesign::Star { rho: 0.5 }).unwrap();
        let c = hankel_polynomial(&m.u, 2).unwrap();
        for s in p.pi_alpha() {
            let b: f64 = c.iter().enumerate().map(|(k, ck)| ck * s.powi(k as i32)).sum();
            assert!(b.abs() < 1e-9 * c[2].abs());
        }
    }
}
