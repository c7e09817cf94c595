//! Classification predicates for skew-torsion holonomy systems.
//!
//! A holonomy system pairs an algebraic 3-form `Theta` on `R^n` with a Lie
//! subalgebra `h` of `so(n)` that contains every contraction `Theta_v`.
//! The predicates here decide irreducibility, transitivity on the sphere,
//! invariance of `Theta`, and the Lie-theoretic structure of the bracket
//! `[x, y] = Theta_x y`, and bundle them into a report that also records
//! whether the systems with non-full irreducible algebra satisfy the
//! expected symmetric/non-transitive/simple conclusions.
//!
//! Group-level conditions (invariance, normalizers) are tested
//! infinitesimally at the Lie-algebra level; the groups in question are
//! connected by definition.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::algebra::{bracket, SkewEndo, ThreeForm, Tolerances};
use crate::closure::LieSubalgebra;
use crate::error::{Error, Result};
use crate::sampling::{rng_from_seed, unit_vector};

/// Factor by which the singular-value gap at a rank cut must exceed the
/// cutoff before a dimension decision is accepted.
const GAP_FACTOR: f64 = 10.0;

/// Number of random elements over which the generic kernel dimension is
/// minimized when computing the rank.
const RANK_TRIALS: usize = 5;

/// Rank decision with the gap rule: singular values above
/// `rtol * sigma_max` count, and the cut is accepted only when the values
/// straddling it differ by at least [`GAP_FACTOR`].
fn decided_rank(m: &DMatrix<f64>, rtol: f64, what: &str) -> Result<usize> {
    let svd = m.clone().svd(false, false);
    let mut svals: Vec<f64> = svd.singular_values.iter().copied().collect();
    svals.sort_by(|a, b| b.total_cmp(a));
    let smax = svals.first().copied().unwrap_or(0.0);
    if !(smax > 0.0) {
        return Ok(0);
    }
    let cut = rtol * smax;
    let rank = svals.iter().filter(|&&s| s > cut).count();
    if rank > 0 && rank < svals.len() {
        let above = svals[rank - 1];
        let below = svals[rank];
        if below > 0.0 && above / below < GAP_FACTOR {
            return Err(Error::Indeterminate(format!(
                "{what}: singular values {above:.3e} / {below:.3e} at the cut are closer than {GAP_FACTOR}x"
            )));
        }
    }
    Ok(rank)
}

fn nullspace_dim(m: &DMatrix<f64>, unknowns: usize, rtol: f64, what: &str) -> Result<usize> {
    Ok(unknowns - decided_rank(m, rtol, what)?)
}

/// Orthonormal basis of symmetric n x n matrices.
fn symmetric_basis(n: usize) -> Vec<DMatrix<f64>> {
    let mut basis = Vec::with_capacity(n * (n + 1) / 2);
    for p in 0..n {
        let mut m = DMatrix::zeros(n, n);
        m[(p, p)] = 1.0;
        basis.push(m);
    }
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for p in 0..n {
        for q in (p + 1)..n {
            let mut m = DMatrix::zeros(n, n);
            m[(p, q)] = inv_sqrt2;
            m[(q, p)] = inv_sqrt2;
            basis.push(m);
        }
    }
    basis
}

/// Dimension of the space of symmetric matrices commuting with every
/// element of the family.
fn symmetric_commutant_dim(mats: &[&DMatrix<f64>], n: usize, rtol: f64) -> Result<usize> {
    let sym = symmetric_basis(n);
    if mats.is_empty() {
        return Ok(sym.len());
    }
    let rows = mats.len() * n * n;
    let mut system = DMatrix::zeros(rows, sym.len());
    for (col, s) in sym.iter().enumerate() {
        for (m_idx, a) in mats.iter().enumerate() {
            let comm = *a * s - s * *a;
            for r in 0..n {
                for c in 0..n {
                    system[(m_idx * n * n + r * n + c, col)] = comm[(r, c)];
                }
            }
        }
    }
    nullspace_dim(&system, sym.len(), rtol, "symmetric commutant")
}

/// True iff the only symmetric matrices commuting with the whole algebra
/// are the multiples of the identity.
///
/// This criterion is exact: an invariant subspace yields an orthogonal
/// projection commuting with `h`, and conversely a non-scalar symmetric
/// element of the commutant has a proper eigenspace invariant under `h`.
pub fn is_irreducible(h: &LieSubalgebra, tol: &Tolerances) -> Result<bool> {
    let n = h.ambient_dim();
    let mats: Vec<&DMatrix<f64>> = h.basis().iter().map(SkewEndo::matrix).collect();
    Ok(symmetric_commutant_dim(&mats, n, tol.rank_rtol)? == 1)
}

/// True iff the tangent space of the orbit, `{Xv : X in h}`, has dimension
/// `n - 1` at every sampled unit vector `v`. The orbit of a connected group
/// is then open and closed in the sphere.
pub fn is_transitive_sphere(
    h: &LieSubalgebra,
    trials: usize,
    seed: u64,
    tol: &Tolerances,
) -> bool {
    let n = h.ambient_dim();
    if n == 1 {
        return true;
    }
    if h.dim() == 0 {
        return false;
    }
    let mut rng = rng_from_seed(seed);
    for _ in 0..trials.max(1) {
        let v = unit_vector(n, &mut rng);
        let orbit = DMatrix::from_fn(n, h.dim(), |r, c| h.basis()[c].apply(&v)[r]);
        let svd = orbit.svd(false, false);
        let smax = svd.singular_values.max();
        if !(smax > 0.0) {
            return false;
        }
        let cut = tol.rank_rtol * smax;
        let rank = svd.singular_values.iter().filter(|&&s| s > cut).count();
        if rank != n - 1 {
            return false;
        }
    }
    true
}

/// Worst violation of the infinitesimal invariance
/// `Theta(Ax, y, z) + Theta(x, Ay, z) + Theta(x, y, Az) = 0`
/// over all basis elements `A` of `h` and all increasing basis triples.
pub fn symmetry_defect(theta: &ThreeForm, h: &LieSubalgebra) -> f64 {
    let n = theta.dim();
    let mut defect: f64 = 0.0;
    for a in h.basis() {
        let m = a.matrix();
        for i in 0..n {
            for j in (i + 1)..n {
                for k in (j + 1)..n {
                    let mut v = 0.0;
                    for r in 0..n {
                        v += m[(r, i)] * theta.coeff(r, j, k)
                            + m[(r, j)] * theta.coeff(i, r, k)
                            + m[(r, k)] * theta.coeff(i, j, r);
                    }
                    defect = defect.max(v.abs());
                }
            }
        }
    }
    defect
}

/// Infinitesimal test of `g_* Theta = Theta` for all `g` in the connected
/// group generated by `h`.
pub fn is_symmetric_system(s: &HolonomySystem, _tol: &Tolerances) -> bool {
    symmetry_defect(&s.theta, &s.h) <= 1e-8 * s.theta.max_abs_coeff().max(1.0)
}

/// Maximum over increasing basis triples of the Jacobi sum
/// `[x,[y,z]] + [y,[z,x]] + [z,[x,y]]` for the candidate bracket
/// `[a, b] = Theta_a b`.
pub fn jacobi_defect(theta: &ThreeForm) -> f64 {
    let n = theta.dim();
    let contractions: Vec<DMatrix<f64>> = (0..n)
        .map(|a| theta.contract_basis(a).expect("basis index").into_matrix())
        .collect();
    let mut defect: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let mut v: DVector<f64> = &contractions[i] * contractions[j].column(k);
                v += &contractions[j] * contractions[k].column(i);
                v += &contractions[k] * contractions[i].column(j);
                defect = defect.max(v.norm());
            }
        }
    }
    defect
}

fn jacobi_gate(theta: &ThreeForm) -> f64 {
    let scale = theta.max_abs_coeff().max(1.0);
    1e-8 * scale * scale
}

/// Killing form `K_ab = tr(ad_a ad_b)` of the bracket `[x,y] = Theta_x y`.
pub fn killing_matrix(theta: &ThreeForm) -> DMatrix<f64> {
    let n = theta.dim();
    let ads: Vec<DMatrix<f64>> = (0..n)
        .map(|a| theta.contract_basis(a).expect("basis index").into_matrix())
        .collect();
    DMatrix::from_fn(n, n, |a, b| (&ads[a] * &ads[b]).trace())
}

/// Rank, simplicity, and Killing-definiteness of the bracket induced by a
/// 3-form that passes the Jacobi test.
///
/// The rank is the minimal kernel dimension of `ad_x` over several random
/// draws; simplicity combines a nondegenerate Killing form with a trivial
/// symmetric commutant of the adjoint family (no proper ideal).
pub fn lie_rank_and_simplicity(
    theta: &ThreeForm,
    seed: u64,
    tol: &Tolerances,
) -> Result<(usize, bool, bool)> {
    let defect = jacobi_defect(theta);
    if defect > jacobi_gate(theta) {
        return Err(Error::NotLieBracket(defect));
    }
    let n = theta.dim();
    let mut rng = rng_from_seed(seed);
    let mut rank = usize::MAX;
    for _ in 0..RANK_TRIALS {
        let x = unit_vector(n, &mut rng);
        let ad_x = theta.contract(&x)?.into_matrix();
        let kernel = nullspace_dim(&ad_x, n, tol.rank_rtol, "ad_x kernel")?;
        rank = rank.min(kernel);
    }

    let killing = killing_matrix(theta);
    let eigen = killing.clone().symmetric_eigen();
    let max_abs = eigen.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    let nondegenerate = max_abs > 0.0
        && eigen
            .eigenvalues
            .iter()
            .all(|&l| l.abs() > tol.rank_rtol * max_abs);
    let negdef = nondegenerate && eigen.eigenvalues.iter().all(|&l| l < 0.0);

    let ads: Vec<DMatrix<f64>> = (0..n)
        .map(|a| theta.contract_basis(a).expect("basis index").into_matrix())
        .collect();
    let ad_refs: Vec<&DMatrix<f64>> = ads.iter().collect();
    let no_proper_ideal = symmetric_commutant_dim(&ad_refs, n, tol.rank_rtol)? == 1;

    Ok((rank, nondegenerate && no_proper_ideal, negdef))
}

fn increasing_triples(n: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                out.push((i, j, k));
            }
        }
    }
    out
}

fn sorted_with_sign(i: usize, j: usize, k: usize) -> Option<((usize, usize, usize), f64)> {
    if i == j || j == k || i == k {
        return None;
    }
    let mut idx = [i, j, k];
    let mut sign = 1.0;
    if idx[0] > idx[1] {
        idx.swap(0, 1);
        sign = -sign;
    }
    if idx[1] > idx[2] {
        idx.swap(1, 2);
        sign = -sign;
    }
    if idx[0] > idx[1] {
        idx.swap(0, 1);
        sign = -sign;
    }
    Some(((idx[0], idx[1], idx[2]), sign))
}

/// Dimension of the space of 3-forms on `R^n` annihilated by every element
/// of `h` acting as a derivation.
pub fn invariant_threeform_dim(h: &LieSubalgebra, tol: &Tolerances) -> Result<usize> {
    let n = h.ambient_dim();
    let triples = increasing_triples(n);
    let ncols = triples.len();
    if h.dim() == 0 {
        return Ok(ncols);
    }
    let col_of = |i: usize, j: usize, k: usize| -> Option<(usize, f64)> {
        let ((a, b, c), sign) = sorted_with_sign(i, j, k)?;
        let pos = triples.binary_search(&(a, b, c)).expect("triple enumerated");
        Some((pos, sign))
    };
    let mut system = DMatrix::zeros(h.dim() * ncols, ncols);
    for (m_idx, a) in h.basis().iter().enumerate() {
        let m = a.matrix();
        for (t_idx, &(i, j, k)) in triples.iter().enumerate() {
            let row = m_idx * ncols + t_idx;
            for r in 0..n {
                // Theta(A e_i, e_j, e_k) = sum_r A[r][i] Theta(e_r, e_j, e_k), etc.
                if let Some((col, sign)) = col_of(r, j, k) {
                    system[(row, col)] += m[(r, i)] * sign;
                }
                if let Some((col, sign)) = col_of(i, r, k) {
                    system[(row, col)] += m[(r, j)] * sign;
                }
                if let Some((col, sign)) = col_of(i, j, r) {
                    system[(row, col)] += m[(r, k)] * sign;
                }
            }
        }
    }
    nullspace_dim(&system, ncols, tol.rank_rtol, "invariant 3-forms")
}

/// Orthonormal basis of `so(n)` made of normalized elementary rotations.
fn so_basis(n: usize) -> Vec<SkewEndo> {
    let mut basis = Vec::with_capacity(n * (n - 1) / 2);
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for p in 0..n {
        for q in (p + 1)..n {
            basis.push(
                SkewEndo::elementary(n, p, q)
                    .expect("valid indices")
                    .scaled(inv_sqrt2),
            );
        }
    }
    basis
}

/// The normalizer `{A in so(n) : [A, h] c h}` at the Lie-algebra level.
/// Always contains `h`.
pub fn normalizer_in_so(h: &LieSubalgebra, tol: &Tolerances) -> Result<LieSubalgebra> {
    let n = h.ambient_dim();
    let ambient = so_basis(n);
    let ncols = ambient.len();
    if h.dim() == 0 {
        return crate::closure::lie_closure(&ambient, tol);
    }
    let rows = h.dim() * n * n;
    let mut system = DMatrix::zeros(rows, ncols);
    for (col, u) in ambient.iter().enumerate() {
        for (m_idx, b) in h.basis().iter().enumerate() {
            let comm = bracket(u, b)?;
            // Component of [u, b] orthogonal to span(h).
            let mut resid = comm.clone();
            for hb in h.basis() {
                let c = resid.dot(hb);
                resid.add_scaled(-c, hb);
            }
            let m = resid.matrix();
            for r in 0..n {
                for c in 0..n {
                    system[(m_idx * n * n + r * n + c, col)] = m[(r, c)];
                }
            }
        }
    }
    let svd = system.clone().svd(false, true);
    let mut svals: Vec<(usize, f64)> = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .collect();
    svals.sort_by(|a, b| b.1.total_cmp(&a.1));
    let smax = svals.first().map(|&(_, s)| s).unwrap_or(0.0);
    let rank = if smax > 0.0 {
        let cut = tol.rank_rtol * smax;
        let r = svals.iter().filter(|&&(_, s)| s > cut).count();
        if r > 0 && r < svals.len() {
            let above = svals[r - 1].1;
            let below = svals[r].1;
            if below > 0.0 && above / below < GAP_FACTOR {
                return Err(Error::Indeterminate(
                    "normalizer dimension: singular-value gap below 10x".into(),
                ));
            }
        }
        r
    } else {
        0
    };
    let vt = svd.v_t.expect("svd with v_t");
    let mut basis = Vec::new();
    for &(row, _) in &svals[rank..] {
        let mut m = SkewEndo::zero(n);
        for (col, u) in ambient.iter().enumerate() {
            m.add_scaled(vt[(row, col)], u);
        }
        basis.push(m);
    }
    // Right singular vectors of the nullspace are orthonormal in the
    // coefficient space, and the so(n) basis is trace-orthonormal, so the
    // assembled matrices are orthonormal as well. A normalizer is always
    // bracket-closed; the stored defect records the numerical residual.
    LieSubalgebra::from_orthonormal_basis(n, basis, None)
}

/// A skew-torsion holonomy system: a 3-form together with a subalgebra of
/// `so(n)` containing all its contractions.
#[derive(Debug, Clone)]
pub struct HolonomySystem {
    theta: ThreeForm,
    h: LieSubalgebra,
}

impl HolonomySystem {
    /// Validates that every contraction `Theta_v` lies in `span(h)` with
    /// projection residual below `1e-8`.
    pub fn new(theta: ThreeForm, h: LieSubalgebra) -> Result<Self> {
        if theta.dim() != h.ambient_dim() {
            return Err(Error::DimensionMismatch(format!(
                "3-form on R^{} paired with subalgebra of so({})",
                theta.dim(),
                h.ambient_dim()
            )));
        }
        for a in 0..theta.dim() {
            let c = theta.contract_basis(a)?;
            let resid = h.projection_residual(&c);
            if resid > 1e-8 * c.norm().max(1.0) {
                return Err(Error::InvalidInput(format!(
                    "contraction Theta_e{a} lies outside span(h): residual {resid:.3e}"
                )));
            }
        }
        Ok(Self { theta, h })
    }

    pub fn theta(&self) -> &ThreeForm {
        &self.theta
    }

    pub fn h(&self) -> &LieSubalgebra {
        &self.h
    }
}

/// Outcome of the symmetric/non-transitive implication check for
/// irreducible systems with non-full algebra.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ImplicationStatus {
    /// Hypotheses not met (reducible system or full `so(n)`).
    Vacuous,
    Passed,
    Failed,
}

/// One predicate per key, plus the tolerances the decisions used.
#[derive(Debug, Clone, Serialize)]
pub struct StructureReport {
    pub ambient_dim: usize,
    pub h_dim: usize,
    pub irreducible: bool,
    pub transitive: bool,
    pub symmetric: bool,
    pub jacobi_defect: f64,
    /// Whether the bracket `[x,y] = Theta_x y` passes the Jacobi test; the
    /// three fields below are only meaningful when it does.
    pub bracket_is_lie: bool,
    pub simple: Option<bool>,
    pub rank: Option<usize>,
    pub killing_negdef: Option<bool>,
    pub invariant_threeform_dim: usize,
    pub normalizer_dim: usize,
    pub normalizer_equals_h: bool,
    pub stht_implication: ImplicationStatus,
    pub stht_failures: Vec<String>,
    pub seed: u64,
    pub tolerances: Tolerances,
}

/// Runs every predicate on the system and records whether the
/// irreducible-non-full implication (symmetric, non-transitive, simple
/// bracket of rank >= 2, unique invariant 3-form, self-normalizing) holds.
///
/// A failed implication is reported in the result, not as an error; `Err`
/// is reserved for indeterminate rank decisions.
pub fn verify_stht(s: &HolonomySystem, seed: u64, tol: &Tolerances) -> Result<StructureReport> {
    let n = s.h.ambient_dim();
    let full_dim = n * (n - 1) / 2;

    let irreducible = is_irreducible(&s.h, tol)?;
    let transitive = is_transitive_sphere(&s.h, 8, seed, tol);
    let symmetric = is_symmetric_system(s, tol);
    let jacobi = jacobi_defect(&s.theta);
    let bracket_is_lie = jacobi <= jacobi_gate(&s.theta);
    let (rank, simple, killing_negdef) = if bracket_is_lie {
        let (r, si, kn) = lie_rank_and_simplicity(&s.theta, seed, tol)?;
        (Some(r), Some(si), Some(kn))
    } else {
        (None, None, None)
    };
    let inv3 = invariant_threeform_dim(&s.h, tol)?;
    let normalizer = normalizer_in_so(&s.h, tol)?;
    let normalizer_equals_h = normalizer.dim() == s.h.dim();

    let applicable = irreducible && s.h.dim() < full_dim && !s.theta.is_zero();
    let mut failures = Vec::new();
    if applicable {
        if !symmetric {
            failures.push("symmetric".to_string());
        }
        if transitive {
            failures.push("non-transitive".to_string());
        }
        if !bracket_is_lie {
            failures.push("jacobi".to_string());
        }
        if simple != Some(true) {
            failures.push("simple".to_string());
        }
        if rank.is_none_or(|r| r < 2) {
            failures.push("rank>=2".to_string());
        }
        if inv3 != 1 {
            failures.push("invariant_threeform_dim=1".to_string());
        }
        if !normalizer_equals_h {
            failures.push("normalizer=h".to_string());
        }
    }
    let implication = if !applicable {
        ImplicationStatus::Vacuous
    } else if failures.is_empty() {
        ImplicationStatus::Passed
    } else {
        ImplicationStatus::Failed
    };

    Ok(StructureReport {
        ambient_dim: n,
        h_dim: s.h.dim(),
        irreducible,
        transitive,
        symmetric,
        jacobi_defect: jacobi,
        bracket_is_lie,
        simple,
        rank,
        killing_negdef,
        invariant_threeform_dim: inv3,
        normalizer_dim: normalizer.dim(),
        normalizer_equals_h,
        stht_implication: implication,
        stht_failures: failures,
        seed,
        tolerances: *tol,
    })
}
