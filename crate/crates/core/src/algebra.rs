//! Dense numerical kernel: skew-symmetric endomorphisms, sparse alternating
//! 3-forms on `R^n`, contractions, commutators, matrix exponentials, and
//! rank decisions for spans of matrices.
//!
//! Conventions used throughout the crate:
//!
//! - indices are 0-based everywhere, including the JSON format;
//! - a 3-form stores coefficients only on strictly increasing triples
//!   `i < j < k`; evaluation at any other index order applies the
//!   permutation sign;
//! - the inner product on matrices is `<A, B> = tr(A^T B)`, which on skew
//!   matrices equals `-tr(AB)`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical tolerances used by rank decisions, skewness checks, and the
/// transport integrator.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Tolerances {
    /// Relative singular-value cutoff for rank decisions.
    pub rank_rtol: f64,
    /// Absolute tolerance on the skewness defect `||M + M^T||`.
    pub skew_atol: f64,
    /// Fixed step of the transport integrator.
    pub ode_step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_rtol: 1e-9,
            skew_atol: 1e-10,
            ode_step: 1e-3,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rank_rtol", self.rank_rtol),
            ("skew_atol", self.skew_atol),
            ("ode_step", self.ode_step),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidTolerance(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// An `n x n` real skew-symmetric matrix; an element of `so(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewEndo {
    mat: DMatrix<f64>,
}

impl SkewEndo {
    /// Wraps a matrix after checking skewness within `atol`.
    pub fn new(mat: DMatrix<f64>, atol: f64) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "skew endomorphism must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let defect = skewness_defect(&mat);
        if defect > atol {
            return Err(Error::NotSkew { defect, tol: atol });
        }
        Ok(Self { mat })
    }

    /// Wraps a matrix that is skew by construction.
    pub(crate) fn wrap(mat: DMatrix<f64>) -> Self {
        debug_assert!(
            skewness_defect(&mat) <= 1e-10 * (1.0 + mat.norm()),
            "wrap() called on a matrix with skewness defect {:.3e}",
            skewness_defect(&mat)
        );
        Self { mat }
    }

    pub fn zero(n: usize) -> Self {
        Self {
            mat: DMatrix::zeros(n, n),
        }
    }

    /// Elementary rotation generator `J_pq = e_p e_q^T - e_q e_p^T`
    /// (not normalized).
    pub fn elementary(n: usize, p: usize, q: usize) -> Result<Self> {
        if p >= n || q >= n || p == q {
            return Err(Error::InvalidInput(format!(
                "elementary generator J_{p},{q} invalid for dimension {n}"
            )));
        }
        let mut m = DMatrix::zeros(n, n);
        m[(p, q)] = 1.0;
        m[(q, p)] = -1.0;
        Ok(Self { mat: m })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.mat.norm()
    }

    /// Trace inner product `<A, B> = tr(A^T B)`.
    pub fn dot(&self, other: &SkewEndo) -> f64 {
        self.mat.dot(&other.mat)
    }

    pub fn scaled(&self, c: f64) -> SkewEndo {
        SkewEndo {
            mat: &self.mat * c,
        }
    }

    pub fn add_scaled(&mut self, c: f64, other: &SkewEndo) {
        self.mat += c * &other.mat;
    }

    /// Conjugation `Q^T A Q` by an orthogonal matrix, re-symmetrized to kill
    /// the rounding-level skewness drift.
    pub fn conjugated(&self, q: &DMatrix<f64>) -> SkewEndo {
        let m = q.transpose() * &self.mat * q;
        SkewEndo {
            mat: (&m - m.transpose()) * 0.5,
        }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.mat * v
    }
}

impl fmt::Display for SkewEndo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.mat)
    }
}

pub fn skewness_defect(mat: &DMatrix<f64>) -> f64 {
    (mat + mat.transpose()).norm()
}

/// Commutator `[A, B] = AB - BA`. The result is skew exactly: each entry of
/// the transpose is the term-by-term negation of the original sum.
pub fn bracket(a: &SkewEndo, b: &SkewEndo) -> Result<SkewEndo> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "bracket of {}x{} with {}x{}",
            a.dim(),
            a.dim(),
            b.dim(),
            b.dim()
        )));
    }
    let m = &a.mat * &b.mat - &b.mat * &a.mat;
    Ok(SkewEndo { mat: m })
}

/// Matrix exponential of `t * a` for a skew `a`; the result is special
/// orthogonal. Scaling-and-squaring Pade approximation via nalgebra.
pub fn expm(a: &SkewEndo, t: f64) -> DMatrix<f64> {
    (&a.mat * t).exp()
}

/// Principal logarithm of a matrix near the identity, by the alternating
/// power series in `M - I`. Requires `||M - I||_F < 0.5`.
pub fn log_near_identity(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let e = m - DMatrix::<f64>::identity(n, n);
    let enorm = e.norm();
    if !(enorm < 0.5) {
        return Err(Error::LogDivergence(format!(
            "||M - I|| = {enorm:.3e} is too far from the identity"
        )));
    }
    let mut log = DMatrix::<f64>::zeros(n, n);
    let mut power = e.clone();
    for k in 1..=60 {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        log += &power * (sign / k as f64);
        let tail = power.norm();
        if tail < 1e-17 * (1.0 + log.norm()) {
            break;
        }
        power = &power * &e;
    }
    Ok(log)
}

/// Rank of the span of a family of skew matrices under the trace inner
/// product, together with an orthonormal basis of that span.
///
/// Singular values above `rtol * sigma_max` count toward the rank.
pub fn rank_of_span(mats: &[SkewEndo], rtol: f64) -> (usize, Vec<SkewEndo>) {
    if mats.is_empty() {
        return (0, Vec::new());
    }
    let n = mats[0].dim();
    let stacked = DMatrix::from_fn(mats.len(), n * n, |r, c| mats[r].mat[(c / n, c % n)]);
    let svd = stacked.svd(false, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return (0, Vec::new());
    }
    let cut = rtol * smax;
    // Rows of v_t are not guaranteed to come sorted by singular value.
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let rank = svd.singular_values.iter().filter(|&&s| s > cut).count();
    let vt = svd.v_t.expect("svd computed with v_t");
    let basis = order[..rank]
        .iter()
        .map(|&r| {
            let m = DMatrix::from_fn(n, n, |i, j| vt[(r, i * n + j)]);
            // Right singular vectors are combinations of the skew inputs;
            // symmetrize away the rounding drift.
            SkewEndo {
                mat: (&m - m.transpose()) * 0.5,
            }
        })
        .collect();
    (rank, basis)
}

fn triple_sign(i: usize, j: usize, k: usize) -> Option<((usize, usize, usize), f64)> {
    if i == j || j == k || i == k {
        return None;
    }
    let mut idx = [i, j, k];
    let mut sign = 1.0;
    // Three-element bubble sort, tracking the permutation parity.
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

/// An algebraic totally skew trilinear form on `R^n`, stored sparsely on
/// strictly increasing index triples.
///
/// The induced trilinear map is `(x, y, z) -> <Theta_x y, z>` where
/// `Theta_x = contract(theta, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeForm {
    dim: usize,
    terms: BTreeMap<(usize, usize, usize), f64>,
    name: Option<String>,
}

impl ThreeForm {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeMap::new(),
            name: None,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    /// Adds `c` to the coefficient of `e_i ^ e_j ^ e_k`, accepting any index
    /// order and normalizing by the permutation sign. Repeated indices are
    /// rejected.
    pub fn add_term(&mut self, i: usize, j: usize, k: usize, c: f64) -> Result<()> {
        if i >= self.dim || j >= self.dim || k >= self.dim {
            return Err(Error::TripleOutOfRange {
                i,
                j,
                k,
                dim: self.dim,
            });
        }
        let ((a, b, d), sign) = triple_sign(i, j, k).ok_or(Error::BadTriple { i, j, k })?;
        let entry = self.terms.entry((a, b, d)).or_insert(0.0);
        *entry += sign * c;
        if *entry == 0.0 {
            self.terms.remove(&(a, b, d));
        }
        Ok(())
    }

    /// Signed coefficient at an arbitrary index triple; 0 on repeats.
    pub fn coeff(&self, i: usize, j: usize, k: usize) -> f64 {
        match triple_sign(i, j, k) {
            None => 0.0,
            Some((key, sign)) => sign * self.terms.get(&key).copied().unwrap_or(0.0),
        }
    }

    /// Iterates over stored `(i, j, k, c)` with `i < j < k` in
    /// lexicographic order.
    pub fn terms(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        self.terms.iter().map(|(&(i, j, k), &c)| (i, j, k, c))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Euclidean norm of the coefficient vector on increasing triples.
    pub fn coeff_norm(&self) -> f64 {
        self.terms.values().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: f64) -> ThreeForm {
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= c;
        }
        out.terms.retain(|_, v| *v != 0.0);
        out
    }

    pub fn add(&self, other: &ThreeForm) -> Result<ThreeForm> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!(
                "sum of 3-forms on R^{} and R^{}",
                self.dim, other.dim
            )));
        }
        let mut out = self.clone();
        out.name = None;
        for (i, j, k, c) in other.terms() {
            out.add_term(i, j, k, c)?;
        }
        Ok(out)
    }

    /// Full trilinear evaluation `Theta(x, y, z)`.
    pub fn eval(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> f64 {
        let mut acc = 0.0;
        for (&(i, j, k), &c) in &self.terms {
            let det = x[i] * (y[j] * z[k] - y[k] * z[j]) - x[j] * (y[i] * z[k] - y[k] * z[i])
                + x[k] * (y[i] * z[j] - y[j] * z[i]);
            acc += c * det;
        }
        acc
    }

    /// Contraction in the first slot: the skew matrix `M` with
    /// `<M y, z> = Theta(v, y, z)`; linear in `v`.
    pub fn contract(&self, v: &DVector<f64>) -> Result<SkewEndo> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "contracting a 3-form on R^{} with a vector of length {}",
                self.dim,
                v.len()
            )));
        }
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (&(i, j, k), &c) in &self.terms {
            // M[r][q] += sign * c * v[p] over all permutations (p,q,r) of (i,j,k).
            m[(k, j)] += c * v[i];
            m[(j, k)] -= c * v[i];
            m[(k, i)] -= c * v[j];
            m[(i, k)] += c * v[j];
            m[(j, i)] += c * v[k];
            m[(i, j)] -= c * v[k];
        }
        Ok(SkewEndo { mat: m })
    }

    /// Contraction with the `a`-th basis vector.
    pub fn contract_basis(&self, a: usize) -> Result<SkewEndo> {
        let mut v = DVector::zeros(self.dim);
        if a >= self.dim {
            return Err(Error::TripleOutOfRange {
                i: a,
                j: a,
                k: a,
                dim: self.dim,
            });
        }
        v[a] = 1.0;
        self.contract(&v)
    }

    /// Pullback along an orthogonal matrix,
    /// `(Q . Theta)(x, y, z) = Theta(Qx, Qy, Qz)`, so that contractions
    /// transform the same way as [`SkewEndo::conjugated`]:
    /// `(Q . Theta)_v = Q^T Theta_{Qv} Q`.
    pub fn conjugated(&self, q: &DMatrix<f64>) -> ThreeForm {
        let n = self.dim;
        let mut out = ThreeForm::zero(n);
        let cols: Vec<DVector<f64>> = (0..n).map(|a| q.column(a).into_owned()).collect();
        for i in 0..n {
            for j in (i + 1)..n {
                for k in (j + 1)..n {
                    let c = self.eval(&cols[i], &cols[j], &cols[k]);
                    if c != 0.0 {
                        out.add_term(i, j, k, c).expect("increasing triple");
                    }
                }
            }
        }
        out
    }

    /// Largest absolute coefficient; 0 for the zero form.
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// Builds the 3-form `Theta(x, y, z) = <[x, y], z>` from the adjoint
/// matrices `ad_a` of an orthonormal basis, i.e. from structure constants
/// `c_abd = (ad_a)[d][b]`.
///
/// Fails when the constants are not totally antisymmetric (the inner
/// product is not ad-invariant for the given basis), reporting the maximal
/// symmetry defect.
pub fn three_form_from_bracket(ads: &[DMatrix<f64>], atol: f64) -> Result<ThreeForm> {
    let n = ads.len();
    for (a, ad) in ads.iter().enumerate() {
        if ad.nrows() != n || ad.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "ad matrix {a} is {}x{}, expected {n}x{n}",
                ad.nrows(),
                ad.ncols()
            )));
        }
    }
    let mut theta = ThreeForm::zero(n);
    for a in 0..n {
        for b in (a + 1)..n {
            for d in (b + 1)..n {
                let c = ads[a][(d, b)];
                if c != 0.0 {
                    theta.add_term(a, b, d, c)?;
                }
            }
        }
    }
    // The sparse form keeps one representative per triple; the defect is the
    // worst disagreement of the raw constants with their alternating part.
    let mut defect: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            for d in 0..n {
                let raw = ads[a][(d, b)];
                defect = defect.max((raw - theta.coeff(a, b, d)).abs());
            }
        }
    }
    if defect > atol {
        return Err(Error::NotTotallySkew(defect));
    }
    Ok(theta)
}

/// Free-function form of [`ThreeForm::contract`].
pub fn contract(theta: &ThreeForm, v: &DVector<f64>) -> Result<SkewEndo> {
    theta.contract(v)
}

// ---------------------------------------------------------------------------
// JSON format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TermJson {
    i: usize,
    j: usize,
    k: usize,
    c: f64,
}

#[derive(Serialize, Deserialize)]
struct ThreeFormJson {
    dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    terms: Vec<TermJson>,
}

impl ThreeForm {
    /// Serializes as `{"dim": n, "name": ..., "terms": [{"i","j","k","c"}]}`.
    pub fn to_json_string(&self) -> String {
        let doc = ThreeFormJson {
            dim: self.dim,
            name: self.name.clone(),
            terms: self
                .terms()
                .map(|(i, j, k, c)| TermJson { i, j, k, c })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("three-form serialization")
    }

    /// Parses the JSON format, enforcing `i < j < k` on every term.
    pub fn from_json_str(s: &str) -> Result<ThreeForm> {
        let doc: ThreeFormJson = serde_json::from_str(s)?;
        if doc.dim == 0 {
            return Err(Error::InvalidInput("three-form dimension 0".into()));
        }
        let mut out = ThreeForm::zero(doc.dim);
        out.name = doc.name;
        for t in &doc.terms {
            if !(t.i < t.j && t.j < t.k) {
                return Err(Error::BadTriple {
                    i: t.i,
                    j: t.j,
                    k: t.k,
                });
            }
            if t.k >= doc.dim {
                return Err(Error::TripleOutOfRange {
                    i: t.i,
                    j: t.j,
                    k: t.k,
                    dim: doc.dim,
                });
            }
            if out.terms.contains_key(&(t.i, t.j, t.k)) {
                return Err(Error::DuplicateTriple {
                    i: t.i,
                    j: t.j,
                    k: t.k,
                });
            }
            out.terms.insert((t.i, t.j, t.k), t.c);
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<ThreeForm> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{rng_from_seed, unit_vector};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn e123_r4() -> ThreeForm {
        let mut t = ThreeForm::zero(4);
        t.add_term(0, 1, 2, 1.0).unwrap();
        t
    }

    /// Independent dense evaluator: expands the full alternating sum over
    /// all 6 permutations of every stored triple.
    fn eval_bruteforce(t: &ThreeForm, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> f64 {
        let perms: [([usize; 3], f64); 6] = [
            ([0, 1, 2], 1.0),
            ([0, 2, 1], -1.0),
            ([1, 0, 2], -1.0),
            ([1, 2, 0], 1.0),
            ([2, 0, 1], 1.0),
            ([2, 1, 0], -1.0),
        ];
        let mut acc = 0.0;
        for (i, j, k, c) in t.terms() {
            let idx = [i, j, k];
            for (p, s) in perms {
                acc += c * s * x[idx[p[0]]] * y[idx[p[1]]] * z[idx[p[2]]];
            }
        }
        acc
    }

    #[test]
    fn contract_e123_by_e1_matches_forced_values() {
        let t = e123_r4();
        let m = t.contract_basis(0).unwrap();
        // M e_1 = e_2, M e_2 = -e_1, M e_3 = 0 (0-based).
        let e = |a: usize| DVector::from_fn(4, |r, _| if r == a { 1.0 } else { 0.0 });
        assert_eq!(m.apply(&e(1)), e(2));
        assert_eq!(m.apply(&e(2)), -e(1));
        assert_eq!(m.apply(&e(3)), DVector::zeros(4));
    }

    #[test]
    fn contract_zero_vector_is_zero() {
        let t = e123_r4();
        let m = t.contract(&DVector::zeros(4)).unwrap();
        assert_eq!(m.norm(), 0.0);
    }

    #[test]
    fn contract_dimension_mismatch_errors() {
        let t = e123_r4();
        assert!(matches!(
            t.contract(&DVector::zeros(5)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn eval_agrees_with_bruteforce_and_contract() {
        let mut rng = rng_from_seed(7);
        let mut t = ThreeForm::zero(6);
        for _ in 0..8 {
            let i = rng.gen_range(0..6);
            let j = rng.gen_range(0..6);
            let k = rng.gen_range(0..6);
            if i != j && j != k && i != k {
                t.add_term(i, j, k, rng.gen_range(-1.0..1.0)).unwrap();
            }
        }
        for _ in 0..20 {
            let x = unit_vector(6, &mut rng);
            let y = unit_vector(6, &mut rng);
            let z = unit_vector(6, &mut rng);
            let direct = t.eval(&x, &y, &z);
            assert_relative_eq!(direct, eval_bruteforce(&t, &x, &y, &z), epsilon = 1e-12);
            let via_contract = t.contract(&x).unwrap().apply(&y).dot(&z);
            assert_relative_eq!(direct, via_contract, epsilon = 1e-12);
        }
    }

    #[test]
    fn bracket_self_is_zero_and_so3_relations_hold() {
        let j12 = SkewEndo::elementary(3, 0, 1).unwrap();
        let j23 = SkewEndo::elementary(3, 1, 2).unwrap();
        let j13 = SkewEndo::elementary(3, 0, 2).unwrap();
        assert_eq!(bracket(&j12, &j12).unwrap().norm(), 0.0);
        // [J_01, J_12] = +J_02 with this sign convention.
        let b = bracket(&j12, &j23).unwrap();
        assert_relative_eq!((b.matrix() - j13.matrix()).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn expm_identity_and_quarter_turn() {
        let j = SkewEndo::elementary(2, 0, 1).unwrap();
        let id = expm(&j, 0.0);
        assert_relative_eq!((id - DMatrix::<f64>::identity(2, 2)).norm(), 0.0);
        let q = expm(&j, std::f64::consts::FRAC_PI_2);
        // exp(pi/2 J_01) maps e_0 -> -e_1, e_1 -> e_0 for J_01 e_0 = -e_1.
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert_relative_eq!((q - expected).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn rank_of_span_examples() {
        let j12 = SkewEndo::elementary(4, 0, 1).unwrap();
        let (r, basis) = rank_of_span(&[j12.clone(), j12.scaled(2.0)], 1e-9);
        assert_eq!(r, 1);
        assert_eq!(basis.len(), 1);

        // Contractions of e_123 on R^4 span so(3): rank 3.
        let t = e123_r4();
        let contractions: Vec<SkewEndo> =
            (0..4).map(|a| t.contract_basis(a).unwrap()).collect();
        let (r, _) = rank_of_span(&contractions, 1e-9);
        assert_eq!(r, 3);

        // All elementary generators of so(4): rank 6.
        let mut all = Vec::new();
        for p in 0..4 {
            for q in (p + 1)..4 {
                all.push(SkewEndo::elementary(4, p, q).unwrap());
            }
        }
        let (r, basis) = rank_of_span(&all, 1e-9);
        assert_eq!(r, 6);
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(a.dot(b), expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rank_of_span_empty_input() {
        let (r, basis) = rank_of_span(&[], 1e-9);
        assert_eq!(r, 0);
        assert!(basis.is_empty());
    }

    #[test]
    fn reconstruction_from_contractions_is_exact() {
        let mut t = ThreeForm::zero(5);
        t.add_term(0, 1, 2, 0.375).unwrap();
        t.add_term(0, 3, 4, -1.25).unwrap();
        t.add_term(1, 3, 4, 2.0).unwrap();
        let mut rebuilt = ThreeForm::zero(5);
        for i in 0..5 {
            let mi = t.contract_basis(i).unwrap();
            for j in (i + 1)..5 {
                for k in (j + 1)..5 {
                    let c = mi.matrix()[(k, j)];
                    if c != 0.0 {
                        rebuilt.add_term(i, j, k, c).unwrap();
                    }
                }
            }
        }
        assert_eq!(t.terms, rebuilt.terms);
    }

    #[test]
    fn json_round_trip_and_bad_triples() {
        let t = e123_r4().with_name("e123");
        let s = t.to_json_string();
        let back = ThreeForm::from_json_str(&s).unwrap();
        assert_eq!(t, back);

        let bad = r#"{"dim": 4, "terms": [{"i": 2, "j": 1, "k": 3, "c": 1.0}]}"#;
        match ThreeForm::from_json_str(bad) {
            Err(Error::BadTriple { i: 2, j: 1, k: 3 }) => {}
            other => panic!("expected BadTriple(2,1,3), got {other:?}"),
        }

        let oob = r#"{"dim": 3, "terms": [{"i": 0, "j": 1, "k": 3, "c": 1.0}]}"#;
        assert!(matches!(
            ThreeForm::from_json_str(oob),
            Err(Error::TripleOutOfRange { .. })
        ));

        let dup = r#"{"dim": 4, "terms": [
            {"i": 0, "j": 1, "k": 2, "c": 1.0},
            {"i": 0, "j": 1, "k": 2, "c": 2.0}
        ]}"#;
        assert!(matches!(
            ThreeForm::from_json_str(dup),
            Err(Error::DuplicateTriple { .. })
        ));
    }

    #[test]
    fn from_bracket_rejects_incompatible_inner_product() {
        // ad matrices of a basis that is not orthonormal for an invariant
        // form: take so(3) generators scaled asymmetrically.
        let j = |p, q| SkewEndo::elementary(3, p, q).unwrap().into_matrix();
        let ads = vec![j(0, 1) * 2.0, j(0, 2), j(1, 2)];
        assert!(matches!(
            three_form_from_bracket(&ads, 1e-10),
            Err(Error::NotTotallySkew(_))
        ));
    }

    #[test]
    fn log_near_identity_inverts_expm() {
        let mut rng = rng_from_seed(3);
        let a = crate::sampling::random_skew(5, &mut rng).scaled(0.05);
        let q = expm(&a, 1.0);
        let log = log_near_identity(&q).unwrap();
        assert_relative_eq!((log - a.matrix()).norm(), 0.0, epsilon = 1e-13);
        let far = DMatrix::<f64>::identity(3, 3) * -1.0;
        assert!(matches!(
            log_near_identity(&far),
            Err(Error::LogDivergence(_))
        ));
    }

    #[test]
    fn tolerances_validate() {
        assert!(Tolerances::default().validate().is_ok());
        let bad = Tolerances {
            rank_rtol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// Alternation: the induced trilinear map changes sign under any
        /// transposition of its arguments.
        #[test]
        fn trilinear_map_is_alternating(seed in 0u64..1000) {
            let mut rng = rng_from_seed(seed);
            let mut t = ThreeForm::zero(5);
            t.add_term(0, 1, 2, rng.gen_range(-2.0..2.0)).unwrap();
            t.add_term(1, 2, 4, rng.gen_range(-2.0..2.0)).unwrap();
            t.add_term(0, 3, 4, rng.gen_range(-2.0..2.0)).unwrap();
            let x = unit_vector(5, &mut rng);
            let y = unit_vector(5, &mut rng);
            let z = unit_vector(5, &mut rng);
            let v = t.eval(&x, &y, &z);
            prop_assert!((t.eval(&y, &x, &z) + v).abs() < 1e-10);
            prop_assert!((t.eval(&x, &z, &y) + v).abs() < 1e-10);
            prop_assert!((t.eval(&z, &y, &x) + v).abs() < 1e-10);
        }

        /// Linearity of the contraction in the vector argument.
        #[test]
        fn contract_is_linear(seed in 0u64..1000) {
            let mut rng = rng_from_seed(seed);
            let t = e123_r4();
            let u = unit_vector(4, &mut rng);
            let v = unit_vector(4, &mut rng);
            let (a, b) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let lhs = t.contract(&(a * &u + b * &v)).unwrap();
            let mut rhs = t.contract(&u).unwrap().scaled(a);
            rhs.add_scaled(b, &t.contract(&v).unwrap());
            prop_assert!((lhs.matrix() - rhs.matrix()).norm() < 1e-14);
        }

        /// One-parameter group law and orthogonality of the exponential.
        #[test]
        fn expm_group_law(seed in 0u64..1000) {
            let mut rng = rng_from_seed(seed);
            let a = crate::sampling::random_skew(4, &mut rng);
            let a = a.scaled(1.0 / a.norm().max(1e-12) * rng.gen_range(0.5..5.0));
            let (s, t) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let prod = expm(&a, s) * expm(&a, t);
            prop_assert!((prod - expm(&a, s + t)).norm() < 1e-10);
            let q = expm(&a, s);
            prop_assert!((q.transpose() * &q - DMatrix::<f64>::identity(4, 4)).norm() <= 1e-10);
        }
    }
}
