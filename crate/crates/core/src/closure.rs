//! Lie subalgebras of `so(n)` built by generation: spans of 3-form
//! contractions, bracket closures, derived algebras, and closures of
//! operators pulled back by parallel transports.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::algebra::{bracket, rank_of_span, SkewEndo, ThreeForm, Tolerances};
use crate::error::{Error, Result};

/// A subalgebra of `so(n)` carried as an orthonormal basis under the trace
/// inner product, together with the worst distance of any basis bracket
/// from the span.
#[derive(Debug, Clone)]
pub struct LieSubalgebra {
    ambient_dim: usize,
    basis: Vec<SkewEndo>,
    bracket_defect: f64,
    note: Option<String>,
}

impl LieSubalgebra {
    /// Assembles a subalgebra from a basis that is already orthonormal
    /// under the trace inner product, computing its bracket defect.
    pub(crate) fn from_orthonormal_basis(
        ambient_dim: usize,
        basis: Vec<SkewEndo>,
        note: Option<String>,
    ) -> Result<LieSubalgebra> {
        let bracket_defect = max_bracket_defect_in(ambient_dim, &basis)?;
        Ok(LieSubalgebra {
            ambient_dim,
            basis,
            bracket_defect,
            note,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[SkewEndo] {
        &self.basis
    }

    pub fn bracket_defect(&self) -> f64 {
        self.bracket_defect
    }

    pub fn note(&self) -> Option<&str> {
        self.note.as_deref()
    }

    /// Distance of `m` from the span, `||m - proj(m)||`.
    pub fn projection_residual(&self, m: &SkewEndo) -> f64 {
        let mut r = m.clone();
        for b in &self.basis {
            let c = r.dot(b);
            r.add_scaled(-c, b);
        }
        r.norm()
    }

    pub fn contains(&self, m: &SkewEndo, tol: f64) -> bool {
        self.projection_residual(m) <= tol * m.norm().max(1.0)
    }

    /// Conjugated subalgebra `Q^T h Q`.
    pub fn conjugated(&self, q: &DMatrix<f64>) -> LieSubalgebra {
        LieSubalgebra {
            ambient_dim: self.ambient_dim,
            basis: self.basis.iter().map(|b| b.conjugated(q)).collect(),
            bracket_defect: self.bracket_defect,
            note: self.note.clone(),
        }
    }

    /// Orthogonal projector onto the span in the flattened matrix space;
    /// used to compare subspaces.
    pub fn projector(&self) -> DMatrix<f64> {
        let n = self.ambient_dim;
        let mut p = DMatrix::zeros(n * n, n * n);
        for b in &self.basis {
            let flat = DMatrix::from_fn(n * n, 1, |r, _| b.matrix()[(r / n, r % n)]);
            p += &flat * flat.transpose();
        }
        p
    }

    pub fn report(&self, include_basis: bool) -> SubalgebraReport {
        SubalgebraReport {
            ambient_dim: self.ambient_dim,
            dim: self.dim(),
            bracket_defect: self.bracket_defect,
            note: self.note.clone(),
            basis: include_basis.then(|| {
                self.basis
                    .iter()
                    .map(|b| {
                        (0..self.ambient_dim)
                            .map(|r| b.matrix().row(r).iter().copied().collect())
                            .collect()
                    })
                    .collect()
            }),
        }
    }
}

/// JSON-facing summary of a subalgebra.
#[derive(Debug, Clone, Serialize)]
pub struct SubalgebraReport {
    pub ambient_dim: usize,
    pub dim: usize,
    pub bracket_defect: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<Vec<Vec<f64>>>>,
}

fn common_dim(mats: &[SkewEndo]) -> Result<usize> {
    let mut dims = mats.iter().map(SkewEndo::dim);
    let first = dims
        .next()
        .ok_or_else(|| Error::InvalidInput("empty matrix family".into()))?;
    if dims.all(|d| d == first) {
        Ok(first)
    } else {
        Err(Error::DimensionMismatch(
            "matrices in the family have mixed dimensions".into(),
        ))
    }
}

/// Gram-Schmidt residual of `m` against an orthonormal `basis`, with one
/// re-orthogonalization pass.
fn orthogonal_residual(basis: &[SkewEndo], m: &SkewEndo) -> SkewEndo {
    let mut r = m.clone();
    for _ in 0..2 {
        for b in basis {
            let c = r.dot(b);
            r.add_scaled(-c, b);
        }
    }
    r
}

fn max_bracket_defect(basis: &[SkewEndo]) -> Result<f64> {
    max_bracket_defect_in(basis.first().map_or(0, SkewEndo::dim), basis)
}

fn max_bracket_defect_in(ambient_dim: usize, basis: &[SkewEndo]) -> Result<f64> {
    let span = LieSubalgebra {
        ambient_dim,
        basis: basis.to_vec(),
        bracket_defect: 0.0,
        note: None,
    };
    let mut defect: f64 = 0.0;
    for (i, a) in basis.iter().enumerate() {
        for b in &basis[i..] {
            defect = defect.max(span.projection_residual(&bracket(a, b)?));
        }
    }
    Ok(defect)
}

/// Span of the contractions `{Theta_{e_i}}` of a 3-form; by linearity this
/// equals the span of `{Theta_v : v in R^n}`. The result is a span
/// candidate: its `bracket_defect` records how far it is from being closed.
pub fn span_contractions(theta: &ThreeForm, tol: &Tolerances) -> Result<LieSubalgebra> {
    tol.validate()?;
    let n = theta.dim();
    if theta.is_zero() {
        return Ok(LieSubalgebra {
            ambient_dim: n,
            basis: Vec::new(),
            bracket_defect: 0.0,
            note: Some("zero form".into()),
        });
    }
    let contractions: Vec<SkewEndo> = (0..n)
        .map(|a| theta.contract_basis(a))
        .collect::<Result<_>>()?;
    let (_, basis) = rank_of_span(&contractions, tol.rank_rtol);
    let bracket_defect = max_bracket_defect(&basis)?;
    Ok(LieSubalgebra {
        ambient_dim: n,
        basis,
        bracket_defect,
        note: None,
    })
}

/// Smallest bracket-closed subspace of `so(n)` containing the generators,
/// up to tolerance.
///
/// Maintains an orthonormal basis; each round brackets the newly added
/// elements against the whole basis and keeps components orthogonal to the
/// current span above `rank_rtol`. Terminates in at most `n(n-1)/2` rounds.
pub fn lie_closure(generators: &[SkewEndo], tol: &Tolerances) -> Result<LieSubalgebra> {
    tol.validate()?;
    if generators.is_empty() {
        return Err(Error::InvalidInput(
            "lie_closure requires at least one generator".into(),
        ));
    }
    let n = common_dim(generators)?;
    let max_dim = n * (n - 1) / 2;

    let (_, mut basis) = rank_of_span(generators, tol.rank_rtol);
    let mut fresh: Vec<SkewEndo> = basis.clone();

    for _round in 0..=max_dim {
        if fresh.is_empty() || basis.len() >= max_dim {
            break;
        }
        let snapshot = basis.clone();
        let mut added: Vec<SkewEndo> = Vec::new();
        for a in &fresh {
            for b in &snapshot {
                let c = bracket(a, b)?;
                let r = orthogonal_residual(&basis, &c);
                let norm = r.norm();
                if norm > tol.rank_rtol * c.norm().max(1.0) {
                    let unit = r.scaled(1.0 / norm);
                    basis.push(unit.clone());
                    added.push(unit);
                    if basis.len() >= max_dim {
                        break;
                    }
                }
            }
            if basis.len() >= max_dim {
                break;
            }
        }
        fresh = added;
    }

    let bracket_defect = max_bracket_defect(&basis)?;
    Ok(LieSubalgebra {
        ambient_dim: n,
        basis,
        bracket_defect,
        note: None,
    })
}

/// Closure of all pairwise brackets of basis elements: `[h, h]`.
pub fn derived_algebra(h: &LieSubalgebra, tol: &Tolerances) -> Result<LieSubalgebra> {
    let mut gens = Vec::new();
    for (i, a) in h.basis.iter().enumerate() {
        for b in &h.basis[i + 1..] {
            gens.push(bracket(a, b)?);
        }
    }
    if gens.is_empty() {
        return Ok(LieSubalgebra {
            ambient_dim: h.ambient_dim,
            basis: Vec::new(),
            bracket_defect: 0.0,
            note: Some("abelian".into()),
        });
    }
    lie_closure(&gens, tol)
}

fn orthogonality_defect(q: &DMatrix<f64>) -> f64 {
    (q.transpose() * q - DMatrix::<f64>::identity(q.nrows(), q.ncols())).norm()
}

/// Closure of generator families pulled back by per-sample transports:
/// the subalgebra generated by `{tau_s^T A tau_s}` over every sample `s`
/// and every generator `A` of that sample.
pub fn pulled_back_closure(
    generator_sets: &[Vec<SkewEndo>],
    transports: &[DMatrix<f64>],
    tol: &Tolerances,
) -> Result<LieSubalgebra> {
    if generator_sets.len() != transports.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} generator sets vs {} transports",
            generator_sets.len(),
            transports.len()
        )));
    }
    let mut gens = Vec::new();
    for (set, tau) in generator_sets.iter().zip(transports) {
        let defect = orthogonality_defect(tau);
        if defect > 1e-8 {
            return Err(Error::NotOrthogonal(defect));
        }
        for a in set {
            gens.push(a.conjugated(tau));
        }
    }
    if gens.iter().all(|g| g.norm() == 0.0) {
        let n = common_dim(&gens)?;
        return Ok(LieSubalgebra {
            ambient_dim: n,
            basis: Vec::new(),
            bracket_defect: 0.0,
            note: Some("all generators vanish".into()),
        });
    }
    lie_closure(&gens, tol)
}

/// Sampled approximation of the pulled-back contraction algebra: a family
/// of 3-forms indexed by sample points together with one orthogonal
/// transport per point; returns the closure of `{tau^T Theta_v tau}`.
pub fn sampled_h_p(
    forms: &[ThreeForm],
    transports: &[DMatrix<f64>],
    tol: &Tolerances,
) -> Result<LieSubalgebra> {
    let sets: Vec<Vec<SkewEndo>> = forms
        .iter()
        .map(|theta| {
            (0..theta.dim())
                .map(|a| theta.contract_basis(a))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    pulled_back_closure(&sets, transports, tol)
}
