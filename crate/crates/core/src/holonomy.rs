//! Holonomy-style generation for the rescaled connections
//! `nabla - f D^lambda` on a group model: curvature-generated algebras
//! pulled back by the connection's own transport, difference-tensor
//! algebras pulled back by Riemannian transport, flatness scans over
//! constant rescalings, and the independence witnesses behind the
//! curvature-rank estimates.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::algebra::{rank_of_span, SkewEndo, Tolerances};
use crate::closure::{pulled_back_closure, LieSubalgebra};
use crate::error::{Error, Result};
use crate::group::{curvature_f, transport_ode, ConnectionSpec, Curve, GroupModel};
use crate::sampling::{rng_from_seed, unit_vector};

/// Operator norms below this count as flat.
pub const FLAT_TOL: f64 = 1e-10;

struct Sample {
    point: DMatrix<f64>,
    transport_f: DMatrix<f64>,
    transport_lc: DMatrix<f64>,
    orth_defect: f64,
}

fn sample_geodesics(
    model: &GroupModel,
    spec: &ConnectionSpec,
    n_samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<Vec<Sample>> {
    let mut rng = rng_from_seed(seed);
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let direction = unit_vector(model.lie_dim(), &mut rng);
        let res = transport_ode(model, spec, &Curve::Geodesic { direction }, 1.0, tol)?;
        samples.push(Sample {
            point: res.end_point.clone(),
            transport_f: res.transport_f.clone(),
            transport_lc: res.transport_lc.clone(),
            orth_defect: res.max_orthogonality_defect(),
        });
    }
    Ok(samples)
}

fn basis_vector(n: usize, a: usize) -> DVector<f64> {
    DVector::from_fn(n, |r, _| if r == a { 1.0 } else { 0.0 })
}

/// Holonomy algebra of `nabla - f D^lambda` generated Ambrose-Singer
/// style: the closure of the curvature operators at `n_samples` random
/// geodesic end points, pulled back to the identity by the connection's
/// parallel transport.
pub fn ambrose_singer_closure(
    model: &GroupModel,
    spec: &ConnectionSpec,
    n_samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<LieSubalgebra> {
    let n = model.lie_dim();
    let samples = sample_geodesics(model, spec, n_samples, seed, tol)?;
    let mut generator_sets = Vec::with_capacity(samples.len());
    let mut transports = Vec::with_capacity(samples.len());
    for s in &samples {
        let mut gens = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                gens.push(curvature_f(
                    model,
                    spec,
                    &basis_vector(n, i),
                    &basis_vector(n, j),
                    &s.point,
                ));
            }
        }
        generator_sets.push(gens);
        transports.push(s.transport_f.clone());
    }
    pulled_back_closure(&generator_sets, &transports, tol)
}

/// Sampled difference-tensor algebra: the closure of
/// `{tau^T (f(p) D^lambda_v) tau}` over random geodesic end points `p`,
/// with `tau` the Riemannian parallel transport to `p`. For a nowhere-zero
/// `f` this reproduces the span-and-close algebra of the difference
/// tensor.
pub fn h_p_estimate(
    model: &GroupModel,
    spec: &ConnectionSpec,
    n_samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<LieSubalgebra> {
    let n = model.lie_dim();
    if spec.lambda == 0.0 || (spec.field.is_constant() && spec.field.eval(&DMatrix::identity(model.matrix_dim(), model.matrix_dim())) == 0.0) {
        // D = 0: nothing to generate.
        return LieSubalgebra::from_orthonormal_basis(
            n,
            Vec::new(),
            Some("Levi-Civita: D vanishes".into()),
        );
    }
    let samples = sample_geodesics(model, spec, n_samples, seed, tol)?;
    let half_l = 0.5 * spec.lambda;
    let mut generator_sets = Vec::with_capacity(samples.len());
    let mut transports = Vec::with_capacity(samples.len());
    for s in &samples {
        let f_val = spec.field.eval(&s.point);
        let gens: Vec<SkewEndo> = (0..n)
            .map(|a| model.ad(&basis_vector(n, a)).scaled(half_l * f_val))
            .collect();
        generator_sets.push(gens);
        transports.push(s.transport_lc.clone());
    }
    pulled_back_closure(&generator_sets, &transports, tol)
}

/// Maximal curvature operator norm over basis pairs for each constant
/// rescaling `f` in the grid; zeros sit exactly at `f = +-1/lambda`.
pub fn flat_scan(model: &GroupModel, lambda: f64, f_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if lambda == 0.0 {
        return Err(Error::InvalidInput(
            "flat scan requires lambda != 0 (the difference tensor vanishes)".into(),
        ));
    }
    if f_grid.is_empty() {
        return Err(Error::InvalidInput("empty flat-scan grid".into()));
    }
    let n = model.lie_dim();
    let id = DMatrix::<f64>::identity(model.matrix_dim(), model.matrix_dim());
    let mut rows = Vec::with_capacity(f_grid.len());
    for &f in f_grid {
        let spec = ConnectionSpec::new(lambda, crate::group::ScalarField::constant(f))?;
        let mut max_norm: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let r = curvature_f(model, &spec, &basis_vector(n, i), &basis_vector(n, j), &id);
                max_norm = max_norm.max(r.norm());
            }
        }
        rows.push((f, max_norm));
    }
    Ok(rows)
}

pub fn flat_scan_csv(rows: &[(f64, f64)]) -> String {
    let mut out = String::from("f,max_curv_norm\n");
    for (f, norm) in rows {
        out.push_str(&format!("{f:.10},{norm:e}\n"));
    }
    out
}

/// Orthonormal frame whose first vector points along `first`; built from a
/// Householder reflection.
pub fn adapted_frame(n: usize, first: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    let norm = first.norm();
    if !(norm > 0.0) {
        return Err(Error::InvalidInput(
            "adapted frame requires a nonzero leading vector".into(),
        ));
    }
    let v1 = first / norm;
    let e1 = basis_vector(n, 0);
    let w = &e1 - &v1;
    let wnorm2 = w.dot(&w);
    let frame: Vec<DVector<f64>> = (0..n)
        .map(|k| {
            let ek = basis_vector(n, k);
            if wnorm2 < 1e-24 {
                ek
            } else {
                &ek - &w * (2.0 * w.dot(&ek) / wnorm2)
            }
        })
        .collect();
    Ok(frame)
}

/// Witness data behind the flatness and holonomy-dimension arguments.
#[derive(Debug, Clone, Serialize)]
pub struct IndependenceWitness {
    /// Basis pair `(i, j)` with `{D_i, D_j, [D_i, D_j]}` linearly
    /// independent.
    pub pair: (usize, usize),
    /// Rank of the curvature family `R^f(e_1, e_j)`, `j >= 2`, in the
    /// orthonormal frame adapted to `grad f`; `None` when the gradient
    /// vanishes at the point.
    pub curvature_rank: Option<usize>,
    /// Whether that rank reaches `dim g - 1`.
    pub curvature_rank_full: Option<bool>,
}

/// Finds a basis pair `(i, j)` with `{D_i, D_j, [D_i, D_j]}` independent
/// and, when `grad f` is nonzero at the point, checks that the curvature
/// operators paired with the gradient direction are linearly independent.
pub fn independence_witness(
    model: &GroupModel,
    spec: &ConnectionSpec,
    point: &DMatrix<f64>,
    tol: &Tolerances,
) -> Result<IndependenceWitness> {
    let n = model.lie_dim();
    let half_l = 0.5 * spec.lambda;
    if spec.lambda == 0.0 {
        return Err(Error::NoWitness(
            "lambda = 0: the difference tensor vanishes".into(),
        ));
    }
    let mut pair = None;
    'outer: for i in 0..n {
        for j in (i + 1)..n {
            let di = model.ad(&basis_vector(n, i)).scaled(half_l);
            let dj = model.ad(&basis_vector(n, j)).scaled(half_l);
            let comm = crate::algebra::bracket(&di, &dj)?;
            let (rank, _) = rank_of_span(&[di, dj, comm], tol.rank_rtol);
            if rank == 3 {
                pair = Some((i, j));
                break 'outer;
            }
        }
    }
    let pair = pair.ok_or_else(|| {
        Error::NoWitness(
            "no basis pair (i, j) with {D_i, D_j, [D_i, D_j]} linearly independent".into(),
        )
    })?;

    let grad = spec.field.gradient(model, point);
    let (curvature_rank, curvature_rank_full) = if grad.norm() > 1e-10 {
        let frame = adapted_frame(n, &grad)?;
        let ops: Vec<SkewEndo> = (1..n)
            .map(|j| curvature_f(model, spec, &frame[0], &frame[j], point))
            .collect();
        let (rank, _) = rank_of_span(&ops, tol.rank_rtol);
        (Some(rank), Some(rank == n - 1))
    } else {
        (None, None)
    };

    Ok(IndependenceWitness {
        pair,
        curvature_rank,
        curvature_rank_full,
    })
}

/// Summary of the generated holonomy data for one connection.
#[derive(Debug, Clone, Serialize)]
pub struct HolonomyReport {
    pub group: String,
    pub lambda: f64,
    pub field: String,
    pub n_samples: usize,
    pub seed: u64,
    /// Dimension of the Ambrose-Singer curvature closure.
    pub hol_dim: usize,
    /// Dimension of the pulled-back difference-tensor closure.
    pub h_p_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_p_note: Option<String>,
    /// Whether every sampled curvature operator norm is below 1e-10.
    pub flat: bool,
    pub max_curvature_norm: f64,
    /// Worst projection residual of a holonomy basis element onto ad(g).
    pub containment_residual: f64,
    pub max_transport_orth_defect: f64,
    pub hol_bracket_defect: f64,
    pub tolerances: Tolerances,
}

/// Worst projection residual of the subalgebra's basis onto the image of
/// the adjoint representation.
pub fn containment_in_ad(model: &GroupModel, h: &LieSubalgebra, tol: &Tolerances) -> f64 {
    let ads: Vec<SkewEndo> = model
        .ad_basis()
        .iter()
        .map(|m| SkewEndo::new(m.clone(), 1e-8).expect("ad matrices are skew"))
        .collect();
    let (_, ad_basis) = rank_of_span(&ads, tol.rank_rtol);
    let mut worst: f64 = 0.0;
    for b in h.basis() {
        let mut r = b.clone();
        for u in &ad_basis {
            let c = r.dot(u);
            r.add_scaled(-c, u);
        }
        worst = worst.max(r.norm());
    }
    worst
}

/// Runs the holonomy and difference-tensor generation for one connection
/// and assembles the report.
pub fn holonomy_report(
    model: &GroupModel,
    spec: &ConnectionSpec,
    n_samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<HolonomyReport> {
    let n = model.lie_dim();
    let samples = sample_geodesics(model, spec, n_samples, seed, tol)?;
    let mut max_curv: f64 = 0.0;
    let mut max_orth: f64 = 0.0;
    let id = DMatrix::<f64>::identity(model.matrix_dim(), model.matrix_dim());
    let mut points: Vec<&DMatrix<f64>> = samples.iter().map(|s| &s.point).collect();
    points.push(&id);
    for p in points {
        for i in 0..n {
            for j in (i + 1)..n {
                let r = curvature_f(model, spec, &basis_vector(n, i), &basis_vector(n, j), p);
                max_curv = max_curv.max(r.norm());
            }
        }
    }
    for s in &samples {
        max_orth = max_orth.max(s.orth_defect);
    }

    let hol = ambrose_singer_closure(model, spec, n_samples, seed, tol)?;
    let h_p = h_p_estimate(model, spec, n_samples, seed, tol)?;
    let containment = containment_in_ad(model, &hol, tol);

    Ok(HolonomyReport {
        group: model.name().to_string(),
        lambda: spec.lambda,
        field: spec.field.describe(),
        n_samples,
        seed,
        hol_dim: hol.dim(),
        h_p_dim: h_p.dim(),
        h_p_note: h_p.note().map(str::to_string),
        flat: max_curv < FLAT_TOL,
        max_curvature_norm: max_curv,
        containment_residual: containment,
        max_transport_orth_defect: max_orth,
        hol_bracket_defect: hol.bracket_defect(),
        tolerances: *tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{make_group, ScalarField};
    use approx::assert_relative_eq;

    fn canonical(lambda: f64) -> ConnectionSpec {
        ConnectionSpec::canonical(lambda).unwrap()
    }

    #[test]
    fn flat_canonical_connections_have_trivial_holonomy() {
        let g = make_group("su2").unwrap();
        let tol = Tolerances::default();
        for lambda in [1.0, -1.0] {
            let h = ambrose_singer_closure(&g, &canonical(lambda), 4, 7, &tol).unwrap();
            assert_eq!(h.dim(), 0, "lambda = {lambda}");
        }
    }

    #[test]
    fn nonflat_canonical_holonomy_is_full_on_su2() {
        let g = make_group("su2").unwrap();
        let tol = Tolerances::default();
        let h = ambrose_singer_closure(&g, &canonical(2.0), 4, 7, &tol).unwrap();
        assert_eq!(h.dim(), 3);
        assert!(containment_in_ad(&g, &h, &tol) < 1e-8);
    }

    #[test]
    fn trace_field_holonomy_su2_lambda_one() {
        // lambda = 1 with nonconstant f is no longer flat.
        let g = make_group("su2").unwrap();
        let tol = Tolerances::default();
        let field = ScalarField::trace(1.0, 0.5, 13, g.matrix_dim());
        let spec = ConnectionSpec::new(1.0, field).unwrap();
        let h = ambrose_singer_closure(&g, &spec, 4, 7, &tol).unwrap();
        assert_eq!(h.dim(), 3);
    }

    #[test]
    fn h_p_estimate_dimensions() {
        let g = make_group("su2").unwrap();
        let tol = Tolerances::default();
        // Any lambda != 0 with f = 1: the full adjoint algebra.
        let h = h_p_estimate(&g, &canonical(1.0), 4, 3, &tol).unwrap();
        assert_eq!(h.dim(), 3);
        // lambda = 0: D vanishes.
        let h0 = h_p_estimate(&g, &canonical(0.0), 4, 3, &tol).unwrap();
        assert_eq!(h0.dim(), 0);
        assert_eq!(h0.note(), Some("Levi-Civita: D vanishes"));
        // f identically 0 likewise.
        let spec = ConnectionSpec::new(2.0, ScalarField::constant(0.0)).unwrap();
        let hz = h_p_estimate(&g, &spec, 4, 3, &tol).unwrap();
        assert_eq!(hz.dim(), 0);
    }

    #[test]
    fn flat_scan_zeros_exactly_at_inverse_lambda() {
        let g = make_group("su2").unwrap();
        for lambda in [1.0, 2.0] {
            let grid: Vec<f64> = (0..=400).map(|k| -2.0 + (k as f64 * 4.0) / 400.0).collect();
            let rows = flat_scan(&g, lambda, &grid).unwrap();
            let zeros: Vec<f64> = rows
                .iter()
                .filter(|(_, norm)| *norm < FLAT_TOL)
                .map(|(f, _)| *f)
                .collect();
            assert_eq!(zeros.len(), 2, "lambda = {lambda}: {zeros:?}");
            assert_relative_eq!(zeros[0], -1.0 / lambda, epsilon = 1e-12);
            assert_relative_eq!(zeros[1], 1.0 / lambda, epsilon = 1e-12);
        }
    }

    #[test]
    fn flat_scan_rejects_bad_input() {
        let g = make_group("su2").unwrap();
        assert!(flat_scan(&g, 0.0, &[0.5]).is_err());
        assert!(flat_scan(&g, 1.0, &[]).is_err());
    }

    #[test]
    fn adapted_frame_is_orthonormal_with_leading_gradient() {
        let v = DVector::from_vec(vec![0.3, -0.4, 1.2, 0.1]);
        let frame = adapted_frame(4, &v).unwrap();
        assert_relative_eq!((&frame[0] - &v / v.norm()).norm(), 0.0, epsilon = 1e-12);
        for a in 0..4 {
            for b in a..4 {
                let expected = if a == b { 1.0 } else { 0.0 };
                assert_relative_eq!(frame[a].dot(&frame[b]), expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn independence_witness_su2() {
        let g = make_group("su2").unwrap();
        let tol = Tolerances::default();
        let id = DMatrix::<f64>::identity(4, 4);
        let w = independence_witness(&g, &canonical(1.0), &id, &tol).unwrap();
        assert_eq!(w.pair, (0, 1));
        // Constant field: no adapted-frame check.
        assert!(w.curvature_rank.is_none());
    }

    #[test]
    fn independence_witness_trace_field_curvature_rank() {
        let g = make_group("su2").unwrap();
        let tol = Tolerances::default();
        let field = ScalarField::trace(0.0, 1.0, 5, g.matrix_dim());
        let spec = ConnectionSpec::new(2.0, field).unwrap();
        let p = crate::group::geodesic(&g, &g.random_direction(8), 0.6);
        let w = independence_witness(&g, &spec, &p, &tol).unwrap();
        assert_eq!(w.curvature_rank, Some(2));
        assert_eq!(w.curvature_rank_full, Some(true));
    }

    #[test]
    fn independence_witness_fails_on_abelian_model() {
        let g = make_group("so_n(2)").unwrap();
        let tol = Tolerances::default();
        let id = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(
            independence_witness(&g, &canonical(1.0), &id, &tol),
            Err(Error::NoWitness(_))
        ));
    }

    #[test]
    fn holonomy_report_is_deterministic_and_flags_flatness() {
        let g = make_group("su2").unwrap();
        let tol = Tolerances::default();
        let r1 = holonomy_report(&g, &canonical(1.0), 4, 11, &tol).unwrap();
        let r2 = holonomy_report(&g, &canonical(1.0), 4, 11, &tol).unwrap();
        assert!(r1.flat);
        assert_eq!(r1.hol_dim, 0);
        assert_eq!(r1.h_p_dim, 3);
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r2).unwrap()
        );

        let r3 = holonomy_report(&g, &canonical(2.0), 4, 11, &tol).unwrap();
        assert!(!r3.flat);
        assert_eq!(r3.hol_dim, 3);
        assert!(r3.containment_residual < 1e-8);
        assert!(r3.max_transport_orth_defect < 1e-8);
    }

    #[test]
    fn sample_dimensions_saturate() {
        let g = make_group("su2").unwrap();
        let tol = Tolerances::default();
        let field = ScalarField::trace(1.0, 0.5, 3, g.matrix_dim());
        let spec = ConnectionSpec::new(2.0, field).unwrap();
        let h8 = ambrose_singer_closure(&g, &spec, 8, 5, &tol).unwrap();
        let h16 = ambrose_singer_closure(&g, &spec, 16, 5, &tol).unwrap();
        assert_eq!(h8.dim(), h16.dim());
    }
}
