//! Built-in example library: 3-forms and group models covering every
//! regime of the holonomy-generation machinery, each with tagged expected
//! values.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::algebra::{SkewEndo, ThreeForm, Tolerances};
use crate::closure::{lie_closure, sampled_h_p, span_contractions, LieSubalgebra};
use crate::error::{Error, Result};
use crate::group::{make_group, GroupModel};
use crate::sampling::{rng_from_seed, unit_vector};

/// Where an expected value comes from: stated in the source material,
/// forced by definitions, or computed by an independent oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Paper,
    Trivial,
    Derived,
}

/// A tagged expected value for an entry, e.g. `("closure_dim", 3)`.
#[derive(Debug, Clone, Serialize)]
pub struct Expectation {
    pub quantity: &'static str,
    pub value: f64,
    pub provenance: Provenance,
}

/// The object an entry constructs.
#[derive(Debug, Clone)]
pub enum CatalogObject {
    Form(ThreeForm),
    /// A family of forms indexed by sample points (disjoint supports make
    /// the two-point construction faithful with identity transports).
    FormFamily(Vec<ThreeForm>),
    Group(GroupModel),
    /// Skew operators `v -> D_v` on `R^n` that do not come from a 3-form;
    /// `totally_skew` records whether the induced trilinear pairing passed
    /// the alternation check on load.
    GeneratorFamily {
        ambient_dim: usize,
        generators: Vec<SkewEndo>,
        totally_skew: bool,
    },
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub key: &'static str,
    pub description: &'static str,
    pub object: CatalogObject,
    pub expectations: Vec<Expectation>,
}

pub fn catalog_keys() -> &'static [&'static str] {
    &[
        "e123_r4",
        "e123_e234_r4_twopoint",
        "su2",
        "su3",
        "so4",
        "so5",
        "cross_r7",
        "product_2n",
    ]
}

fn form(dim: usize, name: &str, terms: &[(usize, usize, usize, f64)]) -> ThreeForm {
    let mut t = ThreeForm::zero(dim);
    for &(i, j, k, c) in terms {
        t.add_term(i, j, k, c).expect("catalog triple");
    }
    t.with_name(name)
}

/// Octonionic cross-product 3-form on `R^7` (structure constants of the
/// imaginary octonions, Fano triples 123, 145, 176, 246, 257, 347, 365 in
/// 1-based labels). Satisfies `|v x w| = |v||w|` on orthogonal pairs.
pub fn cross_product_form() -> ThreeForm {
    form(
        7,
        "cross_r7",
        &[
            (0, 1, 2, 1.0),
            (0, 3, 4, 1.0),
            (0, 5, 6, -1.0),
            (1, 3, 5, 1.0),
            (1, 4, 6, 1.0),
            (2, 3, 6, 1.0),
            (2, 4, 5, -1.0),
        ],
    )
}

/// Block operators of the doubled construction on `R^{2n}`:
/// `D~_{(v,w)}(v', w') = (D_v v' + D_w w', D_w(v' + w'))`, i.e.
/// `[[D_v, D_w], [D_w, D_w]]`. Each operator is skew, but the induced
/// trilinear pairing is not alternating in the first two slots; the
/// returned flag records the check instead of symmetrizing.
pub fn product_generators(base: &ThreeForm) -> Result<(Vec<SkewEndo>, bool)> {
    let n = base.dim();
    let mut generators = Vec::with_capacity(2 * n);
    for b in 0..2 * n {
        let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
        if b < n {
            let dv = base.contract_basis(b)?.into_matrix();
            for r in 0..n {
                for c in 0..n {
                    m[(r, c)] = dv[(r, c)];
                }
            }
        } else {
            let dw = base.contract_basis(b - n)?.into_matrix();
            for r in 0..n {
                for c in 0..n {
                    m[(r, n + c)] = dw[(r, c)];
                    m[(n + r, c)] = dw[(r, c)];
                    m[(n + r, n + c)] = dw[(r, c)];
                }
            }
        }
        generators.push(SkewEndo::new(m, 1e-12)?);
    }
    // Alternation check of T(x, y, z) = <D~_x y, z> under the (x, y) swap,
    // on random unit vectors.
    let mut rng = rng_from_seed(2024);
    let apply = |x: &nalgebra::DVector<f64>, y: &nalgebra::DVector<f64>| {
        let mut out = nalgebra::DVector::<f64>::zeros(2 * n);
        for (b, g) in generators.iter().enumerate() {
            out += g.apply(y) * x[b];
        }
        out
    };
    let mut defect: f64 = 0.0;
    for _ in 0..16 {
        let x = unit_vector(2 * n, &mut rng);
        let y = unit_vector(2 * n, &mut rng);
        let z = unit_vector(2 * n, &mut rng);
        defect = defect.max((apply(&x, &y).dot(&z) + apply(&y, &x).dot(&z)).abs());
    }
    Ok((generators, defect < 1e-10))
}

/// Retrieves a catalog entry by key.
pub fn get(key: &str) -> Result<CatalogEntry> {
    let exp = |quantity, value, provenance| Expectation {
        quantity,
        value,
        provenance,
    };
    match key {
        "e123_r4" => Ok(CatalogEntry {
            key: "e123_r4",
            description: "the 3-form e_123 on R^4; closure so(3), reducible",
            object: CatalogObject::Form(form(4, "e123_r4", &[(0, 1, 2, 1.0)])),
            expectations: vec![
                exp("closure_dim", 3.0, Provenance::Paper),
                exp("irreducible", 0.0, Provenance::Paper),
            ],
        }),
        "e123_e234_r4_twopoint" => Ok(CatalogEntry {
            key: "e123_e234_r4_twopoint",
            description: "two-point family e_123 / e_234 on R^4 with disjoint supports; \
                          sampled closure so(4)",
            object: CatalogObject::FormFamily(vec![
                form(4, "e123", &[(0, 1, 2, 1.0)]),
                form(4, "e234", &[(1, 2, 3, 1.0)]),
            ]),
            expectations: vec![exp("closure_dim", 6.0, Provenance::Paper)],
        }),
        "su2" => Ok(CatalogEntry {
            key: "su2",
            description: "su(2) with the bi-invariant metric; bracket form c*e_123",
            object: CatalogObject::Group(make_group("su2")?),
            expectations: vec![
                exp("lie_dim", 3.0, Provenance::Trivial),
                exp("closure_dim", 3.0, Provenance::Trivial),
                exp("rank", 1.0, Provenance::Trivial),
            ],
        }),
        "su3" => Ok(CatalogEntry {
            key: "su3",
            description: "su(3) with the bi-invariant metric; the reference simple system",
            object: CatalogObject::Group(make_group("su3")?),
            expectations: vec![
                exp("lie_dim", 8.0, Provenance::Trivial),
                exp("closure_dim", 8.0, Provenance::Derived),
                exp("rank", 2.0, Provenance::Derived),
                exp("simple", 1.0, Provenance::Paper),
                exp("invariant_threeform_dim", 1.0, Provenance::Paper),
            ],
        }),
        "so4" => Ok(CatalogEntry {
            key: "so4",
            description: "so(4), semisimple but not simple",
            object: CatalogObject::Group(make_group("so_n(4)")?),
            expectations: vec![
                exp("lie_dim", 6.0, Provenance::Derived),
                exp("simple", 0.0, Provenance::Trivial),
            ],
        }),
        "so5" => Ok(CatalogEntry {
            key: "so5",
            description: "so(5), simple of rank 2",
            object: CatalogObject::Group(make_group("so_n(5)")?),
            expectations: vec![
                exp("lie_dim", 10.0, Provenance::Trivial),
                exp("closure_dim", 10.0, Provenance::Derived),
                exp("rank", 2.0, Provenance::Derived),
                exp("simple", 1.0, Provenance::Paper),
            ],
        }),
        "cross_r7" => Ok(CatalogEntry {
            key: "cross_r7",
            description: "octonionic cross-product 3-form on R^7; span dim 7, closure so(7)",
            object: CatalogObject::Form(cross_product_form()),
            expectations: vec![
                exp("span_dim", 7.0, Provenance::Derived),
                exp("closure_dim", 21.0, Provenance::Derived),
            ],
        }),
        "product_2n" => {
            let (generators, totally_skew) = product_generators(&cross_product_form())?;
            Ok(CatalogEntry {
                key: "product_2n",
                description: "doubled block construction on R^14 over the R^7 cross product; \
                              pulled-back closure so(14)",
                object: CatalogObject::GeneratorFamily {
                    ambient_dim: 14,
                    generators,
                    totally_skew,
                },
                expectations: vec![
                    exp("closure_dim", 91.0, Provenance::Paper),
                    exp("totally_skew", 0.0, Provenance::Derived),
                ],
            })
        }
        other => Err(Error::UnknownCatalogKey(other.to_string())),
    }
}

impl CatalogEntry {
    pub fn expectation(&self, quantity: &str) -> Option<f64> {
        self.expectations
            .iter()
            .find(|e| e.quantity == quantity)
            .map(|e| e.value)
    }

    /// The 3-form an analysis of this entry is based on: the form itself,
    /// the first form of a family, or a group's bracket form.
    pub fn three_form(&self) -> Result<ThreeForm> {
        match &self.object {
            CatalogObject::Form(t) => Ok(t.clone()),
            CatalogObject::FormFamily(ts) => Ok(ts[0].clone()),
            CatalogObject::Group(g) => g.bracket_form(),
            CatalogObject::GeneratorFamily { .. } => Err(Error::InvalidInput(format!(
                "catalog entry '{}' is not a totally skew 3-form (flagged on load)",
                self.key
            ))),
        }
    }

    /// Export in the JSON 3-form format.
    pub fn export_three_form_json(&self) -> Result<String> {
        Ok(self.three_form()?.to_json_string())
    }

    /// The generated subalgebra the entry is about: the bracket closure of
    /// the form's contraction span, the sampled closure of a family (with
    /// identity transports), or the adjoint algebra of a group.
    pub fn closure(&self, tol: &Tolerances) -> Result<LieSubalgebra> {
        match &self.object {
            CatalogObject::Form(t) => {
                let span = span_contractions(t, tol)?;
                if span.dim() == 0 {
                    return Ok(span);
                }
                lie_closure(span.basis(), tol)
            }
            CatalogObject::FormFamily(ts) => {
                let transports: Vec<DMatrix<f64>> = ts
                    .iter()
                    .map(|t| DMatrix::identity(t.dim(), t.dim()))
                    .collect();
                sampled_h_p(ts, &transports, tol)
            }
            CatalogObject::Group(g) => {
                let span = span_contractions(&g.bracket_form()?, tol)?;
                lie_closure(span.basis(), tol)
            }
            CatalogObject::GeneratorFamily { generators, .. } => lie_closure(generators, tol),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closure::pulled_back_closure;
    use crate::sampling::random_orthogonal;
    use approx::assert_relative_eq;

    #[test]
    fn unknown_key_errors() {
        assert!(matches!(get("nope"), Err(Error::UnknownCatalogKey(_))));
    }

    #[test]
    fn every_entry_loads_and_reproduces_closure_expectations() {
        let tol = Tolerances::default();
        for key in catalog_keys() {
            let entry = get(key).unwrap();
            if let Some(expected) = entry.expectation("closure_dim") {
                let h = entry.closure(&tol).unwrap();
                assert_eq!(h.dim() as f64, expected, "closure_dim of {key}");
            }
            if let Some(expected) = entry.expectation("lie_dim") {
                if let CatalogObject::Group(g) = &entry.object {
                    assert_eq!(g.lie_dim() as f64, expected, "lie_dim of {key}");
                }
            }
        }
    }

    #[test]
    fn cross_r7_norm_identity_and_span() {
        let tol = Tolerances::default();
        let t = cross_product_form();
        let mut rng = rng_from_seed(1);
        for _ in 0..10 {
            let v = unit_vector(7, &mut rng);
            let mut w = unit_vector(7, &mut rng);
            let c = w.dot(&v);
            w -= &v * c;
            w /= w.norm();
            assert_relative_eq!(t.contract(&w).unwrap().apply(&v).norm(), 1.0, epsilon = 1e-12);
        }
        let span = span_contractions(&t, &tol).unwrap();
        assert_eq!(span.dim(), 7);
        // The span is not closed; the closure is recorded as so(7).
        assert!(span.bracket_defect() > 0.1);
    }

    #[test]
    fn product_2n_is_flagged_not_totally_skew() {
        let entry = get("product_2n").unwrap();
        match &entry.object {
            CatalogObject::GeneratorFamily { totally_skew, generators, ambient_dim } => {
                assert!(!totally_skew);
                assert_eq!(*ambient_dim, 14);
                assert_eq!(generators.len(), 14);
            }
            _ => panic!("wrong object kind"),
        }
        assert!(entry.export_three_form_json().is_err());
    }

    #[test]
    fn product_2n_with_block_transports_generates_so14() {
        let tol = Tolerances::default();
        let entry = get("product_2n").unwrap();
        let CatalogObject::GeneratorFamily { generators, .. } = &entry.object else {
            panic!("wrong object kind");
        };
        let mut sets = Vec::new();
        let mut taus = Vec::new();
        for s in 0..8u64 {
            let mut rng = rng_from_seed(100 + s);
            let q1 = random_orthogonal(7, &mut rng);
            let q2 = random_orthogonal(7, &mut rng);
            let mut q = DMatrix::<f64>::zeros(14, 14);
            for r in 0..7 {
                for c in 0..7 {
                    q[(r, c)] = q1[(r, c)];
                    q[(7 + r, 7 + c)] = q2[(r, c)];
                }
            }
            sets.push(generators.clone());
            taus.push(q);
        }
        let h = pulled_back_closure(&sets, &taus, &tol).unwrap();
        assert_eq!(h.dim() as f64, entry.expectation("closure_dim").unwrap());
    }

    #[test]
    fn group_entries_export_bracket_forms() {
        let json = get("su2").unwrap().export_three_form_json().unwrap();
        let back = ThreeForm::from_json_str(&json).unwrap();
        assert_eq!(back.dim(), 3);
        let terms: Vec<_> = back.terms().collect();
        assert_eq!(terms.len(), 1);
        assert!(terms[0].3 > 0.0);
    }

    #[test]
    fn twopoint_family_closure_is_so4() {
        let tol = Tolerances::default();
        let entry = get("e123_e234_r4_twopoint").unwrap();
        let h = entry.closure(&tol).unwrap();
        assert_eq!(h.dim(), 6);
        assert!(h.bracket_defect() < 1e-9);
    }
}
