use mltet::dispersion::{c_k, numerical_omega, stability_polynomial, StiffnessMode};
use mltet::kernels::*;
use mltet::mesh::{build_block_mesh, BoxDomain, TetMesh};
use mltet::poly::BaryPoly;
use mltet::quadrature::{builtin_generator_set, builtin_stiffness_rule};
use mltet::refelement::ReferenceElement;
use mltet::refgeom::{classify_point, permutations, BarycentricPoint, OrbitType, SymmetricOrbit};
use mltet::ElementId;
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use std::sync::OnceLock;

fn p2n15() -> &'static ReferenceElement {
    static EL: OnceLock<ReferenceElement> = OnceLock::new();
    EL.get_or_init(|| ReferenceElement::new(ElementId::P2n15).unwrap())
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

fn geometry() -> impl Strategy<Value = ElementGeometry> {
    (prop::array::uniform9(-0.4f64..0.4), prop::array::uniform3(-3.0f64..3.0)).prop_filter_map(
        "degenerate",
        |(j, o)| {
            let j = Matrix3::from_row_slice(&j) + Matrix3::identity();
            ElementGeometry::from_jacobian(Vector3::from(o), j).ok().filter(|g| g.det.abs() > 0.05)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn barycentric_monomial_integrals(e in prop::array::uniform4(0u32..5)) {
        // int prod l_i^a_i = prod a_i! / (sum a_i + 3)! on the reference tetrahedron
        let expect = e.iter().map(|&a| factorial(a)).product::<f64>() / factorial(e.iter().sum::<u32>() + 3);
        let got = BaryPoly::monomial(e).integrate();
        prop_assert!((got - expect).abs() <= 1e-15 * expect.max(1e-300) + 1e-18);
        let cart = BaryPoly::monomial(e).to_cartesian().integrate();
        prop_assert!((cart - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn orbits_are_closed_under_symmetry(f1 in 0.01f64..0.3, f2 in 0.01f64..0.3) {
        let o = SymmetricOrbit::new(OrbitType::S211, vec![f1, f2.min(1.0 - 2.0 * f1 - 0.01)]).unwrap();
        let pts = o.points();
        prop_assert_eq!(pts.len(), 12);
        for perm in permutations() {
            for p in &pts {
                prop_assert!(o.contains(&p.permuted(perm), 1e-14));
            }
        }
        let (kind, _) = classify_point(&pts[5], 1e-12);
        prop_assert!(kind == OrbitType::S211 || kind == OrbitType::S31 || kind == OrbitType::S22);
    }

    #[test]
    fn classify_roundtrip(c in 0.01f64..0.24) {
        let o = SymmetricOrbit::new(OrbitType::S31, vec![c]).unwrap();
        for p in o.points() {
            let (kind, params) = classify_point(&p, 1e-13);
            prop_assert_eq!(kind, OrbitType::S31);
            prop_assert!((params[0] - c).abs() < 1e-14);
        }
        let b = BarycentricPoint::from_cartesian(o.base_point().cartesian());
        prop_assert!(b.distance_inf(&o.base_point()) < 1e-15);
    }

    #[test]
    fn rules_integrate_every_generator_image(pick in 0usize..5) {
        let id = ElementId::ALL[pick];
        let rule = builtin_stiffness_rule(id);
        for g in &builtin_generator_set(id).generators {
            for f in g.images() {
                let exact = f.integrate();
                prop_assert!((rule.apply(&f) - exact).abs() < 1e-13 * exact.abs().max(1e-3));
            }
        }
    }

    #[test]
    fn element_stiffness_is_symmetric(g in geometry(), u in prop::collection::vec(-1.0f64..1.0, 15),
                                      v in prop::collection::vec(-1.0f64..1.0, 15)) {
        let t = &p2n15().tables;
        let nq = t.n_quad();
        let cs = transform_scalar_constant(1.4, &g);
        let ss = transform_scalar(&vec![1.4; nq], &t.quad_weights, &g);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut au = vec![0.0; 15];
        let mut av = vec![0.0; 15];
        for mode in [StiffnessMode::Exact, StiffnessMode::Rule] {
            match mode {
                StiffnessMode::Exact => {
                    matvec_exact_scalar(t, &cs, &u, &mut au, &mut OpCount::default());
                    matvec_exact_scalar(t, &cs, &v, &mut av, &mut OpCount::default());
                }
                StiffnessMode::Rule => {
                    matvec_quad_scalar(t, &ss, &u, &mut au, &mut OpCount::default());
                    matvec_quad_scalar(t, &ss, &v, &mut av, &mut OpCount::default());
                }
            }
            let (vau, uav) = (dot(&v, &au), dot(&u, &av));
            prop_assert!((vau - uav).abs() < 1e-12 * (1.0 + vau.abs()));
            prop_assert!(dot(&u, &au) >= -1e-12);
        }
    }

    #[test]
    fn elastic_variants_agree(g in geometry(), u in prop::collection::vec(-1.0f64..1.0, 45),
                              lam in 0.1f64..5.0, mu in 0.1f64..5.0) {
        let t = &p2n15().tables;
        let nq = t.n_quad();
        let c = ElasticTensor::isotropic(lam, mu);
        let full = ElasticSamples::full(&vec![c; nq], &t.quad_weights, &g);
        let voigt = ElasticSamples::voigt(&vec![c; nq], &t.quad_weights, &g);
        let iso = ElasticSamples::isotropic(&vec![lam; nq], &vec![mu; nq], &t.quad_weights, &g);
        let mut outs = Vec::new();
        for s in [&full, &voigt, &iso] {
            let mut o = vec![0.0; 45];
            matvec_quad_elastic(t, s, &u, &mut o, &mut OpCount::default());
            outs.push(o);
        }
        let scale = outs[0].iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for o in &outs[1..] {
            for (a, b) in outs[0].iter().zip(o) {
                prop_assert!((a - b).abs() < 1e-12 * scale);
            }
        }
    }

    #[test]
    fn stability_region(k in 1u32..=4, frac in 0.0f64..0.999) {
        let ck = c_k(k).unwrap();
        let z = frac * ck;
        let p = stability_polynomial(z, 1.0, k);
        prop_assert!(p.abs() <= 1.0 + 1e-12, "K={} z={} P={}", k, z, p);
        prop_assert!(numerical_omega(z, 1.0, k).is_some());
        prop_assert!(stability_polynomial(ck * 1.02, 1.0, k).abs() > 1.0);
    }

    #[test]
    fn mesh_text_roundtrip(n in 1usize..3, a in 0.0f64..0.3) {
        let m = build_block_mesh([n, n + 1, 1], BoxDomain::unit(), a).unwrap();
        let back = TetMesh::from_text(&m.to_text()).unwrap();
        prop_assert_eq!(&back.tets, &m.tets);
        prop_assert_eq!(&back.vertices, &m.vertices);
        prop_assert!((m.volume() - 1.0).abs() < 1e-12);
        prop_assert!(m.min_det() > 0.0);
    }
}
