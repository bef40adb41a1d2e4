//! Property tests over randomly drawn small schedules.

use fanlab::basis::roundtrip_residual;
use fanlab::build::Build;
use fanlab::geometry::{coord_to_index, index_to_coord, RegionTag};
use fanlab::mmio::{read_matrix, write_matrix};
use fanlab::operator::{op_norm, shift_e, NormMethod};
use fanlab::polynet::{NetConstraint, Poly};
use fanlab::reflexivity::{build_a, column_mismatches, noncommutation_witness};
use fanlab::report::{Entry, Status, VerificationReport};
use fanlab::scalar::{Exact, Scalar};
use fanlab::schedule::{NetParams, ScalarField, StageParams, StageSchedule, WeightMode};
use fanlab::sparse::{sparse_norm2, sparse_sub, SparseCols};
use fanlab::suites::{descent_residual, layoff_shift_residual};
use fanlab::unicell::{solve_poly, ToeplitzSystem};
use proptest::prelude::*;

/// A net polynomial of degree at most `d` with coefficients in
/// `{-1, -0.5, 0, 0.5, 1}` and l1 norm in `(0, 2]`.
fn fan_poly(d: usize, zero_constant: bool) -> impl Strategy<Value = Poly> {
    prop::collection::vec(-2i32..=2, d + 1).prop_filter_map("nonzero, within radius", move |mut v| {
        if zero_constant {
            v[0] = 0;
        }
        let coeffs: Vec<f64> = v.iter().map(|&a| a as f64 * 0.5).collect();
        let p = Poly::from_real(&coeffs);
        (!p.is_zero() && p.ell1() <= 2.0).then_some(p)
    })
}

fn schedule(zero_constant: bool) -> impl Strategy<Value = StageSchedule> {
    let min_d = usize::from(zero_constant);
    (1usize..=3, min_d..=2, 1usize..=6, 1usize..=2, 1usize..=2, 0usize..20, 0usize..20, 1usize..40)
        .prop_flat_map(move |(xi, d, extra_b, h, k, g1, g2, tail)| {
            let b = 2 * xi + d + extra_b;
            let nu = xi * (b + 1);
            let c1 = nu + 1 + g1;
            let mut c = vec![c1];
            if k == 2 {
                c.push(h * c1 + nu + 1 + g2);
            }
            prop::collection::vec(fan_poly(d, zero_constant), k).prop_map(move |fan| {
                let st = StageParams {
                    xi,
                    nu,
                    b,
                    c: c.clone(),
                    h,
                    k,
                    d,
                    gamma: 0.125,
                    delta: 0.25,
                    eps: 0.25,
                    net: NetParams {
                        radius: 2.0,
                        resolution: 0.5,
                        constraint: if zero_constant { NetConstraint::ZeroConstantTerm } else { NetConstraint::None },
                    },
                    fan,
                };
                let xi_final = st.fan_end() + tail;
                StageSchedule {
                    stages: vec![st],
                    xi_final,
                    scalar_field: ScalarField::Real,
                    weight_mode: WeightMode::RationalApprox,
                }
            })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_schedules_validate(s in schedule(false)) {
        prop_assert!(s.validate().is_empty(), "{:?}", s.validate());
    }

    #[test]
    fn exact_basis_roundtrip_is_identity(s in schedule(false)) {
        let b = Build::<Exact>::new(s).unwrap();
        let (dev, exact) = roundtrip_residual(&b.basis);
        prop_assert!(exact);
        prop_assert_eq!(dev, 0.0);
    }

    #[test]
    fn t_conjugates_the_shift_exactly(s in schedule(false)) {
        let b = Build::<Exact>::new(s).unwrap();
        let n = b.n_trunc();
        for j in 0..=n {
            let lhs = b.to_e(&b.t.matrix.col_vec(j));
            let rhs = shift_e(&b.basis.f_in_e.col_vec(j), 1, n);
            prop_assert_eq!(lhs, rhs, "column {}", j);
        }
    }

    #[test]
    fn layoff_action_and_descent_are_exact(s in schedule(false)) {
        let b = Build::<Exact>::new(s).unwrap();
        prop_assert_eq!(layoff_shift_residual(&b).unwrap().0, 0.0);
        let (dev, count) = descent_residual(&b, 1).unwrap();
        prop_assert_eq!(dev, 0.0);
        let st = b.schedule.stage(1);
        prop_assert_eq!(count, (st.h + 1).pow(st.k as u32) - 1);
    }

    #[test]
    fn working_coordinates_roundtrip(s in schedule(false)) {
        let layout = fanlab::geometry::Layout::new(&s);
        for j in 0..=s.xi_final {
            if let RegionTag::CWorking(coord) = layout.classify(j).unwrap() {
                prop_assert_eq!(coord_to_index(&coord, &s).unwrap(), j);
                prop_assert_eq!(index_to_coord(j, 1, &s).unwrap(), coord);
            }
        }
    }

    #[test]
    fn reflexive_witnesses_hold_exactly(s in schedule(true)) {
        let b = Build::<Exact>::new(s).unwrap();
        let a = build_a(&b).unwrap();
        prop_assert!(column_mismatches(&a, &b).is_empty());
        let w = noncommutation_witness(&a, &b);
        prop_assert!(w.ta_e0.is_empty());
        prop_assert_eq!(w.at_e0, vec![(2, Exact::one())]);
    }

    #[test]
    fn a_is_refused_without_zero_constant_nets(s in schedule(false)) {
        prop_assert!(build_a(&Build::<Exact>::new(s).unwrap()).is_err());
    }

    #[test]
    fn exact_solve_hits_the_target(
        xi in 0usize..6,
        r_frac in 0.0f64..1.0,
        xs in prop::collection::vec(-8i32..=8, 6),
        ys in prop::collection::vec(-8i32..=8, 6),
    ) {
        let r = ((xi as f64 + 1.0) * r_frac) as usize;
        let r = r.min(xi);
        let mut x: Vec<(usize, Exact)> = (r..=xi).map(|i| (i, Exact::from_f64(xs[i - r] as f64 / 4.0))).collect();
        if x[0].1.is_zero() {
            x[0].1 = Exact::one();
        }
        let x: Vec<_> = x.into_iter().filter(|(_, v)| !v.is_zero()).collect();
        let y: Vec<(usize, Exact)> =
            (r..=xi).map(|i| (i, Exact::from_f64(ys[i - r] as f64))).filter(|(_, v)| !v.is_zero()).collect();
        let sys = ToeplitzSystem::new(xi, &x, &y).unwrap();
        let sol = solve_poly(&sys).unwrap();
        prop_assert!(sol.coeffs.len() <= xi - r + 1);
        let got = sys.apply(&sol.coeffs);
        prop_assert_eq!(got, sys.y.clone());
    }

    #[test]
    fn dense_and_power_norms_agree(entries in prop::collection::vec((0usize..12, 0usize..12, -4.0f64..4.0), 1..40)) {
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); 12];
        for (i, j, v) in entries {
            if v != 0.0 && !cols[j].iter().any(|(r, _)| *r == i) {
                cols[j].push((i, v));
            }
        }
        let mut m = SparseCols::<f64>::new(12);
        for mut c in cols {
            c.sort_by_key(|(i, _)| *i);
            m.push_column(c);
        }
        let dense = op_norm(&m, NormMethod::DenseSvd).unwrap().value;
        let power = op_norm(&m, NormMethod::power_default()).unwrap().value;
        let max_col = (0..12).map(|j| sparse_norm2(&m.col_vec(j))).fold(0.0, f64::max);
        prop_assert!(dense + 1e-12 >= max_col);
        prop_assert!((dense - power).abs() <= 1e-6 * dense.max(1.0), "{} vs {}", dense, power);
    }

    #[test]
    fn matrix_market_roundtrip(entries in prop::collection::vec((0usize..9, 0usize..7, -1e6f64..1e6), 0..30)) {
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); 7];
        for (i, j, v) in entries {
            if v != 0.0 && !cols[j].iter().any(|(r, _)| *r == i) {
                cols[j].push((i, v));
            }
        }
        let mut m = SparseCols::<f64>::new(9);
        for mut c in cols {
            c.sort_by_key(|(i, _)| *i);
            m.push_column(c);
        }
        let mut buf = Vec::new();
        write_matrix(&m, &mut buf).unwrap();
        prop_assert_eq!(read_matrix::<f64, _>(&buf[..]).unwrap(), m);
    }

    #[test]
    fn report_margins_and_ids(rows in prop::collection::vec((0u8..4, -10.0f64..10.0, -10.0f64..10.0, any::<bool>()), 0..20)) {
        let mut r = VerificationReport::default();
        for (id, bound, measured, gated) in &rows {
            r.push(Entry::upper(&format!("c{id}"), "", *bound, *measured, *gated));
        }
        r.finalize();
        let mut ids: Vec<&str> = r.entries.iter().map(|e| e.claim_id.as_str()).collect();
        let n = ids.len();
        ids.dedup();
        prop_assert_eq!(ids.len(), n);
        for e in &r.entries {
            prop_assert_eq!(e.margin, e.bound - e.measured);
            let expect = if e.bound.is_nan() || e.status == Status::Informational {
                e.status
            } else if e.measured <= e.bound { Status::Pass } else { Status::Fail };
            prop_assert_eq!(e.status, expect);
        }
        let before = r.clone();
        r.finalize();
        prop_assert_eq!(r, before);
    }

    #[test]
    fn sparse_sub_is_exact_difference(a in prop::collection::btree_map(0usize..50, -5i32..5, 0..20),
                                      b in prop::collection::btree_map(0usize..50, -5i32..5, 0..20)) {
        let av: Vec<(usize, f64)> = a.iter().filter(|(_, v)| **v != 0).map(|(i, v)| (*i, *v as f64)).collect();
        let bv: Vec<(usize, f64)> = b.iter().filter(|(_, v)| **v != 0).map(|(i, v)| (*i, *v as f64)).collect();
        let d = sparse_sub(&av, &bv);
        for i in 0..50 {
            let get = |v: &[(usize, f64)]| v.iter().find(|(j, _)| *j == i).map(|(_, x)| *x).unwrap_or(0.0);
            prop_assert_eq!(get(&d), get(&av) - get(&bv));
        }
        prop_assert!(d.iter().all(|(_, v)| *v != 0.0));
    }
}
